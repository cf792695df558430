//! Two-level hybrid Schwarz preconditioners
//!
//! ```text
//! Q = Q₀ + (I − Q₀)ᵀ Σ_ℓ Q_ℓ (I − Q₀)
//! ```
//!
//! where `Q₀` is the Petrov–Galerkin coarse solver, `Q_ℓ` the local solver of
//! subdomain `ℓ` and `(·)ᵀ` the adjoint in the energy inner product
//! `(x, y)_G = yᴴGx`. Writing `Q₀ = P₀A` and `Q_ℓ = L_ℓA`, the preconditioner
//! is applied to residuals as
//!
//! ```text
//! B⁻¹r = P₀r + (I − Q₀)ᵀ Σ_ℓ L_ℓ (r − A P₀r),
//! ```
//!
//! so that `B⁻¹A = Q`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{GlobalOperators, LocalOperators, LocalProblem};
use crate::error::{Error, Result};
use crate::krylov::LinearOperator;
use crate::lod::CoarseSpace;
use crate::mesh::SubdomainLayout;
use crate::sparse::Cholesky;
use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Local component of a preconditioner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocalKind {
    /// `Q⁽¹⁾`: local problems with zero trace on ∂Ω_ℓ∖Γ.
    Dirichlet,
    /// `Q⁽²⁾`: impedance local problems glued with the partition of unity.
    Impedance,
    /// No local solves.
    None,
}

impl LocalKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::Dirichlet => "dirichlet",
            Self::Impedance => "impedance",
            Self::None => "none",
        }
    }

    pub fn problem(self) -> Option<LocalProblem> {
        match self {
            Self::Dirichlet => Some(LocalProblem::Dirichlet),
            Self::Impedance => Some(LocalProblem::Impedance),
            Self::None => None,
        }
    }
}

impl std::str::FromStr for LocalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dirichlet" | "q1" => Ok(Self::Dirichlet),
            "impedance" | "q2" => Ok(Self::Impedance),
            "none" => Ok(Self::None),
            _ => Err(Error::Parse(format!("unknown local solver kind `{s}`"))),
        }
    }
}

/// Coarse component of a preconditioner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoarseKind {
    Lod,
    P1,
    None,
}

impl CoarseKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::Lod => "lod",
            Self::P1 => "p1",
            Self::None => "none",
        }
    }
}

impl std::str::FromStr for CoarseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lod" => Ok(Self::Lod),
            "p1" => Ok(Self::P1),
            "none" => Ok(Self::None),
            _ => Err(Error::Parse(format!("unknown coarse space kind `{s}`"))),
        }
    }
}

/// Subdomain layout plus matching factorized local problems.
#[derive(Debug, Clone)]
pub struct LocalSolvers {
    pub layout: Arc<SubdomainLayout>,
    pub operators: Arc<LocalOperators>,
}

impl LocalSolvers {
    pub fn new(
        layout: Arc<SubdomainLayout>,
        global: &GlobalOperators,
        problem: LocalProblem,
    ) -> Result<Self> {
        let operators = Arc::new(LocalOperators::assemble(&layout, global, problem)?);
        Ok(Self { layout, operators })
    }

    pub fn problem(&self) -> LocalProblem {
        self.operators.problem
    }

    /// `L_ℓ r` accumulated into `out`.
    pub fn add_local(&self, l: usize, r: &[C64], out: &mut [C64]) {
        let sd = &self.layout.subdomains[l];
        let lu = self.operators.factor(l);
        match self.operators.problem {
            LocalProblem::Dirichlet => {
                let mut x: Vec<C64> = sd.interior.iter().map(|&q| r[q]).collect();
                lu.solve_in_place(&mut x);
                for (&q, v) in sd.interior.iter().zip(x) {
                    out[q] += v;
                }
            }
            LocalProblem::Impedance => {
                let mut x: Vec<C64> = sd
                    .nodes
                    .iter()
                    .zip(&sd.weights)
                    .map(|(&q, &w)| r[q] * w)
                    .collect();
                lu.solve_in_place(&mut x);
                for ((&q, &w), v) in sd.nodes.iter().zip(&sd.weights).zip(x) {
                    out[q] += v * w;
                }
            }
        }
    }

    /// `L_ℓ r` as a fine vector.
    pub fn apply_local(&self, l: usize, r: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; r.len()];
        self.add_local(l, r, &mut out);
        out
    }

    /// `Σ_ℓ L_ℓ r`.
    pub fn apply_sum(&self, r: &[C64]) -> Vec<C64> {
        let n = r.len();
        (0..self.layout.len())
            .into_par_iter()
            .fold(
                || vec![ZERO; n],
                |mut acc, l| {
                    self.add_local(l, r, &mut acc);
                    acc
                },
            )
            .reduce(
                || vec![ZERO; n],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                    a
                },
            )
    }
}

/// `L_ℓ r` for the Dirichlet local solver: restrict to the interior dofs of
/// Ω_ℓ, solve with `A_ℓ`, extend by zero.
pub fn apply_local_dirichlet(local: &LocalSolvers, l: usize, r: &[C64]) -> Vec<C64> {
    assert_eq!(local.problem(), LocalProblem::Dirichlet);
    local.apply_local(l, r)
}

/// `W_ℓ C_ℓ⁻¹ W_ℓᴴ r` with `W_ℓ` the χ_ℓ-weighted extension.
pub fn apply_local_impedance(local: &LocalSolvers, l: usize, r: &[C64]) -> Vec<C64> {
    assert_eq!(local.problem(), LocalProblem::Impedance);
    local.apply_local(l, r)
}

/// A fixed linear map `r ↦ B⁻¹r` built from a coarse space and local solvers.
#[derive(Clone)]
pub struct Preconditioner {
    global: Arc<GlobalOperators>,
    coarse: Option<Arc<CoarseSpace>>,
    local: Option<LocalSolvers>,
    gram: Option<Arc<Cholesky>>,
}

impl std::fmt::Debug for Preconditioner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Preconditioner")
            .field("local", &self.local_kind())
            .field("coarse", &self.coarse.as_ref().map(|c| c.basis))
            .finish()
    }
}

impl Preconditioner {
    /// Hybrid preconditioner; either component may be absent. The factorized
    /// energy Gram matrix is computed here if a coarse space is given without
    /// it.
    pub fn new(
        global: Arc<GlobalOperators>,
        coarse: Option<Arc<CoarseSpace>>,
        local: Option<LocalSolvers>,
        gram: Option<Arc<Cholesky>>,
    ) -> Result<Self> {
        let n = global.dim();
        if let Some(c) = &coarse {
            if c.fine_dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: c.fine_dim(),
                });
            }
        }
        if let Some(l) = &local {
            if let Some(bad) = l
                .layout
                .subdomains
                .iter()
                .flat_map(|s| &s.nodes)
                .find(|&&q| q >= n)
            {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: bad + 1,
                });
            }
        }
        let gram = match (&coarse, gram) {
            (Some(_), None) => Some(Arc::new(Cholesky::factor(&global.g, "energy Gram matrix")?)),
            (_, g) => g,
        };
        Ok(Self {
            global,
            coarse,
            local,
            gram,
        })
    }

    pub fn local_kind(&self) -> LocalKind {
        match self.local.as_ref().map(|l| l.problem()) {
            Some(LocalProblem::Dirichlet) => LocalKind::Dirichlet,
            Some(LocalProblem::Impedance) => LocalKind::Impedance,
            None => LocalKind::None,
        }
    }

    pub fn coarse(&self) -> Option<&CoarseSpace> {
        self.coarse.as_deref()
    }

    pub fn local(&self) -> Option<&LocalSolvers> {
        self.local.as_ref()
    }

    pub fn global(&self) -> &GlobalOperators {
        &self.global
    }

    /// `P₀r`, zero without a coarse space.
    pub fn coarse_part(&self, r: &[C64]) -> Vec<C64> {
        match &self.coarse {
            Some(c) => c.apply_coarse(r),
            None => vec![ZERO; r.len()],
        }
    }

    /// `A v`.
    fn apply_a(&self, v: &[C64]) -> Vec<C64> {
        self.global.a.apply(v)
    }

    /// `Aᴴ v`, using `Aᴴ = conj(A)`.
    fn apply_a_adjoint(&self, v: &[C64]) -> Vec<C64> {
        let c: Vec<C64> = v.iter().map(|x| x.conj()).collect();
        self.global
            .a
            .apply(&c)
            .into_iter()
            .map(|x| x.conj())
            .collect()
    }

    /// `(I − Q₀)ᵀ r = r − G⁻¹Aᴴ · test · A_c⁻ᴴ · trialᴴ · G r`; the identity
    /// without a coarse space.
    pub fn energy_adjoint_projector(&self, r: &[C64]) -> Vec<C64> {
        let (Some(coarse), Some(gram)) = (&self.coarse, &self.gram) else {
            return r.to_vec();
        };
        let gr = self.global.g.apply(r);
        let y = coarse.apply_coarse_adjoint(&gr);
        let mut z = self.apply_a_adjoint(&y);
        gram.solve_in_place(&mut z);
        r.iter().zip(z).map(|(a, b)| a - b).collect()
    }

    /// `Q₀ v = P₀ A v`.
    pub fn coarse_projector(&self, v: &[C64]) -> Vec<C64> {
        self.coarse_part(&self.apply_a(v))
    }

    /// `B⁻¹r` in residual form.
    pub fn apply_to(&self, r: &[C64]) -> Vec<C64> {
        let Some(local) = &self.local else {
            return self.coarse_part(r);
        };
        if self.coarse.is_none() {
            return local.apply_sum(r);
        }
        let p0 = self.coarse_part(r);
        let ap0 = self.apply_a(&p0);
        let s: Vec<C64> = r.iter().zip(&ap0).map(|(a, b)| a - b).collect();
        let z = local.apply_sum(&s);
        let t = self.energy_adjoint_projector(&z);
        p0.into_iter().zip(t).map(|(a, b)| a + b).collect()
    }

    /// `Q v` evaluated from its operator definition
    /// `Q₀v + (I − Q₀)ᵀ Σ_ℓ Q_ℓ (I − Q₀) v`, with `Q_ℓ u = L_ℓ A u`.
    pub fn apply_composed(&self, v: &[C64]) -> Vec<C64> {
        let q0v = self.coarse_projector(v);
        let Some(local) = &self.local else {
            return q0v;
        };
        let w: Vec<C64> = v.iter().zip(&q0v).map(|(a, b)| a - b).collect();
        let aw = self.apply_a(&w);
        let mut sum = vec![ZERO; v.len()];
        for l in 0..local.layout.len() {
            let ql = local.apply_local(l, &aw);
            for (s, x) in sum.iter_mut().zip(ql) {
                *s += x;
            }
        }
        let t = self.energy_adjoint_projector(&sum);
        q0v.into_iter().zip(t).map(|(a, b)| a + b).collect()
    }
}

impl LinearOperator for Preconditioner {
    fn dim(&self) -> usize {
        self.global.dim()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        y.copy_from_slice(&self.apply_to(x));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::random_vector;
    use crate::mesh::MeshHierarchy;
    use crate::transfer::TransferOperators;

    struct Setup {
        mesh: MeshHierarchy,
        global: Arc<GlobalOperators>,
        coarse: Arc<CoarseSpace>,
    }

    fn setup(kappa: f64) -> Setup {
        let mesh = MeshHierarchy::new(4, 2).unwrap();
        let global = Arc::new(GlobalOperators::assemble(&mesh, kappa));
        let transfer = TransferOperators::new(&mesh, &global).unwrap();
        let coarse = Arc::new(CoarseSpace::lod(&mesh, &global, &transfer, 2).unwrap());
        Setup {
            mesh,
            global,
            coarse,
        }
    }

    fn locals(s: &Setup, problem: LocalProblem, size: f64, delta: f64) -> LocalSolvers {
        let layout = Arc::new(SubdomainLayout::from_size(&s.mesh, size, delta).unwrap());
        LocalSolvers::new(layout, &s.global, problem).unwrap()
    }

    fn rel(a: &[C64], b: &[C64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
        let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
        (num / den.max(1e-300)).sqrt()
    }

    #[test]
    fn dirichlet_local_solve_is_galerkin() {
        let s = setup(5.0);
        let loc = locals(&s, LocalProblem::Dirichlet, 0.5, 0.25);
        let v = random_vector(s.global.dim(), 1);
        let r = s.global.a.apply(&v);
        for l in [0, 4, 12] {
            let x = apply_local_dirichlet(&loc, l, &r);
            let ax = s.global.a.apply(&x);
            for &q in &loc.layout.subdomains[l].interior {
                assert!((ax[q] - r[q]).norm() <= 1e-11 * r[q].norm().max(1.0));
            }
        }
        let mut outside = vec![ZERO; s.global.dim()];
        let sd = &loc.layout.subdomains[6];
        for q in 0..outside.len() {
            if sd.interior.binary_search(&q).is_err() {
                outside[q] = C64::new(1.0, q as f64);
            }
        }
        assert!(apply_local_dirichlet(&loc, 6, &outside)
            .iter()
            .all(|v| *v == ZERO));
    }

    #[test]
    fn whole_domain_dirichlet_solver_is_identity() {
        let s = setup(4.0);
        let layout = Arc::new(SubdomainLayout::whole_domain(&s.mesh));
        let loc = LocalSolvers::new(layout, &s.global, LocalProblem::Dirichlet).unwrap();
        let v = random_vector(s.global.dim(), 2);
        let q = apply_local_dirichlet(&loc, 0, &s.global.a.apply(&v));
        assert!(rel(&q, &v) < 1e-10);
    }

    #[test]
    fn impedance_local_map_is_complex_symmetric() {
        let s = setup(6.0);
        let loc = locals(&s, LocalProblem::Impedance, 0.5, 0.25);
        let n = s.global.dim();
        let x = random_vector(n, 3);
        let y = random_vector(n, 4);
        for l in [0, 7, 24] {
            let mx = apply_local_impedance(&loc, l, &x);
            let my = apply_local_impedance(&loc, l, &y);
            let a: C64 = x.iter().zip(&my).map(|(p, q)| p * q).sum();
            let b: C64 = y.iter().zip(&mx).map(|(p, q)| p * q).sum();
            assert!((a - b).norm() <= 1e-11 * a.norm());
        }
        assert!(apply_local_impedance(&loc, 3, &vec![ZERO; n])
            .iter()
            .all(|v| *v == ZERO));
    }

    #[test]
    fn energy_adjoint_identity_and_idempotency() {
        let s = setup(6.0);
        let loc = locals(&s, LocalProblem::Dirichlet, 0.5, 0.25);
        let pc =
            Preconditioner::new(s.global.clone(), Some(s.coarse.clone()), Some(loc), None).unwrap();
        let n = s.global.dim();
        let u = random_vector(n, 5);
        let v = random_vector(n, 6);
        let pu = pc.energy_adjoint_projector(&u);
        let q0v = pc.coarse_projector(&v);
        let iq0v: Vec<C64> = v.iter().zip(&q0v).map(|(a, b)| a - b).collect();
        let lhs = s.global.energy_inner(&pu, &v);
        let rhs = s.global.energy_inner(&u, &iq0v);
        assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(1.0));

        let ppu = pc.energy_adjoint_projector(&pu);
        assert!(rel(&ppu, &pu) < 1e-9);

        let none = Preconditioner::new(s.global.clone(), None, None, None).unwrap();
        assert_eq!(none.energy_adjoint_projector(&u), u);
    }

    #[test]
    fn residual_form_matches_operator_definition() {
        let s = setup(7.0);
        for (problem, size, delta) in [
            (LocalProblem::Dirichlet, 0.5, 0.25),
            (LocalProblem::Impedance, 1.0, 0.5),
        ] {
            let loc = locals(&s, problem, size, delta);
            let pc = Preconditioner::new(s.global.clone(), Some(s.coarse.clone()), Some(loc), None)
                .unwrap();
            let v = random_vector(s.global.dim(), 8);
            let a = pc.apply_to(&s.global.a.apply(&v));
            let b = pc.apply_composed(&v);
            assert!(rel(&a, &b) < 1e-10, "{problem:?}");
        }
    }

    #[test]
    fn coarse_only_reproduces_trial_functions_and_is_linear() {
        let s = setup(5.0);
        let pc = Preconditioner::new(s.global.clone(), Some(s.coarse.clone()), None, None).unwrap();
        assert_eq!(pc.local_kind(), LocalKind::None);
        let x = random_vector(s.coarse.coarse_dim(), 9);
        let v = s.coarse.expand_trial(&x);
        assert!(rel(&pc.apply_to(&s.global.a.apply(&v)), &v) < 1e-10);

        let loc = locals(&s, LocalProblem::Impedance, 0.5, 0.25);
        let pc =
            Preconditioner::new(s.global.clone(), Some(s.coarse.clone()), Some(loc), None).unwrap();
        let r1 = random_vector(s.global.dim(), 10);
        let r2 = random_vector(s.global.dim(), 11);
        let alpha = C64::new(0.3, -1.7);
        let comb: Vec<C64> = r1.iter().zip(&r2).map(|(a, b)| alpha * a + b).collect();
        let lhs = pc.apply_to(&comb);
        let rhs: Vec<C64> = pc
            .apply_to(&r1)
            .iter()
            .zip(pc.apply_to(&r2))
            .map(|(a, b)| alpha * a + b)
            .collect();
        assert!(rel(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn one_level_is_plain_local_sum() {
        let s = setup(5.0);
        let loc = locals(&s, LocalProblem::Dirichlet, 0.5, 0.25);
        let pc = Preconditioner::new(s.global.clone(), None, Some(loc.clone()), None).unwrap();
        let r = random_vector(s.global.dim(), 12);
        let mut expected = vec![ZERO; r.len()];
        for l in 0..loc.layout.len() {
            loc.add_local(l, &r, &mut expected);
        }
        assert!(rel(&pc.apply_to(&r), &expected) < 1e-14);
    }
}
