//! Maps between the coarse space V_H, the fine space V_h and subdomains.

use crate::assembly::GlobalOperators;
use crate::error::Result;
use crate::mesh::{MeshHierarchy, SubdomainLayout};
use crate::sparse::{Cholesky, CsrMatrix};
use crate::C64;

/// Prolongation, coarse–fine mass matrices and the quasi-interpolation
/// `I_H v = Σ_p (v, Φ_p)/(1, Φ_p) Φ_p`.
#[derive(Debug)]
pub struct TransferOperators {
    /// `P`: fine × coarse, column `p` holds Φ_p at the fine nodes.
    pub prolongation: CsrMatrix<f64>,
    /// `M_Hh = PᵀM`: coarse × fine, `M_Hh[p][q] = (φ_q, Φ_p)`.
    pub coarse_fine_mass: CsrMatrix<f64>,
    /// `(1, Φ_p)`.
    pub hat_mass: Vec<f64>,
    /// `M_H = PᵀMP`.
    pub coarse_mass: CsrMatrix<f64>,
    coarse_mass_factor: Cholesky,
}

impl TransferOperators {
    pub fn new(mesh: &MeshHierarchy, global: &GlobalOperators) -> Result<Self> {
        let prolongation = CsrMatrix::from_triplets(
            mesh.num_fine_nodes(),
            mesh.num_coarse_nodes(),
            &mesh.prolongation_weights(),
        );
        let pt = prolongation.transpose();
        let coarse_fine_mass = pt.matmul(&global.mass);
        let hat_mass = (0..coarse_fine_mass.nrows())
            .map(|p| coarse_fine_mass.row(p).1.iter().sum())
            .collect();
        let coarse_mass = coarse_fine_mass.matmul(&prolongation);
        let coarse_mass_factor = Cholesky::factor(&coarse_mass, "coarse mass matrix")?;
        Ok(Self {
            prolongation,
            coarse_fine_mass,
            hat_mass,
            coarse_mass,
            coarse_mass_factor,
        })
    }

    pub fn num_coarse(&self) -> usize {
        self.prolongation.ncols()
    }

    pub fn num_fine(&self) -> usize {
        self.prolongation.nrows()
    }

    /// Coarse coefficients of `I_H v`.
    pub fn quasi_interpolate(&self, v: &[C64]) -> Vec<C64> {
        let mut x = self.coarse_fine_mass.apply(v);
        for (xi, &d) in x.iter_mut().zip(&self.hat_mass) {
            *xi /= d;
        }
        x
    }

    /// `I_H` as a coarse × fine matrix.
    pub fn quasi_interpolation_matrix(&self) -> CsrMatrix<f64> {
        let t: Vec<_> = self
            .coarse_fine_mass
            .triplets()
            .map(|(p, q, v)| (p, q, v / self.hat_mass[p]))
            .collect();
        CsrMatrix::from_triplets(self.num_coarse(), self.num_fine(), &t)
    }

    /// Coarse coefficients of the L² projection `π_H v`.
    pub fn l2_project(&self, v: &[C64]) -> Vec<C64> {
        let mut x = self.coarse_fine_mass.apply(v);
        self.coarse_mass_factor.solve_in_place(&mut x);
        x
    }

    /// Fine coefficients of a coarse function.
    pub fn prolongate(&self, x: &[C64]) -> Vec<C64> {
        self.prolongation.apply(x)
    }
}

/// Values of a fine vector at the nodes of subdomain `l`.
pub fn restrict(layout: &SubdomainLayout, l: usize, v: &[C64]) -> Vec<C64> {
    layout.subdomains[l].nodes.iter().map(|&q| v[q]).collect()
}

/// `Π_h(χ_ℓ v)` for `v` given at the nodes of subdomain `l`, extended by zero.
pub fn pou_apply(layout: &SubdomainLayout, l: usize, v: &[C64], num_nodes: usize) -> Vec<C64> {
    let sd = &layout.subdomains[l];
    let mut out = vec![C64::new(0.0, 0.0); num_nodes];
    for ((&q, &w), &x) in sd.nodes.iter().zip(&sd.weights).zip(v) {
        out[q] = x * w;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::dot_h;
    use crate::harness::random_vector;
    use proptest::prelude::*;

    fn setup(n: usize, levels: usize) -> (MeshHierarchy, GlobalOperators, TransferOperators) {
        let mesh = MeshHierarchy::new(n, levels).unwrap();
        let ops = GlobalOperators::assemble(&mesh, 1.0);
        let t = TransferOperators::new(&mesh, &ops).unwrap();
        (mesh, ops, t)
    }

    fn close(a: &[C64], b: &[C64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).norm() <= tol)
    }

    #[test]
    fn constants_are_reproduced() {
        let (mesh, _, t) = setup(3, 2);
        let one = vec![C64::new(1.0, 0.0); mesh.num_fine_nodes()];
        let ones = vec![C64::new(1.0, 0.0); mesh.num_coarse_nodes()];
        assert!(close(&t.quasi_interpolate(&one), &ones, 1e-14));
        assert!(close(&t.l2_project(&one), &ones, 1e-13));
        let zero = vec![C64::new(0.0, 0.0); mesh.num_fine_nodes()];
        assert!(t.quasi_interpolate(&zero).iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn quasi_interpolation_matches_dense_hat_integrals() {
        let (mesh, ops, t) = setup(2, 1);
        let v = random_vector(mesh.num_fine_nodes(), 11);
        let m = ops.mass.to_dense();
        let got = t.quasi_interpolate(&v);
        for p in 0..mesh.num_coarse_nodes() {
            let phi: Vec<f64> = (0..mesh.num_fine_nodes())
                .map(|q| t.prolongation.get(q, p))
                .collect();
            let mut num = C64::new(0.0, 0.0);
            let mut den = 0.0;
            for i in 0..phi.len() {
                for j in 0..phi.len() {
                    num += v[i] * m[i][j] * phi[j];
                    den += m[i][j] * phi[j];
                }
            }
            assert!((got[p] - num / den).norm() <= 1e-13);
        }
    }

    #[test]
    fn projection_is_identity_on_coarse_space() {
        let (mesh, _, t) = setup(4, 2);
        let x = random_vector(mesh.num_coarse_nodes(), 3);
        assert!(close(&t.l2_project(&t.prolongate(&x)), &x, 1e-12));
    }

    #[test]
    fn quasi_interpolation_of_hats_is_weakly_diagonally_dominant() {
        let (mesh, _, t) = setup(4, 2);
        let ih = t.quasi_interpolation_matrix().matmul(&t.prolongation);
        for p in 0..mesh.num_coarse_nodes() {
            let (cols, vals) = ih.row(p);
            let diag = ih.get(p, p);
            let off: f64 = cols
                .iter()
                .zip(vals)
                .filter(|(c, _)| **c != p)
                .map(|(_, v)| v.abs())
                .sum();
            assert!(diag >= off - 1e-14, "row {p}: {diag} vs {off}");
        }
    }

    #[test]
    fn pou_apply_is_diagonal() {
        let mesh = MeshHierarchy::new(4, 1).unwrap();
        let layout = SubdomainLayout::from_size(&mesh, 0.5, 0.25).unwrap();
        let nn = mesh.num_fine_nodes();
        let l = 7;
        let sd = &layout.subdomains[l];
        let ones = vec![C64::new(1.0, 0.0); sd.nodes.len()];
        let w = pou_apply(&layout, l, &ones, nn);
        for (&q, &chi) in sd.nodes.iter().zip(&sd.weights) {
            assert_eq!(w[q], C64::new(chi, 0.0));
        }
        let q = sd.nodes[5];
        let mut e = vec![C64::new(0.0, 0.0); nn];
        e[q] = C64::new(1.0, 0.0);
        let out = pou_apply(&layout, l, &restrict(&layout, l, &e), nn);
        assert_eq!(out[q], C64::new(sd.weights[5], 0.0));
        assert_eq!(
            out.iter().filter(|v| v.norm() != 0.0).count(),
            usize::from(sd.weights[5] != 0.0)
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn pou_sum_reconstructs(seed in any::<u64>()) {
            let mesh = MeshHierarchy::new(4, 2).unwrap();
            let h = mesh.coarse_h();
            let layout = SubdomainLayout::from_size(&mesh, 4.0 * h, 2.0 * h).unwrap();
            let nn = mesh.num_fine_nodes();
            let v = random_vector(nn, seed);
            let mut sum = vec![C64::new(0.0, 0.0); nn];
            for l in 0..layout.len() {
                for (s, x) in sum.iter_mut().zip(pou_apply(&layout, l, &restrict(&layout, l, &v), nn)) {
                    *s += x;
                }
            }
            prop_assert!(close(&sum, &v, 1e-13));
        }

        #[test]
        fn projection_contracts_in_l2(seed in any::<u64>()) {
            let (_, ops, t) = setup(4, 2);
            let v = random_vector(t.num_fine(), seed);
            let x = t.l2_project(&v);
            let coarse = dot_h(&x, &t.coarse_mass.apply(&x)).re;
            let fine = dot_h(&v, &ops.mass.apply(&v)).re;
            prop_assert!(coarse <= fine * (1.0 + 1e-12));
        }

        #[test]
        fn kernels_of_interpolation_and_projection_agree(seed in any::<u64>()) {
            let (_, _, t) = setup(3, 2);
            let v = random_vector(t.num_fine(), seed);
            // remove the M_Hh-component: v − M_Hhᵀ (M_Hh M_Hhᵀ)⁻¹ M_Hh v
            let b = &t.coarse_fine_mass;
            let bbt = b.matmul(&b.transpose());
            let chol = Cholesky::factor(&bbt, "gram").unwrap();
            let mut y = b.apply(&v);
            chol.solve_in_place(&mut y);
            let corr = b.transpose().apply(&y);
            let w: Vec<C64> = v.iter().zip(&corr).map(|(a, c)| a - c).collect();
            let ih = t.quasi_interpolate(&w);
            let pi = t.l2_project(&w);
            let norm = |x: &[C64]| x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            prop_assert!(norm(&ih) <= 1e-12 && norm(&pi) <= 1e-12);
            prop_assert!(norm(&t.quasi_interpolate(&v)) > 1e-12);
            prop_assert!(norm(&t.l2_project(&v)) > 1e-12);
        }
    }
}
