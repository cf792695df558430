//! Left-preconditioned complex GMRES.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assembly::norm2;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;
use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Threshold on the new Arnoldi vector, relative to the norm before
/// orthogonalization, below which the Krylov space is taken as invariant.
pub const BREAKDOWN_TOL: f64 = 1e-14;

/// A square linear map on complex vectors.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;

    fn apply(&self, x: &[C64], y: &mut [C64]);
}

impl LinearOperator for CsrMatrix<C64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        self.mul_vec(x, y);
    }
}

/// The identity map of a given dimension.
#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        y.copy_from_slice(x);
    }
}

/// A linear map given by a closure.
pub struct FnOperator<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[C64], &mut [C64]) + Sync> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        (self.f)(x, y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmresConfig {
    /// Required reduction of the preconditioned residual.
    pub rel_tol: f64,
    pub max_iters: usize,
    /// Restart length; `None` runs full GMRES.
    pub restart: Option<usize>,
    pub record_history: bool,
    /// Second Gram–Schmidt pass in the Arnoldi process.
    pub reorthogonalize: bool,
}

impl Default for GmresConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            max_iters: 200,
            restart: None,
            record_history: true,
            reorthogonalize: false,
        }
    }
}

impl GmresConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rel_tol must lie in (0, 1), got {}",
                self.rel_tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if self.restart == Some(0) {
            return Err(Error::InvalidConfig(
                "restart length must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    /// The Krylov space became invariant before the tolerance was tested.
    pub breakdown: bool,
    /// Preconditioned residual norms relative to the initial one.
    pub history: Vec<f64>,
    pub final_residual: f64,
    /// `‖b − Ax‖ / ‖b‖`.
    pub true_residual: f64,
    pub setup_time_s: f64,
    pub solve_time_s: f64,
}

/// Complex Givens rotation `[c s; −s̄ c]` zeroing `b` against `a`.
fn givens(a: C64, b: C64) -> (f64, C64, C64) {
    let t = (a.norm_sqr() + b.norm_sqr()).sqrt();
    if t == 0.0 {
        return (1.0, ZERO, ZERO);
    }
    let phase = if a.norm() == 0.0 {
        C64::new(1.0, 0.0)
    } else {
        a / a.norm()
    };
    (a.norm() / t, phase * b.conj() / t, phase * t)
}

fn rotate(c: f64, s: C64, x: C64, y: C64) -> (C64, C64) {
    (x * c + s * y, -s.conj() * x + y * c)
}

/// Solves `M A x = M b` from a zero initial guess, stopping once the
/// preconditioned residual drops below `rel_tol` times `‖M b‖`.
pub fn gmres(
    a: &dyn LinearOperator,
    m: &dyn LinearOperator,
    b: &[C64],
    cfg: &GmresConfig,
) -> Result<(Vec<C64>, SolveReport)> {
    cfg.validate()?;
    let n = a.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    if m.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: m.dim(),
        });
    }
    let start = Instant::now();
    let restart = cfg.restart.unwrap_or(cfg.max_iters).min(cfg.max_iters);

    let mut x = vec![ZERO; n];
    let mut tmp = vec![ZERO; n];
    let mut report = SolveReport::default();
    let finish = |x: &[C64], mut report: SolveReport, tmp: &mut [C64]| {
        a.apply(x, tmp);
        let res: Vec<C64> = b.iter().zip(tmp.iter()).map(|(p, q)| p - q).collect();
        let bn = norm2(b);
        report.true_residual = if bn == 0.0 { 0.0 } else { norm2(&res) / bn };
        report.solve_time_s = start.elapsed().as_secs_f64();
        report
    };

    let mut r = vec![ZERO; n];
    m.apply(b, &mut r);
    let beta0 = norm2(&r);
    report.history.push(1.0);
    if beta0 == 0.0 {
        report.converged = true;
        report.final_residual = 0.0;
        {
            let report = finish(&x, report, &mut tmp);
            return Ok((x, report));
        }
    }
    let target = cfg.rel_tol * beta0;
    let mut beta = beta0;

    loop {
        let mut basis: Vec<Vec<C64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut hess: Vec<Vec<C64>> = Vec::new();
        let mut rot: Vec<(f64, C64)> = Vec::new();
        let mut g = vec![C64::new(beta, 0.0)];
        let mut done = false;
        let mut invariant = false;

        for _ in 0..restart {
            let j = basis.len() - 1;
            a.apply(&basis[j], &mut tmp);
            let mut w = vec![ZERO; n];
            m.apply(&tmp, &mut w);
            let w_norm = norm2(&w);
            let mut col = vec![ZERO; j + 2];
            let passes = if cfg.reorthogonalize { 2 } else { 1 };
            for _ in 0..passes {
                for (i, v) in basis.iter().enumerate() {
                    let hij: C64 = v.iter().zip(&w).map(|(p, q)| p.conj() * q).sum();
                    for (wk, vk) in w.iter_mut().zip(v) {
                        *wk -= hij * vk;
                    }
                    col[i] += hij;
                }
            }
            let h_next = norm2(&w);
            col[j + 1] = C64::new(h_next, 0.0);
            for (i, &(c, s)) in rot.iter().enumerate() {
                let (p, q) = rotate(c, s, col[i], col[i + 1]);
                col[i] = p;
                col[i + 1] = q;
            }
            let (c, s, rr) = givens(col[j], col[j + 1]);
            col[j] = rr;
            col[j + 1] = ZERO;
            rot.push((c, s));
            let (gj, gj1) = rotate(c, s, g[j], ZERO);
            g[j] = gj;
            g.push(gj1);
            hess.push(col);
            report.iterations += 1;

            let res = gj1.norm();
            if cfg.record_history {
                report.history.push(res / beta0);
            }
            report.final_residual = res / beta0;
            if res <= target {
                done = true;
                break;
            }
            if h_next <= BREAKDOWN_TOL * w_norm.max(f64::MIN_POSITIVE) {
                invariant = true;
                break;
            }
            if report.iterations >= cfg.max_iters {
                break;
            }
            basis.push(w.into_iter().map(|v| v / h_next).collect());
        }

        let k = hess.len();
        let mut y = vec![ZERO; k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for l in i + 1..k {
                acc -= hess[l][i] * y[l];
            }
            y[i] = acc / hess[i][i];
        }
        for (v, yi) in basis.iter().zip(&y) {
            for (xk, vk) in x.iter_mut().zip(v) {
                *xk += yi * vk;
            }
        }

        if done {
            report.converged = true;
            {
                let report = finish(&x, report, &mut tmp);
                return Ok((x, report));
            }
        }
        if invariant {
            report.breakdown = true;
            let report = finish(&x, report, &mut tmp);
            return Err(Error::Breakdown {
                iteration: report.iterations,
                residual: report.final_residual,
            });
        }
        if report.iterations >= cfg.max_iters {
            let report = finish(&x, report, &mut tmp);
            return Err(Error::NotConverged {
                report: Box::new(report),
            });
        }

        a.apply(&x, &mut tmp);
        let res: Vec<C64> = b.iter().zip(&tmp).map(|(p, q)| p - q).collect();
        m.apply(&res, &mut r);
        beta = norm2(&r);
        if beta <= target {
            report.converged = true;
            report.final_residual = beta / beta0;
            {
                let report = finish(&x, report, &mut tmp);
                return Ok((x, report));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::random_vector;
    use faer::Mat;
    use proptest::prelude::*;

    fn dense_system(n: usize, seed: u64) -> CsrMatrix<C64> {
        let v = random_vector(n * n, seed);
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let d = if i == j { C64::new(4.0, 1.0) } else { ZERO };
                t.push((i, j, v[i * n + j] * 0.5 + d));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn identity_converges_in_one_step() {
        let b = random_vector(7, 1);
        let (x, rep) = gmres(&Identity(7), &Identity(7), &b, &GmresConfig::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        assert_eq!(rep.history.len(), 2);
        assert!(x.iter().zip(&b).all(|(p, q)| (p - q).norm() < 1e-14));
    }

    #[test]
    fn small_system_matches_direct_solve() {
        let a = dense_system(5, 2);
        let b = random_vector(5, 3);
        let cfg = GmresConfig {
            rel_tol: 1e-12,
            ..Default::default()
        };
        let (x, rep) = gmres(&a, &Identity(5), &b, &cfg).unwrap();
        assert!(rep.iterations <= 5);
        let dense = a.to_dense();
        let lu = Mat::<C64>::from_fn(5, 5, |i, j| dense[i][j]).partial_piv_lu();
        let rhs = Mat::<C64>::from_fn(5, 1, |i, _| b[i]);
        let exact = faer::linalg::solvers::Solve::solve(&lu, &rhs);
        for i in 0..5 {
            assert!((x[i] - exact[(i, 0)]).norm() <= 1e-8);
        }
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let a = dense_system(4, 4);
        let (x, rep) = gmres(&a, &Identity(4), &[ZERO; 4], &GmresConfig::default()).unwrap();
        assert!(x.iter().all(|v| *v == ZERO));
        assert_eq!(rep.iterations, 0);
        assert!(rep.converged);
    }

    #[test]
    fn non_convergence_carries_report() {
        let a = dense_system(30, 5);
        let b = random_vector(30, 6);
        let cfg = GmresConfig {
            max_iters: 3,
            ..Default::default()
        };
        match gmres(&a, &Identity(30), &b, &cfg) {
            Err(Error::NotConverged { report }) => {
                assert_eq!(report.iterations, 3);
                assert_eq!(report.history.len(), 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn restarted_run_still_converges() {
        let a = dense_system(20, 7);
        let b = random_vector(20, 8);
        let cfg = GmresConfig {
            restart: Some(4),
            rel_tol: 1e-10,
            max_iters: 500,
            ..Default::default()
        };
        let (_, rep) = gmres(&a, &Identity(20), &b, &cfg).unwrap();
        assert!(rep.true_residual < 1e-9);
    }

    #[test]
    fn rejects_bad_config() {
        let bad = GmresConfig {
            rel_tol: 1.5,
            ..Default::default()
        };
        assert!(gmres(&Identity(2), &Identity(2), &[ZERO; 2], &bad).is_err());
        assert!(gmres(
            &Identity(2),
            &Identity(3),
            &[ZERO; 2],
            &GmresConfig::default()
        )
        .is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn residual_history_is_monotone(seed in any::<u64>(), n in 3usize..25) {
            let a = dense_system(n, seed);
            let b = random_vector(n, seed ^ 0xabcdef);
            let prec = dense_system(n, seed.wrapping_add(1));
            let cfg = GmresConfig { rel_tol: 1e-10, ..Default::default() };
            let (_, rep) = gmres(&a, &prec, &b, &cfg).unwrap();
            prop_assert_eq!(rep.history.len(), rep.iterations + 1);
            prop_assert!(rep.history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
            prop_assert!(rep.iterations <= n);
        }
    }
}
