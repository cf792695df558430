//! Dense reference computations on small meshes.
//!
//! Everything here is assembled independently of the sparse code paths:
//! element matrices come from barycentric gradients and midpoint
//! quadrature, the coarse hats are evaluated by point location, and the
//! fine-scale space `W_h = ker M_Hh` is spanned explicitly through an SVD.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::Mat;

use crate::error::{Error, Result};
use crate::mesh::MeshHierarchy;
use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Relative singular-value threshold for the numerical rank of `M_Hh`.
pub const NULL_SPACE_TOL: f64 = 1e-10;

pub struct DenseReference {
    pub kappa: f64,
    pub a: Mat<C64>,
    pub g: Mat<f64>,
    pub prolongation: Mat<f64>,
    pub coarse_fine_mass: Mat<f64>,
    a_lu: PartialPivLu<C64>,
}

/// Explicit basis of the fine-scale space `W_h = ker M_Hh` and the
/// Galerkin matrix of `a` on it.
pub struct FineScale<'a> {
    dense: &'a DenseReference,
    /// Orthonormal columns spanning `ker M_Hh`.
    pub kernel: Mat<f64>,
    /// LU of `Wᵀ A W`.
    reduced_lu: PartialPivLu<C64>,
}

fn element_matrices(v: [[f64; 2]; 3]) -> ([[f64; 3]; 3], [[f64; 3]; 3]) {
    let j = [
        [v[1][0] - v[0][0], v[2][0] - v[0][0]],
        [v[1][1] - v[0][1], v[2][1] - v[0][1]],
    ];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let area = 0.5 * det.abs();
    // rows of J⁻¹ are the gradients of λ1 and λ2
    let g1 = [j[1][1] / det, -j[0][1] / det];
    let g2 = [-j[1][0] / det, j[0][0] / det];
    let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
    let grads = [g0, g1, g2];
    let mut k = [[0.0; 3]; 3];
    let mut m = [[0.0; 3]; 3];
    // edge midpoints: λ values are (½, ½, 0) and permutations
    let mids = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = area * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]);
            m[a][b] = area / 3.0 * mids.iter().map(|l| l[a] * l[b]).sum::<f64>();
        }
    }
    (k, m)
}

fn barycentric(p: [f64; 2], v: [[f64; 2]; 3]) -> [f64; 3] {
    let det = (v[1][1] - v[2][1]) * (v[0][0] - v[2][0]) + (v[2][0] - v[1][0]) * (v[0][1] - v[2][1]);
    let l0 =
        ((v[1][1] - v[2][1]) * (p[0] - v[2][0]) + (v[2][0] - v[1][0]) * (p[1] - v[2][1])) / det;
    let l1 =
        ((v[2][1] - v[0][1]) * (p[0] - v[2][0]) + (v[0][0] - v[2][0]) * (p[1] - v[2][1])) / det;
    [l0, l1, 1.0 - l0 - l1]
}

fn real_to_complex(m: &Mat<f64>) -> Mat<C64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| C64::new(m[(i, j)], 0.0))
}

impl DenseReference {
    pub fn new(mesh: &MeshHierarchy, kappa: f64) -> Result<Self> {
        let fine = &mesh.fine;
        let nf = fine.num_nodes();
        if nf > 5000 {
            return Err(Error::InvalidMesh(format!(
                "{nf} fine nodes is too many for a dense reference"
            )));
        }
        let mut s = Mat::<f64>::zeros(nf, nf);
        let mut m = Mat::<f64>::zeros(nf, nf);
        for ids in &fine.elements {
            let (k, me) = element_matrices(ids.map(|i| fine.nodes[i]));
            for a in 0..3 {
                for b in 0..3 {
                    s[(ids[a], ids[b])] += k[a][b];
                    m[(ids[a], ids[b])] += me[a][b];
                }
            }
        }

        // boundary edges found from coordinates, two-point Gauss on each
        let mut nb = Mat::<f64>::zeros(nf, nf);
        let n = fine.n;
        let on_side = |ix: usize, iy: usize, d: (usize, usize)| -> bool {
            let (jx, jy) = (ix + d.0, iy + d.1);
            jx <= n
                && jy <= n
                && ((d.0 == 1 && (iy == 0 || iy == n)) || (d.1 == 1 && (ix == 0 || ix == n)))
        };
        let gauss = [0.5 - 0.5 / 3f64.sqrt(), 0.5 + 0.5 / 3f64.sqrt()];
        for iy in 0..=n {
            for ix in 0..=n {
                for d in [(1, 0), (0, 1)] {
                    if !on_side(ix, iy, d) {
                        continue;
                    }
                    let p = fine.node_id(ix, iy);
                    let q = fine.node_id(ix + d.0, iy + d.1);
                    let len = 1.0 / n as f64;
                    for &t in &gauss {
                        let phi = [1.0 - t, t];
                        let ids = [p, q];
                        for a in 0..2 {
                            for b in 0..2 {
                                nb[(ids[a], ids[b])] += 0.5 * len * phi[a] * phi[b];
                            }
                        }
                    }
                }
            }
        }

        let k2 = kappa * kappa;
        let a = Mat::<C64>::from_fn(nf, nf, |i, j| {
            C64::new(s[(i, j)] - k2 * m[(i, j)], -kappa * nb[(i, j)])
        });
        let g = Mat::<f64>::from_fn(nf, nf, |i, j| s[(i, j)] + k2 * m[(i, j)]);

        let coarse = &mesh.coarse;
        let nc = coarse.num_nodes();
        let mut prolongation = Mat::<f64>::zeros(nf, nc);
        for q in 0..nf {
            let x = fine.nodes[q];
            let found = coarse.elements.iter().find_map(|ids| {
                let l = barycentric(x, ids.map(|i| coarse.nodes[i]));
                l.iter().all(|&v| v >= -1e-12).then_some((*ids, l))
            });
            let (ids, l) = found.ok_or_else(|| {
                Error::InvalidMesh(format!("fine node {q} outside the coarse mesh"))
            })?;
            for k in 0..3 {
                let v = l[k].clamp(0.0, 1.0);
                prolongation[(q, ids[k])] = if v < 1e-13 {
                    0.0
                } else if v > 1.0 - 1e-13 {
                    1.0
                } else {
                    v
                };
            }
        }
        let coarse_fine_mass = prolongation.transpose() * &m;

        let a_lu = a.partial_piv_lu();
        let this = Self {
            kappa,
            a,
            g,
            prolongation,
            coarse_fine_mass,
            a_lu,
        };
        this.check_solvable()?;
        Ok(this)
    }

    fn check_solvable(&self) -> Result<()> {
        let n = self.a.nrows();
        let x: Vec<C64> = (0..n)
            .map(|i| C64::new(1.0 + (i as f64).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let b = self.apply_a(&x);
        let y = self.direct_solve(&b);
        let err = rel_err(&y, &x);
        if !(err < 1e-6) {
            return Err(Error::Singular {
                what: "dense Helmholtz matrix",
                id: 0,
                detail: format!("probe error {err:.3e}"),
            });
        }
        Ok(())
    }

    pub fn num_fine(&self) -> usize {
        self.a.nrows()
    }

    pub fn num_coarse(&self) -> usize {
        self.prolongation.ncols()
    }

    pub fn apply_a(&self, x: &[C64]) -> Vec<C64> {
        let n = self.num_fine();
        (0..n)
            .map(|i| (0..n).map(|j| self.a[(i, j)] * x[j]).sum())
            .collect()
    }

    pub fn energy_norm(&self, x: &[C64]) -> f64 {
        let n = self.num_fine();
        let mut acc = 0.0;
        for i in 0..n {
            let gx: C64 = (0..n).map(|j| x[j] * self.g[(i, j)]).sum();
            acc += (x[i].conj() * gx).re;
        }
        acc.max(0.0).sqrt()
    }

    pub fn prolongate(&self, x: &[C64]) -> Vec<C64> {
        let (nf, nc) = (self.num_fine(), self.num_coarse());
        (0..nf)
            .map(|i| (0..nc).map(|p| x[p] * self.prolongation[(i, p)]).sum())
            .collect()
    }

    /// `M_Hh v`.
    pub fn constraint(&self, v: &[C64]) -> Vec<C64> {
        let (nf, nc) = (self.num_fine(), self.num_coarse());
        (0..nc)
            .map(|p| (0..nf).map(|i| v[i] * self.coarse_fine_mass[(p, i)]).sum())
            .collect()
    }

    /// `A⁻¹ b` by dense LU.
    pub fn direct_solve(&self, b: &[C64]) -> Vec<C64> {
        let rhs = Mat::<C64>::from_fn(b.len(), 1, |i, _| b[i]);
        let x = self.a_lu.solve(&rhs);
        (0..b.len()).map(|i| x[(i, 0)]).collect()
    }

    /// Builds `W_h` from an SVD of `M_Hh`.
    pub fn fine_scale(&self) -> Result<FineScale<'_>> {
        let nf = self.num_fine();
        let svd = self.coarse_fine_mass.svd().map_err(|e| Error::Singular {
            what: "dense constraint matrix",
            id: 0,
            detail: format!("{e:?}"),
        })?;
        let sv = svd.S().column_vector();
        let smax = (0..sv.nrows()).map(|i| sv[i]).fold(0.0, f64::max);
        let rank = (0..sv.nrows())
            .filter(|&i| sv[i] > NULL_SPACE_TOL * smax)
            .count();
        let v = svd.V();
        let kernel = Mat::<f64>::from_fn(nf, nf - rank, |i, j| v[(i, rank + j)]);
        let wc = real_to_complex(&kernel);
        let reduced = wc.transpose() * &self.a * &wc;
        let reduced_lu = reduced.partial_piv_lu();
        Ok(FineScale {
            dense: self,
            kernel,
            reduced_lu,
        })
    }
}

impl FineScale<'_> {
    pub fn kernel_dim(&self) -> usize {
        self.kernel.ncols()
    }

    /// `𝒞_∞ (P v_H)`: the `W_h`-Galerkin solution of
    /// `a(𝒞_∞v, w) = a(v, w)` for all `w ∈ W_h`.
    pub fn global_corrector(&self, v_h: &[C64]) -> Vec<C64> {
        let v = self.dense.prolongate(v_h);
        self.corrector_of(&v)
    }

    /// `𝒞_∞ v` for a fine vector `v`.
    pub fn corrector_of(&self, v: &[C64]) -> Vec<C64> {
        let (nf, kd) = (self.dense.num_fine(), self.kernel_dim());
        let av = self.dense.apply_a(v);
        let rhs = Mat::<C64>::from_fn(kd, 1, |j, _| {
            (0..nf).map(|i| av[i] * self.kernel[(i, j)]).sum()
        });
        let y = self.reduced_lu.solve(&rhs);
        (0..nf)
            .map(|i| (0..kd).map(|j| y[(j, 0)] * self.kernel[(i, j)]).sum())
            .collect()
    }

    /// Ideal multiscale basis function `(I − 𝒞_∞)Φ_p`.
    pub fn ideal_basis(&self, p: usize) -> Vec<C64> {
        let mut e = vec![ZERO; self.dense.num_coarse()];
        e[p] = C64::new(1.0, 0.0);
        let phi = self.dense.prolongate(&e);
        let c = self.corrector_of(&phi);
        phi.iter().zip(c).map(|(a, b)| a - b).collect()
    }

    /// A random element of `W_h` built from the kernel basis.
    pub fn kernel_vector(&self, seed: u64) -> Vec<C64> {
        let coeff = crate::harness::random_vector(self.kernel_dim(), seed);
        (0..self.dense.num_fine())
            .map(|i| {
                coeff
                    .iter()
                    .enumerate()
                    .map(|(j, c)| c * self.kernel[(i, j)])
                    .sum()
            })
            .collect()
    }
}

/// Sine of the largest principal angle between the column spans of two
/// complex matrices stored as column lists.
pub fn subspace_gap(a: &[Vec<C64>], b: &[Vec<C64>]) -> f64 {
    let orth = |cols: &[Vec<C64>]| {
        let n = cols[0].len();
        let m = Mat::<C64>::from_fn(n, cols.len(), |i, j| cols[j][i]);
        let qr = m.qr();
        let q = qr.compute_thin_Q();
        q
    };
    let qa = orth(a);
    let qb = orth(b);
    let proj = &qb * (qb.adjoint() * &qa);
    let diff = &qa - &proj;
    let mut worst = 0.0f64;
    for j in 0..diff.ncols() {
        let norm: f64 = (0..diff.nrows())
            .map(|i| diff[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        worst = worst.max(norm);
    }
    worst
}

pub fn rel_err(a: &[C64], b: &[C64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}
