//! Localized orthogonal decomposition: element correctors, the multiscale
//! basis and the Petrov–Galerkin coarse solver.
//!
//! The corrector of a coarse element `T` on the patch `ω^m(T)` solves
//!
//! ```text
//! [K  Bᵀ] [w]   [a_T(Φ_p, ·)]
//! [B  0 ] [λ] = [     0     ]
//! ```
//!
//! with `K` the fine Helmholtz matrix on the patch dofs and `B` the rows of
//! `M_Hh` for the coarse nodes meeting the patch. Because `A` is complex
//! symmetric and the coarse hats are real, the adjoint corrector of `Φ_p` is
//! the complex conjugate of the primal one, so the test basis is
//! `conj(trial)` and only the trial basis is stored.

use std::collections::HashMap;

use faer::Conj;
use rayon::prelude::*;

use crate::assembly::{ElementForm, GlobalOperators};
use crate::error::{Error, Result};
use crate::mesh::{MeshHierarchy, Patch};
use crate::sparse::{CsrMatrix, DenseLu, SparseLu};
use crate::transfer::TransferOperators;
use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Coarse dimension up to which `A_c` is factorized densely.
pub const DENSE_COARSE_LIMIT: usize = 1200;

/// Saddle-point system of one element corrector.
#[derive(Debug, Clone)]
pub struct CorrectorProblem {
    pub patch: Patch,
    /// `A` restricted to the patch dofs.
    pub k: CsrMatrix<C64>,
    /// Nonzero rows of `M_Hh` on the patch dofs.
    pub b: CsrMatrix<f64>,
    /// Coarse nodes of the rows of `b`.
    pub constraints: Vec<usize>,
    /// Vertices of `T`, one right-hand side each.
    pub vertices: [usize; 3],
    /// `a_T(Φ_p, φ_q)` for `q` in the patch dofs.
    pub rhs: [Vec<C64>; 3],
}

impl CorrectorProblem {
    pub fn new(
        mesh: &MeshHierarchy,
        global: &GlobalOperators,
        transfer: &TransferOperators,
        t: usize,
        layers: usize,
    ) -> Self {
        let patch = Patch::new(mesh, t, layers);
        let dofs = &patch.fine_dofs;
        let k = global.a.principal_submatrix(dofs);
        let full = transfer
            .coarse_fine_mass
            .submatrix(&patch.constraint_nodes, dofs);
        let keep: Vec<usize> = (0..full.nrows())
            .filter(|&r| full.row(r).1.iter().any(|v| *v != 0.0))
            .collect();
        let b = full.submatrix(&keep, &(0..full.ncols()).collect::<Vec<_>>());
        let constraints = keep.iter().map(|&r| patch.constraint_nodes[r]).collect();

        let vertices = mesh.coarse.elements[t];
        let form = ElementForm::new(mesh, global.kappa, t);
        let rhs = vertices.map(|p| {
            let phi: Vec<C64> = form
                .nodes
                .iter()
                .map(|&q| C64::new(transfer.prolongation.get(q, p), 0.0))
                .collect();
            let local = form.apply_local(&phi);
            let mut out = vec![ZERO; dofs.len()];
            for (&q, v) in form.nodes.iter().zip(local) {
                if let Ok(i) = dofs.binary_search(&q) {
                    out[i] = v;
                }
            }
            out
        });
        Self {
            patch,
            k,
            b,
            constraints,
            vertices,
            rhs,
        }
    }

    pub fn num_dofs(&self) -> usize {
        self.patch.fine_dofs.len()
    }

    /// The saddle-point matrix `[K Bᵀ; B 0]`, with `B` scaled to unit
    /// largest entry so that both blocks are of order one.
    pub fn saddle_matrix(&self) -> CsrMatrix<C64> {
        let n = self.num_dofs();
        let c = self.b.nrows();
        let bmax = self.b.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = if bmax > 0.0 { 1.0 / bmax } else { 1.0 };
        let mut t: Vec<(usize, usize, C64)> = self.k.triplets().collect();
        for (i, j, v) in self.b.triplets() {
            t.push((n + i, j, C64::new(v * scale, 0.0)));
            t.push((j, n + i, C64::new(v * scale, 0.0)));
        }
        CsrMatrix::from_triplets(n + c, n + c, &t)
    }

    /// Correctors `𝒞_{T,m}Φ_p` (or the adjoint ones) for the three vertices
    /// of `T`, on the patch dofs.
    pub fn solve(&self, adjoint: bool) -> Result<[Vec<C64>; 3]> {
        let n = self.num_dofs();
        let total = n + self.b.nrows();
        let lu = SparseLu::factor(
            &self.saddle_matrix(),
            "corrector patch",
            self.patch.coarse_element,
        )?;
        let mut rhs = vec![ZERO; 3 * total];
        for (k, col) in self.rhs.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                rhs[k * total + i] = if adjoint { v.conj() } else { *v };
            }
        }
        lu.solve_many_in_place(&mut rhs, 3, if adjoint { Conj::Yes } else { Conj::No });
        Ok([0, 1, 2].map(|k| rhs[k * total..k * total + n].to_vec()))
    }

    /// [`solve`](Self::solve) extended by zero to the whole fine mesh.
    pub fn solve_global(&self, adjoint: bool, num_nodes: usize) -> Result<[Vec<C64>; 3]> {
        let local = self.solve(adjoint)?;
        Ok(local.map(|w| {
            let mut out = vec![ZERO; num_nodes];
            for (&q, v) in self.patch.fine_dofs.iter().zip(w) {
                out[q] = v;
            }
            out
        }))
    }
}

/// Sparse fine × coarse basis stored by columns.
#[derive(Debug, Clone, Default)]
pub struct BasisColumns {
    nrows: usize,
    col_ptr: Vec<usize>,
    rows: Vec<u32>,
    values: Vec<C64>,
}

impl BasisColumns {
    fn from_columns(nrows: usize, cols: Vec<(Vec<u32>, Vec<C64>)>) -> Self {
        let nnz = cols.iter().map(|c| c.0.len()).sum();
        let mut col_ptr = Vec::with_capacity(cols.len() + 1);
        let mut rows = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        col_ptr.push(0);
        for (r, v) in cols {
            rows.extend(r);
            values.extend(v);
            col_ptr.push(rows.len());
        }
        Self {
            nrows,
            col_ptr,
            rows,
            values,
        }
    }

    fn from_csr(m: &CsrMatrix<f64>) -> Self {
        let mt = m.transpose();
        let cols = (0..mt.nrows())
            .map(|p| {
                let (c, v) = mt.row(p);
                (
                    c.iter().map(|&i| i as u32).collect(),
                    v.iter().map(|&x| C64::new(x, 0.0)).collect(),
                )
            })
            .collect();
        Self::from_columns(m.nrows(), cols)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.col_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn column(&self, p: usize) -> (&[u32], &[C64]) {
        let r = self.col_ptr[p]..self.col_ptr[p + 1];
        (&self.rows[r.clone()], &self.values[r])
    }

    /// Column `p` as a dense fine vector.
    pub fn dense_column(&self, p: usize) -> Vec<C64> {
        let mut out = vec![ZERO; self.nrows];
        let (r, v) = self.column(p);
        for (&i, &x) in r.iter().zip(v) {
            out[i as usize] = x;
        }
        out
    }

    /// `B x`, or `conj(B) x` when `conj` is set.
    pub fn expand(&self, x: &[C64], conj: bool) -> Vec<C64> {
        assert_eq!(x.len(), self.ncols());
        let mut y = vec![ZERO; self.nrows];
        for (p, &xp) in x.iter().enumerate() {
            if xp == ZERO {
                continue;
            }
            let (r, v) = self.column(p);
            for (&i, &b) in r.iter().zip(v) {
                y[i as usize] += if conj { b.conj() } else { b } * xp;
            }
        }
        y
    }

    /// `Bᵀ r`, or `Bᴴ r` when `conj` is set.
    pub fn restrict(&self, r: &[C64], conj: bool) -> Vec<C64> {
        assert_eq!(r.len(), self.nrows);
        (0..self.ncols())
            .into_par_iter()
            .map(|p| {
                let (rows, v) = self.column(p);
                rows.iter()
                    .zip(v)
                    .map(|(&i, &b)| if conj { b.conj() } else { b } * r[i as usize])
                    .sum()
            })
            .collect()
    }

    /// Fine-index bounding box `[x0, x1] × [y0, y1]` of each column.
    fn bounding_boxes(&self, mesh_n: usize) -> Vec<[usize; 4]> {
        (0..self.ncols())
            .map(|p| {
                let mut bb = [usize::MAX, 0, usize::MAX, 0];
                for &i in self.column(p).0 {
                    let (x, y) = (i as usize % (mesh_n + 1), i as usize / (mesh_n + 1));
                    bb = [bb[0].min(x), bb[1].max(x), bb[2].min(y), bb[3].max(y)];
                }
                bb
            })
            .collect()
    }

    /// `Bᵀ A B` for a complex symmetric `A`.
    fn galerkin(&self, a: &CsrMatrix<C64>, mesh_n: usize) -> CsrMatrix<C64> {
        let nc = self.ncols();
        let bbs = self.bounding_boxes(mesh_n);
        let overlaps = |p: &[usize; 4], q: &[usize; 4]| {
            p[0] <= q[1] + 1 && q[0] <= p[1] + 1 && p[2] <= q[3] + 1 && q[2] <= p[3] + 1
        };
        let triplets: Vec<Vec<(usize, usize, C64)>> = (0..nc)
            .into_par_iter()
            .map_init(
                || (vec![ZERO; self.nrows], Vec::<usize>::new()),
                |(y, touched), q| {
                    let (rows, vals) = self.column(q);
                    for (&i, &b) in rows.iter().zip(vals) {
                        let (cols, av) = a.row(i as usize);
                        for (&j, &aij) in cols.iter().zip(av) {
                            if y[j] == ZERO {
                                touched.push(j);
                            }
                            y[j] += aij * b;
                        }
                    }
                    let mut out = Vec::new();
                    for p in 0..nc {
                        if !overlaps(&bbs[p], &bbs[q]) || bbs[p][0] == usize::MAX {
                            continue;
                        }
                        let (pr, pv) = self.column(p);
                        let v: C64 = pr.iter().zip(pv).map(|(&i, &b)| b * y[i as usize]).sum();
                        if v != ZERO {
                            out.push((p, q, v));
                        }
                    }
                    for &j in touched.iter() {
                        y[j] = ZERO;
                    }
                    touched.clear();
                    out
                },
            )
            .collect();
        let flat: Vec<_> = triplets.into_iter().flatten().collect();
        CsrMatrix::from_triplets(nc, nc, &flat)
    }
}

enum CoarseFactor {
    Dense(DenseLu),
    Sparse(SparseLu),
}

impl CoarseFactor {
    fn new(a: &CsrMatrix<C64>) -> Result<Self> {
        if a.nrows() <= DENSE_COARSE_LIMIT {
            let dense = a.to_dense();
            Ok(Self::Dense(DenseLu::factor(
                a.nrows(),
                |i, j| dense[i][j],
                "coarse matrix",
                0,
            )?))
        } else {
            Ok(Self::Sparse(SparseLu::factor(a, "coarse matrix", 0)?))
        }
    }

    fn solve(&self, b: &mut [C64]) {
        match self {
            Self::Dense(f) => f.solve_in_place(b),
            Self::Sparse(f) => f.solve_in_place(b),
        }
    }

    fn solve_adjoint(&self, b: &mut [C64]) {
        match self {
            Self::Dense(f) => f.solve_adjoint_in_place(b),
            Self::Sparse(f) => f.solve_adjoint_in_place(b),
        }
    }
}

/// Which coarse space a [`CoarseSpace`] represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoarseBasis {
    /// Multiscale basis with `m` oversampling layers.
    Lod { layers: usize },
    /// Plain P1 hats.
    P1,
}

/// Coarse trial basis `V` with test basis `conj(V)` and the factorized
/// Petrov–Galerkin matrix `A_c = conj(V)ᴴ A V = Vᵀ A V`.
pub struct CoarseSpace {
    pub basis: CoarseBasis,
    trial: BasisColumns,
    coarse_matrix: CsrMatrix<C64>,
    factor: CoarseFactor,
    /// Number of distinct corrector problems solved.
    pub corrector_solves: usize,
}

impl std::fmt::Debug for CoarseSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoarseSpace")
            .field("basis", &self.basis)
            .field("coarse_dim", &self.coarse_dim())
            .field("nnz", &self.trial.nnz())
            .field("corrector_solves", &self.corrector_solves)
            .finish()
    }
}

/// Element correctors of one translation class, stored as offsets from the
/// lower-left fine node of the representative's coarse square.
struct ClassCorrector {
    offsets: Vec<(i32, i32)>,
    values: [Vec<C64>; 3],
}

/// Coarse elements whose patches are translates of each other share a key.
fn class_key(mesh: &MeshHierarchy, t: usize, layers: usize) -> [usize; 5] {
    let (i, j, tt) = mesh.coarse.element_square(t);
    let n = mesh.n_coarse;
    let cap = layers + 1;
    [
        tt,
        i.min(cap),
        (n - 1 - i).min(cap),
        j.min(cap),
        (n - 1 - j).min(cap),
    ]
}

impl CoarseSpace {
    /// Multiscale basis `(I − 𝒞_m)Φ_p`, solving one corrector problem per
    /// translation class of coarse elements.
    pub fn lod(
        mesh: &MeshHierarchy,
        global: &GlobalOperators,
        transfer: &TransferOperators,
        layers: usize,
    ) -> Result<Self> {
        Self::lod_impl(mesh, global, transfer, layers, true)
    }

    /// As [`lod`](Self::lod) with one corrector solve per coarse element.
    pub fn lod_uncached(
        mesh: &MeshHierarchy,
        global: &GlobalOperators,
        transfer: &TransferOperators,
        layers: usize,
    ) -> Result<Self> {
        Self::lod_impl(mesh, global, transfer, layers, false)
    }

    fn lod_impl(
        mesh: &MeshHierarchy,
        global: &GlobalOperators,
        transfer: &TransferOperators,
        layers: usize,
        cached: bool,
    ) -> Result<Self> {
        if layers == 0 {
            return Err(Error::InvalidConfig(
                "oversampling layers must be at least 1".into(),
            ));
        }
        let nt = mesh.coarse.num_elements();
        let mut reps = Vec::new();
        let mut keys: HashMap<[usize; 5], usize> = HashMap::new();
        let class_of: Vec<usize> = (0..nt)
            .map(|t| {
                if !cached {
                    reps.push(t);
                    return reps.len() - 1;
                }
                *keys.entry(class_key(mesh, t, layers)).or_insert_with(|| {
                    reps.push(t);
                    reps.len() - 1
                })
            })
            .collect();
        log::debug!(
            "solving {} corrector problems for {} coarse elements",
            reps.len(),
            nt
        );

        let r = mesh.ratio();
        let classes: Vec<ClassCorrector> = reps
            .par_iter()
            .map(|&t| {
                let problem = CorrectorProblem::new(mesh, global, transfer, t, layers);
                let values = problem.solve(false)?;
                let (i, j, _) = mesh.coarse.element_square(t);
                let (ox, oy) = ((i * r) as i32, (j * r) as i32);
                let offsets = problem
                    .patch
                    .fine_dofs
                    .iter()
                    .map(|&q| {
                        let (x, y) = mesh.fine.node_coords(q);
                        (x as i32 - ox, y as i32 - oy)
                    })
                    .collect();
                Ok(ClassCorrector { offsets, values })
            })
            .collect::<Result<_>>()?;

        let trial = Self::assemble_columns(mesh, transfer, &class_of, &classes);
        drop(classes);
        let coarse_matrix = trial.galerkin(&global.a, mesh.n_fine());
        let factor = CoarseFactor::new(&coarse_matrix)?;
        Ok(Self {
            basis: CoarseBasis::Lod { layers },
            trial,
            coarse_matrix,
            factor,
            corrector_solves: reps.len(),
        })
    }

    fn assemble_columns(
        mesh: &MeshHierarchy,
        transfer: &TransferOperators,
        class_of: &[usize],
        classes: &[ClassCorrector],
    ) -> BasisColumns {
        let r = mesh.ratio();
        let nf = mesh.num_fine_nodes();
        let n = mesh.n_coarse;
        let pt = transfer.prolongation.transpose();
        let cols: Vec<(Vec<u32>, Vec<C64>)> = (0..mesh.num_coarse_nodes())
            .into_par_iter()
            .map_init(
                || (vec![ZERO; nf], vec![false; nf], Vec::<usize>::new()),
                |(acc, mark, touched), p| {
                    let mut add = |q: usize, v: C64| {
                        if !mark[q] {
                            mark[q] = true;
                            touched.push(q);
                        }
                        acc[q] += v;
                    };
                    let (pc, pv) = pt.row(p);
                    for (&q, &v) in pc.iter().zip(pv) {
                        add(q, C64::new(v, 0.0));
                    }
                    let (px, py) = mesh.coarse.node_coords(p);
                    for j in py.saturating_sub(1)..(py + 1).min(n) {
                        for i in px.saturating_sub(1)..(px + 1).min(n) {
                            for tt in 0..2 {
                                let t = mesh.coarse.element_id(i, j, tt);
                                let Some(k) = mesh.coarse.elements[t].iter().position(|&v| v == p)
                                else {
                                    continue;
                                };
                                let class = &classes[class_of[t]];
                                let (ox, oy) = ((i * r) as i32, (j * r) as i32);
                                for (&(dx, dy), &w) in class.offsets.iter().zip(&class.values[k]) {
                                    let q =
                                        mesh.fine.node_id((ox + dx) as usize, (oy + dy) as usize);
                                    add(q, -w);
                                }
                            }
                        }
                    }
                    touched.sort_unstable();
                    let rows: Vec<u32> = touched.iter().map(|&q| q as u32).collect();
                    let vals: Vec<C64> = touched.iter().map(|&q| acc[q]).collect();
                    for &q in touched.iter() {
                        acc[q] = ZERO;
                        mark[q] = false;
                    }
                    touched.clear();
                    (rows, vals)
                },
            )
            .collect();
        BasisColumns::from_columns(nf, cols)
    }

    /// The P1 coarse space with `A_c = PᵀAP`.
    pub fn p1(
        mesh: &MeshHierarchy,
        global: &GlobalOperators,
        transfer: &TransferOperators,
    ) -> Result<Self> {
        let trial = BasisColumns::from_csr(&transfer.prolongation);
        let coarse_matrix = trial.galerkin(&global.a, mesh.n_fine());
        let factor = CoarseFactor::new(&coarse_matrix)?;
        Ok(Self {
            basis: CoarseBasis::P1,
            trial,
            coarse_matrix,
            factor,
            corrector_solves: 0,
        })
    }

    pub fn coarse_dim(&self) -> usize {
        self.trial.ncols()
    }

    pub fn fine_dim(&self) -> usize {
        self.trial.nrows()
    }

    pub fn trial(&self) -> &BasisColumns {
        &self.trial
    }

    /// `A_c = testᴴ A trial`.
    pub fn coarse_matrix(&self) -> &CsrMatrix<C64> {
        &self.coarse_matrix
    }

    /// Trial basis function `(I − 𝒞_m)Φ_p` as a dense vector.
    pub fn trial_column(&self, p: usize) -> Vec<C64> {
        self.trial.dense_column(p)
    }

    /// Test basis function `(I − 𝒞*_m)Φ_p` as a dense vector.
    pub fn test_column(&self, p: usize) -> Vec<C64> {
        self.trial
            .dense_column(p)
            .into_iter()
            .map(|v| v.conj())
            .collect()
    }

    /// `trial · x`.
    pub fn expand_trial(&self, x: &[C64]) -> Vec<C64> {
        self.trial.expand(x, false)
    }

    /// `test · x`.
    pub fn expand_test(&self, x: &[C64]) -> Vec<C64> {
        self.trial.expand(x, true)
    }

    /// `testᴴ r`.
    pub fn restrict_test(&self, r: &[C64]) -> Vec<C64> {
        self.trial.restrict(r, false)
    }

    /// `trialᴴ r`.
    pub fn restrict_trial(&self, r: &[C64]) -> Vec<C64> {
        self.trial.restrict(r, true)
    }

    pub fn solve(&self, b: &mut [C64]) {
        self.factor.solve(b);
    }

    pub fn solve_adjoint(&self, b: &mut [C64]) {
        self.factor.solve_adjoint(b);
    }

    /// `trial · A_c⁻¹ · testᴴ · r`; on `r = A v` this is `Q_{0,m} v`.
    pub fn apply_coarse(&self, r: &[C64]) -> Vec<C64> {
        let mut x = self.restrict_test(r);
        self.solve(&mut x);
        self.expand_trial(&x)
    }

    /// `test · A_c⁻ᴴ · trialᴴ · r`; on `r = Aᴴ v` this is `Q*_{0,m} v`.
    pub fn apply_coarse_adjoint(&self, r: &[C64]) -> Vec<C64> {
        let mut x = self.restrict_trial(r);
        self.solve_adjoint(&mut x);
        self.expand_test(&x)
    }

    /// Per coarse node: column nonzeros and the support radius in coarse
    /// cells (Chebyshev distance from the node).
    pub fn column_stats(&self, mesh: &MeshHierarchy) -> Vec<(usize, usize, usize)> {
        let r = mesh.ratio();
        (0..self.coarse_dim())
            .map(|p| {
                let (px, py) = mesh.coarse.node_coords(p);
                let (fx, fy) = (px * r, py * r);
                let rows = self.trial.column(p).0;
                let radius = rows
                    .iter()
                    .map(|&q| {
                        let (x, y) = mesh.fine.node_coords(q as usize);
                        x.abs_diff(fx).max(y.abs_diff(fy))
                    })
                    .max()
                    .unwrap_or(0);
                (p, rows.len(), radius.div_ceil(r))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::dot_h;
    use crate::harness::random_vector;

    struct Setup {
        mesh: MeshHierarchy,
        ops: GlobalOperators,
        transfer: TransferOperators,
    }

    fn setup(n: usize, levels: usize, kappa: f64) -> Setup {
        let mesh = MeshHierarchy::new(n, levels).unwrap();
        let ops = GlobalOperators::assemble(&mesh, kappa);
        let transfer = TransferOperators::new(&mesh, &ops).unwrap();
        Setup {
            mesh,
            ops,
            transfer,
        }
    }

    fn rel(a: &[C64], b: &[C64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
        let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
        (num / den.max(1e-300)).sqrt()
    }

    #[test]
    fn corrector_satisfies_constraints_and_adjoint_is_conjugate() {
        let s = setup(6, 2, 7.0);
        let problem = CorrectorProblem::new(&s.mesh, &s.ops, &s.transfer, 17, 2);
        let primal = problem.solve(false).unwrap();
        let adjoint = problem.solve(true).unwrap();
        for (w, z) in primal.iter().zip(&adjoint) {
            let bw = problem.b.apply(w);
            assert!(bw.iter().all(|v| v.norm() <= 1e-11));
            let conj: Vec<C64> = w.iter().map(|v| v.conj()).collect();
            assert!(rel(z, &conj) < 1e-12);
        }
    }

    #[test]
    fn zero_rhs_gives_zero_corrector() {
        let s = setup(4, 1, 3.0);
        let mut problem = CorrectorProblem::new(&s.mesh, &s.ops, &s.transfer, 5, 1);
        problem.rhs = [0, 1, 2].map(|_| vec![ZERO; problem.num_dofs()]);
        for w in problem.solve(false).unwrap() {
            assert!(w.iter().all(|v| *v == ZERO));
        }
    }

    #[test]
    fn class_cache_matches_element_solves() {
        let s = setup(10, 1, 6.0);
        for m in [1, 2] {
            let cached = CoarseSpace::lod(&s.mesh, &s.ops, &s.transfer, m).unwrap();
            let brute = CoarseSpace::lod_uncached(&s.mesh, &s.ops, &s.transfer, m).unwrap();
            assert!(cached.corrector_solves < brute.corrector_solves);
            for p in 0..cached.coarse_dim() {
                assert!(rel(&cached.trial_column(p), &brute.trial_column(p)) < 1e-12);
            }
        }
    }

    #[test]
    fn correctors_are_in_the_kernel_of_the_interpolation() {
        let s = setup(5, 2, 5.0);
        let space = CoarseSpace::lod(&s.mesh, &s.ops, &s.transfer, 2).unwrap();
        for p in 0..space.coarse_dim() {
            let col = space.trial_column(p);
            let mut e = vec![ZERO; space.coarse_dim()];
            e[p] = C64::new(1.0, 0.0);
            let phi = s.transfer.prolongate(&e);
            let corr: Vec<C64> = phi.iter().zip(&col).map(|(a, b)| a - b).collect();
            let ih = s.transfer.quasi_interpolate(&corr);
            assert!(ih.iter().all(|v| v.norm() <= 1e-10));
        }
    }

    #[test]
    fn coarse_matrix_is_petrov_galerkin_product() {
        let s = setup(4, 2, 4.0);
        let space = CoarseSpace::lod(&s.mesh, &s.ops, &s.transfer, 1).unwrap();
        let nc = space.coarse_dim();
        for q in [0, 6, 12] {
            let aq = s.ops.a.apply(&space.trial_column(q));
            for p in 0..nc {
                let expected = dot_h(&space.test_column(p), &aq);
                assert!((space.coarse_matrix().get(p, q) - expected).norm() < 1e-11);
            }
        }
    }

    #[test]
    fn coarse_solver_reproduces_trial_functions() {
        let s = setup(5, 2, 6.0);
        let space = CoarseSpace::lod(&s.mesh, &s.ops, &s.transfer, 2).unwrap();
        let x = random_vector(space.coarse_dim(), 42);
        let v = space.expand_trial(&x);
        let back = space.apply_coarse(&s.ops.a.apply(&v));
        assert!(rel(&back, &v) < 1e-10);

        let zero = vec![ZERO; space.fine_dim()];
        assert!(space.apply_coarse(&zero).iter().all(|z| *z == ZERO));
        assert!(space.apply_coarse_adjoint(&zero).iter().all(|z| *z == ZERO));
    }

    #[test]
    fn p1_space_uses_hats() {
        let s = setup(4, 1, 2.0);
        let space = CoarseSpace::p1(&s.mesh, &s.ops, &s.transfer).unwrap();
        let col = space.trial_column(7);
        for q in 0..s.mesh.num_fine_nodes() {
            assert_eq!(col[q].re, s.transfer.prolongation.get(q, 7));
        }
        let ac = space.coarse_matrix();
        for (i, j, v) in ac.triplets() {
            assert!((v - ac.get(j, i)).norm() <= 1e-14 * v.norm().max(1.0));
        }
    }

    #[test]
    fn singular_corrector_patch_is_reported() {
        let s = setup(4, 1, 3.0);
        let mut problem = CorrectorProblem::new(&s.mesh, &s.ops, &s.transfer, 9, 1);
        problem.k = problem.k.map(|_| ZERO);
        problem.b = problem.b.map(|_| 0.0);
        match problem.solve(false) {
            Err(Error::Singular { what, id, .. }) => {
                assert_eq!(what, "corrector patch");
                assert_eq!(id, 9);
            }
            other => panic!("expected singular error, got {other:?}"),
        }
    }
}
