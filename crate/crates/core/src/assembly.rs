//! P1 finite element matrices for `a(u, v) = (∇u, ∇v) − κ²(u, v) − iκ⟨u, v⟩_Γ`.
//!
//! Matrices follow the convention `A[q][p] = a(φ_p, φ_q)`, so that
//! `a(u, w) = wᴴ A u` for coefficient vectors `u`, `w`.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::Result;
use crate::mesh::{MeshHierarchy, Side, Subdomain, SubdomainLayout};
use crate::sparse::{CsrMatrix, SparseLu};
use crate::C64;

/// Element stiffness matrix of a triangle: `K_ij = (e_i · e_j) / (4|T|)`,
/// where `e_i` is the edge opposite vertex `i`.
pub fn element_stiffness(v: [[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let edge = |i: usize| {
        let (a, b) = (v[(i + 1) % 3], v[(i + 2) % 3]);
        [b[0] - a[0], b[1] - a[1]]
    };
    let e = [edge(0), edge(1), edge(2)];
    let area = triangle_area(v);
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = (e[i][0] * e[j][0] + e[i][1] * e[j][1]) / (4.0 * area);
        }
    }
    k
}

/// Element mass matrix `|T|/12 · (1 + δ_ij)`.
pub fn element_mass(v: [[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let c = triangle_area(v) / 12.0;
    let mut m = [[c; 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 2.0 * c;
    }
    m
}

/// Edge mass matrix `len/6 · [[2, 1], [1, 2]]`.
pub fn edge_mass(len: f64) -> [[f64; 2]; 2] {
    let c = len / 6.0;
    [[2.0 * c, c], [c, 2.0 * c]]
}

fn triangle_area(v: [[f64; 2]; 3]) -> f64 {
    0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]))
}

fn push_element(t: &mut Vec<(usize, usize, f64)>, ids: [usize; 3], k: [[f64; 3]; 3]) {
    for a in 0..3 {
        for b in 0..3 {
            t.push((ids[a], ids[b], k[a][b]));
        }
    }
}

/// Global matrices of the Helmholtz problem on the fine mesh.
#[derive(Debug, Clone)]
pub struct GlobalOperators {
    pub kappa: f64,
    pub h: f64,
    pub stiffness: CsrMatrix<f64>,
    pub mass: CsrMatrix<f64>,
    pub boundary_mass: CsrMatrix<f64>,
    /// `A = S − κ²M − iκN_Γ`.
    pub a: CsrMatrix<C64>,
    /// `G = S + κ²M`, the Gram matrix of the energy inner product.
    pub g: CsrMatrix<f64>,
}

impl GlobalOperators {
    pub fn assemble(mesh: &MeshHierarchy, kappa: f64) -> Self {
        let fine = &mesh.fine;
        let n = fine.num_nodes();
        let mut ts = Vec::with_capacity(9 * fine.num_elements());
        let mut tm = Vec::with_capacity(9 * fine.num_elements());
        for ids in &fine.elements {
            let v = ids.map(|i| fine.nodes[i]);
            push_element(&mut ts, *ids, element_stiffness(v));
            push_element(&mut tm, *ids, element_mass(v));
        }
        let mut tb = Vec::with_capacity(4 * mesh.boundary_edges.len());
        for edge in &mesh.boundary_edges {
            let [p, q] = edge.nodes;
            let (a, b) = (fine.nodes[p], fine.nodes[q]);
            let m = edge_mass(((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt());
            for (i, u) in [p, q].into_iter().enumerate() {
                for (j, w) in [p, q].into_iter().enumerate() {
                    tb.push((u, w, m[i][j]));
                }
            }
        }
        let stiffness = CsrMatrix::from_triplets(n, n, &ts);
        let mass = CsrMatrix::from_triplets(n, n, &tm);
        let boundary_mass = CsrMatrix::from_triplets(n, n, &tb);
        Self::from_parts(kappa, mesh.h(), stiffness, mass, boundary_mass)
    }

    pub fn from_parts(
        kappa: f64,
        h: f64,
        stiffness: CsrMatrix<f64>,
        mass: CsrMatrix<f64>,
        boundary_mass: CsrMatrix<f64>,
    ) -> Self {
        let k2 = kappa * kappa;
        let a = CsrMatrix::combine(&[
            (C64::new(1.0, 0.0), &stiffness),
            (C64::new(-k2, 0.0), &mass),
            (C64::new(0.0, -kappa), &boundary_mass),
        ]);
        let g = CsrMatrix::combine_real(&[(1.0, &stiffness), (k2, &mass)]);
        Self {
            kappa,
            h,
            stiffness,
            mass,
            boundary_mass,
            a,
            g,
        }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// `a(u, w) = wᴴ A u`.
    pub fn form(&self, u: &[C64], w: &[C64]) -> C64 {
        dot_h(w, &self.a.apply(u))
    }

    /// `(x, y)_{1,κ} = yᴴ G x`.
    pub fn energy_inner(&self, x: &[C64], y: &[C64]) -> C64 {
        dot_h(y, &self.g.apply(x))
    }

    pub fn energy_norm(&self, x: &[C64]) -> f64 {
        self.energy_inner(x, x).re.max(0.0).sqrt()
    }
}

/// `yᴴ x`.
pub fn dot_h(y: &[C64], x: &[C64]) -> C64 {
    y.iter().zip(x).map(|(a, b)| a.conj() * b).sum()
}

/// `yᵀ x`.
pub fn dot_t(y: &[C64], x: &[C64]) -> C64 {
    y.iter().zip(x).map(|(a, b)| a * b).sum()
}

pub fn norm2(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Dense matrix of `a_T`, the form restricted to the fine elements of a
/// coarse element `T` and to the Γ-edges of `T`, on the fine nodes of `T̄`.
#[derive(Debug, Clone)]
pub struct ElementForm {
    /// Sorted fine node ids.
    pub nodes: Vec<usize>,
    /// Row-major `nodes.len()²` entries, `values[q·n + p] = a_T(φ_p, φ_q)`.
    pub values: Vec<C64>,
}

impl ElementForm {
    pub fn new(mesh: &MeshHierarchy, kappa: f64, t: usize) -> Self {
        let fine = &mesh.fine;
        let nodes = mesh.fine_nodes_of_coarse(t);
        let nl = nodes.len();
        let local = |q: usize| nodes.binary_search(&q).expect("node of T");
        let mut values = vec![C64::new(0.0, 0.0); nl * nl];
        let k2 = kappa * kappa;
        for e in mesh.children(t) {
            let ids = fine.elements[e];
            let v = ids.map(|i| fine.nodes[i]);
            let (s, m) = (element_stiffness(v), element_mass(v));
            let li = ids.map(local);
            for a in 0..3 {
                for b in 0..3 {
                    values[li[a] * nl + li[b]] += C64::new(s[a][b] - k2 * m[a][b], 0.0);
                }
            }
        }
        for edge in &mesh.boundary_edges {
            if mesh.parent_element[edge.element] != t {
                continue;
            }
            let m = edge_mass(mesh.h());
            let li = edge.nodes.map(local);
            for a in 0..2 {
                for b in 0..2 {
                    values[li[a] * nl + li[b]] += C64::new(0.0, -kappa * m[a][b]);
                }
            }
        }
        Self { nodes, values }
    }

    /// `A_T x` for `x` given on `nodes`.
    pub fn apply_local(&self, x: &[C64]) -> Vec<C64> {
        let nl = self.nodes.len();
        (0..nl)
            .map(|q| (0..nl).map(|p| self.values[q * nl + p] * x[p]).sum())
            .collect()
    }
}

/// Points and weights of the `n`-point Gauss–Legendre rule on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// `b_q = ∫_Γ g φ_q ds` with an `points`-point Gauss rule per edge. The
/// boundary datum receives the point and the outward normal.
pub fn assemble_load(
    mesh: &MeshHierarchy,
    g: impl Fn([f64; 2], [f64; 2]) -> C64,
    points: usize,
) -> Vec<C64> {
    let rule = gauss_legendre(points);
    let fine = &mesh.fine;
    let mut b = vec![C64::new(0.0, 0.0); fine.num_nodes()];
    for edge in &mesh.boundary_edges {
        let [p, q] = edge.nodes;
        let (xa, xb) = (fine.nodes[p], fine.nodes[q]);
        let len = ((xb[0] - xa[0]).powi(2) + (xb[1] - xa[1]).powi(2)).sqrt();
        for &(t, w) in &rule {
            let x = [xa[0] + t * (xb[0] - xa[0]), xa[1] + t * (xb[1] - xa[1])];
            let gv = g(x, edge.normal) * (w * len);
            b[p] += gv * (1.0 - t);
            b[q] += gv * t;
        }
    }
    b
}

/// Stiffness, mass and boundary-mass matrices of an `nx × ny` rectangle of
/// squares with side `h`, on its nodes in row-major order. `sides` selects
/// the edges carrying the boundary mass.
pub fn rectangle_matrices(
    nx: usize,
    ny: usize,
    h: f64,
    sides: u8,
) -> (CsrMatrix<f64>, CsrMatrix<f64>, CsrMatrix<f64>) {
    let id = |a: usize, b: usize| b * (nx + 1) + a;
    let n = (nx + 1) * (ny + 1);
    let lower = [[0.0, 0.0], [h, 0.0], [h, h]];
    let upper = [[0.0, 0.0], [h, h], [0.0, h]];
    let (sl, su) = (element_stiffness(lower), element_stiffness(upper));
    let (ml, mu) = (element_mass(lower), element_mass(upper));
    let mut ts = Vec::with_capacity(18 * nx * ny);
    let mut tm = Vec::with_capacity(18 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let lo = [id(i, j), id(i + 1, j), id(i + 1, j + 1)];
            let up = [id(i, j), id(i + 1, j + 1), id(i, j + 1)];
            push_element(&mut ts, lo, sl);
            push_element(&mut ts, up, su);
            push_element(&mut tm, lo, ml);
            push_element(&mut tm, up, mu);
        }
    }
    let mut edges = Vec::new();
    if sides & Side::Bottom.bit() != 0 {
        edges.extend((0..nx).map(|i| [id(i, 0), id(i + 1, 0)]));
    }
    if sides & Side::Right.bit() != 0 {
        edges.extend((0..ny).map(|j| [id(nx, j), id(nx, j + 1)]));
    }
    if sides & Side::Top.bit() != 0 {
        edges.extend((0..nx).map(|i| [id(i, ny), id(i + 1, ny)]));
    }
    if sides & Side::Left.bit() != 0 {
        edges.extend((0..ny).map(|j| [id(0, j), id(0, j + 1)]));
    }
    let em = edge_mass(h);
    let mut tb = Vec::with_capacity(4 * edges.len());
    for [p, q] in edges {
        tb.extend([
            (p, p, em[0][0]),
            (p, q, em[0][1]),
            (q, p, em[1][0]),
            (q, q, em[1][1]),
        ]);
    }
    (
        CsrMatrix::from_triplets(n, n, &ts),
        CsrMatrix::from_triplets(n, n, &tm),
        CsrMatrix::from_triplets(n, n, &tb),
    )
}

/// Matrix of `c_ℓ(u, v) = (∇u, ∇v) + κ²(u, v) − iκ⟨u, v⟩_{∂Ω_ℓ}` on all
/// nodes of a subdomain, row-major.
pub fn impedance_matrix(sd: &Subdomain, h: f64, kappa: f64) -> CsrMatrix<C64> {
    let (s, m, b) = rectangle_matrices(sd.nx(), sd.ny(), h, 0b1111);
    CsrMatrix::combine(&[
        (C64::new(1.0, 0.0), &s),
        (C64::new(kappa * kappa, 0.0), &m),
        (C64::new(0.0, -kappa), &b),
    ])
}

/// Matrix of `a_ℓ` on the interior dofs of a subdomain.
pub fn dirichlet_matrix(sd: &Subdomain, global: &GlobalOperators) -> CsrMatrix<C64> {
    global.a.principal_submatrix(&sd.interior)
}

/// Which local problem a set of subdomain solvers uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LocalProblem {
    /// `a_ℓ` on functions vanishing on ∂Ω_ℓ∖Γ.
    Dirichlet,
    /// `c_ℓ` with impedance conditions on all of ∂Ω_ℓ.
    Impedance,
}

/// Factorized local matrices, shared between subdomains that are
/// translates of each other.
pub struct LocalOperators {
    pub problem: LocalProblem,
    /// Index into `matrices`/`factors` for each subdomain.
    pub class_of: Vec<usize>,
    pub matrices: Vec<CsrMatrix<C64>>,
    pub factors: Vec<SparseLu>,
}

impl std::fmt::Debug for LocalOperators {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LocalOperators")
            .field("problem", &self.problem)
            .field("subdomains", &self.class_of.len())
            .field("classes", &self.matrices.len())
            .finish()
    }
}

impl LocalOperators {
    pub fn assemble(
        layout: &SubdomainLayout,
        global: &GlobalOperators,
        problem: LocalProblem,
    ) -> Result<Self> {
        let mut keys: HashMap<(usize, usize, u8), usize> = HashMap::new();
        let mut reps = Vec::new();
        let class_of = layout
            .subdomains
            .iter()
            .enumerate()
            .map(|(l, sd)| {
                let key = match problem {
                    LocalProblem::Dirichlet => sd.dirichlet_key(),
                    LocalProblem::Impedance => {
                        let (nx, ny) = sd.impedance_key();
                        (nx, ny, 0)
                    }
                };
                *keys.entry(key).or_insert_with(|| {
                    reps.push(l);
                    reps.len() - 1
                })
            })
            .collect();
        let built: Vec<Result<(CsrMatrix<C64>, SparseLu)>> = reps
            .par_iter()
            .map(|&l| {
                let sd = &layout.subdomains[l];
                let mat = match problem {
                    LocalProblem::Dirichlet => dirichlet_matrix(sd, global),
                    LocalProblem::Impedance => impedance_matrix(sd, layout.h, global.kappa),
                };
                let lu = SparseLu::factor(&mat, "subdomain", l)?;
                Ok((mat, lu))
            })
            .collect();
        let mut matrices = Vec::with_capacity(built.len());
        let mut factors = Vec::with_capacity(built.len());
        for r in built {
            let (m, f) = r?;
            matrices.push(m);
            factors.push(f);
        }
        Ok(Self {
            problem,
            class_of,
            matrices,
            factors,
        })
    }

    pub fn matrix(&self, l: usize) -> &CsrMatrix<C64> {
        &self.matrices[self.class_of[l]]
    }

    pub fn factor(&self, l: usize) -> &SparseLu {
        &self.factors[self.class_of[l]]
    }
}
