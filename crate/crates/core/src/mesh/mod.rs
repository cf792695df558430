//! Nested uniform triangulations of the unit square.
//!
//! Both levels use the same structured pattern: the square `(i, j)` of an
//! `n × n` grid is split along its `(i, j)–(i+1, j+1)` diagonal into a lower
//! triangle (local id 0) and an upper triangle (local id 1). Element `e` of
//! square `(i, j)` has id `2·(j·n + i) + t` and node `(ix, iy)` has id
//! `iy·(n + 1) + ix`.

mod patch;
mod subdomain;

pub use patch::Patch;
pub use subdomain::{Subdomain, SubdomainLayout};

use crate::error::{Error, Result};

/// Side of the unit square, in counter-clockwise order from the bottom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Bottom = 0,
    Right = 1,
    Top = 2,
    Left = 3,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];

    pub fn normal(self) -> [f64; 2] {
        match self {
            Side::Bottom => [0.0, -1.0],
            Side::Right => [1.0, 0.0],
            Side::Top => [0.0, 1.0],
            Side::Left => [-1.0, 0.0],
        }
    }

    pub fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

/// A fine edge on Γ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub element: usize,
    pub side: Side,
    pub normal: [f64; 2],
}

/// One structured level: an `n × n` grid of split squares.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub n: usize,
    pub nodes: Vec<[f64; 2]>,
    pub elements: Vec<[usize; 3]>,
}

impl Grid {
    fn new(n: usize) -> Self {
        let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
        for iy in 0..=n {
            for ix in 0..=n {
                nodes.push([ix as f64 / n as f64, iy as f64 / n as f64]);
            }
        }
        let mut elements = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                elements.push(Self::element_vertices(n, i, j, 0));
                elements.push(Self::element_vertices(n, i, j, 1));
            }
        }
        Self { n, nodes, elements }
    }

    fn element_vertices(n: usize, i: usize, j: usize, t: usize) -> [usize; 3] {
        let id = |ix: usize, iy: usize| iy * (n + 1) + ix;
        if t == 0 {
            [id(i, j), id(i + 1, j), id(i + 1, j + 1)]
        } else {
            [id(i, j), id(i + 1, j + 1), id(i, j + 1)]
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    #[inline]
    pub fn node_id(&self, ix: usize, iy: usize) -> usize {
        iy * (self.n + 1) + ix
    }

    #[inline]
    pub fn node_coords(&self, id: usize) -> (usize, usize) {
        (id % (self.n + 1), id / (self.n + 1))
    }

    #[inline]
    pub fn element_id(&self, i: usize, j: usize, t: usize) -> usize {
        2 * (j * self.n + i) + t
    }

    /// `(i, j, t)` of an element id.
    #[inline]
    pub fn element_square(&self, e: usize) -> (usize, usize, usize) {
        let sq = e / 2;
        (sq % self.n, sq / self.n, e % 2)
    }

    /// Bit mask of the sides a node lies on.
    pub fn node_sides(&self, id: usize) -> u8 {
        let (ix, iy) = self.node_coords(id);
        let mut mask = 0;
        if iy == 0 {
            mask |= Side::Bottom.bit();
        }
        if ix == self.n {
            mask |= Side::Right.bit();
        }
        if iy == self.n {
            mask |= Side::Top.bit();
        }
        if ix == 0 {
            mask |= Side::Left.bit();
        }
        mask
    }

    pub fn on_boundary(&self, id: usize) -> bool {
        self.node_sides(id) != 0
    }

    pub fn element_area(&self, e: usize) -> f64 {
        let [a, b, c] = self.elements[e].map(|v| self.nodes[v]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    /// Fine edges on Γ, ordered bottom, right, top, left.
    pub fn boundary_edges(&self) -> Vec<BoundaryEdge> {
        let n = self.n;
        let mut edges = Vec::with_capacity(4 * n);
        for side in Side::ALL {
            for k in 0..n {
                let (nodes, element) = match side {
                    Side::Bottom => (
                        [self.node_id(k, 0), self.node_id(k + 1, 0)],
                        self.element_id(k, 0, 0),
                    ),
                    Side::Right => (
                        [self.node_id(n, k), self.node_id(n, k + 1)],
                        self.element_id(n - 1, k, 0),
                    ),
                    Side::Top => (
                        [self.node_id(k + 1, n), self.node_id(k, n)],
                        self.element_id(k, n - 1, 1),
                    ),
                    Side::Left => (
                        [self.node_id(0, k + 1), self.node_id(0, k)],
                        self.element_id(0, k, 1),
                    ),
                };
                edges.push(BoundaryEdge {
                    nodes,
                    element,
                    side,
                    normal: side.normal(),
                });
            }
        }
        edges
    }
}

/// Coarse and fine triangulations with `h = H · 2^(−levels)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshHierarchy {
    pub n_coarse: usize,
    pub levels: usize,
    pub coarse: Grid,
    pub fine: Grid,
    /// Coarse element containing each fine element.
    pub parent_element: Vec<usize>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub coarse_boundary_flags: Vec<bool>,
}

impl MeshHierarchy {
    pub fn new(n_coarse: usize, levels: usize) -> Result<Self> {
        if n_coarse < 2 {
            return Err(Error::InvalidMesh(format!(
                "n_coarse must be at least 2, got {n_coarse}"
            )));
        }
        let ratio = 1usize
            .checked_shl(levels as u32)
            .filter(|r| r.checked_mul(n_coarse).is_some_and(|n| n <= 1 << 15))
            .ok_or_else(|| Error::InvalidMesh(format!("levels {levels} too large")))?;
        let coarse = Grid::new(n_coarse);
        let fine = Grid::new(n_coarse * ratio);

        let mut parent_element = Vec::with_capacity(fine.num_elements());
        for e in 0..fine.num_elements() {
            let (fi, fj, t) = fine.element_square(e);
            let (ci, cj) = (fi / ratio, fj / ratio);
            let (di, dj) = (fi % ratio, fj % ratio);
            let lower = if t == 0 { di >= dj } else { di > dj };
            parent_element.push(coarse.element_id(ci, cj, if lower { 0 } else { 1 }));
        }

        let boundary_edges = fine.boundary_edges();
        let coarse_boundary_flags = (0..coarse.num_nodes())
            .map(|p| coarse.on_boundary(p))
            .collect();
        Ok(Self {
            n_coarse,
            levels,
            coarse,
            fine,
            parent_element,
            boundary_edges,
            coarse_boundary_flags,
        })
    }

    /// Refinement ratio `H / h`.
    pub fn ratio(&self) -> usize {
        1 << self.levels
    }

    pub fn n_fine(&self) -> usize {
        self.fine.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.fine.n as f64
    }

    pub fn coarse_h(&self) -> f64 {
        1.0 / self.n_coarse as f64
    }

    pub fn num_fine_nodes(&self) -> usize {
        self.fine.num_nodes()
    }

    pub fn num_coarse_nodes(&self) -> usize {
        self.coarse.num_nodes()
    }

    /// Fine node coinciding with a coarse node.
    pub fn coarse_to_fine_node(&self, p: usize) -> usize {
        let (cx, cy) = self.coarse.node_coords(p);
        let r = self.ratio();
        self.fine.node_id(cx * r, cy * r)
    }

    /// Fine elements of a coarse element.
    pub fn children(&self, t: usize) -> Vec<usize> {
        let (ci, cj, ct) = self.coarse.element_square(t);
        let r = self.ratio();
        let mut out = Vec::with_capacity(r * r);
        for dj in 0..r {
            for di in 0..r {
                let (fi, fj) = (ci * r + di, cj * r + dj);
                if (ct == 0) == (di >= dj) {
                    out.push(self.fine.element_id(fi, fj, 0));
                }
                if (ct == 0) == (di > dj) {
                    out.push(self.fine.element_id(fi, fj, 1));
                }
            }
        }
        out
    }

    /// Fine nodes in the closure of a coarse element, sorted.
    pub fn fine_nodes_of_coarse(&self, t: usize) -> Vec<usize> {
        let (ci, cj, ct) = self.coarse.element_square(t);
        let r = self.ratio();
        let mut out = Vec::with_capacity((r + 1) * (r + 2) / 2);
        for b in 0..=r {
            for a in 0..=r {
                if (ct == 0 && b <= a) || (ct == 1 && b >= a) {
                    out.push(self.fine.node_id(ci * r + a, cj * r + b));
                }
            }
        }
        out
    }

    /// Fine nodes on the coarse edge between two coarse nodes, in order.
    pub fn fine_nodes_on_coarse_edge(&self, p: usize, q: usize) -> Vec<usize> {
        let (px, py) = self.coarse.node_coords(p);
        let (qx, qy) = self.coarse.node_coords(q);
        let r = self.ratio() as isize;
        let (dx, dy) = (qx as isize - px as isize, qy as isize - py as isize);
        (0..=r)
            .map(|k| {
                let ix = px as isize * r + dx * k;
                let iy = py as isize * r + dy * k;
                self.fine.node_id(ix as usize, iy as usize)
            })
            .collect()
    }

    /// Barycentric weights of every fine node in its parent coarse element:
    /// `(fine node, coarse node, weight)` with zero weights omitted.
    pub fn prolongation_weights(&self) -> Vec<(usize, usize, f64)> {
        let r = self.ratio();
        let nc = self.n_coarse;
        let rf = r as f64;
        let mut out = Vec::with_capacity(3 * self.num_fine_nodes());
        for q in 0..self.num_fine_nodes() {
            let (ix, iy) = self.fine.node_coords(q);
            let ci = (ix / r).min(nc - 1);
            let cj = (iy / r).min(nc - 1);
            let a = ix - ci * r;
            let b = iy - cj * r;
            let (t, lambda) = if b <= a {
                (0, [(r - a) as f64 / rf, (a - b) as f64 / rf, b as f64 / rf])
            } else {
                (1, [(r - b) as f64 / rf, a as f64 / rf, (b - a) as f64 / rf])
            };
            let verts = self.coarse.elements[self.coarse.element_id(ci, cj, t)];
            for (v, w) in verts.into_iter().zip(lambda) {
                if w != 0.0 {
                    out.push((q, v, w));
                }
            }
        }
        out
    }
}
