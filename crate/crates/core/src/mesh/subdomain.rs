use super::{MeshHierarchy, Side};
use crate::error::{Error, Result};

/// Axis-aligned subdomain Ω_ℓ on the fine grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Subdomain {
    /// Closed fine-index ranges `[lo, hi]` in x and y.
    pub x_range: (usize, usize),
    pub y_range: (usize, usize),
    /// Sides of Ω_ℓ lying on Γ, as a [`Side::bit`] mask.
    pub gamma_mask: u8,
    /// Fine nodes of the closed rectangle, row-major.
    pub nodes: Vec<usize>,
    /// χ_ℓ at `nodes`.
    pub weights: Vec<f64>,
    /// Nodes of `nodes` not on ∂Ω_ℓ∖Γ, row-major.
    pub interior: Vec<usize>,
}

impl Subdomain {
    pub fn nx(&self) -> usize {
        self.x_range.1 - self.x_range.0
    }

    pub fn ny(&self) -> usize {
        self.y_range.1 - self.y_range.0
    }

    /// Translation class of the Dirichlet problem.
    pub fn dirichlet_key(&self) -> (usize, usize, u8) {
        (self.nx(), self.ny(), self.gamma_mask)
    }

    /// Translation class of the impedance problem.
    pub fn impedance_key(&self) -> (usize, usize) {
        (self.nx(), self.ny())
    }
}

/// Overlapping subdomains centred on an `s`-lattice with ramps of width δ.
///
/// Along each axis the centres are `c_k = k·s` for `k = 0..=1/s`. The 1D
/// weight of subdomain `k` ramps down linearly on `[r_k, r_k + δ]` with
/// `r_k = c_k + ⌊(s − δ)/2⌋` and up on the neighbouring ramp, so adjacent
/// weights sum to one. Ω_ℓ is the tensor product of the 1D supports and χ_ℓ
/// the tensor product of the 1D weights. With `δ = s` the weights are the hat
/// functions of the `s`-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SubdomainLayout {
    /// Lattice step in fine cells.
    pub spacing: usize,
    /// Overlap δ in fine cells.
    pub overlap: usize,
    pub h: f64,
    pub subdomains: Vec<Subdomain>,
}

struct Interval {
    lo: usize,
    hi: usize,
    weights: Vec<f64>,
}

fn intervals_1d(n: usize, s: usize, d: usize) -> Vec<Interval> {
    let k_max = n / s;
    let ramp = |k: usize| k * s + (s - d) / 2;
    (0..=k_max)
        .map(|k| {
            let lo = if k == 0 { 0 } else { ramp(k - 1) };
            let hi = if k == k_max { n } else { ramp(k) + d };
            let weights = (lo..=hi)
                .map(|x| {
                    if k > 0 && x < ramp(k - 1) + d {
                        (x - ramp(k - 1)) as f64 / d as f64
                    } else if k < k_max && x > ramp(k) {
                        1.0 - (x - ramp(k)) as f64 / d as f64
                    } else {
                        1.0
                    }
                })
                .collect();
            Interval { lo, hi, weights }
        })
        .collect()
}

fn cells(length: f64, h: f64, what: &str) -> Result<usize> {
    let c = length / h;
    let rounded = c.round();
    if rounded < 1.0 || (c - rounded).abs() > 1e-9 * rounded.max(1.0) {
        return Err(Error::InvalidLayout(format!(
            "{what} {length} is not a positive multiple of h = {h}"
        )));
    }
    Ok(rounded as usize)
}

impl SubdomainLayout {
    /// Layout from subdomain size H_sub and overlap δ (lattice step H_sub − δ).
    pub fn from_size(mesh: &MeshHierarchy, h_sub: f64, delta: f64) -> Result<Self> {
        let h = mesh.h();
        let size = cells(h_sub, h, "subdomain size")?;
        let d = cells(delta, h, "overlap")?;
        if d >= size {
            return Err(Error::InvalidLayout(format!(
                "overlap {delta} must be smaller than the subdomain size {h_sub}"
            )));
        }
        Self::new(mesh, size - d, d)
    }

    /// Layout from the lattice step and overlap δ (subdomain size s + δ).
    pub fn from_spacing(mesh: &MeshHierarchy, spacing: f64, delta: f64) -> Result<Self> {
        let h = mesh.h();
        Self::new(
            mesh,
            cells(spacing, h, "spacing")?,
            cells(delta, h, "overlap")?,
        )
    }

    /// Layout with lattice step and overlap given in fine cells.
    pub fn new(mesh: &MeshHierarchy, spacing: usize, overlap: usize) -> Result<Self> {
        let n = mesh.n_fine();
        if overlap == 0 {
            return Err(Error::InvalidLayout("overlap must be at least h".into()));
        }
        if spacing == 0 || n % spacing != 0 {
            return Err(Error::InvalidLayout(format!(
                "spacing of {spacing} fine cells does not divide the {n}-cell grid"
            )));
        }
        if overlap > spacing {
            return Err(Error::InvalidLayout(format!(
                "overlap of {overlap} cells exceeds the spacing of {spacing} cells"
            )));
        }
        let ivs = intervals_1d(n, spacing, overlap);
        let mut subdomains = Vec::with_capacity(ivs.len() * ivs.len());
        for iy in &ivs {
            for ix in &ivs {
                subdomains.push(Self::rectangle(mesh, ix, iy));
            }
        }
        let mut layout = Self {
            spacing,
            overlap,
            h: mesh.h(),
            subdomains,
        };
        layout.renormalize(mesh.num_fine_nodes());
        Ok(layout)
    }

    /// The trivial decomposition {Ω} with χ ≡ 1.
    pub fn whole_domain(mesh: &MeshHierarchy) -> Self {
        let n = mesh.n_fine();
        let iv = Interval {
            lo: 0,
            hi: n,
            weights: vec![1.0; n + 1],
        };
        Self {
            spacing: n,
            overlap: n,
            h: mesh.h(),
            subdomains: vec![Self::rectangle(mesh, &iv, &iv)],
        }
    }

    fn rectangle(mesh: &MeshHierarchy, ix: &Interval, iy: &Interval) -> Subdomain {
        let n = mesh.n_fine();
        let mut gamma_mask = 0;
        if iy.lo == 0 {
            gamma_mask |= Side::Bottom.bit();
        }
        if ix.hi == n {
            gamma_mask |= Side::Right.bit();
        }
        if iy.hi == n {
            gamma_mask |= Side::Top.bit();
        }
        if ix.lo == 0 {
            gamma_mask |= Side::Left.bit();
        }
        let cap = (ix.hi - ix.lo + 1) * (iy.hi - iy.lo + 1);
        let mut nodes = Vec::with_capacity(cap);
        let mut weights = Vec::with_capacity(cap);
        let mut interior = Vec::with_capacity(cap);
        for (b, y) in (iy.lo..=iy.hi).enumerate() {
            for (a, x) in (ix.lo..=ix.hi).enumerate() {
                let id = mesh.fine.node_id(x, y);
                nodes.push(id);
                weights.push(ix.weights[a] * iy.weights[b]);
                let on_cut = (x == ix.lo && x != 0)
                    || (x == ix.hi && x != n)
                    || (y == iy.lo && y != 0)
                    || (y == iy.hi && y != n);
                if !on_cut {
                    interior.push(id);
                }
            }
        }
        Subdomain {
            x_range: (ix.lo, ix.hi),
            y_range: (iy.lo, iy.hi),
            gamma_mask,
            nodes,
            weights,
            interior,
        }
    }

    fn renormalize(&mut self, num_nodes: usize) {
        let sum = self.weight_sum(num_nodes);
        for sd in &mut self.subdomains {
            for (w, &q) in sd.weights.iter_mut().zip(&sd.nodes) {
                *w /= sum[q];
            }
        }
    }

    pub fn len(&self) -> usize {
        self.subdomains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subdomains.is_empty()
    }

    /// Subdomain size H_sub.
    pub fn size(&self) -> f64 {
        (self.spacing + self.overlap) as f64 * self.h
    }

    pub fn delta(&self) -> f64 {
        self.overlap as f64 * self.h
    }

    /// Σ_ℓ χ_ℓ at every fine node.
    pub fn weight_sum(&self, num_nodes: usize) -> Vec<f64> {
        let mut sum = vec![0.0; num_nodes];
        for sd in &self.subdomains {
            for (&w, &q) in sd.weights.iter().zip(&sd.nodes) {
                sum[q] += w;
            }
        }
        sum
    }

    /// Maximum number of local interior dof sets containing a fine node.
    pub fn max_overlap(&self, num_nodes: usize) -> usize {
        let mut count = vec![0usize; num_nodes];
        for sd in &self.subdomains {
            for &q in &sd.interior {
                count[q] += 1;
            }
        }
        count.into_iter().max().unwrap_or(0)
    }

    /// Number of closed subdomains containing each fine node.
    pub fn cover_count(&self, num_nodes: usize) -> Vec<usize> {
        let mut count = vec![0usize; num_nodes];
        for sd in &self.subdomains {
            for &q in &sd.nodes {
                count[q] += 1;
            }
        }
        count
    }
}
