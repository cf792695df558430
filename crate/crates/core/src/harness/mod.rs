//! Experiment configuration, single runs, parameter sweeps and the property
//! suites used by `validate`.

mod config;
mod sweep;
pub mod validate;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_load, GlobalOperators};
use crate::error::{Error, Result};
use crate::krylov::{gmres, Identity, LinearOperator, SolveReport};
use crate::lod::CoarseSpace;
use crate::mesh::{MeshHierarchy, SubdomainLayout};
use crate::schwarz::{CoarseKind, LocalKind, LocalSolvers, Preconditioner};
use crate::sparse::Cholesky;
use crate::transfer::TransferOperators;
use crate::C64;

pub use config::{default_layers, snap_dyadic, ExperimentConfig, Length, ResolvedConfig};
pub use sweep::{run_sweep, SweepAxis};

/// Deterministic vector with entries uniform in the unit square of ℂ
/// centred at the origin.
pub fn random_vector(n: usize, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

/// Plane wave `u(x) = exp(iκ d·x)` and its impedance datum
/// `g = ∂u/∂n − iκu = iκ(d·n − 1)u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneWave {
    pub kappa: f64,
    pub direction: [f64; 2],
}

impl PlaneWave {
    pub fn new(kappa: f64, direction: [f64; 2]) -> Result<Self> {
        let norm = direction[0].hypot(direction[1]);
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "wave direction must have unit length, got {norm}"
            )));
        }
        Ok(Self { kappa, direction })
    }

    pub fn value(&self, x: [f64; 2]) -> C64 {
        let phase = self.kappa * (self.direction[0] * x[0] + self.direction[1] * x[1]);
        C64::from_polar(1.0, phase)
    }

    pub fn impedance_data(&self, x: [f64; 2], normal: [f64; 2]) -> C64 {
        let dn = self.direction[0] * normal[0] + self.direction[1] * normal[1];
        C64::new(0.0, self.kappa * (dn - 1.0)) * self.value(x)
    }

    /// Nodal values on the fine mesh.
    pub fn interpolate(&self, mesh: &MeshHierarchy) -> Vec<C64> {
        mesh.fine.nodes.iter().map(|&x| self.value(x)).collect()
    }

    /// Load vector `∫_Γ g φ_q ds`.
    pub fn load(&self, mesh: &MeshHierarchy, points: usize) -> Vec<C64> {
        assemble_load(mesh, |x, n| self.impedance_data(x, n), points)
    }
}

/// One line of a result table. `iterations` is −1 when GMRES did not reach
/// the tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub kappa: f64,
    pub h: f64,
    pub coarse_h: f64,
    pub m: usize,
    pub h_sub: f64,
    pub delta: f64,
    pub precond: String,
    pub coarse_kind: String,
    pub dofs: usize,
    pub iterations: i64,
    pub final_residual: f64,
    pub true_residual: f64,
    pub setup_time_s: f64,
    pub solve_time_s: f64,
}

/// Result of one run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config: ResolvedConfig,
    pub row: ResultRow,
    pub report: SolveReport,
    pub solution: Vec<C64>,
}

type MeshKey = (usize, usize);
type ProblemKey = (usize, usize, u64);

/// Setup objects shared between runs on the same mesh and wave number.
/// Switching to another mesh or wave number drops everything held.
#[derive(Default)]
pub struct SetupCache {
    problem: Option<ProblemKey>,
    mesh: Option<Arc<MeshHierarchy>>,
    global: Option<Arc<GlobalOperators>>,
    transfer: Option<Arc<TransferOperators>>,
    gram: Option<Arc<Cholesky>>,
    coarse: HashMap<(CoarseKind, usize), Arc<CoarseSpace>>,
    layouts: HashMap<(usize, usize), Arc<SubdomainLayout>>,
    locals: HashMap<(usize, usize, LocalKind), LocalSolvers>,
}

impl std::fmt::Debug for SetupCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SetupCache")
            .field("problem", &self.problem)
            .field("coarse", &self.coarse.keys().collect::<Vec<_>>())
            .field("layouts", &self.layouts.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl SetupCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn select(&mut self, n_coarse: usize, levels: usize, kappa: f64) {
        let key = (n_coarse, levels, kappa.to_bits());
        if self.problem != Some(key) {
            let keep_mesh = self.problem.map(|(a, b, _)| (a, b)) == Some((n_coarse, levels));
            let mesh = if keep_mesh { self.mesh.take() } else { None };
            let layouts = if keep_mesh {
                std::mem::take(&mut self.layouts)
            } else {
                HashMap::new()
            };
            *self = Self {
                problem: Some(key),
                mesh,
                layouts,
                ..Self::default()
            };
        }
    }

    pub fn mesh(&mut self, key: MeshKey) -> Result<Arc<MeshHierarchy>> {
        if let Some(m) = &self.mesh {
            if (m.n_coarse, m.levels) == key {
                return Ok(m.clone());
            }
        }
        let m = Arc::new(MeshHierarchy::new(key.0, key.1).map_err(Error::at("mesh"))?);
        self.mesh = Some(m.clone());
        Ok(m)
    }

    pub fn global(&mut self, mesh: &MeshHierarchy, kappa: f64) -> Arc<GlobalOperators> {
        if let Some(g) = &self.global {
            if g.kappa == kappa && g.dim() == mesh.num_fine_nodes() {
                return g.clone();
            }
        }
        let g = Arc::new(GlobalOperators::assemble(mesh, kappa));
        self.global = Some(g.clone());
        g
    }

    fn transfer(
        &mut self,
        mesh: &MeshHierarchy,
        global: &GlobalOperators,
    ) -> Result<Arc<TransferOperators>> {
        if let Some(t) = &self.transfer {
            return Ok(t.clone());
        }
        let t = Arc::new(TransferOperators::new(mesh, global).map_err(Error::at("transfer"))?);
        self.transfer = Some(t.clone());
        Ok(t)
    }

    fn gram(&mut self, global: &GlobalOperators) -> Result<Arc<Cholesky>> {
        if let Some(g) = &self.gram {
            return Ok(g.clone());
        }
        let g = Arc::new(
            Cholesky::factor(&global.g, "energy Gram matrix")
                .map_err(Error::at("preconditioner"))?,
        );
        self.gram = Some(g.clone());
        Ok(g)
    }

    fn coarse(
        &mut self,
        mesh: &MeshHierarchy,
        global: &GlobalOperators,
        kind: CoarseKind,
        layers: usize,
    ) -> Result<Option<Arc<CoarseSpace>>> {
        let key = match kind {
            CoarseKind::None => return Ok(None),
            CoarseKind::P1 => (kind, 0),
            CoarseKind::Lod => (kind, layers),
        };
        if let Some(c) = self.coarse.get(&key) {
            return Ok(Some(c.clone()));
        }
        let transfer = self.transfer(mesh, global)?;
        let space = match kind {
            CoarseKind::Lod => CoarseSpace::lod(mesh, global, &transfer, layers),
            _ => CoarseSpace::p1(mesh, global, &transfer),
        }
        .map_err(Error::at("coarse space"))?;
        let space = Arc::new(space);
        self.coarse.insert(key, space.clone());
        Ok(Some(space))
    }

    fn local(
        &mut self,
        mesh: &MeshHierarchy,
        global: &GlobalOperators,
        kind: LocalKind,
        spacing: usize,
        overlap: usize,
    ) -> Result<Option<LocalSolvers>> {
        let Some(problem) = kind.problem() else {
            return Ok(None);
        };
        if let Some(l) = self.locals.get(&(spacing, overlap, kind)) {
            return Ok(Some(l.clone()));
        }
        let layout = match self.layouts.get(&(spacing, overlap)) {
            Some(l) => l.clone(),
            None => {
                let l = Arc::new(
                    SubdomainLayout::new(mesh, spacing, overlap)
                        .map_err(Error::at("subdomains"))?,
                );
                self.layouts.insert((spacing, overlap), l.clone());
                l
            }
        };
        let solvers =
            LocalSolvers::new(layout, global, problem).map_err(Error::at("local solvers"))?;
        self.locals
            .insert((spacing, overlap, kind), solvers.clone());
        Ok(Some(solvers))
    }

    /// Preconditioner for a resolved configuration, reusing cached parts.
    pub fn preconditioner(
        &mut self,
        cfg: &ResolvedConfig,
    ) -> Result<(Arc<MeshHierarchy>, Preconditioner)> {
        self.select(cfg.n_coarse, cfg.levels, cfg.kappa);
        let mesh = self.mesh((cfg.n_coarse, cfg.levels))?;
        let global = self.global(&mesh, cfg.kappa);
        let coarse = self.coarse(&mesh, &global, cfg.coarse, cfg.layers)?;
        let local = self.local(&mesh, &global, cfg.local, cfg.spacing, cfg.overlap)?;
        let gram = if coarse.is_some() {
            Some(self.gram(&global)?)
        } else {
            None
        };
        let pre = Preconditioner::new(global, coarse, local, gram)
            .map_err(Error::at("preconditioner"))?;
        Ok((mesh, pre))
    }
}

/// Runs one configuration from scratch.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    run_with_cache(cfg, &mut SetupCache::new())
}

/// Runs one configuration, reusing setup objects from `cache`. A run where
/// GMRES stops at `max_iters` is returned with `iterations = −1`.
pub fn run_with_cache(cfg: &ExperimentConfig, cache: &mut SetupCache) -> Result<RunOutcome> {
    let resolved = cfg.resolve().map_err(Error::at("configuration"))?;
    let wave = PlaneWave::new(resolved.kappa, resolved.direction)?;
    let setup = Instant::now();
    let (mesh, pre) = cache.preconditioner(&resolved)?;
    let setup_time = setup.elapsed().as_secs_f64();
    let b = wave.load(&mesh, resolved.quadrature_points);
    let global = pre.global();
    let solved = if resolved.local == LocalKind::None && resolved.coarse == CoarseKind::None {
        gmres(&global.a, &Identity(global.dim()), &b, &resolved.gmres)
    } else {
        gmres(&global.a, &pre as &dyn LinearOperator, &b, &resolved.gmres)
    };
    let (solution, mut report, converged) = match solved {
        Ok((x, r)) => (x, r, true),
        Err(Error::NotConverged { report }) => (Vec::new(), *report, false),
        Err(e) => return Err(Error::at("gmres")(e)),
    };
    report.setup_time_s = setup_time;
    let row = ResultRow {
        kappa: resolved.kappa,
        h: resolved.h(),
        coarse_h: resolved.coarse_h(),
        m: if resolved.coarse == CoarseKind::Lod {
            resolved.layers
        } else {
            0
        },
        h_sub: resolved.subdomain_size(),
        delta: resolved.delta(),
        precond: resolved.local.label().to_string(),
        coarse_kind: resolved.coarse.label().to_string(),
        dofs: global.dim(),
        iterations: if converged {
            report.iterations as i64
        } else {
            -1
        },
        final_residual: report.final_residual,
        true_residual: report.true_residual,
        setup_time_s: report.setup_time_s,
        solve_time_s: report.solve_time_s,
    };
    log::info!(
        "kappa={} h={} H={} m={} local={} coarse={} iterations={}",
        row.kappa,
        row.h,
        row.coarse_h,
        row.m,
        row.precond,
        row.coarse_kind,
        row.iterations
    );
    Ok(RunOutcome {
        config: resolved,
        row,
        report,
        solution,
    })
}
