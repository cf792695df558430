use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use lodschwarz::harness::{random_vector, run_with_cache, SetupCache};
use lodschwarz::{
    CoarseSpace, ExperimentConfig, GlobalOperators, LinearOperator, LocalKind, MeshHierarchy,
    TransferOperators,
};

const KAPPA: f64 = 16.0;

fn config(local: LocalKind) -> ExperimentConfig {
    ExperimentConfig {
        kappa: KAPPA,
        local,
        ..Default::default()
    }
}

fn mesh() -> MeshHierarchy {
    let cfg = config(LocalKind::Dirichlet).resolve().unwrap();
    MeshHierarchy::new(cfg.n_coarse, cfg.levels).unwrap()
}

fn assembly(c: &mut Criterion) {
    let mesh = mesh();
    c.bench_function("assemble_helmholtz", |b| {
        b.iter(|| GlobalOperators::assemble(black_box(&mesh), KAPPA))
    });
}

fn lod_basis(c: &mut Criterion) {
    let mesh = mesh();
    let global = GlobalOperators::assemble(&mesh, KAPPA);
    let transfer = TransferOperators::new(&mesh, &global).unwrap();
    let mut group = c.benchmark_group("lod_basis");
    group.sample_size(10);
    group.bench_function("classes", |b| {
        b.iter(|| CoarseSpace::lod(&mesh, &global, &transfer, 3).unwrap())
    });
    group.bench_function("per_element", |b| {
        b.iter(|| CoarseSpace::lod_uncached(&mesh, &global, &transfer, 3).unwrap())
    });
    group.finish();
}

fn preconditioner_apply(c: &mut Criterion) {
    let mut cache = SetupCache::new();
    for local in [LocalKind::Dirichlet, LocalKind::Impedance] {
        let cfg = config(local).resolve().unwrap();
        let (_, pre) = cache.preconditioner(&cfg).unwrap();
        let x = random_vector(pre.dim(), 1);
        let mut y = vec![Default::default(); x.len()];
        c.bench_function(&format!("apply_{}", local.label()), |b| {
            b.iter(|| pre.apply(black_box(&x), &mut y))
        });
    }
}

fn solve(c: &mut Criterion) {
    let cfg = config(LocalKind::Dirichlet);
    let mut cache = SetupCache::new();
    run_with_cache(&cfg, &mut cache).unwrap();
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    group.bench_function("gmres_cached_setup", |b| {
        b.iter(|| run_with_cache(&cfg, &mut cache).unwrap())
    });
    group.finish();
}

criterion_group!(benches, assembly, lod_basis, preconditioner_apply, solve);
criterion_main!(benches);
