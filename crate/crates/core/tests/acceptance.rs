use std::io::Write;
use std::time::Instant;

use lodschwarz::harness::validate::{localization_gaps, log_slope, property_suite};
use lodschwarz::harness::{run_with_cache, Length, SetupCache};
use lodschwarz::schwarz::CoarseKind;
use lodschwarz::{ExperimentConfig, LocalKind, Result};

struct Verdict {
    passed: bool,
    detail: String,
}

fn q1(kappa: f64) -> ExperimentConfig {
    ExperimentConfig {
        kappa,
        ..Default::default()
    }
}

fn q2(kappa: f64) -> ExperimentConfig {
    ExperimentConfig {
        kappa,
        local: LocalKind::Impedance,
        subdomain_size: Some(Length::Coarse(4.0)),
        overlap: Length::Coarse(2.0),
        ..Default::default()
    }
}

/// Iteration count, or an error if GMRES did not converge.
fn iterations(cfg: &ExperimentConfig, cache: &mut SetupCache) -> Result<usize> {
    let out = run_with_cache(cfg, cache)?;
    if !out.report.converged {
        return Err(lodschwarz::Error::InvalidConfig(format!(
            "no convergence in {} iterations",
            out.report.iterations
        )));
    }
    Ok(out.report.iterations)
}

fn spread(v: &[usize]) -> usize {
    v.iter().max().unwrap() - v.iter().min().unwrap()
}

fn non_increasing(v: &[usize]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}

fn kappa_robustness() -> Result<Verdict> {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for kappa in [16.0, 32.0, 64.0] {
        let mut cache = SetupCache::new();
        a.push(iterations(&q1(kappa), &mut cache)?);
        b.push(iterations(&q2(kappa), &mut cache)?);
    }
    let ok1 = a.iter().all(|n| (6..=12).contains(n)) && spread(&a) <= 2;
    let ok2 = b.iter().all(|n| (5..=10).contains(n)) && spread(&b) <= 2;
    Ok(Verdict {
        passed: ok1 && ok2,
        detail: format!("kappa 16/32/64: Q1 {a:?}, Q2 {b:?}"),
    })
}

fn h_independence() -> Result<Verdict> {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for level in [8, 9, 10] {
        let h = Length::Absolute(2f64.powi(-level));
        let mut cache = SetupCache::new();
        for (cfg, out) in [(q1(40.0), &mut a), (q2(40.0), &mut b)] {
            let cfg = ExperimentConfig {
                h,
                layers: Some(2),
                ..cfg
            };
            out.push(iterations(&cfg, &mut cache)?);
        }
    }
    Ok(Verdict {
        passed: spread(&a) <= 2 && spread(&b) <= 2,
        detail: format!("kappa 40, m 2, h 2^-8/2^-9/2^-10: Q1 {a:?}, Q2 {b:?}"),
    })
}

fn oversampling() -> Result<Verdict> {
    let mut cache = SetupCache::new();
    let mut passed = true;
    let mut detail = String::from("kappa 64, m 1..4:");
    for (name, base) in [("Q1", q1(64.0)), ("Q2", q2(64.0))] {
        let counts = (1..=4)
            .map(|m| {
                let cfg = ExperimentConfig {
                    layers: Some(m),
                    ..base.clone()
                };
                iterations(&cfg, &mut cache)
            })
            .collect::<Result<Vec<_>>>()?;
        passed &= non_increasing(&counts) && counts[2] == counts[3] && counts[0] > counts[2];
        detail.push_str(&format!(" {name} {counts:?}"));
    }
    Ok(Verdict { passed, detail })
}

fn lod_versus_p1() -> Result<Verdict> {
    let mut cache = SetupCache::new();
    let mut passed = true;
    let mut detail = String::from("kappa 40, m 2, H 1/32:");
    for (name, base) in [("Q1", q1(40.0)), ("Q2", q2(40.0))] {
        let mut counts = [0; 2];
        for (k, coarse) in [CoarseKind::Lod, CoarseKind::P1].into_iter().enumerate() {
            let mut cfg = ExperimentConfig {
                coarse_h: Length::Absolute(1.0 / 32.0),
                layers: Some(2),
                coarse,
                ..base.clone()
            };
            cfg.gmres.max_iters = 500;
            counts[k] = iterations(&cfg, &mut cache)?;
        }
        passed &= 2 * counts[0] <= counts[1];
        detail.push_str(&format!(" {name} LOD {} vs P1 {}", counts[0], counts[1]));
    }
    Ok(Verdict { passed, detail })
}

fn small_overlap() -> Result<Verdict> {
    let mut cache = SetupCache::new();
    let base = ExperimentConfig {
        h: Length::Absolute(2f64.powi(-9)),
        layers: Some(5),
        subdomain_size: None,
        spacing: Some(Length::Coarse(1.0)),
        ..q1(40.0)
    };
    let counts = [
        Length::Coarse(1.0),
        Length::Fine(4.0),
        Length::Fine(2.0),
        Length::Fine(1.0),
    ]
    .into_iter()
    .map(|overlap| {
        let cfg = ExperimentConfig {
            overlap,
            ..base.clone()
        };
        iterations(&cfg, &mut cache)
    })
    .collect::<Result<Vec<_>>>()?;
    let rising = counts.windows(2).all(|w| w[1] >= w[0]);
    Ok(Verdict {
        passed: rising && counts[3] >= counts[0] + 2,
        detail: format!("kappa 40, h 2^-9, delta H/4h/2h/h: Q1 {counts:?}"),
    })
}

fn properties() -> Result<Verdict> {
    let checks = property_suite(true)?;
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} ({:.2e} > {:.0e})", c.name, c.value, c.tolerance))
        .collect();
    Ok(Verdict {
        passed: failed.is_empty(),
        detail: if failed.is_empty() {
            format!("{} checks", checks.len())
        } else {
            format!("failed: {}", failed.join("; "))
        },
    })
}

fn localization() -> Result<Verdict> {
    let layers = [1, 2, 3, 4];
    let gaps = localization_gaps(8, 2, 8.0, (4, 4), &layers)?;
    let x: Vec<f64> = layers.iter().map(|&m| m as f64).collect();
    let slope = log_slope(&x, &gaps);
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    Ok(Verdict {
        passed: decreasing && slope < -0.3,
        detail: format!(
            "gaps {:?}, log slope {slope:.3}",
            gaps.iter().map(|g| format!("{g:.3e}")).collect::<Vec<_>>()
        ),
    })
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Result<Verdict>); 7] = [
        ("kappa robustness", kappa_robustness),
        ("h independence", h_independence),
        ("oversampling", oversampling),
        ("LOD vs P1 coarse", lod_versus_p1),
        ("small overlap", small_overlap),
        ("property suites", properties),
        ("localization", localization),
    ];
    let mut failed = Vec::new();
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = check().unwrap_or_else(|e| Verdict {
            passed: false,
            detail: format!("error: {e}"),
        });
        let line = format!(
            "{} criterion {} ({name}): {} [{:.0} s]",
            if verdict.passed { "PASS" } else { "FAIL" },
            k + 1,
            verdict.detail,
            start.elapsed().as_secs_f64()
        );
        writeln!(std::io::stdout(), "{line}").unwrap();
        if !verdict.passed {
            failed.push(k + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
