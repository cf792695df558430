use std::fmt;
use std::str::FromStr;

use super::{run_with_cache, ExperimentConfig, Length, RunOutcome, SetupCache};
use crate::error::{Error, Result};

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Kappa,
    H,
    M,
    HSub,
    Delta,
    Precond,
    CoarseKind,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 7] = [
        SweepAxis::Kappa,
        SweepAxis::H,
        SweepAxis::M,
        SweepAxis::HSub,
        SweepAxis::Delta,
        SweepAxis::Precond,
        SweepAxis::CoarseKind,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Kappa => "kappa",
            SweepAxis::H => "h",
            SweepAxis::M => "m",
            SweepAxis::HSub => "H_sub",
            SweepAxis::Delta => "delta",
            SweepAxis::Precond => "precond",
            SweepAxis::CoarseKind => "coarse_kind",
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &ExperimentConfig, value: &str) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        let value = value.trim();
        let bad = |what: &str| Error::Parse(format!("invalid {what} `{value}`"));
        match self {
            SweepAxis::Kappa => cfg.kappa = value.parse().map_err(|_| bad("kappa"))?,
            SweepAxis::H => cfg.h = value.parse()?,
            SweepAxis::M => cfg.layers = Some(value.parse().map_err(|_| bad("layer count"))?),
            SweepAxis::HSub => {
                cfg.subdomain_size = Some(value.parse::<Length>()?);
                cfg.spacing = None;
            }
            SweepAxis::Delta => cfg.overlap = value.parse()?,
            SweepAxis::Precond => cfg.local = value.parse()?,
            SweepAxis::CoarseKind => cfg.coarse = value.parse()?,
        }
        Ok(cfg)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let alias = match s {
            "h_sub" | "subdomain_size" => Some(SweepAxis::HSub),
            "layers" => Some(SweepAxis::M),
            "local" => Some(SweepAxis::Precond),
            "coarse" => Some(SweepAxis::CoarseKind),
            _ => None,
        };
        SweepAxis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .or(alias)
            .ok_or_else(|| Error::Parse(format!("unknown sweep axis `{s}`")))
    }
}

/// Runs `base` once per value along `axis`, in order. Setup objects are
/// shared between consecutive rows on the same mesh and wave number; a
/// failing row does not stop the sweep.
pub fn run_sweep(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[String],
) -> Vec<Result<RunOutcome>> {
    let mut cache = SetupCache::new();
    values
        .iter()
        .map(|v| {
            let cfg = axis.apply(base, v)?;
            run_with_cache(&cfg, &mut cache)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schwarz::LocalKind;

    #[test]
    fn axes_parse_and_apply() {
        for a in SweepAxis::ALL {
            assert_eq!(a.name().parse::<SweepAxis>().unwrap(), a);
        }
        assert!("H".parse::<SweepAxis>().is_err());
        assert!("foo".parse::<SweepAxis>().is_err());
        let base = ExperimentConfig::default();
        let cfg = SweepAxis::Precond.apply(&base, "q2").unwrap();
        assert_eq!(cfg.local, LocalKind::Impedance);
        let cfg = SweepAxis::Delta.apply(&base, "4h").unwrap();
        assert_eq!(cfg.overlap, Length::Fine(4.0));
        assert!(SweepAxis::M.apply(&base, "x").is_err());
    }

    #[test]
    fn failing_rows_do_not_stop_the_sweep() {
        let base = ExperimentConfig {
            kappa: 4.0,
            ..Default::default()
        };
        let values: Vec<String> = ["1", "0", "2"].iter().map(|s| s.to_string()).collect();
        let rows = run_sweep(&base, SweepAxis::M, &values);
        assert_eq!(rows.len(), 3);
        assert!(rows[0].is_ok() && rows[2].is_ok());
        assert!(rows[1].is_err());
        assert_eq!(rows[2].as_ref().unwrap().row.m, 2);
    }
}
