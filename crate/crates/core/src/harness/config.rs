use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::krylov::GmresConfig;
use crate::schwarz::{CoarseKind, LocalKind};

/// A length in a configuration: derived from κ, absolute, or a multiple of
/// the fine (`4h`) or coarse (`2H`) mesh size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Length {
    Auto,
    Absolute(f64),
    Fine(f64),
    Coarse(f64),
}

impl fmt::Display for Length {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Length::Auto => write!(f, "auto"),
            Length::Absolute(v) => write!(f, "{v}"),
            Length::Fine(c) => write!(f, "{c}h"),
            Length::Coarse(c) => write!(f, "{c}H"),
        }
    }
}

fn parse_number(s: &str) -> Result<f64> {
    let bad = || Error::Parse(format!("invalid length `{s}`"));
    let v = match s.split_once('/') {
        Some((a, b)) => {
            a.trim().parse::<f64>().map_err(|_| bad())?
                / b.trim().parse::<f64>().map_err(|_| bad())?
        }
        None => s.parse::<f64>().map_err(|_| bad())?,
    };
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(bad())
    }
}

impl FromStr for Length {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Length::Auto);
        }
        let factor = |body: &str| {
            if body.is_empty() {
                Ok(1.0)
            } else {
                parse_number(body.trim())
            }
        };
        if let Some(body) = s.strip_suffix('H') {
            return Ok(Length::Coarse(factor(body)?));
        }
        if let Some(body) = s.strip_suffix('h') {
            return Ok(Length::Fine(factor(body)?));
        }
        Ok(Length::Absolute(parse_number(s)?))
    }
}

impl Serialize for Length {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Length::Absolute(v) => s.serialize_f64(*v),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for Length {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) if v > 0.0 && v.is_finite() => Ok(Length::Absolute(v)),
            Raw::Num(v) => Err(serde::de::Error::custom(format!(
                "length must be positive, got {v}"
            ))),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// One experiment: problem, discretization, preconditioner and solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kappa: f64,
    /// Fine mesh size; `auto` is `2^−⌈1.5·log₂κ⌉`.
    pub h: Length,
    /// Coarse mesh size; `auto` is `2^−⌈log₂κ⌉`.
    pub coarse_h: Length,
    /// Oversampling layers; `None` is `round(log₂κ − 1)`.
    pub layers: Option<usize>,
    /// Subdomain size H_sub. Exclusive with `spacing`.
    pub subdomain_size: Option<Length>,
    /// Lattice step of the subdomain centres. Exclusive with `subdomain_size`.
    pub spacing: Option<Length>,
    pub overlap: Length,
    pub local: LocalKind,
    pub coarse: CoarseKind,
    pub gmres: GmresConfig,
    pub direction: [f64; 2],
    pub quadrature_points: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let d = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            kappa: 16.0,
            h: Length::Auto,
            coarse_h: Length::Auto,
            layers: None,
            subdomain_size: Some(Length::Coarse(2.0)),
            spacing: None,
            overlap: Length::Coarse(1.0),
            local: LocalKind::Dirichlet,
            coarse: CoarseKind::Lod,
            gmres: GmresConfig::default(),
            direction: [d, d],
            quadrature_points: 4,
        }
    }
}

/// Smallest `k` with `2^−k ≤ v`.
fn dyadic_exponent(v: f64) -> i32 {
    (-v.log2() - 1e-9).ceil() as i32
}

/// `v` snapped down to a power of two.
pub fn snap_dyadic(v: f64) -> f64 {
    2f64.powi(-dyadic_exponent(v))
}

/// Everything a run needs, in mesh units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub kappa: f64,
    pub n_coarse: usize,
    pub levels: usize,
    pub layers: usize,
    /// Subdomain lattice step in fine cells.
    pub spacing: usize,
    /// Overlap in fine cells.
    pub overlap: usize,
    pub local: LocalKind,
    pub coarse: CoarseKind,
    pub gmres: GmresConfig,
    pub direction: [f64; 2],
    pub quadrature_points: usize,
}

impl ResolvedConfig {
    pub fn n_fine(&self) -> usize {
        self.n_coarse << self.levels
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n_fine() as f64
    }

    pub fn coarse_h(&self) -> f64 {
        1.0 / self.n_coarse as f64
    }

    pub fn subdomain_size(&self) -> f64 {
        (self.spacing + self.overlap) as f64 * self.h()
    }

    pub fn delta(&self) -> f64 {
        self.overlap as f64 * self.h()
    }
}

/// Default number of oversampling layers for a wave number.
pub fn default_layers(kappa: f64) -> usize {
    ((kappa.log2() - 1.0).round().max(1.0)) as usize
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let k = self.kappa;
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "kappa must be positive, got {k}"
            )));
        }
        let fine_exp = match self.h {
            Length::Auto => ((1.5 * k.log2()) - 1e-9).ceil().max(1.0) as i32,
            Length::Absolute(v) => dyadic_exponent(v),
            other => {
                return Err(Error::InvalidConfig(format!(
                    "h cannot be given as `{other}`"
                )))
            }
        };
        let h = 2f64.powi(-fine_exp);
        if let Length::Absolute(v) = self.h {
            if v != h {
                log::info!("h = {v} snapped to {h}");
            }
        }
        let coarse_exp = match self.coarse_h {
            Length::Auto => (k.log2() - 1e-9).ceil().max(1.0) as i32,
            Length::Absolute(v) => dyadic_exponent(v),
            Length::Fine(c) => dyadic_exponent(c * h),
            Length::Coarse(_) => {
                return Err(Error::InvalidConfig(
                    "coarse_h cannot refer to itself".into(),
                ))
            }
        };
        if let Length::Absolute(v) = self.coarse_h {
            let snapped = 2f64.powi(-coarse_exp);
            if v != snapped {
                log::info!("H = {v} snapped to {snapped}");
            }
        }
        if coarse_exp < 1 {
            return Err(Error::InvalidConfig(
                "coarse mesh size must be at most 1/2".into(),
            ));
        }
        if coarse_exp > fine_exp {
            return Err(Error::InvalidConfig(format!(
                "coarse mesh size 2^-{coarse_exp} is finer than h = 2^-{fine_exp}"
            )));
        }
        if k * h > 1.0 {
            return Err(Error::InvalidConfig(format!(
                "kappa·h = {} exceeds 1",
                k * h
            )));
        }
        let n_coarse = 1usize << coarse_exp;
        let levels = (fine_exp - coarse_exp) as usize;
        let ratio = 1usize << levels;

        let cells = |len: Length, what: &str| -> Result<usize> {
            let c = match len {
                Length::Auto => {
                    return Err(Error::InvalidConfig(format!("{what} cannot be `auto`")))
                }
                Length::Absolute(v) => v / h,
                Length::Fine(c) => c,
                Length::Coarse(c) => c * ratio as f64,
            };
            let r = c.round();
            if r < 1.0 || (c - r).abs() > 1e-9 * r.max(1.0) {
                return Err(Error::InvalidConfig(format!(
                    "{what} `{len}` is not a positive multiple of h"
                )));
            }
            Ok(r as usize)
        };
        let overlap = cells(self.overlap, "overlap")?;
        let spacing = match (self.subdomain_size, self.spacing) {
            (Some(size), None) => {
                let size = cells(size, "subdomain size")?;
                if size <= overlap {
                    return Err(Error::InvalidConfig(
                        "subdomain size must exceed the overlap".into(),
                    ));
                }
                size - overlap
            }
            (None, Some(s)) => cells(s, "spacing")?,
            (Some(_), Some(_)) => {
                return Err(Error::InvalidConfig(
                    "set either subdomain_size or spacing, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::InvalidConfig(
                    "subdomain_size or spacing is required".into(),
                ))
            }
        };
        let layers = self.layers.unwrap_or_else(|| default_layers(k));
        if layers == 0 {
            return Err(Error::InvalidConfig("layers must be at least 1".into()));
        }
        let norm = (self.direction[0].powi(2) + self.direction[1].powi(2)).sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "wave direction must have unit length, got {norm}"
            )));
        }
        if self.quadrature_points == 0 {
            return Err(Error::InvalidConfig(
                "quadrature_points must be at least 1".into(),
            ));
        }
        self.gmres.validate()?;
        Ok(ResolvedConfig {
            kappa: k,
            n_coarse,
            levels,
            layers,
            spacing,
            overlap,
            local: self.local,
            coarse: self.coarse,
            gmres: self.gmres.clone(),
            direction: self.direction,
            quadrature_points: self.quadrature_points,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auto_rules_follow_the_wave_number() {
        for (k, fine, coarse, m) in [
            (16.0, 64, 16, 3),
            (32.0, 256, 32, 4),
            (64.0, 512, 64, 5),
            (40.0, 256, 64, 4),
        ] {
            let cfg = ExperimentConfig {
                kappa: k,
                ..Default::default()
            };
            let r = cfg.resolve().unwrap();
            assert_eq!(r.n_fine(), fine, "kappa {k}");
            assert_eq!(r.n_coarse, coarse, "kappa {k}");
            assert_eq!(r.layers, m, "kappa {k}");
            assert_eq!(r.spacing, r.overlap);
        }
        assert_eq!(default_layers(500.0), 8);
    }

    #[test]
    fn lengths_parse() {
        assert_eq!("auto".parse::<Length>().unwrap(), Length::Auto);
        assert_eq!("2H".parse::<Length>().unwrap(), Length::Coarse(2.0));
        assert_eq!("H".parse::<Length>().unwrap(), Length::Coarse(1.0));
        assert_eq!("4h".parse::<Length>().unwrap(), Length::Fine(4.0));
        assert_eq!(
            "1/64".parse::<Length>().unwrap(),
            Length::Absolute(1.0 / 64.0)
        );
        assert!("-1".parse::<Length>().is_err());
        assert!("xH".parse::<Length>().is_err());
    }

    #[test]
    fn snapping_is_idempotent() {
        for v in [0.3, 1.0 / 64.0, 0.01, 0.125] {
            let s = snap_dyadic(v);
            assert!(s <= v);
            assert_eq!(snap_dyadic(s), s);
        }
    }

    #[test]
    fn toml_roundtrip_and_validation() {
        let text = r#"
            kappa = 40
            h = 0.00390625
            coarse_h = "auto"
            layers = 2
            subdomain_size = "4H"
            overlap = "2H"
            local = "impedance"
            coarse = "p1"

            [gmres]
            max_iters = 80
        "#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.local, LocalKind::Impedance);
        assert_eq!(cfg.gmres.max_iters, 80);
        assert_eq!(cfg.gmres.rel_tol, 1e-6);
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        let r = cfg.resolve().unwrap();
        assert_eq!((r.n_coarse, r.levels, r.spacing, r.overlap), (64, 2, 8, 8));

        assert!(ExperimentConfig::from_toml("kappa = 4\nbogus = 1").is_err());
        let both = ExperimentConfig {
            spacing: Some(Length::Coarse(1.0)),
            ..Default::default()
        };
        assert!(both.resolve().is_err());
        let tiny = ExperimentConfig {
            overlap: Length::Fine(0.5),
            ..Default::default()
        };
        assert!(tiny.resolve().is_err());
        let coarse_h = ExperimentConfig {
            kappa: 16.0,
            h: Length::Absolute(1.0 / 8.0),
            coarse_h: Length::Absolute(1.0 / 16.0),
            ..Default::default()
        };
        assert!(coarse_h.resolve().is_err());
    }
}
