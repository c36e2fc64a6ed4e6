//! Seeded regression suite of synthetic bound instances.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_bound, BinarySample, BoundReport, Family, FiniteHypothesisClass};
use crate::error::{FedError, Result};
use crate::rng::{self, SimRng, Stream};

/// One client's training sample plus a large reference sample standing in
/// for its distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub train: BinarySample,
    pub reference: BinarySample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSuiteConfig {
    pub schema_version: u32,
    pub name: String,
    #[serde(default = "defaults::instances")]
    pub instances: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::clients")]
    pub clients: usize,
    /// Training points per client.
    #[serde(default = "defaults::m")]
    pub m: usize,
    /// Reference points per client distribution; the global reference is
    /// their union.
    #[serde(default = "defaults::reference_size")]
    pub reference_size: usize,
    #[serde(default = "defaults::delta")]
    pub delta: f64,
    #[serde(default = "defaults::family")]
    pub family: Family,
    /// Thresholds are an even grid over `[-grid_range, grid_range]`.
    #[serde(default = "defaults::grid_points")]
    pub grid_points: usize,
    #[serde(default = "defaults::grid_range")]
    pub grid_range: f64,
    /// Client means are drawn uniformly from `[-shift, shift]` per axis.
    #[serde(default = "defaults::shift")]
    pub shift: f64,
    #[serde(default = "defaults::label_noise")]
    pub label_noise: f64,
    #[serde(default = "defaults::dir")]
    pub dir: PathBuf,
}

mod defaults {
    use super::*;
    pub fn instances() -> usize {
        100
    }
    pub fn clients() -> usize {
        3
    }
    pub fn m() -> usize {
        200
    }
    pub fn reference_size() -> usize {
        33_334
    }
    pub fn delta() -> f64 {
        0.05
    }
    pub fn family() -> Family {
        Family::Stump2d
    }
    pub fn grid_points() -> usize {
        25
    }
    pub fn grid_range() -> f64 {
        3.0
    }
    pub fn shift() -> f64 {
        1.0
    }
    pub fn label_noise() -> f64 {
        0.1
    }
    pub fn dir() -> PathBuf {
        PathBuf::from("runs")
    }
}

impl BoundSuiteConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| FedError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FedError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(crate::harness::OUTPUT_ROOT_ENV) {
            Some(root) if !root.is_empty() => PathBuf::from(root).join(&self.name),
            _ => self.dir.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |field: &str, msg: &str| Err(FedError::Config(format!("{field}: {msg}")));
        if self.schema_version != crate::harness::SCHEMA_VERSION {
            return err("schema_version", "unsupported version");
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return err("name", "must be a non-empty plain name");
        }
        if self.instances == 0 || self.clients == 0 || self.m == 0 || self.reference_size == 0 {
            return err("instances/clients/m/reference_size", "must be positive");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return err("delta", "must lie in (0, 1)");
        }
        if self.grid_points == 0 || !(self.grid_range > 0.0 && self.grid_range.is_finite()) {
            return err("grid_points/grid_range", "need at least one point on a positive finite range");
        }
        if !(self.shift >= 0.0 && self.shift.is_finite()) {
            return err("shift", "must be finite and non-negative");
        }
        if !(0.0..=0.5).contains(&self.label_noise) {
            return err("label_noise", "must lie in [0, 0.5]");
        }
        Ok(())
    }

    pub fn class(&self) -> Result<FiniteHypothesisClass> {
        let n = self.grid_points;
        let ts: Vec<f64> = (0..n)
            .map(|i| if n == 1 { 0.0 } else { -self.grid_range + 2.0 * self.grid_range * i as f64 / (n - 1) as f64 })
            .collect();
        match self.family {
            Family::Threshold => FiniteHypothesisClass::thresholds(&ts, false),
            Family::SignedThreshold => FiniteHypothesisClass::thresholds(&ts, true),
            Family::Stump2d => FiniteHypothesisClass::stumps(&ts),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundInstance {
    pub class: FiniteHypothesisClass,
    pub global: BinarySample,
    pub domains: Vec<Domain>,
}

/// Client `k` draws `x ~ N(mu_k, I)`; labels follow one shared random
/// linear rule (not in the class) with symmetric label noise.
pub fn generate_instance(cfg: &BoundSuiteConfig, index: u64) -> Result<BoundInstance> {
    let mut rng = rng::stream(cfg.seed, Stream::Bound, index, 0);
    let two_d = cfg.family == Family::Stump2d;
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let w = if two_d { [angle.cos(), angle.sin()] } else { [if angle < std::f64::consts::PI { 1.0 } else { -1.0 }, 0.0] };
    let offset: f64 = rng.random_range(-0.5..0.5);
    let draw = |rng: &mut SimRng, mu: [f64; 2], n: usize| -> Result<BinarySample> {
        let mut points = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let gx: f64 = rng.sample(StandardNormal);
            let gy: f64 = if two_d { rng.sample(StandardNormal) } else { 0.0 };
            let x = [mu[0] + gx, mu[1] + gy];
            let clean = u8::from(w[0] * x[0] + w[1] * x[1] > offset);
            let noisy = rng.random_bool(cfg.label_noise);
            points.push(x);
            labels.push(clean ^ u8::from(noisy));
        }
        BinarySample::new(points, labels)
    };
    let mut domains = Vec::with_capacity(cfg.clients);
    for _ in 0..cfg.clients {
        let mu = [
            rng.random_range(-cfg.shift..=cfg.shift),
            if two_d { rng.random_range(-cfg.shift..=cfg.shift) } else { 0.0 },
        ];
        let train = draw(&mut rng, mu, cfg.m)?;
        let reference = draw(&mut rng, mu, cfg.reference_size)?;
        domains.push(Domain { train, reference });
    }
    let global = BinarySample::concat(&domains.iter().map(|d| &d.reference).collect::<Vec<_>>());
    Ok(BoundInstance { class: cfg.class()?, global, domains })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSuiteReport {
    pub name: String,
    pub instances: usize,
    pub holds_count: usize,
    pub vacuous_count: usize,
    pub all_hold: bool,
    pub min_slack: f64,
    pub reports: Vec<BoundReport>,
}

pub fn run_bound_suite(cfg: &BoundSuiteConfig) -> Result<BoundSuiteReport> {
    cfg.validate()?;
    let reports = (0..cfg.instances as u64)
        .into_par_iter()
        .map(|i| {
            let inst = generate_instance(cfg, i)?;
            check_bound(cfg.clients, cfg.m, cfg.delta, &inst.class, &inst.global, &inst.domains)
        })
        .collect::<Result<Vec<_>>>()?;
    let holds_count = reports.iter().filter(|r| r.holds).count();
    Ok(BoundSuiteReport {
        name: cfg.name.clone(),
        instances: reports.len(),
        holds_count,
        vacuous_count: reports.iter().filter(|r| r.vacuous).count(),
        all_hold: holds_count == reports.len(),
        min_slack: reports.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min),
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BoundSuiteConfig {
        BoundSuiteConfig::from_toml_str("schema_version = 1\nname = \"t\"\ninstances = 4\nreference_size = 2000\n").unwrap()
    }

    #[test]
    fn defaults_and_unknown_fields() {
        let cfg = small();
        assert_eq!((cfg.clients, cfg.m, cfg.delta, cfg.family), (3, 200, 0.05, Family::Stump2d));
        assert!(BoundSuiteConfig::from_toml_str("schema_version = 1\nname = \"t\"\nbogus = 1\n").is_err());
        let e = BoundSuiteConfig::from_toml_str("schema_version = 1\nname = \"t\"\ndelta = 2.0\n").unwrap_err();
        assert!(e.to_string().contains("delta"));
    }

    #[test]
    fn instances_are_deterministic_and_sized() {
        let cfg = small();
        let a = generate_instance(&cfg, 3).unwrap();
        assert_eq!(a, generate_instance(&cfg, 3).unwrap());
        assert_ne!(a, generate_instance(&cfg, 4).unwrap());
        assert_eq!(a.domains.len(), 3);
        assert!(a.domains.iter().all(|d| d.train.len() == 200 && d.reference.len() == 2000));
        assert_eq!(a.global.len(), 6000);
    }

    #[test]
    fn suite_reports_every_instance() {
        let r = run_bound_suite(&small()).unwrap();
        assert_eq!(r.reports.len(), 4);
        assert!(r.all_hold);
        for rep in &r.reports {
            assert!((0.0..=1.0).contains(&rep.lhs) && (0.0..=1.0).contains(&rep.erm_term));
            for t in &rep.discrepancy_terms {
                assert!((0.0..=1.0).contains(&t.half_divergence) && t.lambda >= 0.0);
            }
        }
    }
}
