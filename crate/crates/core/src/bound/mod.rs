//! Brute-force terms of the ensemble risk bound over finite hypothesis
//! classes of binary classifiers on 1-D or 2-D inputs.
//!
//! Population risks are approximated by large fixed reference samples;
//! every quantity here is an exact computation on the samples it is given.

mod suite;

pub use suite::{generate_instance, run_bound_suite, BoundInstance, BoundSuiteConfig, BoundSuiteReport, Domain};

use serde::{Deserialize, Serialize};

use crate::error::{FedError, Result};

/// Binary-labeled points in the plane; 1-D data uses only `x[0]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BinarySample {
    pub points: Vec<[f64; 2]>,
    pub labels: Vec<u8>,
}

impl BinarySample {
    pub fn new(points: Vec<[f64; 2]>, labels: Vec<u8>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(FedError::Shape(format!("{} points but {} labels", points.len(), labels.len())));
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(FedError::Precondition("labels must be binary".into()));
        }
        Ok(Self { points, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn concat(parts: &[&BinarySample]) -> Self {
        let mut out = Self::default();
        for p in parts {
            out.points.extend_from_slice(&p.points);
            out.labels.extend_from_slice(&p.labels);
        }
        out
    }
}

/// A single binary classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Hypothesis {
    Constant(u8),
    /// Predicts `1` iff `x[feature] > t`, inverted when `flip` is set.
    Stump { feature: usize, t: f64, flip: bool },
}

impl Hypothesis {
    pub fn predict(&self, x: &[f64; 2]) -> u8 {
        match *self {
            Hypothesis::Constant(c) => c,
            Hypothesis::Stump { feature, t, flip } => u8::from((x[feature] > t) != flip),
        }
    }
}

/// Hypothesis families with a known VC dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `1[x > t]` on the line: VC dimension 1.
    Threshold,
    /// Thresholds of both orientations: VC dimension 2.
    SignedThreshold,
    /// Axis-aligned stumps of both orientations in the plane: VC dimension 3
    /// (three points in general position are shattered; on four points each
    /// axis realizes at most 8 labelings, 14 in total).
    Stump2d,
}

impl Family {
    pub fn vc_dim(self) -> usize {
        match self {
            Family::Threshold => 1,
            Family::SignedThreshold => 2,
            Family::Stump2d => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteHypothesisClass {
    family: Family,
    hypotheses: Vec<Hypothesis>,
}

impl FiniteHypothesisClass {
    /// Any finite subset of a family inherits the family's VC bound.
    pub fn new(family: Family, hypotheses: Vec<Hypothesis>) -> Result<Self> {
        if hypotheses.is_empty() {
            return Err(FedError::Precondition("hypothesis class is empty".into()));
        }
        let ok = hypotheses.iter().all(|h| match (family, *h) {
            (_, Hypothesis::Constant(c)) => c <= 1,
            (Family::Threshold, Hypothesis::Stump { feature, t, flip }) => feature == 0 && !flip && t.is_finite(),
            (Family::SignedThreshold, Hypothesis::Stump { feature, t, .. }) => feature == 0 && t.is_finite(),
            (Family::Stump2d, Hypothesis::Stump { feature, t, .. }) => feature < 2 && t.is_finite(),
        });
        if !ok {
            return Err(FedError::Precondition(format!("hypothesis outside family {family:?}")));
        }
        Ok(Self { family, hypotheses })
    }

    pub fn thresholds(ts: &[f64], signed: bool) -> Result<Self> {
        let family = if signed { Family::SignedThreshold } else { Family::Threshold };
        let flips: &[bool] = if signed { &[false, true] } else { &[false] };
        let hyps = ts
            .iter()
            .flat_map(|&t| flips.iter().map(move |&flip| Hypothesis::Stump { feature: 0, t, flip }))
            .collect();
        Self::new(family, hyps)
    }

    pub fn stumps(ts: &[f64]) -> Result<Self> {
        let hyps = (0..2)
            .flat_map(|feature| {
                ts.iter()
                    .flat_map(move |&t| [false, true].map(|flip| Hypothesis::Stump { feature, t, flip }))
            })
            .collect();
        Self::new(Family::Stump2d, hyps)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn vc_dim(&self) -> usize {
        self.family.vc_dim()
    }

    pub fn hypotheses(&self) -> &[Hypothesis] {
        &self.hypotheses
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    /// First hypothesis of minimal empirical risk.
    pub fn erm(&self, sample: &BinarySample) -> Hypothesis {
        let mut best = (f64::INFINITY, self.hypotheses[0]);
        for h in &self.hypotheses {
            let r = empirical_risk(h, sample);
            if r < best.0 {
                best = (r, *h);
            }
        }
        best.1
    }
}

/// Mean absolute (0-1) loss. An empty sample has risk 0.
pub fn empirical_risk(h: &Hypothesis, sample: &BinarySample) -> f64 {
    if sample.is_empty() {
        return 0.0;
    }
    let wrong = sample.points.iter().zip(&sample.labels).filter(|(x, &y)| h.predict(x) != y).count();
    wrong as f64 / sample.len() as f64
}

/// Risk of the averaged hypothesis `x -> mean_k h_k(x)` under `|ŷ - y|`.
pub fn ensemble_risk(hyps: &[Hypothesis], sample: &BinarySample) -> Result<f64> {
    if hyps.is_empty() {
        return Err(FedError::Precondition("ensemble needs at least one hypothesis".into()));
    }
    if sample.is_empty() {
        return Ok(0.0);
    }
    let k = hyps.len() as f64;
    let total: f64 = sample
        .points
        .iter()
        .zip(&sample.labels)
        .map(|(x, &y)| {
            let votes = hyps.iter().filter(|h| h.predict(x) == 1).count() as f64;
            (votes / k - f64::from(y)).abs()
        })
        .sum();
    Ok(total / sample.len() as f64)
}

/// Predictions of one hypothesis on a sample, packed 64 per word.
fn prediction_bits(h: &Hypothesis, sample: &BinarySample) -> Vec<u64> {
    let mut bits = vec![0u64; sample.len().div_ceil(64)];
    for (i, x) in sample.points.iter().enumerate() {
        if h.predict(x) == 1 {
            bits[i / 64] |= 1 << (i % 64);
        }
    }
    bits
}

fn disagreement(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// `2 · max_{h,h'} |Pr_A[h ≠ h'] − Pr_B[h ≠ h']|`, exhaustive over pairs.
pub fn h_delta_h_divergence(a: &BinarySample, b: &BinarySample, class: &FiniteHypothesisClass) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(FedError::EmptyDataset("divergence needs two nonempty samples".into()));
    }
    let bits_a: Vec<_> = class.hypotheses.iter().map(|h| prediction_bits(h, a)).collect();
    let bits_b: Vec<_> = class.hypotheses.iter().map(|h| prediction_bits(h, b)).collect();
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut best = 0.0f64;
    // Disagreement is symmetric in (h, h'), so unordered pairs cover all ordered ones.
    for i in 0..bits_a.len() {
        for j in i + 1..bits_a.len() {
            let pa = f64::from(disagreement(&bits_a[i], &bits_a[j])) / na;
            let pb = f64::from(disagreement(&bits_b[i], &bits_b[j])) / nb;
            best = best.max((pa - pb).abs());
        }
    }
    Ok(2.0 * best)
}

/// `min_h (risk_global(h) + risk_local(h))`.
pub fn lambda_k(class: &FiniteHypothesisClass, global: &BinarySample, local: &BinarySample) -> f64 {
    class
        .hypotheses
        .iter()
        .map(|h| empirical_risk(h, global) + empirical_risk(h, local))
        .fold(f64::INFINITY, f64::min)
}

/// Sauer bound `Σ_{i ≤ d} C(n, i)` on the growth function.
pub fn sauer_bound(n: usize, d: usize) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for i in 1..=d.min(n) {
        term *= (n + 1 - i) as f64 / i as f64;
        sum += term;
    }
    sum
}

/// `(4 + sqrt(ln τ(2m))) / (δ/K · sqrt(2m))`.
pub fn complexity_term(k: usize, m: usize, delta: f64, vc_dim: usize) -> f64 {
    let two_m = 2 * m;
    (4.0 + sauer_bound(two_m, vc_dim).ln().sqrt()) / (delta / k as f64 * (two_m as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyTerm {
    pub half_divergence: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// Risk of the averaged local ERMs on the global reference sample.
    pub lhs: f64,
    /// Training risk of the ERM on the pooled local samples.
    pub erm_term: f64,
    pub complexity_term: f64,
    pub discrepancy_terms: Vec<DiscrepancyTerm>,
    pub rhs: f64,
    pub holds: bool,
    pub slack: f64,
    /// `rhs > 1`: the inequality is trivially true for risks in `[0, 1]`.
    pub vacuous: bool,
}

/// Evaluate every term of the bound.
///
/// `domains[k].train` is client `k`'s training sample (all of size `m`);
/// `domains[k].reference` and `global` stand in for the local and global
/// distributions.
pub fn check_bound(
    k: usize,
    m: usize,
    delta: f64,
    class: &FiniteHypothesisClass,
    global: &BinarySample,
    domains: &[Domain],
) -> Result<BoundReport> {
    if k == 0 || domains.len() != k {
        return Err(FedError::Precondition(format!("expected K = {k} >= 1 domains, got {}", domains.len())));
    }
    if m == 0 || domains.iter().any(|d| d.train.len() != m) {
        return Err(FedError::Precondition(format!("every local sample must hold exactly m = {m} >= 1 points")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(FedError::Precondition(format!("delta must lie in (0, 1), got {delta}")));
    }
    if global.is_empty() || domains.iter().any(|d| d.reference.is_empty()) {
        return Err(FedError::EmptyDataset("reference samples must be nonempty".into()));
    }
    let local_erms: Vec<Hypothesis> = domains.iter().map(|d| class.erm(&d.train)).collect();
    let lhs = ensemble_risk(&local_erms, global)?;
    let pooled = BinarySample::concat(&domains.iter().map(|d| &d.train).collect::<Vec<_>>());
    let erm_term = empirical_risk(&class.erm(&pooled), &pooled);
    let complexity = complexity_term(k, m, delta, class.vc_dim());
    let discrepancy_terms = domains
        .iter()
        .map(|d| {
            Ok(DiscrepancyTerm {
                half_divergence: 0.5 * h_delta_h_divergence(&d.reference, global, class)?,
                lambda: lambda_k(class, global, &d.reference),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let disc = discrepancy_terms.iter().map(|t| t.half_divergence + t.lambda).sum::<f64>() / k as f64;
    let rhs = erm_term + complexity + disc;
    Ok(BoundReport {
        lhs,
        erm_term,
        complexity_term: complexity,
        discrepancy_terms,
        rhs,
        holds: lhs <= rhs,
        slack: rhs - lhs,
        vacuous: rhs > 1.0,
    })
}
