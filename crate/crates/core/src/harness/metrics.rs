use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{FedError, Result};
use crate::flcore::RoundRecord;
use crate::models::{predict_logits, ParamVector, Prototype};
use crate::numerics::{argmax, Matrix};

/// Fraction of rows whose argmax logit equals the label. Ties go to the
/// lowest class index.
pub fn accuracy_from_logits(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(FedError::EmptyDataset("accuracy on empty dataset".into()));
    }
    if logits.rows() != labels.len() {
        return Err(FedError::Shape(format!("{} logit rows for {} labels", logits.rows(), labels.len())));
    }
    let hits = logits.iter_rows().zip(labels).filter(|(row, &y)| argmax(row) == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

pub fn top1_accuracy(proto: &Prototype, params: &ParamVector, dataset: &Dataset) -> Result<f64> {
    if proto.class_count() != dataset.class_count() {
        return Err(FedError::Shape(format!(
            "prototype `{}` predicts {} classes, dataset has {}",
            proto.id,
            proto.class_count(),
            dataset.class_count()
        )));
    }
    accuracy_from_logits(&predict_logits(proto, params, dataset.inputs())?, dataset.labels())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrototypeAccuracy {
    pub averaged: f64,
    pub fused: f64,
}

/// One JSONL line of the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub round: usize,
    /// Wall-clock time of the round; the only nondeterministic field.
    pub wall_ms: u64,
    pub acc_averaged: f64,
    pub acc_fused: f64,
    pub acc_ensemble: f64,
    pub acc_per_prototype: BTreeMap<String, PrototypeAccuracy>,
    pub distill_steps: usize,
}

impl MetricsRow {
    pub fn from_record(rec: &RoundRecord, wall_ms: u64) -> Self {
        Self {
            round: rec.round,
            wall_ms,
            acc_averaged: rec.acc_averaged,
            acc_fused: rec.acc_fused,
            acc_ensemble: rec.acc_ensemble,
            acc_per_prototype: rec
                .per_prototype
                .iter()
                .map(|(k, v)| (k.clone(), PrototypeAccuracy { averaged: v.acc_averaged, fused: v.acc_fused }))
                .collect(),
            distill_steps: rec.distill_steps_used,
        }
    }
}

/// First round whose server-model accuracy reaches `target`.
///
/// `acc_fused` is the accuracy of the model kept by the server, which
/// equals `acc_averaged` for strategies that do not distill.
pub fn rounds_to_target(history: &[MetricsRow], target: f64) -> Option<usize> {
    history.iter().find(|r| r.acc_fused >= target).map(|r| r.round)
}

pub fn write_jsonl<W: Write>(mut w: W, rows: &[MetricsRow]) -> Result<()> {
    for r in rows {
        serde_json::to_writer(&mut w, r).map_err(|e| FedError::Parse(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(text: &str) -> Result<Vec<MetricsRow>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| FedError::Parse(e.to_string())))
        .collect()
}

/// Rectangle and resolution of a decision-boundary grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub resolution: usize,
}

/// Class probabilities on a `resolution x resolution` lattice, row-major
/// with `y` as the outer index.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryGrid {
    pub points: Vec<[f64; 2]>,
    pub probabilities: Matrix,
}

impl BoundaryGrid {
    /// CSV with header `x,y,p0..p{C-1}`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let c = self.probabilities.cols();
        let header: Vec<String> = ["x".to_string(), "y".to_string()].into_iter().chain((0..c).map(|i| format!("p{i}"))).collect();
        writeln!(w, "{}", header.join(","))?;
        for (pt, probs) in self.points.iter().zip(self.probabilities.iter_rows()) {
            let mut fields = vec![format!("{:?}", pt[0]), format!("{:?}", pt[1])];
            fields.extend(probs.iter().map(|p| format!("{p:?}")));
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

pub fn decision_boundary_grid(proto: &Prototype, params: &ParamVector, spec: &GridSpec) -> Result<BoundaryGrid> {
    if proto.input_dim() != 2 {
        return Err(FedError::Config(format!(
            "decision grid needs a 2-D input prototype, `{}` takes {} features",
            proto.id,
            proto.input_dim()
        )));
    }
    if spec.resolution < 2 || !(spec.x_min < spec.x_max && spec.y_min < spec.y_max) {
        return Err(FedError::Config("grid needs resolution >= 2 and non-degenerate bounds".into()));
    }
    let r = spec.resolution;
    let lerp = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (r - 1) as f64;
    let mut points = Vec::with_capacity(r * r);
    for iy in 0..r {
        for ix in 0..r {
            points.push([lerp(spec.x_min, spec.x_max, ix), lerp(spec.y_min, spec.y_max, iy)]);
        }
    }
    let inputs = Matrix::new(r * r, 2, points.iter().flatten().copied().collect())?;
    let probabilities = predict_logits(proto, params, &inputs)?.softmax_rows()?;
    Ok(BoundaryGrid { points, probabilities })
}
