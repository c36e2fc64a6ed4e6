use super::DistillConfig;
use crate::data::{Dataset, PoolSampler};
use crate::error::{FedError, Result};
use crate::harness::top1_accuracy;
use crate::models::{predict_logits, ParamVector, Prototype};
use crate::numerics::{self, LossKind, Matrix, OptimizerKind, OptimizerState, Schedule};
use crate::rng::SimRng;

/// A received model together with the architecture it runs under.
#[derive(Debug, Clone, Copy)]
pub struct Teacher<'a> {
    pub proto: &'a Prototype,
    pub params: &'a ParamVector,
}

/// Uniform mean of the teachers' raw logits on `batch`.
pub fn ensemble_logits(teachers: &[Teacher], batch: &Matrix) -> Result<Matrix> {
    let first = teachers.first().ok_or_else(|| FedError::Precondition("ensemble of zero teachers".into()))?;
    let classes = first.proto.class_count();
    if let Some(t) = teachers.iter().find(|t| t.proto.class_count() != classes) {
        return Err(FedError::Config(format!(
            "teacher prototype `{}` predicts {} classes, `{}` predicts {classes}",
            t.proto.id,
            t.proto.class_count(),
            first.proto.id
        )));
    }
    let mut sum = Matrix::zeros(batch.rows(), classes);
    for t in teachers {
        let z = predict_logits(t.proto, t.params, batch)?;
        for (s, v) in sum.data_mut().iter_mut().zip(z.data()) {
            *s += v;
        }
    }
    let k = teachers.len() as f64;
    for s in sum.data_mut() {
        *s /= k;
    }
    Ok(sum)
}

/// Indices of the models that score above `threshold` on `val`. If every
/// model would be dropped, the single best one (lowest index on ties) is
/// kept instead.
pub fn drop_worst(models: &[Teacher], val: &Dataset, threshold: f64) -> Result<Vec<usize>> {
    let accs = models.iter().map(|t| top1_accuracy(t.proto, t.params, val)).collect::<Result<Vec<_>>>()?;
    let kept: Vec<usize> = (0..models.len()).filter(|&i| accs[i] > threshold).collect();
    if kept.is_empty() && !models.is_empty() {
        let best = (0..accs.len()).fold(0, |b, i| if accs[i] > accs[b] { i } else { b });
        return Ok(vec![best]);
    }
    Ok(kept)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuseOutcome {
    /// Best-validation snapshot (the initialization counts as a snapshot).
    pub params: ParamVector,
    pub steps_used: usize,
    pub best_val_accuracy: f64,
}

/// Ensemble distillation into `student`, starting from `init`.
///
/// Each step draws a pool batch, targets `softmax(mean teacher logits)`,
/// and takes an Adam step on `KL(target || softmax(student logits))`. The
/// student's validation accuracy is tracked after every step; the run stops
/// once it has not improved for `patience` steps, and the best snapshot is
/// returned.
pub fn feddf_fuse(
    teachers: &[Teacher],
    student: &Prototype,
    init: &ParamVector,
    cfg: &DistillConfig,
    val: &Dataset,
    rng: &mut SimRng,
) -> Result<FuseOutcome> {
    if teachers.is_empty() {
        return Err(FedError::Precondition("distillation needs at least one teacher".into()));
    }
    let init_acc = top1_accuracy(student, init, val)?;
    let mut best = FuseOutcome { params: init.clone(), steps_used: 0, best_val_accuracy: init_acc };
    if cfg.max_steps == 0 {
        return Ok(best);
    }
    let mut params = init.clone();
    let mut opt = OptimizerState::new(
        OptimizerKind::adam(),
        cfg.base_lr,
        Schedule::Cosine { total_steps: cfg.max_steps },
        params.len(),
    );
    let mut sampler = PoolSampler::new(&cfg.pool);
    let mut since_best = 0;
    let mut steps = 0;
    while steps < cfg.max_steps {
        let batch = sampler.next_batch(rng);
        let targets = ensemble_logits(teachers, &batch)?.softmax_rows()?;
        let g = numerics::grad(student, &params, &batch, LossKind::KlToTarget { targets: &targets })?;
        opt.step(&mut params.values, &g)?;
        steps += 1;
        let acc = top1_accuracy(student, &params, val)?;
        if acc > best.best_val_accuracy {
            best.params = params.clone();
            best.best_val_accuracy = acc;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    best.steps_used = steps;
    Ok(best)
}
