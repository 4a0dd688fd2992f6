use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{fit_norm_params, normalize_dataset, NormParams};
use crate::net::{adam_step, init_mlp, AdamConfig, AdamState, MlpParams};
use crate::robot::JointKind;
use crate::seed::{self, Rng};
use crate::teacher::TeacherModel;

use super::model::{masked_loss_grad, pkd_objective, CompensationModel, PreparedSet};
use super::Dataset;

/// Training hyperparameters shared by both learning schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainHyper {
    pub hidden: Vec<usize>,
    pub max_steps: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub l2_coeff: f64,
    /// Steps between validation checks.
    pub check_interval: usize,
    /// Checks without improvement before stopping.
    pub patience: usize,
    pub lambda_hi: f64,
    pub lambda_lo: f64,
    /// Number of teacher samples `T_p`.
    pub teacher_samples: usize,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            hidden: vec![30, 30, 30],
            max_steps: 20_000,
            batch_size: 128,
            adam: AdamConfig::default(),
            l2_coeff: 1e-4,
            check_interval: 200,
            patience: 10,
            lambda_hi: 1.0,
            lambda_lo: 0.0,
            teacher_samples: crate::teacher::DEFAULT_TEACHER_SAMPLES,
            seed: 0,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.max_steps == 0 || self.batch_size == 0 || self.check_interval == 0 {
            return bad("max_steps, batch_size and check_interval must be >= 1");
        }
        if self.patience == 0 {
            return bad("patience must be >= 1");
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be >= 1");
        }
        if !(0.0 <= self.lambda_lo && self.lambda_lo <= self.lambda_hi && self.lambda_hi <= 1.0) {
            return bad("lambda bounds must satisfy 0 <= lambda_lo <= lambda_hi <= 1");
        }
        if !(self.l2_coeff >= 0.0) || !(self.adam.lr > 0.0) {
            return bad("l2_coeff must be >= 0 and lr > 0");
        }
        Ok(())
    }
}

/// Linear interpolation from `lambda_hi` at step 0 to `lambda_lo` at
/// `total`.
pub fn lambda_schedule(step: usize, total: usize, lambda_hi: f64, lambda_lo: f64) -> Result<f64> {
    if step > total || !(0.0 <= lambda_lo && lambda_lo <= lambda_hi && lambda_hi <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda schedule out of range: step {step}/{total}, bounds [{lambda_lo}, {lambda_hi}]"
        )));
    }
    if total == 0 || step == 0 {
        return Ok(lambda_hi);
    }
    if step == total {
        return Ok(lambda_lo);
    }
    let frac = step as f64 / total as f64;
    Ok(lambda_hi + (lambda_lo - lambda_hi) * frac)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EarlyStop {
    Continue,
    Stop { best: usize },
}

/// Stops once `patience` consecutive checks fail to improve on the best
/// validation loss; `best` indexes into `history`.
pub fn early_stop_check(history: &[f64], patience: usize) -> EarlyStop {
    let Some(best) = history
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, f64)>, (i, &v)| match acc {
            Some((_, b)) if !(v < b) => acc,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i)
    else {
        return EarlyStop::Continue;
    };
    if history.len() - 1 - best >= patience.max(1) {
        EarlyStop::Stop { best }
    } else {
        EarlyStop::Continue
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub step: usize,
    /// Objective on the last minibatch, regularization included.
    pub train_loss: f64,
    pub val_loss: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-validation snapshot.
    pub model: CompensationModel,
    pub log: Vec<LogRow>,
    pub best_step: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    /// Rows the normalization parameters were fitted on.
    pub norm_fit_rows: usize,
}

/// Learning from scratch: normalization fitted on the system data only.
pub fn train_lfs(
    d_system: &Dataset,
    d_val: &Dataset,
    kinds: &[JointKind],
    robot_name: &str,
    h: &TrainHyper,
) -> Result<TrainOutcome> {
    if d_system.is_empty() {
        return Err(Error::EmptyDataset("system training data"));
    }
    let norm = fit_norm_params(d_system)?;
    let mut lfs = h.clone();
    lfs.lambda_hi = 0.0;
    lfs.lambda_lo = 0.0;
    let mut out = train_with_norm(d_system, None, d_val, norm, kinds, robot_name, &lfs)?;
    out.norm_fit_rows = d_system.len();
    Ok(out)
}

/// Distillation from an analytic teacher: draws `T_p` teacher samples, then
/// continues as [`train_pkd_on`].
pub fn train_pkd(
    d_system: &Dataset,
    d_val: &Dataset,
    teacher: &TeacherModel,
    h: &TrainHyper,
) -> Result<TrainOutcome> {
    let mut rng = seed::rng_for(h.seed, &[seed::stream::TEACHER_SAMPLES]);
    let d_ptm = teacher.sample(h.teacher_samples, &teacher.robot.joint_limits, &mut rng)?;
    train_pkd_on(
        d_system,
        d_val,
        &d_ptm,
        &teacher.robot.joint_kinds(),
        &teacher.robot.name,
        h,
    )
}

/// Fits normalization on `𝒟_system ∪ 𝒟_PTM`, normalizes both sets and
/// minimizes `(1 - λ) ℒˢ + λ ℒᵖ + ℛ` with a linearly decaying `λ`.
pub fn train_pkd_on(
    d_system: &Dataset,
    d_val: &Dataset,
    d_ptm: &Dataset,
    kinds: &[JointKind],
    robot_name: &str,
    h: &TrainHyper,
) -> Result<TrainOutcome> {
    if d_ptm.is_empty() {
        return Err(Error::EmptyDataset("teacher sample"));
    }
    let joint = d_system.union(d_ptm);
    let norm = fit_norm_params(&joint)?;
    let mut out = train_with_norm(d_system, Some(d_ptm), d_val, norm, kinds, robot_name, h)?;
    out.norm_fit_rows = joint.len();
    Ok(out)
}

/// Training loop on raw datasets with given normalization parameters.
///
/// Random streams below `h.seed`: network initialization, system
/// minibatches and teacher minibatches are independent, so a run with
/// `λ ≡ 0` follows the same trajectory as a run without a teacher.
pub fn train_with_norm(
    d_system: &Dataset,
    d_ptm: Option<&Dataset>,
    d_val: &Dataset,
    norm: NormParams,
    kinds: &[JointKind],
    robot_name: &str,
    h: &TrainHyper,
) -> Result<TrainOutcome> {
    h.validate()?;
    if d_val.is_empty() {
        return Err(Error::EmptyDataset("validation data"));
    }
    if d_system.is_empty() && h.lambda_lo < 1.0 {
        return Err(Error::EmptyDataset(
            "system training data (allowed only when lambda is fixed at 1)",
        ));
    }
    if d_ptm.is_none() && h.lambda_hi > 0.0 {
        return Err(Error::InvalidParameter(
            "a positive lambda requires teacher data".into(),
        ));
    }
    let prepare = |d: &Dataset| PreparedSet::from_dataset(&normalize_dataset(d, &norm)?);
    let system = if d_system.is_empty() {
        None
    } else {
        Some(prepare(d_system)?)
    };
    let teacher = d_ptm.map(prepare).transpose()?;
    let val = prepare(d_val)?;

    let mut dims = vec![norm.in_dim()];
    dims.extend(&h.hidden);
    dims.push(norm.out_dim());
    let mut init_rng = seed::rng_for(h.seed, &[seed::stream::TRAINING, 0]);
    let mut w_plus = init_mlp(&dims, &mut init_rng)?;
    let mut w_minus = init_mlp(&dims, &mut init_rng)?;
    let mut sys_rng = seed::rng_for(h.seed, &[seed::stream::TRAINING, 1]);
    let mut ptm_rng = seed::rng_for(h.seed, &[seed::stream::TRAINING, 2]);
    let mut adam_plus = AdamState::new(&w_plus, h.adam);
    let mut adam_minus = AdamState::new(&w_minus, h.adam);

    let mut log = Vec::new();
    let mut history = Vec::new();
    let mut best: (usize, f64, MlpParams, MlpParams) =
        (0, f64::INFINITY, w_plus.clone(), w_minus.clone());
    let mut stopped_early = false;

    for step in 0..h.max_steps {
        let lambda = lambda_schedule(step, h.max_steps - 1, h.lambda_hi, h.lambda_lo)?;
        let sys_batch = system.as_ref().map(|s| minibatch(s, h.batch_size, &mut sys_rng));
        let ptm_batch = teacher.as_ref().map(|s| minibatch(s, h.batch_size, &mut ptm_rng));
        let (objective, grads) = pkd_objective(
            &w_plus,
            &w_minus,
            sys_batch.as_ref(),
            ptm_batch.as_ref(),
            lambda,
            h.l2_coeff,
        )?;
        if !objective.is_finite() {
            return Err(Error::Divergence { step, what: "loss" });
        }
        adam_step(&mut w_plus, &grads.plus, &mut adam_plus)?;
        adam_step(&mut w_minus, &grads.minus, &mut adam_minus)?;
        if !w_plus.is_finite() || !w_minus.is_finite() {
            return Err(Error::Divergence {
                step,
                what: "parameters",
            });
        }

        let done = step + 1 == h.max_steps;
        if (step + 1) % h.check_interval == 0 || done {
            let (val_loss, _) = masked_loss_grad(&w_plus, &w_minus, &val)?;
            if !val_loss.is_finite() {
                return Err(Error::Divergence {
                    step,
                    what: "validation loss",
                });
            }
            log.push(LogRow {
                step: step + 1,
                train_loss: objective,
                val_loss,
                lambda,
            });
            history.push(val_loss);
            if val_loss < best.1 {
                best = (step + 1, val_loss, w_plus.clone(), w_minus.clone());
            }
            if let EarlyStop::Stop { .. } = early_stop_check(&history, h.patience) {
                stopped_early = !done;
                break;
            }
        }
    }

    let (best_step, best_val_loss, w_plus, w_minus) = best;
    let model = CompensationModel::new(robot_name, kinds.to_vec(), w_plus, w_minus, norm)?;
    Ok(TrainOutcome {
        model,
        log,
        best_step,
        best_val_loss,
        stopped_early,
        norm_fit_rows: 0,
    })
}

/// Uniform draws with replacement; the whole set when it fits in a batch.
fn minibatch(set: &PreparedSet, batch_size: usize, rng: &mut Rng) -> PreparedSet {
    let n = set.len();
    if n <= batch_size {
        return set.clone();
    }
    let idx: Vec<usize> = (0..batch_size).map(|_| rng.random_range(0..n)).collect();
    set.gather(&idx)
}
