use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::{
    check_finite, l1_grad, stream_rng, supervised_grad, validation_loss, AblationConfig, EmaMode, EvalSet,
    PhaseConfig, RunConfig, RunLog, RunLogRow, Stream, Weighting,
};
use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::data::Dataset;
use crate::ema::{
    dynamic_momentum, ema_fixed_in_place, ema_regularized_in_place, fixed_momentum, EmaConfig, MetaController,
    MomentumDecision,
};
use crate::error::{Error, Result};
use crate::importance::{estimate_importance, normalize_importance, write_importance_csv, ImportanceMap};
use crate::metrics::MetricsReport;
use crate::model::SdfNet;
use crate::nnet::{sgd_step, Gradient, ParamVector};
use crate::pseudo::assess_sample;

pub const SEMI_PHASE: &str = "semi";

/// Offset that separates the controller's seed from the network's.
const CONTROLLER_SEED_SALT: u64 = 0x6d65_7461;
const CONTROLLER_FD_STEP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct SemiOutcome {
    /// Teacher with the lowest validation Chamfer over epochs `0..=E`.
    pub best_teacher: Checkpoint,
    pub best_epoch: usize,
    pub best_metrics: Option<MetricsReport>,
    /// Validation metrics of the incoming warm-up teacher.
    pub initial_metrics: Option<MetricsReport>,
    pub final_teacher: ParamVector,
    pub student: Checkpoint,
    pub log: RunLog,
}

/// State handed to an observer after each epoch's teacher update.
pub struct EpochSnapshot<'a> {
    pub epoch: usize,
    pub teacher: &'a ParamVector,
    pub student: &'a ParamVector,
    pub decision: Option<MomentumDecision>,
    pub omega: Option<&'a ImportanceMap>,
}

pub fn semi_train(
    cfg: &RunConfig,
    dataset: &Dataset,
    warm: &Checkpoint,
    variant: &AblationConfig,
    phase: &PhaseConfig,
) -> Result<SemiOutcome> {
    semi_train_observed(cfg, dataset, warm, variant, phase, &mut |_| {})
}

/// Cycles through a pool, reshuffling after each full pass.
struct Cycler {
    pool: Vec<usize>,
    pos: usize,
}

impl Cycler {
    fn next(&mut self, rng: &mut ChaCha8Rng) -> usize {
        if self.pos == self.pool.len() {
            self.pool.shuffle(rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.pool[self.pos - 1]
    }
}

struct Loop<'a> {
    dataset: &'a Dataset,
    variant: &'a AblationConfig,
    ema: EmaConfig,
    ctrl: MetaController,
    val: EvalSet,
    teacher: SdfNet,
    student: SdfNet,
    /// Latest validation losses (teacher, student) for per-step decisions.
    last_losses: (f64, f64),
    step: usize,
}

impl Loop<'_> {
    fn decide(&self, t: usize) -> Result<MomentumDecision> {
        match self.variant.ema_mode {
            EmaMode::Fixed => Ok(fixed_momentum(&self.ema)),
            EmaMode::Dynamic => {
                let (lt, ls) = self.last_losses;
                dynamic_momentum(t, &self.ema, &self.ctrl, lt, ls)
            }
        }
    }

    fn apply_ema(&self, teacher: &mut ParamVector, m: f64, omega: Option<&ImportanceMap>) -> Result<()> {
        match omega {
            Some(w) if self.variant.importance_reg => {
                ema_regularized_in_place(teacher.values_mut(), self.student.params.values(), m, &w.omega, self.ema.eta)
            }
            _ => ema_fixed_in_place(teacher.values_mut(), self.student.params.values(), m),
        }
    }

    fn update_teacher(&mut self, t: usize, omega: Option<&ImportanceMap>) -> Result<Option<MomentumDecision>> {
        if !self.variant.ema_enabled {
            self.teacher.params = self.student.params.clone();
            return Ok(None);
        }
        let d = self.decide(t)?;
        let mut p = std::mem::replace(&mut self.teacher.params, self.student.params.clone());
        self.apply_ema(&mut p, d.m_effective, omega)?;
        self.teacher.params = p;
        Ok(Some(d))
    }

    /// One finite-difference descent step on the controller: the objective is
    /// the teacher's validation loss after the update the controller implies.
    fn train_controller(&mut self, t: usize, omega: Option<&ImportanceMap>) -> Result<()> {
        let objective = |lp: &Loop, ctrl: &MetaController| -> Result<f64> {
            let (lt, ls) = lp.last_losses;
            let d = dynamic_momentum(t, &lp.ema, ctrl, lt, ls)?;
            let mut p = lp.teacher.params.clone();
            lp.apply_ema(&mut p, d.m_effective, omega)?;
            let net = SdfNet::new(lp.teacher.spec.clone(), p)?;
            Ok(validation_loss(&net, lp.dataset, &lp.val.indices)?.unwrap_or(0.0))
        };
        let theta = self.ctrl.to_vec();
        let mut grad = vec![0.0; theta.len()];
        let mut probe = self.ctrl.clone();
        for k in 0..theta.len() {
            let mut v = theta.clone();
            v[k] = theta[k] + CONTROLLER_FD_STEP;
            probe.set_from_slice(&v)?;
            let plus = objective(self, &probe)?;
            v[k] = theta[k] - CONTROLLER_FD_STEP;
            probe.set_from_slice(&v)?;
            let minus = objective(self, &probe)?;
            grad[k] = (plus - minus) / (2.0 * CONTROLLER_FD_STEP);
        }
        let next: Vec<f64> = theta
            .iter()
            .zip(&grad)
            .map(|(p, g)| p - self.ema.controller_lr * g)
            .collect();
        self.ctrl.set_from_slice(&next)?;
        self.ctrl.validate()
    }
}

/// Semi-supervised phase from a warm-up checkpoint. The student starts as a
/// copy of the teacher.
pub fn semi_train_observed(
    cfg: &RunConfig,
    dataset: &Dataset,
    warm: &Checkpoint,
    variant: &AblationConfig,
    phase: &PhaseConfig,
    observer: &mut dyn FnMut(&EpochSnapshot),
) -> Result<SemiOutcome> {
    cfg.validate()?;
    phase.validate(SEMI_PHASE)?;
    let splits = dataset.splits(cfg.val_fraction);
    let labeled = splits.train_labeled.clone();
    let unlabeled = splits.unlabeled.clone();
    if labeled.is_empty() {
        return Err(Error::Config("semi-supervised training needs labeled training samples".into()));
    }
    let teacher = SdfNet::new(warm.spec.clone(), warm.params()?)?;
    let val = EvalSet::new(dataset, splits.val.clone(), cfg.eval_grid)?;
    if variant.ema_enabled && variant.ema_mode == EmaMode::Dynamic && val.is_empty() {
        return Err(Error::Config("dynamic EMA needs validation samples".into()));
    }

    let batch = phase.batch_size;
    let (n_l, n_u) = if unlabeled.is_empty() {
        (batch, 0)
    } else {
        let share = batch as f64 * labeled.len() as f64 / (labeled.len() + unlabeled.len()) as f64;
        let n_l = (share.round() as usize).clamp(1, batch.max(2) - 1);
        (n_l, batch.max(2) - n_l)
    };
    let steps_per_epoch = if n_u == 0 {
        labeled.len().div_ceil(n_l)
    } else {
        unlabeled.len().div_ceil(n_u)
    };
    let mut ema = cfg.ema_config.clone();
    ema.total_steps = if ema.per_step {
        phase.epochs * steps_per_epoch
    } else {
        phase.epochs
    }
    .max(1);

    let mut order_rng = stream_rng(cfg.seed, Stream::SemiOrder);
    let mut aug_rng = stream_rng(cfg.seed, Stream::Augment);
    let mut imp_rng = stream_rng(cfg.seed, Stream::Importance);
    let unlabeled_samples: Vec<_> = unlabeled.iter().map(|&i| &dataset.samples[i]).collect();

    let student = teacher.clone();
    let mut lp = Loop {
        dataset,
        variant,
        ctrl: MetaController::new(ema.controller_hidden, cfg.seed ^ CONTROLLER_SEED_SALT),
        ema,
        val,
        teacher,
        student,
        last_losses: (0.0, 0.0),
        step: 0,
    };

    let mut log = RunLog::default();
    let initial_metrics = lp.val.evaluate_model(dataset, &lp.teacher)?.mean;
    let initial_loss = validation_loss(&lp.teacher, dataset, &lp.val.indices)?;
    lp.last_losses = (initial_loss.unwrap_or(0.0), initial_loss.unwrap_or(0.0));
    let mut row0 = RunLogRow::new(SEMI_PHASE, 0);
    row0.val_loss_teacher = initial_loss;
    row0.val_loss_student = initial_loss;
    if let Some(m) = &initial_metrics {
        row0.set_metrics(m);
    }
    log.push(row0);
    let mut best = (0usize, lp.teacher.params.clone(), initial_metrics);

    let mut labeled_cycle = Cycler {
        pool: labeled.clone(),
        pos: labeled.len(),
    };
    let mut unlabeled_order = unlabeled.clone();
    let uses_pseudo = !matches!(variant.weighting, Weighting::None) && n_u > 0;
    let lambda = cfg.weight_params.lambda;

    for epoch in 1..=phase.epochs {
        let mut run = || -> Result<(RunLogRow, Option<MomentumDecision>, Option<ImportanceMap>, Option<MetricsReport>)> {
            let lr = phase.lr_at(epoch);
            let omega = if variant.ema_enabled && variant.importance_reg && !unlabeled_samples.is_empty() {
                let raw = estimate_importance(&lp.teacher, &unlabeled_samples, &cfg.importance, &mut imp_rng)?;
                if cfg.dump_importance {
                    std::fs::create_dir_all(&cfg.output_dir)?;
                    let path = cfg.output_dir.join(format!("importance_{}_epoch{epoch}.csv", variant.name));
                    write_importance_csv(&raw, &lp.teacher.params, &path)?;
                }
                Some(if lp.ema.raw_importance {
                    raw
                } else {
                    normalize_importance(&raw)
                })
            } else {
                None
            };

            unlabeled_order.shuffle(&mut order_rng);
            let mut weights_seen: Vec<f64> = Vec::new();
            let mut loss_sum = 0.0;
            let mut decision = None;
            for s in 0..steps_per_epoch {
                let u_batch: &[usize] = if n_u == 0 {
                    &[]
                } else {
                    let lo = s * n_u;
                    &unlabeled_order[lo..(lo + n_u).min(unlabeled_order.len())]
                };
                let l_batch: Vec<usize> = (0..n_l).map(|_| labeled_cycle.next(&mut order_rng)).collect();
                let mut grad = Gradient::zeros(lp.student.params.total_len());

                let mut assessed = Vec::with_capacity(u_batch.len());
                if uses_pseudo {
                    for &i in u_batch {
                        let a = assess_sample(
                            &lp.teacher,
                            &dataset.samples[i],
                            &mut aug_rng,
                            &cfg.weight_params,
                            &cfg.assess,
                        )?;
                        let w = match variant.weighting {
                            Weighting::Adaptive => a.weight,
                            Weighting::Fixed(c) => c,
                            Weighting::None => 0.0,
                        };
                        weights_seen.push(w);
                        assessed.push((a, w));
                    }
                }
                let w_bar = if assessed.is_empty() {
                    0.0
                } else {
                    assessed.iter().map(|(_, w)| w).sum::<f64>() / assessed.len() as f64
                };

                let sup_scale = (1.0 - lambda * w_bar) / l_batch.len() as f64;
                let mut sup_total = 0.0;
                for &i in &l_batch {
                    let v = supervised_grad(&lp.student, &dataset.samples[i], &cfg.loss, &mut grad, sup_scale)?;
                    check_finite(v, "supervised loss", i)?;
                    sup_total += v;
                }
                let mut unsup_total = 0.0;
                for (a, w) in &assessed {
                    if *w == 0.0 {
                        continue;
                    }
                    let scale = lambda * w / assessed.len() as f64;
                    let points: Vec<_> = a.points.iter().map(|&p| a.strong.map_point(p)).collect();
                    let v = l1_grad(&lp.student, &a.strong.image, &points, &a.targets, &mut grad, scale)?;
                    check_finite(v, "pseudo-label loss", s)?;
                    unsup_total += w * v;
                }
                let n_a = assessed.len().max(1) as f64;
                loss_sum += (1.0 - lambda * w_bar) * sup_total / l_batch.len() as f64 + lambda * unsup_total / n_a;

                lp.student.params = sgd_step(&lp.student.params, &grad, lr)?;
                if lp.ema.per_step || !variant.ema_enabled {
                    decision = lp.update_teacher(lp.step, omega.as_ref())?;
                }
                lp.step += 1;
            }

            let pre_teacher = validation_loss(&lp.teacher, dataset, &lp.val.indices)?;
            let student_loss = validation_loss(&lp.student, dataset, &lp.val.indices)?;
            if let (Some(t), Some(s)) = (pre_teacher, student_loss) {
                lp.last_losses = (t, s);
            }
            if variant.ema_enabled && !lp.ema.per_step {
                if variant.ema_mode == EmaMode::Dynamic
                    && lp.ema.train_controller
                    && epoch % lp.ema.controller_every == 0
                {
                    lp.train_controller(epoch - 1, omega.as_ref())?;
                }
                decision = lp.update_teacher(epoch - 1, omega.as_ref())?;
            }

            let mut row = RunLogRow::new(SEMI_PHASE, epoch);
            row.lr = Some(lr);
            row.train_loss = Some(loss_sum / steps_per_epoch.max(1) as f64);
            check_finite(row.train_loss.unwrap_or(0.0), "training loss", epoch)?;
            row.val_loss_teacher = validation_loss(&lp.teacher, dataset, &lp.val.indices)?;
            row.val_loss_student = student_loss;
            if !weights_seen.is_empty() {
                let n = weights_seen.len() as f64;
                row.mean_w_pseudo = Some(weights_seen.iter().sum::<f64>() / n);
                row.min_w_pseudo = weights_seen.iter().copied().reduce(f64::min);
                row.max_w_pseudo = weights_seen.iter().copied().reduce(f64::max);
            }
            if let Some(d) = &decision {
                row.m_base = Some(d.m_base);
                row.gamma = d.gamma;
                row.m_effective = Some(d.m_effective);
                row.reset_flag = Some(d.reset as u8);
            }
            let metrics = lp.val.evaluate_model(dataset, &lp.teacher)?.mean;
            if let Some(m) = &metrics {
                row.set_metrics(m);
            }
            Ok((row, decision, omega, metrics))
        };
        let (row, decision, omega, metrics) = run().map_err(|e| e.in_phase(SEMI_PHASE, epoch))?;
        if let (Some(m), Some(b)) = (metrics, best.2) {
            if m.chamfer_x100 < b.chamfer_x100 {
                best = (epoch, lp.teacher.params.clone(), Some(m));
            }
        }
        observer(&EpochSnapshot {
            epoch,
            teacher: &lp.teacher.params,
            student: &lp.student.params,
            decision,
            omega: omega.as_ref(),
        });
        log.push(row);
    }

    let spec = &lp.teacher.spec;
    let (best_epoch, best_params, best_metrics) = if lp.val.is_empty() {
        (phase.epochs, lp.teacher.params.clone(), None)
    } else {
        best
    };
    let meta = |p: &str, epoch| CheckpointMeta {
        phase: p.to_owned(),
        epoch,
        seed: cfg.seed,
    };
    Ok(SemiOutcome {
        best_teacher: Checkpoint::new(spec, &best_params, meta("semi-best-teacher", best_epoch)),
        best_epoch,
        best_metrics,
        initial_metrics,
        final_teacher: lp.teacher.params.clone(),
        student: Checkpoint::new(spec, &lp.student.params, meta("semi-student", phase.epochs)),
        log,
    })
}
