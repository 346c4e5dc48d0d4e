//! Teacher momentum: cosine base schedule, meta-controller scaling, clamping,
//! importance-damped EMA and the drift reset.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::importance::ImportanceMap;
use crate::nnet::{sigmoid, ParamVector};

/// Which loss gap triggers the reset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetRule {
    /// `sup_loss - teacher_loss < delta`.
    #[default]
    AsPrinted,
    /// `teacher_loss - sup_loss > delta`: the teacher has fallen behind.
    TeacherBehind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmaConfig {
    pub m0: f64,
    pub m_min: f64,
    pub m_max: f64,
    pub eta: f64,
    pub delta: f64,
    pub reset_factor: f64,
    pub reset_enabled: bool,
    pub reset_rule: ResetRule,
    /// Schedule length `T`; the trainer sets it to the number of updates.
    pub total_steps: usize,
    pub use_importance: bool,
    pub use_dynamic: bool,
    /// Use the unnormalized importance map.
    pub raw_importance: bool,
    /// Update the teacher after every student step instead of once per epoch.
    pub per_step: bool,
    pub controller_hidden: usize,
    /// Finite-difference descent on the controller every `controller_every` epochs.
    pub train_controller: bool,
    pub controller_every: usize,
    pub controller_lr: f64,
}

impl Default for EmaConfig {
    fn default() -> Self {
        Self {
            m0: 0.996,
            m_min: 0.99,
            m_max: 0.9999,
            eta: 1.0,
            delta: 0.01,
            reset_factor: 0.6,
            reset_enabled: true,
            reset_rule: ResetRule::AsPrinted,
            total_steps: 100,
            use_importance: true,
            use_dynamic: true,
            raw_importance: false,
            per_step: false,
            controller_hidden: 16,
            train_controller: false,
            controller_every: 5,
            controller_lr: 0.1,
        }
    }
}

impl EmaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.m_min && self.m_min <= self.m_max && self.m_max < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < m_min <= m_max < 1, got m_min={} m_max={}",
                self.m_min, self.m_max
            )));
        }
        if !(self.m_min..=self.m_max).contains(&self.m0) {
            return Err(Error::Config(format!("m0={} outside [m_min, m_max]", self.m0)));
        }
        if !(self.eta >= 0.0) {
            return Err(Error::Config(format!("eta={} must be nonnegative", self.eta)));
        }
        if !(0.0..=1.0).contains(&self.reset_factor) {
            return Err(Error::Config(format!("reset_factor={} outside [0, 1]", self.reset_factor)));
        }
        if self.delta.is_nan() {
            return Err(Error::Config("delta is NaN".into()));
        }
        if self.controller_hidden == 0 || self.controller_every == 0 {
            return Err(Error::Config("controller_hidden and controller_every must be positive".into()));
        }
        Ok(())
    }
}

/// Inputs of the meta-controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmaInputs {
    /// `teacher_loss - student_loss`.
    pub delta_loss: f64,
    pub teacher_loss: f64,
    /// `t / T` in `[0, 1]`.
    pub progress: f64,
}

impl EmaInputs {
    pub fn new(teacher_loss: f64, student_loss: f64, progress: f64) -> Result<Self> {
        if !teacher_loss.is_finite() || !student_loss.is_finite() {
            return Err(Error::NonFinite {
                context: "validation loss fed to the meta-controller".into(),
                index: 0,
            });
        }
        if !(0.0..=1.0).contains(&progress) {
            return Err(Error::Precondition(format!("progress {progress} outside [0, 1]")));
        }
        Ok(Self {
            delta_loss: teacher_loss - student_loss,
            teacher_loss,
            progress,
        })
    }

    fn features(&self) -> [f64; 3] {
        [self.delta_loss, self.teacher_loss, self.progress]
    }
}

/// Two-layer MLP `3 -> h -> 1` with ReLU hidden units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaController {
    pub hidden: usize,
    pub seed: u64,
    /// `h x 3`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

/// Output weights start small so that the initial scale is close to 1.
const W2_INIT: f64 = 0.05;

impl MetaController {
    pub fn new(hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let limit = (6.0 / (3 + hidden) as f64).sqrt();
        let w1 = (0..hidden * 3).map(|_| rng.random_range(-limit..limit)).collect();
        let w2 = (0..hidden).map(|_| rng.random_range(-W2_INIT..W2_INIT)).collect();
        Self {
            hidden,
            seed,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: 0.0,
        }
    }

    pub fn zeros(hidden: usize) -> Self {
        Self {
            hidden,
            seed: 0,
            w1: vec![0.0; hidden * 3],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden;
        if self.w1.len() != 3 * h || self.b1.len() != h || self.w2.len() != h {
            return Err(Error::Shape(format!("controller arrays do not match hidden size {h}")));
        }
        if let Some(i) = self.to_vec().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "meta-controller weight".into(),
                index: i,
            });
        }
        Ok(())
    }

    /// Value fed to the sigmoid.
    pub fn pre_activation(&self, inputs: &EmaInputs) -> f64 {
        let x = inputs.features();
        let mut z = self.b2;
        for j in 0..self.hidden {
            let row = &self.w1[3 * j..3 * j + 3];
            let a = self.b1[j] + row[0] * x[0] + row[1] * x[1] + row[2] * x[2];
            z += self.w2[j] * a.max(0.0);
        }
        z
    }

    /// Flat view `[w1, b1, w2, b2]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(5 * self.hidden + 1);
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.push(self.b2);
        v
    }

    pub fn set_from_slice(&mut self, v: &[f64]) -> Result<()> {
        let h = self.hidden;
        if v.len() != 5 * h + 1 {
            return Err(Error::Shape(format!(
                "controller needs {} values, got {}",
                5 * h + 1,
                v.len()
            )));
        }
        self.w1.copy_from_slice(&v[..3 * h]);
        self.b1.copy_from_slice(&v[3 * h..4 * h]);
        self.w2.copy_from_slice(&v[4 * h..5 * h]);
        self.b2 = v[5 * h];
        Ok(())
    }
}

/// `1 - (1 - m0) (cos(pi t / T) + 1) / 2`.
pub fn base_momentum(t: usize, total: usize, m0: f64) -> f64 {
    let total = total.max(1);
    let t = t.min(total);
    if t == total {
        return 1.0;
    }
    1.0 - (1.0 - m0) * ((PI * t as f64 / total as f64).cos() + 1.0) / 2.0
}

/// `gamma = 0.995 + 0.01 sigmoid(z)`.
pub fn controller_gamma(inputs: &EmaInputs, ctrl: &MetaController) -> f64 {
    gamma_from_pre_activation(ctrl.pre_activation(inputs))
}

pub fn gamma_from_pre_activation(z: f64) -> f64 {
    sigmoid(z) * 0.01 + 0.995
}

/// `clip(gamma m_base, m_min, m_max)`.
pub fn effective_momentum(gamma: f64, m_base: f64, cfg: &EmaConfig) -> f64 {
    (gamma * m_base).clamp(cfg.m_min, cfg.m_max)
}

fn check_momentum(m: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&m) {
        return Err(Error::Precondition(format!("momentum {m} outside [0, 1]")));
    }
    Ok(())
}

fn check_aligned(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{what}: {a} vs {b} parameters")));
    }
    Ok(())
}

/// In-place `t += (1 - m) (s - t)`.
pub fn ema_fixed_in_place(teacher: &mut [f64], student: &[f64], m: f64) -> Result<()> {
    check_momentum(m)?;
    check_aligned(teacher.len(), student.len(), "teacher and student")?;
    let r = 1.0 - m;
    if r == 1.0 {
        teacher.copy_from_slice(student);
        return Ok(());
    }
    for (t, &s) in teacher.iter_mut().zip(student) {
        *t += r * (s - *t);
    }
    Ok(())
}

/// In-place `t += (1 - m) / (1 + eta w_i) (s - t)`.
pub fn ema_regularized_in_place(
    teacher: &mut [f64],
    student: &[f64],
    m: f64,
    omega: &[f64],
    eta: f64,
) -> Result<()> {
    check_momentum(m)?;
    check_aligned(teacher.len(), student.len(), "teacher and student")?;
    check_aligned(teacher.len(), omega.len(), "importance map")?;
    if !(eta >= 0.0) {
        return Err(Error::Precondition(format!("eta {eta} must be nonnegative")));
    }
    let r = 1.0 - m;
    for ((t, &s), &w) in teacher.iter_mut().zip(student).zip(omega) {
        let ri = r / (1.0 + eta * w);
        if ri == 1.0 {
            *t = s;
        } else {
            *t += ri * (s - *t);
        }
    }
    Ok(())
}

pub fn ema_update_fixed(teacher: &ParamVector, student: &ParamVector, m: f64) -> Result<ParamVector> {
    let mut out = teacher.clone();
    ema_fixed_in_place(out.values_mut(), student.values(), m)?;
    Ok(out)
}

pub fn ema_update_regularized(
    teacher: &ParamVector,
    student: &ParamVector,
    m: f64,
    omega: &ImportanceMap,
    eta: f64,
) -> Result<ParamVector> {
    let mut out = teacher.clone();
    ema_regularized_in_place(out.values_mut(), student.values(), m, &omega.omega, eta)?;
    Ok(out)
}

/// Whether the drift reset fires for these validation losses.
pub fn reset_triggered(sup_loss: f64, teacher_loss: f64, cfg: &EmaConfig) -> bool {
    if !cfg.reset_enabled {
        return false;
    }
    match cfg.reset_rule {
        ResetRule::AsPrinted => sup_loss - teacher_loss < cfg.delta,
        ResetRule::TeacherBehind => teacher_loss - sup_loss > cfg.delta,
    }
}

/// `reset_factor * m` when the reset fires, else `m`.
pub fn maybe_reset(sup_loss: f64, teacher_loss: f64, cfg: &EmaConfig, m: f64) -> f64 {
    if reset_triggered(sup_loss, teacher_loss, cfg) {
        cfg.reset_factor * m
    } else {
        m
    }
}

/// Everything decided for one teacher update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumDecision {
    pub m_base: f64,
    pub gamma: Option<f64>,
    pub m_effective: f64,
    pub reset: bool,
}

/// Dynamic mode: schedule, controller, clamp, then the reset rule.
pub fn dynamic_momentum(
    t: usize,
    cfg: &EmaConfig,
    ctrl: &MetaController,
    teacher_loss: f64,
    student_loss: f64,
) -> Result<MomentumDecision> {
    let total = cfg.total_steps.max(1);
    let m_base = base_momentum(t, total, cfg.m0);
    let inputs = EmaInputs::new(teacher_loss, student_loss, t.min(total) as f64 / total as f64)?;
    let gamma = controller_gamma(&inputs, ctrl);
    let clamped = effective_momentum(gamma, m_base, cfg);
    let reset = reset_triggered(student_loss, teacher_loss, cfg);
    Ok(MomentumDecision {
        m_base,
        gamma: Some(gamma),
        m_effective: if reset { cfg.reset_factor * clamped } else { clamped },
        reset,
    })
}

/// Fixed mode: constant `m0`, no controller, no reset.
pub fn fixed_momentum(cfg: &EmaConfig) -> MomentumDecision {
    MomentumDecision {
        m_base: cfg.m0,
        gamma: None,
        m_effective: cfg.m0,
        reset: false,
    }
}
