//! Minimal reverse-mode multilayer perceptron.
//!
//! Parameters live in one flat [`ParamVector`] so that optimizer steps, EMA
//! updates and importance maps can all work element-wise on the same layout.
//! Layer `l` occupies `weights (out x in, row-major)` followed by `bias (out)`.
//!
//! Batches may carry a shared input prefix (for example image features that
//! are identical for every query point of one sample). The prefix part of the
//! first layer is evaluated once per batch.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `a`.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Layer widths, one activation per non-input layer, and the init seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    pub seed: u64,
}

impl NetworkSpec {
    /// `hidden` activation on every hidden layer, `output` on the last one.
    pub fn mlp(layer_sizes: &[usize], hidden: Activation, output: Activation, seed: u64) -> Self {
        let n = layer_sizes.len().saturating_sub(1);
        let activations = (0..n)
            .map(|l| if l + 1 == n { output } else { hidden })
            .collect();
        Self {
            layer_sizes: layer_sizes.to_vec(),
            activations,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "network needs at least 2 layer sizes, got {}",
                self.layer_sizes.len()
            )));
        }
        if let Some(pos) = self.layer_sizes.iter().position(|&s| s == 0) {
            return Err(Error::Config(format!("layer {pos} has size 0")));
        }
        if self.activations.len() != self.layer_sizes.len() - 1 {
            return Err(Error::Config(format!(
                "expected {} activations, got {}",
                self.layer_sizes.len() - 1,
                self.activations.len()
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap_or(&0)
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len().saturating_sub(1)
    }

    /// Total number of weights and biases.
    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    fn layer_offsets(&self) -> Vec<LayerOffsets> {
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let lo = LayerOffsets {
                    fan_in,
                    fan_out,
                    weight: offset,
                    bias: offset + fan_in * fan_out,
                };
                offset += fan_in * fan_out + fan_out;
                lo
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerOffsets {
    fan_in: usize,
    fan_out: usize,
    weight: usize,
    bias: usize,
}

/// Named contiguous block of a [`ParamVector`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSegment {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamSegment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Flat vector of every network scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    segments: Vec<ParamSegment>,
    values: Vec<f64>,
}

impl ParamVector {
    /// All-zero parameters laid out for `spec`.
    pub fn zeros(spec: &NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let mut segments = Vec::with_capacity(2 * spec.num_layers());
        for (l, lo) in spec.layer_offsets().iter().enumerate() {
            segments.push(ParamSegment {
                name: format!("layer{l}.weight"),
                offset: lo.weight,
                rows: lo.fan_out,
                cols: lo.fan_in,
            });
            segments.push(ParamSegment {
                name: format!("layer{l}.bias"),
                offset: lo.bias,
                rows: lo.fan_out,
                cols: 1,
            });
        }
        Ok(Self {
            segments,
            values: vec![0.0; spec.param_count()],
        })
    }

    /// Parameters for `spec` with the given flat values.
    pub fn from_values(spec: &NetworkSpec, values: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(spec)?;
        if values.len() != p.values.len() {
            return Err(Error::Shape(format!(
                "expected {} parameter values, got {}",
                p.values.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "parameter values".into(),
                index: i,
            });
        }
        p.values = values;
        Ok(p)
    }

    pub fn total_len(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn segments(&self) -> &[ParamSegment] {
        &self.segments
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().map(|s| s.name.as_str())
    }

    pub fn segment(&self, name: &str) -> Option<&ParamSegment> {
        self.segments.iter().find(|s| s.name == name)
    }

    /// Name of scalar `i`, e.g. `layer0.weight[3,1]` or `layer1.bias[0]`.
    pub fn scalar_name(&self, i: usize) -> Option<String> {
        let seg = self.segments.iter().find(|s| s.range().contains(&i))?;
        let local = i - seg.offset;
        Some(if seg.cols == 1 {
            format!("{}[{}]", seg.name, local)
        } else {
            format!("{}[{},{}]", seg.name, local / seg.cols, local % seg.cols)
        })
    }

    /// Same layout, new values. Lengths must match.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::Shape(format!(
                "expected {} values, got {}",
                self.values.len(),
                values.len()
            )));
        }
        ensure_finite(&values, "parameter update")?;
        Ok(Self {
            segments: self.segments.clone(),
            values,
        })
    }

    pub fn check_matches(&self, spec: &NetworkSpec) -> Result<()> {
        if self.values.len() != spec.param_count() {
            return Err(Error::Shape(format!(
                "parameter vector has {} entries, spec needs {}",
                self.values.len(),
                spec.param_count()
            )));
        }
        Ok(())
    }
}

/// Derivative of a scalar loss with respect to every entry of a [`ParamVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub values: Vec<f64>,
}

impl Gradient {
    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Gradient, scale: f64) {
        debug_assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
    }
}

pub(crate) fn ensure_finite(values: &[f64], context: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            context: context.to_owned(),
            index,
        }),
        None => Ok(()),
    }
}

/// Glorot-uniform weights driven only by `spec.seed`; zero biases.
pub fn init_network(spec: &NetworkSpec) -> Result<ParamVector> {
    let mut params = ParamVector::zeros(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for lo in spec.layer_offsets() {
        let bound = (6.0 / (lo.fan_in + lo.fan_out) as f64).sqrt();
        for w in &mut params.values[lo.weight..lo.bias] {
            *w = rng.random_range(-bound..=bound);
        }
    }
    Ok(params)
}

/// A batch of network inputs. Row `r` is `shared ++ rows[r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputBatch {
    shared: Vec<f64>,
    rows: Vec<f64>,
    row_len: usize,
}

impl InputBatch {
    /// Independent rows, no shared prefix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let row_len = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != row_len) {
            return Err(Error::Shape("batch rows have differing lengths".into()));
        }
        Ok(Self {
            shared: Vec::new(),
            rows: rows.concat(),
            row_len,
        })
    }

    /// Rows that all start with `shared`; `rows` holds the per-row suffixes
    /// back to back, each `row_len` long.
    pub fn with_shared(shared: Vec<f64>, rows: Vec<f64>, row_len: usize) -> Result<Self> {
        if row_len == 0 && !rows.is_empty() || row_len > 0 && rows.len() % row_len != 0 {
            return Err(Error::Shape(format!(
                "suffix buffer of {} values is not a multiple of row length {row_len}",
                rows.len()
            )));
        }
        Ok(Self {
            shared,
            rows,
            row_len,
        })
    }

    pub fn len(&self) -> usize {
        if self.row_len == 0 {
            0
        } else {
            self.rows.len() / self.row_len
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.shared.len() + self.row_len
    }

    pub fn shared(&self) -> &[f64] {
        &self.shared
    }

    pub fn row_suffix(&self, r: usize) -> &[f64] {
        &self.rows[r * self.row_len..(r + 1) * self.row_len]
    }

    /// Full input vector of row `r`.
    pub fn row(&self, r: usize) -> Vec<f64> {
        let mut v = self.shared.clone();
        v.extend_from_slice(self.row_suffix(r));
        v
    }

    fn check(&self, spec: &NetworkSpec) -> Result<()> {
        if self.input_dim() != spec.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} features, network expects {}",
                self.input_dim(),
                spec.input_dim()
            )));
        }
        Ok(())
    }
}

/// Scalar losses over the stacked outputs of a batch.
#[derive(Debug, Clone, PartialEq)]
pub enum Loss {
    /// `sum_j out_j^2`
    SquaredNorm,
    /// `mean_j |out_j - target_j|`
    L1 { targets: Vec<f64> },
    /// `mean_j (out_j - target_j)^2`
    L2 { targets: Vec<f64> },
    /// Mean of `(|grad f| - 1)^2` where the gradient comes from central
    /// differences. Rows come in groups of four: `p+h*ex, p-h*ex, p+h*ey, p-h*ey`.
    Eikonal { h: f64 },
    /// Weighted sum of losses, each over a contiguous range of rows.
    Sum(Vec<LossTerm>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossTerm {
    pub weight: f64,
    pub rows: Range<usize>,
    pub loss: Loss,
}

impl Loss {
    /// Loss value and its derivative with respect to `outputs`.
    pub fn evaluate(&self, outputs: &[f64], out_dim: usize) -> Result<(f64, Vec<f64>)> {
        let n = outputs.len();
        match self {
            Loss::SquaredNorm => {
                let value = outputs.iter().map(|o| o * o).sum();
                Ok((value, outputs.iter().map(|o| 2.0 * o).collect()))
            }
            Loss::L1 { targets } => {
                check_targets(targets, n)?;
                let inv = 1.0 / n as f64;
                let mut value = 0.0;
                let grad = outputs
                    .iter()
                    .zip(targets)
                    .map(|(o, t)| {
                        let d = o - t;
                        value += d.abs();
                        if d > 0.0 {
                            inv
                        } else if d < 0.0 {
                            -inv
                        } else {
                            0.0
                        }
                    })
                    .collect();
                Ok((value * inv, grad))
            }
            Loss::L2 { targets } => {
                check_targets(targets, n)?;
                let inv = 1.0 / n as f64;
                let mut value = 0.0;
                let grad = outputs
                    .iter()
                    .zip(targets)
                    .map(|(o, t)| {
                        let d = o - t;
                        value += d * d;
                        2.0 * d * inv
                    })
                    .collect();
                Ok((value * inv, grad))
            }
            Loss::Eikonal { h } => {
                if out_dim != 1 || n % 4 != 0 || n == 0 {
                    return Err(Error::Shape(format!(
                        "eikonal loss needs scalar outputs in groups of 4, got {n} outputs of width {out_dim}"
                    )));
                }
                let groups = n / 4;
                let inv = 1.0 / groups as f64;
                let mut value = 0.0;
                let mut grad = vec![0.0; n];
                for g in 0..groups {
                    let o = &outputs[4 * g..4 * g + 4];
                    let gx = (o[0] - o[1]) / (2.0 * h);
                    let gy = (o[2] - o[3]) / (2.0 * h);
                    let norm = gx.hypot(gy);
                    value += (norm - 1.0) * (norm - 1.0);
                    if norm > 0.0 {
                        let c = 2.0 * (norm - 1.0) / norm * inv / (2.0 * h);
                        grad[4 * g] = c * gx;
                        grad[4 * g + 1] = -c * gx;
                        grad[4 * g + 2] = c * gy;
                        grad[4 * g + 3] = -c * gy;
                    }
                }
                Ok((value * inv, grad))
            }
            Loss::Sum(terms) => {
                let mut value = 0.0;
                let mut grad = vec![0.0; n];
                for term in terms {
                    let range = term.rows.start * out_dim..term.rows.end * out_dim;
                    if range.end > n {
                        return Err(Error::Shape(format!(
                            "loss term covers rows {:?} but batch has {} rows",
                            term.rows,
                            n / out_dim.max(1)
                        )));
                    }
                    let (v, g) = term.loss.evaluate(&outputs[range.clone()], out_dim)?;
                    value += term.weight * v;
                    for (acc, gi) in grad[range].iter_mut().zip(g) {
                        *acc += term.weight * gi;
                    }
                }
                Ok((value, grad))
            }
        }
    }
}

fn check_targets(targets: &[f64], n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Shape("regression loss over zero outputs".into()));
    }
    if targets.len() != n {
        return Err(Error::Shape(format!(
            "{} targets for {} outputs",
            targets.len(),
            n
        )));
    }
    Ok(())
}

/// Single-input forward pass.
pub fn forward(params: &ParamVector, spec: &NetworkSpec, input: &[f64]) -> Result<Vec<f64>> {
    let batch = InputBatch::with_shared(input.to_vec(), Vec::new(), 0)?;
    spec.validate()?;
    params.check_matches(spec)?;
    batch.check(spec)?;
    let mut scratch = Scratch::new(spec);
    let base = first_layer_base(params, spec, batch.shared());
    Ok(scratch.forward_row(params, spec, &base, &[]).to_vec())
}

/// Forward pass over every row; outputs are stacked row after row.
pub fn forward_batch(params: &ParamVector, spec: &NetworkSpec, batch: &InputBatch) -> Result<Vec<f64>> {
    spec.validate()?;
    params.check_matches(spec)?;
    batch.check(spec)?;
    let base = first_layer_base(params, spec, batch.shared());
    let mut scratch = Scratch::new(spec);
    let mut out = Vec::with_capacity(batch.len() * spec.output_dim());
    for r in 0..batch.len() {
        out.extend_from_slice(scratch.forward_row(params, spec, &base, batch.row_suffix(r)));
    }
    Ok(out)
}

/// Loss over the batch and its exact gradient with respect to `params`.
pub fn forward_backward(
    params: &ParamVector,
    spec: &NetworkSpec,
    batch: &InputBatch,
    loss: &Loss,
) -> Result<(f64, Gradient)> {
    spec.validate()?;
    params.check_matches(spec)?;
    batch.check(spec)?;
    if batch.is_empty() {
        return Err(Error::Precondition("empty batch".into()));
    }
    let layers = spec.layer_offsets();
    let out_dim = spec.output_dim();
    let base = first_layer_base(params, spec, batch.shared());

    // Post-activation values of every non-input layer, per row.
    let act_len: usize = spec.layer_sizes[1..].iter().sum();
    let n_rows = batch.len();
    let mut acts = vec![0.0; n_rows * act_len];
    let mut outputs = Vec::with_capacity(n_rows * out_dim);
    let mut scratch = Scratch::new(spec);
    for r in 0..n_rows {
        let out = scratch.forward_row(params, spec, &base, batch.row_suffix(r));
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "network output".into(),
                index: r,
            });
        }
        outputs.extend_from_slice(out);
        acts[r * act_len..(r + 1) * act_len].copy_from_slice(&scratch.acts);
    }

    let (value, d_out) = loss.evaluate(&outputs, out_dim)?;
    if !value.is_finite() {
        let index = d_out
            .iter()
            .position(|v| !v.is_finite())
            .map_or(0, |i| i / out_dim);
        return Err(Error::NonFinite {
            context: "loss".into(),
            index,
        });
    }

    let w = params.values();
    let mut grad = vec![0.0; params.total_len()];
    let shared_len = batch.shared().len();
    // Sum of first-layer deltas over rows; multiplied into the shared prefix once.
    let mut first_delta_sum = vec![0.0; layers[0].fan_out];
    let widest = spec.layer_sizes.iter().copied().max().unwrap_or(0);
    let mut delta = vec![0.0; widest];
    let mut delta_prev = vec![0.0; widest];

    // Offsets of each layer's activations inside the per-row activation block.
    let mut act_offsets = Vec::with_capacity(layers.len());
    let mut acc = 0;
    for lo in &layers {
        act_offsets.push(acc);
        acc += lo.fan_out;
    }

    for r in 0..n_rows {
        let row_acts = &acts[r * act_len..(r + 1) * act_len];
        let suffix = batch.row_suffix(r);
        let last = layers.len() - 1;
        {
            let a = &row_acts[act_offsets[last]..act_offsets[last] + out_dim];
            let act = spec.activations[last];
            for j in 0..out_dim {
                delta[j] = d_out[r * out_dim + j] * act.derivative_from_output(a[j]);
            }
        }
        for l in (0..layers.len()).rev() {
            let lo = layers[l];
            let d = &delta[..lo.fan_out];
            // bias
            for (g, dj) in grad[lo.bias..lo.bias + lo.fan_out].iter_mut().zip(d) {
                *g += dj;
            }
            if l == 0 {
                for (s, dj) in first_delta_sum.iter_mut().zip(d) {
                    *s += dj;
                }
                for (j, &dj) in d.iter().enumerate() {
                    if dj == 0.0 {
                        continue;
                    }
                    let row = lo.weight + j * lo.fan_in + shared_len;
                    for (g, x) in grad[row..row + suffix.len()].iter_mut().zip(suffix) {
                        *g += dj * x;
                    }
                }
                break;
            }
            let prev = &row_acts[act_offsets[l - 1]..act_offsets[l - 1] + lo.fan_in];
            let dp = &mut delta_prev[..lo.fan_in];
            dp.iter_mut().for_each(|v| *v = 0.0);
            for (j, &dj) in d.iter().enumerate() {
                if dj == 0.0 {
                    continue;
                }
                let row = lo.weight + j * lo.fan_in;
                let wrow = &w[row..row + lo.fan_in];
                for ((g, x), (p, wi)) in grad[row..row + lo.fan_in]
                    .iter_mut()
                    .zip(prev)
                    .zip(dp.iter_mut().zip(wrow))
                {
                    *g += dj * x;
                    *p += dj * wi;
                }
            }
            let act = spec.activations[l - 1];
            for (p, a) in dp.iter_mut().zip(prev) {
                *p *= act.derivative_from_output(*a);
            }
            std::mem::swap(&mut delta, &mut delta_prev);
        }
    }

    let lo = layers[0];
    for (j, &s) in first_delta_sum.iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        let row = lo.weight + j * lo.fan_in;
        for (g, x) in grad[row..row + shared_len].iter_mut().zip(batch.shared()) {
            *g += s * x;
        }
    }

    ensure_finite(&grad, "gradient")?;
    Ok((value, Gradient { values: grad }))
}

/// `params - lr * grad`, element-wise.
pub fn sgd_step(params: &ParamVector, grad: &Gradient, lr: f64) -> Result<ParamVector> {
    if grad.len() != params.total_len() {
        return Err(Error::Shape(format!(
            "gradient has {} entries, parameters {}",
            grad.len(),
            params.total_len()
        )));
    }
    if !lr.is_finite() || lr < 0.0 {
        return Err(Error::Config(format!("learning rate must be finite and >= 0, got {lr}")));
    }
    ensure_finite(&grad.values, "gradient")?;
    let values = params
        .values()
        .iter()
        .zip(&grad.values)
        .map(|(p, g)| p - lr * g)
        .collect();
    params.with_values(values)
}

/// First-layer pre-activation contributed by bias and shared prefix.
fn first_layer_base(params: &ParamVector, spec: &NetworkSpec, shared: &[f64]) -> Vec<f64> {
    let lo = spec.layer_offsets()[0];
    let w = params.values();
    (0..lo.fan_out)
        .map(|j| {
            let row = &w[lo.weight + j * lo.fan_in..lo.weight + j * lo.fan_in + shared.len()];
            let mut acc = w[lo.bias + j];
            for (wi, x) in row.iter().zip(shared) {
                acc += wi * x;
            }
            acc
        })
        .collect()
}

struct Scratch {
    layers: Vec<LayerOffsets>,
    /// Post-activations of all non-input layers, concatenated.
    acts: Vec<f64>,
}

impl Scratch {
    fn new(spec: &NetworkSpec) -> Self {
        let layers = spec.layer_offsets();
        let act_len = spec.layer_sizes[1..].iter().sum();
        Self {
            layers,
            acts: vec![0.0; act_len],
        }
    }

    fn forward_row(&mut self, params: &ParamVector, spec: &NetworkSpec, base: &[f64], suffix: &[f64]) -> &[f64] {
        let w = params.values();
        let shared_len = self.layers[0].fan_in - suffix.len();
        let mut offset = 0;
        for (l, lo) in self.layers.iter().enumerate() {
            let act = spec.activations[l];
            let (before, rest) = self.acts.split_at_mut(offset);
            let out = &mut rest[..lo.fan_out];
            if l == 0 {
                for j in 0..lo.fan_out {
                    let row = lo.weight + j * lo.fan_in + shared_len;
                    let mut acc = base[j];
                    for (wi, x) in w[row..row + suffix.len()].iter().zip(suffix) {
                        acc += wi * x;
                    }
                    out[j] = act.apply(acc);
                }
            } else {
                let input = &before[offset - lo.fan_in..offset];
                for j in 0..lo.fan_out {
                    let row = lo.weight + j * lo.fan_in;
                    let mut acc = w[lo.bias + j];
                    for (wi, x) in w[row..row + lo.fan_in].iter().zip(input) {
                        acc += wi * x;
                    }
                    out[j] = act.apply(acc);
                }
            }
            offset += lo.fan_out;
        }
        &self.acts[offset - spec.output_dim()..offset]
    }
}
