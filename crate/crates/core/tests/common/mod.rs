//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use semisdf::metrics::{SdfGrid, SurfaceSamples};
use semisdf::nnet::{Activation, InputBatch, Loss, LossTerm, NetworkSpec, ParamVector};
use semisdf::trainer::{PhaseConfig, RunConfig};
use semisdf::Point2;

fn act(a: Activation, z: f64) -> f64 {
    match a {
        Activation::Relu => z.max(0.0),
        Activation::Tanh => z.tanh(),
        Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        Activation::Identity => z,
    }
}

/// Plain dense forward pass read straight from the named parameter
/// segments. Also returns the smallest |pre-activation| seen at a ReLU unit.
pub fn oracle_forward(params: &ParamVector, spec: &NetworkSpec, input: &[f64]) -> (Vec<f64>, f64) {
    let v = params.values();
    let mut a = input.to_vec();
    let mut closest_kink = f64::INFINITY;
    let layers = spec.num_layers();
    for l in 0..layers {
        let w = params.segment(&format!("layer{l}.weight")).unwrap();
        let b = params.segment(&format!("layer{l}.bias")).unwrap();
        let activation = spec.activations[l];
        let mut next = Vec::with_capacity(w.rows);
        for r in 0..w.rows {
            let mut z = v[b.offset + r];
            for c in 0..w.cols {
                z += v[w.offset + r * w.cols + c] * a[c];
            }
            if activation == Activation::Relu {
                closest_kink = closest_kink.min(z.abs());
            }
            next.push(act(activation, z));
        }
        a = next;
    }
    (a, closest_kink)
}

/// Loss of stacked outputs, written independently of the library.
pub fn oracle_loss(loss: &Loss, out: &[f64], out_dim: usize) -> f64 {
    let n = out.len() as f64;
    match loss {
        Loss::SquaredNorm => out.iter().map(|o| o * o).sum(),
        Loss::L1 { targets } => out.iter().zip(targets).map(|(o, t)| (o - t).abs()).sum::<f64>() / n,
        Loss::L2 { targets } => out.iter().zip(targets).map(|(o, t)| (o - t).powi(2)).sum::<f64>() / n,
        Loss::Eikonal { h } => {
            let groups = out.chunks(4);
            let k = groups.len() as f64;
            groups
                .map(|o| {
                    let g = ((o[0] - o[1]) / (2.0 * h)).hypot((o[2] - o[3]) / (2.0 * h));
                    (g - 1.0).powi(2)
                })
                .sum::<f64>()
                / k
        }
        Loss::Sum(terms) => terms
            .iter()
            .map(|t| t.weight * oracle_loss(&t.loss, &out[t.rows.start * out_dim..t.rows.end * out_dim], out_dim))
            .sum(),
    }
}

/// Smallest distance of an L1 residual from its kink, or infinity.
fn l1_margin(loss: &Loss, out: &[f64], out_dim: usize) -> f64 {
    match loss {
        Loss::L1 { targets } => out.iter().zip(targets).map(|(o, t)| (o - t).abs()).fold(f64::INFINITY, f64::min),
        Loss::Sum(terms) => terms
            .iter()
            .map(|t| l1_margin(&t.loss, &out[t.rows.start * out_dim..t.rows.end * out_dim], out_dim))
            .fold(f64::INFINITY, f64::min),
        _ => f64::INFINITY,
    }
}

pub struct GradCase {
    pub spec: NetworkSpec,
    pub params: ParamVector,
    pub rows: Vec<Vec<f64>>,
    pub loss: Loss,
}

impl GradCase {
    pub fn batch(&self) -> InputBatch {
        InputBatch::from_rows(&self.rows).unwrap()
    }

    pub fn outputs(&self, params: &ParamVector) -> (Vec<f64>, f64) {
        let mut out = Vec::new();
        let mut kink = f64::INFINITY;
        for r in &self.rows {
            let (o, k) = oracle_forward(params, &self.spec, r);
            out.extend(o);
            kink = kink.min(k);
        }
        (out, kink)
    }

    pub fn loss_at(&self, params: &ParamVector) -> f64 {
        oracle_loss(&self.loss, &self.outputs(params).0, self.spec.output_dim())
    }

    /// Whether every ReLU unit and L1 residual is far enough from its kink
    /// for a central difference with step `h` to see a smooth function.
    pub fn smooth_enough(&self, margin: f64) -> bool {
        let (out, kink) = self.outputs(&self.params);
        kink > margin && l1_margin(&self.loss, &out, self.spec.output_dim()) > margin
    }
}

fn random_activation<R: Rng>(rng: &mut R, with_relu: bool) -> Activation {
    let choices: &[Activation] = if with_relu {
        &[Activation::Relu, Activation::Tanh, Activation::Sigmoid]
    } else {
        &[Activation::Tanh, Activation::Sigmoid]
    };
    choices[rng.random_range(0..choices.len())]
}

/// A small random network, batch and loss. ReLU cases are redrawn until no
/// unit sits within `1e-3` of its kink.
pub fn random_grad_case<R: Rng>(rng: &mut R) -> GradCase {
    loop {
        let case = draw_case(rng);
        if case.smooth_enough(1e-3) {
            return case;
        }
    }
}

fn draw_case<R: Rng>(rng: &mut R) -> GradCase {
    let depth = rng.random_range(1..=3);
    let mut sizes = vec![rng.random_range(1..=5)];
    for _ in 0..depth {
        sizes.push(rng.random_range(2..=6));
    }
    let eikonal = rng.random_bool(0.25);
    let out_dim = if eikonal { 1 } else { rng.random_range(1..=2) };
    sizes.push(out_dim);
    let hidden = random_activation(rng, true);
    let output = if rng.random_bool(0.5) {
        Activation::Identity
    } else {
        random_activation(rng, false)
    };
    let spec = NetworkSpec::mlp(&sizes, hidden, output, rng.random());
    let values = (0..spec.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let params = ParamVector::from_values(&spec, values).unwrap();
    let in_dim = sizes[0];
    let n_rows = if eikonal { 4 * rng.random_range(1..=3) } else { rng.random_range(1..=6) };
    let rows: Vec<Vec<f64>> = if eikonal {
        let h = 0.05;
        (0..n_rows / 4)
            .flat_map(|_| {
                let p: Vec<f64> = (0..in_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let mut stencil = Vec::new();
                for (axis, sign) in [(0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0)] {
                    let mut q = p.clone();
                    if axis < in_dim {
                        q[axis] += sign * h;
                    }
                    stencil.push(q);
                }
                stencil
            })
            .collect()
    } else {
        (0..n_rows)
            .map(|_| (0..in_dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    };
    let n_out = n_rows * out_dim;
    let loss = if eikonal {
        Loss::Eikonal { h: 0.05 }
    } else {
        let kinds = if n_rows >= 2 { 4 } else { 3 };
        match rng.random_range(0..kinds) {
            0 => Loss::SquaredNorm,
            1 => Loss::L1 { targets: uniform_vec(rng, n_out) },
            2 => Loss::L2 { targets: uniform_vec(rng, n_out) },
            _ => {
                let split = n_rows / 2;
                let t1 = uniform_vec(rng, split * out_dim);
                let t2 = uniform_vec(rng, (n_rows - split) * out_dim);
                Loss::Sum(vec![
                    LossTerm {
                        weight: rng.random_range(0.1..2.0),
                        rows: 0..split,
                        loss: Loss::L1 { targets: t1 },
                    },
                    LossTerm {
                        weight: rng.random_range(0.1..2.0),
                        rows: split..n_rows,
                        loss: Loss::L2 { targets: t2 },
                    },
                ])
            }
        }
    };
    GradCase {
        spec,
        params,
        rows,
        loss,
    }
}

pub fn uniform_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Central-difference gradient of the oracle loss.
pub fn fd_gradient(case: &GradCase, h: f64) -> Vec<f64> {
    let base = case.params.values().to_vec();
    (0..base.len())
        .map(|i| {
            let mut plus = base.clone();
            plus[i] += h;
            let mut minus = base.clone();
            minus[i] -= h;
            let lp = case.loss_at(&case.params.with_values(plus).unwrap());
            let lm = case.loss_at(&case.params.with_values(minus).unwrap());
            (lp - lm) / (2.0 * h)
        })
        .collect()
}

/// Relative gradient error. Central differences carry rounding noise of
/// about `eps * loss / h` (1e-10 here), so the scale is floored at `1e-4`:
/// coordinates below it must agree to 1e-8 absolutely.
pub fn grad_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

/// Exhaustive nearest neighbour: `(index, distance)` of the first minimum.
pub fn brute_nearest(points: &[Point2], q: Point2) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let d = ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt();
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((i, d));
        }
    }
    best
}

/// Random SDF grid from a union of a few discs.
pub fn random_disc_grid<R: Rng>(rng: &mut R, resolution: usize) -> SdfGrid {
    let discs: Vec<(f64, f64, f64)> = (0..rng.random_range(1..=3))
        .map(|_| {
            (
                rng.random_range(0.25..0.75),
                rng.random_range(0.25..0.75),
                rng.random_range(0.08..0.22),
            )
        })
        .collect();
    SdfGrid::from_fn(resolution, |p| {
        discs
            .iter()
            .map(|&(cx, cy, r)| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt() - r)
            .fold(f64::INFINITY, f64::min)
    })
    .unwrap()
}

pub fn random_cloud<R: Rng>(rng: &mut R, n: usize) -> SurfaceSamples {
    let points = (0..n)
        .map(|_| Point2::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)))
        .collect();
    let normals = (0..n)
        .map(|_| {
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            Point2::new(a.cos(), a.sin())
        })
        .collect();
    SurfaceSamples { points, normals }
}

/// A toy run small enough for integration tests: 120 samples, a narrow
/// network and short phases.
pub fn tiny_config(seed: u64) -> RunConfig {
    let mut cfg = RunConfig::toy().with_seed(seed);
    cfg.data.n = 120;
    cfg.data.labeled_fraction = 0.25;
    cfg.network.hidden = vec![16];
    cfg.warmup = PhaseConfig {
        epochs: 6,
        batch_size: 8,
        lr: 0.05,
        decay_epochs: vec![4],
    };
    cfg.semi = PhaseConfig {
        epochs: 3,
        batch_size: 16,
        lr: 0.05,
        decay_epochs: vec![2],
    };
    cfg.ablation_epochs = 2;
    cfg.importance.n_batches = 2;
    cfg.assess.n_probes = 8;
    cfg.eval_grid = 24;
    cfg.eval_every = 2;
    cfg
}
