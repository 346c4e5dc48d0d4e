mod common;

use proptest::collection::vec;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use semisdf::checkpoint::{Checkpoint, CheckpointMeta};
use semisdf::ema::{base_momentum, ema_update_fixed, ema_update_regularized, effective_momentum, EmaConfig};
use semisdf::importance::{importance_from_batches, normalize_importance, ImportanceMap};
use semisdf::metrics::{chamfer_l1, iou_occupancy, NearestIndex, SurfaceSamples};
use semisdf::nnet::{forward_backward, sgd_step, Activation, InputBatch, NetworkSpec, ParamVector};
use semisdf::pseudo::{blended_loss, pseudo_weight, WeightParams};
use semisdf::trainer::{RunLog, RunLogRow};
use semisdf::data::OccupancyGrid;
use semisdf::Point2;

fn small_spec() -> NetworkSpec {
    NetworkSpec::mlp(&[3, 4, 1], Activation::Tanh, Activation::Identity, 0)
}

fn params(values: Vec<f64>) -> ParamVector {
    ParamVector::from_values(&small_spec(), values).unwrap()
}

const N_PARAMS: usize = 3 * 4 + 4 + 4 + 1;

fn point() -> impl Strategy<Value = Point2> {
    (0.0..1.0f64, 0.0..1.0f64).prop_map(|(x, y)| Point2::new(x, y))
}

fn cloud(max: usize) -> impl Strategy<Value = SurfaceSamples> {
    vec(point(), 1..max).prop_map(|points| SurfaceSamples {
        normals: vec![Point2::new(1.0, 0.0); points.len()],
        points,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradients_match_finite_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let case = common::random_grad_case(&mut rng);
        let (_, g) = forward_backward(&case.params, &case.spec, &case.batch(), &case.loss).unwrap();
        for (a, n) in g.values.iter().zip(common::fd_gradient(&case, 1e-5)) {
            prop_assert!(common::grad_error(*a, n) < 1e-4, "analytic {} numeric {}", a, n);
        }
    }

    #[test]
    fn ema_fixed_point(t in vec(-5.0..5.0f64, N_PARAMS), m in 0.0..=1.0f64, eta in 0.0..10.0f64,
                       omega in vec(0.0..10.0f64, N_PARAMS)) {
        let p = params(t);
        let map = ImportanceMap { omega, n_batches: 1, normalized: false };
        prop_assert_eq!(ema_update_fixed(&p, &p, m).unwrap(), p.clone());
        prop_assert_eq!(ema_update_regularized(&p, &p, m, &map, eta).unwrap(), p);
    }

    #[test]
    fn importance_damps_the_update(t in vec(-5.0..5.0f64, N_PARAMS), s in vec(-5.0..5.0f64, N_PARAMS),
                                   m in 0.0..1.0f64, eta in 0.0..10.0f64,
                                   low in vec(0.0..5.0f64, N_PARAMS), extra in vec(0.0..5.0f64, N_PARAMS)) {
        let (tp, sp) = (params(t.clone()), params(s));
        let high: Vec<f64> = low.iter().zip(&extra).map(|(a, b)| a + b).collect();
        let lo = ImportanceMap { omega: low, n_batches: 1, normalized: false };
        let hi = ImportanceMap { omega: high, n_batches: 1, normalized: false };
        let a = ema_update_regularized(&tp, &sp, m, &lo, eta).unwrap();
        let b = ema_update_regularized(&tp, &sp, m, &hi, eta).unwrap();
        let plain = ema_update_fixed(&tp, &sp, m).unwrap();
        for i in 0..N_PARAMS {
            let step_lo = (a.values()[i] - t[i]).abs();
            let step_hi = (b.values()[i] - t[i]).abs();
            let step_plain = (plain.values()[i] - t[i]).abs();
            prop_assert!(step_hi <= step_lo + 1e-12);
            prop_assert!(step_lo <= step_plain + 1e-12);
        }
    }

    #[test]
    fn base_momentum_rises_from_m0_to_one(m0 in 0.0..1.0f64, total in 1usize..500, a in 0usize..600, b in 0usize..600) {
        let (lo, hi) = (a.min(b), a.max(b));
        let (x, y) = (base_momentum(lo, total, m0), base_momentum(hi, total, m0));
        prop_assert!(x <= y + 1e-15);
        prop_assert!(x >= m0 - 1e-15 && y <= 1.0);
    }

    #[test]
    fn effective_momentum_stays_clamped(gamma in 0.0..2.0f64, m in 0.0..1.0f64) {
        let cfg = EmaConfig::default();
        let e = effective_momentum(gamma, m, &cfg);
        prop_assert!(e >= cfg.m_min && e <= cfg.m_max);
    }

    #[test]
    fn pseudo_weight_bounds(cons in 0.0..2.0f64, var in 0.0..2.0f64, d in 0.0..1.0f64,
                            alpha in 0.0..10.0f64, beta in 0.0..10.0f64) {
        let p = WeightParams { alpha, beta, ..WeightParams::default() };
        let w = pseudo_weight(cons, var, &p);
        prop_assert!((0.0..=1.0).contains(&w));
        prop_assert!(pseudo_weight(cons + d, var, &p) <= w);
        prop_assert!(pseudo_weight(cons, var + d, &p) <= w);
    }

    #[test]
    fn blended_loss_interpolates(sup in 0.0..5.0f64, unsup in 0.0..5.0f64, w in 0.0..=1.0f64, lambda in 0.0..=1.0f64) {
        let v = blended_loss(&[("sdf", sup)], &[("sdf", unsup)], w, lambda).unwrap();
        prop_assert!(v >= sup.min(unsup) - 1e-12 && v <= sup.max(unsup) + 1e-12);
        prop_assert_eq!(blended_loss(&[("sdf", sup)], &[("sdf", unsup)], 0.0, lambda).unwrap(), sup);
    }

    #[test]
    fn importance_ignores_batch_order(xs in vec(vec(-1.0..1.0f64, 3), 1..12), values in vec(-1.0..1.0f64, N_PARAMS),
                                      rot in 0usize..12) {
        let spec = small_spec();
        let p = params(values);
        let batches: Vec<Vec<InputBatch>> = xs.iter().map(|x| vec![InputBatch::from_rows(&[x.clone()]).unwrap()]).collect();
        let mut shuffled = batches.clone();
        shuffled.rotate_left(rot % batches.len());
        shuffled.reverse();
        let a = importance_from_batches(&p, &spec, &batches).unwrap();
        let b = importance_from_batches(&p, &spec, &shuffled).unwrap();
        for (x, y) in a.omega.iter().zip(&b.omega) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
        prop_assert!(a.omega.iter().all(|w| *w >= 0.0));
        let norm = normalize_importance(&a);
        if a.mean() > 0.0 {
            prop_assert!((norm.mean() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sgd_with_zero_lr_is_identity(values in vec(-1.0..1.0f64, N_PARAMS), x in vec(-1.0..1.0f64, 3)) {
        let p = params(values);
        let (_, g) = forward_backward(&p, &small_spec(), &InputBatch::from_rows(&[x]).unwrap(),
                                      &semisdf::nnet::Loss::SquaredNorm).unwrap();
        prop_assert_eq!(sgd_step(&p, &g, 0.0).unwrap(), p);
    }

    #[test]
    fn chamfer_is_symmetric_and_nonnegative(a in cloud(120), b in cloud(120)) {
        let ab = chamfer_l1(&a, &b).unwrap();
        prop_assert_eq!(ab, chamfer_l1(&b, &a).unwrap());
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(chamfer_l1(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn nearest_index_agrees_with_brute_force(a in cloud(200), qs in vec((-0.5..1.5f64, -0.5..1.5f64), 1..40)) {
        let index = NearestIndex::new(&a.points);
        for (x, y) in qs {
            let q = Point2::new(x, y);
            let (i, d) = index.nearest(q).unwrap();
            let (_, d_ref) = common::brute_nearest(&a.points, q).unwrap();
            prop_assert!((d - d_ref).abs() <= 1e-12);
            prop_assert!((a.points[i].dist(q) - d).abs() <= 1e-12);
        }
    }

    #[test]
    fn iou_is_symmetric(a in vec(any::<bool>(), 64), b in vec(any::<bool>(), 64)) {
        let ga = OccupancyGrid { resolution: 8, cells: a };
        let gb = OccupancyGrid { resolution: 8, cells: b };
        let x = iou_occupancy(&ga, &gb).unwrap();
        prop_assert_eq!(x, iou_occupancy(&gb, &ga).unwrap());
        prop_assert!((0.0..=100.0).contains(&x));
        prop_assert_eq!(iou_occupancy(&ga, &ga).unwrap(), 100.0);
    }

    #[test]
    fn checkpoints_round_trip_exactly(values in vec(-1e6..1e6f64, N_PARAMS), seed in any::<u64>()) {
        let meta = CheckpointMeta { phase: "warmup".into(), epoch: 3, seed };
        let ckpt = Checkpoint::new(&small_spec(), &params(values), meta);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        ckpt.save(&path).unwrap();
        prop_assert_eq!(Checkpoint::load(&path).unwrap(), ckpt);
    }

    #[test]
    fn runlog_round_trips(loss in proptest::option::of(-1e3..1e3f64), lr in 0.0..1.0f64, epoch in 0usize..500) {
        let mut row = RunLogRow::new("semi", epoch);
        row.lr = Some(lr);
        row.train_loss = loss;
        let log = RunLog { rows: vec![row] };
        prop_assert_eq!(RunLog::from_csv(&log.to_csv().unwrap()).unwrap(), log);
    }
}
