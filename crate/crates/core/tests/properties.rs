//! Property tests for the invariants that hold for every input.

use std::sync::{Arc, Mutex};

use ndarray::{Array2, Axis};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nodegen_core::baselines::{FnObjective, Method};
use nodegen_core::criteria::{band_target, percentile_threshold, CriterionSpec, PerformanceVector};
use nodegen_core::geometry::{build_layout, check_geometry, sample_valid, ConnectionMap, ParameterRanges, ParameterVector};
use nodegen_core::neuralnet::{Activation, LayerSpec, Mlp, Mode};
use nodegen_core::simulator::{BudgetLedger, BudgetedEvaluator, Evaluator, FrequencySweep, S11Curve, SurrogateEvaluator};
use nodegen_core::svc::{solve, KernelSpec, SvcConfig};

fn valid_design(seed: u64) -> ParameterVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_valid(&ParameterRanges::default(), &ConnectionMap::default(), &mut rng, 100_000).expect("valid design")
}

fn metrics(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-20.0f64..0.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn per_metric_label_is_monotone(p in metrics(3), drop in prop::collection::vec(0.0f64..5.0, 3), c in metrics(3)) {
        let crit = CriterionSpec::PerMetric { thresholds: c };
        let better: Vec<f64> = p.iter().zip(&drop).map(|(a, d)| a - d).collect();
        if crit.label(&PerformanceVector(p)).unwrap() {
            prop_assert!(crit.label(&PerformanceVector(better)).unwrap());
        }
    }

    #[test]
    fn weighted_label_is_monotone(p in metrics(3), drop in prop::collection::vec(0.0f64..5.0, 3),
                                  w in prop::collection::vec(0.0f64..2.0, 3), c in -30.0f64..0.0) {
        let crit = CriterionSpec::WeightedSum { weights: w, threshold: c };
        let better: Vec<f64> = p.iter().zip(&drop).map(|(a, d)| a - d).collect();
        if crit.label(&PerformanceVector(p)).unwrap() {
            prop_assert!(crit.label(&PerformanceVector(better)).unwrap());
        }
    }

    #[test]
    fn median_threshold_labels_about_half(raw in prop::collection::vec(-8i32..8, 1..200)) {
        // integer values force ties
        let v: Vec<f64> = raw.iter().map(|&x| x as f64 * 0.5).collect();
        let c = percentile_threshold(&v, 50.0).unwrap();
        let n = v.len() as f64;
        let valid = v.iter().filter(|&&x| x <= c).count() as f64;
        let ties = v.iter().filter(|&&x| x == c).count() as f64;
        prop_assert!(valid / n >= 0.5);
        prop_assert!(valid / n <= 0.5 + ties / n);
    }

    #[test]
    fn percentile_is_a_member_and_monotone(v in prop::collection::vec(-50.0f64..50.0, 1..100), q1 in 0.1f64..100.0, q2 in 0.1f64..100.0) {
        let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
        let a = percentile_threshold(&v, lo).unwrap();
        let b = percentile_threshold(&v, hi).unwrap();
        prop_assert!(a <= b);
        prop_assert!(v.contains(&a) && v.contains(&b));
    }

    #[test]
    fn band_target_nonnegative_and_zero_iff_matched(s in prop::collection::vec(-60.0f64..0.0, 81), lo in 0.0f64..4.0, width in 0.5f64..4.0, level in -30.0f64..-1.0) {
        let sweep = FrequencySweep::new(0.0, 8.0, 81).unwrap();
        let curve = S11Curve::new(sweep.grid(), s.clone()).unwrap();
        let hi = lo + width;
        let t = band_target(&curve, (lo, hi), level).unwrap();
        prop_assert!(t >= 0.0);
        let matched = curve.freqs().iter().zip(&s).filter(|(f, _)| **f >= lo - 1e-9 && **f <= hi + 1e-9).all(|(_, v)| *v <= level);
        prop_assert_eq!(t == 0.0, matched);
    }

    #[test]
    fn sampled_vectors_stay_in_range(seed in any::<u64>()) {
        let ranges = ParameterRanges::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            prop_assert!(ranges.contains(&ranges.sample(&mut rng)));
        }
    }

    #[test]
    fn checker_is_pure(seed in any::<u64>()) {
        let ranges = ParameterRanges::default();
        let conn = ConnectionMap::default();
        let p = ranges.sample(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = check_geometry(&p, &conn);
        let b = check_geometry(&p.clone(), &conn);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn trapezoid_ends_are_node_diameters(seed in any::<u64>()) {
        let conn = ConnectionMap::default();
        let p = valid_design(seed);
        let nodes = conn.nodes(&p);
        for t in build_layout(&p, &conn).unwrap().trapezoids {
            let d = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).hypot(a[1] - b[1]);
            prop_assert!((d(t.vertices[0], t.vertices[3]) - 2.0 * nodes[t.from - 1].r).abs() < 1e-12);
            prop_assert!((d(t.vertices[1], t.vertices[2]) - 2.0 * nodes[t.to - 1].r).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn surrogate_is_clamped_deterministic_and_continuous(seed in any::<u64>(), idx in 0usize..20) {
        let ev = SurrogateEvaluator::default();
        let p = valid_design(seed);
        let a = ev.evaluate(&p).unwrap();
        prop_assert!(a.s11().iter().all(|v| (-60.0..=0.0).contains(v)));
        prop_assert_eq!(&a, &ev.evaluate(&p).unwrap());
        let mut q = p;
        let step = if q.0[idx] + 1e-7 <= ParameterRanges::default().get(idx).hi { 1e-7 } else { -1e-7 };
        q.0[idx] += step;
        let b = ev.evaluate(&q).unwrap();
        let gap = a.s11().iter().zip(b.s11()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(gap < 1e-3, "jump {gap} for step on parameter {idx}");
    }

    #[test]
    fn budget_ledger_counts_every_call(limit in 0u64..20, calls in 0u64..30) {
        let ev = SurrogateEvaluator::default();
        let ledger = BudgetLedger::new(limit);
        let be = BudgetedEvaluator::new(&ev, &ledger);
        let p = valid_design(1);
        let ok = (0..calls).filter(|_| be.evaluate(&p).is_ok()).count() as u64;
        prop_assert_eq!(ok, calls.min(limit));
        prop_assert_eq!(ledger.used(), calls.min(limit));
    }

    #[test]
    fn eval_mode_ignores_batch_order(seed in any::<u64>(), rows in 2usize..12) {
        let specs = vec![
            LayerSpec::new(4, 6, Activation::LEAKY_DEFAULT).with_batchnorm(true),
            LayerSpec::new(6, 1, Activation::Sigmoid),
        ];
        let mut net = Mlp::new(&specs, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let x = Array2::from_shape_simple_fn((rows, 4), || rand::Rng::gen_range(&mut rng, -2.0..2.0));
        let cache = net.forward(x.view(), Mode::Train).unwrap();
        net.absorb_batch_stats(&cache);
        let out = net.predict(x.view()).unwrap();
        let perm: Vec<usize> = (0..rows).rev().collect();
        let shuffled = x.select(Axis(0), &perm);
        let out2 = net.predict(shuffled.view()).unwrap();
        for (i, &j) in perm.iter().enumerate() {
            prop_assert!((out2[[i, 0]] - out[[j, 0]]).abs() < 1e-12);
        }
        // a single row takes a different product kernel; equal up to rounding
        let one = net.predict(x.slice(ndarray::s![0..1, ..])).unwrap();
        prop_assert!((one[[0, 0]] - out[[0, 0]]).abs() < 1e-12);
    }

    #[test]
    fn batchnorm_statistics(seed in any::<u64>(), rows in 2usize..20) {
        let specs = vec![LayerSpec::new(3, 4, Activation::None).with_batchnorm(true)];
        let mut net = Mlp::new(&specs, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let x = Array2::from_shape_simple_fn((rows, 3), || rand::Rng::gen_range(&mut rng, -3.0..3.0));
        let cache = net.forward(x.view(), Mode::Train).unwrap();
        let y = cache.output();
        let mut z = x.dot(&net.layers[0].weight);
        if let Some(b) = &net.layers[0].bias {
            z += b;
        }
        let n = rows as f64;
        net.absorb_batch_stats(&cache);
        let bn = net.layers[0].bn.as_ref().unwrap();
        for c in 0..4 {
            let col = y.column(c);
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-9);
            let zc = z.column(c);
            let zm = zc.sum() / n;
            let zv = zc.iter().map(|v| (v - zm).powi(2)).sum::<f64>() / n;
            if zv > 1e-6 {
                prop_assert!((var - 1.0).abs() < 1e-6, "var {var}");
            }
            prop_assert!((bn.running_mean[c] - 0.1 * zm).abs() < 1e-12);
            prop_assert!((bn.running_var[c] - (0.9 + 0.1 * zv * n / (n - 1.0))).abs() < 1e-12);
        }
    }

    #[test]
    fn svc_dual_is_feasible(seed in any::<u64>(), n in 4usize..30, c in 0.1f64..10.0, rbf in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_simple_fn((n, 2), || rand::Rng::gen_range(&mut rng, -1.0..1.0));
        let mut labels: Vec<bool> = x.rows().into_iter().map(|r| r[0] + 0.3 * r[1] > 0.0).collect();
        labels[0] = true;
        labels[1] = false;
        let kernel = if rbf { KernelSpec::Rbf { gamma: None } } else { KernelSpec::Linear };
        let sol = solve(x.view(), &labels, &SvcConfig { kernel, c, ..SvcConfig::default() }).unwrap();
        let mut balance = 0.0;
        for (a, &l) in sol.alpha.iter().zip(&labels) {
            prop_assert!(*a >= 0.0 && *a <= c);
            balance += if l { *a } else { -*a };
        }
        prop_assert!(balance.abs() < 1e-9 * c.max(1.0) * n as f64);
    }
}

fn logged_sphere(log: Arc<Mutex<Vec<Vec<f64>>>>) -> FnObjective {
    FnObjective::new(vec![-1.0; 4], vec![2.0; 4], f64::NEG_INFINITY, move |x| {
        log.lock().unwrap().push(x.to_vec());
        x.iter().map(|v| (v - 0.3) * (v - 0.3)).sum()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn optimizers_respect_bounds_budget_and_seed(seed in any::<u64>(), budget in 1u64..400) {
        for m in Method::ALL {
            let log = Arc::new(Mutex::new(Vec::new()));
            let obj = logged_sphere(log.clone());
            let start = [1.5, -0.5, 0.0, 1.0];
            let a = m.run(&obj, &start, budget, seed, false).unwrap();
            let points = log.lock().unwrap().clone();
            prop_assert_eq!(a.evaluations, budget, "{}", m);
            prop_assert_eq!(points.len() as u64, budget, "{}", m);
            prop_assert!(points.iter().flatten().all(|v| (-1.0..=2.0).contains(v)), "{} left the box", m);
            prop_assert!(a.trace.windows(2).all(|w| w[1] <= w[0]));
            let b = m.run(&logged_sphere(Arc::new(Mutex::new(Vec::new()))), &start, budget, seed, false).unwrap();
            prop_assert_eq!(a.trace, b.trace);
            prop_assert_eq!(a.best_x, b.best_x);
        }
    }
}
