//! Independent oracles shared by the integration tests and the acceptance
//! suite. Nothing here calls the code it checks.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use nodegen_core::geometry::{ConnectionMap, ParameterVector};
use nodegen_core::neuralnet::{loss_value, loss_and_grad, Activation, LayerSpec, Loss, Mlp, Mode};
use nodegen_core::svc::{solve, KernelSpec, SvcConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------- geometry

type P = (f64, f64);

fn sub(a: P, b: P) -> P {
    (a.0 - b.0, a.1 - b.1)
}

fn cross(a: P, b: P) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

/// Node centers and radii, index 0 is node 1: nodes 1-6 free, node 7 on
/// the ground line, node 8 the fixed feed at (0, 1.5) with radius 0.5.
pub fn nodes_of(p: &ParameterVector) -> Vec<(P, f64)> {
    let v = p.0;
    let mut out: Vec<(P, f64)> = (0..6).map(|i| ((v[i], v[7 + i]), v[13 + i])).collect();
    out.push(((v[6], 0.0), v[19]));
    out.push(((0.0, 1.5), 0.5));
    out
}

/// Closed segment intersection by solving for both parameters.
pub fn oracle_segments_cross(a: P, b: P, c: P, d: P) -> bool {
    let r = sub(b, a);
    let s = sub(d, c);
    let denom = cross(r, s);
    let ca = sub(c, a);
    if denom != 0.0 {
        let t = cross(ca, s) / denom;
        let u = cross(ca, r) / denom;
        return (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u);
    }
    if cross(ca, r) != 0.0 {
        return false;
    }
    // collinear: overlap of the projections on r
    let rr = r.0 * r.0 + r.1 * r.1;
    let t0 = (ca.0 * r.0 + ca.1 * r.1) / rr;
    let t1 = t0 + (s.0 * r.0 + s.1 * r.1) / rr;
    t0.min(t1) <= 1.0 && t0.max(t1) >= 0.0
}

pub fn oracle_trapezoid(a: (P, f64), b: (P, f64)) -> [P; 4] {
    let (pa, ra) = a;
    let (pb, rb) = b;
    let d = sub(pb, pa);
    let len = (d.0 * d.0 + d.1 * d.1).sqrt();
    let n = (-d.1 / len, d.0 / len);
    [
        (pa.0 + ra * n.0, pa.1 + ra * n.1),
        (pb.0 + rb * n.0, pb.1 + rb * n.1),
        (pb.0 - rb * n.0, pb.1 - rb * n.1),
        (pa.0 - ra * n.0, pa.1 - ra * n.1),
    ]
}

/// Even-odd ray casting.
fn inside(poly: &[P], q: P) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (pi, pj) = (poly[i], poly[j]);
        if (pi.1 > q.1) != (pj.1 > q.1) && q.0 < (pj.0 - pi.0) * (q.1 - pi.1) / (pj.1 - pi.1) + pi.0 {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn dist_to_segment(q: P, a: P, b: P) -> f64 {
    let ab = sub(b, a);
    let len2 = ab.0 * ab.0 + ab.1 * ab.1;
    let t = (((q.0 - a.0) * ab.0 + (q.1 - a.1) * ab.1) / len2).clamp(0.0, 1.0);
    let c = (a.0 + t * ab.0, a.1 + t * ab.1);
    ((q.0 - c.0).powi(2) + (q.1 - c.1).powi(2)).sqrt()
}

/// Brute-force checker: pairwise crossing of non-adjacent center lines,
/// the `y <= 0` half-plane for every non-ground trapezoid, and disc overlap
/// with the feed for every trapezoid not incident to it.
pub fn oracle_geometry_pass(p: &ParameterVector, conn: &ConnectionMap) -> bool {
    let nodes = nodes_of(p);
    let pairs = conn.pairs();
    for &(a, b) in pairs {
        if nodes[a - 1].0 == nodes[b - 1].0 {
            return false;
        }
    }
    for i in 0..pairs.len() {
        for j in 0..pairs.len() {
            let (p1, p2) = (pairs[i], pairs[j]);
            if i == j || p1.0 == p2.0 || p1.0 == p2.1 || p1.1 == p2.0 || p1.1 == p2.1 {
                continue;
            }
            if oracle_segments_cross(nodes[p1.0 - 1].0, nodes[p1.1 - 1].0, nodes[p2.0 - 1].0, nodes[p2.1 - 1].0) {
                return false;
            }
        }
    }
    let (feed_c, feed_r) = nodes[7];
    for &(a, b) in pairs {
        let poly = oracle_trapezoid(nodes[a - 1], nodes[b - 1]);
        if a != 7 && b != 7 && poly.iter().any(|v| v.1 <= 0.0) {
            return false;
        }
        if a != 8 && b != 8 {
            let near = (0..4).any(|k| dist_to_segment(feed_c, poly[k], poly[(k + 1) % 4]) <= feed_r);
            if near || inside(&poly, feed_c) {
                return false;
            }
        }
    }
    true
}

// --------------------------------------------------------------- surrogate

/// Straight-line surrogate for the default connection map: three paths
/// from the feed (8-4-3-2-1, 8-4-5-6, 8-4-3-7), each a Lorentzian notch.
pub fn oracle_surrogate_curve(p: &ParameterVector, freqs: &[f64]) -> Vec<f64> {
    let n = nodes_of(p);
    let seg = |a: usize, b: usize| {
        let (pa, pb) = (n[a - 1].0, n[b - 1].0);
        ((pa.0 - pb.0).powi(2) + (pa.1 - pb.1).powi(2)).sqrt()
    };
    let r = |k: usize| n[k - 1].1;
    let paths = [
        (seg(8, 4) + seg(4, 3) + seg(3, 2) + seg(2, 1), (r(4) + r(3) + r(2) + r(1)) / 4.0),
        (seg(8, 4) + seg(4, 5) + seg(5, 6), (r(4) + r(5) + r(6)) / 3.0),
        (seg(8, 4) + seg(4, 3) + seg(3, 7), (r(4) + r(3) + r(7)) / 3.0),
    ];
    freqs
        .iter()
        .map(|&f| {
            let mut total = 0.0;
            for &(len, rbar) in &paths {
                let fk = 75.0 / len;
                let depth = f64::min(3.0 + 20.0 * rbar, 30.0);
                let width = 0.15 + 0.5 * rbar;
                total += depth / (1.0 + ((f - fk) / width).powi(2));
            }
            let s = -total;
            if s < -60.0 {
                -60.0
            } else if s > 0.0 {
                0.0
            } else {
                s
            }
        })
        .collect()
}

/// Mean positive excess of `s11` over `level` at the samples inside the band.
pub fn oracle_band_target(freqs: &[f64], s11: &[f64], lo: f64, hi: f64, level: f64) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..freqs.len() {
        if freqs[i] >= lo - 1e-9 && freqs[i] <= hi + 1e-9 {
            count += 1;
            if s11[i] > level {
                sum += s11[i] - level;
            }
        }
    }
    sum / count as f64
}

// ------------------------------------------------------------ neural nets

fn random_activation(rng: &mut ChaCha8Rng) -> Activation {
    match rng.gen_range(0..4) {
        0 => Activation::Relu,
        1 => Activation::LeakyRelu { slope: rng.gen_range(0.05..0.4) },
        2 => Activation::Sigmoid,
        _ => Activation::None,
    }
}

/// A random net of 1-3 layers with widths up to 8, mixed activations and
/// batchnorm, ending in one sigmoid unit.
pub fn random_mlp(seed: u64) -> Mlp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.gen_range(1..=3);
    let mut width = rng.gen_range(1..=8);
    let input = width;
    let mut specs = Vec::new();
    for i in 0..depth {
        let last = i + 1 == depth;
        let out = if last { 1 } else { rng.gen_range(1..=8) };
        let act = if last { Activation::Sigmoid } else { random_activation(&mut rng) };
        let spec = LayerSpec::new(width, out, act)
            .with_batchnorm(!last && rng.gen_bool(0.5))
            .with_bias(rng.gen_bool(0.8));
        specs.push(spec);
        width = out;
    }
    let _ = input;
    Mlp::new(&specs, seed).expect("chained widths")
}

/// Max relative error between analytic and central-difference gradients
/// of the mean BCE, with relative error floored at `1e-4` absolute scale.
pub fn gradient_check(seed: u64) -> f64 {
    let mut model = random_mlp(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    // move batchnorm scale/shift off their initial values
    let mut theta = model.params_flat();
    for v in theta.iter_mut() {
        *v += rng.gen_range(-0.3..0.3);
    }
    model.set_params_flat(&theta).unwrap();
    let rows = 6;
    let x = Array2::from_shape_simple_fn((rows, model.input_width()), || rng.gen_range(-1.0..1.0));
    let y = Array2::from_shape_simple_fn((rows, 1), || if rng.gen_bool(0.5) { 1.0 } else { 0.0 });
    let loss = Loss::Bce { targets: y.view() };
    let analytic = loss_and_grad(&model, x.view(), Mode::Train, loss).unwrap().grads.flatten();
    let h = 1e-5;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for i in 0..theta.len() {
        let mut p = theta.clone();
        p[i] = theta[i] + h;
        probe.set_params_flat(&p).unwrap();
        let up = loss_value(&probe, x.view(), Mode::Train, loss).unwrap();
        p[i] = theta[i] - h;
        probe.set_params_flat(&p).unwrap();
        let down = loss_value(&probe, x.view(), Mode::Train, loss).unwrap();
        let numeric = (up - down) / (2.0 * h);
        let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-4);
        worst = worst.max(err);
    }
    worst
}

// -------------------------------------------------------------------- svc

/// Log-barrier Newton method for
/// `min 1/2 a'Qa - 1'a  s.t.  y'a = 0, 0 <= a <= C`.
/// Returns the multipliers and the intercept (the equality multiplier).
pub fn barrier_qp(k: &DMatrix<f64>, y: &[f64], c: f64) -> (DVector<f64>, f64) {
    let n = y.len();
    let yv = DVector::from_column_slice(y);
    let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * k[(i, j)]);
    let n_pos = y.iter().filter(|&&v| v > 0.0).count() as f64;
    let n_neg = n as f64 - n_pos;
    let big = n_pos.max(n_neg);
    let mut a = DVector::from_fn(n, |i, _| if y[i] > 0.0 { c / 2.0 * n_neg / big } else { c / 2.0 * n_pos / big });

    let objective = |a: &DVector<f64>, t: f64| -> f64 {
        let f = 0.5 * a.dot(&(&q * a)) - a.sum();
        let barrier: f64 = a.iter().map(|&v| -(v.ln() + (c - v).ln())).sum();
        t * f + barrier
    };

    let mut t = 1.0;
    while (2 * n) as f64 / t > 1e-12 {
        for _ in 0..200 {
            let g = (&q * &a - DVector::from_element(n, 1.0)) * t
                + DVector::from_fn(n, |i, _| -1.0 / a[i] + 1.0 / (c - a[i]));
            let h = &q * t + DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    1.0 / (a[i] * a[i]) + 1.0 / ((c - a[i]) * (c - a[i]))
                } else {
                    0.0
                }
            });
            let mut kkt = DMatrix::zeros(n + 1, n + 1);
            kkt.view_mut((0, 0), (n, n)).copy_from(&h);
            kkt.view_mut((0, n), (n, 1)).copy_from(&yv);
            kkt.view_mut((n, 0), (1, n)).copy_from(&yv.transpose());
            let mut rhs = DVector::zeros(n + 1);
            rhs.rows_mut(0, n).copy_from(&(-&g));
            let sol = kkt.lu().solve(&rhs).expect("KKT system solvable");
            let step = sol.rows(0, n).into_owned();
            let decrement = -g.dot(&step);
            if decrement / 2.0 < 1e-14 {
                break;
            }
            let mut s = 1.0;
            while (0..n).any(|i| {
                let v = a[i] + s * step[i];
                v <= 0.0 || v >= c
            }) {
                s *= 0.5;
            }
            let f0 = objective(&a, t);
            while objective(&(&a + &step * s), t) > f0 - 0.25 * s * decrement {
                s *= 0.5;
                if s < 1e-20 {
                    break;
                }
            }
            a += &step * s;
        }
        t *= 10.0;
    }
    // Margin points (0 < a_i < C) satisfy y_i f(x_i) = 1 exactly, which
    // pins the equality multiplier b.
    let free: Vec<usize> = (0..n).filter(|&i| a[i] > 1e-6 * c && a[i] < c * (1.0 - 1e-6)).collect();
    assert!(!free.is_empty(), "oracle found no margin vector");
    let b = free
        .iter()
        .map(|&i| y[i] - (0..n).map(|j| a[j] * y[j] * k[(i, j)]).sum::<f64>())
        .sum::<f64>()
        / free.len() as f64;
    (a, b)
}


pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    (-gamma * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()).exp()
}

/// Worst gap between SMO and dense-QP decision values over ten random
/// 20-point XOR problems, probed at the training points and 20 fresh ones.
pub fn svc_worst_gap() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 20;
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let labels: Vec<bool> = pts.iter().map(|p| (p[0] > 0.0) ^ (p[1] > 0.0)).collect();
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            continue;
        }
        let gamma = 1.0;
        let c = if seed % 2 == 0 { 1.0 } else { 10.0 };
        let x = Array2::from_shape_fn((n, 2), |(i, j)| pts[i][j]);
        let cfg = SvcConfig {
            kernel: KernelSpec::Rbf { gamma: Some(gamma) },
            c,
            // The default KKT tolerance (1e-3) bounds the dual gap, not the
            // decision values; solve tightly so this compares solutions.
            tol: 1e-6,
            ..SvcConfig::default()
        };
        let smo = solve(x.view(), &labels, &cfg).unwrap();
        assert!(smo.model.converged);

        let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
        let k = DMatrix::from_fn(n, n, |i, j| rbf(&pts[i], &pts[j], gamma));
        let (alpha, b) = barrier_qp(&k, &y, c);

        let probes: Vec<[f64; 2]> = pts
            .iter()
            .copied()
            .chain((0..20).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]))
            .collect();
        for p in &probes {
            let oracle: f64 = (0..n).map(|i| alpha[i] * y[i] * rbf(&pts[i], p, gamma)).sum::<f64>() + b;
            worst = worst.max((oracle - smo.model.decision(p)).abs());
        }
    }
    worst
}

// -------------------------------------------------------------- baselines

use nodegen_core::baselines::{FnObjective, Method, RunRecord};

pub const ROSENBROCK_START: [f64; 5] = [-1.5, 1.5, -1.0, 0.5, 1.2];

/// 5-D Rosenbrock on `[-2, 2]^5`, goal `f < 1e-3`, budget `1e4`.
pub fn rosenbrock_run(method: Method, seed: u64) -> RunRecord {
    let obj = FnObjective::rosenbrock(5, -2.0, 2.0, 1e-3);
    method.run(&obj, &ROSENBROCK_START, 10_000, seed, true).unwrap()
}

/// 20-D sphere on `[-5, 5]^20`, goal `f < 1e-6`, budget 5000.
pub fn cma_sphere_run(seed: u64) -> RunRecord {
    let obj = FnObjective::sphere(20, 5.0, 1e-6);
    Method::CmaEs.run(&obj, &[0.0; 20], 5000, seed, true).unwrap()
}

/// 2-D sphere from (1, 1), goal `f < 1e-6`, budget 200.
pub fn nelder_mead_sphere_run() -> RunRecord {
    let obj = FnObjective::sphere(2, 5.0, 1e-6);
    Method::NelderMead.run(&obj, &[1.0, 1.0], 200, 0, true).unwrap()
}

/// Seeds (of 0..10) on which `method` reaches the Rosenbrock goal.
pub fn rosenbrock_successes(method: Method) -> usize {
    (0..10).filter(|&s| rosenbrock_run(method, s).evals_to_goal.is_some()).count()
}
