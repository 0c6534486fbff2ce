//! Acceptance gate. Each test prints one `PASS`/`FAIL` line with the measured
//! quantity next to its threshold, then asserts.
//!
//! Run with `cargo test -p wasserstat --test acceptance -- --nocapture` to see
//! the lines.

use std::time::Instant;

use ndarray::{array, Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use wasserstat::estimators::{consistency_sweep, loglog_slope, w_equation_residuals};
use wasserstat::model::{fisher_score, sample_model, sample_model_with};
use wasserstat::rng::{derive_seed, rng_from_seed};
use wasserstat::wscore::{poisson_residual, wscore};
use wasserstat::*;

fn report(id: u32, name: &str, ok: bool, detail: String) {
    println!(
        "criterion {id:>2} {} {name}: {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
}

/// Gauss-Jordan with partial pivoting, kept independent of the eigensolver.
fn gauss_jordan_inverse(a: &Array2<f64>) -> Array2<f64> {
    let d = a.nrows();
    let mut m = a.clone();
    let mut inv = Array2::<f64>::eye(d);
    for c in 0..d {
        let p = (c..d)
            .max_by(|&i, &j| m[[i, c]].abs().total_cmp(&m[[j, c]].abs()))
            .unwrap();
        for k in 0..d {
            m.swap([c, k], [p, k]);
            inv.swap([c, k], [p, k]);
        }
        let piv = m[[c, c]];
        for k in 0..d {
            m[[c, k]] /= piv;
            inv[[c, k]] /= piv;
        }
        for r in 0..d {
            if r != c {
                let f = m[[r, c]];
                for k in 0..d {
                    m[[r, k]] -= f * m[[c, k]];
                    inv[[r, k]] -= f * inv[[c, k]];
                }
            }
        }
    }
    inv
}

fn frob(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn random_spd(d: usize, rng: &mut impl Rng) -> Array2<f64> {
    let g = Array2::from_shape_fn((d, d), |_| rng.sample::<f64, _>(StandardNormal));
    g.dot(&g.t()) + Array2::<f64>::eye(d) * 0.1
}

fn random_sym(d: usize, rng: &mut impl Rng) -> Array2<f64> {
    let g = Array2::from_shape_fn((d, d), |_| rng.sample::<f64, _>(StandardNormal));
    &g + &g.t()
}

fn theta_distance(a: &AffineParamsF64, b: &AffineParamsF64) -> f64 {
    a.to_vec()
        .iter()
        .zip(b.to_vec())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[test]
fn criterion_01_poisson_certification() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut rng = rng_from_seed(101);
    for shape_id in 0..2 {
        for d in 1..=3 {
            let shape = match shape_id {
                0 => ShapeF64::gaussian(d).unwrap(),
                _ => ShapeF64::student_t(d, 5.0).unwrap(),
            };
            for _ in 0..10 {
                let theta = AffineParamsF64::random(d, &mut rng).unwrap();
                let points = sample_model_with(&theta, &shape, &mut rng, 100);
                for param in ParamIndex::all(d) {
                    let score = wscore(&theta, param).unwrap();
                    for x in points.rows() {
                        let r =
                            poisson_residual(&theta, &shape, &score, param, x.as_slice().unwrap())
                                .unwrap();
                        worst = worst.max(r.abs());
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = worst <= 1e-8 && secs <= 30.0;
    report(
        1,
        "Poisson residual",
        ok,
        format!("max |residual| {worst:.3e} <= 1e-8, {secs:.2}s <= 30s"),
    );
    assert!(ok);
}

#[test]
fn criterion_02_sylvester_lemma() {
    let start = Instant::now();
    let mut rng = rng_from_seed(202);
    let mut worst_residual = 0.0f64;
    let mut worst_trace = 0.0f64;
    for k in 0..200 {
        let d = 1 + k % 6;
        let a = random_spd(d, &mut rng);
        let b = random_sym(d, &mut rng);
        let x = sylvester_solve(
            &SpdMatrixF64::from_array(a.clone()).unwrap(),
            &SymMatrixF64::new(b.clone()).unwrap(),
        )
        .unwrap();
        let x = x.as_array();
        let residual = frob(&(a.dot(x) + x.dot(&a) - &b)) / frob(&b);
        let expected = gauss_jordan_inverse(&a).dot(&b).diag().sum() / 2.0;
        let trace = (x.diag().sum() - expected).abs() / (1.0 + expected.abs());
        worst_residual = worst_residual.max(residual);
        worst_trace = worst_trace.max(trace);
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = worst_residual <= 1e-9 && worst_trace <= 1e-9 && secs <= 5.0;
    report(
        2,
        "Sylvester solve",
        ok,
        format!("residual {worst_residual:.3e}, trace identity {worst_trace:.3e} <= 1e-9, {secs:.2}s <= 5s"),
    );
    assert!(ok);
}

#[test]
fn criterion_03_moment_estimator_exactness() {
    let mut rng = rng_from_seed(303);
    let mut worst = 0.0f64;
    let mut worst_moment = 0.0f64;
    for k in 0..50 {
        let d = 1 + k % 3;
        let n = rng.random_range(3 * d..200);
        let theta = AffineParamsF64::random(d, &mut rng).unwrap();
        let shape = match k % 3 {
            0 => ShapeF64::gaussian(d).unwrap(),
            1 => ShapeF64::student_t(d, 5.0).unwrap(),
            _ => ShapeF64::uniform_ball(d).unwrap(),
        };
        let data = sample_model_with(&theta, &shape, &mut rng, n);
        let est = w_estimate(&data.view()).unwrap().estimate;
        let r = w_equation_residuals(&est, &data.view()).unwrap();
        worst = worst.max(r.iter().fold(0.0, |m, v| m.max(v.abs())));

        // direct moments: Λ̂⁻² must equal the 1/n covariance
        let mean = data.mean_axis(ndarray::Axis(0)).unwrap();
        let centered = &data - &mean;
        let cov = centered.t().dot(&centered) / n as f64;
        let dev = frob(&(est.sigma().as_array() - &cov)) / frob(&cov);
        worst_moment = worst_moment
            .max(dev)
            .max(frob(&(est.mu() - &mean).insert_axis(ndarray::Axis(0))));
    }
    let data = array![[1.0, 0.0], [-1.0, 0.0], [0.0, 2.0], [0.0, -2.0]];
    let hand = w_estimate(&data.view()).unwrap().estimate;
    let l = hand.lambda().as_array();
    let hand_dev = [
        (l[[0, 0]] - 2f64.sqrt()).abs(),
        (l[[1, 1]] - 1.0 / 2f64.sqrt()).abs(),
        l[[0, 1]].abs(),
        hand.mu()[0].abs(),
        hand.mu()[1].abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let ok = worst <= 1e-9 && worst_moment <= 1e-12 && hand_dev <= 1e-15;
    report(
        3,
        "moment estimator",
        ok,
        format!(
            "max equation residual {worst:.3e} <= 1e-9, moment deviation {worst_moment:.3e}, hand example {hand_dev:.1e}"
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_04_gaussian_fisher_equals_wasserstein() {
    let mut worst = 0.0f64;
    let mut all_converged = true;
    for k in 0..20u64 {
        let d = 1 + (k % 2) as usize;
        let theta = AffineParamsF64::random_seeded(d, derive_seed(404, k)).unwrap();
        let shape = ShapeF64::gaussian(d).unwrap();
        let data = sample_model(&theta, &shape, 500, derive_seed(405, k)).unwrap();
        let w = w_estimate(&data.view()).unwrap().estimate;
        // start away from the answer so the likelihood ascent does real work
        let f = mle_estimate(
            &data.view(),
            &shape,
            &AffineParamsF64::standard(d),
            MleOptions::default(),
        )
        .unwrap();
        all_converged &= f.converged;
        worst = worst.max(theta_distance(&f.estimate, &w));
    }
    let ok = all_converged && worst <= 1e-6;
    report(
        4,
        "Gaussian MLE = W-estimate",
        ok,
        format!("max |theta_F - theta_W| {worst:.3e} <= 1e-6"),
    );
    assert!(ok);
}

#[test]
fn criterion_05_waveform_independence() {
    let d = 2;
    let theta = AffineParamsF64::random_seeded(d, 505).unwrap();
    let shapes = [
        ShapeF64::gaussian(d).unwrap(),
        ShapeF64::student_t(d, 5.0).unwrap(),
        ShapeF64::uniform_ball(d).unwrap(),
    ];
    let data = sample_model(&theta, &shapes[1], 300, 506).unwrap();
    let reference = w_estimate(&data.view()).unwrap().estimate.to_vec();
    let g_ref = w_info_matrix(&theta).unwrap();

    let mut bit_identical = true;
    let mut worst_residual = 0.0f64;
    let mut worst_z = 0.0f64;
    for (k, shape) in shapes.iter().enumerate() {
        // the W-estimate and G_W never see the shape; recompute per shape anyway
        let est = w_estimate(&data.view()).unwrap().estimate.to_vec();
        bit_identical &= est
            .iter()
            .zip(&reference)
            .all(|(a, b)| a.to_bits() == b.to_bits());
        bit_identical &= w_info_matrix(&theta).unwrap() == g_ref;
        // the same scores solve the Poisson equation under every shape
        let points = sample_model(&theta, shape, 100, 507 + k as u64).unwrap();
        for param in ParamIndex::all(d) {
            let score = wscore(&theta, param).unwrap();
            for x in points.rows() {
                let r =
                    poisson_residual(&theta, shape, &score, param, x.as_slice().unwrap()).unwrap();
                worst_residual = worst_residual.max(r.abs());
            }
        }
        let mc = w_info_matrix_mc(&theta, shape, 100_000, 510 + k as u64).unwrap();
        worst_z = worst_z.max(mc.max_z_score(&g_ref));
    }
    let ok = bit_identical && worst_residual <= 1e-8 && worst_z <= 5.0;
    report(
        5,
        "waveform independence",
        ok,
        format!(
            "bit-identical {bit_identical}, residual across shapes {worst_residual:.3e}, MC G_W max z {worst_z:.2} <= 5"
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_06_gelbrich_formula() {
    let shape = ShapeF64::gaussian(1).unwrap();
    let t1 = AffineParamsF64::new(array![0.3], SpdMatrixF64::from_diag(&[1.0]).unwrap()).unwrap();
    let t2 = AffineParamsF64::new(array![1.1], SpdMatrixF64::from_diag(&[0.5]).unwrap()).unwrap();
    let closed = gelbrich_w2(&t1, &t2).unwrap().value;
    // (0.8)² + (1 − 2)²
    let hand = 0.64 + 1.0;
    let x1 = sample_model(&t1, &shape, 100_000, 601)
        .unwrap()
        .column(0)
        .to_vec();
    let x2 = sample_model(&t2, &shape, 100_000, 602)
        .unwrap()
        .column(0)
        .to_vec();
    let empirical = empirical_w2_1d(&x1, &x2).unwrap();
    let rel = (empirical - closed).abs() / closed;

    let a = AffineParamsF64::random_seeded(3, 603).unwrap();
    let shift = array![0.5, -1.0, 2.0];
    let b = AffineParamsF64::new(a.mu() + &shift, a.lambda().clone()).unwrap();
    let shift_err = (gelbrich_w2(&a, &b).unwrap().value - shift.dot(&shift)).abs();

    let ok = rel <= 0.05 && (closed - hand).abs() <= 1e-12 && shift_err <= 1e-9;
    report(
        6,
        "Gelbrich formula",
        ok,
        format!(
            "empirical vs closed form {:.3}% <= 5%, pure shift error {shift_err:.3e} <= 1e-9",
            100.0 * rel
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_07_noise_robustness() {
    let start = Instant::now();
    let theta = AffineParamsF64::standard(1);
    let shape = ShapeF64::gaussian(1).unwrap();
    let grid = [1e-3, 2e-3, 4e-3];
    let mut ok = true;
    let mut parts = Vec::new();
    for (p, expected, expected_slope) in [(1, 1.0, 1.0), (2, 4.0, 4.0), (3, 27.0, 45.0)] {
        let stat = StatisticFnF64::power(1, p, 1.0).unwrap();
        let r = noise_robustness(&stat, &theta, &shape, &grid, 1_000_000, 700 + p as u64).unwrap();
        let z_disc = r.max_discrepancy_z();
        let z_limit = r.noise_limit.max_z_score(&array![[expected]]);
        let z_slope = r.slope.max_z_score(&array![[expected_slope]]);
        ok &= z_disc <= 5.0 && z_limit <= 5.0 && z_slope <= 5.0;
        parts.push(format!(
            "{}: limit {:.3} (want {expected}, z {z_limit:.2}), discrepancy z {z_disc:.2}",
            r.statistic,
            r.noise_limit.value[[0, 0]]
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs <= 60.0;
    report(
        7,
        "noise robustness",
        ok,
        format!("{}; {secs:.1}s <= 60s", parts.join("; ")),
    );
    assert!(ok);
}

#[test]
fn criterion_08_wcr_inequality() {
    let n = 200_000;
    let mut worst = f64::INFINITY;
    let mut equality_z = 0.0f64;
    for k in 0..10u64 {
        let d = 1 + (k % 2) as usize;
        let theta = AffineParamsF64::random_seeded(d, derive_seed(800, k)).unwrap();
        let gaussian = ShapeF64::gaussian(d).unwrap();
        let student = ShapeF64::student_t(d, 5.0).unwrap();
        let mut cases = vec![
            (StatisticFnF64::identity(d), &gaussian),
            (StatisticFnF64::power(d, 1, 2.0).unwrap(), &gaussian),
            (StatisticFnF64::power(d, 2, 1.0).unwrap(), &gaussian),
            (StatisticFnF64::power(d, 3, 1.0).unwrap(), &gaussian),
            (StatisticFnF64::wscores(&theta).unwrap(), &gaussian),
            (StatisticFnF64::identity(d), &student),
            (StatisticFnF64::wscores(&theta).unwrap(), &student),
        ];
        for (c, (stat, shape)) in cases.drain(..).enumerate() {
            let b = wcr_bound_check(&stat, &theta, shape, n, derive_seed(801, k * 16 + c as u64))
                .unwrap();
            worst = worst.min(b.min_eig_gap / b.gap_std_error.max(f64::MIN_POSITIVE));
            if stat.name() == "x" || stat.name() == "2x" {
                equality_z =
                    equality_z.max(b.min_eig_gap.abs() / b.gap_std_error.max(f64::MIN_POSITIVE));
            }
        }
    }
    let ok = worst >= -5.0 && equality_z <= 5.0;
    report(
        8,
        "Wasserstein-Cramer-Rao",
        ok,
        format!("min gap/SE {worst:.2} >= -5, linear statistics |gap|/SE {equality_z:.2} <= 5"),
    );
    assert!(ok);
}

#[test]
fn criterion_09_order_statistic_estimator() {
    let shape = ShapeF64::gaussian(1).unwrap();
    let data = sample_model(&AffineParamsF64::standard(1), &shape, 100_000, 901).unwrap();
    let column = data.column(0).to_vec();
    let sigma_wp = 1.0
        / wp_estimate_1d(&column, &shape)
            .unwrap()
            .estimate
            .lambda()
            .as_array()[[0, 0]];
    let sigma_w = 1.0
        / w_estimate(&data.view())
            .unwrap()
            .estimate
            .lambda()
            .as_array()[[0, 0]];
    let gap = (sigma_wp - sigma_w).abs();

    let two = wp_estimate_1d(&[-1.0, 1.0], &shape).unwrap().estimate;
    let closed = 2.0 / (2.0 * std::f64::consts::PI).sqrt();
    let two_err = (1.0 / two.lambda().as_array()[[0, 0]] - closed).abs();
    let ok = gap <= 0.01 && two_err <= 1e-6 && two.mu()[0] == 0.0;
    report(
        9,
        "order-statistic estimator",
        ok,
        format!("|sigma_Wp - sigma_W| {gap:.2e} <= 0.01, n=2 error {two_err:.2e} <= 1e-6"),
    );
    assert!(ok);
}

#[test]
fn criterion_10_consistency_rates() {
    let sizes = [100, 1000, 10_000];
    let mut ok = true;
    let mut parts = Vec::new();
    for d in 1..=2 {
        let theta = AffineParamsF64::random_seeded(d, 1000 + d as u64).unwrap();
        for shape in [
            ShapeF64::gaussian(d).unwrap(),
            ShapeF64::student_t(d, 5.0).unwrap(),
        ] {
            let points = consistency_sweep(&theta, &shape, &sizes, 50, 1010 + d as u64).unwrap();
            let slope = loglog_slope(&points);
            ok &= (slope + 0.5).abs() <= 0.15;
            parts.push(format!("{} d={d} {slope:.3}", shape.name()));
        }
    }
    report(
        10,
        "consistency rate",
        ok,
        format!("log-log slopes in -0.5 +/- 0.15: {}", parts.join(", ")),
    );
    assert!(ok);
}

#[test]
fn fisher_score_has_zero_mean_under_the_model() {
    // the certification above relies on this; check it once on the same draws
    let theta = AffineParamsF64::random_seeded(2, 1111).unwrap();
    let shape = ShapeF64::student_t(2, 5.0).unwrap();
    let xs = sample_model(&theta, &shape, 100_000, 1112).unwrap();
    let m = theta.param_dim();
    let mut sum = Array1::<f64>::zeros(m);
    let mut sq = Array1::<f64>::zeros(m);
    for x in xs.rows() {
        let s = fisher_score(&theta, &shape, x.as_slice().unwrap()).unwrap();
        sq += &(&s * &s);
        sum += &s;
    }
    let n = xs.nrows() as f64;
    for p in 0..m {
        let mean = sum[p] / n;
        let se = ((sq[p] / n - mean * mean) / n).sqrt();
        assert!(
            mean.abs() <= 5.0 * se,
            "coordinate {p}: mean {mean}, se {se}"
        );
    }
}
