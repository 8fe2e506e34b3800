mod common;

use common::{brute_force, instance, rel_err, smoother};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssanova::kernel::cubic_kernel;
use ssanova::model::Criterion;
use ssanova::solver::{
    criterion_value, gcv, gml, optimize_params, solve_at, OptimizerOptions, PenalizedSystem, SmoothingParams,
};
use ssanova::Error;

#[test]
fn matches_dense_minimizer() {
    for seed in 0..12u64 {
        let subjects = if seed % 2 == 0 { 0 } else { 4 };
        let n = 12 + (seed as usize * 3) % 38;
        let inst = instance(seed, n, subjects);
        let sys = inst.system();
        for log_lambda in [-6.0, -3.0, -1.0] {
            let params = inst.params(log_lambda);
            let sol = solve_at(&sys, &params).unwrap();
            let (x, pen) = inst.dense(&params);
            let beta = brute_force(&x, &pen, &inst.y);
            let oracle = &x * beta;
            let err = rel_err(&sol.fitted, &oracle);
            assert!(err <= 1e-8, "seed {seed} loglam {log_lambda}: rel err {err}");
        }
    }
}

#[test]
fn objective_is_minimal_under_perturbation() {
    let inst = instance(3, 30, 3);
    let sys = inst.system();
    let params = inst.params(-3.0);
    let sol = solve_at(&sys, &params).unwrap();
    let (x, pen) = inst.dense(&params);
    let mut beta = DVector::zeros(x.ncols());
    beta.rows_mut(0, 2).copy_from(&sol.d);
    beta.rows_mut(2, sol.c.len()).copy_from(&sol.c);
    beta.rows_mut(2 + sol.c.len(), sol.b.len()).copy_from(&sol.b);
    let n = x.nrows() as f64;
    let objective = |b: &DVector<f64>| (&inst.y - &x * b).norm_squared() / n + (b.transpose() * &pen * b)[(0, 0)];
    let best = objective(&beta);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100 {
        let delta = DVector::from_fn(beta.len(), |_, _| 1e-3 * (rng.random::<f64>() - 0.5));
        assert!(objective(&(&beta + delta)) >= best - 1e-14);
    }
}

#[test]
fn constant_response_is_fit_exactly() {
    let n = 15;
    let t: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let s = DMatrix::from_element(n, 1, 1.0);
    let r = DMatrix::from_fn(n, n, |i, j| cubic_kernel(t[i], t[j]).unwrap());
    let y = DVector::from_element(n, 2.5);
    let sys = PenalizedSystem::from_dense(s, vec![r.clone()], vec![r], None, y).unwrap();
    let params = SmoothingParams {
        log_lambda: -4.0,
        log_theta: vec![0.0],
        log_lambda_b: None,
    };
    let sol = solve_at(&sys, &params).unwrap();
    assert!((sol.d[0] - 2.5).abs() < 1e-10);
    assert!(sol.c.amax() < 1e-8);
    assert!(sol.rss < 1e-18);
}

fn ols_fitted(s: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let beta = s.clone().svd(true, true).solve(y, 1e-14).unwrap();
    s * beta
}

#[test]
fn large_lambda_gives_null_space_ols() {
    let inst = instance(5, 10, 0);
    let sys = inst.system();
    let sol = solve_at(&sys, &inst.params(6.0)).unwrap();
    let ols = ols_fitted(&inst.s, &inst.y);
    assert!((&sol.fitted - &ols).amax() <= 1e-6);

    // GCV at the same limit: n RSS_OLS / (n − m)².
    let n = 10.0;
    let rss = (&inst.y - &ols).norm_squared();
    let v = gcv(&sys, &inst.params(6.0)).unwrap();
    assert!((v - n * rss / (n - 2.0).powi(2)).abs() <= 1e-6 * v);
}

#[test]
fn tiny_lambda_interpolates() {
    let inst = instance(6, 10, 0);
    let sys = inst.system();
    let sol = solve_at(&sys, &inst.params(-12.0)).unwrap();
    assert!((&sol.fitted - &inst.y).amax() <= 1e-6);
}

#[test]
fn saturated_fit_gives_criterion_error() {
    // Two points and a two-column null space: tr(A) = n exactly.
    let s = DMatrix::from_row_slice(2, 2, &[1.0, -0.25, 1.0, 0.25]);
    let r = DMatrix::from_fn(2, 2, |i, j| {
        cubic_kernel(0.25 + 0.5 * i as f64, 0.25 + 0.5 * j as f64).unwrap()
    });
    let sys =
        PenalizedSystem::from_dense(s, vec![r.clone()], vec![r], None, DVector::from_vec(vec![1.0, 3.0])).unwrap();
    let params = SmoothingParams {
        log_lambda: -2.0,
        log_theta: vec![0.0],
        log_lambda_b: None,
    };
    assert!(matches!(gcv(&sys, &params), Err(Error::Criterion(_))));
    assert!(matches!(gml(&sys, &params), Err(Error::Criterion(_))));

    // Near-interpolation must not crash; any value returned is finite and positive.
    let inst = instance(6, 10, 0);
    for l in [-12.0, -20.0, -30.0] {
        if let Ok(v) = gcv(&inst.system(), &inst.params(l)) {
            assert!(v.is_finite() && v >= 0.0);
        }
    }
}

#[test]
fn trace_decreases_in_lambda() {
    let inst = instance(8, 40, 0);
    let sys = inst.system();
    let traces: Vec<f64> = (0..20)
        .map(|i| solve_at(&sys, &inst.params(-8.0 + 0.5 * i as f64)).unwrap().trace)
        .collect();
    for w in traces.windows(2) {
        assert!(w[1] <= w[0] + 1e-9, "{traces:?}");
    }
    assert!(traces[0] < 40.0 && *traces.last().unwrap() > 2.0 - 1e-6);
}

#[test]
fn gcv_matches_explicit_smoother() {
    for subjects in [0, 3] {
        let inst = instance(11, 30, subjects);
        let sys = inst.system();
        let params = inst.params(-4.0);
        let (x, pen) = inst.dense(&params);
        let a = smoother(&x, &pen);
        let n = 30.0;
        let resid = (DMatrix::identity(30, 30) - &a) * &inst.y;
        let oracle = n * resid.norm_squared() / (n - a.trace()).powi(2);
        let v = gcv(&sys, &params).unwrap();
        assert!((v - oracle).abs() <= 1e-8 * oracle, "{v} vs {oracle}");
        let tr = solve_at(&sys, &params).unwrap().trace;
        assert!((tr - a.trace()).abs() <= 1e-8 * a.trace(), "{tr} vs {}", a.trace());
    }
}

#[test]
fn gml_matches_dense_eigenvalues() {
    for subjects in [0, 2] {
        let inst = instance(12, 20, subjects);
        let sys = inst.system();
        let params = inst.params(-3.0);
        let (x, pen) = inst.dense(&params);
        let a = smoother(&x, &pen);
        let i_a = DMatrix::identity(20, 20) - &a;
        let mut eig: Vec<f64> = i_a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        // m = 2 null-space directions have eigenvalue 0.
        let m = 2;
        let log_det: f64 = eig[m..].iter().map(|v| v.ln()).sum();
        let quad = (inst.y.transpose() * &i_a * &inst.y)[(0, 0)];
        let oracle = quad / (log_det / (20 - m) as f64).exp();
        let v = gml(&sys, &params).unwrap();
        assert!((v - oracle).abs() <= 1e-8 * oracle, "{v} vs {oracle}");
    }
}

#[test]
fn gml_scales_with_response_and_keeps_argmin() {
    let inst = instance(13, 40, 0);
    let sys = inst.system();
    let doubled = PenalizedSystem::from_dense(
        inst.s.clone(),
        vec![inst.r.clone()],
        vec![inst.q.clone()],
        None,
        &inst.y * 2.0,
    )
    .unwrap();
    let grid: Vec<f64> = (0..=100).map(|i| -8.0 + 0.1 * i as f64).collect();
    let a: Vec<f64> = grid.iter().map(|&l| gml(&sys, &inst.params(l)).unwrap()).collect();
    let b: Vec<f64> = grid.iter().map(|&l| gml(&doubled, &inst.params(l)).unwrap()).collect();
    for (x, y) in a.iter().zip(&b) {
        assert!((y / x - 4.0).abs() < 1e-9);
    }
    let argmin = |v: &[f64]| v.iter().enumerate().min_by(|x, y| x.1.total_cmp(y.1)).unwrap().0;
    assert_eq!(argmin(&a), argmin(&b));
}

#[test]
fn optimizer_finds_grid_minimum() {
    let options = OptimizerOptions {
        tune_term_weights: false,
        ..OptimizerOptions::default()
    };
    for seed in 20..24u64 {
        let inst = instance(seed, 50, 0);
        let sys = inst.system();
        let p = optimize_params(&sys, Criterion::Gcv, &options).unwrap();
        let grid: Vec<f64> = (0..=200).map(|i| -8.0 + 0.05 * i as f64).collect();
        let scores: Vec<f64> = grid
            .iter()
            .map(|&l| {
                let mut q = p.clone();
                q.log_lambda = l;
                criterion_value(&sys, &q, Criterion::Gcv).unwrap_or(f64::INFINITY)
            })
            .collect();
        let best = grid[scores.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0];
        assert!(
            (p.log_lambda - best).abs() <= 0.05,
            "seed {seed}: {} vs {best}",
            p.log_lambda
        );
    }
}

#[test]
fn stage_two_disabled_equals_stage_one() {
    let inst = instance(30, 40, 3);
    let sys = inst.system();
    let off = OptimizerOptions {
        tune_term_weights: false,
        ..OptimizerOptions::default()
    };
    let a = optimize_params(&sys, Criterion::Gcv, &off).unwrap();
    let b = optimize_params(&sys, Criterion::Gcv, &off).unwrap();
    assert_eq!(a, b);
    let init = SmoothingParams::initial(&sys, 0.0);
    assert_eq!(a.log_theta, init.log_theta);
    assert_eq!(a.log_lambda_b, init.log_lambda_b);

    let on = optimize_params(&sys, Criterion::Gcv, &OptimizerOptions::default()).unwrap();
    let v_on = criterion_value(&sys, &on, Criterion::Gcv).unwrap();
    let v_off = criterion_value(&sys, &a, Criterion::Gcv).unwrap();
    assert!(v_on <= v_off);
}

#[test]
fn duplicated_term_matches_single_term_fit() {
    let inst = instance(40, 40, 0);
    let single = inst.system();
    let double = PenalizedSystem::from_dense(
        inst.s.clone(),
        vec![inst.r.clone(), inst.r.clone()],
        vec![inst.q.clone(), inst.q.clone()],
        None,
        inst.y.clone(),
    )
    .unwrap();
    let p2 = optimize_params(&double, Criterion::Gcv, &OptimizerOptions::default()).unwrap();
    // Only θ₁Q + θ₂Q matters: the single-term fit with θ = θ₁ + θ₂ is the same fit.
    let theta = p2.theta();
    let p1 = SmoothingParams {
        log_lambda: p2.log_lambda,
        log_theta: vec![(theta[0] + theta[1]).log10()],
        log_lambda_b: None,
    };
    let f1 = solve_at(&single, &p1).unwrap().fitted;
    let f2 = solve_at(&double, &p2).unwrap().fitted;
    assert!((&f1 - &f2).amax() <= 1e-6, "max diff {}", (&f1 - &f2).amax());

    // And the optimized criterion is the single-term optimum.
    let best1 = criterion_value(
        &single,
        &optimize_params(&single, Criterion::Gcv, &OptimizerOptions::default()).unwrap(),
        Criterion::Gcv,
    )
    .unwrap();
    let best2 = criterion_value(&double, &p2, Criterion::Gcv).unwrap();
    assert!((best1 - best2).abs() <= 1e-6 * best1);
}

#[test]
fn gml_and_gcv_agree_roughly() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let n = 200;
    let t: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let noise = rand_distr::Normal::new(0.0, 0.1).unwrap();
    let y = DVector::from_iterator(
        n,
        t.iter()
            .map(|&x| (std::f64::consts::TAU * x).sin() + rand_distr::Distribution::sample(&noise, &mut rng)),
    );
    let s = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { t[i] - 0.5 });
    let knots: Vec<f64> = (0..40).map(|k| t[k * 5]).collect();
    let r = DMatrix::from_fn(n, 40, |i, j| cubic_kernel(t[i], knots[j]).unwrap());
    let q = DMatrix::from_fn(40, 40, |i, j| cubic_kernel(knots[i], knots[j]).unwrap());
    let sys = PenalizedSystem::from_dense(s, vec![r], vec![q], None, y).unwrap();
    let opts = OptimizerOptions::default();
    let a = optimize_params(&sys, Criterion::Gcv, &opts).unwrap();
    let b = optimize_params(&sys, Criterion::Gml, &opts).unwrap();
    let la = a.log_lambda + a.log_theta[0];
    let lb = b.log_lambda + b.log_theta[0];
    assert!((la - lb).abs() <= 1.0, "gcv {la} gml {lb}");
}

#[test]
fn dependent_null_columns_are_named() {
    let n = 10;
    let s = DMatrix::from_fn(n, 3, |i, j| {
        if j == 2 {
            2.0
        } else if j == 0 {
            1.0
        } else {
            i as f64
        }
    });
    let r = DMatrix::from_fn(n, 3, |i, j| cubic_kernel(i as f64 / 10.0, j as f64 / 3.0).unwrap());
    let q = DMatrix::from_fn(3, 3, |i, j| cubic_kernel(i as f64 / 3.0, j as f64 / 3.0).unwrap());
    let err = PenalizedSystem::from_dense(s, vec![r], vec![q], None, DVector::zeros(n)).unwrap_err();
    match err {
        Error::SingularFit(cols) => assert!(
            cols.contains(&"null[2]".to_owned()) || cols.contains(&"null[0]".to_owned()),
            "{cols:?}"
        ),
        other => panic!("expected singular fit, got {other}"),
    }
}
