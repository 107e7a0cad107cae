use nalgebra::{DMatrix, DVector};
use num::{BigInt, BigRational, Signed, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use twisted_smc::learning::{fit_log_quadratic, weighted_objective, RegressionProblem};
use twisted_smc::twist::{LogQuadraticTwist, TwistMode};
use twisted_smc::SmcError;

fn random_twist(d: usize, mode: TwistMode, rng: &mut ChaCha8Rng) -> LogQuadraticTwist {
    let mut a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-0.5..0.5));
    a = &a * a.transpose() + DMatrix::identity(d, d) * 0.2;
    if mode == TwistMode::Diagonal {
        a = DMatrix::from_diagonal(&a.diagonal());
    }
    let b = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
    LogQuadraticTwist::new(a, b, rng.random_range(-3.0..3.0)).unwrap()
}

fn cloud(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n * d).map(|_| 0.5 + 1.5 * rng.sample::<f64, _>(StandardNormal)).collect()
}

#[test]
fn exactly_representable_targets_are_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for mode in [TwistMode::Diagonal, TwistMode::Full] {
        for d in 1..=3 {
            let truth = random_twist(d, mode, &mut rng);
            let x = cloud(300, d, &mut rng);
            let y: Vec<f64> = x.chunks(d).map(|p| truth.log_eval(p)).collect();
            let lw: Vec<f64> = (0..300).map(|_| rng.random_range(-4.0..0.0)).collect();
            let fit = fit_log_quadratic(&RegressionProblem::new(&x, d, &y, mode).with_weights(&lw)).unwrap();
            let err = fit.twist.relative_error(&truth);
            assert!(err <= 1e-8, "mode {mode:?} d {d}: {err:e}");
            assert!(!fit.projected);
        }
    }
}

#[test]
fn constant_targets_give_constant_twist() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = cloud(50, 2, &mut rng);
    let y = vec![1.75; 50];
    let fit = fit_log_quadratic(&RegressionProblem::new(&x, 2, &y, TwistMode::Full)).unwrap().twist;
    assert!(fit.a.amax() < 1e-12 && fit.b.amax() < 1e-12);
    assert!((fit.c + 3.5).abs() < 1e-12);
}

fn exact(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite")
}

/// Weighted normal equations in exact rational arithmetic.
fn rational_wls(rows: &[Vec<f64>], y: &[f64], w: &[f64]) -> Vec<f64> {
    let p = rows[0].len();
    let mut m = vec![vec![BigRational::zero(); p + 1]; p];
    for ((row, y), w) in rows.iter().zip(y).zip(w) {
        let w = exact(*w);
        let r: Vec<BigRational> = row.iter().map(|v| exact(*v)).collect();
        let yr = exact(*y);
        for i in 0..p {
            let wi = &w * &r[i];
            for j in 0..p {
                m[i][j] += &wi * &r[j];
            }
            m[i][p] += &wi * &yr;
        }
    }
    for col in 0..p {
        let pivot = (col..p).find(|&r| !m[r][col].is_zero()).expect("nonsingular");
        m.swap(col, pivot);
        for r in 0..p {
            if r != col && !m[r][col].is_zero() {
                let factor = &m[r][col] / &m[col][col];
                for c in col..=p {
                    let delta = &factor * &m[col][c];
                    m[r][c] -= delta;
                }
            }
        }
    }
    (0..p)
        .map(|i| {
            let v = &m[i][p] / &m[i][i];
            // rational to f64 through a scaled integer quotient
            let scale = BigInt::from(10u8).pow(30);
            let q = (v.numer() * &scale) / v.denom();
            let sign = if q.is_negative() { -1.0 } else { 1.0 };
            sign * q.abs().to_string().parse::<f64>().unwrap() / 1e30
        })
        .collect()
}

#[test]
fn noisy_fit_matches_exact_rational_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let d = 2;
    let n = 200;
    let x = cloud(n, d, &mut rng);
    let y: Vec<f64> = x
        .chunks(d)
        .map(|p| (p[0] * p[1]).sin() - 0.3 * p[0] * p[0] + rng.sample::<f64, _>(StandardNormal))
        .collect();
    let lw: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..0.0)).collect();
    let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lw.iter().map(|l| (l - max).exp()).collect();
    let rows: Vec<Vec<f64>> = x.chunks(d).map(|p| vec![p[0] * p[0], p[1] * p[1], p[0], p[1], 1.0]).collect();
    let beta = rational_wls(&rows, &y, &w);
    let fit = fit_log_quadratic(&RegressionProblem::new(&x, d, &y, TwistMode::Diagonal).with_weights(&lw))
        .unwrap()
        .twist;
    let ours = [-0.5 * fit.a[(0, 0)], -0.5 * fit.a[(1, 1)], -fit.b[0], -fit.b[1], -0.5 * fit.c];
    for (o, e) in ours.iter().zip(&beta) {
        assert!((o - e).abs() <= 1e-6, "{o} vs {e}");
    }
}

#[test]
fn fitted_twist_beats_random_candidates() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let d = 2;
    let x = cloud(150, d, &mut rng);
    let y: Vec<f64> = x.chunks(d).map(|p| (p[0] - p[1]).cos() * 2.0).collect();
    let lw: Vec<f64> = (0..150).map(|_| rng.random_range(-3.0..0.0)).collect();
    let problem = RegressionProblem::new(&x, d, &y, TwistMode::Full).with_weights(&lw);
    let fit = fit_log_quadratic(&problem).unwrap().twist;
    let best = weighted_objective(&problem, &fit).unwrap();
    for k in 0..1000 {
        let scale = if k < 500 { 0.05 } else { 1.0 };
        let mut a = fit.a.map(|v| v + scale * rng.random_range(-1.0..1.0));
        a = (&a + a.transpose()) * 0.5;
        let b = fit.b.map(|v| v + scale * rng.random_range(-1.0..1.0));
        let cand = LogQuadraticTwist::new(a, b, fit.c + scale * rng.random_range(-1.0..1.0)).unwrap();
        assert!(weighted_objective(&problem, &cand).unwrap() >= best);
    }
}

#[test]
fn refit_after_projection_never_increases_the_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let cov = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.4]);
    let mut projected_cases = 0;
    for _ in 0..30 {
        let x = cloud(120, 2, &mut rng);
        // strongly convex targets produce a quadratic term that must be projected
        let k: f64 = rng.random_range(2.0..8.0);
        let y: Vec<f64> = x.chunks(2).map(|p| k * (p[0] * p[0] + 0.5 * p[1] * p[1]) + p[0]).collect();
        for mode in [TwistMode::Diagonal, TwistMode::Full] {
            let base = RegressionProblem::new(&x, 2, &y, mode).with_projection(&cov, 1e-6);
            let refit = fit_log_quadratic(&base).unwrap();
            let plain = fit_log_quadratic(&RegressionProblem { refit_after_projection: false, ..base.clone() }).unwrap();
            assert_eq!(refit.twist.a, plain.twist.a);
            if refit.projected {
                projected_cases += 1;
            }
            assert!(weighted_objective(&base, &refit.twist).unwrap() <= weighted_objective(&base, &plain.twist).unwrap() + 1e-12);
            let prec = cov.clone().cholesky().unwrap().inverse() + &refit.twist.a;
            assert!(prec.symmetric_eigenvalues().min() > 0.0);
        }
    }
    assert!(projected_cases > 0);
}

#[test]
fn zero_potential_points_are_dropped() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let truth = random_twist(1, TwistMode::Diagonal, &mut rng);
    let x = cloud(40, 1, &mut rng);
    let mut y: Vec<f64> = x.iter().map(|v| truth.log_eval(&[*v])).collect();
    for v in y.iter_mut().step_by(3) {
        *v = f64::NEG_INFINITY;
    }
    let fit = fit_log_quadratic(&RegressionProblem::new(&x, 1, &y, TwistMode::Diagonal)).unwrap();
    assert_eq!(fit.points_used, 26);
    assert!(fit.twist.relative_error(&truth) < 1e-8);

    let few: Vec<f64> = (0..40).map(|i| if i < 2 { 0.0 } else { f64::NEG_INFINITY }).collect();
    let err = fit_log_quadratic(&RegressionProblem::new(&x, 1, &few, TwistMode::Diagonal)).unwrap_err();
    assert!(matches!(err, SmcError::SingularDesign { .. }));
    let duplicated = vec![0.7; 40];
    let err = fit_log_quadratic(&RegressionProblem::new(&duplicated, 1, &y, TwistMode::Diagonal)).unwrap_err();
    assert!(matches!(err, SmcError::SingularDesign { .. }));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn rescaling_weights_leaves_fit_unchanged(seed in 0u64..1000, shift in -30.0f64..30.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = cloud(60, 2, &mut rng);
        let y: Vec<f64> = x.chunks(2).map(|p| p[0].sin() + p[1]).collect();
        let lw: Vec<f64> = (0..60).map(|_| rng.random_range(-3.0..0.0)).collect();
        let shifted: Vec<f64> = lw.iter().map(|v| v + shift).collect();
        let f1 = fit_log_quadratic(&RegressionProblem::new(&x, 2, &y, TwistMode::Diagonal).with_weights(&lw)).unwrap().twist;
        let f2 = fit_log_quadratic(&RegressionProblem::new(&x, 2, &y, TwistMode::Diagonal).with_weights(&shifted)).unwrap().twist;
        prop_assert!(f1.relative_error(&f2) < 1e-10);
    }
}
