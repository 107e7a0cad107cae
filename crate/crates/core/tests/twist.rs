use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use twisted_smc::fk::run_smc;
use twisted_smc::models::{simulate_lgssm, LgssmModel, LgssmParams};
use twisted_smc::rng::RngStreams;
use twisted_smc::twist::{compose_potential_twist, twist_gaussian, LogQuadraticTwist, TwistMode, TwistPolicy, TwistedModel};

/// Random `(mean, cov, twist)` with `cov^-1 + A` positive definite.
fn random_triple(d: usize, rng: &mut ChaCha8Rng) -> (DVector<f64>, DMatrix<f64>, LogQuadraticTwist) {
    let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-0.7..0.7));
    let cov = &m * m.transpose() + DMatrix::identity(d, d) * 0.3;
    let mean = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
    // mildly negative quadratic terms are allowed as long as the precision stays positive
    let r = DMatrix::from_fn(d, d, |_, _| rng.random_range(-0.4..0.4));
    let a = &r * r.transpose() - DMatrix::identity(d, d) * 0.1;
    let b = DVector::from_fn(d, |_, _| rng.random_range(-0.5..0.5));
    let twist = LogQuadraticTwist::new(a, b, rng.random_range(-1.0..1.0)).unwrap();
    (mean, cov, twist)
}

/// Monte Carlo estimate and standard error of `int phi dN(mean, cov)`.
fn mc_integral(mean: &DVector<f64>, cov: &DMatrix<f64>, twist: &LogQuadraticTwist, n: usize, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let l = cov.clone().cholesky().unwrap().l();
    let d = mean.len();
    let (mut s1, mut s2) = (0.0, 0.0);
    let mut z = DVector::zeros(d);
    for _ in 0..n {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let x = mean + &l * &z;
        let v = twist.log_eval(x.as_slice()).exp();
        s1 += v;
        s2 += v * v;
    }
    let m = s1 / n as f64;
    (m, ((s2 / n as f64 - m * m) / n as f64).sqrt())
}

#[test]
fn closed_form_integral_agrees_with_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for trial in 0..20 {
        let d = 1 + trial % 4;
        let (mean, cov, twist) = random_triple(d, &mut rng);
        let (_, _, log_eta) = match twist_gaussian(&mean, &cov, &twist) {
            Ok(v) => v,
            Err(_) => continue,
        };
        let (est, se) = mc_integral(&mean, &cov, &twist, 100_000, &mut rng);
        assert!((log_eta.exp() - est).abs() <= 3.5 * se, "trial {trial}: {} vs {est} ± {se}", log_eta.exp());
    }
}

#[test]
fn composition_is_a_pointwise_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let (_, _, f) = random_triple(3, &mut rng);
    let (_, _, g) = random_triple(3, &mut rng);
    assert_eq!(compose_potential_twist(&f, &LogQuadraticTwist::identity(3)).unwrap(), f);
    let doubled = compose_potential_twist(&f, &f).unwrap();
    assert_eq!(doubled.a, &f.a * 2.0);
    assert_eq!(doubled.c, 2.0 * f.c);
    let fg = compose_potential_twist(&f, &g).unwrap();
    for _ in 0..100 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let product = f.log_eval(&x).exp() * g.log_eval(&x).exp();
        assert!((fg.log_eval(&x).exp() / product - 1.0).abs() <= 1e-12);
    }
    assert!(compose_potential_twist(&f, &LogQuadraticTwist::identity(2)).is_err());
}

#[test]
fn any_valid_policy_preserves_the_normalizing_constant() {
    let params = LgssmParams::scalar(0.7, 0.5, 0.4, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let (_, ys) = simulate_lgssm(&params, 8, &mut rng).unwrap();
    let model = LgssmModel::new(params, ys).unwrap();
    let log_z = model.kalman().unwrap().log_z();
    // an arbitrary, poorly chosen policy with separate auxiliary twists
    let twists: Vec<_> = (0..8)
        .map(|t| {
            LogQuadraticTwist::new(
                DMatrix::from_element(1, 1, 0.3 + 0.1 * t as f64),
                DVector::from_element(1, 0.2 * (t as f64 - 3.0)),
                0.5,
            )
            .unwrap()
        })
        .collect();
    let mut policy = TwistPolicy::linked(twists.clone(), TwistMode::Diagonal);
    for aux in [None, Some(twists.iter().rev().cloned().collect::<Vec<_>>())] {
        policy.auxiliary = aux;
        let twisted = TwistedModel::new(&model, &policy).unwrap();
        let streams = RngStreams::from_seed(34);
        let reps = 2000;
        let zs: Vec<f64> = (0..reps)
            .map(|r| (run_smc(&twisted, 32, &streams.derive(r)).unwrap().log_z() - log_z).exp())
            .collect();
        let mean = zs.iter().sum::<f64>() / reps as f64;
        let sd = (zs.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        assert!((mean - 1.0).abs() <= 3.0 * sd / (reps as f64).sqrt(), "mean ratio {mean} sd {sd}");
    }
}

#[test]
fn invalid_policy_twist_is_rejected_with_its_time() {
    let params = LgssmParams::scalar(0.7, 1.0, 0.4, 1.0);
    let model = LgssmModel::new(params, vec![vec![0.0]; 3]).unwrap();
    let mut policy = TwistPolicy::identity(3, 1, TwistMode::Diagonal);
    policy.twists[1].a[(0, 0)] = -2.0;
    let err = TwistedModel::new(&model, &policy).err().unwrap();
    assert!(matches!(err, twisted_smc::SmcError::InvalidTwist { t: 2, .. }));
}
