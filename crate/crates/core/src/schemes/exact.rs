use crate::error::{Result, SmcError};
use crate::models::{LgssmModel, LgssmParams};
use crate::twist::{GaussianReference, LogQuadraticTwist, TwistMode, TwistPolicy, TwistedKernel};

/// Fixed-lag twists `phi^(L)_t = G_t M_{t+1}(phi^(L-1)_{t+1})` with `phi^(0) = 1`,
/// computed in closed form. `lag >= T` gives the optimal policy. Requires
/// log-quadratic potentials and affine transition means.
pub fn exact_policy<R: GaussianReference + ?Sized>(reference: &R, lag: usize) -> Result<TwistPolicy> {
    let horizon = reference.horizon();
    let d = reference.dim();
    let potentials = (1..=horizon)
        .map(|t| {
            reference
                .quadratic_potential(t)
                .ok_or_else(|| SmcError::InvalidModel(format!("potential at t={t} is not log-quadratic")))
        })
        .collect::<Result<Vec<_>>>()?;
    let transitions = (2..=horizon)
        .map(|t| {
            reference
                .affine_mean(t)
                .ok_or_else(|| SmcError::InvalidModel(format!("transition mean at t={t} is not affine")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut current = vec![LogQuadraticTwist::identity(d); horizon];
    for _ in 0..lag.min(horizon) {
        let mut next = Vec::with_capacity(horizon);
        for t in 1..=horizon {
            let twist = if t == horizon {
                potentials[t - 1].clone()
            } else {
                let kernel = TwistedKernel::new(&reference.kernel_cov(t + 1), current[t].clone())
                    .map_err(|e| e.at_time(t + 1))?;
                let (f_mat, f_vec) = &transitions[t - 1];
                let eta = kernel.log_normalizer_twist().pullback_affine(f_mat, f_vec);
                potentials[t - 1].compose(&eta)?
            };
            next.push(twist);
        }
        current = next;
    }
    let mode = if current.iter().all(LogQuadraticTwist::is_diagonal) { TwistMode::Diagonal } else { TwistMode::Full };
    let mut policy = TwistPolicy::linked(current, mode);
    policy.dim = d;
    Ok(policy)
}

pub fn exact_lgssm_policy(params: &LgssmParams, observations: &[Vec<f64>], lag: usize) -> Result<TwistPolicy> {
    let model = LgssmModel::new(params.clone(), observations.to_vec())?;
    exact_policy(&model, lag)
}
