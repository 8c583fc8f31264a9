//! Cumulative cost, optimal cost, and regret — both by definition and through
//! the quadratic-form representation in the input residual u - K xhat.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::Result;
use crate::model::{rollout_seed, simulate, LqgInstance, PolicySpec, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegretMethod {
    Direct,
    Representation,
}

#[derive(Debug, Clone)]
pub struct RegretEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_rollouts: usize,
    pub horizon: usize,
    pub method: RegretMethod,
}

/// sum_{t<T} (x'Qx + u'Ru) + x_T' Q_T x_T.
pub fn trajectory_cost(traj: &Trajectory, q: &DMatrix<f64>, r: &DMatrix<f64>, q_t: &DMatrix<f64>) -> f64 {
    let horizon = traj.u.len();
    let mut total = 0.0;
    for t in 0..horizon {
        total += (traj.x[t].transpose() * q * &traj.x[t])[(0, 0)];
        total += (traj.u[t].transpose() * r * &traj.u[t])[(0, 0)];
    }
    total + (traj.x[horizon].transpose() * q_t * &traj.x[horizon])[(0, 0)]
}

/// Expected cost of the optimal policy with terminal weight Q_T = P:
/// E x0' P x0 + T tr(Sigma_nu P) + T tr(Q Xi). In state feedback Xi = 0 and
/// Sigma_nu = Sigma_w, so this reduces to tr(P Gamma_cl) + T tr(Sigma_w P).
pub fn optimal_cost(inst: &LqgInstance, horizon: usize) -> f64 {
    let p = &inst.control().p;
    let head = (p * inst.x0_cov()).trace();
    let per_step = (&inst.filter().sigma_nu * p).trace() + (&inst.q * &inst.filter().xi).trace();
    head + horizon as f64 * per_step
}

fn mean_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn rollout_costs(
    inst: &LqgInstance,
    policy: &PolicySpec,
    horizon: usize,
    n_rollouts: usize,
    seed: u64,
) -> Vec<(f64, f64)> {
    (0..n_rollouts)
        .into_par_iter()
        .map(|i| {
            let traj = simulate(inst, policy, horizon, rollout_seed(seed, i as u64));
            let direct = trajectory_cost(&traj, &inst.q, &inst.r, &inst.control().p);
            (direct, representation_sum(&traj, inst))
        })
        .collect()
}

/// sum_{t<T} (u_t - K xhat_t)' (B'PB + R) (u_t - K xhat_t) along one rollout.
pub fn representation_sum(traj: &Trajectory, inst: &LqgInstance) -> f64 {
    let k = &inst.control().k;
    let curv = inst.btpb_r();
    let mut total = 0.0;
    for t in 0..traj.u.len() {
        let resid = &traj.u[t] - k * &traj.xhat[t];
        total += (resid.transpose() * &curv * &resid)[(0, 0)];
    }
    total
}

/// Regret by definition: MC mean of trajectory_cost minus optimal_cost.
pub fn regret_direct(
    inst: &LqgInstance,
    policy: &PolicySpec,
    horizon: usize,
    n_rollouts: usize,
    seed: u64,
) -> Result<RegretEstimate> {
    let costs: Vec<f64> = rollout_costs(inst, policy, horizon, n_rollouts, seed)
        .into_iter()
        .map(|(d, _)| d)
        .collect();
    let (mean, se) = mean_se(&costs);
    Ok(RegretEstimate {
        value: mean - optimal_cost(inst, horizon),
        std_error: se,
        n_rollouts,
        horizon,
        method: RegretMethod::Direct,
    })
}

/// Regret through the representation identity (same seeds as regret_direct).
pub fn regret_representation(
    inst: &LqgInstance,
    policy: &PolicySpec,
    horizon: usize,
    n_rollouts: usize,
    seed: u64,
) -> Result<RegretEstimate> {
    let sums: Vec<f64> = rollout_costs(inst, policy, horizon, n_rollouts, seed)
        .into_iter()
        .map(|(_, rep)| rep)
        .collect();
    let (mean, se) = mean_se(&sums);
    Ok(RegretEstimate {
        value: mean,
        std_error: se,
        n_rollouts,
        horizon,
        method: RegretMethod::Representation,
    })
}

/// Both regret estimates from one shared set of rollouts, plus the standard
/// error of the per-rollout difference (the right scale for identity tests).
pub fn paired_regret(
    inst: &LqgInstance,
    policy: &PolicySpec,
    horizon: usize,
    n_rollouts: usize,
    seed: u64,
) -> Result<(RegretEstimate, RegretEstimate, f64)> {
    let pairs = rollout_costs(inst, policy, horizon, n_rollouts, seed);
    let vstar = optimal_cost(inst, horizon);
    let direct: Vec<f64> = pairs.iter().map(|(d, _)| d - vstar).collect();
    let repr: Vec<f64> = pairs.iter().map(|(_, r)| *r).collect();
    let diff: Vec<f64> = direct.iter().zip(&repr).map(|(a, b)| a - b).collect();
    let (dm, dse) = mean_se(&direct);
    let (rm, rse) = mean_se(&repr);
    let (_, diff_se) = mean_se(&diff);
    Ok((
        RegretEstimate {
            value: dm,
            std_error: dse,
            n_rollouts,
            horizon,
            method: RegretMethod::Direct,
        },
        RegretEstimate {
            value: rm,
            std_error: rse,
            n_rollouts,
            horizon,
            method: RegretMethod::Representation,
        },
        diff_se,
    ))
}

/// Bellman suboptimality phi(x, u) = x'Qx + u'Ru + h(Ax+Bu) - h(x), h = x'Px.
/// Nonnegative, zero exactly at u = Kx.
pub fn bellman_gap(x: &DVector<f64>, u: &DVector<f64>, inst: &LqgInstance) -> f64 {
    let p = &inst.control().p;
    let next = &inst.a * x + &inst.b * u;
    (x.transpose() * &inst.q * x)[(0, 0)] + (u.transpose() * &inst.r * u)[(0, 0)]
        + (next.transpose() * p * &next)[(0, 0)]
        - (x.transpose() * p * x)[(0, 0)]
}
