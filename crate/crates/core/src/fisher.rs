//! Policy-dependent Fisher information: the exact per-trajectory form under
//! state feedback, the additive upper bound under partial observability, a
//! brute-force score oracle, and the scalar Van Trees apparatus (location
//! integral, Bayes risk of the posterior mean).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{LqgError, Result};
use crate::matcalc::{kron, vec_inv};
use crate::model::{rollout_seed, simulate, LqgInstance, Mode, Parametrization, PolicySpec, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InformationKind {
    StateFeedbackExact,
    OutputUpperBound,
    ScoreOracle,
    OptimalPolicyPerStep,
}

#[derive(Debug, Clone)]
pub struct InformationMatrix {
    pub matrix: DMatrix<f64>,
    pub horizon: usize,
    pub n_rollouts: usize,
    pub kind: InformationKind,
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn inverse_pd(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| LqgError::NondegeneracyViolated(format!("{what} must be positive definite")))
}

/// Reshape each Jacobian column of theta -> vec M (M being rows x cols) into
/// its matrix increment, so the column action on a vector is a plain product.
fn jacobian_columns_as_matrices(j: &DMatrix<f64>, rows: usize, cols: usize) -> Vec<DMatrix<f64>> {
    (0..j.ncols())
        .map(|i| vec_inv(&j.column(i).into_owned(), rows, cols))
        .collect()
}

/// Per-trajectory information sum Jab' [z z' ox Sigma_w^-1] Jab, computed as
/// G' Sigma_w^-1 G with G's columns Theta_i z.
fn sf_rollout_information(
    traj: &Trajectory,
    theta_mats: &[DMatrix<f64>],
    sw_inv: &DMatrix<f64>,
    d_x: usize,
) -> DMatrix<f64> {
    let dt = theta_mats.len();
    let mut acc = DMatrix::zeros(dt, dt);
    let dz = if dt > 0 { theta_mats[0].ncols() } else { 0 };
    for t in 0..traj.u.len() {
        let mut z = DVector::zeros(dz);
        z.rows_mut(0, d_x).copy_from(&traj.x[t]);
        z.rows_mut(d_x, traj.u[t].len()).copy_from(&traj.u[t]);
        let mut g = DMatrix::zeros(d_x, dt);
        for (i, th) in theta_mats.iter().enumerate() {
            g.set_column(i, &(th * &z));
        }
        acc += g.transpose() * sw_inv * g;
    }
    acc
}

fn mc_information<F>(n_rollouts: usize, per_rollout: F) -> DMatrix<f64>
where
    F: Fn(usize) -> DMatrix<f64> + Sync + Send,
{
    let parts: Vec<DMatrix<f64>> = (0..n_rollouts).into_par_iter().map(per_rollout).collect();
    let mut total = parts[0].clone();
    for p in &parts[1..] {
        total += p;
    }
    symmetrize(total / n_rollouts as f64)
}

/// Monte Carlo estimate of the trajectory Fisher information in state feedback.
pub fn sf_information(
    inst: &LqgInstance,
    p: &Parametrization,
    policy: &PolicySpec,
    horizon: usize,
    n_rollouts: usize,
    seed: u64,
) -> Result<InformationMatrix> {
    if inst.mode != Mode::StateFeedback {
        return Err(LqgError::WrongMode { expected: Mode::StateFeedback, got: inst.mode });
    }
    let sw_inv = inverse_pd(&inst.sigma_w, "Sigma_w")?;
    let jab = p.jacobian_ab(&p.nominal_theta());
    let theta_mats = jacobian_columns_as_matrices(&jab, inst.d_x(), inst.d_x() + inst.d_u());
    let matrix = mc_information(n_rollouts, |i| {
        let traj = simulate(inst, policy, horizon, rollout_seed(seed, i as u64));
        sf_rollout_information(&traj, &theta_mats, &sw_inv, inst.d_x())
    });
    Ok(InformationMatrix { matrix, horizon, n_rollouts, kind: InformationKind::StateFeedbackExact })
}

/// Monte Carlo estimate of the information upper bound in partial observability:
/// the state-transition term plus the output term x x' ox Sigma_v^-1 sandwiched
/// by the C-rows Jacobian.
pub fn po_information_upper(
    inst: &LqgInstance,
    p: &Parametrization,
    policy: &PolicySpec,
    horizon: usize,
    n_rollouts: usize,
    seed: u64,
) -> Result<InformationMatrix> {
    if inst.mode != Mode::PartiallyObserved {
        return Err(LqgError::WrongMode { expected: Mode::PartiallyObserved, got: inst.mode });
    }
    let sw_inv = inverse_pd(&inst.sigma_w, "Sigma_w")?;
    let sv_inv = inverse_pd(&inst.sigma_v, "Sigma_v")?;
    let th0 = p.nominal_theta();
    let theta_ab = jacobian_columns_as_matrices(&p.jacobian_ab(&th0), inst.d_x(), inst.d_x() + inst.d_u());
    let theta_c = jacobian_columns_as_matrices(&p.jacobian_c(&th0), inst.d_y(), inst.d_x());
    let d_x = inst.d_x();
    let dt = p.d_theta();
    let matrix = mc_information(n_rollouts, |i| {
        let traj = simulate(inst, policy, horizon, rollout_seed(seed, i as u64));
        let mut acc = sf_rollout_information(&traj, &theta_ab, &sw_inv, d_x);
        for t in 0..traj.u.len() {
            let mut gc = DMatrix::zeros(inst.d_y(), dt);
            for (i, th) in theta_c.iter().enumerate() {
                gc.set_column(i, &(th * &traj.x[t]));
            }
            acc += gc.transpose() * &sv_inv * gc;
        }
        acc
    });
    Ok(InformationMatrix { matrix, horizon, n_rollouts, kind: InformationKind::OutputUpperBound })
}

/// Per-rollout trajectory scores d/dtheta log p(trajectory), computed at the
/// true parameter from the Gaussian transition factors.
pub fn score_samples(
    inst: &LqgInstance,
    p: &Parametrization,
    policy: &PolicySpec,
    horizon: usize,
    n_rollouts: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    if inst.mode != Mode::StateFeedback {
        return Err(LqgError::WrongMode { expected: Mode::StateFeedback, got: inst.mode });
    }
    let sw_inv = inverse_pd(&inst.sigma_w, "Sigma_w")?;
    let jab = p.jacobian_ab(&p.nominal_theta());
    let theta_mats = jacobian_columns_as_matrices(&jab, inst.d_x(), inst.d_x() + inst.d_u());
    let d_x = inst.d_x();
    Ok((0..n_rollouts)
        .into_par_iter()
        .map(|i| {
            let traj = simulate(inst, policy, horizon, rollout_seed(seed, i as u64));
            let mut score = DVector::zeros(theta_mats.len());
            for t in 0..traj.u.len() {
                let resid = &traj.x[t + 1] - &inst.a * &traj.x[t] - &inst.b * &traj.u[t];
                let lhs = &sw_inv * resid;
                let mut z = DVector::zeros(d_x + traj.u[t].len());
                z.rows_mut(0, d_x).copy_from(&traj.x[t]);
                z.rows_mut(d_x, traj.u[t].len()).copy_from(&traj.u[t]);
                for (j, th) in theta_mats.iter().enumerate() {
                    score[j] += lhs.dot(&(th * &z));
                }
            }
            score
        })
        .collect())
}

/// Brute-force information oracle: average outer product of trajectory scores.
pub fn score_oracle_information(
    inst: &LqgInstance,
    p: &Parametrization,
    policy: &PolicySpec,
    horizon: usize,
    n_rollouts: usize,
    seed: u64,
) -> Result<InformationMatrix> {
    let scores = score_samples(inst, p, policy, horizon, n_rollouts, seed)?;
    let dt = p.d_theta();
    let mut total = DMatrix::zeros(dt, dt);
    for s in &scores {
        total += s * s.transpose();
    }
    Ok(InformationMatrix {
        matrix: symmetrize(total / n_rollouts as f64),
        horizon,
        n_rollouts,
        kind: InformationKind::ScoreOracle,
    })
}

/// Per-rollout information matrices (state-feedback exact form or the partially
/// observed upper bound, by mode), for checks that need per-sample statistics
/// of projected traces rather than the aggregate mean.
pub fn information_samples(
    inst: &LqgInstance,
    p: &Parametrization,
    policy: &PolicySpec,
    horizon: usize,
    n_rollouts: usize,
    seed: u64,
) -> Result<Vec<DMatrix<f64>>> {
    let sw_inv = inverse_pd(&inst.sigma_w, "Sigma_w")?;
    let th0 = p.nominal_theta();
    let theta_ab = jacobian_columns_as_matrices(&p.jacobian_ab(&th0), inst.d_x(), inst.d_x() + inst.d_u());
    let po_extra = match inst.mode {
        Mode::StateFeedback => None,
        Mode::PartiallyObserved => Some((
            inverse_pd(&inst.sigma_v, "Sigma_v")?,
            jacobian_columns_as_matrices(&p.jacobian_c(&th0), inst.d_y(), inst.d_x()),
        )),
    };
    let d_x = inst.d_x();
    let dt = p.d_theta();
    Ok((0..n_rollouts)
        .into_par_iter()
        .map(|i| {
            let traj = simulate(inst, policy, horizon, rollout_seed(seed, i as u64));
            let mut acc = sf_rollout_information(&traj, &theta_ab, &sw_inv, d_x);
            if let Some((sv_inv, theta_c)) = &po_extra {
                for t in 0..traj.u.len() {
                    let mut gc = DMatrix::zeros(inst.d_y(), dt);
                    for (j, th) in theta_c.iter().enumerate() {
                        gc.set_column(j, &(th * &traj.x[t]));
                    }
                    acc += gc.transpose() * sv_inv * gc;
                }
            }
            acc
        })
        .collect())
}

/// Analytic per-step expected information under the optimal policy. State
/// feedback: Jab' [H Gamma H' ox Sigma_w^-1] Jab with H = [I; K] and Gamma the
/// stationary closed-loop covariance. Partially observed: the per-step kernel
/// matrix Jab' [blockdiag(I, KK') ox Sigma_w^-1] Jab plus the output term
/// Jc' [I ox Sigma_v^-1] Jc. Exact zeros in the kernel, used by certificates.
pub fn optimal_per_step_information(inst: &LqgInstance, p: &Parametrization) -> Result<InformationMatrix> {
    let th0 = p.nominal_theta();
    let jab = p.jacobian_ab(&th0);
    let sw_inv = inverse_pd(&inst.sigma_w, "Sigma_w")?;
    let k = &inst.control().k;
    let (d_x, d_u) = (inst.d_x(), inst.d_u());
    let matrix = match inst.mode {
        Mode::StateFeedback => {
            let mut h = DMatrix::zeros(d_x + d_u, d_x);
            h.view_mut((0, 0), (d_x, d_x)).copy_from(&DMatrix::identity(d_x, d_x));
            h.view_mut((d_x, 0), (d_u, d_x)).copy_from(k);
            let gamma = crate::riccati::closed_loop_gramian(&inst.control().closed_loop, &inst.sigma_w)?;
            jab.transpose() * kron(&(&h * gamma * h.transpose()), &sw_inv) * &jab
        }
        Mode::PartiallyObserved => {
            let mut block = DMatrix::zeros(d_x + d_u, d_x + d_u);
            block.view_mut((0, 0), (d_x, d_x)).copy_from(&DMatrix::identity(d_x, d_x));
            block.view_mut((d_x, d_x), (d_u, d_u)).copy_from(&(k * k.transpose()));
            let sv_inv = inverse_pd(&inst.sigma_v, "Sigma_v")?;
            let jc = p.jacobian_c(&th0);
            jab.transpose() * kron(&block, &sw_inv) * &jab
                + jc.transpose() * kron(&DMatrix::identity(d_x, d_x), &sv_inv) * &jc
        }
    };
    Ok(InformationMatrix {
        matrix: symmetrize(matrix),
        horizon: 1,
        n_rollouts: 0,
        kind: InformationKind::OptimalPolicyPerStep,
    })
}

// ---------------------------------------------------------------------------
// Van Trees apparatus
// ---------------------------------------------------------------------------

/// A smooth, compactly supported prior density on an interval.
pub trait Prior: Sync {
    fn support(&self) -> (f64, f64);
    fn density(&self, x: f64) -> f64;
    fn density_derivative(&self, x: f64) -> f64;
}

/// lambda(x) = (1/w) cos^2(pi (x - c) / (2 w)) on [c - w, c + w]; C^1, compactly
/// supported, with location integral pi^2 / w^2.
#[derive(Debug, Clone, Copy)]
pub struct CosineBumpPrior {
    pub center: f64,
    pub half_width: f64,
}

impl Prior for CosineBumpPrior {
    fn support(&self) -> (f64, f64) {
        (self.center - self.half_width, self.center + self.half_width)
    }

    fn density(&self, x: f64) -> f64 {
        let w = self.half_width;
        let s = std::f64::consts::PI * (x - self.center) / (2.0 * w);
        if s.abs() >= std::f64::consts::FRAC_PI_2 {
            0.0
        } else {
            s.cos().powi(2) / w
        }
    }

    fn density_derivative(&self, x: f64) -> f64 {
        let w = self.half_width;
        let s = std::f64::consts::PI * (x - self.center) / (2.0 * w);
        if s.abs() >= std::f64::consts::FRAC_PI_2 {
            0.0
        } else {
            -std::f64::consts::PI * s.cos() * s.sin() / (w * w)
        }
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-like initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // evaluate P_n and P_n' by the three-term recurrence
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0, x);
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// integral of f over [lo, hi] by composite 16-point Gauss-Legendre with at
/// least `quadrature_n` total nodes.
fn composite_gl<F: Fn(f64) -> f64>(lo: f64, hi: f64, quadrature_n: usize, f: F) -> f64 {
    const PANEL: usize = 16;
    let panels = quadrature_n.div_ceil(PANEL).max(1);
    let (nodes, weights) = gauss_legendre(PANEL);
    let h = (hi - lo) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let a = lo + p as f64 * h;
        let mid = a + 0.5 * h;
        for (x, w) in nodes.iter().zip(&weights) {
            total += w * f(mid + 0.5 * h * x);
        }
    }
    total * 0.5 * h
}

/// Location integral J(lambda) = int (lambda'/lambda)^2 lambda = int lambda'^2/lambda.
pub fn location_integral<P: Prior>(prior: &P, quadrature_n: usize) -> Result<f64> {
    let (lo, hi) = prior.support();
    let mut bad: Option<f64> = None;
    let val = composite_gl(lo, hi, quadrature_n, |x| {
        let l = prior.density(x);
        if l < 0.0 {
            // flagged outside the closure via interior mutability-free scan below
            f64::NAN
        } else if l == 0.0 {
            0.0
        } else {
            let d = prior.density_derivative(x);
            d * d / l
        }
    });
    if val.is_nan() {
        // locate an offending point for the error message
        for i in 0..=1000 {
            let x = lo + (hi - lo) * i as f64 / 1000.0;
            if prior.density(x) < 0.0 {
                bad = Some(x);
                break;
            }
        }
        return Err(LqgError::InvalidPrior(bad.unwrap_or(lo)));
    }
    Ok(val)
}

#[derive(Debug, Clone, Copy)]
pub struct VanTreesResult {
    pub bayes_mse: f64,
    pub std_error: f64,
    pub bound: f64,
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Scalar Van Trees check for y ~ N(theta, sigma^2), theta ~ prior: Monte Carlo
/// Bayes risk of the posterior mean (quadrature per sample) against the bound
/// 1 / (1/sigma^2 + J(lambda)).
pub fn van_trees_check<P: Prior>(
    sigma: f64,
    prior: &P,
    n_samples: usize,
    seed: u64,
) -> Result<VanTreesResult> {
    let j = location_integral(prior, 256)?;
    let bound = 1.0 / (1.0 / (sigma * sigma) + j);
    let (lo, hi) = prior.support();
    let dmax = composite_gl(lo, hi, 64, |x| prior.density(x)).max(1e-12); // normalization sanity
    let peak = (0..=2000)
        .map(|i| prior.density(lo + (hi - lo) * i as f64 / 2000.0))
        .fold(0.0f64, f64::max)
        / dmax;
    let (nodes, weights) = gauss_legendre(64);
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);

    let sq_errs: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(rollout_seed(seed, i as u64));
            // rejection-sample theta from the prior
            let theta = loop {
                let x = lo + (hi - lo) * rng.gen::<f64>();
                let u: f64 = rng.gen::<f64>() * peak * dmax;
                if u <= prior.density(x) {
                    break x;
                }
            };
            let noise: f64 = rng.sample(StandardNormal);
            let y = theta + sigma * noise;
            // posterior mean by quadrature
            let (mut num, mut den) = (0.0, 0.0);
            for (x, w) in nodes.iter().zip(&weights) {
                let xx = mid + half * x;
                let f = prior.density(xx) * normal_pdf((y - xx) / sigma);
                num += w * f * xx;
                den += w * f;
            }
            let est = num / den;
            (est - theta) * (est - theta)
        })
        .collect();

    let n = n_samples as f64;
    let mean = sq_errs.iter().sum::<f64>() / n;
    let var = sq_errs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok(VanTreesResult { bayes_mse: mean, std_error: (var / n).sqrt(), bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{e1_instance, e_po_instance, Parametrization};
    use crate::riccati::scalar;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (nodes, weights) = gauss_legendre(8);
        let integral: f64 = nodes.iter().zip(&weights).map(|(x, w)| w * x.powi(6)).sum();
        assert_relative_eq!(integral, 2.0 / 7.0, epsilon = 1e-12);
        let total: f64 = weights.iter().sum();
        assert_relative_eq!(total, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn cosine_bump_location_integral() {
        let prior = CosineBumpPrior { center: 0.0, half_width: 1.0 };
        let j = location_integral(&prior, 256).unwrap();
        assert_relative_eq!(j, std::f64::consts::PI.powi(2), epsilon = 1e-6);
        // translation invariance
        let shifted = CosineBumpPrior { center: 0.3, half_width: 1.0 };
        assert_relative_eq!(location_integral(&shifted, 256).unwrap(), j, epsilon = 1e-9);
        // scaling: lambda_s(x) = s lambda(s x) has J = s^2 J (half_width 1/s)
        let scaled = CosineBumpPrior { center: 0.0, half_width: 0.5 };
        assert_relative_eq!(location_integral(&scaled, 256).unwrap(), 4.0 * j, epsilon = 1e-5);
    }

    struct BadPrior;
    impl Prior for BadPrior {
        fn support(&self) -> (f64, f64) {
            (-1.0, 1.0)
        }
        fn density(&self, x: f64) -> f64 {
            -x.abs()
        }
        fn density_derivative(&self, _x: f64) -> f64 {
            0.0
        }
    }

    #[test]
    fn negative_prior_rejected() {
        assert!(matches!(
            location_integral(&BadPrior, 64),
            Err(LqgError::InvalidPrior(_))
        ));
    }

    #[test]
    fn per_step_information_e1_closed_form() {
        let e1 = e1_instance();
        let p = Parametrization::unstructured_ab(&e1);
        let info = optimal_per_step_information(&e1, &p).unwrap();
        let k = e1.control().k[(0, 0)];
        let gamma = e1.x0_cov()[(0, 0)];
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, k, k, k * k]) * gamma;
        assert_relative_eq!(info.matrix, expect, epsilon = 1e-9);
    }

    #[test]
    fn sf_information_under_optimal_matches_per_step() {
        let e1 = e1_instance();
        let p = Parametrization::unstructured_ab(&e1);
        let t = 50;
        let info = sf_information(&e1, &p, &PolicySpec::Optimal, t, 4000, 77).unwrap();
        let per = optimal_per_step_information(&e1, &p).unwrap();
        let expect = per.matrix * t as f64;
        for r in 0..2 {
            for c in 0..2 {
                let rel = (info.matrix[(r, c)] - expect[(r, c)]).abs() / expect.amax();
                assert!(rel < 0.05, "entry ({r},{c}): {} vs {}", info.matrix[(r, c)], expect[(r, c)]);
            }
        }
        // smallest eigenvalue tiny relative to trace
        let eig = info.matrix.clone().symmetric_eigen().eigenvalues;
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min <= 1e-3 * info.matrix.trace());
    }

    #[test]
    fn sf_information_wrong_mode() {
        let po = e_po_instance();
        let p = Parametrization::b_only(&po);
        assert!(matches!(
            sf_information(&po, &p, &PolicySpec::Optimal, 10, 10, 1),
            Err(LqgError::WrongMode { .. })
        ));
    }

    #[test]
    fn po_per_step_kernel_dimension() {
        let po = e_po_instance();
        let p = Parametrization::b_only(&po);
        let info = optimal_per_step_information(&po, &p).unwrap();
        let basis = crate::matcalc::kernel_basis(&info.matrix, 1e-9).unwrap();
        assert_eq!(basis.dim(), 1); // d_x * dim ker KK' = 1 * 1
    }

    #[test]
    fn exciting_feedback_information_grows_linearly() {
        let e1 = e1_instance();
        let p = Parametrization::unstructured_ab(&e1);
        // constant dither around the optimal gain keeps (x, u) full rank
        let policy = PolicySpec::CeDither { sigma0: 1.0, beta: 0.0, frozen: true };
        let i1 = sf_information(&e1, &p, &policy, 50, 2000, 5).unwrap();
        let i2 = sf_information(&e1, &p, &policy, 100, 2000, 5).unwrap();
        let min1 = i1.matrix.clone().symmetric_eigen().eigenvalues.min();
        let min2 = i2.matrix.clone().symmetric_eigen().eigenvalues.min();
        assert!(min1 > 0.0);
        let ratio = min2 / min1;
        assert!((1.7..2.3).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn score_oracle_agrees_with_exact_form() {
        let e1 = e1_instance();
        let p = Parametrization::unstructured_ab(&e1);
        let k = e1.control().k[(0, 0)] + 0.1;
        let policy = PolicySpec::LinearFeedback { gain: scalar(k) };
        let exact = sf_information(&e1, &p, &policy, 20, 20_000, 13).unwrap();
        let oracle = score_oracle_information(&e1, &p, &policy, 20, 20_000, 13).unwrap();
        let scale = exact.matrix.amax();
        // crude 3-SE-scale band: SE of the oracle entries is O(scale/sqrt(n)) with
        // a trajectory-kurtosis factor; validated tightly in the acceptance suite
        assert!((exact.matrix - oracle.matrix).amax() <= 0.1 * scale);
        // mean score is zero
        let scores = score_samples(&e1, &p, &policy, 20, 20_000, 13).unwrap();
        let mut mean = DVector::zeros(2);
        for s in &scores {
            mean += s;
        }
        mean /= scores.len() as f64;
        assert!(mean.amax() < 0.2);
    }

    #[test]
    fn single_transition_score_outer_product_rank() {
        let e1 = e1_instance();
        let p = Parametrization::unstructured_ab(&e1);
        let scores = score_samples(&e1, &p, &PolicySpec::Optimal, 1, 1, 3).unwrap();
        let outer = &scores[0] * scores[0].transpose();
        let eig = outer.symmetric_eigen().eigenvalues;
        let nonzero = eig.iter().filter(|l| l.abs() > 1e-12).count();
        assert!(nonzero <= 1);
    }

    #[test]
    fn van_trees_scalar_cases() {
        let prior = CosineBumpPrior { center: 0.0, half_width: 1.0 };
        let res = van_trees_check(0.5, &prior, 20_000, 17).unwrap();
        assert!(res.bayes_mse + 3.0 * res.std_error >= res.bound, "{res:?}");
        // J >> 1/sigma^2 regime: bound approaches 1/J from below
        let res_wide = van_trees_check(100.0, &prior, 2000, 18).unwrap();
        let j = std::f64::consts::PI.powi(2);
        assert!(res_wide.bound <= 1.0 / j);
        assert!(res_wide.bound >= 0.99 / j);
        // prior variance of the cos^2 bump exceeds 1/J (Van Trees on the prior alone)
        assert!(res_wide.bayes_mse + 3.0 * res_wide.std_error >= 1.0 / j);
    }
}
