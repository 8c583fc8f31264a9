//! Discrete algebraic Riccati equations for control and filtering, the derived
//! gains and noise covariances, and closed-loop gramians.
//!
//! The solvers are plain fixed-point value iterations: robust and easily
//! testable at the dimensions used here (<= ~100).

use nalgebra::{DMatrix, DVector};

use crate::error::{LqgError, Result};
use crate::matcalc::{kron, vec, vec_inv};

const FP_TOL: f64 = 1e-12;
const FP_MAX_ITERS: usize = 100_000;

/// Solution of the control DARE: cost-to-go matrix P, stabilizing gain
/// K = -(B'PB + R)^-1 B'PA, and the closed loop A + BK.
#[derive(Debug, Clone)]
pub struct ControlSolution {
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub closed_loop: DMatrix<f64>,
    pub iterations: usize,
}

/// Solution of the filter DARE: prediction-error covariance S, Kalman gain F,
/// the innovation covariance Sigma_nu of the filtered-state noise, and the
/// stationary filtering error covariance Xi. S = Xi + Sigma_nu.
#[derive(Debug, Clone)]
pub struct FilterSolution {
    pub s: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub sigma_nu: DMatrix<f64>,
    pub xi: DMatrix<f64>,
    pub iterations: usize,
}

/// Spectral radius via complex eigenvalues.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues().iter().map(|c| c.norm()).fold(0.0, f64::max)
}

fn check_pd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.clone().cholesky().is_none() {
        return Err(LqgError::InvalidCost(format!("{what} is not positive definite")));
    }
    Ok(())
}

/// Solve P = Q + A'PA - A'PB (B'PB+R)^-1 B'PA by value iteration from P0 = Q.
pub fn solve_control_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<ControlSolution> {
    check_pd(q, "Q")?;
    check_pd(r, "R")?;
    let mut p = q.clone();
    let mut iterations = FP_MAX_ITERS;
    for it in 0..FP_MAX_ITERS {
        let btpb_r = b.transpose() * &p * b + r;
        let gain_den = btpb_r
            .clone()
            .cholesky()
            .ok_or_else(|| LqgError::NotStabilizable("B'PB + R lost definiteness".into()))?;
        let btpa = b.transpose() * &p * a;
        let next = q + a.transpose() * &p * a - btpa.transpose() * gain_den.solve(&btpa);
        let next = (&next + next.transpose()) * 0.5;
        let delta = (&next - &p).amax();
        p = next;
        if delta <= FP_TOL * p.amax().max(1.0) {
            iterations = it + 1;
            break;
        }
        if it + 1 == FP_MAX_ITERS {
            return Err(LqgError::NotStabilizable(format!(
                "no convergence after {FP_MAX_ITERS} iterations"
            )));
        }
    }
    let btpb_r = b.transpose() * &p * b + r;
    let k = -btpb_r
        .clone()
        .cholesky()
        .ok_or_else(|| LqgError::NotStabilizable("B'PB + R singular at fixed point".into()))?
        .solve(&(b.transpose() * &p * a));
    let closed_loop = a + b * &k;
    let rho = spectral_radius(&closed_loop);
    if rho >= 1.0 {
        return Err(LqgError::NotStabilizable(format!(
            "converged gain is not stabilizing (rho = {rho})"
        )));
    }
    Ok(ControlSolution { p, k, closed_loop, iterations })
}

/// Solve S = A S A' - A S C' (C S C' + Sigma_v)^-1 C S A' + Sigma_w and derive
/// F, Sigma_nu, Xi.
pub fn solve_filter_dare(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    sigma_w: &DMatrix<f64>,
    sigma_v: &DMatrix<f64>,
) -> Result<FilterSolution> {
    let mut s = sigma_w.clone();
    let mut iterations = FP_MAX_ITERS;
    for it in 0..FP_MAX_ITERS {
        let innov = c * &s * c.transpose() + sigma_v;
        let lu = innov.clone().lu();
        if !lu.is_invertible() {
            return Err(LqgError::DegenerateInnovation);
        }
        let csa = c * &s * a.transpose();
        let next = a * &s * a.transpose() - csa.transpose() * lu.solve(&csa).unwrap() + sigma_w;
        let next = (&next + next.transpose()) * 0.5;
        let delta = (&next - &s).amax();
        s = next;
        if delta <= FP_TOL * s.amax().max(1.0) {
            iterations = it + 1;
            break;
        }
        if it + 1 == FP_MAX_ITERS {
            return Err(LqgError::NotDetectable(format!(
                "no convergence after {FP_MAX_ITERS} iterations"
            )));
        }
    }
    let innov = c * &s * c.transpose() + sigma_v;
    let lu = innov.clone().lu();
    if !lu.is_invertible() {
        return Err(LqgError::DegenerateInnovation);
    }
    let innov_inv_cs = lu.solve(&(c * &s)).unwrap();
    let f = &s * c.transpose() * lu.solve(&DMatrix::identity(innov.nrows(), innov.nrows())).unwrap();
    let sigma_nu = &f * &innov * f.transpose();
    let xi = &s - &s * c.transpose() * innov_inv_cs;
    let sym = |m: DMatrix<f64>| (&m + m.transpose()) * 0.5;
    Ok(FilterSolution {
        s,
        f,
        sigma_nu: sym(sigma_nu),
        xi: sym(xi),
        iterations,
    })
}

/// Stationary covariance: the unique PSD solution of Gamma = M Gamma M' + Sigma_nu,
/// obtained from the vectorized linear system (I - M ox M) vec Gamma = vec Sigma_nu
/// for small dimensions and by doubling accumulation beyond.
pub fn closed_loop_gramian(closed_loop: &DMatrix<f64>, sigma_nu: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let rho = spectral_radius(closed_loop);
    if rho >= 1.0 {
        return Err(LqgError::UnstableClosedLoop(rho));
    }
    let n = closed_loop.nrows();
    let gamma = if n <= 30 {
        let sys = DMatrix::identity(n * n, n * n) - kron(closed_loop, closed_loop);
        let sol = sys
            .lu()
            .solve(&vec(sigma_nu))
            .ok_or_else(|| LqgError::InvalidInput("Lyapunov system singular".into()))?;
        vec_inv(&sol, n, n)
    } else {
        // doubling: Gamma_{2N} = Gamma_N + M^N Gamma_N (M^N)'
        let mut gamma = sigma_nu.clone();
        let mut mp = closed_loop.clone();
        for _ in 0..200 {
            let inc = &mp * &gamma * mp.transpose();
            if inc.amax() <= 1e-16 * gamma.amax().max(1.0) {
                break;
            }
            gamma += inc;
            mp = &mp * &mp;
        }
        gamma
    };
    Ok((&gamma + gamma.transpose()) * 0.5)
}

/// Finite-horizon deflated gramian: sum_{j=0}^{N} M^j (Sigma_nu - delta I) (M^j)'.
pub fn finite_gramian(
    closed_loop: &DMatrix<f64>,
    sigma_nu: &DMatrix<f64>,
    delta: f64,
    n_terms: usize,
) -> Result<DMatrix<f64>> {
    let d = closed_loop.nrows();
    let deflated = sigma_nu - DMatrix::<f64>::identity(d, d) * delta;
    let min_eig = deflated
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min_eig < -1e-10 * sigma_nu.amax().max(1.0) {
        return Err(LqgError::InvalidDelta);
    }
    let rho = spectral_radius(closed_loop);
    if rho >= 1.0 {
        return Err(LqgError::UnstableClosedLoop(rho));
    }
    let mut acc = deflated.clone();
    let mut mp = DMatrix::identity(d, d);
    for _ in 0..n_terms {
        mp = closed_loop * &mp;
        acc += &mp * &deflated * mp.transpose();
    }
    Ok((&acc + acc.transpose()) * 0.5)
}

/// Closed form of the scalar control DARE with q = r = 1:
/// p is the stabilizing root of b^2 p^2 + (1 - a^2 - b^2) p - 1 = 0 and
/// k = -b p a / (b^2 p + 1). Both quadratic roots are evaluated and the one
/// with p >= 0 and |a + b k| < 1 is returned.
pub fn scalar_control_riccati(a: f64, b: f64) -> Result<(f64, f64)> {
    if b == 0.0 {
        return Err(LqgError::DivisionByZero("scalar Riccati with b = 0".into()));
    }
    let disc = (a.powi(4) + 2.0 * a * a * (b * b - 1.0) + (b * b + 1.0).powi(2)).sqrt();
    let mut best: Option<(f64, f64)> = None;
    for sign in [1.0, -1.0] {
        let p = (a * a + b * b - 1.0 + sign * disc) / (2.0 * b * b);
        let k = -b * p * a / (b * b * p + 1.0);
        if p >= 0.0 && (a + b * k).abs() < 1.0 {
            best = Some((p, k));
            break;
        }
    }
    best.ok_or_else(|| LqgError::NotStabilizable(format!("no stabilizing scalar root for a={a}, b={b}")))
}

/// Residual of the control DARE at (P, A, B, Q, R), spectral norm, for tests.
pub fn control_dare_residual(
    p: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> f64 {
    let btpb_r = b.transpose() * p * b + r;
    let btpa = b.transpose() * p * a;
    let rhs = q + a.transpose() * p * a - btpa.transpose() * btpb_r.lu().solve(&btpa).unwrap();
    crate::matcalc::spectral_norm(&(p - rhs))
}

/// Convenience scalar-matrix constructors used throughout the tests.
pub fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

pub fn scalar_vec(v: f64) -> DVector<f64> {
    DVector::from_element(1, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn control_dare_no_dynamics() {
        let sol = solve_control_dare(&scalar(0.0), &scalar(1.0), &scalar(1.0), &scalar(1.0)).unwrap();
        assert_relative_eq!(sol.p[(0, 0)], 1.0, epsilon = 1e-10);
        assert_relative_eq!(sol.k[(0, 0)], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn control_dare_scalar_unstable() {
        let sol = solve_control_dare(&scalar(2.0), &scalar(1.0), &scalar(1.0), &scalar(1.0)).unwrap();
        // stabilizing root of b^2 p^2 + (1 - a^2 - b^2) p - 1 = 0: p = 2 + sqrt(5)
        assert_relative_eq!(sol.p[(0, 0)], 2.0 + 5.0f64.sqrt(), epsilon = 1e-9);
        assert_relative_eq!(sol.k[(0, 0)], -(1.0 + 5.0f64.sqrt()) / 2.0, epsilon = 1e-9);
        assert!(spectral_radius(&sol.closed_loop) < 1.0);
    }

    #[test]
    fn control_dare_decoupled_diag() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0]));
        let sol = solve_control_dare(&a, &DMatrix::identity(2, 2), &DMatrix::identity(2, 2), &DMatrix::identity(2, 2)).unwrap();
        let (p, k) = scalar_control_riccati(2.0, 1.0).unwrap();
        for i in 0..2 {
            assert_relative_eq!(sol.p[(i, i)], p, epsilon = 1e-8);
            assert_relative_eq!(sol.k[(i, i)], k, epsilon = 1e-8);
        }
        assert!(sol.p[(0, 1)].abs() < 1e-10);
    }

    #[test]
    fn control_dare_rejects_semidefinite_cost() {
        let err = solve_control_dare(&scalar(1.0), &scalar(1.0), &scalar(0.0), &scalar(1.0));
        assert!(matches!(err, Err(LqgError::InvalidCost(_))));
    }

    #[test]
    fn filter_dare_state_feedback_embedding() {
        let sol = solve_filter_dare(&scalar(0.5), &scalar(1.0), &scalar(1.0), &scalar(0.0)).unwrap();
        assert_relative_eq!(sol.s[(0, 0)], 1.0, epsilon = 1e-10);
        assert_relative_eq!(sol.f[(0, 0)], 1.0, epsilon = 1e-10);
        assert!(sol.xi[(0, 0)].abs() < 1e-10);
    }

    #[test]
    fn filter_dare_scalar_duality() {
        let sol = solve_filter_dare(&scalar(2.0), &scalar(1.0), &scalar(1.0), &scalar(1.0)).unwrap();
        let ctrl = solve_control_dare(&scalar(2.0), &scalar(1.0), &scalar(1.0), &scalar(1.0)).unwrap();
        let s = sol.s[(0, 0)];
        assert_relative_eq!(s, ctrl.p[(0, 0)], epsilon = 1e-8);
        assert_relative_eq!(sol.f[(0, 0)], s / (s + 1.0), epsilon = 1e-9);
        // sigma_nu = f^2 (c^2 s + 1), xi = s - s^2/(s+1)
        let f = s / (s + 1.0);
        assert_relative_eq!(sol.sigma_nu[(0, 0)], f * f * (s + 1.0), epsilon = 1e-9);
        assert_relative_eq!(sol.xi[(0, 0)], s / (s + 1.0), epsilon = 1e-9);
        assert_relative_eq!(sol.xi[(0, 0)] + sol.sigma_nu[(0, 0)], s, epsilon = 1e-9);
    }

    #[test]
    fn filter_dare_poor_observability_blows_up() {
        let sol = solve_filter_dare(&scalar(2.0), &scalar(0.01), &scalar(1.0), &scalar(1.0)).unwrap();
        assert!(sol.sigma_nu[(0, 0)] > 1e3);
    }

    #[test]
    fn gramian_cases() {
        let sn = scalar(1.0);
        assert_relative_eq!(closed_loop_gramian(&scalar(0.0), &sn).unwrap()[(0, 0)], 1.0, epsilon = 1e-12);
        let m = 0.42229;
        let g = closed_loop_gramian(&scalar(m), &sn).unwrap()[(0, 0)];
        assert_relative_eq!(g, 1.0 / (1.0 - m * m), epsilon = 1e-10);
        assert!(matches!(
            closed_loop_gramian(&scalar(1.0), &sn),
            Err(LqgError::UnstableClosedLoop(_))
        ));
    }

    #[test]
    fn gramian_matches_truncated_sum() {
        let m = DMatrix::from_row_slice(3, 3, &[0.5, 0.2, 0.0, -0.1, 0.4, 0.3, 0.0, 0.1, -0.6]);
        let sn = DMatrix::from_row_slice(3, 3, &[1.0, 0.1, 0.0, 0.1, 2.0, 0.2, 0.0, 0.2, 0.5]);
        let gamma = closed_loop_gramian(&m, &sn).unwrap();
        let mut acc = sn.clone();
        let mut mp = DMatrix::<f64>::identity(3, 3);
        for _ in 0..200 {
            mp = &m * &mp;
            acc += &mp * &sn * mp.transpose();
        }
        assert_relative_eq!(gamma, acc, epsilon = 1e-10);
        // fixed-point residual
        let res = (&gamma - &m * &gamma * m.transpose() - &sn).amax();
        assert!(res <= 1e-10 * gamma.amax());
    }

    #[test]
    fn finite_gramian_cases() {
        let m = 0.42229;
        let g0 = finite_gramian(&scalar(m), &scalar(1.0), 0.3, 0).unwrap();
        assert_relative_eq!(g0[(0, 0)], 0.7, epsilon = 1e-12);
        let g2 = finite_gramian(&scalar(m), &scalar(1.0), 0.5, 2).unwrap();
        assert_relative_eq!(g2[(0, 0)], 0.5 * (1.0 + m * m + m.powi(4)), epsilon = 1e-12);
        let ginf = finite_gramian(&scalar(m), &scalar(1.0), 0.0, 10_000).unwrap();
        assert_relative_eq!(
            ginf[(0, 0)],
            closed_loop_gramian(&scalar(m), &scalar(1.0)).unwrap()[(0, 0)],
            epsilon = 1e-10
        );
        assert!(matches!(
            finite_gramian(&scalar(m), &scalar(1.0), 1.5, 3),
            Err(LqgError::InvalidDelta)
        ));
    }

    #[test]
    fn scalar_closed_form_matches_solver_on_grid() {
        for &a in &[1.1, 1.5, 2.0, 5.0] {
            for &b in &[0.05, 0.1, 1.0, 2.0] {
                let (p, k) = scalar_control_riccati(a, b).unwrap();
                let sol = solve_control_dare(&scalar(a), &scalar(b), &scalar(1.0), &scalar(1.0)).unwrap();
                assert!((p - sol.p[(0, 0)]).abs() <= 1e-8, "a={a} b={b}");
                // closed-loop identity forced by the k formula
                assert!((a + b * k - a / (b * b * p + 1.0)).abs() <= 1e-10);
                assert!((a + b * k).abs() < 1.0);
            }
        }
        assert!(scalar_control_riccati(2.0, 0.0).is_err());
    }

    #[test]
    fn scalar_closed_form_stable_plant() {
        // |a| < 1 branch selection: DARE fixed point for a=0, b=1 is exactly 1.
        let (p, k) = scalar_control_riccati(0.0, 1.0).unwrap();
        assert_relative_eq!(p, 1.0, epsilon = 1e-12);
        assert_relative_eq!(k, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn dare_residual_small() {
        let a = DMatrix::from_row_slice(2, 2, &[1.2, 0.3, 0.0, 0.9]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.5]);
        let q = DMatrix::identity(2, 2);
        let r = DMatrix::identity(1, 1);
        let sol = solve_control_dare(&a, &b, &q, &r).unwrap();
        let res = control_dare_residual(&sol.p, &a, &b, &q, &r);
        assert!(res <= 1e-8 * crate::matcalc::spectral_norm(&sol.p));
    }
}
