//! Local-uninformativeness certificates, the information-singular subspace,
//! the information-regret constant L, the main lower-bound constant and its
//! closed-form state-feedback / partially-observed corollaries, failure-mode
//! sweeps, and the empirical information-vs-regret and covariance-LLN checks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LqgError, Result};
use crate::matcalc::{
    default_kernel_tol, kernel_basis, kron, orth_projector, spectral_norm, vec, SubspaceBasis,
};
use crate::model::{
    rollout_seed, simulate, LqgInstance, Mode, ParamKind, Parametrization, PolicySpec,
};
use crate::regret::regret_direct;
use crate::riccati::{closed_loop_gramian, finite_gramian, solve_control_dare};

/// Internal seed for the deterministic direction sampling of the certificate;
/// fixed so analysis outputs are reproducible byte-for-byte.
const CERTIFY_SEED: u64 = 0x5EED_CAFE;
const KERNEL_FILTER_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct HardnessDiagnostics {
    pub sigma_min_p: f64,
    pub sigma_min_gamma: f64,
    pub ker_kkt_dim: usize,
    pub cond_bpbr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HardnessReport {
    pub uninformative: bool,
    /// Orthonormal basis of the certified subspace, row-major, ambient x dim.
    pub u_basis: Vec<Vec<f64>>,
    pub dim_u: usize,
    pub l: f64,
    pub c_main: f64,
    pub c_sf: Option<f64>,
    pub c_po: Option<f64>,
    pub diagnostics: HardnessDiagnostics,
}

fn singular_values_of(m: &DMatrix<f64>) -> (f64, f64) {
    let sv = m.clone().singular_values();
    (sv.min(), sv.max())
}

/// Per-step expected-information kernel matrix M(theta~) of the certificate:
/// Jab' [H H' ox Sigma_w^-1] Jab in state feedback (H = [I; K]) or the
/// partially observed variant with blockdiag(I, KK') plus the output term.
fn certificate_matrix(inst: &LqgInstance, p: &Parametrization, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
    // evaluate() validates theta; the Jacobians of the shipped kinds are constant
    p.evaluate(theta)?;
    let jab = p.jacobian_ab(theta);
    let (d_x, d_u) = (inst.d_x(), inst.d_u());
    let k = &inst.control().k;
    let sw_inv = inst
        .sigma_w
        .clone()
        .cholesky()
        .ok_or_else(|| LqgError::NondegeneracyViolated("Sigma_w must be positive definite".into()))?
        .inverse();
    let m = match inst.mode {
        Mode::StateFeedback => {
            let mut h = DMatrix::zeros(d_x + d_u, d_x);
            h.view_mut((0, 0), (d_x, d_x)).copy_from(&DMatrix::identity(d_x, d_x));
            h.view_mut((d_x, 0), (d_u, d_x)).copy_from(k);
            jab.transpose() * kron(&(&h * h.transpose()), &sw_inv) * &jab
        }
        Mode::PartiallyObserved => {
            let sv_inv = inst
                .sigma_v
                .clone()
                .cholesky()
                .ok_or_else(|| {
                    LqgError::NondegeneracyViolated("Sigma_v must be positive definite".into())
                })?
                .inverse();
            let mut block = DMatrix::zeros(d_x + d_u, d_x + d_u);
            block.view_mut((0, 0), (d_x, d_x)).copy_from(&DMatrix::identity(d_x, d_x));
            block.view_mut((d_x, d_x), (d_u, d_u)).copy_from(&(k * k.transpose()));
            let jc = p.jacobian_c(theta);
            jab.transpose() * kron(&block, &sw_inv) * &jab
                + jc.transpose() * kron(&DMatrix::identity(d_x, d_x), &sv_inv) * &jc
        }
    };
    Ok((&m + m.transpose()) * 0.5)
}

/// Certify local uninformativeness: the optimal policy's per-step information
/// is singular along directions that still move the optimal gain. Returns the
/// filtered subspace basis; flag is true iff it is nontrivial.
pub fn certify_uninformative(
    inst: &LqgInstance,
    p: &Parametrization,
    eps: f64,
) -> Result<(bool, SubspaceBasis)> {
    let dt = p.d_theta();
    let th0 = p.nominal_theta();
    let tol = default_kernel_tol(dt.max(1));
    let center = certificate_matrix(inst, p, &th0)?;
    let candidate = kernel_basis(&center, tol)?;
    if candidate.dim() == 0 {
        return Ok((false, SubspaceBasis::empty(dt)));
    }

    // intersect kernels over sampled theta~ in the candidate kernel: a sum of
    // PSD matrices has exactly the intersection of the kernels as its kernel
    let mut rng = ChaCha8Rng::seed_from_u64(CERTIFY_SEED);
    let mut total = center;
    for _ in 0..16 {
        let raw: DVector<f64> = DVector::from_fn(candidate.dim(), |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let norm = raw.norm();
        let dir = if norm > 0.0 {
            candidate.columns() * (raw / norm)
        } else {
            candidate.columns().column(0).into_owned()
        };
        let theta = &th0 + dir * (eps / 2.0);
        total += certificate_matrix(inst, p, &theta)?;
    }
    let kernel = kernel_basis(&(total / 17.0), tol)?;
    if kernel.dim() == 0 {
        return Ok((false, SubspaceBasis::empty(dt)));
    }

    // second bullet of the definition: keep only directions that move K
    let jk = jacobian_k(inst, p)?;
    let jk_norm = spectral_norm(&jk);
    let g = &jk * kernel.columns();
    let gram = g.transpose() * &g;
    let eig = gram.symmetric_eigen();
    let cutoff = (KERNEL_FILTER_TOL * jk_norm).powi(2);
    let keep: Vec<usize> = (0..kernel.dim()).filter(|&i| eig.eigenvalues[i] > cutoff).collect();
    if keep.is_empty() {
        return Ok((false, SubspaceBasis::empty(dt)));
    }
    let mut w = DMatrix::zeros(kernel.dim(), keep.len());
    for (j, &i) in keep.iter().enumerate() {
        w.set_column(j, &eig.eigenvectors.column(i));
    }
    let basis = SubspaceBasis::new(kernel.columns() * w)?;
    Ok((true, basis))
}

/// The explicit singular subspace for the unstructured [A B] parametrization:
/// span of vec[-Delta K, Delta] over the canonical matrix units Delta, in the
/// stacked (vec A, vec B) coordinates; dimension d_x * d_u.
pub fn unstructured_singular_subspace(inst: &LqgInstance) -> Result<SubspaceBasis> {
    let cl = &inst.control().closed_loop;
    if cl.determinant().abs() < 1e-12 {
        return Err(LqgError::DegenerateClosedLoop);
    }
    let (d_x, d_u) = (inst.d_x(), inst.d_u());
    let k = &inst.control().k;
    let ambient = d_x * d_x + d_x * d_u;
    let mut cols = DMatrix::zeros(ambient, d_x * d_u);
    for e in 0..d_x * d_u {
        let mut unit = DMatrix::zeros(d_x, d_u);
        unit[(e % d_x, e / d_x)] = 1.0;
        let da = -&unit * k;
        let mut col = vec(&da).as_slice().to_vec();
        col.extend_from_slice(vec(&unit).as_slice());
        cols.set_column(e, &DVector::from_vec(col));
    }
    let qr = cols.qr();
    let q = qr.q().columns(0, d_x * d_u).into_owned();
    SubspaceBasis::new(q)
}

/// Closed-form directional derivative of the optimal gain along the variation
/// (A - t Delta K, B + t Delta) at t = 0: -(R + B'PB)^-1 Delta' P (A + BK).
pub fn dk_directional(inst: &LqgInstance, delta: &DMatrix<f64>) -> DMatrix<f64> {
    let curv = inst.btpb_r();
    let chol = curv.cholesky().expect("B'PB + R is positive definite");
    -chol.solve(&(delta.transpose() * &inst.control().p * &inst.control().closed_loop))
}

/// Jacobian of theta -> vec K(theta): analytic columns for the singular-subspace
/// coordinates, central finite differences through full DARE re-solves otherwise.
pub fn jacobian_k(inst: &LqgInstance, p: &Parametrization) -> Result<DMatrix<f64>> {
    let (d_x, d_u) = (inst.d_x(), inst.d_u());
    let rows = d_u * d_x;
    let dt = p.d_theta();
    let mut j = DMatrix::zeros(rows, dt);
    if p.kind == ParamKind::ClosedLoopInvariant {
        for e in 0..dt {
            let mut unit = DMatrix::zeros(d_x, d_u);
            unit[(e % d_x, e / d_x)] = 1.0;
            j.set_column(e, &vec(&dk_directional(inst, &unit)));
        }
        return Ok(j);
    }
    let th0 = p.nominal_theta();
    let h = 1e-5 * (1.0 + th0.norm());
    for i in 0..dt {
        let mut tp = th0.clone();
        let mut tm = th0.clone();
        tp[i] += h;
        tm[i] -= h;
        let (ap, bp, _) = p.evaluate(&tp)?;
        let (am, bm, _) = p.evaluate(&tm)?;
        let kp = solve_control_dare(&ap, &bp, &inst.q, &inst.r)?.k;
        let km = solve_control_dare(&am, &bm, &inst.q, &inst.r)?.k;
        j.set_column(i, &(vec(&(kp - km)) / (2.0 * h)));
    }
    Ok(j)
}

/// The information-regret constant
/// L = tr(Sigma_w^-1) * inf ||D[A B]||^2 * ||(B'PB + R)^-1||, with the infimum
/// over the eps-ball sampled on a sphere (exact for the affine kinds shipped,
/// whose Jacobian is constant).
pub fn info_regret_constant(inst: &LqgInstance, p: &Parametrization, eps: f64) -> Result<f64> {
    let sw_inv_tr = inst
        .sigma_w
        .clone()
        .cholesky()
        .ok_or_else(|| LqgError::NondegeneracyViolated("Sigma_w must be positive definite".into()))?
        .inverse()
        .trace();
    let th0 = p.nominal_theta();
    let mut inf_norm_sq = spectral_norm(&p.jacobian_ab(&th0)).powi(2);
    let mut rng = ChaCha8Rng::seed_from_u64(CERTIFY_SEED ^ 1);
    for _ in 0..16 {
        let raw: DVector<f64> = DVector::from_fn(p.d_theta(), |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let norm = raw.norm();
        if norm == 0.0 {
            continue;
        }
        let theta = &th0 + raw * (eps / norm);
        let n = spectral_norm(&p.jacobian_ab(&theta)).powi(2);
        inf_norm_sq = inf_norm_sq.min(n);
    }
    let (smin, _) = singular_values_of(&inst.btpb_r());
    Ok(sw_inv_tr * inf_norm_sq / smin)
}

/// Main lower-bound constant:
/// (1/4) sqrt(dim U / L) sqrt(tr([Gamma ox (B'PB+R)] Jk Pi_U Jk')). Returns 0
/// when certification fails.
pub fn lower_bound_main(inst: &LqgInstance, p: &Parametrization, eps: f64) -> Result<f64> {
    let (flag, basis) = certify_uninformative(inst, p, eps)?;
    if !flag {
        return Ok(0.0);
    }
    let l = info_regret_constant(inst, p, eps)?;
    let jk = jacobian_k(inst, p)?;
    let pi = orth_projector(&basis);
    let gamma = closed_loop_gramian(&inst.control().closed_loop, &inst.filter().sigma_nu)?;
    let weighted = kron(&gamma, &inst.btpb_r()) * &jk * pi * jk.transpose();
    let trace = weighted.trace().max(0.0);
    Ok(0.25 * (basis.dim() as f64 / l).sqrt() * trace.sqrt())
}

/// Closed-form state-feedback corollary bound:
/// (1/4) sqrt(d_x d_u) (smin P / ||KK'||) (smin/smax of B'PB+R)
/// sqrt(smin Sigma_w * smin Gamma) smin(A + BK).
pub fn lower_bound_sf_corollary(inst: &LqgInstance) -> Result<f64> {
    if inst.mode != Mode::StateFeedback {
        return Err(LqgError::WrongMode { expected: Mode::StateFeedback, got: inst.mode });
    }
    let cl = &inst.control().closed_loop;
    if cl.determinant().abs() < 1e-12 {
        return Err(LqgError::DegenerateClosedLoop);
    }
    let k = &inst.control().k;
    let (p_min, _) = singular_values_of(&inst.control().p);
    let kkt_norm = spectral_norm(&(k * k.transpose()));
    let (c_min, c_max) = singular_values_of(&inst.btpb_r());
    let (w_min, _) = singular_values_of(&inst.sigma_w);
    let gamma = closed_loop_gramian(cl, &inst.filter().sigma_nu)?;
    let (g_min, _) = singular_values_of(&gamma);
    let (cl_min, _) = singular_values_of(cl);
    Ok(0.25
        * ((inst.d_x() * inst.d_u()) as f64).sqrt()
        * (p_min / kkt_norm)
        * (c_min / c_max)
        * (w_min * g_min).sqrt()
        * cl_min)
}

/// Closed-form partially observed corollary bound (over-actuated gain):
/// (1/4) sqrt(d_x dim ker KK') smin P (smin/smax of B'PB+R)
/// sqrt(smin Sigma_w * smin Gamma) smin(A + BK).
pub fn lower_bound_po_corollary(inst: &LqgInstance) -> Result<f64> {
    if inst.mode != Mode::PartiallyObserved {
        return Err(LqgError::WrongMode { expected: Mode::PartiallyObserved, got: inst.mode });
    }
    let cl = &inst.control().closed_loop;
    if cl.determinant().abs() < 1e-12 {
        return Err(LqgError::DegenerateClosedLoop);
    }
    let k = &inst.control().k;
    let kkt = k * k.transpose();
    let ker_dim = kernel_basis(&kkt, default_kernel_tol(kkt.nrows()))?.dim();
    if ker_dim == 0 {
        return Err(LqgError::NotOveractuated);
    }
    let (p_min, _) = singular_values_of(&inst.control().p);
    let (c_min, c_max) = singular_values_of(&inst.btpb_r());
    let (w_min, _) = singular_values_of(&inst.sigma_w);
    let gamma = closed_loop_gramian(cl, &inst.filter().sigma_nu)?;
    let (g_min, _) = singular_values_of(&gamma);
    let (cl_min, _) = singular_values_of(cl);
    Ok(0.25
        * ((inst.d_x() * ker_dim) as f64).sqrt()
        * p_min
        * (c_min / c_max)
        * (w_min * g_min).sqrt()
        * cl_min)
}

/// Full analysis used by the CLI: certificate, constants, corollary bounds when
/// their preconditions hold, plus diagnostics.
pub fn analyze(inst: &LqgInstance, p: &Parametrization, eps: f64) -> Result<HardnessReport> {
    let (uninformative, basis) = certify_uninformative(inst, p, eps)?;
    let l = info_regret_constant(inst, p, eps)?;
    let c_main = lower_bound_main(inst, p, eps)?;
    let c_sf = lower_bound_sf_corollary(inst).ok();
    let c_po = lower_bound_po_corollary(inst).ok();
    let k = &inst.control().k;
    let kkt = k * k.transpose();
    let (p_min, _) = singular_values_of(&inst.control().p);
    let gamma = closed_loop_gramian(&inst.control().closed_loop, &inst.filter().sigma_nu)?;
    let (g_min, _) = singular_values_of(&gamma);
    let (c_min, c_max) = singular_values_of(&inst.btpb_r());
    let u_basis = (0..basis.ambient_dim())
        .map(|r| (0..basis.dim()).map(|c| basis.columns()[(r, c)]).collect())
        .collect();
    Ok(HardnessReport {
        uninformative,
        u_basis,
        dim_u: basis.dim(),
        l,
        c_main,
        c_sf,
        c_po,
        diagnostics: HardnessDiagnostics {
            sigma_min_p: p_min,
            sigma_min_gamma: g_min,
            ker_kkt_dim: kernel_basis(&kkt, default_kernel_tol(kkt.nrows()))?.dim(),
            cond_bpbr: c_max / c_min,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepKind {
    MarginalStability,
    PoorObservability,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub param: f64,
    pub p: f64,
    pub k: f64,
    pub closed_loop: f64,
    pub gamma: f64,
    pub sigma2_nu: Option<f64>,
    pub c_bound: f64,
}

/// Scalar failure-mode families: marginal stability (a=2, b sweeping toward 0,
/// state feedback) and poor observability (a=2, B=[b 0]=[1 0], c sweeping
/// toward 0, partially observed). Reports all tracked quantities per grid point.
pub fn failure_sweep(kind: SweepKind, grid: &[f64]) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(LqgError::InvalidInput("empty sweep grid".into()));
    }
    let s = crate::riccati::scalar;
    grid.iter()
        .map(|&g| match kind {
            SweepKind::MarginalStability => {
                let inst = LqgInstance::new(
                    s(2.0),
                    s(g),
                    s(1.0),
                    s(1.0),
                    s(1.0),
                    s(1.0),
                    s(0.0),
                    Mode::StateFeedback,
                )?;
                let gamma = closed_loop_gramian(&inst.control().closed_loop, &inst.sigma_w)?;
                Ok(SweepRow {
                    param: g,
                    p: inst.control().p[(0, 0)],
                    k: inst.control().k[(0, 0)],
                    closed_loop: inst.control().closed_loop[(0, 0)],
                    gamma: gamma[(0, 0)],
                    sigma2_nu: None,
                    c_bound: lower_bound_sf_corollary(&inst)?,
                })
            }
            SweepKind::PoorObservability => {
                let inst = LqgInstance::new(
                    s(2.0),
                    DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
                    s(g),
                    s(1.0),
                    DMatrix::identity(2, 2),
                    s(1.0),
                    s(1.0),
                    Mode::PartiallyObserved,
                )?;
                let gamma = closed_loop_gramian(&inst.control().closed_loop, &inst.filter().sigma_nu)?;
                Ok(SweepRow {
                    param: g,
                    p: inst.control().p[(0, 0)],
                    k: inst.control().k[(0, 0)],
                    closed_loop: inst.control().closed_loop[(0, 0)],
                    gamma: gamma[(0, 0)],
                    sigma2_nu: Some(inst.filter().sigma_nu[(0, 0)]),
                    c_bound: lower_bound_po_corollary(&inst)?,
                })
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct InfoRegretCheck {
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub rhs_se: f64,
    pub l: f64,
    pub holds: bool,
}

/// Empirical information-regret-boundedness: tr(V0' I V0) <= L * regret, both
/// sides Monte Carlo with the same master seed, compared with a 3-SE band.
pub fn info_regret_inequality_check(
    inst: &LqgInstance,
    p: &Parametrization,
    policy: &PolicySpec,
    horizon: usize,
    n_rollouts: usize,
    seed: u64,
) -> Result<InfoRegretCheck> {
    let (_, basis) = certify_uninformative(inst, p, CERT_EPS_DEFAULT)?;
    let v0 = basis.columns();
    let samples = crate::fisher::information_samples(inst, p, policy, horizon, n_rollouts, seed)?;
    let traces: Vec<f64> = samples
        .par_iter()
        .map(|m| (v0.transpose() * m * v0).trace())
        .collect();
    let n = traces.len() as f64;
    let lhs = traces.iter().sum::<f64>() / n;
    let var = traces.iter().map(|v| (v - lhs) * (v - lhs)).sum::<f64>() / (n - 1.0);
    let lhs_se = (var / n).sqrt();
    let l = info_regret_constant(inst, p, CERT_EPS_DEFAULT)?;
    let reg = regret_direct(inst, policy, horizon, n_rollouts, seed)?;
    let rhs = l * reg.value;
    let rhs_se = l * reg.std_error;
    let holds = lhs <= rhs + 3.0 * (lhs_se * lhs_se + rhs_se * rhs_se).sqrt();
    Ok(InfoRegretCheck { lhs, lhs_se, rhs, rhs_se, l, holds })
}

/// Default certification radius used by the empirical checks.
pub const CERT_EPS_DEFAULT: f64 = 0.1;

/// Empirical probability of the one-sided covariance LLN event: every length-L
/// block sum of xhat xhat' dominates Gamma * T^(1-alpha), with L = ceil(T^(1-alpha))
/// and Gamma the delta-deflated finite gramian.
pub fn covariance_lln_check(
    inst: &LqgInstance,
    policy: &PolicySpec,
    horizon: usize,
    alpha: f64,
    delta: f64,
    n_rollouts: usize,
    seed: u64,
) -> Result<f64> {
    let t_pow = (horizon as f64).powf(1.0 - alpha);
    let block_len = t_pow.ceil() as usize;
    let gamma = finite_gramian(
        &inst.control().closed_loop,
        &inst.filter().sigma_nu,
        delta,
        block_len,
    )?;
    let threshold = &gamma * t_pow;
    let n_blocks = (horizon.checked_div(block_len).unwrap_or(0)).saturating_sub(1);
    let successes: usize = (0..n_rollouts)
        .into_par_iter()
        .map(|i| {
            let traj = simulate(inst, policy, horizon, rollout_seed(seed, i as u64));
            for k in 1..=n_blocks {
                let mut sum = DMatrix::zeros(inst.d_x(), inst.d_x());
                for t in k * block_len..=(k + 1) * block_len {
                    sum += &traj.xhat[t] * traj.xhat[t].transpose();
                }
                let min_eig = (sum - &threshold).symmetric_eigen().eigenvalues.min();
                if min_eig < 0.0 {
                    return 0usize;
                }
            }
            1usize
        })
        .sum();
    Ok(successes as f64 / n_rollouts as f64)
}
