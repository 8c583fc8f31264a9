//! Parametrized LQG instances, policies, and trajectory simulation with the
//! stationary Kalman filter run alongside the plant.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LqgError, Result};
use crate::matcalc::{vec, vec_inv};
use crate::riccati::{
    closed_loop_gramian, solve_control_dare, solve_filter_dare, ControlSolution, FilterSolution,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    StateFeedback,
    PartiallyObserved,
}

/// A validated LQG instance at its nominal parameter, with the control and
/// filter Riccati solutions cached.
#[derive(Debug, Clone)]
pub struct LqgInstance {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub sigma_w: DMatrix<f64>,
    pub sigma_v: DMatrix<f64>,
    pub mode: Mode,
    control: ControlSolution,
    filter: FilterSolution,
    x0_cov: DMatrix<f64>,
    x0_sqrt: DMatrix<f64>,
    w_sqrt: DMatrix<f64>,
    v_sqrt: DMatrix<f64>,
}

/// Symmetric PSD square root via eigendecomposition, clamping tiny negative
/// eigenvalues to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = ((m + m.transpose()) * 0.5).symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

fn is_pd(m: &DMatrix<f64>) -> bool {
    m.clone().cholesky().is_some()
}

impl LqgInstance {
    /// Build and validate an instance. In StateFeedback mode C and Sigma_v are
    /// forced to I and 0. Stabilizability/detectability are verified by running
    /// both Riccati solves eagerly.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        sigma_w: DMatrix<f64>,
        sigma_v: DMatrix<f64>,
        mode: Mode,
    ) -> Result<Self> {
        let d_x = a.nrows();
        let d_u = b.ncols();
        let (c, sigma_v) = match mode {
            Mode::StateFeedback => (DMatrix::identity(d_x, d_x), DMatrix::zeros(d_x, d_x)),
            Mode::PartiallyObserved => (c, sigma_v),
        };
        let d_y = c.nrows();
        let dims_ok = a.ncols() == d_x
            && b.nrows() == d_x
            && c.ncols() == d_x
            && q.shape() == (d_x, d_x)
            && r.shape() == (d_u, d_u)
            && sigma_w.shape() == (d_x, d_x)
            && sigma_v.shape() == (d_y, d_y);
        if !dims_ok {
            return Err(LqgError::InvalidDimensions(format!(
                "inconsistent shapes for d_x={d_x}, d_u={d_u}, d_y={d_y}"
            )));
        }
        if !is_pd(&sigma_w) {
            return Err(LqgError::NondegeneracyViolated("Sigma_w must be positive definite".into()));
        }
        if mode == Mode::PartiallyObserved && !is_pd(&sigma_v) {
            return Err(LqgError::NondegeneracyViolated(
                "Sigma_v must be positive definite in PartiallyObserved mode".into(),
            ));
        }
        let control = solve_control_dare(&a, &b, &q, &r)?;
        let filter = solve_filter_dare(&a, &c, &sigma_w, &sigma_v)?;
        let x0_cov = match mode {
            // the filter DARE degenerates here; start from the stationary
            // closed-loop covariance so the optimal policy's cost is stationary
            Mode::StateFeedback => closed_loop_gramian(&control.closed_loop, &sigma_w)?,
            Mode::PartiallyObserved => filter.s.clone(),
        };
        let x0_sqrt = psd_sqrt(&x0_cov);
        let w_sqrt = psd_sqrt(&sigma_w);
        let v_sqrt = psd_sqrt(&sigma_v);
        Ok(Self {
            a,
            b,
            c,
            q,
            r,
            sigma_w,
            sigma_v,
            mode,
            control,
            filter,
            x0_cov,
            x0_sqrt,
            w_sqrt,
            v_sqrt,
        })
    }

    pub fn d_x(&self) -> usize {
        self.a.nrows()
    }
    pub fn d_u(&self) -> usize {
        self.b.ncols()
    }
    pub fn d_y(&self) -> usize {
        self.c.nrows()
    }
    pub fn control(&self) -> &ControlSolution {
        &self.control
    }
    pub fn filter(&self) -> &FilterSolution {
        &self.filter
    }
    /// Covariance of the initial state draw.
    pub fn x0_cov(&self) -> &DMatrix<f64> {
        &self.x0_cov
    }
    /// The input-space curvature B'PB + R.
    pub fn btpb_r(&self) -> DMatrix<f64> {
        self.b.transpose() * &self.control.p * &self.b + &self.r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    Unstructured,
    UnstructuredAB,
    BOnly,
    ClosedLoopInvariant,
    Affine,
}

/// A smooth (here: affine) map theta -> (A(theta), B(theta), C(theta)).
#[derive(Debug, Clone)]
pub struct Parametrization {
    pub kind: ParamKind,
    d_x: usize,
    d_u: usize,
    d_y: usize,
    nominal_a: DMatrix<f64>,
    nominal_b: DMatrix<f64>,
    nominal_c: DMatrix<f64>,
    /// optimal gain at the nominal parameter (ClosedLoopInvariant only)
    nominal_k: Option<DMatrix<f64>>,
    /// direction triples (A_i, B_i, C_i) for the Affine kind
    basis: Vec<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)>,
}

impl Parametrization {
    fn base(kind: ParamKind, inst: &LqgInstance) -> Self {
        Self {
            kind,
            d_x: inst.d_x(),
            d_u: inst.d_u(),
            d_y: inst.d_y(),
            nominal_a: inst.a.clone(),
            nominal_b: inst.b.clone(),
            nominal_c: inst.c.clone(),
            nominal_k: None,
            basis: Vec::new(),
        }
    }

    /// theta = vec[A B C].
    pub fn unstructured(inst: &LqgInstance) -> Self {
        Self::base(ParamKind::Unstructured, inst)
    }

    /// theta = vec[A B], C fixed at the nominal.
    pub fn unstructured_ab(inst: &LqgInstance) -> Self {
        Self::base(ParamKind::UnstructuredAB, inst)
    }

    /// theta = vec B, A and C fixed.
    pub fn b_only(inst: &LqgInstance) -> Self {
        Self::base(ParamKind::BOnly, inst)
    }

    /// A(theta) = A - Theta K, B(theta) = B + Theta with Theta = vec^-1(theta):
    /// the coordinates along the information-singular subspace.
    pub fn closed_loop_invariant(inst: &LqgInstance) -> Self {
        let mut p = Self::base(ParamKind::ClosedLoopInvariant, inst);
        p.nominal_k = Some(inst.control().k.clone());
        p
    }

    pub fn affine(inst: &LqgInstance, basis: Vec<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)>) -> Self {
        let mut p = Self::base(ParamKind::Affine, inst);
        p.basis = basis;
        p
    }

    pub fn d_theta(&self) -> usize {
        let (dx, du, dy) = (self.d_x, self.d_u, self.d_y);
        match self.kind {
            ParamKind::Unstructured => dx * dx + dx * du + dy * dx,
            ParamKind::UnstructuredAB => dx * dx + dx * du,
            ParamKind::BOnly => dx * du,
            ParamKind::ClosedLoopInvariant => dx * du,
            ParamKind::Affine => self.basis.len(),
        }
    }

    /// Rows of the [A B] block in the stacked vec[A B C] coordinates.
    pub fn ab_rows(&self) -> usize {
        self.d_x * self.d_x + self.d_x * self.d_u
    }

    /// The theta at which evaluate() returns the nominal triple.
    pub fn nominal_theta(&self) -> DVector<f64> {
        match self.kind {
            ParamKind::Unstructured => {
                let mut v = vec(&self.nominal_a).as_slice().to_vec();
                v.extend_from_slice(vec(&self.nominal_b).as_slice());
                v.extend_from_slice(vec(&self.nominal_c).as_slice());
                DVector::from_vec(v)
            }
            ParamKind::UnstructuredAB => {
                let mut v = vec(&self.nominal_a).as_slice().to_vec();
                v.extend_from_slice(vec(&self.nominal_b).as_slice());
                DVector::from_vec(v)
            }
            ParamKind::BOnly => vec(&self.nominal_b),
            ParamKind::ClosedLoopInvariant | ParamKind::Affine => DVector::zeros(self.d_theta()),
        }
    }

    pub fn evaluate(&self, theta: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
        if theta.len() != self.d_theta() {
            return Err(LqgError::InvalidTheta {
                got: theta.len(),
                expected: self.d_theta(),
            });
        }
        let (dx, du) = (self.d_x, self.d_u);
        Ok(match self.kind {
            ParamKind::Unstructured => {
                let a = vec_inv(&theta.rows(0, dx * dx).into_owned(), dx, dx);
                let b = vec_inv(&theta.rows(dx * dx, dx * du).into_owned(), dx, du);
                let c = vec_inv(&theta.rows(dx * dx + dx * du, self.d_y * dx).into_owned(), self.d_y, dx);
                (a, b, c)
            }
            ParamKind::UnstructuredAB => {
                let a = vec_inv(&theta.rows(0, dx * dx).into_owned(), dx, dx);
                let b = vec_inv(&theta.rows(dx * dx, dx * du).into_owned(), dx, du);
                (a, b, self.nominal_c.clone())
            }
            ParamKind::BOnly => (
                self.nominal_a.clone(),
                vec_inv(theta, dx, du),
                self.nominal_c.clone(),
            ),
            ParamKind::ClosedLoopInvariant => {
                let th = vec_inv(theta, dx, du);
                let k = self.nominal_k.as_ref().expect("closed-loop-invariant coordinates carry the nominal gain");
                (
                    &self.nominal_a - &th * k,
                    &self.nominal_b + th,
                    self.nominal_c.clone(),
                )
            }
            ParamKind::Affine => {
                let mut a = self.nominal_a.clone();
                let mut b = self.nominal_b.clone();
                let mut c = self.nominal_c.clone();
                for (i, (ai, bi, ci)) in self.basis.iter().enumerate() {
                    a += ai * theta[i];
                    b += bi * theta[i];
                    c += ci * theta[i];
                }
                (a, b, c)
            }
        })
    }

    /// Jacobian of theta -> vec[A B C] (stacked vec A, vec B, vec C). All kinds
    /// shipped are affine, so this is exact and theta-independent.
    pub fn jacobian_abc(&self, _theta: &DVector<f64>) -> DMatrix<f64> {
        let (dx, du, dy) = (self.d_x, self.d_u, self.d_y);
        let rows = dx * dx + dx * du + dy * dx;
        let dt = self.d_theta();
        match self.kind {
            ParamKind::Unstructured => DMatrix::identity(rows, rows),
            ParamKind::UnstructuredAB => {
                let mut j = DMatrix::zeros(rows, dt);
                j.view_mut((0, 0), (dt, dt)).copy_from(&DMatrix::identity(dt, dt));
                j
            }
            ParamKind::BOnly => {
                let mut j = DMatrix::zeros(rows, dt);
                j.view_mut((dx * dx, 0), (dt, dt)).copy_from(&DMatrix::identity(dt, dt));
                j
            }
            ParamKind::ClosedLoopInvariant => {
                let k = self.nominal_k.as_ref().unwrap();
                let mut j = DMatrix::zeros(rows, dt);
                for e in 0..dt {
                    let mut unit = DMatrix::zeros(dx, du);
                    unit[(e % dx, e / dx)] = 1.0;
                    let da = -&unit * k;
                    j.view_mut((0, e), (dx * dx, 1)).copy_from(&vec(&da));
                    j.view_mut((dx * dx, e), (dx * du, 1)).copy_from(&vec(&unit));
                }
                j
            }
            ParamKind::Affine => {
                let mut j = DMatrix::zeros(rows, dt);
                for (i, (ai, bi, ci)) in self.basis.iter().enumerate() {
                    let mut col = vec(ai).as_slice().to_vec();
                    col.extend_from_slice(vec(bi).as_slice());
                    col.extend_from_slice(vec(ci).as_slice());
                    j.set_column(i, &DVector::from_vec(col));
                }
                j
            }
        }
    }

    /// The [A B]-block rows of [`Self::jacobian_abc`].
    pub fn jacobian_ab(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        self.jacobian_abc(theta).rows(0, self.ab_rows()).into_owned()
    }

    /// The C-block rows of [`Self::jacobian_abc`].
    pub fn jacobian_c(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        self.jacobian_abc(theta)
            .rows(self.ab_rows(), self.d_y * self.d_x)
            .into_owned()
    }
}

/// What the controller does with the filter state.
#[derive(Debug, Clone)]
pub enum PolicySpec {
    /// u = K xhat with the optimal gain.
    Optimal,
    /// u = K' xhat for a fixed, not necessarily optimal gain.
    LinearFeedback { gain: DMatrix<f64> },
    /// Certainty equivalence from recursive least squares plus exploration
    /// noise sigma_t = sigma0 * (t+1)^-beta. With `frozen` the gain stays
    /// pinned at the nominal optimal K and no estimation runs.
    CeDither { sigma0: f64, beta: f64, frozen: bool },
}

const RLS_RIDGE: f64 = 1e-6;

struct CeState {
    theta_hat: DMatrix<f64>, // d_x x (d_x + d_u)
    pmat: DMatrix<f64>,      // (d_x + d_u)^2 inverse-gram
    gain: DMatrix<f64>,
    warm_p: DMatrix<f64>,
    samples: usize,
}

/// Per-rollout mutable policy state; construct one per trajectory.
pub struct PolicyState<'a> {
    spec: &'a PolicySpec,
    inst: &'a LqgInstance,
    ce: Option<CeState>,
}

impl<'a> PolicyState<'a> {
    pub fn new(inst: &'a LqgInstance, spec: &'a PolicySpec) -> Self {
        let ce = match spec {
            PolicySpec::CeDither { frozen: false, .. } => {
                let dz = inst.d_x() + inst.d_u();
                Some(CeState {
                    theta_hat: DMatrix::zeros(inst.d_x(), dz),
                    pmat: DMatrix::identity(dz, dz) / RLS_RIDGE,
                    gain: inst.control().k.clone(),
                    warm_p: inst.control().p.clone(),
                    samples: 0,
                })
            }
            _ => None,
        };
        Self { spec, inst, ce }
    }

    /// Control input at time t given the filter state.
    pub fn action<R: Rng>(&mut self, t: usize, xhat: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        match self.spec {
            PolicySpec::Optimal => &self.inst.control().k * xhat,
            PolicySpec::LinearFeedback { gain } => gain * xhat,
            PolicySpec::CeDither { sigma0, beta, frozen } => {
                let gain = if *frozen {
                    &self.inst.control().k
                } else {
                    &self.ce.as_ref().unwrap().gain
                };
                let sigma_t = sigma0 * ((t + 1) as f64).powf(-beta);
                let eta: DVector<f64> =
                    DVector::from_fn(self.inst.d_u(), |_, _| rng.sample(StandardNormal));
                gain * xhat + eta * sigma_t
            }
        }
    }

    /// Feed the observed transition xhat -> xhat_next under input u back into
    /// the identifier (no-op for non-adaptive policies).
    pub fn observe(&mut self, xhat_next: &DVector<f64>, xhat: &DVector<f64>, u: &DVector<f64>) {
        let Some(ce) = self.ce.as_mut() else { return };
        let dz = ce.pmat.nrows();
        let mut z = DVector::zeros(dz);
        z.rows_mut(0, xhat.len()).copy_from(xhat);
        z.rows_mut(xhat.len(), u.len()).copy_from(u);
        let pz = &ce.pmat * &z;
        let denom = 1.0 + z.dot(&pz);
        let resid = xhat_next - &ce.theta_hat * &z;
        ce.theta_hat += &resid * (pz.transpose() / denom);
        ce.pmat -= &pz * (pz.transpose() / denom);
        ce.samples += 1;
        // short burn-in on the initial stabilizing gain: re-solving from fewer
        // samples occasionally destabilizes an open-loop-unstable plant
        if ce.samples >= dz.max(10) {
            let dx = self.inst.d_x();
            let a_hat = ce.theta_hat.columns(0, dx).into_owned();
            let b_hat = ce.theta_hat.columns(dx, self.inst.d_u()).into_owned();
            if let Some((p, k)) = warm_dare(&a_hat, &b_hat, &self.inst.q, &self.inst.r, &ce.warm_p) {
                ce.warm_p = p;
                ce.gain = k;
            }
        }
    }
}

/// Short warm-started DARE iteration for the certainty-equivalence gain; returns
/// None when the estimates are not (numerically) stabilizable and the caller
/// keeps the previous gain.
fn warm_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p0: &DMatrix<f64>,
) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let mut p = p0.clone();
    for _ in 0..500 {
        let btpb_r = b.transpose() * &p * b + r;
        let chol = btpb_r.cholesky()?;
        let btpa = b.transpose() * &p * a;
        let next = q + a.transpose() * &p * a - btpa.transpose() * chol.solve(&btpa);
        let next = (&next + next.transpose()) * 0.5;
        let delta = (&next - &p).amax();
        p = next;
        if !p.iter().all(|x| x.is_finite()) {
            return None;
        }
        if delta <= 1e-10 * p.amax().max(1.0) {
            break;
        }
    }
    let btpb_r = b.transpose() * &p * b + r;
    let k = -btpb_r.cholesky()?.solve(&(b.transpose() * &p * a));
    if crate::riccati::spectral_radius(&(a + b * &k)) >= 1.0 {
        return None;
    }
    Some((p, k))
}

/// One rollout: states, inputs, outputs, filter states, one-step predictions
/// zeta, and filtered-state noises nu.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub xhat: Vec<DVector<f64>>,
    pub zeta: Vec<DVector<f64>>,
    pub nu: Vec<DVector<f64>>,
    pub seed: u64,
}

fn gauss<R: Rng>(sqrt: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let n = sqrt.nrows();
    let std: DVector<f64> = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
    sqrt * std
}

/// Derive the seed for rollout `idx` from a master seed (splitmix64 mixing);
/// keeps parallel rollouts reproducible and decorrelated.
pub fn rollout_seed(master: u64, idx: u64) -> u64 {
    let mut z = master ^ idx.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simulate T steps. x0 ~ N(0, x0_cov); the stationary filter runs alongside:
/// zeta_{t+1} = A xhat_t + B u_t, xhat_{t+1} = zeta_{t+1} + nu_t with
/// nu_t = F (y_{t+1} - C zeta_{t+1}); xhat_0 = F y_0. Deterministic given seed.
pub fn simulate(inst: &LqgInstance, policy: &PolicySpec, horizon: usize, seed: u64) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = PolicyState::new(inst, policy);
    let f = &inst.filter().f;

    let mut x = Vec::with_capacity(horizon + 1);
    let mut u = Vec::with_capacity(horizon);
    let mut y = Vec::with_capacity(horizon + 1);
    let mut xhat = Vec::with_capacity(horizon + 1);
    let mut zeta = Vec::with_capacity(horizon + 1);
    let mut nu = Vec::with_capacity(horizon);

    let x0 = gauss(&inst.x0_sqrt, &mut rng);
    let y0 = match inst.mode {
        Mode::StateFeedback => x0.clone(),
        Mode::PartiallyObserved => &inst.c * &x0 + gauss(&inst.v_sqrt, &mut rng),
    };
    let xhat0 = match inst.mode {
        Mode::StateFeedback => x0.clone(),
        Mode::PartiallyObserved => f * &y0,
    };
    x.push(x0);
    y.push(y0);
    xhat.push(xhat0);
    zeta.push(DVector::zeros(inst.d_x()));

    for t in 0..horizon {
        let ut = state.action(t, &xhat[t], &mut rng);
        let w = gauss(&inst.w_sqrt, &mut rng);
        let xn = &inst.a * &x[t] + &inst.b * &ut + w;
        let yn = match inst.mode {
            Mode::StateFeedback => xn.clone(),
            Mode::PartiallyObserved => &inst.c * &xn + gauss(&inst.v_sqrt, &mut rng),
        };
        let zn = &inst.a * &xhat[t] + &inst.b * &ut;
        let nut = f * (&yn - &inst.c * &zn);
        let xhn = &zn + &nut;
        state.observe(&xhn, &xhat[t], &ut);
        u.push(ut);
        x.push(xn);
        y.push(yn);
        zeta.push(zn);
        nu.push(nut);
        xhat.push(xhn);
    }
    Trajectory { x, u, y, xhat, zeta, nu, seed }
}

// ---------------------------------------------------------------------------
// Instance JSON schema (CLI external interface)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamSpecJson {
    pub kind: ParamKind,
    #[serde(default)]
    pub theta_dim: Option<usize>,
    #[serde(default)]
    pub basis: Option<Vec<AffineTripleJson>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AffineTripleJson {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
}

/// On-disk instance description; matrices are row-major nested arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub d_x: usize,
    pub d_u: usize,
    pub d_y: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C", default)]
    pub c: Option<Vec<Vec<f64>>>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    #[serde(rename = "Sigma_w")]
    pub sigma_w: Vec<Vec<f64>>,
    #[serde(rename = "Sigma_v", default)]
    pub sigma_v: Option<Vec<Vec<f64>>>,
    pub mode: Mode,
    #[serde(default)]
    pub parametrization: Option<ParamSpecJson>,
}

pub fn matrix_from_rows(rows: &[Vec<f64>], nr: usize, nc: usize, name: &str) -> Result<DMatrix<f64>> {
    if rows.len() != nr || rows.iter().any(|r| r.len() != nc) {
        return Err(LqgError::InvalidDimensions(format!("{name} must be {nr}x{nc}")));
    }
    let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(LqgError::InvalidInput(format!("{name} has non-finite entries")));
    }
    Ok(DMatrix::from_row_slice(nr, nc, &flat))
}

/// Build a validated instance from its JSON description.
pub fn build_instance(spec: &InstanceSpec) -> Result<LqgInstance> {
    let (dx, du, dy) = (spec.d_x, spec.d_u, spec.d_y);
    let a = matrix_from_rows(&spec.a, dx, dx, "A")?;
    let b = matrix_from_rows(&spec.b, dx, du, "B")?;
    let c = match (&spec.c, spec.mode) {
        (Some(c), _) => matrix_from_rows(c, dy, dx, "C")?,
        (None, Mode::StateFeedback) => DMatrix::identity(dx, dx),
        (None, Mode::PartiallyObserved) => {
            return Err(LqgError::InvalidInput("C is required in PartiallyObserved mode".into()))
        }
    };
    let q = matrix_from_rows(&spec.q, dx, dx, "Q")?;
    let r = matrix_from_rows(&spec.r, du, du, "R")?;
    let sigma_w = matrix_from_rows(&spec.sigma_w, dx, dx, "Sigma_w")?;
    let sigma_v = match (&spec.sigma_v, spec.mode) {
        (Some(sv), _) => matrix_from_rows(sv, dy, dy, "Sigma_v")?,
        (None, Mode::StateFeedback) => DMatrix::zeros(dy, dy),
        (None, Mode::PartiallyObserved) => {
            return Err(LqgError::NondegeneracyViolated(
                "Sigma_v is required in PartiallyObserved mode".into(),
            ))
        }
    };
    LqgInstance::new(a, b, c, q, r, sigma_w, sigma_v, spec.mode)
}

/// Construct the parametrization requested by the JSON description (defaults to
/// UnstructuredAB when none is given).
pub fn build_parametrization(inst: &LqgInstance, spec: Option<&ParamSpecJson>) -> Result<Parametrization> {
    let Some(ps) = spec else {
        return Ok(Parametrization::unstructured_ab(inst));
    };
    let p = match ps.kind {
        ParamKind::Unstructured => Parametrization::unstructured(inst),
        ParamKind::UnstructuredAB => Parametrization::unstructured_ab(inst),
        ParamKind::BOnly => Parametrization::b_only(inst),
        ParamKind::ClosedLoopInvariant => Parametrization::closed_loop_invariant(inst),
        ParamKind::Affine => {
            let triples = ps
                .basis
                .as_ref()
                .ok_or_else(|| LqgError::InvalidInput("Affine parametrization needs a basis".into()))?;
            let mut basis = Vec::with_capacity(triples.len());
            for (i, t) in triples.iter().enumerate() {
                basis.push((
                    matrix_from_rows(&t.a, inst.d_x(), inst.d_x(), &format!("basis[{i}].A"))?,
                    matrix_from_rows(&t.b, inst.d_x(), inst.d_u(), &format!("basis[{i}].B"))?,
                    matrix_from_rows(&t.c, inst.d_y(), inst.d_x(), &format!("basis[{i}].C"))?,
                ));
            }
            Parametrization::affine(inst, basis)
        }
    };
    if let Some(dt) = ps.theta_dim {
        if dt != p.d_theta() {
            return Err(LqgError::InvalidTheta { got: dt, expected: p.d_theta() });
        }
    }
    Ok(p)
}

/// The scalar benchmark instance a=2, b=1, q=r=1, sigma_w=1, state feedback.
pub fn e1_instance() -> LqgInstance {
    let s = crate::riccati::scalar;
    LqgInstance::new(
        s(2.0),
        s(1.0),
        s(1.0),
        s(1.0),
        s(1.0),
        s(1.0),
        s(0.0),
        Mode::StateFeedback,
    )
    .unwrap()
}

/// The over-actuated partially observed benchmark: a=2, B=[1 0], c=1,
/// sigma_w = sigma_v = 1, R = I.
pub fn e_po_instance() -> LqgInstance {
    LqgInstance::new(
        crate::riccati::scalar(2.0),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        crate::riccati::scalar(1.0),
        crate::riccati::scalar(1.0),
        DMatrix::identity(2, 2),
        crate::riccati::scalar(1.0),
        crate::riccati::scalar(1.0),
        Mode::PartiallyObserved,
    )
    .unwrap()
}
