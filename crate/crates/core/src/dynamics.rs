//! Linearized grid-following converter dynamics.
//!
//! Each device has four states: PLL angle `theta`, PLL integrator `zeta`,
//! and the PLL-frame currents `i_d`, `i_q`, which track their setpoints
//! through a first-order lag `tau`. The PLL drives `v_q` to zero:
//!
//! ```text
//! d(zeta)/dt  = v_q
//! d(theta)/dt = w_b * (kp * v_q + ki * zeta)
//! d(i)/dt     = (i_set - i) / tau
//! ```
//!
//! The network is purely inductive. Seen from a device's rotating frame the
//! line adds the speed-voltage and inductive-drop terms of the dynamic phasor,
//! while line currents stay algebraic (no extra states):
//!
//! ```text
//! v = e^{-j theta} E + j X (1 + theta'/w_b) i + (X / w_b) di/dt
//! ```
//!
//! Linearization uses a terminal-referenced operating point: every device
//! sees `v = v_nominal` on its d-axis and injects its setpoint currents, and
//! the source voltage behind the network is whatever produces that point.
//! The linear model then depends on the network only through
//! `Z = B_r^-1 S_B`, so a homogeneous multi-farm system splits exactly into
//! single-device systems at `X = 1 / lambda_i`.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::network::{attach_gfm, reduce_spec, GfmAttachment, KronReducedNetwork, NetworkSpec};
use crate::strength::{compute_modes, ModalDecomposition};

pub type Complex64 = Complex<f64>;

/// Real parts within this band of zero count as marginal.
pub const EPS_STABLE: f64 = 1e-6;
/// Spectral abscissa at which the bisection accepts a critical SCR.
pub const CGSCR_ABSCISSA_TOL: f64 = 1e-8;
pub const CGSCR_WIDTH_TOL: f64 = 1e-9;
pub const DEFAULT_BRACKET: (f64, f64) = (0.5, 10.0);
const PRESCAN_POINTS: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GflDeviceParams {
    pub pll_kp: f64,
    pub pll_ki: f64,
    pub current_loop_tau_s: f64,
    pub p_set_pu: f64,
    pub q_set_pu: f64,
    pub base_freq_hz: f64,
    #[serde(default = "unit_voltage")]
    pub v_nominal_pu: f64,
}

fn unit_voltage() -> f64 {
    1.0
}

impl GflDeviceParams {
    /// The shipped calibrated device (CgSCR close to 1.6).
    pub fn calibrated() -> Self {
        Self {
            pll_kp: 0.1,
            pll_ki: 50.27,
            current_loop_tau_s: 0.002,
            p_set_pu: 1.0,
            q_set_pu: 0.0,
            base_freq_hz: 50.0,
            v_nominal_pu: 1.0,
        }
    }

    pub fn base_omega(&self) -> f64 {
        2.0 * PI * self.base_freq_hz
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("pll_kp", self.pll_kp),
            ("pll_ki", self.pll_ki),
            ("current_loop_tau_s", self.current_loop_tau_s),
            ("base_freq_hz", self.base_freq_hz),
            ("v_nominal_pu", self.v_nominal_pu),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::MalformedDevice(format!(
                    "`{name}` must be positive and finite, got {value}"
                )));
            }
        }
        for (name, value) in [("p_set_pu", self.p_set_pu), ("q_set_pu", self.q_set_pu)] {
            if !value.is_finite() {
                return Err(Error::MalformedDevice(format!(
                    "`{name}` must be finite, got {value}"
                )));
            }
        }
        Ok(())
    }

    /// Same device with both PLL gains multiplied by `factor`.
    pub fn with_pll_scaled(&self, factor: f64) -> Self {
        Self {
            pll_kp: self.pll_kp * factor,
            pll_ki: self.pll_ki * factor,
            ..self.clone()
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("device document serializes")
    }
}

pub fn parse_device(text: &str) -> Result<GflDeviceParams> {
    let dev: GflDeviceParams =
        toml::from_str(text).map_err(|e| Error::MalformedDevice(e.message().to_string()))?;
    dev.validate()?;
    Ok(dev)
}

/// Equilibrium of one device at grid reactance `x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OperatingPoint {
    pub scr: f64,
    pub x: f64,
    pub v_d0: f64,
    pub i_d0: f64,
    pub i_q0: f64,
    /// Source magnitude behind the grid reactance.
    pub e_mag: f64,
    /// Angle of the PLL frame relative to the source.
    pub theta0: f64,
}

/// Terminal currents shared by every device at the terminal-referenced point.
fn terminal_currents(dev: &GflDeviceParams) -> (f64, f64, f64) {
    let v = dev.v_nominal_pu;
    (v, dev.p_set_pu / v, -dev.q_set_pu / v)
}

pub fn operating_point(dev: &GflDeviceParams, scr: f64) -> Result<OperatingPoint> {
    dev.validate()?;
    if scr.is_nan() || scr <= 0.0 {
        return Err(Error::InvalidArgument(format!("SCR must be positive, got {scr}")));
    }
    let x = 1.0 / scr;
    let (v_d0, i_d0, i_q0) = terminal_currents(dev);
    let e_d = v_d0 + x * i_q0;
    if e_d <= 0.0 {
        return Err(Error::InfeasibleOperatingPoint {
            scr,
            reason: format!("reactive draw pushes the source angle past the static limit (E_d = {e_d:.6})"),
        });
    }
    let loop_gain = dev.pll_kp * x * i_d0;
    if loop_gain >= 1.0 {
        return Err(Error::InfeasibleOperatingPoint {
            scr,
            reason: format!("PLL algebraic loop gain kp*X*i_d = {loop_gain:.6} is not below 1"),
        });
    }
    let e_q = -x * i_d0;
    Ok(OperatingPoint {
        scr,
        x,
        v_d0,
        i_d0,
        i_q0,
        e_mag: e_d.hypot(e_q),
        theta0: (x * i_d0).atan2(e_d),
    })
}

impl OperatingPoint {
    pub fn state(&self) -> [f64; 4] {
        [self.theta0, 0.0, self.i_d0, self.i_q0]
    }

    pub fn input(&self) -> [f64; 2] {
        [self.i_d0, self.i_q0]
    }
}

/// Nonlinear single-device dynamics on an infinite bus.
///
/// Returns the state derivative and the injected active power.
pub fn smib_nonlinear(
    dev: &GflDeviceParams,
    op: &OperatingPoint,
    state: &[f64; 4],
    input: &[f64; 2],
) -> ([f64; 4], f64) {
    let [theta, zeta, i_d, i_q] = *state;
    let [id_set, iq_set] = *input;
    let wb = dev.base_omega();
    let tau = dev.current_loop_tau_s;
    let x = op.x;
    let h = x / (wb * tau);
    let (kp, ki) = (dev.pll_kp, dev.pll_ki);
    let e = op.e_mag;

    let v_q = (-e * theta.sin() + x * i_d + x * i_d * ki * zeta + h * (iq_set - i_q))
        / (1.0 - x * kp * i_d);
    let w = kp * v_q + ki * zeta;
    let v_d = e * theta.cos() - x * (1.0 + w) * i_q + h * (id_set - i_d);
    let deriv = [
        wb * w,
        v_q,
        (id_set - i_d) / tau,
        (iq_set - i_q) / tau,
    ];
    (deriv, v_d * i_d + v_q * i_q)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    PllAngle,
    PllIntegrator,
    CurrentD,
    CurrentQ,
}

impl StateKind {
    pub const ALL: [StateKind; 4] = [
        StateKind::PllAngle,
        StateKind::PllIntegrator,
        StateKind::CurrentD,
        StateKind::CurrentQ,
    ];

    pub fn offset(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            StateKind::PllAngle => "pll_angle",
            StateKind::PllIntegrator => "pll_integrator",
            StateKind::CurrentD => "i_d",
            StateKind::CurrentQ => "i_q",
        }
    }
}

/// `dx/dt = a x + b u`, `y = c x + d u`.
///
/// States are device-major (`4 * device + StateKind::offset`). Inputs are the
/// current setpoint deviations (`2 * device` for `i_d`, `+1` for `i_q`).
/// Outputs are per-device active power deviations on the device base.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub labels: Vec<String>,
    pub farm_ids: Vec<String>,
}

impl StateSpaceModel {
    fn zeros(farm_ids: Vec<String>) -> Self {
        let n = farm_ids.len();
        let labels = farm_ids
            .iter()
            .flat_map(|id| StateKind::ALL.iter().map(move |k| format!("{id}.{}", k.label())))
            .collect();
        Self {
            a: DMatrix::zeros(4 * n, 4 * n),
            b: DMatrix::zeros(4 * n, 2 * n),
            c: DMatrix::zeros(n, 4 * n),
            d: DMatrix::zeros(n, 2 * n),
            labels,
            farm_ids,
        }
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_devices(&self) -> usize {
        self.farm_ids.len()
    }

    pub fn state_index(device: usize, kind: StateKind) -> usize {
        4 * device + kind.offset()
    }

    pub fn is_finite(&self) -> bool {
        [&self.a, &self.b, &self.c, &self.d]
            .iter()
            .all(|m| m.iter().all(|v| v.is_finite()))
    }

    /// Eigenvalues of `a`, sorted by real part then imaginary part.
    pub fn eigenvalues(&self) -> Result<Vec<Complex64>> {
        eigenvalues_of(&self.a)
    }

    pub fn spectral_abscissa(&self) -> Result<f64> {
        Ok(spectral_abscissa(&self.eigenvalues()?))
    }
}

fn to_faer(a: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Dense nonsymmetric eigenvalues, sorted.
pub fn eigenvalues_of(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let eigs = to_faer(a).eigenvalues().map_err(|_| Error::EigenSolver)?;
    Ok(sorted(eigs.iter().map(|z| Complex64::new(z.re, z.im)).collect()))
}

pub fn sorted(mut eigs: Vec<Complex64>) -> Vec<Complex64> {
    eigs.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    eigs
}

pub fn spectral_abscissa(eigs: &[Complex64]) -> f64 {
    eigs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max)
}

pub fn damping_ratio(lambda: Complex64) -> f64 {
    let mag = lambda.norm();
    if mag == 0.0 {
        0.0
    } else {
        -lambda.re / mag
    }
}

/// Largest relative distance after greedy nearest pairing of two spectra.
///
/// Distances are relative to `max(|lambda|, 1)`.
pub fn spectral_mismatch(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut unused: Vec<Complex64> = b.to_vec();
    let mut worst = 0.0f64;
    for la in a {
        let (idx, dist) = unused
            .iter()
            .enumerate()
            .map(|(i, lb)| (i, (la - lb).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("equal lengths");
        worst = worst.max(dist / la.norm().max(1.0));
        unused.swap_remove(idx);
    }
    worst
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmibModel {
    pub model: StateSpaceModel,
    pub operating_point: OperatingPoint,
}

/// Single device on an infinite bus with grid reactance `1 / scr`.
pub fn build_smib_model(dev: &GflDeviceParams, scr: f64) -> Result<SmibModel> {
    let op = operating_point(dev, scr)?;
    let wb = dev.base_omega();
    let tau = dev.current_loop_tau_s;
    let (kp, ki) = (dev.pll_kp, dev.pll_ki);
    let x = op.x;
    let h = x / (wb * tau);
    let den = 1.0 - kp * x * op.i_d0;
    let e_d = op.v_d0 + x * op.i_q0;

    // v_q as a combination of [theta, zeta, i_d, i_q] and [u_d, u_q]
    let vq = [-e_d / den, x * op.i_d0 * ki / den, x / den, -h / den];
    let vq_u = [0.0, h / den];
    // w = theta' / w_b
    let w = [kp * vq[0], kp * vq[1] + ki, kp * vq[2], kp * vq[3]];
    let w_u = [0.0, kp * vq_u[1]];
    let vd = [
        -x * op.i_d0 - x * op.i_q0 * w[0],
        -x * op.i_q0 * w[1],
        -x * op.i_q0 * w[2] - h,
        -x - x * op.i_q0 * w[3],
    ];
    let vd_u = [h - x * op.i_q0 * w_u[0], -x * op.i_q0 * w_u[1]];

    let mut m = StateSpaceModel::zeros(vec!["device".to_string()]);
    for j in 0..4 {
        m.a[(0, j)] = wb * w[j];
        m.a[(1, j)] = vq[j];
        m.c[(0, j)] = op.i_d0 * vd[j] + op.i_q0 * vq[j];
    }
    m.a[(2, 2)] = -1.0 / tau;
    m.a[(3, 3)] = -1.0 / tau;
    m.c[(0, 2)] += op.v_d0;
    for j in 0..2 {
        m.b[(0, j)] = wb * w_u[j];
        m.b[(1, j)] = vq_u[j];
        m.d[(0, j)] = op.i_d0 * vd_u[j] + op.i_q0 * vq_u[j];
    }
    m.b[(2, 0)] = 1.0 / tau;
    m.b[(3, 1)] = 1.0 / tau;

    Ok(SmibModel {
        model: m,
        operating_point: op,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CgscrResult {
    pub cgscr: f64,
    /// Rightmost eigenvalue at `cgscr` (non-negative imaginary part).
    pub critical_eigenvalue: Complex64,
    /// Unit eigenvector of `critical_eigenvalue`, largest entry real positive.
    pub critical_eigenvector: Vec<Complex64>,
    pub bracket: (f64, f64),
    pub iterations: usize,
    /// The pre-scan saw more than one stability change inside the bracket.
    pub non_monotone: bool,
}

/// Spectral abscissa of the single-device model, with infeasible points
/// treated as unstable.
pub fn smib_abscissa(dev: &GflDeviceParams, scr: f64) -> Result<f64> {
    match build_smib_model(dev, scr) {
        Ok(m) => m.model.spectral_abscissa(),
        Err(Error::InfeasibleOperatingPoint { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

pub fn compute_cgscr(dev: &GflDeviceParams, bracket: (f64, f64)) -> Result<CgscrResult> {
    dev.validate()?;
    let (lo0, hi0) = bracket;
    if !(lo0.is_finite() && hi0.is_finite() && lo0 > 0.0 && hi0 > lo0) {
        return Err(Error::InvalidArgument(format!(
            "bracket must satisfy 0 < lo < hi, got [{lo0}, {hi0}]"
        )));
    }
    let a_lo = smib_abscissa(dev, lo0)?;
    let a_hi = smib_abscissa(dev, hi0)?;
    if !(a_lo > 0.0 && a_hi < 0.0) {
        let state = if a_hi < 0.0 && a_lo <= 0.0 {
            "stable"
        } else if a_lo > 0.0 && a_hi >= 0.0 {
            "unstable"
        } else {
            "stable at the weak end and unstable at the strong end"
        };
        return Err(Error::NoSignChange {
            lo: lo0,
            hi: hi0,
            state,
        });
    }

    let mut changes = 0;
    let mut prev = a_lo > 0.0;
    for k in 1..PRESCAN_POINTS {
        let scr = lo0 + (hi0 - lo0) * k as f64 / (PRESCAN_POINTS - 1) as f64;
        let unstable = smib_abscissa(dev, scr)? > 0.0;
        if unstable != prev {
            changes += 1;
        }
        prev = unstable;
    }

    let (mut lo, mut hi) = (lo0, hi0);
    let mut mid = 0.5 * (lo + hi);
    let mut iterations = 0;
    loop {
        iterations += 1;
        let a = smib_abscissa(dev, mid)?;
        if a.abs() < CGSCR_ABSCISSA_TOL {
            break;
        }
        if a > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < CGSCR_WIDTH_TOL || iterations >= 200 {
            mid = 0.5 * (lo + hi);
            break;
        }
        mid = 0.5 * (lo + hi);
    }

    let smib = build_smib_model(dev, mid)?;
    let eigs = smib.model.eigenvalues()?;
    let mut critical = *eigs
        .iter()
        .max_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)))
        .expect("four eigenvalues");
    if critical.im < 0.0 {
        critical = critical.conj();
    }
    let critical_eigenvector = eigenvector(&smib.model.a, critical)?;

    Ok(CgscrResult {
        cgscr: mid,
        critical_eigenvalue: critical,
        critical_eigenvector,
        bracket,
        iterations,
        non_monotone: changes > 1,
    })
}

/// Eigenvector of `a` for the eigenvalue nearest `lambda`, unit length with
/// its largest entry real and positive.
fn eigenvector(a: &DMatrix<f64>, lambda: Complex64) -> Result<Vec<Complex64>> {
    let evd = to_faer(a).eigen().map_err(|_| Error::EigenSolver)?;
    let s = evd.S().column_vector();
    let k = (0..s.nrows())
        .min_by(|&x, &y| {
            let dx = (Complex64::new(s[x].re, s[x].im) - lambda).norm();
            let dy = (Complex64::new(s[y].re, s[y].im) - lambda).norm();
            dx.total_cmp(&dy)
        })
        .ok_or(Error::EigenSolver)?;
    let u = evd.U();
    let mut v: Vec<Complex64> = (0..u.nrows())
        .map(|i| Complex64::new(u[(i, k)].re, u[(i, k)].im))
        .collect();
    let pivot = v
        .iter()
        .copied()
        .max_by(|x, y| x.norm().total_cmp(&y.norm()))
        .ok_or(Error::EigenSolver)?;
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let phase = pivot.conj() / pivot.norm();
    for z in &mut v {
        *z = *z * phase / norm;
    }
    Ok(v)
}

/// Spectrum of the homogeneous multi-farm system assembled mode by mode.
pub fn modal_eigenvalues(dev: &GflDeviceParams, modes: &ModalDecomposition) -> Result<Vec<Complex64>> {
    modal_eigenvalues_with(dev, modes, Execution::Sequential)
}

pub fn modal_eigenvalues_with(
    dev: &GflDeviceParams,
    modes: &ModalDecomposition,
    exec: Execution,
) -> Result<Vec<Complex64>> {
    let indexed: Vec<(usize, f64)> = modes.lambdas.iter().copied().enumerate().collect();
    let per_mode = exec.map(&indexed, |&(index, lambda)| {
        build_smib_model(dev, lambda)
            .and_then(|m| m.model.eigenvalues())
            .map_err(|e| Error::Mode {
                index,
                lambda,
                source: Box::new(e),
            })
    });
    let mut all = Vec::with_capacity(4 * modes.len());
    for eigs in per_mode {
        all.extend(eigs?);
    }
    Ok(sorted(all))
}

/// Multi-farm model assembled directly from `B_r` and `S_B`.
pub fn direct_full_model(dev: &GflDeviceParams, reduced: &KronReducedNetwork) -> Result<StateSpaceModel> {
    dev.validate()?;
    let n = reduced.n_farms();
    let wb = dev.base_omega();
    let tau = dev.current_loop_tau_s;
    let (kp, ki) = (dev.pll_kp, dev.pll_ki);
    let (v_d0, i_d0, i_q0) = terminal_currents(dev);
    let hp = 1.0 / (wb * tau);

    let s_b = DMatrix::from_diagonal(reduced.s_b());
    let chol = reduced
        .b_r()
        .clone()
        .cholesky()
        .ok_or(Error::SingularCoupling)?;
    // Device-base impedance seen from device terminals.
    let z = chol.solve(&s_b);
    let eye = DMatrix::<f64>::identity(n, n);
    let lu = (&eye - &z * (kp * i_d0)).lu();
    if !lu.is_invertible() {
        return Err(Error::SingularCoupling);
    }
    let solve = |m: DMatrix<f64>| lu.solve(&m).ok_or(Error::SingularCoupling);

    let vq_theta = solve(&eye * (-v_d0) - &z * i_q0)?;
    let vq_zeta = solve(&z * (i_d0 * ki))?;
    let vq_id = solve(z.clone())?;
    let vq_iq = solve(&z * (-hp))?;
    let vq_uq = solve(&z * hp)?;
    let vq_blocks = [&vq_theta, &vq_zeta, &vq_id, &vq_iq];

    let w_blocks = [
        &vq_theta * kp,
        &vq_zeta * kp + &eye * ki,
        &vq_id * kp,
        &vq_iq * kp,
    ];
    let w_uq = &vq_uq * kp;

    let vd_blocks = [
        &z * (&eye * (-i_d0) - &w_blocks[0] * i_q0),
        &z * (&w_blocks[1] * (-i_q0)),
        &z * (&w_blocks[2] * (-i_q0) - &eye * hp),
        &z * (&eye * (-1.0) - &w_blocks[3] * i_q0),
    ];
    let vd_ud = &z * hp;
    let vd_uq = &z * (&w_uq * (-i_q0));

    let mut m = StateSpaceModel::zeros(reduced.farm_ids().to_vec());
    let st = StateSpaceModel::state_index;
    for i in 0..n {
        for j in 0..n {
            for (k, kind) in StateKind::ALL.iter().enumerate() {
                let col = st(j, *kind);
                m.a[(st(i, StateKind::PllAngle), col)] = wb * w_blocks[k][(i, j)];
                m.a[(st(i, StateKind::PllIntegrator), col)] = vq_blocks[k][(i, j)];
                m.c[(i, col)] = i_d0 * vd_blocks[k][(i, j)] + i_q0 * vq_blocks[k][(i, j)];
            }
            m.b[(st(i, StateKind::PllAngle), 2 * j + 1)] = wb * w_uq[(i, j)];
            m.b[(st(i, StateKind::PllIntegrator), 2 * j + 1)] = vq_uq[(i, j)];
            m.d[(i, 2 * j)] = i_d0 * vd_ud[(i, j)];
            m.d[(i, 2 * j + 1)] = i_d0 * vd_uq[(i, j)] + i_q0 * vq_uq[(i, j)];
        }
        m.a[(st(i, StateKind::CurrentD), st(i, StateKind::CurrentD))] = -1.0 / tau;
        m.a[(st(i, StateKind::CurrentQ), st(i, StateKind::CurrentQ))] = -1.0 / tau;
        m.b[(st(i, StateKind::CurrentD), 2 * i)] = 1.0 / tau;
        m.b[(st(i, StateKind::CurrentQ), 2 * i + 1)] = 1.0 / tau;
        m.c[(i, st(i, StateKind::CurrentD))] += v_d0;
    }
    if !m.is_finite() {
        return Err(Error::SingularCoupling);
    }
    Ok(m)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Marginal,
    Unstable,
}

impl Verdict {
    pub fn from_abscissa(max_re: f64) -> Self {
        if max_re.abs() <= EPS_STABLE {
            Verdict::Marginal
        } else if max_re < 0.0 {
            Verdict::Stable
        } else {
            Verdict::Unstable
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Stable => "stable",
            Verdict::Marginal => "marginal",
            Verdict::Unstable => "unstable",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug)]
pub struct StabilityAssessment {
    pub gscr: f64,
    pub cgscr: f64,
    pub margin: f64,
    pub modes: ModalDecomposition,
    pub eigenvalues: Vec<Complex64>,
    pub damping_ratios: Vec<f64>,
    pub max_real: f64,
    pub verdict: Verdict,
    pub cgscr_detail: CgscrResult,
}

impl StabilityAssessment {
    /// Least damped eigenvalue with non-negative imaginary part.
    pub fn dominant(&self) -> Complex64 {
        self.eigenvalues
            .iter()
            .copied()
            .filter(|l| l.im >= 0.0)
            .max_by(|a, b| a.re.total_cmp(&b.re))
            .unwrap_or_default()
    }
}

pub fn assess(spec: &NetworkSpec, dev: &GflDeviceParams, att: &GfmAttachment) -> Result<StabilityAssessment> {
    let cg = compute_cgscr(dev, DEFAULT_BRACKET)?;
    assess_reduced(&reduce_spec(spec)?, dev, att, &cg)
}

/// Assessment against a precomputed CgSCR.
pub fn assess_reduced(
    reduced: &KronReducedNetwork,
    dev: &GflDeviceParams,
    att: &GfmAttachment,
    cg: &CgscrResult,
) -> Result<StabilityAssessment> {
    let augmented = attach_gfm(reduced, att)?;
    let modes = compute_modes(&augmented)?;
    let gscr = modes.gscr();
    let eigenvalues = modal_eigenvalues(dev, &modes)?;
    let max_real = spectral_abscissa(&eigenvalues);
    let verdict = Verdict::from_abscissa(max_real);
    let margin = gscr - cg.cgscr;

    if margin.abs() > EPS_STABLE {
        let expected = if margin > 0.0 { Verdict::Stable } else { Verdict::Unstable };
        if verdict != expected {
            return Err(Error::InconsistentVerdict {
                eigen: verdict.as_str().to_string(),
                gscr,
                cgscr: cg.cgscr,
            });
        }
    }

    Ok(StabilityAssessment {
        gscr,
        cgscr: cg.cgscr,
        margin,
        damping_ratios: eigenvalues.iter().map(|l| damping_ratio(*l)).collect(),
        eigenvalues,
        max_real,
        verdict,
        modes,
        cgscr_detail: cg.clone(),
    })
}

/// Smallest uniform ratio at which the directly assembled model stops being
/// unstable, by bisection on the full-model spectral abscissa.
pub fn critical_gamma_direct(
    reduced: &KronReducedNetwork,
    dev: &GflDeviceParams,
    z_local: f64,
    bracket: (f64, f64),
    tol: f64,
) -> Result<f64> {
    let abscissa = |gamma: f64| -> Result<f64> {
        let att = GfmAttachment::uniform(gamma, z_local)?;
        direct_full_model(dev, &attach_gfm(reduced, &att)?)?.spectral_abscissa()
    };
    let (mut lo, mut hi) = bracket;
    let a_lo = abscissa(lo)?;
    let a_hi = abscissa(hi)?;
    if !(a_lo > 0.0 && a_hi < 0.0) {
        return Err(Error::NoSignChange {
            lo,
            hi,
            state: if a_hi >= 0.0 { "unstable" } else { "stable" },
        });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if abscissa(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Column vector helper used by tests and the simulator.
pub fn unit_vector(n: usize, k: usize) -> DVector<f64> {
    let mut v = DVector::zeros(n);
    v[k] = 1.0;
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dev() -> GflDeviceParams {
        GflDeviceParams::calibrated()
    }

    fn closed_form_cgscr(d: &GflDeviceParams) -> f64 {
        let (v, id, iq) = terminal_currents(d);
        (id * d.pll_ki / (d.base_omega() * d.pll_kp) - iq) / v
    }

    #[test]
    fn parses_device_file() {
        let text = r#"
            pll_kp = 0.1
            pll_ki = 50.27
            current_loop_tau_s = 0.002
            p_set_pu = 1.0
            q_set_pu = 0.0
            base_freq_hz = 50.0
        "#;
        assert_eq!(parse_device(text).unwrap(), dev());
        assert!(parse_device("pll_kp = 0.1").is_err());
        let bad = text.replace("pll_kp = 0.1", "pll_kp = -0.1");
        assert!(matches!(parse_device(&bad), Err(Error::MalformedDevice(_))));
    }

    #[test]
    fn stiff_grid_limit() {
        let d = dev();
        let m = build_smib_model(&d, f64::INFINITY).unwrap();
        let eigs = m.model.eigenvalues().unwrap();
        let wb = d.base_omega();
        let fast: Vec<_> = eigs.iter().filter(|l| l.im == 0.0).collect();
        assert_eq!(fast.len(), 2);
        for l in fast {
            assert!((l.re + 1.0 / d.current_loop_tau_s).abs() < 1e-9);
        }
        // s^2 + wb kp s + wb ki = 0
        let disc = (wb * d.pll_kp).powi(2) - 4.0 * wb * d.pll_ki;
        let pll = Complex64::new(-wb * d.pll_kp / 2.0, (-disc).sqrt() / 2.0);
        assert!(eigs.iter().any(|l| (l - pll).norm() < 1e-9));
        assert!(m.model.spectral_abscissa().unwrap() < 0.0);
    }

    #[test]
    fn equilibrium_angle() {
        let op = operating_point(&dev(), 1.0).unwrap();
        // independent: solve E e^{-j th} = v - j X i for (E, th)
        let (vr, vi) = (op.v_d0 + op.x * op.i_q0, -op.x * op.i_d0);
        assert!((op.e_mag - (vr * vr + vi * vi).sqrt()).abs() < 1e-14);
        assert!((op.theta0 - (op.x * op.i_d0 / op.e_mag).asin()).abs() < 1e-12);
        let (deriv, p) = smib_nonlinear(&dev(), &op, &op.state(), &op.input());
        assert!(deriv.iter().all(|d| d.abs() < 1e-12), "{deriv:?}");
        assert!((p - dev().p_set_pu).abs() < 1e-12);
    }

    #[test]
    fn state_matrix_is_continuous_in_scr() {
        for scr in [1.0, 2.0, 5.0] {
            let a0 = build_smib_model(&dev(), scr).unwrap().model.a;
            let mut prev = f64::INFINITY;
            for delta in [1e-2, 1e-4, 1e-6] {
                let a1 = build_smib_model(&dev(), scr + delta).unwrap().model.a;
                let gap = (a1 - &a0).amax();
                assert!(gap < prev);
                prev = gap;
            }
            assert!(prev < 1e-2);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let d = GflDeviceParams {
            q_set_pu: 0.3,
            ..dev()
        };
        for scr in [1.3, 2.0, 4.5] {
            let smib = build_smib_model(&d, scr).unwrap();
            let op = smib.operating_point;
            let x0 = op.state();
            let u0 = op.input();
            let mut fd_a = DMatrix::<f64>::zeros(4, 4);
            let mut fd_c = DMatrix::<f64>::zeros(1, 4);
            for j in 0..4 {
                let step = 1e-6 * x0[j].abs().max(1.0);
                let (mut xp, mut xm) = (x0, x0);
                xp[j] += step;
                xm[j] -= step;
                let (fp, pp) = smib_nonlinear(&d, &op, &xp, &u0);
                let (fm, pm) = smib_nonlinear(&d, &op, &xm, &u0);
                for i in 0..4 {
                    fd_a[(i, j)] = (fp[i] - fm[i]) / (2.0 * step);
                }
                fd_c[(0, j)] = (pp - pm) / (2.0 * step);
            }
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1.0);
            for (x, y) in fd_a.iter().zip(smib.model.a.iter()) {
                assert!(close(*x, *y), "A: fd {x} vs {y} at scr {scr}");
            }
            for (x, y) in fd_c.iter().zip(smib.model.c.iter()) {
                assert!(close(*x, *y), "C: fd {x} vs {y} at scr {scr}");
            }
        }
    }

    #[test]
    fn cgscr_matches_closed_form() {
        let d = dev();
        let res = compute_cgscr(&d, DEFAULT_BRACKET).unwrap();
        assert!((res.cgscr - closed_form_cgscr(&d)).abs() < 1e-7);
        assert!(res.cgscr > 1.5 && res.cgscr < 1.8);
        assert!(res.critical_eigenvalue.re.abs() < 1e-6);
        assert!(res.critical_eigenvalue.im > 0.0);
        assert!(!res.non_monotone);
    }

    #[test]
    fn critical_eigenvector_satisfies_eigen_equation() {
        let d = dev();
        let res = compute_cgscr(&d, DEFAULT_BRACKET).unwrap();
        let a = build_smib_model(&d, res.cgscr).unwrap().model.a;
        let v = &res.critical_eigenvector;
        for i in 0..4 {
            let av: Complex64 = (0..4).map(|j| v[j] * a[(i, j)]).sum();
            assert!((av - v[i] * res.critical_eigenvalue).norm() < 1e-6);
        }
    }

    #[test]
    fn cgscr_reports_missing_sign_change() {
        let err = compute_cgscr(&dev(), (5.0, 10.0)).unwrap_err();
        assert_eq!(
            err.to_string(),
            "device stable over entire bracket; CgSCR outside [5, 10]"
        );
        let err = compute_cgscr(&dev(), (0.6, 1.0)).unwrap_err();
        assert!(err.to_string().starts_with("device unstable over entire bracket"));
    }

    #[test]
    fn direct_model_matches_smib_for_one_farm() {
        let reduced = KronReducedNetwork::new(
            DMatrix::from_element(1, 1, 1.5),
            DVector::from_element(1, 0.75),
            vec!["device".into()],
        )
        .unwrap();
        let d = GflDeviceParams {
            q_set_pu: -0.2,
            ..dev()
        };
        let full = direct_full_model(&d, &reduced).unwrap();
        let smib = build_smib_model(&d, 2.0).unwrap().model;
        for (x, y) in [(&full.a, &smib.a), (&full.b, &smib.b), (&full.c, &smib.c), (&full.d, &smib.d)] {
            assert!((x - y).amax() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn verdict_bands() {
        assert_eq!(Verdict::from_abscissa(-1e-3), Verdict::Stable);
        assert_eq!(Verdict::from_abscissa(5e-7), Verdict::Marginal);
        assert_eq!(Verdict::from_abscissa(1e-3), Verdict::Unstable);
    }

    #[test]
    fn spectral_mismatch_pairs_greedily() {
        let a = vec![Complex64::new(-1.0, 2.0), Complex64::new(-1.0, -2.0)];
        let b = vec![Complex64::new(-1.0, -2.0), Complex64::new(-1.0, 2.0)];
        assert_eq!(spectral_mismatch(&a, &b), 0.0);
        assert!(spectral_mismatch(&a, &b[..1]).is_infinite());
    }
}
