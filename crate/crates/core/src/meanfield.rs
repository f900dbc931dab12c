//! Coherent (c-number) amplitudes of the two coupled modes.
//!
//! In the frame rotating at the laser frequency,
//!
//! ```text
//! iħ dα_L/dt = [Δ_L − iκ/2 + U|α_L|²] α_L − J α_R + P_L(t)
//! iħ dα_R/dt = [Δ_R − iκ/2 + U|α_R|²] α_R − J α_L + P_R(t)
//! ```
//!
//! with Gaussian pulses `P_k(t) = p_k exp[−(t − t0)²/σ_t²]`. The blueshift is
//! `U|α|²` with no factor ½; rescale `U` when comparing with conventions that
//! carry one. Units: energies in meV, times in ps.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hilbert::{Mode, C64};

/// ħ in meV·ps.
pub const HBAR_MEV_PS: f64 = 0.658_211_956_9;

/// Physical constants of the coupled-mode model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    /// Single-particle Kerr nonlinearity (meV).
    pub u: f64,
    /// Tunnel coupling (meV).
    pub j: f64,
    /// Laser detuning ħ(ω_c − ω_laser) of the left mode (meV).
    pub delta_l: f64,
    /// Laser detuning of the right mode (meV).
    pub delta_r: f64,
    /// Linewidth κ = ħ/τ (meV).
    pub kappa: f64,
    /// ħ (meV·ps).
    #[serde(default = "default_hbar")]
    pub hbar: f64,
}

fn default_hbar() -> f64 {
    HBAR_MEV_PS
}

impl SystemParams {
    pub fn delta(&self, mode: Mode) -> f64 {
        match mode {
            Mode::L => self.delta_l,
            Mode::R => self.delta_r,
        }
    }

    /// Polariton lifetime ħ/κ (ps).
    pub fn lifetime(&self) -> f64 {
        self.hbar / self.kappa
    }

    /// Linear Josephson period πħ/J (ps).
    pub fn josephson_period(&self) -> f64 {
        std::f64::consts::PI * self.hbar / self.j
    }

    /// Sign and finiteness checks. `κ = 0` is accepted here so that lossless
    /// test cases can run; scenario configs additionally require `κ > 0`.
    pub fn validate(&self) -> Result<()> {
        let finite = [self.u, self.j, self.delta_l, self.delta_r, self.kappa, self.hbar];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(invalid("system", "all parameters must be finite"));
        }
        if self.u < 0.0 {
            return Err(invalid("u", "must be >= 0"));
        }
        if self.j < 0.0 {
            return Err(invalid("j", "must be >= 0"));
        }
        if self.kappa < 0.0 {
            return Err(invalid("kappa", "must be >= 0"));
        }
        if self.hbar <= 0.0 {
            return Err(invalid("hbar", "must be > 0"));
        }
        Ok(())
    }

    /// Checks `κ·τ = ħ` within 1e-3 relative.
    pub fn check_lifetime(&self, tau: f64) -> Result<()> {
        let rel = (self.kappa * tau - self.hbar).abs() / self.hbar;
        if rel > 1e-3 {
            return Err(invalid(
                "tau",
                format!("kappa*tau = {} differs from hbar = {}", self.kappa * tau, self.hbar),
            ));
        }
        Ok(())
    }
}

/// Gaussian drive pulses on both modes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSpec {
    /// Peak drive amplitude on the left mode (meV).
    pub p_l: f64,
    /// Peak drive amplitude on the right mode (meV).
    pub p_r: f64,
    /// Pulse centre (ps).
    pub t0: f64,
    /// Width parameter in exp[−(t − t0)²/σ_t²] (ps).
    pub sigma_t: f64,
    /// Phase of the right drive relative to the left one (rad).
    #[serde(default)]
    pub relative_phase: f64,
}

impl PulseSpec {
    /// Pulses with `p_r = p_l (1 − z0)/(1 + z0)`.
    pub fn from_imbalance(p_l: f64, z0: f64, t0: f64, sigma_t: f64) -> Result<Self> {
        if !(-1.0 < z0 && z0 <= 1.0) {
            return Err(invalid("z0", "must lie in (-1, 1]"));
        }
        let spec = Self {
            p_l,
            p_r: p_l * (1.0 - z0) / (1.0 + z0),
            t0,
            sigma_t,
            relative_phase: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Initial imbalance `(p_l − p_r)/(p_l + p_r)`; zero when both vanish.
    pub fn z0(&self) -> f64 {
        let s = self.p_l + self.p_r;
        if s == 0.0 {
            0.0
        } else {
            (self.p_l - self.p_r) / s
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_t > 0.0 && self.sigma_t.is_finite()) {
            return Err(invalid("sigma_t", "must be > 0"));
        }
        if !(self.p_l >= 0.0 && self.p_r >= 0.0) {
            return Err(invalid("p_l/p_r", "drive amplitudes must be >= 0"));
        }
        if !(self.t0.is_finite() && self.relative_phase.is_finite()) {
            return Err(invalid("pulses", "t0 and relative_phase must be finite"));
        }
        Ok(())
    }

    /// No drive at all.
    pub fn none() -> Self {
        Self {
            p_l: 0.0,
            p_r: 0.0,
            t0: 0.0,
            sigma_t: 1.0,
            relative_phase: 0.0,
        }
    }
}

/// `(P_L(t), P_R(t))`.
pub fn drive_amplitude(spec: &PulseSpec, t: f64) -> (C64, C64) {
    let x = (t - spec.t0) / spec.sigma_t;
    let g = (-x * x).exp();
    (
        C64::new(spec.p_l * g, 0.0),
        C64::from_polar(spec.p_r * g, spec.relative_phase),
    )
}

/// Coherent amplitudes of both modes; `|α|²` is the occupation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MeanFieldState {
    pub alpha_l: C64,
    pub alpha_r: C64,
}

impl MeanFieldState {
    pub fn new(alpha_l: C64, alpha_r: C64) -> Self {
        Self { alpha_l, alpha_r }
    }

    pub fn get(&self, mode: Mode) -> C64 {
        match mode {
            Mode::L => self.alpha_l,
            Mode::R => self.alpha_r,
        }
    }

    pub fn intensity(&self, mode: Mode) -> f64 {
        self.get(mode).norm_sqr()
    }

    pub fn total(&self) -> f64 {
        self.alpha_l.norm_sqr() + self.alpha_r.norm_sqr()
    }

    pub fn is_finite(&self) -> bool {
        self.alpha_l.is_finite() && self.alpha_r.is_finite()
    }

    fn axpy(&self, h: f64, d: &MeanFieldState) -> MeanFieldState {
        MeanFieldState {
            alpha_l: self.alpha_l + d.alpha_l * h,
            alpha_r: self.alpha_r + d.alpha_r * h,
        }
    }
}

/// Time derivative of the amplitudes.
pub fn meanfield_rhs(
    state: &MeanFieldState,
    t: f64,
    params: &SystemParams,
    pulses: &PulseSpec,
) -> MeanFieldState {
    let (p_l, p_r) = drive_amplitude(pulses, t);
    let half_loss = C64::new(0.0, -params.kappa / 2.0);
    let (al, ar) = (state.alpha_l, state.alpha_r);
    let rhs_l = (params.delta_l + half_loss + params.u * al.norm_sqr()) * al - params.j * ar + p_l;
    let rhs_r = (params.delta_r + half_loss + params.u * ar.norm_sqr()) * ar - params.j * al + p_r;
    // iħ dα/dt = rhs  →  dα/dt = −i rhs / ħ
    let factor = C64::new(0.0, -1.0 / params.hbar);
    MeanFieldState {
        alpha_l: rhs_l * factor,
        alpha_r: rhs_r * factor,
    }
}

/// Mean-field amplitudes on a uniform grid.
#[derive(Clone, Debug)]
pub struct MeanFieldTrajectory {
    t_start: f64,
    dt: f64,
    states: Vec<MeanFieldState>,
    drives: Vec<(C64, C64)>,
}

impl MeanFieldTrajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.len() - 1)
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t_start + i as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.time(i))
    }

    pub fn states(&self) -> &[MeanFieldState] {
        &self.states
    }

    pub fn drives(&self) -> &[(C64, C64)] {
        &self.drives
    }

    /// Linear interpolation between samples; exact on grid points.
    pub fn at(&self, t: f64) -> MeanFieldState {
        let x = (t - self.t_start) / self.dt;
        let last = self.len() - 1;
        if x <= 0.0 {
            return self.states[0];
        }
        let i = x.floor() as usize;
        if i >= last {
            return self.states[last];
        }
        let f = x - i as f64;
        // snap tiny offsets so that grid points reproduce stored samples exactly
        if f < 1e-9 {
            return self.states[i];
        }
        if f > 1.0 - 1e-9 {
            return self.states[i + 1];
        }
        let (a, b) = (&self.states[i], &self.states[i + 1]);
        MeanFieldState {
            alpha_l: a.alpha_l * (1.0 - f) + b.alpha_l * f,
            alpha_r: a.alpha_r * (1.0 - f) + b.alpha_r * f,
        }
    }

    pub fn intensities(&self, mode: Mode) -> Vec<f64> {
        self.states.iter().map(|s| s.intensity(mode)).collect()
    }

    /// Every `stride`-th sample, keeping the grid uniform.
    pub fn decimate(&self, stride: usize) -> MeanFieldTrajectory {
        let stride = stride.max(1);
        MeanFieldTrajectory {
            t_start: self.t_start,
            dt: self.dt * stride as f64,
            states: self.states.iter().step_by(stride).copied().collect(),
            drives: self.drives.iter().step_by(stride).copied().collect(),
        }
    }
}

/// Number of whole steps of size `dt` in `span`, or an error when `span` is
/// not a multiple of `dt` (relative tolerance 1e-6).
pub fn step_count(span: f64, dt: f64, name: &'static str) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid(name, "step must be > 0"));
    }
    let x = span / dt;
    let n = x.round();
    if n < 1.0 || (x - n).abs() > 1e-6 * n.max(1.0) {
        return Err(invalid(name, format!("span {span} is not a multiple of step {dt}")));
    }
    Ok(n as usize)
}

/// RK4 integration from the vacuum.
pub fn integrate_meanfield(
    params: &SystemParams,
    pulses: &PulseSpec,
    t_start: f64,
    t_end: f64,
    dt: f64,
) -> Result<MeanFieldTrajectory> {
    integrate_meanfield_from(MeanFieldState::default(), params, pulses, t_start, t_end, dt)
}

/// RK4 integration from an arbitrary initial state.
pub fn integrate_meanfield_from(
    initial: MeanFieldState,
    params: &SystemParams,
    pulses: &PulseSpec,
    t_start: f64,
    t_end: f64,
    dt: f64,
) -> Result<MeanFieldTrajectory> {
    params.validate()?;
    pulses.validate()?;
    if !(t_end > t_start) {
        return Err(invalid("t_end", "must exceed t_start"));
    }
    let steps = step_count(t_end - t_start, dt, "dt_mf")?;
    let mut states = Vec::with_capacity(steps + 1);
    let mut drives = Vec::with_capacity(steps + 1);
    let mut y = initial;
    if !y.is_finite() {
        return Err(Error::NonFinite { t: t_start });
    }
    states.push(y);
    drives.push(drive_amplitude(pulses, t_start));
    for n in 0..steps {
        let t = t_start + n as f64 * dt;
        let k1 = meanfield_rhs(&y, t, params, pulses);
        let k2 = meanfield_rhs(&y.axpy(dt / 2.0, &k1), t + dt / 2.0, params, pulses);
        let k3 = meanfield_rhs(&y.axpy(dt / 2.0, &k2), t + dt / 2.0, params, pulses);
        let k4 = meanfield_rhs(&y.axpy(dt, &k3), t + dt, params, pulses);
        y = MeanFieldState {
            alpha_l: y.alpha_l + (k1.alpha_l + 2.0 * k2.alpha_l + 2.0 * k3.alpha_l + k4.alpha_l) * (dt / 6.0),
            alpha_r: y.alpha_r + (k1.alpha_r + 2.0 * k2.alpha_r + 2.0 * k3.alpha_r + k4.alpha_r) * (dt / 6.0),
        };
        let t_next = t_start + (n + 1) as f64 * dt;
        if !y.is_finite() {
            return Err(Error::NonFinite { t: t_next });
        }
        states.push(y);
        drives.push(drive_amplitude(pulses, t_next));
    }
    Ok(MeanFieldTrajectory {
        t_start,
        dt,
        states,
        drives,
    })
}

/// `z = (I_L − I_R)/(I_L + I_R)`; `None` where the total intensity is below
/// 1e-12 of its peak.
pub fn population_imbalance(traj: &MeanFieldTrajectory) -> Vec<Option<f64>> {
    let peak = traj.states.iter().map(|s| s.total()).fold(0.0, f64::max);
    traj.states
        .iter()
        .map(|s| {
            let total = s.total();
            if peak == 0.0 || total < 1e-12 * peak {
                None
            } else {
                Some(((s.intensity(Mode::L) - s.intensity(Mode::R)) / total).clamp(-1.0, 1.0))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn linear(kappa: f64) -> SystemParams {
        SystemParams {
            u: 0.0,
            j: 0.0,
            delta_l: 0.0,
            delta_r: 0.0,
            kappa,
            hbar: HBAR_MEV_PS,
        }
    }

    #[test]
    fn gaussian_drive_shape() {
        let p = PulseSpec {
            p_l: 2.0,
            p_r: 5.0,
            t0: 3.0,
            sigma_t: 1.5,
            relative_phase: 0.0,
        };
        let (l, r) = drive_amplitude(&p, 3.0);
        assert_eq!((l.re, r.re), (2.0, 5.0));
        let (l, r) = drive_amplitude(&p, 4.5);
        assert_abs_diff_eq!(l.re, 2.0 / std::f64::consts::E, epsilon = 1e-14);
        assert_abs_diff_eq!(r.re, 5.0 / std::f64::consts::E, epsilon = 1e-14);
        let (l, r) = drive_amplitude(&p, 1e3);
        assert_eq!((l.norm(), r.norm()), (0.0, 0.0));
    }

    #[test]
    fn imbalance_pulses() {
        let kappa = 0.125;
        let p = PulseSpec::from_imbalance(50.0 * kappa, -0.66, 3.0, 1.57).unwrap();
        assert_abs_diff_eq!(p.z0(), -0.66, epsilon = 1e-14);
        assert_abs_diff_eq!(p.p_r / p.p_l, 1.66 / 0.34, epsilon = 1e-12);
        assert!(PulseSpec::from_imbalance(1.0, -1.0, 0.0, 1.0).is_err());
        assert!(PulseSpec::from_imbalance(1.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn free_decay_matches_closed_form() {
        let params = linear(0.125);
        let init = MeanFieldState::new(C64::new(3.0, 1.0), C64::new(-1.0, 2.0));
        let traj =
            integrate_meanfield_from(init, &params, &PulseSpec::none(), 0.0, 20.0, 0.0005).unwrap();
        let rate = params.kappa / (2.0 * params.hbar);
        for (i, s) in traj.states().iter().enumerate().step_by(997) {
            let t = traj.time(i);
            let f = (-rate * t).exp();
            assert!((s.alpha_l - init.alpha_l * f).norm() <= 1e-10 * init.alpha_l.norm() * f);
            assert!((s.alpha_r - init.alpha_r * f).norm() <= 1e-10 * init.alpha_r.norm() * f);
        }
        // |α|² halves every ħ ln2 / κ
        let half = params.hbar * 2f64.ln() / params.kappa;
        assert_abs_diff_eq!(half, 3.65, epsilon = 0.01);
    }

    #[test]
    fn rk4_order_on_decay() {
        let params = SystemParams {
            delta_l: 0.3,
            ..linear(0.125)
        };
        let init = MeanFieldState::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0));
        let exact = |t: f64| {
            init.alpha_l * (C64::new(-params.kappa / 2.0, -params.delta_l) * (t / params.hbar)).exp()
        };
        let err = |dt: f64| {
            let traj =
                integrate_meanfield_from(init, &params, &PulseSpec::none(), 0.0, 10.0, dt).unwrap();
            (traj.states().last().unwrap().alpha_l - exact(10.0)).norm()
        };
        let (e1, e2) = (err(0.2), err(0.1));
        let order = (e1 / e2).log2();
        assert!(order >= 3.7, "measured order {order}");
    }

    #[test]
    fn lossless_rabi_transfer() {
        let params = SystemParams {
            j: 0.4,
            ..linear(0.0)
        };
        let init = MeanFieldState::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0));
        let period = params.josephson_period();
        assert_abs_diff_eq!(period, 5.170, epsilon = 1e-3);
        let traj =
            integrate_meanfield_from(init, &params, &PulseSpec::none(), 0.0, 100.0, 0.0005).unwrap();
        // |α_L(t)|² = cos²(Jt/ħ)
        for (i, s) in traj.states().iter().enumerate().step_by(1231) {
            let t = traj.time(i);
            let expected = (params.j * t / params.hbar).cos().powi(2);
            assert_abs_diff_eq!(s.intensity(Mode::L), expected, epsilon = 1e-9);
        }
        let n0 = traj.states()[0].total();
        for s in traj.states() {
            assert!((s.total() - n0).abs() <= 1e-9 * n0);
        }
    }

    #[test]
    fn gauge_shift_preserves_moduli() {
        let base = SystemParams {
            u: 0.0014,
            j: 0.4,
            delta_l: -0.6,
            delta_r: -0.6,
            kappa: 0.125,
            hbar: HBAR_MEV_PS,
        };
        let pulses = PulseSpec::from_imbalance(0.5, -0.3, 2.0, 1.0).unwrap();
        let shift = 0.25;
        let shifted = SystemParams {
            delta_l: base.delta_l + shift,
            delta_r: base.delta_r + shift,
            ..base
        };
        let a = integrate_meanfield(&base, &pulses, 0.0, 15.0, 0.0005).unwrap();
        // Integrate the shifted frame with hand-rotated drives.
        let dt = 0.0005;
        let mut y = MeanFieldState::default();
        let rot = |t: f64| C64::from_polar(1.0, -shift * t / shifted.hbar);
        let rhs = |s: &MeanFieldState, t: f64| {
            let (pl, pr) = drive_amplitude(&pulses, t);
            let d = meanfield_rhs(s, t, &shifted, &PulseSpec::none());
            let f = C64::new(0.0, -1.0 / shifted.hbar);
            MeanFieldState::new(d.alpha_l + pl * rot(t) * f, d.alpha_r + pr * rot(t) * f)
        };
        for n in 0..a.len() - 1 {
            let t = n as f64 * dt;
            let k1 = rhs(&y, t);
            let k2 = rhs(&y.axpy(dt / 2.0, &k1), t + dt / 2.0);
            let k3 = rhs(&y.axpy(dt / 2.0, &k2), t + dt / 2.0);
            let k4 = rhs(&y.axpy(dt, &k3), t + dt);
            y = MeanFieldState::new(
                y.alpha_l + (k1.alpha_l + 2.0 * k2.alpha_l + 2.0 * k3.alpha_l + k4.alpha_l) * (dt / 6.0),
                y.alpha_r + (k1.alpha_r + 2.0 * k2.alpha_r + 2.0 * k3.alpha_r + k4.alpha_r) * (dt / 6.0),
            );
            let s = &a.states()[n + 1];
            assert!((y.alpha_l.norm() - s.alpha_l.norm()).abs() < 1e-9 * s.alpha_l.norm().max(1.0));
            assert!((y.alpha_r.norm() - s.alpha_r.norm()).abs() < 1e-9 * s.alpha_r.norm().max(1.0));
        }
    }

    #[test]
    fn imbalance_limits() {
        let params = linear(0.1);
        let init = MeanFieldState::new(C64::new(1.0, 0.0), C64::new(0.0, 1.0));
        let traj =
            integrate_meanfield_from(init, &params, &PulseSpec::none(), 0.0, 1.0, 0.01).unwrap();
        assert!(population_imbalance(&traj)
            .iter()
            .all(|z| z.unwrap().abs() < 1e-12));
        let init = MeanFieldState::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0));
        let traj =
            integrate_meanfield_from(init, &params, &PulseSpec::none(), 0.0, 1.0, 0.01).unwrap();
        assert!(population_imbalance(&traj).iter().all(|z| *z == Some(1.0)));
        let vac = integrate_meanfield(&params, &PulseSpec::none(), 0.0, 1.0, 0.01).unwrap();
        assert!(population_imbalance(&vac).iter().all(Option::is_none));
    }

    #[test]
    fn non_finite_is_reported() {
        let params = SystemParams {
            u: 1.0,
            ..linear(0.1)
        };
        let init = MeanFieldState::new(C64::new(1e3, 0.0), C64::new(0.0, 0.0));
        let err = integrate_meanfield_from(init, &params, &PulseSpec::none(), 0.0, 10.0, 0.5);
        assert!(matches!(err, Err(Error::NonFinite { .. })));
    }

    #[test]
    fn step_count_rejects_misaligned_span() {
        assert_eq!(step_count(1.0, 0.25, "dt").unwrap(), 4);
        assert!(step_count(1.0, 0.3, "dt").is_err());
        assert!(step_count(1.0, 0.0, "dt").is_err());
    }

    #[test]
    fn interpolation_is_exact_on_grid() {
        let params = linear(0.3);
        let init = MeanFieldState::new(C64::new(1.0, 0.5), C64::new(0.2, 0.0));
        let traj =
            integrate_meanfield_from(init, &params, &PulseSpec::none(), 0.0, 1.0, 0.01).unwrap();
        assert_eq!(traj.at(0.37), traj.states()[37]);
        let mid = traj.at(0.375);
        let avg = (traj.states()[37].alpha_l + traj.states()[38].alpha_l) / 2.0;
        assert_abs_diff_eq!((mid.alpha_l - avg).norm(), 0.0, epsilon = 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]
            #[test]
            fn imbalance_bounded(pl in 0.0f64..3.0, pr in 0.0f64..3.0, u in 0.0f64..0.01) {
                let params = SystemParams { u, j: 0.4, delta_l: -0.6, delta_r: -0.6, kappa: 0.125, hbar: HBAR_MEV_PS };
                let pulses = PulseSpec { p_l: pl, p_r: pr, t0: 1.0, sigma_t: 0.8, relative_phase: 0.0 };
                let traj = integrate_meanfield(&params, &pulses, 0.0, 6.0, 0.002).unwrap();
                for z in population_imbalance(&traj).into_iter().flatten() {
                    prop_assert!((-1.0..=1.0).contains(&z));
                }
            }
        }
    }
}
