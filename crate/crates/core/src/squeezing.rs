//! Squeezing parameters, the displaced-Gaussian g² formula and the effective
//! parametric drive seen by one mode.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fluctuations::MomentSet;
use crate::hilbert::{annihilation, displacement, squeeze, FockCutoff, Mode, StateVector, C64};
use crate::meanfield::SystemParams;

/// Below this |⟨â⟩| the displacement phase is meaningless.
pub const PHASE_EPS_MEAN: f64 = 1e-9;
/// Below this |⟨Δâ⟩| the squeezing phase is meaningless.
pub const PHASE_EPS_ANOM: f64 = 1e-12;
/// |denominator| (meV²) below which the effective amplitude is flagged.
pub const RESONANCE_EPS: f64 = 1e-6;

/// Output of [`extract_squeezing`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SqueezingRecord {
    /// Magnitude, clamped at zero.
    pub r: f64,
    /// Unclamped value of the estimator.
    pub r_raw: f64,
    pub theta: f64,
    pub phi: f64,
    /// cos(θ − 2φ).
    pub cos_term: f64,
    /// φ undefined because |⟨â⟩| is tiny.
    pub phi_undefined: bool,
    /// θ undefined because |⟨Δâ⟩| is tiny.
    pub theta_undefined: bool,
    /// |⟨δâ²⟩| and ⟨δâ†δâ⟩ reported raw.
    pub anom_abs: f64,
    pub n_fluct: f64,
}

impl SqueezingRecord {
    pub fn phase_undefined(&self) -> bool {
        self.phi_undefined || self.theta_undefined
    }
}

/// Squeezing estimate `r = [|⟨Δâ⟩| + |⟨â⟩|² − ⟨â†â⟩]/2` with
/// `⟨Δâ⟩ = ⟨â²⟩ − ⟨â⟩²`, from composite-field moments.
pub fn extract_squeezing(moments: &MomentSet, mode: Mode) -> SqueezingRecord {
    let m = moments.mode(mode);
    let mean = m.mean_a();
    let delta = m.mean_a2() - mean * mean;
    let r_raw = (delta.norm() + mean.norm_sqr() - m.mean_number()) / 2.0;
    let theta = delta.arg();
    let phi = mean.arg();
    SqueezingRecord {
        r: r_raw.max(0.0),
        r_raw,
        theta,
        phi,
        cos_term: (theta - 2.0 * phi).cos().clamp(-1.0, 1.0),
        phi_undefined: mean.norm() < PHASE_EPS_MEAN,
        theta_undefined: delta.norm() < PHASE_EPS_ANOM,
        anom_abs: m.anom.norm(),
        n_fluct: m.n,
    }
}

/// Displaced Gaussian state: displacement `ᾱe^{iφ}`, fluctuation occupation
/// `p = ⟨δa†δa⟩` and anomalous moment `m = ⟨δa²⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianStateParams {
    pub alpha_bar: f64,
    pub phi: f64,
    pub p: f64,
    pub m: C64,
}

impl GaussianStateParams {
    /// Pure squeezed coherent state `D(ᾱe^{iφ}) S(re^{iθ})|0⟩`:
    /// `p = sinh²r`, `m = −cosh r sinh r · e^{iθ}`.
    pub fn pure(alpha_bar: f64, phi: f64, r: f64, theta: f64) -> Self {
        Self {
            alpha_bar,
            phi,
            p: r.sinh().powi(2),
            m: -C64::from_polar(r.cosh() * r.sinh(), theta),
        }
    }
}

/// `g² = 1 + [2ᾱ²p + 2Re(ᾱ²e^{−2iφ}m) + p² + |m|²]/(ᾱ² + p)²`.
pub fn gaussian_g2(s: &GaussianStateParams) -> Result<f64> {
    let a2 = s.alpha_bar * s.alpha_bar;
    let den = a2 + s.p;
    if den <= 0.0 {
        return Err(Error::Domain("gaussian_g2 needs alpha_bar^2 + p > 0".into()));
    }
    let cross = (C64::from_polar(a2, -2.0 * s.phi) * s.m).re;
    Ok(1.0 + (2.0 * a2 * s.p + 2.0 * cross + s.p * s.p + s.m.norm_sqr()) / (den * den))
}

/// `⟨a†²a²⟩/⟨a†a⟩²` on `D(α)S(ξ)|0⟩` built by matrix exponentials.
pub fn fock_g2(alpha: C64, xi: C64, cutoff: FockCutoff) -> Result<f64> {
    let vac = StateVector::vacuum(cutoff.mode_dim());
    let psi = displacement(alpha, cutoff).apply(&squeeze(xi, cutoff).apply(&vac)?)?;
    let amps = psi.amplitudes();
    let (mut norm, mut n1, mut n2) = (0.0, 0.0, 0.0);
    for (n, c) in amps.iter().enumerate() {
        let w = c.norm_sqr();
        let n = n as f64;
        norm += w;
        n1 += n * w;
        n2 += n * (n - 1.0) * w;
    }
    if n1 <= 0.0 {
        return Err(Error::Domain("fock_g2 on the vacuum".into()));
    }
    Ok(n2 * norm / (n1 * n1))
}

/// Moments `(⟨a⟩, ⟨a²⟩, ⟨a†a⟩)` of `D(α)S(ξ)|0⟩` in the truncated space.
pub fn fock_moments(alpha: C64, xi: C64, cutoff: FockCutoff) -> Result<(C64, C64, f64)> {
    let vac = StateVector::vacuum(cutoff.mode_dim());
    let psi = displacement(alpha, cutoff).apply(&squeeze(xi, cutoff).apply(&vac)?)?;
    let a = annihilation(cutoff);
    let a_psi = a.matrix() * psi.amplitudes();
    let a2_psi = a.matrix() * &a_psi;
    let amps = psi.amplitudes();
    let mean = amps.dotc(&a_psi);
    let sq = amps.dotc(&a2_psi);
    let num = a_psi.norm_squared();
    Ok((mean, sq, num))
}

/// Minimizer of [`gaussian_g2`] over pure states at fixed ᾱ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AntibunchingOptimum {
    /// ξ = r e^{iθ} with the displacement phase φ = 0.
    pub xi: C64,
    pub g2_min: f64,
}

/// Grid search over `r ∈ [0, 2]`, `θ − 2φ ∈ [0, 2π)` followed by
/// coordinate refinement.
pub fn optimize_squeezing_for_antibunching(alpha_bar: f64) -> Result<AntibunchingOptimum> {
    if !(alpha_bar > 0.0) {
        return Err(crate::error::invalid("alpha_bar", "must be positive"));
    }
    const R_MAX: f64 = 2.0;
    let tau = std::f64::consts::TAU;
    let f = |r: f64, psi: f64| {
        gaussian_g2(&GaussianStateParams::pure(alpha_bar, 0.0, r, psi)).unwrap_or(f64::INFINITY)
    };
    let (nr, np) = (201, 128);
    let mut best = (0.0, 0.0, f(0.0, 0.0));
    for i in 0..nr {
        let r = R_MAX * i as f64 / (nr - 1) as f64;
        for k in 0..np {
            let psi = tau * k as f64 / np as f64;
            let v = f(r, psi);
            if v < best.2 {
                best = (r, psi, v);
            }
        }
    }
    let (mut hr, mut hp) = (R_MAX / (nr - 1) as f64, tau / np as f64);
    while hr > 1e-13 || hp > 1e-13 {
        let mut moved = false;
        for (dr, dp) in [(hr, 0.0), (-hr, 0.0), (0.0, hp), (0.0, -hp)] {
            let r = (best.0 + dr).clamp(0.0, R_MAX);
            let psi = (best.1 + dp).rem_euclid(tau);
            let v = f(r, psi);
            if v < best.2 {
                best = (r, psi, v);
                moved = true;
            }
        }
        if !moved {
            hr *= 0.5;
            hp *= 0.5;
        }
    }
    Ok(AntibunchingOptimum {
        xi: C64::from_polar(best.0, best.1),
        g2_min: best.2,
    })
}

/// Output of [`effective_parametric_amplitude`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParametricAmplitude {
    pub lambda: C64,
    pub denominator: f64,
    pub near_resonance: bool,
}

/// `λ_k = U[α_k² − J²α_p²/(U²|α_p|⁴ − |Δ_p − iκ/2|²)]` with `p` the partner
/// of `k`.
pub fn effective_parametric_amplitude(
    alpha_l: C64,
    alpha_r: C64,
    params: &SystemParams,
    mode: Mode,
) -> ParametricAmplitude {
    let (own, other) = match mode {
        Mode::L => (alpha_l, alpha_r),
        Mode::R => (alpha_r, alpha_l),
    };
    let u = params.u;
    let dp = params.delta(mode.partner());
    let den = u * u * other.norm_sqr().powi(2) - (dp * dp + params.kappa * params.kappa / 4.0);
    let lambda = u * (own * own - params.j * params.j * other * other / den);
    ParametricAmplitude {
        lambda,
        denominator: den,
        near_resonance: den.abs() < RESONANCE_EPS,
    }
}

/// Output of [`squeezing_from_lambda`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaSqueezing {
    pub r: f64,
    pub theta: f64,
    /// `2|λ| ≥ κ`; `r` is infinite.
    pub saturated: bool,
}

/// `tanh(2r) = 2|λ|/κ`, `θ = arg λ`.
pub fn squeezing_from_lambda(lambda: C64, kappa: f64) -> LambdaSqueezing {
    let x = 2.0 * lambda.norm() / kappa;
    let saturated = x >= 1.0;
    LambdaSqueezing {
        r: if saturated { f64::INFINITY } else { 0.5 * x.atanh() },
        theta: lambda.arg(),
        saturated,
    }
}
