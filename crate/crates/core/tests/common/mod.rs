#![allow(dead_code)]

use std::sync::OnceLock;

use kerr_junction::fluctuations::{evolve_fluctuations, EvolutionSettings, FluctuationRun};
use kerr_junction::hilbert::DensityMatrix;
use kerr_junction::meanfield::{integrate_meanfield, HBAR_MEV_PS};
use kerr_junction::{FockCutoff, MeanFieldTrajectory, Mode, PulseSpec, SystemParams};

pub const T_END: f64 = 40.0;
pub const DT_MF: f64 = 0.0005;
pub const DT_ME: f64 = 0.001;

pub fn params() -> SystemParams {
    SystemParams {
        u: 0.0014,
        j: 0.4,
        delta_l: -0.6,
        delta_r: -0.6,
        kappa: 0.125,
        hbar: HBAR_MEV_PS,
    }
}

pub fn pulses() -> PulseSpec {
    PulseSpec::from_imbalance(6.25, -0.66, 3.0, 1.57).unwrap()
}

pub fn josephson_period() -> f64 {
    std::f64::consts::PI * HBAR_MEV_PS / 0.4
}

pub struct Run {
    pub traj: MeanFieldTrajectory,
    pub run: FluctuationRun,
}

pub fn simulate(p: &SystemParams, n_max: usize, linearized: bool) -> Run {
    let traj = integrate_meanfield(p, &pulses(), 0.0, T_END, DT_MF).unwrap();
    let cutoff = FockCutoff::new(n_max).unwrap();
    let mut settings = EvolutionSettings::new(cutoff, DT_ME);
    settings.linearized = linearized;
    let run = evolve_fluctuations(&DensityMatrix::two_mode_vacuum(cutoff), &traj, p, &settings).unwrap();
    Run { traj, run }
}

/// The full default run at cutoff 12, computed once per test binary.
pub fn default_run() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| simulate(&params(), 12, false))
}

pub fn null_run() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| simulate(&SystemParams { u: 0.0, ..params() }, 12, false))
}

/// Samples where the total intensity reaches `fraction` of its peak.
pub fn bright(run: &FluctuationRun, fraction: f64) -> Vec<bool> {
    let total: Vec<f64> = run
        .moments
        .iter()
        .map(|m| Mode::BOTH.iter().map(|&k| m.mode(k).big_n() + m.mode(k).n).sum())
        .collect();
    let peak = total.iter().copied().fold(0.0, f64::max);
    total.iter().map(|&x| x >= fraction * peak).collect()
}

/// g² from the closed-form truncation, written out term by term.
pub fn truncated_g2(m: &kerr_junction::fluctuations::ModeMoments) -> f64 {
    let big = m.alpha.norm_sqr();
    let num = big * big + 4.0 * big * m.n + 2.0 * m.n * m.n + m.anom.norm_sqr()
        + 2.0 * (m.alpha.conj().powi(2) * m.anom).re;
    num / (big + m.n).powi(2)
}

/// Indices of samples larger than every other unmasked sample within
/// `half` samples on either side.
pub fn local_maxima(y: &[f64], keep: &[bool], half: usize) -> Vec<usize> {
    (0..y.len())
        .filter(|&i| {
            if !keep[i] {
                return false;
            }
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(y.len() - 1);
            if lo + half != i || hi != i + half || !(lo..=hi).all(|j| keep[j]) {
                return false;
            }
            (lo..=hi).all(|j| j == i || y[j] < y[i] || (y[j] == y[i] && j > i))
        })
        .collect()
}
