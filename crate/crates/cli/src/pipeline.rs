//! The default simulation chain: mean field, fluctuations, g² timeline, map.

use kerr_junction::correlations::{equal_time_g2, exact_equal_time_g2, g2_map, CorrelationGrid, MapGrid};
use kerr_junction::fluctuations::{evolve_fluctuations, EvolutionSettings, FluctuationRun};
use kerr_junction::hilbert::DensityMatrix;
use kerr_junction::instrument::snr_mask;
use kerr_junction::meanfield::integrate_meanfield;
use kerr_junction::{Error, MeanFieldTrajectory, Mode, PulseSpec, Result, SystemParams};

use crate::config::ScenarioConfig;

/// Per-sample photon statistics on the output grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Timeline {
    pub t: Vec<f64>,
    /// Mean-field occupation `|α_k|²`, indexed by [`Mode::index`].
    pub big_n: [Vec<f64>; 2],
    /// Fluctuation occupation `⟨δa†δa⟩`.
    pub n: [Vec<f64>; 2],
    /// `N_k + n_k`, the g² denominator.
    pub intensity: [Vec<f64>; 2],
    /// Truncated-moment g²(0); NaN where the intensity vanishes.
    pub g2: [Vec<f64>; 2],
    /// g²(0) from the full fourth-order moment.
    pub g2_exact: [Vec<f64>; 2],
    /// `true` where the total intensity passes the SNR threshold.
    pub mask: Vec<bool>,
}

impl Timeline {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn total_intensity(&self) -> Vec<f64> {
        self.intensity[0].iter().zip(&self.intensity[1]).map(|(a, b)| a + b).collect()
    }

    pub fn output_dt(&self) -> f64 {
        if self.t.len() < 2 {
            0.0
        } else {
            self.t[1] - self.t[0]
        }
    }
}

pub struct Simulation {
    pub params: SystemParams,
    pub pulses: PulseSpec,
    pub traj: MeanFieldTrajectory,
    pub run: FluctuationRun,
    pub timeline: Timeline,
}

/// Runs the full chain with the config's numerics and `params` (which may
/// differ from `cfg.system`, e.g. for the U = 0 null run).
pub fn simulate(cfg: &ScenarioConfig, params: &SystemParams) -> Result<Simulation> {
    simulate_with(cfg, params, cfg.numerics.dt_mf, cfg.numerics.dt_me, cfg.numerics.n_max)
}

pub fn simulate_with(
    cfg: &ScenarioConfig,
    params: &SystemParams,
    dt_mf: f64,
    dt_me: f64,
    n_max: usize,
) -> Result<Simulation> {
    let num = &cfg.numerics;
    let pulses = cfg.pulse_spec()?;
    let traj = integrate_meanfield(params, &pulses, num.t_start, num.t_end, dt_mf)?;
    let cutoff = kerr_junction::FockCutoff::new(n_max)?;
    let mut settings = EvolutionSettings::new(cutoff, dt_me);
    settings.output_dt = num.output_dt;
    settings.checkpoint_dt = Some(num.checkpoint_dt);
    settings.truncation = num.truncation;
    let run = evolve_fluctuations(&DensityMatrix::two_mode_vacuum(cutoff), &traj, params, &settings)?;
    let timeline = build_timeline(&run, cfg)?;
    Ok(Simulation {
        params: *params,
        pulses,
        traj,
        run,
        timeline,
    })
}

fn build_timeline(run: &FluctuationRun, cfg: &ScenarioConfig) -> Result<Timeline> {
    let per_mode = |f: &dyn Fn(&kerr_junction::fluctuations::MomentSet, Mode) -> f64| {
        Mode::BOTH.map(|k| run.moments.iter().map(|m| f(m, k)).collect::<Vec<_>>())
    };
    let big_n = per_mode(&|m, k| m.mode(k).big_n());
    let n = per_mode(&|m, k| m.mode(k).n);
    let intensity = per_mode(&|m, k| m.mode(k).big_n() + m.mode(k).n);
    let g2 = per_mode(&|m, k| equal_time_g2(m, k).unwrap_or(f64::NAN));
    let g2_exact = per_mode(&|m, k| exact_equal_time_g2(m, k).unwrap_or(f64::NAN));
    let total: Vec<f64> = intensity[0].iter().zip(&intensity[1]).map(|(a, b)| a + b).collect();
    let mask = snr_mask(&total, &cfg.instrument)?;
    Ok(Timeline {
        t: run.times(),
        big_n,
        n,
        intensity,
        g2,
        g2_exact,
        mask,
    })
}

/// First and last output time at which `mode`'s intensity reaches
/// `fraction` of its peak.
pub fn map_window(timeline: &Timeline, mode: Mode, fraction: f64) -> Option<(f64, f64, f64)> {
    let inten = &timeline.intensity[mode.index()];
    let peak = inten.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return None;
    }
    let floor = fraction * peak;
    let first = inten.iter().position(|&x| x >= floor)?;
    let last = inten.iter().rposition(|&x| x >= floor)?;
    Some((timeline.t[first], timeline.t[last], floor))
}

/// Two-time map of `mode` over its intensity window. Fails with a domain
/// error if the mode never lights up.
pub fn compute_map(sim: &Simulation, cfg: &ScenarioConfig, mode: Mode) -> Result<CorrelationGrid> {
    let map_cfg = &cfg.scenario.map;
    let Some((lo, hi, floor)) = map_window(&sim.timeline, mode, map_cfg.mask_fraction) else {
        return Err(Error::Domain(format!("mode {} has no intensity", mode.label())));
    };
    let grid = MapGrid::within(&sim.run.checkpoints, lo, hi, map_cfg.points, cfg.numerics.output_dt)?;
    g2_map(&sim.run.checkpoints, &sim.traj, &grid, mode, floor)
}
