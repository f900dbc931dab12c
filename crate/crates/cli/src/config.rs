//! Scenario configuration: strict TOML, energies in meV, times in ps.

use std::path::{Path, PathBuf};

use kerr_junction::fluctuations::TruncationPolicy;
use kerr_junction::instrument::{InstrumentSpec, Modulation};
use kerr_junction::meanfield::HBAR_MEV_PS;
use kerr_junction::{Error, FockCutoff, Mode, PulseSpec, Result, SystemParams};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub system: SystemParams,
    pub pulses: PulseConfig,
    pub numerics: Numerics,
    #[serde(default)]
    pub instrument: InstrumentSpec,
    #[serde(default)]
    pub scenario: Scenarios,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Drive pulses. The right amplitude is given either directly (`p_r`) or
/// through the initial imbalance `z0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    pub p_l: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z0: Option<f64>,
    pub t0: f64,
    pub sigma_t: f64,
    #[serde(default)]
    pub relative_phase: f64,
}

impl PulseConfig {
    pub fn resolve(&self) -> Result<PulseSpec> {
        let mut spec = match (self.p_r, self.z0) {
            (Some(p_r), None) => PulseSpec {
                p_l: self.p_l,
                p_r,
                t0: self.t0,
                sigma_t: self.sigma_t,
                relative_phase: 0.0,
            },
            (None, Some(z0)) => PulseSpec::from_imbalance(self.p_l, z0, self.t0, self.sigma_t)?,
            _ => return Err(Error::Config("pulses: give exactly one of `p_r` and `z0`".into())),
        };
        spec.relative_phase = self.relative_phase;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    pub dt_mf: f64,
    pub dt_me: f64,
    pub n_max: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub output_dt: f64,
    pub checkpoint_dt: f64,
    #[serde(default)]
    pub truncation: TruncationPolicy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenarios {
    pub josephson: bool,
    pub g2_timeline: bool,
    pub g2_map: bool,
    #[serde(rename = "null_U0")]
    pub null_u0: bool,
    pub gaussian_oracle: bool,
    pub hbt_demo: bool,
    pub converge: bool,
    /// Also write instrument-convolved g² curves.
    pub convolve_g2: bool,
    pub map: MapConfig,
    pub null: NullConfig,
    pub oracle: OracleConfig,
    pub hbt: HbtConfig,
    pub convergence: ConvergenceConfig,
}

impl Default for Scenarios {
    fn default() -> Self {
        Self {
            josephson: true,
            g2_timeline: true,
            g2_map: true,
            null_u0: true,
            gaussian_oracle: true,
            hbt_demo: true,
            converge: false,
            convolve_g2: false,
            map: MapConfig::default(),
            null: NullConfig::default(),
            oracle: OracleConfig::default(),
            hbt: HbtConfig::default(),
            convergence: ConvergenceConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapConfig {
    pub points: usize,
    pub modes: Vec<Mode>,
    /// Cells are masked below this fraction of the mode's peak intensity.
    pub mask_fraction: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            points: 60,
            modes: vec![Mode::L],
            mask_fraction: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NullConfig {
    pub tolerance: f64,
    /// Also compute the U = 0 two-time map on the `map` grid.
    pub map: bool,
}

impl Default for NullConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            map: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub cutoff: usize,
    pub alpha_points: usize,
    pub r_points: usize,
    /// Values of θ − 2φ spread evenly over the circle.
    pub phase_points: usize,
    pub alpha_max: f64,
    pub r_max: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            cutoff: 60,
            alpha_points: 10,
            r_points: 10,
            phase_points: 8,
            alpha_max: 3.0,
            r_max: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HbtConfig {
    pub n_pulses: usize,
    pub mean_photons_per_pulse: f64,
    pub bin_width: f64,
    pub modulation: Modulation,
    /// Mode whose simulated intensity drives the synthesis.
    pub source: Mode,
    pub write_events: bool,
}

impl Default for HbtConfig {
    fn default() -> Self {
        Self {
            n_pulses: 200_000,
            mean_photons_per_pulse: 0.5,
            bin_width: 2.0,
            modulation: Modulation::None,
            source: Mode::L,
            write_events: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    pub meanfield_tol: f64,
    pub g2_tol: f64,
    pub extra_levels: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            meanfield_tol: 1e-8,
            g2_tol: 1e-3,
            extra_levels: 4,
        }
    }
}

/// Methods parameters with the module defaults for everything else.
pub fn default_config() -> ScenarioConfig {
    let kappa = 0.125;
    ScenarioConfig {
        seed: 42,
        output_dir: default_output_dir(),
        system: SystemParams {
            u: 0.0014,
            j: 0.4,
            delta_l: -0.6,
            delta_r: -0.6,
            kappa,
            hbar: HBAR_MEV_PS,
        },
        pulses: PulseConfig {
            p_l: 50.0 * kappa,
            p_r: None,
            z0: Some(-0.66),
            t0: 3.0,
            sigma_t: 1.57,
            relative_phase: 0.0,
        },
        numerics: Numerics {
            dt_mf: 0.0005,
            dt_me: 0.001,
            n_max: 12,
            t_start: 0.0,
            t_end: 40.0,
            output_dt: 0.05,
            checkpoint_dt: 0.25,
            truncation: TruncationPolicy::Warn,
        },
        instrument: InstrumentSpec::default(),
        scenario: Scenarios::default(),
    }
}

const UNITS_HEADER: &str = "# Units: energies in meV, times in ps.\n";

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        let body = toml::to_string(self).expect("config is always representable");
        format!("{UNITS_HEADER}{body}")
    }

    pub fn pulse_spec(&self) -> Result<PulseSpec> {
        self.pulses.resolve()
    }

    pub fn cutoff(&self) -> Result<FockCutoff> {
        FockCutoff::new(self.numerics.n_max)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.pulse_spec()?;
        self.instrument.validate()?;
        self.cutoff()?;
        let n = &self.numerics;
        for (name, v) in [
            ("numerics.dt_mf", n.dt_mf),
            ("numerics.dt_me", n.dt_me),
            ("numerics.output_dt", n.output_dt),
            ("numerics.checkpoint_dt", n.checkpoint_dt),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(n.t_end > n.t_start) || !n.t_start.is_finite() || !n.t_end.is_finite() {
            return Err(Error::Config("numerics.t_end must exceed t_start".into()));
        }
        let multiple = |a: f64, b: f64| ((a / b).round() * b - a).abs() < 1e-9 * a.max(1.0) && a >= b;
        if !multiple(n.dt_me, 2.0 * n.dt_mf) {
            return Err(Error::Config("numerics.dt_me must be an even multiple of dt_mf".into()));
        }
        if !multiple(n.output_dt, n.dt_me) || !multiple(n.checkpoint_dt, n.dt_me) {
            return Err(Error::Config(
                "numerics.output_dt and checkpoint_dt must be multiples of dt_me".into(),
            ));
        }
        let s = &self.scenario;
        if s.map.points < 2 {
            return Err(Error::Config("scenario.map.points must be at least 2".into()));
        }
        if !(s.map.mask_fraction > 0.0 && s.map.mask_fraction < 1.0) {
            return Err(Error::Config("scenario.map.mask_fraction must lie in (0, 1)".into()));
        }
        if !(s.null.tolerance > 0.0) {
            return Err(Error::Config("scenario.null.tolerance must be positive".into()));
        }
        if s.oracle.cutoff < 1 || s.oracle.alpha_points == 0 || s.oracle.r_points == 0 || s.oracle.phase_points == 0 {
            return Err(Error::Config("scenario.oracle needs a cutoff and grid points".into()));
        }
        if s.hbt.n_pulses == 0 || !(s.hbt.mean_photons_per_pulse > 0.0) || !(s.hbt.bin_width > 0.0) {
            return Err(Error::Config(
                "scenario.hbt: n_pulses, mean_photons_per_pulse and bin_width must be positive".into(),
            ));
        }
        if s.hbt.bin_width < n.output_dt {
            return Err(Error::Config("scenario.hbt.bin_width must be at least output_dt".into()));
        }
        Ok(())
    }
}
