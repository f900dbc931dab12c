//! Named experiments, their data files and the run manifest.

use std::collections::BTreeMap;
use std::path::Path;

use kerr_junction::correlations::CorrelationGrid;
use kerr_junction::instrument::{
    gaussian_convolve, hbt_g2_estimator, snr_mask, synthesize_photon_events, HbtEstimate, Modulation,
};
use kerr_junction::meanfield::{integrate_meanfield, population_imbalance};
use kerr_junction::squeezing::{
    effective_parametric_amplitude, extract_squeezing, fock_g2, gaussian_g2, squeezing_from_lambda,
    GaussianStateParams,
};
use kerr_junction::{Error, FockCutoff, Mode, Result, SystemParams, C64};
use serde_json::{json, Value};

use crate::analysis::{
    crossing_period, fit_lattice, local_maxima, map_peaks, masked_correlation, remove_running_mean,
};
use crate::config::ScenarioConfig;
use crate::output::{unix_now, Cell, Manifest, OutputDir, ScenarioRecord, Status, Table};
use crate::pipeline::{compute_map, simulate, simulate_with, Simulation, Timeline};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ScenarioName {
    Josephson,
    G2Timeline,
    G2Map,
    #[value(name = "null_U0")]
    NullU0,
    GaussianOracle,
    HbtDemo,
    Converge,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 7] = [
        ScenarioName::Josephson,
        ScenarioName::G2Timeline,
        ScenarioName::G2Map,
        ScenarioName::NullU0,
        ScenarioName::GaussianOracle,
        ScenarioName::HbtDemo,
        ScenarioName::Converge,
    ];

    pub fn key(self) -> &'static str {
        match self {
            ScenarioName::Josephson => "josephson",
            ScenarioName::G2Timeline => "g2_timeline",
            ScenarioName::G2Map => "g2_map",
            ScenarioName::NullU0 => "null_U0",
            ScenarioName::GaussianOracle => "gaussian_oracle",
            ScenarioName::HbtDemo => "hbt_demo",
            ScenarioName::Converge => "converge",
        }
    }

    fn enabled(self, cfg: &ScenarioConfig) -> bool {
        let s = &cfg.scenario;
        match self {
            ScenarioName::Josephson => s.josephson,
            ScenarioName::G2Timeline => s.g2_timeline,
            ScenarioName::G2Map => s.g2_map,
            ScenarioName::NullU0 => s.null_u0,
            ScenarioName::GaussianOracle => s.gaussian_oracle,
            ScenarioName::HbtDemo => s.hbt_demo,
            ScenarioName::Converge => s.converge,
        }
    }

    fn needs_default_run(self) -> bool {
        matches!(
            self,
            ScenarioName::G2Timeline | ScenarioName::G2Map | ScenarioName::HbtDemo | ScenarioName::Converge
        )
    }
}

/// Outcome of [`run`]. A numerical error aborts the remaining scenarios and
/// is reported here after the partial manifest has been written.
pub struct RunReport {
    pub records: Vec<ScenarioRecord>,
    pub error: Option<Error>,
}

impl RunReport {
    pub fn failed(&self) -> bool {
        self.error.is_some() || self.records.iter().any(|r| r.status == Status::Fail)
    }
}

/// Runs the selected scenarios (all enabled ones when `only` is empty) and
/// writes their data files and `manifest.json` into `out`.
pub fn run(cfg: &ScenarioConfig, only: &[ScenarioName], out: &Path) -> Result<RunReport> {
    let started = unix_now();
    let mut dir = OutputDir::create(out)?;
    let selected: Vec<ScenarioName> = if only.is_empty() {
        ScenarioName::ALL.into_iter().filter(|s| s.enabled(cfg)).collect()
    } else {
        only.to_vec()
    };
    dir.write("config.toml", &cfg.to_toml())?;

    let mut records = Vec::new();
    let mut default_run: Option<Simulation> = None;
    let mut error = None;
    for name in selected {
        log::info!("scenario {}", name.key());
        let result = (|| {
            if name.needs_default_run() && default_run.is_none() {
                default_run = Some(simulate(cfg, &cfg.system)?);
            }
            let sim = default_run.as_ref();
            match name {
                ScenarioName::Josephson => josephson(cfg, &mut dir),
                ScenarioName::G2Timeline => g2_timeline(cfg, sim.expect("default run"), &mut dir),
                ScenarioName::G2Map => g2_map(cfg, sim.expect("default run"), &mut dir),
                ScenarioName::NullU0 => null_u0(cfg, &mut dir),
                ScenarioName::GaussianOracle => gaussian_oracle(cfg, &mut dir),
                ScenarioName::HbtDemo => hbt_demo(cfg, sim.expect("default run"), &mut dir),
                ScenarioName::Converge => converge(cfg, sim.expect("default run"), &mut dir),
            }
        })();
        match result {
            Ok(rec) => {
                log::info!("scenario {}: {:?}", rec.name, rec.status);
                records.push(rec);
            }
            Err(Error::Io(e)) => return Err(Error::Io(e)),
            Err(e) => {
                records.push(ScenarioRecord {
                    name: name.key().to_string(),
                    status: Status::Fail,
                    metrics: BTreeMap::from([("error".to_string(), json!(e.to_string()))]),
                    files: Vec::new(),
                });
                error = Some(e);
                break;
            }
        }
    }

    finish(cfg, &dir, started, &records)?;
    Ok(RunReport { records, error })
}

fn record(name: ScenarioName, status: Status, metrics: Vec<(&str, Value)>, files: Vec<String>) -> ScenarioRecord {
    record_named(name.key(), status, metrics, files)
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn josephson(cfg: &ScenarioConfig, dir: &mut OutputDir) -> Result<ScenarioRecord> {
    let num = &cfg.numerics;
    let pulses = cfg.pulse_spec()?;
    let traj = integrate_meanfield(&cfg.system, &pulses, num.t_start, num.t_end, num.dt_mf)?;
    let stride = (num.output_dt / num.dt_mf).round() as usize;
    let traj = traj.decimate(stride.max(1));
    let t: Vec<f64> = traj.times().collect();
    let il = traj.intensities(Mode::L);
    let ir = traj.intensities(Mode::R);
    let z = population_imbalance(&traj);
    let dt = traj.dt();
    let il_c = gaussian_convolve(&il, dt, &cfg.instrument)?;
    let ir_c = gaussian_convolve(&ir, dt, &cfg.instrument)?;
    let total: Vec<f64> = il.iter().zip(&ir).map(|(a, b)| a + b).collect();
    let mask = snr_mask(&total, &cfg.instrument)?;
    let z_c: Vec<f64> = il_c
        .iter()
        .zip(&ir_c)
        .map(|(a, b)| if a + b > 0.0 { (a - b) / (a + b) } else { f64::NAN })
        .collect();

    let mut table = Table::new(&[
        "t_ps",
        "re_alpha_L",
        "im_alpha_L",
        "re_alpha_R",
        "im_alpha_R",
        "I_L",
        "I_R",
        "z",
        "I_L_conv",
        "I_R_conv",
        "z_conv",
        "unmasked",
    ])
    .meta("fwhm_ps", cfg.instrument.fwhm)
    .meta("z_conv", "imbalance of the convolved intensities");
    for (i, st) in traj.states().iter().enumerate() {
        table.push(vec![
            t[i].into(),
            st.alpha_l.re.into(),
            st.alpha_l.im.into(),
            st.alpha_r.re.into(),
            st.alpha_r.im.into(),
            il[i].into(),
            ir[i].into(),
            z[i].unwrap_or(f64::NAN).into(),
            il_c[i].into(),
            ir_c[i].into(),
            z_c[i].into(),
            mask[i].into(),
        ]);
    }
    let file = dir.write_table("josephson.csv", &table)?;

    let (zt, zv): (Vec<f64>, Vec<f64>) = (0..t.len())
        .filter(|&i| mask[i] && z[i].is_some())
        .map(|i| (t[i], z[i].unwrap_or(0.0)))
        .unzip();
    let zc: Vec<f64> = (0..t.len()).filter(|&i| mask[i] && z[i].is_some()).map(|i| z_c[i]).collect();
    let contrast = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len().max(1) as f64;
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len().max(1) as f64).sqrt()
    };
    let period = crossing_period(&zt, &zv);
    Ok(record(
        ScenarioName::Josephson,
        Status::Done,
        vec![
            ("z_period_ps", period.map(finite_or_null).unwrap_or(Value::Null)),
            ("josephson_period_ps", json!(cfg.system.josephson_period())),
            ("z_rms", json!(contrast(&zv))),
            ("z_conv_rms", json!(contrast(&zc))),
        ],
        vec![file],
    ))
}

fn timeline_table(sim: &Simulation, cfg: &ScenarioConfig) -> Result<Table> {
    let tl = &sim.timeline;
    let mut cols = vec!["t_ps", "g2_L", "g2_R", "g2_exact_L", "g2_exact_R", "unmasked"];
    let conv = if cfg.scenario.convolve_g2 {
        cols.extend(["g2_L_conv", "g2_R_conv"]);
        let dt = tl.output_dt();
        let c = |k: usize| {
            let filled: Vec<f64> = tl.g2[k].iter().map(|v| if v.is_finite() { *v } else { 1.0 }).collect();
            gaussian_convolve(&filled, dt, &cfg.instrument)
        };
        Some([c(0)?, c(1)?])
    } else {
        None
    };
    let mut table = Table::new(&cols)
        .meta("n_max", cfg.numerics.n_max)
        .meta("U_meV", sim.params.u)
        .meta("unmasked", format!("N_L+n_L+N_R+n_R >= {} of peak", cfg.instrument.snr_threshold));
    if conv.is_some() {
        table = table.meta("g2_conv", "non-finite samples replaced by 1 before convolution");
    }
    for i in 0..tl.len() {
        let mut row: Vec<Cell> = vec![
            tl.t[i].into(),
            tl.g2[0][i].into(),
            tl.g2[1][i].into(),
            tl.g2_exact[0][i].into(),
            tl.g2_exact[1][i].into(),
            tl.mask[i].into(),
        ];
        if let Some(c) = &conv {
            row.push(c[0][i].into());
            row.push(c[1][i].into());
        }
        table.push(row);
    }
    Ok(table)
}

fn moments_table(sim: &Simulation, cfg: &ScenarioConfig) -> Table {
    let diag = &sim.run.diagnostics;
    let mut table = Table::new(&[
        "t_ps", "N_L", "n_L", "re_anom_L", "im_anom_L", "N_R", "n_R", "re_anom_R", "im_anom_R",
    ])
    .meta("n_max", cfg.numerics.n_max)
    .meta("max_top_population", diag.max_top_population)
    .meta(
        "truncation_exceeded_at_ps",
        diag.truncation_exceeded_at.map_or("never".to_string(), |t| t.to_string()),
    );
    for m in &sim.run.moments {
        let (l, r) = (m.mode(Mode::L), m.mode(Mode::R));
        table.push(vec![
            m.t.into(),
            l.big_n().into(),
            l.n.into(),
            l.anom.re.into(),
            l.anom.im.into(),
            r.big_n().into(),
            r.n.into(),
            r.anom.re.into(),
            r.anom.im.into(),
        ]);
    }
    table
}

fn squeezing_table(sim: &Simulation) -> Table {
    let mut cols = vec!["t_ps"];
    for k in ["L", "R"] {
        cols.extend(match k {
            "L" => [
                "r_L", "theta_L", "phi_L", "cos_term_L", "abs_lambda_L", "r_lambda_L", "flags_L",
            ],
            _ => [
                "r_R", "theta_R", "phi_R", "cos_term_R", "abs_lambda_R", "r_lambda_R", "flags_R",
            ],
        });
    }
    let mut table = Table::new(&cols)
        .meta("r", "moment estimator from the composite field")
        .meta("r_lambda", "tanh(2r) = 2|lambda_eff|/kappa, inf when saturated")
        .meta("flags", "p: phi undefined, t: theta undefined, s: lambda saturated, n: near resonance");
    for m in &sim.run.moments {
        let mf = sim.traj.at(m.t);
        let mut row: Vec<Cell> = vec![m.t.into()];
        for mode in Mode::BOTH {
            let sq = extract_squeezing(m, mode);
            let lam = effective_parametric_amplitude(mf.alpha_l, mf.alpha_r, &sim.params, mode);
            let from_lam = squeezing_from_lambda(lam.lambda, sim.params.kappa);
            let mut flags = String::new();
            for (on, c) in [
                (sq.phi_undefined, 'p'),
                (sq.theta_undefined, 't'),
                (from_lam.saturated, 's'),
                (lam.near_resonance, 'n'),
            ] {
                if on {
                    flags.push(c);
                }
            }
            row.extend([
                sq.r.into(),
                sq.theta.into(),
                sq.phi.into(),
                sq.cos_term.into(),
                lam.lambda.norm().into(),
                from_lam.r.into(),
                Cell::S(flags),
            ]);
        }
        table.push(row);
    }
    table
}

/// Local maxima of g²_L and the L/R counterphase correlation over the
/// unmasked window.
pub struct TimelineStructure {
    /// `(t, g²_L)` at the local maxima of g²_L.
    pub maxima: Vec<(f64, f64)>,
    /// Zero-lag correlation of `g²_L − 1` and `g²_R − 1`.
    pub correlation: Option<f64>,
    /// The same after removing a running mean over one Josephson period.
    pub detrended_correlation: Option<f64>,
}

pub fn timeline_structure(tl: &Timeline, josephson_period: f64) -> TimelineStructure {
    let half = josephson_period / 2.0;
    let maxima = local_maxima(&tl.t, &tl.g2[0], &tl.mask, half);
    let x: Vec<f64> = tl.g2[0].iter().map(|g| g - 1.0).collect();
    let y: Vec<f64> = tl.g2[1].iter().map(|g| g - 1.0).collect();
    let dx = remove_running_mean(&tl.t, &x, &tl.mask, half);
    let dy = remove_running_mean(&tl.t, &y, &tl.mask, half);
    TimelineStructure {
        maxima,
        correlation: masked_correlation(&x, &y, &tl.mask),
        detrended_correlation: masked_correlation(&dx, &dy, &tl.mask),
    }
}

fn hygiene(sim: &Simulation) -> Vec<(&'static str, Value)> {
    let d = &sim.run.diagnostics;
    vec![
        ("max_trace_error", json!(d.max_trace_error)),
        ("max_hermiticity_error", json!(d.max_hermiticity_error)),
        ("min_eigenvalue", json!(d.min_eigenvalue)),
        ("max_top_population", json!(d.max_top_population)),
        ("truncation_exceeded_at_ps", json!(d.truncation_exceeded_at)),
        ("max_mean_fluct_ratio", json!(d.max_mean_fluct_ratio)),
        ("max_fluct_fraction", json!(d.max_fluct_fraction)),
    ]
}

fn g2_timeline(cfg: &ScenarioConfig, sim: &Simulation, dir: &mut OutputDir) -> Result<ScenarioRecord> {
    let files = vec![
        dir.write_table("g2_timeline.csv", &timeline_table(sim, cfg)?)?,
        dir.write_table("moments.csv", &moments_table(sim, cfg))?,
        dir.write_table("squeezing.csv", &squeezing_table(sim))?,
    ];
    let st = timeline_structure(&sim.timeline, sim.params.josephson_period());
    let nondecreasing = st.maxima.windows(2).all(|w| w[1].1 >= w[0].1);
    let mut metrics = hygiene(sim);
    metrics.extend([
        ("g2_L_maxima", json!(st.maxima)),
        ("g2_L_maxima_nondecreasing", json!(nondecreasing)),
        ("counterphase_correlation", json!(st.correlation)),
        ("counterphase_correlation_detrended", json!(st.detrended_correlation)),
    ]);
    Ok(record(ScenarioName::G2Timeline, Status::Done, metrics, files))
}

fn map_table(map: &CorrelationGrid) -> Table {
    let mut table = Table::new(&["t1_ps", "t2_ps", "g2", "mask"])
        .meta("mode", map.mode.label())
        .meta("mask", "1 where N_k + n_k is below the floor at either time");
    for i in 0..map.len() {
        for j in 0..map.len() {
            table.push(vec![
                map.times[i].into(),
                map.times[j].into(),
                map.get(i, j).into(),
                map.masked(i, j).into(),
            ]);
        }
    }
    table
}

/// Largest `|map(t,t) − g²(0)(t)|` against the timeline at the same times.
pub fn diagonal_consistency(map: &CorrelationGrid, tl: &Timeline) -> f64 {
    let k = map.mode.index();
    map.times
        .iter()
        .zip(map.diagonal())
        .map(|(t, d)| {
            let i = tl.t.iter().position(|x| (x - t).abs() < 1e-9).expect("map time on the output grid");
            let e = tl.g2[k][i];
            if d.is_nan() && e.is_nan() {
                0.0
            } else {
                (d - e).abs()
            }
        })
        .fold(0.0, f64::max)
}

fn g2_map(cfg: &ScenarioConfig, sim: &Simulation, dir: &mut OutputDir) -> Result<ScenarioRecord> {
    let mut files = Vec::new();
    let mut metrics = Vec::new();
    for &mode in &cfg.scenario.map.modes {
        let map = compute_map(sim, cfg, mode)?;
        let tag = mode.label();
        files.push(dir.write_table(&format!("g2_map_{tag}.csv"), &map_table(&map))?);
        let peaks = map_peaks(&map);
        let cell = map.times[1] - map.times[0];
        let mut pt = Table::new(&["t1_ps", "t2_ps", "g2"]).meta("mode", tag);
        for p in &peaks {
            pt.push(vec![p.0.into(), p.1.into(), p.2.into()]);
        }
        files.push(dir.write_table(&format!("g2_map_{tag}_peaks.csv"), &pt)?);
        let fit = fit_lattice(&peaks, cell / 2.0);
        metrics.push((
            tag.to_string(),
            json!({
                "window_ps": [map.times[0], map.times[map.len() - 1]],
                "cell_ps": cell,
                "peaks": peaks.len(),
                "lattice_pitch_ps": fit.map(|f| [f.t1.pitch, f.t2.pitch]),
                "lattice_max_residual_ps": fit.map(|f| f.t1.max_residual.max(f.t2.max_residual)),
                "diagonal_consistency": diagonal_consistency(&map, &sim.timeline),
            }),
        ));
    }
    Ok(ScenarioRecord {
        name: ScenarioName::G2Map.key().to_string(),
        status: Status::Done,
        metrics: metrics.into_iter().collect(),
        files,
    })
}

/// Largest `|g²(0) − 1|` over unmasked timeline samples (both modes).
pub fn null_deviation(tl: &Timeline) -> f64 {
    (0..tl.len())
        .filter(|&i| tl.mask[i])
        .flat_map(|i| [tl.g2[0][i], tl.g2[1][i]])
        .map(|g| (g - 1.0).abs())
        .fold(0.0, f64::max)
}

fn null_u0(cfg: &ScenarioConfig, dir: &mut OutputDir) -> Result<ScenarioRecord> {
    let params = SystemParams { u: 0.0, ..cfg.system };
    let sim = simulate(cfg, &params)?;
    let tol = cfg.scenario.null.tolerance;
    let mut files = vec![dir.write_table("null_U0_timeline.csv", &timeline_table(&sim, cfg)?)?];
    let timeline_dev = null_deviation(&sim.timeline);
    let mut map_dev = None;
    if cfg.scenario.null.map {
        let map = compute_map(&sim, cfg, Mode::L)?;
        files.push(dir.write_table("null_U0_map_L.csv", &map_table(&map))?);
        map_dev = Some(map.g2.iter().map(|g| (g - 1.0).abs()).fold(0.0, f64::max));
    }
    let worst = timeline_dev.max(map_dev.unwrap_or(0.0));
    let status = if worst < tol { Status::Pass } else { Status::Fail };
    Ok(record(
        ScenarioName::NullU0,
        status,
        vec![
            ("max_abs_g2_minus_1_timeline", json!(timeline_dev)),
            ("max_abs_g2_minus_1_map", json!(map_dev)),
            ("tolerance", json!(tol)),
        ],
        files,
    ))
}

/// One point of the closed-form versus Fock comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OraclePoint {
    pub alpha_bar: f64,
    pub r: f64,
    pub theta: f64,
    pub closed_form: f64,
    pub fock: f64,
}

impl OraclePoint {
    pub fn rel_err(&self) -> f64 {
        ((self.closed_form - self.fock) / self.fock).abs()
    }
}

/// `alpha_points × r_points × phase_points` grid with ᾱ ∈ (0, alpha_max],
/// r ∈ [0, r_max], φ = 0 and θ evenly spaced on the circle.
pub fn oracle_sweep(cfg: &crate::config::OracleConfig) -> Result<Vec<OraclePoint>> {
    let cutoff = FockCutoff::new(cfg.cutoff)?;
    let mut points = Vec::with_capacity(cfg.alpha_points * cfg.r_points * cfg.phase_points);
    for i in 0..cfg.alpha_points {
        let alpha_bar = cfg.alpha_max * (i + 1) as f64 / cfg.alpha_points as f64;
        for j in 0..cfg.r_points {
            let r = if cfg.r_points > 1 {
                cfg.r_max * j as f64 / (cfg.r_points - 1) as f64
            } else {
                cfg.r_max
            };
            for k in 0..cfg.phase_points {
                let theta = std::f64::consts::TAU * k as f64 / cfg.phase_points as f64;
                let closed_form = gaussian_g2(&GaussianStateParams::pure(alpha_bar, 0.0, r, theta))?;
                let fock = fock_g2(C64::new(alpha_bar, 0.0), C64::from_polar(r, theta), cutoff)?;
                points.push(OraclePoint {
                    alpha_bar,
                    r,
                    theta,
                    closed_form,
                    fock,
                });
            }
        }
    }
    Ok(points)
}

fn gaussian_oracle(cfg: &ScenarioConfig, dir: &mut OutputDir) -> Result<ScenarioRecord> {
    let oc = &cfg.scenario.oracle;
    let points = oracle_sweep(oc)?;
    let mut table = Table::new(&["alpha_bar", "r", "theta", "g2_closed_form", "g2_fock", "rel_err"])
        .meta("fock_cutoff", oc.cutoff)
        .meta("state", "D(alpha_bar) S(r e^{i theta}) |0>");
    for p in &points {
        table.push(vec![
            p.alpha_bar.into(),
            p.r.into(),
            p.theta.into(),
            p.closed_form.into(),
            p.fock.into(),
            p.rel_err().into(),
        ]);
    }
    let file = dir.write_table("gaussian_oracle.csv", &table)?;
    let worst = points.iter().map(OraclePoint::rel_err).fold(0.0, f64::max);
    Ok(record(
        ScenarioName::GaussianOracle,
        Status::Done,
        vec![("points", json!(points.len())), ("max_rel_err", json!(worst))],
        vec![file],
    ))
}

/// Bins whose mean total count reaches `threshold` of the busiest bin.
pub fn hbt_bin_mask(est: &HbtEstimate, threshold: f64) -> Vec<bool> {
    let tot: Vec<f64> = est.mean_a.iter().zip(&est.mean_b).map(|(a, b)| a + b).collect();
    let peak = tot.iter().copied().fold(0.0, f64::max);
    tot.iter().map(|&x| peak > 0.0 && x >= threshold * peak).collect()
}

/// Largest `|ĝ² − expected|/σ` over unmasked, non-empty cells.
pub fn hbt_worst_z(est: &HbtEstimate, mask: &[bool], expected: impl Fn(usize, usize) -> f64) -> f64 {
    let nb = est.bins();
    let mut worst: f64 = 0.0;
    for a in 0..nb {
        for b in 0..nb {
            let k = a * nb + b;
            if !(mask[a] && mask[b]) || est.empty[k] {
                continue;
            }
            let (g, se) = est.get(a, b);
            worst = worst.max((g - expected(a, b)).abs() / se);
        }
    }
    worst
}

fn hbt_demo(cfg: &ScenarioConfig, sim: &Simulation, dir: &mut OutputDir) -> Result<ScenarioRecord> {
    let h = &cfg.scenario.hbt;
    let tl = &sim.timeline;
    let events = synthesize_photon_events(
        &tl.intensity[h.source.index()],
        tl.t[0],
        tl.output_dt(),
        h.mean_photons_per_pulse,
        h.n_pulses,
        cfg.seed,
        h.modulation,
    )?;
    let mut files = Vec::new();
    if h.write_events {
        files.push(dir.write("hbt_events.csv", &events.to_csv())?);
    }
    let est = hbt_g2_estimator(&events, h.bin_width)?;
    let mask = hbt_bin_mask(&est, cfg.instrument.snr_threshold);
    let nb = est.bins();
    let mut table = Table::new(&["b1_ps", "b2_ps", "g2_hat", "stderr", "flags"])
        .meta("n_pulses", h.n_pulses)
        .meta("seed", cfg.seed)
        .meta("source_mode", h.source.label())
        .meta("modulation", format!("{:?}", h.modulation).to_lowercase());
    for a in 0..nb {
        for b in 0..nb {
            let k = a * nb + b;
            let flag = if est.empty[k] {
                "empty"
            } else if !(mask[a] && mask[b]) {
                "masked"
            } else {
                "ok"
            };
            table.push(vec![
                est.edges[a].into(),
                est.edges[b].into(),
                est.g2[k].into(),
                est.stderr[k].into(),
                flag.into(),
            ]);
        }
    }
    files.push(dir.write_table("hbt_g2.csv", &table)?);
    let z = match h.modulation {
        Modulation::None => hbt_worst_z(&est, &mask, |_, _| 1.0),
        Modulation::Exponential => hbt_worst_z(&est, &mask, |a, b| if a == b { 2.0 } else { f64::NAN }),
    };
    Ok(record(
        ScenarioName::HbtDemo,
        Status::Done,
        vec![
            ("events", json!(events.total_events())),
            ("bins", json!(nb)),
            ("max_abs_z_vs_reference", finite_or_null(z)),
        ],
        files,
    ))
}

/// `max |a − b| / max |b|` over paired samples.
fn sup_relative(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// `max |a − b| / |b|` over samples where `mask` holds and both are finite.
fn pointwise_relative(a: &[f64], b: &[f64], mask: &[bool]) -> f64 {
    a.iter()
        .zip(b)
        .zip(mask)
        .filter(|((x, y), m)| **m && x.is_finite() && y.is_finite())
        .map(|((x, y), _)| ((x - y) / y).abs())
        .fold(0.0, f64::max)
}

/// One row of the convergence report.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub quantity: String,
    pub variation: String,
    pub max_rel_change: f64,
    pub threshold: f64,
}

impl ConvergenceRow {
    pub fn passed(&self) -> bool {
        self.max_rel_change <= self.threshold
    }
}

/// Re-runs the default scenario with halved steps and a larger cutoff and
/// compares z(t), n_k(t) and g²(0)(t) against `base`.
pub fn convergence_report(cfg: &ScenarioConfig, base: &Simulation) -> Result<Vec<ConvergenceRow>> {
    let num = &cfg.numerics;
    let tol = &cfg.scenario.convergence;
    let mut rows = Vec::new();

    let pulses = cfg.pulse_spec()?;
    let z_of = |dt: f64| -> Result<Vec<f64>> {
        let traj = integrate_meanfield(&cfg.system, &pulses, num.t_start, num.t_end, dt)?;
        let stride = (num.output_dt / dt).round() as usize;
        Ok(population_imbalance(&traj.decimate(stride))
            .into_iter()
            .map(|z| z.unwrap_or(0.0))
            .collect())
    };
    let (z1, z2) = (z_of(num.dt_mf)?, z_of(num.dt_mf / 2.0)?);
    rows.push(ConvergenceRow {
        quantity: "z".into(),
        variation: "dt_mf/2".into(),
        max_rel_change: sup_relative(&z2, &z1),
        threshold: tol.meanfield_tol,
    });

    // RK4 half steps of the master equation must land on mean-field samples
    let fine_dt = simulate_with(cfg, &cfg.system, num.dt_mf.min(num.dt_me / 4.0), num.dt_me / 2.0, num.n_max)?;
    let big_cut = simulate_with(cfg, &cfg.system, num.dt_mf, num.dt_me, num.n_max + tol.extra_levels)?;
    for (label, other) in [
        ("dt_me/2".to_string(), &fine_dt),
        (format!("n_max+{}", tol.extra_levels), &big_cut),
    ] {
        for mode in Mode::BOTH {
            let k = mode.index();
            rows.push(ConvergenceRow {
                quantity: format!("n_{}", mode.label()),
                variation: label.clone(),
                max_rel_change: sup_relative(&other.timeline.n[k], &base.timeline.n[k]),
                threshold: tol.g2_tol,
            });
            rows.push(ConvergenceRow {
                quantity: format!("g2_{}", mode.label()),
                variation: label.clone(),
                max_rel_change: pointwise_relative(&other.timeline.g2[k], &base.timeline.g2[k], &base.timeline.mask),
                threshold: tol.g2_tol,
            });
        }
    }
    Ok(rows)
}

fn converge(cfg: &ScenarioConfig, sim: &Simulation, dir: &mut OutputDir) -> Result<ScenarioRecord> {
    let rows = convergence_report(cfg, sim)?;
    let mut table = Table::new(&["quantity", "variation", "max_rel_change", "threshold", "status"])
        .meta("n_max", cfg.numerics.n_max)
        .meta("dt_me_ps", cfg.numerics.dt_me)
        .meta("dt_mf_ps", cfg.numerics.dt_mf);
    for r in &rows {
        table.push(vec![
            r.quantity.as_str().into(),
            r.variation.as_str().into(),
            r.max_rel_change.into(),
            r.threshold.into(),
            (if r.passed() { "PASS" } else { "FAIL" }).into(),
        ]);
    }
    let file = dir.write_table("converge.csv", &table)?;
    let status = if rows.iter().all(ConvergenceRow::passed) {
        Status::Pass
    } else {
        Status::Fail
    };
    let metrics = rows
        .iter()
        .map(|r| (format!("{}@{}", r.quantity, r.variation), json!(r.max_rel_change)))
        .collect();
    Ok(ScenarioRecord {
        name: ScenarioName::Converge.key().to_string(),
        status,
        metrics,
        files: vec![file],
    })
}

/// One invariant checked by [`validate`].
#[derive(Clone, Debug, PartialEq)]
pub struct InvariantCheck {
    pub name: &'static str,
    pub value: f64,
    pub limit: f64,
}

impl InvariantCheck {
    pub fn passed(&self) -> bool {
        self.value <= self.limit
    }
}

/// Invariant suite on the configured system: Lindblad hygiene, truncated
/// versus exact fourth moments, closed-form squeezing statistics at a
/// generous Fock cutoff, and the HBT estimator on Poisson input.
pub fn invariant_suite(cfg: &ScenarioConfig) -> Result<Vec<InvariantCheck>> {
    let sim = simulate(cfg, &cfg.system)?;
    let d = &sim.run.diagnostics;
    let mut checks = vec![
        InvariantCheck {
            name: "trace_drift",
            value: d.max_trace_error,
            limit: 1e-8,
        },
        InvariantCheck {
            name: "negative_eigenvalue",
            value: (-d.min_eigenvalue).max(0.0),
            limit: 1e-8,
        },
        InvariantCheck {
            name: "hermiticity",
            value: d.max_hermiticity_error,
            limit: 1e-10,
        },
    ];
    let tl = &sim.timeline;
    let mut worst: f64 = 0.0;
    for k in 0..2 {
        for i in 0..tl.len() {
            if tl.big_n[k][i] > 0.0 && tl.big_n[k][i] >= 100.0 * tl.n[k][i] {
                worst = worst.max(((tl.g2[k][i] - tl.g2_exact[k][i]) / tl.g2_exact[k][i]).abs());
            }
        }
    }
    checks.push(InvariantCheck {
        name: "truncated_vs_exact_g2",
        value: worst,
        limit: 1e-2,
    });

    let oracle = crate::config::OracleConfig {
        cutoff: 120,
        alpha_points: 3,
        r_points: 3,
        phase_points: 4,
        ..Default::default()
    };
    checks.push(InvariantCheck {
        name: "closed_form_vs_fock_g2",
        value: oracle_sweep(&oracle)?.iter().map(OraclePoint::rel_err).fold(0.0, f64::max),
        limit: 1e-6,
    });

    let events = synthesize_photon_events(&[1.0; 40], 0.0, 0.1, 0.5, 100_000, cfg.seed, Modulation::None)?;
    let est = hbt_g2_estimator(&events, 1.0)?;
    checks.push(InvariantCheck {
        name: "hbt_poisson_max_z",
        value: hbt_worst_z(&est, &vec![true; est.bins()], |_, _| 1.0),
        limit: 5.0,
    });
    Ok(checks)
}

/// Runs [`invariant_suite`] and writes `validate.csv` plus a manifest.
pub fn validate(cfg: &ScenarioConfig, out: &Path) -> Result<RunReport> {
    let started = unix_now();
    let mut dir = OutputDir::create(out)?;
    let (records, error) = match invariant_suite(cfg) {
        Ok(checks) => {
            let mut table = Table::new(&["invariant", "value", "limit", "status"]);
            for c in &checks {
                table.push(vec![
                    c.name.into(),
                    c.value.into(),
                    c.limit.into(),
                    (if c.passed() { "PASS" } else { "FAIL" }).into(),
                ]);
            }
            let file = dir.write_table("validate.csv", &table)?;
            let status = if checks.iter().all(InvariantCheck::passed) {
                Status::Pass
            } else {
                Status::Fail
            };
            let metrics = checks.iter().map(|c| (c.name, json!(c.value))).collect();
            (vec![record_named("validate", status, metrics, vec![file])], None)
        }
        Err(Error::Io(e)) => return Err(Error::Io(e)),
        Err(e) => (
            vec![record_named("validate", Status::Fail, vec![("error", json!(e.to_string()))], vec![])],
            Some(e),
        ),
    };
    finish(cfg, &dir, started, &records)?;
    Ok(RunReport { records, error })
}

fn record_named(name: &str, status: Status, metrics: Vec<(&str, Value)>, files: Vec<String>) -> ScenarioRecord {
    ScenarioRecord {
        name: name.to_string(),
        status,
        metrics: metrics.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        files,
    }
}

fn finish(cfg: &ScenarioConfig, dir: &OutputDir, started: u64, records: &[ScenarioRecord]) -> Result<()> {
    dir.write_manifest(&Manifest {
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: crate::output::sha256_hex(cfg.to_toml().as_bytes()),
        seed: cfg.seed,
        threads: rayon::current_num_threads(),
        started_unix: started,
        finished_unix: unix_now(),
        scenarios: records.to_vec(),
        files: dir.checksums().clone(),
    })
}
