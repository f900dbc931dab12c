//! Two-mode fluctuation density matrix driven by the mean-field trajectory.
//!
//! The fluctuation Hamiltonian keeps all nonlinear orders:
//!
//! ```text
//! H_f = Σ_k [Δ_k a_k†a_k + U(α_k*² a_k² + α_k² a_k†²)]
//!     + Σ_k U[a_k†a_k†a_ka_k + 2α_k* a_k†a_ka_k + 2α_k a_k†a_k†a_k]
//!     − J(a_L†a_R + a_R†a_L)
//! ```
//!
//! and the linearized variant drops the second line. Losses enter through
//! `−(κ/2ħ) Σ_k ({a_k†a_k, ρ} − 2 a_k ρ a_k†)`.
//!
//! [`fluctuation_hamiltonian`] and [`lindblad_rhs`] are dense reference
//! implementations. [`evolve_fluctuations`] uses a banded kernel that applies
//! the same generator without forming `169 × 169` products.

use std::sync::Arc;

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hilbert::{
    annihilation, embed, number, DensityMatrix, FockCutoff, Mode, Operator, C64,
};
use crate::kernel::{Liouvillian, Rk4, Split};
use crate::meanfield::{step_count, MeanFieldTrajectory, SystemParams};

/// Dense fluctuation Hamiltonian at the given mean fields.
pub fn fluctuation_hamiltonian(
    alpha_l: C64,
    alpha_r: C64,
    params: &SystemParams,
    cutoff: FockCutoff,
    linearized: bool,
) -> Operator {
    let a1 = annihilation(cutoff);
    let n1 = number(cutoff);
    let a = |m| embed(&a1, m, cutoff).expect("single-mode operator");
    let n = |m| embed(&n1, m, cutoff).expect("single-mode operator");
    let d = cutoff.composite_dim();
    let mut h = DMatrix::<C64>::zeros(d, d);
    for (mode, alpha) in [(Mode::L, alpha_l), (Mode::R, alpha_r)] {
        let ak = a(mode);
        let ad = ak.dagger();
        let a2 = &ak * &ak;
        let ad2 = &ad * &ad;
        h += n(mode).matrix() * C64::from(params.delta(mode));
        h += a2.matrix() * (params.u * alpha.conj().powi(2));
        h += ad2.matrix() * (params.u * alpha.powi(2));
        if !linearized {
            h += (&ad2 * &a2).matrix() * C64::from(params.u);
            h += (&ad * &a2).matrix() * (2.0 * params.u * alpha.conj());
            h += (&ad2 * &ak).matrix() * (2.0 * params.u * alpha);
        }
    }
    let al = a(Mode::L);
    let ar = a(Mode::R);
    let hop = &al.dagger() * &ar;
    h -= (hop.matrix() + hop.dagger().matrix()) * C64::from(params.j);
    Operator::from_matrix(h).expect("square by construction")
}

/// Dense master-equation right-hand side `dρ/dt`.
pub fn lindblad_rhs(
    rho: &DMatrix<C64>,
    h: &Operator,
    params: &SystemParams,
    cutoff: FockCutoff,
) -> Result<DMatrix<C64>> {
    let d = cutoff.composite_dim();
    if rho.nrows() != d || rho.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: rho.nrows(),
        });
    }
    if h.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: h.dim(),
        });
    }
    let i_hbar = C64::new(0.0, -1.0 / params.hbar);
    let hm = h.matrix();
    let mut out = (hm * rho - rho * hm) * i_hbar;
    let a1 = annihilation(cutoff);
    for mode in Mode::BOTH {
        let a = embed(&a1, mode, cutoff)?;
        let am = a.matrix();
        let ad = a.dagger().into_matrix();
        let nk = &ad * am;
        let diss = &nk * rho + rho * &nk - (am * rho * &ad) * C64::from(2.0);
        out -= diss * C64::from(params.kappa / (2.0 * params.hbar));
    }
    Ok(out)
}

/// Fluctuation density matrix at time `t`.
#[derive(Clone, Debug)]
pub struct FluctuationState {
    pub t: f64,
    pub rho: DensityMatrix,
}

/// Normal-ordered monomial `a_L†^p a_L^q a_R†^r a_R^s` exponents.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Monomial {
    pub l: (u32, u32),
    pub r: (u32, u32),
}

impl Monomial {
    pub fn single(mode: Mode, creators: u32, annihilators: u32) -> Self {
        match mode {
            Mode::L => Self {
                l: (creators, annihilators),
                r: (0, 0),
            },
            Mode::R => Self {
                l: (0, 0),
                r: (creators, annihilators),
            },
        }
    }
}

// a†^p a^q |m⟩ = c |m − q + p⟩ in the truncated space
fn ladder_image(m: usize, p: u32, q: u32, n_max: usize) -> Option<(usize, f64)> {
    let (p, q) = (p as usize, q as usize);
    if m < q || m - q + p > n_max {
        return None;
    }
    let low = m - q;
    let mut c = 1.0;
    for k in low + 1..=m {
        c *= k as f64;
    }
    for k in low + 1..=low + p {
        c *= k as f64;
    }
    Some((low + p, c.sqrt()))
}

fn monomial_trace(get: impl Fn(usize, usize) -> C64, mono: Monomial, cutoff: FockCutoff) -> C64 {
    // Tr[O ρ] = Σ_j O[i(j), j] ρ[j, i(j)]
    let n_max = cutoff.n_max();
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..cutoff.composite_dim() {
        let (ml, mr) = cutoff.occupations(j);
        let Some((il, cl)) = ladder_image(ml, mono.l.0, mono.l.1, n_max) else {
            continue;
        };
        let Some((ir, cr)) = ladder_image(mr, mono.r.0, mono.r.1, n_max) else {
            continue;
        };
        acc += get(j, cutoff.index(il, ir)) * (cl * cr);
    }
    acc
}

/// Fluctuation moment `Tr[O ρ]` of a normal-ordered monomial.
pub fn fluctuation_moment(rho: &DensityMatrix, mono: Monomial, cutoff: FockCutoff) -> Result<C64> {
    let d = cutoff.composite_dim();
    if rho.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: rho.dim(),
        });
    }
    let m = rho.matrix();
    Ok(monomial_trace(|i, j| m[(i, j)], mono, cutoff))
}

pub(crate) fn split_moment(x: &Split, mono: Monomial, cutoff: FockCutoff) -> C64 {
    monomial_trace(|i, j| x.get(i, j), mono, cutoff)
}

/// Single-time moments of one mode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeMoments {
    /// Mean field α.
    pub alpha: C64,
    /// ⟨δa⟩.
    pub mean_fluct: C64,
    /// ⟨δa²⟩.
    pub anom: C64,
    /// n = ⟨δa†δa⟩.
    pub n: f64,
    /// ⟨δa†δa δa⟩.
    pub third: C64,
    /// ⟨δa†δa†δa δa⟩.
    pub fourth: f64,
}

impl ModeMoments {
    /// Mean-field occupation N = |α|².
    pub fn big_n(&self) -> f64 {
        self.alpha.norm_sqr()
    }

    /// Composite ⟨â⟩ = α + ⟨δa⟩.
    pub fn mean_a(&self) -> C64 {
        self.alpha + self.mean_fluct
    }

    /// Composite ⟨â²⟩ = α² + 2α⟨δa⟩ + ⟨δa²⟩.
    pub fn mean_a2(&self) -> C64 {
        self.alpha * self.alpha + 2.0 * self.alpha * self.mean_fluct + self.anom
    }

    /// Composite ⟨â†â⟩ = |α|² + 2Re(α*⟨δa⟩) + n.
    pub fn mean_number(&self) -> f64 {
        self.big_n() + 2.0 * (self.alpha.conj() * self.mean_fluct).re + self.n
    }

    /// Exact composite ⟨â†â†ââ⟩ from moments up to fourth order.
    pub fn exact_g2_numerator(&self) -> f64 {
        let a = self.alpha;
        let nn = a.norm_sqr();
        let b = self.mean_fluct;
        nn * nn
            + 2.0 * nn * 2.0 * (a.conj() * b).re
            + 2.0 * (a.conj().powi(2) * self.anom).re
            + 4.0 * nn * self.n
            + 2.0 * 2.0 * (a.conj() * self.third).re
            + self.fourth
    }
}

/// Single-time moments of both modes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub t: f64,
    pub modes: [ModeMoments; 2],
    /// ⟨δa_L†δa_R⟩.
    pub cross_adag_a: C64,
    /// ⟨δa_L δa_R⟩.
    pub cross_aa: C64,
}

impl MomentSet {
    pub fn mode(&self, mode: Mode) -> &ModeMoments {
        &self.modes[mode.index()]
    }

    fn collect(t: f64, get: &dyn Fn(Monomial) -> C64, alpha_l: C64, alpha_r: C64) -> Self {
        let mut modes = [ModeMoments::default(); 2];
        for (mode, alpha) in [(Mode::L, alpha_l), (Mode::R, alpha_r)] {
            let one = |p, q| get(Monomial::single(mode, p, q));
            modes[mode.index()] = ModeMoments {
                alpha,
                mean_fluct: one(0, 1),
                anom: one(0, 2),
                n: one(1, 1).re,
                third: one(1, 2),
                fourth: one(2, 2).re,
            };
        }
        Self {
            t,
            modes,
            cross_adag_a: get(Monomial { l: (1, 0), r: (0, 1) }),
            cross_aa: get(Monomial { l: (0, 1), r: (0, 1) }),
        }
    }

    /// Moments of a dense fluctuation state.
    pub fn from_state(
        t: f64,
        rho: &DensityMatrix,
        alpha_l: C64,
        alpha_r: C64,
        cutoff: FockCutoff,
    ) -> Result<Self> {
        let d = cutoff.composite_dim();
        if rho.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: rho.dim(),
            });
        }
        let m = rho.matrix();
        let get = |mono| monomial_trace(|i, j| m[(i, j)], mono, cutoff);
        Ok(Self::collect(t, &get, alpha_l, alpha_r))
    }

    pub(crate) fn from_split(t: f64, x: &Split, alpha_l: C64, alpha_r: C64, cutoff: FockCutoff) -> Self {
        let get = |mono| split_moment(x, mono, cutoff);
        Self::collect(t, &get, alpha_l, alpha_r)
    }
}

/// Composite-field moments assembled from mean field and fluctuations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MomentRequest {
    /// ⟨â_k⟩
    Mean(Mode),
    /// ⟨â_k²⟩
    Square(Mode),
    /// ⟨â_k†â_k⟩
    Number(Mode),
    /// ⟨â_k†â_k†â_kâ_k⟩
    PairNumber(Mode),
}

pub fn composite_expectation(
    request: MomentRequest,
    rho: &DensityMatrix,
    alpha_l: C64,
    alpha_r: C64,
    cutoff: FockCutoff,
) -> Result<C64> {
    let m = MomentSet::from_state(0.0, rho, alpha_l, alpha_r, cutoff)?;
    Ok(match request {
        MomentRequest::Mean(k) => m.mode(k).mean_a(),
        MomentRequest::Square(k) => m.mode(k).mean_a2(),
        MomentRequest::Number(k) => C64::from(m.mode(k).mean_number()),
        MomentRequest::PairNumber(k) => C64::from(m.mode(k).exact_g2_numerator()),
    })
}

/// What to do when the top Fock level becomes populated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruncationPolicy {
    /// Abort with [`Error::TruncationOverflow`].
    Error,
    /// Log once, record in diagnostics, continue.
    #[default]
    Warn,
}

/// Threshold on the top-level population fraction.
pub const TRUNCATION_LIMIT: f64 = 1e-6;
/// Minimum eigenvalue below which evolution aborts.
pub const POSITIVITY_LIMIT: f64 = -1e-6;

#[derive(Clone, Debug)]
pub struct EvolutionSettings {
    pub cutoff: FockCutoff,
    /// Master-equation step (ps).
    pub dt: f64,
    pub linearized: bool,
    /// Moment output spacing (ps); a multiple of `dt`.
    pub output_dt: f64,
    /// Checkpoint spacing (ps); a multiple of `dt`. `None` disables storage.
    pub checkpoint_dt: Option<f64>,
    /// Steps between eigenvalue checks.
    pub eig_check_every: usize,
    pub truncation: TruncationPolicy,
}

impl EvolutionSettings {
    pub fn new(cutoff: FockCutoff, dt: f64) -> Self {
        Self {
            cutoff,
            dt,
            linearized: false,
            output_dt: 0.05,
            checkpoint_dt: Some(0.25),
            eig_check_every: 100,
            truncation: TruncationPolicy::Warn,
        }
    }
}

/// Hygiene measures accumulated during an evolution.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct EvolutionDiagnostics {
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    pub min_eigenvalue: f64,
    /// Largest population of the top Fock level of either mode.
    pub max_top_population: f64,
    /// Earliest time at which the top-level population exceeded the limit.
    pub truncation_exceeded_at: Option<f64>,
    /// Largest |⟨δa_k⟩|/|α_k| over samples with |α_k| > 1.
    pub max_mean_fluct_ratio: f64,
    /// Largest n_k/N_k over samples with N_k above 1% of its peak.
    pub max_fluct_fraction: f64,
    pub steps: usize,
}

/// Everything needed to restart the evolution from a stored matrix.
#[derive(Clone)]
pub struct Checkpoints {
    pub(crate) params: SystemParams,
    pub(crate) cutoff: FockCutoff,
    pub(crate) linearized: bool,
    pub(crate) dt: f64,
    pub(crate) t_start: f64,
    pub(crate) steps: usize,
    pub(crate) stored: Vec<(usize, Arc<Split>)>,
}

impl Checkpoints {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_start + self.steps as f64 * self.dt
    }

    pub fn cutoff(&self) -> FockCutoff {
        self.cutoff
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn linearized(&self) -> bool {
        self.linearized
    }

    pub fn len(&self) -> usize {
        self.stored.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stored.is_empty()
    }

    /// Step index of the grid point nearest to `t`.
    pub fn step_of(&self, t: f64) -> usize {
        (((t - self.t_start) / self.dt).round().max(0.0) as usize).min(self.steps)
    }

    pub fn time_of(&self, step: usize) -> f64 {
        self.t_start + step as f64 * self.dt
    }

    /// Stored checkpoint times (ps).
    pub fn times(&self) -> Vec<f64> {
        self.stored.iter().map(|(s, _)| self.time_of(*s)).collect()
    }

    /// Dense copy of the stored state at index `k`.
    pub fn state(&self, k: usize) -> Option<FluctuationState> {
        let (s, x) = self.stored.get(k)?;
        Some(FluctuationState {
            t: self.time_of(*s),
            rho: DensityMatrix::from_matrix(x.to_dense()).ok()?,
        })
    }

    pub(crate) fn nearest_before(&self, step: usize) -> Option<(usize, &Split)> {
        let k = self.stored.partition_point(|(s, _)| *s <= step);
        if k == 0 {
            return None;
        }
        let (s, x) = &self.stored[k - 1];
        Some((*s, x.as_ref()))
    }
}

impl std::fmt::Debug for Checkpoints {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Checkpoints")
            .field("dt", &self.dt)
            .field("t_start", &self.t_start)
            .field("steps", &self.steps)
            .field("stored", &self.stored.len())
            .finish()
    }
}

/// Mean fields at the three RK4 evaluation times of step `n`.
pub(crate) fn stage_alphas(traj: &MeanFieldTrajectory, t_start: f64, dt: f64, n: usize) -> [(C64, C64); 3] {
    let t = t_start + n as f64 * dt;
    let at = |t: f64| {
        let s = traj.at(t);
        (s.alpha_l, s.alpha_r)
    };
    [at(t), at(t + dt / 2.0), at(t + dt)]
}

/// Output of [`evolve_fluctuations`].
#[derive(Clone, Debug)]
pub struct FluctuationRun {
    pub moments: Vec<MomentSet>,
    pub checkpoints: Checkpoints,
    pub diagnostics: EvolutionDiagnostics,
    pub final_state: FluctuationState,
}

impl FluctuationRun {
    pub fn times(&self) -> Vec<f64> {
        self.moments.iter().map(|m| m.t).collect()
    }
}

/// Integrates the fluctuation master equation over the span of `traj`.
pub fn evolve_fluctuations(
    rho0: &DensityMatrix,
    traj: &MeanFieldTrajectory,
    params: &SystemParams,
    settings: &EvolutionSettings,
) -> Result<FluctuationRun> {
    params.validate()?;
    let cutoff = settings.cutoff;
    let d = cutoff.composite_dim();
    if rho0.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: rho0.dim(),
        });
    }
    if traj.len() < 2 {
        return Err(invalid("trajectory", "needs at least two samples"));
    }
    let dt = settings.dt;
    let t_start = traj.t_start();
    let steps = step_count(traj.t_end() - t_start, dt, "dt_me")?;
    let out_stride = step_count(settings.output_dt, dt, "output_dt")?;
    let ck_stride = match settings.checkpoint_dt {
        Some(c) => Some(step_count(c, dt, "checkpoint_dt")?),
        None => None,
    };
    let eig_every = settings.eig_check_every.max(1);

    let mut lv = Liouvillian::new(params, cutoff, settings.linearized);
    let mut rk = Rk4::new(d);
    let mut x = Split::from_dense(rho0.matrix());
    let trace0 = x.trace().re;

    let peaks = [
        traj.intensities(Mode::L).into_iter().fold(0.0, f64::max),
        traj.intensities(Mode::R).into_iter().fold(0.0, f64::max),
    ];
    let top: Vec<Vec<usize>> = Mode::BOTH
        .iter()
        .map(|&m| {
            (0..d)
                .filter(|&i| crate::kernel::occupation(cutoff, i, m) == cutoff.n_max())
                .collect()
        })
        .collect();

    let mut diag = EvolutionDiagnostics {
        min_eigenvalue: f64::INFINITY,
        ..Default::default()
    };
    let mut moments = Vec::with_capacity(steps / out_stride + 1);
    let mut stored = Vec::new();
    let mut warned = false;

    for n in 0..=steps {
        let t = t_start + n as f64 * dt;
        if n > 0 {
            let alphas = stage_alphas(traj, t_start, dt, n - 1);
            rk.step(&mut lv, &mut x, dt, alphas, true);
            if !x.is_finite() {
                return Err(Error::PropagationDiverged { t });
            }
        }
        if n % eig_every == 0 || n == steps {
            let rho = x.to_dense();
            let min = crate::hilbert::hermitian_min_eigenvalue(&rho);
            diag.min_eigenvalue = diag.min_eigenvalue.min(min);
            if min < POSITIVITY_LIMIT {
                return Err(Error::PositivityLoss {
                    t,
                    min_eigenvalue: min,
                });
            }
        }
        if n % out_stride == 0 || n == steps {
            let tr = x.trace().re;
            diag.max_trace_error = diag.max_trace_error.max((tr - trace0).abs());
            diag.max_hermiticity_error = diag.max_hermiticity_error.max(x.hermiticity_error());
            let frac = top
                .iter()
                .map(|idx| idx.iter().map(|&i| x.get(i, i).re).sum::<f64>() / tr)
                .fold(0.0, f64::max);
            diag.max_top_population = diag.max_top_population.max(frac);
            if frac > TRUNCATION_LIMIT && diag.truncation_exceeded_at.is_none() {
                diag.truncation_exceeded_at = Some(t);
                match settings.truncation {
                    TruncationPolicy::Error => {
                        return Err(Error::TruncationOverflow { t, population: frac })
                    }
                    TruncationPolicy::Warn => {
                        if !warned {
                            warn!("top Fock level population {frac:.3e} at t = {t:.3} ps exceeds {TRUNCATION_LIMIT:e}");
                            warned = true;
                        }
                    }
                }
            }
            let s = traj.at(t);
            let m = MomentSet::from_split(t, &x, s.alpha_l, s.alpha_r, cutoff);
            for mode in Mode::BOTH {
                let mm = m.mode(mode);
                let a = mm.alpha.norm();
                if a > 1.0 {
                    diag.max_mean_fluct_ratio = diag.max_mean_fluct_ratio.max(mm.mean_fluct.norm() / a);
                }
                if mm.big_n() >= 0.01 * peaks[mode.index()] && mm.big_n() > 0.0 {
                    diag.max_fluct_fraction = diag.max_fluct_fraction.max(mm.n / mm.big_n());
                }
            }
            moments.push(m);
        }
        if let Some(c) = ck_stride {
            if n % c == 0 {
                stored.push((n, Arc::new(x.clone())));
            }
        }
    }
    diag.steps = steps;
    let final_state = FluctuationState {
        t: t_start + steps as f64 * dt,
        rho: DensityMatrix::from_matrix(x.to_dense())?,
    };
    Ok(FluctuationRun {
        moments,
        checkpoints: Checkpoints {
            params: *params,
            cutoff,
            linearized: settings.linearized,
            dt,
            t_start,
            steps,
            stored,
        },
        diagnostics: diag,
        final_state,
    })
}

/// Re-evolves from the nearest earlier checkpoint to `step`.
pub(crate) fn reconstruct(
    ck: &Checkpoints,
    traj: &MeanFieldTrajectory,
    step: usize,
) -> Result<Split> {
    let (s0, x0) = ck
        .nearest_before(step)
        .ok_or(Error::CheckpointMissing { t: ck.time_of(step) })?;
    let mut x = x0.clone();
    if s0 < step {
        let mut lv = Liouvillian::new(&ck.params, ck.cutoff, ck.linearized);
        let mut rk = Rk4::new(x.d);
        for n in s0..step {
            rk.step(&mut lv, &mut x, ck.dt, stage_alphas(traj, ck.t_start, ck.dt, n), true);
        }
    }
    Ok(x)
}

/// Dense state at `t` (snapped to the step grid), rebuilt from checkpoints.
pub fn state_at(ck: &Checkpoints, traj: &MeanFieldTrajectory, t: f64) -> Result<FluctuationState> {
    let step = ck.step_of(t);
    let x = reconstruct(ck, traj, step)?;
    Ok(FluctuationState {
        t: ck.time_of(step),
        rho: DensityMatrix::from_matrix(x.to_dense())?,
    })
}
