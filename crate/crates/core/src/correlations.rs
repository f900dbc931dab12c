//! Second-order coherence from mean fields plus fluctuation correlators.
//!
//! The two-time numerator keeps all second-order truncations of
//! `⟨â†(t₁)â†(t₂)â(t₂)â(t₁)⟩`:
//!
//! ```text
//! G² = 2Re[α(t₂)α(t₁)C₁] + 2Re[α*(t₂)α(t₁)C₂] + |C₁|² + |C₂|²
//!    + N(t₂)n(t₁) + N(t₁)n(t₂) + N(t₁)N(t₂) + n(t₁)n(t₂)
//! ```
//!
//! with `C₁ = ⟨δa†(t₁)δa†(t₂)⟩`, `C₂ = ⟨δa†(t₁)δa(t₂)⟩`, and
//! `g² = G²/[(N+n)(t₁)·(N+n)(t₂)]` per mode. For `t₂ ≥ t₁` the correlators
//! come from the regression theorem: `X = ρ(t₁)δa†` is propagated to `t₂`
//! with the state's own Liouvillian, then `C₂ = Tr[δa X]`, `C₁ = Tr[δa† X]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fluctuations::{reconstruct, stage_alphas, Checkpoints, ModeMoments, MomentSet};
use crate::hilbert::{Mode, C64};
use crate::kernel::{Ladder, Liouvillian, Rk4, Split};
use crate::meanfield::MeanFieldTrajectory;

/// Eq. 10 numerator at `t₁ = t₂`: `N² + 4Nn + 2n² + |m|² + 2Re(α² m*)`.
pub fn equal_time_numerator(m: &ModeMoments) -> f64 {
    let big = m.big_n();
    big * big + 4.0 * big * m.n + 2.0 * m.n * m.n + m.anom.norm_sqr()
        + 2.0 * (m.alpha * m.alpha * m.anom.conj()).re
}

/// Truncated equal-time `g²(0)(t)` of one mode.
pub fn equal_time_g2(moments: &MomentSet, mode: Mode) -> Result<f64> {
    let m = moments.mode(mode);
    let den = m.big_n() + m.n;
    if !(den > 0.0) {
        return Err(Error::Domain(format!(
            "equal_time_g2: N + n = 0 at t = {} ps",
            moments.t
        )));
    }
    Ok(equal_time_numerator(m) / (den * den))
}

/// `⟨â†â†ââ⟩/⟨â†â⟩²` from the full composite moments up to fourth order.
pub fn exact_equal_time_g2(moments: &MomentSet, mode: Mode) -> Result<f64> {
    let m = moments.mode(mode);
    let den = m.mean_number();
    if !(den > 0.0) {
        return Err(Error::Domain(format!(
            "exact_equal_time_g2: ⟨a†a⟩ = 0 at t = {} ps",
            moments.t
        )));
    }
    Ok(m.exact_g2_numerator() / (den * den))
}

/// Fluctuation parts of the two-time correlators.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TwoTimeCorrelators {
    /// ⟨δa†(t₁)δa†(t₂)⟩
    pub c_adag_adag: C64,
    /// ⟨δa†(t₁)δa(t₂)⟩
    pub c_adag_a: C64,
}

/// Eq. 10 numerator from mean fields, single-time moments and correlators.
pub fn two_time_numerator(m1: &ModeMoments, m2: &ModeMoments, c: &TwoTimeCorrelators) -> f64 {
    let (a1, a2) = (m1.alpha, m2.alpha);
    let (n1, n2) = (m1.n, m2.n);
    let (big1, big2) = (m1.big_n(), m2.big_n());
    2.0 * (a2 * a1 * c.c_adag_adag).re
        + 2.0 * (a2.conj() * a1 * c.c_adag_a).re
        + c.c_adag_adag.norm_sqr()
        + c.c_adag_a.norm_sqr()
        + big2 * n1
        + big1 * n2
        + big1 * big2
        + n1 * n2
}

/// Normalized two-time `g²` from Eq. 10 and the per-mode denominators.
pub fn two_time_g2(m1: &ModeMoments, m2: &ModeMoments, c: &TwoTimeCorrelators) -> Result<f64> {
    let den = (m1.big_n() + m1.n) * (m2.big_n() + m2.n);
    if !(den > 0.0) {
        return Err(Error::Domain("two_time_g2: vanishing intensity".into()));
    }
    Ok(two_time_numerator(m1, m2, c) / den)
}

/// Propagates `x` from `from` to `to` (step indices) with the general,
/// non-Hermitian integrator.
fn propagate(
    ck: &Checkpoints,
    traj: &MeanFieldTrajectory,
    lv: &mut Liouvillian,
    rk: &mut Rk4,
    x: &mut Split,
    from: usize,
    to: usize,
) -> Result<()> {
    for n in from..to {
        rk.step(lv, x, ck.dt(), stage_alphas(traj, ck.t_start(), ck.dt(), n), false);
    }
    if !x.is_finite() {
        return Err(Error::PropagationDiverged { t: ck.time_of(to) });
    }
    Ok(())
}

fn check_span(ck: &Checkpoints, t: f64) -> Result<()> {
    let tol = 1e-9 * ck.dt();
    if t < ck.t_start() - tol || t > ck.t_end() + tol {
        return Err(Error::CheckpointMissing { t });
    }
    Ok(())
}

/// Correlators at one later time for every step in `targets` (ascending),
/// starting from the state at `start`.
fn correlator_sweep(
    ck: &Checkpoints,
    traj: &MeanFieldTrajectory,
    rho: &Split,
    start: usize,
    targets: &[usize],
    mode: Mode,
) -> Result<Vec<TwoTimeCorrelators>> {
    let lad = Ladder::new(ck.cutoff(), mode);
    let mut x = Split::zeros(rho.d);
    lad.right_mul_adag(rho, &mut x);
    if x.is_zero() {
        return Ok(vec![TwoTimeCorrelators::default(); targets.len()]);
    }
    let mut lv = Liouvillian::new(ck.params(), ck.cutoff(), ck.linearized());
    let mut rk = Rk4::new(rho.d);
    let mut at = start;
    let mut out = Vec::with_capacity(targets.len());
    for &s in targets {
        propagate(ck, traj, &mut lv, &mut rk, &mut x, at, s)?;
        at = s;
        out.push(TwoTimeCorrelators {
            c_adag_adag: lad.trace_adag(&x),
            c_adag_a: lad.trace_a(&x),
        });
    }
    Ok(out)
}

/// Fluctuation correlators `⟨δa†(t₁)δa†(t₂)⟩` and `⟨δa†(t₁)δa(t₂)⟩`.
///
/// Times are snapped to the master-equation grid. For `t₂ ≥ t₁` the matrix
/// `ρ(t₁)δa†` is propagated. For `t₂ < t₁` the later operator `δa†(t₁)` is
/// traced against `ρ(t₂)δa†` and `δa ρ(t₂)` propagated to `t₁`; these are
/// the placements whose equal-time limits give `⟨δa†²⟩` and `⟨δa†δa⟩`.
pub fn two_time_correlators(
    ck: &Checkpoints,
    traj: &MeanFieldTrajectory,
    t1: f64,
    t2: f64,
    mode: Mode,
) -> Result<TwoTimeCorrelators> {
    check_span(ck, t1)?;
    check_span(ck, t2)?;
    let (s1, s2) = (ck.step_of(t1), ck.step_of(t2));
    if s2 >= s1 {
        let rho = reconstruct(ck, traj, s1)?;
        return Ok(correlator_sweep(ck, traj, &rho, s1, &[s2], mode)?[0]);
    }
    let rho = reconstruct(ck, traj, s2)?;
    let lad = Ladder::new(ck.cutoff(), mode);
    let mut lv = Liouvillian::new(ck.params(), ck.cutoff(), ck.linearized());
    let mut rk = Rk4::new(rho.d);
    let mut later = |left: &dyn Fn(&Split, &mut Split)| -> Result<C64> {
        let mut x = Split::zeros(rho.d);
        left(&rho, &mut x);
        propagate(ck, traj, &mut lv, &mut rk, &mut x, s2, s1)?;
        Ok(lad.trace_adag(&x))
    };
    let c_adag_adag = later(&|r, o| lad.right_mul_adag(r, o))?;
    let c_adag_a = later(&|r, o| lad.left_mul_a(r, o))?;
    Ok(TwoTimeCorrelators {
        c_adag_adag,
        c_adag_a,
    })
}

/// Square time grid for [`g2_map`], on master-equation steps.
#[derive(Clone, Debug, PartialEq)]
pub struct MapGrid {
    steps: Vec<usize>,
    times: Vec<f64>,
}

impl MapGrid {
    /// Uniform grid of `points` samples starting at `t_lo`, with spacing the
    /// largest multiple of `quantum` that keeps the grid inside `[t_lo, t_hi]`.
    /// All times are snapped to multiples of `quantum` from the run start.
    pub fn within(ck: &Checkpoints, t_lo: f64, t_hi: f64, points: usize, quantum: f64) -> Result<Self> {
        if points < 2 {
            return Err(crate::error::invalid("points", "need at least two grid points"));
        }
        let q = crate::meanfield::step_count(quantum, ck.dt(), "grid quantum")?;
        check_span(ck, t_lo)?;
        check_span(ck, t_hi)?;
        let lo = ck.step_of(t_lo).div_ceil(q) * q;
        let hi = ck.step_of(t_hi) / q * q;
        if hi <= lo {
            return Err(crate::error::invalid("grid", "empty window"));
        }
        let spacing = (hi - lo) / q / (points - 1);
        if spacing == 0 {
            return Err(crate::error::invalid("grid", "window too short for the requested points"));
        }
        let steps: Vec<usize> = (0..points).map(|k| lo + k * spacing * q).collect();
        Ok(Self::from_steps(ck, steps))
    }

    /// Grid at the given times (snapped to steps, sorted, deduplicated).
    pub fn at_times(ck: &Checkpoints, times: &[f64]) -> Result<Self> {
        for &t in times {
            check_span(ck, t)?;
        }
        let mut steps: Vec<usize> = times.iter().map(|&t| ck.step_of(t)).collect();
        steps.sort_unstable();
        steps.dedup();
        Ok(Self::from_steps(ck, steps))
    }

    fn from_steps(ck: &Checkpoints, steps: Vec<usize>) -> Self {
        let times = steps.iter().map(|&s| ck.time_of(s)).collect();
        Self { steps, times }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// `g²(t₁, t₂)` on a square grid with its mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationGrid {
    pub mode: Mode,
    /// Shared by both axes (ps).
    pub times: Vec<f64>,
    /// Row-major, `g2[i·n + j] = g²(tᵢ, tⱼ)`.
    pub g2: Vec<f64>,
    /// `true` where either time falls below the intensity floor.
    pub mask: Vec<bool>,
    /// Single-time moments at each grid time.
    pub moments: Vec<MomentSet>,
    /// Correlators for `j ≥ i`, row-major like `g2` (zero below the diagonal).
    pub correlators: Vec<TwoTimeCorrelators>,
}

impl CorrelationGrid {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.g2[i * self.len() + j]
    }

    pub fn masked(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.len() + j]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.get(i, i)).collect()
    }
}

/// Two-time map for one mode. Cells are masked where `N_k + n_k` at either
/// time is below `intensity_floor`. Rows run in parallel on the current
/// rayon pool and are merged in grid order.
pub fn g2_map(
    ck: &Checkpoints,
    traj: &MeanFieldTrajectory,
    grid: &MapGrid,
    mode: Mode,
    intensity_floor: f64,
) -> Result<CorrelationGrid> {
    let n = grid.len();
    let rows: Vec<(MomentSet, Vec<TwoTimeCorrelators>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let s1 = grid.steps[i];
            let rho = reconstruct(ck, traj, s1)?;
            let mf = traj.at(ck.time_of(s1));
            let m = MomentSet::from_split(ck.time_of(s1), &rho, mf.alpha_l, mf.alpha_r, ck.cutoff());
            let c = correlator_sweep(ck, traj, &rho, s1, &grid.steps[i..], mode)?;
            Ok((m, c))
        })
        .collect::<Result<_>>()?;

    let moments: Vec<MomentSet> = rows.iter().map(|(m, _)| *m).collect();
    let bright: Vec<bool> = moments
        .iter()
        .map(|m| {
            let mm = m.mode(mode);
            mm.big_n() + mm.n >= intensity_floor
        })
        .collect();
    let mut g2 = vec![f64::NAN; n * n];
    let mut mask = vec![true; n * n];
    let mut correlators = vec![TwoTimeCorrelators::default(); n * n];
    for (i, (_, row)) in rows.iter().enumerate() {
        for (k, c) in row.iter().enumerate() {
            let j = i + k;
            let (m1, m2) = (moments[i].mode(mode), moments[j].mode(mode));
            let den = (m1.big_n() + m1.n) * (m2.big_n() + m2.n);
            let v = if den > 0.0 {
                two_time_numerator(m1, m2, c) / den
            } else {
                f64::NAN
            };
            let masked = !(bright[i] && bright[j]);
            g2[i * n + j] = v;
            g2[j * n + i] = v;
            mask[i * n + j] = masked;
            mask[j * n + i] = masked;
            correlators[i * n + j] = *c;
        }
    }
    Ok(CorrelationGrid {
        mode,
        times: grid.times.clone(),
        g2,
        mask,
        moments,
        correlators,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn mode_moments(alpha: C64, n: f64, anom: C64) -> ModeMoments {
        ModeMoments {
            alpha,
            n,
            anom,
            ..Default::default()
        }
    }

    fn set(m: ModeMoments) -> MomentSet {
        MomentSet {
            modes: [m, m],
            ..Default::default()
        }
    }

    #[test]
    fn coherent_state_is_poissonian() {
        let m = set(mode_moments(C64::new(4.0, -2.0), 0.0, C64::new(0.0, 0.0)));
        assert_abs_diff_eq!(equal_time_g2(&m, Mode::L).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn thermal_fluctuations_give_two() {
        let m = set(mode_moments(C64::new(0.0, 0.0), 0.37, C64::new(0.0, 0.0)));
        assert_abs_diff_eq!(equal_time_g2(&m, Mode::R).unwrap(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn empty_mode_is_a_domain_error() {
        let m = set(ModeMoments::default());
        assert!(matches!(equal_time_g2(&m, Mode::L), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn two_time_reduces_to_equal_time(re in -50.0..50.0f64, im in -50.0..50.0f64, n in 0.0..3.0f64,
                                          mr in -2.0..2.0f64, mi in -2.0..2.0f64) {
            let mm = mode_moments(C64::new(re, im), n, C64::new(mr, mi));
            prop_assume!(mm.big_n() + n > 1e-3);
            let c = TwoTimeCorrelators { c_adag_adag: mm.anom.conj(), c_adag_a: C64::from(n) };
            let a = two_time_g2(&mm, &mm, &c).unwrap();
            let b = equal_time_g2(&set(mm), Mode::L).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * b.abs());
        }

        #[test]
        fn gaussian_exact_numerator_matches_truncation(re in -50.0..50.0f64, im in -50.0..50.0f64,
                                                       r in 0.0..1.5f64, th in 0.0..6.3f64) {
            // for a pure Gaussian fluctuation ⟨δa⟩ = 0, third moment 0 and
            // ⟨δa†²δa²⟩ = 2n² + |m|², so both forms coincide
            let n = r.sinh().powi(2);
            let anom = -C64::from_polar(r.sinh() * r.cosh(), th);
            let mm = ModeMoments {
                alpha: C64::new(re, im),
                n,
                anom,
                fourth: 2.0 * n * n + anom.norm_sqr(),
                ..Default::default()
            };
            prop_assume!(mm.big_n() + n > 1e-3);
            let a = exact_equal_time_g2(&set(mm), Mode::L).unwrap();
            let b = equal_time_g2(&set(mm), Mode::L).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * b.abs());
        }
    }
}
