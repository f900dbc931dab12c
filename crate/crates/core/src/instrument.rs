//! Detector response, SNR masking and a synthetic two-arm photon counter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Gaussian impulse response and intensity threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstrumentSpec {
    /// Full width at half maximum of the impulse response (ps).
    pub fwhm: f64,
    /// Fraction of the peak intensity below which samples are masked.
    pub snr_threshold: f64,
}

impl Default for InstrumentSpec {
    fn default() -> Self {
        Self {
            fwhm: 3.4,
            snr_threshold: 0.02,
        }
    }
}

impl InstrumentSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.fwhm > 0.0) || !self.fwhm.is_finite() {
            return Err(invalid("fwhm", "must be positive"));
        }
        if !(self.snr_threshold > 0.0 && self.snr_threshold < 1.0) {
            return Err(invalid("snr_threshold", "must lie in (0, 1)"));
        }
        Ok(())
    }

    /// `σ = FWHM / (2√(2 ln 2))`.
    pub fn sigma(&self) -> f64 {
        self.fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt())
    }
}

/// Convolution with the normalized Gaussian response, truncated at ±4σ.
/// Near the ends the kernel is renormalized over the samples that exist.
pub fn gaussian_convolve(series: &[f64], dt: f64, spec: &InstrumentSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if !(dt > 0.0) {
        return Err(invalid("dt", "must be positive"));
    }
    let sigma = spec.sigma();
    if dt > sigma / 2.0 {
        return Err(Error::GridTooCoarse {
            dt,
            limit: sigma / 2.0,
        });
    }
    if let Some(i) = series.iter().position(|x| !x.is_finite()) {
        return Err(invalid("series", format!("non-finite sample at index {i}")));
    }
    let half = (4.0 * sigma / dt).floor() as usize;
    let w: Vec<f64> = (0..=half)
        .map(|k| {
            let x = k as f64 * dt / sigma;
            (-0.5 * x * x).exp()
        })
        .collect();
    let n = series.len();
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            let (mut acc, mut mass) = (0.0, 0.0);
            for (j, x) in series.iter().enumerate().take(hi + 1).skip(lo) {
                let wk = w[i.abs_diff(j)];
                acc += wk * x;
                mass += wk;
            }
            acc / mass
        })
        .collect())
}

/// `true` where the sample reaches `threshold·peak`; an all-zero series is
/// masked everywhere.
pub fn snr_mask(intensity: &[f64], spec: &InstrumentSpec) -> Result<Vec<bool>> {
    spec.validate()?;
    if intensity.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(invalid("intensity", "must be finite and nonnegative"));
    }
    let peak = intensity.iter().copied().fold(0.0, f64::max);
    let floor = spec.snr_threshold * peak;
    Ok(intensity.iter().map(|&x| peak > 0.0 && x >= floor).collect())
}

/// Beamsplitter output port.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arm {
    A,
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhotonEvent {
    pub arm: Arm,
    /// Detection time (ps).
    pub time: f64,
}

/// Per-pulse intensity fluctuation applied on top of Poisson emission.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    /// Fixed intensity: Poissonian counts.
    #[default]
    None,
    /// Intensity scaled by an Exp(1) draw per pulse: thermal-like counts.
    Exponential,
}

/// Events of many pulses, stored flat with per-pulse offsets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhotonEventSet {
    pub n_pulses: usize,
    pub seed: u64,
    /// Acquisition window `[t_start, t_end]` (ps).
    pub window: (f64, f64),
    events: Vec<PhotonEvent>,
    offsets: Vec<usize>,
}

impl PhotonEventSet {
    pub fn pulse(&self, k: usize) -> &[PhotonEvent] {
        &self.events[self.offsets[k]..self.offsets[k + 1]]
    }

    pub fn total_events(&self) -> usize {
        self.events.len()
    }

    /// CSV with a comment header: `pulse,arm,t_ps`.
    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "# n_pulses: {}\n# seed: {}\n# window_ps: [{}, {}]\npulse,arm,t_ps\n",
            self.n_pulses, self.seed, self.window.0, self.window.1
        );
        for k in 0..self.n_pulses {
            for e in self.pulse(k) {
                let arm = match e.arm {
                    Arm::A => "A",
                    Arm::B => "B",
                };
                s.push_str(&format!("{k},{arm},{:.6}\n", e.time));
            }
        }
        s
    }
}

/// Draws photon times from an inhomogeneous Poisson process with rate
/// proportional to `intensity` (uniform samples from `t_start` with spacing
/// `dt`, each covering `[t, t + dt)`). Each pulse uses its own ChaCha stream
/// keyed by `(seed, pulse)`, so the output does not depend on scheduling.
pub fn synthesize_photon_events(
    intensity: &[f64],
    t_start: f64,
    dt: f64,
    mean_photons_per_pulse: f64,
    n_pulses: usize,
    seed: u64,
    modulation: Modulation,
) -> Result<PhotonEventSet> {
    if !(mean_photons_per_pulse > 0.0) || !mean_photons_per_pulse.is_finite() {
        return Err(invalid("mean_photons_per_pulse", "must be positive"));
    }
    if !(dt > 0.0) {
        return Err(invalid("dt", "must be positive"));
    }
    if intensity.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(invalid("intensity", "must be finite and nonnegative"));
    }
    let mut cdf = Vec::with_capacity(intensity.len());
    let mut acc = 0.0;
    for &x in intensity {
        acc += x;
        cdf.push(acc);
    }
    if !(acc > 0.0) {
        return Err(invalid("intensity", "has no weight"));
    }
    for c in &mut cdf {
        *c /= acc;
    }
    let window = (t_start, t_start + intensity.len() as f64 * dt);

    let per_pulse: Vec<Vec<PhotonEvent>> = (0..n_pulses)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let scale = match modulation {
                Modulation::None => 1.0,
                Modulation::Exponential => Exp1.sample(&mut rng),
            };
            let lambda = mean_photons_per_pulse * scale;
            let count = if lambda > 0.0 {
                Poisson::new(lambda).expect("positive rate").sample(&mut rng) as usize
            } else {
                0
            };
            (0..count)
                .map(|_| {
                    let u: f64 = rng.gen();
                    let bin = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
                    let time = t_start + (bin as f64 + rng.gen::<f64>()) * dt;
                    let arm = if rng.gen::<bool>() { Arm::A } else { Arm::B };
                    PhotonEvent { arm, time }
                })
                .collect()
        })
        .collect();

    let mut offsets = Vec::with_capacity(n_pulses + 1);
    let mut events = Vec::new();
    offsets.push(0);
    for p in per_pulse {
        events.extend(p);
        offsets.push(events.len());
    }
    Ok(PhotonEventSet {
        n_pulses,
        seed,
        window,
        events,
        offsets,
    })
}

/// Cross-arm coincidence ratio on a square grid of time bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HbtEstimate {
    /// Left bin edges (ps); bin `b` covers `[edges[b], edges[b] + bin_width)`.
    pub edges: Vec<f64>,
    pub bin_width: f64,
    /// Row-major `ĝ²(b₁, b₂)` with `b₁` on arm A and `b₂` on arm B.
    pub g2: Vec<f64>,
    pub stderr: Vec<f64>,
    /// A denominator bin had no counts; `g2` is NaN there.
    pub empty: Vec<bool>,
    /// Mean counts per pulse in each bin, arm A and arm B.
    pub mean_a: Vec<f64>,
    pub mean_b: Vec<f64>,
}

impl HbtEstimate {
    pub fn bins(&self) -> usize {
        self.edges.len()
    }

    pub fn get(&self, b1: usize, b2: usize) -> (f64, f64) {
        let k = b1 * self.bins() + b2;
        (self.g2[k], self.stderr[k])
    }
}

#[derive(Clone, Default)]
struct Sums {
    a: Vec<u64>,
    b: Vec<u64>,
    aa: Vec<u64>,
    bb: Vec<u64>,
    ab: Vec<u64>,
    ab2: Vec<u64>,
    ab_a: Vec<u64>,
    ab_b: Vec<u64>,
}

impl Sums {
    fn new(nb: usize) -> Self {
        Self {
            a: vec![0; nb],
            b: vec![0; nb],
            aa: vec![0; nb],
            bb: vec![0; nb],
            ab: vec![0; nb * nb],
            ab2: vec![0; nb * nb],
            ab_a: vec![0; nb * nb],
            ab_b: vec![0; nb * nb],
        }
    }

    fn merge(mut self, o: Sums) -> Sums {
        for (x, y) in [
            (&mut self.a, &o.a),
            (&mut self.b, &o.b),
            (&mut self.aa, &o.aa),
            (&mut self.bb, &o.bb),
            (&mut self.ab, &o.ab),
            (&mut self.ab2, &o.ab2),
            (&mut self.ab_a, &o.ab_a),
            (&mut self.ab_b, &o.ab_b),
        ] {
            for (p, q) in x.iter_mut().zip(y) {
                *p += q;
            }
        }
        self
    }
}

/// `ĝ²(b₁,b₂) = ⟨n_A(b₁)n_B(b₂)⟩/(⟨n_A(b₁)⟩⟨n_B(b₂)⟩)` over pulses, with a
/// delta-method standard error from the pulse-to-pulse covariances.
pub fn hbt_g2_estimator(events: &PhotonEventSet, bin_width: f64) -> Result<HbtEstimate> {
    let (t0, t1) = events.window;
    if !(bin_width > 0.0) {
        return Err(invalid("bin_width", "must be positive"));
    }
    if events.n_pulses == 0 {
        return Err(invalid("events", "no pulses"));
    }
    let nb = ((t1 - t0) / bin_width).ceil().max(1.0) as usize;
    let bin_of = |t: f64| (((t - t0) / bin_width).floor().max(0.0) as usize).min(nb - 1);

    const CHUNK: usize = 4096;
    let chunks: Vec<usize> = (0..events.n_pulses.div_ceil(CHUNK)).collect();
    let sums = chunks
        .par_iter()
        .map(|&c| {
            let mut s = Sums::new(nb);
            let mut ca = vec![0u64; nb];
            let mut cb = vec![0u64; nb];
            let mut touched_a = Vec::new();
            let mut touched_b = Vec::new();
            for k in c * CHUNK..((c + 1) * CHUNK).min(events.n_pulses) {
                for e in events.pulse(k) {
                    let b = bin_of(e.time);
                    let (cnt, touched) = match e.arm {
                        Arm::A => (&mut ca, &mut touched_a),
                        Arm::B => (&mut cb, &mut touched_b),
                    };
                    if cnt[b] == 0 {
                        touched.push(b);
                    }
                    cnt[b] += 1;
                }
                for &x in &touched_a {
                    s.a[x] += ca[x];
                    s.aa[x] += ca[x] * ca[x];
                }
                for &y in &touched_b {
                    s.b[y] += cb[y];
                    s.bb[y] += cb[y] * cb[y];
                }
                for &x in &touched_a {
                    for &y in &touched_b {
                        let p = ca[x] * cb[y];
                        let k2 = x * nb + y;
                        s.ab[k2] += p;
                        s.ab2[k2] += p * p;
                        s.ab_a[k2] += p * ca[x];
                        s.ab_b[k2] += p * cb[y];
                    }
                }
                for x in touched_a.drain(..) {
                    ca[x] = 0;
                }
                for y in touched_b.drain(..) {
                    cb[y] = 0;
                }
            }
            s
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Sums::new(nb), Sums::merge);

    let n = events.n_pulses as f64;
    let mean = |v: u64| v as f64 / n;
    let mut g2 = vec![f64::NAN; nb * nb];
    let mut stderr = vec![f64::NAN; nb * nb];
    let mut empty = vec![false; nb * nb];
    for x in 0..nb {
        for y in 0..nb {
            let k = x * nb + y;
            let (ma, mb, mab) = (mean(sums.a[x]), mean(sums.b[y]), mean(sums.ab[k]));
            if ma == 0.0 || mb == 0.0 {
                empty[k] = true;
                continue;
            }
            let r = mab / (ma * mb);
            g2[k] = r;
            let var_a = mean(sums.aa[x]) - ma * ma;
            let var_b = mean(sums.bb[y]) - mb * mb;
            let var_ab = mean(sums.ab2[k]) - mab * mab;
            let cov_ab_a = mean(sums.ab_a[k]) - mab * ma;
            let cov_ab_b = mean(sums.ab_b[k]) - mab * mb;
            let cov_a_b = mab - ma * mb;
            // gradient of f(u, v, w) = u/(v w) at (mab, ma, mb)
            let (gu, gv, gw) = (1.0 / (ma * mb), -r / ma, -r / mb);
            let var = gu * gu * var_ab
                + gv * gv * var_a
                + gw * gw * var_b
                + 2.0 * gu * gv * cov_ab_a
                + 2.0 * gu * gw * cov_ab_b
                + 2.0 * gv * gw * cov_a_b;
            stderr[k] = (var.max(0.0) / n).sqrt();
        }
    }
    Ok(HbtEstimate {
        edges: (0..nb).map(|b| t0 + b as f64 * bin_width).collect(),
        bin_width,
        g2,
        stderr,
        empty,
        mean_a: sums.a.iter().map(|&v| mean(v)).collect(),
        mean_b: sums.b.iter().map(|&v| mean(v)).collect(),
    })
}
