//! Post-processing used by scenarios and acceptance checks: oscillation
//! periods, local maxima, counterphase and lattice fits.

use kerr_junction::correlations::CorrelationGrid;

/// Mean spacing of upward crossings of `y` through its mean, with linear
/// interpolation between samples. `None` with fewer than two crossings.
pub fn crossing_period(t: &[f64], y: &[f64]) -> Option<f64> {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ups: Vec<f64> = t
        .windows(2)
        .zip(y.windows(2))
        .filter(|(_, w)| w[0] - mean < 0.0 && w[1] - mean >= 0.0)
        .map(|(tw, w)| {
            let (a, b) = (w[0] - mean, w[1] - mean);
            tw[0] + (tw[1] - tw[0]) * a / (a - b)
        })
        .collect();
    if ups.len() < 2 {
        return None;
    }
    Some((ups[ups.len() - 1] - ups[0]) / (ups.len() - 1) as f64)
}

/// Samples that are the largest unmasked value within `±half_window` and whose
/// immediate neighbours are unmasked. Ties go to the earliest sample.
pub fn local_maxima(t: &[f64], y: &[f64], mask: &[bool], half_window: f64) -> Vec<(f64, f64)> {
    let n = y.len();
    let mut out = Vec::new();
    for i in 1..n.saturating_sub(1) {
        if !(mask[i - 1] && mask[i] && mask[i + 1]) || !y[i].is_finite() {
            continue;
        }
        let is_max = (0..n)
            .filter(|&j| j != i && mask[j] && (t[j] - t[i]).abs() <= half_window)
            .all(|j| if j < i { y[j] < y[i] } else { y[j] <= y[i] });
        if is_max {
            out.push((t[i], y[i]));
        }
    }
    out
}

/// `y` minus its mean over unmasked samples within `±half_window`; NaN on
/// masked samples.
pub fn remove_running_mean(t: &[f64], y: &[f64], mask: &[bool], half_window: f64) -> Vec<f64> {
    (0..y.len())
        .map(|i| {
            if !mask[i] || !y[i].is_finite() {
                return f64::NAN;
            }
            let (sum, count) = (0..y.len())
                .filter(|&j| mask[j] && y[j].is_finite() && (t[j] - t[i]).abs() <= half_window)
                .fold((0.0, 0usize), |(s, c), j| (s + y[j], c + 1));
            y[i] - sum / count as f64
        })
        .collect()
}

/// Pearson correlation at zero lag over samples where `mask` holds.
pub fn masked_correlation(x: &[f64], y: &[f64], mask: &[bool]) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .zip(mask)
        .filter(|((a, b), m)| **m && a.is_finite() && b.is_finite())
        .map(|((a, b), _)| (*a, *b))
        .collect();
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let (mx, my) = pairs.iter().fold((0.0, 0.0), |(sx, sy), (a, b)| (sx + a, sy + b));
    let (mx, my) = (mx / n, my / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in &pairs {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Unmasked cells strictly greater than all eight neighbours, which must
/// exist and be unmasked. Returned as `(t₁, t₂, g²)`.
pub fn map_peaks(map: &CorrelationGrid) -> Vec<(f64, f64, f64)> {
    let n = map.len();
    let mut out = Vec::new();
    for i in 1..n.saturating_sub(1) {
        for j in 1..n - 1 {
            let v = map.get(i, j);
            let ok = (i - 1..=i + 1).all(|a| {
                (j - 1..=j + 1).all(|b| !map.masked(a, b) && ((a, b) == (i, j) || map.get(a, b) < v))
            });
            if ok {
                out.push((map.times[i], map.times[j], v));
            }
        }
    }
    out
}

/// One axis of a lattice: sites at `offset + k·pitch`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisFit {
    pub offset: f64,
    pub pitch: f64,
    /// Largest distance from a coordinate to its assigned site.
    pub max_residual: f64,
}

/// Least-squares lattice through 1-D coordinates. Coordinates closer than
/// `merge` are treated as one site; the initial pitch is the median gap
/// between sites, then sites get integer indices and `offset`, `pitch` are
/// refit by linear regression over all coordinates.
pub fn fit_axis(coords: &[f64], merge: f64) -> Option<AxisFit> {
    let mut c: Vec<f64> = coords.to_vec();
    c.sort_by(f64::total_cmp);
    let mut sites: Vec<Vec<f64>> = Vec::new();
    for x in c.iter().copied() {
        match sites.last_mut() {
            Some(s) if x - s[s.len() - 1] <= merge => s.push(x),
            _ => sites.push(vec![x]),
        }
    }
    if sites.len() < 2 {
        return None;
    }
    let centers: Vec<f64> = sites.iter().map(|s| s.iter().sum::<f64>() / s.len() as f64).collect();
    let mut gaps: Vec<f64> = centers.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(f64::total_cmp);
    let guess = gaps[gaps.len() / 2];
    let k: Vec<f64> = c.iter().map(|x| ((x - centers[0]) / guess).round()).collect();
    let n = c.len() as f64;
    let (mk, mx) = (k.iter().sum::<f64>() / n, c.iter().sum::<f64>() / n);
    let skk: f64 = k.iter().map(|a| (a - mk) * (a - mk)).sum();
    let skx: f64 = k.iter().zip(&c).map(|(a, x)| (a - mk) * (x - mx)).sum();
    let pitch = skx / skk;
    let offset = mx - pitch * mk;
    let max_residual = k
        .iter()
        .zip(&c)
        .map(|(a, x)| (x - offset - a * pitch).abs())
        .fold(0.0, f64::max);
    Some(AxisFit {
        offset,
        pitch,
        max_residual,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatticeFit {
    pub t1: AxisFit,
    pub t2: AxisFit,
}

/// Rectangular lattice through map peaks, fitted independently per axis.
pub fn fit_lattice(peaks: &[(f64, f64, f64)], merge: f64) -> Option<LatticeFit> {
    let a: Vec<f64> = peaks.iter().map(|p| p.0).collect();
    let b: Vec<f64> = peaks.iter().map(|p| p.1).collect();
    Some(LatticeFit {
        t1: fit_axis(&a, merge)?,
        t2: fit_axis(&b, merge)?,
    })
}
