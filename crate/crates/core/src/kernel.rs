//! Banded Liouvillian on split real/imaginary row-major matrices.
//!
//! Every term of the fluctuation Hamiltonian shifts the composite index by a
//! fixed offset, so `H_eff` is a sum of offset diagonals ("bands"). Row `i`
//! of `H_eff X` combines a few rows of `X`; row `i` of `X H_eff†` is a sum of
//! shifted copies of row `i` of `X` weighted elementwise. Both, plus the jump
//! terms, are accumulated in registers over chunks of `LANES` columns.
//! Matrices carry zero padding around the data so shifted reads never leave
//! the allocation; out-of-range partners always carry a zero weight.

use crate::hilbert::{FockCutoff, Mode, C64};
use crate::meanfield::SystemParams;

const LANES: usize = 8;

fn padded(d: usize) -> usize {
    d.div_ceil(LANES) * LANES
}

/// Dense `d × d` complex matrix stored as padded re/im planes.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Split {
    pub d: usize,
    pad: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl Split {
    pub fn zeros(d: usize) -> Self {
        let side = (d as f64).sqrt().round() as usize;
        let pad = 2 * side + 4 * LANES;
        let len = 2 * pad + d * d;
        Self {
            d,
            pad,
            re: vec![0.0; len],
            im: vec![0.0; len],
        }
    }

    #[inline(always)]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        self.pad + i * self.d + j
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        let k = self.idx(i, j);
        C64::new(self.re[k], self.im[k])
    }

    pub fn set(&mut self, i: usize, j: usize, z: C64) {
        let k = self.idx(i, j);
        self.re[k] = z.re;
        self.im[k] = z.im;
    }

    pub fn from_dense(m: &nalgebra::DMatrix<C64>) -> Self {
        let d = m.nrows();
        let mut s = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                s.set(i, j, m[(i, j)]);
            }
        }
        s
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<C64> {
        nalgebra::DMatrix::from_fn(self.d, self.d, |i, j| self.get(i, j))
    }

    /// `self = a + h·b`
    pub fn set_axpy(&mut self, a: &Split, h: f64, b: &Split) {
        for ((o, x), y) in self.re.iter_mut().zip(&a.re).zip(&b.re) {
            *o = x + h * y;
        }
        for ((o, x), y) in self.im.iter_mut().zip(&a.im).zip(&b.im) {
            *o = x + h * y;
        }
    }

    /// `self += h·b`
    pub fn axpy(&mut self, h: f64, b: &Split) {
        for (o, y) in self.re.iter_mut().zip(&b.re) {
            *o += h * y;
        }
        for (o, y) in self.im.iter_mut().zip(&b.im) {
            *o += h * y;
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.d).map(|i| self.get(i, i)).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.re.iter().chain(&self.im).all(|&x| x == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.re.iter().chain(&self.im).all(|x| x.is_finite())
    }

    pub fn hermiticity_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.d {
            for j in i..self.d {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    /// Copies the conjugate of the upper triangle into the lower one.
    pub fn mirror_upper(&mut self) {
        let d = self.d;
        for i in 0..d {
            let k = self.idx(i, i);
            self.im[k] = 0.0;
            for j in i + 1..d {
                let (a, b) = (self.idx(i, j), self.idx(j, i));
                self.re[b] = self.re[a];
                self.im[b] = -self.im[a];
            }
        }
    }
}

/// Single-mode ladder structure on the composite space: the partner index
/// `i + shift` and `√(n_k(i)+1)`, zero where `n_k(i) = n_max`.
#[derive(Clone, Debug)]
pub(crate) struct Ladder {
    pub shift: usize,
    /// Padded to a multiple of `LANES` with zeros.
    pub coef: Vec<f64>,
}

impl Ladder {
    pub fn new(cutoff: FockCutoff, mode: Mode) -> Self {
        let d = cutoff.composite_dim();
        let shift = match mode {
            Mode::L => cutoff.mode_dim(),
            Mode::R => 1,
        };
        let mut coef = vec![0.0; padded(d)];
        for (i, c) in coef.iter_mut().enumerate().take(d) {
            let n = occupation(cutoff, i, mode);
            if n < cutoff.n_max() {
                *c = ((n + 1) as f64).sqrt();
            }
        }
        Self { shift, coef }
    }

    /// `Tr[a X] = Σ_i c_i X[i+s, i]`
    pub fn trace_a(&self, x: &Split) -> C64 {
        (0..x.d - self.shift)
            .map(|i| x.get(i + self.shift, i) * self.coef[i])
            .sum()
    }

    /// `Tr[a† X] = Σ_i c_i X[i, i+s]`
    pub fn trace_adag(&self, x: &Split) -> C64 {
        (0..x.d - self.shift)
            .map(|i| x.get(i, i + self.shift) * self.coef[i])
            .sum()
    }

    /// `out = a X`, i.e. `out[i, j] = c_i X[i+s, j]`.
    pub fn left_mul_a(&self, x: &Split, out: &mut Split) {
        let d = x.d;
        out.re.fill(0.0);
        out.im.fill(0.0);
        for i in 0..d - self.shift {
            for j in 0..d {
                out.set(i, j, x.get(i + self.shift, j) * self.coef[i]);
            }
        }
    }

    /// `out = X a†`, i.e. `out[i, j] = c_j X[i, j+s]`.
    pub fn right_mul_adag(&self, x: &Split, out: &mut Split) {
        let d = x.d;
        out.re.fill(0.0);
        out.im.fill(0.0);
        for i in 0..d {
            for j in 0..d - self.shift {
                out.set(i, j, x.get(i, j + self.shift) * self.coef[j]);
            }
        }
    }
}

pub(crate) fn occupation(cutoff: FockCutoff, i: usize, mode: Mode) -> usize {
    let (l, r) = cutoff.occupations(i);
    match mode {
        Mode::L => l,
        Mode::R => r,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Term {
    Diagonal,
    Static,
    Pair(Mode),
    PairDag(Mode),
    Cubic(Mode),
    CubicDag(Mode),
}

/// `H_eff[i, i+offset] = coefficient(term) · base[i]`.
#[derive(Clone, Debug)]
struct Band {
    offset: isize,
    term: Term,
    base_re: Vec<f64>,
    base_im: Vec<f64>,
    re: Vec<f64>,
    im: Vec<f64>,
}

/// `dX/dt = −(i/ħ)(H_eff X − X H_eff†) + (κ/ħ) Σ_k a_k X a_k†` with
/// `H_eff = H_f − i(κ/2)(n_L + n_R)`.
#[derive(Clone, Debug)]
pub(crate) struct Liouvillian {
    d: usize,
    u: f64,
    hbar: f64,
    kappa: f64,
    bands: Vec<Band>,
    ladders: [Ladder; 2],
    /// Per row: (band index, source row) of the nonzero entries.
    row_sources: Vec<Vec<(usize, usize)>>,
}

impl Liouvillian {
    pub fn new(params: &SystemParams, cutoff: FockCutoff, linearized: bool) -> Self {
        let d = cutoff.composite_dim();
        let dp = padded(d);
        let nmax = cutoff.n_max();
        let mut bands = Vec::new();
        let mut push = |offset: isize, term: Term, f: &dyn Fn(usize, usize) -> C64| {
            let mut base_re = vec![0.0; dp];
            let mut base_im = vec![0.0; dp];
            for i in 0..d {
                let j = i as isize + offset;
                if j < 0 || j >= d as isize {
                    continue;
                }
                let (l, r) = cutoff.occupations(i);
                let v = f(l, r);
                base_re[i] = v.re;
                base_im[i] = v.im;
            }
            bands.push(Band {
                offset,
                term,
                base_re,
                base_im,
                re: vec![0.0; dp],
                im: vec![0.0; dp],
            });
        };

        push(0, Term::Diagonal, &|l, r| {
            let (fl, fr) = (l as f64, r as f64);
            let mut re = params.delta_l * fl + params.delta_r * fr;
            if !linearized {
                re += params.u * (fl * (fl - 1.0) + fr * (fr - 1.0));
            }
            C64::new(re, -0.5 * params.kappa * (fl + fr))
        });
        // hopping −J(a_L†a_R + a_R†a_L)
        push(-(nmax as isize), Term::Static, &|l, r| {
            if l >= 1 && r < nmax {
                C64::from(-params.j * ((l as f64) * (r as f64 + 1.0)).sqrt())
            } else {
                C64::from(0.0)
            }
        });
        push(nmax as isize, Term::Static, &|l, r| {
            if l < nmax && r >= 1 {
                C64::from(-params.j * ((l as f64 + 1.0) * r as f64).sqrt())
            } else {
                C64::from(0.0)
            }
        });
        let sl = (nmax + 1) as isize;
        for (mode, s) in [(Mode::L, sl), (Mode::R, 1)] {
            let pick = move |l: usize, r: usize| if mode == Mode::L { l } else { r };
            // a²: H[i, i+2s] = √((n+1)(n+2))
            push(2 * s, Term::Pair(mode), &move |l, r| {
                let n = pick(l, r) as f64;
                C64::from(if pick(l, r) + 2 <= nmax { ((n + 1.0) * (n + 2.0)).sqrt() } else { 0.0 })
            });
            // a†²: H[i, i−2s] = √(n(n−1))
            push(-2 * s, Term::PairDag(mode), &move |l, r| {
                let n = pick(l, r) as f64;
                C64::from(if pick(l, r) >= 2 { (n * (n - 1.0)).sqrt() } else { 0.0 })
            });
            if !linearized {
                // a†aa: H[i, i+s] = n√(n+1)
                push(s, Term::Cubic(mode), &move |l, r| {
                    let n = pick(l, r) as f64;
                    C64::from(if pick(l, r) < nmax { n * (n + 1.0).sqrt() } else { 0.0 })
                });
                // a†a†a: H[i, i−s] = (n−1)√n
                push(-s, Term::CubicDag(mode), &move |l, r| {
                    let n = pick(l, r) as f64;
                    C64::from(if pick(l, r) >= 1 { (n - 1.0) * n.sqrt() } else { 0.0 })
                });
            }
        }

        let row_sources = (0..d)
            .map(|i| {
                bands
                    .iter()
                    .enumerate()
                    .filter(|(_, b)| b.base_re[i] != 0.0 || b.base_im[i] != 0.0)
                    .map(|(k, b)| (k, (i as isize + b.offset) as usize))
                    .collect()
            })
            .collect();

        let mut op = Self {
            d,
            u: params.u,
            hbar: params.hbar,
            kappa: params.kappa,
            bands,
            ladders: [Ladder::new(cutoff, Mode::L), Ladder::new(cutoff, Mode::R)],
            row_sources,
        };
        op.init_static();
        op.set_alpha(C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        op
    }

    /// Refills the α-dependent band values.
    pub fn set_alpha(&mut self, alpha_l: C64, alpha_r: C64) {
        let u = self.u;
        for band in &mut self.bands {
            let c = match band.term {
                Term::Diagonal | Term::Static => continue,
                Term::Pair(m) => u * pick(m, alpha_l, alpha_r).conj().powi(2),
                Term::PairDag(m) => u * pick(m, alpha_l, alpha_r).powi(2),
                Term::Cubic(m) => 2.0 * u * pick(m, alpha_l, alpha_r).conj(),
                Term::CubicDag(m) => 2.0 * u * pick(m, alpha_l, alpha_r),
            };
            for k in 0..band.re.len() {
                band.re[k] = band.base_re[k] * c.re;
                band.im[k] = band.base_re[k] * c.im;
            }
        }
    }

    fn init_static(&mut self) {
        for band in &mut self.bands {
            if matches!(band.term, Term::Diagonal | Term::Static) {
                band.re.copy_from_slice(&band.base_re);
                band.im.copy_from_slice(&band.base_im);
            }
        }
    }

    /// Writes `L(X)` into `out`. With `hermitian` set, `X` must be Hermitian;
    /// the result is computed on the upper triangle and mirrored.
    pub fn apply(&self, x: &Split, out: &mut Split, hermitian: bool) {
        let d = self.d;
        let dp = padded(d);
        let inv_hbar = 1.0 / self.hbar;
        let gain = self.kappa * inv_hbar;
        let mut rows: Vec<(f64, f64, usize)> = Vec::with_capacity(self.bands.len());
        let mut jumps: Vec<(f64, usize, &[f64])> = Vec::with_capacity(2);
        for i in 0..d {
            rows.clear();
            for &(b, src) in &self.row_sources[i] {
                let band = &self.bands[b];
                rows.push((band.re[i], band.im[i], x.idx(src, 0)));
            }
            jumps.clear();
            for lad in &self.ladders {
                let ci = lad.coef[i];
                if ci != 0.0 {
                    jumps.push((gain * ci, x.idx(i + lad.shift, lad.shift), &lad.coef[..]));
                }
            }
            let own = x.idx(i, 0) as isize;
            let mut j = if hermitian { i / LANES * LANES } else { 0 };
            while j < dp {
                let mut ar = [0.0f64; LANES];
                let mut ai = [0.0f64; LANES];
                // H_eff X
                for &(vr, vi, base) in &rows {
                    let yr = load(&x.re, base + j);
                    let yi = load(&x.im, base + j);
                    for k in 0..LANES {
                        ar[k] += vr * yr[k] - vi * yi[k];
                        ai[k] += vr * yi[k] + vi * yr[k];
                    }
                }
                // − X H_eff†, elementwise conj(v_b[j]) X[i, j+o]
                for band in &self.bands {
                    let vr = load(&band.re, j);
                    let vi = load(&band.im, j);
                    let s = (own + j as isize + band.offset) as usize;
                    let yr = load(&x.re, s);
                    let yi = load(&x.im, s);
                    for k in 0..LANES {
                        ar[k] -= vr[k] * yr[k] + vi[k] * yi[k];
                        ai[k] -= vr[k] * yi[k] - vi[k] * yr[k];
                    }
                }
                // −(i/ħ)(…), then jumps
                let mut or = [0.0f64; LANES];
                let mut oi = [0.0f64; LANES];
                for k in 0..LANES {
                    or[k] = ai[k] * inv_hbar;
                    oi[k] = -ar[k] * inv_hbar;
                }
                for &(f, base, coef) in &jumps {
                    let c = load(coef, j);
                    let yr = load(&x.re, base + j);
                    let yi = load(&x.im, base + j);
                    for k in 0..LANES {
                        let g = f * c[k];
                        or[k] += g * yr[k];
                        oi[k] += g * yi[k];
                    }
                }
                let n = LANES.min(d - j);
                let o = out.idx(i, j);
                out.re[o..o + n].copy_from_slice(&or[..n]);
                out.im[o..o + n].copy_from_slice(&oi[..n]);
                j += LANES;
            }
        }
        if hermitian {
            out.mirror_upper();
        }
    }
}

#[inline(always)]
fn load(v: &[f64], at: usize) -> [f64; LANES] {
    assert!(at + LANES <= v.len());
    // SAFETY: bounds checked above; [f64; N] has the alignment of f64.
    unsafe { std::ptr::read(v.as_ptr().add(at) as *const [f64; LANES]) }
}

fn pick(mode: Mode, l: C64, r: C64) -> C64 {
    match mode {
        Mode::L => l,
        Mode::R => r,
    }
}

/// Preallocated classical RK4 stepper for `dX/dt = L(t) X`.
pub(crate) struct Rk4 {
    stage: Split,
    k: Split,
    acc: Split,
}

impl Rk4 {
    pub fn new(d: usize) -> Self {
        Self {
            stage: Split::zeros(d),
            k: Split::zeros(d),
            acc: Split::zeros(d),
        }
    }

    /// One step from `t` to `t + dt` given the mean fields at `t`,
    /// `t + dt/2` and `t + dt`.
    pub fn step(
        &mut self,
        lv: &mut Liouvillian,
        x: &mut Split,
        dt: f64,
        alphas: [(C64, C64); 3],
        hermitian: bool,
    ) {
        lv.set_alpha(alphas[0].0, alphas[0].1);
        lv.apply(x, &mut self.k, hermitian);
        self.acc.set_axpy(x, dt / 6.0, &self.k);
        self.stage.set_axpy(x, dt / 2.0, &self.k);

        lv.set_alpha(alphas[1].0, alphas[1].1);
        lv.apply(&self.stage, &mut self.k, hermitian);
        self.acc.axpy(dt / 3.0, &self.k);
        self.stage.set_axpy(x, dt / 2.0, &self.k);

        lv.apply(&self.stage, &mut self.k, hermitian);
        self.acc.axpy(dt / 3.0, &self.k);
        self.stage.set_axpy(x, dt, &self.k);

        lv.set_alpha(alphas[2].0, alphas[2].1);
        lv.apply(&self.stage, &mut self.k, hermitian);
        self.acc.axpy(dt / 6.0, &self.k);
        std::mem::swap(x, &mut self.acc);
    }
}
