use kerr_junction::squeezing::{fock_g2, gaussian_g2, optimize_squeezing_for_antibunching, GaussianStateParams};
use kerr_junction::{FockCutoff, C64};

/// (ᾱ, r, θ) on the 10 × 10 × 8 grid with φ = 0.
fn grid() -> Vec<(f64, f64, f64)> {
    let mut out = Vec::with_capacity(800);
    for i in 0..10 {
        for j in 0..10 {
            for k in 0..8 {
                let alpha = 3.0 * (i + 1) as f64 / 10.0;
                let r = j as f64 / 9.0;
                let theta = std::f64::consts::TAU * k as f64 / 8.0;
                out.push((alpha, r, theta));
            }
        }
    }
    out
}

fn worst_relative_error(n_max: usize) -> (f64, (f64, f64, f64)) {
    let cutoff = FockCutoff::new(n_max).unwrap();
    let mut worst = (0.0, (0.0, 0.0, 0.0));
    for (alpha, r, theta) in grid() {
        let closed = gaussian_g2(&GaussianStateParams::pure(alpha, 0.0, r, theta)).unwrap();
        let fock = fock_g2(C64::from(alpha), C64::from_polar(r, theta), cutoff).unwrap();
        let e = (closed / fock - 1.0).abs();
        if e > worst.0 {
            worst = (e, (alpha, r, theta));
        }
    }
    worst
}

#[test]
#[ignore = "unattainable at cutoff 60: D(3)S(1)|0> leaks ~2e-4 above 60 quanta, worst error ~1e-3"]
fn closed_form_matches_fock_at_cutoff_60() {
    let (e, at) = worst_relative_error(60);
    println!("cutoff 60: worst relative error {e:.3e} at {at:?}");
    assert!(e < 1e-6);
}

#[test]
fn closed_form_matches_fock_at_cutoff_120() {
    let (e, at) = worst_relative_error(120);
    println!("cutoff 120: worst relative error {e:.3e} at {at:?}");
    assert!(e < 1e-6);
}

#[test]
fn squeezed_vacuum_limit() {
    let want = 2.0 + (1f64.cosh() / 1f64.sinh()).powi(2);
    assert!((want - 3.7241).abs() < 1e-4);
    let got = gaussian_g2(&GaussianStateParams::pure(0.0, 0.0, 1.0, 0.0)).unwrap();
    assert!((got - want).abs() < 1e-6);
    let fock = fock_g2(C64::from(0.0), C64::from(1.0), FockCutoff::new(120).unwrap()).unwrap();
    assert!((fock - want).abs() < 1e-6);
}

fn large_field_scan() -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..=200 {
        let r = 2.0 * i as f64 / 200.0;
        for k in 0..128 {
            let psi = std::f64::consts::TAU * k as f64 / 128.0;
            let g = gaussian_g2(&GaussianStateParams::pure(100.0, 0.0, r, psi)).unwrap();
            lo = lo.min(g);
            hi = hi.max(g);
        }
    }
    (lo, hi)
}

#[test]
fn large_field_stays_below_three() {
    let (lo, hi) = large_field_scan();
    println!("alpha 100: g2 in [{lo:.8}, {hi:.8}]");
    assert!(hi <= 3.0 + 1e-3);
    let best = optimize_squeezing_for_antibunching(100.0).unwrap();
    assert!(best.g2_min >= 1.0 - 1e-3);
    assert!(best.g2_min <= lo);
}

#[test]
#[ignore = "unattainable: at alpha 100 the closed form dips to 1 - 1e-4 (amplitude squeezing)"]
fn large_field_stays_above_one() {
    let (lo, _) = large_field_scan();
    println!("alpha 100: min g2 {lo:.8}");
    assert!(lo >= 1.0 - 1e-6);
}
