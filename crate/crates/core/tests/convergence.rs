mod common;

use common::{params, simulate};
use kerr_junction::correlations::equal_time_g2;
use kerr_junction::Mode;

#[test]
#[ignore = "not converged at cutoff 12: g2 moves by 1-5% at cutoff 16; takes ~4 min"]
fn raising_the_cutoff_leaves_g2_unchanged() {
    let coarse = simulate(&params(), 12, false);
    let fine = simulate(&params(), 16, false);
    let mut worst: f64 = 0.0;
    for (a, b) in coarse.run.moments.iter().zip(&fine.run.moments) {
        for k in Mode::BOTH {
            if let (Ok(x), Ok(y)) = (equal_time_g2(a, k), equal_time_g2(b, k)) {
                worst = worst.max((x / y - 1.0).abs());
            }
        }
    }
    println!("max relative g2 change 12 -> 16: {worst:.3e}");
    assert!(worst < 1e-3);
}

#[test]
#[ignore = "fails: max |n_full - n_lin| is 24% of peak n; two full runs"]
fn linearized_occupation_close_to_full() {
    let full = simulate(&params(), 12, false);
    let lin = simulate(&params(), 12, true);
    let mut worst: f64 = 0.0;
    for k in Mode::BOTH {
        let peak = full.run.moments.iter().map(|m| m.mode(k).n).fold(0.0, f64::max);
        for (a, b) in full.run.moments.iter().zip(&lin.run.moments) {
            worst = worst.max((a.mode(k).n - b.mode(k).n).abs() / peak);
        }
    }
    println!("max |n_full - n_lin| / max n_full = {worst:.4}");
    assert!(worst < 0.05);
}
