mod common;

use common::{josephson_period, params, pulses, DT_MF, T_END};
use kerr_junction::meanfield::{integrate_meanfield, integrate_meanfield_from, population_imbalance, HBAR_MEV_PS};
use kerr_junction::{MeanFieldState, PulseSpec, SystemParams, C64};
use proptest::prelude::*;

fn mean_crossing_period(t: &[f64], z: &[f64]) -> f64 {
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    let mut ups = Vec::new();
    for i in 1..z.len() {
        let (a, b) = (z[i - 1] - mean, z[i] - mean);
        if a < 0.0 && b >= 0.0 {
            ups.push(t[i - 1] + (t[i] - t[i - 1]) * a / (a - b));
        }
    }
    assert!(ups.len() >= 3, "too few crossings: {}", ups.len());
    (ups[ups.len() - 1] - ups[0]) / (ups.len() - 1) as f64
}

#[test]
fn default_peak_occupation_within_an_order_of_magnitude_of_500() {
    let traj = integrate_meanfield(&params(), &pulses(), 0.0, T_END, DT_MF).unwrap();
    let n0 = traj.states().iter().map(|s| s.total()).fold(0.0, f64::max);
    println!("peak total occupation {n0:.1}");
    assert!(n0 > 50.0 && n0 < 5000.0, "N0 = {n0}");
}

#[test]
fn halving_dt_changes_alpha_below_1e_8() {
    let p = params();
    let coarse = integrate_meanfield(&p, &pulses(), 0.0, T_END, DT_MF).unwrap();
    let fine = integrate_meanfield(&p, &pulses(), 0.0, T_END, DT_MF / 2.0).unwrap();
    let scale = coarse
        .states()
        .iter()
        .map(|s| s.alpha_l.norm().max(s.alpha_r.norm()))
        .fold(0.0, f64::max);
    let worst = coarse
        .states()
        .iter()
        .zip(fine.states().iter().step_by(2))
        .map(|(a, b)| (a.alpha_l - b.alpha_l).norm().max((a.alpha_r - b.alpha_r).norm()))
        .fold(0.0, f64::max);
    println!("max |Δα|/max|α| = {:.3e}", worst / scale);
    assert!(worst / scale < 1e-8);
}

#[test]
fn tail_imbalance_oscillates_at_the_josephson_period() {
    let traj = integrate_meanfield(&params(), &pulses(), 0.0, T_END, DT_MF).unwrap();
    let z = population_imbalance(&traj);
    let (t, zz): (Vec<f64>, Vec<f64>) = traj
        .times()
        .zip(&z)
        .filter(|(t, _)| *t >= 25.0)
        .map(|(t, z)| (t, z.unwrap()))
        .unzip();
    let period = mean_crossing_period(&t, &zz);
    println!("tail period {period:.4} ps, T_J {:.4} ps", josephson_period());
    assert!((period / josephson_period() - 1.0).abs() < 0.1);
}

#[test]
fn default_imbalance_is_bounded_and_starts_at_z0() {
    let traj = integrate_meanfield(&params(), &pulses(), 0.0, T_END, DT_MF).unwrap();
    let z = population_imbalance(&traj);
    assert!(z.iter().flatten().all(|v| (-1.0..=1.0).contains(v)));
    let p = pulses();
    assert!((p.z0() + 0.66).abs() < 1e-12);
    assert!((p.p_r / p.p_l - 1.66 / 0.34).abs() < 1e-12);
}

#[test]
fn rabi_period_of_the_lossless_linear_dimer() {
    let p = SystemParams {
        u: 0.0,
        kappa: 0.0,
        delta_l: 0.0,
        delta_r: 0.0,
        ..params()
    };
    let start = MeanFieldState::new(C64::new(3.0, 0.0), C64::new(0.0, 0.0));
    let traj = integrate_meanfield_from(start, &p, &PulseSpec::none(), 0.0, 30.0, DT_MF).unwrap();
    let tj = std::f64::consts::PI * HBAR_MEV_PS / p.j;
    let s = traj.at((tj / DT_MF).round() * DT_MF);
    // the first return lands within half a step of T_J
    assert!(s.intensity(kerr_junction::Mode::L) / 9.0 > 1.0 - 1e-6);
    let half = traj.at((tj / 2.0 / DT_MF).round() * DT_MF);
    assert!(half.intensity(kerr_junction::Mode::R) / 9.0 > 1.0 - 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn linear_lossless_dynamics_conserve_occupation(
        lr in -3.0..3.0f64, li in -3.0..3.0f64, rr in -3.0..3.0f64, ri in -3.0..3.0f64,
        dl in -1.0..1.0f64, dr in -1.0..1.0f64, j in 0.0..1.0f64,
    ) {
        let p = SystemParams { u: 0.0, kappa: 0.0, delta_l: dl, delta_r: dr, j, ..params() };
        let start = MeanFieldState::new(C64::new(lr, li), C64::new(rr, ri));
        prop_assume!(start.total() > 0.1);
        let traj = integrate_meanfield_from(start, &p, &PulseSpec::none(), 0.0, 100.0, 0.001).unwrap();
        let n0 = start.total();
        for s in traj.states().iter().step_by(1000) {
            prop_assert!((s.total() / n0 - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn frame_rotation_leaves_moduli_unchanged(shift in -0.5..0.5f64) {
        // Δ_k → Δ_k + δ with drives P_k e^{−iδt/ħ} is a pure frame change.
        let p = params();
        let ps = pulses();
        let shifted = SystemParams { delta_l: p.delta_l + shift, delta_r: p.delta_r + shift, ..p };
        let t_end = 8.0;
        let dt = DT_MF;
        let base = integrate_meanfield(&p, &ps, 0.0, t_end, dt).unwrap();
        let mut y = MeanFieldState::default();
        let rhs = |y: &MeanFieldState, t: f64| {
            let g = (-((t - ps.t0) / ps.sigma_t).powi(2)).exp();
            let rot = C64::from_polar(1.0, -shift * t / shifted.hbar);
            let pl = rot * ps.p_l * g;
            let pr = rot * ps.p_r * g;
            let minus_i_over_hbar = C64::new(0.0, -1.0 / shifted.hbar);
            let half_k = C64::new(0.0, -shifted.kappa / 2.0);
            let dl = ((shifted.delta_l + half_k + shifted.u * y.alpha_l.norm_sqr()) * y.alpha_l - shifted.j * y.alpha_r + pl) * minus_i_over_hbar;
            let dr = ((shifted.delta_r + half_k + shifted.u * y.alpha_r.norm_sqr()) * y.alpha_r - shifted.j * y.alpha_l + pr) * minus_i_over_hbar;
            MeanFieldState::new(dl, dr)
        };
        let add = |a: &MeanFieldState, h: f64, k: &MeanFieldState| {
            MeanFieldState::new(a.alpha_l + k.alpha_l * h, a.alpha_r + k.alpha_r * h)
        };
        let n = (t_end / dt).round() as usize;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let t = i as f64 * dt;
            let k1 = rhs(&y, t);
            let k2 = rhs(&add(&y, dt / 2.0, &k1), t + dt / 2.0);
            let k3 = rhs(&add(&y, dt / 2.0, &k2), t + dt / 2.0);
            let k4 = rhs(&add(&y, dt, &k3), t + dt);
            y = MeanFieldState::new(
                y.alpha_l + (k1.alpha_l + 2.0 * k2.alpha_l + 2.0 * k3.alpha_l + k4.alpha_l) * (dt / 6.0),
                y.alpha_r + (k1.alpha_r + 2.0 * k2.alpha_r + 2.0 * k3.alpha_r + k4.alpha_r) * (dt / 6.0),
            );
            if (i + 1) % 400 == 0 {
                let b = base.states()[i + 1];
                let scale = b.alpha_l.norm().max(b.alpha_r.norm()).max(1.0);
                worst = worst
                    .max((y.alpha_l.norm() - b.alpha_l.norm()).abs() / scale)
                    .max((y.alpha_r.norm() - b.alpha_r.norm()).abs() / scale);
            }
        }
        prop_assert!(worst < 1e-9, "worst {}", worst);
    }
}
