use chargenoise::estimation::fit_charge_scan;
use chargenoise::model::{alias_charge_delta, DeviceParams};
use chargenoise::noise::{synth_power_law, EnvironmentTrace, PowerLawSpec};
use chargenoise::pulse::{run_charge_scan, ScanPlan};
use chargenoise::rng::{stream, Substream};
use chargenoise::spectral::{fit_power_law, welch_psd, WelchOptions};
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn ensemble_periodogram_slope_matches_exponent(alpha in 0.5f64..2.5, seed in 0u64..1000) {
        let (n, dt, realizations) = (4096, 1.0, 200);
        let spec = PowerLawSpec::new(1e-3, alpha);
        let opts = WelchOptions::periodogram().with_segment(n);
        let mut avg = welch_psd(&synth_power_law(&spec, n, dt, seed * 1000).unwrap(), dt, &opts).unwrap();
        for r in 1..realizations {
            let x = synth_power_law(&spec, n, dt, seed * 1000 + r).unwrap();
            let s = welch_psd(&x, dt, &opts).unwrap();
            avg.values.iter_mut().zip(&s.values).for_each(|(a, b)| *a += b);
        }
        avg.values.iter_mut().for_each(|v| *v /= realizations as f64);
        // central two decades of the resolved band
        let (lo, hi) = (1.0 / (n as f64 * dt), 0.5 / dt);
        let mid = (lo * hi).sqrt();
        let fit = fit_power_law(&avg, (mid / 10.0, mid * 10.0)).unwrap();
        prop_assert!((fit.alpha - alpha).abs() < 0.05, "α {} vs {}", fit.alpha, alpha);
    }
}

fn static_env(charge_e: f64, n: usize, dt: f64) -> EnvironmentTrace {
    EnvironmentTrace {
        dt,
        charge_e: vec![charge_e; n],
        parity: vec![1; n],
        flux: vec![0.0; n],
        seed: 0,
    }
}

fn fraction_within_three_sigma(p: &DeviceParams, trials: usize, seed: u64) -> f64 {
    let plan = ScanPlan::from_params(p);
    let dt = plan.span / plan.total_shots() as f64;
    let mut shots = stream(seed, Substream::Shots);
    let mut offsets = stream(seed, Substream::Geometry);
    let mut inside = 0;
    for _ in 0..trials {
        let truth = offsets.random::<f64>() - 0.5;
        let env = static_env(truth, plan.total_shots() + 1, dt);
        let scan = run_charge_scan(&env, p, &plan, 0.0, &mut shots).unwrap();
        let fit = fit_charge_scan(&scan, None).unwrap();
        if fit.usable() && alias_charge_delta(fit.delta_e - truth).abs() < 3.0 * fit.sigma_e {
            inside += 1;
        }
    }
    inside as f64 / trials as f64
}

#[test]
fn scan_fits_land_within_three_sigma() {
    for p in [DeviceParams::qubit_a(), DeviceParams::qubit_b()] {
        let frac = fraction_within_three_sigma(&p, 2000, 11);
        assert!(frac >= 0.99, "{frac}");
    }
}
