use chargenoise::cpsd::{
    run_high_bandwidth_cpsd, run_low_bandwidth_cpsd, HighBandConfig, LowBandConfig,
};
use chargenoise::model::DeviceParams;
use chargenoise::noise::{
    compose_environment, EnvironmentSpec, FluxNoiseSpec, PowerLawSpec, TelegraphSpec,
};

fn pooled_low_band_floor(n_spectra: usize, seeds: std::ops::Range<u64>) -> f64 {
    let p = DeviceParams::qubit_a();
    let cfg = LowBandConfig {
        n_spectra,
        ..Default::default()
    };
    let (mut sum_sq, mut count) = (0.0, 0usize);
    for seed in seeds {
        let spec = EnvironmentSpec {
            charge: Some(PowerLawSpec::qubit_a_charge()),
            flux: Some(FluxNoiseSpec::default()),
            ..Default::default()
        };
        let env = compose_environment(&spec, None, cfg.duration(), 0.1, seed).unwrap();
        let r = run_low_bandwidth_cpsd(&env, &p, &cfg, seed).unwrap();
        sum_sq += r.normalized.iter().map(|v| v * v).sum::<f64>();
        count += r.len();
    }
    (sum_sq / count as f64).sqrt()
}

#[test]
fn low_band_floor_scales_as_inverse_root_n() {
    for (n, seeds) in [(25, 1..9), (100, 1..9), (400, 1..5)] {
        let floor = pooled_low_band_floor(n, seeds);
        let ratio = floor * (n as f64).sqrt();
        assert!((ratio - 1.0).abs() <= 0.25, "n = {n}: floor·√n = {ratio}");
    }
}

/// Flux-noise power below 5 Hz at charge-noise amplitude `scale` × nominal.
fn high_band_flux_power(scale: f64, seed: u64) -> f64 {
    let p = DeviceParams::qubit_a();
    let cfg = HighBandConfig::default();
    let spec = EnvironmentSpec {
        charge: (scale > 0.0).then(|| PowerLawSpec::new(2.9e-4 * scale * scale, 1.93)),
        parity: Some(TelegraphSpec {
            gamma: std::f64::consts::TAU * 255.0,
        }),
        flux: Some(FluxNoiseSpec::default()),
        ..Default::default()
    };
    let env = compose_environment(&spec, None, cfg.duration(&p) + 1.0, 1e-4, seed).unwrap();
    let r = run_high_bandwidth_cpsd(&env, &p, &cfg, seed).unwrap();
    r.flux_psd_mean(0.2, 5.0).unwrap()
}

#[test]
fn second_order_leak_grows_quadratically() {
    let mut power = [0.0; 3];
    for seed in 1..5 {
        for (k, scale) in [0.0, 1.0, 2.0].into_iter().enumerate() {
            power[k] += high_band_flux_power(scale, seed);
        }
    }
    assert!(power[0] < power[1] && power[1] < power[2], "{power:?}");
    let ratio = (power[2] - power[0]) / (power[1] - power[0]);
    assert!(ratio >= 3.0, "leak power ratio {ratio}");
}
