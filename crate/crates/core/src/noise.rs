//! Synthetic charge environment.
//!
//! Gaussian 1/f^α background by frequency-domain shaping, a symmetric random
//! telegraph for quasiparticle parity, Poisson impingement of discrete charges,
//! and 1/f flux noise with an optional coherent charge component.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{stream, Substream};

/// Largest environment we are willing to allocate (samples per series).
pub const MAX_ENV_SAMPLES: usize = 1 << 30;

/// One-sided power law `A/f^α` (units²/Hz), flattened below `f_min` and cut
/// to zero above `f_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerLawSpec {
    pub amplitude_at_1hz: f64,
    pub exponent: f64,
    #[serde(default)]
    pub f_min: f64,
    #[serde(default = "infinite")]
    pub f_max: f64,
}

fn infinite() -> f64 {
    f64::INFINITY
}

impl PowerLawSpec {
    pub fn new(amplitude_at_1hz: f64, exponent: f64) -> Self {
        Self {
            amplitude_at_1hz,
            exponent,
            f_min: 0.0,
            f_max: f64::INFINITY,
        }
    }

    /// Charge background of qubit A: 2.9×10⁻⁴ e²/Hz at 1 Hz, α = 1.93.
    pub fn qubit_a_charge() -> Self {
        Self::new(2.9e-4, 1.93)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude_at_1hz > 0.0) {
            return Err(invalid("power-law amplitude must be positive"));
        }
        if !(self.exponent >= 0.0 && self.exponent < 3.0) {
            return Err(invalid(format!(
                "power-law exponent {} outside [0, 3)",
                self.exponent
            )));
        }
        if !(self.f_min >= 0.0 && self.f_min < self.f_max) {
            return Err(invalid("power-law band needs 0 ≤ f_min < f_max"));
        }
        Ok(())
    }
}

/// Symmetric two-level telegraph with autocorrelation `exp(−Γ|τ|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TelegraphSpec {
    /// Γ in rad/s; each direction switches at Γ/2.
    pub gamma: f64,
}

impl TelegraphSpec {
    pub fn knee_hz(&self) -> f64 {
        self.gamma / TAU
    }

    pub fn switching_rate(&self) -> f64 {
        self.gamma / 2.0
    }
}

/// Poisson impingement of discrete charges on the sensing area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpProcessSpec {
    /// Particles per cm² per second.
    pub flux: f64,
    /// cm².
    pub sensing_area: f64,
}

impl JumpProcessSpec {
    /// 17 /cm²·s on the area that yields one event per 250 s.
    pub fn qubit_a() -> Self {
        Self {
            flux: 17.0,
            sensing_area: 1.0 / (250.0 * 17.0),
        }
    }

    pub fn rate(&self) -> f64 {
        self.flux * self.sensing_area
    }
}

/// Draws signed induced-charge values (in e) for impingement events.
pub trait JumpSizeSampler {
    fn sample_size(&self, rng: &mut dyn rand::RngCore) -> f64;
}

/// Every event moves the offset charge by the same magnitude, random sign.
#[derive(Debug, Clone, Copy)]
pub struct FixedJumpSize(pub f64);

impl JumpSizeSampler for FixedJumpSize {
    fn sample_size(&self, rng: &mut dyn rand::RngCore) -> f64 {
        if rng.random::<bool>() {
            self.0
        } else {
            -self.0
        }
    }
}

/// 1/f^α flux noise plus a coherent fraction `correlation` of the charge series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluxNoiseSpec {
    /// Φ₀²/Hz at 1 Hz.
    pub amplitude_at_1hz: f64,
    pub exponent: f64,
    #[serde(default)]
    pub correlation: f64,
}

impl Default for FluxNoiseSpec {
    fn default() -> Self {
        Self {
            amplitude_at_1hz: 1e-10,
            exponent: 1.0,
            correlation: 0.0,
        }
    }
}

impl FluxNoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude_at_1hz >= 0.0) {
            return Err(invalid("flux amplitude must be non-negative"));
        }
        if !(self.correlation.abs() <= 1.0) {
            return Err(invalid("flux correlation must lie in [-1, 1]"));
        }
        if !(self.exponent >= 0.0 && self.exponent < 3.0) {
            return Err(invalid("flux exponent outside [0, 3)"));
        }
        Ok(())
    }
}

/// Which generators contribute to an environment.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    pub charge: Option<PowerLawSpec>,
    pub parity: Option<TelegraphSpec>,
    pub jumps: Option<JumpProcessSpec>,
    pub flux: Option<FluxNoiseSpec>,
}

impl EnvironmentSpec {
    /// Power-law charge background, 255 Hz parity telegraph, 17/cm²·s jumps,
    /// and uncorrelated 1/f flux noise.
    pub fn qubit_a() -> Self {
        Self {
            charge: Some(PowerLawSpec::qubit_a_charge()),
            parity: Some(TelegraphSpec { gamma: TAU * 255.0 }),
            jumps: Some(JumpProcessSpec::qubit_a()),
            flux: Some(FluxNoiseSpec::default()),
        }
    }
}

/// Sampled environment on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentTrace {
    pub dt: f64,
    /// Total offset-charge fluctuation δn_g in e.
    pub charge_e: Vec<f64>,
    pub parity: Vec<i8>,
    /// Flux in Φ₀.
    pub flux: Vec<f64>,
    pub seed: u64,
}

impl EnvironmentTrace {
    pub fn len(&self) -> usize {
        self.charge_e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.charge_e.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 * self.dt
    }

    /// Index of the sample holding time `t` (zero-order hold). Times within
    /// 1e-9 samples of a boundary belong to the later sample.
    pub fn index_at(&self, t: f64) -> Result<usize> {
        let i = (t / self.dt + 1e-9).floor();
        if !(i >= 0.0) || i as usize >= self.len() {
            return Err(Error::EnvironmentTooShort {
                required: t,
                available: self.duration(),
            });
        }
        Ok(i as usize)
    }

    pub fn ensure_covers(&self, t_end: f64) -> Result<()> {
        // a tiny tolerance so that grids ending exactly on the last sample pass
        if t_end > self.duration() + 1e-9 * self.dt.max(1.0) {
            return Err(Error::EnvironmentTooShort {
                required: t_end,
                available: self.duration(),
            });
        }
        Ok(())
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }
}

/// Gaussian series whose ensemble-mean one-sided periodogram equals the
/// target power law; DC is zero.
pub fn synth_power_law(spec: &PowerLawSpec, n: usize, dt: f64, seed: u64) -> Result<Vec<f64>> {
    let mut rng = stream(seed, Substream::PowerLaw);
    synth_power_law_with(spec, n, dt, &mut rng)
}

pub(crate) fn synth_power_law_with<R: Rng + ?Sized>(
    spec: &PowerLawSpec,
    n: usize,
    dt: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    spec.validate()?;
    if n < 2 {
        return Err(Error::SeriesTooShort {
            required: 2,
            got: n,
        });
    }
    if !(dt > 0.0) {
        return Err(invalid("dt must be positive"));
    }
    let target = |f: f64| -> f64 {
        if f > spec.f_max {
            0.0
        } else {
            spec.amplitude_at_1hz / f.max(spec.f_min).powf(spec.exponent)
        }
    };
    let df = 1.0 / (n as f64 * dt);
    let mut bins = vec![Complex64::new(0.0, 0.0); n];
    let half = n / 2;
    for k in 1..=(n - 1) / 2 {
        // periodogram 2·dt·n·|X_k|² must average to S(f_k)
        let scale = (target(k as f64 * df) / (4.0 * dt * n as f64)).sqrt();
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        bins[k] = Complex64::new(re * scale, im * scale);
        bins[n - k] = bins[k].conj();
    }
    if n.is_multiple_of(2) {
        let scale = (target(half as f64 * df) / (dt * n as f64)).sqrt();
        let re: f64 = StandardNormal.sample(rng);
        bins[half] = Complex64::new(re * scale, 0.0);
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut bins);
    Ok(bins.into_iter().map(|c| c.re).collect())
}

/// Markov telegraph sampled exactly on the grid: the flip probability per step
/// is `(1 − e^{−Γ·dt})/2`, so the sampled autocorrelation is `e^{−Γ|τ|}`.
pub fn synth_telegraph(spec: &TelegraphSpec, n: usize, dt: f64, seed: u64) -> Vec<i8> {
    let mut rng = stream(seed, Substream::Telegraph);
    synth_telegraph_with(spec, n, dt, &mut rng)
}

pub(crate) fn synth_telegraph_with<R: Rng + ?Sized>(
    spec: &TelegraphSpec,
    n: usize,
    dt: f64,
    rng: &mut R,
) -> Vec<i8> {
    if spec.knee_hz() * dt >= 0.5 {
        log::warn!(
            "telegraph knee {:.3} Hz is above the sampling Nyquist {:.3} Hz",
            spec.knee_hz(),
            0.5 / dt
        );
    }
    let p_flip = 0.5 * (1.0 - (-spec.gamma * dt).exp());
    let mut state: i8 = if rng.random::<bool>() { 1 } else { -1 };
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(state);
        if rng.random::<f64>() < p_flip {
            state = -state;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub size_e: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpSeries {
    /// Cumulative offset charge (e) at each grid time.
    pub staircase: Vec<f64>,
    pub events: Vec<JumpEvent>,
}

pub fn synth_jumps(
    spec: &JumpProcessSpec,
    sampler: &dyn JumpSizeSampler,
    n: usize,
    dt: f64,
    seed: u64,
) -> Result<JumpSeries> {
    let mut rng = stream(seed, Substream::Jumps);
    synth_jumps_with(spec, sampler, n, dt, &mut rng)
}

pub(crate) fn synth_jumps_with<R: Rng>(
    spec: &JumpProcessSpec,
    sampler: &dyn JumpSizeSampler,
    n: usize,
    dt: f64,
    rng: &mut R,
) -> Result<JumpSeries> {
    if !(spec.flux >= 0.0 && spec.sensing_area >= 0.0) {
        return Err(invalid("jump flux and sensing area must be non-negative"));
    }
    let rate = spec.rate();
    let horizon = n as f64 * dt;
    let mut events = Vec::new();
    if rate > 0.0 {
        let waiting = Exp::new(rate).map_err(|e| invalid(e.to_string()))?;
        let mut t = 0.0;
        loop {
            t += waiting.sample(rng);
            if t >= horizon {
                break;
            }
            let size_e = sampler.sample_size(rng);
            events.push(JumpEvent { time: t, size_e });
        }
    }
    let mut staircase = Vec::with_capacity(n);
    let mut level = 0.0;
    let mut next = 0;
    for i in 0..n {
        let t = i as f64 * dt;
        while next < events.len() && events[next].time <= t {
            level += events[next].size_e;
            next += 1;
        }
        staircase.push(level);
    }
    Ok(JumpSeries { staircase, events })
}

/// Builds the composite environment from independent, fixed-label substreams.
pub fn compose_environment(
    spec: &EnvironmentSpec,
    sampler: Option<&dyn JumpSizeSampler>,
    duration: f64,
    dt: f64,
    seed: u64,
) -> Result<EnvironmentTrace> {
    if !(dt > 0.0) || !(duration >= 0.0) {
        return Err(invalid("duration must be ≥ 0 and dt > 0"));
    }
    let n_f = (duration / dt).ceil();
    if !n_f.is_finite() || n_f > MAX_ENV_SAMPLES as f64 {
        return Err(invalid(format!(
            "duration/dt = {n_f:.3e} samples exceeds the {MAX_ENV_SAMPLES} limit"
        )));
    }
    let n = n_f as usize;

    let mut charge_e = match spec.charge {
        Some(pl) if n >= 2 => synth_power_law(&pl, n, dt, seed)?,
        _ => vec![0.0; n],
    };
    let mut events = Vec::new();
    if let Some(jumps) = spec.jumps {
        let sampler =
            sampler.ok_or_else(|| invalid("jump process configured without a size sampler"))?;
        let series = synth_jumps(&jumps, sampler, n, dt, seed)?;
        for (c, j) in charge_e.iter_mut().zip(&series.staircase) {
            *c += j;
        }
        events = series.events;
    }
    log::debug!("environment: {n} samples, {} jump events", events.len());

    let parity = match spec.parity {
        Some(tel) => synth_telegraph(&tel, n, dt, seed),
        None => vec![1; n],
    };

    let flux = match spec.flux {
        Some(fx) if n >= 2 => {
            fx.validate()?;
            let c = fx.correlation;
            let own = if fx.amplitude_at_1hz > 0.0 && c.abs() < 1.0 {
                let pl = PowerLawSpec::new(fx.amplitude_at_1hz, fx.exponent);
                let mut rng = stream(seed, Substream::Flux);
                synth_power_law_with(&pl, n, dt, &mut rng)?
            } else {
                vec![0.0; n]
            };
            // coherent part carries the flux amplitude on the charge spectrum
            let scale = match spec.charge {
                Some(pl) if fx.amplitude_at_1hz > 0.0 => {
                    (fx.amplitude_at_1hz / pl.amplitude_at_1hz).sqrt()
                }
                _ => 1.0,
            };
            let keep = (1.0 - c * c).max(0.0).sqrt();
            own.iter()
                .zip(&charge_e)
                .map(|(f, q)| keep * f + c * scale * q)
                .collect()
        }
        _ => vec![0.0; n],
    };

    Ok(EnvironmentTrace {
        dt,
        charge_e,
        parity,
        flux,
        seed,
    })
}

/// Closed-form one-sided PSD of a generator.
pub trait AnalyticPsd {
    fn psd(&self, f: f64) -> f64;
}

impl AnalyticPsd for PowerLawSpec {
    fn psd(&self, f: f64) -> f64 {
        if f > self.f_max {
            0.0
        } else {
            self.amplitude_at_1hz / f.max(self.f_min).powf(self.exponent)
        }
    }
}

impl AnalyticPsd for TelegraphSpec {
    /// `4Γ/(Γ² + (2πf)²)`: unit variance, half power at Γ/2π.
    fn psd(&self, f: f64) -> f64 {
        let w = TAU * f;
        4.0 * self.gamma / (self.gamma * self.gamma + w * w)
    }
}

pub fn analytic_psd<'a, S: AnalyticPsd>(spec: &'a S) -> impl Fn(f64) -> f64 + 'a {
    move |f| spec.psd(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    fn var(v: &[f64]) -> f64 {
        let m = mean(v);
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
    }

    #[test]
    fn white_power_law_has_requested_variance() {
        let sigma2 = 0.3;
        let dt = 0.01;
        let spec = PowerLawSpec::new(sigma2 * 2.0 * dt, 0.0);
        let x = synth_power_law(&spec, 1 << 20, dt, 11).unwrap();
        let v = var(&x);
        assert!((v / sigma2 - 1.0).abs() < 0.05, "variance {v}");
        assert!(mean(&x).abs() < 1e-12);
    }

    #[test]
    fn power_law_rejects_bad_specs() {
        assert!(synth_power_law(&PowerLawSpec::new(1.0, 3.0), 16, 1.0, 0).is_err());
        assert!(synth_power_law(&PowerLawSpec::new(0.0, 1.0), 16, 1.0, 0).is_err());
        assert!(synth_power_law(&PowerLawSpec::new(1.0, 1.0), 1, 1.0, 0).is_err());
    }

    #[test]
    fn generators_are_deterministic() {
        let spec = PowerLawSpec::qubit_a_charge();
        assert_eq!(
            synth_power_law(&spec, 1000, 0.5, 3).unwrap(),
            synth_power_law(&spec, 1000, 0.5, 3).unwrap()
        );
        let tel = TelegraphSpec { gamma: 100.0 };
        assert_eq!(
            synth_telegraph(&tel, 1000, 1e-3, 3),
            synth_telegraph(&tel, 1000, 1e-3, 3)
        );
        assert_ne!(
            synth_telegraph(&tel, 1000, 1e-3, 3),
            synth_telegraph(&tel, 1000, 1e-3, 4)
        );
    }

    #[test]
    fn telegraph_is_symmetric_and_freezes_without_rate() {
        let tel = TelegraphSpec { gamma: TAU * 255.0 };
        let n = 1 << 20;
        let s = synth_telegraph(&tel, n, 1e-4, 5);
        let m = s.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
        // correlated samples: effective count n·(1−ρ)/(1+ρ) with ρ = e^{−Γdt}
        let rho = (-tel.gamma * 1e-4).exp();
        let sigma = ((1.0 + rho) / (1.0 - rho) / n as f64).sqrt();
        assert!(m.abs() < 3.0 * sigma, "mean {m} vs 3σ {}", 3.0 * sigma);
        let frozen = synth_telegraph(&TelegraphSpec { gamma: 0.0 }, 500, 1e-4, 5);
        assert!(frozen.iter().all(|&v| v == frozen[0]));
    }

    #[test]
    fn telegraph_autocorrelation_matches_exponential() {
        let tel = TelegraphSpec { gamma: 2000.0 };
        let dt = 1e-4;
        let s: Vec<f64> = synth_telegraph(&tel, 1 << 20, dt, 8)
            .into_iter()
            .map(f64::from)
            .collect();
        for lag in [1usize, 3, 5] {
            let c =
                s.iter().zip(&s[lag..]).map(|(a, b)| a * b).sum::<f64>() / (s.len() - lag) as f64;
            let expected = (-tel.gamma * dt * lag as f64).exp();
            assert!((c - expected).abs() < 0.02, "lag {lag}: {c} vs {expected}");
        }
    }

    #[test]
    fn jump_rate_matches_flux_times_area() {
        let spec = JumpProcessSpec {
            flux: 17.0,
            sensing_area: 2.35e-4,
        };
        let dt = 1.0;
        let n = 250 * 600;
        let series = synth_jumps(&spec, &FixedJumpSize(0.3), n, dt, 21).unwrap();
        let k = series.events.len();
        assert!(k >= 400, "{k} events");
        let mean_gap = n as f64 * dt / k as f64;
        assert!((mean_gap / 250.0 - 1.0).abs() < 0.15, "mean gap {mean_gap}");
        assert!(series.events.iter().all(|e| e.size_e.abs() <= 1.0));
        // staircase bookkeeping
        let total: f64 = series.events.iter().map(|e| e.size_e).sum();
        assert!((series.staircase.last().unwrap() - total).abs() < 1e-9);
    }

    #[test]
    fn zero_flux_gives_flat_staircase() {
        let spec = JumpProcessSpec {
            flux: 0.0,
            sensing_area: 1e-4,
        };
        let series = synth_jumps(&spec, &FixedJumpSize(0.3), 1000, 1.0, 1).unwrap();
        assert!(series.events.is_empty());
        assert!(series.staircase.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_spec_composes_to_zero_traces() {
        let env = compose_environment(&EnvironmentSpec::default(), None, 10.0, 0.1, 1).unwrap();
        assert_eq!(env.len(), 100);
        assert!(env.charge_e.iter().all(|&v| v == 0.0));
        assert!(env.flux.iter().all(|&v| v == 0.0));
        assert!(env.parity.iter().all(|&v| v == 1));
    }

    #[test]
    fn compose_guards_sizes() {
        let spec = EnvironmentSpec::default();
        assert!(compose_environment(&spec, None, 1e12, 1e-6, 0).is_err());
        assert!(compose_environment(&spec, None, 1.0, 0.0, 0).is_err());
        let empty = compose_environment(&spec, None, 0.0, 1.0, 0).unwrap();
        assert!(empty.is_empty());
        let jumps = EnvironmentSpec {
            jumps: Some(JumpProcessSpec::qubit_a()),
            ..Default::default()
        };
        assert!(compose_environment(&jumps, None, 10.0, 1.0, 0).is_err());
    }

    #[test]
    fn substreams_are_independent() {
        let spec = EnvironmentSpec {
            charge: Some(PowerLawSpec::new(1.0, 0.0)),
            flux: Some(FluxNoiseSpec {
                amplitude_at_1hz: 1.0,
                exponent: 0.0,
                correlation: 0.0,
            }),
            ..Default::default()
        };
        let n = 1 << 16;
        let env = compose_environment(&spec, None, n as f64, 1.0, 99).unwrap();
        let (q, f) = (&env.charge_e, &env.flux);
        let r =
            q.iter().zip(f).map(|(a, b)| a * b).sum::<f64>() / (var(q) * var(f)).sqrt() / n as f64;
        assert!(r.abs() < 3.0 / (n as f64).sqrt(), "lag-0 correlation {r}");
        // adding a generator leaves the others untouched
        let with_parity = EnvironmentSpec {
            parity: Some(TelegraphSpec { gamma: 1.0 }),
            ..spec
        };
        let env2 = compose_environment(&with_parity, None, n as f64, 1.0, 99).unwrap();
        assert_eq!(env.charge_e, env2.charge_e);
        assert_eq!(env.flux, env2.flux);
    }

    #[test]
    fn full_correlation_copies_scaled_charge() {
        let spec = EnvironmentSpec {
            charge: Some(PowerLawSpec::new(4.0, 1.0)),
            flux: Some(FluxNoiseSpec {
                amplitude_at_1hz: 1.0,
                exponent: 1.0,
                correlation: 1.0,
            }),
            ..Default::default()
        };
        let env = compose_environment(&spec, None, 1000.0, 1.0, 3).unwrap();
        for (f, q) in env.flux.iter().zip(&env.charge_e) {
            assert!((f - 0.5 * q).abs() < 1e-12);
        }
    }

    #[test]
    fn telegraph_psd_integrates_to_unit_variance() {
        let tel = TelegraphSpec { gamma: TAU * 255.0 };
        let f_max = 100.0 * tel.knee_hz();
        // Simpson on a log grid
        let n = 20_000;
        let (a, b) = (1e-6_f64.ln(), f_max.ln());
        let h = (b - a) / n as f64;
        let g = |u: f64| {
            let f = u.exp();
            tel.psd(f) * f
        };
        let mut s = g(a) + g(b);
        for i in 1..n {
            s += g(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let integral = s * h / 3.0;
        assert!((integral - 1.0).abs() < 0.01, "integral {integral}");
        // half power at the knee, 1/f² tail
        assert!((tel.psd(tel.knee_hz()) / tel.psd(0.0) - 0.5).abs() < 1e-12);
        let tail = tel.psd(1e5) / tel.psd(2e5);
        assert!((tail - 4.0).abs() < 1e-3);
        let pl = PowerLawSpec::qubit_a_charge();
        assert_eq!(analytic_psd(&pl)(1.0), 2.9e-4);
    }
}
