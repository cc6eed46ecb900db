//! Charge-flux cross-spectra from interleaved charge and flux readouts.
//!
//! The low band alternates a charge scan with a flux Ramsey fringe in fixed
//! slots and cross-correlates the two slow series. The high band runs the
//! three-shot cycle (flux, parity, charge) and cross-correlates the per-cycle
//! estimates. Either way the result is reported as the normalised magnitude
//! |S_qΦ|/√(S_q·S_Φ) next to its statistical floor 1/√N.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::estimation::{build_trace, fit_charge_scan, fit_ramsey_phase};
use crate::io::write_csv_file;
use crate::model::{alias_charge_delta, DeviceParams};
use crate::noise::EnvironmentTrace;
use crate::pulse::{
    evolve_bloch, run_charge_scan, Conditioner, FastProtocolConfig, FastProtocolRunner,
    FluxShotConfig, PulseSequence, ScanPlan,
};
use crate::rng::{stream, Substream};
use crate::spectral::{cross_psd, CrossSpectrum, Window};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpsdReport {
    pub freqs: Vec<f64>,
    pub s_q: Vec<f64>,
    pub s_phi: Vec<f64>,
    pub s_qphi_mag: Vec<f64>,
    pub normalized: Vec<f64>,
    /// 1/√N for the averages behind each row.
    pub floor: Vec<f64>,
}

impl CpsdReport {
    pub fn from_cross(cs: &CrossSpectrum) -> Self {
        let floor = 1.0 / (cs.cross.n_averages as f64).sqrt();
        Self {
            freqs: cs.freqs().to_vec(),
            s_q: cs.psd_a.values.clone(),
            s_phi: cs.psd_b.values.clone(),
            s_qphi_mag: cs.magnitude(),
            normalized: cs.normalized.clone(),
            floor: vec![floor; cs.freqs().len()],
        }
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    fn rows_in(&self, f_lo: f64, f_hi: f64) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| self.freqs[i] >= f_lo && self.freqs[i] < f_hi)
    }

    /// Root-mean-square normalised magnitude over `f_lo ≤ f < f_hi`; for
    /// independent series its expectation is exactly the floor.
    pub fn normalized_rms(&self, f_lo: f64, f_hi: f64) -> Option<f64> {
        let v: Vec<f64> = self
            .rows_in(f_lo, f_hi)
            .map(|i| self.normalized[i])
            .collect();
        (!v.is_empty()).then(|| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt())
    }

    pub fn normalized_median(&self, f_lo: f64, f_hi: f64) -> Option<f64> {
        let mut v: Vec<f64> = self
            .rows_in(f_lo, f_hi)
            .map(|i| self.normalized[i])
            .collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(v[v.len() / 2])
    }

    pub fn flux_psd_mean(&self, f_lo: f64, f_hi: f64) -> Option<f64> {
        let v: Vec<f64> = self.rows_in(f_lo, f_hi).map(|i| self.s_phi[i]).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn cross_mean(&self, f_lo: f64, f_hi: f64) -> Option<f64> {
        let v: Vec<f64> = self
            .rows_in(f_lo, f_hi)
            .map(|i| self.s_qphi_mag[i])
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Low band below its last bin, high band above.
    pub fn stitch(low: &CpsdReport, high: &CpsdReport) -> CpsdReport {
        let cut = low.freqs.last().copied().unwrap_or(0.0);
        let mut out = low.clone();
        for i in high.rows_in(cut * (1.0 + 1e-12), f64::INFINITY) {
            out.freqs.push(high.freqs[i]);
            out.s_q.push(high.s_q[i]);
            out.s_phi.push(high.s_phi[i]);
            out.s_qphi_mag.push(high.s_qphi_mag[i]);
            out.normalized.push(high.normalized[i]);
            out.floor.push(high.floor[i]);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            f_hz: f64,
            s_q: f64,
            s_phi: f64,
            s_qphi_mag: f64,
            floor: f64,
            normalized: f64,
        }
        let rows = (0..self.len()).map(|i| Row {
            f_hz: self.freqs[i],
            s_q: self.s_q[i],
            s_phi: self.s_phi[i],
            s_qphi_mag: self.s_qphi_mag[i],
            floor: self.floor[i],
            normalized: self.normalized[i],
        });
        write_csv_file(
            path,
            &["f_hz", "s_q", "s_phi", "s_qphi_mag", "floor", "normalized"],
            rows,
        )
    }
}

/// Upper bound on the normalised correlation near `f`: the median magnitude
/// over [f/2, 2f], never below the statistical floor.
pub fn correlation_bound(report: &CpsdReport, f: f64) -> Option<f64> {
    let median = report.normalized_median(f / 2.0, 2.0 * f)?;
    let floor = report
        .rows_in(f / 2.0, 2.0 * f)
        .map(|i| report.floor[i])
        .fold(0.0, f64::max);
    Some(median.max(floor))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LowBandConfig {
    pub n_spectra: usize,
    pub slots_per_spectrum: usize,
    /// One charge scan followed by one flux fringe.
    pub slot: f64,
    pub charge_scan: ScanPlan,
    pub flux_phases: usize,
    pub flux_shots_per_phase: usize,
    pub flux: FluxShotConfig,
}

impl Default for LowBandConfig {
    fn default() -> Self {
        Self {
            n_spectra: 250,
            slots_per_spectrum: 10,
            slot: 20.0,
            charge_scan: ScanPlan {
                n_points: 25,
                shots_per_point: 6,
                span: 15.0,
            },
            flux_phases: 8,
            flux_shots_per_phase: 125,
            flux: FluxShotConfig::default(),
        }
    }
}

impl LowBandConfig {
    pub fn duration(&self) -> f64 {
        (self.n_spectra * self.slots_per_spectrum) as f64 * self.slot
    }

    /// Spectral rate 1/(slots·slot).
    pub fn spectrum_rate(&self) -> f64 {
        1.0 / (self.slots_per_spectrum as f64 * self.slot)
    }

    pub fn validate(&self) -> Result<()> {
        self.charge_scan.validate()?;
        self.flux.validate()?;
        if self.n_spectra == 0 || self.slots_per_spectrum < 4 {
            return Err(invalid("low band needs ≥ 1 spectrum of ≥ 4 slots"));
        }
        if self.flux_phases < 3 || self.flux_shots_per_phase == 0 {
            return Err(invalid("flux fringe needs ≥ 3 phases and ≥ 1 shot"));
        }
        if !(self.charge_scan.span < self.slot) {
            return Err(invalid("charge scan must leave room for the flux fringe"));
        }
        Ok(())
    }
}

/// Slow interleaved charge and flux series, one sample of each per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlowSeries {
    pub t: Vec<f64>,
    pub charge_e: Vec<f64>,
    pub flux_phi: Vec<f64>,
}

impl SlowSeries {
    pub fn report(&self, cfg: &LowBandConfig) -> Result<CpsdReport> {
        let cs = cross_psd(
            &self.charge_e,
            &self.flux_phi,
            cfg.slot,
            cfg.n_spectra,
            Window::Hann,
        )?;
        Ok(CpsdReport::from_cross(&cs))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_series(path, &self.t, &self.charge_e, &self.flux_phi)
    }
}

fn write_series(path: &Path, t: &[f64], q: &[f64], phi: &[f64]) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        t_s: f64,
        charge_e: f64,
        flux_phi: f64,
    }
    let rows = (0..t.len()).map(|i| Row {
        t_s: t[i],
        charge_e: q[i],
        flux_phi: phi[i],
    });
    write_csv_file(path, &["t_s", "charge_e", "flux_phi"], rows)
}

pub fn run_low_band_series(
    env: &EnvironmentTrace,
    params: &DeviceParams,
    cfg: &LowBandConfig,
    seed: u64,
) -> Result<SlowSeries> {
    cfg.validate()?;
    env.ensure_covers(cfg.duration())?;
    let n_slots = cfg.n_spectra * cfg.slots_per_spectrum;
    let mut rng = stream(seed, Substream::Shots);
    let (d, nu) = (params.decay_d, params.visibility_nu);
    let fringe_span = cfg.slot - cfg.charge_scan.span;
    let n_flux = cfg.flux_phases * cfg.flux_shots_per_phase;
    let thetas: Vec<f64> = (0..cfg.flux_phases)
        .map(|j| TAU * j as f64 / cfg.flux_phases as f64)
        .collect();
    let seqs: Vec<PulseSequence> = thetas
        .iter()
        .map(|&th| PulseSequence::ramsey(cfg.flux.idle, th))
        .collect();
    let to_flux = 1.0 / (cfg.flux.slope * cfg.flux.idle);

    let mut fits = Vec::with_capacity(n_slots);
    let mut flux_phase = Vec::with_capacity(n_slots);
    let mut t = Vec::with_capacity(n_slots);
    let mut prior: Option<f64> = None;
    let mut bias_e = 0.0;
    let mut last_phase: Option<f64> = None;
    for m in 0..n_slots {
        let t0 = m as f64 * cfg.slot;
        let scan = run_charge_scan(env, params, &cfg.charge_scan, t0, &mut rng)?;
        let fit = fit_charge_scan(&scan, prior)?;
        if fit.usable() {
            bias_e = fit.delta_e;
            prior = Some(fit.delta_e);
        }
        fits.push(fit);

        let tf = t0 + cfg.charge_scan.span;
        let mut ones = vec![0usize; cfg.flux_phases];
        for s in 0..n_flux {
            let j = s % cfg.flux_phases;
            let ts = tf + s as f64 * fringe_span / n_flux as f64;
            let i = env.index_at(ts)?;
            let res = alias_charge_delta(env.charge_e[i] - bias_e);
            let det = cfg.flux.slope * env.flux[i] + cfg.flux.curvature * res * res;
            let p = evolve_bloch(&seqs[j], &[det], d, nu)?;
            if rng.random::<f64>() < p {
                ones[j] += 1;
            }
        }
        let p1: Vec<f64> = ones
            .iter()
            .map(|&c| c as f64 / cfg.flux_shots_per_phase as f64)
            .collect();
        let phase = fit_ramsey_phase(&thetas, &p1)?.phase;
        let unwrapped = match last_phase {
            None => phase,
            Some(prev) => prev + wrap_angle(phase - prev),
        };
        last_phase = Some(unwrapped);
        flux_phase.push(unwrapped);
        t.push(t0);
    }
    let trace = build_trace(&fits);
    Ok(SlowSeries {
        t,
        charge_e: trace.value_e,
        flux_phi: flux_phase.iter().map(|p| p * to_flux).collect(),
    })
}

fn wrap_angle(x: f64) -> f64 {
    x - TAU * ((x + PI) / TAU).floor()
}

pub fn run_low_bandwidth_cpsd(
    env: &EnvironmentTrace,
    params: &DeviceParams,
    cfg: &LowBandConfig,
    seed: u64,
) -> Result<CpsdReport> {
    run_low_band_series(env, params, cfg, seed)?.report(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HighBandConfig {
    pub segment_len: usize,
    pub n_spectra: usize,
    pub flux: FluxShotConfig,
}

impl Default for HighBandConfig {
    fn default() -> Self {
        Self {
            segment_len: 1 << 14,
            n_spectra: 100,
            flux: FluxShotConfig::default(),
        }
    }
}

impl HighBandConfig {
    /// Protocol duration including the initial calibration scan.
    pub fn duration(&self, params: &DeviceParams) -> f64 {
        let calib = (params.scan_points * params.shots_per_point) as f64;
        ((self.segment_len * self.n_spectra) as f64 + calib + 1.0) / params.shot_rate
    }
}

/// Per-cycle conditioned charge and flux estimates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FastSeries {
    pub t: Vec<f64>,
    pub charge_e: Vec<f64>,
    pub flux_phi: Vec<f64>,
}

impl FastSeries {
    pub fn report(&self, params: &DeviceParams, cfg: &HighBandConfig) -> Result<CpsdReport> {
        let cs = cross_psd(
            &self.charge_e,
            &self.flux_phi,
            1.0 / params.shot_rate,
            cfg.n_spectra,
            Window::Hann,
        )?;
        Ok(CpsdReport::from_cross(&cs))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_series(path, &self.t, &self.charge_e, &self.flux_phi)
    }
}

pub fn run_high_band_series(
    env: &EnvironmentTrace,
    params: &DeviceParams,
    cfg: &HighBandConfig,
    seed: u64,
) -> Result<FastSeries> {
    if cfg.segment_len < 4 || cfg.n_spectra == 0 {
        return Err(invalid("high band needs segments of ≥ 4 samples"));
    }
    let fast = FastProtocolConfig {
        duration: cfg.duration(params),
        flux: Some(cfg.flux),
        ..Default::default()
    };
    let mut runner = FastProtocolRunner::new(env, params, &fast, seed)?;
    let mut cond = Conditioner::new(params, Some(&cfg.flux));
    let want = cfg.segment_len * cfg.n_spectra;
    let mut out = FastSeries::default();
    while out.t.len() < want && !runner.is_done() {
        for r in runner.next_chunk(1 << 15)? {
            if let Some(s) = cond.push(&r) {
                if let Some(phi) = s.flux_phi {
                    out.t.push(s.t_s);
                    out.charge_e.push(s.charge_e);
                    out.flux_phi.push(phi);
                }
            }
        }
    }
    out.t.truncate(want);
    out.charge_e.truncate(want);
    out.flux_phi.truncate(want);
    Ok(out)
}

pub fn run_high_bandwidth_cpsd(
    env: &EnvironmentTrace,
    params: &DeviceParams,
    cfg: &HighBandConfig,
    seed: u64,
) -> Result<CpsdReport> {
    run_high_band_series(env, params, cfg, seed)?.report(params, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{compose_environment, EnvironmentSpec, FluxNoiseSpec, PowerLawSpec};

    fn env_low(correlation: f64, cfg: &LowBandConfig, seed: u64) -> EnvironmentTrace {
        let spec = EnvironmentSpec {
            charge: Some(PowerLawSpec::qubit_a_charge()),
            flux: Some(FluxNoiseSpec {
                correlation,
                ..Default::default()
            }),
            ..Default::default()
        };
        compose_environment(&spec, None, cfg.duration(), 0.1, seed).unwrap()
    }

    #[test]
    fn low_band_floor_and_correlation() {
        let p = DeviceParams::qubit_a();
        let cfg = LowBandConfig {
            n_spectra: 40,
            ..Default::default()
        };
        let quiet = run_low_bandwidth_cpsd(&env_low(0.0, &cfg, 1), &p, &cfg, 1).unwrap();
        let rms = quiet.normalized_rms(0.0, 1.0).unwrap();
        assert!(rms * (40f64).sqrt() < 2.0, "{rms}");
        let loud = run_low_bandwidth_cpsd(&env_low(1.0, &cfg, 1), &p, &cfg, 1).unwrap();
        assert!(loud.normalized_median(0.0, 1.0).unwrap() > 2.0 * rms);
        assert_eq!(quiet.len(), 5);
    }

    #[test]
    fn bound_respects_floor() {
        let r = CpsdReport {
            freqs: vec![0.5, 1.0, 1.5],
            s_q: vec![1.0; 3],
            s_phi: vec![1.0; 3],
            s_qphi_mag: vec![0.01; 3],
            normalized: vec![0.01, 0.02, 0.03],
            floor: vec![0.1; 3],
        };
        assert_eq!(correlation_bound(&r, 1.0), Some(0.1));
        assert_eq!(correlation_bound(&r, 100.0), None);
        let stitched = CpsdReport::stitch(&r, &r);
        assert_eq!(stitched.len(), 3);
    }

    #[test]
    fn angle_wrapping() {
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(-0.3) + 0.3).abs() < 1e-15);
    }
}
