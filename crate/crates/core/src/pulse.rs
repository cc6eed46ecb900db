//! Pulse sequences executed against a sampled environment.
//!
//! Gates are instantaneous π/2 rotations about an axis in the equatorial
//! plane; idles rotate the Bloch vector about z by the accumulated detuning.
//! Readout folds the ideal z-projection through the decay offset `d` and the
//! visibility `ν`: P₁ = ½[d − ν·z], starting from the ground state z = +1.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimation::{fit_charge_scan, ChargeFit};
use crate::io::{write_csv_file, ChunkedCsvWriter};
use crate::model::{alias_charge_delta, DeviceParams};
use crate::noise::EnvironmentTrace;
use crate::rng::{stream, Substream};

pub const GATE_DURATION: f64 = 40e-9;
/// Cavity ring-down between the parity and charge shots of one cycle.
pub const DEAD_TIME: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    /// π/2 rotation about (cos θ, sin θ, 0).
    HalfPi(f64),
    Idle(f64),
    Measure,
}

impl FromStr for Gate {
    type Err = Error;

    fn from_str(token: &str) -> Result<Self> {
        let unknown = || Error::UnknownGate(token.to_string());
        let arg = |prefix: &str| -> Result<f64> {
            token
                .strip_prefix(prefix)
                .and_then(|r| r.strip_suffix(')'))
                .ok_or_else(unknown)?
                .trim()
                .parse()
                .map_err(|_| unknown())
        };
        match token {
            "X/2" => Ok(Gate::HalfPi(0.0)),
            "Y/2" => Ok(Gate::HalfPi(FRAC_PI_2)),
            "-X/2" => Ok(Gate::HalfPi(PI)),
            "-Y/2" => Ok(Gate::HalfPi(-FRAC_PI_2)),
            "measure" => Ok(Gate::Measure),
            t if t.starts_with("idle(") => {
                let v = arg("idle(")?;
                if !(v >= 0.0) {
                    return Err(Error::InvalidSequence(format!("negative idle in `{t}`")));
                }
                Ok(Gate::Idle(v))
            }
            t if t.starts_with("R/2(") => Ok(Gate::HalfPi(arg("R/2(")?)),
            _ => Err(unknown()),
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Gate::HalfPi(0.0) => write!(f, "X/2"),
            Gate::HalfPi(t) if t == FRAC_PI_2 => write!(f, "Y/2"),
            Gate::HalfPi(t) => write!(f, "R/2({t})"),
            Gate::Idle(t) => write!(f, "idle({t})"),
            Gate::Measure => write!(f, "measure"),
        }
    }
}

/// Ordered gates ending in a single `measure`, plus the bias it runs at.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSequence {
    gates: Vec<Gate>,
    pub gate_duration: f64,
    /// External gate charge in e.
    pub bias_e: f64,
    /// Flux offset in Φ₀.
    pub flux_bias: f64,
}

impl PulseSequence {
    pub fn new(gates: Vec<Gate>) -> Result<Self> {
        match gates.iter().position(|g| *g == Gate::Measure) {
            Some(i) if i + 1 == gates.len() => {}
            _ => {
                return Err(Error::InvalidSequence(
                    "exactly one measure, as the last gate".into(),
                ))
            }
        }
        Ok(Self {
            gates,
            gate_duration: GATE_DURATION,
            bias_e: 0.0,
            flux_bias: 0.0,
        })
    }

    /// Parses whitespace- or comma-separated tokens, e.g. `"X/2 idle(8.3e-7) X/2 measure"`.
    pub fn parse(text: &str) -> Result<Self> {
        let gates = text
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Gate>>>()?;
        Self::new(gates)
    }

    /// Ramsey block `X/2 – idle(t) – R/2(θ) – measure`.
    pub fn ramsey(idle: f64, final_phase: f64) -> Self {
        Self::new(vec![
            Gate::HalfPi(0.0),
            Gate::Idle(idle),
            Gate::HalfPi(final_phase),
            Gate::Measure,
        ])
        .expect("well-formed")
    }

    pub fn with_bias(mut self, bias_e: f64) -> Self {
        self.bias_e = bias_e;
        self
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn n_idles(&self) -> usize {
        self.gates
            .iter()
            .filter(|g| matches!(g, Gate::Idle(_)))
            .count()
    }

    pub fn duration(&self) -> f64 {
        self.gates
            .iter()
            .map(|g| match g {
                Gate::HalfPi(_) => self.gate_duration,
                Gate::Idle(t) => *t,
                Gate::Measure => 0.0,
            })
            .sum()
    }
}

impl fmt::Display for PulseSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tokens: Vec<String> = self.gates.iter().map(Gate::to_string).collect();
        write!(f, "{}", tokens.join(" "))
    }
}

fn half_pi(v: [f64; 3], theta: f64) -> [f64; 3] {
    let (s, c) = theta.sin_cos();
    let dot = c * v[0] + s * v[1];
    // n(n·v) + n×v with n = (c, s, 0)
    [c * dot + s * v[2], s * dot - c * v[2], c * v[1] - s * v[0]]
}

/// Excited-state probability after `seq`, with `detunings[i]` (rad/s) acting
/// during the i-th idle.
pub fn evolve_bloch(seq: &PulseSequence, detunings: &[f64], d: f64, nu: f64) -> Result<f64> {
    if detunings.len() != seq.n_idles() {
        return Err(Error::InvalidSequence(format!(
            "{} idles but {} detunings",
            seq.n_idles(),
            detunings.len()
        )));
    }
    let mut v = [0.0, 0.0, 1.0];
    let mut idle = 0;
    for g in &seq.gates {
        match *g {
            Gate::HalfPi(theta) => v = half_pi(v, theta),
            Gate::Idle(t) => {
                let (s, c) = (detunings[idle] * t).sin_cos();
                v = [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]];
                idle += 1;
            }
            Gate::Measure => break,
        }
    }
    Ok((0.5 * (d - nu * v[2])).clamp(0.0, 1.0))
}

/// Parity-signed charge detuning at a total offset `total_e` (bias + δn_g).
pub fn charge_detuning_e(params: &DeviceParams, total_e: f64, parity: i8) -> f64 {
    f64::from(parity.signum()) * params.dispersion * (PI * total_e).cos()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShotKind {
    Parity,
    Charge,
    Flux,
    Scan,
}

impl ShotKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ShotKind::Parity => "parity",
            ShotKind::Charge => "charge",
            ShotKind::Flux => "flux",
            ShotKind::Scan => "scan",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub t_s: f64,
    pub kind: ShotKind,
    pub outcome: u8,
    /// External gate charge in e.
    pub bias_ng_ext: f64,
    /// Flux bias in Φ₀ at the time of the shot.
    pub bias_flux: f64,
    /// Simulation ground truth, not available to the estimators.
    pub parity_truth: i8,
}

pub const SHOT_HEADER: [&str; 6] = [
    "t_s",
    "kind",
    "outcome",
    "bias_ng_ext",
    "bias_flux",
    "parity_truth",
];

pub fn write_shots_csv(path: &Path, shots: &[ShotRecord]) -> Result<()> {
    write_csv_file(path, &SHOT_HEADER, shots)
}

pub fn shot_writer(dir: &Path, stem: &str, chunk_rows: usize) -> ChunkedCsvWriter<ShotRecord> {
    ChunkedCsvWriter::new(dir, stem, &SHOT_HEADER, chunk_rows)
}

/// Shot budget and wall-clock span of one charge scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanPlan {
    pub n_points: usize,
    pub shots_per_point: usize,
    pub span: f64,
}

impl ScanPlan {
    pub fn from_params(params: &DeviceParams) -> Self {
        Self {
            n_points: params.scan_points,
            shots_per_point: params.shots_per_point,
            span: params.scan_period,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_points < 2 || self.shots_per_point == 0 || !(self.span > 0.0) {
            return Err(invalid(
                "scan plan needs ≥ 2 points, ≥ 1 shot and a positive span",
            ));
        }
        Ok(())
    }

    pub fn total_shots(&self) -> usize {
        self.n_points * self.shots_per_point
    }

    /// Bias of point `k` in e: one 1e period starting at 0.
    pub fn bias_e(&self, k: usize) -> f64 {
        k as f64 / self.n_points as f64
    }

    /// Grid point of the j-th shot; sweeps are repeated back to back.
    pub fn point_of(&self, j: usize) -> usize {
        j % self.n_points
    }

    pub fn shot_time(&self, t_start: f64, j: usize) -> f64 {
        t_start + j as f64 * self.span / self.total_shots() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub t_start: f64,
    pub span: f64,
    pub bias_e: Vec<f64>,
    /// Outcome means (or exact probabilities for an expectation scan).
    pub p1: Vec<f64>,
    /// Zero for an expectation scan.
    pub shots_per_point: usize,
}

fn scan_sequence(params: &DeviceParams) -> PulseSequence {
    PulseSequence::ramsey(params.scan_idle(), 0.0)
}

fn scan_probability(
    env: &EnvironmentTrace,
    params: &DeviceParams,
    seq: &PulseSequence,
    bias_e: f64,
    t: f64,
) -> Result<(f64, i8)> {
    let i = env.index_at(t)?;
    let parity = env.parity[i];
    let det = charge_detuning_e(params, bias_e + env.charge_e[i], parity);
    let p = evolve_bloch(seq, &[det], params.decay_d, params.visibility_nu)?;
    Ok((p, parity))
}

/// One slow scan: every shot reads δn_g and parity at its own timestamp.
pub fn run_charge_scan(
    env: &EnvironmentTrace,
    params: &DeviceParams,
    plan: &ScanPlan,
    t_start: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ScanResult> {
    plan.validate()?;
    env.ensure_covers(t_start + plan.span)?;
    let seq = scan_sequence(params);
    let mut ones = vec![0usize; plan.n_points];
    for j in 0..plan.total_shots() {
        let k = plan.point_of(j);
        let (p, _) = scan_probability(
            env,
            params,
            &seq,
            plan.bias_e(k),
            plan.shot_time(t_start, j),
        )?;
        if rng.random::<f64>() < p {
            ones[k] += 1;
        }
    }
    Ok(ScanResult {
        t_start,
        span: plan.span,
        bias_e: (0..plan.n_points).map(|k| plan.bias_e(k)).collect(),
        p1: ones
            .iter()
            .map(|&c| c as f64 / plan.shots_per_point as f64)
            .collect(),
        shots_per_point: plan.shots_per_point,
    })
}

/// The exact outcome probability per grid point, averaged over the point's
/// shot timestamps.
pub fn scan_expectation(
    env: &EnvironmentTrace,
    params: &DeviceParams,
    plan: &ScanPlan,
    t_start: f64,
) -> Result<ScanResult> {
    plan.validate()?;
    env.ensure_covers(t_start + plan.span)?;
    let seq = scan_sequence(params);
    let mut acc = vec![0.0; plan.n_points];
    for j in 0..plan.total_shots() {
        let k = plan.point_of(j);
        acc[k] += scan_probability(
            env,
            params,
            &seq,
            plan.bias_e(k),
            plan.shot_time(t_start, j),
        )?
        .0;
    }
    Ok(ScanResult {
        t_start,
        span: plan.span,
        bias_e: (0..plan.n_points).map(|k| plan.bias_e(k)).collect(),
        p1: acc
            .iter()
            .map(|a| a / plan.shots_per_point as f64)
            .collect(),
        shots_per_point: 0,
    })
}

/// Back-to-back scans every `period` seconds, fitted with continuity.
pub fn run_scan_series(
    env: &EnvironmentTrace,
    params: &DeviceParams,
    plan: &ScanPlan,
    n_scans: usize,
    period: f64,
    seed: u64,
) -> Result<Vec<ChargeFit>> {
    if period < plan.span {
        return Err(invalid("scan period shorter than the scan span"));
    }
    let mut rng = stream(seed, Substream::Shots);
    let mut prior = None;
    let mut fits = Vec::with_capacity(n_scans);
    for m in 0..n_scans {
        let scan = run_charge_scan(env, params, plan, m as f64 * period, &mut rng)?;
        let fit = fit_charge_scan(&scan, prior)?;
        if fit.usable() {
            prior = Some(fit.delta_e);
        }
        fits.push(fit);
    }
    Ok(fits)
}

/// Flux-sensitive readout used by the three-shot cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluxShotConfig {
    /// dω₁₀/dΦ in rad/s per Φ₀.
    pub slope: f64,
    /// Second-order charge coupling in rad/s per e².
    pub curvature: f64,
    pub idle: f64,
}

impl Default for FluxShotConfig {
    fn default() -> Self {
        Self {
            slope: 2.0 * PI * 1e9,
            curvature: 2.0 * PI * 2.5e5,
            idle: 0.5e-6,
        }
    }
}

impl FluxShotConfig {
    pub fn validate(&self) -> Result<()> {
        if self.slope == 0.0 || !self.slope.is_finite() {
            return Err(invalid("flux slope must be nonzero"));
        }
        if !(self.idle > 0.0) || !self.curvature.is_finite() {
            return Err(invalid("flux idle must be positive"));
        }
        Ok(())
    }

    /// Flux in Φ₀ per unit of centred outcome 2o − 1.
    pub fn transfer(&self, params: &DeviceParams) -> f64 {
        params.visibility_nu * self.slope * self.idle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FastProtocolConfig {
    pub duration: f64,
    pub dead_time: f64,
    /// Offset of the recalibration shot inside its cycle.
    pub scan_offset: f64,
    pub recalibrate: bool,
    pub flux: Option<FluxShotConfig>,
}

impl Default for FastProtocolConfig {
    fn default() -> Self {
        Self {
            duration: 60.0,
            dead_time: DEAD_TIME,
            scan_offset: 50e-6,
            recalibrate: true,
            flux: None,
        }
    }
}

/// Small-signal slope k of the fast charge quadrature, in rad per e.
pub const FAST_CHARGE_SLOPE: f64 = PI * PI / 2.0;

/// Conditioned-output transfer T = −ν²·k: E[y] ≈ (d − 1)² + T·δ.
pub fn fast_transfer(params: &DeviceParams) -> f64 {
    -params.visibility_nu.powi(2) * FAST_CHARGE_SLOPE
}

struct ScanInProgress {
    start_cycle: u64,
    ones: Vec<usize>,
}

/// Streams the fast protocol cycle by cycle. Each cycle is one parity shot,
/// one charge shot after the dead time, an optional leading flux shot, and,
/// during recalibration, one scan shot.
pub struct FastProtocolRunner<'a> {
    env: &'a EnvironmentTrace,
    params: DeviceParams,
    cfg: FastProtocolConfig,
    plan: ScanPlan,
    rng: ChaCha8Rng,
    period: f64,
    n_cycles: u64,
    recal_cycles: u64,
    next_cycle: u64,
    delta_fit: f64,
    calibrated: bool,
    flux_bias: f64,
    flux_sum: f64,
    flux_count: u64,
    scan: Option<ScanInProgress>,
    fits: Vec<ChargeFit>,
    scan_seq: PulseSequence,
    parity_seq: PulseSequence,
    charge_seq: PulseSequence,
    flux_seq: Option<PulseSequence>,
}

impl<'a> FastProtocolRunner<'a> {
    pub fn new(
        env: &'a EnvironmentTrace,
        params: &DeviceParams,
        cfg: &FastProtocolConfig,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        if !(cfg.duration >= 0.0) || !(cfg.dead_time >= 0.0) {
            return Err(invalid("duration and dead time must be non-negative"));
        }
        let period = 1.0 / params.shot_rate;
        if env.dt > period * (1.0 + 1e-9) {
            return Err(invalid(format!(
                "environment dt {} s is coarser than the {} s cycle",
                env.dt, period
            )));
        }
        if let Some(f) = &cfg.flux {
            f.validate()?;
        }
        if cfg.scan_offset >= period {
            return Err(invalid("scan shot offset must fall inside the cycle"));
        }
        let n_cycles = (cfg.duration * params.shot_rate + 1e-9).floor() as u64;
        env.ensure_covers(n_cycles as f64 * period)?;
        let plan = ScanPlan {
            n_points: params.scan_points,
            shots_per_point: params.shots_per_point,
            span: (params.scan_points * params.shots_per_point) as f64 * period,
        };
        let recal_cycles = (params.recal_period * params.shot_rate).round().max(1.0) as u64;
        if cfg.recalibrate && recal_cycles < plan.total_shots() as u64 {
            return Err(invalid("recalibration period shorter than one scan"));
        }
        let fast_idle = FRAC_PI_2 / params.dispersion;
        Ok(Self {
            env,
            params: *params,
            cfg: *cfg,
            plan,
            rng: stream(seed, Substream::Shots),
            period,
            n_cycles,
            recal_cycles,
            next_cycle: 0,
            delta_fit: 0.0,
            calibrated: !cfg.recalibrate,
            flux_bias: 0.0,
            flux_sum: 0.0,
            flux_count: 0,
            scan: None,
            fits: Vec::new(),
            scan_seq: scan_sequence(params),
            parity_seq: PulseSequence::ramsey(fast_idle, FRAC_PI_2),
            charge_seq: PulseSequence::ramsey(fast_idle, FRAC_PI_2),
            flux_seq: cfg.flux.map(|f| PulseSequence::ramsey(f.idle, FRAC_PI_2)),
        })
    }

    pub fn n_cycles(&self) -> u64 {
        self.n_cycles
    }

    pub fn is_done(&self) -> bool {
        self.next_cycle >= self.n_cycles
    }

    /// Recalibration fits so far.
    pub fn fits(&self) -> &[ChargeFit] {
        &self.fits
    }

    /// Current charge bias estimate in e (unwrapped).
    pub fn delta_fit(&self) -> f64 {
        self.delta_fit
    }

    fn shoot(&mut self, p: f64) -> u8 {
        u8::from(self.rng.random::<f64>() < p)
    }

    fn state_at(&self, t: f64) -> Result<(f64, i8, f64)> {
        let i = self.env.index_at(t)?;
        Ok((self.env.charge_e[i], self.env.parity[i], self.env.flux[i]))
    }

    fn run_cycle(&mut self, c: u64, out: &mut Vec<ShotRecord>) -> Result<()> {
        let (d, nu) = (self.params.decay_d, self.params.visibility_nu);
        let t0 = c as f64 * self.period;
        if self.cfg.recalibrate && self.scan.is_none() && c.is_multiple_of(self.recal_cycles) {
            self.scan = Some(ScanInProgress {
                start_cycle: c,
                ones: vec![0; self.plan.n_points],
            });
        }

        if self.calibrated {
            let mut t = t0;
            if let (Some(fc), Some(seq)) = (self.cfg.flux, &self.flux_seq) {
                let (q, s, phi) = self.state_at(t)?;
                let res = alias_charge_delta(q - self.delta_fit);
                let det = fc.slope * (phi - self.flux_bias) + fc.curvature * res * res;
                let p = evolve_bloch(seq, &[det], d, nu)?;
                let o = self.shoot(p);
                self.flux_sum += 2.0 * f64::from(o) - 1.0;
                self.flux_count += 1;
                out.push(ShotRecord {
                    t_s: t,
                    kind: ShotKind::Flux,
                    outcome: o,
                    bias_ng_ext: -self.delta_fit,
                    bias_flux: self.flux_bias,
                    parity_truth: s,
                });
                t += self.cfg.dead_time;
            }
            let bias = -self.delta_fit;
            let (q, s, _) = self.state_at(t)?;
            let p = evolve_bloch(
                &self.parity_seq,
                &[charge_detuning_e(&self.params, bias + q, s)],
                d,
                nu,
            )?;
            let o = self.shoot(p);
            out.push(ShotRecord {
                t_s: t,
                kind: ShotKind::Parity,
                outcome: o,
                bias_ng_ext: bias,
                bias_flux: self.flux_bias,
                parity_truth: s,
            });

            t += self.cfg.dead_time;
            let bias = 0.5 - self.delta_fit;
            let (q, s, _) = self.state_at(t)?;
            let p = evolve_bloch(
                &self.charge_seq,
                &[charge_detuning_e(&self.params, bias + q, s)],
                d,
                nu,
            )?;
            let o = self.shoot(p);
            out.push(ShotRecord {
                t_s: t,
                kind: ShotKind::Charge,
                outcome: o,
                bias_ng_ext: bias,
                bias_flux: self.flux_bias,
                parity_truth: s,
            });
        }

        if let Some(start) = self.scan.as_ref().map(|s| s.start_cycle) {
            let j = (c - start) as usize;
            let k = self.plan.point_of(j);
            let bias = self.plan.bias_e(k);
            let t = t0 + self.cfg.scan_offset;
            let (p, s) = scan_probability(self.env, &self.params, &self.scan_seq, bias, t)?;
            let o = self.shoot(p);
            out.push(ShotRecord {
                t_s: t,
                kind: ShotKind::Scan,
                outcome: o,
                bias_ng_ext: bias,
                bias_flux: self.flux_bias,
                parity_truth: s,
            });
            let scan = self.scan.as_mut().expect("scan in progress");
            scan.ones[k] += usize::from(o);
            if j + 1 == self.plan.total_shots() {
                self.finish_scan()?;
            }
        }
        Ok(())
    }

    fn finish_scan(&mut self) -> Result<()> {
        let scan = self.scan.take().expect("scan in progress");
        let result = ScanResult {
            t_start: scan.start_cycle as f64 * self.period,
            span: self.plan.span,
            bias_e: (0..self.plan.n_points)
                .map(|k| self.plan.bias_e(k))
                .collect(),
            p1: scan
                .ones
                .iter()
                .map(|&c| c as f64 / self.plan.shots_per_point as f64)
                .collect(),
            shots_per_point: self.plan.shots_per_point,
        };
        let prior = self.calibrated.then(|| alias_charge_delta(self.delta_fit));
        let fit = fit_charge_scan(&result, prior)?;
        if fit.usable() {
            self.delta_fit = if self.calibrated {
                self.delta_fit + alias_charge_delta(fit.delta_e - self.delta_fit)
            } else {
                fit.delta_e
            };
            self.calibrated = true;
        } else {
            log::warn!(
                "recalibration at t = {:.3} s flagged; keeping bias",
                result.t_start
            );
        }
        self.fits.push(fit);
        if let (Some(fc), true) = (self.cfg.flux, self.flux_count > 0) {
            // re-zero the flux fringe: mean outcome gives sin of the offset phase
            let (d, nu) = (self.params.decay_d, self.params.visibility_nu);
            let m = self.flux_sum / self.flux_count as f64;
            let offset = ((m - (d - 1.0)) / nu).clamp(-1.0, 1.0).asin();
            self.flux_bias += offset / (fc.slope * fc.idle);
            self.flux_sum = 0.0;
            self.flux_count = 0;
        }
        Ok(())
    }

    /// Runs up to `max_cycles` further cycles; an empty chunk means the run is over.
    pub fn next_chunk(&mut self, max_cycles: usize) -> Result<Vec<ShotRecord>> {
        let end = (self.next_cycle + max_cycles as u64).min(self.n_cycles);
        let mut out = Vec::with_capacity((end - self.next_cycle) as usize * 3);
        while self.next_cycle < end {
            self.run_cycle(self.next_cycle, &mut out)?;
            self.next_cycle += 1;
        }
        Ok(out)
    }
}

/// Whole fast-protocol record in memory; long runs should stream with
/// [`FastProtocolRunner::next_chunk`].
pub fn run_fast_protocol(
    env: &EnvironmentTrace,
    params: &DeviceParams,
    cfg: &FastProtocolConfig,
    seed: u64,
) -> Result<Vec<ShotRecord>> {
    let mut runner = FastProtocolRunner::new(env, params, cfg, seed)?;
    let mut all = Vec::new();
    loop {
        let chunk = runner.next_chunk(1 << 16)?;
        if chunk.is_empty() {
            break;
        }
        all.extend(chunk);
    }
    Ok(all)
}

/// One conditioned charge sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionedSample {
    pub t_s: f64,
    /// ŝ·(2o − 1) with ŝ = 2·o_parity − 1.
    pub y: f64,
    /// Offset-charge estimate in e: bias-implied offset plus y/T.
    pub charge_e: f64,
    /// Flux estimate in Φ₀ from the same cycle, if it had a flux shot.
    pub flux_phi: Option<f64>,
}

/// Streaming parity conditioning. A charge shot pairs with the parity shot
/// directly before it; anything else is an orphan and is dropped.
#[derive(Debug, Clone)]
pub struct Conditioner {
    transfer: f64,
    flux_transfer: Option<f64>,
    last: Option<ShotRecord>,
    pending_flux: Option<f64>,
    orphans: usize,
}

impl Conditioner {
    pub fn new(params: &DeviceParams, flux: Option<&FluxShotConfig>) -> Self {
        Self {
            transfer: fast_transfer(params),
            flux_transfer: flux.map(|f| f.transfer(params)),
            last: None,
            pending_flux: None,
            orphans: 0,
        }
    }

    pub fn orphans(&self) -> usize {
        self.orphans
    }

    pub fn push(&mut self, rec: &ShotRecord) -> Option<ConditionedSample> {
        let centred = 2.0 * f64::from(rec.outcome) - 1.0;
        let prev = self.last;
        let mut out = None;
        match rec.kind {
            ShotKind::Scan => return None,
            ShotKind::Flux => {
                self.pending_flux = self.flux_transfer.map(|k| rec.bias_flux + centred / k);
            }
            ShotKind::Parity => {
                if !matches!(
                    prev,
                    Some(ShotRecord {
                        kind: ShotKind::Flux,
                        ..
                    })
                ) {
                    self.pending_flux = None;
                }
            }
            ShotKind::Charge => match prev {
                Some(p) if p.kind == ShotKind::Parity => {
                    let y = (2.0 * f64::from(p.outcome) - 1.0) * centred;
                    out = Some(ConditionedSample {
                        t_s: rec.t_s,
                        y,
                        charge_e: 0.5 - rec.bias_ng_ext + y / self.transfer,
                        flux_phi: self.pending_flux.take(),
                    });
                }
                _ => self.orphans += 1,
            },
        }
        self.last = Some(*rec);
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Conditioned {
    pub samples: Vec<ConditionedSample>,
    pub orphans: usize,
}

impl Conditioned {
    pub fn y(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.y).collect()
    }

    pub fn charge_e(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.charge_e).collect()
    }
}

pub fn condition_charge_on_parity(records: &[ShotRecord], params: &DeviceParams) -> Conditioned {
    let mut c = Conditioner::new(params, None);
    let samples = records.iter().filter_map(|r| c.push(r)).collect();
    Conditioned {
        samples,
        orphans: c.orphans(),
    }
}
