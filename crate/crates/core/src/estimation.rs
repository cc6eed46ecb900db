//! From measurements back to offset charge: scan fits, aliased traces, jump
//! catalogues, and the frequency-noise view of the same data.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fit::{levenberg_marquardt, LmOptions, LmReport, Residuals};
use crate::io::write_csv_file;
use crate::model::{alias_charge_delta, DeviceParams};
use crate::pulse::ScanResult;
use crate::spectral::Spectrum;

/// Fits with a visibility below this are treated as degenerate.
pub const MIN_VISIBILITY: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargeFit {
    /// Scan midpoint in s.
    pub t: f64,
    /// Offset charge in e, aliased into [−0.5, 0.5).
    pub delta_e: f64,
    pub sigma_e: f64,
    pub d_hat: f64,
    pub nu_hat: f64,
    pub residual_norm: f64,
    pub converged: bool,
}

impl ChargeFit {
    pub fn usable(&self) -> bool {
        self.converged && self.nu_hat >= MIN_VISIBILITY && self.sigma_e.is_finite()
    }
}

/// Ramsey population as a function of bias `b` and offset `δ` (both in e).
struct ScanModel<'a> {
    bias_e: &'a [f64],
    p1: &'a [f64],
}

impl Residuals for ScanModel<'_> {
    fn n_residuals(&self) -> usize {
        self.bias_e.len()
    }

    fn residuals(&self, p: &DVector<f64>, out: &mut DVector<f64>) {
        let (delta, d, nu) = (p[0], p[1], p[2]);
        for (i, (&b, &y)) in self.bias_e.iter().zip(self.p1).enumerate() {
            let u = PI * (PI * (b + delta)).cos();
            out[i] = 0.5 * (d + nu * u.cos()) - y;
        }
    }

    fn jacobian(&self, p: &DVector<f64>, jac: &mut DMatrix<f64>) {
        let (delta, nu) = (p[0], p[2]);
        for (i, &b) in self.bias_e.iter().enumerate() {
            let x = PI * (b + delta);
            let u = PI * x.cos();
            jac[(i, 0)] = 0.5 * nu * PI * PI * u.sin() * x.sin();
            jac[(i, 1)] = 0.5;
            jac[(i, 2)] = 0.5 * u.cos();
        }
    }

    fn project(&self, p: &mut DVector<f64>) {
        p[1] = p[1].clamp(0.0, 2.0);
        p[2] = p[2].clamp(0.0, 2.0);
    }
}

fn circular_distance(a: f64, b: f64) -> f64 {
    alias_charge_delta(a - b).abs()
}

/// Nonlinear least squares of the Ramsey population in (δ, d, ν), started from eight
/// offsets across the period (and the prior). σ is the sandwich δ standard
/// error with binomial point variances from the fitted fringe, or with the
/// squared residuals when the shot count is unknown.
pub fn fit_charge_scan(scan: &ScanResult, prior: Option<f64>) -> Result<ChargeFit> {
    let n = scan.bias_e.len();
    if n < 8 || scan.p1.len() != n {
        return Err(invalid(format!("scan fit needs ≥ 8 points, got {n}")));
    }
    let lo = scan.bias_e.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scan
        .bias_e
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let step = (hi - lo) / (n - 1) as f64;
    if hi - lo + step < 1.0 - 1e-9 {
        return Err(invalid("scan grid must span a full 1e period"));
    }
    let problem = ScanModel {
        bias_e: &scan.bias_e,
        p1: &scan.p1,
    };
    let pmax = scan.p1.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pmin = scan.p1.iter().copied().fold(f64::INFINITY, f64::min);
    let (d0, nu0) = ((pmax + pmin).clamp(0.05, 1.95), (pmax - pmin).max(0.1));
    let mut starts: Vec<f64> = (0..8).map(|k| -0.5 + k as f64 / 8.0).collect();
    starts.extend(prior);
    let opts = LmOptions {
        max_iter: 100,
        ..Default::default()
    };
    let mut best: Option<LmReport> = None;
    for delta0 in starts {
        let rep = levenberg_marquardt(&problem, &DVector::from_vec(vec![delta0, d0, nu0]), &opts);
        let better = match &best {
            None => true,
            Some(b) => {
                let tie = (rep.cost - b.cost).abs() <= 1e-9 * (1.0 + b.cost);
                if tie {
                    // equal minima: keep the branch closest to the prior
                    prior.is_some_and(|p| {
                        circular_distance(rep.params[0], p) < circular_distance(b.params[0], p)
                    })
                } else {
                    rep.cost < b.cost
                }
            }
        };
        if better {
            best = Some(rep);
        }
    }
    let rep = best.ok_or_else(|| Error::FitFailed("no scan fit start".into()))?;
    let mut spread = DVector::zeros(n);
    problem.residuals(&rep.params, &mut spread);
    if scan.shots_per_point > 0 {
        let shots = scan.shots_per_point as f64;
        for (s, y) in spread.iter_mut().zip(&scan.p1) {
            let p = (*s + y).clamp(0.0, 1.0);
            *s = (p * (1.0 - p) / shots).sqrt();
        }
    }
    let sigma = rep
        .robust_covariance(&spread)
        .map_or(f64::INFINITY, |c| c[(0, 0)].max(0.0).sqrt())
        .max(f64::EPSILON);
    Ok(ChargeFit {
        t: scan.t_start + 0.5 * scan.span,
        delta_e: alias_charge_delta(rep.params[0]),
        sigma_e: sigma,
        d_hat: rep.params[1],
        nu_hat: rep.params[2],
        residual_norm: rep.cost.sqrt(),
        converged: rep.converged,
    })
}

/// Ramsey fringe versus final-gate phase θ: P₁ = ½[d + ν·cos(φ − θ)].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseFit {
    pub phase: f64,
    pub nu: f64,
    pub d: f64,
}

/// Linear least squares in (d, ν·cos φ, ν·sin φ).
pub fn fit_ramsey_phase(theta: &[f64], p1: &[f64]) -> Result<PhaseFit> {
    if theta.len() != p1.len() {
        return Err(Error::LengthMismatch(theta.len(), p1.len()));
    }
    if theta.len() < 3 {
        return Err(Error::SeriesTooShort {
            required: 3,
            got: theta.len(),
        });
    }
    let a = DMatrix::from_fn(theta.len(), 3, |i, j| match j {
        0 => 0.5,
        1 => 0.5 * theta[i].cos(),
        _ => 0.5 * theta[i].sin(),
    });
    let y = DVector::from_column_slice(p1);
    let x = a
        .svd(true, true)
        .solve(&y, 1e-12)
        .map_err(|e| Error::FitFailed(e.to_string()))?;
    Ok(PhaseFit {
        phase: x[2].atan2(x[1]),
        nu: x[1].hypot(x[2]),
        d: x[0],
    })
}

/// Offset-charge time series in e built from aliased scan-to-scan increments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChargeTrace {
    pub t: Vec<f64>,
    pub value_e: Vec<f64>,
    pub sigma_e: Vec<f64>,
    /// False where the fit failed; the value is then held from the last good point.
    pub valid: Vec<bool>,
}

impl ChargeTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn gaps(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }

    /// Increments between consecutive valid points, `(t, Δ)`.
    pub fn increments(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut prev: Option<usize> = None;
        for i in 0..self.len() {
            if !self.valid[i] {
                continue;
            }
            if let Some(p) = prev {
                out.push((
                    self.t[i],
                    alias_charge_delta(self.value_e[i] - self.value_e[p]),
                ));
            }
            prev = Some(i);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            t_s: f64,
            dng_e: f64,
            sigma_e: f64,
        }
        let rows = (0..self.len()).map(|i| Row {
            t_s: self.t[i],
            dng_e: self.value_e[i],
            sigma_e: self.sigma_e[i],
        });
        write_csv_file(path, &["t_s", "dng_e", "sigma_e"], rows)
    }
}

/// Accumulates `alias(δ_i − δ_{i−1})` from the first usable fit onward.
pub fn build_trace(fits: &[ChargeFit]) -> ChargeTrace {
    let mut trace = ChargeTrace::default();
    let mut last: Option<(f64, f64)> = None; // (raw δ, accumulated value)
    for fit in fits {
        let ok = fit.usable();
        let value = match (ok, last) {
            (true, None) => fit.delta_e,
            (true, Some((raw, acc))) => acc + alias_charge_delta(fit.delta_e - raw),
            (false, Some((_, acc))) => acc,
            (false, None) => 0.0,
        };
        if ok {
            last = Some((fit.delta_e, value));
        }
        trace.t.push(fit.t);
        trace.value_e.push(value);
        trace.sigma_e.push(if ok { fit.sigma_e } else { f64::NAN });
        trace.valid.push(ok);
    }
    trace
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct JumpCatalog {
    pub times: Vec<f64>,
    pub sizes_e: Vec<f64>,
    pub threshold_e: f64,
}

impl JumpCatalog {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn mean_interval(&self, duration: f64) -> Option<f64> {
        (!self.is_empty()).then(|| duration / self.len() as f64)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            t_s: f64,
            size_e: f64,
        }
        let rows = self
            .times
            .iter()
            .zip(&self.sizes_e)
            .map(|(&t_s, &size_e)| Row { t_s, size_e });
        write_csv_file(path, &["t_s", "size_e"], rows)
    }
}

/// Counts on [−0.5, 0.5) e; values outside are aliased first.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub centers: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values_e: &[f64], n_bins: usize) -> Self {
        let n_bins = n_bins.max(1);
        let mut counts = vec![0usize; n_bins];
        for &v in values_e {
            counts[crate::electrostatics::bin_index(v, n_bins)] += 1;
        }
        let w = 1.0 / n_bins as f64;
        let centers = (0..n_bins).map(|k| -0.5 + (k as f64 + 0.5) * w).collect();
        Self { centers, counts }
    }

    pub fn bin_width(&self) -> f64 {
        1.0 / self.counts.len() as f64
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            bin_center_e: f64,
            count: usize,
        }
        let rows = self
            .centers
            .iter()
            .zip(&self.counts)
            .map(|(&bin_center_e, &count)| Row {
                bin_center_e,
                count,
            });
        write_csv_file(path, &["bin_center_e", "count"], rows)
    }
}

/// Default threshold: five times the 0.02e fit width.
pub const JUMP_THRESHOLD_E: f64 = 0.1;

pub fn detect_jumps(trace: &ChargeTrace, threshold_e: f64) -> JumpCatalog {
    let mut cat = JumpCatalog {
        threshold_e,
        ..Default::default()
    };
    for (t, d) in trace.increments() {
        if d.abs() >= threshold_e {
            cat.times.push(t);
            cat.sizes_e.push(d);
        }
    }
    cat
}

/// δf = (Δω₁₀/2π)·|cos(2π·n_g)| in Hz for a trace in e (n_g = value/2).
pub fn to_frequency_noise(values_e: &[f64], params: &DeviceParams) -> Vec<f64> {
    let df = params.dispersion / TAU;
    values_e.iter().map(|v| df * (PI * v).cos().abs()).collect()
}

/// Principal-branch inverse of [`to_frequency_noise`]: every sample lands in
/// [0, 0.5] e, as a single-bias-point measurement would report it.
pub fn realias_to_half_e(freq_hz: &[f64], params: &DeviceParams) -> Vec<f64> {
    let df = params.dispersion / TAU;
    freq_hz
        .iter()
        .map(|f| (f / df).clamp(0.0, 1.0).acos() / PI)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DispersionScaling {
    /// Power ∝ dispersion².
    #[default]
    Quadratic,
    Linear,
}

impl DispersionScaling {
    pub fn factor(self, source_hz: f64, target_hz: f64) -> f64 {
        let r = target_hz / source_hz;
        match self {
            DispersionScaling::Quadratic => r * r,
            DispersionScaling::Linear => r,
        }
    }
}

/// Rescales a frequency-noise spectrum measured on a device with another
/// charge dispersion.
pub fn normalize_external_spectrum(
    spec: &Spectrum,
    source_dispersion_hz: f64,
    target_dispersion_hz: f64,
    scaling: DispersionScaling,
) -> Result<Spectrum> {
    if !(source_dispersion_hz > 0.0 && target_dispersion_hz > 0.0) {
        return Err(invalid("dispersions must be positive"));
    }
    Ok(spec.scaled(scaling.factor(source_dispersion_hz, target_dispersion_hz)))
}
