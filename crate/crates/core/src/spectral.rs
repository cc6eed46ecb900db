//! Welch and cross-spectral estimators, the interleaved cross-spectrum that
//! cancels projection noise, spectral model fits, and band stitching.

use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::DVector;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fit::{levenberg_marquardt, LmOptions, Residuals};
use crate::io::write_csv_file;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Rectangular,
    Hann,
}

impl Window {
    fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            // periodic Hann
            Window::Hann => (0..n)
                .map(|i| 0.5 * (1.0 - (TAU * i as f64 / n as f64).cos()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detrend {
    None,
    Mean,
    Linear,
}

fn detrend(seg: &mut [f64], how: Detrend) {
    let n = seg.len() as f64;
    match how {
        Detrend::None => {}
        Detrend::Mean => {
            let m = seg.iter().sum::<f64>() / n;
            seg.iter_mut().for_each(|v| *v -= m);
        }
        Detrend::Linear => {
            let xm = (n - 1.0) / 2.0;
            let ym = seg.iter().sum::<f64>() / n;
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for (i, v) in seg.iter().enumerate() {
                let dx = i as f64 - xm;
                sxy += dx * (v - ym);
                sxx += dx * dx;
            }
            let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
            seg.iter_mut()
                .enumerate()
                .for_each(|(i, v)| *v -= ym + slope * (i as f64 - xm));
        }
    }
}

/// What the values of a [`Spectrum`] mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumKind {
    /// Auto-spectral density, non-negative.
    Psd,
    /// Real part of an averaged cross-spectrum; may be negative.
    CrossReal,
    /// Complex cross-spectrum, imaginary part in `imag`.
    Cpsd,
}

/// One-sided spectrum on a strictly increasing grid without DC.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub values: Vec<f64>,
    pub imag: Option<Vec<f64>>,
    pub kind: SpectrumKind,
    pub n_averages: usize,
    pub segment_len: usize,
    pub window: Window,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn df(&self) -> f64 {
        if self.freqs.len() > 1 {
            self.freqs[1] - self.freqs[0]
        } else {
            self.freqs.first().copied().unwrap_or(0.0)
        }
    }

    /// Σ S·Δf over the grid.
    pub fn integrated_power(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.df()
    }

    /// Mean value over bins with `f_lo ≤ f < f_hi`.
    pub fn band_mean(&self, f_lo: f64, f_hi: f64) -> Option<f64> {
        let (s, n) = self
            .freqs
            .iter()
            .zip(&self.values)
            .filter(|(f, _)| (f_lo..f_hi).contains(*f))
            .fold((0.0, 0usize), |(s, n), (_, v)| (s + v, n + 1));
        (n > 0).then(|| s / n as f64)
    }

    /// Linear interpolation in log-frequency; `None` outside the grid.
    pub fn value_at(&self, f: f64) -> Option<f64> {
        let k = self.freqs.partition_point(|&x| x < f);
        if k == self.freqs.len() {
            return None;
        }
        if self.freqs[k] == f {
            return Some(self.values[k]);
        }
        if k == 0 {
            return None;
        }
        let (f0, f1) = (self.freqs[k - 1].ln(), self.freqs[k].ln());
        let w = (f.ln() - f0) / (f1 - f0);
        Some(self.values[k - 1] * (1.0 - w) + self.values[k] * w)
    }

    pub fn scaled(&self, factor: f64) -> Spectrum {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        if let Some(im) = out.imag.as_mut() {
            im.iter_mut().for_each(|v| *v *= factor);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            f_hz: f64,
            value: f64,
            n_avg: usize,
        }
        #[derive(Serialize)]
        struct ComplexRow {
            f_hz: f64,
            value: f64,
            value_imag: f64,
            n_avg: usize,
        }
        match &self.imag {
            Some(im) => write_csv_file(
                path,
                &["f_hz", "value", "value_imag", "n_avg"],
                self.freqs.iter().zip(&self.values).zip(im).map(
                    |((&f_hz, &value), &value_imag)| ComplexRow {
                        f_hz,
                        value,
                        value_imag,
                        n_avg: self.n_averages,
                    },
                ),
            ),
            None => write_csv_file(
                path,
                &["f_hz", "value", "n_avg"],
                self.freqs
                    .iter()
                    .zip(&self.values)
                    .map(|(&f_hz, &value)| Row {
                        f_hz,
                        value,
                        n_avg: self.n_averages,
                    }),
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchOptions {
    /// Defaults to the length giving eight half-overlapping segments.
    pub segment_len: Option<usize>,
    pub overlap: f64,
    pub window: Window,
    pub detrend: Detrend,
}

impl Default for WelchOptions {
    fn default() -> Self {
        Self {
            segment_len: None,
            overlap: 0.5,
            window: Window::Hann,
            detrend: Detrend::Mean,
        }
    }
}

impl WelchOptions {
    pub fn periodogram() -> Self {
        Self {
            segment_len: None,
            overlap: 0.0,
            window: Window::Rectangular,
            detrend: Detrend::Mean,
        }
    }

    pub fn with_segment(mut self, len: usize) -> Self {
        self.segment_len = Some(len);
        self
    }

    fn resolve(&self, n: usize) -> Result<(usize, usize)> {
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(invalid("overlap must lie in [0, 1)"));
        }
        let len = match self.segment_len {
            Some(l) => l,
            // eight segments at 50 % overlap: n = L·(8 + 1)/2
            None => ((2 * n) / 9).max(2),
        };
        if len < 2 {
            return Err(invalid("segment length must be at least 2"));
        }
        if len > n {
            return Err(Error::SeriesTooShort {
                required: len,
                got: n,
            });
        }
        let step = (((1.0 - self.overlap) * len as f64).floor() as usize).max(1);
        Ok((len, step))
    }
}

struct SegmentFft {
    fft: std::sync::Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    norm: f64,
    detrend: Detrend,
    buf: Vec<Complex64>,
    seg: Vec<f64>,
}

impl SegmentFft {
    fn new(len: usize, window: Window, detrend: Detrend) -> Self {
        let w = window.coefficients(len);
        let norm = w.iter().map(|x| x * x).sum();
        Self {
            fft: FftPlanner::new().plan_fft_forward(len),
            window: w,
            norm,
            detrend,
            buf: vec![Complex64::new(0.0, 0.0); len],
            seg: vec![0.0; len],
        }
    }

    fn transform(&mut self, x: &[f64]) -> &[Complex64] {
        self.seg.copy_from_slice(x);
        detrend(&mut self.seg, self.detrend);
        for ((b, v), w) in self.buf.iter_mut().zip(&self.seg).zip(&self.window) {
            *b = Complex64::new(v * w, 0.0);
        }
        self.fft.process(&mut self.buf);
        &self.buf
    }
}

/// One-sided factor: 2 except at Nyquist of an even-length segment.
fn side_factor(k: usize, len: usize) -> f64 {
    if len.is_multiple_of(2) && k == len / 2 {
        1.0
    } else {
        2.0
    }
}

fn grid(len: usize, dt: f64) -> Vec<f64> {
    (1..=len / 2)
        .map(|k| k as f64 / (len as f64 * dt))
        .collect()
}

/// Averaged modified periodogram. White noise of variance σ² gives 2σ²·dt.
pub fn welch_psd(series: &[f64], dt: f64, opts: &WelchOptions) -> Result<Spectrum> {
    if !(dt > 0.0) {
        return Err(invalid("dt must be positive"));
    }
    let (len, step) = opts.resolve(series.len())?;
    let mut sf = SegmentFft::new(len, opts.window, opts.detrend);
    let half = len / 2;
    let mut acc = vec![0.0; half];
    let mut count = 0;
    let mut start = 0;
    while start + len <= series.len() {
        let x = sf.transform(&series[start..start + len]);
        for k in 1..=half {
            acc[k - 1] += x[k].norm_sqr();
        }
        count += 1;
        start += step;
    }
    let scale = dt / (sf.norm * count as f64);
    let values = acc
        .iter()
        .enumerate()
        .map(|(i, a)| a * scale * side_factor(i + 1, len))
        .collect();
    Ok(Spectrum {
        freqs: grid(len, dt),
        values,
        imag: None,
        kind: SpectrumKind::Psd,
        n_averages: count,
        segment_len: len,
        window: opts.window,
    })
}

/// Real part of the averaged cross-spectrum between the even- and odd-indexed
/// samples. The odd stream lags by `dt`; that known delay is removed before
/// taking the real part. Independent shot noise averages toward zero while a
/// common signal keeps its PSD.
pub fn interleaved_cross_psd(shots: &[f64], dt: f64, opts: &WelchOptions) -> Result<Spectrum> {
    if shots.len() < 4 {
        return Err(Error::SeriesTooShort {
            required: 4,
            got: shots.len(),
        });
    }
    if !(dt > 0.0) {
        return Err(invalid("dt must be positive"));
    }
    let half_n = shots.len() / 2;
    let even: Vec<f64> = shots.iter().step_by(2).take(half_n).copied().collect();
    let odd: Vec<f64> = shots
        .iter()
        .skip(1)
        .step_by(2)
        .take(half_n)
        .copied()
        .collect();
    let dt2 = 2.0 * dt;
    let (len, step) = opts.resolve(half_n)?;
    let mut fe = SegmentFft::new(len, opts.window, opts.detrend);
    let mut fo = SegmentFft::new(len, opts.window, opts.detrend);
    let half = len / 2;
    let mut acc = vec![Complex64::new(0.0, 0.0); half];
    let mut count = 0;
    let mut start = 0;
    while start + len <= half_n {
        let xe = fe.transform(&even[start..start + len]).to_vec();
        let xo = fo.transform(&odd[start..start + len]);
        for k in 1..=half {
            acc[k - 1] += xe[k].conj() * xo[k];
        }
        count += 1;
        start += step;
    }
    let scale = dt2 / (fe.norm * count as f64);
    let freqs = grid(len, dt2);
    let values = acc
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let delay = Complex64::from_polar(1.0, -TAU * freqs[i] * dt);
            (a * delay).re * scale * side_factor(i + 1, len)
        })
        .collect();
    Ok(Spectrum {
        freqs,
        values,
        imag: None,
        kind: SpectrumKind::CrossReal,
        n_averages: count,
        segment_len: len,
        window: opts.window,
    })
}

/// Segment-averaged cross-spectrum of two synchronous series with the two
/// auto-spectra and the normalised magnitude |S_ab|/√(S_a·S_b).
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSpectrum {
    pub cross: Spectrum,
    pub psd_a: Spectrum,
    pub psd_b: Spectrum,
    pub normalized: Vec<f64>,
}

impl CrossSpectrum {
    pub fn freqs(&self) -> &[f64] {
        &self.cross.freqs
    }

    pub fn magnitude(&self) -> Vec<f64> {
        let im = self.cross.imag.as_deref().unwrap_or(&[]);
        self.cross
            .values
            .iter()
            .zip(im)
            .map(|(r, i)| r.hypot(*i))
            .collect()
    }

    /// Median normalised magnitude over `f_lo ≤ f < f_hi`.
    pub fn normalized_median(&self, f_lo: f64, f_hi: f64) -> Option<f64> {
        let mut v: Vec<f64> = self
            .cross
            .freqs
            .iter()
            .zip(&self.normalized)
            .filter(|(f, _)| (f_lo..f_hi).contains(*f))
            .map(|(_, v)| *v)
            .collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(v[v.len() / 2])
    }
}

/// Non-overlapping segments, `n_avg` of them.
pub fn cross_psd(
    a: &[f64],
    b: &[f64],
    dt: f64,
    n_avg: usize,
    window: Window,
) -> Result<CrossSpectrum> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if n_avg == 0 || a.len() / n_avg < 2 {
        return Err(Error::SeriesTooShort {
            required: 2 * n_avg.max(1),
            got: a.len(),
        });
    }
    if !(dt > 0.0) {
        return Err(invalid("dt must be positive"));
    }
    let len = a.len() / n_avg;
    let mut fa = SegmentFft::new(len, window, Detrend::Mean);
    let mut fb = SegmentFft::new(len, window, Detrend::Mean);
    let half = len / 2;
    let mut sab = vec![Complex64::new(0.0, 0.0); half];
    let mut saa = vec![0.0; half];
    let mut sbb = vec![0.0; half];
    for s in 0..n_avg {
        let xa = fa.transform(&a[s * len..(s + 1) * len]).to_vec();
        let xb = fb.transform(&b[s * len..(s + 1) * len]);
        for k in 1..=half {
            sab[k - 1] += xa[k].conj() * xb[k];
            saa[k - 1] += xa[k].norm_sqr();
            sbb[k - 1] += xb[k].norm_sqr();
        }
    }
    let scale = dt / (fa.norm * n_avg as f64);
    let f = |i: usize| scale * side_factor(i + 1, len);
    let freqs = grid(len, dt);
    let spectrum = |values: Vec<f64>, imag: Option<Vec<f64>>, kind| Spectrum {
        freqs: freqs.clone(),
        values,
        imag,
        kind,
        n_averages: n_avg,
        segment_len: len,
        window,
    };
    let normalized = (0..half)
        .map(|i| {
            let d = (saa[i] * sbb[i]).sqrt();
            if d > 0.0 {
                sab[i].norm() / d
            } else {
                0.0
            }
        })
        .collect();
    Ok(CrossSpectrum {
        cross: spectrum(
            sab.iter().enumerate().map(|(i, c)| c.re * f(i)).collect(),
            Some(sab.iter().enumerate().map(|(i, c)| c.im * f(i)).collect()),
            SpectrumKind::Cpsd,
        ),
        psd_a: spectrum(
            saa.iter().enumerate().map(|(i, v)| v * f(i)).collect(),
            None,
            SpectrumKind::Psd,
        ),
        psd_b: spectrum(
            sbb.iter().enumerate().map(|(i, v)| v * f(i)).collect(),
            None,
            SpectrumKind::Psd,
        ),
        normalized,
    })
}

/// Averages into logarithmic bins; each bin reports the geometric-mean
/// frequency of its members and counts their averages.
pub fn log_bin(spec: &Spectrum, bins_per_decade: f64) -> Spectrum {
    let mut freqs = Vec::new();
    let mut values = Vec::new();
    let mut imag = Vec::new();
    let mut counts = Vec::new();
    let mut i = 0;
    while i < spec.len() {
        let edge = spec.freqs[i] * 10f64.powf(1.0 / bins_per_decade);
        let mut j = i;
        let (mut lf, mut v, mut im) = (0.0, 0.0, 0.0);
        while j < spec.len() && (j == i || spec.freqs[j] < edge) {
            lf += spec.freqs[j].ln();
            v += spec.values[j];
            im += spec.imag.as_ref().map_or(0.0, |x| x[j]);
            j += 1;
        }
        let n = (j - i) as f64;
        freqs.push((lf / n).exp());
        values.push(v / n);
        imag.push(im / n);
        counts.push(j - i);
        i = j;
    }
    Spectrum {
        freqs,
        values,
        imag: spec.imag.as_ref().map(|_| imag),
        kind: spec.kind,
        n_averages: spec.n_averages * counts.iter().min().copied().unwrap_or(1),
        segment_len: spec.segment_len,
        window: spec.window,
    }
}

/// `A/f^α + L/(1 + (f/f_c)²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumFit {
    pub amplitude: f64,
    pub alpha: f64,
    pub lorentz_amp: f64,
    pub knee_hz: f64,
    /// Standard errors of (A, α, L, f_c).
    pub std_errors: [f64; 4],
    pub band: (f64, f64),
    pub converged: bool,
    pub cost: f64,
    pub dropped_bins: usize,
}

impl SpectrumFit {
    pub fn power_law(&self, f: f64) -> f64 {
        self.amplitude / f.powf(self.alpha)
    }

    pub fn lorentzian(&self, f: f64) -> f64 {
        self.lorentz_amp / (1.0 + (f / self.knee_hz).powi(2))
    }

    pub fn eval(&self, f: f64) -> f64 {
        self.power_law(f) + self.lorentzian(f)
    }
}

struct LogModel<'a> {
    f: &'a [f64],
    ln_s: &'a [f64],
    model: fn(&DVector<f64>, f64) -> f64,
    lower: Vec<f64>,
}

impl Residuals for LogModel<'_> {
    fn n_residuals(&self) -> usize {
        self.f.len()
    }

    fn residuals(&self, p: &DVector<f64>, out: &mut DVector<f64>) {
        for i in 0..self.f.len() {
            out[i] = (self.model)(p, self.f[i]).max(1e-300).ln() - self.ln_s[i];
        }
    }

    fn project(&self, p: &mut DVector<f64>) {
        for (v, lo) in p.iter_mut().zip(&self.lower) {
            *v = v.max(*lo);
        }
    }
}

/// Positive bins inside the band, log-binned at ten per decade.
fn prepare(spec: &Spectrum, band: (f64, f64)) -> (Vec<f64>, Vec<f64>, usize) {
    let binned = log_bin(spec, 10.0);
    let mut f = Vec::new();
    let mut ln_s = Vec::new();
    let mut dropped = 0;
    for (&fi, &v) in binned.freqs.iter().zip(&binned.values) {
        if !(band.0..=band.1).contains(&fi) {
            continue;
        }
        if v > 0.0 {
            f.push(fi);
            ln_s.push(v.ln());
        } else {
            dropped += 1;
        }
    }
    (f, ln_s, dropped)
}

/// `A/f^α` from a straight line in log-log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub amplitude: f64,
    pub alpha: f64,
    pub alpha_std_error: f64,
    pub n_bins: usize,
}

impl PowerLawFit {
    pub fn eval(&self, f: f64) -> f64 {
        self.amplitude / f.powf(self.alpha)
    }
}

/// Ordinary least squares of ln S on ln f over the log-binned spectrum.
pub fn fit_power_law(spec: &Spectrum, band: (f64, f64)) -> Result<PowerLawFit> {
    let (f, ln_s, _) = prepare(spec, band);
    let n = f.len();
    if n < 3 {
        return Err(Error::FitFailed(format!(
            "only {n} usable bins in {band:?} Hz"
        )));
    }
    let x: Vec<f64> = f.iter().map(|v| v.ln()).collect();
    let xm = x.iter().sum::<f64>() / n as f64;
    let ym = ln_s.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - xm).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&ln_s).map(|(a, b)| (a - xm) * (b - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let rss: f64 = x
        .iter()
        .zip(&ln_s)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    Ok(PowerLawFit {
        amplitude: intercept.exp(),
        alpha: -slope,
        alpha_std_error: (rss / (n - 2).max(1) as f64 / sxx).sqrt(),
        n_bins: n,
    })
}

fn pl_lorentz(p: &DVector<f64>, f: f64) -> f64 {
    // p = (ln A, α, L, ln f_c)
    p[0].exp() * f.powf(-p[1]) + p[2] / (1.0 + (f / p[3].exp()).powi(2))
}

/// Least squares in log-PSD over `band`, multi-started on α ∈ {1, 1.5, 2, 2.5}
/// and two knee guesses. The Lorentzian amplitude is kept non-negative.
pub fn fit_power_law_plus_lorentzian(spec: &Spectrum, band: (f64, f64)) -> Result<SpectrumFit> {
    let (f, ln_s, dropped) = prepare(spec, band);
    if f.len() < 6 {
        return Err(Error::FitFailed(format!(
            "only {} usable bins in {:?} Hz",
            f.len(),
            band
        )));
    }
    let problem = LogModel {
        f: &f,
        ln_s: &ln_s,
        model: pl_lorentz,
        lower: vec![f64::NEG_INFINITY, 0.0, 0.0, f64::NEG_INFINITY],
    };
    let top = ln_s.iter().rev().take(3).map(|v| v.exp()).sum::<f64>() / 3.0;
    let f_top = *f.last().unwrap_or(&1.0);
    let mut best: Option<crate::fit::LmReport> = None;
    for alpha in [1.0, 1.5, 2.0, 2.5] {
        // A from the low half of the band
        let lo = f.len() / 2;
        let ln_a = (0..lo.max(1))
            .map(|i| ln_s[i] + alpha * f[i].ln())
            .sum::<f64>()
            / lo.max(1) as f64;
        for knee in [f_top / 30.0, f_top / 3.0] {
            for l0 in [0.0, top] {
                let start = DVector::from_vec(vec![ln_a, alpha, l0, knee.ln()]);
                let rep = levenberg_marquardt(
                    &problem,
                    &start,
                    &LmOptions {
                        max_iter: 400,
                        ..Default::default()
                    },
                );
                if rep.params[1] >= 3.0 || !rep.cost.is_finite() {
                    continue;
                }
                if best.as_ref().is_none_or(|b| rep.cost < b.cost) {
                    best = Some(rep);
                }
            }
        }
    }
    let rep = best.ok_or_else(|| Error::FitFailed("no start converged to α < 3".into()))?;
    let p = &rep.params;
    let se = rep.std_errors().unwrap_or_else(|| vec![f64::NAN; 4]);
    let (a, knee) = (p[0].exp(), p[3].exp());
    Ok(SpectrumFit {
        amplitude: a,
        alpha: p[1],
        lorentz_amp: p[2],
        knee_hz: knee,
        std_errors: [a * se[0], se[1], se[2], knee * se[3]],
        band,
        converged: rep.converged,
        cost: rep.cost,
        dropped_bins: dropped,
    })
}

/// `L/(1 + (f/f_c)²) + W`.
#[derive(Debug, Clone, PartialEq)]
pub struct LorentzianFit {
    pub amplitude: f64,
    pub knee_hz: f64,
    pub white: f64,
    pub knee_std_error: f64,
    /// False when the data do not pin down a knee (flat spectrum, knee
    /// outside the band, or a Lorentzian buried under the white level).
    pub identifiable: bool,
    pub converged: bool,
}

fn lorentz_white(p: &DVector<f64>, f: f64) -> f64 {
    // p = (ln L, ln f_c, W)
    p[0].exp() / (1.0 + (f / p[1].exp()).powi(2)) + p[2]
}

pub fn fit_lorentzian(spec: &Spectrum, band: (f64, f64)) -> Result<LorentzianFit> {
    let (f, ln_s, _) = prepare(spec, band);
    if f.len() < 5 {
        return Err(Error::FitFailed(format!(
            "only {} usable bins in {:?} Hz",
            f.len(),
            band
        )));
    }
    let problem = LogModel {
        f: &f,
        ln_s: &ln_s,
        model: lorentz_white,
        lower: vec![f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0],
    };
    let low = ln_s.iter().take(3).map(|v| v.exp()).sum::<f64>() / 3.0;
    let high = ln_s.iter().rev().take(3).map(|v| v.exp()).sum::<f64>() / 3.0;
    let (f_lo, f_hi) = (f[0], *f.last().unwrap());
    let mut best: Option<crate::fit::LmReport> = None;
    for frac in [0.01f64, 0.1, 0.5] {
        let knee = (f_lo.ln() + frac.sqrt() * (f_hi.ln() - f_lo.ln())).exp();
        let start = DVector::from_vec(vec![
            (low - high).max(low * 1e-3).ln(),
            knee.ln(),
            high * 0.5,
        ]);
        let rep = levenberg_marquardt(
            &problem,
            &start,
            &LmOptions {
                max_iter: 400,
                ..Default::default()
            },
        );
        if best.as_ref().is_none_or(|b| rep.cost < b.cost) {
            best = Some(rep);
        }
    }
    let rep = best.ok_or_else(|| Error::FitFailed("lorentzian fit failed".into()))?;
    let p = &rep.params;
    let (amp, knee, white) = (p[0].exp(), p[1].exp(), p[2]);
    let se_ln_knee = rep.std_errors().map_or(f64::INFINITY, |s| s[1]);
    let identifiable = rep.converged
        && knee > f_lo
        && knee < f_hi
        && amp > 0.5 * white.max(0.0)
        && se_ln_knee.is_finite()
        && se_ln_knee < 0.3;
    Ok(LorentzianFit {
        amplitude: amp,
        knee_hz: knee,
        white,
        knee_std_error: knee * se_ln_knee,
        identifiable,
        converged: rep.converged,
    })
}

/// Low band up to its Nyquist frequency, high band above it.
#[derive(Debug, Clone, PartialEq)]
pub struct Stitched {
    pub spectrum: Spectrum,
    pub crossover_hz: f64,
    /// Median high/low ratio in the overlap, when the bands overlap.
    pub overlap_ratio: Option<f64>,
    pub warning: Option<String>,
}

pub fn stitch_spectra(low: &Spectrum, high: &Spectrum) -> Stitched {
    let crossover = low.freqs.last().copied().unwrap_or(0.0);
    let mut ratios: Vec<f64> = high
        .freqs
        .iter()
        .zip(&high.values)
        .filter(|(f, _)| **f <= crossover)
        .filter_map(|(f, v)| low.value_at(*f).filter(|l| *l > 0.0).map(|l| v / l))
        .collect();
    ratios.sort_by(f64::total_cmp);
    let overlap_ratio = (!ratios.is_empty()).then(|| ratios[ratios.len() / 2]);
    let warning = overlap_ratio
        .filter(|r| !(1.0 / 3.0..=3.0).contains(r))
        .map(|r| {
            let msg = format!(
                "bands disagree by a factor {r:.2} in the overlap below {crossover:.3e} Hz"
            );
            log::warn!("{msg}");
            msg
        });
    let mut freqs = low.freqs.clone();
    let mut values = low.values.clone();
    for (&f, &v) in high.freqs.iter().zip(&high.values) {
        if f > crossover {
            freqs.push(f);
            values.push(v);
        }
    }
    let kind = if low.kind == SpectrumKind::Psd && high.kind == SpectrumKind::Psd {
        SpectrumKind::Psd
    } else {
        SpectrumKind::CrossReal
    };
    Stitched {
        spectrum: Spectrum {
            freqs,
            values,
            imag: None,
            kind,
            n_averages: low.n_averages.min(high.n_averages),
            segment_len: low.segment_len,
            window: low.window,
        },
        crossover_hz: crossover,
        overlap_ratio,
        warning,
    }
}
