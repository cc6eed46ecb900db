//! Scaled re-runs of the published figures, each reduced to a list of
//! numeric checks with pass/fail verdicts.

use std::f64::consts::TAU;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::cpsd::{
    correlation_bound, run_high_bandwidth_cpsd, run_low_bandwidth_cpsd, CpsdReport, HighBandConfig,
    LowBandConfig,
};
use crate::electrostatics::{
    histogram_model, jump_weight, sample_jump_distribution, solve_laplace, GeometrySpec,
    InducedChargeSampler,
};
use crate::error::{invalid, Error, Result};
use crate::estimation::{
    build_trace, detect_jumps, realias_to_half_e, to_frequency_noise, ChargeTrace, Histogram,
    JUMP_THRESHOLD_E,
};
use crate::io::{write_csv_file, Manifest};
use crate::model::DeviceParams;
use crate::noise::{
    compose_environment, synth_jumps, EnvironmentSpec, FluxNoiseSpec, JumpProcessSpec,
    JumpSizeSampler, PowerLawSpec, TelegraphSpec,
};
use crate::pulse::{
    run_fast_protocol, run_scan_series, Conditioner, FastProtocolConfig, FastProtocolRunner,
    ScanPlan, ShotKind,
};
use crate::run::{LAPLACE_MAX_ITER, LAPLACE_TOL};
use crate::spectral::{
    fit_lorentzian, fit_power_law, fit_power_law_plus_lorentzian, interleaved_cross_psd,
    stitch_spectra, welch_psd, Spectrum, WelchOptions,
};

pub const TARGET_KNEE_HZ: f64 = 255.0;
pub const TARGET_AMPLITUDE: f64 = 2.9e-4;
pub const TARGET_ALPHA: f64 = 1.93;
pub const TARGET_JUMP_INTERVAL_S: f64 = 250.0;
pub const TARGET_FIT_WIDTH_E: f64 = 0.02;
pub const TARGET_REALIASED_ALPHA: f64 = 1.76;
pub const TARGET_FREQ_NOISE_1HZ: f64 = 5.9e7;

/// 18 h of slow scans at one per 20 s.
pub const SLOW_SCANS: usize = 3240;
pub const FAST_DURATION_S: f64 = 600.0;
pub const PARITY_DURATION_S: f64 = 60.0;
/// Enough for ≈500 impingements at one per 250 s.
pub const JUMP_DURATION_S: f64 = 125_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig3b,
    Fig3c,
    Fig4,
    FigS1,
    FigS4,
}

impl Figure {
    pub const ALL: [Figure; 5] = [
        Figure::Fig3b,
        Figure::Fig3c,
        Figure::Fig4,
        Figure::FigS1,
        Figure::FigS4,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Figure::Fig3b => "fig3b",
            Figure::Fig3c => "fig3c",
            Figure::Fig4 => "fig4",
            Figure::FigS1 => "figS1",
            Figure::FigS4 => "figS4",
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Figure::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                invalid(format!(
                    "unknown figure `{s}` (expected fig3b, fig3c, fig4, figS1 or figS4)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub pass: bool,
}

impl Check {
    pub fn within(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            value,
            lo: Some(lo),
            hi: Some(hi),
            pass: value >= lo && value <= hi,
        }
    }

    pub fn at_least(name: &str, value: f64, lo: f64) -> Self {
        Self {
            name: name.into(),
            value,
            lo: Some(lo),
            hi: None,
            pass: value >= lo,
        }
    }

    pub fn at_most(name: &str, value: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            value,
            lo: None,
            hi: Some(hi),
            pass: value <= hi,
        }
    }

    /// `target ×/÷ factor`.
    pub fn factor(name: &str, value: f64, target: f64, factor: f64) -> Self {
        Self::within(name, value, target / factor, target * factor)
    }

    /// `target ± frac·target`.
    pub fn relative(name: &str, value: f64, target: f64, frac: f64) -> Self {
        Self::within(name, value, target * (1.0 - frac), target * (1.0 + frac))
    }

    pub fn holds(name: &str, ok: bool) -> Self {
        Self {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            lo: Some(1.0),
            hi: None,
            pass: ok,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let range = match (self.lo, self.hi) {
            (Some(lo), Some(hi)) => format!("[{lo:.4e}, {hi:.4e}]"),
            (Some(lo), None) => format!(">= {lo:.4e}"),
            (None, Some(hi)) => format!("<= {hi:.4e}"),
            (None, None) => String::new(),
        };
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {:.4e} {range}", self.name, self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub figure: String,
    pub seed: u64,
    pub pass: bool,
    pub checks: Vec<Check>,
}

impl Verdict {
    fn new(figure: Figure, seed: u64, checks: Vec<Check>) -> Self {
        Self {
            figure: figure.as_str().into(),
            seed,
            pass: checks.iter().all(|c| c.pass),
            checks,
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Outputs<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Outputs<'_> {
    fn add(&mut self, name: &str) -> std::path::PathBuf {
        self.files.push(name.into());
        self.dir.join(name)
    }
}

/// Runs one figure, writing CSVs, `verdict.json` and `manifest.json` to `out`.
pub fn reproduce(figure: Figure, seed: u64, out: &Path) -> Result<Verdict> {
    fs::create_dir_all(out)?;
    let mut o = Outputs {
        dir: out,
        files: Vec::new(),
    };
    let checks = match figure {
        Figure::Fig3b => fig3b(seed, &mut o)?,
        Figure::Fig3c => fig3c(seed, &mut o)?,
        Figure::Fig4 => fig4(seed, &mut o)?,
        Figure::FigS1 => fig_s1(seed, &mut o)?,
        Figure::FigS4 => fig_s4(seed, &mut o)?,
    };
    let verdict = Verdict::new(figure, seed, checks);
    let mut body = serde_json::to_string_pretty(&verdict)?;
    body.push('\n');
    fs::write(o.add("verdict.json"), body)?;
    let settings = format!(
        "reproduce {figure} seed={seed} version={}",
        env!("CARGO_PKG_VERSION")
    );
    let mut manifest = Manifest::new(format!("reproduce {figure}"), seed, &settings);
    for f in &o.files {
        manifest.add_file(out, f)?;
    }
    manifest.write(out)?;
    Ok(verdict)
}

fn qubit_a_background() -> EnvironmentSpec {
    EnvironmentSpec {
        charge: Some(PowerLawSpec::qubit_a_charge()),
        parity: Some(TelegraphSpec {
            gamma: TAU * TARGET_KNEE_HZ,
        }),
        ..Default::default()
    }
}

fn fig3b(seed: u64, o: &mut Outputs) -> Result<Vec<Check>> {
    let p = DeviceParams::qubit_a();
    let env = compose_environment(
        &qubit_a_background(),
        None,
        PARITY_DURATION_S,
        1.0 / p.shot_rate,
        seed,
    )?;
    let cfg = FastProtocolConfig {
        duration: PARITY_DURATION_S,
        ..Default::default()
    };
    let shots = run_fast_protocol(&env, &p, &cfg, seed)?;
    let parity: Vec<f64> = shots
        .iter()
        .filter(|s| s.kind == ShotKind::Parity)
        .map(|s| 2.0 * s.outcome as f64 - 1.0)
        .collect();
    let psd = welch_psd(
        &parity,
        1.0 / p.shot_rate,
        &WelchOptions::default().with_segment(1 << 13),
    )?;
    psd.write_csv(&o.add("parity_psd.csv"))?;
    let fit = fit_lorentzian(&psd, (1.0, 5000.0))?;
    write_model(&o.add("parity_fit.csv"), &psd.freqs, |f| {
        fit.amplitude / (1.0 + (f / fit.knee_hz).powi(2)) + fit.white
    })?;
    Ok(vec![
        Check::relative("parity_knee_hz", fit.knee_hz, TARGET_KNEE_HZ, 0.10),
        Check::holds("knee_identifiable", fit.identifiable),
    ])
}

fn write_model(path: &Path, freqs: &[f64], model: impl Fn(f64) -> f64) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        f_hz: f64,
        model: f64,
    }
    write_csv_file(
        path,
        &["f_hz", "model"],
        freqs.iter().map(|&f_hz| Row {
            f_hz,
            model: model(f_hz),
        }),
    )
}

/// 18 h of 20 s scans against the qubit-A background.
pub fn slow_charge_trace(seed: u64) -> Result<ChargeTrace> {
    let p = DeviceParams::qubit_a();
    let plan = ScanPlan::from_params(&p);
    let dt = plan.span / plan.total_shots() as f64;
    let env = compose_environment(
        &qubit_a_background(),
        None,
        SLOW_SCANS as f64 * p.scan_period,
        dt,
        seed,
    )?;
    let fits = run_scan_series(&env, &p, &plan, SLOW_SCANS, p.scan_period, seed)?;
    Ok(build_trace(&fits))
}

/// Parity-conditioned charge in e, one sample per fast cycle.
pub fn fast_charge_series(seed: u64, duration: f64) -> Result<Vec<f64>> {
    let p = DeviceParams::qubit_a();
    let env = compose_environment(
        &qubit_a_background(),
        None,
        duration,
        1.0 / p.shot_rate,
        seed,
    )?;
    let cfg = FastProtocolConfig {
        duration,
        ..Default::default()
    };
    let mut runner = FastProtocolRunner::new(&env, &p, &cfg, seed)?;
    let mut cond = Conditioner::new(&p, None);
    let mut q = Vec::new();
    while !runner.is_done() {
        for r in runner.next_chunk(1 << 16)? {
            q.extend(cond.push(&r).map(|s| s.charge_e));
        }
    }
    Ok(q)
}

fn fig3c(seed: u64, o: &mut Outputs) -> Result<Vec<Check>> {
    let p = DeviceParams::qubit_a();
    let trace = slow_charge_trace(seed)?;
    trace.write_csv(&o.add("trace.csv"))?;
    let low = welch_psd(&trace.value_e, p.scan_period, &WelchOptions::default())?;
    low.write_csv(&o.add("psd_low.csv"))?;

    let q = fast_charge_series(seed.wrapping_add(1), FAST_DURATION_S)?;
    let high = interleaved_cross_psd(
        &q,
        1.0 / p.shot_rate,
        &WelchOptions::default().with_segment(1 << 17),
    )?;
    high.write_csv(&o.add("psd_high.csv"))?;

    let stitched = stitch_spectra(&low, &high);
    stitched.spectrum.write_csv(&o.add("psd_stitched.csv"))?;
    let fit = fit_power_law_plus_lorentzian(&stitched.spectrum, (1e-5, 2e3))?;
    #[derive(Serialize)]
    struct Row {
        f_hz: f64,
        power_law: f64,
        lorentzian: f64,
    }
    write_csv_file(
        &o.add("fit.csv"),
        &["f_hz", "power_law", "lorentzian"],
        stitched.spectrum.freqs.iter().map(|&f| Row {
            f_hz: f,
            power_law: fit.power_law(f),
            lorentzian: fit.lorentzian(f),
        }),
    )?;
    // smallest Lorentzian-to-power-law ratio over the fitted grid above 10 Hz
    let dominance = stitched
        .spectrum
        .freqs
        .iter()
        .filter(|&&f| (10.0..=fit.band.1).contains(&f))
        .map(|&f| fit.lorentzian(f) / fit.power_law(f))
        .fold(f64::INFINITY, f64::min);
    Ok(vec![
        Check::within("alpha", fit.alpha, TARGET_ALPHA - 0.10, TARGET_ALPHA + 0.10),
        Check::factor("s_q_1hz", fit.amplitude, TARGET_AMPLITUDE, 1.5),
        Check::at_least("lorentzian_over_power_law_above_10hz", dominance, 1.0),
        Check::holds("fit_converged", fit.converged),
    ])
}

fn fig4(seed: u64, o: &mut Outputs) -> Result<Vec<Check>> {
    let p = DeviceParams::qubit_a();
    let plan = ScanPlan::from_params(&p);
    let dt = plan.span / plan.total_shots() as f64;
    let field = solve_laplace(
        &GeometrySpec::default().build()?,
        LAPLACE_TOL,
        LAPLACE_MAX_ITER,
    )?;
    let sampler = InducedChargeSampler { field: &field };
    let jumps = JumpProcessSpec::qubit_a();
    let spec = EnvironmentSpec {
        jumps: Some(jumps),
        ..Default::default()
    };
    let env = compose_environment(
        &spec,
        Some(&sampler as &dyn JumpSizeSampler),
        JUMP_DURATION_S,
        dt,
        seed,
    )?;
    // same seed and substream as the environment: these are its events
    let events = synth_jumps(&jumps, &sampler, env.len(), dt, seed)?.events;
    #[derive(Serialize)]
    struct EventRow {
        t_s: f64,
        size_e: f64,
    }
    write_csv_file(
        &o.add("events.csv"),
        &["t_s", "size_e"],
        events.iter().map(|e| EventRow {
            t_s: e.time,
            size_e: e.size_e,
        }),
    )?;

    let n_scans = (JUMP_DURATION_S / p.scan_period) as usize;
    let fits = run_scan_series(&env, &p, &plan, n_scans, p.scan_period, seed)?;
    let trace = build_trace(&fits);
    trace.write_csv(&o.add("trace.csv"))?;
    let catalog = detect_jumps(&trace, JUMP_THRESHOLD_E);
    catalog.write_csv(&o.add("jumps.csv"))?;

    let inc: Vec<f64> = trace.increments().iter().map(|(_, d)| *d).collect();
    let hist = Histogram::new(&inc, 100);
    hist.write_csv(&o.add("histogram.csv"))?;

    // robust width of the jump-free core; each increment carries two fits
    let mut abs: Vec<f64> = inc.iter().map(|d| d.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let mad = abs.get(abs.len() / 2).copied().unwrap_or(f64::NAN);
    let core_sigma = 1.4826 * mad;
    let per_fit_width = core_sigma / 2f64.sqrt();

    let dist = sample_jump_distribution(&field, 200_000, seed);
    let model = histogram_model(
        &dist,
        core_sigma,
        jump_weight(jumps.rate(), p.scan_period),
        100,
    )?;
    model.write_csv(&o.add("histogram_model.csv"), inc.len())?;

    let mean_interval = JUMP_DURATION_S / events.len().max(1) as f64;
    let beyond = |x: f64| inc.iter().filter(|d| d.abs() > x).count() as f64;
    let confined = inc
        .iter()
        .chain(&catalog.sizes_e)
        .all(|d| (-0.5..0.5).contains(d));
    Ok(vec![
        Check::at_least("n_events", events.len() as f64, 400.0),
        Check::relative(
            "mean_interval_s",
            mean_interval,
            TARGET_JUMP_INTERVAL_S,
            0.15,
        ),
        Check::relative("core_width_e", per_fit_width, TARGET_FIT_WIDTH_E, 0.30),
        Check::at_least("increments_beyond_0.1e", beyond(0.1), 1.0),
        Check::at_least("increments_beyond_0.4e", beyond(0.4), 1.0),
        Check::holds("sizes_within_half_e", confined),
    ])
}

fn fig_s1(seed: u64, o: &mut Outputs) -> Result<Vec<Check>> {
    let p = DeviceParams::qubit_a();
    let trace = slow_charge_trace(seed)?;
    let freq = to_frequency_noise(&trace.value_e, &p);
    let realiased = realias_to_half_e(&freq, &p);
    let opts = WelchOptions::default();
    let s_q = welch_psd(&trace.value_e, p.scan_period, &opts)?;
    let s_f = welch_psd(&freq, p.scan_period, &opts)?;
    let s_r = welch_psd(&realiased, p.scan_period, &opts)?;
    s_q.write_csv(&o.add("psd_charge.csv"))?;
    s_f.write_csv(&o.add("psd_frequency.csv"))?;
    s_r.write_csv(&o.add("psd_realiased.csv"))?;

    let nyquist = 0.5 / p.scan_period;
    let full = (0.0, nyquist);
    let alpha_r = fit_power_law(&s_r, (3e-4, nyquist))?.alpha;
    // finer grid for the floor: three half-overlapping segments
    let fine = WelchOptions::default().with_segment(realiased.len() / 2);
    let s_r_fine = welch_psd(&realiased, p.scan_period, &fine)?;
    s_r_fine.write_csv(&o.add("psd_realiased_fine.csv"))?;
    let floor_alpha = fit_power_law(&s_r_fine, (0.0, 3e-4))?.alpha;
    let ratio = value_near(&s_q, 1e-3) / value_near(&s_r, 1e-3);
    let s_df_1hz = fit_power_law(&s_f, full)?.eval(1.0);
    Ok(vec![
        Check::within(
            "realiased_alpha",
            alpha_r,
            TARGET_REALIASED_ALPHA - 0.08,
            TARGET_REALIASED_ALPHA + 0.08,
        ),
        Check::within("power_drop_at_1e-3hz", ratio, 30.0, 300.0),
        // a floor stops rising toward low frequency
        Check::at_most("alpha_below_3e-4hz", floor_alpha, 0.5),
        Check::factor("s_df_1hz", s_df_1hz, TARGET_FREQ_NOISE_1HZ, 2.0),
    ])
}

/// Log-binned value at `f`, so single-bin scatter does not decide a ratio.
fn value_near(s: &Spectrum, f: f64) -> f64 {
    let binned = crate::spectral::log_bin(s, 10.0);
    binned.value_at(f).unwrap_or(f64::NAN)
}

fn fig_s4(seed: u64, o: &mut Outputs) -> Result<Vec<Check>> {
    let p = DeviceParams::qubit_a();
    let env_spec = |correlation: f64| EnvironmentSpec {
        flux: Some(FluxNoiseSpec {
            correlation,
            ..Default::default()
        }),
        ..qubit_a_background()
    };
    let low_cfg = LowBandConfig::default();
    let low_run = |c: f64| -> Result<CpsdReport> {
        let env = compose_environment(&env_spec(c), None, low_cfg.duration(), 0.1, seed)?;
        run_low_bandwidth_cpsd(&env, &p, &low_cfg, seed)
    };
    let quiet = low_run(0.0)?;
    let loud = low_run(1.0)?;
    quiet.write_csv(&o.add("cpsd_low.csv"))?;
    loud.write_csv(&o.add("cpsd_low_correlated.csv"))?;

    let high_cfg = HighBandConfig::default();
    let env = compose_environment(
        &env_spec(0.0),
        None,
        high_cfg.duration(&p) + 1.0,
        1.0 / p.shot_rate,
        seed,
    )?;
    let high = run_high_bandwidth_cpsd(&env, &p, &high_cfg, seed)?;
    high.write_csv(&o.add("cpsd_high.csv"))?;
    CpsdReport::stitch(&quiet, &high).write_csv(&o.add("cpsd.csv"))?;

    let floor = quiet.floor.first().copied().unwrap_or(f64::NAN);
    let nan = f64::NAN;
    Ok(vec![
        Check::within(
            "low_floor",
            quiet.normalized_rms(0.0, 1.0).unwrap_or(nan),
            0.04,
            0.08,
        ),
        Check::within(
            "bound_1e-2hz",
            correlation_bound(&quiet, 1e-2).unwrap_or(nan),
            0.04,
            0.08,
        ),
        Check::at_least(
            "correlated_over_floor",
            loud.normalized_median(0.0, 1.0).unwrap_or(nan) / floor,
            5.0,
        ),
        Check::within(
            "bound_1hz",
            correlation_bound(&high, 1.0).unwrap_or(nan),
            0.05,
            0.15,
        ),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_names() {
        for f in Figure::ALL {
            assert_eq!(f.as_str().parse::<Figure>().unwrap(), f);
        }
        assert_eq!("FIGs4".parse::<Figure>().unwrap(), Figure::FigS4);
        assert!("fig5".parse::<Figure>().is_err());
    }

    #[test]
    fn check_bounds() {
        assert!(Check::factor("x", 2.0, 1.0, 2.0).pass);
        assert!(!Check::factor("x", 2.01, 1.0, 2.0).pass);
        assert!(Check::relative("x", 0.9, 1.0, 0.1).pass);
        assert!(!Check::at_least("x", f64::NAN, 0.0).pass);
        assert!(Check::holds("ok", true).to_string().starts_with("PASS ok"));
    }

    #[test]
    fn fig3b_writes_a_verdict() {
        let dir = tempfile::tempdir().unwrap();
        let v = reproduce(Figure::Fig3b, 3, dir.path()).unwrap();
        assert_eq!(v.checks.len(), 2);
        let back: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("verdict.json")).unwrap())
                .unwrap();
        assert_eq!(back["figure"], "fig3b");
        assert!(dir.path().join("manifest.json").exists());
    }
}
