//! `simulate` and `analyze`: configuration in, CSV files and a manifest out.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::{ProtocolConfig, RunConfig};
use crate::cpsd::{run_high_band_series, run_low_band_series};
use crate::electrostatics::{solve_laplace, InducedChargeSampler, PotentialField};
use crate::error::{invalid, Error, Result};
use crate::estimation::{build_trace, detect_jumps, ChargeTrace, Histogram, JUMP_THRESHOLD_E};
use crate::io::{read_csv_file, ChunkedCsvWriter, Manifest};
use crate::model::DeviceParams;
use crate::noise::{compose_environment, EnvironmentTrace, JumpSizeSampler};
use crate::pulse::{
    run_scan_series, shot_writer, Conditioner, FastProtocolRunner, ScanPlan, ShotRecord,
    SHOT_HEADER,
};
use crate::spectral::{interleaved_cross_psd, welch_psd, WelchOptions};

pub const RESOLVED_CONFIG: &str = "config.resolved.toml";
/// Laplace tolerance and iteration cap for jump-size geometries.
pub const LAPLACE_TOL: f64 = 1e-8;
pub const LAPLACE_MAX_ITER: usize = 50_000;

pub fn solve_geometry(cfg: &RunConfig) -> Result<PotentialField> {
    solve_laplace(&cfg.geometry.build()?, LAPLACE_TOL, LAPLACE_MAX_ITER)
}

/// Environment for `cfg`, solving the geometry only when jumps are enabled.
pub fn build_environment(cfg: &RunConfig) -> Result<EnvironmentTrace> {
    let (duration, dt) = (cfg.env_duration()?, cfg.env_step()?);
    match cfg.environment.jumps {
        Some(_) => {
            let field = solve_geometry(cfg)?;
            let sampler = InducedChargeSampler { field: &field };
            compose_environment(
                &cfg.environment,
                Some(&sampler as &dyn JumpSizeSampler),
                duration,
                dt,
                cfg.seed,
            )
        }
        None => compose_environment(&cfg.environment, None, duration, dt, cfg.seed),
    }
}

#[derive(Serialize)]
struct EnvRow {
    t_s: f64,
    charge_e: f64,
    parity: i8,
    flux_phi: f64,
}

fn write_environment(env: &EnvironmentTrace, dir: &Path, chunk_rows: usize) -> Result<Vec<String>> {
    let mut w = ChunkedCsvWriter::new(
        dir,
        "environment",
        &["t_s", "charge_e", "parity", "flux_phi"],
        chunk_rows,
    );
    for i in 0..env.len() {
        w.push(EnvRow {
            t_s: env.time(i),
            charge_e: env.charge_e[i],
            parity: env.parity[i],
            flux_phi: env.flux[i],
        })?;
    }
    Ok(w.finish()?.0)
}

/// Runs the configured protocol and writes everything to `out`.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let params = cfg.params()?;
    let resolved = cfg.resolved_toml()?;
    fs::write(out.join(RESOLVED_CONFIG), &resolved)?;
    let mut manifest = Manifest::new(
        format!("simulate {}", cfg.protocol.name()),
        cfg.seed,
        &resolved,
    );
    let mut files = vec![RESOLVED_CONFIG.to_string()];

    let env = build_environment(cfg)?;
    log::info!("environment: {} samples at dt = {} s", env.len(), env.dt);
    if cfg.output.environment {
        files.extend(write_environment(&env, out, cfg.output.chunk_rows)?);
    }

    match &cfg.protocol {
        ProtocolConfig::Scan(s) => {
            let plan = ScanPlan::from_params(&params);
            let n_scans = (s.duration / params.scan_period + 1e-9).floor() as usize;
            let fits =
                run_scan_series(&env, &params, &plan, n_scans, params.scan_period, cfg.seed)?;
            let trace = build_trace(&fits);
            trace.write_csv(&out.join("trace.csv"))?;
            detect_jumps(&trace, JUMP_THRESHOLD_E).write_csv(&out.join("jumps.csv"))?;
            files.extend(["trace.csv".into(), "jumps.csv".into()]);
        }
        ProtocolConfig::Fast(fast) => {
            if cfg.streams_shots()? {
                log::info!(
                    "{} cycles exceed one {}-row chunk; streaming to disk",
                    cfg.shot_budget()?.unwrap_or(0),
                    cfg.output.chunk_rows
                );
            }
            let mut runner = FastProtocolRunner::new(&env, &params, fast, cfg.seed)?;
            let mut writer = shot_writer(out, "shots", cfg.output.chunk_rows);
            while !runner.is_done() {
                for r in runner.next_chunk(1 << 16)? {
                    writer.push(r)?;
                }
            }
            let (chunks, total) = writer.finish()?;
            log::info!("{total} shots in {} chunk(s)", chunks.len());
            files.extend(chunks);
            build_trace(runner.fits()).write_csv(&out.join("calibration.csv"))?;
            files.push("calibration.csv".into());
        }
        ProtocolConfig::LowBandCpsd(l) => {
            let series = run_low_band_series(&env, &params, l, cfg.seed)?;
            series.write_csv(&out.join("series.csv"))?;
            series.report(l)?.write_csv(&out.join("cpsd.csv"))?;
            files.extend(["series.csv".into(), "cpsd.csv".into()]);
        }
        ProtocolConfig::HighBandCpsd(h) => {
            let series = run_high_band_series(&env, &params, h, cfg.seed)?;
            series.write_csv(&out.join("series.csv"))?;
            series
                .report(&params, h)?
                .write_csv(&out.join("cpsd.csv"))?;
            files.extend(["series.csv".into(), "cpsd.csv".into()]);
        }
    }
    for f in &files {
        manifest.add_file(out, f)?;
    }
    manifest.write(out)?;
    Ok(manifest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalysisKind {
    /// Welch PSD of a charge trace.
    TracePsd,
    /// Interleaved cross-PSD of the parity-conditioned charge stream.
    ShotsCrossPsd,
    /// Jump catalog and increment histogram of a charge trace.
    Jumps,
}

impl AnalysisKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AnalysisKind::TracePsd => "trace-psd",
            AnalysisKind::ShotsCrossPsd => "shots-cross-psd",
            AnalysisKind::Jumps => "jumps",
        }
    }
}

impl FromStr for AnalysisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trace-psd" => Ok(AnalysisKind::TracePsd),
            "shots-cross-psd" => Ok(AnalysisKind::ShotsCrossPsd),
            "jumps" => Ok(AnalysisKind::Jumps),
            other => Err(invalid(format!(
                "unknown analysis `{other}` (expected trace-psd, shots-cross-psd or jumps)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisOptions {
    pub params: DeviceParams,
    pub segment_len: Option<usize>,
    pub threshold_e: f64,
    pub n_bins: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            params: DeviceParams::qubit_a(),
            segment_len: None,
            threshold_e: JUMP_THRESHOLD_E,
            n_bins: 100,
        }
    }
}

#[derive(Debug, Deserialize)]
struct TraceRow {
    t_s: f64,
    dng_e: f64,
    sigma_e: f64,
}

pub fn read_trace(path: &Path) -> Result<ChargeTrace> {
    let rows: Vec<TraceRow> = read_csv_file(path, &["t_s", "dng_e", "sigma_e"])?;
    let mut trace = ChargeTrace::default();
    for r in rows {
        trace.t.push(r.t_s);
        trace.value_e.push(r.dng_e);
        trace.sigma_e.push(r.sigma_e);
        trace.valid.push(r.sigma_e.is_finite());
    }
    Ok(trace)
}

fn single_input(inputs: &[PathBuf]) -> Result<&Path> {
    match inputs {
        [one] => Ok(one),
        _ => Err(invalid(format!(
            "expected one input file, got {}",
            inputs.len()
        ))),
    }
}

fn uniform_step(t: &[f64], source: &Path) -> Result<f64> {
    let dt = match t {
        [a, b, ..] => b - a,
        _ => {
            return Err(Error::SeriesTooShort {
                required: 2,
                got: t.len(),
            })
        }
    };
    let uniform = t
        .windows(2)
        .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.abs().max(1.0));
    if !(dt > 0.0) || !uniform {
        return Err(Error::Schema {
            source_name: source.display().to_string(),
            message: "t_s must be uniformly increasing".into(),
        });
    }
    Ok(dt)
}

fn welch_opts(segment_len: Option<usize>) -> WelchOptions {
    WelchOptions {
        segment_len,
        ..Default::default()
    }
}

/// Reduces input CSVs; shot records may span several chunk files, read in
/// the given order.
pub fn analyze(
    kind: AnalysisKind,
    inputs: &[PathBuf],
    out: &Path,
    opts: &AnalysisOptions,
) -> Result<Manifest> {
    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    match kind {
        AnalysisKind::TracePsd => {
            let path = single_input(inputs)?;
            let trace = read_trace(path)?;
            let dt = uniform_step(&trace.t, path)?;
            let psd = welch_psd(&trace.value_e, dt, &welch_opts(opts.segment_len))?;
            psd.write_csv(&out.join("psd.csv"))?;
            files.push("psd.csv");
        }
        AnalysisKind::ShotsCrossPsd => {
            if inputs.is_empty() {
                return Err(invalid("no shot files given"));
            }
            let mut cond = Conditioner::new(&opts.params, None);
            let mut q = Vec::new();
            for path in inputs {
                let shots: Vec<ShotRecord> = read_csv_file(path, &SHOT_HEADER)?;
                q.extend(
                    shots
                        .iter()
                        .filter_map(|s| cond.push(s))
                        .map(|s| s.charge_e),
                );
            }
            if cond.orphans() > 0 {
                log::warn!("{} charge shots without a parity partner", cond.orphans());
            }
            let dt = 1.0 / opts.params.shot_rate;
            let seg = opts.segment_len.or_else(|| {
                // largest power of two with at least eight interleaved segments
                let half = q.len() / 2;
                (half >= 16).then(|| 1usize << (half / 8).max(2).ilog2())
            });
            let o = welch_opts(seg);
            interleaved_cross_psd(&q, dt, &o)?.write_csv(&out.join("cross_psd.csv"))?;
            welch_psd(&q, dt, &o)?.write_csv(&out.join("direct_psd.csv"))?;
            files.extend(["cross_psd.csv", "direct_psd.csv"]);
        }
        AnalysisKind::Jumps => {
            let path = single_input(inputs)?;
            let trace = read_trace(path)?;
            detect_jumps(&trace, opts.threshold_e).write_csv(&out.join("jumps.csv"))?;
            let inc: Vec<f64> = trace.increments().iter().map(|(_, d)| *d).collect();
            Histogram::new(&inc, opts.n_bins).write_csv(&out.join("histogram.csv"))?;
            files.extend(["jumps.csv", "histogram.csv"]);
        }
    }
    let description = inputs
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(" ");
    let mut manifest = Manifest::new(format!("analyze {}", kind.as_str()), 0, &description);
    for f in files {
        manifest.add_file(out, f)?;
    }
    manifest.write(out)?;
    Ok(manifest)
}
