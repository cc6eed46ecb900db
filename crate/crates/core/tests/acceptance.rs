//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines reach stdout. Known
//! shortfalls are listed in `EXPECTED_FAILURES`; the process exits non-zero
//! when the set of failing checks differs from that list in either direction.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::Instant;

use chargenoise::electrostatics::{
    induced_charge, sample_jump_distribution, solve_laplace, Cell, GeometryGrid, GeometrySpec,
};
use chargenoise::estimation::fit_charge_scan;
use chargenoise::model::{alias_charge_delta, ramsey_population, DeviceParams, OffsetCharge};
use chargenoise::noise::EnvironmentTrace;
use chargenoise::pulse::{run_charge_scan, scan_expectation, ScanPlan};
use chargenoise::reproduce::{reproduce, Check, Figure, Verdict};
use chargenoise::rng::{stream, Substream};
use chargenoise::spectral::{interleaved_cross_psd, welch_psd, WelchOptions};
use rand::Rng;

const SEED: u64 = 1;

/// Criterion-7 sub-checks that the criterion-2 trace cannot meet.
const EXPECTED_FAILURES: &[&str] = &["7/realiased_alpha", "7/s_df_1hz"];

struct Ledger {
    failing: BTreeSet<String>,
}

impl Ledger {
    fn criterion(&mut self, id: u32, title: &str, checks: &[Check]) {
        let pass = checks.iter().all(|c| c.pass);
        println!(
            "criterion {id} ({title}): {}",
            if pass { "PASS" } else { "FAIL" }
        );
        for c in checks {
            println!("    {c}");
            if !c.pass {
                self.failing.insert(format!("{id}/{}", c.name));
            }
        }
    }
}

fn static_env(charge_e: f64, parity: Vec<i8>, dt: f64) -> EnvironmentTrace {
    let n = parity.len();
    EnvironmentTrace {
        dt,
        charge_e: vec![charge_e; n],
        parity,
        flux: vec![0.0; n],
        seed: 0,
    }
}

fn eq1_exactness() -> Vec<Check> {
    let start = Instant::now();
    let p = DeviceParams::qubit_a();
    let plan = ScanPlan {
        n_points: 1000,
        shots_per_point: 1,
        span: 1.0,
    };
    let n = plan.total_shots() + 1;
    let dt = plan.span / plan.total_shots() as f64;
    let mut rng = stream(SEED, Substream::Telegraph);
    let offset = 0.137;
    let trajectories = [
        vec![1i8; n],
        vec![-1i8; n],
        (0..n)
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect(),
    ];
    let mut worst = 0.0f64;
    for parity in trajectories {
        let env = static_env(offset, parity, dt);
        let exp = scan_expectation(&env, &p, &plan, 0.0).expect("expectation scan");
        for (b, v) in exp.bias_e.iter().zip(&exp.p1) {
            let want = ramsey_population(&p, OffsetCharge::from_e(b + offset));
            worst = worst.max((v - want).abs());
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    vec![
        Check::at_most("max_abs_error", worst, 1e-12),
        Check::at_most("runtime_s", elapsed, 1.0),
    ]
}

/// Mean reported sigma and empirical error over scans at random static offsets.
fn fit_precision(p: &DeviceParams, n_scans: usize, seed: u64) -> (f64, f64) {
    let plan = ScanPlan::from_params(p);
    let dt = plan.span / plan.total_shots() as f64;
    let mut rng = stream(seed, Substream::Shots);
    let mut offsets = stream(seed, Substream::PowerLaw);
    let (mut sum_sigma, mut sum_sq, mut used) = (0.0, 0.0, 0usize);
    for _ in 0..n_scans {
        let truth = offsets.random::<f64>() - 0.5;
        let env = static_env(truth, vec![1; plan.total_shots() + 1], dt);
        let scan = run_charge_scan(&env, p, &plan, 0.0, &mut rng).expect("scan");
        let fit = fit_charge_scan(&scan, None).expect("fit");
        if fit.usable() {
            sum_sigma += fit.sigma_e;
            sum_sq += alias_charge_delta(fit.delta_e - truth).powi(2);
            used += 1;
        }
    }
    (sum_sigma / used as f64, (sum_sq / used as f64).sqrt())
}

fn fit_precision_checks() -> Vec<Check> {
    let (a_sigma, a_rms) = fit_precision(&DeviceParams::qubit_a(), 2000, SEED);
    let (b_sigma, b_rms) = fit_precision(&DeviceParams::qubit_b(), 2000, SEED);
    vec![
        Check::relative("qubit_a_fit_sigma_e", a_sigma, 0.02, 0.30),
        Check::relative("qubit_a_rms_error_e", a_rms, 0.02, 0.30),
        Check::relative("qubit_b_fit_sigma_e", b_sigma, 0.01, 0.30),
        Check::relative("qubit_b_rms_error_e", b_rms, 0.01, 0.30),
    ]
}

fn electrostatics_checks() -> Vec<Check> {
    let strip = GeometryGrid::parallel_strip(40, 5, 1.0).expect("strip");
    let field = solve_laplace(&strip, 1e-10, 20_000).expect("strip solve");
    let strip_err = (1..40)
        .map(|i| {
            let want = 1.0 - i as f64 / 40.0;
            (field.potential_at(i as f64, 2.0).unwrap() - want).abs() / want
        })
        .fold(0.0f64, f64::max);

    let coarse_spec = GeometrySpec::default();
    let fine_spec = GeometrySpec {
        pitch_um: coarse_spec.pitch_um / 2.0,
        ..coarse_spec
    };
    let coarse = solve_laplace(&coarse_spec.build().unwrap(), 1e-8, 50_000).expect("coarse");
    let fine = solve_laplace(&fine_spec.build().unwrap(), 1e-8, 200_000).expect("fine");

    let mut rng = stream(SEED, Substream::Geometry);
    let g = &coarse.grid;
    let (xm, ym) = ((g.nx - 1) as f64 * g.h, (g.ny - 1) as f64 * g.h);
    let mut in_range = true;
    let mut gap_points = 0;
    while gap_points < 20_000 {
        let (x, y) = (rng.random::<f64>() * xm, rng.random::<f64>() * ym);
        if g.cell_at(x, y) != Some(Cell::Gap) {
            continue;
        }
        gap_points += 1;
        let q = induced_charge(&coarse, x, y).unwrap().charge_e;
        in_range &= (-1.0..=0.0).contains(&q);
    }

    let f_coarse = sample_jump_distribution(&coarse, 400_000, SEED).fraction_above(0.1);
    let f_fine = sample_jump_distribution(&fine, 400_000, SEED).fraction_above(0.1);
    vec![
        Check::at_most("parallel_strip_rel_error", strip_err, 0.01),
        Check::holds("induced_charge_in_[-1,0]", in_range),
        Check::at_most(
            "refinement_drift_rel",
            (f_fine - f_coarse).abs() / f_coarse,
            0.02,
        ),
    ]
}

/// Bernoulli ±1 shots: RMS of the interleaved cross-spectrum relative to the
/// direct white level, and how it scales with the number of averages.
fn projection_noise_checks() -> Vec<Check> {
    let seg = 1usize << 12;
    let opts = WelchOptions {
        overlap: 0.0,
        ..WelchOptions::default().with_segment(seg)
    };
    let floor_at = |n_avg: usize, seed: u64| -> (f64, f64, usize) {
        let mut rng = stream(seed, Substream::Shots);
        let shots: Vec<f64> = (0..2 * seg * n_avg)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let cross = interleaved_cross_psd(&shots, 1e-4, &opts).unwrap();
        let direct = welch_psd(&shots, 1e-4, &opts).unwrap();
        let level = direct.values.iter().sum::<f64>() / direct.len() as f64;
        let rms = (cross.values.iter().map(|v| v * v).sum::<f64>() / cross.len() as f64).sqrt();
        (rms, level, cross.n_averages)
    };
    // the 60 s fast record: 600k cycles in 2^12-sample interleaved segments
    let (rms, level, _) = floor_at(73, SEED);
    let mut checks = vec![Check::at_least("direct_over_cross", level / rms, 5.0)];
    let (r16, _, n16) = floor_at(16, SEED + 1);
    for (n_avg, seed) in [(32, SEED + 2), (64, SEED + 3)] {
        let (r, _, n) = floor_at(n_avg, seed);
        let expected = (n16 as f64 / n as f64).sqrt();
        checks.push(Check::relative(
            &format!("scaling_{n16}_to_{n}"),
            r / r16,
            expected,
            0.25,
        ));
    }
    checks
}

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv" || x == "json"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn figure(verdicts: &[(Figure, Verdict)], f: Figure) -> &[Check] {
    &verdicts.iter().find(|(g, _)| *g == f).unwrap().1.checks
}

fn main() {
    let started = Instant::now();
    let root = tempfile::tempdir().expect("tempdir");
    let mut ledger = Ledger {
        failing: BTreeSet::new(),
    };

    let mut verdicts = Vec::new();
    let mut identical = Vec::new();
    for f in Figure::ALL {
        let first = root.path().join(format!("{f}_a"));
        let second = root.path().join(format!("{f}_b"));
        let v = reproduce(f, SEED, &first).expect("reproduce");
        reproduce(f, SEED, &second).expect("reproduce again");
        let (a, b) = (csv_bytes(&first), csv_bytes(&second));
        identical.push(Check::holds(
            &format!("{f}_byte_identical_{}_files", a.len()),
            !a.is_empty() && a == b,
        ));
        verdicts.push((f, v));
    }

    ledger.criterion(
        1,
        "scan expectation equals the closed form",
        &eq1_exactness(),
    );
    ledger.criterion(2, "charge PSD round trip", figure(&verdicts, Figure::Fig3c));
    ledger.criterion(3, "parity spectrum knee", figure(&verdicts, Figure::Fig3b));
    ledger.criterion(4, "fit precision", &fit_precision_checks());
    ledger.criterion(5, "jump statistics", figure(&verdicts, Figure::Fig4));
    ledger.criterion(6, "electrostatics", &electrostatics_checks());
    ledger.criterion(7, "aliasing analysis", figure(&verdicts, Figure::FigS1));
    ledger.criterion(
        8,
        "projection-noise suppression",
        &projection_noise_checks(),
    );
    ledger.criterion(
        9,
        "charge-flux CPSD floor",
        figure(&verdicts, Figure::FigS4),
    );
    ledger.criterion(10, "determinism", &identical);

    let expected: BTreeSet<String> = EXPECTED_FAILURES.iter().map(|s| s.to_string()).collect();
    let unexpected: Vec<_> = ledger.failing.difference(&expected).collect();
    let recovered: Vec<_> = expected.difference(&ledger.failing).collect();
    println!(
        "acceptance: {} failing check(s), {} expected; {:.1} s",
        ledger.failing.len(),
        expected.len(),
        started.elapsed().as_secs_f64()
    );
    if !unexpected.is_empty() || !recovered.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        println!("expected failures that now pass: {recovered:?}");
        std::process::exit(1);
    }
}
