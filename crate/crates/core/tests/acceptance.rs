//! Acceptance criteria 1-8. Runs without the libtest harness so the
//! criteria execute one after another (keeping the runtime checks honest)
//! and every PASS/FAIL line is printed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tlsloss::fixtures;
use tlsloss::io::{digest_bytes, load_simexp_config, write_report, ExtractionReport, Report, ReportFormat};
use tlsloss::simexp::{run_simulated_experiment, WorstCaseCurve};
use tlsloss::{
    condition_number, extract_mc_with, least_squares, nnls_solve, predict_q_mc, ExtractionResult, LinearSystem,
    LossVector, McOptions, ParticipationMatrix, QtlsDistribution,
};

const KAPPA_ANI: f64 = 110_201.0;
const KAPPA_ISO: f64 = 2_001.0;
const KAPPA_REL_TOL: f64 = 0.02;
const KAPPA_RATIO: f64 = 55.0;
const KAPPA_RATIO_TOL: f64 = 3.0;

const IDENTITY_REL_STDERR: f64 = 0.05;
const IDENTITY_CI_REL_TOL: f64 = 0.05;
const Z_95: f64 = 1.959_963_984_540_054;

const RECOVERY_REL_TOL: f64 = 1e-9;
const TANGENT_REL_TOL: f64 = 1e-6;

const NOISY_REL_STDERR: f64 = 0.02;
const MC_TRIALS: usize = 10_000;
const SEED: u64 = 1;

const SIM_SEED: u64 = 1;
const RESOLVED_N: usize = 120;
const UNRESOLVED_FRACTION: f64 = 0.01;

const Q_RANGE: (f64, f64) = (0.8e6, 3.0e6);

const NNLS_INSTANCES: usize = 1000;
const KKT_TOL: f64 = 1e-9;
const LS_MATCH_TOL: f64 = 1e-9;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn sci(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.4e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn within(elapsed: Duration, limit_s: f64) -> (bool, String) {
    let s = elapsed.as_secs_f64();
    (s < limit_s, format!("{s:.3}s < {limit_s}s"))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let ideal = condition_number(&fixtures::p_ideal().participation_matrix().unwrap()).unwrap().kappa;
    let ani = condition_number(&fixtures::p_ani().participation_matrix().unwrap()).unwrap().kappa;
    let iso = condition_number(&fixtures::p_iso().participation_matrix().unwrap()).unwrap().kappa;
    let (fast, timing) = within(start.elapsed(), 1.0);
    let ratio = ani / iso;
    let pass = ideal == 1.0
        && rel(ani, KAPPA_ANI) <= KAPPA_REL_TOL
        && rel(iso, KAPPA_ISO) <= KAPPA_REL_TOL
        && (ratio - KAPPA_RATIO).abs() <= KAPPA_RATIO_TOL
        && fast;
    Outcome {
        pass,
        detail: format!("kappa ideal={ideal} ani={ani:.1} iso={iso:.2} ratio={ratio:.2}; {timing}"),
    }
}

fn criterion_2() -> Outcome {
    let p = fixtures::p_ideal().participation_matrix().unwrap();
    let means = [9.6e-5, 3.4e-4, 6.6e-4, 2.6e-7];
    let dists: Vec<QtlsDistribution> = p
        .devices()
        .iter()
        .zip(means)
        .map(|(d, m)| QtlsDistribution::new(d.id.clone(), m, IDENTITY_REL_STDERR * m, 30).unwrap())
        .collect();
    let start = Instant::now();
    let r = extract_mc_with(&p, &dists, MC_TRIALS, SEED, &McOptions::default()).unwrap();
    let (fast, timing) = within(start.elapsed(), 5.0);
    let expected = Z_95 * IDENTITY_REL_STDERR;
    let fractional: Vec<f64> = (0..4).map(|i| r.ci95[i].width() / 2.0 / means[i]).collect();
    let worst = fractional.iter().map(|f| rel(*f, expected)).fold(0.0, f64::max);
    Outcome {
        pass: worst <= IDENTITY_CI_REL_TOL && fast,
        detail: format!("fractional half-widths {fractional:.4?} vs {expected:.4}, worst rel dev {worst:.4}; {timing}"),
    }
}

/// `P_iso · x*` with `x*` the published tangents converted to loss factors.
fn iso_forward() -> (ParticipationMatrix, LossVector, Vec<f64>) {
    let p = fixtures::p_iso().participation_matrix().unwrap();
    let x = fixtures::published_tangents().loss_vector().to_factors(p.regions()).unwrap();
    let b = p
        .devices()
        .iter()
        .map(|d| tlsloss::inverse_q_forward(&d.participation, &x).unwrap())
        .collect();
    (p, x, b)
}

fn iso_distributions(p: &ParticipationMatrix, b: &[f64], rel_stderr: f64) -> Vec<QtlsDistribution> {
    p.devices()
        .iter()
        .zip(b)
        .map(|(d, &m)| QtlsDistribution::new(d.id.clone(), m, rel_stderr * m, 30).unwrap())
        .collect()
}

fn noise_free_extraction() -> ExtractionResult {
    let (p, _, b) = iso_forward();
    extract_mc_with(&p, &iso_distributions(&p, &b, 0.0), 100, SEED, &McOptions::default()).unwrap()
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let (p, x, _) = iso_forward();
    let r = noise_free_extraction();
    let tangents = r.point.to_tangents(p.regions()).unwrap();
    let (fast, timing) = within(start.elapsed(), 1.0);
    let published = fixtures::published_tangents();
    let x_err = (0..4).map(|i| rel(r.point.values[i], x.values[i])).fold(0.0, f64::max);
    let t_err = (0..4).map(|i| rel(tangents.values[i], published.values[i])).fold(0.0, f64::max);
    Outcome {
        pass: x_err <= RECOVERY_REL_TOL && t_err <= TANGENT_REL_TOL && fast,
        detail: format!("max rel error factors {x_err:.2e}, tangents {t_err:.2e}; {timing}"),
    }
}

fn noisy_report(parallel: bool) -> Report<ExtractionReport> {
    let (p, _, b) = iso_forward();
    let opts = McOptions {
        parallel,
        ..McOptions::default()
    };
    let r = extract_mc_with(&p, &iso_distributions(&p, &b, NOISY_REL_STDERR), MC_TRIALS, SEED, &opts).unwrap();
    Report::new(
        vec![digest_bytes("p_iso.json", fixtures::P_ISO_JSON.as_bytes())],
        ExtractionReport::new(r, p.regions()).unwrap(),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let report = noisy_report(true);
    let (fast, timing) = within(start.elapsed(), 10.0);
    let published = fixtures::published_tangents();
    let mean = &report.result.tangents.mean;
    let inside: Vec<bool> = (0..4)
        .map(|i| (mean[i] - published.values[i]).abs() <= published.ci95_half_width[i])
        .collect();
    Outcome {
        pass: inside.iter().all(|&b| b) && fast,
        detail: format!("tangent means {}, inside {inside:?}; {timing}", sci(mean)),
    }
}

fn simulate(config: &str, parallel: bool) -> Report<WorstCaseCurve> {
    let (mut cfg, inputs) = load_simexp_config(fixture(config), Some(SIM_SEED)).unwrap();
    cfg.parallel = parallel;
    Report::new(inputs, run_simulated_experiment(&cfg).unwrap())
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let iso = simulate("simexp_iso.json", true).result;
    let ani = simulate("simexp_ani.json", true).result;
    let (fast, timing) = within(start.elapsed(), 120.0);
    let interfaces = ["MS", "SA", "MA"];

    let iso_low: Vec<f64> = interfaces
        .iter()
        .map(|r| iso.point(r, RESOLVED_N).unwrap().worst_low)
        .collect();
    let a = iso_low.iter().all(|&v| v > 0.0);

    let ani_frac: Vec<f64> = interfaces
        .iter()
        .map(|r| {
            let i = ani.regions.iter().position(|n| n == r).unwrap();
            ani.point(r, RESOLVED_N).unwrap().worst_low / ani.target[i]
        })
        .collect();
    let b = ani_frac.iter().any(|&f| f < UNRESOLVED_FRACTION);

    let shrinks = |c: &WorstCaseCurve| {
        c.regions
            .iter()
            .all(|r| c.point(r, 240).unwrap().width() <= c.point(r, 40).unwrap().width())
    };
    let c = shrinks(&iso) && shrinks(&ani);
    Outcome {
        pass: a && b && c && fast,
        detail: format!(
            "(a) iso worst_low@120 {} -> {a}; (b) ani worst_low/target@120 {ani_frac:.3?} -> {b}; (c) {c}; {timing}",
            sci(&iso_low)
        ),
    }
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let (p, _, _) = iso_forward();
    let r = noise_free_extraction();
    let qs: Vec<f64> = p
        .devices()
        .iter()
        .map(|d| predict_q_mc(&d.participation, &r).unwrap().q_mean)
        .collect();
    let (fast, timing) = within(start.elapsed(), 5.0);
    let pass = qs.iter().all(|q| (Q_RANGE.0..=Q_RANGE.1).contains(q)) && fast;
    Outcome {
        pass,
        detail: format!("Q {} in [{:.1e}, {:.1e}]; {timing}", sci(&qs), Q_RANGE.0, Q_RANGE.1),
    }
}

fn report_bytes<T: tlsloss::io::ReportData>(report: &Report<T>, dir: &Path, name: &str) -> Vec<u8> {
    let path = dir.join(name);
    write_report(report, &path, ReportFormat::from_path(&path)).unwrap();
    std::fs::read(path).unwrap()
}

fn criterion_7() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut identical = Vec::new();
    for ext in ["json", "csv"] {
        let a = report_bytes(&noisy_report(true), dir.path(), &format!("x1.{ext}"));
        let b = report_bytes(&noisy_report(true), dir.path(), &format!("x2.{ext}"));
        let c = report_bytes(&noisy_report(false), dir.path(), &format!("x3.{ext}"));
        identical.push((format!("extract.{ext}"), a == b && a == c));
        for cfg in ["simexp_iso.json", "simexp_ani.json"] {
            let a = report_bytes(&simulate(cfg, true), dir.path(), &format!("s1.{ext}"));
            let b = report_bytes(&simulate(cfg, true), dir.path(), &format!("s2.{ext}"));
            let c = report_bytes(&simulate(cfg, false), dir.path(), &format!("s3.{ext}"));
            identical.push((format!("{}.{ext}", cfg.trim_end_matches(".json")), a == b && a == c));
        }
    }
    Outcome {
        pass: identical.iter().all(|(_, ok)| *ok),
        detail: format!("bit-identical across reruns and serial/parallel: {identical:?}"),
    }
}

fn random_instance(rng: &mut ChaCha8Rng) -> LinearSystem {
    let m = rng.random_range(1..=12);
    let n = rng.random_range(1..=m);
    let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let b = if rng.random_bool(0.5) {
        // Consistent-ish system with a nonnegative generator.
        let x = DVector::from_fn(n, |_, _| rng.random_range(0.0..1.0));
        &a * x + DVector::from_fn(m, |_, _| 1e-3 * rng.random_range(-1.0..1.0))
    } else {
        DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0))
    };
    LinearSystem::new(a, b).unwrap()
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let start = Instant::now();
    let (mut kkt_fail, mut beat_ls, mut ls_mismatch, mut ls_nonneg) = (0, 0, 0, 0);
    for _ in 0..NNLS_INSTANCES {
        let sys = random_instance(&mut rng);
        let sol = nnls_solve(&sys).unwrap();
        let scale = sys.a.norm() * sys.b.norm();
        let w = sys.a.transpose() * (&sys.b - &sys.a * &sol.x);
        let kkt = sol.x.iter().zip(w.iter()).all(|(&x, &wj)| {
            x >= 0.0 && wj <= KKT_TOL * scale && (x == 0.0 || wj.abs() <= KKT_TOL * scale)
        });
        kkt_fail += usize::from(!kkt);

        let ls = least_squares(&sys).unwrap();
        let ls_res = sys.residual_norm(&ls);
        if sol.residual_norm < ls_res * (1.0 - 1e-12) - 1e-14 * sys.b.norm() {
            beat_ls += 1;
        }
        if ls.iter().all(|&v| v >= 0.0) {
            ls_nonneg += 1;
            if (&sol.x - &ls).norm() > LS_MATCH_TOL * ls.norm().max(1e-300) {
                ls_mismatch += 1;
            }
        }
    }
    let (fast, timing) = within(start.elapsed(), 10.0);
    Outcome {
        pass: kkt_fail == 0 && beat_ls == 0 && ls_mismatch == 0 && ls_nonneg > 0 && fast,
        detail: format!(
            "{NNLS_INSTANCES} instances: KKT failures {kkt_fail}, beat LS {beat_ls}, \
             LS>=0 cases {ls_nonneg} with {ls_mismatch} mismatches; {timing}"
        ),
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("golden condition numbers", criterion_1),
        ("identity-matrix uncertainty", criterion_2),
        ("noise-free round trip", criterion_3),
        ("noisy recovery", criterion_4),
        ("device-count sweep", criterion_5),
        ("prediction range", criterion_6),
        ("determinism", criterion_7),
        ("solver properties", criterion_8),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let out = run();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("criterion {} [{tag}] {name}: {}", k + 1, out.detail);
        failed += usize::from(!out.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
