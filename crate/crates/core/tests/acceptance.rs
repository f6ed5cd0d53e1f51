//! Acceptance gate. Run with
//! `cargo test --release -p tsre --test acceptance -- --nocapture --test-threads=1`.
//! Each test prints one `criterion N: PASS|FAIL` line before asserting.

use std::fs;
use std::path::Path;
use std::process::Command;

use rand::{Rng, RngExt};
use rand_distr::{Distribution, StandardNormal};

use tsre::estimators::{estimate_summary, ratio, Bootstrap, Method};
use tsre::genotype::{compute_grm, simulate_genotypes, standardize, Grm, StandardizedGenotypes};
use tsre::harness::{run_scenario, MethodRun, ReplicateResult, ScenarioRow, Selection, Target};
use tsre::rng;
use tsre::simgen::ScenarioConfig;
use tsre::sumstats::per_variant_regression;
use tsre::theory::{bias_ivw, bias_tsre, MomentParams, TheoryReport};
use tsre::tsre::{moment_diagnostic, tsre_estimate, Centering};

const SEED: u64 = 20240601;
const RESAMPLES: usize = 100;

fn report(id: u32, pass: bool, detail: String) {
    println!("criterion {id}: {} | {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} failed: {detail}");
}

fn target_row(target: Target, row_id: &str) -> ScenarioRow {
    target
        .rows(None)
        .unwrap()
        .into_iter()
        .find(|r| r.row_id == row_id)
        .unwrap_or_else(|| panic!("{target} has no row {row_id}"))
}

fn run(target: Target, row: &ScenarioRow, reps: usize) -> Vec<ReplicateResult> {
    run_scenario(target, row, reps, SEED, RESAMPLES).unwrap().results
}

fn pick<'a>(res: &'a [ReplicateResult], method: Method, selection: Selection) -> &'a ReplicateResult {
    res.iter()
        .find(|r| r.method == method && r.selection == selection)
        .unwrap_or_else(|| panic!("no result for {method} {selection}"))
}

fn within(v: f64, centre: f64, tol: f64) -> bool {
    (v - centre).abs() <= tol
}

const TOP20: Selection = Selection::TopK(20);

#[test]
fn criterion_01_null_heavy_baseline() {
    let row = target_row(Target::Table4, "ma1000");
    let res = run(Target::Table4, &row, 100);
    let t = pick(&res, Method::Tsre, Selection::All);
    let ok = within(t.mean, 0.305, 0.05) && (0.05..=0.15).contains(&t.sd_mc);
    report(
        1,
        ok,
        format!(
            "M_a=1000: tsre mean {:.4} (want 0.305 ± 0.05), sd {:.4} (want [0.05, 0.15]), failed {}",
            t.mean, t.sd_mc, t.reps_failed
        ),
    );
}

fn balanced_satisfied_pw1() -> (ScenarioRow, Vec<ReplicateResult>) {
    let row = target_row(Target::Table2, "balanced_satisfied_pw1");
    let res = run(Target::Table2, &row, 200);
    (row, res)
}

#[test]
fn criterion_02_balanced_inside_satisfied() {
    let (_, res) = balanced_satisfied_pw1();
    let t = pick(&res, Method::Tsre, Selection::All);
    let ivw = pick(&res, Method::IvwRe, TOP20);
    let sm = pick(&res, Method::SimpleMedian, TOP20);
    let wm = pick(&res, Method::WeightedMedian, TOP20);
    let ok = within(t.mean, 0.29, 0.05)
        && within(ivw.mean, 0.43, 0.05)
        && within(sm.mean, 0.43, 0.06)
        && within(wm.mean, 0.44, 0.06);
    report(
        2,
        ok,
        format!(
            "tsre {:.3} (0.29±0.05), ivw {:.3} (0.43±0.05), sm {:.3} (0.43±0.06), wm {:.3} (0.44±0.06)",
            t.mean, ivw.mean, sm.mean, wm.mean
        ),
    );
}

#[test]
fn criterion_03_inside_violated_all_biased() {
    let mut lines = Vec::new();
    let mut ok = true;
    for id in [
        "balanced_violated_pw0.8",
        "balanced_violated_pw1",
        "directional_violated_pw0.8",
        "directional_violated_pw1",
    ] {
        let row = target_row(Target::Table2, id);
        let res = run(Target::Table2, &row, 100);
        for r in &res {
            let pass = r.mean >= 0.6;
            ok &= pass;
            lines.push(format!("{id}/{}={:.3}{}", r.method, r.mean, if pass { "" } else { "(<0.6)" }));
        }
    }
    report(3, ok, lines.join(" "));
}

#[test]
fn criterion_04_weak_valid_instruments() {
    let mut lines = Vec::new();
    let mut ok = true;
    for id in ["mb1000_sigma0.03", "mb5000_sigma0.03"] {
        let mut row = target_row(Target::Fig3, id);
        row.runs = vec![
            MethodRun::new(Method::Tsre, Selection::All),
            MethodRun::new(Method::IvwRe, TOP20),
            MethodRun::new(Method::SimpleMedian, TOP20),
            MethodRun::new(Method::WeightedMedian, TOP20),
        ];
        let res = run(Target::Fig3, &row, 100);
        let t = res[0].bias;
        ok &= t.abs() < 0.05;
        let mut line = format!("{id}: tsre bias {t:.3}");
        for r in &res[1..] {
            ok &= r.bias.abs() > 0.08;
            line.push_str(&format!(", {} bias {:.3}", r.method, r.bias));
        }
        lines.push(line);
    }
    report(4, ok, lines.join("; "));
}

#[test]
fn criterion_05_null_overload_collapse() {
    let row = target_row(Target::Table4, "ma50000");
    let res = run(Target::Table4, &row, 100);
    let t = pick(&res, Method::Tsre, Selection::All);
    let ok = t.sd_mc > 1.0 && (t.mean - 0.3).abs() > 0.1;
    report(
        5,
        ok,
        format!(
            "M_a=50000: tsre mean {:.4} (want |mean-0.3| > 0.1), sd {:.4} (want > 1.0), failed {}",
            t.mean, t.sd_mc, t.reps_failed
        ),
    );
}

#[test]
fn criterion_06_all_valid_mixture_row() {
    let mut row = target_row(Target::S4, "balanced_mb1000");
    row.runs = vec![
        MethodRun::new(Method::Tsre, Selection::All),
        MethodRun::new(Method::IvwRe, Selection::All),
    ];
    let res = run(Target::S4, &row, 100);
    let (t, ivw) = (&res[0], &res[1]);
    let ok = (-0.08..=0.02).contains(&t.bias) && within(ivw.bias, 0.18, 0.05);
    report(
        6,
        ok,
        format!(
            "tsre all-IV bias {:.4} (want [-0.08, 0.02]), ivw all-IV bias {:.4} (want 0.18 ± 0.05)",
            t.bias, ivw.bias
        ),
    );
}

// Independent oracles for the property criteria.

fn full_grm(g: &StandardizedGenotypes) -> Vec<Vec<f64>> {
    let (n, m) = (g.n(), g.m());
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = (0..m).map(|k| g.get(i, k) * g.get(j, k)).sum::<f64>() / m as f64;
        }
    }
    a
}

fn centred(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - mean).collect()
}

/// Slope ratio from explicit enumeration of unordered pairs.
fn pair_enumeration(a: &[Vec<f64>], x: &[f64], y: &[f64], centering: Centering) -> f64 {
    let (x, y) = (centred(x), centred(y));
    let n = x.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            pairs.push((a[i][j], x[i] * x[j], 0.5 * (x[i] * y[j] + y[i] * x[j])));
        }
    }
    let k = pairs.len() as f64;
    match centering {
        Centering::Raw => {
            let num: f64 = pairs.iter().map(|p| p.0 * p.2).sum();
            let den: f64 = pairs.iter().map(|p| p.0 * p.1).sum();
            num / den
        }
        Centering::Covariance => {
            let ma = pairs.iter().map(|p| p.0).sum::<f64>() / k;
            let mxx = pairs.iter().map(|p| p.1).sum::<f64>() / k;
            let mxy = pairs.iter().map(|p| p.2).sum::<f64>() / k;
            let num: f64 = pairs.iter().map(|p| (p.0 - ma) * (p.2 - mxy)).sum();
            let den: f64 = pairs.iter().map(|p| (p.0 - ma) * (p.1 - mxx)).sum();
            num / den
        }
    }
}

struct Instance {
    g: StandardizedGenotypes,
    x: Vec<f64>,
    y: Vec<f64>,
}

fn instance(index: u64) -> Instance {
    let mut r = rng::child(SEED, 1_000_000 + index);
    loop {
        let n = r.random_range(5..=50);
        let m = r.random_range(2..=20);
        let geno = simulate_genotypes(n, m, 0.05, 0.5, &mut r).unwrap();
        let Ok(g) = standardize(&geno) else { continue };
        let beta: Vec<f64> = (0..g.m()).map(|_| 0.5 * normal(&mut r)).collect();
        let theta = r.random_range(-1.0..1.0);
        let x: Vec<f64> = (0..n)
            .map(|i| g.row(i).iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + normal(&mut r))
            .collect();
        let y: Vec<f64> = x.iter().map(|xi| theta * xi + normal(&mut r)).collect();
        return Instance { g, x, y };
    }
}

fn normal<R: Rng>(r: &mut R) -> f64 {
    StandardNormal.sample(r)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn criterion_07_pair_enumeration_oracle() {
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    for k in 0..200 {
        let inst = instance(k);
        let a = compute_grm(&inst.g).unwrap();
        let full = full_grm(&inst.g);
        for c in [Centering::Raw, Centering::Covariance] {
            match tsre_estimate(&a, &inst.x, &inst.y, c) {
                Ok(fit) => worst = worst.max(rel(fit.theta_hat, pair_enumeration(&full, &inst.x, &inst.y, c))),
                Err(_) => skipped += 1,
            }
        }
    }
    report(
        7,
        worst <= 1e-10 && skipped == 0,
        format!("200 instances x 2 modes: max relative error {worst:.2e} (want <= 1e-10), weak-signal skips {skipped}"),
    );
}

#[test]
fn criterion_08_grm_oracle() {
    let (mut worst, mut worst_trace): (f64, f64) = (0.0, 0.0);
    for k in 0..200 {
        let inst = instance(k);
        let a: Grm = compute_grm(&inst.g).unwrap();
        let full = full_grm(&inst.g);
        let n = inst.g.n();
        for i in 0..n {
            for j in 0..=i {
                worst = worst.max((a.get(i, j) - full[i][j]).abs());
            }
        }
        worst_trace = worst_trace.max((a.trace() - n as f64).abs() / n as f64);
    }
    report(
        8,
        worst <= 1e-12 && worst_trace <= 1e-12,
        format!("max |A - oracle| {worst:.2e} (want <= 1e-12), max |trace/n - 1| {worst_trace:.2e}"),
    );
}

#[test]
fn criterion_09_first_order_condition() {
    let mut worst: f64 = 0.0;
    for k in 0..200 {
        let inst = instance(k);
        let a = compute_grm(&inst.g).unwrap();
        let fit = tsre_estimate(&a, &inst.x, &inst.y, Centering::Covariance).unwrap();
        let (mean, _) = moment_diagnostic(&a, &inst.x, &inst.y, fit.theta_hat, Centering::Covariance).unwrap();
        worst = worst.max(mean.abs());
    }
    report(9, worst <= 1e-12, format!("max |pair-moment mean at theta_hat| {worst:.2e} (want <= 1e-12)"));
}

#[test]
fn criterion_10_closed_form_bias() {
    // Strong-enough effects that weak-instrument attenuation stays small.
    let cfg = ScenarioConfig {
        n: 4000,
        m_b: 50,
        m_c: 50,
        sigma_gb: 0.1,
        sigma_gc_x: 0.1,
        sigma_gc_y: 0.1,
        rho_gc: 0.6,
        ..ScenarioConfig::default()
    };
    let p = MomentParams::from_config(&cfg).unwrap();
    let (want_ivw, want_tsre) = (bias_ivw(&p).unwrap(), bias_tsre(&p).unwrap());
    let row = ScenarioRow {
        row_id: "rho0.6".into(),
        cfg,
        runs: vec![
            MethodRun::new(Method::IvwFe, Selection::All),
            MethodRun::new(Method::Tsre, Selection::All),
        ],
    };
    let res = run(Target::Custom, &row, 200);
    let (ivw, t) = (res[0].bias, res[1].bias);
    let ok = rel(ivw, want_ivw) <= 0.2 && rel(t, want_tsre) <= 0.2;
    report(
        10,
        ok,
        format!(
            "ivw all-IV bias {ivw:.4} vs {want_ivw:.4} ({:.1}%), tsre bias {t:.4} vs {want_tsre:.4} ({:.1}%), want <= 20%",
            100.0 * rel(ivw, want_ivw),
            100.0 * rel(t, want_tsre)
        ),
    );
}

#[test]
fn criterion_11_asymptotic_variance() {
    let (row, res) = balanced_satisfied_pw1();
    let t = pick(&res, Method::Tsre, Selection::All);
    let theory = TheoryReport::from_config(&row.cfg).unwrap().var_theta.sqrt();
    let r = t.sd_mc / theory;
    report(
        11,
        (0.7..=1.3).contains(&r),
        format!("tsre sd over 200 reps {:.4} vs asymptotic {theory:.4} (ratio {r:.3}, want within 30%)", t.sd_mc),
    );
}

#[test]
fn criterion_12_exactness() {
    let mut worst: f64 = 0.0;
    let mut mismatches = Vec::new();
    for k in 0..50 {
        let mut r = rng::child(SEED, 2_000_000 + k);
        let (n, m) = (200, 10);
        let g = standardize(&simulate_genotypes(n, m, 0.2, 0.3, &mut r).unwrap()).unwrap();
        let beta: Vec<f64> = (0..g.m()).map(|_| 0.3 * normal(&mut r)).collect();
        let theta = r.random_range(-2.0..2.0);
        let x: Vec<f64> = (0..n)
            .map(|i| g.row(i).iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + normal(&mut r))
            .collect();
        let y: Vec<f64> = x.iter().map(|v| theta * v).collect();
        let fit = tsre_estimate(&compute_grm(&g).unwrap(), &x, &y, Centering::Covariance).unwrap();
        worst = worst.max(rel(fit.theta_hat, theta));

        let s = per_variant_regression(&g, &x, &y).unwrap();
        let one = &s[..1];
        let want = ratio(&one[0]).unwrap().theta_hat;
        for method in [Method::IvwFe, Method::IvwRe, Method::SimpleMedian, Method::WeightedMedian] {
            let got = estimate_summary(method, one, &Bootstrap { resamples: 10, seed: 1 }).unwrap().theta_hat;
            if got != want {
                mismatches.push(format!("{method}: {got} != {want}"));
            }
        }
    }
    report(
        12,
        worst <= 1e-10 && mismatches.is_empty(),
        format!(
            "tsre max relative error {worst:.2e} (want <= 1e-10); single-IV mismatches: {}",
            if mismatches.is_empty() { "none".to_string() } else { mismatches.join(", ") }
        ),
    );
}

fn replicate(out: &Path, target: &str, threads: usize, extra: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_tsre"))
        .args(["replicate", "--target", target, "--reps", "3", "--seed", "99", "--bootstrap", "50"])
        .args(["--threads", &threads.to_string(), "--out"])
        .arg(out)
        .args(extra)
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    assert!(status.success());
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn criterion_13_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let mut lines = Vec::new();
    let mut ok = true;
    for (target, extra) in [
        ("table2", &[][..]),
        ("fig3", &["--set", "n=300"][..]),
        ("s4", &["--set", "n=300", "--methods", "tsre,ivw_re,egger"][..]),
    ] {
        let runs: Vec<_> = [(1, "a"), (4, "b"), (1, "c")]
            .iter()
            .map(|&(threads, tag)| {
                let dir = tmp.path().join(format!("{target}_{tag}"));
                replicate(&dir, target, threads, extra);
                snapshot(&dir)
            })
            .collect();
        let same = runs[0] == runs[1] && runs[0] == runs[2];
        ok &= same;
        lines.push(format!("{target}: {} files {}", runs[0].len(), if same { "identical" } else { "DIFFER" }));
    }
    report(13, ok, format!("threads 1/4/1: {}", lines.join(", ")));
}
