use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tsre::genotype::{load_genotypes, standardize};
use tsre::pipeline::simulate_to_dir;
use tsre::simgen::ScenarioConfig;
use tsre::tsre::{tsre_from_genotypes, Centering};

fn tsre(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsre")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("scenario.toml");
    fs::write(&path, "n = 300\nm_b = 60\nm_c = 20\nsigma_gb = 0.08\nseed = 11\n").unwrap();
    path
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

#[test]
fn simulate_then_estimate_matches_in_memory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = small_config(tmp.path());
    let data = tmp.path().join("data");
    let out = tsre(&["simulate", "--config", p(&cfg_path), "--out", p(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["genotypes.csv", "exposure.csv", "outcome.csv", "effects.csv", "scenario.toml"] {
        assert!(data.join(f).exists(), "{f}");
    }

    let out = tsre(&[
        "estimate",
        "--method",
        "tsre,ivw_re",
        "--genotypes",
        p(&data.join("genotypes.csv")),
        "--exposure",
        p(&data.join("exposure.csv")),
        "--outcome",
        p(&data.join("outcome.csv")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(
        rows[0],
        ["method", "selection", "theta_hat", "se", "n", "m_used", "intercept", "overdispersion"]
    );
    let tsre_row = rows.iter().find(|r| r[0] == "tsre").unwrap();
    assert_eq!(tsre_row[1], "all");
    let ivw_row = rows.iter().find(|r| r[0] == "ivw_re").unwrap();
    assert_eq!(ivw_row[1], "top:20");
    assert_eq!(ivw_row[5], "20");

    let cfg = ScenarioConfig::load(&cfg_path).unwrap();
    let (ds, _) = simulate_to_dir(&cfg, &tmp.path().join("again")).unwrap();
    let g = standardize(&ds.genotypes).unwrap();
    let fit = tsre_from_genotypes(&g, &ds.x, &ds.y, Centering::Covariance).unwrap();
    assert_eq!(tsre_row[2].parse::<f64>().unwrap(), fit.theta_hat);
    assert_eq!(tsre_row[3].parse::<f64>().unwrap(), fit.se);
    let loaded = load_genotypes(&data.join("genotypes.csv")).unwrap();
    assert_eq!(loaded.dosages(), ds.genotypes.dosages());
    assert_eq!(loaded.individual_ids(), ds.genotypes.individual_ids());
    assert_eq!(loaded.variant_ids(), ds.genotypes.variant_ids());
}

#[test]
fn estimate_with_grm_file_matches_direct() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert!(tsre(&["simulate", "--config", p(&small_config(tmp.path())), "--out", p(&data)]).status.success());
    let grm = tmp.path().join("a.grm");
    let out = tsre(&["grm", "--genotypes", p(&data.join("genotypes.csv")), "--out", p(&grm)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let files = ["genotypes.csv", "exposure.csv", "outcome.csv"].map(|f| data.join(f));
    let base = [
        "estimate",
        "--method",
        "tsre",
        "--genotypes",
        p(&files[0]),
        "--exposure",
        p(&files[1]),
        "--outcome",
        p(&files[2]),
    ];
    let direct = csv_rows(&String::from_utf8(tsre(&base).stdout).unwrap());
    let mut with_grm = base.to_vec();
    with_grm.extend(["--grm", p(&grm)]);
    let via = csv_rows(&String::from_utf8(tsre(&with_grm).stdout).unwrap());
    let (a, b): (f64, f64) = (direct[1][2].parse().unwrap(), via[1][2].parse().unwrap());
    assert!((a - b).abs() <= 1e-10 * a.abs(), "{a} vs {b}");
}

#[test]
fn missing_phenotype_id_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert!(tsre(&["simulate", "--config", p(&small_config(tmp.path())), "--out", p(&data)]).status.success());
    let exposure = data.join("exposure.csv");
    let text = fs::read_to_string(&exposure).unwrap();
    let dropped = text.lines().nth(5).unwrap().split(',').next().unwrap().to_owned();
    let kept: Vec<&str> = text.lines().enumerate().filter(|(i, _)| *i != 5).map(|(_, l)| l).collect();
    fs::write(&exposure, kept.join("\n") + "\n").unwrap();

    let out = tsre(&[
        "estimate",
        "--method",
        "tsre",
        "--genotypes",
        p(&data.join("genotypes.csv")),
        "--exposure",
        p(&exposure),
        "--outcome",
        p(&data.join("outcome.csv")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&dropped), "{err}");
    assert!(out.stdout.is_empty());
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(tsre(&["replicate", "--target", "table9", "--out", "x"]).status.code(), Some(2));
    assert_eq!(tsre(&["estimate", "--method", "lasso"]).status.code(), Some(2));
    let tmp = tempfile::tempdir().unwrap();
    let out = tsre(&[
        "replicate",
        "--target",
        "table2",
        "--reps",
        "1",
        "--set",
        "no_such_field=1",
        "--out",
        p(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn theory_prints_closed_forms() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tsre(&["theory", "--config", p(&small_config(tmp.path())), "--set", "rho_gc=0.5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("bias_tsre"), "{text}");
}

const RESULT_HEADER: &str = "target,row_id,method,selection,mean,sd_mc,mean_se,bias,mse,reps,reps_failed";
const DRAWS_HEADER: &str = "row_id,method,selection,replicate,estimate,se";

#[test]
fn every_target_writes_expected_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    for (target, rows) in [
        ("table2", 8),
        ("table3", 3),
        ("table4", 0),
        ("fig3", 6),
        ("fig4", 6),
        ("s1", 7),
        ("s2", 6),
        ("s3", 8),
        ("s4", 22),
        ("custom", 1),
    ] {
        let dir = tmp.path().join(target);
        let mut args = vec!["replicate", "--target", target, "--reps", "1", "--bootstrap", "5", "--out", p(&dir)];
        args.extend(["--set", "n=200", "--methods", "tsre,ivw_fe"]);
        if target == "custom" {
            args.extend(["--config", p(&cfg)]);
        }
        if target == "table4" {
            args.extend(["--set", "m_a=50"]);
        }
        let out = tsre(&args);
        assert!(out.status.success(), "{target}: {}", String::from_utf8_lossy(&out.stderr));

        let main = fs::read_to_string(dir.join(format!("{target}.csv"))).unwrap();
        assert_eq!(main.lines().next().unwrap(), RESULT_HEADER, "{target}");
        let row_file = fs::read_to_string(dir.join(format!("{target}_rows.csv"))).unwrap();
        assert!(row_file.starts_with("row_id,"));
        if rows > 0 {
            assert_eq!(row_file.lines().count(), rows + 1, "{target}");
        }
        assert!(dir.join(format!("{target}_notes.txt")).exists());
        let draws = dir.join(format!("{target}_draws.csv"));
        if ["fig3", "fig4", "s1"].contains(&target) {
            assert_eq!(fs::read_to_string(draws).unwrap().lines().next().unwrap(), DRAWS_HEADER);
        } else {
            assert!(!draws.exists(), "{target}");
        }
    }
}
