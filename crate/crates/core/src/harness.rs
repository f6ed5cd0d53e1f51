//! Monte-Carlo replication: scenario rows, per-replicate evaluation,
//! order-fixed aggregation and CSV output for the bundled targets.

use std::cell::OnceCell;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{debug, info};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{estimate_summary, tsls, Bootstrap, Estimate, Method};
use crate::genotype::{simulate_genotypes, standardize, GenotypeMatrix, StandardizedGenotypes};
use crate::rng;
use crate::simgen::{generate_phenotypes, sample_effects, EffectSet, ScenarioConfig, StrongGroups};
use crate::sumstats::{per_variant_regression, select_by_pvalue, select_top_k, VariantSummary};
use crate::tsre::{tsre_from_genotypes, Centering};

/// Confounding loading of the four-group targets (tables 2 to 4), set so
/// that the top-20 IVW bias matches the reported comparator values.
pub const CONFOUNDING_MIXED: f64 = 0.2;

/// Confounding loading of the b/c-only targets (fig3, fig4, s1 to s4).
pub const CONFOUNDING_WEAK_IV: f64 = 0.35;

/// Instrument selection applied before a method runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection {
    All,
    TopK(usize),
    PValue(f64),
}

impl Selection {
    pub fn validate(self) -> Result<Self> {
        match self {
            Selection::TopK(0) => Err(Error::Usage("top:K needs K >= 1".into())),
            Selection::PValue(a) if !(a > 0.0 && a <= 1.0) => Err(Error::Usage(format!(
                "pval:A needs 0 < A <= 1, got {a}"
            ))),
            s => Ok(s),
        }
    }

    /// Positions into `summaries` kept by this selection.
    pub fn apply(self, summaries: &[VariantSummary]) -> Result<Vec<usize>> {
        match self {
            Selection::All => Ok((0..summaries.len()).collect()),
            Selection::TopK(k) => select_top_k(summaries, k),
            Selection::PValue(a) => select_by_pvalue(summaries, a),
        }
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selection::All => f.write_str("all"),
            Selection::TopK(k) => write!(f, "top:{k}"),
            Selection::PValue(a) => write!(f, "pval:{a}"),
        }
    }
}

impl FromStr for Selection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Usage(format!("bad selection {s:?}; expected all, top:K or pval:A"));
        let sel = match s.split_once(':') {
            None if s == "all" => Selection::All,
            Some(("top", k)) => Selection::TopK(k.parse().map_err(|_| bad())?),
            Some(("pval", a)) => Selection::PValue(a.parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        sel.validate()
    }
}

/// Convention: the second-moment estimator uses every variant, the
/// instrument-based methods the 20 most significant ones.
pub fn default_selection(method: Method) -> Selection {
    match method {
        Method::Tsre => Selection::All,
        Method::Ratio => Selection::TopK(1),
        _ => Selection::TopK(20),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodRun {
    pub method: Method,
    pub selection: Selection,
}

impl MethodRun {
    pub fn new(method: Method, selection: Selection) -> Self {
        MethodRun { method, selection }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRow {
    pub row_id: String,
    pub cfg: ScenarioConfig,
    pub runs: Vec<MethodRun>,
}

/// Replication targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Table2,
    Table3,
    Table4,
    Fig3,
    Fig4,
    S1,
    S2,
    S3,
    S4,
    Custom,
}

impl Target {
    pub const ALL: [Target; 10] = [
        Target::Table2,
        Target::Table3,
        Target::Table4,
        Target::Fig3,
        Target::Fig4,
        Target::S1,
        Target::S2,
        Target::S3,
        Target::S4,
        Target::Custom,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Target::Table2 => "table2",
            Target::Table3 => "table3",
            Target::Table4 => "table4",
            Target::Fig3 => "fig3",
            Target::Fig4 => "fig4",
            Target::S1 => "s1",
            Target::S2 => "s2",
            Target::S3 => "s3",
            Target::S4 => "s4",
            Target::Custom => "custom",
        }
    }

    /// Figure-style targets also emit per-replicate draws.
    pub fn emits_draws(self) -> bool {
        matches!(self, Target::Fig3 | Target::Fig4 | Target::S1)
    }

    /// Confounding loading of the target's scenarios.
    pub fn confounding(self) -> f64 {
        match self {
            Target::Table2 | Target::Table3 | Target::Table4 => CONFOUNDING_MIXED,
            _ => CONFOUNDING_WEAK_IV,
        }
    }

    /// Scenario rows with their default method runs. `custom` runs the
    /// supplied config as a single row.
    pub fn rows(self, custom: Option<&ScenarioConfig>) -> Result<Vec<ScenarioRow>> {
        let base = ScenarioConfig {
            confounding: self.confounding(),
            ..ScenarioConfig::default()
        };
        let row = |row_id: String, cfg: ScenarioConfig, runs: Vec<MethodRun>| ScenarioRow {
            row_id,
            cfg,
            runs,
        };
        let rows = match self {
            Target::Table2 => {
                let mut rows = Vec::new();
                for (pleio, mu_y) in [("balanced", 0.0), ("directional", 0.1)] {
                    for (inside, rho) in [("satisfied", 0.0), ("violated", 0.6)] {
                        for p_w in [0.8, 1.0] {
                            let cfg = ScenarioConfig {
                                m_b: 100,
                                m_c: 100,
                                mu_gc_y: mu_y,
                                rho_gc: rho,
                                p_strong: strong_fraction(p_w),
                                mu_strong: 0.2,
                                sigma_strong: 0.03,
                                strong_groups: StrongGroups::C,
                                ..base.clone()
                            };
                            rows.push(row(format!("{pleio}_{inside}_pw{p_w}"), cfg, default_runs()));
                        }
                    }
                }
                rows
            }
            Target::Table3 => [100, 200, 500]
                .into_iter()
                .map(|m| {
                    let cfg = ScenarioConfig {
                        m_a: m,
                        m_b: m,
                        m_c: m,
                        m_d: m,
                        ..base.clone()
                    };
                    row(format!("m{m}"), cfg, both_selections())
                })
                .collect(),
            Target::Table4 => [1000, 2000, 5000, 10000, 20000, 50000]
                .into_iter()
                .map(|m_a| {
                    let cfg = ScenarioConfig {
                        m_a,
                        m_b: 1000,
                        m_c: 1000,
                        m_d: 1000,
                        ..base.clone()
                    };
                    row(
                        format!("ma{m_a}"),
                        cfg,
                        vec![MethodRun::new(Method::Tsre, Selection::All)],
                    )
                })
                .collect(),
            Target::Fig3 | Target::S1 => {
                let runs = if self == Target::Fig3 {
                    default_runs()
                } else {
                    both_selections()
                };
                let mut rows = Vec::new();
                for sigma in [0.03, 0.05] {
                    for m_b in [100, 1000, 5000] {
                        let cfg = ScenarioConfig {
                            m_b,
                            sigma_gb: sigma,
                            ..base.clone()
                        };
                        rows.push(row(format!("mb{m_b}_sigma{sigma}"), cfg, runs.clone()));
                    }
                }
                if self == Target::S1 {
                    // Same genetic architecture at heritability 0.42.
                    let genetic = 5000.0 * 0.05 * 0.05;
                    let cfg = ScenarioConfig {
                        m_b: 5000,
                        sigma_gb: 0.05,
                        sigma2_ex: genetic / 0.42 - genetic,
                        ..base.clone()
                    };
                    rows.push(row("mb5000_sigma0.05_her0.42".into(), cfg, runs.clone()));
                }
                rows
            }
            Target::Fig4 | Target::S2 => {
                let runs = if self == Target::Fig4 {
                    default_runs()
                } else {
                    both_selections()
                };
                let mut rows = Vec::new();
                for p_w in [1.0, 0.8] {
                    for m_b in [100, 1000, 5000] {
                        let cfg = ScenarioConfig {
                            m_b,
                            sigma_gb: 0.05,
                            p_strong: strong_fraction(p_w),
                            mu_strong: 0.2,
                            sigma_strong: 0.05,
                            strong_groups: StrongGroups::B,
                            ..base.clone()
                        };
                        rows.push(row(format!("mb{m_b}_pw{p_w}"), cfg, runs.clone()));
                    }
                }
                rows
            }
            Target::S3 => {
                let mut rows = Vec::new();
                for p_w in [1.0, 0.8] {
                    for n in [1000, 3000, 5000, 10000] {
                        let cfg = ScenarioConfig {
                            n,
                            m_b: 1000,
                            p_strong: strong_fraction(p_w),
                            mu_strong: 0.2,
                            sigma_strong: 0.03,
                            strong_groups: StrongGroups::B,
                            ..base.clone()
                        };
                        rows.push(row(format!("n{n}_pw{p_w}"), cfg, both_selections()));
                    }
                }
                rows
            }
            Target::S4 => {
                let mut rows = Vec::new();
                for (pleio, mu_y) in [("balanced", 0.0), ("directional", 0.1)] {
                    for m_b in (0..=1000).step_by(100) {
                        let cfg = ScenarioConfig {
                            m_b,
                            m_c: 1000 - m_b,
                            mu_gc_y: mu_y,
                            ..base.clone()
                        };
                        rows.push(row(format!("{pleio}_mb{m_b}"), cfg, both_selections()));
                    }
                }
                rows
            }
            Target::Custom => {
                let cfg = custom
                    .ok_or_else(|| Error::Usage("target custom needs a scenario config".into()))?;
                vec![row("custom".into(), cfg.clone(), default_runs())]
            }
        };
        Ok(rows)
    }

    /// Columns of the source table that have no implementation here.
    pub fn omitted_columns(self) -> &'static str {
        match self {
            Target::Table4 | Target::Custom => "",
            _ => "dIVW, MR-RAPS and MR-Lasso columns are omitted (not implemented).",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Target::ALL
            .into_iter()
            .find(|t| t.tag() == s)
            .ok_or_else(|| Error::Usage(format!("unknown target {s:?}")))
    }
}

fn strong_fraction(p_weak: f64) -> f64 {
    ((1.0 - p_weak) * 1e6).round() / 1e6
}

const SUMMARY_METHODS: [Method; 4] = [
    Method::SimpleMedian,
    Method::WeightedMedian,
    Method::IvwRe,
    Method::Egger,
];

fn default_runs() -> Vec<MethodRun> {
    let mut runs: Vec<MethodRun> = SUMMARY_METHODS
        .into_iter()
        .map(|m| MethodRun::new(m, default_selection(m)))
        .collect();
    runs.push(MethodRun::new(Method::Tsls, Selection::TopK(20)));
    runs.push(MethodRun::new(Method::Tsre, Selection::All));
    runs
}

fn both_selections() -> Vec<MethodRun> {
    let mut runs = Vec::new();
    for sel in [Selection::All, Selection::TopK(20)] {
        for m in SUMMARY_METHODS {
            runs.push(MethodRun::new(m, sel));
        }
        runs.push(MethodRun::new(Method::Tsre, sel));
    }
    runs.push(MethodRun::new(Method::Tsls, Selection::TopK(20)));
    runs
}

/// What to replicate and how.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSpec {
    pub target: Target,
    pub reps: usize,
    pub seed: u64,
    /// Restricts (or extends) the target's methods; `None` keeps the defaults.
    pub methods: Option<Vec<Method>>,
    /// Forces one selection on every method.
    pub selection: Option<Selection>,
    /// `key = value` scenario overrides applied to every row.
    pub overrides: Vec<(String, String)>,
    pub bootstrap_resamples: usize,
    /// Scenario for the `custom` target.
    pub config: Option<ScenarioConfig>,
}

impl ReplicationSpec {
    pub fn new(target: Target) -> Self {
        ReplicationSpec {
            target,
            reps: 100,
            seed: 1,
            methods: None,
            selection: None,
            overrides: Vec::new(),
            bootstrap_resamples: 1000,
            config: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Usage("reps must be at least 1".into()));
        }
        if matches!(&self.methods, Some(m) if m.is_empty()) {
            return Err(Error::Usage("method list is empty".into()));
        }
        if let Some(sel) = self.selection {
            sel.validate()?;
        }
        Ok(())
    }

    /// Target rows after overrides and method/selection adjustments.
    pub fn rows(&self) -> Result<Vec<ScenarioRow>> {
        self.validate()?;
        let mut rows = self.target.rows(self.config.as_ref())?;
        for row in &mut rows {
            for (k, v) in &self.overrides {
                row.cfg.set(k, v)?;
            }
            row.runs = adjust_runs(&row.runs, self.methods.as_deref(), self.selection);
        }
        Ok(rows)
    }
}

fn adjust_runs(
    runs: &[MethodRun],
    methods: Option<&[Method]>,
    selection: Option<Selection>,
) -> Vec<MethodRun> {
    let mut out: Vec<MethodRun> = match methods {
        None => runs.to_vec(),
        Some(ms) => {
            let mut kept: Vec<MethodRun> =
                runs.iter().filter(|r| ms.contains(&r.method)).copied().collect();
            for &m in ms {
                if !kept.iter().any(|r| r.method == m) {
                    kept.push(MethodRun::new(m, default_selection(m)));
                }
            }
            kept
        }
    };
    if let Some(sel) = selection {
        for r in &mut out {
            r.selection = sel;
        }
    }
    let mut seen: Vec<MethodRun> = Vec::with_capacity(out.len());
    for r in out {
        if !seen.contains(&r) {
            seen.push(r);
        }
    }
    seen
}

/// One simulated dataset: raw genotypes, realized effects and phenotypes.
pub struct SimulatedDataset {
    pub genotypes: GenotypeMatrix,
    pub effects: EffectSet,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Draws genotypes, effects and phenotypes from `rng`, in that order.
pub fn simulate_dataset<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<(SimulatedDataset, StandardizedGenotypes)> {
    let g = simulate_genotypes(cfg.n, cfg.m_total(), cfg.maf_low, cfg.maf_high, rng)?;
    let s = standardize(&g)?;
    let effects = sample_effects(cfg, rng)?;
    let p = generate_phenotypes(&s, &effects, cfg, rng)?;
    let data = SimulatedDataset {
        genotypes: g,
        effects,
        x: p.x,
        y: p.y,
    };
    Ok((data, s))
}

/// One replicate's data as the estimators see it.
pub struct ReplicateData {
    pub genotypes: StandardizedGenotypes,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub bootstrap_seed: u64,
}

/// Simulates replicate `rep` under `seed` from stream `rep`; one further
/// word of the stream seeds the bootstrap.
pub fn simulate_replicate(cfg: &ScenarioConfig, seed: u64, rep: u64) -> Result<ReplicateData> {
    let mut r = rng::child(seed, rep);
    let (data, s) = simulate_dataset(cfg, &mut r)?;
    Ok(ReplicateData {
        genotypes: s,
        x: data.x,
        y: data.y,
        bootstrap_seed: r.next_u64(),
    })
}

/// Runs one method on one replicate's data.
pub fn run_method(
    data: &ReplicateData,
    summaries: &[VariantSummary],
    run: MethodRun,
    resamples: usize,
) -> Result<Estimate> {
    let g = &data.genotypes;
    let cols = match run.selection {
        Selection::All => None,
        sel => Some(sel.apply(summaries)?),
    };
    if matches!(&cols, Some(c) if c.is_empty()) {
        return Err(Error::EmptyOutput(format!("selection {} kept no instruments", run.selection)));
    }
    match run.method {
        Method::Tsre => {
            let fit = match &cols {
                None => tsre_from_genotypes(g, &data.x, &data.y, Centering::Covariance)?,
                Some(c) => {
                    tsre_from_genotypes(&g.select_columns(c)?, &data.x, &data.y, Centering::Covariance)?
                }
            };
            Ok(Estimate {
                method: Method::Tsre,
                theta_hat: fit.theta_hat,
                se: fit.se,
                intercept: None,
                overdispersion: None,
                n_iv: fit.m,
            })
        }
        Method::Tsls => match &cols {
            None => tsls(g, &data.x, &data.y),
            Some(c) => tsls(&g.select_columns(c)?, &data.x, &data.y),
        },
        m => {
            let boot = Bootstrap {
                resamples,
                seed: rng::mix(data.bootstrap_seed, m.index()),
            };
            match &cols {
                None => estimate_summary(m, summaries, &boot),
                Some(c) => {
                    let picked: Vec<VariantSummary> = c.iter().map(|&i| summaries[i].clone()).collect();
                    estimate_summary(m, &picked, &boot)
                }
            }
        }
    }
}

/// (θ̂, se) per run for replicate `rep`; `None` marks a failed replicate.
pub fn evaluate_replicate(
    cfg: &ScenarioConfig,
    runs: &[MethodRun],
    seed: u64,
    rep: u64,
    resamples: usize,
) -> Vec<Option<(f64, f64)>> {
    let data = match simulate_replicate(cfg, seed, rep) {
        Ok(d) => d,
        Err(e) => {
            debug!("replicate {rep}: simulation failed: {e}");
            return vec![None; runs.len()];
        }
    };
    let summaries: OnceCell<Result<Vec<VariantSummary>>> = OnceCell::new();
    runs.iter()
        .map(|&run| {
            let needs_summaries = run.method.is_summary() || run.selection != Selection::All;
            let s: &[VariantSummary] = if needs_summaries {
                match summaries.get_or_init(|| per_variant_regression(&data.genotypes, &data.x, &data.y)) {
                    Ok(s) => s,
                    Err(e) => {
                        debug!("replicate {rep}: summary statistics failed: {e}");
                        return None;
                    }
                }
            } else {
                &[]
            };
            match run_method(&data, s, run, resamples) {
                Ok(e) if e.theta_hat.is_finite() => Some((e.theta_hat, e.se)),
                Ok(e) => {
                    debug!("replicate {rep}: {} gave non-finite estimate {}", run.method, e.theta_hat);
                    None
                }
                Err(e) => {
                    debug!("replicate {rep}: {} ({}) failed: {e}", run.method, run.selection);
                    None
                }
            }
        })
        .collect()
}

/// Monte-Carlo summary of one method over the replicates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateResult {
    pub target: String,
    pub row_id: String,
    #[serde(serialize_with = "as_display")]
    pub method: Method,
    #[serde(serialize_with = "as_display")]
    pub selection: Selection,
    pub mean: f64,
    pub sd_mc: f64,
    pub mean_se: f64,
    pub bias: f64,
    pub mse: f64,
    pub reps: usize,
    pub reps_failed: usize,
}

fn as_display<T: fmt::Display, S: serde::Serializer>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

/// Mean, sd (n−1), mean reported se, bias and MSE over the successful
/// replicates. Statistics are NaN when every replicate failed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub sd_mc: f64,
    pub mean_se: f64,
    pub bias: f64,
    pub mse: f64,
    pub failed: usize,
}

pub fn aggregate(theta: f64, draws: &[Option<(f64, f64)>]) -> Aggregate {
    let ok: Vec<(f64, f64)> = draws.iter().flatten().copied().collect();
    let failed = draws.len() - ok.len();
    if ok.is_empty() {
        return Aggregate {
            mean: f64::NAN,
            sd_mc: f64::NAN,
            mean_se: f64::NAN,
            bias: f64::NAN,
            mse: f64::NAN,
            failed,
        };
    }
    let k = ok.len() as f64;
    let mean = ok.iter().map(|d| d.0).sum::<f64>() / k;
    let sd_mc = if ok.len() > 1 {
        (ok.iter().map(|d| (d.0 - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        f64::NAN
    };
    let ses: Vec<f64> = ok.iter().map(|d| d.1).filter(|s| s.is_finite()).collect();
    let mean_se = if ses.is_empty() {
        f64::NAN
    } else {
        ses.iter().sum::<f64>() / ses.len() as f64
    };
    let mse = ok.iter().map(|d| (d.0 - theta).powi(2)).sum::<f64>() / k;
    Aggregate {
        mean,
        sd_mc,
        mean_se,
        bias: mean - theta,
        mse,
        failed,
    }
}

/// Per-replicate estimate, for the long-format draws file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Draw {
    pub row_id: String,
    #[serde(serialize_with = "as_display")]
    pub method: Method,
    #[serde(serialize_with = "as_display")]
    pub selection: Selection,
    pub replicate: usize,
    pub estimate: f64,
    pub se: f64,
}

/// Results of one scenario row: one summary per run plus the raw draws
/// indexed [run][replicate].
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub results: Vec<ReplicateResult>,
    pub draws: Vec<Vec<Option<(f64, f64)>>>,
}

/// Replicates one row. Replicates run in parallel on the current rayon
/// pool; results are gathered by replicate index.
pub fn run_scenario(
    target: Target,
    row: &ScenarioRow,
    reps: usize,
    seed: u64,
    resamples: usize,
) -> Result<ScenarioOutcome> {
    row.cfg.validate()?;
    if row.runs.is_empty() {
        return Err(Error::Usage(format!("row {} has no methods", row.row_id)));
    }
    if reps == 0 {
        return Err(Error::Usage("reps must be at least 1".into()));
    }
    let per_rep: Vec<Vec<Option<(f64, f64)>>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| evaluate_replicate(&row.cfg, &row.runs, seed, rep, resamples))
        .collect();
    let draws: Vec<Vec<Option<(f64, f64)>>> = (0..row.runs.len())
        .map(|j| per_rep.iter().map(|r| r[j]).collect())
        .collect();
    let results = row
        .runs
        .iter()
        .zip(&draws)
        .map(|(run, d)| {
            let a = aggregate(row.cfg.theta, d);
            ReplicateResult {
                target: target.tag().into(),
                row_id: row.row_id.clone(),
                method: run.method,
                selection: run.selection,
                mean: a.mean,
                sd_mc: a.sd_mc,
                mean_se: a.mean_se,
                bias: a.bias,
                mse: a.mse,
                reps,
                reps_failed: a.failed,
            }
        })
        .collect();
    Ok(ScenarioOutcome { results, draws })
}

/// Runs every row of the spec's target and writes `<target>.csv`,
/// `<target>_rows.csv`, `<target>_notes.txt` and, for figure targets,
/// `<target>_draws.csv` into `out_dir`. Returns the written paths.
pub fn reproduce_table(spec: &ReplicationSpec, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let rows = spec.rows()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::file(out_dir, e.to_string()))?;
    let tag = spec.target.tag();

    let mut results = Vec::new();
    let mut draws = Vec::new();
    for row in &rows {
        info!("{tag}/{}: {} replicates", row.row_id, spec.reps);
        let out = run_scenario(spec.target, row, spec.reps, spec.seed, spec.bootstrap_resamples)?;
        if spec.target.emits_draws() {
            for (run, d) in row.runs.iter().zip(&out.draws) {
                for (rep, v) in d.iter().enumerate() {
                    let (estimate, se) = v.unwrap_or((f64::NAN, f64::NAN));
                    draws.push(Draw {
                        row_id: row.row_id.clone(),
                        method: run.method,
                        selection: run.selection,
                        replicate: rep,
                        estimate,
                        se,
                    });
                }
            }
        }
        results.extend(out.results);
    }

    let mut written = Vec::new();
    let path = out_dir.join(format!("{tag}.csv"));
    write_csv(&path, &results)?;
    written.push(path);

    let path = out_dir.join(format!("{tag}_rows.csv"));
    write_rows(&path, &rows)?;
    written.push(path);

    let path = out_dir.join(format!("{tag}_notes.txt"));
    let note = spec.target.omitted_columns();
    let text = format!(
        "target: {tag}\nreps: {}\nseed: {}\nsd_mc is the Monte-Carlo standard deviation of the estimates; mean_se is the average reported standard error.\n{}{}",
        spec.reps,
        spec.seed,
        note,
        if note.is_empty() { "" } else { "\n" }
    );
    fs::write(&path, text).map_err(|e| Error::file(&path, e.to_string()))?;
    written.push(path);

    if spec.target.emits_draws() {
        let path = out_dir.join(format!("{tag}_draws.csv"));
        write_csv(&path, &draws)?;
        written.push(path);
    }
    Ok(written)
}

/// One line per row: `row_id` then every scenario field in key order.
fn write_rows(path: &Path, rows: &[ScenarioRow]) -> Result<()> {
    let fail = |e: String| Error::file(path, e);
    let file = fs::File::create(path).map_err(|e| fail(e.to_string()))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    for (i, row) in rows.iter().enumerate() {
        let table = match toml::Value::try_from(&row.cfg).map_err(|e| fail(e.to_string()))? {
            toml::Value::Table(t) => t,
            _ => unreachable!("scenario config serializes to a table"),
        };
        if i == 0 {
            let header = std::iter::once("row_id").chain(table.keys().map(String::as_str));
            w.write_record(header).map_err(|e| fail(e.to_string()))?;
        }
        let values = table.values().map(|v| match v {
            toml::Value::String(s) => s.clone(),
            other => other.to_string(),
        });
        w.write_record(std::iter::once(row.row_id.clone()).chain(values))
            .map_err(|e| fail(e.to_string()))?;
    }
    w.flush().map_err(|e| fail(e.to_string()))
}

fn write_csv<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::file(path, e.to_string()))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    for r in records {
        w.serialize(r).map_err(|e| Error::file(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::file(path, e.to_string()))?;
    Ok(())
}
