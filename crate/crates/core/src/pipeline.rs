//! File-based workflows: phenotype I/O, ID alignment, relatedness
//! filtering and estimation on real or simulated individual-level data.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{estimate_summary, tsls, Bootstrap, Estimate, Method};
use crate::genotype::{compute_grm, filter_related, load_genotypes, standardize, write_genotypes, GenotypeMatrix, Grm};
use crate::harness::{default_selection, simulate_dataset, Selection, SimulatedDataset};
use crate::rng;
use crate::simgen::ScenarioConfig;
use crate::sumstats::{per_variant_regression_with_ids, VariantSummary};
use crate::tsre::{tsre_estimate, tsre_from_genotypes, Centering};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PhenotypeRecord {
    id: String,
    value: f64,
}

/// Reads an `id,value` phenotype file.
pub fn read_phenotypes<R: Read>(r: R) -> Result<Vec<(String, f64)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["id", "value"] {
        return Err(Error::Parse {
            row: 1,
            column: 1,
            message: format!("phenotype header must be id,value, found {}", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (line, rec) in rdr.deserialize::<PhenotypeRecord>().enumerate() {
        let row = line + 2;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            column: 2,
            message: e.to_string(),
        })?;
        if !rec.value.is_finite() {
            return Err(Error::Parse {
                row,
                column: 2,
                message: format!("non-finite phenotype {}", rec.value),
            });
        }
        if !seen.insert(rec.id.clone()) {
            return Err(Error::Parse {
                row,
                column: 1,
                message: format!("duplicate id {:?}", rec.id),
            });
        }
        out.push((rec.id, rec.value));
    }
    Ok(out)
}

pub fn load_phenotypes(path: &Path) -> Result<Vec<(String, f64)>> {
    let f = File::open(path).map_err(|e| Error::file(path, e.to_string()))?;
    read_phenotypes(BufReader::new(f)).map_err(|e| match e {
        Error::Parse { .. } | Error::Io(_) => Error::file(path, e.to_string()),
        other => other,
    })
}

pub fn write_phenotypes<W: Write>(ids: &[String], values: &[f64], w: W) -> Result<()> {
    if ids.len() != values.len() {
        return Err(Error::Dimension(format!("{} ids for {} values", ids.len(), values.len())));
    }
    let mut wtr = csv::Writer::from_writer(w);
    for (id, &value) in ids.iter().zip(values) {
        wtr.serialize(PhenotypeRecord { id: id.clone(), value })?;
    }
    wtr.flush()?;
    Ok(())
}

/// Orders a phenotype by the genotype sample order. Every genotype ID must
/// have a value and every phenotype ID a genotype row.
pub fn align(sample_ids: &[String], pheno: &[(String, f64)], label: &str) -> Result<Vec<f64>> {
    let lookup: HashMap<&str, f64> = pheno.iter().map(|(id, v)| (id.as_str(), *v)).collect();
    let in_genotypes: HashSet<&str> = sample_ids.iter().map(String::as_str).collect();
    let missing: Vec<&str> = sample_ids
        .iter()
        .map(String::as_str)
        .filter(|id| !lookup.contains_key(id))
        .collect();
    let extra: Vec<&str> = pheno
        .iter()
        .map(|(id, _)| id.as_str())
        .filter(|id| !in_genotypes.contains(id))
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        let mut parts = Vec::new();
        if !missing.is_empty() {
            parts.push(format!("missing from {label}: {}", list_ids(&missing)));
        }
        if !extra.is_empty() {
            parts.push(format!("{label} IDs absent from genotypes: {}", list_ids(&extra)));
        }
        return Err(Error::Alignment(parts.join("; ")));
    }
    Ok(sample_ids.iter().map(|id| lookup[id.as_str()]).collect())
}

fn list_ids(ids: &[&str]) -> String {
    const SHOWN: usize = 20;
    let mut s = ids.iter().take(SHOWN).copied().collect::<Vec<_>>().join(", ");
    if ids.len() > SHOWN {
        s.push_str(&format!(" and {} more", ids.len() - SHOWN));
    }
    s
}

/// Options for [`estimate_data`].
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRequest {
    pub methods: Vec<Method>,
    /// `None` uses each method's default selection.
    pub selection: Option<Selection>,
    /// Drops one of each pair with |A_ij| at or above the cutoff.
    pub grm_cutoff: Option<f64>,
    pub centering: Centering,
    pub bootstrap: Bootstrap,
}

impl Default for EstimateRequest {
    fn default() -> Self {
        EstimateRequest {
            methods: vec![Method::Tsre],
            selection: None,
            grm_cutoff: None,
            centering: Centering::Covariance,
            bootstrap: Bootstrap::default(),
        }
    }
}

/// One output line of the `estimate` command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRow {
    pub method: String,
    pub selection: String,
    pub theta_hat: f64,
    pub se: f64,
    pub n: usize,
    pub m_used: usize,
    pub intercept: Option<f64>,
    pub overdispersion: Option<f64>,
}

impl EstimateRow {
    fn new(e: &Estimate, selection: Selection, n: usize) -> Self {
        EstimateRow {
            method: e.method.tag().into(),
            selection: selection.to_string(),
            theta_hat: e.theta_hat,
            se: e.se,
            n,
            m_used: e.n_iv,
            intercept: e.intercept,
            overdispersion: e.overdispersion,
        }
    }
}

/// Estimates on aligned in-memory data. `grm`, when given, must be in the
/// genotype sample order; it is used for relatedness filtering and by TS-RE
/// with selection `all`.
pub fn estimate_data(
    g: &GenotypeMatrix,
    x: &[f64],
    y: &[f64],
    grm: Option<&Grm>,
    req: &EstimateRequest,
) -> Result<Vec<EstimateRow>> {
    if req.methods.is_empty() {
        return Err(Error::Usage("no methods requested".into()));
    }
    if x.len() != g.n() || y.len() != g.n() {
        return Err(Error::Dimension(format!(
            "{} genotype rows but {} exposure and {} outcome values",
            g.n(),
            x.len(),
            y.len()
        )));
    }
    if let Some(a) = grm {
        if a.n() != g.n() {
            return Err(Error::Dimension(format!(
                "GRM covers {} individuals but genotypes have {}",
                a.n(),
                g.n()
            )));
        }
    }
    let runs: Vec<(Method, Selection)> = req
        .methods
        .iter()
        .map(|&m| Ok((m, req.selection.unwrap_or(default_selection(m)).validate()?)))
        .collect::<Result<_>>()?;
    if grm.is_some() && runs.iter().any(|&(m, s)| m == Method::Tsre && s != Selection::All) {
        return Err(Error::Usage("a precomputed GRM can only be used with selection all".into()));
    }

    let mut g = g.clone();
    let (mut x, mut y) = (x.to_vec(), y.to_vec());
    let mut grm = grm.cloned();
    if let Some(cutoff) = req.grm_cutoff {
        let a = match &grm {
            Some(a) => a.clone(),
            None => compute_grm(&standardize(&g)?)?,
        };
        let keep = filter_related(&a, cutoff)?;
        log::info!("relatedness filter kept {} of {} individuals", keep.len(), g.n());
        g = g.select_individuals(&keep)?;
        x = keep.iter().map(|&i| x[i]).collect();
        y = keep.iter().map(|&i| y[i]).collect();
        grm = grm.map(|a| a.subset(&keep)).transpose()?;
    }
    let n = g.n();
    if n < 3 {
        return Err(Error::DegenerateSample(format!("{n} individuals remain")));
    }
    let s = standardize(&g)?;
    let summaries: Vec<VariantSummary> = per_variant_regression_with_ids(&s, g.variant_ids(), &x, &y)?;

    let mut out = Vec::with_capacity(runs.len());
    for (method, selection) in runs {
        let cols = selection.apply(&summaries)?;
        if cols.is_empty() {
            return Err(Error::EmptyOutput(format!("selection {selection} kept no instruments")));
        }
        let est = match method {
            Method::Tsre => {
                let fit = match (&grm, selection) {
                    (Some(a), Selection::All) => tsre_estimate(a, &x, &y, req.centering)?,
                    (None, Selection::All) => tsre_from_genotypes(&s, &x, &y, req.centering)?,
                    _ => tsre_from_genotypes(&s.select_columns(&cols)?, &x, &y, req.centering)?,
                };
                Estimate {
                    method,
                    theta_hat: fit.theta_hat,
                    se: fit.se,
                    intercept: None,
                    overdispersion: None,
                    n_iv: fit.m,
                }
            }
            Method::Tsls => tsls(&s.select_columns(&cols)?, &x, &y)?,
            m => {
                let picked: Vec<VariantSummary> = cols.iter().map(|&i| summaries[i].clone()).collect();
                let boot = Bootstrap {
                    resamples: req.bootstrap.resamples,
                    seed: rng::mix(req.bootstrap.seed, m.index()),
                };
                estimate_summary(m, &picked, &boot)?
            }
        };
        out.push(EstimateRow::new(&est, selection, n));
    }
    Ok(out)
}

/// Loads genotype and phenotype files, aligns them by sample ID and runs
/// [`estimate_data`].
pub fn estimate_real(
    genotypes: &Path,
    exposure: &Path,
    outcome: &Path,
    grm: Option<&Path>,
    req: &EstimateRequest,
) -> Result<Vec<EstimateRow>> {
    let g = load_genotypes(genotypes).map_err(|e| in_file(genotypes, e))?;
    let x = align(g.individual_ids(), &load_phenotypes(exposure)?, "exposure")?;
    let y = align(g.individual_ids(), &load_phenotypes(outcome)?, "outcome")?;
    let a = grm.map(Grm::read_file).transpose()?;
    estimate_data(&g, &x, &y, a.as_ref(), req)
}

fn in_file(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse { .. } | Error::Io(_) => Error::file(path, e.to_string()),
        other => other,
    }
}

pub fn write_estimates<W: Write>(rows: &[EstimateRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct EffectRecord<'a> {
    variant_id: &'a str,
    group: char,
    beta: f64,
    alpha: f64,
}

/// Simulates one dataset from `cfg` (stream 0 of `cfg.seed`) and writes
/// `genotypes.csv`, `exposure.csv`, `outcome.csv`, `effects.csv` and
/// `scenario.toml` into `out`.
pub fn simulate_to_dir(cfg: &ScenarioConfig, out: &Path) -> Result<(SimulatedDataset, Vec<PathBuf>)> {
    cfg.validate()?;
    let mut r = rng::child(cfg.seed, 0);
    let (data, _) = simulate_dataset(cfg, &mut r)?;
    fs::create_dir_all(out).map_err(|e| Error::file(out, e.to_string()))?;

    let paths: Vec<PathBuf> = ["genotypes.csv", "exposure.csv", "outcome.csv", "effects.csv", "scenario.toml"]
        .iter()
        .map(|f| out.join(f))
        .collect();
    write_genotypes(&data.genotypes, &paths[0])?;
    let ids = data.genotypes.individual_ids();
    for (path, values) in [(&paths[1], &data.x), (&paths[2], &data.y)] {
        let f = File::create(path).map_err(|e| Error::file(path, e.to_string()))?;
        write_phenotypes(ids, values, BufWriter::new(f))?;
    }

    let (bx, by) = data.effects.exposure_and_direct();
    let layout = &data.effects.group_layout;
    let f = File::create(&paths[3]).map_err(|e| Error::file(&paths[3], e.to_string()))?;
    let mut wtr = csv::Writer::from_writer(BufWriter::new(f));
    for (k, vid) in data.genotypes.variant_ids().iter().enumerate() {
        wtr.serialize(EffectRecord {
            variant_id: vid,
            group: layout.group_of(k),
            beta: bx[k],
            alpha: by[k],
        })?;
    }
    wtr.flush()?;

    fs::write(&paths[4], cfg.to_toml_string()).map_err(|e| Error::file(&paths[4], e.to_string()))?;
    Ok((data, paths))
}
