//! Per-variant marginal regressions and instrument selection.

use std::io::{Read, Write};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::genotype::StandardizedGenotypes;

/// Marginal exposure and outcome associations of one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant_id: String,
    pub gamma_x: f64,
    pub se_x: f64,
    pub gamma_y: f64,
    pub se_y: f64,
    pub p_x: f64,
}

const COLUMN_BLOCK: usize = 256;

fn centered(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - mean).collect()
}

struct Fit {
    gamma: f64,
    se: f64,
}

fn simple_fit(gg: f64, gt: f64, tt: f64, df: f64) -> Fit {
    if gg <= 0.0 {
        return Fit {
            gamma: 0.0,
            se: 0.0,
        };
    }
    let gamma = gt / gg;
    let mut rss = tt - gamma * gt;
    // Cancellation noise on an exact fit.
    if rss <= 1e-12 * tt {
        rss = 0.0;
    }
    Fit {
        gamma,
        se: (rss / df / gg).sqrt(),
    }
}

/// Two-sided t-test p-value; an exact fit with a nonzero slope gives 0.
fn two_sided_p(t: &StudentsT, gamma: f64, se: f64) -> f64 {
    if se > 0.0 {
        (2.0 * t.sf((gamma / se).abs())).min(1.0)
    } else if gamma != 0.0 {
        0.0
    } else {
        1.0
    }
}

/// Regresses the centered exposure and outcome on each standardized column
/// without intercept. Variants are labelled `v<k>` by 1-based original index.
pub fn per_variant_regression(
    g: &StandardizedGenotypes,
    x: &[f64],
    y: &[f64],
) -> Result<Vec<VariantSummary>> {
    let ids: Vec<String> = (0..g.m_total()).map(|k| format!("v{}", k + 1)).collect();
    per_variant_regression_with_ids(g, &ids, x, y)
}

/// As [`per_variant_regression`], labelling by `ids` indexed by original
/// variant index.
pub fn per_variant_regression_with_ids(
    g: &StandardizedGenotypes,
    ids: &[String],
    x: &[f64],
    y: &[f64],
) -> Result<Vec<VariantSummary>> {
    let n = g.n();
    if n < 3 {
        return Err(Error::InsufficientSample { needed: 3, got: n });
    }
    if x.len() != n || y.len() != n {
        return Err(Error::Dimension(format!(
            "genotypes have {n} rows but traits have {} and {}",
            x.len(),
            y.len()
        )));
    }
    if ids.len() != g.m_total() {
        return Err(Error::Dimension(format!(
            "{} variant ids for {} variants",
            ids.len(),
            g.m_total()
        )));
    }
    let xc = centered(x);
    let yc = centered(y);
    let xx: f64 = xc.iter().map(|v| v * v).sum();
    let yy: f64 = yc.iter().map(|v| v * v).sum();
    let m = g.m();
    let df = (n - 2) as f64;
    let t = StudentsT::new(0.0, 1.0, df).expect("df >= 1");

    let mut out: Vec<VariantSummary> = Vec::with_capacity(m);
    let blocks: Vec<Vec<VariantSummary>> = (0..m.div_ceil(COLUMN_BLOCK))
        .into_par_iter()
        .map(|b| {
            let c0 = b * COLUMN_BLOCK;
            let c1 = (c0 + COLUMN_BLOCK).min(m);
            let w = c1 - c0;
            let mut gg = vec![0.0; w];
            let mut gx = vec![0.0; w];
            let mut gy = vec![0.0; w];
            for i in 0..n {
                let row = &g.row(i)[c0..c1];
                let (xi, yi) = (xc[i], yc[i]);
                for c in 0..w {
                    let v = row[c];
                    gg[c] += v * v;
                    gx[c] += v * xi;
                    gy[c] += v * yi;
                }
            }
            (0..w)
                .map(|c| {
                    let fx = simple_fit(gg[c], gx[c], xx, df);
                    let fy = simple_fit(gg[c], gy[c], yy, df);
                    VariantSummary {
                        variant_id: ids[g.retained()[c0 + c]].clone(),
                        gamma_x: fx.gamma,
                        se_x: fx.se,
                        gamma_y: fy.gamma,
                        se_y: fy.se,
                        p_x: two_sided_p(&t, fx.gamma, fx.se),
                    }
                })
                .collect()
        })
        .collect();
    for b in blocks {
        out.extend(b);
    }
    Ok(out)
}

/// Indices of the `k` most significant exposure associations. Ties in p
/// go to the larger |γ̂_x|, then the lower index. Output is in rank order.
pub fn select_top_k(summaries: &[VariantSummary], k: usize) -> Result<Vec<usize>> {
    if summaries.is_empty() {
        return Err(Error::EmptyOutput("no variants to select from".into()));
    }
    if k == 0 {
        return Err(Error::Config("top-k selection needs k >= 1".into()));
    }
    let mut idx: Vec<usize> = (0..summaries.len()).collect();
    if k > summaries.len() {
        warn!(
            "requested top {k} instruments but only {} are available; using all",
            summaries.len()
        );
    }
    idx.sort_by(|&a, &b| {
        let (sa, sb) = (&summaries[a], &summaries[b]);
        sa.p_x
            .total_cmp(&sb.p_x)
            .then(sb.gamma_x.abs().total_cmp(&sa.gamma_x.abs()))
            .then(a.cmp(&b))
    });
    idx.truncate(k.min(summaries.len()));
    Ok(idx)
}

/// Indices with p_x < alpha, in original order.
pub fn select_by_pvalue(summaries: &[VariantSummary], alpha: f64) -> Result<Vec<usize>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config(format!(
            "p-value threshold must lie in (0, 1], got {alpha}"
        )));
    }
    Ok(summaries
        .iter()
        .enumerate()
        .filter(|(_, s)| s.p_x < alpha || alpha == 1.0)
        .map(|(i, _)| i)
        .collect())
}

pub fn write_summaries<W: Write>(summaries: &[VariantSummary], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for s in summaries {
        wtr.serialize(s)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_summaries<R: Read>(r: R) -> Result<Vec<VariantSummary>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut out = Vec::new();
    for (line, rec) in rdr.deserialize::<VariantSummary>().enumerate() {
        let s = rec.map_err(|e| Error::Parse {
            row: line + 2,
            column: 0,
            message: e.to_string(),
        })?;
        if !(s.se_x >= 0.0 && s.se_y >= 0.0 && (0.0..=1.0).contains(&s.p_x)) {
            return Err(Error::Parse {
                row: line + 2,
                column: 0,
                message: "standard errors must be non-negative and p_x in [0, 1]".into(),
            });
        }
        out.push(s);
    }
    Ok(out)
}
