//! Genotype simulation, CSV ingestion, standardization, GRM construction
//! and relatedness filtering.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use log::warn;
use rand::{Rng, RngExt};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Individuals × variants allele-count matrix, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GenotypeMatrix {
    n: usize,
    m: usize,
    dosages: Vec<u8>,
    individual_ids: Vec<String>,
    variant_ids: Vec<String>,
    maf: Option<Vec<f64>>,
}

impl GenotypeMatrix {
    /// Builds a matrix from row-major dosages with default labels.
    pub fn from_dosages(n: usize, m: usize, dosages: Vec<u8>) -> Result<Self> {
        let individual_ids = (0..n).map(|i| format!("ind{}", i + 1)).collect();
        let variant_ids = (0..m).map(|k| format!("v{}", k + 1)).collect();
        Self::with_ids(n, m, dosages, individual_ids, variant_ids)
    }

    pub fn with_ids(
        n: usize,
        m: usize,
        dosages: Vec<u8>,
        individual_ids: Vec<String>,
        variant_ids: Vec<String>,
    ) -> Result<Self> {
        if n < 2 || m < 1 {
            return Err(Error::Dimension(format!(
                "genotype matrix needs n >= 2 and M >= 1, got {n}x{m}"
            )));
        }
        if dosages.len() != n * m {
            return Err(Error::Dimension(format!(
                "expected {} dosages for {n}x{m}, got {}",
                n * m,
                dosages.len()
            )));
        }
        if individual_ids.len() != n || variant_ids.len() != m {
            return Err(Error::Dimension(
                "identifier counts do not match matrix shape".into(),
            ));
        }
        if let Some(pos) = dosages.iter().position(|&d| d > 2) {
            return Err(Error::Parse {
                row: pos / m + 1,
                column: pos % m + 1,
                message: format!("dosage {} outside {{0,1,2}}", dosages[pos]),
            });
        }
        Ok(GenotypeMatrix {
            n,
            m,
            dosages,
            individual_ids,
            variant_ids,
            maf: None,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dosages(&self) -> &[u8] {
        &self.dosages
    }

    pub fn dosage(&self, i: usize, k: usize) -> u8 {
        self.dosages[i * self.m + k]
    }

    pub fn individual_ids(&self) -> &[String] {
        &self.individual_ids
    }

    pub fn variant_ids(&self) -> &[String] {
        &self.variant_ids
    }

    /// Simulation allele frequencies; `None` for loaded data.
    pub fn maf(&self) -> Option<&[f64]> {
        self.maf.as_deref()
    }

    /// Keeps the listed individuals, in the given order.
    pub fn select_individuals(&self, rows: &[usize]) -> Result<Self> {
        let mut dosages = Vec::with_capacity(rows.len() * self.m);
        let mut ids = Vec::with_capacity(rows.len());
        for &i in rows {
            if i >= self.n {
                return Err(Error::Dimension(format!("individual index {i} out of range")));
            }
            dosages.extend_from_slice(&self.dosages[i * self.m..(i + 1) * self.m]);
            ids.push(self.individual_ids[i].clone());
        }
        let mut out = Self::with_ids(
            rows.len(),
            self.m,
            dosages,
            ids,
            self.variant_ids.clone(),
        )?;
        out.maf = self.maf.clone();
        Ok(out)
    }
}

/// Draws allele frequencies from U(maf_low, maf_high) and dosages from
/// Binomial(2, f_k), independently per variant and individual.
pub fn simulate_genotypes<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    maf_low: f64,
    maf_high: f64,
    rng: &mut R,
) -> Result<GenotypeMatrix> {
    if !(maf_low > 0.0 && maf_low <= maf_high && maf_high < 1.0) {
        return Err(Error::Config(format!(
            "allele frequency bounds must satisfy 0 < low <= high < 1, got ({maf_low}, {maf_high})"
        )));
    }
    if n < 2 || m < 1 {
        return Err(Error::Config(format!(
            "need n >= 2 and M >= 1, got n={n}, M={m}"
        )));
    }
    let maf: Vec<f64> = (0..m)
        .map(|_| {
            if maf_high > maf_low {
                rng.random_range(maf_low..maf_high)
            } else {
                maf_low
            }
        })
        .collect();
    // Each u64 supplies two 32-bit uniforms, one per allele.
    let thresholds: Vec<u64> = maf
        .iter()
        .map(|&f| (f * 4_294_967_296.0).round() as u64)
        .collect();
    let mut dosages = vec![0u8; n * m];
    for row in dosages.chunks_exact_mut(m) {
        for (d, &t) in row.iter_mut().zip(&thresholds) {
            let u = rng.next_u64();
            *d = ((u & 0xFFFF_FFFF) < t) as u8 + ((u >> 32) < t) as u8;
        }
    }
    let mut g = GenotypeMatrix::from_dosages(n, m, dosages)?;
    g.maf = Some(maf);
    Ok(g)
}

/// Column-standardized genotypes (sample mean 0, 1/n variance 1), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedGenotypes {
    n: usize,
    values: Vec<f64>,
    /// Original index of each retained column.
    retained: Vec<usize>,
    dropped_variants: Vec<usize>,
    m_total: usize,
}

impl StandardizedGenotypes {
    /// Standardizes an arbitrary real n×m row-major matrix under the same
    /// convention as [`standardize`]; zero-variance columns are dropped.
    pub fn from_real(n: usize, m: usize, values: &[f64]) -> Result<Self> {
        if values.len() != n * m {
            return Err(Error::Dimension(format!(
                "expected {} values for {n}x{m}, got {}",
                n * m,
                values.len()
            )));
        }
        let nf = n as f64;
        let mut retained = Vec::new();
        let mut dropped = Vec::new();
        let mut centers = Vec::new();
        let mut scales = Vec::new();
        for k in 0..m {
            let mean = (0..n).map(|i| values[i * m + k]).sum::<f64>() / nf;
            let var = (0..n)
                .map(|i| (values[i * m + k] - mean).powi(2))
                .sum::<f64>()
                / nf;
            if var > 0.0 && var.is_finite() {
                retained.push(k);
                centers.push(mean);
                scales.push(1.0 / var.sqrt());
            } else {
                dropped.push(k);
            }
        }
        if retained.is_empty() {
            return Err(Error::EmptyOutput("every column has zero variance".into()));
        }
        let mut out = Vec::with_capacity(n * retained.len());
        for i in 0..n {
            for (c, &k) in retained.iter().enumerate() {
                out.push((values[i * m + k] - centers[c]) * scales[c]);
            }
        }
        Ok(StandardizedGenotypes {
            n,
            values: out,
            retained,
            dropped_variants: dropped,
            m_total: m,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of retained columns.
    pub fn m(&self) -> usize {
        self.retained.len()
    }

    /// Column count of the source matrix, before drops.
    pub fn m_total(&self) -> usize {
        self.m_total
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.m();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.m() + k]
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        let m = self.m();
        (0..self.n).map(|i| self.values[i * m + k]).collect()
    }

    pub fn retained(&self) -> &[usize] {
        &self.retained
    }

    pub fn dropped_variants(&self) -> &[usize] {
        &self.dropped_variants
    }

    /// Restricts to the given retained-column positions (e.g. selected IVs).
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        let m = self.m();
        if cols.is_empty() {
            return Err(Error::EmptyOutput("no columns selected".into()));
        }
        if let Some(&bad) = cols.iter().find(|&&c| c >= m) {
            return Err(Error::Dimension(format!("column {bad} out of range (M={m})")));
        }
        let mut values = Vec::with_capacity(self.n * cols.len());
        for i in 0..self.n {
            let row = &self.values[i * m..(i + 1) * m];
            values.extend(cols.iter().map(|&c| row[c]));
        }
        Ok(StandardizedGenotypes {
            n: self.n,
            values,
            retained: cols.iter().map(|&c| self.retained[c]).collect(),
            dropped_variants: Vec::new(),
            m_total: self.m_total,
        })
    }
}

/// Centers each column by its sample mean and scales by its 1/n sample sd.
/// Monomorphic columns are dropped and recorded.
pub fn standardize(g: &GenotypeMatrix) -> Result<StandardizedGenotypes> {
    let (n, m) = (g.n, g.m);
    // Integer moments make the monomorphic test exact.
    let mut sum = vec![0u64; m];
    let mut sum_sq = vec![0u64; m];
    for row in g.dosages.chunks_exact(m) {
        for ((s, q), &d) in sum.iter_mut().zip(sum_sq.iter_mut()).zip(row) {
            *s += d as u64;
            *q += (d as u64) * (d as u64);
        }
    }
    let nf = n as f64;
    let mut retained = Vec::with_capacity(m);
    let mut dropped = Vec::new();
    let mut lookup: Vec<[f64; 3]> = Vec::with_capacity(m);
    for k in 0..m {
        let numer = n as u128 * sum_sq[k] as u128 - (sum[k] as u128).pow(2);
        if numer == 0 {
            dropped.push(k);
            continue;
        }
        let mean = sum[k] as f64 / nf;
        let var = numer as f64 / (nf * nf);
        let inv_sd = 1.0 / var.sqrt();
        retained.push(k);
        lookup.push([
            (0.0 - mean) * inv_sd,
            (1.0 - mean) * inv_sd,
            (2.0 - mean) * inv_sd,
        ]);
    }
    if retained.is_empty() {
        return Err(Error::EmptyOutput("all variants are monomorphic".into()));
    }
    if !dropped.is_empty() {
        warn!(
            "dropped {} monomorphic variant(s) during standardization",
            dropped.len()
        );
    }
    let mr = retained.len();
    let mut values = vec![0.0; n * mr];
    values
        .par_chunks_mut(mr)
        .zip(g.dosages.par_chunks(m))
        .for_each(|(out, row)| {
            for ((o, &k), lut) in out.iter_mut().zip(&retained).zip(&lookup) {
                *o = lut[row[k] as usize];
            }
        });
    Ok(StandardizedGenotypes {
        n,
        values,
        retained,
        dropped_variants: dropped,
        m_total: m,
    })
}

/// Genetic relatedness matrix A = GGᵀ / m_effective, lower triangle only.
#[derive(Debug, Clone, PartialEq)]
pub struct Grm {
    n: usize,
    m_effective: usize,
    lower: Vec<f64>,
}

#[inline]
fn tri_index(i: usize, j: usize) -> usize {
    debug_assert!(j <= i);
    i * (i + 1) / 2 + j
}

const GRM_MAGIC: &[u8; 4] = b"GRM1";
const GRM_BLOCK: usize = 128;

impl Grm {
    /// Wraps a row-major lower triangle (diagonal included).
    pub fn from_lower(n: usize, m_effective: usize, lower: Vec<f64>) -> Result<Self> {
        if lower.len() != n * (n + 1) / 2 {
            return Err(Error::Dimension(format!(
                "lower triangle for n={n} needs {} entries, got {}",
                n * (n + 1) / 2,
                lower.len()
            )));
        }
        if lower.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dimension("GRM contains non-finite entries".into()));
        }
        Ok(Grm {
            n,
            m_effective,
            lower,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m_effective(&self) -> usize {
        self.m_effective
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    /// Row `i` of the lower triangle: entries (i, 0..=i).
    pub fn lower_row(&self, i: usize) -> &[f64] {
        let s = tri_index(i, 0);
        &self.lower[s..s + i + 1]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j <= i {
            self.lower[tri_index(i, j)]
        } else {
            self.lower[tri_index(j, i)]
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.lower[tri_index(i, i)]).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.lower[tri_index(i, i)]).sum()
    }

    /// Principal submatrix on the listed individuals (in the given order).
    pub fn subset(&self, idx: &[usize]) -> Result<Grm> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.n) {
            return Err(Error::Dimension(format!("individual {bad} out of range")));
        }
        let k = idx.len();
        let mut lower = Vec::with_capacity(k * (k + 1) / 2);
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[..=a] {
                lower.push(self.get(i, j));
            }
        }
        Grm::from_lower(k, self.m_effective, lower)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(GRM_MAGIC)?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&(self.m_effective as u64).to_le_bytes())?;
        for v in &self.lower {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Grm> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != GRM_MAGIC {
            return Err(Error::Parse {
                row: 0,
                column: 0,
                message: "missing GRM1 magic bytes".into(),
            });
        }
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let n = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let m_effective = u64::from_le_bytes(word) as usize;
        let len = n
            .checked_mul(n + 1)
            .map(|v| v / 2)
            .ok_or_else(|| Error::Dimension(format!("implausible GRM size n={n}")))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != len * 8 {
            return Err(Error::Parse {
                row: 0,
                column: 0,
                message: format!(
                    "GRM payload has {} bytes, expected {} for n={n}",
                    bytes.len(),
                    len * 8
                ),
            });
        }
        let lower = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Grm::from_lower(n, m_effective, lower)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::file(path, e.to_string()))?;
        self.write_to(BufWriter::new(f))
    }

    pub fn read_file(path: &Path) -> Result<Grm> {
        let f = File::open(path).map_err(|e| Error::file(path, e.to_string()))?;
        Grm::read_from(BufReader::new(f))
    }
}

/// Computes A = GGᵀ / M over standardized genotypes.
///
/// Rows are processed in blocks of `GRM_BLOCK`; each tile G_I G_Jᵀ (J ≤ I) is
/// a single GEMM call whose result does not depend on which thread runs it,
/// so the output is bit-identical for any pool size.
pub fn compute_grm(g: &StandardizedGenotypes) -> Result<Grm> {
    let (n, m) = (g.n(), g.m());
    if m == 0 {
        return Err(Error::EmptyOutput("no retained variants for GRM".into()));
    }
    let mut lower = vec![0.0; n * (n + 1) / 2];
    let scale = 1.0 / m as f64;
    let values = g.values();

    // Split storage so each block-row owns rows [i0, i1) of the triangle.
    let mut chunks: Vec<(usize, &mut [f64])> = Vec::new();
    let mut rest: &mut [f64] = &mut lower;
    let mut i0 = 0;
    while i0 < n {
        let i1 = (i0 + GRM_BLOCK).min(n);
        let len = tri_index(i1 - 1, i1 - 1) + 1 - tri_index(i0, 0);
        let (head, tail) = rest.split_at_mut(len);
        chunks.push((i0, head));
        rest = tail;
        i0 = i1;
    }

    chunks.into_par_iter().for_each(|(i0, out)| {
        let i1 = (i0 + GRM_BLOCK).min(n);
        let bi = i1 - i0;
        let base = tri_index(i0, 0);
        let mut tile = vec![0.0; bi * GRM_BLOCK];
        let mut j0 = 0;
        while j0 < i1 {
            let j1 = (j0 + GRM_BLOCK).min(i1);
            let bj = j1 - j0;
            // SAFETY: operands are in-bounds row-major slices of `values`
            // (bi×m and bj×m) and `tile` has room for bi×bj with row stride bj.
            unsafe {
                matrixmultiply::dgemm(
                    bi,
                    m,
                    bj,
                    scale,
                    values[i0 * m..].as_ptr(),
                    m as isize,
                    1,
                    values[j0 * m..].as_ptr(),
                    1,
                    m as isize,
                    0.0,
                    tile.as_mut_ptr(),
                    bj as isize,
                    1,
                );
            }
            for a in 0..bi {
                let i = i0 + a;
                let jmax = j1.min(i + 1);
                if jmax <= j0 {
                    continue;
                }
                let dst = tri_index(i, j0) - base;
                out[dst..dst + (jmax - j0)].copy_from_slice(&tile[a * bj..a * bj + (jmax - j0)]);
            }
            j0 = j1;
        }
    });

    Ok(Grm {
        n,
        m_effective: m,
        lower,
    })
}

/// Greedy relatedness pruning: while some retained pair has |A_ij| ≥ cutoff,
/// drop the individual in the most such pairs (lowest index on ties).
pub fn filter_related(a: &Grm, cutoff: f64) -> Result<Vec<usize>> {
    if !(cutoff > 0.0) {
        return Err(Error::Config(format!("GRM cutoff must be positive, got {cutoff}")));
    }
    let n = a.n();
    let mut neighbours: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 1..n {
        for (j, &v) in a.lower_row(i)[..i].iter().enumerate() {
            if v.abs() >= cutoff {
                neighbours[i].push(j);
                neighbours[j].push(i);
            }
        }
    }
    let mut degree: Vec<usize> = neighbours.iter().map(Vec::len).collect();
    let mut alive = vec![true; n];
    loop {
        let mut worst = None;
        let mut worst_deg = 0;
        for i in 0..n {
            if alive[i] && degree[i] > worst_deg {
                worst = Some(i);
                worst_deg = degree[i];
            }
        }
        let Some(drop) = worst else { break };
        alive[drop] = false;
        for &j in &neighbours[drop] {
            if alive[j] {
                degree[j] -= 1;
            }
        }
        degree[drop] = 0;
    }
    let kept: Vec<usize> = (0..n).filter(|&i| alive[i]).collect();
    if kept.len() < 2 {
        return Err(Error::DegenerateSample(format!(
            "relatedness cutoff {cutoff} leaves {} individual(s)",
            kept.len()
        )));
    }
    Ok(kept)
}

/// Reads `id,<variant>...` CSV with one individual per line.
pub fn load_genotypes(path: &Path) -> Result<GenotypeMatrix> {
    let f = File::open(path).map_err(|e| Error::file(path, e.to_string()))?;
    read_genotypes(BufReader::new(f))
}

pub fn read_genotypes<R: Read>(r: R) -> Result<GenotypeMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(r);
    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::Parse {
            row: 1,
            column: header.len(),
            message: "header needs an id column and at least one variant".into(),
        });
    }
    let variant_ids: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let m = variant_ids.len();
    let mut ids = Vec::new();
    let mut dosages = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = line + 2;
        if rec.len() != m + 1 {
            return Err(Error::Parse {
                row,
                column: rec.len(),
                message: format!("expected {} fields, found {}", m + 1, rec.len()),
            });
        }
        ids.push(rec[0].to_owned());
        for (c, field) in rec.iter().enumerate().skip(1) {
            let d = match field.parse::<u8>() {
                Ok(d) if d <= 2 => d,
                _ => {
                    return Err(Error::Parse {
                        row,
                        column: c + 1,
                        message: format!("dosage {field:?} is not one of 0, 1, 2"),
                    })
                }
            };
            dosages.push(d);
        }
    }
    let n = ids.len();
    GenotypeMatrix::with_ids(n, m, dosages, ids, variant_ids)
}

pub fn write_genotypes(g: &GenotypeMatrix, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::file(path, e.to_string()))?;
    write_genotypes_to(g, BufWriter::new(f))
}

pub fn write_genotypes_to<W: Write>(g: &GenotypeMatrix, mut w: W) -> Result<()> {
    write!(w, "id")?;
    for v in &g.variant_ids {
        write!(w, ",{v}")?;
    }
    writeln!(w)?;
    let mut line = String::with_capacity(2 * g.m + 16);
    for (id, row) in g.individual_ids.iter().zip(g.dosages.chunks_exact(g.m)) {
        line.clear();
        line.push_str(id);
        for &d in row {
            line.push(',');
            line.push((b'0' + d) as char);
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}
