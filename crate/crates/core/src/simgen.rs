//! Four-group random-effects model: IV effect sampling and phenotype
//! generation.
//!
//! Variants are laid out as groups a (null), b (valid), c (pleiotropic) and
//! d (outcome-only), in that order.

use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genotype::StandardizedGenotypes;

/// Which groups receive strong exposure effects when `p_strong > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrongGroups {
    B,
    C,
    Bc,
}

impl StrongGroups {
    pub fn includes_b(self) -> bool {
        matches!(self, StrongGroups::B | StrongGroups::Bc)
    }

    pub fn includes_c(self) -> bool {
        matches!(self, StrongGroups::C | StrongGroups::Bc)
    }
}

impl fmt::Display for StrongGroups {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrongGroups::B => "b",
            StrongGroups::C => "c",
            StrongGroups::Bc => "bc",
        })
    }
}

impl FromStr for StrongGroups {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "b" => Ok(StrongGroups::B),
            "c" => Ok(StrongGroups::C),
            "bc" => Ok(StrongGroups::Bc),
            other => Err(Error::Config(format!("unknown strong group set {other:?}"))),
        }
    }
}

/// Full parameterization of one simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n: usize,
    pub m_a: usize,
    pub m_b: usize,
    pub m_c: usize,
    pub m_d: usize,
    pub mu_gb: f64,
    pub sigma_gb: f64,
    pub mu_gc_x: f64,
    pub sigma_gc_x: f64,
    pub mu_gc_y: f64,
    pub sigma_gc_y: f64,
    pub rho_gc: f64,
    pub mu_gd: f64,
    pub sigma_gd: f64,
    pub p_strong: f64,
    pub mu_strong: f64,
    pub sigma_strong: f64,
    pub strong_groups: StrongGroups,
    pub theta: f64,
    pub sigma2_ex: f64,
    pub sigma2_ey: f64,
    /// Loading of the outcome on the exposure residual: Y gains
    /// `confounding * e_x`, so Cov(e_x, Y | G, X) = confounding * sigma2_ex.
    pub confounding: f64,
    pub maf_low: f64,
    pub maf_high: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n: 1000,
            m_a: 0,
            m_b: 100,
            m_c: 0,
            m_d: 0,
            mu_gb: 0.0,
            sigma_gb: 0.03,
            mu_gc_x: 0.0,
            sigma_gc_x: 0.03,
            mu_gc_y: 0.0,
            sigma_gc_y: 0.03,
            rho_gc: 0.0,
            mu_gd: 0.0,
            sigma_gd: 0.03,
            p_strong: 0.0,
            mu_strong: 0.2,
            sigma_strong: 0.03,
            strong_groups: StrongGroups::B,
            theta: 0.3,
            sigma2_ex: 2.0,
            sigma2_ey: 2.0,
            confounding: 0.0,
            maf_low: 0.2,
            maf_high: 0.3,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn m_total(&self) -> usize {
        self.m_a + self.m_b + self.m_c + self.m_d
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.m_total() == 0 {
            return bad("scenario has no variants".into());
        }
        for (name, v) in [
            ("sigma_gb", self.sigma_gb),
            ("sigma_gc_x", self.sigma_gc_x),
            ("sigma_gc_y", self.sigma_gc_y),
            ("sigma_gd", self.sigma_gd),
            ("sigma_strong", self.sigma_strong),
            ("sigma2_ex", self.sigma2_ex),
            ("sigma2_ey", self.sigma2_ey),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be a finite non-negative number, got {v}"));
            }
        }
        if !(self.rho_gc.abs() <= 1.0) {
            return bad(format!("rho_gc must lie in [-1, 1], got {}", self.rho_gc));
        }
        if !(0.0..=1.0).contains(&self.p_strong) {
            return bad(format!("p_strong must lie in [0, 1], got {}", self.p_strong));
        }
        if !self.confounding.is_finite() {
            return bad(format!("confounding must be finite, got {}", self.confounding));
        }
        if !(self.maf_low > 0.0 && self.maf_low <= self.maf_high && self.maf_high < 1.0) {
            return bad(format!(
                "allele frequency bounds must satisfy 0 < low <= high < 1, got ({}, {})",
                self.maf_low, self.maf_high
            ));
        }
        Ok(())
    }

    /// Extra requirement of the second-moment estimator: at least two
    /// variants with an exposure effect.
    pub fn validate_for_tsre(&self) -> Result<()> {
        self.validate()?;
        if self.m_b + self.m_c < 2 {
            return Err(Error::Config(format!(
                "need m_b + m_c >= 2 for the second-moment estimator, got {}",
                self.m_b + self.m_c
            )));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e.to_string()))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    /// Applies a single `key = value` override using the config-file syntax.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut table: toml::Table = toml::from_str(&self.to_toml_string())
            .expect("serialized config parses back");
        if !table.contains_key(key) {
            return Err(Error::Config(format!("unknown scenario key {key:?}")));
        }
        let parsed: toml::Table = toml::from_str(&format!("{key} = {value}"))
            .or_else(|_| toml::from_str(&format!("{key} = \"{value}\"")))
            .map_err(|e| Error::Config(format!("bad value for {key}: {e}")))?;
        table.extend(parsed);
        *self = ScenarioConfig::from_toml_str(&toml::to_string(&table).expect("table serializes"))?;
        Ok(())
    }

    pub fn layout(&self) -> GroupLayout {
        let a = 0..self.m_a;
        let b = a.end..a.end + self.m_b;
        let c = b.end..b.end + self.m_c;
        let d = c.end..c.end + self.m_d;
        GroupLayout { a, b, c, d }
    }

    /// Number of strong exposure effects in a group of size `m`.
    pub fn strong_count(&self, m: usize) -> usize {
        (self.p_strong * m as f64 + 1e-9).floor() as usize
    }
}

/// Variant-index ranges of the four groups; together they partition 0..M.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupLayout {
    pub a: Range<usize>,
    pub b: Range<usize>,
    pub c: Range<usize>,
    pub d: Range<usize>,
}

impl GroupLayout {
    pub fn m(&self) -> usize {
        self.d.end
    }

    pub fn group_of(&self, k: usize) -> char {
        if self.a.contains(&k) {
            'a'
        } else if self.b.contains(&k) {
            'b'
        } else if self.c.contains(&k) {
            'c'
        } else {
            'd'
        }
    }
}

/// Realized IV effects for one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectSet {
    pub beta_b: Vec<f64>,
    pub beta_c: Vec<f64>,
    pub alpha_c: Vec<f64>,
    pub alpha_d: Vec<f64>,
    pub group_layout: GroupLayout,
}

impl EffectSet {
    /// Per-variant total effects (γ_x, γ_y excluding the θ·γ_x path) over 0..M.
    pub fn exposure_and_direct(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.group_layout.m();
        let mut bx = vec![0.0; m];
        let mut by = vec![0.0; m];
        let l = &self.group_layout;
        bx[l.b.clone()].copy_from_slice(&self.beta_b);
        bx[l.c.clone()].copy_from_slice(&self.beta_c);
        by[l.c.clone()].copy_from_slice(&self.alpha_c);
        by[l.d.clone()].copy_from_slice(&self.alpha_d);
        (bx, by)
    }
}

fn strong_mask<R: Rng + ?Sized>(m: usize, n_strong: usize, rng: &mut R) -> Vec<bool> {
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(rng);
    let mut mask = vec![false; m];
    for &k in &order[..n_strong] {
        mask[k] = true;
    }
    mask
}

fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Samples group effects.
///
/// Strong exposure effects go to a fixed ⌊p_strong·m⌋ variants chosen by a
/// seeded shuffle. In group c the direct effect α is drawn from its
/// conditional law given the realized β under the weak bivariate normal,
/// so strong variants keep the same regression of α on β.
pub fn sample_effects<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<EffectSet> {
    cfg.validate()?;
    let strong_b = if cfg.strong_groups.includes_b() {
        strong_mask(cfg.m_b, cfg.strong_count(cfg.m_b), rng)
    } else {
        vec![false; cfg.m_b]
    };
    let beta_b = strong_b
        .iter()
        .map(|&strong| {
            let z = std_normal(rng);
            if strong {
                cfg.mu_strong + cfg.sigma_strong * z
            } else {
                cfg.mu_gb + cfg.sigma_gb * z
            }
        })
        .collect();

    let strong_c = if cfg.strong_groups.includes_c() {
        strong_mask(cfg.m_c, cfg.strong_count(cfg.m_c), rng)
    } else {
        vec![false; cfg.m_c]
    };
    let rho = cfg.rho_gc;
    let resid = (1.0 - rho * rho).max(0.0).sqrt();
    let mut beta_c = Vec::with_capacity(cfg.m_c);
    let mut alpha_c = Vec::with_capacity(cfg.m_c);
    for &strong in &strong_c {
        let z1 = std_normal(rng);
        let z2 = std_normal(rng);
        let (beta, standardized) = if strong {
            let beta = cfg.mu_strong + cfg.sigma_strong * z1;
            let standardized = if cfg.sigma_gc_x > 0.0 {
                (beta - cfg.mu_gc_x) / cfg.sigma_gc_x
            } else {
                z1
            };
            (beta, standardized)
        } else {
            (cfg.mu_gc_x + cfg.sigma_gc_x * z1, z1)
        };
        beta_c.push(beta);
        alpha_c.push(cfg.mu_gc_y + cfg.sigma_gc_y * (rho * standardized + resid * z2));
    }

    let alpha_d = (0..cfg.m_d)
        .map(|_| cfg.mu_gd + cfg.sigma_gd * std_normal(rng))
        .collect();

    Ok(EffectSet {
        beta_b,
        beta_c,
        alpha_c,
        alpha_d,
        group_layout: cfg.layout(),
    })
}

/// Exposure and outcome vectors for one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct PhenotypePair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// X = G_b β_b + G_c β_c + e_x and Y = θX + G_c α_c + G_d α_d + λe_x + e_y,
/// with e_x, e_y independent normals and λ = `confounding`. Dropped
/// (monomorphic) columns contribute nothing.
pub fn generate_phenotypes<R: Rng + ?Sized>(
    g: &StandardizedGenotypes,
    eff: &EffectSet,
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<PhenotypePair> {
    let m = eff.group_layout.m();
    if g.m_total() != m {
        return Err(Error::Config(format!(
            "genotypes have {} variants but the effect layout has {m}",
            g.m_total()
        )));
    }
    let (bx, by) = eff.exposure_and_direct();
    let active: Vec<(usize, f64, f64)> = g
        .retained()
        .iter()
        .enumerate()
        .filter_map(|(col, &k)| {
            (bx[k] != 0.0 || by[k] != 0.0).then_some((col, bx[k], by[k]))
        })
        .collect();

    let sd_x = cfg.sigma2_ex.sqrt();
    let sd_y = cfg.sigma2_ey.sqrt();
    let load = cfg.confounding * sd_x;

    let n = g.n();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let row = g.row(i);
        let (mut gx, mut gy) = (0.0, 0.0);
        for &(col, b, a) in &active {
            gx += row[col] * b;
            gy += row[col] * a;
        }
        let z1 = std_normal(rng);
        let z2 = std_normal(rng);
        let xi = gx + sd_x * z1;
        x.push(xi);
        y.push(cfg.theta * xi + gy + load * z1 + sd_y * z2);
    }
    Ok(PhenotypePair { x, y })
}

/// Second moment E(β²) of exposure effects in a group of size `m` whose
/// weak law is N(mu, sigma²), mixing in strong draws when enabled.
pub fn exposure_second_moment(cfg: &ScenarioConfig, m: usize, mu: f64, sigma: f64, strong: bool) -> f64 {
    let weak = mu * mu + sigma * sigma;
    if !strong || m == 0 {
        return weak;
    }
    let p = cfg.strong_count(m) as f64 / m as f64;
    p * (cfg.mu_strong.powi(2) + cfg.sigma_strong.powi(2)) + (1.0 - p) * weak
}

/// Her_X = σ²_Gx / (σ²_Gx + σ²_ex).
pub fn heritability(cfg: &ScenarioConfig) -> Result<f64> {
    let e_b = exposure_second_moment(cfg, cfg.m_b, cfg.mu_gb, cfg.sigma_gb, cfg.strong_groups.includes_b());
    let e_c = exposure_second_moment(
        cfg,
        cfg.m_c,
        cfg.mu_gc_x,
        cfg.sigma_gc_x,
        cfg.strong_groups.includes_c(),
    );
    let genetic = cfg.m_b as f64 * e_b + cfg.m_c as f64 * e_c;
    let total = genetic + cfg.sigma2_ex;
    if total <= 0.0 {
        return Err(Error::UndefinedHeritability);
    }
    Ok(genetic / total)
}
