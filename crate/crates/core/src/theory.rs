//! Closed-form asymptotic bias and variance of the estimators under the
//! four-group random-effects model.

use crate::error::{Error, Result};
use crate::simgen::{heritability, ScenarioConfig};

/// Effect moments consumed by the closed forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentParams {
    pub m_a: usize,
    pub m_b: usize,
    pub m_c: usize,
    pub m_d: usize,
    /// E(β_b²)
    pub e_bb2: f64,
    /// E(β_c²)
    pub e_bc2: f64,
    /// E(α_c²)
    pub e_ac2: f64,
    /// E(α_d²)
    pub e_ad2: f64,
    /// E(β_c α_c)
    pub e_bcac: f64,
    /// E(β_c)
    pub e_bc: f64,
    /// E(α_c)
    pub e_ac: f64,
    /// Var(β) pooled over groups b and c.
    pub var_beta: f64,
    pub sigma2_ex: f64,
    pub sigma2_ey: f64,
    pub theta: f64,
    pub n: usize,
}

/// First and second moments of one pleiotropic (β, α) component.
struct Component {
    e_b: f64,
    e_b2: f64,
    e_a: f64,
    e_a2: f64,
    e_ba: f64,
}

fn mix(p: f64, s: &Component, w: &Component) -> Component {
    let f = |a: f64, b: f64| p * a + (1.0 - p) * b;
    Component {
        e_b: f(s.e_b, w.e_b),
        e_b2: f(s.e_b2, w.e_b2),
        e_a: f(s.e_a, w.e_a),
        e_a2: f(s.e_a2, w.e_a2),
        e_ba: f(s.e_ba, w.e_ba),
    }
}

fn strong_fraction(cfg: &ScenarioConfig, m: usize, enabled: bool) -> f64 {
    if !enabled || m == 0 {
        0.0
    } else {
        cfg.strong_count(m) as f64 / m as f64
    }
}

/// Moments of group c under the sampling law of [`crate::simgen::sample_effects`]:
/// α | β follows the weak bivariate-normal regression line for every variant.
fn group_c(cfg: &ScenarioConfig) -> Component {
    let (mx, sx, my, sy, rho) = (
        cfg.mu_gc_x,
        cfg.sigma_gc_x,
        cfg.mu_gc_y,
        cfg.sigma_gc_y,
        cfg.rho_gc,
    );
    let weak = Component {
        e_b: mx,
        e_b2: mx * mx + sx * sx,
        e_a: my,
        e_a2: my * my + sy * sy,
        e_ba: mx * my + rho * sx * sy,
    };
    let p = strong_fraction(cfg, cfg.m_c, cfg.strong_groups.includes_c());
    if p == 0.0 {
        return weak;
    }
    let (ms, ss) = (cfg.mu_strong, cfg.sigma_strong);
    // Standardized score s entering α = μ_y + σ_y(ρ s + √(1−ρ²) z).
    let (s_mean, s_var, cov_bs) = if sx > 0.0 {
        ((ms - mx) / sx, (ss / sx).powi(2), ss * ss / sx)
    } else {
        (0.0, 1.0, ss)
    };
    let e_a = my + sy * rho * s_mean;
    let strong = Component {
        e_b: ms,
        e_b2: ms * ms + ss * ss,
        e_a,
        e_a2: e_a * e_a + sy * sy * (rho * rho * s_var + 1.0 - rho * rho),
        e_ba: ms * e_a + sy * rho * cov_bs,
    };
    mix(p, &strong, &weak)
}

impl MomentParams {
    /// Moments implied by a scenario, including the weak/strong mixture.
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let pb = strong_fraction(cfg, cfg.m_b, cfg.strong_groups.includes_b());
        let (ms, ss) = (cfg.mu_strong, cfg.sigma_strong);
        let e_b = pb * ms + (1.0 - pb) * cfg.mu_gb;
        let e_bb2 = pb * (ms * ms + ss * ss)
            + (1.0 - pb) * (cfg.mu_gb * cfg.mu_gb + cfg.sigma_gb * cfg.sigma_gb);
        let c = group_c(cfg);
        let total = (cfg.m_b + cfg.m_c) as f64;
        let var_beta = if total > 0.0 {
            let wb = cfg.m_b as f64 / total;
            let wc = cfg.m_c as f64 / total;
            let mean = wb * e_b + wc * c.e_b;
            wb * e_bb2 + wc * c.e_b2 - mean * mean
        } else {
            0.0
        };
        Ok(MomentParams {
            m_a: cfg.m_a,
            m_b: cfg.m_b,
            m_c: cfg.m_c,
            m_d: cfg.m_d,
            e_bb2,
            e_bc2: c.e_b2,
            e_ac2: c.e_a2,
            e_ad2: cfg.mu_gd * cfg.mu_gd + cfg.sigma_gd * cfg.sigma_gd,
            e_bcac: c.e_ba,
            e_bc: c.e_b,
            e_ac: c.e_a,
            var_beta: var_beta.max(0.0),
            sigma2_ex: cfg.sigma2_ex,
            sigma2_ey: cfg.sigma2_ey,
            theta: cfg.theta,
            n: cfg.n,
        })
    }

    pub fn m_total(&self) -> usize {
        self.m_a + self.m_b + self.m_c + self.m_d
    }

    /// σ²_G = M_b E(β_b²) + M_c E(β_c²), the genetic variance of X.
    pub fn genetic_variance(&self) -> f64 {
        self.m_b as f64 * self.e_bb2 + self.m_c as f64 * self.e_bc2
    }

    fn signal(&self) -> Result<f64> {
        let g = self.genetic_variance();
        if !(g > 0.0) {
            return Err(Error::NoSignal("genetic variance of the exposure is zero".into()));
        }
        Ok(g)
    }
}

/// M_c E(β_cα_c) / (M_b E(β_b²) + M_c E(β_c²)).
pub fn bias_tsre(p: &MomentParams) -> Result<f64> {
    Ok(p.m_c as f64 * p.e_bcac / p.signal()?)
}

/// Same closed form as [`bias_tsre`]: with all variants used, IVW and the
/// second-moment estimator share their asymptotic bias.
pub fn bias_ivw(p: &MomentParams) -> Result<f64> {
    bias_tsre(p)
}

/// (M_c/M)·[E(β_cα_c) − E(β_c)E(α_c)] / Var(β), with M = M_b + M_c.
pub fn bias_egger(p: &MomentParams) -> Result<f64> {
    if !(p.var_beta > 0.0) {
        return Err(Error::Collinear("pooled exposure-effect variance is zero".into()));
    }
    let m = (p.m_b + p.m_c) as f64;
    Ok(p.m_c as f64 / m * (p.e_bcac - p.e_bc * p.e_ac) / p.var_beta)
}

/// τ² = M[σ²_G + σ²_ex][M_c E(α_c²) + M_d E(α_d²) + σ²_ey] / σ⁴_G and
/// Var(θ̂) = 2τ²/(n(n−1)).
pub fn asymptotic_var_tsre(p: &MomentParams) -> Result<(f64, f64)> {
    let g = p.signal()?;
    if p.n < 2 {
        return Err(Error::InsufficientSample { needed: 2, got: p.n });
    }
    let outcome = p.m_c as f64 * p.e_ac2 + p.m_d as f64 * p.e_ad2 + p.sigma2_ey;
    let tau2 = p.m_total() as f64 * (g + p.sigma2_ex) * outcome / (g * g);
    let n = p.n as f64;
    Ok((tau2, 2.0 * tau2 / (n * (n - 1.0))))
}

/// All closed-form quantities for one scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryReport {
    pub bias_tsre: f64,
    pub bias_ivw: f64,
    pub bias_egger: Option<f64>,
    pub tau2: f64,
    pub var_theta: f64,
    pub heritability: f64,
}

impl TheoryReport {
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self> {
        let p = MomentParams::from_config(cfg)?;
        let (tau2, var_theta) = asymptotic_var_tsre(&p)?;
        Ok(TheoryReport {
            bias_tsre: bias_tsre(&p)?,
            bias_ivw: bias_ivw(&p)?,
            bias_egger: bias_egger(&p).ok(),
            tau2,
            var_theta,
            heritability: heritability(cfg)?,
        })
    }

    /// `key,value` lines.
    pub fn to_csv(&self) -> String {
        let egger = self
            .bias_egger
            .map(|v| v.to_string())
            .unwrap_or_else(|| "NA".into());
        format!(
            "quantity,value\nbias_tsre,{}\nbias_ivw,{}\nbias_egger,{}\ntau2,{}\nvar_theta,{}\nsd_theta,{}\nheritability,{}\n",
            self.bias_tsre,
            self.bias_ivw,
            egger,
            self.tau2,
            self.var_theta,
            self.var_theta.sqrt(),
            self.heritability
        )
    }
}
