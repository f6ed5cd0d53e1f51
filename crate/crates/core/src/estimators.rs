//! Comparator estimators: ratio, 2SLS, IVW (fixed and random effects),
//! MR-Egger, simple and weighted median.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::genotype::StandardizedGenotypes;
use crate::rng;
use crate::sumstats::VariantSummary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Ratio,
    Tsls,
    IvwFe,
    IvwRe,
    Egger,
    SimpleMedian,
    WeightedMedian,
    Tsre,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Ratio,
        Method::Tsls,
        Method::IvwFe,
        Method::IvwRe,
        Method::Egger,
        Method::SimpleMedian,
        Method::WeightedMedian,
        Method::Tsre,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Ratio => "ratio",
            Method::Tsls => "tsls",
            Method::IvwFe => "ivw_fe",
            Method::IvwRe => "ivw_re",
            Method::Egger => "egger",
            Method::SimpleMedian => "simple_median",
            Method::WeightedMedian => "weighted_median",
            Method::Tsre => "tsre",
        }
    }

    /// Whether the method consumes only summary statistics.
    pub fn is_summary(self) -> bool {
        !matches!(self, Method::Tsls | Method::Tsre)
    }

    /// Stable index used to derive per-method seeds.
    pub fn index(self) -> u64 {
        Method::ALL.iter().position(|&m| m == self).unwrap() as u64
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::Usage(format!("unknown method {s:?}")))
    }
}

/// A causal-effect estimate with method-specific diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub method: Method,
    pub theta_hat: f64,
    pub se: f64,
    /// Egger intercept.
    pub intercept: Option<f64>,
    /// Multiplicative overdispersion (random-effects IVW, Egger), floored at 1.
    pub overdispersion: Option<f64>,
    pub n_iv: usize,
}

impl Estimate {
    fn plain(method: Method, theta_hat: f64, se: f64, n_iv: usize) -> Self {
        Estimate {
            method,
            theta_hat,
            se,
            intercept: None,
            overdispersion: None,
            n_iv,
        }
    }
}

/// Parametric bootstrap settings for the median estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bootstrap {
    pub resamples: usize,
    pub seed: u64,
}

impl Default for Bootstrap {
    fn default() -> Self {
        Bootstrap {
            resamples: 1000,
            seed: 1,
        }
    }
}

fn require_nonempty(s: &[VariantSummary]) -> Result<()> {
    if s.is_empty() {
        return Err(Error::InsufficientSample { needed: 1, got: 0 });
    }
    Ok(())
}

fn require_positive_se_y(s: &[VariantSummary]) -> Result<()> {
    if let Some(v) = s.iter().find(|v| !(v.se_y > 0.0)) {
        return Err(Error::DegenerateWeight(format!(
            "variant {} has outcome standard error {}",
            v.variant_id, v.se_y
        )));
    }
    Ok(())
}

/// Wald ratio γ̂_y/γ̂_x with first-order standard error se_y/|γ̂_x|.
pub fn ratio(s: &VariantSummary) -> Result<Estimate> {
    if s.gamma_x == 0.0 {
        return Err(Error::NoSignal(format!(
            "variant {} has zero exposure association",
            s.variant_id
        )));
    }
    Ok(Estimate::plain(
        Method::Ratio,
        s.gamma_y / s.gamma_x,
        s.se_y / s.gamma_x.abs(),
        1,
    ))
}

/// Two-stage least squares on the supplied instrument columns.
pub fn tsls(g: &StandardizedGenotypes, x: &[f64], y: &[f64]) -> Result<Estimate> {
    let (n, k) = (g.n(), g.m());
    if x.len() != n || y.len() != n {
        return Err(Error::Dimension(format!(
            "instrument matrix has {n} rows but traits have {} and {}",
            x.len(),
            y.len()
        )));
    }
    if k >= n {
        return Err(Error::Dimension(format!(
            "{k} instruments need more than {k} individuals, got {n}"
        )));
    }
    let center = |v: &[f64]| {
        let mean = v.iter().sum::<f64>() / n as f64;
        DVector::from_iterator(n, v.iter().map(|a| a - mean))
    };
    let (xv, yv) = (center(x), center(y));
    let z = DMatrix::from_row_slice(n, k, g.values());
    let ztz = z.tr_mul(&z);
    let scale = ztz.diagonal().max();
    let chol = ztz
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularDesign("instrument matrix is rank deficient".into()))?;
    let min_pivot = chol.l_dirty().diagonal().min();
    if !(min_pivot * min_pivot > 1e-10 * scale) {
        return Err(Error::SingularDesign(
            "instrument matrix is numerically rank deficient".into(),
        ));
    }
    let xhat = &z * chol.solve(&z.tr_mul(&xv));
    let den = xhat.dot(&xv);
    if !(den > 0.0) {
        return Err(Error::NoSignal("instruments do not predict the exposure".into()));
    }
    let theta = xhat.dot(&yv) / den;
    let resid = &yv - &xv * theta;
    let sigma2 = resid.norm_squared() / (n - 2).max(1) as f64;
    Ok(Estimate::plain(Method::Tsls, theta, (sigma2 / den).sqrt(), k))
}

/// Inverse-variance weighted estimate. In random mode the standard error is
/// inflated by √max(1, Q/(K−1)) with Q Cochran's heterogeneity statistic.
pub fn ivw(summaries: &[VariantSummary], random: bool) -> Result<Estimate> {
    require_nonempty(summaries)?;
    require_positive_se_y(summaries)?;
    let (mut num, mut den) = (0.0, 0.0);
    for s in summaries {
        let w = 1.0 / (s.se_y * s.se_y);
        num += w * s.gamma_x * s.gamma_y;
        den += w * s.gamma_x * s.gamma_x;
    }
    if !(den > 0.0) {
        return Err(Error::NoSignal("all exposure associations are zero".into()));
    }
    // One instrument reduces to the Wald ratio; keep it bit-exact.
    let theta = match summaries {
        [s] => s.gamma_y / s.gamma_x,
        _ => num / den,
    };
    let se_fixed = (1.0 / den).sqrt();
    if !random {
        return Ok(Estimate::plain(Method::IvwFe, theta, se_fixed, summaries.len()));
    }
    let k = summaries.len();
    let q = cochran_q(summaries, theta);
    let phi2 = if k > 1 { (q / (k - 1) as f64).max(1.0) } else { 1.0 };
    Ok(Estimate {
        overdispersion: Some(phi2),
        ..Estimate::plain(Method::IvwRe, theta, se_fixed * phi2.sqrt(), k)
    })
}

/// Σ (γ̂_x²/se_y²)(ratio − θ)², the heterogeneity of per-variant ratios.
pub fn cochran_q(summaries: &[VariantSummary], theta: f64) -> f64 {
    summaries
        .iter()
        .map(|s| ((s.gamma_y - theta * s.gamma_x) / s.se_y).powi(2))
        .sum()
}

/// MR-Egger: weighted regression of γ̂_y on γ̂_x with free intercept after
/// orienting every variant so that γ̂_x ≥ 0.
pub fn egger(summaries: &[VariantSummary]) -> Result<Estimate> {
    let k = summaries.len();
    if k < 3 {
        return Err(Error::InsufficientSample { needed: 3, got: k });
    }
    require_positive_se_y(summaries)?;
    let pts: Vec<(f64, f64, f64)> = summaries
        .iter()
        .map(|s| {
            let sign = if s.gamma_x < 0.0 { -1.0 } else { 1.0 };
            (sign * s.gamma_x, sign * s.gamma_y, 1.0 / (s.se_y * s.se_y))
        })
        .collect();
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let xbar = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let ybar = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - xbar).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - xbar) * (p.1 - ybar)).sum();
    let scale: f64 = pts.iter().map(|p| p.2 * p.0 * p.0).sum();
    if !(sxx > 1e-12 * scale) {
        return Err(Error::Collinear(
            "oriented exposure associations have no spread".into(),
        ));
    }
    let theta = sxy / sxx;
    let intercept = ybar - theta * xbar;
    let rss: f64 = pts
        .iter()
        .map(|p| p.2 * (p.1 - intercept - theta * p.0).powi(2))
        .sum();
    let phi2 = (rss / (k - 2) as f64).max(1.0);
    let raw = rss / (k - 2) as f64;
    // An exact fit keeps the fixed-effect standard error.
    let inflate = if raw > 0.0 { phi2 } else { 1.0 };
    Ok(Estimate {
        method: Method::Egger,
        theta_hat: theta,
        se: (inflate / sxx).sqrt(),
        intercept: Some(intercept),
        overdispersion: Some(phi2),
        n_iv: k,
    })
}

fn median_sorted(v: &[f64]) -> f64 {
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    median_sorted(&v)
}

/// Linearly interpolated weighted median: with ratios sorted ascending and
/// weights normalized, s_j = Σ_{l≤j} w_l − w_j/2 and the estimate
/// interpolates the ratios at s = 1/2.
pub fn weighted_median_value(ratios: &[f64], weights: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| ratios[a].total_cmp(&ratios[b]).then(a.cmp(&b)));
    let total: f64 = weights.iter().sum();
    let mut cum = 0.0;
    let mut s = Vec::with_capacity(order.len());
    for &i in &order {
        let w = weights[i] / total;
        cum += w;
        s.push(cum - 0.5 * w);
    }
    let r: Vec<f64> = order.iter().map(|&i| ratios[i]).collect();
    let above = s.partition_point(|&v| v < 0.5);
    if above == 0 {
        return r[0];
    }
    if above == r.len() {
        return r[r.len() - 1];
    }
    let (lo, hi) = (above - 1, above);
    r[lo] + (r[hi] - r[lo]) * (0.5 - s[lo]) / (s[hi] - s[lo])
}

struct RatioData<'a> {
    used: Vec<&'a VariantSummary>,
}

impl<'a> RatioData<'a> {
    fn new(summaries: &'a [VariantSummary]) -> Result<Self> {
        require_nonempty(summaries)?;
        let used: Vec<_> = summaries.iter().filter(|s| s.gamma_x != 0.0).collect();
        if used.is_empty() {
            return Err(Error::NoSignal("all exposure associations are zero".into()));
        }
        Ok(RatioData { used })
    }

    fn ratios(&self) -> Vec<f64> {
        self.used.iter().map(|s| s.gamma_y / s.gamma_x).collect()
    }

    /// Bootstrap sd of `stat` over parametric resamples of (γ̂_x, γ̂_y).
    fn bootstrap_sd(&self, boot: &Bootstrap, stat: impl Fn(&[f64]) -> f64 + Sync) -> f64 {
        if boot.resamples < 2 {
            return f64::NAN;
        }
        let draws: Vec<f64> = (0..boot.resamples as u64)
            .into_par_iter()
            .map(|b| {
                let mut r = rng::child(boot.seed, b);
                let ratios: Vec<f64> = self
                    .used
                    .iter()
                    .map(|s| {
                        let gx = s.gamma_x + s.se_x * draw_std(&mut r);
                        let gy = s.gamma_y + s.se_y * draw_std(&mut r);
                        gy / gx
                    })
                    .collect();
                stat(&ratios)
            })
            .collect();
        sample_sd(&draws)
    }
}

fn draw_std(r: &mut rng::SimRng) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").sample(r)
}

/// Sample standard deviation with the n−1 divisor, accumulated in order.
pub fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Median of per-variant ratio estimates; bootstrap standard error.
pub fn simple_median(summaries: &[VariantSummary], boot: &Bootstrap) -> Result<Estimate> {
    let data = RatioData::new(summaries)?;
    let theta = median(data.ratios());
    let se = data.bootstrap_sd(boot, |r| median(r.to_vec()));
    Ok(Estimate::plain(Method::SimpleMedian, theta, se, data.used.len()))
}

/// Weighted median with weights γ̂_x²/se_y²; bootstrap standard error with
/// the weights held fixed.
pub fn weighted_median(summaries: &[VariantSummary], boot: &Bootstrap) -> Result<Estimate> {
    let data = RatioData::new(summaries)?;
    require_positive_se_y(summaries)?;
    let weights: Vec<f64> = data
        .used
        .iter()
        .map(|s| (s.gamma_x / s.se_y).powi(2))
        .collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::DegenerateWeight(format!("total weight {total}")));
    }
    let theta = weighted_median_value(&data.ratios(), &weights);
    let se = data.bootstrap_sd(boot, |r| weighted_median_value(r, &weights));
    Ok(Estimate::plain(Method::WeightedMedian, theta, se, data.used.len()))
}

/// Dispatches a summary-statistics method.
pub fn estimate_summary(
    method: Method,
    summaries: &[VariantSummary],
    boot: &Bootstrap,
) -> Result<Estimate> {
    match method {
        Method::Ratio => {
            if summaries.len() != 1 {
                return Err(Error::Usage(format!(
                    "the ratio estimator takes exactly one instrument, got {}",
                    summaries.len()
                )));
            }
            ratio(&summaries[0])
        }
        Method::IvwFe => ivw(summaries, false),
        Method::IvwRe => ivw(summaries, true),
        Method::Egger => egger(summaries),
        Method::SimpleMedian => simple_median(summaries, boot),
        Method::WeightedMedian => weighted_median(summaries, boot),
        Method::Tsls | Method::Tsre => Err(Error::Usage(format!(
            "{method} needs individual-level data"
        ))),
    }
}
