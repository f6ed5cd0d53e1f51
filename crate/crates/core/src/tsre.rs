//! Two-stage random-effects estimator: pairwise products of the traits are
//! regressed on GRM entries and θ is the ratio of the cross-pair slope to the
//! exposure-pair slope.
//!
//! Pair sums over i < j are reduced to quadratic forms with diagonal
//! corrections, so the N = n(n−1)/2 pairs are never materialized.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::genotype::{Grm, StandardizedGenotypes};

/// Minimum |pair correlation| between A_ij and X_iX_j accepted as a genetic
/// signal. Only numerically degenerate inputs fall below it.
pub const WEAK_SIGNAL_CORRELATION: f64 = 1e-6;

const ROW_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Centering {
    /// Normal-equation form Σ A·P / Σ A·XX.
    Raw,
    /// Ratio of pair covariances with A_ij.
    #[default]
    Covariance,
}

impl fmt::Display for Centering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Centering::Raw => "raw",
            Centering::Covariance => "covariance",
        })
    }
}

impl FromStr for Centering {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Centering::Raw),
            "covariance" => Ok(Centering::Covariance),
            other => Err(Error::Usage(format!("unknown centering {other:?}"))),
        }
    }
}

/// Sums over pairs i < j.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMoments {
    /// Σ A_ij X_i X_j
    pub s_axx: f64,
    /// Σ A_ij (X_i Y_j + Y_i X_j)/2
    pub s_axy: f64,
    /// Σ A_ij²
    pub s_aa: f64,
    /// Σ A_ij
    pub s_a: f64,
    /// Σ X_i X_j
    pub s_xx: f64,
    /// Σ (X_i Y_j + Y_i X_j)/2
    pub s_xy: f64,
    /// Σ (X_i X_j)²
    pub s_xx_sq: f64,
    pub n_pairs: f64,
}

fn check_traits(n: usize, x: &[f64], y: &[f64]) -> Result<()> {
    check_shape(n, 3, x, y)
}

fn check_shape(n: usize, needed: usize, x: &[f64], y: &[f64]) -> Result<()> {
    if n < needed {
        return Err(Error::InsufficientSample { needed, got: n });
    }
    if x.len() != n || y.len() != n {
        return Err(Error::Dimension(format!(
            "relatedness data cover {n} individuals but traits have {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

fn centered(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|a| a - mean).collect()
}

/// Trait-only pair sums from the power sums.
fn trait_pairs(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let (mut sx, mut sy, mut sxx, mut sxy, mut sx4) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sx += a;
        sy += b;
        sxx += a * a;
        sxy += a * b;
        sx4 += a * a * a * a;
    }
    (
        0.5 * (sx * sx - sxx),
        0.5 * (sx * sy - sxy),
        0.5 * (sxx * sxx - sx4),
    )
}

impl PairMoments {
    /// Pair sums of the given traits, as supplied, against the stored GRM
    /// triangle.
    pub fn from_grm(a: &Grm, x: &[f64], y: &[f64]) -> Result<Self> {
        let n = a.n();
        check_shape(n, 2, x, y)?;
        // Per row i: Σ_{j<i} A_ij x_j etc.; partial sums reduced in chunk order.
        let partials: Vec<[f64; 4]> = (0..n.div_ceil(ROW_CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut acc = [0.0; 4];
                for i in c * ROW_CHUNK..((c + 1) * ROW_CHUNK).min(n) {
                    let row = &a.lower_row(i)[..i];
                    let (mut rx, mut ry, mut ra, mut raa) = (0.0, 0.0, 0.0, 0.0);
                    for (j, &v) in row.iter().enumerate() {
                        rx += v * x[j];
                        ry += v * y[j];
                        ra += v;
                        raa += v * v;
                    }
                    acc[0] += x[i] * rx;
                    acc[1] += 0.5 * (x[i] * ry + y[i] * rx);
                    acc[2] += raa;
                    acc[3] += ra;
                }
                acc
            })
            .collect();
        let mut acc = [0.0; 4];
        for p in partials {
            for k in 0..4 {
                acc[k] += p[k];
            }
        }
        let (s_xx, s_xy, s_xx_sq) = trait_pairs(x, y);
        Ok(PairMoments {
            s_axx: acc[0],
            s_axy: acc[1],
            s_aa: acc[2],
            s_a: acc[3],
            s_xx,
            s_xy,
            s_xx_sq,
            n_pairs: (n * (n - 1)) as f64 / 2.0,
        })
    }

    /// The same sums computed from genotypes through M×M products, never
    /// forming the n×n GRM: xᵀAx = ‖Gᵀx‖²/M and ‖A‖²_F = ‖GᵀG‖²_F/M².
    pub fn from_genotypes(g: &StandardizedGenotypes, x: &[f64], y: &[f64]) -> Result<Self> {
        let (n, m) = (g.n(), g.m());
        check_shape(n, 2, x, y)?;
        let mf = m as f64;
        let vals = g.values();
        let mut u = vec![0.0; m];
        let mut v = vec![0.0; m];
        let mut ones = vec![0.0; m];
        let (mut diag_xx, mut diag_xy, mut diag_sum, mut diag_sq) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let row = &vals[i * m..(i + 1) * m];
            let mut norm = 0.0;
            for k in 0..m {
                let gv = row[k];
                u[k] += gv * x[i];
                v[k] += gv * y[i];
                ones[k] += gv;
                norm += gv * gv;
            }
            let aii = norm / mf;
            diag_xx += aii * x[i] * x[i];
            diag_xy += aii * x[i] * y[i];
            diag_sum += aii;
            diag_sq += aii * aii;
        }
        let mut gtg = vec![0.0; m * m];
        // SAFETY: Gᵀ is read as an m×n view of the row-major n×m buffer and
        // the m×m output has row stride m.
        unsafe {
            matrixmultiply::dgemm(
                m,
                n,
                m,
                1.0 / mf,
                vals.as_ptr(),
                1,
                m as isize,
                vals.as_ptr(),
                m as isize,
                1,
                0.0,
                gtg.as_mut_ptr(),
                m as isize,
                1,
            );
        }
        let frob: f64 = gtg.iter().map(|a| a * a).sum();
        let dot = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(a, b)| a * b).sum::<f64>();
        let (s_xx, s_xy, s_xx_sq) = trait_pairs(x, y);
        Ok(PairMoments {
            s_axx: 0.5 * (dot(&u, &u) / mf - diag_xx),
            s_axy: 0.5 * (dot(&u, &v) / mf - diag_xy),
            s_aa: 0.5 * (frob - diag_sq),
            s_a: 0.5 * (dot(&ones, &ones) / mf - diag_sum),
            s_xx,
            s_xy,
            s_xx_sq,
            n_pairs: (n * (n - 1)) as f64 / 2.0,
        })
    }

    /// (Σ A·XX, Σ A·XY, Σ A², Σ (XX)²) about their pair means in covariance
    /// mode, raw otherwise.
    fn regression_sums(&self, centering: Centering) -> (f64, f64, f64, f64) {
        match centering {
            Centering::Raw => (self.s_axx, self.s_axy, self.s_aa, self.s_xx_sq),
            Centering::Covariance => {
                let big_n = self.n_pairs;
                (
                    self.s_axx - self.s_a * self.s_xx / big_n,
                    self.s_axy - self.s_a * self.s_xy / big_n,
                    self.s_aa - self.s_a * self.s_a / big_n,
                    self.s_xx_sq - self.s_xx * self.s_xx / big_n,
                )
            }
        }
    }
}

/// Pair sums of centered traits against the GRM.
pub fn pair_moments(a: &Grm, x: &[f64], y: &[f64]) -> Result<PairMoments> {
    check_traits(a.n(), x, y)?;
    PairMoments::from_grm(a, &centered(x), &centered(y))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsreFit {
    /// Slope of X_iX_j on A_ij.
    pub eta_hat: f64,
    /// Slope of the symmetrized Y_iX_j on A_ij.
    pub delta_hat: f64,
    pub theta_hat: f64,
    pub se: f64,
    pub tau2_hat: f64,
    pub n: usize,
    pub m: usize,
    pub centering: Centering,
}

/// Point estimate and slopes from precomputed moments; se and τ̂² are left
/// at NaN.
pub fn fit_from_moments(pm: &PairMoments, centering: Centering, n: usize, m: usize) -> Result<TsreFit> {
    let (den, num, ss_a, ss_xx) = pm.regression_sums(centering);
    let scale = (ss_a * ss_xx).sqrt();
    let correlation = if scale > 0.0 { den / scale } else { 0.0 };
    if !(correlation.abs() >= WEAK_SIGNAL_CORRELATION) || !(ss_a > 0.0) {
        return Err(Error::WeakSignal {
            denominator: den,
            correlation,
        });
    }
    Ok(TsreFit {
        eta_hat: den / ss_a,
        delta_hat: num / ss_a,
        theta_hat: num / den,
        se: f64::NAN,
        tau2_hat: f64::NAN,
        n,
        m,
        centering,
    })
}

/// Plug-in τ̂² = M·V̂ar(X)·V̂ar(Y − θ̂X)/η̂² with se = √(τ̂²/N).
fn plug_in(fit: &mut TsreFit, x: &[f64], y: &[f64]) -> Result<()> {
    if fit.eta_hat == 0.0 {
        return Err(Error::WeakSignal {
            denominator: 0.0,
            correlation: 0.0,
        });
    }
    let n = x.len() as f64;
    let var = |v: &mut dyn Iterator<Item = f64>| {
        let vals: Vec<f64> = v.collect();
        let mean = vals.iter().sum::<f64>() / n;
        vals.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n
    };
    let vx = var(&mut x.iter().copied());
    let vr = var(&mut x.iter().zip(y).map(|(a, b)| b - fit.theta_hat * a));
    let tau2 = fit.m as f64 * vx * vr / (fit.eta_hat * fit.eta_hat);
    let pairs = (fit.n * (fit.n - 1)) as f64 / 2.0;
    fit.tau2_hat = tau2;
    fit.se = (tau2 / pairs).sqrt();
    Ok(())
}

/// Estimates θ from the GRM and phenotypes (centered internally).
pub fn tsre_estimate(a: &Grm, x: &[f64], y: &[f64], centering: Centering) -> Result<TsreFit> {
    let pm = pair_moments(a, x, y)?;
    let mut fit = fit_from_moments(&pm, centering, a.n(), a.m_effective())?;
    plug_in(&mut fit, x, y)?;
    Ok(fit)
}

/// Estimates θ directly from standardized genotypes, taking the cheaper of
/// the n×n and M×M routes. Equivalent to building the GRM first.
pub fn tsre_from_genotypes(
    g: &StandardizedGenotypes,
    x: &[f64],
    y: &[f64],
    centering: Centering,
) -> Result<TsreFit> {
    check_traits(g.n(), x, y)?;
    let (xc, yc) = (centered(x), centered(y));
    let pm = if 2 * g.m() < g.n() {
        PairMoments::from_genotypes(g, &xc, &yc)?
    } else {
        PairMoments::from_grm(&crate::genotype::compute_grm(g)?, &xc, &yc)?
    };
    let mut fit = fit_from_moments(&pm, centering, g.n(), g.m())?;
    plug_in(&mut fit, x, y)?;
    Ok(fit)
}

/// Plug-in standard error for a fit on the same data.
pub fn tsre_stderr(fit: &TsreFit, a: &Grm, x: &[f64], y: &[f64]) -> Result<f64> {
    check_traits(a.n(), x, y)?;
    let mut f = TsreFit {
        n: a.n(),
        m: a.m_effective(),
        ..*fit
    };
    plug_in(&mut f, x, y)?;
    Ok(f.se)
}

/// Mean of w_ij = A_ij·((Y_iX_j + X_iY_j)/2 − θ·X_iX_j) over pairs, and its
/// z-score against the pair-sample sd/√N. In covariance mode A is centered
/// at its pair mean, so the mean vanishes at the covariance-mode θ̂.
pub fn moment_diagnostic(
    a: &Grm,
    x: &[f64],
    y: &[f64],
    theta: f64,
    centering: Centering,
) -> Result<(f64, f64)> {
    let n = a.n();
    check_traits(n, x, y)?;
    let (xc, yc) = (centered(x), centered(y));
    let big_n = (n * (n - 1)) as f64 / 2.0;
    let a_bar = match centering {
        Centering::Raw => 0.0,
        Centering::Covariance => {
            let total: f64 = (1..n).map(|i| a.lower_row(i)[..i].iter().sum::<f64>()).sum();
            total / big_n
        }
    };
    let partials: Vec<(f64, f64)> = (1..n)
        .into_par_iter()
        .map(|i| {
            let row = &a.lower_row(i)[..i];
            let (mut s, mut s2) = (0.0, 0.0);
            for (j, &v) in row.iter().enumerate() {
                let p = 0.5 * (yc[i] * xc[j] + xc[i] * yc[j]) - theta * xc[i] * xc[j];
                let w = (v - a_bar) * p;
                s += w;
                s2 += w * w;
            }
            (s, s2)
        })
        .collect();
    let (mut s, mut s2) = (0.0, 0.0);
    for (a1, a2) in partials {
        s += a1;
        s2 += a2;
    }
    let mean = s / big_n;
    let var = (s2 / big_n - mean * mean).max(0.0) * big_n / (big_n - 1.0);
    let z = if var > 0.0 {
        mean / (var / big_n).sqrt()
    } else if mean == 0.0 {
        0.0
    } else {
        mean.signum() * f64::INFINITY
    };
    Ok((mean, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genotype::{compute_grm, simulate_genotypes, standardize};
    use crate::rng;
    use crate::simgen::{generate_phenotypes, sample_effects, ScenarioConfig};
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    struct Brute {
        theta_raw: f64,
        theta_cov: f64,
        s_axx: f64,
        s_axy: f64,
        s_aa: f64,
        s_a: f64,
    }

    /// Explicit enumeration of the N pairs.
    fn brute(a: &Grm, x: &[f64], y: &[f64]) -> Brute {
        let n = x.len();
        let mx = x.iter().sum::<f64>() / n as f64;
        let my = y.iter().sum::<f64>() / n as f64;
        let mut rows = Vec::new();
        for i in 0..n {
            for j in 0..i {
                let xi = x[i] - mx;
                let xj = x[j] - mx;
                let yi = y[i] - my;
                let yj = y[j] - my;
                rows.push((a.get(i, j), xi * xj, 0.5 * (xi * yj + yi * xj)));
            }
        }
        let big_n = rows.len() as f64;
        let ma = rows.iter().map(|r| r.0).sum::<f64>() / big_n;
        let mxx = rows.iter().map(|r| r.1).sum::<f64>() / big_n;
        let mxy = rows.iter().map(|r| r.2).sum::<f64>() / big_n;
        let cov_xx: f64 = rows.iter().map(|r| (r.0 - ma) * (r.1 - mxx)).sum();
        let cov_xy: f64 = rows.iter().map(|r| (r.0 - ma) * (r.2 - mxy)).sum();
        Brute {
            theta_raw: rows.iter().map(|r| r.0 * r.2).sum::<f64>()
                / rows.iter().map(|r| r.0 * r.1).sum::<f64>(),
            theta_cov: cov_xy / cov_xx,
            s_axx: rows.iter().map(|r| r.0 * r.1).sum(),
            s_axy: rows.iter().map(|r| r.0 * r.2).sum(),
            s_aa: rows.iter().map(|r| r.0 * r.0).sum(),
            s_a: rows.iter().map(|r| r.0).sum(),
        }
    }

    fn instance(n: usize, m: usize, seed: u64) -> (StandardizedGenotypes, Grm, Vec<f64>, Vec<f64>) {
        let mut r = rng::child(seed, 0);
        let g = standardize(&simulate_genotypes(n, m, 0.1, 0.5, &mut r).unwrap()).unwrap();
        let a = compute_grm(&g).unwrap();
        let x: Vec<f64> = (0..n)
            .map(|i| g.row(i).iter().take(3).sum::<f64>() + { let z: f64 = StandardNormal.sample(&mut r); z })
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| 0.4 * v + { let z: f64 = StandardNormal.sample(&mut r); z } + 3.0)
            .collect();
        (g, a, x, y)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn single_pair_by_hand() {
        let a = Grm::from_lower(2, 1, vec![1.0, -1.0, 1.0]).unwrap();
        let pm = PairMoments::from_grm(&a, &[1.0, 2.0], &[0.0, 0.0]).unwrap();
        assert_eq!(pm.s_axx, -2.0);
        assert_eq!(pm.n_pairs, 1.0);
    }

    #[test]
    fn zero_exposure_gives_zero_sums() {
        let (_, a, _, y) = instance(10, 5, 1);
        let pm = pair_moments(&a, &[0.0; 10], &y).unwrap();
        assert_eq!((pm.s_axx, pm.s_axy, pm.s_xx, pm.s_xy), (0.0, 0.0, 0.0, 0.0));
        assert!(matches!(
            tsre_estimate(&a, &[0.0; 10], &y, Centering::Covariance),
            Err(Error::WeakSignal { .. })
        ));
    }

    #[test]
    fn too_few_individuals() {
        let a = Grm::from_lower(2, 1, vec![1.0, -1.0, 1.0]).unwrap();
        assert!(matches!(
            pair_moments(&a, &[1.0, 2.0], &[1.0, 2.0]),
            Err(Error::InsufficientSample { .. })
        ));
    }

    #[test]
    fn proportional_outcome_is_exact() {
        let (_, a, x, _) = instance(30, 8, 2);
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        for c in [Centering::Raw, Centering::Covariance] {
            let fit = tsre_estimate(&a, &x, &y, c).unwrap();
            assert!((fit.theta_hat - 2.0).abs() < 1e-12);
            assert!(fit.se < 1e-6);
        }
    }

    #[test]
    fn brute_force_small_instance() {
        let (_, a, x, y) = instance(20, 5, 3);
        let b = brute(&a, &x, &y);
        let pm = pair_moments(&a, &x, &y).unwrap();
        assert!(rel(pm.s_axx, b.s_axx) < 1e-10);
        assert!(rel(pm.s_axy, b.s_axy) < 1e-10);
        assert!(rel(pm.s_aa, b.s_aa) < 1e-10);
        assert!((pm.s_a - b.s_a).abs() < 1e-10 * b.s_aa.sqrt() * 20.0);
        let raw = tsre_estimate(&a, &x, &y, Centering::Raw).unwrap();
        let cov = tsre_estimate(&a, &x, &y, Centering::Covariance).unwrap();
        assert!(rel(raw.theta_hat, b.theta_raw) < 1e-10);
        assert!(rel(cov.theta_hat, b.theta_cov) < 1e-10);
        assert!(rel(cov.theta_hat, cov.delta_hat / cov.eta_hat) < 1e-14);
    }

    #[test]
    fn genotype_route_matches_grm_route() {
        let (g, a, x, y) = instance(60, 7, 4);
        let xc = centered(&x);
        let yc = centered(&y);
        let p1 = PairMoments::from_grm(&a, &xc, &yc).unwrap();
        let p2 = PairMoments::from_genotypes(&g, &xc, &yc).unwrap();
        for (u, v) in [
            (p1.s_axx, p2.s_axx),
            (p1.s_axy, p2.s_axy),
            (p1.s_aa, p2.s_aa),
        ] {
            assert!(rel(u, v) < 1e-9, "{u} {v}");
        }
        assert!((p1.s_a - p2.s_a).abs() < 1e-8);
        let f1 = tsre_estimate(&a, &x, &y, Centering::Covariance).unwrap();
        let f2 = tsre_from_genotypes(&g, &x, &y, Centering::Covariance).unwrap();
        assert!(rel(f1.theta_hat, f2.theta_hat) < 1e-8);
        assert!(rel(f1.se, f2.se) < 1e-8);
    }

    #[test]
    fn first_order_condition() {
        let (_, a, x, y) = instance(40, 10, 5);
        for c in [Centering::Raw, Centering::Covariance] {
            let fit = tsre_estimate(&a, &x, &y, c).unwrap();
            let (mean, _) = moment_diagnostic(&a, &x, &y, fit.theta_hat, c).unwrap();
            assert!(mean.abs() < 1e-12, "{c}: {mean}");
        }
    }

    #[test]
    fn stderr_vanishes_without_outcome_noise() {
        let (_, a, x, _) = instance(50, 10, 6);
        let y: Vec<f64> = x.iter().map(|v| 0.3 * v).collect();
        let fit = tsre_estimate(&a, &x, &y, Centering::Covariance).unwrap();
        assert!(tsre_stderr(&fit, &a, &x, &y).unwrap() < 1e-6);
    }

    #[test]
    fn translation_and_scale() {
        let (_, a, x, y) = instance(30, 6, 7);
        let base = tsre_estimate(&a, &x, &y, Centering::Covariance).unwrap().theta_hat;
        let xs: Vec<f64> = x.iter().map(|v| v + 5.0).collect();
        let ys: Vec<f64> = y.iter().map(|v| v - 2.0).collect();
        let shifted = tsre_estimate(&a, &xs, &ys, Centering::Covariance).unwrap().theta_hat;
        assert!((shifted - base).abs() < 1e-10);
        let xa: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let yb: Vec<f64> = y.iter().map(|v| -0.5 * v).collect();
        let scaled = tsre_estimate(&a, &xa, &yb, Centering::Covariance).unwrap().theta_hat;
        assert!(rel(scaled, -0.25 * base) < 1e-12);
    }

    #[test]
    fn centering_modes_parse() {
        assert_eq!("raw".parse::<Centering>().unwrap(), Centering::Raw);
        assert!("other".parse::<Centering>().is_err());
    }

    fn replicate_z(cfg: &ScenarioConfig, rep: u64, theta: f64) -> f64 {
        let mut r = rng::child(cfg.seed, rep);
        let g = standardize(&simulate_genotypes(cfg.n, cfg.m_total(), 0.2, 0.3, &mut r).unwrap()).unwrap();
        let eff = sample_effects(cfg, &mut r).unwrap();
        let p = generate_phenotypes(&g, &eff, cfg, &mut r).unwrap();
        let a = compute_grm(&g).unwrap();
        moment_diagnostic(&a, &p.x, &p.y, theta, Centering::Covariance).unwrap().1
    }

    #[test]
    fn diagnostic_calibration_and_power() {
        let cfg = ScenarioConfig {
            n: 300,
            m_b: 100,
            sigma_gb: 0.1,
            confounding: 0.0,
            seed: 8,
            ..Default::default()
        };
        let reps = 40;
        let calibrated = (0..reps).filter(|&r| replicate_z(&cfg, r, 0.3).abs() < 3.0).count();
        assert!(calibrated >= 36, "{calibrated}");
        let rejected = (0..reps).filter(|&r| replicate_z(&cfg, r, 0.0).abs() > 3.0).count();
        assert!(rejected > reps as usize / 2, "{rejected}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn brute_force_equivalence(n in 3usize..=50, m in 1usize..=20, seed in any::<u64>()) {
            let (_, a, x, y) = instance(n, m, seed);
            let b = brute(&a, &x, &y);
            for (c, want) in [(Centering::Raw, b.theta_raw), (Centering::Covariance, b.theta_cov)] {
                match tsre_estimate(&a, &x, &y, c) {
                    Ok(fit) => prop_assert!(rel(fit.theta_hat, want) < 1e-10, "{} {} {}", c, fit.theta_hat, want),
                    Err(Error::WeakSignal { .. }) => {}
                    Err(e) => prop_assert!(false, "{e}"),
                }
            }
        }

        #[test]
        fn relabeling_individuals(seed in any::<u64>()) {
            let (g, _, x, y) = instance(25, 6, seed);
            let perm: Vec<usize> = (0..25).rev().collect();
            let gv: Vec<f64> = perm.iter().flat_map(|&i| g.row(i).to_vec()).collect();
            let gp = StandardizedGenotypes::from_real(25, g.m(), &gv).unwrap();
            let xp: Vec<f64> = perm.iter().map(|&i| x[i]).collect();
            let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
            let a = compute_grm(&g).unwrap();
            let ap = compute_grm(&gp).unwrap();
            if let (Ok(f1), Ok(f2)) = (
                tsre_estimate(&a, &x, &y, Centering::Covariance),
                tsre_estimate(&ap, &xp, &yp, Centering::Covariance),
            ) {
                prop_assert!(rel(f1.theta_hat, f2.theta_hat) < 1e-8);
            }
        }
    }
}
