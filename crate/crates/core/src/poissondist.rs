//! Product-Poisson laws and the tests built on them.
//!
//! Covers pmf evaluation, the polynomial `g_{x,c}(y)` whose flux-weighted
//! differences vanish exactly when a product-Poisson law solves the master
//! equation, a numeric rank check on those polynomials, and distribution
//! distances for comparing ensembles with predicted laws.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::factorial::ln_factorial;
use thiserror::Error;

use crate::network::{Complex, ReactionNetwork};
use crate::stochastic::{neumaier_sum, replicate_rng, EnsembleSummary, StateVector, TruncatedPmf};

/// Mass a comparison box may leave uncovered.
pub const COVERAGE_SLACK: f64 = 1e-6;
/// Default χ² significance level.
pub const DEFAULT_SIGNIFICANCE: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoissonError {
    #[error("mean {value} of species {species} is not a positive finite number")]
    InvalidMean { species: usize, value: f64 },
    #[error("{samples} sample states cannot certify rank {complexes}")]
    InsufficientSamples { samples: usize, complexes: usize },
    #[error("box 0..={bound} covers only {coverage} of the law's mass")]
    BoxTooSmall { bound: u64, coverage: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Independent Poisson marginals with means `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductPoissonLaw {
    means: Vec<f64>,
}

impl ProductPoissonLaw {
    pub fn new(means: Vec<f64>) -> Result<Self, PoissonError> {
        if let Some((species, &value)) =
            means.iter().enumerate().find(|(_, m)| !(m.is_finite() && **m > 0.0))
        {
            return Err(PoissonError::InvalidMean { species, value });
        }
        Ok(ProductPoissonLaw { means })
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn log_pmf(&self, x: &[u64]) -> f64 {
        self.means.iter().zip(x).map(|(&c, &k)| poisson_log_pmf(c, k)).sum()
    }

    pub fn pmf(&self, x: &[u64]) -> f64 {
        self.log_pmf(x).exp()
    }
}

pub fn poisson_log_pmf(mean: f64, k: u64) -> f64 {
    -mean + k as f64 * mean.ln() - ln_factorial(k)
}

/// `Σ_j (x_j/c_j − 1) y_j − [x!/(x−y)!] c^{−y} + 1`.
///
/// Evaluated as `(Σ_j y_j x_j/c_j − ff) + (1 − ‖y‖₁)` so that complexes of
/// order at most one cancel to exactly zero in floating point.
pub fn g_function(x: &[u64], c: &[f64], y: &Complex) -> f64 {
    let mut linear = 0.0;
    let mut ff = 1.0;
    for ((&xj, &cj), &yj) in x.iter().zip(c).zip(y.counts()) {
        if yj == 0 {
            continue;
        }
        linear += f64::from(yj) * (xj as f64 / cj);
        if u64::from(yj) > xj {
            ff = 0.0;
        } else if ff != 0.0 {
            for l in 0..u64::from(yj) {
                ff *= (xj - l) as f64 / cj;
            }
        }
    }
    (linear - ff) + (1.0 - f64::from(y.order()))
}

/// `Σ_k κ_k c^{y_k} [g_{x,c}(y_k′) − g_{x,c}(y_k)]`.
pub fn master_identity_residual(net: &ReactionNetwork, c: &[f64], x: &[u64]) -> f64 {
    net.reactions()
        .iter()
        .map(|r| r.rate * r.source.monomial(c) * (g_function(x, c, &r.product) - g_function(x, c, &r.source)))
        .sum()
}

/// Default sample: the lattice box `0..=K` per species with
/// `K = max(3, max_order + 2)` (shrunk until it has at most 10⁴ points),
/// plus 100 random states with coordinates at most 20.
pub fn default_sample_states(dim: usize, max_order: u32, seed: u64) -> Vec<StateVector> {
    let mut k = u64::from(max_order.max(1)) + 2;
    k = k.max(3);
    while k > 1 && (k + 1).checked_pow(dim as u32).is_none_or(|p| p > 10_000) {
        k -= 1;
    }
    let side = k + 1;
    let points = side.pow(dim as u32) as usize;
    let mut out: Vec<StateVector> = (0..points)
        .map(|mut idx| {
            (0..dim)
                .map(|_| {
                    let v = idx as u64 % side;
                    idx /= side as usize;
                    v
                })
                .collect()
        })
        .collect();
    let mut rng = replicate_rng(seed, u64::MAX);
    for _ in 0..100 {
        out.push((0..dim).map(|_| rng.random_range(0..=20)).collect());
    }
    out
}

/// Numeric rank of `[g_{x_j,c}(z_i)]_{ij}` with rows normalised to unit
/// length and singular values below `10⁻⁹ σ_max` discarded.
pub fn linear_independence_rank(
    complexes: &[Complex],
    c: &[f64],
    samples: &[StateVector],
) -> Result<usize, PoissonError> {
    let m = complexes.len();
    if m == 0 {
        return Ok(0);
    }
    if samples.len() < m {
        return Err(PoissonError::InsufficientSamples {
            samples: samples.len(),
            complexes: m,
        });
    }
    let mut mat = DMatrix::from_fn(m, samples.len(), |i, j| g_function(&samples[j], c, &complexes[i]));
    for mut row in mat.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    let sv = mat.singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > 1e-9 * smax).count())
}

/// Poisson(mean) probabilities on `0..=bound` and the mass they cover.
fn poisson_table(mean: f64, bound: u64) -> (Vec<f64>, f64) {
    let p: Vec<f64> = (0..=bound).map(|k| poisson_log_pmf(mean, k).exp()).collect();
    let mass = neumaier_sum(p.iter().copied());
    (p, mass)
}

/// Smallest bound whose box covers all but `COVERAGE_SLACK` of Poisson(mean).
pub fn covering_bound(mean: f64) -> u64 {
    let mut k = (mean + 10.0 * mean.sqrt() + 10.0).ceil() as u64;
    while 1.0 - poisson_table(mean, k).1 > COVERAGE_SLACK {
        k += k / 2 + 1;
    }
    k
}

fn checked_table(mean: f64, bound: u64) -> Result<(Vec<f64>, f64), PoissonError> {
    if !(mean.is_finite() && mean > 0.0) {
        return Err(PoissonError::InvalidMean { species: 0, value: mean });
    }
    let (p, mass) = poisson_table(mean, bound);
    if 1.0 - mass > COVERAGE_SLACK {
        return Err(PoissonError::BoxTooSmall { bound, coverage: mass });
    }
    Ok((p, mass))
}

/// Total variation between an empirical histogram and Poisson(mean) on
/// `0..=bound`, counting both tails beyond the box in full.
pub fn total_variation(
    histogram: &BTreeMap<u64, u64>,
    mean: f64,
    bound: u64,
) -> Result<f64, PoissonError> {
    let (p, mass) = checked_table(mean, bound)?;
    let n: u64 = histogram.values().sum();
    let n = n as f64;
    let inside = p
        .iter()
        .enumerate()
        .map(|(k, &pk)| (histogram.get(&(k as u64)).copied().unwrap_or(0) as f64 / n - pk).abs());
    let empirical_tail = histogram.range(bound + 1..).map(|(_, &c)| c as f64).sum::<f64>() / n;
    let tail = (1.0 - mass).max(0.0) + empirical_tail;
    Ok(0.5 * neumaier_sum(inside.chain(std::iter::once(tail))))
}

/// Total variation between two pmfs given on the same support.
pub fn total_variation_pmfs(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    0.5 * neumaier_sum((0..n).map(|i| (at(p, i) - at(q, i)).abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson χ² of a histogram against Poisson(mean). Bins are pooled left
/// to right until each expected count is at least 5; the tail beyond the
/// box joins the last pool.
pub fn chi_square(
    histogram: &BTreeMap<u64, u64>,
    mean: f64,
    bound: u64,
) -> Result<ChiSquare, PoissonError> {
    let (p, mass) = checked_table(mean, bound)?;
    let n = histogram.values().sum::<u64>() as f64;
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for (k, &pk) in p.iter().enumerate() {
        obs += histogram.get(&(k as u64)).copied().unwrap_or(0) as f64;
        exp += n * pk;
        if exp >= 5.0 {
            bins.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    obs += histogram.range(bound + 1..).map(|(_, &c)| c as f64).sum::<f64>();
    exp += n * (1.0 - mass).max(0.0);
    match bins.last_mut() {
        Some(last) if exp < 5.0 => {
            last.0 += obs;
            last.1 += exp;
        }
        _ => bins.push((obs, exp)),
    }
    if bins.len() < 2 {
        return Ok(ChiSquare {
            statistic: 0.0,
            dof: 0,
            p_value: 1.0,
        });
    }
    let statistic: f64 = bins.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
    let dof = bins.len() - 1;
    let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    Ok(ChiSquare {
        statistic,
        dof,
        p_value: dist.sf(statistic),
    })
}

/// Sup-norm and TV distance between a truncated pmf and a product law,
/// the TV including the law's mass outside the box and the leaked mass.
pub fn compare_truncated(pmf: &TruncatedPmf, law: &ProductPoissonLaw) -> (f64, f64) {
    let mut sup: f64 = 0.0;
    let mut law_mass = Vec::with_capacity(pmf.len());
    let diffs: Vec<f64> = pmf
        .probabilities
        .iter()
        .enumerate()
        .map(|(idx, &p)| {
            let q = law.pmf(&pmf.state(idx));
            law_mass.push(q);
            let d = (p - q).abs();
            sup = sup.max(d);
            d
        })
        .collect();
    let outside = (1.0 - neumaier_sum(law_mass.into_iter())).max(0.0);
    let tv = 0.5 * neumaier_sum(diffs.into_iter().chain([outside, pmf.leaked]));
    (sup, tv)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SpeciesComparison {
    pub name: String,
    pub tv: f64,
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
    pub predicted_mean: f64,
    pub empirical_mean: f64,
    pub empirical_variance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub species: Vec<SpeciesComparison>,
}

impl ComparisonReport {
    pub fn all_passed(&self) -> bool {
        self.species.iter().all(|s| s.passed)
    }
}

/// Per-species TV and χ² of an ensemble against the predicted law; a
/// species passes when its χ² p-value exceeds `significance`.
pub fn compare_ensemble(
    summary: &EnsembleSummary,
    law: &ProductPoissonLaw,
    significance: f64,
) -> Result<ComparisonReport, PoissonError> {
    if summary.species.len() != law.means().len() {
        return Err(PoissonError::DimensionMismatch {
            expected: law.means().len(),
            found: summary.species.len(),
        });
    }
    let species = summary
        .species
        .iter()
        .zip(law.means())
        .map(|(s, &mean)| {
            let observed_max = s.histogram.keys().next_back().copied().unwrap_or(0);
            let bound = covering_bound(mean).max(observed_max);
            let tv = total_variation(&s.histogram, mean, bound)?;
            let chi = chi_square(&s.histogram, mean, bound)?;
            Ok(SpeciesComparison {
                name: s.name.clone(),
                tv,
                chi2: chi.statistic,
                dof: chi.dof,
                p_value: chi.p_value,
                predicted_mean: mean,
                empirical_mean: s.mean,
                empirical_variance: s.variance,
                passed: chi.p_value > significance,
            })
        })
        .collect::<Result<_, PoissonError>>()?;
    Ok(ComparisonReport { species })
}
