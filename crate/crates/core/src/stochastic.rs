//! Stochastic mass-action kinetics.
//!
//! Exact simulation with the Gillespie direct method, replicate ensembles
//! started from product-Poisson initial laws, and a master-equation
//! integrator restricted to a finite box of the lattice.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::factorial::ln_factorial;
use thiserror::Error;

use crate::network::{Reaction, ReactionNetwork};

pub type StateVector = Vec<u64>;

/// Default cap on events per replicate.
pub const DEFAULT_EVENT_CAP: u64 = 100_000_000;
/// Default budget for probability leaking out of a truncated box.
pub const DEFAULT_LEAK_BUDGET: f64 = 1e-6;
/// Largest box the truncated master equation will allocate.
pub const MAX_LATTICE_POINTS: usize = 20_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StochasticError {
    #[error("replicate {replicate}: more than {cap} events before the horizon")]
    EventOverflow { replicate: usize, cap: u64 },
    #[error("box too small: {leaked:e} probability left the box (budget {budget:e})")]
    BoxTooSmall { leaked: f64, budget: f64 },
    #[error("box has {points} lattice points, more than the limit {MAX_LATTICE_POINTS}")]
    BoxTooLarge { points: usize },
    #[error("initial law puts {0:e} mass outside the box")]
    InitialMassOutsideBox(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// `κ Π_i x_i!/(x_i − y_i)!`, zero when some `x_i < y_i`.
pub fn intensity(r: &Reaction, x: &[u64]) -> f64 {
    let mut a = r.rate;
    for (&y, &xi) in r.source.counts().iter().zip(x) {
        let y = u64::from(y);
        if xi < y {
            return 0.0;
        }
        for l in 0..y {
            a *= (xi - l) as f64;
        }
    }
    a
}

/// `q(x, x′) = Σ_{k: ζ_k = x′ − x} λ_k(x)` over targets with positive rate.
pub fn transition_rates(net: &ReactionNetwork, x: &[u64]) -> BTreeMap<StateVector, f64> {
    let mut out = BTreeMap::new();
    for r in net.reactions() {
        let a = intensity(r, x);
        if a <= 0.0 {
            continue;
        }
        let target: StateVector = x
            .iter()
            .zip(r.reaction_vector())
            .map(|(&xi, z)| (xi as i64 + z) as u64)
            .collect();
        *out.entry(target).or_insert(0.0) += a;
    }
    out
}

/// One Poisson draw: Knuth's multiplication method below mean 30, Hörmann's
/// transformed rejection (PTRS) above.
pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    if mean < 30.0 {
        let limit = (-mean).exp();
        let mut k = 0;
        let mut p = rng.random::<f64>();
        while p > limit {
            k += 1;
            p *= rng.random::<f64>();
        }
        return k;
    }
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.random::<f64>() - 0.5;
        let v = rng.random::<f64>();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -mean + k * loglam - ln_factorial(k as u64);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// Independent Poisson draws with means `c`.
pub fn sample_product_poisson<R: Rng + ?Sized>(c: &[f64], rng: &mut R) -> StateVector {
    c.iter().map(|&m| sample_poisson(m, rng)).collect()
}

struct Kinetics {
    sources: Vec<Vec<(usize, u64)>>,
    changes: Vec<Vec<(usize, i64)>>,
    rates: Vec<f64>,
}

impl Kinetics {
    fn new(net: &ReactionNetwork) -> Self {
        let mut sources = Vec::new();
        let mut changes = Vec::new();
        let mut rates = Vec::new();
        for r in net.reactions() {
            sources.push(
                r.source
                    .counts()
                    .iter()
                    .enumerate()
                    .filter(|(_, &y)| y > 0)
                    .map(|(i, &y)| (i, u64::from(y)))
                    .collect(),
            );
            changes.push(
                r.reaction_vector()
                    .into_iter()
                    .enumerate()
                    .filter(|(_, z)| *z != 0)
                    .collect(),
            );
            rates.push(r.rate);
        }
        Kinetics {
            sources,
            changes,
            rates,
        }
    }

    fn propensity(&self, k: usize, x: &[u64]) -> f64 {
        let mut a = self.rates[k];
        for &(i, y) in &self.sources[k] {
            let xi = x[i];
            if xi < y {
                return 0.0;
            }
            for l in 0..y {
                a *= (xi - l) as f64;
            }
        }
        a
    }
}

/// Gillespie direct method from `x0` up to time `T`; returns `X_T`.
pub fn simulate<R: Rng + ?Sized>(
    net: &ReactionNetwork,
    x0: &[u64],
    horizon: f64,
    rng: &mut R,
    event_cap: u64,
) -> Result<StateVector, StochasticError> {
    simulate_with(&Kinetics::new(net), x0, horizon, rng, event_cap)
        .map_err(|cap| StochasticError::EventOverflow { replicate: 0, cap })
}

fn simulate_with<R: Rng + ?Sized>(
    kin: &Kinetics,
    x0: &[u64],
    horizon: f64,
    rng: &mut R,
    event_cap: u64,
) -> Result<StateVector, u64> {
    let mut x = x0.to_vec();
    let mut props = vec![0.0; kin.rates.len()];
    let mut t = 0.0;
    let mut events = 0u64;
    loop {
        let mut total = 0.0;
        for (k, p) in props.iter_mut().enumerate() {
            *p = kin.propensity(k, &x);
            total += *p;
        }
        if total <= 0.0 {
            return Ok(x);
        }
        t += -(1.0 - rng.random::<f64>()).ln() / total;
        if t > horizon {
            return Ok(x);
        }
        if events == event_cap {
            return Err(event_cap);
        }
        events += 1;
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = props.len() - 1;
        for (k, &p) in props.iter().enumerate() {
            acc += p;
            if target < acc {
                chosen = k;
                break;
            }
        }
        // roundoff can select a zero-propensity reaction at the end
        while props[chosen] == 0.0 {
            chosen -= 1;
        }
        for &(i, z) in &kin.changes[chosen] {
            x[i] = (x[i] as i64 + z) as u64;
        }
    }
}

/// RNG stream of replicate `i` under `seed`.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

#[derive(Debug, Clone, Copy)]
pub struct EnsembleConfig {
    pub replicates: usize,
    pub horizon: f64,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    pub event_cap: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            replicates: 100_000,
            horizon: 2.0,
            seed: 42,
            workers: None,
            event_cap: DEFAULT_EVENT_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesSummary {
    pub name: String,
    pub mean: f64,
    /// Unbiased sample variance; 0 for a single replicate.
    pub variance: f64,
    /// Count value → number of replicates.
    pub histogram: BTreeMap<u64, u64>,
}

impl SpeciesSummary {
    fn from_values(name: &str, values: impl Iterator<Item = u64>) -> Self {
        let mut histogram = BTreeMap::new();
        for v in values {
            *histogram.entry(v).or_insert(0u64) += 1;
        }
        let n: u64 = histogram.values().sum();
        let sum: f64 = histogram.iter().map(|(&k, &c)| k as f64 * c as f64).sum();
        let mean = sum / n as f64;
        let ss: f64 = histogram
            .iter()
            .map(|(&k, &c)| (k as f64 - mean).powi(2) * c as f64)
            .sum();
        let variance = if n > 1 { ss / (n - 1) as f64 } else { 0.0 };
        SpeciesSummary {
            name: name.to_string(),
            mean,
            variance,
            histogram,
        }
    }

    pub fn replicates(&self) -> u64 {
        self.histogram.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub replicates: usize,
    pub horizon: f64,
    pub seed: u64,
    pub species: Vec<SpeciesSummary>,
}

#[derive(Debug, Serialize)]
pub struct SpeciesSummaryJson<'a> {
    pub name: &'a str,
    pub mean: f64,
    pub variance: f64,
    pub histogram: Vec<(u64, u64)>,
}

#[derive(Debug, Serialize)]
pub struct EnsembleSummaryJson<'a> {
    #[serde(rename = "N")]
    pub replicates: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub seed: u64,
    pub species: Vec<SpeciesSummaryJson<'a>>,
}

impl EnsembleSummary {
    pub fn to_json(&self) -> EnsembleSummaryJson<'_> {
        EnsembleSummaryJson {
            replicates: self.replicates,
            horizon: self.horizon,
            seed: self.seed,
            species: self
                .species
                .iter()
                .map(|s| SpeciesSummaryJson {
                    name: &s.name,
                    mean: s.mean,
                    variance: s.variance,
                    histogram: s.histogram.iter().map(|(&k, &c)| (k, c)).collect(),
                })
                .collect(),
        }
    }

    /// `species,count,frequency` rows for one species, nonzero bins only.
    pub fn histogram_csv(&self, species: usize) -> String {
        let s = &self.species[species];
        let mut out = String::from("species,count,frequency\n");
        for (k, c) in &s.histogram {
            let _ = writeln!(out, "{},{k},{c}", s.name);
        }
        out
    }
}

/// `N` independent replicates, each started from a product-Poisson draw
/// with means `c0`. Replicate `i` draws from stream `i` of the master seed,
/// so the summary does not depend on the worker count.
pub fn run_ensemble(
    net: &ReactionNetwork,
    c0: &[f64],
    cfg: &EnsembleConfig,
) -> Result<EnsembleSummary, StochasticError> {
    if cfg.replicates == 0 {
        return Err(StochasticError::InvalidArgument(
            "at least one replicate is required".into(),
        ));
    }
    if c0.len() != net.dim() {
        return Err(StochasticError::DimensionMismatch {
            expected: net.dim(),
            found: c0.len(),
        });
    }
    if !(cfg.horizon >= 0.0) {
        return Err(StochasticError::InvalidArgument("horizon must be nonnegative".into()));
    }
    let kin = Kinetics::new(net);
    let run = || -> Result<Vec<StateVector>, StochasticError> {
        (0..cfg.replicates)
            .into_par_iter()
            .map(|i| {
                let mut rng = replicate_rng(cfg.seed, i as u64);
                let x0 = sample_product_poisson(c0, &mut rng);
                simulate_with(&kin, &x0, cfg.horizon, &mut rng, cfg.event_cap).map_err(|cap| {
                    StochasticError::EventOverflow { replicate: i, cap }
                })
            })
            .collect()
    };
    let finals = match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| StochasticError::InvalidArgument(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    let species = net
        .species()
        .iter()
        .enumerate()
        .map(|(i, name)| SpeciesSummary::from_values(name, finals.iter().map(|x| x[i])))
        .collect();
    Ok(EnsembleSummary {
        replicates: cfg.replicates,
        horizon: cfg.horizon,
        seed: cfg.seed,
        species,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum CmeInitial {
    /// Product of Poissons with these means.
    Poisson(Vec<f64>),
    /// Dense pmf over the box, in [`TruncatedPmf`] index order.
    Dense(Vec<f64>),
}

/// A pmf on the box `0..=bounds[i]` per species, flattened with the first
/// species varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedPmf {
    pub bounds: Vec<u64>,
    pub probabilities: Vec<f64>,
    /// Mass that has left the box (plus initial mass outside it).
    pub leaked: f64,
}

impl TruncatedPmf {
    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn index(&self, x: &[u64]) -> Option<usize> {
        lattice_index(&self.bounds, x)
    }

    pub fn state(&self, mut idx: usize) -> StateVector {
        self.bounds
            .iter()
            .map(|&b| {
                let side = b as usize + 1;
                let v = idx % side;
                idx /= side;
                v as u64
            })
            .collect()
    }

    pub fn prob(&self, x: &[u64]) -> f64 {
        self.index(x).map_or(0.0, |i| self.probabilities[i])
    }

    pub fn total_mass(&self) -> f64 {
        neumaier_sum(self.probabilities.iter().copied())
    }

    pub fn marginal(&self, species: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.bounds[species] as usize + 1];
        for (idx, &p) in self.probabilities.iter().enumerate() {
            out[self.state(idx)[species] as usize] += p;
        }
        out
    }

    /// Marginal means conditioned on staying inside the box.
    pub fn means(&self) -> Vec<f64> {
        let total = self.total_mass();
        (0..self.bounds.len())
            .map(|i| {
                self.marginal(i)
                    .iter()
                    .enumerate()
                    .map(|(k, p)| k as f64 * p)
                    .sum::<f64>()
                    / total
            })
            .collect()
    }
}

fn lattice_index(bounds: &[u64], x: &[u64]) -> Option<usize> {
    let mut idx = 0usize;
    let mut stride = 1usize;
    for (&b, &xi) in bounds.iter().zip(x) {
        if xi > b {
            return None;
        }
        idx += xi as usize * stride;
        stride *= b as usize + 1;
    }
    Some(idx)
}

pub(crate) fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[derive(Debug, Clone, Copy)]
pub struct CmeOptions {
    pub horizon: f64,
    /// Largest RK4 step; the step is further limited to `1 / max exit rate`.
    pub dt: f64,
    pub leak_budget: f64,
}

/// Master equation on a finite box, integrated with RK4. Flux to states
/// outside the box is accumulated in `leaked`.
pub fn truncated_cme(
    net: &ReactionNetwork,
    initial: &CmeInitial,
    bounds: &[u64],
    opts: &CmeOptions,
) -> Result<TruncatedPmf, StochasticError> {
    let d = net.dim();
    if bounds.len() != d {
        return Err(StochasticError::DimensionMismatch {
            expected: d,
            found: bounds.len(),
        });
    }
    if !(opts.horizon >= 0.0 && opts.dt > 0.0) {
        return Err(StochasticError::InvalidArgument(
            "horizon must be nonnegative and dt positive".into(),
        ));
    }
    let points = bounds
        .iter()
        .try_fold(1usize, |acc, &b| acc.checked_mul(b as usize + 1))
        .filter(|&p| p <= MAX_LATTICE_POINTS)
        .ok_or(StochasticError::BoxTooLarge {
            points: bounds.iter().map(|&b| b as usize + 1).fold(1usize, usize::saturating_mul),
        })?;
    let mut pmf = TruncatedPmf {
        bounds: bounds.to_vec(),
        probabilities: vec![0.0; points],
        leaked: 0.0,
    };
    match initial {
        CmeInitial::Poisson(means) => {
            if means.len() != d {
                return Err(StochasticError::DimensionMismatch {
                    expected: d,
                    found: means.len(),
                });
            }
            let logs: Vec<Vec<f64>> = means
                .iter()
                .zip(bounds)
                .map(|(&m, &b)| {
                    (0..=b)
                        .map(|k| -m + k as f64 * m.ln() - ln_factorial(k))
                        .collect()
                })
                .collect();
            for idx in 0..points {
                let x = pmf.state(idx);
                pmf.probabilities[idx] = x.iter().enumerate().map(|(i, &k)| logs[i][k as usize]).sum::<f64>().exp();
            }
        }
        CmeInitial::Dense(p) => {
            if p.len() != points {
                return Err(StochasticError::DimensionMismatch {
                    expected: points,
                    found: p.len(),
                });
            }
            pmf.probabilities.copy_from_slice(p);
        }
    }
    let outside = 1.0 - pmf.total_mass();
    if outside > 1e-12 {
        return Err(StochasticError::InitialMassOutsideBox(outside));
    }
    pmf.leaked = outside.max(0.0);

    // Sparse generator: per state, total exit rate and (target, rate) pairs;
    // target `usize::MAX` means outside the box.
    const OUT: usize = usize::MAX;
    let kin = Kinetics::new(net);
    let mut exit = vec![0.0; points];
    let mut offsets = Vec::with_capacity(points + 1);
    let mut targets = Vec::new();
    let mut rates = Vec::new();
    let mut max_exit: f64 = 0.0;
    offsets.push(0);
    let mut y = vec![0u64; d];
    for idx in 0..points {
        let x = pmf.state(idx);
        for k in 0..kin.rates.len() {
            let a = kin.propensity(k, &x);
            if a <= 0.0 {
                continue;
            }
            y.copy_from_slice(&x);
            for &(i, z) in &kin.changes[k] {
                y[i] = (y[i] as i64 + z) as u64;
            }
            targets.push(lattice_index(bounds, &y).unwrap_or(OUT));
            rates.push(a);
            exit[idx] += a;
        }
        max_exit = max_exit.max(exit[idx]);
        offsets.push(targets.len());
    }

    let deriv = |p: &[f64], dp: &mut [f64]| -> f64 {
        dp.iter_mut().for_each(|v| *v = 0.0);
        let mut leak = 0.0;
        for s in 0..points {
            let ps = p[s];
            if ps == 0.0 {
                continue;
            }
            dp[s] -= exit[s] * ps;
            for e in offsets[s]..offsets[s + 1] {
                let flow = rates[e] * ps;
                match targets[e] {
                    OUT => leak += flow,
                    t => dp[t] += flow,
                }
            }
        }
        leak
    };

    if opts.horizon > 0.0 {
        let h_max = if max_exit > 0.0 { opts.dt.min(1.0 / max_exit) } else { opts.dt };
        let steps = (opts.horizon / h_max).ceil().max(1.0) as usize;
        let h = opts.horizon / steps as f64;
        let mut p = std::mem::take(&mut pmf.probabilities);
        let mut leaked = pmf.leaked;
        let (mut k1, mut k2, mut k3, mut k4) =
            (vec![0.0; points], vec![0.0; points], vec![0.0; points], vec![0.0; points]);
        let mut tmp = vec![0.0; points];
        for _ in 0..steps {
            let l1 = deriv(&p, &mut k1);
            stage(&p, h / 2.0, &k1, &mut tmp);
            let l2 = deriv(&tmp, &mut k2);
            stage(&p, h / 2.0, &k2, &mut tmp);
            let l3 = deriv(&tmp, &mut k3);
            stage(&p, h, &k3, &mut tmp);
            let l4 = deriv(&tmp, &mut k4);
            for i in 0..points {
                p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            leaked += h / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
        }
        pmf.probabilities = p;
        pmf.leaked = leaked;
    }
    if pmf.leaked > opts.leak_budget {
        return Err(StochasticError::BoxTooSmall {
            leaked: pmf.leaked,
            budget: opts.leak_budget,
        });
    }
    Ok(pmf)
}

fn stage(x: &[f64], a: f64, k: &[f64], out: &mut [f64]) {
    for ((o, &xi), &ki) in out.iter_mut().zip(x).zip(k) {
        *o = xi + a * ki;
    }
}
