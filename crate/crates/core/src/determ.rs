//! Deterministic mass-action kinetics.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::network::ReactionNetwork;

/// Components more negative than this after a step are treated as a
/// model error rather than roundoff.
pub const NEGATIVE_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Concentration {
    pub time: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub grid: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn last(&self) -> Option<Concentration> {
        Some(Concentration {
            time: *self.grid.last()?,
            values: self.states.last()?.clone(),
        })
    }

    /// CSV with header `t,<species...>` and 17 significant digits.
    pub fn to_csv(&self, species: &[String]) -> String {
        let mut out = String::from("t");
        for s in species {
            out.push(',');
            out.push_str(s);
        }
        out.push('\n');
        for (t, state) in self.grid.iter().zip(&self.states) {
            let _ = write!(out, "{t:.16e}");
            for v in state {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetermError {
    #[error("horizon and step must be positive (T = {horizon}, dt = {dt})")]
    InvalidStep { horizon: f64, dt: f64 },
    #[error("solution exceeded norm bound {bound:e} at t = {time} (finite-time blow-up?)")]
    BlowUp { time: f64, bound: f64 },
    #[error("species {species} reached {value:e} at t = {time}")]
    NegativeState {
        time: f64,
        species: usize,
        value: f64,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub dt: f64,
    /// Abort once `‖c‖₁` exceeds this.
    pub norm_bound: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            dt: 1e-3,
            norm_bound: 1e12,
        }
    }
}

/// `Σ_k κ_k c^{y_k} (y_k′ − y_k)`.
pub fn mass_action_rhs(net: &ReactionNetwork, c: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; net.dim()];
    add_rhs(net, c, &mut out);
    out
}

fn add_rhs(net: &ReactionNetwork, c: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for r in net.reactions() {
        let flux = r.rate * r.source.monomial(c);
        if flux == 0.0 {
            continue;
        }
        for ((o, &p), &s) in out.iter_mut().zip(r.product.counts()).zip(r.source.counts()) {
            if p != s {
                *o += flux * (f64::from(p) - f64::from(s));
            }
        }
    }
}

/// Classical RK4 on the grid `0, dt, 2dt, …, T` (last step shortened to
/// land on `T`).
pub fn integrate_ode(
    net: &ReactionNetwork,
    c0: &[f64],
    horizon: f64,
    opts: OdeOptions,
) -> Result<Trajectory, DetermError> {
    let dt = opts.dt;
    if !(horizon > 0.0 && dt > 0.0) {
        return Err(DetermError::InvalidStep { horizon, dt });
    }
    let d = c0.len();
    let steps = (horizon / dt - 1e-9).ceil().max(1.0) as usize;
    let mut grid = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut warnings = Vec::new();
    let mut c = c0.to_vec();
    grid.push(0.0);
    states.push(c.clone());

    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut tmp = vec![0.0; d];
    let mut clamped = 0usize;
    for step in 1..=steps {
        let t0 = (step - 1) as f64 * dt;
        let t1 = if step == steps { horizon } else { step as f64 * dt };
        let h = t1 - t0;
        add_rhs(net, &c, &mut k1);
        axpy(&c, h / 2.0, &k1, &mut tmp);
        add_rhs(net, &tmp, &mut k2);
        axpy(&c, h / 2.0, &k2, &mut tmp);
        add_rhs(net, &tmp, &mut k3);
        axpy(&c, h, &k3, &mut tmp);
        add_rhs(net, &tmp, &mut k4);
        for i in 0..d {
            c[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        for (species, v) in c.iter_mut().enumerate() {
            if *v < 0.0 {
                if *v < -NEGATIVE_CLAMP {
                    return Err(DetermError::NegativeState {
                        time: t1,
                        species,
                        value: *v,
                    });
                }
                *v = 0.0;
                clamped += 1;
            }
        }
        let norm: f64 = c.iter().map(|v| v.abs()).sum();
        if !norm.is_finite() || norm > opts.norm_bound {
            return Err(DetermError::BlowUp {
                time: t1,
                bound: opts.norm_bound,
            });
        }
        grid.push(t1);
        states.push(c.clone());
    }
    if clamped > 0 {
        warnings.push(format!(
            "clamped {clamped} slightly negative component(s) to zero"
        ));
    }
    Ok(Trajectory {
        grid,
        states,
        warnings,
    })
}

/// RK4 states at arbitrary increasing grid points starting at 0; each
/// interval is split into equal steps no longer than `opts.dt`.
pub fn integrate_on_grid(
    net: &ReactionNetwork,
    c0: &[f64],
    grid: &[f64],
    opts: OdeOptions,
) -> Result<Trajectory, DetermError> {
    let mut states = Vec::with_capacity(grid.len());
    let mut warnings = Vec::new();
    let mut c = c0.to_vec();
    let mut prev = 0.0;
    for &t in grid {
        let span = t - prev;
        if span > 0.0 {
            let steps = (span / opts.dt - 1e-9).ceil().max(1.0);
            let seg = integrate_ode(
                net,
                &c,
                span,
                OdeOptions {
                    dt: span / steps,
                    ..opts
                },
            )
            .map_err(|e| shift_error(e, prev))?;
            warnings.extend(seg.warnings);
            c = seg.states.last().cloned().unwrap_or(c);
        }
        states.push(c.clone());
        prev = t;
    }
    warnings.dedup();
    Ok(Trajectory {
        grid: grid.to_vec(),
        states,
        warnings,
    })
}

fn shift_error(e: DetermError, offset: f64) -> DetermError {
    match e {
        DetermError::BlowUp { time, bound } => DetermError::BlowUp {
            time: time + offset,
            bound,
        },
        DetermError::NegativeState {
            time,
            species,
            value,
        } => DetermError::NegativeState {
            time: time + offset,
            species,
            value,
        },
        other => other,
    }
}

/// `n` equally spaced points on `[0, T]`.
pub fn uniform_grid(horizon: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..n)
            .map(|i| if i + 1 == n { horizon } else { horizon * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

fn axpy(x: &[f64], a: f64, y: &[f64], out: &mut [f64]) {
    for ((o, &xi), &yi) in out.iter_mut().zip(x).zip(y) {
        *o = xi + a * yi;
    }
}

/// Per-complex outflow and inflow `(Σ_{y_k=z} κ_k c^z, Σ_{y_k′=z} κ_k c^{y_k})`.
pub fn complex_fluxes(net: &ReactionNetwork, c: &[f64]) -> Vec<(f64, f64)> {
    let mut fluxes = vec![(0.0, 0.0); net.complexes().len()];
    for (r, &(s, p)) in net.reactions().iter().zip(net.edges()) {
        let flux = r.rate * r.source.monomial(c);
        fluxes[s].0 += flux;
        fluxes[p].1 += flux;
    }
    fluxes
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceCheck {
    pub balanced: bool,
    /// Outflow minus inflow, per complex in network order.
    pub residuals: Vec<f64>,
}

/// Complex balance at `c`: every complex's outflow equals its inflow to
/// within `tol`.
pub fn is_complex_balanced_at(net: &ReactionNetwork, c: &[f64], tol: f64) -> BalanceCheck {
    let residuals: Vec<f64> = complex_fluxes(net, c)
        .into_iter()
        .map(|(out, inn)| out - inn)
        .collect();
    BalanceCheck {
        balanced: residuals.iter().all(|r| r.abs() <= tol),
        residuals,
    }
}
