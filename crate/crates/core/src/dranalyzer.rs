//! The dynamical and restricted (DR) complex-balance condition.
//!
//! If the DR condition holds along `c(t)`, the higher-order monomials of
//! every linkage class that mixes higher- and lower-order complexes solve a
//! linear system `A x̃ = b` whose right-hand side is linear in `c`. `Aᵀ` is
//! weakly diagonally dominant, and it is invertible whenever every row that
//! is not strictly dominant has a walk to one that is. Substituting the
//! solution into the rate equations makes them linear, so `c(t)` has a
//! closed form built from one matrix exponential, and the DR residuals can
//! be checked along it directly.
//!
//! Verdicts are instance-level: they hold for the supplied rate constants
//! and initial condition, checked on a finite grid over `[0, T]`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::determ::{self, complex_fluxes, DetermError, OdeOptions, Trajectory};
use crate::network::{Complex, ReactionNetwork};

/// Condition number above which inverting a reduction matrix is flagged.
pub const CONDITION_WARNING: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DrError {
    #[error("linkage class {class}: no walk to a strictly dominant row from {complexes:?}")]
    SingularReduction {
        class: usize,
        /// Complexes whose rows cannot reach a strictly dominant row.
        complexes: Vec<String>,
    },
    #[error("linkage class {class}: reduction matrix is numerically singular")]
    NumericallySingular { class: usize },
    #[error("initial condition must be strictly positive (species {species} is {value})")]
    NonPositiveInitial { species: usize, value: f64 },
    #[error("initial condition has {found} entries, network has {expected} species")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("network has {0} species, expected exactly one")]
    NotOneSpecies(usize),
    #[error("network is of order {0}; the diffusion matrix needs a binary network")]
    NotBinary(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum ReductionCase {
    AllHigher,
    AllLow,
    Mixed,
}

/// `coeffs · c + constant`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearForm {
    pub coeffs: Vec<f64>,
    pub constant: f64,
}

impl LinearForm {
    fn zero(d: usize) -> Self {
        LinearForm {
            coeffs: vec![0.0; d],
            constant: 0.0,
        }
    }

    /// The monomial of a complex of order at most one.
    fn of_low_order(z: &Complex) -> Self {
        let mut form = LinearForm::zero(z.dim());
        match z.counts().iter().position(|&v| v > 0) {
            Some(i) => form.coeffs[i] = 1.0,
            None => form.constant = 1.0,
        }
        form
    }

    pub fn eval(&self, c: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().zip(c).map(|(a, x)| a * x).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkageReduction {
    pub class_id: usize,
    pub case: ReductionCase,
    /// Complex indices of the class.
    pub members: Vec<usize>,
    /// Complex indices of the higher-order members `z₁…z_m`.
    pub higher: Vec<usize>,
    /// `A_ii = Σ_j κ_{zᵢ→zⱼ}`, `A_ij = −κ_{zⱼ→zᵢ}`.
    pub matrix_a: DMatrix<f64>,
    /// `bᵢ = Σ_{j>m} κ_{zⱼ→zᵢ} c^{zⱼ}`.
    pub rhs_map: Vec<LinearForm>,
}

/// Per-class reductions, in linkage-class order.
pub fn build_reduction(net: &ReactionNetwork) -> Vec<LinkageReduction> {
    let d = net.dim();
    net.linkage_classes()
        .into_iter()
        .enumerate()
        .map(|(class_id, members)| {
            let higher: Vec<usize> = members
                .iter()
                .copied()
                .filter(|&i| net.complexes()[i].is_higher_order())
                .collect();
            let case = if higher.is_empty() {
                ReductionCase::AllLow
            } else if higher.len() == members.len() {
                ReductionCase::AllHigher
            } else {
                ReductionCase::Mixed
            };
            let m = higher.len();
            let row_of = |ci: usize| higher.iter().position(|&h| h == ci);
            let mut a = DMatrix::zeros(m, m);
            let mut b = vec![LinearForm::zero(d); m];
            for (r, &(s, p)) in net.reactions().iter().zip(net.edges()) {
                if let Some(i) = row_of(s) {
                    a[(i, i)] += r.rate;
                }
                if let Some(i) = row_of(p) {
                    match row_of(s) {
                        Some(j) => a[(i, j)] -= r.rate,
                        None => {
                            let form = LinearForm::of_low_order(&net.complexes()[s]);
                            for (acc, v) in b[i].coeffs.iter_mut().zip(&form.coeffs) {
                                *acc += r.rate * v;
                            }
                            b[i].constant += r.rate * form.constant;
                        }
                    }
                }
            }
            LinkageReduction {
                class_id,
                case,
                members,
                higher,
                matrix_a: a,
                rhs_map: b,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowWitness {
    pub row: usize,
    pub strictly_dominant: bool,
    /// Walk in the graph of `Aᵀ` to a strictly dominant row; `None` for
    /// strictly dominant rows and for unreachable ones.
    pub walk: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathCondition {
    pub holds: bool,
    pub rows: Vec<RowWitness>,
}

impl PathCondition {
    pub fn unreachable_rows(&self) -> Vec<usize> {
        self.rows
            .iter()
            .filter(|w| !w.strictly_dominant && w.walk.is_none())
            .map(|w| w.row)
            .collect()
    }
}

/// Walk condition on `Aᵀ`: every row that is not strictly diagonally
/// dominant reaches a strictly dominant row through nonzero off-diagonal
/// entries. Dominance margins within a few ulps of zero count as weak.
pub fn check_path_condition(a: &DMatrix<f64>) -> PathCondition {
    let at = a.transpose();
    let m = at.nrows();
    let sdd: Vec<bool> = (0..m)
        .map(|i| {
            let diag = at[(i, i)].abs();
            let off: f64 = (0..m).filter(|&j| j != i).map(|j| at[(i, j)].abs()).sum();
            diag - off > 64.0 * f64::EPSILON * diag.max(off)
        })
        .collect();
    let rows: Vec<RowWitness> = (0..m)
        .map(|start| {
            if sdd[start] {
                return RowWitness {
                    row: start,
                    strictly_dominant: true,
                    walk: None,
                };
            }
            RowWitness {
                row: start,
                strictly_dominant: false,
                walk: shortest_walk(&at, start, &sdd),
            }
        })
        .collect();
    PathCondition {
        holds: rows.iter().all(|w| w.strictly_dominant || w.walk.is_some()),
        rows,
    }
}

fn shortest_walk(at: &DMatrix<f64>, start: usize, target: &[bool]) -> Option<Vec<usize>> {
    let m = at.nrows();
    let mut parent: Vec<Option<usize>> = vec![None; m];
    let mut seen = vec![false; m];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(i) = queue.pop_front() {
        if target[i] {
            let mut walk = vec![i];
            let mut cur = i;
            while let Some(p) = parent[cur] {
                walk.push(p);
                cur = p;
            }
            walk.reverse();
            return Some(walk);
        }
        for j in 0..m {
            if j != i && at[(i, j)] != 0.0 && !seen[j] {
                seen[j] = true;
                parent[j] = Some(i);
                queue.push_back(j);
            }
        }
    }
    None
}

/// `ċ = M c + r`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub m: DMatrix<f64>,
    pub r: DVector<f64>,
    /// Linear expressions substituted for higher-order monomials, keyed by
    /// complex index.
    pub substitutions: Vec<(usize, LinearForm)>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearSystemJson {
    #[serde(rename = "M")]
    pub m: Vec<Vec<f64>>,
    pub r: Vec<f64>,
}

impl LinearSystem {
    pub fn dim(&self) -> usize {
        self.r.len()
    }

    pub fn to_json(&self) -> LinearSystemJson {
        LinearSystemJson {
            m: (0..self.m.nrows())
                .map(|i| self.m.row(i).iter().copied().collect())
                .collect(),
            r: self.r.iter().copied().collect(),
        }
    }

    pub fn rhs(&self, c: &[f64]) -> Vec<f64> {
        (&self.m * DVector::from_column_slice(c) + &self.r)
            .iter()
            .copied()
            .collect()
    }
}

/// Linearizes the rate equations under the DR assumption: classes with only
/// higher-order complexes drop out, classes with only lower-order complexes
/// are already linear, and mixed classes substitute `x̃ = A⁻¹ b`.
pub fn linear_reduction(net: &ReactionNetwork) -> Result<LinearSystem, DrError> {
    let d = net.dim();
    let mut sub: Vec<Option<LinearForm>> = vec![None; net.complexes().len()];
    let mut dropped = vec![false; net.complexes().len()];
    let mut warnings = Vec::new();
    for red in build_reduction(net) {
        match red.case {
            ReductionCase::AllLow => {}
            ReductionCase::AllHigher => red.members.iter().for_each(|&i| dropped[i] = true),
            ReductionCase::Mixed => {
                let path = check_path_condition(&red.matrix_a);
                if !path.holds {
                    return Err(DrError::SingularReduction {
                        class: red.class_id,
                        complexes: path
                            .unreachable_rows()
                            .into_iter()
                            .map(|row| net.format_complex(&net.complexes()[red.higher[row]]))
                            .collect(),
                    });
                }
                let m = red.higher.len();
                let mut rhs = DMatrix::zeros(m, d + 1);
                for (i, form) in red.rhs_map.iter().enumerate() {
                    for (j, v) in form.coeffs.iter().enumerate() {
                        rhs[(i, j)] = *v;
                    }
                    rhs[(i, d)] = form.constant;
                }
                let lu = red.matrix_a.clone().lu();
                let solved = lu
                    .solve(&rhs)
                    .ok_or(DrError::NumericallySingular { class: red.class_id })?;
                if let Some(inv) = red.matrix_a.clone().try_inverse() {
                    let cond = norm1(&red.matrix_a) * norm1(&inv);
                    if cond > CONDITION_WARNING {
                        warnings.push(format!(
                            "linkage class {}: reduction matrix condition number {cond:.3e}",
                            red.class_id
                        ));
                    }
                }
                for (row, &ci) in red.higher.iter().enumerate() {
                    sub[ci] = Some(LinearForm {
                        coeffs: (0..d).map(|j| solved[(row, j)]).collect(),
                        constant: solved[(row, d)],
                    });
                }
            }
        }
    }

    let mut m = DMatrix::zeros(d, d);
    let mut r = DVector::zeros(d);
    for (reaction, &(s, _)) in net.reactions().iter().zip(net.edges()) {
        if dropped[s] {
            continue;
        }
        let source = &net.complexes()[s];
        let form = if source.is_higher_order() {
            sub[s].clone().expect("mixed class substitution")
        } else {
            LinearForm::of_low_order(source)
        };
        for (i, &z) in reaction.reaction_vector().iter().enumerate() {
            if z == 0 {
                continue;
            }
            let w = reaction.rate * z as f64;
            for (j, a) in form.coeffs.iter().enumerate() {
                m[(i, j)] += w * a;
            }
            r[i] += w * form.constant;
        }
    }
    let substitutions = sub
        .into_iter()
        .enumerate()
        .filter_map(|(i, f)| f.map(|f| (i, f)))
        .collect();
    Ok(LinearSystem {
        m,
        r,
        substitutions,
        warnings,
    })
}

fn norm1(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Exact solution `c(t) = e^{Mt}c₀ + ∫₀ᵗ e^{M(t−s)} r ds`, read off the
/// exponential of the augmented matrix `[[M, r], [0, 0]]`.
pub fn solve_linear(sys: &LinearSystem, c0: &[f64], grid: &[f64]) -> Trajectory {
    let d = sys.dim();
    let mut aug = DMatrix::zeros(d + 1, d + 1);
    aug.view_mut((0, 0), (d, d)).copy_from(&sys.m);
    aug.view_mut((0, d), (d, 1)).copy_from(&sys.r);
    let mut x0 = DVector::zeros(d + 1);
    x0.rows_mut(0, d).copy_from_slice(c0);
    x0[d] = 1.0;
    let states = grid
        .iter()
        .map(|&t| {
            let x = (&aug * t).exp() * &x0;
            x.rows(0, d).iter().copied().collect()
        })
        .collect();
    Trajectory {
        grid: grid.to_vec(),
        states,
        warnings: vec![],
    }
}

/// Complexes of order at least two, in network order.
pub fn higher_order_complexes(net: &ReactionNetwork) -> Vec<Complex> {
    net.complexes()
        .iter()
        .filter(|z| z.is_higher_order())
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum Verdict {
    Holds,
    Fails,
    ConstantSolution,
}

impl Verdict {
    /// Holds or constant: the law stays a product of Poissons.
    pub fn is_product_form(self) -> bool {
        matches!(self, Verdict::Holds | Verdict::ConstantSolution)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DrOptions {
    pub horizon: f64,
    pub grid_points: usize,
    /// Relative tolerance on the DR residuals.
    pub tolerance: f64,
    pub ode: OdeOptions,
}

impl Default for DrOptions {
    fn default() -> Self {
        DrOptions {
            horizon: 10.0,
            grid_points: 201,
            tolerance: 1e-9,
            ode: OdeOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ComplexResidual {
    pub complex: String,
    pub index: usize,
    pub max_residual: f64,
    /// Outflow minus inflow at each grid point.
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DrReport {
    pub verdict: Verdict,
    pub max_residual: f64,
    /// `tolerance · (1 + largest complex flux)`.
    pub threshold: f64,
    pub tolerance: f64,
    pub horizon: f64,
    pub residual_grid: Vec<ComplexResidual>,
    pub failing_complexes: Vec<String>,
    pub linear_system: Option<LinearSystem>,
    /// `c(t)` on the grid: the linear solution when the reduction exists,
    /// otherwise the RK4 solution.
    pub trajectory: Option<Trajectory>,
    /// Largest `‖c_lin − c_ode‖∞ / (1 + ‖c_ode‖∞)` over the grid.
    pub ode_deviation: Option<f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DrReportJson<'a> {
    pub verdict: Verdict,
    pub max_residual: f64,
    pub threshold: f64,
    pub horizon: f64,
    pub per_complex: &'a [ComplexResidual],
    pub failing_complexes: &'a [String],
    pub linear_system: Option<LinearSystemJson>,
    pub ode_deviation: Option<f64>,
    pub notes: &'a [String],
}

impl DrReport {
    pub fn to_json(&self) -> DrReportJson<'_> {
        DrReportJson {
            verdict: self.verdict,
            max_residual: self.max_residual,
            threshold: self.threshold,
            horizon: self.horizon,
            per_complex: &self.residual_grid,
            failing_complexes: &self.failing_complexes,
            linear_system: self.linear_system.as_ref().map(LinearSystem::to_json),
            ode_deviation: self.ode_deviation,
            notes: &self.notes,
        }
    }
}

struct ResidualProfile {
    per_complex: Vec<ComplexResidual>,
    max_residual: f64,
    max_flux: f64,
}

/// DR residuals of every higher-order complex along a trajectory.
fn residual_profile(net: &ReactionNetwork, traj: &Trajectory) -> ResidualProfile {
    let higher: Vec<usize> = (0..net.complexes().len())
        .filter(|&i| net.complexes()[i].is_higher_order())
        .collect();
    let mut per_complex: Vec<ComplexResidual> = higher
        .iter()
        .map(|&i| ComplexResidual {
            complex: net.format_complex(&net.complexes()[i]),
            index: i,
            max_residual: 0.0,
            residuals: Vec::with_capacity(traj.len()),
        })
        .collect();
    let mut max_flux: f64 = 0.0;
    for state in &traj.states {
        let fluxes = complex_fluxes(net, state);
        for (slot, &i) in per_complex.iter_mut().zip(&higher) {
            let (out, inn) = fluxes[i];
            max_flux = max_flux.max(out.abs()).max(inn.abs());
            let res = out - inn;
            slot.max_residual = slot.max_residual.max(res.abs());
            slot.residuals.push(res);
        }
    }
    let max_residual = per_complex.iter().map(|c| c.max_residual).fold(0.0, f64::max);
    ResidualProfile {
        per_complex,
        max_residual,
        max_flux,
    }
}

/// Decides the DR condition for `(net, c0)` on `[0, T]`.
pub fn verify_dr(
    net: &ReactionNetwork,
    c0: &[f64],
    opts: &DrOptions,
) -> Result<DrReport, DrError> {
    if c0.len() != net.dim() {
        return Err(DrError::DimensionMismatch {
            expected: net.dim(),
            found: c0.len(),
        });
    }
    if let Some((species, &value)) = c0.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(DrError::NonPositiveInitial { species, value });
    }
    let tol = opts.tolerance;
    let grid = determ::uniform_grid(opts.horizon, opts.grid_points.max(2));
    let mut notes = vec![format!(
        "instance-level verdict for the given rate constants and initial condition, \
         checked at {} grid points on [0, {}]",
        grid.len(),
        opts.horizon
    )];

    let fluxes = complex_fluxes(net, c0);
    let flux_scale = fluxes.iter().fold(0.0f64, |m, (o, i)| m.max(o.abs()).max(i.abs()));
    let balance = determ::is_complex_balanced_at(net, c0, tol * (1.0 + flux_scale));
    if balance.balanced {
        notes.push("initial condition is a complex-balanced equilibrium".to_string());
        let traj = Trajectory {
            grid: grid.clone(),
            states: vec![c0.to_vec(); grid.len()],
            warnings: vec![],
        };
        let profile = residual_profile(net, &traj);
        return Ok(DrReport {
            verdict: Verdict::ConstantSolution,
            max_residual: profile.max_residual,
            threshold: tol * (1.0 + profile.max_flux),
            tolerance: tol,
            horizon: opts.horizon,
            residual_grid: profile.per_complex,
            failing_complexes: vec![],
            linear_system: linear_reduction(net).ok(),
            trajectory: Some(traj),
            ode_deviation: None,
            notes,
        });
    }

    let ode = determ::integrate_on_grid(net, c0, &grid, opts.ode);
    let sys = match linear_reduction(net) {
        Ok(sys) => sys,
        Err(err) => {
            let mut failing = match &err {
                DrError::SingularReduction { complexes, .. } => complexes.clone(),
                _ => vec![],
            };
            notes.push(format!("linear reduction unavailable: {err}"));
            notes.push(
                "residuals below are evaluated along the RK4 solution of the full rate equations"
                    .to_string(),
            );
            let (profile, trajectory) = match ode {
                Ok(traj) => (Some(residual_profile(net, &traj)), Some(traj)),
                Err(e) => {
                    notes.push(format!("nonlinear fallback failed: {e}"));
                    (None, None)
                }
            };
            let (per_complex, max_residual, threshold) = match profile {
                Some(p) => {
                    let threshold = tol * (1.0 + p.max_flux);
                    // RK4 error alone can exceed the threshold, so residuals
                    // only name offenders when the reduction could not
                    if failing.is_empty() {
                        failing.extend(
                            p.per_complex
                                .iter()
                                .filter(|c| c.max_residual > threshold)
                                .map(|c| c.complex.clone()),
                        );
                    }
                    (p.per_complex, p.max_residual, threshold)
                }
                None => (vec![], f64::NAN, f64::NAN),
            };
            return Ok(DrReport {
                verdict: Verdict::Fails,
                max_residual,
                threshold,
                tolerance: tol,
                horizon: opts.horizon,
                residual_grid: per_complex,
                failing_complexes: failing,
                linear_system: None,
                trajectory,
                ode_deviation: None,
                notes,
            });
        }
    };
    notes.extend(sys.warnings.iter().cloned());

    let linear = solve_linear(&sys, c0, &grid);
    let profile = residual_profile(net, &linear);
    let threshold = tol * (1.0 + profile.max_flux);
    let failing: Vec<String> = profile
        .per_complex
        .iter()
        .filter(|c| c.max_residual > threshold)
        .map(|c| c.complex.clone())
        .collect();
    let verdict = if failing.is_empty() {
        Verdict::Holds
    } else {
        Verdict::Fails
    };

    let ode_deviation = match &ode {
        Ok(traj) => Some(max_relative_deviation(&linear, traj)),
        Err(e) => {
            notes.push(format!("RK4 cross-check unavailable: {e}"));
            None
        }
    };
    if verdict == Verdict::Holds {
        if let Some(dev) = ode_deviation {
            if dev > 1e-6 {
                notes.push(format!(
                    "linear solution deviates from the RK4 solution by {dev:.3e}"
                ));
            }
        }
    }
    Ok(DrReport {
        verdict,
        max_residual: profile.max_residual,
        threshold,
        tolerance: tol,
        horizon: opts.horizon,
        residual_grid: profile.per_complex,
        failing_complexes: failing,
        linear_system: Some(sys),
        trajectory: Some(linear),
        ode_deviation,
        notes,
    })
}

fn max_relative_deviation(a: &Trajectory, b: &Trajectory) -> f64 {
    a.states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| {
            let scale = 1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            x.iter().zip(y).fold(0.0f64, |m, (u, v)| m.max((u - v).abs())) / scale
        })
        .fold(0.0, f64::max)
}

/// DR flux residuals along the RK4 solution of the full rate equations.
pub fn nonlinear_residuals(
    net: &ReactionNetwork,
    c0: &[f64],
    opts: &DrOptions,
) -> Result<(Trajectory, Vec<ComplexResidual>), DetermError> {
    let grid = determ::uniform_grid(opts.horizon, opts.grid_points.max(2));
    let traj = determ::integrate_on_grid(net, c0, &grid, opts.ode)?;
    let profile = residual_profile(net, &traj);
    Ok((traj, profile.per_complex))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum OneSpeciesDecision {
    /// First order, so `C ⊆ {∅, X}`.
    NontrivialPossible,
    OnlyConstantSolutions,
}

/// One-species networks admit a non-constant DR solution exactly when they
/// are of first order.
pub fn one_species_dr(net: &ReactionNetwork) -> Result<OneSpeciesDecision, DrError> {
    if net.dim() != 1 {
        return Err(DrError::NotOneSpecies(net.dim()));
    }
    Ok(if net.order() <= 1 {
        OneSpeciesDecision::NontrivialPossible
    } else {
        OneSpeciesDecision::OnlyConstantSolutions
    })
}

/// `Aᵢ(u) = Σ_k κ_k u^{y_k} ζ_{ki}`.
pub fn drift_vector(net: &ReactionNetwork, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; net.dim()];
    for r in net.reactions() {
        let flux = r.rate * r.source.monomial(u);
        for (o, z) in out.iter_mut().zip(r.reaction_vector()) {
            *o += flux * z as f64;
        }
    }
    out
}

/// `B_ij(u) = Σ_k κ_k u^{y_k} (y′_{ki}y′_{kj} − y_{ki}y_{kj} − δ_ij ζ_{ki})`.
pub fn diffusion_matrix(net: &ReactionNetwork, u: &[f64]) -> Result<DMatrix<f64>, DrError> {
    if !net.is_binary() {
        return Err(DrError::NotBinary(net.order()));
    }
    let d = net.dim();
    let mut b = DMatrix::zeros(d, d);
    for r in net.reactions() {
        let flux = r.rate * r.source.monomial(u);
        if flux == 0.0 {
            continue;
        }
        let y = r.source.counts();
        let yp = r.product.counts();
        for i in 0..d {
            for j in 0..d {
                let mut v = f64::from(yp[i] * yp[j]) - f64::from(y[i] * y[j]);
                if i == j {
                    v -= f64::from(yp[i]) - f64::from(y[i]);
                }
                b[(i, j)] += flux * v;
            }
        }
    }
    Ok(b)
}

/// Largest `‖B(c(t))‖_∞` (max absolute entry) along a trajectory.
pub fn max_diffusion_along(net: &ReactionNetwork, traj: &Trajectory) -> Result<f64, DrError> {
    let mut worst: f64 = 0.0;
    for state in &traj.states {
        let b = diffusion_matrix(net, state)?;
        worst = worst.max(b.amax());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Reaction;

    fn c(v: &[u32]) -> Complex {
        Complex::new(v.to_vec())
    }

    fn ex22(k: [f64; 6]) -> ReactionNetwork {
        ReactionNetwork::new(
            vec!["X".into(), "Y".into()],
            vec![
                Reaction::new(c(&[2, 0]), c(&[0, 2]), k[0]),
                Reaction::new(c(&[0, 2]), c(&[2, 0]), k[1]),
                Reaction::new(c(&[0, 0]), c(&[1, 0]), k[2]),
                Reaction::new(c(&[1, 0]), c(&[0, 0]), k[3]),
                Reaction::new(c(&[0, 0]), c(&[0, 1]), k[4]),
                Reaction::new(c(&[0, 1]), c(&[0, 0]), k[5]),
            ],
        )
        .unwrap()
    }

    fn ex45(k: [f64; 6]) -> ReactionNetwork {
        ReactionNetwork::new(
            vec!["X".into(), "Y".into()],
            vec![
                Reaction::new(c(&[1, 0]), c(&[2, 1]), k[0]),
                Reaction::new(c(&[2, 1]), c(&[1, 0]), k[1]),
                Reaction::new(c(&[2, 1]), c(&[1, 2]), k[2]),
                Reaction::new(c(&[1, 2]), c(&[2, 1]), k[3]),
                Reaction::new(c(&[1, 2]), c(&[0, 1]), k[4]),
                Reaction::new(c(&[0, 1]), c(&[1, 2]), k[5]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn higher_order_complexes_of_examples() {
        let net = ex22([1.0; 6]);
        let names: Vec<String> = higher_order_complexes(&net)
            .iter()
            .map(|z| net.format_complex(z))
            .collect();
        assert_eq!(names, vec!["2X", "2Y"]);
        let net = ex45([1.0; 6]);
        let names: Vec<String> = higher_order_complexes(&net)
            .iter()
            .map(|z| net.format_complex(z))
            .collect();
        assert_eq!(names, vec!["2X+Y", "X+2Y"]);
        let bd = ReactionNetwork::new(
            vec!["X".into()],
            vec![Reaction::new(c(&[0]), c(&[1]), 1.0)],
        )
        .unwrap();
        assert!(higher_order_complexes(&bd).is_empty());
    }

    #[test]
    fn reduction_matrix_for_two_higher_complexes() {
        let k = [1.5, 2.0, 3.0, 0.7, 1.1, 0.4];
        let red = build_reduction(&ex45(k));
        assert_eq!(red.len(), 1);
        let r = &red[0];
        assert_eq!(r.case, ReductionCase::Mixed);
        let expected = DMatrix::from_row_slice(2, 2, &[k[1] + k[2], -k[3], -k[2], k[3] + k[4]]);
        assert_eq!(r.matrix_a, expected);
        assert_eq!(r.rhs_map[0].coeffs, vec![k[0], 0.0]);
        assert_eq!(r.rhs_map[1].coeffs, vec![0.0, k[5]]);
    }

    #[test]
    fn column_sums_equal_exit_rates() {
        let k = [1.5, 2.0, 3.0, 0.7, 1.1, 0.4];
        let a = &build_reduction(&ex45(k))[0].matrix_a;
        let at = a.transpose();
        // 2X+Y exits to X at κ2, X+2Y exits to Y at κ5
        assert_eq!(at.row(0).sum(), k[1]);
        assert_eq!(at.row(1).sum(), k[4]);
    }

    #[test]
    fn all_low_class_has_no_matrix() {
        let red = build_reduction(&ex22([1.0; 6]));
        assert_eq!(red[0].case, ReductionCase::AllHigher);
        assert_eq!(red[1].case, ReductionCase::AllLow);
        assert_eq!(red[1].matrix_a.nrows(), 0);
    }

    #[test]
    fn path_condition_cases() {
        let k = [1.5, 2.0, 3.0, 0.7, 1.1, 0.4];
        let p = check_path_condition(&build_reduction(&ex45(k))[0].matrix_a);
        assert!(p.holds);
        assert!(p.rows.iter().all(|w| w.strictly_dominant));

        let p = check_path_condition(&DMatrix::from_row_slice(1, 1, &[1.0]));
        assert!(p.holds);

        let p = check_path_condition(&DMatrix::from_row_slice(1, 1, &[0.0]));
        assert!(!p.holds);
        assert_eq!(p.unreachable_rows(), vec![0]);

        // higher-order 2-cycle without an exit
        let p = check_path_condition(&DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        assert!(!p.holds);
        assert_eq!(p.unreachable_rows(), vec![0, 1]);

        // row 0 of Aᵀ is weak but reaches row 1
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, -2.0, 2.0]);
        let p = check_path_condition(&a);
        assert!(p.holds);
        assert_eq!(p.rows[0].walk, Some(vec![0, 1]));
    }

    #[test]
    fn reduction_decouples_two_dimer_network() {
        let k = [4.0, 1.0, 1.0, 0.5, 2.0, 0.5];
        let sys = linear_reduction(&ex22(k)).unwrap();
        assert_eq!(sys.m, DMatrix::from_row_slice(2, 2, &[-0.5, 0.0, 0.0, -0.5]));
        assert_eq!(sys.r, DVector::from_column_slice(&[1.0, 2.0]));
    }

    #[test]
    fn reduced_system_matches_closed_form_coefficients() {
        let k = [1.5, 2.0, 3.0, 0.7, 1.1, 0.4];
        let sys = linear_reduction(&ex45(k)).unwrap();
        let g = 1.0 / ((k[1] + k[2]) * (k[3] + k[4]) - k[2] * k[3]);
        let a = g * k[0] * k[2] * k[4];
        let b = g * k[1] * k[3] * k[5];
        let expected = DMatrix::from_row_slice(2, 2, &[-a, b, a, -b]);
        assert!((sys.m - expected).amax() < 1e-13);
        assert!(sys.r.amax() < 1e-15);
    }

    #[test]
    fn solve_linear_closed_form() {
        let sys = linear_reduction(&ex22([4.0, 1.0, 1.0, 0.5, 2.0, 0.5])).unwrap();
        let grid = [0.0, 0.5, 2.0, 7.0];
        let traj = solve_linear(&sys, &[1.0, 2.0], &grid);
        for (t, s) in grid.iter().zip(&traj.states) {
            let e = (-t / 2.0).exp();
            assert!((s[0] - (2.0 - e)).abs() < 1e-13);
            assert!((s[1] - (4.0 - 2.0 * e)).abs() < 1e-13);
        }
        let zero = LinearSystem {
            m: DMatrix::zeros(2, 2),
            r: DVector::zeros(2),
            substitutions: vec![],
            warnings: vec![],
        };
        let traj = solve_linear(&zero, &[3.0, 4.0], &grid);
        assert!(traj.states.iter().all(|s| s == &vec![3.0, 4.0]));
    }

    #[test]
    fn verify_dr_verdicts() {
        let opts = DrOptions::default();
        let rep = verify_dr(&ex22([4.0, 1.0, 1.0, 0.5, 2.0, 0.5]), &[1.0, 2.0], &opts).unwrap();
        assert_eq!(rep.verdict, Verdict::Holds, "{:?}", rep.notes);
        assert!(rep.ode_deviation.unwrap() < 1e-9);

        let rep = verify_dr(&ex22([4.0, 1.0, 1.0, 0.5, 2.0, 0.5]), &[2.0, 4.0], &opts).unwrap();
        assert_eq!(rep.verdict, Verdict::ConstantSolution);

        // κ4 ≠ κ6
        let rep = verify_dr(&ex22([4.0, 1.0, 1.0, 0.5, 2.0, 0.7]), &[1.0, 2.0], &opts).unwrap();
        assert_eq!(rep.verdict, Verdict::Fails);
        assert_eq!(rep.failing_complexes, vec!["2X", "2Y"]);
    }

    #[test]
    fn non_positive_initial_is_rejected() {
        let err = verify_dr(&ex22([1.0; 6]), &[1.0, 0.0], &DrOptions::default()).unwrap_err();
        assert_eq!(err, DrError::NonPositiveInitial { species: 1, value: 0.0 });
    }

    #[test]
    fn one_species_decisions() {
        let net = |rs: &[(u32, u32)]| {
            ReactionNetwork::new(
                vec!["X".into()],
                rs.iter()
                    .map(|&(s, p)| Reaction::new(c(&[s]), c(&[p]), 1.0))
                    .collect(),
            )
            .unwrap()
        };
        assert_eq!(
            one_species_dr(&net(&[(0, 1), (1, 0)])).unwrap(),
            OneSpeciesDecision::NontrivialPossible
        );
        assert_eq!(
            one_species_dr(&net(&[(1, 2), (2, 1)])).unwrap(),
            OneSpeciesDecision::OnlyConstantSolutions
        );
        assert_eq!(
            one_species_dr(&net(&[(0, 1), (1, 2), (2, 0)])).unwrap(),
            OneSpeciesDecision::OnlyConstantSolutions
        );
        assert_eq!(
            one_species_dr(&ex22([1.0; 6])).unwrap_err(),
            DrError::NotOneSpecies(2)
        );
    }

    #[test]
    fn diffusion_matrix_of_dimer_exchange() {
        let k = [4.0, 1.0, 1.0, 0.5, 2.0, 0.5];
        let u = [1.3, 0.4];
        let b = diffusion_matrix(&ex22(k), &u).unwrap();
        let v = 2.0 * k[1] * u[1] * u[1] - 2.0 * k[0] * u[0] * u[0];
        assert!((b[(0, 0)] - v).abs() < 1e-14);
        assert!((b[(1, 1)] + v).abs() < 1e-14);
        assert_eq!(b[(0, 1)], 0.0);
        assert_eq!(b[(1, 0)], 0.0);
    }

    #[test]
    fn diffusion_vanishes_for_first_order() {
        let bd = ReactionNetwork::new(
            vec!["X".into(), "Y".into()],
            vec![
                Reaction::new(c(&[0, 0]), c(&[1, 0]), 2.0),
                Reaction::new(c(&[1, 0]), c(&[0, 1]), 1.0),
                Reaction::new(c(&[0, 1]), c(&[0, 0]), 3.0),
            ],
        )
        .unwrap();
        let b = diffusion_matrix(&bd, &[0.3, 7.0]).unwrap();
        assert_eq!(b.amax(), 0.0);
        assert_eq!(diffusion_matrix(&ex45([1.0; 6]), &[1.0, 1.0]).unwrap_err(), DrError::NotBinary(3));
    }

    #[test]
    fn drift_equals_rate_equations() {
        let net = ex45([1.5, 2.0, 3.0, 0.7, 1.1, 0.4]);
        for u in [[0.1, 2.0], [3.0, 0.5]] {
            let a = drift_vector(&net, &u);
            let f = determ::mass_action_rhs(&net, &u);
            for (x, y) in a.iter().zip(&f) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
