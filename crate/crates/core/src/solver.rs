//! Nonnegative steady states by linearly implicit pseudo-time marching,
//! optional Newton polishing, and warm-started continuation in `β`.
//!
//! Each step solves, for every group `i`,
//!
//! ```text
//! (1/τ − d_i Δ_h + ω_i + β Σ_{j≠i} a_ij w_j) w_i⁺ = (1/τ + k_i u) w_i
//! (1/τ − D Δ_h + μ u + Σ_i k_i w_i)       u⁺   = (1/τ + λ) u
//! ```
//!
//! with every coefficient frozen at the old state. Every operator is an
//! M-matrix and every right-hand side is nonnegative, so the new state is
//! nonnegative for any `τ` and any `β`.

use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::grid::{laplacian_into, Grid, ScalarField};
use crate::linalg::{Banded, LinalgError};
use crate::model::{competition_pressure, reaction_u, reaction_w_unchecked, ModelError, ModelParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("linear solve for component {component} missed tolerance (backward error {worst_residual:e})")]
    LinearSolve { component: usize, worst_residual: f64 },
    #[error("blow-up suspected at step {step}: sup norm {sup_norm:e} exceeds {limit:e}")]
    BlowUp { step: usize, sup_norm: f64, limit: f64 },
    #[error("singular Jacobian at Newton iterate {iteration}")]
    SingularJacobian { iteration: usize },
    #[error("stagnation: residual did not decrease after 30 halvings at Newton iterate {iteration}")]
    Stagnation { iteration: usize },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid beta schedule: {0}")]
    Schedule(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Prey density `u` and predator densities `w_1 … w_N` on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSet {
    pub u: ScalarField,
    pub w: Vec<ScalarField>,
    /// Fingerprint of the parameters that produced this state (0 if none).
    pub params_hash: u64,
}

impl FieldSet {
    pub fn new(u: ScalarField, w: Vec<ScalarField>, params_hash: u64) -> Result<Self, SolveError> {
        if w.iter().any(|f| f.grid != u.grid) {
            return Err(SolveError::InvalidState("components live on different grids".into()));
        }
        Ok(Self { u, w, params_hash })
    }

    pub fn zeros(grid: Grid, n: usize) -> Self {
        Self { u: ScalarField::zeros(grid), w: vec![ScalarField::zeros(grid); n], params_hash: 0 }
    }

    pub fn constant(grid: Grid, u: f64, w: &[f64]) -> Self {
        Self {
            u: ScalarField::constant(grid, u),
            w: w.iter().map(|&c| ScalarField::constant(grid, c)).collect(),
            params_hash: 0,
        }
    }

    pub fn grid(&self) -> Grid {
        self.u.grid
    }

    pub fn n_groups(&self) -> usize {
        self.w.len()
    }

    pub fn min_value(&self) -> f64 {
        self.w.iter().map(ScalarField::min).fold(self.u.min(), f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.w.iter().map(ScalarField::sup_norm).fold(self.u.sup_norm(), f64::max)
    }

    /// `sup |self − other|` over all components.
    pub fn distance(&self, other: &FieldSet) -> f64 {
        let d = |a: &ScalarField, b: &ScalarField| {
            a.values.iter().zip(&b.values).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        };
        self.w.iter().zip(&other.w).fold(d(&self.u, &other.u), |m, (a, b)| m.max(d(a, b)))
    }

    /// Reorders the groups: component `i` of the result is component
    /// `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            u: self.u.clone(),
            w: perm.iter().map(|&p| self.w[p].clone()).collect(),
            params_hash: self.params_hash,
        }
    }

    fn check_against(&self, params: &ModelParams) -> Result<(), SolveError> {
        params.check_structure()?;
        if self.w.len() != params.n_groups() {
            return Err(SolveError::InvalidState(format!(
                "state has {} groups, parameters have {}",
                self.w.len(),
                params.n_groups()
            )));
        }
        let n = self.grid().len();
        if self.u.values.len() != n || self.w.iter().any(|f| f.values.len() != n || f.grid != self.u.grid) {
            return Err(SolveError::InvalidState("component length does not match the grid".into()));
        }
        if !(self.min_value() >= 0.0) {
            return Err(SolveError::InvalidState("state has negative or non-finite values".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveSettings {
    /// Pseudo-time step.
    pub tau: f64,
    /// Sup-norm tolerance on the stationary residual.
    pub tol_residual: f64,
    /// Tolerance on `‖state change‖_sup / τ`.
    pub tol_update: f64,
    pub max_steps: usize,
    /// Polish marched states with damped Newton.
    pub newton: bool,
    /// Normwise backward-error tolerance for inner linear solves.
    pub linear_tol: f64,
}

impl Default for SolveSettings {
    fn default() -> Self {
        Self { tau: 1.0, tol_residual: 1e-8, tol_update: 1e-10, max_steps: 200_000, newton: false, linear_tol: 1e-10 }
    }
}

impl SolveSettings {
    pub fn validate(&self) -> Result<(), SolveError> {
        let pos = [self.tau, self.tol_residual, self.tol_update, self.linear_tol];
        if pos.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.max_steps == 0 {
            return Err(SolveError::InvalidState(format!("invalid solve settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub state: FieldSet,
    pub residual_sup: f64,
    /// Marching steps, or Newton iterations for a pure Newton report.
    pub steps_taken: usize,
    pub newton_iterations: usize,
    pub converged: bool,
    /// Newton had to clip negative entries of some iterate.
    pub projected: bool,
    /// Seconds.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationTrace {
    pub betas: Vec<f64>,
    pub reports: Vec<SolveReport>,
    pub provenance: String,
    /// Parameters of the run; `competition` holds the first β.
    pub params: ModelParams,
}

impl ContinuationTrace {
    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn params_at(&self, idx: usize) -> ModelParams {
        self.params.with_competition(self.betas[idx])
    }
}

/// Default backward-error tolerance of [`imex_step`].
pub const DEFAULT_LINEAR_TOL: f64 = 1e-10;

/// One linearly implicit step of size `tau`.
pub fn imex_step(state: &FieldSet, params: &ModelParams, tau: f64) -> Result<FieldSet, SolveError> {
    state.check_against(params)?;
    step(state, params, tau, DEFAULT_LINEAR_TOL)
}

fn step(state: &FieldSet, params: &ModelParams, tau: f64, linear_tol: f64) -> Result<FieldSet, SolveError> {
    let grid = state.grid();
    let n = params.n_groups();
    let nodes = grid.len();
    let inv_tau = 1.0 / tau;
    let weights = grid.weights();
    let u = &state.u.values;

    let mut w_new = Vec::with_capacity(n);
    let mut local = vec![0.0; n];
    for i in 0..n {
        let mut diag = vec![0.0; nodes];
        let mut rhs = vec![0.0; nodes];
        for p in 0..nodes {
            for (j, f) in state.w.iter().enumerate() {
                local[j] = f.values[p];
            }
            diag[p] = inv_tau + params.mortality[i] + params.competition * competition_pressure(i, &local, params);
            rhs[p] = weights[p] * (inv_tau + params.conversion[i] * u[p]) * local[i];
        }
        let x = implicit_solve(&grid, &diag, params.diffusion[i], rhs, linear_tol, i)?;
        w_new.push(ScalarField { grid, values: x });
    }

    let mut diag = vec![0.0; nodes];
    let mut rhs = vec![0.0; nodes];
    for p in 0..nodes {
        let consumption: f64 = state.w.iter().zip(&params.conversion).map(|(f, k)| k * f.values[p]).sum();
        diag[p] = inv_tau + params.prey_limitation * u[p] + consumption;
        rhs[p] = weights[p] * (inv_tau + params.prey_growth) * u[p];
    }
    let x = implicit_solve(&grid, &diag, params.prey_diffusion, rhs, linear_tol, n)?;
    let next = FieldSet { u: ScalarField { grid, values: x }, w: w_new, params_hash: params.fingerprint() };
    if !(next.min_value() >= 0.0) {
        return Err(SolveError::InvalidState("implicit step produced a negative or non-finite value".into()));
    }
    Ok(next)
}

/// Solves `(diag − coeff Δ_h) x = W⁻¹ rhs` through its weighted symmetric
/// form and checks the normwise backward error.
fn implicit_solve(
    grid: &Grid,
    diag: &[f64],
    coeff: f64,
    rhs: Vec<f64>,
    linear_tol: f64,
    component: usize,
) -> Result<Vec<f64>, SolveError> {
    let op = grid.implicit_operator(diag, coeff);
    let chol = op.clone().cholesky().map_err(|e| match e {
        LinalgError::NotPositiveDefinite { pivot, .. } => SolveError::LinearSolve { component, worst_residual: pivot.abs() },
        LinalgError::Singular(_) => SolveError::LinearSolve { component, worst_residual: f64::INFINITY },
    })?;
    let mut x = rhs.clone();
    chol.solve_in_place(&mut x);
    let mut ax = vec![0.0; x.len()];
    op.matvec(&x, &mut ax);
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let resid = ax.iter().zip(&rhs).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    // ‖A‖_∞ bound from the row sums of |A|: diagonal plus twice the edge
    // conductances already included in it.
    let norm_a = (0..op.dim()).map(|p| 2.0 * op.get(p, p)).fold(0.0, f64::max);
    let scale = norm_a * sup(&x) + sup(&rhs);
    // Subnormal entries carry no relative precision; the floor keeps them
    // from failing the check and they are flushed to zero below.
    if !resid.is_finite() || resid > linear_tol * scale + norm_a * f64::MIN_POSITIVE {
        let worst = if scale > 0.0 { resid / scale } else { resid };
        return Err(SolveError::LinearSolve { component, worst_residual: worst });
    }
    for v in x.iter_mut().filter(|v| v.abs() < f64::MIN_POSITIVE) {
        *v = 0.0;
    }
    Ok(x)
}

/// Per-component stationary residual fields: `−d_i Δ_h w_i − f_i` for each
/// group followed by `−D Δ_h u − g` for the prey.
pub fn residual_fields(state: &FieldSet, params: &ModelParams) -> Vec<Vec<f64>> {
    let grid = state.grid();
    let n = params.n_groups();
    let nodes = grid.len();
    let mut out = Vec::with_capacity(n + 1);
    let mut lap = vec![0.0; nodes];
    let mut local = vec![0.0; n];
    for i in 0..n {
        laplacian_into(&grid, &state.w[i].values, params.diffusion[i], &mut lap);
        let r = (0..nodes)
            .map(|p| {
                for (j, f) in state.w.iter().enumerate() {
                    local[j] = f.values[p];
                }
                -lap[p] - reaction_w_unchecked(i, state.u.values[p], &local, params)
            })
            .collect();
        out.push(r);
    }
    laplacian_into(&grid, &state.u.values, params.prey_diffusion, &mut lap);
    let r = (0..nodes)
        .map(|p| {
            for (j, f) in state.w.iter().enumerate() {
                local[j] = f.values[p];
            }
            -lap[p] - reaction_u(state.u.values[p], &local, params)
        })
        .collect();
    out.push(r);
    out
}

/// Sup over nodes and components of the stationary residual.
pub fn residual_norm(state: &FieldSet, params: &ModelParams) -> f64 {
    residual_fields(state, params)
        .iter()
        .flatten()
        .fold(0.0, |m: f64, r| if r.is_nan() { f64::NAN } else { m.max(r.abs()) })
}

/// `10 (δ^-6 + λ/μ)`.
pub fn blow_up_limit(params: &ModelParams) -> f64 {
    let c = params.derived();
    10.0 * (c.wsum_cap + c.u_cap)
}

/// Steps without a new residual minimum before the step size is halved.
pub const STALL_WINDOW: usize = 500;
/// Smallest step size, relative to the configured one.
pub const MIN_TAU_FRACTION: f64 = 1.0 / 1024.0;

/// Marches until the residual and the per-step change both meet their
/// tolerances, or `max_steps` is reached.
///
/// The explicit growth terms can turn a damped predator/prey rotation into
/// a discrete limit cycle when `τ` is too large; if the residual sets no
/// new minimum for [`STALL_WINDOW`] steps the step size is halved, down to
/// `τ·MIN_TAU_FRACTION`.
pub fn march_to_steady(
    initial: &FieldSet,
    params: &ModelParams,
    settings: &SolveSettings,
) -> Result<SolveReport, SolveError> {
    march_observed(initial, params, settings, |_, _| {})
}

/// As [`march_to_steady`], calling `observe(step, state)` after every step.
pub fn march_observed(
    initial: &FieldSet,
    params: &ModelParams,
    settings: &SolveSettings,
    observe: impl FnMut(usize, &FieldSet),
) -> Result<SolveReport, SolveError> {
    march_tracked(initial, params, settings, observe).map(|(report, _)| report)
}

/// Marches and, when `settings.newton` is set, polishes the result with
/// Newton. An unconverged march (e.g. dynamics cycling between saddle
/// equilibria) hands Newton the lowest-residual state it visited.
pub fn solve_steady(
    initial: &FieldSet,
    params: &ModelParams,
    settings: &SolveSettings,
) -> Result<SolveReport, SolveError> {
    let (report, best) = march_tracked(initial, params, settings, |_, _| {})?;
    if !settings.newton {
        return Ok(report);
    }
    let from = if report.converged { &report.state } else { &best };
    match newton_refine(from, params, settings) {
        Ok(polished) if polished.residual_sup <= report.residual_sup => Ok(SolveReport {
            steps_taken: report.steps_taken,
            newton_iterations: polished.newton_iterations,
            wall_time: report.wall_time + polished.wall_time,
            ..polished
        }),
        _ => Ok(report),
    }
}

/// The march itself; also returns the lowest-residual state visited.
fn march_tracked(
    initial: &FieldSet,
    params: &ModelParams,
    settings: &SolveSettings,
    mut observe: impl FnMut(usize, &FieldSet),
) -> Result<(SolveReport, FieldSet), SolveError> {
    settings.validate()?;
    initial.check_against(params)?;
    let start = Instant::now();
    let limit = blow_up_limit(params);
    let min_tau = settings.tau * MIN_TAU_FRACTION;
    let mut tau = settings.tau;
    let mut state = initial.clone();
    let mut residual = residual_norm(&state, params);
    let mut best = residual;
    let mut since_best = 0;
    let mut lowest = (residual, state.clone());
    let mut steps = 0;
    let mut converged = false;
    while steps < settings.max_steps {
        let next = step(&state, params, tau, settings.linear_tol)?;
        steps += 1;
        let change = next.distance(&state) / tau;
        let sup = next.sup_norm();
        if !(sup <= limit) {
            return Err(SolveError::BlowUp { step: steps, sup_norm: sup, limit });
        }
        state = next;
        observe(steps, &state);
        residual = residual_norm(&state, params);
        if residual <= settings.tol_residual && change <= settings.tol_update {
            converged = true;
            break;
        }
        if residual < lowest.0 {
            lowest = (residual, state.clone());
        }
        if residual < best {
            best = residual;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= STALL_WINDOW && tau > min_tau {
                tau = (0.5 * tau).max(min_tau);
                best = residual;
                since_best = 0;
            }
        }
    }
    state.params_hash = params.fingerprint();
    let mut best_state = lowest.1;
    best_state.params_hash = state.params_hash;
    let report = SolveReport {
        state,
        residual_sup: residual,
        steps_taken: steps,
        newton_iterations: 0,
        converged,
        projected: false,
        wall_time: start.elapsed().as_secs_f64(),
    };
    Ok((report, best_state))
}

const NEWTON_MAX_ITERS: usize = 50;
const NEWTON_MAX_HALVINGS: usize = 30;

/// Damped Newton on the discrete stationary system.
pub fn newton_refine(
    state: &FieldSet,
    params: &ModelParams,
    settings: &SolveSettings,
) -> Result<SolveReport, SolveError> {
    settings.validate()?;
    state.check_against(params)?;
    let start = Instant::now();
    let mut v = state.clone();
    v.params_hash = params.fingerprint();
    let mut residual = residual_norm(&v, params);
    let mut projected = false;
    let mut iterations = 0;
    while residual > settings.tol_residual && iterations < NEWTON_MAX_ITERS {
        iterations += 1;
        let delta = newton_direction(&v, params).ok_or(SolveError::SingularJacobian { iteration: iterations })?;
        let mut accepted = None;
        let mut scale = 1.0;
        for _ in 0..=NEWTON_MAX_HALVINGS {
            let (cand, clipped) = apply_update(&v, &delta, scale);
            let r = residual_norm(&cand, params);
            if r < residual {
                accepted = Some((cand, r, clipped));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, r, clipped)) = accepted else {
            return Err(SolveError::Stagnation { iteration: iterations });
        };
        projected |= clipped;
        v = cand;
        residual = r;
    }
    Ok(SolveReport {
        state: v,
        residual_sup: residual,
        steps_taken: iterations,
        newton_iterations: iterations,
        converged: residual <= settings.tol_residual,
        projected,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

fn apply_update(v: &FieldSet, delta: &[f64], scale: f64) -> (FieldSet, bool) {
    let n = v.n_groups();
    let stride = n + 1;
    let mut out = v.clone();
    let mut clipped = false;
    let mut set = |x: &mut f64, d: f64| {
        let y = *x + scale * d;
        if y < 0.0 {
            clipped = true;
            *x = 0.0;
        } else {
            *x = y;
        }
    };
    for p in 0..v.grid().len() {
        for c in 0..n {
            set(&mut out.w[c].values[p], delta[p * stride + c]);
        }
        set(&mut out.u.values[p], delta[p * stride + n]);
    }
    (out, clipped)
}

/// Solves `J δ = −F` with unknowns ordered node-major, groups first and the
/// prey last at each node.
fn newton_direction(v: &FieldSet, params: &ModelParams) -> Option<Vec<f64>> {
    let grid = v.grid();
    let n = params.n_groups();
    let stride = n + 1;
    let size = grid.len() * stride;
    let band = stride * grid.bandwidth();
    let mut jac = Banded::zeros(size, band, band);
    let beta = params.competition;
    let mut local = vec![0.0; n];
    for p in 0..grid.len() {
        for (j, f) in v.w.iter().enumerate() {
            local[j] = f.values[p];
        }
        let u = v.u.values[p];
        let stencil = grid.stencil(p);
        for c in 0..n {
            let row = p * stride + c;
            for &(q, coef) in &stencil {
                jac.add(row, q * stride + c, -params.diffusion[c] * coef);
            }
            let rate = -params.mortality[c] + params.conversion[c] * u - beta * competition_pressure(c, &local, params);
            jac.add(row, row, -rate);
            for j in (0..n).filter(|&j| j != c) {
                jac.add(row, p * stride + j, beta * params.interaction[c][j] * local[c]);
            }
            jac.add(row, p * stride + n, -params.conversion[c] * local[c]);
        }
        let row = p * stride + n;
        for &(q, coef) in &stencil {
            jac.add(row, q * stride + n, -params.prey_diffusion * coef);
        }
        let consumption: f64 = local.iter().zip(&params.conversion).map(|(w, k)| k * w).sum();
        jac.add(row, row, -(params.prey_growth - 2.0 * params.prey_limitation * u - consumption));
        for j in 0..n {
            jac.add(row, p * stride + j, params.conversion[j] * u);
        }
    }
    let lu = jac.lu().ok()?;
    let fields = residual_fields(v, params);
    let mut rhs = vec![0.0; size];
    for p in 0..grid.len() {
        for c in 0..=n {
            rhs[p * stride + c] = -fields[c][p];
        }
    }
    lu.solve_in_place(&mut rhs);
    rhs.iter().all(|x| x.is_finite()).then_some(rhs)
}

/// Marches (and optionally polishes) at each `β` of an increasing schedule,
/// warm-starting from the previous state. Unconverged entries are kept and
/// flagged.
pub fn continue_in_beta(
    initial: &FieldSet,
    params: &ModelParams,
    schedule: &[f64],
    settings: &SolveSettings,
    provenance: &str,
) -> Result<ContinuationTrace, SolveError> {
    if schedule.is_empty() {
        return Err(SolveError::Schedule("empty schedule".into()));
    }
    if schedule.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
        return Err(SolveError::Schedule("values must be finite and nonnegative".into()));
    }
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SolveError::Schedule("values must be strictly increasing".into()));
    }
    let mut state = initial.clone();
    let mut reports = Vec::with_capacity(schedule.len());
    for &beta in schedule {
        let p = params.with_competition(beta);
        let report = solve_steady(&state, &p, settings)?;
        state = report.state.clone();
        reports.push(report);
    }
    Ok(ContinuationTrace {
        betas: schedule.to_vec(),
        reports,
        provenance: provenance.to_string(),
        params: params.with_competition(schedule[0]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario_a() -> (Grid, ModelParams) {
        (
            Grid::interval(1.0, 201).unwrap(),
            ModelParams::homogeneous(1, 1.0, 1.0, 1.0, 1.0, 0.2, 1.0, 1.0, 0.0, 0.2),
        )
    }

    #[test]
    fn zero_state_is_absorbing() {
        let (g, p) = scenario_a();
        let z = FieldSet::zeros(g, 1);
        for beta in [0.0, 1e6] {
            let next = imex_step(&z, &p.with_competition(beta), 0.3).unwrap();
            assert_eq!(next.sup_norm(), 0.0);
        }
        assert_eq!(residual_norm(&z, &p), 0.0);
    }

    #[test]
    fn constant_equilibrium_is_a_fixed_point() {
        let (g, p) = scenario_a();
        let s = FieldSet::constant(g, 0.2, &[0.8]);
        let next = imex_step(&s, &p, 0.5).unwrap();
        assert!(next.distance(&s) < 1e-10);
        assert!(residual_norm(&s, &p) < 1e-15);
    }

    #[test]
    fn perturbed_residual_matches_hand_algebra() {
        let (g, p) = scenario_a();
        let s = FieldSet::constant(g, 0.21, &[0.8]);
        let fields = residual_fields(&s, &p);
        // prey row: |(λ − μ(u+ε) − k w)(u+ε)| = 0.01 · 0.21
        assert!(fields[1].iter().all(|r| (r.abs() - 0.0021).abs() < 1e-12));
        // predator row: |(−ω + k(u+ε)) w| = 0.01 · 0.8 dominates the sup
        assert!(fields[0].iter().all(|r| (r.abs() - 0.008).abs() < 1e-12));
        assert!((residual_norm(&s, &p) - 0.008).abs() < 1e-12);
    }

    #[test]
    fn march_from_equilibrium_stops_immediately() {
        let (g, p) = scenario_a();
        let rep = march_to_steady(&FieldSet::constant(g, 0.2, &[0.8]), &p, &SolveSettings::default()).unwrap();
        assert!(rep.converged && rep.steps_taken <= 2 && rep.residual_sup <= 1e-8);
        let rep = march_to_steady(&FieldSet::zeros(g, 1), &p, &SolveSettings::default()).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.residual_sup, 0.0);
        assert_eq!(rep.state.sup_norm(), 0.0);
    }

    #[test]
    fn rejects_negative_initial_state() {
        let (g, p) = scenario_a();
        let s = FieldSet::constant(g, -0.1, &[0.8]);
        assert!(matches!(imex_step(&s, &p, 1.0), Err(SolveError::InvalidState(_))));
    }

    #[test]
    fn blow_up_guard_trips() {
        let (g, p) = scenario_a();
        // explicit growth k·u·w with an oversized τ multiplies w by ~u/ω
        let s = FieldSet::constant(g, 1e5, &[1.0]);
        let settings = SolveSettings { tau: 10.0, ..Default::default() };
        let err = march_to_steady(&s, &p, &settings).unwrap_err();
        assert!(matches!(err, SolveError::BlowUp { step: 1, .. }), "{err:?}");
    }

    #[test]
    fn newton_on_exact_roots() {
        let (g, p) = scenario_a();
        let settings = SolveSettings { tol_residual: 1e-12, ..Default::default() };
        let s = FieldSet::constant(g, 0.2, &[0.8]);
        let rep = newton_refine(&s, &p, &settings).unwrap();
        assert_eq!(rep.newton_iterations, 0);
        let z = FieldSet::zeros(g, 1);
        let rep = newton_refine(&z, &p, &settings).unwrap();
        assert_eq!(rep.state.sup_norm(), 0.0);
        assert_eq!(rep.newton_iterations, 0);
    }

    #[test]
    fn newton_converges_quadratically_near_equilibrium() {
        let (g, p) = scenario_a();
        let settings = SolveSettings { tol_residual: 1e-12, ..Default::default() };
        let s = FieldSet::constant(g, 0.2 + 1e-3, &[0.8]);
        let rep = newton_refine(&s, &p, &settings).unwrap();
        assert!(rep.converged && rep.residual_sup <= 1e-12, "{}", rep.residual_sup);
        assert!(rep.newton_iterations <= 5, "{}", rep.newton_iterations);
        assert!(rep.state.distance(&FieldSet::constant(g, 0.2, &[0.8])) < 1e-10);
    }

    #[test]
    fn schedule_validation() {
        let (g, p) = scenario_a();
        let s = FieldSet::zeros(g, 1);
        let set = SolveSettings::default();
        assert!(matches!(continue_in_beta(&s, &p, &[], &set, ""), Err(SolveError::Schedule(_))));
        assert!(matches!(continue_in_beta(&s, &p, &[1.0, 1.0], &set, ""), Err(SolveError::Schedule(_))));
        assert!(matches!(continue_in_beta(&s, &p, &[-1.0], &set, ""), Err(SolveError::Schedule(_))));
    }

    #[test]
    fn newton_jacobian_matches_finite_differences() {
        // Directional derivative of the residual against J·v via a solve:
        // J δ = −F, so F(v + εδ) ≈ (1 − ε) F(v).
        let g = Grid::interval(1.0, 9).unwrap();
        let p = ModelParams::homogeneous(2, 0.7, 1.3, 0.9, 0.6, 0.3, 1.1, 0.8, 5.0, 0.2);
        let s = FieldSet {
            u: ScalarField::from_fn(g, |x| 0.5 + 0.2 * x[0]),
            w: vec![
                ScalarField::from_fn(g, |x| 0.3 + 0.1 * (3.0 * x[0]).cos()),
                ScalarField::from_fn(g, |x| 0.2 + 0.1 * x[0] * x[0]),
            ],
            params_hash: 0,
        };
        let delta = newton_direction(&s, &p).unwrap();
        let f0 = residual_fields(&s, &p);
        let eps = 1e-6;
        let (moved, _) = apply_update(&s, &delta, eps);
        let f1 = residual_fields(&moved, &p);
        for (a, b) in f0.iter().flatten().zip(f1.iter().flatten()) {
            assert!((b - (1.0 - eps) * a).abs() < 1e-9, "{a} {b}");
        }
    }

    #[test]
    fn step_halving_breaks_discrete_limit_cycle() {
        // Weakly damped predator/prey focus: at τ = 1 the lagged coupling
        // circles the equilibrium forever.
        let g = Grid::interval(1.0, 11).unwrap();
        let p = ModelParams {
            prey_diffusion: 2.15,
            prey_growth: 4.53,
            prey_limitation: 0.56,
            diffusion: vec![0.98],
            mortality: vec![3.41],
            conversion: vec![2.45],
            interaction: vec![vec![0.0]],
            competition: 0.0,
            delta: 0.2,
        };
        let (u, w) = crate::model::constant_single_species_state(&p, 0).unwrap().unwrap();
        let settings = SolveSettings { tol_residual: 1e-9, tol_update: 1e-9, max_steps: 50_000, ..SolveSettings::default() };
        let rep = march_to_steady(&FieldSet::constant(g, 1.0, &[0.5]), &p, &settings).unwrap();
        assert!(rep.converged, "residual {}", rep.residual_sup);
        assert!(rep.state.distance(&FieldSet::constant(g, u, &[w])) < 1e-8);
    }

    #[test]
    fn solve_steady_polishes_unconverged_march() {
        let (g, p) = scenario_a();
        let settings = SolveSettings { max_steps: 3, newton: true, ..SolveSettings::default() };
        let init = FieldSet::constant(g, 0.3, &[0.7]);
        assert!(!march_to_steady(&init, &p, &settings).unwrap().converged);
        let rep = solve_steady(&init, &p, &settings).unwrap();
        assert!(rep.converged && rep.newton_iterations > 0);
        assert!(rep.state.distance(&FieldSet::constant(g, 0.2, &[0.8])) < 1e-8);
    }
}
