//! Diagnostics for computed equilibria and continuation traces: uniform
//! bounds, Hölder seminorms, overlaps and interaction masses, supports and
//! the common nodal set, the restricted eigenvalue inequality, decay of
//! competitors inside a territory, the weak complementarity inequalities,
//! survivor counting and the small-prey isolation probe.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::grid::{ball_nodes, integrate_values, lambda1_restricted, Grid, GridError, ScalarField, SupportMask};
use crate::model::{competition_pressure, nhat_bound, ModelError, ModelParams, NhatMode};
use crate::solver::{march_observed, ContinuationTrace, FieldSet, SolveError, SolveSettings};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("weight {index} = {value} lies outside [delta, 1/delta]")]
    WeightOutOfRange { index: usize, value: f64 },
    #[error("expected {expected} weights, got {got}")]
    WeightCount { expected: usize, got: usize },
    #[error("decay fit needs at least 3 trace entries, got {0}")]
    TraceTooShort(usize),
    #[error("component {component} at the center is {value:e} < 10*threshold at beta = {beta}")]
    CenterNotInTerritory { component: usize, beta: f64, value: f64 },
    #[error("test function {0} has negative values")]
    NegativeTestFunction(usize),
    #[error("zero isolation violated in trial {trial}: converged to a nonzero state with sup u = {u_max:e}")]
    IsolationViolated { trial: usize, u_max: f64 },
    #[error("component index {0} out of range")]
    Component(usize),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Relative slack of the L∞ bound comparisons.
pub const BOUND_RTOL: f64 = 1e-6;
/// Allowance on the restricted eigenvalue inequality.
pub const EIGEN_ALLOWANCE: f64 = 1.1;
/// Relative tolerance of the weak inequalities, times `‖state‖·‖η‖`.
pub const COMPLEMENTARITY_RTOL: f64 = 1e-4;
pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_MAX_PAIRS: usize = 250_000;
const HOLDER_SEED: u64 = 0x005e_ed0f_a1fa;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub u_min: f64,
    pub w_min: f64,
    pub u_max: f64,
    pub u_cap: f64,
    pub s_max: f64,
    pub s_cap: f64,
    pub wsum_max: f64,
    pub wsum_cap: f64,
    pub nonneg_pass: bool,
    pub u_pass: bool,
    pub s_pass: bool,
    pub wsum_pass: bool,
}

impl BoundReport {
    pub fn pass(&self) -> bool {
        self.nonneg_pass && self.u_pass && self.s_pass && self.wsum_pass
    }

    /// Amount by which `u_max` exceeds `λ/μ` (0 if within).
    pub fn u_excess(&self) -> f64 {
        (self.u_max - self.u_cap).max(0.0)
    }
}

/// Compares `sup u`, `sup (D u + Σ d_i w_i)` and `sup Σ w_i` with `λ/μ`,
/// `δ^-5` and `δ^-6`.
pub fn check_linf_bounds(state: &FieldSet, params: &ModelParams) -> BoundReport {
    let c = params.derived();
    let nodes = state.grid().len();
    let mut s_max: f64 = 0.0;
    let mut wsum_max: f64 = 0.0;
    for p in 0..nodes {
        let wsum: f64 = state.w.iter().map(|f| f.values[p]).sum();
        let s = params.prey_diffusion * state.u.values[p]
            + state.w.iter().zip(&params.diffusion).map(|(f, d)| d * f.values[p]).sum::<f64>();
        s_max = s_max.max(s);
        wsum_max = wsum_max.max(wsum);
    }
    let u_max = state.u.max().max(0.0);
    let u_min = state.u.min();
    let w_min = state.w.iter().map(ScalarField::min).fold(f64::INFINITY, f64::min);
    let within = |v: f64, cap: f64| v <= cap + BOUND_RTOL * cap;
    BoundReport {
        u_min,
        w_min,
        u_max,
        u_cap: c.u_cap,
        s_max,
        s_cap: c.s_cap,
        wsum_max,
        wsum_cap: c.wsum_cap,
        nonneg_pass: u_min >= 0.0 && !(w_min < 0.0),
        u_pass: within(u_max, c.u_cap),
        s_pass: within(s_max, c.s_cap),
        wsum_pass: within(wsum_max, c.wsum_cap),
    }
}

/// `max |f(x) − f(y)| / |x − y|^α` over node pairs: all pairs when
/// `nodes² <= max_pairs`, otherwise a fixed-seed sample of `max_pairs`
/// pairs stratified over the first node.
pub fn holder_seminorm(field: &ScalarField, alpha: f64, max_pairs: usize) -> Result<f64, AnalysisError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(AnalysisError::Invalid(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let grid = field.grid;
    let n = grid.len();
    let coords: Vec<[f64; 2]> = (0..n).map(|p| grid.coords(p)).collect();
    let f = &field.values;
    let quotient = |i: usize, j: usize| {
        let d2 = (coords[i][0] - coords[j][0]).powi(2) + (coords[i][1] - coords[j][1]).powi(2);
        (f[i] - f[j]).abs() / d2.powf(0.5 * alpha)
    };
    let mut best: f64 = 0.0;
    if n.saturating_mul(n) <= max_pairs {
        for i in 0..n {
            for j in (i + 1)..n {
                best = best.max(quotient(i, j));
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(HOLDER_SEED);
        for k in 0..max_pairs {
            let lo = k * n / max_pairs;
            let hi = ((k + 1) * n / max_pairs).max(lo + 1).min(n);
            let i = rng.gen_range(lo..hi);
            let j = rng.gen_range(0..n);
            if i != j {
                best = best.max(quotient(i, j));
            }
        }
    }
    Ok(best)
}

/// Hölder seminorm of `Σ_i weights_i w_i`; every weight must lie in
/// `[δ, 1/δ]`.
pub fn weighted_sum_holder(
    state: &FieldSet,
    weights: &[f64],
    delta: f64,
    alpha: f64,
    max_pairs: usize,
) -> Result<f64, AnalysisError> {
    if weights.len() != state.n_groups() {
        return Err(AnalysisError::WeightCount { expected: state.n_groups(), got: weights.len() });
    }
    if let Some((index, &value)) = weights.iter().enumerate().find(|(_, &v)| !(v >= delta && v <= 1.0 / delta)) {
        return Err(AnalysisError::WeightOutOfRange { index, value });
    }
    let grid = state.grid();
    let values = (0..grid.len())
        .map(|p| state.w.iter().zip(weights).map(|(f, c)| c * f.values[p]).sum())
        .collect();
    holder_seminorm(&ScalarField { grid, values }, alpha, max_pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegregationReport {
    pub beta: f64,
    /// `∫ w_i w_j`; diagonal left at 0.
    pub overlap: Vec<Vec<f64>>,
    /// `β ∫ w_i w_j`.
    pub scaled_overlap: Vec<Vec<f64>>,
    /// `∫ β w_i Σ_{j≠i} a_ij w_j`, the total mass of the interaction
    /// density that concentrates on the free boundary.
    pub interaction_mass: Vec<f64>,
    /// `sup w_i w_j`; diagonal left at 0.
    pub product_sup: Vec<Vec<f64>>,
}

impl SegregationReport {
    pub fn max_product_sup(&self) -> f64 {
        self.product_sup.iter().flatten().fold(0.0, |m, v| m.max(*v))
    }
}

pub fn segregation_report(state: &FieldSet, params: &ModelParams) -> SegregationReport {
    let grid = state.grid();
    let n = state.n_groups();
    let beta = params.competition;
    let mut overlap = vec![vec![0.0; n]; n];
    let mut product_sup = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let prod: Vec<f64> = state.w[i].values.iter().zip(&state.w[j].values).map(|(a, b)| a * b).collect();
            let v = integrate_values(&grid, &prod);
            let s = prod.iter().fold(0.0f64, |m, x| m.max(*x));
            overlap[i][j] = v;
            overlap[j][i] = v;
            product_sup[i][j] = s;
            product_sup[j][i] = s;
        }
    }
    let scaled_overlap = overlap.iter().map(|row| row.iter().map(|v| beta * v).collect()).collect();
    let mut local = vec![0.0; n];
    let interaction_mass = (0..n)
        .map(|i| {
            let density: Vec<f64> = (0..grid.len())
                .map(|p| {
                    for (j, f) in state.w.iter().enumerate() {
                        local[j] = f.values[p];
                    }
                    beta * local[i] * competition_pressure(i, &local, params)
                })
                .collect();
            integrate_values(&grid, &density)
        })
        .collect();
    SegregationReport { beta, overlap, scaled_overlap, interaction_mass, product_sup }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportReport {
    pub threshold: f64,
    pub supports: Vec<SupportMask>,
    /// Nodes where every group is at or below the threshold.
    pub nodal: SupportMask,
    pub measures: Vec<f64>,
    pub nodal_measure: f64,
}

pub fn support_and_nodal(state: &FieldSet, threshold: f64) -> Result<SupportReport, AnalysisError> {
    if !(threshold > 0.0) {
        return Err(AnalysisError::Invalid(format!("threshold must be positive, got {threshold}")));
    }
    let grid = state.grid();
    let supports: Vec<SupportMask> = state
        .w
        .iter()
        .map(|f| SupportMask::from_fn(grid, |p| f.values[p] > threshold))
        .collect();
    let nodal = SupportMask::from_fn(grid, |p| supports.iter().all(|s| !s.flags[p]));
    let measures = supports.iter().map(SupportMask::measure).collect();
    let nodal_measure = nodal.measure();
    Ok(SupportReport { threshold, supports, nodal, measures, nodal_measure })
}

/// `θ = 0.01 · max_i ‖w_i‖_sup`.
pub fn default_threshold(state: &FieldSet) -> f64 {
    0.01 * state.w.iter().map(ScalarField::sup_norm).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaberKrahnRecord {
    pub component: usize,
    pub support_measure: f64,
    pub lambda1: f64,
    /// `(λk_i − μω_i)/(d_i μ)`.
    pub cap: f64,
    pub pass: bool,
}

/// Restricted first eigenvalue of each nonempty support against its cap,
/// with a 10% discretization allowance.
pub fn faber_krahn_check(
    state: &FieldSet,
    params: &ModelParams,
    threshold: f64,
) -> Result<Vec<FaberKrahnRecord>, AnalysisError> {
    let supports = support_and_nodal(state, threshold)?;
    let mut out = Vec::new();
    for (i, mask) in supports.supports.iter().enumerate() {
        if mask.is_empty() {
            continue;
        }
        let lambda1 = lambda1_restricted(mask)?;
        let cap = params.eigen_cap(i);
        out.push(FaberKrahnRecord {
            component: i,
            support_measure: supports.measures[i],
            lambda1,
            cap,
            pass: lambda1 <= EIGEN_ALLOWANCE * cap,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub component: usize,
    pub center: Vec<f64>,
    pub rho: f64,
    pub betas: Vec<f64>,
    /// `sup_{B_{ρ/2}(center)} Σ_{j≠i} d_j w_j` per β.
    pub sup_h: Vec<f64>,
    /// Least-squares slope of `ln sup_h` against `√β`; `-inf` when some
    /// `sup_h` vanishes.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub fully_segregated: bool,
}

/// Fits the decay of the competitors of `component` near `center` along a
/// continuation trace.
pub fn decay_fit(
    trace: &ContinuationTrace,
    component: usize,
    center: &[f64],
    rho: f64,
    threshold: f64,
) -> Result<DecayFit, AnalysisError> {
    if trace.len() < 3 {
        return Err(AnalysisError::TraceTooShort(trace.len()));
    }
    if !(rho > 0.0) {
        return Err(AnalysisError::Invalid(format!("rho must be positive, got {rho}")));
    }
    let params = &trace.params;
    if component >= params.n_groups() {
        return Err(AnalysisError::Component(component));
    }
    let grid = trace.reports[0].state.grid();
    let ball = ball_nodes(&grid, center, rho / 2.0);
    let at = grid.nearest_node(center);
    let mut sup_h = Vec::with_capacity(trace.len());
    for (report, &beta) in trace.reports.iter().zip(&trace.betas) {
        let st = &report.state;
        let value = st.w[component].values[at];
        if value < 10.0 * threshold {
            return Err(AnalysisError::CenterNotInTerritory { component, beta, value });
        }
        let mut sup: f64 = 0.0;
        for p in (0..grid.len()).filter(|&p| ball.flags[p]) {
            let h: f64 = (0..st.n_groups())
                .filter(|&j| j != component)
                .map(|j| params.diffusion[j] * st.w[j].values[p])
                .sum();
            sup = sup.max(h);
        }
        sup_h.push(sup);
    }
    let xs: Vec<f64> = trace.betas.iter().map(|b| b.sqrt()).collect();
    let mut fit = DecayFit {
        component,
        center: center.to_vec(),
        rho,
        betas: trace.betas.clone(),
        sup_h: sup_h.clone(),
        slope: f64::NEG_INFINITY,
        intercept: f64::NAN,
        r_squared: f64::NAN,
        fully_segregated: true,
    };
    if sup_h.iter().any(|&s| s <= 0.0) {
        return Ok(fit);
    }
    let ys: Vec<f64> = sup_h.iter().map(|s| s.ln()).collect();
    let (slope, intercept, r2) = least_squares(&xs, &ys);
    fit.slope = slope;
    fit.intercept = intercept;
    fit.r_squared = r2;
    fit.fully_segregated = false;
    Ok(fit)
}

/// Ordinary least squares `y ≈ slope·x + intercept` and its `R²`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (slope, intercept, r2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InequalityKind {
    /// `∫ d_i ∇w_i·∇η ≤ ∫ (−ω_i + k_i u) w_i η`.
    Subsolution,
    /// `∫ ∇(d_i w_i − Σ_{j≠i} d_j w_j)·∇η ≥ ∫ [(−ω_i + k_i u) w_i − Σ_{j≠i} (−ω_j + k_j u) w_j] η`.
    Difference,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplementarityEntry {
    pub component: usize,
    pub test_index: usize,
    pub kind: InequalityKind,
    pub lhs: f64,
    pub rhs: f64,
    /// Amount by which the inequality holds (negative when violated).
    pub margin: f64,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplementarityReport {
    pub entries: Vec<ComplementarityEntry>,
    pub worst_margin: f64,
    /// Largest `−margin / tol` over all entries; `≤ 1` means every entry
    /// holds within tolerance.
    pub worst_violation_ratio: f64,
    pub pass: bool,
}

/// Evaluates both weak inequalities of the segregated limit for every
/// group and every nonnegative test function. Gradients are edge
/// differences weighted consistently with the grid's Dirichlet form.
pub fn complementarity_check(
    state: &FieldSet,
    params: &ModelParams,
    tests: &[ScalarField],
) -> Result<ComplementarityReport, AnalysisError> {
    if let Some(k) = tests.iter().position(|t| t.values.iter().any(|v| !(*v >= 0.0))) {
        return Err(AnalysisError::NegativeTestFunction(k));
    }
    let grid = state.grid();
    let n = state.n_groups();
    let nodes = grid.len();
    let scale = state.sup_norm();
    // (−ω_i + k_i u) w_i per group
    let growth: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..nodes)
                .map(|p| (-params.mortality[i] + params.conversion[i] * state.u.values[p]) * state.w[i].values[p])
                .collect()
        })
        .collect();
    let mut entries = Vec::with_capacity(2 * n * tests.len());
    for (t, eta) in tests.iter().enumerate() {
        let tol = COMPLEMENTARITY_RTOL * scale * eta.sup_norm();
        let weighted = |f: &[f64]| {
            let prod: Vec<f64> = f.iter().zip(&eta.values).map(|(a, b)| a * b).collect();
            integrate_values(&grid, &prod)
        };
        let grad_w: Vec<f64> = state.w.iter().map(|f| grid.dirichlet_form(&f.values, &eta.values)).collect();
        let react: Vec<f64> = growth.iter().map(|g| weighted(g)).collect();
        for i in 0..n {
            let lhs = params.diffusion[i] * grad_w[i];
            let rhs = react[i];
            entries.push(ComplementarityEntry {
                component: i,
                test_index: t,
                kind: InequalityKind::Subsolution,
                lhs,
                rhs,
                margin: rhs - lhs,
                tol,
            });
            let others = |v: &[f64], coef: &dyn Fn(usize) -> f64| -> f64 {
                (0..n).filter(|&j| j != i).map(|j| coef(j) * v[j]).sum()
            };
            let lhs = params.diffusion[i] * grad_w[i] - others(&grad_w, &|j| params.diffusion[j]);
            let rhs = react[i] - others(&react, &|_| 1.0);
            entries.push(ComplementarityEntry {
                component: i,
                test_index: t,
                kind: InequalityKind::Difference,
                lhs,
                rhs,
                margin: lhs - rhs,
                tol,
            });
        }
    }
    let worst_margin = entries.iter().map(|e| e.margin).fold(f64::INFINITY, f64::min);
    let worst_violation_ratio = entries
        .iter()
        .map(|e| if e.tol > 0.0 { -e.margin / e.tol } else if e.margin < 0.0 { f64::INFINITY } else { 0.0 })
        .fold(f64::NEG_INFINITY, f64::max);
    let pass = entries.iter().all(|e| e.margin >= -e.tol);
    Ok(ComplementarityReport {
        entries,
        worst_margin: if worst_margin.is_finite() { worst_margin } else { 0.0 },
        worst_violation_ratio: if worst_violation_ratio.is_finite() { worst_violation_ratio } else { 0.0 },
        pass,
    })
}

/// Nonnegative Neumann-compatible test functions
/// `Π_axis (1 + cos(m_axis π x_axis / L_axis))`, enumerated by increasing
/// total frequency.
pub fn cosine_test_functions(grid: &Grid, count: usize) -> Vec<ScalarField> {
    let ext = grid.extents().to_vec();
    let modes: Vec<(usize, usize)> = if grid.dim() == 1 {
        (1..=count).map(|m| (m, 0)).collect()
    } else {
        (1..)
            .flat_map(|total: usize| (0..=total).map(move |p| (p, total - p)))
            .take(count)
            .collect()
    };
    modes
        .into_iter()
        .map(|(p, q)| {
            ScalarField::from_fn(*grid, |x| {
                let fx = 1.0 + (p as f64 * std::f64::consts::PI * x[0] / ext[0]).cos();
                if ext.len() == 2 {
                    fx * (1.0 + (q as f64 * std::f64::consts::PI * x[1] / ext[1]).cos())
                } else {
                    fx
                }
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivorReport {
    pub threshold: f64,
    pub count: usize,
    pub survivors: Vec<usize>,
    pub sup_norms: Vec<f64>,
    /// Weyl-law estimate of the maximal number of survivors.
    pub nhat_weyl: f64,
    /// `count <= ceil(2 nhat)`; absent when nothing survives.
    pub soft_pass: Option<bool>,
    /// Survivor supports at the threshold are pairwise disjoint.
    pub pairwise_disjoint: bool,
    /// `sup |u − λ/μ|`, reported when nothing survives.
    pub u_distance: Option<f64>,
}

pub fn survivor_count(state: &FieldSet, params: &ModelParams, threshold: f64) -> Result<SurvivorReport, AnalysisError> {
    let supports = support_and_nodal(state, threshold)?;
    let grid = state.grid();
    let sup_norms: Vec<f64> = state.w.iter().map(ScalarField::sup_norm).collect();
    let survivors: Vec<usize> = (0..state.n_groups()).filter(|&i| sup_norms[i] > threshold).collect();
    let count = survivors.len();
    let nhat_weyl = nhat_bound(params, grid.measure(), grid.dim(), NhatMode::Weyl)?;
    let mut pairwise_disjoint = true;
    for (a, &i) in survivors.iter().enumerate() {
        for &j in &survivors[a + 1..] {
            if supports.supports[i].intersects(&supports.supports[j]) {
                pairwise_disjoint = false;
            }
        }
    }
    let u_cap = params.derived().u_cap;
    Ok(SurvivorReport {
        threshold,
        count,
        survivors,
        sup_norms,
        nhat_weyl,
        soft_pass: (count > 0).then(|| count as f64 <= (2.0 * nhat_weyl).ceil()),
        pairwise_disjoint,
        u_distance: (count == 0)
            .then(|| state.u.values.iter().fold(0.0f64, |m, u| m.max((u - u_cap).abs()))),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum IsolationOutcome {
    /// Converged to the zero state.
    Zero,
    /// `sup u` reached `δ²` during the march.
    Escaped { converged: bool, final_u_max: f64 },
    /// Neither escaped nor converged within the step budget.
    Unresolved { final_u_max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsolationReport {
    pub eta: f64,
    pub outcomes: Vec<IsolationOutcome>,
}

impl IsolationReport {
    pub fn zero_count(&self) -> usize {
        self.outcomes.iter().filter(|o| matches!(o, IsolationOutcome::Zero)).count()
    }

    pub fn escaped_count(&self) -> usize {
        self.outcomes.iter().filter(|o| matches!(o, IsolationOutcome::Escaped { .. })).count()
    }
}

const ZERO_SUP: f64 = 1e-6;

/// Marches from `initial` and classifies the outcome against the
/// threshold `η = δ²`: a stationary state with `sup u < η` must vanish.
pub fn classify_isolation_trial(
    initial: &FieldSet,
    params: &ModelParams,
    settings: &SolveSettings,
    trial: usize,
) -> Result<IsolationOutcome, AnalysisError> {
    let eta = params.derived().eta;
    let mut escaped = initial.u.max() >= eta;
    let report = march_observed(initial, params, settings, |_, s| {
        if !escaped && s.u.max() >= eta {
            escaped = true;
        }
    })?;
    let u_max = report.state.u.max();
    let sup = report.state.sup_norm();
    if report.converged && sup >= ZERO_SUP && u_max < eta {
        return Err(AnalysisError::IsolationViolated { trial, u_max });
    }
    Ok(if escaped {
        IsolationOutcome::Escaped { converged: report.converged, final_u_max: u_max }
    } else if report.converged && sup < ZERO_SUP {
        IsolationOutcome::Zero
    } else {
        IsolationOutcome::Unresolved { final_u_max: u_max }
    })
}

/// Random nonnegative initial states with every value below `δ²`.
pub fn zero_isolation_probe(
    params: &ModelParams,
    grid: &Grid,
    trials: usize,
    seed: u64,
    settings: &SolveSettings,
) -> Result<IsolationReport, AnalysisError> {
    let eta = params.derived().eta;
    let n = params.n_groups();
    let mut outcomes = Vec::with_capacity(trials);
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
        let mut field = || ScalarField {
            grid: *grid,
            values: (0..grid.len()).map(|_| rng.gen_range(0.0..eta)).collect(),
        };
        let u = field();
        let w = (0..n).map(|_| field()).collect();
        let initial = FieldSet { u, w, params_hash: 0 };
        outcomes.push(classify_isolation_trial(&initial, params, settings, t)?);
    }
    Ok(IsolationReport { eta, outcomes })
}
