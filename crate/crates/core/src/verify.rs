//! The desk-scale acceptance suite and the scenarios it runs on.
//!
//! Scenario A is one predator group on `[0, 1]`, whose constant positive
//! equilibrium is known in closed form. Scenario B is two symmetric groups
//! on `[0, 10]` started from unequal bumps and continued in β.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{
    check_linf_bounds, complementarity_check, cosine_test_functions, decay_fit, faber_krahn_check, holder_seminorm,
    segregation_report, survivor_count, zero_isolation_probe, DEFAULT_ALPHA, DEFAULT_MAX_PAIRS,
};
use crate::grid::{integrate, lambda1_restricted, laplacian_neumann, Grid, ScalarField, SupportMask};
use crate::io::{read_snapshot, write_snapshot, SnapshotMeta};
use crate::model::{constant_single_species_state, validate_uniform, ModelParams};
use crate::solver::{continue_in_beta, solve_steady, ContinuationTrace, FieldSet, SolveSettings};

/// Competition strengths of the Scenario B continuation.
pub const SCENARIO_B_BETAS: [f64; 5] = [10.0, 1e2, 1e3, 1e4, 1e5];
/// Support threshold used by the suite.
pub const SUITE_THRESHOLD: f64 = 0.01;

pub fn scenario_a() -> (ModelParams, Grid) {
    (
        ModelParams::homogeneous(1, 1.0, 1.0, 1.0, 1.0, 0.2, 1.0, 1.0, 0.0, 0.2),
        Grid::interval(1.0, 201).expect("grid"),
    )
}

pub fn scenario_b() -> (ModelParams, Grid) {
    (
        ModelParams::homogeneous(2, 1.0, 1.0, 1.0, 1.0, 0.2, 1.0, 1.0, SCENARIO_B_BETAS[0], 0.2),
        Grid::interval(10.0, 401).expect("grid"),
    )
}

/// `u = 1`, `w_1 = 0.5 e^{−(x−2)²}`, `w_2 = 0.3 e^{−(x−7.5)²}`.
pub fn scenario_b_initial(grid: &Grid) -> FieldSet {
    let bump = |a: f64, c: f64| ScalarField::from_fn(*grid, move |x| a * (-(x[0] - c).powi(2)).exp());
    FieldSet { u: ScalarField::constant(*grid, 1.0), w: vec![bump(0.5, 2.0), bump(0.3, 7.5)], params_hash: 0 }
}

pub fn scenario_b_trace() -> Result<ContinuationTrace, String> {
    let (params, grid) = scenario_b();
    continue_in_beta(&scenario_b_initial(&grid), &params, &SCENARIO_B_BETAS, &SolveSettings::default(), "scenario B")
        .map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} [{}] {}: {} ({:.2} s)",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.seconds
        )
    }
}

fn timed(id: u8, name: &'static str, body: impl FnOnce() -> Result<(bool, String), String>) -> CriterionOutcome {
    let start = Instant::now();
    let (pass, detail) = body().unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionOutcome { id, name, pass, detail, seconds: start.elapsed().as_secs_f64() }
}

fn trace_index(trace: &ContinuationTrace, beta: f64) -> Result<usize, String> {
    trace.betas.iter().position(|b| *b == beta).ok_or_else(|| format!("beta {beta} missing from the trace"))
}

fn all_converged(trace: &ContinuationTrace, upto: usize) -> Result<(), String> {
    match trace.reports[..=upto].iter().position(|r| !r.converged) {
        Some(k) => Err(format!("beta {} did not converge (residual {:e})", trace.betas[k], trace.reports[k].residual_sup)),
        None => Ok(()),
    }
}

/// Constant-equilibrium recovery in Scenario A.
pub fn criterion_1() -> CriterionOutcome {
    timed(1, "constant equilibrium recovery", || {
        let (params, grid) = scenario_a();
        let (u_eq, w_eq) = constant_single_species_state(&params, 0)
            .map_err(|e| e.to_string())?
            .ok_or("no positive constant state")?;
        let start = Instant::now();
        let report = solve_steady(&FieldSet::constant(grid, 1.0, &[0.1]), &params, &SolveSettings::default())
            .map_err(|e| e.to_string())?;
        let secs = start.elapsed().as_secs_f64();
        let dist = report.state.distance(&FieldSet::constant(grid, u_eq, &[w_eq]));
        let pass = report.converged && report.residual_sup <= 1e-8 && dist <= 1e-6 && secs < 5.0;
        Ok((
            pass,
            format!(
                "residual {:.2e} (<= 1e-8), distance to ({u_eq}, {w_eq}) {dist:.2e} (<= 1e-6), {secs:.3} s (< 5 s)",
                report.residual_sup
            ),
        ))
    })
}

/// An admissible random parameter set: coefficients uniform in
/// `[δ, 1/δ]`, redrawing each group until `λk_i − μω_i > δ`.
pub fn random_admissible_params(rng: &mut ChaCha8Rng, n: usize, beta: f64, delta: f64) -> ModelParams {
    let mut draw = || rng.gen_range(delta..1.0 / delta);
    let (lambda, mu, prey_d) = (draw(), draw(), draw());
    let (mut d, mut omega, mut k) = (Vec::new(), Vec::new(), Vec::new());
    while d.len() < n {
        let (di, oi, ki) = (draw(), draw(), draw());
        if lambda * ki - mu * oi > delta {
            d.push(di);
            omega.push(oi);
            k.push(ki);
        }
    }
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = draw();
            a[i][j] = v;
            a[j][i] = v;
        }
    }
    ModelParams {
        prey_diffusion: prey_d,
        prey_growth: lambda,
        prey_limitation: mu,
        diffusion: d,
        mortality: omega,
        conversion: k,
        interaction: a,
        competition: beta,
        delta,
    }
}

const BOUND_SUITE_SEED: u64 = 2;
const BOUND_SUITE_CASES: usize = 50;

/// Uniform L∞ bounds over random admissible parameter sets.
pub fn criterion_2() -> CriterionOutcome {
    timed(2, "L-infinity bound suite", || {
        let grid = Grid::interval(1.0, 201).map_err(|e| e.to_string())?;
        let betas = [1.0, 10.0, 1e2, 1e3];
        let mut rng = ChaCha8Rng::seed_from_u64(BOUND_SUITE_SEED);
        let cases: Vec<(ModelParams, FieldSet)> = (0..BOUND_SUITE_CASES)
            .map(|c| {
                let n = rng.gen_range(1..=8);
                let p = random_admissible_params(&mut rng, n, betas[c % betas.len()], 0.2);
                let u_cap = p.prey_growth / p.prey_limitation;
                let mut field = |max: f64| ScalarField {
                    grid,
                    values: (0..grid.len()).map(|_| rng.gen_range(0.0..max)).collect(),
                };
                let u = field(u_cap);
                let w = (0..n).map(|_| field(1.0)).collect();
                (p, FieldSet { u, w, params_hash: 0 })
            })
            .collect();
        let settings =
            SolveSettings { tol_residual: 1e-6, tol_update: 1e-8, max_steps: 20_000, newton: true, ..SolveSettings::default() };
        let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(cases.len());
        let chunk = cases.len().div_ceil(threads);
        let failures: Vec<String> = std::thread::scope(|scope| {
            let handles: Vec<_> = cases
                .chunks(chunk)
                .enumerate()
                .map(|(c, batch)| {
                    scope.spawn(move || {
                        let mut out = Vec::new();
                        for (k, (p, init)) in batch.iter().enumerate() {
                            let case = c * chunk + k;
                            let admissible = validate_uniform(p).map(|a| a.admissible).unwrap_or(false);
                            let report = match solve_steady(init, p, &settings) {
                                Ok(r) => r,
                                Err(e) => {
                                    out.push(format!("case {case}: {e}"));
                                    continue;
                                }
                            };
                            let b = check_linf_bounds(&report.state, p);
                            let ok = admissible
                                && report.converged
                                && report.residual_sup <= 1e-6
                                && b.u_min >= 0.0
                                && b.w_min >= 0.0
                                && b.u_max <= b.u_cap + 1e-6
                                && b.s_max <= b.s_cap;
                            if !ok {
                                out.push(format!(
                                    "case {case}: converged {} residual {:.1e} u_max {} cap {} s_max {}",
                                    report.converged, report.residual_sup, b.u_max, b.u_cap, b.s_max
                                ));
                            }
                        }
                        out
                    })
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().unwrap_or_else(|_| vec!["worker panicked".into()])).collect()
        });
        Ok((
            failures.is_empty(),
            if failures.is_empty() {
                format!("{BOUND_SUITE_CASES} random admissible sets converged within the bounds")
            } else {
                format!("{} failures: {}", failures.len(), failures.join("; "))
            },
        ))
    })
}

/// Segregation along the Scenario B continuation up to β = 10⁴.
pub fn criterion_3(trace: &ContinuationTrace) -> CriterionOutcome {
    timed(3, "segregation along continuation", || {
        let last = trace_index(trace, 1e4)?;
        let base = trace_index(trace, 1e2)?;
        all_converged(trace, last)?;
        let seg: Vec<_> = (0..=last).map(|k| segregation_report(&trace.reports[k].state, &trace.params_at(k))).collect();
        let prod: Vec<f64> = seg.iter().map(|s| s.product_sup[0][1]).collect();
        let scaled: Vec<f64> = seg.iter().map(|s| s.scaled_overlap[0][1]).collect();
        let decreasing = prod.windows(2).all(|w| w[1] < w[0]);
        let ratio = prod[last] / prod[0];
        let scaled_max = scaled[base..].iter().cloned().fold(0.0, f64::max);
        let pass = decreasing && ratio <= 0.02 && scaled_max <= 3.0 * scaled[base];
        Ok((
            pass,
            format!(
                "sup w1w2 {:?} strictly decreasing {decreasing}, final/initial {ratio:.3e} (<= 0.02), max scaled overlap {scaled_max:.4} (<= 3 x {:.4})",
                prod.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>(),
                scaled[base]
            ),
        ))
    })
}

/// Hölder seminorms stay bounded along the trace.
pub fn criterion_4(trace: &ContinuationTrace) -> CriterionOutcome {
    timed(4, "uniform Hoelder control", || {
        let lo = trace_index(trace, 1e2)?;
        let hi = trace_index(trace, 1e4)?;
        all_converged(trace, hi)?;
        let mut pass = true;
        let mut parts = Vec::new();
        for i in 0..trace.params.n_groups() {
            let h = |k: usize| holder_seminorm(&trace.reports[k].state.w[i], DEFAULT_ALPHA, DEFAULT_MAX_PAIRS);
            let (a, b) = (h(lo).map_err(|e| e.to_string())?, h(hi).map_err(|e| e.to_string())?);
            pass &= b <= 3.0 * a;
            parts.push(format!("w{}: {b:.4} at 1e4 vs {a:.4} at 1e2", i + 1));
        }
        Ok((pass, parts.join(", ")))
    })
}

/// Restricted first eigenvalue of each survivor against its cap.
pub fn criterion_5(trace: &ContinuationTrace) -> CriterionOutcome {
    timed(5, "Faber-Krahn inequality", || {
        let k = trace_index(trace, 1e4)?;
        all_converged(trace, k)?;
        let records = faber_krahn_check(&trace.reports[k].state, &trace.params_at(k), SUITE_THRESHOLD)
            .map_err(|e| e.to_string())?;
        let pass = !records.is_empty() && records.iter().all(|r| r.pass);
        let parts: Vec<String> = records
            .iter()
            .map(|r| format!("w{}: lambda1 {:.5} <= 1.1 x {:.3}", r.component + 1, r.lambda1, r.cap))
            .collect();
        Ok((pass, parts.join(", ")))
    })
}

/// Exponential decay of the competitor inside the first territory.
pub fn criterion_6(trace: &ContinuationTrace) -> CriterionOutcome {
    timed(6, "exponential decay", || {
        let from = trace_index(trace, 1e2)?;
        let to = trace_index(trace, 1e5)?;
        all_converged(trace, to)?;
        let sub = ContinuationTrace {
            betas: trace.betas[from..=to].to_vec(),
            reports: trace.reports[from..=to].to_vec(),
            provenance: trace.provenance.clone(),
            params: trace.params_at(from),
        };
        let grid = sub.reports[0].state.grid();
        let center = grid.coords(sub.reports[0].state.w[0].argmax());
        let center = &center[..grid.dim()];
        let rho = 0.9 * grid.extents().iter().cloned().fold(f64::INFINITY, f64::min);
        let fit = decay_fit(&sub, 0, center, rho, SUITE_THRESHOLD).map_err(|e| e.to_string())?;
        let first = fit.sup_h[0];
        let last = *fit.sup_h.last().expect("nonempty");
        let drop = last <= 0.1 * first;
        let pass = if fit.fully_segregated { drop } else { fit.slope < 0.0 && fit.r_squared >= 0.9 && drop };
        Ok((
            pass,
            format!(
                "center {center:?}, rho {rho}: slope {:.4} (< 0), R^2 {:.4} (>= 0.9), sup_h {first:.3e} -> {last:.3e} (ratio <= 0.1){}",
                fit.slope,
                fit.r_squared,
                if fit.fully_segregated { ", fully segregated" } else { "" }
            ),
        ))
    })
}

/// Weak complementarity inequalities at β = 10⁴.
pub fn criterion_7(trace: &ContinuationTrace) -> CriterionOutcome {
    timed(7, "complementarity", || {
        let k = trace_index(trace, 1e4)?;
        all_converged(trace, k)?;
        let state = &trace.reports[k].state;
        let tests = cosine_test_functions(&state.grid(), 20);
        let r = complementarity_check(state, &trace.params_at(k), &tests).map_err(|e| e.to_string())?;
        Ok((
            r.pass,
            format!(
                "{} inequalities, worst margin {:.3e}, worst margin/tol {:.3e} (pass when <= 1)",
                r.entries.len(),
                r.worst_margin,
                r.worst_violation_ratio
            ),
        ))
    })
}

pub const ISOLATION_SEED: u64 = 8;

/// Small-prey isolation in Scenario A.
pub fn criterion_8() -> CriterionOutcome {
    timed(8, "zero isolation", || {
        let (params, grid) = scenario_a();
        let report = zero_isolation_probe(&params, &grid, 20, ISOLATION_SEED, &SolveSettings::default())
            .map_err(|e| e.to_string())?;
        Ok((
            true,
            format!(
                "20 trials: {} escaped, {} to zero, {} unresolved, 0 violations",
                report.escaped_count(),
                report.zero_count(),
                report.outcomes.len() - report.escaped_count() - report.zero_count()
            ),
        ))
    })
}

pub const SURVIVOR_SEED: u64 = 9;

/// Ten identical groups at β = 10⁴ from random data.
pub fn criterion_9() -> CriterionOutcome {
    timed(9, "survivor dichotomy", || {
        let n = 10;
        let params = ModelParams::homogeneous(n, 1.0, 1.0, 1.0, 1.0, 0.2, 1.0, 1.0, 1e4, 0.2);
        let grid = Grid::interval(1.0, 201).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(SURVIVOR_SEED);
        let w = (0..n)
            .map(|_| ScalarField { grid, values: (0..grid.len()).map(|_| rng.gen_range(0.0..0.5)).collect() })
            .collect();
        let init = FieldSet { u: ScalarField::constant(grid, 1.0), w, params_hash: 0 };
        let report = solve_steady(&init, &params, &SolveSettings::default()).map_err(|e| e.to_string())?;
        let s = survivor_count(&report.state, &params, SUITE_THRESHOLD).map_err(|e| e.to_string())?;
        let extinct_ok = (0..n).filter(|i| !s.survivors.contains(i)).all(|i| s.sup_norms[i] <= SUITE_THRESHOLD);
        let pass = report.converged && s.pairwise_disjoint && extinct_ok;
        Ok((
            pass,
            format!(
                "converged {}, {} survivor(s) {:?}, Weyl bound {:.3} (soft verdict {}), disjoint {}, extinct sup <= 0.01 {}{}",
                report.converged,
                s.count,
                s.survivors.iter().map(|i| i + 1).collect::<Vec<_>>(),
                s.nhat_weyl,
                s.soft_pass.map_or("n/a".to_string(), |v| v.to_string()),
                s.pairwise_disjoint,
                extinct_ok,
                s.u_distance.map_or(String::new(), |d| format!(", |u - lambda/mu| {d:.3e}"))
            ),
        ))
    })
}

fn cosine_laplacian_error(nodes: usize) -> Result<f64, String> {
    let grid = Grid::interval(1.0, nodes).map_err(|e| e.to_string())?;
    let f = ScalarField::from_fn(grid, |x| (std::f64::consts::PI * x[0]).cos());
    let lap = laplacian_neumann(&f, 1.0);
    let pi2 = std::f64::consts::PI.powi(2);
    Ok(lap.values.iter().zip(&f.values).map(|(l, v)| (l + pi2 * v).abs()).fold(0.0, f64::max))
}

/// Discrete kernel checks.
pub fn criterion_10() -> CriterionOutcome {
    timed(10, "numerical kernel validation", || {
        let ratio = cosine_laplacian_error(101)? / cosine_laplacian_error(201)?;
        let lap_ok = (3.5..=4.5).contains(&ratio);

        let grid = Grid::interval(1.0, 201).map_err(|e| e.to_string())?;
        let interior = SupportMask::from_fn(grid, |p| p != 0 && p != grid.len() - 1);
        let l1 = lambda1_restricted(&interior).map_err(|e| e.to_string())?;
        let pi2 = std::f64::consts::PI.powi(2);
        let eig_ok = (l1 / pi2 - 1.0).abs() <= 0.01;

        let linear = integrate(&ScalarField::from_fn(grid, |x| 0.3 + 1.7 * x[0]));
        let plane = integrate(&ScalarField::from_fn(Grid::rectangle(2.0, 3.0, 21, 31).map_err(|e| e.to_string())?, |x| {
            1.0 + x[0] - 2.0 * x[1]
        }));
        let int_ok = (linear - 1.15).abs() <= 1e-14 && (plane - (6.0 + 6.0 - 18.0)).abs() <= 1e-13;

        let (params, _) = scenario_a();
        let state = FieldSet {
            u: ScalarField::from_fn(grid, |x| 0.2 + (7.0 * x[0]).sin() / 3.0),
            w: vec![ScalarField::from_fn(grid, |x| 0.8 * (-x[0] / 7.0).exp())],
            params_hash: params.fingerprint(),
        };
        let path = std::env::temp_dir().join(format!("strongcomp-roundtrip-{}.txt", std::process::id()));
        let meta = SnapshotMeta { beta: 0.0, residual: 0.0, timestamp: "0".into(), params: Some(params) };
        write_snapshot(&state, &meta, &path).map_err(|e| e.to_string())?;
        let back = read_snapshot(&path);
        let _ = std::fs::remove_file(&path);
        let (back, back_meta) = back.map_err(|e| e.to_string())?;
        let snap_ok = back == state && back_meta == meta;

        Ok((
            lap_ok && eig_ok && int_ok && snap_ok,
            format!(
                "Laplacian error ratio {ratio:.4} (in [3.5, 4.5]), Dirichlet lambda1 {l1:.6} vs pi^2 {:.3e} rel, linear integrals {}, snapshot round trip exact {snap_ok}",
                (l1 / pi2 - 1.0).abs(),
                if int_ok { "exact" } else { "inexact" }
            ),
        ))
    })
}

/// Runs every criterion; criteria 3–7 share one Scenario B trace.
pub fn run_all() -> Vec<CriterionOutcome> {
    let mut out = vec![criterion_1(), criterion_2()];
    let start = Instant::now();
    match scenario_b_trace() {
        Ok(trace) => {
            out.push(criterion_3(&trace));
            out.push(criterion_4(&trace));
            out.push(criterion_5(&trace));
            out.push(criterion_6(&trace));
            out.push(criterion_7(&trace));
        }
        Err(e) => {
            let secs = start.elapsed().as_secs_f64();
            for (id, name) in [
                (3, "segregation along continuation"),
                (4, "uniform Hoelder control"),
                (5, "Faber-Krahn inequality"),
                (6, "exponential decay"),
                (7, "complementarity"),
            ] {
                out.push(CriterionOutcome { id, name, pass: false, detail: format!("trace failed: {e}"), seconds: secs });
            }
        }
    }
    out.push(criterion_8());
    out.push(criterion_9());
    out.push(criterion_10());
    out
}
