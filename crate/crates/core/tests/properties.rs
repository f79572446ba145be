use proptest::prelude::*;

use strongcomp::analysis::{check_linf_bounds, holder_seminorm, segregation_report, support_and_nodal};
use strongcomp::grid::{integrate, lambda1_restricted, laplacian_neumann, Grid, ScalarField, SupportMask};
use strongcomp::io::{snapshot_from_str, snapshot_to_string, SnapshotMeta};
use strongcomp::model::{
    constant_single_species_state, nhat_from_ratio, reaction_u, reaction_w, validate_uniform, ModelParams, NhatMode,
};
use strongcomp::solver::{continue_in_beta, imex_step, residual_fields, solve_steady, FieldSet, SolveSettings};

const DELTA: f64 = 0.2;

fn coef() -> impl Strategy<Value = f64> {
    DELTA..(1.0 / DELTA)
}

/// Admissible parameters with `n` groups (groups violating the margin are
/// repaired by raising `k_i`).
fn params(n: usize) -> impl Strategy<Value = ModelParams> {
    (
        coef(),
        coef(),
        coef(),
        prop::collection::vec((coef(), coef(), coef()), n),
        prop::collection::vec(coef(), n * n),
        0.0..1e4f64,
    )
        .prop_map(move |(lambda, mu, prey_d, groups, a_flat, beta)| {
            let mut a = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in (i + 1)..n {
                    a[i][j] = a_flat[i * n + j];
                    a[j][i] = a_flat[i * n + j];
                }
            }
            let mut p = ModelParams {
                prey_diffusion: prey_d,
                prey_growth: lambda,
                prey_limitation: mu,
                diffusion: groups.iter().map(|g| g.0).collect(),
                mortality: groups.iter().map(|g| g.1).collect(),
                conversion: groups.iter().map(|g| g.2).collect(),
                interaction: a,
                competition: beta,
                delta: DELTA,
            };
            for i in 0..n {
                // λk − μω > δ with k ≤ 1/δ; shrink ω if needed
                if lambda * p.conversion[i] - mu * p.mortality[i] <= DELTA {
                    p.conversion[i] = 1.0 / DELTA;
                    p.mortality[i] = DELTA.max((lambda * p.conversion[i] - 2.0 * DELTA) / mu).min(p.mortality[i]);
                }
            }
            p
        })
        .prop_filter("admissible", |p| validate_uniform(p).map(|a| a.admissible).unwrap_or(false))
}

fn field(grid: Grid, max: f64) -> impl Strategy<Value = ScalarField> {
    prop::collection::vec(0.0..max, grid.len()).prop_map(move |values| ScalarField { grid, values })
}

fn signed_field(grid: Grid) -> impl Strategy<Value = ScalarField> {
    prop::collection::vec(-1.0..1.0f64, grid.len()).prop_map(move |values| ScalarField { grid, values })
}

fn state(grid: Grid, n: usize, max: f64) -> impl Strategy<Value = FieldSet> {
    (field(grid, max), prop::collection::vec(field(grid, max), n)).prop_map(|(u, w)| FieldSet { u, w, params_hash: 0 })
}

fn grids() -> impl Strategy<Value = Grid> {
    prop_oneof![
        (0.5..5.0f64, 5usize..60).prop_map(|(l, n)| Grid::interval(l, n).unwrap()),
        (0.5..3.0f64, 0.5..3.0f64, 3usize..12, 3usize..12)
            .prop_map(|(lx, ly, nx, ny)| Grid::rectangle(lx, ly, nx, ny).unwrap()),
    ]
}

fn permute_params(p: &ModelParams, perm: &[usize]) -> ModelParams {
    let pick = |v: &Vec<f64>| perm.iter().map(|&k| v[k]).collect::<Vec<_>>();
    ModelParams {
        diffusion: pick(&p.diffusion),
        mortality: pick(&p.mortality),
        conversion: pick(&p.conversion),
        interaction: perm.iter().map(|&r| perm.iter().map(|&c| p.interaction[r][c]).collect()).collect(),
        ..p.clone()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reactions_are_linear_in_beta_and_lambda(
        p in params(3),
        u in 0.0..5.0f64,
        w in prop::collection::vec(0.0..5.0f64, 3),
        b in prop::array::uniform3(0.0..1e4f64),
    ) {
        for i in 0..3 {
            let f = |beta: f64| reaction_w(i, u, &w, &p.with_competition(beta)).unwrap();
            let slope = (f(b[1]) - f(b[0])) / (b[1] - b[0]);
            let predicted = f(b[0]) + slope * (b[2] - b[0]);
            let scale = 1.0 + f(b[2]).abs() + (slope * (b[2] - b[0])).abs();
            prop_assert!((f(b[2]) - predicted).abs() <= 1e-9 * scale);
        }
        let g = |lambda: f64| reaction_u(u, &w, &ModelParams { prey_growth: lambda, ..p.clone() });
        let (l0, l1, l2) = (0.5, 1.5, 4.0);
        let predicted = g(l0) + (g(l1) - g(l0)) / (l1 - l0) * (l2 - l0);
        prop_assert!((g(l2) - predicted).abs() <= 1e-12 * (1.0 + g(l2).abs() + u * l2));
    }

    #[test]
    fn constant_states_respect_their_bounds(p in params(4)) {
        for i in 0..4 {
            let (u, w) = constant_single_species_state(&p, i).unwrap().expect("admissible");
            prop_assert!(u > 0.0 && u <= p.prey_growth / p.prey_limitation);
            prop_assert!(w > p.delta / p.conversion[i].powi(2));
        }
    }

    #[test]
    fn weyl_bound_is_monotone(r in 0.0..50.0f64, dr in 0.0..10.0f64, m in 0.1..20.0f64, dm in 0.0..5.0f64, dim in 1usize..=2) {
        let f = |r: f64, m: f64| nhat_from_ratio(r, m, dim, NhatMode::Weyl).unwrap();
        prop_assert!(f(r + dr, m) >= f(r, m));
        prop_assert!(f(r, m + dm) >= f(r, m));
    }

    #[test]
    fn swapping_groups_permutes_reactions(
        p in params(3),
        u in 0.0..5.0f64,
        w in prop::collection::vec(0.0..5.0f64, 3),
        perm in Just(vec![0usize, 1, 2]).prop_shuffle(),
    ) {
        let q = permute_params(&p, &perm);
        let wq: Vec<f64> = perm.iter().map(|&k| w[k]).collect();
        for (i, &k) in perm.iter().enumerate() {
            let a = reaction_w(i, u, &wq, &q).unwrap();
            let b = reaction_w(k, u, &w, &p).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn neumann_laplacian_conserves_mass(f in grids().prop_flat_map(signed_field)) {
        let total = integrate(&laplacian_neumann(&f, 1.0));
        prop_assert!(total.abs() <= 1e-10 * f.sup_norm().max(1.0), "{total}");
    }

    #[test]
    fn neumann_laplacian_is_linear(
        (f, g) in grids().prop_flat_map(|gr| (signed_field(gr), signed_field(gr))),
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
    ) {
        let combo = ScalarField::from_fn(f.grid, |_| 0.0);
        let combo = ScalarField { values: f.values.iter().zip(&g.values).map(|(x, y)| a * x + b * y).collect(), ..combo };
        let lhs = laplacian_neumann(&combo, 1.0);
        let (lf, lg) = (laplacian_neumann(&f, 1.0), laplacian_neumann(&g, 1.0));
        let scale = lf.sup_norm() + lg.sup_norm() + 1.0;
        for p in 0..lhs.values.len() {
            prop_assert!((lhs.values[p] - (a * lf.values[p] + b * lg.values[p])).abs() <= 1e-12 * scale * (a.abs() + b.abs() + 1.0));
        }
    }

    #[test]
    fn lambda1_grows_when_the_set_shrinks(
        (grid, outer, inner) in grids().prop_flat_map(|g| {
            let n = g.len();
            (Just(g), prop::collection::vec(prop::bool::weighted(0.8), n), prop::collection::vec(prop::bool::weighted(0.7), n))
        }),
    ) {
        let big = SupportMask::from_fn(grid, |p| outer[p]);
        let small = SupportMask::from_fn(grid, |p| outer[p] && inner[p]);
        prop_assume!(!small.is_empty());
        let (lb, ls) = (lambda1_restricted(&big).unwrap(), lambda1_restricted(&small).unwrap());
        prop_assert!(ls >= lb * (1.0 - 1e-6) - 1e-9, "{ls} < {lb}");
    }

    #[test]
    fn imex_step_preserves_nonnegativity(
        (s, p) in (0usize..3).prop_flat_map(|extra| {
            let g = Grid::interval(1.0, 31).unwrap();
            (state(g, extra + 1, 5.0), params(extra + 1))
        }),
        zero_mask in prop::collection::vec(any::<bool>(), 31),
        beta in prop_oneof![Just(0.0), Just(1e6), 0.0..1e6f64],
        tau in prop_oneof![Just(0.1), 1e-3..10.0f64],
    ) {
        let mut s = s;
        for f in s.w.iter_mut() {
            for (v, z) in f.values.iter_mut().zip(&zero_mask) {
                if *z { *v = 0.0; }
            }
        }
        let next = imex_step(&s, &p.with_competition(beta), tau).unwrap();
        prop_assert!(next.min_value() >= 0.0);
    }

    #[test]
    fn overlaps_are_symmetric_and_nonnegative(
        (s, p) in (1usize..5).prop_flat_map(|n| (state(Grid::rectangle(1.0, 1.0, 7, 9).unwrap(), n, 3.0), params(n))),
    ) {
        let r = segregation_report(&s, &p);
        for i in 0..s.n_groups() {
            for j in 0..s.n_groups() {
                prop_assert_eq!(r.overlap[i][j], r.overlap[j][i]);
                prop_assert!(r.overlap[i][j] >= 0.0);
            }
        }
    }

    #[test]
    fn holder_seminorm_scales_with_the_field(
        f in grids().prop_flat_map(signed_field),
        k in -4i32..4,
        neg in any::<bool>(),
        c in -10.0..10.0f64,
    ) {
        let pairs = 400;
        let base = holder_seminorm(&f, 0.5, pairs).unwrap();
        let scaled = |c: f64| ScalarField { grid: f.grid, values: f.values.iter().map(|v| c * v).collect() };
        let pow2 = if neg { -(2f64.powi(k)) } else { 2f64.powi(k) };
        prop_assert_eq!(holder_seminorm(&scaled(pow2), 0.5, pairs).unwrap(), pow2.abs() * base);
        let general = holder_seminorm(&scaled(c), 0.5, pairs).unwrap();
        prop_assert!((general - c.abs() * base).abs() <= 1e-12 * (1.0 + c.abs() * base));
    }

    #[test]
    fn support_measure_is_monotone_in_threshold(
        s in state(Grid::interval(2.0, 41).unwrap(), 3, 1.0),
        t1 in 1e-3..1.0f64,
        t2 in 1e-3..1.0f64,
    ) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let a = support_and_nodal(&s, lo).unwrap();
        let b = support_and_nodal(&s, hi).unwrap();
        for i in 0..3 {
            prop_assert!(b.measures[i] <= a.measures[i]);
        }
        prop_assert!(b.nodal_measure >= a.nodal_measure);
    }

    #[test]
    fn snapshots_round_trip_exactly(
        s in grids().prop_flat_map(|g| (1usize..4).prop_flat_map(move |n| state(g, n, 1e3))),
        tiny in 1e-310..1e-300f64,
        beta in 0.0..1e6f64,
        residual in 0.0..1.0f64,
        stamp in "[0-9]{1,10}",
    ) {
        let mut s = s;
        s.w[0].values[0] = tiny;
        let meta = SnapshotMeta { beta, residual, timestamp: stamp, params: None };
        let text = snapshot_to_string(&s, &meta).unwrap();
        let (back, m) = snapshot_from_str(&text).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(&m, &meta);
        prop_assert_eq!(snapshot_to_string(&back, &m).unwrap(), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn converged_states_obey_the_uniform_bounds(
        (init, p) in (1usize..4).prop_flat_map(|n| {
            let g = Grid::interval(1.0, 21).unwrap();
            params(n).prop_flat_map(move |p| {
                let cap = p.prey_growth / p.prey_limitation;
                (field(g, cap), prop::collection::vec(field(g, 2.0), n), Just(p))
            })
        }).prop_map(|(u, w, p)| (FieldSet { u, w, params_hash: 0 }, p)),
    ) {
        let settings = SolveSettings { tol_residual: 1e-7, tol_update: 1e-8, max_steps: 20_000, newton: true, ..SolveSettings::default() };
        let rep = solve_steady(&init, &p, &settings).unwrap();
        prop_assume!(rep.converged);
        let b = check_linf_bounds(&rep.state, &p);
        prop_assert!(b.u_max <= b.u_cap + 1e-6, "{} > {}", b.u_max, b.u_cap);
        prop_assert!(b.s_max <= b.s_cap * (1.0 + 1e-6));
        prop_assert!(b.u_min >= 0.0 && b.w_min >= 0.0);
    }

    #[test]
    fn small_steps_follow_the_residual(
        p in params(2),
        modes in prop::collection::vec(-0.15..0.15f64, 9),
    ) {
        let g = Grid::interval(1.0, 41).unwrap();
        let smooth = |k: usize, base: f64| ScalarField::from_fn(g, |x| {
            base + (0..3).map(|m| modes[k * 3 + m] * ((m + 1) as f64 * std::f64::consts::PI * x[0]).cos()).sum::<f64>()
        });
        let s = FieldSet { u: smooth(0, 0.5), w: vec![smooth(1, 0.5), smooth(2, 0.5)], params_hash: 0 };
        let res = residual_fields(&s, &p);
        let deviation = |tau: f64| {
            let next = imex_step(&s, &p, tau).unwrap();
            let mut worst: f64 = 0.0;
            let fields: Vec<(&ScalarField, &ScalarField)> =
                next.w.iter().zip(&s.w).chain(std::iter::once((&next.u, &s.u))).collect();
            for ((a, b), r) in fields.iter().zip(&res) {
                for q in 0..g.len() {
                    worst = worst.max(((a.values[q] - b.values[q]) / tau + r[q]).abs());
                }
            }
            worst
        };
        // steps small against the fastest local rate
        let a_max = p.interaction.iter().flatten().cloned().fold(0.0, f64::max);
        let d_max = p.diffusion.iter().cloned().fold(p.prey_diffusion, f64::max);
        let rate = 1.0 + p.competition * a_max * s.sup_norm() + 5.0 * s.sup_norm() + d_max * (3.0 * std::f64::consts::PI).powi(2);
        let (d2, d3, d4) = (deviation(1e-2 / rate), deviation(1e-3 / rate), deviation(1e-4 / rate));
        prop_assume!(d4 > 1e-9);
        for ratio in [d2 / d3, d3 / d4] {
            prop_assert!((5.0..20.0).contains(&ratio), "ratios {} {}", d2 / d3, d3 / d4);
        }
    }

    #[test]
    fn continuation_is_permutation_equivariant(
        (init, p) in (state(Grid::interval(2.0, 21).unwrap(), 3, 1.0), params(3)),
        perm in Just(vec![0usize, 1, 2]).prop_shuffle(),
    ) {
        let settings = SolveSettings { max_steps: 40, ..SolveSettings::default() };
        let a = continue_in_beta(&init, &p, &[1.0, 30.0], &settings, "a").unwrap();
        let b = continue_in_beta(&init.permuted(&perm), &permute_params(&p, &perm), &[1.0, 30.0], &settings, "b").unwrap();
        for (ra, rb) in a.reports.iter().zip(&b.reports) {
            let d = ra.state.permuted(&perm).distance(&rb.state);
            prop_assert!(d <= 1e-10 * (1.0 + ra.state.sup_norm()), "distance {d}");
        }
    }
}
