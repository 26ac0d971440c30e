mod common;

use common::{brute_force, random_lp, rel_close, DenseLp, Verdict};
use hetnet_core::lp::{solve, LpModel, LpStatus, RowKind};
use proptest::prelude::*;

fn verdict_of(lp: &DenseLp) -> Verdict {
    let sol = solve(&lp.to_model(), 1e-9).expect("solver should not fail on small LPs");
    match sol.status {
        LpStatus::Optimal => {
            assert!(lp.feasible_point(&sol.primal, 1e-7), "optimal point violates constraints");
            Verdict::Optimal(sol.objective)
        }
        LpStatus::Infeasible => Verdict::Infeasible,
        LpStatus::Unbounded => Verdict::Unbounded,
    }
}

fn agree(a: Verdict, b: Verdict) -> bool {
    match (a, b) {
        (Verdict::Optimal(x), Verdict::Optimal(y)) => rel_close(x, y, 1e-6),
        _ => a == b,
    }
}

#[test]
fn matches_vertex_enumeration_on_random_lps() {
    let mut kinds = [0usize; 3];
    for seed in 0..100 {
        let lp = random_lp(seed, 8, 8);
        let expected = brute_force(&lp);
        let got = verdict_of(&lp);
        assert!(agree(got, expected), "seed {seed}: solver {got:?}, enumeration {expected:?}");
        kinds[match expected {
            Verdict::Optimal(_) => 0,
            Verdict::Infeasible => 1,
            Verdict::Unbounded => 2,
        }] += 1;
    }
    // the generator must exercise every verdict
    assert!(kinds.iter().all(|&c| c > 0), "verdict mix {kinds:?}");
}

/// Dual of `min c x, rows, 0 <= x <= hi`, with finite upper bounds moved into rows:
/// `max b y` subject to `A' y <= c`, `y >= 0` on `>=` rows, `y <= 0` on `<=` rows.
fn dual_of(lp: &DenseLp) -> LpModel<usize> {
    let n = lp.n();
    let mut rows: Vec<(Vec<f64>, RowKind, f64)> =
        (0..lp.m()).map(|i| (lp.a[i].clone(), lp.kinds[i], lp.b[i])).collect();
    for j in 0..n {
        if lp.hi[j].is_finite() {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            rows.push((e, RowKind::Le, lp.hi[j]));
        }
    }
    let mut d = LpModel::new();
    for (i, (_, kind, b)) in rows.iter().enumerate() {
        let (lo, hi) = match kind {
            RowKind::Ge => (0.0, f64::INFINITY),
            RowKind::Le => (f64::NEG_INFINITY, 0.0),
            RowKind::Eq => (f64::NEG_INFINITY, f64::INFINITY),
        };
        d.add_column(i, -b, lo, hi);
    }
    for j in 0..n {
        let entries = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.0[j] != 0.0)
            .map(|(i, r)| (i, r.0[j]))
            .collect();
        d.add_row(RowKind::Le, lp.c[j], entries);
    }
    d
}

#[test]
fn strong_duality_on_random_feasible_lps() {
    let mut checked = 0;
    for seed in 1000..1200 {
        let lp = random_lp(seed, 8, 8);
        let Verdict::Optimal(primal) = brute_force(&lp) else { continue };
        let dual = solve(&dual_of(&lp), 1e-9).unwrap();
        assert_eq!(dual.status, LpStatus::Optimal, "seed {seed}");
        // the dual was posed as a minimization of -b y
        assert!(rel_close(primal, -dual.objective, 1e-6), "seed {seed}: {primal} vs {}", -dual.objective);
        checked += 1;
    }
    assert!(checked >= 50, "only {checked} bounded instances");
}

fn permuted(lp: &DenseLp, rows: &[usize], cols: &[usize]) -> DenseLp {
    DenseLp {
        c: cols.iter().map(|&j| lp.c[j]).collect(),
        a: rows.iter().map(|&i| cols.iter().map(|&j| lp.a[i][j]).collect()).collect(),
        kinds: rows.iter().map(|&i| lp.kinds[i]).collect(),
        b: rows.iter().map(|&i| lp.b[i]).collect(),
        hi: cols.iter().map(|&j| lp.hi[j]).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn objective_invariant_under_permutation(seed in 0u64..10_000, shift in 0usize..8, flip in any::<bool>()) {
        let lp = random_lp(seed, 8, 8);
        let mut rows: Vec<usize> = (0..lp.m()).collect();
        let mut cols: Vec<usize> = (0..lp.n()).collect();
        rows.rotate_left(shift % lp.m());
        cols.rotate_left(shift % lp.n());
        if flip {
            rows.reverse();
        } else {
            cols.reverse();
        }
        let a = verdict_of(&lp);
        let b = verdict_of(&permuted(&lp, &rows, &cols));
        prop_assert!(agree(a, b), "{:?} vs {:?}", a, b);
    }

    #[test]
    fn optimal_solutions_are_vertices(seed in 0u64..10_000) {
        let lp = random_lp(seed, 8, 8);
        let sol = solve(&lp.to_model(), 1e-9).unwrap();
        if sol.status == LpStatus::Optimal {
            let between = (0..lp.n())
                .filter(|&j| sol.primal[j] > 1e-9 && sol.primal[j] < lp.hi[j] - 1e-9)
                .count();
            prop_assert!(between <= lp.m(), "{} interior values with {} rows", between, lp.m());
        }
    }

    #[test]
    fn deterministic(seed in 0u64..10_000) {
        let lp = random_lp(seed, 8, 8).to_model();
        let a = solve(&lp, 1e-9).unwrap();
        let b = solve(&lp, 1e-9).unwrap();
        prop_assert_eq!(a.primal, b.primal);
        prop_assert_eq!(a.iterations, b.iterations);
    }
}

#[test]
fn larger_sparse_lp_matches_its_dual() {
    // transportation problem: 6 supplies, 8 demands
    let supply = [20.0, 35.0, 15.0, 40.0, 25.0, 30.0];
    let demand = [10.0, 25.0, 15.0, 20.0, 30.0, 15.0, 20.0, 10.0];
    let mut m = LpModel::new();
    let mut cols = Vec::new();
    for (s, _) in supply.iter().enumerate() {
        for d in 0..demand.len() {
            let cost = ((s * 7 + d * 3) % 11) as f64 + 1.0;
            cols.push(m.add_column((s, d), cost, 0.0, f64::INFINITY));
        }
    }
    for (s, &cap) in supply.iter().enumerate() {
        m.add_row(RowKind::Le, cap, (0..demand.len()).map(|d| (cols[s * demand.len() + d], 1.0)).collect());
    }
    for (d, &need) in demand.iter().enumerate() {
        m.add_row(RowKind::Ge, need, (0..supply.len()).map(|s| (cols[s * demand.len() + d], 1.0)).collect());
    }
    let sol = solve(&m, 1e-9).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    assert!(m.max_violation(&sol.primal) < 1e-9);
    let shipped: f64 = sol.primal.iter().sum();
    assert!((shipped - demand.iter().sum::<f64>()).abs() < 1e-9);
}

