//! Helpers shared by the integration tests: a brute-force LP oracle and
//! small instance builders.
#![allow(dead_code)]

use hetnet_core::lp::{LpModel, RowKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense LP `min c x` over rows `a_i x (kind) b_i` and bounds `0 <= x <= hi`.
#[derive(Debug, Clone)]
pub struct DenseLp {
    pub c: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub kinds: Vec<RowKind>,
    pub b: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    Optimal(f64),
    Infeasible,
    Unbounded,
}

impl DenseLp {
    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn to_model(&self) -> LpModel<usize> {
        let mut m = LpModel::new();
        for j in 0..self.n() {
            m.add_column(j, self.c[j], 0.0, self.hi[j]);
        }
        for i in 0..self.m() {
            let entries = (0..self.n()).filter(|&j| self.a[i][j] != 0.0).map(|j| (j, self.a[i][j])).collect();
            m.add_row(self.kinds[i], self.b[i], entries);
        }
        m
    }

    pub fn feasible_point(&self, x: &[f64], tol: f64) -> bool {
        for j in 0..self.n() {
            if x[j] < -tol || x[j] > self.hi[j] + tol {
                return false;
            }
        }
        (0..self.m()).all(|i| {
            let ax: f64 = (0..self.n()).map(|j| self.a[i][j] * x[j]).sum();
            match self.kinds[i] {
                RowKind::Le => ax <= self.b[i] + tol,
                RowKind::Ge => ax >= self.b[i] - tol,
                RowKind::Eq => (ax - self.b[i]).abs() <= tol,
            }
        })
    }
}

/// Solves the square system `m u = r`; `None` when (numerically) singular.
fn solve_square(mut m: Vec<Vec<f64>>, mut r: Vec<f64>) -> Option<Vec<f64>> {
    let n = r.len();
    for c in 0..n {
        let p = (c..n).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs()))?;
        if m[p][c].abs() < 1e-9 {
            return None;
        }
        m.swap(p, c);
        r.swap(p, c);
        for i in 0..n {
            if i != c {
                let f = m[i][c] / m[c][c];
                if f != 0.0 {
                    for k in c..n {
                        m[i][k] -= f * m[c][k];
                    }
                    r[i] -= f * r[c];
                }
            }
        }
    }
    Some((0..n).map(|i| r[i] / m[i][i]).collect())
}

/// A hyperplane `coef . x = rhs` that may be active at a vertex.
struct Plane {
    coef: Vec<f64>,
    rhs: f64,
}

fn planes(lp: &DenseLp) -> Vec<Plane> {
    let n = lp.n();
    let mut out = Vec::new();
    for i in 0..lp.m() {
        out.push(Plane {
            coef: lp.a[i].clone(),
            rhs: lp.b[i],
        });
    }
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        out.push(Plane {
            coef: e.clone(),
            rhs: 0.0,
        });
        if lp.hi[j].is_finite() {
            out.push(Plane {
                coef: e,
                rhs: lp.hi[j],
            });
        }
    }
    out
}

fn combinations(pool: &[usize], k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(pool: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for t in start..pool.len() {
            if pool.len() - t < k - cur.len() {
                break;
            }
            cur.push(pool[t]);
            rec(pool, k, t + 1, cur, f);
            cur.pop();
        }
    }
    rec(pool, k, 0, &mut Vec::new(), f);
}

/// All vertices of the feasible polyhedron, by enumerating every choice of
/// `n` active constraints; equalities are enforced by the feasibility filter.
pub fn vertices(lp: &DenseLp, tol: f64) -> Vec<Vec<f64>> {
    let n = lp.n();
    let ps = planes(lp);
    let all: Vec<usize> = (0..ps.len()).collect();
    let mut out = Vec::new();
    combinations(&all, n, &mut |chosen| push_vertex(lp, &ps, chosen, tol, &mut out));
    out
}

fn push_vertex(lp: &DenseLp, ps: &[Plane], chosen: &[usize], tol: f64, out: &mut Vec<Vec<f64>>) {
    let m: Vec<Vec<f64>> = chosen.iter().map(|&p| ps[p].coef.clone()).collect();
    let r: Vec<f64> = chosen.iter().map(|&p| ps[p].rhs).collect();
    if let Some(x) = solve_square(m, r) {
        if lp.feasible_point(&x, tol) {
            out.push(x);
        }
    }
}

/// Ground-truth verdict by vertex enumeration. The polyhedron is pointed
/// (all variables are nonnegative), so it is nonempty iff it has a vertex,
/// and the LP is unbounded iff some recession direction `d` with
/// `sum d = 1` has negative cost.
pub fn brute_force(lp: &DenseLp) -> Verdict {
    let tol = 1e-7;
    let vs = vertices(lp, tol);
    if vs.is_empty() {
        return Verdict::Infeasible;
    }
    let n = lp.n();
    let mut cone = DenseLp {
        c: lp.c.clone(),
        a: lp.a.clone(),
        kinds: lp.kinds.clone(),
        b: vec![0.0; lp.m()],
        hi: lp.hi.iter().map(|h| if h.is_finite() { 0.0 } else { f64::INFINITY }).collect(),
    };
    cone.a.push(vec![1.0; n]);
    cone.kinds.push(RowKind::Eq);
    cone.b.push(1.0);
    let rays = vertices(&cone, tol);
    if rays.iter().any(|d| (0..n).map(|j| lp.c[j] * d[j]).sum::<f64>() < -1e-9) {
        return Verdict::Unbounded;
    }
    let best = vs
        .iter()
        .map(|x| (0..n).map(|j| lp.c[j] * x[j]).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    Verdict::Optimal(best)
}

/// Random LP with up to `max_n` variables and `max_m` rows. About two thirds
/// are built around a known feasible point.
pub fn random_lp(seed: u64, max_n: usize, max_m: usize) -> DenseLp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_n);
    let m = rng.random_range(1..=max_m);
    let small = |rng: &mut ChaCha8Rng| -> f64 {
        if rng.random_bool(0.25) {
            0.0
        } else {
            rng.random_range(-5..=5) as f64
        }
    };
    let c: Vec<f64> = (0..n).map(|_| small(&mut rng)).collect();
    let hi: Vec<f64> = (0..n)
        .map(|_| if rng.random_bool(0.4) { rng.random_range(1..=6) as f64 } else { f64::INFINITY })
        .collect();
    let anchored = rng.random_bool(0.67);
    let x0: Vec<f64> = (0..n)
        .map(|j| rng.random_range(0.0..hi[j].min(4.0)))
        .collect();
    let mut a = Vec::new();
    let mut kinds = Vec::new();
    let mut b = Vec::new();
    for _ in 0..m {
        let row: Vec<f64> = (0..n).map(|_| small(&mut rng)).collect();
        let kind = match rng.random_range(0..6) {
            0 => RowKind::Eq,
            1 | 2 => RowKind::Ge,
            _ => RowKind::Le,
        };
        let ax: f64 = (0..n).map(|j| row[j] * x0[j]).sum();
        let rhs = if anchored {
            let slack = rng.random_range(0..=3) as f64;
            match kind {
                RowKind::Le => ax + slack,
                RowKind::Ge => ax - slack,
                RowKind::Eq => ax,
            }
        } else {
            rng.random_range(-8..=8) as f64
        };
        a.push(row);
        kinds.push(kind);
        b.push(rhs);
    }
    DenseLp { c, a, kinds, b, hi }
}

/// Relative comparison used by the LP checks.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
