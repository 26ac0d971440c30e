//! Bounded-variable primal revised simplex with a composite phase one,
//! Harris ratio test and a Bland's-rule fallback on degenerate streaks.

use super::factor::{Csc, Factor, NONE};
use super::{Basis, LpError, LpModel, LpSolution, LpStatus, RowKind, SolveOptions, VarStatus};

const REFACTOR_EVERY: usize = 100;
const SNAP_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic,
    Lower,
    Upper,
    Free,
}

/// Scaled problem over `n` structural and `m` logical variables with the
/// equality system `A x - s = 0`.
struct Prepared {
    m: usize,
    n: usize,
    a: Csc,
    cost: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    col_scale: Vec<f64>,
}

fn pow2(x: f64) -> f64 {
    if !x.is_finite() || x <= 0.0 {
        1.0
    } else {
        2f64.powi(x.log2().round() as i32)
    }
}

impl Prepared {
    fn new<L>(model: &LpModel<L>, scaling: bool) -> Self {
        let m = model.num_rows();
        let n = model.num_cols();
        let mut counts = vec![0usize; n + 1];
        for row in model.rows() {
            for &(j, a) in &row.entries {
                if a != 0.0 {
                    counts[j + 1] += 1;
                }
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let start = counts.clone();
        let nnz = start[n];
        let mut idx = vec![0usize; nnz];
        let mut val = vec![0.0; nnz];
        let mut fill = start.clone();
        for (i, row) in model.rows().iter().enumerate() {
            for &(j, a) in &row.entries {
                if a != 0.0 {
                    idx[fill[j]] = i;
                    val[fill[j]] = a;
                    fill[j] += 1;
                }
            }
        }
        let mut a = Csc { start, idx, val };

        let mut row_scale = vec![1.0; m];
        let mut col_scale = vec![1.0; n];
        if scaling && nnz > 0 {
            for _ in 0..4 {
                let mut rmin = vec![f64::INFINITY; m];
                let mut rmax = vec![0.0f64; m];
                for j in 0..n {
                    let (ri, rv) = a.col(j);
                    for (&i, &v) in ri.iter().zip(rv) {
                        let x = v.abs() * col_scale[j];
                        rmin[i] = rmin[i].min(x);
                        rmax[i] = rmax[i].max(x);
                    }
                }
                for i in 0..m {
                    if rmax[i] > 0.0 {
                        row_scale[i] = 1.0 / (rmin[i] * rmax[i]).sqrt();
                    }
                }
                for j in 0..n {
                    let (ri, rv) = a.col(j);
                    let mut cmin = f64::INFINITY;
                    let mut cmax = 0.0f64;
                    for (&i, &v) in ri.iter().zip(rv) {
                        let x = v.abs() * row_scale[i];
                        cmin = cmin.min(x);
                        cmax = cmax.max(x);
                    }
                    if cmax > 0.0 {
                        col_scale[j] = 1.0 / (cmin * cmax).sqrt();
                    }
                }
            }
            row_scale.iter_mut().for_each(|r| *r = pow2(*r));
            col_scale.iter_mut().for_each(|s| *s = pow2(*s));
            for j in 0..n {
                for k in a.start[j]..a.start[j + 1] {
                    a.val[k] *= row_scale[a.idx[k]] * col_scale[j];
                }
            }
        }

        let mut cost = vec![0.0; n + m];
        let mut lo = vec![0.0; n + m];
        let mut hi = vec![0.0; n + m];
        for j in 0..n {
            let (l, h) = model.bounds(j);
            cost[j] = model.objective()[j] * col_scale[j];
            lo[j] = l / col_scale[j];
            hi[j] = h / col_scale[j];
        }
        for (i, row) in model.rows().iter().enumerate() {
            let b = row.rhs * row_scale[i];
            let (l, h) = match row.kind {
                RowKind::Le => (f64::NEG_INFINITY, b),
                RowKind::Ge => (b, f64::INFINITY),
                RowKind::Eq => (b, b),
            };
            lo[n + i] = l;
            hi[n + i] = h;
        }
        Prepared {
            m,
            n,
            a,
            cost,
            lo,
            hi,
            col_scale,
        }
    }
}

struct Simplex<'a> {
    p: &'a Prepared,
    opts: &'a SolveOptions,
    x: Vec<f64>,
    state: Vec<State>,
    head: Vec<usize>,
    factor: Factor,
    iterations: usize,
}

enum Step {
    Flip,
    Pivot { pos: usize, theta: f64, to_upper: bool },
    Unbounded,
}

fn resting_state(lo: f64, hi: f64, near: f64) -> (State, f64) {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => {
            if (near - lo).abs() <= (hi - near).abs() {
                (State::Lower, lo)
            } else {
                (State::Upper, hi)
            }
        }
        (true, false) => (State::Lower, lo),
        (false, true) => (State::Upper, hi),
        (false, false) => (State::Free, 0.0),
    }
}

impl<'a> Simplex<'a> {
    fn new(p: &'a Prepared, opts: &'a SolveOptions) -> Result<Self, LpError> {
        let (m, n) = (p.m, p.n);
        let mut x = vec![0.0; n + m];
        let mut state = vec![State::Basic; n + m];
        let mut head: Vec<usize> = (n..n + m).collect();

        let warm = opts
            .warm_start
            .as_ref()
            .filter(|b| b.cols.len() == n && b.rows.len() == m)
            .filter(|b| {
                b.cols.iter().chain(&b.rows).filter(|s| **s == VarStatus::Basic).count() == m
            });
        match warm {
            Some(b) => {
                head.clear();
                for (j, s) in b.cols.iter().chain(&b.rows).enumerate() {
                    let (lo, hi) = (p.lo[j], p.hi[j]);
                    let (st, v) = match s {
                        VarStatus::Basic => {
                            head.push(j);
                            (State::Basic, 0.0)
                        }
                        VarStatus::AtLower if lo.is_finite() => (State::Lower, lo),
                        VarStatus::AtUpper if hi.is_finite() => (State::Upper, hi),
                        _ => resting_state(lo, hi, 0.0),
                    };
                    state[j] = st;
                    x[j] = v;
                }
            }
            None => {
                for j in 0..n {
                    let (st, v) = resting_state(p.lo[j], p.hi[j], f64::NEG_INFINITY);
                    state[j] = st;
                    x[j] = v;
                }
            }
        }
        let factor = Factor::factorize(0, n, &[], &p.a).map_err(|_| LpError::NumericalFailure {
            iterations: 0,
            reason: "empty factorization".into(),
        })?;
        let mut s = Simplex {
            p,
            opts,
            x,
            state,
            head,
            factor,
            iterations: 0,
        };
        s.refactor()?;
        Ok(s)
    }

    fn column_into(&self, j: usize, dense: &mut [f64]) {
        dense.iter_mut().for_each(|v| *v = 0.0);
        if j >= self.p.n {
            dense[j - self.p.n] = -1.0;
        } else {
            let (idx, val) = self.p.a.col(j);
            for (&i, &v) in idx.iter().zip(val) {
                dense[i] = v;
            }
        }
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let (m, n) = (self.p.m, self.p.n);
        for _ in 0..=m {
            match Factor::factorize(m, n, &self.head, &self.p.a) {
                Ok(f) => {
                    self.factor = f;
                    self.recompute_basics();
                    return Ok(());
                }
                Err(sing) => {
                    for (&pos, &row) in sing.dependent_positions.iter().zip(&sing.free_rows) {
                        let var = self.head[pos];
                        let (st, v) = resting_state(self.p.lo[var], self.p.hi[var], self.x[var]);
                        self.state[var] = st;
                        self.x[var] = v;
                        self.head[pos] = n + row;
                        self.state[n + row] = State::Basic;
                    }
                }
            }
        }
        Err(LpError::NumericalFailure {
            iterations: self.iterations,
            reason: "basis repair did not converge".into(),
        })
    }

    fn recompute_basics(&mut self) {
        let (m, n) = (self.p.m, self.p.n);
        let mut rhs = vec![0.0; m];
        for j in 0..n {
            if self.state[j] != State::Basic && self.x[j] != 0.0 {
                let (idx, val) = self.p.a.col(j);
                for (&i, &v) in idx.iter().zip(val) {
                    rhs[i] -= v * self.x[j];
                }
            }
        }
        for i in 0..m {
            if self.state[n + i] != State::Basic {
                rhs[i] += self.x[n + i];
            }
        }
        let xb = self.factor.ftran(&rhs, &self.p.a);
        for (pos, &var) in self.head.iter().enumerate() {
            self.x[var] = xb[pos];
        }
    }

    fn run(&mut self) -> Result<LpStatus, LpError> {
        let (m, n) = (self.p.m, self.p.n);
        let cap = self.opts.max_iterations.unwrap_or(50 * (m + n).max(1));
        let ftol = self.opts.feasibility_tol;
        let otol = self.opts.optimality_tol;
        let mut cb = vec![0.0; m];
        let mut col = vec![0.0; m];
        let mut degenerate = 0usize;
        loop {
            if self.factor.num_updates() >= REFACTOR_EVERY {
                self.refactor()?;
            }
            let mut infeasible = false;
            for (pos, &j) in self.head.iter().enumerate() {
                let v = self.x[j];
                cb[pos] = if v < self.p.lo[j] - ftol {
                    infeasible = true;
                    -1.0
                } else if v > self.p.hi[j] + ftol {
                    infeasible = true;
                    1.0
                } else {
                    0.0
                };
            }
            if !infeasible {
                if self.opts.phase_one_only {
                    return Ok(LpStatus::Optimal);
                }
                for (pos, &j) in self.head.iter().enumerate() {
                    cb[pos] = self.p.cost[j];
                }
            }
            let pi = self.factor.btran(&cb, &self.p.a);

            let bland = degenerate >= self.opts.degenerate_streak;
            let mut entering = NONE;
            let mut entering_d = 0.0;
            let mut best = 0.0;
            for j in 0..n + m {
                let st = self.state[j];
                if st == State::Basic || self.p.lo[j] == self.p.hi[j] {
                    continue;
                }
                let cj = if infeasible { 0.0 } else { self.p.cost[j] };
                let (d, mag) = if j < n {
                    let (idx, val) = self.p.a.col(j);
                    let mut dot = 0.0;
                    let mut mag = 0.0;
                    for (&i, &v) in idx.iter().zip(val) {
                        let t = pi[i] * v;
                        dot += t;
                        mag += t.abs();
                    }
                    (cj - dot, mag)
                } else {
                    (cj + pi[j - n], pi[j - n].abs())
                };
                let tol = otol + 1e-13 * mag;
                let eligible = match st {
                    State::Lower => d < -tol,
                    State::Upper => d > tol,
                    State::Free => d.abs() > tol,
                    State::Basic => false,
                };
                if !eligible {
                    continue;
                }
                if bland {
                    entering = j;
                    entering_d = d;
                    break;
                }
                if d.abs() > best {
                    best = d.abs();
                    entering = j;
                    entering_d = d;
                }
            }

            if entering == NONE {
                if self.factor.num_updates() > 0 {
                    // Confirm the verdict on a fresh factorization.
                    self.refactor()?;
                    continue;
                }
                return Ok(if infeasible {
                    LpStatus::Infeasible
                } else {
                    LpStatus::Optimal
                });
            }

            self.iterations += 1;
            if self.iterations > cap {
                return Err(LpError::NumericalFailure {
                    iterations: self.iterations,
                    reason: format!(
                        "iteration cap {cap} reached ({m} rows, {n} cols, kernel {})",
                        self.factor.kernel_size()
                    ),
                });
            }

            let q = entering;
            self.column_into(q, &mut col);
            let alpha = self.factor.ftran(&col, &self.p.a);
            let dir = if entering_d < 0.0 { 1.0 } else { -1.0 };
            let step = self.ratio_test(q, dir, &alpha, bland);
            match step {
                Step::Unbounded => {
                    if infeasible {
                        return Err(LpError::NumericalFailure {
                            iterations: self.iterations,
                            reason: "unbounded phase-one direction".into(),
                        });
                    }
                    return Ok(LpStatus::Unbounded);
                }
                Step::Flip => {
                    let range = self.p.hi[q] - self.p.lo[q];
                    for (pos, &j) in self.head.iter().enumerate() {
                        self.x[j] -= dir * alpha[pos] * range;
                    }
                    if self.state[q] == State::Lower {
                        self.state[q] = State::Upper;
                        self.x[q] = self.p.hi[q];
                    } else {
                        self.state[q] = State::Lower;
                        self.x[q] = self.p.lo[q];
                    }
                    degenerate = 0;
                }
                Step::Pivot { pos, theta, to_upper } => {
                    if theta > 1e-12 {
                        degenerate = 0;
                    } else {
                        degenerate += 1;
                    }
                    self.x[q] += dir * theta;
                    for (p, &j) in self.head.iter().enumerate() {
                        self.x[j] -= dir * alpha[p] * theta;
                    }
                    let leaving = self.head[pos];
                    if to_upper {
                        self.state[leaving] = State::Upper;
                        self.x[leaving] = self.p.hi[leaving];
                    } else {
                        self.state[leaving] = State::Lower;
                        self.x[leaving] = self.p.lo[leaving];
                    }
                    self.head[pos] = q;
                    self.state[q] = State::Basic;
                    self.factor.update(pos, &alpha);
                }
            }
        }
    }

    /// Chooses the blocking basic variable for entering column `q` moving in
    /// direction `dir`.
    fn ratio_test(&self, q: usize, dir: f64, alpha: &[f64], bland: bool) -> Step {
        let ftol = self.opts.feasibility_tol;
        let ptol = self.opts.pivot_tol;
        let range = self.p.hi[q] - self.p.lo[q];

        // (position, distance to the blocking bound, rate, lands on upper)
        let mut cands: Vec<(usize, f64, f64, bool)> = Vec::new();
        for (pos, &j) in self.head.iter().enumerate() {
            let a = alpha[pos];
            if a.abs() <= ptol {
                continue;
            }
            let delta = -dir * a;
            let v = self.x[j];
            let (lo, hi) = (self.p.lo[j], self.p.hi[j]);
            if delta < 0.0 {
                let (bound, upper) = if v > hi + ftol {
                    (hi, true)
                } else if v < lo - ftol {
                    continue;
                } else {
                    (lo, false)
                };
                if !bound.is_finite() {
                    continue;
                }
                cands.push((pos, v - bound, -delta, upper));
            } else {
                let (bound, upper) = if v < lo - ftol {
                    (lo, false)
                } else if v > hi + ftol {
                    continue;
                } else {
                    (hi, true)
                };
                if !bound.is_finite() {
                    continue;
                }
                cands.push((pos, bound - v, delta, upper));
            }
        }

        if bland {
            let mut best: Option<(usize, f64, bool)> = None;
            for &(pos, dist, rate, upper) in &cands {
                let t = dist.max(0.0) / rate;
                let better = match best {
                    None => true,
                    Some((bp, bt, _)) => {
                        t < bt - 1e-12 || (t <= bt + 1e-12 && self.head[pos] < self.head[bp])
                    }
                };
                if better {
                    best = Some((pos, t, upper));
                }
            }
            return match best {
                Some((_, t, _)) if range.is_finite() && range <= t => Step::Flip,
                Some((pos, theta, to_upper)) => Step::Pivot {
                    pos,
                    theta,
                    to_upper,
                },
                None if range.is_finite() => Step::Flip,
                None => Step::Unbounded,
            };
        }

        let mut theta_max = f64::INFINITY;
        for &(_, dist, rate, _) in &cands {
            theta_max = theta_max.min((dist + ftol) / rate);
        }
        if range.is_finite() && range <= theta_max {
            return Step::Flip;
        }
        if theta_max == f64::INFINITY {
            return Step::Unbounded;
        }
        let mut choice: Option<(usize, f64, bool)> = None;
        let mut best_alpha = 0.0;
        for &(pos, dist, rate, upper) in &cands {
            let t = dist.max(0.0) / rate;
            if t <= theta_max && alpha[pos].abs() > best_alpha {
                best_alpha = alpha[pos].abs();
                choice = Some((pos, t, upper));
            }
        }
        let (pos, theta, to_upper) = choice.expect("a candidate attains theta_max");
        Step::Pivot {
            pos,
            theta,
            to_upper,
        }
    }
}

fn public_status(s: State) -> VarStatus {
    match s {
        State::Basic => VarStatus::Basic,
        State::Lower => VarStatus::AtLower,
        State::Upper => VarStatus::AtUpper,
        State::Free => VarStatus::Free,
    }
}

pub(super) fn run<L>(model: &LpModel<L>, opts: &SolveOptions) -> Result<LpSolution, LpError> {
    let prep = Prepared::new(model, opts.scaling);
    let mut sx = Simplex::new(&prep, opts)?;
    let status = sx.run()?;
    let n = prep.n;
    let mut primal = Vec::with_capacity(n);
    for j in 0..n {
        let mut v = sx.x[j];
        let (lo, hi) = (prep.lo[j], prep.hi[j]);
        if lo.is_finite() && (v - lo).abs() <= SNAP_TOL * lo.abs().max(1.0) {
            v = lo;
        } else if hi.is_finite() && (v - hi).abs() <= SNAP_TOL * hi.abs().max(1.0) {
            v = hi;
        }
        primal.push(v * prep.col_scale[j]);
    }
    let objective = match status {
        LpStatus::Optimal => model.evaluate(&primal),
        LpStatus::Infeasible => f64::NAN,
        LpStatus::Unbounded => f64::NEG_INFINITY,
    };
    let basis = Basis {
        cols: sx.state[..n].iter().map(|&s| public_status(s)).collect(),
        rows: sx.state[n..].iter().map(|&s| public_status(s)).collect(),
    };
    Ok(LpSolution {
        status,
        primal,
        objective,
        basis,
        iterations: sx.iterations,
    })
}
