//! Basis factorization for the revised simplex.
//!
//! The constraint matrix is `[A | -I]` (structural columns followed by one
//! logical per row). Basic logicals are unit columns, so only the block of
//! basic structural columns restricted to rows whose logical is nonbasic (the
//! "kernel") needs a real factorization. The kernel is factored densely with
//! partial pivoting; subsequent basis changes are applied as product-form
//! eta vectors until the next refactorization.

pub(crate) const NONE: usize = usize::MAX;

/// Column-compressed sparse matrix.
#[derive(Debug, Clone)]
pub(crate) struct Csc {
    pub start: Vec<usize>,
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

impl Csc {
    #[inline]
    pub fn col(&self, j: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.start[j], self.start[j + 1]);
        (&self.idx[s..e], &self.val[s..e])
    }
}

#[derive(Debug, Clone)]
struct Eta {
    pos: usize,
    pivot: f64,
    others: Vec<(usize, f64)>,
}

/// Kernel columns that turned out linearly dependent, paired with kernel
/// rows left without a pivot. The caller swaps each dependent column for the
/// logical of a free row and refactors.
#[derive(Debug)]
pub(crate) struct Singular {
    pub dependent_positions: Vec<usize>,
    pub free_rows: Vec<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct Factor {
    m: usize,
    /// (basis position, row) of every basic logical.
    logicals: Vec<(usize, usize)>,
    /// Basis positions of kernel columns, in kernel column order.
    kcols: Vec<usize>,
    /// Structural variable index of each kernel column.
    kvars: Vec<usize>,
    krows: Vec<usize>,
    row_k: Vec<usize>,
    r: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    etas: Vec<Eta>,
    scratch: Vec<f64>,
}

const SINGULAR_TOL: f64 = 1e-11;

impl Factor {
    pub fn factorize(m: usize, n: usize, head: &[usize], a: &Csc) -> Result<Factor, Singular> {
        let mut logicals = Vec::new();
        let mut kcols = Vec::new();
        let mut kvars = Vec::new();
        let mut row_k = vec![NONE; m];
        let mut is_logical_row = vec![false; m];
        for (p, &var) in head.iter().enumerate() {
            if var >= n {
                logicals.push((p, var - n));
                is_logical_row[var - n] = true;
            } else {
                kcols.push(p);
                kvars.push(var);
            }
        }
        let krows: Vec<usize> = (0..m).filter(|&i| !is_logical_row[i]).collect();
        debug_assert_eq!(krows.len(), kcols.len());
        for (k, &i) in krows.iter().enumerate() {
            row_k[i] = k;
        }
        let r = krows.len();
        let mut lu = vec![0.0; r * r];
        for (t, &var) in kvars.iter().enumerate() {
            let (idx, val) = a.col(var);
            for (&i, &v) in idx.iter().zip(val) {
                let k = row_k[i];
                if k != NONE {
                    lu[k * r + t] = v;
                }
            }
        }

        let mut perm: Vec<usize> = (0..r).collect();
        let mut dependent = Vec::new();
        let mut pivots = 0usize;
        for t in 0..r {
            let mut best = pivots;
            let mut best_abs = 0.0;
            for i in pivots..r {
                let v = lu[i * r + t].abs();
                if v > best_abs {
                    best_abs = v;
                    best = i;
                }
            }
            if best_abs < SINGULAR_TOL {
                dependent.push(t);
                continue;
            }
            if best != pivots {
                for c in 0..r {
                    lu.swap(best * r + c, pivots * r + c);
                }
                perm.swap(best, pivots);
            }
            let piv = lu[pivots * r + t];
            for i in pivots + 1..r {
                let f = lu[i * r + t];
                if f == 0.0 {
                    continue;
                }
                let f = f / piv;
                lu[i * r + t] = f;
                let (upper, lower) = lu.split_at_mut(i * r);
                let prow = &upper[pivots * r..pivots * r + r];
                let irow = &mut lower[..r];
                for c in t + 1..r {
                    irow[c] -= f * prow[c];
                }
            }
            pivots += 1;
        }
        if !dependent.is_empty() {
            let free_rows = perm[pivots..].iter().map(|&k| krows[k]).collect();
            return Err(Singular {
                dependent_positions: dependent.iter().map(|&t| kcols[t]).collect(),
                free_rows,
            });
        }
        Ok(Factor {
            m,
            logicals,
            kcols,
            kvars,
            krows,
            row_k,
            r,
            lu,
            perm,
            etas: Vec::new(),
            scratch: vec![0.0; m],
        })
    }

    pub fn num_updates(&self) -> usize {
        self.etas.len()
    }

    pub fn kernel_size(&self) -> usize {
        self.r
    }

    /// Solves `K u = b` in place (`b` in kernel row order, `u` in kernel column order).
    fn kernel_solve(&self, b: &mut [f64]) {
        let r = self.r;
        let mut c: Vec<f64> = self.perm.iter().map(|&k| b[k]).collect();
        for k in 0..r {
            let ck = c[k];
            if ck == 0.0 {
                continue;
            }
            for i in k + 1..r {
                let l = self.lu[i * r + k];
                if l != 0.0 {
                    c[i] -= l * ck;
                }
            }
        }
        for i in (0..r).rev() {
            let row = &self.lu[i * r..i * r + r];
            let mut s = c[i];
            for k in i + 1..r {
                s -= row[k] * b[k];
            }
            b[i] = s / row[i];
        }
    }

    /// Solves `K' v = b` in place (`b` in kernel column order, `v` in kernel row order).
    fn kernel_solve_transposed(&self, b: &mut [f64]) {
        let r = self.r;
        let mut w = vec![0.0; r];
        for i in 0..r {
            let wi = (b[i]) / self.lu[i * r + i];
            w[i] = wi;
            if wi != 0.0 {
                let row = &self.lu[i * r..i * r + r];
                for k in i + 1..r {
                    b[k] -= row[k] * wi;
                }
            }
        }
        for i in (0..r).rev() {
            let wi = w[i];
            if wi != 0.0 {
                for k in 0..i {
                    let l = self.lu[i * r + k];
                    if l != 0.0 {
                        w[k] -= l * wi;
                    }
                }
            }
        }
        for i in 0..r {
            b[self.perm[i]] = w[i];
        }
    }

    /// `B d = a` for a dense right-hand side indexed by row; returns `d`
    /// indexed by basis position.
    pub fn ftran(&mut self, a: &[f64], csc: &Csc) -> Vec<f64> {
        let mut d = vec![0.0; self.m];
        let mut u: Vec<f64> = self.krows.iter().map(|&i| a[i]).collect();
        self.kernel_solve(&mut u);
        let acc = &mut self.scratch;
        for &(_, i) in &self.logicals {
            acc[i] = 0.0;
        }
        for (t, &var) in self.kvars.iter().enumerate() {
            d[self.kcols[t]] = u[t];
            let ut = u[t];
            if ut == 0.0 {
                continue;
            }
            let (idx, val) = csc.col(var);
            for (&i, &v) in idx.iter().zip(val) {
                if self.row_k[i] == NONE {
                    acc[i] += v * ut;
                }
            }
        }
        for &(p, i) in &self.logicals {
            d[p] = acc[i] - a[i];
        }
        for eta in &self.etas {
            let dr = d[eta.pos] / eta.pivot;
            d[eta.pos] = dr;
            if dr != 0.0 {
                for &(k, v) in &eta.others {
                    d[k] -= v * dr;
                }
            }
        }
        d
    }

    /// `B' pi = c` for `c` indexed by basis position; returns `pi` indexed by row.
    pub fn btran(&self, c: &[f64], csc: &Csc) -> Vec<f64> {
        let mut c = c.to_vec();
        for eta in self.etas.iter().rev() {
            let mut s = c[eta.pos];
            for &(k, v) in &eta.others {
                s -= v * c[k];
            }
            c[eta.pos] = s / eta.pivot;
        }
        let mut pi = vec![0.0; self.m];
        for &(p, i) in &self.logicals {
            pi[i] = -c[p];
        }
        let mut rhs = vec![0.0; self.r];
        for (t, &var) in self.kvars.iter().enumerate() {
            let mut s = c[self.kcols[t]];
            let (idx, val) = csc.col(var);
            for (&i, &v) in idx.iter().zip(val) {
                if self.row_k[i] == NONE {
                    s -= v * pi[i];
                }
            }
            rhs[t] = s;
        }
        self.kernel_solve_transposed(&mut rhs);
        for (k, &i) in self.krows.iter().enumerate() {
            pi[i] = rhs[k];
        }
        pi
    }

    /// Records the replacement of the variable at `pos` by a column whose
    /// FTRAN image is `alpha`.
    pub fn update(&mut self, pos: usize, alpha: &[f64]) {
        let others = alpha
            .iter()
            .enumerate()
            .filter(|&(k, v)| k != pos && v.abs() > 1e-14)
            .map(|(k, &v)| (k, v))
            .collect();
        self.etas.push(Eta {
            pos,
            pivot: alpha[pos],
            others,
        });
    }
}
