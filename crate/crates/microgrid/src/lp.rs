//! Bounded-variable dual simplex for the dispatch linear programs.
//!
//! The solver keeps an explicit dense basis inverse with product-form
//! updates and periodic refactorization. It starts from the all-logical
//! (identity) basis, which is dual feasible whenever every column with a
//! negative cost has a finite opposite bound to rest at; the dispatch
//! models only ever use nonnegative costs. Dual simplex is the natural
//! choice here because branch-and-bound re-solves after bound changes,
//! and bound changes preserve dual feasibility of the current basis.
//!
//! Row sense is encoded through the logical column's bounds: a `<=` row
//! gets a logical in [0, inf), `>=` gets (-inf, 0], `=` gets [0, 0].

use std::ops::Range;

/// Primal feasibility tolerance on variable bounds.
const FEAS_TOL: f64 = 1e-9;
/// Reduced-cost tolerance for the ratio test (Harris relaxation).
const DUAL_TOL: f64 = 1e-9;
/// Smallest acceptable pivot element.
const PIVOT_TOL: f64 = 1e-9;
/// Refactorize the basis inverse after this many product-form updates.
const REFACTOR_EVERY: usize = 128;
/// Consecutive degenerate pivots before falling back to Bland's rule.
const BLAND_AFTER: usize = 200;

const INF: f64 = f64::INFINITY;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// Iteration budget exhausted or the basis became numerically unusable.
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
}

/// Incremental LP description consumed by [`DualSimplex::new`].
#[derive(Debug, Clone, Default)]
pub struct LpBuilder {
    costs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<(Rel, f64, Vec<(usize, f64)>)>,
}

impl LpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_col(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        assert!(lower <= upper, "column bounds crossed: [{lower}, {upper}]");
        self.costs.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.costs.len() - 1
    }

    pub fn add_row(&mut self, rel: Rel, rhs: f64, terms: &[(usize, f64)]) -> usize {
        for &(col, _) in terms {
            assert!(col < self.costs.len(), "row references unknown column {col}");
        }
        self.rows.push((rel, rhs, terms.to_vec()));
        self.rows.len() - 1
    }

    pub fn num_cols(&self) -> usize {
        self.costs.len()
    }

    pub fn build(self) -> DualSimplex {
        DualSimplex::new(self)
    }
}

pub struct DualSimplex {
    n_struct: usize,
    m: usize,
    /// Structural columns, sparse.
    cols: Vec<Vec<(usize, f64)>>,
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    /// basis[r] = column occupying row r.
    basis: Vec<usize>,
    status: Vec<VarStatus>,
    x: Vec<f64>,
    /// Reduced costs, maintained across pivots, rebuilt on refactorization.
    d: Vec<f64>,
    /// Dense m*m basis inverse, row-major.
    binv: Vec<f64>,
    pivots_since_refactor: usize,
    degenerate_streak: usize,
    scratch_alpha: Vec<f64>,
    scratch_w: Vec<f64>,
    scratch_t: Vec<f64>,
}

impl DualSimplex {
    fn new(builder: LpBuilder) -> Self {
        let n_struct = builder.costs.len();
        let m = builder.rows.len();
        let n_total = n_struct + m;

        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_struct];
        let mut rhs = Vec::with_capacity(m);
        let mut cost = builder.costs;
        let mut lower = builder.lower;
        let mut upper = builder.upper;
        cost.resize(n_total, 0.0);
        for (r, (rel, b, terms)) in builder.rows.into_iter().enumerate() {
            rhs.push(b);
            for (col, coef) in terms {
                if coef != 0.0 {
                    cols[col].push((r, coef));
                }
            }
            let (lo, hi) = match rel {
                Rel::Le => (0.0, INF),
                Rel::Ge => (-INF, 0.0),
                Rel::Eq => (0.0, 0.0),
            };
            lower.push(lo);
            upper.push(hi);
        }

        let mut status = vec![VarStatus::AtLower; n_total];
        let mut x = vec![0.0; n_total];
        let d = cost.clone();
        for j in 0..n_struct {
            // Identity basis means reduced costs equal raw costs; rest each
            // column at the bound that keeps it dual feasible.
            let at_upper = if cost[j] >= 0.0 {
                !lower[j].is_finite()
            } else {
                upper[j].is_finite()
            };
            if at_upper {
                assert!(
                    upper[j].is_finite(),
                    "column {j} has negative cost and no finite bound"
                );
                status[j] = VarStatus::AtUpper;
                x[j] = upper[j];
            } else {
                assert!(lower[j].is_finite(), "column {j} is free");
                x[j] = lower[j];
            }
        }
        let mut basis = Vec::with_capacity(m);
        for i in 0..m {
            basis.push(n_struct + i);
            status[n_struct + i] = VarStatus::Basic;
        }
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }

        let mut solver = Self {
            n_struct,
            m,
            cols,
            cost,
            lower,
            upper,
            rhs,
            basis,
            status,
            x,
            d,
            binv,
            pivots_since_refactor: 0,
            degenerate_streak: 0,
            scratch_alpha: vec![0.0; n_total],
            scratch_w: vec![0.0; m],
            scratch_t: vec![0.0; m],
        };
        solver.recompute_basic_values();
        solver
    }

    pub fn num_rows(&self) -> usize {
        self.m
    }

    fn col_rows(&self, j: usize) -> &[(usize, f64)] {
        &self.cols[j]
    }

    fn binv_row(&self, r: usize) -> &[f64] {
        &self.binv[r * self.m..(r + 1) * self.m]
    }

    /// rho . a_j for one column (logical columns are unit vectors).
    fn row_dot_col(&self, rho: &[f64], j: usize) -> f64 {
        if j < self.n_struct {
            self.col_rows(j)
                .iter()
                .map(|&(row, val)| rho[row] * val)
                .sum()
        } else {
            rho[j - self.n_struct]
        }
    }

    /// w = binv . a_q.
    fn ftran(&mut self, q: usize) {
        let m = self.m;
        self.scratch_w[..m].iter_mut().for_each(|v| *v = 0.0);
        if q < self.n_struct {
            for &(row, val) in &self.cols[q] {
                for i in 0..m {
                    self.scratch_w[i] += self.binv[i * m + row] * val;
                }
            }
        } else {
            let row = q - self.n_struct;
            for i in 0..m {
                self.scratch_w[i] = self.binv[i * m + row];
            }
        }
    }

    fn recompute_basic_values(&mut self) {
        let m = self.m;
        for i in 0..m {
            self.scratch_t[i] = self.rhs[i];
        }
        for j in 0..self.n_struct {
            if self.status[j] != VarStatus::Basic && self.x[j] != 0.0 {
                let xj = self.x[j];
                for &(row, val) in &self.cols[j] {
                    self.scratch_t[row] -= val * xj;
                }
            }
        }
        for i in 0..m {
            let j = self.n_struct + i;
            if self.status[j] != VarStatus::Basic && self.x[j] != 0.0 {
                self.scratch_t[i] -= self.x[j];
            }
        }
        for r in 0..m {
            let mut v = 0.0;
            let row = self.binv_row(r);
            for i in 0..m {
                v += row[i] * self.scratch_t[i];
            }
            self.x[self.basis[r]] = v;
        }
    }

    /// Residual of B x_B = rhs - N x_N, cheap drift detector.
    fn basic_residual(&mut self) -> f64 {
        let m = self.m;
        for i in 0..m {
            self.scratch_t[i] = self.rhs[i];
        }
        for j in 0..self.n_struct {
            if self.x[j] != 0.0 {
                let xj = self.x[j];
                for &(row, val) in &self.cols[j] {
                    self.scratch_t[row] -= val * xj;
                }
            }
        }
        for i in 0..m {
            let j = self.n_struct + i;
            if self.x[j] != 0.0 {
                self.scratch_t[i] -= self.x[j];
            }
        }
        self.scratch_t
            .iter()
            .take(m)
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// Rebuilds the basis inverse by Gauss-Jordan elimination with partial
    /// pivoting, then refreshes reduced costs and basic values.
    fn refactorize(&mut self) -> bool {
        let m = self.m;
        if m == 0 {
            return true;
        }
        let mut mat = vec![0.0; m * m];
        for (r, &j) in self.basis.iter().enumerate() {
            if j < self.n_struct {
                for &(row, val) in &self.cols[j] {
                    mat[row * m + r] = val;
                }
            } else {
                mat[(j - self.n_struct) * m + r] = 1.0;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let mut piv_row = col;
            let mut piv_val = mat[col * m + col].abs();
            for r in col + 1..m {
                let v = mat[r * m + col].abs();
                if v > piv_val {
                    piv_val = v;
                    piv_row = r;
                }
            }
            if piv_val < 1e-12 {
                return false;
            }
            if piv_row != col {
                for k in 0..m {
                    mat.swap(col * m + k, piv_row * m + k);
                    inv.swap(col * m + k, piv_row * m + k);
                }
            }
            let pivot = mat[col * m + col];
            for k in 0..m {
                mat[col * m + k] /= pivot;
                inv[col * m + k] /= pivot;
            }
            for r in 0..m {
                if r != col {
                    let f = mat[r * m + col];
                    if f != 0.0 {
                        for k in 0..m {
                            mat[r * m + k] -= f * mat[col * m + k];
                            inv[r * m + k] -= f * inv[col * m + k];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        // y = c_B binv; d_j = c_j - y a_j.
        let mut y = vec![0.0; m];
        for r in 0..m {
            let cb = self.cost[self.basis[r]];
            if cb != 0.0 {
                let row = self.binv_row(r).to_vec();
                for i in 0..m {
                    y[i] += cb * row[i];
                }
            }
        }
        for j in 0..self.n_struct {
            let mut v = self.cost[j];
            for &(row, val) in &self.cols[j] {
                v -= y[row] * val;
            }
            self.d[j] = v;
        }
        for i in 0..m {
            self.d[self.n_struct + i] = self.cost[self.n_struct + i] - y[i];
        }
        for &j in &self.basis {
            self.d[j] = 0.0;
        }
        self.recompute_basic_values();
        self.pivots_since_refactor = 0;
        true
    }

    /// Picks the leaving row: largest bound violation, or smallest basic
    /// column index under Bland's rule. Returns (row, violated_upper).
    fn select_leaving(&self, bland: bool) -> Option<(usize, bool)> {
        let mut best: Option<(usize, bool)> = None;
        let mut best_key = FEAS_TOL;
        for r in 0..self.m {
            let j = self.basis[r];
            let v = self.x[j];
            let (viol, upper) = if v < self.lower[j] - FEAS_TOL {
                (self.lower[j] - v, false)
            } else if v > self.upper[j] + FEAS_TOL {
                (v - self.upper[j], true)
            } else {
                continue;
            };
            if bland {
                match best {
                    Some((br, _)) if self.basis[br] <= j => {}
                    _ => best = Some((r, upper)),
                }
            } else if viol > best_key {
                best_key = viol;
                best = Some((r, upper));
            }
        }
        best
    }

    /// Dual ratio test over nonbasic columns. `alpha` is the full pivot row;
    /// the sign convention folds the leaving direction in so eligibility is
    /// uniform: entering at lower needs a positive flipped element, at upper
    /// a negative one.
    fn select_entering(&self, alpha: &[f64], flip: f64, bland: bool) -> Option<usize> {
        let eligible = |j: usize| -> Option<f64> {
            if self.status[j] == VarStatus::Basic || self.lower[j] == self.upper[j] {
                return None;
            }
            let a = flip * alpha[j];
            match self.status[j] {
                VarStatus::AtLower if a > PIVOT_TOL => Some(a),
                VarStatus::AtUpper if a < -PIVOT_TOL => Some(a),
                _ => None,
            }
        };
        let n_total = self.n_struct + self.m;
        if bland {
            let mut t_min = INF;
            let mut pick = None;
            for j in 0..n_total {
                if let Some(a) = eligible(j) {
                    let t = self.d[j] / a;
                    if t < t_min - 1e-15 {
                        t_min = t;
                        pick = Some(j);
                    }
                }
            }
            return pick;
        }
        // Harris-style two passes: a relaxed bound first, then the largest
        // pivot element among ratios within the bound.
        let mut t_bound = INF;
        for j in 0..n_total {
            if let Some(a) = eligible(j) {
                let relaxed = (self.d[j] + a.signum() * DUAL_TOL) / a;
                if relaxed < t_bound {
                    t_bound = relaxed;
                }
            }
        }
        if t_bound == INF {
            return None;
        }
        let mut pick = None;
        let mut best_mag = 0.0;
        for j in 0..n_total {
            if let Some(a) = eligible(j) {
                let t = self.d[j] / a;
                if t <= t_bound && a.abs() > best_mag {
                    best_mag = a.abs();
                    pick = Some(j);
                }
            }
        }
        pick
    }

    /// Runs dual simplex from the current basis. Bound edits between calls
    /// keep the basis dual feasible, so this doubles as the warm restart.
    pub fn solve(&mut self, max_iters: usize) -> SolveStatus {
        self.recompute_basic_values();
        let mut bland = false;
        let mut verified = false;
        for _ in 0..max_iters {
            let Some((r, violated_upper)) = self.select_leaving(bland) else {
                if !verified && self.pivots_since_refactor > 0 && self.basic_residual() > 1e-7 {
                    if !self.refactorize() {
                        return SolveStatus::Aborted;
                    }
                    verified = true;
                    continue;
                }
                return SolveStatus::Optimal;
            };
            verified = false;
            let p = self.basis[r];
            let m = self.m;
            let n_total = self.n_struct + m;

            let rho = self.binv[r * m..(r + 1) * m].to_vec();
            for j in 0..n_total {
                self.scratch_alpha[j] = if self.status[j] == VarStatus::Basic {
                    0.0
                } else {
                    self.row_dot_col(&rho, j)
                };
            }
            let alpha = std::mem::take(&mut self.scratch_alpha);
            let flip = if violated_upper { 1.0 } else { -1.0 };
            let entering = self.select_entering(&alpha, flip, bland);
            let Some(q) = entering else {
                self.scratch_alpha = alpha;
                return SolveStatus::Infeasible;
            };
            let alpha_q = alpha[q];
            let theta_dual = self.d[q] / alpha_q;

            self.ftran(q);
            let w_r = self.scratch_w[r];
            if w_r.abs() < PIVOT_TOL || w_r.abs() < 0.25 * alpha_q.abs() {
                // Pivot row and recomputed column disagree: stale inverse.
                self.scratch_alpha = alpha;
                if self.pivots_since_refactor == 0 || !self.refactorize() {
                    return SolveStatus::Aborted;
                }
                continue;
            }

            let target = if violated_upper {
                self.upper[p]
            } else {
                self.lower[p]
            };
            let theta_primal = (self.x[p] - target) / w_r;
            let w = std::mem::take(&mut self.scratch_w);
            for i in 0..m {
                if i != r && w[i] != 0.0 {
                    let bj = self.basis[i];
                    self.x[bj] -= theta_primal * w[i];
                }
            }
            self.x[q] += theta_primal;
            self.x[p] = target;

            for j in 0..n_total {
                if self.status[j] != VarStatus::Basic && j != q {
                    self.d[j] -= theta_dual * alpha[j];
                }
            }
            self.d[p] = -theta_dual;
            self.d[q] = 0.0;

            self.status[p] = if violated_upper {
                VarStatus::AtUpper
            } else {
                VarStatus::AtLower
            };
            self.status[q] = VarStatus::Basic;
            self.basis[r] = q;

            // Product-form update of the inverse.
            let inv_pivot = 1.0 / w_r;
            for k in 0..m {
                self.binv[r * m + k] *= inv_pivot;
            }
            for i in 0..m {
                if i != r && w[i] != 0.0 {
                    let f = w[i];
                    for k in 0..m {
                        self.binv[i * m + k] -= f * self.binv[r * m + k];
                    }
                }
            }
            self.scratch_w = w;
            self.scratch_alpha = alpha;

            if theta_dual.abs() < 1e-12 {
                self.degenerate_streak += 1;
                if self.degenerate_streak > BLAND_AFTER {
                    bland = true;
                }
            } else {
                self.degenerate_streak = 0;
                bland = false;
            }
            self.pivots_since_refactor += 1;
            if self.pivots_since_refactor >= REFACTOR_EVERY && !self.refactorize() {
                return SolveStatus::Aborted;
            }
        }
        SolveStatus::Aborted
    }

    pub fn col_value(&self, j: usize) -> f64 {
        self.x[j]
    }

    pub fn values(&self, range: Range<usize>) -> &[f64] {
        &self.x[range]
    }

    pub fn objective(&self) -> f64 {
        self.cost
            .iter()
            .zip(&self.x)
            .map(|(c, x)| c * x)
            .sum()
    }

    /// Changes one column's bounds in place. A nonbasic column is re-seated
    /// on whichever bound its current reduced cost supports, so the basis
    /// stays dual feasible and [`solve`] restarts warm.
    ///
    /// [`solve`]: DualSimplex::solve
    pub fn set_col_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        assert!(lower <= upper, "column bounds crossed: [{lower}, {upper}]");
        self.lower[j] = lower;
        self.upper[j] = upper;
        if self.status[j] == VarStatus::Basic {
            return;
        }
        let at_lower = if lower == upper {
            true
        } else if self.d[j] >= 0.0 {
            lower.is_finite()
        } else {
            !upper.is_finite()
        };
        if at_lower {
            self.status[j] = VarStatus::AtLower;
            self.x[j] = lower;
        } else {
            self.status[j] = VarStatus::AtUpper;
            self.x[j] = upper;
        }
    }

    pub fn col_bounds(&self, j: usize) -> (f64, f64) {
        (self.lower[j], self.upper[j])
    }
}
