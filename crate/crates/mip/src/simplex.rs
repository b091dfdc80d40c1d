//! Bounded revised simplex with an explicit dense basis inverse.
//!
//! Rows are turned into equalities with one logical (slack) variable each:
//! `a_i x + s_i = b_i`, where `s_i` is bounded by the row sense. Phase one
//! adds artificial columns only for rows whose slack cannot absorb the
//! initial residual. Warm starts from a previous basis use the dual simplex,
//! which is what branch-and-bound needs after a bound change.

use crate::model::{LinearProgram, Sense};
use crate::MipError;

pub const PIVOT_TOL: f64 = 1e-9;
pub const FEAS_TOL: f64 = 1e-7;
const DUAL_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 100;
const BLAND_AFTER: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Position of a variable relative to the basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarState {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable parked at zero.
    Zero,
}

/// Basis over structural and logical variables, reusable as a warm start.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    pub head: Vec<usize>,
    pub state: Vec<VarState>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    /// Row duals `y`.
    pub dual: Vec<f64>,
    /// `c_j - y'A_j` per structural column.
    pub reduced_costs: Vec<f64>,
    pub objective: f64,
    /// Lagrangian dual bound evaluated at `y`.
    pub dual_objective: f64,
    pub iterations: usize,
    pub basis: Option<Basis>,
}

impl LpSolution {
    fn without_values(status: LpStatus, n: usize, m: usize, iterations: usize) -> Self {
        let objective = match status {
            LpStatus::Infeasible => f64::INFINITY,
            _ => f64::NEG_INFINITY,
        };
        Self {
            status,
            primal: vec![0.0; n],
            dual: vec![0.0; m],
            reduced_costs: vec![0.0; n],
            objective,
            dual_objective: objective,
            iterations,
            basis: None,
        }
    }
}

/// Solves `lp` from the all-logical starting basis.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, MipError> {
    lp.validate()?;
    let lower: Vec<f64> = lp.columns.iter().map(|c| c.lower).collect();
    let upper: Vec<f64> = lp.columns.iter().map(|c| c.upper).collect();
    solve_with_bounds(lp, &lower, &upper, None)
}

/// Solves `lp` with the column bounds replaced by `lower`/`upper`, warm
/// starting from `warm` when given.
pub fn solve_with_bounds(
    lp: &LinearProgram,
    lower: &[f64],
    upper: &[f64],
    warm: Option<&Basis>,
) -> Result<LpSolution, MipError> {
    let n = lp.num_cols();
    let m = lp.num_rows();
    if lower.iter().zip(upper).any(|(l, u)| l > &(u + FEAS_TOL)) {
        return Ok(LpSolution::without_values(LpStatus::Infeasible, n, m, 0));
    }
    if let Some(basis) = warm {
        let mut engine = Engine::new(lp, lower, upper);
        match engine.warm_solve(basis) {
            Ok(Some(sol)) => return Ok(sol),
            Ok(None) => {}
            Err(e) => log::debug!("warm start abandoned: {e}"),
        }
    }
    let mut engine = Engine::new(lp, lower, upper);
    match engine.cold_solve() {
        Ok(sol) => Ok(sol),
        Err(MipError::Numerical(msg)) => {
            log::debug!("retrying after numerical trouble: {msg}");
            let mut engine = Engine::new(lp, lower, upper);
            engine.refactor_every = 20;
            engine.cold_solve()
        }
        Err(e) => Err(e),
    }
}

enum PrimalOutcome {
    Optimal,
    Unbounded,
}

enum DualOutcome {
    Optimal,
    Infeasible,
}

struct Engine<'a> {
    lp: &'a LinearProgram,
    m: usize,
    n: usize,
    /// Rows of the artificial variables `n + m + k`, with their sign.
    artificial: Vec<(usize, f64)>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarState>,
    head: Vec<usize>,
    binv: Vec<f64>,
    b: Vec<f64>,
    pivots_since_refactor: usize,
    refactor_every: usize,
    degenerate_run: usize,
    bland: bool,
    iterations: usize,
    max_iterations: usize,
}

impl<'a> Engine<'a> {
    fn new(lp: &'a LinearProgram, lower: &[f64], upper: &[f64]) -> Self {
        let n = lp.num_cols();
        let m = lp.num_rows();
        let mut lo = lower.to_vec();
        let mut hi = upper.to_vec();
        for row in &lp.rows {
            let (l, h) = match row.sense {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            lo.push(l);
            hi.push(h);
        }
        let total = n + m;
        Self {
            lp,
            m,
            n,
            artificial: Vec::new(),
            lo,
            hi,
            cost: vec![0.0; total],
            x: vec![0.0; total],
            state: vec![VarState::AtLower; total],
            head: Vec::with_capacity(m),
            binv: vec![0.0; m * m],
            b: lp.rows.iter().map(|r| r.rhs).collect(),
            pivots_since_refactor: 0,
            refactor_every: REFACTOR_EVERY,
            degenerate_run: 0,
            bland: false,
            iterations: 0,
            max_iterations: 50 * (n + m) + 10_000,
        }
    }

    fn num_vars(&self) -> usize {
        self.n + self.m + self.artificial.len()
    }

    fn for_each_entry(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        if j < self.n {
            for &(i, a) in &self.lp.columns[j].entries {
                f(i, a);
            }
        } else if j < self.n + self.m {
            f(j - self.n, 1.0);
        } else {
            let (row, sign) = self.artificial[j - self.n - self.m];
            f(row, sign);
        }
    }

    fn dot(&self, y: &[f64], j: usize) -> f64 {
        let mut s = 0.0;
        self.for_each_entry(j, |i, a| s += y[i] * a);
        s
    }

    /// `B^{-1} A_j`.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; m];
        self.for_each_entry(j, |r, a| {
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.binv[i * m + r] * a;
            }
        });
        out
    }

    /// `c_B' B^{-1}`.
    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &var) in self.head.iter().enumerate() {
            let c = self.cost[var];
            if c != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yk, bk) in y.iter_mut().zip(row) {
                    *yk += c * bk;
                }
            }
        }
        y
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.state[j] {
            VarState::AtLower => self.lo[j],
            VarState::AtUpper => self.hi[j],
            VarState::Zero | VarState::Basic => 0.0,
        }
    }

    fn park(&mut self, j: usize) {
        let (l, h) = (self.lo[j], self.hi[j]);
        self.state[j] = if l.is_finite() {
            VarState::AtLower
        } else if h.is_finite() {
            VarState::AtUpper
        } else {
            VarState::Zero
        };
        self.x[j] = self.nonbasic_value(j);
    }

    fn recompute_basics(&mut self) {
        let m = self.m;
        let mut rhs = self.b.clone();
        for j in 0..self.num_vars() {
            if self.state[j] != VarState::Basic {
                let v = self.x[j];
                if v != 0.0 {
                    self.for_each_entry(j, |i, a| rhs[i] -= a * v);
                }
            }
        }
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            let v: f64 = row.iter().zip(&rhs).map(|(a, b)| a * b).sum();
            self.x[self.head[i]] = v;
        }
    }

    /// Gauss-Jordan inversion of the current basis matrix.
    fn refactor(&mut self) -> Result<(), MipError> {
        let m = self.m;
        let mut mat = vec![0.0; m * m];
        for (k, &var) in self.head.iter().enumerate() {
            self.for_each_entry(var, |i, a| mat[i * m + k] = a);
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let mut piv = col;
            let mut best = mat[col * m + col].abs();
            for r in col + 1..m {
                let v = mat[r * m + col].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-11 {
                return Err(MipError::Numerical(format!("singular basis at column {col}")));
            }
            if piv != col {
                for k in 0..m {
                    mat.swap(col * m + k, piv * m + k);
                    inv.swap(col * m + k, piv * m + k);
                }
            }
            let p = mat[col * m + col];
            for k in 0..m {
                mat[col * m + k] /= p;
                inv[col * m + k] /= p;
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
        // `mat` was reduced to the identity; `inv` is B^{-1} with rows in basis order.
        self.binv = inv;
        self.pivots_since_refactor = 0;
        self.recompute_basics();
        Ok(())
    }

    fn pivot(&mut self, r: usize, entering: usize, alpha: &[f64]) -> Result<(), MipError> {
        let m = self.m;
        let piv = alpha[r];
        for k in 0..m {
            self.binv[r * m + k] /= piv;
        }
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (prow, after) = rest.split_at_mut(m);
        for (i, chunk) in before.chunks_mut(m).enumerate() {
            let f = alpha[i];
            if f != 0.0 {
                for (c, p) in chunk.iter_mut().zip(prow.iter()) {
                    *c -= f * p;
                }
            }
        }
        for (off, chunk) in after.chunks_mut(m).enumerate() {
            let f = alpha[r + 1 + off];
            if f != 0.0 {
                for (c, p) in chunk.iter_mut().zip(prow.iter()) {
                    *c -= f * p;
                }
            }
        }
        self.head[r] = entering;
        self.state[entering] = VarState::Basic;
        self.pivots_since_refactor += 1;
        if self.pivots_since_refactor >= self.refactor_every {
            self.refactor()?;
        }
        Ok(())
    }

    fn tick(&mut self) -> Result<(), MipError> {
        self.iterations += 1;
        if self.iterations > self.max_iterations {
            return Err(MipError::IterationLimit(self.max_iterations));
        }
        Ok(())
    }

    fn primal(&mut self) -> Result<PrimalOutcome, MipError> {
        self.degenerate_run = 0;
        self.bland = false;
        loop {
            self.tick()?;
            let y = self.duals();
            let mut entering: Option<(usize, f64, f64)> = None;
            for j in 0..self.num_vars() {
                let st = self.state[j];
                if st == VarState::Basic || self.hi[j] - self.lo[j] <= 0.0 {
                    continue;
                }
                let d = self.cost[j] - self.dot(&y, j);
                // Relative to the cost so rounding noise never prices in.
                let tol = DUAL_TOL * (1.0 + self.cost[j].abs());
                let dir = match st {
                    VarState::AtLower if d < -tol => 1.0,
                    VarState::AtUpper if d > tol => -1.0,
                    VarState::Zero if d.abs() > tol => -d.signum(),
                    _ => continue,
                };
                if self.bland {
                    entering = Some((j, dir, d));
                    break;
                }
                if entering.is_none_or(|(_, _, bd)| d.abs() > bd.abs()) {
                    entering = Some((j, dir, d));
                }
            }
            let Some((q, dir, _)) = entering else {
                return Ok(PrimalOutcome::Optimal);
            };
            let alpha = self.ftran(q);
            // Bound flip of the entering variable itself.
            let mut theta = self.hi[q] - self.lo[q];
            let mut leave: Option<usize> = None;
            let mut leave_alpha = 0.0;
            for (i, &a) in alpha.iter().enumerate() {
                let da = dir * a;
                let var = self.head[i];
                let t = if da > PIVOT_TOL {
                    if !self.lo[var].is_finite() {
                        continue;
                    }
                    (self.x[var] - self.lo[var]).max(0.0) / da
                } else if da < -PIVOT_TOL {
                    if !self.hi[var].is_finite() {
                        continue;
                    }
                    (self.hi[var] - self.x[var]).max(0.0) / -da
                } else {
                    continue;
                };
                let better = match leave {
                    None => t < theta,
                    Some(l) => {
                        if self.bland {
                            t < theta - 1e-12 || (t <= theta + 1e-12 && var < self.head[l])
                        } else {
                            t < theta - 1e-12 || (t <= theta + 1e-12 && a.abs() > leave_alpha)
                        }
                    }
                };
                if better {
                    theta = t;
                    leave = Some(i);
                    leave_alpha = a.abs();
                }
            }
            if !theta.is_finite() {
                return Ok(PrimalOutcome::Unbounded);
            }
            // Once engaged, Bland's rule stays on for the rest of this call.
            if theta < 1e-9 {
                self.degenerate_run += 1;
                if self.degenerate_run > BLAND_AFTER {
                    self.bland = true;
                }
            } else if !self.bland {
                self.degenerate_run = 0;
            }
            let step = dir * theta;
            for (i, &a) in alpha.iter().enumerate() {
                if a != 0.0 {
                    let var = self.head[i];
                    self.x[var] -= step * a;
                }
            }
            self.x[q] += step;
            match leave {
                None => {
                    // Entering variable moved to its opposite bound.
                    self.state[q] = if dir > 0.0 {
                        VarState::AtUpper
                    } else {
                        VarState::AtLower
                    };
                    self.x[q] = self.nonbasic_value(q);
                }
                Some(r) => {
                    let out = self.head[r];
                    let da = dir * alpha[r];
                    self.state[out] = if da > 0.0 {
                        VarState::AtLower
                    } else {
                        VarState::AtUpper
                    };
                    self.x[out] = self.nonbasic_value(out);
                    self.pivot(r, q, &alpha)?;
                }
            }
        }
    }

    fn dual(&mut self) -> Result<DualOutcome, MipError> {
        let m = self.m;
        loop {
            self.tick()?;
            let mut r_best: Option<(usize, f64)> = None;
            for i in 0..m {
                let var = self.head[i];
                let v = self.x[var];
                let infeas = if v < self.lo[var] - FEAS_TOL {
                    self.lo[var] - v
                } else if v > self.hi[var] + FEAS_TOL {
                    v - self.hi[var]
                } else {
                    continue;
                };
                if r_best.is_none_or(|(_, b)| infeas > b) {
                    r_best = Some((i, infeas));
                }
            }
            let Some((r, _)) = r_best else {
                return Ok(DualOutcome::Optimal);
            };
            let out = self.head[r];
            let to_lower = self.x[out] < self.lo[out];
            let bound = if to_lower { self.lo[out] } else { self.hi[out] };
            let rho: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
            let y = self.duals();
            let mut best: Option<(usize, f64, f64)> = None;
            for j in 0..self.num_vars() {
                let st = self.state[j];
                if st == VarState::Basic || self.hi[j] - self.lo[j] <= 0.0 {
                    continue;
                }
                let a = self.dot(&rho, j);
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let ok = match (st, to_lower) {
                    (VarState::AtLower, true) => a < 0.0,
                    (VarState::AtUpper, true) => a > 0.0,
                    (VarState::AtLower, false) => a > 0.0,
                    (VarState::AtUpper, false) => a < 0.0,
                    (VarState::Zero, _) => true,
                    (VarState::Basic, _) => false,
                };
                if !ok {
                    continue;
                }
                let d = self.cost[j] - self.dot(&y, j);
                let ratio = d.abs() / a.abs();
                let better = match best {
                    None => true,
                    Some((_, br, ba)) => ratio < br - 1e-12 || (ratio <= br + 1e-12 && a.abs() > ba),
                };
                if better {
                    best = Some((j, ratio, a.abs()));
                }
            }
            let Some((q, _, _)) = best else {
                return Ok(DualOutcome::Infeasible);
            };
            let alpha = self.ftran(q);
            if alpha[r].abs() <= PIVOT_TOL {
                return Err(MipError::Numerical("dual pivot vanished after ftran".into()));
            }
            let delta = (self.x[out] - bound) / alpha[r];
            for (i, &a) in alpha.iter().enumerate() {
                if a != 0.0 {
                    let var = self.head[i];
                    self.x[var] -= delta * a;
                }
            }
            self.x[q] += delta;
            self.state[out] = if to_lower {
                VarState::AtLower
            } else {
                VarState::AtUpper
            };
            self.x[out] = bound;
            self.pivot(r, q, &alpha)?;
        }
    }

    fn set_phase_two_costs(&mut self) {
        for j in 0..self.num_vars() {
            self.cost[j] = if j < self.n { self.lp.columns[j].cost } else { 0.0 };
        }
    }

    fn cold_solve(&mut self) -> Result<LpSolution, MipError> {
        let (n, m) = (self.n, self.m);
        for j in 0..n {
            self.park(j);
        }
        let mut resid = self.b.clone();
        for j in 0..n {
            let v = self.x[j];
            if v != 0.0 {
                for &(i, a) in &self.lp.columns[j].entries {
                    resid[i] -= a * v;
                }
            }
        }
        self.head.clear();
        self.binv = vec![0.0; m * m];
        for (i, &r) in resid.iter().enumerate() {
            let s = n + i;
            if r >= self.lo[s] - FEAS_TOL && r <= self.hi[s] + FEAS_TOL {
                self.state[s] = VarState::Basic;
                self.x[s] = r;
                self.head.push(s);
                self.binv[i * m + i] = 1.0;
            } else {
                let clamp = r.clamp(self.lo[s], self.hi[s]);
                self.state[s] = if clamp == self.lo[s] {
                    VarState::AtLower
                } else {
                    VarState::AtUpper
                };
                self.x[s] = clamp;
                let sign = if r - clamp > 0.0 { 1.0 } else { -1.0 };
                self.artificial.push((i, sign));
                self.lo.push(0.0);
                self.hi.push(f64::INFINITY);
                self.cost.push(0.0);
                self.x.push((r - clamp).abs());
                self.state.push(VarState::Basic);
                self.head.push(n + m + self.artificial.len() - 1);
                self.binv[i * m + i] = sign;
            }
        }
        if !self.artificial.is_empty() {
            for j in 0..self.num_vars() {
                self.cost[j] = if j >= n + m { 1.0 } else { 0.0 };
            }
            match self.primal()? {
                PrimalOutcome::Optimal => {}
                PrimalOutcome::Unbounded => {
                    return Err(MipError::Numerical("phase one reported unbounded".into()));
                }
            }
            self.refactor()?;
            let infeas: f64 = (n + m..self.num_vars()).map(|j| self.x[j].max(0.0)).sum();
            let scale = 1.0 + self.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if infeas > 1e-6 * scale {
                return Ok(LpSolution::without_values(LpStatus::Infeasible, n, m, self.iterations));
            }
            for j in n + m..self.num_vars() {
                self.lo[j] = 0.0;
                self.hi[j] = 0.0;
                if self.state[j] != VarState::Basic {
                    self.state[j] = VarState::AtLower;
                    self.x[j] = 0.0;
                }
            }
            self.drive_out_artificials()?;
        }
        self.set_phase_two_costs();
        match self.primal()? {
            PrimalOutcome::Optimal => {}
            PrimalOutcome::Unbounded => {
                return Ok(LpSolution::without_values(LpStatus::Unbounded, n, m, self.iterations));
            }
        }
        self.refactor()?;
        Ok(self.extract())
    }

    /// Pivots zero-valued artificials out of the basis where a logical or
    /// structural replacement exists.
    fn drive_out_artificials(&mut self) -> Result<(), MipError> {
        let m = self.m;
        let base = self.n + self.m;
        for r in 0..m {
            if self.head[r] < base {
                continue;
            }
            let rho: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
            let mut pick: Option<(usize, f64)> = None;
            for j in 0..base {
                if self.state[j] == VarState::Basic {
                    continue;
                }
                let a = self.dot(&rho, j);
                if a.abs() > 1e-7 && pick.is_none_or(|(_, b)| a.abs() > b) {
                    pick = Some((j, a.abs()));
                }
            }
            if let Some((q, _)) = pick {
                let alpha = self.ftran(q);
                let out = self.head[r];
                self.state[out] = VarState::AtLower;
                self.x[out] = 0.0;
                self.pivot(r, q, &alpha)?;
            }
        }
        self.refactor()
    }

    fn warm_solve(&mut self, basis: &Basis) -> Result<Option<LpSolution>, MipError> {
        let (n, m) = (self.n, self.m);
        if basis.head.len() != m || basis.state.len() != n + m {
            return Ok(None);
        }
        self.head = basis.head.clone();
        self.state = basis.state.clone();
        for j in 0..n + m {
            match self.state[j] {
                VarState::Basic => {}
                VarState::AtLower if !self.lo[j].is_finite() => self.park(j),
                VarState::AtUpper if !self.hi[j].is_finite() => self.park(j),
                VarState::Zero if self.lo[j].is_finite() || self.hi[j].is_finite() => self.park(j),
                _ => self.x[j] = self.nonbasic_value(j),
            }
        }
        self.set_phase_two_costs();
        if self.refactor().is_err() {
            return Ok(None);
        }
        let y = self.duals();
        for j in 0..n + m {
            let st = self.state[j];
            if st == VarState::Basic || self.hi[j] - self.lo[j] <= 0.0 {
                continue;
            }
            let d = self.cost[j] - self.dot(&y, j);
            let bad = match st {
                VarState::AtLower => d < -1e-7,
                VarState::AtUpper => d > 1e-7,
                VarState::Zero => d.abs() > 1e-7,
                VarState::Basic => false,
            };
            if bad {
                return Ok(None);
            }
        }
        match self.dual()? {
            DualOutcome::Infeasible => Ok(Some(LpSolution::without_values(
                LpStatus::Infeasible,
                n,
                m,
                self.iterations,
            ))),
            DualOutcome::Optimal => {
                // Clean up any dual infeasibility picked up through round-off.
                match self.primal()? {
                    PrimalOutcome::Optimal => {}
                    PrimalOutcome::Unbounded => return Ok(None),
                }
                self.refactor()?;
                let sol = self.extract();
                if self.lp.max_violation(&sol.primal) > 1e-6 {
                    return Ok(None);
                }
                Ok(Some(sol))
            }
        }
    }

    fn extract(&self) -> LpSolution {
        let (n, m) = (self.n, self.m);
        let y = self.duals();
        let primal: Vec<f64> = self.x[..n].to_vec();
        let reduced_costs: Vec<f64> = (0..n).map(|j| self.cost[j] - self.dot(&y, j)).collect();
        let objective = self.lp.objective_value(&primal);
        let mut dual_objective: f64 = y.iter().zip(&self.b).map(|(a, b)| a * b).sum();
        for j in 0..n + m {
            let d = if j < n { reduced_costs[j] } else { -y[j - n] };
            let tol = DUAL_TOL * (1.0 + self.cost[j].abs());
            let term = if self.state[j] == VarState::Basic || d.abs() <= tol {
                d * self.x[j]
            } else if d > 0.0 {
                d * self.lo[j]
            } else {
                d * self.hi[j]
            };
            dual_objective += term;
        }
        let has_artificial_in_basis = self.head.iter().any(|&v| v >= n + m);
        let basis = (!has_artificial_in_basis).then(|| Basis {
            head: self.head.clone(),
            state: self.state[..n + m].to_vec(),
        });
        LpSolution {
            status: LpStatus::Optimal,
            primal,
            dual: y,
            reduced_costs,
            objective,
            dual_objective,
            iterations: self.iterations,
            basis,
        }
    }
}
