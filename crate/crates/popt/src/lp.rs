//! Dense two-phase primal simplex with row duals and basis reporting.
//!
//! The mechanism needs more from its LP solver than an objective value: the
//! rounding loop requires *extreme-point* primal solutions, pricing reads
//! per-row duals, and several verification steps recompute feasibility,
//! duality-gap, and complementary-slackness residuals from first principles.
//! Solutions therefore carry the primal vector, one dual per row, the final
//! basis, and the objective value.
//!
//! The tableau is kept dense. The auction LPs have few rows (one per agent
//! plus one per good) and a very wide variable block, and every row admits a
//! slack start when right-hand sides are nonnegative, so phase 1 is skipped
//! entirely for them. Equality rows — used by the rounding subproblems — get
//! phase-1 artificials; artificial columns are retained (barred from
//! entering) through phase 2 so duals of equality rows can be read off the
//! final reduced costs. Degenerate stalls switch pivoting from steepest
//! reduced cost to Bland's rule until the objective moves again.

use crate::error::Error;
use crate::Result;

/// Row sense of a linear constraint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
}

/// One constraint row, stored sparsely as `(variable, coefficient)` pairs.
/// Repeated variables are summed.
#[derive(Clone, Debug)]
pub struct LpRow {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// A linear program `max c·x  s.t. rows, x ≥ 0`, with an optional set of
/// variables pinned to constants. Pinned variables are substituted out
/// before the solve (their objective weight contributes a constant) and
/// reappear at their pinned values in the returned primal vector.
#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    pub n_vars: usize,
    /// Maximization objective, one weight per variable.
    pub objective: Vec<f64>,
    pub rows: Vec<LpRow>,
    /// `(variable, value)` pins; at most one entry per variable.
    pub fixings: Vec<(usize, f64)>,
}

/// Solve outcome. `Infeasible` and `Unbounded` are expected statuses, not
/// errors; numerical breakdown (iteration cap) surfaces as
/// [`Error::NumericalFailure`] instead.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Identity of the variable basic in a given tableau row at termination.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasicVar {
    /// An original problem variable (original index, pre-substitution).
    Structural(usize),
    /// The slack of the given row.
    Slack(usize),
    /// The phase-1 artificial of the given row (value 0 in any optimum).
    Artificial(usize),
}

/// Result of a solve. `primal`, `duals`, `objective_value`, and `basis` are
/// meaningful only when `status == Optimal`; they are empty/zero otherwise.
#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Full-length primal vector, pinned variables included.
    pub primal: Vec<f64>,
    /// One dual value per row, in input row order.
    pub duals: Vec<f64>,
    pub objective_value: f64,
    /// Basic variable per tableau row (rows eliminated as redundant during
    /// phase 1 report their artificial).
    pub basis: Vec<BasicVar>,
}

/// Numerical knobs for the solver.
#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    /// Feasibility tolerance: right-hand-side snapping and the phase-1
    /// infeasibility threshold.
    pub feas_tol: f64,
    /// Minimum magnitude of an acceptable pivot element.
    pub pivot_tol: f64,
    /// Reduced-cost threshold below which a column is considered priced out.
    pub entering_tol: f64,
    /// Consecutive degenerate pivots before Bland's rule engages.
    pub degenerate_pivot_limit: u32,
    /// Hard pivot cap; 0 means `50·(rows + cols) + 1000`.
    pub max_pivots: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            feas_tol: 1e-9,
            pivot_tol: 1e-10,
            entering_tol: 1e-9,
            degenerate_pivot_limit: 50,
            max_pivots: 0,
        }
    }
}

impl LinearProgram {
    pub fn new(n_vars: usize, objective: Vec<f64>) -> Self {
        LinearProgram { n_vars, objective, rows: Vec::new(), fixings: Vec::new() }
    }

    pub fn le(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push(LpRow { coeffs, relation: Relation::Le, rhs });
    }

    pub fn eq(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push(LpRow { coeffs, relation: Relation::Eq, rhs });
    }

    pub fn fix(&mut self, var: usize, value: f64) {
        self.fixings.push((var, value));
    }

    /// Structural sanity: index ranges, finite numbers, unique pins.
    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.n_vars {
            return Err(Error::InvalidConfig(format!(
                "objective has {} weights for {} variables",
                self.objective.len(),
                self.n_vars
            )));
        }
        if let Some(c) = self.objective.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidConfig(format!("non-finite objective weight {c}")));
        }
        for (r, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(Error::InvalidConfig(format!("row {r} has non-finite rhs")));
            }
            for &(v, c) in &row.coeffs {
                if v >= self.n_vars {
                    return Err(Error::InvalidConfig(format!(
                        "row {r} references variable {v} of {}",
                        self.n_vars
                    )));
                }
                if !c.is_finite() {
                    return Err(Error::InvalidConfig(format!(
                        "row {r} has non-finite coefficient"
                    )));
                }
            }
        }
        let mut seen = vec![false; self.n_vars];
        for &(v, val) in &self.fixings {
            if v >= self.n_vars {
                return Err(Error::InvalidConfig(format!("fixing references variable {v}")));
            }
            if !val.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "variable {v} pinned to non-finite value"
                )));
            }
            if seen[v] {
                return Err(Error::InvalidConfig(format!("variable {v} pinned twice")));
            }
            seen[v] = true;
        }
        Ok(())
    }

    /// Plain-text dump for debugging: objective first, then one line per row
    /// as `<relation> <rhs> : <var>=<coef> ...`, then pins.
    pub fn dump_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = write!(out, "max :");
        for (v, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                let _ = write!(out, " x{v}={c}");
            }
        }
        let _ = writeln!(out);
        for row in &self.rows {
            let rel = match row.relation {
                Relation::Le => "<=",
                Relation::Eq => "=",
            };
            let _ = write!(out, "{rel} {} :", row.rhs);
            for &(v, c) in &row.coeffs {
                let _ = write!(out, " x{v}={c}");
            }
            let _ = writeln!(out);
        }
        for &(v, val) in &self.fixings {
            let _ = writeln!(out, "fix : x{v}={val}");
        }
        out
    }
}

/// Solve with default options.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    solve_with(lp, &SolverOptions::default())
}

/// Solve `lp` to an extreme point of its feasible region.
pub fn solve_with(lp: &LinearProgram, opts: &SolverOptions) -> Result<LpSolution> {
    lp.validate()?;
    Tableau::build(lp, opts).run(lp)
}

enum CoreStatus {
    Converged,
    Unbounded,
}

struct Tableau<'a> {
    opts: &'a SolverOptions,
    m: usize,
    ncols: usize,
    n_struct: usize,
    /// Columns at or beyond this index are artificial and barred from entering.
    art_start: usize,
    t: Vec<f64>, // m × ncols, row-major
    b: Vec<f64>,
    basis: Vec<usize>,
    alive: Vec<bool>,
    zrow: Vec<f64>,
    scratch: Vec<f64>,
    /// Column whose final reduced cost yields the row's dual.
    dual_source: Vec<usize>,
    /// −1 where the row was negated to make its rhs nonnegative.
    sign: Vec<f64>,
    /// Original variable index per structural column.
    free: Vec<usize>,
    /// Owning row per slack column, in column order.
    slack_owner: Vec<usize>,
    fixed_value: Vec<f64>,
    is_fixed: Vec<bool>,
    bland: bool,
    stall: u32,
    pivots: u64,
}

impl<'a> Tableau<'a> {
    fn build(lp: &LinearProgram, opts: &'a SolverOptions) -> Tableau<'a> {
        let n = lp.n_vars;
        let mut is_fixed = vec![false; n];
        let mut fixed_value = vec![0.0; n];
        for &(v, val) in &lp.fixings {
            is_fixed[v] = true;
            fixed_value[v] = val;
        }
        let mut col_of = vec![usize::MAX; n];
        let mut free = Vec::new();
        for v in 0..n {
            if !is_fixed[v] {
                col_of[v] = free.len();
                free.push(v);
            }
        }
        let n_struct = free.len();
        let m = lp.rows.len();

        // Substituted right-hand sides decide which rows need negating and
        // which need artificials, so compute them before sizing the tableau.
        let mut rhs = vec![0.0; m];
        for (r, row) in lp.rows.iter().enumerate() {
            let mut v = row.rhs;
            for &(var, c) in &row.coeffs {
                if is_fixed[var] {
                    v -= c * fixed_value[var];
                }
            }
            rhs[r] = v;
        }
        let mut slack_col = vec![usize::MAX; m];
        let mut slack_owner = Vec::new();
        let mut next = n_struct;
        for (r, row) in lp.rows.iter().enumerate() {
            if row.relation == Relation::Le {
                slack_col[r] = next;
                slack_owner.push(r);
                next += 1;
            }
        }
        let art_start = next;
        let mut art_col = vec![usize::MAX; m];
        for (r, row) in lp.rows.iter().enumerate() {
            let needs_art = row.relation == Relation::Eq || rhs[r] < 0.0;
            if needs_art {
                art_col[r] = next;
                next += 1;
            }
        }
        let ncols = next;

        let mut t = vec![0.0; m * ncols];
        let mut b = vec![0.0; m];
        let mut basis = vec![0usize; m];
        let mut dual_source = vec![0usize; m];
        let mut sign = vec![1.0; m];
        for (r, row) in lp.rows.iter().enumerate() {
            let s = if rhs[r] < 0.0 { -1.0 } else { 1.0 };
            sign[r] = s;
            b[r] = s * rhs[r];
            let trow = &mut t[r * ncols..(r + 1) * ncols];
            for &(var, c) in &row.coeffs {
                if !is_fixed[var] {
                    trow[col_of[var]] += s * c;
                }
            }
            if slack_col[r] != usize::MAX {
                trow[slack_col[r]] = s;
            }
            if art_col[r] != usize::MAX {
                trow[art_col[r]] = 1.0;
                basis[r] = art_col[r];
                dual_source[r] = art_col[r];
            } else {
                // Le row with nonnegative rhs: slack starts basic.
                basis[r] = slack_col[r];
                dual_source[r] = slack_col[r];
            }
        }

        Tableau {
            opts,
            m,
            ncols,
            n_struct,
            art_start,
            t,
            b,
            basis,
            alive: vec![true; m],
            zrow: vec![0.0; ncols],
            scratch: vec![0.0; ncols],
            dual_source,
            sign,
            free,
            slack_owner,
            fixed_value,
            is_fixed,
            bland: false,
            stall: 0,
            pivots: 0,
        }
    }

    fn max_pivots(&self) -> u64 {
        if self.opts.max_pivots > 0 {
            self.opts.max_pivots
        } else {
            50 * (self.m as u64 + self.ncols as u64) + 1000
        }
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpSolution> {
        let needs_phase1 = (0..self.m).any(|r| self.basis[r] >= self.art_start);
        if needs_phase1 {
            // Phase 1: maximize −Σ artificials from the all-artificial/slack
            // start; reduced costs of that objective are the column sums over
            // artificial-basic rows, minus one on the artificials themselves.
            self.zrow.iter_mut().for_each(|z| *z = 0.0);
            for r in 0..self.m {
                if self.basis[r] >= self.art_start {
                    let trow = &self.t[r * self.ncols..(r + 1) * self.ncols];
                    for (z, a) in self.zrow.iter_mut().zip(trow) {
                        *z += a;
                    }
                }
            }
            for c in self.art_start..self.ncols {
                self.zrow[c] -= 1.0;
            }
            match self.iterate()? {
                CoreStatus::Converged => {}
                CoreStatus::Unbounded => {
                    return Err(Error::NumericalFailure(
                        "phase 1 reported an unbounded direction".into(),
                    ));
                }
            }
            let infeas: f64 = (0..self.m)
                .filter(|&r| self.alive[r] && self.basis[r] >= self.art_start)
                .map(|r| self.b[r])
                .sum();
            if infeas > self.opts.feas_tol {
                return Ok(LpSolution {
                    status: LpStatus::Infeasible,
                    primal: Vec::new(),
                    duals: Vec::new(),
                    objective_value: 0.0,
                    basis: Vec::new(),
                });
            }
            self.drive_out_artificials();
        }

        // Phase 2 reduced costs under the true objective and current basis.
        let mut cost = vec![0.0; self.ncols];
        for (col, &v) in self.free.iter().enumerate() {
            cost[col] = lp.objective[v];
        }
        self.zrow.copy_from_slice(&cost);
        for r in 0..self.m {
            if !self.alive[r] {
                continue;
            }
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                let trow = &self.t[r * self.ncols..(r + 1) * self.ncols];
                for (z, a) in self.zrow.iter_mut().zip(trow) {
                    *z -= cb * a;
                }
            }
        }
        self.bland = false;
        self.stall = 0;
        match self.iterate()? {
            CoreStatus::Unbounded => Ok(LpSolution {
                status: LpStatus::Unbounded,
                primal: Vec::new(),
                duals: Vec::new(),
                objective_value: 0.0,
                basis: Vec::new(),
            }),
            CoreStatus::Converged => Ok(self.extract(lp)),
        }
    }

    /// Pivot until priced out. Dantzig entering rule by default; after
    /// `degenerate_pivot_limit` consecutive pivots without objective
    /// movement, Bland's smallest-index rule takes over until the objective
    /// moves again.
    fn iterate(&mut self) -> Result<CoreStatus> {
        let cap = self.max_pivots();
        loop {
            let entering = if self.bland {
                (0..self.art_start).find(|&c| self.zrow[c] > self.opts.entering_tol)
            } else {
                let mut best = None;
                let mut best_z = self.opts.entering_tol;
                for c in 0..self.art_start {
                    if self.zrow[c] > best_z {
                        best_z = self.zrow[c];
                        best = Some(c);
                    }
                }
                best
            };
            let Some(pc) = entering else {
                return Ok(CoreStatus::Converged);
            };

            // Ratio test; ties go to the smallest basic variable index so
            // Bland's anti-cycling argument applies when engaged.
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.m {
                if !self.alive[r] {
                    continue;
                }
                let a = self.t[r * self.ncols + pc];
                if a > self.opts.pivot_tol {
                    let ratio = self.b[r] / a;
                    match leave {
                        None => leave = Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - 1e-12
                                || (ratio < lratio + 1e-12 && self.basis[r] < self.basis[lr])
                            {
                                leave = Some((r, ratio));
                            }
                        }
                    }
                }
            }
            let Some((pr, ratio)) = leave else {
                return Ok(CoreStatus::Unbounded);
            };

            if self.zrow[pc] * ratio <= 1e-12 {
                self.stall += 1;
                if self.stall >= self.opts.degenerate_pivot_limit {
                    self.bland = true;
                }
            } else {
                self.stall = 0;
                self.bland = false;
            }

            self.pivot(pr, pc);
            self.pivots += 1;
            if self.pivots > cap {
                return Err(Error::NumericalFailure(format!(
                    "pivot cap {cap} exceeded ({} rows, {} columns)",
                    self.m, self.ncols
                )));
            }
        }
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let ncols = self.ncols;
        let piv = self.t[pr * ncols + pc];
        {
            let prow = &mut self.t[pr * ncols..(pr + 1) * ncols];
            let inv = 1.0 / piv;
            for a in prow.iter_mut() {
                *a *= inv;
            }
            prow[pc] = 1.0; // exact, not 0.999…
            self.b[pr] *= inv;
            self.scratch.copy_from_slice(prow);
        }
        let bp = self.b[pr];
        for r in 0..self.m {
            if r == pr || !self.alive[r] {
                continue;
            }
            let f = self.t[r * ncols + pc];
            if f.abs() > 1e-13 {
                let trow = &mut self.t[r * ncols..(r + 1) * ncols];
                for (a, &p) in trow.iter_mut().zip(&self.scratch) {
                    *a -= f * p;
                }
                trow[pc] = 0.0;
                self.b[r] -= f * bp;
                if self.b[r] < 0.0 && self.b[r] > -self.opts.feas_tol {
                    self.b[r] = 0.0;
                }
            }
        }
        let zf = self.zrow[pc];
        if zf != 0.0 {
            for (z, &p) in self.zrow.iter_mut().zip(&self.scratch) {
                *z -= zf * p;
            }
            self.zrow[pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    /// Swap basic artificials for structural/slack columns where possible;
    /// rows that admit no pivot are linearly dependent on the others and are
    /// dropped from further processing (their dual is zero).
    fn drive_out_artificials(&mut self) {
        for r in 0..self.m {
            if !self.alive[r] || self.basis[r] < self.art_start {
                continue;
            }
            self.b[r] = 0.0; // basic artificial at phase-1 optimum
            let trow = &self.t[r * self.ncols..(r + 1) * self.ncols];
            let pc = (0..self.art_start).find(|&c| trow[c].abs() > self.opts.pivot_tol);
            match pc {
                Some(pc) => self.pivot(r, pc),
                None => self.alive[r] = false,
            }
        }
    }

    fn extract(self, lp: &LinearProgram) -> LpSolution {
        let mut primal = vec![0.0; lp.n_vars];
        for v in 0..lp.n_vars {
            if self.is_fixed[v] {
                primal[v] = self.fixed_value[v];
            }
        }
        let mut basis_out = Vec::with_capacity(self.m);
        for r in 0..self.m {
            let col = self.basis[r];
            if !self.alive[r] {
                basis_out.push(BasicVar::Artificial(r));
                continue;
            }
            if col < self.n_struct {
                primal[self.free[col]] = self.b[r];
                basis_out.push(BasicVar::Structural(self.free[col]));
            } else if col < self.art_start {
                basis_out.push(BasicVar::Slack(self.slack_owner[col - self.n_struct]));
            } else {
                basis_out.push(BasicVar::Artificial(r));
            }
        }
        let mut duals = vec![0.0; self.m];
        for r in 0..self.m {
            if self.alive[r] {
                duals[r] = self.sign[r] * -self.zrow[self.dual_source[r]];
            }
        }
        let objective_value = lp.objective.iter().zip(&primal).map(|(c, x)| c * x).sum();
        LpSolution { status: LpStatus::Optimal, primal, duals, objective_value, basis: basis_out }
    }
}

/// Worst violation of `x` against rows, nonnegativity, and pins.
pub fn feasibility_residual(lp: &LinearProgram, x: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for row in &lp.rows {
        let lhs: f64 = row.coeffs.iter().map(|&(v, c)| c * x[v]).sum();
        let viol = match row.relation {
            Relation::Le => lhs - row.rhs,
            Relation::Eq => (lhs - row.rhs).abs(),
        };
        worst = worst.max(viol);
    }
    for &xi in x {
        worst = worst.max(-xi);
    }
    for &(v, val) in &lp.fixings {
        worst = worst.max((x[v] - val).abs());
    }
    worst
}

/// Worst violation of the dual system: reduced costs of free variables must
/// be ≤ 0 for a maximization, and duals of `≤` rows must be ≥ 0.
pub fn dual_feasibility_residual(lp: &LinearProgram, duals: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    let red = reduced_costs(lp, duals);
    let fixed = fixed_mask(lp);
    for v in 0..lp.n_vars {
        if !fixed[v] {
            worst = worst.max(red[v]);
        }
    }
    for (row, &y) in lp.rows.iter().zip(duals) {
        if row.relation == Relation::Le {
            worst = worst.max(-y);
        }
    }
    worst
}

/// |primal objective − dual objective|. Pinned variables act as equality
/// constraints whose multipliers are their reduced costs, so the dual
/// objective is `Σ_r y_r·rhs_r + Σ_pinned (c_v − y·A_v)·value_v`.
pub fn duality_gap(lp: &LinearProgram, sol: &LpSolution) -> f64 {
    let red = reduced_costs(lp, &sol.duals);
    let mut dual_obj: f64 = lp.rows.iter().zip(&sol.duals).map(|(row, y)| y * row.rhs).sum();
    for &(v, val) in &lp.fixings {
        dual_obj += red[v] * val;
    }
    (sol.objective_value - dual_obj).abs()
}

/// max over rows of |dual·slack| and over free variables of
/// |reduced cost·value| — zero at an exact optimal pair.
pub fn complementary_slackness_residual(lp: &LinearProgram, sol: &LpSolution) -> f64 {
    let mut worst = 0.0f64;
    for (row, &y) in lp.rows.iter().zip(&sol.duals) {
        if row.relation == Relation::Le {
            let lhs: f64 = row.coeffs.iter().map(|&(v, c)| c * sol.primal[v]).sum();
            worst = worst.max((y * (row.rhs - lhs)).abs());
        }
    }
    let red = reduced_costs(lp, &sol.duals);
    let fixed = fixed_mask(lp);
    for v in 0..lp.n_vars {
        if !fixed[v] {
            worst = worst.max((red[v] * sol.primal[v]).abs());
        }
    }
    worst
}

/// `c_v − Σ_r y_r·A_{r,v}` for every variable.
fn reduced_costs(lp: &LinearProgram, duals: &[f64]) -> Vec<f64> {
    let mut red = lp.objective.clone();
    for (row, &y) in lp.rows.iter().zip(duals) {
        if y != 0.0 {
            for &(v, c) in &row.coeffs {
                red[v] -= y * c;
            }
        }
    }
    red
}

fn fixed_mask(lp: &LinearProgram) -> Vec<bool> {
    let mut fixed = vec![false; lp.n_vars];
    for &(v, _) in &lp.fixings {
        fixed[v] = true;
    }
    fixed
}
