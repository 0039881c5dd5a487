//! Iterative rounding of a fractional allocation to an integral one.
//!
//! Given a point `z` of the welfare-relaxation polytope and a linear
//! objective `c`, the loop repeatedly re-optimizes `c` over a shrinking
//! restriction of the polytope: coordinates that have reached 0 or 1 are
//! frozen at those values, agents whose demand row was tight at the input
//! stay tight (their rows become equalities), and when a re-solve yields no
//! new integral coordinate, supply rows whose remaining fractional support
//! cannot overshoot them by more than `k − 1` units are deleted outright.
//! Each round therefore either freezes at least one more coordinate or
//! deletes at least one supply row, so the loop terminates with an integral
//! point whose objective is no worse than the input's, that consumes at most
//! `⌈s̃_j⌉ + k − 1` units of each good — at most `k − 1` beyond the unshaved
//! integer supply — and that preserves the input's zeros and tight demand
//! rows.

use crate::auction::PerturbedInstance;
use crate::error::Error;
use crate::lp::{self, LinearProgram, LpStatus, Relation};
use crate::Result;

/// Coordinates within this distance of 0 or 1 are snapped to the integer.
pub const INTEGRALITY_TOL: f64 = 1e-7;

/// Demand rows within this distance of 1 count as tight.
pub const TIGHT_DEMAND_TOL: f64 = 1e-7;

fn snap(v: f64) -> f64 {
    if v.abs() <= INTEGRALITY_TOL {
        0.0
    } else if (v - 1.0).abs() <= INTEGRALITY_TOL {
        1.0
    } else {
        v
    }
}

/// Whether every coordinate is exactly 0 or 1 (post-snap representation).
pub fn is_integral_point(x: &[f64]) -> bool {
    x.iter().all(|&v| v == 0.0 || v == 1.0)
}

/// Working state of the rounding loop. Exposed so the supply-row drop rule
/// can be driven and inspected on its own.
#[derive(Clone, Debug)]
pub struct RoundingState {
    pub iteration: usize,
    /// Current point; integral coordinates are exactly 0.0/1.0.
    pub point: Vec<f64>,
    /// Agents whose demand row was tight at the input (kept tight throughout).
    pub tight_agents: Vec<bool>,
    /// Supply rows still enforced.
    pub active_goods: Vec<bool>,
    /// Perturbed supply minus consumption by frozen-at-1 coordinates.
    pub residual_supplies: Vec<f64>,
    /// Bundle indices with strictly fractional value, per agent.
    pub fractional_support: Vec<Vec<usize>>,
}

impl RoundingState {
    pub fn new(z: &[f64], ctx: &PerturbedInstance) -> Result<Self> {
        if z.len() != ctx.n_vars() {
            return Err(Error::InvalidConfig(format!(
                "point has {} coordinates for {} variables",
                z.len(),
                ctx.n_vars()
            )));
        }
        // Inputs produced by perturbing an LP optimum can stick out of the
        // unit box by a hair; clamp before snapping so "fractional" always
        // means strictly inside (0, 1).
        let point: Vec<f64> = z.iter().map(|&v| snap(v.clamp(0.0, 1.0))).collect();
        let tight_agents = ctx
            .agent_demands(&point)
            .iter()
            .map(|&d| (d - 1.0).abs() <= TIGHT_DEMAND_TOL)
            .collect();
        let mut state = RoundingState {
            iteration: 0,
            point,
            tight_agents,
            active_goods: vec![true; ctx.n_goods()],
            residual_supplies: vec![0.0; ctx.n_goods()],
            fractional_support: Vec::new(),
        };
        state.refresh(ctx);
        Ok(state)
    }

    /// Recompute the fractional support and residual supplies from `point`.
    fn refresh(&mut self, ctx: &PerturbedInstance) {
        let nb = ctx.n_bundles();
        self.fractional_support = (0..ctx.n_agents())
            .map(|i| {
                (0..nb)
                    .filter(|&b| {
                        let v = self.point[ctx.var(i, b)];
                        v > 0.0 && v < 1.0
                    })
                    .collect()
            })
            .collect();
        let mut frozen = self.point.clone();
        for v in frozen.iter_mut() {
            if *v > 0.0 && *v < 1.0 {
                *v = 0.0;
            }
        }
        let usage = ctx.good_usage(&frozen);
        for j in 0..ctx.n_goods() {
            let r = ctx.perturbed_supplies[j] - usage[j];
            // Active rows can only dip below zero by float dust.
            self.residual_supplies[j] = if r < 0.0 && r > -1e-6 { 0.0 } else { r };
        }
    }

    pub fn n_fractional(&self) -> usize {
        self.fractional_support.iter().map(Vec::len).sum()
    }
}

/// Delete every still-active supply row that the remaining fractional
/// support cannot overshoot by more than `k − 1` units: keep good `j` only
/// while `Σ_i Σ_{B fractional} B_j > ⌈residual_j⌉ + k − 1`. Errors with
/// [`Error::RoundingStall`] when nothing can be deleted.
pub fn drop_rule(state: &mut RoundingState, ctx: &PerturbedInstance) -> Result<Vec<usize>> {
    let k = ctx.instance.k as f64;
    let mut footprint = vec![0.0f64; ctx.n_goods()];
    for supp in &state.fractional_support {
        for &b in supp {
            for (j, &cnt) in ctx.bundles[b].counts.iter().enumerate() {
                footprint[j] += cnt as f64;
            }
        }
    }
    let mut dropped = Vec::new();
    for j in 0..ctx.n_goods() {
        if !state.active_goods[j] {
            continue;
        }
        let bound = (state.residual_supplies[j] - 1e-9).ceil().max(0.0) + (k - 1.0);
        if footprint[j] <= bound {
            state.active_goods[j] = false;
            dropped.push(j);
        }
    }
    if dropped.is_empty() {
        return Err(Error::RoundingStall(format!(
            "no supply row met the drop condition at iteration {} ({} fractional coordinates)",
            state.iteration,
            state.n_fractional()
        )));
    }
    Ok(dropped)
}

/// Round `z` to an integral point while weakly improving `c·z`.
///
/// `z` must satisfy the demand rows and perturbed supply rows of `ctx`; the
/// output is integral, preserves `z`'s zeros and tight demand rows, consumes
/// at most `⌈s̃_j⌉ + k − 1` units of good `j` (at most `k − 1` over the
/// unshaved supply), and has `c·out ≥ c·z` up to solver tolerance.
pub fn iterative_rounding(z: &[f64], c: &[f64], ctx: &PerturbedInstance) -> Result<Vec<f64>> {
    if c.len() != ctx.n_vars() {
        return Err(Error::InvalidConfig(format!(
            "objective has {} coordinates for {} variables",
            c.len(),
            ctx.n_vars()
        )));
    }
    let mut state = RoundingState::new(z, ctx)?;
    // Every round freezes a coordinate or deletes a supply row.
    let cap = state.n_fractional() + ctx.n_goods() + 5;
    loop {
        if state.n_fractional() == 0 {
            return Ok(state.point);
        }
        if state.iteration > cap {
            return Err(Error::RoundingStall(format!(
                "no integral point after {} iterations",
                state.iteration
            )));
        }
        let before = state.n_fractional();
        reoptimize(&mut state, c, ctx)?;
        state.refresh(ctx);
        if state.n_fractional() >= before {
            // The re-solve froze nothing; make progress by deleting rows.
            drop_rule(&mut state, ctx)?;
        }
        state.iteration += 1;
    }
}

/// Re-maximize `c` over the restriction of the polytope to the current
/// fractional support and active supply rows, then write the extreme-point
/// solution back into `state.point`.
fn reoptimize(state: &mut RoundingState, c: &[f64], ctx: &PerturbedInstance) -> Result<()> {
    let mut globals = Vec::new();
    for (i, supp) in state.fractional_support.iter().enumerate() {
        for &b in supp {
            globals.push((i, b, ctx.var(i, b)));
        }
    }
    let mut lp = LinearProgram::new(globals.len(), globals.iter().map(|&(_, _, g)| c[g]).collect());
    for (i, supp) in state.fractional_support.iter().enumerate() {
        if supp.is_empty() {
            continue;
        }
        let coeffs: Vec<(usize, f64)> = globals
            .iter()
            .enumerate()
            .filter(|(_, &(gi, _, _))| gi == i)
            .map(|(local, _)| (local, 1.0))
            .collect();
        // A frozen-at-1 agent never has fractional coordinates left, so the
        // demand row of an agent appearing here always has headroom 1.
        lp.rows.push(lp::LpRow {
            coeffs,
            relation: if state.tight_agents[i] { Relation::Eq } else { Relation::Le },
            rhs: 1.0,
        });
    }
    for j in 0..ctx.n_goods() {
        if !state.active_goods[j] {
            continue;
        }
        let coeffs: Vec<(usize, f64)> = globals
            .iter()
            .enumerate()
            .filter_map(|(local, &(_, b, _))| {
                let cnt = ctx.bundles[b].counts[j];
                (cnt > 0).then_some((local, cnt as f64))
            })
            .collect();
        lp.le(coeffs, state.residual_supplies[j].max(0.0));
    }
    let sol = lp::solve(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::NumericalFailure(format!(
            "rounding subproblem reported {:?} with {} variables at iteration {}",
            sol.status,
            globals.len(),
            state.iteration
        )));
    }
    for (local, &(_, _, g)) in globals.iter().enumerate() {
        state.point[g] = snap(sol.primal[local].clamp(0.0, 1.0));
    }
    Ok(())
}
