//! Per-good prices from the welfare LP dual, and the checks that they
//! support any allocation the lottery can produce.
//!
//! The supply-row duals of the welfare relaxation price each good; a bundle
//! costs the dot product of its contents with those prices. One price
//! vector, computed once per instance, is reused for every lottery point.
//! Two guarantees are checked against it: *supporting prices* (no agent can
//! gain more than `ε_u` by swapping its assigned bundle for any other, and
//! unassigned agents see at most `ε_u` of foregone payoff) and *approximate
//! envy-freeness* (no agent values another agent's assignment more than
//! `ε_u` above its own). Violations are reported as data, not errors.

use serde::Serialize;

use crate::auction::{AuctionInstance, MechanismConfig, PerturbedInstance};
use crate::error::Error;
use crate::lp::LpSolution;
use crate::Result;

/// Anonymous linear prices, one per good.
#[derive(Clone, Debug, Serialize)]
pub struct PriceVector {
    pub per_good: Vec<f64>,
}

impl PriceVector {
    /// Price of a bundle: `Σ_j B_j·p_j`. An empty bundle costs 0.
    pub fn bundle_price(&self, counts: &[u32]) -> f64 {
        counts.iter().zip(&self.per_good).map(|(&c, &p)| c as f64 * p).sum()
    }
}

/// Extract the per-good prices (supply-row duals) from a solved welfare LP.
pub fn popt_prices(solution: &LpSolution, ctx: &PerturbedInstance) -> Result<PriceVector> {
    let n_agents = ctx.n_agents();
    let n_goods = ctx.n_goods();
    if solution.duals.len() != n_agents + n_goods {
        return Err(Error::InvalidConfig(format!(
            "expected {} duals, got {}",
            n_agents + n_goods,
            solution.duals.len()
        )));
    }
    let mut per_good = Vec::with_capacity(n_goods);
    for (j, &d) in solution.duals[n_agents..].iter().enumerate() {
        if d < -1e-9 {
            return Err(Error::NumericalFailure(format!(
                "supply dual of good {j} is negative: {d}"
            )));
        }
        per_good.push(d.max(0.0));
    }
    Ok(PriceVector { per_good })
}

/// Tolerance at which the supporting-price check is guaranteed to pass:
/// twice the valuation jitter times the largest single-bundle value.
pub fn default_epsilon_u(instance: &AuctionInstance, cfg: &MechanismConfig) -> f64 {
    2.0 * cfg.delta_w * instance.max_values().into_iter().fold(0.0, f64::max)
}

/// The configured tolerance override, or [`default_epsilon_u`].
pub fn resolve_epsilon_u(instance: &AuctionInstance, cfg: &MechanismConfig) -> f64 {
    cfg.epsilon_u.unwrap_or_else(|| default_epsilon_u(instance, cfg))
}

/// Outcome of the supporting-price check for one allocation.
#[derive(Clone, Debug, Serialize)]
pub struct SupportingCheck {
    /// Per agent: realized payoff minus the best available payoff
    /// (max over all bundles and the zero outside option); ≤ 0, and exactly
    /// 0.0 when the assignment is the agent's argmax.
    pub payoff_diffs: Vec<f64>,
    /// Largest shortfall against the check's threshold (can be negative).
    pub worst_violation: f64,
    pub pass: bool,
}

/// Outcome of the pairwise envy check for one allocation.
#[derive(Clone, Debug, Serialize)]
pub struct EnvyCheck {
    /// Largest of `payoff_i(k's bundle) − payoff_i(own bundle)` over
    /// ordered pairs `i ≠ k` (0 when fewer than two agents).
    pub worst_violation: f64,
    /// Pass under the subtracted-tolerance reading: worst ≤ ε_u.
    pub pass: bool,
    /// Pass under the stricter added-tolerance reading: worst ≤ −ε_u.
    pub literal_pass: bool,
}

/// Both checks for one allocation at one tolerance.
#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub epsilon_u: f64,
    pub supporting: SupportingCheck,
    pub envy: EnvyCheck,
}

/// Per-agent payoff of holding bundle `b` (by true utility) at prices `p`.
fn payoff(ctx: &PerturbedInstance, p: &PriceVector, i: usize, b: usize) -> f64 {
    ctx.instance.valuations[i][b] - p.bundle_price(&ctx.bundles[b].counts)
}

/// Check that `prices` support the integral allocation `point`: every
/// assigned agent's payoff is within `epsilon_u` of its best bundle payoff,
/// and every unassigned agent's best bundle payoff is at most `epsilon_u`.
pub fn verify_supporting(
    point: &[f64],
    ctx: &PerturbedInstance,
    prices: &PriceVector,
    epsilon_u: f64,
) -> SupportingCheck {
    let mut payoff_diffs = Vec::with_capacity(ctx.n_agents());
    let mut worst = f64::NEG_INFINITY;
    for i in 0..ctx.n_agents() {
        let best = (0..ctx.n_bundles())
            .map(|b| payoff(ctx, prices, i, b))
            .fold(f64::NEG_INFINITY, f64::max);
        let realized = match ctx.allocated_bundle(point, i) {
            Some(b) => payoff(ctx, prices, i, b),
            None => 0.0,
        };
        // `best.max(0.0)` reuses the identical float expressions, so an
        // agent assigned its argmax (or cleanly unassigned) diffs to 0.0
        // bitwise rather than to rounding dust.
        payoff_diffs.push(realized - best.max(0.0));
        worst = worst.max(best - realized);
    }
    let worst_violation = if worst.is_finite() { worst } else { 0.0 };
    SupportingCheck { payoff_diffs, worst_violation, pass: worst_violation <= epsilon_u }
}

/// Check approximate envy-freeness of the integral allocation `point`:
/// no agent values another's assignment more than `epsilon_u` above its own
/// (each valued by the agent's own utilities at the shared prices).
pub fn verify_envy_free(
    point: &[f64],
    ctx: &PerturbedInstance,
    prices: &PriceVector,
    epsilon_u: f64,
) -> EnvyCheck {
    let n = ctx.n_agents();
    let holdings: Vec<Option<usize>> = (0..n).map(|i| ctx.allocated_bundle(point, i)).collect();
    let mut worst = f64::NEG_INFINITY;
    for i in 0..n {
        let own = match holdings[i] {
            Some(b) => payoff(ctx, prices, i, b),
            None => 0.0,
        };
        for (k, holding) in holdings.iter().enumerate() {
            if k == i {
                continue;
            }
            let theirs = match holding {
                Some(b) => payoff(ctx, prices, i, *b),
                None => 0.0,
            };
            worst = worst.max(theirs - own);
        }
    }
    let worst_violation = if worst.is_finite() { worst } else { 0.0 };
    EnvyCheck {
        worst_violation,
        pass: worst_violation <= epsilon_u,
        literal_pass: worst_violation <= -epsilon_u,
    }
}

/// Run both checks and bundle the outcomes.
pub fn verify_point(
    point: &[f64],
    ctx: &PerturbedInstance,
    prices: &PriceVector,
    epsilon_u: f64,
) -> VerificationReport {
    VerificationReport {
        epsilon_u,
        supporting: verify_supporting(point, ctx, prices, epsilon_u),
        envy: verify_envy_free(point, ctx, prices, epsilon_u),
    }
}

/// Worst gap, over assigned agents, between the assigned bundle's
/// *jitter-weighted* payoff and the best jitter-weighted payoff. At an LP
/// optimum this is zero up to solver tolerance for every lottery point
/// (assignments live inside the optimum's support, whose reduced costs
/// vanish); the unweighted checks above then inherit at most the jitter.
pub fn allocated_weighted_argmax_gap(
    point: &[f64],
    ctx: &PerturbedInstance,
    prices: &PriceVector,
) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..ctx.n_agents() {
        if let Some(held) = ctx.allocated_bundle(point, i) {
            let wpay = |b: usize| {
                ctx.weights[i][b] * ctx.instance.valuations[i][b]
                    - prices.bundle_price(&ctx.bundles[b].counts)
            };
            let best = (0..ctx.n_bundles()).map(wpay).fold(f64::NEG_INFINITY, f64::max);
            worst = worst.max(best - wpay(held));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::{build_lip, perturb, AuctionInstance, MechanismConfig};
    use crate::lottery::construct_lottery;
    use crate::lp::{self, LpStatus};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn solve_instance(
        inst: &AuctionInstance,
        cfg: &MechanismConfig,
        seed: u64,
    ) -> (PerturbedInstance, crate::lp::LpSolution) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = perturb(inst, cfg, &mut rng).unwrap();
        let sol = lp::solve(&build_lip(&p)).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        (p, sol)
    }

    #[test]
    fn slack_supply_row_prices_to_zero() {
        let inst = AuctionInstance {
            n_agents: 1,
            n_goods: 1,
            supplies: vec![2],
            k: 1,
            valuations: vec![vec![5.0]],
        };
        let cfg = MechanismConfig { delta_w: 0.0, delta_eps: 1e-3, ..Default::default() };
        let (p, sol) = solve_instance(&inst, &cfg, 3);
        let prices = popt_prices(&sol, &p).unwrap();
        assert_eq!(prices.per_good, vec![0.0]);
    }

    #[test]
    fn contested_unit_prices_between_values() {
        let inst = AuctionInstance {
            n_agents: 2,
            n_goods: 1,
            supplies: vec![1],
            k: 1,
            valuations: vec![vec![2.0], vec![1.0]],
        };
        let cfg = MechanismConfig { delta_w: 0.0, delta_eps: 0.0, ..Default::default() };
        let (p, sol) = solve_instance(&inst, &cfg, 3);
        let prices = popt_prices(&sol, &p).unwrap();
        let price = prices.per_good[0];
        assert!((1.0..=2.0).contains(&price), "price {price}");
        // At the hand-checkable dual p = 1: assigned agent nets 1 (its
        // max), the losing agent's best payoff is 0.
        let point = vec![1.0, 0.0];
        let report = verify_point(&point, &p, &prices, 1e-9);
        assert!(report.supporting.pass);
        assert!(report.envy.pass);
        assert_eq!(report.supporting.payoff_diffs, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_valuations_price_to_zero() {
        let inst = AuctionInstance {
            n_agents: 2,
            n_goods: 2,
            supplies: vec![1, 1],
            k: 2,
            valuations: vec![vec![0.0; 5], vec![0.0; 5]],
        };
        let cfg = MechanismConfig { delta_w: 1e-5, delta_eps: 1e-3, ..Default::default() };
        let (p, sol) = solve_instance(&inst, &cfg, 9);
        let prices = popt_prices(&sol, &p).unwrap();
        assert!(prices.per_good.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bundle_price_is_a_dot_product() {
        let p = PriceVector { per_good: vec![3.0, 4.0] };
        assert_eq!(p.bundle_price(&[2, 1]), 10.0);
        assert_eq!(p.bundle_price(&[0, 0]), 0.0);
        assert_eq!(p.bundle_price(&[0, 1]), 4.0);
    }

    #[test]
    fn free_argmax_allocation_has_zero_violations() {
        let inst = AuctionInstance {
            n_agents: 2,
            n_goods: 2,
            supplies: vec![1, 1],
            k: 1,
            valuations: vec![vec![4.0, 1.0], vec![1.0, 4.0]],
        };
        let cfg = MechanismConfig { delta_w: 0.0, delta_eps: 1e-3, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = perturb(&inst, &cfg, &mut rng).unwrap();
        let prices = PriceVector { per_good: vec![0.0, 0.0] };
        // Each agent holds its argmax bundle at zero prices.
        let point = vec![1.0, 0.0, 0.0, 1.0];
        let sup = verify_supporting(&point, &p, &prices, 0.0);
        assert!(sup.pass);
        assert_eq!(sup.worst_violation, 0.0);
        assert_eq!(sup.payoff_diffs, vec![0.0, 0.0]);
    }

    #[test]
    fn constructed_envy_is_reported_not_thrown() {
        let inst = AuctionInstance {
            n_agents: 2,
            n_goods: 1,
            supplies: vec![1],
            k: 1,
            valuations: vec![vec![2.0], vec![1.0]],
        };
        let cfg = MechanismConfig { delta_w: 0.0, delta_eps: 1e-3, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = perturb(&inst, &cfg, &mut rng).unwrap();
        let prices = PriceVector { per_good: vec![0.0] };
        let point = vec![0.0, 1.0];
        let envy = verify_envy_free(&point, &p, &prices, 0.5);
        assert!(!envy.pass);
        assert!((envy.worst_violation - 2.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_point_has_symmetric_slack() {
        let inst = AuctionInstance {
            n_agents: 2,
            n_goods: 2,
            supplies: vec![1, 1],
            k: 1,
            valuations: vec![vec![3.0, 3.0], vec![3.0, 3.0]],
        };
        let cfg = MechanismConfig { delta_w: 0.0, delta_eps: 1e-3, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = perturb(&inst, &cfg, &mut rng).unwrap();
        let prices = PriceVector { per_good: vec![1.0, 1.0] };
        let point = vec![1.0, 0.0, 0.0, 1.0];
        let envy = verify_envy_free(&point, &p, &prices, 0.0);
        assert_eq!(envy.worst_violation, 0.0);
        assert!(envy.pass);
    }

    #[test]
    fn opposite_jitters_can_stack_to_twice_the_single_jitter_bound() {
        // An agent tied between two bundles at the weighted optimum can see
        // envy of up to 2δ_w·M when its own bundle drew weight 1+δ_w and the
        // envied bundle drew 1−δ_w: the two weight→1 conversions accumulate.
        // This pins why the envy guarantee carries the same 2δ_w·M constant
        // as the supporting-price guarantee, not half of it.
        let dw = 1e-5;
        let inst = AuctionInstance {
            n_agents: 2,
            n_goods: 2,
            supplies: vec![1, 1],
            k: 1,
            valuations: vec![vec![10.0, 10.0], vec![10.0, 10.0]],
        };
        let cfg = MechanismConfig { delta_w: dw, delta_eps: 1e-3, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = perturb(&inst, &cfg, &mut rng).unwrap();
        p.weights[0] = vec![1.0 + dw, 1.0 - dw];
        // Prices that tie agent 0's *weighted* payoffs at 5 across both
        // bundles, as a degenerate LP optimum would.
        let prices =
            PriceVector { per_good: vec![(1.0 + dw) * 10.0 - 5.0, (1.0 - dw) * 10.0 - 5.0] };
        let point = vec![1.0, 0.0, 0.0, 1.0];
        let envy = verify_envy_free(&point, &p, &prices, dw * 10.0);
        assert!(
            (envy.worst_violation - 2.0 * dw * 10.0).abs() < 1e-12,
            "violation {}",
            envy.worst_violation
        );
        assert!(!envy.pass);
        let envy = verify_envy_free(&point, &p, &prices, 2.0 * dw * 10.0);
        assert!(envy.pass);
    }

    #[test]
    fn one_price_vector_supports_every_lottery_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let cfg =
            MechanismConfig { delta_w: 1e-5, delta_eps: 1e-3, epsilon: 1e-8, ..Default::default() };
        for case in 0..20 {
            let n_goods = rng.gen_range(1..=2);
            let n_agents = rng.gen_range(2..=4);
            let k = rng.gen_range(1..=2);
            let supplies: Vec<u32> = (0..n_goods).map(|_| rng.gen_range(1..=2)).collect();
            let nb = crate::auction::bundle_space_size(n_goods, k) as usize;
            let valuations: Vec<Vec<f64>> = (0..n_agents)
                .map(|_| (0..nb).map(|_| rng.gen_range(0.0..10.0)).collect())
                .collect();
            let inst = AuctionInstance { n_agents, n_goods, supplies, k, valuations };
            let p = perturb(&inst, &cfg, &mut rng).unwrap();
            let sol = lp::solve(&build_lip(&p)).unwrap();
            assert_eq!(sol.status, LpStatus::Optimal);
            let prices = popt_prices(&sol, &p).unwrap();
            let lot = construct_lottery(&sol.primal, &p, &cfg).unwrap();

            // Both checks are guaranteed at twice the jitter times the top
            // valuation: each side of a comparison converts one weighted
            // payoff to an unweighted one at a cost of up to δ_w·M_i.
            let support_eps = default_epsilon_u(&inst, &cfg) + 1e-9;
            let envy_eps = default_epsilon_u(&inst, &cfg) + 1e-9;
            for point in &lot.points {
                let report = verify_point(point, &p, &prices, support_eps);
                assert!(
                    report.supporting.pass,
                    "case {case}: supporting violation {}",
                    report.supporting.worst_violation
                );
                let envy = verify_envy_free(point, &p, &prices, envy_eps);
                assert!(envy.pass, "case {case}: envy violation {}", envy.worst_violation);
                assert!(
                    allocated_weighted_argmax_gap(point, &p, &prices) <= 1e-6,
                    "case {case}: assigned bundle misses the weighted argmax"
                );
                for &d in &report.supporting.payoff_diffs {
                    assert!(d <= 0.0, "case {case}: positive payoff diff {d}");
                }
            }
        }
    }
}
