//! Exact reference solver for tiny markets: exhaustive per-agent choice
//! search with capacity and optimistic-bound pruning, stopped hard by a
//! state budget so it can never run away on large inputs.

use crate::auction::{enumerate_k_bundles, AuctionInstance, Bundle, PerturbedInstance};
use crate::{Error, Result};

/// Default hard cap on search states explored by the exact solver.
pub const DEFAULT_ORACLE_STATE_CAP: u64 = 1_000_000;

/// Exact optimum over integral allocations.
#[derive(Clone, Debug)]
pub struct OracleSolution {
    /// Chosen bundle index per agent; `None` leaves the agent empty-handed.
    pub assignment: Vec<Option<usize>>,
    /// Total value of that assignment under the given value matrix.
    pub value: f64,
}

/// Maximize `Σ_i values[i][assignment_i]` over integral allocations.
///
/// `values[i][b]` is agent `i`'s value for bundle `b`; per-good usage must
/// stay weakly below `supplies` (fractional entries floor the integer usage
/// they admit). Explores at most `state_cap` search states before giving up.
pub fn ip_oracle(
    values: &[Vec<f64>],
    bundles: &[Bundle],
    supplies: &[f64],
    state_cap: u64,
) -> Result<OracleSolution> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("no agents to assign".into()));
    }
    for (i, row) in values.iter().enumerate() {
        if row.len() != bundles.len() {
            return Err(Error::InvalidConfig(format!(
                "agent {i} has {} values for {} bundles",
                row.len(),
                bundles.len()
            )));
        }
    }
    for bundle in bundles {
        if bundle.counts.len() != supplies.len() {
            return Err(Error::InvalidConfig(format!(
                "bundle touches {} goods but {} supplies were given",
                bundle.counts.len(),
                supplies.len()
            )));
        }
    }

    let n_agents = values.len();
    // Visiting agents in descending best-value order and bundles in
    // descending value order makes the optimistic bound bite early.
    let mut order: Vec<usize> = (0..n_agents).collect();
    let best_of = |i: usize| values[i].iter().cloned().fold(0.0f64, f64::max);
    order.sort_by(|&a, &b| best_of(b).partial_cmp(&best_of(a)).unwrap());

    let mut ranked: Vec<Vec<usize>> = Vec::with_capacity(n_agents);
    for &i in &order {
        let mut idx: Vec<usize> = (0..bundles.len()).collect();
        idx.sort_by(|&a, &b| values[i][b].partial_cmp(&values[i][a]).unwrap());
        ranked.push(idx);
    }
    // suffix_best[d] = loosest upper bound on what agents at depth ≥ d can add.
    let mut suffix_best = vec![0.0f64; n_agents + 1];
    for d in (0..n_agents).rev() {
        suffix_best[d] = suffix_best[d + 1] + best_of(order[d]);
    }

    let mut search = Search {
        values,
        bundles,
        supplies,
        order: &order,
        ranked: &ranked,
        suffix_best: &suffix_best,
        state_cap,
        states: 0,
        usage: vec![0u32; supplies.len()],
        current: vec![None; n_agents],
        best_value: f64::NEG_INFINITY,
        best_assignment: vec![None; n_agents],
    };
    search.descend(0, 0.0)?;
    Ok(OracleSolution { assignment: search.best_assignment, value: search.best_value.max(0.0) })
}

/// Exact optimum of an instance under its own valuations and supplies.
pub fn ip_oracle_instance(instance: &AuctionInstance) -> Result<OracleSolution> {
    instance.validate()?;
    let bundles = enumerate_k_bundles(instance.n_goods, instance.k)?;
    let supplies: Vec<f64> = instance.supplies.iter().map(|&s| s as f64).collect();
    ip_oracle(&instance.valuations, &bundles, &supplies, DEFAULT_ORACLE_STATE_CAP)
}

/// Jitter-weighted value matrix of a perturbed instance, one row per agent.
pub fn weighted_value_matrix(p: &PerturbedInstance) -> Vec<Vec<f64>> {
    (0..p.n_agents())
        .map(|i| {
            (0..p.n_bundles()).map(|b| p.weights[i][b] * p.instance.valuations[i][b]).collect()
        })
        .collect()
}

struct Search<'a> {
    values: &'a [Vec<f64>],
    bundles: &'a [Bundle],
    supplies: &'a [f64],
    order: &'a [usize],
    ranked: &'a [Vec<usize>],
    suffix_best: &'a [f64],
    state_cap: u64,
    states: u64,
    usage: Vec<u32>,
    current: Vec<Option<usize>>,
    best_value: f64,
    best_assignment: Vec<Option<usize>>,
}

impl Search<'_> {
    fn descend(&mut self, depth: usize, acc: f64) -> Result<()> {
        self.states += 1;
        if self.states > self.state_cap {
            return Err(Error::OracleTooLarge(self.state_cap));
        }
        if acc + self.suffix_best[depth] <= self.best_value + 1e-12 {
            return Ok(());
        }
        if depth == self.order.len() {
            self.best_value = acc;
            self.best_assignment = self.current.clone();
            return Ok(());
        }
        let agent = self.order[depth];
        for &b in &self.ranked[depth] {
            if !self.fits(b) {
                continue;
            }
            for (j, &c) in self.bundles[b].counts.iter().enumerate() {
                self.usage[j] += c;
            }
            self.current[agent] = Some(b);
            self.descend(depth + 1, acc + self.values[agent][b])?;
            self.current[agent] = None;
            for (j, &c) in self.bundles[b].counts.iter().enumerate() {
                self.usage[j] -= c;
            }
        }
        // The agent may also walk away empty-handed.
        self.descend(depth + 1, acc)
    }

    fn fits(&self, b: usize) -> bool {
        self.bundles[b]
            .counts
            .iter()
            .enumerate()
            .all(|(j, &c)| c == 0 || (self.usage[j] + c) as f64 <= self.supplies[j] + 1e-9)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::{perturb, MechanismConfig};
    use crate::lp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_supplies(n: usize) -> Vec<f64> {
        vec![1.0; n]
    }

    #[test]
    fn one_agent_takes_its_argmax() {
        // Canonical bundles for 2 goods, k = 1: (1,0), (0,1).
        let bundles = enumerate_k_bundles(2, 1).unwrap();
        let values = vec![vec![3.0, 7.0]];
        let sol = ip_oracle(&values, &bundles, &unit_supplies(2), 1000).unwrap();
        assert_eq!(sol.value, 7.0);
        assert_eq!(sol.assignment, vec![Some(1)]);
    }

    #[test]
    fn contested_unit_goes_to_the_higher_value() {
        let bundles = enumerate_k_bundles(1, 1).unwrap();
        let values = vec![vec![2.0], vec![1.0]];
        let sol = ip_oracle(&values, &bundles, &unit_supplies(1), 1000).unwrap();
        assert_eq!(sol.value, 2.0);
        assert_eq!(sol.assignment, vec![Some(0), None]);
    }

    #[test]
    fn fractional_supply_floors_integer_usage() {
        let bundles = enumerate_k_bundles(1, 1).unwrap();
        let values = vec![vec![5.0]];
        let starved = ip_oracle(&values, &bundles, &[0.9], 1000).unwrap();
        assert_eq!(starved.value, 0.0);
        let fed = ip_oracle(&values, &bundles, &[1.1], 1000).unwrap();
        assert_eq!(fed.value, 5.0);
    }

    #[test]
    fn state_guard_trips_on_a_tiny_budget() {
        let bundles = enumerate_k_bundles(2, 2).unwrap();
        let values = vec![vec![1.0; bundles.len()]; 4];
        let supplies = vec![4.0, 4.0];
        match ip_oracle(&values, &bundles, &supplies, 5) {
            Err(Error::OracleTooLarge(cap)) => assert_eq!(cap, 5),
            other => panic!("expected the state guard to trip, got {other:?}"),
        }
    }

    /// Mixed-radix enumeration of every choice vector, as an independent
    /// check of the pruned search.
    fn exhaustive_best(values: &[Vec<f64>], bundles: &[Bundle], supplies: &[f64]) -> f64 {
        let n = values.len();
        let radix = bundles.len() + 1; // the extra digit is "nothing"
        let mut best = 0.0f64;
        let total = radix.pow(n as u32);
        for code in 0..total {
            let mut c = code;
            let mut usage = vec![0u32; supplies.len()];
            let mut value = 0.0;
            let mut ok = true;
            for row in values {
                let digit = c % radix;
                c /= radix;
                if digit == bundles.len() {
                    continue;
                }
                for (j, &cnt) in bundles[digit].counts.iter().enumerate() {
                    usage[j] += cnt;
                }
                value += row[digit];
            }
            for (j, &u) in usage.iter().enumerate() {
                if u as f64 > supplies[j] + 1e-9 {
                    ok = false;
                    break;
                }
            }
            if ok {
                best = best.max(value);
            }
        }
        best
    }

    #[test]
    fn pruned_search_matches_plain_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        for _ in 0..30 {
            let n_goods = rng.gen_range(1..=2usize);
            let k = rng.gen_range(1..=2u32);
            let n_agents = rng.gen_range(1..=3usize);
            let bundles = enumerate_k_bundles(n_goods, k).unwrap();
            let values: Vec<Vec<f64>> = (0..n_agents)
                .map(|_| (0..bundles.len()).map(|_| rng.gen_range(0.0..9.0)).collect())
                .collect();
            let supplies: Vec<f64> = (0..n_goods).map(|_| rng.gen_range(1..=2u32) as f64).collect();
            let sol = ip_oracle(&values, &bundles, &supplies, 1_000_000).unwrap();
            let brute = exhaustive_best(&values, &bundles, &supplies);
            assert!(
                (sol.value - brute).abs() <= 1e-9,
                "pruned {} vs exhaustive {brute}",
                sol.value
            );
        }
    }

    #[test]
    fn relaxation_dominates_the_exact_optimum_at_equal_supplies() {
        let cfg = MechanismConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for case in 0..40 {
            let n_goods = rng.gen_range(1..=3usize);
            let k = rng.gen_range(1..=2u32);
            let n_agents = rng.gen_range(1..=4usize);
            let bundles = enumerate_k_bundles(n_goods, k).unwrap();
            let instance = AuctionInstance {
                n_agents,
                n_goods,
                supplies: (0..n_goods).map(|_| rng.gen_range(1..=3u32)).collect(),
                k,
                valuations: (0..n_agents)
                    .map(|_| (0..bundles.len()).map(|_| rng.gen_range(0.0..10.0)).collect())
                    .collect(),
            };
            let p = perturb(&instance, &cfg, &mut rng).unwrap();
            let sol = lp::solve(&crate::auction::build_lip(&p)).unwrap();
            let weighted = weighted_value_matrix(&p);
            let exact = ip_oracle(&weighted, &p.bundles, &p.perturbed_supplies, 1_000_000).unwrap();
            assert!(
                sol.objective_value >= exact.value - 1e-9 * (1.0 + exact.value.abs()),
                "case {case}: relaxation {} below exact {}",
                sol.objective_value,
                exact.value
            );
        }
    }
}
