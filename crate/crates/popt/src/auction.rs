//! Auction instances, bundle enumeration, random perturbation, and assembly
//! of the welfare-relaxation LP.
//!
//! A bundle is a multiset of goods with at least one and at most `k` units
//! in total. Valuations are stored densely, one value per (agent, bundle)
//! pair over the canonical bundle order produced by [`enumerate_k_bundles`].
//! Before solving, the instance is randomly perturbed: every valuation gets
//! a multiplicative weight drawn uniformly from `[1−δ_w, 1+δ_w]`, and every
//! supply is shaved by an amount drawn uniformly from `[δ_ε, 2δ_ε]`. The
//! weight jitter makes the LP optimum generically unique; the supply shave
//! creates the slack that the lottery construction later spends.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::lp::LinearProgram;
use crate::Result;

/// A multiset of goods: `counts[j]` units of good `j`, with
/// `1 ≤ Σ counts ≤ k`. The empty bundle is never materialized — receiving
/// nothing is represented by the slack of an agent's demand row.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Bundle {
    pub counts: Vec<u32>,
}

impl Bundle {
    /// Total number of units in the bundle.
    pub fn size(&self) -> u32 {
        self.counts.iter().sum()
    }
}

/// Error cap on bundle-space enumeration (number of bundles).
pub const DEFAULT_BUNDLE_CAP: u64 = 10_000_000;

/// Number of bundles of size 1..=k over `n_goods` goods:
/// `Σ_{m=1}^{k} C(n_goods + m − 1, m)`.
pub fn bundle_space_size(n_goods: usize, k: u32) -> u128 {
    let mut total: u128 = 0;
    for m in 1..=k as u128 {
        // C(n + m − 1, m) built multiplicatively.
        let mut c: u128 = 1;
        for i in 0..m {
            c = c.checked_mul(n_goods as u128 + m - 1 - i).expect("bundle count overflow")
                / (i + 1);
        }
        total = total.checked_add(c).expect("bundle count overflow");
    }
    total
}

/// All bundles of size 1..=k over `n_goods` goods, in canonical order:
/// ascending size, and within a size the lexicographic order of the
/// non-decreasing good-index sequence (so for 2 goods and k=2:
/// (1,0), (0,1), (2,0), (1,1), (0,2)).
pub fn enumerate_k_bundles(n_goods: usize, k: u32) -> Result<Vec<Bundle>> {
    enumerate_k_bundles_capped(n_goods, k, DEFAULT_BUNDLE_CAP)
}

/// As [`enumerate_k_bundles`], with an explicit size cap.
pub fn enumerate_k_bundles_capped(n_goods: usize, k: u32, cap: u64) -> Result<Vec<Bundle>> {
    if n_goods == 0 || k == 0 {
        return Err(Error::InvalidConfig(format!(
            "bundle space needs at least one good and k ≥ 1 (got {n_goods} goods, k={k})"
        )));
    }
    let count = bundle_space_size(n_goods, k);
    if count > cap as u128 {
        return Err(Error::BundleSpaceTooLarge { count, cap });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut counts = vec![0u32; n_goods];
    for m in 1..=k {
        fill_size(n_goods, m, 0, &mut counts, &mut out);
    }
    debug_assert_eq!(out.len() as u128, count);
    Ok(out)
}

/// Emit all bundles of exactly `remaining` more units drawn from goods
/// `from..`, in lexicographic order of the underlying index sequence.
fn fill_size(
    n_goods: usize,
    remaining: u32,
    from: usize,
    counts: &mut Vec<u32>,
    out: &mut Vec<Bundle>,
) {
    if remaining == 0 {
        out.push(Bundle { counts: counts.clone() });
        return;
    }
    for j in from..n_goods {
        counts[j] += 1;
        fill_size(n_goods, remaining - 1, j, counts, out);
        counts[j] -= 1;
    }
}

/// One auction market: agents, goods with integer supplies, a bundle-size
/// cap `k`, and dense valuations over the canonical bundle order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuctionInstance {
    pub n_agents: usize,
    pub n_goods: usize,
    /// Positive integer supply per good.
    pub supplies: Vec<u32>,
    pub k: u32,
    /// `valuations[agent][bundle]`, nonnegative, over [`enumerate_k_bundles`] order.
    pub valuations: Vec<Vec<f64>>,
}

impl AuctionInstance {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 {
            return Err(Error::InvalidConfig("instance has no agents".into()));
        }
        if self.supplies.len() != self.n_goods {
            return Err(Error::InvalidConfig(format!(
                "{} supplies for {} goods",
                self.supplies.len(),
                self.n_goods
            )));
        }
        if self.supplies.iter().any(|&s| s == 0) {
            return Err(Error::InvalidConfig("supplies must be positive".into()));
        }
        let n_bundles = bundle_space_size(self.n_goods, self.k);
        if self.valuations.len() != self.n_agents {
            return Err(Error::InvalidConfig(format!(
                "{} valuation rows for {} agents",
                self.valuations.len(),
                self.n_agents
            )));
        }
        for (i, row) in self.valuations.iter().enumerate() {
            if row.len() as u128 != n_bundles {
                return Err(Error::InvalidConfig(format!(
                    "agent {i} has {} values for {n_bundles} bundles",
                    row.len()
                )));
            }
            if row.iter().any(|u| !u.is_finite() || *u < 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "agent {i} has a negative or non-finite valuation"
                )));
            }
        }
        Ok(())
    }

    /// Largest single-bundle value of each agent; used to scale the default
    /// price-support tolerance.
    pub fn max_values(&self) -> Vec<f64> {
        self.valuations.iter().map(|row| row.iter().cloned().fold(0.0, f64::max)).collect()
    }
}

/// Perturbation magnitudes, lottery stopping tolerance, and RNG seed for one
/// mechanism run.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MechanismConfig {
    /// Half-width of the multiplicative valuation jitter `[1−δ_w, 1+δ_w]`.
    pub delta_w: f64,
    /// Supply shave scale: each supply loses a draw from `[δ_ε, 2δ_ε]`.
    pub delta_eps: f64,
    /// Lottery termination tolerance on ‖expected allocation − LP optimum‖.
    pub epsilon: f64,
    /// Price-support tolerance; `None` means `2·δ_w·max_i max_B u_i(B)`.
    pub epsilon_u: Option<f64>,
    pub rng_seed: u64,
}

impl Default for MechanismConfig {
    fn default() -> Self {
        MechanismConfig {
            delta_w: 1e-5,
            delta_eps: 1e-3,
            epsilon: 1e-6,
            epsilon_u: None,
            rng_seed: 0,
        }
    }
}

impl MechanismConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.delta_w >= 0.0
            && self.delta_w < 1.0
            && self.delta_eps >= 0.0
            && self.epsilon > 0.0
            && self.epsilon_u.map_or(true, |e| e >= 0.0)
            && self.delta_w.is_finite()
            && self.delta_eps.is_finite()
            && self.epsilon.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "perturbation parameters out of range: δ_w={}, δ_ε={}, ε={}",
                self.delta_w, self.delta_eps, self.epsilon
            )))
        }
    }
}

/// An instance together with its sampled perturbation: valuation weights,
/// shaved supplies, the enumerated bundle space, and (when the instance was
/// built from typed agents) each agent's type label.
#[derive(Clone, Debug)]
pub struct PerturbedInstance {
    pub instance: AuctionInstance,
    pub bundles: Vec<Bundle>,
    /// `weights[agent][bundle]` in `[1−δ_w, 1+δ_w]`; equal across agents of
    /// the same type when type labels are present.
    pub weights: Vec<Vec<f64>>,
    /// `s̃_j = s_j − ε_j`, strictly positive.
    pub perturbed_supplies: Vec<f64>,
    pub agent_types: Option<Vec<usize>>,
}

impl PerturbedInstance {
    pub fn n_agents(&self) -> usize {
        self.instance.n_agents
    }

    pub fn n_goods(&self) -> usize {
        self.instance.n_goods
    }

    pub fn n_bundles(&self) -> usize {
        self.bundles.len()
    }

    /// Total number of LP variables: one per (agent, bundle) pair.
    pub fn n_vars(&self) -> usize {
        self.instance.n_agents * self.bundles.len()
    }

    /// LP column of agent `i`'s variable for bundle index `b`.
    pub fn var(&self, agent: usize, bundle: usize) -> usize {
        agent * self.bundles.len() + bundle
    }

    /// Inverse of [`PerturbedInstance::var`].
    pub fn agent_bundle(&self, var: usize) -> (usize, usize) {
        (var / self.bundles.len(), var % self.bundles.len())
    }

    /// Weighted objective coefficient `w_i(B)·u_i(B)` for every variable.
    pub fn weighted_values(&self) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.n_vars());
        for i in 0..self.instance.n_agents {
            for b in 0..self.bundles.len() {
                c.push(self.weights[i][b] * self.instance.valuations[i][b]);
            }
        }
        c
    }

    /// Units of each good consumed by allocation vector `x`.
    pub fn good_usage(&self, x: &[f64]) -> Vec<f64> {
        let nb = self.bundles.len();
        let mut usage = vec![0.0; self.instance.n_goods];
        for (v, &xv) in x.iter().enumerate() {
            if xv != 0.0 {
                let bundle = &self.bundles[v % nb];
                for (j, &cnt) in bundle.counts.iter().enumerate() {
                    if cnt > 0 {
                        usage[j] += cnt as f64 * xv;
                    }
                }
            }
        }
        usage
    }

    /// Per-agent demand-row activity `Σ_B x_i(B)`.
    pub fn agent_demands(&self, x: &[f64]) -> Vec<f64> {
        let nb = self.bundles.len();
        x.chunks(nb).map(|chunk| chunk.iter().sum()).collect()
    }

    /// The bundle index agent `i` holds in an integral allocation, if any.
    pub fn allocated_bundle(&self, x: &[f64], i: usize) -> Option<usize> {
        (0..self.bundles.len()).find(|&b| x[self.var(i, b)] == 1.0)
    }
}

/// Sample a perturbation of `instance`: i.i.d. valuation weights per
/// (agent, bundle) and supply shaves per good.
pub fn perturb<R: Rng>(
    instance: &AuctionInstance,
    cfg: &MechanismConfig,
    rng: &mut R,
) -> Result<PerturbedInstance> {
    perturb_inner(instance, None, cfg, rng)
}

/// As [`perturb`], but agents carry type labels and all agents of one type
/// share a single weight draw per bundle, so equal-type agents stay
/// exchangeable after perturbation.
pub fn perturb_with_types<R: Rng>(
    instance: &AuctionInstance,
    types: &[usize],
    cfg: &MechanismConfig,
    rng: &mut R,
) -> Result<PerturbedInstance> {
    if types.len() != instance.n_agents {
        return Err(Error::InvalidConfig(format!(
            "{} type labels for {} agents",
            types.len(),
            instance.n_agents
        )));
    }
    perturb_inner(instance, Some(types), cfg, rng)
}

fn perturb_inner<R: Rng>(
    instance: &AuctionInstance,
    types: Option<&[usize]>,
    cfg: &MechanismConfig,
    rng: &mut R,
) -> Result<PerturbedInstance> {
    instance.validate()?;
    cfg.validate()?;
    let bundles = enumerate_k_bundles(instance.n_goods, instance.k)?;
    let nb = bundles.len();
    let lo = 1.0 - cfg.delta_w;
    let hi = 1.0 + cfg.delta_w;
    let weights: Vec<Vec<f64>> = match types {
        None => (0..instance.n_agents)
            .map(|_| (0..nb).map(|_| rng.gen_range(lo..=hi)).collect())
            .collect(),
        Some(types) => {
            let n_types = types.iter().max().map_or(0, |&t| t + 1);
            let per_type: Vec<Vec<f64>> =
                (0..n_types).map(|_| (0..nb).map(|_| rng.gen_range(lo..=hi)).collect()).collect();
            types.iter().map(|&t| per_type[t].clone()).collect()
        }
    };
    let mut perturbed_supplies = Vec::with_capacity(instance.n_goods);
    for &s in &instance.supplies {
        let eps = rng.gen_range(cfg.delta_eps..=2.0 * cfg.delta_eps);
        let shaved = s as f64 - eps;
        if shaved <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "supply shave δ_ε={} drives a supply of {s} to {shaved}",
                cfg.delta_eps
            )));
        }
        perturbed_supplies.push(shaved);
    }
    Ok(PerturbedInstance {
        instance: instance.clone(),
        bundles,
        weights,
        perturbed_supplies,
        agent_types: types.map(|t| t.to_vec()),
    })
}

/// Assemble the welfare-relaxation LP: maximize `Σ_{i,B} w_i(B)·u_i(B)·x_i(B)`
/// subject to one demand row per agent (`Σ_B x_i(B) ≤ 1`, rows 0..n_agents)
/// followed by one supply row per good (`Σ_{i,B} B_j·x_i(B) ≤ s̃_j`).
pub fn build_lip(p: &PerturbedInstance) -> LinearProgram {
    build_lip_with_supplies(p, &p.perturbed_supplies)
}

/// Same LP shape as [`build_lip`] with the supply-row right-hand sides
/// replaced wholesale (used when re-checking a point against the supplies it
/// is actually optimal for).
pub fn build_lip_with_supplies(p: &PerturbedInstance, supplies: &[f64]) -> LinearProgram {
    let nb = p.bundles.len();
    let n = p.n_vars();
    let mut lp = LinearProgram::new(n, p.weighted_values());
    for i in 0..p.instance.n_agents {
        let coeffs = (0..nb).map(|b| (p.var(i, b), 1.0)).collect();
        lp.le(coeffs, 1.0);
    }
    for j in 0..p.instance.n_goods {
        let mut coeffs = Vec::new();
        for i in 0..p.instance.n_agents {
            for (b, bundle) in p.bundles.iter().enumerate() {
                if bundle.counts[j] > 0 {
                    coeffs.push((p.var(i, b), bundle.counts[j] as f64));
                }
            }
        }
        lp.le(coeffs, supplies[j]);
    }
    lp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{self, LpStatus};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_goods_two_units_enumeration() {
        let bundles = enumerate_k_bundles(2, 2).unwrap();
        let got: Vec<Vec<u32>> = bundles.into_iter().map(|b| b.counts).collect();
        assert_eq!(got, vec![vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]);
    }

    #[test]
    fn nine_goods_four_units_count() {
        assert_eq!(bundle_space_size(9, 4), 714);
        assert_eq!(enumerate_k_bundles(9, 4).unwrap().len(), 714);
    }

    #[test]
    fn enumeration_matches_count_formula_up_to_twelve_goods() {
        for n_goods in 1..=12 {
            for k in 1..=5 {
                let bundles = enumerate_k_bundles(n_goods, k).unwrap();
                assert_eq!(
                    bundles.len() as u128,
                    bundle_space_size(n_goods, k),
                    "n_goods={n_goods}, k={k}"
                );
                // No duplicates, all sizes in range.
                let set: std::collections::HashSet<_> = bundles.iter().collect();
                assert_eq!(set.len(), bundles.len());
                assert!(bundles.iter().all(|b| (1..=k).contains(&b.size())));
            }
        }
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let err = enumerate_k_bundles_capped(100, 5, 1000).unwrap_err();
        match err {
            Error::BundleSpaceTooLarge { count, cap } => {
                assert_eq!(cap, 1000);
                assert!(count > 1000);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    fn tiny_instance() -> AuctionInstance {
        AuctionInstance {
            n_agents: 2,
            n_goods: 1,
            supplies: vec![1],
            k: 1,
            valuations: vec![vec![2.0], vec![1.0]],
        }
    }

    #[test]
    fn zero_jitter_means_unit_weights() {
        let cfg = MechanismConfig { delta_w: 0.0, delta_eps: 0.01, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = perturb(&tiny_instance(), &cfg, &mut rng).unwrap();
        assert!(p.weights.iter().flatten().all(|&w| w == 1.0));
        assert!(p.perturbed_supplies[0] >= 1.0 - 0.02 && p.perturbed_supplies[0] <= 1.0 - 0.01);
    }

    #[test]
    fn perturbation_ranges_and_determinism() {
        let cfg = MechanismConfig { delta_w: 1e-5, delta_eps: 1e-3, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let p1 = perturb(&tiny_instance(), &cfg, &mut rng).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let p2 = perturb(&tiny_instance(), &cfg, &mut rng).unwrap();
        assert_eq!(p1.weights, p2.weights);
        assert_eq!(p1.perturbed_supplies, p2.perturbed_supplies);
        for w in p1.weights.iter().flatten() {
            assert!(*w >= 1.0 - 1e-5 && *w <= 1.0 + 1e-5);
        }
    }

    #[test]
    fn typed_agents_share_weights() {
        let inst = AuctionInstance {
            n_agents: 4,
            n_goods: 2,
            supplies: vec![2, 2],
            k: 2,
            valuations: vec![vec![1.0; 5]; 4],
        };
        let cfg = MechanismConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = perturb_with_types(&inst, &[0, 1, 0, 1], &cfg, &mut rng).unwrap();
        assert_eq!(p.weights[0], p.weights[2]);
        assert_eq!(p.weights[1], p.weights[3]);
        assert_ne!(p.weights[0], p.weights[1]);
    }

    #[test]
    fn oversized_shave_is_rejected() {
        let cfg = MechanismConfig { delta_eps: 0.6, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // ε_j ∈ [0.6, 1.2] can exceed the supply of 1.
        let mut failed = false;
        for _ in 0..20 {
            if perturb(&tiny_instance(), &cfg, &mut rng).is_err() {
                failed = true;
                break;
            }
        }
        assert!(failed);
    }

    #[test]
    fn lip_shape_and_solution_for_tiny_market() {
        let cfg = MechanismConfig { delta_w: 0.0, delta_eps: 0.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = perturb(&tiny_instance(), &cfg, &mut rng).unwrap();
        let lp = build_lip(&p);
        assert_eq!(lp.n_vars, 2);
        assert_eq!(lp.rows.len(), 3); // 2 demand rows, then 1 supply row
        assert_eq!(lp.objective, vec![2.0, 1.0]);
        let s = lp::solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective_value - 2.0).abs() < 1e-9);
        assert!((s.primal[0] - 1.0).abs() < 1e-9 && s.primal[1].abs() < 1e-9);
        // Supply row binds, so its dual prices the good in [1, 2].
        assert!(s.duals[2] >= 1.0 - 1e-9 && s.duals[2] <= 2.0 + 1e-9);
    }

    #[test]
    fn preset_scale_lip_shape() {
        // 30 agents, 9 goods, bundle cap 4: 714 bundles, 21,420 variables,
        // 39 rows. Shape only — solving this lives in the pipeline tests.
        let inst = AuctionInstance {
            n_agents: 30,
            n_goods: 9,
            supplies: vec![10; 9],
            k: 4,
            valuations: vec![vec![1.0; 714]; 30],
        };
        let cfg = MechanismConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = perturb(&inst, &cfg, &mut rng).unwrap();
        let lp = build_lip(&p);
        assert_eq!(lp.n_vars, 21_420);
        assert_eq!(lp.rows.len(), 39);
    }

    #[test]
    fn usage_and_demand_helpers() {
        let inst = AuctionInstance {
            n_agents: 2,
            n_goods: 2,
            supplies: vec![3, 3],
            k: 2,
            valuations: vec![vec![1.0; 5]; 2],
        };
        let cfg = MechanismConfig { delta_w: 0.0, delta_eps: 0.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = perturb(&inst, &cfg, &mut rng).unwrap();
        // Agent 0 takes (2,0) with weight 0.5, agent 1 takes (1,1) fully.
        let mut x = vec![0.0; p.n_vars()];
        x[p.var(0, 2)] = 0.5;
        x[p.var(1, 3)] = 1.0;
        assert_eq!(p.good_usage(&x), vec![2.0, 1.0]);
        assert_eq!(p.agent_demands(&x), vec![0.5, 1.0]);
    }
}
