//! Typed agent populations (several agents sharing each utility profile)
//! and a paired-run misreport experiment under common random numbers.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::auction::{bundle_space_size, AuctionInstance, MechanismConfig, DEFAULT_BUNDLE_CAP};
use crate::harness::mechanism::{run_mechanism_typed, MechanismOutcome};
use crate::{Error, Result};

/// A market whose agents come in types: all agents of one type share a
/// utility profile (and, inside the mechanism, one jitter draw per bundle).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypedPopulation {
    pub n_goods: usize,
    /// Positive integer supply per good.
    pub supplies: Vec<u32>,
    /// Bundle-size cap.
    pub k: u32,
    /// Per-type valuations over the canonical bundle order.
    pub type_values: Vec<Vec<f64>>,
    /// Agents per type; agent order is type 0's block, then type 1's, ...
    pub counts: Vec<usize>,
    /// Reported type per agent; `None` means everyone reports truthfully.
    #[serde(default)]
    pub reports: Option<Vec<usize>>,
}

impl TypedPopulation {
    pub fn n_agents(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn n_types(&self) -> usize {
        self.type_values.len()
    }

    /// True type of each agent, in agent order.
    pub fn truthful_labels(&self) -> Vec<usize> {
        let mut labels = Vec::with_capacity(self.n_agents());
        for (t, &c) in self.counts.iter().enumerate() {
            labels.extend(std::iter::repeat(t).take(c));
        }
        labels
    }

    /// Reports used as the baseline game: the explicit map if present,
    /// truthful otherwise.
    pub fn baseline_reports(&self) -> Vec<usize> {
        self.reports.clone().unwrap_or_else(|| self.truthful_labels())
    }

    /// The market induced by a report vector: agent `i` submits the
    /// valuations of type `reports[i]`. Returns the instance together with
    /// the labels the mechanism shares jitter draws by.
    pub fn game(&self, reports: &[usize]) -> Result<(AuctionInstance, Vec<usize>)> {
        self.validate()?;
        if reports.len() != self.n_agents() {
            return Err(Error::InvalidConfig(format!(
                "{} reports for {} agents",
                reports.len(),
                self.n_agents()
            )));
        }
        if let Some(&bad) = reports.iter().find(|&&t| t >= self.n_types()) {
            return Err(Error::InvalidConfig(format!(
                "reported type {bad} out of range ({} types)",
                self.n_types()
            )));
        }
        let instance = AuctionInstance {
            n_agents: self.n_agents(),
            n_goods: self.n_goods,
            supplies: self.supplies.clone(),
            k: self.k,
            valuations: reports.iter().map(|&t| self.type_values[t].clone()).collect(),
        };
        Ok((instance, reports.to_vec()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.type_values.is_empty() {
            return Err(Error::InvalidConfig("population has no types".into()));
        }
        if self.counts.len() != self.type_values.len() {
            return Err(Error::InvalidConfig(format!(
                "{} type counts for {} types",
                self.counts.len(),
                self.type_values.len()
            )));
        }
        if self.n_agents() == 0 {
            return Err(Error::InvalidConfig("population has no agents".into()));
        }
        let space = bundle_space_size(self.n_goods, self.k);
        if space > DEFAULT_BUNDLE_CAP as u128 {
            return Err(Error::InvalidConfig(format!(
                "{space} bundles for G={}, k={} is beyond support",
                self.n_goods, self.k
            )));
        }
        let nb = space as usize;
        for (t, row) in self.type_values.iter().enumerate() {
            if row.len() != nb {
                return Err(Error::InvalidConfig(format!(
                    "type {t} has {} values for {nb} bundles",
                    row.len()
                )));
            }
        }
        if let Some(reports) = &self.reports {
            if reports.len() != self.n_agents() {
                return Err(Error::InvalidConfig(format!(
                    "{} reports for {} agents",
                    reports.len(),
                    self.n_agents()
                )));
            }
            if let Some(&bad) = reports.iter().find(|&&t| t >= self.n_types()) {
                return Err(Error::InvalidConfig(format!(
                    "reported type {bad} out of range ({} types)",
                    self.n_types()
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of the paired misreport experiment.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MisreportOutcome {
    /// Mean expected payoff of the deviator when reporting truthfully.
    pub truthful_mean: f64,
    /// Mean expected payoff of the deviator when reporting the other type.
    pub misreport_mean: f64,
    /// `truthful_mean − misreport_mean`.
    pub delta: f64,
    /// 95% confidence half-width of `delta` across replications.
    pub half_width: f64,
    pub replications: usize,
}

/// Lottery-expected quasi-linear payoff of one agent, valued under `values`
/// (one entry per canonical bundle; an empty-handed agent earns zero).
pub fn expected_payoff(outcome: &MechanismOutcome, agent: usize, values: &[f64]) -> f64 {
    let ctx = &outcome.perturbed;
    let mut total = 0.0;
    for (point, &weight) in outcome.lottery.points.iter().zip(&outcome.lottery.weights) {
        if let Some(b) = ctx.allocated_bundle(point, agent) {
            let price = outcome.prices.bundle_price(&ctx.bundles[b].counts);
            total += weight * (values[b] - price);
        }
    }
    total
}

/// Estimate what an agent of type `xi` loses (in true-utility terms) by
/// reporting type `zeta` instead.
///
/// The estimate is for a typical agent of the type, not a fixed index: each
/// replication redraws which type-`xi` agent deviates and seats all agents
/// in a fresh uniformly random order, both drawn from the replication's own
/// stream. Equal-type agents are interchangeable to the solver, whose
/// tie-breaking among them depends on seating; averaging over seatings
/// measures the incentive rather than the tie-break. The paired mechanism
/// runs share one seating and one RNG stream per replication, so
/// `zeta == xi` yields a delta of exactly zero and other deviations are
/// compared under common random numbers.
pub fn misreport_gain(
    pop: &TypedPopulation,
    xi: usize,
    zeta: usize,
    cfg: &MechanismConfig,
    master_seed: u64,
    replications: usize,
) -> Result<MisreportOutcome> {
    pop.validate()?;
    cfg.validate()?;
    if replications == 0 {
        return Err(Error::InvalidConfig("need at least one replication".into()));
    }
    if xi >= pop.n_types() || zeta >= pop.n_types() {
        return Err(Error::InvalidConfig(format!(
            "type pair ({xi}, {zeta}) out of range ({} types)",
            pop.n_types()
        )));
    }
    if pop.counts[xi] == 0 {
        return Err(Error::InvalidConfig(format!("type {xi} has no agents to deviate")));
    }

    let base = pop.baseline_reports();
    let candidates: Vec<usize> = (0..base.len()).filter(|&i| base[i] == xi).collect();
    if candidates.is_empty() {
        return Err(Error::InvalidConfig(format!("no agent reports type {xi}")));
    }
    // Jitter tables are drawn for types 0..=max(label); the paired streams
    // stay aligned only if both games span the same label range. Which
    // candidate deviates does not change either range.
    let mut mis_reports = base.clone();
    mis_reports[candidates[0]] = zeta;
    let max_truth = base.iter().max().copied().unwrap_or(0);
    let max_mis = mis_reports.iter().max().copied().unwrap_or(0);
    if max_truth != max_mis {
        return Err(Error::InvalidConfig(
            "deviation would empty the highest-numbered type; renumber types so both \
             paired runs draw jitter for the same type range"
                .into(),
        ));
    }

    let true_values = &pop.type_values[xi];

    let mut deltas = Vec::with_capacity(replications);
    let mut truth_sum = 0.0;
    let mut mis_sum = 0.0;
    let mut seats: Vec<usize> = (0..base.len()).collect();
    for rep in 0..replications {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(rep as u64);
        // Deviator and seating are drawn before the paired runs clone the
        // stream, so both runs see the same remaining randomness.
        let deviator = candidates[rng.gen_range(0..candidates.len())];
        seats.shuffle(&mut rng);
        let truth_reports: Vec<usize> = seats.iter().map(|&a| base[a]).collect();
        let mut mis_seat_reports = truth_reports.clone();
        let deviator_seat = seats.iter().position(|&a| a == deviator).unwrap();
        mis_seat_reports[deviator_seat] = zeta;
        let (truth_instance, truth_labels) = pop.game(&truth_reports)?;
        let (mis_instance, mis_labels) = pop.game(&mis_seat_reports)?;
        let mut rng_mis = rng.clone();
        let truth_out = run_mechanism_typed(&truth_instance, &truth_labels, cfg, &mut rng)?;
        let mis_out = run_mechanism_typed(&mis_instance, &mis_labels, cfg, &mut rng_mis)?;
        let truth_payoff = expected_payoff(&truth_out, deviator_seat, true_values);
        let mis_payoff = expected_payoff(&mis_out, deviator_seat, true_values);
        truth_sum += truth_payoff;
        mis_sum += mis_payoff;
        deltas.push(truth_payoff - mis_payoff);
    }

    let n = replications as f64;
    let delta = deltas.iter().sum::<f64>() / n;
    let half_width = if replications >= 2 {
        let var = deltas.iter().map(|d| (d - delta).powi(2)).sum::<f64>() / (n - 1.0);
        1.96 * (var / n).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(MisreportOutcome {
        truthful_mean: truth_sum / n,
        misreport_mean: mis_sum / n,
        delta,
        half_width,
        replications,
    })
}
