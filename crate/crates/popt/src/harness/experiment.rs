//! Config-driven replication sweeps: run the mechanism across an
//! interference sweep, collect per-replication metrics, aggregate them, and
//! emit one CSV file per figure.
//!
//! Replications run in a worker pool. Each replication seeds its own RNG
//! stream from the master seed — stream id = (sweep index << 32) | replication
//! index — and aggregation folds results in replication order, so reports and
//! CSV bytes do not depend on scheduling.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::auction::{AuctionInstance, MechanismConfig};
use crate::harness::mechanism::{run_mechanism, MechanismOutcome};
use crate::harness::oracle::{ip_oracle, DEFAULT_ORACLE_STATE_CAP};
use crate::spectrum::{self, cell_class, classify_bundle_shape, BundleShape, CellClass, GridSpec};
use crate::{Error, Result};

/// Where experiment instances come from.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InstanceSource {
    /// Generate a fresh grid market per replication.
    Grid(GridSpec),
    /// Rerun one fixed market every replication.
    Explicit(AuctionInstance),
}

/// One batch experiment: a source, mechanism parameters, an optional
/// interference sweep, and a replication count.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: InstanceSource,
    #[serde(default)]
    pub mechanism: MechanismConfig,
    /// Replications per sweep value, ≥ 1.
    pub replications: usize,
    /// Interference fractions to sweep (grid sources only); empty means
    /// "run the source's own value".
    #[serde(default)]
    pub lambda_sweep: Vec<f64>,
    /// Master seed; per-replication streams split off it. A grid source's
    /// own `rng_seed` is ignored inside experiments.
    #[serde(default)]
    pub rng_seed: u64,
    /// Where CSVs go; `None` skips emission.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidConfig("need at least one replication".into()));
        }
        self.mechanism.validate()?;
        for &l in &self.lambda_sweep {
            if !(l > 0.0 && l < 1.0) {
                return Err(Error::InvalidConfig(format!("sweep value {l} outside (0, 1)")));
            }
        }
        match &self.source {
            InstanceSource::Grid(grid) => grid.validate(),
            InstanceSource::Explicit(instance) => {
                if !self.lambda_sweep.is_empty() {
                    return Err(Error::InvalidConfig(
                        "an interference sweep needs a grid source".into(),
                    ));
                }
                instance.validate()
            }
        }
    }
}

/// Metrics of one replication.
#[derive(Clone, Debug)]
pub struct RepMetrics {
    pub lambda: f64,
    pub replication: usize,
    /// Lottery-expected total utility, unweighted valuations.
    pub popt_utility: f64,
    /// Unweighted total utility of the relaxed optimum.
    pub lp_utility: f64,
    /// Exact integral optimum at the original supplies; `None` when the
    /// search would exceed its state budget.
    pub ip_utility: Option<f64>,
    /// Realized per-good usage in the sampled allocation.
    pub allocation_counts: Vec<u32>,
    /// Per-good usage beyond the original supply in the sampled allocation.
    pub over_allocation: Vec<u32>,
    pub total_over_allocation: u32,
    /// Supply-row prices, one per good.
    pub prices: Vec<f64>,
    /// Allocated bundle shapes in the sampled allocation (grid sources).
    pub shapes: BTreeMap<BundleShape, u32>,
    /// Per-agent payoff slack (realized minus best achievable) in the
    /// sampled allocation; zero means the agent holds an argmax bundle.
    pub payoff_diffs: Vec<f64>,
}

/// Aggregates over all replications of one sweep value.
#[derive(Clone, Debug)]
pub struct LambdaSummary {
    pub lambda: f64,
    pub mean_total_utility_popt: f64,
    pub mean_total_utility_lp: f64,
    /// `None` when the exact search was out of budget.
    pub mean_total_utility_intlp: Option<f64>,
    pub mean_total_over_allocation: f64,
    /// Total over-allocation value → number of replications hitting it.
    pub over_allocation_histogram: BTreeMap<u32, u32>,
    pub mean_price_per_good: Vec<f64>,
    /// Mean price over cells of each class (grid sources).
    pub mean_price_per_class: Vec<(CellClass, f64)>,
    /// Merged shape counts across replications (grid sources).
    pub shape_histogram: BTreeMap<BundleShape, u32>,
    /// Pairwise total-variation distances between the per-good
    /// allocation-count distributions, keyed by good pair `(a, b)`, `a < b`.
    pub tv_distances: Vec<(usize, usize, f64)>,
}

/// Everything a batch run measured.
#[derive(Clone, Debug)]
pub struct MetricsReport {
    pub per_rep: Vec<RepMetrics>,
    pub per_lambda: Vec<LambdaSummary>,
    /// Units of supply in the market (`Σ_j s_j`).
    pub total_supply: u64,
    /// The grid recipe behind the runs, when the source was a grid.
    pub grid: Option<GridSpec>,
}

/// Run a full experiment; emits CSVs into `cfg.out_dir` when set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let lambdas: Vec<f64> = match &cfg.source {
        InstanceSource::Grid(grid) => {
            if cfg.lambda_sweep.is_empty() {
                vec![grid.lambda]
            } else {
                cfg.lambda_sweep.clone()
            }
        }
        // Explicit markets have no interference knob; record zero.
        InstanceSource::Explicit(_) => vec![0.0],
    };

    let mut per_rep = Vec::with_capacity(lambdas.len() * cfg.replications);
    let mut per_lambda = Vec::with_capacity(lambdas.len());
    for (lambda_idx, &lambda) in lambdas.iter().enumerate() {
        let batch: Result<Vec<RepMetrics>> = (0..cfg.replications)
            .into_par_iter()
            .map(|rep| run_one(cfg, lambda_idx, lambda, rep))
            .collect();
        let batch = batch?;
        per_lambda.push(summarize(lambda, &batch, cfg.grid()));
        per_rep.extend(batch);
    }

    let total_supply = match &cfg.source {
        InstanceSource::Grid(grid) => grid.n_cells() as u64 * grid.s_g as u64,
        InstanceSource::Explicit(instance) => instance.supplies.iter().map(|&s| s as u64).sum(),
    };
    let report = MetricsReport { per_rep, per_lambda, total_supply, grid: cfg.grid().cloned() };
    if let Some(dir) = &cfg.out_dir {
        report.write_csvs(dir)?;
    }
    Ok(report)
}

impl ExperimentConfig {
    fn grid(&self) -> Option<&GridSpec> {
        match &self.source {
            InstanceSource::Grid(grid) => Some(grid),
            InstanceSource::Explicit(_) => None,
        }
    }
}

fn run_one(
    cfg: &ExperimentConfig,
    lambda_idx: usize,
    lambda: f64,
    rep: usize,
) -> Result<RepMetrics> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    rng.set_stream(((lambda_idx as u64) << 32) | rep as u64);

    let instance = match &cfg.source {
        InstanceSource::Grid(grid) => {
            let mut spec = grid.clone();
            spec.lambda = lambda;
            spectrum::generate(&spec, &mut rng)?
        }
        InstanceSource::Explicit(instance) => instance.clone(),
    };
    let outcome = run_mechanism(&instance, &cfg.mechanism, &mut rng)?;
    collect_metrics(cfg, lambda, rep, &instance, &outcome)
}

fn collect_metrics(
    cfg: &ExperimentConfig,
    lambda: f64,
    rep: usize,
    instance: &AuctionInstance,
    outcome: &MechanismOutcome,
) -> Result<RepMetrics> {
    let raw = outcome.raw_values();
    let popt_utility = outcome.lottery.expected_value(&raw);
    let lp_utility: f64 = outcome.lp_solution.primal.iter().zip(&raw).map(|(x, u)| x * u).sum();
    let ip_utility = if oracle_within_budget(outcome.perturbed.n_bundles(), instance.n_agents) {
        let supplies: Vec<f64> = instance.supplies.iter().map(|&s| s as f64).collect();
        match ip_oracle(
            &instance.valuations,
            &outcome.perturbed.bundles,
            &supplies,
            DEFAULT_ORACLE_STATE_CAP,
        ) {
            Ok(sol) => Some(sol.value),
            Err(Error::OracleTooLarge(_)) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };

    let point = outcome.sampled_point();
    let usage = outcome.perturbed.good_usage(point);
    let allocation_counts: Vec<u32> = usage.iter().map(|&u| u.round() as u32).collect();
    let over_allocation: Vec<u32> = allocation_counts
        .iter()
        .zip(&instance.supplies)
        .map(|(&used, &s)| used.saturating_sub(s))
        .collect();
    // Hard per-good bound: at most k − 1 beyond the original supply.
    for (j, &over) in over_allocation.iter().enumerate() {
        if over > instance.k - 1 {
            return Err(Error::VerificationFailure(format!(
                "good {j} over-allocated by {over} units (cap {})",
                instance.k - 1
            )));
        }
    }

    let mut shapes = BTreeMap::new();
    if let Some(grid) = cfg.grid() {
        for agent in 0..instance.n_agents {
            if let Some(b) = outcome.perturbed.allocated_bundle(point, agent) {
                let counts = &outcome.perturbed.bundles[b].counts;
                if counts.iter().any(|&c| c > 0) {
                    let shape = classify_bundle_shape(counts, grid.m_g, grid.n_g);
                    *shapes.entry(shape).or_insert(0u32) += 1;
                }
            }
        }
    }

    Ok(RepMetrics {
        lambda,
        replication: rep,
        popt_utility,
        lp_utility,
        ip_utility,
        total_over_allocation: over_allocation.iter().sum(),
        allocation_counts,
        over_allocation,
        prices: outcome.prices.per_good.clone(),
        shapes,
        payoff_diffs: outcome.sampled_report().supporting.payoff_diffs.clone(),
    })
}

/// Exact search is attempted only when the loosest state bound
/// `(bundles + 1)^agents` fits the state budget.
fn oracle_within_budget(n_bundles: usize, n_agents: usize) -> bool {
    n_agents as f64 * ((n_bundles + 1) as f64).ln() <= (DEFAULT_ORACLE_STATE_CAP as f64).ln()
}

fn summarize(lambda: f64, batch: &[RepMetrics], grid: Option<&GridSpec>) -> LambdaSummary {
    let n = batch.len() as f64;
    let n_goods = batch[0].prices.len();
    let mean = |f: &dyn Fn(&RepMetrics) -> f64| batch.iter().map(|m| f(m)).sum::<f64>() / n;

    let mean_total_utility_intlp = if batch.iter().all(|m| m.ip_utility.is_some()) {
        Some(batch.iter().map(|m| m.ip_utility.unwrap()).sum::<f64>() / n)
    } else {
        None
    };

    let mut over_allocation_histogram = BTreeMap::new();
    for m in batch {
        *over_allocation_histogram.entry(m.total_over_allocation).or_insert(0u32) += 1;
    }

    let mean_price_per_good: Vec<f64> =
        (0..n_goods).map(|j| batch.iter().map(|m| m.prices[j]).sum::<f64>() / n).collect();
    let mean_price_per_class = match grid {
        Some(spec) => [CellClass::Corner, CellClass::Edge, CellClass::Interior]
            .into_iter()
            .filter_map(|class| {
                let cells: Vec<usize> =
                    (0..n_goods).filter(|&j| cell_class(spec.m_g, spec.n_g, j) == class).collect();
                if cells.is_empty() {
                    None
                } else {
                    let total: f64 = cells.iter().map(|&j| mean_price_per_good[j]).sum();
                    Some((class, total / cells.len() as f64))
                }
            })
            .collect(),
        None => Vec::new(),
    };

    let mut shape_histogram = BTreeMap::new();
    for m in batch {
        for (&shape, &count) in &m.shapes {
            *shape_histogram.entry(shape).or_insert(0u32) += count;
        }
    }

    let mut tv_distances = Vec::new();
    for a in 0..n_goods {
        for b in (a + 1)..n_goods {
            let xs: Vec<u32> = batch.iter().map(|m| m.allocation_counts[a]).collect();
            let ys: Vec<u32> = batch.iter().map(|m| m.allocation_counts[b]).collect();
            tv_distances.push((a, b, tv_distance(&xs, &ys)));
        }
    }

    LambdaSummary {
        lambda,
        mean_total_utility_popt: mean(&|m| m.popt_utility),
        mean_total_utility_lp: mean(&|m| m.lp_utility),
        mean_total_utility_intlp,
        mean_total_over_allocation: mean(&|m| m.total_over_allocation as f64),
        over_allocation_histogram,
        mean_price_per_good,
        mean_price_per_class,
        shape_histogram,
        tv_distances,
    }
}

/// Total-variation distance between the empirical distributions of two
/// equally long samples of counts; always in [0, 1].
fn tv_distance(xs: &[u32], ys: &[u32]) -> f64 {
    let mut px = BTreeMap::new();
    let mut py = BTreeMap::new();
    for &x in xs {
        *px.entry(x).or_insert(0u32) += 1;
    }
    for &y in ys {
        *py.entry(y).or_insert(0u32) += 1;
    }
    let n = xs.len() as f64;
    let keys: std::collections::BTreeSet<u32> = px.keys().chain(py.keys()).copied().collect();
    0.5 * keys
        .into_iter()
        .map(|k| {
            let a = *px.get(&k).unwrap_or(&0) as f64 / n;
            let b = *py.get(&k).unwrap_or(&0) as f64 / n;
            (a - b).abs()
        })
        .sum::<f64>()
}

fn shape_label(shape: BundleShape) -> String {
    match shape {
        BundleShape::SingleBand { size, internal_boundaries } => {
            format!("single_band_size{size}_boundaries{internal_boundaries}")
        }
        BundleShape::MultiBand => "multi_band".to_string(),
    }
}

fn class_label(class: CellClass) -> &'static str {
    match class {
        CellClass::Corner => "corner",
        CellClass::Edge => "edge",
        CellClass::Interior => "interior",
    }
}

impl MetricsReport {
    /// Emit one CSV per figure into `dir` (created if missing). All numeric
    /// cells use the shortest round-trip float form, so reruns of an
    /// identical config and seed produce byte-identical files.
    pub fn write_csvs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let write = |name: &str, body: String| -> Result<()> {
            let path = dir.join(name);
            let mut file = std::fs::File::create(&path)
                .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
            file.write_all(body.as_bytes())?;
            Ok(())
        };

        let mut utility = String::from(
            "lambda,mean_total_utility_popt,mean_total_utility_lp,mean_total_utility_intlp\n",
        );
        for s in &self.per_lambda {
            let intlp = s.mean_total_utility_intlp.map(|v| v.to_string()).unwrap_or_default();
            utility.push_str(&format!(
                "{},{},{},{}\n",
                s.lambda, s.mean_total_utility_popt, s.mean_total_utility_lp, intlp
            ));
        }
        write("utility_vs_lambda.csv", utility)?;

        let mut hist = String::from("lambda,total_over_allocation,count\n");
        let mut cdf = String::from("lambda,total_over_allocation,cumulative_fraction\n");
        for s in &self.per_lambda {
            let reps: u32 = s.over_allocation_histogram.values().sum();
            let mut running = 0u32;
            for (&total, &count) in &s.over_allocation_histogram {
                hist.push_str(&format!("{},{},{}\n", s.lambda, total, count));
                running += count;
                cdf.push_str(&format!("{},{},{}\n", s.lambda, total, running as f64 / reps as f64));
            }
        }
        write("over_allocation_histogram.csv", hist)?;
        write("over_allocation_cdf.csv", cdf)?;

        let mut tv = String::from("lambda,cell_a,cell_b,tv_distance\n");
        for s in &self.per_lambda {
            for &(a, b, d) in &s.tv_distances {
                tv.push_str(&format!("{},{},{},{}\n", s.lambda, a, b, d));
            }
        }
        write("tv_distance_vs_lambda.csv", tv)?;

        let mut per_good = String::from("lambda,good,mean_price\n");
        for s in &self.per_lambda {
            for (j, &p) in s.mean_price_per_good.iter().enumerate() {
                per_good.push_str(&format!("{},{},{}\n", s.lambda, j, p));
            }
        }
        write("price_per_good.csv", per_good)?;

        if self.grid.is_some() {
            let mut by_class = String::from("lambda,cell_class,mean_price\n");
            for s in &self.per_lambda {
                for &(class, p) in &s.mean_price_per_class {
                    by_class.push_str(&format!("{},{},{}\n", s.lambda, class_label(class), p));
                }
            }
            write("price_vs_lambda.csv", by_class)?;

            let mut shapes = String::from("lambda,shape,count\n");
            for s in &self.per_lambda {
                for (&shape, &count) in &s.shape_histogram {
                    shapes.push_str(&format!("{},{},{}\n", s.lambda, shape_label(shape), count));
                }
            }
            write("shape_histogram.csv", shapes)?;
        }

        let mut payoffs = String::from("lambda,replication,agent,payoff_diff\n");
        for m in &self.per_rep {
            for (agent, &diff) in m.payoff_diffs.iter().enumerate() {
                payoffs.push_str(&format!("{},{},{},{}\n", m.lambda, m.replication, agent, diff));
            }
        }
        write("payoff_differences.csv", payoffs)?;
        Ok(())
    }
}
