//! One full mechanism run: jitter the instance, solve the relaxation, build
//! the allocation lottery, price the supply rows, verify every support
//! point, and sample the realized allocation.

use rand::Rng;

use crate::auction::{
    build_lip, perturb, perturb_with_types, AuctionInstance, MechanismConfig, PerturbedInstance,
};
use crate::lottery::{construct_lottery, sample, Lottery};
use crate::lp::{self, LinearProgram, LpSolution, LpStatus};
use crate::pricing::{
    popt_prices, resolve_epsilon_u, verify_point, PriceVector, VerificationReport,
};
use crate::{Error, Result};

/// Everything produced by one mechanism run on one instance.
#[derive(Clone, Debug)]
pub struct MechanismOutcome {
    /// Jittered instance the relaxation was solved on.
    pub perturbed: PerturbedInstance,
    /// Optimal solution of the relaxation (primal optimum plus row duals).
    pub lp_solution: LpSolution,
    /// Lottery over integral allocations whose mean is the relaxed optimum.
    pub lottery: Lottery,
    /// Per-good prices read off the supply-row duals.
    pub prices: PriceVector,
    /// Fairness tolerance the verification reports were checked at.
    pub epsilon_u: f64,
    /// Index into the lottery of the realized allocation.
    pub sampled_index: usize,
    /// One verification report per lottery point, in lottery order.
    pub reports: Vec<VerificationReport>,
}

impl MechanismOutcome {
    /// The realized integral allocation.
    pub fn sampled_point(&self) -> &[f64] {
        &self.lottery.points[self.sampled_index]
    }

    /// Verification report of the realized allocation.
    pub fn sampled_report(&self) -> &VerificationReport {
        &self.reports[self.sampled_index]
    }

    /// Lottery-expected total value under `values` (one entry per variable).
    pub fn expected_value(&self, values: &[f64]) -> f64 {
        self.lottery.expected_value(values)
    }

    /// Unweighted valuations flattened to one entry per decision variable.
    pub fn raw_values(&self) -> Vec<f64> {
        let inst = &self.perturbed.instance;
        let mut flat = Vec::with_capacity(self.perturbed.n_vars());
        for row in &inst.valuations {
            flat.extend_from_slice(row);
        }
        flat
    }
}

/// Run the mechanism end to end on one instance.
pub fn run_mechanism<R: Rng>(
    instance: &AuctionInstance,
    cfg: &MechanismConfig,
    rng: &mut R,
) -> Result<MechanismOutcome> {
    run_mechanism_inner(instance, None, cfg, rng)
}

/// As [`run_mechanism`], but agents of equal type share one jitter draw per
/// bundle, keeping equal-type agents exchangeable.
pub fn run_mechanism_typed<R: Rng>(
    instance: &AuctionInstance,
    types: &[usize],
    cfg: &MechanismConfig,
    rng: &mut R,
) -> Result<MechanismOutcome> {
    run_mechanism_inner(instance, Some(types), cfg, rng)
}

fn run_mechanism_inner<R: Rng>(
    instance: &AuctionInstance,
    types: Option<&[usize]>,
    cfg: &MechanismConfig,
    rng: &mut R,
) -> Result<MechanismOutcome> {
    instance.validate()?;
    cfg.validate()?;
    let perturbed = match types {
        Some(t) => perturb_with_types(instance, t, cfg, rng)?,
        None => perturb(instance, cfg, rng)?,
    };

    let lip = build_lip(&perturbed);
    let lp_solution = lp::solve(&lip)?;
    if lp_solution.status != LpStatus::Optimal {
        // The relaxation always admits the zero point and has a bounded
        // objective, so anything but Optimal is a solver failure.
        return Err(Error::NumericalFailure(format!(
            "relaxation finished {:?} on a bounded feasible program",
            lp_solution.status
        )));
    }
    check_lp_certificates(&lip, &lp_solution)?;

    let lottery = construct_lottery(&lp_solution.primal, &perturbed, cfg)?;
    check_expected_value(&perturbed, &lottery, &lp_solution, cfg)?;

    let prices = popt_prices(&lp_solution, &perturbed)?;
    // One nanounit of slack so a report sitting exactly on the provable
    // bound is not failed by the last bit of rounding.
    let epsilon_u = resolve_epsilon_u(instance, cfg) + 1e-9;
    let reports: Vec<VerificationReport> =
        lottery.points.iter().map(|pt| verify_point(pt, &perturbed, &prices, epsilon_u)).collect();
    for (t, report) in reports.iter().enumerate() {
        if !report.supporting.pass || !report.envy.pass {
            return Err(Error::VerificationFailure(format!(
                "lottery point {t} fails the fairness checks at epsilon_u = {:.3e} \
                 (supporting violation {:.3e}, envy violation {:.3e})",
                epsilon_u, report.supporting.worst_violation, report.envy.worst_violation
            )));
        }
    }

    let sampled_index = sample(&lottery, rng)?;
    Ok(MechanismOutcome {
        perturbed,
        lp_solution,
        lottery,
        prices,
        epsilon_u,
        sampled_index,
        reports,
    })
}

/// Reject solver output whose optimality certificates are out of tolerance.
fn check_lp_certificates(lip: &LinearProgram, sol: &LpSolution) -> Result<()> {
    let scale = 1.0 + sol.objective_value.abs();
    let feas = lp::feasibility_residual(lip, &sol.primal);
    let dual = lp::dual_feasibility_residual(lip, &sol.duals);
    let gap = lp::duality_gap(lip, sol).abs();
    let cs = lp::complementary_slackness_residual(lip, sol);
    if feas > 1e-6 || dual > 1e-6 * scale || gap > 1e-6 * scale || cs > 1e-6 * scale {
        return Err(Error::NumericalFailure(format!(
            "certificates out of tolerance: feasibility {feas:.3e}, \
             dual feasibility {dual:.3e}, gap {gap:.3e}, slackness {cs:.3e}"
        )));
    }
    Ok(())
}

/// The lottery mean must reproduce the relaxed optimum's objective value up
/// to the stopping tolerance times the objective's length.
fn check_expected_value(
    perturbed: &PerturbedInstance,
    lottery: &Lottery,
    sol: &LpSolution,
    cfg: &MechanismConfig,
) -> Result<()> {
    let weighted = perturbed.weighted_values();
    let norm = weighted.iter().map(|v| v * v).sum::<f64>().sqrt();
    let expected = lottery.expected_value(&weighted);
    let slack = cfg.epsilon * (1.0 + norm) + 1e-9;
    if (expected - sol.objective_value).abs() > slack {
        return Err(Error::VerificationFailure(format!(
            "lottery mean value {expected} is {:.3e} away from the relaxed optimum {}",
            (expected - sol.objective_value).abs(),
            sol.objective_value
        )));
    }
    Ok(())
}
