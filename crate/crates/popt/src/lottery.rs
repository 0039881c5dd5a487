//! Decomposition of a fractional welfare optimum into a lottery over
//! integral allocations.
//!
//! The construction keeps a growing finite set `F` of integral candidate
//! allocations, each produced by [`crate::rounding::iterative_rounding`].
//! Every step projects the fractional optimum `x*` onto the convex hull of
//! `F` (Wolfe's minimum-norm-point algorithm). If the hull already contains
//! `x*` (residual below the configured `epsilon`), the barycentric weights
//! are the lottery. Otherwise the projection direction `x* − y*` is used
//! twice: a nudge of size `δ_z` moves the target just past `x*`, and the
//! direction becomes the rounding objective, so the next integral point
//! strictly separates `x*` from the current hull. The hull support shrinks
//! to the minimal face containing the projection between steps, keeping the
//! candidate set small.
//!
//! Every candidate inherits the structure of `x*`: zeros stay zero, demand
//! rows that were tight stay tight, and each good is over-consumed by at
//! most `k − 1` units. The expected allocation of the finished lottery
//! equals `x*` up to the configured residual, so expected utilities match
//! the fractional optimum.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::auction::{build_lip_with_supplies, MechanismConfig, PerturbedInstance};
use crate::error::Error;
use crate::lp::{self, LpStatus};
use crate::rounding::{self, INTEGRALITY_TOL, TIGHT_DEMAND_TOL};
use crate::Result;

/// Result of projecting a target onto the convex hull of a point set.
#[derive(Clone, Debug)]
pub struct HullProjection {
    /// The nearest point of the hull to the target.
    pub nearest: Vec<f64>,
    /// Convex weights over the input points (aligned with input order,
    /// zero for points outside the supporting face).
    pub lambdas: Vec<f64>,
    /// Euclidean distance from the target to `nearest`.
    pub distance: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Nearest point of `conv(points)` to `target` via Wolfe's minimum-norm-point
/// algorithm, run on the translated set `points − target`.
///
/// All points must share `target`'s dimension. The returned `lambdas` are a
/// convex combination reproducing `nearest` from the input points.
pub fn nearest_point_in_hull(points: &[Vec<f64>], target: &[f64]) -> Result<HullProjection> {
    if points.is_empty() {
        return Err(Error::InvalidConfig("hull projection needs at least one point".into()));
    }
    let dim = target.len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::InvalidConfig("hull points and target must share a dimension".into()));
    }
    let q: Vec<Vec<f64>> =
        points.iter().map(|p| p.iter().zip(target).map(|(a, b)| a - b).collect()).collect();

    // Corral of point indices plus their convex weights.
    let start =
        (0..q.len()).min_by(|&a, &b| dot(&q[a], &q[a]).total_cmp(&dot(&q[b], &q[b]))).unwrap();
    let mut corral = vec![start];
    let mut weights = vec![1.0f64];
    let mut y = q[start].clone();

    let major_cap = 16 * q.len() + 100;
    for _ in 0..major_cap {
        let yy = dot(&y, &y);
        let (t_star, min_ip) =
            (0..q.len()).map(|t| (t, dot(&y, &q[t]))).min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        if yy - min_ip <= 1e-12 * (1.0 + yy) {
            break;
        }
        if corral.contains(&t_star) {
            // y is affine-minimal over the corral, so this can only be
            // floating-point stagnation; accept the current projection.
            break;
        }
        corral.push(t_star);
        weights.push(0.0);

        // Restore nonnegativity: alternate affine minimization with a line
        // search toward it, shedding points whose weight hits zero.
        let inner_cap = corral.len() + 5;
        let mut done = false;
        for _ in 0..=inner_cap {
            let alpha = affine_minimizer(&q, &corral)?;
            if alpha.iter().all(|&a| a >= -1e-12) {
                weights = alpha.iter().map(|&a| a.max(0.0)).collect();
                done = true;
                break;
            }
            let mut theta = 1.0f64;
            for (i, &a) in alpha.iter().enumerate() {
                if a < -1e-12 {
                    theta = theta.min(weights[i] / (weights[i] - a));
                }
            }
            for (w, &a) in weights.iter_mut().zip(&alpha) {
                *w = (1.0 - theta) * *w + theta * a;
            }
            let before = corral.len();
            let mut idx = 0;
            while idx < corral.len() {
                if weights[idx] <= 1e-12 {
                    corral.swap_remove(idx);
                    weights.swap_remove(idx);
                } else {
                    idx += 1;
                }
            }
            if corral.len() == before {
                // The line search must retire the blocking point; force it.
                let worst = (0..corral.len()).min_by(|&a, &b| alpha[a].total_cmp(&alpha[b]));
                if let Some(w) = worst {
                    corral.swap_remove(w);
                    weights.swap_remove(w);
                }
            }
            if corral.is_empty() {
                return Err(Error::NumericalFailure("hull projection corral emptied".into()));
            }
        }
        if !done {
            return Err(Error::NumericalFailure(
                "hull projection inner loop failed to restore nonnegative weights".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= total;
        }
        y = vec![0.0; dim];
        for (&t, &w) in corral.iter().zip(&weights) {
            for (yc, qc) in y.iter_mut().zip(&q[t]) {
                *yc += w * qc;
            }
        }
    }

    let mut lambdas = vec![0.0; q.len()];
    for (&t, &w) in corral.iter().zip(&weights) {
        lambdas[t] += w;
    }
    let nearest: Vec<f64> = y.iter().zip(target).map(|(a, b)| a + b).collect();
    let distance = dot(&y, &y).max(0.0).sqrt();
    Ok(HullProjection { nearest, lambdas, distance })
}

/// Minimize `‖Σ α_t q_t‖` over the affine hull (`Σ α = 1`, sign-free) of the
/// corral via the KKT system; falls back to an SVD solve when the system is
/// numerically singular (affinely dependent corral).
fn affine_minimizer(q: &[Vec<f64>], corral: &[usize]) -> Result<Vec<f64>> {
    let m = corral.len();
    if m == 1 {
        return Ok(vec![1.0]);
    }
    let mut mat = nalgebra::DMatrix::<f64>::zeros(m + 1, m + 1);
    for i in 0..m {
        mat[(0, i + 1)] = 1.0;
        mat[(i + 1, 0)] = 1.0;
        for j in 0..m {
            mat[(i + 1, j + 1)] = dot(&q[corral[i]], &q[corral[j]]);
        }
    }
    let mut rhs = nalgebra::DVector::<f64>::zeros(m + 1);
    rhs[0] = 1.0;
    let solved =
        mat.clone().lu().solve(&rhs).or_else(|| mat.svd(true, true).solve(&rhs, 1e-12).ok());
    match solved {
        Some(sol) => Ok((0..m).map(|i| sol[i + 1]).collect()),
        None => Err(Error::NumericalFailure("affine minimizer system is singular".into())),
    }
}

/// A probability distribution over integral allocations whose expectation
/// reproduces a fractional optimum.
#[derive(Clone, Debug)]
pub struct Lottery {
    /// Integral allocations (full-length coordinate vectors, entries 0/1).
    pub points: Vec<Vec<f64>>,
    /// Probabilities, aligned with `points`; positive, summing to 1.
    pub weights: Vec<f64>,
    /// Euclidean distance between the expected point and the target optimum.
    pub residual: f64,
}

impl Lottery {
    /// Probability-weighted average of the support points.
    pub fn expected_point(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.points[0].len()];
        for (p, &w) in self.points.iter().zip(&self.weights) {
            for (ec, pc) in e.iter_mut().zip(p) {
                *ec += w * pc;
            }
        }
        e
    }

    /// Expected value of a linear functional over the lottery.
    pub fn expected_value(&self, objective: &[f64]) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, &w)| w * dot(p, objective)).sum()
    }
}

/// Draw a support index according to the lottery weights.
pub fn sample<R: Rng + ?Sized>(lottery: &Lottery, rng: &mut R) -> Result<usize> {
    let index = WeightedIndex::new(&lottery.weights)
        .map_err(|e| Error::NumericalFailure(format!("lottery weights are not sampleable: {e}")))?;
    Ok(index.sample(rng))
}

/// Step size for nudging the projection target past `x*`: small enough that
/// the nudged point stays within the unshaved supplies (Cauchy–Schwarz gives
/// usage drift ≤ δ_z·√(|N|·Σ_B B_j²) ≤ shave per good).
fn nudge_scale(ctx: &PerturbedInstance, cfg: &MechanismConfig) -> f64 {
    let sq_sum = |j: usize| -> f64 {
        ctx.bundles
            .iter()
            .map(|b| {
                let c = b.counts[j] as f64;
                c * c
            })
            .sum()
    };
    let s0 = sq_sum(0);
    if ctx.n_goods() >= 2 {
        // The bundle space is symmetric across goods, so the bound is
        // good-independent; spot-check that.
        debug_assert_eq!(s0, sq_sum(1));
    }
    cfg.delta_eps.max(1e-9) / (ctx.n_agents() as f64 * s0).sqrt()
}

fn snap_integral_vec(x: &[f64]) -> Option<Vec<f64>> {
    let mut out = Vec::with_capacity(x.len());
    for &v in x {
        if v.abs() <= INTEGRALITY_TOL {
            out.push(0.0);
        } else if (v - 1.0).abs() <= INTEGRALITY_TOL {
            out.push(1.0);
        } else {
            return None;
        }
    }
    Some(out)
}

/// Check that a candidate allocation inherits the structure of `x*`:
/// integral, zero wherever `x*` is zero, demand rows ≤ 1 and still tight
/// where `x*` was tight, and per-good usage at most `k − 1` over the
/// unshaved supply.
fn check_candidate(point: &[f64], x_star: &[f64], ctx: &PerturbedInstance) -> Result<()> {
    if !rounding::is_integral_point(point) {
        return Err(Error::VerificationFailure("lottery candidate is not integral".into()));
    }
    for (p, x) in point.iter().zip(x_star) {
        if *x == 0.0 && *p != 0.0 {
            return Err(Error::VerificationFailure(
                "lottery candidate allocates outside the optimum's support".into(),
            ));
        }
    }
    let demands = ctx.agent_demands(point);
    let star_demands = ctx.agent_demands(x_star);
    for (i, (d, sd)) in demands.iter().zip(&star_demands).enumerate() {
        if *d > 1.0 + 1e-9 {
            return Err(Error::VerificationFailure(format!(
                "agent {i} holds {d} bundles in a lottery candidate"
            )));
        }
        if (sd - 1.0).abs() <= TIGHT_DEMAND_TOL && (d - 1.0).abs() > 1e-9 {
            return Err(Error::VerificationFailure(format!(
                "agent {i}'s tight demand row drifted to {d} in a lottery candidate"
            )));
        }
    }
    let usage = ctx.good_usage(point);
    let k = ctx.instance.k as f64;
    for (j, &u) in usage.iter().enumerate() {
        let cap = ctx.instance.supplies[j] as f64 + k - 1.0;
        if u > cap + 1e-9 {
            return Err(Error::VerificationFailure(format!(
                "good {j} over-allocated: {u} > {cap}"
            )));
        }
    }
    Ok(())
}

/// Decompose the welfare-relaxation optimum `x_star` into a [`Lottery`].
///
/// `x_star` must satisfy the demand and perturbed-supply rows of `ctx` (it
/// need not be an extreme point). The construction stops once the expected
/// point is within `cfg.epsilon` of `x_star`.
pub fn construct_lottery(
    x_star: &[f64],
    ctx: &PerturbedInstance,
    cfg: &MechanismConfig,
) -> Result<Lottery> {
    if x_star.len() != ctx.n_vars() {
        return Err(Error::InvalidConfig(format!(
            "optimum has {} coordinates for {} variables",
            x_star.len(),
            ctx.n_vars()
        )));
    }
    let x_star: Vec<f64> = x_star.iter().map(|&v| v.clamp(0.0, 1.0)).collect();
    if let Some(point) = snap_integral_vec(&x_star) {
        check_candidate(&point, &x_star, ctx)?;
        return Ok(Lottery { points: vec![point], weights: vec![1.0], residual: 0.0 });
    }

    let support: Vec<usize> = (0..x_star.len()).filter(|&v| x_star[v] > 0.0).collect();
    let compress = |full: &[f64]| -> Vec<f64> { support.iter().map(|&v| full[v]).collect() };
    let target = compress(&x_star);

    // Seed the candidate set from the two extreme welfare directions.
    let c1 = ctx.weighted_values();
    let c1_neg: Vec<f64> = c1.iter().map(|v| -v).collect();
    let mut points: Vec<Vec<f64>> = Vec::new();
    for c in [&c1, &c1_neg] {
        let cand = rounding::iterative_rounding(&x_star, c, ctx)?;
        check_candidate(&cand, &x_star, ctx)?;
        if !points.contains(&cand) {
            points.push(cand);
        }
    }

    let delta_z = nudge_scale(ctx, cfg);
    let mut best_distance = f64::INFINITY;
    let mut stalled = 0usize;
    for _ in 0..1000 {
        let compressed: Vec<Vec<f64>> = points.iter().map(|p| compress(p)).collect();
        let proj = nearest_point_in_hull(&compressed, &target)?;

        if proj.distance < cfg.epsilon {
            return finish_lottery(points, proj.lambdas, &x_star, &support, cfg);
        }
        if proj.distance < best_distance - 1e-12 * (1.0 + best_distance) {
            best_distance = proj.distance;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= 50 {
                return Err(Error::LotteryDivergence(format!(
                    "hull distance stalled at {best_distance:.3e} over {stalled} iterations \
                     with {} candidate points",
                    points.len()
                )));
            }
        }

        // Keep only the minimal face supporting the projection.
        let keep: Vec<usize> = (0..points.len()).filter(|&t| proj.lambdas[t] > 1e-9).collect();
        points = keep.into_iter().map(|t| std::mem::take(&mut points[t])).collect();

        // Direction away from the hull, as a full-length vector.
        let norm = proj.distance;
        let mut direction = vec![0.0; x_star.len()];
        for (idx, &v) in support.iter().enumerate() {
            direction[v] = (target[idx] - proj.nearest[idx]) / norm;
        }
        let mut z = x_star.clone();
        for (zc, dc) in z.iter_mut().zip(&direction) {
            *zc += delta_z * dc;
        }
        let usage = ctx.good_usage(&z);
        for (j, &u) in usage.iter().enumerate() {
            if u > ctx.instance.supplies[j] as f64 + 1e-9 {
                return Err(Error::NumericalFailure(format!(
                    "nudged target exceeds supply of good {j}: {u}"
                )));
            }
        }

        let cand = rounding::iterative_rounding(&z, &direction, ctx)?;
        check_candidate(&cand, &x_star, ctx)?;
        // The new point must strictly separate x* from the previous hull.
        let gain = dot(&cand, &direction) - dot(&x_star, &direction);
        if gain < -1e-7 {
            return Err(Error::NumericalFailure(format!(
                "rounded point lost {gain:.3e} along the separating direction"
            )));
        }
        if !points.contains(&cand) {
            points.push(cand);
        }
    }
    Err(Error::LotteryDivergence(format!(
        "no convergence after 1000 iterations; best distance {best_distance:.3e}"
    )))
}

/// Normalize weights, prune negligible support (only when pruning keeps the
/// expectation within tolerance), and package the lottery.
fn finish_lottery(
    points: Vec<Vec<f64>>,
    lambdas: Vec<f64>,
    x_star: &[f64],
    support: &[usize],
    cfg: &MechanismConfig,
) -> Result<Lottery> {
    let residual_of = |pts: &[Vec<f64>], ws: &[f64]| -> f64 {
        support
            .iter()
            .map(|&v| {
                let e: f64 = pts.iter().zip(ws).map(|(p, &w)| w * p[v]).sum();
                (e - x_star[v]).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    };
    let normalize = |ws: &mut Vec<f64>| {
        let total: f64 = ws.iter().sum();
        for w in ws.iter_mut() {
            *w /= total;
        }
    };

    let mut full_weights = lambdas;
    normalize(&mut full_weights);

    let kept: Vec<usize> = (0..points.len()).filter(|&t| full_weights[t] > 1e-9).collect();
    if kept.len() < points.len() {
        let pruned_points: Vec<Vec<f64>> = kept.iter().map(|&t| points[t].clone()).collect();
        let mut pruned_weights: Vec<f64> = kept.iter().map(|&t| full_weights[t]).collect();
        normalize(&mut pruned_weights);
        let r = residual_of(&pruned_points, &pruned_weights);
        if r < cfg.epsilon {
            return Ok(Lottery { points: pruned_points, weights: pruned_weights, residual: r });
        }
    }
    let keep: Vec<usize> = (0..points.len()).filter(|&t| full_weights[t] > 0.0).collect();
    let points: Vec<Vec<f64>> = keep.iter().map(|&t| points[t].clone()).collect();
    let mut weights: Vec<f64> = keep.iter().map(|&t| full_weights[t]).collect();
    normalize(&mut weights);
    let residual = residual_of(&points, &weights);
    if residual >= cfg.epsilon {
        return Err(Error::LotteryDivergence(format!(
            "expected point drifted to residual {residual:.3e} after weight cleanup"
        )));
    }
    Ok(Lottery { points, weights, residual })
}

/// Certificate that a lottery point is itself a welfare optimum once each
/// supply is replaced by what the point (or the fractional optimum's slack)
/// dictates.
#[derive(Clone, Debug)]
pub struct MlipCertificate {
    /// The supply vector the point is optimal for.
    pub modified_supplies: Vec<f64>,
    /// Optimum of the re-solved LP at `modified_supplies`.
    pub reoptimized_value: f64,
    /// The point's own weighted-welfare value.
    pub point_value: f64,
    /// Worst complementary-slackness violation of the original duals
    /// against the point under the modified supplies.
    pub slackness_residual: f64,
}

/// Verify that `point` maximizes weighted welfare under modified supplies:
/// rows the fractional optimum left slack (and the point respects) keep
/// their shaved value, every other row is pulled to the point's own usage.
/// The original duals must certify optimality via complementary slackness,
/// and an independent re-solve must match the point's value.
pub fn verify_mlip_optimality(
    point: &[f64],
    ctx: &PerturbedInstance,
    x_star: &[f64],
    duals: &[f64],
) -> Result<MlipCertificate> {
    let n_agents = ctx.n_agents();
    let n_goods = ctx.n_goods();
    if duals.len() != n_agents + n_goods {
        return Err(Error::InvalidConfig(format!(
            "expected {} duals, got {}",
            n_agents + n_goods,
            duals.len()
        )));
    }
    let usage_star = ctx.good_usage(x_star);
    let usage_pt = ctx.good_usage(point);
    let k = ctx.instance.k as f64;
    let mut modified = vec![0.0; n_goods];
    for j in 0..n_goods {
        let shaved = ctx.perturbed_supplies[j];
        modified[j] = if usage_star[j] < shaved - 1e-9 && usage_pt[j] <= shaved {
            shaved
        } else {
            usage_pt[j]
        };
        let cap = ctx.instance.supplies[j] as f64 + k - 1.0;
        if modified[j] > cap + 1e-9 {
            return Err(Error::VerificationFailure(format!(
                "modified supply of good {j} is {} > {cap}",
                modified[j]
            )));
        }
    }

    let wu = ctx.weighted_values();
    let point_value = dot(point, &wu);

    // Complementary slackness of the original duals against the point.
    let mut residual = 0.0f64;
    let demands = ctx.agent_demands(point);
    for i in 0..n_agents {
        residual = residual.max((duals[i] * (1.0 - demands[i])).abs());
    }
    for j in 0..n_goods {
        residual = residual.max((duals[n_agents + j] * (modified[j] - usage_pt[j])).abs());
    }
    for (v, &x) in point.iter().enumerate() {
        if x > 0.0 {
            let (i, b) = ctx.agent_bundle(v);
            let mut rc = wu[v] - duals[i];
            for (j, &cnt) in ctx.bundles[b].counts.iter().enumerate() {
                rc -= cnt as f64 * duals[n_agents + j];
            }
            residual = residual.max((rc * x).abs());
        }
    }

    let lp = build_lip_with_supplies(ctx, &modified);
    let sol = lp::solve(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::NumericalFailure(format!(
            "re-solve at modified supplies reported {:?}",
            sol.status
        )));
    }
    let tol = 1e-6 * (1.0 + sol.objective_value.abs());
    if (sol.objective_value - point_value).abs() > tol {
        return Err(Error::VerificationFailure(format!(
            "point value {point_value} differs from re-optimized value {} at modified supplies",
            sol.objective_value
        )));
    }
    Ok(MlipCertificate {
        modified_supplies: modified,
        reoptimized_value: sol.objective_value,
        point_value,
        slackness_residual: residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::{build_lip, perturb, AuctionInstance, MechanismConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }

    #[test]
    fn projection_onto_single_point() {
        let proj = nearest_point_in_hull(&[vec![1.0, 2.0]], &[4.0, 6.0]).unwrap();
        assert!((proj.distance - 5.0).abs() < 1e-12);
        assert_eq!(proj.lambdas, vec![1.0]);
        assert!(dist(&proj.nearest, &[1.0, 2.0]) < 1e-12);
    }

    #[test]
    fn projection_onto_segment_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..40 {
            let a: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let t: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            let denom = dot(&ab, &ab);
            if denom < 1e-9 {
                continue;
            }
            let tb: Vec<f64> = t.iter().zip(&b).map(|(x, y)| x - y).collect();
            let lam = (dot(&tb, &ab) / denom).clamp(0.0, 1.0);
            let expect: Vec<f64> =
                a.iter().zip(&b).map(|(x, y)| lam * x + (1.0 - lam) * y).collect();
            let proj = nearest_point_in_hull(&[a.clone(), b.clone()], &t).unwrap();
            assert!(
                (proj.distance - dist(&expect, &t)).abs() < 1e-8,
                "distance {} vs {}",
                proj.distance,
                dist(&expect, &t)
            );
            assert!(dist(&proj.nearest, &expect) < 1e-7);
        }
    }

    /// Exhaustive oracle: best affine minimizer over every subset of points
    /// whose weights come out nonnegative.
    fn brute_force_projection(points: &[Vec<f64>], target: &[f64]) -> f64 {
        let n = points.len();
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << n) {
            let subset: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let q: Vec<Vec<f64>> = subset
                .iter()
                .map(|&i| points[i].iter().zip(target).map(|(a, b)| a - b).collect())
                .collect();
            let corral: Vec<usize> = (0..subset.len()).collect();
            let Ok(alpha) = affine_minimizer(&q, &corral) else { continue };
            if alpha.iter().any(|&a| a < -1e-9) {
                continue;
            }
            let mut y = vec![0.0; target.len()];
            for (qi, &ai) in q.iter().zip(&alpha) {
                for (yc, qc) in y.iter_mut().zip(qi) {
                    *yc += ai * qc;
                }
            }
            best = best.min(dot(&y, &y).sqrt());
        }
        best
    }

    #[test]
    fn projection_matches_subset_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for case in 0..100 {
            let n = rng.gen_range(1..=6);
            let dim = rng.gen_range(1..=4);
            let points: Vec<Vec<f64>> =
                (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let target: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let proj = nearest_point_in_hull(&points, &target).unwrap();
            let oracle = brute_force_projection(&points, &target);
            assert!(
                (proj.distance - oracle).abs() < 1e-7,
                "case {case}: wolfe {} vs oracle {oracle}",
                proj.distance
            );
            // The weights must reproduce the nearest point.
            assert!((proj.lambdas.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let mut combo = vec![0.0; dim];
            for (p, &l) in points.iter().zip(&proj.lambdas) {
                assert!(l >= 0.0);
                for (cc, pc) in combo.iter_mut().zip(p) {
                    *cc += l * pc;
                }
            }
            assert!(dist(&combo, &proj.nearest) < 1e-7, "case {case}");
        }
    }

    #[test]
    fn projection_of_interior_point_has_zero_distance() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let proj = nearest_point_in_hull(&pts, &[0.3, 0.3]).unwrap();
        assert!(proj.distance < 1e-9);
    }

    fn tiny_ctx() -> PerturbedInstance {
        let inst = AuctionInstance {
            n_agents: 2,
            n_goods: 1,
            supplies: vec![1],
            k: 1,
            valuations: vec![vec![1.0], vec![1.0]],
        };
        let cfg = MechanismConfig { delta_w: 0.0, delta_eps: 1e-3, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = perturb(&inst, &cfg, &mut rng).unwrap();
        p.perturbed_supplies = vec![0.9985];
        p
    }

    #[test]
    fn integral_optimum_yields_single_point_lottery() {
        let p = tiny_ctx();
        let cfg = MechanismConfig { delta_w: 0.0, delta_eps: 1e-3, ..Default::default() };
        let lot = construct_lottery(&[1.0, 0.0], &p, &cfg).unwrap();
        assert_eq!(lot.points, vec![vec![1.0, 0.0]]);
        assert_eq!(lot.weights, vec![1.0]);
        assert_eq!(lot.residual, 0.0);
    }

    #[test]
    fn interior_tie_splits_across_three_allocations() {
        // Two identical agents and one unit: the fractional point (0.499,
        // 0.499) sits strictly inside the hull of (1,0), (0,1), (0,0), so
        // the lottery must recover those three corners with barycentric
        // weights (0.499, 0.499, 0.002) and reproduce the point exactly.
        let p = tiny_ctx();
        let cfg = MechanismConfig { delta_w: 0.0, delta_eps: 1e-3, ..Default::default() };
        let x = vec![0.499, 0.499];
        let lot = construct_lottery(&x, &p, &cfg).unwrap();
        assert_eq!(lot.points.len(), 3);
        assert!(lot.residual < cfg.epsilon);
        let e = lot.expected_point();
        assert!(dist(&e, &x) < 1e-9);
        for (pt, &w) in lot.points.iter().zip(&lot.weights) {
            let expect = match (pt[0], pt[1]) {
                (1.0, 0.0) | (0.0, 1.0) => 0.499,
                (0.0, 0.0) => 0.002,
                other => panic!("unexpected lottery point {other:?}"),
            };
            assert!((w - expect).abs() < 1e-6, "weight {w} for {pt:?}");
        }
    }

    #[test]
    fn sampling_follows_weights() {
        let lot = Lottery {
            points: vec![vec![1.0], vec![0.0]],
            weights: vec![0.75, 0.25],
            residual: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = [0usize; 2];
        for _ in 0..10_000 {
            counts[sample(&lot, &mut rng).unwrap()] += 1;
        }
        assert!((counts[0] as f64 - 7500.0).abs() < 300.0, "counts {counts:?}");
    }

    #[test]
    fn random_optima_decompose_within_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let cfg =
            MechanismConfig { delta_w: 1e-5, delta_eps: 1e-3, epsilon: 1e-8, ..Default::default() };
        let mut fractional_seen = 0;
        for case in 0..25 {
            let n_goods = rng.gen_range(1..=2);
            let n_agents = rng.gen_range(1..=3);
            let k = rng.gen_range(1..=2);
            let supplies: Vec<u32> = (0..n_goods).map(|_| rng.gen_range(1..=2)).collect();
            let nb = crate::auction::bundle_space_size(n_goods, k) as usize;
            let valuations: Vec<Vec<f64>> = (0..n_agents)
                .map(|_| (0..nb).map(|_| rng.gen_range(0.0..10.0)).collect())
                .collect();
            let inst = AuctionInstance { n_agents, n_goods, supplies, k, valuations };
            let p = perturb(&inst, &cfg, &mut rng).unwrap();
            let sol = crate::lp::solve(&build_lip(&p)).unwrap();
            assert_eq!(sol.status, LpStatus::Optimal);
            if !rounding::is_integral_point(
                &sol.primal.iter().map(|&v| if v < 1e-7 { 0.0 } else { v }).collect::<Vec<_>>(),
            ) {
                fractional_seen += 1;
            }

            let lot = construct_lottery(&sol.primal, &p, &cfg).unwrap();
            assert!(lot.residual < cfg.epsilon, "case {case}: residual {}", lot.residual);
            assert!((lot.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let wu = p.weighted_values();
            let expect = lot.expected_value(&wu);
            assert!(
                (expect - sol.objective_value).abs() <= 1e-5 * (1.0 + sol.objective_value.abs()),
                "case {case}: lottery value {expect} vs optimum {}",
                sol.objective_value
            );
            for pt in &lot.points {
                check_candidate(
                    pt,
                    &sol.primal.iter().map(|&v| v.clamp(0.0, 1.0)).collect::<Vec<_>>(),
                    &p,
                )
                .unwrap();
                let cert = verify_mlip_optimality(pt, &p, &sol.primal, &sol.duals).unwrap();
                assert!(
                    cert.slackness_residual < 1e-6,
                    "case {case}: slackness {}",
                    cert.slackness_residual
                );
            }
        }
        assert!(fractional_seen >= 3, "only {fractional_seen} fractional optima drawn");
    }

    #[test]
    fn mlip_certificate_on_shaved_tight_row() {
        // Fractional optimum fills the shaved supply 0.9985; the integral
        // point (1,0) uses 1 unit, so the modified supply must rise to 1 and
        // the original duals must still certify optimality.
        let p = tiny_ctx();
        let lp = build_lip(&p);
        let sol = crate::lp::solve(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        let cert = verify_mlip_optimality(&[1.0, 0.0], &p, &sol.primal, &sol.duals).unwrap();
        assert!((cert.modified_supplies[0] - 1.0).abs() < 1e-12);
        assert!((cert.reoptimized_value - 1.0).abs() < 1e-9);
        assert!(cert.slackness_residual < 1e-6);
    }
}
