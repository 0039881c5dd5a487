//! Grid-of-cells market generator: spatial-Poisson users, per-cell demand,
//! and boundary interference costs.
//!
//! The arena is an `m × n` grid of unit cells, row-major. Each cell offers
//! `s_g` identical bands, so the goods of the auction are the cells. Every
//! agent serves a private population of users: per cell, a Poisson(μ) count
//! placed uniformly at random inside the cell. A bundle earns the agent its
//! user counts on the cells it licenses, but any band-count advantage over
//! an adjacent cell interferes with the agent's own users near that border:
//! each ordered adjacent pair `(j, k)` charges `max(B_j − B_k, 0)` times the
//! number of the agent's users in `j` within a strip of width `λ/4` along
//! the border toward `k` (users in a corner lie in two strips and pay in
//! both directions). Utilities are clipped at zero.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::auction::{enumerate_k_bundles, AuctionInstance};
use crate::error::Error;
use crate::Result;

/// How licensed cells convert user counts into utility.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum FirstTerm {
    /// Each band of a cell earns the cell's user count (`Σ_j u_j·B_j`).
    #[default]
    PerBand,
    /// A cell earns its user count once no matter how many bands
    /// (`Σ_j u_j·1{B_j ≥ 1}`).
    PerCell,
}

/// Parameters of the grid market.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Grid rows.
    pub m_g: usize,
    /// Grid columns.
    pub n_g: usize,
    /// Bands (supply units) per cell.
    pub s_g: u32,
    /// Number of agents.
    pub n_agents: usize,
    /// Maximum bundle size.
    pub k_a: u32,
    /// User intensity per unit cell.
    pub mu: f64,
    /// Fraction of each cell that is boundary area; each of the ≤ 4 border
    /// strips has width `lambda/4`.
    pub lambda: f64,
    /// Seed for instance generation.
    pub rng_seed: u64,
    /// Utility model for licensed cells (see [`FirstTerm`]).
    #[serde(default)]
    pub first_term: FirstTerm,
}

impl GridSpec {
    pub fn n_cells(&self) -> usize {
        self.m_g * self.n_g
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_g == 0 || self.n_g == 0 {
            return Err(Error::InvalidConfig("grid dimensions must be positive".into()));
        }
        if self.s_g == 0 {
            return Err(Error::InvalidConfig("bands per cell must be positive".into()));
        }
        if self.n_agents == 0 {
            return Err(Error::InvalidConfig("at least one agent is required".into()));
        }
        if self.k_a == 0 {
            return Err(Error::InvalidConfig("maximum bundle size must be positive".into()));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidConfig(format!("user intensity {} is invalid", self.mu)));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "boundary fraction {} must lie in (0, 1)",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// All ordered adjacent cell pairs of an `m × n` grid, row-major cells.
/// Each undirected adjacency appears in both orientations, so the list has
/// `2·(2mn − m − n)` entries.
pub fn ordered_adjacencies(m: usize, n: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for r in 0..m {
        for c in 0..n {
            let j = r * n + c;
            if r > 0 {
                edges.push((j, j - n));
            }
            if c > 0 {
                edges.push((j, j - 1));
            }
            if c + 1 < n {
                edges.push((j, j + 1));
            }
            if r + 1 < m {
                edges.push((j, j + n));
            }
        }
    }
    edges
}

/// Position of a cell in the grid, by number of neighbors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum CellClass {
    Corner,
    Edge,
    Interior,
}

/// Classify cell `j` of an `m × n` grid by its neighbor count
/// (≤ 2 → corner, 3 → edge, 4 → interior).
pub fn cell_class(m: usize, n: usize, j: usize) -> CellClass {
    let (r, c) = (j / n, j % n);
    let neighbors =
        usize::from(r > 0) + usize::from(c > 0) + usize::from(c + 1 < n) + usize::from(r + 1 < m);
    match neighbors {
        0..=2 => CellClass::Corner,
        3 => CellClass::Edge,
        _ => CellClass::Interior,
    }
}

/// One agent's user population, reduced to the counts the utility needs.
#[derive(Clone, Debug)]
pub struct AgentField {
    /// Users per cell.
    pub cell_users: Vec<u64>,
    /// Per ordered adjacent pair `(j, k)`: users of cell `j` within the
    /// strip of width `lambda/4` along the border toward `k`.
    pub boundary_users: Vec<((usize, usize), u64)>,
}

/// Sample one agent's user field: Poisson(μ) users per cell, placed
/// uniformly, then bucketed into border strips.
pub fn sample_field<R: Rng + ?Sized>(spec: &GridSpec, rng: &mut R) -> AgentField {
    let cells = spec.n_cells();
    let edges = ordered_adjacencies(spec.m_g, spec.n_g);
    let mut cell_users = vec![0u64; cells];
    let mut strip: Vec<u64> = vec![0; edges.len()];
    // Index of the edge slot for (cell, neighbor).
    let slot_of = |j: usize, k: usize| edges.iter().position(|&e| e == (j, k)).unwrap();
    let width = spec.lambda / 4.0;
    let poisson = if spec.mu > 0.0 { Some(Poisson::new(spec.mu).unwrap()) } else { None };
    for r in 0..spec.m_g {
        for c in 0..spec.n_g {
            let j = r * spec.n_g + c;
            let count = match &poisson {
                Some(p) => p.sample(rng) as u64,
                None => 0,
            };
            cell_users[j] = count;
            for _ in 0..count {
                let x: f64 = rng.gen_range(0.0..1.0);
                let y: f64 = rng.gen_range(0.0..1.0);
                if r > 0 && y < width {
                    strip[slot_of(j, j - spec.n_g)] += 1;
                }
                if c > 0 && x < width {
                    strip[slot_of(j, j - 1)] += 1;
                }
                if c + 1 < spec.n_g && x > 1.0 - width {
                    strip[slot_of(j, j + 1)] += 1;
                }
                if r + 1 < spec.m_g && y > 1.0 - width {
                    strip[slot_of(j, j + spec.n_g)] += 1;
                }
            }
        }
    }
    let boundary_users = edges.into_iter().zip(strip).collect();
    AgentField { cell_users, boundary_users }
}

/// Utility of a bundle for one agent's field: user counts on licensed cells
/// minus boundary interference, clipped at zero.
pub fn grid_utility(field: &AgentField, counts: &[u32], first_term: FirstTerm) -> f64 {
    let mut value = 0.0f64;
    for (&u, &b) in field.cell_users.iter().zip(counts) {
        value += match first_term {
            FirstTerm::PerBand => u as f64 * b as f64,
            FirstTerm::PerCell => {
                if b >= 1 {
                    u as f64
                } else {
                    0.0
                }
            }
        };
    }
    for &((j, k), c) in &field.boundary_users {
        let excess = counts[j].saturating_sub(counts[k]);
        value -= excess as f64 * c as f64;
    }
    value.max(0.0)
}

/// Shape summary of an allocated bundle on the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum BundleShape {
    /// At most one band per cell: a 0/1 footprint on the grid.
    SingleBand {
        /// Number of licensed cells.
        size: u32,
        /// Undirected adjacent pairs with both cells licensed. For size-4
        /// footprints, 4 is the 2×2 square ("O") and 3 covers the
        /// straight/L/T/S shapes.
        internal_boundaries: u32,
    },
    /// Some cell carries more than one band.
    MultiBand,
}

/// Classify a bundle's footprint on an `m × n` grid.
pub fn classify_bundle_shape(counts: &[u32], m: usize, n: usize) -> BundleShape {
    if counts.iter().any(|&c| c > 1) {
        return BundleShape::MultiBand;
    }
    let size = counts.iter().sum();
    let mut internal = 0u32;
    for (j, k) in ordered_adjacencies(m, n) {
        if j < k && counts[j] == 1 && counts[k] == 1 {
            internal += 1;
        }
    }
    BundleShape::SingleBand { size, internal_boundaries: internal }
}

/// Generate a full auction instance from the grid model: sample every
/// agent's user field, then value every bundle of at most `k_a` bands.
pub fn generate<R: Rng + ?Sized>(spec: &GridSpec, rng: &mut R) -> Result<AuctionInstance> {
    spec.validate()?;
    let bundles = enumerate_k_bundles(spec.n_cells(), spec.k_a)?;
    let mut valuations = Vec::with_capacity(spec.n_agents);
    for _ in 0..spec.n_agents {
        let field = sample_field(spec, rng);
        valuations.push(
            bundles.iter().map(|b| grid_utility(&field, &b.counts, spec.first_term)).collect(),
        );
    }
    let instance = AuctionInstance {
        n_agents: spec.n_agents,
        n_goods: spec.n_cells(),
        supplies: vec![spec.s_g; spec.n_cells()],
        k: spec.k_a,
        valuations,
    };
    instance.validate()?;
    Ok(instance)
}
