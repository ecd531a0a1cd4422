//! Boundary-crossing probabilities of the stacked z-statistics.
//!
//! Every estimate reuses one pre-drawn block of standard normal increments
//! (common random numbers), so for a fixed seed the estimate is a
//! deterministic function of the thresholds and never increases when a
//! threshold is raised. That is what lets the calibration bisect on it.
//!
//! One increment column is integrated out analytically instead of sampled.
//! Conditional on the other columns each statistic is `a + b * xi`, so the
//! event "some statistic exceeds its threshold" is a union of half-lines in
//! `xi` whose probability is a normal tail. This removes the sampling noise
//! along that column entirely; for a single-look design the estimate is the
//! exact normal tail.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::ZJointLaw;
use crate::normal;
use crate::par::map_chunks;

const CHUNK: usize = 4096;

/// Fixed block of i.i.d. standard normals, one row of `width` values per path.
#[derive(Debug, Clone, PartialEq)]
pub struct CrnBlock {
    paths: usize,
    width: usize,
    seed: u64,
    data: Vec<f64>,
}

impl CrnBlock {
    /// Draws `paths` rows. Rows are generated in fixed chunks, each from its
    /// own ChaCha stream, so the block does not depend on the thread count.
    pub fn draw(seed: u64, stream: u64, paths: usize, width: usize) -> Result<Self> {
        if paths == 0 {
            return Err(Error::ZeroIterations);
        }
        let chunks = map_chunks(paths, CHUNK, |range| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stream.rotate_left(32));
            rng.set_stream((range.start / CHUNK) as u64);
            let mut out = Vec::with_capacity(range.len() * width);
            for _ in 0..range.len() * width {
                out.push(StandardNormal.sample(&mut rng));
            }
            out
        });
        Ok(Self {
            paths,
            width,
            seed,
            data: chunks.concat(),
        })
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }
}

/// Crossing probability together with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingEstimate {
    pub probability: f64,
    pub std_error: f64,
}

/// Probability that at least one statistic exceeds its threshold. Futility
/// boundaries play no part here. `thresholds` is aligned with the stacked
/// vector of `law`; use `+inf` for statistics that cannot cross.
pub fn crossing_probability(law: &ZJointLaw, thresholds: &[f64], block: &CrnBlock) -> Result<f64> {
    estimate_crossing(law, thresholds, block).map(|e| e.probability)
}

pub fn estimate_crossing(
    law: &ZJointLaw,
    thresholds: &[f64],
    block: &CrnBlock,
) -> Result<CrossingEstimate> {
    if thresholds.len() != law.dim() {
        return Err(Error::DimensionMismatch {
            expected: law.dim(),
            actual: thresholds.len(),
        });
    }
    if block.width() != law.n_increments() {
        return Err(Error::DimensionMismatch {
            expected: law.n_increments(),
            actual: block.width(),
        });
    }
    if block.paths() == 0 {
        return Err(Error::ZeroIterations);
    }
    if thresholds.iter().any(|t| t.is_nan()) {
        return Err(Error::invalid("thresholds", "NaN threshold"));
    }
    if thresholds.contains(&f64::NEG_INFINITY) {
        return Ok(CrossingEstimate {
            probability: 1.0,
            std_error: 0.0,
        });
    }
    let active: Vec<usize> = (0..law.dim())
        .filter(|&i| thresholds[i] < f64::INFINITY)
        .collect();
    if active.is_empty() {
        return Ok(CrossingEstimate {
            probability: 0.0,
            std_error: 0.0,
        });
    }

    let factor = law.factor();
    let pivot = pivot_column(law, &active);
    let rows: Vec<ActiveRow> = active
        .iter()
        .map(|&i| ActiveRow {
            mean: law.mean[i],
            threshold: thresholds[i],
            loadings: (0..factor.ncols()).map(|c| factor[(i, c)]).collect(),
            pivot_loading: factor[(i, pivot)],
        })
        .collect();

    let sums = map_chunks(block.paths(), CHUNK, |range| {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for p in range {
            let v = conditional_crossing(&rows, block.row(p), pivot);
            sum += v;
            sum_sq += v * v;
        }
        (sum, sum_sq)
    });
    let (sum, sum_sq) = sums
        .into_iter()
        .fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d));
    let n = block.paths() as f64;
    let probability = sum / n;
    let var = (sum_sq / n - probability * probability).max(0.0);
    Ok(CrossingEstimate {
        probability,
        std_error: (var / n).sqrt(),
    })
}

struct ActiveRow {
    mean: f64,
    threshold: f64,
    loadings: Vec<f64>,
    pivot_loading: f64,
}

/// Column with nonzero loading on the most active statistics; ties go to the
/// larger total squared loading, then to the lower index.
fn pivot_column(law: &ZJointLaw, active: &[usize]) -> usize {
    let factor = law.factor();
    let mut best = (0usize, 0usize, f64::NEG_INFINITY);
    for c in 0..factor.ncols() {
        let touched = active.iter().filter(|&&i| factor[(i, c)] != 0.0).count();
        let weight: f64 = active.iter().map(|&i| factor[(i, c)].powi(2)).sum();
        if touched > best.1 || (touched == best.1 && weight > best.2) {
            best = (c, touched, weight);
        }
    }
    best.0
}

fn conditional_crossing(rows: &[ActiveRow], xi: &[f64], pivot: usize) -> f64 {
    // Crossing happens iff xi_pivot > lower or xi_pivot < upper.
    let mut lower = f64::INFINITY;
    let mut upper = f64::NEG_INFINITY;
    for row in rows {
        let mut partial = row.mean;
        for (c, (l, x)) in row.loadings.iter().zip(xi).enumerate() {
            if c != pivot {
                partial += l * x;
            }
        }
        let gap = row.threshold - partial;
        if row.pivot_loading > 0.0 {
            lower = lower.min(gap / row.pivot_loading);
        } else if row.pivot_loading < 0.0 {
            upper = upper.max(gap / row.pivot_loading);
        } else if gap < 0.0 {
            return 1.0;
        }
    }
    if upper >= lower {
        1.0
    } else {
        normal::upper_tail(lower) + normal::cdf(upper)
    }
}
