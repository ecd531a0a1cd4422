//! Trial parameters, enrollment schedules and the asymptotic joint law of
//! the sequential z-statistics.
//!
//! Every design is described by up to three statistic streams: `Z1` for
//! subpopulation 1, `Z2` for subpopulation 2 and `ZC` for the combined
//! population. Within a stream the statistics behave like a standardized
//! Brownian motion observed at the cumulative enrollment counts, so
//! `Corr(Z_j, Z_k) = sqrt(N_j / N_k)` for `j <= k`. The two subpopulation
//! streams are independent and, wherever it is defined,
//! `ZC = w1 * Z1 + w2 * Z2`.

use std::fmt;
use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of stages a design may have.
pub const MAX_STAGES: usize = 20;

/// Proportion of subpopulation 1 and the outcome probabilities that are fixed
/// inputs. The subpopulation 2 treatment probability is supplied per
/// evaluation point instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationParams {
    pub pi1: f64,
    pub p1c: f64,
    pub p1t: f64,
    pub p2c: f64,
}

impl PopulationParams {
    pub fn new(pi1: f64, p1c: f64, p1t: f64, p2c: f64) -> Result<Self> {
        let pop = Self { pi1, p1c, p1t, p2c };
        pop.validate()?;
        Ok(pop)
    }

    /// Small-IVH/large-IVH stroke trial planning values.
    pub fn mistie() -> Self {
        Self {
            pi1: 0.33,
            p1c: 0.25,
            p1t: 0.375,
            p2c: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("pi1", self.pi1),
            ("p1c", self.p1c),
            ("p1t", self.p1t),
            ("p2c", self.p2c),
        ] {
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::invalid(name, format!("{value} is not inside (0, 1)")));
            }
        }
        Ok(())
    }

    pub fn pi2(&self) -> f64 {
        1.0 - self.pi1
    }

    /// Treatment effect in subpopulation 1.
    pub fn effect1(&self) -> f64 {
        self.p1t - self.p1c
    }
}

impl Default for PopulationParams {
    fn default() -> Self {
        Self::mistie()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Design {
    /// Adaptive enrichment design testing H0C and H01.
    #[serde(rename = "AD")]
    Adaptive,
    /// Standard group sequential design enrolling the combined population.
    #[serde(rename = "SC")]
    StandardCombined,
    /// Standard group sequential design enrolling subpopulation 1 only.
    #[serde(rename = "SS")]
    StandardSubpop1,
}

impl Design {
    pub const ALL: [Design; 3] = [
        Design::Adaptive,
        Design::StandardCombined,
        Design::StandardSubpop1,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Design::Adaptive => "AD",
            Design::StandardCombined => "SC",
            Design::StandardSubpop1 => "SS",
        }
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Structural parameters shared by the three designs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    /// Total number of stages `K`.
    pub stages: usize,
    /// Last stage at which the adaptive design enrolls subpopulation 2.
    pub k_star: usize,
    /// Adaptive design, participants per stage while both subpopulations enroll.
    pub n1_per_stage: f64,
    /// Adaptive design, participants per stage after `k_star`.
    pub n2_per_stage: f64,
    pub n_sc: f64,
    pub n_ss: f64,
    pub alpha: f64,
    /// Fraction of alpha initially allocated to H0C in the adaptive design.
    pub a_c: f64,
    /// Boundary shape exponent; -0.5 gives O'Brien-Fleming-type boundaries.
    pub delta: f64,
    pub f_ad1: f64,
    pub f_ad2: f64,
    pub f_sc: f64,
    pub f_ss: f64,
    /// Combined-population participants per year.
    pub enrollment_rate: f64,
}

impl DesignSpec {
    /// Adaptive design parameters of the stroke trial example, with standard
    /// designs sized for 80% power in their own target scenarios.
    pub fn mistie() -> Self {
        Self {
            stages: 5,
            k_star: 3,
            n1_per_stage: 280.0,
            n2_per_stage: 148.0,
            n_sc: 94.0,
            n_ss: 101.0,
            alpha: 0.025,
            a_c: 0.09,
            delta: -0.5,
            f_ad1: 0.0,
            f_ad2: 0.0,
            f_sc: 0.0,
            f_ss: 0.0,
            enrollment_rate: 420.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages < 1 || self.stages > MAX_STAGES {
            return Err(Error::invalid(
                "stages",
                format!("{} is outside 1..={MAX_STAGES}", self.stages),
            ));
        }
        if self.k_star < 1 || self.k_star > self.stages {
            return Err(Error::invalid(
                "k_star",
                format!("{} is outside 1..={}", self.k_star, self.stages),
            ));
        }
        for (name, value) in [
            ("n1_per_stage", self.n1_per_stage),
            ("n2_per_stage", self.n2_per_stage),
            ("n_sc_per_stage", self.n_sc),
            ("n_ss_per_stage", self.n_ss),
            ("enrollment_rate", self.enrollment_rate),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::invalid(name, format!("{value} must be positive")));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(
                "alpha",
                format!("{} is not inside (0, 1)", self.alpha),
            ));
        }
        if !(0.0..=1.0).contains(&self.a_c) {
            return Err(Error::invalid(
                "a_c",
                format!("{} is not inside [0, 1]", self.a_c),
            ));
        }
        if !(-0.5..=0.5).contains(&self.delta) {
            return Err(Error::invalid(
                "delta",
                format!("{} is not inside [-0.5, 0.5]", self.delta),
            ));
        }
        for (name, value) in [
            ("f_ad1", self.f_ad1),
            ("f_ad2", self.f_ad2),
            ("f_sc", self.f_sc),
            ("f_ss", self.f_ss),
        ] {
            if !value.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        Ok(())
    }
}

impl Default for DesignSpec {
    fn default() -> Self {
        Self::mistie()
    }
}

/// Maximum cumulative enrollment by the end of each stage, assuming no early
/// stopping. Entries are exact reals; only display layers round.
///
/// A stream that a design never enrolls (or stops enrolling) is simply shorter:
/// for the adaptive design `subpop2` and `combined` have `k_star` entries, and
/// the subpopulation-1-only design has empty `subpop2` and `combined`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrollmentSchedule {
    pub design: Design,
    pub subpop1: Vec<f64>,
    pub subpop2: Vec<f64>,
    pub combined: Vec<f64>,
}

impl EnrollmentSchedule {
    pub fn stages(&self) -> usize {
        self.subpop1.len()
    }

    /// Combined enrollment when every stage runs to completion.
    pub fn max_total(&self) -> f64 {
        self.subpop1.last().copied().unwrap_or(0.0) + self.subpop2.last().copied().unwrap_or(0.0)
    }
}

pub fn build_schedule(
    spec: &DesignSpec,
    pop: &PopulationParams,
    design: Design,
) -> Result<EnrollmentSchedule> {
    spec.validate()?;
    pop.validate()?;
    let k_max = spec.stages;
    let stage = |k: usize| k as f64;
    let schedule = match design {
        Design::Adaptive => {
            let ks = spec.k_star;
            let combined: Vec<f64> = (1..=ks).map(|k| stage(k) * spec.n1_per_stage).collect();
            let subpop2: Vec<f64> = (1..=ks)
                .map(|k| stage(k) * pop.pi2() * spec.n1_per_stage)
                .collect();
            let at_k_star = stage(ks) * pop.pi1 * spec.n1_per_stage;
            let subpop1 = (1..=k_max)
                .map(|k| {
                    if k <= ks {
                        stage(k) * pop.pi1 * spec.n1_per_stage
                    } else {
                        at_k_star + stage(k - ks) * spec.n2_per_stage
                    }
                })
                .collect();
            EnrollmentSchedule {
                design,
                subpop1,
                subpop2,
                combined,
            }
        }
        Design::StandardCombined => EnrollmentSchedule {
            design,
            subpop1: (1..=k_max)
                .map(|k| stage(k) * pop.pi1 * spec.n_sc)
                .collect(),
            subpop2: (1..=k_max)
                .map(|k| stage(k) * pop.pi2() * spec.n_sc)
                .collect(),
            combined: (1..=k_max).map(|k| stage(k) * spec.n_sc).collect(),
        },
        Design::StandardSubpop1 => EnrollmentSchedule {
            design,
            subpop1: (1..=k_max).map(|k| stage(k) * spec.n_ss).collect(),
            subpop2: Vec::new(),
            combined: Vec::new(),
        },
    };
    Ok(schedule)
}

/// Per-subpopulation outcome variances `p_c(1-p_c) + p_t(1-p_t)` and the
/// combination weights of the combined statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponents {
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
    pub sigma_c_sq: f64,
    pub w1: f64,
    pub w2: f64,
}

impl VarianceComponents {
    fn new(pop: &PopulationParams, p1t: f64, p2t: f64) -> Result<Self> {
        let sigma1_sq = pop.p1c * (1.0 - pop.p1c) + p1t * (1.0 - p1t);
        let sigma2_sq = pop.p2c * (1.0 - pop.p2c) + p2t * (1.0 - p2t);
        if !(sigma1_sq > 0.0) || !(sigma2_sq > 0.0) {
            return Err(Error::DegenerateVariance(format!(
                "outcome variance is zero (sigma1^2 = {sigma1_sq}, sigma2^2 = {sigma2_sq})"
            )));
        }
        let sigma_c_sq = pop.pi1 * sigma1_sq + pop.pi2() * sigma2_sq;
        Ok(Self {
            sigma1_sq,
            sigma2_sq,
            sigma_c_sq,
            w1: (pop.pi1 * sigma1_sq / sigma_c_sq).sqrt(),
            w2: (pop.pi2() * sigma2_sq / sigma_c_sq).sqrt(),
        })
    }
}

/// Where each statistic stream sits inside the stacked vector. The order is
/// always `Z1`, then `Z2`, then `ZC`; streams a design lacks are empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub subpop1: Range<usize>,
    pub subpop2: Range<usize>,
    pub combined: Range<usize>,
}

impl Layout {
    fn of(schedule: &EnrollmentSchedule) -> Self {
        let (n1, n2, nc) = match schedule.design {
            Design::Adaptive => (
                schedule.subpop1.len(),
                schedule.subpop2.len(),
                schedule.combined.len(),
            ),
            Design::StandardCombined => (0, 0, schedule.combined.len()),
            Design::StandardSubpop1 => (schedule.subpop1.len(), 0, 0),
        };
        Layout {
            subpop1: 0..n1,
            subpop2: n1..n1 + n2,
            combined: n1 + n2..n1 + n2 + nc,
        }
    }

    pub fn dim(&self) -> usize {
        self.combined.end
    }
}

fn check_p2t(p2t: f64) -> Result<()> {
    // p2t is an evaluation point, not a population parameter: the closed
    // interval is allowed as long as the variance stays positive.
    if !(0.0..=1.0).contains(&p2t) {
        return Err(Error::invalid("p2t", format!("{p2t} is not inside [0, 1]")));
    }
    Ok(())
}

fn standardized_mean(effect: f64, n: f64, sigma_sq: f64) -> f64 {
    effect * (n / (2.0 * sigma_sq)).sqrt()
}

/// Means of the stacked statistics at the alternative `(pop, p2t)`.
pub fn z_mean_vector(
    schedule: &EnrollmentSchedule,
    pop: &PopulationParams,
    p2t: f64,
) -> Result<Vec<f64>> {
    pop.validate()?;
    check_p2t(p2t)?;
    let var = VarianceComponents::new(pop, pop.p1t, p2t)?;
    Ok(means(schedule, pop, pop.p1t, p2t, &var))
}

fn means(
    schedule: &EnrollmentSchedule,
    pop: &PopulationParams,
    p1t: f64,
    p2t: f64,
    var: &VarianceComponents,
) -> Vec<f64> {
    let layout = Layout::of(schedule);
    let d1 = p1t - pop.p1c;
    let d2 = p2t - pop.p2c;
    let dc = pop.pi1 * d1 + pop.pi2() * d2;
    let mut mean = vec![0.0; layout.dim()];
    for (i, k) in layout.subpop1.clone().zip(0..) {
        mean[i] = standardized_mean(d1, schedule.subpop1[k], var.sigma1_sq);
    }
    for (i, k) in layout.subpop2.clone().zip(0..) {
        mean[i] = standardized_mean(d2, schedule.subpop2[k], var.sigma2_sq);
    }
    for (i, k) in layout.combined.clone().zip(0..) {
        mean[i] = standardized_mean(dc, schedule.combined[k], var.sigma_c_sq);
    }
    mean
}

fn serial_corr(counts: &[f64], j: usize, k: usize) -> f64 {
    let (lo, hi) = if j <= k { (j, k) } else { (k, j) };
    (counts[lo] / counts[hi]).sqrt()
}

/// Covariance of the stacked statistics, written out entry by entry from the
/// serial correlation and the linear form of `ZC`.
pub fn z_covariance(
    schedule: &EnrollmentSchedule,
    pop: &PopulationParams,
    p2t: f64,
) -> Result<DMatrix<f64>> {
    pop.validate()?;
    check_p2t(p2t)?;
    let var = VarianceComponents::new(pop, pop.p1t, p2t)?;
    Ok(covariance(schedule, &var))
}

#[derive(Clone, Copy, PartialEq)]
enum Stream {
    One,
    Two,
    Combined,
}

fn covariance(schedule: &EnrollmentSchedule, var: &VarianceComponents) -> DMatrix<f64> {
    let layout = Layout::of(schedule);
    let dim = layout.dim();
    let mut entries: Vec<(Stream, usize)> = Vec::with_capacity(dim);
    entries.extend((0..layout.subpop1.len()).map(|k| (Stream::One, k)));
    entries.extend((0..layout.subpop2.len()).map(|k| (Stream::Two, k)));
    entries.extend((0..layout.combined.len()).map(|k| (Stream::Combined, k)));

    // Combined-stream correlation of the standard combined design uses its
    // own counts; the adaptive design shares stage indices with Z1 and Z2.
    let corr_c = |j, k| serial_corr(&schedule.combined, j, k);
    let corr_1 = |j, k| serial_corr(&schedule.subpop1, j, k);
    let corr_2 = |j, k| serial_corr(&schedule.subpop2, j, k);

    DMatrix::from_fn(dim, dim, |a, b| {
        let (sa, j) = entries[a];
        let (sb, k) = entries[b];
        match (sa, sb) {
            (Stream::One, Stream::One) => corr_1(j, k),
            (Stream::Two, Stream::Two) => corr_2(j, k),
            (Stream::Combined, Stream::Combined) => corr_c(j, k),
            (Stream::One, Stream::Two) | (Stream::Two, Stream::One) => 0.0,
            (Stream::Combined, Stream::One) | (Stream::One, Stream::Combined) => var.w1 * corr_1(j, k),
            (Stream::Combined, Stream::Two) | (Stream::Two, Stream::Combined) => var.w2 * corr_2(j, k),
        }
    })
}

/// Independent-increment representation `Z = mean + factor * xi` with
/// `xi ~ N(0, I)`. Columns are the per-stage increments of `Z1`, then `Z2`,
/// then (standard combined design only) `ZC`.
fn increment_factor(schedule: &EnrollmentSchedule, var: &VarianceComponents) -> DMatrix<f64> {
    let layout = Layout::of(schedule);
    let dim = layout.dim();
    let (stream1, stream2): (&[f64], &[f64]) = match schedule.design {
        Design::Adaptive => (&schedule.subpop1, &schedule.subpop2),
        Design::StandardCombined => (&schedule.combined, &[]),
        Design::StandardSubpop1 => (&schedule.subpop1, &[]),
    };
    let cols = stream1.len() + stream2.len();
    let mut factor = DMatrix::zeros(dim, cols);

    let fill = |factor: &mut DMatrix<f64>, rows: Range<usize>, counts: &[f64], col0: usize| {
        for (row, k) in rows.zip(0..) {
            let mut prev = 0.0;
            for j in 0..=k {
                factor[(row, col0 + j)] = ((counts[j] - prev) / counts[k]).sqrt();
                prev = counts[j];
            }
        }
    };

    match schedule.design {
        Design::Adaptive => {
            fill(&mut factor, layout.subpop1.clone(), stream1, 0);
            fill(&mut factor, layout.subpop2.clone(), stream2, stream1.len());
            for (row, k) in layout.combined.clone().zip(0..) {
                for c in 0..cols {
                    factor[(row, c)] = var.w1 * factor[(layout.subpop1.start + k, c)]
                        + var.w2 * factor[(layout.subpop2.start + k, c)];
                }
            }
        }
        Design::StandardCombined => fill(&mut factor, layout.combined.clone(), stream1, 0),
        Design::StandardSubpop1 => fill(&mut factor, layout.subpop1.clone(), stream1, 0),
    }
    factor
}

/// Multivariate normal law of the stacked statistics of one design at one
/// parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct ZJointLaw {
    pub design: Design,
    pub layout: Layout,
    pub mean: Vec<f64>,
    pub variances: VarianceComponents,
    factor: DMatrix<f64>,
    schedule: EnrollmentSchedule,
}

impl ZJointLaw {
    /// Law at the alternative `(pop, p2t)`, using the variances of that
    /// alternative.
    pub fn new(schedule: &EnrollmentSchedule, pop: &PopulationParams, p2t: f64) -> Result<Self> {
        pop.validate()?;
        check_p2t(p2t)?;
        Self::at(schedule, pop, pop.p1t, p2t)
    }

    /// Law under the global null `p1t = p1c`, `p2t = p2c`; used to calibrate
    /// boundaries.
    pub fn global_null(schedule: &EnrollmentSchedule, pop: &PopulationParams) -> Result<Self> {
        pop.validate()?;
        Self::at(schedule, pop, pop.p1c, pop.p2c)
    }

    fn at(schedule: &EnrollmentSchedule, pop: &PopulationParams, p1t: f64, p2t: f64) -> Result<Self> {
        let variances = VarianceComponents::new(pop, p1t, p2t)?;
        Ok(Self {
            design: schedule.design,
            layout: Layout::of(schedule),
            mean: means(schedule, pop, p1t, p2t, &variances),
            factor: increment_factor(schedule, &variances),
            variances,
            schedule: schedule.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn schedule(&self) -> &EnrollmentSchedule {
        &self.schedule
    }

    /// Number of independent standard normals behind one draw.
    pub fn n_increments(&self) -> usize {
        self.factor.ncols()
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        covariance(&self.schedule, &self.variances)
    }

    /// Writes `mean + factor * xi` into `out`.
    pub fn transform(&self, xi: &[f64], out: &mut [f64]) {
        debug_assert_eq!(xi.len(), self.factor.ncols());
        debug_assert_eq!(out.len(), self.dim());
        for (row, value) in out.iter_mut().enumerate() {
            let mut acc = self.mean[row];
            for (col, x) in xi.iter().enumerate() {
                acc += self.factor[(row, col)] * x;
            }
            *value = acc;
        }
    }
}
