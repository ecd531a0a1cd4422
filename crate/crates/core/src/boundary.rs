//! Wang-Tsiatis efficacy boundaries calibrated to the familywise error rate,
//! and the per-stage boundary tables built from them.
//!
//! Every boundary has the form `constant * (N_k / N_ref)^delta` where `N_k`
//! is the cumulative enrollment of the statistic's stream and `N_ref` its
//! final value. For the adaptive design the combined and subpopulation 2
//! streams end at `k_star`, so they are normalized by their counts there.

use serde::{Deserialize, Serialize};

use crate::clock::Deadline;
use crate::crossing::{estimate_crossing, CrnBlock};
use crate::error::{Error, Result};
use crate::inf_serde;
use crate::model::{build_schedule, Design, DesignSpec, EnrollmentSchedule, PopulationParams, ZJointLaw};

/// Block stream ids. Both standard designs share one block: their null laws
/// coincide, which makes their constants identical.
const SINGLE_STREAM_BLOCK: u64 = 1;
const ADAPTIVE_BLOCK: u64 = 2;

/// Largest magnitude the bracket search will try for a constant.
const BRACKET_LIMIT: f64 = 40.0;

/// Root-finding settings for boundary calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub paths: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub max_steps: usize,
}

impl Calibration {
    pub const DEFAULT_PATHS: usize = 100_000;
    pub const DEFAULT_SEED: u64 = 20_140_101;

    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

impl Default for Calibration {
    fn default() -> Self {
        Self {
            paths: Self::DEFAULT_PATHS,
            seed: Self::DEFAULT_SEED,
            tolerance: 1e-4,
            max_steps: 60,
        }
    }
}

/// Outcome of one bisection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    #[serde(with = "inf_serde::scalar")]
    pub constant: f64,
    /// Target crossing probability.
    pub target: f64,
    /// Estimated crossing probability at `constant`.
    pub achieved: f64,
    pub achieved_std_error: f64,
    pub steps: usize,
}

impl SolveReport {
    fn disabled(target: f64) -> Self {
        Self {
            constant: f64::INFINITY,
            target,
            achieved: 0.0,
            achieved_std_error: 0.0,
            steps: 0,
        }
    }
}

/// Smallest `c` (to within `tol`) with `prob(c) <= target`, for a
/// nonincreasing `prob`.
fn smallest_constant<F>(raw_prob: F, target: f64, calib: &Calibration, deadline: &Deadline) -> Result<SolveReport>
where
    F: Fn(f64) -> Result<(f64, f64)>,
{
    let prob = |c: f64| {
        deadline.check()?;
        raw_prob(c)
    };
    let mut hi = 2.0;
    let mut step = 1.0;
    let mut at_hi = prob(hi)?;
    while at_hi.0 > target {
        if hi >= BRACKET_LIMIT {
            return Err(Error::Infeasible(format!(
                "crossing probability stays above {target} for every constant up to {BRACKET_LIMIT}"
            )));
        }
        hi = (hi + step).min(BRACKET_LIMIT);
        step *= 2.0;
        at_hi = prob(hi)?;
    }
    let mut lo = hi - 1.0;
    step = 1.0;
    while prob(lo)?.0 <= target {
        if lo <= -BRACKET_LIMIT {
            return Err(Error::Infeasible(format!(
                "crossing probability stays below {target} for every constant down to -{BRACKET_LIMIT}"
            )));
        }
        hi = lo;
        lo = (lo - step).max(-BRACKET_LIMIT);
        step *= 2.0;
    }
    let mut steps = 0;
    let mut at_hi = prob(hi)?;
    while hi - lo > calib.tolerance {
        steps += 1;
        if steps > calib.max_steps {
            return Err(Error::NonConvergence { steps: calib.max_steps });
        }
        let mid = 0.5 * (lo + hi);
        let at_mid = prob(mid)?;
        if at_mid.0 > target {
            lo = mid;
        } else {
            hi = mid;
            at_hi = at_mid;
        }
    }
    Ok(SolveReport {
        constant: hi,
        target,
        achieved: at_hi.0,
        achieved_std_error: at_hi.1,
        steps,
    })
}

/// `(counts[k] / reference)^delta` for each stage.
pub fn shape(counts: &[f64], reference: f64, delta: f64) -> Vec<f64> {
    counts.iter().map(|n| (n / reference).powf(delta)).collect()
}

fn scaled(constant: f64, shape: &[f64]) -> Vec<f64> {
    shape.iter().map(|s| constant * s).collect()
}

fn last(values: &[f64]) -> f64 {
    *values.last().expect("nonempty stream")
}

/// Shapes of the subpopulation 1 and combined streams of a law, empty when
/// the design lacks the stream.
fn stream_shapes(schedule: &EnrollmentSchedule, delta: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let of = |counts: &Vec<f64>| {
        if counts.is_empty() {
            Vec::new()
        } else {
            shape(counts, last(counts), delta)
        }
    };
    match schedule.design {
        Design::Adaptive => (
            of(&schedule.subpop1),
            of(&schedule.subpop2),
            of(&schedule.combined),
        ),
        Design::StandardCombined => (Vec::new(), Vec::new(), of(&schedule.combined)),
        Design::StandardSubpop1 => (of(&schedule.subpop1), Vec::new(), Vec::new()),
    }
}

fn thresholds(law: &ZJointLaw, subpop1: &[f64], combined: &[f64]) -> Vec<f64> {
    let mut t = vec![f64::INFINITY; law.dim()];
    t[law.layout.subpop1.clone()].copy_from_slice(subpop1);
    t[law.layout.combined.clone()].copy_from_slice(combined);
    t
}

/// Calibrates `e` so the single statistic stream of a standard design crosses
/// `e * shape` with probability `alpha` under the global null.
pub fn solve_single_stream(spec: &DesignSpec, null_law: &ZJointLaw, calib: &Calibration) -> Result<SolveReport> {
    solve_single_stream_within(spec, null_law, calib, &Deadline::unlimited())
}

pub fn solve_single_stream_within(
    spec: &DesignSpec,
    null_law: &ZJointLaw,
    calib: &Calibration,
    deadline: &Deadline,
) -> Result<SolveReport> {
    if null_law.design == Design::Adaptive {
        return Err(Error::invalid("design", "adaptive design has two statistic streams"));
    }
    let block = CrnBlock::draw(calib.seed, SINGLE_STREAM_BLOCK, calib.paths, null_law.n_increments())?;
    let (s1, _, sc) = stream_shapes(null_law.schedule(), spec.delta);
    smallest_constant(
        |e| {
            let est = estimate_crossing(null_law, &thresholds(null_law, &scaled(e, &s1), &scaled(e, &sc)), &block)?;
            Ok((est.probability, est.std_error))
        },
        spec.alpha,
        calib,
        deadline,
    )
}

/// Calibrated constants of the adaptive design. An infinite constant means the
/// hypothesis is never rejected; the matching flag records that the solver
/// returned that sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConstants {
    pub combined: SolveReport,
    pub subpop1: SolveReport,
    pub combined_disabled: bool,
    pub subpop1_disabled: bool,
}

/// Two-step calibration: first the combined-population constant at alpha
/// share `a_c` with H01 switched off, then the subpopulation 1 constant so the
/// probability of rejecting anything is `alpha`. Futility is ignored.
pub fn solve_adaptive(spec: &DesignSpec, null_law: &ZJointLaw, calib: &Calibration) -> Result<AdaptiveConstants> {
    solve_adaptive_within(spec, null_law, calib, &Deadline::unlimited())
}

pub fn solve_adaptive_within(
    spec: &DesignSpec,
    null_law: &ZJointLaw,
    calib: &Calibration,
    deadline: &Deadline,
) -> Result<AdaptiveConstants> {
    if null_law.design != Design::Adaptive {
        return Err(Error::invalid("design", "expected the adaptive design law"));
    }
    if !(0.0..=1.0).contains(&spec.a_c) {
        return Err(Error::invalid("a_c", "must be inside [0, 1]"));
    }
    let block = CrnBlock::draw(calib.seed, ADAPTIVE_BLOCK, calib.paths, null_law.n_increments())?;
    let (s1, _, sc) = stream_shapes(null_law.schedule(), spec.delta);
    let off1 = vec![f64::INFINITY; s1.len()];
    let combined_target = spec.a_c * spec.alpha;

    let combined = if spec.a_c == 0.0 {
        SolveReport::disabled(0.0)
    } else {
        smallest_constant(
            |e| {
                let est = estimate_crossing(null_law, &thresholds(null_law, &off1, &scaled(e, &sc)), &block)?;
                Ok((est.probability, est.std_error))
            },
            combined_target,
            calib,
            deadline,
        )?
    };
    let combined_bounds = scaled(combined.constant, &sc);

    let subpop1 = if spec.a_c == 1.0 {
        // All of alpha is spent on H0C.
        let mut report = SolveReport::disabled(spec.alpha);
        report.achieved = combined.achieved;
        report.achieved_std_error = combined.achieved_std_error;
        report
    } else {
        smallest_constant(
            |e| {
                let est = estimate_crossing(null_law, &thresholds(null_law, &scaled(e, &s1), &combined_bounds), &block)?;
                Ok((est.probability, est.std_error))
            },
            spec.alpha,
            calib,
            deadline,
        )?
    };
    Ok(AdaptiveConstants {
        combined_disabled: combined.constant == f64::INFINITY,
        subpop1_disabled: subpop1.constant == f64::INFINITY,
        combined,
        subpop1,
    })
}

/// Boundaries of the adaptive design. Vectors over the combined and
/// subpopulation 2 streams have `k_star` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveBoundaries {
    pub constants: AdaptiveConstants,
    pub schedule: EnrollmentSchedule,
    /// `u_{C,k}`, efficacy for H0C.
    #[serde(with = "inf_serde::vec")]
    pub combined_efficacy: Vec<f64>,
    /// `u_{1,k}`, efficacy for H01.
    #[serde(with = "inf_serde::vec")]
    pub subpop1_efficacy: Vec<f64>,
    /// `l_{1,k}`.
    #[serde(with = "inf_serde::vec")]
    pub subpop1_futility: Vec<f64>,
    /// `l_{2,k}`; the entry at `k_star` is `+inf`.
    #[serde(with = "inf_serde::vec")]
    pub subpop2_futility: Vec<f64>,
}

impl AdaptiveBoundaries {
    pub fn stages(&self) -> usize {
        self.subpop1_efficacy.len()
    }

    pub fn k_star(&self) -> usize {
        self.combined_efficacy.len()
    }

    /// Efficacy thresholds aligned with the stacked statistics of `law`.
    pub fn efficacy_thresholds(&self, law: &ZJointLaw) -> Vec<f64> {
        thresholds(law, &self.subpop1_efficacy, &self.combined_efficacy)
    }
}

/// Boundaries of a standard design. The final futility boundary equals the
/// final efficacy boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardBoundaries {
    pub design: Design,
    pub constant: SolveReport,
    pub futility_constant: f64,
    pub schedule: EnrollmentSchedule,
    pub efficacy: Vec<f64>,
    pub futility: Vec<f64>,
}

impl StandardBoundaries {
    pub fn stages(&self) -> usize {
        self.efficacy.len()
    }

    pub fn efficacy_thresholds(&self, law: &ZJointLaw) -> Vec<f64> {
        match self.design {
            Design::StandardSubpop1 => thresholds(law, &self.efficacy, &[]),
            _ => thresholds(law, &[], &self.efficacy),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum BoundaryTable {
    Adaptive(AdaptiveBoundaries),
    Standard(StandardBoundaries),
}

/// Calibrated constants for one design, as fed to [`materialize_boundaries`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constants {
    Adaptive(AdaptiveConstants),
    Standard(SolveReport),
}

pub fn materialize_boundaries(
    spec: &DesignSpec,
    schedule: &EnrollmentSchedule,
    constants: Constants,
) -> Result<BoundaryTable> {
    let (s1, s2, sc) = stream_shapes(schedule, spec.delta);
    match (schedule.design, constants) {
        (Design::Adaptive, Constants::Adaptive(c)) => {
            let mut subpop2_futility = scaled(spec.f_ad2, &s2);
            *subpop2_futility.last_mut().expect("k_star >= 1") = f64::INFINITY;
            Ok(BoundaryTable::Adaptive(AdaptiveBoundaries {
                combined_efficacy: scaled(c.combined.constant, &sc),
                subpop1_efficacy: scaled(c.subpop1.constant, &s1),
                subpop1_futility: scaled(spec.f_ad1, &s1),
                subpop2_futility,
                constants: c,
                schedule: schedule.clone(),
            }))
        }
        (design @ (Design::StandardCombined | Design::StandardSubpop1), Constants::Standard(report)) => {
            let (shape, f) = if design == Design::StandardCombined {
                (sc, spec.f_sc)
            } else {
                (s1, spec.f_ss)
            };
            let efficacy = scaled(report.constant, &shape);
            let mut futility = scaled(f, &shape);
            *futility.last_mut().expect("K >= 1") = last(&efficacy);
            Ok(BoundaryTable::Standard(StandardBoundaries {
                design,
                constant: report,
                futility_constant: f,
                schedule: schedule.clone(),
                efficacy,
                futility,
            }))
        }
        (design, _) => Err(Error::invalid(
            "design",
            format!("constants do not match design {design}"),
        )),
    }
}

/// Boundary tables of all three designs from one calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignTables {
    pub adaptive: AdaptiveBoundaries,
    pub combined: StandardBoundaries,
    pub subpop1: StandardBoundaries,
    pub calibration: Calibration,
}

impl DesignTables {
    pub fn calibrate(spec: &DesignSpec, pop: &PopulationParams, calib: &Calibration) -> Result<Self> {
        Self::calibrate_within(spec, pop, calib, &Deadline::unlimited())
    }

    /// As [`DesignTables::calibrate`], giving up with [`Error::TimeLimit`] or
    /// [`Error::Cancelled`] when the deadline says so.
    pub fn calibrate_within(
        spec: &DesignSpec,
        pop: &PopulationParams,
        calib: &Calibration,
        deadline: &Deadline,
    ) -> Result<Self> {
        spec.validate()?;
        pop.validate()?;
        let solve_standard = |design| -> Result<StandardBoundaries> {
            let schedule = build_schedule(spec, pop, design)?;
            let law = ZJointLaw::global_null(&schedule, pop)?;
            let report = solve_single_stream_within(spec, &law, calib, deadline)?;
            match materialize_boundaries(spec, &schedule, Constants::Standard(report))? {
                BoundaryTable::Standard(b) => Ok(b),
                BoundaryTable::Adaptive(_) => unreachable!(),
            }
        };
        let solve_adaptive_table = || -> Result<AdaptiveBoundaries> {
            let schedule = build_schedule(spec, pop, Design::Adaptive)?;
            let law = ZJointLaw::global_null(&schedule, pop)?;
            let constants = solve_adaptive_within(spec, &law, calib, deadline)?;
            match materialize_boundaries(spec, &schedule, Constants::Adaptive(constants))? {
                BoundaryTable::Adaptive(b) => Ok(b),
                BoundaryTable::Standard(_) => unreachable!(),
            }
        };
        let (adaptive, (combined, subpop1)) = join(solve_adaptive_table, || {
            join(
                || solve_standard(Design::StandardCombined),
                || solve_standard(Design::StandardSubpop1),
            )
        });
        Ok(Self {
            adaptive: adaptive?,
            combined: combined?,
            subpop1: subpop1?,
            calibration: *calib,
        })
    }

    pub fn standard(&self, design: Design) -> Option<&StandardBoundaries> {
        match design {
            Design::StandardCombined => Some(&self.combined),
            Design::StandardSubpop1 => Some(&self.subpop1),
            Design::Adaptive => None,
        }
    }
}

fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    #[cfg(feature = "parallel")]
    {
        rayon::join(a, b)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (a(), b())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal;
    use approx::assert_relative_eq;

    fn fast() -> Calibration {
        Calibration {
            paths: 20_000,
            ..Calibration::default()
        }
    }

    fn null_law(spec: &DesignSpec, design: Design) -> ZJointLaw {
        let pop = PopulationParams::mistie();
        let s = build_schedule(spec, &pop, design).unwrap();
        ZJointLaw::global_null(&s, &pop).unwrap()
    }

    #[test]
    fn shape_multipliers_obf() {
        let s = shape(&[1.0, 2.0, 3.0, 4.0, 5.0], 5.0, -0.5);
        for (got, want) in s.iter().zip([2.2361, 1.5811, 1.2910, 1.1180, 1.0000]) {
            assert!((got - want).abs() < 5e-5);
        }
        assert!(shape(&[1.0, 2.0, 3.0], 3.0, 0.0).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn single_look_constant_is_normal_quantile() {
        let mut spec = DesignSpec::mistie();
        spec.stages = 1;
        spec.k_star = 1;
        let r = solve_single_stream(&spec, &null_law(&spec, Design::StandardCombined), &fast()).unwrap();
        assert!((r.constant - normal::quantile(0.975)).abs() < 2e-4);
        assert!((r.constant - 1.96).abs() < 5e-4);
    }

    #[test]
    fn standard_designs_share_constants() {
        let spec = DesignSpec::mistie();
        let c = solve_single_stream(&spec, &null_law(&spec, Design::StandardCombined), &fast()).unwrap();
        let s = solve_single_stream(&spec, &null_law(&spec, Design::StandardSubpop1), &fast()).unwrap();
        assert!((c.constant - s.constant).abs() <= 2e-4);
        assert!(c.achieved <= spec.alpha);
    }

    #[test]
    fn adaptive_rejects_standard_solver() {
        let spec = DesignSpec::mistie();
        assert!(solve_single_stream(&spec, &null_law(&spec, Design::Adaptive), &fast()).is_err());
        assert!(solve_adaptive(&spec, &null_law(&spec, Design::StandardCombined), &fast()).is_err());
    }

    #[test]
    fn zero_allocation_disables_combined() {
        let mut spec = DesignSpec::mistie();
        spec.a_c = 0.0;
        spec.k_star = spec.stages;
        let c = solve_adaptive(&spec, &null_law(&spec, Design::Adaptive), &fast()).unwrap();
        assert!(c.combined_disabled);
        assert_eq!(c.combined.constant, f64::INFINITY);
        // With k* = K the subpopulation 1 stream has equal increments, so its
        // constant is the standard-design constant up to Monte Carlo error.
        let ss = solve_single_stream(&spec, &null_law(&spec, Design::StandardSubpop1), &fast()).unwrap();
        assert!((c.subpop1.constant - ss.constant).abs() < 0.03, "{} vs {}", c.subpop1.constant, ss.constant);
    }

    #[test]
    fn full_allocation_disables_subpop1() {
        let mut spec = DesignSpec::mistie();
        spec.a_c = 1.0;
        let c = solve_adaptive(&spec, &null_law(&spec, Design::Adaptive), &fast()).unwrap();
        assert!(c.subpop1_disabled);
        assert!(!c.combined_disabled);
        assert!((c.combined.achieved - spec.alpha).abs() < 3.0 * c.combined.achieved_std_error + 1e-4);
    }

    #[test]
    fn adaptive_table_structure() {
        let spec = DesignSpec::mistie();
        let pop = PopulationParams::mistie();
        let tables = DesignTables::calibrate(&spec, &pop, &fast()).unwrap();
        let ad = &tables.adaptive;
        assert_eq!(ad.stages(), 5);
        assert_eq!(ad.k_star(), 3);
        assert_eq!(ad.subpop2_futility, vec![0.0, 0.0, f64::INFINITY]);
        assert!(ad.subpop1_futility.iter().all(|&v| v == 0.0));
        // Efficacy equals constant times shape exactly.
        let s1 = shape(&ad.schedule.subpop1, 573.2, -0.5);
        for (u, s) in ad.subpop1_efficacy.iter().zip(&s1) {
            assert_relative_eq!(*u, ad.constants.subpop1.constant * s, max_relative = 1e-12);
        }
        for w in ad.subpop1_efficacy.windows(2) {
            assert!(w[0] > w[1]);
        }
        for b in [&tables.combined, &tables.subpop1] {
            assert_eq!(b.stages(), 5);
            assert_eq!(b.futility.last(), b.efficacy.last());
        }
    }

    #[test]
    fn flat_boundaries_when_delta_is_zero() {
        let mut spec = DesignSpec::mistie();
        spec.delta = 0.0;
        spec.f_sc = -1.0;
        let schedule = build_schedule(&spec, &PopulationParams::mistie(), Design::StandardCombined).unwrap();
        let report = SolveReport {
            constant: 2.5,
            target: 0.025,
            achieved: 0.025,
            achieved_std_error: 0.0,
            steps: 0,
        };
        let BoundaryTable::Standard(b) = materialize_boundaries(&spec, &schedule, Constants::Standard(report)).unwrap() else {
            panic!()
        };
        assert!(b.efficacy.iter().all(|&u| u == 2.5));
        assert_eq!(b.futility, vec![-1.0, -1.0, -1.0, -1.0, 2.5]);
    }

    #[test]
    fn mismatched_constants_rejected() {
        let spec = DesignSpec::mistie();
        let schedule = build_schedule(&spec, &PopulationParams::mistie(), Design::Adaptive).unwrap();
        let report = SolveReport::disabled(0.0);
        assert!(materialize_boundaries(&spec, &schedule, Constants::Standard(report)).is_err());
    }
}
