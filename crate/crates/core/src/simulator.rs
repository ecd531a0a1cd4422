//! Decision rules of the three designs applied to simulated z-statistic
//! paths, trial durations, and Monte Carlo operating characteristics over a
//! grid of subpopulation 2 treatment effects.

use std::sync::atomic::{AtomicBool, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::boundary::{AdaptiveBoundaries, DesignTables, StandardBoundaries};
use crate::clock::Deadline;
use crate::config::{EffectGrid, McConfig};
use crate::error::{Error, Result};
use crate::model::{Design, DesignSpec, Layout, PopulationParams, ZJointLaw};
use crate::par::map_chunks;

const CHUNK: usize = 1000;

/// Whether futility boundaries stop the trial. Power and sample-size metrics
/// always enforce them; ignoring them is how the non-binding error guarantee
/// is checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Futility {
    #[default]
    Enforced,
    Ignored,
}

/// Result of running one simulated trial through a design's rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub design: Design,
    pub rejected_h01: bool,
    pub rejected_h0c: bool,
    /// Stage (1-based) at which the trial ended.
    pub stop_stage: usize,
    /// Last stage with subpopulation 2 enrollment, if it was ever enrolled.
    pub subpop2_stop_stage: Option<usize>,
    pub enrolled_subpop1: f64,
    pub enrolled_subpop2: f64,
    pub duration_years: f64,
}

impl TrialOutcome {
    pub fn enrolled_total(&self) -> f64 {
        self.enrolled_subpop1 + self.enrolled_subpop2
    }

    pub fn rejected_any(&self) -> bool {
        self.rejected_h01 || self.rejected_h0c
    }
}

/// Statistic values of one adaptive-design path, split by stream.
#[derive(Debug, Clone, Copy)]
pub struct AdaptivePath<'a> {
    pub subpop1: &'a [f64],
    pub subpop2: &'a [f64],
    pub combined: &'a [f64],
}

impl<'a> AdaptivePath<'a> {
    pub fn from_stacked(values: &'a [f64], layout: &Layout) -> Self {
        Self {
            subpop1: &values[layout.subpop1.clone()],
            subpop2: &values[layout.subpop2.clone()],
            combined: &values[layout.combined.clone()],
        }
    }
}

pub fn run_adaptive_rules(
    path: AdaptivePath<'_>,
    bounds: &AdaptiveBoundaries,
    spec: &DesignSpec,
    pop: &PopulationParams,
) -> Result<TrialOutcome> {
    run_adaptive_rules_with(path, bounds, spec, pop, Futility::Enforced)
}

pub fn run_adaptive_rules_with(
    path: AdaptivePath<'_>,
    bounds: &AdaptiveBoundaries,
    spec: &DesignSpec,
    pop: &PopulationParams,
    futility: Futility,
) -> Result<TrialOutcome> {
    let k_max = bounds.stages();
    let k_star = bounds.k_star();
    for (got, want) in [
        (path.subpop1.len(), k_max),
        (path.subpop2.len(), k_star),
        (path.combined.len(), k_star),
    ] {
        if got != want {
            return Err(Error::DimensionMismatch {
                expected: want,
                actual: got,
            });
        }
    }
    let enforce = futility == Futility::Enforced;
    let mut restricted_at: Option<usize> = None;
    let mut rejected_h01 = false;
    let mut rejected_h0c = false;
    let mut stop_stage = k_max;

    for k in 0..k_max {
        let stage = k + 1;
        let z1 = path.subpop1[k];
        let final_stage = stage == k_max;
        match restricted_at {
            None => {
                // Step 1: efficacy.
                rejected_h01 = z1 > bounds.subpop1_efficacy[k];
                rejected_h0c = k < k_star && path.combined[k] > bounds.combined_efficacy[k];
                if rejected_h01 || rejected_h0c {
                    stop_stage = stage;
                    break;
                }
                // Step 2: futility of the whole trial.
                if (enforce && z1 <= bounds.subpop1_futility[k]) || final_stage {
                    stop_stage = stage;
                    break;
                }
                // Step 3: restrict to subpopulation 1.
                let z2_futile = enforce && k < k_star && path.subpop2[k] <= bounds.subpop2_futility[k];
                if z2_futile || stage >= k_star {
                    restricted_at = Some(stage);
                }
                // Step 4 otherwise: keep enrolling the combined population.
            }
            Some(_) => {
                // Steps 3a-3c; H0C is never tested again.
                if z1 > bounds.subpop1_efficacy[k] {
                    rejected_h01 = true;
                    stop_stage = stage;
                    break;
                }
                if (enforce && z1 <= bounds.subpop1_futility[k]) || final_stage {
                    stop_stage = stage;
                    break;
                }
            }
        }
    }

    let subpop2_stop = restricted_at.unwrap_or(stop_stage).min(k_star);
    debug_assert!(!rejected_h0c || subpop2_stop == stop_stage);
    let schedule = &bounds.schedule;
    let mut outcome = TrialOutcome {
        design: Design::Adaptive,
        rejected_h01,
        rejected_h0c,
        stop_stage,
        subpop2_stop_stage: Some(subpop2_stop),
        enrolled_subpop1: schedule.subpop1[stop_stage - 1],
        enrolled_subpop2: schedule.subpop2[subpop2_stop - 1],
        duration_years: 0.0,
    };
    outcome.duration_years = compute_duration(&outcome, spec, pop)?;
    Ok(outcome)
}

/// Group sequential loop of a standard design over its single statistic
/// stream.
pub fn run_standard_rules(
    path: &[f64],
    bounds: &StandardBoundaries,
    spec: &DesignSpec,
    pop: &PopulationParams,
) -> Result<TrialOutcome> {
    run_standard_rules_with(path, bounds, spec, pop, Futility::Enforced)
}

pub fn run_standard_rules_with(
    path: &[f64],
    bounds: &StandardBoundaries,
    spec: &DesignSpec,
    pop: &PopulationParams,
    futility: Futility,
) -> Result<TrialOutcome> {
    let k_max = bounds.stages();
    if path.len() != k_max {
        return Err(Error::DimensionMismatch {
            expected: k_max,
            actual: path.len(),
        });
    }
    let mut rejected = false;
    let mut stop_stage = k_max;
    for (k, &z) in path.iter().enumerate() {
        if z > bounds.efficacy[k] {
            rejected = true;
            stop_stage = k + 1;
            break;
        }
        if futility == Futility::Enforced && z <= bounds.futility[k] {
            stop_stage = k + 1;
            break;
        }
    }
    let schedule = &bounds.schedule;
    let combined = bounds.design == Design::StandardCombined;
    let mut outcome = TrialOutcome {
        design: bounds.design,
        rejected_h01: rejected && !combined,
        rejected_h0c: rejected && combined,
        stop_stage,
        subpop2_stop_stage: combined.then_some(stop_stage),
        enrolled_subpop1: schedule.subpop1[stop_stage - 1],
        enrolled_subpop2: if combined {
            schedule.subpop2[stop_stage - 1]
        } else {
            0.0
        },
        duration_years: 0.0,
    };
    outcome.duration_years = compute_duration(&outcome, spec, pop)?;
    Ok(outcome)
}

/// Calendar time to complete the stages an outcome ran through. Subpopulation
/// `s` enrolls at `pi_s * rate`, independently of the other subpopulation.
pub fn compute_duration(outcome: &TrialOutcome, spec: &DesignSpec, pop: &PopulationParams) -> Result<f64> {
    let rate = spec.enrollment_rate;
    if !(rate > 0.0) {
        return Err(Error::invalid("enrollment_rate", "must be positive"));
    }
    let stages = outcome.stop_stage as f64;
    let years = match outcome.design {
        Design::Adaptive => {
            let combined_stages = outcome.stop_stage.min(spec.k_star) as f64;
            let later_stages = outcome.stop_stage.saturating_sub(spec.k_star) as f64;
            combined_stages * spec.n1_per_stage / rate
                + later_stages * spec.n2_per_stage / (pop.pi1 * rate)
        }
        Design::StandardCombined => stages * spec.n_sc / rate,
        Design::StandardSubpop1 => stages * spec.n_ss / (pop.pi1 * rate),
    };
    Ok(years)
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// Operating characteristics of one design at one grid point. Rejection
/// probabilities a design cannot produce are zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignMetrics {
    pub reject_h0c: Estimate,
    pub reject_h01: Estimate,
    pub reject_any: Estimate,
    pub sample_size: Estimate,
    pub sample_size_subpop1: Estimate,
    pub sample_size_subpop2: Estimate,
    pub duration_years: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceGrid {
    /// Subpopulation 2 treatment effects `p2t - p2c`.
    pub effects: Vec<f64>,
    pub p2t: Vec<f64>,
    pub adaptive: Vec<DesignMetrics>,
    pub combined: Vec<DesignMetrics>,
    pub subpop1: Vec<DesignMetrics>,
    pub iterations: usize,
    pub seed: u64,
    pub calibration_seed: u64,
    /// Kept out of serialized output so identical inputs give identical bytes.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl PerformanceGrid {
    pub fn metrics(&self, design: Design) -> &[DesignMetrics] {
        match design {
            Design::Adaptive => &self.adaptive,
            Design::StandardCombined => &self.combined,
            Design::StandardSubpop1 => &self.subpop1,
        }
    }
}

/// Extra knobs for [`estimate_performance_with`].
#[derive(Debug, Default, Clone, Copy)]
pub struct RunControl<'a> {
    pub futility: Futility,
    /// Set from another thread to abandon the run.
    pub cancel: Option<&'a AtomicBool>,
}

pub fn estimate_performance(
    spec: &DesignSpec,
    pop: &PopulationParams,
    tables: &DesignTables,
    grid: &EffectGrid,
    mc: &McConfig,
) -> Result<PerformanceGrid> {
    estimate_performance_with(spec, pop, tables, grid, mc, RunControl::default())
}

pub fn estimate_performance_with(
    spec: &DesignSpec,
    pop: &PopulationParams,
    tables: &DesignTables,
    grid: &EffectGrid,
    mc: &McConfig,
    control: RunControl<'_>,
) -> Result<PerformanceGrid> {
    spec.validate()?;
    pop.validate()?;
    mc.validate()?;
    let effects = grid.effects()?;
    let p2t: Vec<f64> = effects.iter().map(|e| pop.p2c + e).collect();
    let deadline = Deadline::new(mc.time_limit_secs, control.cancel);
    let abort = AtomicBool::new(false);
    let mut out: [Vec<DesignMetrics>; 3] = Default::default();
    for (slot, design) in Design::ALL.into_iter().enumerate() {
        for &point in &p2t {
            let schedule = match design {
                Design::Adaptive => &tables.adaptive.schedule,
                _ => &tables.standard(design).expect("standard design").schedule,
            };
            let law = ZJointLaw::new(schedule, pop, point)?;
            let rules = Rules {
                design,
                tables,
                spec,
                pop,
                futility: control.futility,
            };
            let chunks = map_chunks(mc.iterations, CHUNK, |range| {
                if abort.load(Ordering::Relaxed) {
                    return Err(Error::Cancelled);
                }
                if let Err(err) = deadline.check() {
                    abort.store(true, Ordering::Relaxed);
                    return Err(err);
                }
                let mut acc = Accumulator::default();
                let mut xi = vec![0.0; law.n_increments()];
                let mut z = vec![0.0; law.dim()];
                for i in range {
                    let mut rng = path_rng(mc.seed, design, i as u64);
                    for x in xi.iter_mut() {
                        *x = StandardNormal.sample(&mut rng);
                    }
                    law.transform(&xi, &mut z);
                    acc.add(&rules.apply(&z, &law.layout)?);
                }
                Ok(acc)
            });
            let mut total = Accumulator::default();
            let mut first_err = None;
            for chunk in chunks {
                match chunk {
                    Ok(acc) => total.merge(&acc),
                    // Time limit and cancellation win over the follow-on
                    // cancellations of other chunks.
                    Err(Error::Cancelled) if first_err.is_some() => {}
                    Err(e) => {
                        if first_err.is_none() || matches!(first_err, Some(Error::Cancelled)) {
                            first_err = Some(e);
                        }
                    }
                }
            }
            if let Some(err) = first_err {
                return Err(err);
            }
            out[slot].push(total.finish());
        }
    }
    let [adaptive, combined, subpop1] = out;
    Ok(PerformanceGrid {
        effects,
        p2t,
        adaptive,
        combined,
        subpop1,
        iterations: mc.iterations,
        seed: mc.seed,
        calibration_seed: mc.calibration_seed,
        wall_time_secs: deadline.elapsed_secs(),
    })
}

/// Random stream of iteration `i`. It does not depend on the grid point, so
/// every grid point sees the same increments and curves are smooth in `p2t`.
fn path_rng(seed: u64, design: Design, iteration: u64) -> ChaCha8Rng {
    let design_key = match design {
        Design::Adaptive => 0x41_44,
        Design::StandardCombined => 0x53_43,
        Design::StandardSubpop1 => 0x53_53,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (design_key << 48));
    rng.set_stream(iteration);
    rng
}

struct Rules<'a> {
    design: Design,
    tables: &'a DesignTables,
    spec: &'a DesignSpec,
    pop: &'a PopulationParams,
    futility: Futility,
}

impl Rules<'_> {
    fn apply(&self, z: &[f64], layout: &Layout) -> Result<TrialOutcome> {
        match self.design {
            Design::Adaptive => run_adaptive_rules_with(
                AdaptivePath::from_stacked(z, layout),
                &self.tables.adaptive,
                self.spec,
                self.pop,
                self.futility,
            ),
            Design::StandardCombined => run_standard_rules_with(
                &z[layout.combined.clone()],
                &self.tables.combined,
                self.spec,
                self.pop,
                self.futility,
            ),
            Design::StandardSubpop1 => run_standard_rules_with(
                &z[layout.subpop1.clone()],
                &self.tables.subpop1,
                self.spec,
                self.pop,
                self.futility,
            ),
        }
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Moments {
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn add(&mut self, v: f64) {
        self.sum += v;
        self.sum_sq += v * v;
    }

    fn merge(&mut self, other: &Moments) {
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    fn estimate(&self, n: f64) -> Estimate {
        let mean = self.sum / n;
        let var = (self.sum_sq / n - mean * mean).max(0.0);
        Estimate {
            value: mean,
            std_error: (var / n).sqrt(),
        }
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Accumulator {
    n: usize,
    h0c: Moments,
    h01: Moments,
    any: Moments,
    total: Moments,
    subpop1: Moments,
    subpop2: Moments,
    duration: Moments,
}

impl Accumulator {
    fn add(&mut self, o: &TrialOutcome) {
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        self.n += 1;
        self.h0c.add(flag(o.rejected_h0c));
        self.h01.add(flag(o.rejected_h01));
        self.any.add(flag(o.rejected_any()));
        self.total.add(o.enrolled_total());
        self.subpop1.add(o.enrolled_subpop1);
        self.subpop2.add(o.enrolled_subpop2);
        self.duration.add(o.duration_years);
    }

    fn merge(&mut self, other: &Accumulator) {
        self.n += other.n;
        self.h0c.merge(&other.h0c);
        self.h01.merge(&other.h01);
        self.any.merge(&other.any);
        self.total.merge(&other.total);
        self.subpop1.merge(&other.subpop1);
        self.subpop2.merge(&other.subpop2);
        self.duration.merge(&other.duration);
    }

    fn finish(&self) -> DesignMetrics {
        let n = self.n as f64;
        DesignMetrics {
            reject_h0c: self.h0c.estimate(n),
            reject_h01: self.h01.estimate(n),
            reject_any: self.any.estimate(n),
            sample_size: self.total.estimate(n),
            sample_size_subpop1: self.subpop1.estimate(n),
            sample_size_subpop2: self.subpop2.estimate(n),
            duration_years: self.duration.estimate(n),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{AdaptiveConstants, SolveReport};
    use crate::model::build_schedule;
    use approx::assert_relative_eq;

    fn report(constant: f64) -> SolveReport {
        SolveReport {
            constant,
            target: 0.0,
            achieved: 0.0,
            achieved_std_error: 0.0,
            steps: 0,
        }
    }

    /// Hand-built adaptive boundaries: u1 = 3, uC = 3 at every stage, l1 = -1,
    /// l2 = 0 before k* = 3.
    fn adaptive_bounds(spec: &DesignSpec) -> AdaptiveBoundaries {
        let pop = PopulationParams::mistie();
        let schedule = build_schedule(spec, &pop, Design::Adaptive).unwrap();
        let mut l2 = vec![0.0; spec.k_star];
        *l2.last_mut().unwrap() = f64::INFINITY;
        AdaptiveBoundaries {
            constants: AdaptiveConstants {
                combined: report(3.0),
                subpop1: report(3.0),
                combined_disabled: false,
                subpop1_disabled: false,
            },
            schedule,
            combined_efficacy: vec![3.0; spec.k_star],
            subpop1_efficacy: vec![3.0; spec.stages],
            subpop1_futility: vec![-1.0; spec.stages],
            subpop2_futility: l2,
        }
    }

    fn path<'a>(z1: &'a [f64], z2: &'a [f64], zc: &'a [f64]) -> AdaptivePath<'a> {
        AdaptivePath {
            subpop1: z1,
            subpop2: z2,
            combined: zc,
        }
    }

    #[test]
    fn immediate_efficacy_stop() {
        let spec = DesignSpec::mistie();
        let pop = PopulationParams::mistie();
        let b = adaptive_bounds(&spec);
        let o = run_adaptive_rules(path(&[3.5, 0.0, 0.0, 0.0, 0.0], &[0.0; 3], &[0.0; 3]), &b, &spec, &pop).unwrap();
        assert!(o.rejected_h01 && !o.rejected_h0c);
        assert_eq!(o.stop_stage, 1);
        assert_eq!(o.subpop2_stop_stage, Some(1));
        assert_relative_eq!(o.enrolled_total(), 280.0, max_relative = 1e-12);
    }

    #[test]
    fn subpop2_always_stops_at_k_star() {
        let spec = DesignSpec::mistie();
        let pop = PopulationParams::mistie();
        let b = adaptive_bounds(&spec);
        let o = run_adaptive_rules(path(&[1.0; 5], &[1.0; 3], &[1.0; 3]), &b, &spec, &pop).unwrap();
        assert!(!o.rejected_any());
        assert_eq!(o.stop_stage, 5);
        assert_eq!(o.subpop2_stop_stage, Some(3));
        assert_relative_eq!(o.enrolled_subpop2, 562.8, max_relative = 1e-12);
        assert_relative_eq!(o.enrolled_subpop1, 573.2, max_relative = 1e-12);
    }

    #[test]
    fn early_restriction_then_h01_rejection() {
        let spec = DesignSpec::mistie();
        let pop = PopulationParams::mistie();
        let b = adaptive_bounds(&spec);
        // Z2 at stage 1 is on the futility boundary; later combined values
        // above uC must be ignored once subpopulation 2 has stopped.
        let o = run_adaptive_rules(
            path(&[0.5, 1.0, 1.5, 3.2, 0.0], &[0.0, 2.0, 2.0], &[1.0, 9.0, 9.0]),
            &b,
            &spec,
            &pop,
        )
        .unwrap();
        assert!(o.rejected_h01 && !o.rejected_h0c);
        assert_eq!(o.stop_stage, 4);
        assert_eq!(o.subpop2_stop_stage, Some(1));
        assert_relative_eq!(o.enrolled_subpop2, pop.pi2() * 280.0, max_relative = 1e-12);
        assert_relative_eq!(o.enrolled_subpop1, 425.2, max_relative = 1e-12);
    }

    #[test]
    fn combined_rejection_before_k_star() {
        let spec = DesignSpec::mistie();
        let pop = PopulationParams::mistie();
        let b = adaptive_bounds(&spec);
        let o = run_adaptive_rules(path(&[1.0; 5], &[1.0, 1.0, 1.0], &[1.0, 3.1, 0.0]), &b, &spec, &pop).unwrap();
        assert!(o.rejected_h0c && !o.rejected_h01);
        assert_eq!(o.stop_stage, 2);
        assert_eq!(o.subpop2_stop_stage, Some(2));
    }

    #[test]
    fn futility_can_be_ignored() {
        let spec = DesignSpec::mistie();
        let pop = PopulationParams::mistie();
        let b = adaptive_bounds(&spec);
        let z1 = [-2.0, 0.0, 0.0, 0.0, 3.5];
        let enforced = run_adaptive_rules(path(&z1, &[-1.0; 3], &[0.0; 3]), &b, &spec, &pop).unwrap();
        assert_eq!(enforced.stop_stage, 1);
        assert!(!enforced.rejected_any());
        let ignored =
            run_adaptive_rules_with(path(&z1, &[-1.0; 3], &[0.0; 3]), &b, &spec, &pop, Futility::Ignored).unwrap();
        assert_eq!(ignored.stop_stage, 5);
        assert!(ignored.rejected_h01);
        assert_eq!(ignored.subpop2_stop_stage, Some(3));
    }

    #[test]
    fn adaptive_dimension_mismatch() {
        let spec = DesignSpec::mistie();
        let b = adaptive_bounds(&spec);
        let err = run_adaptive_rules(path(&[0.0; 4], &[0.0; 3], &[0.0; 3]), &b, &spec, &PopulationParams::mistie());
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    fn standard(spec: &DesignSpec, design: Design, f: f64) -> StandardBoundaries {
        let schedule = build_schedule(spec, &PopulationParams::mistie(), design).unwrap();
        let efficacy = vec![2.5; spec.stages];
        let mut futility = vec![f; spec.stages];
        *futility.last_mut().unwrap() = 2.5;
        StandardBoundaries {
            design,
            constant: report(2.5),
            futility_constant: f,
            schedule,
            efficacy,
            futility,
        }
    }

    #[test]
    fn standard_rules() {
        let mut spec = DesignSpec::mistie();
        spec.n_sc = 280.0;
        let pop = PopulationParams::mistie();
        let b = standard(&spec, Design::StandardCombined, 0.0);
        let o = run_standard_rules(&[0.5, 1.5, 2.6, 3.0, 4.0], &b, &spec, &pop).unwrap();
        assert!(o.rejected_h0c);
        assert_eq!(o.stop_stage, 3);
        assert_relative_eq!(o.enrolled_total(), 840.0, max_relative = 1e-12);

        let o = run_standard_rules(&[-0.1, 1.5, 2.6, 3.0, 4.0], &b, &spec, &pop).unwrap();
        assert!(!o.rejected_any());
        assert_eq!(o.stop_stage, 1);
        assert_relative_eq!(o.enrolled_total(), 280.0, max_relative = 1e-12);

        // The final stage always resolves.
        let o = run_standard_rules(&[1.0, 1.0, 1.0, 1.0, 2.4], &b, &spec, &pop).unwrap();
        assert_eq!(o.stop_stage, 5);
        assert!(!o.rejected_any());

        let ss = standard(&spec, Design::StandardSubpop1, 0.0);
        let o = run_standard_rules(&[3.0, 0.0, 0.0, 0.0, 0.0], &ss, &spec, &pop).unwrap();
        assert!(o.rejected_h01 && !o.rejected_h0c);
        assert_eq!(o.subpop2_stop_stage, None);
        assert_eq!(o.enrolled_subpop2, 0.0);
    }

    #[test]
    fn durations() {
        let mut spec = DesignSpec::mistie();
        spec.enrollment_rate = 280.0;
        let pop = PopulationParams::mistie();
        let mut o = TrialOutcome {
            design: Design::Adaptive,
            rejected_h01: true,
            rejected_h0c: false,
            stop_stage: 2,
            subpop2_stop_stage: Some(1),
            enrolled_subpop1: 0.0,
            enrolled_subpop2: 0.0,
            duration_years: 0.0,
        };
        assert_relative_eq!(compute_duration(&o, &spec, &pop).unwrap(), 2.0, max_relative = 1e-12);
        o.stop_stage = 5;
        let want = 3.0 + 2.0 * 148.0 / (0.33 * 280.0);
        assert_relative_eq!(compute_duration(&o, &spec, &pop).unwrap(), want, max_relative = 1e-12);

        spec.n_ss = 100.0;
        spec.enrollment_rate = 300.0;
        o.design = Design::StandardSubpop1;
        assert_relative_eq!(compute_duration(&o, &spec, &pop).unwrap(), 5.0 * 100.0 / 99.0, max_relative = 1e-12);
        assert_relative_eq!(compute_duration(&o, &spec, &pop).unwrap(), 5.051, epsilon = 5e-4);

        spec.enrollment_rate = 0.0;
        assert!(compute_duration(&o, &spec, &pop).is_err());
    }
}
