use enrichment_core::config::{load_parameters, save_parameters};
use enrichment_core::crossing::crossing_probability;
use enrichment_core::ingest::{estimate_population, parse_dataset};
use enrichment_core::model::Layout;
use enrichment_core::simulator::{run_adaptive_rules_with, AdaptivePath};
use enrichment_core::*;
use nalgebra::SymmetricEigen;
use proptest::prelude::*;

fn population() -> impl Strategy<Value = PopulationParams> {
    (0.05..0.95f64, 0.05..0.95f64, 0.05..0.95f64, 0.05..0.95f64)
        .prop_map(|(pi1, p1c, p1t, p2c)| PopulationParams { pi1, p1c, p1t, p2c })
}

fn design() -> impl Strategy<Value = DesignSpec> {
    (1usize..=8, 0usize..8, 10.0..400.0f64, 10.0..400.0f64).prop_map(|(stages, ks, n1, n2)| {
        DesignSpec {
            stages,
            k_star: 1 + ks % stages,
            n1_per_stage: n1,
            n2_per_stage: n2,
            n_sc: n1,
            n_ss: n2,
            ..DesignSpec::mistie()
        }
    })
}

fn adaptive_bounds(spec: &DesignSpec, c_comb: f64, c_sub1: f64) -> AdaptiveBoundaries {
    let pop = PopulationParams::mistie();
    let schedule = build_schedule(spec, &pop, Design::Adaptive).unwrap();
    let report = |constant| SolveReport {
        constant,
        target: 0.0,
        achieved: 0.0,
        achieved_std_error: 0.0,
        steps: 0,
    };
    let constants = AdaptiveConstants {
        combined: report(c_comb),
        subpop1: report(c_sub1),
        combined_disabled: false,
        subpop1_disabled: false,
    };
    match materialize_boundaries(spec, &schedule, Constants::Adaptive(constants)).unwrap() {
        BoundaryTable::Adaptive(b) => b,
        BoundaryTable::Standard(_) => unreachable!(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn covariance_is_psd_with_unit_diagonal(pop in population(), spec in design(), p2t in 0.01..0.99f64) {
        for d in Design::ALL {
            let s = build_schedule(&spec, &pop, d).unwrap();
            let cov = z_covariance(&s, &pop, p2t).unwrap();
            for i in 0..cov.nrows() {
                prop_assert!((cov[(i, i)] - 1.0).abs() < 1e-12);
            }
            let eig = SymmetricEigen::new(cov.clone());
            prop_assert!(eig.eigenvalues.min() > -1e-10);
            let law = ZJointLaw::new(&s, &pop, p2t).unwrap();
            let f = law.factor();
            let diff = (f * f.transpose() - &cov).abs().max();
            prop_assert!(diff < 1e-12, "factor mismatch {}", diff);
        }
    }

    #[test]
    fn schedule_does_not_depend_on_outcomes(pop in population(), spec in design(), p1t in 0.05..0.95f64) {
        let other = PopulationParams { p1t, p1c: 0.5, p2c: 0.5, ..pop };
        for d in Design::ALL {
            prop_assert_eq!(build_schedule(&spec, &pop, d).unwrap(), build_schedule(&spec, &other, d).unwrap());
        }
    }

    #[test]
    fn crossing_is_monotone(shift in 0.0..1.0f64, idx in 0usize..11, base in 1.5..3.0f64) {
        let pop = PopulationParams::mistie();
        let s = build_schedule(&DesignSpec::mistie(), &pop, Design::Adaptive).unwrap();
        let law = ZJointLaw::global_null(&s, &pop).unwrap();
        let block = CrnBlock::draw(5, 1, 2000, law.n_increments()).unwrap();
        let t: Vec<f64> = (0..law.dim()).map(|i| base + 0.05 * i as f64).collect();
        let mut raised = t.clone();
        raised[idx % law.dim()] += shift;
        prop_assert!(crossing_probability(&law, &raised, &block).unwrap() <= crossing_probability(&law, &t, &block).unwrap() + 1e-15);
    }

    #[test]
    fn adaptive_rule_invariants(spec in design(), z in prop::collection::vec(-4.0..4.0f64, 24)) {
        let pop = PopulationParams::mistie();
        let bounds = adaptive_bounds(&spec, 2.3, 2.1);
        let (k, ks) = (spec.stages, spec.k_star);
        let path = AdaptivePath { subpop1: &z[..k], subpop2: &z[8..8 + ks], combined: &z[16..16 + ks] };
        let enforced = run_adaptive_rules_with(path, &bounds, &spec, &pop, Futility::Enforced).unwrap();
        let ignored = run_adaptive_rules_with(path, &bounds, &spec, &pop, Futility::Ignored).unwrap();
        // Futility only ever removes rejections.
        prop_assert!(!enforced.rejected_any() || ignored.rejected_any());
        for o in [enforced, ignored] {
            let s2 = o.subpop2_stop_stage.unwrap();
            prop_assert!(s2 <= ks && s2 <= o.stop_stage);
            // H0C is only rejected while subpopulation 2 is still enrolled.
            if o.rejected_h0c {
                prop_assert_eq!(s2, o.stop_stage);
                prop_assert!(o.stop_stage <= ks);
            }
            let s = &bounds.schedule;
            prop_assert_eq!(o.enrolled_subpop1, s.subpop1[o.stop_stage - 1]);
            prop_assert_eq!(o.enrolled_subpop2, s.subpop2[s2 - 1]);
            prop_assert!(o.enrolled_total() <= s.max_total() + 1e-9);
            prop_assert!(o.duration_years > 0.0);
        }
    }

    #[test]
    fn parameter_file_round_trip(pop in population(), spec in design(), seed in any::<u64>(), iterations in 1usize..100_000) {
        let mut params = Parameters { population: pop, design: spec, ..Parameters::default() };
        params.mc.seed = seed;
        params.mc.iterations = iterations;
        params.grid = EffectGrid { min: -pop.p2c, max: 1.0 - pop.p2c, points: 5 };
        let (back, warnings) = load_parameters(&save_parameters(&params)).unwrap();
        prop_assert!(warnings.is_empty());
        prop_assert_eq!(back, params);
    }

    #[test]
    fn ingest_recovers_counts(counts in prop::collection::vec(1usize..40, 4), successes in prop::collection::vec(0usize..40, 4), rotate in 0usize..100) {
        let mut rows = Vec::new();
        for (stratum, (&n, &s)) in counts.iter().zip(&successes).enumerate() {
            let s = s.min(n);
            for i in 0..n {
                rows.push(format!("{},{},{}", 1 + stratum / 2, stratum % 2, u8::from(i < s)));
            }
        }
        let build = |rows: &[String]| format!("sub,trt,y\n{}\n", rows.join("\n"));
        let a = estimate_population(&parse_dataset(build(&rows).as_bytes()).unwrap()).unwrap();
        let k = rotate % rows.len();
        rows.rotate_left(k);
        rows.reverse();
        let b = estimate_population(&parse_dataset(build(&rows).as_bytes()).unwrap()).unwrap();
        prop_assert_eq!(&a, &b);
        let total: usize = counts.iter().sum();
        let clip = |v: f64| v.clamp(1e-3, 1.0 - 1e-3);
        prop_assert!((a.population.pi1 - clip((counts[0] + counts[1]) as f64 / total as f64)).abs() < 1e-12);
        prop_assert!((a.population.p1c - clip(successes[0].min(counts[0]) as f64 / counts[0] as f64)).abs() < 1e-12);
        prop_assert!((a.p2t - clip(successes[3].min(counts[3]) as f64 / counts[3] as f64)).abs() < 1e-12);
    }
}

#[test]
fn sampled_moments_match_the_law() {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let pop = PopulationParams::mistie();
    let s = build_schedule(&DesignSpec::mistie(), &pop, Design::Adaptive).unwrap();
    let law = ZJointLaw::new(&s, &pop, 0.3).unwrap();
    let cov = z_covariance(&s, &pop, 0.3).unwrap();
    let mean = z_mean_vector(&s, &pop, 0.3).unwrap();
    let n = 100_000;
    let d = law.dim();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
    let mut sum = vec![0.0; d];
    let mut cross = vec![0.0; d * d];
    let mut xi = vec![0.0; law.n_increments()];
    let mut z = vec![0.0; d];
    for _ in 0..n {
        for x in xi.iter_mut() {
            *x = StandardNormal.sample(&mut rng);
        }
        law.transform(&xi, &mut z);
        for i in 0..d {
            sum[i] += z[i];
            for j in 0..d {
                cross[i * d + j] += (z[i] - mean[i]) * (z[j] - mean[j]);
            }
        }
    }
    let nf = n as f64;
    for i in 0..d {
        // Unit variance: the sample mean has standard error 1/sqrt(n).
        assert!((sum[i] / nf - mean[i]).abs() < 4.0 / nf.sqrt(), "mean {i}");
        for j in 0..d {
            let c = cov[(i, j)];
            let se = ((1.0 + c * c) / nf).sqrt();
            assert!((cross[i * d + j] / nf - c).abs() < 4.0 * se, "cov {i},{j}");
        }
    }
}

#[test]
fn calibration_holds_on_fresh_random_numbers() {
    let spec = DesignSpec::mistie();
    let pop = PopulationParams::mistie();
    let calib = Calibration::default();
    let tables = DesignTables::calibrate(&spec, &pop, &calib).unwrap();
    // The calibrated constant carries the Monte Carlo error of its own block.
    let check = |law: &ZJointLaw, thresholds: &[f64], target: f64, calib_se: f64| {
        let block = CrnBlock::draw(calib.seed ^ 0xFEED, 9, 10 * calib.paths, law.n_increments()).unwrap();
        let est = enrichment_core::crossing::estimate_crossing(law, thresholds, &block).unwrap();
        assert!(
            (est.probability - target).abs() < 4.0 * est.std_error.hypot(calib_se) + 2e-5,
            "{} vs {target} (se {})",
            est.probability,
            est.std_error
        );
    };
    let s = &tables.adaptive.schedule;
    let law = ZJointLaw::global_null(s, &pop).unwrap();
    let c = &tables.adaptive.constants;
    check(&law, &tables.adaptive.efficacy_thresholds(&law), spec.alpha, c.subpop1.achieved_std_error);
    let mut combined_only = tables.adaptive.efficacy_thresholds(&law);
    for i in law.layout.subpop1.clone() {
        combined_only[i] = f64::INFINITY;
    }
    check(&law, &combined_only, spec.a_c * spec.alpha, c.combined.achieved_std_error);
    for b in [&tables.combined, &tables.subpop1] {
        let law = ZJointLaw::global_null(&b.schedule, &pop).unwrap();
        check(&law, &b.efficacy_thresholds(&law), spec.alpha, b.constant.achieved_std_error);
    }
}

#[test]
fn performance_is_deterministic_and_seed_sensitive() {
    let p = Parameters::default();
    let tables = DesignTables::calibrate(&p.design, &p.population, &p.mc.calibration()).unwrap();
    let mut mc = p.mc;
    mc.iterations = 3000;
    let a = estimate_performance(&p.design, &p.population, &tables, &p.grid, &mc).unwrap();
    let b = estimate_performance(&p.design, &p.population, &tables, &p.grid, &mc).unwrap();
    assert_eq!(export::performance_table_csv(&a), export::performance_table_csv(&b));
    mc.seed += 1;
    let c = estimate_performance(&p.design, &p.population, &tables, &p.grid, &mc).unwrap();
    assert_ne!(a.adaptive, c.adaptive);
    // Expected sample size never exceeds the maximum.
    for d in Design::ALL {
        let max = match d {
            Design::Adaptive => tables.adaptive.schedule.max_total(),
            _ => tables.standard(d).unwrap().schedule.max_total(),
        };
        assert!(a.metrics(d).iter().all(|m| m.sample_size.value <= max + 1e-9));
    }
}

#[test]
fn layout_is_consistent() {
    let pop = PopulationParams::mistie();
    let s = build_schedule(&DesignSpec::mistie(), &pop, Design::Adaptive).unwrap();
    let law = ZJointLaw::global_null(&s, &pop).unwrap();
    let l: &Layout = &law.layout;
    assert_eq!(l.dim(), 5 + 3 + 3);
}
