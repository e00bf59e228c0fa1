use proptest::prelude::*;
use transport_core::data::{Observation, StudyDataset};
use transport_core::dists::SeededRng;
use transport_core::estimators::{
    hajek_arm_means, nonparametric_bounds, synthesis_gcomp, synthesis_ipw, GcompSynthesis, McSettings,
    SimulationModel, SynthesisSpec,
};
use transport_core::glm::{expit, DesignSpec, FitOptions};

/// Small randomized instance: target ages and gender mix vary, the trial
/// enrolls men only with moderate outcome risks.
fn instance(seed: u64, n_target: usize, n_trial: usize, p_female: f64) -> StudyDataset<f64> {
    let mut rng = SeededRng::new(seed, 0);
    let target: Vec<_> = (0..n_target)
        .map(|_| Observation::target((18.0 + 12.0 * rng.uniform()).round(), rng.bernoulli(p_female)))
        .collect();
    let b = [-1.0 + rng.uniform() - 0.5, 0.5 + rng.uniform(), 0.04 * (rng.uniform() - 0.5)];
    let trial: Vec<_> = (0..n_trial)
        .map(|_| {
            let v = (18.0 + 12.0 * rng.uniform()).round();
            let a = rng.bernoulli(0.5);
            let p = expit(b[0] + b[1] * f64::from(u8::from(a)) + b[2] * (v - 24.0));
            Observation::trial(a, rng.bernoulli(p), v, false)
        })
        .collect();
    StudyDataset::from_parts(target, trial).unwrap()
}

fn design(s: &str) -> DesignSpec<f64> {
    s.parse().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn total_expectation_identity(seed in any::<u64>(), p in 0.05f64..0.95, b0 in -2.0f64..2.0, b1 in -2.0f64..2.0) {
        let data = instance(seed, 150, 200, p);
        let fit = GcompSynthesis::fit(&data, &design("1,A,V"), &FitOptions::default()).unwrap();
        let r = fit.risks_at(fit.alpha(), (b0, b1));
        let share = r.share_female;
        let (m1, m0) = r.male.unwrap_or((0.0, 0.0));
        let (f1, f0) = r.female.unwrap_or((0.0, 0.0));
        prop_assert!((r.risk1 - ((1.0 - share) * m1 + share * f1)).abs() < 1e-10);
        prop_assert!((r.risk0 - ((1.0 - share) * m0 + share * f0)).abs() < 1e-10);
    }

    #[test]
    fn bounds_width_is_twice_female_share(seed in any::<u64>(), p in 0.0f64..1.0) {
        let data = instance(seed, 120, 200, p);
        let b = nonparametric_bounds(&data, &design("1,A,V")).unwrap();
        let share = data.target_female_share();
        prop_assert!((b.width() - 2.0 * share).abs() < 1e-12, "{} vs {}", b.width(), 2.0 * share);
    }

    #[test]
    fn hajek_is_scale_invariant(
        rows in prop::collection::vec((any::<bool>(), any::<bool>(), 0.01f64..10.0), 4..60),
        c in 1e-3f64..1e3,
    ) {
        let mut rows = rows;
        rows[0].0 = true;
        rows[1].0 = false;
        let treated: Vec<bool> = rows.iter().map(|r| r.0).collect();
        let y: Vec<f64> = rows.iter().map(|r| f64::from(u8::from(r.1))).collect();
        let w: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let scaled: Vec<f64> = w.iter().map(|x| x * c).collect();
        let (a0, a1) = hajek_arm_means(&y, &treated, &w);
        let (b0, b1) = hajek_arm_means(&y, &treated, &scaled);
        prop_assert!((a0 - b0).abs() < 1e-12 && (a1 - b1).abs() < 1e-12);
    }
}

#[test]
fn synthesis_gcomp_lies_within_bounds() {
    let mut checked = 0;
    for seed in 0..100u64 {
        let p = 0.1 + 0.8 * (seed as f64 / 100.0);
        let data = instance(1000 + seed, 60, 120, p);
        let d = design("1,A,V");
        let bounds = nonparametric_bounds(&data, &d).unwrap();
        let simulation = if seed % 2 == 0 {
            SimulationModel::uncertain_null()
        } else {
            SimulationModel::Independent {
                b0: transport_core::dists::ParameterDistribution::Normal { mu: 1.5, sigma: 2.0 },
                b1: transport_core::dists::ParameterDistribution::Normal { mu: -3.0, sigma: 2.0 },
            }
        };
        let spec = SynthesisSpec {
            simulation,
            mc: McSettings::new(200, seed),
            statistical_design: d,
        };
        let est = synthesis_gcomp(&data, &spec).unwrap();
        assert!(
            bounds.contains(est.rd),
            "seed {seed}: {} outside [{}, {}]",
            est.rd,
            bounds.lower,
            bounds.upper
        );
        checked += 1;
    }
    assert_eq!(checked, 100);
}

#[test]
fn synthesis_is_deterministic_across_thread_counts() {
    let data = instance(7, 200, 300, 0.6);
    let spec = |d: &str| SynthesisSpec {
        simulation: SimulationModel::uncertain_null(),
        mc: McSettings::new(500, 99),
        statistical_design: design(d),
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                (
                    synthesis_gcomp(&data, &spec("1,A,V")).unwrap(),
                    synthesis_ipw(&data, &spec("1,V")).unwrap(),
                )
            })
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(1));
}

#[test]
fn percentile_interval_brackets_median() {
    let data = instance(8, 200, 300, 0.5);
    let spec = SynthesisSpec {
        simulation: SimulationModel::uncertain_null(),
        mc: McSettings::new(300, 5),
        statistical_design: design("1,A,V"),
    };
    let e = synthesis_gcomp(&data, &spec).unwrap();
    assert!(e.ci_lower <= e.rd && e.rd <= e.ci_upper);
    assert!((0.0..=1.0).contains(&e.risk1) && (0.0..=1.0).contains(&e.risk0));
}
