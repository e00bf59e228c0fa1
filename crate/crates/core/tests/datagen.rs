use transport_core::datagen::{
    generate_clinic, generate_secret_trial, generate_study, true_psi, true_psi_realized, ScenarioConfig,
};
use transport_core::dists::SeededRng;
use transport_core::estimators::{nonparametric_bounds, positivity_diagnostic, StratumVar};
use transport_core::glm::{fit_logistic, DesignSpec, FitOptions, Response};

fn cfg() -> ScenarioConfig<f64> {
    ScenarioConfig::default()
}

#[test]
fn truth_matches_published_value() {
    let psi = true_psi(&cfg(), 10_000_000, &SeededRng::new(1, 0));
    assert!((psi - 0.216697).abs() < 0.002, "{psi}");
    let other = true_psi(&cfg(), 10_000_000, &SeededRng::new(2, 0));
    assert!((psi - other).abs() < 0.001);
    let realized = true_psi_realized(&cfg(), 2_000_000, &SeededRng::new(3, 0));
    let bound = 3.0 * (0.25f64 / 2e6).sqrt() * std::f64::consts::SQRT_2 + 0.001;
    assert!((realized - psi).abs() < bound, "{realized} vs {psi}");
}

#[test]
fn truth_is_thread_count_invariant() {
    let run = |t| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .unwrap()
            .install(|| true_psi(&cfg(), 300_000, &SeededRng::new(9, 0)))
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn secret_trial_recovers_interaction() {
    let s = generate_secret_trial(&cfg(), 2_000_000, &SeededRng::new(4, 0)).unwrap();
    assert!((s.gcomp.estimate[1] + 0.65).abs() < 0.01, "{:?}", s.gcomp.estimate);
    assert!((s.gcomp.estimate[0] + 0.02).abs() < 0.01);
}

#[test]
fn secret_trial_is_unbiased_across_iterations() {
    let root = SeededRng::new(5, 0);
    let reps = 500;
    let mut sum = [0.0; 2];
    for i in 0..reps {
        let s = generate_secret_trial(&cfg(), 2000, &root.substream(i)).unwrap();
        sum[0] += s.gcomp.estimate[0];
        sum[1] += s.gcomp.estimate[1];
    }
    let mean = [sum[0] / reps as f64, sum[1] / reps as f64];
    assert!((mean[0] + 0.02).abs() < 0.02, "{mean:?}");
    assert!((mean[1] + 0.65).abs() < 0.02, "{mean:?}");
}

#[test]
fn generated_data_shows_the_positivity_violation() {
    let data = generate_study(&cfg(), &SeededRng::new(6, 0));
    let v = positivity_diagnostic(&data, &[StratumVar::W]);
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].stratum, vec![(StratumVar::W, 1.0)]);
    assert_eq!(v[0].trial_count, 0);
    let b = nonparametric_bounds(&data, &"1,A,V".parse().unwrap()).unwrap();
    assert!((b.width() - 4.0 / 3.0).abs() < 0.06, "{}", b.width());
}

#[test]
fn treatment_model_reflects_randomization() {
    let data = generate_study(&cfg(), &SeededRng::new(7, 0));
    let trial: Vec<_> = data.trial().copied().collect();
    let fit = fit_logistic(&DesignSpec::<f64>::parse(&["1"]).unwrap(), &trial, Response::Treatment, None, &FitOptions::default())
        .unwrap();
    let p = transport_core::glm::expit(fit.coefficients[0]);
    assert!((p - 0.5).abs() < 0.04);
}

#[test]
fn clinic_generation_is_reproducible() {
    let a = generate_clinic(&cfg(), 100, &mut SeededRng::new(8, 0));
    let b = generate_clinic(&cfg(), 100, &mut SeededRng::new(8, 0));
    assert_eq!(a, b);
}
