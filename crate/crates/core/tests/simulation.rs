use dataplan_core::ingest::{build_utility_points, parse_manifest, TaskFilter};
use dataplan_core::scaling::{fit_all, fit_log_linear, FitOptions};
use dataplan_core::simulate::{
    evaluate_policies, generate_manifest, noisy_rank_flip, scenario_random, NoiseSchedule,
};
use rayon::prelude::*;

fn fitted_slope(seed: u64, sigma: f64, schedule: NoiseSchedule) -> (f64, f64) {
    let mut s = scenario_random(11, 1);
    s.rng_seed = seed;
    s.sources[0].noise_sigma = sigma;
    s.baseline_noise_sigma = sigma;
    s.noise_schedule = schedule;
    let set = parse_manifest(&generate_manifest(&s).unwrap()).unwrap();
    let points = build_utility_points(&set, &TaskFilter::all(), s.basis).unwrap();
    (
        fit_log_linear(&points).unwrap().slope,
        s.sources[0].true_slope,
    )
}

fn mean_within_three_se(samples: &[f64], truth: f64) -> (bool, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    ((mean - truth).abs() <= 3.0 * se, (mean - truth) / se)
}

#[test]
fn fitted_slope_is_unbiased_under_noise() {
    for schedule in [NoiseSchedule::Constant, NoiseSchedule::InverseSqrtSteps] {
        let runs: Vec<(f64, f64)> = (0..1000u64)
            .into_par_iter()
            .map(|i| fitted_slope(1000 + i, 0.01, schedule))
            .collect();
        let truth = runs[0].1;
        let slopes: Vec<f64> = runs.iter().map(|r| r.0).collect();
        let (ok, z) = mean_within_three_se(&slopes, truth);
        assert!(
            ok,
            "{schedule:?}: mean slope {z:.2} standard errors from truth"
        );
    }
}

#[test]
fn every_generated_manifest_validates() {
    for seed in 0..50 {
        let mut s = scenario_random(seed, 4);
        for src in &mut s.sources {
            src.noise_sigma = 0.05;
        }
        let set = parse_manifest(&generate_manifest(&s).unwrap()).unwrap();
        let points = build_utility_points(&set, &TaskFilter::all(), s.basis).unwrap();
        assert_eq!(fit_all(&points, FitOptions::default()).unwrap().len(), 4);
    }
}

#[test]
fn rank_flip_survives_moderate_noise() {
    let recovered = (0..50u64)
        .into_par_iter()
        .filter(|&seed| {
            evaluate_policies(&noisy_rank_flip(seed, 0.2).unwrap())
                .unwrap()
                .flip_recovered()
        })
        .count();
    assert!(recovered >= 45, "{recovered}/50");
}
