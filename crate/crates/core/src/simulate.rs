//! Synthetic manifests drawn from known scaling laws.
//!
//! Each source has a ground-truth `Δ(c) = a + b·ln(c)`. The generator prices
//! every (source, steps) configuration with the cost model, evaluates the
//! true delta, adds Gaussian noise and writes the treated score back against
//! a baseline score. The output is an ordinary manifest that [`crate::ingest`]
//! reads without special casing.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::cost::{
    cost_breakdown, AnnealingGeometry, CostBasis, CostError, ModelSpec, SourceCostModel,
    SourceCostParams, SourceKind,
};
use crate::ingest::{
    build_utility_points, parse_manifest, GeometryEntry, Manifest, ModelEntry, RunEntry,
    ScoreEntry, SourceEntry, TaskFilter,
};
use crate::metrics::{Direction, MetricKind};
use crate::scaling::{fit_all, rank_at_budget, FitOptions};

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

/// Grid of annealing steps used when none is given.
pub const DEFAULT_STEPS_GRID: [u64; 6] = [1000, 2000, 4000, 9000, 18000, 36000];

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthSource {
    pub source_id: String,
    pub true_intercept: f64,
    pub true_slope: f64,
    pub cost_model: SourceCostModel,
    /// Standard deviation of the additive Gaussian noise on delta.
    pub noise_sigma: f64,
}

impl GroundTruthSource {
    pub fn true_delta(&self, compute: f64) -> f64 {
        self.true_intercept + self.true_slope * compute.ln()
    }
}

/// How the noise level varies along the steps grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseSchedule {
    #[default]
    Constant,
    /// `sigma · sqrt(s_min / steps)`: full sigma at the shortest run,
    /// shrinking with run length.
    InverseSqrtSteps,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub sources: Vec<GroundTruthSource>,
    pub steps_grid: Vec<u64>,
    pub geometry: AnnealingGeometry,
    pub training_model: ModelSpec,
    pub baseline_id: String,
    pub baseline_score: f64,
    /// Noise on each of the two baseline seeds.
    pub baseline_noise_sigma: f64,
    pub metric: MetricKind,
    pub task_id: String,
    pub n_examples: u64,
    pub rng_seed: u64,
    /// Basis the ground-truth laws are expressed in.
    pub basis: CostBasis,
    pub noise_schedule: NoiseSchedule,
}

impl Scenario {
    /// Empty scenario with the reference geometry, a 7B training model and a
    /// Brier baseline of `baseline_score`.
    pub fn new(baseline_score: f64, rng_seed: u64) -> Self {
        Self {
            sources: Vec::new(),
            steps_grid: DEFAULT_STEPS_GRID.to_vec(),
            geometry: AnnealingGeometry::reference(),
            training_model: ModelSpec::new(7_000_000_000).expect("non-zero"),
            baseline_id: "replay".into(),
            baseline_score,
            baseline_noise_sigma: 0.0,
            metric: MetricKind::BrierScore,
            task_id: "sim".into(),
            n_examples: 1000,
            rng_seed,
            basis: CostBasis::CurationPlusAnnealing,
            noise_schedule: NoiseSchedule::Constant,
        }
    }

    pub fn validate(&self) -> Result<(), SimulateError> {
        let bad = |m: String| Err(SimulateError::Invalid(m));
        if self.steps_grid.is_empty() {
            return bad("steps_grid is empty".into());
        }
        if self.steps_grid[0] == 0 || self.steps_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("steps_grid must be positive and strictly increasing".into());
        }
        let (lo, hi) = self.metric.range();
        if !(lo..=hi).contains(&self.baseline_score) {
            return bad(format!(
                "baseline_score {} outside [{lo}, {hi}] for {}",
                self.baseline_score,
                self.metric.as_str()
            ));
        }
        if !(self.baseline_noise_sigma.is_finite() && self.baseline_noise_sigma >= 0.0) {
            return bad("baseline_noise_sigma must be finite and non-negative".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.sources {
            if s.source_id == self.baseline_id {
                return bad(format!(
                    "source id '{}' collides with the baseline",
                    s.source_id
                ));
            }
            if !seen.insert(s.source_id.as_str()) {
                return bad(format!("duplicate source id '{}'", s.source_id));
            }
            if !(s.noise_sigma.is_finite() && s.noise_sigma >= 0.0) {
                return bad(format!(
                    "{}: noise_sigma must be finite and non-negative",
                    s.source_id
                ));
            }
            if !(s.true_intercept.is_finite() && s.true_slope.is_finite()) {
                return bad(format!("{}: ground truth must be finite", s.source_id));
            }
        }
        Ok(())
    }

    /// Compute of `source` at `steps` under the scenario basis.
    pub fn compute(&self, source: &GroundTruthSource, steps: u64) -> Result<f64, SimulateError> {
        let tokens = self.geometry.total_tokens(steps);
        Ok(cost_breakdown(
            &source.cost_model,
            &self.geometry,
            tokens,
            self.training_model,
            self.basis,
        )?
        .total())
    }

    /// Smallest and largest compute over every source and grid point.
    pub fn compute_range(&self) -> Result<(f64, f64), SimulateError> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in &self.sources {
            for &steps in &self.steps_grid {
                let c = self.compute(s, steps)?;
                lo = lo.min(c);
                hi = hi.max(c);
            }
        }
        Ok((lo, hi))
    }

    fn sigma_at(&self, sigma: f64, steps: u64) -> f64 {
        match self.noise_schedule {
            NoiseSchedule::Constant => sigma,
            NoiseSchedule::InverseSqrtSteps => {
                sigma * (self.steps_grid[0] as f64 / steps as f64).sqrt()
            }
        }
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Moves a delta into a raw score relative to `baseline`.
fn score_from_delta(metric: MetricKind, baseline: f64, delta: f64) -> f64 {
    match metric.direction() {
        Direction::LowerIsBetter => baseline - delta,
        Direction::HigherIsBetter => baseline + delta,
    }
}

/// Builds the manifest for `scenario`.
///
/// Random draws happen in a fixed order: the two baseline seeds for each
/// grid step, then every source over the grid. One standard-normal draw is
/// taken per run even when its sigma is zero, so changing one noise level
/// does not reshuffle the others.
pub fn build_manifest(scenario: &Scenario) -> Result<Manifest, SimulateError> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.rng_seed);
    let (lo, hi) = scenario.metric.range();
    let basis = scenario.basis.as_str().to_string();

    let mut sources = BTreeMap::new();
    sources.insert(
        scenario.baseline_id.clone(),
        SourceEntry::from_model(&SourceCostModel::zero_cost()),
    );
    for s in &scenario.sources {
        sources.insert(s.source_id.clone(), SourceEntry::from_model(&s.cost_model));
    }

    let score_entry = |value: f64| ScoreEntry {
        task_id: scenario.task_id.clone(),
        metric: scenario.metric,
        value,
        n_examples: scenario.n_examples,
    };
    let emit = |source_id: &str,
                seed: i64,
                steps: u64,
                raw: f64,
                mut metadata: BTreeMap<String, String>| {
        let value = raw.clamp(lo, hi);
        if value != raw {
            metadata.insert(
                "warning".into(),
                format!("score clamped from {} to {}", fmt_f64(raw), fmt_f64(value)),
            );
        }
        metadata.insert("generation_basis".into(), basis.clone());
        RunEntry {
            source_id: source_id.to_string(),
            seed,
            steps,
            scores: vec![score_entry(value)],
            metadata,
        }
    };

    let mut runs = Vec::new();
    for &steps in &scenario.steps_grid {
        let sigma = scenario.sigma_at(scenario.baseline_noise_sigma, steps);
        for seed in 0..2 {
            let z: f64 = rng.sample(StandardNormal);
            let raw = scenario.baseline_score + sigma * z;
            runs.push(emit(
                &scenario.baseline_id,
                seed,
                steps,
                raw,
                BTreeMap::new(),
            ));
        }
    }
    for s in &scenario.sources {
        for &steps in &scenario.steps_grid {
            let compute = scenario.compute(s, steps)?;
            let truth = s.true_delta(compute);
            let z: f64 = rng.sample(StandardNormal);
            let delta = truth + scenario.sigma_at(s.noise_sigma, steps) * z;
            let raw = score_from_delta(scenario.metric, scenario.baseline_score, delta);
            let metadata = BTreeMap::from([
                ("true_delta".to_string(), fmt_f64(truth)),
                ("true_intercept".to_string(), fmt_f64(s.true_intercept)),
                ("true_slope".to_string(), fmt_f64(s.true_slope)),
            ]);
            runs.push(emit(&s.source_id, 0, steps, raw, metadata));
        }
    }

    Ok(Manifest {
        baseline_id: scenario.baseline_id.clone(),
        training_model: ModelEntry {
            param_count: scenario.training_model.param_count(),
        },
        geometry: GeometryEntry::from_geometry(&scenario.geometry),
        sources,
        runs,
    })
}

/// Pretty-printed manifest JSON with a trailing newline.
pub fn generate_manifest(scenario: &Scenario) -> Result<String, SimulateError> {
    let mut text = serde_json::to_string_pretty(&build_manifest(scenario)?)?;
    text.push('\n');
    Ok(text)
}

/// Filtering source priced like the medical-domain classifier: recall 22,
/// annotator at 2.2e8 FLOPs per token.
pub fn mbf_like_cost() -> SourceCostModel {
    SourceCostParams {
        annotator_per_token_flops: 2.2e8,
        mbf_recall: 22.0,
        ..SourceCostParams::new(SourceKind::Mbf)
    }
    .build()
    .expect("valid constants")
}

/// Rephrasing source: every seed token rewritten once by a 7B generator.
pub fn wrap_like_cost() -> SourceCostModel {
    SourceCostParams {
        generator: Some(ModelSpec::new(7_000_000_000).expect("non-zero")),
        expansion_factor: 1.0,
        ..SourceCostParams::new(SourceKind::RephraseComposite)
    }
    .build()
    .expect("valid constants")
}

/// Slope of the filtering source in [`scenario_rank_flip`].
pub const RANK_FLIP_MBF_SLOPE: f64 = 0.01;
/// Delta shared by both sources at the crossover.
pub const RANK_FLIP_CROSSING_DELTA: f64 = 0.02;

/// Two sources whose ranking reverses inside the grid.
///
/// `wrap_like` starts ahead with a slightly negative slope, `mbf_like`
/// starts behind and climbs. Their laws meet at the geometric midpoint of
/// the compute interval both sources cover, so the crossover is interior by
/// construction. Noise is zero; set `noise_sigma` on the sources to add it.
pub fn scenario_rank_flip(rng_seed: u64) -> Scenario {
    scenario_rank_flip_with_basis(rng_seed, CostBasis::CurationPlusAnnealing)
}

/// [`scenario_rank_flip`] with the laws anchored under `basis`.
pub fn scenario_rank_flip_with_basis(rng_seed: u64, basis: CostBasis) -> Scenario {
    let mut scenario = Scenario::new(0.5, rng_seed);
    scenario.basis = basis;
    let mut sources = vec![
        GroundTruthSource {
            source_id: "mbf_like".into(),
            true_intercept: 0.0,
            true_slope: RANK_FLIP_MBF_SLOPE,
            cost_model: mbf_like_cost(),
            noise_sigma: 0.0,
        },
        GroundTruthSource {
            source_id: "wrap_like".into(),
            true_intercept: 0.0,
            true_slope: -0.25 * RANK_FLIP_MBF_SLOPE,
            cost_model: wrap_like_cost(),
            noise_sigma: 0.0,
        },
    ];
    let first = *scenario.steps_grid.first().expect("default grid");
    let last = *scenario.steps_grid.last().expect("default grid");
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for s in &sources {
        lo = lo.max(scenario.compute(s, first).expect("valid cost model"));
        hi = hi.min(scenario.compute(s, last).expect("valid cost model"));
    }
    assert!(lo < hi, "source compute ranges do not overlap");
    let crossing = (lo.ln() + hi.ln()) / 2.0;
    for s in &mut sources {
        s.true_intercept = RANK_FLIP_CROSSING_DELTA - s.true_slope * crossing;
    }
    scenario.sources = sources;
    scenario
}

/// `n_sources` sources with intercepts in [-0.1, 0.1] and slopes in
/// [-0.01, 0.01], cycling through filtering, rephrasing and synthetic cost
/// models. Brier baseline of 1.0 keeps every score in range.
pub fn scenario_random(rng_seed: u64, n_sources: usize) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed ^ 0x5eed_5ca1_ab1e);
    let mut scenario = Scenario::new(1.0, rng_seed);
    let synthetic =
        SourceCostModel::synthetic(ModelSpec::new(70_000_000_000).expect("non-zero"), 4.0)
            .expect("valid constants");
    let models = [mbf_like_cost(), wrap_like_cost(), synthetic];
    scenario.sources = (0..n_sources)
        .map(|i| GroundTruthSource {
            source_id: format!("source_{i}"),
            true_intercept: rng.random_range(-0.1..=0.1),
            true_slope: rng.random_range(-0.01..=0.01),
            cost_model: models[i % models.len()].clone(),
            noise_sigma: 0.0,
        })
        .collect();
    scenario
}

/// Spread of the true deltas over every source and grid point.
pub fn true_delta_range(scenario: &Scenario) -> Result<f64, SimulateError> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in &scenario.sources {
        for &steps in &scenario.steps_grid {
            let d = s.true_delta(scenario.compute(s, steps)?);
            lo = lo.min(d);
            hi = hi.max(d);
        }
    }
    Ok(hi - lo)
}

/// Which source each selection policy picks on one generated manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutcome {
    /// Highest observed delta at the smallest steps value.
    pub point_estimate: String,
    /// Highest fitted delta at the largest compute on the grid.
    pub scaling_law: String,
    /// Highest true delta at that same compute.
    pub true_best: String,
}

impl PolicyOutcome {
    /// The policies disagree and the scaling-law pick is the true best.
    pub fn flip_recovered(&self) -> bool {
        self.point_estimate != self.scaling_law && self.scaling_law == self.true_best
    }
}

/// Generates the manifest, runs it through ingestion and fitting, and
/// applies both selection policies.
pub fn evaluate_policies(scenario: &Scenario) -> Result<PolicyOutcome, Box<dyn std::error::Error>> {
    let set = parse_manifest(&generate_manifest(scenario)?)?;
    let points = build_utility_points(&set, &TaskFilter::all(), scenario.basis)?;
    let first_steps = scenario.steps_grid[0];
    let point_estimate = points
        .iter()
        .filter(|p| p.steps == first_steps)
        .max_by(|a, b| {
            a.delta
                .value
                .total_cmp(&b.delta.value)
                .then_with(|| b.source_id.cmp(&a.source_id))
        })
        .map(|p| p.source_id.clone())
        .ok_or("no sources in scenario")?;
    let fits = fit_all(&points, FitOptions::default())?;
    let (_, c_max) = scenario.compute_range()?;
    let scaling_law = rank_at_budget(&fits, c_max)?[0].source_id.clone();
    let mut best: Option<(f64, &str)> = None;
    for s in &scenario.sources {
        let d = s.true_delta(c_max);
        if best.is_none_or(|(v, _)| d > v) {
            best = Some((d, &s.source_id));
        }
    }
    Ok(PolicyOutcome {
        point_estimate,
        scaling_law,
        true_best: best.map(|(_, id)| id.to_string()).unwrap_or_default(),
    })
}

/// Rank-flip scenario with every source's noise set to `fraction` of the
/// true delta range; the baseline seeds get the same sigma.
pub fn noisy_rank_flip(rng_seed: u64, fraction: f64) -> Result<Scenario, SimulateError> {
    let mut s = scenario_rank_flip(rng_seed);
    let sigma = fraction * true_delta_range(&s)?;
    for src in &mut s.sources {
        src.noise_sigma = sigma;
    }
    s.baseline_noise_sigma = sigma;
    Ok(s)
}
