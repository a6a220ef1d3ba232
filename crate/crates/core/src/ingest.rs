//! Experiment manifests: parsing, validation, seed averaging, and pairing of
//! treated runs with their matched-step full-replay baseline.
//!
//! A manifest is a single JSON document:
//!
//! ```text
//! {"baseline_id": str,
//!  "training_model": {"param_count": int},
//!  "geometry": {"batch_size": int, "sequence_length": int,
//!               "upsample_ratio": float, "epochs": float},
//!  "sources": {<source_id>: {"kind": "mbf"|"synthetic"|"rephrase"|"zero_cost",
//!               "expansion_factor": float?, "generator_params": int?,
//!               "annotator_per_token_flops": float?,
//!               "annotator_training_flops": float?, "mbf_recall": float?}},
//!  "runs": [{"source_id": str, "seed": int, "steps": int,
//!            "scores": [{"task_id": str,
//!                        "metric": "brier"|"accuracy"|"exact_match",
//!                        "value": float, "n_examples": int}],
//!            "metadata": {str: str}?}]}
//! ```
//!
//! Unknown fields are rejected. `epochs` defaults to 1 when omitted. The
//! baseline source may be omitted from `sources`, in which case it is zero
//! cost.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{
    cost_breakdown, AnnealingGeometry, CostBasis, CostError, ModelSpec, SourceCostModel,
    SourceCostParams, SourceKind,
};
use crate::metrics::{
    aggregate_suite, utility_delta, MetricKind, MetricsError, TaskScore, UtilityDelta, Weighting,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("manifest schema violation: {0}")]
    Schema(String),
    #[error("duplicate run (source_id={source_id}, seed={seed}, steps={steps})")]
    DuplicateRun {
        source_id: String,
        seed: i64,
        steps: u64,
    },
    #[error("baseline runs not found for baseline_id '{0}'")]
    MissingBaseline(String),
    #[error("run references source '{0}' with no cost model in 'sources'")]
    UnknownSource(String),
    #[error("cannot average runs: {0}")]
    Heterogeneous(String),
    #[error("runs have different task sets; only in first: [{}], only in other: [{}]", .only_first.join(", "), .only_other.join(", "))]
    TaskSetMismatch {
        only_first: Vec<String>,
        only_other: Vec<String>,
    },
    #[error("no baseline run at steps={steps} to pair with source '{source_id}'")]
    UnmatchedSteps { source_id: String, steps: u64 },
    #[error("task filter selects no tasks for source '{source_id}' at steps={steps}")]
    EmptyTaskSelection { source_id: String, steps: u64 },
    #[error("invalid task pattern '{0}'")]
    BadPattern(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Cost(#[from] CostError),
}

impl From<serde_json::Error> for IngestError {
    fn from(e: serde_json::Error) -> Self {
        use serde_json::error::Category;
        match e.classify() {
            Category::Data => IngestError::Schema(e.to_string()),
            _ => IngestError::Parse {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            },
        }
    }
}

fn default_epochs() -> f64 {
    1.0
}

/// On-disk manifest layout, mirrored field for field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub baseline_id: String,
    pub training_model: ModelEntry,
    pub geometry: GeometryEntry,
    pub sources: BTreeMap<String, SourceEntry>,
    pub runs: Vec<RunEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub param_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryEntry {
    pub batch_size: u64,
    pub sequence_length: u64,
    pub upsample_ratio: f64,
    #[serde(default = "default_epochs")]
    pub epochs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceEntry {
    pub kind: SourceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expansion_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_params: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator_per_token_flops: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator_training_flops: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mbf_recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunEntry {
    pub source_id: String,
    pub seed: i64,
    pub steps: u64,
    pub scores: Vec<ScoreEntry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreEntry {
    pub task_id: String,
    pub metric: MetricKind,
    pub value: f64,
    pub n_examples: u64,
}

impl ModelEntry {
    pub fn to_spec(self) -> Result<ModelSpec, CostError> {
        ModelSpec::new(self.param_count)
    }
}

impl GeometryEntry {
    pub fn to_geometry(self) -> Result<AnnealingGeometry, CostError> {
        AnnealingGeometry::new(
            self.batch_size,
            self.sequence_length,
            self.upsample_ratio,
            self.epochs,
        )
    }

    pub fn from_geometry(g: &AnnealingGeometry) -> Self {
        Self {
            batch_size: g.batch_size(),
            sequence_length: g.sequence_length(),
            upsample_ratio: g.upsample_ratio(),
            epochs: g.epochs(),
        }
    }
}

impl SourceEntry {
    pub fn to_model(&self, source_id: &str) -> Result<SourceCostModel, IngestError> {
        let needs_k = matches!(
            self.kind,
            SourceKind::Synthetic | SourceKind::RephraseComposite
        );
        if needs_k && self.expansion_factor.is_none() {
            return Err(IngestError::Schema(format!(
                "sources.{source_id}.expansion_factor is required for kind '{}'",
                self.kind.as_str()
            )));
        }
        let generator = self
            .generator_params
            .map(ModelSpec::new)
            .transpose()
            .map_err(|e| {
                IngestError::Schema(format!("sources.{source_id}.generator_params: {e}"))
            })?;
        let mut params = SourceCostParams::new(self.kind);
        params.generator = generator;
        if let Some(k) = self.expansion_factor {
            params.expansion_factor = k;
        }
        if let Some(c) = self.annotator_per_token_flops {
            params.annotator_per_token_flops = c;
        }
        if let Some(c) = self.annotator_training_flops {
            params.annotator_training_flops = c;
        }
        if let Some(r) = self.mbf_recall {
            params.mbf_recall = r;
        }
        params
            .build()
            .map_err(|e| IngestError::Schema(format!("sources.{source_id}: {e}")))
    }

    pub fn from_model(model: &SourceCostModel) -> Self {
        let p = model.to_params();
        let nonzero = |v: f64| (v != 0.0).then_some(v);
        Self {
            kind: p.kind,
            expansion_factor: nonzero(p.expansion_factor),
            generator_params: p.generator.map(|g| g.param_count()),
            annotator_per_token_flops: nonzero(p.annotator_per_token_flops),
            annotator_training_flops: nonzero(p.annotator_training_flops),
            mbf_recall: (p.mbf_recall != 1.0).then_some(p.mbf_recall),
        }
    }
}

/// Seed identity of a run, or the seeds averaged into it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SeedTag {
    Single(i64),
    Averaged(Vec<i64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub source_id: String,
    pub seed: SeedTag,
    pub steps: u64,
    pub geometry: AnnealingGeometry,
    pub scores: Vec<TaskScore>,
    pub metadata: BTreeMap<String, String>,
}

impl RunRecord {
    fn task_keys(&self) -> BTreeSet<(String, MetricKind)> {
        self.scores
            .iter()
            .map(|s| (s.task_id().to_string(), s.metric()))
            .collect()
    }
}

/// A validated manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSet {
    pub runs: Vec<RunRecord>,
    pub sources: BTreeMap<String, SourceCostModel>,
    pub baseline_id: String,
    pub training_model: ModelSpec,
    pub geometry: AnnealingGeometry,
}

pub fn load_manifest(path: &Path) -> Result<RunSet, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_manifest(&text)
}

pub fn parse_manifest(text: &str) -> Result<RunSet, IngestError> {
    let manifest: Manifest = serde_json::from_str(text)?;
    manifest.validate()
}

impl Manifest {
    pub fn validate(self) -> Result<RunSet, IngestError> {
        let training_model = self
            .training_model
            .to_spec()
            .map_err(|e| IngestError::Schema(format!("training_model.param_count: {e}")))?;
        let geometry = self
            .geometry
            .to_geometry()
            .map_err(|e| IngestError::Schema(format!("geometry: {e}")))?;

        let mut sources = BTreeMap::new();
        for (id, entry) in &self.sources {
            sources.insert(id.clone(), entry.to_model(id)?);
        }
        match sources.get(&self.baseline_id) {
            None => {
                sources.insert(self.baseline_id.clone(), SourceCostModel::zero_cost());
            }
            Some(m) if m.kind() != SourceKind::ZeroCost => {
                return Err(IngestError::Schema(format!(
                    "baseline source '{}' must have kind 'zero_cost'",
                    self.baseline_id
                )));
            }
            Some(_) => {}
        }

        if !self.runs.iter().any(|r| r.source_id == self.baseline_id) {
            return Err(IngestError::MissingBaseline(self.baseline_id));
        }

        let mut seen = BTreeSet::new();
        let mut runs = Vec::with_capacity(self.runs.len());
        for (i, run) in self.runs.into_iter().enumerate() {
            if !sources.contains_key(&run.source_id) {
                return Err(IngestError::UnknownSource(run.source_id));
            }
            if run.steps == 0 {
                return Err(IngestError::Schema(format!(
                    "runs[{i}].steps must be positive"
                )));
            }
            if run.scores.is_empty() {
                return Err(IngestError::Schema(format!(
                    "runs[{i}].scores must be nonempty"
                )));
            }
            if !seen.insert((run.source_id.clone(), run.seed, run.steps)) {
                return Err(IngestError::DuplicateRun {
                    source_id: run.source_id,
                    seed: run.seed,
                    steps: run.steps,
                });
            }
            let mut task_ids = BTreeSet::new();
            let mut scores = Vec::with_capacity(run.scores.len());
            for s in run.scores {
                if !task_ids.insert(s.task_id.clone()) {
                    return Err(IngestError::Schema(format!(
                        "runs[{i}] reports task '{}' twice",
                        s.task_id
                    )));
                }
                scores.push(TaskScore::new(s.task_id, s.metric, s.value, s.n_examples)?);
            }
            runs.push(RunRecord {
                source_id: run.source_id,
                seed: SeedTag::Single(run.seed),
                steps: run.steps,
                geometry,
                scores,
                metadata: run.metadata,
            });
        }
        Ok(RunSet {
            runs,
            sources,
            baseline_id: self.baseline_id,
            training_model,
            geometry,
        })
    }
}

/// Per-task mean over seeds of the same configuration.
pub fn average_seeds(runs: &[RunRecord]) -> Result<RunRecord, IngestError> {
    let first = runs
        .first()
        .ok_or_else(|| IngestError::Heterogeneous("no runs to average".into()))?;
    if runs.len() == 1 {
        return Ok(first.clone());
    }
    let keys = first.task_keys();
    for r in &runs[1..] {
        if r.source_id != first.source_id {
            return Err(IngestError::Heterogeneous(format!(
                "sources '{}' and '{}' differ",
                first.source_id, r.source_id
            )));
        }
        if r.steps != first.steps {
            return Err(IngestError::Heterogeneous(format!(
                "steps {} and {} differ",
                first.steps, r.steps
            )));
        }
        if r.geometry != first.geometry {
            return Err(IngestError::Heterogeneous("geometries differ".into()));
        }
        let other = r.task_keys();
        if other != keys {
            let fmt = |set: BTreeSet<&(String, MetricKind)>| {
                set.into_iter()
                    .map(|(t, m)| format!("{t}/{m}"))
                    .collect::<Vec<_>>()
            };
            return Err(IngestError::TaskSetMismatch {
                only_first: fmt(keys.difference(&other).collect()),
                only_other: fmt(other.difference(&keys).collect()),
            });
        }
    }

    let mut scores = Vec::with_capacity(first.scores.len());
    for s in &first.scores {
        let values: Vec<f64> = runs
            .iter()
            .map(|r| {
                r.scores
                    .iter()
                    .find(|o| o.task_id() == s.task_id())
                    .map(|o| o.value())
                    .expect("task sets checked equal")
            })
            .collect();
        let pivot = values[0];
        let mean = pivot + values.iter().map(|v| v - pivot).sum::<f64>() / values.len() as f64;
        let (lo, hi) = s.metric().range();
        scores.push(TaskScore::new(
            s.task_id(),
            s.metric(),
            mean.clamp(lo, hi),
            s.n_examples(),
        )?);
    }
    let seeds = runs
        .iter()
        .flat_map(|r| match &r.seed {
            SeedTag::Single(s) => vec![*s],
            SeedTag::Averaged(v) => v.clone(),
        })
        .collect();
    Ok(RunRecord {
        source_id: first.source_id.clone(),
        seed: SeedTag::Averaged(seeds),
        steps: first.steps,
        geometry: first.geometry,
        scores,
        metadata: first.metadata.clone(),
    })
}

/// Glob patterns selecting tasks; an empty filter keeps every task.
#[derive(Debug, Clone, Default)]
pub struct TaskFilter {
    patterns: Vec<glob::Pattern>,
}

impl TaskFilter {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn new<S: AsRef<str>>(patterns: &[S]) -> Result<Self, IngestError> {
        let patterns = patterns
            .iter()
            .map(|p| {
                glob::Pattern::new(p.as_ref())
                    .map_err(|_| IngestError::BadPattern(p.as_ref().into()))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { patterns })
    }

    pub fn matches(&self, task_id: &str) -> bool {
        self.patterns.is_empty() || self.patterns.iter().any(|p| p.matches(task_id))
    }

    fn select(&self, run: &RunRecord) -> Vec<TaskScore> {
        run.scores
            .iter()
            .filter(|s| self.matches(s.task_id()))
            .cloned()
            .collect()
    }
}

/// One treated configuration measured against its baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityPoint {
    pub source_id: String,
    pub steps: u64,
    /// FLOPs under `basis`.
    pub compute: f64,
    pub basis: CostBasis,
    /// Tokens seen over the whole run, |D|.
    pub tokens_total: f64,
    /// Tokens drawn from the source, r|D|.
    pub tokens_upsampled: f64,
    pub delta: UtilityDelta,
}

/// Pairs each treated (source, steps) configuration with the seed-averaged
/// baseline at the same steps and computes its delta and cost.
///
/// Points come out sorted by (source_id, steps). Baseline runs do not
/// produce points.
pub fn build_utility_points(
    set: &RunSet,
    task_filter: &TaskFilter,
    basis: CostBasis,
) -> Result<Vec<UtilityPoint>, IngestError> {
    let mut groups: BTreeMap<(&str, u64), Vec<RunRecord>> = BTreeMap::new();
    for run in &set.runs {
        groups
            .entry((run.source_id.as_str(), run.steps))
            .or_default()
            .push(run.clone());
    }

    let mut baselines: BTreeMap<u64, RunRecord> = BTreeMap::new();
    for ((source, steps), runs) in &groups {
        if *source == set.baseline_id {
            baselines.insert(*steps, average_seeds(runs)?);
        }
    }

    let mut points = Vec::new();
    for ((source, steps), runs) in &groups {
        if *source == set.baseline_id {
            continue;
        }
        let base = baselines
            .get(steps)
            .ok_or_else(|| IngestError::UnmatchedSteps {
                source_id: source.to_string(),
                steps: *steps,
            })?;
        let treated = average_seeds(runs)?;
        let treated_scores = task_filter.select(&treated);
        let base_scores = task_filter.select(base);
        if treated_scores.is_empty() {
            return Err(IngestError::EmptyTaskSelection {
                source_id: source.to_string(),
                steps: *steps,
            });
        }
        let keys = |v: &[TaskScore]| -> BTreeSet<(String, MetricKind)> {
            v.iter()
                .map(|s| (s.task_id().to_string(), s.metric()))
                .collect()
        };
        let (tk, bk) = (keys(&treated_scores), keys(&base_scores));
        if tk != bk {
            let fmt = |set: BTreeSet<&(String, MetricKind)>| {
                set.into_iter().map(|(t, m)| format!("{t}/{m}")).collect()
            };
            return Err(IngestError::TaskSetMismatch {
                only_first: fmt(tk.difference(&bk).collect()),
                only_other: fmt(bk.difference(&tk).collect()),
            });
        }
        let base_agg = aggregate_suite(&base_scores, Weighting::Macro)?;
        let treated_agg = aggregate_suite(&treated_scores, Weighting::Macro)?;
        let delta = utility_delta(&base_agg, &treated_agg)?.with_source(*source);

        let model = &set.sources[*source];
        let tokens_total = set.geometry.total_tokens(*steps);
        let cost = cost_breakdown(
            model,
            &set.geometry,
            tokens_total,
            set.training_model,
            basis,
        )?;
        points.push(UtilityPoint {
            source_id: source.to_string(),
            steps: *steps,
            compute: cost.total(),
            basis,
            tokens_total,
            tokens_upsampled: set.geometry.upsampled_tokens(*steps),
            delta,
        });
    }
    Ok(points)
}
