//! Task scores and improvement deltas against the full-replay baseline.
//!
//! Brier scores use the multi-class sum-of-squares form
//! `sum_k (p_k - y_k)^2`, which ranges over `[0, 2]`. Some harnesses divide
//! by the number of choices; absolute values are not comparable across the
//! two conventions.
//!
//! Deltas are always improvement-positive: a positive [`UtilityDelta`]
//! means the treated run beat its baseline, whatever the metric direction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("probabilities must be non-negative and sum to 1 (sum = {sum})")]
    NotNormalized { sum: f64 },
    #[error("correct index {index} out of range for {len} choices")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("{metric} value {value} outside [{lo}, {hi}] for task '{task}'")]
    OutOfRange {
        task: String,
        metric: MetricKind,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("task '{0}' has n_examples = 0")]
    NoExamples(String),
    #[error("cannot aggregate an empty score list")]
    Empty,
    #[error("mixed metric kinds: {0} and {1}")]
    MixedMetrics(MetricKind, MetricKind),
    #[error("mismatched scores: baseline {0} vs treated {1}")]
    Mismatch(String, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    LowerIsBetter,
    HigherIsBetter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "brier")]
    BrierScore,
    #[serde(rename = "accuracy")]
    Accuracy,
    #[serde(rename = "exact_match")]
    ExactMatch,
}

impl MetricKind {
    pub fn direction(&self) -> Direction {
        match self {
            MetricKind::BrierScore => Direction::LowerIsBetter,
            MetricKind::Accuracy | MetricKind::ExactMatch => Direction::HigherIsBetter,
        }
    }

    /// Closed range of valid values.
    pub fn range(&self) -> (f64, f64) {
        match self {
            MetricKind::BrierScore => (0.0, 2.0),
            MetricKind::Accuracy | MetricKind::ExactMatch => (0.0, 1.0),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            MetricKind::BrierScore => "brier",
            MetricKind::Accuracy => "accuracy",
            MetricKind::ExactMatch => "exact_match",
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskScore {
    task_id: String,
    metric: MetricKind,
    value: f64,
    n_examples: u64,
}

impl TaskScore {
    pub fn new(
        task_id: impl Into<String>,
        metric: MetricKind,
        value: f64,
        n_examples: u64,
    ) -> Result<Self, MetricsError> {
        let task_id = task_id.into();
        let (lo, hi) = metric.range();
        if !(value >= lo && value <= hi) {
            return Err(MetricsError::OutOfRange {
                task: task_id,
                metric,
                value,
                lo,
                hi,
            });
        }
        if n_examples == 0 {
            return Err(MetricsError::NoExamples(task_id));
        }
        Ok(Self {
            task_id,
            metric,
            value,
            n_examples,
        })
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn metric(&self) -> MetricKind {
        self.metric
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn n_examples(&self) -> u64 {
        self.n_examples
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtilityDelta {
    pub value: f64,
    pub metric: MetricKind,
    pub source_id: String,
}

/// Multi-class Brier score against a one-hot target.
pub fn brier_score(probabilities: &[f64], correct_index: usize) -> Result<f64, MetricsError> {
    if correct_index >= probabilities.len() {
        return Err(MetricsError::IndexOutOfRange {
            index: correct_index,
            len: probabilities.len(),
        });
    }
    let sum: f64 = probabilities.iter().sum();
    if probabilities.iter().any(|p| !(*p >= 0.0)) || !((sum - 1.0).abs() <= 1e-6) {
        return Err(MetricsError::NotNormalized { sum });
    }
    Ok(probabilities
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let target = if k == correct_index { 1.0 } else { 0.0 };
            (p - target) * (p - target)
        })
        .sum())
}

/// String normalization applied before exact-match comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalizer {
    /// Trim surrounding whitespace and lowercase.
    #[default]
    TrimLowercase,
    Identity,
}

impl Normalizer {
    pub fn apply<'a>(&self, s: &'a str) -> std::borrow::Cow<'a, str> {
        match self {
            Normalizer::TrimLowercase => s.trim().to_lowercase().into(),
            Normalizer::Identity => s.into(),
        }
    }
}

pub fn exact_match(prediction: &str, reference: &str, normalizer: Normalizer) -> u8 {
    u8::from(normalizer.apply(prediction) == normalizer.apply(reference))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    #[default]
    Macro,
    ExampleWeighted,
}

/// Task id given to aggregated scores.
pub const AGGREGATE_TASK_ID: &str = "aggregate";

/// Combines per-task scores of one metric into a single suite score.
pub fn aggregate_suite(
    scores: &[TaskScore],
    weighting: Weighting,
) -> Result<TaskScore, MetricsError> {
    let first = scores.first().ok_or(MetricsError::Empty)?;
    if let Some(other) = scores.iter().find(|s| s.metric != first.metric) {
        return Err(MetricsError::MixedMetrics(first.metric, other.metric));
    }
    if scores.len() == 1 {
        return Ok(first.clone());
    }
    let n_total: u64 = scores.iter().map(|s| s.n_examples).sum();
    // mean taken as an offset from the first value, exact when all values agree
    let pivot = first.value;
    let value = pivot
        + match weighting {
            Weighting::Macro => {
                scores.iter().map(|s| s.value - pivot).sum::<f64>() / scores.len() as f64
            }
            Weighting::ExampleWeighted => {
                scores
                    .iter()
                    .map(|s| (s.value - pivot) * s.n_examples as f64)
                    .sum::<f64>()
                    / n_total as f64
            }
        };
    let (lo, hi) = first.metric.range();
    Ok(TaskScore {
        task_id: AGGREGATE_TASK_ID.to_string(),
        metric: first.metric,
        // a mean of in-range values can only leave the range by rounding
        value: value.clamp(lo, hi),
        n_examples: n_total,
    })
}

/// Improvement of `treated` over `baseline`, positive when treated is better.
pub fn utility_delta(
    baseline: &TaskScore,
    treated: &TaskScore,
) -> Result<UtilityDelta, MetricsError> {
    if baseline.task_id != treated.task_id || baseline.metric != treated.metric {
        return Err(MetricsError::Mismatch(
            format!("{}/{}", baseline.task_id, baseline.metric),
            format!("{}/{}", treated.task_id, treated.metric),
        ));
    }
    let value = match baseline.metric.direction() {
        Direction::LowerIsBetter => baseline.value - treated.value,
        Direction::HigherIsBetter => treated.value - baseline.value,
    };
    Ok(UtilityDelta {
        value,
        metric: baseline.metric,
        source_id: String::new(),
    })
}

impl UtilityDelta {
    pub fn with_source(mut self, source_id: impl Into<String>) -> Self {
        self.source_id = source_id.into();
        self
    }

    /// The raw `S_base - S_D` difference, which is negative for an
    /// improvement on higher-is-better metrics.
    pub fn as_raw_difference(&self) -> f64 {
        match self.metric.direction() {
            Direction::LowerIsBetter => self.value,
            Direction::HigherIsBetter => -self.value,
        }
    }
}
