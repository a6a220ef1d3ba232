//! FLOPs cost calculus for annealing runs and data curation.
//!
//! Every quantity here is a real-valued FLOPs count. Training costs
//! `6 * |P|` per token seen, inference (generation, annotation) costs
//! `2 * |P|` per token produced.
//!
//! Symbols used throughout:
//!
//! ```text
//! |D|  tokens the model sees during annealing
//! r    fraction of |D| drawn from the evaluated source
//! e    passes over the upsampled tokens
//! k    synthetic tokens generated per seed token
//! m    seed tokens, m = r|D| / (e (1 + k))
//! c_s  per-seed-token cost, R * c_B + C_BERT / m
//! c_n  per-synthetic-token generation cost, 2 |P_g|
//! K    = 6|P| |D| + c_s m + c_n k m
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("parameter count must be positive")]
    ZeroParams,
    #[error("invalid annealing geometry: {0}")]
    Geometry(String),
    #[error("invalid source cost model: {0}")]
    Source(String),
    #[error("no seed tokens requested")]
    NoSeedTokens,
    #[error("{0} must be finite and non-negative, got {1}")]
    Negative(&'static str, f64),
    #[error("seed-token unit cost is only defined for annotated sources, not {0:?}")]
    NotAnnotated(SourceKind),
}

/// Parameter count of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    param_count: u64,
}

impl ModelSpec {
    pub fn new(param_count: u64) -> Result<Self, CostError> {
        if param_count == 0 {
            return Err(CostError::ZeroParams);
        }
        Ok(Self { param_count })
    }

    pub fn param_count(&self) -> u64 {
        self.param_count
    }

    fn params(&self) -> f64 {
        self.param_count as f64
    }
}

/// Shape of an annealing run: how many tokens each optimizer step sees and
/// what share of them comes from the source under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealingGeometry {
    batch_size: u64,
    sequence_length: u64,
    upsample_ratio: f64,
    epochs: f64,
}

/// Tokens consumed per optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokensPerStep {
    pub total: f64,
    pub upsampled: f64,
}

impl AnnealingGeometry {
    pub fn new(
        batch_size: u64,
        sequence_length: u64,
        upsample_ratio: f64,
        epochs: f64,
    ) -> Result<Self, CostError> {
        if batch_size == 0 {
            return Err(CostError::Geometry("batch_size must be positive".into()));
        }
        if sequence_length == 0 {
            return Err(CostError::Geometry(
                "sequence_length must be positive".into(),
            ));
        }
        if !(upsample_ratio > 0.0 && upsample_ratio < 1.0) {
            return Err(CostError::Geometry(format!(
                "upsample_ratio must lie strictly inside (0, 1), got {upsample_ratio}"
            )));
        }
        if !(epochs >= 1.0 && epochs.is_finite()) {
            return Err(CostError::Geometry(format!(
                "epochs must be a finite value >= 1, got {epochs}"
            )));
        }
        Ok(Self {
            batch_size,
            sequence_length,
            upsample_ratio,
            epochs,
        })
    }

    /// Batch 256, sequence 8192, 10% upsampling, one epoch.
    pub fn reference() -> Self {
        Self {
            batch_size: 256,
            sequence_length: 8192,
            upsample_ratio: 0.1,
            epochs: 1.0,
        }
    }

    pub fn batch_size(&self) -> u64 {
        self.batch_size
    }

    pub fn sequence_length(&self) -> u64 {
        self.sequence_length
    }

    pub fn upsample_ratio(&self) -> f64 {
        self.upsample_ratio
    }

    pub fn epochs(&self) -> f64 {
        self.epochs
    }

    pub fn tokens_per_step(&self) -> TokensPerStep {
        let total = self.batch_size as f64 * self.sequence_length as f64;
        TokensPerStep {
            total,
            upsampled: self.upsample_ratio * total,
        }
    }

    /// Tokens seen over `steps` optimizer steps, |D|.
    pub fn total_tokens(&self, steps: u64) -> f64 {
        steps as f64 * self.tokens_per_step().total
    }

    /// Upsampled tokens seen over `steps` optimizer steps, r|D|.
    pub fn upsampled_tokens(&self, steps: u64) -> f64 {
        self.upsample_ratio * self.total_tokens(steps)
    }

    /// Seed tokens needed to fill the upsampled share of `total_tokens`
    /// with expansion factor `k`: `m = r|D| / (e (1 + k))`.
    pub fn seed_tokens_required(&self, total_tokens: f64, k: f64) -> Result<f64, CostError> {
        non_negative("total_tokens", total_tokens)?;
        non_negative("expansion_factor", k)?;
        Ok(self.upsample_ratio * total_tokens / (self.epochs * (1.0 + k)))
    }

    /// Inverse of [`Self::seed_tokens_required`]: upsampled tokens r|D| that
    /// `m` seed tokens supply, `e * m * (1 + k)`.
    pub fn upsampled_from_seed(&self, m: f64, k: f64) -> f64 {
        self.epochs * m * (1.0 + k)
    }
}

fn non_negative(name: &'static str, v: f64) -> Result<(), CostError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CostError::Negative(name, v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    /// Model-based filtering of an existing corpus.
    Mbf,
    /// Generated by a model from (free) seed material.
    Synthetic,
    /// Filtered seed documents rewritten or expanded by a generator.
    #[serde(rename = "rephrase")]
    RephraseComposite,
    /// Data already on hand, e.g. the full-replay baseline.
    ZeroCost,
}

impl SourceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SourceKind::Mbf => "mbf",
            SourceKind::Synthetic => "synthetic",
            SourceKind::RephraseComposite => "rephrase",
            SourceKind::ZeroCost => "zero_cost",
        }
    }
}

/// How much it costs to curate tokens from one data source.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceCostModel {
    kind: SourceKind,
    expansion_factor: f64,
    generator: Option<ModelSpec>,
    annotator_per_token_flops: f64,
    annotator_training_flops: f64,
    mbf_recall: f64,
}

/// Builder-style description of a source, validated into a [`SourceCostModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct SourceCostParams {
    pub kind: SourceKind,
    pub expansion_factor: f64,
    pub generator: Option<ModelSpec>,
    pub annotator_per_token_flops: f64,
    pub annotator_training_flops: f64,
    pub mbf_recall: f64,
}

impl SourceCostParams {
    pub fn new(kind: SourceKind) -> Self {
        Self {
            kind,
            expansion_factor: 0.0,
            generator: None,
            annotator_per_token_flops: 0.0,
            annotator_training_flops: 0.0,
            mbf_recall: 1.0,
        }
    }

    pub fn build(self) -> Result<SourceCostModel, CostError> {
        non_negative("expansion_factor", self.expansion_factor)?;
        non_negative("annotator_per_token_flops", self.annotator_per_token_flops)?;
        non_negative("annotator_training_flops", self.annotator_training_flops)?;
        if !self.mbf_recall.is_finite() {
            return Err(CostError::Negative("mbf_recall", self.mbf_recall));
        }
        match self.kind {
            SourceKind::ZeroCost => {
                if self.expansion_factor != 0.0
                    || self.generator.is_some()
                    || self.annotator_per_token_flops != 0.0
                    || self.annotator_training_flops != 0.0
                {
                    return Err(CostError::Source(
                        "zero_cost sources cannot carry cost fields".into(),
                    ));
                }
            }
            SourceKind::Synthetic | SourceKind::RephraseComposite => {
                if self.generator.is_none() {
                    return Err(CostError::Source(format!(
                        "{} sources require generator_params",
                        self.kind.as_str()
                    )));
                }
            }
            SourceKind::Mbf => {
                if self.generator.is_none() && self.expansion_factor > 0.0 {
                    return Err(CostError::Source(
                        "expansion_factor > 0 requires generator_params".into(),
                    ));
                }
            }
        }
        if matches!(self.kind, SourceKind::Mbf | SourceKind::RephraseComposite)
            && self.mbf_recall < 1.0
        {
            return Err(CostError::Source(format!(
                "mbf_recall must be >= 1, got {}",
                self.mbf_recall
            )));
        }
        Ok(SourceCostModel {
            kind: self.kind,
            expansion_factor: self.expansion_factor,
            generator: self.generator,
            annotator_per_token_flops: self.annotator_per_token_flops,
            annotator_training_flops: self.annotator_training_flops,
            mbf_recall: self.mbf_recall,
        })
    }
}

impl SourceCostModel {
    pub fn zero_cost() -> Self {
        SourceCostParams::new(SourceKind::ZeroCost)
            .build()
            .expect("zero-cost source is always valid")
    }

    /// Filtering source whose annotator costs `2 * |P_annotator|` per token.
    pub fn mbf(
        recall: f64,
        annotator: ModelSpec,
        annotator_training_flops: f64,
    ) -> Result<Self, CostError> {
        SourceCostParams {
            mbf_recall: recall,
            annotator_per_token_flops: inference_flops_per_token(annotator),
            annotator_training_flops,
            ..SourceCostParams::new(SourceKind::Mbf)
        }
        .build()
    }

    pub fn synthetic(generator: ModelSpec, expansion_factor: f64) -> Result<Self, CostError> {
        SourceCostParams {
            generator: Some(generator),
            expansion_factor,
            ..SourceCostParams::new(SourceKind::Synthetic)
        }
        .build()
    }

    pub fn kind(&self) -> SourceKind {
        self.kind
    }

    pub fn expansion_factor(&self) -> f64 {
        self.expansion_factor
    }

    pub fn generator(&self) -> Option<ModelSpec> {
        self.generator
    }

    pub fn annotator_per_token_flops(&self) -> f64 {
        self.annotator_per_token_flops
    }

    pub fn annotator_training_flops(&self) -> f64 {
        self.annotator_training_flops
    }

    pub fn mbf_recall(&self) -> f64 {
        self.mbf_recall
    }

    pub fn to_params(&self) -> SourceCostParams {
        SourceCostParams {
            kind: self.kind,
            expansion_factor: self.expansion_factor,
            generator: self.generator,
            annotator_per_token_flops: self.annotator_per_token_flops,
            annotator_training_flops: self.annotator_training_flops,
            mbf_recall: self.mbf_recall,
        }
    }

    /// Per-token generation cost c_n, zero without a generator.
    pub fn generation_flops_per_token(&self) -> f64 {
        self.generator.map(inference_flops_per_token).unwrap_or(0.0)
    }

    fn is_annotated(&self) -> bool {
        matches!(self.kind, SourceKind::Mbf | SourceKind::RephraseComposite)
    }
}

/// Which costs count toward a source's compute axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CostBasis {
    CurationOnly,
    CurationPlusAnnealing,
}

impl CostBasis {
    pub fn as_str(&self) -> &'static str {
        match self {
            CostBasis::CurationOnly => "curation-only",
            CostBasis::CurationPlusAnnealing => "total",
        }
    }
}

impl std::str::FromStr for CostBasis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "curation-only" => Ok(CostBasis::CurationOnly),
            "total" => Ok(CostBasis::CurationPlusAnnealing),
            other => Err(format!(
                "unknown cost basis '{other}' (expected curation-only or total)"
            )),
        }
    }
}

impl std::fmt::Display for CostBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `6 * |P| * tokens`.
pub fn training_flops(tokens: f64, model: ModelSpec) -> f64 {
    6.0 * model.params() * tokens
}

/// `2 * |P|`.
pub fn inference_flops_per_token(model: ModelSpec) -> f64 {
    2.0 * model.params()
}

/// `c_s = R * c_B + C_BERT / m` for annotated sources.
pub fn seed_token_unit_cost(model: &SourceCostModel, m: f64) -> Result<f64, CostError> {
    if !model.is_annotated() {
        return Err(CostError::NotAnnotated(model.kind));
    }
    if m <= 0.0 || m.is_nan() {
        return Err(CostError::NoSeedTokens);
    }
    Ok(model.mbf_recall * model.annotator_per_token_flops + model.annotator_training_flops / m)
}

/// `C_g = c_s * m + c_n * k * m`.
pub fn curation_cost(model: &SourceCostModel, m: f64, c_s: f64) -> Result<f64, CostError> {
    non_negative("seed tokens", m)?;
    non_negative("seed token unit cost", c_s)?;
    match model.kind {
        SourceKind::ZeroCost => Ok(0.0),
        SourceKind::Synthetic | SourceKind::RephraseComposite if model.generator.is_none() => Err(
            CostError::Source(format!("{} source has no generator", model.kind.as_str())),
        ),
        _ => Ok(c_s * m + model.generation_flops_per_token() * model.expansion_factor * m),
    }
}

/// Breakdown of a total cost K into training and curation parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub basis: CostBasis,
    pub training: f64,
    pub curation: f64,
}

impl CostBreakdown {
    /// The cost under the recorded basis.
    pub fn total(&self) -> f64 {
        match self.basis {
            CostBasis::CurationOnly => self.curation,
            CostBasis::CurationPlusAnnealing => self.training + self.curation,
        }
    }
}

/// Full cost breakdown for annealing on `total_tokens` (|D|) tokens.
///
/// Under [`CostBasis::CurationOnly`] the training component is still
/// reported but excluded from [`CostBreakdown::total`].
pub fn cost_breakdown(
    model: &SourceCostModel,
    geom: &AnnealingGeometry,
    total_tokens: f64,
    training_model: ModelSpec,
    basis: CostBasis,
) -> Result<CostBreakdown, CostError> {
    let m = geom.seed_tokens_required(total_tokens, model.expansion_factor)?;
    let curation = if model.kind == SourceKind::ZeroCost || m == 0.0 {
        0.0
    } else {
        let c_s = if model.is_annotated() {
            seed_token_unit_cost(model, m)?
        } else {
            0.0
        };
        curation_cost(model, m, c_s)?
    };
    Ok(CostBreakdown {
        basis,
        training: training_flops(total_tokens, training_model),
        curation,
    })
}

/// K under the requested basis.
pub fn total_cost(
    model: &SourceCostModel,
    geom: &AnnealingGeometry,
    total_tokens: f64,
    training_model: ModelSpec,
    basis: CostBasis,
) -> Result<f64, CostError> {
    cost_breakdown(model, geom, total_tokens, training_model, basis).map(|b| b.total())
}

/// Closed-form curation costs for the two math-domain synthetic datasets.
///
/// TinyGSM charges every curated token one generator inference. TinyGSM-MIND
/// is a 3.6x rewrite of TinyGSM: `original_share` of its cost is the TinyGSM
/// bill and `rewritten_share` of its tokens pay the rewriter rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MathPreset {
    pub generator: ModelSpec,
    pub rewriter: ModelSpec,
    pub original_share: f64,
    pub rewritten_share: f64,
}

impl Default for MathPreset {
    fn default() -> Self {
        Self {
            // GPT-3.5 assumed to match GPT-3's size
            generator: ModelSpec {
                param_count: 175_000_000_000,
            },
            rewriter: ModelSpec {
                param_count: 7_000_000_000,
            },
            original_share: 1.0 / 3.6,
            rewritten_share: 2.0 / 3.6,
        }
    }
}

impl MathPreset {
    pub fn tinygsm_cost_for_tokens(&self, curated_tokens: f64) -> f64 {
        curated_tokens * inference_flops_per_token(self.generator)
    }

    pub fn tinygsm_mind_cost_for_tokens(&self, curated_tokens: f64) -> f64 {
        self.original_share * self.tinygsm_cost_for_tokens(curated_tokens)
            + self.rewritten_share * curated_tokens * inference_flops_per_token(self.rewriter)
    }

    pub fn tinygsm_curation_cost(&self, steps: u64, geom: &AnnealingGeometry) -> f64 {
        self.tinygsm_cost_for_tokens(geom.upsampled_tokens(steps))
    }

    pub fn tinygsm_mind_curation_cost(&self, steps: u64, geom: &AnnealingGeometry) -> f64 {
        self.tinygsm_mind_cost_for_tokens(geom.upsampled_tokens(steps))
    }
}

/// `K_TinyGSM(s)` with the default preset.
pub fn tinygsm_curation_cost(steps: u64, geom: &AnnealingGeometry) -> f64 {
    MathPreset::default().tinygsm_curation_cost(steps, geom)
}

/// `K_MIND(s)` with the default preset.
pub fn tinygsm_mind_curation_cost(steps: u64, geom: &AnnealingGeometry) -> f64 {
    MathPreset::default().tinygsm_mind_curation_cost(steps, geom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(n: u64) -> ModelSpec {
        ModelSpec::new(n).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        if b == 0.0 {
            a.abs()
        } else {
            ((a - b) / b).abs()
        }
    }

    #[test]
    fn training_flops_examples() {
        assert_eq!(training_flops(1e9, p(7_000_000_000)), 4.2e19);
        assert_eq!(training_flops(0.0, p(7_000_000_000)), 0.0);
        // back-of-envelope inference bill for a 70B model over 100B tokens
        assert_eq!(inference_flops_per_token(p(70_000_000_000)) * 100e9, 1.4e22);
    }

    #[test]
    fn inference_rates() {
        assert_eq!(inference_flops_per_token(p(175_000_000_000)), 350e9);
        assert_eq!(inference_flops_per_token(p(7_000_000_000)), 14e9);
        assert_eq!(inference_flops_per_token(p(1)), 2.0);
        assert_eq!(ModelSpec::new(0), Err(CostError::ZeroParams));
    }

    #[test]
    fn tokens_per_step_reference_geometry() {
        let t = AnnealingGeometry::reference().tokens_per_step();
        assert_eq!(t.total, 2_097_152.0);
        assert_eq!(t.upsampled, 209_715.2);
        assert!(rel(t.total, 2.1e6) < 0.002);
        assert!(rel(t.upsampled, 2.1e5) < 0.002);

        let unit = AnnealingGeometry::new(1, 1, 0.5, 1.0)
            .unwrap()
            .tokens_per_step();
        assert_eq!((unit.total, unit.upsampled), (1.0, 0.5));

        let tiny = AnnealingGeometry::new(256, 8192, 0.0001, 1.0)
            .unwrap()
            .tokens_per_step();
        assert_eq!(tiny.total, 2_097_152.0);
        assert!(rel(tiny.upsampled, 209.7152) < 1e-15);
    }

    #[test]
    fn geometry_rejects_bad_values() {
        assert!(AnnealingGeometry::new(0, 8, 0.1, 1.0).is_err());
        assert!(AnnealingGeometry::new(8, 0, 0.1, 1.0).is_err());
        assert!(AnnealingGeometry::new(8, 8, 0.0, 1.0).is_err());
        assert!(AnnealingGeometry::new(8, 8, 1.0, 1.0).is_err());
        assert!(AnnealingGeometry::new(8, 8, 0.1, 0.5).is_err());
        assert!(AnnealingGeometry::new(8, 8, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn seed_tokens_examples() {
        let g = AnnealingGeometry::reference();
        assert_eq!(g.seed_tokens_required(1e9, 3.0).unwrap(), 2.5e7);
        assert_eq!(g.seed_tokens_required(1e9, 0.0).unwrap(), 1e8);
        assert_eq!(g.upsampled_from_seed(2.5e7, 3.0), 1e8);
        assert!(g.seed_tokens_required(-1.0, 0.0).is_err());
    }

    #[test]
    fn seed_unit_cost_examples() {
        let mbf = SourceCostParams {
            mbf_recall: 22.0,
            annotator_per_token_flops: 2e8,
            ..SourceCostParams::new(SourceKind::Mbf)
        }
        .build()
        .unwrap();
        assert_eq!(seed_token_unit_cost(&mbf, 1.0).unwrap(), 4.4e9);
        assert_eq!(seed_token_unit_cost(&mbf, 1e12).unwrap(), 4.4e9);
        assert_eq!(
            seed_token_unit_cost(&mbf, 0.0),
            Err(CostError::NoSeedTokens)
        );

        let amortized = SourceCostParams {
            annotator_training_flops: 1e12,
            ..SourceCostParams::new(SourceKind::Mbf)
        }
        .build()
        .unwrap();
        assert_eq!(seed_token_unit_cost(&amortized, 1e6).unwrap(), 1e6);
        let far = seed_token_unit_cost(&amortized, 1e300).unwrap();
        assert!(far < 1e-280);

        let synth = SourceCostModel::synthetic(p(7_000_000_000), 1.0).unwrap();
        assert!(matches!(
            seed_token_unit_cost(&synth, 1.0),
            Err(CostError::NotAnnotated(SourceKind::Synthetic))
        ));
    }

    #[test]
    fn mbf_helper_uses_inference_rate() {
        let m = SourceCostModel::mbf(22.0, p(100_000_000), 0.0).unwrap();
        assert_eq!(m.annotator_per_token_flops(), 2e8);
        assert!(SourceCostModel::mbf(0.5, p(1), 0.0).is_err());
    }

    #[test]
    fn curation_cost_examples() {
        let synth = SourceCostModel::synthetic(p(7_000_000_000), 1.0).unwrap();
        assert_eq!(curation_cost(&synth, 1e9, 0.0).unwrap(), 1.4e19);
        assert_eq!(
            curation_cost(&SourceCostModel::zero_cost(), 1e9, 0.0).unwrap(),
            0.0
        );
        let mbf = SourceCostParams::new(SourceKind::Mbf).build().unwrap();
        assert_eq!(curation_cost(&mbf, 1e9, 4.4e9).unwrap(), 4.4e18);
    }

    #[test]
    fn synthetic_without_generator_is_rejected() {
        let err = SourceCostParams {
            expansion_factor: 2.0,
            ..SourceCostParams::new(SourceKind::Synthetic)
        }
        .build()
        .unwrap_err();
        assert!(err.to_string().contains("generator_params"));
        let zero = SourceCostParams {
            annotator_per_token_flops: 1.0,
            ..SourceCostParams::new(SourceKind::ZeroCost)
        };
        assert!(zero.build().is_err());
    }

    #[test]
    fn total_cost_examples() {
        let g = AnnealingGeometry::reference();
        let z = SourceCostModel::zero_cost();
        let seven = p(7_000_000_000);
        assert_eq!(
            total_cost(&z, &g, 2.1e9, seven, CostBasis::CurationOnly).unwrap(),
            0.0
        );
        assert_eq!(
            total_cost(&z, &g, 2.1e9, seven, CostBasis::CurationPlusAnnealing).unwrap(),
            8.82e19
        );
    }

    #[test]
    fn tinygsm_costs() {
        let preset = MathPreset::default();
        assert_eq!(preset.tinygsm_cost_for_tokens(1.8e9), 6.3e20);
        let g = AnnealingGeometry::reference();
        assert_eq!(tinygsm_curation_cost(0, &g), 0.0);
        assert_eq!(tinygsm_mind_curation_cost(0, &g), 0.0);
        // 36000 * 209715.2 * 350e9, evaluated in exact rationals
        assert!(rel(tinygsm_curation_cost(36_000, &g), 2.64241152e21) < 1e-15);
        assert!(rel(tinygsm_curation_cost(36_000, &g), 2.646e21) < 0.01);
    }

    #[test]
    fn mind_ratio_is_constant() {
        let g = AnnealingGeometry::reference();
        // (1/3.6) + (2/3.6)(14/350) reduces to exactly 3/10
        for s in [1, 1000, 36_000] {
            let ratio = tinygsm_mind_curation_cost(s, &g) / tinygsm_curation_cost(s, &g);
            assert!(rel(ratio, 0.3) < 1e-12, "s={s}: {ratio}");
            assert!(ratio < 1.0);
        }
    }

    fn any_source() -> impl Strategy<Value = SourceCostModel> {
        (
            0u8..4,
            0.0..10.0f64,
            1u64..1_000_000_000_000,
            0.0..1e10f64,
            0.0..1e15f64,
            1.0..50.0f64,
        )
            .prop_map(|(kind, k, gen, c_b, c_bert, recall)| {
                let kind = match kind {
                    0 => SourceKind::Mbf,
                    1 => SourceKind::Synthetic,
                    2 => SourceKind::RephraseComposite,
                    _ => SourceKind::ZeroCost,
                };
                let params = match kind {
                    SourceKind::ZeroCost => SourceCostParams::new(kind),
                    SourceKind::Mbf => SourceCostParams {
                        annotator_per_token_flops: c_b,
                        annotator_training_flops: c_bert,
                        mbf_recall: recall,
                        ..SourceCostParams::new(kind)
                    },
                    SourceKind::Synthetic => SourceCostParams {
                        expansion_factor: k,
                        generator: Some(p(gen)),
                        ..SourceCostParams::new(kind)
                    },
                    SourceKind::RephraseComposite => SourceCostParams {
                        expansion_factor: k,
                        generator: Some(p(gen)),
                        annotator_per_token_flops: c_b,
                        annotator_training_flops: c_bert,
                        mbf_recall: recall,
                        ..SourceCostParams::new(kind)
                    },
                };
                params.build().unwrap()
            })
    }

    proptest! {
        #[test]
        fn basis_decomposition(src in any_source(), d in 0.0..1e12f64) {
            let g = AnnealingGeometry::reference();
            let tm = p(7_000_000_000);
            let plus = total_cost(&src, &g, d, tm, CostBasis::CurationPlusAnnealing).unwrap();
            let only = total_cost(&src, &g, d, tm, CostBasis::CurationOnly).unwrap();
            let train = training_flops(d, tm);
            prop_assert!(rel(plus - only, train) < 1e-9 || (plus - only - train).abs() < 1e-6 * plus);
        }

        #[test]
        fn cost_is_monotone_in_tokens(src in any_source(), d in 1.0..1e12f64, f in 1.0..10.0f64) {
            let g = AnnealingGeometry::reference();
            let tm = p(7_000_000_000);
            for basis in [CostBasis::CurationOnly, CostBasis::CurationPlusAnnealing] {
                let lo = total_cost(&src, &g, d, tm, basis).unwrap();
                let hi = total_cost(&src, &g, d * f, tm, basis).unwrap();
                prop_assert!(hi >= lo);
            }
            let lo = total_cost(&src, &g, d, tm, CostBasis::CurationPlusAnnealing).unwrap();
            let hi = total_cost(&src, &g, d * 2.0, tm, CostBasis::CurationPlusAnnealing).unwrap();
            prop_assert!(hi > lo);
        }

        #[test]
        fn curation_scales_linearly_without_training_amortization(
            k in 0.0..10.0f64, c_s in 0.0..1e10f64, m in 0.0..1e12f64, lambda in 0.0..100.0f64
        ) {
            let src = SourceCostParams {
                expansion_factor: k,
                generator: Some(p(7_000_000_000)),
                ..SourceCostParams::new(SourceKind::RephraseComposite)
            }.build().unwrap();
            let base = curation_cost(&src, m, c_s).unwrap();
            let scaled = curation_cost(&src, lambda * m, c_s).unwrap();
            prop_assert!((scaled - lambda * base).abs() <= 1e-12 * scaled.abs().max(1.0));
        }

        #[test]
        fn seed_round_trip(d in 0.0..1e13f64, k in 0.0..100.0f64, e in 1.0..8.0f64, r in 0.001..0.999f64) {
            let g = AnnealingGeometry::new(256, 8192, r, e).unwrap();
            let m = g.seed_tokens_required(d, k).unwrap();
            let back = g.upsampled_from_seed(m, k);
            prop_assert!((back - r * d).abs() <= 4.0 * f64::EPSILON * (r * d).max(f64::MIN_POSITIVE));
        }
    }
}
