//! Report assembly and CSV rendering.
//!
//! Every table is UTF-8 with LF line endings and a header row. Commands that
//! emit two tables separate them with one empty line. Floats are printed in
//! Rust's shortest round-trip form, so parsing a cell gives back the exact
//! value that was computed.

use dataplan_core::allocate::AllocationPlan;
use dataplan_core::ingest::UtilityPoint;
use dataplan_core::scaling::{CrossoverOutcome, RankEntry, ScalingFit};

use crate::error::CliError;

pub const FIT_HEADER: [&str; 8] = [
    "source_id",
    "intercept",
    "slope",
    "rmse",
    "n_points",
    "c_lo",
    "c_hi",
    "basis",
];
pub const POINT_HEADER: [&str; 5] = ["source_id", "steps", "compute", "tokens_upsampled", "delta"];
pub const RANK_HEADER: [&str; 5] = [
    "rank",
    "source_id",
    "predicted_delta",
    "extrapolated",
    "tie",
];
pub const CROSSOVER_HEADER: [&str; 7] = [
    "source_a",
    "source_b",
    "compute",
    "leader_below",
    "leader_above",
    "in_range",
    "status",
];
pub const ALLOCATION_HEADER: [&str; 6] = [
    "source_id",
    "slope",
    "assigned_compute",
    "share",
    "excluded_reason",
    "oracle_compute",
];
pub const SUMMARY_HEADER: [&str; 2] = ["metric", "value"];
pub const COST_HEADER: [&str; 4] = ["basis", "total_flops", "training_flops", "curation_flops"];
pub const DIVERSITY_HEADER: [&str; 5] = ["n", "distinct", "total", "ratio", "entropy_bits"];
pub const TRUTH_HEADER: [&str; 5] = [
    "source_id",
    "kind",
    "true_intercept",
    "true_slope",
    "noise_sigma",
];

pub fn num(v: f64) -> String {
    format!("{v:?}")
}

/// A crossover between one ordered pair of fitted sources.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCrossover {
    pub source_a: String,
    pub source_b: String,
    pub outcome: CrossoverOutcome,
}

/// Grid-oracle result shown next to a closed-form plan.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub plan: AllocationPlan,
    pub resolution: usize,
    /// Oracle utility minus closed-form utility; never positive.
    pub gap: f64,
}

/// Everything a command computed, ready for rendering.
#[derive(Debug, Clone, Default)]
pub struct ReportBundle {
    pub fits: Vec<ScalingFit>,
    pub points: Vec<UtilityPoint>,
    pub crossovers: Vec<PairCrossover>,
    pub plan: Option<AllocationPlan>,
    pub oracle: Option<OracleCheck>,
    pub ranking: Vec<RankEntry>,
    pub warnings: Vec<String>,
}

/// One CSV table as bytes.
pub fn table<H, R>(header: &[H], rows: R) -> Result<Vec<u8>, CliError>
where
    H: AsRef<str>,
    R: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let internal = |e: csv::Error| CliError::Internal(format!("csv encoding failed: {e}"));
    w.write_record(header.iter().map(|h| h.as_ref()))
        .map_err(internal)?;
    for row in rows {
        w.write_record(&row).map_err(internal)?;
    }
    w.into_inner()
        .map_err(|e| CliError::Internal(format!("csv flush failed: {e}")))
}

/// Tables joined by a single empty line.
pub fn sections(parts: Vec<Vec<u8>>) -> Vec<u8> {
    let mut out = Vec::new();
    for (i, p) in parts.into_iter().enumerate() {
        if i > 0 {
            out.push(b'\n');
        }
        out.extend(p);
    }
    out
}

pub fn fits_table(fits: &[ScalingFit]) -> Result<Vec<u8>, CliError> {
    table(
        &FIT_HEADER,
        fits.iter().map(|f| {
            vec![
                f.source_id.clone(),
                num(f.intercept),
                num(f.slope),
                num(f.rmse),
                f.n_points.to_string(),
                num(f.compute_range.0),
                num(f.compute_range.1),
                f.basis.to_string(),
            ]
        }),
    )
}

pub fn points_table(points: &[UtilityPoint]) -> Result<Vec<u8>, CliError> {
    table(
        &POINT_HEADER,
        points.iter().map(|p| {
            vec![
                p.source_id.clone(),
                p.steps.to_string(),
                num(p.compute),
                num(p.tokens_upsampled),
                num(p.delta.value),
            ]
        }),
    )
}

pub fn rank_table(ranking: &[RankEntry]) -> Result<Vec<u8>, CliError> {
    table(
        &RANK_HEADER,
        ranking.iter().enumerate().map(|(i, r)| {
            vec![
                (i + 1).to_string(),
                r.source_id.clone(),
                num(r.predicted),
                r.extrapolated.to_string(),
                r.tied.to_string(),
            ]
        }),
    )
}

pub fn crossover_table(pairs: &[PairCrossover]) -> Result<Vec<u8>, CliError> {
    table(
        &CROSSOVER_HEADER,
        pairs.iter().map(|p| {
            let empty = || [String::new(), String::new(), String::new(), String::new()];
            let ([compute, below, above, in_range], status) = match &p.outcome {
                CrossoverOutcome::Crossing(x) => (
                    [
                        num(x.compute),
                        x.leader_below.clone(),
                        x.leader_above.clone(),
                        x.in_range.to_string(),
                    ],
                    "crossing",
                ),
                CrossoverOutcome::Parallel => (empty(), "parallel"),
                CrossoverOutcome::Identical => (empty(), "identical"),
                CrossoverOutcome::Unrepresentable => (empty(), "unrepresentable"),
            };
            vec![
                p.source_a.clone(),
                p.source_b.clone(),
                compute,
                below,
                above,
                in_range,
                status.to_string(),
            ]
        }),
    )
}

pub fn allocation_tables(
    fits: &[ScalingFit],
    plan: &AllocationPlan,
    oracle: Option<&OracleCheck>,
) -> Result<Vec<u8>, CliError> {
    let rows = fits.iter().map(|f| {
        let assigned = plan.assigned(&f.source_id);
        let reason = plan
            .excluded
            .iter()
            .find(|(id, _)| id == &f.source_id)
            .map(|(_, r)| r.clone())
            .unwrap_or_default();
        let oracle_compute = oracle
            .map(|o| num(o.plan.assigned(&f.source_id)))
            .unwrap_or_default();
        vec![
            f.source_id.clone(),
            num(f.slope),
            num(assigned),
            num(assigned / plan.total),
            reason,
            oracle_compute,
        ]
    });
    let allocation = table(&ALLOCATION_HEADER, rows)?;
    let mut summary = vec![
        vec!["total".to_string(), num(plan.total)],
        vec![
            "predicted_mixture_utility".to_string(),
            num(plan.predicted_mixture_utility),
        ],
    ];
    if let Some(o) = oracle {
        summary.push(vec!["oracle_resolution".into(), o.resolution.to_string()]);
        summary.push(vec![
            "oracle_utility".into(),
            num(o.plan.predicted_mixture_utility),
        ]);
        summary.push(vec!["oracle_gap".into(), num(o.gap)]);
    }
    Ok(sections(vec![allocation, table(&SUMMARY_HEADER, summary)?]))
}
