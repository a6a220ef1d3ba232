//! Per-source utility scaling laws `delta(c) = a + b * ln(c)`.
//!
//! Fits are plain least squares of delta against the natural log of compute.
//! Predictions outside the fitted compute range are allowed but flagged.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::cost::CostBasis;
use crate::ingest::UtilityPoint;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScalingError {
    #[error("need at least 2 points to fit, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate design for '{0}': fewer than 2 distinct compute values")]
    DegenerateDesign(String),
    #[error("compute must be positive, got {compute} for '{source_id}'")]
    NonPositiveCompute { source_id: String, compute: f64 },
    #[error("non-finite delta for '{0}'")]
    NonFiniteDelta(String),
    #[error("points mix sources '{0}' and '{1}'")]
    MixedSources(String, String),
    #[error("mixed cost bases: {0} and {1}")]
    MixedBasis(CostBasis, CostBasis),
    #[error("power-law fit needs deltas of one strict sign for '{0}'")]
    MixedSigns(String),
    #[error("no fits given")]
    NoFits,
    #[error("budget must be positive, got {0}")]
    NonPositiveBudget(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub source_id: String,
    pub intercept: f64,
    /// Delta gained per unit of natural-log FLOPs.
    pub slope: f64,
    pub n_points: usize,
    pub rmse: f64,
    pub compute_range: (f64, f64),
    pub basis: CostBasis,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub value: f64,
    pub extrapolated: bool,
}

impl ScalingFit {
    /// A fit built directly from known parameters, mostly for planning with
    /// externally supplied laws.
    pub fn from_params(
        source_id: impl Into<String>,
        intercept: f64,
        slope: f64,
        compute_range: (f64, f64),
        basis: CostBasis,
    ) -> Self {
        Self {
            source_id: source_id.into(),
            intercept,
            slope,
            n_points: 0,
            rmse: 0.0,
            compute_range,
            basis,
        }
    }

    pub fn contains(&self, compute: f64) -> bool {
        compute >= self.compute_range.0 && compute <= self.compute_range.1
    }

    pub fn predict(&self, compute: f64) -> Result<Prediction, ScalingError> {
        predict(self, compute)
    }

    fn eval(&self, compute: f64) -> f64 {
        self.intercept + self.slope * compute.ln()
    }
}

/// Options for [`fit_log_linear_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FitOptions {
    /// Drop this many of the lowest-compute points before fitting.
    pub drop_smallest: usize,
}

pub fn fit_log_linear(points: &[UtilityPoint]) -> Result<ScalingFit, ScalingError> {
    fit_log_linear_with(points, FitOptions::default())
}

pub fn fit_log_linear_with(
    points: &[UtilityPoint],
    opts: FitOptions,
) -> Result<ScalingFit, ScalingError> {
    let (source_id, basis) = common_identity(points)?;
    let mut data: Vec<(f64, f64)> = points.iter().map(|p| (p.compute, p.delta.value)).collect();
    if opts.drop_smallest > 0 {
        data.sort_by(|a, b| a.0.total_cmp(&b.0));
        data.drain(..opts.drop_smallest.min(data.len()));
    }
    fit_compute_delta(source_id, basis, &data)
}

fn common_identity(points: &[UtilityPoint]) -> Result<(&str, CostBasis), ScalingError> {
    let first = points.first().ok_or(ScalingError::TooFewPoints(0))?;
    for p in points {
        if p.source_id != first.source_id {
            return Err(ScalingError::MixedSources(
                first.source_id.clone(),
                p.source_id.clone(),
            ));
        }
        if p.basis != first.basis {
            return Err(ScalingError::MixedBasis(first.basis, p.basis));
        }
    }
    Ok((&first.source_id, first.basis))
}

/// Least-squares fit of `delta = a + b ln(compute)` over raw pairs.
pub fn fit_compute_delta(
    source_id: &str,
    basis: CostBasis,
    data: &[(f64, f64)],
) -> Result<ScalingFit, ScalingError> {
    if data.len() < 2 {
        return Err(ScalingError::TooFewPoints(data.len()));
    }
    for &(c, d) in data {
        if !(c > 0.0) || !c.is_finite() {
            return Err(ScalingError::NonPositiveCompute {
                source_id: source_id.into(),
                compute: c,
            });
        }
        if !d.is_finite() {
            return Err(ScalingError::NonFiniteDelta(source_id.into()));
        }
    }
    let lo = data.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = data.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Err(ScalingError::DegenerateDesign(source_id.into()));
    }

    let n = data.len() as f64;
    let xs: Vec<f64> = data.iter().map(|p| p.0.ln()).collect();
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = data.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, &(_, y)) in xs.iter().zip(data) {
        sxx += (x - x_mean) * (x - x_mean);
        sxy += (x - x_mean) * (y - y_mean);
    }
    if sxx == 0.0 {
        return Err(ScalingError::DegenerateDesign(source_id.into()));
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let sse: f64 = xs
        .iter()
        .zip(data)
        .map(|(x, &(_, y))| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    Ok(ScalingFit {
        source_id: source_id.into(),
        intercept,
        slope,
        n_points: data.len(),
        rmse: (sse / n).sqrt(),
        compute_range: (lo, hi),
        basis,
    })
}

/// Fits every source in `points`, in source-id order.
pub fn fit_all(points: &[UtilityPoint], opts: FitOptions) -> Result<Vec<ScalingFit>, ScalingError> {
    let mut by_source: BTreeMap<&str, Vec<UtilityPoint>> = BTreeMap::new();
    for p in points {
        by_source.entry(&p.source_id).or_default().push(p.clone());
    }
    by_source
        .values()
        .map(|pts| fit_log_linear_with(pts, opts))
        .collect()
}

pub fn predict(fit: &ScalingFit, compute: f64) -> Result<Prediction, ScalingError> {
    if !(compute > 0.0) {
        return Err(ScalingError::NonPositiveCompute {
            source_id: fit.source_id.clone(),
            compute,
        });
    }
    Ok(Prediction {
        value: fit.eval(compute),
        extrapolated: !fit.contains(compute),
    })
}

/// Compute at which two fitted curves intersect.
#[derive(Debug, Clone, PartialEq)]
pub struct Crossover {
    pub compute: f64,
    pub leader_below: String,
    pub leader_above: String,
    /// Whether `compute` lies inside both fits' compute ranges.
    pub in_range: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CrossoverOutcome {
    Crossing(Crossover),
    /// Equal slopes, different intercepts: one source leads everywhere.
    Parallel,
    /// Same line; no ranking exists.
    Identical,
    /// The intersection lies outside the representable FLOPs range.
    Unrepresentable,
}

impl CrossoverOutcome {
    pub fn crossing(&self) -> Option<&Crossover> {
        match self {
            CrossoverOutcome::Crossing(c) => Some(c),
            _ => None,
        }
    }
}

pub fn crossover(a: &ScalingFit, b: &ScalingFit) -> Result<CrossoverOutcome, ScalingError> {
    if a.basis != b.basis {
        return Err(ScalingError::MixedBasis(a.basis, b.basis));
    }
    if a.slope == b.slope {
        return Ok(if a.intercept == b.intercept {
            CrossoverOutcome::Identical
        } else {
            CrossoverOutcome::Parallel
        });
    }
    let c = ((b.intercept - a.intercept) / (a.slope - b.slope)).exp();
    if !(c > 0.0 && c.is_finite() && (c / 2.0) > 0.0 && (c * 2.0).is_finite()) {
        return Ok(CrossoverOutcome::Unrepresentable);
    }
    let (below, above) = if a.eval(c / 2.0) > b.eval(c / 2.0) {
        (a, b)
    } else {
        (b, a)
    };
    Ok(CrossoverOutcome::Crossing(Crossover {
        compute: c,
        leader_below: below.source_id.clone(),
        leader_above: above.source_id.clone(),
        in_range: a.contains(c) && b.contains(c),
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankEntry {
    pub source_id: String,
    pub predicted: f64,
    pub extrapolated: bool,
    /// Within tie tolerance of a neighbour; order among tied entries is by
    /// source id.
    pub tied: bool,
}

/// Predictions closer than this (relative to `max(1, |value|)`) are ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Ranks sources by predicted delta at a shared compute budget.
///
/// Each fit's compute axis already prices its tokens, so a common budget buys
/// different token counts per source. The head of the list is the best
/// single source for that budget.
pub fn rank_at_budget(fits: &[ScalingFit], budget: f64) -> Result<Vec<RankEntry>, ScalingError> {
    let first = fits.first().ok_or(ScalingError::NoFits)?;
    if let Some(f) = fits.iter().find(|f| f.basis != first.basis) {
        return Err(ScalingError::MixedBasis(first.basis, f.basis));
    }
    if !(budget > 0.0) || !budget.is_finite() {
        return Err(ScalingError::NonPositiveBudget(budget));
    }
    let mut entries: Vec<RankEntry> = fits
        .iter()
        .map(|f| {
            let p = predict(f, budget)?;
            Ok(RankEntry {
                source_id: f.source_id.clone(),
                predicted: p.value,
                extrapolated: p.extrapolated,
                tied: false,
            })
        })
        .collect::<Result<_, ScalingError>>()?;
    entries.sort_by(|x, y| {
        y.predicted
            .total_cmp(&x.predicted)
            .then_with(|| x.source_id.cmp(&y.source_id))
    });

    // group near-equal runs, anchored at each group's leading value
    let mut start = 0;
    while start < entries.len() {
        let anchor = entries[start].predicted;
        let mut end = start + 1;
        while end < entries.len()
            && (anchor - entries[end].predicted).abs() <= TIE_TOLERANCE * anchor.abs().max(1.0)
        {
            end += 1;
        }
        if end - start > 1 {
            let group = &mut entries[start..end];
            group.sort_by(|x, y| x.source_id.cmp(&y.source_id));
            group.iter_mut().for_each(|e| e.tied = true);
        }
        start = end;
    }
    Ok(entries)
}

/// Alternate form `ln|delta| = alpha + beta ln(c)`, valid only when every
/// delta has the same strict sign.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerLawFit {
    pub source_id: String,
    pub log_prefactor: f64,
    pub exponent: f64,
    /// +1 or -1, the shared sign of the deltas.
    pub sign: f64,
    /// Residual RMS in log space.
    pub log_rmse: f64,
    pub compute_range: (f64, f64),
    pub basis: CostBasis,
}

impl PowerLawFit {
    pub fn predict(&self, compute: f64) -> f64 {
        self.sign * (self.log_prefactor + self.exponent * compute.ln()).exp()
    }
}

pub fn fit_power_law(points: &[UtilityPoint]) -> Result<PowerLawFit, ScalingError> {
    let (source_id, basis) = common_identity(points)?;
    let sign = if points.iter().all(|p| p.delta.value > 0.0) {
        1.0
    } else if points.iter().all(|p| p.delta.value < 0.0) {
        -1.0
    } else {
        return Err(ScalingError::MixedSigns(source_id.into()));
    };
    let data: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.compute, p.delta.value.abs().ln()))
        .collect();
    let lin = fit_compute_delta(source_id, basis, &data)?;
    Ok(PowerLawFit {
        source_id: lin.source_id,
        log_prefactor: lin.intercept,
        exponent: lin.slope,
        sign,
        log_rmse: lin.rmse,
        compute_range: lin.compute_range,
        basis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{MetricKind, UtilityDelta};
    use proptest::prelude::*;

    const B: CostBasis = CostBasis::CurationPlusAnnealing;

    fn point(source: &str, compute: f64, delta: f64) -> UtilityPoint {
        UtilityPoint {
            source_id: source.into(),
            steps: 1,
            compute,
            basis: B,
            tokens_total: 0.0,
            tokens_upsampled: 0.0,
            delta: UtilityDelta {
                value: delta,
                metric: MetricKind::BrierScore,
                source_id: source.into(),
            },
        }
    }

    fn line(a: f64, b: f64, cs: &[f64]) -> Vec<UtilityPoint> {
        cs.iter().map(|&c| point("s", c, a + b * c.ln())).collect()
    }

    fn fit(id: &str, a: f64, b: f64) -> ScalingFit {
        ScalingFit::from_params(id, a, b, (1.0, 1e30), B)
    }

    fn rel(x: f64, y: f64) -> f64 {
        ((x - y) / y).abs()
    }

    #[test]
    fn recovers_noiseless_line() {
        let f = fit_log_linear(&line(0.01, 0.002, &[1e19, 1e20, 1e21])).unwrap();
        assert!(rel(f.intercept, 0.01) < 1e-9, "{}", f.intercept);
        assert!(rel(f.slope, 0.002) < 1e-9);
        assert!(f.rmse < 1e-15);
        assert_eq!(f.compute_range, (1e19, 1e21));
        assert_eq!(f.n_points, 3);
    }

    #[test]
    fn two_points_interpolate() {
        let f = fit_log_linear(&[point("s", 10.0, 1.0), point("s", 100.0, 3.0)]).unwrap();
        assert!(f.rmse < 1e-12);
        assert!((f.predict(10.0).unwrap().value - 1.0).abs() < 1e-12);
        assert!((f.predict(100.0).unwrap().value - 3.0).abs() < 1e-12);
    }

    #[test]
    fn fit_errors() {
        let same = [point("s", 5.0, 1.0), point("s", 5.0, 2.0)];
        assert!(matches!(
            fit_log_linear(&same),
            Err(ScalingError::DegenerateDesign(_))
        ));
        assert!(matches!(
            fit_log_linear(&same[..1]),
            Err(ScalingError::TooFewPoints(1))
        ));
        let bad = [point("s", 0.0, 1.0), point("s", 5.0, 2.0)];
        assert!(matches!(
            fit_log_linear(&bad),
            Err(ScalingError::NonPositiveCompute { .. })
        ));
        let mixed = [point("s", 1.0, 1.0), point("t", 5.0, 2.0)];
        assert!(matches!(
            fit_log_linear(&mixed),
            Err(ScalingError::MixedSources(..))
        ));
    }

    #[test]
    fn drop_smallest_excludes_low_compute_points() {
        let mut pts = line(0.0, 1.0, &[10.0, 100.0, 1000.0]);
        pts.insert(0, point("s", 1.0, 50.0));
        let f = fit_log_linear_with(&pts, FitOptions { drop_smallest: 1 }).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12);
        assert_eq!(f.compute_range.0, 10.0);
    }

    #[test]
    fn predictions() {
        let unit = fit("s", 0.0, 1.0);
        assert!((unit.predict(std::f64::consts::E).unwrap().value - 1.0).abs() < 1e-15);
        let f = fit("s", 0.01, 0.002);
        // 0.01 + 0.002 * ln(1e20)
        assert!((f.predict(1e20).unwrap().value - 0.10210340371976183).abs() < 1e-15);
        assert!(f.predict(0.0).is_err());

        let ranged = ScalingFit::from_params("s", 0.0, 1.0, (10.0, 100.0), B);
        assert!(!ranged.predict(10.0).unwrap().extrapolated);
        assert!(!ranged.predict(50.0).unwrap().extrapolated);
        assert!(!ranged.predict(100.0).unwrap().extrapolated);
        assert!(ranged.predict(9.0).unwrap().extrapolated);
        assert!(ranged.predict(101.0).unwrap().extrapolated);
    }

    #[test]
    fn crossover_example() {
        let steep = fit("steep", 0.0, 2.0);
        let high = fit("high", 10.0, 1.0);
        let c = crossover(&steep, &high).unwrap();
        let c = c.crossing().unwrap();
        assert!(rel(c.compute, 22026.465794806718) < 1e-12);
        assert_eq!(c.leader_below, "high");
        assert_eq!(c.leader_above, "steep");
        assert!(c.in_range);

        assert_eq!(
            crossover(&fit("a", 0.0, 1.0), &fit("b", 1.0, 1.0)).unwrap(),
            CrossoverOutcome::Parallel
        );
        assert_eq!(
            crossover(&fit("a", 1.0, 1.0), &fit("b", 1.0, 1.0)).unwrap(),
            CrossoverOutcome::Identical
        );
        let other_basis =
            ScalingFit::from_params("b", 0.0, 2.0, (1.0, 2.0), CostBasis::CurationOnly);
        assert!(crossover(&steep, &other_basis).is_err());
        assert_eq!(
            crossover(&fit("a", 0.0, 1.0), &fit("b", 1e6, 1.0 - 1e-6)).unwrap(),
            CrossoverOutcome::Unrepresentable
        );
    }

    #[test]
    fn ranking_around_crossover() {
        let fits = [fit("steep", 0.0, 2.0), fit("high", 10.0, 1.0)];
        let c_star = 10f64.exp();
        let low = rank_at_budget(&fits, c_star / 10.0).unwrap();
        assert_eq!(low[0].source_id, "high");
        let big = rank_at_budget(&fits, c_star * 10.0).unwrap();
        assert_eq!(big[0].source_id, "steep");
        assert!(!low[0].tied && !big[0].tied);

        let at = rank_at_budget(&fits, c_star).unwrap();
        assert!((at[0].predicted - at[1].predicted).abs() <= 1e-12 * at[0].predicted.abs());
        assert!(at[0].tied && at[1].tied);
        assert_eq!(at[0].source_id, "high");

        let single = rank_at_budget(&fits[..1], 5.0).unwrap();
        assert_eq!(single.len(), 1);
        assert!(rank_at_budget(&fits, 0.0).is_err());
        assert!(rank_at_budget(&[], 1.0).is_err());
    }

    #[test]
    fn power_law_alternate() {
        let pts: Vec<_> = [1e19, 1e20, 1e21]
            .iter()
            .map(|&c: &f64| point("s", c, 3.0 * c.powf(0.05)))
            .collect();
        let f = fit_power_law(&pts).unwrap();
        assert!(rel(f.exponent, 0.05) < 1e-9);
        assert!(rel(f.log_prefactor, 3f64.ln()) < 1e-9);
        assert!(rel(f.predict(1e20), 3.0 * 1e20f64.powf(0.05)) < 1e-9);
        let mixed = [point("s", 1.0, 1.0), point("s", 2.0, -1.0)];
        assert!(matches!(
            fit_power_law(&mixed),
            Err(ScalingError::MixedSigns(_))
        ));
    }

    fn sse(pts: &[(f64, f64)], a: f64, b: f64) -> f64 {
        pts.iter().map(|(x, y)| (y - a - b * x).powi(2)).sum()
    }

    /// Bisection on the sign change of the difference, in log space.
    fn bisect_crossing(a: &ScalingFit, b: &ScalingFit) -> Option<f64> {
        let g = |lc: f64| (a.intercept + a.slope * lc) - (b.intercept + b.slope * lc);
        let (mut lo, mut hi) = (0.0f64, 1e30f64.ln());
        if g(lo).signum() == g(hi).signum() {
            return None;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid).signum() == g(lo).signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some((0.5 * (lo + hi)).exp())
    }

    proptest! {
        #[test]
        fn fit_is_least_squares(
            raw in prop::collection::vec((1.0..1e6f64, -1.0..1.0f64), 3..12),
            dir in 0usize..4,
        ) {
            let pts: Vec<UtilityPoint> = raw.iter().map(|&(c, d)| point("s", c, d)).collect();
            prop_assume!(raw.iter().any(|p| p.0 != raw[0].0));
            let f = fit_log_linear(&pts).unwrap();
            let xy: Vec<(f64, f64)> = raw.iter().map(|&(c, d)| (c.ln(), d)).collect();
            let best = sse(&xy, f.intercept, f.slope);
            let (da, db) = [(1e-3, 0.0), (-1e-3, 0.0), (0.0, 1e-3), (0.0, -1e-3)][dir];
            prop_assert!(sse(&xy, f.intercept + da, f.slope + db) >= best);
        }

        #[test]
        fn shifting_deltas_shifts_intercept(
            raw in prop::collection::vec((1.0..1e6f64, -1.0..1.0f64), 3..12),
            shift in -1.0..1.0f64,
        ) {
            prop_assume!(raw.iter().any(|p| (p.0 / raw[0].0 - 1.0).abs() > 1e-3));
            let base: Vec<UtilityPoint> = raw.iter().map(|&(c, d)| point("s", c, d)).collect();
            let moved: Vec<UtilityPoint> = raw.iter().map(|&(c, d)| point("s", c, d + shift)).collect();
            let f0 = fit_log_linear(&base).unwrap();
            let f1 = fit_log_linear(&moved).unwrap();
            prop_assert!((f1.intercept - f0.intercept - shift).abs() < 1e-9);
            prop_assert!((f1.slope - f0.slope).abs() < 1e-9);
        }

        #[test]
        fn crossover_is_consistent(
            a1 in -1.0..1.0f64, b1 in -0.05..0.05f64,
            a2 in -1.0..1.0f64, b2 in -0.05..0.05f64,
        ) {
            prop_assume!((b1 - b2).abs() > 1e-3);
            let (f1, f2) = (fit("one", a1, b1), fit("two", a2, b2));
            if let CrossoverOutcome::Crossing(c) = crossover(&f1, &f2).unwrap() {
                let (p1, p2) = (f1.eval(c.compute), f2.eval(c.compute));
                let scale = a1.abs().max(a2.abs()).max(p1.abs()).max(1e-300);
                prop_assert!((p1 - p2).abs() <= 1e-9 * scale);
                if let Some(oracle) = bisect_crossing(&f1, &f2) {
                    prop_assert!(rel(c.compute, oracle) < 1e-6);
                    let below = rank_at_budget(&[f1.clone(), f2.clone()], 0.9 * c.compute).unwrap();
                    let above = rank_at_budget(&[f1.clone(), f2.clone()], 1.1 * c.compute).unwrap();
                    prop_assert_eq!(&below[0].source_id, &c.leader_below);
                    prop_assert_eq!(&above[0].source_id, &c.leader_above);
                    prop_assert_ne!(&below[0].source_id, &above[0].source_id);
                }
            }
        }
    }
}
