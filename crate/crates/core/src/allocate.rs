//! Splitting a compute budget across data sources.
//!
//! With additive per-source utilities `a_i + b_i ln(c_i)` and a budget
//! `sum c_i = c_max`, the concave optimum assigns `c_i = b_i / sum_j b_j * c_max`.
//! Sources with non-positive slopes are dropped from the objective (their
//! term is removed rather than evaluated at zero compute) and the remaining
//! slopes are renormalized. When no slope is positive the whole budget goes
//! to the best single source at `c_max`.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use thiserror::Error;

use crate::scaling::{rank_at_budget, ScalingError, ScalingFit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocateError {
    #[error("budget must be positive and finite, got {0}")]
    NonPositiveBudget(f64),
    #[error("no fits given")]
    NoFits,
    #[error("source '{0}' appears in more than one fit")]
    DuplicateSource(String),
    #[error("source '{0}' has a positive assignment but no fit")]
    UnknownSource(String),
    #[error("assignment for '{0}' must be finite and non-negative")]
    BadAssignment(String),
    #[error("grid oracle supports 1 to {max} sources, got {got}; use the closed form")]
    TooManySources { got: usize, max: usize },
    #[error("grid resolution must be at least max(2, number of sources), got {0}")]
    BadResolution(usize),
    #[error(transparent)]
    Scaling(#[from] ScalingError),
}

/// Largest source count the grid oracle will enumerate.
pub const ORACLE_MAX_SOURCES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationPlan {
    pub assignments: BTreeMap<String, f64>,
    pub total: f64,
    pub predicted_mixture_utility: f64,
    pub excluded: Vec<(String, String)>,
    pub warnings: Vec<String>,
}

impl AllocationPlan {
    pub fn assigned(&self, source_id: &str) -> f64 {
        self.assignments.get(source_id).copied().unwrap_or(0.0)
    }
}

fn check_fits(fits: &[ScalingFit]) -> Result<(), AllocateError> {
    if fits.is_empty() {
        return Err(AllocateError::NoFits);
    }
    let mut seen = BTreeSet::new();
    for f in fits {
        if !seen.insert(f.source_id.as_str()) {
            return Err(AllocateError::DuplicateSource(f.source_id.clone()));
        }
    }
    Ok(())
}

fn check_budget(c_max: f64) -> Result<(), AllocateError> {
    if c_max > 0.0 && c_max.is_finite() {
        Ok(())
    } else {
        Err(AllocateError::NonPositiveBudget(c_max))
    }
}

/// `sum (a_i + b_i ln c_i)` over sources with positive assignment.
pub fn mixture_utility(
    fits: &[ScalingFit],
    assignments: &BTreeMap<String, f64>,
) -> Result<f64, AllocateError> {
    let mut total = 0.0;
    for (id, &c) in assignments {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(AllocateError::BadAssignment(id.clone()));
        }
        if c == 0.0 {
            continue;
        }
        let fit = fits
            .iter()
            .find(|f| &f.source_id == id)
            .ok_or_else(|| AllocateError::UnknownSource(id.clone()))?;
        total += fit.intercept + fit.slope * c.ln();
    }
    Ok(total)
}

fn extrapolation_warnings(fits: &[ScalingFit], assignments: &BTreeMap<String, f64>) -> Vec<String> {
    fits.iter()
        .filter_map(|f| {
            let c = *assignments.get(&f.source_id)?;
            (c > 0.0 && !f.contains(c)).then(|| {
                format!(
                    "allocation {c:e} for '{}' is outside its fitted range [{:e}, {:e}]",
                    f.source_id, f.compute_range.0, f.compute_range.1
                )
            })
        })
        .collect()
}

/// Budget split proportional to fitted slopes.
pub fn allocate_proportional(
    fits: &[ScalingFit],
    c_max: f64,
) -> Result<AllocationPlan, AllocateError> {
    check_budget(c_max)?;
    check_fits(fits)?;

    let positive: Vec<&ScalingFit> = fits.iter().filter(|f| f.slope > 0.0).collect();
    let mut assignments: BTreeMap<String, f64> =
        fits.iter().map(|f| (f.source_id.clone(), 0.0)).collect();
    let mut excluded = Vec::new();
    let mut warnings = Vec::new();

    if positive.is_empty() {
        let ranking = rank_at_budget(fits, c_max)?;
        let best = &ranking[0].source_id;
        assignments.insert(best.clone(), c_max);
        for f in fits.iter().filter(|f| &f.source_id != best) {
            excluded.push((f.source_id.clone(), "non-positive slope".to_string()));
        }
        warnings.push(format!(
            "no source has a positive slope; full budget assigned to best single source '{best}'"
        ));
    } else {
        let slope_sum: f64 = positive.iter().map(|f| f.slope).sum();
        for f in fits {
            if f.slope > 0.0 {
                assignments.insert(f.source_id.clone(), f.slope / slope_sum * c_max);
            } else {
                excluded.push((f.source_id.clone(), "non-positive slope".to_string()));
            }
        }
    }
    warnings.extend(extrapolation_warnings(fits, &assignments));
    let predicted_mixture_utility = mixture_utility(fits, &assignments)?;
    Ok(AllocationPlan {
        assignments,
        total: c_max,
        predicted_mixture_utility,
        excluded,
        warnings,
    })
}

/// Exhaustive search over the grid `{j * c_max / resolution}` of the
/// simplex, giving every source at least one grid step.
///
/// Enumeration is split across threads by the first source's share; the
/// reduction keeps the best utility and, among equal utilities, the
/// lexicographically smallest grid point, so the result matches a
/// sequential scan exactly.
pub fn allocate_grid_oracle(
    fits: &[ScalingFit],
    c_max: f64,
    resolution: usize,
) -> Result<AllocationPlan, AllocateError> {
    check_budget(c_max)?;
    check_fits(fits)?;
    let n = fits.len();
    if n > ORACLE_MAX_SOURCES {
        return Err(AllocateError::TooManySources {
            got: n,
            max: ORACLE_MAX_SOURCES,
        });
    }
    if resolution < 2 || resolution < n {
        return Err(AllocateError::BadResolution(resolution));
    }

    let table = term_table(fits, c_max, resolution);
    let best = (1..=resolution - (n - 1))
        .into_par_iter()
        .map(|j0| best_with_first(&table, resolution, j0))
        .reduce(|| None, pick_better)
        .expect("grid has at least one point");
    Ok(plan_from_grid(fits, c_max, resolution, &best.1))
}

/// Sequential reference scan for [`allocate_grid_oracle`].
pub fn allocate_grid_oracle_sequential(
    fits: &[ScalingFit],
    c_max: f64,
    resolution: usize,
) -> Result<AllocationPlan, AllocateError> {
    check_budget(c_max)?;
    check_fits(fits)?;
    let n = fits.len();
    if n > ORACLE_MAX_SOURCES {
        return Err(AllocateError::TooManySources {
            got: n,
            max: ORACLE_MAX_SOURCES,
        });
    }
    if resolution < 2 || resolution < n {
        return Err(AllocateError::BadResolution(resolution));
    }
    let table = term_table(fits, c_max, resolution);
    let best = (1..=resolution - (n - 1))
        .map(|j0| best_with_first(&table, resolution, j0))
        .fold(None, pick_better)
        .expect("grid has at least one point");
    Ok(plan_from_grid(fits, c_max, resolution, &best.1))
}

type GridBest = Option<(f64, Vec<usize>)>;

/// `table[i][j] = a_i + b_i ln(j * c_max / resolution)`.
fn term_table(fits: &[ScalingFit], c_max: f64, resolution: usize) -> Vec<Vec<f64>> {
    fits.iter()
        .map(|f| {
            (0..=resolution)
                .map(|j| {
                    if j == 0 {
                        f64::NAN
                    } else {
                        f.intercept + f.slope * grid_compute(c_max, resolution, j).ln()
                    }
                })
                .collect()
        })
        .collect()
}

fn grid_compute(c_max: f64, resolution: usize, j: usize) -> f64 {
    c_max * (j as f64 / resolution as f64)
}

fn pick_better(a: GridBest, b: GridBest) -> GridBest {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(x), Some(y)) => {
            if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) {
                Some(y)
            } else {
                Some(x)
            }
        }
    }
}

fn best_with_first(table: &[Vec<f64>], resolution: usize, j0: usize) -> GridBest {
    let n = table.len();
    let mut idx = vec![0usize; n];
    idx[0] = j0;
    let mut best: GridBest = None;
    enumerate_rest(table, resolution - j0, 1, table[0][j0], &mut idx, &mut best);
    debug_assert!(n >= 1);
    best
}

fn enumerate_rest(
    table: &[Vec<f64>],
    remaining: usize,
    pos: usize,
    acc: f64,
    idx: &mut Vec<usize>,
    best: &mut GridBest,
) {
    let n = table.len();
    if pos == n {
        if remaining == 0 {
            let better = match best {
                None => true,
                Some((v, _)) => acc > *v,
            };
            if better {
                *best = Some((acc, idx.clone()));
            }
        }
        return;
    }
    if pos == n - 1 {
        if remaining >= 1 {
            idx[pos] = remaining;
            enumerate_rest(table, 0, pos + 1, acc + table[pos][remaining], idx, best);
        }
        return;
    }
    let left_after = n - pos - 1;
    if remaining < left_after + 1 {
        return;
    }
    for j in 1..=remaining - left_after {
        idx[pos] = j;
        enumerate_rest(
            table,
            remaining - j,
            pos + 1,
            acc + table[pos][j],
            idx,
            best,
        );
    }
}

fn plan_from_grid(
    fits: &[ScalingFit],
    c_max: f64,
    resolution: usize,
    idx: &[usize],
) -> AllocationPlan {
    let assignments: BTreeMap<String, f64> = fits
        .iter()
        .zip(idx)
        .map(|(f, &j)| (f.source_id.clone(), grid_compute(c_max, resolution, j)))
        .collect();
    let predicted_mixture_utility = fits
        .iter()
        .zip(idx)
        .map(|(f, &j)| f.intercept + f.slope * grid_compute(c_max, resolution, j).ln())
        .sum();
    AllocationPlan {
        warnings: extrapolation_warnings(fits, &assignments),
        assignments,
        total: c_max,
        predicted_mixture_utility,
        excluded: Vec::new(),
    }
}
