//! Grid search for a share vector that maximizes demand served.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use thiserror::Error;

use crate::core5g::SliceId;
use crate::radio::SliceShare;

/// Grid resolution: shares are multiples of 1/STEPS.
pub const STEPS: u32 = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("no slices to optimize")]
    NoSlices,
    #[error("minimum shares cannot be met on a {STEPS}-step grid")]
    Infeasible,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Scores of one candidate, compared highest first.
#[derive(Debug, Clone, Copy)]
pub struct Score {
    /// Demand served if each slice gets exactly its guaranteed share.
    pub served: f64,
    /// Worst share-to-demand ratio, i.e. the most constrained slice.
    pub min_ratio: f64,
}

pub fn score(units: &[u32], demands: &[f64], capacity: f64) -> Score {
    let mut served = 0.0;
    let mut min_ratio = f64::INFINITY;
    for (&u, &d) in units.iter().zip(demands) {
        let alloc = u as f64 / STEPS as f64 * capacity;
        served += d.min(alloc);
        if d > 0.0 {
            min_ratio = min_ratio.min(alloc / d);
        }
    }
    Score { served, min_ratio }
}

/// Ordering used by the search: served demand (within a relative
/// tolerance), then the worst ratio. `Greater` means `a` is better.
pub fn compare(a: &Score, b: &Score, scale: f64) -> Ordering {
    let tol = 1e-9 * scale.max(1.0);
    if (a.served - b.served).abs() > tol {
        return a.served.total_cmp(&b.served);
    }
    if a.min_ratio.is_infinite() && b.min_ratio.is_infinite() {
        return Ordering::Equal;
    }
    if (a.min_ratio - b.min_ratio).abs() > 1e-9 * a.min_ratio.abs().max(1.0) {
        return a.min_ratio.total_cmp(&b.min_ratio);
    }
    Ordering::Equal
}

/// Best share vector over the 5 % grid. The whole cell is always assigned
/// and every slice gets at least one step and at least its minimum share.
/// Remaining ties go to the lexicographically smallest vector in slice
/// order.
pub fn optimize_shares(
    capacity_mbps: f64,
    demands: &BTreeMap<SliceId, f64>,
    min_shares: &BTreeMap<SliceId, f64>,
) -> Result<Vec<SliceShare>, OptimizeError> {
    if !(capacity_mbps.is_finite() && capacity_mbps > 0.0) {
        return Err(OptimizeError::InvalidInput("capacity must be > 0".into()));
    }
    let mut slices: Vec<SliceId> = demands.keys().copied().collect();
    for s in min_shares.keys() {
        if !slices.contains(s) {
            slices.push(*s);
        }
    }
    slices.sort();
    if slices.is_empty() {
        return Err(OptimizeError::NoSlices);
    }
    let d: Vec<f64> = slices
        .iter()
        .map(|s| demands.get(s).copied().unwrap_or(0.0))
        .collect();
    if d.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(OptimizeError::InvalidInput("demands must be finite and >= 0".into()));
    }
    let lo: Vec<u32> = slices
        .iter()
        .map(|s| {
            let m = min_shares.get(s).copied().unwrap_or(0.0);
            ((m * STEPS as f64 - 1e-9).ceil() as u32).max(1)
        })
        .collect();
    if lo.iter().sum::<u32>() > STEPS {
        return Err(OptimizeError::Infeasible);
    }

    let mut best: Option<(Vec<u32>, Score)> = None;
    let mut cur = lo.clone();
    search(0, STEPS - lo.iter().sum::<u32>(), &lo, &mut cur, &d, capacity_mbps, &mut best);
    let (units, _) = best.expect("feasible grid has a point");
    Ok(slices
        .into_iter()
        .zip(units)
        .map(|(slice_id, u)| SliceShare {
            slice_id,
            share: u as f64 / STEPS as f64,
        })
        .collect())
}

/// Depth-first enumeration in lexicographic order, so the first candidate
/// of any tie is kept.
fn search(
    i: usize,
    spare: u32,
    lo: &[u32],
    cur: &mut Vec<u32>,
    d: &[f64],
    cap: f64,
    best: &mut Option<(Vec<u32>, Score)>,
) {
    if i + 1 == lo.len() {
        cur[i] = lo[i] + spare;
        let s = score(cur, d, cap);
        let better = match best {
            None => true,
            Some((_, b)) => compare(&s, b, cap) == Ordering::Greater,
        };
        if better {
            *best = Some((cur.clone(), s));
        }
        return;
    }
    for extra in 0..=spare {
        cur[i] = lo[i] + extra;
        search(i + 1, spare - extra, lo, cur, d, cap, best);
    }
}
