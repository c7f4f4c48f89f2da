//! Device-set selection by condition number, and participation
//! proportionality diagnostics.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParticipationMatrix;
use crate::solver::condition_report;

/// Largest number of subsets [`search_min_condition`] will enumerate.
pub const MAX_SUBSETS: u128 = 10_000_000;

pub const DEFAULT_ALTERNATIVES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSubset {
    /// Device ids in library row order.
    pub ids: Vec<String>,
    #[serde(with = "crate::io::float_or_inf")]
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSearchResult {
    pub selected_ids: Vec<String>,
    #[serde(with = "crate::io::float_or_inf")]
    pub kappa: f64,
    /// Best subsets in ascending κ, starting with the selected one.
    pub ranked_alternatives: Vec<RankedSubset>,
    pub n_evaluated: u64,
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

#[derive(Clone)]
struct Candidate {
    kappa: f64,
    /// Sorted ids; the tie-break key.
    key: Vec<String>,
    rows: Vec<usize>,
}

fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    a.kappa.total_cmp(&b.kappa).then_with(|| a.key.cmp(&b.key))
}

/// Keeps the `m` best candidates, sorted.
fn merge_top(mut a: Vec<Candidate>, b: Vec<Candidate>, m: usize) -> Vec<Candidate> {
    a.extend(b);
    a.sort_by(rank);
    a.truncate(m);
    a
}

fn subset_kappa(library: &ParticipationMatrix, rows: &[usize]) -> f64 {
    let full = library.to_matrix();
    let sub = full.select_rows(rows);
    condition_report(&sub).map(|r| r.kappa).unwrap_or(f64::INFINITY)
}

/// Advances `idx` to the next k-combination of `0..n` in lexicographic
/// order; returns false after the last one.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

pub fn search_min_condition(library: &ParticipationMatrix, k: usize) -> Result<DesignSearchResult> {
    search_min_condition_with(library, k, DEFAULT_ALTERNATIVES)
}

/// Exhaustive search over all `k`-row subsets of the library for the
/// smallest 2-norm condition number. Ties go to the subset whose sorted id
/// list is lexicographically smallest.
pub fn search_min_condition_with(library: &ParticipationMatrix, k: usize, top_m: usize) -> Result<DesignSearchResult> {
    let n = library.n_devices();
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InvalidInput(format!("k = {k} exceeds the {n} devices in the library")));
    }
    let count = binomial(n, k);
    if count > MAX_SUBSETS {
        return Err(Error::TooManySubsets {
            count,
            limit: MAX_SUBSETS,
        });
    }
    let top_m = top_m.max(1);
    let full = library.to_matrix();
    let ids: Vec<&str> = library.devices().iter().map(|d| d.id.as_str()).collect();

    let candidate = |rows: &[usize]| -> Candidate {
        let sub = full.select_rows(rows);
        let kappa = condition_report(&sub).map(|r| r.kappa).unwrap_or(f64::INFINITY);
        let mut key: Vec<String> = rows.iter().map(|&j| ids[j].to_string()).collect();
        key.sort();
        Candidate {
            kappa,
            key,
            rows: rows.to_vec(),
        }
    };

    // Partition by the first row index; each branch enumerates its tail.
    let best = (0..=n - k)
        .into_par_iter()
        .map(|first| {
            let mut tail: Vec<usize> = (first + 1..first + k).collect();
            let mut top: Vec<Candidate> = Vec::new();
            let mut rows = vec![first];
            loop {
                rows.truncate(1);
                rows.extend(&tail);
                top = merge_top(top, vec![candidate(&rows)], top_m);
                if tail.is_empty() || !next_tail(&mut tail, first + 1, n) {
                    break;
                }
            }
            top
        })
        .reduce(Vec::new, |a, b| merge_top(a, b, top_m));

    let ranked_alternatives: Vec<RankedSubset> = best
        .iter()
        .map(|c| RankedSubset {
            ids: c.rows.iter().map(|&j| ids[j].to_string()).collect(),
            kappa: c.kappa,
        })
        .collect();
    let winner = &ranked_alternatives[0];
    Ok(DesignSearchResult {
        selected_ids: winner.ids.clone(),
        kappa: winner.kappa,
        ranked_alternatives,
        n_evaluated: count as u64,
    })
}

/// Next combination of `tail.len()` values from `lo..n`.
fn next_tail(tail: &mut [usize], lo: usize, n: usize) -> bool {
    let mut shifted: Vec<usize> = tail.iter().map(|&v| v - lo).collect();
    let more = next_combination(&mut shifted, n - lo);
    if more {
        for (t, s) in tail.iter_mut().zip(shifted) {
            *t = s + lo;
        }
    }
    more
}

/// κ of the rows of `library` named by `ids`.
pub fn subset_condition(library: &ParticipationMatrix, ids: &[&str]) -> Result<f64> {
    let rows = ids
        .iter()
        .map(|id| {
            library
                .devices()
                .iter()
                .position(|d| d.id == *id)
                .ok_or_else(|| Error::InvalidInput(format!("unknown device `{id}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(subset_kappa(library, &rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub device_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_um: Option<f64>,
    /// `None` when the denominator participation is zero.
    pub ratio: Option<f64>,
    pub flagged: bool,
}

/// Ratio of the participations of `region_a` and `region_b` per device,
/// sorted by trench depth (devices without a depth last).
pub fn proportionality_report(p: &ParticipationMatrix, region_a: &str, region_b: &str) -> Result<Vec<RatioRow>> {
    let ia = p
        .region_index(region_a)
        .ok_or_else(|| Error::InvalidInput(format!("unknown region `{region_a}`")))?;
    let ib = p
        .region_index(region_b)
        .ok_or_else(|| Error::InvalidInput(format!("unknown region `{region_b}`")))?;
    let mut rows: Vec<RatioRow> = p
        .devices()
        .iter()
        .map(|dev| {
            let (a, b) = (dev.participation[ia], dev.participation[ib]);
            let ratio = (b > 0.0).then(|| a / b);
            RatioRow {
                device_id: dev.id.clone(),
                d_um: dev.d,
                ratio,
                flagged: ratio.is_none(),
            }
        })
        .collect();
    rows.sort_by(|x, y| match (x.d_um, y.d_um) {
        (Some(a), Some(b)) => a.total_cmp(&b),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    });
    Ok(rows)
}
