//! Aggregates over many runs.

use serde::{Deserialize, Serialize};

use super::Method;
use crate::env::FailureCategory;
use crate::judgment::fractional_ranks;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassRatePoint {
    pub method: Method,
    pub budget: u32,
    pub runs: u32,
    pub passed: u32,
    pub pass_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRank {
    pub method: Method,
    pub mean_rank: f64,
    /// Tournaments the mean is taken over.
    pub tournaments: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EloBucket {
    pub index: u32,
    pub lower: f64,
    pub upper: f64,
    pub runs: u32,
    pub passed: u32,
    /// `None` for an empty bucket.
    pub pass_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyRow {
    pub method: Method,
    pub category: FailureCategory,
    /// Classified runs.
    pub runs: u32,
    /// Runs whose selected sequence shows the category.
    pub occurrences: u32,
    pub fixed: u32,
    pub incidence: f64,
    /// `None` when the category never occurred.
    pub fix_ratio: Option<f64>,
}

/// Spearman rank correlation with averaged ranks for ties. `None` for fewer
/// than two points or a constant input.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    pearson(&fractional_ranks(x), &fractional_ranks(y))
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

pub const ELO_BUCKETS: u32 = 10;

/// Min-max normalizes the scores to [0, 1] and splits that range into ten
/// equal intervals (the last one closed). A constant input lands in bucket 0.
pub fn elo_bucket_table(points: &[(f64, bool)]) -> Vec<EloBucket> {
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let mut buckets: Vec<EloBucket> = (0..ELO_BUCKETS)
        .map(|i| EloBucket {
            index: i,
            lower: f64::from(i) / f64::from(ELO_BUCKETS),
            upper: f64::from(i + 1) / f64::from(ELO_BUCKETS),
            runs: 0,
            passed: 0,
            pass_rate: None,
        })
        .collect();
    for &(elo, passed) in points {
        let x = if hi > lo { (elo - lo) / (hi - lo) } else { 0.0 };
        let i = ((x * f64::from(ELO_BUCKETS)).floor() as u32).min(ELO_BUCKETS - 1);
        let b = &mut buckets[i as usize];
        b.runs += 1;
        b.passed += u32::from(passed);
    }
    for b in &mut buckets {
        if b.runs > 0 {
            b.pass_rate = Some(f64::from(b.passed) / f64::from(b.runs));
        }
    }
    buckets
}

/// Correlation between bucket index and pass rate over non-empty buckets.
pub fn bucket_trend(buckets: &[EloBucket]) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = buckets
        .iter()
        .filter_map(|b| b.pass_rate.map(|r| (f64::from(b.index), r)))
        .unzip();
    spearman(&x, &y)
}
