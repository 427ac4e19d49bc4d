//! Replication statistics: ECDFs, Student-t intervals over replication
//! means, KS distances, normalization and the synchronization error.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::StatsError;

/// Post-warm-up response samples of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub replication: u64,
    pub seed: u64,
    pub samples: Vec<f64>,
    pub mean: f64,
}

impl ReplicationResult {
    /// Drops the first `warmup` responses (arrival order) and keeps the rest.
    pub fn from_responses(replication: u64, seed: u64, responses: &[f64], warmup: usize) -> Result<Self, StatsError> {
        let samples: Vec<f64> = responses.iter().skip(warmup).copied().collect();
        if samples.is_empty() {
            return Err(StatsError::Empty);
        }
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        Ok(ReplicationResult {
            replication,
            seed,
            samples,
            mean,
        })
    }

    pub fn count(&self) -> usize {
        self.samples.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiSummary {
    pub estimate: f64,
    pub half_width: f64,
    pub replications: usize,
}

impl CiSummary {
    pub fn lower(&self) -> f64 {
        self.estimate - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.estimate + self.half_width
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower() <= value && value <= self.upper()
    }
}

/// Two-sided Student-t critical value for confidence `level` with `dof`
/// degrees of freedom.
pub fn t_critical(level: f64, dof: usize) -> f64 {
    let t = StudentsT::new(0.0, 1.0, dof as f64).expect("dof >= 1");
    t.inverse_cdf(0.5 + 0.5 * level)
}

pub fn mean_ci(means: &[f64], level: f64) -> Result<CiSummary, StatsError> {
    let r = means.len();
    if r < 2 {
        return Err(StatsError::TooFewReplications(r));
    }
    let n = r as f64;
    let mean = means.iter().sum::<f64>() / n;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(CiSummary {
        estimate: mean,
        half_width: t_critical(level, r - 1) * (var / n).sqrt(),
        replications: r,
    })
}

/// Sorted unique values with cumulative proportions; the last point is 1.
pub fn ecdf(samples: &[f64]) -> Result<Vec<(f64, f64)>, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in sorted.iter().enumerate() {
        let p = (i + 1) as f64 / n;
        match points.last_mut() {
            Some(last) if last.0 == x => last.1 = p,
            _ => points.push((x, p)),
        }
    }
    if let Some(last) = points.last_mut() {
        last.1 = 1.0;
    }
    Ok(points)
}

/// Keeps at most `max_points` ECDF steps, chosen at evenly spaced quantile
/// levels. The first and last steps always survive.
pub fn thin_ecdf(points: &[(f64, f64)], max_points: usize) -> Vec<(f64, f64)> {
    if points.len() <= max_points || max_points < 2 {
        return points.to_vec();
    }
    let mut out = Vec::with_capacity(max_points);
    let mut idx = 0;
    for k in 0..max_points {
        let level = k as f64 / (max_points - 1) as f64;
        while idx + 1 < points.len() && points[idx].1 < level {
            idx += 1;
        }
        if out.last().is_none_or(|p: &(f64, f64)| p.0 != points[idx].0) {
            out.push(points[idx]);
        }
    }
    if out.last() != points.last() {
        out.push(*points.last().unwrap());
    }
    out
}

/// Two-sample KS distance `sup_t |F_a(t) - F_b(t)|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// KS distance between the ECDF of `samples` and an analytic law given by its
/// cdf `P[X <= t]` and left limit `P[X < t]`.
pub fn ks_against(samples: &[f64], cdf: impl Fn(f64) -> f64, cdf_left: impl Fn(f64) -> f64) -> Result<f64, StatsError> {
    let points = ecdf(samples)?;
    let mut d: f64 = 0.0;
    let mut prev = 0.0;
    for (x, p) in points {
        d = d.max((p - cdf(x)).abs()).max((prev - cdf_left(x)).abs());
        prev = p;
    }
    Ok(d)
}

/// DKW band half-width: with probability at least `1 - alpha` the ECDF of
/// `n` iid samples stays within this distance of the true cdf.
pub fn dkw_bound(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// Divides each point estimate and half-width by the baseline estimate at the
/// same x.
pub fn normalize(series: &[(f64, CiSummary)], baseline: &[(f64, CiSummary)]) -> Result<Vec<(f64, CiSummary)>, StatsError> {
    if series.len() != baseline.len() {
        return Err(StatsError::GridMismatch);
    }
    series
        .iter()
        .zip(baseline)
        .map(|((x, ci), (bx, base))| {
            if (x - bx).abs() > 1e-12 * x.abs().max(1.0) {
                return Err(StatsError::GridMismatch);
            }
            if !(base.estimate > 0.0) {
                return Err(StatsError::NonPositiveBaseline(base.estimate));
            }
            Ok((
                *x,
                CiSummary {
                    estimate: ci.estimate / base.estimate,
                    half_width: ci.half_width / base.estimate,
                    replications: ci.replications,
                },
            ))
        })
        .collect()
}

/// Relative gap `|a - c| / c` per paired replication, summarized by
/// [`mean_ci`].
pub fn sync_error(a_means: &[f64], c_means: &[f64], level: f64) -> Result<CiSummary, StatsError> {
    if a_means.len() != c_means.len() {
        return Err(StatsError::Unpaired(a_means.len(), c_means.len()));
    }
    let eps: Vec<f64> = a_means
        .iter()
        .zip(c_means)
        .map(|(a, c)| {
            if *c > 0.0 {
                Ok((a - c).abs() / c)
            } else {
                Err(StatsError::NonPositiveBaseline(*c))
            }
        })
        .collect::<Result<_, _>>()?;
    mean_ci(&eps, level)
}
