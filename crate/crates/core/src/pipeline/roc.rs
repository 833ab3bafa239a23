use std::fmt::Write as _;

use crate::error::{invalid_input, Result};

/// Number of thresholds in the default sweep.
pub const ROC_POINTS: usize = 64;

/// Smallest threshold in the default sweep.
pub const ROC_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// Points ordered by descending threshold.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    /// Trapezoidal area under TPR(FPR) with the curve closed at `(0, 0)` and
    /// `(1, 1)`.
    pub fn area(&self) -> f64 {
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(self.points.len() + 2);
        pts.push((0.0, 0.0));
        pts.extend(self.points.iter().map(|p| (p.fpr, p.tpr)));
        pts.push((1.0, 1.0));
        pts.windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum()
    }

    /// `threshold,tpr,fpr` with nine significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,tpr,fpr\n");
        for p in &self.points {
            writeln!(out, "{:.8e},{:.8e},{:.8e}", p.threshold, p.tpr, p.fpr).expect("string write");
        }
        out
    }
}

/// `count` thresholds spaced logarithmically from `max` down to `floor`.
/// A `max` at or below `floor` collapses the sweep to `floor`.
pub fn log_thresholds(max: f64, floor: f64, count: usize) -> Vec<f64> {
    if count == 0 {
        return Vec::new();
    }
    if max.partial_cmp(&floor) != Some(std::cmp::Ordering::Greater) || count == 1 {
        return vec![floor.max(max); count.min(1)];
    }
    let (hi, lo) = (max.ln(), floor.ln());
    (0..count)
        .map(|k| {
            if k == 0 {
                max
            } else if k == count - 1 {
                floor
            } else {
                (hi + (lo - hi) * k as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

/// Default sweep for a set of recovered foregrounds.
pub fn default_thresholds(recovered: &[Vec<f64>]) -> Vec<f64> {
    let max = recovered
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    log_thresholds(max, ROC_FLOOR, ROC_POINTS)
}

fn check_pairs(recovered: &[Vec<f64>], masks: &[Vec<bool>]) -> Result<()> {
    if recovered.len() != masks.len() {
        return Err(invalid_input(format!(
            "{} recovered frames but {} masks",
            recovered.len(),
            masks.len()
        )));
    }
    if let Some(i) = recovered.iter().zip(masks).position(|(r, m)| r.len() != m.len()) {
        return Err(invalid_input(format!("frame {i} and its mask differ in size")));
    }
    Ok(())
}

/// Pooled ROC: every pixel of every frame is one detection event.
pub fn evaluate_roc(recovered: &[Vec<f64>], masks: &[Vec<bool>], thresholds: &[f64]) -> Result<RocCurve> {
    check_pairs(recovered, masks)?;
    if thresholds.windows(2).any(|w| w[0].partial_cmp(&w[1]).is_none_or(|o| o.is_lt())) {
        return Err(invalid_input("thresholds must be sorted in descending order"));
    }
    let positives = masks.iter().flatten().filter(|&&m| m).count();
    let total: usize = masks.iter().map(Vec::len).sum();
    let negatives = total - positives;
    if positives == 0 {
        return Err(invalid_input("ground truth has an empty foreground support"));
    }

    // Sort magnitudes once, then sweep the thresholds downwards.
    let mut events: Vec<(f64, bool)> = recovered
        .iter()
        .flatten()
        .zip(masks.iter().flatten())
        .map(|(v, &m)| (v.abs(), m))
        .collect();
    events.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = Vec::with_capacity(thresholds.len());
    let (mut tp, mut fp, mut next) = (0usize, 0usize, 0usize);
    for &theta in thresholds {
        while next < events.len() && events[next].0 >= theta {
            if events[next].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            next += 1;
        }
        points.push(RocPoint {
            threshold: theta,
            tpr: tp as f64 / positives as f64,
            fpr: if negatives == 0 { 0.0 } else { fp as f64 / negatives as f64 },
        });
    }
    Ok(RocCurve { points })
}

/// F1 score of `{i : |x_i| ≥ threshold}` against the true support.
pub fn support_f1(recovered: &[f64], mask: &[bool], threshold: f64) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (v, &m) in recovered.iter().zip(mask) {
        match (v.abs() >= threshold, m) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return if fp == 0 && fn_ == 0 { 1.0 } else { 0.0 };
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}
