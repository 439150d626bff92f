use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest tolerated gap between the rank statistic and the ROC trapezoid.
pub const AUROC_AGREEMENT: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Auroc {
    /// Mann-Whitney statistic: fraction of (known, novel) pairs ranked
    /// correctly, ties counting one half.
    pub value: f64,
    /// Trapezoidal area under `roc_points`.
    pub trapezoid: f64,
    /// `(false-positive rate, true-positive rate)` from `(0,0)` to `(1,1)`.
    pub roc_points: Vec<(f64, f64)>,
}

/// AUROC with known samples as the positive class.
pub fn auroc(known: &[f64], novel: &[f64]) -> Result<Auroc> {
    if known.is_empty() || novel.is_empty() {
        return Err(Error::arg("AUROC needs non-empty known and novel score pools"));
    }
    if known.iter().chain(novel).any(|v| !v.is_finite()) {
        return Err(Error::numeric("auroc", "non-finite score"));
    }
    let (n1, n2) = (known.len() as f64, novel.len() as f64);
    let mut all: Vec<(f64, bool)> = known
        .iter()
        .map(|&v| (v, true))
        .chain(novel.iter().map(|&v| (v, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Rank sum of the known pool with mid-ranks for ties.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let mid = (i + 1 + j) as f64 / 2.0;
        rank_sum += mid * all[i..j].iter().filter(|e| e.1).count() as f64;
        i = j;
    }
    let value = (rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n2);

    // Threshold sweep from the highest score down; each distinct score is one threshold.
    let mut roc_points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut trapezoid = 0.0;
    let mut j = all.len();
    while j > 0 {
        let v = all[j - 1].0;
        while j > 0 && all[j - 1].0 == v {
            if all[j - 1].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j -= 1;
        }
        let (x0, y0) = *roc_points.last().unwrap();
        let (x1, y1) = (fp as f64 / n2, tp as f64 / n1);
        trapezoid += (x1 - x0) * (y0 + y1) / 2.0;
        roc_points.push((x1, y1));
    }
    if (trapezoid - value).abs() > AUROC_AGREEMENT {
        return Err(Error::numeric(
            "auroc",
            format!("rank statistic {value} disagrees with ROC area {trapezoid}"),
        ));
    }
    Ok(Auroc {
        value,
        trapezoid,
        roc_points,
    })
}
