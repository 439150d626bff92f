//! Every training objective as a pure function returning its value, a named
//! breakdown of additive terms, and exact gradients w.r.t. its inputs.
//!
//! Batches are `[B, width]` matrices and expectations are batch means. Labels
//! are 1-based category indices in `1..=K`.

mod arp;
mod fm;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use arp::{
    arp_classifier_loss, arp_distance, arp_gan_c_loss, arp_gan_c_loss_weighted, arp_gan_d_loss, arp_gan_g_loss,
    arp_gan_g_loss_weighted, entropy_i, p_arp, ArpClassifierGrad, ArpDistance, ArpGanCGrad,
    ArpGanDGrad, ArpGanGGrad, EntropyGrad,
};
pub use fm::{
    cross_entropy, fm_dc_loss, fm_gen_loss, kplus1_dc_loss, p_fm_fake, p_fm_real, CrossEntropyGrad,
    FeatureMatching, FmDcGrad, FmGenGrad, KPlus1Grad,
};

/// Floor applied to probabilities before taking logs.
pub const LOG_EPS: f64 = 1e-7;

/// A scalar objective and its additive components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub value: f64,
    pub terms: Vec<(String, f64)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl LossValue {
    pub fn from_terms(terms: Vec<(&str, f64)>) -> Result<Self> {
        let mut value = 0.0;
        for (name, v) in &terms {
            if !v.is_finite() {
                return Err(Error::numeric(*name, format!("non-finite loss term {v}")));
            }
            value += v;
        }
        Ok(LossValue {
            value,
            terms: terms.into_iter().map(|(n, v)| (n.to_string(), v)).collect(),
            warnings: Vec::new(),
        })
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    pub fn with_warning(mut self, w: impl Into<String>) -> Self {
        self.warnings.push(w.into());
        self
    }
}

pub(crate) fn log_sum_exp(v: ArrayView1<'_, f64>) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Softmax over one logit vector, max-subtracted.
pub fn softmax_k(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("softmax", "non-finite logit"));
    }
    Ok(softmax_row(ArrayView1::from(logits)))
}

pub(crate) fn softmax_row(v: ArrayView1<'_, f64>) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|&x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub(crate) fn check_labels(labels: &[usize], k: usize, rows: usize, what: &str) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::arg(format!(
            "{what}: {} labels for {rows} samples",
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l == 0 || l > k) {
        return Err(Error::arg(format!("{what}: label {bad} outside 1..={k}")));
    }
    Ok(())
}

pub(crate) fn check_grad<D: ndarray::Dimension>(
    term: &str,
    g: &ndarray::Array<f64, D>,
) -> Result<()> {
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(term, "non-finite gradient"));
    }
    Ok(())
}

pub(crate) fn check_finite_input(term: &str, a: &Array2<f64>) -> Result<()> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(term, "non-finite input"));
    }
    Ok(())
}
