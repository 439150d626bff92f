//! K+1 and feature-matching objectives.

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use super::{
    check_finite_input, check_grad, check_labels, log_sum_exp, softmax_row, softplus, LossValue,
};
use crate::error::{Error, Result};
use crate::nets::sigmoid;

/// Probability that a sample is fake when the (K+1)-th logit is pinned to zero:
/// `1 / (sum_i exp C_i + 1)`.
pub fn p_fm_fake(logits: &[f64]) -> Result<f64> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("p_fm_fake", "non-finite logit"));
    }
    Ok(sigmoid(-log_sum_exp(ArrayView1::from(logits))))
}

/// Complement of [`p_fm_fake`]: `sum_i exp C_i / (sum_i exp C_i + 1)`.
pub fn p_fm_real(logits: &[f64]) -> Result<f64> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("p_fm_real", "non-finite logit"));
    }
    Ok(sigmoid(log_sum_exp(ArrayView1::from(logits))))
}

fn empty_like(a: &Array2<f64>) -> Array2<f64> {
    Array2::zeros(a.raw_dim())
}

/// Mean `-log softmax(C)[y]` and its gradient `(softmax - onehot) / B`.
fn nll_rows(logits: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let b = logits.nrows();
    let mut grad = empty_like(logits);
    if b == 0 {
        return (0.0, grad);
    }
    let mut total = 0.0;
    for ((row, mut g), &y) in logits.rows().into_iter().zip(grad.rows_mut()).zip(labels) {
        total += log_sum_exp(row) - row[y - 1];
        for (gi, p) in g.iter_mut().zip(softmax_row(row)) {
            *gi = p / b as f64;
        }
        g[y - 1] -= 1.0 / b as f64;
    }
    (total / b as f64, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossEntropyGrad {
    pub logits: Array2<f64>,
}

/// Supervised cross-entropy over K logits (the softmax baseline objective).
pub fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> Result<(LossValue, CrossEntropyGrad)> {
    check_finite_input("supervised", logits)?;
    check_labels(labels, logits.ncols(), logits.nrows(), "cross_entropy")?;
    let (v, g) = nll_rows(logits, labels);
    check_grad("supervised", &g)?;
    Ok((
        LossValue::from_terms(vec![("supervised", v)])?,
        CrossEntropyGrad { logits: g },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KPlus1Grad {
    pub fake: Array2<f64>,
    pub lab: Array2<f64>,
}

/// Explicit (K+1)-node discriminator/classifier loss: fakes are supervised
/// into node K+1, labelled samples into their category.
pub fn kplus1_dc_loss(
    logits_fake: &Array2<f64>,
    logits_lab: &Array2<f64>,
    labels: &[usize],
) -> Result<(LossValue, KPlus1Grad)> {
    check_finite_input("fake", logits_fake)?;
    check_finite_input("supervised", logits_lab)?;
    let nodes = logits_fake.ncols().max(logits_lab.ncols());
    for a in [logits_fake, logits_lab] {
        if a.nrows() > 0 && a.ncols() != nodes {
            return Err(Error::arg("fake and labelled batches have different node counts"));
        }
    }
    if nodes < 3 {
        return Err(Error::arg("K+1 formulation needs at least 3 nodes"));
    }
    check_labels(labels, nodes - 1, logits_lab.nrows(), "kplus1_dc_loss")?;
    let fake_labels = vec![nodes; logits_fake.nrows()];
    let (tf, gf) = nll_rows(logits_fake, &fake_labels);
    let (tl, gl) = nll_rows(logits_lab, labels);
    check_grad("fake", &gf)?;
    check_grad("supervised", &gl)?;
    Ok((
        LossValue::from_terms(vec![("fake", tf), ("supervised", tl)])?,
        KPlus1Grad { fake: gf, lab: gl },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FmDcGrad {
    pub fake: Array2<f64>,
    pub unlab: Array2<f64>,
    pub lab: Array2<f64>,
}

/// Feature-matching GAN discriminator/classifier loss over K logits.
///
/// Terms: `fake` = mean `-log p_fake(G(z))`, `unlabelled` = mean
/// `-log(1 - p_fake(x))`, `supervised` = mean `-log softmax(C(x))[y]`.
/// An empty batch contributes 0 to its term; an empty labelled batch also
/// raises a warning because the supervised term is vacuous.
pub fn fm_dc_loss(
    logits_fake: &Array2<f64>,
    logits_unlab: &Array2<f64>,
    logits_lab: &Array2<f64>,
    labels: &[usize],
) -> Result<(LossValue, FmDcGrad)> {
    check_finite_input("fake", logits_fake)?;
    check_finite_input("unlabelled", logits_unlab)?;
    check_finite_input("supervised", logits_lab)?;
    let k = [logits_fake, logits_unlab, logits_lab]
        .iter()
        .filter(|a| a.nrows() > 0)
        .map(|a| a.ncols())
        .max()
        .unwrap_or(0);
    for a in [logits_fake, logits_unlab, logits_lab] {
        if a.nrows() > 0 && a.ncols() != k {
            return Err(Error::arg("logit batches disagree on K"));
        }
    }
    check_labels(labels, k, logits_lab.nrows(), "fm_dc_loss")?;

    // -log p_fake = softplus(lse); d/dC_i = exp(C_i) / (sum + 1)
    let mut g_fake = empty_like(logits_fake);
    let mut t_fake = 0.0;
    let bf = logits_fake.nrows() as f64;
    for (row, mut g) in logits_fake.rows().into_iter().zip(g_fake.rows_mut()) {
        let lse = log_sum_exp(row);
        let s = softplus(lse);
        t_fake += s;
        for (gi, &c) in g.iter_mut().zip(row) {
            *gi = (c - s).exp() / bf;
        }
    }
    if bf > 0.0 {
        t_fake /= bf;
    }

    // -log(1 - p_fake) = softplus(-lse); d/dC_i = -p_fake * softmax_i
    let mut g_unlab = empty_like(logits_unlab);
    let mut t_unlab = 0.0;
    let bu = logits_unlab.nrows() as f64;
    for (row, mut g) in logits_unlab.rows().into_iter().zip(g_unlab.rows_mut()) {
        let lse = log_sum_exp(row);
        t_unlab += softplus(-lse);
        let p_fake = sigmoid(-lse);
        for (gi, p) in g.iter_mut().zip(softmax_row(row)) {
            *gi = -p_fake * p / bu;
        }
    }
    if bu > 0.0 {
        t_unlab /= bu;
    }

    let (t_sup, g_lab) = nll_rows(logits_lab, labels);
    check_grad("fake", &g_fake)?;
    check_grad("unlabelled", &g_unlab)?;
    check_grad("supervised", &g_lab)?;
    let mut loss = LossValue::from_terms(vec![
        ("fake", t_fake),
        ("unlabelled", t_unlab),
        ("supervised", t_sup),
    ])?;
    if logits_lab.nrows() == 0 {
        loss = loss.with_warning("empty labelled batch: supervised term is vacuous");
    }
    Ok((
        loss,
        FmDcGrad {
            fake: g_fake,
            unlab: g_unlab,
            lab: g_lab,
        },
    ))
}

/// How real and generated features are compared by the generator loss.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMatching {
    /// `|| mean C'(x) - mean C'(G(z)) ||^2`.
    #[default]
    BatchMean,
    /// Mean over all (real, fake) pairs of `|| C'(x) - C'(G(z)) ||^2`.
    PerPair,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FmGenGrad {
    pub real: Array2<f64>,
    pub fake: Array2<f64>,
}

/// Feature-matching generator loss.
pub fn fm_gen_loss(
    features_real: &Array2<f64>,
    features_fake: &Array2<f64>,
    mode: FeatureMatching,
) -> Result<(LossValue, FmGenGrad)> {
    if features_real.nrows() == 0 || features_fake.nrows() == 0 {
        return Err(Error::arg("feature matching needs non-empty real and fake batches"));
    }
    if features_real.ncols() != features_fake.ncols() {
        return Err(Error::arg(format!(
            "feature widths differ: {} vs {}",
            features_real.ncols(),
            features_fake.ncols()
        )));
    }
    check_finite_input("feature_matching", features_real)?;
    check_finite_input("feature_matching", features_fake)?;
    let (br, bf) = (features_real.nrows() as f64, features_fake.nrows() as f64);
    let mr = features_real.mean_axis(Axis(0)).unwrap();
    let mf = features_fake.mean_axis(Axis(0)).unwrap();
    let diff = &mr - &mf;
    let (value, g_real, g_fake) = match mode {
        FeatureMatching::BatchMean => {
            let v = diff.dot(&diff);
            let gr = Array2::from_shape_fn(features_real.raw_dim(), |(_, j)| 2.0 * diff[j] / br);
            let gf = Array2::from_shape_fn(features_fake.raw_dim(), |(_, j)| -2.0 * diff[j] / bf);
            (v, gr, gf)
        }
        FeatureMatching::PerPair => {
            let sq_r = features_real.rows().into_iter().map(|r| r.dot(&r)).sum::<f64>() / br;
            let sq_f = features_fake.rows().into_iter().map(|r| r.dot(&r)).sum::<f64>() / bf;
            let v = (sq_r + sq_f - 2.0 * mr.dot(&mf)).max(0.0);
            let gr = (features_real - &mf) * (2.0 / br);
            let gf = (features_fake - &mr) * (2.0 / bf);
            (v, gr, gf)
        }
    };
    check_grad("feature_matching", &g_real)?;
    check_grad("feature_matching", &g_fake)?;
    Ok((
        LossValue::from_terms(vec![("feature_matching", value)])?,
        FmGenGrad {
            real: g_real,
            fake: g_fake,
        },
    ))
}
