//! Closed-set accuracy, novelty scores, ROC/AUROC and report formatting.

mod roc;

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::data::OpenSetSplit;
use crate::error::{Error, Result};
use crate::losses::{arp_distance, p_fm_real, softmax_k};
use crate::nets::{ClassifierReadout, ReciprocalPointSet};
use crate::training::{ModelKind, TrainState, CLASSIFIER};

pub use roc::{auroc, Auroc, AUROC_AGREEMENT};

/// Statistic used as the known-category score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scorer {
    /// `p(real)` of the implicit-fake-logit classifier.
    PReal,
    /// Largest class probability.
    MaxSoftmax,
    /// Largest raw reciprocal-point distance.
    MaxDistance,
}

impl Scorer {
    pub fn as_str(self) -> &'static str {
        match self {
            Scorer::PReal => "preal",
            Scorer::MaxSoftmax => "maxsoftmax",
            Scorer::MaxDistance => "maxdistance",
        }
    }

    pub fn default_for(kind: ModelKind) -> Scorer {
        match kind {
            ModelKind::FmGan => Scorer::PReal,
            ModelKind::Softmax | ModelKind::Arp | ModelKind::ArpGan => Scorer::MaxSoftmax,
        }
    }

    /// Whether this statistic is defined for the model's readout.
    pub fn supports(self, kind: ModelKind) -> bool {
        match self {
            Scorer::MaxSoftmax => true,
            Scorer::PReal => !kind.uses_points(),
            Scorer::MaxDistance => kind.uses_points(),
        }
    }
}

impl fmt::Display for Scorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scorer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Scorer::PReal, Scorer::MaxSoftmax, Scorer::MaxDistance]
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::arg(format!("unknown scorer {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    /// Higher means more confidently from a labelled category.
    pub known_score: f64,
    /// Category in `1..=K`.
    pub predicted_label: usize,
    /// `1..=K`, or `K + 1` for novels; absent until paired with the test pool.
    pub anticipated_label: Option<usize>,
}

/// First index of the maximum, so ties go to the lower category.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Score one logit vector.
pub fn score_fm_logits(logits: &[f64], scorer: Scorer) -> Result<ScoredSample> {
    if logits.is_empty() {
        return Err(Error::arg("empty logit vector"));
    }
    let known_score = match scorer {
        Scorer::PReal => p_fm_real(logits)?,
        Scorer::MaxSoftmax => softmax_k(logits)?.into_iter().fold(0.0, f64::max),
        Scorer::MaxDistance => {
            return Err(Error::arg("max-distance scoring needs reciprocal points"))
        }
    };
    Ok(ScoredSample {
        known_score,
        predicted_label: argmax(logits) + 1,
        anticipated_label: None,
    })
}

/// Score every row of a logit-mode readout.
pub fn score_fm(readout: &ClassifierReadout, scorer: Scorer) -> Result<Vec<ScoredSample>> {
    readout
        .logits()?
        .rows()
        .into_iter()
        .map(|r| score_fm_logits(&r.to_vec(), scorer))
        .collect()
}

/// Score one embedding: the farthest reciprocal point names the category.
pub fn score_arp(embedding: &[f64], rp: &ReciprocalPointSet, scorer: Scorer) -> Result<ScoredSample> {
    if embedding.len() != rp.m() {
        return Err(Error::arg(format!(
            "embedding width {} != point width {}",
            embedding.len(),
            rp.m()
        )));
    }
    let d = rp
        .points
        .rows()
        .into_iter()
        .map(|p| Ok(arp_distance(embedding, p.as_slice().unwrap_or(&p.to_vec()))?.d))
        .collect::<Result<Vec<f64>>>()?;
    let known_score = match scorer {
        Scorer::MaxSoftmax => softmax_k(&d)?.into_iter().fold(0.0, f64::max),
        Scorer::MaxDistance => d.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Scorer::PReal => return Err(Error::arg("p(real) scoring needs a logit-mode classifier")),
    };
    Ok(ScoredSample {
        known_score,
        predicted_label: argmax(&d) + 1,
        anticipated_label: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolCounts {
    pub lab_train: usize,
    pub unlab_train: usize,
    pub test_known: usize,
    pub test_novel: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub model_kind: ModelKind,
    pub scorer: Scorer,
    pub k: usize,
    pub seed: u64,
    pub step: u64,
    /// Fraction of known test samples assigned their category; absent without known samples.
    pub closed_accuracy: Option<f64>,
    /// Known is the positive class; absent when the test pool has no novels.
    pub auroc: Option<f64>,
    pub roc_points: Vec<(f64, f64)>,
    pub counts: PoolCounts,
}

impl EvalReport {
    /// The `acc | auroc` cell, both as percentages.
    pub fn table_cell(&self) -> String {
        table_cell(self.closed_accuracy, self.auroc)
    }
}

/// `NN.NN | NN.NN`, with `-` for an absent value.
pub fn table_cell(accuracy: Option<f64>, auroc: Option<f64>) -> String {
    let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{:.2}", 100.0 * x));
    format!("{} | {}", f(accuracy), f(auroc))
}

const EVAL_CHUNK: usize = 512;

/// Score every test sample of `split` with the trained classifier.
pub fn score_split(state: &TrainState, split: &OpenSetSplit, scorer: Scorer) -> Result<Vec<ScoredSample>> {
    let kind = state.model_kind();
    if !scorer.supports(kind) {
        return Err(Error::arg(format!("scorer {scorer} does not apply to {kind}")));
    }
    if split.k() != state.k() {
        return Err(Error::arg(format!(
            "split has {} categories, model has {}",
            split.k(),
            state.k()
        )));
    }
    let clf = state.classifier()?;
    let params = state.params(CLASSIFIER)?;
    let rp = if kind.uses_points() {
        Some(state.reciprocal_points()?)
    } else {
        None
    };
    let x = split.test_samples();
    if x.ncols() != clf.body.in_width {
        return Err(Error::arg("test samples do not fit the classifier input"));
    }
    let mut out = Vec::with_capacity(x.nrows());
    let mut start = 0;
    while start < x.nrows() {
        let end = (start + EVAL_CHUNK).min(x.nrows());
        let chunk: Array2<f64> = x.slice(s![start..end, ..]).to_owned();
        let ro = clf.forward(params, &chunk)?;
        match &rp {
            Some(rp) => {
                for e in ro.embedding()?.rows() {
                    out.push(score_arp(&e.to_vec(), rp, scorer)?);
                }
            }
            None => out.extend(score_fm(&ro, scorer)?),
        }
        start = end;
    }
    Ok(out)
}

/// Closed-set accuracy over known test samples and AUROC of known vs novel scores.
pub fn evaluate(state: &TrainState, split: &OpenSetSplit, scorer: Option<Scorer>) -> Result<EvalReport> {
    let scorer = scorer.unwrap_or_else(|| Scorer::default_for(state.model_kind()));
    let mut scored = score_split(state, split, scorer)?;
    let k = split.k();
    for (s, &y) in scored.iter_mut().zip(split.test_anticipated_labels()) {
        s.anticipated_label = Some(y);
    }
    let (mut known, mut novel, mut correct) = (Vec::new(), Vec::new(), 0usize);
    for s in &scored {
        match s.anticipated_label {
            Some(y) if y <= k => {
                known.push(s.known_score);
                correct += usize::from(s.predicted_label == y);
            }
            _ => novel.push(s.known_score),
        }
    }
    let closed_accuracy = (!known.is_empty()).then(|| correct as f64 / known.len() as f64);
    let (auroc_value, roc_points) = if known.is_empty() || novel.is_empty() {
        (None, Vec::new())
    } else {
        let a = auroc(&known, &novel)?;
        (Some(a.value), a.roc_points)
    };
    Ok(EvalReport {
        model_kind: state.model_kind(),
        scorer,
        k,
        seed: state.config().seed,
        step: state.step(),
        closed_accuracy,
        auroc: auroc_value,
        roc_points,
        counts: PoolCounts {
            lab_train: split.lab_labels().len(),
            unlab_train: split.unlab_len(),
            test_known: known.len(),
            test_novel: novel.len(),
        },
    })
}

/// One flat metrics line for table assembly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub model_kind: ModelKind,
    pub dataset: String,
    pub labels_per_category: usize,
    pub seed: u64,
    pub accuracy: Option<f64>,
    pub auroc: Option<f64>,
}

impl MetricsRow {
    pub const HEADER: &'static str = "run_id,model_kind,dataset,labels_per_category,seed,accuracy,auroc";

    pub fn to_csv(&self) -> String {
        let f = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.17e}"));
        format!(
            "{},{},{},{},{},{},{}",
            self.run_id,
            self.model_kind,
            self.dataset,
            self.labels_per_category,
            self.seed,
            f(self.accuracy),
            f(self.auroc)
        )
    }

    pub fn from_csv(line: &str) -> Result<Self> {
        let parts: Vec<&str> = line.trim_end().split(',').collect();
        if parts.len() != 7 {
            return Err(Error::arg(format!("metrics row needs 7 fields: {line:?}")));
        }
        let num = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| Error::arg(format!("bad number {s:?}")))
            }
        };
        Ok(MetricsRow {
            run_id: parts[0].to_string(),
            model_kind: parts[1].parse()?,
            dataset: parts[2].to_string(),
            labels_per_category: parts[3]
                .parse()
                .map_err(|_| Error::arg("bad labels_per_category"))?,
            seed: parts[4].parse().map_err(|_| Error::arg("bad seed"))?,
            accuracy: num(parts[5])?,
            auroc: num(parts[6])?,
        })
    }
}
