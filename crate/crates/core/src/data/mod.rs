//! Dataset ingestion, open-set split construction and the synthetic 2D domain.

mod formats;
pub mod rawtensor;
mod split;
mod synth;

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub use formats::{adapt_samples, load_dataset, load_idx_pair, load_many, write_raw_dataset, DataFormat};
pub use split::{
    make_ssl_split, AccessCounts, NoveltyMode, OpenSetSplit, SplitManifest, SplitParams,
    SplitSources, TestSource, MANIFEST_VERSION,
};
pub use synth::{gen_synth2d, Synth2DSpec};

/// A labelled collection of equally-shaped samples.
///
/// Samples are stored flattened, one row per sample, in row-major order of
/// `sample_shape`. Labels are 1-based category indices into `category_names`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub sample_shape: Vec<usize>,
    samples: Array2<f64>,
    labels: Vec<usize>,
    category_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        sample_shape: Vec<usize>,
        samples: Array2<f64>,
        labels: Vec<usize>,
        category_names: Vec<String>,
    ) -> Result<Self> {
        let width: usize = sample_shape.iter().product();
        if samples.ncols() != width {
            return Err(Error::arg(format!(
                "samples have width {} but shape {:?} needs {}",
                samples.ncols(),
                sample_shape,
                width
            )));
        }
        if samples.nrows() != labels.len() {
            return Err(Error::arg(format!(
                "{} samples but {} labels",
                samples.nrows(),
                labels.len()
            )));
        }
        let k = category_names.len();
        if let Some(bad) = labels.iter().find(|&&l| l == 0 || l > k) {
            return Err(Error::arg(format!("label {bad} outside 1..={k}")));
        }
        Ok(Dataset {
            name: name.into(),
            sample_shape,
            samples,
            labels,
            category_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> ArrayView1<'_, f64> {
        self.samples.row(i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn category_names(&self) -> &[String] {
        &self.category_names
    }

    /// Number of categories `K_total`.
    pub fn num_categories(&self) -> usize {
        self.category_names.len()
    }

    pub fn sample_width(&self) -> usize {
        self.samples.ncols()
    }

    /// Indices of every sample with the given label, ascending.
    pub fn indices_of(&self, label: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == label).then_some(i))
            .collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_categories()];
        for &l in &self.labels {
            counts[l - 1] += 1;
        }
        counts
    }

    /// Concatenate datasets that share a shape and category list.
    pub fn concat(name: impl Into<String>, parts: &[Dataset]) -> Result<Dataset> {
        let first = parts
            .first()
            .ok_or_else(|| Error::arg("cannot concatenate zero datasets"))?;
        for p in parts {
            if p.sample_shape != first.sample_shape {
                return Err(Error::arg(format!(
                    "shape mismatch {:?} vs {:?}",
                    p.sample_shape, first.sample_shape
                )));
            }
        }
        // Union of category names keeps labels consistent across files.
        let mut names: Vec<String> = parts
            .iter()
            .flat_map(|p| p.category_names.iter().cloned())
            .collect();
        sort_category_names(&mut names);
        names.dedup();
        let total: usize = parts.iter().map(Dataset::len).sum();
        let mut samples = Array2::zeros((total, first.sample_width()));
        let mut labels = Vec::with_capacity(total);
        let mut row = 0;
        for p in parts {
            for (i, &l) in p.labels.iter().enumerate() {
                samples.row_mut(row).assign(&p.samples.row(i));
                let name = &p.category_names[l - 1];
                labels.push(names.iter().position(|n| n == name).unwrap() + 1);
                row += 1;
            }
        }
        Dataset::new(name, first.sample_shape.clone(), samples, labels, names)
    }

    /// Rows gathered by index into a new matrix.
    pub fn gather(&self, indices: &[usize]) -> Array2<f64> {
        gather_rows(&self.samples, indices)
    }
}

/// Numeric names sort numerically, everything else lexically.
pub(crate) fn sort_category_names(names: &mut [String]) {
    names.sort_by(|a, b| match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    });
}

pub(crate) fn gather_rows(m: &Array2<f64>, indices: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((indices.len(), m.ncols()));
    for (r, &i) in indices.iter().enumerate() {
        out.row_mut(r).assign(&m.row(i));
    }
    out
}

/// Deterministic permutation of `0..n` for one epoch.
///
/// Each epoch draws from its own ChaCha stream of the seeded generator, so
/// any epoch can be reproduced without replaying the ones before it.
pub fn epoch_permutation(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    perm
}

/// Shuffled index batches over a pool of `n` samples; the last batch may be short.
pub fn batch_iter(
    n: usize,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<impl Iterator<Item = Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::arg("batch_size must be at least 1"));
    }
    let perm = epoch_permutation(n, seed, epoch);
    let batches: Vec<Vec<usize>> = perm.chunks(batch_size).map(<[usize]>::to_vec).collect();
    Ok(batches.into_iter())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_sizes_include_short_tail() {
        let sizes: Vec<usize> = batch_iter(10, 4, 1, 0).unwrap().map(|b| b.len()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
    }

    #[test]
    fn batches_cover_pool_once() {
        let mut all: Vec<usize> = batch_iter(37, 5, 9, 3).unwrap().flatten().collect();
        all.sort_unstable();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
    }

    #[test]
    fn same_seed_epoch_same_order() {
        let a: Vec<_> = batch_iter(50, 7, 42, 2).unwrap().collect();
        let b: Vec<_> = batch_iter(50, 7, 42, 2).unwrap().collect();
        assert_eq!(a, b);
    }

    #[test]
    fn epochs_reshuffle() {
        assert_ne!(epoch_permutation(100, 42, 0), epoch_permutation(100, 42, 1));
    }

    #[test]
    fn empty_pool_yields_nothing() {
        assert_eq!(batch_iter(0, 4, 0, 0).unwrap().count(), 0);
    }

    #[test]
    fn zero_batch_rejected() {
        assert!(batch_iter(4, 0, 0, 0).is_err());
    }

    #[test]
    fn dataset_rejects_bad_labels() {
        let s = Array2::zeros((2, 2));
        assert!(Dataset::new("x", vec![2], s.clone(), vec![1, 3], vec!["a".into(), "b".into()]).is_err());
        assert!(Dataset::new("x", vec![2], s.clone(), vec![1], vec!["a".into()]).is_err());
        assert!(Dataset::new("x", vec![3], s, vec![1, 1], vec!["a".into()]).is_err());
    }
}
