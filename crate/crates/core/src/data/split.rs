use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adapt_samples, gather_rows, Dataset};
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

/// Where the open test set's novel samples come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum NoveltyMode {
    /// Novels are an entire second dataset appended to the test set.
    CrossDataset,
    /// Novels are categories of the labelled source removed from training.
    Holdout { categories: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestSource {
    Train,
    Test,
    Novel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitParams {
    pub labels_per_category: usize,
    #[serde(default)]
    pub holdout_categories: Option<Vec<usize>>,
    /// Optional cap on the unlabelled pool, drawn uniformly.
    #[serde(default)]
    pub max_unlabelled: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct SplitSources<'a> {
    pub train: &'a Dataset,
    pub test: Option<&'a Dataset>,
    pub novel: Option<&'a Dataset>,
}

/// Sample indices per pool; enough to rebuild a split exactly from its sources.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitManifest {
    pub version: u32,
    pub seed: u64,
    pub k: usize,
    pub labels_per_category: usize,
    pub mode: NoveltyMode,
    /// Source labels of the labelled categories; position + 1 is the split label.
    pub category_map: Vec<usize>,
    pub lab_train: Vec<usize>,
    pub unlab_train: Vec<usize>,
    pub test_known_source: TestSource,
    pub test_known: Vec<usize>,
    pub test_novel_source: TestSource,
    pub test_novel: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AccessCounts {
    pub unlab_samples: usize,
    pub unlab_labels: usize,
    pub test_samples: usize,
    pub test_labels: usize,
}

/// Labelled train, unlabelled train and open test pools.
///
/// Pools other than the labelled one are reached through counting accessors so
/// that callers can assert what a trainer touched.
#[derive(Debug)]
pub struct OpenSetSplit {
    manifest: SplitManifest,
    sample_shape: Vec<usize>,
    lab_x: Array2<f64>,
    lab_y: Vec<usize>,
    unlab_x: Array2<f64>,
    unlab_y: Vec<usize>,
    test_x: Array2<f64>,
    test_y: Vec<usize>,
    unlab_sample_reads: AtomicUsize,
    unlab_label_reads: AtomicUsize,
    test_sample_reads: AtomicUsize,
    test_label_reads: AtomicUsize,
}

fn pick<'a>(sources: &SplitSources<'a>, src: TestSource) -> Result<&'a Dataset> {
    match src {
        TestSource::Train => Ok(sources.train),
        TestSource::Test => sources
            .test
            .ok_or_else(|| Error::arg("split references a test source that was not supplied")),
        TestSource::Novel => sources
            .novel
            .ok_or_else(|| Error::arg("split references a novel source that was not supplied")),
    }
}

pub fn make_ssl_split(sources: SplitSources<'_>, params: &SplitParams) -> Result<OpenSetSplit> {
    let train = sources.train;
    let holdout = params.holdout_categories.clone();
    let mode = match (&holdout, sources.novel) {
        (Some(_), Some(_)) | (None, None) => {
            return Err(Error::arg(
                "exactly one of a novel source or holdout categories must be given",
            ))
        }
        (Some(h), None) => {
            let k_total = train.num_categories();
            if let Some(bad) = h.iter().find(|&&c| c == 0 || c > k_total) {
                return Err(Error::arg(format!("holdout category {bad} outside 1..={k_total}")));
            }
            let mut cats = h.clone();
            cats.sort_unstable();
            cats.dedup();
            NoveltyMode::Holdout { categories: cats }
        }
        (None, Some(_)) => NoveltyMode::CrossDataset,
    };
    let held: &[usize] = match &mode {
        NoveltyMode::Holdout { categories } => categories,
        NoveltyMode::CrossDataset => &[],
    };
    let category_map: Vec<usize> = (1..=train.num_categories())
        .filter(|c| !held.contains(c))
        .collect();
    let k = category_map.len();
    if k < 2 {
        return Err(Error::arg(format!("split leaves K = {k}; at least 2 labelled categories required")));
    }
    if let Some(test) = sources.test {
        if test.category_names() != train.category_names() {
            return Err(Error::arg("test source categories differ from the training source"));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut lab = Vec::with_capacity(k * params.labels_per_category);
    let mut unlab = Vec::new();
    for &c in &category_map {
        let mut idx = train.indices_of(c);
        if params.labels_per_category > idx.len() {
            return Err(Error::arg(format!(
                "labels_per_category {} exceeds the {} samples of category {c}",
                params.labels_per_category,
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        lab.extend_from_slice(&idx[..params.labels_per_category]);
        unlab.extend_from_slice(&idx[params.labels_per_category..]);
    }
    if let Some(cap) = params.max_unlabelled {
        if cap < unlab.len() {
            unlab.sort_unstable();
            unlab.shuffle(&mut rng);
            unlab.truncate(cap);
        }
    }
    lab.sort_unstable();
    unlab.sort_unstable();

    let (test_known_source, test_known) = match sources.test {
        Some(test) => (
            TestSource::Test,
            (0..test.len())
                .filter(|&i| !held.contains(&test.labels()[i]))
                .collect(),
        ),
        None => (TestSource::Train, Vec::new()),
    };
    let (test_novel_source, test_novel): (TestSource, Vec<usize>) = match (&mode, sources.novel) {
        (NoveltyMode::CrossDataset, Some(novel)) => (TestSource::Novel, (0..novel.len()).collect()),
        _ => {
            // Held-out categories: prefer the test portion when one exists.
            let (src, ds) = match sources.test {
                Some(t) => (TestSource::Test, t),
                None => (TestSource::Train, train),
            };
            (
                src,
                (0..ds.len()).filter(|&i| held.contains(&ds.labels()[i])).collect(),
            )
        }
    };
    if test_novel.is_empty() {
        return Err(Error::arg("open test set would contain no novel samples"));
    }

    let manifest = SplitManifest {
        version: MANIFEST_VERSION,
        seed: params.seed,
        k,
        labels_per_category: params.labels_per_category,
        mode,
        category_map,
        lab_train: lab,
        unlab_train: unlab,
        test_known_source,
        test_known,
        test_novel_source,
        test_novel,
    };
    OpenSetSplit::from_manifest(manifest, sources)
}

impl OpenSetSplit {
    /// Rebuild a split from its manifest and the same sources it was made from.
    pub fn from_manifest(manifest: SplitManifest, sources: SplitSources<'_>) -> Result<Self> {
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::Integrity(format!(
                "split manifest version {} unsupported (expected {MANIFEST_VERSION})",
                manifest.version
            )));
        }
        let train = sources.train;
        if manifest.k != manifest.category_map.len() || manifest.k < 2 {
            return Err(Error::Integrity("manifest K disagrees with its category map".into()));
        }
        let relabel = |source_label: usize| -> Option<usize> {
            manifest
                .category_map
                .iter()
                .position(|&c| c == source_label)
                .map(|p| p + 1)
        };
        let check = |ds: &Dataset, idx: &[usize], pool: &str| -> Result<()> {
            match idx.iter().find(|&&i| i >= ds.len()) {
                Some(i) => Err(Error::Integrity(format!(
                    "{pool} index {i} out of range for {} samples",
                    ds.len()
                ))),
                None => Ok(()),
            }
        };
        check(train, &manifest.lab_train, "lab_train")?;
        check(train, &manifest.unlab_train, "unlab_train")?;

        let relabel_pool = |ds: &Dataset, idx: &[usize], pool: &str| -> Result<Vec<usize>> {
            idx.iter()
                .map(|&i| {
                    relabel(ds.labels()[i]).ok_or_else(|| {
                        Error::Integrity(format!(
                            "{pool} sample {i} has category {} which is not labelled in this split",
                            ds.labels()[i]
                        ))
                    })
                })
                .collect()
        };
        let lab_y = relabel_pool(train, &manifest.lab_train, "lab_train")?;
        let unlab_y = relabel_pool(train, &manifest.unlab_train, "unlab_train")?;
        let mut counts = vec![0usize; manifest.k];
        for &y in &lab_y {
            counts[y - 1] += 1;
        }
        if counts.iter().any(|&c| c != manifest.labels_per_category) {
            return Err(Error::Integrity(format!(
                "lab_train per-category counts {counts:?} != {}",
                manifest.labels_per_category
            )));
        }
        let mut sorted_lab = manifest.lab_train.clone();
        sorted_lab.sort_unstable();
        if manifest
            .unlab_train
            .iter()
            .any(|i| sorted_lab.binary_search(i).is_ok())
        {
            return Err(Error::Integrity("lab_train and unlab_train overlap".into()));
        }

        let known_src = pick(&sources, manifest.test_known_source)?;
        check(known_src, &manifest.test_known, "test_known")?;
        let novel_src = pick(&sources, manifest.test_novel_source)?;
        check(novel_src, &manifest.test_novel, "test_novel")?;
        let mut test_y = relabel_pool(known_src, &manifest.test_known, "test_known")?;
        if matches!(manifest.test_novel_source, TestSource::Train | TestSource::Test) {
            if let Some(i) = manifest
                .test_novel
                .iter()
                .find(|&&i| relabel(novel_src.labels()[i]).is_some())
            {
                return Err(Error::Integrity(format!(
                    "novel test sample {i} belongs to a labelled category"
                )));
            }
        }
        test_y.extend(std::iter::repeat_n(manifest.k + 1, manifest.test_novel.len()));

        let shape = train.sample_shape.clone();
        let known_x = adapt_samples(
            &gather_rows(known_src.samples(), &manifest.test_known),
            &known_src.sample_shape,
            &shape,
        )?;
        let novel_x = adapt_samples(
            &gather_rows(novel_src.samples(), &manifest.test_novel),
            &novel_src.sample_shape,
            &shape,
        )?;
        let test_x = concatenate(Axis(0), &[known_x.view(), novel_x.view()])
            .map_err(|e| Error::arg(format!("test assembly: {e}")))?;

        Ok(OpenSetSplit {
            lab_x: train.gather(&manifest.lab_train),
            unlab_x: train.gather(&manifest.unlab_train),
            manifest,
            sample_shape: shape,
            lab_y,
            unlab_y,
            test_x,
            test_y,
            unlab_sample_reads: AtomicUsize::new(0),
            unlab_label_reads: AtomicUsize::new(0),
            test_sample_reads: AtomicUsize::new(0),
            test_label_reads: AtomicUsize::new(0),
        })
    }

    pub fn manifest(&self) -> &SplitManifest {
        &self.manifest
    }

    /// Number of labelled categories.
    pub fn k(&self) -> usize {
        self.manifest.k
    }

    pub fn seed(&self) -> u64 {
        self.manifest.seed
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    pub fn lab_samples(&self) -> &Array2<f64> {
        &self.lab_x
    }

    pub fn lab_labels(&self) -> &[usize] {
        &self.lab_y
    }

    pub fn unlab_len(&self) -> usize {
        self.unlab_y.len()
    }

    pub fn test_len(&self) -> usize {
        self.test_y.len()
    }

    pub fn unlab_samples(&self) -> &Array2<f64> {
        self.unlab_sample_reads.fetch_add(1, Ordering::Relaxed);
        &self.unlab_x
    }

    /// Hidden anticipated labels of the unlabelled pool (for bookkeeping checks only).
    pub fn unlab_hidden_labels(&self) -> &[usize] {
        self.unlab_label_reads.fetch_add(1, Ordering::Relaxed);
        &self.unlab_y
    }

    pub fn test_samples(&self) -> &Array2<f64> {
        self.test_sample_reads.fetch_add(1, Ordering::Relaxed);
        &self.test_x
    }

    /// Anticipated test labels in 1..=K+1, where K+1 marks a novel sample.
    pub fn test_anticipated_labels(&self) -> &[usize] {
        self.test_label_reads.fetch_add(1, Ordering::Relaxed);
        &self.test_y
    }

    pub fn access_counts(&self) -> AccessCounts {
        AccessCounts {
            unlab_samples: self.unlab_sample_reads.load(Ordering::Relaxed),
            unlab_labels: self.unlab_label_reads.load(Ordering::Relaxed),
            test_samples: self.test_sample_reads.load(Ordering::Relaxed),
            test_labels: self.test_label_reads.load(Ordering::Relaxed),
        }
    }

    pub fn reset_access_counts(&self) {
        for c in [
            &self.unlab_sample_reads,
            &self.unlab_label_reads,
            &self.test_sample_reads,
            &self.test_label_reads,
        ] {
            c.store(0, Ordering::Relaxed);
        }
    }
}
