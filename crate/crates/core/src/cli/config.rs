use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    gen_synth2d, load_many, make_ssl_split, DataFormat, Dataset, OpenSetSplit, SplitManifest,
    SplitParams, SplitSources, Synth2DSpec,
};
use crate::error::{Error, Result};
use crate::nets::ArchConfig;
use crate::training::{ModelKind, TrainConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// Relative dataset paths resolve against this directory when it is set.
pub const DATA_ROOT_ENV: &str = "SSLOSR_DATA_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Gaussian clusters; trial seed `s` draws train from `2s` and test from `2s + 1`.
    Synth2d {
        cluster_centers: Vec<[f64; 2]>,
        cluster_stddevs: Vec<f64>,
        train_samples_per_cluster: usize,
        test_samples_per_cluster: usize,
        novel_cluster_indices: Vec<usize>,
    },
    Files {
        format: DataFormat,
        train: Vec<PathBuf>,
        #[serde(default)]
        test: Vec<PathBuf>,
        #[serde(default)]
        novel: Vec<PathBuf>,
        #[serde(default)]
        novel_format: Option<DataFormat>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub labels_per_category: usize,
    #[serde(default)]
    pub holdout_categories: Option<Vec<usize>>,
    #[serde(default)]
    pub max_unlabelled: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    /// `[x_min, x_max, y_min, y_max]`.
    pub bounds: [f64; 4],
    pub resolution: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitSpec {
    #[serde(default)]
    pub sample_grid: Option<GridSpec>,
    #[serde(default)]
    pub score_map: Option<MapSpec>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Defaults to `runs/<name>`.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Models trained on every trial's split; defaults to `train.model_kind`.
    #[serde(default)]
    pub models: Option<Vec<ModelKind>>,
    pub dataset: DatasetSpec,
    pub split: SplitSpec,
    /// Training settings in `TrainConfig` form. `model_kind`, `seed` and
    /// `arch` may be omitted; `arch` then defaults to the dataset's shape.
    #[serde(default)]
    pub train: toml::Table,
    #[serde(default)]
    pub emit: EmitSpec,
}

/// A loaded dataset triple, before splitting.
#[derive(Debug, Clone)]
pub struct Sources {
    pub train: Dataset,
    pub test: Option<Dataset>,
    pub novel: Option<Dataset>,
}

impl Sources {
    pub fn as_split_sources(&self) -> SplitSources<'_> {
        SplitSources {
            train: &self.train,
            test: self.test.as_ref(),
            novel: self.novel.as_ref(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate_static()?;
        Ok(cfg)
    }

    /// Parse a config file; relative dataset paths resolve against
    /// `$SSLOSR_DATA_ROOT`, or else the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let root = match std::env::var_os(DATA_ROOT_ENV) {
            Some(r) => PathBuf::from(r),
            None => path.parent().map(Path::to_path_buf).unwrap_or_default(),
        };
        cfg.resolve_paths(&root);
        cfg.check_paths()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, root: &Path) {
        if let DatasetSpec::Files {
            train, test, novel, ..
        } = &mut self.dataset
        {
            for p in train.iter_mut().chain(test.iter_mut()).chain(novel.iter_mut()) {
                if p.is_relative() {
                    *p = root.join(&*p);
                }
            }
        }
    }

    pub fn check_paths(&self) -> Result<()> {
        if let DatasetSpec::Files {
            train, test, novel, ..
        } = &self.dataset
        {
            if let Some(p) = train.iter().chain(test).chain(novel).find(|p| !p.exists()) {
                return Err(Error::Config(format!("dataset file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    fn validate_static(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be positive".into()));
        }
        if self.split.labels_per_category == 0 {
            return Err(Error::Config("labels_per_category must be positive".into()));
        }
        match &self.dataset {
            DatasetSpec::Synth2d {
                cluster_centers,
                cluster_stddevs,
                train_samples_per_cluster,
                test_samples_per_cluster,
                novel_cluster_indices,
            } => {
                let spec = Synth2DSpec {
                    cluster_centers: cluster_centers.clone(),
                    cluster_stddevs: cluster_stddevs.clone(),
                    samples_per_cluster: *train_samples_per_cluster,
                    novel_cluster_indices: novel_cluster_indices.clone(),
                };
                spec.validate().map_err(|e| Error::Config(e.to_string()))?;
                if *train_samples_per_cluster == 0 || *test_samples_per_cluster == 0 {
                    return Err(Error::Config("synthetic sample counts must be positive".into()));
                }
            }
            DatasetSpec::Files { train, novel, .. } => {
                if train.is_empty() {
                    return Err(Error::Config("dataset.train lists no files".into()));
                }
                if novel.is_empty() == self.split.holdout_categories.is_none() {
                    return Err(Error::Config(
                        "give exactly one of dataset.novel or split.holdout_categories".into(),
                    ));
                }
            }
        }
        // Catch typos in the training table before any data is touched.
        for kind in self.model_kinds()? {
            self.train_config(kind, ArchConfig::synth2d(2), 0)?;
        }
        Ok(())
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output
            .clone()
            .unwrap_or_else(|| PathBuf::from("runs").join(&self.name))
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.base_seed + trial as u64
    }

    pub fn model_kinds(&self) -> Result<Vec<ModelKind>> {
        if let Some(m) = &self.models {
            if m.is_empty() {
                return Err(Error::Config("models list is empty".into()));
            }
            return Ok(m.clone());
        }
        match self.train.get("model_kind") {
            Some(v) => {
                let kind = v
                    .as_str()
                    .ok_or_else(|| Error::Config("train.model_kind must be a string".into()))?;
                Ok(vec![kind.parse().map_err(|e: Error| Error::Config(e.to_string()))?])
            }
            None => Err(Error::Config("set `models` or `train.model_kind`".into())),
        }
    }

    /// The training configuration for one model and trial seed. `default_arch`
    /// applies only when the table has no `arch`.
    pub fn train_config(&self, kind: ModelKind, default_arch: ArchConfig, seed: u64) -> Result<TrainConfig> {
        let mut table = self.train.clone();
        table.insert("model_kind".into(), kind.as_str().into());
        table.insert("seed".into(), toml::Value::Integer(seed as i64));
        if !table.contains_key("arch") {
            let arch = toml::Value::try_from(&default_arch).map_err(|e| Error::Config(e.to_string()))?;
            table.insert("arch".into(), arch);
        }
        table.entry("epochs").or_insert(toml::Value::Integer(1));
        let cfg: TrainConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("train: {e}")))?;
        cfg.validate().map_err(|e| Error::Config(format!("train: {e}")))?;
        Ok(cfg)
    }

    /// Default architecture for a split: small dense nets for 2D inputs,
    /// conv nets for `[C, H, W]` images.
    pub fn default_arch(split: &OpenSetSplit) -> ArchConfig {
        let shape = split.sample_shape().to_vec();
        if shape.len() == 3 {
            ArchConfig::image(shape, split.k())
        } else {
            let mut a = ArchConfig::synth2d(split.k());
            a.input_shape = shape;
            a
        }
    }

    pub fn dataset_name(&self) -> String {
        match &self.dataset {
            DatasetSpec::Synth2d { .. } => "synth2d".into(),
            DatasetSpec::Files { train, .. } => train
                .first()
                .and_then(|p| p.file_name())
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
        }
    }

    /// Load or draw the datasets for one trial seed.
    pub fn sources(&self, seed: u64) -> Result<Sources> {
        match &self.dataset {
            DatasetSpec::Synth2d {
                cluster_centers,
                cluster_stddevs,
                train_samples_per_cluster,
                test_samples_per_cluster,
                novel_cluster_indices,
            } => {
                let mut spec = Synth2DSpec {
                    cluster_centers: cluster_centers.clone(),
                    cluster_stddevs: cluster_stddevs.clone(),
                    samples_per_cluster: *train_samples_per_cluster,
                    novel_cluster_indices: novel_cluster_indices.clone(),
                };
                let (train, _) = gen_synth2d(&spec, 2 * seed)?;
                spec.samples_per_cluster = *test_samples_per_cluster;
                let (test, novel) = gen_synth2d(&spec, 2 * seed + 1)?;
                let novel = self.split.holdout_categories.is_none().then_some(novel);
                Ok(Sources {
                    train,
                    test: Some(test),
                    novel,
                })
            }
            DatasetSpec::Files {
                format,
                train,
                test,
                novel,
                novel_format,
            } => Ok(Sources {
                train: load_many(train, *format)?,
                test: (!test.is_empty()).then(|| load_many(test, *format)).transpose()?,
                novel: (!novel.is_empty())
                    .then(|| load_many(novel, novel_format.unwrap_or(*format)))
                    .transpose()?,
            }),
        }
    }

    pub fn split_params(&self, seed: u64) -> SplitParams {
        SplitParams {
            labels_per_category: self.split.labels_per_category,
            holdout_categories: self.split.holdout_categories.clone(),
            max_unlabelled: self.split.max_unlabelled,
            seed,
        }
    }

    pub fn make_split(&self, sources: &Sources, seed: u64) -> Result<OpenSetSplit> {
        make_ssl_split(sources.as_split_sources(), &self.split_params(seed))
    }

    /// Rebuild a split from a manifest, regenerating synthetic data from its seed.
    pub fn split_from_manifest(&self, manifest: SplitManifest) -> Result<OpenSetSplit> {
        let sources = self.sources(manifest.seed)?;
        OpenSetSplit::from_manifest(manifest, sources.as_split_sources())
    }
}
