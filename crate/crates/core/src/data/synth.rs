use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// A mixture of isotropic 2D Gaussians, some of which are withheld as novel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Synth2DSpec {
    pub cluster_centers: Vec<[f64; 2]>,
    /// One standard deviation per cluster, or a single value shared by all.
    pub cluster_stddevs: Vec<f64>,
    pub samples_per_cluster: usize,
    /// 1-based cluster indices returned in the novel dataset.
    #[serde(default)]
    pub novel_cluster_indices: Vec<usize>,
}

impl Synth2DSpec {
    fn stddev(&self, cluster: usize) -> f64 {
        if self.cluster_stddevs.len() == 1 {
            self.cluster_stddevs[0]
        } else {
            self.cluster_stddevs[cluster]
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.cluster_centers.len();
        if self.cluster_stddevs.len() != n && self.cluster_stddevs.len() != 1 {
            return Err(Error::arg(format!(
                "{} stddevs for {n} clusters",
                self.cluster_stddevs.len()
            )));
        }
        if self.cluster_stddevs.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::arg("cluster stddevs must be finite and non-negative"));
        }
        if self.cluster_centers.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::arg("cluster centers must be finite"));
        }
        for &i in &self.novel_cluster_indices {
            if i == 0 || i > n {
                return Err(Error::arg(format!("novel cluster index {i} outside 1..={n}")));
            }
        }
        if self.labelled_clusters().len() < 2 {
            return Err(Error::arg("at least two labelled clusters must remain"));
        }
        Ok(())
    }

    /// 0-based indices of the clusters that keep labels, in order.
    pub fn labelled_clusters(&self) -> Vec<usize> {
        (0..self.cluster_centers.len())
            .filter(|i| !self.novel_cluster_indices.contains(&(i + 1)))
            .collect()
    }

    /// 0-based indices of withheld clusters, ascending.
    pub fn novel_clusters(&self) -> Vec<usize> {
        (0..self.cluster_centers.len())
            .filter(|i| self.novel_cluster_indices.contains(&(i + 1)))
            .collect()
    }
}

fn sample_clusters(
    spec: &Synth2DSpec,
    clusters: &[usize],
    rng: &mut ChaCha8Rng,
    name: &str,
) -> Result<Dataset> {
    let per = spec.samples_per_cluster;
    let mut samples = Array2::zeros((clusters.len() * per, 2));
    let mut labels = Vec::with_capacity(clusters.len() * per);
    let mut names = Vec::with_capacity(clusters.len());
    for (k, &c) in clusters.iter().enumerate() {
        let center = spec.cluster_centers[c];
        let sd = spec.stddev(c);
        names.push(format!("cluster-{}", c + 1));
        for i in 0..per {
            let row = k * per + i;
            for (d, &mu) in center.iter().enumerate() {
                let z: f64 = StandardNormal.sample(rng);
                samples[[row, d]] = mu + sd * z;
            }
            labels.push(k + 1);
        }
    }
    Dataset::new(name, vec![2], samples, labels, names)
}

/// Draw the labelled-domain dataset (labels 1..K over the kept clusters) and
/// the novel dataset (one category per withheld cluster).
pub fn gen_synth2d(spec: &Synth2DSpec, seed: u64) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let known = sample_clusters(spec, &spec.labelled_clusters(), &mut rng, "synth2d")?;
    let novel = sample_clusters(spec, &spec.novel_clusters(), &mut rng, "synth2d-novel")?;
    Ok((known, novel))
}
