//! The four training procedures: softmax and reciprocal-point baselines,
//! the feature-matching GAN and the three-player reciprocal-point GAN.
//!
//! Every step draws a [`FrozenBatch`] and then lets each player descend its
//! own objective in a fixed order. Pool batches depend only on
//! `(seed, pool, step)` and noise comes from the state's own generator, so a
//! restored checkpoint continues exactly like an uninterrupted run.

mod adam;
mod checkpoint;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::OpenSetSplit;
use crate::error::{Error, Result};
use crate::losses::{
    arp_classifier_loss, arp_gan_c_loss_weighted, arp_gan_d_loss, arp_gan_g_loss_weighted, cross_entropy,
    fm_dc_loss, fm_gen_loss, FeatureMatching, LossValue,
};
use crate::nets::{
    init_params, sample_noise, ArchConfig, Classifier, ClassifierMode, Discriminator, Generator,
    ParamKind, ParamSet, ReciprocalPointSet, DEFAULT_GAMMA,
};

pub use adam::{Adam, AdamHyper};
pub use checkpoint::{checkpoint, restore, restore_for, CHECKPOINT_VERSION};

pub const CLASSIFIER: &str = "classifier";
pub const POINTS: &str = "points";
pub const GENERATOR: &str = "generator";
pub const DISCRIMINATOR: &str = "discriminator";

const NOISE_STREAM: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Softmax,
    Arp,
    FmGan,
    ArpGan,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Softmax,
        ModelKind::Arp,
        ModelKind::FmGan,
        ModelKind::ArpGan,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Softmax => "softmax",
            ModelKind::Arp => "arp",
            ModelKind::FmGan => "fm-gan",
            ModelKind::ArpGan => "arp-gan",
        }
    }

    pub fn classifier_mode(self) -> ClassifierMode {
        match self {
            ModelKind::Softmax | ModelKind::FmGan => ClassifierMode::Logits,
            ModelKind::Arp | ModelKind::ArpGan => ClassifierMode::Embedding,
        }
    }

    pub fn uses_points(self) -> bool {
        self.classifier_mode() == ClassifierMode::Embedding
    }

    pub fn is_gan(self) -> bool {
        matches!(self, ModelKind::FmGan | ModelKind::ArpGan)
    }

    /// Players in the order they step.
    pub fn players(self) -> &'static [Player] {
        match self {
            ModelKind::Softmax | ModelKind::Arp => &[Player::Classifier],
            ModelKind::FmGan => &[Player::Classifier, Player::Generator],
            ModelKind::ArpGan => &[Player::Discriminator, Player::Generator, Player::Classifier],
        }
    }

    /// Parameter groups owned by the model.
    pub fn groups(self) -> Vec<&'static str> {
        let mut g = vec![CLASSIFIER];
        if self.uses_points() {
            g.push(POINTS);
        }
        if self.is_gan() {
            g.push(GENERATOR);
        }
        if self == ModelKind::ArpGan {
            g.push(DISCRIMINATOR);
        }
        g
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::arg(format!("unknown model kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Player {
    Classifier,
    Generator,
    Discriminator,
}

impl Player {
    pub fn as_str(self) -> &'static str {
        match self {
            Player::Classifier => CLASSIFIER,
            Player::Generator => GENERATOR,
            Player::Discriminator => DISCRIMINATOR,
        }
    }

    /// Parameter groups this player updates.
    pub fn owns(self, kind: ModelKind) -> Vec<&'static str> {
        match self {
            Player::Classifier if kind.uses_points() => vec![CLASSIFIER, POINTS],
            Player::Classifier => vec![CLASSIFIER],
            Player::Generator => vec![GENERATOR],
            Player::Discriminator => vec![DISCRIMINATOR],
        }
    }
}

fn default_batch() -> usize {
    64
}
fn default_lr() -> f64 {
    2e-4
}
fn default_beta1() -> f64 {
    0.5
}
fn default_beta2() -> f64 {
    0.999
}
fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}
fn default_one() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_divergence() -> f64 {
    1e4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model_kind: ModelKind,
    pub epochs: usize,
    /// Steps per epoch; when absent, one pass over the largest pool the model reads.
    #[serde(default)]
    pub steps_per_epoch: Option<usize>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Rate for the classifier, its reciprocal points and ranges.
    #[serde(default = "default_lr")]
    pub lr_classifier: f64,
    #[serde(default = "default_lr")]
    pub lr_generator: f64,
    #[serde(default = "default_lr")]
    pub lr_discriminator: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Weight of the entropy reward in the generator objective.
    #[serde(default = "default_one")]
    pub entropy_weight: f64,
    /// Weight of the entropy term in the classifier objective.
    #[serde(default = "default_one")]
    pub classifier_entropy_weight: f64,
    /// Invoke the observer every this many steps; 0 disables it.
    #[serde(default)]
    pub eval_every: usize,
    pub arch: ArchConfig,
    /// Also treat labelled samples as real in the unlabelled term.
    #[serde(default)]
    pub fold_labelled_into_real: bool,
    /// Draw separate noise for the classifier's entropy term.
    #[serde(default = "default_true")]
    pub fresh_noise_for_classifier: bool,
    #[serde(default)]
    pub feature_matching: FeatureMatching,
    #[serde(default = "default_divergence")]
    pub divergence_threshold: f64,
}

impl TrainConfig {
    pub fn new(model_kind: ModelKind, arch: ArchConfig) -> Self {
        TrainConfig {
            model_kind,
            epochs: 1,
            steps_per_epoch: None,
            batch_size: default_batch(),
            lr_classifier: default_lr(),
            lr_generator: default_lr(),
            lr_discriminator: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            seed: 0,
            gamma: DEFAULT_GAMMA,
            entropy_weight: 1.0,
            classifier_entropy_weight: 1.0,
            eval_every: 0,
            arch,
            fold_labelled_into_real: false,
            fresh_noise_for_classifier: true,
            feature_matching: FeatureMatching::BatchMean,
            divergence_threshold: default_divergence(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.steps_per_epoch == Some(0) {
            return bad("steps_per_epoch must be positive");
        }
        for (n, r) in [
            ("lr_classifier", self.lr_classifier),
            ("lr_generator", self.lr_generator),
            ("lr_discriminator", self.lr_discriminator),
        ] {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::Config(format!("{n} must be positive, got {r}")));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return bad("gamma must be non-negative");
        }
        if !self.entropy_weight.is_finite() || !self.classifier_entropy_weight.is_finite() {
            return bad("entropy weights must be finite");
        }
        if !(self.divergence_threshold > 0.0) {
            return bad("divergence_threshold must be positive");
        }
        self.arch.validate()
    }

    fn hyper(&self, group: &str) -> AdamHyper {
        let lr = match group {
            GENERATOR => self.lr_generator,
            DISCRIMINATOR => self.lr_discriminator,
            _ => self.lr_classifier,
        };
        AdamHyper {
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: 1e-8,
        }
    }

    /// Steps per epoch for a split with the given pool sizes.
    pub fn resolve_steps_per_epoch(&self, n_lab: usize, n_unlab: usize) -> usize {
        self.steps_per_epoch.unwrap_or_else(|| {
            let n = if self.model_kind.is_gan() {
                n_lab.max(n_unlab)
            } else {
                n_lab
            };
            n.div_ceil(self.batch_size).max(1)
        })
    }
}

/// One step's objectives, keyed by player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub losses: BTreeMap<String, LossValue>,
}

/// Everything one step reads, drawn up front so it can be replayed.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenBatch {
    pub lab_x: Array2<f64>,
    pub lab_y: Vec<usize>,
    /// Unlabelled samples for the real term of the feature-matching loss.
    pub unlab_x: Array2<f64>,
    /// Samples from the whole real pool (labelled and unlabelled).
    pub real_x: Array2<f64>,
    pub noise_d: Array2<f64>,
    pub noise_g: Array2<f64>,
    pub noise_c: Array2<f64>,
}

/// Cycles through shuffled copies of a pool; batch `s` is a pure function of `s`.
#[derive(Debug, Clone, Copy)]
struct PoolSampler {
    n: usize,
    batch: usize,
    seed: u64,
    tag: u64,
}

impl PoolSampler {
    fn new(n: usize, batch: usize, seed: u64, tag: u64) -> Self {
        PoolSampler {
            n,
            batch: batch.min(n),
            seed,
            tag,
        }
    }

    fn permutation(&self, cycle: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((self.tag << 32) | (cycle & 0xffff_ffff));
        let mut p: Vec<usize> = (0..self.n).collect();
        p.shuffle(&mut rng);
        p
    }

    fn indices(&self, step: u64) -> Vec<usize> {
        if self.n == 0 {
            return Vec::new();
        }
        let (n, b) = (self.n as u64, self.batch as u64);
        let start = step * b;
        let mut out = Vec::with_capacity(self.batch);
        let mut cached: Option<(u64, Vec<usize>)> = None;
        for pos in start..start + b {
            let cycle = pos / n;
            if cached.as_ref().is_none_or(|(c, _)| *c != cycle) {
                cached = Some((cycle, self.permutation(cycle)));
            }
            out.push(cached.as_ref().unwrap().1[(pos % n) as usize]);
        }
        out
    }
}

fn rows(m: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    m.select(Axis(0), idx)
}

fn stack(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    if a.nrows() == 0 {
        return Ok(b.clone());
    }
    if b.nrows() == 0 {
        return Ok(a.clone());
    }
    concatenate(Axis(0), &[a.view(), b.view()]).map_err(|e| Error::arg(e.to_string()))
}

/// Parameters, optimizer moments, step counter, loss history and noise generator.
#[derive(Debug, Clone)]
pub struct TrainState {
    config: TrainConfig,
    k: usize,
    params: BTreeMap<String, ParamSet>,
    optim: BTreeMap<String, Adam>,
    step: u64,
    history: Vec<StepRecord>,
    rng: ChaCha8Rng,
}

impl TrainState {
    /// Fresh state for `k` labelled categories.
    pub fn new(config: TrainConfig, k: usize) -> Result<Self> {
        config.validate()?;
        if config.arch.num_classes != k {
            return Err(Error::Config(format!(
                "architecture is built for {} categories but the split has {k}",
                config.arch.num_classes
            )));
        }
        let kind = config.model_kind;
        let mut params = BTreeMap::new();
        for g in kind.groups() {
            let pk = match g {
                CLASSIFIER if kind.uses_points() => ParamKind::ClassifierArp,
                CLASSIFIER => ParamKind::ClassifierFm,
                POINTS => ParamKind::ReciprocalPoints,
                GENERATOR => ParamKind::Generator,
                _ => ParamKind::Discriminator,
            };
            params.insert(g.to_string(), init_params(pk, config.seed, &config.arch)?);
        }
        let optim = params
            .iter()
            .map(|(g, p)| (g.clone(), Adam::new(config.hyper(g), p)))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(NOISE_STREAM);
        Ok(TrainState {
            config,
            k,
            params,
            optim,
            step: 0,
            history: Vec::new(),
            rng,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model_kind(&self) -> ModelKind {
        self.config.model_kind
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn history(&self) -> &[StepRecord] {
        &self.history
    }

    pub fn groups(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn params(&self, group: &str) -> Result<&ParamSet> {
        self.params
            .get(group)
            .ok_or_else(|| Error::arg(format!("model has no {group} parameters")))
    }

    /// Replace a parameter group; names and shapes must match the existing one.
    pub fn set_params(&mut self, group: &str, p: ParamSet) -> Result<()> {
        let cur = self.params(group)?;
        if cur.shapes() != p.shapes() {
            return Err(Error::arg(format!("{group} parameters do not match the architecture")));
        }
        self.params.insert(group.to_string(), p);
        Ok(())
    }

    pub fn optimizer(&self, group: &str) -> Option<&Adam> {
        self.optim.get(group)
    }

    pub fn classifier(&self) -> Result<Classifier> {
        Classifier::new(&self.config.arch, self.config.model_kind.classifier_mode())
    }

    pub fn generator(&self) -> Result<Generator> {
        self.params(GENERATOR)?;
        Generator::new(&self.config.arch)
    }

    pub fn discriminator(&self) -> Result<Discriminator> {
        self.params(DISCRIMINATOR)?;
        Discriminator::new(&self.config.arch)
    }

    pub fn reciprocal_points(&self) -> Result<ReciprocalPointSet> {
        ReciprocalPointSet::from_params(self.params(POINTS)?, self.config.gamma)
    }

    pub fn total_steps(&self, split: &OpenSetSplit) -> u64 {
        let spe = self
            .config
            .resolve_steps_per_epoch(split.lab_labels().len(), split.unlab_len());
        (self.config.epochs * spe) as u64
    }

    fn check_split(&self, split: &OpenSetSplit) -> Result<()> {
        if split.k() != self.k {
            return Err(Error::arg(format!(
                "split has {} categories, model has {}",
                split.k(),
                self.k
            )));
        }
        let w: usize = split.sample_shape().iter().product();
        if w != self.config.arch.input_width() {
            return Err(Error::arg(format!(
                "split samples have width {w}, architecture expects {}",
                self.config.arch.input_width()
            )));
        }
        if split.lab_labels().is_empty() {
            return Err(Error::arg("labelled training pool is empty"));
        }
        Ok(())
    }

    /// Draw the pools and noise for the current step, advancing the noise generator.
    pub fn next_batch(&mut self, split: &OpenSetSplit) -> Result<FrozenBatch> {
        self.check_split(split)?;
        let cfg = &self.config;
        let kind = cfg.model_kind;
        let b = cfg.batch_size;
        let n_lab = split.lab_labels().len();
        let lab_idx = PoolSampler::new(n_lab, b, cfg.seed, 1).indices(self.step);
        let lab_x = rows(split.lab_samples(), &lab_idx);
        let lab_y = lab_idx.iter().map(|&i| split.lab_labels()[i]).collect();
        let width = cfg.arch.input_width();
        let empty = || Array2::zeros((0, width));
        let (mut unlab_x, mut real_x) = (empty(), empty());
        if kind.is_gan() {
            let n_unlab = split.unlab_len();
            let unlab = split.unlab_samples();
            if kind == ModelKind::FmGan {
                let idx = PoolSampler::new(n_unlab, b, cfg.seed, 2).indices(self.step);
                unlab_x = rows(unlab, &idx);
            }
            let idx = PoolSampler::new(n_lab + n_unlab, b, cfg.seed, 3).indices(self.step);
            let (li, ui): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| i < n_lab);
            let ui: Vec<usize> = ui.into_iter().map(|i| i - n_lab).collect();
            real_x = stack(&rows(split.lab_samples(), &li), &rows(unlab, &ui))?;
        }
        let nd = cfg.arch.noise_dim;
        let (mut noise_d, mut noise_g, mut noise_c) =
            (Array2::zeros((0, nd)), Array2::zeros((0, nd)), Array2::zeros((0, nd)));
        if kind.is_gan() {
            noise_d = sample_noise(&mut self.rng, b, nd);
            noise_g = sample_noise(&mut self.rng, b, nd);
            if kind == ModelKind::ArpGan && cfg.fresh_noise_for_classifier {
                noise_c = sample_noise(&mut self.rng, b, nd);
            }
        }
        Ok(FrozenBatch {
            lab_x,
            lab_y,
            unlab_x,
            real_x,
            noise_d,
            noise_g,
            noise_c,
        })
    }

    /// A player's objective at the current parameters, without updating anything.
    pub fn objective(&self, player: Player, batch: &FrozenBatch) -> Result<LossValue> {
        Ok(self.gradients(player, batch)?.0)
    }

    /// One optimizer step of `player` on a frozen batch; returns the
    /// objective measured before the update.
    pub fn apply(&mut self, player: Player, batch: &FrozenBatch) -> Result<LossValue> {
        let kind = self.config.model_kind;
        if !kind.players().contains(&player) {
            return Err(Error::arg(format!("{kind} has no {} player", player.as_str())));
        }
        let (loss, grads) = self.gradients(player, batch)?;
        if loss.value.abs() > self.config.divergence_threshold {
            return Err(Error::Diverged {
                step: self.step,
                msg: format!("{} loss {} exceeds threshold", player.as_str(), loss.value),
            });
        }
        for (group, g) in &grads {
            let p = self.params.get_mut(group).expect("group exists");
            self.optim.get_mut(group).expect("optimizer exists").step(p, g)?;
            if group == POINTS {
                if let Some(r) = p.get_mut("radius").ok() {
                    r.mapv_inplace(|v| v.max(0.0));
                }
            }
            p.check_finite(group)?;
        }
        Ok(loss)
    }

    /// One full step: every player in order on a shared frozen batch. On
    /// error the state is rolled back to the start of the step.
    pub fn train_step(&mut self, split: &OpenSetSplit) -> Result<()> {
        let snapshot = (self.params.clone(), self.optim.clone(), self.rng.clone());
        let result = self.try_step(split);
        if result.is_err() {
            (self.params, self.optim, self.rng) = snapshot;
        }
        result
    }

    fn try_step(&mut self, split: &OpenSetSplit) -> Result<()> {
        let batch = self.next_batch(split)?;
        let mut losses = BTreeMap::new();
        for &p in self.config.model_kind.players() {
            let loss = self.apply(p, &batch)?;
            for w in &loss.warnings {
                log::debug!("step {}: {}: {w}", self.step, p.as_str());
            }
            losses.insert(p.as_str().to_string(), loss);
        }
        self.history.push(StepRecord {
            step: self.step,
            losses,
        });
        self.step += 1;
        Ok(())
    }

    /// Train until the configured number of steps, calling `observer` every
    /// `eval_every` steps. Stops at the first error, leaving the last good state.
    pub fn run<F>(&mut self, split: &OpenSetSplit, mut observer: F) -> Result<()>
    where
        F: FnMut(&TrainState) -> Result<()>,
    {
        let total = self.total_steps(split);
        while self.step < total {
            self.train_step(split)?;
            if self.config.eval_every > 0 && self.step % self.config.eval_every as u64 == 0 {
                observer(self)?;
            }
        }
        Ok(())
    }

    /// A player's objective and its gradients w.r.t. every group it owns.
    pub fn gradients(
        &self,
        player: Player,
        batch: &FrozenBatch,
    ) -> Result<(LossValue, BTreeMap<String, ParamSet>)> {
        let kind = self.config.model_kind;
        match (kind, player) {
            (ModelKind::Softmax, Player::Classifier) => self.softmax_grads(batch),
            (ModelKind::Arp, Player::Classifier) => self.arp_grads(batch),
            (ModelKind::FmGan, Player::Classifier) => self.fm_dc_grads(batch),
            (ModelKind::FmGan, Player::Generator) => self.fm_gen_grads(batch),
            (ModelKind::ArpGan, Player::Discriminator) => self.arp_gan_d_grads(batch),
            (ModelKind::ArpGan, Player::Generator) => self.arp_gan_g_grads(batch),
            (ModelKind::ArpGan, Player::Classifier) => self.arp_gan_c_grads(batch),
            _ => Err(Error::arg(format!("{kind} has no {} player", player.as_str()))),
        }
    }

    fn softmax_grads(&self, b: &FrozenBatch) -> Result<(LossValue, BTreeMap<String, ParamSet>)> {
        let clf = self.classifier()?;
        let cp = self.params(CLASSIFIER)?;
        let (ro, tape) = clf.forward_tape(cp, &b.lab_x)?;
        let (loss, g) = cross_entropy(ro.logits()?, &b.lab_y)?;
        let mut gc = cp.zeros_like();
        clf.backward(cp, &tape, Some(&g.logits), None, Some(&mut gc))?;
        Ok((loss, BTreeMap::from([(CLASSIFIER.to_string(), gc)])))
    }

    fn point_grads(&self, points: Array2<f64>, radius: ndarray::Array1<f64>) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("points", points.into_dyn());
        p.insert("radius", radius.into_dyn());
        p
    }

    fn arp_grads(&self, b: &FrozenBatch) -> Result<(LossValue, BTreeMap<String, ParamSet>)> {
        let clf = self.classifier()?;
        let cp = self.params(CLASSIFIER)?;
        let rp = self.reciprocal_points()?;
        let (ro, tape) = clf.forward_tape(cp, &b.lab_x)?;
        let (loss, g) = arp_classifier_loss(ro.embedding()?, &b.lab_y, &rp)?;
        let mut gc = cp.zeros_like();
        clf.backward(cp, &tape, Some(&g.embedding), None, Some(&mut gc))?;
        Ok((
            loss,
            BTreeMap::from([
                (CLASSIFIER.to_string(), gc),
                (POINTS.to_string(), self.point_grads(g.points, g.radius)),
            ]),
        ))
    }

    fn fm_dc_grads(&self, b: &FrozenBatch) -> Result<(LossValue, BTreeMap<String, ParamSet>)> {
        let clf = self.classifier()?;
        let cp = self.params(CLASSIFIER)?;
        let fake_x = self.generator()?.forward(self.params(GENERATOR)?, &b.noise_d)?;
        let unlab_x = if self.config.fold_labelled_into_real {
            stack(&b.unlab_x, &b.lab_x)?
        } else {
            b.unlab_x.clone()
        };
        let k = self.k;
        let pass = |x: &Array2<f64>| -> Result<Option<(Array2<f64>, crate::nets::ClassifierTape)>> {
            if x.nrows() == 0 {
                return Ok(None);
            }
            let (ro, tape) = clf.forward_tape(cp, x)?;
            Ok(Some((ro.logits()?.clone(), tape)))
        };
        let (f, u, l) = (pass(&fake_x)?, pass(&unlab_x)?, pass(&b.lab_x)?);
        let logits = |p: &Option<(Array2<f64>, _)>| {
            p.as_ref().map_or_else(|| Array2::zeros((0, k)), |(l, _)| l.clone())
        };
        let (loss, g) = fm_dc_loss(&logits(&f), &logits(&u), &logits(&l), &b.lab_y)?;
        let mut gc = cp.zeros_like();
        for (p, grad) in [(&f, &g.fake), (&u, &g.unlab), (&l, &g.lab)] {
            if let Some((_, tape)) = p {
                clf.backward(cp, tape, Some(grad), None, Some(&mut gc))?;
            }
        }
        Ok((loss, BTreeMap::from([(CLASSIFIER.to_string(), gc)])))
    }

    fn fm_gen_grads(&self, b: &FrozenBatch) -> Result<(LossValue, BTreeMap<String, ParamSet>)> {
        let clf = self.classifier()?;
        let cp = self.params(CLASSIFIER)?;
        let gen = self.generator()?;
        let gp = self.params(GENERATOR)?;
        let (fake_x, gtape) = gen.net.forward_tape(gp, &b.noise_g)?;
        let (fake_ro, ctape) = clf.forward_tape(cp, &fake_x)?;
        let real_ro = clf.forward(cp, &b.real_x)?;
        let (loss, g) = fm_gen_loss(&real_ro.features, &fake_ro.features, self.config.feature_matching)?;
        // Gradients flow through the classifier into the samples only.
        let gx = clf.backward(cp, &ctape, None, Some(&g.fake), None)?;
        let mut gg = gp.zeros_like();
        gen.net.backward(gp, &gtape, &gx, Some(&mut gg))?;
        Ok((loss, BTreeMap::from([(GENERATOR.to_string(), gg)])))
    }

    fn arp_gan_d_grads(&self, b: &FrozenBatch) -> Result<(LossValue, BTreeMap<String, ParamSet>)> {
        let disc = self.discriminator()?;
        let dp = self.params(DISCRIMINATOR)?;
        let fake_x = self.generator()?.forward(self.params(GENERATOR)?, &b.noise_d)?;
        let (pr, tr, lr) = disc.forward_tape(dp, &b.real_x)?;
        let (pf, tf, lf) = disc.forward_tape(dp, &fake_x)?;
        let (loss, g) = arp_gan_d_loss(&pr, &pf)?;
        let mut gd = dp.zeros_like();
        disc.backward(dp, &tr, &lr, &g.d_real, Some(&mut gd))?;
        disc.backward(dp, &tf, &lf, &g.d_fake, Some(&mut gd))?;
        Ok((loss, BTreeMap::from([(DISCRIMINATOR.to_string(), gd)])))
    }

    fn arp_gan_g_grads(&self, b: &FrozenBatch) -> Result<(LossValue, BTreeMap<String, ParamSet>)> {
        let clf = self.classifier()?;
        let cp = self.params(CLASSIFIER)?;
        let disc = self.discriminator()?;
        let dp = self.params(DISCRIMINATOR)?;
        let gen = self.generator()?;
        let gp = self.params(GENERATOR)?;
        let rp = self.reciprocal_points()?;
        let (fake_x, gtape) = gen.net.forward_tape(gp, &b.noise_g)?;
        let (pf, dtape, lf) = disc.forward_tape(dp, &fake_x)?;
        let (ro, ctape) = clf.forward_tape(cp, &fake_x)?;
        let w = self.config.entropy_weight;
        let (loss, g) = arp_gan_g_loss_weighted(&pf, ro.embedding()?, &rp.points, w)?;
        let mut gx = disc.backward(dp, &dtape, &lf, &g.d_fake, None)?;
        if w != 0.0 {
            gx += &clf.backward(cp, &ctape, Some(&g.embedding), None, None)?;
        }
        let mut gg = gp.zeros_like();
        gen.net.backward(gp, &gtape, &gx, Some(&mut gg))?;
        Ok((loss, BTreeMap::from([(GENERATOR.to_string(), gg)])))
    }

    fn arp_gan_c_grads(&self, b: &FrozenBatch) -> Result<(LossValue, BTreeMap<String, ParamSet>)> {
        let clf = self.classifier()?;
        let cp = self.params(CLASSIFIER)?;
        let rp = self.reciprocal_points()?;
        let noise = if self.config.fresh_noise_for_classifier {
            &b.noise_c
        } else {
            &b.noise_g
        };
        let fake_x = self.generator()?.forward(self.params(GENERATOR)?, noise)?;
        let (fro, ftape) = clf.forward_tape(cp, &fake_x)?;
        let (lro, ltape) = clf.forward_tape(cp, &b.lab_x)?;
        let (loss, g) = arp_gan_c_loss_weighted(
            fro.embedding()?,
            lro.embedding()?,
            &b.lab_y,
            &rp,
            self.config.classifier_entropy_weight,
        )?;
        let mut gc = cp.zeros_like();
        if fake_x.nrows() > 0 {
            clf.backward(cp, &ftape, Some(&g.embedding_fake), None, Some(&mut gc))?;
        }
        clf.backward(cp, &ltape, Some(&g.embedding_lab), None, Some(&mut gc))?;
        Ok((
            loss,
            BTreeMap::from([
                (CLASSIFIER.to_string(), gc),
                (POINTS.to_string(), self.point_grads(g.points, g.radius)),
            ]),
        ))
    }
}

/// Build a state for `cfg` and train it to completion.
pub fn train(split: &OpenSetSplit, cfg: &TrainConfig) -> Result<TrainState> {
    let mut state = TrainState::new(cfg.clone(), split.k())?;
    state.run(split, |_| Ok(()))?;
    Ok(state)
}

fn train_as(kind: ModelKind, split: &OpenSetSplit, cfg: &TrainConfig) -> Result<TrainState> {
    let mut cfg = cfg.clone();
    cfg.model_kind = kind;
    train(split, &cfg)
}

/// Cross-entropy on the labelled pool only.
pub fn train_softmax_baseline(split: &OpenSetSplit, cfg: &TrainConfig) -> Result<TrainState> {
    train_as(ModelKind::Softmax, split, cfg)
}

/// Reciprocal-point classifier loss on the labelled pool only.
pub fn train_arp_baseline(split: &OpenSetSplit, cfg: &TrainConfig) -> Result<TrainState> {
    train_as(ModelKind::Arp, split, cfg)
}

pub fn train_fm_gan(split: &OpenSetSplit, cfg: &TrainConfig) -> Result<TrainState> {
    train_as(ModelKind::FmGan, split, cfg)
}

pub fn train_arp_gan(split: &OpenSetSplit, cfg: &TrainConfig) -> Result<TrainState> {
    train_as(ModelKind::ArpGan, split, cfg)
}
