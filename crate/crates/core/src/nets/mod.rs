//! Classifier, generator and discriminator networks plus reciprocal points.

mod layers;
mod params;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use layers::{Activation, ConvGeom, Layer, Network, Tape, LEAKY_SLOPE};
pub use params::ParamSet;

/// Lower/upper clamp applied to discriminator probabilities.
pub const PROB_EPS: f64 = 1e-7;

pub const DEFAULT_GAMMA: f64 = 0.1;

/// Widths and depths of all networks for one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub input_shape: Vec<usize>,
    pub num_classes: usize,
    /// Reciprocal-point / embedding width `m`.
    pub embedding_dim: usize,
    pub noise_dim: usize,
    /// Dense widths of the classifier; the last one is the feature layer.
    pub classifier_hidden: Vec<usize>,
    /// Conv channels before the dense part (images only).
    #[serde(default)]
    pub classifier_conv: Vec<usize>,
    pub generator_hidden: Vec<usize>,
    /// Channels of the upsampling conv stages (images only).
    #[serde(default)]
    pub generator_conv: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    #[serde(default)]
    pub discriminator_conv: Vec<usize>,
    pub activation: Activation,
}

impl ArchConfig {
    /// Small fully connected nets for 2D domains.
    pub fn synth2d(num_classes: usize) -> Self {
        ArchConfig {
            input_shape: vec![2],
            num_classes,
            embedding_dim: 8,
            noise_dim: 8,
            classifier_hidden: vec![64, 64],
            classifier_conv: vec![],
            generator_hidden: vec![64, 64],
            generator_conv: vec![],
            discriminator_hidden: vec![64],
            discriminator_conv: vec![],
            activation: Activation::LeakyRelu,
        }
    }

    /// Four conv blocks for `[C, H, W]` images.
    pub fn image(input_shape: Vec<usize>, num_classes: usize) -> Self {
        ArchConfig {
            input_shape,
            num_classes,
            embedding_dim: 128,
            noise_dim: 64,
            classifier_hidden: vec![128],
            classifier_conv: vec![32, 64, 64, 128],
            generator_hidden: vec![],
            generator_conv: vec![64, 32],
            discriminator_hidden: vec![64],
            discriminator_conv: vec![32, 64],
            activation: Activation::LeakyRelu,
        }
    }

    pub fn input_width(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_shape.is_empty() || self.input_width() == 0 {
            return Err(Error::arg("input shape must be non-empty"));
        }
        if self.num_classes < 2 {
            return Err(Error::arg("K must be at least 2"));
        }
        if self.noise_dim == 0 || self.embedding_dim == 0 {
            return Err(Error::arg("noise and embedding widths must be positive"));
        }
        if self.classifier_hidden.is_empty() {
            return Err(Error::arg("classifier needs at least one dense feature layer"));
        }
        let widths = self
            .classifier_hidden
            .iter()
            .chain(&self.classifier_conv)
            .chain(&self.generator_hidden)
            .chain(&self.generator_conv)
            .chain(&self.discriminator_hidden)
            .chain(&self.discriminator_conv);
        if widths.into_iter().any(|&w| w == 0) {
            return Err(Error::arg("layer widths must be positive"));
        }
        let convs = !self.classifier_conv.is_empty()
            || !self.generator_conv.is_empty()
            || !self.discriminator_conv.is_empty();
        if convs && self.input_shape.len() != 3 {
            return Err(Error::arg("conv stages need a [C, H, W] input shape"));
        }
        if !self.generator_conv.is_empty() {
            let f = 1 << self.generator_conv.len();
            if self.input_shape[1] % f != 0 || self.input_shape[2] % f != 0 {
                return Err(Error::arg(format!(
                    "generator with {} upsampling stages needs H and W divisible by {f}",
                    self.generator_conv.len()
                )));
            }
        }
        Ok(())
    }
}

/// Conv blocks (3x3, pad 1; stride 2 for the first three) followed by dense layers.
fn encoder_layers(
    prefix: &str,
    shape: &[usize],
    conv: &[usize],
    hidden: &[usize],
    act: Activation,
) -> (Vec<Layer>, usize) {
    let mut layers = Vec::new();
    let mut width: usize = shape.iter().product();
    if !conv.is_empty() {
        let (mut c, mut h, mut w) = (shape[0], shape[1], shape[2]);
        for (i, &oc) in conv.iter().enumerate() {
            let geom = ConvGeom {
                in_c: c,
                in_h: h,
                in_w: w,
                out_c: oc,
                kernel: 3,
                stride: if i < 3 { 2 } else { 1 },
                pad: 1,
            };
            layers.push(Layer::Conv {
                name: format!("{prefix}conv{i}"),
                geom,
            });
            layers.push(Layer::Act(act));
            (c, h, w) = (oc, geom.out_h(), geom.out_w());
        }
        width = c * h * w;
    }
    for (i, &hw) in hidden.iter().enumerate() {
        layers.push(Layer::Dense {
            name: format!("{prefix}fc{i}"),
            inputs: width,
            outputs: hw,
        });
        layers.push(Layer::Act(act));
        width = hw;
    }
    (layers, width)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierMode {
    /// K logits; the fake category is the implicit zero logit.
    Logits,
    /// An `m`-wide embedding compared against reciprocal points.
    Embedding,
}

/// Per-sample classifier outputs for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierReadout {
    /// Penultimate activations, `[B, F]`.
    pub features: Array2<f64>,
    /// `[B, K]` in logit mode.
    pub logits: Option<Array2<f64>>,
    /// `[B, m]` in embedding mode.
    pub embedding: Option<Array2<f64>>,
}

impl ClassifierReadout {
    pub fn logits(&self) -> Result<&Array2<f64>> {
        self.logits
            .as_ref()
            .ok_or_else(|| Error::arg("readout has no logits (embedding-mode classifier)"))
    }

    pub fn embedding(&self) -> Result<&Array2<f64>> {
        self.embedding
            .as_ref()
            .ok_or_else(|| Error::arg("readout has no embedding (logit-mode classifier)"))
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Tape for a classifier forward pass.
#[derive(Debug, Clone)]
pub struct ClassifierTape {
    body: Tape,
    head: Tape,
}

/// Feature extractor plus a linear head. Parameters are named `body.*` and `head.*`.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub mode: ClassifierMode,
    pub body: Network,
    pub head: Network,
}

impl Classifier {
    pub fn new(arch: &ArchConfig, mode: ClassifierMode) -> Result<Self> {
        arch.validate()?;
        let (layers, width) = encoder_layers(
            "body.",
            &arch.input_shape,
            &arch.classifier_conv,
            &arch.classifier_hidden,
            arch.activation,
        );
        let body = Network::new(layers, arch.input_width())?;
        let outputs = match mode {
            ClassifierMode::Logits => arch.num_classes,
            ClassifierMode::Embedding => arch.embedding_dim,
        };
        let head = Network::new(
            vec![Layer::Dense {
                name: "head".into(),
                inputs: width,
                outputs,
            }],
            width,
        )?;
        Ok(Classifier { mode, body, head })
    }

    pub fn feature_width(&self) -> usize {
        self.body.out_width
    }

    pub fn output_width(&self) -> usize {
        self.head.out_width
    }

    fn readout(&self, features: Array2<f64>, out: Array2<f64>) -> ClassifierReadout {
        let (logits, embedding) = match self.mode {
            ClassifierMode::Logits => (Some(out), None),
            ClassifierMode::Embedding => (None, Some(out)),
        };
        ClassifierReadout {
            features,
            logits,
            embedding,
        }
    }

    pub fn forward(&self, params: &ParamSet, x: &Array2<f64>) -> Result<ClassifierReadout> {
        let features = self.body.forward(params, x)?;
        let out = self.head.forward(params, &features)?;
        Ok(self.readout(features, out))
    }

    pub fn forward_tape(
        &self,
        params: &ParamSet,
        x: &Array2<f64>,
    ) -> Result<(ClassifierReadout, ClassifierTape)> {
        let (features, body) = self.body.forward_tape(params, x)?;
        let (out, head) = self.head.forward_tape(params, &features)?;
        Ok((self.readout(features, out), ClassifierTape { body, head }))
    }

    /// Back-propagate gradients arriving at the head output and/or the features.
    pub fn backward(
        &self,
        params: &ParamSet,
        tape: &ClassifierTape,
        grad_out: Option<&Array2<f64>>,
        grad_features: Option<&Array2<f64>>,
        mut grads: Option<&mut ParamSet>,
    ) -> Result<Array2<f64>> {
        let batch = tape.head.rows();
        let mut gf = match grad_out {
            Some(g) => self.head.backward(params, &tape.head, g, grads.as_deref_mut())?,
            None => Array2::zeros((batch, self.feature_width())),
        };
        if let Some(g) = grad_features {
            gf += g;
        }
        self.body.backward(params, &tape.body, &gf, grads)
    }
}

/// Noise-to-sample network with a `tanh` output.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub net: Network,
    pub noise_dim: usize,
    pub output_shape: Vec<usize>,
}

impl Generator {
    pub fn new(arch: &ArchConfig) -> Result<Self> {
        arch.validate()?;
        let act = arch.activation;
        let mut layers = Vec::new();
        let mut width = arch.noise_dim;
        for (i, &h) in arch.generator_hidden.iter().enumerate() {
            layers.push(Layer::Dense {
                name: format!("fc{i}"),
                inputs: width,
                outputs: h,
            });
            layers.push(Layer::Act(act));
            width = h;
        }
        let out_width = arch.input_width();
        if arch.generator_conv.is_empty() {
            layers.push(Layer::Dense {
                name: "out".into(),
                inputs: width,
                outputs: out_width,
            });
        } else {
            let stages = arch.generator_conv.len();
            let (oc, oh, ow) = (arch.input_shape[0], arch.input_shape[1], arch.input_shape[2]);
            let (mut h, mut w) = (oh >> stages, ow >> stages);
            let c0 = arch.generator_conv[0];
            layers.push(Layer::Dense {
                name: "proj".into(),
                inputs: width,
                outputs: c0 * h * w,
            });
            layers.push(Layer::Act(act));
            for i in 0..stages {
                let c = arch.generator_conv[i];
                let next = arch.generator_conv.get(i + 1).copied().unwrap_or(oc);
                layers.push(Layer::Upsample {
                    channels: c,
                    height: h,
                    width: w,
                });
                (h, w) = (h * 2, w * 2);
                layers.push(Layer::Conv {
                    name: format!("conv{i}"),
                    geom: ConvGeom {
                        in_c: c,
                        in_h: h,
                        in_w: w,
                        out_c: next,
                        kernel: 3,
                        stride: 1,
                        pad: 1,
                    },
                });
                if i + 1 < stages {
                    layers.push(Layer::Act(act));
                }
            }
        }
        layers.push(Layer::Act(Activation::Tanh));
        Ok(Generator {
            net: Network::new(layers, arch.noise_dim)?,
            noise_dim: arch.noise_dim,
            output_shape: arch.input_shape.clone(),
        })
    }

    pub fn forward(&self, params: &ParamSet, z: &Array2<f64>) -> Result<Array2<f64>> {
        self.net.forward(params, z)
    }
}

/// Real/fake network; the sigmoid and clamp are applied outside the layer stack.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub net: Network,
}

impl Discriminator {
    pub fn new(arch: &ArchConfig) -> Result<Self> {
        arch.validate()?;
        let (mut layers, width) = encoder_layers(
            "",
            &arch.input_shape,
            &arch.discriminator_conv,
            &arch.discriminator_hidden,
            arch.activation,
        );
        layers.push(Layer::Dense {
            name: "out".into(),
            inputs: width,
            outputs: 1,
        });
        Ok(Discriminator {
            net: Network::new(layers, arch.input_width())?,
        })
    }

    /// Probabilities `[B]` clamped to `[PROB_EPS, 1 - PROB_EPS]`.
    pub fn forward(&self, params: &ParamSet, x: &Array2<f64>) -> Result<Array1<f64>> {
        let z = self.net.forward(params, x)?;
        Ok(z.column(0).mapv(clamped_sigmoid))
    }

    pub fn forward_tape(&self, params: &ParamSet, x: &Array2<f64>) -> Result<(Array1<f64>, Tape, Array1<f64>)> {
        let (z, tape) = self.net.forward_tape(params, x)?;
        let logits = z.column(0).to_owned();
        Ok((logits.mapv(clamped_sigmoid), tape, logits))
    }

    /// Chain `dL/dp` through the clamped sigmoid and the layer stack.
    pub fn backward(
        &self,
        params: &ParamSet,
        tape: &Tape,
        logits: &Array1<f64>,
        grad_prob: &Array1<f64>,
        grads: Option<&mut ParamSet>,
    ) -> Result<Array2<f64>> {
        let mut gz = Array2::zeros((logits.len(), 1));
        for (i, (&z, &g)) in logits.iter().zip(grad_prob).enumerate() {
            let p = sigmoid(z);
            // Clamped outputs are constant, so their derivative is zero.
            if p > PROB_EPS && p < 1.0 - PROB_EPS {
                gz[[i, 0]] = g * p * (1.0 - p);
            }
        }
        self.net.backward(params, tape, &gz, grads)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn clamped_sigmoid(z: f64) -> f64 {
    sigmoid(z).clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// K learnable reciprocal points, per-category ranges R and the hinge weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ReciprocalPointSet {
    /// `[K, m]`, one row per category.
    pub points: Array2<f64>,
    /// `[K]`, kept non-negative.
    pub radius: Array1<f64>,
    pub gamma: f64,
}

impl ReciprocalPointSet {
    pub fn new(points: Array2<f64>, radius: Array1<f64>, gamma: f64) -> Result<Self> {
        if points.nrows() != radius.len() {
            return Err(Error::arg(format!(
                "{} points but {} ranges",
                points.nrows(),
                radius.len()
            )));
        }
        if points.iter().chain(radius.iter()).any(|v| !v.is_finite()) || !gamma.is_finite() {
            return Err(Error::numeric("reciprocal points", "non-finite value"));
        }
        Ok(ReciprocalPointSet {
            points,
            radius,
            gamma,
        })
    }

    pub fn from_params(params: &ParamSet, gamma: f64) -> Result<Self> {
        Self::new(
            params.matrix("points")?.to_owned(),
            params.vector("radius")?.to_owned(),
            gamma,
        )
    }

    pub fn to_params(&self) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("points", self.points.clone().into_dyn());
        p.insert("radius", self.radius.clone().into_dyn());
        p
    }

    pub fn k(&self) -> usize {
        self.points.nrows()
    }

    pub fn m(&self) -> usize {
        self.points.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamKind {
    ClassifierFm,
    ClassifierArp,
    Generator,
    Discriminator,
    ReciprocalPoints,
}

impl ParamKind {
    fn stream(self) -> u64 {
        match self {
            ParamKind::ClassifierFm => 1,
            ParamKind::ClassifierArp => 2,
            ParamKind::Generator => 3,
            ParamKind::Discriminator => 4,
            ParamKind::ReciprocalPoints => 5,
        }
    }
}

/// Deterministic initial parameters. Weights are scaled normals, biases zero;
/// reciprocal points are standard normal and every range starts at 0.
pub fn init_params(kind: ParamKind, seed: u64, arch: &ArchConfig) -> Result<ParamSet> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(kind.stream());
    let mut params = ParamSet::new();
    match kind {
        ParamKind::ClassifierFm | ParamKind::ClassifierArp => {
            let mode = if kind == ParamKind::ClassifierFm {
                ClassifierMode::Logits
            } else {
                ClassifierMode::Embedding
            };
            let c = Classifier::new(arch, mode)?;
            c.body.init(&mut params, &mut rng);
            c.head.init(&mut params, &mut rng);
        }
        ParamKind::Generator => Generator::new(arch)?.net.init(&mut params, &mut rng),
        ParamKind::Discriminator => Discriminator::new(arch)?.net.init(&mut params, &mut rng),
        ParamKind::ReciprocalPoints => {
            let (k, m) = (arch.num_classes, arch.embedding_dim);
            let points = Array2::from_shape_simple_fn((k, m), || StandardNormal.sample(&mut rng));
            params.insert("points", points.into_dyn());
            params.insert("radius", Array1::<f64>::zeros(k).into_dyn());
        }
    }
    Ok(params)
}

/// Batched classifier readout.
pub fn classifier_forward(
    classifier: &Classifier,
    params: &ParamSet,
    x: &Array2<f64>,
) -> Result<ClassifierReadout> {
    classifier.forward(params, x)
}

pub fn generator_forward(generator: &Generator, params: &ParamSet, z: &Array2<f64>) -> Result<Array2<f64>> {
    generator.forward(params, z)
}

pub fn discriminator_forward(
    discriminator: &Discriminator,
    params: &ParamSet,
    x: &Array2<f64>,
) -> Result<Array1<f64>> {
    discriminator.forward(params, x)
}

/// Standard-normal noise batch `[batch, noise_dim]`.
pub fn sample_noise<R: rand::Rng>(rng: &mut R, batch: usize, noise_dim: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((batch, noise_dim), || StandardNormal.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_head_gives_zero_logits() {
        let arch = ArchConfig::synth2d(3);
        let c = Classifier::new(&arch, ClassifierMode::Logits).unwrap();
        let mut p = init_params(ParamKind::ClassifierFm, 1, &arch).unwrap();
        p.get_mut("head.weight").unwrap().fill(0.0);
        let x = array![[1.0, -2.0], [0.3, 4.0], [0.0, 0.0]];
        let r = c.forward(&p, &x).unwrap();
        assert_eq!(r.logits().unwrap().shape(), &[3, 3]);
        assert!(r.logits().unwrap().iter().all(|&v| v == 0.0));
        assert!(r.embedding.is_none());
        assert_eq!(r.features.shape(), &[3, 64]);
    }

    #[test]
    fn hand_set_two_layer_network() {
        let arch = ArchConfig {
            input_shape: vec![2],
            num_classes: 2,
            embedding_dim: 2,
            noise_dim: 1,
            classifier_hidden: vec![2],
            classifier_conv: vec![],
            generator_hidden: vec![],
            generator_conv: vec![],
            discriminator_hidden: vec![],
            discriminator_conv: vec![],
            activation: Activation::Relu,
        };
        let c = Classifier::new(&arch, ClassifierMode::Logits).unwrap();
        let mut p = ParamSet::new();
        // h = relu(x W1 + b1) with W1 = [[1,-1],[2,3]], b1 = [0.5,-2]
        p.insert("body.fc0.weight", array![[1.0, -1.0], [2.0, 3.0]].into_dyn());
        p.insert("body.fc0.bias", array![0.5, -2.0].into_dyn());
        p.insert("head.weight", array![[2.0, 0.0], [1.0, -1.0]].into_dyn());
        p.insert("head.bias", array![0.0, 1.0].into_dyn());
        let r = c.forward(&p, &array![[1.0, 0.0]]).unwrap();
        // x=[1,0]: pre = [1.5, -3] -> h = [1.5, 0]; logits = [3.0, 1.0]
        assert_eq!(r.features, array![[1.5, 0.0]]);
        assert_eq!(r.logits().unwrap(), &array![[3.0, 1.0]]);
    }

    #[test]
    fn logits_equal_head_of_features() {
        let arch = ArchConfig::synth2d(4);
        let c = Classifier::new(&arch, ClassifierMode::Logits).unwrap();
        let p = init_params(ParamKind::ClassifierFm, 9, &arch).unwrap();
        let x = array![[0.1, 0.2], [3.0, -1.0]];
        let r = c.forward(&p, &x).unwrap();
        let again = c.head.forward(&p, &r.features).unwrap();
        assert_eq!(r.logits().unwrap(), &again);
    }

    #[test]
    fn generator_bounded_and_deterministic() {
        let arch = ArchConfig::synth2d(3);
        let g = Generator::new(&arch).unwrap();
        let p = init_params(ParamKind::Generator, 4, &arch).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let z = sample_noise(&mut rng, 64, arch.noise_dim) * 50.0;
        let out = g.forward(&p, &z).unwrap();
        assert!(out.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(out, g.forward(&p, &z).unwrap());
        let empty = g.forward(&p, &Array2::zeros((0, arch.noise_dim))).unwrap();
        assert_eq!(empty.shape(), &[0, 2]);
        assert!(g.forward(&p, &Array2::zeros((1, 3))).is_err());
    }

    #[test]
    fn zero_discriminator_is_half() {
        let arch = ArchConfig::synth2d(3);
        let d = Discriminator::new(&arch).unwrap();
        let mut p = init_params(ParamKind::Discriminator, 4, &arch).unwrap();
        p.iter_mut().for_each(|(_, a)| a.fill(0.0));
        let out = d.forward(&p, &array![[1.0, 2.0], [-5.0, 3.0], [0.0, 0.0]]).unwrap();
        assert_eq!(out.to_vec(), vec![0.5; 3]);
    }

    #[test]
    fn hand_set_discriminator() {
        let arch = ArchConfig {
            discriminator_hidden: vec![],
            ..ArchConfig::synth2d(2)
        };
        let d = Discriminator::new(&arch).unwrap();
        let mut p = ParamSet::new();
        p.insert("out.weight", array![[1.0], [-2.0]].into_dyn());
        p.insert("out.bias", array![0.5].into_dyn());
        let out = d.forward(&p, &array![[1.0, 1.0], [100.0, 0.0]]).unwrap();
        // z = 1 - 2 + 0.5 = -0.5
        assert!((out[0] - 1.0 / (1.0 + 0.5f64.exp())).abs() < 1e-15);
        assert_eq!(out[1], 1.0 - PROB_EPS);
    }

    #[test]
    fn init_is_seeded() {
        let arch = ArchConfig::synth2d(3);
        for kind in [ParamKind::ClassifierFm, ParamKind::Generator, ParamKind::Discriminator] {
            let a = init_params(kind, 5, &arch).unwrap();
            assert!(a.bit_identical(&init_params(kind, 5, &arch).unwrap()));
            assert!(!a.bit_identical(&init_params(kind, 6, &arch).unwrap()));
        }
    }

    #[test]
    fn reciprocal_point_defaults() {
        let arch = ArchConfig {
            embedding_dim: 4,
            ..ArchConfig::synth2d(3)
        };
        let p = init_params(ParamKind::ReciprocalPoints, 1, &arch).unwrap();
        let rp = ReciprocalPointSet::from_params(&p, DEFAULT_GAMMA).unwrap();
        assert_eq!(rp.points.shape(), &[3, 4]);
        assert_eq!(rp.radius.to_vec(), vec![0.0; 3]);
    }

    #[test]
    fn image_architectures_build() {
        let arch = ArchConfig::image(vec![1, 28, 28], 10);
        let c = Classifier::new(&arch, ClassifierMode::Embedding).unwrap();
        let g = Generator::new(&arch).unwrap();
        let d = Discriminator::new(&arch).unwrap();
        assert_eq!(c.output_width(), 128);
        assert_eq!(g.net.out_width, 784);
        assert_eq!(d.net.out_width, 1);
        let p = init_params(ParamKind::Generator, 0, &arch).unwrap();
        let out = g.forward(&p, &Array2::zeros((2, arch.noise_dim))).unwrap();
        assert_eq!(out.shape(), &[2, 784]);
        assert!(ArchConfig::image(vec![1, 30, 30], 10).validate().is_err());
    }
}
