use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::params::{zeros, ParamSet};
use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    /// Leaky rectifier with slope 0.2 on the negative side.
    LeakyRelu,
    Tanh,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::LeakyRelu => {
                if v > 0.0 {
                    v
                } else {
                    LEAKY_SLOPE * v
                }
            }
            Activation::Tanh => v.tanh(),
        }
    }

    /// Derivative from the pre-activation input; kinks take the left slope.
    fn derivative(self, v: f64) -> f64 {
        match self {
            Activation::Relu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if v > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Tanh => {
                let t = v.tanh();
                1.0 - t * t
            }
        }
    }

    fn init_gain(self) -> f64 {
        match self {
            Activation::Tanh => 1.0,
            _ => std::f64::consts::SQRT_2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.pad - self.kernel) / self.stride + 1
    }

    fn patch(&self) -> usize {
        self.in_c * self.kernel * self.kernel
    }

    /// Unfold one sample (`[C, H, W]` flattened) into `[out_h * out_w, C * k * k]`.
    fn im2col(&self, x: ndarray::ArrayView1<'_, f64>) -> Array2<f64> {
        let (oh, ow, k) = (self.out_h(), self.out_w(), self.kernel);
        let mut cols = Array2::zeros((oh * ow, self.patch()));
        for oy in 0..oh {
            for ox in 0..ow {
                let mut row = cols.row_mut(oy * ow + ox);
                for c in 0..self.in_c {
                    for ky in 0..k {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.in_h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix >= self.in_w as isize {
                                continue;
                            }
                            row[(c * k + ky) * k + kx] =
                                x[(c * self.in_h + iy as usize) * self.in_w + ix as usize];
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &Array2<f64>, mut dx: ndarray::ArrayViewMut1<'_, f64>) {
        let (oh, ow, k) = (self.out_h(), self.out_w(), self.kernel);
        for oy in 0..oh {
            for ox in 0..ow {
                let row = cols.row(oy * ow + ox);
                for c in 0..self.in_c {
                    for ky in 0..k {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.in_h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix >= self.in_w as isize {
                                continue;
                            }
                            dx[(c * self.in_h + iy as usize) * self.in_w + ix as usize] +=
                                row[(c * k + ky) * k + kx];
                        }
                    }
                }
            }
        }
    }
}

/// One stage of a feed-forward stack. Batches are `[B, width]` matrices; image
/// layers interpret each row as a `[C, H, W]` tensor in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense {
        name: String,
        inputs: usize,
        outputs: usize,
    },
    Conv {
        name: String,
        geom: ConvGeom,
    },
    /// Nearest-neighbour 2x upsampling.
    Upsample {
        channels: usize,
        height: usize,
        width: usize,
    },
    Act(Activation),
}

impl Layer {
    pub fn in_width(&self, prev: usize) -> usize {
        match self {
            Layer::Dense { inputs, .. } => *inputs,
            Layer::Conv { geom, .. } => geom.in_c * geom.in_h * geom.in_w,
            Layer::Upsample {
                channels,
                height,
                width,
            } => channels * height * width,
            Layer::Act(_) => prev,
        }
    }

    pub fn out_width(&self, input: usize) -> usize {
        match self {
            Layer::Dense { outputs, .. } => *outputs,
            Layer::Conv { geom, .. } => geom.out_c * geom.out_h() * geom.out_w(),
            Layer::Upsample {
                channels,
                height,
                width,
            } => channels * height * width * 4,
            Layer::Act(_) => input,
        }
    }

    pub(crate) fn init<R: Rng>(&self, params: &mut ParamSet, rng: &mut R, gain: f64) {
        let (name, fan_in, wshape, bshape) = match self {
            Layer::Dense {
                name,
                inputs,
                outputs,
            } => (name, *inputs, vec![*inputs, *outputs], *outputs),
            Layer::Conv { name, geom } => (
                name,
                geom.patch(),
                vec![geom.out_c, geom.in_c, geom.kernel, geom.kernel],
                geom.out_c,
            ),
            _ => return,
        };
        let std = gain / (fan_in.max(1) as f64).sqrt();
        let mut w = zeros(&wshape);
        w.iter_mut().for_each(|v| {
            let z: f64 = StandardNormal.sample(rng);
            *v = std * z;
        });
        params.insert(format!("{name}.weight"), w);
        params.insert(format!("{name}.bias"), zeros(&[bshape]));
    }

    fn forward(&self, params: &ParamSet, x: &Array2<f64>) -> Result<Array2<f64>> {
        match self {
            Layer::Dense { name, .. } => {
                let w = params.matrix(&format!("{name}.weight"))?;
                let b = params.vector(&format!("{name}.bias"))?;
                Ok(x.dot(&w) + &b)
            }
            Layer::Conv { name, geom } => {
                let w = params.get(&format!("{name}.weight"))?;
                let w2 = w
                    .view()
                    .into_shape_with_order((geom.out_c, geom.patch()))
                    .map_err(|e| Error::arg(format!("{name}: {e}")))?;
                let b = params.vector(&format!("{name}.bias"))?;
                let area = geom.out_h() * geom.out_w();
                let mut out = Array2::zeros((x.nrows(), geom.out_c * area));
                for (xs, mut os) in x.rows().into_iter().zip(out.rows_mut()) {
                    let y = geom.im2col(xs).dot(&w2.t());
                    for c in 0..geom.out_c {
                        for p in 0..area {
                            os[c * area + p] = y[[p, c]] + b[c];
                        }
                    }
                }
                Ok(out)
            }
            Layer::Upsample {
                channels,
                height,
                width,
            } => {
                let (h2, w2) = (height * 2, width * 2);
                let mut out = Array2::zeros((x.nrows(), channels * h2 * w2));
                for (xs, mut os) in x.rows().into_iter().zip(out.rows_mut()) {
                    for c in 0..*channels {
                        for y in 0..h2 {
                            for xx in 0..w2 {
                                os[(c * h2 + y) * w2 + xx] = xs[(c * height + y / 2) * width + xx / 2];
                            }
                        }
                    }
                }
                Ok(out)
            }
            Layer::Act(a) => Ok(x.mapv(|v| a.apply(v))),
        }
    }

    /// Gradient w.r.t. the layer input; parameter gradients are accumulated into `grads`.
    fn backward(
        &self,
        params: &ParamSet,
        x: &Array2<f64>,
        g: &Array2<f64>,
        grads: Option<&mut ParamSet>,
    ) -> Result<Array2<f64>> {
        match self {
            Layer::Dense { name, .. } => {
                let wname = format!("{name}.weight");
                let w = params.matrix(&wname)?;
                if let Some(grads) = grads {
                    let dw = x.t().dot(g);
                    grads.matrix_mut(&wname)?.scaled_add(1.0, &dw);
                    let db: Array1<f64> = g.sum_axis(Axis(0));
                    grads
                        .get_mut(&format!("{name}.bias"))?
                        .scaled_add(1.0, &db.into_dyn());
                }
                Ok(g.dot(&w.t()))
            }
            Layer::Conv { name, geom } => {
                let wname = format!("{name}.weight");
                let w = params.get(&wname)?;
                let w2 = w
                    .view()
                    .into_shape_with_order((geom.out_c, geom.patch()))
                    .map_err(|e| Error::arg(format!("{name}: {e}")))?;
                let area = geom.out_h() * geom.out_w();
                let mut dx = Array2::zeros(x.raw_dim());
                let mut dw = Array2::<f64>::zeros((geom.out_c, geom.patch()));
                let mut db = Array1::<f64>::zeros(geom.out_c);
                for ((xs, gs), dxs) in x.rows().into_iter().zip(g.rows()).zip(dx.rows_mut()) {
                    let mut gm = Array2::zeros((area, geom.out_c));
                    for c in 0..geom.out_c {
                        for p in 0..area {
                            gm[[p, c]] = gs[c * area + p];
                        }
                    }
                    if grads.is_some() {
                        let cols = geom.im2col(xs);
                        dw += &gm.t().dot(&cols);
                        db += &gm.sum_axis(Axis(0));
                    }
                    let dcols = gm.dot(&w2);
                    geom.col2im(&dcols, dxs);
                }
                if let Some(grads) = grads {
                    let dst = grads.get_mut(&wname)?;
                    let dw = dw
                        .into_shape_with_order(dst.raw_dim())
                        .map_err(|e| Error::arg(format!("{name}: {e}")))?;
                    *dst += &dw;
                    *grads.get_mut(&format!("{name}.bias"))? += &db.into_dyn();
                }
                Ok(dx)
            }
            Layer::Upsample {
                channels,
                height,
                width,
            } => {
                let (h2, w2) = (height * 2, width * 2);
                let mut dx = Array2::zeros(x.raw_dim());
                for (gs, mut ds) in g.rows().into_iter().zip(dx.rows_mut()) {
                    for c in 0..*channels {
                        for y in 0..h2 {
                            for xx in 0..w2 {
                                ds[(c * height + y / 2) * width + xx / 2] += gs[(c * h2 + y) * w2 + xx];
                            }
                        }
                    }
                }
                Ok(dx)
            }
            Layer::Act(a) => Ok(ndarray::Zip::from(x)
                .and(g)
                .map_collect(|&xv, &gv| gv * a.derivative(xv))),
        }
    }
}

/// Inputs to every layer, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    inputs: Vec<Array2<f64>>,
}

impl Tape {
    /// Batch size of the recorded pass.
    pub fn rows(&self) -> usize {
        self.inputs.first().map_or(0, Array2::nrows)
    }
}

/// A feed-forward stack of layers; parameters live in a separate [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Layer>,
    pub in_width: usize,
    pub out_width: usize,
}

impl Network {
    pub fn new(layers: Vec<Layer>, in_width: usize) -> Result<Self> {
        let mut w = in_width;
        for (i, l) in layers.iter().enumerate() {
            let expect = l.in_width(w);
            if expect != w {
                return Err(Error::arg(format!(
                    "layer {i} expects width {expect}, previous stage yields {w}"
                )));
            }
            w = l.out_width(w);
        }
        Ok(Network {
            layers,
            in_width,
            out_width: w,
        })
    }

    /// Initialise every weighted layer; each layer uses the gain of the activation following it.
    pub(crate) fn init<R: Rng>(&self, params: &mut ParamSet, rng: &mut R) {
        for (i, l) in self.layers.iter().enumerate() {
            let gain = match self.layers.get(i + 1) {
                Some(Layer::Act(a)) => a.init_gain(),
                _ => 1.0,
            };
            l.init(params, rng, gain);
        }
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.in_width {
            return Err(Error::arg(format!(
                "input width {} does not match network input {}",
                x.ncols(),
                self.in_width
            )));
        }
        Ok(())
    }

    pub fn forward(&self, params: &ParamSet, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for l in &self.layers {
            h = l.forward(params, &h)?;
        }
        Ok(h)
    }

    pub fn forward_tape(&self, params: &ParamSet, x: &Array2<f64>) -> Result<(Array2<f64>, Tape)> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for l in &self.layers {
            let next = l.forward(params, &h)?;
            inputs.push(h);
            h = next;
        }
        Ok((h, Tape { inputs }))
    }

    /// Back-propagate `grad_out`; returns the gradient w.r.t. the network input.
    pub fn backward(
        &self,
        params: &ParamSet,
        tape: &Tape,
        grad_out: &Array2<f64>,
        mut grads: Option<&mut ParamSet>,
    ) -> Result<Array2<f64>> {
        let mut g = grad_out.clone();
        for (l, x) in self.layers.iter().zip(&tape.inputs).rev() {
            g = l.backward(params, x, &g, grads.as_deref_mut())?;
        }
        Ok(g)
    }
}
