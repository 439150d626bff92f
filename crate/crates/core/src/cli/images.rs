use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::{score_arp, score_fm, Scorer};
use crate::nets::sample_noise;
use crate::training::{TrainState, CLASSIFIER, GENERATOR};

/// An 8-bit RGB raster written as binary PPM (`P6`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ppm {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl Ppm {
    pub fn new(width: usize, height: usize) -> Self {
        Ppm {
            width,
            height,
            rgb: vec![0; width * height * 3],
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, px: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.rgb[i..i + 3].copy_from_slice(&px);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.rgb);
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

fn to_byte(v: f64) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

/// Per-sample pixel layout: `[C, H, W]` images with 1 or 3 channels, or a
/// flat vector drawn as a one-row grayscale strip.
fn sample_layout(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [c @ (1 | 3), h, w] => Ok((c, h, w)),
        [d] => Ok((1, 1, d)),
        _ => Err(Error::arg(format!("cannot draw samples of shape {shape:?}"))),
    }
}

/// `rows x cols` generator outputs from noise seeded by `seed`, mapped from
/// `[-1, 1]` to `[0, 255]`.
pub fn sample_grid(state: &TrainState, rows: usize, cols: usize, seed: u64) -> Result<Ppm> {
    if rows == 0 || cols == 0 {
        return Err(Error::arg("grid needs at least one row and column"));
    }
    if !state.model_kind().is_gan() {
        return Err(Error::arg(format!("{} has no generator", state.model_kind())));
    }
    let gen = state.generator()?;
    let (c, h, w) = sample_layout(&gen.output_shape)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = sample_noise(&mut rng, rows * cols, gen.noise_dim);
    let x = gen.forward(state.params(GENERATOR)?, &z)?;
    let mut img = Ppm::new(cols * w, rows * h);
    for (n, s) in x.rows().into_iter().enumerate() {
        let (oy, ox) = ((n / cols) * h, (n % cols) * w);
        for y in 0..h {
            for xx in 0..w {
                let ch = |k: usize| to_byte(s[k * h * w + y * w + xx]);
                let px = if c == 1 { [ch(0); 3] } else { [ch(0), ch(1), ch(2)] };
                img.set(ox + xx, oy + y, px);
            }
        }
    }
    Ok(img)
}

/// Scores and predictions over a 2D grid, plus their rendering.
#[derive(Debug, Clone)]
pub struct ScoreMap {
    /// `scores[[row, col]]`; row 0 is the top edge (`y_max`).
    pub scores: Array2<f64>,
    pub labels: Array2<usize>,
    /// Brightness in `[0, 1]` used for each pixel.
    pub intensity: Array2<f64>,
    pub image: Ppm,
}

fn hue_rgb(h: f64) -> [f64; 3] {
    let f = |n: f64| {
        let k = (n + h * 6.0) % 6.0;
        1.0 - (k.min(4.0 - k).clamp(0.0, 1.0))
    };
    [f(5.0), f(3.0), f(1.0)]
}

/// Render `known_score` over `bounds = [x_min, x_max, y_min, y_max]` at
/// `resolution x resolution`: hue is the predicted label, brightness the score.
pub fn score_map(state: &TrainState, bounds: [f64; 4], resolution: usize, scorer: Scorer) -> Result<ScoreMap> {
    let kind = state.model_kind();
    if state.config().arch.input_shape != [2] {
        return Err(Error::arg("score maps need a 2D-input classifier"));
    }
    if resolution == 0 {
        return Err(Error::arg("resolution must be positive"));
    }
    let [x0, x1, y0, y1] = bounds;
    if !(x1 > x0 && y1 > y0) {
        return Err(Error::arg(format!("empty region {bounds:?}")));
    }
    if !scorer.supports(kind) {
        return Err(Error::arg(format!("scorer {scorer} does not apply to {kind}")));
    }
    let r = resolution;
    let at = |i: usize, lo: f64, hi: f64| {
        if r == 1 {
            (lo + hi) / 2.0
        } else {
            lo + (hi - lo) * i as f64 / (r - 1) as f64
        }
    };
    let mut pts = Array2::zeros((r * r, 2));
    for row in 0..r {
        for col in 0..r {
            pts[[row * r + col, 0]] = at(col, x0, x1);
            pts[[row * r + col, 1]] = at(r - 1 - row, y0, y1);
        }
    }
    let ro = state.classifier()?.forward(state.params(CLASSIFIER)?, &pts)?;
    let scored = if kind.uses_points() {
        let rp = state.reciprocal_points()?;
        ro.embedding()?
            .rows()
            .into_iter()
            .map(|e| score_arp(&e.to_vec(), &rp, scorer))
            .collect::<Result<Vec<_>>>()?
    } else {
        score_fm(&ro, scorer)?
    };
    let k = state.k();
    let scores = Array2::from_shape_fn((r, r), |(i, j)| scored[i * r + j].known_score);
    let labels = Array2::from_shape_fn((r, r), |(i, j)| scored[i * r + j].predicted_label);
    // Probability scores have fixed ranges; raw distances are stretched over the map.
    let (lo, hi) = match scorer {
        Scorer::PReal => (0.0, 1.0),
        Scorer::MaxSoftmax => (1.0 / k as f64, 1.0),
        Scorer::MaxDistance => scores
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v))),
    };
    let intensity = scores.mapv(|s| if hi > lo { ((s - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 1.0 });
    let mut image = Ppm::new(r, r);
    for ((i, j), &v) in intensity.indexed_iter() {
        let rgb = hue_rgb((labels[[i, j]] - 1) as f64 / k as f64);
        image.set(j, i, rgb.map(|c| (c * v * 255.0).round() as u8));
    }
    Ok(ScoreMap {
        scores,
        labels,
        intensity,
        image,
    })
}
