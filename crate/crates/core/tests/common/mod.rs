//! Shared helpers for integration tests. The oracles here are written
//! directly from the loss definitions with naive arithmetic and share no code
//! with the library.
#![allow(dead_code)]

pub mod oracle {
    pub fn softmax(v: &[f64]) -> Vec<f64> {
        let e: Vec<f64> = v.iter().map(|x| x.exp()).collect();
        let z: f64 = e.iter().sum();
        e.iter().map(|x| x / z).collect()
    }

    /// Fake probability with an explicit (K+1)-th node fixed at zero.
    pub fn p_fake_kplus1(logits: &[f64]) -> f64 {
        let mut v = logits.to_vec();
        v.push(0.0);
        *softmax(&v).last().unwrap()
    }

    pub fn p_fm_fake(logits: &[f64]) -> f64 {
        1.0 / (logits.iter().map(|x| x.exp()).sum::<f64>() + 1.0)
    }

    fn mean(v: impl Iterator<Item = f64>) -> f64 {
        let (mut s, mut n) = (0.0, 0usize);
        for x in v {
            s += x;
            n += 1;
        }
        if n == 0 {
            0.0
        } else {
            s / n as f64
        }
    }

    pub fn kplus1_loss(fake: &[Vec<f64>], lab: &[Vec<f64>], labels: &[usize]) -> f64 {
        mean(fake.iter().map(|r| -softmax(r).last().unwrap().ln()))
            + mean(lab.iter().zip(labels).map(|(r, &y)| -softmax(r)[y - 1].ln()))
    }

    pub fn fm_dc_loss(fake: &[Vec<f64>], unlab: &[Vec<f64>], lab: &[Vec<f64>], labels: &[usize]) -> f64 {
        mean(fake.iter().map(|r| -p_fm_fake(r).ln()))
            + mean(unlab.iter().map(|r| -(1.0 - p_fm_fake(r)).ln()))
            + mean(lab.iter().zip(labels).map(|(r, &y)| -softmax(r)[y - 1].ln()))
    }

    pub fn fm_gen_loss(real: &[Vec<f64>], fake: &[Vec<f64>]) -> f64 {
        let w = real[0].len();
        (0..w)
            .map(|j| {
                let mr = mean(real.iter().map(|r| r[j]));
                let mf = mean(fake.iter().map(|r| r[j]));
                (mr - mf) * (mr - mf)
            })
            .sum()
    }

    pub fn fm_gen_loss_pairs(real: &[Vec<f64>], fake: &[Vec<f64>]) -> f64 {
        let mut s = 0.0;
        for r in real {
            for f in fake {
                s += r.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            }
        }
        s / (real.len() * fake.len()) as f64
    }

    pub fn d_e(c: &[f64], p: &[f64]) -> f64 {
        c.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / c.len() as f64
    }

    pub fn d_d(c: &[f64], p: &[f64]) -> f64 {
        c.iter().zip(p).map(|(a, b)| a * b).sum()
    }

    pub fn dist(c: &[f64], p: &[f64]) -> f64 {
        d_e(c, p) - d_d(c, p)
    }

    pub fn p_arp(c: &[f64], points: &[Vec<f64>]) -> Vec<f64> {
        softmax(&points.iter().map(|p| dist(c, p)).collect::<Vec<_>>())
    }

    pub fn arp_classifier_loss(
        emb: &[Vec<f64>],
        labels: &[usize],
        points: &[Vec<f64>],
        radius: &[f64],
        gamma: f64,
    ) -> f64 {
        mean(emb.iter().zip(labels).map(|(c, &y)| {
            let hinge = (d_e(c, &points[y - 1]) - radius[y - 1]).max(0.0);
            -p_arp(c, points)[y - 1].ln() + gamma * hinge
        }))
    }

    pub fn entropy(emb: &[Vec<f64>], points: &[Vec<f64>]) -> f64 {
        mean(emb.iter().map(|c| -p_arp(c, points).iter().map(|s| s * s.ln()).sum::<f64>()))
    }

    pub fn arp_gan_d_loss(d_real: &[f64], d_fake: &[f64]) -> f64 {
        mean(d_real.iter().map(|d| -d.ln())) + mean(d_fake.iter().map(|d| -(1.0 - d).ln()))
    }

    pub fn arp_gan_g_loss(d_fake: &[f64], emb: &[Vec<f64>], points: &[Vec<f64>]) -> f64 {
        mean(d_fake.iter().map(|d| -d.ln())) - entropy(emb, points)
    }

    pub fn arp_gan_c_loss(
        emb_fake: &[Vec<f64>],
        emb_lab: &[Vec<f64>],
        labels: &[usize],
        points: &[Vec<f64>],
        radius: &[f64],
        gamma: f64,
    ) -> f64 {
        -entropy(emb_fake, points) + arp_classifier_loss(emb_lab, labels, points, radius, gamma)
    }

    /// Fraction of (known, novel) pairs with the known score higher, ties one half.
    pub fn mann_whitney(known: &[f64], novel: &[f64]) -> f64 {
        let mut wins = 0.0;
        for &k in known {
            for &n in novel {
                if k > n {
                    wins += 1.0;
                } else if k == n {
                    wins += 0.5;
                }
            }
        }
        wins / (known.len() * novel.len()) as f64
    }
}

use ndarray::Array2;
use rand::Rng;

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

pub fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn rand_matrix<R: Rng>(rng: &mut R, r: usize, c: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((r, c), || rng.random_range(-scale..scale))
}

pub fn rand_labels<R: Rng>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(1..=k)).collect()
}

pub mod suites;
