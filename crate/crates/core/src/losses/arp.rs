//! Reciprocal-point distance, probabilities, entropy and the three-player losses.

use ndarray::{Array1, Array2, ArrayView1};

use super::{check_finite_input, check_grad, check_labels, log_sum_exp, softmax_row, LossValue, LOG_EPS};
use crate::error::{Error, Result};
use crate::nets::ReciprocalPointSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArpDistance {
    /// `d_e - d_d`.
    pub d: f64,
    /// Mean squared Euclidean distance `(1/m) ||C - P||^2`.
    pub d_e: f64,
    /// Dot product `C . P`.
    pub d_d: f64,
}

pub fn arp_distance(embedding: &[f64], point: &[f64]) -> Result<ArpDistance> {
    if embedding.len() != point.len() {
        return Err(Error::arg(format!(
            "embedding width {} != point width {}",
            embedding.len(),
            point.len()
        )));
    }
    if embedding.is_empty() {
        return Err(Error::arg("zero-width embedding"));
    }
    let (d_e, d_d) = dist_parts(ArrayView1::from(embedding), ArrayView1::from(point));
    Ok(ArpDistance {
        d: d_e - d_d,
        d_e,
        d_d,
    })
}

fn dist_parts(c: ArrayView1<'_, f64>, p: ArrayView1<'_, f64>) -> (f64, f64) {
    let m = c.len() as f64;
    let mut sq = 0.0;
    let mut dot = 0.0;
    for (&a, &b) in c.iter().zip(p.iter()) {
        sq += (a - b) * (a - b);
        dot += a * b;
    }
    (sq / m, dot)
}

fn distances(c: ArrayView1<'_, f64>, points: &Array2<f64>) -> Array1<f64> {
    points
        .rows()
        .into_iter()
        .map(|p| {
            let (e, d) = dist_parts(c, p);
            e - d
        })
        .collect()
}

/// Accumulate `dL/dd_j` into gradients w.r.t. the embedding row and point j.
fn backprop_distance(
    c: ArrayView1<'_, f64>,
    p: ArrayView1<'_, f64>,
    g_d: f64,
    g_c: &mut ndarray::ArrayViewMut1<'_, f64>,
    g_p: &mut ndarray::ArrayViewMut1<'_, f64>,
) {
    let m = c.len() as f64;
    for i in 0..c.len() {
        let diff = 2.0 * (c[i] - p[i]) / m;
        g_c[i] += g_d * (diff - p[i]);
        g_p[i] += g_d * (-diff - c[i]);
    }
}

fn check_widths(emb: &Array2<f64>, points: &Array2<f64>) -> Result<()> {
    if points.nrows() < 2 {
        return Err(Error::arg("reciprocal-point classification needs K >= 2"));
    }
    if emb.nrows() > 0 && emb.ncols() != points.ncols() {
        return Err(Error::arg(format!(
            "embedding width {} != point width {}",
            emb.ncols(),
            points.ncols()
        )));
    }
    Ok(())
}

/// Class probabilities: softmax over `d(C(x), P^j)`, so the farthest point wins.
pub fn p_arp(embedding: &[f64], points: &Array2<f64>) -> Result<Vec<f64>> {
    if points.nrows() < 2 {
        return Err(Error::arg("reciprocal-point classification needs K >= 2"));
    }
    if embedding.len() != points.ncols() {
        return Err(Error::arg(format!(
            "embedding width {} != point width {}",
            embedding.len(),
            points.ncols()
        )));
    }
    let d = distances(ArrayView1::from(embedding), points);
    Ok(softmax_row(d.view()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArpClassifierGrad {
    pub embedding: Array2<f64>,
    pub points: Array2<f64>,
    pub radius: Array1<f64>,
}

/// Reciprocal-point classifier loss: mean of `-log p_arp(y|x)` plus
/// `gamma * max(d_e(C(x), P^y) - R_y, 0)`. The hinge has zero subgradient at equality.
pub fn arp_classifier_loss(
    embeddings: &Array2<f64>,
    labels: &[usize],
    rp: &ReciprocalPointSet,
) -> Result<(LossValue, ArpClassifierGrad)> {
    check_finite_input("cross_entropy", embeddings)?;
    check_widths(embeddings, &rp.points)?;
    check_labels(labels, rp.k(), embeddings.nrows(), "arp_classifier_loss")?;
    let b = embeddings.nrows();
    let mut g_emb = Array2::zeros(embeddings.raw_dim());
    let mut g_pts = Array2::zeros(rp.points.raw_dim());
    let mut g_rad = Array1::zeros(rp.k());
    let (mut ce, mut hinge) = (0.0, 0.0);
    if b > 0 {
        let inv_b = 1.0 / b as f64;
        for (i, (c, &y)) in embeddings.rows().into_iter().zip(labels).enumerate() {
            let d = distances(c, &rp.points);
            ce += log_sum_exp(d.view()) - d[y - 1];
            let probs = softmax_row(d.view());
            let mut gc = g_emb.row_mut(i);
            for (j, p) in probs.into_iter().enumerate() {
                let g_d = (p - if j + 1 == y { 1.0 } else { 0.0 }) * inv_b;
                let mut gp = g_pts.row_mut(j);
                backprop_distance(c, rp.points.row(j), g_d, &mut gc, &mut gp);
            }
            let p_y = rp.points.row(y - 1);
            let (d_e, _) = dist_parts(c, p_y);
            let excess = d_e - rp.radius[y - 1];
            if excess > 0.0 {
                hinge += rp.gamma * excess;
                g_rad[y - 1] -= rp.gamma * inv_b;
                // d(d_e)/dC = 2(C-P)/m, d(d_e)/dP = -2(C-P)/m
                let m = c.len() as f64;
                let scale = rp.gamma * inv_b * 2.0 / m;
                for k in 0..c.len() {
                    let diff = c[k] - p_y[k];
                    gc[k] += scale * diff;
                    g_pts[[y - 1, k]] -= scale * diff;
                }
            }
        }
        ce *= inv_b;
        hinge *= inv_b;
    }
    check_grad("cross_entropy", &g_emb)?;
    check_grad("cross_entropy", &g_pts)?;
    check_grad("hinge", &g_rad)?;
    Ok((
        LossValue::from_terms(vec![("cross_entropy", ce), ("hinge", hinge)])?,
        ArpClassifierGrad {
            embedding: g_emb,
            points: g_pts,
            radius: g_rad,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyGrad {
    pub embedding: Array2<f64>,
    pub points: Array2<f64>,
}

/// Mean Shannon entropy of `p_arp` over generated samples, in `[0, ln K]`.
pub fn entropy_i(embeddings_fake: &Array2<f64>, points: &Array2<f64>) -> Result<(f64, EntropyGrad)> {
    if embeddings_fake.nrows() == 0 {
        return Err(Error::arg("entropy needs a non-empty batch"));
    }
    check_finite_input("entropy", embeddings_fake)?;
    check_widths(embeddings_fake, points)?;
    let b = embeddings_fake.nrows() as f64;
    let max_h = (points.nrows() as f64).ln();
    let mut g_emb = Array2::zeros(embeddings_fake.raw_dim());
    let mut g_pts = Array2::zeros(points.raw_dim());
    let mut total = 0.0;
    for (i, c) in embeddings_fake.rows().into_iter().enumerate() {
        let d = distances(c, points);
        let lse = log_sum_exp(d.view());
        let log_s: Vec<f64> = d.iter().map(|&v| v - lse).collect();
        let s: Vec<f64> = log_s.iter().map(|v| v.exp()).collect();
        // 0 * log 0 = 0: an underflowed probability contributes nothing.
        let h: f64 = -s
            .iter()
            .zip(&log_s)
            .map(|(&p, &lp)| if p > 0.0 { p * lp } else { 0.0 })
            .sum::<f64>();
        total += h;
        let mut gc = g_emb.row_mut(i);
        for j in 0..points.nrows() {
            // dH/dd_j = -S_j (log S_j + H)
            let g_d = if s[j] > 0.0 { -s[j] * (log_s[j] + h) / b } else { 0.0 };
            let mut gp = g_pts.row_mut(j);
            backprop_distance(c, points.row(j), g_d, &mut gc, &mut gp);
        }
    }
    check_grad("entropy", &g_emb)?;
    check_grad("entropy", &g_pts)?;
    Ok((
        (total / b).clamp(0.0, max_h),
        EntropyGrad {
            embedding: g_emb,
            points: g_pts,
        },
    ))
}

fn neg_log_clamped(p: f64) -> (f64, f64) {
    if p > LOG_EPS {
        (-p.ln(), -1.0 / p)
    } else {
        (-LOG_EPS.ln(), 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArpGanDGrad {
    pub d_real: Array1<f64>,
    pub d_fake: Array1<f64>,
}

/// Original GAN discriminator loss: mean `-log D(x)` + mean `-log(1 - D(G(z)))`.
pub fn arp_gan_d_loss(d_real: &Array1<f64>, d_fake: &Array1<f64>) -> Result<(LossValue, ArpGanDGrad)> {
    let mut g_real = Array1::zeros(d_real.len());
    let mut g_fake = Array1::zeros(d_fake.len());
    let (mut tr, mut tf) = (0.0, 0.0);
    let br = d_real.len().max(1) as f64;
    let bf = d_fake.len().max(1) as f64;
    for (g, &p) in g_real.iter_mut().zip(d_real) {
        let (v, dv) = neg_log_clamped(p);
        tr += v / br;
        *g = dv / br;
    }
    for (g, &p) in g_fake.iter_mut().zip(d_fake) {
        let (v, dv) = neg_log_clamped(1.0 - p);
        tf += v / bf;
        *g = -dv / bf;
    }
    check_grad("real", &g_real)?;
    check_grad("fake", &g_fake)?;
    Ok((
        LossValue::from_terms(vec![("real", tr), ("fake", tf)])?,
        ArpGanDGrad {
            d_real: g_real,
            d_fake: g_fake,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArpGanGGrad {
    pub d_fake: Array1<f64>,
    pub embedding: Array2<f64>,
    pub points: Array2<f64>,
}

/// Generator loss: mean `-log D(G(z))` minus the entropy of `p_arp` at the fakes.
pub fn arp_gan_g_loss(
    d_fake: &Array1<f64>,
    embeddings_fake: &Array2<f64>,
    points: &Array2<f64>,
) -> Result<(LossValue, ArpGanGGrad)> {
    arp_gan_g_loss_weighted(d_fake, embeddings_fake, points, 1.0)
}

/// [`arp_gan_g_loss`] with the entropy reward scaled by `entropy_weight`.
/// At weight 0 the entropy is not evaluated and the term is reported as 0.
pub fn arp_gan_g_loss_weighted(
    d_fake: &Array1<f64>,
    embeddings_fake: &Array2<f64>,
    points: &Array2<f64>,
    entropy_weight: f64,
) -> Result<(LossValue, ArpGanGGrad)> {
    if d_fake.is_empty() {
        return Err(Error::arg("generator loss needs a non-empty fake batch"));
    }
    if embeddings_fake.nrows() != d_fake.len() {
        return Err(Error::arg("discriminator outputs and embeddings disagree on batch size"));
    }
    let b = d_fake.len() as f64;
    let mut g_d = Array1::zeros(d_fake.len());
    let mut adv = 0.0;
    for (g, &p) in g_d.iter_mut().zip(d_fake) {
        let (v, dv) = neg_log_clamped(p);
        adv += v / b;
        *g = dv / b;
    }
    let (ent, g_emb, g_pts) = if entropy_weight != 0.0 {
        let (h, eg) = entropy_i(embeddings_fake, points)?;
        (
            -entropy_weight * h,
            eg.embedding * -entropy_weight,
            eg.points * -entropy_weight,
        )
    } else {
        (
            0.0,
            Array2::zeros(embeddings_fake.raw_dim()),
            Array2::zeros(points.raw_dim()),
        )
    };
    check_grad("adversarial", &g_d)?;
    Ok((
        LossValue::from_terms(vec![("adversarial", adv), ("entropy", ent)])?,
        ArpGanGGrad {
            d_fake: g_d,
            embedding: g_emb,
            points: g_pts,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArpGanCGrad {
    pub embedding_fake: Array2<f64>,
    pub embedding_lab: Array2<f64>,
    pub points: Array2<f64>,
    pub radius: Array1<f64>,
}

/// Classifier loss of the three-player game: `-entropy(fakes)` plus the
/// reciprocal-point classifier loss on labelled samples. An empty fake batch
/// drops the entropy term.
pub fn arp_gan_c_loss(
    embeddings_fake: &Array2<f64>,
    embeddings_lab: &Array2<f64>,
    labels: &[usize],
    rp: &ReciprocalPointSet,
) -> Result<(LossValue, ArpGanCGrad)> {
    arp_gan_c_loss_weighted(embeddings_fake, embeddings_lab, labels, rp, 1.0)
}

/// [`arp_gan_c_loss`] with the entropy term scaled by `entropy_weight`.
pub fn arp_gan_c_loss_weighted(
    embeddings_fake: &Array2<f64>,
    embeddings_lab: &Array2<f64>,
    labels: &[usize],
    rp: &ReciprocalPointSet,
    entropy_weight: f64,
) -> Result<(LossValue, ArpGanCGrad)> {
    let (cls, cg) = arp_classifier_loss(embeddings_lab, labels, rp)?;
    let (ent, g_fake, g_pts_ent) = if embeddings_fake.nrows() > 0 && entropy_weight != 0.0 {
        let (h, eg) = entropy_i(embeddings_fake, &rp.points)?;
        (
            -entropy_weight * h,
            eg.embedding * -entropy_weight,
            eg.points * -entropy_weight,
        )
    } else {
        (
            0.0,
            Array2::zeros(embeddings_fake.raw_dim()),
            Array2::zeros(rp.points.raw_dim()),
        )
    };
    let loss = LossValue::from_terms(vec![
        ("entropy", ent),
        ("cross_entropy", cls.term("cross_entropy").unwrap_or(0.0)),
        ("hinge", cls.term("hinge").unwrap_or(0.0)),
    ])?;
    Ok((
        loss,
        ArpGanCGrad {
            embedding_fake: g_fake,
            embedding_lab: cg.embedding,
            points: cg.points + g_pts_ent,
            radius: cg.radius,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn rp(points: Array2<f64>, radius: Vec<f64>, gamma: f64) -> ReciprocalPointSet {
        ReciprocalPointSet::new(points, Array1::from(radius), gamma).unwrap()
    }

    #[test]
    fn distance_examples() {
        let d = arp_distance(&[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!((d.d, d.d_e, d.d_d), (0.0, 0.0, 0.0));
        let d = arp_distance(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!((d.d, d.d_e, d.d_d), (-1.0, 0.0, 1.0));
        let d = arp_distance(&[2.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!((d.d, d.d_e, d.d_d), (2.0, 2.0, 0.0));
        assert!(arp_distance(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn p_arp_examples() {
        let p = p_arp(&[0.0, 0.0], &array![[1.0, 0.0], [0.0, 0.0]]).unwrap();
        let e = 0.5f64.exp() / (0.5f64.exp() + 1.0);
        assert!((p[0] - e).abs() < 1e-15 && (p[0] - 0.6225).abs() < 1e-4);
        let p = p_arp(&[0.0, 0.0], &array![[1.0, 0.0], [-1.0, 0.0]]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15);
        assert!(p_arp(&[0.0], &array![[1.0]]).is_err());
    }

    #[test]
    fn classifier_equidistant_inactive_hinge() {
        let r = rp(array![[1.0, 0.0], [-1.0, 0.0]], vec![5.0, 5.0], 0.1);
        let (l, g) = arp_classifier_loss(&array![[0.0, 0.0]], &[1], &r).unwrap();
        assert!((l.value - 2f64.ln()).abs() < 1e-15);
        assert_eq!(l.term("hinge"), Some(0.0));
        assert!(g.radius.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hinge_contribution() {
        // m = 2, C = [sqrt(3), 0], P^1 = 0 -> d_e = 1.5; R = 1 -> 0.1 * 0.5
        let c = 3f64.sqrt();
        let r = rp(array![[0.0, 0.0], [0.0, 5.0]], vec![1.0, 0.0], 0.1);
        let (l, g) = arp_classifier_loss(&array![[c, 0.0]], &[1], &r).unwrap();
        assert!((l.term("hinge").unwrap() - 0.05).abs() < 1e-12);
        assert!((g.radius[0] + 0.1).abs() < 1e-15);
        // exactly on the range: no hinge, no gradient
        let r = rp(array![[0.0, 0.0], [0.0, 5.0]], vec![2.0, 0.0], 0.1);
        let (l, g) = arp_classifier_loss(&array![[2.0, 0.0]], &[1], &r).unwrap();
        assert_eq!(l.term("hinge"), Some(0.0));
        assert_eq!(g.radius[0], 0.0);
    }

    #[test]
    fn entropy_bounds() {
        let pts = array![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
        let (h, _) = entropy_i(&array![[0.0, 0.0]], &pts).unwrap();
        assert!((h - 4f64.ln()).abs() < 1e-12);
        let far = array![[100.0, 0.0], [0.0, 0.0]];
        let (h, _) = entropy_i(&array![[-50.0, 0.0]], &far).unwrap();
        assert!(h < 1e-12);
        assert!(entropy_i(&Array2::zeros((0, 2)), &far).is_err());
    }

    #[test]
    fn d_loss_examples() {
        let (l, _) = arp_gan_d_loss(&array![0.5, 0.5], &array![0.5]).unwrap();
        assert!((l.value - 2.0 * 2f64.ln()).abs() < 1e-15);
        let (l, _) = arp_gan_d_loss(&array![0.9], &array![0.2]).unwrap();
        assert!((l.value - (-(0.9f64).ln() - 0.8f64.ln())).abs() < 1e-15);
        assert!((l.value - 0.3285).abs() < 1e-4);
        let (l, _) = arp_gan_d_loss(&array![1.0 - 1e-12], &array![1e-12]).unwrap();
        assert!(l.value < 1e-9);
    }

    #[test]
    fn g_loss_examples() {
        let pts = array![[1.0, 0.0], [-1.0, 0.0]];
        let (l, _) = arp_gan_g_loss(&array![1.0], &array![[0.0, 0.0]], &pts).unwrap();
        assert!((l.value + 2f64.ln()).abs() < 1e-12);
        let far = array![[100.0, 0.0], [0.0, 0.0]];
        let (l, _) = arp_gan_g_loss(&array![0.5], &array![[-50.0, 0.0]], &far).unwrap();
        assert!((l.value - 2f64.ln()).abs() < 1e-12);
        let (l, g) = arp_gan_g_loss_weighted(&array![0.5], &array![[0.0, 0.0]], &pts, 0.0).unwrap();
        assert_eq!(l.term("entropy"), Some(0.0));
        assert!(g.embedding.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn c_loss_reductions() {
        let r = rp(array![[1.0, 0.5], [-1.0, 0.2], [0.3, -1.0]], vec![0.1, 0.2, 0.3], 0.1);
        let lab = array![[0.4, 0.1], [-0.3, 0.9]];
        let (cls, _) = arp_classifier_loss(&lab, &[2, 3], &r).unwrap();
        let (c, _) = arp_gan_c_loss(&Array2::zeros((0, 2)), &lab, &[2, 3], &r).unwrap();
        assert_eq!(c.value, cls.value);
        let fake = array![[0.2, 0.2]];
        let (h, _) = entropy_i(&fake, &r.points).unwrap();
        let (c, _) = arp_gan_c_loss(&fake, &Array2::zeros((0, 2)), &[], &r).unwrap();
        assert_eq!(c.value, -h);
    }
}
