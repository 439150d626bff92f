//! Randomised checks shared by the per-module tests and the acceptance target.
//! Each returns the worst error observed per named case.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sslosr::data::{make_ssl_split, Dataset, OpenSetSplit, SplitParams, SplitSources};
use sslosr::eval::auroc;
use sslosr::losses::*;
use sslosr::nets::{Activation, ArchConfig, ParamSet, ReciprocalPointSet};
use sslosr::training::{FrozenBatch, ModelKind, Player, TrainConfig, TrainState, POINTS};

use super::{oracle, rand_labels, rand_matrix, rel_err, rows};

fn worst(out: &mut Vec<(String, f64)>, name: &str, e: f64) {
    match out.iter_mut().find(|(n, _)| n == name) {
        Some((_, w)) => *w = w.max(e),
        None => out.push((name.to_string(), e)),
    }
}

fn rp(points: &Array2<f64>, radius: &Array1<f64>, gamma: f64) -> ReciprocalPointSet {
    ReciprocalPointSet::new(points.clone(), radius.clone(), gamma).unwrap()
}

/// Library values against the naive oracles on random small batches.
pub fn oracle_suite(trials: usize, seed: u64) -> Vec<(String, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..trials {
        let k = rng.random_range(2..=6);
        let m = rng.random_range(1..=5);
        let (bf, bu, bl) = (
            rng.random_range(1..=5),
            rng.random_range(1..=5),
            rng.random_range(1..=5),
        );
        let logits = rand_matrix(&mut rng, 1, k, 4.0).row(0).to_vec();
        let sm = softmax_k(&logits).unwrap();
        let e = sm
            .iter()
            .zip(oracle::softmax(&logits))
            .map(|(a, b)| rel_err(*a, b))
            .fold(0.0, f64::max);
        worst(&mut out, "softmax_k", e);
        worst(&mut out, "p_fm_fake", rel_err(p_fm_fake(&logits).unwrap(), oracle::p_fm_fake(&logits)));

        let fake = rand_matrix(&mut rng, bf, k, 3.0);
        let unlab = rand_matrix(&mut rng, bu, k, 3.0);
        let lab = rand_matrix(&mut rng, bl, k, 3.0);
        let labels = rand_labels(&mut rng, bl, k);
        let fake1 = rand_matrix(&mut rng, bf, k + 1, 3.0);
        let lab1 = rand_matrix(&mut rng, bl, k + 1, 3.0);
        let (l, _) = kplus1_dc_loss(&fake1, &lab1, &labels).unwrap();
        worst(
            &mut out,
            "kplus1_dc_loss",
            rel_err(l.value, oracle::kplus1_loss(&rows(&fake1), &rows(&lab1), &labels)),
        );
        let (l, _) = fm_dc_loss(&fake, &unlab, &lab, &labels).unwrap();
        worst(
            &mut out,
            "fm_dc_loss",
            rel_err(l.value, oracle::fm_dc_loss(&rows(&fake), &rows(&unlab), &rows(&lab), &labels)),
        );
        let fr = rand_matrix(&mut rng, bu, m + 2, 2.0);
        let ff = rand_matrix(&mut rng, bf, m + 2, 2.0);
        let (l, _) = fm_gen_loss(&fr, &ff, FeatureMatching::BatchMean).unwrap();
        worst(&mut out, "fm_gen_loss", rel_err(l.value, oracle::fm_gen_loss(&rows(&fr), &rows(&ff))));
        let (l, _) = fm_gen_loss(&fr, &ff, FeatureMatching::PerPair).unwrap();
        worst(
            &mut out,
            "fm_gen_loss (per pair)",
            rel_err(l.value, oracle::fm_gen_loss_pairs(&rows(&fr), &rows(&ff))),
        );

        let points = rand_matrix(&mut rng, k, m, 1.5);
        let pts = rows(&points);
        let radius = Array1::from_shape_simple_fn(k, || rng.random_range(0.0..2.0));
        let gamma = rng.random_range(0.0..1.0);
        let c = rand_matrix(&mut rng, 1, m, 1.5).row(0).to_vec();
        let d = arp_distance(&c, &pts[0]).unwrap();
        worst(&mut out, "arp_distance", rel_err(d.d, oracle::dist(&c, &pts[0])));
        let e = p_arp(&c, &points)
            .unwrap()
            .iter()
            .zip(oracle::p_arp(&c, &pts))
            .map(|(a, b)| rel_err(*a, b))
            .fold(0.0, f64::max);
        worst(&mut out, "p_arp", e);
        let emb_l = rand_matrix(&mut rng, bl, m, 1.5);
        let emb_f = rand_matrix(&mut rng, bf, m, 1.5);
        let set = rp(&points, &radius, gamma);
        let (l, _) = arp_classifier_loss(&emb_l, &labels, &set).unwrap();
        worst(
            &mut out,
            "arp_classifier_loss",
            rel_err(
                l.value,
                oracle::arp_classifier_loss(&rows(&emb_l), &labels, &pts, radius.as_slice().unwrap(), gamma),
            ),
        );
        let (h, _) = entropy_i(&emb_f, &points).unwrap();
        worst(&mut out, "entropy_i", rel_err(h, oracle::entropy(&rows(&emb_f), &pts)));
        let dr = Array1::from_shape_simple_fn(bu, || rng.random_range(0.01..0.99));
        let df = Array1::from_shape_simple_fn(bf, || rng.random_range(0.01..0.99));
        let (l, _) = arp_gan_d_loss(&dr, &df).unwrap();
        worst(
            &mut out,
            "arp_gan_d_loss",
            rel_err(l.value, oracle::arp_gan_d_loss(&dr.to_vec(), &df.to_vec())),
        );
        let (l, _) = arp_gan_g_loss(&df, &emb_f, &points).unwrap();
        worst(
            &mut out,
            "arp_gan_g_loss",
            rel_err(l.value, oracle::arp_gan_g_loss(&df.to_vec(), &rows(&emb_f), &pts)),
        );
        let (l, _) = arp_gan_c_loss(&emb_f, &emb_l, &labels, &set).unwrap();
        worst(
            &mut out,
            "arp_gan_c_loss",
            rel_err(
                l.value,
                oracle::arp_gan_c_loss(
                    &rows(&emb_f),
                    &rows(&emb_l),
                    &labels,
                    &pts,
                    radius.as_slice().unwrap(),
                    gamma,
                ),
            ),
        );
    }
    out
}

pub const FD_STEP: f64 = 1e-4;

/// `||numeric - analytic|| / max(||numeric||, ||analytic||)` for a function of one array.
pub fn fd_error<D: ndarray::Dimension>(
    x: &ndarray::Array<f64, D>,
    analytic: &ndarray::Array<f64, D>,
    f: impl Fn(&ndarray::Array<f64, D>) -> f64,
) -> f64 {
    assert_eq!(x.shape(), analytic.shape());
    let mut diff = 0.0;
    let (mut na, mut nn) = (0.0, 0.0);
    for i in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp.as_slice_mut().unwrap()[i] += FD_STEP;
        xm.as_slice_mut().unwrap()[i] -= FD_STEP;
        let num = (f(&xp) - f(&xm)) / (2.0 * FD_STEP);
        let an = analytic.as_slice().unwrap()[i];
        diff += (num - an) * (num - an);
        na += an * an;
        nn += num * num;
    }
    let scale = na.sqrt().max(nn.sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff.sqrt() / scale
    }
}

/// Central differences for every loss w.r.t. its inputs, points and ranges.
pub fn loss_gradient_suite(seed: u64) -> Vec<(String, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..5 {
        let (k, m, bf, bu, bl) = (3, 4, 3, 4, 3);
        let fake = rand_matrix(&mut rng, bf, k, 2.0);
        let unlab = rand_matrix(&mut rng, bu, k, 2.0);
        let lab = rand_matrix(&mut rng, bl, k, 2.0);
        let labels = rand_labels(&mut rng, bl, k);

        let (_, g) = cross_entropy(&lab, &labels).unwrap();
        worst(&mut out, "cross_entropy/logits", fd_error(&lab, &g.logits, |x| {
            cross_entropy(x, &labels).unwrap().0.value
        }));

        let fake1 = rand_matrix(&mut rng, bf, k + 1, 2.0);
        let lab1 = rand_matrix(&mut rng, bl, k + 1, 2.0);
        let (_, g) = kplus1_dc_loss(&fake1, &lab1, &labels).unwrap();
        worst(&mut out, "kplus1_dc_loss/fake", fd_error(&fake1, &g.fake, |x| {
            kplus1_dc_loss(x, &lab1, &labels).unwrap().0.value
        }));
        worst(&mut out, "kplus1_dc_loss/lab", fd_error(&lab1, &g.lab, |x| {
            kplus1_dc_loss(&fake1, x, &labels).unwrap().0.value
        }));

        let (_, g) = fm_dc_loss(&fake, &unlab, &lab, &labels).unwrap();
        worst(&mut out, "fm_dc_loss/fake", fd_error(&fake, &g.fake, |x| {
            fm_dc_loss(x, &unlab, &lab, &labels).unwrap().0.value
        }));
        worst(&mut out, "fm_dc_loss/unlab", fd_error(&unlab, &g.unlab, |x| {
            fm_dc_loss(&fake, x, &lab, &labels).unwrap().0.value
        }));
        worst(&mut out, "fm_dc_loss/lab", fd_error(&lab, &g.lab, |x| {
            fm_dc_loss(&fake, &unlab, x, &labels).unwrap().0.value
        }));

        for (mode, tag) in [(FeatureMatching::BatchMean, "mean"), (FeatureMatching::PerPair, "pairs")] {
            let fr = rand_matrix(&mut rng, bu, 5, 1.0);
            let ff = rand_matrix(&mut rng, bf, 5, 1.0);
            let (_, g) = fm_gen_loss(&fr, &ff, mode).unwrap();
            worst(&mut out, &format!("fm_gen_loss[{tag}]/real"), fd_error(&fr, &g.real, |x| {
                fm_gen_loss(x, &ff, mode).unwrap().0.value
            }));
            worst(&mut out, &format!("fm_gen_loss[{tag}]/fake"), fd_error(&ff, &g.fake, |x| {
                fm_gen_loss(&fr, x, mode).unwrap().0.value
            }));
        }

        let points = rand_matrix(&mut rng, k, m, 1.0);
        let emb_l = rand_matrix(&mut rng, bl, m, 1.0);
        let emb_f = rand_matrix(&mut rng, bf, m, 1.0);
        // R = 0 keeps every hinge active; a huge R keeps every hinge inactive.
        for (regime, r) in [("hinge-active", 0.0), ("hinge-inactive", 1e3)] {
            let radius = Array1::from_elem(k, r);
            let set = rp(&points, &radius, 0.1);
            let (l, g) = arp_classifier_loss(&emb_l, &labels, &set).unwrap();
            assert_eq!(l.term("hinge").unwrap() > 0.0, r == 0.0);
            let f_emb = |x: &Array2<f64>| arp_classifier_loss(x, &labels, &set).unwrap().0.value;
            let f_pts = |x: &Array2<f64>| {
                arp_classifier_loss(&emb_l, &labels, &rp(x, &radius, 0.1)).unwrap().0.value
            };
            let f_rad = |x: &Array1<f64>| {
                arp_classifier_loss(&emb_l, &labels, &rp(&points, x, 0.1)).unwrap().0.value
            };
            worst(&mut out, &format!("arp_classifier_loss[{regime}]/embedding"), fd_error(&emb_l, &g.embedding, f_emb));
            worst(&mut out, &format!("arp_classifier_loss[{regime}]/points"), fd_error(&points, &g.points, f_pts));
            worst(&mut out, &format!("arp_classifier_loss[{regime}]/radius"), fd_error(&radius, &g.radius, f_rad));

            let (_, g) = arp_gan_c_loss(&emb_f, &emb_l, &labels, &set).unwrap();
            worst(&mut out, &format!("arp_gan_c_loss[{regime}]/fake"), fd_error(&emb_f, &g.embedding_fake, |x| {
                arp_gan_c_loss(x, &emb_l, &labels, &set).unwrap().0.value
            }));
            worst(&mut out, &format!("arp_gan_c_loss[{regime}]/lab"), fd_error(&emb_l, &g.embedding_lab, |x| {
                arp_gan_c_loss(&emb_f, x, &labels, &set).unwrap().0.value
            }));
            worst(&mut out, &format!("arp_gan_c_loss[{regime}]/points"), fd_error(&points, &g.points, |x| {
                arp_gan_c_loss(&emb_f, &emb_l, &labels, &rp(x, &radius, 0.1)).unwrap().0.value
            }));
            worst(&mut out, &format!("arp_gan_c_loss[{regime}]/radius"), fd_error(&radius, &g.radius, |x| {
                arp_gan_c_loss(&emb_f, &emb_l, &labels, &rp(&points, x, 0.1)).unwrap().0.value
            }));
        }

        let (_, g) = entropy_i(&emb_f, &points).unwrap();
        worst(&mut out, "entropy_i/embedding", fd_error(&emb_f, &g.embedding, |x| entropy_i(x, &points).unwrap().0));
        worst(&mut out, "entropy_i/points", fd_error(&points, &g.points, |x| entropy_i(&emb_f, x).unwrap().0));

        let dr = Array1::from_shape_simple_fn(bu, || rng.random_range(0.05..0.95));
        let df = Array1::from_shape_simple_fn(bf, || rng.random_range(0.05..0.95));
        let (_, g) = arp_gan_d_loss(&dr, &df).unwrap();
        worst(&mut out, "arp_gan_d_loss/real", fd_error(&dr, &g.d_real, |x| arp_gan_d_loss(x, &df).unwrap().0.value));
        worst(&mut out, "arp_gan_d_loss/fake", fd_error(&df, &g.d_fake, |x| arp_gan_d_loss(&dr, x).unwrap().0.value));

        let (_, g) = arp_gan_g_loss(&df, &emb_f, &points).unwrap();
        worst(&mut out, "arp_gan_g_loss/d_fake", fd_error(&df, &g.d_fake, |x| {
            arp_gan_g_loss(x, &emb_f, &points).unwrap().0.value
        }));
        worst(&mut out, "arp_gan_g_loss/embedding", fd_error(&emb_f, &g.embedding, |x| {
            arp_gan_g_loss(&df, x, &points).unwrap().0.value
        }));
        worst(&mut out, "arp_gan_g_loss/points", fd_error(&points, &g.points, |x| {
            arp_gan_g_loss(&df, &emb_f, x).unwrap().0.value
        }));
    }
    out
}

/// Small smooth architecture so finite differences never straddle a kink.
pub fn tiny_tanh_arch(k: usize) -> ArchConfig {
    ArchConfig {
        input_shape: vec![2],
        num_classes: k,
        embedding_dim: 4,
        noise_dim: 3,
        classifier_hidden: vec![6, 5],
        classifier_conv: vec![],
        generator_hidden: vec![6],
        generator_conv: vec![],
        discriminator_hidden: vec![6],
        discriminator_conv: vec![],
        activation: Activation::Tanh,
    }
}

/// A small 2D split with `k` Gaussian blobs and one novel blob.
pub fn toy_split(k: usize, per: usize, labels_per_category: usize, seed: u64) -> OpenSetSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blob = |n: usize, cats: &[(f64, f64)]| {
        let mut x = Array2::zeros((n * cats.len(), 2));
        let mut y = Vec::new();
        for (c, &(cx, cy)) in cats.iter().enumerate() {
            for i in 0..n {
                x[[c * n + i, 0]] = cx + rng.random_range(-0.1..0.1);
                x[[c * n + i, 1]] = cy + rng.random_range(-0.1..0.1);
                y.push(c + 1);
            }
        }
        (x, y)
    };
    let cats: Vec<(f64, f64)> = (0..k)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / k as f64;
            (0.6 * a.cos(), 0.6 * a.sin())
        })
        .collect();
    let names: Vec<String> = (1..=k).map(|i| i.to_string()).collect();
    let (x, y) = blob(per, &cats);
    let train = Dataset::new("toy", vec![2], x, y, names.clone()).unwrap();
    let (x, y) = blob(per, &cats);
    let test = Dataset::new("toy", vec![2], x, y, names).unwrap();
    let (x, y) = blob(per, &[(0.0, 0.0)]);
    let novel = Dataset::new("toy-novel", vec![2], x, y, vec!["novel".into()]).unwrap();
    make_ssl_split(
        SplitSources {
            train: &train,
            test: Some(&test),
            novel: Some(&novel),
        },
        &SplitParams {
            labels_per_category,
            holdout_categories: None,
            max_unlabelled: None,
            seed,
        },
    )
    .unwrap()
}

fn group_fd(state: &TrainState, player: Player, batch: &FrozenBatch, group: &str, analytic: &ParamSet) -> f64 {
    let base = state.params(group).unwrap().clone();
    let mut worst_err: f64 = 0.0;
    for (name, a) in analytic.iter() {
        let x = base.get(name).unwrap().clone();
        let e = fd_error(&x, a, |xv| {
            let mut s = state.clone();
            let mut p = base.clone();
            *p.get_mut(name).unwrap() = xv.clone();
            s.set_params(group, p).unwrap();
            s.objective(player, batch).unwrap().value
        });
        worst_err = worst_err.max(e);
    }
    worst_err
}

/// Central differences of every player's objective w.r.t. every parameter
/// group it owns, through the actual networks.
pub fn network_gradient_suite(seed: u64) -> Vec<(String, f64)> {
    let split = toy_split(3, 8, 2, seed);
    let mut out = Vec::new();
    for kind in ModelKind::ALL {
        let regimes: &[(&str, f64)] = if kind.uses_points() {
            &[("hinge-active", 0.0), ("hinge-inactive", 1e3)]
        } else {
            &[("", 0.0)]
        };
        for &(regime, r) in regimes {
            let mut cfg = TrainConfig::new(kind, tiny_tanh_arch(3));
            cfg.seed = seed;
            cfg.batch_size = 4;
            let mut state = TrainState::new(cfg, 3).unwrap();
            if kind.uses_points() {
                let mut p = state.params(POINTS).unwrap().clone();
                p.get_mut("radius").unwrap().fill(r);
                state.set_params(POINTS, p).unwrap();
            }
            let batch = state.next_batch(&split).unwrap();
            for &player in kind.players() {
                let (_, grads) = state.gradients(player, &batch).unwrap();
                for (group, g) in &grads {
                    let e = group_fd(&state, player, &batch, group, g);
                    let tag = if regime.is_empty() { String::new() } else { format!("[{regime}]") };
                    worst(&mut out, &format!("{kind}{tag}/{}/{group}", player.as_str()), e);
                }
            }
        }
    }
    out
}

/// Largest gap between the library AUROC (and its ROC trapezoid) and the
/// pairwise oracle over random pools, including tie-heavy ones.
pub fn auroc_suite(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_gap: f64 = 0.0;
    for t in 0..trials {
        let n = rng.random_range(1..=200);
        let m = rng.random_range(1..=200);
        let levels = if t % 2 == 0 { 5.0 } else { 1e6 };
        let mut draw = |shift: f64| -> Vec<f64> {
            (0..if shift > 0.0 { n } else { m })
                .map(|_| ((rng.random::<f64>() + shift) * levels).round() / levels)
                .collect()
        };
        let known = draw(0.3);
        let novel = draw(0.0);
        let a = auroc(&known, &novel).unwrap();
        let o = oracle::mann_whitney(&known, &novel);
        worst_gap = worst_gap.max((a.value - o).abs()).max((a.trapezoid - o).abs());
    }
    worst_gap
}
