mod common;

use common::suites::{loss_gradient_suite, oracle_suite};
use common::{oracle, rand_matrix};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sslosr::losses::*;
use sslosr::nets::ReciprocalPointSet;

#[test]
fn losses_agree_with_naive_oracles() {
    for (name, e) in oracle_suite(300, 11) {
        assert!(e <= 1e-9, "{name}: relative error {e:e}");
    }
}

#[test]
fn loss_gradients_match_central_differences() {
    for (name, e) in loss_gradient_suite(5) {
        assert!(e < 1e-4, "{name}: relative error {e:e}");
    }
}

#[test]
fn fm_gen_loss_is_zero_for_identical_batches() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = rand_matrix(&mut rng, 6, 4, 1.0);
    let (l, g) = fm_gen_loss(&a, &a, FeatureMatching::BatchMean).unwrap();
    assert_eq!(l.value, 0.0);
    assert!(g.fake.iter().all(|v| *v == 0.0));
}

#[test]
fn hinge_is_exactly_zero_with_zero_gamma() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let emb = rand_matrix(&mut rng, 5, 3, 1.0);
    let pts = rand_matrix(&mut rng, 3, 3, 1.0);
    let set = ReciprocalPointSet::new(pts, Array1::zeros(3), 0.0).unwrap();
    let (l, g) = arp_classifier_loss(&emb, &[1, 2, 3, 1, 2], &set).unwrap();
    assert_eq!(l.term("hinge"), Some(0.0));
    assert!(g.radius.iter().all(|v| *v == 0.0));
}

#[test]
fn degenerate_inputs_are_rejected() {
    let lab = Array2::<f64>::zeros((2, 3));
    assert!(cross_entropy(&lab, &[1, 4]).is_err());
    assert!(cross_entropy(&lab, &[0, 1]).is_err());
    assert!(kplus1_dc_loss(&Array2::zeros((1, 3)), &lab, &[1, 3]).is_err());
    assert!(fm_gen_loss(&Array2::zeros((0, 3)), &lab, FeatureMatching::BatchMean).is_err());
    assert!(p_arp(&[0.0, 0.0], &Array2::zeros((1, 2))).is_err());
    assert!(entropy_i(&Array2::zeros((0, 2)), &Array2::zeros((3, 2))).is_err());
}

#[test]
fn empty_labelled_batch_warns_instead_of_failing() {
    let f = Array2::<f64>::zeros((2, 3));
    let (l, _) = fm_dc_loss(&f, &f, &Array2::zeros((0, 3)), &[]).unwrap();
    assert_eq!(l.term("supervised"), Some(0.0));
    assert!(!l.warnings.is_empty());
}

fn logits() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-30.0f64..30.0, 2..8)
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(v in logits()) {
        let p = softmax_k(&v).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn softmax_ignores_a_common_shift(v in logits(), s in -50.0f64..50.0) {
        let a = softmax_k(&v).unwrap();
        let shifted: Vec<f64> = v.iter().map(|x| x + s).collect();
        let b = softmax_k(&shifted).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn fm_real_and_fake_are_complementary(v in logits()) {
        let f = p_fm_fake(&v).unwrap();
        let r = p_fm_real(&v).unwrap();
        prop_assert!((f + r - 1.0).abs() < 1e-12);
        prop_assert!((f - oracle::p_fm_fake(&v)).abs() < 1e-12);
    }

    #[test]
    fn entropy_stays_in_range(seed in 0u64..1000, k in 2usize..7, b in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let emb = rand_matrix(&mut rng, b, 3, 5.0);
        let pts = rand_matrix(&mut rng, k, 3, 5.0);
        let (h, _) = entropy_i(&emb, &pts).unwrap();
        prop_assert!(h >= 0.0 && h <= (k as f64).ln() + 1e-12);
    }

    #[test]
    fn p_arp_prefers_the_farthest_point(seed in 0u64..1000, k in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = rand_matrix(&mut rng, k, 4, 2.0);
        let c = rand_matrix(&mut rng, 1, 4, 2.0).row(0).to_vec();
        let p = p_arp(&c, &pts).unwrap();
        let d: Vec<f64> = (0..k)
            .map(|i| arp_distance(&c, pts.row(i).as_slice().unwrap()).unwrap().d)
            .collect();
        let am = |v: &[f64]| (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b });
        prop_assert_eq!(am(&p), am(&d));
    }

    #[test]
    fn loss_value_is_the_sum_of_its_terms(seed in 0u64..1000, k in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = rand_matrix(&mut rng, 3, k, 3.0);
        let u = rand_matrix(&mut rng, 4, k, 3.0);
        let l = rand_matrix(&mut rng, 2, k, 3.0);
        let (v, _) = fm_dc_loss(&f, &u, &l, &[1, k]).unwrap();
        let s: f64 = v.terms.iter().map(|t| t.1).sum();
        prop_assert!((v.value - s).abs() <= 1e-12 * v.value.abs().max(1.0));
        prop_assert!(v.value >= 0.0);
    }

    #[test]
    fn discriminator_loss_is_nonnegative_and_finite(
        r in prop::collection::vec(0.0f64..=1.0, 1..6),
        f in prop::collection::vec(0.0f64..=1.0, 1..6),
    ) {
        let (l, g) = arp_gan_d_loss(&Array1::from(r), &Array1::from(f)).unwrap();
        prop_assert!(l.value.is_finite() && l.value >= 0.0);
        prop_assert!(g.d_real.iter().chain(g.d_fake.iter()).all(|v| v.is_finite()));
    }
}
