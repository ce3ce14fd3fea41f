// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use argre::editor::{edit_token, EditConfig};
use argre::linalg::{pca_first_component, Mat, Rng, PCA_MAX_ITERS, PCA_TOL};
use argre::reprstore::{decode_dump, encode_dump};
use argre::rewardnet::RewardNet;
use argre::transition::NonToxicDirection;
use proptest::prelude::*;

use common::{central_diff, random_pairs, scatter, top_eigenvector, RefMlp};

fn ref_of(net: &RewardNet) -> RefMlp {
    let f = |v: &[f32]| v.iter().map(|&x| f64::from(x)).collect::<Vec<f64>>();
    RefMlp {
        dim: net.dim(),
        hidden: net.hidden(),
        w1: f(net.w1()),
        b1: f(net.b1()),
        w2: f(net.w2()),
        b2: f64::from(net.b2()),
    }
}

#[test]
fn jacobi_recovers_known_spectrum() {
    let a = [4.0, 1.0, 0.0, 1.0, 3.0, 0.0, 0.0, 0.0, 1.0];
    let (mut vals, _) = common::jacobi_eigen(&a, 3);
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let s5 = 5f64.sqrt();
    let want = [1.0, (7.0 - s5) / 2.0, (7.0 + s5) / 2.0];
    for (g, w) in vals.iter().zip(want) {
        assert!((g - w).abs() < 1e-12, "{g} vs {w}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pca_matches_jacobi(seed in any::<u64>(), d in 2usize..7, n in 3usize..30) {
        let mut rng = Rng::new(seed);
        // A dominant axis keeps the eigengap away from zero.
        let axis: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let data: Vec<f32> = (0..n)
            .flat_map(|_| {
                let s = 3.0 * rng.normal();
                axis.iter().map(|a| (s * a + 0.3 * rng.normal()) as f32).collect::<Vec<_>>()
            })
            .collect();
        let x = Mat::new(n, d, data).unwrap();
        let got = pca_first_component(&x, PCA_TOL, PCA_MAX_ITERS).unwrap();
        let (want, _) = top_eigenvector(&scatter(&x), d);
        let c: f64 = got.iter().zip(&want).map(|(a, b)| f64::from(*a) * b).sum();
        prop_assert!(c.abs() > 1.0 - 1e-6, "|cos| = {}", c.abs());
    }

    #[test]
    fn reward_matches_f64_reference(seed in any::<u64>(), dim in 1usize..10, hidden in 1usize..40) {
        let mut rng = Rng::new(seed);
        let net = RewardNet::glorot(dim, hidden, &mut rng).unwrap();
        let reference = ref_of(&net);
        let h: Vec<f32> = (0..dim).map(|_| rng.normal() as f32).collect();
        let h64: Vec<f64> = h.iter().map(|&x| f64::from(x)).collect();
        let got = f64::from(net.token_reward(&h).unwrap());
        let want = reference.forward(&h64);
        prop_assert!((got - want).abs() <= 1e-6 * want.abs().max(1.0));

        let fd = central_diff(|x| reference.forward(x), &h64, 1e-4);
        let g = net.input_grad(&h).unwrap();
        for (a, b) in g.iter().zip(&fd) {
            prop_assert!((f64::from(*a) - b).abs() <= 1e-5 * b.abs().max(1.0));
        }
    }

    #[test]
    fn dump_round_trip_is_bitwise(seed in any::<u64>(), dim in 1usize..6, n in 1usize..5) {
        let pairs = random_pairs(&mut Rng::new(seed), n, dim);
        let bytes = encode_dump(dim, &pairs).unwrap();
        let (d2, back) = decode_dump(&bytes).unwrap();
        prop_assert_eq!(d2, dim);
        prop_assert_eq!(encode_dump(dim, &back).unwrap(), bytes);
    }
}

#[test]
fn gate_closed_and_no_refinement_is_identity() {
    let mut rng = Rng::new(5);
    let net = RewardNet::glorot(6, 12, &mut rng).unwrap();
    let d = NonToxicDirection::new(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 2).unwrap();
    let mut cfg = EditConfig::new(-1e30, d);
    cfg.eta = 0.0;
    cfg.refine_iters = 0;
    for _ in 0..50 {
        let h: Vec<f32> = (0..6).map(|_| rng.normal() as f32).collect();
        let out = edit_token(&h, &net, &cfg).unwrap();
        assert!(!out.applied);
        assert_eq!(out.h_edited, h);
    }
}
