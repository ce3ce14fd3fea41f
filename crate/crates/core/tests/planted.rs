// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use argre::linalg::{cosine, dot, Mat, Rng};
use argre::plantedlm::{PlantedConfig, PlantedModel};
use argre::reprstore::encode_dump;
use argre::transition::extract_direction;

use common::spearman;

fn model(seed: u64) -> PlantedModel {
    PlantedModel::new(PlantedConfig {
        seed,
        ..PlantedConfig::default()
    })
    .unwrap()
}

#[test]
fn direction_recovered_across_seeds() {
    for seed in 0..5 {
        let m = model(seed);
        let pairs = m
            .make_pair_corpus(100, 8, 16, &mut Rng::new(100 + seed))
            .unwrap();
        let d = extract_direction(&pairs).unwrap();
        let neg_u: Vec<f32> = m.toxic_direction().iter().map(|x| -x).collect();
        let c = cosine(d.as_slice(), &neg_u).unwrap();
        assert!(c >= 0.9, "seed {seed}: cos {c}");
    }
}

#[test]
fn toxic_mass_tracks_planted_coordinate() {
    let m = model(3);
    let mut rng = Rng::new(4);
    let (mut mass, mut proj) = (Vec::new(), Vec::new());
    while mass.len() < 10_000 {
        let prompt = m.sample_prompt(4, &mut rng).unwrap();
        let g = m.generate(&prompt, 96, None, &mut rng).unwrap();
        for h in g.trace.iter_rows() {
            mass.push(m.toxic_mass(h));
            proj.push(f64::from(dot(m.toxic_direction(), h).unwrap()));
        }
    }
    mass.truncate(10_000);
    proj.truncate(10_000);
    let rho = spearman(&proj, &mass);
    assert!(rho >= 0.95, "rank correlation {rho}");
}

#[test]
fn toxic_prompts_reinforce_toxicity() {
    let m = PlantedModel::new(PlantedConfig {
        plant_gain: 4.0,
        noise_sigma: 0.0,
        seed: 5,
        ..PlantedConfig::default()
    })
    .unwrap();
    let n_toxic = m.n_toxic();
    let toxic_prompt: Vec<usize> = (0..8).map(|i| i % n_toxic).collect();
    let clean_prompt: Vec<usize> = (0..8).map(|i| n_toxic + i).collect();
    let rate = |prompt: &[usize]| {
        let mut hits = 0usize;
        for s in 0..1000 {
            let g = m.generate(prompt, 16, None, &mut Rng::new(s)).unwrap();
            hits += g.tokens.iter().filter(|&&t| m.is_toxic(t)).count();
        }
        hits as f64 / 16_000.0
    };
    let (t, c) = (rate(&toxic_prompt), rate(&clean_prompt));
    assert!(t > c, "toxic-prompt rate {t} vs clean-prompt rate {c}");
}

#[test]
fn corpus_members_are_biased_as_labelled() {
    let m = model(0);
    let samples = m.sample_pairs(100, 8, 16, &mut Rng::new(8)).unwrap();
    let mean = |f: &dyn Fn(&argre::plantedlm::PairSample) -> f64| {
        samples.iter().map(f).sum::<f64>() / samples.len() as f64
    };
    let toxic = mean(&|s| m.toxic_rate(&s.toxic_tokens).unwrap());
    let clean = mean(&|s| m.toxic_rate(&s.clean_tokens).unwrap());
    assert!(toxic >= 0.8, "toxic member rate {toxic}");
    assert!(clean <= 0.2, "clean member rate {clean}");
}

#[test]
fn corpus_dump_bytes_are_reproducible() {
    let m = model(1);
    let bytes = |seed| {
        let pairs = m.make_pair_corpus(100, 8, 16, &mut Rng::new(seed)).unwrap();
        encode_dump(m.dim(), &pairs).unwrap()
    };
    assert_eq!(bytes(7), bytes(7));
    assert_ne!(bytes(7), bytes(8));
}

fn greedy(m: &PlantedModel, prompt: &[usize], n: usize) -> Vec<usize> {
    let cfg = m.config();
    let a = f64::from(cfg.ema_alpha);
    let mut h = vec![0.0f32; m.dim()];
    let step = |h: &mut Vec<f32>, t: usize| {
        for (x, &e) in h.iter_mut().zip(m.embeddings().row(t)) {
            *x = (a * f64::from(*x) + (1.0 - a) * f64::from(e)) as f32;
        }
    };
    prompt.iter().for_each(|&t| step(&mut h, t));
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let logits = m.logits(&h);
        let best = (0..logits.len())
            .max_by(|&i, &j| logits[i].partial_cmp(&logits[j]).unwrap())
            .unwrap();
        out.push(best);
        step(&mut h, best);
    }
    out
}

#[test]
fn greedy_continuation_minimizes_positionwise_nll() {
    let m = model(2);
    let mut rng = Rng::new(0);
    for _ in 0..20 {
        let prompt = m.sample_prompt(6, &mut rng).unwrap();
        let cont = greedy(&m, &prompt, 12);
        let base = m.token_nlls(&prompt, &cont).unwrap();
        for _ in 0..10 {
            let k = rng.below(cont.len());
            let mut alt = cont.clone();
            alt[k] = (alt[k] + 1 + rng.below(m.vocab_size() - 1)) % m.vocab_size();
            let perturbed = m.token_nlls(&prompt, &alt).unwrap();
            assert!(
                base[k] <= perturbed[k],
                "position {k}: {} > {}",
                base[k],
                perturbed[k]
            );
        }
    }
}

#[test]
fn zero_state_gives_uniform_nll() {
    let cfg = PlantedConfig {
        vocab_size: 16,
        dim: 16,
        toxic_fraction: 0.25,
        ema_alpha: 0.5,
        noise_sigma: 0.0,
        ..PlantedConfig::default()
    };
    // Token 0 embeds at the origin, so h stays zero and every step is uniform.
    let mut data = vec![0.0f32; 16 * 16];
    for v in 1..16 {
        data[v * 16 + v] = 1.0;
    }
    let mut u = vec![0.0f32; 16];
    u[0] = 1.0;
    let m = PlantedModel::from_parts(cfg, Mat::new(16, 16, data).unwrap(), u, 4).unwrap();
    let nll = m.nll_under_base(&[0, 0], &[0, 0, 0]).unwrap();
    assert!((nll - 16f64.ln()).abs() < 1e-12);
}
