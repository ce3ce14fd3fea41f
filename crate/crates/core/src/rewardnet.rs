// SPDX-License-Identifier: MIT OR Apache-2.0

//! Token-level reward model: a two-layer tanh MLP `w2 · tanh(W1 h + b1) + b2`.
//!
//! Parameters live in one flat buffer laid out as `W1 | b1 | W2 | b2`
//! (`W1` row-major `H x d`), which is also the checkpoint blob order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_len, ensure_finite, Rng};
use crate::reprstore::RepSequence;
use crate::transition::TransitionDataset;

pub const DEFAULT_HIDDEN: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

impl Activation {
    pub fn tag(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardNet {
    dim: usize,
    hidden: usize,
    params: Vec<f32>,
}

/// Gradients of the scalar output with respect to every parameter, in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl ParamGrads {
    /// Flattened in parameter order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.w1.len() + 2 * self.b1.len() + 1);
        out.extend(&self.w1);
        out.extend(&self.b1);
        out.extend(&self.w2);
        out.push(self.b2);
        out
    }
}

#[inline]
fn param_count(dim: usize, hidden: usize) -> usize {
    hidden * dim + 2 * hidden + 1
}

impl RewardNet {
    /// Glorot-uniform weights, zero biases.
    pub fn glorot(dim: usize, hidden: usize, rng: &mut Rng) -> Result<Self> {
        if dim == 0 || hidden == 0 {
            return Err(Error::InvalidConfig(format!(
                "reward net needs dim >= 1 and hidden >= 1 (got {dim}, {hidden})"
            )));
        }
        let mut params = vec![0.0f32; param_count(dim, hidden)];
        let bound1 = (6.0 / (dim + hidden) as f64).sqrt();
        let bound2 = (6.0 / (hidden + 1) as f64).sqrt();
        for w in &mut params[..hidden * dim] {
            *w = ((2.0 * rng.uniform() - 1.0) * bound1) as f32;
        }
        let w2_start = hidden * dim + hidden;
        for w in &mut params[w2_start..w2_start + hidden] {
            *w = ((2.0 * rng.uniform() - 1.0) * bound2) as f32;
        }
        Ok(Self {
            dim,
            hidden,
            params,
        })
    }

    /// Builds a net from explicit parameters (`w1` row-major `hidden x dim`).
    pub fn from_parts(dim: usize, w1: &[f32], b1: &[f32], w2: &[f32], b2: f32) -> Result<Self> {
        let hidden = b1.len();
        if dim == 0 || hidden == 0 {
            return Err(Error::InvalidConfig(
                "reward net needs dim, hidden >= 1".into(),
            ));
        }
        check_len(hidden * dim, w1.len())?;
        check_len(hidden, w2.len())?;
        let mut params = Vec::with_capacity(param_count(dim, hidden));
        params.extend_from_slice(w1);
        params.extend_from_slice(b1);
        params.extend_from_slice(w2);
        params.push(b2);
        Self::from_flat(dim, hidden, params)
    }

    /// Wraps a flat `W1 | b1 | W2 | b2` buffer.
    pub fn from_flat(dim: usize, hidden: usize, params: Vec<f32>) -> Result<Self> {
        check_len(param_count(dim, hidden), params.len())?;
        ensure_finite(&params, "reward net parameters")?;
        Ok(Self {
            dim,
            hidden,
            params,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn activation(&self) -> Activation {
        Activation::Tanh
    }

    #[inline]
    pub fn params(&self) -> &[f32] {
        &self.params
    }

    #[inline]
    pub fn w1(&self) -> &[f32] {
        &self.params[..self.hidden * self.dim]
    }

    #[inline]
    pub fn b1(&self) -> &[f32] {
        let s = self.hidden * self.dim;
        &self.params[s..s + self.hidden]
    }

    #[inline]
    pub fn w2(&self) -> &[f32] {
        let s = self.hidden * self.dim + self.hidden;
        &self.params[s..s + self.hidden]
    }

    #[inline]
    pub fn b2(&self) -> f32 {
        self.params[self.params.len() - 1]
    }

    /// Forward pass; writes `tanh(W1 h + b1)` into `act` and returns the
    /// reward. `h` must have length `dim`.
    fn forward_into(&self, h: &[f32], act: &mut [f64]) -> f64 {
        let (w1, b1, w2) = (self.w1(), self.b1(), self.w2());
        let mut out = f64::from(self.b2());
        for (j, (row, a)) in w1.chunks_exact(self.dim).zip(act.iter_mut()).enumerate() {
            let z: f64 = f64::from(b1[j])
                + row
                    .iter()
                    .zip(h)
                    .map(|(&w, &x)| f64::from(w) * f64::from(x))
                    .sum::<f64>();
            *a = z.tanh();
            out += f64::from(w2[j]) * *a;
        }
        out
    }

    fn check_input(&self, h: &[f32]) -> Result<()> {
        check_len(self.dim, h.len())?;
        ensure_finite(h, "reward input")
    }

    fn reward_f64(&self, h: &[f32]) -> Result<f64> {
        self.check_input(h)?;
        let mut act = vec![0.0; self.hidden];
        let r = self.forward_into(h, &mut act);
        if !r.is_finite() {
            return Err(Error::NonFinite("token reward"));
        }
        Ok(r)
    }

    /// Per-token reward `θ_r(h)`.
    pub fn token_reward(&self, h: &[f32]) -> Result<f32> {
        self.reward_f64(h).map(|r| r as f32)
    }

    /// Reward and `∇_h θ_r(h)` from a single forward/backward pass.
    pub fn reward_and_input_grad(&self, h: &[f32]) -> Result<(f32, Vec<f32>)> {
        self.check_input(h)?;
        let mut act = vec![0.0; self.hidden];
        let r = self.forward_into(h, &mut act);
        let mut grad = vec![0.0f64; self.dim];
        for ((row, &a), &w2) in self.w1().chunks_exact(self.dim).zip(&act).zip(self.w2()) {
            let dz = f64::from(w2) * (1.0 - a * a);
            if dz != 0.0 {
                for (g, &w) in grad.iter_mut().zip(row) {
                    *g += dz * f64::from(w);
                }
            }
        }
        let grad: Vec<f32> = grad.into_iter().map(|g| g as f32).collect();
        if !r.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("reward gradient"));
        }
        Ok((r as f32, grad))
    }

    /// `∇_h θ_r(h)`.
    pub fn input_grad(&self, h: &[f32]) -> Result<Vec<f32>> {
        self.reward_and_input_grad(h).map(|(_, g)| g)
    }

    /// Gradient of `θ_r(h)` with respect to all parameters.
    pub fn param_grad(&self, h: &[f32]) -> Result<ParamGrads> {
        self.check_input(h)?;
        let mut act = vec![0.0; self.hidden];
        self.forward_into(h, &mut act);
        let mut flat = vec![0.0f64; self.params.len()];
        self.accumulate_param_grad(h, &act, 1.0, &mut flat);
        let (hd, hh) = (self.hidden * self.dim, self.hidden);
        Ok(ParamGrads {
            w1: flat[..hd].to_vec(),
            b1: flat[hd..hd + hh].to_vec(),
            w2: flat[hd + hh..hd + 2 * hh].to_vec(),
            b2: flat[hd + 2 * hh],
        })
    }

    /// `grad += scale * ∂θ_r(h)/∂params`, given the cached activations.
    fn accumulate_param_grad(&self, h: &[f32], act: &[f64], scale: f64, grad: &mut [f64]) {
        let (hd, hh) = (self.hidden * self.dim, self.hidden);
        let (gw1, rest) = grad.split_at_mut(hd);
        let (gb1, rest) = rest.split_at_mut(hh);
        let (gw2, gb2) = rest.split_at_mut(hh);
        gb2[0] += scale;
        for (j, (grow, &a)) in gw1.chunks_exact_mut(self.dim).zip(act).enumerate() {
            gw2[j] += scale * a;
            let dz = scale * f64::from(self.w2()[j]) * (1.0 - a * a);
            gb1[j] += dz;
            for (g, &x) in grow.iter_mut().zip(h) {
                *g += dz * f64::from(x);
            }
        }
    }

    fn trajectory_reward_f64(&self, seq: &RepSequence) -> Result<f64> {
        check_len(self.dim, seq.dim())?;
        let mut act = vec![0.0; self.hidden];
        let total: f64 = seq
            .response_rows()
            .map(|h| self.forward_into(h, &mut act))
            .sum();
        if !total.is_finite() {
            return Err(Error::NonFinite("trajectory reward"));
        }
        Ok(total)
    }

    /// Sum of token rewards over the response positions only.
    pub fn trajectory_reward(&self, seq: &RepSequence) -> Result<f32> {
        self.trajectory_reward_f64(seq).map(|r| r as f32)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln σ(β_r · gap)` as a function of the trajectory reward gap.
#[inline]
pub fn loss_from_gap(gap: f64, beta_r: f64) -> f64 {
    softplus(-beta_r * gap)
}

/// `∂/∂gap` of [`loss_from_gap`].
#[inline]
pub fn loss_slope(gap: f64, beta_r: f64) -> f64 {
    -beta_r * sigmoid(-beta_r * gap)
}

/// Pairwise preference loss `-ln σ(β_r (R(pref) - R(disp)))`.
pub fn pair_loss(
    net: &RewardNet,
    pref: &RepSequence,
    disp: &RepSequence,
    beta_r: f32,
) -> Result<f32> {
    check_len(pref.dim(), disp.dim())?;
    let gap = net.trajectory_reward_f64(pref)? - net.trajectory_reward_f64(disp)?;
    Ok(loss_from_gap(gap, f64::from(beta_r)) as f32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub beta_r: f32,
    pub lr: f32,
    pub epochs: usize,
    pub batch_pairs: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta_r: 0.05,
            lr: 5e-4,
            epochs: 3,
            batch_pairs: 32,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.beta_r > 0.0 && self.beta_r.is_finite()) {
            return bad(format!("beta_r must be > 0, got {}", self.beta_r));
        }
        // lr = 0 is accepted: it freezes the parameters.
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be >= 0, got {}", self.lr));
        }
        if self.epochs == 0 || self.batch_pairs == 0 {
            return bad("epochs and batch_pairs must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        Ok(())
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f32], grad: &[f64], cfg: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let lr = f64::from(cfg.lr);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let step = lr * (*m / c1) / ((*v / c2).sqrt() + cfg.adam_eps);
            *p = (f64::from(*p) - step) as f32;
        }
    }
}

/// Loss and parameter gradient of one preference pair.
fn pair_loss_and_grad(
    net: &RewardNet,
    pref: &RepSequence,
    disp: &RepSequence,
    beta_r: f64,
) -> (f64, Vec<f64>) {
    let hid = net.hidden;
    let cache = |seq: &RepSequence| -> (f64, Vec<f64>) {
        let mut acts = vec![0.0; seq.resp_len() * hid];
        let total = seq
            .response_rows()
            .zip(acts.chunks_exact_mut(hid))
            .map(|(h, a)| net.forward_into(h, a))
            .sum();
        (total, acts)
    };
    let (rp, ap) = cache(pref);
    let (rd, ad) = cache(disp);
    let gap = rp - rd;
    let loss = loss_from_gap(gap, beta_r);
    let slope = loss_slope(gap, beta_r);
    let mut grad = vec![0.0; net.params.len()];
    for (h, a) in pref.response_rows().zip(ap.chunks_exact(hid)) {
        net.accumulate_param_grad(h, a, slope, &mut grad);
    }
    for (h, a) in disp.response_rows().zip(ad.chunks_exact(hid)) {
        net.accumulate_param_grad(h, a, -slope, &mut grad);
    }
    (loss, grad)
}

/// Adam minimization of the mean pairwise loss over shuffled mini-batches.
///
/// Returns the trained net and the mean training loss of each epoch (each
/// pair's loss taken before its batch's update). Per-pair gradients may be
/// computed in parallel; they are reduced in pair order so the result is
/// bitwise reproducible.
pub fn train(
    net: &RewardNet,
    data: &TransitionDataset,
    cfg: &TrainConfig,
) -> Result<(RewardNet, Vec<f32>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for p in &data.pairs {
        check_len(net.dim, p.preferred.dim())?;
        check_len(net.dim, p.dispreferred.dim())?;
    }
    let mut net = net.clone();
    let mut adam = Adam::new(net.params.len());
    let mut rng = Rng::new(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let beta_r = f64::from(cfg.beta_r);
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut mean_grad = vec![0.0f64; net.params.len()];

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0f64;
        for batch in order.chunks(cfg.batch_pairs) {
            let results: Vec<(f64, Vec<f64>)> = batch
                .par_iter()
                .map(|&i| {
                    let p = &data.pairs[i];
                    pair_loss_and_grad(&net, &p.preferred, &p.dispreferred, beta_r)
                })
                .collect();
            mean_grad.iter_mut().for_each(|g| *g = 0.0);
            for (loss, grad) in &results {
                if !loss.is_finite() {
                    return Err(Error::DivergedLoss { epoch, loss: *loss });
                }
                epoch_loss += loss;
                for (m, g) in mean_grad.iter_mut().zip(grad) {
                    *m += g;
                }
            }
            let inv = 1.0 / batch.len() as f64;
            mean_grad.iter_mut().for_each(|g| *g *= inv);
            adam.update(&mut net.params, &mean_grad, cfg);
            if net.params.iter().any(|p| !p.is_finite()) {
                return Err(Error::DivergedLoss {
                    epoch,
                    loss: f64::NAN,
                });
            }
        }
        curve.push((epoch_loss / data.len() as f64) as f32);
    }
    Ok((net, curve))
}

/// Pooled mean token reward over the response tokens of non-toxic sequences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardStats {
    pub r_mean_plus: f32,
    pub token_count: usize,
}

pub fn compute_r_mean_plus(net: &RewardNet, non_toxic: &[RepSequence]) -> Result<RewardStats> {
    let mut total = 0.0f64;
    let mut count = 0usize;
    for seq in non_toxic {
        total += net.trajectory_reward_f64(seq)?;
        count += seq.resp_len();
    }
    if count == 0 {
        return Err(Error::EmptyInput("no non-toxic response tokens"));
    }
    Ok(RewardStats {
        r_mean_plus: (total / count as f64) as f32,
        token_count: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::reprstore::Label;
    use crate::transition::PreferencePair;

    fn seq(rows: &[Vec<f32>], m: usize) -> RepSequence {
        RepSequence::new(m, Mat::from_rows(rows).unwrap(), Label::Unlabeled, 0, 0).unwrap()
    }

    /// Linear-in-h net with one hidden unit per input coordinate and tiny
    /// weights, so tanh is close to identity: θ(h) ≈ Σ w_j h_j + b2.
    fn identity_net(weights: &[f32], b2: f32) -> RewardNet {
        let d = weights.len();
        let mut w1 = vec![0.0; d * d];
        for i in 0..d {
            w1[i * d + i] = 1e-3;
        }
        let w2: Vec<f32> = weights.iter().map(|w| w * 1e3).collect();
        RewardNet::from_parts(d, &w1, &vec![0.0; d], &w2, b2).unwrap()
    }

    #[test]
    fn constant_net() {
        let net = RewardNet::from_parts(3, &[0.0; 6], &[0.0; 2], &[0.0; 2], 0.7).unwrap();
        assert!((net.token_reward(&[5.0, -1.0, 2.0]).unwrap() - 0.7).abs() < 1e-7);
        assert_eq!(net.input_grad(&[1.0, 1.0, 1.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn tanh_at_zero() {
        let net = RewardNet::from_parts(1, &[1.0], &[0.0], &[1.0], 0.0).unwrap();
        assert_eq!(net.token_reward(&[0.0]).unwrap(), 0.0);
        assert_eq!(net.activation().tag(), "tanh");
    }

    #[test]
    fn input_errors() {
        let net = RewardNet::from_parts(2, &[1.0; 2], &[0.0], &[1.0], 0.0).unwrap();
        assert!(matches!(
            net.token_reward(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            net.token_reward(&[1.0, f32::NAN]),
            Err(Error::NonFinite(_))
        ));
        assert!(RewardNet::from_flat(2, 1, vec![0.0; 4]).is_err());
    }

    #[test]
    fn trajectory_reward_sums_response_only() {
        let net = identity_net(&[1.0, 0.0], 0.0);
        let s = seq(
            &[
                vec![100.0, 1.0],
                vec![0.1, 9.0],
                vec![-0.2, 0.0],
                vec![0.3, 3.0],
            ],
            1,
        );
        assert!((net.trajectory_reward(&s).unwrap() - 0.2).abs() < 1e-6);
        let swapped = seq(
            &[
                vec![-7.0, 2.0],
                vec![0.1, 9.0],
                vec![-0.2, 0.0],
                vec![0.3, 3.0],
            ],
            1,
        );
        assert_eq!(
            net.trajectory_reward(&s).unwrap(),
            net.trajectory_reward(&swapped).unwrap()
        );
        let single = seq(&[vec![1.0, 1.0], vec![0.4, 0.0]], 1);
        assert_eq!(
            net.trajectory_reward(&single).unwrap(),
            net.token_reward(&[0.4, 0.0]).unwrap()
        );
    }

    #[test]
    fn pair_loss_closed_forms() {
        let net = RewardNet::from_parts(1, &[0.0], &[0.0], &[0.0], 3.0).unwrap();
        let a = seq(&[vec![0.0], vec![1.0]], 1);
        let loss = pair_loss(&net, &a, &a, 0.05).unwrap();
        assert!((loss as f64 - 2f64.ln()).abs() < 1e-6);
        assert!((loss_from_gap(20.0, 0.05) - (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-12);
        assert!((loss_from_gap(20.0, 0.05) - 0.313262).abs() < 1e-6);
        let mut prev = f64::INFINITY;
        for gap in [0.0, 1.0, 10.0, 100.0, 1e3] {
            let l = loss_from_gap(gap, 0.05);
            assert!(l < prev && l >= 0.0);
            prev = l;
        }
        assert!(loss_from_gap(1e8, 0.05) >= 0.0 && loss_from_gap(1e8, 0.05) < 1e-300);
        assert!(loss_from_gap(-1e8, 0.05).is_finite());
    }

    #[test]
    fn loss_symmetry_and_beta_sensitivity() {
        for gap in [-5.0, -1.0, 0.0, 0.3, 7.0] {
            let s = loss_from_gap(gap, 0.05) + loss_from_gap(-gap, 0.05);
            assert!(s >= 2.0 * 2f64.ln() - 1e-15);
            if gap == 0.0 {
                assert!((s - 2.0 * 2f64.ln()).abs() < 1e-15);
            } else {
                assert!(s > 2.0 * 2f64.ln());
            }
        }
        for gap in [-1.0, 1.0] {
            let mut prev = 0.0;
            for beta in [0.01, 0.05, 0.1, 0.5, 1.0] {
                let s = loss_slope(gap, beta).abs();
                assert!(s > prev);
                prev = s;
            }
        }
    }

    #[test]
    fn linear_regime_grad() {
        let w = [0.3, -0.2, 0.5];
        let net = identity_net(&w, 0.0);
        let g = net.input_grad(&[0.01, -0.02, 0.0]).unwrap();
        for (a, b) in g.iter().zip(w) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn r_mean_plus_pools_tokens() {
        let net = identity_net(&[1.0], 0.0);
        let a = seq(&[vec![0.0], vec![0.2], vec![0.4]], 1);
        let b = seq(&[vec![0.0], vec![0.6]], 1);
        let s = compute_r_mean_plus(&net, &[a, b]).unwrap();
        assert!((s.r_mean_plus - 0.4).abs() < 1e-4);
        assert_eq!(s.token_count, 3);
        let c = RewardNet::from_parts(1, &[0.0], &[0.0], &[0.0], 0.9).unwrap();
        let one = seq(&[vec![0.0], vec![1.0]], 1);
        assert!((compute_r_mean_plus(&c, &[one]).unwrap().r_mean_plus - 0.9).abs() < 1e-7);
        assert!(matches!(
            compute_r_mean_plus(&c, &[]),
            Err(Error::EmptyInput(_))
        ));
    }

    fn toy_dataset(n: usize, seed: u64) -> TransitionDataset {
        let mut rng = Rng::new(seed);
        let mut pairs = Vec::new();
        for _ in 0..n {
            let mk = |rng: &mut Rng, shift: f32| {
                let rows: Vec<Vec<f32>> = (0..4)
                    .map(|_| vec![shift + 0.3 * rng.normal() as f32, rng.normal() as f32])
                    .collect();
                seq(&rows, 1)
            };
            pairs.push(PreferencePair {
                preferred: mk(&mut rng, 1.0),
                dispreferred: mk(&mut rng, -1.0),
            });
        }
        TransitionDataset { pairs, n_in: 0 }
    }

    #[test]
    fn zero_lr_freezes_parameters() {
        let data = toy_dataset(20, 1);
        let net = RewardNet::glorot(2, 8, &mut Rng::new(2)).unwrap();
        let cfg = TrainConfig {
            lr: 0.0,
            batch_pairs: 4,
            ..TrainConfig::default()
        };
        let (trained, curve) = train(&net, &data, &cfg).unwrap();
        assert!(trained
            .params()
            .iter()
            .zip(net.params())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(curve.len(), 3);
        assert!(curve
            .iter()
            .all(|&l| (l - curve[0]).abs() <= 1e-6 * curve[0]));
    }

    #[test]
    fn training_is_reproducible_and_learns() {
        let data = toy_dataset(64, 3);
        let net = RewardNet::glorot(2, 16, &mut Rng::new(4)).unwrap();
        let cfg = TrainConfig {
            lr: 1e-2,
            beta_r: 0.5,
            batch_pairs: 8,
            seed: 5,
            ..TrainConfig::default()
        };
        let (a, ca) = train(&net, &data, &cfg).unwrap();
        let (b, cb) = train(&net, &data, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ca, cb);
        assert!(ca[2] < ca[0]);
    }

    #[test]
    fn empty_dataset_rejected() {
        let net = RewardNet::glorot(2, 4, &mut Rng::new(0)).unwrap();
        let empty = TransitionDataset {
            pairs: vec![],
            n_in: 0,
        };
        assert!(matches!(
            train(&net, &empty, &TrainConfig::default()),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn divergence_detected() {
        let data = toy_dataset(8, 9);
        let net = RewardNet::glorot(2, 4, &mut Rng::new(0)).unwrap();
        let cfg = TrainConfig {
            lr: f32::MAX,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&net, &data, &cfg),
            Err(Error::DivergedLoss { .. })
        ));
    }
}
