// SPDX-License-Identifier: MIT OR Apache-2.0

//! Two-step representation editing applied to each token during decoding.
//!
//! 1. Steering: if the token reward falls short of the non-toxic mean
//!    `r⁺`, shift along `d₊` by `(r⁺ - θ_r(h)) / β`.
//! 2. Refinement: `refine_iters` plain gradient-ascent steps of size `η` on
//!    `θ_r`, applied regardless of whether steering fired.
//!
//! The gap is measured once, before steering.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_len, ensure_finite};
use crate::rewardnet::RewardNet;
use crate::transition::NonToxicDirection;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditConfig {
    pub beta: f32,
    pub eta: f32,
    pub refine_iters: usize,
    pub r_mean_plus: f32,
    pub d_plus: NonToxicDirection,
}

impl EditConfig {
    /// Defaults `β = 1`, `η = 0.5`, five refinement iterations.
    pub fn new(r_mean_plus: f32, d_plus: NonToxicDirection) -> Self {
        Self {
            beta: 1.0,
            eta: 0.5,
            refine_iters: 5,
            r_mean_plus,
            d_plus,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "beta must be > 0, got {}",
                self.beta
            )));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "eta must be >= 0, got {}",
                self.eta
            )));
        }
        if !self.r_mean_plus.is_finite() {
            return Err(Error::NonFinite("r_mean_plus"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteerOutcome {
    pub h: Vec<f32>,
    pub applied: bool,
    pub gap: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditOutcome {
    pub h_edited: Vec<f32>,
    pub applied: bool,
    pub gap: f32,
    pub reward_before: f32,
    pub reward_after: f32,
}

fn check_dims(h: &[f32], net: &RewardNet, cfg: &EditConfig) -> Result<()> {
    check_len(net.dim(), h.len())?;
    check_len(net.dim(), cfg.d_plus.dim())
}

fn steer_with_reward(h: &[f32], reward: f32, cfg: &EditConfig) -> SteerOutcome {
    let gap = cfg.r_mean_plus - reward;
    if gap > 0.0 {
        let scale = f64::from(gap) / f64::from(cfg.beta);
        let h = h
            .iter()
            .zip(cfg.d_plus.as_slice())
            .map(|(&x, &d)| (f64::from(x) + scale * f64::from(d)) as f32)
            .collect();
        SteerOutcome {
            h,
            applied: true,
            gap,
        }
    } else {
        SteerOutcome {
            h: h.to_vec(),
            applied: false,
            gap,
        }
    }
}

/// Indicator-gated shift along `d₊`, sized by the reward gap to `r⁺`.
pub fn steer(h: &[f32], net: &RewardNet, cfg: &EditConfig) -> Result<SteerOutcome> {
    check_dims(h, net, cfg)?;
    let reward = net.token_reward(h)?;
    Ok(steer_with_reward(h, reward, cfg))
}

/// `h ← h + η ∇_h θ_r(h)`, exactly `refine_iters` times.
pub fn refine(h: &[f32], net: &RewardNet, cfg: &EditConfig) -> Result<Vec<f32>> {
    check_dims(h, net, cfg)?;
    let mut cur = h.to_vec();
    if cfg.eta == 0.0 {
        return Ok(cur);
    }
    let eta = f64::from(cfg.eta);
    for _ in 0..cfg.refine_iters {
        let grad = net.input_grad(&cur)?;
        for (x, g) in cur.iter_mut().zip(&grad) {
            *x = (f64::from(*x) + eta * f64::from(*g)) as f32;
        }
        ensure_finite(&cur, "refined representation")?;
    }
    Ok(cur)
}

/// Steering followed by refinement, with reward telemetry.
pub fn edit_token(h: &[f32], net: &RewardNet, cfg: &EditConfig) -> Result<EditOutcome> {
    check_dims(h, net, cfg)?;
    let reward_before = net.token_reward(h)?;
    let steered = steer_with_reward(h, reward_before, cfg);
    let h_edited = refine(&steered.h, net, cfg)?;
    let reward_after = net.token_reward(&h_edited)?;
    Ok(EditOutcome {
        h_edited,
        applied: steered.applied,
        gap: steered.gap,
        reward_before,
        reward_after,
    })
}

/// Callback installed into a generation loop: receives the representation
/// that is about to feed the output head and returns its replacement.
pub trait EditHook {
    fn apply(&mut self, h: &[f32]) -> Result<Vec<f32>>;
}

impl<F> EditHook for F
where
    F: FnMut(&[f32]) -> Result<Vec<f32>>,
{
    fn apply(&mut self, h: &[f32]) -> Result<Vec<f32>> {
        self(h)
    }
}

/// Running totals gathered by [`RewardEditor`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EditTelemetry {
    pub tokens: usize,
    pub applied: usize,
    pub gap_sum: f64,
}

impl EditTelemetry {
    pub fn mean_gap(&self) -> f64 {
        if self.tokens == 0 {
            0.0
        } else {
            self.gap_sum / self.tokens as f64
        }
    }

    pub fn applied_fraction(&self) -> f64 {
        if self.tokens == 0 {
            0.0
        } else {
            self.applied as f64 / self.tokens as f64
        }
    }

    pub fn merge(&mut self, other: &EditTelemetry) {
        self.tokens += other.tokens;
        self.applied += other.applied;
        self.gap_sum += other.gap_sum;
    }
}

/// Editing hook over a frozen reward net.
///
/// Skips the post-edit reward evaluation that [`edit_token`] performs, so
/// the per-token cost is one forward pass plus one forward/backward pass per
/// refinement iteration.
pub struct RewardEditor<'a> {
    net: &'a RewardNet,
    cfg: EditConfig,
    telemetry: EditTelemetry,
}

impl<'a> RewardEditor<'a> {
    pub fn new(net: &'a RewardNet, cfg: EditConfig) -> Result<Self> {
        cfg.validate()?;
        check_len(net.dim(), cfg.d_plus.dim())?;
        Ok(Self {
            net,
            cfg,
            telemetry: EditTelemetry::default(),
        })
    }

    pub fn telemetry(&self) -> EditTelemetry {
        self.telemetry
    }

    pub fn config(&self) -> &EditConfig {
        &self.cfg
    }
}

impl EditHook for RewardEditor<'_> {
    fn apply(&mut self, h: &[f32]) -> Result<Vec<f32>> {
        let reward = self.net.token_reward(h)?;
        let steered = steer_with_reward(h, reward, &self.cfg);
        self.telemetry.tokens += 1;
        self.telemetry.applied += usize::from(steered.applied);
        self.telemetry.gap_sum += f64::from(steered.gap);
        refine(&steered.h, self.net, &self.cfg)
    }
}
