// SPDX-License-Identifier: MIT OR Apache-2.0

//! Non-toxic direction extraction and toxicity transition trajectories.
//!
//! The direction is the leading principal component of the last-token
//! differences `h⁺[-1] - h⁻[-1]`, oriented so that it points from the toxic
//! member towards the non-toxic one. Transition trajectories move each
//! response token of the non-toxic trajectory towards its toxic counterpart
//! along that single direction, in `n_in + 1` equal steps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, check_len, dot_unchecked, Mat, PCA_MAX_ITERS, PCA_TOL};
use crate::reprstore::{AnnotatedPair, Label, RepSequence};

/// Unit direction in representation space along which toxicity decreases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonToxicDirection {
    d_plus: Vec<f32>,
    source_pair_count: usize,
}

impl NonToxicDirection {
    /// Wraps an already-oriented direction, normalizing it.
    pub fn new(direction: Vec<f32>, source_pair_count: usize) -> Result<Self> {
        linalg::ensure_finite(&direction, "direction")?;
        if direction.is_empty() || linalg::norm(&direction) == 0.0 {
            return Err(Error::InvalidConfig("direction must be non-zero".into()));
        }
        Ok(Self {
            d_plus: linalg::normalized(&direction),
            source_pair_count,
        })
    }

    #[inline]
    pub fn as_slice(&self) -> &[f32] {
        &self.d_plus
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d_plus.len()
    }

    #[inline]
    pub fn source_pair_count(&self) -> usize {
        self.source_pair_count
    }
}

/// Last-token difference: non-toxic final row minus toxic final row.
///
/// Each sequence uses its own final position; nothing is truncated here.
pub fn delta_h(pair: &AnnotatedPair) -> Result<Vec<f32>> {
    linalg::sub(pair.non_toxic().last_row(), pair.toxic().last_row())
}

/// Leading principal component of the stacked `Δh`, oriented so that the
/// mean projection of `Δh` onto it is non-negative.
///
/// Each difference enters the PCA together with its negation. The sign of a
/// pairwise difference only encodes which member was listed first, so the
/// symmetrized set has zero mean and its leading component is the dominant
/// axis of the differences themselves rather than of their spread around
/// the mean.
pub fn extract_direction(pairs: &[AnnotatedPair]) -> Result<NonToxicDirection> {
    if pairs.len() < 2 {
        return Err(Error::TooFewPairs {
            needed: 2,
            got: pairs.len(),
        });
    }
    let deltas = pairs.iter().map(delta_h).collect::<Result<Vec<_>>>()?;
    let d = deltas[0].len();
    let mut stacked = Vec::with_capacity(2 * deltas.len() * d);
    for dh in &deltas {
        stacked.extend_from_slice(dh);
    }
    for dh in &deltas {
        stacked.extend(dh.iter().map(|v| -v));
    }
    let mat = Mat::new(2 * deltas.len(), d, stacked)?;
    let mut component = linalg::pca_first_component(&mat, PCA_TOL, PCA_MAX_ITERS)?;

    let mean_proj: f64 = deltas.iter().map(|dh| dot_unchecked(&component, dh)).sum();
    if mean_proj < 0.0 {
        component.iter_mut().for_each(|v| *v = -*v);
    }
    NonToxicDirection::new(component, pairs.len())
}

fn check_pair_dir(pair: &AnnotatedPair, dir: &NonToxicDirection) -> Result<()> {
    check_len(pair.dim(), dir.dim())
}

/// The `lambda`-th point (of `n_in`) on the transition trajectory, with the
/// response cut to `min(T+, T-)` tokens. `lambda = 0` reproduces the
/// truncated non-toxic trajectory.
fn interpolant(
    pair: &AnnotatedPair,
    dir: &NonToxicDirection,
    lambda: usize,
    n_in: usize,
) -> RepSequence {
    let (pos, neg) = (pair.non_toxic(), pair.toxic());
    let m = pos.prompt_len();
    let t_min = pos.resp_len().min(neg.resp_len());
    let d = pos.dim();
    let dp = dir.as_slice();
    let frac = lambda as f64 / (n_in + 1) as f64;

    let mut data = Vec::with_capacity((m + t_min) * d);
    data.extend_from_slice(&pos.reps().as_slice()[..m * d]);
    for t in m..m + t_min {
        let (hp, hn) = (pos.row(t), neg.row(t));
        let proj: f64 = dp
            .iter()
            .zip(hp.iter().zip(hn))
            .map(|(&u, (&a, &b))| f64::from(u) * (f64::from(b) - f64::from(a)))
            .sum();
        let coeff = frac * proj;
        data.extend(
            hp.iter()
                .zip(dp)
                .map(|(&a, &u)| (f64::from(a) + coeff * f64::from(u)) as f32),
        );
    }
    let reps = Mat::new(m + t_min, d, data).expect("interpolant of finite rows is finite");
    let mut out = pos.with_reps_truncated(reps, t_min);
    out.label = Label::Unlabeled;
    out.seq_id = lambda as u64;
    out
}

/// Emits the `n_in` interpolated trajectories `h^1 .. h^n_in`.
pub fn interpolate(
    pair: &AnnotatedPair,
    dir: &NonToxicDirection,
    n_in: usize,
) -> Result<Vec<RepSequence>> {
    check_pair_dir(pair, dir)?;
    Ok((1..=n_in)
        .map(|lambda| interpolant(pair, dir, lambda, n_in))
        .collect())
}

/// Ordered preference pair: `preferred` is the less toxic member.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferencePair {
    pub preferred: RepSequence,
    pub dispreferred: RepSequence,
}

impl PreferencePair {
    /// Response length shared by both members.
    pub fn effective_t(&self) -> usize {
        self.preferred.resp_len()
    }
}

/// The dense pairwise dataset built from all annotated pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDataset {
    pub pairs: Vec<PreferencePair>,
    pub n_in: usize,
}

impl TransitionDataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

fn chain_pairs(
    pair: &AnnotatedPair,
    dir: &NonToxicDirection,
    n_in: usize,
) -> Result<Vec<PreferencePair>> {
    let t_min = pair.non_toxic().resp_len().min(pair.toxic().resp_len());
    let mut chain = Vec::with_capacity(n_in + 2);
    chain.push(pair.non_toxic().truncated(t_min)?);
    chain.extend(interpolate(pair, dir, n_in)?);
    chain.push(pair.toxic().truncated(t_min)?);
    Ok(chain
        .windows(2)
        .map(|w| PreferencePair {
            preferred: w[0].clone(),
            dispreferred: w[1].clone(),
        })
        .collect())
}

/// Builds the `n_in + 1` adjacent preference pairs of every annotated pair,
/// in input order. `n_in = 0` yields the raw (truncated) annotations.
pub fn build_transition_dataset(
    pairs: &[AnnotatedPair],
    dir: &NonToxicDirection,
    n_in: usize,
) -> Result<TransitionDataset> {
    let per_pair = pairs
        .par_iter()
        .map(|p| chain_pairs(p, dir, n_in))
        .collect::<Result<Vec<_>>>()?;
    Ok(TransitionDataset {
        pairs: per_pair.into_iter().flatten().collect(),
        n_in,
    })
}
