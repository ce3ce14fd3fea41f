// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic autoregressive generator with a planted toxicity direction.
//!
//! The hidden state is an exponential moving average of token embeddings
//! plus Gaussian noise, and the output head scores token `v` as
//! `e_v · h`. Toxic embeddings carry an extra `γ u` on top of a base vector
//! orthogonal to `u`, so generating a toxic token pushes `h` along `u`,
//! which in turn raises every toxic logit. The ground-truth non-toxic
//! direction is therefore `-u`.

use serde::{Deserialize, Serialize};

use crate::editor::EditHook;
use crate::error::{Error, Result};
use crate::linalg::{dot_unchecked, Mat, Rng};
use crate::reprstore::{AnnotatedPair, Label, RepSequence};

const MODEL_TAG_PREFIX: &str = "planted:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedConfig {
    pub vocab_size: usize,
    pub toxic_fraction: f64,
    pub dim: usize,
    pub ema_alpha: f32,
    pub plant_gain: f32,
    pub noise_sigma: f32,
    pub temperature: f32,
    /// Expected L2 norm of the base (pre-plant) embeddings.
    pub embed_norm: f32,
    /// Logit offset towards (toxic member) or away from (clean member) the
    /// toxic vocabulary when building annotation pairs.
    pub corpus_bias: f32,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            vocab_size: 64,
            toxic_fraction: 0.25,
            dim: 32,
            ema_alpha: 0.9,
            plant_gain: 1.5,
            noise_sigma: 0.1,
            temperature: 1.0,
            embed_norm: 1.0,
            corpus_bias: 4.0,
            seed: 0,
        }
    }
}

impl PlantedConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if self.vocab_size < 2 || self.dim == 0 {
            return bad("planted model needs vocab_size >= 2 and dim >= 1");
        }
        if !(self.toxic_fraction > 0.0 && self.toxic_fraction < 1.0) {
            return bad("toxic_fraction must lie in (0, 1)");
        }
        if !(self.ema_alpha > 0.0 && self.ema_alpha < 1.0) {
            return bad("ema_alpha must lie in (0, 1)");
        }
        if !(self.plant_gain > 0.0 && self.noise_sigma >= 0.0) {
            return bad("plant_gain must be > 0 and noise_sigma >= 0");
        }
        if !(self.temperature > 0.0 && self.embed_norm >= 0.0) {
            return bad("temperature must be > 0 and embed_norm >= 0");
        }
        if !self.corpus_bias.is_finite() {
            return bad("corpus_bias must be finite");
        }
        Ok(())
    }

    pub fn n_toxic(&self) -> usize {
        ((self.vocab_size as f64 * self.toxic_fraction).round() as usize)
            .clamp(1, self.vocab_size - 1)
    }

    /// Tag written into dump manifests so the model can be rebuilt later.
    pub fn model_tag(&self) -> String {
        format!(
            "{MODEL_TAG_PREFIX}{}",
            serde_json::to_string(self).expect("config serializes")
        )
    }

    /// Parses a tag produced by [`PlantedConfig::model_tag`].
    pub fn from_model_tag(tag: &str) -> Result<Self> {
        let json = tag.strip_prefix(MODEL_TAG_PREFIX).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "model tag {tag:?} does not describe a planted model"
            ))
        })?;
        Ok(serde_json::from_str(json)?)
    }
}

#[derive(Debug, Clone)]
pub struct PlantedModel {
    cfg: PlantedConfig,
    embeddings: Mat,
    u: Vec<f32>,
    n_toxic: usize,
}

/// Output of [`PlantedModel::generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    /// Sampled continuation (prompt excluded).
    pub tokens: Vec<usize>,
    /// One row per consumed token (prompt then continuation). Rows that fed
    /// the output head hold the post-hook representation.
    pub trace: Mat,
}

/// One annotation pair with the tokens that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub pair: AnnotatedPair,
    pub prompt: Vec<usize>,
    pub clean_tokens: Vec<usize>,
    pub toxic_tokens: Vec<usize>,
}

struct Prefill {
    h: Vec<f32>,
    trace: Vec<f32>,
}

impl PlantedModel {
    pub fn new(cfg: PlantedConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dim;
        let mut rng = Rng::new(cfg.seed);
        let mut u: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let un = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        u.iter_mut().for_each(|x| *x /= un);

        let n_toxic = cfg.n_toxic();
        let scale = f64::from(cfg.embed_norm) / (d as f64).sqrt();
        let gain = f64::from(cfg.plant_gain);
        let mut data = Vec::with_capacity(cfg.vocab_size * d);
        for v in 0..cfg.vocab_size {
            let mut e: Vec<f64> = (0..d).map(|_| scale * rng.normal()).collect();
            let along: f64 = e.iter().zip(&u).map(|(a, b)| a * b).sum();
            let plant = if v < n_toxic { gain } else { 0.0 };
            for (x, uj) in e.iter_mut().zip(&u) {
                *x += (plant - along) * uj;
            }
            data.extend(e.into_iter().map(|x| x as f32));
        }
        let embeddings = Mat::new(cfg.vocab_size, d, data)?;
        Ok(Self {
            cfg,
            embeddings,
            u: u.into_iter().map(|x| x as f32).collect(),
            n_toxic,
        })
    }

    /// Model with explicit embeddings; tokens `0..n_toxic` are toxic.
    pub fn from_parts(
        cfg: PlantedConfig,
        embeddings: Mat,
        u: Vec<f32>,
        n_toxic: usize,
    ) -> Result<Self> {
        cfg.validate()?;
        if embeddings.rows() != cfg.vocab_size || embeddings.cols() != cfg.dim || u.len() != cfg.dim
        {
            return Err(Error::DimensionMismatch {
                expected: cfg.vocab_size * cfg.dim,
                got: embeddings.rows() * embeddings.cols(),
            });
        }
        if n_toxic == 0 || n_toxic >= cfg.vocab_size {
            return Err(Error::InvalidConfig(
                "n_toxic must lie in 1..vocab_size".into(),
            ));
        }
        Ok(Self {
            cfg,
            embeddings,
            u,
            n_toxic,
        })
    }

    pub fn config(&self) -> &PlantedConfig {
        &self.cfg
    }

    pub fn dim(&self) -> usize {
        self.cfg.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.cfg.vocab_size
    }

    /// The planted toxic direction `u` (unit norm).
    pub fn toxic_direction(&self) -> &[f32] {
        &self.u
    }

    pub fn embeddings(&self) -> &Mat {
        &self.embeddings
    }

    #[inline]
    pub fn is_toxic(&self, token: usize) -> bool {
        token < self.n_toxic
    }

    pub fn n_toxic(&self) -> usize {
        self.n_toxic
    }

    fn check_token(&self, token: usize) -> Result<()> {
        if token < self.cfg.vocab_size {
            Ok(())
        } else {
            Err(Error::BadToken {
                token,
                vocab: self.cfg.vocab_size,
            })
        }
    }

    fn step_into(&self, h: &mut [f32], token: usize, rng: Option<&mut Rng>) {
        let a = f64::from(self.cfg.ema_alpha);
        let e = self.embeddings.row(token);
        for (x, &ej) in h.iter_mut().zip(e) {
            *x = (a * f64::from(*x) + (1.0 - a) * f64::from(ej)) as f32;
        }
        if let Some(rng) = rng {
            let sigma = f64::from(self.cfg.noise_sigma);
            if sigma > 0.0 {
                for x in h.iter_mut() {
                    *x = (f64::from(*x) + sigma * rng.normal()) as f32;
                }
            }
        }
    }

    /// `h = α h_prev + (1 - α) e_token + σ ξ`.
    pub fn step(&self, h_prev: &[f32], token: usize, rng: &mut Rng) -> Result<Vec<f32>> {
        self.check_token(token)?;
        crate::linalg::check_len(self.cfg.dim, h_prev.len())?;
        let mut h = h_prev.to_vec();
        self.step_into(&mut h, token, Some(rng));
        Ok(h)
    }

    /// Temperature-scaled logits `e_v · h / T`.
    pub fn logits(&self, h: &[f32]) -> Vec<f64> {
        let mut out = vec![0.0; self.cfg.vocab_size];
        self.logits_into(h, &mut out);
        out
    }

    fn logits_into(&self, h: &[f32], out: &mut [f64]) {
        let inv_t = 1.0 / f64::from(self.cfg.temperature);
        for (o, e) in out.iter_mut().zip(self.embeddings.iter_rows()) {
            *o = dot_unchecked(e, h) * inv_t;
        }
    }

    /// Probability mass the head assigns to the toxic vocabulary at `h`.
    pub fn toxic_mass(&self, h: &[f32]) -> f64 {
        let logits = self.logits(h);
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        w[..self.n_toxic].iter().sum::<f64>() / w.iter().sum::<f64>()
    }

    /// Draws from `softmax(logits + bias·[toxic])` with one uniform draw.
    fn sample(&self, logits: &mut [f64], toxic_bias: f64, rng: &mut Rng) -> usize {
        if toxic_bias != 0.0 {
            logits[..self.n_toxic]
                .iter_mut()
                .for_each(|l| *l += toxic_bias);
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for l in logits.iter_mut() {
            *l = (*l - max).exp();
            total += *l;
        }
        let target = rng.uniform() * total;
        let mut acc = 0.0;
        for (i, w) in logits.iter().enumerate() {
            acc += w;
            if target < acc {
                return i;
            }
        }
        logits.len() - 1
    }

    fn prefill(&self, prompt: &[usize], rng: &mut Rng) -> Result<Prefill> {
        if prompt.is_empty() {
            return Err(Error::EmptySequence);
        }
        let d = self.cfg.dim;
        let mut h = vec![0.0f32; d];
        let mut trace = Vec::with_capacity(prompt.len() * d);
        for &tok in prompt {
            self.check_token(tok)?;
            self.step_into(&mut h, tok, Some(&mut *rng));
            trace.extend_from_slice(&h);
        }
        Ok(Prefill { h, trace })
    }

    fn decode(
        &self,
        mut state: Prefill,
        max_new: usize,
        mut hook: Option<&mut dyn EditHook>,
        toxic_bias: f64,
        rng: &mut Rng,
    ) -> Result<Generation> {
        let d = self.cfg.dim;
        let mut tokens = Vec::with_capacity(max_new);
        let mut logits = vec![0.0f64; self.cfg.vocab_size];
        state.trace.reserve(max_new * d);
        for _ in 0..max_new {
            let row_start = state.trace.len() - d;
            match hook.as_deref_mut() {
                Some(hook) => {
                    let edited = hook.apply(&state.h)?;
                    crate::linalg::check_len(d, edited.len())?;
                    self.logits_into(&edited, &mut logits);
                    state.trace[row_start..].copy_from_slice(&edited);
                }
                None => self.logits_into(&state.h, &mut logits),
            }
            let tok = self.sample(&mut logits, toxic_bias, rng);
            tokens.push(tok);
            // The recurrence continues from the unedited state.
            self.step_into(&mut state.h, tok, Some(&mut *rng));
            state.trace.extend_from_slice(&state.h);
        }
        let rows = state.trace.len() / d;
        Ok(Generation {
            tokens,
            trace: Mat::new(rows, d, state.trace)?,
        })
    }

    /// Consumes `prompt`, then samples `max_new` tokens. An installed hook
    /// edits each representation before it reaches the output head; edits
    /// are not fed back into the recurrence.
    pub fn generate(
        &self,
        prompt: &[usize],
        max_new: usize,
        hook: Option<&mut dyn EditHook>,
        rng: &mut Rng,
    ) -> Result<Generation> {
        let state = self.prefill(prompt, rng)?;
        self.decode(state, max_new, hook, 0.0, rng)
    }

    /// `len` tokens sampled from the unbiased model, starting from a uniform
    /// first token.
    pub fn sample_prompt(&self, len: usize, rng: &mut Rng) -> Result<Vec<usize>> {
        if len == 0 {
            return Err(Error::EmptySequence);
        }
        let first = rng.below(self.cfg.vocab_size);
        let mut state = self.prefill(&[first], rng)?;
        let mut out = vec![first];
        let mut logits = vec![0.0f64; self.cfg.vocab_size];
        while out.len() < len {
            self.logits_into(&state.h, &mut logits);
            let tok = self.sample(&mut logits, 0.0, rng);
            out.push(tok);
            self.step_into(&mut state.h, tok, Some(&mut *rng));
        }
        state.trace.clear();
        Ok(out)
    }

    /// Annotation pairs sharing a sampled prompt: one continuation biased
    /// towards the toxic vocabulary (label `Toxic`), one biased away from it
    /// (label `NonToxic`). Prompt rows are computed once and shared.
    pub fn make_pair_corpus(
        &self,
        n_pairs: usize,
        prompt_len: usize,
        resp_len: usize,
        rng: &mut Rng,
    ) -> Result<Vec<AnnotatedPair>> {
        Ok(self
            .sample_pairs(n_pairs, prompt_len, resp_len, rng)?
            .into_iter()
            .map(|s| s.pair)
            .collect())
    }

    /// [`PlantedModel::make_pair_corpus`], keeping the sampled tokens.
    pub fn sample_pairs(
        &self,
        n_pairs: usize,
        prompt_len: usize,
        resp_len: usize,
        rng: &mut Rng,
    ) -> Result<Vec<PairSample>> {
        if n_pairs == 0 {
            return Err(Error::InvalidConfig("n_pairs must be >= 1".into()));
        }
        if prompt_len == 0 || resp_len == 0 {
            return Err(Error::InvalidConfig(
                "prompt_len and resp_len must be >= 1".into(),
            ));
        }
        let bias = f64::from(self.cfg.corpus_bias);
        let mut out = Vec::with_capacity(n_pairs);
        for i in 0..n_pairs {
            let mut prng = rng.fork(i as u64);
            let prompt = self.sample_prompt(prompt_len, &mut prng)?;
            let state = self.prefill(&prompt, &mut prng)?;
            let shared = state.trace.clone();
            let clean = self.decode(state, resp_len, None, -bias, &mut prng.fork(1))?;
            let toxic_state = Prefill {
                h: shared[shared.len() - self.cfg.dim..].to_vec(),
                trace: shared,
            };
            let toxic = self.decode(toxic_state, resp_len, None, bias, &mut prng.fork(2))?;
            let id = i as u64;
            let pair = AnnotatedPair::new(
                RepSequence::new(prompt_len, clean.trace, Label::NonToxic, id, 2 * id)?,
                RepSequence::new(prompt_len, toxic.trace, Label::Toxic, id, 2 * id + 1)?,
            )?;
            out.push(PairSample {
                pair,
                prompt,
                clean_tokens: clean.tokens,
                toxic_tokens: toxic.tokens,
            });
        }
        // Advance the caller's stream so consecutive corpora differ.
        let _ = rand::RngCore::next_u64(rng);
        Ok(out)
    }

    /// Fraction of `tokens` in the toxic vocabulary.
    pub fn toxic_rate(&self, tokens: &[usize]) -> Result<f64> {
        if tokens.is_empty() {
            return Err(Error::EmptySequence);
        }
        Ok(tokens.iter().filter(|&&t| self.is_toxic(t)).count() as f64 / tokens.len() as f64)
    }

    /// Per-position negative log-likelihoods (nats) of `continuation` after
    /// `prompt` under the unedited, noise-free model.
    pub fn token_nlls(&self, prompt: &[usize], continuation: &[usize]) -> Result<Vec<f64>> {
        if prompt.is_empty() || continuation.is_empty() {
            return Err(Error::EmptySequence);
        }
        let mut h = vec![0.0f32; self.cfg.dim];
        for &tok in prompt {
            self.check_token(tok)?;
            self.step_into(&mut h, tok, None);
        }
        let mut logits = vec![0.0f64; self.cfg.vocab_size];
        let mut out = Vec::with_capacity(continuation.len());
        for &tok in continuation {
            self.check_token(tok)?;
            self.logits_into(&h, &mut logits);
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
            out.push(lse - logits[tok]);
            self.step_into(&mut h, tok, None);
        }
        Ok(out)
    }

    /// Mean NLL per continuation token (nats) under the unedited model.
    pub fn nll_under_base(&self, prompt: &[usize], continuation: &[usize]) -> Result<f64> {
        let nlls = self.token_nlls(prompt, continuation)?;
        Ok(nlls.iter().sum::<f64>() / nlls.len() as f64)
    }
}
