// SPDX-License-Identifier: MIT OR Apache-2.0

//! End-to-end pipeline on the planted generator: corpus, training, paired
//! base/edited evaluation, sweeps, and report emission.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::editor::{EditConfig, EditTelemetry, RewardEditor};
use crate::error::{Error, Result};
use crate::linalg::{derive_seed, Rng};
use crate::plantedlm::{PlantedConfig, PlantedModel};
use crate::reprstore::{AnnotatedPair, RepSequence};
use crate::rewardnet::{
    compute_r_mean_plus, train, RewardNet, RewardStats, TrainConfig, DEFAULT_HIDDEN,
};
use crate::transition::{build_transition_dataset, extract_direction, NonToxicDirection};

/// JSON schema for serialized [`RunReport`]s.
pub const RUN_REPORT_SCHEMA: &str = include_str!("../schema/run_report.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSettings {
    pub pairs: usize,
    pub prompt_len: usize,
    pub resp_len: usize,
    pub seed: u64,
}

impl Default for CorpusSettings {
    fn default() -> Self {
        Self {
            pairs: 100,
            prompt_len: 8,
            resp_len: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EditSettings {
    pub beta: f32,
    pub eta: f32,
    pub iters: usize,
}

impl Default for EditSettings {
    fn default() -> Self {
        Self {
            beta: 1.0,
            eta: 0.5,
            iters: 5,
        }
    }
}

impl EditSettings {
    pub fn to_config(&self, stats: &RewardStats, d_plus: &NonToxicDirection) -> EditConfig {
        EditConfig {
            beta: self.beta,
            eta: self.eta,
            refine_iters: self.iters,
            r_mean_plus: stats.r_mean_plus,
            d_plus: d_plus.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub prompts: usize,
    pub prompt_len: usize,
    pub max_new: usize,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            prompts: 200,
            prompt_len: 8,
            max_new: 128,
            seed: 0,
        }
    }
}

/// Every knob of a run; serialized verbatim into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub planted: PlantedConfig,
    pub corpus: CorpusSettings,
    pub n_in: usize,
    pub hidden: usize,
    pub train: TrainConfig,
    pub edit: EditSettings,
    pub eval: EvalSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            planted: PlantedConfig::default(),
            corpus: CorpusSettings::default(),
            n_in: 7,
            hidden: DEFAULT_HIDDEN,
            train: TrainConfig::default(),
            edit: EditSettings::default(),
            eval: EvalSettings::default(),
        }
    }
}

impl PipelineConfig {
    /// Config whose sub-seeds all derive from `seed`.
    pub fn seeded(seed: u64) -> Self {
        let mut cfg = Self::default();
        cfg.reseed(seed);
        cfg
    }

    pub fn reseed(&mut self, seed: u64) {
        self.planted.seed = derive_seed(seed, 1);
        self.corpus.seed = derive_seed(seed, 2);
        self.train.seed = derive_seed(seed, 3);
        self.eval.seed = derive_seed(seed, 4);
    }
}

pub fn generate_corpus(model: &PlantedModel, cfg: &CorpusSettings) -> Result<Vec<AnnotatedPair>> {
    let mut rng = Rng::new(cfg.seed);
    model.make_pair_corpus(cfg.pairs, cfg.prompt_len, cfg.resp_len, &mut rng)
}

/// A trained reward model with everything editing needs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedReward {
    pub net: RewardNet,
    pub direction: NonToxicDirection,
    pub stats: RewardStats,
    pub epoch_losses: Vec<f32>,
    pub n_in: usize,
    pub train: TrainConfig,
}

/// Direction extraction, trajectory densification, reward training and
/// `r⁺` computation over the non-toxic members.
pub fn train_reward(
    pairs: &[AnnotatedPair],
    n_in: usize,
    hidden: usize,
    cfg: &TrainConfig,
) -> Result<TrainedReward> {
    cfg.validate()?;
    let direction = extract_direction(pairs)?;
    let data = build_transition_dataset(pairs, &direction, n_in)?;
    let dim = direction.dim();
    let init = RewardNet::glorot(dim, hidden, &mut Rng::new(derive_seed(cfg.seed, 0x1417)))?;
    let (net, epoch_losses) = train(&init, &data, cfg)?;
    let non_toxic: Vec<RepSequence> = pairs.iter().map(|p| p.non_toxic().clone()).collect();
    let stats = compute_r_mean_plus(&net, &non_toxic)?;
    Ok(TrainedReward {
        net,
        direction,
        stats,
        epoch_losses,
        n_in,
        train: cfg.clone(),
    })
}

impl TrainedReward {
    pub fn to_checkpoint(&self, model_tag: &str) -> Checkpoint {
        let mut ck = Checkpoint::new(self.net.clone());
        ck.header.stats = Some(self.stats);
        ck.header.d_plus = Some(self.direction.clone());
        ck.header.model_tag = model_tag.to_owned();
        ck.header.n_in = Some(self.n_in);
        ck.header.train = Some(self.train.clone());
        ck.header.epoch_losses = self.epoch_losses.clone();
        ck
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let missing =
            |f: &str| Error::InvalidConfig(format!("checkpoint has no {f}; was it trained?"));
        let h = ck.header;
        Ok(Self {
            net: ck.net,
            direction: h.d_plus.ok_or_else(|| missing("d_plus"))?,
            stats: h.stats.ok_or_else(|| missing("r_mean_plus"))?,
            epoch_losses: h.epoch_losses,
            n_in: h.n_in.unwrap_or_default(),
            train: h.train.unwrap_or_default(),
        })
    }

    pub fn edit_config(&self, edit: &EditSettings) -> EditConfig {
        edit.to_config(&self.stats, &self.direction)
    }
}

/// Paired continuations for one evaluation prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptOutcome {
    pub prompt: Vec<usize>,
    pub base: Vec<usize>,
    pub edited: Vec<usize>,
    pub nll_base: f64,
    pub nll_edited: f64,
    pub seconds_base: f64,
    pub seconds_edited: f64,
    pub telemetry: EditTelemetry,
}

/// Samples prompt `index` and generates base and edited continuations from
/// the same sampling stream.
pub fn evaluate_prompt(
    model: &PlantedModel,
    net: &RewardNet,
    edit: &EditConfig,
    settings: &EvalSettings,
    index: usize,
) -> Result<PromptOutcome> {
    let root = Rng::new(derive_seed(settings.seed, index as u64));
    let prompt = model.sample_prompt(settings.prompt_len, &mut root.fork(0))?;
    let sampler = root.fork(1);

    let t0 = Instant::now();
    let base = model.generate(&prompt, settings.max_new, None, &mut sampler.clone())?;
    let seconds_base = t0.elapsed().as_secs_f64();

    let mut editor = RewardEditor::new(net, edit.clone())?;
    let t0 = Instant::now();
    let edited = model.generate(
        &prompt,
        settings.max_new,
        Some(&mut editor),
        &mut sampler.clone(),
    )?;
    let seconds_edited = t0.elapsed().as_secs_f64();

    let (nll_base, nll_edited) = if settings.max_new == 0 {
        (0.0, 0.0)
    } else {
        (
            model.nll_under_base(&prompt, &base.tokens)?,
            model.nll_under_base(&prompt, &edited.tokens)?,
        )
    };
    Ok(PromptOutcome {
        prompt,
        base: base.tokens,
        edited: edited.tokens,
        nll_base,
        nll_edited,
        seconds_base,
        seconds_edited,
        telemetry: editor.telemetry(),
    })
}

/// Aggregated metrics of one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Sweep point or run name; empty for single runs.
    pub label: String,
    pub toxic_rate_base: f64,
    pub toxic_rate_edited: f64,
    pub relative_reduction: f64,
    pub mean_nll_base: f64,
    pub mean_nll_edited: f64,
    /// Standard error of the per-prompt NLL means.
    pub nll_stderr_base: f64,
    pub nll_stderr_edited: f64,
    pub mean_gap: f64,
    pub steer_applied_fraction: f64,
    pub tokens_per_second_base: f64,
    pub tokens_per_second_edited: f64,
    /// `tokens_per_second_edited / tokens_per_second_base`.
    pub token_rate_ratio: f64,
    pub prompts: usize,
    pub tokens_per_prompt: usize,
    pub config: serde_json::Value,
}

/// Column order of [`RunReport::csv_row`].
pub const CSV_COLUMNS: &[&str] = &[
    "label",
    "toxic_rate_base",
    "toxic_rate_edited",
    "relative_reduction",
    "mean_nll_base",
    "mean_nll_edited",
    "nll_stderr_base",
    "nll_stderr_edited",
    "mean_gap",
    "steer_applied_fraction",
    "prompts",
    "tokens_per_prompt",
    "tokens_per_second_base",
    "tokens_per_second_edited",
    "token_rate_ratio",
];

/// Number of leading [`CSV_COLUMNS`] that are independent of wall-clock time.
pub const CSV_DETERMINISTIC_COLUMNS: usize = 12;

pub fn relative_reduction(base: f64, edited: f64) -> f64 {
    if base > 0.0 {
        (base - edited) / base
    } else {
        0.0
    }
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl RunReport {
    pub fn from_outcomes(
        model: &PlantedModel,
        outcomes: &[PromptOutcome],
        config: serde_json::Value,
    ) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::EmptyInput("evaluation prompts"));
        }
        let toxic = |toks: &[usize]| toks.iter().filter(|&&t| model.is_toxic(t)).count();
        let total: usize = outcomes.iter().map(|o| o.base.len()).sum();
        let (tb, te) = outcomes.iter().fold((0, 0), |(b, e), o| {
            (b + toxic(&o.base), e + toxic(&o.edited))
        });
        let rate = |k: usize| {
            if total == 0 {
                0.0
            } else {
                k as f64 / total as f64
            }
        };
        let (toxic_rate_base, toxic_rate_edited) = (rate(tb), rate(te));

        let nb: Vec<f64> = outcomes.iter().map(|o| o.nll_base).collect();
        let ne: Vec<f64> = outcomes.iter().map(|o| o.nll_edited).collect();
        let (mean_nll_base, nll_stderr_base) = mean_and_stderr(&nb);
        let (mean_nll_edited, nll_stderr_edited) = mean_and_stderr(&ne);

        let mut tel = EditTelemetry::default();
        outcomes.iter().for_each(|o| tel.merge(&o.telemetry));
        let per_sec = |secs: f64| if secs > 0.0 { total as f64 / secs } else { 0.0 };
        let tokens_per_second_base = per_sec(outcomes.iter().map(|o| o.seconds_base).sum());
        let tokens_per_second_edited = per_sec(outcomes.iter().map(|o| o.seconds_edited).sum());
        let token_rate_ratio = if tokens_per_second_base > 0.0 {
            tokens_per_second_edited / tokens_per_second_base
        } else {
            0.0
        };
        Ok(Self {
            label: String::new(),
            toxic_rate_base,
            toxic_rate_edited,
            relative_reduction: relative_reduction(toxic_rate_base, toxic_rate_edited),
            mean_nll_base,
            mean_nll_edited,
            nll_stderr_base,
            nll_stderr_edited,
            mean_gap: tel.mean_gap(),
            steer_applied_fraction: tel.applied_fraction(),
            tokens_per_second_base,
            tokens_per_second_edited,
            token_rate_ratio,
            prompts: outcomes.len(),
            tokens_per_prompt: outcomes[0].base.len(),
            config,
        })
    }

    pub fn csv_header(with_timing: bool) -> String {
        let n = if with_timing {
            CSV_COLUMNS.len()
        } else {
            CSV_DETERMINISTIC_COLUMNS
        };
        CSV_COLUMNS[..n].join(",")
    }

    pub fn csv_row(&self, with_timing: bool) -> String {
        let mut row = String::new();
        // Labels are generated internally ("n_in=7"); commas are replaced
        // rather than quoted.
        row.push_str(&self.label.replace(',', ";"));
        for v in [
            self.toxic_rate_base,
            self.toxic_rate_edited,
            self.relative_reduction,
            self.mean_nll_base,
            self.mean_nll_edited,
            self.nll_stderr_base,
            self.nll_stderr_edited,
            self.mean_gap,
            self.steer_applied_fraction,
        ] {
            let _ = write!(row, ",{v}");
        }
        let _ = write!(row, ",{},{}", self.prompts, self.tokens_per_prompt);
        if with_timing {
            let _ = write!(
                row,
                ",{},{},{}",
                self.tokens_per_second_base, self.tokens_per_second_edited, self.token_rate_ratio
            );
        }
        row
    }
}

/// Renders `reports` as a CSV document with header.
pub fn reports_to_csv(reports: &[RunReport], with_timing: bool) -> String {
    let mut out = RunReport::csv_header(with_timing);
    out.push('\n');
    for r in reports {
        out.push_str(&r.csv_row(with_timing));
        out.push('\n');
    }
    out
}

/// Runs every evaluation prompt, in parallel, and aggregates.
pub fn evaluate(
    model: &PlantedModel,
    net: &RewardNet,
    edit: &EditConfig,
    settings: &EvalSettings,
    config: serde_json::Value,
) -> Result<RunReport> {
    if settings.prompts == 0 {
        return Err(Error::InvalidConfig("prompts must be >= 1".into()));
    }
    edit.validate()?;
    let outcomes = (0..settings.prompts)
        .into_par_iter()
        .map(|i| evaluate_prompt(model, net, edit, settings, i))
        .collect::<Result<Vec<_>>>()?;
    RunReport::from_outcomes(model, &outcomes, config)
}

/// Corpus generation, training and evaluation for one config.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunReport> {
    let model = PlantedModel::new(cfg.planted.clone())?;
    let pairs = generate_corpus(&model, &cfg.corpus)?;
    let trained = train_reward(&pairs, cfg.n_in, cfg.hidden, &cfg.train)?;
    evaluate(
        &model,
        &trained.net,
        &trained.edit_config(&cfg.edit),
        &cfg.eval,
        serde_json::to_value(cfg)?,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    NIn,
    Eta,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::NIn => "n_in",
            SweepParam::Eta => "eta",
        }
    }
}

/// A one-parameter grid, parsed from `n_in:0,1,3,7` or `eta:0,0.5,1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: String| Error::InvalidConfig(m);
        let (name, list) = s
            .split_once(':')
            .ok_or_else(|| bad(format!("sweep `{s}` is not of the form param:v1,v2,...")))?;
        let param = match name.trim() {
            "n_in" => SweepParam::NIn,
            "eta" => SweepParam::Eta,
            other => {
                return Err(bad(format!(
                    "unknown sweep parameter `{other}` (n_in or eta)"
                )))
            }
        };
        let values = list
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| bad(format!("bad sweep value `{v}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.is_empty() {
            return Err(bad("empty sweep grid".into()));
        }
        for &v in &values {
            let ok = match param {
                SweepParam::NIn => v >= 0.0 && v.fract() == 0.0 && v < 1e6,
                SweepParam::Eta => v >= 0.0 && v.is_finite(),
            };
            if !ok {
                return Err(bad(format!("invalid {} value {v}", param.name())));
            }
        }
        Ok(Self { param, values })
    }
}

/// Runs `sweep` over `base` with shared seeds. The corpus is generated
/// once; an `eta` sweep also trains once. Rows follow grid order.
pub fn run_sweep(base: &PipelineConfig, sweep: &Sweep) -> Result<Vec<RunReport>> {
    let model = PlantedModel::new(base.planted.clone())?;
    let pairs = generate_corpus(&model, &base.corpus)?;
    let point_cfg = |v: f64| {
        let mut cfg = base.clone();
        match sweep.param {
            SweepParam::NIn => cfg.n_in = v as usize,
            SweepParam::Eta => cfg.edit.eta = v as f32,
        }
        cfg
    };
    let label = |v: f64| format!("{}={v}", sweep.param.name());
    let shared = match sweep.param {
        SweepParam::Eta => Some(train_reward(&pairs, base.n_in, base.hidden, &base.train)?),
        SweepParam::NIn => None,
    };
    let reports: Vec<Result<RunReport>> = sweep
        .values
        .par_iter()
        .map(|&v| {
            let cfg = point_cfg(v);
            let owned;
            let trained = match &shared {
                Some(t) => t,
                None => {
                    owned = train_reward(&pairs, cfg.n_in, cfg.hidden, &cfg.train)?;
                    &owned
                }
            };
            let mut report = evaluate(
                &model,
                &trained.net,
                &trained.edit_config(&cfg.edit),
                &cfg.eval,
                serde_json::to_value(&cfg)?,
            )?;
            report.label = label(v);
            Ok(report)
        })
        .collect();
    reports.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> PipelineConfig {
        let mut cfg = PipelineConfig::seeded(3);
        cfg.corpus.pairs = 12;
        cfg.hidden = 16;
        cfg.eval.prompts = 6;
        cfg.eval.max_new = 10;
        cfg
    }

    #[test]
    fn relative_reduction_cases() {
        assert!((relative_reduction(0.4, 0.1) - 0.75).abs() < 1e-12);
        assert_eq!(relative_reduction(0.0, 0.3), 0.0);
        assert_eq!(relative_reduction(0.2, 0.2), 0.0);
    }

    #[test]
    fn sweep_parsing() {
        let s: Sweep = "n_in:0,1,3,7,15".parse().unwrap();
        assert_eq!(s.param, SweepParam::NIn);
        assert_eq!(s.values, vec![0.0, 1.0, 3.0, 7.0, 15.0]);
        let e: Sweep = "eta:0,0.1,0.25,0.5,0.75,1.0".parse().unwrap();
        assert_eq!(e.values.len(), 6);
        for bad in ["n_in", "n_in:", "n_in:1.5", "depth:1", "eta:-1", "eta:x"] {
            assert!(bad.parse::<Sweep>().is_err(), "{bad}");
        }
    }

    #[test]
    fn pipeline_is_deterministic() {
        let cfg = tiny();
        let a = run_pipeline(&cfg).unwrap();
        let b = run_pipeline(&cfg).unwrap();
        assert_eq!(a.csv_row(false), b.csv_row(false));
        assert_eq!(a.config, b.config);
        assert!(a.mean_nll_base.is_finite() && a.mean_nll_edited.is_finite());
        assert!(a.tokens_per_second_base > 0.0 && a.tokens_per_second_edited > 0.0);
    }

    #[test]
    fn csv_shape() {
        let r = run_pipeline(&tiny()).unwrap();
        for timing in [false, true] {
            let header = RunReport::csv_header(timing);
            let row = r.csv_row(timing);
            assert_eq!(header.split(',').count(), row.split(',').count());
        }
        let doc = reports_to_csv(&[r.clone(), r], false);
        assert_eq!(doc.lines().count(), 3);
    }

    #[test]
    fn checkpoint_round_trip_preserves_trained_state() {
        let cfg = tiny();
        let model = PlantedModel::new(cfg.planted.clone()).unwrap();
        let pairs = generate_corpus(&model, &cfg.corpus).unwrap();
        let trained = train_reward(&pairs, 2, 8, &cfg.train).unwrap();
        let ck = trained.to_checkpoint(&cfg.planted.model_tag());
        let back = TrainedReward::from_checkpoint(
            Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap(),
        )
        .unwrap();
        assert_eq!(back, trained);
    }
}
