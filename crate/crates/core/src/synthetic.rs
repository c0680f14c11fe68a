//! Synthetic traces under the i.i.d. geometric acceptance model, Monte Carlo
//! sweeps against the closed forms, and the failure-rate dilution check.
//!
//! Every position of a step independently draws whether it is visually
//! relevant (`rho`) and whether the draft matches the target (`alpha_*` of
//! its class). Hidden states are unit vectors drawn around two orthogonal
//! centers: a salient direction shared by the salient visual rows and the
//! relevant draft positions, and a background direction shared by the other
//! visual rows. Irrelevant draft positions are drawn only loosely around the
//! background, so their top-N similarity stays low.

use std::collections::HashSet;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::relevance::RelevanceScorer;
use crate::strategy::{StrategyConfig, DEFAULT_TOP_N};
use crate::theory::expected_tau_strict;
use crate::types::{DecodeStep, HiddenMatrix, Token, Trace, TraceHeader};
use crate::verification::{Replayer, VerifyError};

/// Seed used whenever none is given.
pub const DEFAULT_SEED: u64 = 20_250_101;

/// Largest draft length the generator accepts.
pub const MAX_SYNTHETIC_K: usize = 4096;

/// Token ids are drawn from `0..TOKEN_SPACE`.
pub const TOKEN_SPACE: u32 = 1 << 24;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SyntheticError {
    #[error("invalid synthetic config: {field} = {value} ({reason})")]
    Config {
        field: &'static str,
        value: String,
        reason: &'static str,
    },
    #[error("no strategies to evaluate")]
    EmptyStrategyList,
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error("trials must be at least 1")]
    ZeroTrials,
    #[error("synthetic run failed: {0}")]
    PointFailed(String),
    #[error("relevance AUC needs both relevant and irrelevant positions")]
    DegenerateLabels,
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

/// Parameters of the synthetic trace generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    /// Per-position match probability at visually relevant positions.
    pub alpha_relevant: f64,
    /// Per-position match probability at irrelevant positions.
    pub alpha_irrelevant: f64,
    /// Probability that a position is visually relevant.
    pub rho: f64,
    pub k: usize,
    pub d: usize,
    pub l_v: usize,
    /// Visual rows drawn around the salient direction.
    pub salient_count: usize,
    pub kappa_relevant: f64,
    pub kappa_irrelevant: f64,
    /// Concentration of the visual rows around their centers.
    pub kappa_visual: f64,
    /// Probability that a mismatch copies another draft-window token.
    pub shift_event_rate: f64,
    /// Mean target entropy (nats) at matched positions.
    pub entropy_mean_match: f64,
    /// Mean target entropy (nats) at mismatched positions.
    pub entropy_mean_mismatch: f64,
    /// Probability that a position repeats the previous position's match
    /// outcome instead of drawing afresh. 0 gives i.i.d. positions.
    pub match_correlation: f64,
    pub steps: u64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            alpha_relevant: 0.79,
            alpha_irrelevant: 0.79,
            rho: 0.3,
            k: 10,
            d: 16,
            l_v: 32,
            salient_count: 8,
            kappa_relevant: 32.0,
            kappa_irrelevant: 0.25,
            kappa_visual: 50.0,
            shift_event_rate: 0.2,
            entropy_mean_match: 0.05,
            entropy_mean_mismatch: 0.4,
            match_correlation: 0.0,
            steps: 1000,
            seed: DEFAULT_SEED,
        }
    }
}

fn config_error(field: &'static str, value: impl ToString, reason: &'static str) -> SyntheticError {
    SyntheticError::Config {
        field,
        value: value.to_string(),
        reason,
    }
}

impl SyntheticConfig {
    /// Same alignment for both position classes.
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha_relevant = alpha;
        self.alpha_irrelevant = alpha;
        self
    }

    pub fn validate(&self) -> Result<(), SyntheticError> {
        let unit = [
            ("alpha_relevant", self.alpha_relevant),
            ("alpha_irrelevant", self.alpha_irrelevant),
            ("rho", self.rho),
            ("shift_event_rate", self.shift_event_rate),
            ("match_correlation", self.match_correlation),
        ];
        for (field, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(config_error(field, v, "must lie in [0, 1]"));
            }
        }
        let non_negative = [
            ("kappa_relevant", self.kappa_relevant),
            ("kappa_irrelevant", self.kappa_irrelevant),
            ("kappa_visual", self.kappa_visual),
            ("entropy_mean_match", self.entropy_mean_match),
            ("entropy_mean_mismatch", self.entropy_mean_mismatch),
        ];
        for (field, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(config_error(field, v, "must be finite and non-negative"));
            }
        }
        if !(1..=MAX_SYNTHETIC_K).contains(&self.k) {
            return Err(config_error("k", self.k, "must lie in [1, 4096]"));
        }
        if self.d < 2 {
            return Err(config_error("d", self.d, "must be at least 2"));
        }
        if self.l_v < 2 {
            return Err(config_error("l_v", self.l_v, "must be at least 2"));
        }
        if !(1..=self.l_v).contains(&self.salient_count) {
            return Err(config_error("salient_count", self.salient_count, "must lie in [1, l_v]"));
        }
        if self.steps == 0 {
            return Err(config_error("steps", self.steps, "must be positive"));
        }
        Ok(())
    }

    /// CRC-32 of the config's JSON form, as lowercase hex.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        format!("{:08x}", crc32fast::hash(&json))
    }

    /// Per-position acceptance probability under strict verification.
    pub fn strict_alignment(&self) -> f64 {
        self.rho * self.alpha_relevant + (1.0 - self.rho) * self.alpha_irrelevant
    }

    /// Per-position acceptance probability when every irrelevant position
    /// is relaxed.
    pub fn relaxed_alignment(&self) -> f64 {
        self.rho * self.alpha_relevant + (1.0 - self.rho)
    }

    pub fn analytic_strict(&self) -> f64 {
        expected_tau_strict(self.strict_alignment(), self.k).unwrap_or(f64::NAN)
    }

    pub fn analytic_loose(&self) -> f64 {
        expected_tau_strict(self.relaxed_alignment(), self.k).unwrap_or(f64::NAN)
    }
}

fn unit_vector(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 && norm.is_finite() {
        v.iter_mut().for_each(|x| *x /= norm);
        true
    } else {
        false
    }
}

fn gaussian_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

/// Unit row `normalize(√κ·center + g)` with `g ~ N(0, I)`.
fn draw_row(rng: &mut ChaCha8Rng, center: &[f64], kappa: f64, out: &mut Vec<f32>) {
    let scale = kappa.sqrt();
    loop {
        let mut v: Vec<f64> = center
            .iter()
            .map(|&c| {
                let g: f64 = StandardNormal.sample(rng);
                scale * c + g
            })
            .collect();
        if unit_vector(&mut v) {
            out.extend(v.iter().map(|&x| x as f32));
            return;
        }
    }
}

/// A synthetic generation: header and visual matrix up front, steps on demand.
#[derive(Debug)]
pub struct SyntheticTrace {
    pub header: TraceHeader,
    pub visual_hidden: HiddenMatrix,
    pub steps: StepStream,
}

impl SyntheticTrace {
    pub fn new(config: &SyntheticConfig) -> Result<Self, SyntheticError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

        let mut salient = gaussian_vector(&mut rng, config.d);
        while !unit_vector(&mut salient) {
            salient = gaussian_vector(&mut rng, config.d);
        }
        let background = loop {
            let mut b = gaussian_vector(&mut rng, config.d);
            let proj: f64 = b.iter().zip(&salient).map(|(x, s)| x * s).sum();
            b.iter_mut().zip(&salient).for_each(|(x, s)| *x -= proj * s);
            if unit_vector(&mut b) {
                break b;
            }
        };

        let mut visual = Vec::with_capacity(config.l_v * config.d);
        for row in 0..config.l_v {
            let center = if row < config.salient_count { &salient } else { &background };
            draw_row(&mut rng, center, config.kappa_visual, &mut visual);
        }
        let visual_hidden = HiddenMatrix::from_raw(config.l_v, config.d, visual);

        let mut header = TraceHeader::new(config.d, config.l_v);
        header.seed = Some(config.seed);
        header.model_names = Some(vec!["synthetic".into(), format!("config-crc32:{}", config.digest())]);

        Ok(Self {
            header,
            visual_hidden,
            steps: StepStream {
                config: config.clone(),
                rng,
                salient,
                background,
                next_index: 0,
                window: HashSet::new(),
            },
        })
    }

    pub fn collect(self) -> Trace {
        Trace {
            header: self.header,
            visual_hidden: self.visual_hidden,
            steps: self.steps.collect(),
            branches_per_step: 1,
        }
    }
}

/// Iterator over the steps of a synthetic generation.
#[derive(Debug)]
pub struct StepStream {
    config: SyntheticConfig,
    rng: ChaCha8Rng,
    salient: Vec<f64>,
    background: Vec<f64>,
    next_index: u64,
    window: HashSet<u32>,
}

impl StepStream {
    fn fresh_id(&mut self) -> u32 {
        loop {
            let id = self.rng.random_range(0..TOKEN_SPACE);
            if !self.window.contains(&id) {
                return id;
            }
        }
    }

    fn entropy(&mut self, mean: f64) -> f64 {
        if mean > 0.0 {
            Exp::new(1.0 / mean).expect("positive rate").sample(&mut self.rng)
        } else {
            0.0
        }
    }

    fn generate(&mut self) -> DecodeStep {
        let c = &self.config;
        let (k, d) = (c.k, c.d);
        let (rho, alpha_r, alpha_i) = (c.rho, c.alpha_relevant, c.alpha_irrelevant);
        let (kappa_r, kappa_i) = (c.kappa_relevant, c.kappa_irrelevant);
        let (shift, corr) = (c.shift_event_rate, c.match_correlation);
        let (e_match, e_mismatch) = (c.entropy_mean_match, c.entropy_mean_mismatch);

        self.window.clear();
        let mut draft = Vec::with_capacity(k);
        while draft.len() < k {
            let id = self.fresh_id();
            self.window.insert(id);
            draft.push(id);
        }

        let mut labels = Vec::with_capacity(k);
        let mut matched = Vec::with_capacity(k);
        for i in 0..k {
            let relevant = self.rng.random_bool(rho);
            let alpha = if relevant { alpha_r } else { alpha_i };
            let m = if i > 0 && corr > 0.0 && self.rng.random_bool(corr) {
                matched[i - 1]
            } else {
                self.rng.random_bool(alpha)
            };
            labels.push(relevant);
            matched.push(m);
        }

        let mut target = Vec::with_capacity(k);
        let mut entropy = Vec::with_capacity(k);
        for i in 0..k {
            let id = if matched[i] {
                draft[i]
            } else if k > 1 && self.rng.random_bool(shift) {
                let other = self.rng.random_range(0..k - 1);
                draft[if other >= i { other + 1 } else { other }]
            } else {
                self.fresh_id()
            };
            target.push(id);
            entropy.push(self.entropy(if matched[i] { e_match } else { e_mismatch }));
        }

        let mut hidden = Vec::with_capacity(k * d);
        for &relevant in &labels {
            if relevant {
                draw_row(&mut self.rng, &self.salient, kappa_r, &mut hidden);
            } else {
                draw_row(&mut self.rng, &self.background, kappa_i, &mut hidden);
            }
        }

        let to_tokens = |ids: Vec<u32>| ids.into_iter().map(Token::new).collect();
        let mut step = DecodeStep::new(
            self.next_index,
            to_tokens(draft),
            to_tokens(target),
            HiddenMatrix::from_raw(k, d, hidden),
        );
        step.target_entropy = Some(entropy);
        step.relevance_labels = Some(labels);
        self.next_index += 1;
        step
    }
}

impl Iterator for StepStream {
    type Item = DecodeStep;

    fn next(&mut self) -> Option<DecodeStep> {
        (self.next_index < self.config.steps).then(|| self.generate())
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.config.steps - self.next_index) as usize;
        (left, Some(left))
    }
}

/// Generates a whole synthetic trace in memory.
pub fn generate_trace(config: &SyntheticConfig) -> Result<Trace, SyntheticError> {
    Ok(SyntheticTrace::new(config)?.collect())
}

/// Area under the ROC curve of visual relevance separating ground-truth
/// relevant from irrelevant positions, over the first `positions` positions
/// generated by `config`. Ties count one half.
pub fn relevance_auc(config: &SyntheticConfig, top_n: usize, positions: usize) -> Result<f64, SyntheticError> {
    let mut config = config.clone();
    config.steps = positions.div_ceil(config.k).max(1) as u64;
    let synthetic = SyntheticTrace::new(&config)?;
    let scorer = RelevanceScorer::new(&synthetic.visual_hidden).map_err(VerifyError::from)?;
    let mut samples: Vec<(f32, bool)> = Vec::with_capacity(positions);
    for step in synthetic.steps {
        let scores = scorer
            .scores(&step.draft_hidden, top_n, step.step_index)
            .map_err(VerifyError::from)?;
        let labels = step.relevance_labels.expect("synthetic steps carry labels");
        samples.extend(scores.scores.into_iter().zip(labels));
    }
    samples.truncate(positions);
    auc(&mut samples).ok_or(SyntheticError::DegenerateLabels)
}

/// Mann-Whitney AUC of `true` over `false` scores, with average ranks for ties.
fn auc(samples: &mut [(f32, bool)]) -> Option<f64> {
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let positives = samples.iter().filter(|s| s.1).count();
    let negatives = samples.len() - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < samples.len() {
        let mut j = i;
        while j < samples.len() && samples[j].0 == samples[i].0 {
            j += 1;
        }
        let mean_rank = (i + 1 + j) as f64 / 2.0;
        rank_sum += mean_rank * samples[i..j].iter().filter(|s| s.1).count() as f64;
        i = j;
    }
    let p = positives as f64;
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `trial` at grid point `point`.
pub fn derive_seed(base_seed: u64, point: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base_seed) ^ point) ^ trial)
}

/// Per-strategy τ totals of one trial. Sums are integral, hence exact.
#[derive(Debug, Clone, Copy, Default)]
struct TauTotals {
    steps: u64,
    sum: u64,
    sum_sq: u64,
}

impl TauTotals {
    fn add(&mut self, tau: usize) {
        let t = tau as u64;
        self.steps += 1;
        self.sum += t;
        self.sum_sq += t * t;
    }

    fn mean(&self) -> f64 {
        self.sum as f64 / self.steps as f64
    }
}

/// Replays one synthetic generation under every strategy, step by step.
fn run_trial(config: &SyntheticConfig, strategies: &[StrategyConfig]) -> Result<Vec<TauTotals>, SyntheticError> {
    let synthetic = SyntheticTrace::new(config)?;
    let visual = &synthetic.visual_hidden;
    let mut replayers = strategies
        .iter()
        .map(|s| Replayer::new(s, visual))
        .collect::<Result<Vec<_>, _>>()?;
    let mut totals = vec![TauTotals::default(); strategies.len()];
    for step in synthetic.steps {
        for (replayer, total) in replayers.iter_mut().zip(&mut totals) {
            total.add(replayer.push(std::slice::from_ref(&step))?.accepted_length);
        }
    }
    Ok(totals)
}

/// The strategy as run in one trial: seeded strategies get a per-trial seed.
fn trial_strategy(strategy: &StrategyConfig, point: u64, trial: u64) -> StrategyConfig {
    match *strategy {
        StrategyConfig::Random { p, seed } => StrategyConfig::Random {
            p,
            seed: derive_seed(seed, point, trial),
        },
        ref other => other.clone(),
    }
}

/// Mean τ and its standard error for one strategy at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyStats {
    pub strategy: String,
    pub mean_tau: f64,
    /// Sample standard deviation of the trial means over `√trials`; with a
    /// single trial, of the per-step τ over `√steps`.
    pub std_error: f64,
}

fn aggregate(strategy: &StrategyConfig, trials: &[TauTotals]) -> StrategyStats {
    let (mean_tau, std_error) = if let [only] = trials {
        let n = only.steps as f64;
        let mean = only.mean();
        let var = if only.steps > 1 {
            ((only.sum_sq as f64 - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        (mean, (var / n).sqrt())
    } else {
        let means: Vec<f64> = trials.iter().map(TauTotals::mean).collect();
        let n = means.len() as f64;
        let mean = means.iter().sum::<f64>() / n;
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    };
    StrategyStats {
        strategy: strategy.to_string(),
        mean_tau,
        std_error,
    }
}

/// Aggregates of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub point: usize,
    pub config: SyntheticConfig,
    pub trials: u32,
    /// Closed-form strict expectation at the mixed per-position alignment.
    pub analytic_strict: f64,
    /// Closed-form expectation when every irrelevant position is relaxed.
    pub analytic_loose: f64,
    /// One entry per requested strategy, in request order; empty on error.
    pub strategies: Vec<StrategyStats>,
    pub error: Option<String>,
}

impl SweepResult {
    pub fn stats(&self, strategy: &StrategyConfig) -> Option<&StrategyStats> {
        let name = strategy.to_string();
        self.strategies.iter().find(|s| s.strategy == name)
    }
}

/// Runs every strategy on `trials` independent generations per grid point.
///
/// Trials run in parallel; results are merged in (point, trial) order, so
/// the output depends only on the inputs. Each trial's generator seed is
/// `derive_seed(base_seed, point, trial)`, overriding the config's own seed.
/// A point whose generation or replay fails is reported with its error.
pub fn run_sweep(
    grid: &[SyntheticConfig],
    strategies: &[StrategyConfig],
    trials: u32,
    base_seed: u64,
) -> Result<Vec<SweepResult>, SyntheticError> {
    if strategies.is_empty() {
        return Err(SyntheticError::EmptyStrategyList);
    }
    if grid.is_empty() {
        return Err(SyntheticError::EmptyGrid);
    }
    if trials == 0 {
        return Err(SyntheticError::ZeroTrials);
    }
    for s in strategies {
        s.validate().map_err(VerifyError::from)?;
    }

    let jobs: Vec<(usize, u32)> = (0..grid.len()).flat_map(|p| (0..trials).map(move |t| (p, t))).collect();
    let outcomes: Vec<Result<Vec<TauTotals>, SyntheticError>> = jobs
        .par_iter()
        .map(|&(point, trial)| {
            let mut config = grid[point].clone();
            config.seed = derive_seed(base_seed, point as u64, u64::from(trial));
            let per_trial: Vec<StrategyConfig> = strategies
                .iter()
                .map(|s| trial_strategy(s, point as u64, u64::from(trial)))
                .collect();
            run_trial(&config, &per_trial)
        })
        .collect();

    let mut outcomes = outcomes.into_iter();
    let results = grid
        .iter()
        .enumerate()
        .map(|(point, config)| {
            let point_outcomes: Vec<_> = outcomes.by_ref().take(trials as usize).collect();
            let mut result = SweepResult {
                point,
                config: config.clone(),
                trials,
                analytic_strict: config.analytic_strict(),
                analytic_loose: config.analytic_loose(),
                strategies: Vec::new(),
                error: None,
            };
            match point_outcomes.into_iter().collect::<Result<Vec<_>, _>>() {
                Ok(per_trial) => {
                    result.strategies = strategies
                        .iter()
                        .enumerate()
                        .map(|(s, strategy)| {
                            let column: Vec<TauTotals> = per_trial.iter().map(|t| t[s]).collect();
                            aggregate(strategy, &column)
                        })
                        .collect();
                }
                Err(e) => result.error = Some(e.to_string()),
            }
            result
        })
        .collect();
    Ok(results)
}

/// One flat output row: a (grid point, strategy) pair. These are the CSV
/// columns, in order, and the fields of each line-delimited record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point: usize,
    pub alpha_relevant: f64,
    pub alpha_irrelevant: f64,
    pub rho: f64,
    pub k: usize,
    pub steps: u64,
    pub trials: u32,
    pub strategy: String,
    pub mean_tau: Option<f64>,
    pub std_error: Option<f64>,
    pub analytic_strict: f64,
    pub analytic_loose: f64,
    pub error: Option<String>,
}

/// Flattens sweep results, one row per strategy (one row per failed point).
pub fn sweep_rows(results: &[SweepResult]) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for r in results {
        let base = SweepRow {
            point: r.point,
            alpha_relevant: r.config.alpha_relevant,
            alpha_irrelevant: r.config.alpha_irrelevant,
            rho: r.config.rho,
            k: r.config.k,
            steps: r.config.steps,
            trials: r.trials,
            strategy: String::new(),
            mean_tau: None,
            std_error: None,
            analytic_strict: r.analytic_strict,
            analytic_loose: r.analytic_loose,
            error: r.error.clone(),
        };
        if r.strategies.is_empty() {
            rows.push(base);
            continue;
        }
        rows.extend(r.strategies.iter().map(|s| SweepRow {
            strategy: s.strategy.clone(),
            mean_tau: Some(s.mean_tau),
            std_error: Some(s.std_error),
            ..base.clone()
        }));
    }
    rows
}

pub fn write_sweep_csv<W: Write>(results: &[SweepResult], out: W) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(out);
    for row in sweep_rows(results) {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_sweep_records<W: Write>(results: &[SweepResult], mut out: W) -> std::io::Result<()> {
    for row in sweep_rows(results) {
        serde_json::to_writer(&mut out, &row)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Inputs of the dilution check.
#[derive(Debug, Clone, PartialEq)]
pub struct DilutionParams {
    pub alpha: f64,
    pub lambda: f64,
    pub k: usize,
    pub steps: u64,
    pub trials: u32,
    pub top_n: usize,
    pub seed: u64,
}

impl DilutionParams {
    pub fn new(alpha: f64, lambda: f64, k: usize, trials: u32) -> Self {
        Self {
            alpha,
            lambda,
            k,
            steps: 10_000,
            trials,
            top_n: DEFAULT_TOP_N,
            seed: DEFAULT_SEED,
        }
    }
}

/// Strict and loose failure rates (`1 − mean τ / K`) on shared traces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DilutionReport {
    pub alpha: f64,
    pub lambda: f64,
    /// Generator visual density, `1 − λ`.
    pub rho: f64,
    pub k: usize,
    pub steps: u64,
    pub trials: u32,
    pub strict_mean_tau: f64,
    pub strict_failure_rate: f64,
    /// Relaxed set from ground-truth labels.
    pub oracle_mean_tau: f64,
    pub oracle_failure_rate: f64,
    /// Relaxed set from relevance scoring.
    pub scored_mean_tau: f64,
    pub scored_failure_rate: f64,
    /// `ρ` times the strict failure rate.
    pub predicted_failure_rate: f64,
    /// Closed-form loose failure rate under the geometric model.
    pub analytic_loose_failure_rate: f64,
    /// Per-token mismatch rate `ε = 1 − α`.
    pub token_failure_rate: f64,
    pub diluted_token_failure_rate: f64,
}

/// Runs strict, label-relaxed and score-relaxed LvSpec (PST off) on the same
/// synthetic traces, with the generator's visual density set to `1 − λ`.
pub fn dilution_check(params: &DilutionParams) -> Result<DilutionReport, SyntheticError> {
    if !(0.0..=1.0).contains(&params.lambda) {
        return Err(config_error("lambda", params.lambda, "must lie in [0, 1]"));
    }
    let rho = 1.0 - params.lambda;
    let config = SyntheticConfig {
        rho,
        k: params.k,
        steps: params.steps,
        ..SyntheticConfig::default()
    }
    .with_alpha(params.alpha);
    let strategies = [
        StrategyConfig::Strict,
        StrategyConfig::Oracle { pst: false },
        StrategyConfig::lvspec(params.lambda, params.top_n, false),
    ];
    let result = run_sweep(&[config], &strategies, params.trials, params.seed)?
        .pop()
        .expect("one grid point");
    if let Some(e) = result.error {
        return Err(SyntheticError::PointFailed(e));
    }
    let k = params.k as f64;
    let tau = |i: usize| result.strategies[i].mean_tau;
    let failure = |t: f64| 1.0 - t / k;
    let strict_failure_rate = failure(tau(0));
    Ok(DilutionReport {
        alpha: params.alpha,
        lambda: params.lambda,
        rho,
        k: params.k,
        steps: params.steps,
        trials: params.trials,
        strict_mean_tau: tau(0),
        strict_failure_rate,
        oracle_mean_tau: tau(1),
        oracle_failure_rate: failure(tau(1)),
        scored_mean_tau: tau(2),
        scored_failure_rate: failure(tau(2)),
        predicted_failure_rate: rho * strict_failure_rate,
        analytic_loose_failure_rate: failure(result.analytic_loose),
        token_failure_rate: 1.0 - params.alpha,
        diluted_token_failure_rate: rho * (1.0 - params.alpha),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verification::replay_trace;

    fn small(steps: u64) -> SyntheticConfig {
        SyntheticConfig {
            steps,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn default_config_is_valid() {
        SyntheticConfig::default().validate().unwrap();
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            SyntheticConfig { steps: 0, ..small(1) },
            SyntheticConfig { rho: 1.5, ..small(1) },
            SyntheticConfig { salient_count: 40, ..small(1) },
            SyntheticConfig { d: 1, ..small(1) },
            SyntheticConfig { k: 0, ..small(1) },
            SyntheticConfig { kappa_relevant: -1.0, ..small(1) },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(SyntheticError::Config { .. })), "{c:?}");
        }
    }

    #[test]
    fn generation_is_deterministic_and_valid() {
        let a = generate_trace(&small(50)).unwrap();
        let b = generate_trace(&small(50)).unwrap();
        assert_eq!(a, b);
        assert!(a.validate().is_empty());
        assert_eq!(a.steps.len(), 50);
        let c = generate_trace(&SyntheticConfig { seed: 1, ..small(50) }).unwrap();
        assert_ne!(a, c);
        let names = a.header.model_names.unwrap();
        assert_eq!(names[1], format!("config-crc32:{}", small(50).digest()));
    }

    #[test]
    fn draft_window_ids_are_distinct_and_shifts_stay_mismatched() {
        let t = generate_trace(&SyntheticConfig {
            shift_event_rate: 1.0,
            ..small(200)
        })
        .unwrap();
        let mut shifted = 0;
        for s in &t.steps {
            let ids: HashSet<u32> = s.draft_tokens.iter().map(|t| t.id).collect();
            assert_eq!(ids.len(), s.k());
            for (d, tg) in s.draft_tokens.iter().zip(&s.target_tokens) {
                if d != tg {
                    assert!(ids.contains(&tg.id));
                    shifted += 1;
                }
            }
        }
        assert!(shifted > 0);
    }

    #[test]
    fn fresh_mismatches_avoid_the_window() {
        let t = generate_trace(&SyntheticConfig {
            shift_event_rate: 0.0,
            ..small(200)
        })
        .unwrap();
        for s in &t.steps {
            for (d, tg) in s.draft_tokens.iter().zip(&s.target_tokens) {
                if d != tg {
                    assert!(!s.draft_tokens.contains(tg));
                }
            }
        }
    }

    #[test]
    fn perfect_drafter_and_degenerate_density() {
        let t = generate_trace(&small(20).with_alpha(1.0)).unwrap();
        assert_eq!(replay_trace(&StrategyConfig::Strict, &t).unwrap().metrics.mean_tau, 10.0);

        let t = generate_trace(&SyntheticConfig { rho: 0.0, ..small(50) }).unwrap();
        assert!(t.steps.iter().all(|s| s.relevance_labels.as_ref().unwrap().iter().all(|&l| !l)));
        let lv = replay_trace(&StrategyConfig::lvspec(1.0, 10, false), &t).unwrap();
        assert_eq!(lv.metrics.mean_tau, 10.0);
    }

    #[test]
    fn mismatches_have_higher_entropy() {
        let t = generate_trace(&small(500)).unwrap();
        let (mut m, mut mm) = (Vec::new(), Vec::new());
        for s in &t.steps {
            for (i, e) in s.target_entropy.as_ref().unwrap().iter().enumerate() {
                if s.draft_tokens[i] == s.target_tokens[i] { m.push(*e) } else { mm.push(*e) }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean(&m) - 0.05).abs() < 0.01);
        assert!((mean(&mm) - 0.4).abs() < 0.05);
    }

    #[test]
    fn auc_hand_cases() {
        let mut perfect = vec![(0.1, false), (0.2, false), (0.8, true), (0.9, true)];
        assert_eq!(auc(&mut perfect), Some(1.0));
        let mut ties = vec![(0.5, false), (0.5, true)];
        assert_eq!(auc(&mut ties), Some(0.5));
        let mut inverted = vec![(0.9, false), (0.1, true)];
        assert_eq!(auc(&mut inverted), Some(0.0));
        assert_eq!(auc(&mut [(0.1, true)]), None);
    }

    #[test]
    fn sweep_preconditions() {
        let grid = [small(10)];
        assert_eq!(run_sweep(&grid, &[], 1, 0), Err(SyntheticError::EmptyStrategyList));
        assert_eq!(run_sweep(&[], &[StrategyConfig::Strict], 1, 0), Err(SyntheticError::EmptyGrid));
        assert_eq!(run_sweep(&grid, &[StrategyConfig::Strict], 0, 0), Err(SyntheticError::ZeroTrials));
    }

    #[test]
    fn sweep_records_failing_points() {
        let grid = [small(10), SyntheticConfig { steps: 0, ..small(10) }];
        let r = run_sweep(&grid, &[StrategyConfig::Strict], 2, 3).unwrap();
        assert!(r[0].error.is_none() && r[0].strategies.len() == 1);
        assert!(r[1].error.as_deref().unwrap().contains("steps"));
        let rows = sweep_rows(&r);
        assert_eq!(rows.len(), 2);
        assert!(rows[1].mean_tau.is_none());
    }

    #[test]
    fn sweep_is_deterministic() {
        let grid = [small(200), SyntheticConfig { rho: 0.6, ..small(200) }];
        let s = [StrategyConfig::Strict, "random:p=0.3,seed=9".parse().unwrap()];
        let a = run_sweep(&grid, &s, 3, 11).unwrap();
        let b = run_sweep(&grid, &s, 3, 11).unwrap();
        assert_eq!(a, b);
        let mut csv_a = Vec::new();
        write_sweep_csv(&a, &mut csv_a).unwrap();
        let text = String::from_utf8(csv_a).unwrap();
        assert!(text.starts_with(
            "point,alpha_relevant,alpha_irrelevant,rho,k,steps,trials,strategy,mean_tau,std_error,analytic_strict,analytic_loose,error\n"
        ));
        assert_eq!(text.lines().count(), 5);
        let mut jl = Vec::new();
        write_sweep_records(&a, &mut jl).unwrap();
        let first: SweepRow = serde_json::from_slice(jl.split(|&b| b == b'\n').next().unwrap()).unwrap();
        assert_eq!(first.strategy, "strict");
    }

    #[test]
    fn standard_error_oracle() {
        // per-step SE: τ values 0, 2 → mean 1, sample variance 2, SE 1
        let t = TauTotals { steps: 2, sum: 2, sum_sq: 4 };
        let s = aggregate(&StrategyConfig::Strict, &[t]);
        assert_eq!((s.mean_tau, s.std_error), (1.0, 1.0));
        // trial means 1 and 3 → mean 2, sd √2, SE 1
        let a = TauTotals { steps: 1, sum: 1, sum_sq: 1 };
        let b = TauTotals { steps: 1, sum: 3, sum_sq: 9 };
        let s = aggregate(&StrategyConfig::Strict, &[a, b]);
        assert_eq!(s.mean_tau, 2.0);
        assert!((s.std_error - 1.0).abs() < 1e-15);
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: HashSet<u64> = (0..10).flat_map(|p| (0..10).map(move |t| derive_seed(1, p, t))).collect();
        assert_eq!(seeds.len(), 100);
    }

    #[test]
    fn dilution_poles() {
        let mut p = DilutionParams::new(0.79, 0.0, 10, 1);
        p.steps = 2000;
        let r = dilution_check(&p).unwrap();
        assert_eq!(r.oracle_failure_rate, r.strict_failure_rate);
        assert_eq!(r.scored_failure_rate, r.strict_failure_rate);

        p.lambda = 1.0;
        let r = dilution_check(&p).unwrap();
        assert_eq!(r.oracle_failure_rate, 0.0);
        assert_eq!(r.scored_failure_rate, 0.0);
        assert!(dilution_check(&DilutionParams::new(0.79, 1.5, 10, 1)).is_err());
    }
}
