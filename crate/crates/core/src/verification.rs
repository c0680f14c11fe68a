//! Verification strategies, prefix acceptance, tree branch selection, trace
//! replay, and the loosening report.
//!
//! Every strategy first decides each position independently, then the
//! longest all-accept prefix gives τ. Per-position rules, in order:
//!
//! * exact token-id match accepts as [`Decision::ExactMatch`];
//! * `Random` accepts a mismatch with probability `p`;
//! * `EntropyGate` accepts a mismatch whose target entropy exceeds the threshold;
//! * `FlyWindow` additionally needs the next `window` positions (truncated at
//!   the end of the step) to match exactly;
//! * `LvSpec` accepts a mismatch at a relaxed (least visually relevant)
//!   position, else with PST when the target token occurs anywhere in the
//!   draft window;
//! * `Oracle` is `LvSpec` with the relaxed set taken from ground-truth labels.

use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::relevance::{relaxed_indices, RelaxedIndexSet, RelevanceError, RelevanceScorer};
use crate::strategy::{StrategyConfig, StrategyError};
use crate::theory::speedup_model;
use crate::types::{
    validate_trace, Decision, DecisionCounts, DecodeStep, HiddenMatrix, Latencies, ReplayMetrics, StepVerdict, Trace, Violation,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("step {step_index}: strategy needs target_entropy, which is absent")]
    MissingEntropy { step_index: u64 },
    #[error("step {step_index}: strategy needs draft hidden states, which are empty")]
    MissingHidden { step_index: u64 },
    #[error("step {step_index}: strategy needs relevance_labels, which are absent")]
    MissingLabels { step_index: u64 },
    #[error("step {step_index}: malformed step ({reason})")]
    InvalidStep { step_index: u64, reason: String },
    #[error("tree branches disagree: {0}")]
    BranchMismatch(String),
    #[error("trace cannot be replayed with `{strategy}`: {reason}")]
    TraceStrategyMismatch { strategy: String, reason: String },
    #[error("trace is invalid: {}", summarize(.0))]
    InvalidTrace(Vec<Violation>),
    #[error("verdicts do not match trace: {0}")]
    VerdictTraceMismatch(String),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Relevance(#[from] RelevanceError),
}

fn summarize(v: &[Violation]) -> String {
    let mut s = v.iter().take(3).map(ToString::to_string).collect::<Vec<_>>().join("; ");
    if v.len() > 3 {
        s.push_str(&format!(" (+{} more)", v.len() - 3));
    }
    s
}

/// A validated strategy with its resolved data requirements and, for
/// `Random`, its generator state.
#[derive(Debug, Clone)]
pub struct BoundStrategy {
    config: StrategyConfig,
    needs_hidden: bool,
    needs_entropy: bool,
    needs_labels: bool,
    rng: Option<ChaCha8Rng>,
}

impl BoundStrategy {
    pub fn new(config: StrategyConfig) -> Result<Self, StrategyError> {
        config.validate()?;
        let rng = match config {
            StrategyConfig::Random { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        Ok(Self {
            needs_hidden: matches!(config, StrategyConfig::LvSpec { .. }),
            needs_entropy: matches!(config, StrategyConfig::EntropyGate { .. } | StrategyConfig::FlyWindow { .. }),
            needs_labels: matches!(config, StrategyConfig::Oracle { .. }),
            config,
            rng,
        })
    }

    pub fn config(&self) -> &StrategyConfig {
        &self.config
    }

    pub fn needs_hidden(&self) -> bool {
        self.needs_hidden
    }

    pub fn needs_entropy(&self) -> bool {
        self.needs_entropy
    }

    pub fn needs_labels(&self) -> bool {
        self.needs_labels
    }

    /// Checks that `step` carries every field this strategy reads.
    pub fn check_requirements(&self, step: &DecodeStep) -> Result<(), VerifyError> {
        let step_index = step.step_index;
        if self.needs_entropy && step.target_entropy.is_none() {
            return Err(VerifyError::MissingEntropy { step_index });
        }
        if self.needs_labels && step.relevance_labels.is_none() {
            return Err(VerifyError::MissingLabels { step_index });
        }
        if self.needs_hidden && step.draft_hidden.cols() == 0 {
            return Err(VerifyError::MissingHidden { step_index });
        }
        Ok(())
    }

    /// Fails fast when any step of `trace` lacks a required field.
    pub fn check_trace(&self, trace: &Trace) -> Result<(), VerifyError> {
        for step in &trace.steps {
            self.check_requirements(step).map_err(|e| VerifyError::TraceStrategyMismatch {
                strategy: self.config.to_string(),
                reason: e.to_string(),
            })?;
        }
        Ok(())
    }

    fn verify(
        &mut self,
        step: &DecodeStep,
        scorer: Option<&RelevanceScorer<'_>>,
        relevance_time: &mut Duration,
    ) -> Result<StepVerdict, VerifyError> {
        check_shape(step)?;
        self.check_requirements(step)?;

        let mut relevance = None;
        let relaxed = match self.config {
            StrategyConfig::LvSpec { lambda, top_n, .. } => {
                let scorer = scorer.expect("LvSpec verification requires a relevance scorer");
                let started = Instant::now();
                let scores = scorer.scores(&step.draft_hidden, top_n, step.step_index)?;
                let set = relaxed_indices(&scores, lambda);
                *relevance_time += started.elapsed();
                relevance = Some(scores.scores);
                Some(set)
            }
            StrategyConfig::Oracle { .. } => {
                let labels = step.relevance_labels.as_deref().unwrap_or_default();
                Some(RelaxedIndexSet {
                    indices: labels.iter().enumerate().filter(|(_, &rel)| !rel).map(|(i, _)| i).collect(),
                })
            }
            _ => None,
        };

        let decisions = self.decide(step, relaxed.as_ref());
        Ok(StepVerdict::from_raw(step, decisions, relevance))
    }

    /// Raw per-position decisions before the prefix rule. Every position is
    /// visited, so `Random` consumes one draw per mismatch in the step.
    fn decide(&mut self, step: &DecodeStep, relaxed: Option<&RelaxedIndexSet>) -> Vec<Decision> {
        let k = step.k();
        let exact: Vec<bool> = step
            .draft_tokens
            .iter()
            .zip(&step.target_tokens)
            .map(|(d, t)| d == t)
            .collect();
        let entropy = step.target_entropy.as_deref().unwrap_or_default();

        (0..k)
            .map(|i| {
                if exact[i] {
                    return Decision::ExactMatch;
                }
                let accepted = match self.config {
                    StrategyConfig::Strict => None,
                    StrategyConfig::Random { p, .. } => {
                        let rng = self.rng.as_mut().expect("random strategy carries a generator");
                        (rng.random::<f64>() < p).then_some(Decision::LooseRandom)
                    }
                    StrategyConfig::EntropyGate { threshold } => (entropy[i] > threshold).then_some(Decision::LooseEntropy),
                    StrategyConfig::FlyWindow { threshold, window } => {
                        let end = (i + window).min(k - 1);
                        let window_matches = exact[i + 1..=end.max(i)].iter().all(|&m| m);
                        (entropy[i] > threshold && window_matches).then_some(Decision::LooseEntropy)
                    }
                    StrategyConfig::LvSpec { pst, .. } | StrategyConfig::Oracle { pst } => {
                        let relaxed = relaxed.expect("relaxed set computed for visual strategies");
                        if relaxed.contains(i) {
                            Some(Decision::LooseVisual)
                        } else if pst && step.draft_tokens.contains(&step.target_tokens[i]) {
                            Some(Decision::LoosePst)
                        } else {
                            None
                        }
                    }
                };
                accepted.unwrap_or(Decision::Reject)
            })
            .collect()
    }
}

fn check_shape(step: &DecodeStep) -> Result<(), VerifyError> {
    let k = step.k();
    let reason = if k == 0 {
        Some("empty draft".to_string())
    } else if step.target_tokens.len() != k || step.draft_hidden.rows() != k {
        Some(format!(
            "draft {k}, target {}, hidden rows {}",
            step.target_tokens.len(),
            step.draft_hidden.rows()
        ))
    } else if step.target_entropy.as_ref().is_some_and(|e| e.len() != k) {
        Some("target_entropy length differs from K".to_string())
    } else if step.relevance_labels.as_ref().is_some_and(|l| l.len() != k) {
        Some("relevance_labels length differs from K".to_string())
    } else if !step.draft_hidden.is_well_formed() {
        Some("draft_hidden data length differs from rows x cols".to_string())
    } else {
        None
    };
    match reason {
        Some(reason) => Err(VerifyError::InvalidStep {
            step_index: step.step_index,
            reason,
        }),
        None => Ok(()),
    }
}

fn scorer_for<'a>(strategy: &BoundStrategy, visual: &'a HiddenMatrix) -> Result<Option<RelevanceScorer<'a>>, VerifyError> {
    Ok(if strategy.needs_hidden {
        Some(RelevanceScorer::new(visual)?)
    } else {
        None
    })
}

/// Verifies one decoding step.
pub fn verify_step(strategy: &mut BoundStrategy, step: &DecodeStep, visual_hidden: &HiddenMatrix) -> Result<StepVerdict, VerifyError> {
    let scorer = scorer_for(strategy, visual_hidden)?;
    strategy.verify(step, scorer.as_ref(), &mut Duration::default())
}

fn select_branch(
    strategy: &mut BoundStrategy,
    branch_a: &DecodeStep,
    branch_b: &DecodeStep,
    scorer: Option<&RelevanceScorer<'_>>,
    relevance_time: &mut Duration,
) -> Result<(u8, StepVerdict), VerifyError> {
    if branch_a.step_index != branch_b.step_index {
        return Err(VerifyError::BranchMismatch(format!(
            "step indices {} and {}",
            branch_a.step_index, branch_b.step_index
        )));
    }
    if branch_a.k() != branch_b.k() {
        return Err(VerifyError::BranchMismatch(format!(
            "draft lengths {} and {}",
            branch_a.k(),
            branch_b.k()
        )));
    }
    let mut a = strategy.verify(branch_a, scorer, relevance_time)?;
    let mut b = strategy.verify(branch_b, scorer, relevance_time)?;
    a.branch = 0;
    b.branch = 1;
    Ok(if b.accepted_length > a.accepted_length { (1, b) } else { (0, a) })
}

/// Verifies both branches of a two-branch tree step and keeps the one with
/// the longer accepted prefix; ties go to branch 0.
pub fn select_tree_branch(
    strategy: &mut BoundStrategy,
    branch_a: &DecodeStep,
    branch_b: &DecodeStep,
    visual_hidden: &HiddenMatrix,
) -> Result<(u8, StepVerdict), VerifyError> {
    let scorer = scorer_for(strategy, visual_hidden)?;
    select_branch(strategy, branch_a, branch_b, scorer.as_ref(), &mut Duration::default())
}

/// Verdicts and aggregate metrics of one replay.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Replay {
    pub metrics: ReplayMetrics,
    pub verdicts: Vec<StepVerdict>,
}

#[derive(Debug, Default)]
struct Accumulator {
    steps: u64,
    accepted: u64,
    draft_positions: u64,
    counts: DecisionCounts,
}

impl Accumulator {
    fn add(&mut self, verdict: &StepVerdict) {
        self.steps += 1;
        self.accepted += verdict.accepted_length as u64;
        self.draft_positions += verdict.per_position.len() as u64;
        for &d in &verdict.per_position {
            self.counts.add(d);
        }
    }

    fn mean_tau(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.accepted as f64 / self.steps as f64
        }
    }
}

/// Streaming replay: feeds step groups one at a time and accumulates
/// metrics, so arbitrarily long traces never need to be held in memory.
#[derive(Debug)]
pub struct Replayer<'v> {
    strategy: BoundStrategy,
    scorer: Option<RelevanceScorer<'v>>,
    acc: Accumulator,
    started: Instant,
    relevance_time: Duration,
}

impl<'v> Replayer<'v> {
    pub fn new(config: &StrategyConfig, visual_hidden: &'v HiddenMatrix) -> Result<Self, VerifyError> {
        Self::from_bound(BoundStrategy::new(config.clone())?, visual_hidden)
    }

    pub fn from_bound(strategy: BoundStrategy, visual_hidden: &'v HiddenMatrix) -> Result<Self, VerifyError> {
        let scorer = scorer_for(&strategy, visual_hidden)?;
        Ok(Self {
            strategy,
            scorer,
            acc: Accumulator::default(),
            started: Instant::now(),
            relevance_time: Duration::default(),
        })
    }

    pub fn strategy(&self) -> &BoundStrategy {
        &self.strategy
    }

    /// Verifies one decoding step: a single chain step, or a branch pair.
    pub fn push(&mut self, group: &[DecodeStep]) -> Result<StepVerdict, VerifyError> {
        let verdict = match group {
            [step] => self.strategy.verify(step, self.scorer.as_ref(), &mut self.relevance_time)?,
            [a, b] => {
                select_branch(&mut self.strategy, a, b, self.scorer.as_ref(), &mut self.relevance_time)?.1
            }
            other => {
                return Err(VerifyError::BranchMismatch(format!(
                    "a decoding step holds 1 or 2 branches, got {}",
                    other.len()
                )))
            }
        };
        self.acc.add(&verdict);
        Ok(verdict)
    }

    /// Aggregates everything pushed so far. The speedup estimate uses the
    /// given latencies and the mean draft length.
    pub fn finish(self, latencies: Option<Latencies>) -> ReplayMetrics {
        let elapsed = self.started.elapsed();
        let acc = self.acc;
        let mean_tau = acc.mean_tau();
        let speedup_estimate = match latencies.and_then(|l| l.complete()) {
            Some((t_t, t_d, t_t_k)) if acc.steps > 0 => {
                let mean_k = (acc.draft_positions as f64 / acc.steps as f64).round().max(1.0) as usize;
                speedup_model(mean_tau, t_t, t_d, t_t_k, mean_k).ok()
            }
            _ => None,
        };
        let relevance_wall_share = self.strategy.needs_hidden.then(|| {
            let total = elapsed.as_secs_f64();
            if total > 0.0 {
                (self.relevance_time.as_secs_f64() / total).min(1.0)
            } else {
                0.0
            }
        });
        ReplayMetrics {
            mean_tau,
            total_accepted: acc.accepted,
            total_steps: acc.steps,
            per_position_counts: acc.counts,
            speedup_estimate,
            relevance_wall_share,
        }
    }
}

/// Replays every step of `trace` under `config`.
///
/// `relevance_wall_share` is only reported for strategies that score
/// relevance.
pub fn replay_trace(config: &StrategyConfig, trace: &Trace) -> Result<Replay, VerifyError> {
    let violations = validate_trace(trace);
    if !violations.is_empty() {
        return Err(VerifyError::InvalidTrace(violations));
    }
    let strategy = BoundStrategy::new(config.clone())?;
    strategy.check_trace(trace)?;
    let mut replayer = Replayer::from_bound(strategy, &trace.visual_hidden)?;
    let verdicts = trace
        .step_groups()
        .map(|group| replayer.push(group))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Replay {
        metrics: replayer.finish(trace.header.latencies),
        verdicts,
    })
}

/// One row of the loosening report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub step: u64,
    pub position: usize,
    pub token_id: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub token_text: Option<String>,
    pub decision: ReportTag,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relevance_score: Option<f32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<bool>,
}

/// How a position was treated: strictly verified, loosened (and by which
/// rule), rejected, or never reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportTag {
    Strict,
    LooseVisual,
    LoosePst,
    LooseEntropy,
    LooseRandom,
    Reject,
    NotReached,
}

impl From<Decision> for ReportTag {
    fn from(d: Decision) -> Self {
        match d {
            Decision::ExactMatch => ReportTag::Strict,
            Decision::LooseVisual => ReportTag::LooseVisual,
            Decision::LoosePst => ReportTag::LoosePst,
            Decision::LooseEntropy => ReportTag::LooseEntropy,
            Decision::LooseRandom => ReportTag::LooseRandom,
            Decision::Reject => ReportTag::Reject,
            Decision::NotReached => ReportTag::NotReached,
        }
    }
}

impl fmt::Display for ReportTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportTag::Strict => "strict",
            ReportTag::LooseVisual => "loose-visual",
            ReportTag::LoosePst => "loose-pst",
            ReportTag::LooseEntropy => "loose-entropy",
            ReportTag::LooseRandom => "loose-random",
            ReportTag::Reject => "reject",
            ReportTag::NotReached => "not-reached",
        })
    }
}

/// Per-position listing of which draft tokens were strictly verified and
/// which were loosened. Within a step, rows are ordered by ascending
/// relevance (position order when the strategy scored none), so the
/// relaxed positions come first.
pub fn loosening_report(verdicts: &[StepVerdict], trace: &Trace) -> Result<Vec<ReportRow>, VerifyError> {
    let groups = trace.step_groups();
    if groups.len() != verdicts.len() {
        return Err(VerifyError::VerdictTraceMismatch(format!(
            "{} verdicts for {} steps",
            verdicts.len(),
            groups.len()
        )));
    }
    let mut rows = Vec::new();
    for (group, verdict) in groups.zip(verdicts) {
        let step = group
            .iter()
            .find(|s| s.step_index == verdict.step_index && s.branch == verdict.branch)
            .ok_or_else(|| {
                VerifyError::VerdictTraceMismatch(format!(
                    "no step {} branch {} at this position",
                    verdict.step_index, verdict.branch
                ))
            })?;
        let k = step.k();
        if verdict.per_position.len() != k || verdict.relevance.as_ref().is_some_and(|r| r.len() != k) {
            return Err(VerifyError::VerdictTraceMismatch(format!(
                "step {}: verdict covers {} positions, step has {k}",
                step.step_index,
                verdict.per_position.len()
            )));
        }
        let mut order: Vec<usize> = (0..k).collect();
        if let Some(rel) = &verdict.relevance {
            order.sort_by(|&a, &b| rel[a].partial_cmp(&rel[b]).unwrap_or(std::cmp::Ordering::Equal));
        }
        for i in order {
            let token = &step.draft_tokens[i];
            rows.push(ReportRow {
                step: step.step_index,
                position: i,
                token_id: token.id,
                token_text: token.text.clone(),
                decision: verdict.per_position[i].into(),
                relevance_score: verdict.relevance.as_ref().map(|r| r[i]),
                label: step.relevance_labels.as_ref().map(|l| l[i]),
            });
        }
    }
    Ok(rows)
}

/// Plain-text table rendering of report rows.
pub fn render_report_table(rows: &[ReportRow]) -> String {
    let mut out = format!(
        "{:>6} {:>4} {:>10} {:<16} {:<13} {:>9} {:>6}\n",
        "step", "pos", "token_id", "text", "decision", "relevance", "label"
    );
    for r in rows {
        let text = r.token_text.as_deref().unwrap_or("-");
        let text: String = text.chars().take(16).collect();
        let rel = r.relevance_score.map_or_else(|| "-".to_string(), |s| format!("{s:.4}"));
        let label = r.label.map_or("-", |l| if l { "rel" } else { "irr" });
        out.push_str(&format!(
            "{:>6} {:>4} {:>10} {:<16} {:<13} {:>9} {:>6}\n",
            r.step,
            r.position,
            r.token_id,
            text,
            r.decision.to_string(),
            rel,
            label
        ));
    }
    out
}
