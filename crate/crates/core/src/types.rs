//! Shared value types for the verification engine.
//!
//! Everything here is plain immutable data plus validation. Traces read from
//! disk may carry malformed-but-parseable content, so the containers can be
//! built without checks and are then run through [`validate_trace`] (or the
//! incremental [`TraceValidator`]) before any engine code touches them.

use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Current trace format version.
pub const FORMAT_VERSION: u32 = 1;

/// Errors raised by checked constructors.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValueError {
    #[error("matrix data length {len} does not match {rows}x{cols}")]
    ShapeMismatch { rows: usize, cols: usize, len: usize },
    #[error("non-finite value at row {row}, col {col}")]
    NonFinite { row: usize, col: usize },
    #[error("ragged rows: row {row} has {len} values, expected {expected}")]
    Ragged { row: usize, len: usize, expected: usize },
}

/// A vocabulary index with optional display text.
///
/// Equality and hashing look at `id` only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Token {
    pub id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl Token {
    pub fn new(id: u32) -> Self {
        Self { id, text: None }
    }

    pub fn with_text(id: u32, text: impl Into<String>) -> Self {
        Self {
            id,
            text: Some(text.into()),
        }
    }
}

impl From<u32> for Token {
    fn from(id: u32) -> Self {
        Token::new(id)
    }
}

impl PartialEq for Token {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}

impl Eq for Token {}

impl Hash for Token {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.id.hash(state);
    }
}

/// Builds a token sequence from bare ids.
pub fn tokens(ids: &[u32]) -> Vec<Token> {
    ids.iter().copied().map(Token::new).collect()
}

/// Row-major matrix of final-layer hidden states, 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl HiddenMatrix {
    /// Checked constructor: length must equal `rows * cols` and every value
    /// must be finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, ValueError> {
        let m = Self::from_raw(rows, cols, data);
        if m.data.len() != rows * cols {
            return Err(ValueError::ShapeMismatch {
                rows,
                cols,
                len: m.data.len(),
            });
        }
        if let Some((row, col)) = m.first_non_finite() {
            return Err(ValueError::NonFinite { row, col });
        }
        Ok(m)
    }

    /// Unchecked constructor for decoders; callers must validate before use.
    pub fn from_raw(rows: usize, cols: usize, data: Vec<f32>) -> Self {
        Self { rows, cols, data }
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self, ValueError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(ValueError::Ragged {
                    row: i,
                    len: r.len(),
                    expected: cols,
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn is_well_formed(&self) -> bool {
        self.data.len() == self.rows * self.cols
    }

    /// Row `i`. Panics when out of range or when the matrix is not well formed.
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> {
        // chunks_exact(0) panics
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// Position of the first NaN/Inf, as (row, col).
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        let cols = self.cols.max(1);
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|i| (i / cols, i % cols))
    }
}

/// Latencies of one speculative step, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Latencies {
    /// Target model, one token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_t: Option<f64>,
    /// Draft model, one token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_d: Option<f64>,
    /// Target model verifying K draft tokens in parallel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_t_k: Option<f64>,
}

impl Latencies {
    pub fn new(t_t: f64, t_d: f64, t_t_k: f64) -> Self {
        Self {
            t_t: Some(t_t),
            t_d: Some(t_d),
            t_t_k: Some(t_t_k),
        }
    }

    /// All three latencies, when every one is present.
    pub fn complete(&self) -> Option<(f64, f64, f64)> {
        Some((self.t_t?, self.t_d?, self.t_t_k?))
    }
}

/// How hidden matrices are encoded in a trace file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum HiddenEncoding {
    #[serde(rename = "json-numbers")]
    JsonNumbers,
    #[default]
    #[serde(rename = "f32le-base64")]
    F32leBase64,
}

impl fmt::Display for HiddenEncoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HiddenEncoding::JsonNumbers => "json-numbers",
            HiddenEncoding::F32leBase64 => "f32le-base64",
        })
    }
}

impl std::str::FromStr for HiddenEncoding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json-numbers" => Ok(HiddenEncoding::JsonNumbers),
            "f32le-base64" => Ok(HiddenEncoding::F32leBase64),
            other => Err(format!("unknown encoding `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceHeader {
    pub format_version: u32,
    pub d: usize,
    pub l_v: usize,
    pub model_names: Option<Vec<String>>,
    pub latencies: Option<Latencies>,
    pub seed: Option<u64>,
    pub encoding: HiddenEncoding,
}

impl TraceHeader {
    pub fn new(d: usize, l_v: usize) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            d,
            l_v,
            model_names: None,
            latencies: None,
            seed: None,
            encoding: HiddenEncoding::F32leBase64,
        }
    }
}

/// One speculative step: K draft tokens and the target's verified outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeStep {
    pub step_index: u64,
    /// Branch id within a two-branch tree; always 0 for chains.
    pub branch: u8,
    pub draft_tokens: Vec<Token>,
    pub target_tokens: Vec<Token>,
    /// Target-side final-layer hidden states of the draft positions, K x d.
    pub draft_hidden: HiddenMatrix,
    /// Target-distribution entropy per position, in nats.
    pub target_entropy: Option<Vec<f64>>,
    /// Synthetic ground truth only. Never consulted by scored strategies.
    pub relevance_labels: Option<Vec<bool>>,
}

impl DecodeStep {
    pub fn new(
        step_index: u64,
        draft_tokens: Vec<Token>,
        target_tokens: Vec<Token>,
        draft_hidden: HiddenMatrix,
    ) -> Self {
        Self {
            step_index,
            branch: 0,
            draft_tokens,
            target_tokens,
            draft_hidden,
            target_entropy: None,
            relevance_labels: None,
        }
    }

    /// Draft length K.
    pub fn k(&self) -> usize {
        self.draft_tokens.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub visual_hidden: HiddenMatrix,
    pub steps: Vec<DecodeStep>,
    /// 1 for a chain, 2 for the static two-branch tree.
    pub branches_per_step: u8,
}

impl Trace {
    /// Step records grouped per decoding step (pairs for two-branch traces).
    pub fn step_groups(&self) -> std::slice::Chunks<'_, DecodeStep> {
        self.steps.chunks(usize::from(self.branches_per_step.max(1)))
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate_trace(self)
    }
}

/// Identifies a hidden matrix in violation reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "matrix")]
pub enum MatrixRef {
    Visual,
    Draft { record: usize },
}

impl fmt::Display for MatrixRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixRef::Visual => f.write_str("visual_hidden"),
            MatrixRef::Draft { record } => write!(f, "draft_hidden of step record {record}"),
        }
    }
}

/// One invariant violation. `record` is the 0-based position of the step in
/// the trace's step list.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "code")]
pub enum Violation {
    UnsupportedVersion { found: u32 },
    NonPositiveLatency { which: &'static str, value: f64 },
    HeaderDimension { field: &'static str, header: usize, actual: usize },
    BranchesPerStep { found: u8 },
    MatrixDataLength { matrix: MatrixRef, expected: usize, actual: usize },
    NonFiniteHidden { matrix: MatrixRef, row: usize, col: usize },
    EmptyDraft { record: usize },
    LengthMismatch { record: usize, draft: usize, target: usize, hidden_rows: usize },
    HiddenDimMismatch { record: usize, visual: usize, draft: usize },
    FirstStepIndexNonZero { record: usize, found: u64 },
    NonIncreasingStepIndex { record: usize, previous: u64, found: u64 },
    EntropyLength { record: usize, expected: usize, actual: usize },
    InvalidEntropy { record: usize, position: usize, value: f64 },
    LabelsLength { record: usize, expected: usize, actual: usize },
    BranchId { record: usize, expected: u8, found: u8 },
    BranchPairIndex { record: usize, first: u64, second: u64 },
    BranchPairLength { record: usize, first: usize, second: usize },
    UnpairedBranch { record: usize },
}

impl Violation {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Violation::UnsupportedVersion { .. } => "unsupported_version",
            Violation::NonPositiveLatency { .. } => "non_positive_latency",
            Violation::HeaderDimension { .. } => "header_dimension",
            Violation::BranchesPerStep { .. } => "branches_per_step",
            Violation::MatrixDataLength { .. } => "matrix_data_length",
            Violation::NonFiniteHidden { .. } => "non_finite_hidden",
            Violation::EmptyDraft { .. } => "empty_draft",
            Violation::LengthMismatch { .. } => "length_mismatch",
            Violation::HiddenDimMismatch { .. } => "hidden_dim_mismatch",
            Violation::FirstStepIndexNonZero { .. } => "first_step_index_non_zero",
            Violation::NonIncreasingStepIndex { .. } => "non_increasing_step_index",
            Violation::EntropyLength { .. } => "entropy_length",
            Violation::InvalidEntropy { .. } => "invalid_entropy",
            Violation::LabelsLength { .. } => "labels_length",
            Violation::BranchId { .. } => "branch_id",
            Violation::BranchPairIndex { .. } => "branch_pair_index",
            Violation::BranchPairLength { .. } => "branch_pair_length",
            Violation::UnpairedBranch { .. } => "unpaired_branch",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            UnsupportedVersion { found } => {
                write!(f, "format version {found} unsupported (expected {FORMAT_VERSION})")
            }
            NonPositiveLatency { which, value } => write!(f, "latency {which} = {value} is not positive"),
            HeaderDimension { field, header, actual } => {
                write!(f, "header {field}={header} but visual_hidden has {actual}")
            }
            BranchesPerStep { found } => write!(f, "branches_per_step must be 1 or 2, found {found}"),
            MatrixDataLength { matrix, expected, actual } => {
                write!(f, "{matrix}: data length {actual}, expected {expected}")
            }
            NonFiniteHidden { matrix, row, col } => write!(f, "{matrix}: non-finite value at row {row}, col {col}"),
            EmptyDraft { record } => write!(f, "step record {record}: empty draft (K must be >= 1)"),
            LengthMismatch { record, draft, target, hidden_rows } => write!(
                f,
                "step record {record}: length mismatch (draft {draft}, target {target}, hidden rows {hidden_rows})"
            ),
            HiddenDimMismatch { record, visual, draft } => write!(
                f,
                "step record {record}: hidden dimension mismatch (draft_hidden cols {draft}, visual_hidden cols {visual})"
            ),
            FirstStepIndexNonZero { record, found } => {
                write!(f, "step record {record}: first step index is {found}, expected 0")
            }
            NonIncreasingStepIndex { record, previous, found } => write!(
                f,
                "step record {record}: non-increasing step index ({found} after {previous})"
            ),
            EntropyLength { record, expected, actual } => {
                write!(f, "step record {record}: target_entropy has {actual} entries, expected {expected}")
            }
            InvalidEntropy { record, position, value } => {
                write!(f, "step record {record}: entropy {value} at position {position} is negative or non-finite")
            }
            LabelsLength { record, expected, actual } => {
                write!(f, "step record {record}: relevance_labels has {actual} entries, expected {expected}")
            }
            BranchId { record, expected, found } => {
                write!(f, "step record {record}: branch id {found}, expected {expected}")
            }
            BranchPairIndex { record, first, second } => write!(
                f,
                "step record {record}: branch pair step indices differ ({first} vs {second})"
            ),
            BranchPairLength { record, first, second } => {
                write!(f, "step record {record}: branch pair draft lengths differ ({first} vs {second})")
            }
            UnpairedBranch { record } => write!(f, "step record {record}: branch 0 without matching branch 1"),
        }
    }
}

/// Incremental trace validation, one step record at a time.
#[derive(Debug)]
pub struct TraceValidator {
    d: usize,
    branches: u8,
    record: usize,
    previous_index: Option<u64>,
    open_pair: Option<(u64, usize)>,
    violations: Vec<Violation>,
}

impl TraceValidator {
    pub fn new(header: &TraceHeader, visual_hidden: &HiddenMatrix, branches_per_step: u8) -> Self {
        let mut violations = Vec::new();
        if header.format_version != FORMAT_VERSION {
            violations.push(Violation::UnsupportedVersion {
                found: header.format_version,
            });
        }
        if let Some(lat) = &header.latencies {
            for (which, v) in [("t_t", lat.t_t), ("t_d", lat.t_d), ("t_t_k", lat.t_t_k)] {
                if let Some(value) = v {
                    if !(value > 0.0 && value.is_finite()) {
                        violations.push(Violation::NonPositiveLatency { which, value });
                    }
                }
            }
        }
        if !(1..=2).contains(&branches_per_step) {
            violations.push(Violation::BranchesPerStep {
                found: branches_per_step,
            });
        }
        if header.d != visual_hidden.cols() {
            violations.push(Violation::HeaderDimension {
                field: "d",
                header: header.d,
                actual: visual_hidden.cols(),
            });
        }
        if header.l_v != visual_hidden.rows() {
            violations.push(Violation::HeaderDimension {
                field: "l_v",
                header: header.l_v,
                actual: visual_hidden.rows(),
            });
        }
        check_matrix(visual_hidden, MatrixRef::Visual, &mut violations);
        Self {
            d: visual_hidden.cols(),
            branches: branches_per_step,
            record: 0,
            previous_index: None,
            open_pair: None,
            violations,
        }
    }

    pub fn check_step(&mut self, step: &DecodeStep) {
        let record = self.record;
        self.record += 1;
        let v = &mut self.violations;

        let k = step.draft_tokens.len();
        if k == 0 {
            v.push(Violation::EmptyDraft { record });
        }
        if step.target_tokens.len() != k || step.draft_hidden.rows() != k {
            v.push(Violation::LengthMismatch {
                record,
                draft: k,
                target: step.target_tokens.len(),
                hidden_rows: step.draft_hidden.rows(),
            });
        }
        if step.draft_hidden.cols() != self.d {
            v.push(Violation::HiddenDimMismatch {
                record,
                visual: self.d,
                draft: step.draft_hidden.cols(),
            });
        }
        check_matrix(&step.draft_hidden, MatrixRef::Draft { record }, v);
        if let Some(ent) = &step.target_entropy {
            if ent.len() != k {
                v.push(Violation::EntropyLength {
                    record,
                    expected: k,
                    actual: ent.len(),
                });
            }
            if let Some((position, &value)) = ent.iter().enumerate().find(|(_, e)| !(**e >= 0.0 && e.is_finite())) {
                v.push(Violation::InvalidEntropy { record, position, value });
            }
        }
        if let Some(labels) = &step.relevance_labels {
            if labels.len() != k {
                v.push(Violation::LabelsLength {
                    record,
                    expected: k,
                    actual: labels.len(),
                });
            }
        }

        if self.branches == 2 {
            match self.open_pair.take() {
                None => {
                    if step.branch != 0 {
                        v.push(Violation::BranchId {
                            record,
                            expected: 0,
                            found: step.branch,
                        });
                    }
                    self.check_index(record, step.step_index);
                    self.open_pair = Some((step.step_index, k));
                }
                Some((first_index, first_k)) => {
                    if step.branch != 1 {
                        v.push(Violation::BranchId {
                            record,
                            expected: 1,
                            found: step.branch,
                        });
                    }
                    if step.step_index != first_index {
                        v.push(Violation::BranchPairIndex {
                            record,
                            first: first_index,
                            second: step.step_index,
                        });
                    }
                    if k != first_k {
                        v.push(Violation::BranchPairLength {
                            record,
                            first: first_k,
                            second: k,
                        });
                    }
                }
            }
        } else {
            if step.branch != 0 {
                v.push(Violation::BranchId {
                    record,
                    expected: 0,
                    found: step.branch,
                });
            }
            self.check_index(record, step.step_index);
        }
    }

    fn check_index(&mut self, record: usize, index: u64) {
        match self.previous_index {
            None if index != 0 => self
                .violations
                .push(Violation::FirstStepIndexNonZero { record, found: index }),
            Some(previous) if index <= previous => {
                self.violations.push(Violation::NonIncreasingStepIndex {
                    record,
                    previous,
                    found: index,
                })
            }
            _ => {}
        }
        self.previous_index = Some(index);
    }

    pub fn finish(mut self) -> Vec<Violation> {
        if self.open_pair.is_some() {
            self.violations.push(Violation::UnpairedBranch {
                record: self.record - 1,
            });
        }
        self.violations
    }
}

fn check_matrix(m: &HiddenMatrix, which: MatrixRef, out: &mut Vec<Violation>) {
    if !m.is_well_formed() {
        out.push(Violation::MatrixDataLength {
            matrix: which,
            expected: m.rows() * m.cols(),
            actual: m.data().len(),
        });
    }
    if let Some((row, col)) = m.first_non_finite() {
        out.push(Violation::NonFiniteHidden { matrix: which, row, col });
    }
}

/// Every invariant violation of `trace`; empty when valid.
pub fn validate_trace(trace: &Trace) -> Vec<Violation> {
    let mut validator = TraceValidator::new(&trace.header, &trace.visual_hidden, trace.branches_per_step);
    for step in &trace.steps {
        validator.check_step(step);
    }
    validator.finish()
}

/// Per-position verification outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    ExactMatch,
    LooseVisual,
    LoosePst,
    LooseEntropy,
    LooseRandom,
    Reject,
    NotReached,
}

impl Decision {
    pub const ALL: [Decision; 7] = [
        Decision::ExactMatch,
        Decision::LooseVisual,
        Decision::LoosePst,
        Decision::LooseEntropy,
        Decision::LooseRandom,
        Decision::Reject,
        Decision::NotReached,
    ];

    pub fn is_accept(self) -> bool {
        !matches!(self, Decision::Reject | Decision::NotReached)
    }

    pub fn is_loose(self) -> bool {
        self.is_accept() && self != Decision::ExactMatch
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Decision::ExactMatch => "exact-match",
            Decision::LooseVisual => "loose-visual",
            Decision::LoosePst => "loose-pst",
            Decision::LooseEntropy => "loose-entropy",
            Decision::LooseRandom => "loose-random",
            Decision::Reject => "reject",
            Decision::NotReached => "not-reached",
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of verifying one step (or the chosen branch of a tree step).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepVerdict {
    pub step_index: u64,
    pub branch: u8,
    pub accepted_length: usize,
    pub per_position: Vec<Decision>,
    pub emitted_tokens: Vec<Token>,
    /// Visual relevance per position, when the strategy computed it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relevance: Option<Vec<f32>>,
}

impl StepVerdict {
    /// Applies the longest-accepted-prefix rule to raw per-position
    /// decisions: the first non-accept becomes `Reject`, everything after it
    /// `NotReached`.
    pub fn from_raw(step: &DecodeStep, mut decisions: Vec<Decision>, relevance: Option<Vec<f32>>) -> Self {
        debug_assert_eq!(decisions.len(), step.k());
        let tau = decisions.iter().take_while(|d| d.is_accept()).count();
        if tau < decisions.len() {
            decisions[tau] = Decision::Reject;
            for d in &mut decisions[tau + 1..] {
                *d = Decision::NotReached;
            }
        }
        let mut emitted: Vec<Token> = step.draft_tokens[..tau].to_vec();
        if tau < step.k() {
            emitted.push(step.target_tokens[tau].clone());
        }
        Self {
            step_index: step.step_index,
            branch: step.branch,
            accepted_length: tau,
            per_position: decisions,
            emitted_tokens: emitted,
            relevance,
        }
    }
}

/// Histogram over decision kinds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionCounts {
    pub exact_match: u64,
    pub loose_visual: u64,
    pub loose_pst: u64,
    pub loose_entropy: u64,
    pub loose_random: u64,
    pub reject: u64,
    pub not_reached: u64,
}

impl DecisionCounts {
    fn slot(&mut self, d: Decision) -> &mut u64 {
        match d {
            Decision::ExactMatch => &mut self.exact_match,
            Decision::LooseVisual => &mut self.loose_visual,
            Decision::LoosePst => &mut self.loose_pst,
            Decision::LooseEntropy => &mut self.loose_entropy,
            Decision::LooseRandom => &mut self.loose_random,
            Decision::Reject => &mut self.reject,
            Decision::NotReached => &mut self.not_reached,
        }
    }

    pub fn add(&mut self, d: Decision) {
        *self.slot(d) += 1;
    }

    pub fn get(&self, d: Decision) -> u64 {
        let mut copy = *self;
        *copy.slot(d)
    }

    pub fn total(&self) -> u64 {
        Decision::ALL.iter().map(|&d| self.get(d)).sum()
    }
}

/// Aggregate results of replaying one trace under one strategy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayMetrics {
    pub mean_tau: f64,
    pub total_accepted: u64,
    pub total_steps: u64,
    pub per_position_counts: DecisionCounts,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speedup_estimate: Option<f64>,
    /// Wall-clock share of replay time spent computing visual relevance.
    /// A timing measurement, so excluded from determinism guarantees.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relevance_wall_share: Option<f64>,
}
