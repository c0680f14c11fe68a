//! Loose speculative-decoding verification.
//!
//! A draft model proposes K tokens per step and the target model verifies
//! them; the accepted length τ is the longest accepted prefix. This crate
//! implements strict and loose verification strategies over recorded or
//! synthetic traces, the visual-relevance score that decides which positions
//! may be loosened, the closed-form acceptance-length model, and Monte Carlo
//! checks of that model.
//!
//! * [`types`]: tokens, hidden matrices, steps, traces, verdicts, validation.
//! * [`relevance`]: cosine similarity, top-N visual relevance, relaxed sets.
//! * [`strategy`]: strategy configs and their text syntax.
//! * [`verification`]: per-step verification, tree branches, replay, reports.
//! * [`theory`]: closed-form expected acceptance length and speedup.
//! * [`synthetic`]: trace generator, sweeps, dilution check.
//! * [`trace_io`]: the line-delimited trace file format.
//! * [`cli`]: the `loosespec` command.

pub mod cli;
pub mod relevance;
pub mod strategy;
pub mod synthetic;
pub mod theory;
pub mod trace_io;
pub mod types;
pub mod verification;

pub use relevance::{relaxed_count, relaxed_indices, visual_relevance, RelaxedIndexSet, RelevanceScorer};
pub use strategy::{parse_strategy_list, StrategyConfig};
pub use synthetic::{dilution_check, generate_trace, run_sweep, SyntheticConfig};
pub use trace_io::{read_trace, read_trace_file, write_trace, write_trace_file, TraceError};
pub use types::{Decision, DecodeStep, HiddenEncoding, HiddenMatrix, StepVerdict, Token, Trace, TraceHeader};
pub use verification::{replay_trace, select_tree_branch, verify_step, BoundStrategy, Replay, VerifyError};
