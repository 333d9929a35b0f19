//! Speculative verification at desk scale.
//!
//! A library and simulator for speculative decoding with dynamic
//! verification lengths. N-gram model trios stand in for the draft,
//! companion, and target LLMs; a companion model's alignment indicators
//! `(S, A)` feed an adaptively-binned acceptance profile, and a
//! goodput-greedy scheduler picks how many drafted tokens each query in a
//! batch should verify under a profiled latency model.
//!
//! The main pieces:
//!
//! - [`ngram`]: add-alpha smoothed n-gram models with backoff, plus
//!   [`sampling`] filters (temperature / top-k / top-p).
//! - [`spec_decode`]: drafting and rejection-sampling verification with
//!   residual correction; the moving-average baseline predictor.
//! - [`indicators`]: the `S` (distribution overlap) and `A`
//!   (companion acceptance ratio) signals and the `1 - sum min` divergence.
//! - [`profiler`]: adaptive-binned `(S, A) -> acceptance` profiles,
//!   entropy / information-gain reports, correlation analysis.
//! - [`scheduler`]: `P_gamma(N)`, `E(N|gamma)`, goodput, the first-decline
//!   single-query search and the greedy batch scheduler.
//! - [`sim`] / [`trace`] / [`reports`]: batch simulation harness, trace CSV
//!   emission, fairness and waste analyses.
//! - [`oracle`]: synthetic acceptance scenarios for model-free validation.

pub mod dist;
pub mod error;
pub mod indicators;
pub mod ngram;
pub mod oracle;
pub mod parallel;
pub mod profiler;
pub mod reports;
pub mod rngutil;
pub mod sampling;
pub mod scheduler;
pub mod sim;
pub mod spec_decode;
pub mod textgen;
pub mod trace;
pub mod vocab;

pub use dist::ProbDist;
pub use error::{Result, SvError};
pub use indicators::{compute_indicators, divergence, IndicatorPair};
pub use ngram::NGramModel;
pub use oracle::{NoiseChannel, OracleScenario};
pub use profiler::{AcceptanceProfile, InfoGainReport, ProfileRecord};
pub use sampling::SamplingConfig;
pub use scheduler::{AcceptanceChain, LatencyModel, ScheduleDecision};
pub use sim::{Mode, ModelTrio, SimConfig, SimInputs, SimOutput, StepRecord, Summary};
pub use spec_decode::{DraftedToken, MovingAverageState, VerifyOutcome};
pub use vocab::{Tokenizer, Vocabulary};
