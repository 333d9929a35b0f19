//! Batch decoding simulation: target decoding, standard speculative
//! decoding (SD), speculative verification (SV), and synthetic-oracle
//! variants of SD/SV.
//!
//! Each step drafts per-query tokens, annotates them with companion
//! indicators, chooses verification lengths (all of them for SD, the
//! goodput-greedy schedule for SV), verifies, and charges the latency model
//! with the batch's total target-side positions. Per-query work inside a
//! step runs data-parallel; every (query, step) pair draws from its own RNG
//! substream, so traces are byte-identical across worker counts.
//!
//! Prefill is excluded from goodput accounting: prompts start "in cache" at
//! zero cost. Queries that reach `max_new_tokens` leave the batch, and the
//! latency model sees only the live batch's positions.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::ProbDist;
use crate::error::{Result, SvError};
use crate::indicators::{compute_indicators, divergence};
use crate::ngram::NGramModel;
use crate::oracle::OracleScenario;
use crate::parallel::map_indexed;
use crate::profiler::{AcceptanceProfile, ProfileRecord};
use crate::rngutil::substream;
use crate::sampling::SamplingConfig;
use crate::scheduler::{batch_schedule, AcceptanceChain, LatencyModel};
use crate::spec_decode::{draft_tokens, target_dists_for_prefix, verify_prefix, DraftedToken};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Target,
    Sd,
    Sv,
    SdOracle,
    SvOracle,
}

impl Mode {
    pub fn is_oracle(&self) -> bool {
        matches!(self, Mode::SdOracle | Mode::SvOracle)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::Target => "target",
            Mode::Sd => "sd",
            Mode::Sv => "sv",
            Mode::SdOracle => "sd-oracle",
            Mode::SvOracle => "sv-oracle",
        };
        write!(f, "{s}")
    }
}

impl FromStr for Mode {
    type Err = SvError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "target" => Ok(Mode::Target),
            "sd" => Ok(Mode::Sd),
            "sv" => Ok(Mode::Sv),
            "sd-oracle" => Ok(Mode::SdOracle),
            "sv-oracle" => Ok(Mode::SvOracle),
            other => Err(SvError::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub mode: Mode,
    pub draft_len: usize,
    pub max_new_tokens: usize,
    /// Hard step cap; required for oracle modes (their queries never finish).
    pub max_steps: Option<usize>,
    pub seed: u64,
    pub sampling: SamplingConfig,
    pub latency: LatencyModel,
    /// Collect per-token profiling records and divergence pairs.
    pub collect_records: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.draft_len < 1 {
            return Err(SvError::Config("draft_len must be >= 1".into()));
        }
        if self.max_new_tokens == 0 && self.max_steps.is_none() {
            return Err(SvError::Config("no stopping condition configured".into()));
        }
        if self.mode.is_oracle() && self.max_steps.is_none() {
            return Err(SvError::Config("oracle modes require max_steps".into()));
        }
        self.sampling.validate()?;
        self.latency.validate()
    }
}

/// Draft, companion, and target models over one shared vocabulary.
#[derive(Debug, Clone)]
pub struct ModelTrio {
    pub draft: NGramModel,
    pub companion: NGramModel,
    pub target: NGramModel,
}

impl ModelTrio {
    pub fn validate(&self) -> Result<()> {
        if self.draft.vocab() != self.companion.vocab()
            || self.draft.vocab() != self.target.vocab()
        {
            return Err(SvError::Data(
                "draft/companion/target vocabularies do not match".into(),
            ));
        }
        Ok(())
    }
}

pub enum SimInputs<'a> {
    Models {
        trio: &'a ModelTrio,
        profile: Option<&'a AcceptanceProfile>,
        /// Per-query prompt token ids.
        queries: &'a [Vec<u32>],
    },
    Oracle {
        scenario: &'a OracleScenario,
        profile: Option<&'a AcceptanceProfile>,
        batch_size: usize,
    },
}

/// One row per (step, live query).
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub query_id: usize,
    pub mode: Mode,
    pub gamma: usize,
    pub accepted: usize,
    /// Modeled latency of the whole step (repeated across the step's rows).
    pub latency: f64,
    /// Indicators per drafted position; empty in target mode.
    pub s: Vec<f64>,
    pub a: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Emitted tokens (accepted + corrections) per unit modeled time.
    pub goodput: f64,
    /// Mean accepted drafted tokens per (step, query).
    pub mean_accepted: f64,
    /// Fraction of verified positions that were rejected.
    pub waste_fraction: f64,
    pub steps: usize,
    pub tokens: usize,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub trace: Vec<StepRecord>,
    pub summary: Summary,
    /// Generated tokens per query (prompt excluded); empty in oracle modes.
    pub outputs: Vec<Vec<u32>>,
    /// Profiling records, when `collect_records` is set.
    pub records: Vec<ProfileRecord>,
    /// Paired (divergence(P_d, P_c), divergence(P_d, P_t)) samples, when
    /// `collect_records` is set and models are in play.
    pub divergence_pairs: Vec<(f64, f64)>,
}

pub fn run_simulation(cfg: &SimConfig, inputs: &SimInputs) -> Result<SimOutput> {
    cfg.validate()?;
    match (cfg.mode, inputs) {
        (Mode::Target | Mode::Sd | Mode::Sv, SimInputs::Models { trio, profile, queries }) => {
            trio.validate()?;
            if queries.is_empty() {
                return Err(SvError::Config("need at least one query".into()));
            }
            if cfg.mode == Mode::Sv && profile.is_none() {
                return Err(SvError::Config("sv mode requires an acceptance profile".into()));
            }
            run_model_simulation(cfg, trio, *profile, queries)
        }
        (Mode::SdOracle | Mode::SvOracle, SimInputs::Oracle { scenario, profile, batch_size }) => {
            scenario.validate()?;
            if *batch_size == 0 {
                return Err(SvError::Config("batch_size must be >= 1".into()));
            }
            if scenario.draft_len != cfg.draft_len {
                return Err(SvError::Config(
                    "oracle scenario draft_len differs from run draft_len".into(),
                ));
            }
            if cfg.mode == Mode::SvOracle && profile.is_none() {
                return Err(SvError::Config("sv-oracle mode requires an acceptance profile".into()));
            }
            Ok(run_oracle_simulation(cfg, scenario, *profile, *batch_size))
        }
        _ => Err(SvError::Config(format!(
            "mode {} does not match the provided inputs",
            cfg.mode
        ))),
    }
}

/// Per-query phase-1 result: drafted tokens, companion annotations, and the
/// RNG carried into verification.
struct Prep {
    drafted: Vec<DraftedToken>,
    companion_dists: Vec<ProbDist>,
    s: Vec<f64>,
    a: Vec<f64>,
    rng: rand_chacha::ChaCha12Rng,
}

fn run_model_simulation(
    cfg: &SimConfig,
    trio: &ModelTrio,
    profile: Option<&AcceptanceProfile>,
    queries: &[Vec<u32>],
) -> Result<SimOutput> {
    let n_queries = queries.len();
    let mut contexts: Vec<Vec<u32>> = queries.to_vec();
    let mut outputs: Vec<Vec<u32>> = vec![Vec::new(); n_queries];
    let mut live: Vec<usize> = (0..n_queries).collect();

    let mut trace = Vec::new();
    let mut records = Vec::new();
    let mut divergence_pairs = Vec::new();
    let mut total_latency = 0.0;
    let mut steps = 0usize;

    while !live.is_empty() && steps < cfg.max_steps.unwrap_or(usize::MAX) {
        let step = steps;
        match cfg.mode {
            Mode::Target => {
                let tokens = map_indexed(live.len(), |i| {
                    let q = live[i];
                    let mut rng = substream(cfg.seed, q as u64, step as u64);
                    let dist = cfg.sampling.apply(&trio.target.next_dist(&contexts[q]));
                    dist.sample(&mut rng)
                });
                let latency = cfg.latency.latency(live.len());
                total_latency += latency;
                for (i, &q) in live.iter().enumerate() {
                    contexts[q].push(tokens[i]);
                    outputs[q].push(tokens[i]);
                    trace.push(StepRecord {
                        step,
                        query_id: q,
                        mode: cfg.mode,
                        gamma: 0,
                        accepted: 0,
                        latency,
                        s: Vec::new(),
                        a: Vec::new(),
                    });
                }
            }
            Mode::Sd | Mode::Sv => {
                let preps: Vec<Prep> = map_indexed(live.len(), |i| {
                    let q = live[i];
                    let mut rng = substream(cfg.seed, q as u64, step as u64);
                    let drafted =
                        draft_tokens(&trio.draft, &contexts[q], cfg.draft_len, &cfg.sampling, &mut rng);
                    let mut ctx = contexts[q].clone();
                    let mut companion_dists = Vec::with_capacity(drafted.len());
                    let mut s = Vec::with_capacity(drafted.len());
                    let mut a = Vec::with_capacity(drafted.len());
                    for d in &drafted {
                        let pc = cfg.sampling.apply(&trio.companion.next_dist(&ctx));
                        let ind = compute_indicators(&d.draft_dist, &pc, d.token_id)
                            .expect("drafted token has positive draft probability");
                        s.push(ind.s);
                        a.push(ind.a);
                        companion_dists.push(pc);
                        ctx.push(d.token_id);
                    }
                    Prep {
                        drafted,
                        companion_dists,
                        s,
                        a,
                        rng,
                    }
                });

                let gammas: Vec<usize> = if cfg.mode == Mode::Sd {
                    vec![cfg.draft_len; live.len()]
                } else {
                    let profile = profile.expect("validated");
                    let chains: Vec<AcceptanceChain> = preps
                        .iter()
                        .map(|p| {
                            AcceptanceChain::new(
                                p.s
                                    .iter()
                                    .zip(&p.a)
                                    .map(|(&s, &a)| profile.lookup_acceptance(s, a))
                                    .collect(),
                            )
                            .expect("profile lookups lie in [0,1]")
                        })
                        .collect();
                    batch_schedule(&chains, &cfg.latency).verify_lens
                };

                let results = map_indexed(live.len(), |i| {
                    let q = live[i];
                    let gamma = gammas[i];
                    let mut rng = preps[i].rng.clone();
                    let target_dists = target_dists_for_prefix(
                        &trio.target,
                        &contexts[q],
                        &preps[i].drafted,
                        gamma,
                        &cfg.sampling,
                    );
                    let outcome = verify_prefix(&target_dists, &preps[i].drafted, &mut rng);
                    (outcome, target_dists)
                });

                let positions: usize = gammas.iter().map(|g| g + 1).sum();
                let latency = cfg.latency.latency(positions);
                total_latency += latency;

                for (i, &q) in live.iter().enumerate() {
                    let (outcome, target_dists) = &results[i];
                    let prep = &preps[i];
                    if cfg.collect_records {
                        for (pos, target_dist) in target_dists.iter().take(gammas[i]).enumerate() {
                            records.push(ProfileRecord {
                                s: prep.s[pos],
                                a: prep.a[pos],
                                true_accept_prob: outcome.per_position_accept_prob[pos],
                                accepted: pos < outcome.accepted_count,
                            });
                            divergence_pairs.push((
                                divergence(&prep.drafted[pos].draft_dist, &prep.companion_dists[pos]),
                                divergence(&prep.drafted[pos].draft_dist, target_dist),
                            ));
                        }
                    }
                    let emitted = outcome.emitted(&prep.drafted);
                    contexts[q].extend_from_slice(&emitted);
                    outputs[q].extend_from_slice(&emitted);
                    trace.push(StepRecord {
                        step,
                        query_id: q,
                        mode: cfg.mode,
                        gamma: gammas[i],
                        accepted: outcome.accepted_count,
                        latency,
                        s: prep.s.clone(),
                        a: prep.a.clone(),
                    });
                }
            }
            Mode::SdOracle | Mode::SvOracle => unreachable!("dispatched earlier"),
        }

        live.retain(|&q| outputs[q].len() < cfg.max_new_tokens);
        steps += 1;
    }

    let summary = summarize(&trace, total_latency, steps);
    Ok(SimOutput {
        trace,
        summary,
        outputs,
        records,
        divergence_pairs,
    })
}

fn run_oracle_simulation(
    cfg: &SimConfig,
    scenario: &OracleScenario,
    profile: Option<&AcceptanceProfile>,
    batch_size: usize,
) -> SimOutput {
    let steps = cfg.max_steps.expect("validated");
    let mut trace = Vec::with_capacity(steps * batch_size);
    let mut records = Vec::new();
    let mut total_latency = 0.0;

    for step in 0..steps {
        let draws: Vec<Vec<crate::oracle::OracleDraw>> =
            map_indexed(batch_size, |q| scenario.draw_step(q as u64, step as u64));

        let gammas: Vec<usize> = if cfg.mode == Mode::SdOracle {
            vec![cfg.draft_len; batch_size]
        } else {
            let profile = profile.expect("validated");
            let chains: Vec<AcceptanceChain> = draws
                .iter()
                .map(|ds| {
                    AcceptanceChain::new(
                        ds.iter().map(|d| profile.lookup_acceptance(d.s, d.a)).collect(),
                    )
                    .expect("profile lookups lie in [0,1]")
                })
                .collect();
            batch_schedule(&chains, &cfg.latency).verify_lens
        };

        let accepted: Vec<usize> = map_indexed(batch_size, |q| {
            let mut rng = substream(cfg.seed, q as u64, step as u64);
            let mut n = 0;
            for d in draws[q].iter().take(gammas[q]) {
                if rng.gen::<f64>() < d.true_p {
                    n += 1;
                } else {
                    break;
                }
            }
            n
        });

        let positions: usize = gammas.iter().map(|g| g + 1).sum();
        let latency = cfg.latency.latency(positions);
        total_latency += latency;

        for q in 0..batch_size {
            if cfg.collect_records {
                for (pos, d) in draws[q].iter().take(gammas[q]).enumerate() {
                    records.push(ProfileRecord {
                        s: d.s,
                        a: d.a,
                        true_accept_prob: d.true_p,
                        accepted: pos < accepted[q],
                    });
                }
            }
            trace.push(StepRecord {
                step,
                query_id: q,
                mode: cfg.mode,
                gamma: gammas[q],
                accepted: accepted[q],
                latency,
                s: draws[q].iter().map(|d| d.s).collect(),
                a: draws[q].iter().map(|d| d.a).collect(),
            });
        }
    }

    let summary = summarize(&trace, total_latency, steps);
    SimOutput {
        trace,
        summary,
        outputs: Vec::new(),
        records,
        divergence_pairs: Vec::new(),
    }
}

fn summarize(trace: &[StepRecord], total_latency: f64, steps: usize) -> Summary {
    let tokens: usize = trace.iter().map(|r| r.accepted + 1).sum();
    let total_gamma: usize = trace.iter().map(|r| r.gamma).sum();
    let total_accepted: usize = trace.iter().map(|r| r.accepted).sum();
    Summary {
        goodput: if total_latency > 0.0 {
            tokens as f64 / total_latency
        } else {
            0.0
        },
        mean_accepted: if trace.is_empty() {
            0.0
        } else {
            total_accepted as f64 / trace.len() as f64
        },
        waste_fraction: if total_gamma > 0 {
            (total_gamma - total_accepted) as f64 / total_gamma as f64
        } else {
            0.0
        },
        steps,
        tokens,
    }
}

/// Recompute the summary from a raw trace (each step's latency counted once).
pub fn summary_from_trace(trace: &[StepRecord]) -> Summary {
    let mut total_latency = 0.0;
    let mut last_step = None;
    let mut steps = 0;
    for r in trace {
        if last_step != Some(r.step) {
            total_latency += r.latency;
            last_step = Some(r.step);
            steps += 1;
        }
    }
    summarize(trace, total_latency, steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::Tokenizer;

    fn trio_from(text: &str) -> ModelTrio {
        let toks = Tokenizer::Char.tokenize(text);
        let vocab = crate::vocab::Vocabulary::from_tokens(toks.iter().map(String::as_str));
        ModelTrio {
            draft: NGramModel::train_with_vocab(&toks, vocab.clone(), 2, 0.2).unwrap(),
            companion: NGramModel::train_with_vocab(&toks, vocab.clone(), 2, 0.4).unwrap(),
            target: NGramModel::train_with_vocab(&toks, vocab, 3, 0.2).unwrap(),
        }
    }

    fn base_cfg(mode: Mode) -> SimConfig {
        SimConfig {
            mode,
            draft_len: 4,
            max_new_tokens: 20,
            max_steps: None,
            seed: 11,
            sampling: SamplingConfig::identity(),
            latency: LatencyModel::parametric(4.0, 0, 1.0).unwrap(),
            collect_records: false,
        }
    }

    #[test]
    fn target_mode_emits_one_token_per_step() {
        let trio = trio_from(&crate::textgen::synthetic_text(3, 4000));
        let cfg = SimConfig {
            max_new_tokens: 10,
            ..base_cfg(Mode::Target)
        };
        let queries = vec![vec![0u32]];
        let out = run_simulation(&cfg, &SimInputs::Models {
            trio: &trio,
            profile: None,
            queries: &queries,
        })
        .unwrap();
        assert_eq!(out.summary.steps, 10);
        assert_eq!(out.summary.tokens, 10);
        assert_eq!(out.outputs[0].len(), 10);
        let expect = 1.0 / cfg.latency.latency(1);
        assert!((out.summary.goodput - expect).abs() < 1e-12);
    }

    #[test]
    fn sd_with_draft_equal_to_target_accepts_everything() {
        let text = crate::textgen::synthetic_text(5, 4000);
        let toks = Tokenizer::Char.tokenize(&text);
        let model = NGramModel::train(&toks, 3, 0.2).unwrap();
        let trio = ModelTrio {
            draft: model.clone(),
            companion: model.clone(),
            target: model,
        };
        let cfg = base_cfg(Mode::Sd);
        let queries = vec![vec![0u32, 1]];
        let out = run_simulation(&cfg, &SimInputs::Models {
            trio: &trio,
            profile: None,
            queries: &queries,
        })
        .unwrap();
        assert_eq!(out.summary.waste_fraction, 0.0);
        for r in &out.trace {
            assert_eq!(r.accepted, cfg.draft_len);
        }
        assert!((out.summary.mean_accepted - cfg.draft_len as f64).abs() < 1e-12);
    }

    #[test]
    fn traces_are_reproducible() {
        let trio = trio_from(&crate::textgen::synthetic_text(9, 6000));
        let cfg = base_cfg(Mode::Sd);
        let queries: Vec<Vec<u32>> = (0..4).map(|i| vec![i as u32]).collect();
        let inputs = SimInputs::Models {
            trio: &trio,
            profile: None,
            queries: &queries,
        };
        let a = run_simulation(&cfg, &inputs).unwrap();
        let b = run_simulation(&cfg, &inputs).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.outputs, b.outputs);
    }

    #[test]
    fn summary_matches_trace_recomputation() {
        let trio = trio_from(&crate::textgen::synthetic_text(13, 6000));
        let cfg = base_cfg(Mode::Sd);
        let queries: Vec<Vec<u32>> = (0..3).map(|i| vec![i as u32]).collect();
        let out = run_simulation(&cfg, &SimInputs::Models {
            trio: &trio,
            profile: None,
            queries: &queries,
        })
        .unwrap();
        let recomputed = summary_from_trace(&out.trace);
        assert!((recomputed.goodput - out.summary.goodput).abs() < 1e-12);
        assert_eq!(recomputed.tokens, out.summary.tokens);
        assert_eq!(recomputed.steps, out.summary.steps);
    }

    #[test]
    fn sv_requires_profile_and_vocab_must_match() {
        let trio = trio_from(&crate::textgen::synthetic_text(3, 4000));
        let cfg = base_cfg(Mode::Sv);
        let queries = vec![vec![0u32]];
        let err = run_simulation(&cfg, &SimInputs::Models {
            trio: &trio,
            profile: None,
            queries: &queries,
        });
        assert!(matches!(err, Err(SvError::Config(_))));

        let other = trio_from(&crate::textgen::synthetic_text(77, 4000));
        let mismatched = ModelTrio {
            draft: other.draft,
            companion: trio.companion.clone(),
            target: trio.target.clone(),
        };
        let err = run_simulation(&base_cfg(Mode::Sd), &SimInputs::Models {
            trio: &mismatched,
            profile: None,
            queries: &queries,
        });
        assert!(matches!(err, Err(SvError::Data(_))));
    }

    #[test]
    fn mode_round_trips() {
        for m in [Mode::Target, Mode::Sd, Mode::Sv, Mode::SdOracle, Mode::SvOracle] {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
        assert!("warp".parse::<Mode>().is_err());
    }
}
