//! `sv`: command-line harness for the speculative-verification simulator.
//!
//! Subcommands:
//! - `train`: fit an n-gram model on a text corpus and save it as JSON.
//! - `profile`: run fixed-length speculative decoding over prompts,
//!   collect `(S, A)` records, and emit the acceptance profile plus
//!   info-gain / records / correlation reports.
//! - `run`: execute a simulation described by a JSON run spec, writing the
//!   trace CSV and summary JSON.
//! - `analyze`: post-hoc fairness / waste reports from a trace CSV, and
//!   divergence correlation from a records CSV.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data/runtime error.

use std::fs;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use sv_core::ngram::NGramModel;
use sv_core::oracle::OracleScenario;
use sv_core::profiler::{
    correlation_report, info_gain_table, write_info_gain_csv, AcceptanceProfile, ProfileRecord,
};
use sv_core::reports::{fairness_report, waste_report, write_fairness_csv};
use sv_core::scheduler::LatencyModel;
use sv_core::sim::{run_simulation, summary_from_trace, Mode, ModelTrio, SimConfig, SimInputs};
use sv_core::trace::{read_trace_csv, write_trace_csv};
use sv_core::vocab::{Tokenizer, Vocabulary};
use sv_core::{Result, SamplingConfig, SvError};

#[derive(Parser)]
#[command(name = "sv", version, about = "Speculative-verification simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an n-gram model on a text corpus.
    Train(TrainArgs),
    /// Build an acceptance profile (and analysis reports) from models.
    Profile(ProfileArgs),
    /// Run a simulation from a JSON run spec.
    Run(RunArgs),
    /// Analyze a trace CSV and/or a profiling records CSV.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// UTF-8 text corpus.
    #[arg(long)]
    corpus: PathBuf,
    /// n-gram order (1 = unigram).
    #[arg(long, default_value_t = 2)]
    order: usize,
    /// Add-alpha smoothing constant.
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Tokenization mode: char or whitespace.
    #[arg(long, default_value_t = Tokenizer::Char)]
    tokenizer: Tokenizer,
    /// Optional corpus whose tokens define the (shared) vocabulary.
    #[arg(long)]
    vocab_corpus: Option<PathBuf>,
    /// Output model file (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Train on only a byte slice of the corpus, e.g. `0:50` for the first
    /// half (percentages). Handy for disjoint draft/companion halves.
    #[arg(long)]
    slice: Option<String>,
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long)]
    draft: PathBuf,
    #[arg(long)]
    companion: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Prompt file: one prompt per line.
    #[arg(long)]
    prompts: PathBuf,
    #[arg(long, default_value_t = Tokenizer::Char)]
    tokenizer: Tokenizer,
    #[arg(long, default_value_t = 5)]
    draft_len: usize,
    #[arg(long, default_value_t = 200)]
    max_new_tokens: usize,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    top_p: Option<f64>,
    /// Number of adaptive S bins.
    #[arg(long, default_value_t = 20)]
    s_bins: usize,
    /// Number of adaptive A bins.
    #[arg(long, default_value_t = 15)]
    a_bins: usize,
    /// Equal-width bins for discretizing the acceptance probability X.
    #[arg(long, default_value_t = 10)]
    x_bins: usize,
    /// Output profile JSON.
    #[arg(long)]
    out_profile: PathBuf,
    /// Optional info-gain table CSV (rows: 5/10/20/adaptive resolutions).
    #[arg(long)]
    out_info_gain: Option<PathBuf>,
    /// Optional per-position records CSV (s, a, true p, accepted,
    /// divergence to companion, divergence to target).
    #[arg(long)]
    out_records: Option<PathBuf>,
    /// Optional divergence-correlation CSV.
    #[arg(long)]
    out_correlation: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Run spec JSON; see the README for the schema.
    #[arg(long)]
    config: PathBuf,
    /// Output trace CSV.
    #[arg(long)]
    out_trace: PathBuf,
    /// Output summary JSON.
    #[arg(long)]
    out_summary: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Trace CSV produced by `run`.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Fairness report CSV (requires --trace).
    #[arg(long)]
    out_fairness: Option<PathBuf>,
    /// Waste report JSON (requires --trace).
    #[arg(long)]
    out_waste: Option<PathBuf>,
    /// Latency model JSON for the waste report; defaults to the built-in
    /// parametric model.
    #[arg(long)]
    latency: Option<PathBuf>,
    /// Records CSV produced by `profile --out-records`.
    #[arg(long)]
    records: Option<PathBuf>,
    /// Divergence-correlation CSV (requires --records).
    #[arg(long)]
    out_correlation: Option<PathBuf>,
}

/// JSON run spec consumed by `sv run`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSpec {
    mode: Mode,
    #[serde(default = "default_draft_len")]
    draft_len: usize,
    /// Batch size for oracle modes; model modes take one query per prompt.
    #[serde(default)]
    batch_size: Option<usize>,
    #[serde(default)]
    max_new_tokens: usize,
    #[serde(default)]
    max_steps: Option<usize>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    sampling: SamplingConfig,
    #[serde(default)]
    latency: LatencyModel,
    #[serde(default)]
    models: Option<ModelPaths>,
    #[serde(default)]
    profile: Option<PathBuf>,
    #[serde(default)]
    prompts: Option<PathBuf>,
    #[serde(default)]
    tokenizer: Tokenizer,
    #[serde(default)]
    oracle: Option<OracleScenario>,
}

fn default_draft_len() -> usize {
    5
}

#[derive(Deserialize)]
struct ModelPaths {
    draft: PathBuf,
    companion: PathBuf,
    target: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Command::Train(args) => train(args),
        Command::Profile(args) => profile(args),
        Command::Run(args) => run(args),
        Command::Analyze(args) => analyze(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                SvError::Config(_) => 2,
                _ => 3,
            })
        }
    }
}

fn train(args: TrainArgs) -> Result<()> {
    let text = fs::read_to_string(&args.corpus)?;
    let slice = match &args.slice {
        Some(spec) => {
            let (a, b) = parse_slice(spec)?;
            let start = text.len() * a / 100;
            let end = text.len() * b / 100;
            let start = ceil_char_boundary(&text, start);
            let end = ceil_char_boundary(&text, end);
            &text[start..end]
        }
        None => &text[..],
    };
    let tokens = args.tokenizer.tokenize(slice);
    let model = match &args.vocab_corpus {
        Some(path) => {
            let vocab_text = fs::read_to_string(path)?;
            let vocab_tokens = args.tokenizer.tokenize(&vocab_text);
            let vocab = Vocabulary::from_tokens(vocab_tokens.iter().map(String::as_str));
            NGramModel::train_with_vocab(&tokens, vocab, args.order, args.alpha)?
        }
        None => NGramModel::train(&tokens, args.order, args.alpha)?,
    };
    model.save(&args.out)?;
    println!(
        "trained {}-gram (alpha {}) on {} tokens, vocabulary {} -> {}",
        args.order,
        args.alpha,
        tokens.len(),
        model.vocab().len(),
        args.out.display()
    );
    Ok(())
}

fn parse_slice(spec: &str) -> Result<(usize, usize)> {
    let err = || SvError::Config(format!("bad --slice {spec:?}, expected START:END percentages"));
    let (a, b) = spec.split_once(':').ok_or_else(err)?;
    let a: usize = a.parse().map_err(|_| err())?;
    let b: usize = b.parse().map_err(|_| err())?;
    if a >= b || b > 100 {
        return Err(err());
    }
    Ok((a, b))
}

fn ceil_char_boundary(s: &str, mut i: usize) -> usize {
    while i < s.len() && !s.is_char_boundary(i) {
        i += 1;
    }
    i
}

fn load_trio(draft: &Path, companion: &Path, target: &Path) -> Result<ModelTrio> {
    Ok(ModelTrio {
        draft: NGramModel::load(draft)?,
        companion: NGramModel::load(companion)?,
        target: NGramModel::load(target)?,
    })
}

fn load_prompts(path: &Path, tokenizer: Tokenizer, vocab: &Vocabulary) -> Result<Vec<Vec<u32>>> {
    let text = fs::read_to_string(path)?;
    let mut queries = Vec::new();
    for line in text.lines() {
        if line.is_empty() {
            continue;
        }
        queries.push(vocab.encode(&tokenizer.tokenize(line))?);
    }
    if queries.is_empty() {
        return Err(SvError::Data(format!("no prompts in {}", path.display())));
    }
    Ok(queries)
}

fn profile(args: ProfileArgs) -> Result<()> {
    let trio = load_trio(&args.draft, &args.companion, &args.target)?;
    let queries = load_prompts(&args.prompts, args.tokenizer, trio.draft.vocab())?;
    let cfg = SimConfig {
        mode: Mode::Sd,
        draft_len: args.draft_len,
        max_new_tokens: args.max_new_tokens,
        max_steps: args.max_steps,
        seed: args.seed,
        sampling: SamplingConfig {
            temperature: args.temperature,
            top_k: args.top_k,
            top_p: args.top_p,
        },
        latency: LatencyModel::default(),
        collect_records: true,
    };
    let out = run_simulation(
        &cfg,
        &SimInputs::Models {
            trio: &trio,
            profile: None,
            queries: &queries,
        },
    )?;

    let mut profile = AcceptanceProfile::build(&out.records, args.s_bins, args.a_bins)?;
    profile.set_meta(
        format!(
            "draft={} companion={} target={}",
            args.draft.display(),
            args.companion.display(),
            args.target.display()
        ),
        args.prompts.display().to_string(),
    );
    profile.save(&args.out_profile)?;
    println!(
        "profile: {} records in {}x{} bins -> {}",
        profile.n_records(),
        profile.n_s_bins(),
        profile.n_a_bins(),
        args.out_profile.display()
    );

    if let Some(path) = &args.out_info_gain {
        let rows = info_gain_table(&out.records, args.x_bins, args.s_bins, args.a_bins)?;
        let mut w = BufWriter::new(File::create(path)?);
        write_info_gain_csv(&rows, &mut w)?;
        w.flush()?;
        println!("info-gain table -> {}", path.display());
    }
    if let Some(path) = &args.out_records {
        write_records_csv(&out.records, &out.divergence_pairs, path)?;
        println!("{} records -> {}", out.records.len(), path.display());
    }
    if let Some(path) = &args.out_correlation {
        write_correlation_csv(&out.divergence_pairs, path)?;
        println!("divergence correlation -> {}", path.display());
    }
    Ok(())
}

fn write_records_csv(
    records: &[ProfileRecord],
    divergences: &[(f64, f64)],
    path: &Path,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "s,a,true_accept_prob,accepted,div_dc,div_dt")?;
    for (r, (dc, dt)) in records.iter().zip(divergences) {
        writeln!(
            w,
            "{},{},{},{},{dc},{dt}",
            r.s, r.a, r.true_accept_prob, r.accepted as u8
        )?;
    }
    w.flush()?;
    Ok(())
}

fn write_correlation_csv(pairs: &[(f64, f64)], path: &Path) -> Result<()> {
    let (pearson, spearman) = correlation_report(pairs)?;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "pearson,spearman")?;
    writeln!(w, "{pearson},{spearman}")?;
    w.flush()?;
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let text = fs::read_to_string(&args.config)?;
    let spec: RunSpec = serde_json::from_str(&text)
        .map_err(|e| SvError::Config(format!("{}: {e}", args.config.display())))?;
    let cfg = SimConfig {
        mode: spec.mode,
        draft_len: spec.draft_len,
        max_new_tokens: spec.max_new_tokens,
        max_steps: spec.max_steps,
        seed: spec.seed,
        sampling: spec.sampling,
        latency: spec.latency,
        collect_records: false,
    };

    let profile = match &spec.profile {
        Some(path) => Some(AcceptanceProfile::load(path)?),
        None => None,
    };

    let output = if spec.mode.is_oracle() {
        let scenario = spec
            .oracle
            .as_ref()
            .ok_or_else(|| SvError::Config("oracle mode requires an `oracle` section".into()))?;
        let batch_size = spec
            .batch_size
            .ok_or_else(|| SvError::Config("oracle mode requires `batch_size`".into()))?;
        run_simulation(
            &cfg,
            &SimInputs::Oracle {
                scenario,
                profile: profile.as_ref(),
                batch_size,
            },
        )?
    } else {
        let models = spec
            .models
            .as_ref()
            .ok_or_else(|| SvError::Config("model mode requires a `models` section".into()))?;
        let prompts = spec
            .prompts
            .as_ref()
            .ok_or_else(|| SvError::Config("model mode requires `prompts`".into()))?;
        let trio = load_trio(&models.draft, &models.companion, &models.target)?;
        let queries = load_prompts(prompts, spec.tokenizer, trio.draft.vocab())?;
        run_simulation(
            &cfg,
            &SimInputs::Models {
                trio: &trio,
                profile: profile.as_ref(),
                queries: &queries,
            },
        )?
    };

    let mut w = BufWriter::new(File::create(&args.out_trace)?);
    write_trace_csv(&output.trace, cfg.draft_len, &mut w)?;
    w.flush()?;

    let mut w = BufWriter::new(File::create(&args.out_summary)?);
    serde_json::to_writer_pretty(&mut w, &output.summary)?;
    writeln!(w)?;
    w.flush()?;

    println!(
        "{} steps, {} tokens, goodput {} -> {} / {}",
        output.summary.steps,
        output.summary.tokens,
        output.summary.goodput,
        args.out_trace.display(),
        args.out_summary.display()
    );
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    if args.trace.is_none() && args.records.is_none() {
        return Err(SvError::Config(
            "nothing to analyze: pass --trace and/or --records".into(),
        ));
    }

    if let Some(path) = &args.trace {
        let file = File::open(path)?;
        let (trace, draft_len) = read_trace_csv(BufReader::new(file))?;
        let summary = summary_from_trace(&trace);
        println!("{}", serde_json::to_string_pretty(&summary)?);

        if let Some(out) = &args.out_fairness {
            let report = fairness_report(&trace, draft_len)?;
            let mut w = BufWriter::new(File::create(out)?);
            write_fairness_csv(&report, &mut w)?;
            w.flush()?;
            println!("fairness report -> {}", out.display());
        }
        if let Some(out) = &args.out_waste {
            let latency = match &args.latency {
                Some(p) => LatencyModel::load(p)?,
                None => LatencyModel::default(),
            };
            let report = waste_report(&trace, &latency)?;
            let mut w = BufWriter::new(File::create(out)?);
            serde_json::to_writer_pretty(&mut w, &report)?;
            writeln!(w)?;
            w.flush()?;
            println!("waste report -> {}", out.display());
        }
    }

    if let Some(path) = &args.records {
        let out = args.out_correlation.as_ref().ok_or_else(|| {
            SvError::Config("--records requires --out-correlation".into())
        })?;
        let pairs = read_records_divergences(path)?;
        write_correlation_csv(&pairs, out)?;
        println!("divergence correlation -> {}", out.display());
    }
    Ok(())
}

fn read_records_divergences(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| SvError::Data("empty records file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let dc = cols.iter().position(|c| *c == "div_dc");
    let dt = cols.iter().position(|c| *c == "div_dt");
    let (Some(dc), Some(dt)) = (dc, dt) else {
        return Err(SvError::Data(
            "records file lacks div_dc/div_dt columns".into(),
        ));
    };
    let mut pairs = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parse = |idx: usize| -> Result<f64> {
            fields
                .get(idx)
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| SvError::Data(format!("records line {}: bad field", i + 2)))
        };
        pairs.push((parse(dc)?, parse(dt)?));
    }
    Ok(pairs)
}
