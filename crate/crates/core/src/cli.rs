//! The `codecomp` command-line tool.
//!
//! Reports go to stdout, logs to stderr. Exit codes: 0 success, 2
//! configuration or usage error, 3 data error, 4 numeric failure.
//! Flags take precedence over `CODECOMP_*` environment variables, which take
//! precedence over defaults.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use crate::analysis::{
    self, balance_table, format_code, neighbor_overlap, pq_baseline, shared_code_groups,
    size_report, Report,
};
use crate::codec::{self, reconstruct_embeddings};
use crate::embedding_io::{self, read_embeddings, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::model::SchemeConfig;
use crate::rng::Rng;
use crate::trainer::{self, TrainConfig, TrainReport};

#[derive(Debug, Parser)]
#[command(name = "codecomp", version, about = "Compress word embeddings into compositional codes")]
pub struct Cli {
    /// Only log warnings and errors.
    #[arg(long, global = true)]
    pub quiet: bool,

    /// Worker threads for training.
    #[arg(long, global = true, env = "CODECOMP_THREADS", default_value_t = 1)]
    pub threads: usize,

    /// Report format on stdout.
    #[arg(long, global = true, value_enum, default_value_t = ReportFormat::Text)]
    pub format: ReportFormat,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    /// Aligned, human-readable lines.
    Text,
    /// One `key<TAB>value` per line.
    Kv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EmbeddingFormat {
    Text,
    Binary,
}

#[derive(Debug, Args)]
pub struct SchemeArgs {
    /// Number of codebooks.
    #[arg(long = "M")]
    pub m: usize,
    /// Codewords per codebook (a power of two).
    #[arg(long = "K")]
    pub k: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn codes and codebooks for an embedding file.
    Train(TrainArgs),
    /// Write hard codes and codebooks from a checkpoint.
    Export(ExportArgs),
    /// Rebuild embeddings from a code file and a codebook file.
    Reconstruct(ReconstructArgs),
    /// Reconstruction quality, optionally with the codes of chosen words.
    Stats(StatsArgs),
    /// Per-component subcode usage counts.
    Balance(BalanceArgs),
    /// Codes assigned to more than one word.
    Shared(SharedArgs),
    /// Storage accounting for a coding scheme.
    Size(SizeArgs),
    /// Product-quantization baseline.
    Pq(PqArgs),
    /// Nearest-neighbor agreement between original and reconstruction.
    NnOverlap(NnOverlapArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub emb: PathBuf,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f32,
    #[arg(long, default_value_t = trainer::DEFAULT_ITERATIONS)]
    pub iters: u64,
    #[arg(long, default_value_t = trainer::DEFAULT_BATCH)]
    pub batch: usize,
    #[arg(long, default_value_t = crate::model::DEFAULT_LR)]
    pub lr: f32,
    #[arg(long, env = "CODECOMP_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = trainer::DEFAULT_VALIDATE_EVERY)]
    pub validate_every: u64,
    #[arg(long, default_value_t = trainer::DEFAULT_VAL_FRACTION)]
    pub val_fraction: f64,
    /// Read only the first N words.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Checkpoint path, rewritten whenever validation loss improves.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub emb: PathBuf,
    #[arg(long)]
    pub codes: PathBuf,
    #[arg(long)]
    pub books: PathBuf,
    #[arg(long)]
    pub limit: Option<usize>,
    /// Sample codes from Gumbel-perturbed scores instead of the argmax.
    #[arg(long)]
    pub noisy: bool,
    #[arg(long, env = "CODECOMP_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub codes: PathBuf,
    #[arg(long)]
    pub books: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = EmbeddingFormat::Text)]
    pub out_format: EmbeddingFormat,
    /// Original embeddings; reports the cosine of every reconstructed vector.
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub codes: PathBuf,
    #[arg(long)]
    pub books: PathBuf,
    #[arg(long)]
    pub emb: PathBuf,
    /// Comma-separated words whose codes to print.
    #[arg(long, value_delimiter = ',')]
    pub words: Vec<String>,
}

#[derive(Debug, Args)]
pub struct BalanceArgs {
    #[arg(long)]
    pub codes: PathBuf,
    /// Also write the M x K count table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SharedArgs {
    #[arg(long)]
    pub codes: PathBuf,
    /// Print at most this many groups.
    #[arg(long)]
    pub top: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SizeArgs {
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[arg(long = "H", default_value_t = 300)]
    pub h: usize,
    #[arg(long)]
    pub vocab: usize,
}

#[derive(Debug, Args)]
pub struct PqArgs {
    #[arg(long)]
    pub emb: PathBuf,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[arg(long, default_value_t = analysis::DEFAULT_KMEANS_ITERATIONS)]
    pub iters: usize,
    #[arg(long, env = "CODECOMP_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub codes: Option<PathBuf>,
    #[arg(long)]
    pub books: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NnOverlapArgs {
    #[arg(long)]
    pub emb: PathBuf,
    /// Reconstructed embeddings with the same vocabulary order.
    #[arg(long)]
    pub recon: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 100)]
    pub sample: usize,
    #[arg(long, env = "CODECOMP_SEED", default_value_t = 0)]
    pub seed: u64,
}

fn check_inputs(inputs: &[&Path]) -> Result<()> {
    for p in inputs {
        if !p.is_file() {
            return Err(Error::config(format!("input file {} does not exist", p.display())));
        }
    }
    Ok(())
}

fn check_outputs(outputs: &[&Path], inputs: &[&Path]) -> Result<()> {
    for out in outputs {
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            if !dir.is_dir() {
                return Err(Error::config(format!(
                    "output directory {} does not exist",
                    dir.display()
                )));
            }
        }
        for inp in inputs {
            let same = match (out.canonicalize(), inp.canonicalize()) {
                (Ok(a), Ok(b)) => a == b,
                _ => out == inp,
            };
            if same {
                return Err(Error::config(format!(
                    "output {} would overwrite an input file",
                    out.display()
                )));
            }
        }
    }
    for (i, a) in outputs.iter().enumerate() {
        if outputs[i + 1..].contains(a) {
            return Err(Error::config(format!("output {} given twice", a.display())));
        }
    }
    Ok(())
}

fn scheme(args: &SchemeArgs, dim: usize) -> Result<SchemeConfig> {
    SchemeConfig::new(args.m, args.k, dim)
}

fn emit(out: &mut dyn Write, format: ReportFormat, report: &Report) -> Result<()> {
    let s = match format {
        ReportFormat::Text => report.render_text(),
        ReportFormat::Kv => report.render_kv(),
    };
    out.write_all(s.as_bytes())?;
    Ok(())
}

pub fn train_report(r: &TrainReport) -> Report {
    let mut rep = Report::new("training");
    rep.push(
        "best_val_loss",
        r.best_val_loss.map_or("none".to_string(), |l| format!("{l:.6}")),
    )
    .push("best_iteration", r.best_iteration)
    .push("iterations_run", r.iterations_run)
    .push("validations", r.val_loss_history.len())
    .push("train_words", r.train_words)
    .push("val_words", r.val_words)
    .push("wall_time_s", format!("{:.3}", r.wall_time.as_secs_f64()));
    rep
}

fn run_train(a: &TrainArgs, threads: usize, out: &mut dyn Write, fmt: ReportFormat) -> Result<()> {
    check_inputs(&[&a.emb])?;
    check_outputs(&[&a.out], &[&a.emb])?;
    let emb = read_embeddings(&a.emb, a.limit)?;
    let cfg = scheme(&a.scheme, emb.dim())?.with_tau(a.tau)?;
    let mut tc = TrainConfig::new(cfg);
    tc.iterations = a.iters;
    tc.batch_size = a.batch;
    tc.lr = a.lr;
    tc.seed = a.seed;
    tc.validate_every = a.validate_every;
    tc.val_fraction = a.val_fraction;
    tc.threads = threads;
    tc.validate()?;
    info!(
        "training {}x{} codes for {} words of dimension {}",
        cfg.codebooks,
        cfg.codewords,
        emb.len(),
        emb.dim()
    );
    let (params, report) = trainer::train_with_checkpoint(&emb, &tc, Some(&a.out))?;
    trainer::write_checkpoint(&a.out, &cfg, &params, report.best_iteration)?;
    emit(out, fmt, &train_report(&report))
}

fn run_export(a: &ExportArgs, out: &mut dyn Write, fmt: ReportFormat) -> Result<()> {
    check_inputs(&[&a.checkpoint, &a.emb])?;
    check_outputs(&[&a.codes, &a.books], &[&a.checkpoint, &a.emb])?;
    let ck = trainer::read_checkpoint(&a.checkpoint)?;
    let emb = read_embeddings(&a.emb, a.limit)?;
    let (codes, books) = if a.noisy {
        codec::export_codes_noisy(&ck.params, &emb, &ck.scheme, &mut Rng::new(a.seed))?
    } else {
        codec::export_codes(&ck.params, &emb, &ck.scheme)?
    };
    codec::write_code_file(&codes, emb.vocab(), &a.codes)?;
    codec::write_codebooks(&books, &a.books)?;
    let mut r = Report::new("export");
    r.push("codebooks", codes.codebooks())
        .push("codewords", codes.codewords())
        .push("vocab_size", codes.vocab_size())
        .push("dim", books.dim())
        .push("checkpoint_iteration", ck.iteration);
    emit(out, fmt, &r)
}

fn load_reconstruction(codes: &Path, books: &Path) -> Result<EmbeddingMatrix> {
    let (codes, vocab) = codec::read_code_file(codes)?;
    let books = codec::read_codebooks(books)?;
    reconstruct_embeddings(&codes, &books, vocab)
}

fn run_reconstruct(a: &ReconstructArgs, out: &mut dyn Write, fmt: ReportFormat) -> Result<()> {
    let mut inputs: Vec<&Path> = vec![&a.codes, &a.books];
    if let Some(r) = &a.reference {
        inputs.push(r);
    }
    check_inputs(&inputs)?;
    check_outputs(&[&a.out], &inputs)?;
    let recon = load_reconstruction(&a.codes, &a.books)?;
    match a.out_format {
        EmbeddingFormat::Text => embedding_io::write_text_embeddings(&recon, &a.out)?,
        EmbeddingFormat::Binary => embedding_io::write_binary_matrix(&recon, &a.out)?,
    }
    let mut r = Report::new("reconstruct");
    r.push("vocab_size", recon.len()).push("dim", recon.dim());
    if let Some(path) = &a.reference {
        let original = read_embeddings(path, None)?;
        let q = analysis::reconstruction_quality(&original, &recon)?;
        r.push("mean_squared_distance", format!("{:.6}", q.mean_squared_distance))
            .push("mean_cosine", format!("{:.6}", q.mean_cosine))
            .push("min_cosine", format!("{:.6}", q.min_cosine));
        for (w, c) in recon.vocab().iter().zip(&q.cosines) {
            r.push(format!("cosine.{w}"), format!("{c:.6}"));
        }
    }
    emit(out, fmt, &r)
}

fn run_stats(a: &StatsArgs, out: &mut dyn Write, fmt: ReportFormat) -> Result<()> {
    check_inputs(&[&a.codes, &a.books, &a.emb])?;
    let (codes, vocab) = codec::read_code_file(&a.codes)?;
    let books = codec::read_codebooks(&a.books)?;
    let recon = reconstruct_embeddings(&codes, &books, vocab)?;
    let original = read_embeddings(&a.emb, None)?;
    let q = analysis::reconstruction_quality(&original, &recon)?;
    let mut r = q.to_report();
    r.push("distinct_codes", analysis::distinct_codes(&codes));
    for word in &a.words {
        let pos = recon
            .position(word)
            .ok_or_else(|| Error::data(format!("word {word:?} is not in the code file")))?;
        r.push(
            format!("code.{word}"),
            format_code(codes.code(pos), codes.codewords()),
        );
    }
    emit(out, fmt, &r)
}

fn run_balance(a: &BalanceArgs, out: &mut dyn Write, fmt: ReportFormat) -> Result<()> {
    check_inputs(&[&a.codes])?;
    if let Some(csv) = &a.csv {
        check_outputs(&[csv], &[&a.codes])?;
    }
    let (codes, _) = codec::read_code_file(&a.codes)?;
    let table = balance_table(&codes);
    if let Some(csv) = &a.csv {
        std::fs::write(csv, table.to_csv())?;
    }
    emit(out, fmt, &table.to_report())
}

fn run_shared(a: &SharedArgs, out: &mut dyn Write, fmt: ReportFormat) -> Result<()> {
    check_inputs(&[&a.codes])?;
    let (codes, vocab) = codec::read_code_file(&a.codes)?;
    let groups = shared_code_groups(&codes);
    let shared_words: usize = groups.iter().map(|g| g.words.len()).sum();
    let mut r = Report::new("shared codes");
    r.push("groups", groups.len())
        .push("words_in_groups", shared_words)
        .push("distinct_codes", analysis::distinct_codes(&codes))
        .push("singleton_codes", codes.vocab_size() - shared_words);
    for (i, g) in groups.iter().take(a.top.unwrap_or(usize::MAX)).enumerate() {
        let words: Vec<&str> = g.words.iter().map(|&w| vocab[w].as_str()).collect();
        r.push(
            format!("group.{i}"),
            format!(
                "{} [{}]: {}",
                format_code(&g.code, codes.codewords()),
                g.words.len(),
                words.join(" ")
            ),
        );
    }
    emit(out, fmt, &r)
}

fn run_pq(a: &PqArgs, out: &mut dyn Write, fmt: ReportFormat) -> Result<()> {
    check_inputs(&[&a.emb])?;
    let outputs: Vec<&Path> = a.codes.iter().chain(&a.books).map(PathBuf::as_path).collect();
    check_outputs(&outputs, &[&a.emb])?;
    let emb = read_embeddings(&a.emb, a.limit)?;
    let res = pq_baseline(&emb, a.scheme.m, a.scheme.k, a.iters, a.seed)?;
    if let Some(p) = &a.codes {
        codec::write_code_file(&res.codes, emb.vocab(), p)?;
    }
    if let Some(p) = &a.books {
        codec::write_codebooks(&res.books, p)?;
    }
    let mut r = Report::new("product quantization");
    r.push("scheme", format!("{}x{}", a.scheme.m, a.scheme.k))
        .push("vocab_size", emb.len())
        .push("kmeans_iterations", res.loss_history.len())
        .push("loss", format!("{:.6}", res.loss));
    emit(out, fmt, &r)
}

fn run_nn_overlap(a: &NnOverlapArgs, out: &mut dyn Write, fmt: ReportFormat) -> Result<()> {
    check_inputs(&[&a.emb, &a.recon])?;
    let original = read_embeddings(&a.emb, None)?;
    let recon = read_embeddings(&a.recon, None)?;
    let ov = neighbor_overlap(&original, &recon, a.k, a.sample, a.seed)?;
    let mut r = Report::new("nearest-neighbor overlap");
    r.push("k", a.k)
        .push("queries", ov.queries.len())
        .push("overlap", format!("{:.6}", ov.mean))
        .push("standard_error", format!("{:.6}", ov.standard_error))
        .push("chance_level", format!("{:.6}", a.k as f64 / (original.len() - 1) as f64));
    emit(out, fmt, &r)
}

fn run_size(a: &SizeArgs, out: &mut dyn Write, fmt: ReportFormat) -> Result<()> {
    let cfg = scheme(&a.scheme, a.h)?;
    emit(out, fmt, &size_report(&cfg, a.vocab).to_report())
}

/// Runs a parsed command, writing its report to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    if cli.threads == 0 {
        return Err(Error::config("--threads must be >= 1"));
    }
    let fmt = cli.format;
    match &cli.command {
        Command::Train(a) => run_train(a, cli.threads, out, fmt),
        Command::Export(a) => run_export(a, out, fmt),
        Command::Reconstruct(a) => run_reconstruct(a, out, fmt),
        Command::Stats(a) => run_stats(a, out, fmt),
        Command::Balance(a) => run_balance(a, out, fmt),
        Command::Shared(a) => run_shared(a, out, fmt),
        Command::Size(a) => run_size(a, out, fmt),
        Command::Pq(a) => run_pq(a, out, fmt),
        Command::NnOverlap(a) => run_nn_overlap(a, out, fmt),
    }
}

/// Parses `args`, runs the command, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .try_init();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(&cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
