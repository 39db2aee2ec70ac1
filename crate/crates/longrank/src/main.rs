//! Thin command-line front end; all logic lives in the library.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;

use longrank::costmodel::{flops_with, ArchKind, ArchSpec, Convention};
use longrank::error::{Error, Result};
use longrank::extrapolation::{sequence_sparsity, LengthSampler};
use longrank::harness::{self, RunConfig};
use longrank::rlb::{dataset, GroupKey};
use longrank::stca::{load_checkpoint, save_checkpoint, StcaParams};
use longrank::verify;

#[derive(Parser)]
#[command(
    name = "longrank",
    about = "Long-sequence ranking at desk scale: synthetic data, training, evaluation, cost model, verification",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset file (one request per line).
    Gen(GenArgs),
    /// Train a model and write a checkpoint plus a metrics log.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset at a given inference length.
    Eval(EvalArgs),
    /// Emit the analytic FLOPs sweep as CSV.
    Flops(FlopsArgs),
    /// Emit N sampled training lengths for distribution inspection.
    SampleLengths(SampleArgs),
    /// Run every oracle equivalence suite; nonzero exit on failure.
    Verify(VerifyArgs),
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Structured config file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    // Model overrides.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    ffn_expansion: Option<usize>,
    #[arg(long)]
    model_layers: Option<usize>,
    #[arg(long)]
    no_position: bool,
    #[arg(long)]
    no_time_delta: bool,
    #[arg(long)]
    no_query_fusion: bool,
    // Length regimen overrides.
    #[arg(long)]
    length_min: Option<usize>,
    #[arg(long)]
    length_avg: Option<usize>,
    #[arg(long)]
    length_max: Option<usize>,
    #[arg(long)]
    length_infer: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// suffix | random
    #[arg(long)]
    selection: Option<String>,
    // Training overrides.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    embedding_lr: Option<f64>,
    /// per_user | flat
    #[arg(long)]
    loss: Option<String>,
    /// Train at one fixed length instead of sampling.
    #[arg(long)]
    fixed_len: Option<usize>,
    /// Curriculum phases as steps:l_max pairs, e.g. 150:64,150:256.
    #[arg(long)]
    curriculum: Option<String>,
    // Synthetic data overrides.
    #[arg(long)]
    requests: Option<usize>,
    #[arg(long)]
    vocab: Option<u32>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    hist_min: Option<usize>,
    #[arg(long)]
    hist_max: Option<usize>,
    #[arg(long)]
    lag_min: Option<usize>,
    #[arg(long)]
    lag_max: Option<usize>,
    #[arg(long)]
    signal_copies: Option<usize>,
    #[arg(long)]
    proxy_lag_min: Option<usize>,
    #[arg(long)]
    proxy_lag_max: Option<usize>,
    #[arg(long)]
    proxy_copies: Option<usize>,
    #[arg(long)]
    proxy_strength: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    clusters: Option<u32>,
    // Evaluation override.
    #[arg(long)]
    infer_len: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = Some(v);
        }
        if let Some(v) = self.d {
            cfg.model.d = v;
        }
        if let Some(v) = self.heads {
            cfg.model.heads = v;
        }
        if let Some(v) = self.ffn_expansion {
            cfg.model.expansion = v;
        }
        if let Some(v) = self.model_layers {
            cfg.model.layers = v;
        }
        if self.no_position {
            cfg.model.use_position = false;
        }
        if self.no_time_delta {
            cfg.model.use_time_delta = false;
        }
        if self.no_query_fusion {
            cfg.model.use_query_fusion = false;
        }
        if let Some(v) = self.length_min {
            cfg.length.min = v;
        }
        if let Some(v) = self.length_avg {
            cfg.length.avg = v;
        }
        if let Some(v) = self.length_max {
            cfg.length.max = v;
        }
        if let Some(v) = self.length_infer {
            cfg.length.infer = v;
        }
        if let Some(v) = self.alpha {
            cfg.length.alpha = v;
        }
        if let Some(v) = &self.selection {
            cfg.length.selection = v.clone();
        }
        if let Some(v) = self.steps {
            cfg.train.steps = v;
        }
        if let Some(v) = self.batch_size {
            cfg.train.batch_size = v;
        }
        if let Some(v) = self.lr {
            cfg.train.lr = v;
        }
        if let Some(v) = self.embedding_lr {
            cfg.train.embedding_lr = v;
        }
        if let Some(v) = &self.loss {
            cfg.train.loss = v.clone();
        }
        if let Some(v) = self.fixed_len {
            cfg.train.fixed_len = Some(v);
        }
        if let Some(spec) = &self.curriculum {
            cfg.train.curriculum = parse_curriculum(spec)?;
        }
        if let Some(v) = self.requests {
            cfg.data.requests = v;
        }
        if let Some(v) = self.vocab {
            cfg.data.vocab = v;
            cfg.model.video_vocab = v as usize;
        }
        if let Some(v) = self.m {
            cfg.data.m = v;
        }
        if let Some(v) = self.hist_min {
            cfg.data.history_min = v;
        }
        if let Some(v) = self.hist_max {
            cfg.data.history_max = v;
        }
        if let Some(v) = self.lag_min {
            cfg.data.lag_min = v;
        }
        if let Some(v) = self.lag_max {
            cfg.data.lag_max = v;
        }
        if let Some(v) = self.signal_copies {
            cfg.data.signal_copies = v;
        }
        if let Some(v) = self.proxy_lag_min {
            cfg.data.proxy_lag_min = v;
        }
        if let Some(v) = self.proxy_lag_max {
            cfg.data.proxy_lag_max = v;
        }
        if let Some(v) = self.proxy_copies {
            cfg.data.proxy_copies = v;
        }
        if let Some(v) = self.proxy_strength {
            cfg.data.proxy_strength = v;
        }
        if let Some(v) = self.noise {
            cfg.data.noise = v;
        }
        if let Some(v) = self.clusters {
            cfg.data.clusters = v;
        }
        if let Some(v) = self.infer_len {
            cfg.eval.infer_len = v;
        }
        Ok(cfg)
    }
}

fn parse_curriculum(spec: &str) -> Result<Vec<harness::CurriculumPhase>> {
    spec.split(',')
        .map(|phase| {
            let (steps, l_max) = phase
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("bad curriculum phase {phase:?}")))?;
            Ok(harness::CurriculumPhase {
                steps: steps
                    .parse()
                    .map_err(|_| Error::Config(format!("bad steps in {phase:?}")))?,
                l_max: l_max
                    .parse()
                    .map_err(|_| Error::Config(format!("bad l_max in {phase:?}")))?,
            })
        })
        .collect()
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output dataset path (one request per line).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Dataset file; defaults to request-per-line format.
    #[arg(long)]
    data: PathBuf,
    /// Treat the dataset as flat triplets and group them on load.
    #[arg(long)]
    from_triplets: bool,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// Metrics log output (line-delimited records).
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    from_triplets: bool,
    #[arg(long)]
    infer_len: Option<usize>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct FlopsArgs {
    /// Comma-separated kinds: stca_reordered,stca_standard,self_attention.
    #[arg(long, default_value = "stca_reordered,self_attention")]
    kinds: String,
    /// Comma-separated sweep lengths.
    #[arg(long, default_value = "500,2000,8000,10000")]
    lengths: String,
    #[arg(long, default_value_t = 256)]
    d: usize,
    #[arg(long, default_value_t = 8)]
    heads: usize,
    #[arg(long, default_value_t = 4)]
    ffn_expansion: usize,
    #[arg(long, default_value_t = 4)]
    model_layers: usize,
    /// published | measured
    #[arg(long, default_value = "published")]
    convention: String,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// How many lengths to emit, one per line.
    #[arg(long, default_value_t = 100000)]
    n: usize,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    json: bool,
    /// Also run the single-weight corruption sensitivity table.
    #[arg(long)]
    mutation: bool,
}

fn load_data(path: &Path, from_triplets: bool) -> Result<Vec<longrank::rlb::Request>> {
    if from_triplets {
        dataset::read_triplets_grouped(path, GroupKey::User)
    } else {
        dataset::read_requests(path)
    }
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Gen(args) => {
            let cfg = args.config.resolve()?;
            let task = cfg.data.task_config(cfg.seed());
            let requests = harness::generate(&task)?;
            dataset::write_requests(&args.out, &requests)?;
            eprintln!(
                "wrote {} requests ({} targets) to {}",
                requests.len(),
                requests.iter().map(|r| r.targets.len()).sum::<usize>(),
                args.out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Train(args) => {
            let cfg = args.config.resolve()?;
            cfg.model.validate()?;
            let data = load_data(&args.data, args.from_triplets)?;
            let mut rng = rand::rngs::StdRng::seed_from_u64(cfg.seed());
            let mut params: StcaParams<f32> = StcaParams::init(&cfg.model, &mut rng)?;
            let log = harness::train(
                &mut params,
                &cfg.model,
                &cfg.length.sampler_config(),
                cfg.length.selection_policy()?,
                &data,
                &cfg.train,
                cfg.seed(),
            )?;
            save_checkpoint(&args.out, &cfg.model, &params)?;
            if let Some(metrics_path) = &args.metrics {
                let mut lines = String::new();
                for record in &log {
                    lines.push_str(
                        &serde_json::to_string(record).map_err(|e| Error::Format(e.to_string()))?,
                    );
                    lines.push('\n');
                }
                std::fs::write(metrics_path, lines)?;
            }
            if let Some(last) = log.last() {
                eprintln!(
                    "trained {} steps, final loss {:.5}, checkpoint at {}",
                    log.len(),
                    last.loss,
                    args.out.display()
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval(args) => {
            let (model, params) = load_checkpoint(&args.checkpoint)?;
            let data = load_data(&args.data, args.from_triplets)?;
            let l_infer = args.infer_len.unwrap_or(usize::MAX);
            let metrics = harness::evaluate(&params, &model, &data, l_infer)?;
            if args.json {
                println!(
                    "{}",
                    serde_json::to_string(&metrics).map_err(|e| Error::Format(e.to_string()))?
                );
            } else {
                println!("auc {:.5}  nll {:.5}  n {}", metrics.auc, metrics.nll, metrics.n);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Flops(args) => {
            let convention = match args.convention.as_str() {
                "published" => Convention::Published,
                "measured" => Convention::Measured,
                other => {
                    return Err(Error::Config(format!(
                        "unknown convention {other:?}, expected published|measured"
                    )))
                }
            };
            let kinds: Vec<ArchKind> = args
                .kinds
                .split(',')
                .map(|k| {
                    ArchKind::parse(k.trim())
                        .ok_or_else(|| Error::Config(format!("unknown kind {k:?}")))
                })
                .collect::<Result<_>>()?;
            let lengths: Vec<usize> = args
                .lengths
                .split(',')
                .map(|l| {
                    l.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("bad length {l:?}")))
                })
                .collect::<Result<_>>()?;
            println!("kind,L,d,h,r,M,total_gflops,len_dep_gflops");
            for kind in &kinds {
                for &len in &lengths {
                    let spec = ArchSpec {
                        len,
                        d: args.d,
                        heads: args.heads,
                        expansion: args.ffn_expansion,
                        layers: args.model_layers,
                        kind: *kind,
                    };
                    let report = flops_with(&spec, convention);
                    println!(
                        "{},{},{},{},{},{},{:.6},{:.6}",
                        kind.name(),
                        len,
                        args.d,
                        args.heads,
                        args.ffn_expansion,
                        args.model_layers,
                        report.gflops(),
                        report.length_dependent_flops as f64 / 1e9
                    );
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::SampleLengths(args) => {
            let cfg = args.config.resolve()?;
            let sampler = LengthSampler::new(cfg.length.sampler_config())?;
            let mut rng = rand::rngs::StdRng::seed_from_u64(cfg.seed());
            for _ in 0..args.n {
                println!("{}", sampler.sample_length(&mut rng));
            }
            let report = sequence_sparsity(&cfg.length.sampler_config())?;
            eprintln!(
                "beta {:.6}  sequence_sparsity {:.1}%  extrapolation_ratio {:.2}",
                sampler.beta(),
                100.0 * report.sequence_sparsity,
                report.extrapolation_ratio
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify(args) => {
            let seed = args.seed.unwrap_or(42);
            let results = verify::run_all(seed);
            let (mut all_pass, table) = verify::summarize(&results);
            if args.json {
                println!("{}", verify::to_json(&results)?);
            } else {
                print!("{table}");
            }
            if args.mutation {
                let outcomes = verify::mutation_sensitivity(seed);
                for (name, caught) in &outcomes {
                    all_pass &= caught;
                    if !args.json {
                        println!(
                            "mutation {:<8} {}",
                            name,
                            if *caught { "caught" } else { "MISSED" }
                        );
                    }
                }
            }
            Ok(if all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
