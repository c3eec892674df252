//! Batch front end: ingest, build, filter, analyze, export, plus synthetic
//! corpora, threshold tuning and the HTTP service.

pub mod config;
pub mod pipeline;

use std::fs::File;
use std::io::BufReader;
use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use coaction_core::export::ExportFormat;
use coaction_core::filtering::{self, TemporalMode};
use coaction_core::metrics::{self, Usernames};
use coaction_core::tuning::{self, ThresholdPolicy};
use coaction_core::{ingest, synthgen, FilterSpec, LayerKind};

pub use config::Config;
pub use pipeline::{run_pipeline, PipelineOutput};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("corpus not found: {0}")]
    MissingCorpus(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Corpus(#[from] coaction_core::CorpusError),
    #[error(transparent)]
    Filter(#[from] coaction_core::FilterError),
    #[error(transparent)]
    Export(#[from] coaction_core::ExportError),
    #[error(transparent)]
    Tuning(#[from] coaction_core::TuningError),
    #[error(transparent)]
    Synth(#[from] coaction_core::SynthError),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingCorpus(_) => 2,
            CliError::InvalidConfig(_) => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "coaction", version, about = "Multilayer co-action network toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Corpus file; overrides the config.
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// Seed for synthetic generation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Ignore near-constant frames when comparing videos.
    #[arg(long, global = true)]
    pub drop_low_info_frames: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a corpus and report field coverage.
    Ingest,
    /// Build layers and write their edge lists.
    Build,
    /// Filter one layer.
    Filter {
        #[arg(long)]
        layer: LayerKind,
        /// e.g. `frequency:10`, `above_average`, `temporal:60`, `none`; defaults per layer.
        #[arg(long)]
        filter: Option<FilterSpec>,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<TemporalMode>,
    },
    /// Full pipeline: build, filter, analyze and export.
    Analyze,
    /// Cross-layer overlap of the configured filtered layers.
    Overlap {
        /// Use unfiltered layers.
        #[arg(long)]
        unfiltered: bool,
    },
    /// Evaluate the canonical filter candidates.
    Sweep {
        /// Layers to sweep; all configured layers when absent.
        #[arg(long)]
        layer: Vec<LayerKind>,
    },
    /// Calibrate audio thresholds against a labelled pair file.
    Tune {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_parser = parse_policy, default_value = "first_perfect")]
        policy: ThresholdPolicy,
    },
    /// Generate a synthetic corpus with ground truth.
    Synth {
        #[arg(long)]
        posts: Option<usize>,
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        clusters: Option<usize>,
        #[arg(long)]
        reuse_pairs: Option<usize>,
    },
    /// Export one layer, optionally filtered.
    Export {
        #[arg(long)]
        layer: LayerKind,
        #[arg(long)]
        format: String,
        #[arg(long)]
        filter: Option<FilterSpec>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[arg(long)]
        pseudonymize: bool,
        #[arg(long, default_value = "")]
        salt: String,
    },
}

fn parse_mode(s: &str) -> Result<TemporalMode, String> {
    match s.replace('-', "_").as_str() {
        "per_pair" => Ok(TemporalMode::PerPair),
        "any_pair" => Ok(TemporalMode::AnyPair),
        _ => Err(format!("unknown temporal mode {s:?}")),
    }
}

fn parse_policy(s: &str) -> Result<ThresholdPolicy, String> {
    match s.replace('-', "_").as_str() {
        "first_perfect" => Ok(ThresholdPolicy::FirstPerfect),
        "max_f1" => Ok(ThresholdPolicy::MaxF1),
        _ => Err(format!("unknown policy {s:?}")),
    }
}

/// Config file merged with global flags.
pub fn effective_config(g: &Global) -> Result<Config, CliError> {
    let mut cfg = match &g.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(c) = &g.corpus {
        cfg.corpus = Some(c.clone());
    }
    if let Some(s) = g.seed {
        cfg.synth.seed = s;
    }
    if g.drop_low_info_frames {
        cfg.build.drop_low_info_frames = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct FilterOutput<'a> {
    kind: LayerKind,
    snapshot_id: &'a str,
    filter: FilterSpec,
    stats: &'a coaction_core::LayerStats64,
}

fn print_json<T: Serialize>(v: &T) -> Result<(), CliError> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn layer<'a>(net: &'a coaction_core::layers::Network, kind: LayerKind) -> Result<&'a coaction_core::Layer, CliError> {
    net.get(kind).ok_or_else(|| CliError::InvalidConfig(format!("layer {kind} is not configured")))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Other(e.to_string()))?;
    }
    let cfg = effective_config(&cli.global)?;
    let out = &cli.global.out;
    match cli.command {
        Command::Ingest => {
            let corpus = pipeline::load_corpus(&cfg)?;
            pipeline::write_json(&out.join("corpus_summary.json"), &corpus.summary)?;
            pipeline::write_json(&out.join("ingest_errors.json"), &corpus.errors)?;
            print_json(&corpus.summary)?;
        }
        Command::Build => {
            let corpus = pipeline::load_corpus(&cfg)?;
            let net = pipeline::build(&cfg, &corpus);
            let names = Usernames::from_posts(&corpus.posts);
            let mut stats = std::collections::BTreeMap::new();
            for (kind, l) in &net.layers {
                for f in cfg.export_formats()? {
                    pipeline::export_layer(l, &names, f, &pipeline::layer_file(&out.join("layers"), *kind, "", f))?;
                }
                stats.insert(kind.abbrev(), metrics::layer_stats::<f64>(l));
            }
            pipeline::write_json(&out.join("layer_stats.json"), &stats)?;
            print_json(&stats)?;
        }
        Command::Filter { layer: kind, filter, mode } => {
            let corpus = pipeline::load_corpus(&cfg)?;
            let cfg = Config { layers: vec![kind], ..cfg };
            let net = pipeline::build(&cfg, &corpus);
            let spec = match filter {
                Some(f) => f,
                None => cfg.filter_specs()?[&kind],
            };
            let snap = filtering::apply_filter::<f64>(layer(&net, kind)?, spec, mode.unwrap_or(cfg.temporal_mode))?;
            let names = Usernames::from_posts(&corpus.posts);
            for f in cfg.export_formats()? {
                let path = pipeline::layer_file(&out.join("filtered"), kind, &format!(".{}", spec.label()), f);
                pipeline::export_layer(&snap.layer, &names, f, &path)?;
            }
            print_json(&FilterOutput { kind, snapshot_id: &snap.snapshot_id, filter: spec, stats: &snap.stats })?;
        }
        Command::Analyze => {
            let res = run_pipeline(&cfg, out)?;
            for f in &res.files {
                println!("{}", out.join(f).display());
            }
        }
        Command::Overlap { unfiltered } => {
            let corpus = pipeline::load_corpus(&cfg)?;
            let net = pipeline::build(&cfg, &corpus);
            let specs = cfg.filter_specs()?;
            let mut layers = Vec::new();
            for (kind, l) in &net.layers {
                let spec = if unfiltered { FilterSpec::None } else { specs[kind] };
                layers.push((
                    kind.abbrev().to_string(),
                    filtering::apply_filter::<f64>(l, spec, cfg.temporal_mode)?.layer,
                ));
            }
            let refs: Vec<_> = layers.iter().map(|(k, l)| (k.clone(), l)).collect();
            let m = metrics::cross_layer_overlap_labelled(&refs);
            let mut buf = Vec::new();
            coaction_core::export::write_chord_csv(&m.chord_rows(), &mut buf)?;
            pipeline::write_atomic(&out.join("overlap.csv"), &buf)?;
            pipeline::write_json(&out.join("overlap.json"), &m)?;
            print!("{}", String::from_utf8_lossy(&buf));
        }
        Command::Sweep { layer: kinds } => {
            let kinds = if kinds.is_empty() { cfg.layer_kinds() } else { kinds };
            let corpus = pipeline::load_corpus(&cfg)?;
            let cfg = Config { layers: kinds, ..cfg };
            let net = pipeline::build(&cfg, &corpus);
            for (kind, l) in &net.layers {
                let report = filtering::sweep_report::<f64>(l, cfg.temporal_mode, cfg.prune)?;
                pipeline::write_json(&out.join("sweep").join(format!("{}.json", kind.abbrev())), &report)?;
                for r in &report.rows {
                    println!(
                        "{}\t{}\tnodes={}\tedges={}\tgiant={}\tviable={}",
                        kind.abbrev(),
                        r.filter.label(),
                        r.stats.node_count,
                        r.stats.edge_count,
                        r.stats.giant_component_size,
                        r.viable
                    );
                }
            }
        }
        Command::Tune { labels, policy } => {
            let corpus = pipeline::load_corpus(&cfg)?;
            let pairs = tuning::read_labels(BufReader::new(File::open(&labels)?))?;
            let cal = tuning::calibrate_audio::<f64>(&pairs, &corpus.posts, policy)?;
            pipeline::write_json(&out.join("tuning.json"), &cal)?;
            println!(
                "exact_threshold={} partial_threshold={} midpoint={}",
                cal.exact_threshold, cal.partial_threshold, cal.midpoint
            );
        }
        Command::Synth { posts, users, clusters, reuse_pairs } => {
            let mut sc = cfg.synth.clone();
            if let Some(n) = posts {
                sc.background_posts = n;
            }
            if let Some(n) = users {
                sc.background_users = n;
            }
            if let Some(n) = clusters {
                sc.clusters = n;
            }
            if let Some(n) = reuse_pairs {
                sc.reuse_pairs_per_type = n;
            }
            let corpus = synthgen::generate_corpus(&sc)?;
            let mut buf = Vec::new();
            ingest::write_dataset(&corpus.posts, &mut buf)?;
            pipeline::write_atomic(&out.join("corpus.jsonl"), &buf)?;
            pipeline::write_json(&out.join("ground_truth.json"), &corpus.truth)?;
            println!(
                "{} posts, {} clusters, {} reuse pairs",
                corpus.posts.len(),
                corpus.truth.clusters.len(),
                corpus.truth.reuse_pairs.len()
            );
        }
        Command::Export { layer: kind, format, filter, output } => {
            let format: ExportFormat = format.parse()?;
            let corpus = pipeline::load_corpus(&cfg)?;
            let cfg = Config { layers: vec![kind], ..cfg };
            let net = pipeline::build(&cfg, &corpus);
            let spec = filter.unwrap_or(FilterSpec::None);
            let snap = filtering::apply_filter::<f64>(layer(&net, kind)?, spec, cfg.temporal_mode)?;
            let path = output.unwrap_or_else(|| {
                let suffix = if spec == FilterSpec::None { String::new() } else { format!(".{}", spec.label()) };
                pipeline::layer_file(out, kind, &suffix, format)
            });
            pipeline::export_layer(&snap.layer, &Usernames::from_posts(&corpus.posts), format, &path)?;
            println!("{}", path.display());
        }
        Command::Serve { bind, pseudonymize, salt } => {
            let corpus = pipeline::load_corpus(&cfg)?;
            let net = pipeline::build(&cfg, &corpus);
            let opts = coaction_service::ServiceOptions {
                pseudonymize,
                pseudonym_salt: salt,
                temporal_mode: cfg.temporal_mode,
                prune: cfg.prune,
                ..Default::default()
            };
            let state = coaction_service::AppState::new(&corpus.posts, net, opts)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(coaction_service::serve(state, bind))?;
        }
    }
    Ok(())
}
