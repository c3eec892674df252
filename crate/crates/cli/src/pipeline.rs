use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use coaction_core::export::{self, ExportFormat};
use coaction_core::filtering::{self, TemporalMode};
use coaction_core::ingest::{self, CorpusSummary, IngestOptions, ParsedCorpus};
use coaction_core::layers::{self, Network};
use coaction_core::metrics::{self, ComponentSummary, Usernames};
use coaction_core::{FilterSpec, FilteredSnapshot64, LayerKind, LayerStats64};

use crate::config::Config;
use crate::CliError;

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let mut f = File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn resolve_corpus(cfg: &Config) -> Result<PathBuf, CliError> {
    let path = cfg.corpus.clone().ok_or_else(|| CliError::MissingCorpus("no corpus path given".into()))?;
    if !path.is_file() {
        return Err(CliError::MissingCorpus(path.display().to_string()));
    }
    Ok(path)
}

pub fn load_corpus(cfg: &Config) -> Result<ParsedCorpus, CliError> {
    let path = resolve_corpus(cfg)?;
    let frames_root = cfg.frames_root.clone().or_else(|| path.parent().map(Path::to_path_buf));
    let parsed = ingest::parse_dataset_with(BufReader::new(File::open(&path)?), &IngestOptions { frames_root })?;
    for e in parsed.errors.iter().take(20) {
        log::warn!("{}:{}: {}", path.display(), e.line, e.message);
    }
    Ok(parsed)
}

pub fn build(cfg: &Config, corpus: &ParsedCorpus) -> Network {
    layers::build_network(&corpus.posts, &cfg.layer_kinds(), &cfg.build_options())
}

pub fn layer_file(dir: &Path, kind: LayerKind, suffix: &str, format: ExportFormat) -> PathBuf {
    dir.join(format!("{}{suffix}.{}", kind.abbrev(), format.extension()))
}

pub fn export_layer(
    layer: &coaction_core::Layer,
    names: &Usernames,
    format: ExportFormat,
    path: &Path,
) -> Result<(), CliError> {
    let mut buf = Vec::new();
    export::write_layer(layer, names, format, &mut buf)?;
    write_atomic(path, &buf)
}

#[derive(Debug, Clone, Serialize)]
pub struct LayerReport {
    pub kind: LayerKind,
    pub base_digest: String,
    pub base_stats: LayerStats64,
    pub filter: FilterSpec,
    pub snapshot_id: String,
    pub filtered_stats: LayerStats64,
    pub viable: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub corpus: CorpusSummary,
    pub malformed_lines: usize,
    pub duplicate_posts: usize,
    pub temporal_mode: TemporalMode,
    pub layers: Vec<LayerReport>,
}

/// Everything `run_pipeline` computed, for callers that keep going.
pub struct PipelineOutput {
    pub corpus: ParsedCorpus,
    pub network: Network,
    pub snapshots: BTreeMap<LayerKind, FilteredSnapshot64>,
    pub summary: RunSummary,
    pub files: Vec<PathBuf>,
}

/// Ingest, build, filter, analyze and export into `out`.
pub fn run_pipeline(cfg: &Config, out: &Path) -> Result<PipelineOutput, CliError> {
    cfg.validate()?;
    let corpus = load_corpus(cfg)?;
    let network = build(cfg, &corpus);
    let names = Usernames::from_posts(&corpus.posts);
    let formats = cfg.export_formats()?;
    let specs = cfg.filter_specs()?;
    let mode = cfg.temporal_mode;
    let mut files = Vec::new();
    let put = |path: PathBuf, files: &mut Vec<PathBuf>| {
        files.push(path.strip_prefix(out).unwrap_or(&path).to_path_buf());
        path
    };

    let mut snapshots = BTreeMap::new();
    let mut reports = Vec::new();
    for (&kind, layer) in &network.layers {
        for &f in &formats {
            export_layer(layer, &names, f, &put(layer_file(&out.join("layers"), kind, "", f), &mut files))?;
        }
        let spec = specs[&kind];
        let snap = filtering::apply_filter::<f64>(layer, spec, mode)?;
        for &f in &formats {
            let path = layer_file(&out.join("filtered"), kind, &format!(".{}", spec.label()), f);
            export_layer(&snap.layer, &names, f, &put(path, &mut files))?;
        }
        let sweep = filtering::sweep_report::<f64>(layer, mode, cfg.prune)?;
        write_json(&put(out.join("sweep").join(format!("{}.json", kind.abbrev())), &mut files), &sweep)?;
        let comps: Vec<ComponentSummary> = if snap.layer.is_empty() {
            Vec::new()
        } else {
            metrics::top_components(&snap.layer, cfg.analysis.top_components, &names, cfg.analysis.evidence_cap)
                .map_err(|e| CliError::Other(e.to_string()))?
        };
        write_json(&put(out.join("components").join(format!("{}.json", kind.abbrev())), &mut files), &comps)?;
        reports.push(LayerReport {
            kind,
            base_digest: snap.base_digest.clone(),
            base_stats: metrics::layer_stats(layer),
            filter: spec,
            snapshot_id: snap.snapshot_id.clone(),
            filtered_stats: snap.stats,
            viable: filtering::is_viable(&snap.stats, cfg.prune.min_edges, cfg.prune.min_component_size),
        });
        snapshots.insert(kind, snap);
    }

    let labelled: Vec<(String, &coaction_core::Layer)> =
        snapshots.iter().map(|(k, s)| (k.abbrev().to_string(), &s.layer)).collect();
    let overlap = metrics::cross_layer_overlap_labelled(&labelled);
    let mut chord = Vec::new();
    export::write_chord_csv(&overlap.chord_rows(), &mut chord)?;
    write_atomic(&put(out.join("overlap.csv"), &mut files), &chord)?;
    write_json(&put(out.join("overlap.json"), &mut files), &overlap)?;

    let summary = RunSummary {
        corpus: corpus.summary.clone(),
        malformed_lines: corpus.errors.len(),
        duplicate_posts: corpus.duplicates,
        temporal_mode: mode,
        layers: reports,
    };
    write_json(&put(out.join("summary.json"), &mut files), &summary)?;
    files.sort();
    Ok(PipelineOutput { corpus, network, snapshots, summary, files })
}
