use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use coaction_core::export::ExportFormat;
use coaction_core::filtering::{PruneParams, TemporalMode};
use coaction_core::layers::{AudioBlocking, BuildOptions};
use coaction_core::similarity::{AudioThresholds, VideoMatchOptions};
use coaction_core::synthgen::SynthConfig;
use coaction_core::{FilterSpec, LayerKind};

use crate::CliError;

/// Pipeline configuration, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub corpus: Option<PathBuf>,
    /// Base directory for relative `frames_dir` entries.
    pub frames_root: Option<PathBuf>,
    pub layers: Vec<LayerKind>,
    /// Per-layer filter, e.g. `VD = "frequency:10"`. Missing layers use their default.
    pub filters: BTreeMap<LayerKind, String>,
    pub temporal_mode: TemporalMode,
    pub prune: PruneParams,
    pub export: ExportConfig,
    pub build: BuildConfig,
    pub analysis: AnalysisConfig,
    pub synth: SynthConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportConfig {
    pub formats: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildConfig {
    pub keep_evidence: bool,
    pub group_cap: usize,
    pub audio_exact: u8,
    pub audio_partial: u8,
    pub audio_blocking: AudioBlocking,
    pub video_max_distance: u32,
    pub drop_low_info_frames: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub top_components: usize,
    pub evidence_cap: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            corpus: None,
            frames_root: None,
            layers: LayerKind::ALL.to_vec(),
            filters: BTreeMap::new(),
            temporal_mode: TemporalMode::PerPair,
            prune: PruneParams::default(),
            export: ExportConfig::default(),
            build: BuildConfig::default(),
            analysis: AnalysisConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl Default for ExportConfig {
    fn default() -> Self {
        ExportConfig { formats: vec!["csv".into()] }
    }
}

impl Default for BuildConfig {
    fn default() -> Self {
        let b = BuildOptions::default();
        BuildConfig {
            keep_evidence: b.keep_evidence,
            group_cap: b.group_cap,
            audio_exact: b.audio.exact,
            audio_partial: b.audio.partial,
            audio_blocking: b.audio_blocking,
            video_max_distance: b.video.max_dist,
            drop_low_info_frames: b.video.drop_low_info,
        }
    }
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { top_components: 20, evidence_cap: 200 }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config, CliError> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::InvalidConfig(format!("{}: {e}", path.display())))?;
        Config::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.export_formats()?;
        self.filter_specs()?;
        if self.build.audio_partial > self.build.audio_exact || self.build.audio_exact > 100 {
            return Err(CliError::InvalidConfig("audio thresholds need partial <= exact <= 100".into()));
        }
        if self.analysis.top_components == 0 {
            return Err(CliError::InvalidConfig("analysis.top_components must be positive".into()));
        }
        Ok(())
    }

    pub fn export_formats(&self) -> Result<Vec<ExportFormat>, CliError> {
        let mut out: Vec<ExportFormat> = self
            .export
            .formats
            .iter()
            .map(|f| f.parse().map_err(|e: coaction_core::ExportError| CliError::InvalidConfig(e.to_string())))
            .collect::<Result<_, _>>()?;
        out.sort();
        out.dedup();
        Ok(out)
    }

    /// Filter per configured layer, defaults filled in.
    pub fn filter_specs(&self) -> Result<BTreeMap<LayerKind, FilterSpec>, CliError> {
        let mut out = BTreeMap::new();
        for kind in self.layer_kinds() {
            let spec = match self.filters.get(&kind) {
                Some(s) => s.parse().map_err(|e: coaction_core::ModelError| {
                    CliError::InvalidConfig(format!("filter for {kind}: {e}"))
                })?,
                None => FilterSpec::default_for(kind),
            };
            out.insert(kind, spec);
        }
        Ok(out)
    }

    /// Configured layers, sorted and deduplicated.
    pub fn layer_kinds(&self) -> Vec<LayerKind> {
        let mut k = self.layers.clone();
        k.sort();
        k.dedup();
        k
    }

    pub fn build_options(&self) -> BuildOptions {
        let b = &self.build;
        BuildOptions {
            keep_evidence: b.keep_evidence,
            group_cap: b.group_cap,
            audio: AudioThresholds { exact: b.audio_exact, partial: b.audio_partial },
            audio_blocking: b.audio_blocking,
            video: VideoMatchOptions { max_dist: b.video_max_distance, drop_low_info: b.drop_low_info_frames },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
    }

    #[test]
    fn full_file() {
        let cfg = Config::from_toml(
            r#"
            corpus = "posts.jsonl"
            layers = ["VD", "HS"]
            temporal_mode = "any_pair"
            [filters]
            VD = "frequency:2"
            [prune]
            min_edges = 3
            min_component_size = 4
            [export]
            formats = ["graphml", "csv"]
            [build]
            drop_low_info_frames = true
            "#,
        )
        .unwrap();
        assert_eq!(cfg.layer_kinds(), [LayerKind::HashtagSequence, LayerKind::VideoDescription]);
        let f = cfg.filter_specs().unwrap();
        assert_eq!(f[&LayerKind::VideoDescription], FilterSpec::Frequency { min_weight: 2 });
        assert_eq!(f[&LayerKind::HashtagSequence], FilterSpec::Frequency { min_weight: 10 });
        assert_eq!(cfg.export_formats().unwrap(), [ExportFormat::GraphMl, ExportFormat::Csv]);
        assert!(cfg.build_options().video.drop_low_info);
        assert_eq!(cfg.prune.min_component_size, 4);
    }

    #[test]
    fn invalid_files() {
        for bad in [
            "layers = [\"XX\"]",
            "unknown_key = 1",
            "[export]\nformats = [\"gexf\"]",
            "[filters]\nVD = \"median\"",
            "[build]\naudio_exact = 60\naudio_partial = 70",
            "corpus = ",
        ] {
            assert!(matches!(Config::from_toml(bad), Err(CliError::InvalidConfig(_))), "{bad}");
        }
    }
}
