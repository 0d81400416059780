//! TOML run manifests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{ChainConfig, DiagnosticsConfig, ProposalMix, SeedConfig};
use crate::error::ConfigError;
use crate::measure::{MeasureParams, COUNTY_PRESET_LINKS};
use crate::proposal::cut::DEFAULT_EXHAUSTIVE_DEGREE;
use crate::proposal::{BlockBounds, MergeSplitConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Sample,
    Seed,
    Diagnose,
    Oracle,
    CountTrees,
}

/// Chain settings shared by every chain of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainsSection {
    pub count: usize,
    pub steps: u64,
    /// Chain `i` uses this seed on stream `i`.
    pub seed: u64,
    pub record_every: u64,
    pub observables: Vec<String>,
    pub assignment_every: Option<u64>,
    pub mix: ProposalMix,
    /// `[min, max]` children per coarse block under hierarchy moves.
    pub block_bounds: Option<[usize; 2]>,
    pub exhaustive_degree: usize,
    pub always_tau_ratio: bool,
    /// Snapshot files used as the initial states of the first chains; the
    /// remaining chains are seeded randomly.
    pub initial: Vec<PathBuf>,
}

impl Default for ChainsSection {
    fn default() -> Self {
        ChainsSection {
            count: 1,
            steps: 1000,
            seed: 0,
            record_every: 1,
            observables: Vec::new(),
            assignment_every: None,
            mix: ProposalMix::default(),
            block_bounds: None,
            exhaustive_degree: DEFAULT_EXHAUSTIVE_DEGREE,
            always_tau_ratio: false,
            initial: Vec::new(),
        }
    }
}

impl ChainsSection {
    pub fn block_bounds(&self) -> Result<Option<BlockBounds>, ConfigError> {
        self.block_bounds
            .map(|[min, max]| BlockBounds::new(min, max))
            .transpose()
    }

    pub fn chain_config(&self, index: usize) -> Result<ChainConfig, ConfigError> {
        Ok(ChainConfig {
            steps: self.steps,
            rng_seed: self.seed,
            stream: index as u64,
            record_every: self.record_every.max(1),
            observables: self.observables.clone(),
            mix: self.mix,
            block_bounds: self.block_bounds()?,
            merge_split: MergeSplitConfig {
                exhaustive_degree: self.exhaustive_degree,
                always_tau_ratio: self.always_tau_ratio,
            },
            assignment_every: self.assignment_every,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedSection {
    pub max_attempts: usize,
    pub extra_links: usize,
    pub link_count: Option<usize>,
}

impl Default for SeedSection {
    fn default() -> Self {
        let d = SeedConfig::default();
        SeedSection {
            max_attempts: d.max_attempts,
            extra_links: d.extra_links,
            link_count: d.link_count,
        }
    }
}

/// Named parameter sets that replace the `[measure]` section.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Thirteen districts over a county level with 13 tracked links.
    County,
}

/// Which observables define a seat: districts where `a` exceeds `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseSection {
    pub a: String,
    pub b: String,
    /// Sample tables to compare; empty means the tables of this run.
    pub tables: Vec<PathBuf>,
    #[serde(flatten)]
    pub stats: DiagnosticsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunManifest {
    pub mode: Mode,
    pub preset: Option<Preset>,
    pub graph: PathBuf,
    /// When given, must equal the level names of the graph file.
    pub level_names: Option<Vec<String>>,
    pub output_dir: PathBuf,
    pub threads: Option<usize>,
    pub measure: MeasureParams,
    pub chains: ChainsSection,
    pub seed: SeedSection,
    pub diagnose: DiagnoseSection,
    /// Snapshot whose districts `count-trees` reports on.
    pub assignment: Option<PathBuf>,
}

impl Default for RunManifest {
    fn default() -> Self {
        RunManifest {
            mode: Mode::Sample,
            preset: None,
            graph: PathBuf::new(),
            level_names: None,
            output_dir: PathBuf::from("out"),
            threads: None,
            measure: MeasureParams::default(),
            chains: ChainsSection::default(),
            seed: SeedSection::default(),
            diagnose: DiagnoseSection::default(),
            assignment: None,
        }
    }
}

impl RunManifest {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut m: Self =
            toml::from_str(text).map_err(|e| ConfigError::Other(format!("manifest: {e}")))?;
        if let Some(preset) = m.preset {
            if m.measure != MeasureParams::default() {
                return Err(ConfigError::Other(
                    "a preset replaces [measure]; give one or the other".into(),
                ));
            }
            m.apply_preset(preset);
        }
        Ok(m)
    }

    fn apply_preset(&mut self, preset: Preset) {
        match preset {
            Preset::County => {
                self.measure = MeasureParams::county_preset();
                self.seed.link_count.get_or_insert(COUNTY_PRESET_LINKS);
            }
        }
    }

    /// Reads a manifest and resolves its paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Other(format!("{}: {e}", path.display())))?;
        let mut m = Self::parse(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        m.resolve_paths(dir);
        Ok(m)
    }

    pub fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut self.graph);
        fix(&mut self.output_dir);
        self.chains.initial.iter_mut().for_each(fix);
        self.diagnose.tables.iter_mut().for_each(fix);
        if let Some(p) = self.assignment.as_mut() {
            fix(p);
        }
    }

    /// Checks parameters and that every referenced input file exists.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.measure.validate()?;
        self.chains.mix.validate()?;
        let bounds = self.chains.block_bounds()?;
        if self.chains.mix.hierarchy > 0.0 && bounds.is_none() {
            return Err(ConfigError::Other(
                "hierarchy moves need chains.block_bounds".into(),
            ));
        }
        if self.chains.initial.len() > self.chains.count {
            return Err(ConfigError::Other("more initial plans than chains".into()));
        }
        let needs_graph = self.mode != Mode::Diagnose;
        let mut inputs: Vec<&PathBuf> = Vec::new();
        if needs_graph {
            inputs.push(&self.graph);
        }
        inputs.extend(&self.chains.initial);
        inputs.extend(&self.diagnose.tables);
        inputs.extend(self.assignment.as_ref());
        for p in inputs {
            if !p.is_file() {
                return Err(ConfigError::Other(format!(
                    "missing input file {}",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    pub fn seed_config(&self) -> SeedConfig {
        SeedConfig {
            max_attempts: self.seed.max_attempts,
            extra_links: self.seed.extra_links,
            link_count: self.seed.link_count,
            exhaustive_degree: self.chains.exhaustive_degree,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::LinkScheme;

    #[test]
    fn parses_a_full_manifest() {
        let m = RunManifest::parse(
            r#"
            mode = "sample"
            graph = "g.json"
            level_names = ["county"]
            [measure]
            num_districts = 13
            pop_tol = 0.02
            max_split_top_nodes = 13
            link_scheme = "fixed-count-strict"
            [chains]
            count = 10
            steps = 800000
            observables = ["dem", "rep"]
            mix = { merge_split = 1.0, hierarchy = 0.5 }
            block_bounds = [2, 4]
            [diagnose]
            a = "dem"
            b = "rep"
            bin_width = 0.002
            "#,
        )
        .unwrap();
        assert_eq!(m.measure.num_districts, 13);
        assert_eq!(m.measure.link_scheme, LinkScheme::FixedCountStrict);
        assert_eq!(m.chains.count, 10);
        assert_eq!(
            m.chains.block_bounds().unwrap(),
            Some(BlockBounds::new(2, 4).unwrap())
        );
        assert_eq!(m.diagnose.stats.bin_width, 0.002);
        assert_eq!(m.chains.chain_config(3).unwrap().stream, 3);
    }

    #[test]
    fn spanning_links_with_gamma_fail_validation() {
        let m = RunManifest::parse(
            r#"
            mode = "diagnose"
            [measure]
            gamma = 0.5
            link_scheme = "fixed-count-strict"
            allow_spanning_links = true
            "#,
        )
        .unwrap();
        assert_eq!(
            m.validate().unwrap_err(),
            ConfigError::SpanningLinksNeedGammaZero
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunManifest::parse("colour = 1").is_err());
    }

    #[test]
    fn county_preset_fills_the_measure_and_link_count() {
        let m = RunManifest::parse("preset = \"county\"\ngraph = \"nc.json\"\n").unwrap();
        assert_eq!(m.measure, MeasureParams::county_preset());
        assert_eq!(m.seed_config().link_count, Some(13));
        assert!(RunManifest::parse("preset = \"county\"\n[measure]\nnum_districts = 3\n").is_err());
    }
}
