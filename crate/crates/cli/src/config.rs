//! Run configuration: profile defaults, TOML file, `--set` overrides and
//! dedicated flags, applied in that order.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use soilmap::data::SynthConfig;
use soilmap::model::{Aggregation, AttentionMode, EncoderConfig, ModelConfig};
use soilmap::mosaic::MosaicConfig;
use soilmap::provenance::{config_hash, Provenance};
use soilmap::rf::{RFConfig, SearchSpace};
use soilmap::splits::SplitScheme;
use soilmap::training::TrainConfig;
use soilmap::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub out: PathBuf,
    /// Inputs default to the files `synth` writes under `out`.
    pub stack: Option<PathBuf>,
    pub observations: Option<PathBuf>,
    pub partition: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    /// `random` or `sh-<km>km` (e.g. `sh-1km`, `sh-10km`).
    pub scheme: String,
}

/// Shared encoder layout; input channels come from the stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub tile_size: usize,
    pub base_dim: usize,
    pub window: usize,
    pub depths: [usize; 4],
    pub heads: [usize; 4],
    pub mlp_ratio: usize,
    pub attention: AttentionMode,
    pub embed_dim: usize,
    pub pe_frequencies: usize,
    pub aggregation: Aggregation,
}

impl ModelSection {
    fn from_config(m: &ModelConfig) -> Self {
        let e = &m.satellite;
        ModelSection {
            tile_size: e.tile_size,
            base_dim: e.base_dim,
            window: e.window,
            depths: e.depths,
            heads: e.heads,
            mlp_ratio: e.mlp_ratio,
            attention: e.attention,
            embed_dim: m.embed_dim,
            pe_frequencies: m.pe_frequencies,
            aggregation: m.aggregation,
        }
    }

    pub fn build(&self, n_sat: usize, n_cov: usize, seed: u64) -> ModelConfig {
        let enc = |in_channels| EncoderConfig {
            in_channels,
            base_dim: self.base_dim,
            window: self.window,
            depths: self.depths,
            heads: self.heads,
            tile_size: self.tile_size,
            mlp_ratio: self.mlp_ratio,
            attention: self.attention,
        };
        ModelConfig {
            satellite: enc(n_sat),
            covariate: enc(n_cov),
            embed_dim: self.embed_dim,
            pe_frequencies: self.pe_frequencies,
            aggregation: self.aggregation,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfSearchSection {
    /// 0 disables the search and trains `[rf]` as configured.
    pub iterations: usize,
    pub space: SearchSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    /// NSP probability threshold for hard labels.
    pub threshold: f64,
    pub n_bins: usize,
    /// Zone names left out of the presence-percentage tables.
    pub excluded_zones: Vec<String>,
    pub svg: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    /// Drives splitting, initialization, training and forests; the synthetic
    /// world has its own `synth.seed`.
    pub seed: u64,
    pub paths: Paths,
    pub synth: SynthConfig,
    pub split: SplitSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub rf: RFConfig,
    pub rf_search: RfSearchSection,
    pub mosaic: MosaicConfig,
    pub evaluate: EvaluateSection,
}

impl RunConfig {
    pub fn profile(profile: Profile) -> Self {
        let (model, train) = match profile {
            Profile::Desk => (ModelConfig::desk(1, 1), TrainConfig::desk()),
            Profile::Paper => (ModelConfig::paper(1, 1), TrainConfig::paper()),
        };
        RunConfig {
            profile,
            seed: 0,
            paths: Paths {
                out: PathBuf::from("soilmap-out"),
                stack: None,
                observations: None,
                partition: None,
            },
            synth: SynthConfig::default(),
            split: SplitSection { scheme: "sh-1km".into() },
            model: ModelSection::from_config(&model),
            train,
            rf: RFConfig::default(),
            rf_search: RfSearchSection {
                iterations: 0,
                space: SearchSpace::default(),
            },
            mosaic: MosaicConfig::default(),
            evaluate: EvaluateSection {
                threshold: 0.5,
                n_bins: 10,
                excluded_zones: Vec::new(),
                svg: true,
            },
        }
    }

    /// Profile defaults overlaid with `file`, then `key.path=value`
    /// assignments. Unknown keys are rejected.
    pub fn resolve(profile: Option<Profile>, file: Option<&Path>, sets: &[String]) -> Result<Self> {
        let user: toml::Table = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                text.parse().map_err(|e| Error::Format(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        let from_file = match user.get("profile") {
            Some(v) => Some(Profile::deserialize(v.clone()).map_err(|e| Error::Format(format!("profile: {e}")))?),
            None => None,
        };
        let profile = profile.or(from_file).unwrap_or(Profile::Desk);
        let mut merged = toml::Table::try_from(Self::profile(profile)).map_err(|e| Error::Format(e.to_string()))?;
        merge(&mut merged, user);
        merged.insert(
            "profile".into(),
            toml::Value::try_from(profile).map_err(|e| Error::Format(e.to_string()))?,
        );
        for s in sets {
            let (key, raw) = s
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("--set expects key=value, got `{s}`")))?;
            set_path(&mut merged, key.trim(), parse_value(raw.trim()))?;
        }
        let cfg: RunConfig = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidArgument(format!("config: {}", e.message())))?;
        Ok(cfg)
    }

    /// Copies the master seed into every stage and checks all sections.
    pub fn finish(mut self) -> Result<Self> {
        self.train.seed = self.seed;
        self.rf.seed = self.seed;
        self.train.validate()?;
        self.rf.validate()?;
        self.scheme()?;
        self.model.build(1, 1, self.seed).validate()?;
        if !(0.0..=1.0).contains(&self.evaluate.threshold) || self.evaluate.n_bins == 0 {
            return Err(Error::InvalidArgument(
                "evaluate.threshold must lie in [0, 1] and n_bins be positive".into(),
            ));
        }
        Ok(self)
    }

    pub fn scheme(&self) -> Result<SplitScheme> {
        SplitScheme::parse(&self.split.scheme)
    }

    pub fn hash(&self) -> Result<String> {
        config_hash(self)
    }

    pub fn provenance(&self) -> Result<Provenance> {
        Ok(Provenance::new(self.hash()?, self.seed))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts
        .pop()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::InvalidArgument(format!("empty key `{key}`")))?;
    let mut t = table;
    for p in parts {
        t = match t.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new())) {
            toml::Value::Table(inner) => inner,
            _ => return Err(Error::InvalidArgument(format!("`{p}` in `{key}` is not a section"))),
        };
    }
    t.insert(last.to_string(), value);
    Ok(())
}

/// A TOML literal when it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
