use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norm::{NormKind, NormOptions};

/// One categorical input field.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub name: String,
    pub vocab_size: usize,
    pub embedding_dim: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Element-wise product of domain and shared weights in every layer,
    /// scored as `sigmoid(s_star + s_aux)`.
    Star,
    /// Independent domain, shared and auxiliary towers combined by a fusion strategy.
    StarPlus,
    /// Single shared tower without any domain signal; a comparison baseline.
    SharedOnly,
}

impl Architecture {
    pub fn label(self) -> &'static str {
        match self {
            Architecture::Star => "Star",
            Architecture::StarPlus => "Star+",
            Architecture::SharedOnly => "Shared",
        }
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "star" => Ok(Architecture::Star),
            "star_plus" | "starplus" | "star+" => Ok(Architecture::StarPlus),
            "shared_only" | "shared" => Ok(Architecture::SharedOnly),
            _ => Err(Error::Config(format!(
                "unknown architecture `{s}` (expected star, star_plus or shared_only)"
            ))),
        }
    }
}

/// How Star+ turns the three tower outputs into one logit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FusionKind {
    /// Fixed weighted sum of per-tower linear heads.
    Add { c_d: f64, c_s: f64, c_a: f64 },
    /// Per-domain learnable weight: `c_d = σ(w_d)`, shared and auxiliary split the rest.
    AdaptiveAdd,
    /// Domain-conditioned softmax gate over the three tower vectors.
    Gate { gate_hidden: usize },
    /// Fully-connected head on the concatenated tower vectors.
    Concat { head_widths: Vec<usize> },
}

impl FusionKind {
    pub fn add() -> Self {
        FusionKind::Add {
            c_d: 1.0,
            c_s: 1.0,
            c_a: 1.0,
        }
    }

    pub fn gate() -> Self {
        FusionKind::Gate { gate_hidden: 8 }
    }

    pub fn concat() -> Self {
        FusionKind::Concat { head_widths: vec![16] }
    }

    /// Default-parameterized instance of each strategy.
    pub fn all() -> [FusionKind; 4] {
        [FusionKind::add(), FusionKind::AdaptiveAdd, FusionKind::gate(), FusionKind::concat()]
    }

    pub fn label(&self) -> &'static str {
        match self {
            FusionKind::Add { .. } => "Add",
            FusionKind::AdaptiveAdd => "Adaptive Add",
            FusionKind::Gate { .. } => "Gate",
            FusionKind::Concat { .. } => "Concat",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FusionKind::Add { c_d, c_s, c_a } => {
                if ![c_d, c_s, c_a].iter().all(|c| c.is_finite()) {
                    return Err(Error::Config("add fusion constants must be finite".into()));
                }
            }
            FusionKind::AdaptiveAdd => {}
            FusionKind::Gate { gate_hidden } => {
                if *gate_hidden == 0 {
                    return Err(Error::Config("gate_hidden must be positive".into()));
                }
            }
            FusionKind::Concat { head_widths } => {
                if head_widths.contains(&0) {
                    return Err(Error::Config("concat head widths must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for FusionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for FusionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "add" => Ok(FusionKind::add()),
            "adaptive_add" | "adaptive" => Ok(FusionKind::AdaptiveAdd),
            "gate" => Ok(FusionKind::gate()),
            "concat" | "concatenation" => Ok(FusionKind::concat()),
            _ => Err(Error::Config(format!(
                "unknown fusion `{s}` (expected add, adaptive_add, gate or concat)"
            ))),
        }
    }
}

impl FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(NormKind::None),
            "batch" => Ok(NormKind::Batch),
            "layer" => Ok(NormKind::Layer),
            "partition" => Ok(NormKind::Partition),
            _ => Err(Error::Config(format!(
                "unknown normalization `{s}` (expected none, batch, layer or partition)"
            ))),
        }
    }
}

/// Full architecture description. Serialized verbatim into checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub num_domains: usize,
    pub fields: Vec<FieldSpec>,
    pub architecture: Architecture,
    pub tower_widths: Vec<usize>,
    /// Width `k` of Star+/shared tower outputs. Star towers always end in one unit.
    pub tower_output_dim: usize,
    /// Width of the domain-indicator embedding fed to the auxiliary tower.
    pub domain_embedding_dim: usize,
    pub norm: NormKind,
    #[serde(default)]
    pub norm_options: NormOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fusion: Option<FusionKind>,
    pub seed: u64,
}

impl ModelConfig {
    /// Star+ with adaptive-add fusion and layer norm, default tower sizes.
    pub fn star_plus(num_domains: usize, fields: Vec<FieldSpec>) -> Self {
        Self {
            num_domains,
            fields,
            architecture: Architecture::StarPlus,
            tower_widths: vec![64, 32],
            tower_output_dim: 16,
            domain_embedding_dim: 8,
            norm: NormKind::Layer,
            norm_options: NormOptions::default(),
            fusion: Some(FusionKind::AdaptiveAdd),
            seed: 0,
        }
    }

    /// Star with partition norm, default tower sizes.
    pub fn star(num_domains: usize, fields: Vec<FieldSpec>) -> Self {
        Self {
            architecture: Architecture::Star,
            norm: NormKind::Partition,
            fusion: None,
            ..Self::star_plus(num_domains, fields)
        }
    }

    pub fn input_dim(&self) -> usize {
        self.fields.iter().map(|f| f.embedding_dim).sum()
    }

    /// Output width of the domain/shared/auxiliary towers.
    pub fn effective_tower_output(&self) -> usize {
        match self.architecture {
            Architecture::Star => 1,
            _ => self.tower_output_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_domains < 2 {
            return Err(Error::Config(format!(
                "a multi-domain model needs at least 2 domains, got {}",
                self.num_domains
            )));
        }
        if self.fields.is_empty() {
            return Err(Error::Config("at least one feature field is required".into()));
        }
        for f in &self.fields {
            if f.vocab_size == 0 || f.embedding_dim == 0 {
                return Err(Error::Config(format!(
                    "field `{}` needs positive vocab_size and embedding_dim",
                    f.name
                )));
            }
        }
        let mut names: Vec<&str> = self.fields.iter().map(|f| f.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("field names must be unique".into()));
        }
        if self.tower_widths.contains(&0) {
            return Err(Error::Config("tower widths must be positive".into()));
        }
        if self.tower_output_dim == 0 {
            return Err(Error::Config("tower_output_dim must be at least 1".into()));
        }
        if self.domain_embedding_dim == 0 {
            return Err(Error::Config("domain_embedding_dim must be at least 1".into()));
        }
        self.norm_options.validate()?;
        match (self.architecture, &self.fusion) {
            (Architecture::Star, Some(f)) => Err(Error::Config(format!(
                "the star architecture has a fixed sigmoid(s_star + s_aux) head; fusion `{}` is not allowed",
                f.label()
            ))),
            (Architecture::SharedOnly, Some(f)) => Err(Error::Config(format!(
                "the shared_only baseline has a single head; fusion `{}` is not allowed",
                f.label()
            ))),
            (Architecture::StarPlus, None) => {
                Err(Error::Config("star_plus requires a fusion strategy".into()))
            }
            (Architecture::StarPlus, Some(f)) => f.validate(),
            _ => Ok(()),
        }
    }

    /// Short human label, e.g. `Star+ / Gate / LayerNorm`.
    pub fn label(&self) -> String {
        match &self.fusion {
            Some(f) => format!("{} / {} / {}", self.architecture.label(), f.label(), self.norm.label()),
            None => format!("{} / {}", self.architecture.label(), self.norm.label()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fields() -> Vec<FieldSpec> {
        vec![FieldSpec {
            name: "a".into(),
            vocab_size: 3,
            embedding_dim: 2,
        }]
    }

    #[test]
    fn star_rejects_explicit_fusion() {
        let mut cfg = ModelConfig::star(3, fields());
        assert!(cfg.validate().is_ok());
        cfg.fusion = Some(FusionKind::gate());
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("Gate"), "{err}");
    }

    #[test]
    fn star_plus_requires_fusion() {
        let mut cfg = ModelConfig::star_plus(3, fields());
        cfg.fusion = None;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn single_domain_is_rejected() {
        assert!(ModelConfig::star_plus(1, fields()).validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = ModelConfig::star_plus(6, fields());
        cfg.fusion = Some(FusionKind::Concat { head_widths: vec![8, 4] });
        let text = toml::to_string(&cfg).unwrap();
        let back: ModelConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn parse_names() {
        assert_eq!("adaptive-add".parse::<FusionKind>().unwrap(), FusionKind::AdaptiveAdd);
        assert_eq!("Star+".parse::<Architecture>().unwrap(), Architecture::StarPlus);
        assert_eq!("partition".parse::<NormKind>().unwrap(), NormKind::Partition);
        assert!("mean".parse::<NormKind>().is_err());
    }
}
