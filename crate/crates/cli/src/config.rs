//! Fully resolved run description. Every run writes one of these next to its
//! report; feeding it back through `raretime run --config` repeats the run.

use std::path::{Path, PathBuf};

use raretime::targets::TargetFamily;
use raretime::{Error, ModelSpec, TailKind, TargetSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    pub analysis: Analysis,
    #[serde(default)]
    pub assert: bool,
    #[serde(default)]
    pub format: Format,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Largest Hamming-ball expansion allowed when resolving targets.
    pub expansion_cap: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Analysis {
    Tail {
        target: TargetSpec,
        horizon: usize,
    },
    Lambda {
        target: TargetSpec,
    },
    Verify {
        target: TargetSpec,
    },
    Limitlaw {
        target: TargetSpec,
        grid_points: usize,
        return_start: f64,
    },
    Mc {
        target: TargetSpec,
        tail: TailKind,
        samples: usize,
        seed: u64,
        /// Fixed censoring cap; adaptive when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        censor_cap: Option<u64>,
    },
    Sweep {
        family: TargetFamily,
        n_min: usize,
        n_max: usize,
        return_start: f64,
    },
    RarityEpsilon {
        family: TargetFamily,
        n_min: usize,
        n_max: usize,
    },
    RarityD0 {
        q: usize,
        /// Entropy in nats.
        h: f64,
    },
    RarityRate {
        family: TargetFamily,
        n_min: usize,
        n_max: usize,
        /// Alphabet size when no model is given.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        q: Option<usize>,
    },
    RarityKappa {
        q: usize,
        #[serde(rename = "D")]
        fraction: f64,
        n_min: usize,
        n_max: usize,
    },
}

impl Analysis {
    pub fn needs_model(&self) -> bool {
        !matches!(
            self,
            Analysis::RarityD0 { .. } | Analysis::RarityKappa { .. } | Analysis::RarityRate { .. }
        )
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, Error> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// Where the resolved config goes: `<out>.config.json`.
    pub fn config_path(&self) -> Option<PathBuf> {
        self.out.as_ref().map(|out| {
            let mut name = out.as_os_str().to_owned();
            name.push(".config.json");
            PathBuf::from(name)
        })
    }
}

/// `iid-uniform-<q>`, inline JSON, or a path to a JSON file.
pub fn parse_model(text: &str) -> Result<ModelSpec, Error> {
    let text = text.trim();
    if let Some(q) = text.strip_prefix("iid-uniform-") {
        let q: usize = q.parse().map_err(|_| Error::Config(format!("bad preset {text}")))?;
        if q == 0 {
            return Err(Error::EmptyAlphabet);
        }
        return Ok(ModelSpec::Iid { probs: vec![1.0 / q as f64; q] });
    }
    let json = if text.starts_with('{') {
        text.to_string()
    } else {
        std::fs::read_to_string(text).map_err(|e| Error::Config(format!("model {text}: {e}")))?
    };
    serde_json::from_str(&json).map_err(|e| Error::Config(format!("model: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let ok = r#"{"analysis":{"kind":"rarity_d0","q":4,"h":1.0},"expansion_cap":10}"#;
        assert!(RunConfig::from_json(ok).is_ok());
        let extra = r#"{"analysis":{"kind":"rarity_d0","q":4,"h":1.0},"expansion_cap":10,"x":1}"#;
        assert!(RunConfig::from_json(extra).is_err());
        let inner = r#"{"analysis":{"kind":"rarity_d0","q":4,"h":1.0,"y":2},"expansion_cap":10}"#;
        assert!(RunConfig::from_json(inner).is_err());
    }

    #[test]
    fn round_trip() {
        let cfg = RunConfig {
            model: Some(parse_model("iid-uniform-3").unwrap()),
            analysis: Analysis::Mc {
                target: TargetSpec::parse_shorthand("cyl:1,1+ham:0,0,0:0.34").unwrap(),
                tail: TailKind::Return,
                samples: 10,
                seed: 7,
                censor_cap: None,
            },
            assert: true,
            format: Format::Json,
            out: Some("a/b.csv".into()),
            expansion_cap: 1000,
        };
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        assert_eq!(cfg.config_path().unwrap(), PathBuf::from("a/b.csv.config.json"));
    }

    #[test]
    fn presets() {
        assert_eq!(parse_model("iid-uniform-2").unwrap(), ModelSpec::Iid { probs: vec![0.5, 0.5] });
        assert!(parse_model("iid-uniform-x").is_err());
        assert!(matches!(
            parse_model(r#"{"kind":"markov","transition":[[0.5,0.5],[1,0]]}"#).unwrap(),
            ModelSpec::Markov { .. }
        ));
    }
}
