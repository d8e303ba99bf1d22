//! Labels shared across the verification stages.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Three-way verdict produced by the verifier, the jury and the logic aggregator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    True,
    False,
    Uncertain,
}

impl Verdict {
    pub const ALL: [Verdict; 3] = [Verdict::True, Verdict::False, Verdict::Uncertain];

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::True => "true",
            Verdict::False => "false",
            Verdict::Uncertain => "uncertain",
        }
    }

    /// Lenient parse of model output. Accepts the synonyms models tend to emit
    /// ("supported", "refuted", "unknown", ...).
    pub fn parse_lenient(raw: &str) -> Option<Verdict> {
        let norm: String = raw
            .trim()
            .to_ascii_lowercase()
            .chars()
            .map(|c| if c == '_' || c == '-' { ' ' } else { c })
            .collect();
        match norm.trim() {
            "true" | "supported" | "supports" | "support" | "correct" | "mostly true" => {
                Some(Verdict::True)
            }
            "false" | "contradicted" | "contradicts" | "refuted" | "refutes" | "incorrect" => {
                Some(Verdict::False)
            }
            "uncertain" | "unknown" | "insufficient" | "not enough info" | "unverifiable"
            | "undetermined" => Some(Verdict::Uncertain),
            _ => None,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "true" => Ok(Verdict::True),
            "false" => Ok(Verdict::False),
            "uncertain" => Ok(Verdict::Uncertain),
            other => Err(format!("unknown verdict `{other}`")),
        }
    }
}

/// Pipeline variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Baseline,
    Research,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Research => "research",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "research" => Ok(Mode::Research),
            other => Err(format!("unknown mode `{other}` (expected baseline|research)")),
        }
    }
}
