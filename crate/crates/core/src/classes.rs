//! The five veracity classes a source tweet is assigned to.

use serde::{Deserialize, Serialize};

/// Class names in index order.
pub const CLASS_NAMES: [&str; 5] = ["False", "Pants on Fire", "Half True", "Mostly False", "Mostly True"];

pub const NUM_CLASSES: usize = CLASS_NAMES.len();

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verdict {
    False,
    PantsOnFire,
    HalfTrue,
    MostlyFalse,
    MostlyTrue,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum VerdictError {
    #[error("verdict {0:?} is outside the five modeled classes")]
    OutOfModel(String),
    #[error("unknown verdict {0:?}")]
    Unknown(String),
}

impl Verdict {
    pub const ALL: [Verdict; 5] = [
        Verdict::False,
        Verdict::PantsOnFire,
        Verdict::HalfTrue,
        Verdict::MostlyFalse,
        Verdict::MostlyTrue,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        CLASS_NAMES[self.index()]
    }

    /// Case-insensitive; `-` and `_` count as spaces, so the rating slugs
    /// (`pants-fire`, `barely-true`) are accepted too. "True" is a real
    /// rating but not one of the modeled classes.
    pub fn parse(raw: &str) -> Result<Self, VerdictError> {
        let norm: String = raw
            .trim()
            .to_lowercase()
            .chars()
            .map(|c| if c == '-' || c == '_' { ' ' } else { c })
            .collect();
        let norm = norm.split_whitespace().collect::<Vec<_>>().join(" ");
        match norm.as_str() {
            "false" => Ok(Verdict::False),
            "pants on fire" | "pants fire" => Ok(Verdict::PantsOnFire),
            "half true" => Ok(Verdict::HalfTrue),
            "mostly false" | "barely true" => Ok(Verdict::MostlyFalse),
            "mostly true" => Ok(Verdict::MostlyTrue),
            "true" => Err(VerdictError::OutOfModel(raw.to_string())),
            _ => Err(VerdictError::Unknown(raw.to_string())),
        }
    }
}
