use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Binary classification target. The discriminants double as the one-byte
/// class code on the wire and as the CNN output index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnoreClass {
    NonSnoring = 0,
    Snoring = 1,
}

impl SnoreClass {
    pub const ALL: [SnoreClass; 2] = [SnoreClass::NonSnoring, SnoreClass::Snoring];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(SnoreClass::NonSnoring),
            1 => Some(SnoreClass::Snoring),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_snoring(self) -> bool {
        self == SnoreClass::Snoring
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SnoreClass::NonSnoring => "non_snoring",
            SnoreClass::Snoring => "snoring",
        }
    }
}

impl fmt::Display for SnoreClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown class label `{0}` (expected `snoring` or `non_snoring`)")]
pub struct ParseClassError(pub String);

impl FromStr for SnoreClass {
    type Err = ParseClassError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "snoring" => Ok(SnoreClass::Snoring),
            "non_snoring" => Ok(SnoreClass::NonSnoring),
            other => Err(ParseClassError(other.to_string())),
        }
    }
}
