//! Vocabulary shared by every layer: the three ego states and the two
//! experimental conditions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the three Transactional Analysis ego states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EgoState {
    Parent,
    Adult,
    Child,
}

impl EgoState {
    pub const ALL: [EgoState; 3] = [EgoState::Parent, EgoState::Adult, EgoState::Child];

    pub fn as_str(self) -> &'static str {
        match self {
            EgoState::Parent => "parent",
            EgoState::Adult => "adult",
            EgoState::Child => "child",
        }
    }

    /// Single-letter tag used in console logs and charts (P / A / C).
    pub fn tag(self) -> char {
        match self {
            EgoState::Parent => 'P',
            EgoState::Adult => 'A',
            EgoState::Child => 'C',
        }
    }
}

impl fmt::Display for EgoState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown ego state label {0:?} (expected parent, adult or child)")]
pub struct UnknownEgoState(pub String);

impl FromStr for EgoState {
    type Err = UnknownEgoState;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "parent" => Ok(EgoState::Parent),
            "adult" => Ok(EgoState::Adult),
            "child" => Ok(EgoState::Child),
            _ => Err(UnknownEgoState(s.to_string())),
        }
    }
}

/// Ablation condition: whether ego-state sub-agents may query their memory banks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    MemoryOn,
    MemoryOff,
}

impl Condition {
    pub const ALL: [Condition; 2] = [Condition::MemoryOn, Condition::MemoryOff];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::MemoryOn => "memory_on",
            Condition::MemoryOff => "memory_off",
        }
    }

    pub fn memory_enabled(self) -> bool {
        matches!(self, Condition::MemoryOn)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown condition {0:?} (expected memory_on or memory_off)")]
pub struct UnknownCondition(pub String);

impl FromStr for Condition {
    type Err = UnknownCondition;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "memory_on" | "on" => Ok(Condition::MemoryOn),
            "memory_off" | "off" => Ok(Condition::MemoryOff),
            _ => Err(UnknownCondition(s.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        for s in EgoState::ALL {
            assert_eq!(s.as_str().parse::<EgoState>().unwrap(), s);
        }
        assert_eq!("Parent".parse::<EgoState>().unwrap(), EgoState::Parent);
        assert!("nurturing".parse::<EgoState>().is_err());
        assert_eq!("memory_off".parse::<Condition>().unwrap(), Condition::MemoryOff);
    }

    #[test]
    fn serde_labels() {
        assert_eq!(serde_json::to_string(&EgoState::Child).unwrap(), "\"child\"");
        assert_eq!(serde_json::to_string(&Condition::MemoryOn).unwrap(), "\"memory_on\"");
    }
}
