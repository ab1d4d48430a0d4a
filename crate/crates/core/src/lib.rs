//! Active-learning Isolation Forest.
//!
//! A standard Isolation Forest is grown once ([`iforest`]). An active-learning
//! session ([`alif`]) then asks an oracle for labels and overwrites the path
//! length of every leaf that contains a labeled point, one leaf per tree. No
//! tree is ever retrained, so each label costs one root-to-leaf walk per tree.
//!
//! [`dataio`] loads data and simulates the oracle, [`metrics`] scores rankings,
//! and [`bench`] runs the repeated active-learning protocol over datasets.

pub mod alif;
pub mod bench;
pub mod dataio;
mod error;
pub mod iforest;
pub mod metrics;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Ground-truth class of a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Anomaly,
}

impl Label {
    pub fn is_anomaly(self) -> bool {
        matches!(self, Label::Anomaly)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Anomaly => "anomaly",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    /// Accepts `0`/`1` (also `0.0`/`1.0`) and `normal`/`anomaly` in any case.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("normal") {
            return Ok(Label::Normal);
        }
        if t.eq_ignore_ascii_case("anomaly") {
            return Ok(Label::Anomaly);
        }
        match t.parse::<f64>() {
            Ok(0.0) => Ok(Label::Normal),
            Ok(1.0) => Ok(Label::Anomaly),
            _ => Err(Error::InvalidLabel(s.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_tokens() {
        assert_eq!("0".parse::<Label>().unwrap(), Label::Normal);
        assert_eq!("1".parse::<Label>().unwrap(), Label::Anomaly);
        assert_eq!("1.0".parse::<Label>().unwrap(), Label::Anomaly);
        assert_eq!("ANOMALY".parse::<Label>().unwrap(), Label::Anomaly);
        assert_eq!(" Normal ".parse::<Label>().unwrap(), Label::Normal);
        assert!("maybe".parse::<Label>().is_err());
        assert!("2".parse::<Label>().is_err());
    }
}
