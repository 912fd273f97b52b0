use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{SampleManifest, SplitSuite};

/// Evaluation protocols with fixed per-category split sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// 67 categories, 80 train and 20 test images each, one split.
    Mit67,
    /// 397 categories, 50 train and 50 test images each, per split pair.
    Sun397,
    /// No count checks.
    Free,
}

impl Protocol {
    /// `(categories, train per category, test per category)`.
    pub fn counts(self) -> Option<(usize, usize, usize)> {
        match self {
            Protocol::Mit67 => Some((67, 80, 20)),
            Protocol::Sun397 => Some((397, 50, 50)),
            Protocol::Free => None,
        }
    }

    /// Number of split pairs the protocol defines.
    pub fn expected_pairs(self) -> Option<usize> {
        match self {
            Protocol::Mit67 => Some(1),
            Protocol::Sun397 => Some(10),
            Protocol::Free => None,
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Mit67 => "mit67",
            Protocol::Sun397 => "sun397",
            Protocol::Free => "free",
        })
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "mit67" => Ok(Protocol::Mit67),
            "sun397" => Ok(Protocol::Sun397),
            "free" => Ok(Protocol::Free),
            other => Err(format!("unknown protocol '{other}' (expected mit67, sun397 or free)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub pair: Option<String>,
    pub category: Option<String>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(pair) = &self.pair {
            write!(f, "[{pair}] ")?;
        }
        if let Some(cat) = &self.category {
            write!(f, "{cat}: ")?;
        }
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub protocol: Protocol,
    pub categories: usize,
    pub pairs: usize,
    /// Train plus test records summed over all pairs.
    pub total_slots: usize,
    pub violations: Vec<Violation>,
}

impl ProtocolReport {
    pub fn is_conforming(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a manifest against a protocol, collecting every violation.
pub fn validate_protocol(manifest: &SampleManifest, protocol: Protocol) -> ProtocolReport {
    let mut violations = Vec::new();
    let violation = |pair: Option<&str>, category: Option<&str>, message: String| Violation {
        pair: pair.map(str::to_string),
        category: category.map(str::to_string),
        message,
    };

    let suite = match SplitSuite::from_manifest(manifest) {
        Ok(suite) => suite,
        Err(e) => {
            violations.push(violation(None, None, e.to_string()));
            return ProtocolReport {
                protocol,
                categories: manifest.class_count(),
                pairs: 0,
                total_slots: 0,
                violations,
            };
        }
    };

    for (pair, path) in suite.overlaps(manifest) {
        violations.push(violation(
            Some(&pair),
            None,
            format!("{path} appears in both train and test"),
        ));
    }

    if let Some((categories, n_train, n_test)) = protocol.counts() {
        if manifest.class_count() != categories {
            violations.push(violation(
                None,
                None,
                format!(
                    "expected {categories} categories, found {}",
                    manifest.class_count()
                ),
            ));
        }
        if let Some(expected) = protocol.expected_pairs() {
            if suite.pairs.len() != expected {
                violations.push(violation(
                    None,
                    None,
                    format!("expected {expected} split pairs, found {}", suite.pairs.len()),
                ));
            }
        }
        let records = manifest.records();
        for pair in &suite.pairs {
            let count = |indices: &[usize]| {
                let mut counts = vec![0usize; manifest.class_count()];
                for &i in indices {
                    counts[manifest.label(&records[i])] += 1;
                }
                counts
            };
            let (train, test) = (count(&pair.train), count(&pair.test));
            for (k, name) in manifest.categories().iter().enumerate() {
                for (side, got, want) in [("train", train[k], n_train), ("test", test[k], n_test)] {
                    if got != want {
                        violations.push(violation(
                            Some(&pair.name),
                            Some(name),
                            format!("{got} {side} images, expected {want}"),
                        ));
                    }
                }
            }
        }
    }

    ProtocolReport {
        protocol,
        categories: manifest.class_count(),
        pairs: suite.pairs.len(),
        total_slots: suite.total_slots(),
        violations,
    }
}
