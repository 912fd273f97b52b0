use std::collections::{BTreeMap, BTreeSet};

use super::{DatasetError, SampleManifest};

/// One train/test partition, as record indices into the manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPair {
    pub name: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Train/test pairs derived from a manifest's split tags.
///
/// Tags `train` and `test` form a single pair named `default`; tags of the
/// form `<name>/train` and `<name>/test` form one pair per `<name>` (e.g.
/// `split03/train`). Any other tag is ignored and listed in `unpaired`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSuite {
    pub pairs: Vec<SplitPair>,
    pub unpaired: Vec<String>,
}

impl SplitSuite {
    pub fn from_manifest(manifest: &SampleManifest) -> Result<Self, DatasetError> {
        let mut groups: BTreeMap<String, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
        let mut unpaired = BTreeSet::new();
        for (i, r) in manifest.records().iter().enumerate() {
            let (name, role) = match r.split.rsplit_once('/') {
                Some((name, role)) => (name.to_string(), role),
                None => ("default".to_string(), r.split.as_str()),
            };
            let entry = groups.entry(name);
            match role {
                "train" => entry.or_default().0.push(i),
                "test" => entry.or_default().1.push(i),
                _ => {
                    unpaired.insert(r.split.clone());
                }
            }
        }
        let pairs = groups
            .into_iter()
            .map(|(name, (train, test))| {
                if train.is_empty() || test.is_empty() {
                    let missing = if train.is_empty() { "train" } else { "test" };
                    return Err(DatasetError::Suite(format!(
                        "pair '{name}' has no {missing} records"
                    )));
                }
                Ok(SplitPair { name, train, test })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if pairs.is_empty() {
            return Err(DatasetError::Suite(
                "no train/test split tags found".into(),
            ));
        }
        Ok(Self {
            pairs,
            unpaired: unpaired.into_iter().collect(),
        })
    }

    /// `(pair, path)` for every path present on both sides of a pair.
    pub fn overlaps(&self, manifest: &SampleManifest) -> Vec<(String, String)> {
        let records = manifest.records();
        let mut out = Vec::new();
        for pair in &self.pairs {
            let train: BTreeSet<&str> = pair.train.iter().map(|&i| records[i].path.as_str()).collect();
            for &i in &pair.test {
                if train.contains(records[i].path.as_str()) {
                    out.push((pair.name.clone(), records[i].path.clone()));
                }
            }
        }
        out
    }

    /// Train plus test records over all pairs.
    pub fn total_slots(&self) -> usize {
        self.pairs.iter().map(|p| p.train.len() + p.test.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_and_named_pairs() {
        let m = SampleManifest::parse("a\tx\ttrain\nb\ty\ttest\n").unwrap();
        let s = SplitSuite::from_manifest(&m).unwrap();
        assert_eq!(s.pairs.len(), 1);
        assert_eq!(s.pairs[0].name, "default");

        let m = SampleManifest::parse(
            "a\tx\ts01/train\nb\tx\ts01/test\nb\tx\ts02/train\na\tx\ts02/test\nc\tx\tval\n",
        )
        .unwrap();
        let s = SplitSuite::from_manifest(&m).unwrap();
        assert_eq!(s.pairs.len(), 2);
        assert_eq!(s.pairs[1].train, vec![2]);
        assert_eq!(s.unpaired, vec!["val".to_string()]);
        assert_eq!(s.total_slots(), 4);
        assert!(s.overlaps(&m).is_empty());
    }

    #[test]
    fn overlap_and_missing_side() {
        let m = SampleManifest::parse("a\tx\ttrain\na\tx\ttest\n").unwrap();
        let s = SplitSuite::from_manifest(&m).unwrap();
        assert_eq!(s.overlaps(&m), vec![("default".into(), "a".into())]);

        let m = SampleManifest::parse("a\tx\ts1/train\n").unwrap();
        assert!(SplitSuite::from_manifest(&m).is_err());
        let m = SampleManifest::parse("a\tx\tval\n").unwrap();
        assert!(SplitSuite::from_manifest(&m).is_err());
    }
}
