use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use super::DatasetError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    pub path: String,
    pub category: String,
    pub split: String,
    /// 1-based line in the source file.
    pub line: usize,
}

/// Parsed `path<TAB>category<TAB>split` records.
///
/// Categories are indexed in lexicographic order, so the index depends only
/// on the set of category names, never on record order.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleManifest {
    records: Vec<ManifestRecord>,
    categories: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl SampleManifest {
    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let mut records = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split('\t').collect();
            if fields.len() != 3 {
                return Err(DatasetError::Parse {
                    line,
                    message: format!(
                        "expected 3 tab-separated fields (path, category, split), found {}",
                        fields.len()
                    ),
                });
            }
            if let Some(pos) = fields.iter().position(|f| f.trim().is_empty()) {
                let name = ["path", "category", "split"][pos];
                return Err(DatasetError::Parse {
                    line,
                    message: format!("empty {name} field"),
                });
            }
            records.push(ManifestRecord {
                path: fields[0].trim().to_string(),
                category: fields[1].trim().to_string(),
                split: fields[2].trim().to_string(),
                line,
            });
        }
        Self::from_records(records)
    }

    pub fn from_records(records: Vec<ManifestRecord>) -> Result<Self, DatasetError> {
        if records.is_empty() {
            return Err(DatasetError::EmptyManifest);
        }
        let mut seen: HashMap<(&str, &str), usize> = HashMap::new();
        let mut category_of: HashMap<&str, &str> = HashMap::new();
        for r in &records {
            if let Some(&first) = seen.get(&(r.path.as_str(), r.split.as_str())) {
                return Err(DatasetError::Duplicate {
                    line: r.line,
                    first,
                    path: r.path.clone(),
                    split: r.split.clone(),
                });
            }
            seen.insert((&r.path, &r.split), r.line);
            match category_of.get(r.path.as_str()) {
                Some(&cat) if cat != r.category => {
                    return Err(DatasetError::ConflictingCategory {
                        line: r.line,
                        path: r.path.clone(),
                        first: cat.to_string(),
                        second: r.category.clone(),
                    })
                }
                _ => {
                    category_of.insert(&r.path, &r.category);
                }
            }
        }

        let categories: Vec<String> = records
            .iter()
            .map(|r| r.category.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index = categories
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        Ok(Self {
            records,
            categories,
            index,
        })
    }

    pub fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Sorted category names; position is the class index.
    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn class_count(&self) -> usize {
        self.categories.len()
    }

    pub fn category_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn label(&self, record: &ManifestRecord) -> usize {
        self.index[&record.category]
    }

    pub fn split_tags(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.split.as_str()).collect()
    }

    pub fn records_in<'a>(&'a self, split: &'a str) -> impl Iterator<Item = &'a ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// Distinct image paths with their labels, in order of first appearance.
    pub fn unique_images(&self) -> Vec<(&str, usize)> {
        let mut seen = BTreeSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.path.as_str()))
            .map(|r| (r.path.as_str(), self.label(r)))
            .collect()
    }

    /// Serializes back to manifest text (without comments).
    pub fn to_tsv(&self) -> String {
        self.records
            .iter()
            .map(|r| format!("{}\t{}\t{}\n", r.path, r.category, r.split))
            .collect()
    }
}

/// Reads and parses a manifest file.
pub fn parse_manifest(path: impl AsRef<Path>) -> Result<SampleManifest, DatasetError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(DatasetError::io(path))?;
    SampleManifest::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_categories_sorted() {
        let m = SampleManifest::parse("b.jpg\tzoo\ttrain\na.jpg\tairport\ttest\n").unwrap();
        assert_eq!(m.class_count(), 2);
        assert_eq!(m.category_index("airport"), Some(0));
        assert_eq!(m.category_index("zoo"), Some(1));
        assert_eq!(m.label(&m.records()[0]), 1);
    }

    #[test]
    fn two_field_line_cites_line_number() {
        let err = SampleManifest::parse("# header\na.jpg\tx\ttrain\nb.jpg\ty\n").unwrap_err();
        match err {
            DatasetError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err_text("a\t\ttrain").contains("empty category"));
    }

    fn err_text(text: &str) -> String {
        SampleManifest::parse(text).unwrap_err().to_string()
    }

    #[test]
    fn duplicates_and_empty() {
        let err = SampleManifest::parse("a\tx\ttrain\nb\tx\ttrain\na\tx\ttrain\n").unwrap_err();
        assert!(matches!(err, DatasetError::Duplicate { line: 3, first: 1, .. }));
        // the same path may appear under different splits
        assert!(SampleManifest::parse("a\tx\ts1/train\na\tx\ts2/test\n").is_ok());
        assert!(matches!(
            SampleManifest::parse("# nothing\n\n"),
            Err(DatasetError::EmptyManifest)
        ));
        assert!(matches!(
            SampleManifest::parse("a\tx\ts1/train\na\ty\ts2/test\n"),
            Err(DatasetError::ConflictingCategory { line: 2, .. })
        ));
    }

    #[test]
    fn unique_images_in_first_order() {
        let m = SampleManifest::parse("c\tq\ts1/train\na\tp\ts1/test\nc\tq\ts2/test\n").unwrap();
        assert_eq!(m.unique_images(), vec![("c", 1), ("a", 0)]);
        assert_eq!(m.split_tags().len(), 3);
        assert_eq!(SampleManifest::parse(&m.to_tsv()).unwrap().records().len(), 3);
    }

    #[test]
    fn crlf_and_spaces_in_paths() {
        let m = SampleManifest::parse("my dir/a b.jpg\tx\ttrain\r\n").unwrap();
        assert_eq!(m.records()[0].path, "my dir/a b.jpg");
        assert_eq!(m.records()[0].split, "train");
    }
}
