use proptest::prelude::*;
use scenefuse::dataset::{
    read_store, validate_protocol, write_store, ManifestRecord, Protocol, SampleManifest,
    SplitSuite, StoreReader, StoreWriter,
};

fn protocol_manifest(categories: usize, pairs: &[&str], train: usize, test: usize) -> SampleManifest {
    let mut records = Vec::new();
    for pair in pairs {
        for c in 0..categories {
            for (role, n) in [("train", train), ("test", test)] {
                for i in 0..n {
                    let split = if pair.is_empty() {
                        role.to_string()
                    } else {
                        format!("{pair}/{role}")
                    };
                    records.push(ManifestRecord {
                        path: format!("cat{c}/{role}_{i}.jpg"),
                        category: format!("cat{c}"),
                        split,
                        line: records.len() + 1,
                    });
                }
            }
        }
    }
    SampleManifest::from_records(records).unwrap()
}

#[test]
fn conforming_mit67_manifest() {
    let m = protocol_manifest(67, &[""], 80, 20);
    let report = validate_protocol(&m, Protocol::Mit67);
    assert!(report.is_conforming(), "{:?}", report.violations);
    assert_eq!(report.total_slots, 6700);
}

#[test]
fn sun397_suite_slot_count() {
    let pairs: Vec<String> = (1..=10).map(|i| format!("split{i:02}")).collect();
    let names: Vec<&str> = pairs.iter().map(String::as_str).collect();
    let m = protocol_manifest(397, &names, 50, 50);
    let report = validate_protocol(&m, Protocol::Sun397);
    assert!(report.is_conforming());
    assert_eq!(report.pairs, 10);
    assert_eq!(report.total_slots, 397_000);
}

#[test]
fn manifest_text_round_trips() {
    let text = "# header\nb.jpg\tkitchen\ttrain\n\na.jpg\tbedroom\ttest\n";
    let m = SampleManifest::parse(text).unwrap();
    assert_eq!(m.categories(), &["bedroom", "kitchen"]);
    let again = SampleManifest::parse(&m.to_tsv()).unwrap();
    assert_eq!(again.records().len(), 2);
    assert_eq!(again.categories(), m.categories());
}

#[test]
fn manifest_errors_carry_line_numbers() {
    let err = SampleManifest::parse("a\tx\ttrain\nb\tx\n").unwrap_err();
    assert!(err.to_string().contains("line 2"));
    let err = SampleManifest::parse("a\tx\ttrain\na\tx\ttrain\n").unwrap_err();
    assert!(err.to_string().contains("duplicate"));
    assert!(SampleManifest::parse("# nothing\n").is_err());
}

#[test]
fn suite_pairs_are_sorted_by_name() {
    let m = SampleManifest::parse("a\tx\ts2/train\nb\tx\ts2/test\nc\tx\ts1/train\nd\tx\ts1/test\n").unwrap();
    let suite = SplitSuite::from_manifest(&m).unwrap();
    let names: Vec<&str> = suite.pairs.iter().map(|p| p.name.as_str()).collect();
    assert_eq!(names, ["s1", "s2"]);
}

#[test]
fn store_file_is_little_endian_and_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.sfv");
    let rows: Vec<(u32, Vec<f64>)> = vec![(2, vec![0.5, -1.25]), (0, vec![3.0, 0.0])];
    write_store(&path, 2, "demo", rows.iter().map(|(l, v)| (*l, v.as_slice()))).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], b"SFV1");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
    assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
    let back = read_store(&path).unwrap();
    assert_eq!(back.labels, vec![2, 0]);
    assert_eq!(back.features.row(0).to_vec(), vec![0.5, -1.25]);
}

#[test]
fn unfinished_store_is_not_visible() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.sfv");
    let mut w = StoreWriter::create(&path, 3, "x").unwrap();
    w.append(1, &[1.0, 2.0, 3.0]).unwrap();
    drop(w);
    assert!(StoreReader::open(&path).is_err());
}

proptest! {
    #[test]
    fn store_round_trip_at_single_precision(
        rows in prop::collection::vec((0u32..10, prop::collection::vec(-1e6f64..1e6, 4)), 0..20)
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.sfv");
        write_store(&path, 4, "prop", rows.iter().map(|(l, v)| (*l, v.as_slice()))).unwrap();
        let back = read_store(&path).unwrap();
        prop_assert_eq!(back.header.count, rows.len());
        for (i, (label, values)) in rows.iter().enumerate() {
            prop_assert_eq!(back.labels[i], *label);
            for (j, v) in values.iter().enumerate() {
                prop_assert_eq!(back.features[[i, j]], *v as f32 as f64);
            }
        }
    }

    #[test]
    fn category_indices_ignore_record_order(seed in any::<u64>()) {
        use rand::{seq::SliceRandom, SeedableRng};
        let text = "a\tzoo\ttrain\nb\tair\ttrain\nc\tmall\ttest\nd\tzoo\ttest\n";
        let m = SampleManifest::parse(text).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let shuffled = SampleManifest::parse(&lines.join("\n")).unwrap();
        prop_assert_eq!(m.categories(), shuffled.categories());
        for r in shuffled.records() {
            prop_assert_eq!(shuffled.label(r), m.category_index(&r.category).unwrap());
        }
    }
}
