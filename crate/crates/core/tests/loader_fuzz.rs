use std::fs;

use proptest::prelude::*;

use egcn_core::dataset::{load_dataset, synthesize_hidden_metric_dataset, validate_dataset, write_dataset};
use egcn_core::Error;

#[derive(Clone, Debug)]
enum Mutation {
    Overwrite(usize, u8),
    Delete(usize, usize),
    Insert(usize, Vec<u8>),
    Truncate(usize),
}

fn mutation() -> impl Strategy<Value = Mutation> {
    let junk = prop::sample::select(b"0123456789-.,:[]{}\"enulltrue \n".to_vec());
    prop_oneof![
        (any::<usize>(), junk.clone()).prop_map(|(i, b)| Mutation::Overwrite(i, b)),
        (any::<usize>(), 1usize..8).prop_map(|(i, n)| Mutation::Delete(i, n)),
        (any::<usize>(), prop::collection::vec(junk, 1..6)).prop_map(|(i, v)| Mutation::Insert(i, v)),
        any::<usize>().prop_map(Mutation::Truncate),
    ]
}

fn apply(bytes: &mut Vec<u8>, m: &Mutation) {
    if bytes.is_empty() {
        return;
    }
    let at = |i: usize| i % bytes.len();
    match m {
        Mutation::Overwrite(i, b) => {
            let i = at(*i);
            bytes[i] = *b;
        }
        Mutation::Delete(i, n) => {
            let i = at(*i);
            let end = (i + n).min(bytes.len());
            bytes.drain(i..end);
        }
        Mutation::Insert(i, v) => {
            let i = at(*i);
            bytes.splice(i..i, v.iter().copied());
        }
        Mutation::Truncate(i) => {
            let i = at(*i);
            bytes.truncate(i);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn mutated_files_error_cleanly(mutations in prop::collection::vec(mutation(), 1..4), target_manifest: bool) {
        let ds = synthesize_hidden_metric_dataset(4, (1, 4), 2, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_dataset(dir.path(), &ds).unwrap();
        let target = if target_manifest { manifest.clone() } else { dir.path().join("samples.jsonl") };
        let mut bytes = fs::read(&target).unwrap();
        for m in &mutations {
            apply(&mut bytes, m);
        }
        fs::write(&target, &bytes).unwrap();
        let before = fs::read(&target).unwrap();
        match load_dataset(&manifest) {
            Ok(loaded) => prop_assert_eq!(loaded.graphs.len(), loaded.manifest.num_samples),
            Err(e) => prop_assert!(matches!(e, Error::Data { .. } | Error::Io { .. }), "{e:?}"),
        }
        if let Ok((_, _, report)) = validate_dataset(&manifest) {
            let located = report.errors.iter().all(|e| matches!(e, Error::Data { location: Some(_), .. }));
            prop_assert!(located);
        }
        prop_assert_eq!(fs::read(&target).unwrap(), before);
    }
}
