use std::fs;
use std::io::Write;
use std::path::Path;

use fetqc::io::tables::{read_rating_file, write_rating_file};
use fetqc::io::{index_bids, load_nifti, save_mask, save_nifti, IqmRow, IqmTable, QcLabel, Rating};
use fetqc::{BrainMask, Error, Stack};
use ndarray::Array3;
use proptest::prelude::*;

/// A 4x4x3 float32 volume written byte by byte, independently of the
/// library's encoder.
fn handwritten_nifti() -> (Vec<u8>, Vec<f32>) {
    let mut h = vec![0u8; 352];
    h[0..4].copy_from_slice(&348i32.to_le_bytes());
    for (i, d) in [3i16, 4, 4, 3, 1, 1, 1, 1].iter().enumerate() {
        h[40 + 2 * i..42 + 2 * i].copy_from_slice(&d.to_le_bytes());
    }
    h[70..72].copy_from_slice(&16i16.to_le_bytes()); // float32
    h[72..74].copy_from_slice(&32i16.to_le_bytes());
    for (i, p) in [1.0f32, 1.0, 1.0, 3.0, 0.0, 0.0, 0.0, 0.0]
        .iter()
        .enumerate()
    {
        h[76 + 4 * i..80 + 4 * i].copy_from_slice(&p.to_le_bytes());
    }
    h[108..112].copy_from_slice(&352.0f32.to_le_bytes());
    h[344..348].copy_from_slice(b"n+1\0");
    let values: Vec<f32> = (0..48).map(|i| (i as f32) * 0.5 + 1.0).collect();
    for v in &values {
        h.extend_from_slice(&v.to_le_bytes());
    }
    (h, values)
}

fn check_handwritten(s: &Stack, values: &[f32]) {
    assert_eq!(s.shape(), [4, 4, 3]);
    assert_eq!(s.spacing, [1.0, 1.0, 3.0]);
    assert_eq!(s.through_plane_axis, 2);
    for z in 0..3 {
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(
                    s.voxels[[x, y, z]],
                    f64::from(values[x + 4 * y + 16 * z]),
                    "voxel {x},{y},{z}"
                );
            }
        }
    }
}

#[test]
fn reads_handwritten_float32_file() {
    let dir = tempfile::tempdir().unwrap();
    let (bytes, values) = handwritten_nifti();
    let plain = dir.path().join("vol.nii");
    fs::write(&plain, &bytes).unwrap();
    let s = load_nifti(&plain).unwrap();
    check_handwritten(&s, &values);

    let gz = dir.path().join("vol.nii.gz");
    let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
    enc.write_all(&bytes).unwrap();
    fs::write(&gz, enc.finish().unwrap()).unwrap();
    assert_eq!(load_nifti(&gz).unwrap().voxels, s.voxels);

    let mut bad = bytes.clone();
    bad[344..348].copy_from_slice(b"XXX\0");
    let p = dir.path().join("bad.nii");
    fs::write(&p, &bad).unwrap();
    assert!(matches!(load_nifti(&p), Err(Error::Parse { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn nifti_roundtrip(dims in (1usize..6, 1usize..6, 1usize..5), sp in (0.3f64..2.0, 0.3f64..2.0, 1.0f64..5.0),
                       seed in any::<u32>(), gz in any::<bool>()) {
        let n = dims.0 * dims.1 * dims.2;
        let vals: Vec<f64> = (0..n).map(|i| f64::from(((i as u32).wrapping_mul(2_654_435_761) ^ seed) % 1000) / 8.0).collect();
        let v = Array3::from_shape_vec(dims, vals).unwrap();
        let spacing = [sp.0 as f32 as f64, sp.1 as f32 as f64, sp.2 as f32 as f64];
        let s = Stack::from_voxels(v, spacing).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(if gz { "a.nii.gz" } else { "a.nii" });
        save_nifti(&s, &p).unwrap();
        let back = load_nifti(&p).unwrap();
        prop_assert_eq!(&back.voxels, &s.voxels);
        prop_assert_eq!(back.spacing, s.spacing);
        for r in 0..4 {
            for c in 0..4 {
                prop_assert!((back.affine[r][c] - s.affine[r][c]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn iqm_table_roundtrip(values in prop::collection::vec(prop::option::weighted(0.9, -1e6f64..1e6), 6)) {
        let table = IqmTable {
            feature_names: vec!["a".into(), "b".into(), "c".into()],
            rows: values
                .chunks(3)
                .enumerate()
                .map(|(i, v)| IqmRow {
                    subject_id: format!("sub-{i:02}"),
                    run_id: "run-1".into(),
                    values: v.to_vec(),
                    meta: Default::default(),
                })
                .collect(),
        };
        let back = IqmTable::from_tsv(&table.to_tsv(), &[]).unwrap();
        prop_assert_eq!(back, table);
    }
}

fn write_pair(root: &Path, masks: &Path, sub: &str, run: &str, with_mask: bool) {
    let s = Stack::from_voxels(Array3::from_elem((3, 3, 2), 1.0), [1.0, 1.0, 3.0]).unwrap();
    let stem = format!("{sub}_{run}");
    save_nifti(
        &s,
        &root
            .join(sub)
            .join("anat")
            .join(format!("{stem}_T2w.nii.gz")),
    )
    .unwrap();
    if with_mask {
        let m = BrainMask::full(&s);
        save_mask(
            &m,
            &masks
                .join(sub)
                .join("anat")
                .join(format!("{stem}_mask.nii.gz")),
        )
        .unwrap();
    }
}

#[test]
fn bids_index_is_sorted_deterministic_and_reports_unmatched() {
    let dir = tempfile::tempdir().unwrap();
    let (root, masks) = (dir.path().join("raw"), dir.path().join("masks"));
    for (sub, run) in [
        ("sub-02", "run-2"),
        ("sub-01", "run-2"),
        ("sub-02", "run-1"),
        ("sub-01", "run-1"),
    ] {
        write_pair(&root, &masks, sub, run, true);
    }
    write_pair(&root, &masks, "sub-03", "run-1", false);
    let pattern = fetqc::io::bids::DEFAULT_MASK_PATTERN;
    let a = index_bids(&root, &masks, pattern).unwrap();
    let keys: Vec<(&str, &str)> = a
        .entries
        .iter()
        .map(|e| (e.subject_id.as_str(), e.run_id.as_str()))
        .collect();
    assert_eq!(
        keys,
        [
            ("sub-01", "run-1"),
            ("sub-01", "run-2"),
            ("sub-02", "run-1"),
            ("sub-02", "run-2")
        ]
    );
    assert_eq!(a.unmatched.len(), 1);
    assert_eq!(a, index_bids(&root, &masks, pattern).unwrap());
    let (stack, _) = a.entries[0].load().unwrap();
    assert_eq!(stack.subject_id, "sub-01");
}

#[test]
fn rating_documents() {
    let r = Rating::from_json(
        &serde_json::json!({"subject_id": "sub-01", "run_id": "run-1", "quality": 3.5}),
    )
    .unwrap();
    assert_eq!(r.quality, 3.5);
    assert_eq!(r.label(), QcLabel::Include);
    assert_eq!(QcLabel::from_quality(1.0), QcLabel::Exclude);
    let out =
        Rating::from_json(&serde_json::json!({"subject_id": "s", "run_id": "r", "quality": 4.5}));
    assert!(matches!(out, Err(Error::Value { .. })));

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("sub-01_run-1_rating.json");
    write_rating_file(&p, &r).unwrap();
    assert_eq!(read_rating_file(&p).unwrap(), vec![r]);
}
