use lost_core::tensorio::{
    crop_descriptors_from_bytes, crop_descriptors_to_bytes, read_attention_stack,
    read_crop_descriptors, read_feature_map, read_manifest, write_attention_stack,
    write_crop_descriptors, write_feature_map, write_manifest,
};
use lost_core::{AttentionStack, CropDescriptor, Error, FeatureKind, FeatureMap, ImageManifest};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f32> {
    prop_oneof![
        -1e6f32..1e6f32,
        Just(0.0f32),
        Just(-0.0f32),
        Just(f32::MIN_POSITIVE),
        Just(f32::MAX),
        Just(f32::MIN),
    ]
}

fn kind() -> impl Strategy<Value = FeatureKind> {
    prop_oneof![
        Just(FeatureKind::Key),
        Just(FeatureKind::Query),
        Just(FeatureKind::Value)
    ]
}

fn feature_map() -> impl Strategy<Value = FeatureMap> {
    (1usize..5, 1usize..5, 1usize..6, kind()).prop_flat_map(|(h, w, d, k)| {
        prop::collection::vec(finite(), h * w * d)
            .prop_map(move |data| FeatureMap::new(h, w, d, k, data).unwrap())
    })
}

fn attention() -> impl Strategy<Value = AttentionStack> {
    (1usize..4, 1usize..5, 1usize..5).prop_flat_map(|(heads, h, w)| {
        prop::collection::vec(finite(), heads * h * w)
            .prop_map(move |data| AttentionStack::new(heads, h, w, data).unwrap())
    })
}

fn descriptors() -> impl Strategy<Value = Vec<CropDescriptor>> {
    (0usize..5, 1usize..5).prop_flat_map(|(count, dim)| {
        prop::collection::vec(
            ("[a-z0-9_]{0,8}", prop::collection::vec(finite(), dim))
                .prop_map(|(image_id, vector)| CropDescriptor { image_id, vector }),
            count,
        )
    })
}

fn bits_equal(a: &[f32], b: &[f32]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

proptest! {
    #[test]
    fn feature_map_round_trip(fm in feature_map()) {
        let bytes = fm.to_bytes().unwrap();
        let back = FeatureMap::from_bytes(&bytes).unwrap();
        prop_assert!(bits_equal(back.data(), fm.data()));
        prop_assert_eq!((back.grid_h(), back.grid_w(), back.dim(), back.kind()),
                        (fm.grid_h(), fm.grid_w(), fm.dim(), fm.kind()));
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn feature_map_rejects_every_truncation(fm in feature_map()) {
        let bytes = fm.to_bytes().unwrap();
        for len in 0..bytes.len() {
            prop_assert!(FeatureMap::from_bytes(&bytes[..len]).is_err(), "accepted {len} bytes");
        }
        let mut longer = bytes.clone();
        longer.push(0);
        prop_assert!(FeatureMap::from_bytes(&longer).is_err());
    }

    #[test]
    fn attention_round_trip_and_truncation(att in attention()) {
        let bytes = att.to_bytes().unwrap();
        let back = AttentionStack::from_bytes(&bytes).unwrap();
        prop_assert!(bits_equal(back.data(), att.data()));
        prop_assert_eq!(back.to_bytes().unwrap(), bytes.clone());
        for len in 0..bytes.len() {
            prop_assert!(AttentionStack::from_bytes(&bytes[..len]).is_err());
        }
    }

    #[test]
    fn crop_descriptor_round_trip_and_truncation(records in descriptors()) {
        let bytes = crop_descriptors_to_bytes(&records).unwrap();
        let back = crop_descriptors_from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.len(), records.len());
        for (a, b) in back.iter().zip(&records) {
            prop_assert_eq!(&a.image_id, &b.image_id);
            prop_assert!(bits_equal(&a.vector, &b.vector));
        }
        prop_assert_eq!(crop_descriptors_to_bytes(&back).unwrap(), bytes.clone());
        for len in 0..bytes.len() {
            prop_assert!(crop_descriptors_from_bytes(&bytes[..len]).is_err());
        }
    }
}

fn header(h: u32, w: u32, d: u32) -> Vec<u8> {
    let mut out = b"LFEA".to_vec();
    for v in [1u32, h, w, d] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&[0, 0, 0, 0]);
    out
}

#[test]
fn hand_built_feature_file() {
    let mut bytes = header(2, 2, 3);
    for i in 0..12 {
        bytes.extend_from_slice(&(i as f32).to_le_bytes());
    }
    let fm = FeatureMap::from_bytes(&bytes).unwrap();
    assert_eq!(fm.n_patches(), 4);
    assert_eq!(fm.patch(3), &[9.0, 10.0, 11.0]);
    assert_eq!(fm.to_bytes().unwrap(), bytes);

    let short = &bytes[..bytes.len() - 4];
    assert!(matches!(FeatureMap::from_bytes(short), Err(Error::SizeMismatch(_))));
}

#[test]
fn header_errors() {
    let mut bytes = header(1, 1, 1);
    bytes.extend_from_slice(&1.0f32.to_le_bytes());

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(FeatureMap::from_bytes(&bad), Err(Error::BadMagic { .. })));

    let mut bad = bytes.clone();
    bad[4] = 2;
    assert!(matches!(
        FeatureMap::from_bytes(&bad),
        Err(Error::VersionMismatch { expected: 1, found: 2 })
    ));

    let mut bad = bytes.clone();
    bad[24..28].copy_from_slice(&f32::NAN.to_le_bytes());
    assert!(matches!(FeatureMap::from_bytes(&bad), Err(Error::NonFiniteValue { .. })));

    let mut bad = bytes.clone();
    bad[24..28].copy_from_slice(&f32::INFINITY.to_le_bytes());
    assert!(matches!(FeatureMap::from_bytes(&bad), Err(Error::NonFiniteValue { .. })));

    let mut bad = bytes;
    bad[20] = 7;
    assert!(FeatureMap::from_bytes(&bad).is_err(), "unknown kind code");
}

#[test]
fn attention_file_layout() {
    let mut bytes = b"LATT".to_vec();
    for v in [1u32, 1, 1, 1] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes.extend_from_slice(&0.7f32.to_le_bytes());
    let att = AttentionStack::from_bytes(&bytes).unwrap();
    assert_eq!((att.heads(), att.grid_h(), att.grid_w()), (1, 1, 1));
    assert_eq!(att.head(0), &[0.7]);
}

#[test]
fn files_on_disk() {
    let dir = tempfile::tempdir().unwrap();

    let fm = FeatureMap::new(1, 2, 2, FeatureKind::Query, vec![1.0, -2.0, 0.5, 3.25]).unwrap();
    let a = dir.path().join("a.lfea");
    let b = dir.path().join("b.lfea");
    write_feature_map(&fm, &a).unwrap();
    write_feature_map(&fm, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(read_feature_map(&a).unwrap(), fm);

    let att = AttentionStack::new(2, 1, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
    let path = dir.path().join("att.latt");
    write_attention_stack(&att, &path).unwrap();
    assert_eq!(read_attention_stack(&path).unwrap(), att);

    let records = vec![
        CropDescriptor { image_id: "000005".into(), vector: vec![1.0, 2.0] },
        CropDescriptor { image_id: "000007".into(), vector: vec![-1.0, 0.0] },
    ];
    let path = dir.path().join("crops.lcls");
    write_crop_descriptors(&records, &path).unwrap();
    assert_eq!(read_crop_descriptors(&path).unwrap(), records);

    let mut manifest = ImageManifest::padded("000005", 470, 375, 16);
    manifest.feature_files.insert("key".into(), "000005.key.lfea".into());
    let path = dir.path().join("000005.json");
    write_manifest(&manifest, &path).unwrap();
    let back = read_manifest(&path).unwrap();
    assert_eq!(back, manifest);
    assert_eq!((back.pad_w, back.pad_h), (480, 384));
    assert_eq!(back.file_for("key", dir.path()), Some(dir.path().join("000005.key.lfea")));

    assert!(matches!(
        read_feature_map(dir.path().join("missing.lfea")),
        Err(Error::Io { .. })
    ));
}

#[test]
fn writing_nan_is_rejected() {
    // FeatureMap::new already refuses non-finite values, so nothing
    // non-finite can reach the writer.
    assert!(matches!(
        FeatureMap::new(1, 1, 2, FeatureKind::Key, vec![0.0, f32::NAN]),
        Err(Error::NonFiniteValue { index: 1 })
    ));
    let bad = vec![CropDescriptor { image_id: "x".into(), vector: vec![f32::NAN] }];
    assert!(crop_descriptors_to_bytes(&bad).is_err());
}

#[test]
fn manifest_divisibility() {
    let mut m = ImageManifest::padded("img", 480, 480, 16);
    assert_eq!(m.grid_w(), 30);
    m.pad_w = 481;
    assert!(matches!(m.validate(), Err(Error::InvalidManifest(_))));
    let text = serde_json::to_string(&m).unwrap();
    assert!(ImageManifest::from_json(&text).is_err());
}
