use m2align::seqio::{
    decode, encode, read_container, write_container, SeqioError, Tensor, TensorData,
};
use proptest::prelude::*;
use sha2::{Digest, Sha256};

fn bits(t: &TensorData) -> Vec<u64> {
    match t {
        TensorData::F32(v) => v.iter().map(|x| x.to_bits() as u64).collect(),
        TensorData::F64(v) => v.iter().map(|x| x.to_bits()).collect(),
    }
}

fn tensor() -> impl Strategy<Value = (Vec<u32>, bool, u64)> {
    (
        prop::collection::vec(0u32..5, 0..=4),
        any::<bool>(),
        any::<u64>(),
    )
}

fn build(specs: Vec<(Vec<u32>, bool, u64)>) -> Vec<Tensor> {
    specs
        .into_iter()
        .enumerate()
        .map(|(i, (dims, wide, seed))| {
            let n: u32 = dims.iter().product();
            // Arbitrary bit patterns, NaNs and infinities included.
            let raw = (0..n as u64).map(|j| {
                seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
                    .rotate_left(j as u32 % 61)
                    ^ j
            });
            if wide {
                Tensor::f64(format!("t{i}"), dims, raw.map(f64::from_bits).collect())
            } else {
                Tensor::f32(
                    format!("t{i}"),
                    dims,
                    raw.map(|b| f32::from_bits(b as u32)).collect(),
                )
            }
        })
        .collect()
}

proptest! {
    #[test]
    fn round_trip_is_bit_exact(specs in prop::collection::vec(tensor(), 0..6)) {
        let tensors = build(specs);
        let back = decode(&encode(&tensors).unwrap()).unwrap();
        prop_assert_eq!(back.len(), tensors.len());
        for (a, b) in tensors.iter().zip(&back) {
            prop_assert_eq!(&a.name, &b.name);
            prop_assert_eq!(&a.dims, &b.dims);
            prop_assert_eq!(bits(&a.data), bits(&b.data));
        }
    }

    #[test]
    fn every_strict_prefix_is_rejected(specs in prop::collection::vec(tensor(), 1..4), cut in any::<prop::sample::Index>()) {
        let bytes = encode(&build(specs)).unwrap();
        let n = cut.index(bytes.len());
        prop_assert!(decode(&bytes[..n]).is_err());
    }
}

#[test]
fn little_endian_layout() {
    let bytes = encode(&[Tensor::f32("x", vec![1], vec![1.0])]).unwrap();
    assert_eq!(&bytes[..8], b"FSQ1\x01\0\0\0");
    // name len, name, rank, dim, tag, offset, payload
    assert_eq!(&bytes[8..13], b"\x01\0\0\0x");
    assert_eq!(&bytes[13..21], b"\x01\0\0\0\x01\0\0\0");
    assert_eq!(bytes[21], 0);
    assert_eq!(u64::from_le_bytes(bytes[22..30].try_into().unwrap()), 30);
    assert_eq!(&bytes[30..], &1.0f32.to_le_bytes());
}

#[test]
fn file_writes_are_deterministic_and_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let tensors = vec![
        Tensor::f32("clip", vec![2, 3], vec![0.5, -1.0, 2.0, 3.5, 0.0, 1e-30]),
        Tensor::f64("labels", vec![2], vec![0.0, 1.0]),
    ];
    let (a, b) = (tmp.path().join("a.fsq"), tmp.path().join("b.fsq"));
    write_container(&tensors, &a).unwrap();
    write_container(&tensors, &b).unwrap();
    let hash = |p| Sha256::digest(std::fs::read(p).unwrap());
    assert_eq!(hash(&a), hash(&b));
    assert_eq!(read_container(&a).unwrap(), tensors);
}

#[test]
fn io_errors_carry_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.fsq");
    let e = read_container(&missing).unwrap_err();
    assert!(matches!(e, SeqioError::Io { .. }));
    assert!(e.to_string().contains("nope.fsq"));
    let e = write_container(&[], &tmp.path().join("no/dir/x.fsq")).unwrap_err();
    assert!(e.to_string().contains("x.fsq"));
}
