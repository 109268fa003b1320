use proptest::prelude::*;

use blockprune::checkpoint::{decode, encode, rounded};
use blockprune::engine::data::MolecularSample;
use blockprune::engine::model::{init_checkpoint, ModelConfig};
use blockprune::error::Error;
use blockprune::xyz::{parse_samples, write_samples};

fn sample() -> impl Strategy<Value = MolecularSample> {
    (2usize..7).prop_flat_map(|n| {
        (
            prop::collection::vec(1u32..10, n),
            prop::collection::vec(prop::array::uniform3(-1e3f64..1e3), n),
            -1e6f64..1e6,
            prop::collection::vec(prop::array::uniform3(-1e3f64..1e3), n),
        )
            .prop_map(|(z, x, e, f)| MolecularSample::new(z, x, e, f).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn xyz_roundtrip_is_lossless(samples in prop::collection::vec(sample(), 1..4)) {
        let text = write_samples(&samples);
        let back = parse_samples(&text).unwrap();
        prop_assert_eq!(&back, &samples);
        prop_assert_eq!(write_samples(&back), text);
    }

    #[test]
    fn checkpoint_roundtrip_and_truncation(seed in 0u32..1000, blocks in 2u32..5, cut in 0.0f64..1.0) {
        let cfg = ModelConfig { blocks, node_dim: 5, edge_dim: 3, n_rbf: 2, mlp_layers: 2, seed, ..ModelConfig::default() };
        let ckpt = rounded(&init_checkpoint(&cfg).unwrap());
        let bytes = encode(&ckpt);
        prop_assert_eq!(&decode(&bytes).unwrap(), &ckpt);
        let at = ((bytes.len() as f64) * cut) as usize;
        prop_assert!(matches!(decode(&bytes[..at]), Err(Error::Truncated(_)) | Err(Error::BadMagic(_))));
    }
}

#[test]
fn checkpoint_header_errors_are_distinct() {
    let ckpt = init_checkpoint(&ModelConfig {
        blocks: 2,
        node_dim: 4,
        edge_dim: 2,
        n_rbf: 2,
        ..ModelConfig::default()
    })
    .unwrap();
    let bytes = encode(&ckpt);
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode(&bad), Err(Error::BadMagic(_))));
    let mut bad = bytes.clone();
    bad[4] = 9;
    assert!(matches!(decode(&bad), Err(Error::UnsupportedVersion(9))));
    let mut bad = bytes.clone();
    bad.push(0);
    assert!(matches!(decode(&bad), Err(Error::TrailingBytes(1))));
}
