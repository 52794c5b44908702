// SPDX-License-Identifier: Apache-2.0

//! The shipped reference weights: checksum, layout and first-row values.

mod common;

use imcsim::shell::weights::{decode_weights, encode_weights, sha256_hex};

const FILE_SHA256: &str = "c7b198137b8990f9143c5843164ba977563ea30519171fcc9f05a93cf0b2caff";
const PAYLOAD_SHA256: &str = "35ca33be0b4c5ea73df94fcefa1092a28b6131f8111f7a35b0077785416a1016";

#[test]
fn fixture_checksum_and_first_rows() {
    let bytes = std::fs::read(common::fixture_path()).unwrap();
    assert_eq!(sha256_hex(&bytes), FILE_SHA256);
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    assert_eq!(sha256_hex(&bytes[12 + header_len..]), PAYLOAD_SHA256);

    let model = decode_weights(&bytes).unwrap();
    assert_eq!(model.layer_dims, vec![400, 120, 84, 10]);
    let firsts: [[f32; 4]; 3] = [
        [-0.026731722, -0.13260238, 0.028205262, -0.087214574],
        [0.08031736, 0.19115417, -0.22388093, 0.21628916],
        [-0.5227157, -0.524574, 0.36040664, 0.65079194],
    ];
    let scales = [0.6856389682521183, 0.7862987993101815, 1.1937223443441356];
    for ((layer, first), scale) in model.layers.iter().zip(firsts).zip(scales) {
        assert!(layer.bias);
        assert_eq!(layer.weights.len(), layer.rows() * layer.outputs);
        assert_eq!(&layer.weights[..4], &first);
        assert_eq!(layer.scale, scale);
        assert!(layer.weights.iter().all(|w| w.abs() <= 1.0));
        assert!(layer.weights.iter().any(|w| w.abs() == 1.0));
    }
    assert_eq!(encode_weights(&model).unwrap(), bytes);
}
