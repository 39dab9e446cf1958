//! Small hand-built populations used by tests, demos and the CLI.

use crate::population::{NoiseModel, Population, Space, UserModel};
use crate::template::{BitTemplate, DistanceFn, MaskedTemplate, Template};

/// Two users on 2-bit templates.
/// `X_1`: P(00)=0.7, P(01)=0.3. `X_2`: P(11)=0.6, P(10)=0.4.
pub fn tiny_world() -> Population {
    let bits = |s: &str| Template::Bits(BitTemplate::parse_bits(s).unwrap());
    Population::new(
        vec![
            UserModel {
                id: "1".into(),
                reference: bits("00"),
                noise: NoiseModel::ExplicitTable(vec![(bits("00"), 0.7), (bits("01"), 0.3)]),
            },
            UserModel {
                id: "2".into(),
                reference: bits("11"),
                noise: NoiseModel::ExplicitTable(vec![(bits("11"), 0.6), (bits("10"), 0.4)]),
            },
        ],
        DistanceFn::Hamming,
        Space::Bits { len: 2, masked: false },
    )
    .expect("valid world")
}

/// Weight-5 words of length 10 whose pairwise overlaps are 2 or 3 positions.
const CODEWORDS: [[usize; 5]; 11] = [
    [3, 4, 5, 6, 8],
    [0, 1, 2, 5, 8],
    [0, 1, 6, 8, 9],
    [1, 4, 5, 7, 9],
    [0, 2, 3, 4, 9],
    [0, 2, 4, 6, 7],
    [0, 3, 5, 6, 7],
    [1, 2, 3, 6, 9],
    [1, 3, 4, 7, 8],
    [2, 5, 7, 8, 9],
    [1, 2, 4, 5, 6],
];

/// Per-position flip probability of [`single_flip_noise`].
pub const SINGLE_FLIP_EPS: f64 = 0.002;

/// Reference with probability `1 - len * eps`, each single-bit flip with
/// probability `eps`. Masks are full.
pub fn single_flip_noise(reference: &BitTemplate, eps: f64) -> NoiseModel {
    let len = reference.len();
    let full = |b: BitTemplate| Template::Masked(MaskedTemplate::full(b));
    let mut table = vec![(full(reference.clone()), 1.0 - len as f64 * eps)];
    for i in 0..len {
        table.push((full(reference.with_flipped(i)), eps));
    }
    NoiseModel::ExplicitTable(table)
}

fn masked_world(references: Vec<BitTemplate>) -> Population {
    let users = references
        .into_iter()
        .enumerate()
        .map(|(i, b)| UserModel {
            id: format!("u{i}"),
            reference: Template::Masked(MaskedTemplate::full(b.clone())),
            noise: single_flip_noise(&b, SINGLE_FLIP_EPS),
        })
        .collect();
    Population::new(
        users,
        DistanceFn::FractionalHamming,
        Space::Bits { len: 10, masked: true },
    )
    .expect("valid world")
}

/// Eleven well-separated users on masked 10-bit templates with very little
/// noise. Full-mask probes see a tight impostor distribution; probes with
/// only one or two available bits see a very wide one, which a fixed
/// threshold cannot account for.
pub fn codeword_world() -> Population {
    masked_world(
        CODEWORDS
            .iter()
            .map(|w| BitTemplate::from_fn(10, |i| w.contains(&i)))
            .collect(),
    )
}

/// All 32 masked 10-bit templates that are constant on each pair of
/// positions `(2j, 2j + 1)`, one user each, with single-flip noise.
pub fn block_world() -> Population {
    masked_world(
        (0..32u32)
            .map(|code| BitTemplate::from_fn(10, |i| code >> (i / 2) & 1 == 1))
            .collect(),
    )
}
