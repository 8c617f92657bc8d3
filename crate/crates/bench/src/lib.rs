//! Input generators shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tgc_core::graph::{build_graph, GraphConfig};
use tgc_core::{Tensor, TextGraph};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f32> {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    Tensor::from_vec(&[rows, cols], data).expect("shape matches data")
}

/// Token ids of a document with `len` tokens over `vocab` types.
pub fn document(rng: &mut ChaCha8Rng, len: usize, vocab: usize) -> Vec<usize> {
    (0..len).map(|_| rng.gen_range(0..vocab)).collect()
}

pub fn document_graph(rng: &mut ChaCha8Rng, len: usize, vocab: usize) -> TextGraph {
    build_graph(&document(rng, len, vocab), &GraphConfig::default()).expect("nonempty document")
}
