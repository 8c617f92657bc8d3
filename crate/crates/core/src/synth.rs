//! Seeded synthetic corpora for smoke tests, benches and acceptance runs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A generated labeled document with an optional modality vector.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthDoc {
    pub id: String,
    pub text: String,
    pub label: usize,
    pub modality: Option<Vec<f32>>,
}

pub fn word(i: usize) -> String {
    format!("w{i:03}")
}

/// Generator RNG on its own stream, so it never mirrors a split or shuffle
/// seeded with the same value.
fn corpus_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x7379_6e74);
    rng
}

/// Two-class corpus over `vocab` words. The first 45% of the vocabulary is
/// topic 0, the next 45% topic 1, the rest shared. Tokens come from the
/// document's own topic with probability 0.75, the shared pool with 0.2 and
/// the other topic with 0.05. Labels alternate.
pub fn separable_corpus(n_docs: usize, vocab: usize, seed: u64) -> Vec<SynthDoc> {
    let mut rng = corpus_rng(seed);
    let topic = (vocab * 45 / 100).max(1);
    let pools = [0..topic, topic..2 * topic];
    let shared = 2 * topic..vocab.max(2 * topic + 1);
    (0..n_docs)
        .map(|i| {
            let label = i % 2;
            let len = rng.gen_range(15..=30);
            let tokens: Vec<String> = (0..len)
                .map(|_| {
                    let u: f64 = rng.gen();
                    let range = if u < 0.75 {
                        pools[label].clone()
                    } else if u < 0.95 {
                        shared.clone()
                    } else {
                        pools[1 - label].clone()
                    };
                    word(rng.gen_range(range))
                })
                .collect();
            SynthDoc {
                id: format!("doc{i:04}"),
                text: tokens.join(" "),
                label,
                modality: None,
            }
        })
        .collect()
}

/// Two-class corpus whose text and modality vector carry complementary
/// signal. For a seeded half of the documents the text holds four words of
/// the class topic and the modality vector is label-free noise; for the
/// other half the text holds two words of each topic and the modality vector
/// encodes the label. Every document also carries a run of repeated filler
/// words, so topic words are rare among tokens but common among word types.
pub fn multimodal_corpus(n_docs: usize, modality_dim: usize, seed: u64) -> Vec<SynthDoc> {
    let mut rng = corpus_rng(seed);
    let topic = 30;
    let pools = [0..topic, topic..2 * topic];
    let filler = 2 * topic..2 * topic + 40;
    let mut text_informative = vec![false; n_docs];
    let mut order: Vec<usize> = (0..n_docs).collect();
    order.shuffle(&mut rng);
    for &i in &order[..n_docs / 2] {
        text_informative[i] = true;
    }
    (0..n_docs)
        .map(|i| {
            let label = i % 2;
            let mut topical: Vec<String> = if text_informative[i] {
                (0..4).map(|_| word(rng.gen_range(pools[label].clone()))).collect()
            } else {
                (0..4).map(|k| word(rng.gen_range(pools[k % 2].clone()))).collect()
            };
            let fill_a = word(rng.gen_range(filler.clone()));
            let fill_b = word(rng.gen_range(filler.clone()));
            let mut tokens: Vec<String> = Vec::new();
            for k in 0..32 {
                tokens.push(if k % 2 == 0 { fill_a.clone() } else { fill_b.clone() });
            }
            for t in topical.drain(..) {
                let at = rng.gen_range(0..=tokens.len());
                tokens.insert(at, t);
            }
            let sign = if label == 1 { 1.0 } else { -1.0 };
            let modality = (0..modality_dim)
                .map(|_| {
                    let noise = rng.gen_range(-0.3f32..0.3);
                    if text_informative[i] {
                        noise
                    } else {
                        sign + noise
                    }
                })
                .collect();
            SynthDoc {
                id: format!("doc{i:04}"),
                text: tokens.join(" "),
                label,
                modality: Some(modality),
            }
        })
        .collect()
}
