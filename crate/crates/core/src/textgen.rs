//! Seed-deterministic synthetic text for desk-scale experiments.
//!
//! Generates pseudo-natural prose from a random word-level Markov chain:
//! enough n-gram structure that higher-order models genuinely beat lower
//! orders, while staying fully reproducible. Characters are restricted to
//! lowercase letters, space, and period so char-level vocabularies stay
//! small.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

const WORD_COUNT: usize = 400;
const SUCCESSORS: usize = 6;

/// Generate at least `min_bytes` of synthetic text.
pub fn synthetic_text(seed: u64, min_bytes: usize) -> String {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    let words: Vec<String> = (0..WORD_COUNT).map(|_| random_word(&mut rng)).collect();

    // Sparse first-order chain: each word prefers a few successors.
    let successors: Vec<Vec<usize>> = (0..WORD_COUNT)
        .map(|_| {
            (0..SUCCESSORS)
                .map(|_| rng.gen_range(0..WORD_COUNT))
                .collect()
        })
        .collect();

    let mut out = String::with_capacity(min_bytes + 64);
    let mut current = rng.gen_range(0..WORD_COUNT);
    let mut sentence_len = 0usize;
    while out.len() < min_bytes {
        out.push_str(&words[current]);
        sentence_len += 1;
        if sentence_len >= 8 && rng.gen_bool(0.2) {
            out.push('.');
            sentence_len = 0;
        }
        out.push(' ');
        // Mostly follow the chain, occasionally jump anywhere.
        current = if rng.gen_bool(0.85) {
            successors[current][rng.gen_range(0..SUCCESSORS)]
        } else {
            rng.gen_range(0..WORD_COUNT)
        };
    }
    out
}

fn random_word<R: Rng>(rng: &mut R) -> String {
    const CONSONANTS: &[u8] = b"bcdfghjklmnprstvwz";
    const VOWELS: &[u8] = b"aeiou";
    let syllables = rng.gen_range(1..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
        w.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
        if rng.gen_bool(0.3) {
            w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
        }
    }
    w
}
