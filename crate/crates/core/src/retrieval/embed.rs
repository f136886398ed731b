use std::collections::BTreeSet;

/// Dimension of the built-in hashed embedder.
pub const EMBED_DIM: usize = 256;

/// 64-bit FNV-1a over the UTF-8 bytes. Stable across platforms and releases.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Text in, fixed-dimension unit (or all-zero) vector out. Deterministic for
/// a fixed configuration.
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed_lemmas(&self, lemmas: &[String]) -> Vec<f64>;
}

/// Bag-of-lemmas hashed into [`EMBED_DIM`] buckets with raw term-frequency
/// weights, then unit-normalized.
#[derive(Debug, Clone, Copy, Default)]
pub struct HashedEmbedder;

impl Embedder for HashedEmbedder {
    fn dimension(&self) -> usize {
        EMBED_DIM
    }

    fn embed_lemmas(&self, lemmas: &[String]) -> Vec<f64> {
        let mut v = vec![0.0; EMBED_DIM];
        for lemma in lemmas {
            v[(fnv1a(lemma.as_bytes()) % EMBED_DIM as u64) as usize] += 1.0;
        }
        normalize(&mut v);
        v
    }
}

/// Embeds content lemmas restricted to `vocabulary`; out-of-vocabulary lemmas
/// contribute nothing, so text sharing no indexed lemma maps to zero.
pub fn embed_with_vocabulary(
    embedder: &dyn Embedder,
    lemmas: &[String],
    vocabulary: &BTreeSet<String>,
) -> Vec<f64> {
    let kept: Vec<String> = lemmas.iter().filter(|l| vocabulary.contains(*l)).cloned().collect();
    embedder.embed_lemmas(&kept)
}

pub(crate) fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lemmas(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn empty_is_zero_vector() {
        assert!(HashedEmbedder.embed_lemmas(&[]).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn order_does_not_matter() {
        let a = HashedEmbedder.embed_lemmas(&lemmas("nut chocolate"));
        let b = HashedEmbedder.embed_lemmas(&lemmas("chocolate nut"));
        assert!((dot(&a, &b) - 1.0).abs() < 1e-12);
        assert_eq!(a, b);
    }

    #[test]
    fn unit_norm() {
        let v = HashedEmbedder.embed_lemmas(&lemmas("dark chocolate chocolate nut"));
        assert!((dot(&v, &v) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fnv_reference_values() {
        // published FNV-1a 64 test vectors
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn vocabulary_filter() {
        let vocab: BTreeSet<String> = ["chocolate".to_string()].into();
        let v = embed_with_vocabulary(&HashedEmbedder, &lemmas("xyzzy plugh"), &vocab);
        assert!(v.iter().all(|&x| x == 0.0));
    }
}
