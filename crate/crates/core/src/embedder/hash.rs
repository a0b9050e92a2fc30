use crate::error::{Error, Result};
use crate::metrics::EmbeddingVector;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
/// Offset basis of the sign hash: FNV offset xor the 64-bit golden ratio.
const SIGN_OFFSET: u64 = FNV_OFFSET ^ 0x9e37_79b9_7f4a_7c15;

fn fnv1a(offset: u64, bytes: &[u8]) -> u64 {
    bytes.iter().fold(offset, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Lowercased alphanumeric runs, bracketed by `^` and `$` markers.
fn tokens(input: &str) -> Vec<String> {
    let mut out = vec!["^".to_string()];
    out.extend(
        input
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(|w| w.to_lowercase()),
    );
    out.push("$".to_string());
    out
}

/// Feature-hashed word trigrams, L2-normalized.
///
/// Each trigram `a b c` is hashed as the UTF-8 bytes of `a\x1fb\x1fc` with
/// 64-bit FNV-1a. The bucket is `h mod d`; the sign is `+1` when the top bit
/// of a second FNV-1a pass (offset basis xor `0x9e3779b97f4a7c15`) is clear.
/// Inputs with no alphanumeric characters embed to the zero vector.
pub fn hash_embed_text(input: &str, d: usize) -> Result<EmbeddingVector> {
    if d == 0 {
        return Err(Error::invalid("d", "must be at least 1"));
    }
    let toks = tokens(input);
    let mut v = vec![0.0f64; d];
    for w in toks.windows(3) {
        let key = w.join("\u{1f}");
        let bucket = (fnv1a(FNV_OFFSET, key.as_bytes()) % d as u64) as usize;
        let sign = if fnv1a(SIGN_OFFSET, key.as_bytes()) >> 63 == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    EmbeddingVector::new(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::cosine_distance;

    #[test]
    fn fnv_reference_values() {
        // published FNV-1a 64 test vectors
        assert_eq!(fnv1a(FNV_OFFSET, b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(FNV_OFFSET, b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(FNV_OFFSET, b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn deterministic_and_unit_norm() {
        let a = hash_embed_text("Clearance of drug X in rats", 64).unwrap();
        let b = hash_embed_text("Clearance of drug X in rats", 64).unwrap();
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert_eq!(hash_embed_text("CLEARANCE of drug x, in rats!", 64).unwrap(), a);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(hash_embed_text("", 8).unwrap().norm(), 0.0);
        assert_eq!(hash_embed_text("...", 8).unwrap().norm(), 0.0);
        assert_eq!(hash_embed_text("word", 1).unwrap().as_slice().len(), 1);
        assert!(hash_embed_text("word", 0).is_err());
    }

    #[test]
    fn unrelated_sentences_are_far_apart() {
        let a = hash_embed_text("the plasma half life was prolonged in renal impairment", 64).unwrap();
        let b = hash_embed_text("a quick brown fox jumps over the lazy dog", 64).unwrap();
        assert!(cosine_distance(&a, &b).unwrap() > 0.5);
    }
}
