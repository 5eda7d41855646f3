//! Deterministic seed derivation.
//!
//! Everything random in the crate flows from one master seed. Sub-streams
//! (per clip, per frame, per purpose) are derived by mixing the master seed
//! with a label through an FNV-1a/SplitMix64 combination, so adding a new
//! consumer never perturbs existing streams and results are stable across
//! platforms and releases.

/// SplitMix64 finalizer: a cheap, well-distributed 64-bit mixer.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent seed from a master seed and a textual label.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    // FNV-1a over the label bytes, then mixed with the master seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in label.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix(master ^ splitmix(h))
}

/// Derives a seed from a master seed, a label, and an index (clip, frame, …).
pub fn derive_seed_indexed(master: u64, label: &str, index: u64) -> u64 {
    splitmix(derive_seed(master, label) ^ splitmix(index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable() {
        // Frozen values: changing them would reshuffle every downstream
        // random artifact, so they are pinned here.
        assert_eq!(derive_seed(0, "synth"), 0x743b_a0e0_5506_0b3e);
        assert_eq!(derive_seed_indexed(0, "synth", 3), 0x563b_793c_58eb_8751);
    }

    #[test]
    fn labels_and_indices_separate_streams() {
        assert_ne!(derive_seed(5, "a"), derive_seed(5, "b"));
        assert_ne!(derive_seed(5, "a"), derive_seed(6, "a"));
        assert_ne!(
            derive_seed_indexed(5, "a", 0),
            derive_seed_indexed(5, "a", 1)
        );
        assert_ne!(derive_seed(5, "a0"), derive_seed_indexed(5, "a", 0));
    }

    #[test]
    fn distinct_inputs_rarely_collide() {
        let mut seen = std::collections::HashSet::new();
        for master in 0..20u64 {
            for idx in 0..50 {
                assert!(seen.insert(derive_seed_indexed(master, "clip", idx)));
            }
        }
    }
}
