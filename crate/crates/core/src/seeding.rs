//! Stable seed derivation, so randomized steps are pure functions of a
//! global seed and record identifiers.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// FNV-1a over the seed and each part, with a separator between parts.
pub fn keyed_seed(seed: u64, parts: &[&[u8]]) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, &seed.to_le_bytes());
    for part in parts {
        h = fnv1a(h, part);
        h = fnv1a(h, &[0xff]);
    }
    h
}
