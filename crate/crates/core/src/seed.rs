//! Deterministic seed derivation and stable fingerprints.
//!
//! Every random stream in a run is derived from the master seed plus a fixed
//! label and indices, so results do not depend on scheduling or iteration
//! order of parallel work.

/// splitmix64 finalizer; good avalanche, stable across platforms.
fn mix64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^= x >> 31;
    x
}

/// Derives a child seed from a master seed, a stream label, and an index.
pub fn derive(master: u64, label: &str, index: u64) -> u64 {
    let mut h = mix64(master ^ 0x9e37_79b9_7f4a_7c15);
    for &b in label.as_bytes() {
        h = mix64(h ^ u64::from(b));
    }
    mix64(h ^ index)
}

/// Derives a child seed with two indices (e.g. cell and episode).
pub fn derive2(master: u64, label: &str, a: u64, b: u64) -> u64 {
    mix64(derive(master, label, a) ^ mix64(b.wrapping_add(0x51_7c_c1_b7_27_22_0a_95)))
}

/// FNV-1a over bytes; used for stable config fingerprints (the std hasher is
/// randomized per process).
pub fn fingerprint(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
