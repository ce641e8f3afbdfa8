//! Small shared helpers.

/// Formats a value with 12 significant digits. This is the pinned precision
/// for all floating-point fields in the text index and topic-model files.
pub fn fmt_g12(x: f64) -> String {
    format!("{:.11e}", x)
}

/// Stable 64-bit FNV-1a hash.
///
/// Used to derive per-query RNG streams from the global seed so evaluation
/// output does not depend on the platform hasher or on worker scheduling.
pub fn fnv1a64(data: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in data {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
