//! FNV-1a fingerprints for assembled operators and cached artifacts.

pub const FNV_OFFSET: u64 = 0xcbf29ce484222325;
pub const FNV_PRIME: u64 = 0x100000001b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    fnv1a64_update(FNV_OFFSET, bytes)
}

/// Continue a running FNV-1a hash; feed chunks in a fixed order.
pub fn fnv1a64_update(state: u64, bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(state, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Hash a slice of floats by their little-endian byte patterns, so the
/// fingerprint is exactly as strict as bitwise reproducibility.
pub fn fnv1a64_f64(state: u64, values: &[f64]) -> u64 {
    values
        .iter()
        .fold(state, |h, v| fnv1a64_update(h, &v.to_le_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_published_vectors() {
        // reference digests for the 64-bit FNV-1a variant
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn float_hash_is_order_and_sign_sensitive() {
        let a = fnv1a64_f64(FNV_OFFSET, &[1.0, 2.0]);
        let b = fnv1a64_f64(FNV_OFFSET, &[2.0, 1.0]);
        assert_ne!(a, b);
        assert_ne!(
            fnv1a64_f64(FNV_OFFSET, &[0.0]),
            fnv1a64_f64(FNV_OFFSET, &[-0.0])
        );
    }
}
