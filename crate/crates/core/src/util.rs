/// 64-bit FNV-1a. Stable across platforms and releases, unlike `DefaultHasher`.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Digest of a float slice's exact bit patterns.
pub(crate) fn digest_f64(values: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Join tokens into readable text: no space before closing punctuation or
/// after an opening bracket.
pub(crate) fn join_tokens<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    let mut prev_opens = true;
    for t in tokens {
        let t = t.as_ref();
        let closes = matches!(t, "," | "." | ";" | ":" | "!" | "?" | ")" | "]" | "%" | "'");
        if !out.is_empty() && !closes && !prev_opens {
            out.push(' ');
        }
        out.push_str(t);
        prev_opens = matches!(t, "(" | "[");
    }
    out
}
