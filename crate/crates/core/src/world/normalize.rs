use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use super::WorldError;

/// Canonical entity-name token: lowercase ASCII alphanumerics joined by
/// single underscores.
///
/// German umlauts and sharp s are transliterated (`ä` -> `ae`, `ß` -> `ss`),
/// other accented letters lose their marks, and every run of remaining
/// characters becomes one underscore.
pub fn normalize_name(raw: &str) -> Result<String, WorldError> {
    let mut folded = String::with_capacity(raw.len());
    for c in raw.trim().nfc() {
        match c {
            'ä' | 'Ä' => folded.push_str("ae"),
            'ö' | 'Ö' => folded.push_str("oe"),
            'ü' | 'Ü' => folded.push_str("ue"),
            'ß' | 'ẞ' => folded.push_str("ss"),
            'æ' | 'Æ' => folded.push_str("ae"),
            'œ' | 'Œ' => folded.push_str("oe"),
            'ø' | 'Ø' => folded.push('o'),
            'ł' | 'Ł' => folded.push('l'),
            'đ' | 'Đ' => folded.push('d'),
            'þ' | 'Þ' => folded.push_str("th"),
            other => folded.push(other),
        }
    }

    let mut out = String::with_capacity(folded.len());
    let mut pending_sep = false;
    for c in folded.nfd().filter(|c| !is_combining_mark(*c)) {
        if c.is_ascii_alphanumeric() {
            if pending_sep && !out.is_empty() {
                out.push('_');
            }
            pending_sep = false;
            out.push(c.to_ascii_lowercase());
        } else {
            pending_sep = true;
        }
    }

    if out.is_empty() {
        Err(WorldError::EmptyName(raw.to_string()))
    } else {
        Ok(out)
    }
}

/// True when `name` is already in canonical form.
pub fn is_canonical_name(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with('_')
        && !name.ends_with('_')
        && !name.contains("__")
        && name.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}
