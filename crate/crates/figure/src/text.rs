use serde::{Deserialize, Serialize};

/// Fixed per-class advance widths used for label measurement.
///
/// Nothing is read from system fonts; two renders with the same config
/// measure text identically on every machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FontConfig {
    pub family: String,
    pub size: f64,
    /// Advance for every character outside the wide ranges.
    pub narrow_advance: f64,
    /// Advance for CJK and full-width characters.
    pub wide_advance: f64,
    /// Inclusive code point ranges measured with `wide_advance`.
    pub wide_ranges: Vec<(u32, u32)>,
}

/// CJK Unified Ideographs, Hiragana, Katakana, Hangul syllables and the
/// full-width forms (excluding the half-width katakana in between).
pub const DEFAULT_WIDE_RANGES: [(u32, u32); 6] = [
    (0x3040, 0x309F),
    (0x30A0, 0x30FF),
    (0x4E00, 0x9FFF),
    (0xAC00, 0xD7AF),
    (0xFF01, 0xFF60),
    (0xFFE0, 0xFFE6),
];

impl Default for FontConfig {
    fn default() -> Self {
        Self {
            family: "Helvetica, Arial, sans-serif".to_string(),
            size: 12.0,
            narrow_advance: 7.0,
            wide_advance: 14.0,
            wide_ranges: DEFAULT_WIDE_RANGES.to_vec(),
        }
    }
}

impl FontConfig {
    pub fn line_height(&self) -> f64 {
        self.size * 1.25
    }
}

pub fn is_wide(c: char, font: &FontConfig) -> bool {
    let cp = c as u32;
    font.wide_ranges
        .iter()
        .any(|&(lo, hi)| (lo..=hi).contains(&cp))
}

/// Estimated rendered width of one label line in pixels.
pub fn estimate_text_width(line: &str, font: &FontConfig) -> f64 {
    let (wide, narrow) = line.chars().fold((0u64, 0u64), |(w, n), c| {
        if is_wide(c, font) {
            (w + 1, n)
        } else {
            (w, n + 1)
        }
    });
    wide as f64 * font.wide_advance + narrow as f64 * font.narrow_advance
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_is_zero() {
        assert_eq!(estimate_text_width("", &FontConfig::default()), 0.0);
    }

    #[test]
    fn latin_pair() {
        assert_eq!(estimate_text_width("AA", &FontConfig::default()), 14.0);
    }

    #[test]
    fn mixed_latin_and_cjk_matches_per_char_sum() {
        let font = FontConfig::default();
        let line = "Loss 损失 ガンマ 한국 ｘ";
        let oracle: f64 = line
            .chars()
            .map(|c| match c as u32 {
                0x4E00..=0x9FFF
                | 0x3040..=0x30FF
                | 0xAC00..=0xD7AF
                | 0xFF01..=0xFF60
                | 0xFFE0..=0xFFE6 => 14.0,
                _ => 7.0,
            })
            .sum();
        assert_eq!(estimate_text_width(line, &font), oracle);
        // 8 narrow (4 latin, 4 spaces) and 8 wide (2 han, 3 katakana, 2 hangul, 1 full-width)
        assert_eq!(oracle, 8.0 * 7.0 + 8.0 * 14.0);
    }

    #[test]
    fn halfwidth_katakana_is_narrow() {
        let font = FontConfig::default();
        assert!(!is_wide('ｱ', &font));
        assert!(is_wide('ア', &font));
    }

    proptest! {
        #[test]
        fn appending_never_decreases_width(s in "\\PC{0,40}", c in any::<char>()) {
            let font = FontConfig::default();
            let before = estimate_text_width(&s, &font);
            let mut t = s.clone();
            t.push(c);
            prop_assert!(estimate_text_width(&t, &font) >= before);
        }
    }
}
