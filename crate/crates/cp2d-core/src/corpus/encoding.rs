//! Single-byte text encodings (ISO 8859-1 and ISO 8859-2).
//!
//! Corpus text is held as one byte per character in a declared code page.
//! Encoding is lossy by design: characters outside the page go through a
//! shipped transliteration table and fall back to '?'.

use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

/// Supported single-byte code pages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    /// ISO 8859-1 (English, Italian).
    Latin1,
    /// ISO 8859-2 (Polish).
    Latin2,
}

impl Encoding {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "latin1" | "iso-8859-1" | "iso8859-1" => Some(Encoding::Latin1),
            "latin2" | "iso-8859-2" | "iso8859-2" => Some(Encoding::Latin2),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Encoding::Latin1 => "latin1",
            Encoding::Latin2 => "latin2",
        }
    }
}

impl std::fmt::Display for Encoding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

// Upper half (0xA0..=0xFF) of ISO 8859-2 as Unicode code points. The lower
// half coincides with ASCII/Latin-1.
const LATIN2_HIGH: [u16; 96] = [
    0x00A0, 0x0104, 0x02D8, 0x0141, 0x00A4, 0x013D, 0x015A, 0x00A7, 0x00A8, 0x0160, 0x015E,
    0x0164, 0x0179, 0x00AD, 0x017D, 0x017B, 0x00B0, 0x0105, 0x02DB, 0x0142, 0x00B4, 0x013E,
    0x015B, 0x02C7, 0x00B8, 0x0161, 0x015F, 0x0165, 0x017A, 0x02DD, 0x017E, 0x017C, 0x0154,
    0x00C1, 0x00C2, 0x0102, 0x00C4, 0x0139, 0x0106, 0x00C7, 0x010C, 0x00C9, 0x0118, 0x00CB,
    0x011A, 0x00CD, 0x00CE, 0x010E, 0x0110, 0x0143, 0x0147, 0x00D3, 0x00D4, 0x0150, 0x00D6,
    0x00D7, 0x0158, 0x016E, 0x00DA, 0x0170, 0x00DC, 0x00DD, 0x0162, 0x00DF, 0x0155, 0x00E1,
    0x00E2, 0x0103, 0x00E4, 0x013A, 0x0107, 0x00E7, 0x010D, 0x00E9, 0x0119, 0x00EB, 0x011B,
    0x00ED, 0x00EE, 0x010F, 0x0111, 0x0144, 0x0148, 0x00F3, 0x00F4, 0x0151, 0x00F6, 0x00F7,
    0x0159, 0x016F, 0x00FA, 0x0171, 0x00FC, 0x00FD, 0x0163, 0x02D9,
];

fn latin2_reverse() -> &'static HashMap<char, u8> {
    static MAP: OnceLock<HashMap<char, u8>> = OnceLock::new();
    MAP.get_or_init(|| {
        let mut m = HashMap::new();
        for b in 0u8..0xA0 {
            m.insert(b as char, b);
        }
        for (i, &cp) in LATIN2_HIGH.iter().enumerate() {
            m.insert(char::from_u32(cp as u32).unwrap(), 0xA0 + i as u8);
        }
        m
    })
}

fn translit_table() -> &'static HashMap<char, &'static str> {
    static TABLE: OnceLock<HashMap<char, &'static str>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut m = HashMap::new();
        for line in include_str!("../../data/transliteration.tsv").lines() {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(2, '\t');
            let (Some(ch), Some(rep)) = (parts.next(), parts.next()) else {
                continue;
            };
            let mut chars = ch.chars();
            if let (Some(c), None) = (chars.next(), chars.next()) {
                m.insert(c, rep);
            }
        }
        m
    })
}

/// Encode a single character into the target page, if representable.
pub fn encode_char(c: char, enc: Encoding) -> Option<u8> {
    match enc {
        Encoding::Latin1 => {
            let cp = c as u32;
            (cp <= 0xFF).then_some(cp as u8)
        }
        Encoding::Latin2 => latin2_reverse().get(&c).copied(),
    }
}

/// Encode a text into the single-byte page, one byte per character.
///
/// Characters outside the page are replaced by their transliteration, or
/// '?' when no entry exists. Never fails.
pub fn transcode(text: &str, enc: Encoding) -> Vec<u8> {
    let mut out = Vec::with_capacity(text.len());
    for c in text.chars() {
        if let Some(b) = encode_char(c, enc) {
            out.push(b);
        } else if let Some(rep) = translit_table().get(&c) {
            // transliterations are ASCII by construction
            out.extend_from_slice(rep.as_bytes());
        } else {
            out.push(b'?');
        }
    }
    out
}

/// Decode page bytes back into a Unicode string (exact inverse on bytes the
/// page defines).
pub fn decode(bytes: &[u8], enc: Encoding) -> String {
    match enc {
        Encoding::Latin1 => bytes.iter().map(|&b| b as char).collect(),
        Encoding::Latin2 => bytes
            .iter()
            .map(|&b| {
                if b < 0xA0 {
                    b as char
                } else {
                    char::from_u32(LATIN2_HIGH[(b - 0xA0) as usize] as u32).unwrap()
                }
            })
            .collect(),
    }
}

/// Lowercasing table for word tokenization: `lower(b)` is the lowercased
/// byte when `b` is a letter in the page, `None` otherwise.
pub fn lower_letter(b: u8, enc: Encoding) -> Option<u8> {
    match enc {
        Encoding::Latin1 => match b {
            b'a'..=b'z' => Some(b),
            b'A'..=b'Z' => Some(b + 32),
            // uppercase accented block, skipping the multiplication sign
            0xC0..=0xD6 | 0xD8..=0xDE => Some(b + 32),
            // lowercase accented block, skipping the division sign
            0xDF..=0xF6 | 0xF8..=0xFF => Some(b),
            _ => None,
        },
        Encoding::Latin2 => match b {
            b'a'..=b'z' => Some(b),
            b'A'..=b'Z' => Some(b + 32),
            // letters in the A0 row map to their B0-row lowercase forms
            0xA1 | 0xA3 | 0xA5 | 0xA6 | 0xA9 | 0xAA | 0xAB | 0xAC | 0xAE | 0xAF => Some(b + 0x10),
            0xB1 | 0xB3 | 0xB5 | 0xB6 | 0xB9 | 0xBA | 0xBB | 0xBC | 0xBE | 0xBF => Some(b),
            0xC0..=0xD6 | 0xD8..=0xDE => Some(b + 32),
            // 0xFF is a spacing dot-above in this page, not a letter
            0xDF..=0xF6 | 0xF8..=0xFE => Some(b),
            _ => None,
        },
    }
}
