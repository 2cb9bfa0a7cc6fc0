//! Mapping between annotation-file offsets and positions in normalized text.
//!
//! Loaded text is normalized so that every line ending is a single `\n`.
//! Annotation offsets count Unicode code points, but line endings may count
//! as one or two units depending on the [`OffsetPolicy`].

use serde::{Deserialize, Serialize};

/// How many offset units a line ending occupies in annotation files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OffsetPolicy {
    /// Every line ending counts as one character.
    OneChar,
    /// Every line ending counts as two characters, even bare `\n`.
    TwoChar,
    /// Each line ending counts as its actual length in the source file.
    Auto,
}

impl std::str::FromStr for OffsetPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "one-char" => Ok(OffsetPolicy::OneChar),
            "two-char" => Ok(OffsetPolicy::TwoChar),
            "auto" => Ok(OffsetPolicy::Auto),
            other => Err(format!("unknown offset policy '{other}' (one-char, two-char, auto)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LineEndingStyle {
    #[serde(rename = "LF")]
    Lf,
    #[serde(rename = "CRLF")]
    Crlf,
    Mixed,
}

/// Line-ending layout of a source file, kept so offsets can be translated
/// and the file reproduced.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineLayout {
    /// Positions of `\n` in the normalized text.
    pub newlines: Vec<usize>,
    /// Whether each newline was `\r\n` in the source.
    pub crlf: Vec<bool>,
}

impl LineLayout {
    /// Normalizes `raw` to `\n` line endings and records the original layout.
    /// A lone `\r` is treated as a one-character line ending.
    pub fn normalize(raw: &str) -> (String, LineLayout) {
        let mut text = String::with_capacity(raw.len());
        let mut layout = LineLayout::default();
        let mut chars = raw.chars().peekable();
        let mut pos = 0usize;
        while let Some(c) = chars.next() {
            match c {
                '\r' => {
                    let crlf = chars.peek() == Some(&'\n');
                    if crlf {
                        chars.next();
                    }
                    layout.newlines.push(pos);
                    layout.crlf.push(crlf);
                    text.push('\n');
                }
                '\n' => {
                    layout.newlines.push(pos);
                    layout.crlf.push(false);
                    text.push('\n');
                }
                other => text.push(other),
            }
            pos += 1;
        }
        (text, layout)
    }

    pub fn style(&self) -> LineEndingStyle {
        let crlf = self.crlf.iter().filter(|&&b| b).count();
        if crlf == 0 {
            LineEndingStyle::Lf
        } else if crlf == self.crlf.len() {
            LineEndingStyle::Crlf
        } else {
            LineEndingStyle::Mixed
        }
    }

    /// Reconstructs the source text from normalized text.
    pub fn denormalize(&self, text: &str) -> String {
        let mut out = String::with_capacity(text.len() + self.newlines.len());
        let mut k = 0;
        for (pos, c) in text.chars().enumerate() {
            if c == '\n' && k < self.newlines.len() && self.newlines[k] == pos {
                if self.crlf[k] {
                    out.push('\r');
                }
                k += 1;
            }
            out.push(c);
        }
        out
    }

    fn width(&self, k: usize, policy: OffsetPolicy) -> usize {
        match policy {
            OffsetPolicy::OneChar => 1,
            OffsetPolicy::TwoChar => 2,
            OffsetPolicy::Auto => {
                if self.crlf[k] {
                    2
                } else {
                    1
                }
            }
        }
    }

    /// Converts a normalized position to an annotation offset.
    pub fn to_external(&self, pos: usize, policy: OffsetPolicy) -> usize {
        let extra: usize = self
            .newlines
            .iter()
            .enumerate()
            .take_while(|(_, &nl)| nl < pos)
            .map(|(k, _)| self.width(k, policy) - 1)
            .sum();
        pos + extra
    }

    /// Converts an annotation offset to a normalized position. An offset that
    /// falls between the two units of a wide line ending maps past the newline.
    pub fn to_internal(&self, offset: usize, policy: OffsetPolicy) -> usize {
        let mut extra = 0usize;
        for (k, &nl) in self.newlines.iter().enumerate() {
            let ext_nl = nl + extra;
            if ext_nl >= offset {
                break;
            }
            let w = self.width(k, policy);
            if offset < ext_nl + w {
                return nl + 1;
            }
            extra += w - 1;
        }
        offset - extra
    }

    /// Length of the normalized text of `len` chars, in annotation units.
    pub fn external_len(&self, len: usize, policy: OffsetPolicy) -> usize {
        self.to_external(len, policy)
    }
}
