use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Abbreviation {
    pub short_form: String,
    pub long_form: String,
    /// Character offset of the short form in the text.
    pub source_offset: usize,
}

fn is_short_form(s: &str) -> bool {
    let n = s.chars().count();
    let first = s.chars().next();
    (2..=10).contains(&n)
        && s.split_whitespace().count() <= 2
        && first.is_some_and(|c| c.is_alphanumeric())
        && s.chars().any(|c| c.is_alphabetic())
        && s.chars().any(|c| c.is_uppercase() || c.is_ascii_digit())
}

/// Matches short-form characters right to left against the candidate;
/// the first short-form character must start a word.
fn best_long_form(short: &str, candidate: &str) -> Option<String> {
    let sf: Vec<char> = short.chars().flat_map(char::to_lowercase).collect();
    let lf: Vec<char> = candidate.chars().collect();
    let lower = |c: char| c.to_lowercase().next().unwrap_or(c);
    let mut s = sf.len() as isize - 1;
    let mut l = lf.len() as isize - 1;
    while s >= 0 {
        let c = sf[s as usize];
        if !c.is_alphanumeric() {
            s -= 1;
            continue;
        }
        while l >= 0
            && (lower(lf[l as usize]) != c || (s == 0 && l > 0 && lf[l as usize - 1].is_alphanumeric()))
        {
            l -= 1;
        }
        if l < 0 {
            return None;
        }
        l -= 1;
        s -= 1;
    }
    let start = (l + 1) as usize;
    let begin = lf[..start].iter().rposition(|c| c.is_whitespace()).map_or(0, |p| p + 1);
    let long: String = lf[begin..].iter().collect();
    let long = long.trim().to_string();
    (long.chars().count() > short.chars().count() && !long.to_lowercase().contains(&short.to_lowercase()))
        .then_some(long)
}

/// Finds "long form (SF)" and "(long form, SF)" definitions.
pub fn detect_abbreviations(text: &str) -> Vec<Abbreviation> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i] != '(' {
            i += 1;
            continue;
        }
        let mut depth = 0;
        let Some(close) = (i..chars.len()).find(|&j| {
            match chars[j] {
                '(' => depth += 1,
                ')' => depth -= 1,
                _ => {}
            }
            depth == 0
        }) else {
            break;
        };
        let inner: String = chars[i + 1..close].iter().collect();
        if let Some(found) = inside(&inner, i + 1).or_else(|| before(&chars, i, &inner)) {
            out.push(found);
        }
        i = close + 1;
    }
    out
}

/// "(long form, SF)": the short form is the part after the last comma.
fn inside(inner: &str, inner_offset: usize) -> Option<Abbreviation> {
    let cut = inner.rfind(',')?;
    let (lf, sf) = (&inner[..cut], inner[cut + 1..].trim());
    if !is_short_form(sf) {
        return None;
    }
    let long = best_long_form(sf, lf.trim())?;
    let sf_byte = cut + 1 + inner[cut + 1..].find(sf)?;
    Some(Abbreviation {
        short_form: sf.to_string(),
        long_form: long,
        source_offset: inner_offset + inner[..sf_byte].chars().count(),
    })
}

/// "long form (SF)": the long form is drawn from at most
/// min(|SF| + 5, 2·|SF|) words before the parenthesis.
fn before(chars: &[char], open: usize, inner: &str) -> Option<Abbreviation> {
    let sf = inner.trim();
    if !is_short_form(sf) {
        return None;
    }
    let n = sf.chars().count();
    let max_words = (n + 5).min(2 * n);
    let prefix: String = chars[..open].iter().collect();
    // stay within the current sentence or clause
    let clause_start = prefix.rfind(['.', ';', ':', '(', ')']).map_or(0, |p| p + 1);
    let words: Vec<&str> = prefix[clause_start..].split_whitespace().collect();
    let candidate = words[words.len().saturating_sub(max_words)..].join(" ");
    let long = best_long_form(sf, &candidate)?;
    let lead = inner.len() - inner.trim_start().len();
    Some(Abbreviation {
        short_form: sf.to_string(),
        long_form: long,
        source_offset: open + 1 + inner[..lead].chars().count(),
    })
}
