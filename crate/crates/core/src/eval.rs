//! Exact-span and partial-overlap micro-F1 with a per-class breakdown.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{EntityClass, Mention, Span};

/// Mentions keyed by document id.
pub type MentionsByDoc = BTreeMap<String, Vec<Mention>>;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("threshold {0} is outside (0, 1]")]
    Threshold(f64),
}

/// Which mention's size the overlap is divided by.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Denominator {
    #[default]
    Gold,
    Pred,
    Union,
    Min,
}

impl std::str::FromStr for Denominator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gold" => Ok(Denominator::Gold),
            "pred" => Ok(Denominator::Pred),
            "union" => Ok(Denominator::Union),
            "min" => Ok(Denominator::Min),
            _ => Err(format!("unknown denominator '{s}' (gold, pred, union, min)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Matching {
    Exact,
    Partial { threshold: f64, denominator: Denominator },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Counts {
    pub fn new(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Counts {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }

    fn add(&self, other: &Counts) -> Counts {
        Counts::new(self.tp + other.tp, self.fp + other.fp, self.fn_ + other.fn_)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub matching: Matching,
    pub per_class: BTreeMap<EntityClass, Counts>,
    pub micro: Counts,
}

impl ScoreReport {
    fn from_counts(matching: Matching, raw: BTreeMap<EntityClass, (usize, usize, usize)>) -> Self {
        let per_class: BTreeMap<EntityClass, Counts> =
            raw.into_iter().map(|(c, (tp, fp, fn_))| (c, Counts::new(tp, fp, fn_))).collect();
        let micro = per_class.values().fold(Counts::new(0, 0, 0), |acc, c| acc.add(c));
        ScoreReport {
            matching,
            per_class,
            micro,
        }
    }
}

fn by_class(mentions: &[Mention]) -> BTreeMap<EntityClass, Vec<&Mention>> {
    let mut out: BTreeMap<EntityClass, Vec<&Mention>> = BTreeMap::new();
    for m in mentions {
        out.entry(m.class).or_default().push(m);
    }
    out
}

fn doc_pairs<'a>(gold: &'a MentionsByDoc, pred: &'a MentionsByDoc) -> Vec<(&'a [Mention], &'a [Mention])> {
    let mut ids: Vec<&String> = gold.keys().chain(pred.keys()).collect();
    ids.sort();
    ids.dedup();
    ids.into_iter()
        .map(|id| {
            (
                gold.get(id).map_or(&[][..], Vec::as_slice),
                pred.get(id).map_or(&[][..], Vec::as_slice),
            )
        })
        .collect()
}

/// Counts a prediction as correct only when class and spans equal a gold
/// mention's; duplicates are matched as a multiset.
pub fn exact_match_f1(gold: &MentionsByDoc, pred: &MentionsByDoc) -> ScoreReport {
    let mut raw: BTreeMap<EntityClass, (usize, usize, usize)> = BTreeMap::new();
    for (g, p) in doc_pairs(gold, pred) {
        let mut bag: HashMap<(EntityClass, &[Span]), usize> = HashMap::new();
        for m in g {
            *bag.entry((m.class, &m.spans)).or_default() += 1;
        }
        for m in p {
            let entry = raw.entry(m.class).or_default();
            match bag.get_mut(&(m.class, &m.spans[..])) {
                Some(n) if *n > 0 => {
                    *n -= 1;
                    entry.0 += 1;
                }
                _ => entry.1 += 1,
            }
        }
        for ((class, _), left) in bag {
            raw.entry(class).or_default().2 += left;
        }
    }
    ScoreReport::from_counts(Matching::Exact, raw)
}

/// Sorted, disjoint cover of a mention's characters.
fn cover(m: &Mention) -> Vec<(usize, usize)> {
    let mut spans: Vec<(usize, usize)> = m.spans.iter().map(|s| (s.start, s.end)).collect();
    spans.sort_unstable();
    let mut out: Vec<(usize, usize)> = Vec::new();
    for (s, e) in spans {
        match out.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => out.push((s, e)),
        }
    }
    out
}

fn size(c: &[(usize, usize)]) -> usize {
    c.iter().map(|(s, e)| e - s).sum()
}

fn intersection(a: &[(usize, usize)], b: &[(usize, usize)]) -> usize {
    let (mut i, mut j, mut total) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if lo < hi {
            total += hi - lo;
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    total
}

/// Shared characters of `gold` and `pred` as a fraction of the chosen
/// denominator. Characters are the union of each mention's spans.
pub fn overlap_ratio(gold: &Mention, pred: &Mention, denominator: Denominator) -> f64 {
    let (g, p) = (cover(gold), cover(pred));
    let inter = intersection(&g, &p);
    let denom = match denominator {
        Denominator::Gold => size(&g),
        Denominator::Pred => size(&p),
        Denominator::Union => size(&g) + size(&p) - inter,
        Denominator::Min => size(&g).min(size(&p)),
    };
    if denom == 0 {
        0.0
    } else {
        inter as f64 / denom as f64
    }
}

/// Maximum-cardinality bipartite matching by augmenting paths. `adj[l]`
/// lists the right-hand vertices adjacent to left vertex `l`.
pub fn max_matching(adj: &[Vec<usize>], right: usize) -> usize {
    fn augment(l: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &r in &adj[l] {
            if seen[r] {
                continue;
            }
            seen[r] = true;
            if owner[r].is_none_or(|o| augment(o, adj, seen, owner)) {
                owner[r] = Some(l);
                return true;
            }
        }
        false
    }
    let mut owner = vec![None; right];
    let mut size = 0;
    for l in 0..adj.len() {
        let mut seen = vec![false; right];
        if augment(l, adj, &mut seen, &mut owner) {
            size += 1;
        }
    }
    size
}

/// One-to-one matching between same-class gold and predicted mentions whose
/// overlap ratio reaches `threshold`; tp is the maximum matching size.
pub fn partial_match_f1(
    gold: &MentionsByDoc,
    pred: &MentionsByDoc,
    threshold: f64,
    denominator: Denominator,
) -> Result<ScoreReport, EvalError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(EvalError::Threshold(threshold));
    }
    let mut raw: BTreeMap<EntityClass, (usize, usize, usize)> = BTreeMap::new();
    for (g, p) in doc_pairs(gold, pred) {
        let gc = by_class(g);
        let pc = by_class(p);
        let mut classes: Vec<EntityClass> = gc.keys().chain(pc.keys()).copied().collect();
        classes.sort();
        classes.dedup();
        for class in classes {
            let gs = gc.get(&class).map_or(&[][..], Vec::as_slice);
            let ps = pc.get(&class).map_or(&[][..], Vec::as_slice);
            let adj: Vec<Vec<usize>> = gs
                .iter()
                .map(|gm| {
                    (0..ps.len())
                        .filter(|&j| overlap_ratio(gm, ps[j], denominator) >= threshold)
                        .collect()
                })
                .collect();
            let tp = max_matching(&adj, ps.len());
            let entry = raw.entry(class).or_default();
            entry.0 += tp;
            entry.1 += ps.len() - tp;
            entry.2 += gs.len() - tp;
        }
    }
    Ok(ScoreReport::from_counts(
        Matching::Partial {
            threshold,
            denominator,
        },
        raw,
    ))
}

/// Plain-text table: one row per class with any gold or predicted mention,
/// ordered by training-set mention count, then the micro average.
pub fn per_class_table(report: &ScoreReport) -> String {
    let mut rows: Vec<(&EntityClass, &Counts)> = report
        .per_class
        .iter()
        .filter(|(_, c)| c.tp + c.fp + c.fn_ > 0)
        .collect();
    rows.sort_by_key(|(class, _)| (std::cmp::Reverse(class.reference_count()), **class));
    let pct = |x: f64| format!("{:.2}", 100.0 * x);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<24} {:>6} {:>5} {:>5} {:>5} {:>9} {:>9} {:>9}",
        "Class", "Count", "TP", "FP", "FN", "Precision", "Recall", "F1"
    );
    let mut line = |name: &str, count: String, c: &Counts| {
        let _ = writeln!(
            out,
            "{:<24} {:>6} {:>5} {:>5} {:>5} {:>9} {:>9} {:>9}",
            name,
            count,
            c.tp,
            c.fp,
            c.fn_,
            pct(c.precision),
            pct(c.recall),
            pct(c.f1)
        );
    };
    for (class, c) in rows {
        line(class.name(), class.reference_count().to_string(), c);
    }
    line("Micro", String::new(), &report.micro);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(class: EntityClass, spans: &[(usize, usize)]) -> Mention {
        Mention::new("T", class, spans.iter().map(|&(s, e)| Span::new(s, e)).collect())
    }

    fn docs(ms: Vec<Mention>) -> MentionsByDoc {
        [("d".to_string(), ms)].into_iter().collect()
    }

    #[test]
    fn exact_cases() {
        let g = docs(vec![m(EntityClass::Dose, &[(0, 5)])]);
        assert_eq!(exact_match_f1(&g, &g).micro.f1, 1.0);
        assert_eq!(exact_match_f1(&g, &docs(vec![])).micro.f1, 0.0);
        let r = exact_match_f1(&g, &docs(vec![m(EntityClass::Dose, &[(0, 4)])]));
        assert_eq!((r.micro.tp, r.micro.fp, r.micro.fn_), (0, 1, 1));
    }

    #[test]
    fn half_overlap_boundary() {
        let g = docs(vec![m(EntityClass::Dose, &[(0, 10)])]);
        let hit = partial_match_f1(&g, &docs(vec![m(EntityClass::Dose, &[(5, 15)])]), 0.5, Denominator::Gold).unwrap();
        assert_eq!(hit.micro.f1, 1.0);
        let miss = partial_match_f1(&g, &docs(vec![m(EntityClass::Dose, &[(6, 15)])]), 0.5, Denominator::Gold).unwrap();
        assert_eq!(miss.micro.f1, 0.0);
        let other = partial_match_f1(&g, &docs(vec![m(EntityClass::Sex, &[(0, 10)])]), 0.5, Denominator::Gold).unwrap();
        assert_eq!(other.micro.tp, 0);
    }

    #[test]
    fn discontiguous_gold_uses_span_union() {
        let g = m(EntityClass::Dose, &[(0, 6), (10, 12)]);
        let p = m(EntityClass::Dose, &[(0, 6)]);
        assert_eq!(overlap_ratio(&g, &p, Denominator::Gold), 0.75);
        assert_eq!(overlap_ratio(&g, &p, Denominator::Pred), 1.0);
        assert_eq!(overlap_ratio(&g, &p, Denominator::Union), 0.75);
        assert_eq!(overlap_ratio(&g, &p, Denominator::Min), 1.0);
    }

    #[test]
    fn thresholds_are_validated() {
        let g = docs(vec![]);
        assert!(partial_match_f1(&g, &g, 0.0, Denominator::Gold).is_err());
        assert!(partial_match_f1(&g, &g, 1.5, Denominator::Gold).is_err());
        assert!(partial_match_f1(&g, &g, 1.0, Denominator::Gold).is_ok());
    }

    #[test]
    fn matching_needs_augmenting_paths() {
        // greedy would pair 0-0 and leave 1 unmatched
        let adj = vec![vec![0, 1], vec![0]];
        assert_eq!(max_matching(&adj, 2), 2);
    }
}
