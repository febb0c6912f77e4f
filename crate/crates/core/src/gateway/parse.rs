use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;

use crate::prompting::RankingTask;

/// Which of the two presented items a pairwise answer prefers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preference {
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Rating(f64),
    Preference(Preference),
    /// Indices into the presented candidates, best first.
    Permutation(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedResponse {
    pub task: RankingTask,
    pub payload: Payload,
    pub raw_text: String,
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"-?\d+(?:\.\d+)?").expect("valid pattern"))
}

fn enumerator_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:[-*•]\s*|\(?\d{1,3}[.):]\s+)").expect("valid pattern"))
}

/// First number in `[1, scale_max]` appearing in `text`.
pub fn parse_pointwise(text: &str, scale_max: u32) -> Option<f64> {
    let hi = f64::from(scale_max);
    number_re().find_iter(text).filter_map(|m| m.as_str().parse::<f64>().ok()).find(|&x| (1.0..=hi).contains(&x))
}

/// Lowercased alphanumeric tokens.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

fn normalized(text: &str) -> String {
    tokens(text).join(" ")
}

fn leading_word(text: &str) -> String {
    text.trim_start_matches(|c: char| !c.is_alphanumeric())
        .chars()
        .take_while(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// A leading "yes" prefers the first item and a leading "no" the second;
/// otherwise the answer must name exactly one of the two titles.
pub fn parse_pairwise(text: &str, first_title: &str, second_title: &str) -> Option<Preference> {
    match leading_word(text).as_str() {
        "yes" => return Some(Preference::First),
        "no" => return Some(Preference::Second),
        _ => {}
    }
    let hay = format!(" {} ", normalized(text));
    let mentions = |title: &str| {
        let t = normalized(title);
        !t.is_empty() && hay.contains(&format!(" {t} "))
    };
    match (mentions(first_title), mentions(second_title)) {
        (true, false) => Some(Preference::First),
        (false, true) => Some(Preference::Second),
        _ => None,
    }
}

/// Minimum token-set overlap for a text span to count as a title.
pub const TITLE_MATCH_THRESHOLD: f64 = 0.6;
/// Longest run of comma-separated segments one title may span.
const MAX_SPAN: usize = 4;

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Matches titles in `text` in order of appearance. Returns indices into
/// `titles` for the matched candidates followed by the unmatched ones in
/// `backfill` order, or `None` when fewer than half the candidates match.
pub fn parse_listwise(text: &str, titles: &[&str], backfill: &[usize]) -> Option<Vec<usize>> {
    let n = titles.len();
    if n == 0 {
        return None;
    }
    let segments: Vec<&str> = text
        .split([',', '\n', ';'])
        .map(|s| {
            let s = s.trim();
            match enumerator_re().find(s) {
                Some(m) => &s[m.end()..],
                None => s,
            }
        })
        .collect();
    let title_sets: Vec<BTreeSet<String>> = titles.iter().map(|t| tokens(t).into_iter().collect()).collect();
    let mut used = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut p = 0;
    while p < segments.len() {
        // The shortest span that reaches the threshold wins, unless a longer
        // one matches some title exactly.
        let mut best: Option<(f64, usize, usize)> = None;
        for len in 1..=MAX_SPAN.min(segments.len() - p) {
            let span: BTreeSet<String> = segments[p..p + len].iter().flat_map(|s| tokens(s)).collect();
            if span.is_empty() {
                continue;
            }
            let mut here: Option<(f64, usize, usize)> = None;
            for (c, set) in title_sets.iter().enumerate().filter(|(c, _)| !used[*c]) {
                let score = jaccard(&span, set);
                if score >= TITLE_MATCH_THRESHOLD && here.is_none_or(|(s, _, _)| score > s) {
                    here = Some((score, len, c));
                }
            }
            match (best, here) {
                (None, Some(h)) => best = Some(h),
                (Some(b), Some(h)) if h.0 == 1.0 && b.0 < 1.0 => best = Some(h),
                _ => {}
            }
        }
        match best {
            Some((_, len, c)) => {
                used[c] = true;
                order.push(c);
                p += len;
            }
            None => p += 1,
        }
    }
    if order.len() * 2 < n {
        return None;
    }
    for c in backfill.iter().copied().chain(0..n) {
        if c < n && !used[c] {
            used[c] = true;
            order.push(c);
        }
    }
    Some(order)
}

/// Parses `text` as an answer to `task` over candidates presented with
/// `titles`. Listwise backfill uses `backfill` order.
pub fn parse_response(
    task: RankingTask,
    text: &str,
    titles: &[&str],
    backfill: &[usize],
    scale_max: u32,
) -> Option<ParsedResponse> {
    let payload = match task {
        RankingTask::Pointwise => Payload::Rating(parse_pointwise(text, scale_max)?),
        RankingTask::Pairwise => {
            let (a, b) = (titles.first()?, titles.get(1)?);
            Payload::Preference(parse_pairwise(text, a, b)?)
        }
        RankingTask::Listwise => Payload::Permutation(parse_listwise(text, titles, backfill)?),
    };
    Some(ParsedResponse { task, payload, raw_text: text.to_string() })
}
