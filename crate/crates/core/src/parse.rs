//! Deterministic parsing of free-text model answers.
//!
//! Timestamp answers become a [`TimestampSet`] of points and closed intervals:
//!
//! | answer says                         | set                |
//! |-------------------------------------|--------------------|
//! | `at 3.2 second, 4.5 second`         | points {3.2, 4.5}  |
//! | `from 3.2 second to 4.5 second`     | [3.2, 4.5]         |
//! | `in the beginning of the video`     | [0, L/3]           |
//! | `in the middle of the video`        | [L/3, 2L/3]        |
//! | `in the end of the video`           | [2L/3, L]          |
//! | `throughout the video`              | [0, L]             |
//! | anything else                       | empty              |
//!
//! Text inside double quotes is treated as an event name and never parsed.
//! Order answers become an [`OrderLabel`].

use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TimestampSetError {
    #[error("timestamp {0} is negative or not finite")]
    InvalidValue(f64),
    #[error("interval [{0}, {1}] has lo > hi")]
    InvertedInterval(f64, f64),
}

/// The set `{t}` extracted from an answer: points plus closed intervals, in seconds.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "RawTimestampSet")]
pub struct TimestampSet {
    points: Vec<f64>,
    intervals: Vec<[f64; 2]>,
}

#[derive(Deserialize)]
struct RawTimestampSet {
    #[serde(default)]
    points: Vec<f64>,
    #[serde(default)]
    intervals: Vec<[f64; 2]>,
}

impl TryFrom<RawTimestampSet> for TimestampSet {
    type Error = TimestampSetError;

    fn try_from(raw: RawTimestampSet) -> Result<Self, Self::Error> {
        TimestampSet::new(raw.points, raw.intervals)
    }
}

fn valid_time(t: f64) -> bool {
    t.is_finite() && t >= 0.0
}

impl TimestampSet {
    pub fn new(points: Vec<f64>, intervals: Vec<[f64; 2]>) -> Result<Self, TimestampSetError> {
        if let Some(&bad) = points.iter().find(|&&p| !valid_time(p)) {
            return Err(TimestampSetError::InvalidValue(bad));
        }
        for &[lo, hi] in &intervals {
            if !valid_time(lo) {
                return Err(TimestampSetError::InvalidValue(lo));
            }
            if !valid_time(hi) {
                return Err(TimestampSetError::InvalidValue(hi));
            }
            if lo > hi {
                return Err(TimestampSetError::InvertedInterval(lo, hi));
            }
        }
        Ok(Self { points, intervals })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_points(points: impl IntoIterator<Item = f64>) -> Result<Self, TimestampSetError> {
        Self::new(points.into_iter().collect(), Vec::new())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn intervals(&self) -> &[[f64; 2]] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty() && self.intervals.is_empty()
    }

    fn push_point(&mut self, t: f64) {
        if !self.points.contains(&t) {
            self.points.push(t);
        }
    }

    fn push_interval(&mut self, lo: f64, hi: f64) {
        let iv = [lo.min(hi), lo.max(hi)];
        if !self.intervals.contains(&iv) {
            self.intervals.push(iv);
        }
    }
}

/// True iff some point lies in `[t_start, t_end]` or some interval touches it.
pub fn hits_window(ts: &TimestampSet, t_start: f64, t_end: f64) -> bool {
    ts.points.iter().any(|&p| t_start <= p && p <= t_end)
        || ts
            .intervals
            .iter()
            .any(|&[lo, hi]| lo <= t_end && hi >= t_start)
}

/// Drops points past `duration`, clamps interval ends to it, drops intervals starting after it.
pub fn clamp_to_duration(ts: &TimestampSet, duration: f64) -> TimestampSet {
    TimestampSet {
        points: ts.points.iter().copied().filter(|&p| p <= duration).collect(),
        intervals: ts
            .intervals
            .iter()
            .filter(|iv| iv[0] <= duration)
            .map(|&[lo, hi]| [lo, hi.min(duration)])
            .collect(),
    }
}

/// One temporal statement found in a response.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalMention {
    /// Byte range in the original response.
    pub span: Range<usize>,
    pub value: MentionValue,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MentionValue {
    Points(Vec<f64>),
    Interval(f64, f64),
}

const NUM: &str = r"(?:\d{1,2}:[0-5]\d|\d+(?:\.\d+)?)";
const UNIT: &str = r"(?:seconds|second|secs|sec|s|minutes|minute|mins|min)\b";

struct Patterns {
    span_phrase: Regex,
    range_from: Regex,
    range_bare: Regex,
    point: Regex,
    list_sep: Regex,
    duration_prefix: Regex,
    beginning: Regex,
    middle: Regex,
    end: Regex,
    throughout: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| {
        let re = |s: String| Regex::new(&s).expect("static pattern");
        Patterns {
            span_phrase: re(r"(?i)\bfrom\s+(?:the\s+)?(?:very\s+)?(?:beginning|start)\s+(?:to|until|till)\s+(?:the\s+)?(?:very\s+)?end\b|\bfrom\s+start\s+to\s+finish\b".into()),
            range_from: re(format!(
                r"(?i)\b(?:from|between)\s+(?:the\s+)?(?P<a>{NUM})\s*(?P<ua>{UNIT})?\s*(?:to|until|till|and|-|–)\s*(?:the\s+)?(?P<b>{NUM})\s*(?P<ub>{UNIT})?"
            )),
            range_bare: re(format!(
                r"(?i)\b(?P<a>{NUM})\s*(?P<ua>{UNIT})?\s*(?:-|–|to)\s*(?P<b>{NUM})\s*(?P<ub>{UNIT})"
            )),
            point: re(format!(
                r"(?i)(?:\b(?:at|around|about|approximately|roughly|near|by)\s+(?:the\s+)?(?:~\s*)?)?(?:\b(?P<n>\d+(?:\.\d+)?)\s*(?P<u>{UNIT})|\b(?P<c>\d{{1,2}}:[0-5]\d)\b)"
            )),
            list_sep: re(r"(?i)^\s*(?:,\s*(?:and|or)?|and|or|&)\s*$".into()),
            duration_prefix: re(r"(?i)\b(?:for|lasts|lasting|last|takes|took|lasted)\s+(?:about\s+|around\s+|approximately\s+)?$".into()),
            beginning: re(r"(?i)\bbeginning\b|\bthe\s+(?:very\s+)?start\b|\bearly\s+(?:on|in\s+the\s+(?:video|clip))\b|\bfirst\s+(?:part|third)\b".into()),
            middle: re(r"(?i)\bmiddle\b|\bmidway\b|\bhalfway\b|\bmid-(?:video|clip)\b".into()),
            end: re(r"(?i)\bthe\s+(?:very\s+)?end(?:ing)?\b|\blast\s+(?:part|third)\b|\bfinal\s+(?:part|third|moments?|seconds)\b".into()),
            throughout: re(r"(?i)\bthroughout\b|\b(?:entire|whole)\s+(?:video|clip|duration)\b|\ball\s+the\s+time\b".into()),
        }
    })
}

/// Replaces quoted text with spaces, preserving byte offsets.
fn mask_quotes(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut inside = false;
    for ch in text.chars() {
        match ch {
            '"' | '\u{201c}' | '\u{201d}' => {
                inside = !inside;
                out.push_str(&" ".repeat(ch.len_utf8()));
            }
            _ if inside => out.push_str(&" ".repeat(ch.len_utf8())),
            _ => out.push(ch),
        }
    }
    out
}

fn to_seconds(number: &str, unit: Option<&str>) -> Option<f64> {
    if let Some((m, s)) = number.split_once(':') {
        let m: f64 = m.parse().ok()?;
        let s: f64 = s.parse().ok()?;
        return Some(m * 60.0 + s);
    }
    let v: f64 = number.parse().ok()?;
    let minutes = unit.is_some_and(|u| u.to_ascii_lowercase().starts_with("min"));
    Some(if minutes { v * 60.0 } else { v })
}

fn overlaps(taken: &[Range<usize>], r: &Range<usize>) -> bool {
    taken.iter().any(|t| t.start < r.end && r.start < t.end)
}

/// Locates every temporal statement in a response, in text order.
pub fn find_mentions(response: &str, duration: f64) -> Vec<TemporalMention> {
    let p = patterns();
    let text = mask_quotes(response);
    let mut taken: Vec<Range<usize>> = Vec::new();
    let mut mentions: Vec<TemporalMention> = Vec::new();
    let mut add = |span: Range<usize>, value: MentionValue, taken: &mut Vec<Range<usize>>| {
        taken.push(span.clone());
        mentions.push(TemporalMention { span, value });
    };

    for m in p.span_phrase.find_iter(&text) {
        add(m.range(), MentionValue::Interval(0.0, duration), &mut taken);
    }
    for re in [&p.range_from, &p.range_bare] {
        for caps in re.captures_iter(&text) {
            let whole = caps.get(0).expect("group 0");
            if overlaps(&taken, &whole.range()) {
                continue;
            }
            let ub = caps.name("ub").map(|m| m.as_str());
            let ua = caps.name("ua").map(|m| m.as_str()).or(ub);
            let a = to_seconds(&caps["a"], ua);
            let b = to_seconds(&caps["b"], ub);
            if let (Some(a), Some(b)) = (a, b) {
                add(whole.range(), MentionValue::Interval(a.min(b), a.max(b)), &mut taken);
            }
        }
    }

    let mut points: Vec<(Range<usize>, f64)> = Vec::new();
    for caps in p.point.captures_iter(&text) {
        let whole = caps.get(0).expect("group 0");
        if overlaps(&taken, &whole.range()) {
            continue;
        }
        if p.duration_prefix.is_match(&text[..whole.start()]) {
            continue;
        }
        let value = match (caps.name("n"), caps.name("c")) {
            (Some(n), _) => to_seconds(n.as_str(), caps.name("u").map(|u| u.as_str())),
            (None, Some(c)) => to_seconds(c.as_str(), None),
            _ => None,
        };
        if let Some(v) = value {
            points.push((whole.range(), v));
        }
    }
    // adjacent points joined by commas or "and" form one list statement
    let mut i = 0;
    while i < points.len() {
        let mut span = points[i].0.clone();
        let mut values = vec![points[i].1];
        let mut j = i + 1;
        while j < points.len() && p.list_sep.is_match(&text[span.end..points[j].0.start]) {
            span.end = points[j].0.end;
            values.push(points[j].1);
            j += 1;
        }
        add(span, MentionValue::Points(values), &mut taken);
        i = j;
    }

    let third = duration / 3.0;
    let vague = [
        (&p.throughout, 0.0, duration),
        (&p.beginning, 0.0, third),
        (&p.middle, third, 2.0 * duration / 3.0),
        (&p.end, 2.0 * duration / 3.0, duration),
    ];
    for (re, lo, hi) in vague {
        for m in re.find_iter(&text) {
            if !overlaps(&taken, &m.range()) {
                add(m.range(), MentionValue::Interval(lo, hi), &mut taken);
            }
        }
    }

    mentions.sort_by_key(|m| m.span.start);
    mentions
}

/// Parses an answer into its timestamp set. Unparseable prose yields the empty set.
pub fn parse_timestamps(response: &str, duration: f64) -> TimestampSet {
    let mut set = TimestampSet::empty();
    for m in find_mentions(response, duration) {
        match m.value {
            MentionValue::Points(ps) => ps.into_iter().for_each(|t| set.push_point(t)),
            MentionValue::Interval(lo, hi) => set.push_interval(lo, hi),
        }
    }
    set
}

/// Answer class for an event-order question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OrderLabel {
    Yes,
    No,
    NoInfo,
}

impl OrderLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            OrderLabel::Yes => "Yes",
            OrderLabel::No => "No",
            OrderLabel::NoInfo => "NoInfo",
        }
    }

    pub fn flipped(&self) -> OrderLabel {
        match self {
            OrderLabel::Yes => OrderLabel::No,
            OrderLabel::No => OrderLabel::Yes,
            OrderLabel::NoInfo => OrderLabel::NoInfo,
        }
    }
}

impl std::fmt::Display for OrderLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

struct OrderPatterns {
    leading_yes: Regex,
    leading_no: Regex,
    no_info: Regex,
    any_yes: Regex,
    any_no: Regex,
}

fn order_patterns() -> &'static OrderPatterns {
    static P: OnceLock<OrderPatterns> = OnceLock::new();
    P.get_or_init(|| {
        let re = |s: &str| Regex::new(s).expect("static pattern");
        OrderPatterns {
            leading_yes: re(r"(?i)^\W*(?:yes|yeah|yep|indeed|correct|right|true|that\s+is\s+(?:right|correct)|that's\s+(?:right|correct))\b"),
            leading_no: re(r"(?i)^\W*(?:no|nope|incorrect|false|wrong)\b"),
            no_info: re(r"(?i)\bno\s+(?:relevant\s+)?information\b|\bnot\s+(?:clear|possible|mentioned|sure|shown|visible|enough)\b|\b(?:cannot|can't|can\s+not)\s+(?:determine|tell|be\s+determined|say)\b|\bunable\s+to\b|\b(?:does\s+not|doesn't)\s+(?:show|mention|provide)\b|\bno\s+mention\b|\bunclear\b|\bimpossible\s+to\b"),
            any_yes: re(r"(?i)\byes\b|\bindeed\b|\bthat\s+is\s+(?:right|correct)\b"),
            any_no: re(r"(?i)\bno\b|\bnot\b|n't\b|\bnever\b"),
        }
    })
}

/// Maps an answer to Yes/No/NoInfo. Total and case-insensitive.
pub fn classify_order(response: &str) -> OrderLabel {
    let p = order_patterns();
    let text = response.trim();
    if p.leading_yes.is_match(text) {
        OrderLabel::Yes
    } else if p.no_info.is_match(text) {
        OrderLabel::NoInfo
    } else if p.leading_no.is_match(text) {
        OrderLabel::No
    } else if p.any_yes.is_match(text) {
        OrderLabel::Yes
    } else if p.any_no.is_match(text) {
        OrderLabel::No
    } else {
        OrderLabel::NoInfo
    }
}
