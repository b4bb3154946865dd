//! Temporal-intent detection and iconic-action decomposition.
//!
//! The rule functions here back [`crate::transform::RuleFallback`]; remote
//! clients return the same structures over the wire.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Whether a query needs temporal grounding, and which events it asks about.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivationResult {
    pub needs_temporal_support: bool,
    pub event_texts: Vec<String>,
}

impl ActivationResult {
    pub fn inactive() -> Self {
        Self {
            needs_temporal_support: false,
            event_texts: Vec::new(),
        }
    }
}

/// One visually distinctive action clause.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IconicAction {
    pub index: usize,
    pub text: String,
}

impl IconicAction {
    pub fn indexed(texts: impl IntoIterator<Item = String>) -> Vec<IconicAction> {
        texts
            .into_iter()
            .enumerate()
            .map(|(index, text)| IconicAction { index, text })
            .collect()
    }
}

const CUES: &[&str] = &[
    "when",
    "what time",
    "before",
    "after",
    "first",
    "then",
    "beginning",
    "end",
    "order",
];

const DETERMINERS: &[&str] = &[
    "the", "a", "an", "this", "that", "his", "her", "their", "its", "another", "one", "some",
    "two", "three", "my", "our", "your",
];

const ADJECTIVES: &[&str] = &[
    "young", "old", "little", "small", "big", "other", "second", "first", "same", "tall",
];

const NOMINALS: &[&str] = &[
    "he", "she", "they", "it", "someone", "somebody", "person", "man", "woman", "boy", "girl",
    "people", "everyone", "nobody", "i", "we", "you",
];

const PLURAL_SUBJECTS: &[&str] = &["they", "we", "you", "i", "people", "two", "three"];

const E_VERBS: &[&str] = &[
    "arrange", "become", "bite", "bounce", "change", "chase", "close", "come", "continue",
    "cuddle", "dance", "describe", "dine", "drive", "exercise", "give", "handle", "have",
    "hide", "juggle", "leave", "make", "move", "nibble", "place", "pose", "prepare", "raise",
    "remove", "ride", "rinse", "rise", "serve", "shake", "share", "slide", "smile", "sneeze",
    "squeeze", "stare", "store", "take", "tickle", "type", "use", "wake", "wave", "wipe",
    "write",
];

const IRREGULAR_PAST: &[&str] = &[
    "sat", "stood", "ate", "took", "went", "ran", "put", "got", "threw", "held", "left", "came",
    "drank", "made", "opened", "closed", "began", "saw", "laid", "lay",
];

struct Rules {
    cue: Regex,
    sentence: Regex,
    interrogative: Regex,
    leading_aux: Regex,
    trailing_scaffold: Regex,
    relation_split: Regex,
    reference: Regex,
    clause_split: Regex,
    leading_conj: Regex,
    terminal: Regex,
}

fn rules() -> &'static Rules {
    static R: OnceLock<Rules> = OnceLock::new();
    R.get_or_init(|| {
        let re = |s: &str| Regex::new(s).expect("static pattern");
        let cue_alt = CUES
            .iter()
            .map(|c| c.replace(' ', r"\s+"))
            .collect::<Vec<_>>()
            .join("|");
        Rules {
            cue: re(&format!(r"(?i)\b(?:{cue_alt})\b")),
            sentence: re(r"[^.?!]+[.?!]*"),
            interrogative: re(r"(?i)\b(?:at\s+what\s+time|what\s+time|when|in\s+what\s+order)\b\s*"),
            leading_aux: re(r"(?i)^(?P<aux>did|does|do|was|were|is|are|has|have|had|will|would|can|could)\s+"),
            trailing_scaffold: re(r"(?i)(?:\s+(?:in|during)\s+(?:the|this)\s+(?:video|clip))?(?:\s+(?:happen|occur|take\s+place))?\s*$"),
            relation_split: re(r"(?i)\s+(?:and\s+then|before|after|then)\s+|,\s*(?:and\s+)?then\s+"),
            reference: re(r"(?i)^(?:(?:this|that|it)(?:\s+(?:event|action))?(?:\s+(?:happen|happens|happened|occur|occurs|occurred|take\s+place|took\s+place))?)?$"),
            clause_split: re(r"(?i)\s*[,;]\s*|\s+(?:and|then|while)\s+|\s+followed\s+by\s+"),
            leading_conj: re(r"(?i)^(?:(?:and|then|while|followed\s+by)(?:\s+|$))+"),
            terminal: re(r"[\s.!?,;:]+$"),
        }
    })
}

fn is_verb_like(word: &str) -> bool {
    let w = word.to_ascii_lowercase();
    (w.len() > 2 && (w.ends_with('s') || w.ends_with("ed") || w.ends_with("ing")))
        || IRREGULAR_PAST.contains(&w.as_str())
}

/// Number of leading words forming the clause subject, if any.
fn subject_len(words: &[&str]) -> Option<usize> {
    let first = words.first()?.to_ascii_lowercase();
    let first = first.trim_end_matches("'s");
    if NOMINALS.contains(&first) {
        return Some(1);
    }
    if DETERMINERS.contains(&first) && words.len() >= 2 {
        let mut n = 1;
        while n < words.len() - 1 && ADJECTIVES.contains(&words[n].to_ascii_lowercase().as_str())
        {
            n += 1;
        }
        return Some(n + 1);
    }
    None
}

fn conjugate_third_person(verb: &str) -> String {
    let lower = verb.to_ascii_lowercase();
    match lower.as_str() {
        "have" => return "has".into(),
        "be" => return "is".into(),
        "do" => return "does".into(),
        "go" => return "goes".into(),
        _ => {}
    }
    let bytes = lower.as_bytes();
    let n = bytes.len();
    if ["s", "sh", "ch", "x", "z", "o"]
        .iter()
        .any(|suffix| lower.ends_with(suffix))
    {
        format!("{verb}es")
    } else if n >= 2 && bytes[n - 1] == b'y' && !b"aeiou".contains(&bytes[n - 2]) {
        format!("{}ies", &verb[..verb.len() - 1])
    } else {
        format!("{verb}s")
    }
}

fn gerund_to_base(word: &str) -> String {
    let lower = word.to_ascii_lowercase();
    match lower.as_str() {
        "lying" => return "lie".into(),
        "dying" => return "die".into(),
        "tying" => return "tie".into(),
        _ => {}
    }
    let Some(stem) = lower.strip_suffix("ing") else {
        return word.to_string();
    };
    let b = stem.as_bytes();
    if b.len() >= 3 && b[b.len() - 1] == b[b.len() - 2] && !b"lszfaeiou".contains(&b[b.len() - 1])
    {
        return stem[..stem.len() - 1].to_string();
    }
    let with_e = format!("{stem}e");
    if E_VERBS.contains(&with_e.as_str()) {
        with_e
    } else {
        stem.to_string()
    }
}

fn is_plural(subject: &[&str]) -> bool {
    subject
        .first()
        .is_some_and(|w| PLURAL_SUBJECTS.contains(&w.to_ascii_lowercase().as_str()))
}

/// Rewrites `<subject> <base verb> ...` into `<subject> <third-person verb> ...`.
fn conjugate_after_subject(clause: &str) -> String {
    let words: Vec<&str> = clause.split_whitespace().collect();
    match subject_len(&words) {
        Some(n) if n < words.len() && !is_plural(&words[..n]) => {
            let mut out: Vec<String> = words.iter().map(|w| w.to_string()).collect();
            if !is_verb_like(words[n]) {
                out[n] = conjugate_third_person(words[n]);
            }
            out.join(" ")
        }
        _ => words.join(" "),
    }
}

/// Turns a gerund-led clause into a finite one for `subject`.
fn finite_from_gerund(clause: &str, subject: &[&str]) -> String {
    let mut words: Vec<String> = clause.split_whitespace().map(str::to_string).collect();
    if let Some(first) = words.first_mut() {
        let base = gerund_to_base(first);
        *first = if is_plural(subject) {
            base
        } else {
            conjugate_third_person(&base)
        };
    }
    let mut out: Vec<String> = subject.iter().map(|s| s.to_string()).collect();
    out.extend(words);
    out.join(" ")
}

fn lowercase_first_determiner(text: &str) -> String {
    let mut words: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    if let Some(first) = words.first_mut() {
        let lower = first.to_ascii_lowercase();
        if DETERMINERS.contains(&lower.as_str()) || (NOMINALS.contains(&lower.as_str()) && lower != "i") {
            *first = lower;
        }
    }
    words.join(" ")
}

pub fn has_temporal_cue(query: &str) -> bool {
    rules().cue.is_match(query)
}

/// Events asked about in one question sentence.
fn events_in_sentence(sentence: &str) -> Vec<String> {
    let r = rules();
    let mut body = sentence.trim().trim_end_matches(['?', '.', '!']).trim().to_string();
    if let Some(m) = r.interrogative.find(&body) {
        body = body[m.end()..].to_string();
    }
    let mut needs_conjugation = false;
    if let Some(caps) = r.leading_aux.captures(&body) {
        let aux = caps["aux"].to_ascii_lowercase();
        needs_conjugation = matches!(aux.as_str(), "did" | "does" | "do");
        body = body[caps.get(0).expect("group 0").end()..].to_string();
    }
    let body = r.trailing_scaffold.replace(&body, "").trim().to_string();

    let mut events = Vec::new();
    let mut last_subject: Vec<String> = Vec::new();
    for (i, part) in r.relation_split.split(&body).enumerate() {
        let part = part.trim();
        if part.is_empty() || r.reference.is_match(part) {
            continue;
        }
        let part = lowercase_first_determiner(part);
        let words: Vec<&str> = part.split_whitespace().collect();
        let event = match subject_len(&words) {
            Some(n) => {
                last_subject = words[..n].iter().map(|w| w.to_string()).collect();
                if i == 0 && needs_conjugation {
                    conjugate_after_subject(&part)
                } else {
                    part.clone()
                }
            }
            None if !last_subject.is_empty() && is_verb_like(words[0]) => {
                let subject: Vec<&str> = last_subject.iter().map(String::as_str).collect();
                if words[0].to_ascii_lowercase().ends_with("ing") {
                    finite_from_gerund(&part, &subject)
                } else {
                    format!("{} {part}", subject.join(" "))
                }
            }
            None => part.clone(),
        };
        events.push(event);
    }
    events
}

/// Rule-based activation: a cue lexicon gates, question scaffolding is stripped.
pub fn activate_rules(query: &str) -> ActivationResult {
    let r = rules();
    if !has_temporal_cue(query) {
        return ActivationResult::inactive();
    }
    let sentences: Vec<&str> = r
        .sentence
        .find_iter(query)
        .map(|m| m.as_str().trim())
        .filter(|s| !s.is_empty())
        .collect();
    let (cued, plain): (Vec<&str>, Vec<&str>) =
        sentences.iter().partition(|s| has_temporal_cue(s));
    let mut event_texts: Vec<String> = cued.iter().flat_map(|s| events_in_sentence(s)).collect();
    if event_texts.is_empty() {
        event_texts = plain
            .iter()
            .map(|s| r.terminal.replace(s, "").trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
    }
    if event_texts.is_empty() {
        event_texts.push(r.terminal.replace(query.trim(), "").trim().to_string());
    }
    ActivationResult {
        needs_temporal_support: true,
        event_texts,
    }
}

/// Rule-based decomposition: split at clause boundaries, re-attach the nearest
/// preceding subject to subjectless verb clauses, fold non-clause fragments
/// back into the previous action.
pub fn decompose_rules(event_text: &str) -> Vec<String> {
    let r = rules();
    let text = r.terminal.replace(event_text.trim(), "").to_string();
    let mut pieces: Vec<(String, String)> = Vec::new();
    let mut cursor = 0;
    let mut pending_sep = String::new();
    for m in r.clause_split.find_iter(&text) {
        pieces.push((std::mem::take(&mut pending_sep), text[cursor..m.start()].to_string()));
        pending_sep = m.as_str().to_string();
        cursor = m.end();
    }
    pieces.push((pending_sep, text[cursor..].to_string()));

    let mut actions: Vec<String> = Vec::new();
    let mut last_subject: Vec<String> = Vec::new();
    for (sep, raw) in pieces {
        let stripped = r.leading_conj.replace(raw.trim(), "");
        let clause = r.terminal.replace(stripped.trim(), "").trim().to_string();
        if clause.is_empty() {
            continue;
        }
        let words: Vec<&str> = clause.split_whitespace().collect();
        if let Some(n) = subject_len(&words) {
            last_subject = words[..n].iter().map(|w| w.to_string()).collect();
            actions.push(clause);
        } else if is_verb_like(words[0]) && !last_subject.is_empty() {
            let subject: Vec<&str> = last_subject.iter().map(String::as_str).collect();
            if words[0].to_ascii_lowercase().ends_with("ing") {
                actions.push(finite_from_gerund(&clause, &subject));
            } else {
                actions.push(format!("{} {}", subject.join(" "), clause));
            }
        } else if let Some(prev) = actions.last_mut() {
            prev.push_str(&sep);
            prev.push_str(&clause);
        } else {
            actions.push(clause);
        }
    }
    actions
}
