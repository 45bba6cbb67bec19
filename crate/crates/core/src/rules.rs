//! Deterministic coordinator rules: harmful patterns, small talk, and the
//! unresolved-referent check. The cascade order is fixed; whatever the rules
//! leave undecided goes to the completion provider.
//!
//! Pattern files are UTF-8, one pattern per line, `#` starts a comment.
//! A pattern is a sequence of words matched case-insensitively against the
//! message's word tokens; `*` matches any run of words (including none).

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::event::{Intent, IntentClass};
use crate::message::{Message, Role};

pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if c == '\'' || c == '\u{2019}' {
            // apostrophes join: "what's" -> "whats"
        } else if !current.is_empty() {
            tokens.push(core::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Part {
    Word(String),
    Wild,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    pub source: String,
    parts: Vec<Part>,
}

impl Pattern {
    pub fn parse(line: &str) -> Option<Pattern> {
        let mut parts = Vec::new();
        for piece in line.split_whitespace() {
            if piece == "*" {
                if parts.last() != Some(&Part::Wild) {
                    parts.push(Part::Wild);
                }
            } else {
                parts.extend(tokenize(piece).into_iter().map(Part::Word));
            }
        }
        if parts.iter().all(|p| *p == Part::Wild) {
            return None;
        }
        Some(Pattern { source: line.trim().to_string(), parts })
    }

    /// Matches anywhere inside `tokens`.
    pub fn occurs_in(&self, tokens: &[String]) -> bool {
        (0..=tokens.len()).any(|start| self.match_prefix(&self.parts, &tokens[start..]).is_some())
    }

    /// Matches exactly the whole of `tokens`.
    pub fn matches_all(&self, tokens: &[String]) -> bool {
        Self::full(&self.parts, tokens)
    }

    fn full(parts: &[Part], tokens: &[String]) -> bool {
        match parts.split_first() {
            None => tokens.is_empty(),
            Some((Part::Wild, rest)) => (0..=tokens.len()).any(|k| Self::full(rest, &tokens[k..])),
            Some((Part::Word(w), rest)) => tokens.first() == Some(w) && Self::full(rest, &tokens[1..]),
        }
    }

    // Returns the number of consumed tokens when `parts` matches a prefix.
    fn match_prefix(&self, parts: &[Part], tokens: &[String]) -> Option<usize> {
        match parts.split_first() {
            None => Some(0),
            Some((Part::Wild, rest)) => (0..=tokens.len()).find_map(|k| self.match_prefix(rest, &tokens[k..]).map(|n| n + k)),
            Some((Part::Word(w), rest)) => {
                if tokens.first() == Some(w) {
                    self.match_prefix(rest, &tokens[1..]).map(|n| n + 1)
                } else {
                    None
                }
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PatternSet {
    pub patterns: Vec<Pattern>,
}

impl PatternSet {
    pub fn parse(text: &str) -> PatternSet {
        let patterns = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .filter_map(Pattern::parse)
            .collect();
        PatternSet { patterns }
    }

    pub fn first_occurring(&self, tokens: &[String]) -> Option<&Pattern> {
        self.patterns.iter().find(|p| p.occurs_in(tokens))
    }

    /// Splits `tokens` into consecutive segments that each match a whole
    /// pattern. Returns the patterns used, or `None` when no cover exists.
    pub fn cover(&self, tokens: &[String]) -> Option<Vec<&Pattern>> {
        if tokens.is_empty() {
            return None;
        }
        let n = tokens.len();
        // reach[i] = pattern index and segment start that reach position i
        let mut reach: Vec<Option<(usize, usize)>> = vec![None; n + 1];
        let mut seen = vec![false; n + 1];
        seen[0] = true;
        for start in 0..n {
            if !seen[start] {
                continue;
            }
            for end in start + 1..=n {
                if seen[end] {
                    continue;
                }
                if let Some(pi) = self.patterns.iter().position(|p| p.matches_all(&tokens[start..end])) {
                    seen[end] = true;
                    reach[end] = Some((pi, start));
                }
            }
        }
        if !seen[n] {
            return None;
        }
        let mut used = Vec::new();
        let mut at = n;
        while at > 0 {
            let (pi, start) = reach[at].expect("reachable");
            used.push(&self.patterns[pi]);
            at = start;
        }
        used.reverse();
        Some(used)
    }
}

/// Extension point for entity recognition. Entities found in history count
/// as antecedents for referents in the current message.
pub trait EntityExtractor {
    fn entities(&self, text: &str) -> Vec<String>;
}

/// Ships with no entity model.
pub struct NoEntities;

impl EntityExtractor for NoEntities {
    fn entities(&self, _text: &str) -> Vec<String> {
        Vec::new()
    }
}

const REFERENTS: &[&str] = &[
    "it", "this", "that", "these", "those", "them", "they", "هذا", "هذه", "ذلك", "تلك", "هو", "هي", "هم",
];

// Words that carry no referent of their own: function words, politeness and
// generic imperatives. Whatever remains is treated as content.
const NON_CONTENT: &[&str] = &[
    "a", "an", "the", "please", "pls", "can", "could", "would", "will", "you", "me", "my", "i", "we", "us", "for",
    "to", "of", "and", "or", "with", "on", "in", "up", "again", "now", "just", "do", "does", "did", "is", "are", "be",
    "summarize", "summarise", "summary", "explain", "fix", "open", "send", "translate", "show", "check", "run",
    "delete", "remove", "read", "analyze", "analyse", "make", "write", "update", "finish", "continue", "repeat",
    "redo", "describe", "review", "rewrite", "shorten", "expand", "improve", "handle", "process", "what", "about",
    "من", "فضلك", "لو", "سمحت", "لخص", "اشرح", "افتح", "ترجم", "اكتب", "احذف", "اقرأ", "حلل", "راجع", "في", "على",
];

fn is_content(token: &str) -> bool {
    !REFERENTS.contains(&token) && !NON_CONTENT.contains(&token) && !token.chars().all(|c| c.is_numeric())
}

#[derive(Debug, Clone, PartialEq)]
pub enum RuleVerdict {
    Decided(Intent),
    /// No rule decided; the provider classifies.
    Undecided,
}

#[derive(Debug, Clone, Default)]
pub struct RuleSet {
    pub harmful: PatternSet,
    pub greetings: PatternSet,
}

impl RuleSet {
    pub fn new(harmful: PatternSet, greetings: PatternSet) -> Self {
        RuleSet { harmful, greetings }
    }

    /// Runs the cascade: harmful → small talk → unresolved referent.
    pub fn evaluate(&self, message: &Message, history: &[Message], entities: &dyn EntityExtractor) -> RuleVerdict {
        let tokens = tokenize(&message.content);

        if let Some(p) = self.harmful.first_occurring(&tokens) {
            return RuleVerdict::Decided(Intent {
                class: IntentClass::Harmful,
                confidence: 1.0,
                cues: vec![format!("harmful:{}", p.source)],
            });
        }

        if let Some(used) = self.greetings.cover(&tokens) {
            return RuleVerdict::Decided(Intent {
                class: IntentClass::CasualChat,
                confidence: 1.0,
                cues: used.iter().map(|p| format!("greeting:{}", p.source)).collect(),
            });
        }

        if tokens.is_empty() && message.attachments.is_empty() {
            return RuleVerdict::Decided(Intent {
                class: IntentClass::Ambiguous,
                confidence: 1.0,
                cues: vec!["empty_prompt".into()],
            });
        }

        let has_referent = tokens.iter().any(|t| REFERENTS.contains(&t.as_str()));
        let self_contained = tokens.iter().any(|t| is_content(t))
            || !message.attachments.is_empty()
            || !entities.entities(&message.content).is_empty();
        if has_referent && !self_contained && !has_antecedent(history, entities) {
            return RuleVerdict::Decided(Intent {
                class: IntentClass::Ambiguous,
                confidence: 1.0,
                cues: vec!["referent:unresolved".into()],
            });
        }

        RuleVerdict::Undecided
    }
}

// The coordinator's own canned replies never introduce a referent.
fn has_antecedent(history: &[Message], entities: &dyn EntityExtractor) -> bool {
    history.iter().filter(|m| m.role != Role::Coordinator).any(|m| {
        !m.attachments.is_empty()
            || tokenize(&m.content).iter().any(|t| is_content(t))
            || !entities.entities(&m.content).is_empty()
    })
}
