//! Intent gating in front of the planner.

use std::sync::Arc;

use autonoma_core::fingerprint::ChatMessage;
use autonoma_core::rules::{tokenize, EntityExtractor, NoEntities, PatternSet, RuleSet, RuleVerdict};
use autonoma_core::{detect_language, Intent, IntentClass, Lang, Message};

use crate::provider::{CompletionRequest, Provider, RoleContext};

pub const DEFAULT_HARMFUL_PATTERNS: &str = include_str!("../patterns/harmful.txt");
pub const DEFAULT_GREETING_PATTERNS: &str = include_str!("../patterns/greetings.txt");

/// Clarifications asked per prompt before an ambiguous turn is answered as
/// small talk.
pub const MAX_CLARIFICATIONS: u32 = 2;

const HISTORY_WINDOW: usize = 6;

const CLASSIFIER_PROMPT: &str = "You are the coordinator of a task-automation system. Classify the user's \
latest message as exactly one of: task, casual_chat, ambiguous, harmful. A task is a concrete request the \
system can plan and execute. Answer with the label only.";

pub struct Coordinator {
    rules: RuleSet,
    entities: Arc<dyn EntityExtractor + Send + Sync>,
    provider: Arc<Provider>,
}

impl Coordinator {
    pub fn new(rules: RuleSet, provider: Arc<Provider>) -> Self {
        Coordinator { rules, entities: Arc::new(NoEntities), provider }
    }

    /// Coordinator with the bundled pattern files.
    pub fn with_defaults(provider: Arc<Provider>) -> Self {
        let rules = RuleSet::new(PatternSet::parse(DEFAULT_HARMFUL_PATTERNS), PatternSet::parse(DEFAULT_GREETING_PATTERNS));
        Coordinator::new(rules, provider)
    }

    pub fn with_entities(mut self, entities: Arc<dyn EntityExtractor + Send + Sync>) -> Self {
        self.entities = entities;
        self
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    /// Rule cascade first, provider second. `clarifications` is the number
    /// already asked for this prompt.
    pub async fn classify(&self, message: &Message, history: &[Message], clarifications: u32) -> Intent {
        let intent = match self.rules.evaluate(message, history, self.entities.as_ref()) {
            RuleVerdict::Decided(intent) => intent,
            RuleVerdict::Undecided => self.ask_provider(message, history).await,
        };
        if intent.class == IntentClass::Ambiguous && clarifications >= MAX_CLARIFICATIONS {
            let mut cues = intent.cues;
            cues.push("clarification_cap".into());
            return Intent { class: IntentClass::CasualChat, confidence: intent.confidence, cues };
        }
        intent
    }

    async fn ask_provider(&self, message: &Message, history: &[Message]) -> Intent {
        let mut messages = vec![ChatMessage::system(CLASSIFIER_PROMPT)];
        let start = history.len().saturating_sub(HISTORY_WINDOW);
        for m in &history[start..] {
            messages.push(match m.role {
                autonoma_core::Role::User => ChatMessage::user(m.content.clone()),
                _ => ChatMessage::assistant(m.content.clone()),
            });
        }
        messages.push(ChatMessage::user(message.content.clone()));
        let req = CompletionRequest::new(RoleContext::Coordinator, messages);
        match self.provider.complete(&req).await {
            Ok(c) => match parse_label(&c.text) {
                Some(class) => Intent { class, confidence: 0.5, cues: vec![format!("provider:{}", class.as_str())] },
                None => Intent { class: IntentClass::Ambiguous, confidence: 0.0, cues: vec!["provider:unparsed".into()] },
            },
            Err(e) => {
                tracing::warn!(error = %e, "coordinator provider unavailable");
                Intent { class: IntentClass::Ambiguous, confidence: 0.0, cues: vec!["provider:unavailable".into()] }
            }
        }
    }
}

/// First recognizable label token in a model answer.
fn parse_label(text: &str) -> Option<IntentClass> {
    if let Some(c) = IntentClass::parse(text) {
        return Some(c);
    }
    let tokens = tokenize(text);
    tokens.iter().find_map(|t| IntentClass::parse(t)).or_else(|| {
        tokens.windows(2).find_map(|w| IntentClass::parse(&format!("{}_{}", w[0], w[1])))
    })
}

/// Language for replies: the user's when it is en or ar, otherwise en.
pub fn reply_lang(text: &str) -> Lang {
    match detect_language(text) {
        Lang::Ar => Lang::Ar,
        _ => Lang::En,
    }
}

/// Canned coordinator replies. Tasks get an acknowledgment; the final
/// answer comes from the reporter.
pub fn reply_text(class: IntentClass, lang: Lang) -> &'static str {
    match (class, lang == Lang::Ar) {
        (IntentClass::CasualChat, false) => "Hello! I can research, write and run code, and manage files for you. What would you like to do?",
        (IntentClass::CasualChat, true) => "مرحباً! يمكنني البحث وكتابة الشيفرات وتشغيلها وإدارة الملفات. ماذا تريد أن أفعل؟",
        (IntentClass::Harmful, false) => "Sorry, I can't help with that request.",
        (IntentClass::Harmful, true) => "عذراً، لا أستطيع المساعدة في هذا الطلب.",
        (IntentClass::Ambiguous, false) => "Could you tell me a bit more about what you need, and which file or topic you mean?",
        (IntentClass::Ambiguous, true) => "هل يمكنك توضيح ما تحتاجه بالتحديد، وأي ملف أو موضوع تقصد؟",
        (IntentClass::Task, false) => "On it. I'm planning the steps now.",
        (IntentClass::Task, true) => "حسناً، أقوم الآن بتخطيط الخطوات.",
    }
}
