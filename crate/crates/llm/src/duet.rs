//! Two-agent question/answer loop and transcript summarization.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatClient, ChatError, ChatMessage, ChatRequest, DUET_TEMPERATURE};
use crate::prompts;

pub const DEFAULT_TURNS: usize = 10;
pub const ASKER_PREFIX: &str = "Asker: ";
pub const RESPONDER_PREFIX: &str = "Responder: ";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentPersona {
    pub name: String,
    pub system_prompt: String,
}

impl AgentPersona {
    pub fn new(name: impl Into<String>, system_prompt: impl Into<String>) -> Self {
        Self { name: name.into(), system_prompt: system_prompt.into() }
    }

    pub fn chef() -> Self {
        Self::new("chef", prompts::CHEF_PERSONA)
    }

    pub fn engineer() -> Self {
        Self::new("engineer", prompts::ENGINEER_PERSONA)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Transcript {
    pub asker: String,
    pub responder: String,
    pub turns: Vec<Turn>,
    pub summary: Option<String>,
    pub key_points: Option<String>,
    pub takeaway: Option<String>,
}

impl Transcript {
    pub fn original_question(&self) -> Option<&str> {
        self.turns.first().map(|t| t.question.as_str())
    }

    /// Conversation as alternating `Asker:`/`Responder:` blocks.
    pub fn conversation_text(&self) -> String {
        self.turns
            .iter()
            .map(|t| format!("{ASKER_PREFIX}{}\n\n{RESPONDER_PREFIX}{}", t.question, t.answer))
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    /// Conversation followed by summary, key points and takeaway, as fed to
    /// downstream graph generation.
    pub fn full_text(&self) -> String {
        let mut out = self.conversation_text();
        for part in [&self.summary, &self.key_points, &self.takeaway].into_iter().flatten() {
            out.push_str("\n\n");
            out.push_str(part);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcripts serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DuetError {
    #[error("invalid duet: {0}")]
    Precondition(String),
    #[error("completion failed after {} turn(s): {source}", partial.turns.len())]
    Chat {
        source: ChatError,
        partial: Box<Transcript>,
    },
}

fn ask(llm: &dyn ChatClient, persona: &AgentPersona, history: Vec<ChatMessage>) -> Result<String, ChatError> {
    let mut messages = vec![ChatMessage::system(&persona.system_prompt)];
    messages.extend(history);
    llm.complete(&ChatRequest::new(messages).with_temperature(DUET_TEMPERATURE))
}

/// Responder answers `question`; then for each of `turns` rounds the asker
/// challenges the latest exchange and the responder answers again.
/// Uses exactly `2 * turns + 1` completions.
pub fn run_agent_duet(
    question: &str,
    asker: &AgentPersona,
    responder: &AgentPersona,
    turns: usize,
    llm: &dyn ChatClient,
) -> Result<Transcript, DuetError> {
    if question.trim().is_empty() {
        return Err(DuetError::Precondition("opening question is empty".into()));
    }
    for p in [asker, responder] {
        if p.system_prompt.trim().is_empty() {
            return Err(DuetError::Precondition(format!("persona {} has no system prompt", p.name)));
        }
    }
    let mut transcript = Transcript {
        asker: asker.name.clone(),
        responder: responder.name.clone(),
        ..Default::default()
    };
    // the responder sees the whole conversation so far
    let mut history: Vec<ChatMessage> = Vec::new();
    let mut current = question.to_string();
    for round in 0..=turns {
        if round > 0 {
            let last = transcript.turns.last().expect("previous turn");
            let prompt = prompts::follow_up_prompt(&last.question, &last.answer);
            current = ask(llm, asker, vec![ChatMessage::user(prompt)])
                .map_err(|source| DuetError::Chat { source, partial: Box::new(transcript.clone()) })?
                .trim()
                .to_string();
        }
        history.push(ChatMessage::user(&current));
        let answer = ask(llm, responder, history.clone())
            .map_err(|source| DuetError::Chat { source, partial: Box::new(transcript.clone()) })?
            .trim()
            .to_string();
        history.push(ChatMessage::assistant(&answer));
        transcript.turns.push(Turn { question: current.clone(), answer });
    }
    Ok(transcript)
}

/// Fills summary, key points and takeaway (three completions, in that
/// order). On failure the transcript is left unchanged.
pub fn summarize_transcript(transcript: &mut Transcript, llm: &dyn ChatClient) -> Result<(), DuetError> {
    let question = transcript
        .original_question()
        .ok_or_else(|| DuetError::Precondition("transcript has no turns".into()))?
        .to_string();
    let conversation = transcript.conversation_text();
    let call = |prompt: String| {
        llm.complete(&ChatRequest::prompt(None, prompt))
            .map(|t| t.trim().to_string())
            .map_err(|source| DuetError::Chat { source, partial: Box::new(transcript.clone()) })
    };
    let summary = call(prompts::conversation_summary_prompt(&conversation))?;
    let key_points = call(prompts::key_points_prompt(&conversation))?;
    let takeaway = {
        let text = format!("{conversation}\n\n{}", prompts::takeaway_prompt(&question));
        call(text)?
    };
    transcript.summary = Some(summary);
    transcript.key_points = Some(key_points);
    transcript.takeaway = Some(takeaway);
    Ok(())
}
