//! Language-model side of kgraph: chat clients, prompt templates, agent
//! duets and the corpus-to-graph extraction pipeline.

pub mod duet;
pub mod gateway;
pub mod http_embed;
pub mod pipeline;
pub mod prompts;

pub use duet::{run_agent_duet, summarize_transcript, AgentPersona, DuetError, Transcript, Turn};
pub use gateway::{
    ChatClient, ChatError, ChatMessage, ChatRequest, ChatRole, HttpChatClient, ProviderConfig, ScriptStep,
    ScriptedChatClient,
};
pub use http_embed::{EmbeddingConfig, HttpEmbeddingProvider};
pub use pipeline::{
    augment_graph, build_corpus_graph, chunk_document, distill_chunk, extract_triples, normalize_quotes, parse_triples,
    retry_failed, run_corpus, strip_markup, triples_to_json, ArtifactStore, AugmentOptions, AugmentOutcome,
    CorpusOptions, CorpusOutcome, DocumentChunk, ExtractionResult, ExtractionStatus, PipelineError, RawContext,
};
