pub mod corpus;
pub mod decomposition;
pub mod evaluation;
pub mod extraction;
pub mod jury;
pub mod llm;
pub mod logic;
pub mod pipeline;
pub mod prompts;
pub mod reporting;
pub mod retrieval;
pub mod types;
pub mod verification;
