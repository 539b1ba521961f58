//! Graph-based LLM agent workflows whose tool calls run in parallel on a
//! pluggable task executor.

pub mod dispatch;
pub mod executor;
pub mod graph;
pub mod llm;
pub mod mdsim;
pub mod message;
pub mod tools;
pub mod workflows;
