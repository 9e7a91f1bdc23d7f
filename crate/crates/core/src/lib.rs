//! Interactive chain-of-repair engine.
//!
//! A code learner writes (or receives) a candidate program, the sandbox runs
//! it against the task's tests, a code teacher turns the execution report into
//! a natural-language repair instruction, and the learner applies it. The loop
//! stops on the first passing execution or after a bounded number of turns.
//!
//! Modules:
//! - [`corpus`]: tasks, repair benchmark entries and their JSONL formats
//! - [`sandbox`]: child-process execution and traceback classification
//! - [`agents`]: chat models, prompt templates, learner/teacher roles
//! - [`repair`]: the episode state machine and the batch runner
//! - [`metrics`]: pass@k and report aggregation
//! - [`builder`]: repair-benchmark construction and statistics

pub mod agents;
pub mod builder;
pub mod corpus;
pub mod metrics;
pub mod repair;
pub mod sandbox;

mod pool;

pub use agents::{ChatModel, ChatModelConfig, CoRText, PromptMode, TemplateCatalog};
pub use corpus::{Category, CodeErrorEntry, CodeErrorSet, ErrorMessage, Task, TaskSet, TestSuite};
pub use repair::{RepairConfig, RepairMode, Trajectory};
pub use sandbox::{ErrorType, ExecLimits, ExecutionReport, RunnerConfig, Sandbox, Verdict};
