//! Plugin substrate: the agent interface, registration, hooks, sandboxed
//! invocation and the out-of-process adapter.

mod agent;
pub mod approval;
pub mod hooks;
mod invoke;
pub mod jail;
pub mod plugin;
mod registry;

pub use agent::{Agent, AgentContext, AgentError, AgentOutput, AgentTask, ApprovalGate, ArtifactSink, ArtifactDir, StepInput};
pub use approval::{ApprovalToken, TokenError, TokenStore};
pub use hooks::{Hook, HookPayload, HookRegistry, HookRejection, HookStage};
pub use invoke::{invoke, InvokeEnv, PauseBudget, Signal};
pub use jail::{Jail, JailError};
pub use registry::{Registry, RegistryError};
