//! Domain model for the Autonoma workflow runtime.
//!
//! Everything in this crate is pure: plan validation and dependency
//! layering, the workflow state machine and its event-sourced replay,
//! coordinator rule matching, agent manifests and grant linting, the
//! hash-chained audit record format, request fingerprints, the LAN address
//! filter and metric extraction from event logs.
//!
//! The crate is `no_std` and only needs `alloc`. IO, async execution, the
//! network gateway and the CLIs live in the `autonoma` crate.

#![no_std]

extern crate alloc;

pub mod audit;
pub mod canonical;
pub mod event;
pub mod fingerprint;
pub mod lang;
pub mod manifest;
pub mod message;
pub mod metrics;
pub mod netfilter;
pub mod plan;
pub mod policy;
pub mod report;
pub mod rules;
pub mod schema;
pub mod select;
pub mod state;

pub use event::{CloseReason, EventBody, FailureCause, HandoffRecord, Intent, IntentClass, TaskOutcome, TaskResult, WorkflowEvent};
pub use lang::detect_language;
pub use manifest::{AgentManifest, Capability, PrivilegeGrants};
pub use message::{ArtifactRef, Lang, Message, Role};
pub use plan::{dependency_levels, validate_plan, Plan, PlanError, PlanStep, StepId, ValidatedPlan};
pub use policy::{health_check, ExecutionPolicy, Health};
pub use state::{replay, transition, ReplayError, TaskPhase, TaskStatus, TransitionError, WorkflowState, WorkflowStatus};
