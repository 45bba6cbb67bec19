pub mod agentkit;
pub mod agents;
pub mod bench;
pub mod clock;
pub mod config;
pub mod coordinator;
pub mod engine;
pub mod gateway;
pub mod journal;
pub mod planner;
pub mod provider;
pub mod store;
pub mod supervisor;
