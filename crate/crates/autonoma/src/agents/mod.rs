//! Reference worker agents.

pub mod coder;
pub mod echo;
pub mod file_manager;
pub mod reporter;
pub mod researcher;
pub mod stubs;

pub use coder::{run_script, CoderAgent, ExecError, ExecResult, ScriptLang};
pub use echo::EchoAgent;
pub use file_manager::{execute_fileop, FileManagerAgent, FileOp, FileOpError, FileOpKind, FileOpResult};
pub use reporter::{compile_report, render_markdown, write_failure_log, ReportError, ReporterAgent};
pub use researcher::{research, Document, FixtureCorpus, Finding, Findings, ResearchError, ResearcherAgent, SearchTool, Snippet};
pub use stubs::{stub_adapter, BrowserAgent, ComputerAgent, StubResult, PLACEHOLDER_PNG};

pub const CAP_REPORT: &str = "report";
pub const CAP_COMPUTER: &str = "computer_use";
pub const CAP_ECHO: &str = "echo";
