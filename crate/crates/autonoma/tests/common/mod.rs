#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use autonoma::agentkit::{Agent, AgentContext, AgentError, AgentOutput, AgentTask, Registry};
use autonoma::clock::RuntimeClock;
use autonoma::journal::Journal;
use autonoma_core::{
    validate_plan, AgentManifest, EventBody, HandoffRecord, Intent, IntentClass, Lang, Message, Plan, PlanStep, Role,
    ValidatedPlan,
};

/// What an attempt does.
#[derive(Debug, Clone, PartialEq)]
pub enum Behave {
    Ok,
    Fail,
    /// Never acknowledges.
    NoAck,
    /// Runs forever without heartbeats.
    Hang,
    /// Works for the given time, heartbeating every `beat` ms.
    Work { ms: u64, beat: u64 },
    /// Requests approval for the given digest, then succeeds.
    Approve(String),
}

/// Agent whose attempt `n` follows `script[n-1]` (the last entry repeats).
pub struct ScriptedAgent {
    manifest: AgentManifest,
    script: Vec<Behave>,
    pub running: Arc<AtomicUsize>,
    pub peak: Arc<AtomicUsize>,
    pub calls: Arc<Mutex<Vec<(String, u32)>>>,
}

impl ScriptedAgent {
    pub fn new(id: &str, caps: &[&str], script: Vec<Behave>) -> Self {
        let mut manifest = AgentManifest::new(id, caps);
        manifest.heartbeat_capable = true;
        ScriptedAgent {
            manifest,
            script,
            running: Arc::new(AtomicUsize::new(0)),
            peak: Arc::new(AtomicUsize::new(0)),
            calls: Arc::new(Mutex::new(Vec::new())),
        }
    }

    fn behave(&self, attempt: u32) -> Behave {
        let i = (attempt as usize).saturating_sub(1).min(self.script.len() - 1);
        self.script[i].clone()
    }
}

struct Running(Arc<AtomicUsize>);

impl Drop for Running {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

#[async_trait]
impl Agent for ScriptedAgent {
    fn manifest(&self) -> &AgentManifest {
        &self.manifest
    }

    async fn acknowledge(&self, task: &AgentTask) -> Result<(), AgentError> {
        if self.behave(task.attempt) == Behave::NoAck {
            std::future::pending::<()>().await;
        }
        Ok(())
    }

    async fn run(&self, task: AgentTask, ctx: AgentContext) -> Result<AgentOutput, AgentError> {
        let now = self.running.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        let _guard = Running(self.running.clone());
        self.calls.lock().unwrap().push((task.step_id.to_string(), task.attempt));
        match self.behave(task.attempt) {
            Behave::Ok | Behave::NoAck => Ok(AgentOutput::text(format!("{} done", task.step_id))),
            Behave::Fail => Err(AgentError::failed("scripted failure")),
            Behave::Hang => {
                std::future::pending::<()>().await;
                unreachable!()
            }
            Behave::Work { ms, beat } => {
                let mut left = ms;
                while left > 0 {
                    let step = left.min(beat);
                    tokio::time::sleep(Duration::from_millis(step)).await;
                    ctx.heartbeat();
                    left -= step;
                }
                Ok(AgentOutput::text(format!("{} worked", task.step_id)))
            }
            Behave::Approve(digest) => {
                let token = ctx.request_approval(&task.step_id, "delete things", &digest).await?;
                Ok(AgentOutput::text(format!("approved with {}", token.action_digest)))
            }
        }
    }
}

pub fn plan(steps: &[(&str, &str, &[&str])]) -> ValidatedPlan {
    let steps = steps.iter().map(|(id, cap, deps)| PlanStep::new(id, &format!("do {id}"), cap, deps)).collect();
    let plan = Plan { thought: "test plan".into(), steps, created_by: "test".into() };
    let vocab = plan.steps.iter().map(|s| s.required_capability.clone()).collect();
    validate_plan(plan, &vocab).expect("valid plan")
}

pub fn registry(agents: Vec<Arc<dyn Agent>>) -> Arc<Registry> {
    let r = Registry::new();
    for a in agents {
        r.register(a).expect("register");
    }
    Arc::new(r)
}

/// A journal advanced to `Planning` with the planner handoff recorded.
pub fn planning_journal(clock: RuntimeClock) -> Journal {
    let j = Journal::new("c-test", clock);
    let msg = Message::new("m1", Role::User, "do the thing", Lang::En, 0);
    j.emit(EventBody::PromptReceived { message: msg }).unwrap();
    j.emit(EventBody::IntentClassified {
        intent: Intent { class: IntentClass::Task, confidence: 1.0, cues: vec![] },
        reply: None,
    })
    .unwrap();
    j.emit(EventBody::HandoffToPlanner { payload_digest: "d".into() }).unwrap();
    j.emit(EventBody::HandoffRecorded {
        record: HandoffRecord {
            from_role: Role::Coordinator,
            to_role: Role::Planner,
            payload_digest: "d".into(),
            accepted: true,
            timestamp: 0,
        },
        step_id: None,
        agent_id: None,
    })
    .unwrap();
    j
}

pub fn kinds(j: &Journal) -> Vec<&'static str> {
    j.events().iter().map(|e| e.kind()).collect()
}

pub mod gw {
    use std::net::SocketAddr;
    use std::sync::Arc;
    use std::time::Duration;

    use autonoma::agentkit::{Agent, Registry, TokenStore};
    use autonoma::coordinator::Coordinator;
    use autonoma::engine::{Engine, EngineSettings};
    use autonoma::gateway::{Gateway, PairingRegistry, ServerFrame};
    use autonoma::planner::FixedPlanner;
    use autonoma::provider::{CannedBackend, Provider};
    use autonoma::store::Store;
    use autonoma_core::netfilter::default_allowlist;
    use autonoma_core::{ExecutionPolicy, Plan, PlanStep, WorkflowEvent};
    use futures::{SinkExt, StreamExt};
    use tokio::net::TcpListener;
    use tokio_tungstenite::tungstenite::Message as WsMsg;

    pub type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

    pub fn one_step(cap: &str) -> Plan {
        Plan { thought: "t".into(), steps: vec![PlanStep::new("s1", "say hi", cap, &[])], created_by: "fixed".into() }
    }

    /// Policy with short timings for wall-clock tests.
    pub fn quick_policy() -> ExecutionPolicy {
        let mut p = ExecutionPolicy::default();
        p.heartbeat_interval_ms = 200;
        p.backoff.initial_ms = 10;
        p
    }

    pub fn engine(agents: Vec<Arc<dyn Agent>>, plan: Plan, store: Option<Store>) -> Engine {
        engine_with_tokens(agents, plan, store, Arc::new(TokenStore::new()))
    }

    pub fn engine_with_tokens(agents: Vec<Arc<dyn Agent>>, plan: Plan, store: Option<Store>, tokens: Arc<TokenStore>) -> Engine {
        let provider = Arc::new(Provider::single(Arc::new(CannedBackend::new("task"))));
        let registry = Arc::new(Registry::new());
        for a in agents {
            registry.register(a).unwrap();
        }
        let mut b = Engine::builder(
            Arc::new(Coordinator::with_defaults(provider.clone())),
            Arc::new(FixedPlanner::new(plan)),
            provider,
            registry,
        )
        .tokens(tokens)
        .settings(EngineSettings { policy: quick_policy(), pregather_budget: 0, narrative: true });
        if let Some(s) = store {
            b = b.store(s, true);
        }
        b.build().unwrap()
    }

    /// Gateway with default allowlist, 64 KiB body cap and one issued token.
    pub fn gateway(engine: Engine, ttl: Duration) -> (Gateway, String) {
        let pairing = Arc::new(PairingRegistry::new(ttl));
        let token = pairing.issue().token;
        (Gateway::new(engine, default_allowlist(), pairing, 64 * 1024), token)
    }

    pub async fn spawn(g: Gateway) -> SocketAddr {
        let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        tokio::spawn(g.serve(listener, std::future::pending()));
        addr
    }

    pub async fn connect(addr: SocketAddr, id: &str, since: u64, token: &str) -> Ws {
        let url = format!("ws://{addr}/ws/conversations/{id}?since={since}&token={token}");
        tokio_tungstenite::connect_async(url).await.unwrap().0
    }

    /// Next server frame; `None` on close.
    pub async fn next_frame(ws: &mut Ws) -> Option<ServerFrame> {
        loop {
            match tokio::time::timeout(Duration::from_secs(10), ws.next()).await.expect("frame within 10 s")? {
                Ok(WsMsg::Text(t)) => return Some(serde_json::from_str(&t).unwrap()),
                Ok(WsMsg::Close(_)) | Err(_) => return None,
                Ok(_) => continue,
            }
        }
    }

    pub async fn next_event(ws: &mut Ws) -> Option<WorkflowEvent> {
        loop {
            match next_frame(ws).await? {
                ServerFrame::Event { event } => return Some(event),
                _ => continue,
            }
        }
    }

    /// Events up to and including the first `WorkflowClosed`.
    pub async fn until_closed(ws: &mut Ws) -> Vec<WorkflowEvent> {
        let mut out = Vec::new();
        while let Some(e) = next_event(ws).await {
            let done = e.kind() == "WorkflowClosed";
            out.push(e);
            if done {
                break;
            }
        }
        out
    }

    pub async fn send(ws: &mut Ws, json: serde_json::Value) {
        ws.send(WsMsg::Text(json.to_string().into())).await.unwrap();
    }
}
