//! Acceptance suite. Runs every top-level criterion and prints one PASS or
//! FAIL line per criterion; exits nonzero if any fails.
//!
//! Run alone with `cargo test -p autonoma --test acceptance`.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr, SocketAddr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use autonoma::agentkit::{Agent, AgentContext, AgentError, AgentOutput, AgentTask, Jail, JailError, TokenStore};
use autonoma::agents::file_manager::{execute_fileop, FileOp, FileOpError, FileOpKind};
use autonoma::agents::{EchoAgent, FileManagerAgent};
use autonoma::bench::{
    bench_engine, conversation_id, expected_completion, generate_workload, run_blocking, BenchConfig, FaultModel,
    Latency, Shape, ShapePolicy,
};
use autonoma::clock::RuntimeClock;
use autonoma::gateway::{PromptAccepted, ServerFrame};
use autonoma::store::{ConversationRecord, Store};
use autonoma::supervisor::{run_workflow, SupervisorEnv};
use autonoma_core::audit::{verify_audit_log, AuditVerdict};
use autonoma_core::manifest::CAP_FILE_OPS;
use autonoma_core::metrics::Metrics;
use autonoma_core::{
    replay, validate_plan, AgentManifest, EventBody, ExecutionPolicy, FailureCause, Lang, Message, Plan, PlanStep,
    Role, StepId, TaskPhase, WorkflowEvent,
};
use axum::body::Body;
use axum::extract::ConnectInfo;
use axum::http::{Method, Request, StatusCode};
use common::gw;
use common::planning_journal;
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use tower::ServiceExt;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("zero-fault totality", zero_fault_totality),
        ("retry math", retry_math),
        ("scheduler oracle", scheduler_oracle),
        ("determinism and replay", determinism_and_replay),
        ("security filter", security_filter),
        ("jail soundness", jail_soundness),
        ("audit integrity", audit_integrity),
        ("persistence", persistence),
        ("gateway latency", gateway_latency),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {}. {name}: {detail} [{secs:.1} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name}: {detail} [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn current_thread(paused: bool) -> tokio::runtime::Runtime {
    let mut b = tokio::runtime::Builder::new_current_thread();
    b.enable_all();
    if paused {
        b.start_paused(true);
    }
    b.build().expect("runtime")
}

fn multi_thread() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread().worker_threads(4).enable_all().build().expect("runtime")
}

fn bench_cmd(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_bench")).args(args).output().expect("bench binary runs")
}

// 1. ---------------------------------------------------------------------

fn zero_fault_totality() -> Outcome {
    let started = Instant::now();
    let out = bench_cmd(&["run", "--n", "500", "--fail", "0", "--shape", "single", "--seed", "42", "--format", "json"]);
    let wall = started.elapsed();
    ensure!(out.status.success(), "bench exited with {}: {}", out.status, String::from_utf8_lossy(&out.stderr));
    let m: Metrics = serde_json::from_slice(&out.stdout).map_err(|e| format!("metrics json: {e}"))?;
    ensure!(m.workflows_total == 500, "{} workflows", m.workflows_total);
    ensure!(m.task_completion_rate == 1.0, "completion {}", m.task_completion_rate);
    ensure!(m.handoff_success_rate == 1.0, "handoff success {}", m.handoff_success_rate);
    ensure!(wall < Duration::from_secs(30), "wall time {:.1} s", wall.as_secs_f64());
    Ok(format!(
        "500/500 completed, handoffs {}/{}, wall {:.2} s",
        m.handoffs_accepted,
        m.handoffs_total,
        wall.as_secs_f64()
    ))
}

// 2. ---------------------------------------------------------------------

fn retry_math() -> Outcome {
    let out = bench_cmd(&[
        "verify", "--n", "500", "--seed", "42", "--fail", "0.1,0.3", "--retries", "0,1,2", "--shapes", "single,chain-3",
    ]);
    let table = String::from_utf8_lossy(&out.stdout).into_owned();
    ensure!(out.status.success(), "bench verify exited with {}:\n{table}", out.status);
    let rows: Vec<Vec<&str>> =
        table.lines().map(|l| l.split_whitespace().collect::<Vec<_>>()).filter(|c| c.len() == 9).skip(1).collect();
    ensure!(rows.len() == 12, "expected 12 grid cells, got {}", rows.len());
    ensure!(rows.iter().all(|r| r[8] == "ok"), "deviation in grid:\n{table}");
    let cell = rows
        .iter()
        .find(|r| r[0] == "chain-3" && r[1] == "0.30" && r[2] == "2")
        .ok_or("no chain-3 f=0.3 r=2 cell")?;
    ensure!(cell[3] == "0.9212", "expected column {} for chain-3 f=0.3 r=2", cell[3]);
    // The same value from the library, independent of the table.
    let w = generate_workload(42, 10, ShapePolicy::Fixed(Shape::Chain(3)));
    let p = expected_completion(&w, &FaultModel::new(0.3, 0.0, Latency::default(), 42).unwrap(), 2);
    // Each step fails only if all three attempts fail.
    ensure!((p - (1.0 - 0.3f64.powi(3)).powi(3)).abs() < 1e-12, "analytic {p}");
    ensure!((p - 0.921_167_317).abs() < 1e-9, "analytic {p}");
    Ok(format!("12/12 cells inside the 99% region; chain-3 f=0.3 r=2 expects {p:.4}, measured {}", cell[4]))
}

// 3. ---------------------------------------------------------------------

/// Fails every attempt of the steps in `failing`.
struct StepAgent {
    manifest: AgentManifest,
    failing: BTreeSet<String>,
}

#[async_trait]
impl Agent for StepAgent {
    fn manifest(&self) -> &AgentManifest {
        &self.manifest
    }

    async fn run(&self, task: AgentTask, _ctx: AgentContext) -> Result<AgentOutput, AgentError> {
        // Yield so independent steps genuinely overlap.
        tokio::task::yield_now().await;
        if self.failing.contains(task.step_id.as_str()) {
            Err(AgentError::failed("scripted failure"))
        } else {
            Ok(AgentOutput::text("ok"))
        }
    }
}

/// `deps[v]` is a bitmask over lower-numbered steps.
fn ordered_dags(n: usize) -> Vec<Vec<u32>> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|v| (0..v).map(move |u| (v, u))).collect();
    (0u64..1 << pairs.len())
        .map(|mask| {
            let mut g = vec![0u32; n];
            for (bit, &(v, u)) in pairs.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    g[v] |= 1 << u;
                }
            }
            g
        })
        .collect()
}

fn dag_plan(g: &[u32]) -> Plan {
    let names: Vec<String> = (0..g.len()).map(|i| format!("n{i}")).collect();
    let steps = (0..g.len())
        .map(|v| {
            let deps: Vec<&str> = (0..g.len()).filter(|&u| g[v] >> u & 1 == 1).map(|u| names[u].as_str()).collect();
            PlanStep::new(&names[v], &format!("step {v}"), "work", &deps)
        })
        .collect();
    Plan { thought: "dag".into(), steps, created_by: "acceptance".into() }
}

fn scheduler_oracle() -> Outcome {
    let vocab = [autonoma_core::Capability::new("work")].into_iter().collect();
    let policy = ExecutionPolicy { retry_limit: 0, max_concurrency: 4, per_agent_concurrency: 4, ..ExecutionPolicy::default() };
    let rt = current_thread(true);
    let mut runs = 0u64;
    let mut graphs = 0u64;
    let mut skipped_seen = 0u64;
    rt.block_on(async {
        for n in 1..=5usize {
            for g in ordered_dags(n) {
                graphs += 1;
                let plan = validate_plan(dag_plan(&g), &vocab).map_err(|e| format!("{g:?}: {e}"))?;
                // Longest-path depth, computed in index order.
                let mut depth = vec![0usize; n];
                for v in 0..n {
                    depth[v] = (0..v).filter(|&u| g[v] >> u & 1 == 1).map(|u| depth[u] + 1).max().unwrap_or(0);
                }
                let levels_want: Vec<BTreeSet<String>> = (0..=depth.iter().copied().max().unwrap())
                    .map(|d| (0..n).filter(|&v| depth[v] == d).map(|v| format!("n{v}")).collect())
                    .collect();
                for failing in 0u32..1 << n {
                    runs += 1;
                    let names: BTreeSet<String> = (0..n).filter(|v| failing >> v & 1 == 1).map(|v| format!("n{v}")).collect();
                    let mut manifest = AgentManifest::new("worker", &["work"]);
                    manifest.heartbeat_capable = true;
                    let agent: Arc<dyn Agent> = Arc::new(StepAgent { manifest, failing: names });
                    let j = planning_journal(RuntimeClock::logical());
                    let env = SupervisorEnv::new(j.clone(), common::registry(vec![agent]), policy);
                    run_workflow(&plan, env).await.map_err(|e| format!("{g:?}/{failing:b}: {e}"))?;
                    let events = j.events();

                    let levels_got = events.iter().find_map(|e| match &e.body {
                        EventBody::PlanProposed { levels, .. } => {
                            Some(levels.iter().map(|l| l.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>()).collect::<Vec<_>>())
                        }
                        _ => None,
                    });
                    ensure!(levels_got.as_ref() == Some(&levels_want), "{g:?}: levels {levels_got:?}, want {levels_want:?}");

                    // Dispatch only after every dependency succeeded.
                    let mut succeeded = BTreeSet::new();
                    for e in &events {
                        match &e.body {
                            EventBody::TaskSucceeded { step_id, .. } => {
                                succeeded.insert(step_id.to_string());
                            }
                            EventBody::TaskDispatched { step_id, .. } => {
                                let v: usize = step_id.as_str()[1..].parse().unwrap();
                                for u in (0..n).filter(|&u| g[v] >> u & 1 == 1) {
                                    ensure!(succeeded.contains(&format!("n{u}")), "{g:?}/{failing:b}: n{v} before n{u}");
                                }
                            }
                            _ => {}
                        }
                    }

                    // Oracle: a step runs iff all its dependencies ran and
                    // succeeded; it is Skipped otherwise.
                    let mut ran = vec![false; n];
                    let st = j.state();
                    for v in 0..n {
                        ran[v] = (0..n).filter(|&u| g[v] >> u & 1 == 1).all(|u| ran[u] && failing >> u & 1 == 0);
                        let want = match (ran[v], failing >> v & 1 == 1) {
                            (false, _) => TaskPhase::Skipped,
                            (true, true) => TaskPhase::Failed,
                            (true, false) => TaskPhase::Succeeded,
                        };
                        skipped_seen += u64::from(want == TaskPhase::Skipped);
                        let got = st.task_states.get(&StepId::new(format!("n{v}"))).map(|t| t.phase);
                        ensure!(got == Some(want), "{g:?}/{failing:b}: n{v} is {got:?}, want {want:?}");
                    }
                    let replayed = replay(&events).map_err(|e| e.to_string())?;
                    ensure!(replayed == st, "{g:?}/{failing:b}: replay differs from live state");
                }
            }
        }
        Ok::<(), String>(())
    })?;
    ensure!(graphs == 1 + 2 + 8 + 64 + 1024, "{graphs} graphs");
    ensure!(runs == 2 + 8 + 64 + 1024 + 32768, "{runs} runs");
    Ok(format!("{graphs} DAGs, {runs} supervised runs, {skipped_seen} skipped steps checked"))
}

// 4. ---------------------------------------------------------------------

fn tree(root: &Path) -> BTreeMap<PathBuf, Option<Vec<u8>>> {
    let mut out = BTreeMap::new();
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Option<Vec<u8>>>) {
        let Ok(entries) = std::fs::read_dir(dir) else { return };
        for entry in entries.flatten() {
            let path = entry.path();
            let rel = path.strip_prefix(root).unwrap().to_path_buf();
            let meta = std::fs::symlink_metadata(&path).unwrap();
            if meta.file_type().is_symlink() {
                let target = std::fs::read_link(&path).unwrap();
                out.insert(rel, Some(format!("-> {}", target.display()).into_bytes()));
            } else if meta.is_dir() {
                out.insert(rel, None);
                walk(root, &path, out);
            } else {
                out.insert(rel, Some(std::fs::read(&path).unwrap()));
            }
        }
    }
    walk(root, root, &mut out);
    out
}

fn determinism_and_replay() -> Outcome {
    let w = generate_workload(2024, 200, ShapePolicy::Mixed);
    let fault = FaultModel::new(0.2, 0.02, Latency::Uniform { lo: 20, hi: 300 }, 2024).unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut runs = Vec::new();
    for d in &dirs {
        let cfg = BenchConfig { store: Some(Store::open(d.path()).unwrap()), ..BenchConfig::default() };
        runs.push(run_blocking(&w, &fault, &cfg).map_err(|e| e.to_string())?);
    }
    let bytes = |logs: &[Vec<WorkflowEvent>]| -> String {
        logs.iter().flatten().map(|e| serde_json::to_string(e).unwrap() + "\n").collect()
    };
    ensure!(bytes(&runs[0].logs) == bytes(&runs[1].logs), "event logs differ between equal-seed runs");
    let (a, b) = (tree(dirs[0].path()), tree(dirs[1].path()));
    ensure!(a == b, "persisted trees differ between equal-seed runs");
    let files = a.values().filter(|v| v.is_some()).count();

    // Replay of each persisted log reproduces the live final state.
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let cfg = BenchConfig { store: Some(store.clone()), ..BenchConfig::default() };
    let w = generate_workload(7, 100, ShapePolicy::Mixed);
    let fault = FaultModel::new(0.3, 0.05, Latency::default(), 7).unwrap();
    let checked = current_thread(true).block_on(async {
        let engine = bench_engine(&w, &fault, &cfg).map_err(|e| e.to_string())?;
        let mut checked = 0;
        for spec in &w {
            let conv = engine.new_conversation_with_id(&conversation_id(7, spec.index)).map_err(|e| e.to_string())?;
            engine.prompt(&conv, &spec.prompt).await.map_err(|e| e.to_string())?;
            let (_, _, events) = store.load_conversation(&conv.id()).map_err(|e| e.to_string())?;
            ensure!(events == conv.journal().events(), "{}: persisted log differs from live log", conv.id());
            let replayed = replay(&events).map_err(|e| e.to_string())?;
            ensure!(replayed == conv.journal().state(), "{}: replayed state differs", conv.id());
            checked += 1;
        }
        Ok::<_, String>(checked)
    })?;
    Ok(format!("2 x 200 workflows byte-identical ({files} persisted files); {checked} replays match live state"))
}

// 5. ---------------------------------------------------------------------

/// Private and loopback IPv4, decided from the octets.
fn lan_v4(a: Ipv4Addr) -> bool {
    let o = a.octets();
    o[0] == 10 || o[0] == 127 || (o[0] == 172 && (16..32).contains(&o[1])) || (o[0] == 192 && o[1] == 168)
}

fn is_lan(ip: IpAddr) -> bool {
    match ip {
        IpAddr::V4(a) => lan_v4(a),
        IpAddr::V6(a) => a.to_ipv4_mapped().map(lan_v4).unwrap_or(false),
    }
}

fn non_lan_sample(n: usize) -> Vec<IpAddr> {
    let edges: Vec<IpAddr> = [
        "9.255.255.255", "11.0.0.0", "126.255.255.255", "128.0.0.0", "172.15.255.255", "172.32.0.0", "192.167.255.255",
        "192.169.0.0", "0.0.0.0", "255.255.255.255", "169.254.1.1", "100.64.0.1", "::", "fe80::1", "fc00::1",
        "2001:db8::1", "::ffff:8.8.8.8", "::ffff:172.32.0.1",
    ]
    .iter()
    .map(|s| s.parse().unwrap())
    .collect();
    let mut rng = ChaCha20Rng::seed_from_u64(0x5eed);
    let mut out = edges;
    while out.len() < n {
        let ip = match out.len() % 3 {
            0 => IpAddr::V4(Ipv4Addr::from(rng.random::<u32>())),
            1 => IpAddr::V6(Ipv4Addr::from(rng.random::<u32>()).to_ipv6_mapped()),
            _ => IpAddr::V6(Ipv6Addr::from(rng.random::<u128>())),
        };
        if !is_lan(ip) && ip != IpAddr::V6(Ipv6Addr::LOCALHOST) {
            out.push(ip);
        }
    }
    out
}

fn request(ip: IpAddr, method: Method, uri: &str, token: Option<&str>, body: Option<String>, ws: bool) -> Request<Body> {
    let mut b = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        b = b.header("authorization", format!("Bearer {t}"));
    }
    if body.is_some() {
        b = b.header("content-type", "application/json");
    }
    if ws {
        b = b
            .header("connection", "upgrade")
            .header("upgrade", "websocket")
            .header("sec-websocket-version", "13")
            .header("sec-websocket-key", "dGhlIHNhbXBsZSBub25jZQ==");
    }
    let mut req = b.body(body.map(Body::from).unwrap_or_else(Body::empty)).unwrap();
    req.extensions_mut().insert(ConnectInfo(SocketAddr::new(ip, 40000)));
    req
}

fn security_filter() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let engine = gw::engine(vec![Arc::new(EchoAgent::default())], gw::one_step("echo"), Some(store));
    let (g, token) = gw::gateway(engine.clone(), Duration::from_secs(600));
    let router = g.router();
    let lan: IpAddr = "192.168.1.42".parse().unwrap();
    let sample = non_lan_sample(10_000);
    ensure!(sample.iter().all(|ip| !is_lan(*ip)), "sample contains a LAN address");

    multi_thread().block_on(async {
        // A conversation to aim at, created from the LAN.
        let prompt = serde_json::json!({ "text": "echo hello" }).to_string();
        let resp = router.clone().oneshot(request(lan, Method::POST, "/api/prompt", Some(&token), Some(prompt), false)).await.unwrap();
        ensure!(resp.status() == StatusCode::ACCEPTED, "LAN prompt got {}", resp.status());
        let body = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
        let id = serde_json::from_slice::<PromptAccepted>(&body).unwrap().conversation_id;
        let conv = engine.conversation(&id).unwrap();
        while conv.is_busy() {
            tokio::time::sleep(Duration::from_millis(5)).await;
        }

        let audit = engine.audit().expect("audit enabled").clone();
        let audit_before = audit.len();
        let files_before = tree(dir.path());
        let binding_before = g.pairing().session(&token).unwrap().bound_client;

        let mut accepted = 0;
        for (i, ip) in sample.iter().enumerate() {
            let text = serde_json::json!({ "text": format!("probe {i}") }).to_string();
            let follow = serde_json::json!({ "conversation_id": id, "text": "again" }).to_string();
            let approval = serde_json::json!({ "action_digest": "0".repeat(64), "approved": true }).to_string();
            let req = match i % 7 {
                0 => request(*ip, Method::POST, "/api/prompt", Some(&token), Some(text), false),
                1 => request(*ip, Method::POST, "/api/prompt", Some(&token), Some(follow), false),
                2 => request(*ip, Method::GET, "/api/conversations", Some(&token), None, false),
                3 => request(*ip, Method::GET, &format!("/api/conversations/{id}"), Some(&token), None, false),
                4 => request(*ip, Method::POST, &format!("/api/approvals/{id}"), Some(&token), Some(approval), false),
                5 => request(*ip, Method::GET, &format!("/ws/conversations/{id}?token={token}"), None, None, true),
                _ => request(*ip, Method::POST, "/api/prompt", None, Some("{broken".into()), false),
            };
            let status = router.clone().oneshot(req).await.unwrap().status();
            if status != StatusCode::FORBIDDEN {
                accepted += 1;
            }
        }
        // Anything spawned by an accepted request would show up by now.
        tokio::time::sleep(Duration::from_millis(200)).await;
        let writes = tree(dir.path()) != files_before;
        let audit_entries = audit.len() - audit_before;
        let rebound = g.pairing().session(&token).unwrap().bound_client != binding_before;
        ensure!(
            accepted == 0 && !writes && audit_entries == 0 && !rebound,
            "accepted {accepted}, storage changed {writes}, audit entries {audit_entries}, token rebound {rebound}"
        );

        // The same instruments see a LAN request.
        let follow = serde_json::json!({ "conversation_id": id, "text": "echo again" }).to_string();
        let resp = router.clone().oneshot(request(lan, Method::POST, "/api/prompt", Some(&token), Some(follow), false)).await.unwrap();
        ensure!(resp.status() == StatusCode::ACCEPTED, "LAN follow-up got {}", resp.status());
        while conv.is_busy() {
            tokio::time::sleep(Duration::from_millis(5)).await;
        }
        ensure!(audit.len() > audit_before && tree(dir.path()) != files_before, "LAN control left no trace");
        Ok(format!("{} non-LAN requests: 0 accepted, 0 storage writes, 0 audit entries", sample.len()))
    })
}

// 6. ---------------------------------------------------------------------

const SECRET: &str = "TOPSECRET";

/// `<tmp>/jail` plus decoys around it, and symlinks that lead out.
fn jail_fixture(tmp: &Path) -> Jail {
    let jail_dir = tmp.join("jail");
    if jail_dir.exists() {
        std::fs::remove_dir_all(&jail_dir).unwrap();
    }
    if !tmp.join("outside").exists() {
        std::fs::create_dir_all(tmp.join("outside/dir")).unwrap();
        std::fs::write(tmp.join("outside/secret.txt"), SECRET).unwrap();
        std::fs::write(tmp.join("outside/dir/inner.txt"), SECRET).unwrap();
        std::fs::write(tmp.join("sibling.txt"), SECRET).unwrap();
        std::fs::create_dir_all(tmp.join("jailx")).unwrap();
        std::fs::write(tmp.join("jailx/evil.txt"), SECRET).unwrap();
    }
    std::fs::create_dir_all(jail_dir.join("sub")).unwrap();
    std::fs::write(jail_dir.join("a.txt"), "inside").unwrap();
    std::fs::write(jail_dir.join("sub/b.txt"), "inside").unwrap();
    #[cfg(unix)]
    {
        use std::os::unix::fs::symlink;
        symlink(tmp.join("outside"), jail_dir.join("link_out")).unwrap();
        symlink(tmp.join("outside/secret.txt"), jail_dir.join("link_file")).unwrap();
        symlink(tmp, jail_dir.join("link_parent")).unwrap();
        symlink("../outside", jail_dir.join("link_rel")).unwrap();
        symlink("../outside/nothing_yet.txt", jail_dir.join("link_dangling")).unwrap();
        symlink("sub", jail_dir.join("link_in")).unwrap();
        symlink("../..", jail_dir.join("sub/up2")).unwrap();
        symlink("loop", jail_dir.join("loop")).unwrap();
    }
    Jail::new(&jail_dir).unwrap()
}

fn adversarial_paths() -> Vec<String> {
    let mut v: Vec<String> = [
        "..", "../", "../outside/secret.txt", "../../etc/passwd", "/etc/passwd", "/", "//etc/passwd", "/tmp/x",
        "\\etc\\passwd", "..\\outside\\secret.txt", "sub\\..\\..\\outside", "sub/../../outside/secret.txt",
        "sub/../../../x", "./../outside", "a/b/../../../outside", "sub/./../../outside", "sub//..//..//outside",
        "../jailx/evil.txt", "../jail/../outside/secret.txt", "../sibling.txt", "../outside/dir", "../outside/dir/",
        "a.txt/../../outside/secret.txt", "link_in/../../outside/secret.txt", "link_out", "link_out/", "link_out/.",
        "link_out/secret.txt", "link_out/dir/inner.txt", "link_out/new.txt", "link_out/dir", "link_file",
        "link_parent/sibling.txt", "link_parent/outside/secret.txt", "link_parent/new.txt", "link_rel/secret.txt",
        "link_rel/new.txt", "link_dangling", "sub/up2", "sub/up2/outside/secret.txt", "sub/up2/new.txt",
        "link_in/up2/outside", "loop", "loop/x", "C:\\Windows\\system32", "c:/x", "C:", "\\\\server\\share\\x",
        "//server/share", "a.txt\0../../x", "\0", "", "..;/outside", "%2e%2e/outside/secret.txt", "..%2fsecret",
        "\u{ff0e}\u{ff0e}/outside", "~/.ssh/id_rsa", "$HOME/x", "file:///etc/passwd", "sub/..",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    v.push(format!("{}etc/passwd", "../".repeat(64)));
    v.push(format!("{}{}outside/secret.txt", "x/".repeat(100), "../".repeat(101)));
    v
}

/// Every operation shape that could touch `p`.
fn ops_for(p: &str) -> Vec<FileOp> {
    vec![
        FileOp::new(FileOpKind::Read, p),
        FileOp::new(FileOpKind::Write, p).with_content("PWNED"),
        FileOp::new(FileOpKind::Delete, p),
        FileOp::new(FileOpKind::List, p),
        FileOp::new(FileOpKind::Search, p).with_content("secret"),
        FileOp::new(FileOpKind::Copy, p).with_dest("copied.txt"),
        FileOp::new(FileOpKind::Copy, "a.txt").with_dest(p),
        FileOp::new(FileOpKind::Move, p).with_dest("moved.txt"),
        FileOp::new(FileOpKind::Move, "a.txt").with_dest(p),
    ]
}

fn outside_view(tmp: &Path) -> BTreeMap<PathBuf, Option<Vec<u8>>> {
    tree(tmp).into_iter().filter(|(p, _)| !p.starts_with("jail")).collect()
}

fn jail_soundness() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let paths = adversarial_paths();
    ensure!(paths.len() >= 50, "only {} adversarial paths", paths.len());
    let tokens = TokenStore::new();
    let mut attempts = 0;
    let mut refused = 0;
    jail_fixture(tmp.path());
    let baseline = outside_view(tmp.path());
    for p in &paths {
        for op in ops_for(p) {
            let jail = jail_fixture(tmp.path());
            // A valid token, so only the jail stands in the way.
            let token = tokens.issue("c", &op.digest(), 0).value;
            let result = execute_fileop(&op, &jail, Some(&token), &tokens, "c", 0);
            attempts += 1;
            match &result {
                Err(FileOpError::Jail(JailError::Escape(_) | JailError::Invalid(_))) => refused += 1,
                Ok(r) => ensure!(!r.summary().contains(SECRET), "{op:?} leaked outside contents"),
                Err(_) => {}
            }
            let now = outside_view(tmp.path());
            ensure!(now == baseline, "{op:?} changed the filesystem outside the jail ({result:?})");
        }
    }

    let gated = multi_thread().block_on(approval_gate_holds(tmp.path()))?;
    Ok(format!(
        "{} paths x 9 ops = {attempts} attempts, {refused} refused, 0 effects outside; {gated} gated ops inert until resolved",
        paths.len()
    ))
}

/// Destructive operations leave the target untouched until the approval is
/// resolved, and untouched for good when it is denied.
async fn approval_gate_holds(tmp: &Path) -> Outcome {
    let cases: [(&str, fn(&Path) -> bool); 4] = [
        ("delete victim.txt", |d| !d.join("victim.txt").exists()),
        ("move victim.txt moved.txt", |d| !d.join("victim.txt").exists() && d.join("moved.txt").exists()),
        ("write victim.txt overwritten", |d| std::fs::read_to_string(d.join("victim.txt")).ok().as_deref() == Some("overwritten")),
        ("copy other.txt victim.txt", |d| std::fs::read_to_string(d.join("victim.txt")).ok().as_deref() == Some("other")),
    ];
    let mut checked = 0;
    for (command, applied) in cases {
        for approve in [false, true] {
            let dir = tmp.join(format!("gate-{checked}"));
            std::fs::create_dir_all(&dir).unwrap();
            std::fs::write(dir.join("victim.txt"), "original").unwrap();
            std::fs::write(dir.join("other.txt"), "other").unwrap();
            let untouched = |d: &Path| {
                std::fs::read_to_string(d.join("victim.txt")).ok().as_deref() == Some("original") && !d.join("moved.txt").exists()
            };
            let tokens = Arc::new(TokenStore::new());
            let fm: Arc<dyn Agent> = Arc::new(FileManagerAgent::new(dir.to_string_lossy(), tokens.clone()));
            let plan = Plan {
                thought: "file op".into(),
                steps: vec![PlanStep::new("op", command, CAP_FILE_OPS, &[])],
                created_by: "fixed".into(),
            };
            let engine = gw::engine_with_tokens(vec![fm], plan, None, tokens);
            let conv = engine.new_conversation().map_err(|e| e.to_string())?;
            let handle = engine.submit(&conv, "tidy up the files please", vec![]).map_err(|e| e.to_string())?;
            let mut digest = None;
            for _ in 0..1000 {
                digest = conv.journal().state().pending_approvals.values().next().cloned();
                if digest.is_some() {
                    break;
                }
                tokio::time::sleep(Duration::from_millis(5)).await;
            }
            let digest = digest.ok_or_else(|| format!("{command}: no approval requested"))?;
            tokio::time::sleep(Duration::from_millis(100)).await;
            ensure!(untouched(&dir), "{command}: effect before the approval was resolved");
            ensure!(
                !conv.journal().events().iter().any(|e| e.kind() == "ApprovalResolved"),
                "{command}: resolved without a decision"
            );
            engine.resolve_approval(&conv, &digest, approve).await.map_err(|e| e.to_string())?;
            handle.await.map_err(|e| e.to_string())?.map_err(|e| e.to_string())?;
            let events = conv.journal().events();
            if approve {
                ensure!(applied(&dir), "{command}: approved but not applied");
                let resolved = events.iter().position(|e| e.kind() == "ApprovalResolved").unwrap();
                let done = events.iter().position(|e| e.kind() == "TaskSucceeded").ok_or(format!("{command}: no success"))?;
                ensure!(resolved < done, "{command}: success recorded before approval");
            } else {
                ensure!(untouched(&dir), "{command}: denied but applied");
                let denied = events.iter().any(|e| {
                    matches!(&e.body, EventBody::TaskFailed { cause: FailureCause::ApprovalDenied, .. })
                });
                ensure!(denied, "{command}: denial not recorded as ApprovalDenied");
            }
            checked += 1;
        }
    }
    Ok(checked.to_string())
}

// 7. ---------------------------------------------------------------------

fn audit_integrity() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let engine = gw::engine(vec![Arc::new(EchoAgent::default())], gw::one_step("echo"), Some(store.clone()));
    let audit = engine.audit().expect("audit enabled").clone();
    multi_thread().block_on(async {
        let conv = engine.new_conversation().unwrap();
        let mut turn = 0;
        while audit.len() < 100 {
            turn += 1;
            engine.prompt(&conv, &format!("echo turn {turn}")).await.unwrap();
        }
    });
    let full = std::fs::read_to_string(store.audit_path()).unwrap();
    ensure!(verify_audit_log(&full) == AuditVerdict::Valid, "store audit log does not verify");
    let text: String = full.lines().take(100).map(|l| format!("{l}\n")).collect();
    ensure!(verify_audit_log(&text) == AuditVerdict::Valid, "first 100 records do not verify");

    let bytes = text.as_bytes();
    let mut line_of = Vec::with_capacity(bytes.len());
    let mut line = 0;
    for &b in bytes {
        line_of.push(line);
        line += usize::from(b == b'\n');
    }
    let replacements = [b'0', b'x', b' ', b'"', b'}', b'\\'];
    let mut located = 0usize;
    for pos in 0..bytes.len() {
        let mut k = pos % replacements.len();
        if bytes[pos] == replacements[k] {
            k = (k + 1) % replacements.len();
        }
        let mut tampered = bytes.to_vec();
        tampered[pos] = replacements[k];
        let verdict = verify_audit_log(std::str::from_utf8(&tampered).unwrap());
        ensure!(
            verdict == AuditVerdict::Invalid { index: line_of[pos] },
            "byte {pos} -> {:?}: {verdict:?}, want index {}",
            replacements[k] as char,
            line_of[pos]
        );
        located += 1;
    }
    ensure!(located == bytes.len(), "checked {located} of {} bytes", bytes.len());
    Ok(format!("{located} single-byte tampers of the store's 100-record audit log, all located"))
}

// 8. ---------------------------------------------------------------------

fn text_strategy() -> impl Strategy<Value = String> {
    prop_oneof!["[a-z0-9 ]{0,16}", any::<String>(), Just("مرحبا \"q\" \\ \n\t\u{0}".to_string())]
}

fn message_strategy() -> impl Strategy<Value = Message> {
    (
        "[a-z0-9]{1,6}",
        prop_oneof![Just(Role::User), Just(Role::Coordinator), Just(Role::Reporter)],
        text_strategy(),
        prop_oneof![Just(Lang::En), Just(Lang::Ar), Just(Lang::Und)],
        any::<u64>(),
    )
        .prop_map(|(id, role, content, lang, ts)| Message::new(id, role, content, lang, ts))
}

fn body_strategy() -> impl Strategy<Value = EventBody> {
    let step = || "[a-z][a-z0-9]{0,5}".prop_map(StepId::new);
    prop_oneof![
        message_strategy().prop_map(|message| EventBody::PromptReceived { message }),
        text_strategy().prop_map(|payload_digest| EventBody::HandoffToPlanner { payload_digest }),
        (step(), "[a-z]{1,6}", any::<u32>(), text_strategy())
            .prop_map(|(step_id, agent_id, attempt, description)| EventBody::TaskDispatched { step_id, agent_id, attempt, description }),
        (step(), any::<u32>()).prop_map(|(step_id, attempt)| EventBody::Heartbeat { step_id, attempt }),
        (step(), any::<u32>(), text_strategy(), any::<u64>()).prop_map(|(step_id, attempts, summary, duration_ms)| {
            EventBody::TaskSucceeded { step_id, agent_id: "a".into(), attempts, summary, artifacts: vec![], duration_ms }
        }),
        (step(), text_strategy(), any::<u32>()).prop_map(|(step_id, message, attempts)| EventBody::TaskFailed {
            step_id,
            agent_id: None,
            cause: FailureCause::AgentError { message },
            attempts
        }),
    ]
}

#[derive(Debug, Clone)]
struct Conversation {
    record: ConversationRecord,
    messages: Vec<Message>,
    events: Vec<WorkflowEvent>,
}

fn conversation_strategy() -> impl Strategy<Value = Conversation> {
    (
        any::<[u8; 16]>(),
        text_strategy(),
        any::<u64>(),
        prop::collection::vec(message_strategy(), 0..6),
        prop::collection::vec((any::<u64>(), body_strategy()), 0..10),
    )
        .prop_map(|(id, title, created_at, messages, bodies)| {
            let id = uuid::Builder::from_random_bytes(id).into_uuid().hyphenated().to_string();
            let events = bodies.into_iter().enumerate().map(|(i, (ts, b))| WorkflowEvent::new(i as u64 + 1, ts, b)).collect();
            Conversation { record: ConversationRecord::new(id, title, created_at), messages, events }
        })
}

fn jsonl<T: serde::Serialize>(items: &[T]) -> Vec<u8> {
    items.iter().flat_map(|i| serde_json::to_string(i).unwrap().into_bytes().into_iter().chain([b'\n'])).collect()
}

fn crashing(store: &Store, fail_at: usize) -> Store {
    let calls = Arc::new(AtomicUsize::new(0));
    store.clone().with_rename_hook(Arc::new(move |_| {
        if calls.fetch_add(1, Ordering::SeqCst) == fail_at {
            Err(std::io::Error::other("injected crash"))
        } else {
            Ok(())
        }
    }))
}

fn persistence() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let mut runner = TestRunner::new(PropConfig { cases: 1000, failure_persistence: None, ..PropConfig::default() });
    let cases = Arc::new(AtomicUsize::new(0));
    let crashes = Arc::new(AtomicUsize::new(0));
    let (c1, c2) = (cases.clone(), crashes.clone());
    let result = runner.run(&(conversation_strategy(), conversation_strategy()), |(old, new)| {
        c1.fetch_add(1, Ordering::SeqCst);
        // Round trip, bit-exact on disk and in memory.
        let paths = store.persist_conversation(&old.record, &old.messages, &old.events).unwrap();
        let (r, m, e) = store.load_conversation(&old.record.id).unwrap();
        prop_assert_eq!(&m, &old.messages);
        prop_assert_eq!(&e, &old.events);
        prop_assert_eq!(r.title.as_str(), old.record.title.as_str());
        prop_assert_eq!(std::fs::read(&paths.messages).unwrap(), jsonl(&m));
        prop_assert_eq!(std::fs::read(&paths.events).unwrap(), jsonl(&e));
        let meta = std::fs::read(&paths.meta).unwrap();
        store.persist_conversation(&r, &m, &e).unwrap();
        prop_assert_eq!(std::fs::read(&paths.meta).unwrap(), meta);

        // Crash at each rename of a rewrite with unrelated content: before
        // the commit the prior state survives whole, after it the new one.
        let next = ConversationRecord { id: old.record.id.clone(), ..new.record.clone() };
        for fail_at in 0.. {
            let crashed = crashing(&store, fail_at).persist_conversation(&next, &new.messages, &new.events).is_err();
            let (r, m, e) = store.load_conversation(&old.record.id).unwrap();
            let got = (r.title, m, e);
            if crashed && fail_at == 0 {
                c2.fetch_add(1, Ordering::SeqCst);
                prop_assert_eq!(got, (old.record.title.clone(), old.messages.clone(), old.events.clone()));
            } else {
                prop_assert_eq!(got, (new.record.title.clone(), new.messages.clone(), new.events.clone()));
            }
            store.persist_conversation(&old.record, &old.messages, &old.events).unwrap();
            if !crashed {
                break;
            }
        }

        // Crash while appending: the committed prefix survives.
        let seq = old.events.len() as u64 + 1;
        let extra = WorkflowEvent::new(seq, 0, EventBody::Heartbeat { step_id: StepId::new("s"), attempt: 1 });
        prop_assert!(crashing(&store, 0).writer(&old.record.id).unwrap().append_event(&extra).is_err());
        let (_, m, e) = store.load_conversation(&old.record.id).unwrap();
        prop_assert_eq!(&m, &old.messages);
        prop_assert_eq!(&e, &old.events);
        store.writer(&old.record.id).unwrap().append_event(&extra).unwrap();
        let (_, _, e) = store.load_conversation(&old.record.id).unwrap();
        prop_assert_eq!(e.last(), Some(&extra));
        prop_assert_eq!(e.len(), old.events.len() + 1);
        Ok(())
    });
    result.map_err(|e| e.to_string())?;
    let n = cases.load(Ordering::SeqCst);
    ensure!(n >= 1000, "only {n} cases ran");
    Ok(format!("{n} random conversations round-trip bit-exactly; {} pre-commit and all post-commit crashes safe", crashes.load(Ordering::SeqCst)))
}

// 9. ---------------------------------------------------------------------

fn gateway_latency() -> Outcome {
    const SAMPLES: usize = 100;
    multi_thread().block_on(async {
        let engine = gw::engine(vec![Arc::new(EchoAgent::default())], gw::one_step("echo"), None);
        let (g, token) = gw::gateway(engine, Duration::from_secs(600));
        let addr = gw::spawn(g).await;
        let http = reqwest::Client::new();
        let post = |body: serde_json::Value| {
            http.post(format!("http://{addr}/api/prompt")).bearer_auth(&token).json(&body).send()
        };
        let first = post(serde_json::json!({ "text": "echo warm up" })).await.map_err(|e| e.to_string())?;
        ensure!(first.status() == reqwest::StatusCode::ACCEPTED, "warm-up prompt got {}", first.status());
        let id = first.json::<PromptAccepted>().await.map_err(|e| e.to_string())?.conversation_id;
        let mut ws = gw::connect(addr, &id, 0, &token).await;
        gw::until_closed(&mut ws).await;

        let mut samples = Vec::with_capacity(SAMPLES);
        while samples.len() < SAMPLES {
            let started = Instant::now();
            let resp = post(serde_json::json!({ "conversation_id": id, "text": format!("echo {}", samples.len()) }))
                .await
                .map_err(|e| e.to_string())?;
            if resp.status() == reqwest::StatusCode::CONFLICT {
                // The previous turn is still winding down.
                tokio::time::sleep(Duration::from_millis(2)).await;
                continue;
            }
            ensure!(resp.status() == reqwest::StatusCode::ACCEPTED, "prompt got {}", resp.status());
            loop {
                match gw::next_frame(&mut ws).await {
                    Some(ServerFrame::Event { event }) if event.kind() == "PromptReceived" => break,
                    Some(_) => continue,
                    None => return Err("stream closed".into()),
                }
            }
            samples.push(started.elapsed());
            gw::until_closed(&mut ws).await;
        }
        samples.sort();
        let p95 = samples[SAMPLES * 95 / 100 - 1];
        let p50 = samples[SAMPLES / 2 - 1];
        ensure!(p95 < Duration::from_millis(200), "p95 {:.1} ms", p95.as_secs_f64() * 1e3);
        Ok(format!(
            "{SAMPLES} prompts over loopback: p50 {:.2} ms, p95 {:.2} ms to first streamed event",
            p50.as_secs_f64() * 1e3,
            p95.as_secs_f64() * 1e3
        ))
    })
}
