//! Serialized forms round-trip bit-exactly: parse(serialize(x)) == x and
//! serializing again yields the same bytes.

use autonoma_core::canonical::to_canonical_string;
use autonoma_core::report::{FailureEntry, Report};
use autonoma_core::{
    AgentManifest, ArtifactRef, CloseReason, EventBody, FailureCause, HandoffRecord, Intent, IntentClass, Lang,
    Message, Plan, PlanStep, PrivilegeGrants, Role, StepId, WorkflowEvent,
};
use proptest::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn text() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-z0-9_ ]{0,12}",
        any::<String>(),
        Just("مرحبا \"quoted\" \\ \n\t\u{0}".to_string()),
    ]
}

fn token() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,7}"
}

fn lang() -> impl Strategy<Value = Lang> {
    prop_oneof![Just(Lang::En), Just(Lang::Ar), Just(Lang::Und)]
}

fn role() -> impl Strategy<Value = Role> {
    prop_oneof![
        Just(Role::User),
        Just(Role::Coordinator),
        Just(Role::Planner),
        Just(Role::Supervisor),
        Just(Role::Agent),
        Just(Role::Reporter),
    ]
}

fn message() -> impl Strategy<Value = Message> {
    (token(), role(), text(), lang(), prop::collection::vec(token(), 0..3), any::<u64>(), prop::option::of(text())).prop_map(
        |(id, role, content, lang, att, ts, urgency)| {
            let mut m = Message::new(id, role, content, lang, ts);
            m.attachments = att.into_iter().map(ArtifactRef).collect();
            m.meta.urgency = urgency;
            m
        },
    )
}

fn cause() -> impl Strategy<Value = FailureCause> {
    prop_oneof![
        Just(FailureCause::Timeout),
        Just(FailureCause::Stalled),
        Just(FailureCause::AckTimeout),
        Just(FailureCause::ApprovalDenied),
        Just(FailureCause::Cancelled),
        text().prop_map(|message| FailureCause::AgentPanic { message }),
        text().prop_map(|detail| FailureCause::PrivilegeViolation { detail }),
        token().prop_map(|capability| FailureCause::NoCapableAgent { capability }),
        text().prop_map(|message| FailureCause::AgentError { message }),
        (token(), text()).prop_map(|(hook_id, reason)| FailureCause::HookRejected { hook_id, reason }),
        (text(), text()).prop_map(|(path, message)| FailureCause::PlanParse { path, message }),
        text().prop_map(|message| FailureCause::ProviderUnavailable { message }),
    ]
}

fn plan() -> impl Strategy<Value = Plan> {
    (text(), prop::collection::vec((token(), text(), token(), prop::option::of(token())), 1..5), text()).prop_map(
        |(thought, raw, created_by)| {
            let mut steps: Vec<PlanStep> = Vec::new();
            for (i, (id, description, cap, hint)) in raw.into_iter().enumerate() {
                let deps: Vec<String> = steps.iter().map(|s| s.id.to_string()).take(i % 3).collect();
                let deps: Vec<&str> = deps.iter().map(String::as_str).collect();
                let mut s = PlanStep::new(&format!("{id}{i}"), &description, &cap, &deps);
                s.agent_hint = hint;
                steps.push(s);
            }
            Plan { thought, steps, created_by }
        },
    )
}

fn report() -> impl Strategy<Value = Report> {
    (lang(), text(), prop::collection::vec(text(), 0..3), text(), prop::collection::vec((token(), text(), text()), 0..3))
        .prop_map(|(lang, summary, findings, analysis, failures)| Report {
            lang,
            executive_summary: summary.clone(),
            key_findings: findings.clone(),
            detailed_analysis: analysis,
            conclusions_and_recommendations: summary,
            sources: findings,
            failure_log: failures
                .into_iter()
                .map(|(id, cause, recommendation)| FailureEntry { step_id: StepId::new(id), cause, recommendation })
                .collect(),
        })
}

fn body() -> impl Strategy<Value = EventBody> {
    let step = || token().prop_map(StepId::new);
    prop_oneof![
        message().prop_map(|message| EventBody::PromptReceived { message }),
        (
            prop_oneof![
                Just(IntentClass::Task),
                Just(IntentClass::Ambiguous),
                Just(IntentClass::Harmful),
                Just(IntentClass::CasualChat)
            ],
            0.0f64..=1.0,
            prop::collection::vec(token(), 0..3),
            prop::option::of(message())
        )
            .prop_map(|(class, confidence, cues, reply)| EventBody::IntentClassified {
                intent: Intent { class, confidence, cues },
                reply
            }),
        text().prop_map(|payload_digest| EventBody::HandoffToPlanner { payload_digest }),
        (plan(), any::<u32>()).prop_map(|(plan, retry_limit)| {
            let levels = vec![plan.steps.iter().map(|s| s.id.clone()).collect()];
            EventBody::PlanProposed { plan, levels, retry_limit }
        }),
        (step(), token(), any::<u32>(), text())
            .prop_map(|(step_id, agent_id, attempt, description)| EventBody::TaskDispatched { step_id, agent_id, attempt, description }),
        (step(), any::<u32>()).prop_map(|(step_id, attempt)| EventBody::Heartbeat { step_id, attempt }),
        (step(), any::<u32>(), cause(), any::<u64>())
            .prop_map(|(step_id, attempt, cause, backoff_ms)| EventBody::TaskRetried { step_id, attempt, cause, backoff_ms }),
        (step(), token(), any::<u32>(), text(), prop::collection::vec(token(), 0..3), any::<u64>()).prop_map(
            |(step_id, agent_id, attempts, summary, arts, duration_ms)| EventBody::TaskSucceeded {
                step_id,
                agent_id,
                attempts,
                summary,
                artifacts: arts.into_iter().map(ArtifactRef).collect(),
                duration_ms
            }
        ),
        (step(), prop::option::of(token()), cause(), any::<u32>())
            .prop_map(|(step_id, agent_id, cause, attempts)| EventBody::TaskFailed { step_id, agent_id, cause, attempts }),
        (role(), role(), text(), any::<bool>(), any::<u64>(), prop::option::of(step()), prop::option::of(token())).prop_map(
            |(from_role, to_role, payload_digest, accepted, timestamp, step_id, agent_id)| EventBody::HandoffRecorded {
                record: HandoffRecord { from_role, to_role, payload_digest, accepted, timestamp },
                step_id,
                agent_id
            }
        ),
        (step(), text(), text())
            .prop_map(|(step_id, action_digest, description)| EventBody::ApprovalRequested { step_id, action_digest, description }),
        (step(), text(), any::<bool>())
            .prop_map(|(step_id, action_digest, approved)| EventBody::ApprovalResolved { step_id, action_digest, approved }),
        report().prop_map(|report| EventBody::ReportReady { report }),
        prop_oneof![
            Just(CloseReason::Completed),
            Just(CloseReason::Rejected),
            Just(CloseReason::Cancelled),
            cause().prop_map(|cause| CloseReason::Failed { cause })
        ]
        .prop_map(|reason| EventBody::WorkflowClosed { reason }),
    ]
}

fn manifest() -> impl Strategy<Value = AgentManifest> {
    (token(), prop::collection::vec(token(), 0..4), prop::option::of(text()), any::<(bool, bool)>(), prop::collection::vec(token(), 0..3), any::<(u64, u64)>(), text())
        .prop_map(|(id, caps, jail, (exec, net), hosts, (rt, out), description)| {
            let caps: Vec<&str> = caps.iter().map(String::as_str).collect();
            let mut m = AgentManifest::new(&id, &caps);
            m.grants = PrivilegeGrants {
                fs_jail_root: jail,
                allow_exec: exec,
                allow_network: net,
                network_allowlist: hosts,
                max_runtime_ms: rt,
                max_output_bytes: out,
            };
            m.description = description;
            m
        })
}

fn exact<T: Serialize + DeserializeOwned + PartialEq + std::fmt::Debug>(value: &T) -> Result<(), TestCaseError> {
    let first = serde_json::to_string(value).unwrap();
    let back: T = serde_json::from_str(&first).unwrap();
    prop_assert_eq!(&back, value);
    prop_assert_eq!(serde_json::to_string(&back).unwrap(), first);
    let canonical = to_canonical_string(value).unwrap();
    let back: T = serde_json::from_str(&canonical).unwrap();
    prop_assert_eq!(&back, value);
    prop_assert_eq!(to_canonical_string(&back).unwrap(), canonical);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn events_round_trip(seq in 1u64.., timestamp in any::<u64>(), body in body()) {
        exact(&WorkflowEvent::new(seq, timestamp, body))?;
    }

    #[test]
    fn event_logs_round_trip(bodies in prop::collection::vec(body(), 0..12)) {
        let log: Vec<WorkflowEvent> = bodies.into_iter().enumerate().map(|(i, b)| WorkflowEvent::new(i as u64 + 1, i as u64 * 3, b)).collect();
        exact(&log)?;
        let lines: String = log.iter().map(|e| serde_json::to_string(e).unwrap() + "\n").collect();
        let parsed: Vec<WorkflowEvent> = lines.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        prop_assert_eq!(parsed, log);
    }

    #[test]
    fn messages_plans_manifests_round_trip(m in message(), p in plan(), a in manifest()) {
        exact(&m)?;
        exact(&p)?;
        exact(&a)?;
    }
}

#[test]
fn wire_shape_is_frozen() {
    let e = WorkflowEvent::new(3, 42, EventBody::Heartbeat { step_id: StepId::new("s1"), attempt: 2 });
    assert_eq!(serde_json::to_string(&e).unwrap(), r#"{"seq":3,"timestamp":42,"kind":"Heartbeat","payload":{"step_id":"s1","attempt":2}}"#);
    let e = WorkflowEvent::new(
        9,
        0,
        EventBody::WorkflowClosed { reason: CloseReason::Failed { cause: FailureCause::NoCapableAgent { capability: "exec".into() } } },
    );
    assert_eq!(
        serde_json::to_string(&e).unwrap(),
        r#"{"seq":9,"timestamp":0,"kind":"WorkflowClosed","payload":{"reason":{"type":"failed","cause":{"type":"no_capable_agent","capability":"exec"}}}}"#
    );
}

#[test]
fn unknown_fields_are_rejected() {
    let bad = r#"{"id":"m","role":"user","content":"x","lang":"en","timestamp":1,"extra":true}"#;
    assert!(serde_json::from_str::<Message>(bad).is_err());
}
