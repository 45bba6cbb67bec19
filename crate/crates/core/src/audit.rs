//! Hash-chained audit records.
//!
//! `this_hash = sha256(prev_hash ∥ canonical({seq, timestamp, actor, action,
//! input_digest, output_digest}))`, hex encoded. The first record's
//! `prev_hash` is 64 zeros. A log is one canonical JSON record per line.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::canonical::{canonicalize, sha256_hex, to_canonical_string};

pub const GENESIS_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";

/// Caller-supplied part of an audit record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditEntry {
    pub timestamp: u64,
    pub actor: String,
    pub action: String,
    pub input_digest: String,
    pub output_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditRecord {
    pub seq: u64,
    pub timestamp: u64,
    pub actor: String,
    pub action: String,
    pub input_digest: String,
    pub output_digest: String,
    pub prev_hash: String,
    pub this_hash: String,
}

impl AuditRecord {
    /// Chains `entry` after `prev` (or genesis).
    pub fn seal(prev: Option<&AuditRecord>, entry: AuditEntry) -> AuditRecord {
        let (seq, prev_hash) = match prev {
            Some(p) => (p.seq + 1, p.this_hash.clone()),
            None => (1, String::from(GENESIS_HASH)),
        };
        let mut rec = AuditRecord {
            seq,
            timestamp: entry.timestamp,
            actor: entry.actor,
            action: entry.action,
            input_digest: entry.input_digest,
            output_digest: entry.output_digest,
            prev_hash,
            this_hash: String::new(),
        };
        rec.this_hash = rec.compute_hash();
        rec
    }

    pub fn compute_hash(&self) -> String {
        let body = json!({
            "seq": self.seq,
            "timestamp": self.timestamp,
            "actor": self.actor,
            "action": self.action,
            "input_digest": self.input_digest,
            "output_digest": self.output_digest,
        });
        let mut bytes = Vec::with_capacity(64 + 256);
        bytes.extend_from_slice(self.prev_hash.as_bytes());
        bytes.extend_from_slice(canonicalize(&body).as_bytes());
        sha256_hex(&bytes)
    }

    pub fn to_line(&self) -> String {
        to_canonical_string(self).expect("audit records serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuditVerdict {
    Valid,
    /// Index (0-based) of the first record that fails to chain.
    Invalid { index: usize },
}

/// Full recomputation over parsed records.
pub fn verify_audit(records: &[AuditRecord]) -> AuditVerdict {
    let mut prev_hash = GENESIS_HASH;
    for (index, rec) in records.iter().enumerate() {
        if rec.seq != index as u64 + 1 || rec.prev_hash != prev_hash || rec.this_hash != rec.compute_hash() {
            return AuditVerdict::Invalid { index };
        }
        prev_hash = &rec.this_hash;
    }
    AuditVerdict::Valid
}

/// Verifies a serialized log. A line that does not parse, or that is not the
/// exact canonical form of what it parses to, is invalid at its index.
pub fn verify_audit_log(text: &str) -> AuditVerdict {
    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.is_empty() {
        return AuditVerdict::Valid;
    }
    let mut records: Vec<AuditRecord> = Vec::new();
    for (index, line) in body.split('\n').enumerate() {
        let rec: AuditRecord = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(_) => return AuditVerdict::Invalid { index },
        };
        if rec.to_line() != line {
            return AuditVerdict::Invalid { index };
        }
        let prev_hash = records.last().map(|r| r.this_hash.as_str()).unwrap_or(GENESIS_HASH);
        if rec.seq != index as u64 + 1 || rec.prev_hash != prev_hash || rec.this_hash != rec.compute_hash() {
            return AuditVerdict::Invalid { index };
        }
        records.push(rec);
    }
    AuditVerdict::Valid
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;

    fn entry(i: u64) -> AuditEntry {
        AuditEntry {
            timestamp: 1_000 + i,
            actor: "supervisor".into(),
            action: format!("task_dispatched:{i}"),
            input_digest: sha256_hex(&i.to_le_bytes()),
            output_digest: String::new(),
        }
    }

    fn chain(n: u64) -> Vec<AuditRecord> {
        let mut out: Vec<AuditRecord> = Vec::new();
        for i in 0..n {
            let r = AuditRecord::seal(out.last(), entry(i));
            out.push(r);
        }
        out
    }

    #[test]
    fn genesis_prev_hash_is_zeros() {
        let c = chain(1);
        assert_eq!(c[0].prev_hash, GENESIS_HASH);
        assert_eq!(c[0].seq, 1);
    }

    #[test]
    fn hundred_records_verify() {
        assert_eq!(verify_audit(&chain(100)), AuditVerdict::Valid);
    }

    #[test]
    fn mutation_deletion_reorder_detected() {
        let mut c = chain(10);
        c[4].actor = "mallory".into();
        assert_eq!(verify_audit(&c), AuditVerdict::Invalid { index: 4 });

        let mut c = chain(10);
        c.remove(6);
        assert_eq!(verify_audit(&c), AuditVerdict::Invalid { index: 6 });

        let mut c = chain(10);
        c.swap(2, 3);
        assert_eq!(verify_audit(&c), AuditVerdict::Invalid { index: 2 });
    }
}
