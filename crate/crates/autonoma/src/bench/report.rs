//! Metric table rendering and the IP filter probe shown alongside it.

use std::fmt::Write as _;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use autonoma_core::metrics::Metrics;
use autonoma_core::netfilter::{default_allowlist, ip_filter, FilterDecision};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Reference values from a published live-LLM evaluation; printed for
/// comparison only.
pub const REFERENCE_COMPLETION: &str = "97% (500 test cases)";
pub const REFERENCE_LATENCY: &str = "1-2 s end to end";
pub const REFERENCE_HANDOFF: &str = "98%";
pub const REFERENCE_LANGUAGE: &str = "100% without page reloads";
pub const REFERENCE_SECURITY: &str = "0 breaches";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Table,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(Format::Table),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}` (table or json)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterProbe {
    pub probed: u64,
    pub accepted: u64,
}

/// A public IPv4 address: the private and loopback blocks of the default
/// allowlist are moved out by construction.
pub fn public_ipv4(rng: &mut impl Rng) -> Ipv4Addr {
    let mut o: [u8; 4] = rng.random();
    match o[0] {
        10 => o[0] = 11,
        127 => o[0] = 128,
        172 if (16..=31).contains(&o[1]) => o[1] = 32,
        192 if o[1] == 168 => o[1] = 169,
        _ => {}
    }
    Ipv4Addr::from(o)
}

/// Addresses outside the default allowlist: public IPv4, the same mapped
/// into IPv6, and global unicast IPv6.
pub fn non_lan_addresses(seed: u64, n: usize) -> Vec<IpAddr> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| match i % 3 {
            0 => IpAddr::V4(public_ipv4(&mut rng)),
            1 => IpAddr::V6(public_ipv4(&mut rng).to_ipv6_mapped()),
            _ => {
                let bits: u128 = rng.random();
                IpAddr::V6(Ipv6Addr::from((bits & !(0b111u128 << 125)) | (0b001u128 << 125)))
            }
        })
        .collect()
}

/// Runs the default allowlist over `n` non-LAN addresses.
pub fn probe_filter(seed: u64, n: usize) -> FilterProbe {
    let allow = default_allowlist();
    let accepted =
        non_lan_addresses(seed, n).into_iter().filter(|a| ip_filter(*a, &allow) == FilterDecision::Allow).count();
    FilterProbe { probed: n as u64, accepted: accepted as u64 }
}

fn pct(num: u64, den: u64) -> String {
    if den == 0 {
        "n/a".into()
    } else {
        format!("{:.1}% ({num}/{den})", 100.0 * num as f64 / den as f64)
    }
}

/// JSON is exactly the serialized [`Metrics`]; the table adds the filter
/// probe and reference values.
pub fn report_metrics(m: &Metrics, filter: Option<&FilterProbe>, format: Format) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(m).expect("metrics serialize"),
        Format::Table => {
            let security = match filter {
                Some(p) => format!("{} of {} accepted", p.accepted, p.probed),
                None => "not probed".into(),
            };
            let rows = [
                ("Task completion rate", pct(m.workflows_completed, m.workflows_total), REFERENCE_COMPLETION),
                (
                    "Response latency (logical)",
                    format!("p50 {} ms, p95 {} ms", m.latency_p50_ms, m.latency_p95_ms),
                    REFERENCE_LATENCY,
                ),
                ("Inter-agent handoff success", pct(m.handoffs_accepted, m.handoffs_total), REFERENCE_HANDOFF),
                ("Language switching", "N/A (headless run)".into(), REFERENCE_LANGUAGE),
                ("Security filter", security, REFERENCE_SECURITY),
            ];
            let mut out = String::new();
            let _ = writeln!(out, "{:<30} {:<32} Reference", "Metric", "Measured");
            let _ = writeln!(out, "{}", "-".repeat(90));
            for (name, measured, reference) in rows {
                let _ = writeln!(out, "{name:<30} {measured:<32} {reference}");
            }
            let _ = writeln!(out, "{}", "-".repeat(90));
            let _ = writeln!(
                out,
                "Reference values were measured with live language models and are shown for comparison;\n\
                 this harness reproduces the metric definitions over synthetic workflows, not those numbers."
            );
            out
        }
    }
}
