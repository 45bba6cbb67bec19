//! CIDR allowlists for the LAN gateway.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::net::{IpAddr, Ipv4Addr, Ipv6Addr};
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid CIDR block `{0}`")]
pub struct CidrParseError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cidr {
    network: IpAddr,
    prefix: u8,
}

impl Cidr {
    pub fn new(addr: IpAddr, prefix: u8) -> Option<Cidr> {
        let max = if addr.is_ipv4() { 32 } else { 128 };
        if prefix > max {
            return None;
        }
        let network = match addr {
            IpAddr::V4(a) => IpAddr::V4(Ipv4Addr::from(u32::from(a) & mask32(prefix))),
            IpAddr::V6(a) => IpAddr::V6(Ipv6Addr::from(u128::from(a) & mask128(prefix))),
        };
        Some(Cidr { network, prefix })
    }

    pub fn network(&self) -> IpAddr {
        self.network
    }

    pub fn prefix(&self) -> u8 {
        self.prefix
    }

    /// IPv4-mapped IPv6 addresses (`::ffff:a.b.c.d`) are tested as IPv4.
    pub fn contains(&self, addr: IpAddr) -> bool {
        let addr = match addr {
            IpAddr::V6(v6) => v6.to_ipv4_mapped().map(IpAddr::V4).unwrap_or(addr),
            v4 => v4,
        };
        match (self.network, addr) {
            (IpAddr::V4(n), IpAddr::V4(a)) => u32::from(a) & mask32(self.prefix) == u32::from(n),
            (IpAddr::V6(n), IpAddr::V6(a)) => u128::from(a) & mask128(self.prefix) == u128::from(n),
            _ => false,
        }
    }
}

fn mask32(prefix: u8) -> u32 {
    if prefix == 0 { 0 } else { u32::MAX << (32 - prefix as u32) }
}

fn mask128(prefix: u8) -> u128 {
    if prefix == 0 { 0 } else { u128::MAX << (128 - prefix as u32) }
}

impl FromStr for Cidr {
    type Err = CidrParseError;

    /// `a.b.c.d/n`, `x::y/n`, or a bare address (host route).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || CidrParseError(String::from(s));
        let (addr, prefix) = match s.trim().split_once('/') {
            Some((a, p)) => {
                let p: u8 = p.parse().map_err(|_| err())?;
                (a.parse::<IpAddr>().map_err(|_| err())?, Some(p))
            }
            None => (s.trim().parse::<IpAddr>().map_err(|_| err())?, None),
        };
        let prefix = prefix.unwrap_or(if addr.is_ipv4() { 32 } else { 128 });
        Cidr::new(addr, prefix).ok_or_else(err)
    }
}

impl fmt::Display for Cidr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.network, self.prefix)
    }
}

impl Serialize for Cidr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Cidr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub const DEFAULT_ALLOWLIST: &[&str] = &["192.168.0.0/16", "10.0.0.0/8", "172.16.0.0/12", "127.0.0.0/8"];

pub fn default_allowlist() -> Vec<Cidr> {
    DEFAULT_ALLOWLIST.iter().map(|c| c.parse().expect("valid default block")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterDecision {
    Allow,
    Deny,
}

pub fn ip_filter(addr: IpAddr, allowlist: &[Cidr]) -> FilterDecision {
    if allowlist.iter().any(|c| c.contains(addr)) {
        FilterDecision::Allow
    } else {
        FilterDecision::Deny
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ip(s: &str) -> IpAddr {
        s.parse().unwrap()
    }

    #[test]
    fn default_blocks() {
        let allow = default_allowlist();
        assert_eq!(ip_filter(ip("192.168.1.42"), &allow), FilterDecision::Allow);
        assert_eq!(ip_filter(ip("127.0.0.1"), &allow), FilterDecision::Allow);
        assert_eq!(ip_filter(ip("172.31.255.255"), &allow), FilterDecision::Allow);
        assert_eq!(ip_filter(ip("172.32.0.1"), &allow), FilterDecision::Deny);
        assert_eq!(ip_filter(ip("8.8.8.8"), &allow), FilterDecision::Deny);
        assert_eq!(ip_filter(ip("::1"), &allow), FilterDecision::Deny);
        assert_eq!(ip_filter(ip("::ffff:10.1.2.3"), &allow), FilterDecision::Allow);
        assert_eq!(ip_filter(ip("::ffff:8.8.8.8"), &allow), FilterDecision::Deny);
    }

    #[test]
    fn parse_normalizes_host_bits() {
        let c: Cidr = "10.1.2.3/8".parse().unwrap();
        assert_eq!(alloc::format!("{c}"), "10.0.0.0/8");
        assert!("10.0.0.0/33".parse::<Cidr>().is_err());
        assert!("nonsense".parse::<Cidr>().is_err());
        let host: Cidr = "fe80::1".parse().unwrap();
        assert_eq!(host.prefix(), 128);
        let all: Cidr = "0.0.0.0/0".parse().unwrap();
        assert!(all.contains(ip("8.8.8.8")));
    }
}
