use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use thiserror::Error;

use super::{Layers, PacketView};

/// A packet field addressable from programs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FieldId {
    IpSrc,
    IpDst,
    IpProto,
    IpLen,
    TcpSport,
    TcpDport,
    TcpFlags,
    TcpSeq,
    UdpSport,
    UdpDport,
    DnsQname,
    DnsQtype,
    DnsRcode,
    DnsAncount,
    PktLen,
    PktPayloadLen,
    PktTs,
}

impl FieldId {
    pub const ALL: [FieldId; 17] = [
        FieldId::IpSrc,
        FieldId::IpDst,
        FieldId::IpProto,
        FieldId::IpLen,
        FieldId::TcpSport,
        FieldId::TcpDport,
        FieldId::TcpFlags,
        FieldId::TcpSeq,
        FieldId::UdpSport,
        FieldId::UdpDport,
        FieldId::DnsQname,
        FieldId::DnsQtype,
        FieldId::DnsRcode,
        FieldId::DnsAncount,
        FieldId::PktLen,
        FieldId::PktPayloadLen,
        FieldId::PktTs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FieldId::IpSrc => "ip.src",
            FieldId::IpDst => "ip.dst",
            FieldId::IpProto => "ip.proto",
            FieldId::IpLen => "ip.len",
            FieldId::TcpSport => "tcp.sport",
            FieldId::TcpDport => "tcp.dport",
            FieldId::TcpFlags => "tcp.flags",
            FieldId::TcpSeq => "tcp.seq",
            FieldId::UdpSport => "udp.sport",
            FieldId::UdpDport => "udp.dport",
            FieldId::DnsQname => "dns.qname",
            FieldId::DnsQtype => "dns.qtype",
            FieldId::DnsRcode => "dns.rcode",
            FieldId::DnsAncount => "dns.ancount",
            FieldId::PktLen => "pkt.len",
            FieldId::PktPayloadLen => "pkt.payload_len",
            FieldId::PktTs => "pkt.ts",
        }
    }

    /// Encoded width in bytes; `None` for the variable-length qname.
    pub fn width(self) -> Option<usize> {
        Some(match self {
            FieldId::IpSrc | FieldId::IpDst | FieldId::TcpSeq => 4,
            FieldId::IpProto | FieldId::TcpFlags | FieldId::DnsRcode => 1,
            FieldId::IpLen
            | FieldId::TcpSport
            | FieldId::TcpDport
            | FieldId::UdpSport
            | FieldId::UdpDport
            | FieldId::DnsQtype
            | FieldId::DnsAncount => 2,
            FieldId::PktLen | FieldId::PktPayloadLen => 4,
            FieldId::PktTs => 8,
            FieldId::DnsQname => return None,
        })
    }

    pub fn is_numeric(self) -> bool {
        self != FieldId::DnsQname
    }

    fn layer(self) -> Layers {
        match self {
            FieldId::IpSrc | FieldId::IpDst | FieldId::IpProto | FieldId::IpLen => Layers::IPV4,
            FieldId::TcpSport | FieldId::TcpDport | FieldId::TcpFlags | FieldId::TcpSeq => Layers::TCP,
            FieldId::UdpSport | FieldId::UdpDport => Layers::UDP,
            FieldId::DnsQname | FieldId::DnsQtype | FieldId::DnsRcode | FieldId::DnsAncount => Layers::DNS,
            FieldId::PktLen | FieldId::PktTs => Layers::ETHERNET,
            FieldId::PktPayloadLen => Layers::IPV4,
        }
    }
}

impl fmt::Display for FieldId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FieldId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FieldId::ALL.iter().copied().find(|f| f.name() == s).ok_or_else(|| format!("unknown field `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("field {0} unavailable: layer not present in packet")]
pub struct FieldUnavailable(pub FieldId);

impl PacketView<'_> {
    fn require(&self, f: FieldId) -> Result<(), FieldUnavailable> {
        if self.layers().contains(f.layer()) {
            Ok(())
        } else {
            Err(FieldUnavailable(f))
        }
    }

    /// Numeric value of a field.
    pub fn field_u64(&self, f: FieldId) -> Result<u64, FieldUnavailable> {
        self.require(f)?;
        let dns = || self.dns().expect("DNS layer flag implies info");
        Ok(match f {
            FieldId::IpSrc => u32::from(self.ip_src()) as u64,
            FieldId::IpDst => u32::from(self.ip_dst()) as u64,
            FieldId::IpProto => self.ip_proto() as u64,
            FieldId::IpLen => self.ip_len() as u64,
            FieldId::TcpSport | FieldId::UdpSport => self.sport() as u64,
            FieldId::TcpDport | FieldId::UdpDport => self.dport() as u64,
            FieldId::TcpFlags => self.tcp_flags() as u64,
            FieldId::TcpSeq => self.tcp_seq() as u64,
            FieldId::DnsQtype => dns().qtype.ok_or(FieldUnavailable(f))? as u64,
            FieldId::DnsRcode => dns().rcode as u64,
            FieldId::DnsAncount => dns().ancount as u64,
            FieldId::PktLen => self.len() as u64,
            FieldId::PktPayloadLen => self.payload().len() as u64,
            FieldId::PktTs => self.ts().micros(),
            FieldId::DnsQname => return Err(FieldUnavailable(f)),
        })
    }

    /// Value used in expressions. `pkt.ts` is reported in seconds.
    pub fn field_f64(&self, f: FieldId) -> Result<f64, FieldUnavailable> {
        match f {
            FieldId::PktTs => self.require(f).map(|_| self.ts().as_secs_f64()),
            _ => self.field_u64(f).map(|v| v as f64),
        }
    }

    /// Appends the canonical encoding of `f`: big-endian fixed width for
    /// numeric fields, a 2-byte length prefix plus the lowercase name for
    /// `dns.qname`.
    pub fn write_field(&self, f: FieldId, out: &mut Vec<u8>) -> Result<(), FieldUnavailable> {
        match f.width() {
            Some(w) => {
                let v = self.field_u64(f)?;
                out.extend_from_slice(&v.to_be_bytes()[8 - w..]);
            }
            None => {
                self.require(f)?;
                let name = self.dns().and_then(|d| d.qname.as_deref()).ok_or(FieldUnavailable(f))?;
                out.extend_from_slice(&(name.len() as u16).to_be_bytes());
                out.extend_from_slice(name.as_bytes());
            }
        }
        Ok(())
    }

    pub fn extract_field(&self, f: FieldId) -> Result<Vec<u8>, FieldUnavailable> {
        match f {
            FieldId::DnsQname => {
                self.require(f)?;
                let name = self.dns().and_then(|d| d.qname.clone()).ok_or(FieldUnavailable(f))?;
                Ok(name.into_bytes())
            }
            _ => {
                let mut out = Vec::with_capacity(8);
                self.write_field(f, &mut out)?;
                Ok(out)
            }
        }
    }

    /// Appends the flow key for `fields` to `out`; on error `out` may hold a
    /// partial key.
    pub fn append_flowkey(&self, fields: &[FieldId], out: &mut Vec<u8>) -> Result<(), FieldUnavailable> {
        for &f in fields {
            self.write_field(f, out)?;
        }
        Ok(())
    }
}

/// Concatenation of field encodings in declared order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowKey(pub Vec<u8>);

impl FlowKey {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

pub fn compose_flowkey(pv: &PacketView<'_>, fields: &[FieldId]) -> Result<FlowKey, FieldUnavailable> {
    let mut out = Vec::with_capacity(16);
    pv.append_flowkey(fields, &mut out)?;
    Ok(FlowKey(out))
}

/// Lowercase, no trailing dot.
pub fn canonical_qname(name: &str) -> String {
    name.trim_end_matches('.').to_ascii_lowercase()
}

/// Best-effort human rendering of a key composed from `fields`, e.g.
/// `10.0.0.1|443`. Returns `None` if the byte length does not fit.
pub fn render_key(fields: &[FieldId], key: &[u8]) -> Option<String> {
    let mut parts = Vec::with_capacity(fields.len());
    let mut rest = key;
    for &f in fields {
        match f.width() {
            Some(w) => {
                if rest.len() < w {
                    return None;
                }
                let (head, tail) = rest.split_at(w);
                rest = tail;
                let mut buf = [0u8; 8];
                buf[8 - w..].copy_from_slice(head);
                let v = u64::from_be_bytes(buf);
                parts.push(match f {
                    FieldId::IpSrc | FieldId::IpDst => Ipv4Addr::from(v as u32).to_string(),
                    _ => v.to_string(),
                });
            }
            None => {
                if rest.len() < 2 {
                    return None;
                }
                let n = u16::from_be_bytes([rest[0], rest[1]]) as usize;
                if rest.len() < 2 + n {
                    return None;
                }
                parts.push(String::from_utf8_lossy(&rest[2..2 + n]).into_owned());
                rest = &rest[2 + n..];
            }
        }
    }
    if rest.is_empty() {
        Some(parts.join("|"))
    } else {
        None
    }
}
