use std::cell::OnceCell;
use std::net::Ipv4Addr;
use std::ops::BitOr;

use thiserror::Error;

use super::field::canonical_qname;
use super::payload::{payload_stats_of, PayloadStats};
use crate::time::Timestamp;

const ETH_HDR: usize = 14;
const ETHERTYPE_IPV4: u16 = 0x0800;
const PROTO_TCP: u8 = 6;
const PROTO_UDP: u8 = 17;
const DNS_PORT: u16 = 53;
const MAX_POINTER_HOPS: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PacketError {
    #[error("malformed packet: {0}")]
    Malformed(&'static str),
    #[error("payload is empty")]
    EmptyPayload,
}

/// Set of parsed layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Layers(u8);

impl Layers {
    pub const ETHERNET: Layers = Layers(1);
    pub const IPV4: Layers = Layers(2);
    pub const TCP: Layers = Layers(4);
    pub const UDP: Layers = Layers(8);
    pub const DNS: Layers = Layers(16);

    pub fn contains(self, other: Layers) -> bool {
        self.0 & other.0 == other.0
    }
}

impl BitOr for Layers {
    type Output = Layers;
    fn bitor(self, rhs: Layers) -> Layers {
        Layers(self.0 | rhs.0)
    }
}

/// Header and first question of a DNS message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnsInfo {
    pub id: u16,
    pub is_response: bool,
    pub rcode: u8,
    pub qdcount: u16,
    pub ancount: u16,
    /// `None` when there is no question or it could not be decoded.
    pub qname: Option<String>,
    pub qtype: Option<u16>,
}

/// A dissected frame borrowing the raw capture bytes.
#[derive(Debug, Clone)]
pub struct PacketView<'a> {
    raw: &'a [u8],
    ts: Timestamp,
    layers: Layers,
    ip_src: Ipv4Addr,
    ip_dst: Ipv4Addr,
    ip_proto: u8,
    ip_len: u16,
    sport: u16,
    dport: u16,
    tcp_flags: u8,
    tcp_seq: u32,
    payload: (usize, usize),
    dns: Option<DnsInfo>,
    stats: OnceCell<Option<PayloadStats>>,
}

impl<'a> PacketView<'a> {
    pub fn raw(&self) -> &'a [u8] {
        self.raw
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn ts(&self) -> Timestamp {
        self.ts
    }

    pub fn layers(&self) -> Layers {
        self.layers
    }

    pub fn has(&self, l: Layers) -> bool {
        self.layers.contains(l)
    }

    pub fn ip_src(&self) -> Ipv4Addr {
        self.ip_src
    }

    pub fn ip_dst(&self) -> Ipv4Addr {
        self.ip_dst
    }

    pub fn ip_proto(&self) -> u8 {
        self.ip_proto
    }

    pub fn ip_len(&self) -> u16 {
        self.ip_len
    }

    /// Source port of the TCP or UDP header.
    pub fn sport(&self) -> u16 {
        self.sport
    }

    pub fn dport(&self) -> u16 {
        self.dport
    }

    pub fn tcp_flags(&self) -> u8 {
        self.tcp_flags
    }

    pub fn tcp_seq(&self) -> u32 {
        self.tcp_seq
    }

    pub fn dns(&self) -> Option<&DnsInfo> {
        self.dns.as_ref()
    }

    /// Transport payload, or the IP payload for other protocols; empty for
    /// non-IPv4 frames.
    pub fn payload(&self) -> &'a [u8] {
        &self.raw[self.payload.0..self.payload.1]
    }

    /// Statistics of the payload, computed once on first use.
    pub fn payload_stats(&self) -> Result<&PayloadStats, PacketError> {
        self.stats
            .get_or_init(|| payload_stats_of(self.payload()).ok())
            .as_ref()
            .ok_or(PacketError::EmptyPayload)
    }
}

fn be16(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

fn be32(b: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Parses as many layers as the headers allow.
pub fn dissect(raw: &[u8], ts: Timestamp) -> Result<PacketView<'_>, PacketError> {
    if raw.len() < ETH_HDR {
        return Err(PacketError::Malformed("frame shorter than ethernet header"));
    }
    let mut pv = PacketView {
        raw,
        ts,
        layers: Layers::ETHERNET,
        ip_src: Ipv4Addr::UNSPECIFIED,
        ip_dst: Ipv4Addr::UNSPECIFIED,
        ip_proto: 0,
        ip_len: 0,
        sport: 0,
        dport: 0,
        tcp_flags: 0,
        tcp_seq: 0,
        payload: (raw.len(), raw.len()),
        dns: None,
        stats: OnceCell::new(),
    };
    if be16(raw, 12) != ETHERTYPE_IPV4 {
        return Ok(pv);
    }

    let ip = &raw[ETH_HDR..];
    if ip.len() < 20 {
        return Err(PacketError::Malformed("truncated ipv4 header"));
    }
    if ip[0] >> 4 != 4 {
        return Err(PacketError::Malformed("ipv4 ethertype with other ip version"));
    }
    let ihl = usize::from(ip[0] & 0x0f) * 4;
    let total = usize::from(be16(ip, 2));
    if ihl < 20 || ihl > ip.len() {
        return Err(PacketError::Malformed("bad ipv4 header length"));
    }
    if total < ihl || total > ip.len() {
        return Err(PacketError::Malformed("ipv4 total length exceeds frame"));
    }
    pv.layers = pv.layers | Layers::IPV4;
    pv.ip_len = total as u16;
    pv.ip_proto = ip[9];
    pv.ip_src = Ipv4Addr::from(be32(ip, 12));
    pv.ip_dst = Ipv4Addr::from(be32(ip, 16));
    let l4_start = ETH_HDR + ihl;
    let l4_end = ETH_HDR + total;
    pv.payload = (l4_start, l4_end);

    // Non-first fragments carry no transport header.
    let frag_offset = be16(ip, 6) & 0x1fff;
    if frag_offset != 0 {
        return Ok(pv);
    }
    let l4 = &raw[l4_start..l4_end];
    match pv.ip_proto {
        PROTO_TCP => {
            if l4.len() < 20 {
                return Err(PacketError::Malformed("truncated tcp header"));
            }
            let off = usize::from(l4[12] >> 4) * 4;
            if off < 20 || off > l4.len() {
                return Err(PacketError::Malformed("bad tcp data offset"));
            }
            pv.layers = pv.layers | Layers::TCP;
            pv.sport = be16(l4, 0);
            pv.dport = be16(l4, 2);
            pv.tcp_seq = be32(l4, 4);
            pv.tcp_flags = l4[13];
            pv.payload = (l4_start + off, l4_end);
        }
        PROTO_UDP => {
            if l4.len() < 8 {
                return Err(PacketError::Malformed("truncated udp header"));
            }
            let len = usize::from(be16(l4, 4));
            if len < 8 || len > l4.len() {
                return Err(PacketError::Malformed("udp length exceeds ip payload"));
            }
            pv.layers = pv.layers | Layers::UDP;
            pv.sport = be16(l4, 0);
            pv.dport = be16(l4, 2);
            pv.payload = (l4_start + 8, l4_start + len);
            if pv.sport == DNS_PORT || pv.dport == DNS_PORT {
                // Port 53 does not guarantee DNS; undecodable bodies leave the
                // layer absent instead of failing the packet.
                if let Some(info) = parse_dns(pv.payload()) {
                    pv.dns = Some(info);
                    pv.layers = pv.layers | Layers::DNS;
                }
            }
        }
        _ => {}
    }
    Ok(pv)
}

fn parse_dns(msg: &[u8]) -> Option<DnsInfo> {
    if msg.len() < 12 {
        return None;
    }
    let flags = be16(msg, 2);
    let qdcount = be16(msg, 4);
    let mut info = DnsInfo {
        id: be16(msg, 0),
        is_response: flags & 0x8000 != 0,
        rcode: (flags & 0x000f) as u8,
        qdcount,
        ancount: be16(msg, 6),
        qname: None,
        qtype: None,
    };
    if qdcount > 0 {
        if let Some((name, end)) = read_name(msg, 12) {
            if end + 4 <= msg.len() {
                info.qtype = Some(be16(msg, end));
            }
            info.qname = Some(name);
        }
    }
    Some(info)
}

/// Decodes a possibly compressed name; returns it with the offset just past
/// its in-place encoding.
fn read_name(msg: &[u8], start: usize) -> Option<(String, usize)> {
    let mut labels: Vec<String> = Vec::new();
    let mut pos = start;
    let mut end = None;
    let mut hops = 0;
    loop {
        let len = *msg.get(pos)? as usize;
        match len & 0xc0 {
            0x00 => {
                if len == 0 {
                    let end = end.unwrap_or(pos + 1);
                    return Some((canonical_qname(&labels.join(".")), end));
                }
                let label = msg.get(pos + 1..pos + 1 + len)?;
                labels.push(String::from_utf8_lossy(label).into_owned());
                pos += 1 + len;
            }
            0xc0 => {
                hops += 1;
                if hops > MAX_POINTER_HOPS {
                    return None;
                }
                let lo = *msg.get(pos + 1)? as usize;
                end.get_or_insert(pos + 2);
                pos = ((len & 0x3f) << 8) | lo;
            }
            _ => return None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::{dns_query, dns_response, tcp_frame, udp_frame, FieldId, FrameSpec, TcpFlags};
    use proptest::prelude::*;

    fn spec() -> FrameSpec {
        FrameSpec::new(Ipv4Addr::new(10, 0, 0, 1), Ipv4Addr::new(10, 0, 0, 2))
    }

    #[test]
    fn dns_nxdomain_rcode() {
        let raw = udp_frame(&spec(), 53, 40000, &dns_response(9, "x.example", 1, 3, 0));
        let pv = dissect(&raw, Timestamp::ZERO).unwrap();
        assert!(pv.has(Layers::DNS));
        assert_eq!(pv.field_u64(FieldId::DnsRcode), Ok(3));
        assert_eq!(pv.field_u64(FieldId::DnsAncount), Ok(0));
        assert_eq!(pv.field_u64(FieldId::DnsQtype), Ok(1));
    }

    #[test]
    fn dns_query_and_answers() {
        let q = udp_frame(&spec(), 40000, 53, &dns_query(1, "host.test", 28));
        let pv = dissect(&q, Timestamp::ZERO).unwrap();
        assert!(!pv.dns().unwrap().is_response);
        assert_eq!(pv.field_u64(FieldId::DnsQtype), Ok(28));
        let r = udp_frame(&spec(), 53, 40000, &dns_response(1, "host.test", 1, 0, 2));
        let pv = dissect(&r, Timestamp::ZERO).unwrap();
        assert!(pv.dns().unwrap().is_response);
        assert_eq!(pv.field_u64(FieldId::DnsAncount), Ok(2));
    }

    #[test]
    fn tcp_syn_fields() {
        let raw = tcp_frame(&spec(), 40000, 22, TcpFlags::SYN, 77, &[]);
        let pv = dissect(&raw, Timestamp::from_micros(1_500_000)).unwrap();
        assert_ne!(pv.field_u64(FieldId::TcpFlags).unwrap() & u64::from(TcpFlags::SYN.0), 0);
        assert_eq!(pv.field_u64(FieldId::TcpDport), Ok(22));
        assert_eq!(pv.field_u64(FieldId::TcpSeq), Ok(77));
        assert_eq!(pv.field_f64(FieldId::PktTs), Ok(1.5));
        assert_eq!(pv.field_u64(FieldId::PktPayloadLen), Ok(0));
        assert!(pv.field_u64(FieldId::DnsRcode).is_err());
    }

    #[test]
    fn truncated_ip_is_malformed() {
        let raw = tcp_frame(&spec(), 1, 2, TcpFlags::SYN, 0, &[]);
        assert!(matches!(dissect(&raw[..20], Timestamp::ZERO), Err(PacketError::Malformed(_))));
        assert!(matches!(dissect(&raw[..10], Timestamp::ZERO), Err(PacketError::Malformed(_))));
    }

    #[test]
    fn length_fields_are_bounds_checked() {
        let mut raw = udp_frame(&spec(), 1, 2, b"abcd");
        raw[ETH_HDR + 2] = 0xff;
        assert!(dissect(&raw, Timestamp::ZERO).is_err());
        let mut raw = udp_frame(&spec(), 1, 2, b"abcd");
        raw[ETH_HDR + 20 + 5] = 0xff;
        assert!(dissect(&raw, Timestamp::ZERO).is_err());
        let mut raw = tcp_frame(&spec(), 1, 2, TcpFlags::ACK, 0, b"xyz");
        raw[ETH_HDR + 20 + 12] = 0xf0;
        assert!(dissect(&raw, Timestamp::ZERO).is_err());
    }

    #[test]
    fn non_ipv4_leaves_fields_unreadable() {
        let mut raw = udp_frame(&spec(), 1, 2, b"x");
        raw[12] = 0x86;
        raw[13] = 0xdd;
        let pv = dissect(&raw, Timestamp::ZERO).unwrap();
        assert!(pv.field_u64(FieldId::IpSrc).is_err());
        assert_eq!(pv.field_u64(FieldId::PktLen), Ok(raw.len() as u64));
    }

    #[test]
    fn ethernet_padding_is_ignored() {
        let mut raw = udp_frame(&spec(), 1, 2, b"ab");
        raw.extend_from_slice(&[0u8; 16]);
        let pv = dissect(&raw, Timestamp::ZERO).unwrap();
        assert_eq!(pv.payload(), b"ab");
    }

    #[test]
    fn garbage_on_port_53_is_not_dns() {
        let raw = udp_frame(&spec(), 53, 53, b"short");
        let pv = dissect(&raw, Timestamp::ZERO).unwrap();
        assert!(!pv.has(Layers::DNS));
    }

    #[test]
    fn compressed_name_and_pointer_loop() {
        let mut msg = dns_query(1, "a.b", 1);
        // Rewrite the question as a pointer to itself.
        msg.truncate(12);
        msg.extend_from_slice(&[0xc0, 12, 0, 1, 0, 1]);
        assert_eq!(parse_dns(&msg).unwrap().qname, None);
        let mut msg = dns_query(1, "a.b", 1);
        msg.truncate(12);
        msg.extend_from_slice(&[0xc0, 18, 0, 1, 0, 1, 1, b'Q', 0]);
        let info = parse_dns(&msg).unwrap();
        assert_eq!(info.qname.as_deref(), Some("q"));
        assert_eq!(info.qtype, Some(1));
    }

    proptest! {
        #[test]
        fn rebuild_preserves_fields(
            src: u32, dst: u32, sport: u16, dport: u16, flags: u8, seq: u32,
            payload in proptest::collection::vec(any::<u8>(), 0..200),
            udp: bool,
        ) {
            let s = FrameSpec::new(Ipv4Addr::from(src), Ipv4Addr::from(dst));
            let raw = if udp && sport != 53 && dport != 53 {
                udp_frame(&s, sport, dport, &payload)
            } else {
                tcp_frame(&s, sport, dport, TcpFlags(flags), seq, &payload)
            };
            let pv = dissect(&raw, Timestamp::ZERO).unwrap();
            let s2 = FrameSpec::new(pv.ip_src(), pv.ip_dst());
            let rebuilt = if pv.has(Layers::UDP) {
                udp_frame(&s2, pv.sport(), pv.dport(), pv.payload())
            } else {
                tcp_frame(&s2, pv.sport(), pv.dport(), TcpFlags(pv.tcp_flags()), pv.tcp_seq(), pv.payload())
            };
            prop_assert_eq!(&rebuilt, &raw);
            let pv2 = dissect(&rebuilt, Timestamp::ZERO).unwrap();
            for f in FieldId::ALL {
                prop_assert_eq!(pv.extract_field(f), pv2.extract_field(f));
            }
        }

        #[test]
        fn arbitrary_bytes_never_panic(mut raw in proptest::collection::vec(any::<u8>(), 0..120), ipv4: bool) {
            if ipv4 && raw.len() >= 15 {
                raw[12] = 0x08;
                raw[13] = 0x00;
                raw[14] = 0x45;
            }
            let _ = dissect(&raw, Timestamp::ZERO);
        }
    }
}
