//! Frame builders used by the scenario generator and tests.

use std::net::Ipv4Addr;
use std::ops::BitOr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TcpFlags(pub u8);

impl TcpFlags {
    pub const FIN: TcpFlags = TcpFlags(0x01);
    pub const SYN: TcpFlags = TcpFlags(0x02);
    pub const RST: TcpFlags = TcpFlags(0x04);
    pub const PSH: TcpFlags = TcpFlags(0x08);
    pub const ACK: TcpFlags = TcpFlags(0x10);
    pub const SYN_ACK: TcpFlags = TcpFlags(0x12);
}

impl BitOr for TcpFlags {
    type Output = TcpFlags;
    fn bitor(self, rhs: TcpFlags) -> TcpFlags {
        TcpFlags(self.0 | rhs.0)
    }
}

/// Addressing shared by the L2/L3 headers of a built frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameSpec {
    pub src_mac: [u8; 6],
    pub dst_mac: [u8; 6],
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub ttl: u8,
    pub ip_id: u16,
}

impl FrameSpec {
    /// MACs are locally administered and derived from the IP addresses.
    pub fn new(src: Ipv4Addr, dst: Ipv4Addr) -> Self {
        FrameSpec { src_mac: mac_for(src), dst_mac: mac_for(dst), src, dst, ttl: 64, ip_id: 0 }
    }

    pub fn with_ip_id(mut self, id: u16) -> Self {
        self.ip_id = id;
        self
    }
}

fn mac_for(ip: Ipv4Addr) -> [u8; 6] {
    let o = ip.octets();
    [0x02, 0x00, o[0], o[1], o[2], o[3]]
}

fn checksum(chunks: &[&[u8]]) -> u16 {
    let mut sum: u32 = 0;
    for chunk in chunks {
        let mut it = chunk.chunks_exact(2);
        for w in &mut it {
            sum += u32::from(u16::from_be_bytes([w[0], w[1]]));
        }
        if let [b] = it.remainder() {
            sum += u32::from(*b) << 8;
        }
    }
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

fn frame(spec: &FrameSpec, proto: u8, l4: Vec<u8>, csum_at: usize) -> Vec<u8> {
    let mut l4 = l4;
    let pseudo = [
        &spec.src.octets()[..],
        &spec.dst.octets()[..],
        &[0, proto],
        &(l4.len() as u16).to_be_bytes(),
    ]
    .concat();
    let mut c = checksum(&[&pseudo, &l4]);
    if proto == 17 && c == 0 {
        c = 0xffff;
    }
    l4[csum_at..csum_at + 2].copy_from_slice(&c.to_be_bytes());

    let total = 20 + l4.len();
    let mut out = Vec::with_capacity(14 + total);
    out.extend_from_slice(&spec.dst_mac);
    out.extend_from_slice(&spec.src_mac);
    out.extend_from_slice(&0x0800u16.to_be_bytes());
    let mut ip = [0u8; 20];
    ip[0] = 0x45;
    ip[2..4].copy_from_slice(&(total as u16).to_be_bytes());
    ip[4..6].copy_from_slice(&spec.ip_id.to_be_bytes());
    ip[6] = 0x40;
    ip[8] = spec.ttl;
    ip[9] = proto;
    ip[12..16].copy_from_slice(&spec.src.octets());
    ip[16..20].copy_from_slice(&spec.dst.octets());
    let c = checksum(&[&ip]);
    ip[10..12].copy_from_slice(&c.to_be_bytes());
    out.extend_from_slice(&ip);
    out.extend_from_slice(&l4);
    out
}

pub fn tcp_frame(spec: &FrameSpec, sport: u16, dport: u16, flags: TcpFlags, seq: u32, payload: &[u8]) -> Vec<u8> {
    let mut l4 = Vec::with_capacity(20 + payload.len());
    l4.extend_from_slice(&sport.to_be_bytes());
    l4.extend_from_slice(&dport.to_be_bytes());
    l4.extend_from_slice(&seq.to_be_bytes());
    let ack: u32 = if flags.0 & TcpFlags::ACK.0 != 0 { 1 } else { 0 };
    l4.extend_from_slice(&ack.to_be_bytes());
    l4.push(5 << 4);
    l4.push(flags.0);
    l4.extend_from_slice(&65535u16.to_be_bytes());
    l4.extend_from_slice(&[0, 0, 0, 0]);
    l4.extend_from_slice(payload);
    frame(spec, 6, l4, 16)
}

pub fn udp_frame(spec: &FrameSpec, sport: u16, dport: u16, payload: &[u8]) -> Vec<u8> {
    let mut l4 = Vec::with_capacity(8 + payload.len());
    l4.extend_from_slice(&sport.to_be_bytes());
    l4.extend_from_slice(&dport.to_be_bytes());
    l4.extend_from_slice(&((8 + payload.len()) as u16).to_be_bytes());
    l4.extend_from_slice(&[0, 0]);
    l4.extend_from_slice(payload);
    frame(spec, 17, l4, 6)
}

fn dns_message(id: u16, flags: u16, qname: &str, qtype: u16, ancount: u16) -> Vec<u8> {
    let mut m = Vec::with_capacity(64);
    m.extend_from_slice(&id.to_be_bytes());
    m.extend_from_slice(&flags.to_be_bytes());
    m.extend_from_slice(&1u16.to_be_bytes());
    m.extend_from_slice(&ancount.to_be_bytes());
    m.extend_from_slice(&[0, 0, 0, 0]);
    // Case is preserved on the wire; the dissector canonicalizes.
    for label in qname.trim_end_matches('.').split('.').filter(|l| !l.is_empty()) {
        let bytes = &label.as_bytes()[..label.len().min(63)];
        m.push(bytes.len() as u8);
        m.extend_from_slice(bytes);
    }
    m.push(0);
    m.extend_from_slice(&qtype.to_be_bytes());
    m.extend_from_slice(&1u16.to_be_bytes());
    m
}

/// Recursive query with one question of class IN.
pub fn dns_query(id: u16, qname: &str, qtype: u16) -> Vec<u8> {
    dns_message(id, 0x0100, qname, qtype, 0)
}

/// Response echoing the question followed by `ancount` A records pointing
/// at TEST-NET addresses.
pub fn dns_response(id: u16, qname: &str, qtype: u16, rcode: u8, ancount: u16) -> Vec<u8> {
    let flags = 0x8180 | u16::from(rcode & 0x0f);
    let mut m = dns_message(id, flags, qname, qtype, ancount);
    for i in 0..ancount {
        m.extend_from_slice(&[0xc0, 12]);
        m.extend_from_slice(&1u16.to_be_bytes());
        m.extend_from_slice(&1u16.to_be_bytes());
        m.extend_from_slice(&300u32.to_be_bytes());
        m.extend_from_slice(&4u16.to_be_bytes());
        m.extend_from_slice(&[192, 0, 2, (i % 250 + 1) as u8]);
    }
    m
}
