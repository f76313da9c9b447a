//! Packet dissection and field extraction.
//!
//! Only the layers the bundled programs need are parsed: Ethernet II, IPv4,
//! TCP, UDP and the DNS header plus first question. Fields of layers that
//! were not parsed are unavailable rather than zero.

mod build;
mod dissect;
mod field;
mod payload;

pub use build::{dns_query, dns_response, tcp_frame, udp_frame, FrameSpec, TcpFlags};
pub use dissect::{dissect, DnsInfo, Layers, PacketError, PacketView};
pub use field::{canonical_qname, compose_flowkey, render_key, FieldId, FieldUnavailable, FlowKey};
pub use payload::{bit_entropy, payload_stats, uniform_entropy_stats, PayloadStats};
