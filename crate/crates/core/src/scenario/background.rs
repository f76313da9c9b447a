//! Unrelated web browsing: each host looks up a name, then opens an HTTPS
//! connection and exchanges one short request and reply.
//!
//! Payloads stay under 100 bytes and all ports are well known, so no
//! bundled program classifies this traffic as anything but benign.

use std::net::Ipv4Addr;

use super::{Gen, ScenarioSpec};
use crate::packet::TcpFlags;

const RESOLVER: Ipv4Addr = Ipv4Addr::new(10, 9, 0, 53);

pub(super) fn add(g: &mut Gen, spec: &ScenarioSpec) {
    if spec.background_rate <= 0.0 {
        return;
    }
    for i in 0..spec.background_hosts {
        let host = Ipv4Addr::new(10, 9, 1, 10 + (i % 240) as u8);
        g.host(host, "background");
        let mut t = g.gap(spec.background_rate);
        while t <= spec.duration {
            let server = Ipv4Addr::new(203, 0, 113, 10 + g.rng_index(4) as u8);
            let name = format!("www{}.example.com", server.octets()[3]);
            g.lookup(t, host, RESOLVER, &name, 1, 0, 0.004, None);
            let sport = g.ephemeral();
            let t0 = t + 0.01;
            g.handshake(t0, host, server, sport, 443, 0.02);
            g.tcp(t0 + 0.05, host, server, (sport, 443), TcpFlags(TcpFlags::PSH.0 | TcpFlags::ACK.0), &[0x17; 40]);
            g.tcp(t0 + 0.07, server, host, (443, sport), TcpFlags(TcpFlags::PSH.0 | TcpFlags::ACK.0), &[0x17; 60]);
            t += g.gap(spec.background_rate);
        }
    }
}
