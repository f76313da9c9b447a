//! Stream monitoring engine driven by declarative programs.
//!
//! A program declares packet and timeout events, sketch-backed metrics,
//! arithmetic features over those metrics, and an extended finite state
//! machine (XFSM) of guarded transitions and actions. The [`engine`] runs the
//! program one packet at a time:
//!
//! ```text
//! raw frame -> dissect -> match event -> primary key -> flow state
//!           -> metric operations -> features -> decision entries -> actions
//! ```
//!
//! Module map:
//!
//! * [`sketch`]: hash family, Bloom-pair variation detector, count and
//!   time-decaying variation monitors, the composite multi-hash metric and a
//!   d-left hash table.
//! * [`packet`]: Ethernet/IPv4/TCP/UDP/DNS dissection, flow keys and payload
//!   statistics.
//! * [`program`]: the program document, expression language and validation.
//! * [`engine`]: the per-packet pipeline, timeouts and verdicts.
//! * [`library`]: bundled programs for the reference use cases.
//! * [`pcap`] and [`scenario`]: trace I/O and the synthetic trace generator.
//! * [`replay`]: trace replay over one or more engine instances.

pub mod engine;
pub mod library;
pub mod packet;
pub mod pcap;
pub mod program;
pub mod replay;
pub mod scenario;
pub mod sketch;
pub mod time;

pub use engine::{Alert, Disposition, Engine, RunCounters, Verdict};
pub use packet::{dissect, FieldId, FlowKey, PacketView, PayloadStats};
pub use program::{Program, ProgramError, Warning};
pub use time::Timestamp;
