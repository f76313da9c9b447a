//! Classic pcap trace I/O (Ethernet link type only).
//!
//! Files are written little-endian with microsecond timestamps, so a trace
//! round-trips through [`Timestamp`] exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::Duration;

use pcap_file::pcap::{PcapHeader, PcapPacket, PcapReader, PcapWriter};
use pcap_file::{DataLink, Endianness, TsResolution};
use thiserror::Error;

use crate::time::Timestamp;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("malformed pcap: {0}")]
    Format(String),
    #[error("unsupported link type {0:?}; only Ethernet captures are accepted")]
    LinkType(DataLink),
}

impl From<pcap_file::PcapError> for TraceError {
    fn from(e: pcap_file::PcapError) -> Self {
        match e {
            pcap_file::PcapError::IoError(io) => TraceError::Io(io),
            other => TraceError::Format(other.to_string()),
        }
    }
}

/// One captured frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub ts: Timestamp,
    pub data: Vec<u8>,
}

impl Record {
    pub fn new(ts: Timestamp, data: Vec<u8>) -> Self {
        Record { ts, data }
    }
}

pub struct TraceWriter<W: Write> {
    inner: PcapWriter<W>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(w: W) -> Result<Self, TraceError> {
        let header = PcapHeader {
            endianness: Endianness::Little,
            ts_resolution: TsResolution::MicroSecond,
            datalink: DataLink::ETHERNET,
            ..PcapHeader::default()
        };
        Ok(TraceWriter { inner: PcapWriter::with_header(w, header)? })
    }

    pub fn write(&mut self, ts: Timestamp, frame: &[u8]) -> Result<(), TraceError> {
        let len = u32::try_from(frame.len()).map_err(|_| TraceError::Format("frame too large".into()))?;
        self.inner.write_packet(&PcapPacket::new(Duration::from_micros(ts.micros()), len, frame))?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.inner.into_writer()
    }
}

/// Streams records in file order. Nanosecond captures are truncated to
/// microseconds.
pub struct TraceReader<R: Read> {
    inner: PcapReader<R>,
}

impl<R: Read> TraceReader<R> {
    pub fn new(r: R) -> Result<Self, TraceError> {
        let inner = PcapReader::new(r)?;
        match inner.header().datalink {
            DataLink::ETHERNET => Ok(TraceReader { inner }),
            other => Err(TraceError::LinkType(other)),
        }
    }
}

impl<R: Read> Iterator for TraceReader<R> {
    type Item = Result<Record, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        let pkt = self.inner.next_packet()?;
        Some(pkt.map_err(TraceError::from).map(|p| {
            let us = u64::try_from(p.timestamp.as_micros()).unwrap_or(u64::MAX);
            Record { ts: Timestamp::from_micros(us), data: p.data.into_owned() }
        }))
    }
}

pub fn open_trace(path: &Path) -> Result<TraceReader<BufReader<File>>, TraceError> {
    TraceReader::new(BufReader::new(File::open(path)?))
}

pub fn read_trace(path: &Path) -> Result<Vec<Record>, TraceError> {
    open_trace(path)?.collect()
}

pub fn write_trace(path: &Path, records: &[Record]) -> Result<(), TraceError> {
    let mut w = TraceWriter::new(BufWriter::new(File::create(path)?))?;
    for r in records {
        w.write(r.ts, &r.data)?;
    }
    w.into_inner().flush()?;
    Ok(())
}

/// Encodes a whole trace in memory.
pub fn encode_trace(records: &[Record]) -> Result<Vec<u8>, TraceError> {
    let mut w = TraceWriter::new(Vec::new())?;
    for r in records {
        w.write(r.ts, &r.data)?;
    }
    Ok(w.into_inner())
}

#[cfg(test)]
mod tests {
    use std::io::Cursor;

    use super::*;

    fn sample() -> Vec<Record> {
        vec![
            Record::new(Timestamp::from_micros(1_600_000_000_000_001), vec![1; 60]),
            Record::new(Timestamp::from_micros(1_600_000_000_999_999), vec![2; 14]),
            Record::new(Timestamp::from_micros(1_600_000_001_000_000), vec![]),
        ]
    }

    #[test]
    fn round_trip_is_exact() {
        let bytes = encode_trace(&sample()).unwrap();
        let back: Vec<Record> = TraceReader::new(Cursor::new(bytes)).unwrap().collect::<Result<_, _>>().unwrap();
        assert_eq!(back, sample());
    }

    #[test]
    fn header_is_little_endian_ethernet() {
        let bytes = encode_trace(&[]).unwrap();
        assert_eq!(bytes.len(), 24);
        assert_eq!(&bytes[..4], &[0xd4, 0xc3, 0xb2, 0xa1]);
        assert_eq!(u32::from_le_bytes(bytes[20..24].try_into().unwrap()), 1);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pcap");
        write_trace(&path, &sample()).unwrap();
        assert_eq!(read_trace(&path).unwrap(), sample());
    }

    #[test]
    fn rejects_other_link_types() {
        let header = PcapHeader { datalink: DataLink::RAW, endianness: Endianness::Little, ..PcapHeader::default() };
        let w = PcapWriter::with_header(Vec::new(), header).unwrap();
        let err = TraceReader::new(Cursor::new(w.into_writer())).err().unwrap();
        assert!(matches!(err, TraceError::LinkType(DataLink::RAW)));
    }

    #[test]
    fn garbage_is_a_format_error() {
        assert!(matches!(TraceReader::new(Cursor::new(vec![0u8; 30])), Err(TraceError::Format(_))));
    }

    #[test]
    fn missing_file_is_io() {
        assert!(matches!(read_trace(Path::new("/nonexistent/x.pcap")), Err(TraceError::Io(_))));
    }
}
