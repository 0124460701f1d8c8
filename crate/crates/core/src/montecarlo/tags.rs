//! Time tags and the on-disk time-tag formats.
//!
//! Binary layout (little-endian): a 16-byte header
//! `{ magic "HOMT", version u16, reserved u16, resolution_ps u32, channel_count u32 }`
//! followed by 16-byte records `{ timestamp u64 (ps), channel u8, pad [u8; 7] }`.
//!
//! Text layout: a `timestamp_ps,channel` header line, then one record per
//! line with the numeric channel code.

use std::io::{self, BufRead, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"HOMT";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;
pub const RECORD_LEN: usize = 16;

/// Detector channel: PBS output port (C or D) × wavelength arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Channel {
    CSignal = 0,
    CIdler = 1,
    DSignal = 2,
    DIdler = 3,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::CSignal, Channel::CIdler, Channel::DSignal, Channel::DIdler];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Channel> {
        Channel::ALL.get(code as usize).copied()
    }

    pub fn is_signal(self) -> bool {
        matches!(self, Channel::CSignal | Channel::DSignal)
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::CSignal => "C_signal",
            Channel::CIdler => "C_idler",
            Channel::DSignal => "D_signal",
            Channel::DIdler => "D_idler",
        }
    }
}

/// One detection event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeTag {
    /// Picoseconds since acquisition start.
    pub timestamp: u64,
    pub channel: Channel,
}

/// A time-ordered acquisition together with its length.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TagStream {
    pub tags: Vec<TimeTag>,
    pub duration_ps: u64,
}

impl TagStream {
    pub fn duration_s(&self) -> f64 {
        self.duration_ps as f64 * 1e-12
    }

    /// Index of the first out-of-order tag, if any.
    pub fn first_unsorted(&self) -> Option<usize> {
        self.tags
            .windows(2)
            .position(|w| w[1].timestamp < w[0].timestamp)
            .map(|i| i + 1)
    }

    /// Sorts by timestamp, then channel.
    pub fn sort(&mut self) {
        self.tags.sort_unstable();
    }

    /// Timestamps of one channel, in stream order.
    pub fn channel_times(&self, channel: Channel) -> Vec<u64> {
        self.tags
            .iter()
            .filter(|t| t.channel == channel)
            .map(|t| t.timestamp)
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum TagFormatError {
    #[error("bad magic, not a HOMT file")]
    BadMagic,
    #[error("unsupported format version {0}")]
    Version(u16),
    #[error("unsupported resolution {0} ps (only 1 ps)")]
    Resolution(u32),
    #[error("record {index}: unknown channel code {code}")]
    Channel { index: usize, code: u8 },
    #[error("truncated record at byte {0}")]
    Truncated(usize),
    #[error("line {line}: {msg}")]
    Text { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Writes the binary form.
pub fn write_binary<W: Write>(mut w: W, tags: &[TimeTag]) -> io::Result<()> {
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(&MAGIC);
    header[4..6].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
    header[8..12].copy_from_slice(&1u32.to_le_bytes());
    header[12..16].copy_from_slice(&(Channel::ALL.len() as u32).to_le_bytes());
    w.write_all(&header)?;
    let mut rec = [0u8; RECORD_LEN];
    for t in tags {
        rec[0..8].copy_from_slice(&t.timestamp.to_le_bytes());
        rec[8] = t.channel.code();
        w.write_all(&rec)?;
    }
    w.flush()
}

/// Reads the binary form. Padding bytes are ignored.
pub fn read_binary<R: Read>(mut r: R) -> Result<Vec<TimeTag>, TagFormatError> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)?;
    if header[0..4] != MAGIC {
        return Err(TagFormatError::BadMagic);
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != FORMAT_VERSION {
        return Err(TagFormatError::Version(version));
    }
    let resolution = u32::from_le_bytes(header[8..12].try_into().unwrap());
    if resolution != 1 {
        return Err(TagFormatError::Resolution(resolution));
    }
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() % RECORD_LEN != 0 {
        return Err(TagFormatError::Truncated(
            HEADER_LEN + body.len() / RECORD_LEN * RECORD_LEN,
        ));
    }
    body.chunks_exact(RECORD_LEN)
        .enumerate()
        .map(|(index, rec)| {
            let timestamp = u64::from_le_bytes(rec[0..8].try_into().unwrap());
            let code = rec[8];
            let channel = Channel::from_code(code).ok_or(TagFormatError::Channel { index, code })?;
            Ok(TimeTag { timestamp, channel })
        })
        .collect()
}

pub fn write_csv<W: Write>(mut w: W, tags: &[TimeTag]) -> io::Result<()> {
    writeln!(w, "timestamp_ps,channel")?;
    for t in tags {
        writeln!(w, "{},{}", t.timestamp, t.channel.code())?;
    }
    w.flush()
}

pub fn read_csv<R: BufRead>(r: R) -> Result<Vec<TimeTag>, TagFormatError> {
    let mut tags = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if line_no == 1 && trimmed == "timestamp_ps,channel" {
            continue;
        }
        let err = |msg: &str| TagFormatError::Text {
            line: line_no,
            msg: msg.to_string(),
        };
        let (ts, ch) = trimmed.split_once(',').ok_or_else(|| err("expected two fields"))?;
        let timestamp = ts.trim().parse::<u64>().map_err(|_| err("bad timestamp"))?;
        let code = ch.trim().parse::<u8>().map_err(|_| err("bad channel"))?;
        let channel = Channel::from_code(code).ok_or_else(|| err("unknown channel code"))?;
        tags.push(TimeTag { timestamp, channel });
    }
    Ok(tags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_tag() -> impl Strategy<Value = TimeTag> {
        (any::<u64>(), 0u8..4).prop_map(|(timestamp, c)| TimeTag {
            timestamp,
            channel: Channel::from_code(c).unwrap(),
        })
    }

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        write_binary(
            &mut buf,
            &[TimeTag {
                timestamp: 0x0102_0304_0506_0708,
                channel: Channel::DIdler,
            }],
        )
        .unwrap();
        assert_eq!(buf.len(), HEADER_LEN + RECORD_LEN);
        assert_eq!(&buf[0..4], b"HOMT");
        assert_eq!(&buf[4..8], &[1, 0, 0, 0]);
        assert_eq!(&buf[8..12], &[1, 0, 0, 0]);
        assert_eq!(&buf[12..16], &[4, 0, 0, 0]);
        assert_eq!(&buf[16..24], &[8, 7, 6, 5, 4, 3, 2, 1]);
        assert_eq!(buf[24], 3);
        assert!(buf[25..32].iter().all(|&b| b == 0));
    }

    #[test]
    fn binary_rejects_garbage() {
        assert!(matches!(
            read_binary(&b"NOPE000000000000"[..]),
            Err(TagFormatError::BadMagic)
        ));
        let mut buf = Vec::new();
        write_binary(&mut buf, &[]).unwrap();
        buf.extend_from_slice(&[0u8; 5]);
        assert!(matches!(read_binary(&buf[..]), Err(TagFormatError::Truncated(_))));
        let mut buf = Vec::new();
        write_binary(
            &mut buf,
            &[TimeTag {
                timestamp: 1,
                channel: Channel::CIdler,
            }],
        )
        .unwrap();
        buf[24] = 9;
        assert!(matches!(
            read_binary(&buf[..]),
            Err(TagFormatError::Channel { index: 0, code: 9 })
        ));
    }

    #[test]
    fn csv_reports_line() {
        let text = "timestamp_ps,channel\n10,0\nabc,1\n";
        match read_csv(text.as_bytes()) {
            Err(TagFormatError::Text { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unsorted_detection() {
        let mk = |t| TimeTag {
            timestamp: t,
            channel: Channel::CSignal,
        };
        let s = TagStream {
            tags: vec![mk(1), mk(5), mk(3)],
            duration_ps: 10,
        };
        assert_eq!(s.first_unsorted(), Some(2));
    }

    proptest! {
        #[test]
        fn formats_round_trip(tags in proptest::collection::vec(arb_tag(), 0..64)) {
            let mut bin = Vec::new();
            write_binary(&mut bin, &tags).unwrap();
            prop_assert_eq!(read_binary(&bin[..]).unwrap(), tags.clone());
            let mut txt = Vec::new();
            write_csv(&mut txt, &tags).unwrap();
            prop_assert_eq!(read_csv(&txt[..]).unwrap(), tags);
        }
    }
}
