//! File formats: binary and CSV time-tag streams, histogram CSV, loss budgets.
//!
//! Binary layout (`.ttag`), all integers little-endian:
//!
//! ```text
//! "PTT1" | version: u16 | resolution_ps: u32 | channel_count: u8
//! then N records of { channel: u8, t: u64 }   (9 bytes each)
//! ```
//!
//! `t` counts units of `resolution_ps`; readers convert to picoseconds.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::model::{first_unsorted, Histogram, LossBudget, TimeTag};

pub const MAGIC: &[u8; 4] = b"PTT1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 11;
pub const RECORD_LEN: usize = 9;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a PTT1 tag file (bad magic)")]
    BadMagic,
    #[error("unsupported tag file version {0}")]
    Version(u16),
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("invalid header: {0}")]
    Header(String),
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("tag {index}: channel {channel} outside declared channel count {count}")]
    Channel { index: usize, channel: u8, count: u8 },
    #[error("tag {index}: time overflows 64-bit picoseconds")]
    Overflow { index: usize },
}

/// A binary tag file as stored: header fields plus raw records in file units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagFile {
    pub version: u16,
    pub resolution_ps: u32,
    pub channel_count: u8,
    pub records: Vec<(u8, u64)>,
}

impl TagFile {
    /// Wraps a picosecond stream at 1 ps resolution.
    pub fn from_tags(tags: &[TimeTag]) -> Self {
        let channel_count = tags.iter().map(|t| t.channel).max().map_or(0, |c| c + 1);
        Self {
            version: VERSION,
            resolution_ps: 1,
            channel_count,
            records: tags.iter().map(|t| (t.channel, t.t)).collect(),
        }
    }

    /// Records converted to picoseconds.
    pub fn tags(&self) -> Result<Vec<TimeTag>, FormatError> {
        let res = self.resolution_ps as u64;
        self.records
            .iter()
            .enumerate()
            .map(|(index, &(channel, t))| {
                if channel >= self.channel_count {
                    return Err(FormatError::Channel { index, channel, count: self.channel_count });
                }
                let t = t.checked_mul(res).ok_or(FormatError::Overflow { index })?;
                Ok(TimeTag::new(channel, t))
            })
            .collect()
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, FormatError> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => FormatError::Truncated("header".into()),
            _ => FormatError::Io(e),
        })?;
        if &header[..4] != MAGIC {
            return Err(FormatError::BadMagic);
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != VERSION {
            return Err(FormatError::Version(version));
        }
        let resolution_ps = u32::from_le_bytes(header[6..10].try_into().unwrap());
        if resolution_ps == 0 {
            return Err(FormatError::Header("resolution_ps must be >= 1".into()));
        }
        let channel_count = header[10];
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        if body.len() % RECORD_LEN != 0 {
            return Err(FormatError::Truncated(format!(
                "{} trailing bytes after {} whole records",
                body.len() % RECORD_LEN,
                body.len() / RECORD_LEN
            )));
        }
        let records = body
            .chunks_exact(RECORD_LEN)
            .map(|rec| (rec[0], u64::from_le_bytes(rec[1..].try_into().unwrap())))
            .collect();
        Ok(Self { version, resolution_ps, channel_count, records })
    }

    pub fn write_to(&self, w: impl Write) -> Result<(), FormatError> {
        let mut w = BufWriter::new(w);
        w.write_all(MAGIC)?;
        w.write_all(&self.version.to_le_bytes())?;
        w.write_all(&self.resolution_ps.to_le_bytes())?;
        w.write_all(&[self.channel_count])?;
        for &(ch, t) in &self.records {
            w.write_all(&[ch])?;
            w.write_all(&t.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_path(path: impl AsRef<Path>) -> Result<Self, FormatError> {
        Self::read_from(BufReader::new(std::fs::File::open(path)?))
    }

    pub fn write_path(&self, path: impl AsRef<Path>) -> Result<(), FormatError> {
        self.write_to(std::fs::File::create(path)?)
    }
}

/// Reads a binary tag file into a picosecond stream.
pub fn read_tags(path: impl AsRef<Path>) -> Result<Vec<TimeTag>, FormatError> {
    TagFile::read_path(path)?.tags()
}

/// Writes a picosecond stream at 1 ps resolution.
pub fn write_tags(path: impl AsRef<Path>, tags: &[TimeTag]) -> Result<(), FormatError> {
    TagFile::from_tags(tags).write_path(path)
}

/// Reads `channel,t_ps` rows. A header row and `#` comments are skipped.
pub fn read_tags_csv(r: impl Read) -> Result<Vec<TimeTag>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("channel") {
            continue;
        }
        let bad = |msg: String| FormatError::Line { line: i + 1, msg };
        let (ch, t) = line.split_once(',').ok_or_else(|| bad("expected `channel,t_ps`".into()))?;
        let ch = ch.trim().parse::<u8>().map_err(|e| bad(format!("channel: {e}")))?;
        let t = t.trim().parse::<u64>().map_err(|e| bad(format!("t_ps: {e}")))?;
        out.push(TimeTag::new(ch, t));
    }
    Ok(out)
}

pub fn write_tags_csv(w: impl Write, tags: &[TimeTag]) -> Result<(), FormatError> {
    let mut w = BufWriter::new(w);
    writeln!(w, "channel,t_ps")?;
    for t in tags {
        writeln!(w, "{},{}", t.channel, t.t)?;
    }
    w.flush()?;
    Ok(())
}

/// Checks a stream is time-ordered, naming the first offending index.
pub fn check_sorted(tags: &[TimeTag]) -> crate::Result<()> {
    match first_unsorted(tags) {
        Some(index) => Err(crate::Error::Unsorted { index }),
        None => Ok(()),
    }
}

pub fn write_histogram_csv(w: impl Write, h: &Histogram) -> Result<(), FormatError> {
    let mut w = BufWriter::new(w);
    writeln!(w, "# bin_width_ps={}", h.bin_width())?;
    writeln!(w, "# origin_ps={}", h.origin())?;
    writeln!(w, "bin_left_edge_ps,counts")?;
    for (j, c) in h.counts().iter().enumerate() {
        writeln!(w, "{},{}", h.bin_left(j), c)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_histogram_csv(r: impl Read) -> Result<Histogram, FormatError> {
    let mut bin_width = None;
    let mut origin = None;
    let mut counts = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        let bad = |msg: String| FormatError::Line { line: i + 1, msg };
        if let Some(meta) = line.strip_prefix('#') {
            if let Some((k, v)) = meta.trim().split_once('=') {
                match k.trim() {
                    "bin_width_ps" => {
                        bin_width = Some(v.trim().parse::<u64>().map_err(|e| bad(e.to_string()))?)
                    }
                    "origin_ps" => {
                        origin = Some(v.trim().parse::<i64>().map_err(|e| bad(e.to_string()))?)
                    }
                    _ => {}
                }
            }
            continue;
        }
        if line.is_empty() || line.starts_with("bin_left") {
            continue;
        }
        let (_, c) = line.split_once(',').ok_or_else(|| bad("expected `edge,counts`".into()))?;
        counts.push(c.trim().parse::<u64>().map_err(|e| bad(format!("counts: {e}")))?);
    }
    let bin_width = bin_width.ok_or_else(|| FormatError::Header("missing bin_width_ps".into()))?;
    let origin = origin.ok_or_else(|| FormatError::Header("missing origin_ps".into()))?;
    Histogram::from_counts(bin_width, origin, counts)
        .map_err(|e| FormatError::Header(e.to_string()))
}

/// Parses a loss budget: `name,transmission` rows plus `# click_rate_hz=` and
/// `# rep_rate_hz=` header lines. Errors name the offending line.
pub fn read_budget_csv(r: impl Read) -> Result<LossBudget, FormatError> {
    let mut components = Vec::new();
    let mut click = None;
    let mut rep = None;
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        let bad = |msg: String| FormatError::Line { line: i + 1, msg };
        if let Some(meta) = line.strip_prefix('#') {
            if let Some((k, v)) = meta.trim().split_once('=') {
                let value = || v.trim().parse::<f64>().map_err(|e| bad(format!("{}: {e}", k.trim())));
                match k.trim() {
                    "click_rate_hz" => click = Some(value()?),
                    "rep_rate_hz" => rep = Some(value()?),
                    _ => {}
                }
            }
            continue;
        }
        if line.is_empty() || line == "name,transmission" {
            continue;
        }
        let (name, t) = line
            .rsplit_once(',')
            .ok_or_else(|| bad("expected `name,transmission`".into()))?;
        let t: f64 = t.trim().parse().map_err(|e| bad(format!("transmission: {e}")))?;
        if !(t > 0.0 && t <= 1.0) {
            return Err(bad(format!("transmission {t} outside (0, 1]")));
        }
        components.push((name.trim().to_string(), t));
    }
    Ok(LossBudget {
        components,
        measured_click_rate_hz: click
            .ok_or_else(|| FormatError::Header("missing `# click_rate_hz=`".into()))?,
        rep_rate_hz: rep.ok_or_else(|| FormatError::Header("missing `# rep_rate_hz=`".into()))?,
    })
}

pub fn write_budget_csv(w: impl Write, b: &LossBudget) -> Result<(), FormatError> {
    let mut w = BufWriter::new(w);
    writeln!(w, "# click_rate_hz={:?}", b.measured_click_rate_hz)?;
    writeln!(w, "# rep_rate_hz={:?}", b.rep_rate_hz)?;
    writeln!(w, "name,transmission")?;
    for (name, t) in &b.components {
        writeln!(w, "{name},{t:?}")?;
    }
    w.flush()?;
    Ok(())
}
