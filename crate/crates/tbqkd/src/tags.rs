//! Raw time-tag dumps.
//!
//! A dump is two line-oriented text files.
//!
//! The tag file has one registered click per line, ordered by pulse:
//!
//! ```text
//! pulse_index,detector_id,timestamp_ps
//! 17,0,2941.337
//! ```
//!
//! `detector_id` is 0 for the time-basis detector and 1 for the phase-basis
//! detector; `timestamp_ps` is measured from the start of the pulse's
//! repetition frame.
//!
//! The pulse log records what Alice sent. Comment lines carry the number of
//! pulses sent per intensity class and preparation, then one line per pulse
//! that appears in the tag file:
//!
//! ```text
//! # sent signal phase 0 = 6999123
//! ...
//! pulse_index,class,basis,bit
//! 17,signal,time,1
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use tbqkd_core::detection::{accumulate, ClickEvent, DetectorId, DoubleClickPolicy, PulseMeta, SessionCounts, WindowSet};
use tbqkd_core::qubit::{BasisId, Bit};
use tbqkd_core::source::IntensityClass;

use crate::error::{Error, Result};
use crate::experiment::TaggedClick;

pub const TAG_HEADER: &str = "pulse_index,detector_id,timestamp_ps";
pub const PULSE_HEADER: &str = "pulse_index,class,basis,bit";

fn basis_name(b: BasisId) -> &'static str {
    match b {
        BasisId::Phase => "phase",
        BasisId::Time => "time",
        BasisId::Circular => "circular",
    }
}

fn parse_basis(s: &str) -> Option<BasisId> {
    match s {
        "phase" => Some(BasisId::Phase),
        "time" => Some(BasisId::Time),
        _ => None,
    }
}

fn parse_class(s: &str) -> Option<IntensityClass> {
    IntensityClass::ALL.into_iter().find(|c| c.name() == s)
}

pub fn write_tags<W: Write>(tags: &[TaggedClick], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{TAG_HEADER}")?;
    for (ev, _) in tags {
        writeln!(out, "{},{},{}", ev.pulse_index, ev.detector.index(), ev.timestamp_ps)?;
    }
    Ok(())
}

pub fn write_pulses<W: Write>(counts: &SessionCounts, tags: &[TaggedClick], mut out: W) -> std::io::Result<()> {
    for class in IntensityClass::ALL {
        for basis in BasisId::BB84 {
            for bit in [Bit::Zero, Bit::One] {
                let n = counts.pulses_sent[class.index()][basis.index()][bit.index()];
                writeln!(out, "# sent {} {} {} = {n}", class.name(), basis_name(basis), bit.index())?;
            }
        }
    }
    writeln!(out, "{PULSE_HEADER}")?;
    let mut last = None;
    for (ev, meta) in tags {
        if last == Some(ev.pulse_index) {
            continue;
        }
        last = Some(ev.pulse_index);
        writeln!(
            out,
            "{},{},{},{}",
            ev.pulse_index,
            meta.class.name(),
            basis_name(meta.basis),
            meta.bit.index()
        )?;
    }
    Ok(())
}

/// Writes both files of a dump.
pub fn dump(counts: &SessionCounts, tags: &[TaggedClick], tags_path: &Path, pulses_path: &Path) -> Result<()> {
    crate::report::with_output(Some(tags_path), |w| write_tags(tags, w))?;
    crate::report::with_output(Some(pulses_path), |w| write_pulses(counts, tags, w))
}

/// Alice's side of a dump: pulses sent and the metadata of clicked pulses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PulseLog {
    pub sent: SessionCounts,
    pub meta: BTreeMap<u64, PulseMeta>,
}

pub fn read_pulses<R: Read>(input: R) -> std::result::Result<PulseLog, String> {
    let mut log = PulseLog::default();
    let mut header_seen = false;
    for (k, line) in BufReader::new(input).lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        let at = |m: &str| format!("line {}: {m}", k + 1);
        if line.trim().is_empty() {
            continue;
        }
        if let Some(entry) = line.strip_prefix('#') {
            let (lhs, rhs) = entry.split_once('=').ok_or_else(|| at("malformed comment"))?;
            let words: Vec<&str> = lhs.split_whitespace().collect();
            let [_, class, basis, bit] = words[..] else {
                return Err(at("expected `# sent <class> <basis> <bit> = <n>`"));
            };
            let meta = PulseMeta {
                class: parse_class(class).ok_or_else(|| at("unknown class"))?,
                basis: parse_basis(basis).ok_or_else(|| at("unknown basis"))?,
                bit: parse_bit(bit).ok_or_else(|| at("bad bit"))?,
            };
            let n: u64 = rhs.trim().parse().map_err(|_| at("bad count"))?;
            log.sent.record_sent(&meta, n);
            continue;
        }
        if !header_seen {
            if line.trim() != PULSE_HEADER {
                return Err(at("expected the pulse-log header"));
            }
            header_seen = true;
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let [index, class, basis, bit] = cells[..] else {
            return Err(at("expected four fields"));
        };
        let index: u64 = index.parse().map_err(|_| at("bad pulse index"))?;
        let meta = PulseMeta {
            class: parse_class(class).ok_or_else(|| at("unknown class"))?,
            basis: parse_basis(basis).ok_or_else(|| at("unknown basis"))?,
            bit: parse_bit(bit).ok_or_else(|| at("bad bit"))?,
        };
        log.meta.insert(index, meta);
    }
    if !header_seen {
        return Err("missing pulse-log header".into());
    }
    Ok(log)
}

fn parse_bit(s: &str) -> Option<Bit> {
    s.parse::<usize>().ok().and_then(Bit::from_index)
}

pub fn read_tags<R: Read>(input: R) -> std::result::Result<Vec<ClickEvent>, String> {
    let mut out = Vec::new();
    let mut header_seen = false;
    for (k, line) in BufReader::new(input).lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        let at = |m: &str| format!("line {}: {m}", k + 1);
        if line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            if line.trim() != TAG_HEADER {
                return Err(at("expected the tag header"));
            }
            header_seen = true;
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let [index, det, t] = cells[..] else {
            return Err(at("expected three fields"));
        };
        let timestamp_ps: f64 = t.parse().map_err(|_| at("bad timestamp"))?;
        if !timestamp_ps.is_finite() {
            return Err(at("timestamp is not finite"));
        }
        out.push(ClickEvent {
            pulse_index: index.parse().map_err(|_| at("bad pulse index"))?,
            detector: det
                .parse::<usize>()
                .ok()
                .and_then(DetectorId::from_index)
                .ok_or_else(|| at("detector id must be 0 or 1"))?,
            timestamp_ps,
        });
    }
    if !header_seen {
        return Err("missing tag header".into());
    }
    Ok(out)
}

/// Rebuilds session counts from a dump.
pub fn counts_from_dump(
    tags_path: &Path,
    pulses_path: &Path,
    windows: &WindowSet,
    policy: DoubleClickPolicy,
) -> Result<SessionCounts> {
    let open = |p: &Path| File::open(p).map_err(|e| Error::io(p, e));
    let log = read_pulses(open(pulses_path)?).map_err(|m| Error::format(pulses_path, m))?;
    let events = read_tags(open(tags_path)?).map_err(|m| Error::format(tags_path, m))?;
    let mut tagged = Vec::with_capacity(events.len());
    for ev in events {
        let meta = log.meta.get(&ev.pulse_index).ok_or_else(|| {
            Error::format(tags_path, format!("pulse {} is missing from the pulse log", ev.pulse_index))
        })?;
        tagged.push((ev, *meta));
    }
    let mut counts = accumulate(tagged, windows, policy);
    counts.pulses_sent = log.sent.pulses_sent;
    if !counts.is_consistent() {
        return Err(Error::format(pulses_path, "more clicks than pulses sent in some row"));
    }
    Ok(counts)
}
