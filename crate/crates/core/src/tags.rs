//! Stranded tag tables: parsing, duplicate removal and strand alignment.
//!
//! Input rows are `chrom<TAB>start<TAB>end<TAB>strand` with 0-based, half-open
//! coordinates. A tag's location is its 5' end: `start` on the forward strand
//! and `end - 1` on the reverse strand.

use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;

use crate::error::{Error, Result};
use crate::track::{ChromCounts, ChromSizes, CountTrack};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strand {
    Forward,
    Reverse,
}

impl Strand {
    fn parse(s: &str) -> Option<Strand> {
        match s {
            "+" => Some(Strand::Forward),
            "-" | "\u{2212}" => Some(Strand::Reverse),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagRecord {
    pub chrom: String,
    pub start: u64,
    pub end: u64,
    pub strand: Strand,
}

impl TagRecord {
    pub fn new(chrom: impl Into<String>, start: u64, end: u64, strand: Strand) -> Result<Self> {
        if start >= end {
            return Err(Error::InvalidArgument(format!(
                "tag start {start} must be below end {end}"
            )));
        }
        Ok(TagRecord {
            chrom: chrom.into(),
            start,
            end,
            strand,
        })
    }

    pub fn location(&self) -> u64 {
        match self.strand {
            Strand::Forward => self.start,
            Strand::Reverse => self.end - 1,
        }
    }

    /// Location after moving `shift` bp toward the 3' end; `None` if that
    /// falls below zero.
    pub fn shifted_location(&self, shift: u64) -> Option<u64> {
        match self.strand {
            Strand::Forward => self.location().checked_add(shift),
            Strand::Reverse => self.location().checked_sub(shift),
        }
    }
}

/// Parse a tag table. Lines starting with `#` and blank lines are skipped.
pub fn parse_tags<R: BufRead>(reader: R) -> Result<Vec<TagRecord>> {
    let mut tags = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 4 {
            return Err(Error::parse(
                lineno,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let start: u64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad start coordinate {:?}", fields[1])))?;
        let end: u64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad end coordinate {:?}", fields[2])))?;
        let strand = Strand::parse(fields[3].trim())
            .ok_or_else(|| Error::parse(lineno, format!("unknown strand {:?}", fields[3])))?;
        if start >= end {
            return Err(Error::parse(
                lineno,
                format!("start {start} is not below end {end}"),
            ));
        }
        tags.push(TagRecord {
            chrom: fields[0].to_string(),
            start,
            end,
            strand,
        });
    }
    Ok(tags)
}

/// Keep the first tag for every (chrom, location, strand).
pub fn dedup_tags(tags: &[TagRecord]) -> Vec<TagRecord> {
    let mut seen: HashSet<(&str, u64, Strand)> = HashSet::with_capacity(tags.len());
    let mut kept = Vec::with_capacity(tags.len());
    for t in tags {
        if seen.insert((t.chrom.as_str(), t.location(), t.strand)) {
            kept.push(t.clone());
        }
    }
    kept
}

/// Chromosome lengths implied by a tag list: the largest `end` per chromosome.
pub fn infer_sizes(tags: &[TagRecord]) -> ChromSizes {
    let mut sizes = ChromSizes::new();
    let mut max_end: BTreeMap<&str, u64> = BTreeMap::new();
    for t in tags {
        let e = max_end.entry(t.chrom.as_str()).or_insert(0);
        *e = (*e).max(t.end);
    }
    for (chrom, end) in max_end {
        sizes.insert(chrom, end);
    }
    sizes
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftOutcome {
    pub track: CountTrack,
    /// Tags whose shifted location fell outside their chromosome.
    pub dropped_boundary: u64,
    /// Tags on chromosomes missing from the size table.
    pub dropped_unknown_chrom: u64,
}

/// Shift forward tags up and reverse tags down by `shift` and count
/// coinciding locations. Every chromosome in `sizes` appears in the output.
pub fn shift_and_count(tags: &[TagRecord], shift: u64, sizes: &ChromSizes) -> ShiftOutcome {
    let mut per_chrom: BTreeMap<&str, Vec<(u64, u32)>> = BTreeMap::new();
    let mut dropped_boundary = 0;
    let mut dropped_unknown_chrom = 0;
    for t in tags {
        let Some(len) = sizes.get(&t.chrom) else {
            dropped_unknown_chrom += 1;
            continue;
        };
        match t.shifted_location(shift) {
            Some(loc) if loc < len => per_chrom.entry(t.chrom.as_str()).or_default().push((loc, 1)),
            _ => dropped_boundary += 1,
        }
    }
    let mut track = CountTrack::new();
    for (chrom, len) in sizes.iter() {
        let entries = per_chrom.remove(chrom).unwrap_or_default();
        let counts = ChromCounts::from_entries(len, entries)
            .expect("locations were bounds-checked");
        track.insert(chrom, counts);
    }
    ShiftOutcome {
        track,
        dropped_boundary,
        dropped_unknown_chrom,
    }
}
