//! Sparse per-chromosome count tracks.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Chromosome name to length (bp).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChromSizes(BTreeMap<String, u64>);

impl ChromSizes {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, chrom: impl Into<String>, length: u64) {
        self.0.insert(chrom.into(), length);
    }

    pub fn get(&self, chrom: &str) -> Option<u64> {
        self.0.get(chrom).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn total(&self) -> u64 {
        self.0.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Name of the longest chromosome; ties go to the lexicographically first.
    pub fn longest(&self) -> Option<&str> {
        self.0
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
            .map(|(k, _)| k.as_str())
    }

    /// Keep the larger length for every chromosome present in either map.
    pub fn merge_max(&mut self, other: &ChromSizes) {
        for (chrom, len) in other.iter() {
            let entry = self.0.entry(chrom.to_string()).or_insert(0);
            *entry = (*entry).max(len);
        }
    }

    /// Two-column `chrom<TAB>length` file; `#` lines and blank lines are skipped.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut sizes = ChromSizes::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            let (Some(chrom), Some(len)) = (fields.next(), fields.next()) else {
                return Err(Error::parse(i + 1, "expected chrom and length"));
            };
            let len: u64 = len
                .trim()
                .parse()
                .map_err(|_| Error::parse(i + 1, format!("bad chromosome length {len:?}")))?;
            sizes.insert(chrom, len);
        }
        Ok(sizes)
    }
}

/// Counts for one chromosome: strictly increasing positions with counts >= 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ChromCounts {
    length: u64,
    positions: Vec<u64>,
    counts: Vec<u32>,
    // prefix[i] = sum of counts[..i]
    prefix: Vec<u64>,
}

impl ChromCounts {
    pub fn empty(length: u64) -> Self {
        ChromCounts {
            length,
            positions: Vec::new(),
            counts: Vec::new(),
            prefix: vec![0],
        }
    }

    /// Build from already sorted, deduplicated entries.
    pub fn from_sorted(length: u64, positions: Vec<u64>, counts: Vec<u32>) -> Result<Self> {
        if positions.len() != counts.len() {
            return Err(Error::InvalidArgument(
                "positions and counts differ in length".into(),
            ));
        }
        for w in positions.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::InvalidArgument(format!(
                    "positions not strictly increasing at {}",
                    w[1]
                )));
            }
        }
        if let Some(&last) = positions.last() {
            if last >= length {
                return Err(Error::InvalidArgument(format!(
                    "position {last} beyond chromosome length {length}"
                )));
            }
        }
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::InvalidArgument("zero count stored".into()));
        }
        Ok(Self::from_parts(length, positions, counts))
    }

    fn from_parts(length: u64, positions: Vec<u64>, counts: Vec<u32>) -> Self {
        let mut prefix = Vec::with_capacity(counts.len() + 1);
        let mut acc = 0u64;
        prefix.push(0);
        for &c in &counts {
            acc += u64::from(c);
            prefix.push(acc);
        }
        ChromCounts {
            length,
            positions,
            counts,
            prefix,
        }
    }

    /// Aggregate arbitrary (position, count) pairs; zero counts are ignored.
    pub fn from_entries(length: u64, entries: impl IntoIterator<Item = (u64, u32)>) -> Result<Self> {
        let mut map: BTreeMap<u64, u32> = BTreeMap::new();
        for (pos, c) in entries {
            if c == 0 {
                continue;
            }
            if pos >= length {
                return Err(Error::InvalidArgument(format!(
                    "position {pos} beyond chromosome length {length}"
                )));
            }
            *map.entry(pos).or_insert(0) += c;
        }
        let (positions, counts) = map.into_iter().unzip();
        Ok(Self::from_parts(length, positions, counts))
    }

    /// Sparse view of a dense count vector.
    pub fn from_dense(dense: &[u32]) -> Self {
        let mut positions = Vec::new();
        let mut counts = Vec::new();
        for (i, &c) in dense.iter().enumerate() {
            if c > 0 {
                positions.push(i as u64);
                counts.push(c);
            }
        }
        Self::from_parts(dense.len() as u64, positions, counts)
    }

    pub fn length(&self) -> u64 {
        self.length
    }

    pub fn positions(&self) -> &[u64] {
        &self.positions
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Number of nonzero positions.
    pub fn nnz(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn total(&self) -> u64 {
        *self.prefix.last().unwrap_or(&0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u32)> + '_ {
        self.positions.iter().copied().zip(self.counts.iter().copied())
    }

    pub fn count_at(&self, pos: u64) -> u32 {
        match self.positions.binary_search(&pos) {
            Ok(i) => self.counts[i],
            Err(_) => 0,
        }
    }

    /// Sum of counts over the half-open interval `[lo, hi)`.
    pub fn sum_range(&self, lo: u64, hi: u64) -> u64 {
        if hi <= lo {
            return 0;
        }
        let a = self.positions.partition_point(|&p| p < lo);
        let b = self.positions.partition_point(|&p| p < hi);
        self.prefix[b] - self.prefix[a]
    }

    pub fn to_dense(&self) -> Vec<u32> {
        let mut dense = vec![0u32; self.length as usize];
        for (p, c) in self.iter() {
            dense[p as usize] = c;
        }
        dense
    }

    /// Multiply every count by `k`.
    pub fn scaled(&self, k: u32) -> Self {
        if k == 0 {
            return Self::empty(self.length);
        }
        Self::from_parts(
            self.length,
            self.positions.clone(),
            self.counts.iter().map(|&c| c * k).collect(),
        )
    }
}

/// Per-chromosome sparse counts; absent positions are zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CountTrack {
    chroms: BTreeMap<String, ChromCounts>,
}

impl CountTrack {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, chrom: impl Into<String>, counts: ChromCounts) {
        self.chroms.insert(chrom.into(), counts);
    }

    pub fn get(&self, chrom: &str) -> Option<&ChromCounts> {
        self.chroms.get(chrom)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ChromCounts)> {
        self.chroms.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn chrom_names(&self) -> impl Iterator<Item = &str> {
        self.chroms.keys().map(|k| k.as_str())
    }

    pub fn total(&self) -> u64 {
        self.chroms.values().map(ChromCounts::total).sum()
    }

    pub fn nnz(&self) -> usize {
        self.chroms.values().map(ChromCounts::nnz).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.chroms.values().all(ChromCounts::is_empty)
    }

    pub fn sizes(&self) -> ChromSizes {
        let mut s = ChromSizes::new();
        for (k, v) in &self.chroms {
            s.insert(k.clone(), v.length());
        }
        s
    }

    /// Only the named chromosome (empty track if absent).
    pub fn restricted_to(&self, chrom: &str) -> CountTrack {
        let mut t = CountTrack::new();
        if let Some(c) = self.chroms.get(chrom) {
            t.insert(chrom, c.clone());
        }
        t
    }

    /// Tab-separated `chrom position count`, sorted, preceded by
    /// `#chrom_length` header lines so lengths survive a round trip.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        for (chrom, c) in &self.chroms {
            writeln!(w, "#chrom_length\t{chrom}\t{}", c.length())?;
        }
        for (chrom, c) in &self.chroms {
            for (p, n) in c.iter() {
                writeln!(w, "{chrom}\t{p}\t{n}")?;
            }
        }
        Ok(())
    }

    /// Read the format written by [`CountTrack::write_tsv`]. Lengths come from
    /// `#chrom_length` lines, then `sizes`, then the largest position + 1.
    pub fn read_tsv<R: BufRead>(reader: R, sizes: Option<&ChromSizes>) -> Result<Self> {
        let mut lengths: BTreeMap<String, u64> = BTreeMap::new();
        let mut entries: BTreeMap<String, Vec<(u64, u32)>> = BTreeMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("#chrom_length\t") {
                let mut f = rest.split('\t');
                if let (Some(chrom), Some(len)) = (f.next(), f.next()) {
                    let len = len
                        .parse()
                        .map_err(|_| Error::parse(i + 1, "bad chrom_length header"))?;
                    lengths.insert(chrom.to_string(), len);
                }
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() < 3 {
                return Err(Error::parse(i + 1, "expected chrom, position, count"));
            }
            let pos: u64 = f[1]
                .parse()
                .map_err(|_| Error::parse(i + 1, format!("bad position {:?}", f[1])))?;
            let count: u32 = f[2]
                .parse()
                .map_err(|_| Error::parse(i + 1, format!("bad count {:?}", f[2])))?;
            entries.entry(f[0].to_string()).or_default().push((pos, count));
        }
        let mut track = CountTrack::new();
        for (chrom, list) in entries {
            let length = lengths
                .get(&chrom)
                .copied()
                .or_else(|| sizes.and_then(|s| s.get(&chrom)))
                .unwrap_or_else(|| list.iter().map(|e| e.0 + 1).max().unwrap_or(0));
            track.insert(chrom.clone(), ChromCounts::from_entries(length, list)?);
        }
        for (chrom, len) in lengths {
            if track.get(&chrom).is_none() {
                track.insert(chrom, ChromCounts::empty(len));
            }
        }
        Ok(track)
    }
}
