//! Matched-filter smoothing of sparse count tracks and local-maximum search.
//!
//! Nonzero counts are split into groups separated by long runs of zeros.
//! Each group is convolved on its own dense segment spanning the group's
//! first count minus the kernel half width to its last count plus the half
//! width. Outside every segment the smoothed track is exactly zero, so groups
//! can be processed independently and in parallel.

use std::collections::BTreeMap;
use std::ops::Range;

use rayon::prelude::*;

use crate::kernel::Kernel;
use crate::track::{ChromCounts, CountTrack};

/// Minimum run of zeros (bp) that separates two groups of counts.
pub const DEFAULT_GROUP_GAP: u64 = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: u64,
    pub values: Vec<f64>,
}

impl Segment {
    pub fn end(&self) -> u64 {
        self.start + self.values.len() as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothChrom {
    pub length: u64,
    pub segments: Vec<Segment>,
}

impl SmoothChrom {
    pub fn value_at(&self, pos: u64) -> f64 {
        let i = self.segments.partition_point(|s| s.end() <= pos);
        match self.segments.get(i) {
            Some(s) if s.start <= pos => s.values[(pos - s.start) as usize],
            _ => 0.0,
        }
    }
}

/// Smoothed track: the convolution of a [`CountTrack`] with a unit-sum kernel,
/// stored only where it can be nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothTrack {
    pub chroms: BTreeMap<String, SmoothChrom>,
    pub kernel_half_width: usize,
    pub kernel_fingerprint: String,
}

/// A local maximum of the smoothed track.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub chrom: String,
    pub position: u64,
    pub height: f64,
    /// Within the kernel half width of a chromosome end.
    pub near_edge: bool,
}

fn effective_gap(kernel: &Kernel, gap: u64) -> u64 {
    // supports of neighbouring groups must be separated by at least one zero
    gap.max(kernel.len() as u64)
}

/// Index ranges into `counts.positions()` for each group.
pub fn count_groups(counts: &ChromCounts, kernel: &Kernel, gap: u64) -> Vec<Range<usize>> {
    let gap = effective_gap(kernel, gap);
    let pos = counts.positions();
    let mut groups = Vec::new();
    if pos.is_empty() {
        return groups;
    }
    let mut start = 0;
    for i in 1..pos.len() {
        if pos[i] - pos[i - 1] - 1 >= gap {
            groups.push(start..i);
            start = i;
        }
    }
    groups.push(start..pos.len());
    groups
}

/// Dense convolution of one group of counts.
pub fn smooth_group(counts: &ChromCounts, group: Range<usize>, kernel: &Kernel) -> Segment {
    let h = kernel.half_width() as u64;
    let w = kernel.weights();
    let pos = &counts.positions()[group.clone()];
    let cnt = &counts.counts()[group];
    let lo = pos[0].saturating_sub(h);
    let hi = (pos[pos.len() - 1] + h).min(counts.length() - 1);
    let mut values = vec![0.0f64; (hi - lo + 1) as usize];
    for (&p, &c) in pos.iter().zip(cnt) {
        let c = f64::from(c);
        // kernel index k covers position p + k - h
        let k0 = h.saturating_sub(p) as usize;
        let k1 = (w.len() as u64).min(hi + h + 1 - p) as usize;
        let t0 = (p + k0 as u64 - h - lo) as usize;
        for (v, &wk) in values[t0..t0 + (k1 - k0)].iter_mut().zip(&w[k0..k1]) {
            *v += c * wk;
        }
    }
    Segment { start: lo, values }
}

pub fn convolve(track: &CountTrack, kernel: &Kernel) -> SmoothTrack {
    convolve_with_gap(track, kernel, DEFAULT_GROUP_GAP)
}

pub fn convolve_with_gap(track: &CountTrack, kernel: &Kernel, gap: u64) -> SmoothTrack {
    let chroms = track
        .iter()
        .map(|(name, counts)| {
            let segments = count_groups(counts, kernel, gap)
                .into_par_iter()
                .map(|g| smooth_group(counts, g, kernel))
                .collect();
            (
                name.to_string(),
                SmoothChrom {
                    length: counts.length(),
                    segments,
                },
            )
        })
        .collect();
    SmoothTrack {
        chroms,
        kernel_half_width: kernel.half_width(),
        kernel_fingerprint: kernel.fingerprint(),
    }
}

/// Local maxima of a dense run of values whose out-of-range neighbours are
/// zero. A maximal run of equal values higher than both flanking values
/// gives one maximum at its first index. Returns `(index, value)`.
pub fn segment_maxima(values: &[f64]) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    let mut prev = 0.0f64;
    let mut i = 0;
    let n = values.len();
    while i < n {
        let v = values[i];
        let mut j = i + 1;
        while j < n && values[j] == v {
            j += 1;
        }
        let next = if j < n { values[j] } else { 0.0 };
        if v > prev && v > next {
            out.push((i, v));
        }
        prev = v;
        i = j;
    }
    out
}

fn segment_candidates(chrom: &str, length: u64, half: u64, seg: &Segment) -> Vec<Candidate> {
    segment_maxima(&seg.values)
        .into_iter()
        .map(|(i, height)| {
            let position = seg.start + i as u64;
            Candidate {
                chrom: chrom.to_string(),
                position,
                height,
                near_edge: position < half || position + half >= length,
            }
        })
        .collect()
}

pub fn local_maxima(track: &SmoothTrack) -> Vec<Candidate> {
    let half = track.kernel_half_width as u64;
    track
        .chroms
        .iter()
        .flat_map(|(name, sc)| {
            sc.segments
                .iter()
                .flat_map(move |seg| segment_candidates(name, sc.length, half, seg))
        })
        .collect()
}

/// Convolve and extract maxima group by group without keeping the smoothed
/// values; output is in chromosome then address order.
pub fn find_candidates(track: &CountTrack, kernel: &Kernel, gap: u64) -> Vec<Candidate> {
    let half = kernel.half_width() as u64;
    let per_chrom: Vec<Vec<Candidate>> = track
        .iter()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(name, counts)| {
            let groups = count_groups(counts, kernel, gap);
            let parts: Vec<Vec<Candidate>> = groups
                .into_par_iter()
                .map(|g| {
                    let seg = smooth_group(counts, g, kernel);
                    segment_candidates(name, counts.length(), half, &seg)
                })
                .collect();
            parts.into_iter().flatten().collect()
        })
        .collect();
    per_chrom.into_iter().flatten().collect()
}
