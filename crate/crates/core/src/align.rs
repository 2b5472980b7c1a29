//! Strand shift and peak-shape estimation from strong peaks.
//!
//! Tags are first moved by a tentative shift and smoothed with a Gaussian to
//! locate the strongest local maxima. Forward and reverse tag profiles are
//! averaged around those centres, the shift is half the distance between the
//! two profile modes, and the aligned, symmetrised profile becomes the
//! smoothing kernel.

use std::collections::HashMap;

use log::{info, warn};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{quartic_biweight, Kernel};
use crate::smooth::{find_candidates, DEFAULT_GROUP_GAP};
use crate::spline::{CubicBSpline, SplineSmoother};
use crate::tags::{shift_and_count, Strand, TagRecord};
use crate::track::{ChromSizes, CountTrack};

#[derive(Debug, Clone, PartialEq)]
pub struct AlignParams {
    pub tentative_shift: u64,
    pub prelim_sigma: f64,
    pub n_peaks: usize,
    /// Odd width of the strand profiles.
    pub profile_window: usize,
    /// Odd width of the output kernel.
    pub kernel_width: usize,
    /// Knot spacing (bp) of the profile smoothing splines.
    pub knot_spacing: f64,
}

impl Default for AlignParams {
    fn default() -> Self {
        AlignParams {
            tentative_shift: 100,
            prelim_sigma: 50.0,
            n_peaks: 1000,
            profile_window: 2001,
            kernel_width: 801,
            knot_spacing: 25.0,
        }
    }
}

/// Mean forward and reverse tag counts by offset from the peak centres.
/// Index `k` is offset `k - (window - 1) / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct StrandProfile {
    pub window: usize,
    pub forward: Vec<f64>,
    pub reverse: Vec<f64>,
    pub n_peaks: usize,
}

impl StrandProfile {
    pub fn half(&self) -> i64 {
        (self.window / 2) as i64
    }

    pub fn write_tsv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "#offset\tforward\treverse")?;
        let h = self.half();
        for k in 0..self.window {
            writeln!(w, "{}\t{}\t{}", k as i64 - h, self.forward[k], self.reverse[k])?;
        }
        Ok(())
    }
}

/// The `n` highest local maxima of the smoothed track, highest first; equal
/// heights go to the lower address.
pub fn preliminary_peaks(track: &CountTrack, prelim: &Kernel, n: usize) -> Vec<(String, u64)> {
    let mut cands = find_candidates(track, prelim, DEFAULT_GROUP_GAP);
    if cands.len() < n {
        warn!(
            "only {} local maxima available, fewer than the {n} requested",
            cands.len()
        );
    }
    cands.sort_by(|a, b| {
        b.height
            .total_cmp(&a.height)
            .then_with(|| a.chrom.cmp(&b.chrom))
            .then_with(|| a.position.cmp(&b.position))
    });
    cands.truncate(n);
    cands.into_iter().map(|c| (c.chrom, c.position)).collect()
}

/// Average forward/reverse tag counts at each offset around `centers`.
pub fn strand_profiles(
    tags: &[TagRecord],
    centers: &[(String, u64)],
    window: usize,
) -> Result<StrandProfile> {
    if window % 2 == 0 || window == 0 {
        return Err(Error::InvalidArgument(format!(
            "profile window must be odd, got {window}"
        )));
    }
    if centers.is_empty() {
        return Err(Error::EmptyInput("no peak centres for strand profiles".into()));
    }
    let mut by_strand: HashMap<(&str, Strand), Vec<u64>> = HashMap::new();
    for t in tags {
        by_strand
            .entry((t.chrom.as_str(), t.strand))
            .or_default()
            .push(t.location());
    }
    for v in by_strand.values_mut() {
        v.sort_unstable();
    }
    let h = (window / 2) as u64;
    let accumulate = |strand: Strand| -> Vec<u64> {
        centers
            .par_iter()
            .fold(
                || vec![0u64; window],
                |mut acc, (chrom, c)| {
                    if let Some(locs) = by_strand.get(&(chrom.as_str(), strand)) {
                        let lo = c.saturating_sub(h);
                        let hi = c + h;
                        let a = locs.partition_point(|&l| l < lo);
                        let b = locs.partition_point(|&l| l <= hi);
                        for &l in &locs[a..b] {
                            acc[(l + h - c) as usize] += 1;
                        }
                    }
                    acc
                },
            )
            .reduce(
                || vec![0u64; window],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            )
    };
    let n = centers.len() as f64;
    let forward = accumulate(Strand::Forward).into_iter().map(|x| x as f64 / n).collect();
    let reverse = accumulate(Strand::Reverse).into_iter().map(|x| x as f64 / n).collect();
    Ok(StrandProfile {
        window,
        forward,
        reverse,
        n_peaks: centers.len(),
    })
}

fn spline_fit(values: &[f64], knot_spacing: f64) -> Result<Vec<f64>> {
    let h = (values.len() / 2) as f64;
    let xs: Vec<f64> = (0..values.len()).map(|k| k as f64 - h).collect();
    let basis = CubicBSpline::with_knot_spacing(-h, h, knot_spacing)?;
    Ok(SplineSmoother::new(basis, &xs)?.smooth(values))
}

/// Offset of the maximum; ties go to the lower offset.
fn argmax_offset(values: &[f64]) -> i64 {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best as i64 - (values.len() / 2) as i64
}

/// Half the distance between the modes of the spline-smoothed reverse and
/// forward profiles, rounded to the nearest integer.
pub fn estimate_shift(profile: &StrandProfile, knot_spacing: f64) -> Result<u64> {
    if profile.forward.iter().all(|&x| x == 0.0) || profile.reverse.iter().all(|&x| x == 0.0) {
        return Err(Error::EmptyInput("a strand profile is all zero".into()));
    }
    let mf = argmax_offset(&spline_fit(&profile.forward, knot_spacing)?);
    let mr = argmax_offset(&spline_fit(&profile.reverse, knot_spacing)?);
    let shift = ((mr - mf) as f64 / 2.0).round() as i64;
    if shift < 0 {
        return Err(Error::NegativeShift(shift));
    }
    Ok(shift as u64)
}

/// Align both strands by `shift`, symmetrise, spline-smooth, crop to
/// `width`, window by a quartic biweight and normalise to unit sum.
pub fn estimate_peak_shape(
    profile: &StrandProfile,
    shift: u64,
    width: usize,
    knot_spacing: f64,
) -> Result<Kernel> {
    let n = profile.window;
    if width % 2 == 0 || width < 3 || width > n {
        return Err(Error::InvalidArgument(format!(
            "kernel width must be odd, >= 3 and at most the profile window {n}; got {width}"
        )));
    }
    let s = shift as usize;
    let mut joint = vec![0.0; n];
    for (k, v) in joint.iter_mut().enumerate() {
        let f = if k >= s { profile.forward[k - s] } else { 0.0 };
        let r = if k + s < n { profile.reverse[k + s] } else { 0.0 };
        *v = 0.5 * (f + r);
    }
    let sym: Vec<f64> = (0..n).map(|k| 0.5 * (joint[k] + joint[n - 1 - k])).collect();
    let fit = spline_fit(&sym, knot_spacing)?;
    let offset = (n - width) / 2;
    let bw = quartic_biweight(width)?;
    let mut w: Vec<f64> = (0..width)
        .map(|k| {
            let a = fit[offset + k];
            let b = fit[offset + width - 1 - k];
            (0.5 * (a + b) * bw[k]).max(0.0)
        })
        .collect();
    // averaging a and b in either order must give identical bits
    for k in 0..width / 2 {
        w[width - 1 - k] = w[k];
    }
    if w.iter().all(|&x| x == 0.0) {
        return Err(Error::InvalidKernel("estimated peak shape is all zero".into()));
    }
    if let Some(k) = (width / 2 + 1..width).find(|&k| w[k] > w[k - 1]) {
        return Err(Error::InvalidKernel(format!(
            "estimated peak shape is not unimodal (rises at offset {}); more or stronger peaks are needed",
            k - width / 2
        )));
    }
    Kernel::normalized(w)
}

#[derive(Debug, Clone)]
pub struct AlignOutcome {
    pub chrom: String,
    pub centers: Vec<(String, u64)>,
    pub profile: StrandProfile,
    pub shift: u64,
    pub kernel: Kernel,
}

/// Full shift and shape estimation on one chromosome (the longest by
/// default). `tags` should already be deduplicated.
pub fn align_tags(
    tags: &[TagRecord],
    sizes: &ChromSizes,
    chrom: Option<&str>,
    params: &AlignParams,
) -> Result<AlignOutcome> {
    let chrom = match chrom {
        Some(c) => c.to_string(),
        None => sizes
            .longest()
            .ok_or_else(|| Error::EmptyInput("no chromosomes".into()))?
            .to_string(),
    };
    let on_chrom: Vec<TagRecord> = tags.iter().filter(|t| t.chrom == chrom).cloned().collect();
    if on_chrom.is_empty() {
        return Err(Error::EmptyInput(format!("no tags on {chrom}")));
    }
    let mut one = ChromSizes::new();
    one.insert(
        chrom.clone(),
        sizes
            .get(&chrom)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown chromosome {chrom}")))?,
    );
    let tentative = shift_and_count(&on_chrom, params.tentative_shift, &one);
    let prelim = Kernel::gaussian(params.prelim_sigma)?;
    let centers = preliminary_peaks(&tentative.track, &prelim, params.n_peaks);
    let profile = strand_profiles(&on_chrom, &centers, params.profile_window)?;
    let shift = estimate_shift(&profile, params.knot_spacing)?;
    let kernel = estimate_peak_shape(&profile, shift, params.kernel_width, params.knot_spacing)?;
    info!(
        "aligned {} tags on {chrom}: {} strong peaks, shift {shift} bp, kernel mode {:.6}",
        on_chrom.len(),
        centers.len(),
        kernel.mode_value()
    );
    Ok(AlignOutcome {
        chrom,
        centers,
        profile,
        shift,
        kernel,
    })
}
