//! Local background rate from the Control sample.
//!
//! The IP background is modelled as `a1 * c_small(t) + a2 * c_large(t)` where
//! `c_small` and `c_large` are Control averages in windows of 1 Kb and 10 Kb.
//! The coefficients come from a no-intercept least-squares fit over disjoint
//! bins; predictions use windows centred at `t`.

use std::io::Write;

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::track::{ChromCounts, CountTrack};

pub const DEFAULT_GENOME_LENGTH: f64 = 3.018e9;

#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundParams {
    pub window_small: u64,
    pub window_large: u64,
    /// Denominator of the global rate.
    pub genome_length: f64,
}

impl Default for BackgroundParams {
    fn default() -> Self {
        BackgroundParams {
            window_small: 1_000,
            window_large: 10_000,
            genome_length: DEFAULT_GENOME_LENGTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundModel {
    pub a1: f64,
    pub a2: f64,
    pub se_a1: f64,
    pub se_a2: f64,
    /// Global IP rate (tags per bp), the floor of the null rate.
    pub lambda_l: f64,
    pub window_small: u64,
    pub window_large: u64,
    pub n_bins: usize,
}

/// One fitting bin: IP and Control averages over the small bin and the
/// Control average over the enclosing large bin.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionBin {
    pub chrom: String,
    pub start: u64,
    pub ip_avg: f64,
    pub control_small_avg: f64,
    pub control_large_avg: f64,
}

/// Mean count per bp over the `width` positions starting at
/// `center - width / 2`, clipped to the chromosome. The clipped length is
/// the denominator.
pub fn window_average(counts: &ChromCounts, center: u64, width: u64) -> f64 {
    let lo = center as i64 - (width / 2) as i64;
    let hi = lo + width as i64;
    let lo = lo.max(0) as u64;
    let hi = (hi.max(0) as u64).min(counts.length());
    if hi <= lo {
        return 0.0;
    }
    counts.sum_range(lo, hi) as f64 / (hi - lo) as f64
}

fn bin_average(counts: Option<&ChromCounts>, lo: u64, hi: u64) -> f64 {
    match counts {
        Some(c) if hi > lo => c.sum_range(lo, hi) as f64 / (hi - lo) as f64,
        _ => 0.0,
    }
}

/// Disjoint small bins over every chromosome present in either track.
pub fn regression_bins(ip: &CountTrack, control: &CountTrack, params: &BackgroundParams) -> Vec<RegressionBin> {
    let mut sizes = ip.sizes();
    sizes.merge_max(&control.sizes());
    let chroms: Vec<(String, u64)> = sizes.iter().map(|(c, l)| (c.to_string(), l)).collect();
    let ws = params.window_small;
    let wl = params.window_large;
    chroms
        .par_iter()
        .map(|(chrom, len)| {
            let ipc = ip.get(chrom);
            let cc = control.get(chrom);
            let n = len.div_ceil(ws);
            (0..n)
                .map(|i| {
                    let start = i * ws;
                    let end = (start + ws).min(*len);
                    let big = (start / wl) * wl;
                    RegressionBin {
                        chrom: chrom.clone(),
                        start,
                        ip_avg: bin_average(ipc, start, end),
                        control_small_avg: bin_average(cc, start, end),
                        control_large_avg: bin_average(cc, big, (big + wl).min(*len)),
                    }
                })
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect()
}

pub fn write_bins_tsv<W: Write>(bins: &[RegressionBin], mut w: W) -> Result<()> {
    writeln!(w, "#chrom\tbin_start\tip_avg\tc1k_avg\tc10k_avg")?;
    for b in bins {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            b.chrom, b.start, b.ip_avg, b.control_small_avg, b.control_large_avg
        )?;
    }
    Ok(())
}

/// Total IP count divided by the genome length.
pub fn global_rate(ip: &CountTrack, genome_length: f64) -> f64 {
    let total = ip.total();
    if total == 0 {
        warn!("IP track is empty; global rate is 0");
    }
    total as f64 / genome_length
}

/// Least squares through the origin of IP bin averages on the two Control
/// predictors. All bins are used, unweighted.
pub fn fit_background_regression(
    ip: &CountTrack,
    control: &CountTrack,
    params: &BackgroundParams,
) -> Result<BackgroundModel> {
    if params.window_small == 0 || params.window_small >= params.window_large {
        return Err(Error::InvalidArgument(format!(
            "need 0 < small window < large window, got {} and {}",
            params.window_small, params.window_large
        )));
    }
    if ip.is_empty() {
        return Err(Error::EmptyInput("IP track".into()));
    }
    if control.is_empty() {
        return Err(Error::SingularDesign("Control track is empty".into()));
    }
    let bins = regression_bins(ip, control, params);
    fit_bins(&bins, params, global_rate(ip, params.genome_length))
}

pub(crate) fn fit_bins(bins: &[RegressionBin], params: &BackgroundParams, lambda_l: f64) -> Result<BackgroundModel> {
    let n = bins.len();
    if n < 3 {
        return Err(Error::SingularDesign(format!("only {n} bins")));
    }
    let (mut s11, mut s12, mut s22, mut s1y, mut s2y) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for b in bins {
        let (x1, x2, y) = (b.control_small_avg, b.control_large_avg, b.ip_avg);
        s11 += x1 * x1;
        s12 += x1 * x2;
        s22 += x2 * x2;
        s1y += x1 * y;
        s2y += x2 * y;
    }
    let det = s11 * s22 - s12 * s12;
    if !(s11 > 0.0 && s22 > 0.0) || det <= 1e-12 * s11 * s22 {
        return Err(Error::SingularDesign(
            "Control predictors are zero or collinear".into(),
        ));
    }
    let a1 = (s22 * s1y - s12 * s2y) / det;
    let a2 = (s11 * s2y - s12 * s1y) / det;
    let rss: f64 = bins
        .iter()
        .map(|b| {
            let r = b.ip_avg - a1 * b.control_small_avg - a2 * b.control_large_avg;
            r * r
        })
        .sum();
    let sigma2 = rss / (n - 2) as f64;
    Ok(BackgroundModel {
        a1,
        a2,
        se_a1: (sigma2 * s22 / det).sqrt(),
        se_a2: (sigma2 * s11 / det).sqrt(),
        lambda_l,
        window_small: params.window_small,
        window_large: params.window_large,
        n_bins: n,
    })
}

impl BackgroundModel {
    /// `(lambda0, lambda0_plus)` at `t` from windows centred at `t`.
    /// A missing Control chromosome gives `lambda0 = 0`.
    pub fn at(&self, control: Option<&ChromCounts>, t: u64) -> (f64, f64) {
        let lambda0 = match control {
            Some(c) => {
                (self.a1 * window_average(c, t, self.window_small)
                    + self.a2 * window_average(c, t, self.window_large))
                .max(0.0)
            }
            None => 0.0,
        };
        (lambda0, lambda0.max(self.lambda_l))
    }

    /// `lambda0` at every position of a chromosome.
    pub fn dense(&self, control: &ChromCounts) -> Vec<f64> {
        (0..control.length())
            .into_par_iter()
            .map(|t| self.at(Some(control), t).0)
            .collect()
    }
}

pub fn background_at(model: &BackgroundModel, control: &CountTrack, chrom: &str, t: u64) -> (f64, f64) {
    model.at(control.get(chrom), t)
}
