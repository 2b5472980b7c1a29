//! Spike-in experiments with known peaks, for measuring realized FDR and
//! power of the caller.
//!
//! A Control template gives the rates `lambda_C = a1 * avg_1k + a2 * avg_10k`
//! and `lambda0 = 0.8 * lambda_C`. Spikes shaped like the kernel are added to
//! `lambda0` with multiplier `S`, Control and IP counts are drawn as
//! independent Poisson sequences, the caller runs on them, and detections are
//! scored against the spike supports.

use std::io::Write;

use log::warn;
use rand::Rng;
use rand_distr::{Distribution, Exp, LogNormal, Poisson};
use rayon::prelude::*;

use crate::background::window_average;
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::pipeline::{call_peaks, CallParams};
use crate::seed::{derive, stage, stream_rng};
use crate::track::{ChromCounts, CountTrack};

pub const SIM_CHROM: &str = "sim";

#[derive(Debug, Clone, PartialEq)]
pub struct SpikeInConfig {
    pub length: u64,
    pub n_spikes: usize,
    pub control_to_ip: f64,
    pub a1: f64,
    pub a2: f64,
    pub window_small: u64,
    pub window_large: u64,
    /// Spike area in units of `mean(lambda0)`. `None` uses the kernel
    /// length, so that the mean excess rate over a spike support is
    /// `S * mean(lambda0)`.
    pub area_scale: Option<f64>,
    pub replicates: usize,
    pub q: f64,
    pub seed: u64,
}

impl Default for SpikeInConfig {
    fn default() -> Self {
        SpikeInConfig {
            length: 10_000_000,
            n_spikes: 20,
            control_to_ip: 0.8,
            a1: 0.3,
            a2: 0.7,
            window_small: 1_000,
            window_large: 10_000,
            area_scale: None,
            replicates: 10,
            q: 0.1,
            seed: 1,
        }
    }
}

/// Piecewise-constant Control rate for runs without a real template.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateParams {
    pub base_rate: f64,
    pub log_sd: f64,
    pub mean_segment: f64,
}

impl Default for TemplateParams {
    fn default() -> Self {
        TemplateParams {
            base_rate: 0.002,
            log_sd: 0.7,
            mean_segment: 50_000.0,
        }
    }
}

/// Rate that is constant over exponentially distributed segments, each at
/// `base_rate` times a mean-one log-normal factor.
pub fn synthetic_template_rates<R: Rng>(length: u64, params: &TemplateParams, rng: &mut R) -> Result<Vec<f64>> {
    let seg = Exp::new(1.0 / params.mean_segment)
        .map_err(|e| Error::InvalidArgument(format!("segment length: {e}")))?;
    let level = LogNormal::new(-params.log_sd * params.log_sd / 2.0, params.log_sd)
        .map_err(|e| Error::InvalidArgument(format!("log-normal: {e}")))?;
    let mut rates = Vec::with_capacity(length as usize);
    while (rates.len() as u64) < length {
        let n = (seg.sample(rng).ceil() as u64).max(1).min(length - rates.len() as u64);
        let r = params.base_rate * level.sample(rng);
        rates.extend(std::iter::repeat_n(r, n as usize));
    }
    Ok(rates)
}

/// Independent Poisson draw at each position.
pub fn sample_track<R: Rng>(rates: &[f64], rng: &mut R) -> Result<ChromCounts> {
    let mut entries = Vec::new();
    for (t, &r) in rates.iter().enumerate() {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::InvalidArgument(format!("invalid rate {r} at {t}")));
        }
        if r == 0.0 {
            continue;
        }
        let c = Poisson::new(r).expect("positive rate").sample(rng) as u32;
        if c > 0 {
            entries.push((t as u64, c));
        }
    }
    let (pos, cnt) = entries.into_iter().unzip();
    ChromCounts::from_sorted(rates.len() as u64, pos, cnt)
}

/// `(lambda_C, lambda0)` over `[0, L)` from a Control template.
pub fn synth_rates(template: &ChromCounts, config: &SpikeInConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    if template.length() < config.length {
        return Err(Error::InvalidArgument(format!(
            "template length {} is shorter than {}",
            template.length(),
            config.length
        )));
    }
    if template.total() == 0 {
        warn!("template is empty; all rates are zero");
    }
    let lambda_c: Vec<f64> = (0..config.length)
        .into_par_iter()
        .map(|t| {
            config.a1 * window_average(template, t, config.window_small)
                + config.a2 * window_average(template, t, config.window_large)
        })
        .collect();
    let lambda0 = lambda_c.iter().map(|c| config.control_to_ip * c).collect();
    Ok((lambda_c, lambda0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Ascending.
    pub centers: Vec<u64>,
    pub half_width: u64,
    pub lambda_c: Vec<f64>,
    pub lambda0: Vec<f64>,
    pub lambda_ip: Vec<f64>,
}

impl GroundTruth {
    /// Index of the spike whose support `[c - h, c + h]` contains `pos`.
    pub fn spike_at(&self, pos: u64) -> Option<usize> {
        let i = self.centers.partition_point(|&c| c + self.half_width < pos);
        match self.centers.get(i) {
            Some(&c) if c <= pos + self.half_width => Some(i),
            _ => None,
        }
    }
}

/// Place spikes uniformly at random with disjoint supports and add `S`
/// times their sum to `lambda0`. Each spike is the kernel scaled to area
/// `mean(lambda0) * area_scale`.
pub fn place_spikes<R: Rng>(
    lambda_c: Vec<f64>,
    lambda0: Vec<f64>,
    kernel: &Kernel,
    snr: f64,
    config: &SpikeInConfig,
    rng: &mut R,
) -> Result<GroundTruth> {
    if !(snr >= 0.0) {
        return Err(Error::InvalidArgument(format!("S must be nonnegative, got {snr}")));
    }
    let len = lambda0.len() as u64;
    let w = kernel.len() as u64;
    let h = kernel.half_width() as u64;
    if len < w || config.n_spikes as u64 * w > len {
        return Err(Error::Placement(format!(
            "{} spikes of width {w} do not fit in {len} bp",
            config.n_spikes
        )));
    }
    let mut centers: Vec<u64> = Vec::with_capacity(config.n_spikes);
    let mut attempts = 0usize;
    while centers.len() < config.n_spikes {
        attempts += 1;
        if attempts > 10_000 * config.n_spikes.max(1) {
            return Err(Error::Placement(format!(
                "could not place {} disjoint spikes",
                config.n_spikes
            )));
        }
        let c = rng.random_range(h..len - h);
        if centers.iter().all(|&o| c.abs_diff(o) >= w) {
            centers.push(c);
        }
    }
    centers.sort_unstable();
    let mean0 = lambda0.iter().sum::<f64>() / len as f64;
    let area = mean0 * config.area_scale.unwrap_or(w as f64);
    let mut lambda_ip = lambda0.clone();
    for &c in &centers {
        for (k, &wk) in kernel.weights().iter().enumerate() {
            lambda_ip[(c - h) as usize + k] += snr * area * wk;
        }
    }
    Ok(GroundTruth {
        centers,
        half_width: h,
        lambda_c,
        lambda0,
        lambda_ip,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub detected: usize,
    pub false_detections: usize,
    pub spikes_hit: usize,
    pub n_spikes: usize,
    pub fdp: f64,
    pub power: f64,
}

/// A detection is true when it falls inside a spike support. Power is the
/// fraction of spikes with at least one detection.
pub fn score(detections: &[u64], truth: &GroundTruth) -> Score {
    let mut hit = vec![false; truth.centers.len()];
    let mut false_detections = 0;
    for &p in detections {
        match truth.spike_at(p) {
            Some(i) => hit[i] = true,
            None => false_detections += 1,
        }
    }
    let spikes_hit = hit.iter().filter(|&&x| x).count();
    let n_spikes = truth.centers.len();
    Score {
        detected: detections.len(),
        false_detections,
        spikes_hit,
        n_spikes,
        fdp: false_detections as f64 / detections.len().max(1) as f64,
        power: if n_spikes == 0 { 0.0 } else { spikes_hit as f64 / n_spikes as f64 },
    }
}

/// One simulated data set and the caller's output on it.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub snr: f64,
    pub index: usize,
    pub truth: GroundTruth,
    pub ip: CountTrack,
    pub control: CountTrack,
    pub lambda0_hat: Vec<f64>,
    pub a1: f64,
    pub a2: f64,
    pub score: Score,
}

/// Seeds depend on the replicate index but not on `S`, so every `S` sees
/// the same spike positions and noise streams.
pub fn run_replicate(
    lambda_c: &[f64],
    lambda0: &[f64],
    kernel: &Kernel,
    snr: f64,
    index: usize,
    config: &SpikeInConfig,
    call: &CallParams,
) -> Result<Replicate> {
    let rep_seed = derive(derive(config.seed, stage::REPLICATE), index as u64);
    let truth = place_spikes(
        lambda_c.to_vec(),
        lambda0.to_vec(),
        kernel,
        snr,
        config,
        &mut stream_rng(derive(rep_seed, stage::SIM_SPIKES), 0),
    )?;
    let ip_counts = sample_track(&truth.lambda_ip, &mut stream_rng(derive(rep_seed, stage::SIM_IP), 0))?;
    let control_counts = sample_track(&truth.lambda_c, &mut stream_rng(derive(rep_seed, stage::SIM_CONTROL), 0))?;
    let mut ip = CountTrack::new();
    ip.insert(SIM_CHROM, ip_counts);
    let mut control = CountTrack::new();
    control.insert(SIM_CHROM, control_counts);

    let mut call = call.clone();
    call.q = config.q;
    call.seed = rep_seed;
    let out = call_peaks(&ip, &control, kernel, None, &call)?;
    let detections: Vec<u64> = out.significant().map(|p| p.position).collect();
    let s = score(&detections, &truth);
    let (a1, a2, lambda0_hat) = match (&out.model, control.get(SIM_CHROM)) {
        (Some(m), Some(c)) => (m.a1, m.a2, m.dense(c)),
        _ => (f64::NAN, f64::NAN, vec![0.0; truth.lambda0.len()]),
    };
    Ok(Replicate {
        snr,
        index,
        truth,
        ip,
        control,
        lambda0_hat,
        a1,
        a2,
        score: s,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub snr: f64,
    pub replicate: usize,
    pub score: Score,
    pub a1: f64,
    pub a2: f64,
    pub lambda0_correlation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub snr: f64,
    pub replicates: usize,
    pub mean_fdp: f64,
    pub sd_fdp: f64,
    pub mean_power: f64,
    pub sd_power: f64,
    pub detected: usize,
    pub false_detections: usize,
    pub spikes_hit: usize,
}

/// Pearson correlation; 0 when either side is constant.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (x, y) = (a[i] - ma, b[i] - mb);
        sab += x * y;
        saa += x * x;
        sbb += y * y;
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

fn mean_sd(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.clone().sum::<f64>() / n as f64;
    let v = if n > 1 {
        xs.map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    (m, v.sqrt())
}

pub fn summarize(rows: &[SweepRow]) -> Vec<SweepSummary> {
    let mut snrs: Vec<f64> = rows.iter().map(|r| r.snr).collect();
    snrs.sort_by(f64::total_cmp);
    snrs.dedup();
    snrs.into_iter()
        .map(|s| {
            let sel: Vec<&SweepRow> = rows.iter().filter(|r| r.snr == s).collect();
            let (mean_fdp, sd_fdp) = mean_sd(sel.iter().map(|r| r.score.fdp));
            let (mean_power, sd_power) = mean_sd(sel.iter().map(|r| r.score.power));
            SweepSummary {
                snr: s,
                replicates: sel.len(),
                mean_fdp,
                sd_fdp,
                mean_power,
                sd_power,
                detected: sel.iter().map(|r| r.score.detected).sum(),
                false_detections: sel.iter().map(|r| r.score.false_detections).sum(),
                spikes_hit: sel.iter().map(|r| r.score.spikes_hit).sum(),
            }
        })
        .collect()
}

/// Template rates for a sweep: the supplied template, or a synthetic one
/// sampled from [`synthetic_template_rates`].
pub fn template_or_synthetic(template: Option<&ChromCounts>, config: &SpikeInConfig) -> Result<ChromCounts> {
    match template {
        Some(t) => Ok(t.clone()),
        None => {
            let seed = derive(config.seed, stage::SIM_TEMPLATE);
            let rates = synthetic_template_rates(config.length, &TemplateParams::default(), &mut stream_rng(seed, 0))?;
            sample_track(&rates, &mut stream_rng(seed, 1))
        }
    }
}

/// Run every `S` in `snrs` over `config.replicates` replicates.
pub fn run_sweep(
    template: Option<&ChromCounts>,
    kernel: &Kernel,
    snrs: &[f64],
    config: &SpikeInConfig,
    call: &CallParams,
) -> Result<Vec<SweepRow>> {
    let template = template_or_synthetic(template, config)?;
    let (lambda_c, lambda0) = synth_rates(&template, config)?;
    let jobs: Vec<(f64, usize)> = snrs
        .iter()
        .flat_map(|&s| (0..config.replicates).map(move |i| (s, i)))
        .collect();
    jobs.par_iter()
        .map(|&(s, i)| {
            let r = run_replicate(&lambda_c, &lambda0, kernel, s, i, config, call)?;
            Ok(SweepRow {
                snr: s,
                replicate: i,
                score: r.score,
                a1: r.a1,
                a2: r.a2,
                lambda0_correlation: correlation(&r.truth.lambda0, &r.lambda0_hat),
            })
        })
        .collect()
}

pub fn write_rows_tsv<W: Write>(rows: &[SweepRow], mut w: W) -> Result<()> {
    writeln!(
        w,
        "snr\treplicate\tdetected\tfalse\tspikes_hit\tn_spikes\tfdp\tpower\ta1\ta2\tlambda0_cor"
    )?;
    for r in rows {
        let s = &r.score;
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.snr,
            r.replicate,
            s.detected,
            s.false_detections,
            s.spikes_hit,
            s.n_spikes,
            s.fdp,
            s.power,
            r.a1,
            r.a2,
            r.lambda0_correlation
        )?;
    }
    Ok(())
}

pub fn write_summary_tsv<W: Write>(rows: &[SweepSummary], mut w: W) -> Result<()> {
    writeln!(
        w,
        "snr\treplicates\tmean_fdp\tsd_fdp\tmean_power\tsd_power\tdetected\tfalse\tspikes_hit"
    )?;
    for r in rows {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.snr, r.replicates, r.mean_fdp, r.sd_fdp, r.mean_power, r.sd_power, r.detected, r.false_detections, r.spikes_hit
        )?;
    }
    Ok(())
}
