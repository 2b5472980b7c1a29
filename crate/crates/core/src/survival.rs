//! Monte Carlo survival table for the height of a local maximum of smoothed
//! i.i.d. Poisson noise, and p-value lookup.
//!
//! For every rate on a log-spaced grid a long Poisson(lambda) sequence is
//! simulated, smoothed with the kernel, and the heights of its local maxima
//! are collected. The empirical survival function `F(u; lambda)` is tabulated
//! on a shared height grid, smoothed across `log lambda` with a 5-function
//! cubic B-spline regression per height, clamped to `[0, 1]` and made
//! nonincreasing in `u` with an isotonic pass. P-values are bilinear
//! interpolations in `(log lambda, u)`.
//!
//! The first height node is the kernel mode `w(0)`, the height produced by an
//! isolated single count; its survival value is exactly 1.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::seed::stream_rng;
use crate::smooth::{count_groups, segment_maxima, smooth_group, Candidate, DEFAULT_GROUP_GAP};
use crate::spline::{isotonic_decreasing, CubicBSpline, SplineSmoother};
use crate::track::ChromCounts;

pub const TABLE_FORMAT: &str = "stem-survival-table";
pub const TABLE_VERSION: u32 = 1;

// relative slack when deciding whether a height reaches the w(0) node
const MODE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableParams {
    pub n_lambda: usize,
    pub n_u: usize,
    /// Fractional widening of the data rate range on each side.
    pub margin: f64,
    pub min_length: u64,
    pub min_nonzero: u64,
    /// Sequences are extended until they yield this many local maxima.
    #[serde(default)]
    pub min_maxima: u64,
    pub n_basis: usize,
}

impl Default for TableParams {
    fn default() -> Self {
        TableParams {
            n_lambda: 300,
            n_u: 200,
            margin: 0.25,
            min_length: 100_000,
            min_nonzero: 100,
            min_maxima: 2_000,
            n_basis: 5,
        }
    }
}

/// Heights of the local maxima from one simulated sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightSample {
    pub lambda: f64,
    pub length: u64,
    pub nonzero: u64,
    /// Sorted ascending.
    pub heights: Vec<f64>,
}

// i.i.d. Poisson(lambda) counts over `length` positions, drawn as a
// Poisson(lambda * length) total spread uniformly over the positions
fn poisson_sequence<R: Rng>(lambda: f64, length: u64, offset: u64, rng: &mut R, out: &mut Vec<(u64, u32)>) {
    let total = Poisson::new(lambda * length as f64).expect("rate checked positive").sample(rng) as usize;
    let mut pos: Vec<u64> = (0..total).map(|_| offset + rng.random_range(0..length)).collect();
    pos.sort_unstable();
    for p in pos {
        match out.last_mut() {
            Some((q, c)) if *q == p => *c += 1,
            _ => out.push((p, 1)),
        }
    }
}

fn interior_maxima(entries: &[(u64, u32)], length: u64, kernel: &Kernel) -> Result<Vec<f64>> {
    let (pos, cnt): (Vec<u64>, Vec<u32>) = entries.iter().copied().unzip();
    let counts = ChromCounts::from_sorted(length, pos, cnt)?;
    let h = kernel.half_width() as u64;
    let mut heights = Vec::new();
    for g in count_groups(&counts, kernel, DEFAULT_GROUP_GAP) {
        let seg = smooth_group(&counts, g, kernel);
        for (i, v) in segment_maxima(&seg.values) {
            let p = seg.start + i as u64;
            if p >= h && p + h < length {
                heights.push(v);
            }
        }
    }
    heights.sort_by(f64::total_cmp);
    Ok(heights)
}

/// Simulate i.i.d. Poisson(lambda) counts of length
/// `max(min_length, ceil(min_nonzero / lambda))`, extended while fewer than
/// `min_nonzero` positions are nonzero or fewer than `min_maxima` local maxima
/// are found, and return the heights of the local maxima of the smoothed
/// sequence. Maxima within the kernel half width of either end are dropped,
/// since their windows are truncated.
pub fn simulate_heights<R: Rng>(
    lambda: f64,
    kernel: &Kernel,
    params: &TableParams,
    rng: &mut R,
) -> Result<HeightSample> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("rate must be positive, got {lambda}")));
    }
    let min_nonzero = params.min_nonzero;
    let mut length = params.min_length.max((min_nonzero as f64 / lambda).ceil() as u64);
    let mut entries = Vec::new();
    poisson_sequence(lambda, length, 0, rng, &mut entries);
    while (entries.len() as u64) < min_nonzero {
        let extra = (length / 2).max(1);
        poisson_sequence(lambda, extra, length, rng, &mut entries);
        length += extra;
    }
    let mut heights = interior_maxima(&entries, length, kernel)?;
    while (heights.len() as u64) < params.min_maxima {
        // grow towards the target at the observed maxima density, at least by half
        let have = heights.len().max(1) as f64;
        let want = (length as f64 * 1.1 * params.min_maxima as f64 / have).ceil() as u64;
        let extra = want.saturating_sub(length).max(length / 2).max(1);
        poisson_sequence(lambda, extra, length, rng, &mut entries);
        length += extra;
        heights = interior_maxima(&entries, length, kernel)?;
    }
    Ok(HeightSample {
        lambda,
        length,
        nonzero: entries.len() as u64,
        heights,
    })
}

/// Seeded convenience wrapper with the default length rule.
pub fn simulate_heights_seeded(lambda: f64, kernel: &Kernel, seed: u64) -> Result<HeightSample> {
    let p = TableParams::default();
    simulate_heights(lambda, kernel, &p, &mut stream_rng(seed, 0))
}

/// Empirical survival `#{h >= u} / n` over sorted heights.
pub fn empirical_survival(sorted: &[f64], u: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let below = sorted.partition_point(|&h| h < u);
    (sorted.len() - below) as f64 / sorted.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PValue {
    pub p: f64,
    /// Smaller than the Monte Carlo resolution `1 / n_maxima`.
    pub below_resolution: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalTable {
    format: String,
    version: u32,
    lambda_grid: Vec<f64>,
    u_grid: Vec<f64>,
    /// `values[i][j] = F(u_grid[j]; lambda_grid[i])`
    values: Vec<Vec<f64>>,
    /// Survival just above the mode, `P(U > w(0))`. The single-count
    /// heights form an atom at `w(0)`, so interpolation below `u_grid[1]`
    /// starts from this value rather than from 1.
    above_mode: Vec<f64>,
    n_maxima: Vec<u64>,
    sim_lengths: Vec<u64>,
    /// Distinct simulated heights pooled over all rates, ascending. The set
    /// of attainable heights does not depend on the rate.
    heights: Vec<f64>,
    kernel_fingerprint: String,
    kernel_mode: f64,
    seed: u64,
    data_lambda_min: f64,
    data_lambda_max: f64,
    params: TableParams,
}

/// Build the table for data rates in `[lambda_min, lambda_max]`, widened by
/// the configured margin on each side.
pub fn build_table(
    lambda_min: f64,
    lambda_max: f64,
    kernel: &Kernel,
    seed: u64,
    params: &TableParams,
) -> Result<SurvivalTable> {
    if !(lambda_min > 0.0) || !lambda_max.is_finite() || lambda_max < lambda_min {
        return Err(Error::InvalidArgument(format!(
            "degenerate rate range [{lambda_min}, {lambda_max}]"
        )));
    }
    if !(0.0..1.0).contains(&params.margin) {
        return Err(Error::InvalidArgument(format!("margin {} outside [0, 1)", params.margin)));
    }
    let lo = lambda_min * (1.0 - params.margin);
    let hi = lambda_max * (1.0 + params.margin);
    if !(hi > lo) || params.n_lambda < params.n_basis.max(2) || params.n_u < 2 {
        return Err(Error::InvalidArgument(format!(
            "degenerate table: rates [{lo}, {hi}], {} rates, {} heights",
            params.n_lambda, params.n_u
        )));
    }
    let n_l = params.n_lambda;
    let ratio = hi / lo;
    let mut lambda_grid: Vec<f64> = (0..n_l)
        .map(|i| lo * ratio.powf(i as f64 / (n_l - 1) as f64))
        .collect();
    lambda_grid[0] = lo;
    lambda_grid[n_l - 1] = hi;

    let samples: Vec<HeightSample> = lambda_grid
        .par_iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let mut rng = stream_rng(seed, i as u64);
            simulate_heights(lambda, kernel, params, &mut rng)
        })
        .collect::<Result<_>>()?;

    let u0 = kernel.mode_value();
    let observed_max = samples
        .iter()
        .filter_map(|s| s.heights.last().copied())
        .fold(u0, f64::max);
    let u_max = if observed_max > u0 * (1.0 + 1e-6) { observed_max } else { 2.0 * u0 };
    let n_u = params.n_u;
    let u_ratio = u_max / u0;
    let mut u_grid: Vec<f64> = (0..n_u)
        .map(|j| u0 * u_ratio.powf(j as f64 / (n_u - 1) as f64))
        .collect();
    u_grid[0] = u0;
    u_grid[n_u - 1] = u_max;

    let raw: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| {
            u_grid
                .iter()
                .enumerate()
                .map(|(j, &u)| {
                    let u = if j == 0 { u * (1.0 - MODE_SLACK) } else { u };
                    empirical_survival(&s.heights, u)
                })
                .collect()
        })
        .collect();

    let above_raw: Vec<f64> = samples
        .iter()
        .map(|s| empirical_survival(&s.heights, u0 * (1.0 + MODE_SLACK)))
        .collect();

    let xs: Vec<f64> = lambda_grid.iter().map(|l| l.ln()).collect();
    let basis = CubicBSpline::with_basis_count(xs[0], xs[n_l - 1], params.n_basis)?;
    let smoother = SplineSmoother::new(basis, &xs)?;
    let smooth_column = |column: &[f64]| -> Vec<f64> {
        smoother.smooth(column).into_iter().map(|v| v.clamp(0.0, 1.0)).collect()
    };
    let mut values = vec![vec![0.0; n_u]; n_l];
    let mut column = vec![0.0; n_l];
    for j in 0..n_u {
        for i in 0..n_l {
            column[i] = raw[i][j];
        }
        for (i, v) in smooth_column(&column).into_iter().enumerate() {
            values[i][j] = v;
        }
    }
    let mut above_mode = smooth_column(&above_raw);
    for (row, above) in values.iter_mut().zip(&mut above_mode) {
        // the isotonic pass sees the atom at u0 as its own step
        let mut ext = Vec::with_capacity(n_u + 1);
        ext.push(1.0);
        ext.push(*above);
        ext.extend_from_slice(&row[1..]);
        let fitted = isotonic_decreasing(&ext);
        *above = fitted[1];
        row[0] = 1.0;
        row[1..].copy_from_slice(&fitted[2..]);
    }

    let mut heights: Vec<f64> = samples.iter().flat_map(|s| s.heights.iter().copied()).collect();
    heights.sort_by(f64::total_cmp);
    heights.dedup();
    Ok(SurvivalTable {
        format: TABLE_FORMAT.to_string(),
        version: TABLE_VERSION,
        lambda_grid,
        u_grid,
        values,
        above_mode,
        n_maxima: samples.iter().map(|s| s.heights.len() as u64).collect(),
        sim_lengths: samples.iter().map(|s| s.length).collect(),
        heights,
        kernel_fingerprint: kernel.fingerprint(),
        kernel_mode: u0,
        seed,
        data_lambda_min: lambda_min,
        data_lambda_max: lambda_max,
        params: params.clone(),
    })
}

impl SurvivalTable {
    pub fn lambda_grid(&self) -> &[f64] {
        &self.lambda_grid
    }

    pub fn u_grid(&self) -> &[f64] {
        &self.u_grid
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn above_mode(&self) -> &[f64] {
        &self.above_mode
    }

    pub fn n_maxima(&self) -> &[u64] {
        &self.n_maxima
    }

    pub fn sim_lengths(&self) -> &[u64] {
        &self.sim_lengths
    }

    pub fn kernel_fingerprint(&self) -> &str {
        &self.kernel_fingerprint
    }

    pub fn kernel_mode(&self) -> f64 {
        self.kernel_mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &TableParams {
        &self.params
    }

    pub fn data_range(&self) -> (f64, f64) {
        (self.data_lambda_min, self.data_lambda_max)
    }

    pub fn lambda_range(&self) -> (f64, f64) {
        (self.lambda_grid[0], self.lambda_grid[self.lambda_grid.len() - 1])
    }

    pub fn covers(&self, lambda: f64) -> bool {
        let (lo, hi) = self.lambda_range();
        lambda >= lo * (1.0 - 1e-12) && lambda <= hi * (1.0 + 1e-12)
    }

    pub fn check_kernel(&self, kernel: &Kernel) -> Result<()> {
        let fp = kernel.fingerprint();
        if fp != self.kernel_fingerprint {
            return Err(Error::FingerprintMismatch {
                table: self.kernel_fingerprint.clone(),
                kernel: fp,
            });
        }
        Ok(())
    }

    /// Index of the grid rate closest to `lambda` on the log scale.
    pub fn nearest_lambda_index(&self, lambda: f64) -> usize {
        let x = lambda.ln();
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, l) in self.lambda_grid.iter().enumerate() {
            let d = (l.ln() - x).abs();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    /// Distinct simulated heights over all rates, ascending.
    pub fn attainable_heights(&self) -> &[f64] {
        &self.heights
    }

    fn bracket(&self, lambda: f64) -> Result<(usize, f64)> {
        if !self.covers(lambda) {
            let (min, max) = self.lambda_range();
            return Err(Error::LambdaOutOfRange { lambda, min, max });
        }
        let n = self.lambda_grid.len();
        let x = lambda.ln();
        let i = self
            .lambda_grid
            .partition_point(|l| l.ln() <= x)
            .saturating_sub(1)
            .min(n - 2);
        let x0 = self.lambda_grid[i].ln();
        let x1 = self.lambda_grid[i + 1].ln();
        Ok((i, ((x - x0) / (x1 - x0)).clamp(0.0, 1.0)))
    }

    /// Interpolated survival value at height `u` and rate `lambda`.
    pub fn lookup(&self, u: f64, lambda: f64) -> Result<PValue> {
        let (i, tl) = self.bracket(lambda)?;
        let n_u = self.u_grid.len();
        let nearest = if tl <= 0.5 { i } else { i + 1 };
        let resolution = 1.0 / self.n_maxima[nearest].max(1) as f64;
        if u <= self.u_grid[0] {
            return Ok(PValue {
                p: 1.0,
                below_resolution: false,
            });
        }
        if u > self.u_grid[n_u - 1] {
            return Ok(PValue {
                p: 0.0,
                below_resolution: true,
            });
        }
        let j = self.u_grid.partition_point(|&g| g <= u).saturating_sub(1).min(n_u - 2);
        let tu = ((u - self.u_grid[j]) / (self.u_grid[j + 1] - self.u_grid[j])).clamp(0.0, 1.0);
        let row = |i: usize| {
            let r = &self.values[i];
            let left = if j == 0 { self.above_mode[i] } else { r[j] };
            (1.0 - tu) * left + tu * r[j + 1]
        };
        let a = row(i);
        let b = row(i + 1);
        let p = ((1.0 - tl) * a + tl * b).clamp(0.0, 1.0);
        Ok(PValue {
            p,
            below_resolution: p < resolution,
        })
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let t: SurvivalTable = serde_json::from_reader(r)?;
        if t.format != TABLE_FORMAT {
            return Err(Error::TableFormat(format!("unknown format {:?}", t.format)));
        }
        if t.version != TABLE_VERSION {
            return Err(Error::TableFormat(format!("unsupported version {}", t.version)));
        }
        let n_l = t.lambda_grid.len();
        if n_l < 2
            || t.values.len() != n_l
            || t.above_mode.len() != n_l
            || t.n_maxima.len() != n_l
            || t.values.iter().any(|r| r.len() != t.u_grid.len())
        {
            return Err(Error::TableFormat("inconsistent grid dimensions".into()));
        }
        Ok(t)
    }
}

/// `F(height; lambda0_plus)` for one candidate.
pub fn pvalue(candidate: &Candidate, lambda0_plus: f64, table: &SurvivalTable) -> Result<PValue> {
    if !(candidate.height > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "candidate height must be positive, got {}",
            candidate.height
        )));
    }
    table.lookup(candidate.height, lambda0_plus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_params() -> TableParams {
        TableParams {
            n_lambda: 40,
            n_u: 30,
            min_length: 20_000,
            min_maxima: 200,
            ..TableParams::default()
        }
    }

    #[test]
    fn isolated_counts_have_mode_height() {
        let k = Kernel::normalized(vec![1.0, 2.0, 1.0]).unwrap();
        let p = TableParams {
            min_maxima: 0,
            ..TableParams::default()
        };
        let s = simulate_heights(1e-5, &k, &p, &mut stream_rng(3, 0)).unwrap();
        assert!(s.nonzero >= 100);
        assert!(s.length >= 10_000_000);
        assert!(!s.heights.is_empty());
        assert!(s.heights.iter().all(|&h| h == k.mode_value()));
    }

    #[test]
    fn simulation_is_seed_deterministic() {
        let k = Kernel::reference_shape(101).unwrap();
        let a = simulate_heights_seeded(0.01, &k, 11).unwrap();
        let b = simulate_heights_seeded(0.01, &k, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.length >= 100_000);
        assert!(a.heights.len() >= 2_000);
    }

    #[test]
    fn length_rule() {
        let k = Kernel::reference_shape(101).unwrap();
        let s = simulate_heights_seeded(0.0005, &k, 1).unwrap();
        assert!(s.length >= 200_000);
        assert!(s.nonzero >= 100);
    }

    #[test]
    fn degenerate_ranges_are_rejected() {
        let k = Kernel::reference_shape(101).unwrap();
        let p = small_params();
        assert!(build_table(0.0, 0.1, &k, 1, &p).is_err());
        assert!(build_table(0.1, 0.05, &k, 1, &p).is_err());
        let no_margin = TableParams { margin: 0.0, ..p };
        assert!(build_table(0.05, 0.05, &k, 1, &no_margin).is_err());
    }

    #[test]
    fn table_shape_and_lookup_rules() {
        let k = Kernel::reference_shape(201).unwrap();
        let t = build_table(0.002, 0.02, &k, 5, &small_params()).unwrap();
        let (lo, hi) = t.lambda_range();
        assert!((lo - 0.0015).abs() < 1e-15);
        assert!((hi - 0.025).abs() < 1e-15);
        for row in t.values() {
            assert_eq!(row[0], 1.0);
            assert!(row.windows(2).all(|w| w[1] <= w[0]));
            assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        // single isolated tag
        for &l in t.lambda_grid() {
            assert_eq!(t.lookup(k.mode_value(), l).unwrap().p, 1.0);
        }
        // grid nodes return stored values
        let (i, j) = (7, 4);
        let v = t.lookup(t.u_grid()[j], t.lambda_grid()[i]).unwrap();
        assert_eq!(v.p, t.values()[i][j]);
        // above the largest height
        let top = t.lookup(t.u_grid()[t.u_grid().len() - 1] * 1.01, t.lambda_grid()[0]).unwrap();
        assert_eq!(top.p, 0.0);
        assert!(top.below_resolution);
        assert!(matches!(t.lookup(0.01, 0.03), Err(Error::LambdaOutOfRange { .. })));
        assert!(t.lookup(0.01, 0.001).is_err());
    }

    #[test]
    fn atom_at_mode_is_not_smeared() {
        let k = Kernel::reference_shape(201).unwrap();
        let t = build_table(0.002, 0.02, &k, 5, &small_params()).unwrap();
        let l = t.lambda_grid()[3];
        let just_above = t.lookup(k.mode_value() * (1.0 + 1e-12), l).unwrap().p;
        assert!((just_above - t.above_mode()[3]).abs() < 1e-9);
        assert!(t.above_mode()[3] < 1.0);
        assert!(t.above_mode().iter().zip(t.values()).all(|(a, r)| *a >= r[1]));
    }

    #[test]
    fn bilinear_midpoint_is_mean_of_corners() {
        let k = Kernel::reference_shape(201).unwrap();
        let t = build_table(0.002, 0.02, &k, 5, &small_params()).unwrap();
        let (i, j) = (10, 6);
        let lm = (t.lambda_grid()[i].ln() * 0.5 + t.lambda_grid()[i + 1].ln() * 0.5).exp();
        let um = 0.5 * (t.u_grid()[j] + t.u_grid()[j + 1]);
        let v = t.values();
        let mean = 0.25 * (v[i][j] + v[i][j + 1] + v[i + 1][j] + v[i + 1][j + 1]);
        assert!((t.lookup(um, lm).unwrap().p - mean).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_and_fingerprint_check() {
        let k = Kernel::reference_shape(101).unwrap();
        let t = build_table(0.01, 0.01, &k, 2, &small_params()).unwrap();
        let mut buf = Vec::new();
        t.write_json(&mut buf).unwrap();
        let back = SurvivalTable::read_json(&buf[..]).unwrap();
        assert_eq!(back, t);
        assert!(back.check_kernel(&k).is_ok());
        let other = Kernel::reference_shape(103).unwrap();
        assert!(matches!(back.check_kernel(&other), Err(Error::FingerprintMismatch { .. })));
        let bad = String::from_utf8(buf).unwrap().replace(TABLE_FORMAT, "other");
        assert!(SurvivalTable::read_json(bad.as_bytes()).is_err());
    }

    #[test]
    fn pvalue_rejects_nonpositive_height() {
        let k = Kernel::reference_shape(101).unwrap();
        let t = build_table(0.01, 0.01, &k, 2, &small_params()).unwrap();
        let c = Candidate {
            chrom: "c".into(),
            position: 1,
            height: 0.0,
            near_edge: false,
        };
        assert!(pvalue(&c, 0.01, &t).is_err());
        let c = Candidate { height: k.mode_value(), ..c };
        assert_eq!(pvalue(&c, 0.01, &t).unwrap().p, 1.0);
    }
}
