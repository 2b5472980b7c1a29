//! Benjamini-Hochberg selection, peak ranking and p-value diagnostics.

use std::cmp::Ordering;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::survival::SurvivalTable;

/// Step-up BH: with sorted p-values `p(1) <= ... <= p(m)` and
/// `k* = max{k : p(k) <= k q / m}`, every p-value `<= p(k*)` is flagged.
pub fn bh_select(pvalues: &[f64], q: f64) -> Result<Vec<bool>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidArgument(format!("FDR level must be in (0, 1), got {q}")));
    }
    let m = pvalues.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    let mut sorted = pvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut threshold = None;
    for k in (1..=m).rev() {
        if sorted[k - 1] <= k as f64 * q / m as f64 {
            threshold = Some(sorted[k - 1]);
            break;
        }
    }
    Ok(match threshold {
        Some(t) => pvalues.iter().map(|&p| p <= t).collect(),
        None => vec![false; m],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Peak {
    pub chrom: String,
    pub position: u64,
    pub height: f64,
    pub lambda0: f64,
    pub lambda0_plus: f64,
    pub snr: f64,
    pub p: f64,
    pub below_resolution: bool,
    pub significant: bool,
    pub rank: usize,
}

/// Height over the local background, falling back to the floored rate where
/// the Control predicts zero.
pub fn snr(height: f64, lambda0: f64, lambda0_plus: f64) -> f64 {
    if lambda0 > 0.0 {
        height / lambda0
    } else {
        height / lambda0_plus
    }
}

fn rank_order(a: &Peak, b: &Peak) -> Ordering {
    b.significant
        .cmp(&a.significant)
        .then(b.below_resolution.cmp(&a.below_resolution))
        .then_with(|| {
            if a.below_resolution {
                b.snr.total_cmp(&a.snr)
            } else {
                a.p.total_cmp(&b.p)
            }
        })
        .then(b.snr.total_cmp(&a.snr))
        .then_with(|| a.chrom.cmp(&b.chrom))
        .then(a.position.cmp(&b.position))
}

/// Significant peaks first. Within a group, below-resolution peaks lead and
/// are ordered by SNR; the rest by p-value, then SNR, then address. Ranks
/// are assigned 1..m in the final order.
pub fn rank_peaks(mut peaks: Vec<Peak>) -> Vec<Peak> {
    peaks.sort_by(rank_order);
    for (i, p) in peaks.iter_mut().enumerate() {
        p.rank = i + 1;
    }
    peaks
}

pub fn write_peaks_tsv<W: Write>(peaks: &[Peak], mut w: W) -> Result<()> {
    writeln!(
        w,
        "rank\tchrom\tposition\theight\tlambda0\tlambda0_plus\tsnr\tpvalue\tbelow_resolution\tsignificant"
    )?;
    for p in peaks {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            p.rank,
            p.chrom,
            p.position,
            p.height,
            p.lambda0,
            p.lambda0_plus,
            p.snr,
            p.p,
            u8::from(p.below_resolution),
            u8::from(p.significant)
        )?;
    }
    Ok(())
}

/// Read a table written by [`write_peaks_tsv`].
pub fn read_peaks_tsv<R: BufRead>(reader: R) -> Result<Vec<Peak>> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, l)) => l?,
        None => return Ok(Vec::new()),
    };
    let cols: Vec<&str> = header.split('\t').collect();
    let idx = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::parse(1, format!("missing column {name}")))
    };
    let ix = [
        idx("rank")?,
        idx("chrom")?,
        idx("position")?,
        idx("height")?,
        idx("lambda0")?,
        idx("lambda0_plus")?,
        idx("snr")?,
        idx("pvalue")?,
        idx("below_resolution")?,
        idx("significant")?,
    ];
    let mut out = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let n = i + 1;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() < cols.len() {
            return Err(Error::parse(n, format!("expected {} fields, found {}", cols.len(), f.len())));
        }
        let num = |k: usize| -> Result<f64> {
            f[ix[k]].parse().map_err(|_| Error::parse(n, format!("bad number {:?}", f[ix[k]])))
        };
        let int = |k: usize| -> Result<u64> {
            f[ix[k]].parse().map_err(|_| Error::parse(n, format!("bad integer {:?}", f[ix[k]])))
        };
        out.push(Peak {
            rank: int(0)? as usize,
            chrom: f[ix[1]].to_string(),
            position: int(2)?,
            height: num(3)?,
            lambda0: num(4)?,
            lambda0_plus: num(5)?,
            snr: num(6)?,
            p: num(7)?,
            below_resolution: int(8)? != 0,
            significant: int(9)? != 0,
        });
    }
    Ok(out)
}

/// Uniform grid of `n + 1` points on `[0, 1]`.
pub fn p_grid(n: usize) -> Vec<f64> {
    let n = n.max(1);
    (0..=n).map(|i| i as f64 / n as f64).collect()
}

/// Empirical CDF of `pvalues` evaluated on `grid`.
pub fn observed_pvalue_cdf(pvalues: &[f64], grid: &[f64]) -> Vec<f64> {
    let mut sorted = pvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len().max(1) as f64;
    grid.iter()
        .map(|&p| sorted.partition_point(|&x| x <= p) as f64 / m)
        .collect()
}

/// Null CDF of the discrete p-value `F(U; lambda)`: its attainable values
/// are `F(u_k; lambda)` over the distinct heights `u_k`, and
/// `G0(p) = max{F(u_k) : F(u_k) <= p}` (0 if none).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteNull {
    /// Ascending, distinct.
    levels: Vec<f64>,
}

impl DiscreteNull {
    pub fn from_levels(mut levels: Vec<f64>) -> Self {
        levels.retain(|v| v.is_finite());
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        DiscreteNull { levels }
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn cdf(&self, p: f64) -> f64 {
        let i = self.levels.partition_point(|&v| v <= p);
        if i == 0 {
            0.0
        } else {
            self.levels[i - 1]
        }
    }
}

fn null_from_heights(table: &SurvivalTable, heights: &[f64], lambda: f64) -> Result<DiscreteNull> {
    let mut levels = Vec::with_capacity(heights.len() + 1);
    levels.push(1.0);
    for &u in heights {
        levels.push(table.lookup(u, lambda)?.p);
    }
    Ok(DiscreteNull::from_levels(levels))
}

/// `G0(.; lambda)` over the heights observed while building the table.
pub fn null_pvalue_cdf(lambda: f64, table: &SurvivalTable) -> Result<DiscreteNull> {
    null_from_heights(table, table.attainable_heights(), lambda)
}

/// `(1/m) sum_t G0(p; lambda_t)` on `grid`. Rates are bucketed to their
/// nearest grid rate.
pub fn null_mixture_cdf(lambdas: &[f64], table: &SurvivalTable, grid: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; grid.len()];
    if lambdas.is_empty() {
        return Ok(out);
    }
    let mut weights = vec![0usize; table.lambda_grid().len()];
    for &l in lambdas {
        if !table.covers(l) {
            let (min, max) = table.lambda_range();
            return Err(Error::LambdaOutOfRange { lambda: l, min, max });
        }
        weights[table.nearest_lambda_index(l)] += 1;
    }
    let m = lambdas.len() as f64;
    for (i, &n) in weights.iter().enumerate() {
        if n == 0 {
            continue;
        }
        let lambda = table.lambda_grid()[i];
        let g0 = null_from_heights(table, table.attainable_heights(), lambda)?;
        for (o, &p) in out.iter_mut().zip(grid) {
            *o += n as f64 * g0.cdf(p) / m;
        }
    }
    for o in &mut out {
        *o = o.clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Kolmogorov-Smirnov distance between the empirical CDF of `pvalues` and
/// a discrete null. Both are right-continuous step functions, so the
/// supremum is attained at one of their jump points.
pub fn ks_distance(pvalues: &[f64], null: &DiscreteNull) -> f64 {
    let mut sorted = pvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len().max(1) as f64;
    let mut points: Vec<f64> = sorted.iter().chain(null.levels()).copied().collect();
    points.push(0.0);
    points.sort_by(f64::total_cmp);
    points.dedup();
    // both functions are constant between consecutive points
    points
        .iter()
        .map(|&p| (sorted.partition_point(|&x| x <= p) as f64 / m - null.cdf(p)).abs())
        .fold(0.0, f64::max)
}

/// Dvoretzky-Kiefer-Wolfowitz band half-width for `n` samples at level `alpha`.
pub fn dkw_epsilon(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n.max(1) as f64)).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NullDiagnostics {
    pub p: Vec<f64>,
    pub g_hat: Vec<f64>,
    pub g0_hat: Vec<f64>,
    pub g_empirical_null: Option<Vec<f64>>,
}

impl NullDiagnostics {
    pub fn compute(
        pvalues: &[f64],
        lambdas: &[f64],
        table: &SurvivalTable,
        empirical_null: Option<&[f64]>,
        grid: Vec<f64>,
    ) -> Result<Self> {
        Ok(NullDiagnostics {
            g_hat: observed_pvalue_cdf(pvalues, &grid),
            g0_hat: null_mixture_cdf(lambdas, table, &grid)?,
            g_empirical_null: empirical_null.map(|e| observed_pvalue_cdf(e, &grid)),
            p: grid,
        })
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        match &self.g_empirical_null {
            Some(_) => writeln!(w, "p\tG_hat\tG0_hat\tG_empirical_null")?,
            None => writeln!(w, "p\tG_hat\tG0_hat")?,
        }
        for i in 0..self.p.len() {
            write!(w, "{}\t{}\t{}", self.p[i], self.g_hat[i], self.g0_hat[i])?;
            if let Some(e) = &self.g_empirical_null {
                write!(w, "\t{}", e[i])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_bh(p: &[f64], q: f64) -> Vec<bool> {
        let m = p.len();
        let mut best: Option<f64> = None;
        for &t in p {
            let k = p.iter().filter(|&&x| x <= t).count();
            if t <= k as f64 * q / m as f64 && best.is_none_or(|b| t > b) {
                best = Some(t);
            }
        }
        p.iter().map(|&x| best.is_some_and(|b| x <= b)).collect()
    }

    fn peak(p: f64, snr: f64, below: bool, pos: u64) -> Peak {
        Peak {
            chrom: "c".into(),
            position: pos,
            height: 1.0,
            lambda0: 0.1,
            lambda0_plus: 0.1,
            snr,
            p,
            below_resolution: below,
            significant: true,
            rank: 0,
        }
    }

    #[test]
    fn bh_examples() {
        let f = bh_select(&[0.001, 0.002, 0.5, 0.9, 1.0], 0.05).unwrap();
        assert_eq!(f, vec![true, true, false, false, false]);
        assert!(bh_select(&[1.0; 7], 0.1).unwrap().iter().all(|&x| !x));
        assert!(bh_select(&[], 0.1).unwrap().is_empty());
        assert!(bh_select(&[0.1], 0.0).is_err());
        assert!(bh_select(&[0.1], 1.0).is_err());
        // ties at the threshold
        assert_eq!(bh_select(&[0.02, 0.02, 0.9], 0.1).unwrap(), vec![true, true, false]);
    }

    proptest! {
        #[test]
        fn bh_matches_brute_force(p in prop::collection::vec(0.0f64..=1.0, 1..200), q in 0.01f64..0.5) {
            prop_assert_eq!(bh_select(&p, q).unwrap(), brute_bh(&p, q));
        }

        #[test]
        fn lowering_q_never_adds(p in prop::collection::vec(0.0f64..=0.2, 1..100), q in 0.02f64..0.5) {
            let hi = bh_select(&p, q).unwrap();
            let lo = bh_select(&p, q / 2.0).unwrap();
            for (a, b) in lo.iter().zip(&hi) {
                prop_assert!(!a || *b);
            }
        }
    }

    #[test]
    fn ranking_rules() {
        let r = rank_peaks(vec![peak(0.01, 3.0, false, 1), peak(0.001, 2.0, false, 2)]);
        assert_eq!(r[0].position, 2);
        let r = rank_peaks(vec![peak(0.0, 20.0, true, 1), peak(0.0, 50.0, true, 2), peak(1e-4, 90.0, false, 3)]);
        assert_eq!(r.iter().map(|p| p.position).collect::<Vec<_>>(), vec![2, 1, 3]);
        assert_eq!(r.iter().map(|p| p.rank).collect::<Vec<_>>(), vec![1, 2, 3]);
        let mut ns = peak(1e-6, 9.0, false, 4);
        ns.significant = false;
        let r = rank_peaks(vec![ns, peak(0.05, 1.0, false, 5)]);
        assert_eq!(r[0].position, 5);
        // full ties fall back to address
        let r = rank_peaks(vec![peak(0.1, 1.0, false, 9), peak(0.1, 1.0, false, 7)]);
        assert_eq!(r[0].position, 7);
    }

    #[test]
    fn peaks_tsv_round_trip() {
        let mut a = peak(0.0123, 4.5, false, 17);
        a.rank = 1;
        let mut b = peak(1e-300, 77.25, true, 3);
        b.significant = false;
        b.rank = 2;
        let mut buf = Vec::new();
        write_peaks_tsv(&[a.clone(), b.clone()], &mut buf).unwrap();
        assert_eq!(read_peaks_tsv(&buf[..]).unwrap(), vec![a, b]);
        assert!(read_peaks_tsv("rank\tchrom\n".as_bytes()).is_err());
    }

    #[test]
    fn snr_falls_back_to_floor() {
        assert_eq!(snr(2.0, 0.5, 0.5), 4.0);
        assert_eq!(snr(2.0, 0.0, 0.25), 8.0);
    }

    #[test]
    fn observed_cdf() {
        let g = observed_pvalue_cdf(&[0.3], &[0.0, 0.29, 0.3, 1.0]);
        assert_eq!(g, vec![0.0, 0.0, 1.0, 1.0]);
        let ps: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
        let grid = p_grid(10);
        for (g, p) in observed_pvalue_cdf(&ps, &grid).iter().zip(&grid) {
            assert!((g - p).abs() < 1e-12);
        }
    }

    #[test]
    fn discrete_null_is_super_uniform() {
        let g0 = DiscreteNull::from_levels(vec![1.0, 0.4, 0.1, 0.4]);
        assert_eq!(g0.levels(), &[0.1, 0.4, 1.0]);
        assert_eq!(g0.cdf(0.05), 0.0);
        assert_eq!(g0.cdf(0.1), 0.1);
        assert_eq!(g0.cdf(0.99), 0.4);
        assert_eq!(g0.cdf(1.0), 1.0);
        for p in p_grid(100) {
            assert!(g0.cdf(p) <= p);
        }
    }

    #[test]
    fn ks_of_matching_sample_is_small() {
        let g0 = DiscreteNull::from_levels(vec![0.25, 0.5, 1.0]);
        // mass 0.25 at each of 0.25 and 0.5, 0.5 at 1
        let sample = [0.25, 0.5, 1.0, 1.0];
        assert!(ks_distance(&sample, &g0) < 1e-12);
        assert!((ks_distance(&[1.0, 1.0, 1.0, 1.0], &g0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dkw_band() {
        let e = dkw_epsilon(1000, 0.01);
        assert!((e - ((200.0f64).ln() / 2000.0).sqrt()).abs() < 1e-15);
    }
}
