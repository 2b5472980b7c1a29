//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use stem_core::align::{estimate_shift, StrandProfile};
use stem_core::background::{fit_background_regression, window_average, BackgroundParams};
use stem_core::kernel::quartic_biweight;
use stem_core::multitest::{bh_select, dkw_epsilon, ks_distance, null_pvalue_cdf};
use stem_core::pipeline::CallParams;
use stem_core::smooth::{convolve, find_candidates, local_maxima, DEFAULT_GROUP_GAP};
use stem_core::spikein::{run_sweep, summarize, SpikeInConfig, SweepRow};
use stem_core::survival::{build_table, SurvivalTable, TableParams};
use stem_core::{ChromCounts, CountTrack, Kernel};

const SEED: u64 = 20_100_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn poisson_track(rate: f64, length: u64, rng: &mut ChaCha8Rng) -> CountTrack {
    let d = Poisson::new(rate).unwrap();
    let entries: Vec<(u64, u32)> = (0..length)
        .filter_map(|t| {
            let c = d.sample(rng) as u32;
            (c > 0).then_some((t, c))
        })
        .collect();
    let mut track = CountTrack::new();
    track.insert("c", ChromCounts::from_entries(length, entries).unwrap());
    track
}

fn spike_in() -> (Outcome, Vec<SweepRow>) {
    let start = Instant::now();
    let kernel = Kernel::reference_shape(801).unwrap();
    let config = SpikeInConfig {
        length: 1_000_000,
        n_spikes: 20,
        replicates: 10,
        q: 0.1,
        seed: SEED,
        ..SpikeInConfig::default()
    };
    let mut call = CallParams::default();
    call.background.genome_length = config.length as f64;
    let rows = run_sweep(None, &kernel, &[5.0, 10.0, 15.0], &config, &call).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let summary = summarize(&rows);
    let fdp_ok = summary.iter().all(|s| s.mean_fdp <= 0.15);
    let power = |snr: f64| summary.iter().find(|s| s.snr == snr).unwrap().mean_power;
    let detail = summary
        .iter()
        .map(|s| format!("S={}: FDP {:.3} power {:.3}", s.snr, s.mean_fdp, s.mean_power))
        .collect::<Vec<_>>()
        .join("; ");
    (
        check(
            fdp_ok && power(15.0) >= power(5.0) && elapsed <= 300.0,
            format!("{detail}; {elapsed:.1} s"),
        ),
        rows,
    )
}

fn background_recovery(rows: &[SweepRow]) -> Outcome {
    let min_cor = rows.iter().map(|r| r.lambda0_correlation).fold(f64::INFINITY, f64::min);
    let mean_cor = rows.iter().map(|r| r.lambda0_correlation).sum::<f64>() / rows.len() as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let control = poisson_track(0.01, 1_000_000, &mut rng);
    let ip = poisson_track(0.008, 1_000_000, &mut rng);
    let m = fit_background_regression(&ip, &control, &BackgroundParams::default()).unwrap();
    let sum = m.a1 + m.a2;
    check(
        min_cor >= 0.6 && (sum - 0.8).abs() <= 0.05,
        format!("lambda0 correlation min {min_cor:.3} mean {mean_cor:.3}; a1 + a2 = {sum:.4}"),
    )
}

fn null_validity() -> Outcome {
    let kernel = Kernel::reference_shape(801).unwrap();
    let table = build_table(0.01, 0.01, &kernel, SEED, &TableParams::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let track = poisson_track(0.01, 1_000_000, &mut rng);
    let cands = find_candidates(&track, &kernel, DEFAULT_GROUP_GAP);
    let pvals: Vec<f64> = cands.iter().map(|c| table.lookup(c.height, 0.01).unwrap().p).collect();
    let n = pvals.len();
    let eps = dkw_epsilon(n, 0.01);
    let mut sorted = pvals.clone();
    sorted.sort_by(f64::total_cmp);
    // the empirical CDF exceeds p by the most just at a sample point
    let excess = sorted
        .iter()
        .enumerate()
        .map(|(i, &p)| (i + 1) as f64 / n as f64 - p)
        .fold(f64::NEG_INFINITY, f64::max);
    let ks = ks_distance(&pvals, &null_pvalue_cdf(0.01, &table).unwrap());
    check(
        excess <= eps && ks <= 0.02,
        format!("{n} maxima; max(G - p) = {excess:.4} vs DKW {eps:.4}; KS to G0 = {ks:.4}"),
    )
}

fn single_tag() -> Outcome {
    let kernel = Kernel::reference_shape(801).unwrap();
    let table = build_table(0.001, 0.1, &kernel, SEED, &TableParams::default()).unwrap();
    let mut track = CountTrack::new();
    track.insert("c", ChromCounts::from_entries(20_000, vec![(10_000, 1)]).unwrap());
    let cands = find_candidates(&track, &kernel, DEFAULT_GROUP_GAP);
    let height_ok = cands.len() == 1 && cands[0].height == kernel.mode_value() && cands[0].position == 10_000;
    let p_ok = table
        .lambda_grid()
        .iter()
        .all(|&l| table.lookup(cands[0].height, l).unwrap().p == 1.0);
    check(
        height_ok && p_ok,
        format!(
            "height {:e} vs w(0) {:e}; p = 1 at all {} rates: {p_ok}",
            cands[0].height,
            kernel.mode_value(),
            table.lambda_grid().len()
        ),
    )
}

fn naive_maxima(v: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    for t in 0..v.len() {
        let left = if t == 0 { 0.0 } else { v[t - 1] };
        if v[t] <= left {
            continue;
        }
        let mut j = t;
        while j + 1 < v.len() && v[j + 1] == v[t] {
            j += 1;
        }
        let right = if j + 1 < v.len() { v[j + 1] } else { 0.0 };
        if v[t] > right {
            out.push(t);
        }
    }
    out
}

fn brute_bh(p: &[f64], q: f64) -> Vec<bool> {
    let m = p.len() as f64;
    let mut sorted = p.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut cut = None;
    for (k, &x) in sorted.iter().enumerate() {
        if x <= (k + 1) as f64 * q / m {
            cut = Some(x);
        }
    }
    p.iter().map(|&x| cut.is_some_and(|c| x <= c)).collect()
}

fn oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 5);
    let kernel = Kernel::reference_shape(801).unwrap();
    let w = kernel.weights();
    let h = kernel.half_width() as i64;
    let n = 10_000usize;
    let mut dense = vec![0u32; n];
    for _ in 0..150 {
        dense[rng.random_range(0..n)] += rng.random_range(1..4);
    }
    // a gap long enough to split groups
    for x in &mut dense[3_000..5_500] {
        *x = 0;
    }
    let counts = ChromCounts::from_dense(&dense);
    let mut track = CountTrack::new();
    track.insert("c", counts.clone());
    let smooth = convolve(&track, &kernel);
    let sc = &smooth.chroms["c"];
    let mut conv_err = 0.0f64;
    let mut smoothed = vec![0.0; n];
    for t in 0..n as i64 {
        let mut s = 0.0;
        for k in 0..w.len() as i64 {
            let p = t + k - h;
            if (0..n as i64).contains(&p) {
                s += f64::from(dense[p as usize]) * w[k as usize];
            }
        }
        smoothed[t as usize] = sc.value_at(t as u64);
        conv_err = conv_err.max((s - smoothed[t as usize]).abs());
    }
    let found: Vec<usize> = local_maxima(&smooth).iter().map(|c| c.position as usize).collect();
    let maxima_ok = found == naive_maxima(&smoothed);

    let mut bh_ok = true;
    for i in 0..200 {
        let m = rng.random_range(1..300);
        let p: Vec<f64> = (0..m)
            .map(|_| {
                let u: f64 = rng.random();
                // mix of small and tied values
                if i % 3 == 0 { (u * 20.0).floor() / 400.0 } else { u * u * u }
            })
            .collect();
        let q = rng.random_range(0.01..0.3);
        bh_ok &= bh_select(&p, q).unwrap() == brute_bh(&p, q);
    }

    let mut win_ok = true;
    for width in [1_000u64, 10_000, 777] {
        for t in (0..n as u64).step_by(37) {
            let lo = (t as i64 - (width / 2) as i64).max(0) as usize;
            let hi = ((t as i64 - (width / 2) as i64 + width as i64).max(0) as usize).min(n);
            let oracle = dense[lo..hi].iter().map(|&x| u64::from(x)).sum::<u64>() as f64 / (hi - lo) as f64;
            win_ok &= window_average(&counts, t, width) == oracle;
        }
    }
    check(
        conv_err <= 1e-12 && maxima_ok && bh_ok && win_ok,
        format!(
            "convolution max error {conv_err:.2e}; maxima exact {maxima_ok} ({}); BH exact {bh_ok}; windows exact {win_ok}",
            found.len()
        ),
    )
}

fn table_distance(a: &SurvivalTable, b: &SurvivalTable, i: usize) -> f64 {
    let l = a.lambda_grid()[i];
    a.u_grid()
        .iter()
        .chain(b.u_grid())
        .map(|&u| (a.lookup(u, l).unwrap().p - b.lookup(u, l).unwrap().p).abs())
        .fold(0.0, f64::max)
}

fn table_properties() -> Outcome {
    let kernel = Kernel::reference_shape(801).unwrap();
    let params = TableParams::default();
    let a = build_table(0.002, 0.05, &kernel, SEED, &params).unwrap();
    let b = build_table(0.002, 0.05, &kernel, SEED, &params).unwrap();
    let c = build_table(0.002, 0.05, &kernel, SEED + 1, &params).unwrap();
    let monotone = a.values().iter().all(|r| r.windows(2).all(|w| w[1] <= w[0]));
    let bounded = a.values().iter().flatten().all(|v| (0.0..=1.0).contains(v));
    let (mut ja, mut jb) = (Vec::new(), Vec::new());
    a.write_json(&mut ja).unwrap();
    b.write_json(&mut jb).unwrap();
    let identical = a == b && ja == jb;
    let worst = (0..a.lambda_grid().len())
        .map(|i| table_distance(&a, &c, i))
        .fold(0.0, f64::max);
    check(
        monotone && bounded && identical && worst <= 0.02,
        format!("monotone {monotone}; in [0,1] {bounded}; same seed identical {identical}; other seed max KS {worst:.4}"),
    )
}

fn shift_estimation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 7);
    let window = 2001usize;
    let half = (window / 2) as f64;
    let peaks = 1000.0;
    let mut details = Vec::new();
    let mut pass = true;
    for d in [20i64, 40, 62] {
        let mean = |k: usize, center: f64| {
            let x = k as f64 - half - center;
            // strong peaks: 50 tags per strand, sd 40 bp, flat background
            50.0 * (-x * x / (2.0 * 40.0 * 40.0)).exp() / (40.0 * (2.0 * std::f64::consts::PI).sqrt()) + 0.01
        };
        let mut draw = |center: f64| -> Vec<f64> {
            (0..window)
                .map(|k| Poisson::new(peaks * mean(k, center)).unwrap().sample(&mut rng) / peaks)
                .collect()
        };
        let profile = StrandProfile {
            window,
            forward: draw(-d as f64),
            reverse: draw(d as f64),
            n_peaks: peaks as usize,
        };
        let est = estimate_shift(&profile, 25.0).unwrap() as i64;
        pass &= (est - d).abs() <= 2;
        details.push(format!("2d={}: {est}", 2 * d));
    }
    check(pass, details.join(", "))
}

fn biweight() -> Outcome {
    let w5 = quartic_biweight(5).unwrap();
    let exact = w5 == vec![0.0, 9.0 / 16.0, 1.0, 9.0 / 16.0, 0.0];
    let ends = (1..=1000).map(|k| 2 * k + 1).all(|n| {
        let w = quartic_biweight(n).unwrap();
        w[0] == 0.0 && w[n - 1] == 0.0 && w[n / 2] == 1.0
    });
    check(exact && ends, format!("W=5 {w5:?}; endpoints 0 and centre 1 for W = 3..2001: {ends}"))
}

fn main() -> ExitCode {
    let mut all = true;
    let mut report = |n: usize, name: &str, o: Outcome| {
        all &= o.pass;
        println!(
            "{} criterion {n} ({name}): {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    };
    let (c1, rows) = spike_in();
    report(1, "spike-in FDR and power", c1);
    report(2, "background recovery", background_recovery(&rows));
    report(3, "null validity", null_validity());
    report(4, "single-tag rule", single_tag());
    report(5, "oracle equivalence", oracles());
    report(6, "survival table", table_properties());
    report(7, "shift estimation", shift_estimation());
    report(8, "quartic biweight", biweight());
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
