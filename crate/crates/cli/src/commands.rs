use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};

use stem_core::align::{align_tags, AlignOutcome, AlignParams};
use stem_core::background::{regression_bins, write_bins_tsv, BackgroundParams};
use stem_core::multitest::{read_peaks_tsv, write_peaks_tsv, NullDiagnostics, p_grid};
use stem_core::pipeline::{call_peaks, empirical_null_pvalues, CallParams};
use stem_core::seed::{derive, stage};
use stem_core::spikein::{run_sweep, summarize, write_rows_tsv, write_summary_tsv, SpikeInConfig};
use stem_core::survival::{build_table, SurvivalTable, TableParams};
use stem_core::tags::{dedup_tags, infer_sizes, parse_tags, shift_and_count, TagRecord};
use stem_core::{ChromSizes, CountTrack, Kernel};

use crate::config::Config;
use crate::{AlignArgs, CallArgs, DiagnoseArgs, SimulateArgs, TableArgs};

fn open(path: &Path, what: &str) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {what} {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn out_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("cannot create output directory {}", path.display()))
}

struct LoadedTags {
    deduped: Vec<TagRecord>,
    n_in: u64,
}

fn load_tags(path: &Path, what: &str) -> Result<LoadedTags> {
    let tags = parse_tags(open(path, what)?).with_context(|| format!("reading {what} {}", path.display()))?;
    let n_in = tags.len() as u64;
    let deduped = dedup_tags(&tags);
    info!("{what}: {n_in} tags, {} after duplicate removal", deduped.len());
    Ok(LoadedTags { deduped, n_in })
}

fn load_sizes(path: Option<PathBuf>, tags: &[&[TagRecord]]) -> Result<ChromSizes> {
    match path {
        Some(p) => ChromSizes::read(open(&p, "chromosome sizes file")?)
            .with_context(|| format!("reading chromosome sizes {}", p.display())),
        None => {
            let mut sizes = ChromSizes::new();
            for t in tags {
                sizes.merge_max(&infer_sizes(t));
            }
            warn!("no chromosome sizes given; using the largest tag end per chromosome");
            Ok(sizes)
        }
    }
}

fn load_kernel(path: &Path) -> Result<Kernel> {
    Kernel::read_tsv(open(path, "kernel file")?).with_context(|| format!("reading kernel {}", path.display()))
}

fn load_table(path: &Path) -> Result<SurvivalTable> {
    SurvivalTable::read_json(open(path, "survival table")?)
        .with_context(|| format!("reading survival table {}", path.display()))
}

fn align_params(cfg: &Config, a: &AlignArgs) -> Result<AlignParams> {
    let d = AlignParams::default();
    Ok(AlignParams {
        tentative_shift: cfg.pick(a.tentative_shift, "tentative-shift", d.tentative_shift)?,
        prelim_sigma: cfg.pick(a.prelim_sigma, "prelim-sigma", d.prelim_sigma)?,
        n_peaks: cfg.pick(a.n_peaks, "n-peaks", d.n_peaks)?,
        profile_window: cfg.pick(a.profile_window, "profile-window", d.profile_window)?,
        kernel_width: cfg.pick(a.kernel_width, "kernel-width", d.kernel_width)?,
        knot_spacing: cfg.pick(a.knot_spacing, "knot-spacing", d.knot_spacing)?,
    })
}

fn table_params(cfg: &Config, t: &TableArgs) -> Result<TableParams> {
    let d = TableParams::default();
    Ok(TableParams {
        n_lambda: cfg.pick(t.n_lambda, "n-lambda", d.n_lambda)?,
        n_u: cfg.pick(t.n_u, "n-u", d.n_u)?,
        margin: cfg.pick(t.margin, "margin", d.margin)?,
        min_length: cfg.pick(t.min_sim_length, "min-sim-length", d.min_length)?,
        min_maxima: cfg.pick(t.min_sim_maxima, "min-sim-maxima", d.min_maxima)?,
        ..d
    })
}

fn write_align(out: &Path, a: &AlignOutcome) -> Result<()> {
    let mut w = create(&out.join("shift.txt"))?;
    writeln!(w, "{}", a.shift)?;
    w.flush()?;
    let mut w = create(&out.join("kernel.tsv"))?;
    a.kernel.write_tsv(&mut w)?;
    w.flush()?;
    let mut w = create(&out.join("strand_profile.tsv"))?;
    a.profile.write_tsv(&mut w)?;
    w.flush()?;
    let mut w = create(&out.join("align_centers.tsv"))?;
    writeln!(w, "chrom\tposition")?;
    for (c, p) in &a.centers {
        writeln!(w, "{c}\t{p}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn align(cfg: &Config, a: AlignArgs) -> Result<()> {
    let ip = cfg.require_path(a.ip.clone(), "ip")?;
    let out = cfg.require_path(a.out.clone(), "out")?;
    let tags = load_tags(&ip, "IP tags file")?;
    let sizes = load_sizes(cfg.pick_path(a.sizes.clone(), "sizes"), &[&tags.deduped])?;
    let chrom: Option<String> = cfg.pick_opt(a.chrom.clone(), "chrom")?;
    let outcome = align_tags(&tags.deduped, &sizes, chrom.as_deref(), &align_params(cfg, &a)?)?;
    out_dir(&out)?;
    write_align(&out, &outcome)?;
    info!("shift {} bp written to {}", outcome.shift, out.display());
    Ok(())
}

pub fn table(cfg: &Config, t: TableArgs) -> Result<()> {
    let kernel = load_kernel(&cfg.require_path(t.kernel.clone(), "kernel")?)?;
    let out = cfg.require_path(t.out.clone(), "out")?;
    let lo: f64 = cfg
        .pick_opt(t.lambda_min, "lambda-min")?
        .context("missing --lambda-min")?;
    let hi: f64 = cfg
        .pick_opt(t.lambda_max, "lambda-max")?
        .context("missing --lambda-max")?;
    let seed: u64 = cfg.pick(t.seed, "seed", 1)?;
    let table = build_table(lo, hi, &kernel, derive(seed, stage::TABLE), &table_params(cfg, &t)?)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        out_dir(parent)?;
    }
    let mut w = create(&out)?;
    table.write_json(&mut w)?;
    w.flush()?;
    info!("survival table written to {}", out.display());
    Ok(())
}

pub fn call(cfg: &Config, c: CallArgs) -> Result<()> {
    let ip_path = cfg.require_path(c.ip.clone(), "ip")?;
    let control_path = cfg.require_path(c.control.clone(), "control")?;
    let out = cfg.require_path(c.out.clone(), "out")?;
    let ip_tags = load_tags(&ip_path, "IP tags file")?;
    let control_tags = load_tags(&control_path, "Control tags file")?;
    let sizes = load_sizes(
        cfg.pick_path(c.sizes.clone(), "sizes"),
        &[&ip_tags.deduped, &control_tags.deduped],
    )?;
    out_dir(&out)?;

    let kernel_path = cfg.pick_path(c.kernel.clone(), "kernel");
    let shift_flag: Option<u64> = cfg.pick_opt(c.shift, "shift")?;
    let (kernel, shift) = match (kernel_path, shift_flag) {
        (Some(k), Some(s)) => (load_kernel(&k)?, s),
        (kp, sf) => {
            if ip_tags.deduped.is_empty() {
                warn!("IP sample is empty; nothing to call");
                let mut w = create(&out.join("peaks.tsv"))?;
                write_peaks_tsv(&[], &mut w)?;
                w.flush()?;
                return Ok(());
            }
            let args: AlignArgs = c.align.clone().into();
            let chrom: Option<String> = cfg.pick_opt(args.chrom.clone(), "chrom")?;
            let a = align_tags(&ip_tags.deduped, &sizes, chrom.as_deref(), &align_params(cfg, &args)?)?;
            write_align(&out, &a)?;
            let kernel = match kp {
                Some(k) => load_kernel(&k)?,
                None => a.kernel,
            };
            (kernel, sf.unwrap_or(a.shift))
        }
    };

    let ip = shift_and_count(&ip_tags.deduped, shift, &sizes);
    let control = shift_and_count(&control_tags.deduped, shift, &sizes);
    for (name, s) in [("IP", &ip), ("Control", &control)] {
        if s.dropped_boundary + s.dropped_unknown_chrom > 0 {
            warn!(
                "{name}: dropped {} tags shifted off a chromosome and {} on unknown chromosomes",
                s.dropped_boundary, s.dropped_unknown_chrom
            );
        }
    }

    let table_args: TableArgs = c.table.clone().into();
    let d = BackgroundParams::default();
    let params = CallParams {
        background: BackgroundParams {
            window_small: cfg.pick(c.window_small, "window-small", d.window_small)?,
            window_large: cfg.pick(c.window_large, "window-large", d.window_large)?,
            genome_length: cfg.pick(c.genome_length, "genome-length", d.genome_length)?,
        },
        table: table_params(cfg, &table_args)?,
        q: cfg.pick(c.q, "q", 0.01)?,
        seed: cfg.pick(table_args.seed, "seed", 1)?,
        diagnostics_points: cfg.pick(c.diagnostics_points, "diagnostics-points", 1000)?,
        ..CallParams::default()
    };
    let table = match cfg.pick_path(table_args.table.clone(), "table") {
        Some(p) => Some(load_table(&p)?),
        None => None,
    };

    let outcome = call_peaks(&ip.track, &control.track, &kernel, table.as_ref(), &params)?;
    let mut report = outcome.report.clone();
    report.ip_tags_in = Some(ip_tags.n_in);
    report.ip_tags_deduped = Some(ip_tags.deduped.len() as u64);
    report.ip_tags_dropped = Some(ip.dropped_boundary + ip.dropped_unknown_chrom);
    report.control_tags_in = Some(control_tags.n_in);
    report.control_tags_deduped = Some(control_tags.deduped.len() as u64);
    report.control_tags_dropped = Some(control.dropped_boundary + control.dropped_unknown_chrom);
    report.shift = Some(shift);

    let mut w = create(&out.join("peaks.tsv"))?;
    write_peaks_tsv(&outcome.peaks, &mut w)?;
    w.flush()?;
    let mut w = create(&out.join("report.tsv"))?;
    report.write_tsv(&mut w)?;
    w.flush()?;
    if outcome.model.is_some() {
        let mut w = create(&out.join("regression_bins.tsv"))?;
        write_bins_tsv(&regression_bins(&ip.track, &control.track, &params.background), &mut w)?;
        w.flush()?;
    }
    if let Some(t) = &outcome.table {
        if table.is_none() {
            let mut w = create(&out.join("table.json"))?;
            t.write_json(&mut w)?;
            w.flush()?;
        }
        let empirical = if cfg.pick(c.empirical_null.then_some(true), "empirical-null", false)? {
            info!("running the Control sample against itself for the empirical null");
            Some(empirical_null_pvalues(&control.track, &kernel, &params)?)
        } else {
            None
        };
        if let Some(d) = outcome.diagnostics(empirical.as_deref(), params.diagnostics_points)? {
            let mut w = create(&out.join("diagnostics.tsv"))?;
            d.write_tsv(&mut w)?;
            w.flush()?;
        }
    }
    info!(
        "{} of {} candidates significant; results in {}",
        report.significant,
        report.candidates,
        out.display()
    );
    Ok(())
}

pub fn simulate(cfg: &Config, s: SimulateArgs) -> Result<()> {
    let out = cfg.require_path(s.out.clone(), "out")?;
    let d = SpikeInConfig::default();
    let config = SpikeInConfig {
        length: cfg.pick(s.length, "length", d.length)?,
        n_spikes: cfg.pick(s.n_spikes, "n-spikes", d.n_spikes)?,
        replicates: cfg.pick(s.replicates, "replicates", d.replicates)?,
        q: cfg.pick(s.q, "q", d.q)?,
        seed: cfg.pick(s.seed, "seed", d.seed)?,
        area_scale: cfg.pick_opt(s.area_scale, "area-scale")?,
        ..d
    };
    let snr_list: String = cfg.pick(s.snr.clone(), "snr", "5,10,15".to_string())?;
    let snrs = snr_list
        .split(',')
        .map(|x| x.trim().parse::<f64>().with_context(|| format!("bad S value {x:?}")))
        .collect::<Result<Vec<_>>>()?;
    if snrs.is_empty() {
        bail!("no S values given");
    }
    let kernel = match cfg.pick_path(s.kernel.clone(), "kernel") {
        Some(p) => load_kernel(&p)?,
        None => Kernel::reference_shape(cfg.pick(s.kernel_width, "kernel-width", 801)?)?,
    };
    let template = match cfg.pick_path(s.template.clone(), "template") {
        Some(p) => {
            let track = CountTrack::read_tsv(open(&p, "template counts file")?, None)
                .with_context(|| format!("reading template {}", p.display()))?;
            let chrom: Option<String> = cfg.pick_opt(s.template_chrom.clone(), "template-chrom")?;
            let name = match chrom {
                Some(c) => c,
                None => track
                    .sizes()
                    .longest()
                    .map(str::to_string)
                    .context("template has no chromosomes")?,
            };
            Some(
                track
                    .get(&name)
                    .with_context(|| format!("template has no chromosome {name}"))?
                    .clone(),
            )
        }
        None => None,
    };
    let mut call = CallParams::default();
    call.background.genome_length = config.length as f64;
    call.table = table_params(
        cfg,
        &TableArgs {
            n_lambda: s.n_lambda,
            n_u: s.n_u,
            ..TableArgs::default()
        },
    )?;
    let rows = run_sweep(template.as_ref(), &kernel, &snrs, &config, &call)?;
    out_dir(&out)?;
    let mut w = create(&out.join("replicates.tsv"))?;
    write_rows_tsv(&rows, &mut w)?;
    w.flush()?;
    let summary = summarize(&rows);
    let mut w = create(&out.join("summary.tsv"))?;
    write_summary_tsv(&summary, &mut w)?;
    w.flush()?;
    for r in &summary {
        info!("S = {}: mean FDP {:.4}, mean power {:.4}", r.snr, r.mean_fdp, r.mean_power);
    }
    Ok(())
}

pub fn diagnose(cfg: &Config, d: DiagnoseArgs) -> Result<()> {
    let peaks_path = cfg.require_path(d.peaks.clone(), "peaks")?;
    let table = load_table(&cfg.require_path(d.table.clone(), "table")?)?;
    let out = cfg.require_path(d.out.clone(), "out")?;
    let peaks = read_peaks_tsv(open(&peaks_path, "peak table")?)
        .with_context(|| format!("reading peaks {}", peaks_path.display()))?;
    let null = match cfg.pick_path(d.null_peaks.clone(), "null-peaks") {
        Some(p) => Some(
            read_peaks_tsv(open(&p, "null peak table")?)
                .with_context(|| format!("reading null peaks {}", p.display()))?
                .iter()
                .map(|p| p.p)
                .collect::<Vec<_>>(),
        ),
        None => None,
    };
    let pvalues: Vec<f64> = peaks.iter().map(|p| p.p).collect();
    let lambdas: Vec<f64> = peaks.iter().map(|p| p.lambda0_plus).collect();
    let points = cfg.pick(d.diagnostics_points, "diagnostics-points", 1000)?;
    let diag = NullDiagnostics::compute(&pvalues, &lambdas, &table, null.as_deref(), p_grid(points))?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        out_dir(parent)?;
    }
    let mut w = create(&out)?;
    diag.write_tsv(&mut w)?;
    w.flush()?;
    Ok(())
}
