//! End-to-end peak calling on aligned count tracks.

use std::io::Write;

use log::{info, warn};
use rayon::prelude::*;

use crate::background::{fit_background_regression, BackgroundModel, BackgroundParams};
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::multitest::{bh_select, p_grid, rank_peaks, snr, NullDiagnostics, Peak};
use crate::seed::{derive, stage};
use crate::smooth::{find_candidates, Candidate, DEFAULT_GROUP_GAP};
use crate::survival::{build_table, SurvivalTable, TableParams};
use crate::track::CountTrack;

#[derive(Debug, Clone, PartialEq)]
pub struct CallParams {
    pub background: BackgroundParams,
    pub table: TableParams,
    pub q: f64,
    pub seed: u64,
    pub group_gap: u64,
    /// Intervals of the diagnostics p grid.
    pub diagnostics_points: usize,
}

impl Default for CallParams {
    fn default() -> Self {
        CallParams {
            background: BackgroundParams::default(),
            table: TableParams::default(),
            q: 0.01,
            seed: 1,
            group_gap: DEFAULT_GROUP_GAP,
            diagnostics_points: 1000,
        }
    }
}

/// Stage counts of one run. Tag counts are filled in by callers that start
/// from raw tags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub ip_tags_in: Option<u64>,
    pub ip_tags_deduped: Option<u64>,
    pub ip_tags_dropped: Option<u64>,
    pub control_tags_in: Option<u64>,
    pub control_tags_deduped: Option<u64>,
    pub control_tags_dropped: Option<u64>,
    pub shift: Option<u64>,
    pub ip_counts: u64,
    pub control_counts: u64,
    pub candidates: usize,
    pub significant: usize,
    pub below_resolution: usize,
    pub a1: Option<f64>,
    pub a2: Option<f64>,
    pub se_a1: Option<f64>,
    pub se_a2: Option<f64>,
    pub lambda_l: Option<f64>,
    pub table_lambda_min: Option<f64>,
    pub table_lambda_max: Option<f64>,
    pub q: f64,
    pub seed: u64,
}

impl RunReport {
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        fn opt<T: ToString>(v: &Option<T>) -> String {
            v.as_ref().map_or_else(|| "NA".to_string(), T::to_string)
        }
        let rows: Vec<(&str, String)> = vec![
            ("ip_tags_in", opt(&self.ip_tags_in)),
            ("ip_tags_deduped", opt(&self.ip_tags_deduped)),
            ("ip_tags_dropped", opt(&self.ip_tags_dropped)),
            ("control_tags_in", opt(&self.control_tags_in)),
            ("control_tags_deduped", opt(&self.control_tags_deduped)),
            ("control_tags_dropped", opt(&self.control_tags_dropped)),
            ("shift", opt(&self.shift)),
            ("ip_counts", self.ip_counts.to_string()),
            ("control_counts", self.control_counts.to_string()),
            ("candidates", self.candidates.to_string()),
            ("significant", self.significant.to_string()),
            ("below_resolution", self.below_resolution.to_string()),
            ("a1", opt(&self.a1)),
            ("a2", opt(&self.a2)),
            ("se_a1", opt(&self.se_a1)),
            ("se_a2", opt(&self.se_a2)),
            ("lambda_l", opt(&self.lambda_l)),
            ("table_lambda_min", opt(&self.table_lambda_min)),
            ("table_lambda_max", opt(&self.table_lambda_max)),
            ("q", self.q.to_string()),
            ("seed", self.seed.to_string()),
        ];
        writeln!(w, "key\tvalue")?;
        for (k, v) in rows {
            writeln!(w, "{k}\t{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CallOutcome {
    /// All candidates as ranked peaks; significant ones lead.
    pub peaks: Vec<Peak>,
    pub model: Option<BackgroundModel>,
    pub table: Option<SurvivalTable>,
    pub report: RunReport,
}

impl CallOutcome {
    pub fn significant(&self) -> impl Iterator<Item = &Peak> {
        self.peaks.iter().filter(|p| p.significant)
    }

    pub fn pvalues(&self) -> Vec<f64> {
        self.peaks.iter().map(|p| p.p).collect()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.peaks.iter().map(|p| p.lambda0_plus).collect()
    }

    /// Observed and null-mixture p-value CDFs, with an optional empirical
    /// null sample.
    pub fn diagnostics(&self, empirical_null: Option<&[f64]>, points: usize) -> Result<Option<NullDiagnostics>> {
        match &self.table {
            Some(t) => Ok(Some(NullDiagnostics::compute(
                &self.pvalues(),
                &self.lambdas(),
                t,
                empirical_null,
                p_grid(points),
            )?)),
            None => Ok(None),
        }
    }
}

/// Smooth the IP track with `kernel`, test every local maximum against the
/// survival table at the local background rate and apply BH at level `q`.
/// A table covering the candidates' rates is built when none is supplied.
pub fn call_peaks(
    ip: &CountTrack,
    control: &CountTrack,
    kernel: &Kernel,
    table: Option<&SurvivalTable>,
    params: &CallParams,
) -> Result<CallOutcome> {
    let mut report = RunReport {
        ip_counts: ip.total(),
        control_counts: control.total(),
        q: params.q,
        seed: params.seed,
        ..RunReport::default()
    };
    if !(params.q > 0.0 && params.q < 1.0) {
        return Err(Error::InvalidArgument(format!("FDR level must be in (0, 1), got {}", params.q)));
    }
    if let Some(t) = table {
        t.check_kernel(kernel)?;
    }
    if ip.total() == 0 {
        warn!("IP track is empty; no peaks");
        return Ok(CallOutcome {
            peaks: Vec::new(),
            model: None,
            table: table.cloned(),
            report,
        });
    }

    let candidates = find_candidates(ip, kernel, params.group_gap);
    info!("{} candidate local maxima", candidates.len());
    report.candidates = candidates.len();

    let model = fit_background_regression(ip, control, &params.background)?;
    info!(
        "background: a1 = {:.4} (se {:.4}), a2 = {:.4} (se {:.4}), floor {:.3e}",
        model.a1, model.a2, model.se_a1, model.se_a2, model.lambda_l
    );
    report.a1 = Some(model.a1);
    report.a2 = Some(model.a2);
    report.se_a1 = Some(model.se_a1);
    report.se_a2 = Some(model.se_a2);
    report.lambda_l = Some(model.lambda_l);

    let rates: Vec<(f64, f64)> = candidates
        .par_iter()
        .map(|c| model.at(control.get(&c.chrom), c.position))
        .collect();

    let built;
    let table = match table {
        Some(t) => t,
        None if candidates.is_empty() => {
            return Ok(CallOutcome {
                peaks: Vec::new(),
                model: Some(model),
                table: None,
                report,
            });
        }
        None => {
            let (lo, hi) = rates
                .iter()
                .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r.1), hi.max(r.1)));
            info!("building survival table for rates [{lo:.3e}, {hi:.3e}]");
            built = build_table(lo, hi, kernel, derive(params.seed, stage::TABLE), &params.table)?;
            &built
        }
    };
    let (tl, th) = table.lambda_range();
    report.table_lambda_min = Some(tl);
    report.table_lambda_max = Some(th);

    let pvals = candidates
        .par_iter()
        .zip(&rates)
        .map(|(c, r)| crate::survival::pvalue(c, r.1, table))
        .collect::<Result<Vec<_>>>()?;
    let flags = bh_select(&pvals.iter().map(|p| p.p).collect::<Vec<_>>(), params.q)?;

    let peaks: Vec<Peak> = candidates
        .into_iter()
        .zip(rates)
        .zip(pvals.iter().zip(flags))
        .map(|((c, (l0, l0p)), (pv, sig))| to_peak(c, l0, l0p, pv.p, pv.below_resolution, sig))
        .collect();
    let peaks = rank_peaks(peaks);
    report.significant = peaks.iter().filter(|p| p.significant).count();
    report.below_resolution = peaks.iter().filter(|p| p.below_resolution).count();
    info!("{} significant at q = {}", report.significant, params.q);
    Ok(CallOutcome {
        peaks,
        model: Some(model),
        table: Some(table.clone()),
        report,
    })
}

fn to_peak(c: Candidate, lambda0: f64, lambda0_plus: f64, p: f64, below: bool, significant: bool) -> Peak {
    Peak {
        snr: snr(c.height, lambda0, lambda0_plus),
        chrom: c.chrom,
        position: c.position,
        height: c.height,
        lambda0,
        lambda0_plus,
        p,
        below_resolution: below,
        significant,
        rank: 0,
    }
}

/// P-values from searching the Control sample for peaks using the same
/// Control sample as background.
pub fn empirical_null_pvalues(control: &CountTrack, kernel: &Kernel, params: &CallParams) -> Result<Vec<f64>> {
    let mut p = params.clone();
    p.seed = derive(params.seed, stage::REPLICATE);
    Ok(call_peaks(control, control, kernel, None, &p)?.pvalues())
}
