//! Report assembly and rendering: Table-1-style text, stable JSON, CSV, and
//! plot-data emission.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::impact::{ImpactSeries, ImpactSummary, SummaryRow};
use crate::panel::DescriptiveSummary;
use crate::priors::PriorConfig;
use crate::sampler::McmcConfig;
use crate::Result;

/// Defaults used by this tool that the underlying method leaves open; echoed
/// in every report so runs are auditable.
pub fn default_disclaimers() -> Vec<String> {
    vec![
        "burn-in 2000 (10% of total draws) is a tool default".to_owned(),
        "credible intervals are equal-tailed percentiles (linear interpolation between order statistics)".to_owned(),
        "relative effect computed per draw as ratio of sums minus one".to_owned(),
        "slab information matrix is the unit-information cross product averaged with its diagonal (w = 0.5)".to_owned(),
        "expected model size maps to independent inclusion probability min(1, size/k)".to_owned(),
        "intercept column participates in spike-and-slab selection unless pinned".to_owned(),
    ]
    .into_iter()
    .collect()
}

/// Everything a run echoes back besides the statistics.
#[derive(Debug, Clone, Serialize)]
pub struct ReportMetadata {
    pub tool_version: String,
    pub target: String,
    pub covariates: Vec<String>,
    pub intervention_year: i32,
    pub seed: u64,
    pub total_draws: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub retained_draws: usize,
    pub credible_level: f64,
    pub priors: PriorEcho,
    pub defaults_not_specified_by_source: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PriorEcho {
    pub nu_level: f64,
    pub level_scale_factor: f64,
    pub level_bound_factor: f64,
    pub expected_model_size: f64,
    pub expected_r2: f64,
    pub nu_obs: f64,
    pub always_include_intercept: bool,
}

impl From<&PriorConfig> for PriorEcho {
    fn from(c: &PriorConfig) -> Self {
        PriorEcho {
            nu_level: c.nu_level,
            level_scale_factor: c.level_scale_factor,
            level_bound_factor: c.level_bound_factor,
            expected_model_size: c.expected_model_size,
            expected_r2: c.expected_r2,
            nu_obs: c.nu_obs,
            always_include_intercept: c.always_include_intercept,
        }
    }
}

impl ReportMetadata {
    pub fn new(
        target: &str,
        covariates: &[String],
        intervention_year: i32,
        mcmc: &McmcConfig,
        prior: &PriorConfig,
        credible_level: f64,
        retained_draws: usize,
    ) -> Self {
        ReportMetadata {
            tool_version: crate::VERSION.to_owned(),
            target: target.to_owned(),
            covariates: covariates.to_vec(),
            intervention_year,
            seed: mcmc.seed,
            total_draws: mcmc.total_draws,
            burn_in: mcmc.burn_in,
            thinning: mcmc.thinning,
            retained_draws,
            credible_level,
            priors: prior.into(),
            defaults_not_specified_by_source: default_disclaimers(),
        }
    }
}

/// Full single-analysis report.
#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub metadata: ReportMetadata,
    pub summary: ImpactSummary,
    pub series: ImpactSeries,
    /// Covariate name with posterior inclusion frequency.
    pub inclusion: Vec<InclusionEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InclusionEntry {
    pub covariate: String,
    pub frequency: f64,
}

fn fmt_val(v: f64) -> String {
    format!("{v:.1}")
}

fn fmt_rel(v: f64) -> String {
    format!("{:+.0}%", v * 100.0)
}

/// p below 0.001 renders as `< 0.001`, mirroring the usual rounded "0.000"
/// presentation without ever printing zero.
pub fn fmt_p(p: f64) -> String {
    if p < 0.001 {
        "< 0.001".to_owned()
    } else {
        format!("{p:.3}")
    }
}

const TABLE_HEADER: &str =
    "Stat  Actual  Prediction(Val)  Prediction(lower)  Prediction(upper)  Relative(Val)  Relative(lower)  Relative(upper)  p";

fn push_row(out: &mut String, label: &str, stat: &str, row: &SummaryRow) {
    let _ = writeln!(
        out,
        "{}{:<5} {:>7} {:>16} {:>18} {:>18} {:>14} {:>16} {:>16}  {}",
        if label.is_empty() { String::new() } else { format!("{label:<4} ") },
        stat,
        fmt_val(row.actual),
        fmt_val(row.predicted),
        fmt_val(row.predicted_lower),
        fmt_val(row.predicted_upper),
        fmt_rel(row.rel_effect),
        fmt_rel(row.rel_effect_lower),
        fmt_rel(row.rel_effect_upper),
        fmt_p(row.p),
    );
}

/// Renders one summary in Table-1 column order (Stat, Actual, Prediction
/// Val/lower/upper, Relative Val/lower/upper, p).
pub fn render_summary_text(label: &str, summary: &ImpactSummary) -> String {
    let mut out = String::new();
    if label.is_empty() {
        let _ = writeln!(out, "{TABLE_HEADER}");
    } else {
        let _ = writeln!(out, "     {TABLE_HEADER}");
    }
    push_row(&mut out, label, "Avg", &summary.avg);
    push_row(&mut out, label, "Cum", &summary.cum);
    out
}

/// Significance verdict line for a summary.
pub fn significance_line(summary: &ImpactSummary) -> String {
    let direction = if summary.cum.abs_effect >= 0.0 { "positive" } else { "negative" };
    if summary.cum.p < 0.05 {
        format!(
            "Significant {direction} causal effect (one-sided tail-area probability p = {}).",
            fmt_p(summary.cum.p)
        )
    } else {
        format!(
            "No significant causal effect (one-sided tail-area probability p = {}).",
            fmt_p(summary.cum.p)
        )
    }
}

/// Full text report: metadata echo, Table-1 block, verdict, inclusion
/// frequencies, disclaimer list.
pub fn render_report_text(report: &AnalysisReport) -> String {
    let m = &report.metadata;
    let mut out = String::new();
    let _ = writeln!(out, "Causal impact analysis: {} (intervention {})", m.target, m.intervention_year);
    let _ = writeln!(
        out,
        "impactor {} | seed {} | draws {} (burn-in {}, thinning {}, retained {}) | credible level {:.0}%",
        m.tool_version,
        m.seed,
        m.total_draws,
        m.burn_in,
        m.thinning,
        m.retained_draws,
        m.credible_level * 100.0
    );
    let _ = writeln!(
        out,
        "priors: nu_level={} level_scale_factor={} level_bound_factor={} expected_model_size={} expected_r2={} nu_obs={} always_include_intercept={}",
        m.priors.nu_level,
        m.priors.level_scale_factor,
        m.priors.level_bound_factor,
        m.priors.expected_model_size,
        m.priors.expected_r2,
        m.priors.nu_obs,
        m.priors.always_include_intercept
    );
    let _ = writeln!(out, "covariates: {}", m.covariates.join(","));
    let _ = writeln!(out);
    out.push_str(&render_summary_text("", &report.summary));
    let _ = writeln!(out);
    let _ = writeln!(out, "{}", significance_line(&report.summary));
    let _ = writeln!(out);
    let _ = writeln!(out, "Posterior inclusion frequencies:");
    for e in &report.inclusion {
        let _ = writeln!(out, "  {:<12} {:.3}", e.covariate, e.frequency);
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "Defaults not specified by the source method:");
    for d in &m.defaults_not_specified_by_source {
        let _ = writeln!(out, "  - {d}");
    }
    out
}

/// Stable JSON rendering; byte-identical for identical config and seed.
pub fn render_report_json(report: &AnalysisReport) -> Result<String> {
    serde_json::to_string_pretty(report)
        .map_err(|e| crate::Error::validation("report", format!("json: {e}")))
}

/// Summary rows as CSV (one row per Stat).
pub fn render_summary_csv(label: &str, summary: &ImpactSummary) -> String {
    let mut out = String::from(
        "label,stat,actual,predicted,predicted_lower,predicted_upper,abs_effect,abs_effect_lower,abs_effect_upper,rel_effect,rel_effect_lower,rel_effect_upper,p\n",
    );
    for (stat, row) in [("Avg", &summary.avg), ("Cum", &summary.cum)] {
        let _ = writeln!(
            out,
            "{label},{stat},{},{},{},{},{},{},{},{},{},{},{}",
            row.actual,
            row.predicted,
            row.predicted_lower,
            row.predicted_upper,
            row.abs_effect,
            row.abs_effect_lower,
            row.abs_effect_upper,
            row.rel_effect,
            row.rel_effect_lower,
            row.rel_effect_upper,
            row.p
        );
    }
    out
}

/// Writes `original.csv`, `pointwise.csv`, `cumulative.csv` and a
/// `metadata.json` sidecar recording the intervention year.
pub fn emit_plot_data(series: &ImpactSeries, intervention_year: i32, dir: &Path) -> Result<()> {
    if series.years.is_empty() {
        return Err(crate::Error::validation("report", "empty impact series"));
    }
    fs::create_dir_all(dir)?;

    let mut original = String::from("year,observed,median,lower,upper\n");
    for (i, y) in series.years.iter().enumerate() {
        let b = &series.counterfactual[i];
        let _ = writeln!(original, "{y},{},{},{},{}", series.observed[i], b.median, b.lower, b.upper);
    }
    fs::write(dir.join("original.csv"), original)?;

    for (name, bands) in [("pointwise", &series.pointwise), ("cumulative", &series.cumulative)] {
        let mut csv = String::from("year,median,lower,upper\n");
        for (y, b) in series.years.iter().zip(bands) {
            let _ = writeln!(csv, "{y},{},{},{}", b.median, b.lower, b.upper);
        }
        fs::write(dir.join(format!("{name}.csv")), csv)?;
    }

    let sidecar = serde_json::json!({ "intervention_year": intervention_year });
    fs::write(dir.join("metadata.json"), serde_json::to_string_pretty(&sidecar).unwrap())?;
    Ok(())
}

/// Descriptive before/after table sorted by after-sum descending, plus
/// group share lines.
pub fn render_describe_text(summary: &DescriptiveSummary) -> String {
    let mut rows = summary.countries.clone();
    rows.sort_by(|a, b| b.sum_after.partial_cmp(&a.sum_after).unwrap());
    let mut out = String::new();
    let _ = writeln!(out, "{:<8} {:>14} {:>14} {:>10}", "country", "sum_before", "sum_after", "pct_change");
    for r in &rows {
        let pct = match r.pct_change {
            Some(v) => format!("{v:+.1}"),
            None => "n/a".to_owned(),
        };
        let _ = writeln!(out, "{:<8} {:>14.1} {:>14.1} {:>10}", r.country, r.sum_before, r.sum_after, pct);
    }
    if !summary.groups.is_empty() {
        let parts: Vec<String> = summary
            .groups
            .iter()
            .map(|g| format!("{}: {:.2}% ({:.1})", g.name, g.share_pct, g.total))
            .collect();
        let _ = writeln!(out, "shares: {}", parts.join(" / "));
    }
    out
}
