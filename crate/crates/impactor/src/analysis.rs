//! End-to-end analysis pipeline and batch orchestration.
//!
//! `analyze` wires the full chain: load panel → split periods → standardize
//! on the pre period → default priors → Gibbs sampling → counterfactual
//! forecast → impact statistics → report. `batch` runs the per-country
//! accession mapping concurrently and appends a combined aggregate analysis.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::PathBuf;

use nalgebra::DMatrix;

use crate::error::Error;
use crate::impact;
use crate::panel::{self, PatentPanel};
use crate::priors::{self, PriorConfig};
use crate::report::{AnalysisReport, InclusionEntry, ReportMetadata};
use crate::sampler::{self, McmcConfig, Priors, Standardization};
use crate::Result;

const MODULE: &str = "analysis";

/// The fifteen pre-2004 member codes used as default control covariates.
pub const EU15: [&str; 15] =
    ["AT", "BE", "DE", "DK", "EL", "ES", "FI", "FR", "IE", "IT", "LU", "NL", "PT", "SE", "UK"];

/// Accession mapping for the thirteen post-2004 members: the 2004 group,
/// Bulgaria/Romania 2007, Croatia 2013.
pub fn eu13_accession() -> BTreeMap<String, i32> {
    let mut m = BTreeMap::new();
    for c in ["CZ", "EE", "HU", "LV", "LT", "PL", "SK", "SI", "MT", "CY"] {
        m.insert(c.to_owned(), 2004);
    }
    m.insert("BG".to_owned(), 2007);
    m.insert("RO".to_owned(), 2007);
    m.insert("HR".to_owned(), 2013);
    m
}

/// Configuration for one causal analysis.
#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    pub data: PathBuf,
    pub target: String,
    pub covariates: Vec<String>,
    pub intervention_year: i32,
    pub mcmc: McmcConfig,
    pub prior: PriorConfig,
    pub credible_level: f64,
}

impl AnalysisConfig {
    pub fn new(data: impl Into<PathBuf>, target: &str, intervention_year: i32) -> Self {
        AnalysisConfig {
            data: data.into(),
            target: target.to_owned(),
            covariates: EU15.iter().map(|s| (*s).to_owned()).collect(),
            intervention_year,
            mcmc: McmcConfig::default(),
            prior: PriorConfig::default(),
            credible_level: 0.95,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.covariates.contains(&self.target) {
            return Err(Error::validation(MODULE, "target cannot be a covariate"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.covariates {
            if !seen.insert(c) {
                return Err(Error::validation(MODULE, format!("duplicate covariate `{c}`")));
            }
        }
        if !(self.credible_level > 0.0 && self.credible_level < 1.0) {
            return Err(Error::validation(MODULE, "credible level must lie in (0, 1)"));
        }
        self.mcmc.validate()
    }
}

/// Loads the panel from `config.data` and runs [`analyze_panel`].
pub fn analyze(config: &AnalysisConfig) -> Result<AnalysisReport> {
    let file = File::open(&config.data)
        .map_err(|e| Error::validation(MODULE, format!("cannot open {}: {e}", config.data.display())))?;
    let panel = panel::load_panel(file)?;
    analyze_panel(&panel, config)
}

/// Runs the full pipeline on an already-loaded panel.
pub fn analyze_panel(panel: &PatentPanel, config: &AnalysisConfig) -> Result<AnalysisReport> {
    config.validate()?;
    if !panel.has_country(&config.target) {
        return Err(Error::validation(MODULE, format!("target `{}` not in panel", config.target)));
    }
    let split = panel::split_periods(panel, config.intervention_year)?;
    let t_pre = split.pre_years.len();
    let t_post = split.post_years.len();

    // Response: standardized on the pre period.
    let y_full = panel.column(&config.target)?;
    let (y_std, offset, scale) = panel::standardize(&y_full, 0..t_pre)?;
    let y_pre: Vec<f64> = y_std[..t_pre].to_vec();
    let y_post: Vec<f64> = y_full[t_pre..].to_vec();

    // Covariate matrix: intercept column plus each control standardized on
    // its own pre-period statistics.
    let k = 1 + config.covariates.len();
    let mut x_full = DMatrix::zeros(t_pre + t_post, k);
    for t in 0..t_pre + t_post {
        x_full[(t, 0)] = 1.0;
    }
    for (j, code) in config.covariates.iter().enumerate() {
        let series = panel.column(code)?;
        let (z, _, _) = panel::standardize(&series, 0..t_pre).map_err(|e| {
            Error::validation(MODULE, format!("covariate `{code}`: {e}"))
        })?;
        for (t, v) in z.iter().enumerate() {
            x_full[(t, j + 1)] = *v;
        }
    }
    let x_pre = x_full.rows(0, t_pre).into_owned();
    let x_post = x_full.rows(t_pre, t_post).into_owned();

    let (level, slab, init) = priors::default_priors(&y_pre, &x_pre, &config.prior)?;
    let priors = Priors { level, slab, init };
    let draws = sampler::run_gibbs(
        &y_pre,
        &x_pre,
        &priors,
        &config.mcmc,
        Standardization { offset, scale },
    )?;

    let cf = impact::forecast_counterfactual(&draws, &x_post, &split.post_years, config.mcmc.seed)?;
    let summary = impact::summarize(&y_post, &cf, config.credible_level)?;
    let series = impact::impact_series(&y_post, &cf, config.credible_level)?;

    let freqs = sampler::inclusion_matrix(&draws)?;
    let mut names = vec!["(intercept)".to_owned()];
    names.extend(config.covariates.iter().cloned());
    let inclusion = names
        .into_iter()
        .zip(freqs)
        .map(|(covariate, frequency)| InclusionEntry { covariate, frequency })
        .collect();

    let metadata = ReportMetadata::new(
        &config.target,
        &config.covariates,
        config.intervention_year,
        &config.mcmc,
        &config.prior,
        config.credible_level,
        draws.len(),
    );
    Ok(AnalysisReport { metadata, summary, series, inclusion })
}

/// Country → intervention-year mapping for batch runs.
#[derive(Debug, Clone)]
pub struct BatchSpec {
    pub interventions: BTreeMap<String, i32>,
    /// Name of the synthetic combined series appended to the batch.
    pub aggregate_name: String,
}

impl Default for BatchSpec {
    fn default() -> Self {
        BatchSpec { interventions: eu13_accession(), aggregate_name: "EU13".to_owned() }
    }
}

/// One batch entry: either a finished report or the per-country failure.
#[derive(Debug)]
pub struct BatchEntry {
    pub country: String,
    pub outcome: Result<AnalysisReport>,
}

/// Batch output sorted by tail probability ascending; failures sort last.
#[derive(Debug)]
pub struct BatchResult {
    pub entries: Vec<BatchEntry>,
    pub aggregate: Option<BatchEntry>,
}

impl BatchResult {
    pub fn has_failures(&self) -> bool {
        self.entries.iter().any(|e| e.outcome.is_err())
            || self.aggregate.as_ref().is_some_and(|a| a.outcome.is_err())
    }
}

/// Deterministic per-country seed derived from the base seed (FNV-1a over
/// the country code).
fn country_seed(base: u64, code: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in code.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h ^ base
}

/// Runs one analysis per mapped country plus a combined aggregate series,
/// concurrently up to `jobs` workers. Per-country failures do not abort the
/// remaining countries.
pub fn batch(
    panel: &PatentPanel,
    spec: &BatchSpec,
    covariates: &[String],
    mcmc: &McmcConfig,
    prior: &PriorConfig,
    credible_level: f64,
    jobs: usize,
) -> Result<BatchResult> {
    if spec.interventions.is_empty() {
        return Err(Error::validation(MODULE, "empty batch mapping"));
    }
    for country in spec.interventions.keys() {
        if !panel.has_country(country) {
            return Err(Error::validation(MODULE, format!("batch country `{country}` not in panel")));
        }
    }

    let members: Vec<String> = spec.interventions.keys().cloned().collect();
    let run_one = |panel: &PatentPanel, country: &str, year: i32| -> Result<AnalysisReport> {
        let config = AnalysisConfig {
            data: PathBuf::new(),
            target: country.to_owned(),
            covariates: covariates.to_vec(),
            intervention_year: year,
            mcmc: McmcConfig { seed: country_seed(mcmc.seed, country), ..*mcmc },
            prior: *prior,
            credible_level,
        };
        analyze_panel(panel, &config)
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::validation(MODULE, format!("thread pool: {e}")))?;
    let mut entries: Vec<BatchEntry> = pool.install(|| {
        use rayon::prelude::*;
        spec.interventions
            .par_iter()
            .map(|(country, year)| BatchEntry {
                country: country.clone(),
                outcome: run_one(panel, country, *year),
            })
            .collect()
    });

    // Combined aggregate: the earliest accession year in the mapping marks
    // the treatment start for the merged series.
    let aggregate = {
        let year = *spec.interventions.values().min().unwrap();
        let outcome = panel::aggregate_group(panel, &members, &spec.aggregate_name)
            .and_then(|extended| run_one(&extended, &spec.aggregate_name, year));
        Some(BatchEntry { country: spec.aggregate_name.clone(), outcome })
    };

    entries.sort_by(|a, b| {
        let pa = a.outcome.as_ref().map(|r| r.summary.cum.p).unwrap_or(f64::INFINITY);
        let pb = b.outcome.as_ref().map(|r| r.summary.cum.p).unwrap_or(f64::INFINITY);
        pa.partial_cmp(&pb).unwrap().then_with(|| a.country.cmp(&b.country))
    });
    Ok(BatchResult { entries, aggregate })
}

/// Renders a combined Table-1-style batch report.
pub fn render_batch_text(result: &BatchResult) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "     Stat  Actual  Prediction(Val)  Prediction(lower)  Prediction(upper)  Relative(Val)  Relative(lower)  Relative(upper)  p"
    );
    let render_entry = |e: &BatchEntry, out: &mut String| match &e.outcome {
        Ok(report) => {
            let text = crate::report::render_summary_text(&e.country, &report.summary);
            for line in text.lines().skip(1) {
                let _ = writeln!(out, "{line}");
            }
        }
        Err(err) => {
            let _ = writeln!(out, "{:<4} FAILED: {err}", e.country);
        }
    };
    for e in &result.entries {
        render_entry(e, &mut out);
    }
    if let Some(agg) = &result.aggregate {
        let _ = writeln!(out, "---- combined ----");
        render_entry(agg, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Synthetic panel: two control series plus targets correlated with them.
    pub(crate) fn synthetic_panel(seed: u64) -> PatentPanel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let years: Vec<i32> = (1985..=2017).collect();
        let countries = vec!["T1".to_owned(), "T2".to_owned(), "C1".to_owned(), "C2".to_owned()];
        let mut c1: f64 = 50.0;
        let mut c2: f64 = 80.0;
        let values = years
            .iter()
            .map(|_| {
                c1 += rng.gen_range(-2.0..4.0);
                c2 += rng.gen_range(-3.0..5.0);
                let t1 = 0.5 * c1 + 0.2 * c2 + rng.gen_range(-1.0..1.0) + 10.0;
                let t2 = 0.3 * c2 + rng.gen_range(-1.0..1.0) + 5.0;
                vec![t1.max(0.0), t2.max(0.0), c1.max(0.0), c2.max(0.0)]
            })
            .collect();
        PatentPanel::new(years, countries, values).unwrap()
    }

    fn quick_config(target: &str) -> AnalysisConfig {
        AnalysisConfig {
            covariates: vec!["C1".to_owned(), "C2".to_owned()],
            mcmc: McmcConfig { total_draws: 600, burn_in: 100, seed: 11, thinning: 1 },
            ..AnalysisConfig::new("unused.csv", target, 2004)
        }
    }

    #[test]
    fn analyze_panel_produces_consistent_report() {
        let panel = synthetic_panel(1);
        let report = analyze_panel(&panel, &quick_config("T1")).unwrap();
        assert_eq!(report.metadata.retained_draws, 500);
        assert_eq!(report.series.years.len(), 14);
        assert_eq!(report.inclusion.len(), 3);
        assert!((report.summary.cum.actual - 14.0 * report.summary.avg.actual).abs() < 1e-9);
    }

    #[test]
    fn target_as_covariate_is_rejected() {
        let panel = synthetic_panel(1);
        let mut config = quick_config("T1");
        config.covariates.push("T1".to_owned());
        let err = analyze_panel(&panel, &config).unwrap_err();
        assert!(err.to_string().contains("target cannot be a covariate"), "{err}");
    }

    #[test]
    fn same_config_gives_identical_json() {
        let panel = synthetic_panel(2);
        let a = analyze_panel(&panel, &quick_config("T2")).unwrap();
        let b = analyze_panel(&panel, &quick_config("T2")).unwrap();
        let ja = crate::report::render_report_json(&a).unwrap();
        let jb = crate::report::render_report_json(&b).unwrap();
        assert_eq!(ja, jb);
    }

    #[test]
    fn batch_runs_all_countries_and_sorts_by_p() {
        let panel = synthetic_panel(3);
        let spec = BatchSpec {
            interventions: BTreeMap::from([("T1".to_owned(), 2004), ("T2".to_owned(), 2004)]),
            aggregate_name: "BOTH".to_owned(),
        };
        let mcmc = McmcConfig { total_draws: 400, burn_in: 100, seed: 5, thinning: 1 };
        let covs = vec!["C1".to_owned(), "C2".to_owned()];
        let result = batch(&panel, &spec, &covs, &mcmc, &PriorConfig::default(), 0.95, 2).unwrap();
        assert_eq!(result.entries.len(), 2);
        assert!(result.aggregate.as_ref().unwrap().outcome.is_ok());
        let ps: Vec<f64> = result
            .entries
            .iter()
            .map(|e| e.outcome.as_ref().unwrap().summary.cum.p)
            .collect();
        assert!(ps[0] <= ps[1]);
        assert!(!result.has_failures());
    }

    #[test]
    fn batch_isolates_per_country_failures() {
        let panel = synthetic_panel(4);
        let spec = BatchSpec {
            // 1986 leaves a single pre year for T2, which must fail without
            // taking T1 down.
            interventions: BTreeMap::from([("T1".to_owned(), 2004), ("T2".to_owned(), 1986)]),
            aggregate_name: "BOTH".to_owned(),
        };
        let mcmc = McmcConfig { total_draws: 300, burn_in: 100, seed: 5, thinning: 1 };
        let covs = vec!["C1".to_owned()];
        let result = batch(&panel, &spec, &covs, &mcmc, &PriorConfig::default(), 0.95, 2).unwrap_or_else(|e| panic!("{e}"));
        assert!(result.has_failures());
        let ok: Vec<&str> = result
            .entries
            .iter()
            .filter(|e| e.outcome.is_ok())
            .map(|e| e.country.as_str())
            .collect();
        assert_eq!(ok, vec!["T1"]);
        let text = render_batch_text(&result);
        assert!(text.contains("FAILED"));
        assert!(text.contains("T1"));
    }

    #[test]
    fn batch_rejects_unknown_country() {
        let panel = synthetic_panel(5);
        let spec = BatchSpec {
            interventions: BTreeMap::from([("XX".to_owned(), 2004)]),
            aggregate_name: "AGG".to_owned(),
        };
        let mcmc = McmcConfig { total_draws: 300, burn_in: 100, seed: 5, thinning: 1 };
        assert!(batch(&panel, &spec, &[], &mcmc, &PriorConfig::default(), 0.95, 1).is_err());
    }
}
