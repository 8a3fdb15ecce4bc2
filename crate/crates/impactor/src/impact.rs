//! Counterfactual forecasting and causal-effect statistics.
//!
//! Each retained posterior draw is propagated through the post period from
//! its terminal sampled level: the level random-walks with that draw's σ_l,
//! the regression adds βᵀx_t, and observation noise δ_t ~ N(0, σ_y²) is
//! included so the bands are predictive intervals for the observable
//! counterfactual. Draws are de-standardized before any statistic is
//! computed.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Error;
use crate::sampler::PosteriorDraws;
use crate::stats;
use crate::Result;

const MODULE: &str = "impact";

/// Draw × post-year matrix of counterfactual predictions in original units.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualDraws {
    pub post_years: Vec<i32>,
    /// `paths[j][t]` is draw j's prediction for post year t.
    pub paths: Vec<Vec<f64>>,
}

impl CounterfactualDraws {
    pub fn num_draws(&self) -> usize {
        self.paths.len()
    }
}

/// Median and credible band for one statistic.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct Band {
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

fn band(draws: &[f64], level: f64) -> Band {
    let alpha = (1.0 - level) / 2.0;
    let mut sorted = draws.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Band {
        median: stats::quantile(&sorted, 0.5),
        lower: stats::quantile(&sorted, alpha),
        upper: stats::quantile(&sorted, 1.0 - alpha),
    }
}

/// Per-year observed/counterfactual/pointwise/cumulative trajectories with
/// credible bands.
#[derive(Debug, Clone, Serialize)]
pub struct ImpactSeries {
    pub years: Vec<i32>,
    pub observed: Vec<f64>,
    pub counterfactual: Vec<Band>,
    pub pointwise: Vec<Band>,
    pub cumulative: Vec<Band>,
}

/// One row of the Table-1-shaped summary.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub actual: f64,
    pub predicted: f64,
    pub predicted_lower: f64,
    pub predicted_upper: f64,
    pub abs_effect: f64,
    pub abs_effect_lower: f64,
    pub abs_effect_upper: f64,
    /// Relative effect as a fraction (0.5 = +50%).
    pub rel_effect: f64,
    pub rel_effect_lower: f64,
    pub rel_effect_upper: f64,
    pub p: f64,
}

/// Average and cumulative effect rows plus bookkeeping.
#[derive(Debug, Clone, Serialize)]
pub struct ImpactSummary {
    pub avg: SummaryRow,
    pub cum: SummaryRow,
    pub credible_level: f64,
    pub num_draws: usize,
    /// Draws dropped from the relative effect because their counterfactual
    /// sum was exactly zero.
    pub excluded_zero_sum_draws: usize,
}

/// Propagates every retained draw through the post period.
///
/// `x_post` holds the standardized covariates row per post year. Draws are
/// processed in parallel with a deterministic per-draw rng substream, so the
/// output is independent of thread scheduling.
pub fn forecast_counterfactual(
    draws: &PosteriorDraws,
    x_post: &DMatrix<f64>,
    post_years: &[i32],
    seed: u64,
) -> Result<CounterfactualDraws> {
    if draws.is_empty() {
        return Err(Error::validation(MODULE, "no posterior draws"));
    }
    let horizon = post_years.len();
    if horizon == 0 {
        return Err(Error::validation(MODULE, "empty post period"));
    }
    if x_post.nrows() != horizon {
        return Err(Error::validation(
            MODULE,
            format!("covariates cover {} post years, need {horizon}", x_post.nrows()),
        ));
    }
    let k = draws.params[0].coefficients.len();
    if x_post.ncols() != k {
        return Err(Error::validation(MODULE, "covariate count mismatch with posterior draws"));
    }
    let offset = draws.standardization.offset;
    let scale = draws.standardization.scale;

    let paths: Vec<Vec<f64>> = (0..draws.len())
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64 + 1);
            let p = &draws.params[j];
            let mut level = draws.terminal_level[j];
            let mut path = Vec::with_capacity(horizon);
            for t in 0..horizon {
                level += p.level_scale * rng.sample::<f64, _>(StandardNormal);
                let reg: f64 = (0..k).map(|c| p.coefficients[c] * x_post[(t, c)]).sum();
                let noise = p.obs_scale * rng.sample::<f64, _>(StandardNormal);
                path.push(offset + scale * (level + reg + noise));
            }
            path
        })
        .collect();

    if paths.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::numeric(MODULE, "non-finite counterfactual prediction"));
    }
    Ok(CounterfactualDraws { post_years: post_years.to_vec(), paths })
}

/// One-sided tail-area probability of the cumulative effect, with +1
/// smoothing so the result is always strictly positive.
pub fn tail_probability(cumulative_effect_draws: &[f64]) -> Result<f64> {
    let j = cumulative_effect_draws.len();
    if j < 100 {
        return Err(Error::validation(MODULE, "need at least 100 draws for a tail probability"));
    }
    let nonpos = cumulative_effect_draws.iter().filter(|c| **c <= 0.0).count();
    let nonneg = cumulative_effect_draws.iter().filter(|c| **c >= 0.0).count();
    let denom = (j + 1) as f64;
    Ok(((1 + nonpos) as f64 / denom).min((1 + nonneg) as f64 / denom))
}

/// Table-1-shaped summary: averages and cumulative totals of the observed
/// and counterfactual post period, absolute and relative effects with
/// equal-tailed credible intervals, and the tail probability.
pub fn summarize(y_post: &[f64], cf: &CounterfactualDraws, level: f64) -> Result<ImpactSummary> {
    let horizon = y_post.len();
    if horizon != cf.post_years.len() {
        return Err(Error::validation(MODULE, "observed length must match counterfactual columns"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::validation(MODULE, "credible level must lie in (0, 1)"));
    }
    let n = horizon as f64;
    let y_sum: f64 = y_post.iter().sum();

    let mut cum_pred = Vec::with_capacity(cf.num_draws());
    let mut cum_effect = Vec::with_capacity(cf.num_draws());
    let mut rel_effect = Vec::with_capacity(cf.num_draws());
    let mut excluded = 0usize;
    for path in &cf.paths {
        let pred_sum: f64 = path.iter().sum();
        cum_pred.push(pred_sum);
        cum_effect.push(y_sum - pred_sum);
        if pred_sum == 0.0 {
            excluded += 1;
        } else {
            rel_effect.push(y_sum / pred_sum - 1.0);
        }
    }
    if rel_effect.is_empty() {
        return Err(Error::numeric(MODULE, "every counterfactual sum is zero"));
    }

    let p = tail_probability(&cum_effect)?;
    let pred_band = band(&cum_pred, level);
    let effect_band = band(&cum_effect, level);
    let rel_band = band(&rel_effect, level);

    let cum = SummaryRow {
        actual: y_sum,
        predicted: pred_band.median,
        predicted_lower: pred_band.lower,
        predicted_upper: pred_band.upper,
        abs_effect: effect_band.median,
        abs_effect_lower: effect_band.lower,
        abs_effect_upper: effect_band.upper,
        rel_effect: rel_band.median,
        rel_effect_lower: rel_band.lower,
        rel_effect_upper: rel_band.upper,
        p,
    };
    let avg = SummaryRow {
        actual: y_sum / n,
        predicted: pred_band.median / n,
        predicted_lower: pred_band.lower / n,
        predicted_upper: pred_band.upper / n,
        abs_effect: effect_band.median / n,
        abs_effect_lower: effect_band.lower / n,
        abs_effect_upper: effect_band.upper / n,
        rel_effect: rel_band.median,
        rel_effect_lower: rel_band.lower,
        rel_effect_upper: rel_band.upper,
        p,
    };
    Ok(ImpactSummary { avg, cum, credible_level: level, num_draws: cf.num_draws(), excluded_zero_sum_draws: excluded })
}

/// Per-year quantile trajectories from per-draw pointwise and running-sum
/// paths.
pub fn impact_series(y_post: &[f64], cf: &CounterfactualDraws, level: f64) -> Result<ImpactSeries> {
    let horizon = y_post.len();
    if horizon != cf.post_years.len() {
        return Err(Error::validation(MODULE, "observed length must match counterfactual columns"));
    }
    let draws = cf.num_draws();
    let mut counterfactual = Vec::with_capacity(horizon);
    let mut pointwise = Vec::with_capacity(horizon);
    let mut cumulative = Vec::with_capacity(horizon);
    let mut running: Vec<f64> = vec![0.0; draws];
    let mut col = vec![0.0; draws];
    let mut point = vec![0.0; draws];
    for t in 0..horizon {
        for j in 0..draws {
            col[j] = cf.paths[j][t];
            point[j] = y_post[t] - col[j];
            running[j] += point[j];
        }
        counterfactual.push(band(&col, level));
        pointwise.push(band(&point, level));
        cumulative.push(band(&running, level));
    }
    Ok(ImpactSeries {
        years: cf.post_years.clone(),
        observed: y_post.to_vec(),
        counterfactual,
        pointwise,
        cumulative,
    })
}
