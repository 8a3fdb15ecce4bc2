//! Gibbs sampler over the pre-intervention period.
//!
//! Each sweep alternates three blocks: (1) draw the level trajectory by
//! forward-filter backward-sampling given the current parameters, (2) draw
//! the level diffusion scale from its conjugate conditional given the level
//! increments, (3) one spike-and-slab stochastic-search sweep over inclusion
//! indicators followed by conjugate draws of (β, σ_y) given the
//! level-adjusted residuals. The post period never enters the likelihood.
//!
//! Runs are strictly sequential and deterministic given the seed.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Error;
use crate::priors::{self, InitialStatePrior, LevelScalePrior, SpikeSlabPrior};
use crate::ssm::ModelParams;
use crate::Result;

const MODULE: &str = "sampler";

/// Any sampled scale above this (on standardized data) aborts the run.
const DIVERGENCE_BOUND: f64 = 1e6;

/// MCMC run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McmcConfig {
    pub total_draws: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub thinning: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig { total_draws: 20_000, burn_in: 2_000, seed: 0, thinning: 1 }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_draws < 100 {
            return Err(Error::validation(MODULE, "total_draws must be at least 100"));
        }
        if self.burn_in >= self.total_draws {
            return Err(Error::validation(MODULE, "burn_in must be below total_draws"));
        }
        if self.thinning == 0 {
            return Err(Error::validation(MODULE, "thinning must be at least 1"));
        }
        Ok(())
    }
}

/// The three prior blocks consumed by one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Priors {
    pub level: LevelScalePrior,
    pub slab: SpikeSlabPrior,
    pub init: InitialStatePrior,
}

/// Offset/scale pair mapping standardized values back to original units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardization {
    pub offset: f64,
    pub scale: f64,
}

impl Standardization {
    pub fn identity() -> Self {
        Standardization { offset: 0.0, scale: 1.0 }
    }
}

/// Test hooks: pin individual blocks of the sweep.
#[derive(Debug, Clone, Default)]
pub struct GibbsOptions {
    /// Keep the inclusion pattern fixed (skips the stochastic search).
    pub fixed_inclusion: Option<Vec<bool>>,
    /// Keep σ_l fixed (skips the level-scale draw).
    pub fixed_level_scale: Option<f64>,
}

/// Retained posterior draws plus what forecasting needs.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub params: Vec<ModelParams>,
    /// Terminal level of each retained draw's sampled trajectory.
    pub terminal_level: Vec<f64>,
    /// Standardization of the response, applied upstream.
    pub standardization: Standardization,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }
}

/// Runs the Gibbs sampler with default options.
pub fn run_gibbs(
    y_pre: &[f64],
    x_pre: &DMatrix<f64>,
    priors: &Priors,
    config: &McmcConfig,
    standardization: Standardization,
) -> Result<PosteriorDraws> {
    run_gibbs_with_options(y_pre, x_pre, priors, config, standardization, &GibbsOptions::default())
}

pub fn run_gibbs_with_options(
    y_pre: &[f64],
    x_pre: &DMatrix<f64>,
    priors: &Priors,
    config: &McmcConfig,
    standardization: Standardization,
    options: &GibbsOptions,
) -> Result<PosteriorDraws> {
    config.validate()?;
    let horizon = y_pre.len();
    if horizon < 3 {
        return Err(Error::validation(MODULE, "pre-period needs at least 3 observations"));
    }
    let k = x_pre.ncols();
    if x_pre.nrows() != horizon {
        return Err(Error::validation(MODULE, "covariate rows must match response length"));
    }
    if priors.slab.num_covariates() != k {
        return Err(Error::validation(MODULE, "spike-and-slab prior size mismatch"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Neutral start: sigma_l at the prior guess, sigma_y at the standardized
    // sample scale, only the intercept included.
    let mut level_scale = options.fixed_level_scale.unwrap_or(priors.level.guess);
    let mut obs_scale = 1.0;
    let mut coefficients = vec![0.0; k];
    let mut inclusion = match &options.fixed_inclusion {
        Some(g) => {
            if g.len() != k {
                return Err(Error::validation(MODULE, "fixed inclusion length mismatch"));
            }
            g.clone()
        }
        None => {
            let mut g = vec![false; k];
            if k > 0 {
                g[0] = true;
            }
            g
        }
    };

    let retained = (config.total_draws - config.burn_in).div_ceil(config.thinning);
    let mut out = PosteriorDraws {
        params: Vec::with_capacity(retained),
        terminal_level: Vec::with_capacity(retained),
        standardization,
    };

    let mut ffbs = LevelSampler::new(horizon, priors.init);
    let mut y_star = vec![0.0; horizon];
    for sweep in 0..config.total_draws {
        // (1) Level trajectory given parameters.
        for t in 0..horizon {
            let effect: f64 = (0..k).map(|j| coefficients[j] * x_pre[(t, j)]).sum();
            y_star[t] = y_pre[t] - effect;
        }
        let levels = ffbs.draw(&y_star, level_scale, obs_scale, &mut rng)?;

        // (2) Level diffusion scale.
        if options.fixed_level_scale.is_none() {
            level_scale = priors::sample_level_scale(levels, &priors.level, &mut rng);
        }

        // (3) Inclusion, coefficients and observation scale.
        let residual: Vec<f64> = y_pre.iter().zip(levels).map(|(y, l)| y - l).collect();
        match &options.fixed_inclusion {
            Some(g) => {
                let (beta, sigma) =
                    priors::sample_coeffs_given_inclusion(&residual, x_pre, &priors.slab, g, &mut rng)?;
                coefficients = beta;
                obs_scale = sigma;
            }
            None => {
                let (g, beta, sigma) =
                    priors::sample_coeffs_and_obs_var(&residual, x_pre, &priors.slab, &inclusion, &mut rng)?;
                inclusion = g;
                coefficients = beta;
                obs_scale = sigma;
            }
        }

        if level_scale > DIVERGENCE_BOUND || obs_scale > DIVERGENCE_BOUND {
            return Err(Error::numeric(
                MODULE,
                format!(
                    "divergent scales at sweep {sweep}: sigma_l={level_scale:.3e}, sigma_y={obs_scale:.3e}"
                ),
            ));
        }

        if sweep >= config.burn_in && (sweep - config.burn_in) % config.thinning == 0 {
            out.params.push(ModelParams {
                level_scale,
                obs_scale,
                coefficients: coefficients.clone(),
                inclusion: inclusion.clone(),
            });
            out.terminal_level.push(*levels.last().unwrap());
        }
    }
    Ok(out)
}

/// Allocation-free forward-filter backward-sampler for the scalar
/// local-level model with fully observed data. Equivalent to running
/// [`crate::kalman::simulate_states`] on the assembled one-state model; the
/// Gibbs sweep calls it thousands of times, so the moments are kept in
/// reused buffers.
struct LevelSampler {
    init: InitialStatePrior,
    pred_mean: Vec<f64>,
    pred_var: Vec<f64>,
    filt_mean: Vec<f64>,
    filt_var: Vec<f64>,
    levels: Vec<f64>,
}

impl LevelSampler {
    fn new(horizon: usize, init: InitialStatePrior) -> Self {
        LevelSampler {
            init,
            pred_mean: vec![0.0; horizon],
            pred_var: vec![0.0; horizon],
            filt_mean: vec![0.0; horizon],
            filt_var: vec![0.0; horizon],
            levels: vec![0.0; horizon],
        }
    }

    /// One trajectory from p(level | y, sigma_l, sigma_y). Degenerate
    /// variances (sigma_l = 0, zero initial spread) are handled exactly.
    fn draw<R: Rng>(
        &mut self,
        y: &[f64],
        level_scale: f64,
        obs_scale: f64,
        rng: &mut R,
    ) -> Result<&[f64]> {
        let horizon = y.len();
        let q = level_scale * level_scale;
        let r = obs_scale * obs_scale;
        let mut m = self.init.level_mean;
        let mut p = self.init.level_scale * self.init.level_scale;
        for t in 0..horizon {
            let pred_m = m;
            let pred_p = p + q;
            self.pred_mean[t] = pred_m;
            self.pred_var[t] = pred_p;
            let s = pred_p + r;
            if s > 0.0 {
                let gain = pred_p / s;
                m = pred_m + gain * (y[t] - pred_m);
                p = (pred_p * (1.0 - gain)).max(0.0);
            } else {
                m = pred_m;
                p = pred_p;
            }
            if !m.is_finite() || !p.is_finite() {
                return Err(Error::numeric(MODULE, format!("non-finite filtered level at t={t}")));
            }
            self.filt_mean[t] = m;
            self.filt_var[t] = p;
        }

        let mut draw =
            self.filt_mean[horizon - 1] + self.filt_var[horizon - 1].sqrt() * noise(rng);
        self.levels[horizon - 1] = draw;
        for t in (0..horizon - 1).rev() {
            // Backward gain J = P_f / P_pred(t+1); zero predicted variance
            // pins the draw to the filtered mean.
            let (mean, var) = if self.pred_var[t + 1] > 0.0 {
                let gain = self.filt_var[t] / self.pred_var[t + 1];
                (
                    self.filt_mean[t] + gain * (draw - self.pred_mean[t + 1]),
                    (self.filt_var[t] * (1.0 - gain)).max(0.0),
                )
            } else {
                (self.filt_mean[t], self.filt_var[t])
            };
            draw = mean + var.sqrt() * noise(rng);
            if !draw.is_finite() {
                return Err(Error::numeric(MODULE, format!("non-finite level draw at t={t}")));
            }
            self.levels[t] = draw;
        }
        Ok(&self.levels)
    }
}

fn noise<R: Rng>(rng: &mut R) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

/// Per-covariate posterior inclusion frequency over the retained draws.
pub fn inclusion_matrix(draws: &PosteriorDraws) -> Result<Vec<f64>> {
    if draws.is_empty() {
        return Err(Error::validation(MODULE, "no retained draws"));
    }
    let k = draws.params[0].inclusion.len();
    let mut freq = vec![0.0; k];
    for p in &draws.params {
        for (f, g) in freq.iter_mut().zip(&p.inclusion) {
            if *g {
                *f += 1.0;
            }
        }
    }
    let n = draws.len() as f64;
    for f in &mut freq {
        *f /= n;
    }
    Ok(freq)
}
