//! Structural state-space model assembly: local level plus static regression
//! in general linear-Gaussian form.
//!
//! State dynamics and observation:
//!
//! ```text
//! z_t = F z_{t-1} + R ε_t,   ε_t ~ N(0, Q)
//! y_t = h_tᵀ z_t + δ_t,      δ_t ~ N(0, σ_y²)
//! ```
//!
//! The regression enters through a time-varying observation vector with a
//! constant unit state: z = (level, 1), h_t = (1, βᵀx_t). With no covariates
//! the model collapses to a one-dimensional pure local level.

use nalgebra::{DMatrix, DVector};

use crate::error::Error;
use crate::Result;

const MODULE: &str = "ssm";

/// Local level component: a random-walk level with diffusion scale σ_l.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalLevelSpec {
    pub level_scale: f64,
}

impl LocalLevelSpec {
    pub fn new(level_scale: f64) -> Result<Self> {
        if !(level_scale >= 0.0) || !level_scale.is_finite() {
            return Err(Error::validation(MODULE, "level scale must be finite and >= 0"));
        }
        Ok(LocalLevelSpec { level_scale })
    }
}

/// Static regression component: per-time covariate vectors and a sparse
/// coefficient vector with explicit inclusion indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSpec {
    /// `covariates[t]` is the k-vector x_t; full coverage over fit and
    /// forecast ranges.
    pub covariates: Vec<Vec<f64>>,
    pub coefficients: Vec<f64>,
    pub inclusion: Vec<bool>,
}

impl RegressionSpec {
    pub fn new(covariates: Vec<Vec<f64>>, coefficients: Vec<f64>, inclusion: Vec<bool>) -> Result<Self> {
        let k = coefficients.len();
        if inclusion.len() != k {
            return Err(Error::validation(MODULE, "inclusion length must match coefficients"));
        }
        for (b, g) in coefficients.iter().zip(&inclusion) {
            if !g && *b != 0.0 {
                return Err(Error::validation(MODULE, "excluded coefficient must be exactly 0"));
            }
        }
        for x in &covariates {
            if x.len() != k {
                return Err(Error::validation(MODULE, "covariate vector length must match coefficients"));
            }
        }
        Ok(RegressionSpec { covariates, coefficients, inclusion })
    }

    /// Empty regression (pure local level).
    pub fn empty(horizon: usize) -> Self {
        RegressionSpec { covariates: vec![Vec::new(); horizon], coefficients: Vec::new(), inclusion: Vec::new() }
    }

    pub fn num_covariates(&self) -> usize {
        self.coefficients.len()
    }

    fn effect_at(&self, t: usize) -> f64 {
        self.covariates[t]
            .iter()
            .zip(&self.coefficients)
            .map(|(x, b)| x * b)
            .sum()
    }
}

/// Sampled model unknowns for one MCMC draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub level_scale: f64,
    pub obs_scale: f64,
    pub coefficients: Vec<f64>,
    pub inclusion: Vec<bool>,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.level_scale >= 0.0) || !(self.obs_scale > 0.0) {
            return Err(Error::validation(MODULE, "require level_scale >= 0 and obs_scale > 0"));
        }
        for (b, g) in self.coefficients.iter().zip(&self.inclusion) {
            if !*g && *b != 0.0 {
                return Err(Error::validation(MODULE, "sparsity violated: beta nonzero on excluded coordinate"));
            }
        }
        Ok(())
    }
}

/// Assembled LG-SSM ready for Kalman recursions.
#[derive(Debug, Clone, PartialEq)]
pub struct SsmSpec {
    pub transition: DMatrix<f64>,
    pub control: DMatrix<f64>,
    pub state_noise_cov: DMatrix<f64>,
    /// Observation vector per time step.
    pub observation: Vec<DVector<f64>>,
    pub obs_noise_var: f64,
}

impl SsmSpec {
    pub fn state_dim(&self) -> usize {
        self.transition.nrows()
    }

    pub fn horizon(&self) -> usize {
        self.observation.len()
    }
}

/// Sums the local level and regression components into one LG-SSM.
///
/// With covariates the state is (l_t, 1): F = I₂, the control matrix routes
/// level noise only, and h_t = (1, βᵀx_t). With k = 0 the constant state is
/// dropped entirely.
pub fn assemble(level: &LocalLevelSpec, reg: &RegressionSpec, obs_scale: f64) -> Result<SsmSpec> {
    if !(obs_scale > 0.0) || !obs_scale.is_finite() {
        return Err(Error::validation(MODULE, "observation scale must be finite and > 0"));
    }
    let q = DMatrix::from_element(1, 1, level.level_scale * level.level_scale);
    let horizon = reg.covariates.len();
    if reg.num_covariates() == 0 {
        return Ok(SsmSpec {
            transition: DMatrix::identity(1, 1),
            control: DMatrix::identity(1, 1),
            state_noise_cov: q,
            observation: vec![DVector::from_element(1, 1.0); horizon],
            obs_noise_var: obs_scale * obs_scale,
        });
    }
    let observation = (0..horizon)
        .map(|t| DVector::from_vec(vec![1.0, reg.effect_at(t)]))
        .collect();
    Ok(SsmSpec {
        transition: DMatrix::identity(2, 2),
        control: DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
        state_noise_cov: q,
        observation,
        obs_noise_var: obs_scale * obs_scale,
    })
}

/// Deterministic observation mean h_tᵀ z at time index `t`.
pub fn observation_mean(spec: &SsmSpec, state: &DVector<f64>, t: usize) -> Result<f64> {
    let h = spec
        .observation
        .get(t)
        .ok_or_else(|| Error::validation(MODULE, format!("time index {t} outside covariate coverage")))?;
    Ok(h.dot(state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn assemble_without_covariates_collapses_to_level() {
        let level = LocalLevelSpec::new(0.5).unwrap();
        let spec = assemble(&level, &RegressionSpec::empty(3), 1.0).unwrap();
        assert_eq!(spec.state_dim(), 1);
        assert_eq!(spec.state_noise_cov[(0, 0)], 0.25);
        let z = DVector::from_element(1, 7.5);
        assert_eq!(observation_mean(&spec, &z, 0).unwrap(), 7.5);
    }

    #[test]
    fn observation_mean_is_level_plus_regression() {
        let level = LocalLevelSpec::new(0.1).unwrap();
        let reg = RegressionSpec::new(vec![vec![3.0]], vec![2.0], vec![true]).unwrap();
        let spec = assemble(&level, &reg, 1.0).unwrap();
        let z = DVector::from_vec(vec![1.0, 1.0]);
        assert_eq!(observation_mean(&spec, &z, 0).unwrap(), 7.0);
    }

    #[test]
    fn zero_beta_means_observation_equals_level() {
        let level = LocalLevelSpec::new(0.1).unwrap();
        let reg = RegressionSpec::new(vec![vec![3.0, -1.0]; 4], vec![0.0, 0.0], vec![false, false]).unwrap();
        let spec = assemble(&level, &reg, 1.0).unwrap();
        let z = DVector::from_vec(vec![4.2, 1.0]);
        for t in 0..4 {
            assert_eq!(observation_mean(&spec, &z, t).unwrap(), 4.2);
        }
    }

    #[test]
    fn projection_examples() {
        let level = LocalLevelSpec::new(0.0).unwrap();
        let reg = RegressionSpec::new(vec![vec![0.0], vec![5.0]], vec![1.0], vec![true]).unwrap();
        let spec = assemble(&level, &reg, 1.0).unwrap();
        let z = DVector::from_vec(vec![4.0, 1.0]);
        assert_eq!(observation_mean(&spec, &z, 0).unwrap(), 4.0);
        assert_eq!(observation_mean(&spec, &z, 1).unwrap(), 9.0);
        assert!(observation_mean(&spec, &z, 2).is_err());
    }

    #[test]
    fn random_assembly_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let k = rng.gen_range(1..5usize);
            let l: f64 = rng.gen_range(-10.0..10.0);
            let beta: Vec<f64> = (0..k).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let x: Vec<f64> = (0..k).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let reg = RegressionSpec::new(vec![x.clone()], beta.clone(), vec![true; k]).unwrap();
            let spec = assemble(&LocalLevelSpec::new(0.3).unwrap(), &reg, 1.0).unwrap();
            let z = DVector::from_vec(vec![l, 1.0]);
            let direct: f64 = l + beta.iter().zip(&x).map(|(b, v)| b * v).sum::<f64>();
            assert!((observation_mean(&spec, &z, 0).unwrap() - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn excluding_covariate_matches_deleting_it() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let beta = vec![rng.gen_range(-2.0..2.0), 0.0, rng.gen_range(-2.0..2.0)];
            let reg =
                RegressionSpec::new(vec![x.clone()], beta.clone(), vec![true, false, true]).unwrap();
            let deleted = RegressionSpec::new(
                vec![vec![x[0], x[2]]],
                vec![beta[0], beta[2]],
                vec![true, true],
            )
            .unwrap();
            let level = LocalLevelSpec::new(0.2).unwrap();
            let a = assemble(&level, &reg, 1.0).unwrap();
            let b = assemble(&level, &deleted, 1.0).unwrap();
            let z = DVector::from_vec(vec![1.5, 1.0]);
            let va = observation_mean(&a, &z, 0).unwrap();
            let vb = observation_mean(&b, &z, 0).unwrap();
            assert!((va - vb).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_forward_simulation_keeps_level_constant() {
        let reg = RegressionSpec::new(vec![vec![1.0]; 10], vec![0.5], vec![true]).unwrap();
        let spec = assemble(&LocalLevelSpec::new(0.0).unwrap(), &reg, 1e-9).unwrap();
        // sigma_l = 0 and sigma_y -> 0: z_t = F z_{t-1} exactly.
        let mut z = DVector::from_vec(vec![3.0, 1.0]);
        for t in 0..10 {
            z = &spec.transition * z;
            assert_eq!(z[0], 3.0);
            assert_eq!(z[1], 1.0);
            assert!((observation_mean(&spec, &z, t).unwrap() - 3.5).abs() < 1e-15);
        }
    }

    #[test]
    fn sparsity_invariant_enforced() {
        assert!(RegressionSpec::new(vec![vec![1.0]], vec![0.5], vec![false]).is_err());
    }
}
