//! Shared test oracles, independent of the implementation paths they check.
// Each test binary compiles this module separately and uses a subset of it.
#![allow(dead_code)]

use impactor::kalman::InitialState;
use impactor::ssm::SsmSpec;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Dense joint-Gaussian oracle: builds the full Gaussian over the stacked
/// states z_{1:T} and observations y_{1:T} and answers filtering/smoothing
/// queries by brute-force conditioning. No Kalman recursion anywhere.
pub struct DenseOracle {
    n: usize,
    horizon: usize,
    /// Mean of (z_1, …, z_T).
    state_mean: DVector<f64>,
    /// Covariance of the stacked states.
    state_cov: DMatrix<f64>,
    obs_mean: DVector<f64>,
    obs_cov: DMatrix<f64>,
    /// Cov(z_stack, y).
    cross: DMatrix<f64>,
}

impl DenseOracle {
    pub fn new(spec: &SsmSpec, init: &InitialState, horizon: usize) -> Self {
        let n = spec.state_dim();
        let f = &spec.transition;
        let process = &spec.control * &spec.state_noise_cov * spec.control.transpose();

        // Marginal moments of each z_t by forward propagation.
        let mut means = Vec::with_capacity(horizon);
        let mut margs = Vec::with_capacity(horizon);
        let mut m = init.mean.clone();
        let mut c = init.cov.clone();
        for _ in 0..horizon {
            m = f * &m;
            c = f * &c * f.transpose() + &process;
            means.push(m.clone());
            margs.push(c.clone());
        }

        // Cross blocks: Cov(z_s, z_t) = C_s (F^{t-s})ᵀ for s <= t.
        let mut state_cov = DMatrix::zeros(n * horizon, n * horizon);
        let mut state_mean = DVector::zeros(n * horizon);
        for s in 0..horizon {
            state_mean.rows_mut(s * n, n).copy_from(&means[s]);
            let mut block = margs[s].clone();
            for t in s..horizon {
                state_cov.view_mut((s * n, t * n), (n, n)).copy_from(&block);
                state_cov
                    .view_mut((t * n, s * n), (n, n))
                    .copy_from(&block.transpose());
                block = &block * f.transpose();
            }
        }

        // Observation layer: y_t = h_tᵀ z_t + noise.
        let mut obs_mean = DVector::zeros(horizon);
        let mut obs_cov = DMatrix::zeros(horizon, horizon);
        let mut cross = DMatrix::zeros(n * horizon, horizon);
        for t in 0..horizon {
            let h = &spec.observation[t];
            obs_mean[t] = h.dot(&means[t]);
            for s in 0..horizon {
                let zz = state_cov.view((s * n, t * n), (n, n));
                let col = zz * h;
                cross.view_mut((s * n, t), (n, 1)).copy_from(&col);
            }
            for s in 0..horizon {
                let hs = &spec.observation[s];
                let zz = state_cov.view((s * n, t * n), (n, n));
                obs_cov[(s, t)] = (hs.transpose() * zz * h)[(0, 0)];
            }
            obs_cov[(t, t)] += spec.obs_noise_var;
        }

        DenseOracle { n, horizon, state_mean, state_cov, obs_mean, obs_cov, cross }
    }

    /// Posterior of the stacked states given the first `upto` observations.
    fn condition(&self, y: &[f64], upto: usize) -> (DVector<f64>, DMatrix<f64>) {
        let obs_cov = self.obs_cov.view((0, 0), (upto, upto)).into_owned();
        let cross = self.cross.view((0, 0), (self.n * self.horizon, upto)).into_owned();
        let resid = DVector::from_fn(upto, |t, _| y[t] - self.obs_mean[t]);
        let solve = obs_cov
            .clone()
            .cholesky()
            .expect("observation covariance must be positive definite");
        let gain = &cross * solve.inverse();
        let mean = &self.state_mean + &gain * resid;
        let cov = &self.state_cov - &gain * cross.transpose();
        (mean, cov)
    }

    /// Smoothed mean/cov of z_t given all observations.
    pub fn smoothed(&self, y: &[f64], t: usize) -> (DVector<f64>, DMatrix<f64>) {
        let (mean, cov) = self.condition(y, self.horizon);
        (
            mean.rows(t * self.n, self.n).into_owned(),
            cov.view((t * self.n, t * self.n), (self.n, self.n)).into_owned(),
        )
    }

    /// Filtered mean/cov of z_t given observations up to and including t.
    pub fn filtered(&self, y: &[f64], t: usize) -> (DVector<f64>, DMatrix<f64>) {
        self.conditioned(y, t + 1, t)
    }

    /// Mean/cov of z_t given the first `upto` observations, for any t.
    pub fn conditioned(&self, y: &[f64], upto: usize, t: usize) -> (DVector<f64>, DMatrix<f64>) {
        let (mean, cov) = self.condition(y, upto);
        (
            mean.rows(t * self.n, self.n).into_owned(),
            cov.view((t * self.n, t * self.n), (self.n, self.n)).into_owned(),
        )
    }

    /// Posterior Cov(z_t, z_{t+1}) given all observations (first component).
    pub fn smoothed_lag1_cross(&self, y: &[f64], t: usize) -> f64 {
        let (_, cov) = self.condition(y, self.horizon);
        cov[(t * self.n, (t + 1) * self.n)]
    }

    /// Joint log density of the observations.
    pub fn loglik(&self, y: &[f64]) -> f64 {
        let t = self.horizon;
        let chol = self.obs_cov.clone().cholesky().expect("positive definite");
        let resid = DVector::from_fn(t, |i, _| y[i] - self.obs_mean[i]);
        let solved = chol.solve(&resid);
        let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        -0.5 * (t as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + resid.dot(&solved))
    }
}

/// A random stable LG-SSM with T ≤ 8, n ≤ 3 plus simulated observations.
pub fn random_model(rng: &mut ChaCha8Rng) -> (SsmSpec, InitialState, Vec<f64>) {
    let n = rng.gen_range(1..=3usize);
    let q = rng.gen_range(1..=n);
    let horizon = rng.gen_range(2..=8usize);
    let transition = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.9..0.9));
    let control = DMatrix::from_fn(n, q, |_, _| rng.gen_range(-1.0..1.0));
    let a = DMatrix::from_fn(q, q, |_, _| rng.gen_range(-1.0..1.0));
    let state_noise_cov = &a * a.transpose() + DMatrix::identity(q, q) * 0.1;
    let observation = (0..horizon)
        .map(|_| DVector::from_fn(n, |_, _| rng.gen_range(-1.5..1.5)))
        .collect();
    let obs_noise_var: f64 = rng.gen_range(0.2..2.0);
    let spec = SsmSpec { transition, control, state_noise_cov, observation, obs_noise_var };

    let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let init = InitialState {
        mean: DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0)),
        cov: &b * b.transpose() + DMatrix::identity(n, n) * 0.1,
    };
    let y = (0..horizon).map(|_| rng.gen_range(-3.0..3.0)).collect();
    (spec, init, y)
}

/// Builds a ChaCha stream for test data generation.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
