//! Exact Gaussian inference for the assembled LG-SSM: Kalman filter, RTS
//! smoother, log-likelihood and forward-filter backward-sampling.
//!
//! Covariances are symmetrized after every update and the Joseph form is
//! used for the measurement step so the near-noiseless limits stay stable.
//! Missing observations skip the update and propagate the prediction,
//! which is how the post period is filtered through when forecasting.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Error;
use crate::ssm::SsmSpec;
use crate::Result;

const MODULE: &str = "kalman";

/// Diagonal entries below this are a hard error; smaller negatives are
/// clamped to zero.
const NEG_DIAG_TOL: f64 = -1e-10;

/// Prior on the initial state z_0 ~ N(mean, cov).
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Full forward-pass output over times 1..=T.
#[derive(Debug, Clone)]
pub struct FilterResult {
    pub predicted_mean: Vec<DVector<f64>>,
    pub predicted_cov: Vec<DMatrix<f64>>,
    pub filtered_mean: Vec<DVector<f64>>,
    pub filtered_cov: Vec<DMatrix<f64>>,
    /// One-step predictive mean of y_t (computed whether or not y_t was
    /// observed).
    pub predictive_mean: Vec<f64>,
    /// One-step predictive variance of y_t; always >= the observation noise.
    pub predictive_var: Vec<f64>,
    /// Sum of one-step predictive log densities over observed times.
    pub log_likelihood: f64,
}

/// One trajectory drawn from the joint smoothing distribution, indexed by
/// observation time 1..=T.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDraw {
    pub states: Vec<DVector<f64>>,
}

impl StateDraw {
    /// First state component (the level) over time.
    pub fn levels(&self) -> Vec<f64> {
        self.states.iter().map(|z| z[0]).collect()
    }
}

fn symmetrize(p: &mut DMatrix<f64>) -> Result<()> {
    let pt = p.transpose();
    *p = (&*p + pt) * 0.5;
    for i in 0..p.nrows() {
        let d = p[(i, i)];
        if d < NEG_DIAG_TOL {
            return Err(Error::numeric(MODULE, format!("negative variance {d} on state {i}")));
        }
        if d < 0.0 {
            p[(i, i)] = 0.0;
        }
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(MODULE, "non-finite covariance entry"));
    }
    Ok(())
}

fn check_finite(v: &DVector<f64>) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::numeric(MODULE, "non-finite state mean"));
    }
    Ok(())
}

/// Moore–Penrose pseudo-inverse of a symmetric PSD matrix via its
/// eigendecomposition; rank decided relative to the largest eigenvalue.
fn psd_pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let tol = max * 1e-12;
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..eig.eigenvalues.len() {
        let lam = eig.eigenvalues[j];
        if lam > tol {
            let v = eig.eigenvectors.column(j);
            out += v * v.transpose() / lam;
        }
    }
    out
}

/// Symmetric PSD square root; tiny negative eigenvalues are clamped.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..eig.eigenvalues.len() {
        let lam = eig.eigenvalues[j].max(0.0);
        let v = eig.eigenvectors.column(j);
        out += v * v.transpose() * lam.sqrt();
    }
    out
}

fn draw_gaussian<R: Rng>(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let root = psd_sqrt(cov);
    let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    mean + root * z
}

/// Kalman filter over `y` (a `None` entry is a missing observation).
pub fn filter(spec: &SsmSpec, init: &InitialState, y: &[Option<f64>]) -> Result<FilterResult> {
    let horizon = y.len();
    if horizon == 0 {
        return Err(Error::validation(MODULE, "empty observation sequence"));
    }
    if spec.horizon() < horizon {
        return Err(Error::validation(MODULE, "observation vector coverage shorter than data"));
    }
    let n = spec.state_dim();
    if init.mean.len() != n || init.cov.nrows() != n {
        return Err(Error::validation(MODULE, "initial state dimension mismatch"));
    }
    let f = &spec.transition;
    let process_noise = &spec.control * &spec.state_noise_cov * spec.control.transpose();
    let obs_var = spec.obs_noise_var;

    let mut m = init.mean.clone();
    let mut p = init.cov.clone();
    let mut out = FilterResult {
        predicted_mean: Vec::with_capacity(horizon),
        predicted_cov: Vec::with_capacity(horizon),
        filtered_mean: Vec::with_capacity(horizon),
        filtered_cov: Vec::with_capacity(horizon),
        predictive_mean: Vec::with_capacity(horizon),
        predictive_var: Vec::with_capacity(horizon),
        log_likelihood: 0.0,
    };

    for (t, obs) in y.iter().enumerate() {
        // Predict.
        let m_pred = f * &m;
        let mut p_pred = f * &p * f.transpose() + &process_noise;
        symmetrize(&mut p_pred)?;
        check_finite(&m_pred)?;

        let h = &spec.observation[t];
        let y_mean = h.dot(&m_pred);
        let s = (h.transpose() * &p_pred * h)[(0, 0)] + obs_var;
        if !s.is_finite() || s <= 0.0 {
            return Err(Error::numeric(MODULE, format!("ill-conditioned predictive variance {s} at t={t}")));
        }

        match obs {
            Some(yt) => {
                let resid = yt - y_mean;
                out.log_likelihood +=
                    -0.5 * ((2.0 * std::f64::consts::PI * s).ln() + resid * resid / s);
                // Joseph-form update.
                let k = &p_pred * h / s;
                m = &m_pred + &k * resid;
                let a = DMatrix::identity(n, n) - &k * h.transpose();
                p = &a * &p_pred * a.transpose() + &k * k.transpose() * obs_var;
                symmetrize(&mut p)?;
                check_finite(&m)?;
            }
            None => {
                m = m_pred.clone();
                p = p_pred.clone();
            }
        }

        out.predicted_mean.push(m_pred);
        out.predicted_cov.push(p_pred);
        out.filtered_mean.push(m.clone());
        out.filtered_cov.push(p.clone());
        out.predictive_mean.push(y_mean);
        out.predictive_var.push(s);
    }
    Ok(out)
}

/// Per-time smoothed moments from the RTS backward pass.
#[derive(Debug, Clone)]
pub struct SmoothResult {
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
}

pub fn smooth(spec: &SsmSpec, init: &InitialState, y: &[Option<f64>]) -> Result<SmoothResult> {
    let fr = filter(spec, init, y)?;
    let horizon = y.len();
    let f = &spec.transition;

    let mut means = fr.filtered_mean.clone();
    let mut covs = fr.filtered_cov.clone();
    for t in (0..horizon.saturating_sub(1)).rev() {
        let p_pred_next = &fr.predicted_cov[t + 1];
        let gain = &fr.filtered_cov[t] * f.transpose() * psd_pinv(p_pred_next);
        means[t] = &fr.filtered_mean[t] + &gain * (&means[t + 1] - &fr.predicted_mean[t + 1]);
        covs[t] = &fr.filtered_cov[t] + &gain * (&covs[t + 1] - p_pred_next) * gain.transpose();
        symmetrize(&mut covs[t])?;
        check_finite(&means[t])?;
    }
    Ok(SmoothResult { means, covs })
}

/// Draws one trajectory from p(z_{1:T} | y, params) by backward sampling
/// from the filtered moments. Bit-reproducible for a fixed rng state.
pub fn simulate_states<R: Rng>(
    spec: &SsmSpec,
    init: &InitialState,
    y: &[Option<f64>],
    rng: &mut R,
) -> Result<StateDraw> {
    let fr = filter(spec, init, y)?;
    simulate_states_from_filter(spec, &fr, rng)
}

/// Backward-sampling pass reusing an existing forward pass.
pub fn simulate_states_from_filter<R: Rng>(
    spec: &SsmSpec,
    fr: &FilterResult,
    rng: &mut R,
) -> Result<StateDraw> {
    let horizon = fr.filtered_mean.len();
    let f = &spec.transition;
    let mut states = vec![DVector::zeros(spec.state_dim()); horizon];

    states[horizon - 1] = draw_gaussian(&fr.filtered_mean[horizon - 1], &fr.filtered_cov[horizon - 1], rng);
    for t in (0..horizon - 1).rev() {
        let p_pred_next = &fr.predicted_cov[t + 1];
        let gain = &fr.filtered_cov[t] * f.transpose() * psd_pinv(p_pred_next);
        let mean = &fr.filtered_mean[t] + &gain * (&states[t + 1] - &fr.predicted_mean[t + 1]);
        let mut cov = &fr.filtered_cov[t] - &gain * p_pred_next * gain.transpose();
        symmetrize(&mut cov)?;
        states[t] = draw_gaussian(&mean, &cov, rng);
        check_finite(&states[t])?;
    }
    Ok(StateDraw { states })
}

/// Total log-likelihood; identical code path to [`filter`].
pub fn loglik(spec: &SsmSpec, init: &InitialState, y: &[Option<f64>]) -> Result<f64> {
    Ok(filter(spec, init, y)?.log_likelihood)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssm::{assemble, LocalLevelSpec, RegressionSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn local_level(sigma_l: f64, sigma_y: f64, horizon: usize) -> SsmSpec {
        assemble(&LocalLevelSpec::new(sigma_l).unwrap(), &RegressionSpec::empty(horizon), sigma_y).unwrap()
    }

    fn init1(mean: f64, var: f64) -> InitialState {
        InitialState { mean: DVector::from_element(1, mean), cov: DMatrix::from_element(1, 1, var) }
    }

    #[test]
    fn noiseless_limit_tracks_observations() {
        let spec = local_level(0.0, 1e-12, 4);
        let init = init1(0.0, 1e6);
        let y: Vec<Option<f64>> = [3.0, 3.0, 3.0, 3.0].iter().map(|v| Some(*v)).collect();
        let fr = filter(&spec, &init, &y).unwrap();
        for t in 0..4 {
            assert!((fr.filtered_mean[t][0] - 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn one_step_conditioning_by_hand() {
        // l_0 ~ N(0,1), sigma_l = 1 gives prior l_1 ~ N(0,2); observing
        // y_1 = 1 with unit noise yields posterior N(2/3, 2/3).
        let spec = local_level(1.0, 1.0, 1);
        let fr = filter(&spec, &init1(0.0, 1.0), &[Some(1.0)]).unwrap();
        assert!((fr.filtered_mean[0][0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((fr.filtered_cov[0][(0, 0)] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn loglik_closed_form_t1() {
        let spec = local_level(1.0, 1.0, 1);
        let ll = loglik(&spec, &init1(0.0, 1.0), &[Some(0.0)]).unwrap();
        let expected = -0.5 * (2.0 * std::f64::consts::PI * 3.0).ln();
        assert!((ll - expected).abs() < 1e-12);
    }

    #[test]
    fn loglik_gaussian_scaling_identity() {
        let y: Vec<Option<f64>> = vec![Some(0.3), Some(-0.2), Some(1.1), Some(0.4)];
        let c: f64 = 4.0;
        let base = loglik(&local_level(0.7, 0.9, 4), &init1(0.1, 1.3), &y).unwrap();
        let yscaled: Vec<Option<f64>> = y.iter().map(|v| v.map(|x| x * c.sqrt())).collect();
        let init_scaled = init1(0.1 * c.sqrt(), 1.3 * c);
        let scaled = loglik(
            &local_level(0.7 * c.sqrt(), 0.9 * c.sqrt(), 4),
            &init_scaled,
            &yscaled,
        )
        .unwrap();
        assert!((scaled - (base - 4.0 / 2.0 * c.ln())).abs() < 1e-10);
    }

    #[test]
    fn smooth_t1_equals_filter() {
        let spec = local_level(0.5, 1.0, 1);
        let init = init1(0.0, 1.0);
        let fr = filter(&spec, &init, &[Some(0.7)]).unwrap();
        let sm = smooth(&spec, &init, &[Some(0.7)]).unwrap();
        assert_eq!(sm.means[0][0], fr.filtered_mean[0][0]);
        assert_eq!(sm.covs[0][(0, 0)], fr.filtered_cov[0][(0, 0)]);
    }

    #[test]
    fn static_level_smooths_to_constant() {
        let spec = local_level(0.0, 1.0, 5);
        let init = init1(0.0, 10.0);
        let y: Vec<Option<f64>> = [1.0, 2.0, 3.0, 2.0, 1.0].iter().map(|v| Some(*v)).collect();
        let sm = smooth(&spec, &init, &y).unwrap();
        for t in 1..5 {
            assert!((sm.means[t][0] - sm.means[0][0]).abs() < 1e-9);
        }
    }

    #[test]
    fn variance_ordering_smoothed_filtered_predicted() {
        let spec = local_level(0.8, 1.2, 6);
        let init = init1(0.5, 2.0);
        let y: Vec<Option<f64>> = [0.1, 1.4, -0.3, 0.9, 2.2, 1.0].iter().map(|v| Some(*v)).collect();
        let fr = filter(&spec, &init, &y).unwrap();
        let sm = smooth(&spec, &init, &y).unwrap();
        for t in 0..6 {
            let s = sm.covs[t][(0, 0)];
            let f = fr.filtered_cov[t][(0, 0)];
            let p = fr.predicted_cov[t][(0, 0)];
            assert!(s <= f + 1e-12 && f <= p + 1e-12, "t={t}: {s} {f} {p}");
            assert!(fr.predictive_var[t] >= spec.obs_noise_var);
        }
    }

    #[test]
    fn missing_observations_propagate_prediction() {
        let spec = local_level(0.5, 1.0, 3);
        let init = init1(0.0, 1.0);
        let fr = filter(&spec, &init, &[Some(1.0), None, Some(1.0)]).unwrap();
        // At the missing step, filtered == predicted.
        assert_eq!(fr.filtered_mean[1][0], fr.predicted_mean[1][0]);
        assert_eq!(fr.filtered_cov[1][(0, 0)], fr.predicted_cov[1][(0, 0)]);
        // Log-likelihood only counts the two observed points.
        let short = filter(&spec, &init, &[Some(1.0)]).unwrap();
        assert!(fr.log_likelihood < short.log_likelihood);
    }

    #[test]
    fn degenerate_posterior_draws_are_deterministic() {
        let spec = local_level(0.0, 1e-12, 4);
        let init = init1(2.0, 1e-16);
        let y: Vec<Option<f64>> = vec![Some(2.0); 4];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draw = simulate_states(&spec, &init, &y, &mut rng).unwrap();
        for z in &draw.states {
            assert!((z[0] - 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn same_seed_reproduces_draw_bitwise() {
        let spec = local_level(0.6, 0.9, 8);
        let init = init1(0.0, 1.0);
        let y: Vec<Option<f64>> = (0..8).map(|t| Some((t as f64 * 0.7).sin())).collect();
        let a = simulate_states(&spec, &init, &y, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        let b = simulate_states(&spec, &init, &y, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ffbs_sample_mean_matches_smoother() {
        let spec = local_level(1.0, 1.0, 5);
        let init = init1(0.0, 1.0);
        let y: Vec<Option<f64>> = [1.0, 0.5, -0.5, 0.2, 1.5].iter().map(|v| Some(*v)).collect();
        let sm = smooth(&spec, &init, &y).unwrap();
        let fr = filter(&spec, &init, &y).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n_draws = 20_000;
        let mut acc = vec![0.0; 5];
        for _ in 0..n_draws {
            let d = simulate_states_from_filter(&spec, &fr, &mut rng).unwrap();
            for t in 0..5 {
                acc[t] += d.states[t][0];
            }
        }
        for t in 0..5 {
            let mean = acc[t] / n_draws as f64;
            let mc_se = (sm.covs[t][(0, 0)] / n_draws as f64).sqrt();
            assert!((mean - sm.means[t][0]).abs() < 4.0 * mc_se, "t={t}");
        }
    }

    #[test]
    fn loglik_invariant_to_state_permutation() {
        // Two-state model (level + constant); swap the state order.
        let reg = RegressionSpec::new(vec![vec![0.5]; 6], vec![1.2], vec![true]).unwrap();
        let spec = assemble(&LocalLevelSpec::new(0.4).unwrap(), &reg, 0.8).unwrap();
        let init = InitialState {
            mean: DVector::from_vec(vec![0.3, 1.0]),
            cov: DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])),
        };
        let y: Vec<Option<f64>> = (0..6).map(|t| Some(1.0 + 0.1 * t as f64)).collect();
        let base = loglik(&spec, &init, &y).unwrap();

        let perm = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let swapped = SsmSpec {
            transition: &perm * &spec.transition * perm.transpose(),
            control: &perm * &spec.control,
            state_noise_cov: spec.state_noise_cov.clone(),
            observation: spec.observation.iter().map(|h| &perm * h).collect(),
            obs_noise_var: spec.obs_noise_var,
        };
        let init_swapped = InitialState { mean: &perm * &init.mean, cov: &perm * &init.cov * perm.transpose() };
        let permuted = loglik(&swapped, &init_swapped, &y).unwrap();
        assert!((base - permuted).abs() < 1e-10);
    }
}
