//! Post-hoc certification of convergence rates along gradient-flow
//! trajectories and empirical probing of the Łojasiewicz inequality around
//! detected limits.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::network::ParamVector;
use crate::quadrature::gauss_legendre;
use crate::risk::{gradient, risk, Problem, RiskError};
use crate::solver::Trajectory;

#[derive(Debug, Error)]
pub enum DiagError {
    #[error("locally constant risk neighborhood: every probe sample was discarded")]
    LocallyConstantRisk,
    #[error(transparent)]
    Risk(#[from] RiskError),
}

/// Empirical constants witnessing the polynomial convergence bounds
/// `loss gap <= C_loss (1+t)^-1` and `distance <= C_param (1+t)^-beta`
/// at the sampled times.
#[derive(Debug, Clone, Serialize)]
pub struct RateCertificate {
    pub limit: Vec<f64>,
    pub gnorm_at_limit: f64,
    pub c_loss: f64,
    /// Fitted distance exponent; `+inf` marks the degenerate certificate of
    /// a trajectory already at its limit (all distances below the floor).
    pub beta_hat: f64,
    pub c_param: f64,
    /// Fit window `[t_lo, t_hi]`.
    pub window: (f64, f64),
}

impl RateCertificate {
    pub fn passes(&self) -> bool {
        self.c_loss.is_finite() && self.beta_hat > 0.0 && !self.c_param.is_nan()
    }
}

/// Outcome of limit detection on a trajectory.
#[derive(Debug, Clone)]
pub enum LimitDetection {
    Converged(ParamVector),
    NotConverged { gnorm: f64, diameter: f64 },
}

/// Accept the final state as the trajectory limit when the gradient norm is
/// within 10x of the early-stop tolerance and the second half of the run
/// moved by at most `1e-4 (1 + |end|)`.
pub fn detect_limit(p: &Problem, traj: &Trajectory) -> LimitDetection {
    assert!(traj.samples.len() >= 10, "need at least 10 samples");
    let end = traj.final_state();
    let t_half = traj.final_time() / 2.0;
    let end_norm = norm(&end.theta);
    let diameter = traj
        .samples
        .iter()
        .filter(|s| s.t >= t_half)
        .map(|s| dist(&s.theta, &end.theta))
        .fold(0.0f64, f64::max);
    let gnorm = end.gnorm;
    if gnorm <= 10.0 * traj.config.g_tol && diameter <= 1e-4 * (1.0 + end_norm) {
        LimitDetection::Converged(ParamVector {
            theta: end.theta.clone(),
            shape: p.shape,
        })
    } else {
        LimitDetection::NotConverged { gnorm, diameter }
    }
}

/// Fit the polynomial-rate certificate against a detected limit.
///
/// The loss constant is the max of `|loss gap| (1+t)` over all samples; the
/// distance exponent is the least-squares slope of `log distance` against
/// `log(1+t)` over the trailing window, ignoring distances below 1e-13.
pub fn fit_rates(
    p: &Problem,
    traj: &Trajectory,
    limit: &ParamVector,
    window_fraction: f64,
) -> Result<RateCertificate, DiagError> {
    let loss_lim = risk(p, limit)?;
    let g_lim = gradient(p, limit)?;
    let t_end = traj.final_time();
    let window = (t_end * window_fraction, t_end);

    let mut c_loss = 0.0f64;
    for s in &traj.samples {
        c_loss = c_loss.max((s.loss - loss_lim).abs() * (1.0 + s.t));
    }

    let pts: Vec<(f64, f64)> = traj
        .samples
        .iter()
        .filter(|s| s.t >= window.0)
        .filter_map(|s| {
            let d = dist(&s.theta, &limit.theta);
            (d > 1e-13).then(|| ((1.0 + s.t).ln(), d.ln()))
        })
        .collect();

    let (beta_hat, c_param) = if pts.len() < 2 {
        // Degenerate window: the trajectory sits at the limit already.
        (f64::INFINITY, 0.0)
    } else {
        let slope = least_squares_slope(&pts);
        let beta = -slope;
        let mut c_param = 0.0f64;
        for s in &traj.samples {
            let d = dist(&s.theta, &limit.theta);
            c_param = c_param.max(d * (1.0 + s.t).powf(beta));
        }
        (beta, c_param)
    };

    Ok(RateCertificate {
        limit: limit.theta.clone(),
        gnorm_at_limit: norm(&g_lim),
        c_loss,
        beta_hat,
        c_param,
        window,
    })
}

/// Empirical Łojasiewicz data around a limit point.
#[derive(Debug, Clone, Serialize)]
pub struct LojaEstimate {
    /// Regression exponent, clamped into (0, 1].
    pub alpha_hat: f64,
    /// Smallest constant making the inequality hold on every kept sample
    /// (infinite if a kept sample had zero gradient: a violation witness).
    pub c_hat: f64,
    pub epsilon: f64,
    pub n_samples: usize,
    /// Sample attaining the binding constraint: (theta, loss gap, gradient norm).
    pub worst_pair: (Vec<f64>, f64, f64),
    pub seed: u64,
}

impl LojaEstimate {
    /// `|loss gap|^alpha <= c * gnorm` on a given pair.
    pub fn inequality_holds(&self, loss_gap: f64, gnorm: f64) -> bool {
        loss_gap.abs().powf(self.alpha_hat) <= self.c_hat * gnorm * (1.0 + 1e-12)
    }
}

/// Probe the Łojasiewicz inequality in a ball around a limit: uniform ball
/// samples (counter-based streams keyed by seed and index), regression of
/// `log |gradient|` on `log |loss gap|`, and the max-ratio constant.
pub fn loja_probe(
    p: &Problem,
    limit: &ParamVector,
    epsilon: f64,
    n: usize,
    seed: u64,
) -> Result<LojaEstimate, DiagError> {
    assert!(epsilon > 0.0, "probe radius must be positive");
    assert!(n >= 100, "probe needs at least 100 samples");
    let loss_lim = risk(p, limit)?;
    let dim = limit.dim();

    type ProbeSample = (Vec<f64>, f64, f64);
    let evals: Vec<Result<ProbeSample, RiskError>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x51_7c_c1_b7_27_22_0a_95) ^ k as u64);
            let theta = sample_in_ball(&mut rng, limit, epsilon, dim);
            let loss = risk(p, &theta)?;
            let g = gradient(p, &theta)?;
            Ok((theta.theta, (loss - loss_lim).abs(), norm(&g)))
        })
        .collect();

    let mut kept: Vec<(Vec<f64>, f64, f64)> = Vec::new();
    for e in evals {
        let (theta, gap, gnorm) = e?;
        if gap > 1e-15 {
            kept.push((theta, gap, gnorm));
        }
    }
    if kept.is_empty() {
        return Err(DiagError::LocallyConstantRisk);
    }

    let pts: Vec<(f64, f64)> = kept
        .iter()
        .filter(|(_, _, gnorm)| *gnorm > 0.0)
        .map(|(_, gap, gnorm)| (gap.ln(), gnorm.ln()))
        .collect();
    let alpha_hat = if pts.len() >= 2 {
        least_squares_slope(&pts).clamp(1e-9, 1.0)
    } else {
        1.0
    };

    let mut c_hat = 0.0f64;
    let mut worst = kept[0].clone();
    for (theta, gap, gnorm) in &kept {
        let ratio = if *gnorm == 0.0 {
            f64::INFINITY
        } else {
            gap.powf(alpha_hat) / gnorm
        };
        if ratio > c_hat {
            c_hat = ratio;
            worst = (theta.clone(), *gap, *gnorm);
        }
    }

    Ok(LojaEstimate {
        alpha_hat,
        c_hat,
        epsilon,
        n_samples: kept.len(),
        worst_pair: worst,
        seed,
    })
}

/// Remaining curve length `sigma(t_k) = int_{t_k}^{T} |G| ds` at each sample
/// time, from per-step Gauss quadrature on dense output. Non-increasing by
/// construction of the nonnegative integrand.
pub fn tail_lengths(p: &Problem, traj: &Trajectory) -> Result<Vec<(f64, f64)>, RiskError> {
    let rule = gauss_legendre(5);
    let mut step_vals: Vec<(f64, f64)> = Vec::with_capacity(traj.dense.len());
    for step in &traj.dense {
        let (a, b) = (step.t0, step.t_end);
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut acc = 0.0;
        for (x, w) in rule.0.iter().zip(&rule.1) {
            let theta = ParamVector {
                theta: step.eval(mid + half * x),
                shape: p.shape,
            };
            let g = gradient(p, &theta)?;
            acc += w * half * norm(&g);
        }
        step_vals.push((a, acc));
    }
    let mut out = Vec::with_capacity(traj.samples.len());
    for s in &traj.samples {
        let from = step_vals.partition_point(|(t0, _)| *t0 < s.t - 1e-15);
        let sigma: f64 = step_vals[from..].iter().map(|(_, v)| v).sum();
        out.push((s.t, sigma));
    }
    Ok(out)
}

fn sample_in_ball(
    rng: &mut ChaCha8Rng,
    center: &ParamVector,
    radius: f64,
    dim: usize,
) -> ParamVector {
    // normalized Gaussian direction, radius scaled by U^(1/dim)
    let mut dir: Vec<f64> = (0..dim)
        .map(|_| {
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        })
        .collect();
    let n = norm(&dir).max(f64::MIN_POSITIVE);
    let r = radius * rng.gen_range(0.0f64..1.0).powf(1.0 / dim as f64);
    for v in dir.iter_mut() {
        *v = *v / n * r;
    }
    ParamVector {
        theta: center.theta.iter().zip(&dir).map(|(c, d)| c + d).collect(),
        shape: center.shape,
    }
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|(x, _)| x).sum::<f64>() / n;
    let my = pts.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{basin_instance, c_only_instance, stationary_instance, test_rng};
    use crate::solver::{solve, SolverConfig};

    #[test]
    fn detect_limit_on_stationary_run_returns_theta_exactly() {
        let (p, theta0) = stationary_instance();
        let cfg = SolverConfig::default();
        let mut traj = solve(&p, &theta0, &cfg).unwrap();
        // a stationary run stops immediately; pad samples for the precondition
        while traj.samples.len() < 10 {
            let mut s = traj.samples.last().unwrap().clone();
            s.t += 1e-3;
            traj.samples.push(s);
        }
        match detect_limit(&p, &traj) {
            LimitDetection::Converged(l) => assert_eq!(l.theta, theta0.theta),
            other => panic!("expected convergence, got {other:?}"),
        }
    }

    #[test]
    fn detect_limit_on_c_only_flow() {
        let (p, theta0) = c_only_instance(1.0);
        let cfg = SolverConfig {
            t_max: 12.0,
            ..SolverConfig::default()
        };
        let traj = solve(&p, &theta0, &cfg).unwrap();
        match detect_limit(&p, &traj) {
            LimitDetection::Converged(l) => {
                assert!(l.theta[3].abs() <= 1e-8);
                assert_eq!(&l.theta[..3], &[0.0, 0.0, 0.0]);
            }
            other => panic!("expected convergence, got {other:?}"),
        }
    }

    #[test]
    fn detect_limit_flags_short_run() {
        let mut rng = test_rng(83);
        let (p, theta0) = crate::instances::flow_instance(&mut rng, 2);
        let cfg = SolverConfig {
            t_max: 0.1,
            ..SolverConfig::default()
        };
        let traj = solve(&p, &theta0, &cfg).unwrap();
        if traj.samples.len() >= 10 {
            match detect_limit(&p, &traj) {
                LimitDetection::NotConverged { .. } => {}
                LimitDetection::Converged(_) => panic!("0.1 time units cannot converge here"),
            }
        }
    }

    #[test]
    fn rates_on_exponential_decay_pass_with_large_beta() {
        let (p, theta0) = c_only_instance(1.0);
        let cfg = SolverConfig {
            t_max: 12.0,
            ..SolverConfig::default()
        };
        let traj = solve(&p, &theta0, &cfg).unwrap();
        let limit = match detect_limit(&p, &traj) {
            LimitDetection::Converged(l) => l,
            other => panic!("{other:?}"),
        };
        let cert = fit_rates(&p, &traj, &limit, 0.1).unwrap();
        assert!(cert.passes());
        assert!(cert.beta_hat > 2.0, "beta {}", cert.beta_hat);
        assert!(cert.c_loss.is_finite());
        // soundness at sampled times
        let loss_lim = risk(&p, &limit.clone()).unwrap();
        for s in &traj.samples {
            assert!((s.loss - loss_lim).abs() * (1.0 + s.t) <= cert.c_loss * (1.0 + 1e-12));
            let d = dist(&s.theta, &limit.theta);
            if cert.beta_hat.is_finite() {
                assert!(d * (1.0 + s.t).powf(cert.beta_hat) <= cert.c_param * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn rates_on_stationary_run_are_degenerate() {
        let (p, theta0) = stationary_instance();
        let traj = solve(&p, &theta0, &SolverConfig::default()).unwrap();
        let limit = ParamVector {
            theta: traj.final_state().theta.clone(),
            shape: p.shape,
        };
        let cert = fit_rates(&p, &traj, &limit, 0.1).unwrap();
        assert!(cert.beta_hat.is_infinite());
        assert!(cert.passes());
    }

    #[test]
    fn rates_on_basin_instance() {
        let mut rng = test_rng(89);
        let (p, theta0) = basin_instance(&mut rng);
        let cfg = SolverConfig {
            t_max: 400.0,
            ..SolverConfig::default()
        };
        let traj = solve(&p, &theta0, &cfg).unwrap();
        let limit = match detect_limit(&p, &traj) {
            LimitDetection::Converged(l) => l,
            LimitDetection::NotConverged { gnorm, diameter } => {
                panic!("basin run should converge (gnorm {gnorm}, diam {diameter})")
            }
        };
        let cert = fit_rates(&p, &traj, &limit, 0.1).unwrap();
        assert!(cert.passes(), "certificate must pass: {cert:?}");
    }

    #[test]
    fn loja_probe_on_c_only_quadratic() {
        let (p, _) = c_only_instance(0.0);
        let limit = ParamVector {
            theta: vec![0.0, 0.0, 0.0, 0.0],
            shape: p.shape,
        };
        let est = loja_probe(&p, &limit, 1e-3, 400, 7).unwrap();
        assert!(
            (0.45..=0.55).contains(&est.alpha_hat),
            "alpha {}",
            est.alpha_hat
        );
        assert!(est.c_hat.is_finite());
    }

    #[test]
    fn loja_probe_near_noncritical_point_has_small_constant() {
        let (p, _) = c_only_instance(0.0);
        let center = ParamVector {
            theta: vec![0.0, 0.0, 0.0, 1.0], // gradient 2c = 2 here
            shape: p.shape,
        };
        let est = loja_probe(&p, &center, 1e-4, 200, 11).unwrap();
        // denominator bounded below: constant ~ gap^alpha / 2
        assert!(est.c_hat <= 1.0, "c_hat {}", est.c_hat);
        for _ in 0..1 {
            let (theta, gap, gnorm) = est.worst_pair.clone();
            assert_eq!(theta.len(), 4);
            assert!(est.inequality_holds(gap, gnorm));
        }
    }

    #[test]
    fn loja_probe_near_basin_limit() {
        // Around a converged basin limit the risk is quadratic in the normal
        // directions but exactly flat along the rescaling orbit, so the
        // regression exponent lands somewhat above the Morse value 1/2; the
        // inequality itself must hold with a finite constant.
        let mut rng = test_rng(97);
        let (p, theta0) = basin_instance(&mut rng);
        let cfg = SolverConfig {
            t_max: 400.0,
            ..SolverConfig::default()
        };
        let traj = solve(&p, &theta0, &cfg).unwrap();
        let limit = match detect_limit(&p, &traj) {
            LimitDetection::Converged(l) => l,
            other => panic!("{other:?}"),
        };
        let est = loja_probe(&p, &limit, 1e-4, 300, 13).unwrap();
        assert!(
            (0.40..=0.75).contains(&est.alpha_hat),
            "alpha {}",
            est.alpha_hat
        );
        assert!(est.c_hat.is_finite());
        let (_, gap, gnorm) = est.worst_pair.clone();
        assert!(est.inequality_holds(gap, gnorm));
    }

    #[test]
    fn loja_probe_rejects_locally_constant_risk() {
        // A probe radius so small that every loss gap sits below the floor.
        let (p, _) = c_only_instance(0.0);
        let limit = ParamVector {
            theta: vec![0.0; 4],
            shape: p.shape,
        };
        match loja_probe(&p, &limit, 1e-9, 100, 3) {
            Err(DiagError::LocallyConstantRisk) => {}
            other => panic!("expected locally-constant error, got {other:?}"),
        }
    }

    #[test]
    fn loja_probe_is_deterministic_in_seed() {
        let (p, _) = c_only_instance(0.0);
        let limit = ParamVector {
            theta: vec![0.0, 0.0, 0.0, 0.0],
            shape: p.shape,
        };
        let a = loja_probe(&p, &limit, 1e-3, 150, 42).unwrap();
        let b = loja_probe(&p, &limit, 1e-3, 150, 42).unwrap();
        assert_eq!(a.alpha_hat.to_bits(), b.alpha_hat.to_bits());
        assert_eq!(a.c_hat.to_bits(), b.c_hat.to_bits());
    }

    #[test]
    fn tail_lengths_are_non_increasing() {
        let (p, theta0) = c_only_instance(1.0);
        let cfg = SolverConfig {
            t_max: 5.0,
            ..SolverConfig::default()
        };
        let traj = solve(&p, &theta0, &cfg).unwrap();
        let tails = tail_lengths(&p, &traj).unwrap();
        for w in tails.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-15);
        }
        assert!(tails.last().unwrap().1 <= 1e-6);
    }
}
