//! Event-driven integration of the gradient flow.
//!
//! The flow follows the negative generalized gradient with an embedded
//! Dormand-Prince 5(4) pair and quartic dense output. Neurons whose input
//! parameters shrink to the degeneration threshold are projected onto the
//! exact degenerate subspace and their weight/bias components are frozen for
//! the rest of the run; the degenerate set therefore only ever grows, which
//! is the solution class in which the flow is unique.

use serde::Serialize;
use thiserror::Error;

use crate::network::{degenerate_set, ParamVector};
use crate::quadrature::gauss_legendre;
use crate::risk::{gradient, risk, Problem, RiskError};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("step size underflow at t = {t}; last state recorded")]
    StepUnderflow { t: f64, last: Vec<f64> },
    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },
    #[error(transparent)]
    Risk(#[from] RiskError),
}

/// Step-controller and termination settings.
#[derive(Debug, Clone, Copy, Serialize, serde::Deserialize, PartialEq)]
#[serde(default)]
pub struct SolverConfig {
    pub t_max: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Degeneration threshold on `|b_i| + sum_j |w_ij|`.
    pub eps_deg: f64,
    /// Early-stop gradient norm.
    pub g_tol: f64,
    pub max_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            t_max: 10.0,
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            eps_deg: 1e-12,
            g_tol: 1e-10,
            max_steps: 1_000_000,
        }
    }
}

/// Why the integration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StopReason {
    Horizon,
    GradientTol,
    MaxSteps,
}

/// One recorded state.
#[derive(Debug, Clone)]
pub struct Sample {
    pub t: f64,
    pub theta: Vec<f64>,
    pub loss: f64,
    pub gnorm: f64,
    pub degenerate: Vec<usize>,
}

/// Dense-output coefficients of one accepted step, valid on `[t0, t_end]`.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub t0: f64,
    /// Step length the interpolant was built with.
    pub h: f64,
    /// Upper end of the validity window (shorter than `t0 + h` when the step
    /// was cut by a degeneration event).
    pub t_end: f64,
    cont: [Vec<f64>; 5],
}

impl DenseStep {
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        (0..self.cont[0].len())
            .map(|k| {
                self.cont[0][k]
                    + s * (self.cont[1][k]
                        + s1 * (self.cont[2][k] + s * (self.cont[3][k] + s1 * self.cont[4][k])))
            })
            .collect()
    }
}

/// Time-stamped flow record with dense output and degeneration events.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// `(event time, 1-based neuron index frozen)`.
    pub events: Vec<(f64, usize)>,
    pub dense: Vec<DenseStep>,
    pub config: SolverConfig,
    pub stop: StopReason,
}

impl Trajectory {
    pub fn final_time(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    pub fn final_state(&self) -> &Sample {
        self.samples.last().expect("trajectory is never empty")
    }

    /// State at an arbitrary time within the integrated range.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        if self.dense.is_empty() || t <= self.dense[0].t0 {
            return self.samples[0].theta.clone();
        }
        let idx = self.dense.partition_point(|s| s.t_end < t);
        let step = self
            .dense
            .get(idx)
            .unwrap_or_else(|| self.dense.last().unwrap());
        step.eval(t.min(step.t_end))
    }
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Stage times are not needed: the flow field is autonomous.
// Error coefficients: fifth-order weights minus the embedded fourth-order ones.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
// Dense-output weights for the quartic interpolant.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// Generalized gradient with the weight/bias components of the frozen
/// neurons overwritten by exact zeros.
///
/// On exactly-degenerate states those components already evaluate to zero;
/// the overwrite guards against roundoff reintroducing drift.
pub fn frozen_field(
    p: &Problem,
    theta: &ParamVector,
    frozen: &[usize],
) -> Result<Vec<f64>, RiskError> {
    debug_assert!(
        degenerate_set(theta).iter().all(|i| frozen.contains(i)),
        "frozen set must contain every exactly degenerate neuron"
    );
    let mut g = gradient(p, theta)?;
    for &i in frozen {
        for j in 1..=theta.shape.d {
            g[theta.w_index(i, j)] = 0.0;
        }
        g[theta.b_index(i)] = 0.0;
    }
    Ok(g)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

struct FieldEval<'a> {
    p: &'a Problem,
    shape: crate::network::NetworkShape,
}

impl FieldEval<'_> {
    /// Negative frozen gradient at state `y`.
    fn eval(&self, y: &[f64], frozen: &[usize]) -> Result<Vec<f64>, RiskError> {
        let theta = ParamVector {
            theta: y.to_vec(),
            shape: self.shape,
        };
        let mut g = frozen_field(self.p, &theta, frozen)?;
        for v in g.iter_mut() {
            *v = -*v;
        }
        Ok(g)
    }
}

/// Integrate the gradient flow from `theta0`.
///
/// Degeneration events are localized on dense output by bisection to 1e-12
/// time units; the state is then projected onto the exact degenerate
/// subspace and the integrator restarts from the event point.
pub fn solve(
    p: &Problem,
    theta0: &ParamVector,
    cfg: &SolverConfig,
) -> Result<Trajectory, SolveError> {
    let dim = theta0.dim();
    let shape = theta0.shape;
    let field = FieldEval { p, shape };

    let mut frozen: Vec<usize> = degenerate_set(theta0);
    let mut y = theta0.theta.clone();
    // Project near-degenerate initial neurons immediately.
    project_threshold_neurons(&mut y, &mut frozen, theta0, cfg.eps_deg);

    let mut t = 0.0;
    let mut samples = Vec::new();
    let mut events: Vec<(f64, usize)> = Vec::new();
    let mut dense: Vec<DenseStep> = Vec::new();

    let mut k1 = field.eval(&y, &frozen)?;
    push_sample(p, &mut samples, t, &y, &k1, shape)?;
    if norm(&k1) <= cfg.g_tol {
        return Ok(Trajectory {
            samples,
            events,
            dense,
            config: *cfg,
            stop: StopReason::GradientTol,
        });
    }

    let mut h = initial_step(&y, &k1, cfg);
    let mut steps = 0usize;
    let mut stop = StopReason::Horizon;

    while t < cfg.t_max {
        if steps >= cfg.max_steps {
            stop = StopReason::MaxSteps;
            break;
        }
        // Keep steps short relative to 1 + t so certificate constants stay
        // tight between samples, and land exactly on the horizon.
        h = h.min(0.04 * (1.0 + t)).min(cfg.t_max - t);
        if h < 1e-14 * (1.0 + t.abs()) {
            return Err(SolveError::StepUnderflow { t, last: y });
        }

        let mut k = vec![vec![0.0; dim]; 7];
        k[0] = k1.clone();
        for stage in 0..6 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate().take(stage + 1) {
                let a = A[stage][j];
                if a != 0.0 {
                    for (ysi, kji) in ys.iter_mut().zip(kj) {
                        *ysi += h * a * kji;
                    }
                }
            }
            k[stage + 1] = field.eval(&ys, &frozen)?;
        }
        // Fifth-order solution is the last stage argument (FSAL pair).
        let mut y1 = y.clone();
        for (j, kj) in k.iter().enumerate().take(6) {
            let a = A[5][j];
            if a != 0.0 {
                for (y1i, kji) in y1.iter_mut().zip(kj) {
                    *y1i += h * a * kji;
                }
            }
        }
        if y1.iter().any(|v| !v.is_finite()) {
            return Err(SolveError::NonFinite { t: t + h });
        }

        let mut err_sq = 0.0;
        for i in 0..dim {
            let e: f64 = (0..7).map(|j| E[j] * k[j][i]).sum::<f64>() * h;
            let scale = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y1[i].abs());
            err_sq += (e / scale) * (e / scale);
        }
        let err = (err_sq / dim as f64).sqrt();

        if err > 1.0 {
            steps += 1;
            h *= (0.9 * err.powf(-0.2)).max(0.2);
            continue;
        }

        // Accepted: build dense output.
        let k7 = field.eval(&y1, &frozen)?;
        let mut cont = [
            y.clone(),
            vec![0.0; dim],
            vec![0.0; dim],
            vec![0.0; dim],
            vec![0.0; dim],
        ];
        for i in 0..dim {
            let ydiff = y1[i] - y[i];
            let bspl = h * k[0][i] - ydiff;
            cont[1][i] = ydiff;
            cont[2][i] = bspl;
            cont[3][i] = ydiff - h * k7[i] - bspl;
            cont[4][i] = h
                * (D[0] * k[0][i]
                    + D[2] * k[2][i]
                    + D[3] * k[3][i]
                    + D[4] * k[4][i]
                    + D[5] * k[5][i]
                    + D[6] * k7[i]);
        }
        let step = DenseStep {
            t0: t,
            h,
            t_end: t + h,
            cont,
        };

        // Degeneration event: first neuron reaching the threshold, at the
        // step end or inside a transient dip (a trajectory passing through
        // the degenerate set between endpoints).
        let crossing = (1..=shape.h)
            .filter(|i| !frozen.contains(i))
            .filter_map(|i| {
                first_threshold_time(&step, shape, i, cfg.eps_deg, &y, &y1).map(|tau| (tau, i))
            })
            .min_by(|a, b| a.partial_cmp(b).unwrap());

        steps += 1;
        if let Some((tau, neuron)) = crossing {
            let mut y_event = step.eval(tau);
            let at_event = ParamVector {
                theta: y_event.clone(),
                shape,
            };
            // Simultaneous crossings freeze together so sample times stay
            // strictly increasing.
            let hits: Vec<usize> = (1..=shape.h)
                .filter(|i| !frozen.contains(i))
                .filter(|&i| i == neuron || at_event.input_size(i) <= cfg.eps_deg)
                .collect();
            for &i in &hits {
                for j in 1..=shape.d {
                    y_event[at_event.w_index(i, j)] = 0.0;
                }
                y_event[at_event.b_index(i)] = 0.0;
                frozen.push(i);
                events.push((tau, i));
            }
            frozen.sort_unstable();
            let mut truncated = step;
            truncated.t_end = tau;
            dense.push(truncated);
            t = tau;
            y = y_event;
            k1 = field.eval(&y, &frozen)?;
            push_sample(p, &mut samples, t, &y, &k1, shape)?;
            if norm(&k1) <= cfg.g_tol {
                stop = StopReason::GradientTol;
                break;
            }
            continue;
        }

        dense.push(step);
        t += h;
        y = y1;
        k1 = k7;
        push_sample(p, &mut samples, t, &y, &k1, shape)?;
        if norm(&k1) <= cfg.g_tol {
            stop = StopReason::GradientTol;
            break;
        }
        h *= (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
    }

    Ok(Trajectory {
        samples,
        events,
        dense,
        config: *cfg,
        stop,
    })
}

fn push_sample(
    p: &Problem,
    samples: &mut Vec<Sample>,
    t: f64,
    y: &[f64],
    field_value: &[f64],
    shape: crate::network::NetworkShape,
) -> Result<(), RiskError> {
    let theta = ParamVector {
        theta: y.to_vec(),
        shape,
    };
    let loss = risk(p, &theta)?;
    samples.push(Sample {
        t,
        theta: y.to_vec(),
        loss,
        gnorm: norm(field_value),
        degenerate: degenerate_set(&theta),
    });
    Ok(())
}

fn initial_step(y: &[f64], f: &[f64], cfg: &SolverConfig) -> f64 {
    let scale = (1.0 + norm(y)) / (1.0 + norm(f));
    (1e-3 * scale).clamp(1e-10, cfg.t_max.min(0.04))
}

/// Project any neuron already inside the threshold at start time.
fn project_threshold_neurons(
    y: &mut [f64],
    frozen: &mut Vec<usize>,
    theta0: &ParamVector,
    eps_deg: f64,
) {
    for i in 1..=theta0.shape.h {
        if frozen.contains(&i) {
            continue;
        }
        if theta0.input_size(i) <= eps_deg {
            for j in 1..=theta0.shape.d {
                y[theta0.w_index(i, j)] = 0.0;
            }
            y[theta0.b_index(i)] = 0.0;
            frozen.push(i);
        }
    }
    frozen.sort_unstable();
}

/// First time within the step at which neuron `i` reaches the threshold,
/// or `None` when it stays above throughout.
///
/// Candidate times are the step end plus the interior sign-change roots of
/// each input component on dense output: the input size `|b| + sum |w|` can
/// dip through the threshold only where components vanish, so those roots
/// catch crossings far narrower than the step. The first crossing is then
/// bisected to 1e-12 time units.
fn first_threshold_time(
    step: &DenseStep,
    shape: crate::network::NetworkShape,
    i: usize,
    eps: f64,
    y0: &[f64],
    y1: &[f64],
) -> Option<f64> {
    let probe = ParamVector {
        theta: y0.to_vec(),
        shape,
    };
    let size_at = |t: f64| {
        let theta = ParamVector {
            theta: step.eval(t),
            shape,
        };
        theta.input_size(i)
    };
    let t1 = step.t0 + step.h;
    let mut component_idx: Vec<usize> = (1..=shape.d).map(|j| probe.w_index(i, j)).collect();
    component_idx.push(probe.b_index(i));

    let mut candidates: Vec<f64> = Vec::new();
    if size_at(t1) <= eps {
        candidates.push(t1);
    }
    for &ci in &component_idx {
        let (a, b) = (y0[ci], y1[ci]);
        if (a > 0.0 && b < 0.0) || (a < 0.0 && b > 0.0) {
            let root = bisect_root(|t| step.eval(t)[ci], step.t0, t1, a);
            if size_at(root) <= eps {
                candidates.push(root);
            }
        }
    }
    let hit = candidates.iter().cloned().fold(f64::INFINITY, f64::min);
    if !hit.is_finite() {
        return None;
    }
    // First crossing: the size exceeds eps at t0 and meets it at `hit`.
    let mut lo = step.t0;
    let mut hi = hit;
    if size_at(lo) <= eps {
        return Some(lo);
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if size_at(mid) <= eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

fn bisect_root<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, f_lo: f64) -> f64 {
    let positive_at_lo = f_lo > 0.0;
    for _ in 0..80 {
        if hi - lo <= 1e-14 * (1.0 + hi.abs()) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        if (v > 0.0) == positive_at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Defect of the energy identity: the loss drop must equal the integrated
/// squared gradient norm along the flow.
pub fn energy_residual(p: &Problem, traj: &Trajectory) -> Result<f64, RiskError> {
    assert!(!traj.samples.is_empty(), "trajectory must be nonempty");
    let rule = gauss_legendre(5);
    let shape = p.shape;
    let mut integral = 0.0;
    for step in &traj.dense {
        let (a, b) = (step.t0, step.t_end);
        if b <= a {
            continue;
        }
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        for (x, w) in rule.0.iter().zip(&rule.1) {
            let theta = ParamVector {
                theta: step.eval(mid + half * x),
                shape,
            };
            let g = gradient(p, &theta)?;
            integral += w * half * g.iter().map(|v| v * v).sum::<f64>();
        }
    }
    let loss0 = traj.samples.first().unwrap().loss;
    let loss_end = traj.samples.last().unwrap().loss;
    Ok((loss0 - loss_end - integral).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{
        c_only_instance, flow_instance, stationary_instance, test_rng, theta_of,
    };

    #[test]
    fn frozen_field_on_degenerate_instance() {
        let (p, _) = c_only_instance(1.0);
        let theta = theta_of(&p, &[0.0, 0.0, 5.0, 2.0]);
        let g = frozen_field(&p, &theta, &[1]).unwrap();
        assert_eq!(g, vec![0.0, 0.0, 0.0, 4.0]);
    }

    #[test]
    fn frozen_field_without_freezing_matches_gradient() {
        let (p, _) = stationary_instance();
        let theta = theta_of(&p, &[1.2, -0.3, 0.8, 0.1]);
        let g = gradient(&p, &theta).unwrap();
        let f = frozen_field(&p, &theta, &[]).unwrap();
        for (a, b) in g.iter().zip(&f) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn frozen_field_forced_freeze_zeroes_wb() {
        let (p, _) = c_only_instance(0.0);
        let theta = theta_of(&p, &[1.0, 0.0, 1.0, 0.0]);
        let g = gradient(&p, &theta).unwrap();
        let f = frozen_field(&p, &theta, &[1]).unwrap();
        assert_eq!(f[0], 0.0);
        assert_eq!(f[1], 0.0);
        assert_eq!(f[2], g[2]);
        assert_eq!(f[3], g[3]);
    }

    #[test]
    fn c_only_flow_matches_exponential() {
        let (p, theta0) = c_only_instance(1.0);
        let cfg = SolverConfig {
            t_max: 5.0,
            ..SolverConfig::default()
        };
        let traj = solve(&p, &theta0, &cfg).unwrap();
        let mut max_err: f64 = 0.0;
        for s in &traj.samples {
            let exact = (-2.0 * s.t).exp();
            max_err = max_err.max((s.theta[3] - exact).abs());
            // w, b, v stay bitwise zero
            assert_eq!(s.theta[0].to_bits(), 0.0f64.to_bits());
            assert_eq!(s.theta[1].to_bits(), 0.0f64.to_bits());
            assert_eq!(s.theta[2].to_bits(), 0.0f64.to_bits());
        }
        assert!(max_err <= 1e-8, "max error {max_err}");
    }

    #[test]
    fn stationary_point_stays_put() {
        let (p, theta0) = stationary_instance();
        let traj = solve(&p, &theta0, &SolverConfig::default()).unwrap();
        assert_eq!(traj.stop, StopReason::GradientTol);
        let end = traj.final_state();
        assert_eq!(end.theta, theta0.theta);
        assert_eq!(end.gnorm, 0.0);
    }

    #[test]
    fn single_neuron_flow_decreases_loss_and_satisfies_energy_identity() {
        let (p, _) = c_only_instance(0.0);
        let theta0 = theta_of(&p, &[1.0, 0.0, 1.0, 0.0]);
        let traj = solve(&p, &theta0, &SolverConfig::default()).unwrap();
        assert!((traj.samples[0].loss - 1.0 / 3.0).abs() < 1e-15);
        for w in traj.samples.windows(2) {
            assert!(w[1].loss <= w[0].loss + 1e-10 * (1.0 + traj.samples[0].loss));
        }
        let res = energy_residual(&p, &traj).unwrap();
        assert!(res <= 1e-6, "energy residual {res}");
    }

    #[test]
    fn energy_residual_of_stationary_trajectory_is_zero() {
        let (p, theta0) = stationary_instance();
        let traj = solve(&p, &theta0, &SolverConfig::default()).unwrap();
        assert!(energy_residual(&p, &traj).unwrap() <= 1e-14);
    }

    #[test]
    fn c_only_energy_identity_closed_form() {
        let (p, theta0) = c_only_instance(1.0);
        let cfg = SolverConfig {
            t_max: 5.0,
            ..SolverConfig::default()
        };
        let traj = solve(&p, &theta0, &cfg).unwrap();
        let res = energy_residual(&p, &traj).unwrap();
        assert!(res <= 1e-8, "residual {res}");
        let drop = traj.samples[0].loss - traj.final_state().loss;
        assert!((drop - (1.0 - (-20.0f64).exp())).abs() <= 1e-8);
    }

    #[test]
    fn runs_are_bitwise_deterministic() {
        let mut rng = test_rng(61);
        let (p, theta0) = flow_instance(&mut rng, 2);
        let cfg = SolverConfig {
            t_max: 3.0,
            ..SolverConfig::default()
        };
        let a = solve(&p, &theta0, &cfg).unwrap();
        let b = solve(&p, &theta0, &cfg).unwrap();
        assert_eq!(a.samples.len(), b.samples.len());
        for (sa, sb) in a.samples.iter().zip(&b.samples) {
            assert_eq!(sa.t.to_bits(), sb.t.to_bits());
            for (xa, xb) in sa.theta.iter().zip(&sb.theta) {
                assert_eq!(xa.to_bits(), xb.to_bits());
            }
        }
    }

    #[test]
    fn tolerance_halving_changes_endpoint_little() {
        let mut rng = test_rng(67);
        let (p, theta0) = flow_instance(&mut rng, 2);
        let cfg = SolverConfig {
            t_max: 5.0,
            ..SolverConfig::default()
        };
        let tight = SolverConfig {
            rel_tol: cfg.rel_tol / 2.0,
            abs_tol: cfg.abs_tol / 2.0,
            ..cfg
        };
        let a = solve(&p, &theta0, &cfg).unwrap();
        let b = solve(&p, &theta0, &tight).unwrap();
        let ya = a.eval(5.0);
        let yb = b.eval(5.0);
        let dist = ya
            .iter()
            .zip(&yb)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        assert!(dist <= 1e-6, "distance {dist}");
    }

    #[test]
    fn monotone_degeneracy_along_runs() {
        let mut rng = test_rng(71);
        for k in 0..5 {
            let (p, theta0) = flow_instance(&mut rng, k % 3 + 1);
            let cfg = SolverConfig {
                t_max: 3.0,
                ..SolverConfig::default()
            };
            let traj = solve(&p, &theta0, &cfg).unwrap();
            for w in traj.samples.windows(2) {
                assert!(
                    w[0].degenerate.iter().all(|i| w[1].degenerate.contains(i)),
                    "degenerate set must not shrink"
                );
            }
        }
    }

    #[test]
    fn dense_output_matches_samples_at_endpoints() {
        let (p, theta0) = c_only_instance(1.0);
        let traj = solve(&p, &theta0, &SolverConfig::default()).unwrap();
        for s in &traj.samples {
            let y = traj.eval(s.t);
            for (a, b) in y.iter().zip(&s.theta) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
