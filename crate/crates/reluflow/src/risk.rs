//! Closed-form evaluation of the L2 risk and its generalized gradient.
//!
//! In one input dimension the domain is partitioned at the neuron kinks and
//! the breakpoints of the target and density; on each cell the integrand is a
//! single polynomial and is integrated exactly in rational arithmetic. Higher
//! dimensions go through the variable-elimination engine or the quadrature
//! oracle. The generalized gradient takes the one-sided convention at the
//! kink: components attached to a neuron with all input parameters exactly
//! zero are exactly 0.0.

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::network::{degenerate_set, realize, NetworkShape, ParamVector};
use crate::poly::{canonicalize_1d, Breakline1D, PiecewisePoly, PolyError, UniPoly};
use crate::quadrature::{
    adaptive_1d, adaptive_cubature, gl_integrate_cells, normalize_breaks, QuadratureError,
};
use crate::rational::{rat_from_f64, rat_to_f64};
use crate::semialg::{self, SemialgError};

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("evaluator {evaluator:?} does not support input dimension {d}")]
    EvaluatorDim { evaluator: Evaluator, d: usize },
    #[error(
        "target dimension {target} and density dimension {density} must equal input dimension {d}"
    )]
    DataDim {
        target: usize,
        density: usize,
        d: usize,
    },
    #[error("parameter vector does not match problem shape")]
    ShapeMismatch,
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Elimination(#[from] SemialgError),
}

/// Which route evaluates the risk integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Evaluator {
    /// Exact rational cell-wise antiderivatives; requires `d = 1`.
    #[serde(rename = "exact-1d")]
    Exact1d,
    /// Exact iterated variable elimination; requires `d <= 3`.
    #[serde(rename = "elimination")]
    Elimination,
    /// Gauss-Legendre / adaptive cubature oracle.
    #[serde(rename = "quadrature")]
    Quadrature,
}

/// `(normal, offset)` rows and `(exponents, coefficient)` monomials of one
/// compiled piece.
type CompiledPiece = (Vec<(Vec<f64>, f64)>, Vec<(Vec<u32>, f64)>);

/// Piecewise polynomial compiled to flat f64 form for fast pointwise
/// evaluation inside the quadrature routes.
#[derive(Debug, Clone)]
pub(crate) struct CompiledPp {
    pieces: Vec<CompiledPiece>,
}

impl CompiledPp {
    pub(crate) fn compile(pp: &PiecewisePoly) -> Self {
        let pieces = pp
            .pieces
            .iter()
            .map(|piece| {
                let cons = piece
                    .constraints
                    .iter()
                    .map(|c| {
                        (
                            c.normal.iter().map(rat_to_f64).collect(),
                            rat_to_f64(&c.offset),
                        )
                    })
                    .collect();
                let terms = piece
                    .poly
                    .terms()
                    .map(|(e, c)| (e.clone(), rat_to_f64(c)))
                    .collect();
                (cons, terms)
            })
            .collect();
        CompiledPp { pieces }
    }

    pub(crate) fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        'piece: for (cons, terms) in &self.pieces {
            for (normal, offset) in cons {
                let mut v = *offset;
                for (n, xi) in normal.iter().zip(x) {
                    v += n * xi;
                }
                if v < 0.0 {
                    continue 'piece;
                }
            }
            for (exps, coef) in terms {
                let mut t = *coef;
                for (j, &k) in exps.iter().enumerate() {
                    if k > 0 {
                        t *= x[j].powi(k as i32);
                    }
                }
                acc += t;
            }
        }
        acc
    }

    /// Affine constraint data as (normal, offset) rows, for arrangement cuts.
    pub(crate) fn constraint_rows(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.pieces
            .iter()
            .flat_map(|(cons, _)| cons.iter().map(|(n, o)| (n.as_slice(), *o)))
    }
}

/// Point where the density audit found a negative value.
#[derive(Debug, Clone)]
pub struct DensityWarning {
    pub point: Vec<f64>,
    pub value: f64,
}

/// A fully specified learning problem: network shape, piecewise-polynomial
/// target and unnormalized density over the input box, and the evaluator
/// route for the risk integral.
#[derive(Debug, Clone)]
pub struct Problem {
    pub shape: NetworkShape,
    pub target: PiecewisePoly,
    pub density: PiecewisePoly,
    pub evaluator: Evaluator,
    a_rat: BigRational,
    b_rat: BigRational,
    target_bl: Option<Breakline1D>,
    density_bl: Option<Breakline1D>,
    target_c: CompiledPp,
    density_c: CompiledPp,
    pub density_warning: Option<DensityWarning>,
}

impl Problem {
    pub fn new(
        shape: NetworkShape,
        target: PiecewisePoly,
        density: PiecewisePoly,
        evaluator: Evaluator,
    ) -> Result<Self, RiskError> {
        if target.dim != shape.d || density.dim != shape.d {
            return Err(RiskError::DataDim {
                target: target.dim,
                density: density.dim,
                d: shape.d,
            });
        }
        match evaluator {
            Evaluator::Exact1d if shape.d != 1 => {
                return Err(RiskError::EvaluatorDim {
                    evaluator,
                    d: shape.d,
                })
            }
            Evaluator::Elimination if shape.d > 3 => {
                return Err(RiskError::EvaluatorDim {
                    evaluator,
                    d: shape.d,
                })
            }
            _ => {}
        }
        let a_rat = rat_from_f64(shape.a);
        let b_rat = rat_from_f64(shape.b_dom);
        let (target_bl, density_bl) = if shape.d == 1 {
            (
                Some(canonicalize_1d(&target, &a_rat, &b_rat)?),
                Some(canonicalize_1d(&density, &a_rat, &b_rat)?),
            )
        } else {
            (None, None)
        };
        let target_c = CompiledPp::compile(&target);
        let density_c = CompiledPp::compile(&density);
        let mut problem = Problem {
            shape,
            target,
            density,
            evaluator,
            a_rat,
            b_rat,
            target_bl,
            density_bl,
            target_c,
            density_c,
            density_warning: None,
        };
        problem.density_warning = problem.audit_density(10_000);
        Ok(problem)
    }

    pub fn with_evaluator(&self, evaluator: Evaluator) -> Result<Self, RiskError> {
        Problem::new(
            self.shape,
            self.target.clone(),
            self.density.clone(),
            evaluator,
        )
    }

    pub fn domain_rat(&self) -> (&BigRational, &BigRational) {
        (&self.a_rat, &self.b_rat)
    }

    /// Sample the density on a quasi-random lattice; a markedly negative
    /// value is reported as a warning (deciding global nonnegativity of a
    /// polynomial is out of scope).
    fn audit_density(&self, n: usize) -> Option<DensityWarning> {
        let irrationals = [
            0.618_033_988_749_894_9_f64, // 1/phi
            std::f64::consts::SQRT_2 - 1.0,
            3f64.sqrt() - 1.0,
        ];
        let d = self.shape.d;
        let (a, b) = (self.shape.a, self.shape.b_dom);
        let mut worst: Option<DensityWarning> = None;
        for k in 0..n {
            let x: Vec<f64> = (0..d)
                .map(|j| {
                    let t = ((k + 1) as f64 * irrationals[j % 3]).fract();
                    a + (b - a) * t
                })
                .collect();
            let v = self.density_c.eval(&x);
            if v < -1e-12 && worst.as_ref().is_none_or(|w| v < w.value) {
                worst = Some(DensityWarning { point: x, value: v });
            }
        }
        worst
    }

    fn check_theta(&self, theta: &ParamVector) -> Result<(), RiskError> {
        if theta.shape.d != self.shape.d
            || theta.shape.h != self.shape.h
            || theta.dim() != self.shape.param_count()
        {
            return Err(RiskError::ShapeMismatch);
        }
        Ok(())
    }
}

/// Exact per-cell data for the 1-d closed-form route.
struct Cells {
    breaks: Vec<BigRational>,
    /// For each cell: density polynomial, target polynomial, active neurons.
    cells: Vec<(UniPoly, UniPoly, Vec<usize>)>,
}

fn build_cells(p: &Problem, theta: &ParamVector) -> Cells {
    let tb = p.target_bl.as_ref().expect("1-d route requires d = 1");
    let db = p.density_bl.as_ref().unwrap();
    let h = p.shape.h;
    let w_rat: Vec<BigRational> = (1..=h).map(|i| rat_from_f64(theta.w(i, 1))).collect();
    let b_rat: Vec<BigRational> = (1..=h).map(|i| rat_from_f64(theta.b(i))).collect();

    let mut breaks: Vec<BigRational> = tb.breaks.clone();
    breaks.extend(db.breaks.iter().cloned());
    for i in 0..h {
        if !w_rat[i].is_zero() {
            let root = -&b_rat[i] / &w_rat[i];
            if root > p.a_rat && root < p.b_rat {
                breaks.push(root);
            }
        }
    }
    breaks.sort();
    breaks.dedup();

    let two = BigRational::from_integer(2.into());
    let locate = |bl: &Breakline1D, mid: &BigRational| -> UniPoly {
        let idx = bl.breaks.partition_point(|b| b <= mid);
        bl.polys[idx.saturating_sub(1).min(bl.polys.len() - 1)].clone()
    };
    let cells = breaks
        .windows(2)
        .map(|w| {
            let mid = (&w[0] + &w[1]) / &two;
            let fpoly = locate(tb, &mid);
            let ppoly = locate(db, &mid);
            let active: Vec<usize> = (0..h)
                .filter(|&i| {
                    let pre = &w_rat[i] * &mid + &b_rat[i];
                    pre.is_positive()
                })
                .map(|i| i + 1)
                .collect();
            (ppoly, fpoly, active)
        })
        .collect();
    Cells { breaks, cells }
}

/// Closed-form risk and generalized gradient over the exact cell partition.
///
/// Returns `(risk, gradient)` as rationals; the gradient entries for neurons
/// with empty active regions are never touched and stay exactly zero.
fn exact_1d_eval(
    p: &Problem,
    theta: &ParamVector,
    want_risk: bool,
    want_grad: bool,
) -> (BigRational, Vec<BigRational>) {
    let cells = build_cells(p, theta);
    let h = p.shape.h;
    let c_rat = rat_from_f64(theta.c());
    let w_rat: Vec<BigRational> = (1..=h).map(|i| rat_from_f64(theta.w(i, 1))).collect();
    let b_rat: Vec<BigRational> = (1..=h).map(|i| rat_from_f64(theta.b(i))).collect();
    let v_rat: Vec<BigRational> = (1..=h).map(|i| rat_from_f64(theta.v(i))).collect();

    let mut risk_acc = BigRational::zero();
    let mut grad = vec![BigRational::zero(); theta.dim()];
    let two = BigRational::from_integer(2.into());

    for (k, (ppoly, fpoly, active)) in cells.cells.iter().enumerate() {
        let lo = &cells.breaks[k];
        let hi = &cells.breaks[k + 1];
        // Network restricted to this cell: c + sum over active neurons of
        // v_i (b_i + w_i x), an affine polynomial.
        let mut net = UniPoly::constant(c_rat.clone());
        for &i in active {
            let lin = UniPoly::linear(b_rat[i - 1].clone(), w_rat[i - 1].clone());
            net = net.add(&lin.scale(&v_rat[i - 1]));
        }
        let residual = net.sub(fpoly);
        let weighted = residual.mul(ppoly);
        if want_risk {
            risk_acc += residual.mul(&weighted).integrate(lo, hi);
        }
        if want_grad {
            let m0 = weighted.integrate(lo, hi);
            let m1 = weighted
                .mul(&UniPoly::linear(
                    BigRational::zero(),
                    BigRational::from_integer(1.into()),
                ))
                .integrate(lo, hi);
            grad[theta.c_index()] += &two * &m0;
            for &i in active {
                let wi = &w_rat[i - 1];
                let bi = &b_rat[i - 1];
                let vi = &v_rat[i - 1];
                grad[theta.w_index(i, 1)] += &two * vi * &m1;
                grad[theta.b_index(i)] += &two * vi * &m0;
                grad[theta.v_index(i)] += &two * (wi * &m1 + bi * &m0);
            }
        }
    }
    (risk_acc, grad)
}

/// Risk value through the problem's configured evaluator.
pub fn risk(p: &Problem, theta: &ParamVector) -> Result<f64, RiskError> {
    p.check_theta(theta)?;
    match p.evaluator {
        Evaluator::Exact1d => {
            let (r, _) = exact_1d_eval(p, theta, true, false);
            Ok(rat_to_f64(&r))
        }
        Evaluator::Elimination => Ok(semialg::risk_by_elimination(p, theta)?),
        Evaluator::Quadrature => Ok(quadrature_risk(p, theta)),
    }
}

/// Exact rational risk (1-d closed-form route), for callers that need the
/// unrounded value.
pub fn risk_exact(p: &Problem, theta: &ParamVector) -> Result<BigRational, RiskError> {
    p.check_theta(theta)?;
    if p.shape.d != 1 {
        return Err(RiskError::EvaluatorDim {
            evaluator: Evaluator::Exact1d,
            d: p.shape.d,
        });
    }
    Ok(exact_1d_eval(p, theta, true, false).0)
}

/// Generalized gradient through the problem's configured evaluator.
///
/// Componentwise it is the closed-form limit of the smoothed-risk gradients:
/// integrals of the weighted residual over each neuron's active region, with
/// exactly-zero entries for degenerate neurons.
pub fn gradient(p: &Problem, theta: &ParamVector) -> Result<Vec<f64>, RiskError> {
    p.check_theta(theta)?;
    match p.evaluator {
        Evaluator::Exact1d => {
            let (_, g) = exact_1d_eval(p, theta, false, true);
            Ok(g.iter().map(rat_to_f64).collect())
        }
        Evaluator::Elimination => Ok(semialg::gradient_by_elimination(p, theta)?),
        Evaluator::Quadrature => Ok(quadrature_gradient(p, theta)),
    }
}

/// Both risk and gradient in one pass (shared cell partition).
pub fn risk_and_gradient(p: &Problem, theta: &ParamVector) -> Result<(f64, Vec<f64>), RiskError> {
    p.check_theta(theta)?;
    match p.evaluator {
        Evaluator::Exact1d => {
            let (r, g) = exact_1d_eval(p, theta, true, true);
            Ok((rat_to_f64(&r), g.iter().map(rat_to_f64).collect()))
        }
        _ => Ok((risk(p, theta)?, gradient(p, theta)?)),
    }
}

// ---------------------------------------------------------------------------
// Quadrature route (independent oracle)
// ---------------------------------------------------------------------------

fn residual_sq_density<'a>(p: &'a Problem, theta: &ParamVector) -> impl Fn(&[f64]) -> f64 + 'a {
    let theta = theta.clone();
    move |x: &[f64]| {
        let r = realize(&theta, x) - p.target_c.eval(x);
        r * r * p.density_c.eval(x)
    }
}

fn kink_cuts_1d(p: &Problem, theta: &ParamVector) -> Vec<f64> {
    let mut cuts = Vec::new();
    for i in 1..=p.shape.h {
        let w = theta.w(i, 1);
        if w != 0.0 {
            cuts.push(-theta.b(i) / w);
        }
    }
    for (normal, offset) in p
        .target_c
        .constraint_rows()
        .chain(p.density_c.constraint_rows())
    {
        if normal[0] != 0.0 {
            cuts.push(-offset / normal[0]);
        }
    }
    cuts
}

/// All arrangement lines for d = 2: piece constraints plus neuron kinks,
/// as `(n1, n2, offset)` with the line `n1 x1 + n2 x2 + offset = 0`.
fn lines_2d(p: &Problem, theta: &ParamVector) -> Vec<(f64, f64, f64)> {
    let mut lines = Vec::new();
    for (normal, offset) in p
        .target_c
        .constraint_rows()
        .chain(p.density_c.constraint_rows())
    {
        if normal[0] != 0.0 || normal[1] != 0.0 {
            lines.push((normal[0], normal[1], offset));
        }
    }
    for i in 1..=p.shape.h {
        let w = theta.w_row(i);
        if w[0] != 0.0 || w[1] != 0.0 {
            lines.push((w[0], w[1], theta.b(i)));
        }
    }
    lines
}

/// Tensor Gauss-Legendre over the cells of a 2-d line arrangement: outer
/// cells cut at projected vertices and edge crossings, inner fibers cut where
/// each line crosses the vertical section. On every such cell the integrand
/// is one polynomial, so order 30 is exact through degree 59.
fn integrate_arrangement_2d<F: Fn(&[f64]) -> f64>(
    lines: &[(f64, f64, f64)],
    a: f64,
    b: f64,
    f: &F,
) -> f64 {
    let mut x_cuts = Vec::new();
    for (k, &(n1, n2, o)) in lines.iter().enumerate() {
        // crossings with the horizontal edges y = a and y = b
        if n1 != 0.0 {
            x_cuts.push(-(n2 * a + o) / n1);
            x_cuts.push(-(n2 * b + o) / n1);
        }
        // pairwise intersections projected to the x1 axis
        for &(m1, m2, q) in &lines[k + 1..] {
            let det = n1 * m2 - n2 * m1;
            if det.abs() > 1e-300 {
                let x = (n2 * q - m2 * o) / det;
                x_cuts.push(x);
            }
        }
    }
    let x_breaks = normalize_breaks(x_cuts, a, b);
    let inner = |x1: f64| {
        let y_cuts: Vec<f64> = lines
            .iter()
            .filter(|(_, n2, _)| *n2 != 0.0)
            .map(|(n1, n2, o)| -(o + n1 * x1) / n2)
            .collect();
        let y_breaks = normalize_breaks(y_cuts, a, b);
        gl_integrate_cells(|x2| f(&[x1, x2]), &y_breaks, 30)
    };
    gl_integrate_cells(inner, &x_breaks, 30)
}

fn quadrature_risk(p: &Problem, theta: &ParamVector) -> f64 {
    let f = residual_sq_density(p, theta);
    match p.shape.d {
        1 => {
            let breaks = normalize_breaks(kink_cuts_1d(p, theta), p.shape.a, p.shape.b_dom);
            gl_integrate_cells(|x| f(&[x]), &breaks, 30)
        }
        2 => integrate_arrangement_2d(&lines_2d(p, theta), p.shape.a, p.shape.b_dom, &f),
        _ => {
            let d = p.shape.d;
            let lo = vec![p.shape.a; d];
            let hi = vec![p.shape.b_dom; d];
            let (v, _err) = adaptive_cubature(&f, &lo, &hi, 1e-9, 60_000);
            v
        }
    }
}

fn quadrature_gradient(p: &Problem, theta: &ParamVector) -> Vec<f64> {
    let d = p.shape.d;
    let h = p.shape.h;
    let theta_own = theta.clone();
    let mut grad = vec![0.0; theta.dim()];
    let component = |idx_kind: GradComponent, x: &[f64]| -> f64 {
        let residual = realize(&theta_own, x) - p.target_c.eval(x);
        let dens = p.density_c.eval(x);
        match idx_kind {
            GradComponent::W(i, j) => {
                let pre = theta_own.preactivation(i, x);
                if pre > 0.0 {
                    2.0 * theta_own.v(i) * x[j - 1] * residual * dens
                } else {
                    0.0
                }
            }
            GradComponent::B(i) => {
                let pre = theta_own.preactivation(i, x);
                if pre > 0.0 {
                    2.0 * theta_own.v(i) * residual * dens
                } else {
                    0.0
                }
            }
            GradComponent::V(i) => {
                let pre = theta_own.preactivation(i, x);
                2.0 * pre.max(0.0) * residual * dens
            }
            GradComponent::C => 2.0 * residual * dens,
        }
    };
    let integrate = |g: &dyn Fn(&[f64]) -> f64| -> f64 {
        match d {
            1 => {
                let breaks = normalize_breaks(kink_cuts_1d(p, theta), p.shape.a, p.shape.b_dom);
                gl_integrate_cells(|x| g(&[x]), &breaks, 30)
            }
            2 => integrate_arrangement_2d(&lines_2d(p, theta), p.shape.a, p.shape.b_dom, &g),
            _ => {
                let lo = vec![p.shape.a; d];
                let hi = vec![p.shape.b_dom; d];
                adaptive_cubature(&|x: &[f64]| g(x), &lo, &hi, 1e-8, 40_000).0
            }
        }
    };
    let degen = degenerate_set(theta);
    for i in 1..=h {
        if degen.contains(&i) {
            continue; // components stay exactly 0.0
        }
        for j in 1..=d {
            grad[theta.w_index(i, j)] = integrate(&|x| component(GradComponent::W(i, j), x));
        }
        grad[theta.b_index(i)] = integrate(&|x| component(GradComponent::B(i), x));
        grad[theta.v_index(i)] = integrate(&|x| component(GradComponent::V(i), x));
    }
    grad[theta.c_index()] = integrate(&|x| component(GradComponent::C, x));
    grad
}

#[derive(Clone, Copy)]
enum GradComponent {
    W(usize, usize),
    B(usize),
    V(usize),
    C,
}

// ---------------------------------------------------------------------------
// Smoothed surrogates
// ---------------------------------------------------------------------------

/// Family of C1 surrogates for the ReLU: shifted softplus
/// `R_r(x) = ln(1 + exp(r (x - s)))/r` with shift `s = r^{-gamma}`.
///
/// The shift makes the derivative converge pointwise to the left-continuous
/// step (value 0 at the kink) while keeping `0 <= R_r' <= 1` uniformly; the
/// exponent trades the bulk offset `r^{-gamma}` (which bounds the gradient
/// deviation) against the speed of that derivative limit and is fixed at
/// 19/20.
#[derive(Debug, Clone, Copy)]
pub struct SmoothedFamily {
    pub gamma: f64,
}

impl Default for SmoothedFamily {
    fn default() -> Self {
        SmoothedFamily { gamma: 0.95 }
    }
}

impl SmoothedFamily {
    pub fn shift(&self, r: f64) -> f64 {
        r.powf(-self.gamma)
    }

    /// Surrogate value, numerically stable for large `r x`.
    pub fn rect(&self, r: f64, x: f64) -> f64 {
        let y = r * (x - self.shift(r));
        (y.max(0.0) + (-y.abs()).exp().ln_1p()) / r
    }

    /// Surrogate derivative: logistic step `sigma(r (x - s))`.
    pub fn rect_prime(&self, r: f64, x: f64) -> f64 {
        let y = r * (x - self.shift(r));
        if y >= 0.0 {
            1.0 / (1.0 + (-y).exp())
        } else {
            let e = y.exp();
            e / (1.0 + e)
        }
    }
}

/// Gradient of the smoothed risk, by adaptive quadrature of the analytically
/// differentiated integrand (tolerance 1e-10 per component). Approximate by
/// construction; d = 1 only.
pub fn smoothed_gradient(p: &Problem, theta: &ParamVector, r: f64) -> Result<Vec<f64>, RiskError> {
    p.check_theta(theta)?;
    assert!(r >= 1.0, "smoothing index must satisfy r >= 1");
    if p.shape.d != 1 {
        return Err(RiskError::EvaluatorDim {
            evaluator: Evaluator::Quadrature,
            d: p.shape.d,
        });
    }
    let fam = SmoothedFamily::default();
    let h = p.shape.h;
    let mut cuts = kink_cuts_1d(p, theta);
    // transition centers of the surrogates
    for i in 1..=h {
        let w = theta.w(i, 1);
        if w != 0.0 {
            cuts.push((fam.shift(r) - theta.b(i)) / w);
        }
    }
    let breaks = normalize_breaks(cuts, p.shape.a, p.shape.b_dom);

    let smooth_net = |x: f64| -> f64 {
        let mut acc = theta.c();
        for i in 1..=h {
            acc += theta.v(i) * fam.rect(r, theta.preactivation(i, &[x]));
        }
        acc
    };
    let residual = |x: f64| smooth_net(x) - p.target_c.eval(&[x]);

    let mut grad = vec![0.0; theta.dim()];
    for i in 1..=h {
        let gi = |x: f64| {
            let pre = theta.preactivation(i, &[x]);
            2.0 * theta.v(i) * fam.rect_prime(r, pre) * residual(x) * p.density_c.eval(&[x])
        };
        grad[theta.w_index(i, 1)] = adaptive_1d(&|x| gi(x) * x, &breaks, 1e-10)?;
        grad[theta.b_index(i)] = adaptive_1d(&gi, &breaks, 1e-10)?;
        let gv = |x: f64| {
            let pre = theta.preactivation(i, &[x]);
            2.0 * fam.rect(r, pre) * residual(x) * p.density_c.eval(&[x])
        };
        grad[theta.v_index(i)] = adaptive_1d(&gv, &breaks, 1e-10)?;
    }
    grad[theta.c_index()] = adaptive_1d(
        &|x| 2.0 * residual(x) * p.density_c.eval(&[x]),
        &breaks,
        1e-10,
    )?;
    Ok(grad)
}

// ---------------------------------------------------------------------------
// Limiting-subdifferential witness
// ---------------------------------------------------------------------------

/// Residual sequence of the subdifferential witness construction.
#[derive(Debug, Clone)]
pub struct WitnessResult {
    pub residuals: Vec<f64>,
    pub final_residual: f64,
}

/// Witness that the generalized gradient is a limiting subdifferential
/// element: perturb each degenerate neuron's bias by `-1/n` (which leaves
/// every active region empty but makes the risk differentiable there) and
/// record the gradient residual along the sequence.
pub fn subdiff_witness(
    p: &Problem,
    theta: &ParamVector,
    n: usize,
) -> Result<WitnessResult, RiskError> {
    assert!(n >= 2, "witness needs at least two perturbation steps");
    p.check_theta(theta)?;
    let base = gradient(p, theta)?;
    let degen = degenerate_set(theta);
    let mut residuals = Vec::with_capacity(n);
    for k in 1..=n {
        let mut pert = theta.clone();
        for &i in &degen {
            let idx = pert.b_index(i);
            pert.theta[idx] = theta.b(i) - 1.0 / k as f64;
        }
        debug_assert!(degenerate_set(&pert).is_empty() || degen.is_empty());
        let g = gradient(p, &pert)?;
        let dist = g
            .iter()
            .zip(&base)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        residuals.push(dist);
    }
    let final_residual = *residuals.last().unwrap();
    Ok(WitnessResult {
        residuals,
        final_residual,
    })
}
