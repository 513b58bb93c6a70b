//! Seeded random problem instances for cross-checks, gradient verification,
//! and flow suites. All generators are deterministic in the seed.

use num_rational::BigRational;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::network::{NetworkShape, ParamVector};
use crate::poly::{AffineConstraint, Piece, PiecewisePoly, Poly};
use crate::rational::rat_from_f64;
use crate::risk::{Evaluator, Problem};

pub fn test_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Convenience constructor for a parameter vector matching a problem shape.
pub fn theta_of(p: &Problem, vals: &[f64]) -> ParamVector {
    ParamVector::new(p.shape, vals.to_vec()).expect("theta length must match shape")
}

fn rat(x: f64) -> BigRational {
    rat_from_f64(x)
}

/// Random polynomial of the given degree with coefficients in `[-scale, scale]`.
fn random_poly(rng: &mut ChaCha8Rng, dim: usize, degree: u32, scale: f64) -> Poly {
    let mut p = Poly::zero(dim);
    match dim {
        1 => {
            for k in 0..=degree {
                p.add_term(vec![k], rat(rng.gen_range(-scale..scale)));
            }
        }
        _ => {
            // total degree <= degree, sparse
            p.add_term(vec![0; dim], rat(rng.gen_range(-scale..scale)));
            for _ in 0..(dim as u32 + degree) {
                let mut e = vec![0u32; dim];
                let mut left = degree;
                for ej in e.iter_mut() {
                    let k = rng.gen_range(0..=left);
                    *ej = k;
                    left -= k;
                }
                p.add_term(e, rat(rng.gen_range(-scale..scale)));
            }
        }
    }
    p
}

/// Positive polynomial on `[a,b]^dim`: constant term dominating an interval
/// bound on the non-constant part.
fn positive_poly(rng: &mut ChaCha8Rng, dim: usize, a: f64, b: f64) -> Poly {
    let m = a.abs().max(b.abs()).max(1.0);
    let c0 = rng.gen_range(0.3..1.2);
    let budget = (c0 - 0.05) / (2.0 * m * m * dim as f64);
    let mut p = Poly::constant(dim, rat(c0));
    for j in 0..dim {
        let mut e1 = vec![0u32; dim];
        e1[j] = 1;
        p.add_term(e1, rat(rng.gen_range(-budget..budget)));
        let mut e2 = vec![0u32; dim];
        e2[j] = 2;
        p.add_term(e2, rat(rng.gen_range(-budget..budget)));
    }
    p
}

/// Breakpoints of the target/density data of a 1-d problem (constraint roots
/// plus domain endpoints), in f64.
fn data_breakpoints(p: &PiecewisePoly, a: f64, b: f64) -> Vec<f64> {
    let mut cuts = vec![a, b];
    for piece in &p.pieces {
        for c in &piece.constraints {
            let n = crate::rational::rat_to_f64(&c.normal[0]);
            if n != 0.0 {
                let root = -crate::rational::rat_to_f64(&c.offset) / n;
                if root > a && root < b {
                    cuts.push(root);
                }
            }
        }
    }
    cuts
}

/// Random 1-d problem with the stated hidden width: target with up to 3
/// pieces (degree <= 3), nonnegative density with up to 2 pieces, and a
/// non-degenerate parameter vector whose kinks stay at least 1e-3 away from
/// the data breakpoints, the domain endpoints, and each other.
pub fn problem_1d(rng: &mut ChaCha8Rng, h: usize) -> (Problem, ParamVector) {
    let (a, b) = if rng.gen_bool(0.7) {
        (0.0, 1.0)
    } else {
        (-1.0, 1.0)
    };
    let shape = NetworkShape::new(1, h, a, b).unwrap();

    let n_target_pieces = rng.gen_range(1..=3);
    let deg0 = rng.gen_range(0..=3);
    let mut target_pieces = vec![Piece {
        constraints: vec![],
        poly: random_poly(rng, 1, deg0, 1.0),
    }];
    for _ in 1..n_target_pieces {
        let t = rng.gen_range(a + 0.1..b - 0.1);
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let deg = rng.gen_range(0..=2);
        target_pieces.push(Piece {
            constraints: vec![AffineConstraint::new(vec![rat(sign)], rat(-sign * t))],
            poly: random_poly(rng, 1, deg, 0.8),
        });
    }
    let target = PiecewisePoly::new(1, target_pieces);

    let mut density_pieces = vec![Piece {
        constraints: vec![],
        poly: positive_poly(rng, 1, a, b),
    }];
    if rng.gen_bool(0.5) {
        let t = rng.gen_range(a + 0.1..b - 0.1);
        density_pieces.push(Piece {
            constraints: vec![AffineConstraint::new(vec![rat(1.0)], rat(-t))],
            poly: positive_poly(rng, 1, a, b).scale(&crate::rational::rat_i64(1, 3)),
        });
    }
    let density = PiecewisePoly::new(1, density_pieces);

    let problem = Problem::new(shape, target, density, Evaluator::Exact1d).unwrap();
    debug_assert!(problem.density_warning.is_none());

    let data_cuts = {
        let mut cuts = data_breakpoints(&problem.target, a, b);
        cuts.extend(data_breakpoints(&problem.density, a, b));
        cuts
    };

    // Rejection-sample a parameter vector with well-separated kinks.
    let theta = 'search: {
        for _ in 0..200 {
            let mut vals = vec![0.0; shape.param_count()];
            let mut kinks: Vec<f64> = Vec::new();
            let mut ok = true;
            for i in 0..h {
                let w = rng.gen_range(0.4..1.6) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let kink = if rng.gen_bool(0.75) {
                    rng.gen_range(a + 0.05..b - 0.05)
                } else {
                    b + rng.gen_range(0.1..1.0)
                };
                let bias = -w * kink;
                vals[i] = w;
                vals[h + i] = bias;
                vals[2 * h + i] =
                    rng.gen_range(0.3..1.2) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let sep_ok = data_cuts.iter().all(|t| (kink - t).abs() >= 1e-3)
                    && kinks.iter().all(|t| (kink - t).abs() >= 1e-3);
                if !sep_ok {
                    ok = false;
                    break;
                }
                kinks.push(kink);
            }
            if !ok {
                continue;
            }
            vals[shape.param_count() - 1] = rng.gen_range(-0.5..0.5);
            break 'search ParamVector::new(shape, vals).unwrap();
        }
        panic!("kink separation rejection sampling exhausted");
    };
    (problem, theta)
}

/// Random problem in d = 2 or 3 for the elimination/quadrature cross-checks.
///
/// In d = 2 the target may carry affine-gated pieces (the arrangement
/// quadrature cuts cells along every gate line exactly); in d = 3 the data
/// are single global polynomials so the cubature faces a C1 integrand, with
/// all kinks supplied by the network itself.
pub fn problem_nd(rng: &mut ChaCha8Rng, d: usize, h: usize) -> (Problem, ParamVector) {
    assert!(d == 2 || d == 3);
    let (a, b) = (0.0, 1.0);
    let shape = NetworkShape::new(d, h, a, b).unwrap();

    let mut target_pieces = vec![Piece {
        constraints: vec![],
        poly: random_poly(rng, d, 2, 0.8),
    }];
    if d == 2 && rng.gen_bool(0.6) {
        let normal = vec![rat(rng.gen_range(0.4..1.2)), rat(rng.gen_range(-1.2..1.2))];
        let offset = rat(rng.gen_range(-0.8..0.4));
        target_pieces.push(Piece {
            constraints: vec![AffineConstraint::new(normal, offset)],
            poly: random_poly(rng, d, 1, 0.6),
        });
    }
    let target = PiecewisePoly::new(d, target_pieces);
    let density = PiecewisePoly::global(positive_poly(rng, d, a, b));
    let problem = Problem::new(shape, target, density, Evaluator::Elimination).unwrap();

    let mut vals = vec![0.0; shape.param_count()];
    for i in 0..h {
        for j in 0..d {
            vals[i * d + j] = rng.gen_range(0.3..1.2) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        }
        vals[h * d + i] = rng.gen_range(-0.6..0.6);
        vals[h * (d + 1) + i] =
            rng.gen_range(0.3..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    }
    vals[shape.param_count() - 1] = rng.gen_range(-0.4..0.4);
    let theta = ParamVector::new(shape, vals).unwrap();
    (problem, theta)
}

/// Random 1-d instance suited to flow suites: smooth moderate data, kinks
/// inside the domain, parameters of unit scale.
pub fn flow_instance(rng: &mut ChaCha8Rng, h: usize) -> (Problem, ParamVector) {
    loop {
        let (p, theta) = problem_1d(rng, h);
        // Keep the flow well-scaled: moderate initial risk.
        if let Ok(r) = crate::risk::risk(&p, &theta) {
            if r < 4.0 {
                return (p, theta);
            }
        }
    }
}

/// The constant-fit instance: every hidden neuron degenerate, only the output
/// bias flows. Closed form: c(t) = c0 * exp(-2 m t) + mean/m * (1 - ...),
/// which for zero target and unit density is pure exponential decay.
pub fn c_only_instance(c0: f64) -> (Problem, ParamVector) {
    let shape = NetworkShape::new(1, 1, 0.0, 1.0).unwrap();
    let target = PiecewisePoly::constant(1, BigRational::from_integer(0.into()));
    let density = PiecewisePoly::constant(1, BigRational::from_integer(1.into()));
    let p = Problem::new(shape, target, density, Evaluator::Exact1d).unwrap();
    let theta = ParamVector::new(shape, vec![0.0, 0.0, 0.0, c0]).unwrap();
    (p, theta)
}

/// Perfect-fit stationary instance: target x, network the identity ramp.
pub fn stationary_instance() -> (Problem, ParamVector) {
    let shape = NetworkShape::new(1, 1, 0.0, 1.0).unwrap();
    let target =
        PiecewisePoly::global(Poly::monomial(vec![1], BigRational::from_integer(1.into())));
    let density = PiecewisePoly::constant(1, BigRational::from_integer(1.into()));
    let p = Problem::new(shape, target, density, Evaluator::Exact1d).unwrap();
    let theta = ParamVector::new(shape, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
    (p, theta)
}

/// Near-fit basin instance for convergence-rate suites: a kinked ramp target
/// `slope * max(x - u, 0)` with the parameter vector perturbed off the
/// perfect fit.
///
/// The interior kink pins the fitted breakpoint, so the only flat direction
/// at the minimum is the exactly-null rescaling orbit and the flow contracts
/// exponentially; the density mass of 4 keeps the contraction fast enough to
/// reach the gradient tolerance inside a few hundred time units.
pub fn basin_instance(rng: &mut ChaCha8Rng) -> (Problem, ParamVector) {
    let shape = NetworkShape::new(1, 1, 0.0, 1.0).unwrap();
    let u = rng.gen_range(0.3..0.6);
    let slope = rng.gen_range(0.8..1.2);
    let mut ramp = Poly::zero(1);
    ramp.add_term(vec![1], rat(slope));
    ramp.add_term(vec![0], rat(-slope * u));
    let target = PiecewisePoly::new(
        1,
        vec![Piece {
            constraints: vec![AffineConstraint::new(vec![rat(1.0)], rat(-u))],
            poly: ramp,
        }],
    );
    let density = PiecewisePoly::constant(1, BigRational::from_integer(4.into()));
    let p = Problem::new(shape, target, density, Evaluator::Exact1d).unwrap();
    let theta = ParamVector::new(
        shape,
        vec![
            1.0 + rng.gen_range(-0.05..0.05),
            -u + rng.gen_range(-0.02..0.02),
            slope + rng.gen_range(-0.05..0.05),
            rng.gen_range(-0.02..0.02),
        ],
    )
    .unwrap();
    (p, theta)
}

/// Construct a run whose second neuron degenerates in finite time.
///
/// The anchor (neuron 1 plus the output bias) under-fits a constant target,
/// so the residual is bounded away from zero and the gradient on the small
/// neuron's input parameters is an O(1) drive. Starting those parameters at
/// scale `eps` exactly against the probed drive direction sends them along a
/// near-straight line through the origin; the input size crosses the
/// degeneration threshold on the way and the solver freezes the neuron.
pub fn find_degenerating_instance(eps: f64) -> (Problem, ParamVector) {
    let shape = NetworkShape::new(1, 2, 0.0, 1.0).unwrap();
    let target = PiecewisePoly::constant(1, BigRational::from_integer(2.into()));
    let density = PiecewisePoly::constant(1, BigRational::from_integer(1.into()));
    let p = Problem::new(shape, target, density, Evaluator::Exact1d).unwrap();

    // Anchor: N(x) = 0.2 + 0.5 max(x + 0.1, 0), residual ~ -1.5 throughout.
    // Negative outer weight turns that residual into a drive pointing into
    // the third quadrant of the (w2, b2) plane.
    let base =
        |w2: f64, b2: f64| ParamVector::new(shape, vec![1.0, w2, 0.1, b2, 0.5, -0.8, 0.2]).unwrap();
    // Aim twice: probe the drive in the fully-active cone, restart on the
    // opposite ray, and refine with the drive measured there.
    let mut start = (eps, eps);
    for _ in 0..2 {
        let probe = base(start.0, start.1);
        let g = crate::risk::gradient(&p, &probe).expect("probe gradient");
        let (dw, db) = (-g[probe.w_index(2, 1)], -g[probe.b_index(2)]);
        let n = (dw * dw + db * db).sqrt();
        assert!(
            dw < 0.0 && db < 0.0,
            "drive must point toward the origin from the active cone"
        );
        start = (-eps * dw / n, -eps * db / n);
    }
    (p, base(start.0, start.1))
}
