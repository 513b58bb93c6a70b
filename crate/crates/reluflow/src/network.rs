//! Parametrization of the one-hidden-layer ReLU network: flat parameter
//! vector with weight/bias views, the realization function, the degenerate
//! neuron set, and per-neuron active regions of the input box.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("parameter vector has length {got}, shape requires {expected}")]
    ParamLength { expected: usize, got: usize },
    #[error("invalid shape: domain endpoints must satisfy a < b (got {a}, {b})")]
    BadDomain { a: f64, b: f64 },
    #[error("invalid shape: d and h must be positive")]
    ZeroSize,
}

/// Static dimensions of the network and its input box `[a, b]^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkShape {
    pub d: usize,
    pub h: usize,
    pub a: f64,
    pub b_dom: f64,
}

impl NetworkShape {
    pub fn new(d: usize, h: usize, a: f64, b_dom: f64) -> Result<Self, NetworkError> {
        if d == 0 || h == 0 {
            return Err(NetworkError::ZeroSize);
        }
        if a >= b_dom || !a.is_finite() || !b_dom.is_finite() {
            return Err(NetworkError::BadDomain { a, b: b_dom });
        }
        Ok(NetworkShape { d, h, a, b_dom })
    }

    /// Total parameter count `d*h + 2h + 1`.
    pub fn param_count(&self) -> usize {
        self.d * self.h + 2 * self.h + 1
    }
}

/// Flat parameter vector `theta` with named views.
///
/// Storage is 0-based; the 1-based index mapping
/// `w_{i,j} = theta[(i-1)d + j]`, `b_i = theta[hd + i]`,
/// `v_i = theta[h(d+1) + i]`, `c = theta[dh + 2h + 1]`
/// is exposed through the accessors below (neuron indices are 1-based there).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub theta: Vec<f64>,
    pub shape: NetworkShape,
}

impl ParamVector {
    pub fn new(shape: NetworkShape, theta: Vec<f64>) -> Result<Self, NetworkError> {
        if theta.len() != shape.param_count() {
            return Err(NetworkError::ParamLength {
                expected: shape.param_count(),
                got: theta.len(),
            });
        }
        Ok(ParamVector { theta, shape })
    }

    pub fn zeros(shape: NetworkShape) -> Self {
        let n = shape.param_count();
        ParamVector {
            theta: vec![0.0; n],
            shape,
        }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// 0-based flat index of `w_{i,j}` for 1-based neuron `i`, input `j`.
    pub fn w_index(&self, i: usize, j: usize) -> usize {
        (i - 1) * self.shape.d + (j - 1)
    }

    pub fn b_index(&self, i: usize) -> usize {
        self.shape.h * self.shape.d + (i - 1)
    }

    pub fn v_index(&self, i: usize) -> usize {
        self.shape.h * (self.shape.d + 1) + (i - 1)
    }

    pub fn c_index(&self) -> usize {
        self.theta.len() - 1
    }

    pub fn w(&self, i: usize, j: usize) -> f64 {
        self.theta[self.w_index(i, j)]
    }

    /// Weight row of neuron `i` (1-based).
    pub fn w_row(&self, i: usize) -> &[f64] {
        let start = (i - 1) * self.shape.d;
        &self.theta[start..start + self.shape.d]
    }

    pub fn b(&self, i: usize) -> f64 {
        self.theta[self.b_index(i)]
    }

    pub fn v(&self, i: usize) -> f64 {
        self.theta[self.v_index(i)]
    }

    pub fn c(&self) -> f64 {
        self.theta[self.c_index()]
    }

    /// Pre-activation `b_i + w_i . x` of neuron `i` at input `x`.
    pub fn preactivation(&self, i: usize, x: &[f64]) -> f64 {
        let mut z = self.b(i);
        for (wij, xj) in self.w_row(i).iter().zip(x) {
            z += wij * xj;
        }
        z
    }

    /// Input-parameter size `e_i = |b_i| + sum_j |w_{ij}|` of neuron `i`.
    pub fn input_size(&self, i: usize) -> f64 {
        self.b(i).abs() + self.w_row(i).iter().map(|w| w.abs()).sum::<f64>()
    }
}

/// Closed sub-interval of `[a, b]`; `empty` iff `lo >= hi`.
///
/// The underlying active region is open, but endpoint membership is
/// immaterial under Lebesgue integration, so the closed hull is stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveRegion1D {
    pub lo: f64,
    pub hi: f64,
    pub empty: bool,
}

impl ActiveRegion1D {
    pub fn new(lo: f64, hi: f64) -> Self {
        ActiveRegion1D {
            lo,
            hi,
            empty: lo >= hi,
        }
    }

    pub fn empty() -> Self {
        ActiveRegion1D {
            lo: 0.0,
            hi: 0.0,
            empty: true,
        }
    }

    pub fn length(&self) -> f64 {
        if self.empty {
            0.0
        } else {
            self.hi - self.lo
        }
    }
}

/// Active region of a neuron: interval form in one input dimension, a
/// halfspace-box description otherwise.
#[derive(Debug, Clone, PartialEq)]
pub enum NeuronRegion {
    Empty,
    Interval(ActiveRegion1D),
    /// Constraint `normal . x + offset > 0` intersected with the input box.
    Halfspace {
        normal: Vec<f64>,
        offset: f64,
    },
}

/// Realization `N(x) = c + sum_i v_i * max(b_i + w_i . x, 0)`, accumulated
/// left-to-right in neuron index order.
pub fn realize(theta: &ParamVector, x: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), theta.shape.d);
    let mut acc = theta.c();
    for i in 1..=theta.shape.h {
        acc += theta.v(i) * theta.preactivation(i, x).max(0.0);
    }
    acc
}

/// Neurons whose input parameters are all exactly zero (1-based indices).
///
/// The comparison is exact against 0.0: the flow solver writes exact zeros
/// when freezing, which keeps this set well-defined and its monotonicity
/// testable without tolerances.
pub fn degenerate_set(theta: &ParamVector) -> Vec<usize> {
    (1..=theta.shape.h)
        .filter(|&i| theta.input_size(i) == 0.0)
        .collect()
}

/// Active region of neuron `i`: the subset of the input box where the
/// pre-activation is strictly positive.
///
/// A degenerate neuron yields the empty region.
pub fn active_region(theta: &ParamVector, i: usize) -> NeuronRegion {
    assert!(i >= 1 && i <= theta.shape.h, "neuron index out of range");
    if theta.input_size(i) == 0.0 {
        return NeuronRegion::Empty;
    }
    if theta.shape.d == 1 {
        let w = theta.w(i, 1);
        let b = theta.b(i);
        let (a, bd) = (theta.shape.a, theta.shape.b_dom);
        let region = if w == 0.0 {
            if b > 0.0 {
                ActiveRegion1D::new(a, bd)
            } else {
                ActiveRegion1D::empty()
            }
        } else {
            let root = -b / w;
            if w > 0.0 {
                // active on (root, b_dom]
                ActiveRegion1D::new(root.max(a), bd)
            } else {
                // active on [a, root)
                ActiveRegion1D::new(a, root.min(bd))
            }
        };
        if region.empty {
            NeuronRegion::Empty
        } else {
            NeuronRegion::Interval(region)
        }
    } else {
        NeuronRegion::Halfspace {
            normal: theta.w_row(i).to_vec(),
            offset: theta.b(i),
        }
    }
}
