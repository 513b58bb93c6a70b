//! Gauss-Legendre quadrature and adaptive cubature.
//!
//! These routines integrate pointwise-evaluated integrands and serve as the
//! independent numeric route against which the closed-form evaluators are
//! cross-checked; they share no code with the rational integration paths.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuadratureError {
    #[error(
        "adaptive quadrature did not converge: worst cell [{lo}, {hi}] with error estimate {err}"
    )]
    NonConvergence { lo: f64, hi: f64, err: f64 },
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
///
/// Computed by Newton iteration on the Legendre recurrence and cached.
pub fn gauss_legendre(n: usize) -> Arc<(Vec<f64>, Vec<f64>)> {
    type Cache = Mutex<HashMap<usize, Arc<(Vec<f64>, Vec<f64>)>>>;
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(n)
        .or_insert_with(|| Arc::new(compute_gauss_legendre(n)))
        .clone()
}

fn compute_gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 1..=n {
        let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, x);
        nodes[i - 1] = x;
        weights[i - 1] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// `n`-point Gauss-Legendre integral of `f` over `[lo, hi]`.
pub fn gl_integrate<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, n: usize) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let rule = gauss_legendre(n);
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut acc = 0.0;
    for (x, w) in rule.0.iter().zip(&rule.1) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Gauss-Legendre integration over the cells of a sorted breakpoint list.
pub fn gl_integrate_cells<F: FnMut(f64) -> f64>(mut f: F, breaks: &[f64], n: usize) -> f64 {
    let mut acc = 0.0;
    for w in breaks.windows(2) {
        acc += gl_integrate(&mut f, w[0], w[1], n);
    }
    acc
}

/// Sort, clip to `[lo, hi]` and dedup a list of candidate cut points,
/// always including the endpoints.
pub fn normalize_breaks(mut cuts: Vec<f64>, lo: f64, hi: f64) -> Vec<f64> {
    cuts.retain(|t| t.is_finite() && *t > lo && *t < hi);
    cuts.push(lo);
    cuts.push(hi);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    cuts
}

/// Adaptive 1-d quadrature: per-interval GL10 vs GL21 comparison with
/// bisection. `breaks` pre-splits the domain at known kinks.
pub fn adaptive_1d<F: Fn(f64) -> f64>(
    f: &F,
    breaks: &[f64],
    tol: f64,
) -> Result<f64, QuadratureError> {
    let mut total = 0.0;
    let ncells = breaks.len() - 1;
    for w in breaks.windows(2) {
        total += adaptive_segment(f, w[0], w[1], tol / ncells as f64, 52)?;
    }
    Ok(total)
}

fn adaptive_segment<F: Fn(f64) -> f64>(
    f: &F,
    lo: f64,
    hi: f64,
    tol: f64,
    depth: u32,
) -> Result<f64, QuadratureError> {
    let coarse = gl_integrate(f, lo, hi, 10);
    let fine = gl_integrate(f, lo, hi, 21);
    let err = (fine - coarse).abs();
    if err <= tol {
        return Ok(fine);
    }
    if depth == 0 || hi - lo < 1e-15 {
        return Err(QuadratureError::NonConvergence { lo, hi, err });
    }
    let mid = 0.5 * (lo + hi);
    Ok(adaptive_segment(f, lo, mid, 0.5 * tol, depth - 1)?
        + adaptive_segment(f, mid, hi, 0.5 * tol, depth - 1)?)
}

/// Tensor Gauss-Legendre integral over an axis-aligned box.
pub fn gl_integrate_box<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    lo: &[f64],
    hi: &[f64],
    n: usize,
) -> f64 {
    let dim = lo.len();
    let rule = gauss_legendre(n);
    let mut point = vec![0.0; dim];
    let mut jac = 1.0;
    for k in 0..dim {
        jac *= 0.5 * (hi[k] - lo[k]);
    }
    let mut idx = vec![0usize; dim];
    let mut acc = 0.0;
    loop {
        let mut w = 1.0;
        for k in 0..dim {
            let x = rule.0[idx[k]];
            point[k] = 0.5 * (lo[k] + hi[k]) + 0.5 * (hi[k] - lo[k]) * x;
            w *= rule.1[idx[k]];
        }
        acc += w * f(&point);
        // odometer increment
        let mut k = 0;
        loop {
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
            k += 1;
            if k == dim {
                return acc * jac;
            }
        }
    }
}

struct CubatureCell {
    lo: Vec<f64>,
    hi: Vec<f64>,
    value: f64,
    err: f64,
}

/// Adaptive subdivision cubature over a box: per-cell GL4 vs GL7 tensor
/// rules, always splitting the worst cell along its longest axis.
///
/// Returns the value and the final error estimate (which may exceed `tol`
/// if the cell budget runs out; callers decide how to treat that).
pub fn adaptive_cubature<F: Fn(&[f64]) -> f64>(
    f: &F,
    lo: &[f64],
    hi: &[f64],
    tol: f64,
    max_cells: usize,
) -> (f64, f64) {
    use std::cmp::Ordering;
    use std::collections::BinaryHeap;

    struct HeapCell(CubatureCell);
    impl PartialEq for HeapCell {
        fn eq(&self, other: &Self) -> bool {
            self.0.err == other.0.err
        }
    }
    impl Eq for HeapCell {}
    impl PartialOrd for HeapCell {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for HeapCell {
        fn cmp(&self, other: &Self) -> Ordering {
            self.0
                .err
                .partial_cmp(&other.0.err)
                .unwrap_or(Ordering::Equal)
        }
    }

    let estimate = |lo: &[f64], hi: &[f64]| {
        let mut g = |x: &[f64]| f(x);
        let coarse = gl_integrate_box(&mut g, lo, hi, 4);
        let fine = gl_integrate_box(&mut g, lo, hi, 7);
        CubatureCell {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            value: fine,
            err: (fine - coarse).abs(),
        }
    };

    let mut heap = BinaryHeap::new();
    let first = estimate(lo, hi);
    let mut total = first.value;
    let mut total_err = first.err;
    heap.push(HeapCell(first));
    let mut cells = 1usize;
    while total_err > tol && cells < max_cells {
        let Some(HeapCell(worst)) = heap.pop() else {
            break;
        };
        total -= worst.value;
        total_err -= worst.err;
        let axis = (0..worst.lo.len())
            .max_by(|&i, &j| {
                (worst.hi[i] - worst.lo[i])
                    .partial_cmp(&(worst.hi[j] - worst.lo[j]))
                    .unwrap()
            })
            .unwrap();
        let mid = 0.5 * (worst.lo[axis] + worst.hi[axis]);
        let mut hi_left = worst.hi.clone();
        hi_left[axis] = mid;
        let mut lo_right = worst.lo.clone();
        lo_right[axis] = mid;
        for (clo, chi) in [(worst.lo.clone(), hi_left), (lo_right, worst.hi.clone())] {
            let cell = estimate(&clo, &chi);
            total += cell.value;
            total_err += cell.err;
            heap.push(HeapCell(cell));
            cells += 1;
        }
    }
    (total, total_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_nodes_integrate_high_degree_exactly() {
        // GL30 is exact through degree 59.
        let val = gl_integrate(|x| x.powi(20), 0.0, 1.0, 30);
        assert!((val - 1.0 / 21.0).abs() < 1e-15);
        let val = gl_integrate(|x| (1.0 + x).powi(11) * x.powi(4), -1.0, 2.0, 30);
        // Oracle: expand by binomial sum_{k} C(11,k) x^{k+4} over [-1,2].
        let mut exact = 0.0;
        let mut binom = 1.0f64;
        for k in 0..=11u32 {
            let p = (k + 5) as f64;
            exact += binom * (2f64.powf(p) - (-1f64).powf(p)) / p;
            binom *= (11 - k) as f64 / (k + 1) as f64;
        }
        assert!((val - exact).abs() < 1e-10 * exact.abs());
    }

    #[test]
    fn gl_weights_sum_to_interval_length() {
        for n in [5, 8, 15, 30] {
            let rule = gauss_legendre(n);
            let s: f64 = rule.1.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "order {n}");
        }
    }

    #[test]
    fn adaptive_handles_kinked_integrand() {
        // integral of |x - 1/3| over [0,1] = 1/2 - 1/3 + 1/9 = 5/18
        let f = |x: f64| (x - 1.0 / 3.0).abs();
        let v = adaptive_1d(&f, &[0.0, 1.0], 1e-12).unwrap();
        assert!((v - 5.0 / 18.0).abs() < 1e-11);
    }

    #[test]
    fn adaptive_reports_worst_cell_on_budget_exhaustion() {
        // A jump keeps the straddling interval's error proportional to its
        // width, so the per-level tolerance split can never catch up.
        let f = |x: f64| if x > 0.123456789 { 1.0 } else { 0.0 };
        let err = adaptive_1d(&f, &[0.0, 1.0], 1e-13).unwrap_err();
        match err {
            QuadratureError::NonConvergence { lo, hi, .. } => {
                assert!(lo <= 0.123456789 && 0.123456789 <= hi);
            }
        }
    }

    #[test]
    fn box_rule_integrates_polynomials() {
        let mut f = |x: &[f64]| x[0] * x[0] * x[1];
        let v = gl_integrate_box(&mut f, &[0.0, 0.0], &[1.0, 1.0], 4);
        assert!((v - 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn cubature_converges_on_c1_kink() {
        // max(x1 - x2, 0)^2 over the unit square = 1/12.
        let f = |x: &[f64]| (x[0] - x[1]).max(0.0).powi(2);
        let (v, err) = adaptive_cubature(&f, &[0.0, 0.0], &[1.0, 1.0], 1e-10, 20_000);
        assert!(err < 1e-9);
        assert!((v - 1.0 / 12.0).abs() < 1e-9, "value {v}");
    }
}
