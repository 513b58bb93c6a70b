//! Multivariate polynomial algebra over exact rationals and the
//! piecewise-polynomial representation used for targets and input densities.
//!
//! A piecewise polynomial is a finite *sum* of polynomials gated by products
//! of closed affine-inequality indicators: overlapping pieces add, they do
//! not partition the domain. Constraints are evaluated with `>= 0`; the
//! boundaries are Lebesgue-null and never affect integrals.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::rational::rat_to_f64;

/// Degree cap per variable; exceeding it signals a runaway expansion.
pub const MAX_DEGREE: u32 = 32;

#[derive(Debug, Error)]
pub enum PolyError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("integration bounds reversed: lo > hi")]
    ReversedBounds,
    #[error("polynomial degree {degree} exceeds the cap {MAX_DEGREE}")]
    DegreeOverflow { degree: u32 },
    #[error("operation requires a univariate polynomial, got dim {0}")]
    NotUnivariate(usize),
}

/// Sparse multivariate polynomial: exponent multi-index -> rational coefficient.
///
/// No zero coefficients are stored and multi-indices are unique by
/// construction (BTreeMap keys).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Poly {
    dim: usize,
    terms: BTreeMap<Vec<u32>, BigRational>,
}

impl Poly {
    pub fn zero(dim: usize) -> Self {
        Poly {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: BigRational) -> Self {
        let mut p = Poly::zero(dim);
        if !c.is_zero() {
            p.terms.insert(vec![0; dim], c);
        }
        p
    }

    /// The monomial `coef * prod_j x_j^exps[j]`.
    pub fn monomial(exps: Vec<u32>, coef: BigRational) -> Self {
        let mut p = Poly::zero(exps.len());
        if !coef.is_zero() {
            p.terms.insert(exps, coef);
        }
        p
    }

    /// Degree-one polynomial `offset + coeffs . x`.
    pub fn affine(coeffs: &[BigRational], offset: BigRational) -> Self {
        let dim = coeffs.len();
        let mut p = Poly::constant(dim, offset);
        for (j, c) in coeffs.iter().enumerate() {
            if !c.is_zero() {
                let mut e = vec![0; dim];
                e[j] = 1;
                p.terms.insert(e, c.clone());
            }
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &BigRational)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Largest exponent of any single variable.
    pub fn max_var_degree(&self) -> u32 {
        self.terms
            .keys()
            .flat_map(|e| e.iter().copied())
            .max()
            .unwrap_or(0)
    }

    pub fn add_term(&mut self, exps: Vec<u32>, coef: BigRational) {
        debug_assert_eq!(exps.len(), self.dim);
        if coef.is_zero() {
            return;
        }
        let entry = self.terms.entry(exps);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(coef);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += coef;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        debug_assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Poly {
        Poly {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|(e, c)| (e.clone(), -c.clone()))
                .collect(),
        }
    }

    pub fn scale(&self, s: &BigRational) -> Poly {
        if s.is_zero() {
            return Poly::zero(self.dim);
        }
        Poly {
            dim: self.dim,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect(),
        }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        debug_assert_eq!(self.dim, other.dim);
        let mut out = Poly::zero(self.dim);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }

    pub fn eval(&self, x: &[BigRational]) -> BigRational {
        debug_assert_eq!(x.len(), self.dim);
        let mut acc = BigRational::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (j, &k) in e.iter().enumerate() {
                for _ in 0..k {
                    t *= &x[j];
                }
            }
            acc += t;
        }
        acc
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let mut acc = 0.0;
        for (e, c) in &self.terms {
            let mut t = rat_to_f64(c);
            for (j, &k) in e.iter().enumerate() {
                t *= x[j].powi(k as i32);
            }
            acc += t;
        }
        acc
    }

    /// Antiderivative with respect to variable `var` (constant of integration 0).
    pub fn antiderivative(&self, var: usize) -> Poly {
        let mut out = Poly::zero(self.dim);
        for (e, c) in &self.terms {
            let mut e2 = e.clone();
            e2[var] += 1;
            let k = BigRational::from_integer(e2[var].into());
            out.add_term(e2, c / k);
        }
        out
    }

    /// Substitute the last variable by an affine form of the remaining ones,
    /// returning a polynomial in `dim - 1` variables.
    ///
    /// `bound` has `dim - 1` coefficients plus an offset. Uses Horner in the
    /// eliminated variable.
    pub fn substitute_last_affine(&self, bound: &AffineForm) -> Poly {
        assert!(self.dim >= 1);
        let rdim = self.dim - 1;
        debug_assert_eq!(bound.coeffs.len(), rdim);
        // Group by exponent of the last variable.
        let mut by_deg: BTreeMap<u32, Poly> = BTreeMap::new();
        for (e, c) in &self.terms {
            let k = e[rdim];
            let re = e[..rdim].to_vec();
            by_deg
                .entry(k)
                .or_insert_with(|| Poly::zero(rdim))
                .add_term(re, c.clone());
        }
        let max_deg = by_deg.keys().next_back().copied().unwrap_or(0);
        let a = Poly::affine(&bound.coeffs, bound.offset.clone());
        let mut acc = Poly::zero(rdim);
        for k in (0..=max_deg).rev() {
            acc = acc.mul(&a);
            if let Some(coef) = by_deg.get(&k) {
                acc = acc.add(coef);
            }
        }
        acc
    }

    /// Project a univariate polynomial to its dense coefficient vector.
    pub fn to_unipoly(&self) -> Result<UniPoly, PolyError> {
        if self.dim != 1 {
            return Err(PolyError::NotUnivariate(self.dim));
        }
        let deg = self.max_var_degree() as usize;
        let mut coeffs = vec![BigRational::zero(); deg + 1];
        for (e, c) in &self.terms {
            coeffs[e[0] as usize] = c.clone();
        }
        Ok(UniPoly::new(coeffs))
    }

    pub fn from_unipoly(p: &UniPoly) -> Poly {
        let mut out = Poly::zero(1);
        for (k, c) in p.coeffs().iter().enumerate() {
            out.add_term(vec![k as u32], c.clone());
        }
        out
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(e, c)| {
                let vars: Vec<String> = e
                    .iter()
                    .enumerate()
                    .filter(|(_, &k)| k > 0)
                    .map(|(j, &k)| {
                        if k == 1 {
                            format!("x{}", j + 1)
                        } else {
                            format!("x{}^{}", j + 1, k)
                        }
                    })
                    .collect();
                if vars.is_empty() {
                    format!("{c}")
                } else {
                    format!("{c} {}", vars.join(" "))
                }
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

/// Dense univariate polynomial, ascending coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UniPoly {
    coeffs: Vec<BigRational>,
}

impl UniPoly {
    pub fn new(mut coeffs: Vec<BigRational>) -> Self {
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        UniPoly { coeffs }
    }

    pub fn zero() -> Self {
        UniPoly { coeffs: vec![] }
    }

    pub fn constant(c: BigRational) -> Self {
        UniPoly::new(vec![c])
    }

    /// `offset + slope * x`.
    pub fn linear(offset: BigRational, slope: BigRational) -> Self {
        UniPoly::new(vec![offset, slope])
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn coeffs(&self) -> &[BigRational] {
        &self.coeffs
    }

    pub fn add(&self, other: &UniPoly) -> UniPoly {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut out = vec![BigRational::zero(); n];
        for (i, c) in self.coeffs.iter().enumerate() {
            out[i] += c;
        }
        for (i, c) in other.coeffs.iter().enumerate() {
            out[i] += c;
        }
        UniPoly::new(out)
    }

    pub fn sub(&self, other: &UniPoly) -> UniPoly {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut out = vec![BigRational::zero(); n];
        for (i, c) in self.coeffs.iter().enumerate() {
            out[i] += c;
        }
        for (i, c) in other.coeffs.iter().enumerate() {
            out[i] -= c;
        }
        UniPoly::new(out)
    }

    pub fn mul(&self, other: &UniPoly) -> UniPoly {
        if self.is_zero() || other.is_zero() {
            return UniPoly::zero();
        }
        let mut out = vec![BigRational::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        UniPoly::new(out)
    }

    pub fn scale(&self, s: &BigRational) -> UniPoly {
        UniPoly::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    pub fn eval(&self, x: &BigRational) -> BigRational {
        let mut acc = BigRational::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for c in self.coeffs.iter().rev() {
            acc = acc * x + rat_to_f64(c);
        }
        acc
    }

    pub fn antiderivative(&self) -> UniPoly {
        if self.is_zero() {
            return UniPoly::zero();
        }
        let mut out = vec![BigRational::zero(); self.coeffs.len() + 1];
        for (k, c) in self.coeffs.iter().enumerate() {
            out[k + 1] = c / BigRational::from_integer((k as i64 + 1).into());
        }
        UniPoly::new(out)
    }

    /// Exact definite integral over `[lo, hi]`.
    pub fn integrate(&self, lo: &BigRational, hi: &BigRational) -> BigRational {
        let anti = self.antiderivative();
        anti.eval(hi) - anti.eval(lo)
    }
}

/// Closed affine constraint `normal . x + offset >= 0`.
///
/// An all-zero normal is permitted: with `offset >= 0` the constraint is
/// trivially true, otherwise trivially false.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffineConstraint {
    pub normal: Vec<BigRational>,
    pub offset: BigRational,
}

impl AffineConstraint {
    pub fn new(normal: Vec<BigRational>, offset: BigRational) -> Self {
        AffineConstraint { normal, offset }
    }

    /// Trivially-true constraint in `dim` variables.
    pub fn always(dim: usize) -> Self {
        AffineConstraint {
            normal: vec![BigRational::zero(); dim],
            offset: BigRational::zero(),
        }
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    pub fn satisfied(&self, x: &[BigRational]) -> bool {
        !self.value(x).is_negative()
    }

    pub fn value(&self, x: &[BigRational]) -> BigRational {
        let mut v = self.offset.clone();
        for (n, xi) in self.normal.iter().zip(x) {
            v += n * xi;
        }
        v
    }

    pub fn satisfied_f64(&self, x: &[f64]) -> bool {
        self.value_f64(x) >= 0.0
    }

    pub fn value_f64(&self, x: &[f64]) -> f64 {
        let mut v = rat_to_f64(&self.offset);
        for (n, xi) in self.normal.iter().zip(x) {
            v += rat_to_f64(n) * xi;
        }
        v
    }
}

/// One gated piece of a piecewise polynomial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Piece {
    pub constraints: Vec<AffineConstraint>,
    pub poly: Poly,
}

/// Sum-semantics piecewise polynomial: value at `x` is the sum of `poly(x)`
/// over all pieces whose constraints all hold.
///
/// Any number of constraint rows per piece is accepted (the canonical form
/// with as many rows as pieces embeds by padding with trivially-true rows).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PiecewisePoly {
    pub pieces: Vec<Piece>,
    pub dim: usize,
}

impl PiecewisePoly {
    pub fn new(dim: usize, pieces: Vec<Piece>) -> Self {
        for p in &pieces {
            debug_assert_eq!(p.poly.dim(), dim);
            for c in &p.constraints {
                debug_assert_eq!(c.dim(), dim);
            }
        }
        PiecewisePoly { pieces, dim }
    }

    /// A single ungated polynomial.
    pub fn global(poly: Poly) -> Self {
        let dim = poly.dim();
        PiecewisePoly {
            pieces: vec![Piece {
                constraints: vec![],
                poly,
            }],
            dim,
        }
    }

    pub fn constant(dim: usize, c: BigRational) -> Self {
        PiecewisePoly::global(Poly::constant(dim, c))
    }

    pub fn max_var_degree(&self) -> u32 {
        self.pieces
            .iter()
            .map(|p| p.poly.max_var_degree())
            .max()
            .unwrap_or(0)
    }
}

/// Exact evaluation with sum semantics; constraints are closed (`>= 0`).
pub fn eval_pp(g: &PiecewisePoly, x: &[BigRational]) -> Result<BigRational, PolyError> {
    if x.len() != g.dim {
        return Err(PolyError::DimMismatch {
            expected: g.dim,
            got: x.len(),
        });
    }
    let mut acc = BigRational::zero();
    for piece in &g.pieces {
        if piece.constraints.iter().all(|c| c.satisfied(x)) {
            acc += piece.poly.eval(x);
        }
    }
    Ok(acc)
}

/// Floating-point evaluation (used by the quadrature oracles).
pub fn eval_pp_f64(g: &PiecewisePoly, x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for piece in &g.pieces {
        if piece.constraints.iter().all(|c| c.satisfied_f64(x)) {
            acc += piece.poly.eval_f64(x);
        }
    }
    acc
}

/// Definite integral of a univariate polynomial, exact-rational mode.
pub fn integrate_poly_1d(
    p: &Poly,
    lo: &BigRational,
    hi: &BigRational,
) -> Result<BigRational, PolyError> {
    if lo > hi {
        return Err(PolyError::ReversedBounds);
    }
    Ok(p.to_unipoly()?.integrate(lo, hi))
}

/// Definite integral of a univariate polynomial, binary64 mode.
pub fn integrate_poly_1d_f64(p: &Poly, lo: f64, hi: f64) -> Result<f64, PolyError> {
    if lo > hi {
        return Err(PolyError::ReversedBounds);
    }
    let up = p.to_unipoly()?;
    let anti = up.antiderivative();
    Ok(anti.eval_f64(hi) - anti.eval_f64(lo))
}

/// Canonical one-dimensional form: strictly increasing breakpoints
/// `t_0 = a < ... < t_m = b` with the summed active polynomial on each open
/// cell interior.
#[derive(Debug, Clone)]
pub struct Breakline1D {
    pub breaks: Vec<BigRational>,
    pub polys: Vec<UniPoly>,
}

impl Breakline1D {
    /// Evaluate at an interior point of some cell (exact).
    pub fn eval(&self, x: &BigRational) -> BigRational {
        match self.cell_of(x) {
            Some(k) => self.polys[k].eval(x),
            None => BigRational::zero(),
        }
    }

    fn cell_of(&self, x: &BigRational) -> Option<usize> {
        if self.breaks.is_empty() || x < &self.breaks[0] || x > self.breaks.last().unwrap() {
            return None;
        }
        // partition_point: first break > x, so x lies in cell idx-1 (ties to
        // the right cell except at the top endpoint).
        let idx = self.breaks.partition_point(|b| b <= x);
        Some(idx.saturating_sub(1).min(self.polys.len() - 1))
    }
}

/// Extract the canonical 1-d form of `g` over `[a, b]`.
///
/// Breakpoints are the constraint roots `-offset/normal` clipped to the
/// domain plus the endpoints, deduplicated by exact rational equality. On
/// each open cell the active pieces are decided at the exact midpoint.
pub fn canonicalize_1d(
    g: &PiecewisePoly,
    a: &BigRational,
    b: &BigRational,
) -> Result<Breakline1D, PolyError> {
    if g.dim != 1 {
        return Err(PolyError::DimMismatch {
            expected: 1,
            got: g.dim,
        });
    }
    let mut breaks: Vec<BigRational> = vec![a.clone(), b.clone()];
    for piece in &g.pieces {
        for c in &piece.constraints {
            if !c.normal[0].is_zero() {
                let root = -&c.offset / &c.normal[0];
                if &root > a && &root < b {
                    breaks.push(root);
                }
            }
        }
    }
    breaks.sort();
    breaks.dedup();
    let two = BigRational::from_integer(2.into());
    let mut polys = Vec::with_capacity(breaks.len() - 1);
    for w in breaks.windows(2) {
        let mid = (&w[0] + &w[1]) / &two;
        let mut acc = UniPoly::zero();
        for piece in &g.pieces {
            if piece
                .constraints
                .iter()
                .all(|c| c.satisfied(std::slice::from_ref(&mid)))
            {
                acc = acc.add(&piece.poly.to_unipoly()?);
            }
        }
        polys.push(acc);
    }
    Ok(Breakline1D { breaks, polys })
}


/// Affine function of several variables (not a constraint): `coeffs . x + offset`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffineForm {
    pub coeffs: Vec<BigRational>,
    pub offset: BigRational,
}

impl AffineForm {
    pub fn constant(dim: usize, c: BigRational) -> Self {
        AffineForm {
            coeffs: vec![BigRational::zero(); dim],
            offset: c,
        }
    }

    pub fn sub(&self, other: &AffineForm) -> AffineForm {
        AffineForm {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
            offset: &self.offset - &other.offset,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.iter().all(Zero::is_zero)
    }

    pub fn scale(&self, s: &BigRational) -> AffineForm {
        AffineForm {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
            offset: &self.offset * s,
        }
    }
}
