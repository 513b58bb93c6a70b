//! Exact iterated integration of indicator-gated polynomial term sets at a
//! fixed numeric parameter point.
//!
//! A term set is a finite sum of `rcoef * q(x) * prod_i 1_{A_i}(affine_i(x))`
//! with `A_i` one of `{0}`, `[0, inf)`, `(0, inf)`. The class is closed under
//! integrating out one variable over `[lo, hi]`: factors are classified by
//! the sign of their coefficient on the eliminated variable, every admissible
//! choice of active lower and upper bound (domain endpoint or a factor root,
//! ties broken toward the lowest factor index) emits one child term whose
//! indicator set enforces that choice and whose polynomial part is the
//! antiderivative evaluated between the chosen bounds. Values agree with the
//! partial integral almost everywhere; on the measure-zero tie sets the
//! pointwise values may differ, which never affects integrals.
//!
//! At a fixed parameter vector the sign classification is concrete, so the
//! combinatorial sum over sign partitions collapses to the bound choices
//! alone; all arithmetic is exact rational.

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::network::{degenerate_set, ParamVector};
use crate::poly::{AffineForm, PiecewisePoly, Poly, MAX_DEGREE};
use crate::rational::{rat_from_f64, rat_to_f64};
use crate::risk::Problem;

#[derive(Debug, Error)]
pub enum SemialgError {
    #[error("term {term}: polynomial degree {degree} exceeds the cap {MAX_DEGREE}")]
    DegreeOverflow { term: usize, degree: u32 },
    #[error("cannot eliminate from a 0-dimensional term set")]
    NothingToEliminate,
    #[error("elimination evaluator supports d <= 3, got {0}")]
    DimTooLarge(usize),
}

/// Indicator set of one factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum IndicatorKind {
    /// `A = {0}`
    Eq0,
    /// `A = [0, inf)`
    Ge0,
    /// `A = (0, inf)`
    Gt0,
}

impl IndicatorKind {
    fn holds(&self, v: &BigRational) -> bool {
        match self {
            IndicatorKind::Eq0 => v.is_zero(),
            IndicatorKind::Ge0 => !v.is_negative(),
            IndicatorKind::Gt0 => v.is_positive(),
        }
    }

    fn holds_f64(&self, v: f64) -> bool {
        match self {
            IndicatorKind::Eq0 => v == 0.0,
            IndicatorKind::Ge0 => v >= 0.0,
            IndicatorKind::Gt0 => v > 0.0,
        }
    }
}

/// One summand: `rcoef * q(x) * prod 1_{kind}(affine(x))`.
#[derive(Debug, Clone)]
pub struct AmnTerm {
    pub rcoef: BigRational,
    pub q: Poly,
    pub factors: Vec<(IndicatorKind, AffineForm)>,
}

/// Sum of terms over the cube `[lo, hi]^dim`.
#[derive(Debug, Clone)]
pub struct AmnTermSet {
    pub terms: Vec<AmnTerm>,
    pub dim: usize,
    pub lo: BigRational,
    pub hi: BigRational,
}

impl AmnTermSet {
    pub fn new(dim: usize, lo: BigRational, hi: BigRational) -> Self {
        AmnTermSet {
            terms: Vec::new(),
            dim,
            lo,
            hi,
        }
    }

    pub fn push(&mut self, term: AmnTerm) {
        debug_assert_eq!(term.q.dim(), self.dim);
        debug_assert!(term.factors.iter().all(|(_, a)| a.coeffs.len() == self.dim));
        if term.rcoef.is_zero() || term.q.is_zero() {
            return;
        }
        self.terms.push(term);
    }

    /// Exact pointwise value.
    pub fn eval(&self, x: &[BigRational]) -> BigRational {
        let mut acc = BigRational::zero();
        'term: for t in &self.terms {
            for (kind, affine) in &t.factors {
                let mut v = affine.offset.clone();
                for (c, xi) in affine.coeffs.iter().zip(x) {
                    v += c * xi;
                }
                if !kind.holds(&v) {
                    continue 'term;
                }
            }
            acc += &t.rcoef * t.q.eval(x);
        }
        acc
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        'term: for t in &self.terms {
            for (kind, affine) in &t.factors {
                let mut v = rat_to_f64(&affine.offset);
                for (c, xi) in affine.coeffs.iter().zip(x) {
                    v += rat_to_f64(c) * xi;
                }
                if !kind.holds_f64(v) {
                    continue 'term;
                }
            }
            acc += rat_to_f64(&t.rcoef) * t.q.eval_f64(x);
        }
        acc
    }

    /// Pointwise sum of two term sets over the same box.
    pub fn concat(mut self, other: AmnTermSet) -> AmnTermSet {
        debug_assert_eq!(self.dim, other.dim);
        self.terms.extend(other.terms);
        self
    }

    /// Reindex variables: new variable `k` is old variable `perm[k]`.
    pub fn permute_vars(&self, perm: &[usize]) -> AmnTermSet {
        assert_eq!(perm.len(), self.dim);
        let remap_poly = |p: &Poly| -> Poly {
            let mut out = Poly::zero(self.dim);
            for (e, c) in p.terms() {
                let ne: Vec<u32> = perm.iter().map(|&j| e[j]).collect();
                out.add_term(ne, c.clone());
            }
            out
        };
        let terms = self
            .terms
            .iter()
            .map(|t| AmnTerm {
                rcoef: t.rcoef.clone(),
                q: remap_poly(&t.q),
                factors: t
                    .factors
                    .iter()
                    .map(|(k, a)| {
                        (
                            *k,
                            AffineForm {
                                coeffs: perm.iter().map(|&j| a.coeffs[j].clone()).collect(),
                                offset: a.offset.clone(),
                            },
                        )
                    })
                    .collect(),
            })
            .collect();
        AmnTermSet {
            terms,
            dim: self.dim,
            lo: self.lo.clone(),
            hi: self.hi.clone(),
        }
    }

    /// Merge terms with identical factor lists (factors sorted canonically,
    /// scalar coefficients folded into the polynomials).
    fn coalesce(self) -> AmnTermSet {
        type Key = Vec<(IndicatorKind, Vec<BigRational>, BigRational)>;
        let mut merged: BTreeMap<Key, Poly> = BTreeMap::new();
        let dim = self.dim;
        for t in self.terms {
            let mut key: Key = t
                .factors
                .iter()
                .map(|(k, a)| (*k, a.coeffs.clone(), a.offset.clone()))
                .collect();
            key.sort();
            key.dedup();
            let scaled = t.q.scale(&t.rcoef);
            merged
                .entry(key)
                .and_modify(|q| *q = q.add(&scaled))
                .or_insert(scaled);
        }
        let terms = merged
            .into_iter()
            .filter(|(_, q)| !q.is_zero())
            .map(|(key, q)| AmnTerm {
                rcoef: BigRational::from_integer(1.into()),
                q,
                factors: key
                    .into_iter()
                    .map(|(k, coeffs, offset)| (k, AffineForm { coeffs, offset }))
                    .collect(),
            })
            .collect();
        AmnTermSet {
            terms,
            dim,
            lo: self.lo,
            hi: self.hi,
        }
    }

    /// Total value of a fully eliminated (0-dimensional) set.
    pub fn scalar(&self) -> BigRational {
        debug_assert_eq!(self.dim, 0);
        self.eval(&[])
    }
}

/// Satisfiability screen of a factor over the cube: `None` means the factor
/// is a constant (decide exactly), otherwise the min/max of the affine form.
fn affine_range(a: &AffineForm, lo: &BigRational, hi: &BigRational) -> (BigRational, BigRational) {
    let mut min = a.offset.clone();
    let mut max = a.offset.clone();
    for c in &a.coeffs {
        if c.is_positive() {
            min += c * lo;
            max += c * hi;
        } else {
            min += c * hi;
            max += c * lo;
        }
    }
    (min, max)
}

/// Outcome of resolving a factor against the box.
enum FactorScreen {
    AlwaysTrue,
    AlwaysFalse,
    Keep,
}

fn screen_factor(
    kind: IndicatorKind,
    a: &AffineForm,
    lo: &BigRational,
    hi: &BigRational,
) -> FactorScreen {
    if a.is_constant() {
        return if kind.holds(&a.offset) {
            FactorScreen::AlwaysTrue
        } else {
            FactorScreen::AlwaysFalse
        };
    }
    let (min, max) = affine_range(a, lo, hi);
    match kind {
        IndicatorKind::Ge0 if max.is_negative() => FactorScreen::AlwaysFalse,
        IndicatorKind::Ge0 if !min.is_negative() => FactorScreen::AlwaysTrue,
        IndicatorKind::Gt0 if !max.is_positive() => FactorScreen::AlwaysFalse,
        IndicatorKind::Gt0 if min.is_positive() => FactorScreen::AlwaysTrue,
        IndicatorKind::Eq0 if max.is_negative() || min.is_positive() => FactorScreen::AlwaysFalse,
        _ => FactorScreen::Keep,
    }
}

/// Candidate bound: a factor root `-rest/coeff` as an affine form of the
/// remaining variables, remembering the originating factor index.
struct Bound {
    idx: usize,
    form: AffineForm,
}

/// Integrate out the last variable over `[lo, hi]`.
///
/// The output's value equals the partial integral of the input for almost
/// every point of the reduced cube.
pub fn eliminate_last(ts: &AmnTermSet) -> Result<AmnTermSet, SemialgError> {
    if ts.dim == 0 {
        return Err(SemialgError::NothingToEliminate);
    }
    let rdim = ts.dim - 1;
    let last = rdim;
    let mut out = AmnTermSet::new(rdim, ts.lo.clone(), ts.hi.clone());

    'term: for (tidx, term) in ts.terms.iter().enumerate() {
        let mut passthrough: Vec<(IndicatorKind, AffineForm)> = Vec::new();
        let mut lowers: Vec<Bound> = Vec::new();
        let mut uppers: Vec<Bound> = Vec::new();
        for (fidx, (kind, affine)) in term.factors.iter().enumerate() {
            let c = &affine.coeffs[last];
            if c.is_zero() {
                passthrough.push((
                    *kind,
                    AffineForm {
                        coeffs: affine.coeffs[..rdim].to_vec(),
                        offset: affine.offset.clone(),
                    },
                ));
                continue;
            }
            if *kind == IndicatorKind::Eq0 {
                // The zero set is a single point of the fiber: null for the
                // integral, so the whole term vanishes almost everywhere.
                continue 'term;
            }
            let inv = -BigRational::from_integer(1.into()) / c;
            let form = AffineForm {
                coeffs: affine.coeffs[..rdim].iter().map(|a| a * &inv).collect(),
                offset: &affine.offset * &inv,
            };
            if c.is_positive() {
                lowers.push(Bound { idx: fidx, form });
            } else {
                uppers.push(Bound { idx: fidx, form });
            }
        }

        let anti = term.q.antiderivative(last);
        let degree = anti.max_var_degree();
        if degree > MAX_DEGREE {
            return Err(SemialgError::DegreeOverflow { term: tidx, degree });
        }
        let lo_form = AffineForm::constant(rdim, ts.lo.clone());
        let hi_form = AffineForm::constant(rdim, ts.hi.clone());

        // Bound-origin choices: None stands for the domain endpoint.
        let lower_choices: Vec<Option<usize>> = std::iter::once(None)
            .chain((0..lowers.len()).map(Some))
            .collect();
        let upper_choices: Vec<Option<usize>> = std::iter::once(None)
            .chain((0..uppers.len()).map(Some))
            .collect();

        for &lc in &lower_choices {
            for &uc in &upper_choices {
                let mut gates = passthrough.clone();
                let lower_form = match lc {
                    None => {
                        // Domain endpoint is the active lower bound: every
                        // candidate root sits at or below it.
                        for b in &lowers {
                            gates.push((IndicatorKind::Ge0, lo_form.sub(&b.form)));
                        }
                        &lo_form
                    }
                    Some(k) => {
                        let chosen = &lowers[k];
                        gates.push((IndicatorKind::Gt0, chosen.form.sub(&lo_form)));
                        gates.push((IndicatorKind::Gt0, hi_form.sub(&chosen.form)));
                        for (j, b) in lowers.iter().enumerate() {
                            if j == k {
                                continue;
                            }
                            // Strict dominance against earlier indices so a
                            // tie elects the lowest-index candidate.
                            let kind = if b.idx < chosen.idx {
                                IndicatorKind::Gt0
                            } else {
                                IndicatorKind::Ge0
                            };
                            gates.push((kind, chosen.form.sub(&b.form)));
                        }
                        &chosen.form
                    }
                };
                let upper_form = match uc {
                    None => {
                        for b in &uppers {
                            gates.push((IndicatorKind::Ge0, b.form.sub(&hi_form)));
                        }
                        &hi_form
                    }
                    Some(m) => {
                        let chosen = &uppers[m];
                        gates.push((IndicatorKind::Gt0, chosen.form.sub(&lo_form)));
                        gates.push((IndicatorKind::Gt0, hi_form.sub(&chosen.form)));
                        for (j, b) in uppers.iter().enumerate() {
                            if j == m {
                                continue;
                            }
                            let kind = if b.idx < chosen.idx {
                                IndicatorKind::Gt0
                            } else {
                                IndicatorKind::Ge0
                            };
                            gates.push((kind, b.form.sub(&chosen.form)));
                        }
                        &chosen.form
                    }
                };
                if lc.is_some() && uc.is_some() {
                    gates.push((IndicatorKind::Gt0, upper_form.sub(lower_form)));
                }

                // Resolve constant gates and screen the rest against the box.
                let mut kept: Vec<(IndicatorKind, AffineForm)> = Vec::new();
                let mut feasible = true;
                for (kind, form) in gates {
                    match screen_factor(kind, &form, &ts.lo, &ts.hi) {
                        FactorScreen::AlwaysTrue => {}
                        FactorScreen::AlwaysFalse => {
                            feasible = false;
                            break;
                        }
                        FactorScreen::Keep => kept.push((kind, form)),
                    }
                }
                if !feasible {
                    continue;
                }

                let q = anti
                    .substitute_last_affine(upper_form)
                    .sub(&anti.substitute_last_affine(lower_form));
                out.push(AmnTerm {
                    rcoef: term.rcoef.clone(),
                    q,
                    factors: kept,
                });
            }
        }
    }
    Ok(out.coalesce())
}

/// Iterated elimination of all variables; the resulting scalar is the exact
/// integral over the cube.
pub fn integrate_all(mut ts: AmnTermSet) -> Result<BigRational, SemialgError> {
    while ts.dim > 0 {
        ts = eliminate_last(&ts)?;
    }
    Ok(ts.scalar())
}

// ---------------------------------------------------------------------------
// Risk assembly at a fixed parameter point
// ---------------------------------------------------------------------------

/// Symbolic pieces of a sum `sum_k rcoef_k * poly_k * gates_k` used while
/// assembling integrands.
type TermParts = Vec<(BigRational, Poly, Vec<(IndicatorKind, AffineForm)>)>;

fn network_parts(theta: &ParamVector) -> TermParts {
    let d = theta.shape.d;
    let mut parts: TermParts = Vec::new();
    parts.push((
        rat_from_f64(theta.c()),
        Poly::constant(d, BigRational::from_integer(1.into())),
        vec![],
    ));
    let degen = degenerate_set(theta);
    for i in 1..=theta.shape.h {
        if degen.contains(&i) {
            continue; // identically zero contribution
        }
        let v = rat_from_f64(theta.v(i));
        if v.is_zero() {
            continue;
        }
        let coeffs: Vec<BigRational> = theta.w_row(i).iter().map(|&w| rat_from_f64(w)).collect();
        let offset = rat_from_f64(theta.b(i));
        let pre = AffineForm {
            coeffs: coeffs.clone(),
            offset: offset.clone(),
        };
        parts.push((
            v,
            Poly::affine(&coeffs, offset),
            vec![(IndicatorKind::Ge0, pre)],
        ));
    }
    parts
}

fn piecewise_parts(pp: &PiecewisePoly, sign: i64) -> TermParts {
    pp.pieces
        .iter()
        .map(|piece| {
            let gates = piece
                .constraints
                .iter()
                .map(|c| {
                    (
                        IndicatorKind::Ge0,
                        AffineForm {
                            coeffs: c.normal.clone(),
                            offset: c.offset.clone(),
                        },
                    )
                })
                .collect();
            (
                BigRational::from_integer(sign.into()),
                piece.poly.clone(),
                gates,
            )
        })
        .collect()
}

fn multiply_parts(a: &TermParts, b: &TermParts) -> TermParts {
    let mut out = TermParts::new();
    for (ra, qa, fa) in a {
        for (rb, qb, fb) in b {
            let mut factors = fa.clone();
            factors.extend(fb.iter().cloned());
            factors.sort_by(|x, y| {
                (x.0, &x.1.coeffs, &x.1.offset).cmp(&(y.0, &y.1.coeffs, &y.1.offset))
            });
            factors.dedup();
            out.push((ra * rb, qa.mul(qb), factors));
        }
    }
    out
}

fn parts_into_set(parts: TermParts, dim: usize, lo: BigRational, hi: BigRational) -> AmnTermSet {
    let mut ts = AmnTermSet::new(dim, lo, hi);
    for (rcoef, q, factors) in parts {
        ts.push(AmnTerm { rcoef, q, factors });
    }
    ts.coalesce()
}

/// The risk integrand `(N_theta - f)^2 p` as a term set at fixed `theta`.
pub fn risk_integrand(p: &Problem, theta: &ParamVector) -> AmnTermSet {
    let d = p.shape.d;
    let (lo, hi) = p.domain_rat();
    let mut residual = network_parts(theta);
    residual.extend(piecewise_parts(&p.target, -1));
    let squared = multiply_parts(&residual, &residual);
    let weighted = multiply_parts(&squared, &piecewise_parts(&p.density, 1));
    parts_into_set(weighted, d, lo.clone(), hi.clone())
}

/// Exact risk by iterated variable elimination (d <= 3).
pub fn risk_by_elimination(p: &Problem, theta: &ParamVector) -> Result<f64, SemialgError> {
    if p.shape.d > 3 {
        return Err(SemialgError::DimTooLarge(p.shape.d));
    }
    let value = integrate_all(risk_integrand(p, theta))?;
    Ok(rat_to_f64(&value))
}

/// Generalized gradient by elimination: each component integrand is the
/// weighted residual times the component's feature, gated by the neuron's
/// active halfspace where applicable.
pub fn gradient_by_elimination(p: &Problem, theta: &ParamVector) -> Result<Vec<f64>, SemialgError> {
    if p.shape.d > 3 {
        return Err(SemialgError::DimTooLarge(p.shape.d));
    }
    let d = p.shape.d;
    let (lo, hi) = p.domain_rat();
    let two = BigRational::from_integer(2.into());
    let mut residual = network_parts(theta);
    residual.extend(piecewise_parts(&p.target, -1));
    let weighted = multiply_parts(&residual, &piecewise_parts(&p.density, 1));

    let mut grad = vec![0.0; theta.dim()];
    let degen = degenerate_set(theta);
    for i in 1..=p.shape.h {
        if degen.contains(&i) {
            continue; // components stay exactly 0.0
        }
        let coeffs: Vec<BigRational> = theta.w_row(i).iter().map(|&w| rat_from_f64(w)).collect();
        let offset = rat_from_f64(theta.b(i));
        let pre = AffineForm {
            coeffs: coeffs.clone(),
            offset: offset.clone(),
        };
        let gate = vec![(IndicatorKind::Gt0, pre)];
        let v2 = rat_from_f64(theta.v(i)) * &two;
        for j in 1..=d {
            let mut e = vec![0u32; d];
            e[j - 1] = 1;
            let feature: TermParts = vec![(
                v2.clone(),
                Poly::monomial(e, BigRational::from_integer(1.into())),
                gate.clone(),
            )];
            let ts = parts_into_set(
                multiply_parts(&weighted, &feature),
                d,
                lo.clone(),
                hi.clone(),
            );
            grad[theta.w_index(i, j)] = rat_to_f64(&integrate_all(ts)?);
        }
        let feature: TermParts = vec![(
            v2.clone(),
            Poly::constant(d, BigRational::from_integer(1.into())),
            gate.clone(),
        )];
        let ts = parts_into_set(
            multiply_parts(&weighted, &feature),
            d,
            lo.clone(),
            hi.clone(),
        );
        grad[theta.b_index(i)] = rat_to_f64(&integrate_all(ts)?);

        let feature: TermParts = vec![(
            two.clone(),
            Poly::affine(&coeffs, offset.clone()),
            gate.clone(),
        )];
        let ts = parts_into_set(
            multiply_parts(&weighted, &feature),
            d,
            lo.clone(),
            hi.clone(),
        );
        grad[theta.v_index(i)] = rat_to_f64(&integrate_all(ts)?);
    }
    let feature: TermParts = vec![(
        two,
        Poly::constant(d, BigRational::from_integer(1.into())),
        vec![],
    )];
    let ts = parts_into_set(
        multiply_parts(&weighted, &feature),
        d,
        lo.clone(),
        hi.clone(),
    );
    grad[theta.c_index()] = rat_to_f64(&integrate_all(ts)?);
    Ok(grad)
}
