//! Experiment configuration: JSON loading with exact `p/q` rational
//! literals, validation that names the offending field, default resolution,
//! and the canonical resolved-config dump (a fixed point of load -> dump).

use std::path::Path;

use num_rational::BigRational;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{NetworkShape, ParamVector};
use crate::poly::{AffineConstraint, Piece, PiecewisePoly, Poly, MAX_DEGREE};
use crate::rational::{rat_from_str, rat_to_string};
use crate::risk::{Evaluator, Problem};
use crate::solver::SolverConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error at line {line}, column {column}: {msg}")]
    Parse {
        line: usize,
        column: usize,
        msg: String,
    },
    #[error("invalid config field `{field}`: {msg}")]
    Validation { field: String, msg: String },
}

fn invalid(field: impl Into<String>, msg: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        field: field.into(),
        msg: msg.into(),
    }
}

/// Piecewise-polynomial literal: rationals as `p/q` strings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PpLiteral {
    pub dim: usize,
    pub pieces: Vec<PieceLiteral>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PieceLiteral {
    #[serde(default)]
    pub constraints: Vec<ConstraintLiteral>,
    pub poly: Vec<MonomialLiteral>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ConstraintLiteral {
    pub normal: Vec<String>,
    pub offset: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MonomialLiteral {
    pub exps: Vec<u32>,
    pub coef: String,
}

impl PpLiteral {
    pub fn from_pp(pp: &PiecewisePoly) -> Self {
        PpLiteral {
            dim: pp.dim,
            pieces: pp
                .pieces
                .iter()
                .map(|piece| PieceLiteral {
                    constraints: piece
                        .constraints
                        .iter()
                        .map(|c| ConstraintLiteral {
                            normal: c.normal.iter().map(rat_to_string).collect(),
                            offset: rat_to_string(&c.offset),
                        })
                        .collect(),
                    poly: piece
                        .poly
                        .terms()
                        .map(|(e, c)| MonomialLiteral {
                            exps: e.clone(),
                            coef: rat_to_string(c),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn to_pp(&self, field: &str) -> Result<PiecewisePoly, ConfigError> {
        let parse = |s: &str, f: String| -> Result<BigRational, ConfigError> {
            rat_from_str(s).map_err(|e| invalid(f, e.to_string()))
        };
        let mut pieces = Vec::with_capacity(self.pieces.len());
        for (pi, piece) in self.pieces.iter().enumerate() {
            let mut constraints = Vec::with_capacity(piece.constraints.len());
            for (ci, c) in piece.constraints.iter().enumerate() {
                if c.normal.len() != self.dim {
                    return Err(invalid(
                        format!("{field}.pieces[{pi}].constraints[{ci}].normal"),
                        format!("expected {} entries, got {}", self.dim, c.normal.len()),
                    ));
                }
                let normal = c
                    .normal
                    .iter()
                    .enumerate()
                    .map(|(k, s)| {
                        parse(
                            s,
                            format!("{field}.pieces[{pi}].constraints[{ci}].normal[{k}]"),
                        )
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let offset = parse(
                    &c.offset,
                    format!("{field}.pieces[{pi}].constraints[{ci}].offset"),
                )?;
                constraints.push(AffineConstraint::new(normal, offset));
            }
            let mut poly = Poly::zero(self.dim);
            for (mi, m) in piece.poly.iter().enumerate() {
                if m.exps.len() != self.dim {
                    return Err(invalid(
                        format!("{field}.pieces[{pi}].poly[{mi}].exps"),
                        format!("expected {} entries, got {}", self.dim, m.exps.len()),
                    ));
                }
                if m.exps.iter().any(|&e| e > MAX_DEGREE) {
                    return Err(invalid(
                        format!("{field}.pieces[{pi}].poly[{mi}].exps"),
                        format!("degree exceeds the cap {MAX_DEGREE}"),
                    ));
                }
                let coef = parse(&m.coef, format!("{field}.pieces[{pi}].poly[{mi}].coef"))?;
                poly.add_term(m.exps.clone(), coef);
            }
            pieces.push(Piece { constraints, poly });
        }
        Ok(PiecewisePoly::new(self.dim, pieces))
    }

    /// Canonicalize the rational strings (reduced form, sign on numerator).
    fn canonicalize(&self, field: &str) -> Result<PpLiteral, ConfigError> {
        Ok(PpLiteral::from_pp(&self.to_pp(field)?))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ProblemSection {
    pub d: usize,
    pub h: usize,
    pub domain: [f64; 2],
    pub target: PpLiteral,
    pub density: PpLiteral,
    #[serde(default)]
    pub evaluator: Option<Evaluator>,
}

/// Initialization: an explicit parameter list or a seeded draw.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum InitSection {
    Explicit {
        theta: Vec<f64>,
    },
    Seeded {
        seed: u64,
        #[serde(default = "default_init_scale")]
        scale: f64,
    },
}

fn default_init_scale() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct DiagnosticsSection {
    pub probe_epsilon: f64,
    pub probe_n: usize,
    pub fit_window_fraction: f64,
    pub witness_n: usize,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection {
            probe_epsilon: 1e-3,
            probe_n: 200,
            fit_window_fraction: 0.1,
            witness_n: 16,
        }
    }
}

/// Full experiment description; the deserialized form may omit the solver
/// and diagnostics sections and the evaluator.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    pub init: InitSection,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
}

impl ExperimentConfig {
    pub fn from_str_json(s: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(s).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })
    }

    /// Fill defaults and canonicalize rational literals; resolved configs
    /// are fixed points of load -> dump.
    pub fn resolve(mut self) -> Result<Self, ConfigError> {
        if self.problem.evaluator.is_none() {
            self.problem.evaluator = Some(if self.problem.d == 1 {
                Evaluator::Exact1d
            } else if self.problem.d <= 3 {
                Evaluator::Elimination
            } else {
                Evaluator::Quadrature
            });
        }
        self.problem.target = self.problem.target.canonicalize("target")?;
        self.problem.density = self.problem.density.canonicalize("density")?;
        Ok(self)
    }

    /// Validate and build the problem and initial parameter vector.
    pub fn build(&self, seed_override: Option<u64>) -> Result<(Problem, ParamVector), ConfigError> {
        let p = &self.problem;
        if p.target.dim != p.d {
            return Err(invalid(
                "target.dim",
                format!(
                    "target dimension {} must equal problem d {}",
                    p.target.dim, p.d
                ),
            ));
        }
        if p.density.dim != p.d {
            return Err(invalid(
                "density.dim",
                format!(
                    "density dimension {} must equal problem d {}",
                    p.density.dim, p.d
                ),
            ));
        }
        if p.domain[0] >= p.domain[1] {
            return Err(invalid(
                "problem.domain",
                "must satisfy domain[0] < domain[1]",
            ));
        }
        let shape = NetworkShape::new(p.d, p.h, p.domain[0], p.domain[1])
            .map_err(|e| invalid("problem", e.to_string()))?;
        let target = p.target.to_pp("target")?;
        let density = p.density.to_pp("density")?;
        let evaluator = p.evaluator.unwrap_or(if p.d == 1 {
            Evaluator::Exact1d
        } else {
            Evaluator::Elimination
        });
        let problem = Problem::new(shape, target, density, evaluator)
            .map_err(|e| invalid("problem.evaluator", e.to_string()))?;

        let theta = match &self.init {
            InitSection::Explicit { theta } => {
                if theta.len() != shape.param_count() {
                    return Err(invalid(
                        "init.theta",
                        format!(
                            "expected {} parameters for d={}, h={}, got {}",
                            shape.param_count(),
                            p.d,
                            p.h,
                            theta.len()
                        ),
                    ));
                }
                ParamVector::new(shape, theta.clone())
                    .map_err(|e| invalid("init.theta", e.to_string()))?
            }
            InitSection::Seeded { seed, scale } => {
                let s = seed_override.unwrap_or(*seed);
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let vals = (0..shape.param_count())
                    .map(|_| rng.gen_range(-scale.abs()..scale.abs().max(1e-12)))
                    .collect();
                ParamVector::new(shape, vals).map_err(|e| invalid("init", e.to_string()))?
            }
        };
        Ok((problem, theta))
    }

    pub fn dump(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }
}

/// Read, parse and resolve a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    ExperimentConfig::from_str_json(&text)?.resolve()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> &'static str {
        r#"{
            "problem": {
                "d": 1, "h": 1, "domain": [0.0, 1.0],
                "target": { "dim": 1, "pieces": [ { "poly": [ { "exps": [0], "coef": "0" } ] } ] },
                "density": { "dim": 1, "pieces": [ { "poly": [ { "exps": [0], "coef": "1" } ] } ] }
            },
            "init": { "theta": [1.0, 0.0, 1.0, 0.0] }
        }"#
    }

    #[test]
    fn minimal_config_loads_with_defaults() {
        let cfg = ExperimentConfig::from_str_json(minimal_json())
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(cfg.solver, SolverConfig::default());
        assert_eq!(cfg.problem.evaluator, Some(Evaluator::Exact1d));
        assert_eq!(cfg.diagnostics.probe_n, 200);
        let (p, theta) = cfg.build(None).unwrap();
        assert_eq!(theta.theta, vec![1.0, 0.0, 1.0, 0.0]);
        assert!(p.density_warning.is_none());
    }

    #[test]
    fn dimension_mismatch_names_the_field() {
        let bad = minimal_json().replace(r#""d": 1, "h": 1"#, r#""d": 2, "h": 1"#);
        let cfg = ExperimentConfig::from_str_json(&bad)
            .unwrap()
            .resolve()
            .unwrap();
        match cfg.build(None) {
            Err(ConfigError::Validation { field, .. }) => assert_eq!(field, "target.dim"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn negative_density_loads_with_audit_warning() {
        let bad = minimal_json().replace(
            r#""density": { "dim": 1, "pieces": [ { "poly": [ { "exps": [0], "coef": "1" } ] } ] }"#,
            r#""density": { "dim": 1, "pieces": [ { "poly": [ { "exps": [0], "coef": "-1/3" } ] } ] }"#,
        );
        let cfg = ExperimentConfig::from_str_json(&bad)
            .unwrap()
            .resolve()
            .unwrap();
        let (p, _) = cfg.build(None).unwrap();
        assert!(p.density_warning.is_some());
    }

    #[test]
    fn resolved_dump_is_a_fixed_point() {
        let cfg = ExperimentConfig::from_str_json(minimal_json())
            .unwrap()
            .resolve()
            .unwrap();
        let dump1 = cfg.dump();
        let cfg2 = ExperimentConfig::from_str_json(&dump1)
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(dump1, cfg2.dump());
    }

    #[test]
    fn parse_error_reports_position() {
        match ExperimentConfig::from_str_json("{ not json") {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rationals_are_canonicalized() {
        let json = minimal_json().replace(r#""coef": "1""#, r#""coef": "4/6""#);
        let cfg = ExperimentConfig::from_str_json(&json)
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(cfg.problem.density.pieces[0].poly[0].coef, "2/3");
    }

    #[test]
    fn seeded_init_is_deterministic_and_overridable() {
        let json = minimal_json().replace(
            r#""init": { "theta": [1.0, 0.0, 1.0, 0.0] }"#,
            r#""init": { "seed": 3, "scale": 0.5 }"#,
        );
        let cfg = ExperimentConfig::from_str_json(&json)
            .unwrap()
            .resolve()
            .unwrap();
        let (_, t1) = cfg.build(None).unwrap();
        let (_, t2) = cfg.build(None).unwrap();
        assert_eq!(t1.theta, t2.theta);
        let (_, t3) = cfg.build(Some(4)).unwrap();
        assert_ne!(t1.theta, t3.theta);
        assert!(t1.theta.iter().all(|v| v.abs() <= 0.5));
    }
}
