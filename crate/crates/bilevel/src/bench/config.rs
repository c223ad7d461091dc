//! Flat `key = value` configuration grammar with `#` comments and dotted keys
//! for nesting. Zero-dependency parsing, canonical re-emission, and strict
//! unknown-key rejection so typos surface as errors naming the offending key.

use std::collections::BTreeMap;

use crate::dynamics::{MomentumRule, StepSchedule};
use crate::error::{Error, Result};
use crate::problems::{
    convex_quadratic, nonconvex_sine, synthetic_hyperclean, BilevelProblem, HypercleanConfig,
};
use crate::solvers::{MethodKind, OuterOptimizer, SolverConfig};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig> {
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = match line.find('#') {
                Some(pos) => &line[..pos],
                None => line,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty()
                || !key
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
            {
                return Err(Error::Config(format!(
                    "line {}: malformed key '{key}'",
                    lineno + 1
                )));
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::Config(format!(
                    "line {}: duplicate key '{key}'",
                    lineno + 1
                )));
            }
        }
        Ok(RawConfig { entries })
    }

    /// Canonical text form: sorted `key = value` lines. Parsing the emission
    /// reproduces the same entries, so emit ∘ parse is idempotent.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn merge_overrides(&mut self, other: &RawConfig) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    fn finish(self) -> Result<()> {
        if let Some(key) = self.entries.keys().next() {
            return Err(Error::Config(format!("unknown key '{key}'")));
        }
        Ok(())
    }
}

fn parse_typed<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| Error::Config(format!("key '{key}': cannot parse value '{value}'")))
}

fn take_parsed<T: std::str::FromStr>(raw: &mut RawConfig, key: &str) -> Result<Option<T>> {
    match raw.take(key) {
        Some(v) => Ok(Some(parse_typed(key, &v)?)),
        None => Ok(None),
    }
}

fn parse_f64_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|s| parse_typed::<f64>(key, s.trim()))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProblemSpec {
    Sine,
    Quadratic { n: usize },
    Hyperclean(HypercleanConfig),
}

impl ProblemSpec {
    pub fn label(&self) -> &'static str {
        match self {
            ProblemSpec::Sine => "nonconvex-sine",
            ProblemSpec::Quadratic { .. } => "convex-quadratic",
            ProblemSpec::Hyperclean(_) => "synthetic-hyperclean",
        }
    }

    pub fn build(&self) -> Result<Box<dyn BilevelProblem>> {
        Ok(match self {
            ProblemSpec::Sine => Box::new(nonconvex_sine()),
            ProblemSpec::Quadratic { n } => Box::new(convex_quadratic(*n)?),
            ProblemSpec::Hyperclean(cfg) => Box::new(synthetic_hyperclean(cfg)?),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitSpec {
    Explicit(Vec<f64>),
    /// Sampled per run from the feasible box (clipped to a ±10 window for
    /// effectively-unbounded boxes), seeded by the root seed and run index.
    Random,
}

/// Everything one experiment needs: problem, solver, initial points,
/// repetitions, output location, and execution knobs.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub solver: SolverConfig,
    pub x0: InitSpec,
    pub z0: InitSpec,
    pub repetitions: usize,
    pub output: Option<String>,
    pub parallelism: usize,
    /// When false (the default), the wall-time column is written as zero so
    /// output files are byte-reproducible.
    pub timing: bool,
    pub root_seed: u64,
}

impl ExperimentConfig {
    pub fn from_raw(mut raw: RawConfig) -> Result<ExperimentConfig> {
        let problem = match raw.take("problem") {
            None => return Err(Error::Config("missing key 'problem'".into())),
            Some(name) => match name.as_str() {
                "nonconvex-sine" => ProblemSpec::Sine,
                "convex-quadratic" => ProblemSpec::Quadratic {
                    n: take_parsed(&mut raw, "problem.n")?.unwrap_or(50),
                },
                "synthetic-hyperclean" => ProblemSpec::Hyperclean(HypercleanConfig {
                    n_train: take_parsed(&mut raw, "problem.n_train")?.unwrap_or(40),
                    n_val: take_parsed(&mut raw, "problem.n_val")?.unwrap_or(40),
                    n_features: take_parsed(&mut raw, "problem.n_features")?.unwrap_or(6),
                    n_classes: take_parsed(&mut raw, "problem.n_classes")?.unwrap_or(3),
                    corrupt_fraction: take_parsed(&mut raw, "problem.corrupt_fraction")?
                        .unwrap_or(0.3),
                    n_hidden: take_parsed(&mut raw, "problem.n_hidden")?.unwrap_or(0),
                    seed: take_parsed(&mut raw, "problem.seed")?.unwrap_or(42),
                }),
                other => {
                    return Err(Error::Config(format!(
                        "key 'problem': unknown problem '{other}'"
                    )))
                }
            },
        };

        let method = match raw.take("solver.method") {
            None => return Err(Error::Config("missing key 'solver.method'".into())),
            Some(name) => MethodKind::parse(&name)
                .map_err(|_| Error::Config(format!("key 'solver.method': unknown method '{name}'")))?,
        };

        let mut solver = SolverConfig::new(method);
        if let Some(t) = take_parsed(&mut raw, "solver.T")? {
            solver.outer_iters = t;
        }
        if let Some(k) = take_parsed(&mut raw, "solver.K")? {
            solver.inner_iters = k;
        }
        if let Some(alpha) = raw.take("solver.alpha_inner") {
            let values = parse_f64_list("solver.alpha_inner", &alpha)?;
            solver.inner_schedule = if values.len() == 1 {
                StepSchedule::constant(values[0])
                    .map_err(|e| Error::Config(format!("key 'solver.alpha_inner': {e}")))?
            } else {
                StepSchedule::per_step(values)
                    .map_err(|e| Error::Config(format!("key 'solver.alpha_inner': {e}")))?
            };
        }
        if let Some(a) = take_parsed(&mut raw, "solver.alpha_x")? {
            solver.alpha_x = a;
        }
        if let Some(a) = take_parsed(&mut raw, "solver.alpha_z")? {
            solver.alpha_z = a;
        }
        solver.truncate_at = take_parsed(&mut raw, "solver.truncate_at")?;
        if let Some(mu) = take_parsed(&mut raw, "solver.mu")? {
            solver.mu = Some(mu);
        } else if method == MethodKind::Bda {
            solver.mu = Some(0.4);
        }
        if let Some(name) = raw.take("solver.outer") {
            solver.outer_optimizer = match name.as_str() {
                "projected-gd" => OuterOptimizer::ProjectedGradient,
                "adam" => OuterOptimizer::AdaptiveMoment,
                other => {
                    return Err(Error::Config(format!(
                        "key 'solver.outer': unknown optimizer '{other}'"
                    )))
                }
            };
        }
        if let Some(seed) = take_parsed(&mut raw, "solver.seed")? {
            solver.seed = seed;
        }
        if let Some(name) = raw.take("solver.momentum_rule") {
            solver.momentum_rule = match name.as_str() {
                "standard" => MomentumRule::Standard,
                "damped" => MomentumRule::Damped,
                other => {
                    return Err(Error::Config(format!(
                        "key 'solver.momentum_rule': unknown rule '{other}'"
                    )))
                }
            };
        }
        if let Some(v) = take_parsed(&mut raw, "solver.cg_tol")? {
            solver.cg_tol = v;
        }
        solver.cg_maxiter = take_parsed(&mut raw, "solver.cg_maxiter")?;
        solver.neumann_alpha = take_parsed(&mut raw, "solver.neumann_alpha")?;
        if let Some(v) = take_parsed(&mut raw, "solver.neumann_terms")? {
            solver.neumann_terms = v;
        }

        let init_mode = raw.take("init");
        let x0 = match raw.take("init.x0") {
            Some(v) => InitSpec::Explicit(parse_f64_list("init.x0", &v)?),
            None => InitSpec::Random,
        };
        let z0 = match raw.take("init.z0") {
            Some(v) => InitSpec::Explicit(parse_f64_list("init.z0", &v)?),
            None => InitSpec::Random,
        };
        if let Some(mode) = init_mode {
            if mode != "random" {
                return Err(Error::Config(format!(
                    "key 'init': expected 'random', got '{mode}'"
                )));
            }
        }

        let repetitions = take_parsed(&mut raw, "run.repetitions")?.unwrap_or(1);
        if repetitions == 0 {
            return Err(Error::Config("key 'run.repetitions': must be at least 1".into()));
        }
        let output = raw.take("run.output");
        let parallelism = take_parsed(&mut raw, "run.parallelism")?.unwrap_or(1);
        if parallelism == 0 {
            return Err(Error::Config("key 'run.parallelism': must be at least 1".into()));
        }
        let timing = match raw.take("run.timing") {
            None => false,
            Some(v) => match v.as_str() {
                "true" => true,
                "false" => false,
                other => {
                    return Err(Error::Config(format!(
                        "key 'run.timing': expected true or false, got '{other}'"
                    )))
                }
            },
        };
        let root_seed = take_parsed(&mut raw, "run.seed")?.unwrap_or(0);

        raw.finish()?;
        Ok(ExperimentConfig {
            problem,
            solver,
            x0,
            z0,
            repetitions,
            output,
            parallelism,
            timing,
            root_seed,
        })
    }
}
