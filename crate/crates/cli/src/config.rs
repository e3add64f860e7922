//! Experiment configuration (TOML).
//!
//! A minimal config only needs a problem source and `T`:
//!
//! ```toml
//! T = 10000
//!
//! [problem]
//! generator = "consensus-quadratic"
//! graph = "cycle:5"
//! a = [1.0, 2.0, 3.0, 4.0, 5.0]
//! ```
//!
//! Defaults: `beta` 1.0 (or the problem file's own value), `seeds = [0]`,
//! `stride = 1`, all probes off, one block per edge with uniform
//! probabilities for generated problems. `seeds` also accepts a single
//! integer or an inclusive range string such as `"0..199"`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::bench::BenchmarkKind;
use crate::error::{CliError, Result};
use crate::problem_file::ProblemFile;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "T")]
    pub iterations: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default = "default_seeds", deserialize_with = "de_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_stride")]
    pub stride: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Iteration window `[from, to]` for the fitted slopes in the summary.
    /// Defaults to the second half of the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<[u64; 2]>,
    pub problem: ProblemSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionSpec>,
    #[serde(default)]
    pub probes: ProbeFlags,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_stride() -> u64 {
    1
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SeedsRepr {
    One(u64),
    List(Vec<u64>),
    Range(String),
}

fn de_seeds<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<u64>, D::Error> {
    match SeedsRepr::deserialize(d)? {
        SeedsRepr::One(s) => Ok(vec![s]),
        SeedsRepr::List(v) => Ok(v),
        SeedsRepr::Range(s) => parse_seed_range(&s).map_err(serde::de::Error::custom),
    }
}

/// Parses `a..b` (inclusive) into the seeds `a, a+1, ..., b`.
pub fn parse_seed_range(s: &str) -> std::result::Result<Vec<u64>, String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("seed range `{s}` is not of the form a..b"))?;
    let num = |t: &str| {
        t.trim()
            .parse::<u64>()
            .map_err(|_| format!("`{t}` is not a seed"))
    };
    let (a, b) = (num(a)?, num(b)?);
    if a > b {
        return Err(format!("seed range `{s}` is empty"));
    }
    Ok((a..=b).collect())
}

/// Exactly one of `generator`, `file` or `inline` must be set. The data
/// fields only apply to generators.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    /// Builtin (`cycle:5`, `path:4`, `complete:3`, `star:6`) or a graph file.
    /// Defaults to a cycle (a path below 3 nodes) over the data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    /// Quadratic weights for `consensus-quadratic`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<f64>,
    /// `|x_i| <= box_bound` for every node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_bound: Option<f64>,
    /// `|z_l| <= z_bound` for every edge variable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inline: Option<ProblemFile>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<Vec<usize>>>,
    /// Uniform when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_probs: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeFlags {
    #[serde(default)]
    pub shadow: bool,
    #[serde(default)]
    pub lyapunov: bool,
    #[serde(default)]
    pub ergodic: bool,
    /// Compute the constants of the `O(1/T)` bounds and report them in the
    /// summary. Needs compact sets.
    #[serde(default)]
    pub rate_bound: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_resolution: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directions: Option<usize>,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

impl ExperimentConfig {
    /// A config with every default filled in.
    pub fn new(iterations: u64, problem: ProblemSource) -> Self {
        Self {
            iterations,
            beta: None,
            seeds: default_seeds(),
            stride: default_stride(),
            output: None,
            x0: None,
            fit_window: None,
            problem,
            partition: None,
            probes: ProbeFlags::default(),
        }
    }

    /// Checks everything that does not need to build the problem. Relative
    /// file names are resolved against `base`.
    pub fn validate(&self, base: &Path) -> Result<()> {
        if self.iterations == 0 {
            return Err(invalid("T must be at least 1"));
        }
        if self.stride == 0 {
            return Err(invalid("stride must be at least 1"));
        }
        if self.stride > self.iterations {
            return Err(invalid(format!(
                "stride {} exceeds T = {}, nothing would be recorded",
                self.stride, self.iterations
            )));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds must not be empty"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(invalid(format!("seed {} is listed twice", w[0])));
        }
        if let Some(b) = self.beta {
            if !(b > 0.0 && b.is_finite()) {
                return Err(invalid(format!("beta must be positive and finite, got {b}")));
            }
        }
        if let Some(x0) = &self.x0 {
            if x0.iter().any(|v| !v.is_finite()) {
                return Err(invalid("x0 must be finite"));
            }
        }
        if let Some([a, b]) = self.fit_window {
            if a == 0 || a >= b {
                return Err(invalid(format!("fit_window [{a}, {b}] must satisfy 0 < from < to")));
            }
        }
        if self.probes.rate_bound && !self.probes.ergodic {
            return Err(invalid("probes.rate_bound needs probes.ergodic"));
        }
        if let Some(r) = self.probes.grid_resolution {
            if r < 3 {
                return Err(invalid("probes.grid_resolution must be at least 3"));
            }
        }
        if let Some(part) = &self.partition {
            if let Some(probs) = &part.block_probs {
                if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
                    return Err(invalid(format!("block probability {p} is not positive")));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(invalid(format!("block_probs sum to {total}, not 1")));
                }
                if let Some(blocks) = &part.blocks {
                    if blocks.len() != probs.len() {
                        return Err(invalid(format!(
                            "{} blocks but {} block_probs",
                            blocks.len(),
                            probs.len()
                        )));
                    }
                }
            }
        }
        self.problem.validate(base)
    }
}

impl ProblemSource {
    pub fn generator(kind: BenchmarkKind) -> Self {
        Self {
            generator: Some(kind.name().to_string()),
            ..Self::default()
        }
    }

    fn validate(&self, base: &Path) -> Result<()> {
        let sources = [
            self.generator.is_some(),
            self.file.is_some(),
            self.inline.is_some(),
        ];
        match sources.iter().filter(|s| **s).count() {
            1 => {}
            0 => return Err(invalid("problem needs one of generator, file or inline")),
            _ => return Err(invalid("problem sets more than one of generator, file and inline")),
        }
        if let Some(name) = &self.generator {
            name.parse::<BenchmarkKind>()?;
            if let Some(g) = &self.graph {
                if crate::graph_file::builtin_graph(g).is_none() {
                    let path = base.join(g);
                    if !path.is_file() {
                        return Err(invalid(format!("graph file {} does not exist", path.display())));
                    }
                }
            }
            return Ok(());
        }
        let generator_only = [
            ("graph", self.graph.is_some()),
            ("a", self.a.is_some()),
            ("weights", self.weights.is_some()),
            ("w", self.w.is_some()),
            ("b", self.b.is_some()),
            ("pi", self.pi.is_some()),
            ("box_bound", self.box_bound.is_some()),
            ("z_bound", self.z_bound.is_some()),
        ];
        if let Some((name, _)) = generator_only.iter().find(|(_, set)| *set) {
            return Err(invalid(format!("problem.{name} only applies to generators")));
        }
        if let Some(f) = &self.file {
            let path = base.join(f);
            if !path.is_file() {
                return Err(invalid(format!("problem file {} does not exist", path.display())));
            }
        }
        Ok(())
    }
}

/// Turns a TOML error into a `Parse` error carrying the 1-based line.
pub(crate) fn toml_error(e: toml::de::Error, text: &str, name: &str) -> CliError {
    let line = e
        .span()
        .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
    CliError::Parse {
        file: name.to_string(),
        line,
        message: e.message().trim().to_string(),
    }
}

/// Parses and validates a config. `name` labels errors, `base` resolves
/// relative file names.
pub fn parse_config(text: &str, name: &str, base: &Path) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| toml_error(e, text, name))?;
    cfg.validate(base)?;
    Ok(cfg)
}

pub fn render_config(cfg: &ExperimentConfig) -> String {
    toml::to_string(cfg).expect("configs always serialize")
}

/// Reads a config file; relative paths inside it are taken from its
/// directory.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text, &path.display().to_string(), &config_dir(path))
}

pub fn config_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        parse_config(text, "c.toml", Path::new("."))
    }

    const MINIMAL: &str = "T = 100\n[problem]\ngenerator = \"consensus-quadratic\"\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.iterations, 100);
        assert_eq!(c.beta, None);
        assert_eq!(c.seeds, vec![0]);
        assert_eq!(c.stride, 1);
        assert_eq!(c.probes, ProbeFlags::default());
        assert_eq!(c, ExperimentConfig::new(100, ProblemSource::generator(BenchmarkKind::ConsensusQuadratic)));
    }

    #[test]
    fn unknown_field_is_named() {
        let e = parse(&format!("{MINIMAL}colour = 1\n")).unwrap_err();
        match &e {
            CliError::Parse { line, message, .. } => {
                assert_eq!(*line, Some(4));
                assert!(message.contains("colour"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn block_probs_must_sum_to_one() {
        let text = format!("{MINIMAL}[partition]\nblock_probs = [0.5, 0.4]\n");
        assert!(matches!(parse(&text), Err(CliError::Validation(_))));
    }

    #[test]
    fn seed_forms() {
        let c = parse(&format!("seeds = \"3..5\"\n{MINIMAL}")).unwrap();
        assert_eq!(c.seeds, vec![3, 4, 5]);
        let c = parse(&format!("seeds = 7\n{MINIMAL}")).unwrap();
        assert_eq!(c.seeds, vec![7]);
        assert!(parse(&format!("seeds = []\n{MINIMAL}")).is_err());
        assert!(parse(&format!("seeds = \"5..3\"\n{MINIMAL}")).is_err());
        assert!(parse(&format!("seeds = [1, 1]\n{MINIMAL}")).is_err());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(parse("T = 0\n[problem]\ngenerator = \"consensus-lad\"\n").is_err());
        assert!(matches!(
            parse("T = 1\n[problem]\ngenerator = \"ridge\"\n"),
            Err(CliError::UnknownBenchmark(_))
        ));
        assert!(parse("T = 1\n[problem]\nfile = \"no/such/file.toml\"\n").is_err());
        assert!(parse("T = 1\n[problem]\n").is_err());
        assert!(parse("T = 1\nbeta = -1.0\n[problem]\ngenerator = \"consensus-lad\"\n").is_err());
    }
}
