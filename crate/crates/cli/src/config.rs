//! Run configuration: flat `key = value` files, `PERMGIBBS_*` environment
//! variables and command-line overrides, resolved into a [`RunConfig`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use permgibbs_core::environment::sample_environment;
use permgibbs_core::exactgibbs::BoundarySpec;
use permgibbs_core::potential::RadialTable;
use permgibbs_core::regime::GoodDensity;
use permgibbs_core::{Environment, Error, GasConfig, IntBox, Potential, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Prefix of environment-variable overrides: `PERMGIBBS_ALPHA=2` sets `alpha`.
pub const ENV_PREFIX: &str = "PERMGIBBS_";

/// Recognized keys with their defaults.
pub const KEYS: [(&str, &str); 16] = [
    ("dim", "1"),
    ("box", "0..4"),
    ("lambda", ""),
    ("rho", "0.25"),
    ("alpha", "1"),
    ("potential", "quadratic"),
    ("table_envelope", ""),
    ("boundary", "identity"),
    ("env_file", ""),
    ("seed", "0"),
    ("n_samples", "1000"),
    ("max_points", "9"),
    ("max_window_doublings", "10"),
    ("closed_bound", "false"),
    ("good_density", ""),
    ("tol", "1e-12"),
];

/// The resolved, validated configuration of one run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub dim: usize,
    #[serde(rename = "box")]
    pub bbox: IntBox,
    /// The volume; unset means the environment's box.
    pub lambda: Option<IntBox>,
    pub rho: f64,
    pub alpha: f64,
    pub potential: String,
    pub table_envelope: Option<f64>,
    pub boundary: String,
    pub env_file: Option<PathBuf>,
    pub seed: u64,
    pub n_samples: usize,
    pub max_points: usize,
    pub max_window_doublings: u32,
    pub closed_bound: bool,
    pub good_density: Option<GoodDensity>,
    pub tol: f64,
}

/// Layers of raw `key → value` settings, lowest precedence first.
#[derive(Clone, Debug, Default)]
pub struct Layers {
    values: BTreeMap<String, String>,
}

impl Layers {
    pub fn defaults() -> Self {
        Layers {
            values: KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(Error::Parameter(format!("unknown config key `{key}`")));
        }
        self.values.insert(key, value.trim().to_string());
        Ok(())
    }

    /// Reads `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parameter(format!("config line {}: expected key = value", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        self.apply_text(&std::fs::read_to_string(path)?)
    }

    /// Applies `PERMGIBBS_<KEY>` for every recognized key present in `vars`.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<()> {
        for (name, value) in vars {
            if let Some(key) = name.strip_prefix(ENV_PREFIX) {
                let key = key.to_ascii_lowercase();
                if KEYS.iter().any(|(k, _)| *k == key) {
                    self.set(&key, &value)?;
                }
            }
        }
        Ok(())
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides<'a>(&mut self, pairs: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for p in pairs {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| Error::Parameter(format!("override `{p}` is not key=value")))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let dim: usize = parse(self, "dim")?;
        if dim == 0 {
            return Err(Error::Parameter("dim must be at least 1".into()));
        }
        let bbox = parse_box(self.get("box"), dim)?;
        let lambda = match self.get("lambda") {
            "" => None,
            s => Some(parse_box(s, dim)?),
        };
        let rho: f64 = parse(self, "rho")?;
        let alpha: f64 = parse(self, "alpha")?;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Parameter(format!("alpha = {alpha} must be positive")));
        }
        let tol: f64 = parse(self, "tol")?;
        if tol.is_nan() || tol <= 0.0 {
            return Err(Error::Parameter(format!("tol = {tol} must be positive")));
        }
        let potential = self.get("potential").to_string();
        if !matches!(potential.as_str(), "quadratic" | "comparison") && !potential.starts_with("table:") {
            return Err(Error::Parameter(format!(
                "potential `{potential}` must be quadratic, comparison or table:PATH"
            )));
        }
        let good_density = match self.get("good_density") {
            "" => None,
            "good" => Some(GoodDensity::Good),
            "not_good" => Some(GoodDensity::NotGood),
            "unknown" => Some(GoodDensity::Unknown),
            s => {
                return Err(Error::Parameter(format!(
                    "good_density `{s}` must be good, not_good or unknown"
                )))
            }
        };
        let opt_path = |k: &str| match self.get(k) {
            "" => None,
            s => Some(PathBuf::from(s)),
        };
        Ok(RunConfig {
            dim,
            bbox,
            lambda,
            rho,
            alpha,
            potential,
            table_envelope: match self.get("table_envelope") {
                "" => None,
                _ => Some(parse(self, "table_envelope")?),
            },
            boundary: self.get("boundary").to_string(),
            env_file: opt_path("env_file"),
            seed: parse(self, "seed")?,
            n_samples: parse(self, "n_samples")?,
            max_points: parse(self, "max_points")?,
            max_window_doublings: parse(self, "max_window_doublings")?,
            closed_bound: parse(self, "closed_bound")?,
            good_density,
            tol,
        })
    }
}

fn parse<T: std::str::FromStr>(layers: &Layers, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = layers.get(key);
    raw.parse()
        .map_err(|e| Error::Parameter(format!("{key} = `{raw}`: {e}")))
}

/// `lo..hi` per axis, comma separated; a single range is used on every axis.
pub fn parse_box(s: &str, dim: usize) -> Result<IntBox> {
    let axes: Vec<(i64, i64)> = s
        .split(',')
        .map(|r| {
            let (a, b) = r
                .trim()
                .split_once("..")
                .ok_or_else(|| Error::Parameter(format!("range `{r}` must be lo..hi")))?;
            let lo = a
                .trim()
                .parse()
                .map_err(|e| Error::Parameter(format!("`{a}`: {e}")))?;
            let hi = b
                .trim()
                .parse()
                .map_err(|e| Error::Parameter(format!("`{b}`: {e}")))?;
            Ok((lo, hi))
        })
        .collect::<Result<_>>()?;
    let axes = match axes.len() {
        1 => vec![axes[0]; dim],
        n if n == dim => axes,
        n => return Err(Error::Parameter(format!("box has {n} axes, dim is {dim}"))),
    };
    IntBox::new(axes)
}

impl RunConfig {
    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(
            serde_json::to_vec(self).expect("config serializes"),
        ))
    }

    /// Metadata block embedded in every output.
    pub fn meta(&self) -> serde_json::Value {
        serde_json::json!({
            "config": self,
            "config_digest": self.digest(),
            "seed": self.seed,
        })
    }

    pub fn potential(&self) -> Result<Potential> {
        match self.potential.as_str() {
            "quadratic" => Ok(Potential::Quadratic { dim: self.dim }),
            "comparison" => Ok(Potential::ContinuumComparison { dim: self.dim }),
            s => {
                let path = s.strip_prefix("table:").expect("validated");
                Ok(Potential::CustomRadial(RadialTable::load(
                    self.dim,
                    Path::new(path),
                    self.table_envelope,
                )?))
            }
        }
    }

    /// The environment from `env_file`, or sampled from `box`, `rho` and
    /// `seed`.
    pub fn environment(&self) -> Result<Environment> {
        let env = match &self.env_file {
            Some(path) => load_environment(path)?,
            None => sample_environment(self.dim, &self.bbox, self.rho, self.seed)?,
        };
        if env.dim() != self.dim {
            return Err(Error::Parameter(format!(
                "environment has dimension {}, config has {}",
                env.dim(),
                self.dim
            )));
        }
        Ok(env)
    }

    /// The volume `Λ` inside `env`.
    pub fn volume(&self, env: &Environment) -> Result<IntBox> {
        let lam = self.lambda.clone().unwrap_or_else(|| env.bbox().clone());
        if !lam.is_subset_of(env.bbox()) {
            return Err(Error::Parameter(format!(
                "lambda {lam:?} is not inside the environment box"
            )));
        }
        Ok(lam)
    }

    /// `identity`, or a path to a JSON list of cycles.
    pub fn boundary(&self) -> Result<BoundarySpec> {
        if self.boundary == "identity" {
            return Ok(BoundarySpec::identity());
        }
        let text = std::fs::read_to_string(&self.boundary)?;
        let gas: GasConfig =
            serde_json::from_str(&text).map_err(|e| Error::Boundary(format!("{}: {e}", self.boundary)))?;
        Ok(BoundarySpec::new(gas))
    }
}

/// Reads an environment written by `gen-env` or in the bare library form.
pub fn load_environment(path: &Path) -> Result<Environment> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    match value.get("environment") {
        Some(inner) => Environment::from_json(&inner.to_string()),
        None => Environment::from_json(&text),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_is_cli_env_file_default() {
        let mut l = Layers::defaults();
        assert_eq!(l.resolve().unwrap().alpha, 1.0);
        l.apply_text("alpha = 2\nrho = 0.1 # comment\n").unwrap();
        l.apply_env([
            ("PERMGIBBS_ALPHA".to_string(), "3".to_string()),
            ("OTHER".into(), "x".into()),
        ])
        .unwrap();
        let c = l.resolve().unwrap();
        assert_eq!((c.alpha, c.rho), (3.0, 0.1));
        l.apply_overrides(["alpha=4"]).unwrap();
        assert_eq!(l.resolve().unwrap().alpha, 4.0);
    }

    #[test]
    fn bad_input_is_a_parameter_error() {
        let mut l = Layers::defaults();
        assert!(l.apply_text("nonsense = 1").is_err());
        assert!(l.apply_text("no equals sign").is_err());
        l.set("alpha", "-1").unwrap();
        assert!(matches!(l.resolve(), Err(Error::Parameter(_))));
        let mut l = Layers::defaults();
        l.set("dim", "2").unwrap();
        l.set("box", "0..3,0..1,0..2").unwrap();
        assert!(l.resolve().is_err());
    }

    #[test]
    fn boxes_and_digest() {
        assert_eq!(parse_box("-2..2", 2).unwrap(), IntBox::centered(2, 2).unwrap());
        assert_eq!(
            parse_box("0..3, 1..1", 2).unwrap(),
            IntBox::new(vec![(0, 3), (1, 1)]).unwrap()
        );
        let a = Layers::defaults().resolve().unwrap();
        let mut l = Layers::defaults();
        l.set("seed", "1").unwrap();
        let b = l.resolve().unwrap();
        assert_eq!(a.digest(), Layers::defaults().resolve().unwrap().digest());
        assert_ne!(a.digest(), b.digest());
    }
}
