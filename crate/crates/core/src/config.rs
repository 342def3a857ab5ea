//! Flat `key = value` configuration files.
//!
//! Blank lines and text after `#` are ignored. Every key of
//! [`MatchConfig`] is listed in [`KEYS`] with its documentation. A run
//! manifest can be read back as a configuration: its `config.` keys are
//! used and every other section is skipped.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fem::NewtonOptions;
use crate::materials::MaterialModel;
use crate::matcher::MatchConfig;

/// Configuration keys and their meaning, in snapshot order.
pub const KEYS: &[(&str, &str)] = &[
    ("material", "material model: linear, svk or neo"),
    ("lambda", "first Lame constant (linear, svk)"),
    ("mu", "shear modulus (linear, svk)"),
    ("alpha", "Neo-Hookean shear coefficient"),
    ("beta", "Neo-Hookean volumetric coefficient"),
    ("k_initial", "spring constant at the first iteration, in stress units"),
    ("k_growth", "factor applied to the spring constant after each iteration (>= 1)"),
    ("ratio_initial", "initial tangential/normal metric ratio lambda_t / lambda_n"),
    ("ratio_decay", "factor applied to the metric ratio after each iteration, in (0, 1]"),
    ("ratio_floor", "lower bound of the metric ratio"),
    ("descriptor_iterations", "iterations that use descriptor-guided k-NN before plain closest points"),
    ("knn_fraction", "k-NN candidate count as a fraction of the target vertex count"),
    ("confidence_threshold", "confidences below this value are set to zero"),
    ("hks_eigenpairs", "Laplace-Beltrami eigenpairs used for descriptors"),
    ("hks_samples", "number of log-spaced heat kernel time samples"),
    ("smoothing_steps", "Jacobi smoothing sweeps in the coarse-to-fine prolongation"),
    ("smoothing_damping", "Jacobi damping factor in (0, 1]"),
    ("max_iterations", "outer iteration cap"),
    ("spring_tol", "stop when the area-weighted RMS distance to the target falls below this"),
    ("stagnation_tol", "relative force-norm change regarded as stagnation"),
    ("stagnation_window", "consecutive stagnant iterations before stopping"),
    ("socp_tol", "cone solver relative tolerance"),
    ("socp_max_iter", "cone solver iteration cap"),
    ("newton_tol", "interior residual tolerance, or auto for the mesh default"),
    ("newton_max_iter", "Newton iteration cap per solve"),
    ("normalize", "rescale meshes to unit coarse bounding-box diagonal (true/false)"),
    ("threads", "worker threads (the pipeline is sequential; recorded for provenance)"),
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse::<T>().map_err(|_| Error::Config {
        key: key.into(),
        msg: format!("cannot parse `{value}`"),
    })
}

impl MatchConfig {
    /// Sets one key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "material" => match v {
                "linear" | "svk" | "neo" => self.material = v.to_string(),
                _ => {
                    return Err(Error::Config {
                        key: key.into(),
                        msg: format!("unknown material `{v}` (expected linear, svk or neo)"),
                    })
                }
            },
            "lambda" => self.lambda = parse_num(key, v)?,
            "mu" => self.mu = parse_num(key, v)?,
            "alpha" => self.alpha = parse_num(key, v)?,
            "beta" => self.beta = parse_num(key, v)?,
            "k_initial" => self.k_initial = parse_num(key, v)?,
            "k_growth" => self.k_growth = parse_num(key, v)?,
            "ratio_initial" => self.ratio_initial = parse_num(key, v)?,
            "ratio_decay" => self.ratio_decay = parse_num(key, v)?,
            "ratio_floor" => self.ratio_floor = parse_num(key, v)?,
            "descriptor_iterations" => self.descriptor_iterations = parse_num(key, v)?,
            "knn_fraction" => self.knn_fraction = parse_num(key, v)?,
            "confidence_threshold" => self.confidence_threshold = parse_num(key, v)?,
            "hks_eigenpairs" => self.hks_eigenpairs = parse_num(key, v)?,
            "hks_samples" => self.hks_samples = parse_num(key, v)?,
            "smoothing_steps" => self.smoothing_steps = parse_num(key, v)?,
            "smoothing_damping" => self.smoothing_damping = parse_num(key, v)?,
            "max_iterations" => self.max_iterations = parse_num(key, v)?,
            "spring_tol" => self.spring_tol = parse_num(key, v)?,
            "stagnation_tol" => self.stagnation_tol = parse_num(key, v)?,
            "stagnation_window" => self.stagnation_window = parse_num(key, v)?,
            "socp_tol" => self.socp_tol = parse_num(key, v)?,
            "socp_max_iter" => self.socp_max_iter = parse_num(key, v)?,
            "newton_tol" => {
                self.newton.tol = if v == "auto" { None } else { Some(parse_num(key, v)?) }
            }
            "newton_max_iter" => self.newton.max_iter = parse_num(key, v)?,
            "normalize" => self.normalize = parse_num(key, v)?,
            "threads" => self.threads = parse_num(key, v)?,
            _ => {
                return Err(Error::Config {
                    key: key.into(),
                    msg: "unknown key".into(),
                })
            }
        }
        Ok(())
    }

    /// Every key with its resolved value, in [`KEYS`] order.
    pub fn snapshot(&self) -> Vec<(&'static str, String)> {
        let newton_tol = self.newton.tol.map_or_else(|| "auto".to_string(), |t| t.to_string());
        let values = [
            self.material.clone(),
            self.lambda.to_string(),
            self.mu.to_string(),
            self.alpha.to_string(),
            self.beta.to_string(),
            self.k_initial.to_string(),
            self.k_growth.to_string(),
            self.ratio_initial.to_string(),
            self.ratio_decay.to_string(),
            self.ratio_floor.to_string(),
            self.descriptor_iterations.to_string(),
            self.knn_fraction.to_string(),
            self.confidence_threshold.to_string(),
            self.hks_eigenpairs.to_string(),
            self.hks_samples.to_string(),
            self.smoothing_steps.to_string(),
            self.smoothing_damping.to_string(),
            self.max_iterations.to_string(),
            self.spring_tol.to_string(),
            self.stagnation_tol.to_string(),
            self.stagnation_window.to_string(),
            self.socp_tol.to_string(),
            self.socp_max_iter.to_string(),
            newton_tol,
            self.newton.max_iter.to_string(),
            self.normalize.to_string(),
            self.threads.to_string(),
        ];
        KEYS.iter().map(|(k, _)| *k).zip(values).collect()
    }

    /// Applies the entries of a configuration text on top of `self`.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        let entries = parse_kv(text, origin)?;
        let manifest = entries.iter().any(|(k, _, _)| k.starts_with("config."));
        for (key, value, line) in entries {
            let key = if manifest {
                match key.strip_prefix("config.") {
                    Some(k) => k.to_string(),
                    None => continue,
                }
            } else {
                key
            };
            self.set(&key, &value).map_err(|e| match e {
                Error::Config { key, msg } => Error::parse(origin, line, format!("{key}: {msg}")),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = MatchConfig::default();
        cfg.apply_text(&text, path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The material model selected by `material` with its parameters.
    pub fn material_model(&self) -> Result<MaterialModel> {
        match self.material.as_str() {
            "linear" => MaterialModel::linear(self.lambda, self.mu),
            "svk" => MaterialModel::svk(self.lambda, self.mu),
            "neo" => MaterialModel::neo_hookean(self.alpha, self.beta),
            other => Err(Error::Config {
                key: "material".into(),
                msg: format!("unknown material `{other}`"),
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| {
            Err(Error::Config {
                key: key.into(),
                msg: msg.into(),
            })
        };
        self.material_model()?;
        let positive = [
            ("k_initial", self.k_initial),
            ("ratio_initial", self.ratio_initial),
            ("ratio_floor", self.ratio_floor),
            ("knn_fraction", self.knn_fraction),
            ("spring_tol", self.spring_tol),
            ("stagnation_tol", self.stagnation_tol),
            ("socp_tol", self.socp_tol),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(key, "must be positive");
            }
        }
        if !(self.k_growth >= 1.0 && self.k_growth.is_finite()) {
            return bad("k_growth", "must be at least 1");
        }
        if !(self.ratio_decay > 0.0 && self.ratio_decay <= 1.0) {
            return bad("ratio_decay", "must lie in (0, 1]");
        }
        if !(self.smoothing_damping > 0.0 && self.smoothing_damping <= 1.0) {
            return bad("smoothing_damping", "must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return bad("confidence_threshold", "must lie in [0, 1]");
        }
        if self.knn_fraction > 1.0 {
            return bad("knn_fraction", "must not exceed 1");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations", "must be at least 1");
        }
        if self.stagnation_window == 0 {
            return bad("stagnation_window", "must be at least 1");
        }
        if self.socp_max_iter == 0 || self.newton.max_iter == 0 {
            return bad("socp_max_iter", "iteration caps must be at least 1");
        }
        if self.descriptor_iterations > 0 && (self.hks_eigenpairs < 2 || self.hks_samples < 1) {
            return bad("hks_eigenpairs", "descriptors need at least 2 eigenpairs and 1 sample");
        }
        if self.threads == 0 {
            return bad("threads", "must be at least 1");
        }
        if let Some(t) = self.newton.tol {
            if !(t > 0.0) {
                return bad("newton_tol", "must be positive or auto");
            }
        }
        Ok(())
    }
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            material: "neo".into(),
            lambda: 1.0,
            mu: 1.0,
            alpha: 1.0,
            beta: 1.0,
            k_initial: 1.0,
            k_growth: 1.5,
            ratio_initial: 1.0,
            ratio_decay: 0.8,
            ratio_floor: 0.1,
            descriptor_iterations: 5,
            knn_fraction: 0.03,
            confidence_threshold: 0.1,
            hks_eigenpairs: 100,
            hks_samples: 10,
            smoothing_steps: 0,
            smoothing_damping: 0.5,
            max_iterations: 30,
            spring_tol: 1e-4,
            stagnation_tol: 1e-4,
            stagnation_window: 3,
            socp_tol: 1e-7,
            socp_max_iter: 200,
            newton: NewtonOptions::default(),
            normalize: true,
            threads: 1,
        }
    }
}

/// Parses `key = value` lines, returning `(key, value, line number)`.
pub fn parse_kv(text: &str, origin: &Path) -> Result<Vec<(String, String, usize)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::parse(origin, i + 1, format!("expected `key = value`, got `{line}`")));
        };
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::parse(origin, i + 1, "empty key"));
        }
        out.push((k.to_string(), v.trim().to_string(), i + 1));
    }
    Ok(out)
}
