//! Flat `key = value` experiment configuration.
//!
//! Resolution order: built-in defaults for the experiment, then the config file, then
//! `--override` pairs. Every value is parsed once, after all layers are merged, so an
//! error always names the key that carries the bad value.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{LabError, Result};
use crate::grid::Grid;
use crate::kernels::KernelSpec;
use crate::profiles::ProfileKind;
use crate::solver::{InitialData, ModelParams, Scheme, StepperConfig, TimeStep};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExperimentKind {
    Decay,
    Asymptotics,
    ScalingIdentity,
    KernelLimits,
    EnergyBounds,
    TailBounds,
    CompactnessFunctionals,
    ProfileResiduals,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::Decay,
        ExperimentKind::Asymptotics,
        ExperimentKind::ScalingIdentity,
        ExperimentKind::KernelLimits,
        ExperimentKind::EnergyBounds,
        ExperimentKind::TailBounds,
        ExperimentKind::CompactnessFunctionals,
        ExperimentKind::ProfileResiduals,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Decay => "decay",
            ExperimentKind::Asymptotics => "asymptotics",
            ExperimentKind::ScalingIdentity => "scaling_identity",
            ExperimentKind::KernelLimits => "kernel_limits",
            ExperimentKind::EnergyBounds => "energy_bounds",
            ExperimentKind::TailBounds => "tail_bounds",
            ExperimentKind::CompactnessFunctionals => "compactness_functionals",
            ExperimentKind::ProfileResiduals => "profile_residuals",
        }
    }

    /// Desk-scale defaults, as the text a config file would contain.
    fn defaults(self) -> Vec<(&'static str, &'static str)> {
        const COMMON: &[(&str, &str)] = &[
            ("dim", "1"),
            ("J", "gaussian:1.0"),
            ("G", "shifted_bump:1.0:1.0"),
            ("mass", "1.0"),
            ("lambda", "1.0"),
            ("scheme", "rk4"),
            ("dt", "auto"),
            ("safety", "0.5"),
            ("t_min", "1.0"),
            ("record_times", ""),
            ("lambda_list", "1"),
            ("R_list", ""),
            ("p_list", "1, 2"),
            ("t_list", ""),
            ("n_list", ""),
            ("fit_window", "10, 200"),
            ("energy_window", "1, 2"),
            ("energy_samples", "81"),
            ("profile", "auto"),
            ("reference_n", "8192"),
            ("reference_half_width", "20"),
            ("seed", "12345"),
            ("tail_tol", "1e-6"),
        ];
        let specific: &[(&str, &str)] = match self {
            ExperimentKind::Decay => &[
                ("n_per_axis", "2048"),
                ("half_width", "160"),
                ("q", "3"),
                ("initial", "gaussian:2"),
                ("t_end", "200"),
                ("p_list", "1, 2, 4"),
            ],
            ExperimentKind::Asymptotics => &[
                ("n_per_axis", "2048"),
                ("half_width", "160"),
                ("q", "2"),
                ("initial", "gaussian:2"),
                ("t_end", "200"),
                ("t_list", "10, 20, 50, 100, 200"),
            ],
            ExperimentKind::ScalingIdentity => &[
                ("n_per_axis", "2048"),
                ("half_width", "20"),
                ("q", "2"),
                ("lambda", "2"),
                ("initial", "gaussian:1"),
                ("t_end", "1"),
            ],
            ExperimentKind::KernelLimits => &[
                ("n_per_axis", "1024"),
                ("half_width", "10"),
                ("q", "2"),
                ("initial", "gaussian:0.5"),
                ("t_end", "0"),
                ("lambda_list", "4, 8, 16"),
            ],
            ExperimentKind::EnergyBounds => &[
                ("n_per_axis", "4096"),
                ("half_width", "24"),
                ("q", "2"),
                ("initial", "gaussian:0.25"),
                ("t_end", "2"),
                ("lambda_list", "1, 2, 4, 8"),
            ],
            ExperimentKind::TailBounds => &[
                ("n_per_axis", "4096"),
                ("half_width", "64"),
                ("q", "2"),
                ("initial", "gaussian:0.25"),
                ("t_end", "16"),
                ("lambda_list", "1, 2, 4"),
                ("R_list", "5, 10, 20"),
                ("t_list", "1, 4, 16"),
            ],
            ExperimentKind::CompactnessFunctionals => &[
                ("n_per_axis", "16384"),
                ("half_width", "20"),
                ("q", "2"),
                ("initial", "gaussian:0.5"),
                ("t_end", "0"),
                ("J", "bump:1.0"),
                ("n_list", "8, 16, 32"),
                ("p_list", "2"),
            ],
            ExperimentKind::ProfileResiduals => &[
                ("n_per_axis", "1024"),
                ("half_width", "20"),
                ("q", "2"),
                ("initial", "gaussian:1"),
                ("t_end", "1"),
            ],
        };
        // later entries win
        COMMON.iter().chain(specific).copied().collect()
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| LabError::config("experiment", format!("unknown experiment `{}`", s.trim())))
    }
}

/// Every key the configuration understands.
pub const KNOWN_KEYS: &[&str] = &[
    "experiment",
    "dim",
    "n_per_axis",
    "half_width",
    "q",
    "lambda",
    "J",
    "G",
    "mass",
    "initial",
    "scheme",
    "dt",
    "safety",
    "t_end",
    "t_min",
    "record_times",
    "lambda_list",
    "R_list",
    "p_list",
    "t_list",
    "n_list",
    "fit_window",
    "energy_window",
    "energy_samples",
    "profile",
    "reference_n",
    "reference_half_width",
    "out_dir",
    "seed",
    "tail_tol",
];

/// Unparsed `key = value` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    /// Parses config text: one `key = value` per line, `#` starts a comment, values may
    /// be wrapped in double quotes.
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = strip_comment(line).trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                LabError::Parse(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            raw.set(key.trim(), value.trim())?;
        }
        Ok(raw)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::config("--config", format!("{}: {e}", path.display())))?;
        RawConfig::parse(&text)
    }

    /// Sets one key, rejecting unknown names.
    /// `kernel.J` and `kernel.G` are accepted as aliases of `J` and `G`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.strip_prefix("kernel.").unwrap_or(key);
        if !KNOWN_KEYS.contains(&key) {
            return Err(LabError::config(key, "unknown key"));
        }
        let value = value.trim();
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value);
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, pair: &str) -> Result<()> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| LabError::config(pair, "override must look like key=value"))?;
        self.set(key.trim(), value)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }
}

fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub dim: usize,
    pub n_per_axis: usize,
    pub half_width: f64,
    pub q: f64,
    pub lambda: f64,
    pub j: KernelSpec,
    pub g: KernelSpec,
    pub mass: f64,
    pub initial: InitialData,
    pub scheme: Scheme,
    pub dt: TimeStep,
    pub safety: f64,
    pub t_end: f64,
    pub t_min: f64,
    /// Explicit record times; empty means the driver's geometric default.
    pub record_times: Vec<f64>,
    pub lambda_list: Vec<f64>,
    pub r_list: Vec<f64>,
    pub p_list: Vec<f64>,
    pub t_list: Vec<f64>,
    /// Scales `n` of the BBM functional.
    pub n_list: Vec<f64>,
    pub fit_window: (f64, f64),
    pub energy_window: (f64, f64),
    pub energy_samples: usize,
    /// `None` selects the profile matching the exponent.
    pub profile: Option<ProfileKind>,
    pub reference_n: usize,
    pub reference_half_width: f64,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub tail_tol: f64,
}

struct Reader<'a> {
    raw: &'a RawConfig,
}

impl Reader<'_> {
    fn text(&self, key: &str) -> Result<&str> {
        self.raw
            .get(key)
            .ok_or_else(|| LabError::config(key, "missing value"))
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.text(key)?;
        v.parse::<T>()
            .map_err(|_| LabError::config(key, format!("cannot parse `{v}`")))
    }

    fn positive(&self, key: &str) -> Result<f64> {
        let v: f64 = self.parse(key)?;
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(LabError::config(key, format!("{v} must be positive")))
        }
    }

    fn list(&self, key: &str) -> Result<Vec<f64>> {
        let v = self.text(key)?.trim();
        let v = v.trim_start_matches('[').trim_end_matches(']');
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                let x = if s.eq_ignore_ascii_case("inf") {
                    f64::INFINITY
                } else {
                    s.parse::<f64>()
                        .map_err(|_| LabError::config(key, format!("`{s}` is not a number")))?
                };
                if x.is_nan() {
                    return Err(LabError::config(key, "NaN entry"));
                }
                Ok(x)
            })
            .collect()
    }

    fn ascending(&self, key: &str) -> Result<Vec<f64>> {
        let v = self.list(key)?;
        if v.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LabError::config(key, "list must be sorted ascending without repeats"));
        }
        Ok(v)
    }

    fn window(&self, key: &str) -> Result<(f64, f64)> {
        match self.list(key)?.as_slice() {
            [a, b] if a < b && *a >= 0.0 => Ok((*a, *b)),
            _ => Err(LabError::config(key, "expected `t_lo, t_hi` with 0 <= t_lo < t_hi")),
        }
    }

    fn kernel(&self, key: &str, dim: usize) -> Result<KernelSpec> {
        KernelSpec::parse(self.text(key)?, dim).map_err(|e| LabError::config(key, e.to_string()))
    }
}

impl ExperimentConfig {
    /// Defaults for `experiment`, overlaid with `raw`.
    pub fn resolve(experiment: ExperimentKind, raw: &RawConfig) -> Result<Self> {
        if let Some(named) = raw.get("experiment") {
            let named: ExperimentKind = named.parse()?;
            if named != experiment {
                return Err(LabError::config(
                    "experiment",
                    format!("config is for `{named}` but `{experiment}` was requested"),
                ));
            }
        }
        let mut merged = RawConfig::default();
        for (k, v) in experiment.defaults() {
            merged.set(k, v)?;
        }
        merged.set("out_dir", &format!("out/{experiment}"))?;
        for (k, v) in &raw.entries {
            merged.set(k, v)?;
        }
        let r = Reader { raw: &merged };

        let dim: usize = r.parse("dim")?;
        let n_per_axis: usize = r.parse("n_per_axis")?;
        let half_width = r.positive("half_width")?;
        Grid::new(dim, n_per_axis, half_width).map_err(|e| LabError::config("n_per_axis", e.to_string()))?;
        let q = r.positive("q")?;
        if q <= 1.0 {
            return Err(LabError::config("q", format!("q = {q} must exceed 1")));
        }
        if matches!(experiment, ExperimentKind::Decay | ExperimentKind::Asymptotics)
            && q < 1.0 + 1.0 / dim as f64 - 1e-12
        {
            return Err(LabError::config(
                "q",
                format!("q = {q} is subcritical; the asymptotic theory needs q >= 1 + 1/d"),
            ));
        }
        let lambda = r.positive("lambda")?;
        if lambda < 1.0 {
            return Err(LabError::config("lambda", "λ must be >= 1"));
        }
        let lambda_list = r.ascending("lambda_list")?;
        if lambda_list.iter().any(|l| *l < 1.0) {
            return Err(LabError::config("lambda_list", "every λ must be >= 1"));
        }
        let profile = match r.text("profile")?.trim() {
            "auto" => None,
            other => Some(other.parse::<ProfileKind>().map_err(|e| LabError::config("profile", e.to_string()))?),
        };
        let safety: f64 = r.positive("safety")?;
        if safety > 1.0 {
            return Err(LabError::config("safety", "must lie in (0, 1]"));
        }
        let t_end: f64 = r.parse("t_end")?;
        if !(t_end >= 0.0 && t_end.is_finite()) {
            return Err(LabError::config("t_end", "must be finite and >= 0"));
        }
        let p_list = r.list("p_list")?;
        if p_list.iter().any(|p| *p < 1.0) {
            return Err(LabError::config("p_list", "every p must be >= 1"));
        }
        let r_list = r.ascending("R_list")?;
        if r_list.iter().any(|x| *x <= 0.0) {
            return Err(LabError::config("R_list", "radii must be positive"));
        }
        let energy_samples: usize = r.parse("energy_samples")?;
        if energy_samples < 3 {
            return Err(LabError::config("energy_samples", "need at least 3 samples"));
        }
        let reference_n: usize = r.parse("reference_n")?;
        let reference_half_width = r.positive("reference_half_width")?;
        Grid::new(1, reference_n, reference_half_width)
            .map_err(|e| LabError::config("reference_n", e.to_string()))?;

        let cfg = ExperimentConfig {
            experiment,
            dim,
            n_per_axis,
            half_width,
            q,
            lambda,
            j: r.kernel("J", dim)?,
            g: r.kernel("G", dim)?,
            mass: r.positive("mass")?,
            initial: r.parse("initial")?,
            scheme: r.parse("scheme")?,
            dt: r.parse("dt")?,
            safety,
            t_end,
            t_min: r.positive("t_min")?,
            record_times: r.ascending("record_times")?,
            lambda_list,
            r_list,
            p_list,
            t_list: r.ascending("t_list")?,
            n_list: r.ascending("n_list")?,
            fit_window: r.window("fit_window")?,
            energy_window: r.window("energy_window")?,
            energy_samples,
            profile,
            reference_n,
            reference_half_width,
            out_dir: PathBuf::from(r.text("out_dir")?),
            seed: r.parse("seed")?,
            tail_tol: r.positive("tail_tol")?,
        };
        Ok(cfg)
    }

    /// Reads `path` (if given), applies the overrides and resolves.
    pub fn load(experiment: ExperimentKind, path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut raw = match path {
            Some(p) => RawConfig::from_file(p)?,
            None => RawConfig::default(),
        };
        for o in overrides {
            raw.apply_override(o)?;
        }
        ExperimentConfig::resolve(experiment, &raw)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dim, self.n_per_axis, self.half_width)
    }

    pub fn model_params(&self, lambda: f64) -> Result<ModelParams> {
        ModelParams::new(self.q, lambda, self.j.clone(), self.g.clone())
    }

    /// The stepper with the given record times.
    pub fn stepper(&self, t_end: f64, record_times: Vec<f64>) -> StepperConfig {
        StepperConfig {
            scheme: self.scheme,
            dt: self.dt,
            safety: self.safety,
            t_end,
            record_times,
        }
    }
}
