//! Flat `key = value` run configuration.

use std::path::Path;

use geospar::geometry::KernelFunction;
use geospar::projection::DEFAULT_SKETCH_CONSTANT;
use geospar::sketches::SketchConfig;
use geospar::sparsifier::{adversarial_mode, SparsifierConfig, DEFAULT_C_JL, DEFAULT_C_S};
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KSetting {
    Auto,
    Adversarial,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub eps: f64,
    pub delta: f64,
    pub k: KSetting,
    pub kernel: String,
    pub kernel_c: f64,
    pub kernel_tmax: f64,
    pub c_s: f64,
    pub c_jl: f64,
    pub c_sk: f64,
    pub allow_large_eps: bool,
    pub seed: u64,
    pub checkpoint: usize,
    pub rebuild_budget: Option<usize>,
    pub bench_sizes: Vec<usize>,
    pub bench_dim: usize,
    pub bench_updates: usize,
    pub bench_runs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            eps: 0.1,
            delta: 0.05,
            k: KSetting::Auto,
            kernel: "exp".into(),
            kernel_c: 2.0,
            kernel_tmax: 1.0,
            c_s: DEFAULT_C_S,
            c_jl: DEFAULT_C_JL,
            c_sk: DEFAULT_SKETCH_CONSTANT,
            allow_large_eps: false,
            seed: 0,
            checkpoint: 10,
            rebuild_budget: None,
            bench_sizes: vec![128, 256, 512],
            bench_dim: 4,
            bench_updates: 50,
            bench_runs: 3,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T, CliError> {
    value.parse().map_err(|_| CliError::Config { line, message: format!("bad value for {key}: {value:?}") })
}

fn parse_bool(key: &str, value: &str, line: usize) -> Result<bool, CliError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Config { line, message: format!("bad value for {key}: {value:?}") }),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.display().to_string(), source: e })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(CliError::Config { line, message: format!("expected key = value, got {content:?}") });
            };
            let (key, value) = (key.trim(), value.trim());
            match key {
                "eps" => cfg.eps = parse_num(key, value, line)?,
                "delta" => cfg.delta = parse_num(key, value, line)?,
                "k" => {
                    cfg.k = match value {
                        "auto" => KSetting::Auto,
                        "auto-adversarial" => KSetting::Adversarial,
                        v => KSetting::Fixed(parse_num(key, v, line)?),
                    }
                }
                "kernel" => {
                    if KernelFunction::by_name(value).is_none() {
                        return Err(CliError::Config { line, message: format!("unknown kernel {value:?}") });
                    }
                    cfg.kernel = value.to_string();
                }
                "kernel_c" => cfg.kernel_c = parse_num(key, value, line)?,
                "kernel_tmax" => cfg.kernel_tmax = parse_num(key, value, line)?,
                "c_s" => cfg.c_s = parse_num(key, value, line)?,
                "c_jl" => cfg.c_jl = parse_num(key, value, line)?,
                "c_sk" => cfg.c_sk = parse_num(key, value, line)?,
                "allow_large_eps" => cfg.allow_large_eps = parse_bool(key, value, line)?,
                "seed" => cfg.seed = parse_num(key, value, line)?,
                "checkpoint" => cfg.checkpoint = parse_num(key, value, line)?,
                "rebuild_budget" => {
                    cfg.rebuild_budget = if value == "auto" { None } else { Some(parse_num(key, value, line)?) }
                }
                "bench_sizes" => {
                    cfg.bench_sizes = value
                        .split(',')
                        .map(|v| parse_num(key, v.trim(), line))
                        .collect::<Result<_, _>>()?;
                }
                "bench_dim" => cfg.bench_dim = parse_num(key, value, line)?,
                "bench_updates" => cfg.bench_updates = parse_num(key, value, line)?,
                "bench_runs" => cfg.bench_runs = parse_num(key, value, line)?,
                _ => return Err(CliError::Config { line, message: format!("unknown key {key:?}") }),
            }
        }
        Ok(cfg)
    }

    pub fn kernel(&self) -> KernelFunction {
        match self.kernel.as_str() {
            "exp" | "exponential" | "gaussian" => KernelFunction::exponential(self.kernel_c, self.kernel_tmax),
            name => KernelFunction::by_name(name).expect("validated at parse time"),
        }
    }

    /// Sparsifier settings for `n` points in `d` dimensions with aspect
    /// ratio `alpha`; the second value carries the adversarial budget warning.
    pub fn sparsifier(&self, n: usize, d: usize, alpha: f64) -> (SparsifierConfig, Option<String>) {
        let base = SparsifierConfig {
            eps: self.eps,
            delta: self.delta,
            k: None,
            c_jl: self.c_jl,
            c_s: self.c_s,
            allow_large_eps: self.allow_large_eps,
            seed: self.seed,
        };
        match self.k {
            KSetting::Auto => (base, None),
            KSetting::Fixed(k) => (SparsifierConfig { k: Some(k), ..base }, None),
            KSetting::Adversarial => {
                let preset = adversarial_mode(&base, n, d, alpha);
                (preset.config, preset.warning)
            }
        }
    }

    pub fn sketch(&self) -> SketchConfig {
        SketchConfig { eps: self.eps, delta: self.delta, c_sk: self.c_sk, seed: self.seed }
    }
}
