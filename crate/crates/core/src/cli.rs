//! Command-line front end.
//!
//! Runs are described by a flat `key = value` configuration. Values are
//! numbers or arithmetic expressions (`2*pi`, `acos(sqrt(1/3))`), and later
//! sources override earlier ones: preset, then config file, then `--set`
//! flags. Unknown keys are rejected.
//!
//! Exit codes: 0 on success, 2 for configuration errors and 3 for numeric or
//! I/O failures.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::dynamics::{ground_state, infidelity, min_steps, mixing_angle_track, propagate};
use crate::error::Error;
use crate::geometry::{dqgt_analytic, dqgt_numeric, transition_rate, DqgtReport, RateMethod, PARAMETERS};
use crate::pulses::{CustomEnvelope, PulseSet, Scheme};
use crate::sweeps::{find_windows, refine_exact, run_sweep, SweepParameter, SweepResult, SweepSpec};
use crate::systems::SystemModel;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) | CliError::Io(_) => EXIT_RUNTIME,
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

// ---------------------------------------------------------------------------
// expressions

struct ExprParser<'a> {
    src: &'a [u8],
    pos: usize,
}

/// Evaluates an arithmetic expression over `f64`.
///
/// Supports `+ - * / ^`, parentheses, unary signs, the constant `pi` and the
/// functions `sqrt exp ln sin cos tan asin acos atan` (with `arc*` aliases).
pub fn eval_expr(text: &str) -> Result<f64, String> {
    let mut p = ExprParser { src: text.as_bytes(), pos: 0 };
    let v = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(format!("unexpected `{}` in `{text}`", &text[p.pos..]));
    }
    if !v.is_finite() {
        return Err(format!("`{text}` is not finite"));
    }
    Ok(v)
}

impl ExprParser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<f64, String> {
        let mut v = self.term()?;
        loop {
            if self.eat(b'+') {
                v += self.term()?;
            } else if self.eat(b'-') {
                v -= self.term()?;
            } else {
                return Ok(v);
            }
        }
    }

    fn term(&mut self) -> Result<f64, String> {
        let mut v = self.unary()?;
        loop {
            if self.eat(b'*') {
                v *= self.unary()?;
            } else if self.eat(b'/') {
                v /= self.unary()?;
            } else {
                return Ok(v);
            }
        }
    }

    fn unary(&mut self) -> Result<f64, String> {
        if self.eat(b'-') {
            Ok(-self.unary()?)
        } else if self.eat(b'+') {
            self.unary()
        } else {
            let base = self.atom()?;
            if self.eat(b'^') {
                Ok(base.powf(self.unary()?))
            } else {
                Ok(base)
            }
        }
    }

    fn atom(&mut self) -> Result<f64, String> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let v = self.expr()?;
                if !self.eat(b')') {
                    return Err("missing `)`".into());
                }
                Ok(v)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_ascii_lowercase();
                if name == "pi" {
                    return Ok(std::f64::consts::PI);
                }
                let f: fn(f64) -> f64 = match name.as_str() {
                    "sqrt" => f64::sqrt,
                    "exp" => f64::exp,
                    "ln" => f64::ln,
                    "sin" => f64::sin,
                    "cos" => f64::cos,
                    "tan" => f64::tan,
                    "asin" | "arcsin" => f64::asin,
                    "acos" | "arccos" => f64::acos,
                    "atan" | "arctan" => f64::atan,
                    _ => return Err(format!("unknown name `{name}`")),
                };
                if !self.eat(b'(') {
                    return Err(format!("`{name}` needs an argument in parentheses"));
                }
                let v = self.expr()?;
                if !self.eat(b')') {
                    return Err("missing `)`".into());
                }
                Ok(f(v))
            }
            Some(c) => Err(format!("unexpected `{}`", c as char)),
            None => Err("unexpected end of expression".into()),
        }
    }

    fn number(&mut self) -> Result<f64, String> {
        let start = self.pos;
        let s = self.src;
        while self.pos < s.len() && (s[self.pos].is_ascii_digit() || s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let mut k = self.pos + 1;
            if k < s.len() && (s[k] == b'+' || s[k] == b'-') {
                k += 1;
            }
            if k < s.len() && s[k].is_ascii_digit() {
                while k < s.len() && s[k].is_ascii_digit() {
                    k += 1;
                }
                self.pos = k;
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).unwrap();
        text.parse::<f64>().map_err(|_| format!("bad number `{text}`"))
    }
}

// ---------------------------------------------------------------------------
// configuration

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Every setting a run can take. Keys not used by a subcommand are ignored
/// by it.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub system: usize,
    pub scheme: Scheme,
    pub omega0: f64,
    pub tau: f64,
    pub delta: f64,
    pub alpha: f64,
    pub chi: f64,
    pub eta: f64,
    pub sigma: Option<f64>,
    pub mu: Option<f64>,
    pub steps: Option<usize>,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub parameter: Option<SweepParameter>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub points: Option<usize>,
    pub schemes: Vec<Scheme>,
    pub threshold: f64,
    pub s: f64,
    pub level: usize,
    /// Constant pulse amplitudes `[P, S, Q]`; set to bypass the pulse families.
    pub frozen: Option<[f64; 3]>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system: 3,
            scheme: Scheme::Optimized,
            omega0: 35.0,
            tau: 4.0,
            delta: 0.0,
            alpha: std::f64::consts::FRAC_PI_2,
            chi: 0.0,
            eta: 0.0,
            sigma: None,
            mu: None,
            steps: None,
            output: None,
            format: Format::Csv,
            parameter: None,
            lo: None,
            hi: None,
            points: None,
            schemes: vec![Scheme::Optimized, Scheme::Gaussian],
            threshold: 1e-3,
            s: 0.5,
            level: 1,
            frozen: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "system", "scheme", "omega0", "tau", "delta", "alpha", "beta", "chi", "eta", "sigma", "mu", "steps", "output",
    "format", "parameter", "lo", "hi", "points", "schemes", "threshold", "s", "level", "frozen_p", "frozen_s",
    "frozen_q",
];

fn num(key: &str, v: &str) -> Result<f64, CliError> {
    eval_expr(v).map_err(|e| config_err(format!("{key}: {e}")))
}

fn count(key: &str, v: &str) -> Result<usize, CliError> {
    let x = num(key, v)?;
    if x < 0.0 || x.fract() != 0.0 || x > 1e12 {
        return Err(config_err(format!("{key}: expected a nonnegative integer, got {v}")));
    }
    Ok(x as usize)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        match key.trim() {
            "system" => {
                self.system = count(key, v)?;
                if !(self.system == 3 || self.system == 4) {
                    return Err(config_err(format!("system must be 3 or 4, got {v}")));
                }
            }
            "scheme" => self.scheme = v.parse().map_err(config_err)?,
            "omega0" => self.omega0 = num(key, v)?,
            "tau" => self.tau = num(key, v)?,
            "delta" => self.delta = num(key, v)?,
            "alpha" | "beta" => self.alpha = num(key, v)?,
            "chi" => self.chi = num(key, v)?,
            "eta" => self.eta = num(key, v)?,
            "sigma" => self.sigma = optional(v, |v| num(key, v))?,
            "mu" => self.mu = optional(v, |v| num(key, v))?,
            "steps" => self.steps = optional(v, |v| count(key, v))?,
            "output" => self.output = optional(v, |v| Ok(PathBuf::from(v)))?,
            "format" => {
                self.format = match v {
                    "csv" => Format::Csv,
                    "json" => Format::Json,
                    _ => return Err(config_err(format!("format must be csv or json, got {v}"))),
                }
            }
            "parameter" => self.parameter = optional(v, |v| v.parse().map_err(config_err))?,
            "lo" => self.lo = optional(v, |v| num(key, v))?,
            "hi" => self.hi = optional(v, |v| num(key, v))?,
            "points" => self.points = optional(v, |v| count(key, v))?,
            "schemes" => {
                self.schemes = v
                    .split(',')
                    .filter(|x| !x.trim().is_empty())
                    .map(|x| x.parse().map_err(config_err))
                    .collect::<Result<_, _>>()?;
            }
            "threshold" => self.threshold = num(key, v)?,
            "s" => self.s = num(key, v)?,
            "level" => self.level = count(key, v)?,
            k @ ("frozen_p" | "frozen_s" | "frozen_q") => {
                let idx = ["frozen_p", "frozen_s", "frozen_q"].iter().position(|x| *x == k).unwrap();
                match optional(v, |v| num(key, v))? {
                    Some(x) => self.frozen.get_or_insert([0.0; 3])[idx] = x,
                    None => {
                        if let Some(f) = &mut self.frozen {
                            f[idx] = 0.0;
                        }
                    }
                }
            }
            other => return Err(config_err(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) =
                line.split_once('=').ok_or_else(|| config_err(format!("line {}: expected key = value", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Serializes every key so that [`RunConfig::apply_text`] reproduces
    /// this configuration exactly.
    pub fn to_text(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| format!("{v:?}")).unwrap_or_default();
        let mut out = String::new();
        let mut line = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
        line("system", self.system.to_string());
        line("scheme", self.scheme.to_string());
        line("omega0", format!("{:?}", self.omega0));
        line("tau", format!("{:?}", self.tau));
        line("delta", format!("{:?}", self.delta));
        line("alpha", format!("{:?}", self.alpha));
        line("chi", format!("{:?}", self.chi));
        line("eta", format!("{:?}", self.eta));
        line("sigma", opt(self.sigma));
        line("mu", opt(self.mu));
        line("steps", self.steps.map(|s| s.to_string()).unwrap_or_default());
        line("output", self.output.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
        line("format", if self.format == Format::Csv { "csv".into() } else { "json".into() });
        line("parameter", self.parameter.map(|p| p.to_string()).unwrap_or_default());
        line("lo", opt(self.lo));
        line("hi", opt(self.hi));
        line("points", self.points.map(|s| s.to_string()).unwrap_or_default());
        line("schemes", self.schemes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","));
        line("threshold", format!("{:?}", self.threshold));
        line("s", format!("{:?}", self.s));
        line("level", self.level.to_string());
        if let Some(f) = self.frozen {
            line("frozen_p", format!("{:?}", f[0]));
            line("frozen_s", format!("{:?}", f[1]));
            line("frozen_q", format!("{:?}", f[2]));
        }
        out
    }

    fn pulses_for(&self, scheme: Scheme) -> Result<PulseSet, CliError> {
        let (w, t) = (self.omega0, self.tau);
        let base = match (self.frozen, scheme, self.system) {
            (Some([fp, fs, fq]), _, n) => PulseSet::custom(CustomEnvelope::frozen(n, fp, fs, fq), w, t),
            (None, Scheme::Optimized, 3) => PulseSet::optimized3(w, t),
            (None, Scheme::Gaussian, 3) => PulseSet::gaussian3(w, t),
            (None, Scheme::Optimized, _) => PulseSet::optimized4(w, t, self.chi),
            (None, Scheme::Gaussian, _) => PulseSet::gaussian4(w, t, self.chi),
        };
        Ok(PulseSet { alpha: self.alpha, chi: self.chi, eta: self.eta, sigma: self.sigma, mu: self.mu, ..base })
    }

    pub fn model_for(&self, scheme: Scheme) -> Result<SystemModel, CliError> {
        SystemModel::new(self.pulses_for(scheme)?, self.delta).map_err(|e| config_err(e.to_string()))
    }

    pub fn model(&self) -> Result<SystemModel, CliError> {
        self.model_for(self.scheme)
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec, CliError> {
        if self.frozen.is_some() {
            return Err(config_err("sweeps need a pulse family, not frozen pulses"));
        }
        let parameter = self.parameter.ok_or_else(|| config_err("sweep needs `parameter`"))?;
        let (lo, hi, points) = parameter.default_grid();
        let spec = SweepSpec::new(parameter, self.model()?, self.schemes.clone()).with_range(
            self.lo.unwrap_or(lo),
            self.hi.unwrap_or(hi),
            self.points.unwrap_or(points),
        );
        spec.validate().map_err(|e| config_err(e.to_string()))?;
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(config_err(format!("threshold must lie in (0, 1], got {}", self.threshold)));
        }
        Ok(spec)
    }
}

fn optional<T>(v: &str, f: impl FnOnce(&str) -> Result<T, CliError>) -> Result<Option<T>, CliError> {
    if v.is_empty() || v == "none" {
        Ok(None)
    } else {
        f(v).map(Some)
    }
}

const FIG2: &str = "system = 3\nomega0 = 30.79\ntau = 4\ndelta = 2*pi\n";
const FIG8: &str = "system = 4\nomega0 = 35\ntau = 4\ndelta = 2*pi\nchi = acos(sqrt(1/3))\n";
const FIG12: &str = "system = 4\nomega0 = 22.13\ntau = 7.4\ndelta = 58.1\nchi = acos(sqrt(1/3))\n";

/// Names of the built-in presets.
pub const PRESETS: &[&str] = &[
    "fig2", "fig2-optimized", "fig2-gaussian", "fig3", "fig4a", "fig4b", "fig5a", "fig5b", "fig6", "fig8",
    "fig8-optimized", "fig8-gaussian", "fig9a", "fig9b", "fig10a", "fig10b", "fig11", "fig12", "fig12-optimized",
    "fig12-gaussian", "fig13", "fig14a", "fig14b",
];

/// Configuration text of a preset.
pub fn preset(name: &str) -> Option<String> {
    let lambda_sweep = "system = 3\nomega0 = 35\n";
    let tripod_sweep = "system = 4\nomega0 = 35\nchi = acos(sqrt(1/3))\n";
    let text = match name {
        "fig2" | "fig2-optimized" => format!("{FIG2}scheme = optimized\n"),
        "fig2-gaussian" => format!("{FIG2}scheme = gaussian\n"),
        "fig3" => FIG2.to_string(),
        "fig4a" => format!("{lambda_sweep}delta = 0\nparameter = tau\nthreshold = 1e-3\n"),
        "fig4b" => format!("{lambda_sweep}delta = 2*pi\nparameter = tau\nthreshold = 1e-3\n"),
        "fig5a" => format!("{lambda_sweep}tau = 7.4\ndelta = 0\nparameter = eta\nthreshold = 1e-6\n"),
        "fig5b" => format!("{lambda_sweep}tau = 7.4\ndelta = 2*pi\nparameter = eta\nthreshold = 1e-2\n"),
        "fig6" => format!("{lambda_sweep}tau = 7.4\nparameter = delta\nthreshold = 1e-2\n"),
        "fig8" | "fig8-optimized" => format!("{FIG8}scheme = optimized\n"),
        "fig8-gaussian" => format!("{FIG8}scheme = gaussian\n"),
        "fig9a" => format!("{tripod_sweep}delta = 0\nparameter = tau\nthreshold = 1e-3\n"),
        "fig9b" => format!("{tripod_sweep}delta = 2*pi\nparameter = tau\nthreshold = 1e-3\n"),
        "fig10a" => format!("{tripod_sweep}tau = 7.4\ndelta = 0\nparameter = eta\nthreshold = 1e-6\n"),
        "fig10b" => format!("{tripod_sweep}tau = 7.4\ndelta = 2*pi\nparameter = eta\nthreshold = 1e-2\n"),
        "fig11" => format!("{tripod_sweep}tau = 7.4\nparameter = delta\nthreshold = 1e-2\n"),
        "fig12" | "fig12-optimized" => format!("{FIG12}scheme = optimized\n"),
        "fig12-gaussian" => format!("{FIG12}scheme = gaussian\n"),
        "fig13" => "system = 4\nomega0 = 35\ntau = 7.4\ndelta = 2*pi\nparameter = chi\nschemes = optimized\n".into(),
        "fig14a" => "system = 4\nomega0 = 35\ntau = 7.4\ndelta = 2*pi\nchi = pi/4\n".into(),
        "fig14b" => "system = 4\nomega0 = 35\ntau = 7.4\ndelta = 2*pi\nchi = pi/6\n".into(),
        _ => return None,
    };
    Some(text)
}

// ---------------------------------------------------------------------------
// output

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// A table with named columns, written as CSV or JSON.
#[derive(Serialize)]
struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => {
                let mut out = self.columns.join(",");
                out.push('\n');
                for row in &self.rows {
                    out.push_str(&row.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(","));
                    out.push('\n');
                }
                out
            }
            Format::Json => {
                let mut s = serde_json::to_string_pretty(self).unwrap();
                s.push('\n');
                s
            }
        }
    }
}

fn output_path(cfg: &RunConfig, default_stem: &str) -> PathBuf {
    cfg.output.clone().unwrap_or_else(|| {
        let ext = if cfg.format == Format::Csv { "csv" } else { "json" };
        PathBuf::from(format!("{default_stem}.{ext}"))
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

/// One entry of the windows sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct WindowRecord {
    pub scheme: String,
    pub lo: f64,
    pub hi: f64,
    pub min_location: f64,
    pub min_value: f64,
    pub truncated: bool,
}

/// `<dir>/<stem>.windows.json` next to the sweep table.
pub fn sidecar_path(table: &Path) -> PathBuf {
    let stem = table.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "sweep".into());
    table.with_file_name(format!("{stem}.windows.json"))
}

// ---------------------------------------------------------------------------
// commands

/// Propagates the configured model from `|1>` and writes the trajectory.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<String, CliError> {
    let m = cfg.model()?;
    let steps = cfg.steps.unwrap_or_else(|| min_steps(&m));
    let t = propagate(&m, &ground_state(m.levels()), steps)?;
    let levels = m.levels();
    let mut columns = vec!["s".to_string(), "t_us".to_string()];
    columns.extend((1..=levels).map(|i| format!("P{i}")));
    columns.push("norm".into());
    let rows = t
        .s_grid
        .iter()
        .zip(&t.populations)
        .map(|(&s, p)| {
            let mut row = vec![s, s * m.tau()];
            row.extend_from_slice(p);
            row.push(p.iter().sum::<f64>());
            row
        })
        .collect();
    let path = output_path(cfg, "simulate");
    write_file(&path, &Table { columns, rows }.render(cfg.format))?;
    let last = t.final_populations();
    let mut summary = String::new();
    writeln!(summary, "family {}  steps {}  norm drift {:e}", t.scheme(), steps, t.norm_drift).unwrap();
    for (i, p) in last.iter().enumerate() {
        writeln!(summary, "P{} = {}", i + 1, fmt_f64(*p)).unwrap();
    }
    writeln!(summary, "infidelity = {}", fmt_f64(infidelity(&t))).unwrap();
    writeln!(summary, "wrote {}", path.display()).unwrap();
    Ok(summary)
}

/// Column names and rows of a sweep table.
pub fn sweep_table(r: &SweepResult) -> (Vec<String>, Vec<Vec<f64>>) {
    let chi = r.parameter == SweepParameter::Chi;
    let mut columns = vec![r.parameter.name().to_string()];
    columns.extend(r.series.iter().map(|s| format!("infidelity_{}", s.scheme)));
    if chi {
        for s in &r.series {
            let levels = s.populations.first().map_or(0, |p| p.len());
            columns.extend((1..=levels).map(|i| format!("P{i}_{}", s.scheme)));
        }
    }
    let rows = (0..r.axis.len())
        .map(|k| {
            let mut row = vec![r.axis[k]];
            row.extend(r.series.iter().map(|s| s.infidelity[k]));
            if chi {
                for s in &r.series {
                    row.extend_from_slice(&s.populations[k]);
                }
            }
            row
        })
        .collect();
    (columns, rows)
}

pub fn window_records(r: &SweepResult) -> Vec<WindowRecord> {
    r.windows()
        .map(|w| WindowRecord {
            scheme: w.scheme.to_string(),
            lo: w.lo,
            hi: w.hi,
            min_location: w.min_location,
            min_value: w.min_value,
            truncated: w.truncated,
        })
        .collect()
}

/// Runs the configured sweep, optionally on a pool capped at `threads`.
pub fn cmd_sweep(cfg: &RunConfig, threads: Option<usize>, exact: bool) -> Result<String, CliError> {
    let spec = cfg.sweep_spec()?;
    let run = || -> Result<SweepResult, Error> {
        let r = find_windows(run_sweep(&spec)?, cfg.threshold);
        if exact {
            refine_exact(r, &spec)
        } else {
            Ok(r)
        }
    };
    let r = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| config_err(format!("threads: {e}")))?
            .install(run)?,
        None => run()?,
    };
    let (columns, rows) = sweep_table(&r);
    let path = output_path(cfg, "sweep");
    write_file(&path, &Table { columns, rows }.render(cfg.format))?;
    let sidecar = sidecar_path(&path);
    let records = window_records(&r);
    write_file(&sidecar, &(serde_json::to_string_pretty(&records).unwrap() + "\n"))?;

    let mut summary = String::new();
    writeln!(summary, "{} sweep over [{}, {}], {} points", r.parameter, spec.lo, spec.hi, spec.points).unwrap();
    for s in &r.series {
        let best = s.infidelity.iter().copied().fold(f64::INFINITY, f64::min);
        writeln!(summary, "{}: lowest infidelity {:e}, {} window(s) below {:e}", s.scheme, best, s.windows.len(), cfg.threshold)
            .unwrap();
    }
    for w in &records {
        writeln!(
            summary,
            "  {} [{}, {}] min {:e} at {}{}",
            w.scheme,
            w.lo,
            w.hi,
            w.min_value,
            w.min_location,
            if w.truncated { " (truncated)" } else { "" }
        )
        .unwrap();
    }
    writeln!(summary, "wrote {} and {}", path.display(), sidecar.display()).unwrap();
    Ok(summary)
}

fn tensor_lines(out: &mut String, levels: usize, d: &DqgtReport) {
    let names = &PARAMETERS[..levels - 1];
    for p in 0..names.len() {
        for q in p..names.len() {
            writeln!(out, "  D_{}{} = {}", names[p], names[q], fmt_f64(d.get(p, q))).unwrap();
        }
    }
}

/// Quantum geometric tensor and transition rate of one level at `cfg.s`.
pub fn cmd_geometry(cfg: &RunConfig) -> Result<String, CliError> {
    if !(0.0..=1.0).contains(&cfg.s) {
        return Err(config_err(format!("s must lie in [0, 1], got {}", cfg.s)));
    }
    let m = cfg.model()?;
    if cfg.level >= m.levels() {
        return Err(config_err(format!("level must be below {}, got {}", m.levels(), cfg.level)));
    }
    let (s, n, levels) = (cfg.s, cfg.level, m.levels());
    let numeric = dqgt_numeric(&m, s, n)?;
    let analytic = match dqgt_analytic(&m, s, n) {
        Ok(d) => Some(d),
        Err(Error::UnsupportedLevel { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let metric = transition_rate(&m, s, n, RateMethod::Metric)?;
    let direct = transition_rate(&m, s, n, RateMethod::Direct)?;

    let mut out = String::new();
    writeln!(out, "{}  s = {}  level {}  delta = {}", m.pulses.family.name(), s, n, m.delta).unwrap();
    writeln!(out, "D numeric:").unwrap();
    tensor_lines(&mut out, levels, &numeric);
    match &analytic {
        Some(a) => {
            writeln!(out, "D analytic:").unwrap();
            tensor_lines(&mut out, levels, a);
            writeln!(out, "D relative discrepancy = {:e}", a.relative_difference(&numeric)).unwrap();
        }
        None => writeln!(out, "D analytic: not available for level {n}").unwrap(),
    }
    writeln!(out, "rate metric = {}", fmt_f64(metric.t_total)).unwrap();
    writeln!(out, "rate direct = {}", fmt_f64(direct.t_total)).unwrap();
    let scale = metric.t_total.abs().max(direct.t_total.abs());
    let rel = if scale > 0.0 { (metric.t_total - direct.t_total).abs() / scale } else { 0.0 };
    writeln!(out, "rate relative discrepancy = {rel:e}").unwrap();
    for (l, r) in &metric.per_pair {
        writeln!(out, "  pair {n}-{l}: {}", fmt_f64(*r)).unwrap();
    }
    if let Some(path) = &cfg.output {
        write_file(path, &out)?;
    }
    Ok(out)
}

/// Mixing angles over `s` for each selected scheme.
///
/// Three-level systems report `theta`; four-level systems report `vartheta`,
/// `xi` and the accumulated dark-state mixing angle `Theta`.
pub fn cmd_mixing(cfg: &RunConfig) -> Result<String, CliError> {
    let nodes = cfg.steps.unwrap_or(200);
    if nodes < 16 {
        return Err(config_err(format!("mixing needs at least 16 steps, got {nodes}")));
    }
    let schemes = if cfg.frozen.is_some() { vec![cfg.scheme] } else { cfg.schemes.clone() };
    let grid: Vec<f64> = (0..=nodes).map(|k| k as f64 / nodes as f64).collect();
    let mut columns = vec!["s".to_string()];
    let mut data: Vec<Vec<f64>> = Vec::new();
    for &scheme in &schemes {
        let m = cfg.model_for(scheme)?;
        if m.levels() == 3 {
            columns.push(format!("theta_{scheme}"));
            data.push(mixing_angle_track(&m, nodes)?.into_iter().map(|(_, th)| th).collect());
        } else {
            let angles = grid
                .iter()
                .map(|&s| crate::systems::mixing_angles(&m.sample(s), m.delta))
                .collect::<Vec<_>>();
            let dark = crate::darkstate::dark_mixing_angle(&m, nodes + 1)?;
            columns.extend([format!("vartheta_{scheme}"), format!("xi_{scheme}"), format!("Theta_{scheme}")]);
            data.push(angles.iter().map(|a| a.vartheta).collect());
            data.push(angles.iter().map(|a| a.xi).collect());
            data.push(dark.theta_big);
        }
    }
    let rows = grid
        .iter()
        .enumerate()
        .map(|(k, &s)| std::iter::once(s).chain(data.iter().map(|c| c[k])).collect())
        .collect();
    let path = output_path(cfg, "mixing");
    write_file(&path, &Table { columns: columns.clone(), rows }.render(cfg.format))?;
    let mut summary = String::new();
    for (name, c) in columns[1..].iter().zip(&data) {
        writeln!(summary, "{name}: start {} end {}", fmt_f64(c[0]), fmt_f64(c[nodes])).unwrap();
    }
    writeln!(summary, "wrote {}", path.display()).unwrap();
    Ok(summary)
}

// ---------------------------------------------------------------------------
// argument parsing

#[derive(Parser, Debug)]
#[command(name = "stirap", version, about = "Optimized STIRAP in Lambda and tripod systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Propagate the Schroedinger equation and write populations over time.
    Simulate(CommonArgs),
    /// Scan one parameter and report low-infidelity windows.
    Sweep(SweepArgs),
    /// Print the quantum geometric tensor and transition rate at one instant.
    Geometry(CommonArgs),
    /// Write mixing angles over the normalized time.
    Mixing(CommonArgs),
    /// List the built-in presets.
    Presets,
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// Built-in parameter set, applied first.
    #[arg(long)]
    pub preset: Option<String>,
    /// `key = value` file, applied after the preset.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(short, long, value_name = "PATH")]
    pub output: Option<PathBuf>,
    #[arg(long, value_parser = ["csv", "json"])]
    pub format: Option<String>,
    /// Write the resolved configuration before running.
    #[arg(long, value_name = "PATH")]
    pub dump_config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub parameter: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub lo: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub hi: Option<String>,
    #[arg(long)]
    pub points: Option<String>,
    /// Cap on worker threads.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Re-propagate at each refined minimum instead of trusting the parabola.
    #[arg(long)]
    pub refine_exact: bool,
}

/// Resolves preset, file and overrides into a configuration.
pub fn resolve(args: &CommonArgs, extra: &[(&str, &str)]) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(name) = &args.preset {
        let text = preset(name).ok_or_else(|| config_err(format!("unknown preset `{name}`")))?;
        cfg.apply_text(&text)?;
    }
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    for item in &args.set {
        let (k, v) = item.split_once('=').ok_or_else(|| config_err(format!("--set expects KEY=VALUE, got `{item}`")))?;
        cfg.set(k, v)?;
    }
    for (k, v) in extra {
        cfg.set(k, v)?;
    }
    if let Some(o) = &args.output {
        cfg.output = Some(o.clone());
    }
    if let Some(f) = &args.format {
        cfg.set("format", f)?;
    }
    if let Some(path) = &args.dump_config {
        write_file(path, &cfg.to_text())?;
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&resolve(&a, &[])?),
        Command::Geometry(a) => cmd_geometry(&resolve(&a, &[])?),
        Command::Mixing(a) => cmd_mixing(&resolve(&a, &[])?),
        Command::Sweep(a) => {
            let extra: Vec<(&str, &str)> = [("parameter", &a.parameter), ("lo", &a.lo), ("hi", &a.hi), ("points", &a.points)]
                .into_iter()
                .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
                .collect();
            let cfg = resolve(&a.common, &extra)?;
            if a.threads == Some(0) {
                return Err(config_err("threads must be positive"));
            }
            cmd_sweep(&cfg, a.threads, a.refine_exact)
        }
        Command::Presets => Ok(PRESETS.iter().map(|p| format!("{p}\n")).collect()),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(text) => {
            print!("{text}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("stirap: {e}");
            e.exit_code()
        }
    }
}
