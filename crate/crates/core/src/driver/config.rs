//! `key = value` run configuration.
//!
//! Every key is optional; omitted keys take the defaults of
//! [`RunConfig::default`]. Unknown keys are rejected.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `nx`, `ny` | 32 | cells per direction |
//! | `lx`, `ly` | 1 | domain lengths |
//! | `final_time` | 0.5 | horizon T |
//! | `nt` | 100 | time steps, `dt = T / nt` |
//! | `stab` | 2 | stabilization coefficient |
//! | `poisson_tol`, `implicit_tol` | 1e-10 | elliptic tolerances for `simulate` |
//! | `sensitivity_tol` | 1e-12 | elliptic tolerance for `grad-check` and `optimize` |
//! | `phi0` | `cosine(1,1)` | initial datum profile |
//! | `phi0_amplitude`, `phi0_offset` | 0.5, 0.2 | `φ₀ = offset + amplitude·profile` |
//! | `source` | `cosine(2,1)` | mass source profile, mean removed |
//! | `source_amplitude`, `source_frequency` | 0.5, 0 | `S = amplitude·profile·cos(2π f t)` |
//! | `control` | `zero` | control `R` (simulate) or start point (optimize) |
//! | `control_amplitude`, `control_offset`, `control_frequency` | 1, 0, 0 | as for the source, plus an offset |
//! | `beta1`, `beta2`, `beta3` | 0, 1, 1e-4 | cost weights |
//! | `target` | `manufactured` | `manufactured`, `zero` or `file` |
//! | `target_control` | `random(3)` | profile of the control that generates a manufactured target |
//! | `target_control_amplitude`, `target_control_offset`, `target_control_frequency` | 0.5, 0, 0 | |
//! | `target_omega`, `target_q` | unset | field files for `target = file` |
//! | `r_min`, `r_max` | -1, 1 | box bounds, a number or `file:<path>` |
//! | `opt_max_iter` | 200 | |
//! | `opt_tol` | 1e-10 | stationarity tolerance |
//! | `armijo_c1`, `alpha0`, `max_halvings` | 1e-4, 1, 40 | line search |
//! | `step_rule` | `bb` | `bb` or `fixed` |
//! | `grad_check_epsilons` | `1e-2,1e-3,1e-4` | finite-difference steps |
//! | `h_norm` | 0.1 | L²(Q) norm of the random check direction |
//! | `seed` | 0 | RNG seed |
//! | `out_dir` | `out` | artifact directory |
//! | `dump_stride` | 10 | write fields every this many steps |
//!
//! Profiles are `zero`, `constant`, `cosine(kx,ky)`, `random(modes)` or
//! `file:<path>`.

use crate::control::StepRule;
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid config: {0}")]
    Validation(String),
    #[error("cannot read {path}: {message}")]
    Input { path: PathBuf, message: String },
}

/// Spatial shape of an input field.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Zero,
    Constant,
    /// `cos(kx π x / lx) cos(ky π y / ly)`
    Cosine(u32, u32),
    /// Seeded truncated cosine series with `modes` modes per direction,
    /// scaled to unit maximum.
    Random(u32),
    File(PathBuf),
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Zero => f.write_str("zero"),
            Profile::Constant => f.write_str("constant"),
            Profile::Cosine(kx, ky) => write!(f, "cosine({kx},{ky})"),
            Profile::Random(m) => write!(f, "random({m})"),
            Profile::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

fn call_args<'a>(s: &'a str, name: &str) -> Option<Vec<&'a str>> {
    let inner = s.strip_prefix(name)?.trim().strip_prefix('(')?.strip_suffix(')')?;
    Some(inner.split(',').map(str::trim).collect())
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if let Some(path) = s.strip_prefix("file:") {
            return Ok(Profile::File(PathBuf::from(path.trim())));
        }
        match s {
            "zero" => return Ok(Profile::Zero),
            "constant" => return Ok(Profile::Constant),
            _ => {}
        }
        let int = |a: &str| a.parse::<u32>().map_err(|_| format!("bad integer '{a}' in '{s}'"));
        if let Some(args) = call_args(s, "cosine") {
            if let [kx, ky] = args[..] {
                return Ok(Profile::Cosine(int(kx)?, int(ky)?));
            }
        }
        if let Some(args) = call_args(s, "random") {
            if let [m] = args[..] {
                return Ok(Profile::Random(int(m)?));
            }
        }
        Err(format!(
            "unknown profile '{s}' (expected zero, constant, cosine(kx,ky), random(modes) or file:<path>)"
        ))
    }
}

/// A box bound: a constant or a field file.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundSpec {
    Constant(f64),
    File(PathBuf),
}

impl fmt::Display for BoundSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundSpec::Constant(c) => write!(f, "{c}"),
            BoundSpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl FromStr for BoundSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().strip_prefix("file:") {
            Some(path) => Ok(BoundSpec::File(PathBuf::from(path.trim()))),
            None => parse_f64(s).map(BoundSpec::Constant),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetMode {
    /// Targets are the trajectory of a known control.
    Manufactured,
    Zero,
    /// `target_omega` and `target_q` field files, `φ_Q` constant in time.
    File,
}

impl fmt::Display for TargetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TargetMode::Manufactured => "manufactured",
            TargetMode::Zero => "zero",
            TargetMode::File => "file",
        })
    }
}

impl FromStr for TargetMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "manufactured" => Ok(TargetMode::Manufactured),
            "zero" => Ok(TargetMode::Zero),
            "file" => Ok(TargetMode::File),
            other => Err(format!("unknown target mode '{other}'")),
        }
    }
}

fn step_rule_name(rule: StepRule) -> &'static str {
    match rule {
        StepRule::Fixed => "fixed",
        StepRule::BarzilaiBorwein => "bb",
    }
}

fn parse_step_rule(s: &str) -> Result<StepRule, String> {
    match s.trim() {
        "fixed" => Ok(StepRule::Fixed),
        "bb" => Ok(StepRule::BarzilaiBorwein),
        other => Err(format!("unknown step rule '{other}' (expected bb or fixed)")),
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| format!("expected a number, got '{}'", s.trim()))
}

fn parse_int<T: FromStr>(s: &str) -> Result<T, String> {
    s.trim()
        .parse::<T>()
        .map_err(|_| format!("expected a nonnegative integer, got '{}'", s.trim()))
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(parse_f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub final_time: f64,
    pub nt: usize,
    pub stab: f64,
    pub poisson_tol: f64,
    pub implicit_tol: f64,
    pub sensitivity_tol: f64,
    pub phi0: Profile,
    pub phi0_amplitude: f64,
    pub phi0_offset: f64,
    pub source: Profile,
    pub source_amplitude: f64,
    pub source_frequency: f64,
    pub control: Profile,
    pub control_amplitude: f64,
    pub control_offset: f64,
    pub control_frequency: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub target: TargetMode,
    pub target_control: Profile,
    pub target_control_amplitude: f64,
    pub target_control_offset: f64,
    pub target_control_frequency: f64,
    pub target_omega: Option<PathBuf>,
    pub target_q: Option<PathBuf>,
    pub r_min: BoundSpec,
    pub r_max: BoundSpec,
    pub opt_max_iter: usize,
    pub opt_tol: f64,
    pub armijo_c1: f64,
    pub alpha0: f64,
    pub max_halvings: usize,
    pub step_rule: StepRule,
    pub grad_check_epsilons: Vec<f64>,
    pub h_norm: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub dump_stride: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            nx: 32,
            ny: 32,
            lx: 1.0,
            ly: 1.0,
            final_time: 0.5,
            nt: 100,
            stab: 2.0,
            poisson_tol: 1e-10,
            implicit_tol: 1e-10,
            sensitivity_tol: 1e-12,
            phi0: Profile::Cosine(1, 1),
            phi0_amplitude: 0.5,
            phi0_offset: 0.2,
            source: Profile::Cosine(2, 1),
            source_amplitude: 0.5,
            source_frequency: 0.0,
            control: Profile::Zero,
            control_amplitude: 1.0,
            control_offset: 0.0,
            control_frequency: 0.0,
            beta1: 0.0,
            beta2: 1.0,
            beta3: 1e-4,
            target: TargetMode::Manufactured,
            target_control: Profile::Random(3),
            target_control_amplitude: 0.5,
            target_control_offset: 0.0,
            target_control_frequency: 0.0,
            target_omega: None,
            target_q: None,
            r_min: BoundSpec::Constant(-1.0),
            r_max: BoundSpec::Constant(1.0),
            opt_max_iter: 200,
            opt_tol: 1e-10,
            armijo_c1: 1e-4,
            alpha0: 1.0,
            max_halvings: 40,
            step_rule: StepRule::BarzilaiBorwein,
            grad_check_epsilons: vec![1e-2, 1e-3, 1e-4],
            h_norm: 0.1,
            seed: 0,
            out_dir: PathBuf::from("out"),
            dump_stride: 10,
        }
    }
}

impl RunConfig {
    pub fn dt(&self) -> f64 {
        self.final_time / self.nt as f64
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value;
        match key {
            "nx" => self.nx = parse_int(v)?,
            "ny" => self.ny = parse_int(v)?,
            "lx" => self.lx = parse_f64(v)?,
            "ly" => self.ly = parse_f64(v)?,
            "final_time" => self.final_time = parse_f64(v)?,
            "nt" => self.nt = parse_int(v)?,
            "stab" => self.stab = parse_f64(v)?,
            "poisson_tol" => self.poisson_tol = parse_f64(v)?,
            "implicit_tol" => self.implicit_tol = parse_f64(v)?,
            "sensitivity_tol" => self.sensitivity_tol = parse_f64(v)?,
            "phi0" => self.phi0 = v.parse()?,
            "phi0_amplitude" => self.phi0_amplitude = parse_f64(v)?,
            "phi0_offset" => self.phi0_offset = parse_f64(v)?,
            "source" => self.source = v.parse()?,
            "source_amplitude" => self.source_amplitude = parse_f64(v)?,
            "source_frequency" => self.source_frequency = parse_f64(v)?,
            "control" => self.control = v.parse()?,
            "control_amplitude" => self.control_amplitude = parse_f64(v)?,
            "control_offset" => self.control_offset = parse_f64(v)?,
            "control_frequency" => self.control_frequency = parse_f64(v)?,
            "beta1" => self.beta1 = parse_f64(v)?,
            "beta2" => self.beta2 = parse_f64(v)?,
            "beta3" => self.beta3 = parse_f64(v)?,
            "target" => self.target = v.parse()?,
            "target_control" => self.target_control = v.parse()?,
            "target_control_amplitude" => self.target_control_amplitude = parse_f64(v)?,
            "target_control_offset" => self.target_control_offset = parse_f64(v)?,
            "target_control_frequency" => self.target_control_frequency = parse_f64(v)?,
            "target_omega" => self.target_omega = Some(PathBuf::from(v.trim())),
            "target_q" => self.target_q = Some(PathBuf::from(v.trim())),
            "r_min" => self.r_min = v.parse()?,
            "r_max" => self.r_max = v.parse()?,
            "opt_max_iter" => self.opt_max_iter = parse_int(v)?,
            "opt_tol" => self.opt_tol = parse_f64(v)?,
            "armijo_c1" => self.armijo_c1 = parse_f64(v)?,
            "alpha0" => self.alpha0 = parse_f64(v)?,
            "max_halvings" => self.max_halvings = parse_int(v)?,
            "step_rule" => self.step_rule = parse_step_rule(v)?,
            "grad_check_epsilons" => self.grad_check_epsilons = parse_list(v)?,
            "h_norm" => self.h_norm = parse_f64(v)?,
            "seed" => self.seed = parse_int(v)?,
            "out_dir" => self.out_dir = PathBuf::from(v.trim()),
            "dump_stride" => self.dump_stride = parse_int(v)?,
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Checks every invariant that does not need file contents.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Validation(msg));
        if self.nx < 4 || self.ny < 4 {
            return fail(format!("grid needs nx, ny >= 4, got {}x{}", self.nx, self.ny));
        }
        for (name, v) in [
            ("lx", self.lx),
            ("ly", self.ly),
            ("final_time", self.final_time),
            ("poisson_tol", self.poisson_tol),
            ("implicit_tol", self.implicit_tol),
            ("sensitivity_tol", self.sensitivity_tol),
            ("opt_tol", self.opt_tol),
            ("alpha0", self.alpha0),
            ("h_norm", self.h_norm),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if self.nt == 0 {
            return fail("nt must be at least 1".into());
        }
        if self.dump_stride == 0 {
            return fail("dump_stride must be at least 1".into());
        }
        if !(self.stab.is_finite() && self.stab >= 0.0) {
            return fail(format!("stab must be nonnegative, got {}", self.stab));
        }
        for (name, v) in [
            ("phi0_amplitude", self.phi0_amplitude),
            ("phi0_offset", self.phi0_offset),
            ("source_amplitude", self.source_amplitude),
            ("source_frequency", self.source_frequency),
            ("control_amplitude", self.control_amplitude),
            ("control_offset", self.control_offset),
            ("control_frequency", self.control_frequency),
            ("target_control_amplitude", self.target_control_amplitude),
            ("target_control_offset", self.target_control_offset),
            ("target_control_frequency", self.target_control_frequency),
        ] {
            if !v.is_finite() {
                return fail(format!("{name} must be finite, got {v}"));
            }
        }
        let betas = [self.beta1, self.beta2, self.beta3];
        if betas.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return fail(format!("beta1, beta2, beta3 must be nonnegative, got {betas:?}"));
        }
        if betas.iter().all(|&b| b == 0.0) {
            return fail("beta1, beta2, beta3 must be not all zero".into());
        }
        if let (BoundSpec::Constant(lo), BoundSpec::Constant(hi)) = (&self.r_min, &self.r_max) {
            if !(lo <= hi) {
                return fail(format!("r_min <= r_max violated: {lo} > {hi}"));
            }
        }
        match self.source {
            Profile::Constant | Profile::Cosine(0, 0) => {
                return fail(format!(
                    "source must have zero mean; profile '{}' is constant",
                    self.source
                ))
            }
            _ => {}
        }
        if self.target == TargetMode::File && (self.target_omega.is_none() || self.target_q.is_none()) {
            return fail("target = file requires target_omega and target_q".into());
        }
        if !(self.armijo_c1 > 0.0 && self.armijo_c1 < 1.0) {
            return fail(format!("armijo_c1 must lie in (0, 1), got {}", self.armijo_c1));
        }
        if self.grad_check_epsilons.is_empty()
            || self.grad_check_epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0))
        {
            return fail("grad_check_epsilons must be a nonempty list of positive numbers".into());
        }
        Ok(())
    }

    /// Canonical text form: every key, in a fixed order.
    pub fn serialize(&self) -> String {
        self.lines(true).join("\n") + "\n"
    }

    fn lines(&self, with_out_dir: bool) -> Vec<String> {
        let eps: Vec<String> = self.grad_check_epsilons.iter().map(f64::to_string).collect();
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let mut out = vec![
            format!("nx = {}", self.nx),
            format!("ny = {}", self.ny),
            format!("lx = {}", self.lx),
            format!("ly = {}", self.ly),
            format!("final_time = {}", self.final_time),
            format!("nt = {}", self.nt),
            format!("stab = {}", self.stab),
            format!("poisson_tol = {}", self.poisson_tol),
            format!("implicit_tol = {}", self.implicit_tol),
            format!("sensitivity_tol = {}", self.sensitivity_tol),
            format!("phi0 = {}", self.phi0),
            format!("phi0_amplitude = {}", self.phi0_amplitude),
            format!("phi0_offset = {}", self.phi0_offset),
            format!("source = {}", self.source),
            format!("source_amplitude = {}", self.source_amplitude),
            format!("source_frequency = {}", self.source_frequency),
            format!("control = {}", self.control),
            format!("control_amplitude = {}", self.control_amplitude),
            format!("control_offset = {}", self.control_offset),
            format!("control_frequency = {}", self.control_frequency),
            format!("beta1 = {}", self.beta1),
            format!("beta2 = {}", self.beta2),
            format!("beta3 = {}", self.beta3),
            format!("target = {}", self.target),
            format!("target_control = {}", self.target_control),
            format!("target_control_amplitude = {}", self.target_control_amplitude),
            format!("target_control_offset = {}", self.target_control_offset),
            format!("target_control_frequency = {}", self.target_control_frequency),
        ];
        if let Some(p) = path(&self.target_omega) {
            out.push(format!("target_omega = {p}"));
        }
        if let Some(p) = path(&self.target_q) {
            out.push(format!("target_q = {p}"));
        }
        out.extend([
            format!("r_min = {}", self.r_min),
            format!("r_max = {}", self.r_max),
            format!("opt_max_iter = {}", self.opt_max_iter),
            format!("opt_tol = {}", self.opt_tol),
            format!("armijo_c1 = {}", self.armijo_c1),
            format!("alpha0 = {}", self.alpha0),
            format!("max_halvings = {}", self.max_halvings),
            format!("step_rule = {}", step_rule_name(self.step_rule)),
            format!("grad_check_epsilons = {}", eps.join(",")),
            format!("h_norm = {}", self.h_norm),
            format!("seed = {}", self.seed),
        ]);
        if with_out_dir {
            out.push(format!("out_dir = {}", self.out_dir.display()));
        }
        out.push(format!("dump_stride = {}", self.dump_stride));
        out
    }

    /// SHA-256 prefix of the canonical form without `out_dir`, so the same
    /// run written to different directories carries the same hash.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.lines(false).join("\n").as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Resolves relative input file paths against `dir`.
    pub fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        for profile in [
            &mut self.phi0,
            &mut self.source,
            &mut self.control,
            &mut self.target_control,
        ] {
            if let Profile::File(p) = profile {
                fix(p);
            }
        }
        for bound in [&mut self.r_min, &mut self.r_max] {
            if let BoundSpec::File(p) = bound {
                fix(p);
            }
        }
        for p in [&mut self.target_omega, &mut self.target_q].into_iter().flatten() {
            fix(p);
        }
    }
}

/// Parses and validates config text.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut seen = std::collections::HashSet::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| ConfigError::Parse { line, message };
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(format!("expected 'key = value', got '{content}'")))?;
        let key = key.trim();
        if !seen.insert(key.to_string()) {
            return Err(err(format!("duplicate key '{key}'")));
        }
        cfg.set(key, value).map_err(err)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a config file; relative input paths are taken relative to it.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut cfg = parse_config(&text)?;
    if let Some(dir) = path.parent() {
        cfg.resolve_paths(dir);
    }
    Ok(cfg)
}
