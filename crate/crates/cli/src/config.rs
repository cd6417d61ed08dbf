//! Run configuration: flat `key = value` text with dotted section prefixes.
//!
//! ```text
//! seed = 7
//! system.kind = lattice
//! system.n = 4000
//! engine.dt = 0.005
//! engine.n_sub = auto
//! ```
//!
//! Lines starting with `#` and blank lines are ignored. Every key has a default;
//! unknown or repeated keys are errors.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use shortmd_core::generate::{self, RING_BOND_LENGTH};
use shortmd_core::{
    AngleParams, FENEParams, FlatConfig, Interactions, LJParams, LangevinParams,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.line, &self.key) {
            (Some(l), Some(k)) => write!(f, "line {l}, key `{k}`: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            (None, Some(k)) => write!(f, "key `{k}`: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn key_error(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { line: None, key: Some(key.to_string()), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    Lattice,
    Spherical,
    Melt,
    Random,
    Uniform,
}

impl SystemKind {
    fn name(self) -> &'static str {
        match self {
            SystemKind::Lattice => "lattice",
            SystemKind::Spherical => "spherical",
            SystemKind::Melt => "melt",
            SystemKind::Random => "random",
            SystemKind::Uniform => "uniform",
        }
    }
}

impl FromStr for SystemKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "lattice" => SystemKind::Lattice,
            "spherical" => SystemKind::Spherical,
            "melt" => SystemKind::Melt,
            "random" => SystemKind::Random,
            "uniform" => SystemKind::Uniform,
            _ => return Err(format!("unknown system kind `{s}` (lattice, spherical, melt, random, uniform)")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NSub {
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchRule {
    Lookahead,
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub kind: SystemKind,
    pub n: usize,
    pub density: f64,
    pub temperature: f64,
    pub box_length: f64,
    pub diameter_fraction: f64,
    pub alpha: f64,
    pub chains: usize,
    pub chain_length: usize,
    pub bond_length: f64,
    pub min_separation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionConfig {
    pub epsilon: f64,
    pub sigma: f64,
    pub r_cut: f64,
    pub shifted: bool,
    pub r_skin: f64,
    pub fene: bool,
    pub fene_k: f64,
    pub fene_r_max: f64,
    pub angle: bool,
    pub angle_k: f64,
    pub angle_theta0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineSection {
    pub dt: f64,
    pub steps: u64,
    pub warmup: u64,
    pub force_cap: Option<f64>,
    pub thermostat: bool,
    pub gamma: f64,
    pub temperature: f64,
    pub n_sub: NSub,
    pub worker_threads: usize,
    pub probe_steps: u64,
    pub search: SearchRule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub timing: Option<String>,
    /// Steps per timing record; 0 writes only the summary footer.
    pub timing_every: u64,
    pub trajectory: Option<String>,
    pub trajectory_stride: u64,
    pub observables: Option<String>,
    pub observable_stride: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub system: SystemConfig,
    pub interaction: InteractionConfig,
    pub engine: EngineSection,
    pub output: OutputConfig,
    /// Largest system `verify` will hand to the quadratic oracle.
    pub verify_max_particles: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let angle = AngleParams::default();
        let fene = FENEParams::default();
        RunConfig {
            seed: 1,
            system: SystemConfig {
                kind: SystemKind::Lattice,
                n: 4000,
                density: 0.8442,
                temperature: 0.6,
                box_length: 54.0,
                diameter_fraction: 0.7,
                alpha: 0.1,
                chains: 20,
                chain_length: 200,
                bond_length: RING_BOND_LENGTH,
                min_separation: 0.8,
            },
            interaction: InteractionConfig {
                epsilon: 1.0,
                sigma: 1.0,
                r_cut: 2.5,
                shifted: true,
                r_skin: 0.3,
                fene: false,
                fene_k: fene.k,
                fene_r_max: fene.r_max,
                angle: false,
                angle_k: angle.k,
                angle_theta0: angle.theta0,
            },
            engine: EngineSection {
                dt: 0.005,
                steps: 1000,
                warmup: 0,
                force_cap: None,
                thermostat: false,
                gamma: 1.0,
                temperature: 0.6,
                n_sub: NSub::Fixed(1),
                worker_threads: 1,
                probe_steps: 20,
                search: SearchRule::Lookahead,
            },
            output: OutputConfig {
                timing: Some("timing.jsonl".into()),
                timing_every: 1,
                trajectory: None,
                trajectory_stride: 100,
                observables: Some("observables.csv".into()),
                observable_stride: 100,
            },
            verify_max_particles: 5000,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    v.parse::<T>()
        .map_err(|e| key_error(key, format!("cannot parse `{v}`: {e}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "on" | "yes" => Ok(true),
        "false" | "off" | "no" => Ok(false),
        _ => Err(key_error(key, format!("expected true or false, got `{v}`"))),
    }
}

fn parse_path(v: &str) -> Option<String> {
    (v != "none").then(|| v.to_string())
}

fn show_path(p: &Option<String>) -> String {
    p.clone().unwrap_or_else(|| "none".into())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError {
                    line: Some(line_no),
                    key: None,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            let at_line = |mut e: ConfigError| {
                e.line = Some(line_no);
                e
            };
            if let Some(first) = seen.insert(key.to_string(), line_no) {
                return Err(at_line(key_error(key, format!("already set on line {first}"))));
            }
            cfg.set(key, value).map_err(at_line)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        let s = &mut self.system;
        let ia = &mut self.interaction;
        let e = &mut self.engine;
        let o = &mut self.output;
        match key {
            "seed" => self.seed = parse_value(key, v)?,
            "system.kind" => s.kind = v.parse().map_err(|m: String| key_error(key, m))?,
            "system.n" => s.n = parse_value(key, v)?,
            "system.density" => s.density = parse_value(key, v)?,
            "system.temperature" => s.temperature = parse_value(key, v)?,
            "system.box_length" => s.box_length = parse_value(key, v)?,
            "system.diameter_fraction" => s.diameter_fraction = parse_value(key, v)?,
            "system.alpha" => s.alpha = parse_value(key, v)?,
            "system.chains" => s.chains = parse_value(key, v)?,
            "system.chain_length" => s.chain_length = parse_value(key, v)?,
            "system.bond_length" => s.bond_length = parse_value(key, v)?,
            "system.min_separation" => s.min_separation = parse_value(key, v)?,
            "interaction.lj.epsilon" => ia.epsilon = parse_value(key, v)?,
            "interaction.lj.sigma" => ia.sigma = parse_value(key, v)?,
            "interaction.lj.r_cut" => ia.r_cut = parse_value(key, v)?,
            "interaction.lj.shifted" => ia.shifted = parse_bool(key, v)?,
            "interaction.r_skin" => ia.r_skin = parse_value(key, v)?,
            "interaction.fene.enabled" => ia.fene = parse_bool(key, v)?,
            "interaction.fene.k" => ia.fene_k = parse_value(key, v)?,
            "interaction.fene.r_max" => ia.fene_r_max = parse_value(key, v)?,
            "interaction.angle.enabled" => ia.angle = parse_bool(key, v)?,
            "interaction.angle.k" => ia.angle_k = parse_value(key, v)?,
            "interaction.angle.theta0" => ia.angle_theta0 = parse_value(key, v)?,
            "engine.dt" => e.dt = parse_value(key, v)?,
            "engine.steps" => e.steps = parse_value(key, v)?,
            "engine.warmup" => e.warmup = parse_value(key, v)?,
            "engine.force_cap" => {
                e.force_cap = if v == "none" { None } else { Some(parse_value(key, v)?) }
            }
            "engine.thermostat" => {
                e.thermostat = match v {
                    "langevin" => true,
                    "none" => false,
                    _ => return Err(key_error(key, format!("expected langevin or none, got `{v}`"))),
                }
            }
            "engine.gamma" => e.gamma = parse_value(key, v)?,
            "engine.temperature" => e.temperature = parse_value(key, v)?,
            "engine.n_sub" => {
                e.n_sub = if v == "auto" { NSub::Auto } else { NSub::Fixed(parse_value(key, v)?) }
            }
            "engine.worker_threads" => e.worker_threads = parse_value(key, v)?,
            "engine.autotune.probe_steps" => e.probe_steps = parse_value(key, v)?,
            "engine.autotune.search" => {
                e.search = match v {
                    "lookahead" => SearchRule::Lookahead,
                    "exhaustive" => SearchRule::Exhaustive,
                    _ => return Err(key_error(key, format!("expected lookahead or exhaustive, got `{v}`"))),
                }
            }
            "output.timing" => o.timing = parse_path(v),
            "output.timing_every" => o.timing_every = parse_value(key, v)?,
            "output.trajectory" => o.trajectory = parse_path(v),
            "output.trajectory_stride" => o.trajectory_stride = parse_value(key, v)?,
            "output.observables" => o.observables = parse_path(v),
            "output.observable_stride" => o.observable_stride = parse_value(key, v)?,
            "verify.max_particles" => self.verify_max_particles = parse_value(key, v)?,
            _ => return Err(key_error(key, "unknown key")),
        }
        Ok(())
    }

    /// Every key with its current value, in canonical order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let s = &self.system;
        let ia = &self.interaction;
        let e = &self.engine;
        let o = &self.output;
        vec![
            ("seed", self.seed.to_string()),
            ("system.kind", s.kind.name().into()),
            ("system.n", s.n.to_string()),
            ("system.density", s.density.to_string()),
            ("system.temperature", s.temperature.to_string()),
            ("system.box_length", s.box_length.to_string()),
            ("system.diameter_fraction", s.diameter_fraction.to_string()),
            ("system.alpha", s.alpha.to_string()),
            ("system.chains", s.chains.to_string()),
            ("system.chain_length", s.chain_length.to_string()),
            ("system.bond_length", s.bond_length.to_string()),
            ("system.min_separation", s.min_separation.to_string()),
            ("interaction.lj.epsilon", ia.epsilon.to_string()),
            ("interaction.lj.sigma", ia.sigma.to_string()),
            ("interaction.lj.r_cut", ia.r_cut.to_string()),
            ("interaction.lj.shifted", ia.shifted.to_string()),
            ("interaction.r_skin", ia.r_skin.to_string()),
            ("interaction.fene.enabled", ia.fene.to_string()),
            ("interaction.fene.k", ia.fene_k.to_string()),
            ("interaction.fene.r_max", ia.fene_r_max.to_string()),
            ("interaction.angle.enabled", ia.angle.to_string()),
            ("interaction.angle.k", ia.angle_k.to_string()),
            ("interaction.angle.theta0", ia.angle_theta0.to_string()),
            ("engine.dt", e.dt.to_string()),
            ("engine.steps", e.steps.to_string()),
            ("engine.warmup", e.warmup.to_string()),
            ("engine.force_cap", e.force_cap.map_or("none".into(), |c| c.to_string())),
            ("engine.thermostat", if e.thermostat { "langevin" } else { "none" }.into()),
            ("engine.gamma", e.gamma.to_string()),
            ("engine.temperature", e.temperature.to_string()),
            (
                "engine.n_sub",
                match e.n_sub {
                    NSub::Auto => "auto".into(),
                    NSub::Fixed(n) => n.to_string(),
                },
            ),
            ("engine.worker_threads", e.worker_threads.to_string()),
            ("engine.autotune.probe_steps", e.probe_steps.to_string()),
            (
                "engine.autotune.search",
                match e.search {
                    SearchRule::Lookahead => "lookahead",
                    SearchRule::Exhaustive => "exhaustive",
                }
                .into(),
            ),
            ("output.timing", show_path(&o.timing)),
            ("output.timing_every", o.timing_every.to_string()),
            ("output.trajectory", show_path(&o.trajectory)),
            ("output.trajectory_stride", o.trajectory_stride.to_string()),
            ("output.observables", show_path(&o.observables)),
            ("output.observable_stride", o.observable_stride.to_string()),
            ("verify.max_particles", self.verify_max_particles.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Checks every parameter the run will use, so bad values fail before any work starts.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.lj().map_err(|e| key_error("interaction.lj", e.to_string()))?;
        self.interactions()?;
        self.engine_config(1).map_err(|e| key_error("engine", e.to_string()))?;
        let s = &self.system;
        let need = |ok: bool, key: &str, msg: &str| if ok { Ok(()) } else { Err(key_error(key, msg)) };
        need(s.density > 0.0, "system.density", "must be positive")?;
        need(s.temperature >= 0.0, "system.temperature", "must be non-negative")?;
        need(self.interaction.r_skin > 0.0, "interaction.r_skin", "must be positive")?;
        need(self.engine.worker_threads >= 1, "engine.worker_threads", "must be at least 1")?;
        if let NSub::Fixed(n) = self.engine.n_sub {
            need(n >= 1, "engine.n_sub", "must be at least 1 or auto")?;
        }
        need(self.engine.probe_steps >= 10, "engine.autotune.probe_steps", "must be at least 10")?;
        need(self.output.trajectory_stride >= 1, "output.trajectory_stride", "must be at least 1")?;
        if self.engine.thermostat {
            LangevinParams::new(self.engine.gamma, self.engine.temperature, self.seed)
                .map_err(|e| key_error("engine.gamma", e.to_string()))?;
        }
        match s.kind {
            SystemKind::Lattice | SystemKind::Random | SystemKind::Uniform => {
                need(s.n >= 1, "system.n", "must be at least 1")?
            }
            SystemKind::Spherical => {
                need(s.box_length > 0.0, "system.box_length", "must be positive")?;
                need(
                    s.diameter_fraction > 0.0 && s.diameter_fraction <= 1.0,
                    "system.diameter_fraction",
                    "must be in (0, 1]",
                )?;
                need((0.0..=1.0).contains(&s.alpha), "system.alpha", "must be in [0, 1]")?;
            }
            SystemKind::Melt => {
                need(s.chains >= 1, "system.chains", "must be at least 1")?;
                need(s.chain_length >= 3, "system.chain_length", "must be at least 3")?;
                need(s.bond_length > 0.0, "system.bond_length", "must be positive")?;
            }
        }
        Ok(())
    }

    pub fn lj(&self) -> shortmd_core::Result<LJParams> {
        let ia = &self.interaction;
        LJParams::new(ia.epsilon, ia.sigma, ia.r_cut, ia.shifted)
    }

    pub fn interactions(&self) -> Result<Interactions, ConfigError> {
        let ia = &self.interaction;
        let lj = self.lj().map_err(|e| key_error("interaction.lj", e.to_string()))?;
        let fene = ia
            .fene
            .then(|| FENEParams::new(ia.fene_k, ia.fene_r_max))
            .transpose()
            .map_err(|e| key_error("interaction.fene", e.to_string()))?;
        let angle = ia
            .angle
            .then(|| AngleParams::new(ia.angle_k, ia.angle_theta0))
            .transpose()
            .map_err(|e| key_error("interaction.angle", e.to_string()))?;
        Ok(Interactions { lj, fene, angle })
    }

    /// Engine settings for a fixed subnode count.
    pub fn engine_config(&self, n_sub: usize) -> shortmd_core::Result<shortmd_core::EngineConfig> {
        let e = &self.engine;
        let mut cfg = shortmd_core::EngineConfig::nve(e.dt, e.steps, n_sub, e.worker_threads.max(1));
        if e.thermostat {
            cfg.thermostat = Some(LangevinParams::new(e.gamma, e.temperature, self.seed)?);
        }
        cfg.observable_stride = self.output.observable_stride;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Builds the configured system. Bonds and angles are dropped when the
    /// matching interaction is disabled.
    pub fn generate(&self) -> shortmd_core::Result<FlatConfig> {
        let s = &self.system;
        let mut flat = match s.kind {
            SystemKind::Lattice => generate::gen_lattice(s.n, s.density, s.temperature, self.seed)?,
            SystemKind::Spherical => generate::gen_spherical(
                s.box_length,
                s.diameter_fraction,
                s.density,
                s.alpha,
                s.temperature,
                self.seed,
            )?,
            SystemKind::Melt => generate::gen_polymer_melt(
                s.chains,
                s.chain_length,
                s.density,
                s.bond_length,
                s.temperature,
                self.seed,
            )?,
            SystemKind::Random => generate::gen_random(s.n, s.density, s.min_separation, s.temperature, self.seed)?,
            SystemKind::Uniform => generate::gen_uniform(s.n, s.density, self.seed)?,
        };
        if !self.interaction.fene {
            flat.bonds.clear();
        }
        if !self.interaction.angle {
            flat.angles.clear();
        }
        Ok(flat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn parses_sections_and_comments() {
        let c = RunConfig::parse(
            "# bulk\nseed = 9\n\nsystem.kind = melt\nsystem.chains = 3\nengine.n_sub = auto\nengine.force_cap = 50\noutput.trajectory = traj.xyz\n",
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.system.kind, SystemKind::Melt);
        assert_eq!(c.system.chains, 3);
        assert_eq!(c.engine.n_sub, NSub::Auto);
        assert_eq!(c.engine.force_cap, Some(50.0));
        assert_eq!(c.output.trajectory.as_deref(), Some("traj.xyz"));
    }

    #[test]
    fn errors_name_line_and_key() {
        let e = RunConfig::parse("seed = 1\nengine.dtt = 0.1\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        assert_eq!(e.key.as_deref(), Some("engine.dtt"));

        let e = RunConfig::parse("engine.dt = fast\n").unwrap_err();
        assert_eq!(e.line, Some(1));
        assert!(e.to_string().contains("engine.dt"));

        let e = RunConfig::parse("seed = 1\nseed = 2\n").unwrap_err();
        assert_eq!(e.line, Some(2));

        let e = RunConfig::parse("just words\n").unwrap_err();
        assert_eq!(e.line, Some(1));
        assert!(e.key.is_none());
    }

    #[test]
    fn invalid_values_rejected_before_run() {
        assert!(RunConfig::parse("engine.dt = -1\n").is_err());
        assert!(RunConfig::parse("system.kind = spherical\nsystem.alpha = 2\n").is_err());
        assert!(RunConfig::parse("system.kind = melt\nsystem.chain_length = 2\n").is_err());
        assert!(RunConfig::parse("engine.n_sub = 0\n").is_err());
        assert!(RunConfig::parse("engine.autotune.probe_steps = 3\n").is_err());
    }
}
