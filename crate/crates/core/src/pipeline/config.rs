//! TOML run configuration.
//!
//! ```toml
//! case = "../cases/exp1.json"   # relative paths resolve against this file
//! output_dir = "../out/exp1"
//! seed = 7
//! record_wall_time = false
//!
//! [solver]              # SolverSettings
//! [reward]              # RewardConfig
//! [stage_one]           # StageConfig
//! max_episodes = 500
//! [stage_one.episode]   # EpisodeConfig
//! [stage_one.sac]       # SacConfig
//! [stage_two]           # StageConfig, used only when stage one leaves overloads
//! [load_control]        # LoadControlConfig
//! ```
//!
//! `GRIDRL_SEED` and `GRIDRL_OUT` override `seed` and `output_dir`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::EpisodeConfig;
use crate::error::{Error, Result};
use crate::power_flow::SolverSettings;
use crate::sac::SacConfig;
use crate::security::RewardConfig;

pub const SEED_VAR: &str = "GRIDRL_SEED";
pub const OUT_VAR: &str = "GRIDRL_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageConfig {
    pub max_episodes: usize,
    /// Greedy evaluation every this many episodes, and after the last one.
    pub eval_every: usize,
    /// Stop after this many consecutive episodes solved in one step.
    pub patience: usize,
    pub episode: EpisodeConfig,
    pub sac: SacConfig,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self {
            max_episodes: 500,
            eval_every: 10,
            patience: 5,
            episode: EpisodeConfig::default(),
            sac: SacConfig::default(),
        }
    }
}

impl StageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_episodes == 0 {
            return Err(Error::Config("max_episodes must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        self.episode.validate()?;
        self.sac.validate()
    }
}

/// How the stage-two load group is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadControlConfig {
    /// Use this group from the case file instead of detecting one.
    pub group: Option<u32>,
    pub hop_radius: usize,
}

impl Default for LoadControlConfig {
    fn default() -> Self {
        Self {
            group: None,
            hop_radius: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Fill `wall_ms` in metrics logs; off keeps logs reproducible.
    #[serde(default)]
    pub record_wall_time: bool,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub reward: RewardConfig,
    #[serde(default)]
    pub stage_one: StageConfig,
    #[serde(default)]
    pub stage_two: StageConfig,
    #[serde(default)]
    pub load_control: LoadControlConfig,
}

impl RunConfig {
    pub fn new(case: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            case: case.into(),
            output_dir: output_dir.into(),
            seed: 0,
            record_wall_time: false,
            solver: SolverSettings::default(),
            reward: RewardConfig::default(),
            stage_one: StageConfig::default(),
            stage_two: StageConfig::default(),
            load_control: LoadControlConfig::default(),
        }
    }

    /// Parses TOML; relative paths are resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path, origin: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|s| line_col(text, s.start))
                .unwrap_or((0, 0));
            Error::Parse {
                path: origin.to_path_buf(),
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        if cfg.case.is_relative() {
            cfg.case = base_dir.join(&cfg.case);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base_dir.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    /// Reads, applies environment overrides and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::parse(&text, base, path)?;
        cfg.apply_env_overrides()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env_overrides(&mut self) -> Result<()> {
        if let Ok(seed) = std::env::var(SEED_VAR) {
            self.seed = seed
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_VAR}={seed:?} is not an unsigned integer")))?;
        }
        if let Ok(out) = std::env::var(OUT_VAR) {
            self.output_dir = PathBuf::from(out);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        self.reward.validate()?;
        self.stage_one.validate()?;
        self.stage_two.validate()?;
        if !self.case.is_file() {
            return Err(Error::Config(format!("case file {} does not exist", self.case.display())));
        }
        Ok(())
    }

    /// Seed of stage `index` (0 or 1).
    pub fn stage_seed(&self, index: u64) -> u64 {
        self.seed.wrapping_add(index)
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = RunConfig::parse("case = \"c.json\"\noutput_dir = \"out\"\n", Path::new("/x"), Path::new("r.toml")).unwrap();
        assert_eq!(cfg.case, PathBuf::from("/x/c.json"));
        assert_eq!(cfg.output_dir, PathBuf::from("/x/out"));
        assert_eq!(cfg.stage_one.max_episodes, 500);
        assert_eq!(cfg.stage_one.episode.max_steps, 50);
        assert_eq!(cfg.reward.b, 0.9);
    }

    #[test]
    fn nested_tables_parse() {
        let text = "case = \"/c.json\"\noutput_dir = \"/o\"\nseed = 3\n\
                    [stage_one]\nmax_episodes = 20\n[stage_one.sac]\nalpha = 0.01\nhidden = [8]\n\
                    [load_control]\nhop_radius = 3\n";
        let cfg = RunConfig::parse(text, Path::new("/x"), Path::new("r.toml")).unwrap();
        assert_eq!(cfg.case, PathBuf::from("/c.json"));
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.stage_one.sac.hidden, vec![8]);
        assert_eq!(cfg.load_control.hop_radius, 3);
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = "case = \"c.json\"\noutput_dir = \"o\"\n[stage_one]\nmax_epsiodes = 3\n";
        let err = RunConfig::parse(text, Path::new("."), Path::new("r.toml")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
    }

    #[test]
    fn zero_budget_rejected() {
        let s = StageConfig {
            max_episodes: 0,
            ..Default::default()
        };
        assert!(matches!(s.validate(), Err(Error::Config(_))));
    }
}
