//! Experiment configuration.
//!
//! A config file is TOML. Loading starts from the preset named by the
//! top-level `preset` key (default `nominal`), merges the file over it table
//! by table, applies `--override key=value` pairs, then deserializes with
//! unknown keys rejected. Lengths are in metres, angles in radians, forces
//! in newtons and stiffnesses in N/m (N·m/rad for rotation).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use qsplan_core::{
    BboSettings, CostWeights, DmpSettings, PegShape, PoseSigma, SuccessCriteria, TaskConfig,
    WeightMode, WorldConfig,
};

use crate::error::{CliError, CliResult};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// 75 mm peg, 1 mm clearance, 0.5 N peg weight.
    #[default]
    Nominal,
    /// 25 mm peg held with a shallow boundary squeeze, so the handles are
    /// easily driven past each other.
    ThinHandle,
    /// Two-prong peg over a plate with two slots.
    TwoProng,
}

impl Preset {
    pub fn config(self) -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            preset: self,
            ..ExperimentConfig::default()
        };
        match self {
            Preset::Nominal => {}
            Preset::ThinHandle => {
                let peg = PegShape::rectangle(0.0125, 0.05);
                cfg.world.hole.slots[0].width = 2.0 * peg.half_width + 1e-3;
                cfg.world.peg = peg;
                cfg.world.hole.set_chamfer_ratio(&cfg.world.peg, 0.256);
                cfg.task.grasp_squeeze = Some(0.005);
            }
            Preset::TwoProng => {
                cfg.world = WorldConfig {
                    peg_weight: cfg.world.peg_weight,
                    ..WorldConfig::two_prong()
                };
            }
        }
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Training scenarios `S`; 1 trains the base policy on the estimate.
    pub count: usize,
    pub sigma: PoseSigma,
    /// Keep draw 0 at the estimated pose.
    pub include_nominal: bool,
    pub weight_mode: WeightMode,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            count: 20,
            sigma: PoseSigma::reference(),
            include_nominal: true,
            weight_mode: WeightMode::Uniform,
            seed: 1,
        }
    }
}

/// Settings for evaluation and studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    /// Fresh true hole poses `M` drawn for success counts.
    pub evaluation_count: usize,
    pub evaluation_seed: u64,
    /// Chamfer width over peg width, in report order.
    pub chamfer_ratios: Vec<f64>,
    /// Handle friction coefficients of the friction sweep.
    pub friction_values: Vec<f64>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            evaluation_count: 20,
            evaluation_seed: 1000,
            chamfer_ratios: vec![0.385, 0.256, 0.128],
            friction_values: vec![0.05, 0.6],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RolloutConfig {
    /// Stop a rollout at the first handle slip.
    pub strict_slip: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub preset: Preset,
    pub world: WorldConfig,
    pub weights: CostWeights,
    pub dmp: DmpSettings,
    pub bbo: BboSettings,
    pub scenario: ScenarioConfig,
    pub success: SuccessCriteria,
    pub task: TaskConfig,
    pub rollout: RolloutConfig,
    pub study: StudyConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            preset: Preset::Nominal,
            world: WorldConfig {
                peg_weight: 0.5,
                ..WorldConfig::default()
            },
            weights: CostWeights::default(),
            dmp: DmpSettings::default(),
            bbo: BboSettings::default(),
            scenario: ScenarioConfig::default(),
            success: SuccessCriteria::default(),
            task: TaskConfig::default(),
            rollout: RolloutConfig::default(),
            study: StudyConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> CliResult<()> {
        if self.version != CONFIG_VERSION {
            return Err(CliError::Config(format!(
                "`version` is {}, this build reads version {CONFIG_VERSION}",
                self.version
            )));
        }
        self.world.validate()?;
        self.weights.validate()?;
        self.dmp.validate()?;
        self.bbo.validate()?;
        self.task.validate()?;
        if self.scenario.count == 0 {
            return Err(qsplan_core::Error::config("scenario.count", "must be >= 1").into());
        }
        for (key, s) in [
            ("scenario.sigma.x", self.scenario.sigma.x),
            ("scenario.sigma.y", self.scenario.sigma.y),
            ("scenario.sigma.theta", self.scenario.sigma.theta),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(qsplan_core::Error::config(key, "must be >= 0").into());
            }
        }
        if self.study.evaluation_count == 0 {
            return Err(qsplan_core::Error::config("study.evaluation_count", "must be >= 1").into());
        }
        if self.study.chamfer_ratios.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(qsplan_core::Error::config("study.chamfer_ratios", "must be >= 0").into());
        }
        if self.study.friction_values.iter().any(|m| !(*m > 0.0 && *m <= 2.0)) {
            return Err(
                qsplan_core::Error::config("study.friction_values", "must lie in (0, 2]").into(),
            );
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn from_toml(text: &str) -> CliResult<Self> {
        load_str(text, &[])
    }
}

/// Loads `path` (or the nominal preset when `None`) and applies overrides.
pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<ExperimentConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                CliError::input(p, "config file not found")
            } else {
                CliError::io(p, e)
            }
        })?,
        None => String::new(),
    };
    load_str(&text, overrides)
}

pub fn load_str(text: &str, overrides: &[String]) -> CliResult<ExperimentConfig> {
    let mut file: Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    let mut parsed = Vec::with_capacity(overrides.len());
    for o in overrides {
        parsed.push(parse_override(o)?);
    }
    // A `preset` override decides the base as well.
    for (path, value) in &parsed {
        if path.len() == 1 && path[0] == "preset" {
            file.insert("preset".into(), value.clone());
        }
    }
    let preset: Preset = match file.get("preset") {
        Some(v) => v
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("`preset`: {e}")))?,
        None => Preset::default(),
    };
    let mut root = Value::try_from(preset.config()).expect("config serializes to TOML");
    merge(&mut root, Value::Table(file));
    for (path, value) in parsed {
        set_path(&mut root, &path, value)?;
    }
    let cfg: ExperimentConfig = root
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Tables merge key by key; anything else replaces.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Table(b), Value::Table(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, t) => *b = t,
    }
}

/// `a.b.0.c=value`; the value is read as a TOML literal, or as a bare string
/// when it does not parse.
pub fn parse_override(raw: &str) -> CliResult<(Vec<String>, Value)> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{raw}` is not KEY=VALUE")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::Config(format!("override `{raw}` has an empty key segment")));
    }
    let value = value.trim();
    let parsed = format!("v = {value}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(value.to_string()));
    Ok((key.split('.').map(str::to_string).collect(), parsed))
}

fn set_path(root: &mut Value, path: &[String], value: Value) -> CliResult<()> {
    let mut node = root;
    for (depth, seg) in path.iter().enumerate() {
        let last = depth + 1 == path.len();
        let here = path[..=depth].join(".");
        node = match node {
            Value::Table(t) => {
                if last {
                    t.insert(seg.clone(), value);
                    return Ok(());
                }
                t.entry(seg.clone()).or_insert_with(|| Value::Table(Table::new()))
            }
            Value::Array(a) => {
                let i: usize = seg
                    .parse()
                    .map_err(|_| CliError::Config(format!("`{here}`: expected an array index")))?;
                let len = a.len();
                let slot = a.get_mut(i).ok_or_else(|| {
                    CliError::Config(format!("`{here}`: index out of range (length {len})"))
                })?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(CliError::Config(format!("`{here}`: parent is not a table"))),
        };
    }
    unreachable!("override paths are non-empty")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        for preset in [Preset::Nominal, Preset::ThinHandle, Preset::TwoProng] {
            let cfg = preset.config();
            cfg.validate().unwrap();
            let text = cfg.to_toml();
            let back = ExperimentConfig::from_toml(&text).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.to_toml(), text);
        }
    }

    #[test]
    fn empty_file_is_nominal() {
        assert_eq!(load_str("", &[]).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn partial_file_merges_over_preset() {
        let cfg = load_str("preset = \"thin-handle\"\n[bbo]\nseed = 9\n", &[]).unwrap();
        assert_eq!(cfg.bbo.seed, 9);
        assert_eq!(cfg.bbo.candidates, 15);
        assert_eq!(cfg.world.peg.half_width, 0.0125);
        assert_eq!(cfg.task.grasp_squeeze, Some(0.005));
    }

    #[test]
    fn overrides_reach_nested_and_indexed_keys() {
        let o = [
            "world.friction.handle=0.05".to_string(),
            "world.hole.slots.0.depth=0.04".to_string(),
            "bbo.strategy=reward-weighted".to_string(),
            "output.dir=/tmp/x".to_string(),
        ];
        let cfg = load_str("", &o).unwrap();
        assert_eq!(cfg.world.friction.handle, 0.05);
        assert_eq!(cfg.world.hole.slots[0].depth, 0.04);
        assert_eq!(cfg.bbo.strategy, qsplan_core::UpdateStrategy::RewardWeighted);
        assert_eq!(cfg.output.dir, PathBuf::from("/tmp/x"));
    }

    #[test]
    fn preset_override_changes_base() {
        let cfg = load_str("", &["preset=two-prong".to_string()]).unwrap();
        assert_eq!(cfg.world.peg.prongs.len(), 2);
        assert_eq!(cfg.world.peg_weight, 0.5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = load_str("[bbo]\ncandidate = 3\n", &[]).unwrap_err();
        assert!(err.to_string().contains("candidate"), "{err}");
        assert!(load_str("", &["weights.alpha9=1".to_string()]).is_err());
    }

    #[test]
    fn negative_chamfer_names_the_key() {
        let err = load_str("", &["world.hole.slots.0.chamfer_width=-0.001".to_string()]).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("world.hole.slots[0].chamfer_width"), "{err}");
    }

    #[test]
    fn bad_overrides() {
        assert!(parse_override("novalue").is_err());
        assert!(parse_override("a..b=1").is_err());
        assert!(load_str("", &["world.hole.slots.7.depth=1".to_string()]).is_err());
        assert!(load_str("", &["version=2".to_string()]).is_err());
    }
}
