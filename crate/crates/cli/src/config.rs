use std::fs;
use std::path::{Path, PathBuf};

use plottal::datagen::GenSpec;
use plottal::evalkit::DEFAULT_THRESHOLDS;
use plottal::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Contents of a `--config` file. Every section is optional; flags given on
/// the command line win over the file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub gen: GenSpec,
    pub train: TrainConfig,
    pub thresholds: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            out: None,
            gen: GenSpec::default(),
            train: TrainConfig::default(),
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }

    pub fn data_dir(&self) -> Result<&Path, CliError> {
        self.data
            .as_deref()
            .ok_or_else(|| CliError::Usage("no data directory: pass --data or set \"data\" in the config".into()))
    }

    pub fn out_dir(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Usage("no output directory: pass --out or set \"out\" in the config".into()))
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(dir).map_err(plottal::Error::from)?;
        let text = serde_json::to_string_pretty(self).map_err(plottal::Error::from)? + "\n";
        fs::write(dir.join("config.resolved.json"), text).map_err(plottal::Error::from)?;
        Ok(())
    }
}

pub fn parse_thresholds(s: &str) -> Result<Vec<f64>, String> {
    let out: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("'{t}': {e}")))
        .collect::<Result<_, _>>()?;
    if out.is_empty() || out.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
        return Err("thresholds must lie in (0, 1]".into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"train": {"epochz": 3}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
        let ok: RunConfig = serde_json::from_str(r#"{"train": {"epochs": 3}, "gen": {"seed": 4}}"#).unwrap();
        assert_eq!(ok.train.epochs, 3);
        assert_eq!(ok.gen.seed, 4);
        assert_eq!(ok.train.batch_size, TrainConfig::default().batch_size);
    }

    #[test]
    fn threshold_lists() {
        assert_eq!(parse_thresholds("0.1,0.2, 0.5").unwrap(), vec![0.1, 0.2, 0.5]);
        assert!(parse_thresholds("0.1,x").is_err());
        assert!(parse_thresholds("1.5").is_err());
    }
}
