//! Run configuration: a JSON file merged with command-line flags, flags
//! taking precedence.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use fractal_wave::{Error, Model, Result};

pub const OUT_ENV: &str = "FRACTAL_WAVE_OUT";
pub const DEFAULT_OUT: &str = "fractal-wave-out";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub spec: Option<PathBuf>,
    pub level: Option<usize>,
    pub b: Option<String>,
    pub beta: Option<f64>,
    pub lambda: Option<f64>,
    pub modes: Option<usize>,
    pub seed: Option<u64>,
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    pub output_times: Option<Vec<f64>>,
    pub vertices: Option<Vec<usize>>,
    pub replicas: Option<u64>,
    pub kind: Option<String>,
    pub t: Option<f64>,
    pub s: Option<f64>,
    pub x: Option<usize>,
    pub lags: Option<Vec<f64>>,
    pub pairs: Option<Vec<[usize; 2]>>,
    pub window: Option<[f64; 2]>,
    pub times: Option<Vec<f64>>,
    pub points: Option<usize>,
    pub criteria: Option<Vec<u8>>,
    pub out: Option<PathBuf>,
}

/// Flags shared by every subcommand; each overrides the config key of the
/// same name.
#[derive(Args, Clone, Debug, Default)]
pub struct Flags {
    /// JSON run configuration; flags override its keys
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Preset fractal: interval, gasket or hata
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Fractal specification file (JSON)
    #[arg(long, global = true, conflicts_with = "preset")]
    pub spec: Option<PathBuf>,
    #[arg(long, global = true)]
    pub level: Option<usize>,
    /// Free boundary labels: N, D or a comma list such as p1,p3
    #[arg(long, global = true)]
    pub b: Option<String>,
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Number of eigenmodes K
    #[arg(long, global = true)]
    pub modes: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub t_end: Option<f64>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long, global = true)]
    pub replicas: Option<u64>,
    /// Variogram kind: spatial, temporal or l2
    #[arg(long, global = true)]
    pub kind: Option<String>,
    #[arg(long, global = true)]
    pub t: Option<f64>,
    #[arg(long, global = true)]
    pub s: Option<f64>,
    /// Vertex for temporal variograms
    #[arg(long, global = true)]
    pub x: Option<usize>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub lags: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub times: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub vertices: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub points: Option<usize>,
    /// Acceptance criteria to run (default: all)
    #[arg(long, global = true, value_delimiter = ',')]
    pub criteria: Option<Vec<u8>>,
    /// Output directory [env: FRACTAL_WAVE_OUT]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

pub fn parse_config(text: &str, origin: &str) -> Result<RunConfig> {
    serde_json::from_str(text).map_err(|e| {
        Error::Validation(format!("{origin} line {}, column {}: {e}", e.line(), e.column()))
    })
}

fn read_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Validation(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text, &format!("config {}", path.display()))
}

macro_rules! overlay {
    ($cfg:ident, $flags:ident, $($field:ident),*) => {
        $(if $flags.$field.is_some() { $cfg.$field = $flags.$field.clone(); })*
    };
}

impl RunConfig {
    pub fn resolve(flags: &Flags) -> Result<Self> {
        let mut cfg = match &flags.config {
            Some(path) => read_config(path)?,
            None => RunConfig::default(),
        };
        if flags.preset.is_some() {
            cfg.spec = None;
        }
        if flags.spec.is_some() {
            cfg.preset = None;
        }
        overlay!(
            cfg, flags, preset, spec, level, b, beta, lambda, modes, seed, t_end, dt, replicas, kind, t, s, x,
            lags, times, vertices, points, criteria, out
        );
        if cfg.preset.is_some() && cfg.spec.is_some() {
            return Err(Error::Validation("give either a preset or a spec file, not both".into()));
        }
        Ok(cfg)
    }

    pub fn model(&self) -> Result<Model> {
        match (&self.preset, &self.spec) {
            (Some(name), None) => fractal_wave::presets::by_name(name),
            (None, Some(path)) => Model::from_file(path),
            (None, None) => Err(Error::Validation("no fractal given: use --preset or --spec".into())),
            (Some(_), Some(_)) => Err(Error::Validation("give either a preset or a spec file, not both".into())),
        }
    }

    /// Flag, then config, then the environment, then the default.
    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    pub fn require_positive_level(&self, default: usize) -> Result<usize> {
        let n = self.level.unwrap_or(default);
        if n == 0 {
            return Err(Error::Validation("spectral runs need level n ≥ 1".into()));
        }
        Ok(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"preset": "gasket", "level": 3, "beta": 0.5}"#).unwrap();
        let flags = Flags {
            config: Some(path),
            level: Some(5),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(&flags).unwrap();
        assert_eq!(cfg.level, Some(5));
        assert_eq!(cfg.beta, Some(0.5));
        assert_eq!(cfg.preset.as_deref(), Some("gasket"));
        let flags = Flags {
            config: flags.config.clone(),
            spec: Some("x.json".into()),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(&flags).unwrap();
        assert!(cfg.preset.is_none() && cfg.spec.is_some());
    }

    #[test]
    fn config_errors_name_the_line() {
        let e = parse_config("{\n  \"level\": 3,\n  \"bogus\": 1\n}", "config run.json").unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
        let e = parse_config("{\n  \"level\": \"three\"\n}", "config run.json").unwrap_err();
        assert!(e.to_string().contains("line 2"));
    }

    #[test]
    fn output_directory_precedence() {
        let cfg = RunConfig {
            out: Some("a".into()),
            ..Default::default()
        };
        assert_eq!(cfg.out_dir(), PathBuf::from("a"));
        assert!(RunConfig::default().require_positive_level(0).is_err());
    }
}
