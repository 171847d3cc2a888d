use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

/// Input family of a sweep. The grid value `g` maps to `(phi, theta)` as
/// `(g, 0)`, `(0, g)` and `(g, g)` respectively.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Ar1,
    Ma1,
    Arma11,
}

impl Model {
    pub const ALL: [Model; 3] = [Model::Ar1, Model::Ma1, Model::Arma11];

    pub fn name(self) -> &'static str {
        match self {
            Model::Ar1 => "ar1",
            Model::Ma1 => "ma1",
            Model::Arma11 => "arma11",
        }
    }

    pub fn params(self, g: f64) -> (f64, f64) {
        match self {
            Model::Ar1 => (g, 0.0),
            Model::Ma1 => (0.0, g),
            Model::Arma11 => (g, g),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub spectral_radius: f64,
    pub tau_max: usize,
    pub length: usize,
    pub seed: u64,
    pub models: Vec<Model>,
    pub grid: Vec<f64>,
    /// Innovation standard deviation.
    pub sigma: f64,
    /// Degrees-of-freedom correction of the per-lag estimates.
    pub debias: bool,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 15,
            spectral_radius: 0.9,
            tau_max: 250,
            length: 10_000,
            seed: 1,
            models: Model::ALL.to_vec(),
            grid: (0..10).map(|k| k as f64 / 10.0).collect(),
            sigma: 1.0,
            debias: true,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = toml::from_str(text).context("parsing config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.n == 0 {
            bail!("n must be at least 1");
        }
        if !(self.spectral_radius > 0.0 && self.spectral_radius < 1.0) {
            bail!("spectral_radius must lie in (0, 1)");
        }
        if self.tau_max == 0 {
            bail!("tau_max must be at least 1");
        }
        if self.length < 4 * self.tau_max {
            bail!("length must be at least 4 * tau_max");
        }
        if self.models.is_empty() || self.grid.is_empty() {
            bail!("models and grid must be nonempty");
        }
        if self.grid.iter().any(|g| !(g.abs() < 1.0)) {
            bail!("grid values must lie in (-1, 1)");
        }
        if !(self.sigma > 0.0) {
            bail!("sigma must be positive");
        }
        Ok(())
    }

    /// `(model, phi, theta)` for every sweep point, in output order.
    pub fn points(&self) -> Vec<(Model, f64, f64)> {
        let mut models = self.models.clone();
        models.sort();
        models.dedup();
        let mut grid = self.grid.clone();
        grid.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
        grid.dedup();
        models
            .iter()
            .flat_map(|&m| grid.iter().map(move |&g| {
                let (phi, theta) = m.params(g);
                (m, phi, theta)
            }))
            .collect()
    }
}

/// Parses `"0,0.1,0.2"` or `"0:0.9:0.1"` (start:stop:step, inclusive).
pub fn parse_grid(text: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() == 3 {
        let [start, stop, step] = [parts[0], parts[1], parts[2]].map(|p| p.trim().parse::<f64>());
        let (start, stop, step) = (start?, stop?, step?);
        if !(step > 0.0) || stop < start {
            bail!("grid range needs step > 0 and stop >= start");
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize;
        return Ok((0..=count).map(|k| start + k as f64 * step).collect());
    }
    text.split(',')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("grid value {p:?}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_experiment() {
        let c = ExperimentConfig::default();
        assert_eq!((c.n, c.tau_max, c.length), (15, 250, 10_000));
        assert_eq!(c.spectral_radius, 0.9);
        assert_eq!(c.grid.len(), 10);
        assert_eq!(c.points().len(), 30);
    }

    #[test]
    fn toml_overrides_and_rejects_unknown() {
        let c = ExperimentConfig::from_toml_str("n = 4\nmodels = [\"ma1\"]\ngrid = [0.0, 0.5]").unwrap();
        assert_eq!(c.n, 4);
        assert_eq!(c.points(), vec![(Model::Ma1, 0.0, 0.0), (Model::Ma1, 0.0, 0.5)]);
        assert!(ExperimentConfig::from_toml_str("nn = 4").is_err());
        assert!(ExperimentConfig::from_toml_str("spectral_radius = 1.5").is_err());
    }

    #[test]
    fn grid_syntax() {
        assert_eq!(parse_grid("0, 0.5").unwrap(), vec![0.0, 0.5]);
        let g = parse_grid("0:0.9:0.1").unwrap();
        assert_eq!(g.len(), 10);
        assert!((g[9] - 0.9).abs() < 1e-12);
        assert!(parse_grid("a,b").is_err());
    }
}
