//! Experiment configuration, manifests and output files.
//!
//! A config is TOML. Every run writes `manifest.json` holding the full
//! resolved config; passing that manifest back as `--config` repeats the run.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::DomainSpec;
use crate::environ::EnvSpec;
use crate::error::{Error, Result};
use crate::schedule::ScaleParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlphaSection {
    /// Use this value instead of measuring.
    pub value: Option<f64>,
    /// Schedule row at which to measure.
    pub scale: usize,
    pub paths: usize,
}

impl Default for AlphaSection {
    fn default() -> Self {
        Self { value: None, scale: 0, paths: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingSection {
    pub n: usize,
    pub steps: usize,
    pub batch: usize,
    pub chains: usize,
    pub substeps: usize,
    /// Failure threshold in units of `L_{n-m̄}`.
    pub gamma: f64,
}

impl Default for CouplingSection {
    fn default() -> Self {
        Self { n: 1, steps: 10, batch: 64, chains: 200, substeps: 256, gamma: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub seed: u64,
    pub paths: usize,
    pub dt: f64,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub n_max: usize,
    pub epsilons: Vec<f64>,
    /// Boundary data name from the function registry.
    pub f: String,
    /// Source term name from the function registry.
    pub g: String,
    /// Query points in `U`; empty means the domain's default grid.
    pub query: Vec<Vec<f64>>,
    /// Horizon in units of `L_{n+2}^2`.
    pub horizon: f64,
    pub k_max: usize,
    pub grid_h: f64,
    pub env: EnvSpec,
    pub domain: DomainSpec,
    pub schedule: ScaleParams,
    pub alpha: AlphaSection,
    pub coupling: CouplingSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: "rate".into(),
            seed: 1,
            paths: 10_000,
            dt: 0.1,
            out: PathBuf::from("out"),
            threads: None,
            n_max: 4,
            epsilons: vec![1.0 / 25.0, 1.0 / 32.0, 1.0 / 40.0],
            f: "zero".into(),
            g: "neg_one".into(),
            query: Vec::new(),
            horizon: 1.0,
            k_max: 4,
            grid_h: 0.05,
            env: EnvSpec::default(),
            domain: DomainSpec::default(),
            schedule: ScaleParams::default(),
            alpha: AlphaSection::default(),
            coupling: CouplingSection::default(),
        }
    }
}

impl ExperimentConfig {
    /// Reads a TOML config, or the config stored in a JSON manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str::<Manifest>(&text)?.config
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 {
            return Err(Error::Config("paths must be positive".into()));
        }
        if !(self.dt > 0.0 && self.dt <= 0.1) {
            return Err(Error::Config(format!("dt = {} must lie in (0, 0.1]", self.dt)));
        }
        if self.epsilons.iter().any(|e| !(*e > 0.0)) || self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("epsilons must be positive and strictly decreasing".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if self.env.d != self.schedule.d {
            return Err(Error::Config(format!("env has d = {} but schedule has d = {}", self.env.d, self.schedule.d)));
        }
        self.env.validate()?;
        self.schedule.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub outputs: Vec<String>,
    /// Free-form results summary.
    pub summary: serde_json::Value,
}

/// Collects the files one experiment writes into its output directory.
#[derive(Debug)]
pub struct Outputs {
    pub dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Creates `name` and hands the writer to `fill`.
    pub fn file<F>(&mut self, name: &str, fill: F) -> Result<()>
    where
        F: FnOnce(fs::File) -> Result<()>,
    {
        fill(fs::File::create(self.path(name))?)?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// Writes a Python script that embeds `csv_name` and plots columns
    /// `ys` against `x`.
    pub fn plot_script(&mut self, csv_name: &str, x: &str, ys: &[&str], log: bool, title: &str) -> Result<()> {
        let data = fs::read_to_string(self.path(csv_name))?;
        let stem = csv_name.trim_end_matches(".csv");
        let ys = ys.iter().map(|y| format!("{y:?}")).collect::<Vec<_>>().join(", ");
        let scale = if log { "ax.set_xscale('log')\nax.set_yscale('log')\n" } else { "" };
        let script = format!(
            "import csv, io\nimport matplotlib\nmatplotlib.use('Agg')\nimport matplotlib.pyplot as plt\n\n\
             DATA = '''{data}'''\n\n\
             rows = list(csv.DictReader(io.StringIO(DATA)))\n\
             fig, ax = plt.subplots()\n\
             for y in [{ys}]:\n    \
                 pts = [(float(r[{x:?}]), float(r[y])) for r in rows if r[y] not in ('', 'nan')]\n    \
                 ax.plot([p[0] for p in pts], [p[1] for p in pts], 'o-', label=y)\n\
             {scale}ax.set_xlabel({x:?})\nax.set_title({title:?})\nax.legend()\n\
             fig.savefig({png:?}, dpi=120)\n",
            png = format!("{stem}.png"),
        );
        let name = format!("plot_{stem}.py");
        fs::write(self.path(&name), script)?;
        self.written.push(name);
        Ok(())
    }

    pub fn finish(self, config: &ExperimentConfig, summary: serde_json::Value) -> Result<Manifest> {
        let manifest = Manifest {
            tool: "homlab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            outputs: self.written,
            summary,
        };
        fs::write(self.dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(manifest)
    }
}
