//! Experiment configuration: one TOML file describing the data, the prior, the
//! sampler and the analyses to run.

use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{DetectionThresholds, SurfaceSpec};
use crate::error::{Error, Result};
use crate::model::{BlockSet, Dataset, Hyperparameters};
use crate::sampler::{ChainTrace, SamplerConfig};
use crate::simulate::{outlier_study_hyperparameters, simulate, SimulationSpec, Simulated};
use crate::symmat::{Matrix, SpdMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed. Overrides `sampler.seed`; chain `c` uses `seed + c`.
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "one")]
    pub chains: usize,
    /// Required by every command except `surface`.
    #[serde(default)]
    pub dataset: Option<DatasetSource>,
    pub hyperparameters: HyperparameterSpec,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub analysis: AnalysisRequests,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// Headerless or headed CSV, one observation per row.
    Path(PathBuf),
    Simulation(SimulationSpec),
    /// The planted-outlier study, seeded by the experiment seed.
    OutlierStudy {
        #[serde(default = "default_clustered")]
        clustered: usize,
    },
}

fn default_clustered() -> usize {
    157
}

/// Serializable form of [`Hyperparameters`] in double precision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperparameterSpec {
    pub k: usize,
    pub m0: Vec<f64>,
    pub kappa0: f64,
    pub nu0: f64,
    /// Prior scatter, as rows.
    pub s0: Vec<Vec<f64>>,
    pub beta: f64,
}

impl HyperparameterSpec {
    pub fn build(&self) -> Result<Hyperparameters<f64>> {
        let hp = Hyperparameters {
            k: self.k,
            m0: self.m0.clone(),
            kappa0: self.kappa0,
            nu0: self.nu0,
            s0: SpdMatrix::new(Matrix::from_rows(&self.s0)?)?,
            beta: self.beta,
        };
        hp.validate()?;
        Ok(hp)
    }
}

impl From<&Hyperparameters<f64>> for HyperparameterSpec {
    fn from(hp: &Hyperparameters<f64>) -> Self {
        let m = hp.s0.matrix();
        let d = m.dim();
        Self {
            k: hp.k,
            m0: hp.m0.clone(),
            kappa0: hp.kappa0,
            nu0: hp.nu0,
            s0: (0..d).map(|r| (0..d).map(|c| m[(r, c)]).collect()).collect(),
            beta: hp.beta,
        }
    }
}

impl Default for HyperparameterSpec {
    fn default() -> Self {
        Self::from(&outlier_study_hyperparameters())
    }
}

/// Inputs of the analysis commands. Observation numbers and labels are 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisRequests {
    /// Iterations discarded from the start of a trace.
    pub burn_in: u64,
    /// Keep every `thin`-th retained record.
    pub thin: usize,
    /// Trace read by `psm` and `acf`; defaults to the sampler output in `output_dir`.
    pub trace: Option<PathBuf>,
    /// Allocation for the pair, bound and detection commands: a labels file (one
    /// label per line, 0 for held out) or a `.jsonl` trace, whose last record is used.
    pub allocation: Option<PathBuf>,
    pub pair: Option<[usize; 2]>,
    /// Block whose other members are summed out of the pair table.
    pub block: Option<BlockSet>,
    pub multiset: bool,
    pub acf: Option<AcfRequest>,
    /// Row order for the similarity matrix, one observation number per line.
    pub ordering: Option<PathBuf>,
    pub surface: Option<SurfaceSpec<f64>>,
    pub detection: DetectionThresholds<f64>,
}

impl Default for AnalysisRequests {
    fn default() -> Self {
        Self {
            burn_in: 0,
            thin: 1,
            trace: None,
            allocation: None,
            pair: None,
            block: None,
            multiset: true,
            acf: None,
            ordering: None,
            surface: None,
            detection: DetectionThresholds::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcfRequest {
    pub site: usize,
    /// The indicator is 1 when the site's label is any of these.
    pub components: Vec<usize>,
    #[serde(default = "default_max_lag")]
    pub max_lag: usize,
}

fn default_max_lag() -> usize {
    50
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub chains: Option<usize>,
    pub clustered: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Applies the overrides and copies the master seed into the sampler section.
    pub fn merged(mut self, o: &Overrides) -> Self {
        if let Some(seed) = o.seed {
            self.seed = seed;
            if let Some(DatasetSource::Simulation(spec)) = &mut self.dataset {
                spec.seed = seed;
            }
        }
        if let Some(dir) = &o.output_dir {
            self.output_dir = dir.clone();
        }
        if let Some(c) = o.chains {
            self.chains = c;
        }
        if let (Some(n), Some(DatasetSource::OutlierStudy { clustered })) = (o.clustered, &mut self.dataset) {
            *clustered = n;
        }
        self.sampler.seed = self.seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::InvalidConfig("chains must be at least 1".into()));
        }
        if self.analysis.thin == 0 {
            return Err(Error::InvalidConfig("analysis.thin must be at least 1".into()));
        }
        let hp = self.hyperparameters.build()?;
        match &self.dataset {
            None => {}
            Some(DatasetSource::Path(p)) => must_exist(p)?,
            Some(DatasetSource::Simulation(spec)) => {
                spec.validate()?;
                if spec.dim() != hp.dim() {
                    return Err(Error::DimensionMismatch { expected: hp.dim(), found: spec.dim() });
                }
            }
            Some(DatasetSource::OutlierStudy { .. }) if hp.dim() != 3 => {
                return Err(Error::DimensionMismatch { expected: hp.dim(), found: 3 });
            }
            Some(DatasetSource::OutlierStudy { .. }) => {}
        }
        for p in [&self.analysis.trace, &self.analysis.allocation, &self.analysis.ordering].into_iter().flatten() {
            must_exist(p)?;
        }
        if let Some([i, j]) = self.analysis.pair {
            if i == 0 || j == 0 || i == j {
                return Err(Error::InvalidConfig("analysis.pair needs two distinct 1-based observation numbers".into()));
            }
        }
        if let Some(acf) = &self.analysis.acf {
            if acf.site == 0 || acf.components.iter().any(|&c| c == 0 || c > hp.k) {
                return Err(Error::InvalidConfig("analysis.acf site and components are 1-based".into()));
            }
        }
        Ok(())
    }

    /// Loads or simulates the data. Ground-truth labels come with simulated data.
    pub fn load_dataset(&self) -> Result<(Dataset<f64>, Option<Simulated>)> {
        match &self.dataset {
            None => Err(Error::InvalidConfig("no dataset configured".into())),
            Some(DatasetSource::Path(p)) => Ok((Dataset::from_csv_path(p)?, None)),
            Some(DatasetSource::Simulation(spec)) => {
                let sim = simulate(spec)?;
                Ok((sim.data.clone(), Some(sim)))
            }
            Some(DatasetSource::OutlierStudy { clustered }) => {
                let sim = simulate(&SimulationSpec::outlier_study(*clustered, self.seed))?;
                Ok((sim.data.clone(), Some(sim)))
            }
        }
    }

    /// Trace file written by chain `c` of `chains`.
    pub fn trace_path(&self, c: usize) -> PathBuf {
        if self.chains == 1 {
            self.output_dir.join("trace.jsonl")
        } else {
            self.output_dir.join(format!("trace-{}.jsonl", c + 1))
        }
    }
}

fn must_exist(p: &Path) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("path {} does not exist", p.display())))
    }
}

/// Reads one 1-based label per line; 0 marks an observation held out.
pub fn read_labels<R: BufRead>(r: R) -> Result<Vec<Option<usize>>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: usize = t.parse().map_err(|e| Error::InvalidInput(format!("labels line {}: {e}", n + 1)))?;
        out.push(v.checked_sub(1));
    }
    Ok(out)
}

/// Reads an allocation from a labels file, or from the last record of a `.jsonl` trace.
pub fn read_allocation(path: &Path) -> Result<Vec<Option<usize>>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    if path.extension().is_some_and(|e| e == "jsonl") {
        let trace = ChainTrace::read_jsonl(file)?;
        let last = trace.records.last().ok_or(Error::EmptyTrace)?;
        Ok(last.assignment.iter().map(|&c| Some(c)).collect())
    } else {
        read_labels(file)
    }
}
