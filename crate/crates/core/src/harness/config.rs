//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{BfnError, Result};
use crate::predictors::{load_weights, CategoricalData, CategoricalOracle, MixtureData, MixtureOracle, Modality, Predictor};
use crate::samplers_cont::{FinalStep, InitMode};
use crate::samplers_disc::Readout;
use crate::schedules::{ContinuousSchedule, DiscreteSchedule, GridPolicy, DEFAULT_ETA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModalityKind {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub id: String,
    pub modality: ModalityKind,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
    /// Write wall-clock milliseconds into `runs.csv` instead of 0.
    #[serde(default)]
    pub timing: bool,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(default = "default_sigma1")]
    pub sigma1: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub grid: GridKind,
}

fn default_sigma1() -> f64 {
    0.02
}

fn default_beta1() -> f64 {
    2.0
}

fn default_eta() -> f64 {
    DEFAULT_ETA
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self { sigma1: default_sigma1(), beta1: default_beta1(), eta: default_eta(), grid: GridKind::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    #[default]
    UniformT,
    UniformLambda,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSection {
    Mixture {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        variances: Vec<Vec<f64>>,
    },
    Categorical {
        classes: usize,
        dim: usize,
        /// Probabilities in lexicographic order over `{0..K}^D`, or over
        /// `support` when that is given. Uniform when omitted.
        probs: Option<Vec<f64>>,
        support: Option<Vec<Vec<usize>>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PredictorSection {
    Oracle,
    Mlp { weights: PathBuf },
}

impl Default for PredictorSection {
    fn default() -> Self {
        PredictorSection::Oracle
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    pub solvers: Vec<String>,
    #[serde(default = "default_sample_nfe")]
    pub nfe: Vec<usize>,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub init: InitMode,
    #[serde(default)]
    pub final_step: FinalStep,
    #[serde(default)]
    pub readout: Readout,
    #[serde(default = "default_projections")]
    pub projections: usize,
}

fn default_sample_nfe() -> Vec<usize> {
    vec![10]
}

fn default_n_samples() -> usize {
    1000
}

fn default_projections() -> usize {
    crate::metrics::DEFAULT_PROJECTIONS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeSection {
    pub solvers: Vec<String>,
    #[serde(default = "default_converge_nfe")]
    pub nfe: Vec<usize>,
    #[serde(default = "default_reference_nfe")]
    pub reference_nfe: usize,
    pub reference_solver: Option<String>,
    #[serde(default = "default_chains")]
    pub n_chains: usize,
    /// Extra η values to sweep; the schedule's η is used when empty.
    #[serde(default)]
    pub etas: Vec<f64>,
}

fn default_converge_nfe() -> Vec<usize> {
    vec![8, 16, 32, 64]
}

fn default_reference_nfe() -> usize {
    10_000
}

fn default_chains() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_optimizer")]
    pub optimizer: crate::predictors::OptimizerKind,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_n_heldout")]
    pub n_heldout: usize,
    #[serde(default)]
    pub gradient_check: bool,
    /// Weights to continue from.
    pub resume: Option<PathBuf>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
            epochs: default_epochs(),
            lr: default_lr(),
            batch_size: default_batch(),
            optimizer: default_optimizer(),
            n_train: default_n_train(),
            n_heldout: default_n_heldout(),
            gradient_check: false,
            resume: None,
        }
    }
}

fn default_hidden() -> Vec<usize> {
    vec![64, 64]
}

fn default_epochs() -> usize {
    50
}

fn default_lr() -> f64 {
    2e-3
}

fn default_batch() -> usize {
    64
}

fn default_optimizer() -> crate::predictors::OptimizerKind {
    crate::predictors::OptimizerKind::Adam
}

fn default_n_train() -> usize {
    2560
}

fn default_n_heldout() -> usize {
    512
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblateSection {
    #[serde(default = "default_step_sizes")]
    pub step_sizes: Vec<f64>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
}

fn default_step_sizes() -> Vec<f64> {
    vec![0.1, 0.05, 0.02, 0.01]
}

fn default_replicas() -> usize {
    1000
}

impl Default for AblateSection {
    fn default() -> Self {
        Self { step_sizes: default_step_sizes(), replicas: default_replicas() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    #[default]
    None,
    /// Drops the factor K from the discrete score conversion.
    ScoreOffByK,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    #[serde(default)]
    pub mutation: Mutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    pub data: Option<DataSection>,
    #[serde(default)]
    pub predictor: PredictorSection,
    pub sampling: Option<SamplingSection>,
    pub converge: Option<ConvergeSection>,
    pub train: Option<TrainSection>,
    pub ablate: Option<AblateSection>,
    #[serde(default)]
    pub verify: VerifySection,
    /// Directory of the config file, for resolving relative paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
    /// Verbatim text the config was parsed from.
    #[serde(skip)]
    pub source: String,
}

impl ExperimentConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| BfnError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.source = text.to_string();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BfnError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    fn validate(&self) -> Result<()> {
        let seeds = &self.experiment.seeds;
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if seeds.is_empty() || sorted.len() != seeds.len() {
            return Err(BfnError::Config("experiment.seeds must be a non-empty list of distinct seeds".into()));
        }
        if self.experiment.id.is_empty() || self.experiment.id.contains(',') {
            return Err(BfnError::Config("experiment.id must be non-empty and free of commas".into()));
        }
        let nfe_lists = [
            self.sampling.as_ref().map(|s| s.nfe.clone()),
            self.converge.as_ref().map(|c| c.nfe.clone()),
        ];
        for list in nfe_lists.into_iter().flatten() {
            if list.is_empty() || list.contains(&0) {
                return Err(BfnError::Config("NFE lists must be non-empty and every NFE ≥ 1".into()));
            }
        }
        match (&self.data, self.experiment.modality) {
            (Some(DataSection::Mixture { .. }), ModalityKind::Discrete)
            | (Some(DataSection::Categorical { .. }), ModalityKind::Continuous) => {
                return Err(BfnError::Config("data kind does not match experiment.modality".into()))
            }
            _ => {}
        }
        if let PredictorSection::Mlp { weights } = &self.predictor {
            let p = self.resolve(weights);
            if !p.exists() {
                return Err(BfnError::Config(format!("predictor weights {} do not exist", p.display())));
            }
        }
        if let Some(TrainSection { resume: Some(r), .. }) = &self.train {
            let p = self.resolve(r);
            if !p.exists() {
                return Err(BfnError::Config(format!("resume weights {} do not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn continuous_schedule(&self) -> Result<ContinuousSchedule> {
        ContinuousSchedule::new(self.schedule.sigma1)
    }

    pub fn discrete_schedule(&self) -> Result<DiscreteSchedule> {
        let k = match &self.data {
            Some(DataSection::Categorical { classes, .. }) => *classes,
            _ => return Err(BfnError::Config("discrete experiments need a categorical [data] section".into())),
        };
        DiscreteSchedule::new(self.schedule.beta1, k)
    }

    pub fn grid_policy(&self) -> Result<GridPolicy> {
        Ok(match self.schedule.grid {
            GridKind::UniformT => GridPolicy::UniformT,
            GridKind::UniformLambda => {
                if self.experiment.modality == ModalityKind::Discrete {
                    return Err(BfnError::Config("uniform-lambda grids are for continuous data".into()));
                }
                GridPolicy::UniformLambda(self.continuous_schedule()?)
            }
        })
    }

    pub fn mixture(&self) -> Result<MixtureData> {
        match &self.data {
            Some(DataSection::Mixture { weights, means, variances }) => {
                MixtureData::new(weights.clone(), means.clone(), variances.clone())
            }
            _ => Err(BfnError::Config("continuous experiments need a mixture [data] section".into())),
        }
    }

    pub fn categorical(&self) -> Result<CategoricalData> {
        match &self.data {
            Some(DataSection::Categorical { classes, dim, probs, support }) => match (probs, support) {
                (None, None) => CategoricalData::uniform(*classes, *dim),
                (Some(p), None) => CategoricalData::enumerated(*classes, *dim, p.clone()),
                (Some(p), Some(s)) => CategoricalData::new(*classes, *dim, s.clone(), p.clone()),
                (None, Some(s)) => {
                    let p = vec![1.0 / s.len() as f64; s.len()];
                    CategoricalData::new(*classes, *dim, s.clone(), p)
                }
            },
            _ => Err(BfnError::Config("discrete experiments need a categorical [data] section".into())),
        }
    }

    pub fn predictor(&self) -> Result<Box<dyn Predictor>> {
        match (&self.predictor, self.experiment.modality) {
            (PredictorSection::Oracle, ModalityKind::Continuous) => {
                Ok(Box::new(MixtureOracle::new(self.mixture()?, self.continuous_schedule()?)))
            }
            (PredictorSection::Oracle, ModalityKind::Discrete) => {
                Ok(Box::new(CategoricalOracle::new(self.categorical()?, self.discrete_schedule()?)?))
            }
            (PredictorSection::Mlp { weights }, modality) => {
                let (model, _) = load_weights(&self.resolve(weights))?;
                let ok = matches!(
                    (model.modality(), modality),
                    (Modality::Continuous { .. }, ModalityKind::Continuous) | (Modality::Discrete { .. }, ModalityKind::Discrete)
                );
                if !ok {
                    return Err(BfnError::Config("trained model is for a different modality".into()));
                }
                Ok(Box::new(model))
            }
        }
    }

    pub fn data_dim(&self) -> Result<usize> {
        match &self.data {
            Some(DataSection::Mixture { means, .. }) => {
                means.first().map(Vec::len).ok_or_else(|| BfnError::Config("empty mixture".into()))
            }
            Some(DataSection::Categorical { dim, .. }) => Ok(*dim),
            None => Err(BfnError::Config("missing [data] section".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = r#"
[experiment]
id = "m"
modality = "continuous"
seeds = [1, 2]

[data]
kind = "mixture"
weights = [1.0]
means = [[0.0, 1.0]]
variances = [[0.1, 0.1]]
"#;

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::parse(MIN, Path::new(".")).unwrap();
        assert_eq!(c.schedule.sigma1, 0.02);
        assert_eq!(c.predictor, PredictorSection::Oracle);
        assert_eq!(c.data_dim().unwrap(), 2);
        assert!(c.predictor().is_ok());
    }

    #[test]
    fn rejects_bad_configs() {
        let dup = MIN.replace("[1, 2]", "[3, 3]");
        assert!(ExperimentConfig::parse(&dup, Path::new(".")).is_err());
        let unknown = format!("{MIN}\n[schedule]\nsigma = 0.1\n");
        assert!(ExperimentConfig::parse(&unknown, Path::new(".")).is_err());
        let wrong = MIN.replace("\"continuous\"", "\"discrete\"");
        assert!(ExperimentConfig::parse(&wrong, Path::new(".")).is_err());
        let zero = format!("{MIN}\n[sampling]\nsolvers = [\"bfn-solverpp1\"]\nnfe = [0]\n");
        assert!(ExperimentConfig::parse(&zero, Path::new(".")).is_err());
        let missing = format!("{MIN}\n[predictor]\nkind = \"mlp\"\nweights = \"/no/such/file\"\n");
        assert!(ExperimentConfig::parse(&missing, Path::new(".")).is_err());
    }
}
