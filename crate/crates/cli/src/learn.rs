//! Corpus generation, training, evaluation and model loading.

use std::fs::File;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use soar_core::config::EngineConfig;
use soar_core::engine::Detectors;
use soar_core::http_ids::{AttackDetector, AttackLabel, HttpIds, TokenFeatureSpec};
use soar_core::learners::{
    class_weights, evaluate, train_logistic, train_tree, ClassWeights, ClassifierModel, Dataset, LogisticParams,
    TreeParams,
};
use soar_core::scenario::{gen_corpus, reference_detectors, ClassSizes, CorpusTask, DetectionTask};

use crate::{CliError, CmdResult};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FamilyArg {
    Tree,
    Logistic,
}

#[derive(Args)]
pub struct GenArgs {
    /// httpids, botnet or ddos.
    #[arg(long)]
    task: CorpusTask,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Rows per class.
    #[arg(long, default_value_t = 1000)]
    per_class: usize,
    /// Output directory; one CSV per detection task.
    #[arg(long)]
    out: PathBuf,
}

/// Rows held out of training, shared by `train` and `eval` so both see the
/// same partition.
#[derive(Args, Clone, Copy)]
pub struct HoldoutArgs {
    /// Fraction of rows reserved for evaluation (0 keeps every row).
    #[arg(long, default_value_t = 0.0)]
    holdout: f64,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
}

impl HoldoutArgs {
    fn split(&self, ds: Dataset) -> Result<(Dataset, Dataset), CliError> {
        if !(0.0..1.0).contains(&self.holdout) {
            return Err(CliError::Config(format!("--holdout must be in [0, 1), got {}", self.holdout)));
        }
        if self.holdout == 0.0 {
            return Ok((ds.clone(), ds));
        }
        Ok(ds.split(self.holdout, self.split_seed))
    }
}

#[derive(Args)]
pub struct TrainArgs {
    /// httpids-xss, httpids-sqli, httpids-osc, botnet or ddos.
    #[arg(long)]
    task: DetectionTask,
    /// Corpus CSV as written by `gen`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = FamilyArg::Tree)]
    family: FamilyArg,
    /// Model file to write (JSON).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    holdout: HoldoutArgs,
    #[arg(long, default_value_t = TreeParams::default().depth_cap)]
    depth: usize,
    #[arg(long, default_value_t = TreeParams::default().min_leaf)]
    min_leaf: usize,
    #[arg(long, default_value_t = LogisticParams::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = LogisticParams::default().learning_rate)]
    learning_rate: f64,
    /// Train without inverse-frequency class weights.
    #[arg(long)]
    unweighted: bool,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    holdout: HoldoutArgs,
}

fn read_dataset(path: &Path, schema: soar_core::learners::Schema) -> Result<Dataset, CliError> {
    let file = File::open(path).map_err(|e| CliError::runtime(path.display(), e))?;
    Dataset::read_csv(schema, file).map_err(|e| CliError::runtime(path.display(), e))
}

pub fn gen(a: GenArgs) -> CmdResult {
    let corpus =
        gen_corpus(a.task, a.seed, ClassSizes::balanced(a.per_class)).map_err(|e| CliError::Config(e.to_string()))?;
    let written = corpus.write_to(&a.out).map_err(|e| CliError::runtime(a.out.display(), e))?;
    for (path, part) in written.iter().zip(&corpus.parts) {
        let [neg, pos] = part.dataset.class_counts();
        out!("{}  {} rows ({neg} negative, {pos} positive)", path.display(), part.dataset.len());
    }
    for path in written.iter().skip(corpus.parts.len()) {
        out!("{}", path.display());
    }
    Ok(())
}

pub fn train(a: TrainArgs) -> CmdResult {
    let ds = read_dataset(&a.data, a.task.schema())?;
    let (train, _) = a.holdout.split(ds)?;
    let weights = if a.unweighted {
        ClassWeights::UNIFORM
    } else {
        class_weights(train.labels()).map_err(|e| CliError::runtime("class weights", e))?
    };
    let model = match a.family {
        FamilyArg::Tree => train_tree(&train, weights, TreeParams { depth_cap: a.depth, min_leaf: a.min_leaf }),
        FamilyArg::Logistic => {
            train_logistic(&train, weights, LogisticParams { epochs: a.epochs, learning_rate: a.learning_rate })
        }
    }
    .map_err(|e| CliError::runtime("training", e))?;
    model.save(&a.out).map_err(|e| CliError::runtime(a.out.display(), e))?;
    let fit = evaluate(&model, &train).map_err(|e| CliError::runtime("training fit", e))?;
    out!("{} {} on {} rows, training accuracy {:.2}", a.task, model.family, train.len(), fit.accuracy);
    out!("wrote {}", a.out.display());
    Ok(())
}

pub fn eval(a: EvalArgs) -> CmdResult {
    let model = ClassifierModel::load(&a.model).map_err(|e| CliError::runtime(a.model.display(), e))?;
    let ds = read_dataset(&a.data, model.schema.clone())?;
    let (_, test) = a.holdout.split(ds)?;
    let m = evaluate(&model, &test).map_err(|e| CliError::runtime("evaluation", e))?;
    out!("{} on {} rows", model.family, test.len());
    out!("{m}");
    Ok(())
}

fn load_model(path: &Path) -> Result<ClassifierModel, CliError> {
    ClassifierModel::load(path).map_err(|e| CliError::config(path.display(), e))
}

/// Detectors from the model files named in `config`. With `reference`, any
/// detector lacking a file falls back to the built-in reference model.
/// Detectors switched off in the config stay off.
pub fn load_detectors(config: &EngineConfig, reference: bool) -> Result<Detectors, CliError> {
    let fallback = reference.then(reference_detectors);
    let mut out = Detectors::default();
    if config.detectors.http {
        let mut ids = HttpIds::new();
        let mut loaded = 0;
        for label in AttackLabel::ALL {
            let det = match config.models.http(label) {
                Some(path) => AttackDetector::new(TokenFeatureSpec::builtin(label), load_model(path)?)
                    .map_err(|e| CliError::config(path.display(), e))?,
                None => match fallback.and_then(|f| f.http.as_ref()).and_then(|ids| ids.detector(label)) {
                    Some(d) => d.clone(),
                    None => continue,
                },
            };
            ids.insert(det);
            loaded += 1;
        }
        // A partial set is passed on so the engine can report it.
        out.http = (loaded > 0).then_some(ids);
    }
    if config.detectors.ddos {
        out.ddos = match &config.models.ddos {
            Some(p) => Some(load_model(p)?),
            None => fallback.and_then(|f| f.ddos.clone()),
        };
    }
    if config.detectors.botnet {
        out.botnet = match &config.models.botnet {
            Some(p) => Some(load_model(p)?),
            None => fallback.and_then(|f| f.botnet.clone()),
        };
    }
    Ok(out)
}
