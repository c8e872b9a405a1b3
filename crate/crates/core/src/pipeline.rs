//! One-call fit, sample and evaluate.

use std::str::FromStr;
use std::sync::Arc;

use crate::backend::HttpBackend;
use crate::dataset::{split, Table};
use crate::engine::{Engine, EngineConfig};
use crate::evaluation::{evaluate, Constraint, MetricReport};
use crate::sampler::{synthesize, to_table, SamplerConfig, SynthRecord};
use crate::Error;

/// Which generator backend scores candidates.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum BackendChoice {
    #[default]
    Builtin,
    /// Built-in counts with the context ignored.
    Marginal,
    Http(String),
}

impl FromStr for BackendChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "builtin" => Ok(BackendChoice::Builtin),
            "marginal" => Ok(BackendChoice::Marginal),
            _ => s
                .strip_prefix("http:")
                .filter(|rest| !rest.is_empty())
                .map(|rest| {
                    // accept both `http:host:port` and `http:http://host:port`
                    if rest.starts_with("//") {
                        format!("http:{rest}")
                    } else if rest.starts_with("http://") || rest.starts_with("https://") {
                        rest.to_string()
                    } else {
                        format!("http://{rest}")
                    }
                })
                .map(BackendChoice::Http)
                .ok_or_else(|| format!("unknown backend `{s}` (builtin, marginal, http:<url>)")),
        }
    }
}

pub fn attach_backend(engine: Engine, choice: &BackendChoice) -> Result<Engine, Error> {
    Ok(match choice {
        BackendChoice::Builtin => {
            let b = engine.builtin_backend();
            engine.with_backend(b)
        }
        BackendChoice::Marginal => {
            let b = engine.marginal_backend();
            engine.with_backend(b)
        }
        BackendChoice::Http(url) => {
            let b = HttpBackend::connect(url, Arc::clone(&engine.layout))?;
            engine.with_backend(Arc::new(b))
        }
    })
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub train_fraction: f64,
    pub split_seed: u64,
    pub engine: EngineConfig,
    pub sampler: SamplerConfig,
    /// Synthetic rows; defaults to the training split size.
    pub count: Option<usize>,
    pub constraints: Vec<Constraint>,
    pub backend: BackendChoice,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            split_seed: 0,
            engine: EngineConfig::default(),
            sampler: SamplerConfig::default(),
            count: None,
            constraints: Vec::new(),
            backend: BackendChoice::Builtin,
        }
    }
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub engine: Engine,
    pub train: Table,
    pub test: Table,
    pub records: Vec<SynthRecord>,
    pub synthetic: Table,
    pub report: MetricReport,
}

/// Splits `table`, fits on the train part, synthesizes and evaluates against
/// both parts.
pub fn end_to_end(table: &Table, config: &PipelineConfig) -> Result<PipelineOutput, Error> {
    let (train, test) = split(table, config.train_fraction, config.split_seed)?;
    let engine = Engine::fit(train.clone(), config.engine)?;
    let engine = attach_backend(engine, &config.backend)?;
    let count = config.count.unwrap_or(train.len());
    let records = synthesize(&engine, count, &config.sampler)?;
    let synthetic = to_table(&engine, &records);
    let report = evaluate(
        &synthetic,
        &train,
        Some(&test),
        &config.constraints,
        config.sampler.seed,
    )?;
    Ok(PipelineOutput {
        engine,
        train,
        test,
        records,
        synthetic,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backend_choice_parsing() {
        assert_eq!("builtin".parse::<BackendChoice>().unwrap(), BackendChoice::Builtin);
        assert_eq!("marginal".parse::<BackendChoice>().unwrap(), BackendChoice::Marginal);
        assert_eq!(
            "http:127.0.0.1:8000".parse::<BackendChoice>().unwrap(),
            BackendChoice::Http("http://127.0.0.1:8000".into())
        );
        assert_eq!(
            "http://localhost:9".parse::<BackendChoice>().unwrap(),
            BackendChoice::Http("http://localhost:9".into())
        );
        assert!("http:".parse::<BackendChoice>().is_err());
        assert!("gpu".parse::<BackendChoice>().is_err());
    }
}
