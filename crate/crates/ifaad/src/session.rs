//! Versioned JSON session files: enough to rebuild a feedback loop after a
//! restart (forest parameters, config, query history, current weights).

use std::fs;
use std::path::Path;
use std::sync::Arc;

use ifaad_core::{AadConfig, FeedbackLoop, ForestParams, Label, SparseNodeVector, WeightScheme, WeightVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SESSION_FORMAT: &str = "ifaad-session";
pub const SESSION_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfigRecord {
    pub tau: f64,
    pub c_a: f64,
    pub c_xi: f64,
    pub learning_rate: f64,
    pub max_steps: usize,
    pub convergence_tol: f64,
    pub budget: usize,
}

impl From<AadConfig> for ConfigRecord {
    fn from(c: AadConfig) -> Self {
        Self {
            tau: c.tau,
            c_a: c.c_a,
            c_xi: c.c_xi,
            learning_rate: c.learning_rate,
            max_steps: c.max_steps,
            convergence_tol: c.convergence_tol,
            budget: c.budget,
        }
    }
}

impl From<ConfigRecord> for AadConfig {
    fn from(c: ConfigRecord) -> Self {
        Self {
            tau: c.tau,
            c_a: c.c_a,
            c_xi: c.c_xi,
            learning_rate: c.learning_rate,
            max_steps: c.max_steps,
            convergence_tol: c.convergence_tol,
            budget: c.budget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestRecord {
    pub num_trees: usize,
    pub subsample_size: usize,
    /// `isolation` or `leaf-depth`.
    pub scheme: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelRecord {
    Anomaly,
    Nominal,
}

impl From<Label> for LabelRecord {
    fn from(l: Label) -> Self {
        match l {
            Label::Anomaly => LabelRecord::Anomaly,
            Label::Nominal => LabelRecord::Nominal,
        }
    }
}

impl From<LabelRecord> for Label {
    fn from(l: LabelRecord) -> Self {
        match l {
            LabelRecord::Anomaly => Label::Anomaly,
            LabelRecord::Nominal => Label::Nominal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub instance_id: usize,
    pub label: LabelRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionFile {
    pub format: String,
    pub version: u32,
    pub session_id: String,
    pub dataset_id: String,
    pub forest: ForestRecord,
    pub config: ConfigRecord,
    pub query_history: Vec<QueryRecord>,
    pub weights: Vec<f64>,
    /// Unix seconds.
    pub created: u64,
    pub updated: u64,
}

fn scheme_name(s: WeightScheme) -> String {
    s.name().to_owned()
}

pub fn parse_scheme(s: &str) -> Option<WeightScheme> {
    [WeightScheme::Isolation, WeightScheme::LeafDepth]
        .into_iter()
        .find(|w| w.name() == s)
}

impl ForestRecord {
    pub fn new(p: &ForestParams) -> Self {
        Self {
            num_trees: p.num_trees,
            subsample_size: p.subsample_size,
            scheme: scheme_name(p.scheme),
            seed: p.seed,
        }
    }

    pub fn params(&self) -> Result<ForestParams> {
        Ok(ForestParams {
            num_trees: self.num_trees,
            subsample_size: self.subsample_size,
            scheme: parse_scheme(&self.scheme)
                .ok_or_else(|| Error::Format(format!("unknown scheme {:?}", self.scheme)))?,
            seed: self.seed,
        })
    }
}

impl SessionFile {
    pub fn snapshot(
        session_id: &str,
        dataset_id: &str,
        forest: &ForestParams,
        feedback: &FeedbackLoop,
        created: u64,
        updated: u64,
    ) -> Self {
        let state = feedback.state();
        Self {
            format: SESSION_FORMAT.into(),
            version: SESSION_VERSION,
            session_id: session_id.into(),
            dataset_id: dataset_id.into(),
            forest: ForestRecord::new(forest),
            config: (*feedback.config()).into(),
            query_history: state
                .query_history
                .iter()
                .map(|&(instance_id, label)| QueryRecord {
                    instance_id,
                    label: label.into(),
                })
                .collect(),
            weights: state.weights.as_slice().to_vec(),
            created,
            updated,
        }
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let file: SessionFile = serde_json::from_slice(bytes)?;
        if file.format != SESSION_FORMAT {
            return Err(Error::Format(format!("not a session file: {:?}", file.format)));
        }
        if file.version != SESSION_VERSION {
            return Err(Error::Format(format!("unsupported session version {}", file.version)));
        }
        Ok(file)
    }

    /// Writes atomically (temp file + rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, self.to_json()?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read(path)?)
    }

    pub fn history(&self) -> Vec<(usize, Label)> {
        self.query_history
            .iter()
            .map(|q| (q.instance_id, q.label.into()))
            .collect()
    }

    /// Rebuilds the loop over the given node vectors.
    pub fn restore(&self, vectors: Arc<[SparseNodeVector]>) -> Result<FeedbackLoop> {
        let weights = WeightVector::new(self.weights.clone())?;
        Ok(FeedbackLoop::resume(vectors, self.config.into(), &self.history(), weights)?)
    }
}
