//! JSON persistence: `{"kind": "tabular" | "logistic", "version": 1, ...}`.

use serde::{Deserialize, Serialize};

use crate::alphabet::{MaskedSequence, Token};
use crate::classifier::tabular::TabularKey;
use crate::classifier::{Denoiser, DenoiserOutput, LogisticModel, TabularModel};
use crate::error::{GgmError, Result};

pub const MODEL_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelFile {
    Tabular(TabularFile),
    Logistic(LogisticFile),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularFile {
    pub version: u32,
    pub vocab: usize,
    pub len: usize,
    pub horizon: usize,
    pub entries: Vec<TabularEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularEntry {
    pub t: u32,
    pub position: u32,
    pub context: Vec<Token>,
    pub token: Token,
    pub n0: u64,
    pub n1: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFile {
    pub version: u32,
    pub vocab: usize,
    pub len: usize,
    pub horizon: usize,
    pub learning_rate: f64,
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

fn decode_context(mut index: u64, len: usize, vocab: usize) -> Vec<Token> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = (index % vocab as u64) as Token;
        index /= vocab as u64;
    }
    out
}

fn encode_context(context: &[Token], vocab: usize) -> u64 {
    context.iter().fold(0u64, |acc, &t| acc * vocab as u64 + t as u64)
}

impl ModelFile {
    pub fn from_tabular(model: &TabularModel) -> Self {
        let entries = model
            .entries()
            .map(|(key, &[n0, n1])| TabularEntry {
                t: key.t,
                position: key.position,
                context: decode_context(key.context, model.len() - 1, model.vocab()),
                token: key.token,
                n0,
                n1,
            })
            .collect();
        ModelFile::Tabular(TabularFile {
            version: MODEL_FILE_VERSION,
            vocab: model.vocab(),
            len: model.len(),
            horizon: model.horizon(),
            entries,
            config: None,
        })
    }

    pub fn from_logistic(model: &LogisticModel) -> Self {
        ModelFile::Logistic(LogisticFile {
            version: MODEL_FILE_VERSION,
            vocab: model.vocab(),
            len: model.len(),
            horizon: model.horizon(),
            learning_rate: model.learning_rate(),
            params: model.params().to_vec(),
            config: None,
        })
    }

    pub fn with_config(mut self, config: serde_json::Value) -> Self {
        match &mut self {
            ModelFile::Tabular(f) => f.config = Some(config),
            ModelFile::Logistic(f) => f.config = Some(config),
        }
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn into_model(self) -> Result<LoadedModel> {
        match self {
            ModelFile::Tabular(f) => {
                check_version(f.version)?;
                let entries = f
                    .entries
                    .into_iter()
                    .map(|e| {
                        if e.context.len() + 1 != f.len || e.token as usize >= f.vocab {
                            return Err(GgmError::InvalidInput("malformed tabular entry".into()));
                        }
                        let key = TabularKey {
                            t: e.t,
                            position: e.position,
                            context: encode_context(&e.context, f.vocab),
                            token: e.token,
                        };
                        Ok((key, [e.n0, e.n1]))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(LoadedModel::Tabular(TabularModel::from_entries(f.vocab, f.len, f.horizon, entries)?))
            }
            ModelFile::Logistic(f) => {
                check_version(f.version)?;
                Ok(LoadedModel::Logistic(LogisticModel::from_params(
                    f.vocab,
                    f.len,
                    f.horizon,
                    f.learning_rate,
                    f.params,
                )?))
            }
        }
    }
}

fn check_version(version: u32) -> Result<()> {
    if version != MODEL_FILE_VERSION {
        return Err(GgmError::InvalidInput(format!("unsupported model file version {version}")));
    }
    Ok(())
}

/// A learned model restored from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedModel {
    Tabular(TabularModel),
    Logistic(LogisticModel),
}

impl LoadedModel {
    pub fn to_file(&self) -> ModelFile {
        match self {
            LoadedModel::Tabular(m) => ModelFile::from_tabular(m),
            LoadedModel::Logistic(m) => ModelFile::from_logistic(m),
        }
    }
}

impl Denoiser for LoadedModel {
    fn vocab_size(&self) -> usize {
        match self {
            LoadedModel::Tabular(m) => m.vocab_size(),
            LoadedModel::Logistic(m) => m.vocab_size(),
        }
    }

    fn predict(&self, masked: &MaskedSequence, t: usize) -> Result<DenoiserOutput> {
        match self {
            LoadedModel::Tabular(m) => m.predict(masked, t),
            LoadedModel::Logistic(m) => m.predict(masked, t),
        }
    }
}

pub fn load_model(text: &str) -> Result<LoadedModel> {
    serde_json::from_str::<ModelFile>(text)?.into_model()
}
