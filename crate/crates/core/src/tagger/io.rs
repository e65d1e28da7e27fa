use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TaggerConfig;
use super::model::{Layers, TaggerModel};
use super::vocab::Vocab;
use crate::corpus::TagSet;
use crate::error::{read_to_string, write_file, Error, Result};
use crate::nn::{Matrix, ParamStore};

pub const MODEL_FORMAT: &str = "nertk-tagger";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    config: TaggerConfig,
    tagset: TagSet,
    words: Vocab,
    chars: Vocab,
    pos: Vocab,
    contextual_dim: usize,
    params: BTreeMap<String, Matrix>,
}

impl TaggerModel {
    /// Serializes to JSON. Parameter order is sorted, so equal models give
    /// equal bytes.
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            config: self.config.clone(),
            tagset: self.tagset.clone(),
            words: self.words.clone(),
            chars: self.chars.clone(),
            pos: self.pos.clone(),
            contextual_dim: self.contextual_dim,
            params: self.params.values(),
        };
        let mut s = serde_json::to_string(&file).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format: String,
            version: u32,
        }
        let header: Header = serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        if header.format != MODEL_FORMAT {
            return Err(Error::ModelFormat(format!("not a tagger model (format `{}`)", header.format)));
        }
        if header.version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported version {} (expected {MODEL_VERSION})",
                header.version
            )));
        }
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        file.config.validate()?;
        let tags = file.tagset.len();
        let layers = Layers::new(
            &file.config,
            file.words.len(),
            file.chars.len(),
            file.pos.len(),
            file.contextual_dim,
            tags,
        )?;
        let expected = layers.init_params(&file.config, tags, &mut ChaCha8Rng::seed_from_u64(0));
        let expected_shapes: BTreeMap<&str, (usize, usize)> =
            expected.iter().map(|(n, p)| (n, p.value.shape())).collect();
        let found_shapes: BTreeMap<&str, (usize, usize)> =
            file.params.iter().map(|(n, m)| (n.as_str(), m.shape())).collect();
        if expected_shapes != found_shapes {
            return Err(Error::ModelFormat(
                "parameter names or shapes do not match the stored configuration".into(),
            ));
        }
        if let Some((name, _)) = file.params.iter().find(|(_, m)| !m.is_finite()) {
            return Err(Error::ModelFormat(format!("parameter `{name}` has non-finite values")));
        }
        Ok(TaggerModel {
            config: file.config,
            tagset: file.tagset,
            words: file.words,
            chars: file.chars,
            pos: file.pos,
            contextual_dim: file.contextual_dim,
            params: ParamStore::from_values(file.params),
        })
    }
}

pub fn save_model(model: &TaggerModel, path: &Path) -> Result<()> {
    write_file(path, model.to_json())
}

pub fn load_model(path: &Path) -> Result<TaggerModel> {
    TaggerModel::from_json(&read_to_string(path)?)
}
