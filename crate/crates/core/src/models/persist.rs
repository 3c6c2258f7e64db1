use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BaselineModel, Gpr, LogisticRegressor, MiniRocket, Mlp, RidgeRegressor};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SavedModel {
    Baseline(BaselineModel),
    Mlp(Box<Mlp>),
    Gpr(Box<Gpr>),
    Ridge(RidgeRegressor),
    Logistic(LogisticRegressor),
    MinirocketRidge { transform: MiniRocket, head: RidgeRegressor },
    MinirocketLogistic { transform: MiniRocket, head: LogisticRegressor },
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    model: SavedModel,
}

pub fn save_model(model: &SavedModel, path: &Path) -> Result<()> {
    let file = ModelFile { format_version: MODEL_FORMAT_VERSION, model: model.clone() };
    let text = serde_json::to_string_pretty(&file)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<SavedModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile = serde_json::from_str(&text)?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::Schema(format!(
            "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
            file.format_version
        )));
    }
    Ok(file.model)
}

/// `Vec<f64>` as base64 of little-endian bytes.
pub(crate) mod b64_vec {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn encode(v: &[f64]) -> String {
        let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
        STANDARD.encode(bytes)
    }

    pub fn decode(s: &str) -> Result<Vec<f64>, String> {
        let bytes = STANDARD.decode(s).map_err(|e| e.to_string())?;
        if bytes.len() % 8 != 0 {
            return Err(format!("{} bytes is not a whole number of f64 values", bytes.len()));
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        decode(&String::deserialize(d)?).map_err(D::Error::custom)
    }
}

/// `DMatrix<f64>` as shape plus column-major base64 data.
pub(crate) mod b64_mat {
    use nalgebra::DMatrix;
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Tensor {
        rows: usize,
        cols: usize,
        data: String,
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        Tensor { rows: m.nrows(), cols: m.ncols(), data: super::b64_vec::encode(m.as_slice()) }
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let t = Tensor::deserialize(d)?;
        let data = super::b64_vec::decode(&t.data).map_err(D::Error::custom)?;
        if data.len() != t.rows * t.cols {
            return Err(D::Error::custom(format!(
                "tensor {}x{} has {} values",
                t.rows,
                t.cols,
                data.len()
            )));
        }
        Ok(DMatrix::from_vec(t.rows, t.cols, data))
    }
}
