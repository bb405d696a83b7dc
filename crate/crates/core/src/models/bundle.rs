//! Single-file storage of a fitted pipeline and model.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! 0   8 bytes  magic "FETQCBDL"
//! 8   u32      format version
//! 12  u64      length L of the metadata block
//! 20  L bytes  metadata, UTF-8 JSON
//! ..  u64      length of the pipeline block, then the block (bincode)
//! ..  u64      length of the predictor block, then the block (bincode)
//! ```
//!
//! The metadata repeats the model spec, catalog identity and column names
//! so a bundle can be inspected without decoding the binary blocks.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{FittedModel, ModelSpec};
use crate::pipeline::FittedPipeline;

pub const MAGIC: &[u8; 8] = b"FETQCBDL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub pipeline: FittedPipeline,
    pub model: FittedModel,
    pub catalog_id: String,
    pub catalog_version: u32,
    pub format_version: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMetadata {
    pub toolkit_version: String,
    pub catalog_id: String,
    pub catalog_version: u32,
    pub spec: ModelSpec,
    pub pipeline: String,
    pub input_columns: Vec<String>,
    pub model_columns: Vec<String>,
}

impl ModelBundle {
    pub fn new(
        pipeline: FittedPipeline,
        model: FittedModel,
        catalog_id: &str,
        catalog_version: u32,
    ) -> Result<Self> {
        if pipeline.output_columns != model.feature_names {
            return Err(Error::Schema(format!(
                "pipeline produces {} columns but the model expects {}",
                pipeline.output_columns.len(),
                model.feature_names.len()
            )));
        }
        Ok(ModelBundle {
            pipeline,
            model,
            catalog_id: catalog_id.to_owned(),
            catalog_version,
            format_version: FORMAT_VERSION,
        })
    }

    pub fn metadata(&self) -> BundleMetadata {
        BundleMetadata {
            toolkit_version: crate::VERSION.to_owned(),
            catalog_id: self.catalog_id.clone(),
            catalog_version: self.catalog_version,
            spec: self.model.spec,
            pipeline: self.pipeline.config.label(),
            input_columns: self.pipeline.input_columns.clone(),
            model_columns: self.model.feature_names.clone(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let encode = |e: bincode::Error| Error::Schema(format!("cannot encode bundle: {e}"));
        let meta =
            serde_json::to_vec(&self.metadata()).map_err(|e| Error::Schema(e.to_string()))?;
        let pipeline = bincode::serialize(&self.pipeline).map_err(encode)?;
        let predictor = bincode::serialize(&self.model).map_err(encode)?;
        let mut out = Vec::with_capacity(36 + meta.len() + pipeline.len() + predictor.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.format_version.to_le_bytes());
        for block in [&meta, &pipeline, &predictor] {
            out.extend_from_slice(&(block.len() as u64).to_le_bytes());
            out.extend_from_slice(block);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(Error::parse(0, "not a model bundle (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let mut pos = 12;
        let mut block = |what: &str| -> Result<&[u8]> {
            let len_bytes = bytes
                .get(pos..pos + 8)
                .ok_or_else(|| Error::parse(pos, format!("truncated before the {what} length")))?;
            let len = u64::from_le_bytes(len_bytes.try_into().expect("8 bytes")) as usize;
            let start = pos + 8;
            let data = start
                .checked_add(len)
                .and_then(|end| bytes.get(start..end))
                .ok_or_else(|| Error::parse(start, format!("truncated {what} block")))?;
            pos = start + len;
            Ok(data)
        };
        let meta_bytes = block("metadata")?;
        let meta: BundleMetadata = serde_json::from_slice(meta_bytes)
            .map_err(|e| Error::parse(20, format!("metadata: {e}")))?;
        let pipeline_start = 20 + meta_bytes.len();
        let pipeline: FittedPipeline = bincode::deserialize(block("pipeline")?)
            .map_err(|e| Error::parse(pipeline_start, format!("pipeline block: {e}")))?;
        let model: FittedModel = bincode::deserialize(block("predictor")?)
            .map_err(|e| Error::parse(pipeline_start, format!("predictor block: {e}")))?;
        if pos != bytes.len() {
            return Err(Error::parse(pos, "trailing bytes after the last block"));
        }
        let mut bundle = ModelBundle::new(pipeline, model, &meta.catalog_id, meta.catalog_version)?;
        bundle.format_version = version;
        Ok(bundle)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        ModelBundle::from_bytes(&bytes)
    }
}
