//! Parameter manifest: a JSON document mapping tensor name to shape and
//! row-major values.
//!
//! ```json
//! {"format": "ppg-affect-params", "version": 1,
//!  "tensors": [{"name": "trunk.conv1.weight", "shape": [64, 1, 8], "data": [...]}]}
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MANIFEST_FORMAT: &str = "ppg-affect-params";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamManifest {
    pub format: String,
    pub version: u32,
    pub tensors: Vec<NamedTensor>,
}

impl ParamManifest {
    pub fn from_tensors<'a>(items: impl IntoIterator<Item = (String, &'a Tensor)>) -> Self {
        Self {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            tensors: items
                .into_iter()
                .map(|(name, t)| NamedTensor {
                    name,
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn check_header(&self) -> Result<()> {
        if self.format != MANIFEST_FORMAT || self.version != MANIFEST_VERSION {
            return Err(Error::Data(format!(
                "unsupported parameter manifest {} v{}",
                self.format, self.version
            )));
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Copy the named tensor into `dst`, checking its shape.
    pub fn load_into(&self, name: &str, dst: &mut Tensor) -> Result<()> {
        let src = self
            .get(name)
            .ok_or_else(|| Error::Data(format!("parameter manifest lacks `{name}`")))?;
        if src.shape != dst.shape() {
            return Err(Error::shape(
                format!("manifest tensor `{name}`"),
                dst.shape_string(),
                format!("{:?}", src.shape),
            ));
        }
        *dst = Tensor::new(src.shape.clone(), src.data.clone())?;
        Ok(())
    }
}
