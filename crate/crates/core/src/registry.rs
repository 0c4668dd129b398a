//! Built-in object registry: per-class geometry and appearance.
//!
//! The default table ships inside the crate (`assets/objects.json`); a
//! different file can be loaded with [`Registry::load`].

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

const BUILTIN: &str = include_str!("../assets/objects.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Disc,
    Square,
    LBlock,
    Slot,
    Container,
    Peg,
    Disk,
}

impl Shape {
    fn default_graspable(self) -> bool {
        !matches!(self, Shape::Slot | Shape::Peg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub class: String,
    pub shape: Shape,
    pub footprint_radius: f64,
    pub height: f64,
    pub color: [u8; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graspable: Option<bool>,
}

impl ClassInfo {
    pub fn is_graspable(&self) -> bool {
        self.graspable
            .unwrap_or_else(|| self.shape.default_graspable())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("failed to read registry {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed registry: {0}")]
    Json(#[from] serde_json::Error),
    #[error("class '{class}' has non-positive {field}")]
    InvalidGeometry { class: String, field: &'static str },
    #[error("class '{0}' is listed twice")]
    DuplicateClass(String),
}

#[derive(Deserialize)]
struct RegistryFile {
    version: u32,
    classes: Vec<ClassInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Registry {
    pub version: u32,
    classes: BTreeMap<String, ClassInfo>,
}

impl Registry {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN).expect("bundled registry is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, RegistryError> {
        let file: RegistryFile = serde_json::from_str(text)?;
        let mut classes = BTreeMap::new();
        for info in file.classes {
            if !(info.footprint_radius > 0.0) {
                return Err(RegistryError::InvalidGeometry {
                    class: info.class,
                    field: "footprint_radius",
                });
            }
            if !(info.height > 0.0) {
                return Err(RegistryError::InvalidGeometry {
                    class: info.class,
                    field: "height",
                });
            }
            if classes.contains_key(&info.class) {
                return Err(RegistryError::DuplicateClass(info.class));
            }
            classes.insert(info.class.clone(), info);
        }
        Ok(Self {
            version: file.version,
            classes,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn get(&self, class: &str) -> Option<&ClassInfo> {
        self.classes.get(class)
    }

    pub fn contains(&self, class: &str) -> bool {
        self.classes.contains_key(class)
    }

    pub fn classes(&self) -> impl Iterator<Item = &ClassInfo> {
        self.classes.values()
    }
}

impl Default for Registry {
    fn default() -> Self {
        Self::builtin()
    }
}
