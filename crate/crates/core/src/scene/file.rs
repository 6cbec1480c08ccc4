//! JSON scene files: the canonical Gaussian set plus its deformation.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Gaussian, SceneSnapshot};
use crate::deform::Deformation;
use crate::math::{quat_from_wxyz, quat_to_wxyz, Vec3};
use crate::{Error, Result};

/// A loaded scene: canonical snapshot (time 0) and the deformation that animates it.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFile {
    pub canonical: SceneSnapshot,
    pub deformation: Deformation,
}

impl SceneFile {
    pub fn new(canonical: SceneSnapshot, deformation: Deformation) -> Result<Self> {
        deformation.validate_for(canonical.len())?;
        Ok(SceneFile {
            canonical,
            deformation,
        })
    }

    pub fn static_scene(canonical: SceneSnapshot) -> Self {
        SceneFile {
            canonical,
            deformation: Deformation::None,
        }
    }

    /// The deformed snapshot at normalized time `t`.
    pub fn at(&self, t: f64) -> Result<SceneSnapshot> {
        crate::deform::deform_snapshot(&self.canonical, &self.deformation, t)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: SceneRecord =
            serde_json::from_str(text).map_err(|e| Error::json("scene", e))?;
        let gaussians = record
            .gaussians
            .into_iter()
            .map(GaussianRecord::into_gaussian)
            .collect();
        let canonical = SceneSnapshot::new(gaussians, 0.0, record.sh_degree)?;
        SceneFile::new(canonical, record.deformation)
    }

    pub fn to_json(&self) -> String {
        let record = SceneRecord {
            sh_degree: self.canonical.sh_degree(),
            gaussians: self
                .canonical
                .gaussians()
                .iter()
                .map(GaussianRecord::from_gaussian)
                .collect(),
            deformation: self.deformation.clone(),
        };
        serde_json::to_string_pretty(&record).expect("scene serialization cannot fail")
    }
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<SceneFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SceneFile::from_json(&text).map_err(|e| match e {
        Error::Json { source, .. } => Error::json(path.display().to_string(), source),
        other => other,
    })
}

pub fn save_scene(scene: &SceneFile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, scene.to_json()).map_err(|e| Error::io(path, e))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneRecord {
    sh_degree: u8,
    gaussians: Vec<GaussianRecord>,
    #[serde(default)]
    deformation: Deformation,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GaussianRecord {
    mean: [f64; 3],
    rotation: [f64; 4],
    scale: [f64; 3],
    opacity: f64,
    sh: Vec<[f64; 3]>,
}

impl GaussianRecord {
    fn into_gaussian(self) -> Gaussian {
        Gaussian {
            mean: Vec3::from(self.mean),
            rotation: quat_from_wxyz(self.rotation),
            scale: Vec3::from(self.scale),
            opacity: self.opacity,
            sh: self.sh.into_iter().map(Vec3::from).collect(),
        }
    }

    fn from_gaussian(g: &Gaussian) -> Self {
        GaussianRecord {
            mean: g.mean.into(),
            rotation: quat_to_wxyz(&g.rotation),
            scale: g.scale.into(),
            opacity: g.opacity,
            sh: g.sh.iter().map(|c| (*c).into()).collect(),
        }
    }
}
