//! Scene files: a small JSON schema with rationals carried as strings.

use membrane::asymptotics::ExponentQ;
use membrane::geometry::{Domain, Point, Scene, Shape};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub dimension: usize,
    pub period: f64,
    pub domains: Vec<DomainFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainFile {
    pub id: String,
    pub shape: ShapeFile,
    /// Rational exponent as a string, e.g. "1" or "3/2".
    pub permeability_exponent: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeFile {
    Interval { a: f64, b: f64 },
    Ball { center: [f64; 2], radius: f64 },
}

#[derive(Debug)]
pub enum SceneFileError {
    Io(std::io::Error),
    Parse(String),
    Invalid(String),
}

impl std::fmt::Display for SceneFileError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SceneFileError::Io(e) => write!(f, "cannot read scene file: {e}"),
            SceneFileError::Parse(e) => write!(f, "cannot parse scene file: {e}"),
            SceneFileError::Invalid(e) => write!(f, "invalid scene: {e}"),
        }
    }
}

impl std::error::Error for SceneFileError {}

impl SceneFile {
    pub fn to_scene(&self) -> Result<Scene, SceneFileError> {
        let domains = self
            .domains
            .iter()
            .map(|d| {
                let exponent = ExponentQ::parse(&d.permeability_exponent).ok_or_else(|| {
                    SceneFileError::Parse(format!(
                        "domain {}: bad rational {:?}",
                        d.id, d.permeability_exponent
                    ))
                })?;
                let shape = match &d.shape {
                    ShapeFile::Interval { a, b } => Shape::Interval { a: *a, b: *b },
                    ShapeFile::Ball { center, radius } => Shape::Ball {
                        center: Point::d2(center[0], center[1]),
                        radius: *radius,
                    },
                };
                Ok(Domain {
                    id: d.id.clone(),
                    shape,
                    permeability_exponent: exponent.0,
                })
            })
            .collect::<Result<Vec<_>, SceneFileError>>()?;
        Scene::new(self.dimension, self.period, domains)
            .map_err(|e| SceneFileError::Invalid(e.to_string()))
    }

    pub fn from_scene(scene: &Scene) -> SceneFile {
        SceneFile {
            dimension: scene.dimension,
            period: scene.period,
            domains: scene
                .domains
                .iter()
                .map(|d| DomainFile {
                    id: d.id.clone(),
                    shape: match &d.shape {
                        Shape::Interval { a, b } => ShapeFile::Interval { a: *a, b: *b },
                        Shape::Ball { center, radius } => ShapeFile::Ball {
                            center: [center.0[0], center.0[1]],
                            radius: *radius,
                        },
                    },
                    permeability_exponent: ExponentQ(d.permeability_exponent).to_string(),
                })
                .collect(),
        }
    }
}

/// Load a scene from a path, or one of the bundled scenes by name
/// (`A`/`B`/`C`/`D`).
pub fn load_scene(spec: &str) -> Result<Scene, SceneFileError> {
    if let Some(scene) = membrane::scenes::scene_by_name(spec) {
        return Ok(scene);
    }
    let text = std::fs::read_to_string(spec).map_err(SceneFileError::Io)?;
    let file: SceneFile =
        serde_json::from_str(&text).map_err(|e| SceneFileError::Parse(e.to_string()))?;
    file.to_scene()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_identity() {
        for scene in [
            membrane::scenes::scene_a(),
            membrane::scenes::scene_b(),
            membrane::scenes::scene_c(),
            membrane::scenes::scene_d(),
        ] {
            let file = SceneFile::from_scene(&scene);
            let text = serde_json::to_string_pretty(&file).unwrap();
            let back: SceneFile = serde_json::from_str(&text).unwrap();
            assert_eq!(back, file);
            assert_eq!(back.to_scene().unwrap(), scene);
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"dimension":1,"period":1.0,"domains":[],"color":"red"}"#;
        assert!(serde_json::from_str::<SceneFile>(text).is_err());
    }

    #[test]
    fn bad_rationals_are_rejected() {
        let text = r#"{"dimension":1,"period":1.0,"domains":[
            {"id":"D1","shape":{"kind":"interval","a":0.3,"b":0.7},"permeability_exponent":"x/y"}]}"#;
        let file: SceneFile = serde_json::from_str(text).unwrap();
        assert!(file.to_scene().is_err());
    }
}
