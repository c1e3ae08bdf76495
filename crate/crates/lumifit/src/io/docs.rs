//! JSON documents: lighting rigs, scene bundles (map files by path), fit
//! configurations and fit traces.

use crate::error::{Error, Result};
use crate::fit::{FitConfig, FitTrace};
use crate::io::pfm::{read_pfm, write_pfm};
use crate::metrics::JudgmentSet;
use crate::scene::{CameraIntrinsics, GeometryMaps, MaterialMaps, Scene};
use crate::sg::LightingRig;
use std::path::{Path, PathBuf};

/// Serialize a rig to pretty JSON:
/// `{"environment": [SG...], "lights": [{"position", "profile", "enabled"}...]}`
/// with SG = `{"axis": [x,y,z], "sharpness": s, "amplitude": [r,g,b]}`.
pub fn rig_to_json(rig: &LightingRig) -> String {
    serde_json::to_string_pretty(rig).expect("rig serializes")
}

pub fn rig_from_json(text: &str) -> Result<LightingRig> {
    let rig: LightingRig =
        serde_json::from_str(text).map_err(|e| Error::format(format!("bad rig document: {e}")))?;
    rig.validate()?;
    Ok(rig)
}

pub fn save_rig(rig: &LightingRig, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path.as_ref(), rig_to_json(rig))?;
    Ok(())
}

pub fn load_rig(path: impl AsRef<Path>) -> Result<LightingRig> {
    let text = std::fs::read_to_string(path.as_ref())?;
    rig_from_json(&text).map_err(|e| e.with_path(path.as_ref()))
}

/// Scene bundle: map files referenced by path (relative to the document),
/// plus intrinsics and an optional judgments file.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SceneDocument {
    pub albedo: String,
    pub roughness: String,
    pub metallic: String,
    pub normals: String,
    pub depth: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    pub intrinsics: CameraIntrinsics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judgments: Option<String>,
}

impl SceneDocument {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("scene document serializes");
        std::fs::write(path.as_ref(), text)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<SceneDocument> {
        let text = std::fs::read_to_string(path.as_ref())?;
        serde_json::from_str(&text)
            .map_err(|e| Error::format(format!("bad scene document: {e}")).with_path(path.as_ref()))
    }

    fn resolve(&self, base: &Path, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    /// Load all referenced maps and assemble the scene. `doc_path` is the
    /// path this document was read from; map paths resolve against its
    /// directory.
    pub fn load_scene(&self, doc_path: impl AsRef<Path>) -> Result<Scene> {
        let base = doc_path
            .as_ref()
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .to_path_buf();
        let albedo = read_pfm(self.resolve(&base, &self.albedo))?;
        let roughness = read_pfm(self.resolve(&base, &self.roughness))?;
        let metallic = read_pfm(self.resolve(&base, &self.metallic))?;
        let normals = read_pfm(self.resolve(&base, &self.normals))?;
        let depth = read_pfm(self.resolve(&base, &self.depth))?;
        let target = match &self.target {
            Some(rel) => Some(read_pfm(self.resolve(&base, rel))?),
            None => None,
        };
        let materials = MaterialMaps::new(albedo, roughness, metallic)?;
        let geometry = GeometryMaps::new(normals, depth, self.intrinsics)?;
        Scene::new(materials, geometry, target)
    }

    /// Load the referenced judgments file, if any.
    pub fn load_judgments(&self, doc_path: impl AsRef<Path>) -> Result<Option<JudgmentSet>> {
        let base = doc_path
            .as_ref()
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .to_path_buf();
        match &self.judgments {
            None => Ok(None),
            Some(rel) => {
                let path = self.resolve(&base, rel);
                let text = std::fs::read_to_string(&path)?;
                Ok(Some(
                    JudgmentSet::from_jsonl(&text).map_err(|e| e.with_path(&path))?,
                ))
            }
        }
    }
}

/// Write a scene's maps as PFM files plus a `scene.json` document into `dir`.
/// Returns the document path.
pub fn export_scene_bundle(scene: &Scene, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_pfm(&scene.materials.albedo, dir.join("albedo.pfm"))?;
    write_pfm(&scene.materials.roughness, dir.join("roughness.pfm"))?;
    write_pfm(&scene.materials.metallic, dir.join("metallic.pfm"))?;
    write_pfm(&scene.geometry.normals, dir.join("normals.pfm"))?;
    write_pfm(&scene.geometry.depth, dir.join("depth.pfm"))?;
    let target = match &scene.target {
        Some(t) => {
            write_pfm(t, dir.join("target.pfm"))?;
            Some("target.pfm".to_string())
        }
        None => None,
    };
    let doc = SceneDocument {
        albedo: "albedo.pfm".into(),
        roughness: "roughness.pfm".into(),
        metallic: "metallic.pfm".into(),
        normals: "normals.pfm".into(),
        depth: "depth.pfm".into(),
        target,
        intrinsics: scene.geometry.intrinsics,
        judgments: None,
    };
    let doc_path = dir.join("scene.json");
    doc.save(&doc_path)?;
    Ok(doc_path)
}

/// Parse a fit configuration; missing fields take the paper defaults.
pub fn fit_config_from_json(text: &str) -> Result<FitConfig> {
    let config: FitConfig = serde_json::from_str(text)
        .map_err(|e| Error::format(format!("bad fit config: {e}")))?;
    config.validate()?;
    Ok(config)
}

pub fn load_fit_config(path: impl AsRef<Path>) -> Result<FitConfig> {
    let text = std::fs::read_to_string(path.as_ref())?;
    fit_config_from_json(&text).map_err(|e| e.with_path(path.as_ref()))
}

/// Line-delimited JSON trace, one record per iteration.
pub fn trace_to_jsonl(trace: &FitTrace) -> String {
    trace
        .records
        .iter()
        .map(|r| serde_json::to_string(r).expect("trace record serializes"))
        .map(|s| s + "\n")
        .collect()
}

pub fn save_trace(trace: &FitTrace, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path.as_ref(), trace_to_jsonl(trace))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;
    use crate::rng::DetRng;
    use crate::sg::{EnvironmentLight, PointLight, SphericalGaussian};
    use crate::synth::{generate_synthetic_scene, SceneSpec};

    fn sample_rig(rng: &mut DetRng) -> LightingRig {
        let lobe = |rng: &mut DetRng| {
            SphericalGaussian::new(
                rng.unit_vector(),
                rng.range(0.2, 50.0),
                Vec3::new(rng.range(0.0, 4.0), rng.range(0.0, 4.0), rng.range(0.0, 4.0)),
            )
            .unwrap()
        };
        let env = EnvironmentLight {
            lobes: (0..3).map(|_| lobe(rng)).collect(),
        };
        let mut lights = Vec::new();
        for i in 0..4 {
            let mut l = PointLight::new(
                Vec3::new(rng.range(-3.0, 3.0), rng.range(-3.0, 3.0), rng.range(0.1, 5.0)),
                (0..2).map(|_| lobe(rng)).collect(),
            )
            .unwrap();
            l.enabled = i != 2;
            lights.push(l);
        }
        LightingRig::new(env, lights).unwrap()
    }

    #[test]
    fn rig_json_shape_matches_schema() {
        let mut rng = DetRng::new(3);
        let rig = sample_rig(&mut rng);
        let text = rig_to_json(&rig);
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(value["environment"].is_array());
        assert!(value["environment"][0]["axis"].is_array());
        assert!(value["environment"][0]["sharpness"].is_number());
        assert!(value["environment"][0]["amplitude"].is_array());
        assert!(value["lights"][0]["position"].is_array());
        assert!(value["lights"][0]["enabled"].is_boolean());
        assert!(value["lights"][0]["profile"].is_array());
    }

    #[test]
    fn rig_round_trip_preserves_values() {
        let mut rng = DetRng::new(4);
        for _ in 0..5 {
            let rig = sample_rig(&mut rng);
            let back = rig_from_json(&rig_to_json(&rig)).unwrap();
            assert_eq!(back.points.len(), rig.points.len());
            for (a, b) in rig.points.iter().zip(&back.points) {
                assert_eq!(a.enabled, b.enabled);
                assert!((a.position - b.position).length() <= 1e-9 * a.position.length());
                for (la, lb) in a.profile.iter().zip(&b.profile) {
                    assert!((la.sharpness - lb.sharpness).abs() <= 1e-9 * la.sharpness);
                    assert!((la.axis - lb.axis).length() <= 1e-9);
                    assert!(
                        (la.amplitude - lb.amplitude).length()
                            <= 1e-9 * la.amplitude.length().max(1e-30)
                    );
                }
            }
        }
    }

    #[test]
    fn rig_json_rejects_invalid_rigs() {
        let text = r#"{"environment": [{"axis": [0, 0, 2], "sharpness": 1.0, "amplitude": [1, 1, 1]}], "lights": []}"#;
        assert!(rig_from_json(text).is_err());
        assert!(rig_from_json("{").is_err());
    }

    #[test]
    fn scene_bundle_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (scene, _) = generate_synthetic_scene(&SceneSpec::default(), 8).unwrap();
        let doc_path = export_scene_bundle(&scene, dir.path()).unwrap();
        let doc = SceneDocument::read(&doc_path).unwrap();
        let loaded = doc.load_scene(&doc_path).unwrap();
        assert_eq!(loaded.width(), scene.width());
        // PFM stores f32; compare at that precision.
        for (a, b) in scene
            .target
            .as_ref()
            .unwrap()
            .data()
            .iter()
            .zip(loaded.target.as_ref().unwrap().data())
        {
            assert_eq!(*a as f32, *b as f32);
        }
        assert_eq!(doc.load_judgments(&doc_path).unwrap(), None);
    }

    #[test]
    fn missing_map_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let doc = SceneDocument {
            albedo: "missing.pfm".into(),
            roughness: "missing.pfm".into(),
            metallic: "missing.pfm".into(),
            normals: "missing.pfm".into(),
            depth: "missing.pfm".into(),
            target: None,
            intrinsics: CameraIntrinsics::default_for(8, 8),
            judgments: None,
        };
        let doc_path = dir.path().join("scene.json");
        doc.save(&doc_path).unwrap();
        assert!(SceneDocument::read(&doc_path)
            .unwrap()
            .load_scene(&doc_path)
            .is_err());
    }
}
