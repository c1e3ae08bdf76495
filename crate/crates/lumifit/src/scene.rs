//! Scene inputs: material and geometry maps, camera projection, and the
//! per-map normalizations applied before they enter any model.

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::math::Vec3;
use serde::{Deserialize, Serialize};

/// Pinhole intrinsics in pixel units. `width`/`height` give the raster the
/// intrinsics were calibrated for, which also bounds pixel arguments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::input("focal lengths must be positive"));
        }
        if width == 0 || height == 0 {
            return Err(Error::input("intrinsics raster size must be positive"));
        }
        Ok(CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Simple centered pinhole with a ~53 degree horizontal field of view.
    pub fn default_for(width: usize, height: usize) -> Self {
        let f = width.max(height) as f64;
        CameraIntrinsics {
            fx: f,
            fy: f,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
        }
    }
}

/// Backproject a pixel (integer coordinates, pixel-center convention
/// `(x + 0.5, y + 0.5)`) at metric `depth` to a camera-space point.
/// Camera space: x right, y down, z forward into the scene; the camera sits
/// at the origin.
pub fn backproject(
    pixel_x: usize,
    pixel_y: usize,
    depth: f64,
    intrinsics: &CameraIntrinsics,
) -> Result<Vec3> {
    if pixel_x >= intrinsics.width || pixel_y >= intrinsics.height {
        return Err(Error::input(format!(
            "pixel ({pixel_x}, {pixel_y}) outside {}x{}",
            intrinsics.width, intrinsics.height
        )));
    }
    if !(depth > 0.0) {
        return Err(Error::input("depth must be positive"));
    }
    Ok(backproject_at(
        pixel_x as f64 + 0.5,
        pixel_y as f64 + 0.5,
        depth,
        intrinsics,
    ))
}

/// Backproject continuous sensor coordinates (`u`, `v`) at metric `depth`.
/// `u = x + 0.5` is the center of pixel column `x`.
pub fn backproject_at(u: f64, v: f64, depth: f64, intrinsics: &CameraIntrinsics) -> Vec3 {
    Vec3::new(
        (u - intrinsics.cx) / intrinsics.fx * depth,
        (v - intrinsics.cy) / intrinsics.fy * depth,
        depth,
    )
}

/// Forward-project a camera-space point to continuous sensor coordinates.
/// Inverse of [`backproject_at`] for points with `z > 0`.
pub fn project(p: Vec3, intrinsics: &CameraIntrinsics) -> Result<(f64, f64)> {
    if !(p.z > 0.0) {
        return Err(Error::input("point is behind the camera"));
    }
    Ok((
        intrinsics.fx * p.x / p.z + intrinsics.cx,
        intrinsics.fy * p.y / p.z + intrinsics.cy,
    ))
}

/// Per-pixel albedo, roughness and metallic: the 5-channel material.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialMaps {
    pub albedo: ImageBuffer,
    pub roughness: ImageBuffer,
    pub metallic: ImageBuffer,
}

impl MaterialMaps {
    pub fn new(albedo: ImageBuffer, roughness: ImageBuffer, metallic: ImageBuffer) -> Result<Self> {
        if albedo.channels() != 3 {
            return Err(Error::input("albedo must have 3 channels"));
        }
        if roughness.channels() != 1 || metallic.channels() != 1 {
            return Err(Error::input("roughness and metallic must have 1 channel"));
        }
        let same = albedo.width() == roughness.width()
            && albedo.height() == roughness.height()
            && albedo.width() == metallic.width()
            && albedo.height() == metallic.height();
        if !same {
            return Err(Error::input("material maps must share resolution"));
        }
        for (name, map) in [
            ("albedo", &albedo),
            ("roughness", &roughness),
            ("metallic", &metallic),
        ] {
            if !map.all_in_range(0.0, 1.0) {
                return Err(Error::input(format!("{name} values must lie in [0, 1]")));
            }
        }
        Ok(MaterialMaps {
            albedo,
            roughness,
            metallic,
        })
    }

    pub fn width(&self) -> usize {
        self.albedo.width()
    }

    pub fn height(&self) -> usize {
        self.albedo.height()
    }
}

/// Maximum deviation of a stored normal from unit length before the loader
/// rejects the map instead of renormalizing.
const NORMAL_RENORM_LIMIT: f64 = 1e-2;

/// Per-pixel camera-space unit normals and positive metric depth, plus the
/// intrinsics that tie pixels to rays. Normals of visible surfaces point
/// toward the camera side.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryMaps {
    pub normals: ImageBuffer,
    pub depth: ImageBuffer,
    pub intrinsics: CameraIntrinsics,
}

impl GeometryMaps {
    /// Validates resolutions and depth positivity, and renormalizes normals
    /// whose length deviates from 1 by at most 1e-2 (rejects anything worse).
    pub fn new(
        normals: ImageBuffer,
        depth: ImageBuffer,
        intrinsics: CameraIntrinsics,
    ) -> Result<Self> {
        if normals.channels() != 3 || depth.channels() != 1 {
            return Err(Error::input("normals must be 3-channel, depth 1-channel"));
        }
        if normals.width() != depth.width() || normals.height() != depth.height() {
            return Err(Error::input("geometry maps must share resolution"));
        }
        if intrinsics.width != normals.width() || intrinsics.height != normals.height() {
            return Err(Error::input("intrinsics raster size must match geometry maps"));
        }
        if !depth.data().iter().all(|&d| d > 0.0) {
            return Err(Error::input("depth must be strictly positive"));
        }
        let mut fixed = Vec::with_capacity(normals.data().len());
        for chunk in normals.data().chunks_exact(3) {
            let n = Vec3::new(chunk[0], chunk[1], chunk[2]);
            let len = n.length();
            if (len - 1.0).abs() > NORMAL_RENORM_LIMIT {
                return Err(Error::input(format!(
                    "normal length {len} too far from 1 to renormalize"
                )));
            }
            let u = n / len;
            fixed.extend_from_slice(&[u.x, u.y, u.z]);
        }
        let normals = ImageBuffer::new(normals.width(), normals.height(), 3, fixed)?;
        Ok(GeometryMaps {
            normals,
            depth,
            intrinsics,
        })
    }

    pub fn width(&self) -> usize {
        self.normals.width()
    }

    pub fn height(&self) -> usize {
        self.normals.height()
    }

    /// Largest depth in the map; the unit for "normalized depth space".
    pub fn max_depth(&self) -> f64 {
        self.depth.data().iter().cloned().fold(0.0, f64::max)
    }

    /// Camera-space position of the surface seen through pixel (x, y).
    pub fn surface_point(&self, x: usize, y: usize) -> Vec3 {
        backproject_at(
            x as f64 + 0.5,
            y as f64 + 0.5,
            self.depth.at(x, y, 0),
            &self.intrinsics,
        )
    }
}

/// Everything the renderer and the light fit consume: materials, geometry and
/// (when fitting) the photograph to reproduce.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub materials: MaterialMaps,
    pub geometry: GeometryMaps,
    pub target: Option<ImageBuffer>,
}

impl Scene {
    pub fn new(
        materials: MaterialMaps,
        geometry: GeometryMaps,
        target: Option<ImageBuffer>,
    ) -> Result<Self> {
        if materials.width() != geometry.width() || materials.height() != geometry.height() {
            return Err(Error::input("materials and geometry must share resolution"));
        }
        if let Some(t) = &target {
            if t.channels() != 3 {
                return Err(Error::input("target must be a 3-channel image"));
            }
            if t.width() != materials.width() || t.height() != materials.height() {
                return Err(Error::input("target must share the scene resolution"));
            }
        }
        Ok(Scene {
            materials,
            geometry,
            target,
        })
    }

    pub fn width(&self) -> usize {
        self.materials.width()
    }

    pub fn height(&self) -> usize {
        self.materials.height()
    }
}

/// Scale an HDR image so its mean becomes 0.5, then clip to [0, 1].
/// The mean is taken jointly over all pixels and channels.
pub fn normalize_exposure(image: &ImageBuffer) -> Result<ImageBuffer> {
    if image.channels() != 3 {
        return Err(Error::input("exposure normalization expects a 3-channel image"));
    }
    let mean = image.mean();
    if mean <= 0.0 {
        return Err(Error::degenerate("image mean is zero"));
    }
    let scale = 0.5 / mean;
    image.map(|v| (v * scale).clamp(0.0, 1.0))
}

/// Map a [0, 1] map to [-1, 1] via `2x - 1`.
pub fn to_signed_range(map: &ImageBuffer) -> Result<ImageBuffer> {
    if !map.all_in_range(0.0, 1.0) {
        return Err(Error::input("values must lie in [0, 1]"));
    }
    map.map(|v| 2.0 * v - 1.0)
}

/// Exact inverse of [`to_signed_range`].
pub fn from_signed_range(map: &ImageBuffer) -> Result<ImageBuffer> {
    if !map.all_in_range(-1.0, 1.0) {
        return Err(Error::input("values must lie in [-1, 1]"));
    }
    map.map(|v| (v + 1.0) / 2.0)
}

/// Pack roughness and metallic into an RGB image: R = roughness, G = metallic,
/// B = 0.
pub fn brdf_pack(roughness: &ImageBuffer, metallic: &ImageBuffer) -> Result<ImageBuffer> {
    if roughness.channels() != 1 || metallic.channels() != 1 {
        return Err(Error::input("brdf_pack expects 1-channel maps"));
    }
    if roughness.width() != metallic.width() || roughness.height() != metallic.height() {
        return Err(Error::input("brdf_pack resolution mismatch"));
    }
    let mut data = Vec::with_capacity(roughness.data().len() * 3);
    for (&r, &m) in roughness.data().iter().zip(metallic.data()) {
        data.extend_from_slice(&[r, m, 0.0]);
    }
    ImageBuffer::new(roughness.width(), roughness.height(), 3, data)
}

/// Recover (roughness, metallic) from a packed BRDF image.
pub fn brdf_unpack(packed: &ImageBuffer) -> Result<(ImageBuffer, ImageBuffer)> {
    if packed.channels() != 3 {
        return Err(Error::input("brdf_unpack expects a 3-channel image"));
    }
    let mut rough = Vec::with_capacity(packed.width() * packed.height());
    let mut metal = Vec::with_capacity(packed.width() * packed.height());
    for px in packed.data().chunks_exact(3) {
        rough.push(px[0]);
        metal.push(px[1]);
    }
    Ok((
        ImageBuffer::new(packed.width(), packed.height(), 1, rough)?,
        ImageBuffer::new(packed.width(), packed.height(), 1, metal)?,
    ))
}
