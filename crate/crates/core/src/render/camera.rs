use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole camera with an OpenCV-style frame (x right, y down, z forward).
///
/// Pixel `(x, y)` is sampled at its center `(x + 0.5, y + 0.5)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// World-to-camera rotation.
    pub rotation: [[f64; 3]; 3],
    /// World-to-camera translation.
    pub translation: [f64; 3],
    pub near_clip: f64,
}

pub const DEFAULT_NEAR_CLIP: f64 = 0.01;

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = dot(a, a).sqrt();
    a.map(|v| v / n)
}

impl Camera {
    /// Camera at `eye` looking at `target`, with `up` pointing up in the image.
    pub fn look_at(
        eye: [f64; 3],
        target: [f64; 3],
        up: [f64; 3],
        focal: f64,
        width: usize,
        height: usize,
    ) -> Camera {
        let z = normalize(sub(target, eye));
        let y = normalize(sub(z.map(|v| v * dot(up, z)), up));
        let x = cross(y, z);
        let rotation = [x, y, z];
        let translation = [0, 1, 2].map(|r| -dot(rotation[r], eye));
        Camera {
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
            rotation,
            translation,
            near_clip: DEFAULT_NEAR_CLIP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Contract("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Contract("viewport must be at least 1×1".into()));
        }
        let finite = [self.fx, self.fy, self.cx, self.cy, self.near_clip]
            .iter()
            .chain(self.rotation.iter().flatten())
            .chain(&self.translation)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Contract("camera has non-finite parameters".into()));
        }
        for i in 0..3 {
            for j in 0..3 {
                let d = dot(self.rotation[i], self.rotation[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                if (d - want).abs() > 1e-6 {
                    return Err(Error::Contract("camera rotation is not orthonormal".into()));
                }
            }
        }
        Ok(())
    }

    /// World point to camera frame.
    #[inline]
    pub fn to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|r| dot(self.rotation[r], p) + self.translation[r])
    }

    /// Camera-frame point to world.
    pub fn to_world(&self, c: [f64; 3]) -> [f64; 3] {
        let d = sub(c, self.translation);
        [0, 1, 2].map(|col| (0..3).map(|r| self.rotation[r][col] * d[r]).sum())
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> [f64; 3] {
        self.to_world([0.0; 3])
    }

    /// Pixel coordinates of a camera-frame point (`z > 0`).
    #[inline]
    pub fn project_point(&self, c: [f64; 3]) -> [f64; 2] {
        [self.fx * c[0] / c[2] + self.cx, self.fy * c[1] / c[2] + self.cy]
    }
}

/// Divides intrinsics and resolution by `stride` so renders line up with a
/// feature map of that stride. Pixel centers sit at half-integer
/// coordinates, so dividing the continuous image coordinates (including
/// `cx`, `cy`) keeps every pixel footprint aligned.
pub fn scale_camera(cam: &Camera, stride: usize) -> Result<Camera> {
    if stride < 1 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    if stride == 1 {
        return Ok(cam.clone());
    }
    if cam.width % stride != 0 || cam.height % stride != 0 {
        log::warn!(
            "{}×{} viewport is not divisible by stride {stride}; flooring",
            cam.width,
            cam.height
        );
    }
    let s = stride as f64;
    let scaled = Camera {
        fx: cam.fx / s,
        fy: cam.fy / s,
        cx: cam.cx / s,
        cy: cam.cy / s,
        width: cam.width / stride,
        height: cam.height / stride,
        ..cam.clone()
    };
    if scaled.width == 0 || scaled.height == 0 {
        return Err(Error::Config(format!("stride {stride} leaves an empty viewport")));
    }
    Ok(scaled)
}

/// On-disk camera record: rotation is row-major 3×3.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CameraRecord {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub rotation: Vec<f64>,
    pub translation: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub near_clip: Option<f64>,
}

impl From<&Camera> for CameraRecord {
    fn from(c: &Camera) -> Self {
        CameraRecord {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            rotation: c.rotation.iter().flatten().copied().collect(),
            translation: c.translation.to_vec(),
            near_clip: (c.near_clip != DEFAULT_NEAR_CLIP).then_some(c.near_clip),
        }
    }
}

impl TryFrom<CameraRecord> for Camera {
    type Error = Error;

    fn try_from(r: CameraRecord) -> Result<Camera> {
        if r.rotation.len() != 9 || r.translation.len() != 3 {
            return Err(Error::Contract("camera needs 9 rotation and 3 translation values".into()));
        }
        let mut rotation = [[0.0; 3]; 3];
        for (i, v) in r.rotation.iter().enumerate() {
            rotation[i / 3][i % 3] = *v;
        }
        let cam = Camera {
            fx: r.fx,
            fy: r.fy,
            cx: r.cx,
            cy: r.cy,
            width: r.width,
            height: r.height,
            rotation,
            translation: [r.translation[0], r.translation[1], r.translation[2]],
            near_clip: r.near_clip.unwrap_or(DEFAULT_NEAR_CLIP),
        };
        cam.validate()?;
        Ok(cam)
    }
}

/// Parses a cameras file: a JSON list of [`CameraRecord`]s.
pub fn parse_cameras(json: &str) -> Result<Vec<Camera>> {
    let records: Vec<CameraRecord> =
        serde_json::from_str(json).map_err(|e| Error::Format(format!("cameras JSON: {e}")))?;
    records.into_iter().map(Camera::try_from).collect()
}

pub fn cameras_to_json(cams: &[Camera]) -> String {
    let records: Vec<CameraRecord> = cams.iter().map(CameraRecord::from).collect();
    serde_json::to_string_pretty(&records).expect("camera records serialize")
}
