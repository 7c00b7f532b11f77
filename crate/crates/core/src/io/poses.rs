//! Camera pose documents: shared intrinsics plus one world-from-camera
//! transform per frame.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, CameraPose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseFrame {
    pub file: String,
    /// Row-major 4×4 world-from-camera matrix.
    pub transform: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseDocument {
    pub intrinsics: CameraIntrinsics,
    pub frames: Vec<PoseFrame>,
}

impl PoseDocument {
    pub fn new(intrinsics: CameraIntrinsics, poses: &[CameraPose]) -> Self {
        Self {
            intrinsics,
            frames: poses
                .iter()
                .enumerate()
                .map(|(i, p)| PoseFrame {
                    file: format!("frame_{i:05}.png"),
                    transform: p.to_row_major().to_vec(),
                })
                .collect(),
        }
    }

    /// Validated intrinsics and poses, in frame order.
    pub fn cameras(&self) -> Result<(CameraIntrinsics, Vec<CameraPose>)> {
        self.intrinsics.validate()?;
        let poses = self
            .frames
            .iter()
            .map(|f| {
                CameraPose::from_row_major(&f.transform)
                    .map_err(|e| Error::invalid(format!("frame {:?}: {e}", f.file)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((self.intrinsics, poses))
    }
}

pub fn read_poses(path: impl AsRef<Path>) -> Result<PoseDocument> {
    super::read_json(path)
}

pub fn write_poses(path: impl AsRef<Path>, doc: &PoseDocument) -> Result<()> {
    super::write_json(path, doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point3, Vec3};

    #[test]
    fn document_round_trip() {
        let intr = CameraIntrinsics::new(100.0, 100.0, 32.0, 24.0, 64, 48).unwrap();
        let pose = CameraPose::look_at(Point3::new(3.0, 1.0, 2.0), Point3::origin(), Vec3::z()).unwrap();
        let doc = PoseDocument::new(intr, &[pose, CameraPose::identity()]);
        let text = serde_json::to_string(&doc).unwrap();
        let back: PoseDocument = serde_json::from_str(&text).unwrap();
        let (i2, poses) = back.cameras().unwrap();
        assert_eq!(i2, intr);
        assert_eq!(poses[0], pose);
        assert_eq!(back.frames[1].file, "frame_00001.png");
    }

    #[test]
    fn rejects_bad_transform() {
        let text = r#"{"intrinsics": {"fx": 1, "fy": 1, "cx": 0.5, "cy": 0.5, "width": 1, "height": 1},
            "frames": [{"file": "a.png", "transform": [2,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1]}]}"#;
        let doc: PoseDocument = serde_json::from_str(text).unwrap();
        assert!(doc.cameras().is_err());
        let short = r#"{"intrinsics": {"fx": 1, "fy": 1, "cx": 0.5, "cy": 0.5, "width": 1, "height": 1},
            "frames": [{"file": "a.png", "transform": [1,0,0]}]}"#;
        assert!(serde_json::from_str::<PoseDocument>(short).unwrap().cameras().is_err());
    }
}
