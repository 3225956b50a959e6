//! Mesh and frame files.
//!
//! Meshes are ASCII OBJ (`v` and triangular `f` records) with a JSON sidecar
//! `{"face_albedo": [[h, s], ...]}`. A frame is four raster files plus a JSON
//! manifest naming them, the rig file and the camera pose.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{SceneFrame, TriangleMesh};
use crate::error::{Error, Result};
use crate::geometry::PoseSE3;
use crate::imaging::{read_field, write_field};

pub fn write_obj(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {:?} {:?} {:?}", v.x, v.y, v.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

/// Parses vertices and triangles; face albedo is set to white.
pub fn read_obj(text: &str) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let bad = |what: &str| Error::format(format!("obj line {}: {what}", lineno + 1));
        match parts.next() {
            Some("v") => {
                let c: Vec<f64> = parts.take(3).map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| bad("bad vertex"))?;
                if c.len() != 3 {
                    return Err(bad("vertex needs three coordinates"));
                }
                vertices.push(Vector3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = parts
                    .map(|p| p.split('/').next().unwrap_or("").parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad("bad face index"))?;
                if idx.len() != 3 {
                    return Err(bad("only triangular faces are supported"));
                }
                if idx.contains(&0) {
                    return Err(bad("face indices are 1-based"));
                }
                faces.push([idx[0] - 1, idx[1] - 1, idx[2] - 1]);
            }
            _ => {}
        }
    }
    let face_albedo = vec![[0.0, 0.0]; faces.len()];
    let mesh = TriangleMesh { vertices, faces, face_albedo };
    mesh.validate().map_err(|e| Error::format(e.to_string()))?;
    Ok(mesh)
}

#[derive(Serialize, Deserialize)]
struct AlbedoSidecar {
    face_albedo: Vec<[f64; 2]>,
}

fn sidecar_path(obj: &Path) -> PathBuf {
    obj.with_extension("albedo.json")
}

/// Writes `path` (OBJ) and `path` with extension `.albedo.json`.
pub fn write_mesh(path: impl AsRef<Path>, mesh: &TriangleMesh) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_obj(mesh))?;
    let side = AlbedoSidecar { face_albedo: mesh.face_albedo.clone() };
    fs::write(sidecar_path(path), serde_json::to_string(&side)?)?;
    Ok(())
}

/// Reads an OBJ and, if present, its albedo sidecar.
pub fn read_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let mut mesh = read_obj(&fs::read_to_string(path)?)?;
    let side = sidecar_path(path);
    if side.exists() {
        let s: AlbedoSidecar = serde_json::from_str(&fs::read_to_string(side)?).map_err(|e| Error::format(e.to_string()))?;
        mesh.face_albedo = s.face_albedo;
        mesh.validate().map_err(|e| Error::format(e.to_string()))?;
    }
    Ok(mesh)
}

/// Manifest of one frame on disk; paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameManifest {
    pub rig: String,
    pub pose: PoseSE3,
    pub image: String,
    pub depth: String,
    pub albedo: String,
    pub normals: String,
}

/// Writes `<stem>_{image,depth,albedo,normals}.ldk` and `<stem>.json` into
/// `dir`, returning the manifest.
pub fn write_frame(dir: impl AsRef<Path>, stem: &str, frame: &SceneFrame, rig_path: &str) -> Result<FrameManifest> {
    let dir = dir.as_ref();
    let name = |kind: &str| format!("{stem}_{kind}.ldk");
    let manifest = FrameManifest {
        rig: rig_path.to_string(),
        pose: frame.pose,
        image: name("image"),
        depth: name("depth"),
        albedo: name("albedo"),
        normals: name("normals"),
    };
    write_field(dir.join(&manifest.image), &frame.image)?;
    write_field(dir.join(&manifest.depth), &frame.depth)?;
    write_field(dir.join(&manifest.albedo), &frame.albedo)?;
    write_field(dir.join(&manifest.normals), &frame.normals)?;
    fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Reads a frame from its manifest file.
pub fn read_frame(manifest_path: impl AsRef<Path>) -> Result<(FrameManifest, SceneFrame)> {
    let path = manifest_path.as_ref();
    let dir = path.parent().unwrap_or(Path::new("."));
    let m: FrameManifest = serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| Error::format(e.to_string()))?;
    let frame = SceneFrame {
        image: read_field(dir.join(&m.image))?,
        depth: read_field(dir.join(&m.depth))?,
        albedo: read_field(dir.join(&m.albedo))?,
        normals: read_field(dir.join(&m.normals))?,
        pose: m.pose,
    };
    Ok((m, frame))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{make_tube_mesh, raycast_frame, TubeOptions};

    #[test]
    fn obj_round_trip_is_exact() {
        let mesh = make_tube_mesh(1.0, 3.0, 2, 5, &TubeOptions { segments: 12, rings: 8, amplitude: 0.1 });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tube.obj");
        write_mesh(&path, &mesh).unwrap();
        let back = read_mesh(&path).unwrap();
        assert_eq!(back.faces, mesh.faces);
        assert_eq!(back.face_albedo, mesh.face_albedo);
        for (a, b) in back.vertices.iter().zip(&mesh.vertices) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn obj_rejects_quads_and_bad_indices() {
        assert!(read_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3 4\n").is_err());
        assert!(read_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n").is_err());
        assert!(read_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n").is_err());
        let m = read_obj("# comment\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3\n").unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn frame_round_trip() {
        use crate::rig::{CameraModel, PhotometricRig};
        let rig = PhotometricRig::colocated(CameraModel::pinhole(16, 16, 12.0, 12.0, 7.5, 7.5).unwrap());
        let mesh = make_tube_mesh(1.0, 3.0, 2, 5, &TubeOptions { segments: 24, rings: 24, amplitude: 0.1 });
        let frame = raycast_frame(&rig, &mesh, &PoseSE3::identity()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_frame(dir.path(), "f0", &frame, "rig.json").unwrap();
        let (m, back) = read_frame(dir.path().join("f0.json")).unwrap();
        assert_eq!(m.rig, "rig.json");
        assert_eq!(back.depth.valid, frame.depth.valid);
        for (a, b) in back.depth.data.iter().zip(&frame.depth.data) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
        }
    }
}
