//! Procedural meshes: a haustra-like tube, UV spheres and planar quads.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TriangleMesh;

/// Tessellation and shape parameters of [`make_tube_mesh`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubeOptions {
    /// Vertices around the circumference.
    pub segments: usize,
    /// Rings along the length (raised to at least 16 per bump).
    pub rings: usize,
    /// Relative amplitude of the radial bumps.
    pub amplitude: f64,
}

impl Default for TubeOptions {
    fn default() -> Self {
        Self { segments: 96, rings: 192, amplitude: 0.15 }
    }
}

/// Tube along `+z` from `z = 0` to `z = length` with radius
/// `radius (1 + amplitude sin(2 pi bumps z / length + phase))` and smoothly
/// varying face albedo. Phase and albedo pattern are drawn from `seed`.
pub fn make_tube_mesh(radius: f64, length: f64, bumps: usize, seed: u64, opts: &TubeOptions) -> TriangleMesh {
    assert!(radius > 0.0 && length > 0.0, "tube radius and length must be positive");
    assert!(opts.segments >= 3 && opts.rings >= 1, "tube needs at least 3 segments and 1 ring");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase = if bumps > 0 { rng.random_range(0.0..TAU) } else { 0.0 };
    let hue0 = rng.random_range(0.02..0.08);
    let sat0 = rng.random_range(0.35..0.6);
    let (p1, p2) = (rng.random_range(0.0..TAU), rng.random_range(0.0..TAU));
    let waves = rng.random_range(1.0..3.0);

    let rings = opts.rings.max(16 * bumps);
    let n = opts.segments;
    let profile = |z: f64| radius * (1.0 + opts.amplitude * (TAU * bumps as f64 * z / length + phase).sin());
    let mut vertices = Vec::with_capacity((rings + 1) * n);
    for k in 0..=rings {
        let z = length * k as f64 / rings as f64;
        let r = profile(z);
        for j in 0..n {
            let a = TAU * j as f64 / n as f64;
            vertices.push(Vector3::new(r * a.cos(), r * a.sin(), z));
        }
    }
    let mut faces = Vec::with_capacity(2 * rings * n);
    let mut face_albedo = Vec::with_capacity(2 * rings * n);
    for k in 0..rings {
        let z = length * (k as f64 + 0.5) / rings as f64;
        for j in 0..n {
            let a = TAU * (j as f64 + 0.5) / n as f64;
            let (j1, k1) = ((j + 1) % n, k + 1);
            let (v00, v01, v10, v11) = (k * n + j, k * n + j1, k1 * n + j, k1 * n + j1);
            faces.push([v00, v10, v11]);
            faces.push([v00, v11, v01]);
            let h = hue0 + 0.015 * (TAU * waves * z / length + p1).sin() + 0.01 * (2.0 * a + p2).cos();
            let s = sat0 + 0.1 * (TAU * z / length + p2).sin() * (a + p1).cos();
            let albedo = [h.rem_euclid(1.0), s.clamp(0.0, 1.0)];
            face_albedo.push(albedo);
            face_albedo.push(albedo);
        }
    }
    TriangleMesh { vertices, faces, face_albedo }
}

/// [`make_tube_mesh`] with default tessellation.
pub fn make_tube_scene(radius: f64, length: f64, bumps: usize, seed: u64) -> TriangleMesh {
    make_tube_mesh(radius, length, bumps, seed, &TubeOptions::default())
}

/// UV sphere whose first pole points along `-z` from the center, so a camera
/// at the origin looking along `+z` sees the pole at the image center.
pub fn make_sphere_mesh(center: Vector3<f64>, radius: f64, rings: usize, segments: usize, albedo: [f64; 2]) -> TriangleMesh {
    assert!(radius > 0.0 && rings >= 2 && segments >= 3, "invalid sphere parameters");
    let point = |k: usize, j: usize| {
        let theta = std::f64::consts::PI * k as f64 / rings as f64;
        let phi = TAU * j as f64 / segments as f64;
        center + Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), -theta.cos()) * radius
    };
    let mut vertices = vec![center - Vector3::z() * radius];
    for k in 1..rings {
        for j in 0..segments {
            vertices.push(point(k, j));
        }
    }
    vertices.push(center + Vector3::z() * radius);
    let last = vertices.len() - 1;
    let ring = |k: usize, j: usize| 1 + (k - 1) * segments + j % segments;
    let mut faces = Vec::new();
    for j in 0..segments {
        faces.push([0, ring(1, j), ring(1, j + 1)]);
    }
    for k in 1..rings - 1 {
        for j in 0..segments {
            faces.push([ring(k, j), ring(k + 1, j), ring(k + 1, j + 1)]);
            faces.push([ring(k, j), ring(k + 1, j + 1), ring(k, j + 1)]);
        }
    }
    for j in 0..segments {
        faces.push([last, ring(rings - 1, j + 1), ring(rings - 1, j)]);
    }
    let face_albedo = vec![albedo; faces.len()];
    TriangleMesh { vertices, faces, face_albedo }
}

/// Planar quad `center + a u + b v` for `a, b` in `[-1, 1]`, split into
/// `2 n^2` triangles.
pub fn make_plane_mesh(center: Vector3<f64>, u: Vector3<f64>, v: Vector3<f64>, n: usize, albedo: [f64; 2]) -> TriangleMesh {
    assert!(n >= 1, "plane needs at least one cell");
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for b in 0..=n {
        for a in 0..=n {
            let (sa, sb) = (2.0 * a as f64 / n as f64 - 1.0, 2.0 * b as f64 / n as f64 - 1.0);
            vertices.push(center + u * sa + v * sb);
        }
    }
    let idx = |a: usize, b: usize| b * (n + 1) + a;
    let mut faces = Vec::with_capacity(2 * n * n);
    for b in 0..n {
        for a in 0..n {
            faces.push([idx(a, b), idx(a + 1, b), idx(a + 1, b + 1)]);
            faces.push([idx(a, b), idx(a + 1, b + 1), idx(a, b + 1)]);
        }
    }
    let face_albedo = vec![albedo; faces.len()];
    TriangleMesh { vertices, faces, face_albedo }
}

/// Replaces the albedo of every face with a smooth seeded pattern over the
/// face centroids' direction from `center`.
pub fn with_seeded_albedo(mut mesh: TriangleMesh, center: Vector3<f64>, seed: u64) -> TriangleMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hue0 = rng.random_range(0.02..0.1);
    let sat0 = rng.random_range(0.3..0.6);
    let (p1, p2) = (rng.random_range(0.0..TAU), rng.random_range(0.0..TAU));
    for (f, albedo) in mesh.faces.iter().zip(mesh.face_albedo.iter_mut()) {
        let c = (mesh.vertices[f[0]] + mesh.vertices[f[1]] + mesh.vertices[f[2]]) / 3.0 - center;
        let d = c.normalize();
        let h = hue0 + 0.02 * (3.0 * d.x + p1).sin();
        let s = sat0 + 0.15 * (2.0 * d.y + p2).cos();
        *albedo = [h.rem_euclid(1.0), s.clamp(0.0, 1.0)];
    }
    mesh
}
