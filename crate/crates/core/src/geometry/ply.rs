//! ASCII PLY point clouds with optional `red green blue` (float, `[0,1]`) and
//! `sigma` vertex properties.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::PointCloud;
use crate::error::{Error, Result};

pub fn to_ply_string(cloud: &PointCloud) -> Result<String> {
    cloud.validate()?;
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", cloud.len());
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.colors.is_some() {
        s.push_str("property float red\nproperty float green\nproperty float blue\n");
    }
    if cloud.sigma.is_some() {
        s.push_str("property double sigma\n");
    }
    s.push_str("end_header\n");
    for i in 0..cloud.len() {
        let p = cloud.points[i];
        // {:?} on f64 prints the shortest string that round-trips
        let _ = write!(s, "{:?} {:?} {:?}", p.x, p.y, p.z);
        if let Some(c) = &cloud.colors {
            let _ = write!(s, " {:?} {:?} {:?}", c[i][0], c[i][1], c[i][2]);
        }
        if let Some(sig) = &cloud.sigma {
            let _ = write!(s, " {:?}", sig[i]);
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn from_ply_str(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(Error::format("not a PLY file"));
    }
    let mut count = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    loop {
        let line = lines.next().ok_or_else(|| Error::format("PLY header not terminated"))?.trim();
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => {}
            ["format", other, ..] => return Err(Error::format(format!("unsupported PLY format {other}"))),
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", name, n] => {
                in_vertex = *name == "vertex";
                if in_vertex {
                    count = Some(n.parse::<usize>().map_err(|_| Error::format("bad vertex count"))?);
                } else if *n != "0" {
                    return Err(Error::format(format!("unsupported PLY element {name}")));
                }
            }
            ["property", _ty, name] if in_vertex => props.push(name.to_string()),
            ["property", ..] => {}
            _ => return Err(Error::format(format!("unexpected PLY header line {line:?}"))),
        }
    }
    let count = count.ok_or_else(|| Error::format("PLY has no vertex element"))?;
    let col = |name: &str| props.iter().position(|p| p == name);
    let (x, y, z) = match (col("x"), col("y"), col("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(Error::format("PLY vertices need x, y, z")),
    };
    let rgb = match (col("red"), col("green"), col("blue")) {
        (Some(r), Some(g), Some(b)) => Some([r, g, b]),
        _ => None,
    };
    let sig = col("sigma");

    let mut cloud = PointCloud {
        points: Vec::with_capacity(count),
        colors: rgb.map(|_| Vec::with_capacity(count)),
        sigma: sig.map(|_| Vec::with_capacity(count)),
    };
    for _ in 0..count {
        let line = lines.next().ok_or_else(|| Error::format("PLY truncated"))?;
        let vals = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| Error::format(format!("bad PLY value {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != props.len() {
            return Err(Error::format("PLY row has wrong number of values"));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::format("non-finite PLY value"));
        }
        cloud.points.push(Vector3::new(vals[x], vals[y], vals[z]));
        if let (Some(c), Some([r, g, b])) = (cloud.colors.as_mut(), rgb) {
            c.push([vals[r], vals[g], vals[b]]);
        }
        if let (Some(s), Some(k)) = (cloud.sigma.as_mut(), sig) {
            s.push(vals[k]);
        }
    }
    cloud.validate().map_err(|e| Error::format(e.to_string()))?;
    Ok(cloud)
}

pub fn write_ply(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    std::fs::write(path, to_ply_string(cloud)?)?;
    Ok(())
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    from_ply_str(&std::fs::read_to_string(path)?)
}
