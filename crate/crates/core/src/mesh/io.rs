use std::fs;
use std::io::Write;
use std::path::Path;

use super::{SimplicialSurface, ValidationOptions};
use crate::error::MeshError;
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Off,
    /// Pick by file extension.
    Auto,
}

impl MeshFormat {
    fn resolve(self, path: &Path) -> Result<Self, MeshError> {
        if self != MeshFormat::Auto {
            return Ok(self);
        }
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("obj") => Ok(MeshFormat::Obj),
            Some("off") => Ok(MeshFormat::Off),
            _ => Err(MeshError::UnknownFormat(path.to_path_buf())),
        }
    }
}

type RawMesh = (Vec<Vec3>, Vec<[usize; 3]>);

pub fn load_mesh(
    path: &Path,
    format: MeshFormat,
    options: ValidationOptions,
) -> Result<SimplicialSurface, MeshError> {
    let format = format.resolve(path)?;
    let text = fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let (vertices, faces) = match format {
        MeshFormat::Obj => parse_obj(&text)?,
        MeshFormat::Off => parse_off(&text)?,
        MeshFormat::Auto => unreachable!(),
    };
    SimplicialSurface::with_options(vertices, faces, options)
}

pub fn save_mesh(
    path: &Path,
    format: MeshFormat,
    vertices: &[Vec3],
    faces: &[[usize; 3]],
) -> Result<(), MeshError> {
    let format = format.resolve(path)?;
    let io_err = |source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    match format {
        MeshFormat::Obj => write_obj(&mut w, vertices, faces),
        MeshFormat::Off => write_off(&mut w, vertices, faces),
        MeshFormat::Auto => unreachable!(),
    }
    .and_then(|_| w.flush())
    .map_err(io_err)
}

fn parse_float(token: Option<&str>, line: usize) -> Result<f64, MeshError> {
    let token = token.ok_or_else(|| MeshError::Parse {
        line,
        message: "missing coordinate".into(),
    })?;
    token.parse::<f64>().map_err(|_| MeshError::Parse {
        line,
        message: format!("bad number {token:?}"),
    })
}

/// Parses `v` and `f` records. Face tokens may carry `/vt/vn` suffixes and
/// negative (relative) indices. Other record types are ignored.
pub fn parse_obj(text: &str) -> Result<RawMesh, MeshError> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut tokens = content.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let x = parse_float(tokens.next(), line)?;
                let y = parse_float(tokens.next(), line)?;
                let z = parse_float(tokens.next(), line)?;
                vertices.push(Vec3::new(x, y, z));
            }
            Some("f") => {
                let corners: Vec<&str> = tokens.collect();
                if corners.len() != 3 {
                    return Err(MeshError::NonTriangleFace {
                        line,
                        count: corners.len(),
                    });
                }
                let mut face = [0usize; 3];
                for (slot, token) in face.iter_mut().zip(&corners) {
                    let head = token.split('/').next().unwrap_or("");
                    let index: i64 = head.parse().map_err(|_| MeshError::Parse {
                        line,
                        message: format!("bad face index {token:?}"),
                    })?;
                    let resolved = if index > 0 {
                        index - 1
                    } else if index < 0 {
                        vertices.len() as i64 + index
                    } else {
                        -1
                    };
                    if resolved < 0 {
                        return Err(MeshError::Parse {
                            line,
                            message: format!("face index {index} is invalid"),
                        });
                    }
                    *slot = resolved as usize;
                }
                faces.push(face);
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

/// Parses an OFF file: `OFF` header, then `V F E` counts, vertex rows and
/// `3 i j k` face rows with 0-based indices.
pub fn parse_off(text: &str) -> Result<RawMesh, MeshError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (line, header) = lines.next().ok_or(MeshError::Parse {
        line: 1,
        message: "empty file".into(),
    })?;
    let mut rest_of_header = header.split_whitespace();
    if rest_of_header.next() != Some("OFF") {
        return Err(MeshError::Parse {
            line,
            message: "missing OFF header".into(),
        });
    }
    // counts may follow the keyword on the same line
    let mut counts: Vec<&str> = rest_of_header.collect();
    let mut counts_line = line;
    if counts.is_empty() {
        let (l, c) = lines.next().ok_or(MeshError::Parse {
            line,
            message: "missing vertex/face counts".into(),
        })?;
        counts = c.split_whitespace().collect();
        counts_line = l;
    }
    let parse_count = |t: Option<&&str>| -> Result<usize, MeshError> {
        t.and_then(|s| s.parse().ok()).ok_or(MeshError::Parse {
            line: counts_line,
            message: "bad vertex/face counts".into(),
        })
    };
    let nv = parse_count(counts.first())?;
    let nf = parse_count(counts.get(1))?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, l) = lines.next().ok_or(MeshError::Parse {
            line: counts_line,
            message: format!("expected {nv} vertices"),
        })?;
        let mut t = l.split_whitespace();
        let x = parse_float(t.next(), line)?;
        let y = parse_float(t.next(), line)?;
        let z = parse_float(t.next(), line)?;
        vertices.push(Vec3::new(x, y, z));
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (line, l) = lines.next().ok_or(MeshError::Parse {
            line: counts_line,
            message: format!("expected {nf} faces"),
        })?;
        let tokens: Vec<&str> = l.split_whitespace().collect();
        let count: usize = tokens
            .first()
            .and_then(|s| s.parse().ok())
            .ok_or(MeshError::Parse {
                line,
                message: "bad face record".into(),
            })?;
        if count != 3 {
            return Err(MeshError::NonTriangleFace { line, count });
        }
        if tokens.len() < 4 {
            return Err(MeshError::Parse {
                line,
                message: "face record too short".into(),
            });
        }
        let mut face = [0usize; 3];
        for (slot, token) in face.iter_mut().zip(&tokens[1..4]) {
            *slot = token.parse().map_err(|_| MeshError::Parse {
                line,
                message: format!("bad face index {token:?}"),
            })?;
        }
        faces.push(face);
    }
    Ok((vertices, faces))
}

/// Floats are written with the shortest representation that round-trips.
pub fn write_obj<W: Write>(w: &mut W, vertices: &[Vec3], faces: &[[usize; 3]]) -> std::io::Result<()> {
    for v in vertices {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for f in faces {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

pub fn write_off<W: Write>(w: &mut W, vertices: &[Vec3], faces: &[[usize; 3]]) -> std::io::Result<()> {
    writeln!(w, "OFF")?;
    writeln!(w, "{} {} 0", vertices.len(), faces.len())?;
    for v in vertices {
        writeln!(w, "{} {} {}", v.x, v.y, v.z)?;
    }
    for f in faces {
        writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::make_icosphere;

    const TETRA_OFF: &str = "OFF\n# regular tetrahedron\n4 4 6\n1 1 1\n1 -1 -1\n-1 1 -1\n-1 -1 1\n3 0 1 2\n3 0 3 1\n3 0 2 3\n3 1 3 2\n";

    #[test]
    fn tetrahedron_off() {
        let (v, f) = parse_off(TETRA_OFF).unwrap();
        let s = SimplicialSurface::new(v, f).unwrap();
        assert_eq!(s.euler_characteristic(), 2);
        // edge 2√2, four equilateral faces
        let expected = 4.0 * 3.0_f64.sqrt() / 4.0 * 8.0;
        assert!((s.total_area() - expected).abs() < 1e-12);
    }

    #[test]
    fn quad_face_rejected() {
        let obj = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        assert!(matches!(
            parse_obj(obj),
            Err(MeshError::NonTriangleFace { line: 5, count: 4 })
        ));
        let off = "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        assert!(matches!(parse_off(off), Err(MeshError::NonTriangleFace { count: 4, .. })));
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(parse_obj("v 1 2\n"), Err(MeshError::Parse { line: 1, .. })));
        assert!(matches!(parse_obj("v 1 2 x\n"), Err(MeshError::Parse { line: 1, .. })));
        assert!(matches!(parse_obj("v 0 0 0\nf 1 2 0\n"), Err(MeshError::Parse { line: 2, .. })));
        assert!(matches!(parse_off("4 4 0\n"), Err(MeshError::Parse { .. })));
    }

    #[test]
    fn obj_slash_and_negative_indices() {
        let obj = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2//1 -1\n";
        let (_, f) = parse_obj(obj).unwrap();
        assert_eq!(f, vec![[0, 1, 2]]);
    }

    #[test]
    fn out_of_range_index_from_file() {
        let obj = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n";
        let (v, f) = parse_obj(obj).unwrap();
        assert!(matches!(
            SimplicialSurface::new(v, f),
            Err(MeshError::IndexOutOfRange { index: 8, .. })
        ));
    }

    #[test]
    fn round_trip_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let s = make_icosphere(2, [1.0, 0.8, 0.6]).perturb_vertices(1e-3, 1).unwrap();
        for name in ["m.obj", "m.off"] {
            let path = dir.path().join(name);
            save_mesh(&path, MeshFormat::Auto, s.vertices(), s.faces()).unwrap();
            let t = load_mesh(&path, MeshFormat::Auto, ValidationOptions::default()).unwrap();
            assert_eq!(t.faces(), s.faces());
            for (a, b) in t.vertices().iter().zip(s.vertices()) {
                assert!((a - b).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn unknown_extension() {
        let r = load_mesh(Path::new("x.ply"), MeshFormat::Auto, ValidationOptions::default());
        assert!(matches!(r, Err(MeshError::UnknownFormat(_))));
    }
}
