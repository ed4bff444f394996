use std::path::Path;

use super::IoError;
use crate::rasterizer::TriangleMesh;

/// Loads a mesh, dispatching on the file extension (.obj or .off).
pub fn load_mesh(path: &Path) -> Result<TriangleMesh, IoError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    if ext != "obj" && ext != "off" {
        return Err(IoError::UnknownMeshFormat(path.display().to_string()));
    }
    let text = std::fs::read_to_string(path)?;
    if ext == "obj" {
        parse_obj(&text)
    } else {
        parse_off(&text)
    }
}

fn bad(line: usize, reason: impl Into<String>) -> IoError {
    IoError::MalformedRecord {
        line,
        reason: reason.into(),
    }
}

/// Wavefront OBJ subset: `v` and `f` records. Polygon faces are
/// fan-triangulated; indices are 1-based, negative indices count from
/// the current end of the vertex list. Everything else is ignored.
pub fn parse_obj(text: &str) -> Result<TriangleMesh, IoError> {
    let mut vertices: Vec<[f64; 3]> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut coords = [0.0f64; 3];
                for c in &mut coords {
                    let tok = tokens
                        .next()
                        .ok_or_else(|| bad(line_no, "vertex needs 3 coordinates"))?;
                    *c = tok
                        .parse::<f64>()
                        .map_err(|_| bad(line_no, format!("bad coordinate `{tok}`")))?;
                }
                if coords.iter().any(|c| !c.is_finite()) {
                    return Err(bad(line_no, "non-finite vertex coordinate"));
                }
                vertices.push(coords);
            }
            Some("f") => {
                let mut idx: Vec<usize> = Vec::new();
                for tok in tokens {
                    // `i`, `i/t`, `i//n`, `i/t/n`: the vertex index leads.
                    let first = tok.split('/').next().unwrap_or("");
                    let raw: i64 = first
                        .parse()
                        .map_err(|_| bad(line_no, format!("bad face index `{tok}`")))?;
                    let resolved = if raw > 0 {
                        (raw - 1) as usize
                    } else if raw < 0 {
                        let back = (-raw) as usize;
                        if back > vertices.len() {
                            return Err(bad(line_no, format!("negative index {raw} out of range")));
                        }
                        vertices.len() - back
                    } else {
                        return Err(bad(line_no, "face index 0 is invalid"));
                    };
                    if resolved >= vertices.len() {
                        return Err(bad(
                            line_no,
                            format!("face index {raw} exceeds {} vertices", vertices.len()),
                        ));
                    }
                    idx.push(resolved);
                }
                if idx.len() < 3 {
                    return Err(bad(line_no, "face needs at least 3 vertices"));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {} // comments, normals, groups, materials...
        }
    }
    if vertices.is_empty() || triangles.is_empty() {
        return Err(IoError::EmptyGeometry);
    }
    Ok(TriangleMesh { vertices, triangles })
}

/// OFF subset: optional `OFF` keyword (counts may share its line), a
/// counts line, vertex lines, then face lines with leading arity.
/// Indices are 0-based. Comments and blank lines are skipped; extra
/// tokens (e.g. colors) are ignored.
pub fn parse_off(text: &str) -> Result<TriangleMesh, IoError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (first_no, first) = lines.next().ok_or(IoError::EmptyGeometry)?;
    let counts_line: (usize, String);
    if let Some(rest) = first.strip_prefix("OFF") {
        let rest = rest.trim();
        if rest.is_empty() {
            let (no, l) = lines
                .next()
                .ok_or_else(|| bad(first_no, "missing OFF counts line"))?;
            counts_line = (no, l.to_string());
        } else {
            counts_line = (first_no, rest.to_string());
        }
    } else {
        counts_line = (first_no, first.to_string());
    }

    let mut counts = counts_line.1.split_whitespace().map(|t| t.parse::<usize>());
    let nv = counts
        .next()
        .and_then(|r| r.ok())
        .ok_or_else(|| bad(counts_line.0, "bad vertex count"))?;
    let nf = counts
        .next()
        .and_then(|r| r.ok())
        .ok_or_else(|| bad(counts_line.0, "bad face count"))?;
    if nv == 0 || nf == 0 {
        return Err(IoError::EmptyGeometry);
    }

    let mut vertices: Vec<[f64; 3]> = Vec::new();
    for _ in 0..nv {
        let (no, l) = lines
            .next()
            .ok_or_else(|| bad(counts_line.0, "vertex list truncated"))?;
        let mut toks = l.split_whitespace();
        let mut coords = [0.0f64; 3];
        for c in &mut coords {
            let tok = toks.next().ok_or_else(|| bad(no, "vertex needs 3 coordinates"))?;
            *c = tok
                .parse::<f64>()
                .map_err(|_| bad(no, format!("bad coordinate `{tok}`")))?;
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(bad(no, "non-finite vertex coordinate"));
        }
        vertices.push(coords);
    }

    let mut triangles: Vec<[usize; 3]> = Vec::new();
    for _ in 0..nf {
        let (no, l) = lines
            .next()
            .ok_or_else(|| bad(counts_line.0, "face list truncated"))?;
        let mut toks = l.split_whitespace();
        let k: usize = toks
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(no, "bad face arity"))?;
        if k < 3 {
            return Err(bad(no, format!("face arity {k} < 3")));
        }
        let mut idx = Vec::with_capacity(k.min(64));
        for _ in 0..k {
            let tok = toks.next().ok_or_else(|| bad(no, "face indices truncated"))?;
            let i: usize = tok
                .parse()
                .map_err(|_| bad(no, format!("bad face index `{tok}`")))?;
            if i >= vertices.len() {
                return Err(bad(no, format!("face index {i} exceeds {nv} vertices")));
            }
            idx.push(i);
        }
        for k in 1..idx.len() - 1 {
            triangles.push([idx[0], idx[k], idx[k + 1]]);
        }
    }
    Ok(TriangleMesh { vertices, triangles })
}
