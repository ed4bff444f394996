use std::io::Write;
use std::path::Path;

use super::IoError;
use crate::depthcodec::PointCloud;

/// Writes an ASCII PLY with x, y, z float properties, nine decimal
/// places per coordinate.
pub fn write_pointcloud_ply(cloud: &PointCloud, path: &Path) -> Result<(), IoError> {
    for p in &cloud.points {
        if p.iter().any(|c| !c.is_finite()) {
            return Err(IoError::NonFinitePoint);
        }
    }
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", cloud.points.len())?;
    writeln!(w, "property float x")?;
    writeln!(w, "property float y")?;
    writeln!(w, "property float z")?;
    writeln!(w, "end_header")?;
    for p in &cloud.points {
        writeln!(w, "{:.9} {:.9} {:.9}", p[0], p[1], p[2])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses the ASCII PLY subset produced by `write_pointcloud_ply`
/// (vertex positions only; other elements and properties rejected or
/// skipped).
pub fn parse_pointcloud_ply(text: &str) -> Result<PointCloud, IoError> {
    let bad = |line: usize, reason: &str| IoError::MalformedRecord {
        line,
        reason: reason.to_string(),
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (no, first) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
    if first != "ply" {
        return Err(bad(no, "missing `ply` keyword"));
    }
    let mut count: Option<usize> = None;
    let mut header_done = false;
    for (no, line) in lines.by_ref() {
        if line.starts_with("comment") || line.is_empty() {
            continue;
        }
        if line == "end_header" {
            header_done = true;
            break;
        }
        if let Some(rest) = line.strip_prefix("element vertex ") {
            count = Some(
                rest.trim()
                    .parse()
                    .map_err(|_| bad(no, "bad vertex count"))?,
            );
        } else if line.starts_with("element ") {
            return Err(bad(no, "only vertex elements are supported"));
        } else if line.starts_with("format ") && !line.contains("ascii") {
            return Err(bad(no, "only ascii format is supported"));
        }
    }
    if !header_done {
        return Err(bad(0, "missing end_header"));
    }
    let count = count.ok_or_else(|| bad(0, "missing element vertex line"))?;
    let mut points = Vec::with_capacity(count.min(1 << 22));
    for _ in 0..count {
        let (no, line) = lines
            .next()
            .ok_or_else(|| bad(0, "vertex list truncated"))?;
        let mut toks = line.split_whitespace();
        let mut p = [0.0f64; 3];
        for c in &mut p {
            let tok = toks.next().ok_or_else(|| bad(no, "vertex needs 3 floats"))?;
            *c = tok
                .parse()
                .map_err(|_| bad(no, "bad float"))?;
        }
        points.push(p);
    }
    Ok(PointCloud::from_points(points))
}

pub fn read_pointcloud_ply(path: &Path) -> Result<PointCloud, IoError> {
    parse_pointcloud_ply(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_cloud_is_a_valid_ply() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.ply");
        write_pointcloud_ply(&PointCloud::default(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("element vertex 0"));
        assert_eq!(read_pointcloud_ply(&path).unwrap().len(), 0);
    }

    #[test]
    fn header_advertises_count_and_body_matches() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("three.ply");
        let cloud = PointCloud::from_points(vec![
            [0.1, 0.2, 0.3],
            [-1.0, 2.0, -3.0],
            [2.499999999, 0.0, 0.5],
        ]);
        write_pointcloud_ply(&cloud, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("element vertex 3"));
        let body: Vec<&str> = text
            .lines()
            .skip_while(|l| *l != "end_header")
            .skip(1)
            .collect();
        assert_eq!(body.len(), 3);
    }

    #[test]
    fn round_trip_error_under_1e7() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.ply");
        let cloud = PointCloud::from_points(vec![
            [2.5123456789, -0.0000001234, 0.987654321],
            [std::f64::consts::PI, -2.7182818284, 0.0],
        ]);
        write_pointcloud_ply(&cloud, &path).unwrap();
        let back = read_pointcloud_ply(&path).unwrap();
        for (a, b) in cloud.points.iter().zip(&back.points) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn non_finite_points_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = PointCloud::from_points(vec![[f64::NAN, 0.0, 0.0]]);
        assert!(matches!(
            write_pointcloud_ply(&cloud, &dir.path().join("bad.ply")),
            Err(IoError::NonFinitePoint)
        ));
    }

    #[test]
    fn parser_rejects_garbage() {
        assert!(parse_pointcloud_ply("not a ply").is_err());
        assert!(parse_pointcloud_ply("ply\nend_header\n").is_err());
        assert!(parse_pointcloud_ply("ply\nelement vertex 2\nend_header\n0 0 0\n").is_err());
    }
}
