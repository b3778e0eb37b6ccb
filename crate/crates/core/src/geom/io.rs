use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::{PointCloud, Vec3};

/// Parses the `.xyz` text format: one point per line, three whitespace
/// separated decimal floats. Blank lines are skipped.
pub fn parse_cloud(text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::ParseLine {
                line: lineno + 1,
                message: format!("expected 3 coordinates, found {}", fields.len()),
            });
        }
        let mut xyz = [0.0; 3];
        for (slot, field) in xyz.iter_mut().zip(&fields) {
            let v: f64 = field.parse().map_err(|_| Error::ParseLine {
                line: lineno + 1,
                message: format!("not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::ParseLine {
                    line: lineno + 1,
                    message: format!("non-finite coordinate {field:?}"),
                });
            }
            *slot = v;
        }
        points.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
    }
    Ok(PointCloud::new(points))
}

pub fn write_cloud(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * 32);
    for p in &cloud.points {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    out
}

pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    parse_cloud(&std::fs::read_to_string(path)?)
}

pub fn save_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    cloud.validate()?;
    std::fs::write(path, write_cloud(cloud))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_through_a_file() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cloud = PointCloud::new(
            (0..100)
                .map(|_| {
                    Vec3::new(
                        rng.random_range(-5.0..5.0),
                        rng.random(),
                        rng.random_range(-1e-3..1e3),
                    )
                })
                .collect(),
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.xyz");
        save_cloud(&cloud, &path).unwrap();
        let back = load_cloud(&path).unwrap();
        assert_eq!(back.len(), 100);
        for (a, b) in cloud.points.iter().zip(&back.points) {
            assert!((a - b).norm() <= 1e-6);
        }
    }

    #[test]
    fn two_fields_is_a_line_error() {
        match parse_cloud("0 0 0\n1 2\n") {
            Err(Error::ParseLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_cloud("1 2 x"),
            Err(Error::ParseLine { line: 1, .. })
        ));
        assert!(matches!(
            parse_cloud("1 2 inf"),
            Err(Error::ParseLine { line: 1, .. })
        ));
    }

    #[test]
    fn empty_file_is_an_empty_cloud() {
        let c = parse_cloud("").unwrap();
        assert!(c.is_empty());
        assert!(crate::geom::chamfer_distance(&c, &c).is_err());
    }

    #[test]
    fn format_is_space_separated() {
        let c = PointCloud::new(vec![Vec3::new(1.0, -0.5, 2.25)]);
        assert_eq!(write_cloud(&c), "1 -0.5 2.25\n");
    }
}
