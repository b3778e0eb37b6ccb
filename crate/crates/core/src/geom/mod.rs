//! Point clouds, similarity transforms and the metrics defined on them.

mod chamfer;
mod io;
pub mod nn;
mod sampling;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub use chamfer::{chamfer_distance, chamfer_distance_with, weighted_chamfer_distance};
pub use io::{load_cloud, parse_cloud, save_cloud, write_cloud};
pub use sampling::{fps_downsample, fps_indices};

pub type Vec3 = Vector3<f64>;

/// An ordered list of 3D points, optionally labelled with the id of the
/// graph vertex that produced each point.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub source_vertex: Option<Vec<u32>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        PointCloud {
            points,
            source_vertex: None,
        }
    }

    pub fn with_labels(points: Vec<Vec3>, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != points.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} points",
                labels.len(),
                points.len()
            )));
        }
        Ok(PointCloud {
            points,
            source_vertex: Some(labels),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks finiteness and label/point length agreement.
    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self
            .points
            .iter()
            .position(|p| !p.iter().all(|c| c.is_finite()))
        {
            return Err(Error::invalid(format!(
                "point {i} has a non-finite coordinate"
            )));
        }
        if let Some(labels) = &self.source_vertex {
            if labels.len() != self.points.len() {
                return Err(Error::invalid(format!(
                    "{} source labels for {} points",
                    labels.len(),
                    self.points.len()
                )));
            }
        }
        Ok(())
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self.points.iter().fold(Vec3::zeros(), |acc, p| acc + p);
        Some(sum / self.points.len() as f64)
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.points.first()?;
        Some(
            self.points
                .iter()
                .fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))),
        )
    }

    pub fn bbox_diagonal(&self) -> f64 {
        self.bounds()
            .map(|(lo, hi)| (hi - lo).norm())
            .unwrap_or(0.0)
    }
}

/// `p ↦ scale · rotation · p + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimilarityTransform {
    pub rotation: Matrix3<f64>,
    pub scale: f64,
    pub translation: Vec3,
}

impl SimilarityTransform {
    pub fn new(rotation: Matrix3<f64>, scale: f64, translation: Vec3) -> Result<Self> {
        let t = SimilarityTransform {
            rotation,
            scale,
            translation,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn identity() -> Self {
        SimilarityTransform {
            rotation: Matrix3::identity(),
            scale: 1.0,
            translation: Vec3::zeros(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::invalid(format!(
                "scale must be positive, got {}",
                self.scale
            )));
        }
        if !self.translation.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("translation is not finite"));
        }
        let gram = self.rotation.transpose() * self.rotation;
        let off = (gram - Matrix3::identity()).abs().max();
        // NaN entries must fail too
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(off <= 1e-9) {
            return Err(Error::invalid("rotation is not orthonormal"));
        }
        if (self.rotation.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("rotation determinant is not +1"));
        }
        Ok(())
    }

    /// Uniformly distributed rotation, scale uniform in `scale_range`,
    /// translation uniform in `[-half_width, half_width]³`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, scale_range: (f64, f64), half_width: f64) -> Self {
        let rotation = random_rotation(rng);
        let scale = if scale_range.0 < scale_range.1 {
            rng.random_range(scale_range.0..=scale_range.1)
        } else {
            scale_range.0
        };
        let translation = if half_width > 0.0 {
            Vec3::from_fn(|_, _| rng.random_range(-half_width..=half_width))
        } else {
            Vec3::zeros()
        };
        SimilarityTransform {
            rotation,
            scale,
            translation,
        }
    }

    pub fn apply_point(&self, p: &Vec3) -> Vec3 {
        self.scale * (self.rotation * p) + self.translation
    }
}

/// Haar-uniform rotation from a normalized Gaussian quaternion.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Matrix3<f64> {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
        if quat.norm() > 1e-6 {
            return UnitQuaternion::from_quaternion(quat)
                .to_rotation_matrix()
                .into_inner();
        }
    }
}

pub fn apply_similarity(cloud: &PointCloud, t: &SimilarityTransform) -> Result<PointCloud> {
    cloud.validate()?;
    t.validate()?;
    Ok(PointCloud {
        points: cloud.points.iter().map(|p| t.apply_point(p)).collect(),
        source_vertex: cloud.source_vertex.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn identity_transform_keeps_cloud() {
        let cloud = PointCloud::with_labels(
            vec![Vec3::new(1.0, -2.0, 3.5), Vec3::new(0.0, 0.25, -1.0)],
            vec![4, 7],
        )
        .unwrap();
        let out = apply_similarity(&cloud, &SimilarityTransform::identity()).unwrap();
        assert_eq!(out, cloud);
    }

    #[test]
    fn pure_scale() {
        let t = SimilarityTransform::new(Matrix3::identity(), 2.0, Vec3::zeros()).unwrap();
        let out = apply_similarity(&PointCloud::new(vec![Vec3::x()]), &t).unwrap();
        assert_eq!(out.points, vec![Vec3::new(2.0, 0.0, 0.0)]);
    }

    #[test]
    fn quarter_turn_about_z() {
        let rot = nalgebra::Rotation3::from_axis_angle(&Vec3::z_axis(), FRAC_PI_2).into_inner();
        let t = SimilarityTransform::new(rot, 1.0, Vec3::zeros()).unwrap();
        let out = apply_similarity(&PointCloud::new(vec![Vec3::x()]), &t).unwrap();
        assert!((out.points[0] - Vec3::y()).norm() < 1e-12);
    }

    #[test]
    fn rejects_non_finite_points() {
        let cloud = PointCloud::new(vec![Vec3::new(f64::NAN, 0.0, 0.0)]);
        assert!(matches!(
            apply_similarity(&cloud, &SimilarityTransform::identity()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn rejects_bad_transforms() {
        let mut m = Matrix3::identity();
        m[(0, 0)] = -1.0;
        assert!(SimilarityTransform::new(m, 1.0, Vec3::zeros()).is_err());
        assert!(SimilarityTransform::new(Matrix3::identity(), 0.0, Vec3::zeros()).is_err());
        assert!(SimilarityTransform::new(Matrix3::identity() * 1.1, 1.0, Vec3::zeros()).is_err());
    }

    #[test]
    fn random_transforms_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let t = SimilarityTransform::random(&mut rng, (0.5, 2.0), 10.0);
            t.validate().unwrap();
            assert!((0.5..=2.0).contains(&t.scale));
        }
    }
}
