//! Synthetic shape families sampled uniformly by surface area.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::baselines::largest_remainder;
use crate::error::{Error, Result};
use crate::geom::{PointCloud, SimilarityTransform, Vec3};

/// Scale range of the random pose applied after normalization.
pub const POSE_SCALE: (f64, f64) = (0.8, 1.25);
/// Half-width of the random pose translation.
pub const POSE_TRANSLATION: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeFamily {
    Box,
    Cylinder,
    Sphere,
    Plane,
    /// Slab on four legs.
    Table,
    /// Base disk, pole and bulb.
    Lamp,
    LBracket,
}

impl ShapeFamily {
    pub const ALL: [ShapeFamily; 7] = [
        ShapeFamily::Box,
        ShapeFamily::Cylinder,
        ShapeFamily::Sphere,
        ShapeFamily::Plane,
        ShapeFamily::Table,
        ShapeFamily::Lamp,
        ShapeFamily::LBracket,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeFamily::Box => "box",
            ShapeFamily::Cylinder => "cylinder",
            ShapeFamily::Sphere => "sphere",
            ShapeFamily::Plane => "plane",
            ShapeFamily::Table => "table",
            ShapeFamily::Lamp => "lamp",
            ShapeFamily::LBracket => "l_bracket",
        }
    }
}

impl std::fmt::Display for ShapeFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ShapeFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut key = s.trim().to_ascii_lowercase().replace('-', "_");
        if key == "lbracket" {
            key = "l_bracket".into();
        }
        ShapeFamily::ALL
            .into_iter()
            .find(|f| f.name() == key)
            .ok_or_else(|| {
                let known: Vec<_> = ShapeFamily::ALL.iter().map(|f| f.name()).collect();
                Error::invalid(format!(
                    "unknown shape family {s:?} (known: {})",
                    known.join(", ")
                ))
            })
    }
}

/// Family-specific dimensions, before normalization.
///
/// | family    | dims[0]      | dims[1]      | dims[2]      |
/// |-----------|--------------|--------------|--------------|
/// | box       | size x       | size y       | size z       |
/// | cylinder  | radius       | height       | unused       |
/// | sphere    | radius       | unused       | unused       |
/// | plane     | size x       | size y       | unused       |
/// | table     | slab x       | slab y       | height       |
/// | lamp      | pole height  | bulb radius  | base radius  |
/// | l_bracket | arm x        | arm z        | width        |
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    pub dims: [f64; 3],
}

impl ShapeParams {
    pub fn random<R: Rng + ?Sized>(family: ShapeFamily, rng: &mut R) -> Self {
        let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
        let dims = match family {
            ShapeFamily::Box => [u(0.3, 1.0), u(0.3, 1.0), u(0.3, 1.0)],
            ShapeFamily::Cylinder => [u(0.15, 0.5), u(0.4, 1.2), 0.0],
            ShapeFamily::Sphere => [u(0.2, 1.0), 0.0, 0.0],
            ShapeFamily::Plane => [u(0.4, 1.0), u(0.4, 1.0), 0.0],
            ShapeFamily::Table => [u(0.8, 1.4), u(0.5, 1.0), u(0.5, 0.9)],
            ShapeFamily::Lamp => [u(0.8, 1.4), u(0.12, 0.25), u(0.15, 0.3)],
            ShapeFamily::LBracket => [u(0.5, 1.0), u(0.4, 0.9), u(0.2, 0.5)],
        };
        ShapeParams { dims }
    }

    fn check(&self, family: ShapeFamily) -> Result<()> {
        let used = match family {
            ShapeFamily::Sphere => 1,
            ShapeFamily::Cylinder | ShapeFamily::Plane => 2,
            _ => 3,
        };
        if self.dims[..used]
            .iter()
            .any(|d| !(d.is_finite() && *d > 0.0))
        {
            return Err(Error::invalid(format!(
                "{family} dimensions must be positive, got {:?}",
                self.dims
            )));
        }
        Ok(())
    }
}

/// A primitive surface patch.
#[derive(Clone, Debug, PartialEq)]
pub enum Surface {
    /// Parallelogram `o + a·u + b·v`, `a, b ∈ [0, 1]`.
    Rect {
        o: Vec3,
        u: Vec3,
        v: Vec3,
    },
    /// Flat disk spanned by the orthonormal pair `(e1, e2)`.
    Disk {
        c: Vec3,
        e1: Vec3,
        e2: Vec3,
        r: f64,
    },
    /// Lateral surface of a cylinder from `c` along the unit `axis`.
    Tube {
        c: Vec3,
        axis: Vec3,
        e1: Vec3,
        e2: Vec3,
        r: f64,
        h: f64,
    },
    Sphere {
        c: Vec3,
        r: f64,
    },
}

impl Surface {
    pub fn area(&self) -> f64 {
        match self {
            Surface::Rect { u, v, .. } => u.cross(v).norm(),
            Surface::Disk { r, .. } => PI * r * r,
            Surface::Tube { r, h, .. } => 2.0 * PI * r * h,
            Surface::Sphere { r, .. } => 4.0 * PI * r * r,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        match self {
            Surface::Rect { o, u, v } => o + u * rng.random::<f64>() + v * rng.random::<f64>(),
            Surface::Disk { c, e1, e2, r } => {
                let rho = r * rng.random::<f64>().sqrt();
                let t = 2.0 * PI * rng.random::<f64>();
                c + (e1 * t.cos() + e2 * t.sin()) * rho
            }
            Surface::Tube {
                c,
                axis,
                e1,
                e2,
                r,
                h,
            } => {
                let z = h * rng.random::<f64>();
                let t = 2.0 * PI * rng.random::<f64>();
                c + axis * z + (e1 * t.cos() + e2 * t.sin()) * *r
            }
            Surface::Sphere { c, r } => loop {
                let d = Vec3::from_fn(|_, _| rng.sample(StandardNormal));
                let n = d.norm();
                if n > 1e-9 {
                    break c + d * (r / n);
                }
            },
        }
    }

    /// Axis-aligned bounds of the exact surface.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        match self {
            Surface::Rect { o, u, v } => {
                let corners = [*o, o + u, o + v, o + u + v];
                let lo = corners
                    .iter()
                    .fold(Vec3::repeat(f64::INFINITY), |a, p| a.inf(p));
                let hi = corners
                    .iter()
                    .fold(Vec3::repeat(f64::NEG_INFINITY), |a, p| a.sup(p));
                (lo, hi)
            }
            Surface::Disk { c, e1, e2, r } => {
                let half = Vec3::from_fn(|i, _| r * e1[i].hypot(e2[i]));
                (c - half, c + half)
            }
            Surface::Tube {
                c,
                axis,
                e1,
                e2,
                r,
                h,
            } => {
                let half = Vec3::from_fn(|i, _| r * e1[i].hypot(e2[i]));
                let top = c + axis * *h;
                (c.inf(&top) - half, c.sup(&top) + half)
            }
            Surface::Sphere { c, r } => (c - Vec3::repeat(*r), c + Vec3::repeat(*r)),
        }
    }

    /// `s · x + shift` applied to the surface.
    fn scaled(&self, s: f64, shift: &Vec3) -> Surface {
        let p = |x: &Vec3| x * s + shift;
        match self {
            Surface::Rect { o, u, v } => Surface::Rect {
                o: p(o),
                u: u * s,
                v: v * s,
            },
            Surface::Disk { c, e1, e2, r } => Surface::Disk {
                c: p(c),
                e1: *e1,
                e2: *e2,
                r: r * s,
            },
            Surface::Tube {
                c,
                axis,
                e1,
                e2,
                r,
                h,
            } => Surface::Tube {
                c: p(c),
                axis: *axis,
                e1: *e1,
                e2: *e2,
                r: r * s,
                h: h * s,
            },
            Surface::Sphere { c, r } => Surface::Sphere { c: p(c), r: r * s },
        }
    }
}

/// A named surface of a composite shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Part {
    pub name: &'static str,
    pub surface: Surface,
}

fn part(name: &'static str, surface: Surface) -> Part {
    Part { name, surface }
}

fn box_faces(name: &'static str, lo: Vec3, size: Vec3) -> Vec<Part> {
    let (ex, ey, ez) = (Vec3::x() * size.x, Vec3::y() * size.y, Vec3::z() * size.z);
    vec![
        part(
            name,
            Surface::Rect {
                o: lo,
                u: ex,
                v: ey,
            },
        ),
        part(
            name,
            Surface::Rect {
                o: lo + ez,
                u: ex,
                v: ey,
            },
        ),
        part(
            name,
            Surface::Rect {
                o: lo,
                u: ex,
                v: ez,
            },
        ),
        part(
            name,
            Surface::Rect {
                o: lo + ey,
                u: ex,
                v: ez,
            },
        ),
        part(
            name,
            Surface::Rect {
                o: lo,
                u: ey,
                v: ez,
            },
        ),
        part(
            name,
            Surface::Rect {
                o: lo + ex,
                u: ey,
                v: ez,
            },
        ),
    ]
}

fn z_tube(name: &'static str, c: Vec3, r: f64, h: f64) -> Part {
    part(
        name,
        Surface::Tube {
            c,
            axis: Vec3::z(),
            e1: Vec3::x(),
            e2: Vec3::y(),
            r,
            h,
        },
    )
}

fn z_disk(name: &'static str, c: Vec3, r: f64) -> Part {
    part(
        name,
        Surface::Disk {
            c,
            e1: Vec3::x(),
            e2: Vec3::y(),
            r,
        },
    )
}

/// Surfaces of a family at its raw dimensions.
pub fn shape_parts(family: ShapeFamily, params: &ShapeParams) -> Result<Vec<Part>> {
    params.check(family)?;
    let [a, b, c] = params.dims;
    let parts = match family {
        ShapeFamily::Box => box_faces("face", Vec3::zeros(), Vec3::new(a, b, c)),
        ShapeFamily::Cylinder => vec![
            z_tube("side", Vec3::zeros(), a, b),
            z_disk("cap", Vec3::zeros(), a),
            z_disk("cap", Vec3::z() * b, a),
        ],
        ShapeFamily::Sphere => vec![part(
            "sphere",
            Surface::Sphere {
                c: Vec3::zeros(),
                r: a,
            },
        )],
        ShapeFamily::Plane => vec![part(
            "plane",
            Surface::Rect {
                o: Vec3::zeros(),
                u: Vec3::x() * a,
                v: Vec3::y() * b,
            },
        )],
        ShapeFamily::Table => {
            let thickness = 0.06 * a.max(b);
            let leg_r = 0.035 * a.max(b);
            let leg_h = c - thickness;
            let inset = 2.0 * leg_r;
            let mut parts = box_faces(
                "slab",
                Vec3::new(0.0, 0.0, leg_h),
                Vec3::new(a, b, thickness),
            );
            for (x, y) in [
                (inset, inset),
                (a - inset, inset),
                (inset, b - inset),
                (a - inset, b - inset),
            ] {
                parts.push(z_tube("leg", Vec3::new(x, y, 0.0), leg_r, leg_h));
            }
            parts
        }
        ShapeFamily::Lamp => {
            let pole_r = 0.03 * a;
            vec![
                z_disk("base", Vec3::zeros(), c),
                z_tube("pole", Vec3::zeros(), pole_r, a),
                part(
                    "bulb",
                    Surface::Sphere {
                        c: Vec3::z() * (a + b),
                        r: b,
                    },
                ),
            ]
        }
        ShapeFamily::LBracket => vec![
            part(
                "arm",
                Surface::Rect {
                    o: Vec3::zeros(),
                    u: Vec3::x() * a,
                    v: Vec3::y() * c,
                },
            ),
            part(
                "arm",
                Surface::Rect {
                    o: Vec3::zeros(),
                    u: Vec3::z() * b,
                    v: Vec3::y() * c,
                },
            ),
        ],
    };
    Ok(parts)
}

/// Scales and centres the parts so their exact bounding box is centred at
/// the origin with unit diagonal.
pub fn normalize_parts(parts: &[Part]) -> Result<Vec<Part>> {
    let (lo, hi) = parts.iter().map(|p| p.surface.bounds()).fold(
        (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
        |(lo, hi), (a, b)| (lo.inf(&a), hi.sup(&b)),
    );
    let diag = (hi - lo).norm();
    if !(diag.is_finite() && diag > 0.0) {
        return Err(Error::invalid("shape has a degenerate bounding box"));
    }
    let s = 1.0 / diag;
    let shift = -(lo + hi) * (0.5 * s);
    Ok(parts
        .iter()
        .map(|p| part(p.name, p.surface.scaled(s, &shift)))
        .collect())
}

/// A sampled shape together with how it was made.
#[derive(Clone, Debug)]
pub struct SynthShape {
    pub family: ShapeFamily,
    pub params: ShapeParams,
    /// Normalized surfaces, before the pose.
    pub parts: Vec<Part>,
    /// Points drawn from each part, aligned with `parts`.
    pub counts: Vec<usize>,
    /// Normalized sample, before the pose.
    pub canonical: PointCloud,
    pub pose: SimilarityTransform,
    /// `pose` applied to `canonical`.
    pub cloud: PointCloud,
}

/// Samples `n_points` from a family with dimensions drawn from the seeded
/// stream.
pub fn synth_random_shape(family: ShapeFamily, n_points: usize, seed: u64) -> Result<SynthShape> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ShapeParams::random(family, &mut rng);
    synth_with(family, params, n_points, &mut rng)
}

/// Samples `n_points` from the family at the given dimensions. Points are
/// split across surfaces in proportion to area (largest remainder), drawn
/// uniformly on each surface, normalized to unit bounding-box diagonal and
/// finally moved by a random similarity pose.
pub fn synth_shape(
    family: ShapeFamily,
    params: &ShapeParams,
    n_points: usize,
    seed: u64,
) -> Result<SynthShape> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    synth_with(family, *params, n_points, &mut rng)
}

fn synth_with(
    family: ShapeFamily,
    params: ShapeParams,
    n_points: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SynthShape> {
    if n_points == 0 {
        return Err(Error::invalid("a shape needs at least one point"));
    }
    let parts = normalize_parts(&shape_parts(family, &params)?)?;
    let areas: Vec<f64> = parts.iter().map(|p| p.surface.area()).collect();
    let counts = largest_remainder(&areas, n_points);
    let mut points = Vec::with_capacity(n_points);
    for (p, &n) in parts.iter().zip(&counts) {
        points.extend((0..n).map(|_| p.surface.sample(rng)));
    }
    let canonical = PointCloud::new(points);
    let pose = SimilarityTransform::random(rng, POSE_SCALE, POSE_TRANSLATION);
    let cloud = PointCloud::new(
        canonical
            .points
            .iter()
            .map(|p| pose.apply_point(p))
            .collect(),
    );
    Ok(SynthShape {
        family,
        params,
        parts,
        counts,
        canonical,
        pose,
        cloud,
    })
}
