//! Planar rigid-body geometry: SE(2) poses, the peg and hole shapes, and
//! penetration queries of peg boundary points against the hole plate.
//!
//! Frames: the peg frame {P} sits at the peg center with its long axis along
//! +y and the two grasp handles at `(-r, 0)` and `(r, 0)`. The hole frame {H}
//! sits at the center of the hole mouth on the plate's top face; plate
//! material occupies `y <= 0` minus the hole cavities.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;

/// Maps an angle to `(-π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let r = angle.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// `(a, b) -> (-b, a)`, counter-clockwise quarter turn.
#[inline]
pub fn perp(v: &Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

#[inline]
pub fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// An element of SE(2). `theta` is kept unwrapped so that continuation along
/// a rollout never jumps by 2π; use [`Pose2::normalized`] for display.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub const IDENTITY: Pose2 = Pose2 {
        x: 0.0,
        y: 0.0,
        theta: 0.0,
    };

    pub const fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn from_vector(v: &nalgebra::Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn to_vector(&self) -> nalgebra::Vector3<f64> {
        nalgebra::Vector3::new(self.x, self.y, self.theta)
    }

    #[inline]
    pub fn translation(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let p = self.transform_point(&other.translation());
        Pose2::new(p.x, p.y, self.theta + other.theta)
    }

    pub fn inverse(&self) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        // -R(θ)ᵀ p
        let x = -(c * self.x + s * self.y);
        let y = -(-s * self.x + c * self.y);
        Pose2::new(x, y, -self.theta)
    }

    #[inline]
    pub fn transform_point(&self, p: &Vec2) -> Vec2 {
        let (s, c) = self.theta.sin_cos();
        Vec2::new(self.x + c * p.x - s * p.y, self.y + s * p.x + c * p.y)
    }

    #[inline]
    pub fn transform_vector(&self, v: &Vec2) -> Vec2 {
        let (s, c) = self.theta.sin_cos();
        Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y)
    }

    /// Maps a world point into this frame.
    #[inline]
    pub fn inverse_transform_point(&self, p: &Vec2) -> Vec2 {
        let (s, c) = self.theta.sin_cos();
        let dx = p.x - self.x;
        let dy = p.y - self.y;
        Vec2::new(c * dx + s * dy, -s * dx + c * dy)
    }

    #[inline]
    pub fn inverse_transform_vector(&self, v: &Vec2) -> Vec2 {
        let (s, c) = self.theta.sin_cos();
        Vec2::new(c * v.x + s * v.y, -s * v.x + c * v.y)
    }

    pub fn normalized(&self) -> Pose2 {
        Pose2::new(self.x, self.y, wrap_angle(self.theta))
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

pub fn compose(a: &Pose2, b: &Pose2) -> Pose2 {
    a.compose(b)
}

/// A rectangular tooth hanging below the peg body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prong {
    /// Center of the prong along the peg x-axis [m].
    pub offset: f64,
    /// [m]
    pub width: f64,
    /// [m]
    pub length: f64,
}

/// Peg outline. Without prongs it is the rectangle `[-r, r] × [-h, h]`; with
/// prongs, each prong extends the bottom face downward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PegShape {
    /// Half of the grasp width `r` [m].
    pub half_width: f64,
    /// [m]
    pub half_height: f64,
    #[serde(default)]
    pub prongs: Vec<Prong>,
}

impl PegShape {
    pub fn rectangle(half_width: f64, half_height: f64) -> Self {
        Self {
            half_width,
            half_height,
            prongs: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.half_width;
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::config("world.peg.half_width", "must be > 0"));
        }
        if !(self.half_height > 0.0) || !self.half_height.is_finite() {
            return Err(Error::config("world.peg.half_height", "must be > 0"));
        }
        let mut spans = Vec::with_capacity(self.prongs.len());
        for (i, p) in self.prongs.iter().enumerate() {
            let key = format!("world.peg.prongs[{i}]");
            if !(p.width > 0.0) || !(p.length > 0.0) {
                return Err(Error::config(key, "width and length must be > 0"));
            }
            if p.offset.abs() > r {
                return Err(Error::config(key, "offset must lie within [-r, r]"));
            }
            let lo = p.offset - 0.5 * p.width;
            let hi = p.offset + 0.5 * p.width;
            if lo < -r - 1e-12 || hi > r + 1e-12 {
                return Err(Error::config(key, "prong extends past the peg body"));
            }
            spans.push((lo, hi, i));
        }
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in spans.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(Error::config(
                    format!("world.peg.prongs[{}]", w[1].2),
                    "prongs overlap",
                ));
            }
        }
        Ok(())
    }

    /// Width of the feature that enters a hole: the prong width, or the body
    /// width for a plain peg.
    pub fn insertion_width(&self) -> f64 {
        self.prongs
            .first()
            .map(|p| p.width)
            .unwrap_or(2.0 * self.half_width)
    }

    /// Distance from the peg origin down to the lowest tip.
    pub fn tip_depth(&self) -> f64 {
        self.half_height + self.prongs.iter().map(|p| p.length).fold(0.0, f64::max)
    }

    /// Body-frame handle attachment points `(-r, 0)` and `(r, 0)`.
    pub fn handle_points(&self) -> (Vec2, Vec2) {
        (
            Vec2::new(-self.half_width, 0.0),
            Vec2::new(self.half_width, 0.0),
        )
    }

    /// Counter-clockwise outline starting at the top-right corner.
    pub fn outline(&self) -> Vec<Vec2> {
        let r = self.half_width;
        let h = self.half_height;
        let mut pts = vec![Vec2::new(r, h), Vec2::new(-r, h), Vec2::new(-r, -h)];
        let mut prongs = self.prongs.clone();
        prongs.sort_by(|a, b| a.offset.total_cmp(&b.offset));
        for p in &prongs {
            let lo = p.offset - 0.5 * p.width;
            let hi = p.offset + 0.5 * p.width;
            let bottom = -h - p.length;
            pts.push(Vec2::new(lo, -h));
            pts.push(Vec2::new(lo, bottom));
            pts.push(Vec2::new(hi, bottom));
            pts.push(Vec2::new(hi, -h));
        }
        pts.push(Vec2::new(r, -h));
        pts.dedup_by(|a, b| (*a - *b).norm() < 1e-12);
        if pts.len() > 1 && (pts[0] - pts[pts.len() - 1]).norm() < 1e-12 {
            pts.pop();
        }
        pts
    }

    /// Outline vertices plus edge samples no further than `spacing` apart.
    pub fn boundary_samples(&self, spacing: f64) -> Vec<Vec2> {
        let outline = self.outline();
        let n = outline.len();
        let mut out = Vec::new();
        for i in 0..n {
            let a = outline[i];
            let b = outline[(i + 1) % n];
            let len = (b - a).norm();
            if len < 1e-12 {
                continue;
            }
            let segments = (len / spacing).ceil().max(1.0) as usize;
            for k in 0..segments {
                out.push(a + (b - a) * (k as f64 / segments as f64));
            }
        }
        out
    }

    /// Lowest points of the peg in its own frame (prong or body corners).
    pub fn tip_points(&self) -> Vec<Vec2> {
        let h = self.half_height;
        if self.prongs.is_empty() {
            return vec![
                Vec2::new(-self.half_width, -h),
                Vec2::new(self.half_width, -h),
            ];
        }
        self.prongs
            .iter()
            .flat_map(|p| {
                let y = -h - p.length;
                [
                    Vec2::new(p.offset - 0.5 * p.width, y),
                    Vec2::new(p.offset + 0.5 * p.width, y),
                ]
            })
            .collect()
    }
}

/// World-frame handle contact points `c1`, `c2` of a peg at pose `z`.
pub fn handle_contact_points(peg: &PegShape, z: &Pose2) -> (Vec2, Vec2) {
    let (a, b) = peg.handle_points();
    (z.transform_point(&a), z.transform_point(&b))
}

/// One hole cut into the plate, located along the plate's x-axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoleSlot {
    /// Slot center relative to the hole frame origin, along x [m].
    #[serde(default)]
    pub offset: f64,
    /// [m]
    pub width: f64,
    /// [m]
    pub depth: f64,
    /// Horizontal extent of each chamfer [m].
    pub chamfer_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoleShape {
    /// Hole frame {H}: the mouth center of the reference slot.
    pub mouth_center: Pose2,
    /// Chamfer face angle measured from the vertical wall [rad].
    pub chamfer_angle: f64,
    pub slots: Vec<HoleSlot>,
}

impl HoleShape {
    pub fn single(mouth_center: Pose2, width: f64, depth: f64, chamfer_width: f64) -> Self {
        Self {
            mouth_center,
            chamfer_angle: PI / 4.0,
            slots: vec![HoleSlot {
                offset: 0.0,
                width,
                depth,
                chamfer_width,
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mouth_center.is_finite() {
            return Err(Error::config("world.hole.mouth_center", "must be finite"));
        }
        if !(self.chamfer_angle > 0.0 && self.chamfer_angle < PI / 2.0) {
            return Err(Error::config(
                "world.hole.chamfer_angle",
                "must lie in (0, π/2)",
            ));
        }
        if self.slots.is_empty() {
            return Err(Error::config("world.hole.slots", "at least one slot required"));
        }
        for (i, s) in self.slots.iter().enumerate() {
            let key = |f: &str| format!("world.hole.slots[{i}].{f}");
            if !(s.width > 0.0) {
                return Err(Error::config(key("width"), "must be > 0"));
            }
            if !(s.depth > 0.0) {
                return Err(Error::config(key("depth"), "must be > 0"));
            }
            if !(s.chamfer_width >= 0.0) {
                return Err(Error::config(key("chamfer_width"), "must be >= 0"));
            }
            if s.chamfer_height(self.chamfer_angle) > s.depth {
                return Err(Error::config(key("chamfer_width"), "chamfer deeper than hole"));
            }
        }
        let mut spans: Vec<(f64, f64, usize)> = self
            .slots
            .iter()
            .enumerate()
            .map(|(i, s)| (s.offset - s.mouth_half_width(), s.offset + s.mouth_half_width(), i))
            .collect();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in spans.windows(2) {
            if w[1].0 <= w[0].1 {
                return Err(Error::config(
                    format!("world.hole.slots[{}]", w[1].2),
                    "slot mouths overlap",
                ));
            }
        }
        Ok(())
    }

    /// Chamfer width divided by the width of the peg feature entering it.
    pub fn chamfer_ratio(&self, peg: &PegShape) -> f64 {
        self.slots[0].chamfer_width / peg.insertion_width()
    }

    pub fn set_chamfer_ratio(&mut self, peg: &PegShape, ratio: f64) {
        let w = ratio * peg.insertion_width();
        for s in &mut self.slots {
            s.chamfer_width = w;
        }
    }

    pub fn depth(&self) -> f64 {
        self.slots[0].depth
    }
}

impl HoleSlot {
    pub fn chamfer_height(&self, chamfer_angle: f64) -> f64 {
        self.chamfer_width / chamfer_angle.tan()
    }

    pub fn mouth_half_width(&self) -> f64 {
        0.5 * self.width + self.chamfer_width
    }
}

/// Environment surface that a peg point penetrates. The declaration order is
/// the tie-break order for equidistant features.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "kebab-case")]
pub enum SurfaceId {
    LeftWall,
    RightWall,
    ChamferLeft,
    ChamferRight,
    Floor,
    TopFace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactRecord {
    pub point: Vec2,
    /// Unit normal pointing out of the environment material.
    pub normal: Vec2,
    pub penetration: f64,
    pub surface: SurfaceId,
    pub mu: f64,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: Vec2,
    b: Vec2,
    normal: Vec2,
    surface: SurfaceId,
}

/// Point penetration in the hole frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penetration {
    pub depth: f64,
    /// Hole-frame escape direction.
    pub normal: Vec2,
    pub surface: SurfaceId,
}

/// Hole plate boundary as segment primitives, expressed in the hole frame.
#[derive(Debug, Clone)]
pub struct Environment {
    frame: Pose2,
    segments: Vec<Segment>,
    cavities: Vec<Cavity>,
}

#[derive(Debug, Clone, Copy)]
struct Cavity {
    offset: f64,
    half_width: f64,
    depth: f64,
    chamfer_width: f64,
    chamfer_height: f64,
}

impl Cavity {
    #[inline]
    fn contains(&self, x: f64, y: f64) -> bool {
        if y <= -self.depth || y > 0.0 {
            return false;
        }
        let lx = (x - self.offset).abs();
        let hw = if self.chamfer_height > 0.0 && y > -self.chamfer_height {
            self.half_width + self.chamfer_width * (y + self.chamfer_height) / self.chamfer_height
        } else {
            self.half_width
        };
        lx < hw
    }
}

/// Half-length of the top-face segments; far beyond any reachable pose.
const PLATE_EXTENT: f64 = 10.0;

impl Environment {
    pub fn new(hole: &HoleShape) -> Self {
        let mut slots = hole.slots.clone();
        slots.sort_by(|a, b| a.offset.total_cmp(&b.offset));
        let mut segments = Vec::new();
        let mut cavities = Vec::new();
        let mut top_start = -PLATE_EXTENT;
        for s in &slots {
            let hw = 0.5 * s.width;
            let ch = s.chamfer_height(hole.chamfer_angle);
            let cw = s.chamfer_width;
            let o = s.offset;
            let mouth_l = Vec2::new(o - hw - cw, 0.0);
            let wall_top_l = Vec2::new(o - hw, -ch);
            let floor_l = Vec2::new(o - hw, -s.depth);
            let floor_r = Vec2::new(o + hw, -s.depth);
            let wall_top_r = Vec2::new(o + hw, -ch);
            let mouth_r = Vec2::new(o + hw + cw, 0.0);
            push_segment(&mut segments, Vec2::new(top_start, 0.0), mouth_l, SurfaceId::TopFace);
            push_segment(&mut segments, mouth_l, wall_top_l, SurfaceId::ChamferLeft);
            push_segment(&mut segments, wall_top_l, floor_l, SurfaceId::LeftWall);
            push_segment(&mut segments, floor_l, floor_r, SurfaceId::Floor);
            push_segment(&mut segments, floor_r, wall_top_r, SurfaceId::RightWall);
            push_segment(&mut segments, wall_top_r, mouth_r, SurfaceId::ChamferRight);
            top_start = mouth_r.x;
            cavities.push(Cavity {
                offset: o,
                half_width: hw,
                depth: s.depth,
                chamfer_width: cw,
                chamfer_height: ch,
            });
        }
        push_segment(
            &mut segments,
            Vec2::new(top_start, 0.0),
            Vec2::new(PLATE_EXTENT, 0.0),
            SurfaceId::TopFace,
        );
        Self {
            frame: hole.mouth_center,
            segments,
            cavities,
        }
    }

    pub fn frame(&self) -> &Pose2 {
        &self.frame
    }

    /// Whether a hole-frame point lies inside plate material.
    #[inline]
    pub fn in_material(&self, p: &Vec2) -> bool {
        p.y <= 0.0 && !self.cavities.iter().any(|c| c.contains(p.x, p.y))
    }

    /// Penetration of a hole-frame point, `None` when it is in free space.
    pub fn penetration_local(&self, p: &Vec2) -> Option<Penetration> {
        if !self.in_material(p) {
            return None;
        }
        let mut best: Option<(f64, usize, Vec2, bool)> = None;
        for (i, s) in self.segments.iter().enumerate() {
            let (d, q, interior) = closest_on_segment(p, &s.a, &s.b);
            let better = match best {
                None => true,
                Some((bd, bi, _, _)) => {
                    d < bd || (d == bd && s.surface < self.segments[bi].surface)
                }
            };
            if better {
                best = Some((d, i, q, interior));
            }
        }
        let (depth, idx, q, interior) = best?;
        if depth <= 0.0 {
            return None;
        }
        let seg = &self.segments[idx];
        let normal = if interior {
            seg.normal
        } else {
            (q - p) / depth
        };
        Some(Penetration {
            depth,
            normal,
            surface: seg.surface,
        })
    }

    /// Penetration depth only; the hot path of the contact penalty.
    #[inline]
    pub fn depth_local(&self, p: &Vec2) -> f64 {
        if !self.in_material(p) {
            return 0.0;
        }
        self.segments
            .iter()
            .map(|s| closest_on_segment(p, &s.a, &s.b).0)
            .fold(f64::INFINITY, f64::min)
    }

    /// Penetration depth, hole-frame escape direction and whether the
    /// closest boundary point lies inside a face (rather than on a vertex).
    /// The direction is the negated gradient of the depth.
    #[inline]
    pub fn depth_normal_local(&self, p: &Vec2) -> Option<(f64, Vec2, bool)> {
        if !self.in_material(p) {
            return None;
        }
        let mut best = (f64::INFINITY, *p, false);
        for s in &self.segments {
            let (d, q, interior) = closest_on_segment(p, &s.a, &s.b);
            if d < best.0 {
                best = (d, q, interior);
            }
        }
        let (d, q, interior) = best;
        (d > 0.0).then(|| (d, (q - p) / d, interior))
    }

    /// Contacts of world-frame points, sorted by surface then point.
    pub fn contacts_world(&self, points: impl Iterator<Item = Vec2>, mu: f64) -> Vec<ContactRecord> {
        let mut out: Vec<ContactRecord> = points
            .filter_map(|w| {
                let local = self.frame.inverse_transform_point(&w);
                self.penetration_local(&local).map(|pen| ContactRecord {
                    point: w,
                    normal: self.frame.transform_vector(&pen.normal),
                    penetration: pen.depth,
                    surface: pen.surface,
                    mu,
                })
            })
            .collect();
        out.sort_by(|a, b| {
            a.surface
                .cmp(&b.surface)
                .then(a.point.x.total_cmp(&b.point.x))
                .then(a.point.y.total_cmp(&b.point.y))
        });
        out
    }
}

fn push_segment(segments: &mut Vec<Segment>, a: Vec2, b: Vec2, surface: SurfaceId) {
    let d = b - a;
    let len = d.norm();
    if len < 1e-15 {
        return;
    }
    // The boundary is traversed left to right with material on the right-hand
    // side, so the free-space normal is the left-hand perpendicular.
    let normal = perp(&d) / len;
    segments.push(Segment {
        a,
        b,
        normal,
        surface,
    });
}

/// Distance, closest point and whether it falls strictly inside the segment.
#[inline]
fn closest_on_segment(p: &Vec2, a: &Vec2, b: &Vec2) -> (f64, Vec2, bool) {
    let ab = b - a;
    let t = (p - a).dot(&ab) / ab.norm_squared();
    let (q, interior) = if t <= 0.0 {
        (*a, false)
    } else if t >= 1.0 {
        (*b, false)
    } else {
        (a + ab * t, true)
    };
    ((p - q).norm(), q, interior)
}

/// Body-frame peg boundary samples ready for repeated contact queries.
#[derive(Debug, Clone)]
pub struct PegModel {
    pub shape: PegShape,
    pub samples: Vec<Vec2>,
}

impl PegModel {
    pub fn new(shape: &PegShape, spacing: f64) -> Self {
        Self {
            shape: shape.clone(),
            samples: shape.boundary_samples(spacing),
        }
    }
}

/// Contacts between the sampled peg boundary at pose `z` and the hole plate.
pub fn environment_contacts(
    peg: &PegShape,
    hole: &HoleShape,
    z: &Pose2,
    spacing: f64,
    mu: f64,
) -> Vec<ContactRecord> {
    let model = PegModel::new(peg, spacing);
    let env = Environment::new(hole);
    env.contacts_world(model.samples.iter().map(|p| z.transform_point(p)), mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn peg() -> PegShape {
        PegShape::rectangle(0.0375, 0.05)
    }

    fn hole() -> HoleShape {
        HoleShape::single(Pose2::IDENTITY, 0.076, 0.03, 0.0096)
    }

    #[test]
    fn compose_examples() {
        let p = Pose2::IDENTITY.compose(&Pose2::new(1.0, 2.0, PI / 2.0));
        assert_eq!(p, Pose2::new(1.0, 2.0, PI / 2.0));
        let q = Pose2::new(1.0, 0.0, PI / 2.0).compose(&Pose2::new(1.0, 0.0, 0.0));
        assert_abs_diff_eq!(q.x, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q.y, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q.theta, PI / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_abs_diff_eq!(wrap_angle(-PI), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(0.1 + 4.0 * PI), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn handle_points_examples() {
        let peg = peg();
        let (c1, c2) = handle_contact_points(&peg, &Pose2::IDENTITY);
        assert_eq!((c1, c2), (Vec2::new(-0.0375, 0.0), Vec2::new(0.0375, 0.0)));

        let (c1, c2) = handle_contact_points(&peg, &Pose2::new(0.0, 0.0, PI / 2.0));
        assert_abs_diff_eq!(c1, Vec2::new(0.0, -0.0375), epsilon = 1e-15);
        assert_abs_diff_eq!(c2, Vec2::new(0.0, 0.0375), epsilon = 1e-15);

        let wide = PegShape::rectangle(0.05, 0.05);
        let (c1, c2) = handle_contact_points(&wide, &Pose2::new(0.1, 0.2, PI));
        assert_abs_diff_eq!(c1, Vec2::new(0.15, 0.2), epsilon = 1e-15);
        assert_abs_diff_eq!(c2, Vec2::new(0.05, 0.2), epsilon = 1e-15);
    }

    #[test]
    fn hovering_peg_has_no_contacts() {
        let z = Pose2::new(0.0, 0.05 + 0.010, 0.0);
        assert!(environment_contacts(&peg(), &hole(), &z, 1e-3, 0.3).is_empty());
    }

    #[test]
    fn corner_on_top_face() {
        // Bottom-left corner 0.5 mm into the top face, 5 mm left of the mouth.
        // The peg is tilted so the neighbouring edge samples clear the face.
        let hole = hole();
        let peg = peg();
        let mouth = hole.slots[0].mouth_half_width();
        let corner = Vec2::new(-mouth - 0.005, -0.0005);
        let theta = 0.6;
        let body = Vec2::new(-peg.half_width, -peg.half_height);
        let origin = corner - Pose2::new(0.0, 0.0, theta).transform_vector(&body);
        let z = Pose2::new(origin.x, origin.y, theta);
        let contacts = environment_contacts(&peg, &hole, &z, 1e-3, 0.3);
        assert_eq!(contacts.len(), 1, "{contacts:?}");
        let c = contacts[0];
        assert_eq!(c.surface, SurfaceId::TopFace);
        assert_abs_diff_eq!(c.normal, Vec2::new(0.0, 1.0), epsilon = 1e-12);
        assert_abs_diff_eq!(c.penetration, 0.0005, epsilon = 1e-12);
    }

    #[test]
    fn flat_corner_on_top_face_is_half_millimetre() {
        let hole = hole();
        let env = Environment::new(&hole);
        let mouth = hole.slots[0].mouth_half_width();
        let p = Vec2::new(-mouth - 0.005, -0.0005);
        let pen = env.penetration_local(&p).unwrap();
        assert_eq!(pen.surface, SurfaceId::TopFace);
        assert_abs_diff_eq!(pen.depth, 0.0005, epsilon = 1e-15);
        assert_eq!(pen.normal, Vec2::new(0.0, 1.0));
    }

    /// Brute-force penetration: distance to the nearest grid node in the
    /// closure of free space.
    fn grid_penetration(env_hole: &HoleShape, p: &Vec2, step: f64, radius: f64) -> f64 {
        let s = env_hole.slots[0];
        let ch = s.chamfer_width / env_hole.chamfer_angle.tan();
        let free = |x: f64, y: f64| -> bool {
            if y >= 0.0 {
                return true;
            }
            if y < -s.depth {
                return false;
            }
            let hw = if y > -ch {
                0.5 * s.width + s.chamfer_width * (y + ch) / ch
            } else {
                0.5 * s.width
            };
            (x - s.offset).abs() <= hw + 1e-15
        };
        let n = (radius / step).ceil() as i64;
        let mut best = f64::INFINITY;
        for i in -n..=n {
            for j in -n..=n {
                let x = p.x + i as f64 * step;
                let y = p.y + j as f64 * step;
                if free(x, y) {
                    best = best.min(((x - p.x).powi(2) + (y - p.y).powi(2)).sqrt());
                }
            }
        }
        best
    }

    #[test]
    fn chamfer_penetration_matches_plane_distance_and_grid_oracle() {
        let hole = hole();
        let env = Environment::new(&hole);
        let s = hole.slots[0];
        // A point inside the plate just behind the left chamfer face.
        let on_face = Vec2::new(-0.5 * s.width - 0.5 * s.chamfer_width, -0.5 * s.chamfer_width);
        let n = Vec2::new(1.0, 1.0) / 2f64.sqrt();
        let p = on_face - n * 0.0004;
        let pen = env.penetration_local(&p).unwrap();
        assert_eq!(pen.surface, SurfaceId::ChamferLeft);
        assert_abs_diff_eq!(pen.depth, 0.0004, epsilon = 1e-12);
        assert_abs_diff_eq!(pen.normal, n, epsilon = 1e-12);
        let oracle = grid_penetration(&hole, &p, 1e-5, 0.0006);
        assert!((pen.depth - oracle).abs() <= 1e-5, "{} vs {}", pen.depth, oracle);
    }

    #[test]
    fn grid_oracle_agrees_across_features() {
        let hole = hole();
        let env = Environment::new(&hole);
        let s = hole.slots[0];
        let hw = 0.5 * s.width;
        let probes = [
            Vec2::new(-hw - 0.0003, -0.02),             // behind the left wall
            Vec2::new(hw + 0.0002, -0.015),             // behind the right wall
            Vec2::new(0.01, -s.depth - 0.0005),         // under the floor
            Vec2::new(-hw - 0.0003, -s.depth - 0.0003), // floor/wall corner
            Vec2::new(hw + s.chamfer_width + 0.004, -0.0002),
            Vec2::new(hw + 0.5 * s.chamfer_width + 0.0003, -0.5 * s.chamfer_width),
        ];
        for p in probes {
            let pen = env.penetration_local(&p).expect("probe inside material");
            let oracle = grid_penetration(&hole, &p, 1e-5, 0.0008);
            assert!(
                (pen.depth - oracle).abs() <= 1e-5,
                "{p:?}: {} vs {}",
                pen.depth,
                oracle
            );
        }
    }

    #[test]
    fn outline_of_two_prong_peg() {
        let peg = PegShape {
            half_width: 0.05,
            half_height: 0.03,
            prongs: vec![
                Prong { offset: -0.025, width: 0.02, length: 0.03 },
                Prong { offset: 0.025, width: 0.02, length: 0.03 },
            ],
        };
        peg.validate().unwrap();
        assert_eq!(peg.outline().len(), 12);
        assert_abs_diff_eq!(peg.tip_depth(), 0.06, epsilon = 1e-15);
        assert_eq!(peg.tip_points().len(), 4);
        let samples = peg.boundary_samples(1e-3);
        for w in samples.windows(2) {
            assert!((w[1] - w[0]).norm() <= 1e-3 + 1e-12);
        }
    }

    #[test]
    fn validation_rejects_bad_shapes() {
        let mut p = peg();
        p.half_width = 0.0;
        assert!(p.validate().is_err());
        let p = PegShape {
            half_width: 0.05,
            half_height: 0.03,
            prongs: vec![
                Prong { offset: 0.0, width: 0.02, length: 0.01 },
                Prong { offset: 0.01, width: 0.02, length: 0.01 },
            ],
        };
        assert!(p.validate().is_err());
        let mut h = hole();
        h.slots[0].chamfer_width = -1e-3;
        let err = h.validate().unwrap_err().to_string();
        assert!(err.contains("chamfer_width"), "{err}");
    }

    #[test]
    fn chamfer_ratio_round_trip() {
        let mut h = hole();
        h.set_chamfer_ratio(&peg(), 0.256);
        assert_abs_diff_eq!(h.chamfer_ratio(&peg()), 0.256, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn group_law(ax in -1.0..1.0f64, ay in -1.0..1.0f64, at in -7.0..7.0f64,
                     bx in -1.0..1.0f64, by in -1.0..1.0f64, bt in -7.0..7.0f64) {
            let a = Pose2::new(ax, ay, at);
            let b = Pose2::new(bx, by, bt);
            let c = a.compose(&a.inverse().compose(&b));
            prop_assert!((c.x - b.x).abs() < 1e-12);
            prop_assert!((c.y - b.y).abs() < 1e-12);
            prop_assert!((c.theta - b.theta).abs() < 1e-12);
            let id = a.compose(&a.inverse());
            prop_assert!(id.x.abs() < 1e-12 && id.y.abs() < 1e-12 && id.theta.abs() < 1e-12);
        }

        #[test]
        fn handle_separation_is_rigid(x in -1.0..1.0f64, y in -1.0..1.0f64, t in -10.0..10.0f64,
                                      r in 0.001..0.2f64) {
            let peg = PegShape::rectangle(r, 0.05);
            let (c1, c2) = handle_contact_points(&peg, &Pose2::new(x, y, t));
            prop_assert!(((c1 - c2).norm() - 2.0 * r).abs() < 1e-12);
        }

        #[test]
        fn contact_normals_are_unit_and_escape(x in -0.06..0.06f64, y in 0.015..0.055f64,
                                               t in -0.3..0.3f64) {
            let z = Pose2::new(x, y, t);
            let hole = hole();
            let env = Environment::new(&hole);
            for c in environment_contacts(&peg(), &hole, &z, 1e-3, 0.3) {
                prop_assert!((c.normal.norm() - 1.0).abs() < 1e-12);
                prop_assert!(c.penetration > 0.0);
                // Moving the point a little along the normal reduces penetration.
                let moved = c.point + c.normal * (0.5 * c.penetration);
                let d = env.depth_local(&env.frame().inverse_transform_point(&moved));
                prop_assert!(d < c.penetration);
            }
        }

        #[test]
        fn penetration_is_continuous(x in -0.06..0.06f64, y in 0.015..0.055f64,
                                     t in -0.3..0.3f64, dir in 0..3usize) {
            let z = Pose2::new(x, y, t);
            let hole = hole();
            let env = Environment::new(&hole);
            let model = PegModel::new(&peg(), 1e-3);
            let mut dz = z;
            match dir { 0 => dz.x += 1e-8, 1 => dz.y += 1e-8, _ => dz.theta += 1e-8 }
            for p in &model.samples {
                let a = env.depth_local(&env.frame().inverse_transform_point(&z.transform_point(p)));
                let b = env.depth_local(&env.frame().inverse_transform_point(&dz.transform_point(p)));
                prop_assert!((a - b).abs() <= 1e-6);
            }
        }
    }
}
