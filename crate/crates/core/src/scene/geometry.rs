//! Planar geometry in local east/north metres.
//!
//! Azimuths are compass bearings: 0° = north (+y), 90° = east (+x).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }

    pub fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        self.sub(o).norm()
    }

    /// Unit vector pointing along compass bearing `deg`.
    pub fn from_bearing(deg: f64) -> Vec2 {
        let r = deg.to_radians();
        Vec2::new(r.sin(), r.cos())
    }
}

/// Compass bearing from `from` towards `to`, in `[0, 360)`.
pub fn bearing_deg(from: Vec2, to: Vec2) -> f64 {
    let d = to.sub(from);
    wrap_deg(d.x.atan2(d.y).to_degrees())
}

pub fn wrap_deg(a: f64) -> f64 {
    let w = a.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs.
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

/// One side of a rectangle with its outward normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Facade {
    pub a: Vec2,
    pub b: Vec2,
    pub normal: Vec2,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { min: Vec2::new(x0.min(x1), y0.min(y1)), max: Vec2::new(x0.max(x1), y0.max(y1)) }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn overlaps(&self, o: &Rect) -> bool {
        self.min.x < o.max.x && o.min.x < self.max.x && self.min.y < o.max.y && o.min.y < self.max.y
    }

    pub fn expanded(&self, m: f64) -> Rect {
        Rect::new(self.min.x - m, self.min.y - m, self.max.x + m, self.max.y + m)
    }

    pub fn facades(&self) -> [Facade; 4] {
        let (a, b) = (self.min, self.max);
        [
            Facade { a: Vec2::new(a.x, a.y), b: Vec2::new(b.x, a.y), normal: Vec2::new(0.0, -1.0) },
            Facade { a: Vec2::new(b.x, a.y), b: Vec2::new(b.x, b.y), normal: Vec2::new(1.0, 0.0) },
            Facade { a: Vec2::new(b.x, b.y), b: Vec2::new(a.x, b.y), normal: Vec2::new(0.0, 1.0) },
            Facade { a: Vec2::new(a.x, b.y), b: Vec2::new(a.x, a.y), normal: Vec2::new(-1.0, 0.0) },
        ]
    }

    /// Clipped parametric range of segment `p0 → p1` inside the closed rectangle.
    fn clip(&self, p0: Vec2, p1: Vec2) -> Option<(f64, f64)> {
        let d = p1.sub(p0);
        let mut t0 = 0.0f64;
        let mut t1 = 1.0f64;
        for (p, q) in [
            (-d.x, p0.x - self.min.x),
            (d.x, self.max.x - p0.x),
            (-d.y, p0.y - self.min.y),
            (d.y, self.max.y - p0.y),
        ] {
            if p == 0.0 {
                if q < 0.0 {
                    return None;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
            }
        }
        (t0 <= t1).then_some((t0, t1))
    }

    /// True if the segment touches the closed rectangle.
    pub fn intersects_segment(&self, p0: Vec2, p1: Vec2) -> bool {
        self.clip(p0, p1).is_some()
    }

    /// Entry distance of a ray (unit `dir`) starting outside the rectangle.
    pub fn ray_entry(&self, origin: Vec2, dir: Vec2, max_dist: f64) -> Option<f64> {
        let far = origin.add(dir.scale(max_dist));
        self.clip(origin, far).map(|(t0, _)| t0 * max_dist).filter(|&t| t > 0.0)
    }
}

/// Mirror image of `p` across the infinite line through a facade.
pub fn mirror(p: Vec2, f: &Facade) -> Vec2 {
    let d = p.sub(f.a).dot(f.normal);
    p.sub(f.normal.scale(2.0 * d))
}

/// Intersection of segment `p0 → p1` with segment `q0 → q1`, as a point.
pub fn segment_intersection(p0: Vec2, p1: Vec2, q0: Vec2, q1: Vec2) -> Option<Vec2> {
    let r = p1.sub(p0);
    let s = q1.sub(q0);
    let denom = r.cross(s);
    if denom.abs() < 1e-12 {
        return None;
    }
    let qp = q0.sub(p0);
    let t = qp.cross(s) / denom;
    let u = qp.cross(r) / denom;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then(|| p0.add(r.scale(t)))
}

/// Entry distance of a ray into a disc, for an origin outside it.
pub fn ray_circle(origin: Vec2, dir: Vec2, center: Vec2, radius: f64) -> Option<f64> {
    let oc = origin.sub(center);
    let b = oc.dot(dir);
    let c = oc.dot(oc) - radius * radius;
    if c <= 0.0 {
        return None;
    }
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t > 0.0).then_some(t)
}
