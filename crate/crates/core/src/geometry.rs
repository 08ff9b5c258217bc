//! Plane geometry for the blockage model: the Bernoulli lemniscate the
//! blockage objects travel on, arc-length parametrization of that curve, and
//! occlusion of a rectangular pencil beam by a polyline.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Point {
        Point::new(-self.y, self.x)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// Point on the unit half-width Bernoulli lemniscate `(x²+y²)² = x² − y²`.
///
/// `u = 0` is the right apex `(1, 0)`, `u = π/2` the crossing at the origin,
/// `u = π` the left apex. The parameter is 2π-periodic.
pub fn lemniscate_point(u: f64) -> Point {
    let (s, c) = u.sin_cos();
    let d = 1.0 + s * s;
    Point::new(c / d, s * c / d)
}

/// `|dP/du|` for [`lemniscate_point`], which simplifies to `1/√(1+sin²u)`.
fn lemniscate_speed(u: f64) -> f64 {
    let s = u.sin();
    1.0 / (1.0 + s * s).sqrt()
}

// 5-point Gauss-Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_47,
    0.478_628_670_499_366_47,
    0.236_926_885_056_189_08,
    0.236_926_885_056_189_08,
];

fn arc_between(a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GL_NODES
        .iter()
        .zip(GL_WEIGHTS.iter())
        .map(|(x, w)| w * lemniscate_speed(mid + half * x))
        .sum::<f64>()
        * half
}

/// Cumulative arc length of the lemniscate on a uniform grid of the curve
/// parameter, used to map loop fractions to curve parameters and back.
#[derive(Debug, Clone)]
pub struct ArcTable {
    step: f64,
    /// `cumulative[i]` is the arc length from `u = 0` to `u = i * step`.
    cumulative: Vec<f64>,
}

pub const DEFAULT_ARC_RESOLUTION: usize = 4096;

impl ArcTable {
    pub fn new(resolution: usize) -> Self {
        let resolution = resolution.max(64);
        let step = 2.0 * PI / resolution as f64;
        let mut cumulative = Vec::with_capacity(resolution + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for i in 0..resolution {
            let a = i as f64 * step;
            acc += arc_between(a, a + step);
            cumulative.push(acc);
        }
        ArcTable { step, cumulative }
    }

    pub fn total_length(&self) -> f64 {
        *self.cumulative.last().expect("table is never empty")
    }

    pub fn resolution(&self) -> usize {
        self.cumulative.len() - 1
    }

    /// Arc length from `u = 0` to `u`, for `u ∈ [0, 2π]`.
    pub fn arc_length_at(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 2.0 * PI);
        let i = ((u / self.step) as usize).min(self.resolution() - 1);
        let a = i as f64 * self.step;
        self.cumulative[i] + arc_between(a, u)
    }

    /// Curve parameter reached after travelling the fraction `s` of one loop.
    /// `s` is wrapped into `[0, 1)`.
    pub fn param_at_fraction(&self, s: f64) -> f64 {
        let s = s.rem_euclid(1.0);
        let target = s * self.total_length();
        let i = match self
            .cumulative
            .binary_search_by(|v| v.partial_cmp(&target).expect("finite table"))
        {
            Ok(i) => return (i as f64 * self.step).min(2.0 * PI),
            Err(i) => i - 1,
        };
        let (lo, hi) = (self.cumulative[i], self.cumulative[i + 1]);
        let a = i as f64 * self.step;
        let mut u = a + self.step * (target - lo) / (hi - lo);
        for _ in 0..4 {
            let err = self.cumulative[i] + arc_between(a, u) - target;
            u -= err / lemniscate_speed(u);
        }
        u.clamp(a, a + self.step)
    }

    pub fn point_at_fraction(&self, s: f64) -> Point {
        lemniscate_point(self.param_at_fraction(s))
    }
}

impl Default for ArcTable {
    fn default() -> Self {
        ArcTable::new(DEFAULT_ARC_RESOLUTION)
    }
}

/// Longest arc represented by one polyline segment.
const MAX_SEGMENT_ARC: f64 = 0.004;

/// Samples the lemniscate arc of length `arc_length` centred at loop fraction
/// `center`. The result always has at least two points, all on the curve.
pub fn arc_polyline(table: &ArcTable, center: f64, arc_length: f64) -> Vec<Point> {
    let total = table.total_length();
    let half = 0.5 * arc_length / total;
    let segments = ((arc_length / MAX_SEGMENT_ARC).ceil() as usize).max(1);
    (0..=segments)
        .map(|i| {
            let s = center - half + 2.0 * half * i as f64 / segments as f64;
            table.point_at_fraction(s)
        })
        .collect()
}

/// A rectangle of width `beamwidth` centred on the segment from the base
/// station to a device.
#[derive(Debug, Clone, Copy)]
pub struct BeamStrip {
    origin: Point,
    axis: Point,
    normal: Point,
    length: f64,
    half_width: f64,
}

impl BeamStrip {
    pub fn new(bs: Point, device: Point, beamwidth: f64) -> Self {
        let d = device - bs;
        let length = d.norm();
        assert!(length > 0.0, "base station and device coincide");
        assert!(beamwidth > 0.0, "beamwidth must be positive");
        let axis = d * (1.0 / length);
        BeamStrip {
            origin: bs,
            axis,
            normal: axis.perp(),
            length,
            half_width: 0.5 * beamwidth,
        }
    }

    pub fn width(&self) -> f64 {
        2.0 * self.half_width
    }

    /// (along-axis, cross-axis) coordinates of `p`.
    fn local(&self, p: Point) -> (f64, f64) {
        let r = p - self.origin;
        (r.dot(self.axis), r.dot(self.normal))
    }

    /// Cross-axis interval covered by the part of segment `pq` inside the
    /// strip, if any (Liang-Barsky clipping in strip coordinates).
    pub fn clip_segment(&self, p: Point, q: Point) -> Option<(f64, f64)> {
        let (pa, pc) = self.local(p);
        let (qa, qc) = self.local(q);
        let (da, dc) = (qa - pa, qc - pc);
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        // Cross-axis coordinate at t0/t1 when it is pinned to a strip edge.
        let (mut c0_edge, mut c1_edge) = (None, None);
        let checks = [
            (-da, pa, None),
            (da, self.length - pa, None),
            (-dc, pc + self.half_width, Some(-self.half_width)),
            (dc, self.half_width - pc, Some(self.half_width)),
        ];
        for (p_k, q_k, edge) in checks {
            if p_k == 0.0 {
                if q_k < 0.0 {
                    return None;
                }
            } else {
                let r = q_k / p_k;
                if p_k < 0.0 {
                    if r > t0 {
                        t0 = r;
                        c0_edge = edge;
                    }
                } else if r < t1 {
                    t1 = r;
                    c1_edge = edge;
                }
            }
        }
        if t0 > t1 {
            return None;
        }
        let c0 = c0_edge.unwrap_or(pc + t0 * dc);
        let c1 = c1_edge.unwrap_or(pc + t1 * dc);
        let (lo, hi) = if c0 <= c1 { (c0, c1) } else { (c1, c0) };
        Some((lo.max(-self.half_width), hi.min(self.half_width)))
    }

    /// Fraction of the beam cross-section occluded by `poly`.
    pub fn block_fraction(&self, poly: &[Point]) -> f64 {
        let mut intervals: Vec<(f64, f64)> = poly
            .windows(2)
            .filter_map(|w| self.clip_segment(w[0], w[1]))
            .filter(|(lo, hi)| hi > lo)
            .collect();
        if intervals.is_empty() {
            return 0.0;
        }
        intervals.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite coordinates"));
        let mut covered = 0.0;
        let (mut cur_lo, mut cur_hi) = intervals[0];
        for &(lo, hi) in &intervals[1..] {
            if lo > cur_hi {
                covered += cur_hi - cur_lo;
                cur_lo = lo;
                cur_hi = hi;
            } else {
                cur_hi = cur_hi.max(hi);
            }
        }
        covered += cur_hi - cur_lo;
        (covered / self.width()).clamp(0.0, 1.0)
    }
}

/// Fraction `p ∈ [0, 1]` of the pencil beam from `bs` to `device` that the
/// polyline blocks. Only the part of the polyline between the two endpoints
/// counts.
pub fn beam_block_fraction(bs: Point, device: Point, beamwidth: f64, poly: &[Point]) -> f64 {
    BeamStrip::new(bs, device, beamwidth).block_fraction(poly)
}
