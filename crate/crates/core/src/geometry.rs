//! Track representation and projection into the path error frame.
//!
//! A [`Path`] is an ordered chain of straight lines and circular arcs with
//! piecewise-constant curvature. [`Path::project`] maps a vehicle pose to
//! the [`PathFrame`] (arc length, signed cross-track error, heading error,
//! curvature) that controllers and barrier functions observe.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Position gap tolerated between consecutive segments.
pub const CONTINUITY_TOL: f64 = 1e-9;
/// Closure tolerance used when deciding whether a built track is a loop.
pub const CLOSURE_TOL: f64 = 1e-6;
const TIE_TOL: f64 = 1e-12;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    fn left_normal(&self) -> (f64, f64) {
        (-self.theta.sin(), self.theta.cos())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Line,
    Arc,
}

impl fmt::Display for SegmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SegmentKind::Line => write!(f, "line"),
            SegmentKind::Arc => write!(f, "arc"),
        }
    }
}

impl FromStr for SegmentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "line" => Ok(SegmentKind::Line),
            "arc" => Ok(SegmentKind::Arc),
            other => Err(Error::InvalidTrack(format!("unknown segment kind `{other}`"))),
        }
    }
}

/// One row of a track description: `(kind, length, curvature)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentSpec {
    pub kind: SegmentKind,
    pub length: f64,
    pub curvature: f64,
}

impl SegmentSpec {
    pub fn line(length: f64) -> Self {
        Self { kind: SegmentKind::Line, length, curvature: 0.0 }
    }

    pub fn arc(length: f64, curvature: f64) -> Self {
        Self { kind: SegmentKind::Arc, length, curvature }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub start: Pose,
    pub length: f64,
    pub curvature: f64,
    /// Arc length at which this segment begins.
    pub s_start: f64,
}

impl Segment {
    /// Pose at arc length `t` measured from the segment start.
    pub fn pose_at(&self, t: f64) -> Pose {
        let Pose { x, y, theta } = self.start;
        match self.kind {
            SegmentKind::Line => Pose::new(x + t * theta.cos(), y + t * theta.sin(), theta),
            SegmentKind::Arc => {
                let k = self.curvature;
                let th = theta + k * t;
                Pose::new(x + (th.sin() - theta.sin()) / k, y - (th.cos() - theta.cos()) / k, th)
            }
        }
    }

    pub fn end_pose(&self) -> Pose {
        self.pose_at(self.length)
    }

    /// Arc-length parameter of the nearest point on this segment.
    fn nearest_t(&self, px: f64, py: f64) -> f64 {
        match self.kind {
            SegmentKind::Line => {
                let (c, s) = (self.start.theta.cos(), self.start.theta.sin());
                ((px - self.start.x) * c + (py - self.start.y) * s).clamp(0.0, self.length)
            }
            SegmentKind::Arc => {
                let k = self.curvature;
                let (nx, ny) = self.start.left_normal();
                let cx = self.start.x + nx / k;
                let cy = self.start.y + ny / k;
                let phi0 = (self.start.y - cy).atan2(self.start.x - cx);
                let phip = (py - cy).atan2(px - cx);
                let sweep = (k.signum() * (phip - phi0)).rem_euclid(TAU);
                let t = sweep / k.abs();
                if t <= self.length {
                    t
                } else {
                    let a = self.pose_at(0.0);
                    let b = self.pose_at(self.length);
                    if dist2(a.x - px, a.y - py) <= dist2(b.x - px, b.y - py) {
                        0.0
                    } else {
                        self.length
                    }
                }
            }
        }
    }
}

fn dist2(dx: f64, dy: f64) -> f64 {
    dx * dx + dy * dy
}

/// Path-relative coordinates of a pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathFrame {
    /// Arc length of the nearest path point.
    pub s: f64,
    /// Signed cross-track error, positive left of the path direction.
    pub d_e: f64,
    /// Heading error wrapped to `(-pi, pi]`.
    pub theta_e: f64,
    /// Curvature of the path at `s`.
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    segments: Vec<Segment>,
    closed: bool,
    total_length: f64,
}

impl Path {
    /// Validates and assembles explicit segments.
    pub fn from_segments(segments: Vec<Segment>, closed: bool) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidTrack("no segments".into()));
        }
        let mut s = 0.0;
        for (i, seg) in segments.iter().enumerate() {
            validate_segment(seg.kind, seg.length, seg.curvature)?;
            if (seg.s_start - s).abs() > CONTINUITY_TOL * (1.0 + s) {
                return Err(Error::InvalidTrack(format!("segment {i} has inconsistent s_start")));
            }
            if i > 0 {
                let prev = segments[i - 1].end_pose();
                check_continuity(&prev, &seg.start, i, CONTINUITY_TOL)?;
            }
            s += seg.length;
        }
        if closed {
            let end = segments.last().unwrap().end_pose();
            check_continuity(&end, &segments[0].start, 0, CLOSURE_TOL)?;
        }
        Ok(Self { segments, closed, total_length: s })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn length(&self) -> f64 {
        self.total_length
    }

    pub fn max_abs_curvature(&self) -> f64 {
        self.segments.iter().map(|s| s.curvature.abs()).fold(0.0, f64::max)
    }

    /// Reduces `s` modulo the length on closed paths and clamps on open ones.
    pub fn normalize_s(&self, s: f64) -> f64 {
        if self.closed {
            s.rem_euclid(self.total_length)
        } else {
            s.clamp(0.0, self.total_length)
        }
    }

    /// Index of the segment containing `s`; junctions belong to the later segment.
    fn segment_index(&self, s: f64) -> usize {
        let s = self.normalize_s(s);
        let idx = self.segments.partition_point(|seg| seg.s_start <= s);
        idx.saturating_sub(1)
    }

    /// Curvature of the segment containing `s`.
    pub fn curvature_at(&self, s: f64) -> f64 {
        self.segments[self.segment_index(s)].curvature
    }

    pub fn pose_at(&self, s: f64) -> Pose {
        let s = self.normalize_s(s);
        let seg = &self.segments[self.segment_index(s)];
        seg.pose_at((s - seg.s_start).min(seg.length))
    }

    /// Pose offset laterally by `d_e` from the path point at `s`, rotated by `theta_e`.
    pub fn place(&self, s: f64, d_e: f64, theta_e: f64) -> Pose {
        let p = self.pose_at(s);
        let (nx, ny) = p.left_normal();
        Pose::new(p.x + d_e * nx, p.y + d_e * ny, wrap_angle(p.theta + theta_e))
    }

    /// Nearest-point projection of a pose into the path frame.
    ///
    /// Exact ties between non-adjacent segments go to the smaller arc length;
    /// a foot point shared by two adjacent segments belongs to the later one.
    pub fn project(&self, pose: &Pose) -> PathFrame {
        let mut best: Option<(usize, f64, f64, Pose)> = None;
        for (i, seg) in self.segments.iter().enumerate() {
            let t = seg.nearest_t(pose.x, pose.y);
            let foot = seg.pose_at(t);
            let d = dist2(pose.x - foot.x, pose.y - foot.y).sqrt();
            let replace = match &best {
                None => true,
                Some((_, _, bd, bfoot)) => {
                    if d < *bd - TIE_TOL {
                        true
                    } else if d <= *bd + TIE_TOL {
                        let shared = dist2(foot.x - bfoot.x, foot.y - bfoot.y).sqrt() < CONTINUITY_TOL;
                        shared && t <= CONTINUITY_TOL
                    } else {
                        false
                    }
                }
            };
            if replace {
                best = Some((i, t, d, foot));
            }
        }
        let (i, t, d, foot) = best.expect("path has segments");
        // Junction at the closing point of a loop belongs to the first segment.
        let (i, t, foot) = if self.closed && i == self.segments.len() - 1 && self.segments[i].length - t <= CONTINUITY_TOL {
            (0, 0.0, self.segments[0].start)
        } else {
            (i, t, foot)
        };
        let seg = &self.segments[i];
        let (nx, ny) = foot.left_normal();
        let side = (pose.x - foot.x) * nx + (pose.y - foot.y) * ny;
        let d_e = if side < 0.0 { -d } else { d };
        PathFrame {
            s: self.normalize_s(seg.s_start + t),
            d_e,
            theta_e: wrap_angle(pose.theta - foot.theta),
            kappa: seg.curvature,
        }
    }

    /// Oval of two straights joined by two half circles, counter-clockwise.
    pub fn oval(straight: f64, radius: f64) -> Result<Self> {
        let k = 1.0 / radius;
        build_track(
            &[
                SegmentSpec::line(straight),
                SegmentSpec::arc(PI * radius, k),
                SegmentSpec::line(straight),
                SegmentSpec::arc(PI * radius, k),
            ],
            f64::INFINITY,
        )
    }

    /// Rounded rectangle whose four corners have different radii.
    pub fn mixed_loop() -> Result<Self> {
        let (a, b) = (200.0, 120.0);
        let (r1, r2, r3, r4) = (100.0, 60.0, 80.0, 120.0);
        let c = a + r1 - r2 - r3 + r4;
        let d = r1 + b + r2 - r3 - r4;
        let q = PI / 2.0;
        build_track(
            &[
                SegmentSpec::line(a),
                SegmentSpec::arc(q * r1, 1.0 / r1),
                SegmentSpec::line(b),
                SegmentSpec::arc(q * r2, 1.0 / r2),
                SegmentSpec::line(c),
                SegmentSpec::arc(q * r3, 1.0 / r3),
                SegmentSpec::line(d),
                SegmentSpec::arc(q * r4, 1.0 / r4),
            ],
            f64::INFINITY,
        )
    }

    /// Constant-curvature path: a full circle, or a straight line when `kappa == 0`.
    pub fn constant_curvature(kappa: f64, straight_length: f64) -> Result<Self> {
        if kappa == 0.0 {
            build_track(&[SegmentSpec::line(straight_length)], f64::INFINITY)
        } else {
            build_track(&[SegmentSpec::arc(TAU / kappa.abs(), kappa)], f64::INFINITY)
        }
    }
}

fn validate_segment(kind: SegmentKind, length: f64, curvature: f64) -> Result<()> {
    if !(length.is_finite() && length > 0.0) {
        return Err(Error::InvalidTrack(format!("segment length must be positive, got {length}")));
    }
    if !curvature.is_finite() {
        return Err(Error::InvalidTrack("non-finite curvature".into()));
    }
    match kind {
        SegmentKind::Line if curvature != 0.0 => {
            Err(Error::InvalidTrack("line segment with nonzero curvature".into()))
        }
        SegmentKind::Arc if curvature == 0.0 => {
            Err(Error::InvalidTrack("arc segment with zero curvature".into()))
        }
        _ => Ok(()),
    }
}

fn check_continuity(a: &Pose, b: &Pose, i: usize, tol: f64) -> Result<()> {
    let gap = dist2(a.x - b.x, a.y - b.y).sqrt();
    let dh = wrap_angle(a.theta - b.theta).abs();
    if gap > tol || dh > tol {
        return Err(Error::InvalidTrack(format!(
            "discontinuity before segment {i}: gap {gap:.3e} m, heading {dh:.3e} rad"
        )));
    }
    Ok(())
}

/// Chains segment specs from the origin heading along +x.
///
/// The result is closed when the final pose returns to the start within
/// [`CLOSURE_TOL`]; the closing pose is snapped back to the origin.
pub fn build_track(spec: &[SegmentSpec], kappa_max: f64) -> Result<Path> {
    if spec.is_empty() {
        return Err(Error::InvalidTrack("empty track spec".into()));
    }
    let mut segments = Vec::with_capacity(spec.len());
    let mut pose = Pose::new(0.0, 0.0, 0.0);
    let mut s = 0.0;
    for row in spec {
        validate_segment(row.kind, row.length, row.curvature)?;
        if row.curvature.abs() > kappa_max {
            return Err(Error::InvalidTrack(format!(
                "curvature {} exceeds limit {kappa_max}",
                row.curvature
            )));
        }
        let seg = Segment { kind: row.kind, start: pose, length: row.length, curvature: row.curvature, s_start: s };
        let end = seg.end_pose();
        pose = Pose::new(end.x, end.y, wrap_angle(end.theta));
        s += row.length;
        segments.push(seg);
    }
    let closed = dist2(pose.x, pose.y).sqrt() < CLOSURE_TOL && wrap_angle(pose.theta).abs() < CLOSURE_TOL;
    Path::from_segments(segments, closed)
}

/// Parses the `kind,length,curvature` track CSV.
pub fn parse_track_csv(text: &str) -> Result<Vec<SegmentSpec>> {
    let parse_err = |msg: String| Error::Parse { file: "track".into(), msg };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| parse_err("empty file".into()))?;
    if header.split(',').map(str::trim).collect::<Vec<_>>() != ["kind", "length", "curvature"] {
        return Err(parse_err(format!("bad header `{header}`")));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 3 {
                return Err(parse_err(format!("row {}: expected 3 columns", i + 1)));
            }
            let num = |c: &str| c.parse::<f64>().map_err(|e| parse_err(format!("row {}: {e}", i + 1)));
            Ok(SegmentSpec { kind: cols[0].parse()?, length: num(cols[1])?, curvature: num(cols[2])? })
        })
        .collect()
}

pub fn write_track_csv(spec: &[SegmentSpec]) -> String {
    let mut out = String::from("kind,length,curvature\n");
    for row in spec {
        out.push_str(&format!("{},{:.16e},{:.16e}\n", row.kind, row.length, row.curvature));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn straight_track() {
        let p = build_track(&[SegmentSpec::line(100.0)], 1.0).unwrap();
        assert!(!p.is_closed());
        assert_eq!(p.length(), 100.0);
    }

    #[test]
    fn circle_closes() {
        let r = 50.0;
        let p = build_track(&[SegmentSpec::arc(TAU * r, 1.0 / r)], 1.0).unwrap();
        assert!(p.is_closed());
        for s in [0.0, 10.0, 150.0, 300.0] {
            assert_eq!(p.curvature_at(s), 0.02);
        }
    }

    #[test]
    fn oval_length_is_sum_of_segments() {
        let (l, r) = (200.0, 100.0);
        let p = Path::oval(l, r).unwrap();
        assert!(p.is_closed());
        assert_abs_diff_eq!(p.length(), 2.0 * l + TAU * r, epsilon = 1e-9);
        let m = Path::mixed_loop().unwrap();
        assert!(m.is_closed());
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(build_track(&[SegmentSpec::line(0.0)], 1.0).is_err());
        assert!(build_track(&[SegmentSpec::arc(10.0, 0.0)], 1.0).is_err());
        assert!(build_track(&[SegmentSpec::arc(10.0, 0.5)], 0.1).is_err());
        assert!(build_track(&[], 1.0).is_err());
        let mut segs = build_track(&[SegmentSpec::line(10.0), SegmentSpec::line(5.0)], 1.0)
            .unwrap()
            .segments()
            .to_vec();
        segs[1].start.y += 1e-3;
        assert!(Path::from_segments(segs, false).is_err());
    }

    #[test]
    fn project_on_straight() {
        let p = build_track(&[SegmentSpec::line(100.0)], 1.0).unwrap();
        let f = p.project(&Pose::new(3.0, -0.7, 0.1));
        assert_abs_diff_eq!(f.d_e, -0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(f.theta_e, 0.1, epsilon = 1e-12);
        assert_eq!(f.kappa, 0.0);
        assert_abs_diff_eq!(f.s, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn project_on_circle() {
        let r = 50.0;
        let p = build_track(&[SegmentSpec::arc(TAU * r, 1.0 / r)], 1.0).unwrap();
        let pose = p.pose_at(40.0);
        let f = p.project(&pose);
        assert_abs_diff_eq!(f.d_e, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(f.theta_e, 0.0, epsilon = 1e-12);
        assert_eq!(f.kappa, 0.02);
        assert_abs_diff_eq!(f.s, 40.0, epsilon = 1e-9);
    }

    #[test]
    fn heading_error_wraps_to_pi() {
        let p = build_track(&[SegmentSpec::line(100.0)], 1.0).unwrap();
        let f = p.project(&Pose::new(1.0, 0.0, PI));
        assert_eq!(f.theta_e, PI);
        let f = p.project(&Pose::new(1.0, 0.0, -PI));
        assert_eq!(f.theta_e, PI);
    }

    #[test]
    fn junction_belongs_to_later_segment() {
        let p = build_track(&[SegmentSpec::line(10.0), SegmentSpec::arc(5.0, 0.1)], 1.0).unwrap();
        assert_eq!(p.curvature_at(10.0), 0.1);
        assert_eq!(p.curvature_at(9.999), 0.0);
        let f = p.project(&p.pose_at(10.0));
        assert_eq!(f.kappa, 0.1);
        let oval = Path::oval(200.0, 100.0).unwrap();
        assert_eq!(oval.curvature_at(oval.length()), 0.0);
        let f = oval.project(&Pose::new(0.0, -1.0, 0.0));
        assert_eq!(f.kappa, 0.0);
        assert_abs_diff_eq!(f.s, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn place_then_project_roundtrips() {
        let oval = Path::oval(200.0, 100.0).unwrap();
        for &(s, d, th) in &[(50.0, 1.2, 0.2), (300.0, -2.0, -0.4), (700.0, 0.5, 3.0)] {
            let f = oval.project(&oval.place(s, d, th));
            assert_abs_diff_eq!(f.s, s, epsilon = 1e-9);
            assert_abs_diff_eq!(f.d_e, d, epsilon = 1e-9);
            assert_abs_diff_eq!(f.theta_e, th, epsilon = 1e-9);
        }
    }

    #[test]
    fn track_csv_roundtrip() {
        let spec = vec![SegmentSpec::line(100.0), SegmentSpec::arc(PI * 50.0, 0.02)];
        let back = parse_track_csv(&write_track_csv(&spec)).unwrap();
        assert_eq!(back, spec);
        assert!(parse_track_csv("kind,len,curvature\nline,1,0\n").is_err());
        assert!(parse_track_csv("kind,length,curvature\nspiral,1,0\n").is_err());
    }
}
