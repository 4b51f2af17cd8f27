//! Connecting-nodes antenna parameterization.
//!
//! An antenna is a set of discs ("nodes") on a plane, joined pairwise by
//! trapezoids. Nodes 1..=6 are fully free, node 7 is the ground contact
//! (its `y` is pinned to 0) and node 8 is the feed, fixed at
//! `(0, 1.5, r = 0.5)` mm. That leaves 20 free parameters, stored in the
//! canonical order `X1..X7, Y1..Y6, R1..R7`.
//!
//! Everything here is pure: no interior mutability, safe to share across
//! threads.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of free geometric parameters.
pub const PARAM_COUNT: usize = 20;
/// Number of nodes in the default connecting-nodes scheme.
pub const NODE_COUNT: usize = 8;

/// Canonical parameter names, in storage order.
pub const PARAM_NAMES: [&str; PARAM_COUNT] = [
    "X1", "X2", "X3", "X4", "X5", "X6", "X7", "Y1", "Y2", "Y3", "Y4", "Y5", "Y6", "R1", "R2", "R3",
    "R4", "R5", "R6", "R7",
];

const X_OFFSET: usize = 0;
const Y_OFFSET: usize = 7;
const R_OFFSET: usize = 13;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("parameter {name}: interval [{lo}, {hi}] is empty or not finite")]
    EmptyInterval { name: String, lo: f64, hi: f64 },
    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("parameter {name} = {value} lies outside [{lo}, {hi}]")]
    OutOfRange {
        name: String,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("parameter {name} is not finite")]
    NonFinite { name: String },
    #[error("connection {a}-{b} references a node outside 1..={count}")]
    UnknownNode { a: usize, b: usize, count: usize },
    #[error("connection {a}-{b} joins a node to itself")]
    SelfLoop { a: usize, b: usize },
    #[error("connection {a}-{b}: node centers coincide")]
    DegenerateSegment { a: usize, b: usize },
}

/// A disc of the layout, in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub x: f64,
    pub y: f64,
    pub r: f64,
}

impl NodeSpec {
    pub fn new(x: f64, y: f64, r: f64) -> Self {
        Self { x, y, r }
    }

    fn center(&self) -> Point {
        [self.x, self.y]
    }
}

/// Closed interval `[lo, hi]` with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// Per-parameter closed intervals for the 20 free parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Interval>", into = "Vec<Interval>")]
pub struct ParameterRanges {
    bounds: [Interval; PARAM_COUNT],
}

impl ParameterRanges {
    pub fn new(bounds: &[(f64, f64)]) -> Result<Self, GeometryError> {
        if bounds.len() != PARAM_COUNT {
            return Err(GeometryError::Length {
                expected: PARAM_COUNT,
                got: bounds.len(),
            });
        }
        let mut out = [Interval { lo: 0.0, hi: 1.0 }; PARAM_COUNT];
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(GeometryError::EmptyInterval {
                    name: PARAM_NAMES[i].to_string(),
                    lo,
                    hi,
                });
            }
            out[i] = Interval { lo, hi };
        }
        Ok(Self { bounds: out })
    }

    /// The reference ranges (mm) of the 8-node scheme.
    pub fn standard() -> Self {
        let mut b = Vec::with_capacity(PARAM_COUNT);
        b.extend_from_slice(&[
            (-30.0, -15.0),
            (-15.0, -5.0),
            (-5.0, 0.0),
            (0.0, 5.0),
            (5.0, 15.0),
            (15.0, 30.0),
            (-30.0, 0.0),
        ]);
        b.extend(std::iter::repeat_n((3.0, 10.0), 6));
        b.extend(std::iter::repeat_n((0.1, 1.5), 7));
        Self::new(&b).expect("reference ranges are well formed")
    }

    pub fn get(&self, index: usize) -> Interval {
        self.bounds[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Interval> {
        self.bounds.iter()
    }

    pub fn as_tuples(&self) -> Vec<(f64, f64)> {
        self.bounds.iter().map(|b| (b.lo, b.hi)).collect()
    }

    /// Draws every parameter independently and uniformly from its interval.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterVector {
        let mut v = [0.0; PARAM_COUNT];
        for (slot, b) in v.iter_mut().zip(self.bounds.iter()) {
            *slot = rng.gen_range(b.lo..=b.hi);
        }
        ParameterVector(v)
    }

    pub fn midpoint(&self) -> ParameterVector {
        let mut v = [0.0; PARAM_COUNT];
        for (slot, b) in v.iter_mut().zip(self.bounds.iter()) {
            *slot = b.midpoint();
        }
        ParameterVector(v)
    }

    /// Maps each parameter affinely onto `[0, 1]`.
    pub fn normalize(&self, params: &ParameterVector) -> [f64; PARAM_COUNT] {
        let mut out = [0.0; PARAM_COUNT];
        for i in 0..PARAM_COUNT {
            let b = self.bounds[i];
            out[i] = (params.0[i] - b.lo) / b.width();
        }
        out
    }

    /// Inverse of [`normalize`](Self::normalize). Inputs outside `[0, 1]`
    /// are clamped so the result always lies in range.
    pub fn denormalize(&self, unit: &[f64]) -> Result<ParameterVector, GeometryError> {
        if unit.len() != PARAM_COUNT {
            return Err(GeometryError::Length {
                expected: PARAM_COUNT,
                got: unit.len(),
            });
        }
        let mut out = [0.0; PARAM_COUNT];
        for i in 0..PARAM_COUNT {
            let b = self.bounds[i];
            let u = unit[i];
            if !u.is_finite() {
                return Err(GeometryError::NonFinite {
                    name: PARAM_NAMES[i].to_string(),
                });
            }
            out[i] = (b.lo + u.clamp(0.0, 1.0) * b.width()).clamp(b.lo, b.hi);
        }
        Ok(ParameterVector(out))
    }

    pub fn contains(&self, params: &ParameterVector) -> bool {
        self.check(params).is_ok()
    }

    pub fn check(&self, params: &ParameterVector) -> Result<(), GeometryError> {
        for i in 0..PARAM_COUNT {
            let v = params.0[i];
            let b = self.bounds[i];
            if !v.is_finite() {
                return Err(GeometryError::NonFinite {
                    name: PARAM_NAMES[i].to_string(),
                });
            }
            if !b.contains(v) {
                return Err(GeometryError::OutOfRange {
                    name: PARAM_NAMES[i].to_string(),
                    value: v,
                    lo: b.lo,
                    hi: b.hi,
                });
            }
        }
        Ok(())
    }
}

impl Default for ParameterRanges {
    fn default() -> Self {
        Self::standard()
    }
}

impl TryFrom<Vec<Interval>> for ParameterRanges {
    type Error = GeometryError;

    fn try_from(v: Vec<Interval>) -> Result<Self, Self::Error> {
        let t: Vec<(f64, f64)> = v.iter().map(|b| (b.lo, b.hi)).collect();
        Self::new(&t)
    }
}

impl From<ParameterRanges> for Vec<Interval> {
    fn from(r: ParameterRanges) -> Self {
        r.bounds.to_vec()
    }
}

/// The 20 free parameters in canonical order `X1..X7, Y1..Y6, R1..R7`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector(pub [f64; PARAM_COUNT]);

impl ParameterVector {
    pub fn from_slice(values: &[f64]) -> Result<Self, GeometryError> {
        let arr: [f64; PARAM_COUNT] =
            values.try_into().map_err(|_| GeometryError::Length {
                expected: PARAM_COUNT,
                got: values.len(),
            })?;
        Ok(Self(arr))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `X_i`, 1-based, `i` in `1..=7`.
    pub fn x(&self, node: usize) -> f64 {
        self.0[X_OFFSET + node - 1]
    }

    /// `Y_i`, 1-based, `i` in `1..=6`.
    pub fn y(&self, node: usize) -> f64 {
        self.0[Y_OFFSET + node - 1]
    }

    /// `R_i`, 1-based, `i` in `1..=7`.
    pub fn r(&self, node: usize) -> f64 {
        self.0[R_OFFSET + node - 1]
    }
}

impl fmt::Display for ParameterVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (n, v)) in PARAM_NAMES.iter().zip(self.0.iter()).enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{n}={v:.3}")?;
        }
        Ok(())
    }
}

/// Which nodes are joined, plus the fixed ground and feed nodes.
///
/// Node numbers are 1-based to match the usual drawings of the scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionMap {
    pairs: Vec<(usize, usize)>,
    /// Node touching the ground half-plane; its `y` is pinned to 0.
    pub ground: usize,
    /// Excitation node, fully fixed.
    pub feed: usize,
    pub feed_node: NodeSpec,
}

impl ConnectionMap {
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self, GeometryError> {
        for &(a, b) in &pairs {
            if a == 0 || b == 0 || a > NODE_COUNT || b > NODE_COUNT {
                return Err(GeometryError::UnknownNode {
                    a,
                    b,
                    count: NODE_COUNT,
                });
            }
            if a == b {
                return Err(GeometryError::SelfLoop { a, b });
            }
        }
        Ok(Self {
            pairs,
            ground: 7,
            feed: 8,
            feed_node: NodeSpec::new(0.0, 1.5, 0.5),
        })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn node_count(&self) -> usize {
        NODE_COUNT
    }

    /// Resolves all eight nodes (index 0 is node 1) from the free parameters.
    pub fn nodes(&self, params: &ParameterVector) -> [NodeSpec; NODE_COUNT] {
        let mut nodes = [NodeSpec::new(0.0, 0.0, 0.0); NODE_COUNT];
        for (i, node) in nodes.iter_mut().enumerate().take(6) {
            *node = NodeSpec::new(params.x(i + 1), params.y(i + 1), params.r(i + 1));
        }
        nodes[self.ground - 1] = NodeSpec::new(params.x(7), 0.0, params.r(7));
        nodes[self.feed - 1] = self.feed_node;
        nodes
    }

    pub fn degree(&self, node: usize) -> usize {
        self.pairs
            .iter()
            .filter(|&&(a, b)| a == node || b == node)
            .count()
    }

    fn shares_node(p: (usize, usize), q: (usize, usize)) -> bool {
        p.0 == q.0 || p.0 == q.1 || p.1 == q.0 || p.1 == q.1
    }

    fn touches(&self, p: (usize, usize), node: usize) -> bool {
        p.0 == node || p.1 == node
    }
}

impl Default for ConnectionMap {
    fn default() -> Self {
        Self::new(vec![(1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (3, 7), (4, 8)])
            .expect("default connection map is well formed")
    }
}

pub type Point = [f64; 2];

/// Quadrilateral joining two nodes. Vertex order: start+, end+, end-, start-
/// where `+` is the left-hand normal of the start→end direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trapezoid {
    pub from: usize,
    pub to: usize,
    pub vertices: [Point; 4],
}

impl Trapezoid {
    pub fn min_y(&self) -> f64 {
        self.vertices
            .iter()
            .map(|v| v[1])
            .fold(f64::INFINITY, f64::min)
    }

    /// Closed overlap test between this (convex) trapezoid and a disc.
    pub fn overlaps_disc(&self, center: Point, radius: f64) -> bool {
        if point_in_convex(&self.vertices, center) {
            return true;
        }
        (0..4).any(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % 4];
            point_segment_distance(center, a, b) <= radius
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntennaLayout {
    pub trapezoids: Vec<Trapezoid>,
    pub discs: Vec<NodeSpec>,
}

impl AntennaLayout {
    /// Axis-aligned bounds `(min_x, min_y, max_x, max_y)` over every
    /// trapezoid vertex and disc.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let mut b = (
            f64::INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
        );
        for d in &self.discs {
            b.0 = b.0.min(d.x - d.r);
            b.1 = b.1.min(d.y - d.r);
            b.2 = b.2.max(d.x + d.r);
            b.3 = b.3.max(d.y + d.r);
        }
        for t in &self.trapezoids {
            for v in &t.vertices {
                b.0 = b.0.min(v[0]);
                b.1 = b.1.min(v[1]);
                b.2 = b.2.max(v[0]);
                b.3 = b.3.max(v[1]);
            }
        }
        b
    }
}

fn trapezoid_between(a: NodeSpec, b: NodeSpec, from: usize, to: usize) -> Result<Trapezoid, GeometryError> {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let len = dx.hypot(dy);
    if len == 0.0 || !len.is_finite() {
        return Err(GeometryError::DegenerateSegment { a: from, b: to });
    }
    let (nx, ny) = (-dy / len, dx / len);
    Ok(Trapezoid {
        from,
        to,
        vertices: [
            [a.x + a.r * nx, a.y + a.r * ny],
            [b.x + b.r * nx, b.y + b.r * ny],
            [b.x - b.r * nx, b.y - b.r * ny],
            [a.x - a.r * nx, a.y - a.r * ny],
        ],
    })
}

/// Builds one trapezoid per connection; the parallel sides sit on the node
/// centers, perpendicular to the center segment, with lengths `2 R_i` and
/// `2 R_j`.
pub fn build_layout(params: &ParameterVector, conn: &ConnectionMap) -> Result<AntennaLayout, GeometryError> {
    let nodes = conn.nodes(params);
    let trapezoids = conn
        .pairs()
        .iter()
        .map(|&(a, b)| trapezoid_between(nodes[a - 1], nodes[b - 1], a, b))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AntennaLayout {
        trapezoids,
        discs: nodes.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShortKind {
    /// A non-ground trapezoid reaches into `y <= 0`.
    Ground,
    /// A trapezoid not incident to the feed overlaps the feed disc.
    Feed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum GeometryFault {
    Crossing {
        first: (usize, usize),
        second: (usize, usize),
    },
    Short { pair: (usize, usize), kind: ShortKind },
    Degenerate { pair: (usize, usize) },
}

impl fmt::Display for GeometryFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryFault::Crossing { first, second } => write!(
                f,
                "connections {}-{} and {}-{} cross",
                first.0, first.1, second.0, second.1
            ),
            GeometryFault::Short { pair, kind } => write!(
                f,
                "connection {}-{} shorts the {}",
                pair.0,
                pair.1,
                match kind {
                    ShortKind::Ground => "ground",
                    ShortKind::Feed => "feed",
                }
            ),
            GeometryFault::Degenerate { pair } => {
                write!(f, "connection {}-{} has coincident nodes", pair.0, pair.1)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeometryVerdict {
    Pass,
    Fail(GeometryFault),
}

impl GeometryVerdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, GeometryVerdict::Pass)
    }
}

/// Rejects layouts with crossing connection lines or a shorted feed.
///
/// Crossing: the center segments of two connections that share no node
/// intersect (touching counts). Short: a trapezoid other than the ground
/// branch reaches `y <= 0`, or a trapezoid not incident to the feed node
/// overlaps the feed disc.
pub fn check_geometry(params: &ParameterVector, conn: &ConnectionMap) -> GeometryVerdict {
    let nodes = conn.nodes(params);
    let pairs = conn.pairs();

    let mut traps = Vec::with_capacity(pairs.len());
    for &p in pairs {
        match trapezoid_between(nodes[p.0 - 1], nodes[p.1 - 1], p.0, p.1) {
            Ok(t) => traps.push(t),
            Err(_) => return GeometryVerdict::Fail(GeometryFault::Degenerate { pair: p }),
        }
    }

    for (i, &p) in pairs.iter().enumerate() {
        for &q in &pairs[i + 1..] {
            if ConnectionMap::shares_node(p, q) {
                continue;
            }
            let (a, b) = (nodes[p.0 - 1].center(), nodes[p.1 - 1].center());
            let (c, d) = (nodes[q.0 - 1].center(), nodes[q.1 - 1].center());
            if segments_intersect(a, b, c, d) {
                return GeometryVerdict::Fail(GeometryFault::Crossing { first: p, second: q });
            }
        }
    }

    let feed = nodes[conn.feed - 1];
    for (&p, trap) in pairs.iter().zip(&traps) {
        if !conn.touches(p, conn.ground) && trap.min_y() <= 0.0 {
            return GeometryVerdict::Fail(GeometryFault::Short {
                pair: p,
                kind: ShortKind::Ground,
            });
        }
        if !conn.touches(p, conn.feed) && trap.overlaps_disc(feed.center(), feed.r) {
            return GeometryVerdict::Fail(GeometryFault::Short {
                pair: p,
                kind: ShortKind::Feed,
            });
        }
    }
    GeometryVerdict::Pass
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

/// Closed segment intersection via orientation signs.
pub fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

fn point_in_convex(poly: &[Point], p: Point) -> bool {
    let mut sign = 0.0f64;
    for i in 0..poly.len() {
        let o = orient(poly[i], poly[(i + 1) % poly.len()], p);
        if o == 0.0 {
            continue;
        }
        if sign == 0.0 {
            sign = o.signum();
        } else if o.signum() != sign {
            return false;
        }
    }
    true
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (vx, vy) = (b[0] - a[0], b[1] - a[1]);
    let (wx, wy) = (p[0] - a[0], p[1] - a[1]);
    let len2 = vx * vx + vy * vy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((wx * vx + wy * vy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a[0] + t * vx - p[0], a[1] + t * vy - p[1]);
    cx.hypot(cy)
}

/// The simple random antenna generator: uniform draws, keeping only those
/// that pass [`check_geometry`]. Returns `None` if `max_draws` is reached.
pub fn sample_valid<R: Rng + ?Sized>(
    ranges: &ParameterRanges,
    conn: &ConnectionMap,
    rng: &mut R,
    max_draws: usize,
) -> Option<ParameterVector> {
    (0..max_draws)
        .map(|_| ranges.sample(rng))
        .find(|p| check_geometry(p, conn).is_pass())
}

/// Renders a grid of layouts as a single SVG document (one `<g>` per
/// antenna, one `<polygon>` per trapezoid, one `<circle>` per node).
pub fn layouts_to_svg(layouts: &[AntennaLayout], columns: usize) -> String {
    use std::fmt::Write;

    let columns = columns.max(1);
    let (cell_w, cell_h) = (70.0, 22.0);
    let rows = layouts.len().div_ceil(columns).max(1);
    let scale = 4.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        columns as f64 * cell_w * scale,
        rows as f64 * cell_h * scale,
        columns as f64 * cell_w,
        rows as f64 * cell_h
    );
    for (k, layout) in layouts.iter().enumerate() {
        let ox = (k % columns) as f64 * cell_w + cell_w / 2.0;
        let oy = (k / columns) as f64 * cell_h + cell_h - 4.0;
        // SVG y grows downward; flip so the ground sits at the bottom.
        let _ = writeln!(s, r#"<g id="antenna-{k}" transform="translate({ox} {oy}) scale(1 -1)">"#);
        let _ = writeln!(
            s,
            r##"<rect x="-32" y="-3" width="64" height="3" fill="#bbbbbb"/>"##
        );
        for t in &layout.trapezoids {
            let pts: Vec<String> = t
                .vertices
                .iter()
                .map(|v| format!("{:.4},{:.4}", v[0], v[1]))
                .collect();
            let _ = writeln!(
                s,
                r##"<polygon data-pair="{}-{}" points="{}" fill="#c87533"/>"##,
                t.from,
                t.to,
                pts.join(" ")
            );
        }
        for d in &layout.discs {
            let _ = writeln!(
                s,
                r##"<circle cx="{:.4}" cy="{:.4}" r="{:.4}" fill="#c87533"/>"##,
                d.x, d.y, d.r
            );
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

/// Plain JSON array of trapezoid vertex lists (mm).
pub fn layout_to_json(layout: &AntennaLayout) -> serde_json::Value {
    serde_json::Value::Array(
        layout
            .trapezoids
            .iter()
            .map(|t| serde_json::json!(t.vertices))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_nodes(a: NodeSpec, b: NodeSpec) -> Trapezoid {
        trapezoid_between(a, b, 1, 2).unwrap()
    }

    #[test]
    fn standard_ranges() {
        let r = ParameterRanges::standard();
        assert_eq!(r.get(0), Interval { lo: -30.0, hi: -15.0 });
        assert_eq!(r.get(6), Interval { lo: -30.0, hi: 0.0 });
        for i in 7..13 {
            assert_eq!(r.get(i), Interval { lo: 3.0, hi: 10.0 });
        }
        for i in 13..20 {
            assert_eq!(r.get(i), Interval { lo: 0.1, hi: 1.5 });
        }
    }

    #[test]
    fn degenerate_interval_rejected() {
        let mut b = ParameterRanges::standard().as_tuples();
        b[3] = (2.0, 2.0);
        assert!(matches!(
            ParameterRanges::new(&b),
            Err(GeometryError::EmptyInterval { .. })
        ));
    }

    #[test]
    fn y_samples_within_range() {
        let r = ParameterRanges::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let p = r.sample(&mut rng);
            for node in 1..=6 {
                assert!((3.0..=10.0).contains(&p.y(node)));
            }
        }
    }

    #[test]
    fn equal_radii_make_rectangle() {
        let t = two_nodes(NodeSpec::new(0.0, 0.0, 1.0), NodeSpec::new(10.0, 0.0, 1.0));
        assert_eq!(t.vertices, [[0.0, 1.0], [10.0, 1.0], [10.0, -1.0], [0.0, -1.0]]);
    }

    #[test]
    fn vertical_segment_trapezoid() {
        let t = two_nodes(NodeSpec::new(0.0, 0.0, 1.0), NodeSpec::new(0.0, 5.0, 0.5));
        let mut v: Vec<Point> = t.vertices.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(v, vec![[-1.0, 0.0], [-0.5, 5.0], [0.5, 5.0], [1.0, 0.0]]);
    }

    #[test]
    fn coincident_centers_are_degenerate() {
        let mut p = ParameterRanges::standard().midpoint();
        // node 3 onto node 4: X3 = X4 = 0, Y3 = Y4
        p.0[2] = 0.0;
        p.0[3] = 0.0;
        p.0[Y_OFFSET + 3] = p.0[Y_OFFSET + 2];
        let conn = ConnectionMap::default();
        assert_eq!(
            build_layout(&p, &conn),
            Err(GeometryError::DegenerateSegment { a: 3, b: 4 })
        );
        assert_eq!(
            check_geometry(&p, &conn),
            GeometryVerdict::Fail(GeometryFault::Degenerate { pair: (3, 4) })
        );
    }

    #[test]
    fn forced_crossing_is_detected() {
        assert!(segments_intersect([0.0, 5.0], [10.0, 5.0], [5.0, 0.0], [5.0, 10.0]));
        assert!(!segments_intersect([0.0, 5.0], [4.0, 5.0], [5.0, 0.0], [5.0, 10.0]));
        // collinear overlap and endpoint touching both count
        assert!(segments_intersect([0.0, 0.0], [2.0, 0.0], [1.0, 0.0], [3.0, 0.0]));
        assert!(segments_intersect([0.0, 0.0], [1.0, 1.0], [1.0, 1.0], [2.0, 0.0]));
        assert!(!segments_intersect([0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]));
    }

    #[test]
    fn crossing_connections_fail() {
        // Put node 7 far left and node 3 high so that 3-7 passes through 1-2.
        let mut p = ParameterRanges::standard().midpoint();
        p.0[0] = -25.0; // X1
        p.0[1] = -14.0; // X2
        p.0[Y_OFFSET] = 3.0; // Y1
        p.0[Y_OFFSET + 1] = 3.0; // Y2
        p.0[2] = -1.0; // X3
        p.0[Y_OFFSET + 2] = 10.0; // Y3
        p.0[6] = -30.0; // X7
        p.0[R_OFFSET..].iter_mut().for_each(|r| *r = 0.2);
        let v = check_geometry(&p, &ConnectionMap::default());
        assert!(matches!(v, GeometryVerdict::Fail(GeometryFault::Crossing { .. })), "{v:?}");
    }

    #[test]
    fn feed_short_detected() {
        // Node 3 near the feed: trapezoid 3-7 sweeps through the feed disc.
        let mut p = ParameterRanges::standard().midpoint();
        p.0[2] = -0.4; // X3
        p.0[6] = 0.0; // X7
        p.0[R_OFFSET + 2] = 1.5;
        p.0[R_OFFSET + 6] = 1.5;
        let v = check_geometry(&p, &ConnectionMap::default());
        assert_eq!(
            v,
            GeometryVerdict::Fail(GeometryFault::Short {
                pair: (3, 7),
                kind: ShortKind::Feed
            })
        );
    }

    #[test]
    fn typical_shape_passes() {
        let p = ParameterRanges::standard().midpoint();
        assert!(check_geometry(&p, &ConnectionMap::default()).is_pass());
        // small radii, all Y at 3 mm
        let mut q = p;
        q.0[Y_OFFSET..R_OFFSET].iter_mut().for_each(|y| *y = 3.0);
        q.0[R_OFFSET..].iter_mut().for_each(|r| *r = 0.1);
        assert!(check_geometry(&q, &ConnectionMap::default()).is_pass());
    }

    #[test]
    fn side_lengths_match_radii() {
        let r = ParameterRanges::standard();
        let conn = ConnectionMap::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let p = r.sample(&mut rng);
            let nodes = conn.nodes(&p);
            let layout = build_layout(&p, &conn).unwrap();
            assert_eq!(layout.trapezoids.len(), conn.pairs().len());
            for t in &layout.trapezoids {
                let v = t.vertices;
                let start = (v[0][0] - v[3][0]).hypot(v[0][1] - v[3][1]);
                let end = (v[1][0] - v[2][0]).hypot(v[1][1] - v[2][1]);
                assert!((start - 2.0 * nodes[t.from - 1].r).abs() < 1e-9);
                assert!((end - 2.0 * nodes[t.to - 1].r).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn vertices_within_inflated_disc_box() {
        let r = ParameterRanges::standard();
        let conn = ConnectionMap::default();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..500 {
            let p = r.sample(&mut rng);
            let layout = build_layout(&p, &conn).unwrap();
            let rmax = layout.discs.iter().map(|d| d.r).fold(0.0, f64::max);
            let minx = layout.discs.iter().map(|d| d.x).fold(f64::INFINITY, f64::min) - rmax;
            let maxx = layout.discs.iter().map(|d| d.x).fold(f64::NEG_INFINITY, f64::max) + rmax;
            let miny = layout.discs.iter().map(|d| d.y).fold(f64::INFINITY, f64::min) - rmax;
            let maxy = layout.discs.iter().map(|d| d.y).fold(f64::NEG_INFINITY, f64::max) + rmax;
            for t in &layout.trapezoids {
                for v in &t.vertices {
                    assert!(v[0] >= minx - 1e-12 && v[0] <= maxx + 1e-12);
                    assert!(v[1] >= miny - 1e-12 && v[1] <= maxy + 1e-12);
                }
            }
        }
    }

    #[test]
    fn normalize_round_trip() {
        let r = ParameterRanges::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = r.sample(&mut rng);
        let q = r.denormalize(&r.normalize(&p)).unwrap();
        for i in 0..PARAM_COUNT {
            assert!((p.0[i] - q.0[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn svg_has_one_polygon_per_trapezoid() {
        let r = ParameterRanges::standard();
        let conn = ConnectionMap::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let layouts: Vec<_> = (0..5)
            .map(|_| build_layout(&sample_valid(&r, &conn, &mut rng, 1000).unwrap(), &conn).unwrap())
            .collect();
        let svg = layouts_to_svg(&layouts, 10);
        assert_eq!(svg.matches("<polygon").count(), 5 * 7);
        assert_eq!(svg.matches("<g id=").count(), 5);
        let json = layout_to_json(&layouts[0]);
        assert_eq!(json.as_array().unwrap().len(), 7);
    }
}
