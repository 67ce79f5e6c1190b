//! 2-D image-method ray tracer over a map of polygonal buildings.
//!
//! Source images are expanded once per jammer position into a tree (one level
//! per specular bounce). Each node keeps the edge it was mirrored across, and a
//! child is only spawned for edges that face the parent image and fall inside
//! the parent's illumination wedge. For an observer, every node is back-traced
//! into a concrete polyline and checked for occlusion. Paths combine
//! incoherently in the linear power domain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{JammerParams, Position};

pub const DEFAULT_REFLECTION_LOSS_DB: f64 = 6.0;
pub const DEFAULT_MAX_REFLECTIONS: usize = 4;
pub const DEFAULT_FLOOR_DBW: f64 = -200.0;

const EPS: f64 = 1e-9;

type P2 = [f64; 2];

#[inline]
fn sub(a: P2, b: P2) -> P2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
fn cross(a: P2, b: P2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
fn norm(a: P2) -> f64 {
    (a[0] * a[0] + a[1] * a[1]).sqrt()
}

/// Simple polygon, stored counter-clockwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct Polygon {
    vertices: Vec<P2>,
}

impl Polygon {
    pub fn new(mut vertices: Vec<P2>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidParameter("polygon needs at least 3 vertices".into()));
        }
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("non-finite polygon vertex".into()));
        }
        let area2: f64 = (0..vertices.len()).map(|i| cross(vertices[i], vertices[(i + 1) % vertices.len()])).sum();
        if area2.abs() < EPS {
            return Err(Error::InvalidParameter("degenerate polygon (zero area)".into()));
        }
        if area2 < 0.0 {
            vertices.reverse();
        }
        let poly = Self { vertices };
        if !poly.is_simple() {
            return Err(Error::InvalidParameter("polygon edges self-intersect".into()));
        }
        Ok(poly)
    }

    /// Axis-aligned rectangle with corners `(x0, y0)` and `(x1, y1)`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let (xa, xb) = (x0.min(x1), x0.max(x1));
        let (ya, yb) = (y0.min(y1), y0.max(y1));
        Self::new(vec![[xa, ya], [xb, ya], [xb, yb], [xa, yb]])
    }

    pub fn vertices(&self) -> &[P2] {
        &self.vertices
    }

    fn edges(&self) -> impl Iterator<Item = (P2, P2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    fn is_simple(&self) -> bool {
        let edges: Vec<_> = self.edges().collect();
        let n = edges.len();
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                if segments_touch(edges[i].0, edges[i].1, edges[j].0, edges[j].1) {
                    return false;
                }
            }
        }
        true
    }

    /// Strict interior test (even-odd rule).
    pub fn contains(&self, p: P2) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                if p[0] < x {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

impl TryFrom<Vec<P2>> for Polygon {
    type Error = Error;
    fn try_from(v: Vec<P2>) -> Result<Self> {
        Polygon::new(v)
    }
}

impl From<Polygon> for Vec<P2> {
    fn from(p: Polygon) -> Self {
        p.vertices
    }
}

fn segments_touch(p: P2, q: P2, r: P2, s: P2) -> bool {
    let d1 = cross(sub(q, p), sub(r, p));
    let d2 = cross(sub(q, p), sub(s, p));
    let d3 = cross(sub(s, r), sub(p, r));
    let d4 = cross(sub(s, r), sub(q, r));
    (d1 * d2 <= 0.0) && (d3 * d4 <= 0.0) && !(d1 == 0.0 && d2 == 0.0 && d3 == 0.0 && d4 == 0.0)
        || (d1 == 0.0 && d2 == 0.0 && d3 == 0.0 && d4 == 0.0 && collinear_overlap(p, q, r, s))
}

fn collinear_overlap(p: P2, q: P2, r: P2, s: P2) -> bool {
    let axis = if (q[0] - p[0]).abs() >= (q[1] - p[1]).abs() { 0 } else { 1 };
    let (a0, a1) = (p[axis].min(q[axis]), p[axis].max(q[axis]));
    let (b0, b1) = (r[axis].min(s[axis]), r[axis].max(s[axis]));
    a0 <= b1 && b0 <= a1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildingMap {
    pub polygons: Vec<Polygon>,
    #[serde(default = "default_loss")]
    pub reflection_loss_db: f64,
    #[serde(default = "default_max_reflections")]
    pub max_reflections: usize,
    #[serde(default = "default_floor")]
    pub floor_dbw: f64,
}

fn default_loss() -> f64 {
    DEFAULT_REFLECTION_LOSS_DB
}
fn default_max_reflections() -> usize {
    DEFAULT_MAX_REFLECTIONS
}
fn default_floor() -> f64 {
    DEFAULT_FLOOR_DBW
}

impl Default for BuildingMap {
    fn default() -> Self {
        Self::new(Vec::new())
    }
}

impl BuildingMap {
    pub fn new(polygons: Vec<Polygon>) -> Self {
        Self {
            polygons,
            reflection_loss_db: DEFAULT_REFLECTION_LOSS_DB,
            max_reflections: DEFAULT_MAX_REFLECTIONS,
            floor_dbw: DEFAULT_FLOOR_DBW,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reflection_loss_db >= 0.0) {
            return Err(Error::InvalidParameter("reflection loss must be >= 0 dB".into()));
        }
        Ok(())
    }

    /// Index of the building containing `p`, if any.
    pub fn building_at(&self, p: P2) -> Option<usize> {
        self.polygons.iter().position(|poly| poly.contains(p))
    }

    fn wall_segments(&self) -> Vec<Wall> {
        self.polygons.iter().flat_map(|poly| poly.edges()).map(|(a, b)| Wall { a, b }).collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Wall {
    a: P2,
    b: P2,
}

impl Wall {
    /// Positive on the exterior side of a counter-clockwise polygon edge.
    #[inline]
    fn side(&self, p: P2) -> f64 {
        -cross(sub(self.b, self.a), sub(p, self.a))
    }

    fn mirror(&self, p: P2) -> P2 {
        let d = sub(self.b, self.a);
        let t = ((p[0] - self.a[0]) * d[0] + (p[1] - self.a[1]) * d[1]) / (d[0] * d[0] + d[1] * d[1]);
        let foot = [self.a[0] + t * d[0], self.a[1] + t * d[1]];
        [2.0 * foot[0] - p[0], 2.0 * foot[1] - p[1]]
    }

    /// Intersection of segment `p -> q` with this wall, as the point on the wall.
    fn hit(&self, p: P2, q: P2) -> Option<P2> {
        let r = sub(q, p);
        let s = sub(self.b, self.a);
        let den = cross(r, s);
        if den.abs() < 1e-300 {
            return None;
        }
        let ap = sub(self.a, p);
        let t = cross(ap, s) / den;
        let u = cross(ap, r) / den;
        if !(-EPS..=1.0 + EPS).contains(&t) || !(-EPS..=1.0 + EPS).contains(&u) {
            return None;
        }
        Some([self.a[0] + u * s[0], self.a[1] + u * s[1]])
    }

    /// True if the open segment `p -> q` crosses this wall.
    #[inline]
    fn blocks(&self, p: P2, q: P2) -> bool {
        let r = sub(q, p);
        let s = sub(self.b, self.a);
        let den = cross(r, s);
        if den == 0.0 {
            return false;
        }
        let ap = sub(self.a, p);
        let t = cross(ap, s) / den;
        let u = cross(ap, r) / den;
        t > EPS && t < 1.0 - EPS && (-EPS..=1.0 + EPS).contains(&u)
    }
}

/// Walls of one building with their bounding box, widened by `EPS`.
#[derive(Debug, Clone)]
struct WallGroup {
    bbox: [f64; 4],
    start: usize,
    end: usize,
}

fn wall_groups(polygons: &[Polygon]) -> Vec<WallGroup> {
    let mut start = 0;
    polygons
        .iter()
        .map(|poly| {
            let mut bbox = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
            for v in poly.vertices() {
                bbox = [bbox[0].min(v[0]), bbox[1].min(v[1]), bbox[2].max(v[0]), bbox[3].max(v[1])];
            }
            let g = WallGroup {
                bbox: [bbox[0] - EPS, bbox[1] - EPS, bbox[2] + EPS, bbox[3] + EPS],
                start,
                end: start + poly.vertices().len(),
            };
            start = g.end;
            g
        })
        .collect()
}

/// Slab test: does segment `p -> q` touch the box `[xmin, ymin, xmax, ymax]`?
#[inline]
fn segment_meets_box(p: P2, q: P2, b: &[f64; 4]) -> bool {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for axis in 0..2 {
        let d = q[axis] - p[axis];
        let (lo, hi) = (b[axis], b[axis + 2]);
        if d == 0.0 {
            if p[axis] < lo || p[axis] > hi {
                return false;
            }
        } else {
            let (mut a, mut c) = ((lo - p[axis]) / d, (hi - p[axis]) / d);
            if a > c {
                std::mem::swap(&mut a, &mut c);
            }
            t0 = t0.max(a);
            t1 = t1.min(c);
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone)]
struct ImageNode {
    image: P2,
    wall: usize,
    /// Portion of the wall the incoming beam can reach.
    lit: Wall,
    parent: Option<usize>,
    depth: usize,
}

/// Image tree for one source position over one building map.
#[derive(Debug, Clone)]
pub struct RayTracer {
    source: P2,
    p0_linear: f64,
    gamma: f64,
    bounce_gain: f64,
    floor_dbw: f64,
    min_path_m: f64,
    walls: Vec<Wall>,
    groups: Vec<WallGroup>,
    nodes: Vec<ImageNode>,
    polygons: Vec<Polygon>,
}

impl RayTracer {
    pub fn new(map: &BuildingMap, jp: &JammerParams) -> Result<Self> {
        Self::build(map, jp, true)
    }

    /// `prune = false` keeps every image whose wall faces its parent; paths
    /// are identical, only slower to evaluate.
    fn build(map: &BuildingMap, jp: &JammerParams, prune: bool) -> Result<Self> {
        map.validate()?;
        jp.validate()?;
        if jp.theta.dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: jp.theta.dim() });
        }
        let source = [jp.theta.x(), jp.theta.y()];
        if let Some(i) = map.building_at(source) {
            return Err(Error::InsideBuilding(i));
        }
        let walls = map.wall_segments();
        let mut nodes: Vec<ImageNode> = Vec::new();
        let mut frontier: Vec<usize> = Vec::new();
        for (w, wall) in walls.iter().enumerate() {
            if wall.side(source) <= EPS {
                continue;
            }
            let lit = if prune { unshadowed(source, *wall, &walls, w, None) } else { Some(*wall) };
            if let Some(lit) = lit {
                nodes.push(ImageNode { image: wall.mirror(source), wall: w, lit, parent: None, depth: 1 });
                frontier.push(nodes.len() - 1);
            }
        }
        for _ in 1..map.max_reflections {
            let mut next = Vec::new();
            for &ni in &frontier {
                let parent = nodes[ni].clone();
                let pw = walls[parent.wall];
                for (w, wall) in walls.iter().enumerate() {
                    if w == parent.wall || wall.side(parent.image) <= EPS {
                        continue;
                    }
                    let lit = if prune {
                        clip_to_beam(parent.image, &parent.lit, &pw, wall)
                            .and_then(|lit| unshadowed(parent.image, lit, &walls, w, Some(parent.wall)))
                    } else {
                        Some(*wall)
                    };
                    let Some(lit) = lit else {
                        continue;
                    };
                    nodes.push(ImageNode {
                        image: wall.mirror(parent.image),
                        wall: w,
                        lit,
                        parent: Some(ni),
                        depth: parent.depth + 1,
                    });
                    next.push(nodes.len() - 1);
                }
            }
            frontier = next;
        }
        let bounce_gain = 10f64.powf(-map.reflection_loss_db / 10.0);
        Ok(Self {
            source,
            p0_linear: 10f64.powf(jp.p0 / 10.0),
            gamma: jp.gamma,
            bounce_gain,
            floor_dbw: map.floor_dbw,
            min_path_m: 0.0,
            walls,
            groups: wall_groups(&map.polygons),
            nodes,
            polygons: map.polygons.clone(),
        })
    }

    /// Clamp unfolded path lengths from below (e.g. at the far-field distance).
    pub fn with_min_path(mut self, min_path_m: f64) -> Self {
        self.min_path_m = min_path_m;
        self
    }

    pub fn image_count(&self) -> usize {
        self.nodes.len()
    }

    fn visible(&self, p: P2, q: P2) -> bool {
        !self
            .groups
            .iter()
            .any(|g| segment_meets_box(p, q, &g.bbox) && self.walls[g.start..g.end].iter().any(|w| w.blocks(p, q)))
    }

    /// Unfolded lengths and bounce counts of every valid path to `rx`.
    pub fn paths(&self, rx: P2) -> Vec<(f64, usize)> {
        let mut out = Vec::new();
        if self.visible(rx, self.source) {
            out.push((norm(sub(rx, self.source)), 0));
        }
        'node: for node in &self.nodes {
            let leaf_wall = &self.walls[node.wall];
            if leaf_wall.side(rx) <= EPS {
                continue;
            }
            let mut point = rx;
            let mut cur = Some(node);
            while let Some(n) = cur {
                let wall = &self.walls[n.wall];
                if wall.side(point) <= EPS {
                    continue 'node;
                }
                let Some(q) = wall.hit(point, n.image) else {
                    continue 'node;
                };
                if !self.visible(point, q) {
                    continue 'node;
                }
                point = q;
                cur = n.parent.map(|p| &self.nodes[p]);
            }
            if !self.visible(point, self.source) {
                continue;
            }
            out.push((norm(sub(rx, node.image)), node.depth));
        }
        out
    }

    /// Received power at `rx`, dBW.
    pub fn rss(&self, rx: P2) -> Result<f64> {
        if let Some(i) = self.polygons.iter().position(|p| p.contains(rx)) {
            return Err(Error::InsideBuilding(i));
        }
        Ok(self.rss_unchecked(rx))
    }

    pub(crate) fn rss_unchecked(&self, rx: P2) -> f64 {
        let total: f64 = self
            .paths(rx)
            .into_iter()
            .map(|(len, bounces)| {
                self.p0_linear / len.max(self.min_path_m).powf(self.gamma) * self.bounce_gain.powi(bounces as i32)
            })
            .sum();
        if total > 0.0 {
            10.0 * total.log10()
        } else {
            self.floor_dbw
        }
    }
}

/// Necessary condition for `wall` to receive rays leaving `parent_wall` from `image`.
/// Shrinks `lit` (a piece of `walls[target]`) to the hull of the part not
/// hidden, as seen from `eye`, by other walls. Only walls entirely past
/// `parent` (when given) cast shadows. `None` when fully hidden.
fn unshadowed(eye: P2, lit: Wall, walls: &[Wall], target: usize, parent: Option<usize>) -> Option<Wall> {
    const TOL: f64 = 1e-9;
    let d = sub(lit.b, lit.a);
    let ae = sub(lit.a, eye);
    // parameter along `lit` where the ray eye -> o meets it, if o lies strictly before it
    let project = |o: P2| -> Option<f64> {
        let u = sub(o, eye);
        let den = cross(u, d);
        if den.abs() < 1e-12 {
            return None;
        }
        let s = cross(ae, d) / den;
        (s > 1.0 + TOL).then(|| cross(ae, u) / den)
    };
    let mut shadows: Vec<(f64, f64)> = Vec::new();
    for (k, o) in walls.iter().enumerate() {
        if k == target || Some(k) == parent {
            continue;
        }
        if let Some(p) = parent {
            if walls[p].side(o.a) < -TOL || walls[p].side(o.b) < -TOL {
                continue;
            }
        }
        let (Some(ta), Some(tb)) = (project(o.a), project(o.b)) else {
            continue;
        };
        // both rays must cross the target line on the same side of the eye
        if cross(sub(o.a, eye), d).signum() != cross(sub(o.b, eye), d).signum() {
            continue;
        }
        let (lo, hi) = if ta < tb { (ta, tb) } else { (tb, ta) };
        if hi - lo > 2.0 * TOL {
            shadows.push((lo + TOL, hi - TOL));
        }
    }
    shadows.sort_by(|x, y| x.0.total_cmp(&y.0));
    // first and last uncovered parameters in [0, 1]
    let mut first = None;
    let mut last = None;
    let mut cursor = 0.0f64;
    for (lo, hi) in shadows {
        if lo > cursor && cursor < 1.0 {
            first.get_or_insert(cursor);
            last = Some(lo.min(1.0));
        }
        cursor = cursor.max(hi);
    }
    if cursor < 1.0 {
        first.get_or_insert(cursor);
        last = Some(1.0);
    }
    let (t0, t1) = (first?, last?);
    if t1 <= t0 {
        return None;
    }
    Some(Wall { a: [lit.a[0] + t0 * d[0], lit.a[1] + t0 * d[1]], b: [lit.a[0] + t1 * d[0], lit.a[1] + t1 * d[1]] })
}

/// Part of `wall` reachable by rays leaving `image` through `lit` (a piece
/// of `parent_wall`), ignoring occlusion. `None` when nothing is reachable.
fn clip_to_beam(image: P2, lit: &Wall, parent_wall: &Wall, wall: &Wall) -> Option<Wall> {
    const TOL_M: f64 = 1e-7;
    let unit = |v: P2| {
        let n = norm(v);
        [v[0] / n, v[1] / n]
    };
    let ra = unit(sub(lit.a, image));
    let rb = unit(sub(lit.b, image));
    let (lo, hi) = if cross(ra, rb) >= 0.0 { (ra, rb) } else { (rb, ra) };
    let pw_len = norm(sub(parent_wall.b, parent_wall.a));
    // signed distances, each non-negative inside the beam
    let planes: [&dyn Fn(P2) -> f64; 3] =
        [&|p| parent_wall.side(p) / pw_len, &|p| cross(lo, sub(p, image)), &|p| -cross(hi, sub(p, image))];
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for g in planes {
        let (ga, gb) = (g(wall.a) + TOL_M, g(wall.b) + TOL_M);
        if ga < 0.0 && gb < 0.0 {
            return None;
        }
        if ga < 0.0 {
            t0 = t0.max(ga / (ga - gb));
        } else if gb < 0.0 {
            t1 = t1.min(ga / (ga - gb));
        }
    }
    if t1 <= t0 {
        return None;
    }
    let d = sub(wall.b, wall.a);
    Some(Wall { a: [wall.a[0] + t0 * d[0], wall.a[1] + t0 * d[1]], b: [wall.a[0] + t1 * d[0], wall.a[1] + t1 * d[1]] })
}

/// Ray-traced received power at `x`, dBW. Builds the image tree on every call;
/// reuse a [`RayTracer`] for many observers.
pub fn raytrace_rss(x: &Position, jp: &JammerParams, map: &BuildingMap) -> Result<f64> {
    if x.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: x.dim() });
    }
    RayTracer::new(map, jp)?.rss([x.x(), x.y()])
}
