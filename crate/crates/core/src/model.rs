//! Object models as point clouds: ASCII PLY / OBJ loading, farthest point
//! sampling of keypoints, and model diameter.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::Point3;

/// Above this many points the diameter is computed on a seeded subsample.
pub const DIAMETER_EXACT_LIMIT: usize = 5000;
const DIAMETER_SEED: u64 = 0x6d6f_6465_6c44;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCloud {
    pub points: Vec<Point3>,
    pub name: String,
    pub symmetric: bool,
}

impl ModelCloud {
    pub fn new(name: impl Into<String>, points: Vec<Point3>, symmetric: bool) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::TooFewPoints {
                needed: 4,
                have: points.len(),
            });
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::DegenerateInput("non-finite model vertex"));
        }
        Ok(Self {
            points,
            name: name.into(),
            symmetric,
        })
    }

    /// Points on the surface of an axis-aligned box centered at the origin,
    /// on a regular grid with spacing close to `spacing`.
    pub fn box_surface(name: impl Into<String>, extents: [f64; 3], spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) || extents.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::Config("box extents and spacing must be positive".into()));
        }
        let steps: Vec<usize> = extents.iter().map(|e| ((e / spacing).ceil() as usize).max(1)).collect();
        let coord = |axis: usize, i: usize| -0.5 * extents[axis] + extents[axis] * i as f64 / steps[axis] as f64;
        let mut points = Vec::new();
        for i in 0..=steps[0] {
            for j in 0..=steps[1] {
                for k in 0..=steps[2] {
                    let on_face = i == 0 || i == steps[0] || j == 0 || j == steps[1] || k == 0 || k == steps[2];
                    if on_face {
                        points.push(Point3::new(coord(0, i), coord(1, j), coord(2, k)));
                    }
                }
            }
        }
        Self::new(name, points, false)
    }

    pub fn centroid(&self) -> Point3 {
        let n = self.points.len() as f64;
        let (sx, sy, sz) = self
            .points
            .iter()
            .fold((0.0, 0.0, 0.0), |a, p| (a.0 + p.x, a.1 + p.y, a.2 + p.z));
        Point3::new(sx / n, sy / n, sz / n)
    }

    /// Writes the cloud as ASCII PLY (vertices only).
    pub fn write_ply(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        writeln!(out, "ply\nformat ascii 1.0\ncomment {}", self.name).unwrap();
        writeln!(out, "element vertex {}", self.points.len()).unwrap();
        writeln!(out, "property float x\nproperty float y\nproperty float z\nend_header").unwrap();
        for p in &self.points {
            writeln!(out, "{} {} {}", p.x, p.y, p.z).unwrap();
        }
        crate::io::write_atomic(path, &out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeypointSet {
    pub points3: Vec<Point3>,
    /// Index of each keypoint in the source cloud, in selection order.
    pub indices: Vec<usize>,
}

impl KeypointSet {
    pub fn count(&self) -> usize {
        self.points3.len()
    }
}

/// Loads an ASCII PLY or OBJ file. Faces and all non-vertex records are ignored.
pub fn load_model(path: &Path) -> Result<ModelCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let is_ply = bytes.starts_with(b"ply");
    if is_ply {
        let header_end = find_subslice(&bytes, b"end_header").unwrap_or(bytes.len());
        let header = String::from_utf8_lossy(&bytes[..header_end]);
        if header.lines().any(|l| l.trim_start().starts_with("format binary")) {
            return Err(Error::parse(path, 2, "binary PLY is not supported; convert to ASCII"));
        }
    }
    let text = String::from_utf8(bytes).map_err(|_| Error::parse(path, 0, "file is not valid UTF-8"))?;
    let points = if is_ply {
        parse_ply(path, &text)?
    } else {
        parse_obj(path, &text)?
    };
    ModelCloud::new(name, points, false)
}

fn find_subslice(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

fn parse_ply(path: &Path, text: &str) -> Result<Vec<Point3>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(Error::parse(path, 1, "missing 'ply' magic")),
    }

    struct Element {
        name: String,
        count: usize,
        props: Vec<String>,
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut saw_format = false;
    let mut header_done = false;
    for (ln, line) in lines.by_ref() {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                if tok.next() != Some("ascii") {
                    return Err(Error::parse(path, ln, "only 'format ascii 1.0' is supported"));
                }
                saw_format = true;
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                let (Some(name), Some(count)) = (tok.next(), tok.next()) else {
                    return Err(Error::parse(path, ln, "malformed element line"));
                };
                let count = count
                    .parse()
                    .map_err(|_| Error::parse(path, ln, format!("bad element count '{count}'")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let Some(el) = elements.last_mut() else {
                    return Err(Error::parse(path, ln, "property before any element"));
                };
                let parts: Vec<&str> = tok.collect();
                let Some(name) = parts.last() else {
                    return Err(Error::parse(path, ln, "malformed property line"));
                };
                el.props.push(name.to_string());
            }
            Some("end_header") => {
                header_done = true;
                break;
            }
            Some(other) => {
                return Err(Error::parse(path, ln, format!("unexpected header keyword '{other}'")));
            }
        }
    }
    if !header_done {
        return Err(Error::parse(path, text.lines().count(), "missing end_header"));
    }
    if !saw_format {
        return Err(Error::parse(path, 2, "missing format line"));
    }

    let mut points = Vec::new();
    for el in &elements {
        let xyz = if el.name == "vertex" {
            let find = |n: &str| el.props.iter().position(|p| p == n);
            match (find("x"), find("y"), find("z")) {
                (Some(x), Some(y), Some(z)) => Some((x, y, z)),
                _ => return Err(Error::parse(path, 0, "vertex element lacks x/y/z properties")),
            }
        } else {
            None
        };
        for _ in 0..el.count {
            let Some((ln, line)) = lines.next() else {
                return Err(Error::parse(
                    path,
                    text.lines().count(),
                    format!("unexpected end of file in element '{}'", el.name),
                ));
            };
            let Some((ix, iy, iz)) = xyz else { continue };
            let vals: Vec<&str> = line.split_whitespace().collect();
            let get = |i: usize| -> Result<f64> {
                let s = vals
                    .get(i)
                    .ok_or_else(|| Error::parse(path, ln, "too few vertex values"))?;
                let v: f64 = s
                    .parse()
                    .map_err(|_| Error::parse(path, ln, format!("bad number '{s}'")))?;
                if !v.is_finite() {
                    return Err(Error::parse(path, ln, "non-finite coordinate"));
                }
                Ok(v)
            };
            points.push(Point3::new(get(ix)?, get(iy)?, get(iz)?));
        }
    }
    Ok(points)
}

fn parse_obj(path: &Path, text: &str) -> Result<Vec<Point3>> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let mut tok = line.split_whitespace();
        if tok.next() != Some("v") {
            continue;
        }
        let mut xyz = [0.0; 3];
        for c in &mut xyz {
            let s = tok
                .next()
                .ok_or_else(|| Error::parse(path, i + 1, "vertex needs three coordinates"))?;
            *c = s
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::parse(path, i + 1, format!("bad number '{s}'")))?;
        }
        points.push(Point3::new(xyz[0], xyz[1], xyz[2]));
    }
    Ok(points)
}

/// Index of the point farthest from the centroid (lowest index on ties).
pub fn default_fps_start(cloud: &ModelCloud) -> usize {
    let c = cloud.centroid();
    let mut best = (0, f64::NEG_INFINITY);
    for (i, p) in cloud.points.iter().enumerate() {
        let d = p.distance(c);
        if d > best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// Greedy max-min selection of `n` points starting at `start`
/// (defaults to [`default_fps_start`]). Ties go to the lowest index.
pub fn farthest_point_sampling(cloud: &ModelCloud, n: usize, start: Option<usize>) -> Result<KeypointSet> {
    let pts = &cloud.points;
    if n > pts.len() {
        return Err(Error::TooFewPoints {
            needed: n,
            have: pts.len(),
        });
    }
    let start = start.unwrap_or_else(|| default_fps_start(cloud));
    if start >= pts.len() {
        return Err(Error::Config(format!("FPS start index {start} out of range")));
    }
    let mut indices = Vec::with_capacity(n);
    if n == 0 {
        return Ok(KeypointSet {
            points3: Vec::new(),
            indices,
        });
    }
    let mut min_dist = vec![f64::INFINITY; pts.len()];
    let mut current = start;
    loop {
        indices.push(current);
        if indices.len() == n {
            break;
        }
        let c = pts[current];
        let mut next = (usize::MAX, f64::NEG_INFINITY);
        for (i, p) in pts.iter().enumerate() {
            let d = p.distance(c);
            if d < min_dist[i] {
                min_dist[i] = d;
            }
            if min_dist[i] > next.1 {
                next = (i, min_dist[i]);
            }
        }
        current = next.0;
    }
    Ok(KeypointSet {
        points3: indices.iter().map(|&i| pts[i]).collect(),
        indices,
    })
}

fn max_pairwise(points: &[Point3]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max(a.distance(*b));
        }
    }
    best
}

/// Maximum pairwise distance. Exact up to [`DIAMETER_EXACT_LIMIT`] points,
/// otherwise computed on a fixed-seed subsample of that size.
pub fn model_diameter(cloud: &ModelCloud) -> Result<f64> {
    let pts = &cloud.points;
    if pts.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            have: pts.len(),
        });
    }
    if pts.len() <= DIAMETER_EXACT_LIMIT {
        return Ok(max_pairwise(pts));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(DIAMETER_SEED);
    let mut idx = sample(&mut rng, pts.len(), DIAMETER_EXACT_LIMIT).into_vec();
    idx.sort_unstable();
    let sub: Vec<Point3> = idx.iter().map(|&i| pts[i]).collect();
    Ok(max_pairwise(&sub))
}
