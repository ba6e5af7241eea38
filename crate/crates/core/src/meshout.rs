//! Boundary overlays, extruded triangle meshes, PLY and IMOD model output.

use std::fmt::Write as _;
use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::geometry::{self, Point};
use crate::plane::Plane;
use crate::snakes::ZBlock;
use crate::validation::Region;

/// Final regions of one block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockRegions {
    pub block: ZBlock,
    pub regions: Vec<Region>,
}

/// Distinct stroke colours, cycled by region number.
pub const PALETTE: [[u8; 3]; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
];

const STROKE_STEP: f64 = 0.25;

/// Grayscale slice converted to RGB with the contours of its block drawn in
/// a 2-px stroke. `first_colour` is the palette index of the first region.
pub fn render_overlay(gray: &Plane<f32>, regions: &[Region], first_colour: usize) -> RgbImage {
    let (w, h) = (gray.width() as u32, gray.height() as u32);
    let mut img = RgbImage::from_fn(w, h, |x, y| {
        let v = gray.get(x as usize, y as usize).round().clamp(0.0, 255.0) as u8;
        Rgb([v, v, v])
    });
    for (k, r) in regions.iter().enumerate() {
        let colour = Rgb(PALETTE[(first_colour + k) % PALETTE.len()]);
        let n = r.contour.len();
        for i in 0..n {
            let (a, b) = (r.contour[i], r.contour[(i + 1) % n]);
            let steps = (a.distance(b) / STROKE_STEP).ceil().max(1.0) as usize;
            for s in 0..=steps {
                let p = a.lerp(b, s as f64 / steps as f64);
                let (x0, y0) = (p.x.floor() as i64, p.y.floor() as i64);
                for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    let (x, y) = (x0 + dx, y0 + dy);
                    if x >= 0 && y >= 0 && x < w as i64 && y < h as i64 {
                        img.put_pixel(x as u32, y as u32, colour);
                    }
                }
            }
        }
    }
    img
}

/// Palette offset of each block: the number of regions in earlier blocks.
pub fn colour_offsets(sets: &[BlockRegions]) -> Vec<usize> {
    let mut acc = 0;
    sets.iter()
        .map(|s| {
            let o = acc;
            acc += s.regions.len();
            o
        })
        .collect()
}

/// Triangle mesh in nanometres.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f32; 3]>,
    pub triangles: Vec<[u32; 3]>,
    pub region_ids: Vec<u32>,
}

impl Mesh {
    /// Signed volume by the divergence theorem; positive for outward faces.
    pub fn volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i as usize].map(f64::from));
                let cross = [
                    b[1] * c[2] - b[2] * c[1],
                    b[2] * c[0] - b[0] * c[2],
                    b[0] * c[1] - b[1] * c[0],
                ];
                (a[0] * cross[0] + a[1] * cross[1] + a[2] * cross[2]) / 6.0
            })
            .sum()
    }
}

/// Ear-clipping triangulation of a positively oriented simple polygon.
pub fn triangulate(poly: &[Point]) -> Option<Vec<[usize; 3]>> {
    let n = poly.len();
    if n < 3 {
        return None;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(n - 2);
    let mut guard = 0;
    while idx.len() > 3 {
        let m = idx.len();
        let ear = (0..m).find(|&k| {
            let (ia, ib, ic) = (idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]);
            let (a, b, c) = (poly[ia], poly[ib], poly[ic]);
            if (b - a).cross(c - b) <= 1e-12 {
                return false;
            }
            !idx.iter().any(|&j| {
                let p = poly[j];
                j != ia && j != ib && j != ic && p != a && p != b && p != c && in_triangle(p, a, b, c)
            })
        })?;
        out.push([idx[(ear + m - 1) % m], idx[ear], idx[(ear + 1) % m]]);
        idx.remove(ear);
        guard += 1;
        if guard > n {
            return None;
        }
    }
    let (a, b, c) = (poly[idx[0]], poly[idx[1]], poly[idx[2]]);
    if (b - a).cross(c - b) <= 1e-12 {
        return None;
    }
    out.push([idx[0], idx[1], idx[2]]);
    Some(out)
}

fn in_triangle(p: Point, a: Point, b: Point, c: Point) -> bool {
    (b - a).cross(p - a) >= 0.0 && (c - b).cross(p - b) >= 0.0 && (a - c).cross(p - c) >= 0.0
}

/// Prism per region from the bottom of its block's first slice to the top
/// of its last. Regions whose outline cannot be triangulated are skipped.
pub fn extrude_mesh(sets: &[BlockRegions], psize: f64, target_psize: f64) -> Mesh {
    let mut mesh = Mesh::default();
    let mut region_id = 0u32;
    for set in sets {
        let z_bottom = (set.block.z_lo as f64 * psize) as f32;
        let z_top = ((set.block.z_hi + 1) as f64 * psize) as f32;
        for r in &set.regions {
            let id = region_id;
            region_id += 1;
            let poly = geometry::positively_oriented(geometry::remove_collinear(&r.contour));
            let Some(cap) = triangulate(&poly) else {
                log::warn!("block {}: region {id} outline cannot be triangulated; skipped", set.block.index);
                continue;
            };
            let n = poly.len() as u32;
            let base = mesh.vertices.len() as u32;
            for z in [z_bottom, z_top] {
                for p in &poly {
                    mesh.vertices.push([(p.x * target_psize) as f32, (p.y * target_psize) as f32, z]);
                }
            }
            let (b, t) = (|i: u32| base + i, |i: u32| base + n + i);
            for i in 0..n {
                let j = (i + 1) % n;
                mesh.triangles.push([b(i), b(j), t(j)]);
                mesh.triangles.push([b(i), t(j), t(i)]);
            }
            for tri in &cap {
                let [p, q, s] = tri.map(|v| v as u32);
                mesh.triangles.push([t(p), t(q), t(s)]);
                mesh.triangles.push([b(p), b(s), b(q)]);
            }
            mesh.region_ids.resize(mesh.triangles.len(), id);
        }
    }
    mesh
}

/// ASCII PLY 1.0 with float vertices and one index list per face.
pub fn encode_ply(mesh: &Mesh) -> Vec<u8> {
    let mut s = String::new();
    let _ = write!(
        s,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.triangles.len()
    );
    for v in &mesh.vertices {
        let _ = writeln!(s, "{} {} {}", v[0], v[1], v[2]);
    }
    for t in &mesh.triangles {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    s.into_bytes()
}

pub fn write_ply(mesh: &Mesh, path: &Path) -> Result<()> {
    std::fs::write(path, encode_ply(mesh)).map_err(|e| Error::io(path, e))
}

/// Image extent recorded in the model header.
#[derive(Clone, Copy, Debug)]
pub struct ModelExtent {
    pub width: u32,
    pub height: u32,
    pub z_max: u32,
    pub psize: f64,
    pub target_psize: f64,
}

struct Be(Vec<u8>);

impl Be {
    fn tag(&mut self, t: &[u8; 4]) -> &mut Self {
        self.0.extend_from_slice(t);
        self
    }
    fn i32(&mut self, v: i32) -> &mut Self {
        self.0.extend_from_slice(&v.to_be_bytes());
        self
    }
    fn u32(&mut self, v: u32) -> &mut Self {
        self.0.extend_from_slice(&v.to_be_bytes());
        self
    }
    fn f32(&mut self, v: f32) -> &mut Self {
        self.0.extend_from_slice(&v.to_be_bytes());
        self
    }
    fn u8(&mut self, v: u8) -> &mut Self {
        self.0.push(v);
        self
    }
    fn name(&mut self, s: &str, len: usize) -> &mut Self {
        let mut b = s.as_bytes().to_vec();
        b.resize(len, 0);
        self.0.extend_from_slice(&b);
        self
    }
}

const IMOD_UNITS_NM: i32 = -9;

/// Binary IMOD model: one object per region, each holding one closed
/// contour per slice of its block at `z` = slice number.
pub fn encode_imod(sets: &[BlockRegions], extent: &ModelExtent) -> Vec<u8> {
    let objects: Vec<(&ZBlock, &Region)> = sets
        .iter()
        .flat_map(|s| s.regions.iter().map(move |r| (&s.block, r)))
        .collect();
    let mut w = Be(Vec::new());
    w.tag(b"IMOD").tag(b"V1.2").name("mitotrace model", 128);
    w.i32(extent.width as i32)
        .i32(extent.height as i32)
        .i32(extent.z_max as i32 + 1)
        .i32(objects.len() as i32)
        .u32(0)
        .i32(1)
        .i32(1)
        .i32(0)
        .i32(255);
    w.f32(0.0).f32(0.0).f32(0.0);
    w.f32(1.0).f32(1.0).f32((extent.psize / extent.target_psize) as f32);
    w.i32(0).i32(0).i32(0).i32(3).i32(128);
    w.f32(extent.target_psize as f32).i32(IMOD_UNITS_NM).i32(0);
    w.f32(0.0).f32(0.0).f32(0.0);

    for (k, (block, region)) in objects.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        w.tag(b"OBJT").name(&format!("region {k} block {}", block.index), 64);
        for _ in 0..16 {
            w.u32(0);
        }
        w.i32(block.len() as i32).u32(0).i32(0).i32(1);
        for c in colour {
            w.f32(c as f32 / 255.0);
        }
        w.i32(0);
        for v in [0u8, 3, 0, 1, 0, 0, 0, 0] {
            w.u8(v);
        }
        w.i32(0).i32(0);
        for z in block.slices() {
            w.tag(b"CONT").i32(region.contour.len() as i32).u32(0).i32(0).i32(0);
            for p in &region.contour {
                w.f32(p.x as f32).f32(p.y as f32).f32(z as f32);
            }
        }
    }
    w.tag(b"IEOF");
    w.0
}

pub fn write_imod(sets: &[BlockRegions], extent: &ModelExtent, path: &Path) -> Result<()> {
    std::fs::write(path, encode_imod(sets, extent)).map_err(|e| Error::io(path, e))
}
