#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use mitotrace::config::{AlgorithmSettings, RunConfig, ZRange};
use mitotrace::geometry::Point;
use mitotrace::synth::{Organelle, Phantom};

/// Model read back from a binary IMOD file.
#[derive(Debug)]
pub struct ImodModel {
    pub version: String,
    pub xmax: i32,
    pub ymax: i32,
    pub zmax: i32,
    pub scale: [f32; 3],
    pub pixsize: f32,
    pub units: i32,
    pub objects: Vec<ImodObject>,
}

#[derive(Debug)]
pub struct ImodObject {
    pub name: String,
    pub flags: u32,
    pub contours: Vec<Vec<[f32; 3]>>,
}

impl ImodObject {
    pub fn closed(&self) -> bool {
        self.flags & (1 << 3) == 0
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> &'a [u8] {
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        s
    }
    fn i32(&mut self) -> i32 {
        i32::from_be_bytes(self.take(4).try_into().unwrap())
    }
    fn u32(&mut self) -> u32 {
        u32::from_be_bytes(self.take(4).try_into().unwrap())
    }
    fn f32(&mut self) -> f32 {
        f32::from_be_bytes(self.take(4).try_into().unwrap())
    }
    fn text(&mut self, n: usize) -> String {
        let raw = self.take(n);
        let end = raw.iter().position(|&b| b == 0).unwrap_or(n);
        String::from_utf8_lossy(&raw[..end]).into_owned()
    }
}

/// Reads the header, objects and contours of an IMOD binary model,
/// skipping chunks it does not know.
pub fn read_imod(buf: &[u8]) -> ImodModel {
    let mut c = Cursor { buf, pos: 0 };
    assert_eq!(c.take(4), b"IMOD");
    let version = c.text(4);
    let _name = c.text(128);
    let (xmax, ymax, zmax) = (c.i32(), c.i32(), c.i32());
    let objsize = c.i32();
    let _flags = c.u32();
    let _draw = (c.i32(), c.i32(), c.i32(), c.i32());
    let _offset = [c.f32(), c.f32(), c.f32()];
    let scale = [c.f32(), c.f32(), c.f32()];
    let _current = (c.i32(), c.i32(), c.i32(), c.i32(), c.i32());
    let pixsize = c.f32();
    let units = c.i32();
    let _csum = c.i32();
    let _angles = [c.f32(), c.f32(), c.f32()];
    assert_eq!(c.pos, 240, "header length");

    let mut objects: Vec<ImodObject> = Vec::new();
    loop {
        let id = c.take(4);
        match id {
            b"IEOF" => break,
            b"OBJT" => {
                let name = c.text(64);
                c.take(64);
                let contsize = c.i32();
                let flags = c.u32();
                c.take(4 + 4 + 12 + 4 + 8);
                let meshsize = c.i32();
                let _surf = c.i32();
                let mut contours = Vec::new();
                for _ in 0..contsize {
                    assert_eq!(c.take(4), b"CONT");
                    let n = c.i32();
                    c.take(12);
                    contours.push((0..n).map(|_| [c.f32(), c.f32(), c.f32()]).collect());
                }
                assert_eq!(meshsize, 0);
                objects.push(ImodObject { name, flags, contours });
            }
            _ => {
                let size = c.i32() as usize;
                c.take(size);
            }
        }
    }
    assert_eq!(c.pos, buf.len(), "bytes after IEOF");
    assert_eq!(objects.len(), objsize as usize);
    ImodModel {
        version,
        xmax,
        ymax,
        zmax,
        scale,
        pixsize,
        units,
        objects,
    }
}

/// Vertices and faces as parsed by the `ply-rs` reader.
pub fn read_ply(path: &Path) -> (Vec<[f32; 3]>, Vec<Vec<i32>>) {
    use ply_rs::parser::Parser;
    use ply_rs::ply::{DefaultElement, Property};
    let mut f = std::fs::File::open(path).unwrap();
    let ply = Parser::<DefaultElement>::new().read_ply(&mut f).unwrap();
    let float = |e: &DefaultElement, k: &str| match e.get(k) {
        Some(Property::Float(v)) => *v,
        other => panic!("{k}: {other:?}"),
    };
    let vertices = ply
        .payload
        .get("vertex")
        .map(|v| v.iter().map(|e| [float(e, "x"), float(e, "y"), float(e, "z")]).collect())
        .unwrap_or_default();
    let faces = ply
        .payload
        .get("face")
        .map(|v| {
            v.iter()
                .map(|e| match e.get("vertex_indices") {
                    Some(Property::ListInt(l)) => l.clone(),
                    other => panic!("face: {other:?}"),
                })
                .collect()
        })
        .unwrap_or_default();
    (vertices, faces)
}

/// Small two-block stack: one cristae-filled organelle and one flat ring.
pub fn small_phantom() -> Phantom {
    Phantom {
        width: 200,
        height: 320,
        z_first: 1,
        z_last: 10,
        organelles: vec![
            Organelle {
                center: Point::new(110.0, 90.0),
                semi_axes: (60.0, 42.0),
                rotation: 0.2,
                cristae_spacing: Some(12.0),
                gap: 0.0,
            },
            Organelle {
                center: Point::new(110.0, 250.0),
                semi_axes: (40.0, 34.0),
                rotation: 0.0,
                cristae_spacing: None,
                gap: 0.0,
            },
        ],
        ..Phantom::default()
    }
}

pub fn phantom_name(z: u32) -> String {
    format!("phantom{z:04}.png")
}

pub fn config_for(ph: &Phantom, src: &Path, dst: &Path) -> RunConfig {
    let mut cfg = RunConfig::new("phantom%04d.png", ph.psize, ZRange::new(ph.z_first, ph.z_last).unwrap());
    cfg.src = src.to_path_buf();
    cfg.dst = dst.to_path_buf();
    cfg
}

pub fn settings() -> AlgorithmSettings {
    AlgorithmSettings::default()
}

/// Every file of `dir` except the manifest, by name.
pub fn outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "manifest.txt")
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect()
}

/// Names whose bytes differ, or that exist on one side only.
pub fn differing(a: &BTreeMap<String, Vec<u8>>, b: &BTreeMap<String, Vec<u8>>) -> Vec<String> {
    let mut names: Vec<&String> = a.keys().chain(b.keys()).collect();
    names.sort();
    names.dedup();
    names
        .into_iter()
        .filter(|n| a.get(*n) != b.get(*n))
        .cloned()
        .collect()
}

/// Every directed edge of a triangle set appears once and its reverse once.
pub fn closed_manifold(triangles: &[[u32; 3]]) -> bool {
    let mut directed: std::collections::HashMap<(u32, u32), u32> = std::collections::HashMap::new();
    for t in triangles {
        for k in 0..3 {
            *directed.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
        }
    }
    directed
        .iter()
        .all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
}

/// Signed volume of a triangle mesh.
pub fn mesh_volume(vertices: &[[f32; 3]], triangles: &[[u32; 3]]) -> f64 {
    triangles
        .iter()
        .map(|t| {
            let [a, b, c] = t.map(|i| vertices[i as usize].map(f64::from));
            (a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
                + a[2] * (b[0] * c[1] - b[1] * c[0]))
                / 6.0
        })
        .sum()
}
