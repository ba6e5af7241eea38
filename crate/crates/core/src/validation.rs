//! Candidate scoring, threshold filtering and overlap merging.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::binio::{Reader, Writer};
use crate::config::AlgorithmSettings;
use crate::error::{Error, Result};
use crate::geometry::{self, Point, RasterMask};
use crate::plane::Plane;
use crate::ridges::EnergyMap;
use crate::snakes::{BlockField, SnakeContour};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RegionScore {
    pub boundary_energy: f64,
    pub interior_energy: f64,
    pub area_score: f64,
    pub discontinuity: f64,
    pub curvature_score: f64,
    pub signature_score: f64,
    pub total: f64,
}

impl RegionScore {
    pub fn components(&self) -> [f64; 6] {
        [
            self.boundary_energy,
            self.interior_energy,
            self.area_score,
            self.discontinuity,
            self.curvature_score,
            self.signature_score,
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub contour: Vec<Point>,
    pub block: u32,
    pub score: RegionScore,
    /// Indices of the snakes of this block that make up the region.
    pub member_snakes: Vec<u32>,
}

/// Everything scoring needs from one block.
pub struct BlockEvidence {
    /// Block-mean large-scale strength over `energy_ref`.
    pub field: BlockField,
    /// Small-scale strength of every slice in the block.
    pub small: Vec<Plane<f32>>,
}

impl BlockEvidence {
    pub fn new(large: &[&EnergyMap], small: &[&EnergyMap], settings: &AlgorithmSettings) -> BlockEvidence {
        BlockEvidence {
            field: BlockField::new(large, settings.snake_field_floor, settings.energy_ref),
            small: small.iter().map(|m| m.strength.clone()).collect(),
        }
    }
}

const BOUNDARY_SPACING: f64 = 1.0;
const SIGNATURE_SAMPLES: usize = 128;
const SIGNATURE_WINDOW: usize = 8;

/// Scores a candidate contour on six criteria and combines them with the
/// validator weights. A border-flagged snake gets a total of zero.
pub fn score_region(snake: &SnakeContour, evidence: &BlockEvidence, settings: &AlgorithmSettings) -> RegionScore {
    let poly = &snake.nodes;
    let (boundary_energy, discontinuity) = boundary_scores(poly, &evidence.field, settings);
    let mut s = RegionScore {
        boundary_energy,
        interior_energy: interior_score(poly, &evidence.small, settings),
        area_score: area_score(geometry::area(poly), settings),
        discontinuity,
        curvature_score: curvature_score(poly, settings),
        signature_score: signature_score(poly, settings),
        total: 0.0,
    };
    if !snake.border {
        let w = settings.validator_weights();
        s.total = s.components().iter().zip(w).map(|(c, w)| c * w).sum::<f64>().clamp(0.0, 1.0);
    }
    s
}

/// Mean supported strength and supported fraction along the contour. A
/// sample is supported when the block-mean strength reaches
/// `gap_strength_min`.
pub fn boundary_scores(poly: &[Point], field: &BlockField, settings: &AlgorithmSettings) -> (f64, f64) {
    let samples = geometry::boundary_samples(poly, BOUNDARY_SPACING);
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let floor = settings.gap_strength_min / settings.energy_ref;
    let supported: Vec<f64> = samples
        .iter()
        .map(|&p| field.value(p))
        .filter(|&v| v >= floor)
        .collect();
    let fraction = supported.len() as f64 / samples.len() as f64;
    let energy = if supported.is_empty() {
        0.0
    } else {
        supported.iter().sum::<f64>() / supported.len() as f64
    };
    (energy.clamp(0.0, 1.0), fraction)
}

/// Density of small-scale ridge evidence away from the contour, averaged
/// over the block slices. Pixels below `ridge_strength_min` count as zero.
pub fn interior_score(poly: &[Point], small: &[Plane<f32>], settings: &AlgorithmSettings) -> f64 {
    if small.is_empty() {
        return 0.0;
    }
    let mask = geometry::rasterize(poly);
    let (w, h) = (small[0].width() as i64, small[0].height() as i64);
    let pixels: Vec<(usize, usize)> = mask
        .pixels()
        .filter(|&(x, y)| x >= 0 && y >= 0 && x < w && y < h)
        .filter(|&(x, y)| {
            geometry::distance_to_boundary(poly, Point::new(x as f64, y as f64)) > settings.interior_margin
        })
        .map(|(x, y)| (x as usize, y as usize))
        .collect();
    if pixels.is_empty() {
        return 0.0;
    }
    let floor = settings.ridge_strength_min as f32;
    let per_slice: f64 = small
        .iter()
        .map(|p| {
            pixels
                .iter()
                .map(|&(x, y)| p.get(x, y))
                .filter(|&v| v >= floor)
                .fold(0.0, |acc, v| acc + f64::from(v))
                / pixels.len() as f64
        })
        .fold(0.0, |acc, v| acc + v);
    (per_slice / small.len() as f64 / settings.interior_energy_ref).clamp(0.0, 1.0)
}

/// Trapezoid over the equivalent-disk diameter in nanometres.
pub fn area_score(area_px: f64, settings: &AlgorithmSettings) -> f64 {
    let area_nm = area_px * settings.target_psize * settings.target_psize;
    let d = 2.0 * (area_nm / std::f64::consts::PI).sqrt();
    let (a, b, c, e) = (
        settings.area_min_nm,
        settings.area_low_nm,
        settings.area_high_nm,
        settings.area_max_nm,
    );
    if d <= a || d >= e {
        0.0
    } else if d < b {
        (d - a) / (b - a)
    } else if d <= c {
        1.0
    } else {
        (e - d) / (e - c)
    }
}

/// One minus the summed turning beyond `kink_angle_deg`, in radians, over
/// `curvature_norm`.
pub fn curvature_score(poly: &[Point], settings: &AlgorithmSettings) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let kink = settings.kink_angle_deg.to_radians();
    let excess: f64 = (0..n)
        .map(|i| {
            let a = poly[(i + n - 1) % n];
            let b = poly[i];
            let c = poly[(i + 1) % n];
            let (u, v) = (b - a, c - b);
            let turn = u.cross(v).atan2(u.dot(v));
            (turn.abs() - kink).max(0.0)
        })
        .sum();
    (1.0 - excess / settings.curvature_norm).clamp(0.0, 1.0)
}

/// Radius-versus-arc-position signature about the centroid. The score is
/// one minus the total variation of its band-passed detail, relative to
/// `signature_norm` mean radii.
pub fn signature_score(poly: &[Point], settings: &AlgorithmSettings) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let c = geometry::centroid(poly);
    let samples = geometry::resample_closed(poly, SIGNATURE_SAMPLES);
    let r: Vec<f64> = samples.iter().map(|p| p.distance(c)).collect();
    let n = r.len();
    let mean = r.iter().sum::<f64>() / n as f64;
    if !(mean > 0.0) {
        return 0.0;
    }
    let at = |i: isize| r[i.rem_euclid(n as isize) as usize];
    let k = SIGNATURE_WINDOW as isize;
    // band-pass: a [1 2 1] pass removes vertex ripple, the wide window the shape
    let detail: Vec<f64> = (0..n as isize)
        .map(|i| {
            let fine = 0.25 * (at(i - 1) + 2.0 * at(i) + at(i + 1));
            let coarse = (-k..=k).map(|d| at(i + d)).sum::<f64>() / (2 * k + 1) as f64;
            fine - coarse
        })
        .collect();
    let tv: f64 = (0..n).map(|i| (detail[(i + 1) % n] - detail[i]).abs()).sum();
    (1.0 - tv / (settings.signature_norm * mean)).clamp(0.0, 1.0)
}

/// Keeps regions with `total >= threshold`, in order.
pub fn filter_valid(regions: Vec<Region>, threshold: f64) -> Vec<Region> {
    regions.into_iter().filter(|r| r.score.total >= threshold).collect()
}

fn overlap_fraction(a: &RasterMask, b: &RasterMask) -> f64 {
    let smaller = a.count().min(b.count());
    if smaller == 0 {
        return 0.0;
    }
    let (small, large) = if a.count() <= b.count() { (a, b) } else { (b, a) };
    let shared = small.pixels().filter(|&(x, y)| large.get(x, y)).count();
    shared as f64 / smaller as f64
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut k = i;
    while parent[k] != r {
        let next = parent[k];
        parent[k] = r;
        k = next;
    }
    r
}

/// Unites regions whose interiors overlap by more than `min_fraction` of
/// the smaller one, transitively. Merged outlines follow the pixel edges of
/// the union; a merged region keeps the best member score.
pub fn merge_overlapping(regions: &[Region], min_fraction: f64) -> Result<Vec<Region>> {
    let masks: Vec<RasterMask> = regions.iter().map(|r| geometry::rasterize(&r.contour)).collect();
    let n = regions.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if regions[i].block == regions[j].block && overlap_fraction(&masks[i], &masks[j]) > min_fraction {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }

    let mut out = Vec::with_capacity(groups.len());
    for members in groups.values() {
        if members.len() == 1 {
            out.push(regions[members[0]].clone());
            continue;
        }
        let contour = union_outline(members.iter().map(|&i| &masks[i]))?;
        let best = members
            .iter()
            .copied()
            .fold(members[0], |b, i| if regions[i].score.total > regions[b].score.total { i } else { b });
        out.push(Region {
            contour,
            block: regions[members[0]].block,
            score: regions[best].score,
            member_snakes: members.iter().flat_map(|&i| regions[i].member_snakes.iter().copied()).collect(),
        });
    }
    Ok(out)
}

/// Outer boundary of the union of `masks` along pixel edges, positively
/// oriented with collinear vertices removed.
pub fn union_outline<'a>(masks: impl Iterator<Item = &'a RasterMask>) -> Result<Vec<Point>> {
    let masks: Vec<&RasterMask> = masks.collect();
    let x0 = masks.iter().map(|m| m.x0).min().unwrap_or(0);
    let y0 = masks.iter().map(|m| m.y0).min().unwrap_or(0);
    let x1 = masks.iter().map(|m| m.x0 + m.width as i64).max().unwrap_or(0);
    let y1 = masks.iter().map(|m| m.y0 + m.height as i64).max().unwrap_or(0);
    let inside = |x: i64, y: i64| masks.iter().any(|m| m.get(x, y));

    // corner (cx, cy) is the point (cx - 0.5, cy - 0.5); the interior lies
    // to the right of every edge when y points down
    let mut out_edges: BTreeMap<(i64, i64), Vec<(i64, i64)>> = BTreeMap::new();
    let mut add = |a: (i64, i64), b: (i64, i64)| out_edges.entry(a).or_default().push(b);
    for y in y0..y1 {
        for x in x0..x1 {
            if !inside(x, y) {
                continue;
            }
            if !inside(x, y - 1) {
                add((x, y), (x + 1, y));
            }
            if !inside(x + 1, y) {
                add((x + 1, y), (x + 1, y + 1));
            }
            if !inside(x, y + 1) {
                add((x + 1, y + 1), (x, y + 1));
            }
            if !inside(x - 1, y) {
                add((x, y + 1), (x, y));
            }
        }
    }
    if out_edges.is_empty() {
        return Err(Error::Internal("region union is empty".into()));
    }

    let mut loops: Vec<Vec<(i64, i64)>> = Vec::new();
    while let Some((&start, _)) = out_edges.iter().find(|(_, v)| !v.is_empty()) {
        let mut cur = start;
        let mut dir: Option<(i64, i64)> = None;
        let mut lp = Vec::new();
        loop {
            let Some(nexts) = out_edges.get_mut(&cur) else { break };
            if nexts.is_empty() {
                break;
            }
            let pick = match dir {
                None => 0,
                Some((dx, dy)) => {
                    // left turn first, so diagonal neighbours stay joined
                    let prefs = [(dy, -dx), (dx, dy), (-dy, dx)];
                    prefs
                        .iter()
                        .find_map(|p| nexts.iter().position(|n| (n.0 - cur.0, n.1 - cur.1) == *p))
                        .unwrap_or(0)
                }
            };
            let next = nexts.swap_remove(pick);
            lp.push(cur);
            dir = Some((next.0 - cur.0, next.1 - cur.1));
            cur = next;
            if cur == start && out_edges.get(&cur).is_none_or(|v| v.is_empty()) {
                break;
            }
            if cur == start && dir.is_some() && lp.len() > 1 {
                break;
            }
        }
        loops.push(lp);
    }

    let mut outer: Vec<Vec<Point>> = loops
        .into_iter()
        .map(|lp| lp.into_iter().map(|(x, y)| Point::new(x as f64 - 0.5, y as f64 - 0.5)).collect::<Vec<_>>())
        .filter(|poly| geometry::signed_area(poly) > 0.0)
        .collect();
    if outer.len() != 1 {
        let dump: Vec<String> = outer
            .iter()
            .map(|p| format!("{} vertices, area {}", p.len(), geometry::signed_area(p)))
            .collect();
        return Err(Error::Internal(format!(
            "region union has {} outer boundaries: [{}]",
            outer.len(),
            dump.join("; ")
        )));
    }
    Ok(geometry::remove_collinear(&outer.pop().unwrap()))
}

const RGNS_MAGIC: &[u8; 4] = b"RGNS";
const RGNS_VERSION: u32 = 1;

pub fn encode_regions(block: u32, regions: &[Region]) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(RGNS_MAGIC).u32(RGNS_VERSION).u32(block).u32(regions.len() as u32);
    for r in regions {
        for c in r.score.components() {
            w.f64(c);
        }
        w.f64(r.score.total).u32(r.member_snakes.len() as u32);
        for &m in &r.member_snakes {
            w.u32(m);
        }
        w.u32(r.contour.len() as u32);
        for p in &r.contour {
            w.f64(p.x).f64(p.y);
        }
    }
    w.finish()
}

pub fn decode_regions(bytes: &[u8], path: &Path) -> Result<(u32, Vec<Region>)> {
    let mut r = Reader::new(bytes, path);
    r.expect_magic(RGNS_MAGIC, RGNS_VERSION)?;
    let block = r.u32()?;
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 12));
    for _ in 0..count {
        let mut c = [0.0; 7];
        for v in c.iter_mut() {
            *v = r.f64()?;
        }
        let m = r.u32()? as usize;
        let mut members = Vec::with_capacity(m.min(1 << 12));
        for _ in 0..m {
            members.push(r.u32()?);
        }
        let k = r.u32()? as usize;
        let mut contour = Vec::with_capacity(k.min(1 << 16));
        for _ in 0..k {
            contour.push(Point::new(r.f64()?, r.f64()?));
        }
        out.push(Region {
            contour,
            block,
            score: RegionScore {
                boundary_energy: c[0],
                interior_energy: c[1],
                area_score: c[2],
                discontinuity: c[3],
                curvature_score: c[4],
                signature_score: c[5],
                total: c[6],
            },
            member_snakes: members,
        });
    }
    r.finish()?;
    Ok((block, out))
}

pub fn read_regions(path: &Path) -> Result<(u32, Vec<Region>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_regions(&bytes, path)
}

/// One scored candidate as listed in the report.
pub struct Candidate<'a> {
    pub snake_id: u32,
    pub snake: &'a SnakeContour,
    pub score: RegionScore,
}

/// Plain-text report of every candidate and the merged regions of a block.
pub fn report_block(block: u32, z: (u32, u32), candidates: &[Candidate<'_>], merged: &[Region], threshold: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "block {block} slices {}-{}: {} candidates", z.0, z.1, candidates.len());
    for c in candidates {
        let sc = &c.score;
        let _ = writeln!(
            s,
            "  snake {:04} seed ({:.1}, {:.1}) cluster {} iterations {} converged {} border {} | boundary {:.3} interior {:.3} area {:.3} discontinuity {:.3} curvature {:.3} signature {:.3} | total {:.3} {}",
            c.snake_id,
            c.snake.seed.position.x,
            c.snake.seed.position.y,
            c.snake.seed.cluster_size,
            c.snake.iterations,
            if c.snake.converged { "yes" } else { "no" },
            if c.snake.border { "yes" } else { "no" },
            sc.boundary_energy,
            sc.interior_energy,
            sc.area_score,
            sc.discontinuity,
            sc.curvature_score,
            sc.signature_score,
            sc.total,
            if sc.total >= threshold { "accept" } else { "reject" },
        );
    }
    for (i, r) in merged.iter().enumerate() {
        let ids: Vec<String> = r.member_snakes.iter().map(|m| format!("{m:04}")).collect();
        let _ = writeln!(
            s,
            "  region {i}: snakes [{}] area {:.1} px total {:.3}",
            ids.join(", "),
            geometry::area(&r.contour),
            r.score.total
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Slice;
    use crate::ridges::{energy_map, Scale};
    use crate::snakes::{circle, Seed};
    use crate::synth::{Organelle, Phantom};
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn snake(nodes: Vec<Point>, border: bool) -> SnakeContour {
        SnakeContour {
            nodes,
            block: 0,
            converged: !border,
            border,
            iterations: 10,
            seed: Seed {
                position: Point::ZERO,
                block: 0,
                cluster_size: 3,
            },
        }
    }

    fn region(contour: Vec<Point>, total: f64, id: u32) -> Region {
        Region {
            contour,
            block: 0,
            score: RegionScore {
                total,
                ..Default::default()
            },
            member_snakes: vec![id],
        }
    }

    /// Single organelle at the target pixel size, four slices.
    fn organelle_evidence(cristae: Option<f64>, gap: f64, gain: f32) -> (BlockEvidence, Vec<Point>) {
        let ph = Phantom {
            width: 200,
            height: 200,
            psize: 2.0,
            z_first: 0,
            z_last: 3,
            organelles: vec![Organelle {
                center: Point::new(100.0, 100.0),
                semi_axes: (60.0, 60.0),
                rotation: 0.0,
                cristae_spacing: cristae,
                gap,
            }],
            noise_sigma: 0.0,
            ..Phantom::default()
        };
        let set = AlgorithmSettings::default();
        let slices: Vec<Slice> = (0..4)
            .map(|z| Slice::new(z, 2.0, ph.render(z).map(|v| v * gain)))
            .map(|s| crate::imaging::preprocess(&s, &set).unwrap())
            .collect();
        let large: Vec<EnergyMap> = slices.iter().map(|s| energy_map(s, Scale::Large, &set)).collect();
        let small: Vec<EnergyMap> = slices.iter().map(|s| energy_map(s, Scale::Small, &set)).collect();
        let ev = BlockEvidence::new(&large.iter().collect::<Vec<_>>(), &small.iter().collect::<Vec<_>>(), &set);
        // the block-mean outline
        let outline: Vec<Point> = (0..64)
            .map(|k| {
                let pts: Vec<Point> = (0..4).map(|z| ph.outline(0, z, 64)[k]).collect();
                pts.iter().fold(Point::ZERO, |a, &p| a + p) * 0.25
            })
            .collect();
        (ev, outline)
    }

    #[test]
    fn ideal_organelle_scores_high() {
        let set = AlgorithmSettings::default();
        let (ev, outline) = organelle_evidence(Some(12.0), 0.0, 1.0);
        let s = score_region(&snake(outline, false), &ev, &set);
        assert!(s.total >= 0.9, "{s:?}");
        assert!(s.components().iter().all(|c| (0.0..=1.0).contains(c)));
    }

    #[test]
    fn flat_lumen_has_no_interior_evidence() {
        let set = AlgorithmSettings::default();
        let (ev, outline) = organelle_evidence(None, 0.0, 1.0);
        let s = score_region(&snake(outline, false), &ev, &set);
        assert!(s.interior_energy < 0.2, "{s:?}");
        assert!(s.total < 0.75);
    }

    #[test]
    fn quarter_gap_only_moves_discontinuity() {
        let set = AlgorithmSettings::default();
        let (full, outline) = organelle_evidence(Some(12.0), 0.0, 1.0);
        let (gap, _) = organelle_evidence(Some(12.0), 0.25, 1.0);
        let s = snake(outline, false);
        let a = score_region(&s, &full, &set);
        let b = score_region(&s, &gap, &set);
        assert!((b.discontinuity / a.discontinuity - 0.75).abs() < 0.05, "{a:?} {b:?}");
        for (x, y) in [
            (a.boundary_energy, b.boundary_energy),
            (a.interior_energy, b.interior_energy),
            (a.area_score, b.area_score),
            (a.curvature_score, b.curvature_score),
            (a.signature_score, b.signature_score),
        ] {
            assert!((x - y).abs() <= 0.05 * x.max(1e-9), "{a:?} {b:?}");
        }
    }

    #[test]
    fn geometry_scores_ignore_contrast() {
        let set = AlgorithmSettings::default();
        let (a_ev, outline) = organelle_evidence(Some(12.0), 0.0, 1.0);
        let (b_ev, _) = organelle_evidence(Some(12.0), 0.0, 0.6);
        let s = snake(outline, false);
        let a = score_region(&s, &a_ev, &set);
        let b = score_region(&s, &b_ev, &set);
        assert_eq!(a.area_score, b.area_score);
        assert_eq!(a.curvature_score, b.curvature_score);
        assert_eq!(a.signature_score, b.signature_score);
    }

    #[test]
    fn border_snake_total_is_zero() {
        let set = AlgorithmSettings::default();
        let ev = BlockEvidence {
            field: BlockField::from_energy(Plane::new(50, 50, 0.0)),
            small: vec![Plane::new(50, 50, 0.0)],
        };
        let s = score_region(&snake(circle(Point::new(25.0, 25.0), 24.5, 64), true), &ev, &set);
        assert_eq!(s.total, 0.0);
    }

    #[test]
    fn area_ramp_shape() {
        let set = AlgorithmSettings::default();
        let disk = |d_nm: f64| {
            let r_px = d_nm / 2.0 / set.target_psize;
            std::f64::consts::PI * r_px * r_px
        };
        assert_eq!(area_score(disk(50.0), &set), 0.0);
        assert!((area_score(disk(115.0), &set) - 0.5).abs() < 1e-9);
        assert_eq!(area_score(disk(400.0), &set), 1.0);
        assert!((area_score(disk(1150.0), &set) - 0.5).abs() < 1e-9);
        assert_eq!(area_score(disk(2000.0), &set), 0.0);
    }

    #[test]
    fn kinks_and_wobbles_are_penalized() {
        let set = AlgorithmSettings::default();
        let round = circle(Point::new(50.0, 50.0), 40.0, 64);
        assert_eq!(curvature_score(&round, &set), 1.0);
        assert!(signature_score(&round, &set) > 0.99);
        let star: Vec<Point> = (0..64)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / 64.0;
                Point::new(50.0, 50.0) + Point::from_angle(t) * (40.0 + if k % 2 == 0 { 6.0 } else { -6.0 })
            })
            .collect();
        assert!(curvature_score(&star, &set) < 0.5);
        assert!(signature_score(&star, &set) < 0.5);
        let ellipse: Vec<Point> = (0..64)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / 64.0;
                Point::new(50.0 + 70.0 * t.cos(), 50.0 + 45.0 * t.sin())
            })
            .collect();
        assert!(signature_score(&ellipse, &set) > 0.9);
    }

    #[test]
    fn filter_examples() {
        let rs: Vec<Region> = [0.9, 0.74, 0.76].iter().enumerate().map(|(i, &t)| region(vec![], t, i as u32)).collect();
        let kept: Vec<f64> = filter_valid(rs.clone(), 0.75).iter().map(|r| r.score.total).collect();
        assert_eq!(kept, vec![0.9, 0.76]);
        assert_eq!(filter_valid(rs.clone(), 0.0).len(), 3);
        let mut with_one = rs;
        with_one.push(region(vec![], 1.0, 9));
        let top = filter_valid(with_one, 1.0);
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].member_snakes, vec![9]);
    }

    proptest! {
        #[test]
        fn threshold_monotone(totals in proptest::collection::vec(0.0f64..=1.0, 0..30), t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let rs: Vec<Region> = totals.iter().enumerate().map(|(i, &t)| region(vec![], t, i as u32)).collect();
            let strict: Vec<u32> = filter_valid(rs.clone(), hi).iter().map(|r| r.member_snakes[0]).collect();
            let loose: Vec<u32> = filter_valid(rs, lo).iter().map(|r| r.member_snakes[0]).collect();
            prop_assert!(strict.iter().all(|i| loose.contains(i)));
        }
    }

    #[test]
    fn disjoint_regions_unchanged() {
        let a = region(circle(Point::new(30.0, 30.0), 10.0, 32), 0.8, 0);
        let b = region(circle(Point::new(80.0, 30.0), 10.0, 32), 0.9, 1);
        let out = merge_overlapping(&[a.clone(), b.clone()], 0.0).unwrap();
        assert_eq!(out, vec![a, b]);
    }

    #[test]
    fn overlapping_circles_merge_to_lens_union() {
        let r = 30.0;
        // centre distance giving a lens of half a circle
        let mut lo = 0.0;
        let mut hi = 2.0 * r;
        let lens = |d: f64| 2.0 * r * r * (d / (2.0 * r)).acos() - 0.5 * d * (4.0 * r * r - d * d).sqrt();
        let half = 0.5 * std::f64::consts::PI * r * r;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if lens(mid) > half {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let d = 0.5 * (lo + hi);
        let a = region(circle(Point::new(60.0, 60.0), r, 256), 0.8, 0);
        let b = region(circle(Point::new(60.0 + d, 60.0), r, 256), 0.9, 1);
        let out = merge_overlapping(&[a, b], 0.0).unwrap();
        assert_eq!(out.len(), 1);
        let expected = 2.0 * std::f64::consts::PI * r * r - lens(d);
        let got = geometry::area(&out[0].contour);
        assert!((got - expected).abs() <= 0.02 * expected, "{got} vs {expected}");
        assert_eq!(out[0].score.total, 0.9);
        assert_eq!(out[0].member_snakes, vec![0, 1]);
        assert!(geometry::signed_area(&out[0].contour) > 0.0);
    }

    #[test]
    fn merge_is_transitive() {
        let a = region(circle(Point::new(30.0, 30.0), 12.0, 32), 0.8, 0);
        let b = region(circle(Point::new(50.0, 30.0), 12.0, 32), 0.7, 1);
        let c = region(circle(Point::new(70.0, 30.0), 12.0, 32), 0.9, 2);
        let out = merge_overlapping(&[a, c, b], 0.0).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].member_snakes, vec![0, 2, 1]);
    }

    #[test]
    fn union_of_pixels_traces_outline() {
        let m = RasterMask {
            x0: 0,
            y0: 0,
            width: 3,
            height: 2,
            bits: vec![true, false, false, false, true, true],
        };
        let poly = union_outline(std::iter::once(&m)).unwrap();
        assert_eq!(geometry::area(&poly), 3.0);
        assert!(geometry::signed_area(&poly) > 0.0);
        let back = geometry::rasterize(&poly);
        assert_eq!(back.count(), 3);
    }

    /// Member pixels plus every pixel the outside cannot reach, by flood fill.
    fn filled_union(masks: &[RasterMask]) -> BTreeSet<(i64, i64)> {
        let inside: BTreeSet<(i64, i64)> = masks.iter().flat_map(|m| m.pixels()).collect();
        let x0 = inside.iter().map(|p| p.0).min().unwrap() - 1;
        let x1 = inside.iter().map(|p| p.0).max().unwrap() + 1;
        let y0 = inside.iter().map(|p| p.1).min().unwrap() - 1;
        let y1 = inside.iter().map(|p| p.1).max().unwrap() + 1;
        let mut outside = BTreeSet::from([(x0, y0)]);
        let mut stack = vec![(x0, y0)];
        while let Some((x, y)) = stack.pop() {
            for q in [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)] {
                if (x0..=x1).contains(&q.0) && (y0..=y1).contains(&q.1) && !inside.contains(&q) && outside.insert(q) {
                    stack.push(q);
                }
            }
        }
        (x0..=x1)
            .flat_map(|x| (y0..=y1).map(move |y| (x, y)))
            .filter(|p| !outside.contains(p))
            .collect()
    }

    proptest! {
        #[test]
        fn merge_idempotent_and_fills_union(circles in proptest::collection::vec((20.0f64..120.0, 20.0f64..120.0, 5.0f64..25.0), 1..6)) {
            let rs: Vec<Region> = circles
                .iter()
                .enumerate()
                .map(|(i, &(x, y, r))| region(circle(Point::new(x, y), r, 48), 0.5 + 0.05 * i as f64, i as u32))
                .collect();
            let once = match merge_overlapping(&rs, 0.0) {
                Ok(v) => v,
                Err(_) => return Ok(()),
            };
            let twice = merge_overlapping(&once, 0.0).unwrap();
            prop_assert_eq!(&once, &twice);
            for m in &once {
                let members: Vec<RasterMask> = m.member_snakes.iter().map(|&i| geometry::rasterize(&rs[i as usize].contour)).collect();
                let got: BTreeSet<(i64, i64)> = geometry::rasterize(&m.contour).pixels().collect();
                prop_assert_eq!(got, filled_union(&members));
            }
        }
    }

    #[test]
    fn region_file_round_trip() {
        let mut r = region(circle(Point::new(3.0, 4.0), 2.0, 6), 0.8, 3);
        r.block = 1;
        r.member_snakes = vec![3, 5];
        r.score.signature_score = 0.25;
        let bytes = encode_regions(1, &[r.clone()]);
        let (block, back) = decode_regions(&bytes, Path::new("r")).unwrap();
        assert_eq!(block, 1);
        assert_eq!(back, vec![r]);
    }
}
