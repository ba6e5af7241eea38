//! Seeding and balloon-snake growth over blocks of consecutive slices.
//!
//! Each block carries one 2D contour that evolves on the block-averaged
//! large-scale strength field.

use std::f64::consts::TAU;
use std::path::Path;

use crate::binio::{Reader, Writer};
use crate::config::{AlgorithmSettings, ZRange};
use crate::curves::CurveSegment;
use crate::error::{Error, Result};
use crate::geometry::{self, Point};
use crate::plane::Plane;
use crate::ridges::EnergyMap;

pub const MIN_BLOCK: u32 = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ZBlock {
    pub index: u32,
    pub z_lo: u32,
    pub z_hi: u32,
}

impl ZBlock {
    pub fn len(&self) -> u32 {
        self.z_hi - self.z_lo + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, z: u32) -> bool {
        (self.z_lo..=self.z_hi).contains(&z)
    }

    pub fn slices(&self) -> impl Iterator<Item = u32> {
        self.z_lo..=self.z_hi
    }
}

/// Splits `zrange` into blocks of `thickness` slices. A trailing remainder
/// shorter than five slices joins the previous block.
pub fn make_blocks(zrange: ZRange, thickness: u32) -> Result<Vec<ZBlock>> {
    if zrange.len() < MIN_BLOCK {
        return Err(Error::Config(format!(
            "z range {}..{} has {} slices; at least {MIN_BLOCK} are needed",
            zrange.min,
            zrange.max,
            zrange.len()
        )));
    }
    if thickness < MIN_BLOCK {
        return Err(Error::range("thick", format!("{thickness} is below {MIN_BLOCK}")));
    }
    let mut blocks: Vec<ZBlock> = Vec::new();
    let mut lo = zrange.min;
    while lo <= zrange.max {
        let hi = lo.saturating_add(thickness - 1).min(zrange.max);
        let len = hi - lo + 1;
        match blocks.last_mut() {
            Some(prev) if len < MIN_BLOCK => prev.z_hi = hi,
            _ => blocks.push(ZBlock {
                index: blocks.len() as u32,
                z_lo: lo,
                z_hi: hi,
            }),
        }
        if hi == zrange.max {
            break;
        }
        lo = hi + 1;
    }
    Ok(blocks)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Seed {
    pub position: Point,
    pub block: u32,
    pub cluster_size: u32,
}

/// A curve segment reduced to what clustering needs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeedSite {
    pub midpoint: Point,
    /// Unit normal towards the concave side, zero for straight segments.
    pub normal: Point,
    pub weight: f64,
}

impl SeedSite {
    /// Site weighted by the mean strength of `map` over the segment support.
    pub fn from_segment(seg: &CurveSegment, map: &EnergyMap) -> SeedSite {
        let n = seg.support.len().max(1) as f64;
        let weight = seg
            .support
            .iter()
            .filter(|&&(x, y)| (x as usize) < map.width() && (y as usize) < map.height())
            .map(|&(x, y)| map.strength.get(x as usize, y as usize) as f64)
            .sum::<f64>()
            / n;
        SeedSite {
            midpoint: seg.midpoint(),
            normal: seg.concave_normal(),
            weight,
        }
    }
}

/// sin(20 deg): how far a neighbour may sit behind a concave side.
const FACING_TOLERANCE: f64 = 0.342_020_143_325_668_7;

fn compatible(a: &SeedSite, b: &SeedSite) -> bool {
    let d = b.midpoint - a.midpoint;
    let len = d.norm();
    a.normal.dot(d) >= -FACING_TOLERANCE * len && b.normal.dot(-d) >= -FACING_TOLERANCE * len
}

/// Density clustering of segment midpoints. Two sites are neighbours when
/// they lie within `dbscan_eps` and each concave side faces the other.
/// Every cluster gives one seed at its weighted centroid, pushed half of
/// `dbscan_eps` along the mean concave normal.
pub fn seed_points(block: u32, sites: &[SeedSite], settings: &AlgorithmSettings) -> Vec<Seed> {
    let eps = settings.dbscan_eps;
    let min_pts = settings.dbscan_min_pts.max(1) as usize;
    let n = sites.len();
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| {
                    j != i
                        && sites[i].midpoint.distance(sites[j].midpoint) <= eps
                        && compatible(&sites[i], &sites[j])
                })
                .collect()
        })
        .collect();

    const NOISE: usize = usize::MAX;
    const UNSEEN: usize = usize::MAX - 1;
    let mut label = vec![UNSEEN; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        if label[i] != UNSEEN {
            continue;
        }
        if neighbours[i].len() + 1 < min_pts {
            label[i] = NOISE;
            continue;
        }
        let c = clusters.len();
        let mut members = vec![i];
        label[i] = c;
        let mut queue = neighbours[i].clone();
        let mut k = 0;
        while k < queue.len() {
            let j = queue[k];
            k += 1;
            if label[j] == NOISE {
                label[j] = c;
                members.push(j);
            }
            if label[j] != UNSEEN {
                continue;
            }
            label[j] = c;
            members.push(j);
            if neighbours[j].len() + 1 >= min_pts {
                queue.extend(neighbours[j].iter().copied());
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }

    clusters
        .iter()
        .filter(|m| m.len() >= min_pts)
        .map(|members| {
            let wsum: f64 = members.iter().map(|&i| sites[i].weight.max(0.0)).sum();
            let unit = !(wsum > 0.0);
            let w = |i: usize| if unit { 1.0 } else { sites[i].weight.max(0.0) };
            let total = if unit { members.len() as f64 } else { wsum };
            let centre = members.iter().fold(Point::ZERO, |acc, &i| acc + sites[i].midpoint * w(i)) * (1.0 / total);
            let pull = members.iter().fold(Point::ZERO, |acc, &i| acc + sites[i].normal * w(i)) * (1.0 / total);
            Seed {
                position: centre + pull * (0.5 * eps),
                block,
                cluster_size: members.len() as u32,
            }
        })
        .collect()
}

fn central_gradient(p: &Plane<f32>) -> (Plane<f32>, Plane<f32>) {
    let (w, h) = (p.width(), p.height());
    let at = |x: isize, y: isize| p.get(x.clamp(0, w as isize - 1) as usize, y.clamp(0, h as isize - 1) as usize);
    let gx = Plane::from_fn(w, h, |x, y| 0.5 * (at(x as isize + 1, y as isize) - at(x as isize - 1, y as isize)));
    let gy = Plane::from_fn(w, h, |x, y| 0.5 * (at(x as isize, y as isize + 1) - at(x as isize, y as isize - 1)));
    (gx, gy)
}

/// Block-mean large-scale strength over `energy_ref`. The force field is the
/// central-difference gradient of the same mean with `floor` subtracted and
/// clipped at zero, so weak evidence exerts no pull.
#[derive(Clone, Debug)]
pub struct BlockField {
    pub energy: Plane<f32>,
    grad_x: Plane<f32>,
    grad_y: Plane<f32>,
}

impl BlockField {
    pub fn new(maps: &[&EnergyMap], floor: f64, energy_ref: f64) -> BlockField {
        let (w, h) = maps
            .first()
            .map(|m| (m.width(), m.height()))
            .unwrap_or((0, 0));
        let n = maps.len().max(1) as f64;
        let mut acc = vec![0.0f64; w * h];
        for m in maps {
            for (a, &v) in acc.iter_mut().zip(m.strength.data()) {
                *a += v as f64;
            }
        }
        let mean: Vec<f64> = acc.into_iter().map(|v| v / n).collect();
        let energy = Plane::from_vec(w, h, mean.iter().map(|&v| (v / energy_ref) as f32).collect());
        let pull = Plane::from_vec(w, h, mean.iter().map(|&v| ((v - floor).max(0.0) / energy_ref) as f32).collect());
        let (grad_x, grad_y) = central_gradient(&pull);
        BlockField { energy, grad_x, grad_y }
    }

    pub fn from_energy(energy: Plane<f32>) -> BlockField {
        let (grad_x, grad_y) = central_gradient(&energy);
        BlockField {
            energy,
            grad_x,
            grad_y,
        }
    }

    pub fn width(&self) -> usize {
        self.energy.width()
    }

    pub fn height(&self) -> usize {
        self.energy.height()
    }

    pub fn value(&self, p: Point) -> f64 {
        self.energy.sample(p.x, p.y)
    }

    pub fn gradient(&self, p: Point) -> Point {
        Point::new(self.grad_x.sample(p.x, p.y), self.grad_y.sample(p.x, p.y))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnakeContour {
    pub nodes: Vec<Point>,
    pub block: u32,
    pub converged: bool,
    pub border: bool,
    pub iterations: u32,
    pub seed: Seed,
}

const RESAMPLE_EVERY: u32 = 5;
const STILL_ITERATIONS: u32 = 10;
const MAX_STEP: f64 = 1.0;
const BORDER_MARGIN: f64 = 1.0;

pub fn circle(centre: Point, radius: f64, count: usize) -> Vec<Point> {
    (0..count)
        .map(|k| centre + Point::from_angle(TAU * k as f64 / count as f64) * radius)
        .collect()
}

/// Grows a balloon snake from `seed` on `field`. Inflation fades out as the
/// block-mean strength approaches `energy_ref`; the image pull acts along
/// the node normal only.
pub fn grow_snake(seed: &Seed, field: &BlockField, settings: &AlgorithmSettings) -> SnakeContour {
    grow_snake_traced(seed, field, settings, |_, _| {})
}

/// As [`grow_snake`], calling `observe(iteration, nodes)` after every update.
pub fn grow_snake_traced(
    seed: &Seed,
    field: &BlockField,
    settings: &AlgorithmSettings,
    mut observe: impl FnMut(u32, &[Point]),
) -> SnakeContour {
    let count = settings.snake_node_count.max(8) as usize;
    let mut nodes = circle(seed.position, settings.snake_initial_radius, count);
    let (w, h) = (field.width() as f64, field.height() as f64);
    let touches = |p: &Point| {
        p.x < BORDER_MARGIN || p.y < BORDER_MARGIN || p.x > w - 1.0 - BORDER_MARGIN || p.y > h - 1.0 - BORDER_MARGIN
    };

    let mut still = 0;
    let mut converged = false;
    let mut border = nodes.iter().any(touches);
    let mut iterations = 0;
    while !border && !converged && iterations < settings.snake_max_iters {
        iterations += 1;
        let n = nodes.len();
        let mut max_disp: f64 = 0.0;
        let next: Vec<Point> = (0..n)
            .map(|i| {
                let at = |k: isize| nodes[(i as isize + k).rem_euclid(n as isize) as usize];
                let p = at(0);
                let second = at(-1) + at(1) - p * 2.0;
                let fourth = at(-2) + at(2) - (at(-1) + at(1)) * 4.0 + p * 6.0;
                let t = at(1) - at(-1);
                let outward = Point::new(t.y, -t.x).normalized();
                let force = second * settings.snake_tension_weight - fourth * settings.snake_rigidity_weight
                    + outward * (settings.snake_inflation_weight * (1.0 - field.value(p)).clamp(0.0, 1.0))
                    + outward * (field.gradient(p).dot(outward) * settings.snake_image_weight);
                let mut d = force * settings.snake_step_size;
                let len = d.norm();
                if len > MAX_STEP {
                    d = d * (MAX_STEP / len);
                }
                max_disp = max_disp.max(d.norm());
                p + d
            })
            .collect();
        nodes = geometry::positively_oriented(geometry::untangle(next));
        if iterations % RESAMPLE_EVERY == 0 || nodes.len() != count {
            nodes = geometry::resample_closed(&nodes, count);
        }
        observe(iterations, &nodes);
        border = nodes.iter().any(touches);
        if max_disp < settings.snake_convergence_eps {
            still += 1;
            converged = still >= STILL_ITERATIONS;
        } else {
            still = 0;
        }
    }
    SnakeContour {
        nodes,
        block: seed.block,
        converged: converged && !border,
        border,
        iterations,
        seed: *seed,
    }
}

/// Image energy of a contour: minus the field integrated along its edges.
pub fn contour_energy(nodes: &[Point], field: &BlockField) -> f64 {
    let n = nodes.len();
    -(0..n)
        .map(|i| {
            let (a, b) = (nodes[i], nodes[(i + 1) % n]);
            0.5 * (field.value(a) + field.value(b)) * a.distance(b)
        })
        .sum::<f64>()
}

const SNKE_MAGIC: &[u8; 4] = b"SNKE";
const SNKE_VERSION: u32 = 1;

pub fn encode_snake(s: &SnakeContour) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(SNKE_MAGIC)
        .u32(SNKE_VERSION)
        .u32(s.block)
        .f64(s.seed.position.x)
        .f64(s.seed.position.y)
        .u32(s.seed.cluster_size)
        .u8(s.converged as u8)
        .u8(s.border as u8)
        .u32(s.iterations)
        .u32(s.nodes.len() as u32);
    for p in &s.nodes {
        w.f64(p.x).f64(p.y);
    }
    w.finish()
}

pub fn decode_snake(bytes: &[u8], path: &Path) -> Result<SnakeContour> {
    let mut r = Reader::new(bytes, path);
    r.expect_magic(SNKE_MAGIC, SNKE_VERSION)?;
    let block = r.u32()?;
    let position = Point::new(r.f64()?, r.f64()?);
    let cluster_size = r.u32()?;
    let converged = r.u8()? != 0;
    let border = r.u8()? != 0;
    let iterations = r.u32()?;
    let count = r.u32()? as usize;
    let mut nodes = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        nodes.push(Point::new(r.f64()?, r.f64()?));
    }
    r.finish()?;
    Ok(SnakeContour {
        nodes,
        block,
        converged,
        border,
        iterations,
        seed: Seed {
            position,
            block,
            cluster_size,
        },
    })
}

pub fn read_snake(path: &Path) -> Result<SnakeContour> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_snake(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Slice;
    use crate::ridges::{energy_map, Scale};
    use crate::synth;
    use proptest::prelude::*;

    fn blocks(lo: u32, hi: u32, t: u32) -> Vec<(u32, u32)> {
        make_blocks(ZRange::new(lo, hi).unwrap(), t)
            .unwrap()
            .iter()
            .map(|b| (b.z_lo, b.z_hi))
            .collect()
    }

    #[test]
    fn block_examples() {
        assert_eq!(blocks(35, 74, 20), vec![(35, 54), (55, 74)]);
        assert_eq!(blocks(1, 10, 10), vec![(1, 10)]);
        assert_eq!(blocks(1, 47, 20), vec![(1, 20), (21, 40), (41, 47)]);
        assert_eq!(blocks(1, 43, 20), vec![(1, 20), (21, 43)]);
        assert_eq!(blocks(1, 8, 20), vec![(1, 8)]);
        assert!(matches!(make_blocks(ZRange::new(3, 6).unwrap(), 5), Err(Error::Config(_))));
    }

    proptest! {
        #[test]
        fn blocks_partition_the_range(lo in 0u32..1000, len in 5u32..600, t in 5u32..501) {
            let hi = lo + len - 1;
            let b = make_blocks(ZRange::new(lo, hi).unwrap(), t).unwrap();
            prop_assert_eq!(b[0].z_lo, lo);
            prop_assert_eq!(b.last().unwrap().z_hi, hi);
            for (i, pair) in b.windows(2).enumerate() {
                prop_assert_eq!(pair[0].z_hi + 1, pair[1].z_lo);
                prop_assert_eq!(pair[0].len(), t);
                prop_assert_eq!(pair[0].index as usize, i);
            }
            prop_assert!(b.iter().all(|x| x.len() >= MIN_BLOCK));
        }
    }

    fn ring_sites(centre: Point, r: f64, count: usize) -> Vec<SeedSite> {
        (0..count)
            .map(|k| {
                let dir = Point::from_angle(TAU * k as f64 / count as f64);
                SeedSite {
                    midpoint: centre + dir * r,
                    normal: -dir,
                    weight: 1.0 + k as f64 * 0.1,
                }
            })
            .collect()
    }

    #[test]
    fn seeds_from_rings() {
        let set = AlgorithmSettings::default();
        assert!(seed_points(0, &[], &set).is_empty());

        let centre = Point::new(200.0, 150.0);
        let seeds = seed_points(0, &ring_sites(centre, 50.0, 8), &set);
        assert_eq!(seeds.len(), 1);
        assert!(seeds[0].position.distance(centre) < 10.0);
        assert_eq!(seeds[0].cluster_size, 8);

        let mut two = ring_sites(centre, 50.0, 8);
        two.extend(ring_sites(centre + Point::new(500.0, 0.0), 50.0, 8));
        let seeds = seed_points(1, &two, &set);
        assert_eq!(seeds.len(), 2);
        assert!(seeds[0].position.distance(centre) < 10.0);
        assert!(seeds[1].position.distance(centre + Point::new(500.0, 0.0)) < 10.0);
        assert!(seeds.iter().all(|s| s.block == 1));
    }

    #[test]
    fn outward_facing_arcs_do_not_cluster() {
        let set = AlgorithmSettings::default();
        // two rings 110 px apart: their facing arcs are close but back to back
        let mut sites = ring_sites(Point::new(100.0, 100.0), 50.0, 8);
        sites.extend(ring_sites(Point::new(210.0, 100.0), 50.0, 8));
        assert_eq!(seed_points(0, &sites, &set).len(), 2);
    }

    #[test]
    fn half_ring_seed_moves_inside() {
        let set = AlgorithmSettings::default();
        let centre = Point::new(100.0, 100.0);
        let sites: Vec<SeedSite> = ring_sites(centre, 50.0, 12).into_iter().take(6).collect();
        let seeds = seed_points(0, &sites, &set);
        assert_eq!(seeds.len(), 1);
        let chord_mid = sites.iter().fold(Point::ZERO, |a, s| a + s.midpoint) * (1.0 / 6.0);
        assert!(seeds[0].position.distance(centre) < chord_mid.distance(centre));
    }

    /// Straightforward reference: the same neighbourhood rule with a
    /// union-find over core points.
    fn reference_cluster_count(sites: &[SeedSite], eps: f64, min_pts: usize) -> usize {
        let n = sites.len();
        let nb = |i: usize, j: usize| i != j && sites[i].midpoint.distance(sites[j].midpoint) <= eps && compatible(&sites[i], &sites[j]);
        let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| nb(i, j)).count() + 1 >= min_pts).collect();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut Vec<usize>, i: usize) -> usize {
            if p[i] != i {
                let r = find(p, p[i]);
                p[i] = r;
            }
            p[i]
        }
        for i in 0..n {
            for j in 0..n {
                if core[i] && core[j] && nb(i, j) {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a] = b;
                }
            }
        }
        let mut roots: Vec<usize> = (0..n).filter(|&i| core[i]).map(|i| find(&mut parent, i)).collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }

    proptest! {
        #[test]
        fn cluster_count_matches_reference(pts in proptest::collection::vec((0.0f64..300.0, 0.0f64..300.0, 0.0f64..6.3), 0..40)) {
            let sites: Vec<SeedSite> = pts.iter().map(|&(x, y, a)| SeedSite {
                midpoint: Point::new(x, y),
                normal: Point::from_angle(a),
                weight: 1.0,
            }).collect();
            let set = AlgorithmSettings::default();
            let seeds = seed_points(0, &sites, &set);
            prop_assert_eq!(seeds.len(), reference_cluster_count(&sites, set.dbscan_eps, set.dbscan_min_pts as usize));
            prop_assert!(seeds.iter().all(|s| s.cluster_size >= set.dbscan_min_pts));
        }
    }

    fn ring_field(r: f64, slices_with_ring: usize, slices: usize) -> BlockField {
        let set = AlgorithmSettings::default();
        let size = (2.0 * r + 80.0) as usize;
        let c = size as f64 / 2.0;
        let maps: Vec<EnergyMap> = (0..slices)
            .map(|k| {
                let img = if k < slices_with_ring {
                    synth::ring_image(size, size, (c, c), r, 3.0, 240.0, 0.0)
                } else {
                    Plane::new(size, size, 180.0)
                };
                energy_map(&Slice::new(k as u32, 2.0, img), Scale::Large, &set)
            })
            .collect();
        let refs: Vec<&EnergyMap> = maps.iter().collect();
        BlockField::new(&refs, set.snake_field_floor, set.energy_ref)
    }

    fn seed_at(p: Point) -> Seed {
        Seed {
            position: p,
            block: 0,
            cluster_size: 3,
        }
    }

    fn mean_radius(nodes: &[Point], c: Point) -> f64 {
        nodes.iter().map(|p| p.distance(c)).sum::<f64>() / nodes.len() as f64
    }

    #[test]
    fn snake_settles_on_ring() {
        let field = ring_field(40.0, 4, 4);
        let c = Point::new(80.0, 80.0);
        let set = AlgorithmSettings::default();
        let s = grow_snake(&seed_at(c + Point::new(3.0, -2.0)), &field, &set);
        assert!(s.converged, "not converged after {} iterations", s.iterations);
        assert!(!s.border);
        let r = mean_radius(&s.nodes, c);
        assert!((r - 40.0).abs() <= 2.0, "mean radius {r}");
        assert!(geometry::is_simple(&s.nodes));
        assert!(geometry::signed_area(&s.nodes) > 0.0);
    }

    #[test]
    fn half_support_lowers_boundary_energy() {
        let set = AlgorithmSettings::default();
        let c = Point::new(80.0, 80.0);
        let full = ring_field(40.0, 6, 6);
        let half = ring_field(40.0, 3, 6);
        let a = grow_snake(&seed_at(c), &full, &set);
        let b = grow_snake(&seed_at(c), &half, &set);
        assert!(a.converged && b.converged);
        let ea = -contour_energy(&a.nodes, &full) / geometry::perimeter(&a.nodes);
        let eb = -contour_energy(&b.nodes, &half) / geometry::perimeter(&b.nodes);
        assert!(eb < ea, "{eb} !< {ea}");
    }

    #[test]
    fn blank_image_runs_to_the_border() {
        let field = BlockField::from_energy(Plane::new(120, 100, 0.0));
        let set = AlgorithmSettings::default();
        let mut areas = Vec::new();
        let s = grow_snake_traced(&seed_at(Point::new(60.0, 50.0)), &field, &set, |_, n| {
            areas.push(geometry::area(n))
        });
        assert!(s.border);
        assert!(!s.converged);
        assert!(areas.windows(2).all(|w| w[1] >= w[0] - 1e-9));
    }

    #[test]
    fn resampled_spacing_is_uniform() {
        let field = ring_field(30.0, 2, 2);
        let set = AlgorithmSettings::default();
        let mut checked = 0;
        grow_snake_traced(&seed_at(Point::new(70.0, 70.0)), &field, &set, |it, nodes| {
            if it % RESAMPLE_EVERY == 0 {
                let n = nodes.len();
                let gaps: Vec<f64> = (0..n).map(|i| nodes[i].distance(nodes[(i + 1) % n])).collect();
                let mean = gaps.iter().sum::<f64>() / n as f64;
                assert!(gaps.iter().all(|&g| g <= 1.5 * mean && g >= mean / 1.5));
                assert!(geometry::is_simple(nodes));
                checked += 1;
            }
        });
        assert!(checked > 0);
    }

    #[test]
    fn image_energy_non_increasing_at_convergence() {
        let field = ring_field(40.0, 4, 4);
        let set = AlgorithmSettings::default();
        let mut history = Vec::new();
        let s = grow_snake_traced(&seed_at(Point::new(82.0, 79.0)), &field, &set, |_, n| {
            history.push(contour_energy(n, &field))
        });
        assert!(s.converged);
        let tail = &history[history.len() - STILL_ITERATIONS as usize..];
        for w in tail.windows(2) {
            assert!(w[1] <= w[0] + 1e-3 * w[0].abs(), "{tail:?}");
        }
    }

    #[test]
    fn snake_file_round_trip() {
        let s = SnakeContour {
            nodes: circle(Point::new(5.0, 6.0), 3.0, 8),
            block: 2,
            converged: true,
            border: false,
            iterations: 77,
            seed: Seed {
                position: Point::new(5.5, 6.5),
                block: 2,
                cluster_size: 9,
            },
        };
        let bytes = encode_snake(&s);
        assert_eq!(&bytes[..4], b"SNKE");
        assert_eq!(decode_snake(&bytes, Path::new("s")).unwrap(), s);
        assert!(decode_snake(&bytes[..20], Path::new("s")).is_err());
    }
}
