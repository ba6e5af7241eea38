//! Phase orchestration, intermediate files, the worker pool and the run
//! manifest.
//!
//! Phase 1 turns source slices into preprocessed images, energy maps and
//! curve segments. Phase 2 grows, scores and merges snakes per z-block.
//! Phase 3 draws overlays and writes the mesh and model files. Every phase
//! reads its inputs from `dst` and writes its outputs there, so phases can
//! run in separate invocations.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use image::DynamicImage;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{expand_slice_paths, AlgorithmSettings, Phase, Rect, RunConfig};
use crate::curves::{self, CurveSegment};
use crate::error::{Error, Result};
use crate::geometry;
use crate::imaging::{self, Slice};
use crate::meshout::{self, BlockRegions, ModelExtent};
use crate::ridges::{self, EnergyMap, Scale};
use crate::snakes::{self, make_blocks, Seed, SeedSite, SnakeContour, ZBlock};
use crate::validation::{self, BlockEvidence, Candidate, Region, RegionScore};

pub const MANIFEST: &str = "manifest.txt";
pub const REPORT: &str = "validation_report.txt";
pub const PLY: &str = "final.ply";
pub const MODEL: &str = "final.mod";

pub fn pre_name(z: u32) -> String {
    format!("pre_z{z:04}.png")
}

pub fn energy_name(z: u32, scale: Scale) -> String {
    format!("energy_z{z:04}_{scale}.bin")
}

pub fn ridge_name(z: u32, scale: Scale) -> String {
    format!("ridge_z{z:04}_{scale}.png")
}

pub fn curves_name(z: u32, scale: Scale) -> String {
    format!("curves_z{z:04}_{scale}.bin")
}

pub fn curves_png_name(z: u32, scale: Scale) -> String {
    format!("curves_z{z:04}_{scale}.png")
}

pub fn snake_name(block: u32, id: u32) -> String {
    format!("snake_b{block:02}_{id:04}.bin")
}

pub fn regions_name(block: u32) -> String {
    format!("regions_b{block:02}.bin")
}

pub fn overlay_name(z: u32) -> String {
    format!("out_z{z:04}.png")
}

/// Phases selected for one invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePlan {
    pub phases: Vec<Phase>,
    pub cores: usize,
    pub dst: PathBuf,
}

impl PhasePlan {
    pub fn new(cfg: &RunConfig) -> PhasePlan {
        PhasePlan {
            phases: match cfg.phase {
                Some(p) => vec![p],
                None => Phase::ALL.to_vec(),
            },
            cores: cfg.cores.max(1),
            dst: cfg.dst.clone(),
        }
    }

    /// Files an earlier invocation must have left in `dst`.
    pub fn required_inputs(&self, cfg: &RunConfig, blocks: &[ZBlock]) -> Vec<String> {
        match self.phases.first() {
            Some(Phase::Two) => phase2_inputs(cfg),
            Some(Phase::Three) => phase3_inputs(cfg, blocks),
            _ => Vec::new(),
        }
    }
}

fn phase2_inputs(cfg: &RunConfig) -> Vec<String> {
    cfg.zrange
        .iter()
        .flat_map(|z| {
            [
                energy_name(z, Scale::Small),
                energy_name(z, Scale::Large),
                curves_name(z, Scale::Large),
            ]
        })
        .collect()
}

fn phase3_inputs(cfg: &RunConfig, blocks: &[ZBlock]) -> Vec<String> {
    let mut names: Vec<String> = blocks.iter().map(|b| regions_name(b.index)).collect();
    names.extend(cfg.zrange.iter().map(pre_name));
    names
}

/// Fixed-size worker pool. Results come back in task order whatever the
/// completion order; a failing or panicking task fails the whole map once
/// every task has finished.
pub struct Workers {
    pool: Option<rayon::ThreadPool>,
    busy: std::sync::Mutex<Duration>,
}

impl Workers {
    pub fn new(cores: usize) -> Result<Workers> {
        let pool = if cores > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(cores)
                    .build()
                    .map_err(|e| Error::Internal(format!("cannot start {cores} workers: {e}")))?,
            )
        } else {
            None
        };
        Ok(Workers {
            pool,
            busy: std::sync::Mutex::new(Duration::ZERO),
        })
    }

    pub fn map<T, R, F>(&self, tasks: Vec<T>, f: F) -> Result<Vec<R>>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> Result<R> + Sync,
    {
        let run = |t: T| {
            let start = Instant::now();
            let r = match catch_unwind(AssertUnwindSafe(|| f(t))) {
                Ok(r) => r,
                Err(payload) => Err(Error::Internal(format!("worker panicked: {}", panic_text(&payload)))),
            };
            (r, start.elapsed())
        };
        let out: Vec<(Result<R>, Duration)> = match &self.pool {
            Some(pool) => pool.install(|| tasks.into_par_iter().map(run).collect()),
            None => tasks.into_iter().map(run).collect(),
        };
        let mut busy = self.busy.lock().unwrap_or_else(|e| e.into_inner());
        let mut results = Vec::with_capacity(out.len());
        let mut first_err = None;
        for (r, d) in out {
            *busy += d;
            match r {
                Ok(v) => results.push(v),
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        match first_err {
            Some(e) => Err(e),
            None => Ok(results),
        }
    }

    /// Summed task time since the last call.
    pub fn take_busy(&self) -> Duration {
        std::mem::take(&mut *self.busy.lock().unwrap_or_else(|e| e.into_inner()))
    }
}

fn panic_text(payload: &Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "unknown payload".into()
    }
}

/// One-shot [`Workers::map`].
pub fn parallel_map<T, R, F>(tasks: Vec<T>, cores: usize, f: F) -> Result<Vec<R>>
where
    T: Send,
    R: Send,
    F: Fn(T) -> Result<R> + Sync,
{
    Workers::new(cores)?.map(tasks, f)
}

/// Phase-1 products of one slice.
#[derive(Clone, Debug)]
pub struct SliceProducts {
    pub pre: Slice,
    /// Indexed like [`Scale::BOTH`].
    pub maps: Vec<EnergyMap>,
    pub curves: Vec<Vec<CurveSegment>>,
}

pub fn process_slice(raw: &Slice, roi: Rect, settings: &AlgorithmSettings) -> Result<SliceProducts> {
    let pre = imaging::preprocess(&imaging::crop(raw, roi)?, settings)?;
    let maps: Vec<EnergyMap> = Scale::BOTH.iter().map(|&s| ridges::energy_map(&pre, s, settings)).collect();
    let curves = maps.iter().map(|m| curves::extract_curves(m, settings)).collect();
    Ok(SliceProducts { pre, maps, curves })
}

/// Seeds of one block from the large-scale curves of its slices, ordered
/// by position (y, then x).
pub fn block_seeds(block: &ZBlock, large: &[&EnergyMap], curves: &[&[CurveSegment]], settings: &AlgorithmSettings) -> Vec<Seed> {
    let sites: Vec<SeedSite> = large
        .iter()
        .zip(curves)
        .flat_map(|(map, segs)| segs.iter().map(move |s| SeedSite::from_segment(s, map)))
        .collect();
    let mut seeds = snakes::seed_points(block.index, &sites, settings);
    seeds.sort_by(|a, b| {
        a.position
            .y
            .total_cmp(&b.position.y)
            .then(a.position.x.total_cmp(&b.position.x))
    });
    seeds
}

/// Candidates at or above `threshold`, merged.
pub fn finalize_block(
    block: &ZBlock,
    candidates: &[(SnakeContour, RegionScore)],
    threshold: f64,
    settings: &AlgorithmSettings,
) -> Result<Vec<Region>> {
    let regions: Vec<Region> = candidates
        .iter()
        .enumerate()
        .map(|(id, (s, score))| Region {
            contour: geometry::positively_oriented(s.nodes.clone()),
            block: block.index,
            score: *score,
            member_snakes: vec![id as u32],
        })
        .collect();
    validation::merge_overlapping(&validation::filter_valid(regions, threshold), settings.merge_overlap_min)
}

/// Outcome of [`run`].
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub blocks: Vec<ZBlock>,
    /// Final regions per block; empty when phase 3 did not run.
    pub regions: Vec<BlockRegions>,
    pub manifest: BTreeMap<String, String>,
}

/// Runs the selected phases in order.
pub fn run(cfg: &RunConfig, settings: &AlgorithmSettings) -> Result<RunSummary> {
    let plan = PhasePlan::new(cfg);
    let blocks = make_blocks(cfg.zrange, cfg.thickness)?;
    let dst = &plan.dst;
    let missing: Vec<String> = plan
        .required_inputs(cfg, &blocks)
        .into_iter()
        .filter(|n| !dst.join(n).is_file())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Dependency { missing });
    }
    fs::create_dir_all(dst).map_err(|e| Error::io(dst, e))?;

    let workers = Workers::new(plan.cores)?;
    let mut entries = BTreeMap::new();
    let mut regions = Vec::new();
    for &phase in &plan.phases {
        reset_peak_rss();
        workers.take_busy();
        let start = Instant::now();
        let inputs = match phase {
            Phase::One => phase_one(cfg, settings, &workers)?,
            Phase::Two => phase_two(cfg, settings, &blocks, &workers)?,
            Phase::Three => {
                let (inputs, r) = phase_three(cfg, settings, &blocks, &workers)?;
                regions = r;
                inputs
            }
        };
        let wall = start.elapsed().as_secs_f64();
        let busy = workers.take_busy().as_secs_f64();
        let key = |k: &str| format!("phase{}.{k}", phase.number());
        entries.insert(key("cores"), plan.cores.to_string());
        entries.insert(key("wall_seconds"), format!("{wall:.3}"));
        entries.insert(key("task_seconds"), format!("{busy:.3}"));
        entries.insert(key("parallel_speedup"), format!("{:.2}", if wall > 0.0 { busy / wall } else { 1.0 }));
        entries.insert(key("inputs_sha256"), inputs);
        entries.insert(key("settings_sha256"), settings.digest());
        entries.insert(
            key("peak_rss_kb"),
            peak_rss_kb().map_or_else(|| "unavailable".to_string(), |k| k.to_string()),
        );
        log::info!("phase {} finished in {wall:.2} s", phase.number());
    }
    let manifest = update_manifest(dst, entries)?;
    Ok(RunSummary {
        blocks,
        regions,
        manifest,
    })
}

fn write(dst: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dst.join(name);
    fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}

fn read(dst: &Path, name: &str) -> Result<Vec<u8>> {
    let path = dst.join(name);
    fs::read(&path).map_err(|e| Error::io(path, e))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Deletes earlier outputs of one phase: names with one of `prefixes`,
/// a digit right after it, and the extension `ext`.
fn remove_outputs(dst: &Path, prefixes: &[&str], ext: &str) -> Result<()> {
    let entries = fs::read_dir(dst).map_err(|e| Error::io(dst, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dst, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let ours = prefixes.iter().any(|p| {
            name.strip_prefix(p)
                .is_some_and(|rest| rest.starts_with(|c: char| c.is_ascii_digit()) && rest.ends_with(ext))
        });
        if ours && entry.path().is_file() {
            fs::remove_file(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
        }
    }
    Ok(())
}

struct Encoded {
    files: Vec<(String, Vec<u8>)>,
}

fn png_bytes(img: image::GrayImage, name: &str) -> Result<(String, Vec<u8>)> {
    Ok((name.to_string(), imaging::encode_png(&DynamicImage::ImageLuma8(img), Path::new(name))?))
}

fn encode_slice(z: u32, p: &SliceProducts) -> Result<Encoded> {
    let mut files = vec![png_bytes(imaging::to_gray_image(&p.pre.pixels), &pre_name(z))?];
    for (k, &scale) in Scale::BOTH.iter().enumerate() {
        let map = &p.maps[k];
        files.push((energy_name(z, scale), ridges::encode_energy(map)));
        files.push(png_bytes(ridges::ridge_visualization(map), &ridge_name(z, scale))?);
        files.push((curves_name(z, scale), curves::encode_curves(&p.curves[k])));
        files.push(png_bytes(
            curves::curve_visualization(map.width(), map.height(), &p.curves[k]),
            &curves_png_name(z, scale),
        )?);
    }
    Ok(Encoded { files })
}

fn phase_one(cfg: &RunConfig, settings: &AlgorithmSettings, workers: &Workers) -> Result<String> {
    let paths = expand_slice_paths(cfg)?;
    let raw: Vec<(Slice, String)> = workers.map(paths, |(z, path)| {
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        Ok((imaging::load_slice(&path, z, cfg.psize)?, sha256_hex(&bytes)))
    })?;
    let inputs = sha256_hex(raw.iter().map(|(_, h)| h.as_str()).collect::<Vec<_>>().join("\n").as_bytes());
    let (w, h) = (raw[0].0.width(), raw[0].0.height());
    if let Some((s, _)) = raw.iter().find(|(s, _)| (s.width(), s.height()) != (w, h)) {
        return Err(Error::Config(format!(
            "slice {} is {}x{} but slice {} is {w}x{h}",
            s.z,
            s.width(),
            s.height(),
            raw[0].0.z
        )));
    }
    let roi = match cfg.roi {
        Some(r) => r,
        None => imaging::auto_roi(
            &raw.iter().map(|(s, _)| &s.pixels).collect::<Vec<_>>(),
            settings.roi_variance_threshold,
        )?,
    };
    log::info!("phase 1: {} slices, region of interest {roi}", raw.len());

    let dst = &cfg.dst;
    remove_outputs(dst, &["pre_z", "ridge_z", "curves_z"], ".png")?;
    remove_outputs(dst, &["energy_z", "curves_z"], ".bin")?;
    let chunk = 2 * workers.pool.as_ref().map_or(1, |p| p.current_num_threads());
    for group in raw.chunks(chunk) {
        let encoded = workers.map(group.iter().collect(), |(slice, _)| {
            let products = process_slice(slice, roi, settings)?;
            encode_slice(slice.z, &products)
        })?;
        for e in encoded {
            for (name, bytes) in e.files {
                write(dst, &name, &bytes)?;
            }
        }
    }
    Ok(inputs)
}

fn inputs_digest(dst: &Path, names: &[String]) -> Result<String> {
    let mut text = String::new();
    for n in names {
        text.push_str(&sha256_hex(&read(dst, n)?));
        text.push('\n');
    }
    Ok(sha256_hex(text.as_bytes()))
}

fn phase_two(cfg: &RunConfig, settings: &AlgorithmSettings, blocks: &[ZBlock], workers: &Workers) -> Result<String> {
    let dst = &cfg.dst;
    let inputs = inputs_digest(dst, &phase2_inputs(cfg))?;
    remove_outputs(dst, &["snake_b", "regions_b"], ".bin")?;

    let mut report = format!(
        "validation report: threshold {:.3}, {} blocks\n",
        cfg.valid_threshold,
        blocks.len()
    );
    for block in blocks {
        let loaded = workers.map(block.slices().collect(), |z| {
            let small = ridges::read_energy(&dst.join(energy_name(z, Scale::Small)), z)?;
            let large = ridges::read_energy(&dst.join(energy_name(z, Scale::Large)), z)?;
            let segs = curves::read_curves(&dst.join(curves_name(z, Scale::Large)), z, Scale::Large)?;
            Ok((small, large, segs))
        })?;
        let small: Vec<&EnergyMap> = loaded.iter().map(|l| &l.0).collect();
        let large: Vec<&EnergyMap> = loaded.iter().map(|l| &l.1).collect();
        let segs: Vec<&[CurveSegment]> = loaded.iter().map(|l| l.2.as_slice()).collect();
        let seeds = block_seeds(block, &large, &segs, settings);
        let evidence = BlockEvidence::new(&large, &small, settings);
        drop(loaded);
        log::info!("block {}: {} seeds", block.index, seeds.len());

        let candidates = workers.map(seeds, |seed| {
            let snake = snakes::grow_snake(&seed, &evidence.field, settings);
            let score = validation::score_region(&snake, &evidence, settings);
            Ok((snake, score))
        })?;
        for (id, (snake, _)) in candidates.iter().enumerate() {
            write(dst, &snake_name(block.index, id as u32), &snakes::encode_snake(snake))?;
        }
        let merged = finalize_block(block, &candidates, cfg.valid_threshold, settings)?;
        write(dst, &regions_name(block.index), &validation::encode_regions(block.index, &merged))?;
        let listed: Vec<Candidate<'_>> = candidates
            .iter()
            .enumerate()
            .map(|(id, (snake, score))| Candidate {
                snake_id: id as u32,
                snake,
                score: *score,
            })
            .collect();
        report.push_str(&validation::report_block(
            block.index,
            (block.z_lo, block.z_hi),
            &listed,
            &merged,
            cfg.valid_threshold,
        ));
    }
    write(dst, REPORT, report.as_bytes())?;
    Ok(inputs)
}

fn phase_three(
    cfg: &RunConfig,
    settings: &AlgorithmSettings,
    blocks: &[ZBlock],
    workers: &Workers,
) -> Result<(String, Vec<BlockRegions>)> {
    let dst = &cfg.dst;
    let inputs = inputs_digest(dst, &phase3_inputs(cfg, blocks))?;
    remove_outputs(dst, &["out_z"], ".png")?;

    let mut sets = Vec::with_capacity(blocks.len());
    for block in blocks {
        let path = dst.join(regions_name(block.index));
        let (index, regions) = validation::read_regions(&path)?;
        if index != block.index {
            return Err(Error::Corrupt {
                path,
                detail: format!("holds block {index}, expected {}", block.index),
            });
        }
        sets.push(BlockRegions { block: *block, regions });
    }
    let offsets = meshout::colour_offsets(&sets);

    let tasks: Vec<(u32, usize)> = sets
        .iter()
        .enumerate()
        .flat_map(|(k, s)| s.block.slices().map(move |z| (z, k)))
        .collect();
    let dims = workers.map(tasks, |(z, k)| {
        let path = dst.join(pre_name(z));
        let gray = imaging::load_slice(&path, z, settings.target_psize)?;
        let img = meshout::render_overlay(&gray.pixels, &sets[k].regions, offsets[k]);
        let name = overlay_name(z);
        let bytes = imaging::encode_png(&DynamicImage::ImageRgb8(img), Path::new(&name))?;
        write(dst, &name, &bytes)?;
        Ok((gray.width(), gray.height()))
    })?;
    let (width, height) = dims.first().copied().unwrap_or((0, 0));

    let mesh = meshout::extrude_mesh(&sets, cfg.psize, settings.target_psize);
    meshout::write_ply(&mesh, &dst.join(PLY))?;
    let extent = ModelExtent {
        width: width as u32,
        height: height as u32,
        z_max: cfg.zrange.max,
        psize: cfg.psize,
        target_psize: settings.target_psize,
    };
    meshout::write_imod(&sets, &extent, &dst.join(MODEL))?;
    Ok((inputs, sets))
}

/// Merges `entries` into the manifest in `dst` and relists every file of
/// `dst` with its SHA-256.
fn update_manifest(dst: &Path, entries: BTreeMap<String, String>) -> Result<BTreeMap<String, String>> {
    let path = dst.join(MANIFEST);
    let mut manifest = match fs::read_to_string(&path) {
        Ok(text) => parse_manifest(&text),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
        Err(e) => return Err(Error::io(path, e)),
    };
    manifest.retain(|k, _| !k.starts_with("file "));
    manifest.extend(entries);
    let mut names = Vec::new();
    for entry in fs::read_dir(dst).map_err(|e| Error::io(dst, e))? {
        let entry = entry.map_err(|e| Error::io(dst, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name != MANIFEST && entry.path().is_file() {
            names.push(name);
        }
    }
    for name in names {
        let hash = sha256_hex(&read(dst, &name)?);
        manifest.insert(format!("file {name}"), hash);
    }
    let text: String = manifest.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    fs::write(&path, text).map_err(|e| Error::io(path, e))?;
    Ok(manifest)
}

pub fn parse_manifest(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// High-water resident set size of this process, where the platform
/// reports it.
pub fn peak_rss_kb() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find_map(|l| l.strip_prefix("VmHWM:"))
        .and_then(|v| v.trim().trim_end_matches("kB").trim().parse().ok())
}

fn reset_peak_rss() {
    let _ = fs::write("/proc/self/clear_refs", "5");
}
