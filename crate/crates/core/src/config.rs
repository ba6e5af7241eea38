//! Command-line run configuration and tunable algorithm settings.
//!
//! [`parse_cli`] produces a validated [`RunConfig`]; [`load_settings`]
//! produces [`AlgorithmSettings`], either the built-in defaults or the
//! defaults overridden by a flat YAML mapping. Both values are immutable
//! once built and are shared read-only by every worker thread.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const THICKNESS_MIN: u32 = 5;
pub const THICKNESS_MAX: u32 = 500;
pub const DEFAULT_VALID_THRESHOLD: f64 = 0.75;
pub const DEFAULT_THICKNESS: u32 = 20;

/// Inclusive range of slice numbers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ZRange {
    pub min: u32,
    pub max: u32,
}

impl ZRange {
    pub fn new(min: u32, max: u32) -> Result<Self> {
        if min > max {
            return Err(Error::range(
                "zrange",
                format!("first slice {min} is after last slice {max}"),
            ));
        }
        Ok(ZRange { min, max })
    }

    pub fn len(&self) -> u32 {
        self.max - self.min + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> {
        self.min..=self.max
    }
}

/// Axis-aligned pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rect {
    pub left: usize,
    pub top: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn new(left: usize, top: usize, width: usize, height: usize) -> Self {
        Rect {
            left,
            top,
            width,
            height,
        }
    }

    pub fn right(&self) -> usize {
        self.left + self.width
    }

    pub fn bottom(&self) -> usize {
        self.top + self.height
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {}", self.left, self.top, self.width, self.height)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    One = 1,
    Two = 2,
    Three = 3,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::One, Phase::Two, Phase::Three];

    pub fn number(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for Phase {
    type Error = Error;

    fn try_from(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Phase::One),
            2 => Ok(Phase::Two),
            3 => Ok(Phase::Three),
            _ => Err(Error::range("phase", format!("{n} is not one of 1, 2, 3"))),
        }
    }
}

/// Snake thickness as given on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Thickness {
    Slices(u32),
    Full,
}

impl Thickness {
    pub fn resolve(self, zrange: ZRange) -> u32 {
        match self {
            Thickness::Slices(n) => n,
            Thickness::Full => zrange.len(),
        }
    }
}

fn parse_thickness(s: &str) -> std::result::Result<Thickness, String> {
    if s.eq_ignore_ascii_case("full") {
        return Ok(Thickness::Full);
    }
    s.parse::<u32>()
        .map(Thickness::Slices)
        .map_err(|_| format!("expected an integer or \"full\", got {s:?}"))
}

/// Validated run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub pattern: String,
    /// nm per pixel of the source images.
    pub psize: f64,
    pub zrange: ZRange,
    pub src: PathBuf,
    pub dst: PathBuf,
    /// In source-image pixels, applied before resampling.
    pub roi: Option<Rect>,
    pub phase: Option<Phase>,
    pub valid_threshold: f64,
    /// Slices per z-block; `--thick full` is already resolved to the range length.
    pub thickness: u32,
    pub thickness_full: bool,
    pub cores: usize,
    pub settings_file: Option<PathBuf>,
}

impl RunConfig {
    /// Configuration with every optional value at its default.
    pub fn new(pattern: impl Into<String>, psize: f64, zrange: ZRange) -> Self {
        RunConfig {
            pattern: pattern.into(),
            psize,
            zrange,
            src: PathBuf::from("."),
            dst: PathBuf::from("."),
            roi: None,
            phase: None,
            valid_threshold: DEFAULT_VALID_THRESHOLD,
            thickness: DEFAULT_THICKNESS,
            thickness_full: false,
            cores: 1,
            settings_file: None,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "mitotrace",
    version,
    allow_negative_numbers = true,
    about = "Detect and segment mitochondrial boundaries in electron tomography slice stacks"
)]
struct Cli {
    /// Filename pattern with one printf-style integer placeholder, e.g. mito%04d.bmp
    #[arg(long)]
    pattern: String,

    /// Pixel size of the source images in nm/px
    #[arg(long)]
    psize: f64,

    /// First and last slice numbers to process (inclusive)
    #[arg(long, num_args = 2, value_names = ["ZMIN", "ZMAX"], required = true)]
    zrange: Vec<u32>,

    /// Directory holding the source slices
    #[arg(long, default_value = ".")]
    src: PathBuf,

    /// Directory for intermediate and final outputs
    #[arg(long, default_value = ".")]
    dst: PathBuf,

    /// Region of interest in source pixels; computed automatically when omitted
    #[arg(long, num_args = 4, value_names = ["LEFT", "TOP", "WIDTH", "HEIGHT"])]
    roi: Option<Vec<usize>>,

    /// Run only this phase (1, 2 or 3)
    #[arg(long)]
    phase: Option<u8>,

    /// Validator acceptance threshold in [0, 1]
    #[arg(long, default_value_t = DEFAULT_VALID_THRESHOLD)]
    valid: f64,

    /// Snake thickness in slices (5..=500) or "full"
    #[arg(long, default_value = "20", value_parser = parse_thickness)]
    thick: Thickness,

    /// Number of worker threads
    #[arg(long, default_value_t = 1)]
    cores: usize,

    /// YAML file overriding the built-in algorithm settings
    #[arg(long = "settings-file")]
    settings_file: Option<PathBuf>,
}

/// Parses the argument vector (without the program name).
pub fn parse_cli<I, T>(args: I) -> Result<RunConfig>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv = std::iter::once(OsString::from("mitotrace")).chain(args.into_iter().map(Into::into));
    let cli = Cli::try_parse_from(argv).map_err(|e| {
        use clap::error::ErrorKind;
        match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Error::Help(e.to_string()),
            _ => Error::Usage(e.to_string()),
        }
    })?;

    if !(cli.psize.is_finite() && cli.psize > 0.0) {
        return Err(Error::range("psize", format!("{} is not a positive pixel size", cli.psize)));
    }
    let zrange = ZRange::new(cli.zrange[0], cli.zrange[1])?;
    if !(0.0..=1.0).contains(&cli.valid) {
        return Err(Error::range("valid", format!("{} is outside [0, 1]", cli.valid)));
    }
    let (thickness, thickness_full) = match cli.thick {
        Thickness::Slices(n) if !(THICKNESS_MIN..=THICKNESS_MAX).contains(&n) => {
            return Err(Error::range(
                "thick",
                format!("{n} is outside [{THICKNESS_MIN}, {THICKNESS_MAX}]"),
            ));
        }
        t => (t.resolve(zrange), t == Thickness::Full),
    };
    if cli.cores == 0 {
        return Err(Error::range("cores", "at least one core is required"));
    }
    let phase = cli.phase.map(Phase::try_from).transpose()?;
    let roi = match cli.roi {
        Some(v) => {
            let r = Rect::new(v[0], v[1], v[2], v[3]);
            if r.width == 0 || r.height == 0 {
                return Err(Error::range("roi", format!("width and height must be positive, got {r}")));
            }
            Some(r)
        }
        None => None,
    };

    Ok(RunConfig {
        pattern: cli.pattern,
        psize: cli.psize,
        zrange,
        src: cli.src,
        dst: cli.dst,
        roi,
        phase,
        valid_threshold: cli.valid,
        thickness,
        thickness_full,
        cores: cli.cores,
        settings_file: cli.settings_file,
    })
}

/// Tunable algorithm parameters. Lengths are in pixels at the working pixel
/// size (`target_psize`), intensities on the normalized 0-255 scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmSettings {
    // preprocessing
    pub contrast_low_pct: f64,
    pub contrast_high_pct: f64,
    /// Border rows/columns whose intensity variance stays below this on
    /// every slice are cropped by the automatic ROI.
    pub roi_variance_threshold: f64,
    pub target_psize: f64,
    pub bilateral_diameter: u32,
    pub bilateral_sigma_range: f64,
    pub bilateral_sigma_spatial: f64,
    pub gaussian_sigma: f64,

    // ridges
    pub scale_small: f64,
    pub scale_large: f64,
    /// Membranes are darker than their surroundings.
    pub dark_ridges: bool,
    pub ridge_strength_min: f64,

    // curves
    pub curve_min_len: f64,
    pub curve_max_len: f64,
    pub curve_fit_tol: f64,

    // seeding
    pub dbscan_eps: f64,
    pub dbscan_min_pts: u32,

    // snake
    pub snake_node_count: u32,
    pub snake_inflation_weight: f64,
    pub snake_tension_weight: f64,
    pub snake_rigidity_weight: f64,
    pub snake_image_weight: f64,
    pub snake_step_size: f64,
    pub snake_max_iters: u32,
    pub snake_convergence_eps: f64,
    pub snake_initial_radius: f64,
    /// Block-mean strength below this exerts no force on the snake.
    pub snake_field_floor: f64,
    /// Strength regarded as a full-contrast membrane; the snake image force
    /// and the boundary score are expressed relative to it.
    pub energy_ref: f64,

    // validator
    pub w_boundary_energy: f64,
    pub w_interior_energy: f64,
    pub w_area: f64,
    pub w_discontinuity: f64,
    pub w_curvature: f64,
    pub w_signature: f64,
    /// Mean SMALL-scale interior strength that scores 1.
    pub interior_energy_ref: f64,
    /// Interior pixels closer than this to the contour are ignored.
    pub interior_margin: f64,
    /// Equivalent-disk diameters (nm) of the trapezoidal area ramp.
    pub area_min_nm: f64,
    pub area_low_nm: f64,
    pub area_high_nm: f64,
    pub area_max_nm: f64,
    /// Contour points with block strength below this count as gaps.
    pub gap_strength_min: f64,
    pub kink_angle_deg: f64,
    pub curvature_norm: f64,
    pub signature_norm: f64,

    // merge
    pub merge_overlap_min: f64,
}

impl Default for AlgorithmSettings {
    fn default() -> Self {
        AlgorithmSettings {
            contrast_low_pct: 1.0,
            contrast_high_pct: 99.0,
            roi_variance_threshold: 4.0,
            target_psize: 2.0,
            bilateral_diameter: 5,
            bilateral_sigma_range: 30.0,
            bilateral_sigma_spatial: 2.0,
            gaussian_sigma: 1.0,

            scale_small: 1.5,
            scale_large: 4.0,
            dark_ridges: true,
            ridge_strength_min: 12.0,

            curve_min_len: 8.0,
            curve_max_len: 60.0,
            curve_fit_tol: 1.0,

            dbscan_eps: 45.0,
            dbscan_min_pts: 3,

            snake_node_count: 64,
            snake_inflation_weight: 0.3,
            snake_tension_weight: 0.05,
            snake_rigidity_weight: 0.01,
            snake_image_weight: 4.0,
            snake_step_size: 1.0,
            snake_max_iters: 1500,
            snake_convergence_eps: 0.02,
            snake_initial_radius: 10.0,
            snake_field_floor: 30.0,
            energy_ref: 40.0,

            w_boundary_energy: 0.2,
            w_interior_energy: 0.35,
            w_area: 0.1,
            w_discontinuity: 0.15,
            w_curvature: 0.1,
            w_signature: 0.1,
            interior_energy_ref: 8.0,
            interior_margin: 6.0,
            area_min_nm: 80.0,
            area_low_nm: 150.0,
            area_high_nm: 800.0,
            area_max_nm: 1500.0,
            gap_strength_min: 12.0,
            kink_angle_deg: 30.0,
            curvature_norm: 3.0,
            signature_norm: 8.0,

            merge_overlap_min: 0.0,
        }
    }
}

impl AlgorithmSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSettings(msg));
        if !(0.0 <= self.contrast_low_pct
            && self.contrast_low_pct < self.contrast_high_pct
            && self.contrast_high_pct <= 100.0)
        {
            return bad(format!(
                "need 0 <= contrast_low_pct < contrast_high_pct <= 100, got {} and {}",
                self.contrast_low_pct, self.contrast_high_pct
            ));
        }
        if !(self.scale_small > 0.0 && self.scale_small < self.scale_large) {
            return bad(format!(
                "need 0 < scale_small < scale_large, got {} and {}",
                self.scale_small, self.scale_large
            ));
        }
        let positive = [
            ("target_psize", self.target_psize),
            ("bilateral_sigma_range", self.bilateral_sigma_range),
            ("bilateral_sigma_spatial", self.bilateral_sigma_spatial),
            ("gaussian_sigma", self.gaussian_sigma),
            ("curve_min_len", self.curve_min_len),
            ("curve_fit_tol", self.curve_fit_tol),
            ("dbscan_eps", self.dbscan_eps),
            ("snake_step_size", self.snake_step_size),
            ("snake_convergence_eps", self.snake_convergence_eps),
            ("snake_initial_radius", self.snake_initial_radius),
            ("energy_ref", self.energy_ref),
            ("interior_energy_ref", self.interior_energy_ref),
            ("kink_angle_deg", self.kink_angle_deg),
            ("curvature_norm", self.curvature_norm),
            ("signature_norm", self.signature_norm),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        let non_negative = [
            ("roi_variance_threshold", self.roi_variance_threshold),
            ("ridge_strength_min", self.ridge_strength_min),
            ("snake_field_floor", self.snake_field_floor),
            ("snake_inflation_weight", self.snake_inflation_weight),
            ("snake_tension_weight", self.snake_tension_weight),
            ("snake_rigidity_weight", self.snake_rigidity_weight),
            ("snake_image_weight", self.snake_image_weight),
            ("interior_margin", self.interior_margin),
            ("gap_strength_min", self.gap_strength_min),
            ("w_boundary_energy", self.w_boundary_energy),
            ("w_interior_energy", self.w_interior_energy),
            ("w_area", self.w_area),
            ("w_discontinuity", self.w_discontinuity),
            ("w_curvature", self.w_curvature),
            ("w_signature", self.w_signature),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        let wsum: f64 = self.validator_weights().iter().sum();
        if (wsum - 1.0).abs() > 1e-6 {
            return bad(format!("validator weights must sum to 1, got {wsum}"));
        }
        if self.bilateral_diameter == 0 {
            return bad("bilateral_diameter must be at least 1".into());
        }
        if self.curve_max_len <= self.curve_min_len {
            return bad(format!(
                "curve_max_len ({}) must exceed curve_min_len ({})",
                self.curve_max_len, self.curve_min_len
            ));
        }
        if self.dbscan_min_pts == 0 {
            return bad("dbscan_min_pts must be at least 1".into());
        }
        if self.snake_node_count < 8 {
            return bad(format!("snake_node_count must be at least 8, got {}", self.snake_node_count));
        }
        if self.snake_max_iters == 0 {
            return bad("snake_max_iters must be at least 1".into());
        }
        if !(0.0 <= self.area_min_nm
            && self.area_min_nm <= self.area_low_nm
            && self.area_low_nm <= self.area_high_nm
            && self.area_high_nm <= self.area_max_nm)
        {
            return bad("area ramp must satisfy area_min_nm <= area_low_nm <= area_high_nm <= area_max_nm".into());
        }
        if !(0.0..=1.0).contains(&self.merge_overlap_min) {
            return bad(format!("merge_overlap_min must be in [0, 1], got {}", self.merge_overlap_min));
        }
        Ok(())
    }

    /// Boundary, interior, area, discontinuity, curvature, signature.
    pub fn validator_weights(&self) -> [f64; 6] {
        [
            self.w_boundary_energy,
            self.w_interior_energy,
            self.w_area,
            self.w_discontinuity,
            self.w_curvature,
            self.w_signature,
        ]
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("settings always serialize")
    }

    /// Hex SHA-256 of the canonical YAML form.
    pub fn digest(&self) -> String {
        hex_digest(self.to_yaml().as_bytes())
    }

    pub fn known_keys() -> Vec<String> {
        match serde_yaml::to_value(AlgorithmSettings::default()) {
            Ok(serde_yaml::Value::Mapping(m)) => m
                .keys()
                .filter_map(|k| k.as_str().map(str::to_owned))
                .collect(),
            _ => unreachable!("settings serialize to a mapping"),
        }
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Built-in defaults, or defaults overridden by the keys of a YAML file.
pub fn load_settings(path: Option<&Path>) -> Result<AlgorithmSettings> {
    let Some(path) = path else {
        return Ok(AlgorithmSettings::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_settings(&text, path)
}

/// Parses settings text; `origin` is only used in error messages.
pub fn parse_settings(text: &str, origin: &Path) -> Result<AlgorithmSettings> {
    let parse_err = |e: serde_yaml::Error| Error::SettingsParse {
        path: origin.to_path_buf(),
        line: e.location().map(|l| l.line()).unwrap_or(0),
        detail: e.to_string(),
    };
    let value: serde_yaml::Value = serde_yaml::from_str(text).map_err(parse_err)?;
    let settings = match value {
        serde_yaml::Value::Null => AlgorithmSettings::default(),
        serde_yaml::Value::Mapping(ref map) => {
            let known = AlgorithmSettings::known_keys();
            for key in map.keys() {
                let name = match key.as_str() {
                    Some(s) => s.to_owned(),
                    None => format!("{key:?}"),
                };
                if !known.contains(&name) {
                    return Err(Error::UnknownSettingsKey(name));
                }
            }
            serde_yaml::from_str::<AlgorithmSettings>(text).map_err(parse_err)?
        }
        _ => {
            return Err(Error::InvalidSettings(
                "settings file must be a flat mapping of keys to values".into(),
            ))
        }
    };
    settings.validate()?;
    Ok(settings)
}

/// printf-style slice filename pattern with exactly one integer conversion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlicePattern {
    prefix: String,
    suffix: String,
    width: usize,
    zero_pad: bool,
}

impl SlicePattern {
    pub fn parse(pattern: &str) -> Result<Self> {
        let err = |detail: &str| Error::Pattern {
            pattern: pattern.to_owned(),
            detail: detail.to_owned(),
        };
        let mut prefix = String::new();
        let mut suffix = String::new();
        let mut spec: Option<(usize, bool)> = None;
        let mut chars = pattern.chars().peekable();
        while let Some(c) = chars.next() {
            if c != '%' {
                if spec.is_some() {
                    suffix.push(c)
                } else {
                    prefix.push(c)
                }
                continue;
            }
            if chars.peek() == Some(&'%') {
                chars.next();
                if spec.is_some() {
                    suffix.push('%')
                } else {
                    prefix.push('%')
                }
                continue;
            }
            let zero_pad = chars.peek() == Some(&'0');
            if zero_pad {
                chars.next();
            }
            let mut digits = String::new();
            while let Some(&d) = chars.peek() {
                if d.is_ascii_digit() {
                    digits.push(d);
                    chars.next();
                } else {
                    break;
                }
            }
            match chars.next() {
                Some('d') | Some('i') | Some('u') => {}
                _ => return Err(err("only integer conversions (%d, %0Nd) are supported")),
            }
            if spec.is_some() {
                return Err(err("pattern has more than one placeholder"));
            }
            let width = if digits.is_empty() {
                0
            } else {
                digits.parse().map_err(|_| err("bad field width"))?
            };
            spec = Some((width, zero_pad));
        }
        let Some((width, zero_pad)) = spec else {
            return Err(err("pattern has no integer placeholder"));
        };
        Ok(SlicePattern {
            prefix,
            suffix,
            width,
            zero_pad,
        })
    }

    pub fn format(&self, z: u32) -> String {
        let num = if self.zero_pad {
            format!("{z:0width$}", width = self.width)
        } else {
            format!("{z:>width$}", width = self.width)
        };
        format!("{}{}{}", self.prefix, num, self.suffix)
    }
}

/// One source path per slice of the range, ascending in z; fails listing
/// every slice whose file is absent.
pub fn expand_slice_paths(cfg: &RunConfig) -> Result<Vec<(u32, PathBuf)>> {
    let pattern = SlicePattern::parse(&cfg.pattern)?;
    let paths: Vec<(u32, PathBuf)> = cfg
        .zrange
        .iter()
        .map(|z| (z, cfg.src.join(pattern.format(z))))
        .collect();
    let missing: Vec<u32> = paths
        .iter()
        .filter(|(_, p)| !p.is_file())
        .map(|(z, _)| *z)
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingSlices(missing));
    }
    Ok(paths)
}
