//! Built-in experiments, config-file parsing, and the measurement run loop.
//!
//! An [`ExperimentPreset`] names a scene recipe plus solver settings, a run
//! duration, and a measurement schedule. [`run_experiment`] drives the whole
//! pipeline:
//!
//! ```text
//! sample scene → relax until still → preset action → simulate → write files
//! ```
//!
//! where the preset action is what makes the named experiments differ:
//! nothing (resting cases), a velocity ramp (sliding sheet), deleting the
//! confining shell (released cylinder), or running a particle emitter
//! (jet onto a grid of holes).
//!
//! Configs are flat `key = value` text under `[experiment]`, `[solver]`,
//! `[relaxation]` and (for `preset = custom`) `[scene]` sections. Unknown
//! keys and sections are rejected with their line number rather than
//! ignored, so a typo cannot silently run a different experiment. Every run
//! directory receives a `config_echo` file in the same format from which the
//! run can be reproduced exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::{BoundaryMode, PressureEstimator, SimulationConfig};
use crate::diagnostics::{
    self, HistogramSeries, MetricsFrame, Population, Quantity, RunMetrics,
};
use crate::particles::ParticleSet;
use crate::scene::{
    relax_boundary_samples, sample_boundary_jittered, sample_boundary_regular, sample_box_container,
    sample_cylinder_shell, sample_fluid_block, sample_fluid_sheet, sample_grid_obstacle,
    FluidRegion, RelaxParams, Surface,
};
use crate::solver::{
    calibrate_boundary_volume, RelaxationCriterion, RelaxationOutcome, Simulation,
};
use crate::{SphError, Vec3};

/// Particle count of the single-layer sheet experiments.
const SHEET_PARTICLES: usize = 508;
/// Reference fluid volume of the full-scale cylinder column (m³): the
/// radius-1 m column holds 103,166 particles of 10⁻³ m³ each.
const CYLINDER_FULL_VOLUME: f64 = 103.166;
/// Sliding-sheet ramp: linear increase to this x-speed over [`RAMP_TIME`].
const RAMP_TARGET_SPEED: f64 = 1.0;
const RAMP_TIME: f64 = 0.5;
/// Jet emitter: square nozzle side (particles) and downward exit speed.
const NOZZLE_SIDE: usize = 4;
const NOZZLE_SPEED: f64 = 2.0;
const NOZZLE_HEIGHT: f64 = 0.5;
/// Sample density for jitter-sampled surfaces (samples per footprint cell).
const JITTER_DENSITY: f64 = 2.0;

/// The built-in experiment family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetName {
    /// 508-particle single-layer sheet settling onto a regular plane.
    RestingSheet,
    /// 2×2×8 m container with a 1.3 m fluid fill settling to rest.
    RestingBulk,
    /// The sheet again, accelerated to 1 m/s across a jitter-sampled plane.
    SlidingSheet,
    /// Water column confined by a cylindrical shell that is deleted after
    /// relaxation.
    ReleasedCylinder,
    /// Particle jet falling onto a plate with a square grid of holes.
    JetGrid,
    /// Container box plus fluid box supplied by the `[scene]` section.
    Custom,
}

impl PresetName {
    pub fn label(self) -> &'static str {
        match self {
            PresetName::RestingSheet => "resting-sheet",
            PresetName::RestingBulk => "resting-bulk",
            PresetName::SlidingSheet => "sliding-sheet",
            PresetName::ReleasedCylinder => "released-cylinder",
            PresetName::JetGrid => "jet-grid",
            PresetName::Custom => "custom",
        }
    }

    fn parse(s: &str) -> Option<PresetName> {
        Some(match s {
            "resting-sheet" => PresetName::RestingSheet,
            "resting-bulk" => PresetName::RestingBulk,
            "sliding-sheet" => PresetName::SlidingSheet,
            "released-cylinder" => PresetName::ReleasedCylinder,
            "jet-grid" => PresetName::JetGrid,
            "custom" => PresetName::Custom,
            _ => return None,
        })
    }
}

/// Scene geometry for `preset = custom`: an open-top container box and an
/// axis-aligned fluid block inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomScene {
    pub container_min: Vec3,
    pub container_size: Vec3,
    pub fluid_min: Vec3,
    pub fluid_max: Vec3,
}

/// A fully specified run: scene recipe, solver settings, duration, and
/// measurement schedule.
#[derive(Debug, Clone)]
pub struct ExperimentPreset {
    pub name: PresetName,
    pub solver: SimulationConfig,
    /// Simulated time after relaxation (s). Zero runs only the relaxation.
    pub duration: f64,
    /// Steps between metric/histogram frames.
    pub frame_interval: u32,
    /// Boundary sample spacing as a fraction of the particle diameter, for
    /// the regularly sampled surfaces.
    pub sampling_ratio: f64,
    /// Geometric scale of the released-cylinder scene: multiplies both the
    /// cylinder radius and the fill height, so the particle count scales
    /// with its cube. 1.0 is the full-size column.
    pub scale: f64,
    /// Full-size cylinder radius (m) before `scale` is applied.
    pub cylinder_radius: f64,
    /// Seed for jittered sampling (overridable on the command line).
    pub seed: u64,
    pub relaxation: RelaxationCriterion,
    /// Required when `name` is [`PresetName::Custom`], ignored otherwise.
    pub custom_scene: Option<CustomScene>,
}

impl ExperimentPreset {
    /// The named experiment with its documented default parameters.
    pub fn builtin(name: PresetName) -> ExperimentPreset {
        let duration = match name {
            PresetName::RestingSheet => 1.0,
            PresetName::RestingBulk => 8.0,
            PresetName::SlidingSheet => 3.0,
            PresetName::ReleasedCylinder => 0.5,
            PresetName::JetGrid => 10.0,
            PresetName::Custom => 1.0,
        };
        let mut relaxation = RelaxationCriterion::default();
        // Desk-scale scenes settle well inside these budgets; the cap matters
        // when the coupled variants keep jittering and only the budget ends
        // the phase.
        relaxation.max_steps = match name {
            PresetName::RestingSheet | PresetName::RestingBulk => 8_000,
            PresetName::SlidingSheet => 6_000,
            PresetName::ReleasedCylinder => 8_000,
            PresetName::JetGrid | PresetName::Custom => 20_000,
        };
        ExperimentPreset {
            name,
            solver: SimulationConfig::default(),
            duration,
            frame_interval: 10,
            sampling_ratio: 0.5,
            scale: 0.25,
            cylinder_radius: 3.0,
            seed: 1,
            relaxation,
            custom_scene: None,
        }
    }
}

/// One summary line per built-in experiment, plus the custom escape hatch.
pub fn list_experiments() -> Vec<String> {
    vec![
        "resting-sheet: 508 particles in a single-layer disk settling onto a regularly \
         sampled plane (sampling_ratio 0.5–0.7)"
            .to_string(),
        "resting-bulk: 2×2×8 m container holding 4693 fluid particles (1.3 m fill) \
         settling to rest"
            .to_string(),
        "sliding-sheet: the 508-particle sheet accelerated to 1 m/s over 0.5 s across a \
         jitter-sampled, impulse-relaxed plane"
            .to_string(),
        "released-cylinder: water column confined by a cylinder shell (radius 3 m × scale, \
         default scale 0.25) released after relaxation onto a jitter-sampled floor"
            .to_string(),
        "jet-grid: 4×4-particle nozzle at 2 m/s onto a plate with 2-diameter holes between \
         2-diameter rods; reports the fraction of liquid passing the plate"
            .to_string(),
        "custom: open-top container box plus fluid block taken from the [scene] section"
            .to_string(),
    ]
}

fn cfg_err(line: usize, message: impl Into<String>) -> SphError {
    SphError::Config { line, message: message.into() }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, raw: &str) -> Result<T, SphError> {
    raw.parse::<T>()
        .map_err(|_| cfg_err(line, format!("value for '{key}' is not a valid number: '{raw}'")))
}

fn parse_vec3(line: usize, key: &str, raw: &str) -> Result<Vec3, SphError> {
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(cfg_err(
            line,
            format!("value for '{key}' must be three comma-separated numbers, got '{raw}'"),
        ));
    }
    Ok(Vec3::new(
        parse_num::<f64>(line, key, parts[0])?,
        parse_num::<f64>(line, key, parts[1])?,
        parse_num::<f64>(line, key, parts[2])?,
    ))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Experiment,
    Solver,
    Relaxation,
    Scene,
}

/// Strips comments and whitespace; returns `None` for blank lines.
fn significant(line: &str) -> Option<&str> {
    let line = match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    };
    let line = line.trim();
    (!line.is_empty()).then_some(line)
}

/// Parses a config file into a validated preset. See the module docs for the
/// format; every diagnostic carries the 1-based line it refers to.
pub fn parse_config(path: &Path) -> Result<ExperimentPreset, SphError> {
    let text =
        fs::read_to_string(path).map_err(|e| SphError::io(path.display().to_string(), e))?;
    parse_config_str(&text)
}

/// [`parse_config`] on already-loaded text.
pub fn parse_config_str(text: &str) -> Result<ExperimentPreset, SphError> {
    // First pass: locate the preset name so defaults exist before the other
    // keys override them.
    let mut section = Section::None;
    let mut preset_name = None;
    let mut preset_line = 0usize;
    let mut experiment_header_line = 1usize;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let Some(line) = significant(raw) else { continue };
        if let Some(name) = line.strip_prefix('[') {
            section = match name.strip_suffix(']') {
                Some("experiment") => {
                    experiment_header_line = line_no;
                    Section::Experiment
                }
                Some("solver") => Section::Solver,
                Some("relaxation") => Section::Relaxation,
                Some("scene") => Section::Scene,
                Some(other) => return Err(cfg_err(line_no, format!("unknown section '[{other}]'"))),
                None => return Err(cfg_err(line_no, "unterminated section header")),
            };
            continue;
        }
        if section == Section::Experiment {
            if let Some((key, value)) = line.split_once('=') {
                if key.trim() == "preset" {
                    let value = value.trim();
                    preset_name = Some(PresetName::parse(value).ok_or_else(|| {
                        cfg_err(
                            line_no,
                            format!(
                                "unknown preset '{value}' (expected resting-sheet, resting-bulk, \
                                 sliding-sheet, released-cylinder, jet-grid, or custom)"
                            ),
                        )
                    })?);
                    preset_line = line_no;
                }
            }
        }
    }
    let Some(name) = preset_name else {
        return Err(cfg_err(
            experiment_header_line,
            "missing required field 'preset' in the [experiment] section",
        ));
    };
    let mut preset = ExperimentPreset::builtin(name);

    // Second pass: apply and validate every key.
    let mut section = Section::None;
    let mut solver_lines: Vec<(String, usize)> = Vec::new();
    let mut scene_min: Option<Vec3> = None;
    let mut scene_size: Option<Vec3> = None;
    let mut fluid_min: Option<Vec3> = None;
    let mut fluid_max: Option<Vec3> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let Some(line) = significant(raw) else { continue };
        if line.starts_with('[') {
            // Validated in the first pass.
            section = match line {
                "[experiment]" => Section::Experiment,
                "[solver]" => Section::Solver,
                "[relaxation]" => Section::Relaxation,
                _ => Section::Scene,
            };
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(cfg_err(line_no, format!("expected 'key = value', got '{line}'")));
        };
        let (key, value) = (key.trim(), value.trim());
        match section {
            Section::None => {
                return Err(cfg_err(
                    line_no,
                    format!("key '{key}' appears before any [section] header"),
                ))
            }
            Section::Experiment => match key {
                "preset" => {}
                "duration" => {
                    let v: f64 = parse_num(line_no, key, value)?;
                    if !(v >= 0.0 && v.is_finite()) {
                        return Err(cfg_err(line_no, "duration must be a finite value >= 0"));
                    }
                    preset.duration = v;
                }
                "frame_interval" => {
                    let v: u32 = parse_num(line_no, key, value)?;
                    if v == 0 {
                        return Err(cfg_err(line_no, "frame_interval must be at least 1"));
                    }
                    preset.frame_interval = v;
                }
                "sampling_ratio" => {
                    let v: f64 = parse_num(line_no, key, value)?;
                    if !(v > 0.0 && v <= 2.0) {
                        return Err(cfg_err(
                            line_no,
                            format!("sampling_ratio {v} outside (0, 2]: beyond 2 the boundary \
                                     spacing exceeds the kernel support"),
                        ));
                    }
                    preset.sampling_ratio = v;
                }
                "scale" => {
                    let v: f64 = parse_num(line_no, key, value)?;
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(cfg_err(line_no, "scale must be positive and finite"));
                    }
                    preset.scale = v;
                }
                "cylinder_radius" => {
                    let v: f64 = parse_num(line_no, key, value)?;
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(cfg_err(line_no, "cylinder_radius must be positive"));
                    }
                    preset.cylinder_radius = v;
                }
                "seed" => preset.seed = parse_num(line_no, key, value)?,
                _ => {
                    return Err(cfg_err(
                        line_no,
                        format!("unknown key '{key}' in [experiment]"),
                    ))
                }
            },
            Section::Solver => {
                solver_lines.push((key.to_string(), line_no));
                let s = &mut preset.solver;
                match key {
                    "mode" => {
                        s.mode = match value.to_ascii_lowercase().as_str() {
                            "coupled" => BoundaryMode::Coupled,
                            "decoupled" => BoundaryMode::Decoupled,
                            _ => {
                                return Err(cfg_err(
                                    line_no,
                                    format!("unknown mode '{value}' (expected coupled or decoupled)"),
                                ))
                            }
                        }
                    }
                    "estimator" => {
                        s.estimator = match value.to_ascii_uppercase().as_str() {
                            "PM" | "MIRRORING" => PressureEstimator::Mirroring,
                            "PB" | "BOUNDARIES" => PressureEstimator::Boundaries,
                            _ => {
                                return Err(cfg_err(
                                    line_no,
                                    format!("unknown estimator '{value}' (expected PM or PB)"),
                                ))
                            }
                        }
                    }
                    "gamma" => s.gamma = parse_num(line_no, key, value)?,
                    "dt" => s.dt = parse_num(line_no, key, value)?,
                    "particle_radius" => s.particle_radius = parse_num(line_no, key, value)?,
                    "rest_density" => s.rest_density = parse_num(line_no, key, value)?,
                    "gravity_z" => s.gravity = Vec3::new(0.0, 0.0, parse_num(line_no, key, value)?),
                    "viscosity_alpha" => s.viscosity_alpha = parse_num(line_no, key, value)?,
                    "sound_speed" => s.sound_speed = parse_num(line_no, key, value)?,
                    "tension_kappa" => s.tension_kappa = parse_num(line_no, key, value)?,
                    "lim_b" => s.lim_b = parse_num(line_no, key, value)?,
                    "lim_f" => s.lim_f = parse_num(line_no, key, value)?,
                    "lim_avg" => s.lim_avg = parse_num(line_no, key, value)?,
                    "iter_max" => s.iter_max = parse_num(line_no, key, value)?,
                    "stage_iter_max" => s.stage_iter_max = parse_num(line_no, key, value)?,
                    "min_iterations" => s.min_iterations = parse_num(line_no, key, value)?,
                    "omega" => s.omega = parse_num(line_no, key, value)?,
                    "warm_start" => s.warm_start = parse_num(line_no, key, value)?,
                    _ => {
                        return Err(cfg_err(line_no, format!("unknown key '{key}' in [solver]")))
                    }
                }
            }
            Section::Relaxation => match key {
                "speed_threshold" => {
                    let v: f64 = parse_num(line_no, key, value)?;
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(cfg_err(line_no, "speed_threshold must be positive"));
                    }
                    preset.relaxation.speed_threshold = v;
                }
                "quiet_steps" => {
                    let v: u32 = parse_num(line_no, key, value)?;
                    if v == 0 {
                        return Err(cfg_err(line_no, "quiet_steps must be at least 1"));
                    }
                    preset.relaxation.quiet_steps = v;
                }
                "max_steps" => preset.relaxation.max_steps = parse_num(line_no, key, value)?,
                "damping" => {
                    let v: f64 = parse_num(line_no, key, value)?;
                    if !(v >= 0.0 && v < 1.0) {
                        return Err(cfg_err(line_no, "damping must be in [0, 1)"));
                    }
                    preset.relaxation.damping = v;
                }
                "speed_cap" => {
                    let v: f64 = parse_num(line_no, key, value)?;
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(cfg_err(line_no, "speed_cap must be positive"));
                    }
                    preset.relaxation.speed_cap = v;
                }
                _ => {
                    return Err(cfg_err(line_no, format!("unknown key '{key}' in [relaxation]")))
                }
            },
            Section::Scene => {
                if preset.name != PresetName::Custom {
                    return Err(cfg_err(
                        line_no,
                        format!("[scene] key '{key}' is only valid for preset = custom"),
                    ));
                }
                match key {
                    "container_min" => scene_min = Some(parse_vec3(line_no, key, value)?),
                    "container_size" => {
                        let v = parse_vec3(line_no, key, value)?;
                        if v.iter().any(|c| *c <= 0.0) {
                            return Err(cfg_err(
                                line_no,
                                "container_size components must be positive",
                            ));
                        }
                        scene_size = Some(v);
                    }
                    "fluid_min" => fluid_min = Some(parse_vec3(line_no, key, value)?),
                    "fluid_max" => fluid_max = Some(parse_vec3(line_no, key, value)?),
                    _ => {
                        return Err(cfg_err(line_no, format!("unknown key '{key}' in [scene]")))
                    }
                }
            }
        }
    }

    if preset.name == PresetName::Custom {
        match (scene_min, scene_size, fluid_min, fluid_max) {
            (Some(container_min), Some(container_size), Some(fluid_min), Some(fluid_max)) => {
                preset.custom_scene =
                    Some(CustomScene { container_min, container_size, fluid_min, fluid_max });
            }
            _ => {
                return Err(cfg_err(
                    preset_line,
                    "preset = custom requires a [scene] section with container_min, \
                     container_size, fluid_min, and fluid_max",
                ))
            }
        }
    }

    // Range-check the solver values, pointing the error at the line that set
    // the offending key when it came from this file.
    if let Err(e) = preset.solver.validate() {
        if let SphError::InvalidValue { ref key, ref message } = e {
            if let Some((_, line)) = solver_lines.iter().find(|(k, _)| k == key) {
                return Err(cfg_err(*line, format!("invalid value for '{key}': {message}")));
            }
        }
        return Err(e);
    }
    Ok(preset)
}

/// Renders a preset back into parseable config text; `parse_config_str` on
/// the result reproduces the preset exactly (Display round-trips f64).
pub fn echo_config(preset: &ExperimentPreset, seed: u64) -> String {
    let mut out = String::new();
    let s = &preset.solver;
    let _ = writeln!(out, "# {} run configuration (reproducible echo)", preset.name.label());
    let _ = writeln!(
        out,
        "# boundary sample volume = {} m^3 (calibrated against a half-diameter-spaced plane)",
        calibrate_boundary_volume(s.particle_radius)
    );
    if preset.name == PresetName::SlidingSheet {
        let _ = writeln!(
            out,
            "# sliding ramp: linear to {RAMP_TARGET_SPEED} m/s over the first {RAMP_TIME} s"
        );
    }
    if preset.name == PresetName::JetGrid {
        let _ = writeln!(
            out,
            "# emitter: {NOZZLE_SIDE}x{NOZZLE_SIDE} nozzle, {NOZZLE_SPEED} m/s downward from \
             z = {NOZZLE_HEIGHT} m"
        );
    }
    let _ = writeln!(out, "[experiment]");
    let _ = writeln!(out, "preset = {}", preset.name.label());
    let _ = writeln!(out, "duration = {}", preset.duration);
    let _ = writeln!(out, "frame_interval = {}", preset.frame_interval);
    let _ = writeln!(out, "sampling_ratio = {}", preset.sampling_ratio);
    let _ = writeln!(out, "scale = {}", preset.scale);
    let _ = writeln!(out, "cylinder_radius = {}", preset.cylinder_radius);
    let _ = writeln!(out, "seed = {seed}");
    let _ = writeln!(out);
    let _ = writeln!(out, "[solver]");
    let _ = writeln!(out, "mode = {}", s.mode.label());
    let _ = writeln!(out, "estimator = {}", s.estimator.label());
    let _ = writeln!(out, "gamma = {}", s.gamma);
    let _ = writeln!(out, "dt = {}", s.dt);
    let _ = writeln!(out, "particle_radius = {}", s.particle_radius);
    let _ = writeln!(out, "rest_density = {}", s.rest_density);
    let _ = writeln!(out, "gravity_z = {}", s.gravity.z);
    let _ = writeln!(out, "viscosity_alpha = {}", s.viscosity_alpha);
    let _ = writeln!(out, "sound_speed = {}", s.sound_speed);
    let _ = writeln!(out, "tension_kappa = {}", s.tension_kappa);
    let _ = writeln!(out, "lim_b = {}", s.lim_b);
    let _ = writeln!(out, "lim_f = {}", s.lim_f);
    let _ = writeln!(out, "lim_avg = {}", s.lim_avg);
    let _ = writeln!(out, "iter_max = {}", s.iter_max);
    let _ = writeln!(out, "stage_iter_max = {}", s.stage_iter_max);
    let _ = writeln!(out, "min_iterations = {}", s.min_iterations);
    let _ = writeln!(out, "omega = {}", s.omega);
    let _ = writeln!(out, "warm_start = {}", s.warm_start);
    let _ = writeln!(out);
    let _ = writeln!(out, "[relaxation]");
    let _ = writeln!(out, "speed_threshold = {}", preset.relaxation.speed_threshold);
    let _ = writeln!(out, "quiet_steps = {}", preset.relaxation.quiet_steps);
    let _ = writeln!(out, "max_steps = {}", preset.relaxation.max_steps);
    let _ = writeln!(out, "damping = {}", preset.relaxation.damping);
    let _ = writeln!(out, "speed_cap = {}", preset.relaxation.speed_cap);
    if let Some(scene) = &preset.custom_scene {
        let v3 = |v: &Vec3| format!("{}, {}, {}", v.x, v.y, v.z);
        let _ = writeln!(out);
        let _ = writeln!(out, "[scene]");
        let _ = writeln!(out, "container_min = {}", v3(&scene.container_min));
        let _ = writeln!(out, "container_size = {}", v3(&scene.container_size));
        let _ = writeln!(out, "fluid_min = {}", v3(&scene.fluid_min));
        let _ = writeln!(out, "fluid_max = {}", v3(&scene.fluid_max));
    }
    out
}

/// A sampled scene ready to simulate.
pub(crate) struct BuiltScene {
    pub set: ParticleSet,
    /// Per-particle flag marking the removable cylinder shell.
    pub shell_mask: Vec<bool>,
    /// Plane for the passage-fraction metric (jet experiment).
    pub passage_plane: Option<f64>,
    /// Supporting-plane height that fluid heights are measured against.
    pub height_plane: f64,
    /// The lowest solid surface of the scene; no fluid center may end up
    /// below it (impenetrability is judged against this plane).
    pub floor_z: f64,
    pub warnings: Vec<String>,
}

pub(crate) fn build_scene(preset: &ExperimentPreset, seed: u64) -> Result<BuiltScene, SphError> {
    let cfg = &preset.solver;
    let d = cfg.diameter();
    let vb = calibrate_boundary_volume(cfg.particle_radius);
    let vf = cfg.fluid_volume();
    let bspace = preset.sampling_ratio * d;

    let mut set = ParticleSet::new();
    let mut warnings = Vec::new();
    let mut shell_mask = Vec::new();
    let mut passage_plane = None;
    let mut height_plane = 0.0;
    let mut floor_z = 0.0;

    let add_boundary = |set: &mut ParticleSet, positions: &[Vec3]| {
        for p in positions {
            set.push_boundary(*p, vb);
        }
    };
    let add_fluid = |set: &mut ParticleSet, sampled: &crate::scene::Sampled,
                         warnings: &mut Vec<String>| {
        warnings.extend(sampled.warnings.iter().cloned());
        for p in &sampled.positions {
            set.push_fluid(*p, Vec3::zeros(), vf);
        }
    };

    match preset.name {
        PresetName::RestingSheet => {
            let plane = Surface::Rect {
                origin: Vec3::new(-1.8, -1.8, 0.0),
                u: Vec3::new(3.6, 0.0, 0.0),
                v: Vec3::new(0.0, 3.6, 0.0),
            };
            add_boundary(&mut set, &sample_boundary_regular(&plane, bspace));
            // Start two diameters up: just outside the kernel support of the
            // plane, so the sheet falls gently onto it during relaxation
            // instead of waking up strongly over-dense.
            let sheet = sample_fluid_sheet(Vec3::new(0.0, 0.0, 2.0 * d), d, SHEET_PARTICLES);
            add_fluid(&mut set, &sheet, &mut warnings);
        }
        PresetName::RestingBulk => {
            let container = sample_box_container(
                Vec3::new(-1.0, -1.0, 0.0),
                Vec3::new(2.0, 2.0, 8.0),
                bspace,
            );
            add_boundary(&mut set, &container);
            let region = FluidRegion::Box {
                min: Vec3::new(-0.95, -0.95, 0.05),
                max: Vec3::new(0.95, 0.95, 1.35),
            };
            add_fluid(&mut set, &sample_fluid_block(&region, d), &mut warnings);
        }
        PresetName::SlidingSheet => {
            let plane = Surface::Rect {
                origin: Vec3::new(-2.0, -1.8, 0.0),
                u: Vec3::new(12.0, 0.0, 0.0),
                v: Vec3::new(0.0, 3.6, 0.0),
            };
            let mut samples = sample_boundary_jittered(&plane, JITTER_DENSITY, d, seed);
            relax_boundary_samples(
                &mut samples,
                &plane,
                &RelaxParams::for_density(JITTER_DENSITY, d),
            );
            add_boundary(&mut set, &samples);
            let sheet = sample_fluid_sheet(Vec3::new(0.0, 0.0, 2.0 * d), d, SHEET_PARTICLES);
            add_fluid(&mut set, &sheet, &mut warnings);
        }
        PresetName::ReleasedCylinder => {
            let shell_radius = preset.scale * preset.cylinder_radius;
            let fill = preset.scale * CYLINDER_FULL_VOLUME
                / (std::f64::consts::PI * preset.cylinder_radius * preset.cylinder_radius);
            let floor_radius = shell_radius + 2.0 + fill;
            let floor = Surface::Disk { center: Vec3::zeros(), radius: floor_radius };
            let mut samples = sample_boundary_jittered(&floor, JITTER_DENSITY, d, seed);
            relax_boundary_samples(
                &mut samples,
                &floor,
                &RelaxParams::for_density(JITTER_DENSITY, d),
            );
            add_boundary(&mut set, &samples);

            let shell_from = set.len();
            let shell = sample_cylinder_shell(
                Vec3::zeros(),
                shell_radius,
                fill + 0.4,
                bspace,
            );
            add_boundary(&mut set, &shell);
            let shell_to = set.len();

            let region = FluidRegion::Cylinder {
                base: Vec3::new(0.0, 0.0, 0.05),
                radius: shell_radius - d,
                height: fill,
            };
            add_fluid(&mut set, &sample_fluid_block(&region, d), &mut warnings);

            shell_mask = (0..set.len()).map(|i| i >= shell_from && i < shell_to).collect();
        }
        PresetName::JetGrid => {
            // Plate with a hole centered at the origin under the nozzle.
            let plate = sample_grid_obstacle(
                Vec3::new(-1.1, -1.1, 0.0),
                [2.2, 2.2],
                2.0,
                2.0,
                d,
                bspace,
            );
            add_boundary(&mut set, &plate);
            // Rim walls keep deflected liquid on the plate so only liquid
            // that went through a hole counts as having passed it.
            for (origin, u) in [
                (Vec3::new(-1.1, -1.1, bspace), Vec3::new(2.2, 0.0, 0.0)),
                (Vec3::new(-1.1, 1.1, bspace), Vec3::new(2.2, 0.0, 0.0)),
                (Vec3::new(-1.1, -1.1, bspace), Vec3::new(0.0, 2.2, 0.0)),
                (Vec3::new(1.1, -1.1, bspace), Vec3::new(0.0, 2.2, 0.0)),
            ] {
                let wall = Surface::Rect { origin, u, v: Vec3::new(0.0, 0.0, 0.4) };
                add_boundary(&mut set, &sample_boundary_regular(&wall, bspace));
            }
            // Catch floor well below the plate.
            let floor = Surface::Rect {
                origin: Vec3::new(-1.5, -1.5, -1.5),
                u: Vec3::new(3.0, 0.0, 0.0),
                v: Vec3::new(0.0, 3.0, 0.0),
            };
            add_boundary(&mut set, &sample_boundary_regular(&floor, d));
            passage_plane = Some(0.0);
            floor_z = -1.5;
        }
        PresetName::Custom => {
            let Some(scene) = &preset.custom_scene else {
                return Err(SphError::InvalidValue {
                    key: "custom_scene".to_string(),
                    message: "preset = custom requires scene geometry".to_string(),
                });
            };
            add_boundary(
                &mut set,
                &sample_box_container(scene.container_min, scene.container_size, bspace),
            );
            let region = FluidRegion::Box { min: scene.fluid_min, max: scene.fluid_max };
            add_fluid(&mut set, &sample_fluid_block(&region, d), &mut warnings);
            height_plane = scene.container_min.z;
            floor_z = scene.container_min.z;
        }
    }

    if shell_mask.is_empty() {
        shell_mask = vec![false; set.len()];
    }
    Ok(BuiltScene { set, shell_mask, passage_plane, height_plane, floor_z, warnings })
}

/// Everything a finished (or aborted) run reports back, besides the files.
#[derive(Debug)]
pub struct RunOutcome {
    pub metrics: RunMetrics,
    pub relaxation: Option<RelaxationOutcome>,
    /// Steps whose pressure solve tripped the divergence fallback.
    pub diverged_steps: u64,
    /// Steps that moved a particle more than the advisory CFL fraction.
    pub cfl_warnings: u64,
    /// Sum of per-step solver iteration counts over the measured phase.
    pub iteration_sum: u64,
    /// Per-stage sweep totals (decoupled mode; zero when coupled).
    pub boundary_sweep_sum: u64,
    pub fluid_sweep_sum: u64,
    pub measured_steps: u64,
    /// Deepest excursion of any fluid center below the scene floor (m),
    /// checked after relaxation and at every measured step; 0 if none.
    pub max_floor_breach: f64,
    /// Hard abort (non-finite state); partial outputs are still written.
    pub failure: Option<SphError>,
    pub fluid_count: usize,
    pub boundary_count: usize,
    pub scene_warnings: Vec<String>,
}

impl RunOutcome {
    pub fn mean_iterations(&self) -> f64 {
        if self.measured_steps == 0 {
            return 0.0;
        }
        self.iteration_sum as f64 / self.measured_steps as f64
    }

    /// Per-step solver cost in Jacobi sweeps, the unit iteration tables
    /// compare: a coupled solve counts its iterations, a decoupled one the
    /// boundary- plus fluid-stage sweeps.
    pub fn mean_sweeps(&self) -> f64 {
        if self.measured_steps == 0 {
            return 0.0;
        }
        (self.boundary_sweep_sum + self.fluid_sweep_sum) as f64 / self.measured_steps as f64
    }

    /// The run both finished and never tripped the divergence fallback.
    pub fn clean(&self) -> bool {
        self.failure.is_none() && self.diverged_steps == 0
    }
}

/// Runs a preset end to end: sample, relax, apply the preset action,
/// simulate `duration`, and (when `out_dir` is given) write `config_echo`,
/// `metrics.csv`, four histogram series, snapshots, and `summary.txt`.
///
/// Solver blow-ups do not return `Err`: they land in [`RunOutcome::failure`]
/// after the partial outputs are written. `Err` is reserved for invalid
/// configurations and file-system problems.
pub fn run_experiment(
    preset: &ExperimentPreset,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<RunOutcome, SphError> {
    preset.solver.validate()?;
    let scene = build_scene(preset, seed)?;
    let shell_mask = scene.shell_mask;
    let height_plane = scene.height_plane;
    let passage_plane = scene.passage_plane;

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| SphError::io(dir.display().to_string(), e))?;
        let echo = echo_config(preset, seed);
        fs::write(dir.join("config_echo"), echo)
            .map_err(|e| SphError::io(dir.join("config_echo").display().to_string(), e))?;
    }

    let mut outcome = RunOutcome {
        metrics: RunMetrics::default(),
        relaxation: None,
        diverged_steps: 0,
        cfl_warnings: 0,
        iteration_sum: 0,
        boundary_sweep_sum: 0,
        fluid_sweep_sum: 0,
        measured_steps: 0,
        max_floor_breach: 0.0,
        failure: None,
        fluid_count: scene.set.fluid_count(),
        boundary_count: scene.set.boundary_count(),
        scene_warnings: scene.warnings,
    };

    let mut sim = Simulation::new(preset.solver.clone(), scene.set)?;

    // Relaxation: settle the sampled fluid before anything is measured. An
    // empty fluid (the jet emits its own) is trivially still.
    if sim.particles().fluid_count() > 0 && preset.relaxation.max_steps > 0 {
        match sim.relaxation_run(&preset.relaxation) {
            Ok(o) => outcome.relaxation = Some(o),
            Err(e) => outcome.failure = Some(e),
        }
    } else {
        outcome.relaxation =
            Some(RelaxationOutcome { steps_taken: 0, converged: true, final_avg_speed: 0.0 });
    }

    let floor_z = scene.floor_z;
    let breach_of = |set: &ParticleSet| -> f64 {
        set.fluid_indices()
            .iter()
            .map(|&i| floor_z - set.positions()[i].z)
            .fold(0.0, f64::max)
    };

    if outcome.failure.is_none() {
        if sim.particles().fluid_count() > 0 {
            outcome.metrics.relaxed_height =
                diagnostics::average_fluid_height(sim.particles(), height_plane).ok();
        }
        outcome.max_floor_breach = breach_of(sim.particles());
        if let Some(dir) = out_dir {
            diagnostics::write_snapshot(&dir.join("snapshot_relaxed.csv"), sim.particles())?;
        }
        // Preset action that happens once, between relaxation and measurement.
        if preset.name == PresetName::ReleasedCylinder {
            sim.particles_mut().remove_particles(|i| !shell_mask[i]);
        }
    }

    let mut histograms = [
        HistogramSeries::new(Quantity::Pressure, Population::Bulk),
        HistogramSeries::new(Quantity::Pressure, Population::BoundaryAdjacent),
        HistogramSeries::new(Quantity::Speed, Population::Bulk),
        HistogramSeries::new(Quantity::Speed, Population::BoundaryAdjacent),
    ];

    let dt = preset.solver.dt;
    let steps = (preset.duration / dt).round() as u64;
    // The jet stops emitting early enough for the last batch to drain; short
    // diagnostic runs emit throughout.
    let emit_until = if preset.duration > 4.0 { preset.duration - 2.0 } else { preset.duration };
    let emit_period = (preset.solver.diameter() / (NOZZLE_SPEED * dt)).round().max(1.0) as u64;
    let ramp_dv = dt * RAMP_TARGET_SPEED / RAMP_TIME;

    if outcome.failure.is_none() {
        for step in 0..steps {
            let t_before = step as f64 * dt;
            if preset.name == PresetName::JetGrid
                && step % emit_period == 0
                && t_before < emit_until
            {
                let d = preset.solver.diameter();
                let vf = preset.solver.fluid_volume();
                for ix in 0..NOZZLE_SIDE {
                    for iy in 0..NOZZLE_SIDE {
                        let off = |k: usize| (k as f64 - (NOZZLE_SIDE as f64 - 1.0) / 2.0) * d;
                        sim.particles_mut().push_fluid(
                            Vec3::new(off(ix), off(iy), NOZZLE_HEIGHT),
                            Vec3::new(0.0, 0.0, -NOZZLE_SPEED),
                            vf,
                        );
                    }
                }
            }

            let report = match sim.step() {
                Ok(r) => r,
                Err(e) => {
                    outcome.failure = Some(e);
                    break;
                }
            };
            outcome.iteration_sum += report.iterations as u64;
            outcome.boundary_sweep_sum += report.boundary_stage_sweeps as u64;
            outcome.fluid_sweep_sum += report.fluid_stage_sweeps as u64;
            outcome.measured_steps += 1;
            outcome.max_floor_breach = outcome.max_floor_breach.max(breach_of(sim.particles()));
            if report.diverged {
                outcome.diverged_steps += 1;
            }
            if report.cfl_warning {
                outcome.cfl_warnings += 1;
            }

            let t = (step + 1) as f64 * dt;
            if (step + 1) % preset.frame_interval as u64 == 0 {
                let set = sim.particles();
                let tags = diagnostics::classify_population(set, sim.contacts());
                let avg_height = if set.fluid_count() == 0 {
                    0.0
                } else {
                    diagnostics::average_fluid_height(set, height_plane).unwrap_or(0.0)
                };
                outcome.metrics.frames.push(MetricsFrame {
                    time: t,
                    avg_height,
                    avg_speed_bulk: diagnostics::average_speed(set, &tags, Population::Bulk)
                        .unwrap_or(0.0),
                    avg_speed_boundary: diagnostics::average_speed(
                        set,
                        &tags,
                        Population::BoundaryAdjacent,
                    )
                    .unwrap_or(0.0),
                    iterations: report.iterations,
                    err_b: report.err_b,
                    err_f: report.err_f,
                });
                for h in &mut histograms {
                    h.record_frame(set, &tags, t);
                }
            }

            if preset.name == PresetName::SlidingSheet && t_before < RAMP_TIME {
                let views = sim.particles_mut().views();
                for &i in views.fluid_ids {
                    views.velocities[i].x += ramp_dv;
                }
            }
        }
    }

    if passage_plane.is_some() {
        outcome.metrics.passage =
            passage_plane.map(|z| diagnostics::passage_ratio(sim.particles(), z));
    }
    outcome.fluid_count = sim.particles().fluid_count();
    outcome.boundary_count = sim.particles().boundary_count();

    if let Some(dir) = out_dir {
        diagnostics::write_metrics_csv(&dir.join("metrics.csv"), &outcome.metrics)?;
        for h in &histograms {
            let name = format!("hist_{}_{}.csv", h.quantity.label(), h.population.label());
            diagnostics::write_histogram_csv(&dir.join(name), h)?;
        }
        diagnostics::write_snapshot(&dir.join("snapshot_final.csv"), sim.particles())?;
        write_summary(&dir.join("summary.txt"), preset, seed, &outcome)?;
    }
    Ok(outcome)
}

fn write_summary(
    path: &Path,
    preset: &ExperimentPreset,
    seed: u64,
    outcome: &RunOutcome,
) -> Result<(), SphError> {
    let mut out = String::new();
    let _ = writeln!(out, "preset = {}", preset.name.label());
    let _ = writeln!(out, "mode = {}", preset.solver.mode.label());
    let _ = writeln!(out, "estimator = {}", preset.solver.estimator.label());
    let _ = writeln!(out, "seed = {seed}");
    let _ = writeln!(out, "fluid_particles = {}", outcome.fluid_count);
    let _ = writeln!(out, "boundary_particles = {}", outcome.boundary_count);
    if let Some(r) = &outcome.relaxation {
        let _ = writeln!(out, "relax_steps = {}", r.steps_taken);
        let _ = writeln!(out, "relax_converged = {}", r.converged);
        let _ = writeln!(out, "relax_final_speed = {}", r.final_avg_speed);
    }
    if let Some(h) = outcome.metrics.relaxed_height {
        let _ = writeln!(out, "relaxed_height = {h}");
    }
    let _ = writeln!(out, "measured_steps = {}", outcome.measured_steps);
    let _ = writeln!(out, "mean_iterations = {}", outcome.mean_iterations());
    if outcome.measured_steps > 0 && outcome.boundary_sweep_sum + outcome.fluid_sweep_sum > 0 {
        let n = outcome.measured_steps as f64;
        let _ = writeln!(out, "mean_boundary_sweeps = {}", outcome.boundary_sweep_sum as f64 / n);
        let _ = writeln!(out, "mean_fluid_sweeps = {}", outcome.fluid_sweep_sum as f64 / n);
    }
    let _ = writeln!(out, "diverged_steps = {}", outcome.diverged_steps);
    let _ = writeln!(out, "cfl_warnings = {}", outcome.cfl_warnings);
    let _ = writeln!(out, "max_floor_breach = {}", outcome.max_floor_breach);
    if let Some(p) = outcome.metrics.passage {
        let _ = writeln!(out, "passage_ratio = {p}");
    }
    for w in &outcome.scene_warnings {
        let _ = writeln!(out, "scene_warning = {w}");
    }
    let status = match &outcome.failure {
        Some(e) => format!("failed ({e})"),
        None if outcome.diverged_steps > 0 => "diverged".to_string(),
        None => "ok".to_string(),
    };
    let _ = writeln!(out, "status = {status}");
    fs::write(path, out).map_err(|e| SphError::io(path.display().to_string(), e))
}
