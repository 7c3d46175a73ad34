//! Measurement and persistence of run statistics.
//!
//! Everything here is a pure reader over [`ParticleSet`] state: heights,
//! speed averages split by wall contact, log-binned histogram series, the
//! fraction of fluid that passed below a plane, and the CSV/snapshot writers
//! the experiment harness emits. Nothing in this module mutates simulation
//! state, and all reductions run in fluid-index order so repeated runs
//! produce bitwise-identical files.
//!
//! Histograms use 64 logarithmically spaced bins,
//!
//! ```text
//! edge_k = lo * (hi / lo)^(k / 64),      k = 0..=64
//! bin(v) = clamp(floor(64 * ln(v / lo) / ln(hi / lo)), 0, 63)
//! ```
//!
//! with pressure binned over `[1e-3, 1e4]` Pa and speed over `[1e-5, 1e1]`
//! m/s. Out-of-range values land in the edge bins, so every frame's counts
//! sum to the population size exactly.
//!
//! A fluid particle's reported pressure is the sum of its two solver fields
//! (the coupled solve leaves the wall-stage slot at zero, so the sum is the
//! total pressure in both modes); a boundary particle reports its wall
//! pressure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::SphError;
use crate::particles::{ParticleSet, Phase};
use crate::solver::contacts::Contacts;

/// Which fluid particles a statistic ranges over: those with at least one
/// boundary sample in kernel support, or the rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Population {
    Bulk,
    BoundaryAdjacent,
}

impl Population {
    /// Short lowercase token used in file names and headers.
    pub fn label(self) -> &'static str {
        match self {
            Population::Bulk => "bulk",
            Population::BoundaryAdjacent => "boundary",
        }
    }
}

/// Quantity a histogram series bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Pressure,
    Speed,
}

impl Quantity {
    pub fn label(self) -> &'static str {
        match self {
            Quantity::Pressure => "pressure",
            Quantity::Speed => "speed",
        }
    }

    /// Binning range `(lo, hi)` for the 64 log bins.
    fn range(self) -> (f64, f64) {
        match self {
            Quantity::Pressure => (1e-3, 1e4),
            Quantity::Speed => (1e-5, 1e1),
        }
    }
}

pub const HISTOGRAM_BINS: usize = 64;

/// Tags every fluid particle (by fluid ordinal) with its population.
/// A particle is boundary-adjacent iff it has at least one boundary contact;
/// the two tags partition the fluid exactly.
pub fn classify_population(set: &ParticleSet, contacts: &Contacts) -> Vec<Population> {
    (0..set.fluid_count())
        .map(|k| {
            if contacts.has_boundary_contact(k) {
                Population::BoundaryAdjacent
            } else {
                Population::Bulk
            }
        })
        .collect()
}

/// Mean fluid-particle height above the reference plane `plane_z`.
pub fn average_fluid_height(set: &ParticleSet, plane_z: f64) -> Result<f64, SphError> {
    let fluid = set.fluid_indices();
    if fluid.is_empty() {
        return Err(SphError::EmptyPopulation { what: "fluid" });
    }
    let sum: f64 = fluid.iter().map(|&i| set.positions()[i].z - plane_z).sum();
    Ok(sum / fluid.len() as f64)
}

/// Mean velocity magnitude over the fluid particles tagged `which`.
/// `tags` must come from [`classify_population`] on the same set.
pub fn average_speed(
    set: &ParticleSet,
    tags: &[Population],
    which: Population,
) -> Result<f64, SphError> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (k, &i) in set.fluid_indices().iter().enumerate() {
        if tags[k] == which {
            sum += set.velocities[i].norm();
            count += 1;
        }
    }
    if count == 0 {
        return Err(SphError::EmptyPopulation { what: which.label() });
    }
    Ok(sum / count as f64)
}

/// Fraction of fluid particles strictly below the plane at `plane_z`.
/// An empty fluid counts as nothing having passed (0.0).
pub fn passage_ratio(set: &ParticleSet, plane_z: f64) -> f64 {
    let fluid = set.fluid_indices();
    if fluid.is_empty() {
        return 0.0;
    }
    let below = fluid
        .iter()
        .filter(|&&i| set.positions()[i].z < plane_z)
        .count();
    below as f64 / fluid.len() as f64
}

/// One recorded histogram frame: counts per bin at a point in time.
#[derive(Debug, Clone)]
pub struct HistogramFrame {
    pub time: f64,
    pub counts: Vec<u64>,
}

/// A time series of log-binned counts for one quantity over one population.
#[derive(Debug, Clone)]
pub struct HistogramSeries {
    pub quantity: Quantity,
    pub population: Population,
    /// 65 strictly increasing bin edges.
    pub edges: Vec<f64>,
    pub frames: Vec<HistogramFrame>,
}

impl HistogramSeries {
    pub fn new(quantity: Quantity, population: Population) -> Self {
        let (lo, hi) = quantity.range();
        let ratio = hi / lo;
        let edges = (0..=HISTOGRAM_BINS)
            .map(|k| lo * ratio.powf(k as f64 / HISTOGRAM_BINS as f64))
            .collect();
        HistogramSeries { quantity, population, edges, frames: Vec::new() }
    }

    fn bin_of(&self, value: f64) -> usize {
        let (lo, hi) = self.quantity.range();
        if !(value > lo) {
            return 0;
        }
        if value >= hi {
            return HISTOGRAM_BINS - 1;
        }
        let t = (value / lo).ln() / (hi / lo).ln();
        ((t * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)
    }

    /// Appends one frame binning the series quantity over its population.
    /// `tags` must come from [`classify_population`] on the same set.
    pub fn record_frame(&mut self, set: &ParticleSet, tags: &[Population], time: f64) {
        let mut counts = vec![0u64; HISTOGRAM_BINS];
        for (k, &i) in set.fluid_indices().iter().enumerate() {
            if tags[k] != self.population {
                continue;
            }
            let value = match self.quantity {
                Quantity::Pressure => set.fluid_pressure[i] + set.boundary_pressure[i],
                Quantity::Speed => set.velocities[i].norm(),
            };
            counts[self.bin_of(value)] += 1;
        }
        self.frames.push(HistogramFrame { time, counts });
    }
}

/// One row of the run-metrics time series.
#[derive(Debug, Clone)]
pub struct MetricsFrame {
    pub time: f64,
    pub avg_height: f64,
    pub avg_speed_bulk: f64,
    pub avg_speed_boundary: f64,
    pub iterations: u32,
    pub err_b: f64,
    pub err_f: f64,
}

/// The complete measured output of one run.
#[derive(Debug, Clone, Default)]
pub struct RunMetrics {
    pub frames: Vec<MetricsFrame>,
    /// Mean fluid height when the relaxation criterion fired, if the run
    /// had a relaxation phase.
    pub relaxed_height: Option<f64>,
    /// Final fraction of fluid below the obstacle plane, for runs that
    /// measure passage.
    pub passage: Option<f64>,
}

/// Writes `metrics.csv`-format rows. An empty series yields the header only.
pub fn write_metrics_csv(path: &Path, metrics: &RunMetrics) -> Result<(), SphError> {
    let fail = |e: std::io::Error| SphError::io(path.display().to_string(), e);
    let mut out = BufWriter::new(File::create(path).map_err(fail)?);
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(out, "t, avg_height, avg_speed_bulk, avg_speed_boundary, iterations, err_b, err_f")?;
        for f in &metrics.frames {
            writeln!(
                out,
                "{}, {}, {}, {}, {}, {}, {}",
                f.time,
                f.avg_height,
                f.avg_speed_bulk,
                f.avg_speed_boundary,
                f.iterations,
                f.err_b,
                f.err_f
            )?;
        }
        out.flush()
    };
    write(&mut out).map_err(fail)
}

/// Writes one histogram series as a `t, bin_0 … bin_63` matrix.
pub fn write_histogram_csv(path: &Path, series: &HistogramSeries) -> Result<(), SphError> {
    let fail = |e: std::io::Error| SphError::io(path.display().to_string(), e);
    let mut out = BufWriter::new(File::create(path).map_err(fail)?);
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        write!(out, "t")?;
        for k in 0..HISTOGRAM_BINS {
            write!(out, ", bin_{k}")?;
        }
        writeln!(out)?;
        for frame in &series.frames {
            write!(out, "{}", frame.time)?;
            for c in &frame.counts {
                write!(out, ", {c}")?;
            }
            writeln!(out)?;
        }
        out.flush()
    };
    write(&mut out).map_err(fail)
}

/// Writes a plain-text particle snapshot, one particle per line:
/// `phase x y z vx vy vz density pressure`.
pub fn write_snapshot(path: &Path, set: &ParticleSet) -> Result<(), SphError> {
    let fail = |e: std::io::Error| SphError::io(path.display().to_string(), e);
    let mut out = BufWriter::new(File::create(path).map_err(fail)?);
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(out, "phase x y z vx vy vz density pressure")?;
        for i in 0..set.len() {
            let x = set.positions()[i];
            let v = set.velocities[i];
            let (phase, pressure) = match set.phase(i) {
                Phase::Fluid => ("fluid", set.fluid_pressure[i] + set.boundary_pressure[i]),
                Phase::Boundary => ("boundary", set.boundary_pressure[i]),
            };
            writeln!(
                out,
                "{phase} {} {} {} {} {} {} {} {}",
                x.x, x.y, x.z, v.x, v.y, v.z, set.density[i], pressure
            )?;
        }
        out.flush()
    };
    write(&mut out).map_err(fail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelPair;
    use crate::neighbor::NeighborGrid;
    use crate::Vec3;

    const RADIUS: f64 = 0.05;

    fn contacts_for(set: &ParticleSet) -> Contacts {
        let kernel = KernelPair::for_particle_radius(RADIUS);
        let grid = NeighborGrid::build(set, kernel.support_radius()).unwrap();
        let mut contacts = Contacts::new();
        contacts.rebuild(set, &grid, &kernel).unwrap();
        contacts
    }

    fn two_zone_scene() -> ParticleSet {
        // One fluid particle touching a wall sample, one far from any wall.
        let mut set = ParticleSet::new();
        set.push_fluid(Vec3::new(0.0, 0.0, 0.1), Vec3::new(3.0, 4.0, 0.0), 1e-3);
        set.push_fluid(Vec3::new(0.0, 0.0, 5.0), Vec3::zeros(), 1e-3);
        set.push_boundary(Vec3::zeros(), 1e-3);
        set
    }

    #[test]
    fn height_is_the_mean_over_fluid_only() {
        let mut set = ParticleSet::new();
        set.push_fluid(Vec3::new(0.0, 0.0, 0.1), Vec3::zeros(), 1e-3);
        assert!((average_fluid_height(&set, 0.0).unwrap() - 0.1).abs() < 1e-15);

        set.push_fluid(Vec3::new(7.0, -2.0, 0.3), Vec3::zeros(), 1e-3);
        set.push_boundary(Vec3::new(0.0, 0.0, 99.0), 1e-3);
        assert!((average_fluid_height(&set, 0.0).unwrap() - 0.2).abs() < 1e-15);
        assert!((average_fluid_height(&set, 0.05).unwrap() - 0.15).abs() < 1e-15);
    }

    #[test]
    fn empty_fluid_population_is_an_error() {
        let mut set = ParticleSet::new();
        set.push_boundary(Vec3::zeros(), 1e-3);
        let err = average_fluid_height(&set, 0.0).unwrap_err();
        assert!(matches!(err, SphError::EmptyPopulation { what: "fluid" }));
    }

    #[test]
    fn classification_partitions_the_fluid() {
        let set = two_zone_scene();
        let contacts = contacts_for(&set);
        let tags = classify_population(&set, &contacts);
        assert_eq!(tags, vec![Population::BoundaryAdjacent, Population::Bulk]);
    }

    #[test]
    fn speed_averages_respect_the_population_filter() {
        let set = two_zone_scene();
        let contacts = contacts_for(&set);
        let tags = classify_population(&set, &contacts);
        let near = average_speed(&set, &tags, Population::BoundaryAdjacent).unwrap();
        assert!((near - 5.0).abs() < 1e-15, "got {near}");
        let bulk = average_speed(&set, &tags, Population::Bulk).unwrap();
        assert_eq!(bulk, 0.0);
    }

    #[test]
    fn empty_speed_population_is_an_error() {
        let mut set = ParticleSet::new();
        set.push_fluid(Vec3::new(0.0, 0.0, 5.0), Vec3::zeros(), 1e-3);
        let contacts = contacts_for(&set);
        let tags = classify_population(&set, &contacts);
        let err = average_speed(&set, &tags, Population::BoundaryAdjacent).unwrap_err();
        assert!(matches!(err, SphError::EmptyPopulation { what: "boundary" }));
    }

    #[test]
    fn metrics_are_invariant_under_horizontal_translation() {
        let build = |shift: f64| {
            let mut set = ParticleSet::new();
            set.push_fluid(Vec3::new(shift, 2.0 * shift, 0.1), Vec3::new(0.3, 0.0, 0.1), 1e-3);
            set.push_fluid(
                Vec3::new(shift + 0.08, 2.0 * shift, 0.12),
                Vec3::new(0.0, 0.2, 0.0),
                1e-3,
            );
            set.push_boundary(Vec3::new(shift, 2.0 * shift, 0.0), 1e-3);
            set
        };
        let (a, b) = (build(0.0), build(173.0));
        let (ca, cb) = (contacts_for(&a), contacts_for(&b));
        let (ta, tb) = (classify_population(&a, &ca), classify_population(&b, &cb));
        assert_eq!(ta, tb);
        assert_eq!(
            average_fluid_height(&a, 0.0).unwrap(),
            average_fluid_height(&b, 0.0).unwrap()
        );
        assert_eq!(
            average_speed(&a, &ta, Population::BoundaryAdjacent).unwrap(),
            average_speed(&b, &tb, Population::BoundaryAdjacent).unwrap()
        );
        let mut ha = HistogramSeries::new(Quantity::Speed, Population::BoundaryAdjacent);
        let mut hb = HistogramSeries::new(Quantity::Speed, Population::BoundaryAdjacent);
        ha.record_frame(&a, &ta, 0.0);
        hb.record_frame(&b, &tb, 0.0);
        assert_eq!(ha.frames[0].counts, hb.frames[0].counts);
    }

    #[test]
    fn histogram_frames_conserve_population_counts() {
        let set = two_zone_scene();
        let contacts = contacts_for(&set);
        let tags = classify_population(&set, &contacts);
        let mut series = HistogramSeries::new(Quantity::Speed, Population::Bulk);
        assert_eq!(series.edges.len(), HISTOGRAM_BINS + 1);
        assert!(series.edges.windows(2).all(|w| w[0] < w[1]));
        for frame in 0..3 {
            series.record_frame(&set, &tags, frame as f64 * 0.5);
            assert_eq!(series.frames.len(), frame + 1);
            let total: u64 = series.frames[frame].counts.iter().sum();
            assert_eq!(total, 1, "bulk population has exactly one particle");
        }
    }

    #[test]
    fn out_of_range_values_clamp_into_edge_bins() {
        let mut set = ParticleSet::new();
        set.push_fluid(Vec3::new(0.0, 0.0, 0.1), Vec3::zeros(), 1e-3); // speed 0
        set.push_fluid(Vec3::new(0.0, 0.0, 0.2), Vec3::new(1e4, 0.0, 0.0), 1e-3);
        set.push_boundary(Vec3::zeros(), 1e-3);
        let contacts = contacts_for(&set);
        let tags = classify_population(&set, &contacts);
        let mut series = HistogramSeries::new(Quantity::Speed, Population::BoundaryAdjacent);
        series.record_frame(&set, &tags, 0.0);
        assert_eq!(series.frames[0].counts[0], 1, "zero speed lands in the lowest bin");
        let mut bulk = HistogramSeries::new(Quantity::Speed, Population::Bulk);
        bulk.record_frame(&set, &tags, 0.0);
        assert_eq!(
            bulk.frames[0].counts[HISTOGRAM_BINS - 1],
            1,
            "huge speed lands in the highest bin"
        );
    }

    #[test]
    fn pressure_histogram_reads_the_total_fluid_pressure() {
        let mut set = ParticleSet::new();
        set.push_fluid(Vec3::new(0.0, 0.0, 0.1), Vec3::zeros(), 1e-3);
        set.push_boundary(Vec3::zeros(), 1e-3);
        set.fluid_pressure[0] = 30.0;
        set.boundary_pressure[0] = 70.0;
        let contacts = contacts_for(&set);
        let tags = classify_population(&set, &contacts);
        let mut series = HistogramSeries::new(Quantity::Pressure, Population::BoundaryAdjacent);
        series.record_frame(&set, &tags, 0.0);
        let expect = series.bin_of(100.0);
        assert_eq!(series.frames[0].counts[expect], 1);
        // 30 Pa and 100 Pa fall in different log bins, so a reader summing
        // the two fields is distinguishable from one reading just the first.
        assert_ne!(series.bin_of(30.0), expect);
    }

    #[test]
    fn passage_counts_strictly_below_the_plane() {
        let mut set = ParticleSet::new();
        set.push_fluid(Vec3::new(0.0, 0.0, 1.0), Vec3::zeros(), 1e-3);
        set.push_fluid(Vec3::new(0.0, 0.0, 0.0), Vec3::zeros(), 1e-3);
        set.push_fluid(Vec3::new(0.0, 0.0, -0.5), Vec3::zeros(), 1e-3);
        set.push_fluid(Vec3::new(0.0, 0.0, -2.0), Vec3::zeros(), 1e-3);
        assert!((passage_ratio(&set, 0.0) - 0.5).abs() < 1e-15, "on-plane is not below");
        assert_eq!(passage_ratio(&set, 2.0), 1.0);
        assert_eq!(passage_ratio(&set, -3.0), 0.0);
        assert_eq!(passage_ratio(&ParticleSet::new(), 0.0), 0.0);
    }

    #[test]
    fn empty_metrics_yield_a_header_only_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        write_metrics_csv(&path, &RunMetrics::default()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "t, avg_height, avg_speed_bulk, avg_speed_boundary, iterations, err_b, err_f\n"
        );
    }

    #[test]
    fn metrics_rows_match_the_frames() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let metrics = RunMetrics {
            frames: vec![MetricsFrame {
                time: 0.25,
                avg_height: 1.5,
                avg_speed_bulk: 0.125,
                avg_speed_boundary: 0.5,
                iterations: 7,
                err_b: 0.0,
                err_f: 1e-7,
            }],
            relaxed_height: None,
            passage: None,
        };
        write_metrics_csv(&path, &metrics).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        lines.next();
        assert_eq!(lines.next().unwrap(), "0.25, 1.5, 0.125, 0.5, 7, 0, 0.0000001");
    }

    #[test]
    fn histogram_csv_has_one_row_per_frame() {
        let set = two_zone_scene();
        let contacts = contacts_for(&set);
        let tags = classify_population(&set, &contacts);
        let mut series = HistogramSeries::new(Quantity::Pressure, Population::Bulk);
        series.record_frame(&set, &tags, 0.0);
        series.record_frame(&set, &tags, 0.1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hist_pressure_bulk.csv");
        write_histogram_csv(&path, &series).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3, "header + 2 frames");
        assert!(lines[0].starts_with("t, bin_0"));
        assert!(lines[0].ends_with("bin_63"));
        assert_eq!(lines[1].split(", ").count(), 65);
    }

    #[test]
    fn snapshot_round_trips_positions_exactly() {
        let mut set = ParticleSet::new();
        set.push_fluid(
            Vec3::new(0.1234567890123, -7.0 / 3.0, 1e-11),
            Vec3::new(0.25, 1.0 / 3.0, -2.0),
            1e-3,
        );
        set.push_boundary(Vec3::new(5.5, 0.0, -0.25), 1e-3);
        set.fluid_pressure[0] = 12.5;
        set.boundary_pressure[0] = 0.5;
        set.boundary_pressure[1] = 77.0;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snapshot_000001.txt");
        write_snapshot(&path, &set).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "phase x y z vx vy vz density pressure");
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            assert_eq!(fields.len(), 9);
            let expect_phase = match set.phase(i) {
                Phase::Fluid => "fluid",
                Phase::Boundary => "boundary",
            };
            assert_eq!(fields[0], expect_phase);
            for (axis, field) in fields[1..4].iter().enumerate() {
                let parsed: f64 = field.parse().unwrap();
                assert_eq!(parsed, set.positions()[i][axis], "axis {axis} of particle {i}");
            }
        }
        let last = text.lines().last().unwrap();
        assert!(last.ends_with(" 77"), "boundary row reports its wall pressure: {last}");
    }
}
