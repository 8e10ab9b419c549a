//! The `mbdeform` command line.
//!
//! ```text
//! mbdeform run <config>             write snapshots and report.csv
//! mbdeform verify <config>          manufactured solution, identity, folding
//! mbdeform export <dir> [--z Z]     re-emit z-slices from snapshot files
//! ```
//!
//! Snapshot `i` is written as `snap_<iii>_b<label>.vtk` with `monitor` and
//! `omega` point data, and `slice_<iii>_b<label>.vtk` for the plane nearest
//! `output.slice_z`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{load_config, RunConfig};
use crate::deform::{Deformer, GridCoordinates};
use crate::diagnostics::{write_reports, GridReport};
use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::MultiBlockDomain;
use crate::monitor::Phase;
use crate::verify::run_checks;
use crate::vtk::{export_slice, export_vtk, read_vtk, VtkGrid};

#[derive(Debug, Parser)]
#[command(
    name = "mbdeform",
    version,
    about = "Multi-block moving-grid deformation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario, writing VTK snapshots and a CSV report.
    Run {
        config: PathBuf,
        /// Overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the self-checks for a configuration.
    Verify { config: PathBuf },
    /// Re-emit z-slices from the snapshot files in a directory.
    Export {
        dir: PathBuf,
        /// Reference z of the slice plane.
        #[arg(long, default_value_t = 0.5)]
        z: f64,
        /// Destination directory (defaults to the snapshot directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Run { config, out } => load_config(&config).and_then(|mut c| {
            if let Some(out) = out {
                c.output.dir = out;
            }
            run(&c).map(|_| ())
        }),
        Command::Verify { config } => load_config(&config).and_then(|c| {
            let checks = run_checks(&c);
            for check in &checks {
                println!("{check}");
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed == 0 {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{failed} of {} checks failed",
                    checks.len()
                )))
            }
        }),
        Command::Export { dir, z, out } => {
            export(&dir, z, out.as_deref().unwrap_or(&dir)).map(|n| {
                println!("wrote {n} slice sets");
            })
        }
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("mbdeform: error: {e}");
            1
        }
    }
}

/// Executes the configured run. Reports for every emitted snapshot are
/// written even when the run aborts; the error is returned afterwards.
pub fn run(config: &RunConfig) -> Result<Vec<GridReport>> {
    let dir = &config.output.dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let deformer = Deformer::new(
        config.domain()?,
        config.monitor.clone(),
        config.solver,
        config.deform,
    )?;
    let (l0, l1) = config.monitor.schedule.l_range();
    let total = deformer.config().step1_steps()? + (l1 - l0).round() as usize + 1;
    let cadence = config.output.cadence;

    let mut reports = Vec::with_capacity(total);
    let mut index = 0usize;
    let result = deformer.run(|snap| {
        let d = deformer.domain();
        let report = GridReport::compute(&snap.coords, &snap.monitor, d)?;
        let sweeps: usize = snap.solves.iter().map(|s| s.iterations).sum();
        println!(
            "{:>3} {:<8} sweeps={:<6} minJ={:.4} Hrsd={:.4} vol={:.12}",
            index, report.stamp, sweeps, report.min_jacobian, report.h_rsd, report.total_volume
        );
        if index.is_multiple_of(cadence) || index + 1 == total {
            let mut data: Vec<(&str, &ScalarField)> = vec![("monitor", snap.monitor.values())];
            if let Some(omega) = &snap.omega {
                data.push(("omega", omega));
            }
            export_vtk(
                &snap.coords,
                d,
                &dir.join(format!("snap_{index:03}")),
                &data,
            )?;
            export_slice(
                &snap.coords,
                d,
                config.output.slice_z,
                &dir.join(format!("slice_{index:03}")),
                &data,
            )?;
        }
        reports.push(report);
        index += 1;
        Ok(())
    });
    let path = dir.join("report.csv");
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_reports(std::io::BufWriter::new(file), &reports)?;
    result?;
    Ok(reports)
}

fn parse_phase(stamp: &str) -> Option<Phase> {
    let (key, value) = stamp.split_once('=')?;
    let value: f64 = value.parse().ok()?;
    match key {
        "t" => Some(Phase::Step1 { t: value }),
        "l" => Some(Phase::Step2 { l: value }),
        _ => None,
    }
}

type LoadedSnapshot = (
    MultiBlockDomain,
    GridCoordinates,
    Vec<(String, ScalarField)>,
);

/// Rebuilds a snapshot from its per-block files.
fn load_snapshot(files: &[PathBuf]) -> Result<LoadedSnapshot> {
    let bad = |path: &Path, reason: &str| Error::Vtk {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut grids: Vec<(usize, VtkGrid, &PathBuf)> = Vec::new();
    for path in files {
        let grid = read_vtk(path)?;
        let meta = grid
            .meta()
            .ok_or_else(|| bad(path, "title carries no block metadata"))?;
        grids.push((meta.block, grid, path));
    }
    grids.sort_by_key(|(b, _, _)| *b);
    let (_, first, first_path) = &grids[0];
    let meta = first.meta().expect("checked above");
    let n = (1.0 / meta.spacing).round() as usize;
    let domain = match grids.len() {
        1 => MultiBlockDomain::single_block(n)?,
        2 => MultiBlockDomain::backstep(n)?,
        _ => return Err(bad(first_path, "unknown block layout")),
    };
    for (b, grid, path) in &grids {
        let block = domain.block(*b);
        if grid.dims != block.nodes() || grid.meta().map(|m| m.origin) != Some(block.origin()) {
            return Err(bad(path, "block does not match a known domain layout"));
        }
    }
    let phase = parse_phase(&meta.stamp).ok_or_else(|| bad(first_path, "unreadable stamp"))?;
    let positions = VectorField::from_blocks(
        &domain,
        grids.iter().map(|(_, g, _)| g.points.clone()).collect(),
    )?;
    let coords = GridCoordinates::new(&domain, positions, phase)?;
    let mut data = Vec::new();
    for (name, _) in &first.scalars {
        let blocks: Option<Vec<Vec<f64>>> = grids
            .iter()
            .map(|(_, g, _)| g.scalar(name).map(<[f64]>::to_vec))
            .collect();
        if let Some(blocks) = blocks {
            data.push((name.clone(), ScalarField::from_blocks(&domain, blocks)?));
        }
    }
    Ok((domain, coords, data))
}

/// Writes `slice_<iii>` files for every `snap_<iii>` set in `dir`.
pub fn export(dir: &Path, z0: f64, out: &Path) -> Result<usize> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut sets: std::collections::BTreeMap<String, Vec<PathBuf>> = Default::default();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|s| s.to_str()) else {
            continue;
        };
        let Some(stem) = name
            .strip_suffix(".vtk")
            .and_then(|s| s.rsplit_once("_b"))
            .map(|(s, _)| s)
        else {
            continue;
        };
        if let Some(index) = stem.strip_prefix("snap_") {
            sets.entry(index.to_string())
                .or_default()
                .push(path.clone());
        }
    }
    if sets.is_empty() {
        return Err(Error::Config(format!(
            "{}: no snapshot files",
            dir.display()
        )));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for (index, files) in &sets {
        let (domain, coords, data) = load_snapshot(files)?;
        let data: Vec<(&str, &ScalarField)> = data.iter().map(|(n, f)| (n.as_str(), f)).collect();
        export_slice(
            &coords,
            &domain,
            z0,
            &out.join(format!("slice_{index}")),
            &data,
        )?;
    }
    Ok(sets.len())
}
