//! Legacy ASCII VTK structured grids, one file per block.
//!
//! The title line records the block label, reference origin, spacing and
//! stamp so that a file can be mapped back onto its reference lattice:
//!
//! ```text
//! mbdeform block=1 origin=0,0,0 h=0.05 stamp=l=3
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::deform::GridCoordinates;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::MultiBlockDomain;
use crate::Vec3;

/// Named node data written alongside the points.
pub type PointData<'a> = &'a [(&'a str, &'a ScalarField)];

/// Block labels in file names start at 1.
pub fn block_path(stem: &Path, block: usize) -> PathBuf {
    let mut name = stem
        .file_name()
        .map(|s| s.to_os_string())
        .unwrap_or_default();
    name.push(format!("_b{}.vtk", block + 1));
    stem.with_file_name(name)
}

/// Node index ranges (inclusive) of a sub-box of one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Window {
    lo: [usize; 3],
    hi: [usize; 3],
}

impl Window {
    fn dims(&self) -> [usize; 3] {
        std::array::from_fn(|a| self.hi[a] - self.lo[a] + 1)
    }

    fn nodes(self) -> impl Iterator<Item = [usize; 3]> {
        (self.lo[2]..=self.hi[2]).flat_map(move |k| {
            (self.lo[1]..=self.hi[1])
                .flat_map(move |j| (self.lo[0]..=self.hi[0]).map(move |i| [i, j, k]))
        })
    }
}

fn write_block(
    path: &Path,
    coords: &GridCoordinates,
    domain: &MultiBlockDomain,
    block: usize,
    window: Window,
    data: PointData<'_>,
) -> Result<()> {
    let b = domain.block(block);
    let o = b.origin();
    let dims = window.dims();
    let count = dims.iter().product::<usize>();
    let mut out = String::with_capacity(count * 80);
    let _ = writeln!(out, "# vtk DataFile Version 3.0");
    let _ = writeln!(
        out,
        "mbdeform block={} origin={},{},{} h={} stamp={}",
        block + 1,
        o[0],
        o[1],
        o[2],
        b.spacing(),
        coords.phase()
    );
    let _ = writeln!(out, "ASCII\nDATASET STRUCTURED_GRID");
    let _ = writeln!(out, "DIMENSIONS {} {} {}", dims[0], dims[1], dims[2]);
    let _ = writeln!(out, "POINTS {count} double");
    let positions = coords.positions().block(block);
    for ijk in window.nodes() {
        let p = positions[b.node_index(ijk)];
        let _ = writeln!(out, "{:.16e} {:.16e} {:.16e}", p[0], p[1], p[2]);
    }
    if !data.is_empty() {
        let _ = writeln!(out, "POINT_DATA {count}");
        for (name, field) in data {
            field.check_shape(domain)?;
            let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            let values = field.block(block);
            for ijk in window.nodes() {
                let _ = writeln!(out, "{:.16e}", values[b.node_index(ijk)]);
            }
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn full_window(domain: &MultiBlockDomain, block: usize) -> Window {
    Window {
        lo: [0; 3],
        hi: domain.block(block).cells(),
    }
}

/// Writes every block as `<stem>_b<label>.vtk` and returns the paths.
pub fn export_vtk(
    coords: &GridCoordinates,
    domain: &MultiBlockDomain,
    stem: &Path,
    data: PointData<'_>,
) -> Result<Vec<PathBuf>> {
    coords.positions().check_shape(domain)?;
    (0..domain.blocks().len())
        .map(|b| {
            let path = block_path(stem, b);
            write_block(&path, coords, domain, b, full_window(domain, b), data)?;
            Ok(path)
        })
        .collect()
}

/// Index of the lattice plane whose reference `z` is nearest `z0`.
pub fn nearest_plane(domain: &MultiBlockDomain, block: usize, z0: f64) -> usize {
    let b = domain.block(block);
    let s = ((z0 - b.origin()[2]) / b.spacing()).round();
    s.clamp(0.0, b.cells()[2] as f64) as usize
}

/// Writes the reference `k`-plane nearest `z0` of every block as a 2D grid.
pub fn export_slice(
    coords: &GridCoordinates,
    domain: &MultiBlockDomain,
    z0: f64,
    stem: &Path,
    data: PointData<'_>,
) -> Result<Vec<PathBuf>> {
    if !(0.0..=1.0).contains(&z0) {
        return Err(Error::OutOfRange {
            name: "z0",
            value: z0,
            constraint: "z0 in [0, 1]",
        });
    }
    coords.positions().check_shape(domain)?;
    (0..domain.blocks().len())
        .map(|b| {
            let k = nearest_plane(domain, b, z0);
            let mut w = full_window(domain, b);
            w.lo[2] = k;
            w.hi[2] = k;
            let path = block_path(stem, b);
            write_block(&path, coords, domain, b, w, data)?;
            Ok(path)
        })
        .collect()
}

/// Writes the nodes with reference `z ≤ z0` of every block, a view into the
/// grid with the front removed.
pub fn export_cutaway(
    coords: &GridCoordinates,
    domain: &MultiBlockDomain,
    z0: f64,
    stem: &Path,
    data: PointData<'_>,
) -> Result<Vec<PathBuf>> {
    coords.positions().check_shape(domain)?;
    (0..domain.blocks().len())
        .map(|b| {
            let mut w = full_window(domain, b);
            w.hi[2] = nearest_plane(domain, b, z0).max(1);
            let path = block_path(stem, b);
            write_block(&path, coords, domain, b, w, data)?;
            Ok(path)
        })
        .collect()
}

/// Parsed contents of one structured-grid file.
#[derive(Debug, Clone, PartialEq)]
pub struct VtkGrid {
    pub title: String,
    pub dims: [usize; 3],
    pub points: Vec<Vec3>,
    pub scalars: Vec<(String, Vec<f64>)>,
}

/// Metadata recovered from a title line written by this module.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMeta {
    /// Zero-based block index.
    pub block: usize,
    pub origin: Vec3,
    pub spacing: f64,
    pub stamp: String,
}

impl VtkGrid {
    pub fn meta(&self) -> Option<BlockMeta> {
        let rest = self.title.strip_prefix("mbdeform ")?;
        let mut block = None;
        let mut origin = None;
        let mut spacing = None;
        let mut stamp = None;
        for part in rest.split(' ') {
            let (key, value) = part.split_once('=')?;
            match key {
                "block" => {
                    block = value
                        .parse::<usize>()
                        .ok()
                        .filter(|&b| b >= 1)
                        .map(|b| b - 1)
                }
                "origin" => {
                    let v: Vec<f64> = value
                        .split(',')
                        .map(str::parse)
                        .collect::<std::result::Result<_, _>>()
                        .ok()?;
                    origin = <[f64; 3]>::try_from(v).ok();
                }
                "h" => spacing = value.parse().ok(),
                "stamp" => stamp = Some(value.to_string()),
                _ => {}
            }
        }
        Some(BlockMeta {
            block: block?,
            origin: origin?,
            spacing: spacing?,
            stamp: stamp?,
        })
    }

    pub fn scalar(&self, name: &str) -> Option<&[f64]> {
        self.scalars
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }
}

pub fn read_vtk(path: &Path) -> Result<VtkGrid> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_vtk(&text).map_err(|reason| Error::Vtk {
        path: path.to_path_buf(),
        reason,
    })
}

fn parse_vtk(text: &str) -> std::result::Result<VtkGrid, String> {
    let mut lines = text.lines();
    let mut next = |what: &str| lines.next().ok_or_else(|| format!("missing {what}"));
    if !next("header")?.starts_with("# vtk DataFile") {
        return Err("not a legacy VTK file".into());
    }
    let title = next("title")?.to_string();
    if next("format")?.trim() != "ASCII" {
        return Err("only ASCII files are supported".into());
    }
    if next("dataset")?.trim() != "DATASET STRUCTURED_GRID" {
        return Err("expected DATASET STRUCTURED_GRID".into());
    }
    let dims_line = next("DIMENSIONS")?;
    let dims: Vec<usize> = dims_line
        .strip_prefix("DIMENSIONS ")
        .ok_or("expected DIMENSIONS")?
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| format!("bad dimension {s:?}")))
        .collect::<std::result::Result<_, _>>()?;
    let dims: [usize; 3] = dims
        .try_into()
        .map_err(|_| "DIMENSIONS needs 3 values".to_string())?;
    let count: usize = next("POINTS")?
        .strip_prefix("POINTS ")
        .and_then(|s| s.split_whitespace().next())
        .and_then(|s| s.parse().ok())
        .ok_or("expected POINTS <n> double")?;
    if count != dims.iter().product::<usize>() {
        return Err(format!("POINTS {count} does not match DIMENSIONS {dims:?}"));
    }
    let number = |s: &str| s.parse::<f64>().map_err(|_| format!("bad number {s:?}"));
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let line = next("point")?;
        let v: Vec<f64> = line
            .split_whitespace()
            .map(number)
            .collect::<std::result::Result<_, _>>()?;
        points.push(<[f64; 3]>::try_from(v).map_err(|_| format!("bad point line {line:?}"))?);
    }
    let mut scalars = Vec::new();
    while let Ok(line) = next("data") {
        let line = line.trim();
        if line.is_empty() || line.starts_with("POINT_DATA") {
            continue;
        }
        let name = line
            .strip_prefix("SCALARS ")
            .and_then(|s| s.split_whitespace().next())
            .ok_or_else(|| format!("unexpected line {line:?}"))?
            .to_string();
        if !next("LOOKUP_TABLE")?.starts_with("LOOKUP_TABLE") {
            return Err("expected LOOKUP_TABLE".into());
        }
        let values = (0..count)
            .map(|_| next("scalar value").and_then(|s| number(s.trim())))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        scalars.push((name, values));
    }
    Ok(VtkGrid {
        title,
        dims,
        points,
        scalars,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::VectorField;
    use crate::monitor::Phase;

    #[test]
    fn identity_n2_block() {
        let dir = tempfile::tempdir().unwrap();
        let d = MultiBlockDomain::single_block(2).unwrap();
        let g = GridCoordinates::reference(&d);
        let files = export_vtk(&g, &d, &dir.path().join("grid"), &[]).unwrap();
        assert_eq!(files, vec![dir.path().join("grid_b1.vtk")]);
        let v = read_vtk(&files[0]).unwrap();
        assert_eq!(v.dims, [3, 3, 3]);
        assert_eq!(v.points.len(), 27);
        assert_eq!(v.points[5], [1.0, 0.5, 0.0]);
        let m = v.meta().unwrap();
        assert_eq!(
            (m.block, m.origin, m.spacing, m.stamp.as_str()),
            (0, [0.0; 3], 0.5, "t=0")
        );
    }

    #[test]
    fn round_trip_full_precision() {
        let dir = tempfile::tempdir().unwrap();
        let d = MultiBlockDomain::backstep(3).unwrap();
        let pos = VectorField::from_fn(&d, |u, p| {
            [
                p[0] + 1e-3 * (u as f64).sin(),
                p[1] / 3.0,
                p[2] * 0.1f64.exp(),
            ]
        });
        let g = GridCoordinates::new(&d, pos, Phase::Step2 { l: 7.0 }).unwrap();
        let omega = ScalarField::from_fn(&d, |u, _| (u as f64).sqrt() * 1e-7);
        let files = export_vtk(&g, &d, &dir.path().join("s"), &[("omega", &omega)]).unwrap();
        for (b, path) in files.iter().enumerate() {
            let v = read_vtk(path).unwrap();
            assert_eq!(v.points, g.positions().block(b));
            assert_eq!(v.scalar("omega").unwrap(), omega.block(b));
            assert_eq!(v.meta().unwrap().stamp, "l=7");
        }
    }

    #[test]
    fn slice_planes() {
        let dir = tempfile::tempdir().unwrap();
        let d = MultiBlockDomain::backstep(20).unwrap();
        assert_eq!(nearest_plane(&d, 0, 0.5), 10);
        assert_eq!(nearest_plane(&d, 1, 0.0), 0);
        let g = GridCoordinates::reference(&d);
        let files = export_slice(&g, &d, 0.5, &dir.path().join("slice"), &[]).unwrap();
        let v = read_vtk(&files[0]).unwrap();
        assert_eq!(v.dims, [21, 41, 1]);
        assert!(v.points.iter().all(|p| p[2] == 0.5));
        assert_eq!(v.points[22], [0.05, 0.05, 0.5]);
        assert!(export_slice(&g, &d, 1.5, &dir.path().join("x"), &[]).is_err());
    }

    #[test]
    fn cutaway_keeps_back_half() {
        let dir = tempfile::tempdir().unwrap();
        let d = MultiBlockDomain::backstep(4).unwrap();
        let g = GridCoordinates::reference(&d);
        let files = export_cutaway(&g, &d, 0.5, &dir.path().join("cut"), &[]).unwrap();
        let v = read_vtk(&files[1]).unwrap();
        assert_eq!(v.dims, [5, 5, 3]);
        assert!(v.points.iter().all(|p| p[2] <= 0.5));
    }

    #[test]
    fn malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.vtk");
        std::fs::write(&path, "# vtk DataFile Version 3.0\nx\nASCII\nDATASET STRUCTURED_GRID\nDIMENSIONS 2 1 1\nPOINTS 2 double\n0 0 0\n").unwrap();
        let err = read_vtk(&path).unwrap_err();
        assert!(matches!(err, Error::Vtk { .. }), "{err}");
        assert!(matches!(
            read_vtk(&dir.path().join("missing.vtk")),
            Err(Error::Io { .. })
        ));
    }
}
