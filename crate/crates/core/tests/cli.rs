use std::path::Path;
use std::process::Command;

use mbdeform::config::parse_config;
use mbdeform::deform::Deformer;
use mbdeform::vtk::{export_slice, export_vtk, read_vtk};

fn mbdeform(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mbdeform"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn run_writes_every_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), r#"{"n": 4, "output.dir": "out"}"#);
    let out = mbdeform(&["run", &config], tmp.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let names = listing(&tmp.path().join("out"));
    let snaps = names.iter().filter(|n| n.starts_with("snap_")).count();
    let slices = names.iter().filter(|n| n.starts_with("slice_")).count();
    assert_eq!((snaps, slices), (102, 102));
    let report = std::fs::read_to_string(tmp.path().join("out/report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(
        lines.next().unwrap(),
        "stamp,minJ,maxJ,minVol,maxVol,Hmean,Hrsd,ifaceMismatch,totalVol"
    );
    assert_eq!(lines.count(), 51);
    let last = read_vtk(&tmp.path().join("out/snap_050_b2.vtk")).unwrap();
    assert_eq!(last.meta().unwrap().stamp, "l=40");
    assert!(last.scalar("monitor").is_some() && last.scalar("omega").is_some());
}

#[test]
fn cadence_keeps_the_last_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        r#"{"n": 3, "output.cadence": 7, "output.dir": "o"}"#,
    );
    assert!(mbdeform(&["run", &config], tmp.path()).status.success());
    let names = listing(&tmp.path().join("o"));
    let indices: Vec<&str> = names
        .iter()
        .filter_map(|n| {
            n.strip_prefix("snap_")
                .and_then(|n| n.strip_suffix("_b1.vtk"))
        })
        .collect();
    assert_eq!(
        indices,
        ["000", "007", "014", "021", "028", "035", "042", "049", "050"]
    );
}

#[test]
fn runs_are_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), r#"{"n": 4, "output.cadence": 5}"#);
    let cfg = tmp.path().to_string_lossy().into_owned();
    for out in ["a", "b"] {
        let status = mbdeform(
            &["run", &config, "--out", &format!("{cfg}/{out}")],
            tmp.path(),
        )
        .status;
        assert!(status.success());
    }
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let names = listing(&a);
    assert_eq!(names, listing(&b));
    for name in names {
        assert_eq!(
            std::fs::read(a.join(&name)).unwrap(),
            std::fs::read(b.join(&name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn solver_failure_exits_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), r#"{"n": 4, "sor.max_iters": 1}"#);
    let out = mbdeform(&["run", &config], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("did not converge"), "{err}");
}

#[test]
fn bad_config_names_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), r#"{"sor.lambda": 2.5}"#);
    let out = mbdeform(&["verify", &config], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sor.lambda"));
    let out = mbdeform(&["run", "missing.json"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        &["frobnicate"][..],
        &["run"],
        &["run", "a.json", "--bogus"],
        &[],
    ] {
        let out = mbdeform(args, tmp.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    }
}

#[test]
fn verify_small_config() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), r#"{"n": 5}"#);
    let out = mbdeform(&["verify", &config], tmp.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines.iter().all(|l| l.starts_with("PASS")), "{stdout}");
}

#[test]
fn export_re_emits_slices() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        r#"{"n": 4, "output.cadence": 25, "output.dir": "s"}"#,
    );
    assert!(mbdeform(&["run", &config], tmp.path()).status.success());
    let out = mbdeform(&["export", "s", "--z", "0.5", "--out", "again"], tmp.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for idx in ["000", "025", "050"] {
        for b in [1, 2] {
            let name = format!("slice_{idx}_b{b}.vtk");
            let original = std::fs::read(tmp.path().join("s").join(&name)).unwrap();
            let again = std::fs::read(tmp.path().join("again").join(&name)).unwrap();
            assert_eq!(original, again, "{name}");
        }
    }
    let out = mbdeform(&["export", "again"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn slice_planes() {
    let tmp = tempfile::tempdir().unwrap();
    let c = parse_config(r#"{"n": 20}"#).unwrap();
    let d = c.domain().unwrap();
    let g = mbdeform::deform::GridCoordinates::reference(&d);
    for (z0, k) in [(0.5, 10), (0.0, 0), (0.52, 10), (1.0, 20)] {
        let files = export_slice(&g, &d, z0, &tmp.path().join("s"), &[]).unwrap();
        let v = read_vtk(&files[0]).unwrap();
        assert_eq!(v.dims, [21, 41, 1]);
        assert!(v.points.iter().all(|p| p[2] == k as f64 * 0.05));
        // uniform 2D lattice
        assert_eq!(v.points[22], [0.05, 0.05, k as f64 * 0.05]);
    }
    assert!(export_slice(&g, &d, 1.2, &tmp.path().join("s"), &[]).is_err());
}

/// The adapted grid at the start of phase two, written per block: the two
/// files agree on the shared plane.
#[test]
fn interface_planes_identical_at_l0() {
    let tmp = tempfile::tempdir().unwrap();
    let c = parse_config("").unwrap();
    let dfm = Deformer::new(c.domain().unwrap(), c.monitor.clone(), c.solver, c.deform).unwrap();
    let end = dfm.run_step1(|_| Ok(())).unwrap();
    let d = dfm.domain();
    let files = export_vtk(&end, d, &tmp.path().join("l0"), &[]).unwrap();
    let (a, b) = (read_vtk(&files[0]).unwrap(), read_vtk(&files[1]).unwrap());
    assert_eq!(a.dims, [21, 41, 21]);
    assert_eq!(b.dims, [21, 21, 21]);
    let mut moved = 0;
    for k in 0..21 {
        for j in 0..21 {
            let pa = a.points[20 + 21 * (j + 41 * k)];
            let pb = b.points[21 * (j + 21 * k)];
            assert_eq!(pa, pb, "j={j} k={k}");
            let reference = [1.0, j as f64 * 0.05, k as f64 * 0.05];
            if (0..3).any(|i| (pa[i] - reference[i]).abs() > 1e-6) {
                moved += 1;
            }
        }
    }
    assert!(moved > 0);
}
