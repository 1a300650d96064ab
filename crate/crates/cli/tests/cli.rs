use std::path::Path;
use std::process::{Command, Output};

fn fluxfem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fluxfem"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn flux_study_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("flux.csv");
    let o = fluxfem(&[
        "flux",
        "--omega-degrees",
        "135",
        "--levels",
        "2..3",
        "--output",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "level,h,n_elem,n_dof,err_classical,eoc_classical,err_variational,eoc_variational"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("2,0.25,"));
    // First row has no EOC, the second has both.
    assert_eq!(rows[0].split(',').nth(5), Some(""));
    assert!(rows[1].split(',').all(|f| !f.is_empty()));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("| level"), "{stdout}");
}

#[test]
fn control_study_writes_markdown_and_parallel_levels_agree() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq.csv");
    let par = dir.path().join("par.csv");
    let md = dir.path().join("control.md");
    let base = [
        "control",
        "--omega-degrees",
        "270",
        "--levels",
        "2..=3",
        "--alpha",
        "0.5",
        "--quiet",
    ];
    for (out, extra) in [(&seq, None), (&par, Some("--parallel-levels"))] {
        let mut args = base.to_vec();
        args.extend(["--output", path(out)]);
        args.extend(extra);
        let o = fluxfem(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(o.stdout.is_empty());
    }
    let a = std::fs::read_to_string(&seq).unwrap();
    assert!(a.starts_with("level,h,n_elem,n_dof_total,n_dof_boundary,err_u,eoc_u,err_y,eoc_y,gmres_iters\n"));
    assert_eq!(a, std::fs::read_to_string(&par).unwrap());

    let mut args = base.to_vec();
    args.extend(["--output", path(&md)]);
    assert!(fluxfem(&args).status.success());
    let text = std::fs::read_to_string(&md).unwrap();
    assert!(text.contains("| level") && text.contains("eoc_u"), "{text}");
}

#[test]
fn dumps_are_written_per_level() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let mesh = dir.path().join("mesh.txt");
    let matrix = dir.path().join("a.txt");
    let o = fluxfem(&[
        "flux",
        "--omega-degrees",
        "90",
        "--levels",
        "1..2",
        "--output",
        path(&out),
        "--dump-mesh",
        path(&mesh),
        "--dump-matrix",
        path(&matrix),
        "--quiet",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for level in [1, 2] {
        let m = std::fs::read_to_string(dir.path().join(format!("mesh.L{level}.txt"))).unwrap();
        assert!(m.lines().any(|l| l.starts_with("v ")) && m.lines().any(|l| l.starts_with("t ")));
        let a = std::fs::read_to_string(dir.path().join(format!("a.L{level}.txt"))).unwrap();
        assert!(a.lines().all(|l| l.split_whitespace().count() == 3));
    }
}

#[test]
fn memory_guard_failure_gives_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = fluxfem(&[
        "flux",
        "--omega-degrees",
        "270",
        "--levels",
        "1..4",
        "--memory-guard",
        "200",
        "--output",
        path(&out),
        "--quiet",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("failed"));
    let csv = std::fs::read_to_string(&out).unwrap();
    // Every requested level still appears in the table.
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn invalid_arguments_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = fluxfem(&[
        "flux",
        "--omega-degrees",
        "400",
        "--levels",
        "1..2",
        "--output",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = fluxfem(&[
        "control",
        "--omega-degrees",
        "90",
        "--levels",
        "1",
        "--alpha",
        "0",
        "--output",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = fluxfem(&[
        "flux",
        "--omega-degrees",
        "90",
        "--levels",
        "3..1",
        "--output",
        path(&out),
    ]);
    assert!(!o.status.success());
}
