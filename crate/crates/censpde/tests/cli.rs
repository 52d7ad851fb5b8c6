use std::path::Path;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn censpde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_censpde")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn error_line(o: &Output) -> String {
    stderr(o).lines().rfind(|l| l.starts_with("error ")).unwrap_or_default().to_string()
}

/// Smooth surface plus noise on [0, 1]^2 with values below 0.5 censored.
fn write_dataset(path: &Path, n: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut s = String::from("lon,lat,value,censored,limit\n");
    for _ in 0..n {
        let (x, y): (f64, f64) = (rng.random(), rng.random());
        let v = 1.0 + (3.0 * x).sin() + y * y + 0.3 * rng.random::<f64>();
        if v < 1.5 {
            s.push_str(&format!("{x},{y},,1,1.5\n"));
        } else {
            s.push_str(&format!("{x},{y},{v},0,\n"));
        }
    }
    std::fs::write(path, s).unwrap();
}

fn fit_short(dir: &Path, input: &Path, out: &str) -> Output {
    let out = dir.join(out);
    censpde(&[
        "--seed",
        "5",
        "fit",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--n-iter",
        "200",
        "--burn-in",
        "100",
        "--thin",
        "2",
        "--chains",
        "2",
    ])
}

#[test]
fn fit_is_byte_deterministic_and_predicts_given_locations() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("data.csv");
    write_dataset(&input, 120);
    for name in ["a", "b"] {
        let o = fit_short(tmp.path(), &input, name);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for file in ["summary.csv", "samples.csv", "zstar.csv", "rhat.csv", "mesh.txt"] {
        let a = std::fs::read(tmp.path().join("a").join(file)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(file)).unwrap();
        assert!(a == b, "{file} differs between identical runs");
    }

    let locs = tmp.path().join("locs.csv");
    let pts = [(0.5, 0.5), (0.2, 0.3), (0.8, 0.1), (0.4, 0.9), (0.6, 0.6)];
    let body: String = pts.iter().map(|(x, y)| format!("{x},{y}\n")).collect();
    std::fs::write(&locs, format!("lon,lat\n{body}")).unwrap();
    let out = tmp.path().join("pred.csv");
    let o = censpde(&[
        "--seed",
        "2",
        "predict",
        "--fit-dir",
        tmp.path().join("a").to_str().unwrap(),
        "--locations",
        locs.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 5);
    for (row, (x, y)) in rows.iter().zip(pts) {
        assert_eq!(row[0].parse::<f64>().unwrap(), x);
        assert_eq!(row[1].parse::<f64>().unwrap(), y);
        let q: Vec<f64> = (2..7).map(|c| row[c].parse().unwrap()).collect();
        assert!(q[1] > 0.0 && q[2] <= q[3] && q[3] <= q[4], "{row:?}");
    }
    assert!(tmp.path().join("pred_report.toml").exists());

    let o = censpde(&[
        "predict",
        "--fit-dir",
        tmp.path().join("a").to_str().unwrap(),
        "--bbox",
        "0.2,0.2,0.8,0.8",
        "--resolution",
        "0.2",
        "--out",
        tmp.path().join("grid.csv").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let n = csv::Reader::from_path(tmp.path().join("grid.csv")).unwrap().records().count();
    assert_eq!(n, 16);
}

#[test]
fn missing_input_is_an_io_error() {
    let o = censpde(&["fit", "--input", "/nonexistent/data.csv"]);
    assert_eq!(o.status.code(), Some(3));
    let line = error_line(&o);
    assert!(line.starts_with("error kind=io path=\"/nonexistent/data.csv\""), "{line}");
}

#[test]
fn bad_rows_report_line_numbers() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("lon,lat,value,censored,limit\n0,0,1,0,\n0.5,0.5,,1,\n", 3, "censored"),
        ("lon,lat,value,censored,limit\n0,0,1,0,\n1,1,2,0,\n0.5,NaN,1,0,\n", 4, ""),
        ("lon,lat,value,censored,limit\n0,0,abc,0,\n", 2, ""),
        ("lon,lat,value,censored,limit\n0,0,1,maybe,\n", 2, ""),
        ("lon,lat,level\n0,0,1\n", 1, "value"),
    ];
    for (i, (text, line, needle)) in cases.iter().enumerate() {
        let path = tmp.path().join(format!("bad{i}.csv"));
        std::fs::write(&path, text).unwrap();
        let o = censpde(&["variogram", "--input", path.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(4), "case {i}: {}", stderr(&o));
        let err = error_line(&o);
        assert!(err.starts_with("error kind=parse"), "{err}");
        assert!(err.contains(&format!("line={line} ")), "case {i}: {err}");
        assert!(err.contains(needle), "case {i}: {err}");
    }
}

#[test]
fn usage_errors_are_machine_parseable() {
    let o = censpde(&["fit", "--n-iter", "many"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(error_line(&o).starts_with("error kind=usage message="));
    let o = censpde(&["predict", "--bbox", "1,2,3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(censpde(&["--help"]).status.success());
}

#[test]
fn invalid_config_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "[mcmc]\nn_iterations = 10\n").unwrap();
    let o = censpde(&["--config", cfg.to_str().unwrap(), "mesh"]);
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
    assert!(error_line(&o).starts_with("error kind=config"));
}

#[test]
fn mesh_command_writes_mesh_and_fem() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("data.csv");
    write_dataset(&input, 60);
    let mesh = tmp.path().join("mesh.txt");
    let fem = tmp.path().join("fem");
    let o = censpde(&[
        "mesh",
        "--input",
        input.to_str().unwrap(),
        "--out",
        mesh.to_str().unwrap(),
        "--fem-dir",
        fem.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = censpde::meshio::read_mesh(&mesh).unwrap();
    for name in ["D.mtx", "G1.mtx", "G2.mtx", "A.mtx"] {
        let text = std::fs::read_to_string(fem.join(name)).unwrap();
        assert!(text.starts_with("%%MatrixMarket matrix coordinate real"), "{name}");
    }
    let a = std::fs::read_to_string(fem.join("A.mtx")).unwrap();
    let dims = a.lines().find(|l| !l.starts_with('%')).unwrap();
    assert!(dims.starts_with(&format!("60 {} ", m.num_nodes())), "{dims}");
}
