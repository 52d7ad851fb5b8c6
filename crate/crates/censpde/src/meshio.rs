//! Plain-text mesh files and Matrix Market dumps of the FEM matrices.
//!
//! Mesh layout:
//!
//! ```text
//! nodes <N>
//! <index> <x> <y> <boundary 0|1>
//! triangles <M>
//! <index> <a> <b> <c>
//! hull <H>
//! <index> <x> <y>
//! ```
//!
//! Lines starting with `#` are comments.

use std::fmt::Write as _;
use std::path::Path;

use censpde_core::fem::FemMatrices;
use censpde_core::mesh::{Mesh, Point};
use censpde_core::sparse::CsrMatrix;

use crate::error::{CliError, Result};
use crate::io::{read_to_string, write_atomic, write_string};

pub fn mesh_to_string(mesh: &Mesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "nodes {}", mesh.num_nodes());
    for (i, (p, b)) in mesh.nodes().iter().zip(mesh.boundary_flags()).enumerate() {
        let _ = writeln!(s, "{i} {} {} {}", p[0], p[1], u8::from(*b));
    }
    let _ = writeln!(s, "triangles {}", mesh.num_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let _ = writeln!(s, "{t} {} {} {}", tri[0], tri[1], tri[2]);
    }
    let _ = writeln!(s, "hull {}", mesh.data_hull().len());
    for (k, p) in mesh.data_hull().iter().enumerate() {
        let _ = writeln!(s, "{k} {} {}", p[0], p[1]);
    }
    s
}

pub fn write_mesh(path: &Path, mesh: &Mesh) -> Result<()> {
    write_string(path, &mesh_to_string(mesh))
}

pub fn read_mesh(path: &Path) -> Result<Mesh> {
    parse_mesh(&read_to_string(path)?, path)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    path: &'a Path,
    line: u64,
}

impl<'a> Lines<'a> {
    fn next_fields(&mut self) -> Result<Vec<&'a str>> {
        for (i, l) in self.inner.by_ref() {
            self.line = i as u64 + 1;
            let l = l.trim();
            if !l.is_empty() && !l.starts_with('#') {
                return Ok(l.split_whitespace().collect());
            }
        }
        Err(CliError::parse(self.path, self.line + 1, "unexpected end of mesh file"))
    }

    fn err(&self, msg: impl Into<String>) -> CliError {
        CliError::parse(self.path, self.line, msg)
    }

    fn section(&mut self, name: &str) -> Result<usize> {
        let f = self.next_fields()?;
        if f.len() != 2 || f[0] != name {
            return Err(self.err(format!("expected `{name} <count>`")));
        }
        f[1].parse().map_err(|_| self.err(format!("bad {name} count `{}`", f[1])))
    }

    fn row<T: std::str::FromStr>(&mut self, index: usize, width: usize) -> Result<Vec<T>> {
        let f = self.next_fields()?;
        if f.len() != width + 1 {
            return Err(self.err(format!("expected {} fields, found {}", width + 1, f.len())));
        }
        if f[0].parse::<usize>().ok() != Some(index) {
            return Err(self.err(format!("expected index {index}")));
        }
        f[1..]
            .iter()
            .map(|s| s.parse::<T>().map_err(|_| self.err(format!("cannot parse `{s}`"))))
            .collect()
    }
}

pub fn parse_mesh(text: &str, path: &Path) -> Result<Mesh> {
    let mut lines = Lines { inner: text.lines().enumerate(), path, line: 0 };
    let n = lines.section("nodes")?;
    let mut nodes = Vec::with_capacity(n);
    let mut boundary = Vec::with_capacity(n);
    for i in 0..n {
        let v: Vec<f64> = lines.row(i, 3)?;
        nodes.push([v[0], v[1]]);
        boundary.push(v[2] != 0.0);
    }
    let m = lines.section("triangles")?;
    let mut tris = Vec::with_capacity(m);
    for t in 0..m {
        let v: Vec<usize> = lines.row(t, 3)?;
        tris.push([v[0], v[1], v[2]]);
    }
    let h = lines.section("hull")?;
    let mut hull: Vec<Point> = Vec::with_capacity(h);
    for k in 0..h {
        let v: Vec<f64> = lines.row(k, 2)?;
        hull.push([v[0], v[1]]);
    }
    let line = lines.line;
    Mesh::from_parts(nodes, tris, boundary, hull).map_err(|e| CliError::parse(path, line, e.to_string()))
}

/// Matrix Market coordinate format, 1-based indices.
pub fn write_matrix_market(path: &Path, m: &CsrMatrix) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", m.nrows(), m.ncols(), m.nnz())?;
        for (r, c, v) in m.triplets() {
            writeln!(w, "{} {} {}", r + 1, c + 1, v)?;
        }
        Ok(())
    })
}

/// `D.mtx`, `G1.mtx`, `G2.mtx` and, when given, `A.mtx` in `dir`.
pub fn dump_fem(dir: &Path, fem: &FemMatrices, a: Option<&CsrMatrix>) -> Result<()> {
    write_matrix_market(&dir.join("D.mtx"), &fem.d_matrix())?;
    write_matrix_market(&dir.join("G1.mtx"), &fem.g1)?;
    write_matrix_market(&dir.join("G2.mtx"), &fem.g2)?;
    if let Some(a) = a {
        write_matrix_market(&dir.join("A.mtx"), a)?;
    }
    Ok(())
}
