//! Matrix Market files, mesh dumps and CSV tables.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::harness::ResultRow;
use crate::lod::CoarseSpace;
use crate::mesh::MeshHierarchy;
use crate::sparse::CsrMatrix;
use crate::C64;

/// Writes a complex matrix in Matrix Market coordinate format.
pub fn write_matrix_market<W: Write>(mut w: W, a: &CsrMatrix<C64>) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate complex general")?;
    writeln!(w, "{} {} {}", a.nrows(), a.ncols(), a.nnz())?;
    for (i, j, v) in a.triplets() {
        writeln!(w, "{} {} {:e} {:e}", i + 1, j + 1, v.re, v.im)?;
    }
    Ok(())
}

/// Writes a real matrix in Matrix Market coordinate format.
pub fn write_matrix_market_real<W: Write>(mut w: W, a: &CsrMatrix<f64>) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.nrows(), a.ncols(), a.nnz())?;
    for (i, j, v) in a.triplets() {
        writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

/// Reads a real, complex or pattern Matrix Market coordinate file with
/// general or symmetric storage.
pub fn read_matrix_market<R: BufRead>(r: R) -> Result<CsrMatrix<C64>> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty Matrix Market file".into()))??;
    let fields: Vec<String> = header
        .split_whitespace()
        .map(|s| s.to_ascii_lowercase())
        .collect();
    if fields.len() != 5
        || fields[0] != "%%matrixmarket"
        || fields[1] != "matrix"
        || fields[2] != "coordinate"
    {
        return Err(Error::Parse(format!(
            "unsupported Matrix Market header `{header}`"
        )));
    }
    let field = fields[3].as_str();
    if !matches!(field, "real" | "complex" | "pattern" | "integer") {
        return Err(Error::Parse(format!(
            "unsupported Matrix Market field `{field}`"
        )));
    }
    let symmetry = fields[4].as_str();
    if !matches!(symmetry, "general" | "symmetric") {
        return Err(Error::Parse(format!(
            "unsupported Matrix Market symmetry `{symmetry}`"
        )));
    }
    let mut body =
        lines.filter(|l| !matches!(l, Ok(s) if s.trim().is_empty() || s.starts_with('%')));
    let size = body
        .next()
        .ok_or_else(|| Error::Parse("missing size line".into()))??;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| Error::Parse(format!("bad size line `{size}`")))
        })
        .collect::<Result<_>>()?;
    let [nrows, ncols, nnz] = dims[..] else {
        return Err(Error::Parse(format!("bad size line `{size}`")));
    };
    let mut triplets = Vec::with_capacity(nnz);
    for line in body {
        let line = line?;
        let bad = || Error::Parse(format!("bad entry `{line}`"));
        let t: Vec<&str> = line.split_whitespace().collect();
        let want = match field {
            "complex" => 4,
            "pattern" => 2,
            _ => 3,
        };
        if t.len() != want {
            return Err(bad());
        }
        let i: usize = t[0].parse().map_err(|_| bad())?;
        let j: usize = t[1].parse().map_err(|_| bad())?;
        if i == 0 || j == 0 || i > nrows || j > ncols {
            return Err(bad());
        }
        let num = |k: usize| t[k].parse::<f64>().map_err(|_| bad());
        let v = match field {
            "complex" => C64::new(num(2)?, num(3)?),
            "pattern" => C64::new(1.0, 0.0),
            _ => C64::new(num(2)?, 0.0),
        };
        triplets.push((i - 1, j - 1, v));
        if symmetry == "symmetric" && i != j {
            triplets.push((j - 1, i - 1, v));
        }
    }
    let stored = if symmetry == "symmetric" {
        triplets.iter().filter(|(i, j, _)| i >= j).count()
    } else {
        triplets.len()
    };
    if stored != nnz {
        return Err(Error::Parse(format!(
            "expected {nnz} entries, found {stored}"
        )));
    }
    Ok(CsrMatrix::from_triplets(nrows, ncols, &triplets))
}

/// Plain-text dump of the fine mesh: a node table and an element table with
/// the parent coarse element of each triangle.
pub fn write_mesh<W: Write>(mut w: W, mesh: &MeshHierarchy) -> Result<()> {
    let fine = &mesh.fine;
    writeln!(w, "# nodes {}", fine.num_nodes())?;
    writeln!(w, "# id x y")?;
    for (id, x) in fine.nodes.iter().enumerate() {
        writeln!(w, "{id} {} {}", x[0], x[1])?;
    }
    writeln!(w, "# elements {}", fine.num_elements())?;
    writeln!(w, "# id v0 v1 v2 parent")?;
    for (id, e) in fine.elements.iter().enumerate() {
        writeln!(
            w,
            "{id} {} {} {} {}",
            e[0], e[1], e[2], mesh.parent_element[id]
        )?;
    }
    Ok(())
}

/// CSV of the multiscale basis sparsity: coarse node, nonzeros and patch
/// radius in coarse layers.
pub fn write_basis_stats<W: Write>(w: W, space: &CoarseSpace, mesh: &MeshHierarchy) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["coarse_node", "nnz", "patch_radius"])?;
    for (p, nnz, radius) in space.column_stats(mesh) {
        out.write_record([p.to_string(), nnz.to_string(), radius.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_results_csv<W: Write>(w: W, rows: &[ResultRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_results_csv<R: std::io::Read>(r: R) -> Result<Vec<ResultRow>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::GlobalOperators;

    #[test]
    fn matrix_market_roundtrip() {
        let mesh = MeshHierarchy::new(2, 1).unwrap();
        let ops = GlobalOperators::assemble(&mesh, 3.0);
        let mut buf = Vec::new();
        write_matrix_market(&mut buf, &ops.a).unwrap();
        let back = read_matrix_market(&buf[..]).unwrap();
        assert_eq!(back.nrows(), ops.a.nrows());
        for (i, j, v) in ops.a.triplets() {
            assert!((back.get(i, j) - v).norm() <= 1e-15 * v.norm().max(1.0));
        }

        let mut buf = Vec::new();
        write_matrix_market_real(&mut buf, &ops.stiffness).unwrap();
        let back = read_matrix_market(&buf[..]).unwrap();
        assert_eq!(back.nnz(), ops.stiffness.nnz());
    }

    #[test]
    fn matrix_market_symmetric_and_errors() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n% comment\n2 2 2\n1 1 4.0\n2 1 -1.0\n";
        let a = read_matrix_market(text.as_bytes()).unwrap();
        assert_eq!(a.get(0, 1), C64::new(-1.0, 0.0));
        assert_eq!(a.get(1, 0), C64::new(-1.0, 0.0));
        assert!(
            read_matrix_market("%%MatrixMarket matrix array real general\n".as_bytes()).is_err()
        );
        assert!(read_matrix_market(
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n".as_bytes()
        )
        .is_err());
        assert!(read_matrix_market(
            "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n".as_bytes()
        )
        .is_err());
    }

    #[test]
    fn mesh_dump_lists_every_entity() {
        let mesh = MeshHierarchy::new(2, 1).unwrap();
        let mut buf = Vec::new();
        write_mesh(&mut buf, &mesh).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let data = text.lines().filter(|l| !l.starts_with('#')).count();
        assert_eq!(data, mesh.fine.num_nodes() + mesh.fine.num_elements());
    }

    #[test]
    fn results_roundtrip() {
        let row = ResultRow {
            kappa: 16.0,
            h: 1.0 / 64.0,
            coarse_h: 1.0 / 16.0,
            m: 3,
            h_sub: 0.125,
            delta: 0.0625,
            precond: "dirichlet".into(),
            coarse_kind: "lod".into(),
            dofs: 4225,
            iterations: -1,
            final_residual: 1e-3,
            true_residual: 2e-3,
            setup_time_s: 1.0,
            solve_time_s: 0.5,
        };
        let mut buf = Vec::new();
        write_results_csv(&mut buf, std::slice::from_ref(&row)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("kappa,h,coarse_h,m,h_sub,delta,precond"));
        assert_eq!(read_results_csv(&buf[..]).unwrap(), vec![row]);
    }
}
