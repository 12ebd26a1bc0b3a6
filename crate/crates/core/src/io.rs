//! Snapshot files, CSV tables and the run manifest.
//!
//! A snapshot is a one-line text header `FIELD v1 <dim> <n_x> [<n_y>] <L_x> [<L_y>]`
//! followed by the cell values as little-endian binary64, x fastest. Floats in the
//! header and in every CSV use Rust's shortest round-trip formatting, so identical
//! runs produce identical bytes.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::adjoint::AdjointTrajectory;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Grid;
use crate::optimizer::IterationRecord;
use crate::sensitivity::LinearizedTrajectory;
use crate::state::{SeriesRow, StateTrajectory};

const MAGIC: &str = "FIELD v1";

fn format_error(path: &Path, message: impl Into<String>) -> Error {
    Error::FieldFormat {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn field_header(grid: &Grid<f64>) -> String {
    let mut h = format!("{MAGIC} {}", grid.dim());
    for n in grid.cells_per_axis() {
        h += &format!(" {n}");
    }
    for l in grid.lengths() {
        h += &format!(" {l:?}");
    }
    h
}

pub fn encode_field(field: &ScalarField<f64>) -> Vec<u8> {
    let mut out = field_header(field.grid()).into_bytes();
    out.push(b'\n');
    out.reserve(8 * field.values().len());
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_field(path: &Path, field: &ScalarField<f64>) -> Result<()> {
    fs::write(path, encode_field(field))?;
    Ok(())
}

pub fn decode_field(path: &Path, bytes: &[u8]) -> Result<ScalarField<f64>> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| format_error(path, "missing header line"))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| format_error(path, "header is not UTF-8"))?;
    let rest = header
        .strip_prefix(MAGIC)
        .ok_or_else(|| format_error(path, format!("header must start with `{MAGIC}`")))?;
    let tok: Vec<&str> = rest.split_whitespace().collect();
    let dim: usize = tok
        .first()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| format_error(path, "missing dimension"))?;
    if !(dim == 1 || dim == 2) || tok.len() != 1 + 2 * dim {
        return Err(format_error(path, format!("malformed header `{header}`")));
    }
    let ints: Vec<usize> = tok[1..=dim]
        .iter()
        .map(|t| t.parse().map_err(|_| format_error(path, format!("bad cell count `{t}`"))))
        .collect::<Result<_>>()?;
    let lens: Vec<f64> = tok[1 + dim..]
        .iter()
        .map(|t| t.parse().map_err(|_| format_error(path, format!("bad length `{t}`"))))
        .collect::<Result<_>>()?;
    let grid = if dim == 1 {
        Grid::new_1d(ints[0], lens[0])?
    } else {
        Grid::new_2d(ints[0], ints[1], lens[0], lens[1])?
    };
    let data = &bytes[nl + 1..];
    if data.len() != 8 * grid.cell_count() {
        return Err(format_error(
            path,
            format!("expected {} values, found {} bytes", grid.cell_count(), data.len()),
        ));
    }
    let values = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    ScalarField::from_values(grid, values).map_err(|e| format_error(path, e.to_string()))
}

pub fn read_field(path: &Path) -> Result<ScalarField<f64>> {
    let bytes = fs::read(path)?;
    decode_field(path, &bytes)
}

/// One value per line under a `value` header.
pub fn write_field_csv(path: &Path, field: &ScalarField<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["value"])?;
    for v in field.values() {
        w.write_record([format!("{v:?}")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn snapshot_name(prefix: &str, k: usize) -> String {
    format!("{prefix}{k:06}.f64")
}

/// Writes `fields[k]` to `dir/<prefix><k>.f64` for every node.
pub fn write_snapshots(dir: &Path, prefix: &str, fields: &[ScalarField<f64>]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    fields
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let p = dir.join(snapshot_name(prefix, k));
            write_field(&p, f)?;
            Ok(p)
        })
        .collect()
}

pub fn write_state_snapshots(dir: &Path, traj: &StateTrajectory<f64>) -> Result<()> {
    write_snapshots(dir, "phi_", &traj.phi)?;
    write_snapshots(dir, "mu_", &traj.mu)?;
    write_snapshots(dir, "sigma_", &traj.sigma)?;
    Ok(())
}

pub fn write_linearized_snapshots(dir: &Path, lin: &LinearizedTrajectory<f64>) -> Result<()> {
    write_snapshots(dir, "Phi_", &lin.phi)?;
    write_snapshots(dir, "Xi_", &lin.xi)?;
    write_snapshots(dir, "Sigma_", &lin.sigma)?;
    Ok(())
}

pub fn write_adjoint_snapshots(dir: &Path, adj: &AdjointTrajectory<f64>) -> Result<()> {
    write_snapshots(dir, "p_", &adj.p)?;
    write_snapshots(dir, "q_", &adj.q)?;
    write_snapshots(dir, "radj_", &adj.r_adj)?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<fs::File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(fs::File::create(path)?)))
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_series_csv(path: &Path, rows: &[SeriesRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["k", "t", "mass_phi", "mass_sigma", "energy", "min_sigma", "max_sigma"])?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            num(r.t),
            num(r.mass_phi),
            num(r.mass_sigma),
            num(r.energy),
            num(r.min_sigma),
            num(r.max_sigma),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_adjoint_series_csv(path: &Path, adj: &AdjointTrajectory<f64>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["k", "t", "norm_p", "norm_q", "norm_radj"])?;
    for k in 0..adj.p.len() {
        w.write_record([
            k.to_string(),
            num(adj.timegrid.time(k)),
            num(adj.p[k].norm_l2()),
            num(adj.q[k].norm_l2()),
            num(adj.r_adj[k].norm_l2()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_iterations_csv(path: &Path, records: &[IterationRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["iter", "J", "stationarity", "tau", "step"])?;
    for r in records {
        w.write_record([r.iter.to_string(), num(r.j), num(r.stationarity), num(r.tau), num(r.step)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_objective_csv(path: &Path, records: &[IterationRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "iter",
        "J",
        "tracking",
        "terminal",
        "size",
        "dose",
        "time",
        "stationarity",
        "dtau",
        "tau",
    ])?;
    for r in records {
        let t = &r.terms;
        w.write_record([
            r.iter.to_string(),
            num(r.j),
            num(t.tracking),
            num(t.terminal),
            num(t.size),
            num(t.dose),
            num(t.time),
            num(r.stationarity),
            num(r.dtau),
            num(r.tau),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `key=value` lines in the given order.
pub fn write_manifest(path: &Path, entries: &[(&str, String)]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for (k, v) in entries {
        writeln!(w, "{k}={v}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<(String, String)>> {
    Ok(fs::read_to_string(path)?
        .lines()
        .filter_map(|l| l.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_roundtrip_1d_and_2d() {
        let dir = tempfile::tempdir().unwrap();
        for g in [
            Grid::new_1d(7, 1.25).unwrap(),
            Grid::new_2d(5, 6, 0.3, 2.0).unwrap(),
        ] {
            let f = ScalarField::from_fn(g, |x: [f64; 2]| (x[0] * 3.1).sin() + x[1] / 7.0);
            let p = dir.path().join("f.f64");
            write_field(&p, &f).unwrap();
            assert_eq!(read_field(&p).unwrap(), f);
        }
    }

    #[test]
    fn header_layout() {
        let g = Grid::new_2d(4, 8, 1.0, 0.5).unwrap();
        let bytes = encode_field(&ScalarField::zeros(g));
        let text = std::str::from_utf8(&bytes[..bytes.iter().position(|&b| b == b'\n').unwrap()]).unwrap();
        assert_eq!(text, "FIELD v1 2 4 8 1.0 0.5");
        assert_eq!(bytes.len(), text.len() + 1 + 8 * 32);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let p = Path::new("x.f64");
        assert!(decode_field(p, b"no newline").is_err());
        assert!(decode_field(p, b"FIELD v2 1 4 1.0\n").is_err());
        assert!(decode_field(p, b"FIELD v1 1 4 1.0\n\0\0\0").is_err());
        let mut ok = b"FIELD v1 1 4 1.0\n".to_vec();
        ok.extend(std::iter::repeat(0u8).take(32));
        assert!(decode_field(p, &ok).is_ok());
        let mut nan = b"FIELD v1 1 4 1.0\n".to_vec();
        nan.extend(f64::NAN.to_le_bytes());
        nan.extend(std::iter::repeat(0u8).take(24));
        assert!(decode_field(p, &nan).is_err());
    }

    #[test]
    fn snapshot_names() {
        assert_eq!(snapshot_name("phi_", 123), "phi_000123.f64");
        assert_eq!(snapshot_name("radj_", 0), "radj_000000.f64");
    }

    #[test]
    fn manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.txt");
        write_manifest(&p, &[("a", "1".into()), ("b", "x=y".into())]).unwrap();
        let m = read_manifest(&p).unwrap();
        assert_eq!(m, vec![("a".into(), "1".into()), ("b".into(), "x=y".into())]);
    }
}
