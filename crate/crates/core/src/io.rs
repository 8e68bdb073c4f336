//! Snapshot CSV files, trajectory ingestion and on-disk Galerkin systems.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{Provenance, SnapshotSet};
use crate::error::{Error, Result};
use crate::galerkin::{BasisDescriptor, GalerkinSystem, Space};
use crate::linalg::mean_std;

fn schema(row: usize, column: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema { row, column: column.into(), message: message.into() }
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| schema(row, column, format!("cannot parse {raw:?} as a number")))?;
    if !v.is_finite() {
        return Err(schema(row, column, "value is not finite"));
    }
    Ok(v)
}

/// Column layout of a paired snapshot file.
fn paired_layout(header: &csv::StringRecord) -> Result<(usize, bool)> {
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let nx = names.iter().take_while(|n| n.starts_with('x')).count();
    if nx == 0 {
        return Err(schema(1, names.first().copied().unwrap_or(""), "expected leading x1..xd columns"));
    }
    for j in 0..nx {
        if names[j] != format!("x{}", j + 1) {
            return Err(schema(1, names[j], format!("expected column x{}", j + 1)));
        }
    }
    for j in 0..nx {
        let want = format!("y{}", j + 1);
        match names.get(nx + j) {
            Some(n) if *n == want => {}
            Some(n) => return Err(schema(1, *n, format!("expected column {want}"))),
            None => return Err(schema(1, want, "missing image column")),
        }
    }
    match &names[2 * nx..] {
        [] => Ok((nx, false)),
        ["w"] => Ok((nx, true)),
        [extra, ..] => Err(schema(1, *extra, "unexpected column (only an optional trailing w is allowed)")),
    }
}

/// Reads a file with header `x1..xd,y1..yd[,w]`; rows are numbered from 1 at the header.
pub fn read_snapshots_csv(path: &Path) -> Result<SnapshotSet> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let header = rdr.headers()?.clone();
    let (d, has_w) = paired_layout(&header)?;
    let width = 2 * d + usize::from(has_w);
    let (mut xs, mut ys, mut ws) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if rec.len() != width {
            let col = header.get(rec.len().min(width - 1)).unwrap_or("").to_string();
            return Err(schema(row, col, format!("expected {width} fields, found {}", rec.len())));
        }
        for j in 0..d {
            xs.push(parse_cell(&rec[j], row, &header[j])?);
            ys.push(parse_cell(&rec[d + j], row, &header[d + j])?);
        }
        if has_w {
            let w = parse_cell(&rec[2 * d], row, "w")?;
            if !(w > 0.0) {
                return Err(schema(row, "w", "weights must be strictly positive"));
            }
            ws.push(w);
        }
    }
    let m = xs.len() / d;
    if m == 0 {
        return Err(Error::InsufficientData("snapshot file has no data rows".into()));
    }
    let x = DMatrix::from_row_slice(m, d, &xs);
    let y = DMatrix::from_row_slice(m, d, &ys);
    if has_w {
        SnapshotSet::new(x, y, DVector::from_vec(ws), Provenance::Ingested)
    } else {
        SnapshotSet::uniform(x, y, Provenance::Ingested)
    }
}

pub fn write_snapshots_csv(path: &Path, snapshots: &SnapshotSet) -> Result<()> {
    let d = snapshots.dim();
    let mut wtr = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    header.extend((1..=d).map(|j| format!("y{j}")));
    header.push("w".into());
    wtr.write_record(&header)?;
    for m in 0..snapshots.len() {
        let mut rec: Vec<String> = Vec::with_capacity(2 * d + 1);
        rec.extend(snapshots.x.row(m).iter().map(|v| format!("{v:e}")));
        rec.extend(snapshots.y.row(m).iter().map(|v| format!("{v:e}")));
        rec.push(format!("{:e}", snapshots.weights[m]));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Affine map `(v - mean) / std` applied per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn apply(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] - self.mean[j]) / self.std[j])
    }
}

/// Reads one trajectory (one state per row, any header) and pairs consecutive
/// rows. With `normalize`, the statistics of the paired states are used and the
/// same map is applied to the images.
pub fn read_trajectory_csv(path: &Path, normalize: bool) -> Result<(SnapshotSet, Option<Normalization>)> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let header = rdr.headers()?.clone();
    let d = header.len();
    if d == 0 {
        return Err(schema(1, "", "header has no columns"));
    }
    let mut vals = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if rec.len() != d {
            let col = header.get(rec.len().min(d - 1)).unwrap_or("").to_string();
            return Err(schema(row, col, format!("expected {d} fields, found {}", rec.len())));
        }
        for j in 0..d {
            vals.push(parse_cell(&rec[j], row, &header[j])?);
        }
    }
    let t = vals.len() / d;
    if t < 2 {
        return Err(Error::InsufficientData("a trajectory needs at least two rows".into()));
    }
    let traj = DMatrix::from_row_slice(t, d, &vals);
    trajectory_snapshots(&traj, normalize)
}

pub fn trajectory_snapshots(traj: &DMatrix<f64>, normalize: bool) -> Result<(SnapshotSet, Option<Normalization>)> {
    let t = traj.nrows();
    if t < 2 {
        return Err(Error::InsufficientData("a trajectory needs at least two rows".into()));
    }
    let mut x = traj.rows(0, t - 1).into_owned();
    let mut y = traj.rows(1, t - 1).into_owned();
    let mut norm = None;
    if normalize {
        if t < 3 {
            return Err(Error::InsufficientData("normalization needs at least two paired states".into()));
        }
        let (mut mean, mut std) = (Vec::new(), Vec::new());
        for (j, c) in x.column_iter().enumerate() {
            let (m, s) = mean_std(&c.iter().copied().collect::<Vec<_>>());
            if !(s > 0.0) {
                return Err(Error::DegenerateData(format!("column {} is constant and cannot be normalized", j + 1)));
            }
            mean.push(m);
            std.push(s);
        }
        let n = Normalization { mean, std };
        x = n.apply(&x);
        y = n.apply(&y);
        norm = Some(n);
    }
    Ok((SnapshotSet::uniform(x, y, Provenance::Ingested)?, norm))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixEntry {
    pub rows: usize,
    pub cols: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalerkinManifest {
    pub format: u32,
    pub space: Space,
    pub dim: usize,
    pub numerical_rank: usize,
    pub descriptor: BasisDescriptor,
    pub matrices: BTreeMap<String, MatrixEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn matrix_bytes(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 * m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `G.bin`, `A.bin`, `L.bin`, `K.bin` (and `basis.bin` when present) as
/// little-endian row-major `f64` plus `manifest.json`.
pub fn save_galerkin(dir: &Path, sys: &GalerkinSystem) -> Result<GalerkinManifest> {
    fs::create_dir_all(dir)?;
    let mut mats: Vec<(&str, &DMatrix<f64>)> = vec![("G", &sys.g), ("A", &sys.a), ("L", &sys.l), ("K", &sys.k)];
    if let Some(b) = &sys.basis {
        mats.push(("basis", b));
    }
    let mut matrices = BTreeMap::new();
    for (name, m) in mats {
        let bytes = matrix_bytes(m);
        fs::write(dir.join(format!("{name}.bin")), &bytes)?;
        matrices.insert(name.to_string(), MatrixEntry { rows: m.nrows(), cols: m.ncols(), sha256: sha256_hex(&bytes) });
    }
    let manifest = GalerkinManifest {
        format: 1,
        space: sys.space,
        dim: sys.dim(),
        numerical_rank: sys.numerical_rank,
        descriptor: sys.descriptor.clone(),
        matrices,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

fn load_matrix(dir: &Path, name: &str, entry: &MatrixEntry) -> Result<DMatrix<f64>> {
    let bytes = fs::read(dir.join(format!("{name}.bin")))?;
    if sha256_hex(&bytes) != entry.sha256 {
        return Err(Error::Checksum(format!("{name}.bin")));
    }
    if bytes.len() != 8 * entry.rows * entry.cols {
        return Err(Error::Checksum(format!("{name}.bin has {} bytes for a {}x{} matrix", bytes.len(), entry.rows, entry.cols)));
    }
    let vals: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok(DMatrix::from_row_slice(entry.rows, entry.cols, &vals))
}

pub fn load_galerkin(dir: &Path) -> Result<GalerkinSystem> {
    let manifest: GalerkinManifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    let get = |name: &str| -> Result<DMatrix<f64>> {
        let entry = manifest
            .matrices
            .get(name)
            .ok_or_else(|| schema(0, name, "matrix missing from manifest"))?;
        load_matrix(dir, name, entry)
    };
    let (g, a, l, k) = (get("G")?, get("A")?, get("L")?, get("K")?);
    for (name, m) in [("G", &g), ("A", &a), ("L", &l), ("K", &k)] {
        if m.shape() != (manifest.dim, manifest.dim) {
            return Err(schema(0, name, format!("expected a {0}x{0} matrix", manifest.dim)));
        }
    }
    let basis = match manifest.matrices.get("basis") {
        Some(e) => Some(load_matrix(dir, "basis", e)?),
        None => None,
    };
    Ok(GalerkinSystem {
        g,
        a,
        l,
        k,
        space: manifest.space,
        descriptor: manifest.descriptor,
        basis,
        numerical_rank: manifest.numerical_rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn paired_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "s.csv", "x1,x2,y1,y2\n0,1,2,3\n4,5,6,7\n");
        let s = read_snapshots_csv(&p).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.weights, DVector::from_element(2, 0.5));
        let q = dir.path().join("t.csv");
        write_snapshots_csv(&q, &s).unwrap();
        assert_eq!(read_snapshots_csv(&q).unwrap(), s);
    }

    #[test]
    fn schema_errors_name_the_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "x1,x2,y1\n0,1,2\n");
        match read_snapshots_csv(&p) {
            Err(Error::Schema { column, .. }) => assert_eq!(column, "y2"),
            other => panic!("{other:?}"),
        }
        let p = write(dir.path(), "b.csv", "x1,y1,w\n0,1,0.5\n0,1\n");
        match read_snapshots_csv(&p) {
            Err(Error::Schema { row, column, .. }) => assert_eq!((row, column.as_str()), (3, "w")),
            other => panic!("{other:?}"),
        }
        let p = write(dir.path(), "c.csv", "x1,y1\n0,abc\n");
        assert!(matches!(read_snapshots_csv(&p), Err(Error::Schema { row: 2, .. })));
        let p = write(dir.path(), "d.csv", "x1,y1,w\n0,1,-1\n");
        assert!(matches!(read_snapshots_csv(&p), Err(Error::Schema { .. })));
    }

    #[test]
    fn trajectory_pairs() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "tr.csv", "a,b\n0,0\n1,2\n3,5\n");
        let (s, n) = read_trajectory_csv(&p, false).unwrap();
        assert!(n.is_none());
        assert_eq!(s.len(), 2);
        assert_eq!(s.y.row(0), s.x.row(1));
    }

    #[test]
    fn trajectory_normalized() {
        let traj = DMatrix::from_fn(40, 3, |i, j| ((i * (j + 2)) as f64).sin() * (j + 1) as f64 + j as f64);
        let (s, n) = trajectory_snapshots(&traj, true).unwrap();
        assert!(n.is_some());
        for c in s.x.column_iter() {
            let (m, sd) = mean_std(&c.iter().copied().collect::<Vec<_>>());
            assert!(m.abs() <= 1e-10);
            assert!((sd - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn galerkin_round_trip_and_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.1, 1.0]);
        let a = DMatrix::from_row_slice(2, 2, &[0.3, -1.0 / 3.0, 0.7, 0.2]);
        let sys = GalerkinSystem::from_matrices(g.clone(), a, g, Space::L2, BasisDescriptor::Explicit { label: "x".into() }).unwrap();
        save_galerkin(dir.path(), &sys).unwrap();
        let back = load_galerkin(dir.path()).unwrap();
        assert_eq!(back, sys);
        let mut bytes = fs::read(dir.path().join("A.bin")).unwrap();
        bytes[3] ^= 1;
        fs::write(dir.path().join("A.bin"), bytes).unwrap();
        assert!(matches!(load_galerkin(dir.path()), Err(Error::Checksum(_))));
    }
}
