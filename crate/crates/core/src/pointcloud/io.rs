//! CSV point files with a JSON metadata sidecar.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Cell, CloudMeta, PointCloud};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Sidecar {
    dim: usize,
    points: usize,
    label: Option<usize>,
    meta: CloudMeta,
    grid: Option<(usize, usize)>,
    cells: Option<Vec<Cell>>,
}

fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `(t,)f,m` rows to `csv_path` and metadata next to it as `.json`.
pub fn write_cloud(csv_path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let csv_path = csv_path.as_ref();
    let mut w = csv::Writer::from_path(csv_path)?;
    if cloud.dim() == 3 {
        w.write_record(["t", "f", "m"])?;
    } else {
        w.write_record(["f", "m"])?;
    }
    for i in 0..cloud.len() {
        w.write_record(cloud.point(i).iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(csv_path, e))?;
    let side = Sidecar {
        dim: cloud.dim(),
        points: cloud.len(),
        label: cloud.label,
        meta: cloud.meta,
        grid: cloud.grid(),
        cells: cloud.cells().map(<[Cell]>::to_vec),
    };
    let path = sidecar_path(csv_path);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::to_writer_pretty(file, &side)?;
    Ok(())
}

pub fn read_cloud(csv_path: impl AsRef<Path>) -> Result<PointCloud> {
    let csv_path = csv_path.as_ref();
    let path = sidecar_path(csv_path);
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let side: Sidecar = serde_json::from_reader(file)?;
    let mut r = csv::Reader::from_path(csv_path)?;
    let expected: &[&str] = if side.dim == 3 { &["t", "f", "m"] } else { &["f", "m"] };
    if r.headers()?.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Schema(format!(
            "{}: header must be {}",
            csv_path.display(),
            expected.join(",")
        )));
    }
    let mut coords = Vec::with_capacity(side.points * side.dim);
    for rec in r.records() {
        for field in rec?.iter() {
            coords.push(field.parse::<f64>().map_err(|e| {
                Error::Schema(format!("{}: bad number `{field}`: {e}", csv_path.display()))
            })?);
        }
    }
    let mut cloud = PointCloud::from_coords(side.dim, coords, side.meta)?;
    if cloud.len() != side.points {
        return Err(Error::Schema(format!(
            "{}: sidecar says {} points, csv has {}",
            csv_path.display(),
            side.points,
            cloud.len()
        )));
    }
    if let (Some(cells), Some(grid)) = (side.cells, side.grid) {
        if cells.len() != cloud.len() {
            return Err(Error::Schema("cell provenance length mismatch".into()));
        }
        cloud = cloud.with_provenance(cells, grid);
    }
    cloud.label = side.label;
    Ok(cloud)
}
