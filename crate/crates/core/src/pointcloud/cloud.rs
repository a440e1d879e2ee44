use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::MagnitudeSpectrogram;

/// How spectral magnitudes become the `m` coordinate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MagnitudeScale {
    /// `max(20·log10(mag + 1e-8), −80) / 80`
    #[default]
    Db,
    Linear,
}

/// Fixed global coordinate scaling.
///
/// Every constant here is independent of the analysis parameters, so the
/// same physical frequency always lands on the same coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleConfig {
    pub magnitude: MagnitudeScale,
    /// Hz per frequency-coordinate unit.
    pub freq_divisor: f64,
    pub db_floor: f64,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        ScaleConfig {
            magnitude: MagnitudeScale::Db,
            freq_divisor: 1000.0,
            db_floor: -80.0,
        }
    }
}

const DB_EPS: f64 = 1e-8;

impl ScaleConfig {
    pub fn frequency(&self, hz: f64) -> f64 {
        hz / self.freq_divisor
    }

    fn floored_db(&self, mag: f64) -> f64 {
        (20.0 * (mag + DB_EPS).log10()).max(self.db_floor)
    }

    /// `m` coordinate of a point.
    pub fn magnitude(&self, mag: f64) -> f64 {
        match self.magnitude {
            MagnitudeScale::Db => self.floored_db(mag) / -self.db_floor,
            MagnitudeScale::Linear => mag,
        }
    }

    /// Entry of a fixed-size feature vector: same scale as [`magnitude`](Self::magnitude)
    /// but shifted so the dB floor maps to 0, which makes a zeroed entry mean
    /// "no energy".
    pub fn vector_value(&self, mag: f64) -> f64 {
        match self.magnitude {
            MagnitudeScale::Db => (self.floored_db(mag) - self.db_floor) / -self.db_floor,
            MagnitudeScale::Linear => mag,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point2 {
    pub f: f64,
    pub m: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point3 {
    pub t: f64,
    pub f: f64,
    pub m: f64,
}

/// Analysis parameters a cloud was derived from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CloudMeta {
    pub n_fft: usize,
    pub sample_rate: u32,
    pub hop: Option<usize>,
}

/// Time-frequency cell a point was read from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub frame: u32,
    pub bin: u32,
}

/// Unordered set of 2-D `(f, m)` or 3-D `(t, f, m)` points.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
    /// Source cell of every point, when the cloud came from a spectrogram.
    cells: Option<Vec<Cell>>,
    /// `(frames, bins)` of the originating grid.
    grid: Option<(usize, usize)>,
    pub label: Option<usize>,
    pub meta: CloudMeta,
}

impl PointCloud {
    /// Cloud from flat `[n × dim]` coordinates without grid provenance.
    pub fn from_coords(dim: usize, coords: Vec<f64>, meta: CloudMeta) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Dimension(format!("points must be 2-D or 3-D, got {dim}")));
        }
        if coords.len() % dim != 0 {
            return Err(Error::Dimension(format!(
                "{} coordinates do not split into {dim}-D points",
                coords.len()
            )));
        }
        Ok(PointCloud {
            dim,
            coords,
            cells: None,
            grid: None,
            label: None,
            meta,
        })
    }

    pub(crate) fn with_provenance(mut self, cells: Vec<Cell>, grid: (usize, usize)) -> Self {
        debug_assert_eq!(cells.len(), self.len());
        self.cells = Some(cells);
        self.grid = Some(grid);
        self
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn cells(&self) -> Option<&[Cell]> {
        self.cells.as_deref()
    }

    pub fn grid(&self) -> Option<(usize, usize)> {
        self.grid
    }

    /// Magnitude coordinate of point `i`.
    pub fn m(&self, i: usize) -> f64 {
        self.coords[i * self.dim + self.dim - 1]
    }

    /// Frequency coordinate of point `i`.
    pub fn f(&self, i: usize) -> f64 {
        self.coords[i * self.dim + self.dim - 2]
    }

    /// Time coordinate of point `i` (0 for 2-D clouds).
    pub fn t(&self, i: usize) -> f64 {
        if self.dim == 3 {
            self.coords[i * 3]
        } else {
            0.0
        }
    }

    pub fn points2(&self) -> Option<Vec<Point2>> {
        (self.dim == 2).then(|| {
            self.coords
                .chunks_exact(2)
                .map(|p| Point2 { f: p[0], m: p[1] })
                .collect()
        })
    }

    pub fn points3(&self) -> Option<Vec<Point3>> {
        (self.dim == 3).then(|| {
            self.coords
                .chunks_exact(3)
                .map(|p| Point3 {
                    t: p[0],
                    f: p[1],
                    m: p[2],
                })
                .collect()
        })
    }

    /// Sub-cloud holding the listed points in the listed order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        let coords = indices.iter().flat_map(|&i| self.point(i).iter().copied()).collect();
        PointCloud {
            dim: self.dim,
            coords,
            cells: self.cells.as_ref().map(|c| indices.iter().map(|&i| c[i]).collect()),
            grid: self.grid,
            label: self.label,
            meta: self.meta,
        }
    }

    /// True when every cell of the originating grid is present exactly once.
    pub fn has_complete_grid(&self) -> bool {
        match (&self.cells, self.grid) {
            (Some(cells), Some((frames, bins))) => cells.len() == frames * bins,
            _ => false,
        }
    }
}

/// One point per bin: `f = i·sample_rate/n_fft` Hz (scaled), `m` per `scale`.
pub fn frame_to_cloud(frame: &[f64], sample_rate: u32, n_fft: usize, scale: &ScaleConfig) -> Result<PointCloud> {
    if n_fft == 0 || frame.len() != n_fft / 2 + 1 {
        return Err(Error::Dimension(format!(
            "frame has {} bins, expected {} for n_fft {n_fft}",
            frame.len(),
            n_fft / 2 + 1
        )));
    }
    let bin_hz = sample_rate as f64 / n_fft as f64;
    let coords = frame
        .iter()
        .enumerate()
        .flat_map(|(i, &mag)| [scale.frequency(i as f64 * bin_hz), scale.magnitude(mag)])
        .collect();
    let cells = (0..frame.len() as u32).map(|bin| Cell { frame: 0, bin }).collect();
    Ok(PointCloud::from_coords(
        2,
        coords,
        CloudMeta {
            n_fft,
            sample_rate,
            hop: None,
        },
    )?
    .with_provenance(cells, (1, frame.len())))
}

/// One `(t, f, m)` point per spectrogram cell; `t` is the frame centre in seconds.
pub fn spectrogram_to_cloud(spec: &MagnitudeSpectrogram, scale: &ScaleConfig) -> Result<PointCloud> {
    if spec.n_frames == 0 {
        return Err(Error::Dimension("spectrogram has no frames".into()));
    }
    let mut coords = Vec::with_capacity(spec.n_frames * spec.n_bins * 3);
    let mut cells = Vec::with_capacity(spec.n_frames * spec.n_bins);
    for t in 0..spec.n_frames {
        for (j, &mag) in spec.frame(t).iter().enumerate() {
            coords.extend([spec.frame_times[t], scale.frequency(spec.bin_hz(j)), scale.magnitude(mag)]);
            cells.push(Cell {
                frame: t as u32,
                bin: j as u32,
            });
        }
    }
    Ok(PointCloud::from_coords(
        3,
        coords,
        CloudMeta {
            n_fft: spec.n_fft,
            sample_rate: spec.sample_rate,
            hop: Some(spec.hop),
        },
    )?
    .with_provenance(cells, (spec.n_frames, spec.n_bins)))
}
