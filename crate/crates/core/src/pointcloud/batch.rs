use super::PointCloud;
use crate::error::{Error, Result};

/// Zero-padded clouds of equal dimensionality plus a validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct CloudBatch {
    /// `[batch × n_max × dim]`
    pub coords: Vec<f64>,
    /// `[batch × n_max]`, `true` on real points.
    pub mask: Vec<bool>,
    pub labels: Vec<Option<usize>>,
    pub dim: usize,
    pub n_max: usize,
}

impl CloudBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Padded coordinates and mask of row `b`.
    pub fn row(&self, b: usize) -> (&[f64], &[bool]) {
        let span = self.n_max * self.dim;
        (
            &self.coords[b * span..(b + 1) * span],
            &self.mask[b * self.n_max..(b + 1) * self.n_max],
        )
    }
}

pub fn batch(clouds: &[PointCloud]) -> Result<CloudBatch> {
    let first = clouds.first().ok_or(Error::EmptyCloud)?;
    let dim = first.dim();
    if clouds.iter().any(|c| c.dim() != dim) {
        return Err(Error::Dimension("clouds in a batch must share dimensionality".into()));
    }
    if clouds.iter().any(|c| c.is_empty()) {
        return Err(Error::EmptyCloud);
    }
    let n_max = clouds.iter().map(PointCloud::len).max().unwrap_or(0);
    let mut coords = vec![0.0; clouds.len() * n_max * dim];
    let mut mask = vec![false; clouds.len() * n_max];
    for (b, cloud) in clouds.iter().enumerate() {
        let base = b * n_max * dim;
        coords[base..base + cloud.coords().len()].copy_from_slice(cloud.coords());
        mask[b * n_max..b * n_max + cloud.len()].iter_mut().for_each(|m| *m = true);
    }
    Ok(CloudBatch {
        coords,
        mask,
        labels: clouds.iter().map(|c| c.label).collect(),
        dim,
        n_max,
    })
}
