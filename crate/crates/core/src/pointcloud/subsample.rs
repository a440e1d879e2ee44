use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PointCloud;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Largest magnitudes.
    Topk,
    /// Uniform without replacement.
    Random,
    /// Largest spectro-temporal gradient of the magnitude grid.
    Gradient,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "topk" => Ok(Strategy::Topk),
            "random" => Ok(Strategy::Random),
            "gradient" => Ok(Strategy::Gradient),
            other => Err(Error::Param(format!("unknown subsampling strategy `{other}`"))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Topk => "topk",
            Strategy::Random => "random",
            Strategy::Gradient => "gradient",
        })
    }
}

/// Number of points kept: `max(1, round(fraction · n))`.
pub fn kept_count(fraction: f64, n: usize) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Param(format!("fraction {fraction} outside (0, 1]")));
    }
    Ok(((fraction * n as f64).round() as usize).clamp(1, n.max(1)))
}

/// Indices of the `k` best scores; ties go to lower frequency, then earlier time.
fn top_by_score(cloud: &PointCloud, scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cloud.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(cloud.f(a).total_cmp(&cloud.f(b)))
            .then(cloud.t(a).total_cmp(&cloud.t(b)))
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order.sort_unstable();
    order
}

pub fn subsample_topk(cloud: &PointCloud, fraction: f64) -> Result<PointCloud> {
    let k = kept_count(fraction, cloud.len())?;
    if k == cloud.len() {
        return Ok(cloud.clone());
    }
    let scores: Vec<f64> = (0..cloud.len()).map(|i| cloud.m(i)).collect();
    Ok(cloud.select(&top_by_score(cloud, &scores, k)))
}

pub fn subsample_random(cloud: &PointCloud, fraction: f64, seed: u64) -> Result<PointCloud> {
    let k = kept_count(fraction, cloud.len())?;
    if k == cloud.len() {
        return Ok(cloud.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, cloud.len(), k).into_vec();
    picked.sort_unstable();
    Ok(cloud.select(&picked))
}

/// Central-difference gradient magnitude of the magnitude grid at every point.
///
/// Differences are one-sided on the grid edges and zero along an axis of
/// length one.
pub fn gradient_scores(cloud: &PointCloud) -> Result<Vec<f64>> {
    if cloud.dim() != 3 || !cloud.has_complete_grid() {
        return Err(Error::NoGrid);
    }
    let (frames, bins) = cloud.grid().ok_or(Error::NoGrid)?;
    let cells = cloud.cells().ok_or(Error::NoGrid)?;
    let mut grid = vec![f64::NAN; frames * bins];
    for (i, c) in cells.iter().enumerate() {
        grid[c.frame as usize * bins + c.bin as usize] = cloud.m(i);
    }
    if grid.iter().any(|v| v.is_nan()) {
        return Err(Error::NoGrid);
    }
    let diff = |len: usize, at: usize, get: &dyn Fn(usize) -> f64| -> f64 {
        match len {
            1 => 0.0,
            _ if at == 0 => get(1) - get(0),
            _ if at == len - 1 => get(len - 1) - get(len - 2),
            _ => (get(at + 1) - get(at - 1)) / 2.0,
        }
    };
    Ok(cells
        .iter()
        .map(|c| {
            let (t, f) = (c.frame as usize, c.bin as usize);
            let dt = diff(frames, t, &|x| grid[x * bins + f]);
            let df = diff(bins, f, &|x| grid[t * bins + x]);
            (dt * dt + df * df).sqrt()
        })
        .collect())
}

pub fn subsample_gradient(cloud: &PointCloud, fraction: f64) -> Result<PointCloud> {
    let scores = gradient_scores(cloud)?;
    let k = kept_count(fraction, cloud.len())?;
    if k == cloud.len() {
        return Ok(cloud.clone());
    }
    Ok(cloud.select(&top_by_score(cloud, &scores, k)))
}

/// Dispatches on `strategy`; `seed` only matters for [`Strategy::Random`].
pub fn subsample(cloud: &PointCloud, strategy: Strategy, fraction: f64, seed: u64) -> Result<PointCloud> {
    match strategy {
        Strategy::Topk => subsample_topk(cloud, fraction),
        Strategy::Random => subsample_random(cloud, fraction, seed),
        Strategy::Gradient => subsample_gradient(cloud, fraction),
    }
}
