//! Spectra as point clouds: conversion, subsampling, batching, and files.

mod batch;
mod cloud;
mod io;
mod subsample;

pub use batch::{batch, CloudBatch};
pub use cloud::{
    frame_to_cloud, spectrogram_to_cloud, Cell, CloudMeta, MagnitudeScale, Point2, Point3, PointCloud, ScaleConfig,
};
pub use io::{read_cloud, write_cloud};
pub use subsample::{
    gradient_scores, kept_count, subsample, subsample_gradient, subsample_random, subsample_topk, Strategy,
};
