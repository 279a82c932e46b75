//! Per-image annotation vectors: the `ICFE` feature file, the toy patch
//! encoder, and the synthetic shapes dataset.

mod icfe;
mod manifest;
mod synthetic;

pub use icfe::{decode_features, encode_features, read_features, write_features};
pub use manifest::{read_manifest, write_manifest, ManifestRecord};
pub use synthetic::{
    generate_synthetic_dataset, Color, Placement, Scene, Shape, Split, SyntheticDataset,
    SyntheticSample, VerticalHalf,
};

use crate::augment::Image;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `L` annotation vectors of `D` dimensions for one image.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet<S> {
    pub image_id: String,
    pub annotations: Tensor<S>,
}

impl<S: Scalar> FeatureSet<S> {
    pub fn new(image_id: impl Into<String>, annotations: Tensor<S>) -> Result<Self> {
        if annotations.rank() != 2 {
            return Err(Error::Contract(format!(
                "annotations must be an L×D matrix, got shape {:?}",
                annotations.shape()
            )));
        }
        if !annotations.is_finite() {
            return Err(Error::Contract("annotations contain non-finite values".into()));
        }
        Ok(FeatureSet {
            image_id: image_id.into(),
            annotations,
        })
    }

    /// Number of regions `L`.
    pub fn locations(&self) -> usize {
        self.annotations.rows()
    }

    /// Feature width `D`.
    pub fn dim(&self) -> usize {
        self.annotations.cols()
    }
}

/// Splits `img` into a `grid × grid` lattice. Each cell yields its
/// per-channel mean intensity in `[0, 1]` followed by the cell centre's
/// normalized `(row, col)`.
pub fn toy_patch_encode<S: Scalar>(
    image_id: impl Into<String>,
    img: &Image,
    grid: usize,
) -> Result<FeatureSet<S>> {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    if grid == 0 || h < grid || w < grid {
        return Err(Error::Domain(format!(
            "cannot split a {h}x{w} image into a {grid}x{grid} grid"
        )));
    }
    let d = c + 2;
    let mut data = Vec::with_capacity(grid * grid * d);
    for gr in 0..grid {
        let (r0, r1) = (gr * h / grid, (gr + 1) * h / grid);
        for gc in 0..grid {
            let (c0, c1) = (gc * w / grid, (gc + 1) * w / grid);
            let mut sums = vec![0u64; c];
            for r in r0..r1 {
                for col in c0..c1 {
                    for (s, &p) in sums.iter_mut().zip(img.pixel(r, col)) {
                        *s += p as u64;
                    }
                }
            }
            let count = ((r1 - r0) * (c1 - c0)) as f64;
            data.extend(sums.iter().map(|&s| S::of(s as f64 / count / 255.0)));
            data.push(S::of((gr as f64 + 0.5) / grid as f64));
            data.push(S::of((gc as f64 + 0.5) / grid as f64));
        }
    }
    FeatureSet::new(image_id, Tensor::matrix(grid * grid, d, data)?)
}
