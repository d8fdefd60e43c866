//! Digit-image preparation: seeded splits, deskewing and shifted test sets.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{deskew, RasterImage, TangentSpec};
use crate::io::{read_idx_images, read_idx_labels, LabeledSet};

/// Width and height of MNIST digits.
pub const MNIST_SHAPE: (usize, usize) = (28, 28);

/// Images with their byte labels, as stored in an IDX pair.
#[derive(Debug, Clone)]
pub struct ImagePool {
    pub images: Vec<RasterImage>,
    pub labels: Vec<u8>,
}

impl ImagePool {
    pub fn load(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Self> {
        let pool = ImagePool {
            images: read_idx_images(images)?,
            labels: read_idx_labels(labels)?,
        };
        if pool.images.len() != pool.labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} images but {} labels",
                pool.images.len(),
                pool.labels.len()
            )));
        }
        Ok(pool)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        self.images.first().map(|i| (i.width(), i.height()))
    }

    /// The listed images as a labeled set, optionally deskewed. Blank images
    /// are kept as they are.
    pub fn to_set(&self, indices: &[usize], deskewed: bool) -> Result<LabeledSet> {
        let mut set = LabeledSet::new();
        for &i in indices {
            let img = &self.images[i];
            let img = if deskewed {
                match deskew(img) {
                    Err(Error::BlankImage) => img.clone(),
                    other => other?,
                }
            } else {
                img.clone()
            };
            set.push(img.to_feature(), &self.labels[i].to_string())?;
        }
        Ok(set)
    }
}

/// Disjoint seeded train and test index lists drawn from `0..total`.
pub fn seeded_split(
    total: usize,
    train: usize,
    test: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if train + test > total {
        return Err(Error::InvalidInput(format!(
            "cannot draw {train} + {test} items from {total}"
        )));
    }
    let mut idx: Vec<usize> = (0..total).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test_idx = idx[train..train + test].to_vec();
    idx.truncate(train);
    Ok((idx, test_idx))
}

/// The deskewed train/test split used for the digit experiments.
pub fn desk_scale_split(
    pool: &ImagePool,
    train: usize,
    test: usize,
    seed: u64,
) -> Result<(LabeledSet, LabeledSet)> {
    let (a, b) = seeded_split(pool.len(), train, test, seed)?;
    Ok((pool.to_set(&a, true)?, pool.to_set(&b, true)?))
}

/// Replaces every vector by one transformation of it, drawn uniformly from
/// `spec` with a seeded stream per item.
pub fn shift_augment(
    set: &LabeledSet,
    shape: (usize, usize),
    spec: &TangentSpec,
    seed: u64,
) -> Result<LabeledSet> {
    let t = spec.transforms();
    if t.is_empty() {
        return Err(Error::InvalidConfig(
            "augmentation needs at least one transformation".into(),
        ));
    }
    let mut i = 0u64;
    set.map_vectors(|v| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i);
        i += 1;
        let img = RasterImage::from_feature(shape.0, shape.1, v)?;
        Ok(t[rng.random_range(0..t.len())].apply(&img)?.to_feature())
    })
}
