use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::io::LabeledSet;
use crate::model::FeatureVector;

/// Radius of the sphere the class centers are drawn from.
pub const BLOB_RADIUS: f64 = 5.0;

/// Isotropic Gaussian clusters around seeded random centers on the
/// radius-5 sphere. Labels are the class indices as text.
pub fn make_blobs(
    classes: usize,
    per_class: usize,
    d: usize,
    sigma: f64,
    seed: u64,
) -> Result<LabeledSet> {
    if classes == 0 || per_class == 0 || d == 0 {
        return Err(Error::InvalidInput("blob counts must be >= 1".into()));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "sigma must be >= 0, got {sigma}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| loop {
            let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.into_iter().map(|x| BLOB_RADIUS * x / norm).collect();
            }
        })
        .collect();
    let mut set = LabeledSet::new();
    for (c, center) in centers.iter().enumerate() {
        let label = c.to_string();
        for _ in 0..per_class {
            let point = center
                .iter()
                .map(|&m| {
                    let z: f64 = rng.sample(StandardNormal);
                    m + sigma * z
                })
                .collect();
            set.push(FeatureVector::new(point)?, &label)?;
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;

    #[test]
    fn noiseless_points_sit_on_centers() {
        let set = make_blobs(3, 4, 5, 0.0, 7).unwrap();
        for i in 0..set.len() {
            let (v, label) = set.get(i);
            let first = set.vectors()[label.parse::<usize>().unwrap() * 4].clone();
            assert_eq!(v, &first);
            assert!((linalg::norm(v) - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn seeded_determinism() {
        assert_eq!(
            make_blobs(2, 10, 3, 0.5, 42).unwrap(),
            make_blobs(2, 10, 3, 0.5, 42).unwrap()
        );
        assert_ne!(
            make_blobs(2, 10, 3, 0.5, 42).unwrap(),
            make_blobs(2, 10, 3, 0.5, 43).unwrap()
        );
    }

    #[test]
    fn tight_blobs_are_far_apart() {
        let set = make_blobs(2, 50, 10, 0.1, 3).unwrap();
        let mut min = f64::INFINITY;
        for i in 0..set.len() {
            for j in 0..set.len() {
                if set.labels()[i] != set.labels()[j] {
                    let d = linalg::norm(&linalg::sub(&set.vectors()[i], &set.vectors()[j]));
                    min = min.min(d);
                }
            }
        }
        assert!(min > 1.0, "min inter-class distance {min}");
    }

    #[test]
    fn rejects_bad_counts() {
        assert!(make_blobs(0, 1, 1, 0.1, 0).is_err());
        assert!(make_blobs(1, 1, 1, -0.1, 0).is_err());
    }
}
