//! Non-deep baselines: nearest camera, training-set mean, most similar
//! training trajectory, and hand-crafted features with a small classifier.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::encoding::BoundingBox;
use crate::error::{Error, Result};
use crate::nn::{Activation, Dense, Sequential};
use crate::tensor::DenseTensor;

/// Symmetric `k × k` floor distances (meters) between cameras.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraDistanceMatrix {
    k: usize,
    d: Vec<f64>,
}

impl CameraDistanceMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if k == 0 || rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidInput("distance matrix must be square and non-empty".into()));
        }
        for i in 0..k {
            if rows[i][i] != 0.0 {
                return Err(Error::InvalidInput(format!("distance matrix diagonal {i} is not zero")));
            }
            for j in 0..k {
                let v = rows[i][j];
                if !(v >= 0.0 && v.is_finite()) || v != rows[j][i] {
                    return Err(Error::InvalidInput(format!(
                        "distance matrix entry ({i},{j}) is negative or asymmetric"
                    )));
                }
            }
        }
        Ok(Self { k, d: rows.into_iter().flatten().collect() })
    }

    pub fn cameras(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.k + j]
    }

    /// One whitespace-separated row per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for row in self.d.chunks(self.k) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(s, "{}", cells.join(" ")).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let rows = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| {
                l.split_whitespace()
                    .map(|v| {
                        v.parse::<f64>()
                            .map_err(|_| Error::Format(format!("distance file line {}: bad number {v:?}", n + 1)))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// `1 / (1 + d)` for every other camera; the departure camera scores 0.
pub fn shortest_distance_predict(matrix: &CameraDistanceMatrix, departure: usize) -> Result<Vec<f64>> {
    if departure >= matrix.cameras() {
        return Err(Error::InvalidInput(format!("camera {departure} out of range")));
    }
    Ok((0..matrix.cameras())
        .map(|i| if i == departure { 0.0 } else { 1.0 / (1.0 + matrix.get(departure, i)) })
        .collect())
}

fn mean_of(targets: &[&DenseTensor<f64>]) -> DenseTensor<f64> {
    let mut acc = DenseTensor::zeros(targets[0].shape());
    for t in targets {
        acc.data_mut().iter_mut().zip(t.data()).for_each(|(a, &v)| *a += v);
    }
    let n = targets.len() as f64;
    acc.map(|v| v / n)
}

/// Element-wise mean target per departure camera.
#[derive(Debug, Clone)]
pub struct MeanBaseline {
    per_camera: Vec<Option<DenseTensor<f64>>>,
    global: DenseTensor<f64>,
}

impl MeanBaseline {
    /// `samples` pairs a departure camera with its target.
    pub fn fit(cameras: usize, samples: &[(usize, &DenseTensor<f64>)]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("mean baseline needs at least one training sample".into()));
        }
        let shape = samples[0].1.shape();
        for (c, t) in samples {
            if *c >= cameras {
                return Err(Error::InvalidInput(format!("camera {c} out of range")));
            }
            t.expect_shape("mean baseline target", shape)?;
        }
        let all: Vec<_> = samples.iter().map(|(_, t)| *t).collect();
        let per_camera = (0..cameras)
            .map(|c| {
                let mine: Vec<_> = samples.iter().filter(|(s, _)| *s == c).map(|(_, t)| *t).collect();
                (!mine.is_empty()).then(|| mean_of(&mine))
            })
            .collect();
        Ok(Self { per_camera, global: mean_of(&all) })
    }

    pub fn has_camera(&self, camera: usize) -> bool {
        matches!(self.per_camera.get(camera), Some(Some(_)))
    }

    /// The camera's mean, or the global mean when the camera had no
    /// training samples.
    pub fn predict(&self, camera: usize) -> &DenseTensor<f64> {
        match self.per_camera.get(camera) {
            Some(Some(t)) => t,
            _ => &self.global,
        }
    }
}

/// Nearest training trajectory (flattened L2 over `n × 4`) per camera.
#[derive(Debug, Clone)]
pub struct MostSimilarBaseline {
    pools: Vec<Vec<(DenseTensor<f64>, DenseTensor<f64>)>>,
    fallback: MeanBaseline,
}

impl MostSimilarBaseline {
    /// `samples` are `(camera, track [n, 4], target)` triples.
    pub fn fit(cameras: usize, samples: &[(usize, &DenseTensor<f64>, &DenseTensor<f64>)]) -> Result<Self> {
        let pairs: Vec<_> = samples.iter().map(|(c, _, t)| (*c, *t)).collect();
        let fallback = MeanBaseline::fit(cameras, &pairs)?;
        let mut pools = vec![Vec::new(); cameras];
        for (c, track, target) in samples {
            pools[*c].push(((*track).clone(), (*target).clone()));
        }
        Ok(Self { pools, fallback })
    }

    /// Returns the neighbour's target and whether the mean fallback was
    /// used because the camera's pool is empty.
    pub fn predict(&self, camera: usize, query: &DenseTensor<f64>) -> Result<(&DenseTensor<f64>, bool)> {
        let pool = self
            .pools
            .get(camera)
            .ok_or_else(|| Error::InvalidInput(format!("camera {camera} out of range")))?;
        let mut best: Option<(f64, usize)> = None;
        for (i, (track, _)) in pool.iter().enumerate() {
            query.expect_shape("most-similar query", track.shape())?;
            let d: f64 = track.data().iter().zip(query.data()).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        Ok(match best {
            Some((_, i)) => (&pool[i].1, false),
            None => {
                log::info!("most-similar pool for camera {camera} is empty; using the mean baseline");
                (self.fallback.predict(camera), true)
            }
        })
    }
}

pub const HANDCRAFTED_LEN: usize = 10;

/// `[vx, vy, ax, ay, h, w, x1, y1, x2, y2]` from the present boxes of a
/// track. Velocities are mean first differences of box centres per
/// timestep, accelerations mean second differences; the box fields come
/// from the last present box.
pub fn handcrafted_extract(boxes: &[Option<BoundingBox>]) -> Result<[f64; HANDCRAFTED_LEN]> {
    let present: Vec<(f64, BoundingBox)> = boxes
        .iter()
        .enumerate()
        .filter_map(|(t, b)| b.map(|b| (t as f64, b)))
        .collect();
    if present.len() < 3 {
        return Err(Error::InsufficientHistory(present.len()));
    }
    let velocities: Vec<(f64, f64, f64)> = present
        .windows(2)
        .map(|w| {
            let (t0, b0) = w[0];
            let (t1, b1) = w[1];
            let (c0, c1) = (b0.center(), b1.center());
            let dt = t1 - t0;
            ((t0 + t1) / 2.0, (c1.0 - c0.0) / dt, (c1.1 - c0.1) / dt)
        })
        .collect();
    let accelerations: Vec<(f64, f64)> = velocities
        .windows(2)
        .map(|w| {
            let dt = w[1].0 - w[0].0;
            ((w[1].1 - w[0].1) / dt, (w[1].2 - w[0].2) / dt)
        })
        .collect();
    let mean = |it: &mut dyn Iterator<Item = f64>, n: usize| it.sum::<f64>() / n as f64;
    let vx = mean(&mut velocities.iter().map(|v| v.1), velocities.len());
    let vy = mean(&mut velocities.iter().map(|v| v.2), velocities.len());
    let ax = mean(&mut accelerations.iter().map(|a| a.0), accelerations.len());
    let ay = mean(&mut accelerations.iter().map(|a| a.1), accelerations.len());
    let last = present.last().unwrap().1;
    Ok([vx, vy, ax, ay, last.height(), last.width(), last.x1, last.y1, last.x2, last.y2])
}

/// `10 → hidden → outputs` classifier with sigmoid outputs.
pub fn handcrafted_classifier<R: Rng + ?Sized>(hidden: usize, outputs: usize, rng: &mut R) -> Sequential<f64> {
    let mut net = Sequential::new();
    net.push("fc1", Dense::new(HANDCRAFTED_LEN, hidden, rng))
        .push("relu", Activation::Relu)
        .push("fc2", Dense::new(hidden, outputs, rng))
        .push("sigmoid", Activation::Sigmoid);
    net
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix3() -> CameraDistanceMatrix {
        CameraDistanceMatrix::new(vec![vec![0.0, 5.0, 10.0], vec![5.0, 0.0, 7.0], vec![10.0, 7.0, 0.0]]).unwrap()
    }

    fn t(v: &[f64]) -> DenseTensor<f64> {
        DenseTensor::new(&[v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn shortest_distance_scores() {
        let s = shortest_distance_predict(&matrix3(), 0).unwrap();
        assert_eq!(s, vec![0.0, 1.0 / 6.0, 1.0 / 11.0]);
        let tie = CameraDistanceMatrix::new(vec![vec![0.0, 3.0, 3.0], vec![3.0, 0.0, 1.0], vec![3.0, 1.0, 0.0]]).unwrap();
        let s = shortest_distance_predict(&tie, 0).unwrap();
        assert_eq!(s[1], s[2]);
        let two = CameraDistanceMatrix::new(vec![vec![0.0, 9.0], vec![9.0, 0.0]]).unwrap();
        assert!(shortest_distance_predict(&two, 1).unwrap()[0] > 0.0);
        assert!(shortest_distance_predict(&two, 2).is_err());
    }

    #[test]
    fn distance_matrix_text_round_trip_and_validation() {
        let m = matrix3();
        assert_eq!(CameraDistanceMatrix::from_text(&m.to_text()).unwrap(), m);
        assert!(CameraDistanceMatrix::new(vec![vec![0.0, 1.0], vec![2.0, 0.0]]).is_err());
        assert!(CameraDistanceMatrix::new(vec![vec![1.0]]).is_err());
    }

    #[test]
    fn mean_baseline() {
        let (a, b) = (t(&[1.0, 0.0, 0.0]), t(&[0.0, 1.0, 0.0]));
        let m = MeanBaseline::fit(2, &[(0, &a), (0, &b)]).unwrap();
        assert_eq!(m.predict(0).data(), &[0.5, 0.5, 0.0]);
        // camera 1 has no samples: global mean.
        assert!(!m.has_camera(1));
        assert_eq!(m.predict(1).data(), &[0.5, 0.5, 0.0]);
        let single = MeanBaseline::fit(1, &[(0, &a)]).unwrap();
        assert_eq!(single.predict(0), &a);
        assert!(MeanBaseline::fit(1, &[]).is_err());
    }

    #[test]
    fn most_similar_ties_and_fallback() {
        let q = DenseTensor::new(&[1, 4], vec![0.5; 4]).unwrap();
        let lo = DenseTensor::new(&[1, 4], vec![0.4; 4]).unwrap();
        let hi = DenseTensor::new(&[1, 4], vec![0.6; 4]).unwrap();
        let (ya, yb) = (t(&[1.0, 0.0]), t(&[0.0, 1.0]));
        let m = MostSimilarBaseline::fit(2, &[(0, &hi, &ya), (0, &lo, &yb)]).unwrap();
        let exact = MostSimilarBaseline::fit(2, &[(0, &lo, &ya), (0, &lo, &yb)]).unwrap();
        assert_eq!(exact.predict(0, &q).unwrap().0, &ya);
        assert_eq!(m.predict(0, &hi).unwrap().0, &ya);
        let (y, fell_back) = m.predict(1, &q).unwrap();
        assert!(fell_back);
        assert_eq!(y.data(), &[0.5, 0.5]);
    }

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> Option<BoundingBox> {
        Some(BoundingBox::new(x1, y1, x2, y2).unwrap())
    }

    #[test]
    fn handcrafted_examples() {
        let still = vec![bx(0.1, 0.2, 0.3, 0.6); 5];
        let f = handcrafted_extract(&still).unwrap();
        assert_eq!(&f[..4], &[0.0; 4]);
        assert!((f[4] - 0.4).abs() < 1e-15 && (f[5] - 0.2).abs() < 1e-15);
        assert_eq!(&f[6..], &[0.1, 0.2, 0.3, 0.6]);

        let moving: Vec<_> = (0..6).map(|i| bx(0.1 + 0.01 * i as f64, 0.2, 0.2 + 0.01 * i as f64, 0.4)).collect();
        let f = handcrafted_extract(&moving).unwrap();
        assert!((f[0] - 0.01).abs() < 1e-12 && f[1].abs() < 1e-12);
        assert!(f[2].abs() < 1e-12 && f[3].abs() < 1e-12);

        let short = vec![bx(0.1, 0.2, 0.3, 0.6), None, bx(0.1, 0.2, 0.3, 0.6)];
        assert!(matches!(handcrafted_extract(&short), Err(Error::InsufficientHistory(2))));
    }

    proptest! {
        #[test]
        fn handcrafted_is_translation_covariant(
            xs in proptest::collection::vec(0.2f64..0.6, 4..10),
            dx in -0.1f64..0.1,
            dy in -0.1f64..0.1,
        ) {
            let track: Vec<_> = xs.iter().map(|&x| bx(x, x * 0.5, x + 0.1, x * 0.5 + 0.2)).collect();
            let shifted: Vec<_> = xs.iter().map(|&x| bx(x + dx, x * 0.5 + dy, x + 0.1 + dx, x * 0.5 + 0.2 + dy)).collect();
            let a = handcrafted_extract(&track).unwrap();
            let b = handcrafted_extract(&shifted).unwrap();
            for i in 0..4 {
                prop_assert!((a[i] - b[i]).abs() < 1e-9);
            }
            for (i, d) in [(6, dx), (7, dy), (8, dx), (9, dy)] {
                prop_assert!((b[i] - a[i] - d).abs() < 1e-9);
            }
        }

        #[test]
        fn mean_is_permutation_invariant(labels in proptest::collection::vec(proptest::collection::vec(0u8..2, 3), 1..8)) {
            let ts: Vec<DenseTensor<f64>> = labels.iter().map(|l| t(&l.iter().map(|&v| v as f64).collect::<Vec<_>>())).collect();
            let fwd: Vec<_> = ts.iter().map(|x| (0usize, x)).collect();
            let rev: Vec<_> = ts.iter().rev().map(|x| (0usize, x)).collect();
            let a = MeanBaseline::fit(1, &fwd).unwrap();
            let b = MeanBaseline::fit(1, &rev).unwrap();
            for (x, y) in a.predict(0).data().iter().zip(b.predict(0).data()) {
                prop_assert!((x - y).abs() < 1e-12 && (0.0..=1.0).contains(x));
            }
        }
    }
}
