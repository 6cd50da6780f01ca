use super::align::{AlignedGroup, FEATURES_PER_SAMPLE};
use super::SensorError;
use crate::nn::SequenceDataset;
use ndarray::{s, Array1, Array2, Array3, Axis};
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// Aligned samples of one recording as a feature matrix, in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRows {
    pub rows: Array2<f64>,
    pub angles: Vec<f64>,
    /// Row index of the first sample of every non-empty camera frame.
    pub frame_starts: Vec<usize>,
}

impl FeatureRows {
    pub fn from_groups(groups: &[AlignedGroup]) -> Self {
        let n: usize = groups.iter().map(|g| g.samples.len()).sum();
        let mut rows = Array2::zeros((n, FEATURES_PER_SAMPLE));
        let mut angles = Vec::with_capacity(n);
        let mut frame_starts = Vec::new();
        let mut r = 0;
        for g in groups {
            if !g.samples.is_empty() {
                frame_starts.push(r);
            }
            for s in &g.samples {
                rows.row_mut(r).assign(&Array1::from(s.features().to_vec()));
                angles.push(s.angle);
                r += 1;
            }
        }
        Self { rows, angles, frame_starts }
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

/// Per-feature mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Features with zero variance; they are only centred.
    pub zero_variance: Vec<usize>,
}

impl Standardizer {
    pub fn fit(x: &Array2<f64>) -> Result<Self, SensorError> {
        if x.nrows() == 0 {
            return Err(SensorError::TooShort { needed: 1, got: 0 });
        }
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let std = x.std_axis(Axis(0), 0.0);
        let mut zero_variance = Vec::new();
        let std: Vec<f64> = std
            .iter()
            .enumerate()
            .map(|(j, &s)| {
                if s > 0.0 {
                    s
                } else {
                    zero_variance.push(j);
                    1.0
                }
            })
            .collect();
        if !zero_variance.is_empty() {
            log::warn!("zero-variance features {zero_variance:?} left centred");
        }
        Ok(Self { mean: mean.to_vec(), std, zero_variance })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        out
    }

    pub fn transform_in_place(&self, x: &mut Array3<f64>) {
        for mut lane in x.lanes_mut(Axis(2)) {
            for (j, v) in lane.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
    }
}

/// Standardizes `data` with statistics taken from `train_rows` only.
pub fn standardize(data: &Array2<f64>, train_rows: &[usize]) -> Result<(Array2<f64>, Standardizer), SensorError> {
    let stats = Standardizer::fit(&data.select(Axis(0), train_rows))?;
    Ok((stats.transform(data), stats))
}

/// Sliding windows of consecutive feature rows; each target is the angle at
/// the window's final row.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowDataset {
    pub window_size: usize,
    /// `(windows, window_size, features)`.
    pub x: Array3<f64>,
    pub y: Vec<f64>,
    /// Source row index of each window's final row.
    pub end_rows: Vec<usize>,
    pub normalization: Option<Standardizer>,
}

/// Every window of `w` consecutive rows: `n - w + 1` of them.
pub fn build_windows(rows: &Array2<f64>, targets: &[f64], w: usize) -> Result<WindowDataset, SensorError> {
    let ends: Vec<usize> = (w.saturating_sub(1)..rows.nrows()).collect();
    build_windows_at(rows, targets, &ends, w)
}

/// Windows ending at the given rows. Ends without `w - 1` rows of history are
/// dropped.
pub fn build_windows_at(rows: &Array2<f64>, targets: &[f64], ends: &[usize], w: usize) -> Result<WindowDataset, SensorError> {
    if w == 0 {
        return Err(SensorError::TooShort { needed: 1, got: 0 });
    }
    if rows.nrows() != targets.len() {
        return Err(SensorError::InvalidStream(format!("{} rows but {} targets", rows.nrows(), targets.len())));
    }
    if rows.nrows() < w {
        return Err(SensorError::TooShort { needed: w, got: rows.nrows() });
    }
    let ends: Vec<usize> = ends.iter().copied().filter(|&e| e + 1 >= w && e < rows.nrows()).collect();
    let f = rows.ncols();
    let mut x = Array3::zeros((ends.len(), w, f));
    for (i, &e) in ends.iter().enumerate() {
        x.slice_mut(s![i, .., ..]).assign(&rows.slice(s![e + 1 - w..=e, ..]));
    }
    let y = ends.iter().map(|&e| targets[e]).collect();
    Ok(WindowDataset { window_size: w, x, y, end_rows: ends, normalization: None })
}

impl WindowDataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn features(&self) -> usize {
        self.x.shape()[2]
    }

    /// Concatenates datasets with equal window size in the given order.
    pub fn concat(parts: &[WindowDataset]) -> Result<Self, SensorError> {
        let first = parts.first().ok_or(SensorError::TooShort { needed: 1, got: 0 })?;
        if parts.iter().any(|p| p.window_size != first.window_size || p.features() != first.features()) {
            return Err(SensorError::InvalidStream("window shapes differ".into()));
        }
        let views: Vec<_> = parts.iter().map(|p| p.x.view()).collect();
        let x = ndarray::concatenate(Axis(0), &views).map_err(|e| SensorError::InvalidStream(e.to_string()))?;
        Ok(Self {
            window_size: first.window_size,
            x,
            y: parts.iter().flat_map(|p| p.y.iter().copied()).collect(),
            end_rows: parts.iter().flat_map(|p| p.end_rows.iter().copied()).collect(),
            normalization: None,
        })
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            window_size: self.window_size,
            x: self.x.select(Axis(0), idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            end_rows: idx.iter().map(|&i| self.end_rows[i]).collect(),
            normalization: self.normalization.clone(),
        }
    }

    /// Statistics from the final row of each listed window, so that every
    /// source row counts once.
    pub fn fit_standardizer(&self, idx: &[usize]) -> Result<Standardizer, SensorError> {
        let last = self.x.index_axis(Axis(1), self.window_size - 1);
        Standardizer::fit(&last.select(Axis(0), idx))
    }

    pub fn standardized(&self, stats: &Standardizer) -> Self {
        let mut out = self.clone();
        stats.transform_in_place(&mut out.x);
        out.normalization = Some(stats.clone());
        out
    }

    /// One row per window: `window_size * features` columns, oldest first.
    pub fn flattened(&self) -> Array2<f64> {
        let (n, w, f) = self.x.dim();
        self.x.as_standard_layout().into_owned().into_shape_with_order((n, w * f)).expect("contiguous")
    }

    pub fn to_sequence_dataset(&self) -> SequenceDataset {
        let y = Array2::from_shape_vec((self.len(), 1), self.y.clone()).expect("one target per window");
        SequenceDataset::new(self.x.clone(), y).expect("matching lengths")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollingSplit {
    pub train: Range<usize>,
    pub validation: Range<usize>,
}

/// `k` contiguous chronological folds; split `i` trains on folds `0..=i` and
/// validates on fold `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub folds: Vec<Range<usize>>,
    pub splits: Vec<RollingSplit>,
}

pub fn rolling_folds(n: usize, k: usize) -> Result<FoldSplit, SensorError> {
    if k < 2 {
        return Err(SensorError::InvalidFolds(format!("need k >= 2, got {k}")));
    }
    if n < k {
        return Err(SensorError::InvalidFolds(format!("{n} windows cannot fill {k} folds")));
    }
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = n / k + usize::from(i < n % k);
        folds.push(start..start + len);
        start += len;
    }
    let splits =
        (0..k - 1).map(|i| RollingSplit { train: 0..folds[i].end, validation: folds[i + 1].clone() }).collect();
    Ok(FoldSplit { folds, splits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn ramp(n: usize, f: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, f), |(i, j)| (i * 10 + j) as f64)
    }

    #[test]
    fn standardize_examples() {
        let (z, st) = standardize(&array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]], &[0, 1, 2]).unwrap();
        let s = (2.0f64 / 3.0).sqrt();
        for (got, want) in z.column(0).iter().zip([-1.0 / s, 0.0, 1.0 / s]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((z[[0, 0]] + 1.2247).abs() < 1e-4);
        assert!(z.column(1).iter().all(|&v| v == 0.0));
        assert_eq!(st.zero_variance, vec![1]);
    }

    #[test]
    fn stats_come_from_training_rows_only() {
        let data = array![[0.0], [1.0], [2.0], [100.0], [200.0]];
        let (_, train) = standardize(&data, &[0, 1, 2]).unwrap();
        let (_, all) = standardize(&data, &[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(train.mean, vec![1.0]);
        assert_ne!(train.mean, all.mean);
    }

    #[test]
    fn window_counts_and_contents() {
        let rows = ramp(10, 2);
        let t: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(build_windows(&rows, &t, 1).unwrap().len(), 10);
        let d = build_windows(&rows, &t, 5).unwrap();
        assert_eq!(d.len(), 6);
        for (k, &e) in d.end_rows.iter().enumerate() {
            assert_eq!(d.y[k], e as f64);
            for s in 0..5 {
                assert_eq!(d.x[[k, s, 0]], ((e + 1 - 5 + s) * 10) as f64);
            }
        }
        assert!(matches!(build_windows(&rows, &t, 11), Err(SensorError::TooShort { .. })));
        let flat = d.flattened();
        assert_eq!(flat.row(0).to_vec(), vec![0.0, 1.0, 10.0, 11.0, 20.0, 21.0, 30.0, 31.0, 40.0, 41.0]);
    }

    #[test]
    fn anchored_windows_drop_short_history() {
        let rows = ramp(10, 1);
        let t: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let d = build_windows_at(&rows, &t, &[1, 4, 9], 3).unwrap();
        assert_eq!(d.end_rows, vec![4, 9]);
    }

    #[test]
    fn fold_arithmetic() {
        let f = rolling_folds(100, 4).unwrap();
        assert!(f.folds.iter().all(|r| r.len() == 25));
        assert_eq!(f.splits[0], RollingSplit { train: 0..25, validation: 25..50 });
        assert!(rolling_folds(10, 1).is_err());
    }

    proptest! {
        #[test]
        fn folds_are_chronological_and_cover_once(n in 2usize..500, k in 2usize..8) {
            prop_assume!(n >= k);
            let f = rolling_folds(n, k).unwrap();
            let mut seen = vec![0usize; n];
            for s in &f.splits {
                prop_assert!(s.validation.start >= s.train.end);
                for i in s.validation.clone() {
                    seen[i] += 1;
                }
            }
            // validation folds cover folds 2..k exactly once
            for (i, c) in seen.iter().enumerate() {
                prop_assert_eq!(*c, usize::from(i >= f.folds[0].end));
            }
        }

        #[test]
        fn standardized_training_moments(data in prop::collection::vec(-50.0..50.0f64, 6..60)) {
            let n = data.len() / 2;
            let m = Array2::from_shape_vec((n, 2), data[..2 * n].to_vec()).unwrap();
            let idx: Vec<usize> = (0..n).collect();
            let (z, st) = standardize(&m, &idx).unwrap();
            for j in 0..2 {
                let col = z.column(j);
                let mean = col.sum() / n as f64;
                prop_assert!(mean.abs() < 1e-9);
                if !st.zero_variance.contains(&j) {
                    let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
                    prop_assert!((sd - 1.0).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn windowing_is_pure(n in 5usize..40, w in 1usize..5, seed in 0u64..1000) {
            let rows = Array2::from_shape_fn((n, 3), |(i, j)| ((i as u64 * 31 + j as u64 * 7 + seed) % 97) as f64);
            let t: Vec<f64> = (0..n).map(|i| i as f64 * 0.5).collect();
            let a = build_windows(&rows, &t, w).unwrap();
            let mut perm: Vec<usize> = (0..n).rev().collect();
            perm.rotate_left((seed as usize) % n);
            let shuffled = rows.select(Axis(0), &perm);
            let mut restore = vec![0; n];
            for (k, &p) in perm.iter().enumerate() {
                restore[p] = k;
            }
            let back = shuffled.select(Axis(0), &restore);
            prop_assert_eq!(a, build_windows(&back, &t, w).unwrap());
        }
    }
}
