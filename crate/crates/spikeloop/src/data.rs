//! Dataset ingestion, normalization, splitting and Poisson spike encoding.
//!
//! The input file follows the UCI `wdbc.data` layout: one sample per line,
//! comma-separated, 32 fields (id, diagnosis letter M/B, 30 real features).
//! Diagnosis M maps to class 1 ("has cancer"), B to class 0.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Field count of one `wdbc.data` row: id, diagnosis, 30 features.
const WDBC_FIELDS: usize = 32;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected {expected} comma-separated fields, found {found}")]
    FieldCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: invalid diagnosis {value:?} (expected M or B)")]
    BadDiagnosis { line: usize, value: String },
    #[error("line {line}: non-numeric feature {value:?}")]
    BadFeature { line: usize, value: String },
    #[error("line {line}: negative feature value {value}")]
    NegativeFeature { line: usize, value: f64 },
    #[error("sample {index} has no strictly positive entry, cannot normalize")]
    DegenerateSample { index: usize },
    #[error("train fraction must be in (0, 1), got {0}")]
    BadTrainFraction(f64),
    #[error("feature value {value} at sample {sample} outside [0, 1], cannot encode")]
    ValueOutOfRange { sample: usize, value: f64 },
    #[error("requested train subset of {requested} exceeds available {available}")]
    SubsetTooLarge { requested: usize, available: usize },
    #[error("requested train subset is empty")]
    EmptySubset,
}

/// Feature matrix with class labels, in row-major sample order.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Vec<f64>,
    n_features: usize,
    labels: Vec<u8>,
    sample_ids: Vec<String>,
}

impl Dataset {
    pub fn new(features: Vec<f64>, n_features: usize, labels: Vec<u8>, sample_ids: Vec<String>) -> Self {
        assert_eq!(features.len(), labels.len() * n_features);
        assert_eq!(labels.len(), sample_ids.len());
        Dataset {
            features,
            n_features,
            labels,
            sample_ids,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }
}

/// Poisson-encoded dataset: binary spikes over `t_bins` time bins per
/// feature per sample, row-major `(sample, feature, bin)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTrainBatch {
    spikes: Vec<u8>,
    n_samples: usize,
    n_features: usize,
    t_bins: usize,
}

impl SpikeTrainBatch {
    pub fn from_raw(spikes: Vec<u8>, n_samples: usize, n_features: usize, t_bins: usize) -> Self {
        assert_eq!(spikes.len(), n_samples * n_features * t_bins);
        assert!(spikes.iter().all(|&s| s <= 1));
        SpikeTrainBatch {
            spikes,
            n_samples,
            n_features,
            t_bins,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn t_bins(&self) -> usize {
        self.t_bins
    }

    /// Spike block of one sample: `n_features * t_bins` entries, bin-minor.
    pub fn sample(&self, i: usize) -> &[u8] {
        let stride = self.n_features * self.t_bins;
        &self.spikes[i * stride..(i + 1) * stride]
    }

    pub fn spike(&self, sample: usize, feature: usize, bin: usize) -> u8 {
        self.spikes[(sample * self.n_features + feature) * self.t_bins + bin]
    }

    /// New batch containing the given samples, in the given order.
    pub fn gather(&self, indices: &[usize]) -> SpikeTrainBatch {
        let stride = self.n_features * self.t_bins;
        let mut spikes = Vec::with_capacity(indices.len() * stride);
        for &i in indices {
            spikes.extend_from_slice(self.sample(i));
        }
        SpikeTrainBatch {
            spikes,
            n_samples: indices.len(),
            n_features: self.n_features,
            t_bins: self.t_bins,
        }
    }
}

/// Train/test index partition produced by [`split`].
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
    pub train_fraction: f64,
}

/// Parse a UCI-layout `wdbc.data` file.
pub fn load_wbc(path: &Path) -> Result<Dataset, DataError> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut sample_ids = Vec::new();
    for (idx, row) in text.lines().enumerate() {
        let line = idx + 1;
        if row.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != WDBC_FIELDS {
            return Err(DataError::FieldCount {
                line,
                expected: WDBC_FIELDS,
                found: fields.len(),
            });
        }
        sample_ids.push(fields[0].to_string());
        labels.push(match fields[1] {
            "M" => 1,
            "B" => 0,
            other => {
                return Err(DataError::BadDiagnosis {
                    line,
                    value: other.to_string(),
                })
            }
        });
        for field in &fields[2..] {
            let value: f64 = field.trim().parse().map_err(|_| DataError::BadFeature {
                line,
                value: field.to_string(),
            })?;
            if value < 0.0 {
                return Err(DataError::NegativeFeature { line, value });
            }
            features.push(value);
        }
    }
    Ok(Dataset::new(features, 30, labels, sample_ids))
}

/// Divide each sample vector by its own maximum entry.
pub fn normalize_per_sample(d: &Dataset) -> Result<Dataset, DataError> {
    let mut normalized = d.clone();
    for i in 0..d.n_samples() {
        let row = d.sample(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(max > 0.0) {
            return Err(DataError::DegenerateSample { index: i });
        }
        let out = &mut normalized.features[i * d.n_features..(i + 1) * d.n_features];
        for v in out.iter_mut() {
            *v /= max;
        }
    }
    Ok(normalized)
}

/// Scale each feature column by its maximum over the dataset.
pub fn normalize_per_feature(d: &Dataset) -> Result<Dataset, DataError> {
    let f = d.n_features;
    let mut col_max = vec![f64::NEG_INFINITY; f];
    for i in 0..d.n_samples() {
        for (j, &v) in d.sample(i).iter().enumerate() {
            col_max[j] = col_max[j].max(v);
        }
    }
    if let Some(j) = col_max.iter().position(|&m| !(m > 0.0)) {
        return Err(DataError::DegenerateSample { index: j });
    }
    let mut normalized = d.clone();
    for i in 0..d.n_samples() {
        let out = &mut normalized.features[i * f..(i + 1) * f];
        for (j, v) in out.iter_mut().enumerate() {
            *v /= col_max[j];
        }
    }
    Ok(normalized)
}

/// Uniformly random train/test split. `|train| = round(train_fraction * N)`.
pub fn split(d: &Dataset, train_fraction: f64, seed: u64) -> Result<SplitSpec, DataError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::BadTrainFraction(train_fraction));
    }
    let n = d.n_samples();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let n_train = (train_fraction * n as f64).round() as usize;
    let test_indices = indices.split_off(n_train);
    Ok(SplitSpec {
        train_indices: indices,
        test_indices,
        seed,
        train_fraction,
    })
}

/// Bernoulli-encode every feature value into `t_bins` independent spike bins.
pub fn poisson_encode(d: &Dataset, t_bins: usize, seed: u64) -> Result<SpikeTrainBatch, DataError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spikes = Vec::with_capacity(d.n_samples() * d.n_features * t_bins);
    for i in 0..d.n_samples() {
        for &x in d.sample(i) {
            if !(0.0..=1.0).contains(&x) {
                return Err(DataError::ValueOutOfRange { sample: i, value: x });
            }
            for _ in 0..t_bins {
                spikes.push(u8::from(rng.random::<f64>() < x));
            }
        }
    }
    Ok(SpikeTrainBatch {
        spikes,
        n_samples: d.n_samples(),
        n_features: d.n_features,
        t_bins,
    })
}

/// Class-stratified subsample of the train indices; the test set is kept.
///
/// Class counts are preserved as closely as integer rounding allows. With
/// `m` equal to the current train size the split is returned unchanged.
pub fn subsample_train(
    s: &SplitSpec,
    labels: &[u8],
    m: usize,
    seed: u64,
) -> Result<SplitSpec, DataError> {
    let available = s.train_indices.len();
    if m == 0 {
        return Err(DataError::EmptySubset);
    }
    if m > available {
        return Err(DataError::SubsetTooLarge {
            requested: m,
            available,
        });
    }
    if m == available {
        return Ok(s.clone());
    }
    let class1: Vec<usize> = s
        .train_indices
        .iter()
        .cloned()
        .filter(|&i| labels[i] == 1)
        .collect();
    let class0: Vec<usize> = s
        .train_indices
        .iter()
        .cloned()
        .filter(|&i| labels[i] == 0)
        .collect();
    let mut m1 = ((m as f64) * (class1.len() as f64) / (available as f64)).round() as usize;
    m1 = m1.clamp(m.saturating_sub(class0.len()), class1.len().min(m));
    let m0 = m - m1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = |pool: &[usize], k: usize, rng: &mut ChaCha8Rng| -> Vec<usize> {
        let mut shuffled = pool.to_vec();
        shuffled.shuffle(rng);
        shuffled.truncate(k);
        shuffled
    };
    let mut train_indices = pick(&class1, m1, &mut rng);
    train_indices.extend(pick(&class0, m0, &mut rng));
    Ok(SplitSpec {
        train_indices,
        test_indices: s.test_indices.clone(),
        seed,
        train_fraction: s.train_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn toy_dataset(rows: &[(&str, u8, [f64; 3])]) -> Dataset {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut ids = Vec::new();
        for (id, label, f) in rows {
            ids.push(id.to_string());
            labels.push(*label);
            features.extend_from_slice(f);
        }
        Dataset::new(features, 3, labels, ids)
    }

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn wdbc_row(id: &str, diag: &str) -> String {
        let feats: Vec<String> = (0..30).map(|i| format!("{}.5", i + 1)).collect();
        format!("{id},{diag},{}", feats.join(","))
    }

    #[test]
    fn load_two_row_toy_file() {
        let content = format!("{}\n{}\n", wdbc_row("1", "M"), wdbc_row("2", "B"));
        let f = write_temp(&content);
        let d = load_wbc(f.path()).unwrap();
        assert_eq!(d.n_samples(), 2);
        assert_eq!(d.labels(), &[1, 0]);
        assert_eq!(d.sample_ids(), &["1".to_string(), "2".to_string()]);
    }

    #[test]
    fn load_rejects_short_row() {
        let content = format!("{}\n1,2,3,4,5,6,7,8,9,10\n", wdbc_row("1", "M"));
        let f = write_temp(&content);
        match load_wbc(f.path()) {
            Err(DataError::FieldCount { line, found, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(found, 10);
            }
            other => panic!("expected field-count error, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_non_numeric_feature() {
        let mut row = wdbc_row("1", "B");
        row = row.replace("3.5", "abc");
        let f = write_temp(&format!("{row}\n"));
        assert!(matches!(
            load_wbc(f.path()),
            Err(DataError::BadFeature { line: 1, .. })
        ));
    }

    #[test]
    fn load_missing_file_is_io_error() {
        assert!(matches!(
            load_wbc(Path::new("/nonexistent/wdbc.data")),
            Err(DataError::Io { .. })
        ));
    }

    #[test]
    fn normalize_divides_by_sample_max() {
        let d = toy_dataset(&[("a", 0, [2.0, 4.0, 8.0])]);
        let n = normalize_per_sample(&d).unwrap();
        assert_eq!(n.sample(0), &[0.25, 0.5, 1.0]);
    }

    #[test]
    fn normalize_uniform_sample_is_identity() {
        let d = toy_dataset(&[("a", 0, [1.0, 1.0, 1.0])]);
        let n = normalize_per_sample(&d).unwrap();
        assert_eq!(n.sample(0), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn normalize_rejects_all_zero_sample() {
        let d = toy_dataset(&[("a", 0, [1.0, 2.0, 3.0]), ("b", 1, [0.0, 0.0, 0.0])]);
        assert!(matches!(
            normalize_per_sample(&d),
            Err(DataError::DegenerateSample { index: 1 })
        ));
    }

    #[test]
    fn normalize_is_idempotent() {
        let d = toy_dataset(&[("a", 0, [2.0, 4.0, 8.0]), ("b", 1, [1.0, 3.0, 9.0])]);
        let once = normalize_per_sample(&d).unwrap();
        let twice = normalize_per_sample(&once).unwrap();
        assert_eq!(once.features, twice.features);
    }

    #[test]
    fn per_feature_normalization_scales_columns() {
        let d = toy_dataset(&[("a", 0, [2.0, 1.0, 5.0]), ("b", 1, [4.0, 2.0, 10.0])]);
        let n = normalize_per_feature(&d).unwrap();
        assert_eq!(n.sample(0), &[0.5, 0.5, 0.5]);
        assert_eq!(n.sample(1), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn split_sizes_match_rounded_fraction() {
        let rows: Vec<(&str, u8, [f64; 3])> = (0..569).map(|_| ("x", 0u8, [1.0, 2.0, 3.0])).collect();
        let d = toy_dataset(&rows);
        let s = split(&d, 0.8, 7).unwrap();
        assert_eq!(s.train_indices.len(), 455);
        assert_eq!(s.test_indices.len(), 114);
    }

    #[test]
    fn split_is_deterministic() {
        let rows: Vec<(&str, u8, [f64; 3])> = (0..50).map(|_| ("x", 0u8, [1.0, 2.0, 3.0])).collect();
        let d = toy_dataset(&rows);
        assert_eq!(split(&d, 0.8, 42).unwrap(), split(&d, 0.8, 42).unwrap());
    }

    #[test]
    fn split_rejects_fraction_one() {
        let d = toy_dataset(&[("a", 0, [1.0, 1.0, 1.0])]);
        assert!(matches!(
            split(&d, 1.0, 0),
            Err(DataError::BadTrainFraction(_))
        ));
    }

    #[test]
    fn encode_extremes() {
        let d = toy_dataset(&[("a", 0, [0.0, 1.0, 0.5])]);
        let b = poisson_encode(&d, 10, 3).unwrap();
        assert!((0..10).all(|t| b.spike(0, 0, t) == 0));
        assert!((0..10).all(|t| b.spike(0, 1, t) == 1));
    }

    #[test]
    fn encode_rejects_out_of_range() {
        let d = toy_dataset(&[("a", 0, [0.0, 1.5, 0.5])]);
        assert!(matches!(
            poisson_encode(&d, 10, 3),
            Err(DataError::ValueOutOfRange { sample: 0, .. })
        ));
    }

    #[test]
    fn encode_empirical_rate_converges() {
        // Law-of-large-numbers check: |rate - x| < 4 sqrt(x(1-x)/B) at B = 1e4.
        let b_bins = 10_000;
        for &x in &[0.1, 0.5, 0.9] {
            let d = toy_dataset(&[("a", 0, [x, x, x])]);
            let batch = poisson_encode(&d, b_bins, 99).unwrap();
            let count: u32 = (0..b_bins).map(|t| u32::from(batch.spike(0, 0, t))).sum();
            let rate = f64::from(count) / b_bins as f64;
            let bound = 4.0 * (x * (1.0 - x) / b_bins as f64).sqrt();
            assert!(
                (rate - x).abs() < bound,
                "rate {rate} vs x {x} exceeds bound {bound}"
            );
        }
    }

    #[test]
    fn subsample_identity_when_m_equals_train_size() {
        let rows: Vec<(&str, u8, [f64; 3])> =
            (0..40).map(|i| ("x", (i % 2) as u8, [1.0, 2.0, 3.0])).collect();
        let d = toy_dataset(&rows);
        let s = split(&d, 0.8, 1).unwrap();
        let sub = subsample_train(&s, d.labels(), s.train_indices.len(), 9).unwrap();
        assert_eq!(sub, s);
    }

    #[test]
    fn subsample_preserves_test_set_and_stratifies() {
        let rows: Vec<(&str, u8, [f64; 3])> =
            (0..100).map(|i| ("x", u8::from(i < 40), [1.0, 2.0, 3.0])).collect();
        let d = toy_dataset(&rows);
        let s = split(&d, 0.8, 5).unwrap();
        let sub = subsample_train(&s, d.labels(), 20, 11).unwrap();
        assert_eq!(sub.train_indices.len(), 20);
        assert_eq!(sub.test_indices, s.test_indices);
        let n1 = sub.train_indices.iter().filter(|&&i| d.labels()[i] == 1).count();
        let frac_total = s.train_indices.iter().filter(|&&i| d.labels()[i] == 1).count() as f64
            / s.train_indices.len() as f64;
        assert!((n1 as f64 - 20.0 * frac_total).abs() <= 1.0);
        for i in &sub.train_indices {
            assert!(s.train_indices.contains(i));
        }
    }

    #[test]
    fn subsample_rejects_zero_and_oversize() {
        let rows: Vec<(&str, u8, [f64; 3])> = (0..20).map(|_| ("x", 0u8, [1.0, 2.0, 3.0])).collect();
        let d = toy_dataset(&rows);
        let s = split(&d, 0.8, 5).unwrap();
        assert!(matches!(
            subsample_train(&s, d.labels(), 0, 1),
            Err(DataError::EmptySubset)
        ));
        assert!(matches!(
            subsample_train(&s, d.labels(), 17, 1),
            Err(DataError::SubsetTooLarge { .. })
        ));
    }

    proptest! {
        #[test]
        fn split_partitions_all_indices(n in 2usize..200, seed in 0u64..1000) {
            let rows: Vec<(&str, u8, [f64; 3])> = (0..n).map(|_| ("x", 0u8, [1.0, 2.0, 3.0])).collect();
            let d = toy_dataset(&rows);
            let s = split(&d, 0.8, seed).unwrap();
            let mut all: Vec<usize> = s.train_indices.iter().chain(s.test_indices.iter()).cloned().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn gather_preserves_sample_blocks(seed in 0u64..500) {
            let d = toy_dataset(&[("a", 0, [0.3, 0.7, 0.1]), ("b", 1, [0.9, 0.2, 0.4]), ("c", 0, [0.5, 0.5, 0.5])]);
            let b = poisson_encode(&d, 6, seed).unwrap();
            let g = b.gather(&[2, 0]);
            prop_assert_eq!(g.sample(0), b.sample(2));
            prop_assert_eq!(g.sample(1), b.sample(0));
        }
    }
}
