//! Seeded multi-label data: every input is replicated once per latent label.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::{LossSpec, Sample};
use crate::stats::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiLabelSpec {
    pub n_inputs: usize,
    pub labels_per_input: usize,
    /// Row `i` holds the `labels_per_input` labels of input `i`.
    pub label_table: Vec<Vec<f64>>,
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
}

impl MultiLabelSpec {
    pub fn new(label_table: Vec<Vec<f64>>, noise_sd: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            n_inputs: label_table.len(),
            labels_per_input: label_table.first().map_or(0, Vec::len),
            label_table,
            noise_sd,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Labels drawn uniformly from `0..n_levels` (equally spaced codes).
    pub fn random(
        n_inputs: usize,
        labels_per_input: usize,
        n_levels: usize,
        seed: u64,
    ) -> Result<Self> {
        if n_levels == 0 {
            return Err(domain("need at least one label level"));
        }
        let mut rng = stream_rng(seed, 0);
        let table = (0..n_inputs)
            .map(|_| {
                (0..labels_per_input)
                    .map(|_| rng.gen_range(0..n_levels) as f64)
                    .collect()
            })
            .collect();
        let spec = Self {
            n_inputs,
            labels_per_input,
            label_table: table,
            noise_sd: 0.0,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_inputs == 0 || self.labels_per_input == 0 {
            return Err(domain("n_inputs and labels_per_input must be positive"));
        }
        if self.label_table.len() != self.n_inputs {
            return Err(domain(format!(
                "label_table has {} rows, expected {}",
                self.label_table.len(),
                self.n_inputs
            )));
        }
        if let Some((i, row)) = self
            .label_table
            .iter()
            .enumerate()
            .find(|(_, r)| r.len() != self.labels_per_input)
        {
            return Err(domain(format!(
                "label_table row {i} has {} labels, expected {}",
                row.len(),
                self.labels_per_input
            )));
        }
        if self.label_table.iter().flatten().any(|y| !y.is_finite()) {
            return Err(domain("labels must be finite"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(domain(format!(
                "noise_sd must be nonnegative, got {}",
                self.noise_sd
            )));
        }
        Ok(())
    }

    /// Largest distance between any two labels, plus noise headroom of
    /// six standard deviations.
    pub fn label_span(&self) -> f64 {
        let (lo, hi) = self
            .label_table
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| {
                (lo.min(y), hi.max(y))
            });
        hi - lo + 12.0 * self.noise_sd
    }
}

/// Samples plus the hidden subject index of each one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiLabelData {
    pub samples: Vec<Sample>,
    /// `latent[s]` is the label slot that produced `samples[s]`.
    pub latent: Vec<usize>,
}

/// Sample `i * k + j` has `x = [i]` and label `label_table[i][j]` plus noise.
pub fn multilabel_dataset(spec: &MultiLabelSpec) -> Result<MultiLabelData> {
    spec.validate()?;
    let noise = Normal::new(0.0, spec.noise_sd).map_err(|e| domain(e.to_string()))?;
    let mut rng = stream_rng(spec.seed, 1);
    let mut samples = Vec::with_capacity(spec.n_inputs * spec.labels_per_input);
    let mut latent = Vec::with_capacity(samples.capacity());
    for (i, row) in spec.label_table.iter().enumerate() {
        for (j, &y) in row.iter().enumerate() {
            let eps = if spec.noise_sd > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            samples.push(Sample::new(vec![i as f64], y + eps)?);
            latent.push(j);
        }
    }
    Ok(MultiLabelData { samples, latent })
}

/// `Σ_{i,j} L(ȳ_i, y_ij) / (n_inputs · k)`: the loss of predicting each
/// input's mean label. Defined on clean labels only.
pub fn confusion_error(spec: &MultiLabelSpec, loss: &LossSpec) -> Result<f64> {
    spec.validate()?;
    if spec.noise_sd > 0.0 {
        return Err(Error::Unsupported(
            "confusion error needs noise_sd = 0".into(),
        ));
    }
    let total: f64 = spec
        .label_table
        .iter()
        .map(|row| {
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            row.iter().map(|&y| loss.eval(y, mean)).sum::<f64>()
        })
        .sum();
    Ok(total / (spec.n_inputs * spec.labels_per_input) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LossKind;

    fn sq(upper: f64) -> LossSpec {
        LossSpec::new(LossKind::Squared, 0.0, upper).unwrap()
    }

    #[test]
    fn apple_red_sweet() {
        let spec = MultiLabelSpec::new(vec![vec![0.0, 1.0, 2.0]], 0.0, 0).unwrap();
        let d = multilabel_dataset(&spec).unwrap();
        assert_eq!(d.samples.len(), 3);
        assert!(d.samples.iter().all(|z| z.x() == [0.0]));
        let ys: Vec<f64> = d.samples.iter().map(Sample::y).collect();
        assert_eq!(ys, vec![0.0, 1.0, 2.0]);
        assert_eq!(d.latent, vec![0, 1, 2]);
        assert!((confusion_error(&spec, &sq(4.0)).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn confusion_examples() {
        let two = MultiLabelSpec::new(vec![vec![0.0, 1.0]], 0.0, 0).unwrap();
        assert_eq!(confusion_error(&two, &sq(1.0)).unwrap(), 0.25);
        let single = MultiLabelSpec::new(vec![vec![3.0], vec![1.0]], 0.0, 0).unwrap();
        assert_eq!(confusion_error(&single, &sq(1.0)).unwrap(), 0.0);
        let noisy = MultiLabelSpec::new(vec![vec![0.0, 1.0]], 0.1, 0).unwrap();
        assert!(matches!(
            confusion_error(&noisy, &sq(1.0)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn counts_and_determinism() {
        let spec = MultiLabelSpec::random(4, 2, 3, 9).unwrap();
        assert_eq!(multilabel_dataset(&spec).unwrap().samples.len(), 8);
        let noisy = MultiLabelSpec {
            noise_sd: 0.3,
            ..spec
        };
        let a = multilabel_dataset(&noisy).unwrap();
        let b = multilabel_dataset(&noisy).unwrap();
        assert_eq!(a, b);
        assert_ne!(
            a,
            multilabel_dataset(&MultiLabelSpec { seed: 10, ..noisy }).unwrap()
        );
    }

    #[test]
    fn validation() {
        assert!(MultiLabelSpec::new(vec![], 0.0, 0).is_err());
        assert!(MultiLabelSpec::new(vec![vec![0.0], vec![0.0, 1.0]], 0.0, 0).is_err());
        assert!(MultiLabelSpec::new(vec![vec![0.0]], -1.0, 0).is_err());
        assert!(MultiLabelSpec::random(2, 2, 0, 0).is_err());
    }
}
