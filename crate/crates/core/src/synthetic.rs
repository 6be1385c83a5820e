//! A small deterministic stand-in for a vision model: average-pool the
//! image, apply a seeded random projection and rectify. Used for demos,
//! tests and benchmarks where no real network is available.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exec::Execution;
use crate::stimulus::{StimulusError, StimulusSet};
use crate::store::{ActivationContainer, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum SyntheticError {
    #[error(transparent)]
    Stimulus(#[from] StimulusError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticModel {
    pub model_id: String,
    pub seed: u64,
    pub n_units: usize,
    /// Side length of the pooled feature grid.
    pub grid: u32,
}

impl SyntheticModel {
    pub fn new(model_id: impl Into<String>, seed: u64) -> Self {
        Self {
            model_id: model_id.into(),
            seed,
            n_units: 128,
            grid: 16,
        }
    }

    fn weights(&self, rows: usize) -> Vec<f64> {
        let n_in = (self.grid * self.grid) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let scale = 1.0 / (n_in as f64).sqrt();
        (0..rows * n_in)
            .map(|_| rng.random_range(-1.0..1.0) * scale)
            .collect()
    }

    /// Pooled luminance centered on mid-gray, in `[-0.5, 0.5]`.
    fn features(&self, set: &StimulusSet, exec: Execution) -> Result<Vec<Vec<f64>>, StimulusError> {
        let g = self.grid;
        exec.map(&set.images, |img| {
            let luma = img.luma()?;
            let (w, h) = luma.dimensions();
            let mut sums = vec![0.0; (g * g) as usize];
            let mut counts = vec![0u32; (g * g) as usize];
            for (x, y, p) in luma.enumerate_pixels() {
                let k = ((y * g / h) * g + x * g / w) as usize;
                sums[k] += p.0[0] as f64 / 255.0;
                counts[k] += 1;
            }
            Ok(sums
                .iter()
                .zip(&counts)
                .map(|(s, c)| if *c > 0 { s / *c as f64 - 0.5 } else { 0.0 })
                .collect())
        })
        .into_iter()
        .collect()
    }

    fn project(w: &[f64], x: &[f64], rows: usize) -> Vec<f64> {
        (0..rows)
            .map(|u| {
                w[u * x.len()..(u + 1) * x.len()]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// Rectified responses to every stimulus in the set.
    pub fn activations(
        &self,
        set: &StimulusSet,
        exec: Execution,
    ) -> Result<ActivationContainer, SyntheticError> {
        let w = self.weights(self.n_units);
        let mut data = Vec::with_capacity(set.len() * self.n_units);
        for x in self.features(set, exec)? {
            data.extend(
                Self::project(&w, &x, self.n_units)
                    .iter()
                    .map(|v| v.max(0.0) as f32),
            );
        }
        let ids = set.ids().map(str::to_string).collect();
        Ok(ActivationContainer::activations(
            &self.model_id,
            "penultimate",
            ids,
            self.n_units,
            data,
        )?)
    }

    /// Softmax class probabilities over the labels appearing in the set.
    pub fn probabilities(
        &self,
        set: &StimulusSet,
        exec: Execution,
    ) -> Result<ActivationContainer, SyntheticError> {
        let mut labels: Vec<String> = set.records.iter().filter_map(|r| r.label.clone()).collect();
        labels.sort();
        labels.dedup();
        let w = self.weights(labels.len());
        let mut data = Vec::with_capacity(set.len() * labels.len());
        for x in self.features(set, exec)? {
            let logits = Self::project(&w, &x, labels.len());
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let z: f64 = exp.iter().sum();
            data.extend(exp.iter().map(|e| (e / z) as f32));
        }
        let ids = set.ids().map(str::to_string).collect();
        Ok(ActivationContainer::probabilities(
            &self.model_id,
            ids,
            labels,
            data,
        )?)
    }

    /// Activations, or probabilities for properties scored on class output.
    pub fn extract(
        &self,
        set: &StimulusSet,
        exec: Execution,
    ) -> Result<ActivationContainer, SyntheticError> {
        if set.property.uses_probabilities() {
            self.probabilities(set, exec)
        } else {
            self.activations(set, exec)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::PropertyId;
    use crate::stimulus::{generate_stimulus_set, StimulusSpec};

    #[test]
    fn deterministic_and_seed_dependent() {
        let mut spec = StimulusSpec::new(PropertyId::MirrorConfusion, 3);
        spec.canvas_px = 64;
        spec.params.n_groups = 3;
        let set = generate_stimulus_set(&spec).unwrap();
        let a = SyntheticModel::new("a", 1)
            .extract(&set, Execution::Parallel)
            .unwrap();
        let b = SyntheticModel::new("a", 1)
            .extract(&set, Execution::Sequential)
            .unwrap();
        let c = SyntheticModel::new("a", 2)
            .extract(&set, Execution::Sequential)
            .unwrap();
        assert_eq!(a, b);
        assert_ne!(a.data, c.data);
        assert_eq!(a.n_stimuli, 9);
        assert!(a.data.iter().all(|v| *v >= 0.0));
    }
}
