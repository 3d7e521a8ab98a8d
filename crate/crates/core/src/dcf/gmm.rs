//! Compact training set: at most `max_components` weighted means. Each new
//! sample enters with weight equal to the learning rate while older weights
//! decay; on overflow the lightest component is dropped if negligible,
//! otherwise the closest pair (by the weighted merge cost
//! `pi_i pi_j / (pi_i + pi_j) * |mu_i - mu_j|^2`) is merged.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub mean: Vec<Complex64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmSampleSpace {
    max_components: usize,
    learning_rate: f64,
    drop_threshold: f64,
    components: Vec<Component>,
    /// Squared distances between component means, row per component.
    #[serde(skip)]
    sq_dist: Vec<Vec<f64>>,
}

fn sq_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum()
}

impl GmmSampleSpace {
    pub fn new(max_components: usize, learning_rate: f64, drop_threshold: f64) -> Self {
        assert!(max_components >= 1);
        assert!(learning_rate > 0.0 && learning_rate <= 1.0);
        Self {
            max_components,
            learning_rate,
            drop_threshold,
            components: Vec::with_capacity(max_components + 1),
            sq_dist: Vec::new(),
        }
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn max_components(&self) -> usize {
        self.max_components
    }

    pub fn weight_sum(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    fn ensure_cache(&mut self) {
        if self.sq_dist.len() == self.components.len() {
            return;
        }
        let n = self.components.len();
        self.sq_dist = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| sq_distance(&self.components[i].mean, &self.components[j].mean))
                    .collect()
            })
            .collect();
    }

    pub fn update(&mut self, sample: Vec<Complex64>) -> Result<()> {
        if let Some(first) = self.components.first() {
            if first.mean.len() != sample.len() {
                return Err(Error::DimensionMismatch {
                    expected: format!("{} coefficients", first.mean.len()),
                    actual: format!("{} coefficients", sample.len()),
                });
            }
        }
        if self.components.is_empty() {
            self.components.push(Component {
                mean: sample,
                weight: 1.0,
            });
            self.sq_dist = vec![vec![0.0]];
            return Ok(());
        }
        self.ensure_cache();

        let gamma = self.learning_rate;
        for c in &mut self.components {
            c.weight *= 1.0 - gamma;
        }
        let row: Vec<f64> = self
            .components
            .iter()
            .map(|c| sq_distance(&c.mean, &sample))
            .collect();
        for (r, &d) in self.sq_dist.iter_mut().zip(&row) {
            r.push(d);
        }
        let mut new_row = row;
        new_row.push(0.0);
        self.sq_dist.push(new_row);
        self.components.push(Component {
            mean: sample,
            weight: gamma,
        });

        if self.components.len() > self.max_components {
            let (lightest, min_w) = self
                .components
                .iter()
                .enumerate()
                .map(|(i, c)| (i, c.weight))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("non-empty");
            if min_w < self.drop_threshold {
                self.remove(lightest);
            } else {
                let (i, j) = self.closest_pair();
                self.merge(i, j);
            }
        }

        let total = self.weight_sum();
        for c in &mut self.components {
            c.weight /= total;
        }
        Ok(())
    }

    fn closest_pair(&self) -> (usize, usize) {
        let n = self.components.len();
        let mut best = (0, 1);
        let mut best_cost = f64::INFINITY;
        for i in 0..n {
            for j in i + 1..n {
                let (wi, wj) = (self.components[i].weight, self.components[j].weight);
                let cost = wi * wj / (wi + wj) * self.sq_dist[i][j];
                if cost < best_cost {
                    best_cost = cost;
                    best = (i, j);
                }
            }
        }
        best
    }

    /// Merges component `j` into `i` (`i < j`).
    fn merge(&mut self, i: usize, j: usize) {
        let removed = self.components[j].clone();
        let keep = &mut self.components[i];
        let total = keep.weight + removed.weight;
        let t = removed.weight / total;
        for (m, r) in keep.mean.iter_mut().zip(&removed.mean) {
            *m += (r - *m) * t;
        }
        keep.weight = total;
        self.remove(j);
        for k in 0..self.components.len() {
            let d = sq_distance(&self.components[i].mean, &self.components[k].mean);
            self.sq_dist[i][k] = d;
            self.sq_dist[k][i] = d;
        }
        self.sq_dist[i][i] = 0.0;
    }

    fn remove(&mut self, k: usize) {
        self.components.remove(k);
        self.sq_dist.remove(k);
        for r in &mut self.sq_dist {
            r.remove(k);
        }
    }
}
