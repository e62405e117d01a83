//! Sorted samples and (weighted) empirical distribution functions.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SortedSample {
    pub values: Vec<f64>,
    /// `sort_index[k]` is the original position of `values[k]`.
    pub sort_index: Vec<usize>,
    pub weights: Vec<f64>,
    pub weight_mean: f64,
    weighted: bool,
    cum_weight: Vec<f64>,
}

impl SortedSample {
    pub fn new(x: &[f64], w: Option<&[f64]>) -> Result<Self> {
        sort_sample(x, w)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_weighted(&self) -> bool {
        self.weighted
    }

    /// Number of observations with value <= t.
    pub fn count_le(&self, t: f64) -> usize {
        self.values.partition_point(|&v| v <= t)
    }

    /// Number of observations with value < t.
    pub fn count_lt(&self, t: f64) -> usize {
        self.values.partition_point(|&v| v < t)
    }

    /// Sum of weights of the first k sorted observations.
    pub fn cum_weight(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.cum_weight[k - 1]
        }
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Weights in original observation order.
    pub fn weights_original_order(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.len()];
        for (k, &i) in self.sort_index.iter().enumerate() {
            w[i] = self.weights[k];
        }
        w
    }

    /// Same values with different weights given in original order.
    pub fn reweighted(&self, w: &[f64]) -> Result<Self> {
        let x: Vec<f64> = {
            let mut v = vec![0.0; self.len()];
            for (k, &i) in self.sort_index.iter().enumerate() {
                v[i] = self.values[k];
            }
            v
        };
        sort_sample(&x, Some(w))
    }
}

pub fn sort_sample(x: &[f64], w: Option<&[f64]>) -> Result<SortedSample> {
    if x.is_empty() {
        return Err(Error::InvalidInput("empty sample".into()));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite value at position {i}")));
    }
    if let Some(w) = w {
        if w.len() != x.len() {
            return Err(Error::InvalidInput(format!(
                "weight length {} does not match sample length {}",
                w.len(),
                x.len()
            )));
        }
        if let Some(i) = w.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite weight at position {i}")));
        }
    }
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap());
    let values: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
    let weights: Vec<f64> = match w {
        Some(w) => idx.iter().map(|&i| w[i]).collect(),
        None => vec![1.0; x.len()],
    };
    let mut cum_weight = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    for (k, &wk) in weights.iter().enumerate() {
        acc += wk;
        cum_weight.push(if w.is_none() { (k + 1) as f64 } else { acc });
    }
    let weight_mean = cum_weight[x.len() - 1] / x.len() as f64;
    Ok(SortedSample {
        values,
        sort_index: idx,
        weights,
        weight_mean,
        weighted: w.is_some(),
        cum_weight,
    })
}

/// F̂ at each sorted observation, inclusive of ties.
#[derive(Debug, Clone)]
pub struct EdfValues {
    pub values: Vec<f64>,
}

pub fn edf_at_points(s: &SortedSample) -> EdfValues {
    let n = s.len();
    let nf = n as f64;
    let mut out = vec![0.0; n];
    let mut k = 0;
    while k < n {
        let mut e = k;
        while e + 1 < n && s.values[e + 1] == s.values[k] {
            e += 1;
        }
        let v = s.cum_weight(e + 1) / nf;
        for o in &mut out[k..=e] {
            *o = v;
        }
        k = e + 1;
    }
    EdfValues { values: out }
}

/// Right-continuous F̂(t).
pub fn edf_eval(s: &SortedSample, t: f64) -> f64 {
    s.cum_weight(s.count_le(t)) / s.len() as f64
}
