use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum PreprocMode {
    /// Identity.
    #[default]
    None,
    /// `(x - min) / (max - min)`, constant features map to 0.
    MinMax,
    /// `(x - mean) / std` with the population std, constant features map to 0.
    Standardize,
}

impl PreprocMode {
    /// Experiment-name tag: NP, NM or ST.
    pub fn tag(self) -> &'static str {
        match self {
            PreprocMode::None => "NP",
            PreprocMode::MinMax => "NM",
            PreprocMode::Standardize => "ST",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Some(match tag {
            "NP" => PreprocMode::None,
            "NM" => PreprocMode::MinMax,
            "ST" => PreprocMode::Standardize,
            _ => return None,
        })
    }
}

/// Per-feature input transform, fitted on a training split only.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocStats {
    pub mode: PreprocMode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub min: Vec<f32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub max: Vec<f32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mean: Vec<f32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub std: Vec<f32>,
}

impl PreprocStats {
    pub fn fit(train: &Dataset, mode: PreprocMode) -> Result<Self, DatasetError> {
        if train.is_empty() {
            return Err(DatasetError::InvalidArgument("cannot fit preprocessing on an empty split".into()));
        }
        let dim = train.obs.len() / train.len();
        Ok(Self::fit_rows(train.obs.chunks_exact(dim), dim, mode))
    }

    /// Fits from any sequence of equally sized rows, accumulating in 64-bit.
    pub fn fit_rows<'a>(rows: impl Iterator<Item = &'a [f32]> + Clone, dim: usize, mode: PreprocMode) -> Self {
        let mut stats = PreprocStats { mode, ..Default::default() };
        match mode {
            PreprocMode::None => {}
            PreprocMode::MinMax => {
                let mut lo = vec![f32::INFINITY; dim];
                let mut hi = vec![f32::NEG_INFINITY; dim];
                for row in rows {
                    for ((l, h), &x) in lo.iter_mut().zip(hi.iter_mut()).zip(row) {
                        *l = l.min(x);
                        *h = h.max(x);
                    }
                }
                stats.min = lo;
                stats.max = hi;
            }
            PreprocMode::Standardize => {
                let mut sum = vec![0f64; dim];
                let mut n = 0usize;
                for row in rows.clone() {
                    n += 1;
                    for (s, &x) in sum.iter_mut().zip(row) {
                        *s += x as f64;
                    }
                }
                let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
                let mut sq = vec![0f64; dim];
                for row in rows {
                    for ((s, &x), m) in sq.iter_mut().zip(row).zip(&mean) {
                        *s += (x as f64 - m).powi(2);
                    }
                }
                stats.mean = mean.iter().map(|&m| m as f32).collect();
                stats.std = sq.iter().map(|s| (s / n as f64).sqrt() as f32).collect();
            }
        }
        stats
    }

    pub fn apply_in_place(&self, x: &mut [f32]) {
        match self.mode {
            PreprocMode::None => {}
            PreprocMode::MinMax => {
                for ((v, &lo), &hi) in x.iter_mut().zip(&self.min).zip(&self.max) {
                    let range = hi - lo;
                    *v = if range > 0.0 { (*v - lo) / range } else { 0.0 };
                }
            }
            PreprocMode::Standardize => {
                for ((v, &m), &s) in x.iter_mut().zip(&self.mean).zip(&self.std) {
                    *v = if s > 0.0 { (*v - m) / s } else { 0.0 };
                }
            }
        }
    }

    pub fn apply(&self, x: &[f32]) -> Vec<f32> {
        let mut out = x.to_vec();
        self.apply_in_place(&mut out);
        out
    }
}
