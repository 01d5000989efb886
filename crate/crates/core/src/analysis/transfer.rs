use serde::{Deserialize, Serialize};

use crate::attack_de::ConfidenceOracle;
use crate::data::{csv_string, fmt_f64};
use crate::error::{Error, Result};
use crate::sfi::SparseImage;
use crate::tensor::Tensor;

/// SFIs generated against model `source`, each with its target class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfiSet {
    pub source: usize,
    pub sfis: Vec<SparseImage>,
    pub targets: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub threshold: f64,
    /// `entries[src][dst]`: share of SFIs confident on `src` that are also
    /// confident on `dst`; `None` when no SFI from `src` is confident on it.
    pub entries: Vec<Vec<Option<f64>>>,
    /// `both[src][dst]`: SFIs from `src` confident on both models.
    pub both: Vec<Vec<usize>>,
    /// SFIs from `src` confident on `src`.
    pub source_hits: Vec<usize>,
}

impl TransferMatrix {
    pub fn to_csv(&self) -> Result<String> {
        let mut rows = Vec::new();
        for (s, row) in self.entries.iter().enumerate() {
            for (d, e) in row.iter().enumerate() {
                rows.push(vec![
                    s.to_string(),
                    d.to_string(),
                    self.both[s][d].to_string(),
                    self.source_hits[s].to_string(),
                    e.map(fmt_f64).unwrap_or_default(),
                ]);
            }
        }
        csv_string(&["source", "destination", "both", "source_hits", "ratio"], &rows)
    }
}

fn target_confidences(model: &dyn ConfidenceOracle, set: &SfiSet) -> Result<Vec<f64>> {
    if set.sfis.is_empty() {
        return Ok(Vec::new());
    }
    let images: Vec<Tensor> = set.sfis.iter().map(SparseImage::to_dense).collect();
    let p = model.probabilities(&Tensor::stack(&images)?)?;
    set.targets
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            p.item(i).get(t).copied().ok_or(Error::LabelOutOfRange { label: t, classes: p.item_len() })
        })
        .collect()
}

/// Transferability between every ordered pair of models.
pub fn transfer_matrix(models: &[&dyn ConfidenceOracle], sets: &[SfiSet], threshold: f64) -> Result<TransferMatrix> {
    let n = models.len();
    let mut both = vec![vec![0; n]; n];
    let mut source_hits = vec![0; n];
    for set in sets {
        if set.source >= n {
            return Err(Error::InvalidArgument(format!("SFI set tagged with unknown model {}", set.source)));
        }
        if set.sfis.len() != set.targets.len() {
            return Err(Error::Shape("SFI set has mismatched targets".into()));
        }
        let conf: Vec<Vec<f64>> = models.iter().map(|m| target_confidences(*m, set)).collect::<Result<_>>()?;
        for i in 0..set.sfis.len() {
            if conf[set.source][i] >= threshold {
                source_hits[set.source] += 1;
                for d in 0..n {
                    if conf[d][i] >= threshold {
                        both[set.source][d] += 1;
                    }
                }
            }
        }
    }
    let entries = (0..n)
        .map(|s| (0..n).map(|d| (source_hits[s] > 0).then(|| both[s][d] as f64 / source_hits[s] as f64)).collect())
        .collect();
    Ok(TransferMatrix { threshold, entries, both, source_hits })
}
