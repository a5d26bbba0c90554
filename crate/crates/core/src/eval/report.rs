use std::fmt;

use serde::{Deserialize, Serialize};

use super::reid::KAccuracy;
use super::split::SplitMode;

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KRow {
    pub k: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReidReport {
    pub mode: SplitMode,
    pub seed: u64,
    pub repetitions: usize,
    pub identities: usize,
    pub gallery_size: usize,
    pub query_size: usize,
    /// Accuracies on the split used only to choose k.
    pub selection: Vec<KAccuracy>,
    pub chosen_k: usize,
    /// Accuracy over the reported repetitions for every k.
    pub per_k: Vec<KRow>,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub images: usize,
    pub positives: usize,
    pub negatives_per_set: usize,
    pub negative_sets: usize,
    pub aucs: Vec<f64>,
    pub auc_mean: f64,
    pub auc_std: f64,
}

impl fmt::Display for ReidReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "Re-ID  IDs {}  gallery {}  queries {}  repetitions {}",
            self.identities, self.gallery_size, self.query_size, self.repetitions
        )?;
        writeln!(f, "{:>6} {:>10} {:>8}", "k", "acc (%)", "std")?;
        for row in &self.per_k {
            let mark = if row.k == self.chosen_k { "*" } else { "" };
            writeln!(
                f,
                "{:>6} {:>10.1} {:>8.1}{mark}",
                row.k,
                100.0 * row.mean,
                100.0 * row.std
            )?;
        }
        writeln!(
            f,
            "k-NN accuracy (k={}): {:.1} ± {:.1}",
            self.chosen_k,
            100.0 * self.accuracy_mean,
            100.0 * self.accuracy_std
        )
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "Verification  images {}  positive pairs {}  negative sets {}",
            self.images, self.positives, self.negative_sets
        )?;
        writeln!(
            f,
            "ROC-AUC: {:.1} ± {:.1}",
            100.0 * self.auc_mean,
            100.0 * self.auc_std
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
        assert_eq!(mean_std(&[]), (0.0, 0.0));
    }
}
