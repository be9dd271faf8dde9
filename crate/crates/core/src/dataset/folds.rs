use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::mix_seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    /// Balanced training rows, sorted ascending.
    pub train: Vec<usize>,
    /// Held-out rows with the natural class mix, sorted ascending.
    pub validation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: Vec<usize>,
    pub folds: Vec<Fold>,
}

/// Stratified k-fold split whose training sides are undersampled to 1:1.
///
/// Each class is shuffled and dealt round-robin over the folds, so every
/// validation fold holds within one row of its proportional share of each
/// class. Only training sides are balanced; validation keeps the observed
/// prevalence.
pub fn stratified_undersampled_folds(labels: &[u8], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("k must be >= 2, got {k}")));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &y) in labels.iter().enumerate() {
        match y {
            0 | 1 => by_class[y as usize].push(i),
            other => return Err(Error::InvalidInput(format!("label {other} at row {i} is not binary"))),
        }
    }
    for (class, rows) in by_class.iter().enumerate() {
        if rows.len() < k {
            return Err(Error::TooFewInClass {
                class: class as u8,
                count: rows.len(),
                k,
            });
        }
    }

    let mut fold_of = vec![0usize; labels.len()];
    for (class, rows) in by_class.iter_mut().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, class as u64));
        rows.shuffle(&mut rng);
        for (pos, &i) in rows.iter().enumerate() {
            fold_of[i] = pos % k;
        }
    }

    let folds = (0..k)
        .map(|f| {
            let validation: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] == f).collect();
            let mut train_pos: Vec<usize> = by_class[1].iter().copied().filter(|&i| fold_of[i] != f).collect();
            let mut train_neg: Vec<usize> = by_class[0].iter().copied().filter(|&i| fold_of[i] != f).collect();
            train_pos.sort_unstable();
            train_neg.sort_unstable();
            let keep = train_pos.len().min(train_neg.len());
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 100 + f as u64));
            let majority = if train_pos.len() > train_neg.len() {
                &mut train_pos
            } else {
                &mut train_neg
            };
            majority.shuffle(&mut rng);
            majority.truncate(keep);
            let mut train: Vec<usize> = train_pos.into_iter().chain(train_neg).collect();
            train.sort_unstable();
            Fold { train, validation }
        })
        .collect();

    Ok(FoldAssignment { k, fold_of, folds })
}

/// Seeded 1:1 undersample of all rows (used for final fits outside cross-validation).
pub fn undersample_balanced(labels: &[u8], seed: u64) -> Vec<usize> {
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != 1).collect();
    let keep = pos.len().min(neg.len());
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 7));
    let majority = if pos.len() > neg.len() { &mut pos } else { &mut neg };
    majority.shuffle(&mut rng);
    majority.truncate(keep);
    let mut out: Vec<usize> = pos.into_iter().chain(neg).collect();
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels_100_20() -> Vec<u8> {
        (0..100).map(|i| u8::from(i % 5 == 0)).collect()
    }

    #[test]
    fn validation_folds_get_four_positives() {
        let labels = labels_100_20();
        let fa = stratified_undersampled_folds(&labels, 5, 11).unwrap();
        for f in &fa.folds {
            let pos = f.validation.iter().filter(|&&i| labels[i] == 1).count();
            assert_eq!(pos, 4);
            assert_eq!(f.validation.len(), 20);
        }
    }

    #[test]
    fn training_sides_are_balanced_16_16() {
        let labels = labels_100_20();
        let fa = stratified_undersampled_folds(&labels, 5, 11).unwrap();
        for f in &fa.folds {
            let pos = f.train.iter().filter(|&&i| labels[i] == 1).count();
            assert_eq!(pos, 16);
            assert_eq!(f.train.len() - pos, 16);
            assert!(f.train.iter().all(|i| !f.validation.contains(i)));
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let labels = labels_100_20();
        assert_eq!(
            stratified_undersampled_folds(&labels, 5, 3).unwrap(),
            stratified_undersampled_folds(&labels, 5, 3).unwrap()
        );
        assert_ne!(
            stratified_undersampled_folds(&labels, 5, 3).unwrap().fold_of,
            stratified_undersampled_folds(&labels, 5, 4).unwrap().fold_of
        );
    }

    #[test]
    fn too_few_minority_rows() {
        let labels = [1, 1, 0, 0, 0, 0];
        assert!(matches!(
            stratified_undersampled_folds(&labels, 3, 0),
            Err(Error::TooFewInClass { class: 1, count: 2, k: 3 })
        ));
        assert!(stratified_undersampled_folds(&labels, 1, 0).is_err());
    }

    #[test]
    fn undersample_balanced_keeps_minority() {
        let labels = labels_100_20();
        let idx = undersample_balanced(&labels, 1);
        assert_eq!(idx.len(), 40);
        assert_eq!(idx.iter().filter(|&&i| labels[i] == 1).count(), 20);
    }
}
