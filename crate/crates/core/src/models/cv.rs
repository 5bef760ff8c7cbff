use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ModelError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified k-fold split. Each class is shuffled, the classes are laid end
/// to end, and position `p` of that sequence lands in test fold `p % k`, so a
/// class of `n_c` rows puts `floor(n_c/k)` or `ceil(n_c/k)` rows in each fold.
pub fn stratified_kfold(y: &[usize], k: usize, seed: u64) -> Result<Vec<Fold>, ModelError> {
    if k < 2 {
        return Err(ModelError::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in y.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    if let Some((&class, rows)) = by_class.iter().find(|(_, rows)| rows.len() < k) {
        return Err(ModelError::ClassTooSmall {
            class,
            count: rows.len(),
            k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; y.len()];
    let mut p = 0;
    for rows in by_class.values_mut() {
        rows.shuffle(&mut rng);
        for &i in rows.iter() {
            fold_of[i] = p % k;
            p += 1;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (test, train) = (0..y.len()).partition(|&i| fold_of[i] == f);
            Fold { train, test }
        })
        .collect())
}
