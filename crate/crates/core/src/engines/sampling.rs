//! Minibatch samplers.

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{invalid, Result};

/// Uniformly random m-subset of `0..M`, drawn independently on every call.
pub fn sample_wr_batch<R: Rng + ?Sized>(m_total: usize, m: usize, rng: &mut R) -> Result<Vec<usize>> {
    if m == 0 || m > m_total {
        return Err(invalid(format!("batch size {m} must lie in 1..={m_total}")));
    }
    Ok(index::sample(rng, m_total, m).into_vec())
}

/// A random permutation of `0..M` cut into `n = M/m` consecutive batches.
pub fn sample_wor_epoch<R: Rng + ?Sized>(m_total: usize, m: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if m == 0 || m > m_total || !m_total.is_multiple_of(m) {
        return Err(invalid(format!("WOR needs M divisible by m (M={m_total}, m={m})")));
    }
    let mut perm: Vec<usize> = (0..m_total).collect();
    perm.shuffle(rng);
    Ok(perm.chunks(m).map(<[usize]>::to_vec).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::run_rng;
    use std::collections::HashMap;

    #[test]
    fn full_batch_is_whole_set() {
        let mut rng = run_rng(1, 0);
        let mut b = sample_wr_batch(5, 5, &mut rng).unwrap();
        b.sort();
        assert_eq!(b, vec![0, 1, 2, 3, 4]);
        let e = sample_wor_epoch(5, 5, &mut rng).unwrap();
        assert_eq!(e.len(), 1);
    }

    #[test]
    fn rejects_bad_sizes() {
        let mut rng = run_rng(1, 0);
        assert!(sample_wr_batch(4, 5, &mut rng).is_err());
        assert!(sample_wor_epoch(4, 3, &mut rng).is_err());
    }

    #[test]
    fn wr_subset_frequencies_match_enumeration() {
        // Over all C(4,2) = 6 subsets each element has frequency 1/2 and each pair 1/6.
        let mut rng = run_rng(2, 0);
        let draws = 60_000;
        let mut single = [0usize; 4];
        let mut pairs: HashMap<(usize, usize), usize> = HashMap::new();
        for _ in 0..draws {
            let mut b = sample_wr_batch(4, 2, &mut rng).unwrap();
            b.sort();
            assert_ne!(b[0], b[1]);
            single[b[0]] += 1;
            single[b[1]] += 1;
            *pairs.entry((b[0], b[1])).or_default() += 1;
        }
        for s in single {
            assert!((s as f64 / draws as f64 - 0.5).abs() < 0.01);
        }
        assert_eq!(pairs.len(), 6);
        for &c in pairs.values() {
            assert!((c as f64 / draws as f64 - 1.0 / 6.0).abs() < 0.01);
        }
    }

    #[test]
    fn wor_epochs_partition_and_are_uniform() {
        let mut rng = run_rng(3, 0);
        let draws = 12_000;
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for _ in 0..draws {
            let e = sample_wor_epoch(4, 2, &mut rng).unwrap();
            let mut all: Vec<usize> = e.concat();
            all.sort();
            assert_eq!(all, vec![0, 1, 2, 3]);
            let mut first = e[0].clone();
            first.sort();
            *counts.entry(first).or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        // Chi-square with 5 degrees of freedom; 15.09 is the 1% critical value.
        let expect = draws as f64 / 6.0;
        let chi2: f64 = counts.values().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
        assert!(chi2 < 15.09, "chi2 = {chi2}");
    }
}
