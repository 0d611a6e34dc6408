use crate::error::{Error, Result};

/// Largest number of subsets [`enumerate_subsets`] agrees to produce.
pub const SUBSET_LIMIT: u128 = 1_000_000;

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // exact at every step: acc * (n - i) is divisible by (i + 1)
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// All size-`k` subsets of `0..n` in lexicographic order.
pub fn enumerate_subsets(n: usize, k: usize) -> Result<Subsets> {
    if k > n {
        return Err(Error::invalid(format!("subset size {k} exceeds {n}")));
    }
    let count = binomial(n, k);
    if count > SUBSET_LIMIT {
        return Err(Error::TooManySubsets {
            n,
            k,
            count,
            limit: SUBSET_LIMIT,
        });
    }
    Ok(Subsets {
        n,
        current: Some((0..k).collect()),
    })
}

/// Iterator returned by [`enumerate_subsets`]; indices are 0-based.
#[derive(Debug, Clone)]
pub struct Subsets {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Iterator for Subsets {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.take()?;
        let k = out.len();
        let mut next = out.clone();
        let mut i = k;
        while i > 0 {
            i -= 1;
            if next[i] < self.n - k + i {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                self.current = Some(next);
                return Some(out);
            }
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_choose_two() {
        let all: Vec<_> = enumerate_subsets(3, 2).unwrap().collect();
        assert_eq!(all, vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
    }

    #[test]
    fn empty_subset() {
        let all: Vec<_> = enumerate_subsets(5, 0).unwrap().collect();
        assert_eq!(all, vec![Vec::<usize>::new()]);
    }

    #[test]
    fn counts_match_binomial() {
        assert_eq!(enumerate_subsets(6, 3).unwrap().count(), 20);
        for n in 0..10 {
            for k in 0..=n {
                assert_eq!(enumerate_subsets(n, k).unwrap().count() as u128, binomial(n, k));
            }
        }
    }

    #[test]
    fn guard_and_range() {
        assert!(matches!(enumerate_subsets(40, 20), Err(Error::TooManySubsets { .. })));
        assert!(enumerate_subsets(3, 4).is_err());
        assert_eq!(binomial(40, 20), 137_846_528_820);
        assert_eq!(binomial(3, 4), 0);
    }
}
