//! Fault budget and quorum arithmetic.

use crate::error::Error;

/// Smallest integer strictly greater than `(n + f) / 2`.
///
/// Rejects configurations with `n < 3f + 1`.
pub fn quorum(n: usize, f: usize) -> Result<usize, Error> {
    FaultBudget::new(n, f).map(|b| b.quorum())
}

/// `n` processes of which at most `f` are Byzantine, with `n >= 3f + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FaultBudget {
    n: usize,
    f: usize,
}

impl FaultBudget {
    pub fn new(n: usize, f: usize) -> Result<Self, Error> {
        if n < 3 * f + 1 {
            return Err(Error::InvalidBudget { n, f });
        }
        Ok(FaultBudget { n, f })
    }

    /// The largest tolerable budget for `n` processes, `f = floor((n - 1) / 3)`.
    pub fn max_for(n: usize) -> Result<Self, Error> {
        if n == 0 {
            return Err(Error::InvalidBudget { n, f: 0 });
        }
        FaultBudget::new(n, (n - 1) / 3)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn f(&self) -> usize {
        self.f
    }

    pub fn quorum(&self) -> usize {
        (self.n + self.f) / 2 + 1
    }

    /// Smallest number of deciders in k-consensus.
    pub fn k_min(&self) -> usize {
        self.quorum()
    }

    /// Largest number of deciders that can be guaranteed, `n - f`.
    pub fn k_max(&self) -> usize {
        self.n - self.f
    }

    /// Minimum sink size, `3f + 1`.
    pub fn min_group(&self) -> usize {
        3 * self.f + 1
    }

    /// Entries in a vector consensus row, `2f + 1`.
    pub fn vector_entries(&self) -> usize {
        2 * self.f + 1
    }

    /// Same `f` applied to a group of a different size.
    pub fn with_n(&self, n: usize) -> Result<Self, Error> {
        FaultBudget::new(n, self.f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quorum_examples() {
        assert_eq!(quorum(4, 1), Ok(3));
        assert_eq!(quorum(7, 2), Ok(5));
        assert_eq!(quorum(10, 3), Ok(7));
    }

    #[test]
    fn rejects_undersized_groups() {
        assert_eq!(quorum(3, 1), Err(Error::InvalidBudget { n: 3, f: 1 }));
        assert!(FaultBudget::new(4, 2).is_err());
        assert!(FaultBudget::max_for(0).is_err());
    }

    #[test]
    fn quorum_is_strictly_above_half_of_n_plus_f() {
        for n in 1..=100usize {
            for f in 0..=(n - 1) / 3 {
                let b = FaultBudget::new(n, f).unwrap();
                let q = b.quorum();
                // 2q > n + f and 2(q - 1) <= n + f
                assert!(2 * q > n + f);
                assert!(2 * (q - 1) <= n + f);
                assert!(b.k_min() <= b.k_max());
            }
        }
    }

    #[test]
    fn two_quorums_share_a_correct_process() {
        for n in 1..=100usize {
            for f in 0..=(n - 1) / 3 {
                let q = quorum(n, f).unwrap();
                assert!(2 * q - n >= f + 1, "n={n} f={f}");
                assert!(q - f >= f + 1, "n={n} f={f}");
            }
        }
    }
}
