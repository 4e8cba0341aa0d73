//! Longest-common-subsequence similarity between token sequences.
//!
//! `sim(a, b) = 2 * |LCS(a, b)| / (|a| + |b|)`, with exact, case-sensitive
//! token equality. The same measure drives template merging (coarse tokens,
//! wildcards compared literally) and demonstration selection (fine tokens).

use thiserror::Error;

use crate::scalar::Score;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SimilarityError {
    #[error("similarity is undefined for two empty token sequences")]
    BothEmpty,
}

/// A similarity value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SimilarityScore<S>(S);

impl<S: Score> SimilarityScore<S> {
    pub fn value(self) -> S {
        self.0
    }

    pub fn is_identity(self) -> bool {
        self.0 == S::one()
    }
}

/// Length of the longest common subsequence, O(|a|·|b|) time and O(|b|) space.
pub fn lcs_length<A, B>(a: &[A], b: &[B]) -> usize
where
    A: PartialEq<B>,
{
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            curr[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

pub fn similarity<S, A, B>(a: &[A], b: &[B]) -> Result<SimilarityScore<S>, SimilarityError>
where
    S: Score,
    A: PartialEq<B>,
{
    let total = a.len() + b.len();
    if total == 0 {
        return Err(SimilarityError::BothEmpty);
    }
    Ok(SimilarityScore(S::from_ratio(2 * lcs_length(a, b), total)))
}
