//! Maximal chains of nested species sets, stored as species permutations.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{GremError, Result};
use crate::model::{all_subsets, CoordinateSet, SubsetId, MAX_SPECIES};

/// A chain `∅ ⊂ A_1 ⊂ … ⊂ A_n = {1..n}` with `A_k = {perm[0], …, perm[k-1]}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Chain {
    perm: Vec<usize>,
}

impl Chain {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let n = perm.len();
        if !(1..=MAX_SPECIES).contains(&n) {
            return Err(GremError::SpeciesOutOfRange(n));
        }
        let mut seen = vec![false; n + 1];
        for &s in &perm {
            if s == 0 || s > n || seen[s] {
                return Err(GremError::InvalidArgument(format!(
                    "{perm:?} is not a permutation of 1..={n}"
                )));
            }
            seen[s] = true;
        }
        Ok(Chain { perm })
    }

    /// Parses `"2,1"`, `"2<1"` or `"21"`.
    pub fn parse(text: &str, n: usize) -> Result<Self> {
        let digits: Vec<usize> = if text.contains([',', '<']) {
            text.split([',', '<'])
                .map(|t| t.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| GremError::InvalidArgument(format!("cannot parse chain '{text}'")))?
        } else {
            text.trim()
                .chars()
                .map(|c| c.to_digit(10).map(|d| d as usize))
                .collect::<Option<_>>()
                .ok_or_else(|| GremError::InvalidArgument(format!("cannot parse chain '{text}'")))?
        };
        if digits.len() != n {
            return Err(GremError::InvalidArgument(format!(
                "chain '{text}' has {} species, model has {n}",
                digits.len()
            )));
        }
        Chain::new(digits)
    }

    pub fn identity(n: usize) -> Self {
        Chain {
            perm: (1..=n).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.perm.len()
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// `A_k`, for `k` in `1..=n`.
    pub fn nested_set(&self, k: usize) -> SubsetId {
        SubsetId::from_species(self.perm[..k].iter().copied())
    }

    /// 1-based position of `species` in the permutation.
    pub fn position(&self, species: usize) -> usize {
        self.perm.iter().position(|&s| s == species).expect("species in chain") + 1
    }

    /// `k_J`: the first level whose nested set contains `J`.
    pub fn level_of(&self, j: SubsetId) -> usize {
        j.species().map(|s| self.position(s)).max().expect("nonempty subset")
    }

    /// `T_k = {J : J ⊆ A_k, J ⊄ A_(k-1)}` in canonical order.
    pub fn level(&self, k: usize) -> Vec<SubsetId> {
        all_subsets(self.n())
            .into_iter()
            .filter(|&j| self.level_of(j) == k)
            .collect()
    }

    pub fn levels(&self) -> Vec<Vec<SubsetId>> {
        (1..=self.n()).map(|k| self.level(k)).collect()
    }

    /// `T_1 ∪ … ∪ T_k`, which equals the power set of `A_k`.
    pub fn prefix_coords(&self, k: usize) -> CoordinateSet {
        if k == 0 {
            return CoordinateSet::empty();
        }
        CoordinateSet::powerset(self.nested_set(k))
    }

    /// Coordinates listed level by level, canonical order inside each level.
    pub fn chain_order(&self) -> Vec<SubsetId> {
        self.levels().concat()
    }

    /// Species joined by `<`, e.g. `"2<1"`.
    pub fn label(&self) -> String {
        let parts: Vec<String> = self.perm.iter().map(|s| s.to_string()).collect();
        parts.join("<")
    }
}

impl fmt::Display for Chain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl TryFrom<Vec<usize>> for Chain {
    type Error = GremError;
    fn try_from(perm: Vec<usize>) -> Result<Self> {
        Chain::new(perm)
    }
}

impl From<Chain> for Vec<usize> {
    fn from(c: Chain) -> Self {
        c.perm
    }
}

/// All `n!` chains in lexicographic order of their permutations.
pub fn enumerate_chains(n: usize) -> Result<Vec<Chain>> {
    if !(1..=MAX_SPECIES).contains(&n) {
        return Err(GremError::SpeciesOutOfRange(n));
    }
    let mut out = Vec::new();
    let mut perm: Vec<usize> = (1..=n).collect();
    loop {
        out.push(Chain { perm: perm.clone() });
        // next permutation in lexicographic order
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| perm[i] < perm[i + 1]) else {
            break;
        };
        let k = (i + 1..n).rev().find(|&k| perm[k] > perm[i]).expect("successor exists");
        perm.swap(i, k);
        perm[i + 1..].reverse();
    }
    Ok(out)
}

/// Level sets of `chain` and the level index of every subset, the latter
/// indexed by canonical subset position.
pub fn level_sets(chain: &Chain) -> (Vec<Vec<SubsetId>>, Vec<usize>) {
    let level_of = all_subsets(chain.n()).into_iter().map(|j| chain.level_of(j)).collect();
    (chain.levels(), level_of)
}
