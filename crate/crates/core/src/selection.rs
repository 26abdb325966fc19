//! Per-round client selection and the zeroing convention for clients that
//! sit out a round.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{keyed, Domain};
use crate::state::StateMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionKind {
    All,
    StaticRandom,
    PerRoundRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionPolicy {
    pub kind: SelectionKind,
    /// Fraction `c` of clients selected each round.
    pub fraction: f64,
    pub seed: u64,
}

impl SelectionPolicy {
    pub fn all() -> Self {
        Self {
            kind: SelectionKind::All,
            fraction: 1.0,
            seed: 0,
        }
    }

    pub fn static_random(fraction: f64, seed: u64) -> Self {
        Self {
            kind: SelectionKind::StaticRandom,
            fraction,
            seed,
        }
    }

    pub fn per_round_random(fraction: f64, seed: u64) -> Self {
        Self {
            kind: SelectionKind::PerRoundRandom,
            fraction,
            seed,
        }
    }

    /// Number of clients selected each round, `round(c·m)` rounding half up.
    pub fn count(&self, m: usize) -> Result<usize> {
        if m == 0 {
            return Err(Error::config("selection", "need at least one client"));
        }
        let c = match self.kind {
            SelectionKind::All => 1.0,
            _ => self.fraction,
        };
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::config(
                "selection.fraction",
                format!("fraction must lie in (0, 1], got {c}"),
            ));
        }
        // 1e-9 absorbs representation error such as 10/75*75 = 10.000000000000002
        let k = (c * m as f64 + 0.5 + 1e-9).floor() as usize;
        if k == 0 {
            return Err(Error::config(
                "selection.fraction",
                format!("c·m = {} rounds to zero clients", c * m as f64),
            ));
        }
        Ok(k.min(m))
    }

    /// Effective fraction `|C_k|/m` actually realized.
    pub fn effective_fraction(&self, m: usize) -> Result<f64> {
        Ok(self.count(m)? as f64 / m as f64)
    }
}

/// The clients participating in one round, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionSet {
    pub round: usize,
    members: Vec<usize>,
}

impl SelectionSet {
    pub fn new(round: usize, mut members: Vec<usize>, m: usize) -> Result<Self> {
        members.sort_unstable();
        members.dedup();
        if members.iter().any(|&i| i >= m) {
            return Err(Error::config("selection", format!("client index out of range 0..{m}")));
        }
        Ok(Self { round, members })
    }

    pub fn everyone(round: usize, m: usize) -> Self {
        Self {
            round,
            members: (0..m).collect(),
        }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.binary_search(&i).is_ok()
    }

    /// Selection mask of length `m`.
    pub fn mask(&self, m: usize) -> Vec<bool> {
        let mut mask = vec![false; m];
        for &i in &self.members {
            mask[i] = true;
        }
        mask
    }
}

/// Clients selected for communication round `round`.
pub fn select(policy: &SelectionPolicy, round: usize, m: usize) -> Result<SelectionSet> {
    let k = policy.count(m)?;
    let members = match policy.kind {
        SelectionKind::All => (0..m).collect(),
        SelectionKind::StaticRandom => sample(policy.seed, 0, m, k),
        SelectionKind::PerRoundRandom => sample(policy.seed, round as u64 + 1, m, k),
    };
    SelectionSet::new(round, members, m)
}

/// Partial Fisher–Yates: the first `k` positions of a shuffled `0..m`.
fn sample(seed: u64, stream: u64, m: usize, k: usize) -> Vec<usize> {
    let mut rng = keyed(seed, Domain::Selection, stream, m as u64);
    let mut pool: Vec<usize> = (0..m).collect();
    for i in 0..k {
        let j = rng.gen_range(i..m);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Zero the client columns of `x` not in `sel`. Auxiliary columns are kept.
pub fn zero_unselected_in_place(x: &mut StateMatrix, sel: &SelectionSet) {
    for i in 0..x.clients() {
        if !sel.contains(i) {
            x.column_mut(i).fill(0.0);
        }
    }
}

pub fn zero_unselected(
    x: &StateMatrix,
    g: &StateMatrix,
    sel: &SelectionSet,
) -> (StateMatrix, StateMatrix) {
    let mut x = x.clone();
    let mut g = g.clone();
    zero_unselected_in_place(&mut x, sel);
    zero_unselected_in_place(&mut g, sel);
    (x, g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_policy_selects_everyone() {
        let p = SelectionPolicy::all();
        for r in [0, 3, 17] {
            assert_eq!(select(&p, r, 8).unwrap().members(), &[0, 1, 2, 3, 4, 5, 6, 7]);
        }
    }

    #[test]
    fn static_random_is_fixed_across_rounds() {
        let p = SelectionPolicy::static_random(0.5, 42);
        let a = select(&p, 0, 10).unwrap();
        let b = select(&p, 5, 10).unwrap();
        assert_eq!(a.members(), b.members());
        assert_eq!(a.len(), 5);
    }

    #[test]
    fn per_round_random_sizes_and_variation() {
        let p = SelectionPolicy::per_round_random(10.0 / 75.0, 42);
        let sets: Vec<_> = (0..20).map(|r| select(&p, r, 75).unwrap()).collect();
        assert!(sets.iter().all(|s| s.len() == 10));
        let distinct = sets
            .iter()
            .map(|s| s.members().to_vec())
            .collect::<std::collections::BTreeSet<_>>()
            .len();
        assert!(distinct > 15);
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(SelectionPolicy::static_random(0.5, 1).count(8).unwrap(), 4);
        assert_eq!(SelectionPolicy::static_random(0.5, 1).count(3).unwrap(), 2);
        assert_eq!(SelectionPolicy::static_random(0.2, 1).count(15).unwrap(), 3);
    }

    #[test]
    fn zero_count_is_config_error() {
        let p = SelectionPolicy::per_round_random(0.1, 1);
        assert!(matches!(select(&p, 0, 4), Err(Error::Config { .. })));
        assert!(SelectionPolicy::per_round_random(0.0, 1).count(4).is_err());
        assert!(SelectionPolicy::per_round_random(1.5, 1).count(4).is_err());
    }

    #[test]
    fn zeroing_examples() {
        let cols = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0], vec![7.0, 8.0], vec![9.0, 1.0]];
        let x = StateMatrix::from_columns(4, 1, cols).unwrap();
        let g = x.clone();

        let (x1, g1) = zero_unselected(&x, &g, &SelectionSet::everyone(0, 4));
        assert_eq!(x1, x);
        assert_eq!(g1, g);

        let sel = SelectionSet::new(0, vec![1, 3], 4).unwrap();
        let (x2, _) = zero_unselected(&x, &g, &sel);
        // norm from surviving columns 1, 3 and the auxiliary column 4
        let expect: f64 = [1usize, 3, 4]
            .iter()
            .map(|&j| x.column(j).iter().map(|v| v * v).sum::<f64>())
            .sum();
        assert!((x2.frobenius_sq() - expect).abs() < 1e-12);
        assert_eq!(x2.column(0), &[0.0, 0.0]);
        assert_eq!(x2.column(4), x.column(4));
    }

    #[test]
    fn partial_selection_zeroes_rest() {
        let x = StateMatrix::replicated(&[1.0], 4, 0);
        let sel = SelectionSet::new(0, vec![0], 4).unwrap();
        let (x, _) = zero_unselected(&x, &x.clone(), &sel);
        assert_eq!(x.column(0), &[1.0]);
        assert!((1..4).all(|j| x.column(j) == [0.0]));
    }
}
