//! Output-label permutations and per-permutation separation costs.
//!
//! Training and loss evaluation enumerate all `S!` assignments (S is
//! small), while `min_cost_assignment` provides an independent O(S^3)
//! oracle used to cross-check the enumeration.

use itertools::Itertools;
use ndarray::Array2;

use crate::dsp::MagSpectrogram;
use crate::error::{Error, Result};

/// Largest source count accepted by the enumeration (8! = 40320).
pub const MAX_SOURCES: usize = 8;

/// A bijection from output index to target index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let s = mapping.len();
        let mut seen = vec![false; s];
        for &t in &mapping {
            if t >= s || seen[t] {
                return Err(Error::InvalidArgument(format!(
                    "mapping {mapping:?} is not a bijection on 0..{s}"
                )));
            }
            seen[t] = true;
        }
        Ok(Self(mapping))
    }

    pub fn identity(s: usize) -> Self {
        Self((0..s).collect())
    }

    /// Target index assigned to output `o`.
    pub fn target_of(&self, o: usize) -> usize {
        self.0[o]
    }

    pub fn mapping(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// All `S!` permutations in lexicographic order, identity first.
pub fn enumerate_permutations(s: usize) -> Result<Vec<Permutation>> {
    if s == 0 || s > MAX_SOURCES {
        return Err(Error::InvalidArgument(format!(
            "source count must be in 1..={MAX_SOURCES}, got {s}"
        )));
    }
    Ok((0..s).permutations(s).map(Permutation).collect())
}

/// `c[o][t]` = squared Frobenius distance between output `o` and target `t`.
#[derive(Debug, Clone)]
pub struct PairwiseCostMatrix {
    c: Array2<f64>,
}

impl PairwiseCostMatrix {
    pub fn new(c: Array2<f64>) -> Result<Self> {
        if c.nrows() != c.ncols() {
            return Err(Error::Shape(format!("cost matrix must be square, got {:?}", c.dim())));
        }
        if !c.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::Data("cost matrix entries must be finite and nonnegative".into()));
        }
        Ok(Self { c })
    }

    pub fn size(&self) -> usize {
        self.c.nrows()
    }

    pub fn get(&self, output: usize, target: usize) -> f64 {
        self.c[[output, target]]
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.c
    }
}

/// Squared errors between every output/target pair.
pub fn pairwise_costs(
    outputs: &[MagSpectrogram],
    targets: &[MagSpectrogram],
) -> Result<PairwiseCostMatrix> {
    if outputs.len() != targets.len() || outputs.is_empty() {
        return Err(Error::Shape(format!(
            "need equal nonempty output/target counts, got {} and {}",
            outputs.len(),
            targets.len()
        )));
    }
    let shape = outputs[0].shape();
    for m in outputs.iter().chain(targets) {
        if m.shape() != shape {
            return Err(Error::Shape(format!(
                "all spectrograms must share shape {shape:?}, found {:?}",
                m.shape()
            )));
        }
    }
    let s = outputs.len();
    let mut c = Array2::zeros((s, s));
    for (o, out) in outputs.iter().enumerate() {
        for (t, tgt) in targets.iter().enumerate() {
            c[[o, t]] = out
                .mags
                .iter()
                .zip(tgt.mags.iter())
                .map(|(a, b)| {
                    let d = a - b;
                    d * d
                })
                .sum();
        }
    }
    PairwiseCostMatrix::new(c)
}

/// Separation error of every permutation, with the argmin identified.
#[derive(Debug, Clone)]
pub struct PermutationCosts {
    pub costs: Vec<f64>,
    pub perms: Vec<Permutation>,
    pub min_index: usize,
}

impl PermutationCosts {
    /// Builds directly from a cost vector over the canonical enumeration
    /// order. Ties break toward the lowest index.
    pub fn new(costs: Vec<f64>, perms: Vec<Permutation>) -> Result<Self> {
        if costs.len() != perms.len() || costs.is_empty() {
            return Err(Error::Shape("cost and permutation counts must match".into()));
        }
        if !costs.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::Data("permutation costs must be finite and nonnegative".into()));
        }
        let mut min_index = 0;
        for (k, &v) in costs.iter().enumerate() {
            if v < costs[min_index] {
                min_index = k;
            }
        }
        Ok(Self { costs, perms, min_index })
    }

    pub fn min_cost(&self) -> f64 {
        self.costs[self.min_index]
    }

    pub fn num_sources(&self) -> usize {
        self.perms[0].len()
    }
}

/// Total cost of every enumerated permutation of a pairwise matrix.
pub fn permutation_costs(c: &PairwiseCostMatrix) -> Result<PermutationCosts> {
    let s = c.size();
    let perms = enumerate_permutations(s)?;
    let costs = perms.iter().map(|p| assignment_cost(c, p)).collect();
    PermutationCosts::new(costs, perms)
}

/// Cost of one assignment, summed in output order. Enumeration and the
/// polynomial oracle both report costs through this function so results
/// agree bit for bit.
pub fn assignment_cost(c: &PairwiseCostMatrix, perm: &Permutation) -> f64 {
    (0..c.size()).map(|o| c.get(o, perm.target_of(o))).sum()
}

/// Minimum-cost assignment via shortest augmenting paths (Jonker-
/// Volgenant style), O(S^3). Exists to cross-validate the enumeration.
pub fn min_cost_assignment(c: &PairwiseCostMatrix) -> Result<(Permutation, f64)> {
    let n = c.size();
    // row potential u, column potential v, col -> row assignment
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut col_of = vec![n; n + 1]; // col j assigned to row col_of[j]; n = free

    for row in 0..n {
        let mut j_cur = n;
        col_of[n] = row;
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut prev = vec![n; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j_cur] = true;
            let i = col_of[j_cur];
            let mut delta = f64::INFINITY;
            let mut j_next = n;
            for j in 0..n {
                if !used[j] {
                    let reduced = c.get(i, j) - u[i] - v[j];
                    if reduced < min_to[j] {
                        min_to[j] = reduced;
                        prev[j] = j_cur;
                    }
                    if min_to[j] < delta {
                        delta = min_to[j];
                        j_next = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j_cur = j_next;
            if col_of[j_cur] == n {
                break;
            }
        }
        // augment along the found path
        loop {
            let j_prev = prev[j_cur];
            col_of[j_cur] = col_of[j_prev];
            j_cur = j_prev;
            if j_cur == n {
                break;
            }
        }
    }

    let mut mapping = vec![0usize; n];
    for j in 0..n {
        mapping[col_of[j]] = j;
    }
    let perm = Permutation::new(mapping)?;
    let cost = assignment_cost(c, &perm);
    Ok((perm, cost))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_source_permutations() {
        let perms = enumerate_permutations(2).unwrap();
        assert_eq!(perms.len(), 2);
        assert_eq!(perms[0].mapping(), &[0, 1]);
        assert_eq!(perms[1].mapping(), &[1, 0]);
    }

    #[test]
    fn single_source() {
        let perms = enumerate_permutations(1).unwrap();
        assert_eq!(perms.len(), 1);
        assert_eq!(perms[0].mapping(), &[0]);
    }

    #[test]
    fn four_sources_all_distinct() {
        let perms = enumerate_permutations(4).unwrap();
        assert_eq!(perms.len(), 24);
        for a in 0..perms.len() {
            for b in a + 1..perms.len() {
                assert_ne!(perms[a], perms[b]);
            }
        }
        assert_eq!(perms[0], Permutation::identity(4));
    }

    #[test]
    fn out_of_range_source_count_rejected() {
        assert!(enumerate_permutations(0).is_err());
        assert!(enumerate_permutations(9).is_err());
    }

    #[test]
    fn bijection_check() {
        assert!(Permutation::new(vec![0, 0]).is_err());
        assert!(Permutation::new(vec![0, 2]).is_err());
        assert!(Permutation::new(vec![2, 0, 1]).is_ok());
    }

    fn mag(values: Array2<f64>) -> MagSpectrogram {
        MagSpectrogram::new(values).unwrap()
    }

    #[test]
    fn pairwise_costs_zero_diagonal_for_identical_lists() {
        let a = mag(array![[1.0, 2.0], [0.5, 0.25]]);
        let b = mag(array![[0.0, 1.0], [2.0, 3.0]]);
        let c = pairwise_costs(&[a.clone(), b.clone()], &[a, b]).unwrap();
        assert_eq!(c.get(0, 0), 0.0);
        assert_eq!(c.get(1, 1), 0.0);
    }

    #[test]
    fn pairwise_costs_orthogonal_unit_pairs() {
        // unit-norm, disjoint support => ||a - b||^2 = 2
        let a = mag(array![[1.0], [0.0]]);
        let b = mag(array![[0.0], [1.0]]);
        let c = pairwise_costs(&[a.clone(), b.clone()], &[a, b]).unwrap();
        assert_eq!(c.get(0, 1), 2.0);
        assert_eq!(c.get(1, 0), 2.0);
    }

    #[test]
    fn pairwise_costs_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let outs: Vec<_> = (0..3)
            .map(|_| mag(Array2::from_shape_fn((4, 5), |_| rng.gen_range(0.0..2.0))))
            .collect();
        let tgts: Vec<_> = (0..3)
            .map(|_| mag(Array2::from_shape_fn((4, 5), |_| rng.gen_range(0.0..2.0))))
            .collect();
        let c = pairwise_costs(&outs, &tgts).unwrap();
        for o in 0..3 {
            for t in 0..3 {
                let mut direct = 0.0;
                for f in 0..4 {
                    for m in 0..5 {
                        let d = outs[o].mags[[f, m]] - tgts[t].mags[[f, m]];
                        direct += d * d;
                    }
                }
                assert!((c.get(o, t) - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn permutation_costs_hand_case() {
        let c = PairwiseCostMatrix::new(array![[1.0, 4.0], [3.0, 2.0]]).unwrap();
        let pc = permutation_costs(&c).unwrap();
        assert_eq!(pc.costs, vec![3.0, 7.0]);
        assert_eq!(pc.min_index, 0);
    }

    #[test]
    fn diagonal_dominant_min_is_identity() {
        let c = PairwiseCostMatrix::new(array![
            [0.1, 5.0, 6.0],
            [7.0, 0.2, 8.0],
            [9.0, 10.0, 0.3]
        ])
        .unwrap();
        let pc = permutation_costs(&c).unwrap();
        assert_eq!(pc.perms[pc.min_index], Permutation::identity(3));
    }

    #[test]
    fn tie_breaks_toward_lowest_index() {
        let c = PairwiseCostMatrix::new(array![[1.0, 1.0], [1.0, 1.0]]).unwrap();
        let pc = permutation_costs(&c).unwrap();
        assert_eq!(pc.min_index, 0);
    }

    #[test]
    fn assignment_oracle_all_equal_entries() {
        let c = PairwiseCostMatrix::new(Array2::from_elem((3, 3), 2.5)).unwrap();
        let (_, cost) = min_cost_assignment(&c).unwrap();
        assert_eq!(cost, 7.5);
    }

    #[test]
    fn assignment_oracle_agrees_with_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..100 {
            let s = [2, 3, 4][trial % 3];
            let c = PairwiseCostMatrix::new(Array2::from_shape_fn((s, s), |_| {
                rng.gen_range(0.0..10.0)
            }))
            .unwrap();
            let pc = permutation_costs(&c).unwrap();
            let (perm, cost) = min_cost_assignment(&c).unwrap();
            assert_eq!(cost, pc.min_cost(), "trial {trial}: oracle vs enumeration");
            assert_eq!(perm, pc.perms[pc.min_index], "trial {trial}: assignment");
        }
    }

    #[test]
    fn permutation_equivariance() {
        // permuting output rows permutes the cost matrix rows identically
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let outs: Vec<_> = (0..3)
            .map(|_| mag(Array2::from_shape_fn((3, 4), |_| rng.gen_range(0.0..1.0))))
            .collect();
        let tgts: Vec<_> = (0..3)
            .map(|_| mag(Array2::from_shape_fn((3, 4), |_| rng.gen_range(0.0..1.0))))
            .collect();
        let base = pairwise_costs(&outs, &tgts).unwrap();
        let shuffled = [outs[2].clone(), outs[0].clone(), outs[1].clone()];
        let moved = pairwise_costs(&shuffled, &tgts).unwrap();
        for t in 0..3 {
            assert_eq!(moved.get(0, t), base.get(2, t));
            assert_eq!(moved.get(1, t), base.get(0, t));
            assert_eq!(moved.get(2, t), base.get(1, t));
        }
        // the minimum over permutations is invariant under relabeling; the
        // sum order changes, so agreement is to rounding
        let pc_a = permutation_costs(&base).unwrap();
        let pc_b = permutation_costs(&moved).unwrap();
        assert!((pc_a.min_cost() - pc_b.min_cost()).abs() <= 1e-12 * pc_a.min_cost().abs());
    }
}
