//! Populations, replicate libraries and aligned replicate studies.
//!
//! Clone identifiers are opaque strings. Storage is sparse everywhere: a
//! replicate only holds the clones it observed, and zero counts are never
//! stored (an absent clone and a zero count are the same thing).
//!
//! A [`ReplicateStudy`] interns the union of clone ids into a sorted universe
//! and keeps every replicate as a sorted list of `(universe index, count)`.
//! Inner products between replicates are then accumulated as exact integer
//! sums of count products and divided once, so they do not depend on the
//! order of replicates or on how clones are labelled.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Absolute tolerance on `Σ p(j) = 1`.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// A probability vector over clones, stored sparsely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloneFrequencyVector {
    entries: BTreeMap<String, f64>,
}

impl CloneFrequencyVector {
    /// Validates and stores `entries`. Zero frequencies are dropped.
    pub fn new<K, I>(entries: I) -> Result<Self>
    where
        K: Into<String>,
        I: IntoIterator<Item = (K, f64)>,
    {
        let mut map = BTreeMap::new();
        for (id, f) in entries {
            let id = id.into();
            if !f.is_finite() || f < 0.0 || f > 1.0 {
                return Err(Error::InvalidFrequencies(format!(
                    "frequency {f} for clone {id:?} is outside [0, 1]"
                )));
            }
            if f == 0.0 {
                continue;
            }
            if map.insert(id.clone(), f).is_some() {
                return Err(Error::InvalidFrequencies(format!("clone {id:?} listed twice")));
            }
        }
        if map.is_empty() {
            return Err(Error::InvalidFrequencies("no positive entries".into()));
        }
        let total: f64 = map.values().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidFrequencies(format!("frequencies sum to {total}, not 1")));
        }
        Ok(Self { entries: map })
    }

    /// Normalizes nonnegative weights to a probability vector.
    pub fn from_weights<K, I>(weights: I) -> Result<Self>
    where
        K: Into<String>,
        I: IntoIterator<Item = (K, f64)>,
    {
        let raw: Vec<(String, f64)> = weights.into_iter().map(|(k, w)| (k.into(), w)).collect();
        if raw.iter().any(|(_, w)| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidFrequencies(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = raw.iter().map(|(_, w)| w).sum();
        if total <= 0.0 {
            return Err(Error::InvalidFrequencies("weights sum to zero".into()));
        }
        Self::new(raw.into_iter().map(|(k, w)| (k, w / total)))
    }

    /// Checks the extra requirement on a ground-truth population: at least
    /// three clones with positive frequency.
    pub fn validate_population(&self) -> Result<()> {
        if self.support_size() < 3 {
            return Err(Error::InvalidFrequencies(format!(
                "a population needs at least 3 clones, got {}",
                self.support_size()
            )));
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> f64 {
        self.entries.get(id).copied().unwrap_or(0.0)
    }

    pub fn support_size(&self) -> usize {
        self.entries.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// `θ = Σ_j p(j)²`.
    pub fn squared_norm(&self) -> f64 {
        self.entries.values().map(|f| f * f).sum()
    }
}

/// `Σ_j v(j)²`; lies in `[1/support, 1]`.
pub fn squared_norm(v: &CloneFrequencyVector) -> f64 {
    v.squared_norm()
}

/// One sequenced library: clone read counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateObservation {
    name: String,
    counts: BTreeMap<String, u64>,
    total_reads: u64,
}

impl ReplicateObservation {
    /// Builds an observation, dropping zero counts. Duplicate ids are an
    /// error; they are never summed.
    pub fn new<N, K, I>(name: N, counts: I) -> Result<Self>
    where
        N: Into<String>,
        K: Into<String>,
        I: IntoIterator<Item = (K, u64)>,
    {
        let name = name.into();
        let mut map = BTreeMap::new();
        let mut seen = std::collections::BTreeSet::new();
        let mut total: u64 = 0;
        for (id, c) in counts {
            let id = id.into();
            if !seen.insert(id.clone()) {
                return Err(Error::InvalidSpec(format!(
                    "replicate {name:?} lists clone {id:?} twice"
                )));
            }
            if c == 0 {
                continue;
            }
            total = total
                .checked_add(c)
                .ok_or_else(|| Error::InvalidSpec(format!("replicate {name:?}: read total overflows")))?;
            map.insert(id, c);
        }
        Ok(Self {
            name,
            counts: map,
            total_reads: total,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    pub fn total_reads(&self) -> u64 {
        self.total_reads
    }

    /// `C_i`: number of clones with a positive count.
    pub fn distinct_clones(&self) -> usize {
        self.counts.len()
    }

    /// Relative frequencies `p_i = counts / total_reads`.
    pub fn frequencies(&self) -> Result<CloneFrequencyVector> {
        if self.total_reads == 0 {
            return Err(Error::EmptyReplicate {
                replicate: self.name.clone(),
            });
        }
        let total = self.total_reads as f64;
        CloneFrequencyVector::new(self.counts.iter().map(|(k, &c)| (k.clone(), c as f64 / total)))
    }
}

/// Free-function form of [`ReplicateObservation::frequencies`].
pub fn frequencies(rep: &ReplicateObservation) -> Result<CloneFrequencyVector> {
    rep.frequencies()
}

/// `n` replicate libraries of the same sample, aligned on the union of
/// their clone ids (the observed columns of the clone × replicate matrix).
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateStudy {
    replicates: Vec<ReplicateObservation>,
    universe: Vec<String>,
    columns: Vec<Vec<(u32, u64)>>,
}

impl ReplicateStudy {
    /// Builds a study from unnamed count maps; replicates are named
    /// `rep1`, `rep2`, ... in input order.
    pub fn from_counts<M, K, I>(raw: I) -> Result<Self>
    where
        I: IntoIterator<Item = M>,
        M: IntoIterator<Item = (K, u64)>,
        K: Into<String>,
    {
        let reps = raw
            .into_iter()
            .enumerate()
            .map(|(i, m)| ReplicateObservation::new(format!("rep{}", i + 1), m))
            .collect::<Result<Vec<_>>>()?;
        Self::new(reps)
    }

    pub fn new(replicates: Vec<ReplicateObservation>) -> Result<Self> {
        if replicates.len() < 2 {
            return Err(Error::TooFewReplicates {
                needed: 2,
                got: replicates.len(),
            });
        }
        if let Some(r) = replicates.iter().find(|r| r.total_reads == 0) {
            return Err(Error::EmptyReplicate {
                replicate: r.name.clone(),
            });
        }
        let mut universe: Vec<String> = replicates.iter().flat_map(|r| r.counts.keys().cloned()).collect();
        universe.sort_unstable();
        universe.dedup();
        let index: BTreeMap<&str, u32> = universe
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i as u32))
            .collect();
        // BTreeMap iteration is in key order, so columns come out sorted.
        let columns = replicates
            .iter()
            .map(|r| r.counts.iter().map(|(k, &c)| (index[k.as_str()], c)).collect())
            .collect();
        Ok(Self {
            replicates,
            universe,
            columns,
        })
    }

    pub fn n(&self) -> usize {
        self.replicates.len()
    }

    pub fn replicates(&self) -> &[ReplicateObservation] {
        &self.replicates
    }

    /// Sorted union of clone ids over all replicates.
    pub fn universe(&self) -> &[String] {
        &self.universe
    }

    pub fn distinct_clones(&self) -> Vec<usize> {
        self.replicates.iter().map(|r| r.distinct_clones()).collect()
    }

    pub fn total_reads(&self) -> Vec<u64> {
        self.replicates.iter().map(|r| r.total_reads).collect()
    }

    /// The study with replicate `i` deleted. Needs `n ≥ 3`.
    pub fn without(&self, i: usize) -> Result<Self> {
        let reps = self
            .replicates
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, r)| r.clone())
            .collect();
        Self::new(reps)
    }

    /// Number of replicates in which each universe clone is present.
    pub(crate) fn incidence(&self) -> Vec<u32> {
        let mut inc = vec![0u32; self.universe.len()];
        for col in &self.columns {
            for &(j, _) in col {
                inc[j as usize] += 1;
            }
        }
        inc
    }

    /// Gram matrix of the frequency columns plus the per-clone second
    /// moments used by the shrinkage regularizer.
    pub fn gram(&self) -> Gram {
        let n = self.n();
        let mut dot = vec![vec![0u128; n]; n];
        let mut dot4 = vec![vec![0u128; n]; n];
        for k in 0..n {
            for l in k..n {
                let (d, d4) = merge_products(&self.columns[k], &self.columns[l]);
                dot[k][l] = d;
                dot[l][k] = d;
                dot4[k][l] = d4;
                dot4[l][k] = d4;
            }
        }
        let totals: Vec<f64> = self.replicates.iter().map(|r| r.total_reads as f64).collect();
        let g = DMatrix::from_fn(n, n, |k, l| dot[k][l] as f64 / (totals[k] * totals[l]));
        let h = DMatrix::from_fn(n, n, |k, l| {
            let t = totals[k] * totals[l];
            dot4[k][l] as f64 / (t * t)
        });
        Gram {
            g,
            h,
            richness: self.replicates.iter().map(|r| r.distinct_clones() as f64).collect(),
            universe_size: self.universe.len(),
        }
    }
}

/// `(Σ a·b, Σ (a·b)²)` over the clones two sorted sparse columns share.
fn merge_products(a: &[(u32, u64)], b: &[(u32, u64)]) -> (u128, u128) {
    let (mut i, mut j) = (0, 0);
    let (mut s, mut s4) = (0u128, 0u128);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                let p = a[i].1 as u128 * b[j].1 as u128;
                s += p;
                s4 += p * p;
                i += 1;
                j += 1;
            }
        }
    }
    (s, s4)
}

/// `G = X′X` for the frequency matrix `X` (columns `p_1 … p_n`), together
/// with `H_kl = Σ_j p_k(j)² p_l(j)²`, the replicate richness `C_i`, and the
/// size of the observed universe.
#[derive(Debug, Clone, PartialEq)]
pub struct Gram {
    pub g: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub richness: Vec<f64>,
    pub universe_size: usize,
}

impl Gram {
    pub fn n(&self) -> usize {
        self.richness.len()
    }

    /// Restriction to the replicates in `keep` (in that order). The
    /// universe size is carried over unchanged.
    pub fn subset(&self, keep: &[usize]) -> Gram {
        let m = keep.len();
        Gram {
            g: DMatrix::from_fn(m, m, |a, b| self.g[(keep[a], keep[b])]),
            h: DMatrix::from_fn(m, m, |a, b| self.h[(keep[a], keep[b])]),
            richness: keep.iter().map(|&k| self.richness[k]).collect(),
            universe_size: self.universe_size,
        }
    }

    /// Replicate indices sorted by content: `G_kk`, then `C_k`, then `H_kk`,
    /// then the sorted off-diagonal row of `G`. Replicates that tie on all of
    /// these keep their relative order.
    pub fn canonical_order(&self) -> Vec<usize> {
        let n = self.n();
        let row = |k: usize| {
            let mut r: Vec<f64> = (0..n).filter(|&l| l != k).map(|l| self.g[(k, l)]).collect();
            r.sort_by(f64::total_cmp);
            r
        };
        let rows: Vec<Vec<f64>> = (0..n).map(row).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            self.g[(a, a)]
                .total_cmp(&self.g[(b, b)])
                .then(self.richness[a].total_cmp(&self.richness[b]))
                .then(self.h[(a, a)].total_cmp(&self.h[(b, b)]))
                .then_with(|| {
                    rows[a]
                        .iter()
                        .zip(&rows[b])
                        .map(|(x, y)| x.total_cmp(y))
                        .find(|o| o.is_ne())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
        });
        order
    }

    /// The same replicates in [`canonical_order`](Self::canonical_order).
    /// Entries are exact functions of the counts, so every permutation of a
    /// study yields the same canonical Gram matrix bit for bit.
    pub fn canonical(&self) -> Gram {
        self.subset(&self.canonical_order())
    }

    /// All replicates but `i`.
    pub fn without(&self, i: usize) -> Gram {
        let keep: Vec<usize> = (0..self.n()).filter(|&k| k != i).collect();
        self.subset(&keep)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(pairs: &[(&str, u64)]) -> Vec<(String, u64)> {
        pairs.iter().map(|&(k, c)| (k.to_string(), c)).collect()
    }

    #[test]
    fn from_counts_bookkeeping() {
        let study = ReplicateStudy::from_counts(vec![map(&[("a", 2), ("b", 2)]), map(&[("a", 1), ("c", 3)])]).unwrap();
        assert_eq!(study.universe(), &["a", "b", "c"]);
        assert_eq!(study.distinct_clones(), vec![2, 2]);
        assert_eq!(study.total_reads(), vec![4, 4]);
    }

    #[test]
    fn single_replicate_is_rejected() {
        let err = ReplicateStudy::from_counts(vec![map(&[("a", 5)])]).unwrap_err();
        assert!(matches!(err, Error::TooFewReplicates { needed: 2, got: 1 }));
    }

    #[test]
    fn explicit_zero_is_dropped() {
        let rep = ReplicateObservation::new("r", map(&[("a", 1), ("b", 0)])).unwrap();
        assert_eq!(rep.distinct_clones(), 1);
        assert_eq!(rep.total_reads(), 1);
        assert!(!rep.counts().contains_key("b"));
    }

    #[test]
    fn empty_replicate_is_rejected() {
        let err = ReplicateStudy::from_counts(vec![map(&[("a", 1)]), map(&[("b", 0)])]).unwrap_err();
        assert!(matches!(err, Error::EmptyReplicate { replicate } if replicate == "rep2"));
    }

    #[test]
    fn frequency_examples() {
        let f = |pairs: &[(&str, u64)]| {
            ReplicateObservation::new("r", map(pairs))
                .unwrap()
                .frequencies()
                .unwrap()
        };
        let v = f(&[("a", 2), ("b", 2)]);
        assert_eq!((v.get("a"), v.get("b")), (0.5, 0.5));
        assert_eq!(f(&[("a", 4)]).get("a"), 1.0);
        let v = f(&[("a", 1), ("b", 3)]);
        assert_eq!((v.get("a"), v.get("b")), (0.25, 0.75));
    }

    #[test]
    fn frequencies_of_empty_replicate() {
        let rep = ReplicateObservation::new("r", Vec::<(String, u64)>::new()).unwrap();
        assert!(matches!(rep.frequencies(), Err(Error::EmptyReplicate { .. })));
    }

    #[test]
    fn squared_norm_examples() {
        let point = CloneFrequencyVector::new([("a", 1.0)]).unwrap();
        assert_eq!(squared_norm(&point), 1.0);
        let half = CloneFrequencyVector::new([("a", 0.5), ("b", 0.5)]).unwrap();
        assert_eq!(squared_norm(&half), 0.5);
        let uniform = CloneFrequencyVector::new([("a", 0.25), ("b", 0.25), ("c", 0.25), ("d", 0.25)]).unwrap();
        assert_eq!(squared_norm(&uniform), 0.25);
    }

    #[test]
    fn invalid_frequency_vectors() {
        assert!(CloneFrequencyVector::new([("a", 0.5), ("b", 0.4)]).is_err());
        assert!(CloneFrequencyVector::new([("a", -0.5), ("b", 1.5)]).is_err());
        assert!(CloneFrequencyVector::new([("a", 0.5), ("a", 0.5)]).is_err());
        let two = CloneFrequencyVector::new([("a", 0.5), ("b", 0.5)]).unwrap();
        assert!(two.validate_population().is_err());
    }

    #[test]
    fn gram_matches_direct_inner_products() {
        let study = ReplicateStudy::from_counts(vec![map(&[("a", 2), ("b", 2)]), map(&[("a", 1), ("c", 3)])]).unwrap();
        let gram = study.gram();
        assert_eq!(gram.g[(0, 0)], 0.5);
        assert_eq!(gram.g[(1, 1)], 0.625);
        assert_eq!(gram.g[(0, 1)], 0.125);
        assert_eq!(gram.h[(0, 1)], 0.125 * 0.125);
        assert_eq!(gram.universe_size, 3);
    }

    fn counts_strategy() -> impl Strategy<Value = Vec<u64>> {
        prop::collection::vec(0u64..50, 1..12).prop_filter("nonzero", |v| v.iter().any(|&c| c > 0))
    }

    proptest! {
        #[test]
        fn norm_bounds(counts in counts_strategy()) {
            let rep = ReplicateObservation::new(
                "r",
                counts.iter().enumerate().map(|(i, &c)| (format!("c{i}"), c)),
            ).unwrap();
            let p = rep.frequencies().unwrap();
            let theta = p.squared_norm();
            prop_assert!(theta <= 1.0 + 1e-15);
            prop_assert!(theta >= 1.0 / p.support_size() as f64 - 1e-15);
        }

        #[test]
        fn frequencies_invariant_to_count_scaling(counts in counts_strategy(), factor in 1u64..20) {
            let make = |f: u64| ReplicateObservation::new(
                "r",
                counts.iter().enumerate().map(|(i, &c)| (format!("c{i}"), c * f)),
            ).unwrap().frequencies().unwrap();
            let a = make(1);
            let b = make(factor);
            for (id, v) in a.iter() {
                prop_assert!((v - b.get(id)).abs() < 1e-15);
            }
        }

        #[test]
        fn gram_invariant_to_relabeling(
            (counts, labels) in counts_strategy().prop_flat_map(|c| {
                let n = c.len();
                (Just(c), Just((0..n).collect::<Vec<_>>()).prop_shuffle())
            })
        ) {
            let other: Vec<u64> = counts.iter().rev().copied().collect();
            let build = |name: fn(usize) -> String, perm: &[usize]| {
                ReplicateStudy::new(vec![
                    ReplicateObservation::new("a", counts.iter().enumerate().map(|(i, &c)| (name(perm[i]), c))).unwrap(),
                    ReplicateObservation::new("b", other.iter().enumerate().map(|(i, &c)| (name(perm[i]), c))).unwrap(),
                ]).unwrap().gram()
            };
            let identity: Vec<usize> = (0..counts.len()).collect();
            let ga = build(|i| format!("c{i}"), &identity);
            let gb = build(|i| format!("z{i:04}"), &labels);
            prop_assert_eq!(ga.g, gb.g);
            prop_assert_eq!(ga.h, gb.h);
        }
    }
}
