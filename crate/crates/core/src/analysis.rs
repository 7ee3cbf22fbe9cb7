//! Cluster labelling and neighbour-similarity observables.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::lattice::{Lattice, SiteType};
use crate::rng::RngStream;

/// Site-to-cluster map for one species.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterLabeling {
    pub target: SiteType,
    /// Cluster id per site; 0 marks sites of the other species. Ids run from
    /// 1 in order of each cluster's smallest site index.
    pub labels: Vec<u32>,
    /// `sizes[id - 1]` is the number of sites in cluster `id`.
    pub sizes: Vec<usize>,
}

impl ClusterLabeling {
    pub fn n_clusters(&self) -> usize {
        self.sizes.len()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClusterSizeDistribution {
    /// size -> number of clusters of that size
    pub histogram: BTreeMap<usize, usize>,
    pub step: Option<u64>,
}

impl ClusterSizeDistribution {
    pub fn n_clusters(&self) -> usize {
        self.histogram.values().sum()
    }

    /// `Σ s·n_s`, the number of target sites.
    pub fn total_sites(&self) -> usize {
        self.histogram.iter().map(|(s, n)| s * n).sum()
    }
}

/// Disjoint-set forest with path halving and union by size.
struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
    }
}

/// Hoshen-Kopelman labelling on the six-neighbour helical lattice.
///
/// Each undirected bond is visited once, as `(i, i + d)` for the three
/// forward deltas `+1`, `+L`, `+(L+1)`; like-typed target bonds merge
/// provisional labels in a union-find forest. A final scan in index order
/// assigns canonical ids. Cost is `O(N α(N))`.
pub fn hoshen_kopelman(lattice: &Lattice, target: SiteType) -> ClusterLabeling {
    let dims = lattice.dims();
    let n = lattice.n();
    let mut uf = UnionFind::new(n);
    // forward deltas are directions 0, 2 and 4
    for i in 0..n {
        if lattice.get(i) != target {
            continue;
        }
        for dir in [0, 2, 4] {
            let j = dims.neighbor(i, dir);
            if lattice.get(j) == target {
                uf.union(i as u32, j as u32);
            }
        }
    }
    let mut labels = vec![0u32; n];
    let mut id_of_root = vec![0u32; n];
    let mut sizes = Vec::new();
    for (i, label) in labels.iter_mut().enumerate() {
        if lattice.get(i) != target {
            continue;
        }
        let root = uf.find(i as u32) as usize;
        if id_of_root[root] == 0 {
            sizes.push(0);
            id_of_root[root] = sizes.len() as u32;
        }
        let id = id_of_root[root];
        *label = id;
        sizes[id as usize - 1] += 1;
    }
    ClusterLabeling {
        target,
        labels,
        sizes,
    }
}

pub fn cluster_size_distribution(labeling: &ClusterLabeling) -> ClusterSizeDistribution {
    let mut histogram = BTreeMap::new();
    for &s in &labeling.sizes {
        *histogram.entry(s).or_insert(0) += 1;
    }
    ClusterSizeDistribution {
        histogram,
        step: None,
    }
}

/// Number-averaged cluster size `Σ s·n_s / Σ n_s`.
pub fn average_cluster_size(distribution: &ClusterSizeDistribution) -> Result<f64> {
    let clusters = distribution.n_clusters();
    if clusters == 0 {
        return Err(Error::EmptyDistribution);
    }
    Ok(distribution.total_sites() as f64 / clusters as f64)
}

/// Fraction of first neighbours: every site draws one random neighbour and
/// the result is the share of draws that hit the same species.
pub fn fraction_first_neighbors(lattice: &Lattice, rng: &mut RngStream) -> f64 {
    let dims = lattice.dims();
    let same = (0..lattice.n())
        .filter(|&i| lattice.get(i) == lattice.get(dims.neighbor(i, rng.below(6))))
        .count();
    same as f64 / lattice.n() as f64
}

/// Expectation of [`fraction_first_neighbors`] over the neighbour draws:
/// like ordered neighbour pairs divided by `6N`.
pub fn fraction_first_neighbors_exact(lattice: &Lattice) -> f64 {
    let ordered_unlike = 2 * lattice.unlike_contacts();
    let total = 6 * lattice.n() as u64;
    (total - ordered_unlike) as f64 / total as f64
}

/// Expected fraction of first neighbours for a uniformly random arrangement
/// of `n_a` A sites among `n`: `[n_a(n_a-1) + n_b(n_b-1)] / [n(n-1)]`.
/// For `n_a = n/2` this is `(n/2 - 1)/(n - 1)`.
pub fn ideal_mixing_ffn(n_a: usize, n: usize) -> f64 {
    let n_b = n - n_a;
    let like = n_a as f64 * (n_a as f64 - 1.0) + n_b as f64 * (n_b as f64 - 1.0);
    like / (n as f64 * (n as f64 - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeDims;
    use proptest::prelude::*;
    use std::collections::VecDeque;

    fn d97() -> LatticeDims {
        LatticeDims::new(9, 7).unwrap()
    }

    /// Breadth-first flood fill, independent of the union-find path.
    fn flood_sizes(lat: &Lattice, target: SiteType) -> Vec<usize> {
        let d = lat.dims();
        let mut seen = vec![false; lat.n()];
        let mut sizes = Vec::new();
        for start in 0..lat.n() {
            if seen[start] || lat.get(start) != target {
                continue;
            }
            let mut q = VecDeque::from([start]);
            seen[start] = true;
            let mut size = 0;
            while let Some(s) = q.pop_front() {
                size += 1;
                for nb in d.neighbors(s) {
                    if !seen[nb] && lat.get(nb) == target {
                        seen[nb] = true;
                        q.push_back(nb);
                    }
                }
            }
            sizes.push(size);
        }
        sizes.sort_unstable();
        sizes
    }

    #[test]
    fn trivial_labelings() {
        let all_a = Lattice::uniform(d97(), SiteType::A);
        let l = hoshen_kopelman(&all_a, SiteType::A);
        assert_eq!(l.sizes, vec![63]);
        assert_eq!(
            cluster_size_distribution(&l).histogram,
            BTreeMap::from([(63, 1)])
        );

        let mut sites = vec![SiteType::B; 63];
        sites[40] = SiteType::A;
        let single = Lattice::from_sites(d97(), sites).unwrap();
        let l = hoshen_kopelman(&single, SiteType::A);
        assert_eq!(l.sizes, vec![1]);
        assert_eq!(l.labels[40], 1);
        let dist = cluster_size_distribution(&l);
        assert_eq!(average_cluster_size(&dist).unwrap(), 1.0);

        let none = hoshen_kopelman(&Lattice::uniform(d97(), SiteType::B), SiteType::A);
        let dist = cluster_size_distribution(&none);
        assert!(dist.histogram.is_empty());
        assert!(matches!(average_cluster_size(&dist), Err(Error::EmptyDistribution)));
    }

    #[test]
    fn average_examples() {
        let d = ClusterSizeDistribution {
            histogram: BTreeMap::from([(5, 1)]),
            step: None,
        };
        assert_eq!(average_cluster_size(&d).unwrap(), 5.0);
        let d = ClusterSizeDistribution {
            histogram: BTreeMap::from([(1, 3), (7, 1)]),
            step: None,
        };
        assert_eq!(average_cluster_size(&d).unwrap(), 2.5);
    }

    #[test]
    fn matches_flood_fill() {
        let mut seed = 0;
        for f in 1..=9 {
            for _ in 0..50 {
                let lat = Lattice::init_random(d97(), f as f64 / 10.0, seed).unwrap();
                seed += 1;
                for target in [SiteType::A, SiteType::B] {
                    let l = hoshen_kopelman(&lat, target);
                    let mut sizes = l.sizes.clone();
                    sizes.sort_unstable();
                    assert_eq!(sizes, flood_sizes(&lat, target));
                    let dist = cluster_size_distribution(&l);
                    assert_eq!(dist.total_sites(), lat.count(target));
                }
            }
        }
    }

    #[test]
    fn labels_are_connected_components() {
        let lat = Lattice::init_random(d97(), 0.5, 17).unwrap();
        let l = hoshen_kopelman(&lat, SiteType::A);
        let d = lat.dims();
        for i in 0..63 {
            for j in d.neighbors(i) {
                if lat.get(i) == SiteType::A && lat.get(j) == SiteType::A {
                    assert_eq!(l.labels[i], l.labels[j]);
                }
            }
            assert_eq!(l.labels[i] == 0, lat.get(i) != SiteType::A);
        }
        // canonical order: first appearance of each id is increasing
        let mut next = 1;
        for &id in &l.labels {
            if id == next {
                next += 1;
            }
            assert!(id < next);
        }
    }

    #[test]
    fn ffn_exact_examples() {
        assert_eq!(fraction_first_neighbors_exact(&Lattice::uniform(d97(), SiteType::B)), 1.0);
        let mut sites = vec![SiteType::B; 63];
        sites[3] = SiteType::A;
        let single = Lattice::from_sites(d97(), sites).unwrap();
        assert_eq!(fraction_first_neighbors_exact(&single), 366.0 / 378.0);
        let mut rng = RngStream::new(1);
        assert_eq!(
            fraction_first_neighbors(&Lattice::uniform(d97(), SiteType::A), &mut rng),
            1.0
        );
    }

    #[test]
    fn ffn_exact_matches_double_loop() {
        for seed in 0..100 {
            let lat = Lattice::init_random(d97(), 0.37, seed).unwrap();
            let d = lat.dims();
            let mut like = 0;
            for i in 0..63 {
                for j in d.neighbors(i) {
                    like += usize::from(lat.get(i) == lat.get(j));
                }
            }
            assert_eq!(fraction_first_neighbors_exact(&lat), like as f64 / 378.0);
        }
    }

    #[test]
    fn stochastic_ffn_converges_to_exact() {
        let lat = Lattice::init_random(d97(), 0.5, 4).unwrap();
        let exact = fraction_first_neighbors_exact(&lat);
        let mut rng = RngStream::new(12);
        let reps = 10_000;
        let mean: f64 =
            (0..reps).map(|_| fraction_first_neighbors(&lat, &mut rng)).sum::<f64>() / reps as f64;
        // per-evaluation sd is at most sqrt(0.25 / 63)
        let se = (0.25 / 63.0 / reps as f64).sqrt();
        assert!((mean - exact).abs() < 3.0 * se, "{mean} vs {exact}");
    }

    #[test]
    fn ideal_mixing_expectation() {
        assert!((ideal_mixing_ffn(4900, 9800) - 4899.0 / 9799.0).abs() < 1e-15);
        // exact average over all arrangements equals the formula: average of
        // FFN_exact over many shuffles
        let d = d97();
        let reps = 20_000;
        let mut sum = 0.0;
        for seed in 0..reps {
            sum += fraction_first_neighbors_exact(&Lattice::init_random(d, 0.5, seed).unwrap());
        }
        let mean = sum / reps as f64;
        assert!((mean - ideal_mixing_ffn(32, 63)).abs() < 0.002, "{mean}");
    }

    proptest! {
        #[test]
        fn cluster_multiset_is_shift_invariant(seed in any::<u64>(), shift in 1usize..63) {
            let lat = Lattice::init_random(d97(), 0.45, seed).unwrap();
            let shifted = Lattice::from_sites(d97(), (0..63).map(|i| lat.get((i + shift) % 63)).collect()).unwrap();
            let mut a = hoshen_kopelman(&lat, SiteType::A).sizes;
            let mut b = hoshen_kopelman(&shifted, SiteType::A).sizes;
            a.sort_unstable();
            b.sort_unstable();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn ffn_exact_in_unit_interval(seed in any::<u64>(), f in 0.0f64..=1.0) {
            let lat = Lattice::init_random(d97(), f, seed).unwrap();
            let v = fraction_first_neighbors_exact(&lat);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v == 1.0, lat.is_single_species());
        }
    }
}
