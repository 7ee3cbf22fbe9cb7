//! Triangular lattice with helical boundary conditions.
//!
//! Sites live in a flat array of length `N = L * M`. Site `(x, y)` has flat
//! index `y * L + x`, and the six nearest neighbours of flat index `i` are
//! `i ± 1`, `i ± L` and `i ± (L + 1)`, all reduced modulo `N`. Wrapping the
//! flat index instead of each row turns the lattice into a single helix, so
//! every site has the same neighbour offsets and no row needs special casing.

use std::fmt;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Lipid species occupying a site.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum SiteType {
    A = 0,
    B = 1,
}

impl SiteType {
    pub fn other(self) -> Self {
        match self {
            SiteType::A => SiteType::B,
            SiteType::B => SiteType::A,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            SiteType::A => 'A',
            SiteType::B => 'B',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'A' => Some(SiteType::A),
            'B' => Some(SiteType::B),
            _ => None,
        }
    }
}

/// Lattice extent: `l` sites per row, `m` rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LatticeDims {
    l: usize,
    m: usize,
    /// The six neighbour deltas as non-negative offsets modulo `N`.
    offsets: [usize; 6],
}

impl LatticeDims {
    pub fn new(l: usize, m: usize) -> Result<Self> {
        let invalid = |reason| Err(Error::InvalidDims { l, m, reason });
        if l < 3 {
            return invalid("row length L must be at least 3");
        }
        if m < 2 {
            return invalid("row count M must be at least 2");
        }
        let n = match l.checked_mul(m) {
            Some(n) => n,
            None => return invalid("L*M overflows"),
        };
        if n < 14 {
            return invalid("lattice must hold at least 14 sites");
        }
        let offsets = [1, n - 1, l, n - l, l + 1, n - l - 1];
        Ok(Self { l, m, offsets })
    }

    /// Sites per row.
    pub fn l(&self) -> usize {
        self.l
    }

    /// Number of rows.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Total number of sites.
    pub fn n(&self) -> usize {
        self.l * self.m
    }

    /// Signed neighbour deltas in canonical order `+1, -1, +L, -L, +(L+1), -(L+1)`.
    pub fn deltas(&self) -> [isize; 6] {
        let l = self.l as isize;
        [1, -1, l, -l, l + 1, -(l + 1)]
    }

    /// Neighbour `dir` (index into [`deltas`](Self::deltas)) of site `i`.
    #[inline]
    pub fn neighbor(&self, i: usize, dir: usize) -> usize {
        let j = i + self.offsets[dir];
        let n = self.n();
        if j >= n {
            j - n
        } else {
            j
        }
    }

    /// The six neighbours of `i`, in the order of [`deltas`](Self::deltas).
    ///
    /// Panics if `i` is not a site index.
    #[inline]
    pub fn neighbors(&self, i: usize) -> [usize; 6] {
        assert!(i < self.n(), "site {i} out of range for N = {}", self.n());
        std::array::from_fn(|d| self.neighbor(i, d))
    }

    /// True when the six deltas are pairwise distinct modulo `N`, i.e. every
    /// site has six distinct neighbours.
    pub fn has_distinct_neighbors(&self) -> bool {
        let mut o = self.offsets;
        o.sort_unstable();
        o.windows(2).all(|w| w[0] != w[1])
    }

    /// Number of A sites for `fraction_a`, `fraction_a * N` rounded half up.
    pub fn count_for_fraction(&self, fraction_a: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&fraction_a) {
            return Err(Error::InvalidFraction(fraction_a));
        }
        let count = (fraction_a * self.n() as f64 + 0.5).floor() as usize;
        Ok(count.min(self.n()))
    }
}

impl fmt::Display for LatticeDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.l, self.m)
    }
}

/// Free-function form of [`LatticeDims::neighbors`].
pub fn neighbors(i: usize, dims: &LatticeDims) -> [usize; 6] {
    dims.neighbors(i)
}

/// Binary configuration on a helical triangular lattice.
///
/// Besides the site array the lattice caches the species counts and the
/// number of unlike nearest-neighbour contacts. Every mutation goes through
/// [`exchange`](Lattice::exchange), which keeps all three exact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lattice {
    dims: LatticeDims,
    sites: Vec<SiteType>,
    count_a: usize,
    unlike: u64,
}

impl Lattice {
    pub fn from_sites(dims: LatticeDims, sites: Vec<SiteType>) -> Result<Self> {
        if sites.len() != dims.n() {
            return Err(Error::MalformedFrame {
                line: 0,
                reason: format!("expected {} sites, got {}", dims.n(), sites.len()),
            });
        }
        let count_a = sites.iter().filter(|&&s| s == SiteType::A).count();
        let mut lattice = Self {
            dims,
            sites,
            count_a,
            unlike: 0,
        };
        lattice.unlike = lattice.count_unlike_contacts();
        Ok(lattice)
    }

    pub fn uniform(dims: LatticeDims, species: SiteType) -> Self {
        Self::from_sites(dims, vec![species; dims.n()]).expect("length matches")
    }

    /// `round(fraction_a * N)` A sites placed by a seeded uniform shuffle.
    pub fn init_random(dims: LatticeDims, fraction_a: f64, seed: u64) -> Result<Self> {
        let mut lattice = Self::init_block(dims, fraction_a)?;
        let mut rng = RngStream::new(seed).derive_str("init_random");
        rng.shuffle(&mut lattice.sites);
        lattice.unlike = lattice.count_unlike_contacts();
        Ok(lattice)
    }

    /// The first `round(fraction_a * N)` flat indices are A, the rest B.
    pub fn init_block(dims: LatticeDims, fraction_a: f64) -> Result<Self> {
        let count_a = dims.count_for_fraction(fraction_a)?;
        let sites = (0..dims.n())
            .map(|i| if i < count_a { SiteType::A } else { SiteType::B })
            .collect();
        Self::from_sites(dims, sites)
    }

    pub fn dims(&self) -> &LatticeDims {
        &self.dims
    }

    pub fn n(&self) -> usize {
        self.sites.len()
    }

    pub fn sites(&self) -> &[SiteType] {
        &self.sites
    }

    #[inline]
    pub fn get(&self, i: usize) -> SiteType {
        self.sites[i]
    }

    pub fn count_a(&self) -> usize {
        self.count_a
    }

    pub fn count_b(&self) -> usize {
        self.n() - self.count_a
    }

    pub fn count(&self, species: SiteType) -> usize {
        match species {
            SiteType::A => self.count_a(),
            SiteType::B => self.count_b(),
        }
    }

    pub fn is_single_species(&self) -> bool {
        self.count_a == 0 || self.count_a == self.n()
    }

    /// Cached number of unordered unlike nearest-neighbour pairs.
    pub fn unlike_contacts(&self) -> u64 {
        self.unlike
    }

    /// Recounts unlike contacts from scratch: each ordered pair `(i, j)` with
    /// `j` in `neighbors(i)` and differing types, halved.
    pub fn count_unlike_contacts(&self) -> u64 {
        let mut ordered = 0u64;
        for i in 0..self.n() {
            let t = self.sites[i];
            for d in 0..6 {
                if self.sites[self.dims.neighbor(i, d)] != t {
                    ordered += 1;
                }
            }
        }
        ordered / 2
    }

    /// Change in the unlike-contact count if sites `i` and `j` were swapped.
    ///
    /// Reads only the neighbourhoods of `i` and `j`. Bonds between `i` and
    /// `j` themselves stay unlike after the swap and are skipped.
    #[inline]
    pub fn delta_unlike(&self, i: usize, j: usize) -> i64 {
        assert!(i != j, "exchange partners must differ");
        let ti = self.sites[i];
        let tj = self.sites[j];
        if ti == tj {
            return 0;
        }
        self.half_delta(i, j, ti) + self.half_delta(j, i, tj)
    }

    /// Contribution of site `i` (currently of type `t`) to the swap delta.
    #[inline]
    fn half_delta(&self, i: usize, partner: usize, t: SiteType) -> i64 {
        let mut bonds = 0i64;
        let mut unlike = 0i64;
        for d in 0..6 {
            let k = self.dims.neighbor(i, d);
            if k != partner {
                bonds += 1;
                unlike += i64::from(self.sites[k] != t);
            }
        }
        // after the swap, formerly like bonds become unlike and vice versa
        bonds - 2 * unlike
    }

    /// Swaps the types at `i` and `j`. Panics if `i == j` or either index is
    /// out of range.
    pub fn exchange(&mut self, i: usize, j: usize) {
        assert!(i < self.n() && j < self.n(), "site index out of range");
        let delta = self.delta_unlike(i, j);
        self.apply_exchange(i, j, delta);
    }

    /// Swap with a precomputed contact delta.
    #[inline]
    pub(crate) fn apply_exchange(&mut self, i: usize, j: usize, delta_unlike: i64) {
        self.sites.swap(i, j);
        self.unlike = (self.unlike as i64 + delta_unlike) as u64;
    }

    /// One frame line: `N` characters, `A` or `B`, in flat index order.
    pub fn to_frame_line(&self) -> String {
        self.sites.iter().map(|s| s.as_char()).collect()
    }

    /// Parses a frame line. `line_no` is reported in errors.
    pub fn from_frame_line(dims: LatticeDims, line: &str, line_no: usize) -> Result<Self> {
        let line = line.trim_end_matches(['\r', '\n']);
        let mut sites = Vec::with_capacity(dims.n());
        for (col, c) in line.chars().enumerate() {
            match SiteType::from_char(c) {
                Some(s) => sites.push(s),
                None => {
                    return Err(Error::MalformedFrame {
                        line: line_no,
                        reason: format!("bad site character {c:?} at column {}", col + 1),
                    })
                }
            }
        }
        if sites.len() != dims.n() {
            return Err(Error::MalformedFrame {
                line: line_no,
                reason: format!("frame has {} sites, expected {}", sites.len(), dims.n()),
            });
        }
        Self::from_sites(dims, sites)
    }

    /// Checks the cached counts against a full recount.
    pub fn is_consistent(&self) -> bool {
        let a = self.sites.iter().filter(|&&s| s == SiteType::A).count();
        a == self.count_a && self.unlike == self.count_unlike_contacts()
    }
}
