//! Massively parallel Kawasaki kinetics over seven-site domains.
//!
//! A minimal domain is a centre site plus its six neighbours. When `N` is a
//! multiple of 7 and the six neighbour deltas fall into the six distinct
//! non-zero residue classes modulo 7, the centres `{ i : i mod 7 = k }` give
//! domains that tile the lattice exactly, for each of the seven offsets `k`.
//! One sweep lets every domain's centre attempt a Kawasaki exchange with a
//! uniformly chosen neighbour, so a sweep proposes `N / 7` exchanges and any
//! ordered neighbour pair is proposed with probability `1/7 * 1/6`.
//!
//! Domains write only their own sites, but evaluating an exchange also reads
//! the neighbours of the non-centre partner, which belong to adjacent
//! domains. To keep each acceptance exact, the domains of a decomposition are
//! split into colour classes of pairwise non-adjacent domains; the sweep runs
//! one class at a time and every domain within a class is independent of the
//! others. Randomness for a domain is derived from
//! `(seed, step, sweep, domain ordinal)`, so the outcome does not depend on
//! how many lanes process a class or in which order.

use rayon::prelude::*;

use crate::energy::{AcceptanceTable, InteractionModel};
use crate::error::{Error, Result};
use crate::kinetics::{Dynamics, Outcome, StepStats};
use crate::lattice::{Lattice, LatticeDims};
use crate::rng::{self, RngStream};

/// Number of sites in a minimal domain, and the number of decompositions.
pub const DOMAIN_SIZE: usize = 7;

/// Validity of seven-site domain coverage for a lattice size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Coverage {
    pub dims: LatticeDims,
    /// Neighbour deltas modulo 7, in [`LatticeDims::deltas`] order.
    pub residues: [u8; 6],
    /// `N mod 7 == 0` and the residues are distinct and non-zero.
    pub residue_test: bool,
    /// Domains centred on multiples of 7 cover every site exactly once.
    pub partition_test: bool,
}

impl Coverage {
    pub fn is_valid(&self) -> bool {
        self.residue_test && self.partition_test
    }

    /// The two independent checks agree.
    pub fn is_consistent(&self) -> bool {
        self.residue_test == self.partition_test
    }
}

pub fn validate_dims(dims: LatticeDims) -> Coverage {
    let residues = dims
        .deltas()
        .map(|d| d.rem_euclid(DOMAIN_SIZE as isize) as u8);
    let mut seen = [false; DOMAIN_SIZE];
    let mut distinct = true;
    for &r in &residues {
        distinct &= r != 0 && !seen[r as usize];
        seen[r as usize] = true;
    }
    let residue_test = dims.n().is_multiple_of(DOMAIN_SIZE) && distinct;
    Coverage {
        dims,
        residues,
        residue_test,
        partition_test: partitions(dims, 0),
    }
}

/// Constructive check: domains centred on `i ≡ k (mod 7)` cover each site once.
fn partitions(dims: LatticeDims, k: usize) -> bool {
    let n = dims.n();
    if !n.is_multiple_of(DOMAIN_SIZE) {
        return false;
    }
    let mut hits = vec![0u8; n];
    for c in (k..n).step_by(DOMAIN_SIZE) {
        hits[c] += 1;
        for j in dims.neighbors(c) {
            hits[j] += 1;
        }
    }
    hits.iter().all(|&h| h == 1)
}

/// Nearest size `(L, M)` with `L >= target_l`, `M >= target_m` that admits
/// coverage. Candidates are ordered by total increment, and among equal
/// increments the one that grows `L` more comes first.
pub fn suggest_dims(target_l: usize, target_m: usize) -> Result<LatticeDims> {
    // validates the minimum size
    LatticeDims::new(target_l, target_m)?;
    for total in 0.. {
        for dl in (0..=total).rev() {
            let dims = LatticeDims::new(target_l + dl, target_m + total - dl)?;
            if validate_dims(dims).is_valid() {
                return Ok(dims);
            }
        }
    }
    unreachable!("L ≡ 2 (mod 7), M ≡ 0 (mod 7) is always reachable")
}

/// Centre plus its six neighbours.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Domain {
    pub center: usize,
    pub members: [usize; DOMAIN_SIZE],
}

impl Domain {
    pub fn new(dims: &LatticeDims, center: usize) -> Self {
        let nb = dims.neighbors(center);
        let mut members = [center; DOMAIN_SIZE];
        members[1..].copy_from_slice(&nb);
        Self { center, members }
    }
}

/// One of the seven coverings, generated from centre offset `k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decomposition {
    dims: LatticeDims,
    offset: usize,
    centers: Vec<usize>,
}

impl Decomposition {
    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn dims(&self) -> &LatticeDims {
        &self.dims
    }

    /// Centres in ascending order; the position of a centre is its ordinal.
    pub fn centers(&self) -> &[usize] {
        &self.centers
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn domain(&self, ordinal: usize) -> Domain {
        Domain::new(&self.dims, self.centers[ordinal])
    }

    pub fn domains(&self) -> impl Iterator<Item = Domain> + '_ {
        self.centers.iter().map(|&c| Domain::new(&self.dims, c))
    }

    /// Domain ordinal owning each site.
    pub fn owners(&self) -> Vec<usize> {
        let mut owner = vec![usize::MAX; self.dims.n()];
        for (m, d) in self.domains().enumerate() {
            for s in d.members {
                owner[s] = m;
            }
        }
        owner
    }
}

pub fn generate_decomposition(dims: LatticeDims, k: usize) -> Result<Decomposition> {
    if k >= DOMAIN_SIZE {
        return Err(Error::InvalidOffset(k));
    }
    require_coverage(dims)?;
    Ok(Decomposition {
        dims,
        offset: k,
        centers: (k..dims.n()).step_by(DOMAIN_SIZE).collect(),
    })
}

fn require_coverage(dims: LatticeDims) -> Result<Coverage> {
    let coverage = validate_dims(dims);
    assert!(
        coverage.is_consistent(),
        "residue and partition checks disagree for {dims}: {coverage:?}"
    );
    if coverage.is_valid() {
        Ok(coverage)
    } else {
        let s = suggest_dims(dims.l(), dims.m())?;
        Err(Error::NoCoverage {
            l: dims.l(),
            m: dims.m(),
            suggested_l: s.l(),
            suggested_m: s.m(),
        })
    }
}

/// Every set of domain centres whose domains tile the lattice, by exhaustive
/// exact-cover search. Each covering is returned with its centres sorted.
///
/// The search is exponential in general; it is meant for small lattices.
pub fn minimal_domain_coverings(dims: LatticeDims) -> Vec<Vec<usize>> {
    let n = dims.n();
    let mut out = Vec::new();
    if !n.is_multiple_of(DOMAIN_SIZE) {
        return out;
    }
    let domains: Vec<Option<Domain>> = (0..n)
        .map(|c| {
            let d = Domain::new(&dims, c);
            let mut m = d.members;
            m.sort_unstable();
            m.windows(2).all(|w| w[0] != w[1]).then_some(d)
        })
        .collect();
    let mut covered = vec![false; n];
    let mut chosen = Vec::with_capacity(n / DOMAIN_SIZE);
    exact_cover(&dims, &domains, &mut covered, &mut chosen, 0, &mut out);
    out
}

fn exact_cover(
    dims: &LatticeDims,
    domains: &[Option<Domain>],
    covered: &mut [bool],
    chosen: &mut Vec<usize>,
    from: usize,
    out: &mut Vec<Vec<usize>>,
) {
    let Some(site) = (from..covered.len()).find(|&s| !covered[s]) else {
        let mut c = chosen.clone();
        c.sort_unstable();
        out.push(c);
        return;
    };
    // domains containing `site` are centred on it or on one of its neighbours
    let mut candidates = vec![site];
    candidates.extend(dims.neighbors(site));
    candidates.sort_unstable();
    candidates.dedup();
    for c in candidates {
        let Some(d) = domains[c] else { continue };
        if d.members.iter().any(|&s| covered[s]) {
            continue;
        }
        for s in d.members {
            covered[s] = true;
        }
        chosen.push(c);
        exact_cover(dims, domains, covered, chosen, site + 1, out);
        chosen.pop();
        for s in d.members {
            covered[s] = false;
        }
    }
}

/// Splits domain ordinals into classes of pairwise non-adjacent domains.
///
/// Two domains are adjacent when a member of one neighbours a member of the
/// other. Greedy colouring in ordinal order on the decomposition with
/// offset 0; since the lattice is translation invariant and ordinal `m` of
/// `D(k)` is the translate by `k` of ordinal `m` of `D(0)`, the same classes
/// serve every offset.
pub fn conflict_free_phases(dims: LatticeDims) -> Result<Vec<Vec<usize>>> {
    let decomposition = generate_decomposition(dims, 0)?;
    let owner = decomposition.owners();
    let count = decomposition.len();
    let mut adjacent: Vec<Vec<usize>> = vec![Vec::new(); count];
    for (site, &a) in owner.iter().enumerate() {
        for nb in dims.neighbors(site) {
            let b = owner[nb];
            if a != b && !adjacent[a].contains(&b) {
                adjacent[a].push(b);
            }
        }
    }
    let mut color = vec![usize::MAX; count];
    let mut phases: Vec<Vec<usize>> = Vec::new();
    for m in 0..count {
        let c = (0..)
            .find(|&c| adjacent[m].iter().all(|&b| color[b] != c))
            .expect("some colour is free");
        color[m] = c;
        if c == phases.len() {
            phases.push(Vec::new());
        }
        phases[c].push(m);
    }
    Ok(phases)
}

#[derive(Clone, Copy, Debug)]
struct Decision {
    center: usize,
    partner: usize,
    delta: i64,
    outcome: Outcome,
}

#[inline]
fn decide(
    lattice: &Lattice,
    table: &AcceptanceTable,
    sweep_stream: &RngStream,
    ordinal: usize,
    center: usize,
) -> Decision {
    let mut rng = sweep_stream.derive(ordinal as u64);
    let partner = lattice.dims().neighbor(center, rng.below(6));
    if lattice.get(center) == lattice.get(partner) {
        return Decision {
            center,
            partner,
            delta: 0,
            outcome: Outcome::Trivial,
        };
    }
    let delta = lattice.delta_unlike(center, partner);
    let u = rng.next_f64();
    let outcome = if u < table.get(delta) {
        Outcome::Accepted
    } else {
        Outcome::Rejected
    };
    Decision {
        center,
        partner,
        delta,
        outcome,
    }
}

/// The parallel engine.
pub struct Mpkk {
    dims: LatticeDims,
    root: RngStream,
    step_index: u64,
    phases: Vec<Vec<usize>>,
    pool: Option<rayon::ThreadPool>,
    lanes: usize,
    table: Option<(f64, AcceptanceTable)>,
    decisions: Vec<Decision>,
}

const OFFSET_LABEL: &str = "mpkk/offset";

impl Mpkk {
    /// Engine for `dims` with `lanes` worker threads (1 runs inline).
    pub fn new(dims: LatticeDims, seed: u64, lanes: usize) -> Result<Self> {
        require_coverage(dims)?;
        let lanes = lanes.max(1);
        let pool = if lanes > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(lanes)
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self {
            dims,
            root: RngStream::new(seed).derive_str("mpkk"),
            step_index: 0,
            phases: conflict_free_phases(dims)?,
            pool,
            lanes,
            table: None,
            decisions: Vec::new(),
        })
    }

    pub fn lanes(&self) -> usize {
        self.lanes
    }

    pub fn dims(&self) -> &LatticeDims {
        &self.dims
    }

    /// Number of completed steps; the next step uses this index.
    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn phases(&self) -> &[Vec<usize>] {
        &self.phases
    }

    /// The seven decomposition offsets drawn for `step_index`, with
    /// replacement.
    pub fn offsets_for_step(&self, step_index: u64) -> [usize; DOMAIN_SIZE] {
        let mut rng = self.root.derive(step_index).derive(rng::label(OFFSET_LABEL));
        std::array::from_fn(|_| rng.below(DOMAIN_SIZE))
    }

    fn table(&mut self, model: &InteractionModel) -> AcceptanceTable {
        let omega = model.omega_ab();
        match &self.table {
            Some((w, t)) if w.to_bits() == omega.to_bits() => t.clone(),
            _ => {
                let t = model.acceptance_table();
                self.table = Some((omega, t.clone()));
                t
            }
        }
    }

    /// One exchange attempt per domain of `decomposition`.
    pub fn sweep(
        &mut self,
        lattice: &mut Lattice,
        model: &InteractionModel,
        decomposition: &Decomposition,
        step_index: u64,
        sweep_index: u64,
    ) -> StepStats {
        assert_eq!(
            decomposition.dims(),
            lattice.dims(),
            "decomposition built for another lattice"
        );
        assert_eq!(decomposition.dims(), &self.dims);
        let table = self.table(model);
        let sweep_stream = self.root.derive(step_index).derive(sweep_index);
        let centers = decomposition.centers();
        let mut stats = StepStats::default();
        for phase in &self.phases {
            match &self.pool {
                None => {
                    for &m in phase {
                        let d = decide(lattice, &table, &sweep_stream, m, centers[m]);
                        apply(lattice, &d, &mut stats);
                    }
                }
                Some(pool) => {
                    let snapshot: &Lattice = lattice;
                    let decisions = &mut self.decisions;
                    pool.install(|| {
                        phase
                            .par_iter()
                            .with_min_len(64)
                            .map(|&m| decide(snapshot, &table, &sweep_stream, m, centers[m]))
                            .collect_into_vec(decisions)
                    });
                    for d in decisions.iter() {
                        apply(lattice, d, &mut stats);
                    }
                }
            }
        }
        stats.energy_after = model.omega_ab() * lattice.unlike_contacts() as f64;
        stats
    }

    /// Seven sweeps, each over a freshly drawn decomposition.
    pub fn mpkk_step(&mut self, lattice: &mut Lattice, model: &InteractionModel) -> StepStats {
        let step = self.step_index;
        let mut stats = StepStats::default();
        for (sweep, k) in self.offsets_for_step(step).into_iter().enumerate() {
            let decomposition = generate_decomposition(self.dims, k).expect("validated at construction");
            let s = self.sweep(lattice, model, &decomposition, step, sweep as u64);
            stats.absorb(&s);
        }
        self.step_index += 1;
        stats
    }
}

#[inline]
fn apply(lattice: &mut Lattice, d: &Decision, stats: &mut StepStats) {
    if d.outcome == Outcome::Accepted {
        lattice.apply_exchange(d.center, d.partner, d.delta);
    }
    stats.record(d.outcome);
}

impl Dynamics for Mpkk {
    fn name(&self) -> &'static str {
        "mpkk"
    }

    fn step(&mut self, lattice: &mut Lattice, model: &InteractionModel) -> Result<StepStats> {
        Ok(self.mpkk_step(lattice, model))
    }
}
