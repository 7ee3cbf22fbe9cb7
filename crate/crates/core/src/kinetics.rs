//! Sequential exchange dynamics and the run loop.
//!
//! [`Kawasaki`] swaps a random site with one of its six neighbours;
//! [`Nonlocal`] swaps it with any site of the opposite species. The nonlocal
//! engine samples the same equilibrium ensemble but its time axis has no
//! physical meaning, so use it for equilibration only.

use crate::energy::{acceptance_probability, AcceptanceTable, InteractionModel};
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::rng::RngStream;

/// Result of a single proposed exchange.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    /// Partners had the same type; nothing to do.
    Trivial,
    Rejected,
    Accepted,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepStats {
    pub attempted: u64,
    pub accepted: u64,
    pub trivial_same_type: u64,
    /// Energy in kT after the last iteration of the step.
    pub energy_after: f64,
}

impl StepStats {
    pub fn record(&mut self, outcome: Outcome) {
        self.attempted += 1;
        match outcome {
            Outcome::Trivial => self.trivial_same_type += 1,
            Outcome::Accepted => self.accepted += 1,
            Outcome::Rejected => {}
        }
    }

    /// Adds counts from `later`; the energy is taken from `later`.
    pub fn absorb(&mut self, later: &StepStats) {
        self.attempted += later.attempted;
        self.accepted += later.accepted;
        self.trivial_same_type += later.trivial_same_type;
        self.energy_after = later.energy_after;
    }
}

/// Metropolis decision for swapping `i` and `j` given a uniform draw source.
#[inline]
pub(crate) fn metropolis_exchange(
    lattice: &mut Lattice,
    i: usize,
    j: usize,
    accept: impl Fn(i64) -> f64,
    rng: &mut RngStream,
) -> Outcome {
    if lattice.get(i) == lattice.get(j) {
        return Outcome::Trivial;
    }
    let delta = lattice.delta_unlike(i, j);
    let u = rng.next_f64();
    if u < accept(delta) {
        lattice.apply_exchange(i, j, delta);
        Outcome::Accepted
    } else {
        Outcome::Rejected
    }
}

/// One neighbour-exchange proposal: site uniform over `N`, partner uniform
/// over its six neighbours.
pub fn kawasaki_iteration(
    lattice: &mut Lattice,
    model: &InteractionModel,
    rng: &mut RngStream,
) -> Outcome {
    let omega = model.omega_ab();
    kawasaki_iteration_with(lattice, |d| acceptance_probability(omega * d as f64), rng)
}

#[inline]
fn kawasaki_iteration_with(
    lattice: &mut Lattice,
    accept: impl Fn(i64) -> f64,
    rng: &mut RngStream,
) -> Outcome {
    let i = rng.below(lattice.n());
    let j = lattice.dims().neighbor(i, rng.below(6));
    metropolis_exchange(lattice, i, j, accept, rng)
}

/// `N` Kawasaki iterations.
pub fn kawasaki_step(
    lattice: &mut Lattice,
    model: &InteractionModel,
    rng: &mut RngStream,
) -> StepStats {
    kawasaki_step_with(lattice, model, &model.acceptance_table(), rng)
}

fn kawasaki_step_with(
    lattice: &mut Lattice,
    model: &InteractionModel,
    table: &AcceptanceTable,
    rng: &mut RngStream,
) -> StepStats {
    let mut stats = StepStats::default();
    for _ in 0..lattice.n() {
        stats.record(kawasaki_iteration_with(lattice, |d| table.get(d), rng));
    }
    stats.energy_after = model.omega_ab() * lattice.unlike_contacts() as f64;
    stats
}

/// One global-exchange proposal: site uniform over `N`, partner uniform over
/// all sites of the opposite species.
pub fn nonlocal_exchange_iteration(
    lattice: &mut Lattice,
    model: &InteractionModel,
    rng: &mut RngStream,
) -> Result<Outcome> {
    let omega = model.omega_ab();
    nonlocal_iteration_with(lattice, |d| acceptance_probability(omega * d as f64), rng)
}

fn nonlocal_iteration_with(
    lattice: &mut Lattice,
    accept: impl Fn(i64) -> f64,
    rng: &mut RngStream,
) -> Result<Outcome> {
    if lattice.is_single_species() {
        return Err(Error::SingleSpecies);
    }
    let n = lattice.n();
    let i = rng.below(n);
    let want = lattice.get(i).other();
    // rejection sampling is uniform over the opposite species
    let j = loop {
        let j = rng.below(n);
        if lattice.get(j) == want {
            break j;
        }
    };
    Ok(metropolis_exchange(lattice, i, j, accept, rng))
}

/// A step-wise dynamics engine. One step is `N` attempted exchanges.
pub trait Dynamics {
    fn name(&self) -> &'static str;
    fn step(&mut self, lattice: &mut Lattice, model: &InteractionModel) -> Result<StepStats>;
}

/// Sequential Kawasaki engine.
#[derive(Clone, Debug)]
pub struct Kawasaki {
    rng: RngStream,
    table: Option<(f64, AcceptanceTable)>,
}

impl Kawasaki {
    pub fn new(seed: u64) -> Self {
        Self::from_stream(RngStream::new(seed).derive_str("kawasaki"))
    }

    pub fn from_stream(rng: RngStream) -> Self {
        Self { rng, table: None }
    }
}

fn cached_table<'a>(
    slot: &'a mut Option<(f64, AcceptanceTable)>,
    model: &InteractionModel,
) -> &'a AcceptanceTable {
    let omega = model.omega_ab();
    if slot.as_ref().map(|(w, _)| w.to_bits()) != Some(omega.to_bits()) {
        *slot = Some((omega, model.acceptance_table()));
    }
    &slot.as_ref().expect("just filled").1
}

impl Dynamics for Kawasaki {
    fn name(&self) -> &'static str {
        "kawasaki"
    }

    fn step(&mut self, lattice: &mut Lattice, model: &InteractionModel) -> Result<StepStats> {
        let table = cached_table(&mut self.table, model);
        Ok(kawasaki_step_with(lattice, model, table, &mut self.rng))
    }
}

/// Sequential global-exchange engine. Equilibration only.
#[derive(Clone, Debug)]
pub struct Nonlocal {
    rng: RngStream,
    table: Option<(f64, AcceptanceTable)>,
}

impl Nonlocal {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: RngStream::new(seed).derive_str("nonlocal"),
            table: None,
        }
    }
}

impl Dynamics for Nonlocal {
    fn name(&self) -> &'static str {
        "nonlocal"
    }

    fn step(&mut self, lattice: &mut Lattice, model: &InteractionModel) -> Result<StepStats> {
        let table = cached_table(&mut self.table, model);
        let mut stats = StepStats::default();
        for _ in 0..lattice.n() {
            stats.record(nonlocal_iteration_with(lattice, |d| table.get(d), &mut self.rng)?);
        }
        stats.energy_after = model.omega_ab() * lattice.unlike_contacts() as f64;
        Ok(stats)
    }
}

/// Receives the lattice at step 0 and every `interval()` steps thereafter.
pub trait Observer {
    fn interval(&self) -> u64;

    fn observe(&mut self, step: u64, lattice: &Lattice, model: &InteractionModel) -> Result<()>;

    /// Called once when the run ends, successfully or not.
    fn finish(&mut self) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunSummary {
    pub steps: u64,
    pub totals: StepStats,
    /// Per-step statistics, one entry per completed step.
    pub series: Vec<StepStats>,
}

/// Runs `n_steps` steps of `engine`, sampling observers at step 0 and at
/// every multiple of their interval. On any error all observers are
/// finished (flushed) before the error is returned.
pub fn run(
    engine: &mut dyn Dynamics,
    lattice: &mut Lattice,
    model: &InteractionModel,
    n_steps: u64,
    observers: &mut [&mut dyn Observer],
) -> Result<RunSummary> {
    let result = run_inner(engine, lattice, model, n_steps, observers);
    let mut finish_err = None;
    for obs in observers.iter_mut() {
        if let Err(e) = obs.finish() {
            finish_err.get_or_insert(e);
        }
    }
    let summary = result?;
    match finish_err {
        Some(e) => Err(e),
        None => Ok(summary),
    }
}

fn run_inner(
    engine: &mut dyn Dynamics,
    lattice: &mut Lattice,
    model: &InteractionModel,
    n_steps: u64,
    observers: &mut [&mut dyn Observer],
) -> Result<RunSummary> {
    let mut summary = RunSummary {
        totals: StepStats {
            energy_after: model.omega_ab() * lattice.unlike_contacts() as f64,
            ..StepStats::default()
        },
        ..RunSummary::default()
    };
    notify(observers, 0, lattice, model)?;
    for step in 1..=n_steps {
        let stats = engine.step(lattice, model)?;
        summary.totals.absorb(&stats);
        summary.series.push(stats);
        summary.steps = step;
        notify(observers, step, lattice, model)?;
    }
    Ok(summary)
}

fn notify(
    observers: &mut [&mut dyn Observer],
    step: u64,
    lattice: &Lattice,
    model: &InteractionModel,
) -> Result<()> {
    for obs in observers.iter_mut() {
        let every = obs.interval().max(1);
        if step.is_multiple_of(every) {
            obs.observe(step, lattice, model)?;
        }
    }
    Ok(())
}
