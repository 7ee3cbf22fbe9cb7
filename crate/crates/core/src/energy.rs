//! One-parameter contact Hamiltonian and Metropolis acceptance.
//!
//! The energy of a configuration is `omega_AB * N_AB`, where `N_AB` counts
//! unordered nearest-neighbour pairs of unlike species. `omega_AB` is given
//! in units of the thermal energy, so the Boltzmann weight of a move with
//! energy change `dE` is simply `exp(-dE)`.

use crate::error::{Error, Result};
use crate::lattice::Lattice;

/// Largest possible |change in unlike contacts| for one swap: each partner
/// has at most six bonds and both can flip every one of them.
pub const MAX_CONTACT_DELTA: i64 = 12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GibbsEnergies {
    pub g_aa: f64,
    pub g_ab: f64,
    pub g_bb: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InteractionModel {
    omega_ab: f64,
    gibbs: Option<GibbsEnergies>,
}

impl InteractionModel {
    pub fn new(omega_ab: f64) -> Result<Self> {
        if !omega_ab.is_finite() {
            return Err(Error::NonFinite {
                name: "omega_AB",
                value: omega_ab,
            });
        }
        Ok(Self {
            omega_ab,
            gibbs: None,
        })
    }

    pub fn from_gibbs(g_aa: f64, g_ab: f64, g_bb: f64) -> Result<Self> {
        let omega_ab = omega_from_gibbs(g_aa, g_ab, g_bb)?;
        Ok(Self {
            omega_ab,
            gibbs: Some(GibbsEnergies { g_aa, g_ab, g_bb }),
        })
    }

    pub fn omega_ab(&self) -> f64 {
        self.omega_ab
    }

    pub fn gibbs(&self) -> Option<GibbsEnergies> {
        self.gibbs
    }

    /// Acceptance probabilities indexed by contact delta `+ MAX_CONTACT_DELTA`.
    pub fn acceptance_table(&self) -> AcceptanceTable {
        AcceptanceTable::new(self.omega_ab)
    }
}

/// `g_AB - (g_AA + g_BB) / 2`.
pub fn omega_from_gibbs(g_aa: f64, g_ab: f64, g_bb: f64) -> Result<f64> {
    for (name, value) in [("g_AA", g_aa), ("g_AB", g_ab), ("g_BB", g_bb)] {
        if !value.is_finite() {
            return Err(Error::NonFinite { name, value });
        }
    }
    Ok(g_ab - (g_aa + g_bb) / 2.0)
}

/// `omega_AB * N_AB`, recounting every contact.
pub fn total_energy(lattice: &Lattice, model: &InteractionModel) -> f64 {
    model.omega_ab * lattice.count_unlike_contacts() as f64
}

/// Energy change of swapping `i` and `j`, from the two neighbourhoods only.
/// Panics if `i == j`.
pub fn delta_energy_exchange(
    lattice: &Lattice,
    model: &InteractionModel,
    i: usize,
    j: usize,
) -> f64 {
    model.omega_ab * lattice.delta_unlike(i, j) as f64
}

/// Metropolis acceptance `min(1, exp(-dE))` for a symmetric proposal.
#[inline]
pub fn acceptance_probability(delta_e: f64) -> f64 {
    if delta_e <= 0.0 {
        1.0
    } else {
        (-delta_e).exp()
    }
}

/// Precomputed [`acceptance_probability`] for every reachable contact delta.
#[derive(Clone, Debug)]
pub struct AcceptanceTable {
    probs: [f64; (2 * MAX_CONTACT_DELTA + 1) as usize],
}

impl AcceptanceTable {
    pub fn new(omega_ab: f64) -> Self {
        let probs = std::array::from_fn(|k| {
            let delta = k as i64 - MAX_CONTACT_DELTA;
            acceptance_probability(omega_ab * delta as f64)
        });
        Self { probs }
    }

    #[inline]
    pub fn get(&self, contact_delta: i64) -> f64 {
        self.probs[(contact_delta + MAX_CONTACT_DELTA) as usize]
    }
}
