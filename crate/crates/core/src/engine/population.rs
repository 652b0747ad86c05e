use std::fmt;

use rand::Rng;
use serde::Serialize;

use crate::model::{Allele, DerivedEco, EcoParams};

/// Identity of the time-zero individual a neutral allele descends from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum FounderRef {
    Mutant,
    /// 1-based index of an initial resident.
    Resident(u32),
}

impl fmt::Display for FounderRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FounderRef::Mutant => f.write_str("mutant"),
            FounderRef::Resident(i) => write!(f, "R{i}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Individual {
    pub id: u64,
    pub alpha: Allele,
    /// Founder of the allele at `N1`.
    pub label1: FounderRef,
    /// Founder of the allele at `N2`.
    pub label2: FounderRef,
}

impl Individual {
    #[inline]
    pub fn labels(&self) -> (FounderRef, FounderRef) {
        (self.label1, self.label2)
    }
}

/// Living population, stored as one dense array per selected allele so that
/// uniform draws and deletions are O(1).
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationState {
    by_trait: [Vec<Individual>; 2],
    next_id: u64,
    pub t: f64,
}

impl PopulationState {
    pub fn empty() -> Self {
        PopulationState {
            by_trait: [Vec::new(), Vec::new()],
            next_id: 0,
            t: 0.0,
        }
    }

    /// `floor(nbar_A K)` residents labelled by their own index, plus a single
    /// mutant. Assumes the caller validated the regime.
    pub fn initial(params: &EcoParams, derived: &DerivedEco) -> Self {
        let n_resident = initial_resident_count(params, derived);
        let mut pop = PopulationState::empty();
        pop.by_trait[0].reserve(n_resident as usize + 1);
        for i in 1..=n_resident {
            let label = FounderRef::Resident(i as u32);
            pop.push(Allele::Resident, label, label);
        }
        pop.push(Allele::Mutant, FounderRef::Mutant, FounderRef::Mutant);
        pop
    }

    pub fn n(&self, allele: Allele) -> usize {
        self.by_trait[allele.index()].len()
    }

    pub fn n_resident(&self) -> usize {
        self.by_trait[0].len()
    }

    pub fn n_mutant(&self) -> usize {
        self.by_trait[1].len()
    }

    pub fn len(&self) -> usize {
        self.n_resident() + self.n_mutant()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn of_trait(&self, allele: Allele) -> &[Individual] {
        &self.by_trait[allele.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Individual> {
        self.by_trait[0].iter().chain(self.by_trait[1].iter())
    }

    pub fn push(&mut self, alpha: Allele, label1: FounderRef, label2: FounderRef) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.by_trait[alpha.index()].push(Individual {
            id,
            alpha,
            label1,
            label2,
        });
        id
    }

    #[inline]
    pub(crate) fn get(&self, alpha: Allele, slot: usize) -> &Individual {
        &self.by_trait[alpha.index()][slot]
    }

    pub(crate) fn swap_remove(&mut self, alpha: Allele, slot: usize) -> Individual {
        self.by_trait[alpha.index()].swap_remove(slot)
    }

    #[inline]
    pub(crate) fn uniform_slot<R: Rng + ?Sized>(&self, alpha: Allele, rng: &mut R) -> usize {
        rng.random_range(0..self.n(alpha))
    }

    /// Recounts the registry and checks the per-trait bookkeeping.
    pub fn is_consistent(&self) -> bool {
        let mut ids: Vec<u64> = self.iter().map(|x| x.id).collect();
        let n = ids.len();
        ids.sort_unstable();
        ids.dedup();
        ids.len() == n
            && Allele::BOTH
                .iter()
                .all(|&a| self.of_trait(a).iter().all(|x| x.alpha == a))
            && self.iter().all(|x| x.id < self.next_id)
    }
}

pub fn initial_resident_count(params: &EcoParams, derived: &DerivedEco) -> u64 {
    (derived.nbar_of(Allele::Resident) * params.capacity as f64).floor() as u64
}

/// Trait-level birth and death rate totals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraitRates {
    pub birth: [f64; 2],
    pub death: [f64; 2],
}

impl TraitRates {
    pub fn total(&self) -> f64 {
        self.birth[0] + self.birth[1] + self.death[0] + self.death[1]
    }
}

/// `b_x = f_x n_x`, `d_x = (D_x + C_xA n_A / K + C_xa n_a / K) n_x`.
pub fn total_rates(state: &PopulationState, params: &EcoParams) -> TraitRates {
    rates_for_counts(state.n_resident(), state.n_mutant(), params)
}

pub(crate) fn rates_for_counts(n_res: usize, n_mut: usize, params: &EcoParams) -> TraitRates {
    let k = params.capacity as f64;
    let counts = [n_res as f64, n_mut as f64];
    let mut rates = TraitRates {
        birth: [0.0; 2],
        death: [0.0; 2],
    };
    for x in Allele::BOTH {
        let n = counts[x.index()];
        rates.birth[x.index()] = params.f(x) * n;
        let pressure = params.d(x)
            + params.c(x, Allele::Resident) * counts[0] / k
            + params.c(x, Allele::Mutant) * counts[1] / k;
        rates.death[x.index()] = pressure * n;
    }
    rates
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive, Geometry};

    #[test]
    fn reference_initial_state() {
        let p = EcoParams::reference(0.0, 0.0, Geometry::Adjacent);
        let pop = PopulationState::initial(&p, &derive(&p).unwrap());
        assert_eq!(pop.n_resident(), 1500);
        assert_eq!(pop.n_mutant(), 1);
        assert_eq!(pop.t, 0.0);
        for (i, ind) in pop.of_trait(Allele::Resident).iter().enumerate() {
            assert_eq!(ind.labels(), (FounderRef::Resident(i as u32 + 1), FounderRef::Resident(i as u32 + 1)));
        }
        assert_eq!(
            pop.of_trait(Allele::Mutant)[0].labels(),
            (FounderRef::Mutant, FounderRef::Mutant)
        );
        assert!(pop.is_consistent());
    }

    #[test]
    fn unit_capacity_floors() {
        let mut p = EcoParams::reference(0.0, 0.0, Geometry::Adjacent);
        p.capacity = 1;
        let pop = PopulationState::initial(&p, &derive(&p).unwrap());
        assert_eq!((pop.n_resident(), pop.n_mutant()), (1, 1));
    }

    #[test]
    fn reference_rates() {
        let p = EcoParams::reference(0.0, 0.0, Geometry::Adjacent);
        let pop = PopulationState::initial(&p, &derive(&p).unwrap());
        let r = total_rates(&pop, &p);
        assert_eq!(r.birth, [3000.0, 3.0]);
        assert!((r.death[0] - 3001.5).abs() < 1e-9);
        assert!((r.death[1] - 2.001).abs() < 1e-12);
    }

    #[test]
    fn empty_and_monomorphic_rates() {
        let p = EcoParams::reference(0.0, 0.0, Geometry::Adjacent);
        let r = total_rates(&PopulationState::empty(), &p);
        assert_eq!(r.total(), 0.0);
        let r = rates_for_counts(10, 0, &p);
        assert_eq!((r.birth[1], r.death[1]), (0.0, 0.0));
        assert!(r.birth[0] > 0.0);
    }
}
