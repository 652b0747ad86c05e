//! Marked partitions of sampled neutral alleles and their ancestry classes.
//!
//! Sampling `d` individuals at the end of a fixed sweep gives `2d` neutral
//! alleles, slot `(i, k)` being the allele at locus `Nk` of the `i`-th
//! sampled individual. Slots are grouped by the time-zero individual they
//! descend from; the group descending from the original mutant carries the
//! mark.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{FounderRef, PopulationState};
use crate::model::Allele;

/// Neutral allele `k` (1 or 2) of sampled individual `i` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Slot {
    pub individual: u32,
    pub locus: u8,
}

impl Slot {
    pub fn new(individual: u32, locus: u8) -> Self {
        Slot { individual, locus }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.individual, self.locus)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PartitionError {
    #[error("slot {0} does not belong to a sample of size {1}")]
    SlotOutOfRange(Slot, u32),
    #[error("slot {0} appears in more than one block")]
    Overlap(Slot),
    #[error("slot {0} is not covered by any block")]
    Uncovered(Slot),
    #[error("empty block")]
    EmptyBlock,
    #[error("marked block index {0} out of range")]
    BadMark(usize),
    #[error("cannot parse partition line {line:?}: {reason}")]
    Parse { line: String, reason: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SampleError {
    #[error("cannot sample {requested} individuals from {available} mutants")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("population still contains {0} residents")]
    NotFixed(usize),
}

/// A partition of the `2d` slots with at most one marked block.
///
/// Stored canonically: slots sorted within each block and blocks sorted by
/// their smallest slot, so structural equality is partition equality.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct MarkedPartition {
    d: u32,
    blocks: Vec<Vec<Slot>>,
    marked: Option<usize>,
}

impl MarkedPartition {
    pub fn new(d: u32, blocks: Vec<Vec<Slot>>, marked: Option<usize>) -> Result<Self, PartitionError> {
        if let Some(m) = marked {
            if m >= blocks.len() {
                return Err(PartitionError::BadMark(m));
            }
        }
        let mut seen = BTreeMap::new();
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(PartitionError::EmptyBlock);
            }
            for &slot in block {
                if slot.individual == 0 || slot.individual > d || !(1..=2).contains(&slot.locus) {
                    return Err(PartitionError::SlotOutOfRange(slot, d));
                }
                if seen.insert(slot, b).is_some() {
                    return Err(PartitionError::Overlap(slot));
                }
            }
        }
        for i in 1..=d {
            for k in 1..=2 {
                let slot = Slot::new(i, k);
                if !seen.contains_key(&slot) {
                    return Err(PartitionError::Uncovered(slot));
                }
            }
        }
        let marked_block = marked.map(|m| {
            let mut b = blocks[m].clone();
            b.sort_unstable();
            b
        });
        let mut blocks: Vec<Vec<Slot>> = blocks
            .into_iter()
            .map(|mut b| {
                b.sort_unstable();
                b
            })
            .collect();
        blocks.sort_unstable_by_key(|b| b[0]);
        let marked = marked_block.map(|mb| blocks.iter().position(|b| *b == mb).unwrap());
        Ok(MarkedPartition { d, blocks, marked })
    }

    /// Groups slots by equal founder label; the mutant group is marked.
    pub fn from_labels(labels: &[(FounderRef, FounderRef)]) -> Self {
        let mut groups: BTreeMap<FounderRef, Vec<Slot>> = BTreeMap::new();
        for (i, (l1, l2)) in labels.iter().enumerate() {
            let i = i as u32 + 1;
            groups.entry(*l1).or_default().push(Slot::new(i, 1));
            groups.entry(*l2).or_default().push(Slot::new(i, 2));
        }
        let mut marked = None;
        let mut blocks = Vec::with_capacity(groups.len());
        for (founder, slots) in groups {
            if founder == FounderRef::Mutant {
                marked = Some(blocks.len());
            }
            blocks.push(slots);
        }
        MarkedPartition::new(labels.len() as u32, blocks, marked)
            .expect("label grouping always yields a partition")
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn blocks(&self) -> &[Vec<Slot>] {
        &self.blocks
    }

    pub fn marked_block(&self) -> Option<&[Slot]> {
        self.marked.map(|m| self.blocks[m].as_slice())
    }

    /// Renames sampled individuals: individual `i` becomes `perm[i - 1]`.
    pub fn relabel(&self, perm: &[u32]) -> Result<Self, PartitionError> {
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                b.iter()
                    .map(|s| Slot::new(perm[s.individual as usize - 1], s.locus))
                    .collect()
            })
            .collect();
        MarkedPartition::new(self.d, blocks, self.marked)
    }
}

/// One line per block, slots as `i.k` separated by spaces, marked block
/// suffixed with `*`.
impl fmt::Display for MarkedPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (b, block) in self.blocks.iter().enumerate() {
            let slots: Vec<String> = block.iter().map(Slot::to_string).collect();
            write!(f, "{}", slots.join(" "))?;
            if self.marked == Some(b) {
                f.write_str("*")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl FromStr for MarkedPartition {
    type Err = PartitionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut blocks = Vec::new();
        let mut marked = None;
        let mut d = 0;
        for line in s.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let parse_err = |reason: &str| PartitionError::Parse {
                line: line.to_string(),
                reason: reason.to_string(),
            };
            let (body, star) = match line.strip_suffix('*') {
                Some(body) => (body, true),
                None => (line, false),
            };
            if star {
                if marked.is_some() {
                    return Err(parse_err("second marked block"));
                }
                marked = Some(blocks.len());
            }
            let mut block = Vec::new();
            for tok in body.split_whitespace() {
                let (i, k) = tok.split_once('.').ok_or_else(|| parse_err("slot must be i.k"))?;
                let i: u32 = i.parse().map_err(|_| parse_err("bad individual index"))?;
                let k: u8 = k.parse().map_err(|_| parse_err("bad locus"))?;
                d = d.max(i);
                block.push(Slot::new(i, k));
            }
            blocks.push(block);
        }
        MarkedPartition::new(d, blocks, marked)
    }
}

/// Draws `d` distinct mutants uniformly from a fixed population and builds
/// their marked partition.
pub fn sample_partition<R: Rng + ?Sized>(
    final_pop: &PopulationState,
    d: usize,
    rng: &mut R,
) -> Result<MarkedPartition, SampleError> {
    if final_pop.n_resident() > 0 {
        return Err(SampleError::NotFixed(final_pop.n_resident()));
    }
    let mutants = final_pop.of_trait(Allele::Mutant);
    if d > mutants.len() {
        return Err(SampleError::SampleTooLarge {
            requested: d,
            available: mutants.len(),
        });
    }
    let labels: Vec<_> = rand::seq::index::sample(rng, mutants.len(), d)
        .into_iter()
        .map(|ix| mutants[ix].labels())
        .collect();
    Ok(MarkedPartition::from_labels(&labels))
}

/// Per-individual ancestry class counts `m1..m5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ClassCounts {
    pub m: [u32; 5],
    /// Every unmarked block is a singleton or a same-individual pair.
    pub in_delta: bool,
}

impl ClassCounts {
    pub fn total(&self) -> u32 {
        self.m.iter().sum()
    }

    /// Class counts for a sample in the limiting support.
    pub fn of(m: [u32; 5]) -> Self {
        ClassCounts { m, in_delta: true }
    }
}

/// Ancestry class of one sampled individual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum AncestryClass {
    /// Both neutral alleles descend from the mutant.
    BothMutant = 0,
    /// `N1` from the mutant, `N2` escaped to an unshared resident.
    OnlyFirstMutant = 1,
    /// `N2` from the mutant, `N1` escaped to an unshared resident.
    OnlySecondMutant = 2,
    /// Both escaped, to the same resident, which no other slot shares.
    EscapedTogether = 3,
    /// Both escaped, to two distinct unshared residents.
    EscapedApart = 4,
}

impl AncestryClass {
    pub const ALL: [AncestryClass; 5] = [
        AncestryClass::BothMutant,
        AncestryClass::OnlyFirstMutant,
        AncestryClass::OnlySecondMutant,
        AncestryClass::EscapedTogether,
        AncestryClass::EscapedApart,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn n1_escaped(self) -> bool {
        matches!(
            self,
            AncestryClass::OnlySecondMutant | AncestryClass::EscapedTogether | AncestryClass::EscapedApart
        )
    }

    pub fn n2_escaped(self) -> bool {
        matches!(
            self,
            AncestryClass::OnlyFirstMutant | AncestryClass::EscapedTogether | AncestryClass::EscapedApart
        )
    }
}

/// Per-individual classes (`None` for individuals matching no class) and
/// whether the partition lies in the limiting support.
pub fn individual_classes(p: &MarkedPartition) -> (Vec<Option<AncestryClass>>, bool) {
    let mut block_of = vec![[0usize; 2]; p.d as usize];
    for (b, block) in p.blocks.iter().enumerate() {
        for s in block {
            block_of[s.individual as usize - 1][s.locus as usize - 1] = b;
        }
    }
    let is_marked = |b: usize| p.marked == Some(b);
    let singleton = |b: usize| !is_marked(b) && p.blocks[b].len() == 1;
    let in_delta = p.blocks.iter().enumerate().all(|(b, block)| {
        is_marked(b)
            || block.len() == 1
            || (block.len() == 2 && block[0].individual == block[1].individual)
    });
    let classes = block_of
        .iter()
        .map(|&[b1, b2]| match (is_marked(b1), is_marked(b2)) {
            (true, true) => Some(AncestryClass::BothMutant),
            (true, false) if singleton(b2) => Some(AncestryClass::OnlyFirstMutant),
            (false, true) if singleton(b1) => Some(AncestryClass::OnlySecondMutant),
            (false, false) if b1 == b2 && p.blocks[b1].len() == 2 => {
                Some(AncestryClass::EscapedTogether)
            }
            (false, false) if singleton(b1) && singleton(b2) => Some(AncestryClass::EscapedApart),
            _ => None,
        })
        .collect();
    (classes, in_delta)
}

/// Class of each sampled individual read from its own two slots only:
/// which slots sit in the marked block and, otherwise, whether both share a
/// block. Unlike [`individual_classes`] this ignores the other individuals,
/// so every individual gets a class.
pub fn lineage_classes(p: &MarkedPartition) -> Vec<AncestryClass> {
    let mut block_of = vec![[0usize; 2]; p.d as usize];
    for (b, block) in p.blocks.iter().enumerate() {
        for s in block {
            block_of[s.individual as usize - 1][s.locus as usize - 1] = b;
        }
    }
    block_of
        .iter()
        .map(|&[b1, b2]| match (p.marked == Some(b1), p.marked == Some(b2)) {
            (true, true) => AncestryClass::BothMutant,
            (true, false) => AncestryClass::OnlyFirstMutant,
            (false, true) => AncestryClass::OnlySecondMutant,
            (false, false) if b1 == b2 => AncestryClass::EscapedTogether,
            (false, false) => AncestryClass::EscapedApart,
        })
        .collect()
}

/// Per-class counts of [`lineage_classes`].
pub fn lineage_counts(p: &MarkedPartition) -> [u32; 5] {
    let mut m = [0u32; 5];
    for c in lineage_classes(p) {
        m[c.index()] += 1;
    }
    m
}

/// Counts `m1..m5`.
pub fn classify(p: &MarkedPartition) -> ClassCounts {
    let (classes, in_delta) = individual_classes(p);
    let mut m = [0u32; 5];
    for c in classes.into_iter().flatten() {
        m[c.index()] += 1;
    }
    ClassCounts { m, in_delta }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::sampling_rng;
    use proptest::prelude::*;

    fn s(i: u32, k: u8) -> Slot {
        Slot::new(i, k)
    }

    /// The five-individual example: one individual of each class.
    pub(crate) fn worked_example() -> MarkedPartition {
        MarkedPartition::new(
            5,
            vec![
                vec![s(1, 1), s(1, 2), s(2, 1), s(5, 2)],
                vec![s(2, 2)],
                vec![s(3, 1), s(3, 2)],
                vec![s(4, 1)],
                vec![s(4, 2)],
                vec![s(5, 1)],
            ],
            Some(0),
        )
        .unwrap()
    }

    #[test]
    fn worked_example_from_labels() {
        use FounderRef::*;
        let labels = [
            (Mutant, Mutant),
            (Mutant, Resident(9)),
            (Resident(4), Resident(4)),
            (Resident(2), Resident(3)),
            (Resident(7), Mutant),
        ];
        assert_eq!(MarkedPartition::from_labels(&labels), worked_example());
    }

    #[test]
    fn worked_example_classes() {
        let c = classify(&worked_example());
        assert_eq!(c.m, [1, 1, 1, 1, 1]);
        assert!(c.in_delta);
        assert_eq!(lineage_counts(&worked_example()), [1, 1, 1, 1, 1]);
    }

    #[test]
    fn clonal_sample_is_one_marked_block() {
        let labels = vec![(FounderRef::Mutant, FounderRef::Mutant); 4];
        let p = MarkedPartition::from_labels(&labels);
        assert_eq!(p.blocks().len(), 1);
        assert_eq!(p.marked_block().unwrap().len(), 8);
        assert_eq!(classify(&p), ClassCounts::of([4, 0, 0, 0, 0]));
    }

    #[test]
    fn private_resident_pair_is_unmarked_pair() {
        let labels = [
            (FounderRef::Resident(7), FounderRef::Resident(7)),
            (FounderRef::Mutant, FounderRef::Mutant),
        ];
        let p = MarkedPartition::from_labels(&labels);
        assert!(p.blocks().contains(&vec![s(1, 1), s(1, 2)]));
        assert_eq!(p.marked_block().unwrap(), &[s(2, 1), s(2, 2)]);
        assert_eq!(classify(&p), ClassCounts::of([1, 0, 0, 1, 0]));
    }

    #[test]
    fn cross_individual_unmarked_block_leaves_delta() {
        let p = MarkedPartition::new(
            2,
            vec![vec![s(1, 1), s(2, 1)], vec![s(1, 2), s(2, 2)]],
            Some(1),
        )
        .unwrap();
        let c = classify(&p);
        assert!(!c.in_delta);
        assert_eq!(c.total(), 0);
        assert_eq!(lineage_counts(&p), [0, 0, 2, 0, 0]);
    }

    #[test]
    fn no_mark_without_mutant_slots() {
        let labels = [(FounderRef::Resident(1), FounderRef::Resident(2))];
        let p = MarkedPartition::from_labels(&labels);
        assert!(p.marked_block().is_none());
        assert_eq!(classify(&p), ClassCounts::of([0, 0, 0, 0, 1]));
    }

    #[test]
    fn invalid_partitions_are_rejected() {
        assert_eq!(
            MarkedPartition::new(1, vec![vec![s(1, 1)]], None),
            Err(PartitionError::Uncovered(s(1, 2)))
        );
        assert_eq!(
            MarkedPartition::new(1, vec![vec![s(1, 1), s(1, 2)], vec![s(1, 2)]], None),
            Err(PartitionError::Overlap(s(1, 2)))
        );
        assert!(MarkedPartition::new(1, vec![vec![s(1, 1), s(2, 2)]], None).is_err());
        assert_eq!(
            MarkedPartition::new(1, vec![vec![s(1, 1), s(1, 2)]], Some(3)),
            Err(PartitionError::BadMark(3))
        );
    }

    #[test]
    fn text_format() {
        let text = worked_example().to_string();
        assert_eq!(text, "1.1 1.2 2.1 5.2*\n2.2\n3.1 3.2\n4.1\n4.2\n5.1\n");
        assert_eq!(text.parse::<MarkedPartition>().unwrap(), worked_example());
        assert!("1.1*\n1.2*\n".parse::<MarkedPartition>().is_err());
        assert!("1-1 1.2\n".parse::<MarkedPartition>().is_err());
    }

    #[test]
    fn sampling_requires_enough_mutants() {
        let mut pop = PopulationState::empty();
        pop.push(Allele::Mutant, FounderRef::Mutant, FounderRef::Mutant);
        let mut rng = sampling_rng(0);
        assert_eq!(
            sample_partition(&pop, 2, &mut rng),
            Err(SampleError::SampleTooLarge {
                requested: 2,
                available: 1
            })
        );
        pop.push(Allele::Resident, FounderRef::Resident(1), FounderRef::Resident(1));
        assert_eq!(sample_partition(&pop, 1, &mut rng), Err(SampleError::NotFixed(1)));
    }

    #[test]
    fn sampling_is_without_replacement() {
        let mut pop = PopulationState::empty();
        for i in 1..=6 {
            pop.push(Allele::Mutant, FounderRef::Resident(i), FounderRef::Resident(100 + i));
        }
        let mut rng = sampling_rng(4);
        for _ in 0..50 {
            let p = sample_partition(&pop, 6, &mut rng).unwrap();
            // all labels distinct: 12 singleton blocks
            assert_eq!(p.blocks().len(), 12);
            assert_eq!(classify(&p), ClassCounts::of([0, 0, 0, 0, 6]));
        }
    }

    fn labels_strategy() -> impl Strategy<Value = Vec<(FounderRef, FounderRef)>> {
        let founder = prop_oneof![
            1 => Just(FounderRef::Mutant),
            3 => (1u32..6).prop_map(FounderRef::Resident),
        ];
        prop::collection::vec((founder.clone(), founder), 1..8)
    }

    proptest! {
        #[test]
        fn delta_partitions_classify_every_individual(labels in labels_strategy()) {
            let p = MarkedPartition::from_labels(&labels);
            let c = classify(&p);
            let lineage = lineage_counts(&p);
            if c.in_delta {
                prop_assert_eq!(c.total() as usize, labels.len());
                prop_assert_eq!(lineage, c.m);
            }
            prop_assert!(c.total() as usize <= labels.len());
            prop_assert_eq!(lineage.iter().sum::<u32>() as usize, labels.len());
        }

        #[test]
        fn classes_ignore_sample_order(labels in labels_strategy(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut shuffled = labels.clone();
            shuffled.shuffle(&mut sampling_rng(seed));
            let a = classify(&MarkedPartition::from_labels(&labels));
            let b = classify(&MarkedPartition::from_labels(&shuffled));
            prop_assert_eq!(a, b);
        }

        #[test]
        fn relabelling_preserves_classes(labels in labels_strategy(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let p = MarkedPartition::from_labels(&labels);
            let mut perm: Vec<u32> = (1..=labels.len() as u32).collect();
            perm.shuffle(&mut sampling_rng(seed));
            prop_assert_eq!(classify(&p.relabel(&perm).unwrap()), classify(&p));
        }

        #[test]
        fn text_round_trip(labels in labels_strategy()) {
            let p = MarkedPartition::from_labels(&labels);
            prop_assert_eq!(p.to_string().parse::<MarkedPartition>().unwrap(), p);
        }
    }
}
