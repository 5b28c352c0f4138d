//! Minibatch index streams.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, Rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SamplingKind {
    /// Uniform over examples, with replacement.
    Random,
    /// Uniform over non-empty groups, then uniform within the group.
    UniformGroup,
}

impl SamplingKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplingKind::Random => "random",
            SamplingKind::UniformGroup => "uniform-group",
        }
    }
}

impl fmt::Display for SamplingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(SamplingKind::Random),
            "uniform-group" => Ok(SamplingKind::UniformGroup),
            _ => Err(Error::usage(format!(
                "unknown sampling '{s}', expected random or uniform-group"
            ))),
        }
    }
}

/// An endless stream of index batches. An epoch is `⌈n / batch⌉` batches.
#[derive(Debug, Clone)]
pub struct Sampler {
    kind: SamplingKind,
    batch: usize,
    n: usize,
    /// Member indices of each non-empty group.
    groups: Vec<Vec<usize>>,
    rng: Rng,
}

impl Sampler {
    pub fn new(kind: SamplingKind, data: &Dataset, batch: usize, seed: u64) -> Result<Self> {
        Self::from_groups(kind, &data.groups(), batch, seed)
    }

    /// Sampler over examples whose group ids are given.
    pub fn from_groups(
        kind: SamplingKind,
        groups: &[usize],
        batch: usize,
        seed: u64,
    ) -> Result<Self> {
        if batch == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if groups.is_empty() {
            return Err(Error::data("cannot sample from an empty dataset"));
        }
        let n_groups = groups.iter().max().map_or(0, |&g| g + 1);
        let mut members = vec![Vec::new(); n_groups];
        for (i, &g) in groups.iter().enumerate() {
            members[g].push(i);
        }
        members.retain(|m| !m.is_empty());
        Ok(Sampler {
            kind,
            batch,
            n: groups.len(),
            groups: members,
            rng: rng::stream(seed, Stream::Sampler),
        })
    }

    pub fn kind(&self) -> SamplingKind {
        self.kind
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.n.div_ceil(self.batch)
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        (0..self.batch)
            .map(|_| match self.kind {
                SamplingKind::Random => self.rng.gen_range(0..self.n),
                SamplingKind::UniformGroup => {
                    let g = &self.groups[self.rng.gen_range(0..self.groups.len())];
                    g[self.rng.gen_range(0..g.len())]
                }
            })
            .collect()
    }

    pub fn epoch(&mut self) -> Vec<Vec<usize>> {
        (0..self.batches_per_epoch())
            .map(|_| self.next_batch())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_example_repeats() {
        let mut s = Sampler::from_groups(SamplingKind::Random, &[3], 4, 1).unwrap();
        assert_eq!(s.next_batch(), vec![0; 4]);
        assert_eq!(s.batches_per_epoch(), 1);
    }

    #[test]
    fn epochs_have_ceil_batches() {
        let s = Sampler::from_groups(SamplingKind::Random, &[0; 10], 3, 1).unwrap();
        assert_eq!(s.batches_per_epoch(), 4);
    }

    #[test]
    fn same_seed_same_stream() {
        let groups: Vec<usize> = (0..50).map(|i| i % 3).collect();
        for kind in [SamplingKind::Random, SamplingKind::UniformGroup] {
            let mut a = Sampler::from_groups(kind, &groups, 8, 42).unwrap();
            let mut b = Sampler::from_groups(kind, &groups, 8, 42).unwrap();
            let mut c = Sampler::from_groups(kind, &groups, 8, 43).unwrap();
            assert_eq!(a.epoch(), b.epoch());
            assert_ne!(a.epoch(), c.epoch());
        }
    }

    #[test]
    fn single_group_is_within_group_uniform() {
        let groups = vec![2, 2, 2, 2];
        let mut s = Sampler::from_groups(SamplingKind::UniformGroup, &groups, 1000, 0).unwrap();
        let mut counts = [0; 4];
        for i in s.next_batch() {
            counts[i] += 1;
        }
        assert!(counts.iter().all(|&c| c > 180), "{counts:?}");
    }

    #[test]
    fn errors() {
        assert!(Sampler::from_groups(SamplingKind::Random, &[], 4, 0).is_err());
        assert!(Sampler::from_groups(SamplingKind::Random, &[0], 0, 0).is_err());
        assert_eq!(
            "uniform-group".parse::<SamplingKind>().unwrap(),
            SamplingKind::UniformGroup
        );
        assert!("uniform".parse::<SamplingKind>().is_err());
    }
}
