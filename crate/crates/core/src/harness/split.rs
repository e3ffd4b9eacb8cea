use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::SampleSet;
use crate::error::{check_len, Error, Result, SplitSide};
use crate::gradsim::SimGroupAssignment;
use crate::models::{evaluate_correctness, CorrectnessMask, ModelArch};
use crate::params::ParamVector;

/// Source set partitioned into correctly answered (mastered) and incorrectly
/// answered (injection) samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub mastered: SampleSet,
    pub injection: SampleSet,
    pub mastered_indices: Vec<usize>,
    pub injection_indices: Vec<usize>,
}

impl SplitResult {
    pub fn source_len(&self) -> usize {
        self.mastered_indices.len() + self.injection_indices.len()
    }
}

pub fn split_mastered_injection(params: &ParamVector, set: &SampleSet, arch: &ModelArch) -> Result<SplitResult> {
    if set.is_empty() {
        return Err(Error::config("cannot split an empty set"));
    }
    let mask = evaluate_correctness(params, set, arch)?;
    split_by_mask(set, &mask)
}

/// Partition by precomputed correctness flags.
pub fn split_by_mask(set: &SampleSet, mask: &CorrectnessMask) -> Result<SplitResult> {
    check_len(set.len(), mask.len())?;
    let (mastered_indices, injection_indices): (Vec<usize>, Vec<usize>) =
        (0..set.len()).partition(|&i| mask.flags[i]);
    if mastered_indices.is_empty() {
        return Err(Error::DegenerateSplit { side: SplitSide::Mastered });
    }
    if injection_indices.is_empty() {
        return Err(Error::DegenerateSplit { side: SplitSide::Injection });
    }
    Ok(SplitResult {
        mastered: set.subset(&mastered_indices),
        injection: set.subset(&injection_indices),
        mastered_indices,
        injection_indices,
    })
}

/// Seeded shuffle of `indices`, then the first `round(ratio * n)` (clamped so
/// both sides are nonempty) become the training part.
pub fn out_of_set_split(indices: &[usize], ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if indices.len() < 2 {
        return Err(Error::config(format!(
            "out-of-set split needs at least 2 indices, got {}",
            indices.len()
        )));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::config(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let mut shuffled = indices.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = shuffled.len();
    let n_train = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
    let eval = shuffled.split_off(n_train);
    Ok((shuffled, eval))
}

/// Learned: injection samples that went from wrong to right. Forgot: mastered
/// samples that went from right to wrong. Masks are aligned with the source
/// set of `split`.
pub fn measure_learning_forgetting(
    before: &CorrectnessMask,
    after: &CorrectnessMask,
    split: &SplitResult,
) -> Result<(usize, usize)> {
    check_len(before.len(), after.len())?;
    check_len(split.source_len(), before.len())?;
    let learned = split
        .injection_indices
        .iter()
        .filter(|&&i| !before.flags[i] && after.flags[i])
        .count();
    let forgot = split
        .mastered_indices
        .iter()
        .filter(|&&i| before.flags[i] && !after.flags[i])
        .count();
    Ok((learned, forgot))
}

/// Flip counts over a whole set: `(wrong -> right, right -> wrong)`.
pub(crate) fn count_flips(before: &CorrectnessMask, after: &CorrectnessMask) -> (usize, usize) {
    let mut gained = 0;
    let mut lost = 0;
    for (&b, &a) in before.flags.iter().zip(&after.flags) {
        match (b, a) {
            (false, true) => gained += 1,
            (true, false) => lost += 1,
            _ => {}
        }
    }
    (gained, lost)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupTally {
    pub size: usize,
    pub count: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupForgetting {
    pub sim: GroupTally,
    pub middle: GroupTally,
    pub dissim: GroupTally,
}

impl GroupForgetting {
    pub const CSV_HEADER: &'static str = "group,size,forgot,rate";

    pub fn csv_rows(&self) -> [String; 3] {
        let row = |name: &str, t: &GroupTally| format!("{name},{},{},{}", t.size, t.count, t.rate);
        [row("sim", &self.sim), row("middle", &self.middle), row("dissim", &self.dissim)]
    }
}

/// Forgetting counts and rates per similarity group; `forgot_flags[i]` refers
/// to mastered sample `i`.
pub fn forgetting_by_group(groups: &SimGroupAssignment, forgot_flags: &[bool]) -> Result<GroupForgetting> {
    let tally = |idx: &[usize]| -> Result<GroupTally> {
        let mut count = 0;
        for &i in idx {
            match forgot_flags.get(i) {
                Some(true) => count += 1,
                Some(false) => {}
                None => {
                    return Err(Error::config(format!(
                        "group index {i} outside {} mastered flags",
                        forgot_flags.len()
                    )))
                }
            }
        }
        let rate = if idx.is_empty() { 0.0 } else { count as f64 / idx.len() as f64 };
        Ok(GroupTally { size: idx.len(), count, rate })
    };
    Ok(GroupForgetting {
        sim: tally(&groups.sim_indices)?,
        middle: tally(&groups.middle_indices)?,
        dissim: tally(&groups.dissim_indices)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::DenseArray;

    fn four() -> SampleSet {
        let x = DenseArray::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        SampleSet::new(x, vec![0, 1, 0, 1]).unwrap()
    }

    fn mask(flags: &[u8]) -> CorrectnessMask {
        CorrectnessMask { flags: flags.iter().map(|&f| f == 1).collect() }
    }

    #[test]
    fn split_by_alternating_mask() {
        let s = split_by_mask(&four(), &mask(&[1, 0, 1, 0])).unwrap();
        assert_eq!(s.mastered_indices, vec![0, 2]);
        assert_eq!(s.injection_indices, vec![1, 3]);
        assert_eq!(s.mastered.inputs().data(), &[0.0, 2.0]);
    }

    #[test]
    fn degenerate_splits_name_the_side() {
        match split_by_mask(&four(), &mask(&[1, 1, 1, 1])) {
            Err(Error::DegenerateSplit { side }) => assert_eq!(side, SplitSide::Injection),
            other => panic!("{other:?}"),
        }
        match split_by_mask(&four(), &mask(&[0, 0, 0, 0])) {
            Err(Error::DegenerateSplit { side }) => assert_eq!(side, SplitSide::Mastered),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn learning_and_forgetting_counts() {
        let split = split_by_mask(&four(), &mask(&[1, 0, 1, 0])).unwrap();
        let before = mask(&[1, 0, 1, 0]);
        assert_eq!(measure_learning_forgetting(&before, &mask(&[1, 1, 0, 0]), &split).unwrap(), (1, 1));
        assert_eq!(measure_learning_forgetting(&before, &before, &split).unwrap(), (0, 0));
        assert!(measure_learning_forgetting(&before, &mask(&[1, 1, 0]), &split).is_err());
    }

    #[test]
    fn out_of_set_halves() {
        let (a, b) = out_of_set_split(&[10, 11, 12, 13], 0.5, 3).unwrap();
        assert_eq!((a.len(), b.len()), (2, 2));
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort();
        assert_eq!(all, vec![10, 11, 12, 13]);
        assert_eq!(out_of_set_split(&[10, 11, 12, 13], 0.5, 3).unwrap(), (a, b));
        assert!(out_of_set_split(&[1], 0.5, 0).is_err());
        assert!(out_of_set_split(&[1, 2], 1.0, 0).is_err());
    }

    #[test]
    fn group_tallies() {
        let groups = SimGroupAssignment {
            sim_indices: vec![0, 1],
            middle_indices: vec![2],
            dissim_indices: vec![3, 4],
            excluded_indices: vec![5],
        };
        let none = forgetting_by_group(&groups, &[false; 6]).unwrap();
        assert_eq!((none.sim.rate, none.middle.rate, none.dissim.rate), (0.0, 0.0, 0.0));
        let sim_only = forgetting_by_group(&groups, &[true, false, false, false, false, true]).unwrap();
        assert_eq!(sim_only.sim.count, 1);
        assert_eq!(sim_only.sim.rate, 0.5);
        assert_eq!(sim_only.dissim.rate, 0.0);
        assert!(forgetting_by_group(&groups, &[false; 3]).is_err());
    }
}
