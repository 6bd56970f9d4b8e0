use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datacube::LabeledPatchSet;
use crate::error::{Error, Result};

pub const REPETITIONS: usize = 5;
pub const FOLDS: usize = 2;

/// Five seeded, stratified two-way splits of the patch indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CvPlan {
    pub seed: u64,
    /// `assignments[rep][fold]` holds sorted patch indices.
    pub assignments: Vec<[Vec<usize>; FOLDS]>,
}

impl CvPlan {
    /// The ten `(train, validation)` pairs in fixed order: for each
    /// repetition, fold 0 validates first, then fold 1.
    pub fn pairs(&self) -> Vec<(&[usize], &[usize])> {
        self.assignments
            .iter()
            .flat_map(|[a, b]| [(b.as_slice(), a.as_slice()), (a.as_slice(), b.as_slice())])
            .collect()
    }
}

pub fn make_cv_plan(set: &LabeledPatchSet, seed: u64) -> Result<CvPlan> {
    make_cv_plan_from_labels(set.labels(), set.classes(), seed)
}

pub fn make_cv_plan_from_labels(labels: &[usize], classes: usize, seed: u64) -> Result<CvPlan> {
    let mut by_class = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::precondition(format!("label {l} >= class count {classes}")));
        }
        by_class[l].push(i);
    }
    if let Some((class, members)) = by_class.iter().enumerate().find(|(_, m)| m.len() < 2) {
        return Err(Error::Stratification {
            class,
            count: members.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = Vec::with_capacity(REPETITIONS);
    for _ in 0..REPETITIONS {
        let mut folds: [Vec<usize>; FOLDS] = Default::default();
        // odd-sized classes alternate which fold gets the extra patch
        let mut start = 0;
        for members in &by_class {
            let mut shuffled = members.clone();
            shuffled.shuffle(&mut rng);
            for (k, idx) in shuffled.into_iter().enumerate() {
                folds[(start + k) % FOLDS].push(idx);
            }
            start = (start + members.len()) % FOLDS;
        }
        folds.iter_mut().for_each(|f| f.sort_unstable());
        assignments.push(folds);
    }
    Ok(CvPlan { seed, assignments })
}
