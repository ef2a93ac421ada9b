//! Class rebalancing by interpolated over/under-sampling.
//!
//! `p_u` is the undersampling fraction: every class is brought to a common
//! target size that moves from the majority count (`p_u = 0`, oversample
//! only) to the minority count (`p_u = 1`, undersample only).

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;

/// Number of examples per class label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassCounts(BTreeMap<usize, usize>);

impl ClassCounts {
    pub fn new(counts: BTreeMap<usize, usize>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::InvalidArgument("need at least two classes".into()));
        }
        if let Some((label, _)) = counts.iter().find(|(_, &n)| n == 0) {
            return Err(Error::EmptyClass(label.to_string()));
        }
        Ok(ClassCounts(counts))
    }

    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        let mut m = BTreeMap::new();
        for &l in labels {
            *m.entry(l).or_insert(0) += 1;
        }
        Self::new(m)
    }

    pub fn get(&self, label: usize) -> Option<usize> {
        self.0.get(&label).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.0.iter().map(|(&l, &n)| (l, n))
    }

    pub fn min(&self) -> usize {
        self.0.values().copied().min().unwrap_or(0)
    }

    pub fn max(&self) -> usize {
        self.0.values().copied().max().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    Undersample,
    Oversample,
    Keep,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Undersample => "undersample",
            Action::Oversample => "oversample",
            Action::Keep => "keep",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResamplePlan {
    pub p_u: f64,
    pub target: usize,
    pub actions: BTreeMap<usize, Action>,
}

impl ResamplePlan {
    pub fn new(counts: &ClassCounts, p_u: f64) -> Result<Self> {
        let target = target_count(counts, p_u)?;
        let actions = counts
            .iter()
            .map(|(l, n)| {
                let a = match n.cmp(&target) {
                    std::cmp::Ordering::Greater => Action::Undersample,
                    std::cmp::Ordering::Less => Action::Oversample,
                    std::cmp::Ordering::Equal => Action::Keep,
                };
                (l, a)
            })
            .collect();
        Ok(ResamplePlan { p_u, target, actions })
    }
}

/// Common per-class size: `round(min + (1 - p_u) * (max - min))`.
pub fn target_count(counts: &ClassCounts, p_u: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&p_u) {
        return Err(Error::InvalidArgument(format!("p_u = {p_u} is outside [0, 1]")));
    }
    let lo = counts.min() as f64;
    let hi = counts.max() as f64;
    Ok((lo + (1.0 - p_u) * (hi - lo)).round() as usize)
}

/// Indices into `labels` forming a rebalanced, shuffled sample.
///
/// Classes above the target are sampled without replacement. Classes below it
/// keep every original once and are topped up with uniform draws with
/// replacement.
pub fn rebalance_indices(labels: &[usize], p_u: f64, seed: u64) -> Result<Vec<usize>> {
    let counts = ClassCounts::from_labels(labels)?;
    let target = target_count(&counts, p_u)?;

    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }

    let mut rng = rng::seeded(seed);
    let mut out = Vec::with_capacity(target * by_class.len());
    for members in by_class.values() {
        let n = members.len();
        if n >= target {
            out.extend(index::sample(&mut rng, n, target).into_iter().map(|j| members[j]));
        } else {
            out.extend_from_slice(members);
            out.extend((n..target).map(|_| members[rng.random_range(0..n)]));
        }
    }
    out.shuffle(&mut rng);
    Ok(out)
}

/// Rebalance a labelled list; see [`rebalance_indices`].
pub fn rebalance<T: Clone>(
    examples: &[T],
    label_of: impl Fn(&T) -> usize,
    p_u: f64,
    seed: u64,
) -> Result<Vec<T>> {
    let labels: Vec<usize> = examples.iter().map(label_of).collect();
    Ok(rebalance_indices(&labels, p_u, seed)?
        .into_iter()
        .map(|i| examples[i].clone())
        .collect())
}

/// Before/after counts per class as TSV (`class, before, after, action`).
pub fn write_report<W: Write>(
    counts: &ClassCounts,
    plan: &ResamplePlan,
    class_names: &[&str],
    mut w: W,
) -> Result<()> {
    writeln!(w, "class\tbefore\tafter\taction")?;
    for (label, n) in counts.iter() {
        let name = class_names.get(label).copied().unwrap_or("?");
        writeln!(w, "{name}\t{n}\t{}\t{}", plan.target, plan.actions[&label].as_str())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn counts(pairs: &[(usize, usize)]) -> ClassCounts {
        ClassCounts::new(pairs.iter().copied().collect()).unwrap()
    }

    #[test]
    fn target_examples() {
        // UNT / TIN
        assert_eq!(target_count(&counts(&[(0, 420), (1, 3100)]), 0.2).unwrap(), 2564);
        // IND / GRP / OTH
        assert_eq!(target_count(&counts(&[(0, 1929), (1, 852), (2, 319)]), 0.7).unwrap(), 802);
        // NOT / OFF
        assert_eq!(target_count(&counts(&[(0, 7053), (1, 3539)]), 0.3).unwrap(), 5999);
        let c = counts(&[(0, 17), (1, 5), (2, 9)]);
        assert_eq!(target_count(&c, 1.0).unwrap(), 5);
        assert_eq!(target_count(&c, 0.0).unwrap(), 17);
        assert!(target_count(&c, 1.5).is_err());
        assert!(target_count(&c, -0.1).is_err());
    }

    #[test]
    fn counts_validation() {
        assert!(ClassCounts::from_labels(&[0, 0, 0]).is_err());
        assert!(ClassCounts::new([(0, 3), (1, 0)].into_iter().collect()).is_err());
    }

    #[test]
    fn plan_actions() {
        let plan = ResamplePlan::new(&counts(&[(0, 10), (1, 4), (2, 7)]), 0.5).unwrap();
        assert_eq!(plan.target, 7);
        assert_eq!(plan.actions[&0], Action::Undersample);
        assert_eq!(plan.actions[&1], Action::Oversample);
        assert_eq!(plan.actions[&2], Action::Keep);
    }

    fn xy_labels() -> Vec<usize> {
        let mut l = vec![0; 10];
        l.extend(vec![1; 4]);
        l
    }

    #[test]
    fn pure_undersampling_has_no_duplicates() {
        let labels = xy_labels();
        let idx = rebalance_indices(&labels, 1.0, 3).unwrap();
        assert_eq!(idx.iter().filter(|&&i| labels[i] == 0).count(), 4);
        assert_eq!(idx.iter().filter(|&&i| labels[i] == 1).count(), 4);
        let uniq: HashSet<_> = idx.iter().collect();
        assert_eq!(uniq.len(), idx.len());
    }

    #[test]
    fn pure_oversampling_keeps_originals() {
        let labels = xy_labels();
        let idx = rebalance_indices(&labels, 0.0, 3).unwrap();
        assert_eq!(idx.iter().filter(|&&i| labels[i] == 0).count(), 10);
        assert_eq!(idx.iter().filter(|&&i| labels[i] == 1).count(), 10);
        for orig in 10..14 {
            assert!(idx.contains(&orig));
        }
    }

    #[test]
    fn report_tsv() {
        let c = counts(&[(0, 420), (1, 3100)]);
        let plan = ResamplePlan::new(&c, 0.2).unwrap();
        let mut buf = Vec::new();
        write_report(&c, &plan, &["UNT", "TIN"], &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "class\tbefore\tafter\taction\nUNT\t420\t2564\toversample\nTIN\t3100\t2564\tundersample\n");
    }

    proptest! {
        #[test]
        fn rebalance_invariants(
            sizes in proptest::collection::vec(1usize..30, 2..5),
            p_u in prop_oneof![Just(0.0), Just(1.0), 0.0f64..=1.0],
            seed in any::<u64>(),
        ) {
            let labels: Vec<usize> = sizes.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
            let out = rebalance_indices(&labels, p_u, seed).unwrap();
            let target = target_count(&ClassCounts::from_labels(&labels).unwrap(), p_u).unwrap();
            for c in 0..sizes.len() {
                prop_assert_eq!(out.iter().filter(|&&i| labels[i] == c).count(), target);
            }
            prop_assert_eq!(&out, &rebalance_indices(&labels, p_u, seed).unwrap());

            let set: HashSet<usize> = out.iter().copied().collect();
            if p_u == 1.0 {
                prop_assert_eq!(set.len(), out.len());
            }
            let all_originals = (0..labels.len()).all(|i| set.contains(&i));
            if p_u == 0.0 {
                prop_assert!(all_originals);
            }
        }
    }
}
