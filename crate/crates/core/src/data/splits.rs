//! Cross-validation split plans for the standard, augment and transfer settings.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitPolicy {
    /// k-fold over the target dataset only.
    Standard,
    /// Standard folds, with every video of the other datasets added to training.
    Augment,
    /// One fold: train on the other datasets, test on the whole target.
    Transfer,
}

impl SplitPolicy {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitPolicy::Standard => "standard",
            SplitPolicy::Augment => "augment",
            SplitPolicy::Transfer => "transfer",
        }
    }
}

impl fmt::Display for SplitPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(SplitPolicy::Standard),
            "augment" => Ok(SplitPolicy::Augment),
            "transfer" => Ok(SplitPolicy::Transfer),
            other => Err(Error::InvalidArgument(format!(
                "unknown split policy `{other}` (expected standard, augment or transfer)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub policy: SplitPolicy,
    pub target: String,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

/// Builds a split plan; ids must be unique across datasets.
pub fn make_splits(
    dataset_ids: &BTreeMap<String, Vec<String>>,
    target: &str,
    policy: SplitPolicy,
    n_folds: usize,
    seed: u64,
) -> Result<SplitPlan> {
    let target_ids = dataset_ids
        .get(target)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown target dataset `{target}`")))?;
    let others: Vec<String> = dataset_ids
        .iter()
        .filter(|(name, _)| name.as_str() != target)
        .flat_map(|(_, ids)| ids.iter().cloned())
        .collect();

    let folds = match policy {
        SplitPolicy::Transfer => {
            if target_ids.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "target dataset `{target}` is empty"
                )));
            }
            if others.is_empty() {
                return Err(Error::InvalidArgument(
                    "transfer setting needs at least one other dataset".into(),
                ));
            }
            vec![Fold {
                train: others,
                test: target_ids.clone(),
            }]
        }
        SplitPolicy::Standard | SplitPolicy::Augment => {
            if n_folds < 2 {
                return Err(Error::InvalidArgument(format!(
                    "need at least 2 folds, got {n_folds}"
                )));
            }
            if target_ids.len() < n_folds {
                return Err(Error::InvalidArgument(format!(
                    "target dataset `{target}` has {} videos, fewer than {n_folds} folds",
                    target_ids.len()
                )));
            }
            let mut shuffled = target_ids.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let n = shuffled.len();
            (0..n_folds)
                .map(|k| {
                    let (lo, hi) = (k * n / n_folds, (k + 1) * n / n_folds);
                    let test = shuffled[lo..hi].to_vec();
                    let mut train: Vec<String> = shuffled[..lo]
                        .iter()
                        .chain(&shuffled[hi..])
                        .cloned()
                        .collect();
                    if policy == SplitPolicy::Augment {
                        train.extend(others.iter().cloned());
                    }
                    Fold { train, test }
                })
                .collect()
        }
    };
    Ok(SplitPlan {
        policy,
        target: target.to_string(),
        seed,
        folds,
    })
}

impl SplitPlan {
    /// Key-value text form, one line per field.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("policy = {}\n", self.policy));
        out.push_str(&format!("target = {}\n", self.target));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("folds = {}\n", self.folds.len()));
        for (k, fold) in self.folds.iter().enumerate() {
            out.push_str(&format!("fold.{k}.train = {}\n", fold.train.join(",")));
            out.push_str(&format!("fold.{k}.test = {}\n", fold.test.join(",")));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Format(format!("split plan line {}: expected `key = value`", lineno + 1))
            })?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let mut take = |k: &str| {
            kv.remove(k)
                .ok_or_else(|| Error::Format(format!("split plan is missing `{k}`")))
        };
        let policy: SplitPolicy = take("policy")?.parse()?;
        let target = take("target")?;
        let seed = take("seed")?
            .parse()
            .map_err(|_| Error::Format("split plan `seed` is not an integer".into()))?;
        let n: usize = take("folds")?
            .parse()
            .map_err(|_| Error::Format("split plan `folds` is not an integer".into()))?;
        let split_ids = |s: String| -> Vec<String> {
            s.split(',')
                .map(str::trim)
                .filter(|x| !x.is_empty())
                .map(String::from)
                .collect()
        };
        let mut folds = Vec::with_capacity(n);
        for k in 0..n {
            let train = split_ids(take(&format!("fold.{k}.train"))?);
            let test = split_ids(take(&format!("fold.{k}.test"))?);
            folds.push(Fold { train, test });
        }
        if let Some(extra) = kv.keys().next() {
            return Err(Error::Format(format!("split plan has unknown key `{extra}`")));
        }
        Ok(SplitPlan {
            policy,
            target,
            seed,
            folds,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("{prefix}/video_{i}")).collect()
    }

    #[test]
    fn standard_partitions_target() {
        let mut d = BTreeMap::new();
        d.insert("a".to_string(), ids("a", 20));
        let plan = make_splits(&d, "a", SplitPolicy::Standard, 5, 3).unwrap();
        assert_eq!(plan.folds.len(), 5);
        let mut seen = BTreeSet::new();
        for f in &plan.folds {
            assert_eq!(f.test.len(), 4);
            assert_eq!(f.train.len(), 16);
            for id in &f.test {
                assert!(seen.insert(id.clone()), "{id} tested twice");
                assert!(!f.train.contains(id));
            }
        }
        assert_eq!(seen, d["a"].iter().cloned().collect());
    }

    #[test]
    fn augment_adds_other_datasets() {
        let mut d = BTreeMap::new();
        d.insert("a".to_string(), ids("a", 10));
        d.insert("b".to_string(), ids("b", 30));
        let plan = make_splits(&d, "a", SplitPolicy::Augment, 5, 0).unwrap();
        for f in &plan.folds {
            assert_eq!((f.train.len(), f.test.len()), (38, 2));
            assert!(f.test.iter().all(|id| id.starts_with("a/")));
        }
    }

    #[test]
    fn transfer_tests_whole_target() {
        let mut d = BTreeMap::new();
        d.insert("a".to_string(), ids("a", 10));
        d.insert("b".to_string(), ids("b", 3));
        d.insert("c".to_string(), ids("c", 4));
        let plan = make_splits(&d, "a", SplitPolicy::Transfer, 5, 0).unwrap();
        assert_eq!(plan.folds.len(), 1);
        assert_eq!(plan.folds[0].test, d["a"]);
        let train: BTreeSet<_> = plan.folds[0].train.iter().cloned().collect();
        let expected: BTreeSet<_> = d["b"].iter().chain(&d["c"]).cloned().collect();
        assert_eq!(train, expected);
    }

    #[test]
    fn errors() {
        let mut d = BTreeMap::new();
        d.insert("a".to_string(), ids("a", 3));
        assert!(make_splits(&d, "a", SplitPolicy::Standard, 5, 0).is_err());
        assert!(make_splits(&d, "zzz", SplitPolicy::Standard, 2, 0).is_err());
        assert!(make_splits(&d, "a", SplitPolicy::Transfer, 2, 0).is_err());
        assert!("bogus".parse::<SplitPolicy>().is_err());
    }

    #[test]
    fn text_roundtrip() {
        let mut d = BTreeMap::new();
        d.insert("a".to_string(), ids("a", 7));
        d.insert("b".to_string(), ids("b", 2));
        let plan = make_splits(&d, "a", SplitPolicy::Augment, 3, 9).unwrap();
        assert_eq!(SplitPlan::from_text(&plan.to_text()).unwrap(), plan);
        assert!(SplitPlan::from_text("policy = standard\n").is_err());
    }
}
