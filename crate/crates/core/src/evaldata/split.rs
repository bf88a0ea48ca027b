use rand::Rng;

use super::Interaction;
use crate::{Error, Result};

/// Leave-one-out view of an interaction log.
///
/// Users are the retained users (at least three interactions), reindexed
/// densely; `user_origin[u]` is the loaded index of dataset user `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionDataset {
    pub num_users: usize,
    pub num_items: usize,
    /// Per user, training items in ascending order.
    pub train: Vec<Vec<usize>>,
    pub validation_item: Vec<usize>,
    pub test_item: Vec<usize>,
    /// Per user, sampled unobserved items ranked against the held-out item.
    pub eval_negatives: Vec<Vec<usize>>,
    pub dropped_users: usize,
    pub user_origin: Vec<usize>,
}

impl InteractionDataset {
    /// Assembles a dataset from explicit per-user parts and checks every
    /// protocol invariant.
    pub fn from_parts(
        num_users: usize,
        num_items: usize,
        mut train: Vec<Vec<usize>>,
        validation_item: Vec<usize>,
        test_item: Vec<usize>,
        eval_negatives: Vec<Vec<usize>>,
    ) -> Result<Self> {
        for items in &mut train {
            items.sort_unstable();
            items.dedup();
        }
        let ds = InteractionDataset {
            num_users,
            num_items,
            train,
            validation_item,
            test_item,
            eval_negatives,
            dropped_users: 0,
            user_origin: (0..num_users).collect(),
        };
        let problems = ds.integrity_violations();
        if problems.is_empty() {
            Ok(ds)
        } else {
            Err(Error::Data(problems.join("; ")))
        }
    }

    pub fn is_train(&self, user: usize, item: usize) -> bool {
        self.train[user].binary_search(&item).is_ok()
    }

    /// Whether `item` appears anywhere in the user's history (train or held out).
    pub fn is_observed(&self, user: usize, item: usize) -> bool {
        self.is_train(user, item) || self.validation_item[user] == item || self.test_item[user] == item
    }

    pub fn num_train_interactions(&self) -> usize {
        self.train.iter().map(Vec::len).sum()
    }

    /// Exhaustive scan of the split invariants: per-user disjointness of
    /// train/validation/test, negative-set purity and distinctness, and index
    /// ranges. Empty when the dataset is sound.
    pub fn integrity_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.num_users;
        if self.train.len() != n
            || self.validation_item.len() != n
            || self.test_item.len() != n
            || self.eval_negatives.len() != n
            || self.user_origin.len() != n
        {
            out.push(format!("per-user tables do not all have {n} entries"));
            return out;
        }
        for u in 0..n {
            let (v, t) = (self.validation_item[u], self.test_item[u]);
            if v >= self.num_items || t >= self.num_items {
                out.push(format!("user {u}: held-out item out of range"));
            }
            if v == t {
                out.push(format!("user {u}: validation and test item coincide ({v})"));
            }
            if self.train[u].windows(2).any(|w| w[0] >= w[1]) {
                out.push(format!("user {u}: train items not strictly ascending"));
            }
            if self.train[u].iter().any(|&i| i >= self.num_items) {
                out.push(format!("user {u}: train item out of range"));
            }
            if self.is_train(u, v) {
                out.push(format!("user {u}: validation item {v} also in train"));
            }
            if self.is_train(u, t) {
                out.push(format!("user {u}: test item {t} also in train"));
            }
            let mut negs = self.eval_negatives[u].clone();
            negs.sort_unstable();
            if negs.windows(2).any(|w| w[0] == w[1]) {
                out.push(format!("user {u}: repeated evaluation negative"));
            }
            for &j in &negs {
                if j >= self.num_items {
                    out.push(format!("user {u}: negative {j} out of range"));
                } else if self.is_observed(u, j) {
                    out.push(format!("user {u}: negative {j} is an observed item"));
                }
            }
        }
        out
    }
}

/// Leave-one-out split: per user, interactions are ordered by timestamp
/// (input order breaks ties and orders untimed events); the latest becomes
/// the test item, the second latest the validation item, the rest train.
/// Users with fewer than three interactions are dropped. Evaluation negatives
/// are sampled uniformly without replacement from the user's unobserved items.
pub fn leave_one_out_split<R: Rng + ?Sized>(
    interactions: &[Interaction],
    num_users: usize,
    num_items: usize,
    negatives: usize,
    rng: &mut R,
) -> Result<InteractionDataset> {
    let mut per_user: Vec<Vec<(i64, usize)>> = vec![Vec::new(); num_users];
    for it in interactions {
        if it.user >= num_users || it.item >= num_items {
            return Err(Error::Data(format!(
                "interaction ({}, {}) outside {num_users} users x {num_items} items",
                it.user, it.item
            )));
        }
        per_user[it.user].push((it.timestamp.unwrap_or(i64::MIN), it.item));
    }

    let mut ds = InteractionDataset {
        num_users: 0,
        num_items,
        train: Vec::new(),
        validation_item: Vec::new(),
        test_item: Vec::new(),
        eval_negatives: Vec::new(),
        dropped_users: 0,
        user_origin: Vec::new(),
    };
    let mut observed = vec![false; num_items];
    for (origin, mut events) in per_user.into_iter().enumerate() {
        events.sort_by_key(|&(ts, _)| ts);
        let mut items: Vec<usize> = Vec::with_capacity(events.len());
        for (_, item) in events {
            if !items.contains(&item) {
                items.push(item);
            }
        }
        if items.len() < 3 {
            if !items.is_empty() {
                ds.dropped_users += 1;
            }
            continue;
        }
        let test = items.pop().unwrap();
        let validation = items.pop().unwrap();

        for &i in items.iter().chain([&validation, &test]) {
            observed[i] = true;
        }
        let unobserved: Vec<usize> = (0..num_items).filter(|&i| !observed[i]).collect();
        for &i in items.iter().chain([&validation, &test]) {
            observed[i] = false;
        }
        if negatives > unobserved.len() {
            return Err(Error::Data(format!(
                "user {origin} has only {} unobserved items, {negatives} negatives requested",
                unobserved.len()
            )));
        }
        let mut negs: Vec<usize> = rand::seq::index::sample(rng, unobserved.len(), negatives)
            .into_iter()
            .map(|k| unobserved[k])
            .collect();
        negs.sort_unstable();

        items.sort_unstable();
        ds.train.push(items);
        ds.validation_item.push(validation);
        ds.test_item.push(test);
        ds.eval_negatives.push(negs);
        ds.user_origin.push(origin);
    }
    ds.num_users = ds.train.len();
    if ds.num_users == 0 {
        return Err(Error::Data(
            "no user has the three interactions a leave-one-out split needs".into(),
        ));
    }
    Ok(ds)
}
