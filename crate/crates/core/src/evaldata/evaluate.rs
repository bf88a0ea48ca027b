use std::io::Write;

use super::metrics::{hr_at_position, ndcg_at_position, RankedList};
use super::InteractionDataset;
use crate::network::Network;
use crate::seed::derive_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    /// Second-latest item; used as fitness during search.
    Validation,
    /// Latest item; used only for final reports.
    Test,
}

/// Anything that can score candidate items for a user. Only the order of
/// the returned scores matters.
pub trait Scorer {
    fn score_items(&self, user: usize, items: &[usize]) -> Result<Vec<f64>>;
}

impl Scorer for Network {
    fn score_items(&self, user: usize, items: &[usize]) -> Result<Vec<f64>> {
        let users = vec![user; items.len()];
        self.predict_logits(&users, items)
    }
}

/// Ranks items by their number of training interactions.
#[derive(Debug, Clone)]
pub struct PopularityScorer {
    counts: Vec<f64>,
}

impl PopularityScorer {
    pub fn from_train(ds: &InteractionDataset) -> Self {
        let mut counts = vec![0.0; ds.num_items];
        for items in &ds.train {
            for &i in items {
                counts[i] += 1.0;
            }
        }
        PopularityScorer { counts }
    }
}

impl Scorer for PopularityScorer {
    fn score_items(&self, _user: usize, items: &[usize]) -> Result<Vec<f64>> {
        Ok(items.iter().map(|&i| self.counts[i]).collect())
    }
}

/// Pseudo-random scores that depend only on (seed, user, item).
#[derive(Debug, Clone, Copy)]
pub struct RandomScorer {
    pub seed: u64,
}

impl Scorer for RandomScorer {
    fn score_items(&self, user: usize, items: &[usize]) -> Result<Vec<f64>> {
        Ok(items
            .iter()
            .map(|&i| (derive_seed(self.seed, user as u64, i as u64) >> 11) as f64)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub k: usize,
    pub hr: f64,
    pub ndcg: f64,
    pub per_user_hr: Vec<f64>,
    pub per_user_ndcg: Vec<f64>,
    pub num_users: usize,
}

/// 1-based rank of each user's held-out item among itself plus the user's
/// evaluation negatives.
pub fn held_out_positions<S: Scorer + ?Sized>(scorer: &S, ds: &InteractionDataset, split: Split) -> Result<Vec<usize>> {
    (0..ds.num_users)
        .map(|u| {
            let target = match split {
                Split::Validation => ds.validation_item[u],
                Split::Test => ds.test_item[u],
            };
            let mut candidates = Vec::with_capacity(ds.eval_negatives[u].len() + 1);
            candidates.push(target);
            candidates.extend_from_slice(&ds.eval_negatives[u]);
            let scores = scorer.score_items(u, &candidates)?;
            if scores.len() != candidates.len() {
                return Err(Error::State(format!(
                    "scorer returned {} scores for {} candidates",
                    scores.len(),
                    candidates.len()
                )));
            }
            let ranked = RankedList::from_scores(&candidates, &scores);
            Ok(ranked.position_of(target).expect("target is a candidate"))
        })
        .collect()
}

fn result_from_positions(positions: &[usize], k: usize) -> EvalResult {
    let per_user_hr: Vec<f64> = positions.iter().map(|&p| hr_at_position(Some(p), k)).collect();
    let per_user_ndcg: Vec<f64> = positions.iter().map(|&p| ndcg_at_position(Some(p), k)).collect();
    let n = positions.len();
    let mean = |v: &[f64]| if n == 0 { 0.0 } else { v.iter().sum::<f64>() / n as f64 };
    EvalResult {
        k,
        hr: mean(&per_user_hr),
        ndcg: mean(&per_user_ndcg),
        per_user_hr,
        per_user_ndcg,
        num_users: n,
    }
}

/// HR@K and NDCG@K averaged over users for the chosen held-out split.
pub fn evaluate_model<S: Scorer + ?Sized>(
    scorer: &S,
    ds: &InteractionDataset,
    split: Split,
    k: usize,
) -> Result<EvalResult> {
    if k == 0 {
        return Err(Error::Argument("K must be at least 1".into()));
    }
    let positions = held_out_positions(scorer, ds, split)?;
    Ok(result_from_positions(&positions, k))
}

/// Results for every K in `1..=k_max` from a single scoring pass.
pub fn evaluate_sweep<S: Scorer + ?Sized>(
    scorer: &S,
    ds: &InteractionDataset,
    split: Split,
    k_max: usize,
) -> Result<Vec<EvalResult>> {
    if k_max == 0 {
        return Err(Error::Argument("k_max must be at least 1".into()));
    }
    let positions = held_out_positions(scorer, ds, split)?;
    Ok((1..=k_max).map(|k| result_from_positions(&positions, k)).collect())
}

/// `k,hr,ndcg` table, one row per result.
pub fn write_sweep_csv<W: Write>(results: &[EvalResult], mut out: W) -> std::io::Result<()> {
    writeln!(out, "k,hr,ndcg")?;
    for r in results {
        writeln!(out, "{},{},{}", r.k, r.hr, r.ndcg)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Oracle<'a> {
        ds: &'a InteractionDataset,
        favour: bool,
    }

    impl Scorer for Oracle<'_> {
        fn score_items(&self, user: usize, items: &[usize]) -> Result<Vec<f64>> {
            let target = self.ds.validation_item[user];
            Ok(items
                .iter()
                .map(|&i| if (i == target) == self.favour { 1.0 } else { 0.0 })
                .collect())
        }
    }

    fn dataset(users: usize, items: usize, negatives: usize) -> InteractionDataset {
        let train = (0..users).map(|u| vec![u % items]).collect();
        let val = (0..users).map(|u| (u + 1) % items).collect();
        let test = (0..users).map(|u| (u + 2) % items).collect();
        let negs = (0..users)
            .map(|u| (3..3 + negatives).map(|k| (u + k) % items).collect())
            .collect();
        InteractionDataset::from_parts(users, items, train, val, test, negs).unwrap()
    }

    #[test]
    fn oracle_and_adversary() {
        let ds = dataset(30, 103, 99);
        let best = evaluate_model(&Oracle { ds: &ds, favour: true }, &ds, Split::Validation, 10).unwrap();
        assert_eq!((best.hr, best.ndcg), (1.0, 1.0));
        let worst = evaluate_model(&Oracle { ds: &ds, favour: false }, &ds, Split::Validation, 10).unwrap();
        assert_eq!((worst.hr, worst.ndcg), (0.0, 0.0));
        assert_eq!(worst.num_users, 30);
    }

    #[test]
    fn aggregate_is_mean_of_users() {
        let ds = dataset(40, 60, 20);
        let r = evaluate_model(&RandomScorer { seed: 3 }, &ds, Split::Test, 5).unwrap();
        let mean: f64 = r.per_user_ndcg.iter().sum::<f64>() / 40.0;
        assert!((mean - r.ndcg).abs() < 1e-15);
    }

    #[test]
    fn sweep_is_monotone_and_csv_shaped() {
        let ds = dataset(50, 120, 99);
        let sweep = evaluate_sweep(&RandomScorer { seed: 1 }, &ds, Split::Test, 10).unwrap();
        assert_eq!(sweep.len(), 10);
        for w in sweep.windows(2) {
            assert!(w[1].hr >= w[0].hr && w[1].ndcg >= w[0].ndcg);
        }
        let mut buf = Vec::new();
        write_sweep_csv(&sweep, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 11);
        assert_eq!(text.lines().next(), Some("k,hr,ndcg"));
    }

    #[test]
    fn oracle_sweep_has_perfect_first_row() {
        let ds = dataset(20, 110, 99);
        let sweep = evaluate_sweep(&Oracle { ds: &ds, favour: true }, &ds, Split::Validation, 10).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&sweep, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().nth(1), Some("1,1,1"));
    }
}
