//! Top-K ranking metrics.

/// Items ranked by descending score; equal scores are ordered by ascending item id.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    entries: Vec<(usize, f64)>,
}

impl RankedList {
    pub fn from_scores(items: &[usize], scores: &[f64]) -> Self {
        assert_eq!(items.len(), scores.len(), "one score per item");
        let mut entries: Vec<(usize, f64)> = items.iter().copied().zip(scores.iter().copied()).collect();
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        RankedList { entries }
    }

    /// Already-ordered item ids (position 1 first).
    pub fn from_order(items: &[usize]) -> Self {
        let n = items.len() as f64;
        RankedList {
            entries: items.iter().enumerate().map(|(k, &i)| (i, n - k as f64)).collect(),
        }
    }

    pub fn items(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// 1-based position of `item`, if present.
    pub fn position_of(&self, item: usize) -> Option<usize> {
        self.entries.iter().position(|e| e.0 == item).map(|p| p + 1)
    }
}

/// NDCG@K for a single relevant item at 1-based `position` (None when absent).
pub fn ndcg_at_position(position: Option<usize>, k: usize) -> f64 {
    match position {
        Some(p) if p <= k => 1.0 / ((p + 1) as f64).log2(),
        _ => 0.0,
    }
}

pub fn hr_at_position(position: Option<usize>, k: usize) -> f64 {
    match position {
        Some(p) if p <= k => 1.0,
        _ => 0.0,
    }
}

/// NDCG@K with one binary-relevant item. Items beyond the list's end are
/// treated as unranked.
pub fn ndcg_at_k(ranked: &RankedList, relevant: usize, k: usize) -> f64 {
    assert!(k >= 1, "K must be at least 1");
    ndcg_at_position(ranked.position_of(relevant), k)
}

/// 1 if the relevant item is within the top K, else 0.
pub fn hr_at_k(ranked: &RankedList, relevant: usize, k: usize) -> f64 {
    assert!(k >= 1, "K must be at least 1");
    hr_at_position(ranked.position_of(relevant), k)
}

/// Discounted cumulative gain of the first K graded relevances,
/// gain `2^r - 1`, discount `log2(position + 1)`.
pub fn dcg_at_k(relevance_in_rank_order: &[f64], k: usize) -> f64 {
    relevance_in_rank_order
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &r)| (2f64.powf(r) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// Graded NDCG@K: DCG of the given order divided by the DCG of the same
/// relevances sorted descending. Zero when nothing is relevant.
pub fn ndcg_graded(relevance_in_rank_order: &[f64], k: usize) -> f64 {
    let mut ideal = relevance_in_rank_order.to_vec();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let best = dcg_at_k(&ideal, k);
    if best <= 0.0 {
        0.0
    } else {
        dcg_at_k(relevance_in_rank_order, k) / best
    }
}
