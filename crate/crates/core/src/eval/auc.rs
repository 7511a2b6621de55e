use crate::corpus::Label;
use crate::error::{Error, Result};

/// Mann-Whitney AUC: the share of (positive, negative) pairs where the
/// positive scores higher, with ties counted as half.
///
/// Runs in O(n log n) via mid-ranks.
pub fn auc(scores: &[(f64, Label)]) -> Result<f64> {
    if let Some(i) = scores.iter().position(|(s, _)| !s.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let pos = scores.iter().filter(|(_, l)| l.is_positive()).count();
    let neg = scores.len() - pos;
    if pos == 0 {
        return Err(Error::SingleClass(Label::NotHateful.as_str()));
    }
    if neg == 0 {
        return Err(Error::SingleClass(Label::Hateful.as_str()));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].0.total_cmp(&scores[b].0));
    let mut pos_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]].0 == scores[order[start]].0 {
            end += 1;
        }
        // 1-based ranks start+1 ..= end share their mean
        let mid_rank = (start + 1 + end) as f64 / 2.0;
        let tied_pos = order[start..end].iter().filter(|&&i| scores[i].1.is_positive()).count();
        pos_rank_sum += mid_rank * tied_pos as f64;
        start = end;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}
