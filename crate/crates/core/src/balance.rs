//! ADASYN oversampling of the minority class.
//!
//! With minority count `m_s` and majority count `m_l`, `G = (m_l - m_s) * beta`
//! synthetic points are spread over the minority points in proportion to
//! how many majority points sit among each one's `k` nearest neighbours.
//! Each synthetic point is `x_i + gap * (x_z - x_i)` with `x_z` one of the
//! `k` nearest minority neighbours of `x_i`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::dataset::FeatureDataset;
use crate::error::{Error, Result};
use crate::par::{self, ExecMode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalancerConfig {
    pub k: usize,
    pub beta: f64,
    pub seed: u64,
    #[serde(default)]
    pub mode: ExecMode,
}

impl Default for BalancerConfig {
    fn default() -> Self {
        Self {
            k: 5,
            beta: 1.0,
            seed: 0,
            mode: ExecMode::default(),
        }
    }
}

/// Everything ADASYN decides before drawing random numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct AdasynPlan {
    pub minority: Label,
    pub minority_count: usize,
    pub majority_count: usize,
    /// `(m_l - m_s) * beta`.
    pub target: f64,
    /// Dataset indices of minority points, ascending.
    pub minority_indices: Vec<usize>,
    /// Per minority point: its k nearest neighbours over all points.
    pub neighbors: Vec<Vec<usize>>,
    /// Per minority point: majority members among `neighbors`.
    pub majority_neighbors: Vec<usize>,
    /// Normalised density ratios; sum to 1.
    pub ratios: Vec<f64>,
    /// Synthetic points to generate from each minority point.
    pub quotas: Vec<usize>,
    /// Per minority point: its k nearest minority neighbours.
    pub minority_neighbors: Vec<Vec<usize>>,
}

/// Provenance of one generated point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Synthetic {
    pub seed: usize,
    /// `None` when the seed has no minority neighbour and was duplicated.
    pub neighbor: Option<usize>,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct AdasynOutput {
    /// Original rows followed by synthetic rows in seed order.
    pub dataset: FeatureDataset,
    pub plan: AdasynPlan,
    pub synthetics: Vec<Synthetic>,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The `k` candidates closest to row `query` (itself excluded), ties broken
/// by lower index.
pub fn nearest_neighbors(
    ds: &FeatureDataset,
    query: usize,
    candidates: impl Iterator<Item = usize>,
    k: usize,
) -> Vec<usize> {
    let q = ds.row(query);
    let mut scored: Vec<(f64, usize)> = candidates
        .filter(|&j| j != query)
        .map(|j| (squared_distance(q, ds.row(j)), j))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if scored.len() > k {
        scored.select_nth_unstable_by(k, cmp);
        scored.truncate(k);
    }
    scored.sort_by(cmp);
    scored.into_iter().map(|(_, j)| j).collect()
}

pub fn plan(ds: &FeatureDataset, config: &BalancerConfig) -> Result<AdasynPlan> {
    if config.k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&config.beta) {
        return Err(Error::OutOfRange {
            what: "beta",
            value: config.beta,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let pos = ds.count(Label::Hateful);
    let neg = ds.count(Label::NotHateful);
    if pos == 0 {
        return Err(Error::SingleClass(Label::NotHateful.as_str()));
    }
    if neg == 0 {
        return Err(Error::SingleClass(Label::Hateful.as_str()));
    }
    let minority = if pos <= neg { Label::Hateful } else { Label::NotHateful };
    let (m_s, m_l) = (pos.min(neg), pos.max(neg));
    let target = (m_l - m_s) as f64 * config.beta;

    let minority_indices: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels()[i] == minority).collect();
    let neighbors: Vec<Vec<usize>> = par::map_slice(config.mode, &minority_indices, |&i| {
        nearest_neighbors(ds, i, 0..ds.len(), config.k)
    });
    let minority_neighbors: Vec<Vec<usize>> = par::map_slice(config.mode, &minority_indices, |&i| {
        nearest_neighbors(ds, i, minority_indices.iter().copied(), config.k)
    });
    let majority_neighbors: Vec<usize> = neighbors
        .iter()
        .map(|nn| nn.iter().filter(|&&j| ds.labels()[j] != minority).count())
        .collect();
    let raw: Vec<f64> = majority_neighbors.iter().map(|&d| d as f64 / config.k as f64).collect();
    let total: f64 = raw.iter().sum();
    let ratios: Vec<f64> = if total > 0.0 {
        raw.iter().map(|r| r / total).collect()
    } else {
        vec![1.0 / m_s as f64; m_s]
    };
    let quotas = ratios.iter().map(|r| (r * target).round() as usize).collect();

    Ok(AdasynPlan {
        minority,
        minority_count: m_s,
        majority_count: m_l,
        target,
        minority_indices,
        neighbors,
        majority_neighbors,
        ratios,
        quotas,
        minority_neighbors,
    })
}

pub fn adasyn(ds: &FeatureDataset, config: &BalancerConfig) -> Result<AdasynOutput> {
    adasyn_with_gap(ds, config, |rng| rng.random::<f64>())
}

/// ADASYN with a caller-supplied interpolation gap sampler.
pub fn adasyn_with_gap(
    ds: &FeatureDataset,
    config: &BalancerConfig,
    mut gap: impl FnMut(&mut ChaCha8Rng) -> f64,
) -> Result<AdasynOutput> {
    let plan = plan(ds, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d = ds.n_features();
    let n_new: usize = plan.quotas.iter().sum();

    let mut values = ds.values().to_vec();
    values.reserve(n_new * d);
    let mut labels = ds.labels().to_vec();
    let mut ids = ds.ids().to_vec();
    let mut synthetics = Vec::with_capacity(n_new);

    for (slot, &seed) in plan.minority_indices.iter().enumerate() {
        let pool = &plan.minority_neighbors[slot];
        for _ in 0..plan.quotas[slot] {
            let x = ds.row(seed);
            let (neighbor, g) = if pool.is_empty() {
                (None, 0.0)
            } else {
                let z = pool[rng.random_range(0..pool.len())];
                (Some(z), gap(&mut rng))
            };
            match neighbor {
                Some(z) => {
                    let xz = ds.row(z);
                    values.extend(x.iter().zip(xz).map(|(a, b)| a + g * (b - a)));
                }
                None => values.extend_from_slice(x),
            }
            labels.push(plan.minority);
            ids.push(format!("synthetic-{}", synthetics.len()));
            synthetics.push(Synthetic { seed, neighbor, gap: g });
        }
    }
    let dataset = FeatureDataset::new(ds.registry().clone(), values, labels, ids)?;
    Ok(AdasynOutput {
        dataset,
        plan,
        synthetics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorers::FeatureRegistry;
    use std::sync::Arc;

    fn toy() -> FeatureDataset {
        // 8 majority points near the origin, 2 minority points: one inside
        // the cluster, one far away.
        let rows = vec![
            vec![0.0, 0.0],
            vec![0.1, 0.0],
            vec![0.0, 0.1],
            vec![0.1, 0.1],
            vec![-0.1, 0.0],
            vec![0.0, -0.1],
            vec![-0.1, -0.1],
            vec![0.2, 0.2],
            vec![0.05, 0.05],
            vec![3.0, 3.0],
        ];
        let labels = (0..10).map(|i| Label::from_positive(i >= 8)).collect();
        let reg = Arc::new(FeatureRegistry::new(["x", "y"]).unwrap());
        FeatureDataset::from_rows(reg, &rows, labels).unwrap()
    }

    fn brute_knn(ds: &FeatureDataset, q: usize, pool: &[usize], k: usize) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = pool
            .iter()
            .filter(|&&j| j != q)
            .map(|&j| {
                let d: f64 = ds.row(q).iter().zip(ds.row(j)).map(|(a, b)| (a - b).powi(2)).sum();
                (d, j)
            })
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|(_, j)| j).collect()
    }

    #[test]
    fn toy_plan_matches_hand_arithmetic() {
        let ds = toy();
        let cfg = BalancerConfig {
            k: 3,
            ..Default::default()
        };
        let p = plan(&ds, &cfg).unwrap();
        assert_eq!(p.target, 6.0);
        let all: Vec<usize> = (0..10).collect();
        assert_eq!(p.neighbors[0], brute_knn(&ds, 8, &all, 3));
        assert_eq!(p.neighbors[1], brute_knn(&ds, 9, &all, 3));
        // Point 8 sits in the cluster: 3 majority neighbours. Point 9's three
        // nearest are point 7 (0.2,0.2), point 8 and point 3 (0.1,0.1): 2 majority.
        assert_eq!(p.majority_neighbors, vec![3, 2]);
        assert!((p.ratios[0] - 0.6).abs() < 1e-12);
        assert!((p.ratios[1] - 0.4).abs() < 1e-12);
        // round(3.6) = 4, round(2.4) = 2
        assert_eq!(p.quotas, vec![4, 2]);
        let out = adasyn(&ds, &cfg).unwrap();
        assert_eq!(out.dataset.len(), 16);
        assert_eq!(out.dataset.count(Label::Hateful), 8);
    }

    #[test]
    fn balanced_input_unchanged() {
        let reg = Arc::new(FeatureRegistry::new(["x"]).unwrap());
        let ds = FeatureDataset::from_rows(
            reg,
            &[vec![0.0], vec![1.0], vec![2.0], vec![3.0]],
            vec![Label::Hateful, Label::NotHateful, Label::Hateful, Label::NotHateful],
        )
        .unwrap();
        let out = adasyn(&ds, &BalancerConfig::default()).unwrap();
        assert_eq!(out.dataset, ds);
        assert!(out.synthetics.is_empty());
    }

    #[test]
    fn zero_gap_copies_seed() {
        let ds = toy();
        let out = adasyn_with_gap(
            &ds,
            &BalancerConfig {
                k: 3,
                ..Default::default()
            },
            |_| 0.0,
        )
        .unwrap();
        for (n, s) in out.synthetics.iter().enumerate() {
            assert_eq!(out.dataset.row(ds.len() + n), ds.row(s.seed));
        }
    }

    #[test]
    fn single_class_rejected() {
        let reg = Arc::new(FeatureRegistry::new(["x"]).unwrap());
        let ds = FeatureDataset::from_rows(reg, &[vec![0.0], vec![1.0]], vec![Label::Hateful; 2]).unwrap();
        assert!(matches!(
            adasyn(&ds, &BalancerConfig::default()),
            Err(Error::SingleClass(_))
        ));
    }

    #[test]
    fn no_majority_neighbours_falls_back_to_uniform() {
        // minority cluster far from majority cluster
        let reg = Arc::new(FeatureRegistry::new(["x"]).unwrap());
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|i| vec![i as f64 * 0.01])
            .chain((0..7).map(|i| vec![10.0 + i as f64 * 0.01]))
            .collect();
        let labels = (0..10).map(|i| Label::from_positive(i < 3)).collect();
        let ds = FeatureDataset::from_rows(reg, &rows, labels).unwrap();
        let p = plan(
            &ds,
            &BalancerConfig {
                k: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(p.majority_neighbors, vec![0, 0, 0]);
        assert_eq!(p.ratios, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn lone_minority_point_duplicates_itself() {
        let reg = Arc::new(FeatureRegistry::new(["x"]).unwrap());
        let rows: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64]).collect();
        let labels = vec![Label::Hateful, Label::NotHateful, Label::NotHateful, Label::NotHateful];
        let ds = FeatureDataset::from_rows(reg, &rows, labels).unwrap();
        let out = adasyn(&ds, &BalancerConfig::default()).unwrap();
        assert_eq!(out.synthetics.len(), 2);
        assert!(out.synthetics.iter().all(|s| s.neighbor.is_none()));
        assert_eq!(out.dataset.row(4), &[0.0]);
    }

    #[test]
    fn deterministic_and_mode_independent() {
        let ds = toy();
        let seq = BalancerConfig {
            k: 3,
            seed: 9,
            mode: ExecMode::Sequential,
            ..Default::default()
        };
        let par = BalancerConfig {
            mode: ExecMode::Parallel,
            ..seq
        };
        let a = adasyn(&ds, &seq).unwrap();
        let b = adasyn(&ds, &par).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.synthetics, b.synthetics);
    }
}
