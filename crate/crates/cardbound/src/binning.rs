//! Join-key domain binning: strategies for partitioning a key group's value
//! domain into bins, per-bin summaries (total count, most-frequent-value
//! count, distinct count), workload-aware budget allocation, and the frozen
//! bin discipline used by incremental updates.
//!
//! All keys of one group share a single [`BinMap`], so a value lands in the
//! same bin no matter which member column it appears in. That same-index
//! property is what lets the online bound combine per-key summaries bin by
//! bin.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::catalog::ValueCountStore;
use crate::{Error, Result};

/// How a group's domain was partitioned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "gbsa")]
    Gbsa,
    #[serde(rename = "equal_width")]
    EqualWidth,
    #[serde(rename = "equal_depth")]
    EqualDepth,
    #[serde(rename = "single")]
    Single,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Strategy::Gbsa => "gbsa",
            Strategy::EqualWidth => "equal_width",
            Strategy::EqualDepth => "equal_depth",
            Strategy::Single => "single",
        };
        f.write_str(s)
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Strategy> {
        match s {
            "gbsa" => Ok(Strategy::Gbsa),
            "width" | "equal_width" => Ok(Strategy::EqualWidth),
            "depth" | "equal_depth" => Ok(Strategy::EqualDepth),
            "single" => Ok(Strategy::Single),
            other => Err(Error::Query(format!(
                "unknown binning strategy `{other}` (expected gbsa, width, depth, or single)"
            ))),
        }
    }
}

/// Explicit value-to-bin assignment for one key group.
///
/// The map covers every value observed at build time across all member keys.
/// Values that show up later (inserts after training) are routed to the bin
/// of the nearest assigned value — bins stay frozen, only membership grows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinMap {
    pub group_id: usize,
    pub strategy: Strategy,
    /// Requested budget. An upper bound: strategies may use fewer bins.
    pub budget: usize,
    assignment: BTreeMap<i64, u32>,
    num_bins: usize,
}

impl BinMap {
    pub fn from_parts(
        group_id: usize,
        strategy: Strategy,
        budget: usize,
        assignment: BTreeMap<i64, u32>,
    ) -> BinMap {
        let num_bins = assignment.values().map(|&b| b as usize + 1).max().unwrap_or(1);
        BinMap { group_id, strategy, budget, assignment, num_bins }
    }

    /// Number of bins actually in use (always at least 1).
    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn assignment(&self) -> &BTreeMap<i64, u32> {
        &self.assignment
    }

    /// Bin of a value observed at build time.
    pub fn bin_of(&self, v: i64) -> Option<u32> {
        self.assignment.get(&v).copied()
    }

    /// Bin of the nearest assigned value (ties prefer the smaller value).
    /// Falls back to bin 0 on an empty map.
    pub fn nearest_bin(&self, v: i64) -> u32 {
        if let Some(b) = self.assignment.get(&v) {
            return *b;
        }
        let below = self.assignment.range(..=v).next_back();
        let above = self.assignment.range(v..).next();
        match (below, above) {
            (Some((&lo, &lb)), Some((&hi, &hb))) => {
                let dl = (v as i128 - lo as i128).unsigned_abs();
                let dh = (hi as i128 - v as i128).unsigned_abs();
                if dl <= dh {
                    lb
                } else {
                    hb
                }
            }
            (Some((_, &b)), None) | (None, Some((_, &b))) => b,
            (None, None) => 0,
        }
    }

    /// Route `v` to a bin, permanently recording the choice for unseen
    /// values so later lookups agree.
    pub fn assign(&mut self, v: i64) -> u32 {
        match self.assignment.get(&v) {
            Some(&b) => b,
            None => {
                let b = self.nearest_bin(v);
                self.assignment.insert(v, b);
                b
            }
        }
    }
}

/// Population variance of a count list.
fn variance(counts: &[u64]) -> f64 {
    if counts.is_empty() {
        return 0.0;
    }
    let n = counts.len() as f64;
    let sum: f64 = counts.iter().map(|&c| c as f64).sum();
    let sumsq: f64 = counts.iter().map(|&c| (c as f64) * (c as f64)).sum();
    let mean = sum / n;
    (sumsq / n - mean * mean).max(0.0)
}

/// Sort values the way every count-based partitioner here sees them:
/// descending count, ties by ascending value.
fn count_sorted(counts: &BTreeMap<i64, u64>) -> Vec<(i64, u64)> {
    let mut v: Vec<(i64, u64)> = counts.iter().map(|(&a, &b)| (a, b)).collect();
    v.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(&y.0)));
    v
}

/// Renumber bins so indices are contiguous from 0, preserving order.
fn compress(assignment: &mut BTreeMap<i64, u32>) {
    let mut used: Vec<u32> = assignment.values().copied().collect();
    used.sort_unstable();
    used.dedup();
    let remap: BTreeMap<u32, u32> =
        used.iter().enumerate().map(|(i, &b)| (b, i as u32)).collect();
    for b in assignment.values_mut() {
        *b = remap[b];
    }
}

/// Partition values into `min(k, distinct)` bins of near-equal total count,
/// taking values in count-sorted order so similar counts share a bin. Every
/// bin is non-empty and contiguous in that order; with `k` at or above the
/// distinct count this degenerates to one bin per value.
pub fn min_variance_assignment(counts: &BTreeMap<i64, u64>, k: usize) -> BTreeMap<i64, u32> {
    quantile_assignment(count_sorted(counts), k)
}

/// Greedy near-equal-mass split of `ordered` into exactly `min(k, len)`
/// non-empty contiguous runs: each run takes values until it reaches the
/// remaining mass divided by the remaining runs, but never takes so many
/// that a later run would come up empty.
fn quantile_assignment(ordered: Vec<(i64, u64)>, k: usize) -> BTreeMap<i64, u32> {
    let n = ordered.len();
    if n == 0 {
        return BTreeMap::new();
    }
    let bins = k.max(1).min(n);
    let mut out = BTreeMap::new();
    let mut mass_left: u128 = ordered.iter().map(|&(_, c)| c as u128).sum();
    let mut i = 0usize;
    for b in 0..bins {
        let max_take = n - i - (bins - b - 1);
        let target = mass_left / (bins - b) as u128;
        let mut take = 1usize;
        let mut acc = ordered[i].1 as u128;
        while take < max_take && acc < target {
            acc += ordered[i + take].1 as u128;
            take += 1;
        }
        for &(v, _) in &ordered[i..i + take] {
            out.insert(v, b as u32);
        }
        i += take;
        mass_left -= acc;
    }
    out
}

/// Best two-way split of one bin: values are count-sorted and every split
/// point is scored by the sum of the two sides' count variances; the first
/// minimum wins. Returns the values that move to the new bin (the tail of
/// the sorted order), or `None` when no split helps (fewer than two values
/// or zero variance).
fn min_variance_split(values: &BTreeMap<i64, u64>) -> Option<Vec<i64>> {
    if values.len() < 2 {
        return None;
    }
    let ordered = count_sorted(values);
    let counts: Vec<u64> = ordered.iter().map(|&(_, c)| c).collect();
    if variance(&counts) == 0.0 {
        return None;
    }
    let n = counts.len();
    let mut pre_sum = vec![0.0f64; n + 1];
    let mut pre_sq = vec![0.0f64; n + 1];
    for i in 0..n {
        pre_sum[i + 1] = pre_sum[i] + counts[i] as f64;
        pre_sq[i + 1] = pre_sq[i] + (counts[i] as f64) * (counts[i] as f64);
    }
    let seg_var = |a: usize, b: usize| -> f64 {
        // Population variance of counts[a..b].
        let n = (b - a) as f64;
        let s = pre_sum[b] - pre_sum[a];
        let q = pre_sq[b] - pre_sq[a];
        (q / n - (s / n) * (s / n)).max(0.0)
    };
    let mut best = (f64::INFINITY, 0usize);
    for split in 1..n {
        let score = seg_var(0, split) + seg_var(split, n);
        if score < best.0 {
            best = (score, split);
        }
    }
    Some(ordered[best.1..].iter().map(|&(v, _)| v).collect())
}

/// Union of several stores' domains with summed counts.
fn union_counts(stores: &[&ValueCountStore]) -> BTreeMap<i64, u64> {
    let mut out: BTreeMap<i64, u64> = BTreeMap::new();
    for s in stores {
        for (&v, &c) in &s.counts {
            *out.entry(v).or_insert(0) += c;
        }
    }
    out
}

/// Greedy per-key refinement. The key with the largest domain is binned
/// first with half the budget by the near-equal-mass rule; every further
/// key then spends half of the remaining budget splitting the bins where
/// its own counts vary the most, so one partition serves all member keys.
pub fn gbsa_assignment(stores: &[&ValueCountStore], k: usize) -> BTreeMap<i64, u32> {
    // Largest domain first; ties keep the caller's (catalog member) order.
    let mut order: Vec<usize> = (0..stores.len()).collect();
    order.sort_by(|&a, &b| stores[b].ndv().cmp(&stores[a].ndv()).then(a.cmp(&b)));
    let order: Vec<&ValueCountStore> = order.into_iter().map(|i| stores[i]).collect();

    let first = match order.first() {
        Some(s) if s.ndv() > 0 => s,
        _ => return BTreeMap::new(),
    };
    let mut assignment = min_variance_assignment(&first.counts, (k / 2).max(1));
    let mut next_bin = assignment.values().map(|&b| b + 1).max().unwrap_or(1);
    let mut remain = k / 2;

    for key in order.iter().skip(1) {
        if remain / 2 < 1 {
            break;
        }
        // Route this key's values through the current bins, extending the
        // assignment to values the earlier keys never had.
        let mut scratch = BinMap::from_parts(0, Strategy::Gbsa, k, assignment);
        for &v in key.counts.keys() {
            scratch.assign(v);
        }
        assignment = scratch.assignment;

        // Score each bin by the variance of this key's counts inside it.
        let mut per_bin: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
        for (v, &b) in &assignment {
            if let Some(&c) = key.counts.get(v) {
                per_bin.entry(b).or_default().push(c);
            }
        }
        let mut scored: Vec<(u32, f64)> = per_bin
            .iter()
            .map(|(&b, counts)| (b, variance(counts)))
            .filter(|&(_, var)| var > 0.0)
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        scored.truncate(remain / 2);

        for (bin, _) in scored {
            // Split on this key's counts; values the key lacks sit at the
            // low end with count zero.
            let members: BTreeMap<i64, u64> = assignment
                .iter()
                .filter(|&(_, &b)| b == bin)
                .map(|(&v, _)| (v, key.counts.get(&v).copied().unwrap_or(0)))
                .collect();
            if let Some(moved) = min_variance_split(&members) {
                for v in moved {
                    assignment.insert(v, next_bin);
                }
                next_bin += 1;
            }
        }
        remain /= 2;
    }
    compress(&mut assignment);
    assignment
}

/// Uniform value-range slices of the union domain.
pub fn equal_width_assignment(stores: &[&ValueCountStore], k: usize) -> BTreeMap<i64, u32> {
    let union = union_counts(stores);
    let (min, max) = match (union.keys().next(), union.keys().next_back()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return BTreeMap::new(),
    };
    let k = k.max(1) as i128;
    let span = max as i128 - min as i128 + 1;
    let mut out: BTreeMap<i64, u32> = union
        .keys()
        .map(|&v| (v, ((v as i128 - min as i128) * k / span) as u32))
        .collect();
    compress(&mut out);
    out
}

/// Equal total-count quantiles over the value-sorted domain of the
/// largest-domain key; other keys' values follow the nearest assigned value.
pub fn equal_depth_assignment(stores: &[&ValueCountStore], k: usize) -> BTreeMap<i64, u32> {
    let mut order: Vec<usize> = (0..stores.len()).collect();
    order.sort_by(|&a, &b| stores[b].ndv().cmp(&stores[a].ndv()).then(a.cmp(&b)));
    let first = match order.first() {
        Some(&i) if stores[i].ndv() > 0 => stores[i],
        _ => return BTreeMap::new(),
    };
    let ordered: Vec<(i64, u64)> = first.counts.iter().map(|(&v, &c)| (v, c)).collect();
    let assignment = quantile_assignment(ordered, k);
    let mut map = BinMap::from_parts(0, Strategy::EqualDepth, k, assignment);
    for s in stores {
        for &v in s.counts.keys() {
            map.assign(v);
        }
    }
    map.assignment
}

/// Build the shared bin map for one group from its member keys' stores
/// (in catalog member order).
pub fn build_binmap(
    group_id: usize,
    strategy: Strategy,
    k: usize,
    stores: &[&ValueCountStore],
) -> Result<BinMap> {
    if k < 1 {
        return Err(Error::Estimate(format!("group {group_id}: bin budget must be at least 1")));
    }
    let assignment = match strategy {
        Strategy::Single => union_counts(stores).keys().map(|&v| (v, 0u32)).collect(),
        Strategy::Gbsa if k < 2 => union_counts(stores).keys().map(|&v| (v, 0u32)).collect(),
        Strategy::Gbsa => {
            let mut a = gbsa_assignment(stores, k);
            // Cover union values the refinement never saw (possible when it
            // stopped before visiting every key).
            let mut map = BinMap::from_parts(group_id, strategy, k, std::mem::take(&mut a));
            for s in stores {
                for &v in s.counts.keys() {
                    map.assign(v);
                }
            }
            map.assignment
        }
        Strategy::EqualWidth => equal_width_assignment(stores, k),
        Strategy::EqualDepth => equal_depth_assignment(stores, k),
    };
    Ok(BinMap::from_parts(group_id, strategy, k, assignment))
}

/// Per-bin summary of one key under one bin map: total rows, the count of
/// the bin's most frequent value, and the number of distinct values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinSummary {
    pub totals: Vec<u64>,
    pub mfv: Vec<u64>,
    pub ndv: Vec<u64>,
}

impl BinSummary {
    pub fn num_bins(&self) -> usize {
        self.totals.len()
    }
}

/// Summarize one key's store under the group's bin map, extending the map
/// for values it has never seen (post-update inserts).
pub fn summarize(store: &ValueCountStore, binmap: &mut BinMap) -> BinSummary {
    let k = binmap.num_bins();
    let mut totals = vec![0u64; k];
    let mut mfv = vec![0u64; k];
    let mut ndv = vec![0u64; k];
    for (&v, &c) in &store.counts {
        let b = binmap.assign(v) as usize;
        totals[b] += c;
        ndv[b] += 1;
        if c > mfv[b] {
            mfv[b] = c;
        }
    }
    BinSummary { totals, mfv, ndv }
}

/// Split a total bin budget across groups proportionally to how often each
/// group shows up in the workload. Zero workload splits evenly. Rounding
/// residue goes to the heaviest groups first (ties to the smaller id);
/// an overshoot is taken back from the lightest groups first (ties to the
/// larger id), never below one bin.
pub fn allocate_bin_budget(workload_counts: &[u64], total: usize) -> Result<Vec<usize>> {
    let g = workload_counts.len();
    if g == 0 {
        return Ok(Vec::new());
    }
    if total < g {
        return Err(Error::Estimate(format!(
            "total bin budget {total} is below one bin per group ({g} groups)"
        )));
    }
    let sum: u64 = workload_counts.iter().sum();
    let mut alloc: Vec<usize> = if sum == 0 {
        let base = total / g;
        let extra = total % g;
        (0..g).map(|i| base + usize::from(i < extra)).collect()
    } else {
        workload_counts
            .iter()
            .map(|&n| {
                let share = total as f64 * n as f64 / sum as f64;
                (share.round() as usize).max(1)
            })
            .collect()
    };

    let mut assigned: usize = alloc.iter().sum();
    if assigned < total {
        // Heaviest first, ties to the smaller group id.
        let mut order: Vec<usize> = (0..g).collect();
        order.sort_by(|&a, &b| {
            workload_counts[b].cmp(&workload_counts[a]).then(a.cmp(&b))
        });
        let mut i = 0;
        while assigned < total {
            alloc[order[i % g]] += 1;
            assigned += 1;
            i += 1;
        }
    } else if assigned > total {
        // Lightest first, ties to the larger group id; keep every group >= 1.
        let mut order: Vec<usize> = (0..g).collect();
        order.sort_by(|&a, &b| {
            workload_counts[a].cmp(&workload_counts[b]).then(b.cmp(&a))
        });
        let mut i = 0;
        while assigned > total {
            let idx = order[i % g];
            if alloc[idx] > 1 {
                alloc[idx] -= 1;
                assigned -= 1;
            }
            i += 1;
        }
    }
    Ok(alloc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_of(pairs: &[(i64, u64)]) -> ValueCountStore {
        ValueCountStore { counts: pairs.iter().copied().collect(), nulls: 0 }
    }

    fn bins_as_sets(a: &BTreeMap<i64, u32>) -> Vec<Vec<i64>> {
        let k = a.values().map(|&b| b as usize + 1).max().unwrap_or(0);
        let mut out = vec![Vec::new(); k];
        for (&v, &b) in a {
            out[b as usize].push(v);
        }
        out
    }

    #[test]
    fn min_variance_groups_similar_counts() {
        // Two heavy and two light values split cleanly in half.
        let counts = [(1, 5), (2, 5), (3, 1), (4, 1)].into_iter().collect();
        let a = min_variance_assignment(&counts, 2);
        assert_eq!(bins_as_sets(&a), vec![vec![1, 2], vec![3, 4]]);
    }

    #[test]
    fn min_variance_budget_at_or_above_ndv_gives_singletons() {
        let counts = [(10, 8), (20, 4), (30, 3)].into_iter().collect();
        for k in [3, 5, 100] {
            let a = min_variance_assignment(&counts, k);
            assert_eq!(bins_as_sets(&a).iter().map(Vec::len).max(), Some(1));
            assert_eq!(a.len(), 3);
        }
    }

    #[test]
    fn min_variance_single_bin() {
        let counts = [(1, 5), (2, 1)].into_iter().collect();
        let a = min_variance_assignment(&counts, 1);
        assert!(a.values().all(|&b| b == 0));
    }

    #[test]
    fn min_variance_two_way_score_matches_enumeration() {
        // Oracle: enumerate all contiguous 2-partitions of the count-sorted
        // order and take the best summed within-bin variance; the greedy
        // equal-mass split must reach that score on these shapes.
        let cases: Vec<Vec<(i64, u64)>> = vec![
            vec![(1, 5), (2, 5), (3, 1), (4, 1)],
            vec![(1, 100), (2, 1), (3, 1), (4, 1)],
            vec![(1, 6), (2, 6), (3, 6), (4, 6)],
        ];
        for case in cases {
            let counts: BTreeMap<i64, u64> = case.iter().copied().collect();
            let ordered = count_sorted(&counts);
            let vals: Vec<u64> = ordered.iter().map(|&(_, c)| c).collect();
            let mut best = f64::INFINITY;
            for s in 1..vals.len() {
                best = best.min(variance(&vals[..s]) + variance(&vals[s..]));
            }
            let a = min_variance_assignment(&counts, 2);
            let score: f64 = bins_as_sets(&a)
                .iter()
                .map(|set| {
                    let c: Vec<u64> = set.iter().map(|v| counts[v]).collect();
                    variance(&c)
                })
                .sum();
            assert!((score - best).abs() < 1e-12, "counts {counts:?}: {score} vs {best}");
        }
    }

    #[test]
    fn equal_depth_isolates_a_dominant_value() {
        let s = store_of(&[(1, 97), (2, 1), (3, 1), (4, 1)]);
        let a = equal_depth_assignment(&[&s], 2);
        assert_eq!(bins_as_sets(&a), vec![vec![1], vec![2, 3, 4]]);
    }

    #[test]
    fn equal_width_slices_the_value_range() {
        let pairs: Vec<(i64, u64)> = (1..=100).map(|v| (v, 1)).collect();
        let s = store_of(&pairs);
        let a = equal_width_assignment(&[&s], 4);
        let sets = bins_as_sets(&a);
        assert_eq!(sets.len(), 4);
        assert_eq!(sets[0], (1..=25).collect::<Vec<i64>>());
        assert_eq!(sets[1], (26..=50).collect::<Vec<i64>>());
        assert_eq!(sets[2], (51..=75).collect::<Vec<i64>>());
        assert_eq!(sets[3], (76..=100).collect::<Vec<i64>>());
    }

    #[test]
    fn gbsa_first_key_gets_half_the_budget() {
        let pk = store_of(&(1..=16).map(|v| (v, 1)).collect::<Vec<_>>());
        let a = gbsa_assignment(&[&pk], 8);
        let sets = bins_as_sets(&a);
        assert_eq!(sets.len(), 4);
        assert!(sets.iter().all(|s| s.len() == 4));
    }

    #[test]
    fn gbsa_splits_where_the_second_key_is_skewed() {
        let pk = store_of(&(1..=16).map(|v| (v, 1)).collect::<Vec<_>>());
        let mut fk_pairs: Vec<(i64, u64)> = (2..=16).map(|v| (v, 1)).collect();
        fk_pairs.push((1, 100));
        let fk = store_of(&fk_pairs);
        let a = gbsa_assignment(&[&pk, &fk], 8);
        let sets = bins_as_sets(&a);
        // The dominant foreign-key value ends up alone in its bin.
        assert!(sets.iter().any(|s| s == &vec![1]), "{sets:?}");
        assert!(sets.len() <= 8);
    }

    #[test]
    fn gbsa_budget_is_respected_and_deterministic() {
        let s1 = store_of(&(1..=50).map(|v| (v, (v % 7 + 1) as u64)).collect::<Vec<_>>());
        let s2 = store_of(&(10..=60).map(|v| (v, (61 - v) as u64)).collect::<Vec<_>>());
        for k in [2, 4, 8, 16, 64] {
            let a = gbsa_assignment(&[&s1, &s2], k);
            let b = gbsa_assignment(&[&s1, &s2], k);
            assert_eq!(a, b);
            let bins = a.values().map(|&x| x as usize + 1).max().unwrap();
            assert!(bins <= k, "k={k} bins={bins}");
        }
    }

    #[test]
    fn binmap_routes_unseen_values_to_the_nearest_assigned_value() {
        let assignment: BTreeMap<i64, u32> =
            [(10, 0), (20, 0), (30, 1), (100, 2)].into_iter().collect();
        let mut map = BinMap::from_parts(0, Strategy::Single, 3, assignment);
        assert_eq!(map.nearest_bin(22), 0); // closer to 20 than 30
        assert_eq!(map.nearest_bin(25), 0); // tie prefers the smaller value
        assert_eq!(map.nearest_bin(29), 1);
        assert_eq!(map.nearest_bin(1000), 2);
        assert_eq!(map.nearest_bin(-5), 0);
        let b = map.assign(26);
        assert_eq!(b, 1);
        assert_eq!(map.bin_of(26), Some(1));
    }

    #[test]
    fn summary_counts_totals_mfv_and_ndv() {
        let s = store_of(&[(1, 8), (2, 4), (3, 3), (9, 2)]);
        let assignment: BTreeMap<i64, u32> =
            [(1, 0), (2, 0), (3, 0), (9, 1)].into_iter().collect();
        let mut map = BinMap::from_parts(0, Strategy::Single, 2, assignment);
        let sum = summarize(&s, &mut map);
        assert_eq!(sum.totals, vec![15, 2]);
        assert_eq!(sum.mfv, vec![8, 2]);
        assert_eq!(sum.ndv, vec![3, 1]);
        assert_eq!(sum.totals.iter().sum::<u64>(), s.non_null());
        for b in 0..sum.num_bins() {
            assert!(sum.mfv[b] <= sum.totals[b]);
            if sum.ndv[b] > 0 {
                assert!(sum.mfv[b] * sum.ndv[b] >= sum.totals[b]);
            }
        }
    }

    #[test]
    fn budget_follows_workload_share() {
        assert_eq!(allocate_bin_budget(&[3, 1], 100).unwrap(), vec![75, 25]);
    }

    #[test]
    fn budget_residue_goes_to_the_smaller_group_id_on_ties() {
        assert_eq!(allocate_bin_budget(&[1, 1, 1], 100).unwrap(), vec![34, 33, 33]);
    }

    #[test]
    fn budget_even_split_without_workload() {
        assert_eq!(allocate_bin_budget(&[0, 0], 10).unwrap(), vec![5, 5]);
        assert_eq!(allocate_bin_budget(&[0, 0, 0], 10).unwrap(), vec![4, 3, 3]);
    }

    #[test]
    fn budget_never_starves_a_group() {
        let alloc = allocate_bin_budget(&[1000, 1, 1], 6).unwrap();
        assert!(alloc.iter().all(|&k| k >= 1));
        assert!(alloc.iter().sum::<usize>() <= 6);
        assert!(allocate_bin_budget(&[1, 1, 1], 2).is_err());
    }

    #[test]
    fn budget_overshoot_is_trimmed() {
        // round(1.5) twice overshoots a budget of 3.
        let alloc = allocate_bin_budget(&[1, 1], 3).unwrap();
        assert_eq!(alloc.iter().sum::<usize>(), 3);
        assert_eq!(alloc, vec![2, 1]);
    }

    #[test]
    fn build_binmap_covers_the_union_domain() {
        let s1 = store_of(&[(1, 5), (2, 5)]);
        let s2 = store_of(&[(2, 1), (50, 9)]);
        for strategy in [Strategy::Gbsa, Strategy::EqualWidth, Strategy::EqualDepth, Strategy::Single] {
            let map = build_binmap(0, strategy, 4, &[&s1, &s2]).unwrap();
            for v in [1, 2, 50] {
                assert!(map.bin_of(v).is_some(), "{strategy} missing {v}");
            }
            assert!(map.num_bins() <= 4);
        }
    }
}
