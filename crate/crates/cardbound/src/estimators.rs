//! Single-table estimators. Each one answers the same question — "how many
//! filtered rows of this table fall into each join-key bin (pair)?" — with a
//! different cost/accuracy trade: an exact scan, a scaled random sample, or a
//! fitted tree model (see [`crate::chowliu`]).

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::binning::{BinMap, BinSummary};
use crate::catalog::{ColumnData, LoadedTable, TableDef};
use crate::predicate::BoundPredicate;
use crate::{Error, Result};

/// Which estimator backs a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    TrueScan,
    Sample,
    ChowLiu,
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EstimatorKind::TrueScan => "truescan",
            EstimatorKind::Sample => "sample",
            EstimatorKind::ChowLiu => "chowliu",
        };
        f.write_str(s)
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "truescan" => Ok(EstimatorKind::TrueScan),
            "sample" => Ok(EstimatorKind::Sample),
            "chowliu" => Ok(EstimatorKind::ChowLiu),
            other => Err(Error::Query(format!(
                "unknown estimator `{other}` (expected truescan, sample, or chowliu)"
            ))),
        }
    }
}

/// One join key of the table being estimated: usually a single column, but a
/// within-table equality (`x.a = x.b`) makes several columns carry one key.
#[derive(Debug, Clone)]
pub struct VarKey<'a> {
    /// Column indices within the table, all equated.
    pub columns: Vec<usize>,
    pub binmap: &'a BinMap,
}

/// A row's value for a [`VarKey`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum KeyValue {
    Value(i64),
    Null,
    /// Columns of a multi-column key disagree (or are partly null): the row
    /// can never satisfy the equality, so it vanishes from the distribution.
    Excluded,
}

fn key_value(table: &LoadedTable, key: &VarKey<'_>, row: usize) -> Result<KeyValue> {
    let mut seen: Option<i64> = None;
    let mut nulls = 0usize;
    for &ci in &key.columns {
        let v = match &table.columns[ci] {
            ColumnData::Int(vals) => vals[row],
            ColumnData::DictKey { codes, .. } => codes[row],
            _ => {
                return Err(Error::Estimate(
                    "join key column is not integer-valued".into(),
                ))
            }
        };
        match v {
            None => nulls += 1,
            Some(v) => match seen {
                None => seen = Some(v),
                Some(prev) if prev == v => {}
                Some(_) => return Ok(KeyValue::Excluded),
            },
        }
    }
    match (seen, nulls) {
        (Some(v), 0) => Ok(KeyValue::Value(v)),
        (None, _) => Ok(KeyValue::Null),
        (Some(_), _) => Ok(KeyValue::Excluded),
    }
}

/// Per-bin mass of filtered rows over one or two join keys of one table.
///
/// `mass` is row-major over `dims` and covers real bins only; rows with a
/// null (or excluded) key value appear in `filtered_total` but not in `mass`.
/// `mfv` carries the per-bin most-frequent-value counts of each key, taken
/// from the trained summaries (not recomputed under the filter).
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalBinDistribution {
    pub dims: Vec<usize>,
    pub mass: Vec<f64>,
    pub mfv: Vec<Vec<u64>>,
    pub filtered_total: f64,
}

impl ConditionalBinDistribution {
    pub fn zeros(dims: Vec<usize>, mfv: Vec<Vec<u64>>) -> Self {
        let n = dims.iter().product::<usize>().max(1);
        ConditionalBinDistribution { dims, mass: vec![0.0; n], mfv, filtered_total: 0.0 }
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }
}

/// Per-bin caps for a key: the element-wise minimum over the key's columns'
/// summaries (a multi-column key is at most as frequent as its rarest column).
pub fn key_mfv(summaries: &[&BinSummary], num_bins: usize) -> Vec<u64> {
    let mut out = vec![0u64; num_bins];
    for (b, slot) in out.iter_mut().enumerate() {
        *slot = summaries
            .iter()
            .map(|s| s.mfv.get(b).copied().unwrap_or(0))
            .min()
            .unwrap_or(0);
    }
    out
}

fn scan_distribution(
    table: &LoadedTable,
    predicate: Option<&BoundPredicate>,
    keys: &[VarKey<'_>],
    mfv: Vec<Vec<u64>>,
    scale: f64,
) -> Result<ConditionalBinDistribution> {
    if keys.is_empty() || keys.len() > 2 {
        return Err(Error::Estimate(format!(
            "a bin distribution covers 1 or 2 keys, not {}",
            keys.len()
        )));
    }
    let dims: Vec<usize> = keys.iter().map(|k| k.binmap.num_bins() as usize).collect();
    let mut out = ConditionalBinDistribution::zeros(dims.clone(), mfv);
    'rows: for row in 0..table.rows {
        if let Some(p) = predicate {
            if !p.eval(table, row) {
                continue;
            }
        }
        out.filtered_total += scale;
        let mut idx = 0usize;
        for (k, key) in keys.iter().enumerate() {
            match key_value(table, key, row)? {
                KeyValue::Value(v) => {
                    let bin = key
                        .binmap
                        .bin_of(v)
                        .unwrap_or_else(|| key.binmap.nearest_bin(v));
                    idx = idx * dims[k] + bin as usize;
                }
                KeyValue::Null => continue 'rows,
                KeyValue::Excluded => {
                    out.filtered_total -= scale;
                    continue 'rows;
                }
            }
        }
        out.mass[idx] += scale;
    }
    Ok(out)
}

/// Exact distribution by scanning and filtering the full table at query time.
pub fn truescan_distribution(
    table: &LoadedTable,
    predicate: Option<&BoundPredicate>,
    keys: &[VarKey<'_>],
    mfv: Vec<Vec<u64>>,
) -> Result<ConditionalBinDistribution> {
    scan_distribution(table, predicate, keys, mfv, 1.0)
}

/// A materialized without-replacement row sample.
#[derive(Debug, Clone)]
pub struct Sample {
    pub table: String,
    pub rate: f64,
    pub seed: u64,
    pub rows: LoadedTable,
}

/// Draw `round(rate · n)` rows without replacement, deterministically for a
/// given seed. Kept rows stay in original order, so `rate = 1.0` reproduces
/// the table itself.
pub fn build_sample(table: &LoadedTable, def: &TableDef, rate: f64, seed: u64) -> Result<Sample> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::Estimate(format!(
            "sampling rate {rate} out of range (0, 1]"
        )));
    }
    let n = table.rows;
    let want = ((rate * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut keep: Vec<usize> = order.into_iter().take(want).collect();
    keep.sort_unstable();
    Ok(Sample {
        table: def.name.clone(),
        rate,
        seed,
        rows: take_rows(table, &keep),
    })
}

/// Copy the given rows (ascending indices) into a new table.
pub fn take_rows(table: &LoadedTable, rows: &[usize]) -> LoadedTable {
    let columns = table
        .columns
        .iter()
        .map(|col| match col {
            ColumnData::Int(v) => ColumnData::Int(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Float(v) => ColumnData::Float(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Text(v) => {
                ColumnData::Text(rows.iter().map(|&r| v[r].clone()).collect())
            }
            ColumnData::DictKey { codes, dict } => ColumnData::DictKey {
                codes: rows.iter().map(|&r| codes[r]).collect(),
                dict: dict.clone(),
            },
        })
        .collect();
    LoadedTable { name: table.name.clone(), columns, rows: rows.len() }
}

/// Scan the sample and scale counts by 1/rate.
pub fn sample_distribution(
    sample: &Sample,
    predicate: Option<&BoundPredicate>,
    keys: &[VarKey<'_>],
    mfv: Vec<Vec<u64>>,
) -> Result<ConditionalBinDistribution> {
    scan_distribution(&sample.rows, predicate, keys, mfv, 1.0 / sample.rate)
}
