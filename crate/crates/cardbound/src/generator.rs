//! Seeded synthetic database generator: per-column value distributions with
//! controllable key skew, null rates, and filter/key correlation. Output is
//! a schema descriptor plus CSVs that the catalog ingests directly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::load_schema_str;
use crate::{Error, Result};

/// Declarative description of a synthetic database.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub tables: Vec<TableSpec>,
    /// Join relations in `T.col = S.col` form, copied into the descriptor.
    #[serde(default)]
    pub joins: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableSpec {
    pub name: String,
    pub rows: u64,
    pub columns: Vec<ColumnSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(flatten)]
    pub gen: ColumnGen,
}

/// How one column's values are drawn. Key-valued generators become
/// `integer-key` columns in the descriptor.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "gen", rename_all = "snake_case")]
pub enum ColumnGen {
    /// Row number, starting at 1: a unique primary key.
    Serial,
    /// Key values `1..=domain` with frequency ∝ rank^(−s); rank 1 is the
    /// most frequent. `s = 0` degenerates to uniform.
    Zipf {
        domain: u64,
        s: f64,
        #[serde(default)]
        null_rate: f64,
    },
    /// Key drawn uniformly from `1..=domain`.
    UniformKey {
        domain: u64,
        #[serde(default)]
        null_rate: f64,
    },
    /// Plain integer attribute, uniform in `lo..=hi`.
    Uniform { lo: i64, hi: i64 },
    /// Label `c0..c{values-1}`. With probability `strength` the label is a
    /// fixed function of the named (earlier, integer-valued) column's value
    /// in the same row; otherwise it is drawn uniformly. Lets filters on
    /// this column select correlated slices of a join key.
    Categorical {
        values: u32,
        #[serde(default)]
        correlate_with: Option<String>,
        #[serde(default)]
        strength: f64,
    },
    /// Label `t0..t{distinct-1}`, uniform.
    Text { distinct: u32 },
}

impl ColumnGen {
    fn kind(&self) -> &'static str {
        match self {
            ColumnGen::Serial | ColumnGen::Zipf { .. } | ColumnGen::UniformKey { .. } => {
                "integer-key"
            }
            ColumnGen::Uniform { .. } => "integer",
            ColumnGen::Categorical { .. } => "categorical",
            ColumnGen::Text { .. } => "text",
        }
    }
}

/// A generated database: descriptor JSON plus one CSV per table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedDb {
    pub schema: String,
    pub csvs: BTreeMap<String, String>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Generator(msg.into())
}

fn check_rate(what: &str, col: &str, rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(bad(format!("column `{col}`: {what} {rate} is outside [0, 1]")));
    }
    Ok(())
}

fn validate(spec: &SyntheticSpec) -> Result<()> {
    for t in &spec.tables {
        for (ci, c) in t.columns.iter().enumerate() {
            let name = format!("{}.{}", t.name, c.name);
            match &c.gen {
                ColumnGen::Serial => {}
                ColumnGen::Zipf { domain, s, null_rate } => {
                    if *domain == 0 {
                        return Err(bad(format!("column `{name}`: empty key domain")));
                    }
                    if *s < 0.0 || !s.is_finite() {
                        return Err(bad(format!("column `{name}`: skew exponent {s} < 0")));
                    }
                    check_rate("null rate", &name, *null_rate)?;
                }
                ColumnGen::UniformKey { domain, null_rate } => {
                    if *domain == 0 {
                        return Err(bad(format!("column `{name}`: empty key domain")));
                    }
                    check_rate("null rate", &name, *null_rate)?;
                }
                ColumnGen::Uniform { lo, hi } => {
                    if lo > hi {
                        return Err(bad(format!("column `{name}`: range {lo}..={hi} is empty")));
                    }
                }
                ColumnGen::Categorical { values, correlate_with, strength } => {
                    if *values == 0 {
                        return Err(bad(format!("column `{name}`: no category values")));
                    }
                    check_rate("correlation strength", &name, *strength)?;
                    if let Some(target) = correlate_with {
                        let ok = t.columns[..ci].iter().any(|p| {
                            p.name == *target
                                && matches!(
                                    p.gen,
                                    ColumnGen::Serial
                                        | ColumnGen::Zipf { .. }
                                        | ColumnGen::UniformKey { .. }
                                        | ColumnGen::Uniform { .. }
                                )
                        });
                        if !ok {
                            return Err(bad(format!(
                                "column `{name}`: correlation target `{target}` is not an \
                                 earlier integer column of table `{}`",
                                t.name
                            )));
                        }
                    }
                }
                ColumnGen::Text { distinct } => {
                    if *distinct == 0 {
                        return Err(bad(format!("column `{name}`: no distinct labels")));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Inverse-CDF sampler over ranks `1..=domain` with weight rank^(−s).
struct ZipfSampler {
    cum: Vec<f64>,
}

impl ZipfSampler {
    fn new(domain: u64, s: f64) -> ZipfSampler {
        let mut cum = Vec::with_capacity(domain as usize);
        let mut acc = 0.0;
        for rank in 1..=domain {
            acc += (rank as f64).powf(-s);
            cum.push(acc);
        }
        ZipfSampler { cum }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> i64 {
        let total = *self.cum.last().expect("non-empty domain");
        let u = rng.gen::<f64>() * total;
        let idx = match self
            .cum
            .binary_search_by(|x| x.partial_cmp(&u).expect("finite weights"))
        {
            Ok(i) => i + 1,
            Err(i) => i,
        };
        idx.min(self.cum.len() - 1) as i64 + 1
    }
}

/// Fixed category assignment for a key value; spreads nearby keys across
/// categories so correlation is not an artifact of value order.
fn category_of(key: i64, values: u32) -> u32 {
    let h = (key as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) >> 32;
    (h % u64::from(values)) as u32
}

enum Cells {
    Int(Vec<Option<i64>>),
    Label(Vec<String>),
}

/// Materialize a database. Deterministic: one seed, one independent stream
/// per (table, column) pair, so output is byte-stable under re-runs and
/// unaffected edits elsewhere in the spec.
pub fn generate_db(spec: &SyntheticSpec) -> Result<GeneratedDb> {
    validate(spec)?;
    let mut csvs = BTreeMap::new();
    for (ti, t) in spec.tables.iter().enumerate() {
        let rows = t.rows as usize;
        let mut cells: Vec<Cells> = Vec::with_capacity(t.columns.len());
        for (ci, c) in t.columns.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(((ti as u64) << 32) | ci as u64);
            let col = match &c.gen {
                ColumnGen::Serial => {
                    Cells::Int((1..=rows as i64).map(Some).collect())
                }
                ColumnGen::Zipf { domain, s, null_rate } => {
                    let sampler = ZipfSampler::new(*domain, *s);
                    Cells::Int(
                        (0..rows)
                            .map(|_| {
                                // One uniform draw per row regardless of the
                                // null branch keeps streams aligned.
                                let is_null = rng.gen::<f64>() < *null_rate;
                                let v = sampler.sample(&mut rng);
                                (!is_null).then_some(v)
                            })
                            .collect(),
                    )
                }
                ColumnGen::UniformKey { domain, null_rate } => Cells::Int(
                    (0..rows)
                        .map(|_| {
                            let is_null = rng.gen::<f64>() < *null_rate;
                            let v = rng.gen_range(1..=*domain as i64);
                            (!is_null).then_some(v)
                        })
                        .collect(),
                ),
                ColumnGen::Uniform { lo, hi } => {
                    Cells::Int((0..rows).map(|_| Some(rng.gen_range(*lo..=*hi))).collect())
                }
                ColumnGen::Categorical { values, correlate_with, strength } => {
                    let source: Option<&Vec<Option<i64>>> = correlate_with.as_ref().map(|nm| {
                        let idx = t.columns[..ci]
                            .iter()
                            .position(|p| p.name == *nm)
                            .expect("validated target");
                        match &cells[idx] {
                            Cells::Int(v) => v,
                            Cells::Label(_) => unreachable!("validated integer target"),
                        }
                    });
                    Cells::Label(
                        (0..rows)
                            .map(|row| {
                                let correlated = rng.gen::<f64>() < *strength;
                                let uniform = rng.gen_range(0..*values);
                                let cat = match source.and_then(|v| v[row]) {
                                    Some(key) if correlated => category_of(key, *values),
                                    _ => uniform,
                                };
                                format!("c{cat}")
                            })
                            .collect(),
                    )
                }
                ColumnGen::Text { distinct } => Cells::Label(
                    (0..rows)
                        .map(|_| format!("t{}", rng.gen_range(0..*distinct)))
                        .collect(),
                ),
            };
            cells.push(col);
        }

        let mut csv = String::new();
        let names: Vec<&str> = t.columns.iter().map(|c| c.name.as_str()).collect();
        csv.push_str(&names.join(","));
        csv.push('\n');
        for row in 0..rows {
            for (ci, col) in cells.iter().enumerate() {
                if ci > 0 {
                    csv.push(',');
                }
                match col {
                    Cells::Int(v) => match v[row] {
                        Some(x) => {
                            let _ = write!(csv, "{x}");
                        }
                        None => csv.push_str("\"\""),
                    },
                    Cells::Label(v) => csv.push_str(&v[row]),
                }
            }
            csv.push('\n');
        }
        csvs.insert(t.name.clone(), csv);
    }

    let descriptor = serde_json::json!({
        "tables": spec.tables.iter().map(|t| serde_json::json!({
            "name": t.name,
            "columns": t.columns.iter().map(|c| serde_json::json!({
                "name": c.name,
                "kind": c.gen.kind(),
            })).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
        "joins": spec.joins,
    });
    let schema = serde_json::to_string_pretty(&descriptor).expect("plain JSON");
    // The descriptor must itself be loadable, which also validates the join
    // relations against the generated columns.
    load_schema_str(&schema).map_err(|e| bad(format!("generated descriptor invalid: {e}")))?;
    Ok(GeneratedDb { schema, csvs })
}

/// Write `schema.json` plus `<table>.csv` files, the layout the ingest
/// directory loader expects.
pub fn write_db(db: &GeneratedDb, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("schema.json"), &db.schema)?;
    for (name, csv) in &db.csvs {
        std::fs::write(dir.join(format!("{name}.csv")), csv)?;
    }
    Ok(())
}
