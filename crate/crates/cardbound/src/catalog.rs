//! Schema catalog: table/column definitions, join-key equivalence groups,
//! CSV ingest, and exact per-key value-count stores.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// What a column holds. Join keys must be `integer-key`; the other kinds
/// exist for filter predicates and synthetic workloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    #[serde(rename = "integer-key")]
    IntegerKey,
    #[serde(rename = "integer")]
    Integer,
    #[serde(rename = "float")]
    Float,
    #[serde(rename = "categorical")]
    Categorical,
    #[serde(rename = "text")]
    Text,
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ColumnKind::IntegerKey => "integer-key",
            ColumnKind::Integer => "integer",
            ColumnKind::Float => "float",
            ColumnKind::Categorical => "categorical",
            ColumnKind::Text => "text",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<ColumnDef>,
}

impl TableDef {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }
}

/// On-disk schema descriptor: tables plus join relations written as
/// `"Table.column=Table.column"` strings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaDescriptor {
    pub tables: Vec<TableDef>,
    #[serde(default)]
    pub joins: Vec<String>,
}

/// A join-key column identified by `(table index, column index)` within a
/// [`Catalog`].
pub type KeyId = (usize, usize);

/// One equivalence group of join keys: every member can appear on either
/// side of an equi-join with any other member. Groups are the connected
/// components of the join relation graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyGroup {
    pub id: usize,
    /// Member keys, sorted by `(table name, column name)`.
    pub members: Vec<KeyId>,
}

/// Validated schema: tables, declared join relations, and the join-key
/// groups derived from them. Group ids are assigned in ascending order of
/// each group's lexicographically smallest member, so they do not depend on
/// the order join relations were written in.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Catalog {
    pub tables: Vec<TableDef>,
    /// Declared join relations as key pairs (smaller key first).
    pub joins: Vec<(KeyId, KeyId)>,
    pub groups: Vec<KeyGroup>,
}

impl Catalog {
    pub fn table_index(&self, name: &str) -> Option<usize> {
        self.tables.iter().position(|t| t.name == name)
    }

    pub fn key_name(&self, key: KeyId) -> String {
        let (t, c) = key;
        format!("{}.{}", self.tables[t].name, self.tables[t].columns[c].name)
    }

    /// The group a join-key column belongs to, if any.
    pub fn group_of(&self, key: KeyId) -> Option<usize> {
        self.groups
            .iter()
            .find(|g| g.members.contains(&key))
            .map(|g| g.id)
    }

    /// All join-key columns of one table that belong to some group.
    pub fn keys_of_table(&self, table: usize) -> Vec<KeyId> {
        let mut out: Vec<KeyId> = self
            .groups
            .iter()
            .flat_map(|g| g.members.iter().copied())
            .filter(|&(t, _)| t == table)
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

fn parse_join_side(cat: &Catalog, side: &str, whole: &str) -> Result<KeyId> {
    let mut it = side.splitn(2, '.');
    let (t, c) = match (it.next(), it.next()) {
        (Some(t), Some(c)) => (t.trim(), c.trim()),
        _ => {
            return Err(Error::Schema(format!(
                "join relation `{whole}` must use Table.column on both sides"
            )))
        }
    };
    let ti = cat
        .table_index(t)
        .ok_or_else(|| Error::Schema(format!("join relation `{whole}`: unknown table `{t}`")))?;
    let ci = cat.tables[ti]
        .column_index(c)
        .ok_or_else(|| Error::Schema(format!("join relation `{whole}`: unknown column `{t}.{c}`")))?;
    if cat.tables[ti].columns[ci].kind != ColumnKind::IntegerKey {
        return Err(Error::Schema(format!(
            "join relation `{whole}`: column `{t}.{c}` has kind {}, join keys must be integer-key",
            cat.tables[ti].columns[ci].kind
        )));
    }
    Ok((ti, ci))
}

/// Build a validated [`Catalog`] from a schema descriptor.
pub fn load_schema(desc: &SchemaDescriptor) -> Result<Catalog> {
    let mut seen = std::collections::HashSet::new();
    for t in &desc.tables {
        if t.name.is_empty() {
            return Err(Error::Schema("empty table name".into()));
        }
        if !seen.insert(t.name.clone()) {
            return Err(Error::Schema(format!("duplicate table name `{}`", t.name)));
        }
        let mut cols = std::collections::HashSet::new();
        for c in &t.columns {
            if !cols.insert(c.name.clone()) {
                return Err(Error::Schema(format!(
                    "duplicate column `{}` in table `{}`",
                    c.name, t.name
                )));
            }
        }
    }

    let mut cat = Catalog {
        tables: desc.tables.clone(),
        joins: Vec::new(),
        groups: Vec::new(),
    };

    for j in &desc.joins {
        let mut sides = j.splitn(2, '=');
        let (l, r) = match (sides.next(), sides.next()) {
            (Some(l), Some(r)) => (l.trim(), r.trim()),
            _ => {
                return Err(Error::Schema(format!(
                    "join relation `{j}` must have the form A.x=B.y"
                )))
            }
        };
        let lk = parse_join_side(&cat, l, j)?;
        let rk = parse_join_side(&cat, r, j)?;
        if lk == rk {
            return Err(Error::Schema(format!(
                "join relation `{j}` relates a column to itself"
            )));
        }
        let pair = if lk <= rk { (lk, rk) } else { (rk, lk) };
        if !cat.joins.contains(&pair) {
            cat.joins.push(pair);
        }
    }
    cat.joins.sort();

    // Connected components over the declared relations, with ids ordered by
    // each component's smallest member name.
    let mut parent: HashMap<KeyId, KeyId> = HashMap::new();
    fn find(parent: &mut HashMap<KeyId, KeyId>, k: KeyId) -> KeyId {
        let p = *parent.entry(k).or_insert(k);
        if p == k {
            return k;
        }
        let root = find(parent, p);
        parent.insert(k, root);
        root
    }
    for &(a, b) in &cat.joins {
        let ra = find(&mut parent, a);
        let rb = find(&mut parent, b);
        if ra != rb {
            parent.insert(ra, rb);
        }
    }
    let mut components: BTreeMap<KeyId, Vec<KeyId>> = BTreeMap::new();
    let keys: Vec<KeyId> = parent.keys().copied().collect();
    for k in keys {
        let r = find(&mut parent, k);
        components.entry(r).or_default().push(k);
    }
    let mut groups: Vec<Vec<KeyId>> = components.into_values().collect();
    for g in &mut groups {
        g.sort_by_key(|&k| (cat.tables[k.0].name.clone(), cat.tables[k.0].columns[k.1].name.clone()));
    }
    groups.sort_by_key(|g| {
        let k = g[0];
        (cat.tables[k.0].name.clone(), cat.tables[k.0].columns[k.1].name.clone())
    });
    cat.groups = groups
        .into_iter()
        .enumerate()
        .map(|(id, members)| KeyGroup { id, members })
        .collect();
    Ok(cat)
}

pub fn load_schema_str(json: &str) -> Result<Catalog> {
    let desc: SchemaDescriptor =
        serde_json::from_str(json).map_err(|e| Error::Schema(format!("bad descriptor: {e}")))?;
    load_schema(&desc)
}

pub fn load_schema_path(path: &Path) -> Result<Catalog> {
    let text = std::fs::read_to_string(path)?;
    load_schema_str(&text)
}

/// Canonical `i64` code for a key cell: numeric text is its own value,
/// anything else gets a stable 64-bit content hash (FNV-1a). Content-based
/// codes make equal strings land on equal codes in every column of every
/// table, which keying joins and shared bin maps on codes requires.
pub fn key_code(text: &str) -> i64 {
    match text.parse::<i64>() {
        Ok(v) => v,
        Err(_) => {
            let mut h: u64 = 0xcbf2_9ce4_8422_2325;
            for b in text.as_bytes() {
                h ^= u64::from(*b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
            h as i64
        }
    }
}

/// One ingested column. Join keys are canonicalized to `i64`: numeric text
/// is parsed directly, anything else is coded by [`key_code`]; the
/// dictionary records the observed strings in first-seen order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnData {
    Int(Vec<Option<i64>>),
    Float(Vec<Option<f64>>),
    Text(Vec<Option<String>>),
    /// Dictionary-encoded key column: codes plus the first-seen dictionary.
    DictKey {
        codes: Vec<Option<i64>>,
        dict: Vec<String>,
    },
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Int(v) => v.len(),
            ColumnData::Float(v) => v.len(),
            ColumnData::Text(v) => v.len(),
            ColumnData::DictKey { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Canonical integer view of a key column cell (`None` for null).
    /// Only meaningful for `Int` and `DictKey` columns.
    pub fn key_value(&self, row: usize) -> Option<i64> {
        match self {
            ColumnData::Int(v) => v[row],
            ColumnData::DictKey { codes, .. } => codes[row],
            _ => None,
        }
    }
}

/// A fully loaded table: column-major cells in schema column order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadedTable {
    pub name: String,
    pub columns: Vec<ColumnData>,
    pub rows: usize,
}

impl LoadedTable {
    pub fn column(&self, idx: usize) -> &ColumnData {
        &self.columns[idx]
    }
}

/// Read one table from RFC-4180 CSV with a header row. The header must
/// contain exactly the declared column names (any order); empty cells are
/// nulls.
pub fn ingest_table(def: &TableDef, reader: impl Read) -> Result<LoadedTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);

    let headers = rdr
        .headers()
        .map_err(|e| Error::Ingest(format!("table `{}`: {e}", def.name)))?
        .clone();
    let mut col_for_field: Vec<usize> = Vec::with_capacity(headers.len());
    let mut seen = vec![false; def.columns.len()];
    for h in headers.iter() {
        let idx = def.column_index(h).ok_or_else(|| {
            Error::Ingest(format!("table `{}`: unknown column `{h}` in CSV header", def.name))
        })?;
        if seen[idx] {
            return Err(Error::Ingest(format!(
                "table `{}`: column `{h}` appears twice in CSV header",
                def.name
            )));
        }
        seen[idx] = true;
        col_for_field.push(idx);
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Ingest(format!(
            "table `{}`: CSV header is missing column `{}`",
            def.name, def.columns[missing].name
        )));
    }

    // Key columns start as integers and fall back to dictionary encoding on
    // the first non-numeric cell; everything read so far is re-encoded so
    // the choice looks like it was made up front.
    enum KeyMode {
        Numeric(Vec<Option<i64>>),
        Dict {
            codes: Vec<Option<i64>>,
            dict: Vec<String>,
            seen: HashMap<String, i64>,
        },
    }
    enum Builder {
        Key(KeyMode, Vec<Option<String>>),
        Int(Vec<Option<i64>>),
        Float(Vec<Option<f64>>),
        Text(Vec<Option<String>>),
    }
    let mut builders: Vec<Builder> = def
        .columns
        .iter()
        .map(|c| match c.kind {
            ColumnKind::IntegerKey => Builder::Key(KeyMode::Numeric(Vec::new()), Vec::new()),
            ColumnKind::Integer => Builder::Int(Vec::new()),
            ColumnKind::Float => Builder::Float(Vec::new()),
            ColumnKind::Categorical | ColumnKind::Text => Builder::Text(Vec::new()),
        })
        .collect();

    let mut rows = 0usize;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Ingest(format!("table `{}`: {e}", def.name)))?;
        if rec.len() != col_for_field.len() {
            return Err(Error::Ingest(format!(
                "table `{}` row {}: expected {} fields, got {}",
                def.name,
                line + 2,
                col_for_field.len(),
                rec.len()
            )));
        }
        for (field, raw) in rec.iter().enumerate() {
            let col = col_for_field[field];
            let cell = if raw.is_empty() { None } else { Some(raw) };
            match &mut builders[col] {
                Builder::Key(mode, raws) => {
                    raws.push(cell.map(str::to_owned));
                    match mode {
                        KeyMode::Numeric(vals) => match cell {
                            None => vals.push(None),
                            Some(s) => match s.parse::<i64>() {
                                Ok(v) => vals.push(Some(v)),
                                Err(_) => {
                                    // Switch this column to dictionary codes.
                                    let mut dict: Vec<String> = Vec::new();
                                    let mut seen: HashMap<String, i64> = HashMap::new();
                                    let mut codes: Vec<Option<i64>> = Vec::new();
                                    for prev in raws.iter() {
                                        match prev {
                                            None => codes.push(None),
                                            Some(p) => {
                                                let code =
                                                    *seen.entry(p.clone()).or_insert_with(|| {
                                                        dict.push(p.clone());
                                                        key_code(p)
                                                    });
                                                codes.push(Some(code));
                                            }
                                        }
                                    }
                                    *mode = KeyMode::Dict { codes, dict, seen };
                                }
                            },
                        },
                        KeyMode::Dict { codes, dict, seen } => match cell {
                            None => codes.push(None),
                            Some(s) => {
                                let code = *seen.entry(s.to_owned()).or_insert_with(|| {
                                    dict.push(s.to_owned());
                                    key_code(s)
                                });
                                codes.push(Some(code));
                            }
                        },
                    }
                }
                Builder::Int(vals) => match cell {
                    None => vals.push(None),
                    Some(s) => vals.push(Some(s.parse::<i64>().map_err(|_| {
                        Error::Ingest(format!(
                            "table `{}` row {}: `{s}` is not an integer (column `{}`)",
                            def.name,
                            line + 2,
                            def.columns[col].name
                        ))
                    })?)),
                },
                Builder::Float(vals) => match cell {
                    None => vals.push(None),
                    Some(s) => vals.push(Some(s.parse::<f64>().map_err(|_| {
                        Error::Ingest(format!(
                            "table `{}` row {}: `{s}` is not a number (column `{}`)",
                            def.name,
                            line + 2,
                            def.columns[col].name
                        ))
                    })?)),
                },
                Builder::Text(vals) => vals.push(cell.map(str::to_owned)),
            }
        }
        rows += 1;
    }

    let columns = builders
        .into_iter()
        .map(|b| match b {
            Builder::Key(KeyMode::Numeric(vals), _) => ColumnData::Int(vals),
            Builder::Key(KeyMode::Dict { codes, dict, .. }, _) => ColumnData::DictKey { codes, dict },
            Builder::Int(vals) => ColumnData::Int(vals),
            Builder::Float(vals) => ColumnData::Float(vals),
            Builder::Text(vals) => ColumnData::Text(vals),
        })
        .collect();

    Ok(LoadedTable { name: def.name.clone(), columns, rows })
}

/// Ingest every table of the catalog from `dir/<table>.csv`.
pub fn ingest_dir(cat: &Catalog, dir: &Path) -> Result<Vec<LoadedTable>> {
    let mut out = Vec::with_capacity(cat.tables.len());
    for t in &cat.tables {
        let path = dir.join(format!("{}.csv", t.name));
        let file = std::fs::File::open(&path).map_err(|e| {
            Error::Ingest(format!("table `{}`: cannot open {}: {e}", t.name, path.display()))
        })?;
        out.push(ingest_table(t, file)?);
    }
    Ok(out)
}

/// Exact value counts of one join-key column. Nulls are counted separately
/// and never participate in joins.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueCountStore {
    pub counts: BTreeMap<i64, u64>,
    pub nulls: u64,
}

impl ValueCountStore {
    pub fn from_column(col: &ColumnData) -> ValueCountStore {
        let mut store = ValueCountStore::default();
        for row in 0..col.len() {
            match col.key_value(row) {
                Some(v) => *store.counts.entry(v).or_insert(0) += 1,
                None => store.nulls += 1,
            }
        }
        store
    }

    /// Number of distinct non-null values.
    pub fn ndv(&self) -> u64 {
        self.counts.len() as u64
    }

    /// Number of non-null rows.
    pub fn non_null(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn insert_value(&mut self, v: i64) {
        *self.counts.entry(v).or_insert(0) += 1;
    }

    /// Remove one occurrence of `v`. Errors if the store has none.
    pub fn delete_value(&mut self, v: i64) -> Result<()> {
        match self.counts.get_mut(&v) {
            Some(c) if *c > 1 => {
                *c -= 1;
                Ok(())
            }
            Some(_) => {
                self.counts.remove(&v);
                Ok(())
            }
            None => Err(Error::Ingest(format!(
                "delete of value {v} not present in store"
            ))),
        }
    }
}

/// Per-input row count and conjunctive filter selectivity for the
/// independence baseline.
#[derive(Debug, Clone, Copy)]
pub struct SelingerInput {
    pub rows: u64,
    pub selectivity: f64,
}

/// Textbook independence estimate for a pairwise-composed equi-join:
/// the product of filtered input sizes divided, per join, by the larger
/// distinct-value count of the two sides.
pub fn selinger_estimate(inputs: &[SelingerInput], join_ndvs: &[(u64, u64)]) -> f64 {
    let mut est = 1.0f64;
    for i in inputs {
        est *= i.rows as f64 * i.selectivity;
    }
    for &(l, r) in join_ndvs {
        let d = l.max(r).max(1);
        est /= d as f64;
    }
    est
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_table_schema() -> &'static str {
        r#"{
            "tables": [
                {"name": "A", "columns": [
                    {"name": "id", "kind": "integer-key"},
                    {"name": "attr", "kind": "categorical"}
                ]},
                {"name": "B", "columns": [
                    {"name": "Aid", "kind": "integer-key"},
                    {"name": "x", "kind": "integer"}
                ]},
                {"name": "C", "columns": [
                    {"name": "Aid", "kind": "integer-key"}
                ]}
            ],
            "joins": ["A.id=B.Aid", "B.Aid=C.Aid"]
        }"#
    }

    #[test]
    fn chained_relations_form_one_group() {
        let cat = load_schema_str(two_table_schema()).unwrap();
        assert_eq!(cat.groups.len(), 1);
        assert_eq!(cat.groups[0].members.len(), 3);
    }

    #[test]
    fn group_ids_do_not_depend_on_relation_order() {
        let a = load_schema_str(two_table_schema()).unwrap();
        let flipped = two_table_schema()
            .replace(r#""A.id=B.Aid", "B.Aid=C.Aid""#, r#""B.Aid=C.Aid", "A.id=B.Aid""#);
        let b = load_schema_str(&flipped).unwrap();
        assert_eq!(a.groups, b.groups);
    }

    #[test]
    fn disjoint_relations_form_separate_groups() {
        let cat = load_schema_str(
            r#"{
                "tables": [
                    {"name": "A", "columns": [
                        {"name": "id", "kind": "integer-key"},
                        {"name": "id2", "kind": "integer-key"}
                    ]},
                    {"name": "B", "columns": [
                        {"name": "Aid", "kind": "integer-key"},
                        {"name": "Aid2", "kind": "integer-key"}
                    ]}
                ],
                "joins": ["A.id=B.Aid", "A.id2=B.Aid2"]
            }"#,
        )
        .unwrap();
        assert_eq!(cat.groups.len(), 2);
        // Ordered by smallest member: (A, id) before (A, id2).
        assert_eq!(cat.groups[0].members[0], (0, 0));
        assert_eq!(cat.groups[1].members[0], (0, 1));
    }

    #[test]
    fn join_on_non_key_column_is_rejected() {
        let err = load_schema_str(
            r#"{
                "tables": [
                    {"name": "A", "columns": [{"name": "id", "kind": "integer"}]},
                    {"name": "B", "columns": [{"name": "Aid", "kind": "integer-key"}]}
                ],
                "joins": ["A.id=B.Aid"]
            }"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("integer-key"), "{err}");
    }

    #[test]
    fn join_on_unknown_column_is_rejected() {
        let err = load_schema_str(
            r#"{
                "tables": [{"name": "A", "columns": [{"name": "id", "kind": "integer-key"}]}],
                "joins": ["A.id=A.nope"]
            }"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("unknown column"), "{err}");
    }

    #[test]
    fn ingest_counts_and_nulls() {
        let def = TableDef {
            name: "T".into(),
            columns: vec![ColumnDef { name: "k".into(), kind: ColumnKind::IntegerKey }],
        };
        // A null in a single-column CSV needs explicit quotes; a bare blank
        // line is just a record separator.
        let csv = "k\n7\n7\n9\n\"\"\n";
        let t = ingest_table(&def, csv.as_bytes()).unwrap();
        assert_eq!(t.rows, 4);
        let store = ValueCountStore::from_column(t.column(0));
        assert_eq!(store.counts.get(&7), Some(&2));
        assert_eq!(store.counts.get(&9), Some(&1));
        assert_eq!(store.nulls, 1);
        assert_eq!(store.ndv(), 2);
        assert_eq!(store.non_null(), 3);
    }

    #[test]
    fn ingest_codes_text_keys_by_content() {
        let def = TableDef {
            name: "T".into(),
            columns: vec![ColumnDef { name: "k".into(), kind: ColumnKind::IntegerKey }],
        };
        let csv = "k\n5\nbeta\n5\nalpha\nbeta\n";
        let t = ingest_table(&def, csv.as_bytes()).unwrap();
        match t.column(0) {
            ColumnData::DictKey { codes, dict } => {
                assert_eq!(dict, &["5".to_string(), "beta".into(), "alpha".into()]);
                // Numeric text keeps its value; other text gets a content
                // hash, identical for equal strings wherever they appear.
                let (b, a) = (key_code("beta"), key_code("alpha"));
                assert_eq!(codes, &vec![Some(5), Some(b), Some(5), Some(a), Some(b)]);
                assert_ne!(b, a);
            }
            other => panic!("expected dictionary column, got {other:?}"),
        }
        // The same strings in a different column and order get the same
        // codes, so text keys join correctly across tables.
        let csv2 = "k\nalpha\nbeta\n";
        let t2 = ingest_table(&def, csv2.as_bytes()).unwrap();
        match t2.column(0) {
            ColumnData::DictKey { codes, .. } => {
                assert_eq!(codes, &vec![Some(key_code("alpha")), Some(key_code("beta"))]);
            }
            other => panic!("expected dictionary column, got {other:?}"),
        }
    }

    #[test]
    fn ingest_rejects_bad_cells_and_headers() {
        let def = TableDef {
            name: "T".into(),
            columns: vec![
                ColumnDef { name: "k".into(), kind: ColumnKind::IntegerKey },
                ColumnDef { name: "x".into(), kind: ColumnKind::Integer },
            ],
        };
        let err = ingest_table(&def, "k,x\n1,notanumber\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("not an integer"), "{err}");

        let err = ingest_table(&def, "k,y\n1,2\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("unknown column"), "{err}");

        let err = ingest_table(&def, "k\n1\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("missing column"), "{err}");
    }

    #[test]
    fn ingest_accepts_header_in_any_order() {
        let def = TableDef {
            name: "T".into(),
            columns: vec![
                ColumnDef { name: "k".into(), kind: ColumnKind::IntegerKey },
                ColumnDef { name: "x".into(), kind: ColumnKind::Integer },
            ],
        };
        let t = ingest_table(&def, "x,k\n10,1\n20,2\n".as_bytes()).unwrap();
        assert_eq!(t.column(0), &ColumnData::Int(vec![Some(1), Some(2)]));
        assert_eq!(t.column(1), &ColumnData::Int(vec![Some(10), Some(20)]));
    }

    #[test]
    fn delete_below_zero_is_an_error() {
        let mut store = ValueCountStore::default();
        store.insert_value(3);
        store.delete_value(3).unwrap();
        assert!(store.delete_value(3).is_err());
    }

    #[test]
    fn independence_baseline_two_tables() {
        let est = selinger_estimate(
            &[
                SelingerInput { rows: 16, selectivity: 1.0 },
                SelingerInput { rows: 20, selectivity: 1.0 },
            ],
            &[(3, 5)],
        );
        assert_eq!(est, 64.0);
    }
}
