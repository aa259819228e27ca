//! Normalized query representation and the join graph derived from it.
//!
//! A query arrives either as COUNT(*) SQL text or as a JSON object with
//! `aliases`, `joins`, and `filters` fields. Both forms resolve to the same
//! [`QueryIR`], which stores aliases and filters in sorted maps and join
//! conditions as a sorted, deduplicated list, so that semantically equal
//! queries compare equal and print identically.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::catalog::{Catalog, ColumnKind};
use crate::parser::{self, RawCol, RawCond, RawPredicate};
use crate::predicate::Predicate;
use crate::{Error, Result};

/// One equi-join condition between two alias columns. Sides are stored in
/// sorted order so the same condition always compares equal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct JoinCond {
    pub left: (String, String),
    pub right: (String, String),
}

impl JoinCond {
    fn new(a: (String, String), b: (String, String)) -> Self {
        if a <= b {
            JoinCond { left: a, right: b }
        } else {
            JoinCond { left: b, right: a }
        }
    }

    pub fn sql(&self) -> String {
        format!(
            "{}.{} = {}.{}",
            self.left.0, self.left.1, self.right.0, self.right.1
        )
    }
}

/// A resolved, normalized COUNT(*) query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryIR {
    /// alias → base table name.
    pub aliases: BTreeMap<String, String>,
    /// Sorted, deduplicated join conditions.
    pub joins: Vec<JoinCond>,
    /// alias → filter predicate over that alias's table (columns unqualified).
    pub filters: BTreeMap<String, Predicate>,
}

impl QueryIR {
    /// Parse SQL text or a JSON query object (detected by a leading `{`).
    pub fn parse(catalog: &Catalog, text: &str) -> Result<QueryIR> {
        if text.trim_start().starts_with('{') {
            Self::from_json(catalog, text)
        } else {
            Self::from_sql(catalog, text)
        }
    }

    pub fn from_sql(catalog: &Catalog, text: &str) -> Result<QueryIR> {
        let raw = parser::parse_query_text(text)?;
        let mut aliases = BTreeMap::new();
        for (table, alias, line, col) in &raw.from {
            if catalog.table_index(table).is_none() {
                return Err(Error::Query(format!(
                    "line {line}, column {col}: unknown table `{table}`"
                )));
            }
            if aliases.insert(alias.clone(), table.clone()).is_some() {
                return Err(Error::Query(format!(
                    "line {line}, column {col}: duplicate alias `{alias}`"
                )));
            }
        }

        let mut joins = Vec::new();
        let mut filters: BTreeMap<String, Vec<Predicate>> = BTreeMap::new();
        for cond in &raw.conds {
            match cond {
                RawCond::Join { left, right } => {
                    let l = resolve_column(catalog, &aliases, left)?;
                    let r = resolve_column(catalog, &aliases, right)?;
                    validate_join(catalog, &aliases, &l, &r, left)?;
                    joins.push(JoinCond::new(l, r));
                }
                RawCond::Filter { pred, line, col } => {
                    let alias = attribute_filter(catalog, &aliases, pred, *line, *col)?;
                    filters.entry(alias).or_default().push(pred.strip());
                }
            }
        }
        joins.sort();
        joins.dedup();

        let filters = filters
            .into_iter()
            .map(|(alias, mut ps)| {
                let merged = if ps.len() == 1 { ps.pop().unwrap() } else { Predicate::And(ps) };
                (alias, merged)
            })
            .collect();

        Ok(QueryIR { aliases, joins, filters })
    }

    pub fn from_json(catalog: &Catalog, text: &str) -> Result<QueryIR> {
        #[derive(serde::Deserialize)]
        struct JsonQuery {
            aliases: BTreeMap<String, String>,
            #[serde(default)]
            joins: Vec<String>,
            #[serde(default)]
            filters: BTreeMap<String, String>,
        }
        let jq: JsonQuery = serde_json::from_str(text)
            .map_err(|e| Error::Query(format!("bad query JSON: {e}")))?;
        if jq.aliases.is_empty() {
            return Err(Error::Query("query JSON needs at least one alias".into()));
        }
        for (alias, table) in &jq.aliases {
            if catalog.table_index(table).is_none() {
                return Err(Error::Query(format!(
                    "unknown table `{table}` for alias `{alias}`"
                )));
            }
        }

        let mut joins = Vec::new();
        for j in &jq.joins {
            let (l, r) = parse_join_string(j)?;
            let l = resolve_column(catalog, &jq.aliases, &l)?;
            let rr = resolve_column(catalog, &jq.aliases, &r)?;
            let probe = RawCol { alias: None, column: l.1.clone(), line: 0, col: 0 };
            validate_join(catalog, &jq.aliases, &l, &rr, &probe)?;
            joins.push(JoinCond::new(l, rr));
        }
        joins.sort();
        joins.dedup();

        let mut filters = BTreeMap::new();
        for (alias, expr) in &jq.filters {
            let table = jq.aliases.get(alias).ok_or_else(|| {
                Error::Query(format!("filter references unknown alias `{alias}`"))
            })?;
            let raw = parser::parse_filter_text(expr)?;
            for c in raw.columns() {
                if let Some(q) = &c.alias {
                    if q != alias {
                        return Err(Error::Query(format!(
                            "filter for alias `{alias}` references `{}`",
                            c.text()
                        )));
                    }
                }
                let ti = catalog.table_index(table).unwrap();
                if catalog.tables[ti].column_index(&c.column).is_none() {
                    return Err(Error::Query(format!(
                        "unknown column `{}` in table `{table}`",
                        c.column
                    )));
                }
            }
            filters.insert(alias.clone(), raw.strip());
        }

        Ok(QueryIR { aliases: jq.aliases, joins, filters })
    }

    /// The query induced on a subset of its aliases: joins with both sides
    /// inside the subset, filters of subset aliases. Equals what parsing the
    /// printed sub-plan SQL would produce.
    pub fn restrict(&self, subset: &BTreeSet<String>) -> QueryIR {
        QueryIR {
            aliases: self
                .aliases
                .iter()
                .filter(|(a, _)| subset.contains(*a))
                .map(|(a, t)| (a.clone(), t.clone()))
                .collect(),
            joins: self
                .joins
                .iter()
                .filter(|j| subset.contains(&j.left.0) && subset.contains(&j.right.0))
                .cloned()
                .collect(),
            filters: self
                .filters
                .iter()
                .filter(|(a, _)| subset.contains(*a))
                .map(|(a, p)| (a.clone(), p.clone()))
                .collect(),
        }
    }

    /// Canonical SQL text: aliases, joins, and filters each in sorted order.
    /// Parsing the result reproduces this IR exactly.
    pub fn print_sql(&self) -> String {
        let mut out = String::from("SELECT COUNT(*) FROM ");
        let from: Vec<String> = self
            .aliases
            .iter()
            .map(|(alias, table)| format!("{table} {alias}"))
            .collect();
        out.push_str(&from.join(", "));
        let mut conds: Vec<String> = self.joins.iter().map(JoinCond::sql).collect();
        for (alias, pred) in &self.filters {
            conds.push(pred.to_sql(alias));
        }
        if !conds.is_empty() {
            out.push_str(" WHERE ");
            out.push_str(&conds.join(" AND "));
        }
        out
    }
}

fn parse_join_string(text: &str) -> Result<(RawCol, RawCol)> {
    let bad = || Error::Query(format!("bad join condition `{text}`: expected `a.col = b.col`"));
    let (l, r) = text.split_once('=').ok_or_else(bad)?;
    let side = |s: &str| -> Result<RawCol> {
        let s = s.trim();
        let (a, c) = s.split_once('.').ok_or_else(bad)?;
        let ok = |t: &str| {
            !t.is_empty()
                && t.chars().all(|ch| ch.is_alphanumeric() || ch == '_')
                && !t.starts_with(|ch: char| ch.is_ascii_digit())
        };
        if !ok(a) || !ok(c) {
            return Err(bad());
        }
        Ok(RawCol { alias: Some(a.to_string()), column: c.to_string(), line: 0, col: 0 })
    };
    Ok((side(l)?, side(r)?))
}

/// Resolve a possibly-bare column reference to an `(alias, column)` pair.
fn resolve_column(
    catalog: &Catalog,
    aliases: &BTreeMap<String, String>,
    col: &RawCol,
) -> Result<(String, String)> {
    let at = |msg: String| {
        if col.line > 0 {
            Error::Query(format!("line {}, column {}: {msg}", col.line, col.col))
        } else {
            Error::Query(msg)
        }
    };
    match &col.alias {
        Some(alias) => {
            let table = aliases
                .get(alias)
                .ok_or_else(|| at(format!("unknown alias `{alias}`")))?;
            let ti = catalog.table_index(table).unwrap();
            if catalog.tables[ti].column_index(&col.column).is_none() {
                return Err(at(format!(
                    "unknown column `{}` in table `{table}`",
                    col.column
                )));
            }
            Ok((alias.clone(), col.column.clone()))
        }
        None => {
            let mut hits: Vec<&String> = aliases
                .iter()
                .filter_map(|(alias, table)| {
                    let ti = catalog.table_index(table).unwrap();
                    catalog.tables[ti].column_index(&col.column).map(|_| alias)
                })
                .collect();
            match hits.len() {
                0 => Err(at(format!("unknown column `{}`", col.column))),
                1 => Ok((hits.pop().unwrap().clone(), col.column.clone())),
                _ => Err(at(format!(
                    "ambiguous column `{}`: qualify it with an alias",
                    col.column
                ))),
            }
        }
    }
}

fn validate_join(
    catalog: &Catalog,
    aliases: &BTreeMap<String, String>,
    l: &(String, String),
    r: &(String, String),
    pos: &RawCol,
) -> Result<()> {
    let at = |msg: String| {
        if pos.line > 0 {
            Error::Query(format!("line {}, column {}: {msg}", pos.line, pos.col))
        } else {
            Error::Query(msg)
        }
    };
    if l == r {
        return Err(at(format!(
            "join condition `{}.{} = {}.{}` relates a column to itself",
            l.0, l.1, r.0, r.1
        )));
    }
    let mut groups = [0usize; 2];
    for (i, (alias, column)) in [l, r].iter().enumerate() {
        let table = &aliases[alias.as_str()];
        let ti = catalog.table_index(table).unwrap();
        let ci = catalog.tables[ti].column_index(column).unwrap();
        if catalog.tables[ti].columns[ci].kind != ColumnKind::IntegerKey {
            return Err(at(format!(
                "join on non-key column `{table}.{column}`"
            )));
        }
        groups[i] = catalog.group_of((ti, ci)).ok_or_else(|| {
            at(format!("column `{table}.{column}` belongs to no key group"))
        })?;
    }
    if groups[0] != groups[1] {
        return Err(at(format!(
            "join `{}.{} = {}.{}` relates unrelated key groups",
            l.0, l.1, r.0, r.1
        )));
    }
    Ok(())
}

/// Attribute a filter conjunct to the single alias its columns reference.
fn attribute_filter(
    catalog: &Catalog,
    aliases: &BTreeMap<String, String>,
    pred: &RawPredicate,
    line: usize,
    col: usize,
) -> Result<String> {
    let mut owner: Option<String> = None;
    for c in pred.columns() {
        let (alias, _) = resolve_column(catalog, aliases, c)?;
        match &owner {
            None => owner = Some(alias),
            Some(prev) if *prev == alias => {}
            Some(prev) => {
                return Err(Error::Query(format!(
                    "line {line}, column {col}: filter mixes aliases `{prev}` and `{alias}`"
                )));
            }
        }
    }
    owner.ok_or_else(|| {
        Error::Query(format!(
            "line {line}, column {col}: filter references no column"
        ))
    })
}

/// One join variable: a set of `(alias, column)` members made equal by the
/// query's join conditions (transitively), all in one catalog key group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinVar {
    pub id: u32,
    /// Catalog key-group id shared by every member.
    pub group: usize,
    pub members: BTreeSet<(String, String)>,
}

impl JoinVar {
    /// Aliases this variable touches.
    pub fn aliases(&self) -> BTreeSet<&str> {
        self.members.iter().map(|(a, _)| a.as_str()).collect()
    }

    /// Columns of one alias that belong to this variable.
    pub fn columns_of<'a>(&'a self, alias: &str) -> Vec<&'a str> {
        self.members
            .iter()
            .filter(|(a, _)| a == alias)
            .map(|(_, c)| c.as_str())
            .collect()
    }
}

/// The variable structure of a query: which alias columns are equated, and
/// shape facts (cycles, self joins, connectivity) derived from it.
#[derive(Debug, Clone)]
pub struct JoinGraph {
    /// Sorted alias names, joined or not.
    pub aliases: Vec<String>,
    /// Variables ordered by their smallest member; `id` equals the index.
    pub vars: Vec<JoinVar>,
    /// alias → ids of the variables touching it.
    pub alias_vars: BTreeMap<String, BTreeSet<u32>>,
    pub cyclic: bool,
    pub self_join: bool,
    pub connected: bool,
}

/// Build the variable structure for a resolved query.
pub fn build_join_graph(catalog: &Catalog, ir: &QueryIR) -> Result<JoinGraph> {
    // Union-find over the distinct (alias, column) endpoints.
    let mut nodes: Vec<(String, String)> = Vec::new();
    let mut index: BTreeMap<(String, String), usize> = BTreeMap::new();
    let node = |n: &(String, String),
                    nodes: &mut Vec<(String, String)>,
                    index: &mut BTreeMap<(String, String), usize>| {
        *index.entry(n.clone()).or_insert_with(|| {
            nodes.push(n.clone());
            nodes.len() - 1
        })
    };
    let mut parent: Vec<usize> = Vec::new();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for cond in &ir.joins {
        let li = node(&cond.left, &mut nodes, &mut index);
        let ri = node(&cond.right, &mut nodes, &mut index);
        while parent.len() < nodes.len() {
            parent.push(parent.len());
        }
        let (lr, rr) = (find(&mut parent, li), find(&mut parent, ri));
        if lr != rr {
            let (a, b) = if lr < rr { (lr, rr) } else { (rr, lr) };
            parent[b] = a;
        }
    }

    let mut groups: BTreeMap<usize, BTreeSet<(String, String)>> = BTreeMap::new();
    for (i, n) in nodes.iter().enumerate() {
        groups
            .entry(find(&mut parent, i))
            .or_default()
            .insert(n.clone());
    }
    let mut sets: Vec<BTreeSet<(String, String)>> = groups.into_values().collect();
    sets.sort_by(|a, b| a.iter().next().cmp(&b.iter().next()));

    let mut vars = Vec::new();
    for (id, members) in sets.into_iter().enumerate() {
        let mut group = None;
        for (alias, column) in &members {
            let table = ir.aliases.get(alias).ok_or_else(|| {
                Error::Query(format!("join references unknown alias `{alias}`"))
            })?;
            let ti = catalog
                .table_index(table)
                .ok_or_else(|| Error::Query(format!("unknown table `{table}`")))?;
            let ci = catalog.tables[ti].column_index(column).ok_or_else(|| {
                Error::Query(format!("unknown column `{table}.{column}`"))
            })?;
            let g = catalog.group_of((ti, ci)).ok_or_else(|| {
                Error::Query(format!("column `{table}.{column}` belongs to no key group"))
            })?;
            match group {
                None => group = Some(g),
                Some(prev) if prev == g => {}
                Some(_) => {
                    return Err(Error::Query(format!(
                        "join conditions equate columns from different key groups (at `{alias}.{column}`)"
                    )));
                }
            }
        }
        vars.push(JoinVar { id: id as u32, group: group.unwrap(), members });
    }

    let aliases: Vec<String> = ir.aliases.keys().cloned().collect();
    let mut alias_vars: BTreeMap<String, BTreeSet<u32>> =
        aliases.iter().map(|a| (a.clone(), BTreeSet::new())).collect();
    for v in &vars {
        for (alias, _) in &v.members {
            alias_vars.get_mut(alias).unwrap().insert(v.id);
        }
    }

    // Hypergraph cycle rank: each variable links its aliases with
    // |aliases| − 1 independent equalities; more links than a spanning
    // forest needs means some equality closes a cycle.
    let mut links = 0usize;
    for v in &vars {
        links += v.aliases().len() - 1;
    }
    let components = alias_components(&aliases, &vars);
    let cyclic = links > aliases.len() - components;

    let mut tables: BTreeMap<&String, usize> = BTreeMap::new();
    for table in ir.aliases.values() {
        *tables.entry(table).or_default() += 1;
    }
    let self_join = tables.values().any(|&n| n >= 2);

    Ok(JoinGraph {
        connected: components == 1,
        aliases,
        vars,
        alias_vars,
        cyclic,
        self_join,
    })
}

fn alias_components(aliases: &[String], vars: &[JoinVar]) -> usize {
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut components = 0;
    for start in aliases {
        if seen.contains(start.as_str()) {
            continue;
        }
        components += 1;
        let mut queue = VecDeque::from([start.as_str()]);
        seen.insert(start);
        while let Some(a) = queue.pop_front() {
            for v in vars {
                let touching = v.aliases();
                if touching.contains(a) {
                    for b in touching {
                        if seen.insert(b) {
                            queue.push_back(b);
                        }
                    }
                }
            }
        }
    }
    components
}

impl JoinGraph {
    /// True when the aliases in `subset` form one connected piece: every pair
    /// is linked through variables whose members stay inside the subset.
    pub fn subset_connected(&self, subset: &BTreeSet<String>) -> bool {
        if subset.is_empty() {
            return false;
        }
        if subset.len() == 1 {
            return true;
        }
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let start = subset.iter().next().unwrap();
        let mut queue = VecDeque::from([start.as_str()]);
        seen.insert(start);
        while let Some(a) = queue.pop_front() {
            for v in &self.vars {
                let touching: Vec<&str> = v
                    .aliases()
                    .into_iter()
                    .filter(|x| subset.contains(*x))
                    .collect();
                if touching.contains(&a) {
                    for b in touching {
                        if seen.insert(b) {
                            queue.push_back(b);
                        }
                    }
                }
            }
        }
        seen.len() == subset.len()
    }

    /// Variables a sub-plan joins on: those touching ≥ 2 aliases of the
    /// subset.
    pub fn subset_vars(&self, subset: &BTreeSet<String>) -> Vec<u32> {
        self.vars
            .iter()
            .filter(|v| {
                v.aliases()
                    .into_iter()
                    .filter(|a| subset.contains(*a))
                    .count()
                    >= 2
            })
            .map(|v| v.id)
            .collect()
    }
}

/// All connected alias subsets, ascending by size then lexicographic, truncated
/// at `cap`. Returns the list and whether truncation happened.
pub fn enumerate_subplans(
    graph: &JoinGraph,
    cap: usize,
) -> Result<(Vec<BTreeSet<String>>, bool)> {
    let n = graph.aliases.len();
    if cap < n {
        return Err(Error::Query(format!(
            "sub-plan cap {cap} is smaller than the alias count {n}"
        )));
    }
    // Advance strictly-increasing index picks to the next combination.
    fn next_combination(picks: &mut [usize], n: usize) -> bool {
        let size = picks.len();
        for i in (0..size).rev() {
            if picks[i] != i + n - size {
                picks[i] += 1;
                for j in i + 1..size {
                    picks[j] = picks[j - 1] + 1;
                }
                return true;
            }
        }
        false
    }

    let mut out = Vec::new();
    let mut truncated = false;
    'sizes: for size in 1..=n {
        let mut picks = (0..size).collect::<Vec<usize>>();
        loop {
            let subset: BTreeSet<String> =
                picks.iter().map(|&i| graph.aliases[i].clone()).collect();
            if graph.subset_connected(&subset) {
                if out.len() == cap {
                    truncated = true;
                    break 'sizes;
                }
                out.push(subset);
            }
            if !next_combination(&mut picks, n) {
                break;
            }
        }
    }
    Ok((out, truncated))
}
