//! Ground truth and benchmark metrics: exact join-cardinality computation
//! by sequential hash joins, a nested-loop reference for cross-checking,
//! and the estimate-vs-truth aggregation used by the bench harness.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::catalog::{Catalog, LoadedTable};
use crate::factorgraph::{estimate, FactorSource};
use crate::predicate::bind;
use crate::queryir::{build_join_graph, JoinGraph, QueryIR};
use crate::{Error, Result};

/// Resource limits for exact counting.
#[derive(Debug, Clone, Copy)]
pub struct ExactConfig {
    /// Maximum number of distinct key tuples any intermediate may hold.
    pub max_entries: usize,
}

impl Default for ExactConfig {
    fn default() -> ExactConfig {
        ExactConfig { max_entries: 4_000_000 }
    }
}

fn overflow() -> Error {
    Error::Oracle("join count overflows a 64-bit counter".into())
}

fn too_big(cap: usize) -> Error {
    Error::Oracle(format!(
        "exact join intermediate exceeded the memory cap ({cap} key tuples)"
    ))
}

/// One alias's filtered rows projected onto its join variables: key tuple
/// (in ascending variable order) → multiplicity. Rows with a null join key
/// or unequal columns equated within the alias can never join and are
/// dropped here.
fn alias_multiset(
    catalog: &Catalog,
    ir: &QueryIR,
    graph: &JoinGraph,
    tables: &BTreeMap<String, LoadedTable>,
    alias: &str,
    cap: usize,
) -> Result<(HashMap<Vec<i64>, u64>, Vec<u32>)> {
    let table_name = &ir.aliases[alias];
    let ti = catalog
        .table_index(table_name)
        .ok_or_else(|| Error::Query(format!("unknown table `{table_name}`")))?;
    let def = &catalog.tables[ti];
    let t = tables
        .get(table_name)
        .ok_or_else(|| Error::Oracle(format!("table `{table_name}` is not loaded")))?;
    let avars: Vec<u32> = graph
        .alias_vars
        .get(alias)
        .map(|s| s.iter().copied().collect())
        .unwrap_or_default();
    let cols: Vec<Vec<usize>> = avars
        .iter()
        .map(|&v| {
            graph.vars[v as usize]
                .columns_of(alias)
                .iter()
                .map(|c| def.column_index(c).expect("validated column"))
                .collect()
        })
        .collect();
    let bound = ir.filters.get(alias).map(|p| bind(p, def, t)).transpose()?;
    let mut out: HashMap<Vec<i64>, u64> = HashMap::new();
    for row in 0..t.rows {
        if let Some(b) = &bound {
            if !b.eval(t, row) {
                continue;
            }
        }
        let mut key = Vec::with_capacity(avars.len());
        let mut ok = true;
        'vars: for cl in &cols {
            let mut val: Option<i64> = None;
            for &c in cl {
                match t.columns[c].key_value(row) {
                    None => {
                        ok = false;
                        break 'vars;
                    }
                    Some(x) => match val {
                        None => val = Some(x),
                        Some(p) if p != x => {
                            ok = false;
                            break 'vars;
                        }
                        _ => {}
                    },
                }
            }
            key.push(val.expect("at least one column per variable"));
        }
        if !ok {
            continue;
        }
        let e = out.entry(key).or_insert(0);
        *e = e.checked_add(1).ok_or_else(overflow)?;
        if out.len() > cap {
            return Err(too_big(cap));
        }
    }
    Ok((out, avars))
}

/// Hash-join two key-tuple multisets on their shared variables, projecting
/// the result onto `keep` (dropped variables are summed out on the fly).
fn join_maps(
    left: HashMap<Vec<i64>, u64>,
    lvars: &[u32],
    right: HashMap<Vec<i64>, u64>,
    rvars: &[u32],
    keep: &BTreeSet<u32>,
    cap: usize,
) -> Result<(HashMap<Vec<i64>, u64>, Vec<u32>)> {
    let shared: Vec<u32> = lvars.iter().copied().filter(|v| rvars.contains(v)).collect();
    let mut out_vars: Vec<u32> = lvars
        .iter()
        .chain(rvars.iter())
        .copied()
        .filter(|v| keep.contains(v))
        .collect();
    out_vars.sort_unstable();
    out_vars.dedup();

    // Build on the smaller input; the result does not depend on the choice.
    let (build, bvars, probe, pvars) = if left.len() <= right.len() {
        (left, lvars, right, rvars)
    } else {
        (right, rvars, left, lvars)
    };
    let pos = |vars: &[u32], v: u32| vars.iter().position(|&x| x == v);
    let bshared: Vec<usize> = shared.iter().map(|&v| pos(bvars, v).unwrap()).collect();
    let pshared: Vec<usize> = shared.iter().map(|&v| pos(pvars, v).unwrap()).collect();
    // Where each output variable's value comes from: probe tuple if it has
    // the variable, else build tuple.
    enum From {
        Probe(usize),
        Build(usize),
    }
    let take: Vec<From> = out_vars
        .iter()
        .map(|&v| match pos(pvars, v) {
            Some(i) => From::Probe(i),
            None => From::Build(pos(bvars, v).expect("var on some side")),
        })
        .collect();

    let mut buckets: HashMap<Vec<i64>, Vec<(Vec<i64>, u64)>> = HashMap::new();
    for (tuple, cnt) in build {
        let key: Vec<i64> = bshared.iter().map(|&i| tuple[i]).collect();
        buckets.entry(key).or_default().push((tuple, cnt));
    }
    let mut out: HashMap<Vec<i64>, u64> = HashMap::new();
    for (ptuple, pcnt) in probe {
        let key: Vec<i64> = pshared.iter().map(|&i| ptuple[i]).collect();
        let Some(bucket) = buckets.get(&key) else { continue };
        for (btuple, bcnt) in bucket {
            let cnt = pcnt.checked_mul(*bcnt).ok_or_else(overflow)?;
            let tuple: Vec<i64> = take
                .iter()
                .map(|f| match f {
                    From::Probe(i) => ptuple[*i],
                    From::Build(i) => btuple[*i],
                })
                .collect();
            let e = out.entry(tuple).or_insert(0);
            *e = e.checked_add(cnt).ok_or_else(overflow)?;
            if out.len() > cap {
                return Err(too_big(cap));
            }
        }
    }
    Ok((out, out_vars))
}

/// Sum a multiset over the variables outside `keep`.
fn project_map(
    map: HashMap<Vec<i64>, u64>,
    vars: &[u32],
    keep: &BTreeSet<u32>,
) -> Result<(HashMap<Vec<i64>, u64>, Vec<u32>)> {
    if vars.iter().all(|v| keep.contains(v)) {
        return Ok((map, vars.to_vec()));
    }
    let positions: Vec<usize> = vars
        .iter()
        .enumerate()
        .filter(|(_, v)| keep.contains(v))
        .map(|(i, _)| i)
        .collect();
    let out_vars: Vec<u32> = positions.iter().map(|&i| vars[i]).collect();
    let mut out: HashMap<Vec<i64>, u64> = HashMap::new();
    for (tuple, cnt) in map {
        let key: Vec<i64> = positions.iter().map(|&i| tuple[i]).collect();
        let e = out.entry(key).or_insert(0);
        *e = e.checked_add(cnt).ok_or_else(overflow)?;
    }
    Ok((out, out_vars))
}

/// COUNT(*) of the filtered inner equi-join, exactly.
///
/// Aliases are hash-joined in order with filters pushed down; after each
/// step the intermediate keeps only the key variables some later alias
/// still needs, as a tuple → multiplicity map. Errors when an intermediate
/// outgrows the configured entry cap or a count overflows.
pub fn exact_cardinality(
    catalog: &Catalog,
    ir: &QueryIR,
    tables: &BTreeMap<String, LoadedTable>,
    cfg: &ExactConfig,
) -> Result<u64> {
    let graph = build_join_graph(catalog, ir)?;
    let aliases: Vec<&String> = ir.aliases.keys().collect();
    if aliases.is_empty() {
        return Ok(0);
    }
    // needed_after[i]: variables used by aliases after position i.
    let mut needed_after: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); aliases.len()];
    for i in (0..aliases.len().saturating_sub(1)).rev() {
        let mut s = needed_after[i + 1].clone();
        if let Some(vs) = graph.alias_vars.get(aliases[i + 1]) {
            s.extend(vs.iter().copied());
        }
        needed_after[i] = s;
    }

    let mut inter: HashMap<Vec<i64>, u64> = HashMap::new();
    let mut live: Vec<u32> = Vec::new();
    for (i, alias) in aliases.iter().enumerate() {
        let (aset, avars) =
            alias_multiset(catalog, ir, &graph, tables, alias, cfg.max_entries)?;
        if i == 0 {
            inter = aset;
            live = avars;
        } else {
            let (j, jv) =
                join_maps(inter, &live, aset, &avars, &needed_after[i - 1], cfg.max_entries)?;
            inter = j;
            live = jv;
        }
        let (p, pv) = project_map(inter, &live, &needed_after[i])?;
        inter = p;
        live = pv;
    }
    let mut total: u64 = 0;
    for (_, cnt) in inter {
        total = total.checked_add(cnt).ok_or_else(overflow)?;
    }
    Ok(total)
}

/// Nested-loop reference implementation: iterate the full cross product of
/// filtered rows, checking each join condition as soon as both sides are
/// fixed. Only sensible for small instances; used to cross-check
/// [`exact_cardinality`].
pub fn nested_loop_cardinality(
    catalog: &Catalog,
    ir: &QueryIR,
    tables: &BTreeMap<String, LoadedTable>,
) -> Result<u64> {
    struct AliasData<'a> {
        table: &'a LoadedTable,
        rows: Vec<usize>,
    }
    let mut order: Vec<&String> = ir.aliases.keys().collect();
    order.sort();
    let index_of = |a: &str| order.iter().position(|x| x.as_str() == a).unwrap();
    let mut data = Vec::with_capacity(order.len());
    for alias in &order {
        let table_name = &ir.aliases[*alias];
        let ti = catalog
            .table_index(table_name)
            .ok_or_else(|| Error::Query(format!("unknown table `{table_name}`")))?;
        let def = &catalog.tables[ti];
        let t = tables
            .get(table_name)
            .ok_or_else(|| Error::Oracle(format!("table `{table_name}` is not loaded")))?;
        let bound = ir.filters.get(*alias).map(|p| bind(p, def, t)).transpose()?;
        let rows: Vec<usize> = (0..t.rows)
            .filter(|&r| bound.as_ref().map_or(true, |b| b.eval(t, r)))
            .collect();
        data.push(AliasData { table: t, rows });
    }
    // (left alias pos, left col, right alias pos, right col), checked at the
    // deeper of the two alias positions.
    let mut conds: Vec<(usize, usize, usize, usize)> = Vec::new();
    for j in &ir.joins {
        let (la, lc) = (&j.left.0, &j.left.1);
        let (ra, rc) = (&j.right.0, &j.right.1);
        let li = index_of(la);
        let ri = index_of(ra);
        let lci = catalog.tables[catalog.table_index(&ir.aliases[la]).unwrap()]
            .column_index(lc)
            .unwrap();
        let rci = catalog.tables[catalog.table_index(&ir.aliases[ra]).unwrap()]
            .column_index(rc)
            .unwrap();
        conds.push((li, lci, ri, rci));
    }

    let n = order.len();
    let mut chosen = vec![0usize; n];
    let mut total: u64 = 0;
    fn descend(
        depth: usize,
        n: usize,
        data: &[AliasData<'_>],
        conds: &[(usize, usize, usize, usize)],
        chosen: &mut Vec<usize>,
        total: &mut u64,
    ) -> Result<()> {
        if depth == n {
            *total = total.checked_add(1).ok_or_else(overflow)?;
            return Ok(());
        }
        'rows: for &row in &data[depth].rows {
            chosen[depth] = row;
            for &(li, lci, ri, rci) in conds {
                if li.max(ri) != depth {
                    continue;
                }
                let lv = data[li].table.columns[lci].key_value(chosen[li]);
                let rv = data[ri].table.columns[rci].key_value(chosen[ri]);
                match (lv, rv) {
                    (Some(a), Some(b)) if a == b => {}
                    _ => continue 'rows,
                }
            }
            descend(depth + 1, n, data, conds, chosen, total)?;
        }
        Ok(())
    }
    descend(0, n, &data, &conds, &mut chosen, &mut total)?;
    Ok(total)
}

/// Aggregated estimate-vs-truth quality for one workload run.
///
/// Ratios are estimate over true count. Queries whose true count is zero
/// get the defined ratio `(estimate + 1) / 1` in their row but are excluded
/// from the percentile and under-estimation aggregates; failed queries are
/// excluded entirely and counted.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorMetrics {
    /// Queries with both an estimate and a true count.
    pub evaluated: usize,
    /// Of those, queries with a positive true count (the aggregate base).
    pub included: usize,
    pub zero_truth: usize,
    pub failed: usize,
    pub p50: Option<f64>,
    pub p95: Option<f64>,
    pub p99: Option<f64>,
    /// Fraction of included queries with estimate < true.
    pub under_fraction: Option<f64>,
}

/// Nearest-rank percentile of an ascending-sorted slice.
pub fn nearest_rank(sorted: &[f64], pct: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len();
    let rank = ((pct / 100.0) * n as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(n) - 1])
}

/// One benchmarked query.
#[derive(Debug, Clone, Serialize)]
pub struct WorkloadRow {
    pub query: String,
    pub estimate: Option<f64>,
    pub truth: Option<u64>,
    pub ratio: Option<f64>,
    pub zero_truth: bool,
    pub error: Option<String>,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WorkloadReport {
    pub rows: Vec<WorkloadRow>,
    pub metrics: ErrorMetrics,
}

/// Aggregate rows into [`ErrorMetrics`].
pub fn error_metrics(rows: &[WorkloadRow]) -> ErrorMetrics {
    let mut ratios: Vec<f64> = Vec::new();
    let mut under = 0usize;
    let mut evaluated = 0usize;
    let mut zero_truth = 0usize;
    let mut failed = 0usize;
    for row in rows {
        match (row.estimate, row.truth) {
            (Some(est), Some(t)) => {
                evaluated += 1;
                if t == 0 {
                    zero_truth += 1;
                } else {
                    let ratio = est / t as f64;
                    if est < t as f64 {
                        under += 1;
                    }
                    ratios.push(ratio);
                }
            }
            _ => failed += 1,
        }
    }
    ratios.sort_by(|a, b| a.partial_cmp(b).expect("finite ratios"));
    let included = ratios.len();
    ErrorMetrics {
        evaluated,
        included,
        zero_truth,
        failed,
        p50: nearest_rank(&ratios, 50.0),
        p95: nearest_rank(&ratios, 95.0),
        p99: nearest_rank(&ratios, 99.0),
        under_fraction: (included > 0).then(|| under as f64 / included as f64),
    }
}

/// Run a workload end to end: estimate each query through `src`, count it
/// exactly, and aggregate. Per-query failures (either side) are recorded on
/// the row and excluded from the aggregates.
pub fn evaluate_workload(
    src: &dyn FactorSource,
    queries: &[QueryIR],
    tables: &BTreeMap<String, LoadedTable>,
    cfg: &ExactConfig,
) -> WorkloadReport {
    let mut rows = Vec::with_capacity(queries.len());
    for ir in queries {
        let started = std::time::Instant::now();
        let mut error = None;
        let est = match estimate(ir, src) {
            Ok(r) => Some(r.estimate),
            Err(e) => {
                error = Some(e.to_string());
                None
            }
        };
        let truth = if error.is_none() {
            match exact_cardinality(src.catalog(), ir, tables, cfg) {
                Ok(t) => Some(t),
                Err(e) => {
                    error = Some(e.to_string());
                    None
                }
            }
        } else {
            None
        };
        let zero_truth = truth == Some(0);
        let ratio = match (est, truth) {
            (Some(e), Some(0)) => Some(e + 1.0),
            (Some(e), Some(t)) => Some(e / t as f64),
            _ => None,
        };
        rows.push(WorkloadRow {
            query: ir.print_sql(),
            estimate: est,
            truth,
            ratio,
            zero_truth,
            error,
            wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        });
    }
    let metrics = error_metrics(&rows);
    WorkloadReport { rows, metrics }
}

/// Fixed-width text rendering of a workload report.
pub fn render_table(report: &WorkloadReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<6} {:>14} {:>12} {:>10}  {}\n",
        "status", "estimate", "true", "ratio", "query"
    ));
    for row in &report.rows {
        let status = if row.error.is_some() {
            "fail"
        } else if row.zero_truth {
            "zero"
        } else {
            "ok"
        };
        let est = row
            .estimate
            .map(|e| format!("{e:.1}"))
            .unwrap_or_else(|| "-".into());
        let truth = row
            .truth
            .map(|t| t.to_string())
            .unwrap_or_else(|| "-".into());
        let ratio = row
            .ratio
            .map(|r| format!("{r:.3}"))
            .unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "{status:<6} {est:>14} {truth:>12} {ratio:>10}  {}\n",
            row.query
        ));
        if let Some(err) = &row.error {
            out.push_str(&format!("       ! {err}\n"));
        }
    }
    let m = &report.metrics;
    let fmt_opt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
    out.push_str(&format!(
        "queries {} | included {} | zero-true {} | failed {} | p50 {} | p95 {} | p99 {} | under {}\n",
        m.evaluated + m.failed,
        m.included,
        m.zero_truth,
        m.failed,
        fmt_opt(m.p50),
        fmt_opt(m.p95),
        fmt_opt(m.p99),
        fmt_opt(m.under_fraction),
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binning::Strategy;
    use crate::testsupport::{rep_csv, Harness};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TWO_TABLE_SCHEMA: &str = r#"{
        "tables": [
            {"name": "A", "columns": [
                {"name": "id", "kind": "integer-key"},
                {"name": "size", "kind": "integer"}
            ]},
            {"name": "B", "columns": [{"name": "Aid", "kind": "integer-key"}]}
        ],
        "joins": ["A.id = B.Aid"]
    }"#;

    fn two_table() -> Harness {
        let mut a = String::from("id,size\n");
        for (v, n) in [(1, 8), (2, 4), (3, 3), (4, 1)] {
            for i in 0..n {
                a.push_str(&format!("{v},{i}\n"));
            }
        }
        let b = rep_csv("Aid", &[(1, 6), (2, 5), (3, 5), (5, 6), (6, 2)]);
        Harness::new(TWO_TABLE_SCHEMA, &[("A", &a), ("B", &b)], 4)
    }

    #[test]
    fn exact_two_table_count() {
        let h = two_table();
        let ir = h.ir("SELECT COUNT(*) FROM A x, B y WHERE x.id = y.Aid");
        let n = exact_cardinality(&h.catalog, &ir, &h.tables, &ExactConfig::default()).unwrap();
        assert_eq!(n, 83);
        assert_eq!(nested_loop_cardinality(&h.catalog, &ir, &h.tables).unwrap(), 83);
    }

    #[test]
    fn empty_filtered_side_gives_zero() {
        let h = two_table();
        let ir = h.ir("SELECT COUNT(*) FROM A x, B y WHERE x.id = y.Aid AND x.size < 0");
        let n = exact_cardinality(&h.catalog, &ir, &h.tables, &ExactConfig::default()).unwrap();
        assert_eq!(n, 0);
    }

    #[test]
    fn self_join_on_unique_key_returns_row_count() {
        let schema = r#"{
            "tables": [
                {"name": "U", "columns": [{"name": "id", "kind": "integer-key"}]},
                {"name": "V", "columns": [{"name": "uid", "kind": "integer-key"}]}
            ],
            "joins": ["U.id = V.uid"]
        }"#;
        let pairs: Vec<(i64, usize)> = (1..=37).map(|v| (v, 1)).collect();
        let u = rep_csv("id", &pairs);
        let h = Harness::new(schema, &[("U", &u), ("V", "uid\n")], 4);
        let ir = h.ir("SELECT COUNT(*) FROM U x, U y WHERE x.id = y.id");
        let n = exact_cardinality(&h.catalog, &ir, &h.tables, &ExactConfig::default()).unwrap();
        assert_eq!(n, 37);
        assert_eq!(nested_loop_cardinality(&h.catalog, &ir, &h.tables).unwrap(), 37);
    }

    #[test]
    fn chain_with_two_key_middle() {
        let schema = r#"{
            "tables": [
                {"name": "A", "columns": [{"name": "id", "kind": "integer-key"}]},
                {"name": "B", "columns": [
                    {"name": "x", "kind": "integer-key"},
                    {"name": "y", "kind": "integer-key"}
                ]},
                {"name": "C", "columns": [{"name": "z", "kind": "integer-key"}]}
            ],
            "joins": ["A.id = B.x", "B.y = C.z"]
        }"#;
        let a = rep_csv("id", &[(1, 2), (2, 1), (3, 1)]);
        let b = "x,y\n1,10\n1,10\n1,20\n2,10\n3,30\n";
        let c = rep_csv("z", &[(10, 2), (20, 1), (40, 3)]);
        let h = Harness::new(schema, &[("A", &a), ("B", b), ("C", &c)], 2);
        let ir = h.ir("SELECT COUNT(*) FROM A a, B b, C c WHERE a.id = b.x AND b.y = c.z");
        let n = exact_cardinality(&h.catalog, &ir, &h.tables, &ExactConfig::default()).unwrap();
        assert_eq!(n, 12);
        assert_eq!(nested_loop_cardinality(&h.catalog, &ir, &h.tables).unwrap(), 12);
    }

    #[test]
    fn hash_join_agrees_with_nested_loop_on_random_instances() {
        let schema = r#"{
            "tables": [
                {"name": "T1", "columns": [
                    {"name": "a", "kind": "integer-key"},
                    {"name": "f", "kind": "integer"}
                ]},
                {"name": "T2", "columns": [
                    {"name": "a", "kind": "integer-key"},
                    {"name": "b", "kind": "integer-key"}
                ]},
                {"name": "T3", "columns": [
                    {"name": "b", "kind": "integer-key"},
                    {"name": "c", "kind": "integer-key"}
                ]},
                {"name": "T4", "columns": [{"name": "c", "kind": "integer-key"}]}
            ],
            "joins": ["T1.a = T2.a", "T2.b = T3.b", "T3.c = T4.c"]
        }"#;
        let queries = [
            "SELECT COUNT(*) FROM T1 p, T2 q WHERE p.a = q.a",
            "SELECT COUNT(*) FROM T1 p, T2 q, T3 r WHERE p.a = q.a AND q.b = r.b",
            "SELECT COUNT(*) FROM T1 p, T2 q, T3 r, T4 s \
             WHERE p.a = q.a AND q.b = r.b AND r.c = s.c",
            "SELECT COUNT(*) FROM T1 p, T2 q, T3 r WHERE p.a = q.a AND q.b = r.b AND p.f > 2",
            "SELECT COUNT(*) FROM T1 p, T1 q WHERE p.a = q.a AND q.f <= 4",
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for round in 0..25 {
            let mut csv = |cols: &[&str], rows: usize| -> String {
                let mut s = String::from(cols.join(","));
                s.push('\n');
                for _ in 0..rows {
                    let vals: Vec<String> = cols
                        .iter()
                        .map(|c| {
                            if *c == "f" {
                                rng.gen_range(0..8).to_string()
                            } else if rng.gen_bool(0.1) {
                                String::from("\"\"") // null key
                            } else {
                                rng.gen_range(1..6).to_string()
                            }
                        })
                        .collect();
                    s.push_str(&vals.join(","));
                    s.push('\n');
                }
                s
            };
            let t1 = csv(&["a", "f"], 8);
            let t2 = csv(&["a", "b"], 9);
            let t3 = csv(&["b", "c"], 7);
            let t4 = csv(&["c"], 6);
            let h = Harness::new(
                schema,
                &[("T1", &t1), ("T2", &t2), ("T3", &t3), ("T4", &t4)],
                2,
            );
            for q in &queries {
                let ir = h.ir(q);
                let fast =
                    exact_cardinality(&h.catalog, &ir, &h.tables, &ExactConfig::default())
                        .unwrap();
                let slow = nested_loop_cardinality(&h.catalog, &ir, &h.tables).unwrap();
                assert_eq!(fast, slow, "round {round}, query `{q}`");
            }
        }
    }

    #[test]
    fn memory_cap_stops_cartesian_blowup() {
        // A and B share nothing; C references both, so after joining A and B
        // the intermediate is their key cross product.
        let schema = r#"{
            "tables": [
                {"name": "A", "columns": [{"name": "x", "kind": "integer-key"}]},
                {"name": "B", "columns": [{"name": "y", "kind": "integer-key"}]},
                {"name": "C", "columns": [
                    {"name": "x", "kind": "integer-key"},
                    {"name": "y", "kind": "integer-key"}
                ]}
            ],
            "joins": ["A.x = C.x", "B.y = C.y"]
        }"#;
        let pairs: Vec<(i64, usize)> = (1..=60).map(|v| (v, 1)).collect();
        let a = rep_csv("x", &pairs);
        let b = rep_csv("y", &pairs);
        let c = "x,y\n1,1\n2,2\n";
        let h = Harness::new(schema, &[("A", &a), ("B", &b), ("C", c)], 2);
        let ir = h.ir("SELECT COUNT(*) FROM A a, B b, C c WHERE a.x = c.x AND b.y = c.y");
        let err =
            exact_cardinality(&h.catalog, &ir, &h.tables, &ExactConfig { max_entries: 1000 })
                .unwrap_err();
        assert!(err.to_string().contains("memory cap"));
        // With room it finishes and agrees with the reference.
        let n = exact_cardinality(&h.catalog, &ir, &h.tables, &ExactConfig::default()).unwrap();
        assert_eq!(n, nested_loop_cardinality(&h.catalog, &ir, &h.tables).unwrap());
        assert_eq!(n, 2);
    }

    fn row(est: f64, truth: Option<u64>) -> WorkloadRow {
        WorkloadRow {
            query: String::new(),
            estimate: Some(est),
            truth,
            ratio: None,
            zero_truth: truth == Some(0),
            error: None,
            wall_time_ms: 0.0,
        }
    }

    #[test]
    fn metrics_use_nearest_rank_and_flag_zero_truth() {
        let mut rows = vec![
            row(5.0, Some(10)),  // 0.5
            row(10.0, Some(10)), // 1.0
            row(15.0, Some(10)), // 1.5
            row(20.0, Some(10)), // 2.0
            row(40.0, Some(10)), // 4.0
            row(3.0, Some(0)),   // zero truth, excluded
        ];
        rows.push(WorkloadRow {
            query: String::new(),
            estimate: None,
            truth: None,
            ratio: None,
            zero_truth: false,
            error: Some("boom".into()),
            wall_time_ms: 0.0,
        });
        let m = error_metrics(&rows);
        assert_eq!(m.evaluated, 6);
        assert_eq!(m.included, 5);
        assert_eq!(m.zero_truth, 1);
        assert_eq!(m.failed, 1);
        assert_eq!(m.p50, Some(1.5)); // ceil(0.50·5) = 3rd of [0.5,1,1.5,2,4]
        assert_eq!(m.p95, Some(4.0)); // ceil(0.95·5) = 5th
        assert_eq!(m.p99, Some(4.0));
        assert_eq!(m.under_fraction, Some(0.2));
        assert!(m.p50 <= m.p95 && m.p95 <= m.p99);
    }

    #[test]
    fn percentiles_match_a_sort_based_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.gen_range(1..40);
            let mut vals: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for pct in [50.0, 95.0, 99.0] {
                let by_rule = nearest_rank(&vals, pct).unwrap();
                // Oracle: smallest element covering at least pct percent.
                let need = (pct / 100.0 * n as f64).ceil().max(1.0) as usize;
                assert_eq!(by_rule, vals[need - 1]);
            }
        }
        assert_eq!(nearest_rank(&[], 50.0), None);
    }

    #[test]
    fn workload_run_with_exact_scan_and_singleton_bins_is_calibrated() {
        let a = rep_csv("id", &[(1, 8), (2, 4), (3, 3), (4, 1)]);
        let b = rep_csv("Aid", &[(1, 6), (2, 5), (3, 5), (5, 6), (6, 2)]);
        let schema = r#"{
            "tables": [
                {"name": "A", "columns": [{"name": "id", "kind": "integer-key"}]},
                {"name": "B", "columns": [{"name": "Aid", "kind": "integer-key"}]}
            ],
            "joins": ["A.id = B.Aid"]
        }"#;
        let h = Harness::with_strategy(
            schema,
            &[("A", &a), ("B", &b)],
            6,
            Strategy::EqualWidth,
        );
        let queries = vec![
            h.ir("SELECT COUNT(*) FROM A x, B y WHERE x.id = y.Aid"),
            h.ir("SELECT COUNT(*) FROM A x, A y WHERE x.id = y.id"),
        ];
        let report = evaluate_workload(&h, &queries, &h.tables, &ExactConfig::default());
        assert_eq!(report.metrics.evaluated, 2);
        assert_eq!(report.metrics.included, 2);
        for row in &report.rows {
            assert_eq!(row.ratio, Some(1.0), "{}", row.query);
        }
        assert_eq!(report.metrics.p50, Some(1.0));
        assert_eq!(report.metrics.under_fraction, Some(0.0));
        let table = render_table(&report);
        assert!(table.contains("p50 1.000"));
        assert!(table.lines().count() >= 4);
    }
}
