//! In-crate test fixtures: a schema/CSV harness that also implements
//! [`FactorSource`] by scanning the raw rows (exact per-bin masses), so
//! engine tests can pin numeric expectations without a trained model.

use std::collections::BTreeMap;

use crate::binning::{build_binmap, summarize, BinMap, BinSummary, Strategy};
use crate::catalog::{ingest_table, load_schema_str, Catalog, LoadedTable, ValueCountStore};
use crate::estimators::{key_mfv, truescan_distribution, ConditionalBinDistribution, VarKey};
use crate::factorgraph::{FactorSource, KeyRef};
use crate::predicate::{bind, Predicate};
use crate::queryir::QueryIR;
use crate::Result;

pub struct Harness {
    pub catalog: Catalog,
    pub tables: BTreeMap<String, LoadedTable>,
    pub binmaps: BTreeMap<usize, BinMap>,
    pub summaries: BTreeMap<(String, String), BinSummary>,
}

impl Harness {
    pub fn new(schema: &str, csvs: &[(&str, &str)], k: usize) -> Harness {
        Harness::with_strategy(schema, csvs, k, Strategy::Gbsa)
    }

    /// `EqualWidth` with a budget covering the whole value span yields one
    /// bin per value, which exact-value fixtures rely on.
    pub fn with_strategy(
        schema: &str,
        csvs: &[(&str, &str)],
        k: usize,
        strategy: Strategy,
    ) -> Harness {
        let catalog = load_schema_str(schema).unwrap();
        let mut tables = BTreeMap::new();
        for (name, csv) in csvs {
            let ti = catalog.table_index(name).unwrap();
            let t = ingest_table(&catalog.tables[ti], csv.as_bytes()).unwrap();
            tables.insert(name.to_string(), t);
        }
        let mut binmaps = BTreeMap::new();
        let mut summaries = BTreeMap::new();
        for group in &catalog.groups {
            let stores: Vec<ValueCountStore> = group
                .members
                .iter()
                .map(|&(ti, ci)| {
                    let t = &tables[&catalog.tables[ti].name];
                    ValueCountStore::from_column(&t.columns[ci])
                })
                .collect();
            let refs: Vec<&ValueCountStore> = stores.iter().collect();
            let mut bm = build_binmap(group.id, strategy, k, &refs).unwrap();
            for (&(ti, ci), store) in group.members.iter().zip(&stores) {
                let tname = catalog.tables[ti].name.clone();
                let cname = catalog.tables[ti].columns[ci].name.clone();
                summaries.insert((tname, cname), summarize(store, &mut bm));
            }
            binmaps.insert(group.id, bm);
        }
        Harness { catalog, tables, binmaps, summaries }
    }

    pub fn ir(&self, sql: &str) -> QueryIR {
        QueryIR::parse(&self.catalog, sql).unwrap()
    }
}

impl FactorSource for Harness {
    fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    fn label(&self) -> String {
        "truescan".into()
    }

    fn bin_budget(&self, group: usize) -> usize {
        self.binmaps[&group].num_bins()
    }

    fn distribution(
        &self,
        table: &str,
        keys: &[KeyRef<'_>],
        filter: Option<&Predicate>,
    ) -> Result<ConditionalBinDistribution> {
        let ti = self.catalog.table_index(table).unwrap();
        let def = &self.catalog.tables[ti];
        let t = &self.tables[table];
        let vks: Vec<VarKey<'_>> = keys
            .iter()
            .map(|k| VarKey {
                columns: k.columns.iter().map(|c| def.column_index(c).unwrap()).collect(),
                binmap: &self.binmaps[&k.group],
            })
            .collect();
        let mfv: Vec<Vec<u64>> = keys
            .iter()
            .map(|k| {
                let sums: Vec<&BinSummary> = k
                    .columns
                    .iter()
                    .map(|c| &self.summaries[&(table.to_string(), c.to_string())])
                    .collect();
                key_mfv(&sums, self.binmaps[&k.group].num_bins())
            })
            .collect();
        let bound = filter.map(|p| bind(p, def, t)).transpose()?;
        truescan_distribution(t, bound.as_ref(), &vks, mfv)
    }

    fn filtered_total(&self, table: &str, filter: Option<&Predicate>) -> Result<f64> {
        let ti = self.catalog.table_index(table).unwrap();
        let def = &self.catalog.tables[ti];
        let t = &self.tables[table];
        match filter {
            None => Ok(t.rows as f64),
            Some(p) => {
                let b = bind(p, def, t)?;
                let mut n = 0u64;
                for r in 0..t.rows {
                    if b.eval(t, r) {
                        n += 1;
                    }
                }
                Ok(n as f64)
            }
        }
    }

    fn table_rows(&self, table: &str) -> Result<f64> {
        Ok(self.tables[table].rows as f64)
    }

    fn bin_ndv(&self, table: &str, key: &KeyRef<'_>) -> Result<Vec<f64>> {
        let nb = self.binmaps[&key.group].num_bins();
        let mut out = vec![u64::MAX; nb];
        for c in &key.columns {
            let s = &self.summaries[&(table.to_string(), c.to_string())];
            for (i, &d) in s.ndv.iter().enumerate().take(nb) {
                out[i] = out[i].min(d);
            }
        }
        Ok(out
            .into_iter()
            .map(|x| if x == u64::MAX { 0.0 } else { x as f64 })
            .collect())
    }
}

/// CSV body with `n` copies of each value, in order.
pub fn rep_csv(header: &str, pairs: &[(i64, usize)]) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for &(v, n) in pairs {
        for _ in 0..n {
            s.push_str(&v.to_string());
            s.push('\n');
        }
    }
    s
}
