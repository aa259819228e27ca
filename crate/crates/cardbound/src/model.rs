//! The trained model: one self-contained, versioned file tying together the
//! catalog, per-group bin maps, per-key summaries, and a fitted per-table
//! estimator. A loaded model answers every statistics query the inference
//! engine makes — no original CSVs needed — and supports in-place delta
//! updates with frozen bins.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::binning::{
    allocate_bin_budget, build_binmap, summarize, BinMap, BinSummary, Strategy,
};
use crate::bytesio::{
    read_bytes, read_f64, read_i64, read_len, read_opt_i64, read_str, read_u64, write_bytes,
    write_f64, write_i64, write_opt_i64, write_str, write_u64,
};
use crate::catalog::{
    ingest_table, load_schema_path, Catalog, ColumnData, ColumnDef, ColumnKind, LoadedTable,
    TableDef, ValueCountStore,
};
use crate::chowliu::{fit_chowliu, predicate_masks, ChowLiuModel, NodeKind};
use crate::estimators::{
    build_sample, key_mfv, sample_distribution, take_rows, truescan_distribution,
    ConditionalBinDistribution, EstimatorKind, Sample, VarKey,
};
use crate::factorgraph::{FactorSource, KeyRef};
use crate::predicate::{bind, Predicate};
use crate::queryir::{build_join_graph, QueryIR};
use crate::{Error, Result};

const FORMAT_NAME: &str = "cardbound-model";
const FORMAT_VERSION: u64 = 1;

fn default_k() -> usize {
    100
}
fn default_rate() -> f64 {
    0.01
}
fn default_cap() -> usize {
    16384
}
fn default_strategy() -> Strategy {
    Strategy::Gbsa
}
fn default_estimator() -> EstimatorKind {
    EstimatorKind::ChowLiu
}

/// Training-time knobs. The defaults give every key group 100 bins from a
/// greedy skew-aware split, a fitted tree estimator with a 1% fallback
/// sample, and a deterministic seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    /// Total bin budget across all groups; unset means `k_per_group` each.
    #[serde(default)]
    pub total_bins: Option<usize>,
    /// Per-group budget when no total is given (and no override applies).
    #[serde(default = "default_k")]
    pub k_per_group: usize,
    /// Hard per-group overrides, applied last.
    #[serde(default)]
    pub group_bins: BTreeMap<usize, usize>,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default = "default_estimator")]
    pub estimator: EstimatorKind,
    /// Sampling rate for the sample estimator and the tree fallback sample.
    #[serde(default = "default_rate")]
    pub rate: f64,
    #[serde(default)]
    pub seed: u64,
    /// Sub-plan enumeration cap for progressive estimation.
    #[serde(default = "default_cap")]
    pub subplan_cap: usize,
    /// Workload file used to size group budgets; unset splits evenly.
    #[serde(default)]
    pub workload: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            total_bins: None,
            k_per_group: default_k(),
            group_bins: BTreeMap::new(),
            strategy: default_strategy(),
            estimator: default_estimator(),
            rate: default_rate(),
            seed: 0,
            subplan_cap: default_cap(),
            workload: None,
        }
    }
}

/// Fitted per-table artifacts, one variant per estimator.
enum EstimatorData {
    TrueScan {
        tables: BTreeMap<String, LoadedTable>,
    },
    Sample {
        samples: BTreeMap<String, Sample>,
    },
    ChowLiu {
        /// Tables with at least one join key carry a fitted tree.
        trees: BTreeMap<String, ChowLiuModel>,
        /// Every table carries a fallback sample for predicates the tree
        /// cannot encode (LIKE, unseen values, key-column filters).
        fallback: BTreeMap<String, Sample>,
    },
}

impl EstimatorData {
    fn kind(&self) -> EstimatorKind {
        match self {
            EstimatorData::TrueScan { .. } => EstimatorKind::TrueScan,
            EstimatorData::Sample { .. } => EstimatorKind::Sample,
            EstimatorData::ChowLiu { .. } => EstimatorKind::ChowLiu,
        }
    }
}

/// A trained estimation model.
pub struct Model {
    pub catalog: Catalog,
    pub config: RunConfig,
    /// SHA-256 of each training CSV, recorded at train time.
    pub digests: BTreeMap<String, String>,
    /// Completed delta updates applied since training.
    pub updates: u64,
    pub binmaps: BTreeMap<usize, BinMap>,
    pub summaries: BTreeMap<(String, String), BinSummary>,
    /// Exact value counts per key column; the update path's ground truth.
    pub stores: BTreeMap<(String, String), ValueCountStore>,
    pub table_rows: BTreeMap<String, u64>,
    data: EstimatorData,
    memo: RefCell<HashMap<String, ConditionalBinDistribution>>,
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("estimator", &self.data.kind().to_string())
            .field("tables", &self.catalog.tables.len())
            .field("groups", &self.binmaps.len())
            .field("updates", &self.updates)
            .finish_non_exhaustive()
    }
}

/// SHA-256 as lowercase hex.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Parse a workload: one SQL statement or JSON query object per non-empty
/// line; `#` starts a comment line.
pub fn parse_workload(catalog: &Catalog, text: &str) -> Result<Vec<QueryIR>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let ir = QueryIR::parse(catalog, line)
            .map_err(|e| Error::Query(format!("workload line {}: {e}", i + 1)))?;
        out.push(ir);
    }
    Ok(out)
}

/// Deterministic per-table sampling seed, distinct per update round.
fn sample_seed(base: u64, round: u64, table: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in base
        .to_le_bytes()
        .iter()
        .chain(round.to_le_bytes().iter())
        .chain(table.as_bytes())
    {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Per-group bin budgets: workload-weighted split of the total when a
/// workload is given, an even split otherwise, then explicit overrides.
fn resolve_budgets(
    catalog: &Catalog,
    cfg: &RunConfig,
    workload: &[QueryIR],
) -> Result<BTreeMap<usize, usize>> {
    let g = catalog.groups.len();
    if g == 0 {
        return Ok(BTreeMap::new());
    }
    let total = cfg.total_bins.unwrap_or_else(|| cfg.k_per_group.saturating_mul(g));
    let mut counts = vec![0u64; g];
    for ir in workload {
        let graph = build_join_graph(catalog, ir)?;
        for var in &graph.vars {
            counts[var.group] += 1;
        }
    }
    let alloc = allocate_bin_budget(&counts, total)?;
    let mut out: BTreeMap<usize, usize> = catalog
        .groups
        .iter()
        .map(|grp| (grp.id, alloc[grp.id]))
        .collect();
    for (&gid, &k) in &cfg.group_bins {
        if !out.contains_key(&gid) {
            return Err(Error::Model(format!("bin override for unknown group {gid}")));
        }
        if k == 0 {
            return Err(Error::Model(format!("group {gid}: bin override must be positive")));
        }
        out.insert(gid, k);
    }
    Ok(out)
}

fn key_columns_of(catalog: &Catalog, ti: usize) -> Vec<(usize, usize)> {
    catalog
        .keys_of_table(ti)
        .into_iter()
        .map(|(_, ci)| (ci, catalog.group_of((ti, ci)).expect("grouped key")))
        .collect()
}

/// Train on already-ingested tables. `digests` records input provenance and
/// may be empty for in-memory runs; `workload` steers budget allocation.
pub fn train_tables(
    catalog: Catalog,
    tables: BTreeMap<String, LoadedTable>,
    digests: BTreeMap<String, String>,
    workload: &[QueryIR],
    cfg: RunConfig,
) -> Result<Model> {
    train_tables_with_bins(catalog, tables, digests, workload, cfg, None)
}

/// [`train_tables`] with externally supplied frozen bin maps (the
/// retrain-equivalence oracle for the update path uses this).
pub fn train_tables_with_bins(
    catalog: Catalog,
    tables: BTreeMap<String, LoadedTable>,
    digests: BTreeMap<String, String>,
    workload: &[QueryIR],
    cfg: RunConfig,
    frozen_bins: Option<&BTreeMap<usize, BinMap>>,
) -> Result<Model> {
    for t in &catalog.tables {
        if !tables.contains_key(&t.name) {
            return Err(Error::Ingest(format!("table `{}` has no data", t.name)));
        }
    }

    // Exact value counts per key column, grouped for bin building.
    let mut stores: BTreeMap<(String, String), ValueCountStore> = BTreeMap::new();
    for group in &catalog.groups {
        for &(ti, ci) in &group.members {
            let tname = &catalog.tables[ti].name;
            let cname = &catalog.tables[ti].columns[ci].name;
            let store = ValueCountStore::from_column(&tables[tname].columns[ci]);
            stores.insert((tname.clone(), cname.clone()), store);
        }
    }

    let budgets = resolve_budgets(&catalog, &cfg, workload)?;
    let mut binmaps: BTreeMap<usize, BinMap> = BTreeMap::new();
    let mut summaries: BTreeMap<(String, String), BinSummary> = BTreeMap::new();
    for group in &catalog.groups {
        let member_names: Vec<(String, String)> = group
            .members
            .iter()
            .map(|&(ti, ci)| {
                (
                    catalog.tables[ti].name.clone(),
                    catalog.tables[ti].columns[ci].name.clone(),
                )
            })
            .collect();
        let mut bm = match frozen_bins.and_then(|m| m.get(&group.id)) {
            Some(frozen) => frozen.clone(),
            None => {
                let refs: Vec<&ValueCountStore> =
                    member_names.iter().map(|k| &stores[k]).collect();
                build_binmap(group.id, cfg.strategy, budgets[&group.id], &refs)?
            }
        };
        for key in &member_names {
            summaries.insert(key.clone(), summarize(&stores[key], &mut bm));
        }
        binmaps.insert(group.id, bm);
    }

    let table_rows: BTreeMap<String, u64> =
        tables.iter().map(|(n, t)| (n.clone(), t.rows as u64)).collect();

    let data = fit_estimator(&catalog, &tables, &binmaps, &cfg, 0)?;
    Ok(Model {
        catalog,
        config: cfg,
        digests,
        updates: 0,
        binmaps,
        summaries,
        stores,
        table_rows,
        data,
        memo: RefCell::new(HashMap::new()),
    })
}

fn fit_estimator(
    catalog: &Catalog,
    tables: &BTreeMap<String, LoadedTable>,
    binmaps: &BTreeMap<usize, BinMap>,
    cfg: &RunConfig,
    round: u64,
) -> Result<EstimatorData> {
    match cfg.estimator {
        EstimatorKind::TrueScan => Ok(EstimatorData::TrueScan { tables: tables.clone() }),
        EstimatorKind::Sample => {
            let mut samples = BTreeMap::new();
            for (ti, def) in catalog.tables.iter().enumerate() {
                let _ = ti;
                let t = &tables[&def.name];
                let seed = sample_seed(cfg.seed, round, &def.name);
                samples.insert(def.name.clone(), build_sample(t, def, cfg.rate, seed)?);
            }
            Ok(EstimatorData::Sample { samples })
        }
        EstimatorKind::ChowLiu => {
            let mut trees = BTreeMap::new();
            let mut fallback = BTreeMap::new();
            for (ti, def) in catalog.tables.iter().enumerate() {
                let t = &tables[&def.name];
                let keymaps: BTreeMap<usize, &BinMap> = key_columns_of(catalog, ti)
                    .into_iter()
                    .map(|(ci, gid)| (ci, &binmaps[&gid]))
                    .collect();
                if !keymaps.is_empty() {
                    trees.insert(def.name.clone(), fit_chowliu(def, t, &keymaps)?);
                }
                let seed = sample_seed(cfg.seed, round, &def.name);
                fallback.insert(def.name.clone(), build_sample(t, def, cfg.rate, seed)?);
            }
            Ok(EstimatorData::ChowLiu { trees, fallback })
        }
    }
}

/// Train from a schema file and a directory of CSVs (plus the config's
/// optional workload file).
pub fn train(schema: &Path, data_dir: &Path, cfg: RunConfig) -> Result<Model> {
    let catalog = load_schema_path(schema)?;
    let mut tables = BTreeMap::new();
    let mut digests = BTreeMap::new();
    for def in &catalog.tables {
        let path = data_dir.join(format!("{}.csv", def.name));
        let bytes = std::fs::read(&path).map_err(|e| {
            Error::Ingest(format!("table `{}`: cannot read {}: {e}", def.name, path.display()))
        })?;
        digests.insert(def.name.clone(), sha256_hex(&bytes));
        tables.insert(def.name.clone(), ingest_table(def, bytes.as_slice())?);
    }
    let workload = match &cfg.workload {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Ingest(format!("workload {}: {e}", p.display())))?;
            parse_workload(&catalog, &text)?
        }
        None => Vec::new(),
    };
    train_tables(catalog, tables, digests, &workload, cfg)
}

// ---------------------------------------------------------------------------
// Estimation-time statistics (the FactorSource contract).

impl Model {
    fn def_of(&self, table: &str) -> Result<(usize, &TableDef)> {
        let ti = self
            .catalog
            .table_index(table)
            .ok_or_else(|| Error::Model(format!("model has no table `{table}`")))?;
        Ok((ti, &self.catalog.tables[ti]))
    }

    fn summary_of(&self, table: &str, column: &str) -> Result<&BinSummary> {
        self.summaries
            .get(&(table.to_string(), column.to_string()))
            .ok_or_else(|| Error::Model(format!("no summary for `{table}.{column}`")))
    }

    fn mfv_of(&self, table: &str, key: &KeyRef<'_>) -> Result<Vec<u64>> {
        let sums: Vec<&BinSummary> = key
            .columns
            .iter()
            .map(|c| self.summary_of(table, c))
            .collect::<Result<_>>()?;
        Ok(key_mfv(&sums, self.binmaps[&key.group].num_bins()))
    }

    fn var_keys<'a>(&'a self, def: &TableDef, keys: &[KeyRef<'_>]) -> Result<Vec<VarKey<'a>>> {
        keys.iter()
            .map(|k| {
                let columns = k
                    .columns
                    .iter()
                    .map(|c| {
                        def.column_index(c).ok_or_else(|| {
                            Error::Model(format!("no column `{}.{c}`", def.name))
                        })
                    })
                    .collect::<Result<Vec<usize>>>()?;
                Ok(VarKey { columns, binmap: &self.binmaps[&k.group] })
            })
            .collect()
    }

    /// Mass over key bins via the fitted tree, when every key is a single
    /// column and the filter converts to exact category masks.
    fn tree_distribution(
        &self,
        tree: &ChowLiuModel,
        keys: &[KeyRef<'_>],
        filter: Option<&Predicate>,
        mfv: Vec<Vec<u64>>,
    ) -> Result<Option<ConditionalBinDistribution>> {
        let masks = match filter {
            None => BTreeMap::new(),
            Some(p) => match predicate_masks(tree, p) {
                Some(m) => m,
                None => return Ok(None),
            },
        };
        let mut keep = Vec::with_capacity(keys.len());
        let mut dims = Vec::with_capacity(keys.len());
        for k in keys {
            if k.columns.len() != 1 {
                return Ok(None);
            }
            let ni = match tree.node_index(k.columns[0]) {
                Some(i) => i,
                None => return Ok(None),
            };
            let bins = match tree.nodes[ni].kind {
                NodeKind::Key { bins } => bins,
                NodeKind::Attr { .. } => return Ok(None),
            };
            if bins != self.binmaps[&k.group].num_bins() {
                return Err(Error::Model(format!(
                    "tree for `{}` was fitted on {bins} bins but the map has {}",
                    tree.nodes[ni].name,
                    self.binmaps[&k.group].num_bins()
                )));
            }
            keep.push(ni);
            dims.push(bins);
        }
        let rows = tree.rows as f64;
        let probs = tree.infer(&keep, &masks);
        let filtered_total = tree.infer(&[], &masks)[0] * rows;
        // Drop each axis's null category, keeping real bins row-major.
        let cats: Vec<usize> = keep.iter().map(|&n| tree.nodes[n].cats()).collect();
        let total_real: usize = dims.iter().product();
        let mut mass = vec![0.0; total_real.max(1)];
        for (flat, slot) in mass.iter_mut().enumerate() {
            let mut rem = flat;
            let mut src = 0usize;
            for a in (0..dims.len()).rev() {
                let b = rem % dims[a];
                rem /= dims[a];
                let stride: usize = cats[a + 1..].iter().product();
                src += b * stride;
            }
            *slot = probs[src] * rows;
        }
        Ok(Some(ConditionalBinDistribution { dims, mass, mfv, filtered_total }))
    }

    fn fallback_sample(&self, table: &str) -> Result<&Sample> {
        match &self.data {
            EstimatorData::Sample { samples } => samples.get(table),
            EstimatorData::ChowLiu { fallback, .. } => fallback.get(table),
            EstimatorData::TrueScan { .. } => None,
        }
        .ok_or_else(|| Error::Model(format!("no sample for table `{table}`")))
    }

    fn distribution_uncached(
        &self,
        table: &str,
        keys: &[KeyRef<'_>],
        filter: Option<&Predicate>,
    ) -> Result<ConditionalBinDistribution> {
        let (_, def) = self.def_of(table)?;
        let vks = self.var_keys(def, keys)?;
        let mfv: Vec<Vec<u64>> =
            keys.iter().map(|k| self.mfv_of(table, k)).collect::<Result<_>>()?;
        match &self.data {
            EstimatorData::TrueScan { tables } => {
                let t = tables
                    .get(table)
                    .ok_or_else(|| Error::Model(format!("no data for table `{table}`")))?;
                let bound = filter.map(|p| bind(p, def, t)).transpose()?;
                truescan_distribution(t, bound.as_ref(), &vks, mfv)
            }
            EstimatorData::Sample { .. } => {
                let s = self.fallback_sample(table)?;
                let bound = filter.map(|p| bind(p, def, &s.rows)).transpose()?;
                sample_distribution(s, bound.as_ref(), &vks, mfv)
            }
            EstimatorData::ChowLiu { trees, .. } => {
                if let Some(tree) = trees.get(table) {
                    if let Some(cbd) = self.tree_distribution(tree, keys, filter, mfv.clone())? {
                        return Ok(cbd);
                    }
                }
                let s = self.fallback_sample(table)?;
                let bound = filter.map(|p| bind(p, def, &s.rows)).transpose()?;
                sample_distribution(s, bound.as_ref(), &vks, mfv)
            }
        }
    }
}

impl FactorSource for Model {
    fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    fn label(&self) -> String {
        self.data.kind().to_string()
    }

    fn bin_budget(&self, group: usize) -> usize {
        self.binmaps.get(&group).map(|b| b.num_bins()).unwrap_or(0)
    }

    fn distribution(
        &self,
        table: &str,
        keys: &[KeyRef<'_>],
        filter: Option<&Predicate>,
    ) -> Result<ConditionalBinDistribution> {
        let mut tag = String::from(table);
        for k in keys {
            tag.push_str(&format!("|v{}g{}:{}", k.var, k.group, k.columns.join(",")));
        }
        if let Some(p) = filter {
            tag.push('|');
            tag.push_str(&p.to_sql(""));
        }
        if let Some(hit) = self.memo.borrow().get(&tag) {
            return Ok(hit.clone());
        }
        let cbd = self.distribution_uncached(table, keys, filter)?;
        self.memo.borrow_mut().insert(tag, cbd.clone());
        Ok(cbd)
    }

    fn filtered_total(&self, table: &str, filter: Option<&Predicate>) -> Result<f64> {
        let (_, def) = self.def_of(table)?;
        let Some(p) = filter else {
            return Ok(*self
                .table_rows
                .get(table)
                .ok_or_else(|| Error::Model(format!("model has no table `{table}`")))?
                as f64);
        };
        match &self.data {
            EstimatorData::TrueScan { tables } => {
                let t = tables
                    .get(table)
                    .ok_or_else(|| Error::Model(format!("no data for table `{table}`")))?;
                let b = bind(p, def, t)?;
                let mut n = 0u64;
                for r in 0..t.rows {
                    if b.eval(t, r) {
                        n += 1;
                    }
                }
                Ok(n as f64)
            }
            EstimatorData::ChowLiu { trees, .. } => {
                if let Some(tree) = trees.get(table) {
                    if let Some(masks) = predicate_masks(tree, p) {
                        return Ok(tree.infer(&[], &masks)[0] * tree.rows as f64);
                    }
                }
                let s = self.fallback_sample(table)?;
                let b = bind(p, def, &s.rows)?;
                let mut n = 0u64;
                for r in 0..s.rows.rows {
                    if b.eval(&s.rows, r) {
                        n += 1;
                    }
                }
                Ok(n as f64 / s.rate)
            }
            EstimatorData::Sample { .. } => {
                let s = self.fallback_sample(table)?;
                let b = bind(p, def, &s.rows)?;
                let mut n = 0u64;
                for r in 0..s.rows.rows {
                    if b.eval(&s.rows, r) {
                        n += 1;
                    }
                }
                Ok(n as f64 / s.rate)
            }
        }
    }

    fn table_rows(&self, table: &str) -> Result<f64> {
        Ok(*self
            .table_rows
            .get(table)
            .ok_or_else(|| Error::Model(format!("model has no table `{table}`")))?
            as f64)
    }

    fn bin_ndv(&self, table: &str, key: &KeyRef<'_>) -> Result<Vec<f64>> {
        let nb = self.binmaps[&key.group].num_bins();
        let mut out = vec![u64::MAX; nb];
        for c in &key.columns {
            let s = self.summary_of(table, c)?;
            for (i, &d) in s.ndv.iter().enumerate().take(nb) {
                out[i] = out[i].min(d);
            }
        }
        Ok(out
            .into_iter()
            .map(|x| if x == u64::MAX { 0.0 } else { x as f64 })
            .collect())
    }

    /// For a table carrying three or more keys of one query, follow the
    /// fitted tree: connect the key nodes by a minimum-distance spanning
    /// tree over their pairwise path lengths in the fitted structure.
    fn factor_edges(
        &self,
        table: &str,
        keys: &[KeyRef<'_>],
    ) -> Result<Option<Vec<(usize, usize)>>> {
        let EstimatorData::ChowLiu { trees, .. } = &self.data else {
            return Ok(None);
        };
        let Some(tree) = trees.get(table) else { return Ok(None) };
        let mut nodes = Vec::with_capacity(keys.len());
        for k in keys {
            if k.columns.len() != 1 {
                return Ok(None);
            }
            match tree.node_index(k.columns[0]) {
                Some(n) => nodes.push(n),
                None => return Ok(None),
            }
        }
        // BFS distances over the fitted forest; unreachable pairs get a
        // large distance so they join last.
        let n = tree.nodes.len();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in &tree.edges {
            adj[e.parent].push(e.child);
            adj[e.child].push(e.parent);
        }
        let dist_from = |start: usize| -> Vec<usize> {
            let mut d = vec![usize::MAX; n];
            d[start] = 0;
            let mut q = std::collections::VecDeque::from([start]);
            while let Some(u) = q.pop_front() {
                for &v in &adj[u] {
                    if d[v] == usize::MAX {
                        d[v] = d[u] + 1;
                        q.push_back(v);
                    }
                }
            }
            d
        };
        let mut cands: Vec<(usize, usize, usize)> = Vec::new();
        for i in 0..nodes.len() {
            let d = dist_from(nodes[i]);
            for j in i + 1..nodes.len() {
                let w = if d[nodes[j]] == usize::MAX { usize::MAX - 1 } else { d[nodes[j]] };
                cands.push((w, i, j));
            }
        }
        cands.sort_unstable();
        let mut parent: Vec<usize> = (0..nodes.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut edges = Vec::with_capacity(nodes.len().saturating_sub(1));
        for (_, i, j) in cands {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri != rj {
                parent[ri.max(rj)] = ri.min(rj);
                edges.push((i, j));
            }
        }
        Ok(Some(edges))
    }
}

// ---------------------------------------------------------------------------
// Persistence.

fn write_u64s(w: &mut impl Write, v: &[u64]) -> Result<()> {
    write_u64(w, v.len() as u64)?;
    for &x in v {
        write_u64(w, x)?;
    }
    Ok(())
}

fn read_u64s(r: &mut impl Read) -> Result<Vec<u64>> {
    let n = read_len(r, 1 << 32)?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(read_u64(r)?);
    }
    Ok(out)
}

fn write_table(w: &mut impl Write, t: &LoadedTable) -> Result<()> {
    write_str(w, &t.name)?;
    write_u64(w, t.rows as u64)?;
    write_u64(w, t.columns.len() as u64)?;
    for col in &t.columns {
        match col {
            ColumnData::Int(v) => {
                w.write_all(&[0])?;
                for &x in v {
                    write_opt_i64(w, x)?;
                }
            }
            ColumnData::Float(v) => {
                w.write_all(&[1])?;
                for &x in v {
                    match x {
                        Some(f) => {
                            w.write_all(&[1])?;
                            write_f64(w, f)?;
                        }
                        None => w.write_all(&[0])?,
                    }
                }
            }
            ColumnData::Text(v) => {
                w.write_all(&[2])?;
                for x in v {
                    match x {
                        Some(s) => {
                            w.write_all(&[1])?;
                            write_str(w, s)?;
                        }
                        None => w.write_all(&[0])?,
                    }
                }
            }
            ColumnData::DictKey { codes, dict } => {
                w.write_all(&[3])?;
                for &x in codes {
                    write_opt_i64(w, x)?;
                }
                write_u64(w, dict.len() as u64)?;
                for s in dict {
                    write_str(w, s)?;
                }
            }
        }
    }
    Ok(())
}

fn read_table(r: &mut impl Read) -> Result<LoadedTable> {
    let name = read_str(r)?;
    let rows = read_len(r, 1 << 40)?;
    let ncols = read_len(r, 1 << 20)?;
    let mut tag = [0u8; 1];
    let mut columns = Vec::with_capacity(ncols);
    for _ in 0..ncols {
        r.read_exact(&mut tag)?;
        let col = match tag[0] {
            0 => {
                let mut v = Vec::with_capacity(rows);
                for _ in 0..rows {
                    v.push(read_opt_i64(r)?);
                }
                ColumnData::Int(v)
            }
            1 => {
                let mut v = Vec::with_capacity(rows);
                for _ in 0..rows {
                    r.read_exact(&mut tag)?;
                    v.push(match tag[0] {
                        0 => None,
                        1 => Some(read_f64(r)?),
                        t => {
                            return Err(Error::Model(format!(
                                "corrupt payload: bad float tag {t}"
                            )))
                        }
                    });
                }
                // Reuse the tag buffer for the next column's kind byte.
                ColumnData::Float(v)
            }
            2 => {
                let mut v = Vec::with_capacity(rows);
                for _ in 0..rows {
                    r.read_exact(&mut tag)?;
                    v.push(match tag[0] {
                        0 => None,
                        1 => Some(read_str(r)?),
                        t => {
                            return Err(Error::Model(format!(
                                "corrupt payload: bad text tag {t}"
                            )))
                        }
                    });
                }
                ColumnData::Text(v)
            }
            3 => {
                let mut codes = Vec::with_capacity(rows);
                for _ in 0..rows {
                    codes.push(read_opt_i64(r)?);
                }
                let nd = read_len(r, 1 << 32)?;
                let mut dict = Vec::with_capacity(nd);
                for _ in 0..nd {
                    dict.push(read_str(r)?);
                }
                ColumnData::DictKey { codes, dict }
            }
            t => return Err(Error::Model(format!("corrupt payload: bad column tag {t}"))),
        };
        columns.push(col);
    }
    Ok(LoadedTable { name, columns, rows })
}

fn write_sample(w: &mut impl Write, s: &Sample) -> Result<()> {
    write_str(w, &s.table)?;
    write_f64(w, s.rate)?;
    write_u64(w, s.seed)?;
    write_table(w, &s.rows)
}

fn read_sample(r: &mut impl Read) -> Result<Sample> {
    let table = read_str(r)?;
    let rate = read_f64(r)?;
    let seed = read_u64(r)?;
    let rows = read_table(r)?;
    Ok(Sample { table, rate, seed, rows })
}

/// Tree metadata without the count arrays (those go to binary).
#[derive(Serialize, Deserialize)]
struct TreeMeta {
    nodes: Vec<crate::chowliu::Node>,
    edge_pairs: Vec<(usize, usize)>,
    root_ids: Vec<usize>,
    rows: u64,
}

fn write_tree(w: &mut impl Write, t: &ChowLiuModel) -> Result<()> {
    let meta = TreeMeta {
        nodes: t.nodes.clone(),
        edge_pairs: t.edges.iter().map(|e| (e.parent, e.child)).collect(),
        root_ids: t.roots.iter().map(|r| r.0).collect(),
        rows: t.rows,
    };
    write_bytes(w, &serde_json::to_vec(&meta).expect("plain JSON"))?;
    for (_, counts) in &t.roots {
        write_u64s(w, counts)?;
    }
    for e in &t.edges {
        write_u64s(w, &e.counts)?;
    }
    Ok(())
}

fn read_tree(r: &mut impl Read) -> Result<ChowLiuModel> {
    let meta: TreeMeta = serde_json::from_slice(&read_bytes(r)?)
        .map_err(|e| Error::Model(format!("corrupt tree metadata: {e}")))?;
    let mut roots = Vec::with_capacity(meta.root_ids.len());
    for id in meta.root_ids {
        roots.push((id, read_u64s(r)?));
    }
    let mut edges = Vec::with_capacity(meta.edge_pairs.len());
    for (parent, child) in meta.edge_pairs {
        edges.push(crate::chowliu::Edge { parent, child, counts: read_u64s(r)? });
    }
    Ok(ChowLiuModel { nodes: meta.nodes, edges, roots, rows: meta.rows })
}

fn append_lock(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".lock");
    PathBuf::from(os)
}

fn append_tmp(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".tmp");
    PathBuf::from(os)
}

struct LockGuard(PathBuf);

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

impl Model {
    fn encode(&self) -> Result<Vec<u8>> {
        let header = serde_json::json!({
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "updates": self.updates,
            "estimator": self.data.kind().to_string(),
        });
        let mut out = Vec::new();
        out.extend_from_slice(serde_json::to_string(&header).expect("plain JSON").as_bytes());
        out.push(b'\n');
        let w = &mut out;

        write_str(w, "catalog")?;
        write_bytes(w, &serde_json::to_vec(&self.catalog).expect("plain JSON"))?;
        write_str(w, "config")?;
        write_bytes(w, &serde_json::to_vec(&self.config).expect("plain JSON"))?;
        write_str(w, "digests")?;
        write_bytes(w, &serde_json::to_vec(&self.digests).expect("plain JSON"))?;
        write_str(w, "rows")?;
        write_bytes(w, &serde_json::to_vec(&self.table_rows).expect("plain JSON"))?;

        write_str(w, "binmaps")?;
        write_u64(w, self.binmaps.len() as u64)?;
        for bm in self.binmaps.values() {
            write_u64(w, bm.group_id as u64)?;
            write_str(w, &bm.strategy.to_string())?;
            write_u64(w, bm.budget as u64)?;
            write_u64(w, bm.assignment().len() as u64)?;
            for (&v, &b) in bm.assignment() {
                write_i64(w, v)?;
                write_u64(w, u64::from(b))?;
            }
        }

        write_str(w, "summaries")?;
        write_u64(w, self.summaries.len() as u64)?;
        for ((t, c), s) in &self.summaries {
            write_str(w, t)?;
            write_str(w, c)?;
            write_u64s(w, &s.totals)?;
            write_u64s(w, &s.mfv)?;
            write_u64s(w, &s.ndv)?;
        }

        write_str(w, "stores")?;
        write_u64(w, self.stores.len() as u64)?;
        for ((t, c), s) in &self.stores {
            write_str(w, t)?;
            write_str(w, c)?;
            write_u64(w, s.nulls)?;
            write_u64(w, s.counts.len() as u64)?;
            for (&v, &n) in &s.counts {
                write_i64(w, v)?;
                write_u64(w, n)?;
            }
        }

        write_str(w, "estimator")?;
        match &self.data {
            EstimatorData::TrueScan { tables } => {
                write_u64(w, tables.len() as u64)?;
                for t in tables.values() {
                    write_table(w, t)?;
                }
            }
            EstimatorData::Sample { samples } => {
                write_u64(w, samples.len() as u64)?;
                for s in samples.values() {
                    write_sample(w, s)?;
                }
            }
            EstimatorData::ChowLiu { trees, fallback } => {
                write_u64(w, trees.len() as u64)?;
                for (name, t) in trees {
                    write_str(w, name)?;
                    write_tree(w, t)?;
                }
                write_u64(w, fallback.len() as u64)?;
                for s in fallback.values() {
                    write_sample(w, s)?;
                }
            }
        }
        Ok(out)
    }

    /// Write the model atomically (temp file + rename), holding an advisory
    /// lock file for the duration. A leftover lock from a crashed writer
    /// must be removed by hand; concurrent writers error out cleanly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let lock = append_lock(path);
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(_) => {}
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(Error::Model(format!(
                    "model is locked by another writer ({})",
                    lock.display()
                )));
            }
            Err(e) => return Err(e.into()),
        }
        let _guard = LockGuard(lock);
        let bytes = self.encode()?;
        let tmp = append_tmp(path);
        std::fs::write(&tmp, &bytes)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Model> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Model(format!("cannot open {}: {e}", path.display())))?;
        let mut r = BufReader::new(file);
        let mut header_line = String::new();
        r.read_line(&mut header_line)?;
        let header: serde_json::Value = serde_json::from_str(header_line.trim())
            .map_err(|e| Error::Model(format!("bad model header: {e}")))?;
        if header["format"].as_str() != Some(FORMAT_NAME) {
            return Err(Error::Model("not a model file".into()));
        }
        let version = header["version"].as_u64().unwrap_or(0);
        if version != FORMAT_VERSION {
            return Err(Error::Model(format!(
                "model format version {version} unsupported (expected {FORMAT_VERSION})"
            )));
        }
        let updates = header["updates"].as_u64().unwrap_or(0);
        let kind: EstimatorKind = header["estimator"]
            .as_str()
            .unwrap_or("")
            .parse()
            .map_err(|_| Error::Model("model header names no estimator".into()))?;

        let expect = |r: &mut BufReader<std::fs::File>, name: &str| -> Result<()> {
            let got = read_str(r)?;
            if got != name {
                return Err(Error::Model(format!(
                    "corrupt model: expected section `{name}`, found `{got}`"
                )));
            }
            Ok(())
        };

        expect(&mut r, "catalog")?;
        let catalog: Catalog = serde_json::from_slice(&read_bytes(&mut r)?)
            .map_err(|e| Error::Model(format!("corrupt catalog: {e}")))?;
        expect(&mut r, "config")?;
        let config: RunConfig = serde_json::from_slice(&read_bytes(&mut r)?)
            .map_err(|e| Error::Model(format!("corrupt config: {e}")))?;
        expect(&mut r, "digests")?;
        let digests: BTreeMap<String, String> =
            serde_json::from_slice(&read_bytes(&mut r)?)
                .map_err(|e| Error::Model(format!("corrupt digests: {e}")))?;
        expect(&mut r, "rows")?;
        let table_rows: BTreeMap<String, u64> = serde_json::from_slice(&read_bytes(&mut r)?)
            .map_err(|e| Error::Model(format!("corrupt row counts: {e}")))?;

        expect(&mut r, "binmaps")?;
        let nmaps = read_len(&mut r, 1 << 20)?;
        let mut binmaps = BTreeMap::new();
        for _ in 0..nmaps {
            let group_id = read_len(&mut r, 1 << 32)?;
            let strategy: Strategy = read_str(&mut r)?
                .parse()
                .map_err(|_| Error::Model("corrupt bin map strategy".into()))?;
            let budget = read_len(&mut r, 1 << 32)?;
            let nvals = read_len(&mut r, 1 << 33)?;
            let mut assignment = BTreeMap::new();
            for _ in 0..nvals {
                let v = read_i64(&mut r)?;
                let b = read_u64(&mut r)? as u32;
                assignment.insert(v, b);
            }
            binmaps
                .insert(group_id, BinMap::from_parts(group_id, strategy, budget, assignment));
        }

        expect(&mut r, "summaries")?;
        let nsums = read_len(&mut r, 1 << 24)?;
        let mut summaries = BTreeMap::new();
        for _ in 0..nsums {
            let t = read_str(&mut r)?;
            let c = read_str(&mut r)?;
            let totals = read_u64s(&mut r)?;
            let mfv = read_u64s(&mut r)?;
            let ndv = read_u64s(&mut r)?;
            summaries.insert((t, c), BinSummary { totals, mfv, ndv });
        }

        expect(&mut r, "stores")?;
        let nstores = read_len(&mut r, 1 << 24)?;
        let mut stores = BTreeMap::new();
        for _ in 0..nstores {
            let t = read_str(&mut r)?;
            let c = read_str(&mut r)?;
            let nulls = read_u64(&mut r)?;
            let nvals = read_len(&mut r, 1 << 33)?;
            let mut counts = BTreeMap::new();
            for _ in 0..nvals {
                let v = read_i64(&mut r)?;
                let n = read_u64(&mut r)?;
                counts.insert(v, n);
            }
            stores.insert((t, c), ValueCountStore { counts, nulls });
        }

        expect(&mut r, "estimator")?;
        let data = match kind {
            EstimatorKind::TrueScan => {
                let n = read_len(&mut r, 1 << 20)?;
                let mut tables = BTreeMap::new();
                for _ in 0..n {
                    let t = read_table(&mut r)?;
                    tables.insert(t.name.clone(), t);
                }
                EstimatorData::TrueScan { tables }
            }
            EstimatorKind::Sample => {
                let n = read_len(&mut r, 1 << 20)?;
                let mut samples = BTreeMap::new();
                for _ in 0..n {
                    let s = read_sample(&mut r)?;
                    samples.insert(s.table.clone(), s);
                }
                EstimatorData::Sample { samples }
            }
            EstimatorKind::ChowLiu => {
                let n = read_len(&mut r, 1 << 20)?;
                let mut trees = BTreeMap::new();
                for _ in 0..n {
                    let name = read_str(&mut r)?;
                    trees.insert(name, read_tree(&mut r)?);
                }
                let n = read_len(&mut r, 1 << 20)?;
                let mut fallback = BTreeMap::new();
                for _ in 0..n {
                    let s = read_sample(&mut r)?;
                    fallback.insert(s.table.clone(), s);
                }
                EstimatorData::ChowLiu { trees, fallback }
            }
        };

        let mut tail = [0u8; 1];
        if r.read(&mut tail)? != 0 {
            return Err(Error::Model("corrupt model: trailing bytes".into()));
        }

        Ok(Model {
            catalog,
            config,
            digests,
            updates,
            binmaps,
            summaries,
            stores,
            table_rows,
            data,
            memo: RefCell::new(HashMap::new()),
        })
    }
}

// ---------------------------------------------------------------------------
// Delta updates.

/// One table's pending changes, already ingested against the schema.
pub struct TableDelta {
    pub inserts: Option<LoadedTable>,
    pub deletes: Option<LoadedTable>,
}

/// What an update did.
#[derive(Debug, Clone, Serialize)]
pub struct UpdateReport {
    pub inserted: BTreeMap<String, usize>,
    pub deleted: BTreeMap<String, usize>,
    pub warnings: Vec<String>,
}

/// Cell-exact row match against `table` (all columns equal); used to locate
/// deleted rows.
fn rows_equal(a: &LoadedTable, ra: usize, b: &LoadedTable, rb: usize) -> bool {
    a.columns.iter().zip(&b.columns).all(|(ca, cb)| match (ca, cb) {
        (ColumnData::Int(x), ColumnData::Int(y)) => x[ra] == y[rb],
        (ColumnData::Float(x), ColumnData::Float(y)) => match (x[ra], y[rb]) {
            (Some(p), Some(q)) => p.to_bits() == q.to_bits(),
            (None, None) => true,
            _ => false,
        },
        (ColumnData::Text(x), ColumnData::Text(y)) => x[ra] == y[rb],
        // Dictionary codes are content-determined, so code equality is
        // string equality.
        (ColumnData::DictKey { codes: x, .. }, ColumnData::DictKey { codes: y, .. }) => {
            x[ra] == y[rb]
        }
        _ => false,
    })
}

/// Remove each row of `gone` from `table` (one occurrence per delta row).
/// Errors when a row has no remaining match.
fn remove_rows(table: &LoadedTable, gone: &LoadedTable) -> Result<LoadedTable> {
    let mut alive: Vec<bool> = vec![true; table.rows];
    for dr in 0..gone.rows {
        let found = (0..table.rows).find(|&r| alive[r] && rows_equal(table, r, gone, dr));
        match found {
            Some(r) => alive[r] = false,
            None => {
                return Err(Error::Ingest(format!(
                    "table `{}`: delete row {} matches no stored row",
                    table.name,
                    dr + 1
                )))
            }
        }
    }
    let keep: Vec<usize> = (0..table.rows).filter(|&r| alive[r]).collect();
    Ok(take_rows(table, &keep))
}

/// Append `add`'s rows to `table`.
fn append_rows(table: &LoadedTable, add: &LoadedTable) -> LoadedTable {
    let columns = table
        .columns
        .iter()
        .zip(&add.columns)
        .map(|(a, b)| match (a, b) {
            (ColumnData::Int(x), ColumnData::Int(y)) => {
                let mut v = x.clone();
                v.extend_from_slice(y);
                ColumnData::Int(v)
            }
            (ColumnData::Float(x), ColumnData::Float(y)) => {
                let mut v = x.clone();
                v.extend_from_slice(y);
                ColumnData::Float(v)
            }
            (ColumnData::Text(x), ColumnData::Text(y)) => {
                let mut v = x.clone();
                v.extend_from_slice(y);
                ColumnData::Text(v)
            }
            (ColumnData::DictKey { codes: x, dict }, ColumnData::DictKey { codes: y, .. }) => {
                ColumnData::DictKey {
                    codes: {
                        let mut v = x.clone();
                        v.extend_from_slice(y);
                        v
                    },
                    dict: dict.clone(),
                }
            }
            _ => unreachable!("same schema, same column layout"),
        })
        .collect();
    LoadedTable {
        name: table.name.clone(),
        columns,
        rows: table.rows + add.rows,
    }
}

/// Best-effort removal for samples: drop rows matching deleted rows when
/// present, silently keep going when not (the sample is a subset).
fn remove_rows_lenient(table: &LoadedTable, gone: &LoadedTable) -> LoadedTable {
    let mut alive: Vec<bool> = vec![true; table.rows];
    for dr in 0..gone.rows {
        if let Some(r) = (0..table.rows).find(|&r| alive[r] && rows_equal(table, r, gone, dr)) {
            alive[r] = false;
        }
    }
    let keep: Vec<usize> = (0..table.rows).filter(|&r| alive[r]).collect();
    take_rows(table, &keep)
}

impl Model {
    /// Apply per-table deltas: stores and summaries update exactly under
    /// frozen bins; estimator artifacts update per kind (scan data edited in
    /// place, samples extended with a fresh draw over the inserted rows,
    /// tree counts adjusted row by row). Bumps the update counter.
    pub fn apply_delta(&mut self, deltas: &BTreeMap<String, TableDelta>) -> Result<UpdateReport> {
        let mut report = UpdateReport {
            inserted: BTreeMap::new(),
            deleted: BTreeMap::new(),
            warnings: Vec::new(),
        };
        let round = self.updates + 1;
        for (name, delta) in deltas {
            let (ti, _) = self.def_of(name)?;
            let keys = key_columns_of(&self.catalog, ti);

            // Exact count bookkeeping first: deletions of rows the model
            // never saw must fail before anything mutates. Validate against
            // a scratch copy, then commit.
            let mut scratch: Vec<((String, String), ValueCountStore)> = Vec::new();
            for &(ci, _) in &keys {
                let cname = self.catalog.tables[ti].columns[ci].name.clone();
                let key = (name.clone(), cname);
                scratch.push((key.clone(), self.stores[&key].clone()));
            }
            if let Some(del) = &delta.deletes {
                for (slot, &(ci, _)) in scratch.iter_mut().zip(&keys) {
                    for row in 0..del.rows {
                        match del.columns[ci].key_value(row) {
                            Some(v) => slot.1.delete_value(v).map_err(|_| {
                                Error::Ingest(format!(
                                    "table `{name}`: delete of key value {v} that no stored row has"
                                ))
                            })?,
                            None => {
                                slot.1.nulls =
                                    slot.1.nulls.checked_sub(1).ok_or_else(|| {
                                        Error::Ingest(format!(
                                            "table `{name}`: delete of a null key the model does not hold"
                                        ))
                                    })?;
                            }
                        }
                    }
                }
            }
            if let Some(ins) = &delta.inserts {
                for (slot, &(ci, _)) in scratch.iter_mut().zip(&keys) {
                    for row in 0..ins.rows {
                        match ins.columns[ci].key_value(row) {
                            Some(v) => slot.1.insert_value(v),
                            None => slot.1.nulls += 1,
                        }
                    }
                }
            }

            let added = delta.inserts.as_ref().map_or(0, |t| t.rows);
            let removed = delta.deletes.as_ref().map_or(0, |t| t.rows);
            let rows = self.table_rows.get_mut(name).expect("table known");
            *rows = rows
                .checked_add(added as u64)
                .and_then(|r| r.checked_sub(removed as u64))
                .ok_or_else(|| {
                    Error::Ingest(format!("table `{name}`: delta deletes more rows than exist"))
                })?;

            // Estimator artifacts.
            match &mut self.data {
                EstimatorData::TrueScan { tables } => {
                    let t = tables
                        .get_mut(name)
                        .ok_or_else(|| Error::Model(format!("no data for table `{name}`")))?;
                    if let Some(del) = &delta.deletes {
                        *t = remove_rows(t, del)?;
                    }
                    if let Some(ins) = &delta.inserts {
                        *t = append_rows(t, ins);
                    }
                }
                EstimatorData::Sample { samples } => {
                    update_sample(samples, name, delta, self.config.seed, round)?;
                }
                EstimatorData::ChowLiu { trees, fallback } => {
                    if let Some(tree) = trees.get_mut(name) {
                        let maps: BTreeMap<usize, &BinMap> = keys
                            .iter()
                            .map(|&(ci, gid)| (ci, &self.binmaps[&gid]))
                            .collect();
                        if let Some(del) = &delta.deletes {
                            tree.apply_rows(del, &maps, -1).map_err(|e| {
                                Error::Ingest(format!("table `{name}`: {e}"))
                            })?;
                        }
                        if let Some(ins) = &delta.inserts {
                            tree.apply_rows(ins, &maps, 1)?;
                        }
                    }
                    update_sample(fallback, name, delta, self.config.seed, round)?;
                }
            }

            // Commit stores, then rebuild the touched summaries under the
            // frozen bin maps (new values route to their nearest bin).
            for (key, store) in scratch {
                self.stores.insert(key, store);
            }
            for &(ci, gid) in &keys {
                let cname = self.catalog.tables[ti].columns[ci].name.clone();
                let key = (name.clone(), cname);
                let bm = self.binmaps.get_mut(&gid).expect("group map");
                let s = summarize(&self.stores[&key], bm);
                self.summaries.insert(key, s);
            }

            if added > 0 {
                report.inserted.insert(name.clone(), added);
            }
            if removed > 0 {
                report.deleted.insert(name.clone(), removed);
            }
        }
        self.updates = round;
        self.memo.borrow_mut().clear();
        Ok(report)
    }

    /// Apply a delta directory: `<table>.insert.csv` files append rows,
    /// `<table>.delete.csv` files (schema columns plus a `__delete` marker
    /// column holding `1`) remove them. An optional `manifest.json` with
    /// `{"base_digests": {table: sha256}}` cross-checks what the delta was
    /// built against; mismatches warn but never fail.
    pub fn update_from_dir(&mut self, dir: &Path) -> Result<UpdateReport> {
        let mut deltas: BTreeMap<String, TableDelta> = BTreeMap::new();
        let mut warnings = Vec::new();
        let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .collect();
        entries.sort();
        for path in entries {
            let Some(fname) = path.file_name().and_then(|n| n.to_str()) else { continue };
            if fname == "manifest.json" {
                #[derive(Deserialize)]
                struct Manifest {
                    #[serde(default)]
                    base_digests: BTreeMap<String, String>,
                }
                let m: Manifest = serde_json::from_slice(&std::fs::read(&path)?)
                    .map_err(|e| Error::Ingest(format!("manifest.json: {e}")))?;
                for (table, digest) in m.base_digests {
                    match self.digests.get(&table) {
                        Some(have) if *have == digest => {}
                        Some(have) => warnings.push(format!(
                            "table `{table}`: delta was built against data with digest \
                             {digest}, model was trained on {have}"
                        )),
                        None => warnings.push(format!(
                            "table `{table}`: manifest names a table the model has no digest for"
                        )),
                    }
                }
                continue;
            }
            let Some(rest) = fname.strip_suffix(".csv") else { continue };
            let (table, is_delete) = match rest.strip_suffix(".insert") {
                Some(t) => (t, false),
                None => match rest.strip_suffix(".delete") {
                    Some(t) => (t, true),
                    None => {
                        return Err(Error::Ingest(format!(
                            "unrecognized delta file `{fname}` (expected \
                             <table>.insert.csv or <table>.delete.csv)"
                        )))
                    }
                },
            };
            let (_, def) = self.def_of(table)?;
            let bytes = std::fs::read(&path)?;
            let slot = deltas
                .entry(table.to_string())
                .or_insert(TableDelta { inserts: None, deletes: None });
            if is_delete {
                let mut marked = def.clone();
                marked.columns.push(ColumnDef {
                    name: "__delete".into(),
                    kind: ColumnKind::Integer,
                });
                let full = ingest_table(&marked, bytes.as_slice())?;
                let marker = full.columns.last().expect("marker column");
                for row in 0..full.rows {
                    match marker {
                        ColumnData::Int(v) if v[row] == Some(1) => {}
                        _ => {
                            return Err(Error::Ingest(format!(
                                "{fname} row {}: `__delete` must be 1",
                                row + 1
                            )))
                        }
                    }
                }
                slot.deletes = Some(LoadedTable {
                    name: def.name.clone(),
                    columns: full.columns[..full.columns.len() - 1].to_vec(),
                    rows: full.rows,
                });
            } else {
                slot.inserts = Some(ingest_table(def, bytes.as_slice())?);
            }
        }
        let mut report = self.apply_delta(&deltas)?;
        report.warnings.extend(warnings);
        Ok(report)
    }
}

/// Shared sample-update step: drop deleted rows that happen to be in the
/// sample, then extend it with a fresh draw over the inserted rows at the
/// sample's own rate.
fn update_sample(
    samples: &mut BTreeMap<String, Sample>,
    name: &str,
    delta: &TableDelta,
    seed: u64,
    round: u64,
) -> Result<()> {
    let s = samples
        .get_mut(name)
        .ok_or_else(|| Error::Model(format!("no sample for table `{name}`")))?;
    if let Some(del) = &delta.deletes {
        s.rows = remove_rows_lenient(&s.rows, del);
    }
    if let Some(ins) = &delta.inserts {
        let def = TableDef { name: name.to_string(), columns: vec![] };
        let fresh = build_sample(ins, &def, s.rate, sample_seed(seed, round, name))?;
        s.rows = append_rows(&s.rows, &fresh.rows);
    }
    Ok(())
}
