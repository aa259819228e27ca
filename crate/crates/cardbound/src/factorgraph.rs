//! The inference core: turn a resolved query into per-alias factors over
//! binned join-key domains, then eliminate join variables one at a time,
//! producing a cardinality upper bound.
//!
//! Each factor holds a mass array over its variables' bins (every axis has
//! one extra slot for rows whose key is null) plus, per axis, a per-bin cap:
//! the most-frequent-value count of that key, never recomputed under
//! filters. Eliminating a variable combines the incident factors bin by bin:
//! the joined mass in a bin is at most `min_f(mass_f / cap_f) · Π_f cap_f`,
//! because no single key value can carry more than `cap_f` rows of factor
//! `f`. Bins whose cap is zero contribute nothing. Summing that bound over
//! the variable's real bins (nulls never join) yields a new factor over the
//! remaining variables, and the final scalar is the estimate.

use std::collections::BTreeSet;
use std::collections::{BTreeMap, VecDeque};
use std::rc::Rc;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::catalog::Catalog;
use crate::estimators::ConditionalBinDistribution;
use crate::predicate::Predicate;
use crate::queryir::{build_join_graph, enumerate_subplans, JoinGraph, QueryIR};
use crate::{Error, Result};

/// One join variable as seen from one table: the equated columns and the
/// key group whose bin map applies.
#[derive(Debug, Clone)]
pub struct KeyRef<'a> {
    pub var: u32,
    pub group: usize,
    pub columns: Vec<&'a str>,
}

/// Supplies per-table statistics to the estimation engine. A trained model
/// implements this once per estimator; tests implement it over raw tables.
pub trait FactorSource {
    fn catalog(&self) -> &Catalog;

    /// Estimator tag carried into reports (e.g. `truescan`).
    fn label(&self) -> String;

    /// Bin count in use for a key group.
    fn bin_budget(&self, group: usize) -> usize;

    /// Binned mass of `table`'s (filtered) rows over one or two join keys.
    fn distribution(
        &self,
        table: &str,
        keys: &[KeyRef<'_>],
        filter: Option<&Predicate>,
    ) -> Result<ConditionalBinDistribution>;

    /// Number of rows of `table` passing `filter` (all rows when `None`).
    fn filtered_total(&self, table: &str, filter: Option<&Predicate>) -> Result<f64>;

    fn table_rows(&self, table: &str) -> Result<f64>;

    /// Per-bin distinct-value counts for a key (element-wise minimum over
    /// the key's columns), used by the uniformity-rule baselines.
    fn bin_ndv(&self, table: &str, key: &KeyRef<'_>) -> Result<Vec<f64>>;

    /// Optional spanning structure (edges over indices into `keys`) used to
    /// factorize a table carrying three or more join keys. `None` means a
    /// chain in key order.
    fn factor_edges(
        &self,
        _table: &str,
        _keys: &[KeyRef<'_>],
    ) -> Result<Option<Vec<(usize, usize)>>> {
        Ok(None)
    }
}

/// A mass array over zero or more join variables, with per-axis per-bin
/// caps. The last slot of every axis holds rows whose key is null (or can
/// never satisfy the key's column equality); caps and distinct-value counts
/// cover real bins only.
#[derive(Debug, Clone)]
pub struct Factor {
    /// Ascending variable ids, one per axis.
    pub vars: Vec<u32>,
    /// Slots per axis: the variable's bin count plus the null slot.
    pub dims: Vec<usize>,
    /// Row-major mass; length `Π dims` (1 when there are no axes).
    pub mass: Vec<f64>,
    /// Per axis: per-real-bin most-frequent-value caps.
    pub caps: Vec<Vec<f64>>,
    /// Per axis: per-real-bin distinct-value counts.
    pub ndv: Vec<Vec<f64>>,
    /// Aliases whose rows this factor accounts for.
    pub provenance: BTreeSet<String>,
    /// Stable label; also the deterministic tie-break for fold order.
    pub source: String,
}

impl Factor {
    fn scalar(total: f64, alias: &str) -> Factor {
        Factor {
            vars: Vec::new(),
            dims: Vec::new(),
            mass: vec![total],
            caps: Vec::new(),
            ndv: Vec::new(),
            provenance: BTreeSet::from([alias.to_string()]),
            source: format!("b:{alias}"),
        }
    }

    fn axis_of(&self, var: u32) -> Option<usize> {
        self.vars.iter().position(|&v| v == var)
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1usize; self.dims.len()];
        for i in (0..self.dims.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.dims[i + 1];
        }
        s
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }
}

/// Advance a mixed-radix counter (last axis fastest); false on wrap-around.
fn advance(cfg: &mut [usize], dims: &[usize]) -> bool {
    for i in (0..dims.len()).rev() {
        cfg[i] += 1;
        if cfg[i] < dims[i] {
            return true;
        }
        cfg[i] = 0;
    }
    false
}

/// How eliminated bins combine across relations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Rule {
    /// Cap-bounded minimum: `min_f(mass_f/cap_f) · Π_f cap_f` per bin.
    Bound,
    /// Per-bin uniformity: `Π_f mass_f / max_f(ndv_f)^(m-1)` per bin.
    Uniformity,
}

/// Point-wise product over the union of axes. Only used for factor pieces
/// of one alias (identical provenance), where the pieces jointly factorize
/// the alias's key distribution and multiplying reassembles it.
fn product_join(a: Factor, b: Factor) -> Result<Factor> {
    let mut vars: Vec<u32> = a.vars.iter().chain(b.vars.iter()).copied().collect();
    vars.sort_unstable();
    vars.dedup();
    let mut dims = Vec::with_capacity(vars.len());
    for &v in &vars {
        let da = a.axis_of(v).map(|i| a.dims[i]);
        let db = b.axis_of(v).map(|i| b.dims[i]);
        let d = match (da, db) {
            (Some(x), Some(y)) if x != y => {
                return Err(Error::Estimate(format!(
                    "inconsistent bin maps for variable v{v}"
                )))
            }
            (Some(x), _) => x,
            (_, Some(y)) => y,
            (None, None) => unreachable!(),
        };
        dims.push(d);
    }
    let proj = |f: &Factor| -> Vec<(usize, usize)> {
        let strides = f.strides();
        f.vars
            .iter()
            .enumerate()
            .map(|(ax, v)| (vars.binary_search(v).unwrap(), strides[ax]))
            .collect()
    };
    let pa = proj(&a);
    let pb = proj(&b);
    let len = dims.iter().product::<usize>().max(1);
    let mut mass = vec![0.0; len];
    let mut cfg = vec![0usize; dims.len()];
    let mut out = 0usize;
    loop {
        let ia: usize = pa.iter().map(|&(u, s)| cfg[u] * s).sum();
        let ib: usize = pb.iter().map(|&(u, s)| cfg[u] * s).sum();
        mass[out] = a.mass[ia] * b.mass[ib];
        out += 1;
        if !advance(&mut cfg, &dims) {
            break;
        }
    }
    let mut caps = Vec::with_capacity(vars.len());
    let mut ndv = Vec::with_capacity(vars.len());
    for &v in &vars {
        let ca = a.axis_of(v).map(|ax| &a.caps[ax]);
        let cb = b.axis_of(v).map(|ax| &b.caps[ax]);
        caps.push(match (ca, cb) {
            (Some(x), Some(y)) => x.iter().zip(y.iter()).map(|(p, q)| p * q).collect(),
            (Some(x), None) => x.clone(),
            (None, Some(y)) => y.clone(),
            (None, None) => unreachable!(),
        });
        let na = a.axis_of(v).map(|ax| &a.ndv[ax]);
        let nb = b.axis_of(v).map(|ax| &b.ndv[ax]);
        ndv.push(match (na, nb) {
            (Some(x), Some(y)) => x.iter().zip(y.iter()).map(|(p, q)| p.min(*q)).collect(),
            (Some(x), None) => x.clone(),
            (None, Some(y)) => y.clone(),
            (None, None) => unreachable!(),
        });
    }
    let mut provenance = a.provenance.clone();
    provenance.extend(b.provenance.iter().cloned());
    Ok(Factor {
        vars,
        dims,
        mass,
        caps,
        ndv,
        provenance,
        source: format!("({}*{})", a.source, b.source),
    })
}

/// Sum a factor over one axis. With `include_null` unset only real bins are
/// added (null rows cannot join); set, the null slot is added too, which is
/// the collapse a stand-alone build performs on a key that is not joined.
fn marginalize_axis(f: Factor, v: u32, include_null: bool) -> Factor {
    let ax = f.axis_of(v).expect("axis present");
    let k = if include_null { f.dims[ax] } else { f.dims[ax] - 1 };
    let strides = f.strides();
    let vstride = strides[ax];
    let vars: Vec<u32> = f.vars.iter().copied().filter(|&x| x != v).collect();
    let dims: Vec<usize> = f
        .dims
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != ax)
        .map(|(_, &d)| d)
        .collect();
    let proj: Vec<(usize, usize)> = f
        .vars
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != ax)
        .enumerate()
        .map(|(out_ax, (in_ax, _))| (out_ax, strides[in_ax]))
        .collect();
    let len = dims.iter().product::<usize>().max(1);
    let mut mass = vec![0.0; len];
    let mut cfg = vec![0usize; dims.len()];
    let mut oi = 0usize;
    loop {
        let base: usize = proj.iter().map(|&(u, s)| cfg[u] * s).sum();
        let mut acc = 0.0;
        for b in 0..k {
            acc += f.mass[base + vstride * b];
        }
        mass[oi] = acc;
        oi += 1;
        if !advance(&mut cfg, &dims) {
            break;
        }
    }
    let caps = f
        .caps
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != ax)
        .map(|(_, c)| c.clone())
        .collect();
    let ndv = f
        .ndv
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != ax)
        .map(|(_, c)| c.clone())
        .collect();
    Factor {
        vars,
        dims,
        mass,
        caps,
        ndv,
        provenance: f.provenance.clone(),
        source: if include_null {
            format!("({}-v{})", f.source, v)
        } else {
            format!("({}/v{})", f.source, v)
        },
    }
}

/// Combine ≥ 2 alias-level factors on one shared variable and sum it out.
///
/// Per real bin `b` of the variable and per configuration of all other
/// axes, the joined mass is bounded by the least mass-to-cap ratio among
/// the factors times the product of their caps; a zero cap kills the bin.
/// A surviving axis's new cap is the product of the caps of the factors
/// that carry it, times, for each factor that does not, that factor's
/// largest cap over the eliminated variable's bins (its worst-case
/// per-value duplication).
fn compose_groups(groups: &[Factor], v: u32, rule: Rule) -> Result<Factor> {
    let m = groups.len();
    let vaxes: Vec<usize> = groups.iter().map(|g| g.axis_of(v).unwrap()).collect();
    let slots = groups[0].dims[vaxes[0]];
    if groups.iter().zip(&vaxes).any(|(g, &ax)| g.dims[ax] != slots) {
        return Err(Error::Estimate(format!(
            "inconsistent bin maps for variable v{v}"
        )));
    }
    let k = slots - 1;
    let mut vars: Vec<u32> = groups
        .iter()
        .flat_map(|g| g.vars.iter().copied())
        .filter(|&x| x != v)
        .collect();
    vars.sort_unstable();
    vars.dedup();
    let mut dims = Vec::with_capacity(vars.len());
    for &x in &vars {
        let mut d = None;
        for g in groups {
            if let Some(ax) = g.axis_of(x) {
                match d {
                    None => d = Some(g.dims[ax]),
                    Some(p) if p != g.dims[ax] => {
                        return Err(Error::Estimate(format!(
                            "inconsistent bin maps for variable v{x}"
                        )))
                    }
                    _ => {}
                }
            }
        }
        dims.push(d.unwrap());
    }
    // Per group: stride of the eliminated axis and projections of survivors.
    struct Plan {
        vstride: usize,
        vaxis: usize,
        proj: Vec<(usize, usize)>,
    }
    let plans: Vec<Plan> = groups
        .iter()
        .zip(&vaxes)
        .map(|(g, &vaxis)| {
            let strides = g.strides();
            let proj = g
                .vars
                .iter()
                .enumerate()
                .filter(|&(_, &x)| x != v)
                .map(|(ax, x)| (vars.binary_search(x).unwrap(), strides[ax]))
                .collect();
            Plan { vstride: strides[vaxis], vaxis, proj }
        })
        .collect();
    let len = dims.iter().product::<usize>().max(1);
    let mut mass = vec![0.0; len];
    let mut bases = vec![0usize; m];
    let mut cfg = vec![0usize; dims.len()];
    let mut oi = 0usize;
    loop {
        for (gi, plan) in plans.iter().enumerate() {
            bases[gi] = plan.proj.iter().map(|&(u, s)| cfg[u] * s).sum();
        }
        let mut acc = 0.0;
        match rule {
            Rule::Bound => {
                for b in 0..k {
                    let mut ratio = f64::INFINITY;
                    let mut capprod = 1.0;
                    let mut dead = false;
                    for (gi, g) in groups.iter().enumerate() {
                        let cap = g.caps[plans[gi].vaxis][b];
                        if cap <= 0.0 {
                            dead = true;
                            break;
                        }
                        let r = g.mass[bases[gi] + plans[gi].vstride * b] / cap;
                        if r < ratio {
                            ratio = r;
                        }
                        capprod *= cap;
                    }
                    if !dead && ratio > 0.0 {
                        acc += ratio * capprod;
                    }
                }
            }
            Rule::Uniformity => {
                for b in 0..k {
                    let mut prod = 1.0;
                    let mut dmax = 0.0f64;
                    for (gi, g) in groups.iter().enumerate() {
                        prod *= g.mass[bases[gi] + plans[gi].vstride * b];
                        let d = g.ndv[plans[gi].vaxis][b];
                        if d > dmax {
                            dmax = d;
                        }
                    }
                    if prod > 0.0 && dmax > 0.0 {
                        acc += prod / dmax.powi((m - 1) as i32);
                    }
                }
            }
        }
        mass[oi] = acc;
        oi += 1;
        if !advance(&mut cfg, &dims) {
            break;
        }
    }
    let mut caps = Vec::with_capacity(vars.len());
    let mut ndv = Vec::with_capacity(vars.len());
    for (i, &x) in vars.iter().enumerate() {
        let reald = dims[i] - 1;
        let mut cvec = vec![1.0f64; reald];
        let mut dvec = vec![f64::INFINITY; reald];
        let mut outside = 1.0f64;
        for (gi, g) in groups.iter().enumerate() {
            if let Some(ax) = g.axis_of(x) {
                for (b, val) in g.caps[ax].iter().enumerate() {
                    cvec[b] *= *val;
                }
                for (b, val) in g.ndv[ax].iter().enumerate() {
                    if *val < dvec[b] {
                        dvec[b] = *val;
                    }
                }
            } else {
                let mc = g.caps[plans[gi].vaxis].iter().cloned().fold(0.0, f64::max);
                outside *= mc;
            }
        }
        caps.push(cvec.into_iter().map(|c| c * outside).collect());
        ndv.push(
            dvec.into_iter()
                .map(|d| if d.is_finite() { d } else { 0.0 })
                .collect(),
        );
    }
    let mut provenance = BTreeSet::new();
    for g in groups {
        provenance.extend(g.provenance.iter().cloned());
    }
    let joined: Vec<&str> = groups.iter().map(|g| g.source.as_str()).collect();
    Ok(Factor {
        vars,
        dims,
        mass,
        caps,
        ndv,
        provenance,
        source: format!("({})/v{}", joined.join("+"), v),
    })
}

/// Eliminate one variable from a factor list. Pieces with identical
/// provenance (one alias's factorization) are first multiplied back
/// together; distinct relations then combine under `rule`. A variable
/// carried by a single relation is simply summed over its real bins.
fn eliminate(
    factors: Vec<Factor>,
    v: u32,
    rule: Rule,
    steps: &mut Option<Vec<Value>>,
) -> Result<Vec<Factor>> {
    let (incident, mut rest): (Vec<Factor>, Vec<Factor>) =
        factors.into_iter().partition(|f| f.axis_of(v).is_some());
    if incident.is_empty() {
        return Err(Error::Estimate(format!(
            "no factor carries variable v{v}"
        )));
    }
    let inputs: Vec<String> = {
        let mut s: Vec<String> = incident.iter().map(|f| f.source.clone()).collect();
        s.sort();
        s
    };
    let mut buckets: BTreeMap<Vec<String>, Vec<Factor>> = BTreeMap::new();
    for f in incident {
        buckets
            .entry(f.provenance.iter().cloned().collect())
            .or_default()
            .push(f);
    }
    let mut groups = Vec::with_capacity(buckets.len());
    for (_, mut fs) in buckets {
        fs.sort_by(|a, b| a.source.cmp(&b.source));
        let mut it = fs.into_iter();
        let mut acc = it.next().unwrap();
        for f in it {
            acc = product_join(acc, f)?;
        }
        groups.push(acc);
    }
    groups.sort_by(|a, b| a.source.cmp(&b.source));
    let result = if groups.len() == 1 {
        marginalize_axis(groups.pop().unwrap(), v, false)
    } else {
        compose_groups(&groups, v, rule)?
    };
    if let Some(steps) = steps {
        steps.push(json!({
            "variable": v,
            "inputs": inputs,
            "output": result.source,
            "total": result.total_mass(),
        }));
    }
    rest.push(result);
    Ok(rest)
}

/// Expand a one-key distribution into a factor with a null slot.
fn single_joint(
    src: &dyn FactorSource,
    table: &str,
    filter: Option<&Predicate>,
    key: &KeyRef<'_>,
    alias: &str,
) -> Result<Factor> {
    let cbd = src.distribution(table, std::slice::from_ref(key), filter)?;
    let k = cbd.dims[0];
    let mut mass = vec![0.0; k + 1];
    mass[..k].copy_from_slice(&cbd.mass);
    mass[k] = (cbd.filtered_total - cbd.total_mass()).max(0.0);
    Ok(Factor {
        vars: vec![key.var],
        dims: vec![k + 1],
        mass,
        caps: vec![cbd.mfv[0].iter().map(|&x| x as f64).collect()],
        ndv: vec![src.bin_ndv(table, key)?],
        provenance: BTreeSet::from([alias.to_string()]),
        source: format!("b:{alias}[v{}]", key.var),
    })
}

/// Expand a two-key distribution into a factor whose null row/column/corner
/// masses are recovered from the one-key marginals: a row counted for one
/// key but absent from the pair must be null in the other key.
fn pair_joint(
    src: &dyn FactorSource,
    table: &str,
    filter: Option<&Predicate>,
    ka: &KeyRef<'_>,
    kb: &KeyRef<'_>,
    alias: &str,
) -> Result<Factor> {
    debug_assert!(ka.var < kb.var);
    let pair = src.distribution(table, &[ka.clone(), kb.clone()], filter)?;
    let ma = src.distribution(table, std::slice::from_ref(ka), filter)?;
    let mb = src.distribution(table, std::slice::from_ref(kb), filter)?;
    let (p, q) = (pair.dims[0], pair.dims[1]);
    let mut mass = vec![0.0; (p + 1) * (q + 1)];
    let at = |a: usize, b: usize| a * (q + 1) + b;
    for a in 0..p {
        for b in 0..q {
            mass[at(a, b)] = pair.mass[a * q + b];
        }
    }
    for a in 0..p {
        let row: f64 = (0..q).map(|b| pair.mass[a * q + b]).sum();
        mass[at(a, q)] = (ma.mass[a] - row).max(0.0);
    }
    for b in 0..q {
        let col: f64 = (0..p).map(|a| pair.mass[a * q + b]).sum();
        mass[at(p, b)] = (mb.mass[b] - col).max(0.0);
    }
    let covered: f64 = mass.iter().sum();
    mass[at(p, q)] = (pair.filtered_total - covered).max(0.0);
    Ok(Factor {
        vars: vec![ka.var, kb.var],
        dims: vec![p + 1, q + 1],
        mass,
        caps: vec![
            pair.mfv[0].iter().map(|&x| x as f64).collect(),
            pair.mfv[1].iter().map(|&x| x as f64).collect(),
        ],
        ndv: vec![src.bin_ndv(table, ka)?, src.bin_ndv(table, kb)?],
        provenance: BTreeSet::from([alias.to_string()]),
        source: format!("b:{alias}[v{},v{}]", ka.var, kb.var),
    })
}

/// A child-given-parent piece of a multi-key factorization: the pair joint
/// normalized along the child axis per parent slot. Parent-axis caps become
/// 1 so that multiplying back onto the parent's factor leaves its caps
/// untouched; child-axis caps keep the child key's summary values.
fn conditional_factor(
    src: &dyn FactorSource,
    table: &str,
    filter: Option<&Predicate>,
    parent: &KeyRef<'_>,
    child: &KeyRef<'_>,
    alias: &str,
) -> Result<Factor> {
    let parent_first = parent.var < child.var;
    let (lo, hi) = if parent_first { (parent, child) } else { (child, parent) };
    let mut f = pair_joint(src, table, filter, lo, hi, alias)?;
    let (d0, d1) = (f.dims[0], f.dims[1]);
    if parent_first {
        for a in 0..d0 {
            let row: f64 = (0..d1).map(|b| f.mass[a * d1 + b]).sum();
            if row > 0.0 {
                for b in 0..d1 {
                    f.mass[a * d1 + b] /= row;
                }
            }
        }
        f.caps[0] = vec![1.0; d0 - 1];
        f.ndv[0] = vec![1.0; d0 - 1];
    } else {
        for b in 0..d1 {
            let col: f64 = (0..d0).map(|a| f.mass[a * d1 + b]).sum();
            if col > 0.0 {
                for a in 0..d0 {
                    f.mass[a * d1 + b] /= col;
                }
            }
        }
        f.caps[1] = vec![1.0; d1 - 1];
        f.ndv[1] = vec![1.0; d1 - 1];
    }
    f.source = format!("b:{alias}[v{}|v{}]", child.var, parent.var);
    Ok(f)
}

/// Root the factorization edges at key 0 and return `(parent, child)`
/// pairs in a deterministic breadth-first order.
fn orient_tree(n: usize, edges: &[(usize, usize)]) -> Result<Vec<(usize, usize)>> {
    if edges.len() != n - 1 || edges.iter().any(|&(a, b)| a >= n || b >= n || a == b) {
        return Err(Error::Estimate(
            "key factorization edges must form a spanning tree".into(),
        ));
    }
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    for list in &mut adj {
        list.sort_unstable();
    }
    let mut seen = vec![false; n];
    let mut out = Vec::with_capacity(n - 1);
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(p) = queue.pop_front() {
        for &c in &adj[p] {
            if !seen[c] {
                seen[c] = true;
                out.push((p, c));
                queue.push_back(c);
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Estimate(
            "key factorization edges must form a spanning tree".into(),
        ));
    }
    Ok(out)
}

fn scale_mass(f: &mut Factor, s: f64) {
    if s != 1.0 {
        for m in &mut f.mass {
            *m *= s;
        }
    }
}

/// Build the factor pieces for one alias over the given variables.
///
/// Zero keys yield a scalar (the filtered row count); one or two keys a
/// direct joint; three or more are factorized along a spanning tree of the
/// keys — an exact joint for the root edge, child-given-parent pieces for
/// the rest — keeping every piece at most two-dimensional.
///
/// With `scaled` set, masses come from the unconditioned distribution
/// multiplied by the filter's selectivity (independence of filter and key),
/// which is what the uniformity baselines assume.
fn build_alias_factors(
    src: &dyn FactorSource,
    alias: &str,
    table: &str,
    graph: &JoinGraph,
    vars: &[u32],
    filter: Option<&Predicate>,
    scaled: bool,
) -> Result<Vec<Factor>> {
    let keys: Vec<KeyRef<'_>> = vars
        .iter()
        .map(|&v| {
            let jv = &graph.vars[v as usize];
            KeyRef { var: v, group: jv.group, columns: jv.columns_of(alias) }
        })
        .collect();
    let scale = if scaled {
        let rows = src.table_rows(table)?;
        if rows > 0.0 {
            src.filtered_total(table, filter)? / rows
        } else {
            0.0
        }
    } else {
        1.0
    };
    let dist_filter = if scaled { None } else { filter };
    match keys.len() {
        0 => Ok(vec![Factor::scalar(
            src.filtered_total(table, filter)?,
            alias,
        )]),
        1 => {
            let mut f = single_joint(src, table, dist_filter, &keys[0], alias)?;
            scale_mass(&mut f, scale);
            Ok(vec![f])
        }
        2 => {
            let mut f = pair_joint(src, table, dist_filter, &keys[0], &keys[1], alias)?;
            scale_mass(&mut f, scale);
            Ok(vec![f])
        }
        m => {
            let edges = match src.factor_edges(table, &keys)? {
                Some(e) => e,
                None => (0..m - 1).map(|i| (i, i + 1)).collect(),
            };
            let oriented = orient_tree(m, &edges)?;
            let (anchor_p, anchor_c) = oriented[0];
            let mut out = Vec::with_capacity(m - 1);
            let mut anchor =
                pair_joint(src, table, dist_filter, &keys[anchor_p], &keys[anchor_c], alias)?;
            scale_mass(&mut anchor, scale);
            out.push(anchor);
            for &(p, c) in &oriented[1..] {
                out.push(conditional_factor(
                    src, table, dist_filter, &keys[p], &keys[c], alias,
                )?);
            }
            Ok(out)
        }
    }
}

/// The per-alias factors of a query plus the slot count of every variable.
#[derive(Debug, Clone)]
pub struct FactorGraph {
    pub factors: Vec<Factor>,
    /// Variable id → axis slot count (bins + null).
    pub slots: BTreeMap<u32, usize>,
}

fn base_factors(
    ir: &QueryIR,
    graph: &JoinGraph,
    src: &dyn FactorSource,
    scaled: bool,
) -> Result<FactorGraph> {
    let mut factors = Vec::new();
    for (alias, table) in &ir.aliases {
        let vars: Vec<u32> = graph
            .alias_vars
            .get(alias)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default();
        factors.extend(build_alias_factors(
            src,
            alias,
            table,
            graph,
            &vars,
            ir.filters.get(alias),
            scaled,
        )?);
    }
    let mut slots = BTreeMap::new();
    for f in &factors {
        for (ax, &v) in f.vars.iter().enumerate() {
            match slots.get(&v) {
                None => {
                    slots.insert(v, f.dims[ax]);
                }
                Some(&d) if d != f.dims[ax] => {
                    return Err(Error::Estimate(format!(
                        "inconsistent bin maps for variable v{v}"
                    )))
                }
                _ => {}
            }
        }
    }
    Ok(FactorGraph { factors, slots })
}

/// Build the full factor graph for a query (one factor per alias, larger
/// key sets factorized into at-most-two-key pieces).
pub fn build_factor_graph(ir: &QueryIR, src: &dyn FactorSource) -> Result<FactorGraph> {
    let graph = build_join_graph(src.catalog(), ir)?;
    base_factors(ir, &graph, src, false)
}

/// Static elimination order: fewest incident relations first, ties by
/// ascending key group then variable id.
pub fn elimination_order(fg: &FactorGraph, graph: &JoinGraph) -> Vec<u32> {
    let mut degree: BTreeMap<u32, BTreeSet<&BTreeSet<String>>> = BTreeMap::new();
    for f in &fg.factors {
        for &v in &f.vars {
            degree.entry(v).or_default().insert(&f.provenance);
        }
    }
    let mut order: Vec<u32> = fg.slots.keys().copied().collect();
    order.sort_by_key(|v| {
        (
            degree.get(v).map(|s| s.len()).unwrap_or(0),
            graph.vars[*v as usize].group,
            *v,
        )
    });
    order
}

/// One estimated (sub-)query.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    /// Sorted aliases the estimate covers.
    pub aliases: Vec<String>,
    /// Probabilistic cardinality upper bound; non-negative and finite.
    pub estimate: f64,
    pub wall_time_ms: f64,
    pub estimator: String,
    /// Total configured bins across the key groups the query joins on.
    pub bin_budget: usize,
}

fn budget_of(graph: &JoinGraph, src: &dyn FactorSource) -> usize {
    let groups: BTreeSet<usize> = graph.vars.iter().map(|v| v.group).collect();
    groups.into_iter().map(|g| src.bin_budget(g)).sum()
}

struct RunOutput {
    value: f64,
    explain: Option<Value>,
}

fn run_query(
    ir: &QueryIR,
    graph: &JoinGraph,
    src: &dyn FactorSource,
    order_override: Option<&[u32]>,
    rule: Rule,
    scaled: bool,
    want_explain: bool,
) -> Result<RunOutput> {
    let fg = base_factors(ir, graph, src, scaled)?;
    let order: Vec<u32> = match order_override {
        Some(o) => {
            let need: BTreeSet<u32> = fg.slots.keys().copied().collect();
            let got: BTreeSet<u32> = o.iter().copied().collect();
            if got != need || o.len() != need.len() {
                return Err(Error::Estimate(
                    "elimination order must list each join variable exactly once".into(),
                ));
            }
            o.to_vec()
        }
        None => elimination_order(&fg, graph),
    };
    let mut explain_head = None;
    if want_explain {
        let variables: Vec<Value> = graph
            .vars
            .iter()
            .map(|v| {
                json!({
                    "id": v.id,
                    "group": v.group,
                    "members": v.members.iter().map(|(a, c)| json!([a, c])).collect::<Vec<_>>(),
                    "slots": fg.slots.get(&v.id),
                })
            })
            .collect();
        let factors: Vec<Value> = fg
            .factors
            .iter()
            .map(|f| {
                json!({
                    "source": f.source,
                    "aliases": f.provenance.iter().collect::<Vec<_>>(),
                    "vars": f.vars,
                    "dims": f.dims,
                    "mass": f.mass,
                    "caps": f.caps,
                })
            })
            .collect();
        explain_head = Some((variables, factors));
    }
    let mut steps = want_explain.then(Vec::new);
    let mut factors = fg.factors;
    for &v in &order {
        factors = eliminate(factors, v, rule, &mut steps)?;
    }
    let mut value = 1.0;
    for f in &factors {
        if !f.vars.is_empty() {
            return Err(Error::Estimate(
                "internal: a join variable survived elimination".into(),
            ));
        }
        value *= f.total_mass();
    }
    let explain = explain_head.map(|(variables, factors_json)| {
        json!({
            "variables": variables,
            "factors": factors_json,
            "order": order,
            "steps": steps.take().unwrap_or_default(),
            "estimate": value,
        })
    });
    Ok(RunOutput { value, explain })
}

fn report_for(
    aliases: Vec<String>,
    value: f64,
    started: Instant,
    graph: &JoinGraph,
    src: &dyn FactorSource,
) -> EstimateReport {
    EstimateReport {
        aliases,
        estimate: value,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        estimator: src.label(),
        bin_budget: budget_of(graph, src),
    }
}

/// Estimate an upper bound on the query's cardinality.
pub fn estimate(ir: &QueryIR, src: &dyn FactorSource) -> Result<EstimateReport> {
    let started = Instant::now();
    let graph = build_join_graph(src.catalog(), ir)?;
    let out = run_query(ir, &graph, src, None, Rule::Bound, false, false)?;
    Ok(report_for(
        ir.aliases.keys().cloned().collect(),
        out.value,
        started,
        &graph,
        src,
    ))
}

/// Like [`estimate`] but with a caller-chosen elimination order.
pub fn estimate_with_order(
    ir: &QueryIR,
    src: &dyn FactorSource,
    order: &[u32],
) -> Result<EstimateReport> {
    let started = Instant::now();
    let graph = build_join_graph(src.catalog(), ir)?;
    let out = run_query(ir, &graph, src, Some(order), Rule::Bound, false, false)?;
    Ok(report_for(
        ir.aliases.keys().cloned().collect(),
        out.value,
        started,
        &graph,
        src,
    ))
}

/// Like [`estimate`], also returning a JSON dump of the factor graph and
/// every elimination step.
pub fn estimate_explained(
    ir: &QueryIR,
    src: &dyn FactorSource,
) -> Result<(EstimateReport, Value)> {
    let started = Instant::now();
    let graph = build_join_graph(src.catalog(), ir)?;
    let out = run_query(ir, &graph, src, None, Rule::Bound, false, true)?;
    Ok((
        report_for(
            ir.aliases.keys().cloned().collect(),
            out.value,
            started,
            &graph,
            src,
        ),
        out.explain.unwrap(),
    ))
}

/// Baseline estimators built on per-bin histograms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinHistMode {
    /// Uniformity rule on independence-scaled masses.
    Classic,
    /// Cap-bounded rule on independence-scaled masses.
    WithBound,
    /// Uniformity rule on conditioned (filtered) masses.
    WithConditional,
}

impl std::fmt::Display for JoinHistMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            JoinHistMode::Classic => "classic",
            JoinHistMode::WithBound => "with_bound",
            JoinHistMode::WithConditional => "with_conditional",
        })
    }
}

impl std::str::FromStr for JoinHistMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classic" => Ok(JoinHistMode::Classic),
            "with_bound" => Ok(JoinHistMode::WithBound),
            "with_conditional" => Ok(JoinHistMode::WithConditional),
            other => Err(Error::Query(format!("unknown joinhist mode `{other}`"))),
        }
    }
}

/// Histogram-baseline estimate. Only acyclic join queries are supported.
pub fn joinhist_estimate(
    ir: &QueryIR,
    src: &dyn FactorSource,
    mode: JoinHistMode,
) -> Result<EstimateReport> {
    let started = Instant::now();
    let graph = build_join_graph(src.catalog(), ir)?;
    if graph.cyclic {
        return Err(Error::Estimate(
            "joinhist modes require an acyclic join query".into(),
        ));
    }
    let (rule, scaled) = match mode {
        JoinHistMode::Classic => (Rule::Uniformity, true),
        JoinHistMode::WithBound => (Rule::Bound, true),
        JoinHistMode::WithConditional => (Rule::Uniformity, false),
    };
    let out = run_query(ir, &graph, src, None, rule, scaled, false)?;
    Ok(report_for(
        ir.aliases.keys().cloned().collect(),
        out.value,
        started,
        &graph,
        src,
    ))
}

/// Sub-plan estimates for every connected alias subset, plus whether the
/// subset cap truncated the enumeration.
#[derive(Debug, Clone, Serialize)]
pub struct ProgressiveOutcome {
    pub reports: Vec<EstimateReport>,
    pub truncated: bool,
}

/// One connected piece of a variable inside a sub-plan: the `(alias,
/// column)` endpoints that the sub-plan's own join conditions actually link
/// together. A variable joined only through outside aliases decays into
/// single-endpoint pieces, which a stand-alone run of the sub-plan would
/// not treat as join keys at all.
struct VarComponent {
    var: u32,
    group: usize,
    /// Smallest member endpoint; orders components the same way a
    /// stand-alone run numbers its variables.
    anchor: (String, String),
    aliases: BTreeSet<String>,
    endpoints: usize,
}

fn dsu_root(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Endpoint-indexed view of a query's join conditions. Built once per
/// query so that splitting each sub-plan's variables into connected
/// components is integer work instead of repeated string keying.
struct SubplanIndex {
    /// Alias names in sorted order; `ep_alias` and masks index into this.
    aliases: Vec<String>,
    ep_alias: Vec<usize>,
    ep_column: Vec<String>,
    ep_var: Vec<u32>,
    /// Join conditions as endpoint-id pairs.
    joins: Vec<(usize, usize)>,
}

impl SubplanIndex {
    fn new(graph: &JoinGraph, ir: &QueryIR) -> SubplanIndex {
        let aliases: Vec<String> = ir.aliases.keys().cloned().collect();
        let pos: BTreeMap<&str, usize> =
            aliases.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
        let mut ids: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        let mut ep_alias = Vec::new();
        let mut ep_column = Vec::new();
        let mut ep_var = Vec::new();
        for v in &graph.vars {
            for (a, c) in &v.members {
                ids.insert((a.as_str(), c.as_str()), ep_alias.len());
                ep_alias.push(pos[a.as_str()]);
                ep_column.push(c.clone());
                ep_var.push(v.id);
            }
        }
        let joins = ir
            .joins
            .iter()
            .filter_map(|j| {
                let l = ids.get(&(j.left.0.as_str(), j.left.1.as_str()))?;
                let r = ids.get(&(j.right.0.as_str(), j.right.1.as_str()))?;
                Some((*l, *r))
            })
            .collect();
        SubplanIndex { aliases, ep_alias, ep_column, ep_var, joins }
    }

    /// Split every variable's endpoints into the components connected by
    /// join conditions both of whose sides lie inside the masked aliases.
    fn components(&self, mask: &[bool], graph: &JoinGraph) -> Vec<VarComponent> {
        let n = self.ep_alias.len();
        let mut parent: Vec<usize> = (0..n).collect();
        for &(l, r) in &self.joins {
            if mask[self.ep_alias[l]] && mask[self.ep_alias[r]] {
                let (a, b) = (dsu_root(&mut parent, l), dsu_root(&mut parent, r));
                if a != b {
                    parent[a] = b;
                }
            }
        }
        struct Build {
            var: u32,
            anchor_ep: usize,
            alias_ids: BTreeSet<usize>,
            endpoints: usize,
        }
        let key = |e: usize| (&*self.aliases[self.ep_alias[e]], &*self.ep_column[e]);
        let mut comps: BTreeMap<usize, Build> = BTreeMap::new();
        for e in 0..n {
            if !mask[self.ep_alias[e]] {
                continue;
            }
            let r = dsu_root(&mut parent, e);
            let b = comps.entry(r).or_insert_with(|| Build {
                var: self.ep_var[e],
                anchor_ep: e,
                alias_ids: BTreeSet::new(),
                endpoints: 0,
            });
            if key(e) < key(b.anchor_ep) {
                b.anchor_ep = e;
            }
            b.alias_ids.insert(self.ep_alias[e]);
            b.endpoints += 1;
        }
        comps
            .into_values()
            .map(|b| VarComponent {
                var: b.var,
                group: graph.vars[b.var as usize].group,
                anchor: (
                    self.aliases[self.ep_alias[b.anchor_ep]].clone(),
                    self.ep_column[b.anchor_ep].clone(),
                ),
                aliases: b.alias_ids.iter().map(|&i| self.aliases[i].clone()).collect(),
                endpoints: b.endpoints,
            })
            .collect()
    }
}

/// Fold two or more one-axis factors joined on one variable into a single
/// partially-joined factor: per real bin, the folded mass is the bound the
/// members compose to (least mass-to-cap ratio times the cap product) and
/// the folded cap is the cap product. Composing the fold with further
/// factors later gives the same result as composing the unfolded list, so
/// clique-shaped caches stay at one factor per component.
fn fold_bound_singles(mut fs: Vec<Rc<Factor>>, v: u32) -> Factor {
    fs.sort_by(|a, b| a.source.cmp(&b.source));
    let slots = fs[0].dims[0];
    let k = slots - 1;
    let mut mass = vec![0.0; slots];
    let mut caps = vec![0.0; k];
    let mut ndv = vec![0.0; k];
    for b in 0..k {
        let mut ratio = f64::INFINITY;
        let mut capprod = 1.0;
        let mut dead = false;
        for f in &fs {
            let cap = f.caps[0][b];
            if cap <= 0.0 {
                dead = true;
                break;
            }
            let r = f.mass[b] / cap;
            if r < ratio {
                ratio = r;
            }
            capprod *= cap;
        }
        if !dead {
            if ratio > 0.0 {
                mass[b] = ratio * capprod;
            }
            caps[b] = capprod;
        }
        let mut d = f64::INFINITY;
        for f in &fs {
            if f.ndv[0][b] < d {
                d = f.ndv[0][b];
            }
        }
        ndv[b] = if d.is_finite() { d } else { 0.0 };
    }
    let mut provenance: BTreeSet<String> = BTreeSet::new();
    for f in &fs {
        provenance.extend(f.provenance.iter().cloned());
    }
    let source = {
        let joined: Vec<&str> = provenance.iter().map(|s| s.as_str()).collect();
        format!("m:{}[v{}]", joined.join("+"), v)
    };
    Factor {
        vars: vec![v],
        dims: vec![slots],
        mass,
        caps: vec![caps],
        ndv: vec![ndv],
        provenance,
        source,
    }
}

/// Replace direct-joined one-axis pieces (bases and earlier folds) with
/// their fold, per variable component with at least two aliases.
fn merge_bound_singles(factors: &mut Vec<Factor>, comps: &[VarComponent]) {
    for comp in comps {
        if comp.aliases.len() < 2 {
            continue;
        }
        let mut picked = Vec::new();
        let mut i = 0;
        while i < factors.len() {
            let f = &factors[i];
            if f.vars.len() == 1
                && f.vars[0] == comp.var
                && (f.source.starts_with("b:") || f.source.starts_with("m:"))
                && f.provenance.iter().all(|a| comp.aliases.contains(a))
            {
                picked.push(factors.swap_remove(i));
            } else {
                i += 1;
            }
        }
        if picked.len() >= 2 {
            factors.push(fold_bound_singles(picked, comp.var));
        } else {
            factors.append(&mut picked);
        }
    }
}

/// The eliminations the cache performs while a decomposition chain grows:
/// each variable the moment the prefix covers all its aliases, ties within
/// one growth step by ascending group then id.
fn chain_elimination_order(graph: &JoinGraph, chain: &[String]) -> Vec<u32> {
    let mut order = Vec::new();
    let mut done: BTreeSet<u32> = BTreeSet::new();
    let mut prefix: BTreeSet<&str> = BTreeSet::new();
    for alias in chain {
        prefix.insert(alias.as_str());
        let mut batch: Vec<u32> = graph
            .vars
            .iter()
            .filter(|v| !done.contains(&v.id) && v.aliases().iter().all(|a| prefix.contains(a)))
            .map(|v| v.id)
            .collect();
        batch.sort_by_key(|&v| (graph.vars[v as usize].group, v));
        for v in batch {
            done.insert(v);
            order.push(v);
        }
    }
    order
}

/// Compute one sub-plan's value from its cached factor list, or `None`
/// when the cache provably cannot reproduce what estimating the sub-plan
/// as its own query computes: a boundary key axis that already went
/// through an elimination, stands for several equated columns, or belongs
/// to a ≥3-key factorization; a factor fused across two components of one
/// variable; or an elimination history that differs from the static order.
fn cached_subplan_value(
    graph: &JoinGraph,
    factors: &[Factor],
    chain: &[String],
    subset: &BTreeSet<String>,
    comps: &[VarComponent],
) -> Result<Option<f64>> {
    let mut interior: BTreeMap<u32, &VarComponent> = BTreeMap::new();
    let mut joins: Vec<(usize, &VarComponent)> = Vec::new();
    let mut closeouts: Vec<(usize, &VarComponent)> = Vec::new();
    for (idx, comp) in comps.iter().enumerate() {
        let inside = graph.vars[comp.var as usize]
            .aliases()
            .iter()
            .all(|a| subset.contains(*a));
        if inside {
            interior.insert(comp.var, comp);
        } else if comp.endpoints >= 2 {
            joins.push((idx, comp));
        } else {
            closeouts.push((idx, comp));
        }
    }
    let mut incident = vec![0usize; comps.len()];
    let mut single_axis = true;
    for f in factors {
        if f.vars.len() != 1 {
            single_axis = false;
        }
        for &v in &f.vars {
            let mut touched = 0usize;
            let mut hit = 0usize;
            for (idx, c) in comps.iter().enumerate() {
                if c.var == v && c.aliases.iter().any(|a| f.provenance.contains(a)) {
                    touched += 1;
                    hit = idx;
                }
            }
            if touched >= 2 {
                return Ok(None);
            }
            if touched == 1 {
                incident[hit] += 1;
            }
        }
    }
    for &(_, comp) in &closeouts {
        let alias = comp.aliases.iter().next().expect("nonempty component");
        if graph.vars[comp.var as usize].columns_of(alias).len() >= 2 {
            return Ok(None);
        }
        if graph.alias_vars.get(alias).map_or(0, |s| s.len()) >= 3 {
            return Ok(None);
        }
        let carriers: Vec<&Factor> = factors
            .iter()
            .filter(|f| f.axis_of(comp.var).is_some() && f.provenance.contains(alias))
            .collect();
        if carriers.len() != 1 || !carriers[0].source.starts_with("b:") {
            return Ok(None);
        }
    }
    let history = chain_elimination_order(graph, chain);
    if history.len() != interior.len() || history.iter().any(|v| !interior.contains_key(v)) {
        return Ok(None);
    }
    joins.sort_by_key(|&(_, c)| (c.aliases.len(), c.group, c.anchor.clone()));
    let mut seq: Vec<(usize, usize, &(String, String))> = Vec::new();
    for v in &history {
        let c = interior[v];
        seq.push((c.aliases.len(), c.group, &c.anchor));
    }
    for &(_, c) in &joins {
        seq.push((c.aliases.len(), c.group, &c.anchor));
    }
    if seq.windows(2).any(|w| w[0] >= w[1]) {
        return Ok(None);
    }
    let mut closeouts = closeouts;
    closeouts.sort_by_key(|&(_, c)| (c.group, c.var, c.anchor.clone()));
    if single_axis
        && joins.iter().all(|&(i, _)| incident[i] == 1)
        && closeouts.iter().all(|&(i, _)| incident[i] == 1)
    {
        // Every component is carried by exactly one single-axis factor, so
        // each elimination reduces to an axis sum and the tail product can
        // be taken directly, in the same order as the general path below.
        let mut value = 1.0;
        for &(_, comp) in &closeouts {
            let alias = comp.aliases.iter().next().expect("nonempty component");
            let f = factors
                .iter()
                .find(|f| f.axis_of(comp.var).is_some() && f.provenance.contains(alias))
                .expect("carrier checked above");
            value *= f.total_mass();
        }
        for &(_, comp) in &joins {
            let f = factors
                .iter()
                .find(|f| {
                    f.axis_of(comp.var).is_some()
                        && f.provenance.iter().any(|a| comp.aliases.contains(a))
                })
                .expect("incident tallied above");
            value *= f.mass[..f.dims[0] - 1].iter().sum::<f64>();
        }
        return Ok(Some(value));
    }
    let mut work: Vec<Factor> = factors.to_vec();
    for &(_, comp) in &closeouts {
        let alias = comp.aliases.iter().next().expect("nonempty component");
        let i = work
            .iter()
            .position(|f| f.axis_of(comp.var).is_some() && f.provenance.contains(alias))
            .expect("carrier checked above");
        let f = work.swap_remove(i);
        work.push(marginalize_axis(f, comp.var, true));
    }
    for &(_, comp) in &joins {
        let (incident, rest): (Vec<Factor>, Vec<Factor>) = work.into_iter().partition(|f| {
            f.axis_of(comp.var).is_some()
                && f.provenance.iter().any(|a| comp.aliases.contains(a))
        });
        work = rest;
        if incident.is_empty() {
            return Err(Error::Estimate(format!(
                "internal: no factor carries variable v{}",
                comp.var
            )));
        }
        work.extend(eliminate(incident, comp.var, Rule::Bound, &mut None)?);
    }
    let mut value = 1.0;
    for f in &work {
        if !f.vars.is_empty() {
            return Err(Error::Estimate(
                "internal: a join variable survived elimination".into(),
            ));
        }
        value *= f.total_mass();
    }
    Ok(Some(value))
}

/// Estimate every connected sub-plan bottom-up, reusing shared factors.
///
/// Each sub-plan extends a cached smaller one (the largest cached proper
/// subset, ties broken lexicographically) by one alias: the cached factor
/// list and the new alias's base factors are combined, every variable
/// whose aliases now all lie inside the sub-plan is eliminated, and
/// direct-joined one-axis pieces are folded so the list stays small. The
/// reported value is computed from that list whenever doing so reproduces
/// what estimating the sub-plan as its own query would compute: unjoined
/// key axes are summed out first, then the remaining variables are
/// eliminated in the static order. When the cached shape cannot guarantee
/// that (for example a boundary axis that already went through an
/// elimination), the sub-plan is estimated directly instead. Either way
/// every reported value matches an independent estimate of that sub-plan.
pub fn progressive_estimate(
    ir: &QueryIR,
    src: &dyn FactorSource,
    cap: usize,
) -> Result<ProgressiveOutcome> {
    let catalog = src.catalog();
    let graph = build_join_graph(catalog, ir)?;
    let (subsets, truncated) = enumerate_subplans(&graph, cap)?;
    struct Entry {
        factors: Vec<Factor>,
        chain: Vec<String>,
    }
    let mut cache: BTreeMap<Vec<String>, Entry> = BTreeMap::new();
    let mut reports = Vec::with_capacity(subsets.len());
    let internal_vars = |subset: &BTreeSet<String>| -> BTreeSet<u32> {
        graph
            .vars
            .iter()
            .filter(|v| v.aliases().iter().all(|a| subset.contains(*a)))
            .map(|v| v.id)
            .collect()
    };
    let index = SubplanIndex::new(&graph, ir);
    let alias_pos: BTreeMap<&str, usize> =
        index.aliases.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
    let mut mask = vec![false; index.aliases.len()];
    for subset in &subsets {
        let started = Instant::now();
        let key: Vec<String> = subset.iter().cloned().collect();
        mask.fill(false);
        for a in subset {
            mask[alias_pos[a.as_str()]] = true;
        }
        let comps = index.components(&mask, &graph);
        let mut entry = if subset.len() == 1 {
            let alias = &key[0];
            let vars: Vec<u32> = graph
                .alias_vars
                .get(alias)
                .map(|s| s.iter().copied().collect())
                .unwrap_or_default();
            let factors = build_alias_factors(
                src,
                alias,
                &ir.aliases[alias],
                &graph,
                &vars,
                ir.filters.get(alias),
                false,
            )?;
            Entry { factors, chain: vec![alias.clone()] }
        } else {
            // Dropping a later alias yields a lexicographically smaller
            // remainder, so probing drops in reverse order finds the
            // smallest cached candidate first.
            let mut base_key: Option<Vec<String>> = None;
            for drop in key.iter().rev() {
                let cand: Vec<String> =
                    key.iter().filter(|a| *a != drop).cloned().collect();
                if cache.contains_key(&cand) {
                    base_key = Some(cand);
                    break;
                }
            }
            let base_key = base_key.ok_or_else(|| {
                Error::Estimate("internal: no cached sub-plan to extend".into())
            })?;
            let prev = &cache[&base_key];
            let new_alias = subset
                .iter()
                .find(|a| !base_key.contains(*a))
                .expect("one alias added per level")
                .clone();
            let vars: Vec<u32> = graph
                .alias_vars
                .get(&new_alias)
                .map(|s| s.iter().copied().collect())
                .unwrap_or_default();
            let mut factors = prev.factors.clone();
            factors.extend(build_alias_factors(
                src,
                &new_alias,
                &ir.aliases[&new_alias],
                &graph,
                &vars,
                ir.filters.get(&new_alias),
                false,
            )?);
            let before: BTreeSet<String> = base_key.iter().cloned().collect();
            let done = internal_vars(&before);
            let mut newly: Vec<u32> = internal_vars(subset)
                .difference(&done)
                .copied()
                .collect();
            newly.sort_by_key(|&v| (graph.vars[v as usize].group, v));
            for v in newly {
                factors = eliminate(factors, v, Rule::Bound, &mut None)?;
            }
            let mut chain = prev.chain.clone();
            chain.push(new_alias);
            Entry { factors, chain }
        };
        merge_bound_singles(&mut entry.factors, &comps);
        let value = if subset.len() == 1 && comps.iter().all(|c| c.endpoints < 2) {
            let alias = &key[0];
            src.filtered_total(&ir.aliases[alias], ir.filters.get(alias))?
        } else {
            match cached_subplan_value(&graph, &entry.factors, &entry.chain, subset, &comps)? {
                Some(v) => v,
                None => {
                    let rir = ir.restrict(subset);
                    let rgraph = build_join_graph(catalog, &rir)?;
                    run_query(&rir, &rgraph, src, None, Rule::Bound, false, false)?.value
                }
            }
        };
        let groups: BTreeSet<usize> = comps
            .iter()
            .filter(|c| c.endpoints >= 2)
            .map(|c| c.group)
            .collect();
        let bin_budget = groups.into_iter().map(|g| src.bin_budget(g)).sum();
        reports.push(EstimateReport {
            aliases: key.clone(),
            estimate: value,
            wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
            estimator: src.label(),
            bin_budget,
        });
        cache.insert(key, entry);
    }
    Ok(ProgressiveOutcome { reports, truncated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binning::Strategy;
    use crate::catalog::LoadedTable;
    use crate::queryir::build_join_graph;
    use crate::testsupport::{rep_csv, Harness};

    const TWO_TABLE_SCHEMA: &str = r#"{
        "tables": [
            {"name": "A", "columns": [{"name": "id", "kind": "integer-key"}]},
            {"name": "B", "columns": [{"name": "Aid", "kind": "integer-key"}]}
        ],
        "joins": ["A.id = B.Aid"]
    }"#;

    fn two_table(k: usize) -> Harness {
        let a = rep_csv("id", &[(1, 8), (2, 4), (3, 3), (4, 1)]);
        let b = rep_csv("Aid", &[(1, 6), (2, 5), (3, 5), (5, 6), (6, 2)]);
        Harness::new(TWO_TABLE_SCHEMA, &[("A", &a), ("B", &b)], k)
    }

    /// One bin per value: values 1..=6, equal-width budget 6.
    fn two_table_exact() -> Harness {
        let a = rep_csv("id", &[(1, 8), (2, 4), (3, 3), (4, 1)]);
        let b = rep_csv("Aid", &[(1, 6), (2, 5), (3, 5), (5, 6), (6, 2)]);
        Harness::with_strategy(
            TWO_TABLE_SCHEMA,
            &[("A", &a), ("B", &b)],
            6,
            Strategy::EqualWidth,
        )
    }

    const TWO_TABLE_SQL: &str = "SELECT COUNT(*) FROM A x, B y WHERE x.id = y.Aid";

    #[test]
    fn singleton_bins_give_exact_two_table_count() {
        let h = two_table_exact();
        let report = estimate(&h.ir(TWO_TABLE_SQL), &h).unwrap();
        assert_eq!(report.estimate, 83.0);
        assert_eq!(report.estimator, "truescan");
        assert_eq!(report.bin_budget, 6);
    }

    #[test]
    fn one_bin_bound_is_min_ratio_times_cap_product() {
        let h = two_table(1);
        let report = estimate(&h.ir(TWO_TABLE_SQL), &h).unwrap();
        // totals 16 and 24, caps 8 and 6: min(2, 4) · 8 · 6.
        assert_eq!(report.estimate, 96.0);
    }

    #[test]
    fn coarse_bins_stay_above_exact_count() {
        for k in [1, 2, 3, 4, 6] {
            let h = two_table(k);
            let report = estimate(&h.ir(TWO_TABLE_SQL), &h).unwrap();
            assert!(
                report.estimate >= 83.0,
                "k={k} gave {} below the exact count",
                report.estimate
            );
        }
    }

    #[test]
    fn three_relations_on_one_variable() {
        let schema = r#"{
            "tables": [
                {"name": "A", "columns": [{"name": "k", "kind": "integer-key"}]},
                {"name": "B", "columns": [{"name": "k", "kind": "integer-key"}]},
                {"name": "C", "columns": [{"name": "k", "kind": "integer-key"}]}
            ],
            "joins": ["A.k = B.k", "B.k = C.k"]
        }"#;
        let a = rep_csv("k", &[(1, 2), (2, 1), (3, 1)]);
        let b = rep_csv("k", &[(1, 3), (2, 2), (3, 1)]);
        let c = rep_csv("k", &[(1, 3), (2, 3), (3, 3)]);
        let h = Harness::new(schema, &[("A", &a), ("B", &b), ("C", &c)], 1);
        let ir = h.ir(
            "SELECT COUNT(*) FROM A x, B y, C z WHERE x.k = y.k AND y.k = z.k AND x.k = z.k",
        );
        let report = estimate(&ir, &h).unwrap();
        // totals (4, 6, 9), caps (2, 3, 3): min(2, 2, 3) · 2 · 3 · 3.
        assert_eq!(report.estimate, 36.0);
    }

    #[test]
    fn zero_matching_filter_annihilates_the_estimate() {
        let schema = r#"{
            "tables": [
                {"name": "A", "columns": [
                    {"name": "id", "kind": "integer-key"},
                    {"name": "size", "kind": "integer"}
                ]},
                {"name": "B", "columns": [{"name": "Aid", "kind": "integer-key"}]}
            ],
            "joins": ["A.id = B.Aid"]
        }"#;
        let mut a = String::from("id,size\n");
        for (v, n) in [(1, 8), (2, 4), (3, 3), (4, 1)] {
            for _ in 0..n {
                a.push_str(&format!("{v},10\n"));
            }
        }
        let b = rep_csv("Aid", &[(1, 6), (2, 5), (3, 5), (5, 6), (6, 2)]);
        let h = Harness::new(schema, &[("A", &a), ("B", &b)], 6);
        let ir = h.ir("SELECT COUNT(*) FROM A x, B y WHERE x.id = y.Aid AND x.size < 0");
        assert_eq!(estimate(&ir, &h).unwrap().estimate, 0.0);
    }

    #[test]
    fn null_keys_never_join() {
        let mut a = rep_csv("id", &[(1, 8), (2, 4), (3, 3), (4, 1)]);
        a.push_str("\"\"\n\"\"\n");
        let b = rep_csv("Aid", &[(1, 6), (2, 5), (3, 5), (5, 6), (6, 2)]);
        let h = Harness::with_strategy(
            TWO_TABLE_SCHEMA,
            &[("A", &a), ("B", &b)],
            6,
            Strategy::EqualWidth,
        );
        let report = estimate(&h.ir(TWO_TABLE_SQL), &h).unwrap();
        assert_eq!(report.estimate, 83.0);
        // The null rows still count toward the table's filtered total.
        assert_eq!(h.filtered_total("A", None).unwrap(), 18.0);
    }

    #[test]
    fn single_alias_returns_filtered_total() {
        let schema = r#"{
            "tables": [
                {"name": "A", "columns": [
                    {"name": "id", "kind": "integer-key"},
                    {"name": "size", "kind": "integer"}
                ]},
                {"name": "B", "columns": [{"name": "Aid", "kind": "integer-key"}]}
            ],
            "joins": ["A.id = B.Aid"]
        }"#;
        let mut a = String::from("id,size\n");
        for i in 0..10 {
            a.push_str(&format!("{},{}\n", 1 + i % 3, i));
        }
        let b = rep_csv("Aid", &[(1, 2)]);
        let h = Harness::new(schema, &[("A", &a), ("B", &b)], 4);
        let ir = h.ir("SELECT COUNT(*) FROM A x WHERE x.size >= 5");
        let report = estimate(&ir, &h).unwrap();
        assert_eq!(report.estimate, 5.0);
        assert_eq!(report.bin_budget, 0);
    }

    #[test]
    fn unjoined_alias_multiplies_as_cartesian() {
        let schema = r#"{
            "tables": [
                {"name": "A", "columns": [{"name": "id", "kind": "integer-key"}]},
                {"name": "B", "columns": [{"name": "Aid", "kind": "integer-key"}]},
                {"name": "C", "columns": [{"name": "tag", "kind": "text"}]}
            ],
            "joins": ["A.id = B.Aid"]
        }"#;
        let a = rep_csv("id", &[(1, 8), (2, 4), (3, 3), (4, 1)]);
        let b = rep_csv("Aid", &[(1, 6), (2, 5), (3, 5), (5, 6), (6, 2)]);
        let c = "tag\np\nq\nr\ns\nt\n";
        let h = Harness::with_strategy(
            schema,
            &[("A", &a), ("B", &b), ("C", c)],
            6,
            Strategy::EqualWidth,
        );
        let ir = h.ir("SELECT COUNT(*) FROM A x, B y, C z WHERE x.id = y.Aid");
        assert_eq!(estimate(&ir, &h).unwrap().estimate, 83.0 * 5.0);
    }

    #[test]
    fn self_join_squares_multiplicities_at_full_resolution() {
        let h = two_table_exact();
        let ir = h.ir("SELECT COUNT(*) FROM A x, A y WHERE x.id = y.id");
        // Σ multiplicity² = 64 + 16 + 9 + 1.
        assert_eq!(estimate(&ir, &h).unwrap().estimate, 90.0);
    }

    const CHAIN_SCHEMA: &str = r#"{
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

    fn chain_harness(k: usize) -> Harness {
        let a = rep_csv("id", &[(1, 2), (2, 1), (3, 1)]);
        let b = "x,y\n1,10\n1,10\n1,20\n2,10\n3,30\n";
        let c = rep_csv("z", &[(10, 2), (20, 1), (40, 3)]);
        Harness::new(CHAIN_SCHEMA, &[("A", &a), ("B", b), ("C", &c)], k)
    }

    fn chain_exact_harness() -> Harness {
        let a = rep_csv("id", &[(1, 2), (2, 1), (3, 1)]);
        let b = "x,y\n1,10\n1,10\n1,20\n2,10\n3,30\n";
        let c = rep_csv("z", &[(10, 2), (20, 1), (40, 3)]);
        Harness::with_strategy(
            CHAIN_SCHEMA,
            &[("A", &a), ("B", b), ("C", &c)],
            40,
            Strategy::EqualWidth,
        )
    }

    const CHAIN_SQL: &str =
        "SELECT COUNT(*) FROM A a, B b, C c WHERE a.id = b.x AND b.y = c.z";

    fn chain_exact(h: &Harness) -> f64 {
        // Tiny nested-loop join over the raw columns.
        let a = &h.tables["A"];
        let b = &h.tables["B"];
        let c = &h.tables["C"];
        let col = |t: &LoadedTable, i: usize| match &t.columns[i] {
            crate::catalog::ColumnData::Int(v) => v.clone(),
            _ => panic!("int column expected"),
        };
        let (aid, bx, by, cz) = (col(a, 0), col(b, 0), col(b, 1), col(c, 0));
        let mut n = 0u64;
        for &av in aid.iter().flatten() {
            for (bi, &bv) in bx.iter().enumerate() {
                if bv != Some(av) {
                    continue;
                }
                let Some(byv) = by[bi] else { continue };
                for &cv in cz.iter().flatten() {
                    if cv == byv {
                        n += 1;
                    }
                }
            }
        }
        n as f64
    }

    #[test]
    fn chain_with_two_key_middle_is_exact_at_full_resolution() {
        let h = chain_exact_harness();
        let exact = chain_exact(&h);
        assert_eq!(exact, 12.0);
        let report = estimate(&h.ir(CHAIN_SQL), &h).unwrap();
        assert_eq!(report.estimate, exact);
    }

    #[test]
    fn chain_bound_holds_under_coarse_bins() {
        for k in [1, 2, 3] {
            let h = chain_harness(k);
            let exact = chain_exact(&h);
            let report = estimate(&h.ir(CHAIN_SQL), &h).unwrap();
            assert!(report.estimate >= exact, "k={k}: {} < {exact}", report.estimate);
        }
    }

    #[test]
    fn identical_input_gives_bit_identical_estimates() {
        let h = chain_harness(2);
        let ir = h.ir(CHAIN_SQL);
        let a = estimate(&ir, &h).unwrap().estimate;
        let b = estimate(&ir, &h).unwrap().estimate;
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn progressive_two_alias_value_is_bit_equal_to_fresh() {
        let h = two_table(3);
        let ir = h.ir(TWO_TABLE_SQL);
        let fresh = estimate(&ir, &h).unwrap().estimate;
        let out = progressive_estimate(&ir, &h, 100).unwrap();
        assert!(!out.truncated);
        assert_eq!(out.reports.len(), 3);
        assert_eq!(out.reports[0].aliases, vec!["x"]);
        assert_eq!(out.reports[0].estimate, 16.0);
        assert_eq!(out.reports[1].aliases, vec!["y"]);
        assert_eq!(out.reports[1].estimate, 24.0);
        assert_eq!(out.reports[2].aliases, vec!["x", "y"]);
        assert_eq!(out.reports[2].estimate.to_bits(), fresh.to_bits());
    }

    #[test]
    fn progressive_chain_matches_independent_estimates() {
        let h = chain_harness(2);
        let ir = h.ir(CHAIN_SQL);
        let out = progressive_estimate(&ir, &h, 100).unwrap();
        let names: Vec<Vec<String>> =
            out.reports.iter().map(|r| r.aliases.clone()).collect();
        assert_eq!(
            names,
            vec![
                vec!["a".to_string()],
                vec!["b".to_string()],
                vec!["c".to_string()],
                vec!["a".to_string(), "b".to_string()],
                vec!["b".to_string(), "c".to_string()],
                vec!["a".to_string(), "b".to_string(), "c".to_string()],
            ]
        );
        for r in &out.reports {
            let subset: BTreeSet<String> = r.aliases.iter().cloned().collect();
            let fresh = estimate(&ir.restrict(&subset), &h).unwrap().estimate;
            let tol = 1e-9 * fresh.abs().max(1.0);
            assert!(
                (r.estimate - fresh).abs() <= tol,
                "{:?}: progressive {} vs fresh {fresh}",
                r.aliases,
                r.estimate
            );
        }
    }

    #[test]
    fn progressive_clique_matches_independent_estimates() {
        let schema = r#"{
            "tables": [
                {"name": "T1", "columns": [{"name": "k", "kind": "integer-key"}]},
                {"name": "T2", "columns": [{"name": "k", "kind": "integer-key"}]},
                {"name": "T3", "columns": [{"name": "k", "kind": "integer-key"}]},
                {"name": "T4", "columns": [{"name": "k", "kind": "integer-key"}]}
            ],
            "joins": ["T1.k = T2.k", "T2.k = T3.k", "T3.k = T4.k"]
        }"#;
        let t1 = rep_csv("k", &[(1, 2), (2, 1)]);
        let t2 = rep_csv("k", &[(1, 1), (2, 2)]);
        let t3 = rep_csv("k", &[(1, 1), (2, 1), (3, 1)]);
        let t4 = rep_csv("k", &[(1, 2), (2, 1)]);
        let h = Harness::new(
            schema,
            &[("T1", &t1), ("T2", &t2), ("T3", &t3), ("T4", &t4)],
            2,
        );
        let ir = h.ir(
            "SELECT COUNT(*) FROM T1 a, T2 b, T3 c, T4 d WHERE a.k = b.k AND a.k = c.k \
             AND a.k = d.k AND b.k = c.k AND b.k = d.k AND c.k = d.k",
        );
        let out = progressive_estimate(&ir, &h, 100).unwrap();
        assert_eq!(out.reports.len(), 15);
        for r in &out.reports {
            let subset: BTreeSet<String> = r.aliases.iter().cloned().collect();
            let fresh = estimate(&ir.restrict(&subset), &h).unwrap().estimate;
            let tol = 1e-9 * fresh.abs().max(1.0);
            assert!(
                (r.estimate - fresh).abs() <= tol,
                "{:?}: progressive {} vs fresh {fresh}",
                r.aliases,
                r.estimate
            );
        }
    }

    #[test]
    fn hub_with_three_keys_factorizes_and_stays_above_exact() {
        let schema = r#"{
            "tables": [
                {"name": "H", "columns": [
                    {"name": "a", "kind": "integer-key"},
                    {"name": "b", "kind": "integer-key"},
                    {"name": "c", "kind": "integer-key"}
                ]},
                {"name": "L1", "columns": [{"name": "k", "kind": "integer-key"}]},
                {"name": "L2", "columns": [{"name": "k", "kind": "integer-key"}]},
                {"name": "L3", "columns": [{"name": "k", "kind": "integer-key"}]}
            ],
            "joins": ["H.a = L1.k", "H.b = L2.k", "H.c = L3.k"]
        }"#;
        let hub = "a,b,c\n1,11,101\n1,11,101\n2,12,102\n2,12,102\n2,12,102\n";
        let l1 = rep_csv("k", &[(1, 1), (2, 2)]);
        let l2 = rep_csv("k", &[(11, 2), (12, 1)]);
        let l3 = rep_csv("k", &[(101, 1), (102, 2)]);
        let h = Harness::with_strategy(
            schema,
            &[("H", hub), ("L1", &l1), ("L2", &l2), ("L3", &l3)],
            4,
            Strategy::EqualWidth,
        );
        let ir = h.ir(
            "SELECT COUNT(*) FROM H h, L1 p, L2 q, L3 r \
             WHERE h.a = p.k AND h.b = q.k AND h.c = r.k",
        );
        // Exact: rows (1,11,101)×2 each joining 1·2·1, rows (2,12,102)×3
        // each joining 2·1·2.
        let exact = 2.0 * 2.0 + 3.0 * 4.0;
        let report = estimate(&ir, &h).unwrap();
        assert!(report.estimate.is_finite());
        assert!(report.estimate >= exact);
        let again = estimate(&ir, &h).unwrap();
        assert_eq!(report.estimate.to_bits(), again.estimate.to_bits());
    }

    #[test]
    fn joinhist_classic_uses_per_bin_uniformity() {
        let h = two_table(1);
        let report =
            joinhist_estimate(&h.ir(TWO_TABLE_SQL), &h, JoinHistMode::Classic).unwrap();
        // One bin: 16 · 24 / max(4, 5).
        assert_eq!(report.estimate, 16.0 * 24.0 / 5.0);
    }

    #[test]
    fn joinhist_with_bound_equals_estimate_when_unfiltered() {
        for k in [1, 3, 6] {
            let h = two_table(k);
            let ir = h.ir(TWO_TABLE_SQL);
            let a = joinhist_estimate(&ir, &h, JoinHistMode::WithBound).unwrap().estimate;
            let b = estimate(&ir, &h).unwrap().estimate;
            assert_eq!(a.to_bits(), b.to_bits(), "k={k}");
        }
    }

    #[test]
    fn joinhist_conditional_is_exact_on_singleton_bins() {
        let h = two_table_exact();
        let report =
            joinhist_estimate(&h.ir(TWO_TABLE_SQL), &h, JoinHistMode::WithConditional)
                .unwrap();
        assert_eq!(report.estimate, 83.0);
    }

    #[test]
    fn joinhist_rejects_cyclic_queries() {
        let schema = r#"{
            "tables": [
                {"name": "A", "columns": [
                    {"name": "x", "kind": "integer-key"},
                    {"name": "y", "kind": "integer-key"}
                ]},
                {"name": "B", "columns": [
                    {"name": "x", "kind": "integer-key"},
                    {"name": "y", "kind": "integer-key"}
                ]}
            ],
            "joins": ["A.x = B.x", "A.y = B.y"]
        }"#;
        let a = "x,y\n1,1\n2,2\n";
        let b = "x,y\n1,1\n2,2\n";
        let h = Harness::new(schema, &[("A", a), ("B", b)], 2);
        let ir = h.ir("SELECT COUNT(*) FROM A s, B t WHERE s.x = t.x AND s.y = t.y");
        let err = joinhist_estimate(&ir, &h, JoinHistMode::Classic).unwrap_err();
        assert!(err.to_string().contains("acyclic"));
        // The bound engine itself handles the cyclic pair.
        let report = estimate(&ir, &h).unwrap();
        assert!(report.estimate >= 2.0);
    }

    #[test]
    fn explain_dump_covers_factors_and_steps() {
        let h = two_table_exact();
        let (report, explain) = estimate_explained(&h.ir(TWO_TABLE_SQL), &h).unwrap();
        assert_eq!(report.estimate, 83.0);
        assert_eq!(explain["variables"].as_array().unwrap().len(), 1);
        assert_eq!(explain["factors"].as_array().unwrap().len(), 2);
        assert_eq!(explain["steps"].as_array().unwrap().len(), 1);
        assert_eq!(explain["estimate"].as_f64().unwrap(), 83.0);
    }

    #[test]
    fn order_override_must_cover_all_variables() {
        let h = chain_harness(2);
        let ir = h.ir(CHAIN_SQL);
        assert!(estimate_with_order(&ir, &h, &[0]).is_err());
        assert!(estimate_with_order(&ir, &h, &[0, 1, 1]).is_err());
        let default = estimate(&ir, &h).unwrap().estimate;
        let forced = estimate_with_order(&ir, &h, &[0, 1]).unwrap().estimate;
        assert_eq!(default.to_bits(), forced.to_bits());
    }

    #[test]
    fn elimination_order_prefers_low_degree() {
        // Four relations share variable W (degree 4); P additionally joins X
        // on L (degree 2), so L must come first.
        let schema = r#"{
            "tables": [
                {"name": "P", "columns": [
                    {"name": "w", "kind": "integer-key"},
                    {"name": "l", "kind": "integer-key"}
                ]},
                {"name": "Q", "columns": [{"name": "w", "kind": "integer-key"}]},
                {"name": "R", "columns": [{"name": "w", "kind": "integer-key"}]},
                {"name": "S", "columns": [{"name": "w", "kind": "integer-key"}]},
                {"name": "X", "columns": [{"name": "l", "kind": "integer-key"}]}
            ],
            "joins": ["P.w = Q.w", "Q.w = R.w", "R.w = S.w", "P.l = X.l"]
        }"#;
        let p = "w,l\n1,5\n2,6\n";
        let q = rep_csv("w", &[(1, 1), (2, 1)]);
        let x = rep_csv("l", &[(5, 1), (6, 2)]);
        let h = Harness::new(
            schema,
            &[("P", p), ("Q", &q), ("R", &q), ("S", &q), ("X", &x)],
            2,
        );
        let ir = h.ir(
            "SELECT COUNT(*) FROM P p, Q q, R r, S s, X x WHERE p.w = q.w AND q.w = r.w \
             AND r.w = s.w AND p.l = x.l",
        );
        let graph = build_join_graph(&h.catalog, &ir).unwrap();
        let fg = build_factor_graph(&ir, &h).unwrap();
        let order = elimination_order(&fg, &graph);
        // The L variable (P–X) has two incident relations, W has four.
        let l_var = graph
            .vars
            .iter()
            .find(|v| v.aliases().len() == 2)
            .unwrap()
            .id;
        assert_eq!(order[0], l_var);
        assert_eq!(order.len(), 2);
        // And the estimate stays above the exact count (1·1 + 1·2 per W row).
        let report = estimate(&ir, &h).unwrap();
        assert!(report.estimate >= 3.0);
    }
}
