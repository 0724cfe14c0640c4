//! Louvain community detection and partition comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::Network;

#[derive(Debug, Error)]
pub enum CommunityError {
    #[error("modularity is undefined for a graph with zero total weight")]
    ZeroWeight,
    #[error("partition does not cover node {0}")]
    Uncovered(String),
    #[error("partitions are over different node sets")]
    NodeSetMismatch,
    #[error("pairwise F1 is undefined: a partition has no co-member pairs")]
    NoPairs,
    #[error("partition line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Ticker to group id. Ids are `0..k` and numbered by the smallest member
/// ticker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub assignment: BTreeMap<String, usize>,
    pub k: usize,
}

impl Partition {
    /// Groups items by equal label; label values themselves are discarded.
    pub fn from_labels<L: Ord + Clone>(labels: &BTreeMap<String, L>) -> Self {
        let mut ids: BTreeMap<L, usize> = BTreeMap::new();
        let mut assignment = BTreeMap::new();
        for (ticker, label) in labels {
            let next = ids.len();
            let id = *ids.entry(label.clone()).or_insert(next);
            assignment.insert(ticker.clone(), id);
        }
        Partition { k: ids.len(), assignment }
    }

    pub fn singletons<'a>(tickers: impl IntoIterator<Item = &'a String>) -> Self {
        let labels: BTreeMap<String, String> = tickers.into_iter().map(|t| (t.clone(), t.clone())).collect();
        Partition::from_labels(&labels)
    }

    pub fn single_block<'a>(tickers: impl IntoIterator<Item = &'a String>) -> Self {
        let labels: BTreeMap<String, u8> = tickers.into_iter().map(|t| (t.clone(), 0)).collect();
        Partition::from_labels(&labels)
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn group_of(&self, ticker: &str) -> Option<usize> {
        self.assignment.get(ticker).copied()
    }

    /// Members per group, each sorted.
    pub fn groups(&self) -> Vec<Vec<String>> {
        let mut out = vec![Vec::new(); self.k];
        for (t, &g) in &self.assignment {
            out[g].push(t.clone());
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<(), CommunityError> {
        writeln!(writer, "ticker,group")?;
        for (t, g) in &self.assignment {
            writeln!(writer, "{t},{g}")?;
        }
        Ok(())
    }

    /// Reads `ticker,group` rows; lines starting with `#` are skipped.
    /// Group ids are renumbered to the canonical order.
    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self, CommunityError> {
        let mut labels = BTreeMap::new();
        let mut header_seen = false;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            if !header_seen {
                if line.trim() != "ticker,group" {
                    return Err(CommunityError::Format { line: i + 1, message: "expected header ticker,group".into() });
                }
                header_seen = true;
                continue;
            }
            let (t, g) = line
                .split_once(',')
                .ok_or_else(|| CommunityError::Format { line: i + 1, message: "expected two fields".into() })?;
            let g: usize = g
                .trim()
                .parse()
                .map_err(|e| CommunityError::Format { line: i + 1, message: format!("bad group id: {e}") })?;
            if labels.insert(t.trim().to_string(), g).is_some() {
                return Err(CommunityError::Format { line: i + 1, message: format!("duplicate ticker {t}") });
            }
        }
        Ok(Partition::from_labels(&labels))
    }
}

fn node_labels(g: &Network, p: &Partition) -> Result<Vec<usize>, CommunityError> {
    g.nodes
        .iter()
        .map(|n| p.group_of(n).ok_or_else(|| CommunityError::Uncovered(n.clone())))
        .collect()
}

/// Newman modularity with resolution on the null-model term.
pub fn modularity(g: &Network, p: &Partition, resolution: f64) -> Result<f64, CommunityError> {
    let labels = node_labels(g, p)?;
    let two_m: f64 = 2.0 * g.edges.values().sum::<f64>();
    if two_m <= 0.0 {
        return Err(CommunityError::ZeroWeight);
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut inner = vec![0.0; k];
    let mut total = vec![0.0; k];
    for (&(a, b), &w) in &g.edges {
        total[labels[a]] += w;
        total[labels[b]] += w;
        if labels[a] == labels[b] {
            inner[labels[a]] += 2.0 * w;
        }
    }
    Ok(inner
        .iter()
        .zip(&total)
        .map(|(i, t)| i / two_m - resolution * (t / two_m).powi(2))
        .sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LouvainOutcome {
    pub partition: Partition,
    /// Modularity evaluated on the final coarse graph.
    pub modularity: f64,
    /// Number of aggregation levels that moved at least one node.
    pub levels: usize,
}

/// Symmetric sparse weights; `adj[i][i]` holds the doubled internal weight.
struct Level {
    adj: Vec<BTreeMap<usize, f64>>,
}

impl Level {
    fn degree(&self, i: usize) -> f64 {
        self.adj[i].values().sum()
    }
}

/// Minimum modularity gain (in units of edge weight) that counts as an
/// improvement.
const GAIN_EPS: f64 = 1e-12;

/// One pass of local moves. Returns dense community labels and whether any
/// node moved.
fn local_moves(level: &Level, two_m: f64, resolution: f64) -> (Vec<usize>, bool) {
    let n = level.adj.len();
    let degree: Vec<f64> = (0..n).map(|i| level.degree(i)).collect();
    let mut comm: Vec<usize> = (0..n).collect();
    let mut tot = degree.clone();
    let mut moved_any = false;
    loop {
        let mut moved = false;
        for i in 0..n {
            let own = comm[i];
            let ki = degree[i];
            let mut links: BTreeMap<usize, f64> = BTreeMap::new();
            for (&j, &w) in &level.adj[i] {
                if j != i {
                    *links.entry(comm[j]).or_default() += w;
                }
            }
            tot[own] -= ki;
            let gain = |c: usize, links: &BTreeMap<usize, f64>| links.get(&c).copied().unwrap_or(0.0) - resolution * tot[c] * ki / two_m;
            let mut best = own;
            let mut best_gain = gain(own, &links);
            for &c in links.keys() {
                let gc = gain(c, &links);
                if gc > best_gain + GAIN_EPS {
                    best = c;
                    best_gain = gc;
                }
            }
            tot[best] += ki;
            if best != own {
                comm[i] = best;
                moved = true;
                moved_any = true;
            }
        }
        if !moved {
            break;
        }
    }
    let mut dense: BTreeMap<usize, usize> = BTreeMap::new();
    let labels = comm
        .iter()
        .map(|c| {
            let next = dense.len();
            *dense.entry(*c).or_insert(next)
        })
        .collect();
    (labels, moved_any)
}

fn aggregate(level: &Level, labels: &[usize]) -> Level {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut adj = vec![BTreeMap::new(); k];
    for (i, row) in level.adj.iter().enumerate() {
        for (&j, &w) in row {
            *adj[labels[i]].entry(labels[j]).or_insert(0.0) += w;
        }
    }
    Level { adj }
}

fn level_modularity(level: &Level, two_m: f64, resolution: f64) -> f64 {
    (0..level.adj.len())
        .map(|c| {
            let inner = level.adj[c].get(&c).copied().unwrap_or(0.0);
            inner / two_m - resolution * (level.degree(c) / two_m).powi(2)
        })
        .sum()
}

/// Louvain with nodes visited in ascending index order; a node moves only
/// when a neighbouring community strictly beats staying put.
pub fn louvain(g: &Network, resolution: f64) -> Result<LouvainOutcome, CommunityError> {
    let two_m: f64 = 2.0 * g.edges.values().sum::<f64>();
    if two_m <= 0.0 {
        return Err(CommunityError::ZeroWeight);
    }
    let mut adj = vec![BTreeMap::new(); g.n_nodes()];
    for (&(a, b), &w) in &g.edges {
        adj[a].insert(b, w);
        adj[b].insert(a, w);
    }
    let mut level = Level { adj };
    let mut membership: Vec<usize> = (0..g.n_nodes()).collect();
    let mut levels = 0;
    loop {
        let (labels, moved) = local_moves(&level, two_m, resolution);
        if !moved {
            break;
        }
        levels += 1;
        for m in &mut membership {
            *m = labels[*m];
        }
        level = aggregate(&level, &labels);
    }
    let q = level_modularity(&level, two_m, resolution);
    let labels: BTreeMap<String, usize> = g.nodes.iter().cloned().zip(membership).collect();
    Ok(LouvainOutcome {
        partition: Partition::from_labels(&labels),
        modularity: q,
        levels,
    })
}

fn same_nodes(p: &Partition, q: &Partition) -> Result<(), CommunityError> {
    if p.assignment.len() != q.assignment.len() || p.assignment.keys().ne(q.assignment.keys()) {
        return Err(CommunityError::NodeSetMismatch);
    }
    Ok(())
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalised by the geometric mean of the entropies.
pub fn nmi(p: &Partition, q: &Partition) -> Result<f64, CommunityError> {
    same_nodes(p, q)?;
    let n = p.len() as f64;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut pa = vec![0usize; p.k];
    let mut qb = vec![0usize; q.k];
    for (t, &a) in &p.assignment {
        let b = q.assignment[t];
        *joint.entry((a, b)).or_default() += 1;
        pa[a] += 1;
        qb[b] += 1;
    }
    let hp = entropy(pa.iter().copied(), n);
    let hq = entropy(qb.iter().copied(), n);
    match (hp == 0.0, hq == 0.0) {
        (true, true) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(a, b), &c)| {
            let c = c as f64;
            c / n * (n * c / (pa[a] as f64 * qb[b] as f64)).ln()
        })
        .sum();
    Ok((mi / (hp * hq).sqrt()).clamp(0.0, 1.0))
}

fn co_pairs(p: &Partition) -> BTreeSet<(String, String)> {
    let mut out = BTreeSet::new();
    for members in p.groups() {
        for (i, a) in members.iter().enumerate() {
            for b in &members[i + 1..] {
                out.insert((a.clone(), b.clone()));
            }
        }
    }
    out
}

/// F1 of co-membership pairs. Undefined when either side has no pairs.
pub fn pairwise_f1(p: &Partition, q: &Partition) -> Result<f64, CommunityError> {
    same_nodes(p, q)?;
    let pp = co_pairs(p);
    let qp = co_pairs(q);
    if pp.is_empty() || qp.is_empty() {
        return Err(CommunityError::NoPairs);
    }
    let both = pp.intersection(&qp).count() as f64;
    Ok(2.0 * both / (pp.len() + qp.len()) as f64)
}

/// Group by sector counts. Tickers without a sector are left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    pub sectors: Vec<String>,
    /// `counts[group][sector]`, columns in `sectors` order.
    pub counts: Vec<Vec<usize>>,
}

impl Composition {
    pub fn get(&self, group: usize, sector: &str) -> usize {
        self.sectors
            .iter()
            .position(|s| s == sector)
            .map_or(0, |j| self.counts[group][j])
    }

    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<(), CommunityError> {
        writeln!(writer, "group,{}", self.sectors.join(","))?;
        for (g, row) in self.counts.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            writeln!(writer, "{g},{}", cells.join(","))?;
        }
        Ok(())
    }
}

pub fn group_composition(p: &Partition, sectors: &BTreeMap<String, String>) -> Composition {
    let names: Vec<String> = p
        .assignment
        .keys()
        .filter_map(|t| sectors.get(t).cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut counts = vec![vec![0usize; names.len()]; p.k];
    for (t, &g) in &p.assignment {
        if let Some(s) = sectors.get(t) {
            let j = names.binary_search(s).expect("sector collected above");
            counts[g][j] += 1;
        }
    }
    Composition { sectors: names, counts }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub nmi: f64,
    /// Absent when pairwise F1 is undefined.
    pub f1: Option<f64>,
    pub contingency: Composition,
}

/// Compare a partition against the sector labels of its tickers.
pub fn compare_with_sectors(p: &Partition, sectors: &BTreeMap<String, String>) -> Result<ComparisonReport, CommunityError> {
    let restricted: BTreeMap<String, String> = p
        .assignment
        .keys()
        .map(|t| sectors.get(t).map(|s| (t.clone(), s.clone())).ok_or_else(|| CommunityError::Uncovered(t.clone())))
        .collect::<Result<_, _>>()?;
    let reference = Partition::from_labels(&restricted);
    let f1 = match pairwise_f1(p, &reference) {
        Ok(v) => Some(v),
        Err(CommunityError::NoPairs) => None,
        Err(e) => return Err(e),
    };
    Ok(ComparisonReport {
        nmi: nmi(p, &reference)?,
        f1,
        contingency: group_composition(p, sectors),
    })
}

impl ComparisonReport {
    pub fn write_json<W: Write>(&self, writer: W) -> Result<(), CommunityError> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }
}
