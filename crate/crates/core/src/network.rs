//! News co-occurrence networks.
//!
//! Nodes are tickers; the weight between two companies is the cosine
//! similarity of their coverage-matrix rows. Pairs with zero similarity have
//! no edge.

use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::cmp::Ordering;
use std::io::{BufRead, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{build_coverage_matrix, Corpus, CorpusError, CoverageMatrix, CoverageMode, DateRange};
use crate::statkit;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("a network needs at least two companies, got {0}")]
    TooFewNodes(usize),
    #[error("need {needed} trading days before {date}, only {available} available")]
    InsufficientWindow { date: NaiveDate, needed: usize, available: usize },
    #[error("{0} is not a calendar day")]
    NotInCalendar(NaiveDate),
    #[error("graph has no edges")]
    NoEdges,
    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("node {0} has no sector")]
    MissingSector(String),
    #[error("empty weight sample")]
    EmptySample,
    #[error("edge list line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Weighted undirected graph over tickers. Edge keys are `(i, j)` node
/// indices with `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub nodes: Vec<String>,
    pub edges: BTreeMap<(usize, usize), f64>,
    pub window: Option<DateRange>,
}

impl Network {
    pub fn new(nodes: Vec<String>) -> Self {
        Network {
            nodes,
            edges: BTreeMap::new(),
            window: None,
        }
    }

    /// Adds or replaces an edge. Zero weights and self-loops are ignored.
    pub fn set_edge(&mut self, a: usize, b: usize, weight: f64) {
        if a == b || weight <= 0.0 {
            return;
        }
        let key = if a < b { (a, b) } else { (b, a) };
        self.edges.insert(key, weight.min(1.0));
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn index_of(&self, ticker: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == ticker)
    }

    pub fn weight(&self, a: usize, b: usize) -> Option<f64> {
        let key = if a < b { (a, b) } else { (b, a) };
        self.edges.get(&key).copied()
    }

    pub fn weight_between(&self, a: &str, b: &str) -> Option<f64> {
        self.weight(self.index_of(a)?, self.index_of(b)?)
    }

    /// Neighbour lists `(node, weight)` in ascending node order.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (&(a, b), &w) in &self.edges {
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        for list in &mut adj {
            list.sort_by_key(|e| e.0);
        }
        adj
    }

    /// `(src, dst, weight)` with `src < dst` by name, sorted by name pair.
    pub fn named_edges(&self) -> Vec<(String, String, f64)> {
        let mut out: Vec<(String, String, f64)> = self
            .edges
            .iter()
            .map(|(&(a, b), &w)| {
                let (x, y) = (&self.nodes[a], &self.nodes[b]);
                if x < y {
                    (x.clone(), y.clone(), w)
                } else {
                    (y.clone(), x.clone(), w)
                }
            })
            .collect();
        out.sort_by(|p, q| (&p.0, &p.1).cmp(&(&q.0, &q.1)));
        out
    }

    /// TSV edge list: header `src\tdst\tweight`, names in lexicographic
    /// order, weights with 10 significant digits.
    pub fn write_edge_list<W: Write>(&self, mut writer: W) -> Result<(), NetworkError> {
        writeln!(writer, "src\tdst\tweight")?;
        for (src, dst, w) in self.named_edges() {
            writeln!(writer, "{src}\t{dst}\t{}", format_significant(w, 10))?;
        }
        Ok(())
    }

    /// Reads an edge list; `nodes` fixes the node order (isolated nodes are
    /// not recoverable from the file alone). Lines starting with `#` are
    /// skipped.
    pub fn read_edge_list<R: BufRead>(reader: R, nodes: Option<Vec<String>>) -> Result<Network, NetworkError> {
        let mut rows = Vec::new();
        let mut header_seen = false;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            if !header_seen {
                if line != "src\tdst\tweight" {
                    return Err(NetworkError::Format { line: i + 1, message: "expected header src\\tdst\\tweight".into() });
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(NetworkError::Format { line: i + 1, message: "expected three fields".into() });
            }
            let w: f64 = fields[2]
                .parse()
                .map_err(|e| NetworkError::Format { line: i + 1, message: format!("bad weight: {e}") })?;
            rows.push((fields[0].to_string(), fields[1].to_string(), w));
        }
        let nodes = nodes.unwrap_or_else(|| {
            let mut names: Vec<String> = rows.iter().flat_map(|r| [r.0.clone(), r.1.clone()]).collect();
            names.sort();
            names.dedup();
            names
        });
        let mut g = Network::new(nodes);
        for (a, b, w) in rows {
            let ia = g.index_of(&a).ok_or_else(|| NetworkError::UnknownNode(a.clone()))?;
            let ib = g.index_of(&b).ok_or_else(|| NetworkError::UnknownNode(b.clone()))?;
            g.set_edge(ia, ib, w);
        }
        Ok(g)
    }
}

/// Decimal rendering with `digits` significant digits.
pub fn format_significant(value: f64, digits: usize) -> String {
    if value == 0.0 || !value.is_finite() {
        return format!("{value}");
    }
    let magnitude = value.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    format!("{value:.decimals$}")
}

/// Cosine similarity of every pair of coverage rows.
pub fn build_network(m: &CoverageMatrix) -> Result<Network, NetworkError> {
    let n = m.n_companies();
    if n < 2 {
        return Err(NetworkError::TooFewNodes(n));
    }
    let norms: Vec<f64> = (0..n)
        .map(|i| m.row(i).iter().map(|&c| (c as f64) * (c as f64)).sum::<f64>().sqrt())
        .collect();
    // sparse columns: (row, count) per article
    let width = m.n_articles();
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); width];
    for (i, _) in norms.iter().enumerate() {
        for (j, &c) in m.row(i).iter().enumerate() {
            if c > 0 {
                columns[j].push((i, c as f64));
            }
        }
    }
    let mut dots: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for col in &columns {
        for (p, &(a, ca)) in col.iter().enumerate() {
            for &(b, cb) in &col[p + 1..] {
                *dots.entry((a, b)).or_default() += ca * cb;
            }
        }
    }
    let mut g = Network::new(m.companies.clone());
    g.window = Some(m.window);
    for ((a, b), dot) in dots {
        g.set_edge(a, b, dot / (norms[a] * norms[b]));
    }
    Ok(g)
}

/// Network over the `lookback` trading days strictly before `end_day`:
/// articles dated in `[calendar[t - lookback], end_day)`.
pub fn dynamic_network(
    corpus: &Corpus,
    tickers: &[String],
    end_day: NaiveDate,
    lookback: usize,
    calendar: &[NaiveDate],
    mode: CoverageMode,
) -> Result<Network, NetworkError> {
    let t = calendar.binary_search(&end_day).map_err(|_| NetworkError::NotInCalendar(end_day))?;
    if t < lookback || lookback == 0 {
        return Err(NetworkError::InsufficientWindow {
            date: end_day,
            needed: lookback,
            available: t,
        });
    }
    let window = DateRange::half_open(calendar[t - lookback], end_day);
    let m = build_coverage_matrix(corpus, tickers, window, mode)?;
    build_network(&m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkStats {
    pub avg_degree: f64,
    pub clustering_coefficient: f64,
    /// `None` when no pair of nodes is connected.
    pub avg_path_length: Option<f64>,
}

/// Unweighted degree, local clustering and shortest-path statistics.
pub fn network_stats(g: &Network) -> NetworkStats {
    let n = g.n_nodes();
    if n == 0 {
        return NetworkStats {
            avg_degree: 0.0,
            clustering_coefficient: 0.0,
            avg_path_length: None,
        };
    }
    let adj = g.adjacency();
    let avg_degree = 2.0 * g.n_edges() as f64 / n as f64;
    let clustering: f64 = (0..n)
        .map(|v| {
            let nbrs: Vec<usize> = adj[v].iter().map(|e| e.0).collect();
            let k = nbrs.len();
            if k < 2 {
                return 0.0;
            }
            let mut links = 0usize;
            for (p, &a) in nbrs.iter().enumerate() {
                for &b in &nbrs[p + 1..] {
                    if g.weight(a, b).is_some() {
                        links += 1;
                    }
                }
            }
            2.0 * links as f64 / (k * (k - 1)) as f64
        })
        .sum::<f64>()
        / n as f64;

    let mut total = 0u64;
    let mut pairs = 0u64;
    for s in 0..n {
        let mut dist = vec![usize::MAX; n];
        dist[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &(w, _) in &adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        for &d in dist.iter().skip(s + 1) {
            if d != usize::MAX {
                total += d as u64;
                pairs += 1;
            }
        }
    }
    NetworkStats {
        avg_degree,
        clustering_coefficient: clustering,
        avg_path_length: (pairs > 0).then(|| total as f64 / pairs as f64),
    }
}

/// Dominant eigenvector of the weighted adjacency matrix, unit Euclidean
/// norm, non-negative.
///
/// Iterates `x <- (A + I) x` from the uniform vector. The shift keeps the
/// eigenvectors but removes the sign oscillation of bipartite graphs.
/// Converged when successive normalised iterates differ by less than `tol`.
pub fn eigenvector_centrality(g: &Network, tol: f64, max_iter: usize) -> Result<BTreeMap<String, f64>, NetworkError> {
    if g.n_edges() == 0 {
        return Err(NetworkError::NoEdges);
    }
    let n = g.n_nodes();
    let adj = g.adjacency();
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut change = f64::INFINITY;
    for _ in 0..max_iter {
        let mut next: Vec<f64> = x.clone();
        for (v, list) in adj.iter().enumerate() {
            for &(u, w) in list {
                next[v] += w * x[u];
            }
        }
        let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut next {
            *v /= norm;
        }
        change = next.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        x = next;
        if change < tol {
            return Ok(g.nodes.iter().cloned().zip(x.into_iter().map(|v| v.max(0.0))).collect());
        }
    }
    Err(NetworkError::NoConvergence {
        iterations: max_iter,
        residual: change,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Relative tolerance for treating two path lengths as equal.
pub const PATH_TIE_TOL: f64 = 1e-12;

fn same_length(a: f64, b: f64) -> bool {
    (a - b).abs() <= PATH_TIE_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Brandes betweenness with edge length `1 / weight`, normalised by
/// `(n-1)(n-2)/2` unordered pairs.
pub fn betweenness_centrality(g: &Network) -> BTreeMap<String, f64> {
    let n = g.n_nodes();
    let adj = g.adjacency();
    let mut score = vec![0.0f64; n];
    for s in 0..n {
        let mut stack = Vec::with_capacity(n);
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut sigma = vec![0.0f64; n];
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        sigma[s] = 1.0;
        dist[s] = 0.0;
        let mut heap = BinaryHeap::from([HeapItem { dist: 0.0, node: s }]);
        while let Some(HeapItem { dist: d, node: v }) = heap.pop() {
            if done[v] || d > dist[v] {
                continue;
            }
            done[v] = true;
            stack.push(v);
            for &(w, weight) in &adj[v] {
                if done[w] {
                    continue;
                }
                let alt = dist[v] + 1.0 / weight;
                if dist[w].is_infinite() || (alt < dist[w] && !same_length(alt, dist[w])) {
                    dist[w] = alt;
                    sigma[w] = sigma[v];
                    preds[w] = vec![v];
                    heap.push(HeapItem { dist: alt, node: w });
                } else if same_length(alt, dist[w]) {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        let mut delta = vec![0.0f64; n];
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                score[w] += delta[w];
            }
        }
    }
    // each unordered pair was visited from both ends
    let scale = if n > 2 { 1.0 / ((n - 1) * (n - 2)) as f64 } else { 0.0 };
    g.nodes.iter().cloned().zip(score.into_iter().map(|v| v * scale)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSplit {
    pub in_sector: Vec<(String, String, f64)>,
    pub out_sector: Vec<(String, String, f64)>,
    pub medians: (Option<f64>, Option<f64>),
}

impl WeightSplit {
    pub fn in_weights(&self) -> Vec<f64> {
        self.in_sector.iter().map(|e| e.2).collect()
    }

    pub fn out_weights(&self) -> Vec<f64> {
        self.out_sector.iter().map(|e| e.2).collect()
    }
}

/// Partition the edges by whether both endpoints share a sector.
pub fn weight_split(g: &Network, sectors: &BTreeMap<String, String>) -> Result<WeightSplit, NetworkError> {
    for n in &g.nodes {
        if !sectors.contains_key(n) {
            return Err(NetworkError::MissingSector(n.clone()));
        }
    }
    let (in_sector, out_sector): (Vec<_>, Vec<_>) = g.named_edges().into_iter().partition(|(a, b, _)| sectors[a] == sectors[b]);
    let med = |edges: &[(String, String, f64)]| {
        let w: Vec<f64> = edges.iter().map(|e| e.2).collect();
        statkit::median(&w).ok()
    };
    let medians = (med(&in_sector), med(&out_sector));
    Ok(WeightSplit {
        in_sector,
        out_sector,
        medians,
    })
}

/// Edges above `Q3 + 1.5 IQR` of `sample`, heaviest first; equal weights are
/// ordered by the name pair.
pub fn outlier_edges(
    sample: &[f64],
    edges: &[(String, String, f64)],
) -> Result<Vec<(String, String, f64)>, NetworkError> {
    let fence = statkit::upper_fence(sample, 1.5).map_err(|_| NetworkError::EmptySample)?;
    let mut out: Vec<(String, String, f64)> = edges.iter().filter(|e| e.2 > fence).cloned().collect();
    out.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| (&a.0, &a.1).cmp(&(&b.0, &b.1))));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Article, Mention};
    use chrono::Duration;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("N{i}")).collect()
    }

    fn window() -> DateRange {
        DateRange::new("2007-01-01".parse().unwrap(), "2007-12-31".parse().unwrap())
    }

    fn graph(n: usize, edges: &[(usize, usize, f64)]) -> Network {
        let mut g = Network::new(names(n));
        for &(a, b, w) in edges {
            g.set_edge(a, b, w);
        }
        g
    }

    fn brute_cosine(a: &[u32], b: &[u32]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
        let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 { 0.0 } else { dot / (na * nb) }
    }

    #[test]
    fn cosine_examples() {
        let m = CoverageMatrix::from_rows(names(4), vec![vec![1, 1, 0], vec![1, 0, 1], vec![2, 2, 0], vec![0, 0, 0]], window());
        let g = build_network(&m).unwrap();
        assert!((g.weight(0, 1).unwrap() - 0.5).abs() < 1e-15);
        assert!((g.weight(0, 2).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(g.weight(0, 3), None);
        let orth = CoverageMatrix::from_rows(names(2), vec![vec![1, 0], vec![0, 3]], window());
        assert_eq!(build_network(&orth).unwrap().n_edges(), 0);
        let single = CoverageMatrix::from_rows(names(1), vec![vec![1]], window());
        assert!(matches!(build_network(&single), Err(NetworkError::TooFewNodes(1))));
    }

    fn article(id: &str, date: NaiveDate, tickers: &[&str]) -> Article {
        Article {
            article_id: id.into(),
            date,
            mentions: tickers
                .iter()
                .map(|t| Mention { raw_name: t.to_string(), canonical: Some(t.to_string()), sentiment: 0.0, article_id: id.into() })
                .collect(),
            sentences: vec![],
        }
    }

    #[test]
    fn dynamic_window_is_half_open() {
        let start: NaiveDate = "2007-01-01".parse().unwrap();
        let calendar: Vec<NaiveDate> = (0..10).map(|i| start + Duration::days(i)).collect();
        let tickers = vec!["A".to_string(), "B".to_string()];
        let corpus = Corpus {
            articles: vec![article("x", calendar[2], &["A"]), article("y", calendar[5], &["A", "B"])],
        };
        let g = dynamic_network(&corpus, &tickers, calendar[5], 3, &calendar, CoverageMode::MentionCount).unwrap();
        assert_eq!(g.n_edges(), 0, "article on the end day itself must be excluded");
        let g = dynamic_network(&corpus, &tickers, calendar[6], 3, &calendar, CoverageMode::MentionCount).unwrap();
        assert_eq!(g.n_edges(), 1);
        let empty = dynamic_network(&Corpus::default(), &tickers, calendar[6], 3, &calendar, CoverageMode::MentionCount).unwrap();
        assert_eq!(empty.n_edges(), 0);
        assert!(matches!(
            dynamic_network(&corpus, &tickers, calendar[2], 3, &calendar, CoverageMode::MentionCount),
            Err(NetworkError::InsufficientWindow { .. })
        ));
        // a lookback covering everything equals the static network
        let all = dynamic_network(&corpus, &tickers, calendar[9], 9, &calendar, CoverageMode::MentionCount).unwrap();
        let m = build_coverage_matrix(&corpus, &tickers, window(), CoverageMode::MentionCount).unwrap();
        assert_eq!(all.edges, build_network(&m).unwrap().edges);
    }

    #[test]
    fn stats_examples() {
        let k4 = graph(4, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (1, 2, 1.0), (1, 3, 1.0), (2, 3, 1.0)]);
        let s = network_stats(&k4);
        assert_eq!(s.avg_degree, 3.0);
        assert_eq!(s.clustering_coefficient, 1.0);
        assert_eq!(s.avg_path_length, Some(1.0));
        let path = graph(3, &[(0, 1, 0.5), (1, 2, 0.5)]);
        let s = network_stats(&path);
        assert_eq!(s.clustering_coefficient, 0.0);
        assert!((s.avg_path_length.unwrap() - 4.0 / 3.0).abs() < 1e-15);
        let empty = graph(3, &[]);
        let s = network_stats(&empty);
        assert_eq!(s.avg_degree, 0.0);
        assert_eq!(s.avg_path_length, None);
    }

    fn dense_oracle(g: &Network) -> (f64, Vec<f64>) {
        let n = g.n_nodes();
        let mut a = DMatrix::<f64>::zeros(n, n);
        for (&(i, j), &w) in &g.edges {
            a[(i, j)] = w;
            a[(j, i)] = w;
        }
        let eig = a.symmetric_eigen();
        let (idx, &lambda) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        if v.iter().sum::<f64>() < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        (lambda, v)
    }

    #[test]
    fn eigenvector_examples() {
        let k4 = graph(4, &[(0, 1, 0.3), (0, 2, 0.3), (0, 3, 0.3), (1, 2, 0.3), (1, 3, 0.3), (2, 3, 0.3)]);
        let c = eigenvector_centrality(&k4, 1e-10, 10_000).unwrap();
        for v in c.values() {
            assert!((v - 0.5).abs() < 1e-9);
        }
        let star = graph(5, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (0, 4, 1.0)]);
        let c = eigenvector_centrality(&star, 1e-10, 10_000).unwrap();
        let (_, oracle) = dense_oracle(&star);
        for (i, name) in star.nodes.iter().enumerate() {
            assert!((c[name] - oracle[i]).abs() < 1e-8);
            if i > 0 {
                assert!(c["N0"] > c[name]);
            }
        }
        // two equal disconnected edges: the uniform start is a fixed point
        let pair = graph(4, &[(0, 1, 0.7), (2, 3, 0.7)]);
        let c = eigenvector_centrality(&pair, 1e-10, 10_000).unwrap();
        for v in c.values() {
            assert!((v - 0.5).abs() < 1e-12);
        }
        assert!(matches!(eigenvector_centrality(&graph(3, &[]), 1e-10, 100), Err(NetworkError::NoEdges)));
        let path = graph(3, &[(0, 1, 1.0), (1, 2, 0.999)]);
        assert!(matches!(eigenvector_centrality(&path, 1e-30, 5), Err(NetworkError::NoConvergence { iterations: 5, .. })));
    }

    /// Exhaustive betweenness: enumerate every simple path between every
    /// pair and keep the shortest ones.
    fn betweenness_oracle(g: &Network) -> Vec<f64> {
        let n = g.n_nodes();
        let adj = g.adjacency();
        let mut score = vec![0.0; n];
        fn walk(v: usize, t: usize, adj: &[Vec<(usize, f64)>], seen: &mut Vec<bool>, path: &mut Vec<usize>, len: f64, out: &mut Vec<(f64, Vec<usize>)>) {
            if v == t {
                out.push((len, path.clone()));
                return;
            }
            for &(w, weight) in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    path.push(w);
                    walk(w, t, adj, seen, path, len + 1.0 / weight, out);
                    path.pop();
                    seen[w] = false;
                }
            }
        }
        for s in 0..n {
            for t in s + 1..n {
                let mut paths = Vec::new();
                let mut seen = vec![false; n];
                seen[s] = true;
                walk(s, t, &adj, &mut seen, &mut vec![s], 0.0, &mut paths);
                if paths.is_empty() {
                    continue;
                }
                let best = paths.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
                let shortest: Vec<&Vec<usize>> = paths.iter().filter(|p| same_length(p.0, best)).map(|p| &p.1).collect();
                for v in 0..n {
                    if v == s || v == t {
                        continue;
                    }
                    let through = shortest.iter().filter(|p| p.contains(&v)).count();
                    score[v] += through as f64 / shortest.len() as f64;
                }
            }
        }
        let scale = if n > 2 { 2.0 / ((n - 1) * (n - 2)) as f64 } else { 0.0 };
        score.into_iter().map(|v| v * scale).collect()
    }

    #[test]
    fn betweenness_examples() {
        let path = graph(3, &[(0, 1, 0.4), (1, 2, 0.9)]);
        let b = betweenness_centrality(&path);
        assert!((b["N1"] - 1.0).abs() < 1e-15);
        assert_eq!(b["N0"], 0.0);
        let k4 = graph(4, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (1, 2, 1.0), (1, 3, 1.0), (2, 3, 1.0)]);
        assert!(betweenness_centrality(&k4).values().all(|v| *v == 0.0));
        let with_isolated = graph(4, &[(0, 1, 1.0), (1, 2, 1.0)]);
        assert_eq!(betweenness_centrality(&with_isolated)["N3"], 0.0);
        // a strong two-hop detour beats a weak direct edge
        let detour = graph(3, &[(0, 2, 0.1), (0, 1, 1.0), (1, 2, 1.0)]);
        assert!((betweenness_centrality(&detour)["N1"] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn split_and_outliers() {
        let g = graph(4, &[(0, 1, 0.1), (2, 3, 0.3), (0, 2, 0.2)]);
        let sectors: BTreeMap<String, String> = [("N0", "s"), ("N1", "s"), ("N2", "t"), ("N3", "t")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let split = weight_split(&g, &sectors).unwrap();
        assert_eq!(split.medians, (Some(0.2), Some(0.2)));
        assert_eq!(split.in_sector.len() + split.out_sector.len(), g.n_edges());
        let one: BTreeMap<String, String> = names(4).into_iter().map(|n| (n, "x".to_string())).collect();
        let split = weight_split(&g, &one).unwrap();
        assert!(split.out_sector.is_empty());
        assert_eq!(split.medians.1, None);
        let mut partial = one.clone();
        partial.remove("N3");
        assert!(matches!(weight_split(&g, &partial), Err(NetworkError::MissingSector(n)) if n == "N3"));

        let edge = |a: &str, b: &str, w: f64| (a.to_string(), b.to_string(), w);
        let edges = vec![edge("A", "B", 1.0), edge("A", "C", 2.0), edge("B", "C", 3.0), edge("C", "D", 4.0), edge("A", "D", 100.0)];
        let sample: Vec<f64> = edges.iter().map(|e| e.2).collect();
        assert_eq!(outlier_edges(&sample, &edges).unwrap(), vec![edge("A", "D", 100.0)]);
        let flat = vec![edge("A", "B", 0.5), edge("C", "D", 0.5)];
        assert!(outlier_edges(&[0.5, 0.5], &flat).unwrap().is_empty());
        let ties = vec![edge("X", "Y", 9.0), edge("A", "Z", 9.0), edge("A", "B", 1.0), edge("B", "C", 1.0), edge("C", "D", 1.0), edge("D", "E", 1.0)];
        let mut sample: Vec<f64> = ties.iter().map(|e| e.2).collect();
        sample.extend([1.0; 4]);
        let out = outlier_edges(&sample, &ties).unwrap();
        assert_eq!(out, vec![edge("A", "Z", 9.0), edge("X", "Y", 9.0)]);
        assert!(matches!(outlier_edges(&[], &ties), Err(NetworkError::EmptySample)));
    }

    #[test]
    fn edge_list_format() {
        let mut g = Network::new(vec!["ZZ".into(), "AA".into(), "MM".into()]);
        g.set_edge(0, 1, 0.5);
        g.set_edge(2, 0, 0.00229);
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "src\tdst\tweight\nAA\tZZ\t0.5000000000\nMM\tZZ\t0.002290000000\n");
        let back = Network::read_edge_list(buf.as_slice(), Some(g.nodes.clone())).unwrap();
        assert_eq!(back.edges, g.edges);
        assert!(Network::read_edge_list("a\tb\n".as_bytes(), None).is_err());
    }

    fn arb_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Vec<Vec<u32>>> {
        prop::collection::vec(prop::collection::vec(prop_oneof![3 => Just(0u32), 1 => 1u32..4], cols), rows)
    }

    fn arb_graph(max_nodes: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize, f64)>)> {
        (3..=max_nodes).prop_flat_map(|n| {
            let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
            let len = pairs.len();
            (Just(n), prop::collection::vec(prop::option::of(0.05f64..1.0), len)).prop_map(move |(n, ws)| {
                let edges = pairs.iter().zip(ws).filter_map(|(&(a, b), w)| w.map(|w| (a, b, w))).collect();
                (n, edges)
            })
        })
    }

    proptest! {
        #[test]
        fn cosine_matches_brute_force(rows in arb_matrix(20, 50)) {
            let m = CoverageMatrix::from_rows(names(20), rows.clone(), window());
            let g = build_network(&m).unwrap();
            for a in 0..20 {
                for b in 0..20 {
                    if a == b { continue; }
                    let expected = brute_cosine(&rows[a], &rows[b]);
                    let got = g.weight(a, b).unwrap_or(0.0);
                    prop_assert!((got - expected).abs() < 1e-12);
                    prop_assert_eq!(g.weight(a, b), g.weight(b, a));
                }
            }
        }

        #[test]
        fn row_scaling_keeps_weights(rows in arb_matrix(6, 12), row in 0usize..6, factor in 2u32..5) {
            let base = build_network(&CoverageMatrix::from_rows(names(6), rows.clone(), window())).unwrap();
            let mut scaled = rows.clone();
            scaled[row].iter_mut().for_each(|c| *c *= factor);
            let g = build_network(&CoverageMatrix::from_rows(names(6), scaled, window())).unwrap();
            prop_assert_eq!(base.edges.len(), g.edges.len());
            for (k, w) in &base.edges {
                prop_assert!((g.edges[k] - w).abs() < 1e-12);
            }
        }

        #[test]
        fn eigenvector_satisfies_eigen_equation((n, mut edges) in arb_graph(10), ring in 0.05f64..1.0) {
            // a ring keeps the graph connected
            for i in 0..n {
                let (a, b) = (i, (i + 1) % n);
                let key = (a.min(b), a.max(b));
                if !edges.iter().any(|e| (e.0, e.1) == key) { edges.push((key.0, key.1, ring)); }
            }
            let g = graph(n, &edges);
            let c = eigenvector_centrality(&g, 1e-12, 100_000).unwrap();
            let v: Vec<f64> = g.nodes.iter().map(|name| c[name]).collect();
            let (lambda, oracle) = dense_oracle(&g);
            let adj = g.adjacency();
            let mut residual = 0.0;
            for i in 0..n {
                let av: f64 = adj[i].iter().map(|&(j, w)| w * v[j]).sum();
                residual += (av - lambda * v[i]).powi(2);
            }
            prop_assert!(residual.sqrt() <= 1e-8, "residual {}", residual.sqrt());
            for (a, b) in v.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }

        #[test]
        fn betweenness_matches_enumeration((n, edges) in arb_graph(8)) {
            let g = graph(n, &edges);
            let b = betweenness_centrality(&g);
            let oracle = betweenness_oracle(&g);
            for (i, name) in g.nodes.iter().enumerate() {
                prop_assert!((b[name] - oracle[i]).abs() < 1e-9, "{} vs {}", b[name], oracle[i]);
            }
        }

        #[test]
        fn split_covers_every_edge((n, edges) in arb_graph(8), labels in prop::collection::vec(0u8..3, 8)) {
            let g = graph(n, &edges);
            let sectors: BTreeMap<String, String> = g.nodes.iter().enumerate().map(|(i, t)| (t.clone(), labels[i].to_string())).collect();
            let split = weight_split(&g, &sectors).unwrap();
            let mut all: Vec<_> = split.in_sector.iter().chain(&split.out_sector).cloned().collect();
            all.sort_by(|p, q| (&p.0, &p.1).cmp(&(&q.0, &q.1)));
            prop_assert_eq!(all, g.named_edges());
        }
    }
}
