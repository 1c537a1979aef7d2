//! Edge-list and label-file ingestion.
//!
//! Edge lists are whitespace separated, one `source target [ignored...]` pair
//! per line; blank lines and lines starting with `#` are skipped. Label files
//! use `node_id class` lines with an integer class.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use sanvi_core::Graph;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawNetwork {
    /// Directed pairs in file order, duplicates kept.
    pub edges: Vec<(String, String)>,
    /// Every id seen, in first-seen order.
    pub nodes: Vec<String>,
    pub labels: BTreeMap<String, i64>,
}

impl RawNetwork {
    pub fn with_labels(mut self, labels: BTreeMap<String, i64>) -> Self {
        self.labels = labels;
        self
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub fn parse_edge_list(text: &str) -> Result<RawNetwork> {
    let mut raw = RawNetwork::default();
    let mut seen: HashSet<&str> = HashSet::new();
    for (line, l) in content_lines(text) {
        let mut tok = l.split_whitespace();
        let (Some(a), Some(b)) = (tok.next(), tok.next()) else {
            return Err(Error::Parse { line, reason: format!("expected two node ids, got `{l}`") });
        };
        for id in [a, b] {
            if seen.insert(id) {
                raw.nodes.push(id.to_string());
            }
        }
        raw.edges.push((a.to_string(), b.to_string()));
    }
    Ok(raw)
}

pub fn parse_labels(text: &str) -> Result<BTreeMap<String, i64>> {
    let mut out = BTreeMap::new();
    for (line, l) in content_lines(text) {
        let tok: Vec<&str> = l.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()).collect();
        if tok.len() < 2 {
            return Err(Error::Parse { line, reason: format!("expected `node_id class`, got `{l}`") });
        }
        let class = tok[1]
            .parse::<i64>()
            .map_err(|e| Error::Parse { line, reason: format!("class `{}`: {e}", tok[1]) })?;
        out.insert(tok[0].to_string(), class);
    }
    Ok(out)
}

/// Numeric ids compare as numbers, everything else lexicographically.
pub fn compare_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<i128>(), b.parse::<i128>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub graph: Graph,
    /// Original id of each row, ascending by [`compare_ids`].
    pub node_ids: Vec<String>,
    /// Class per row, if the raw network carried labels.
    pub labels: Option<Vec<i64>>,
    pub self_loops: usize,
}

impl Ingested {
    pub fn node_map(&self) -> HashMap<&str, usize> {
        self.node_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect()
    }
}

/// Symmetrizes, collapses multi-edges, keeps self-loops, and restricts to the
/// largest connected component. Ties between equally large components go to
/// the one holding the smallest id.
pub fn to_undirected_lcc(raw: &RawNetwork) -> Result<Ingested> {
    if raw.edges.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let index: HashMap<&str, usize> = raw.nodes.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let m = raw.nodes.len();
    let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (a, b) in &raw.edges {
        let (i, j) = (index[a.as_str()], index[b.as_str()]);
        nbrs[i].push(j);
        nbrs[j].push(i);
    }

    let mut comp = vec![usize::MAX; m];
    // (size, smallest id) per component
    let mut comps: Vec<(usize, usize)> = Vec::new();
    for start in 0..m {
        if comp[start] != usize::MAX {
            continue;
        }
        let c = comps.len();
        let mut size = 0;
        let mut smallest = start;
        let mut queue = VecDeque::from([start]);
        comp[start] = c;
        while let Some(u) = queue.pop_front() {
            size += 1;
            if compare_ids(&raw.nodes[u], &raw.nodes[smallest]) == Ordering::Less {
                smallest = u;
            }
            for &v in &nbrs[u] {
                if comp[v] == usize::MAX {
                    comp[v] = c;
                    queue.push_back(v);
                }
            }
        }
        comps.push((size, smallest));
    }
    let best = (0..comps.len())
        .max_by(|&x, &y| {
            comps[x]
                .0
                .cmp(&comps[y].0)
                .then_with(|| compare_ids(&raw.nodes[comps[y].1], &raw.nodes[comps[x].1]))
        })
        .ok_or(Error::EmptyGraph)?;

    let mut kept: Vec<usize> = (0..m).filter(|&u| comp[u] == best).collect();
    kept.sort_by(|&x, &y| compare_ids(&raw.nodes[x], &raw.nodes[y]));
    let mut row = vec![usize::MAX; m];
    for (r, &u) in kept.iter().enumerate() {
        row[u] = r;
    }
    let edges = raw.edges.iter().filter_map(|(a, b)| {
        let (i, j) = (row[index[a.as_str()]], row[index[b.as_str()]]);
        (i != usize::MAX && j != usize::MAX).then_some((i, j))
    });
    let graph = Graph::from_edges(kept.len(), edges)?;
    let node_ids: Vec<String> = kept.iter().map(|&u| raw.nodes[u].clone()).collect();
    let labels = if raw.labels.is_empty() {
        None
    } else {
        let l = node_ids
            .iter()
            .map(|id| raw.labels.get(id).copied().ok_or_else(|| Error::MissingLabel(id.clone())))
            .collect::<Result<Vec<_>>>()?;
        Some(l)
    };
    let self_loops = graph.self_loops();
    Ok(Ingested { graph, node_ids, labels, self_loops })
}

/// Canonical edge list of an ingested graph, one `id id` line per undirected
/// edge (`i <= j`), readable by [`parse_edge_list`].
pub fn export_edge_list(ing: &Ingested) -> String {
    let mut out = String::new();
    for (i, j) in ing.graph.edges() {
        out.push_str(&ing.node_ids[i]);
        out.push(' ');
        out.push_str(&ing.node_ids[j]);
        out.push('\n');
    }
    out
}
