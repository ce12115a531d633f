//! Country-level flow network over flagged trades: Louvain community
//! detection, Brandes betweenness centrality, import/export flow ratios, and
//! the composite transshipment risk index.
//!
//! Community and centrality algorithms run on the symmetrized graph.
//! Aggregate pseudo-partners ("World") and self-pairs never enter the
//! algorithmic graph; route-level reporting keeps them separately.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::csv_util::{csv_line, fmt_f64};
use crate::error::{Error, Result};
use crate::ingest::Flow;

/// Partner labels that aggregate many countries and must not become nodes.
pub const PSEUDO_PARTNERS: [&str; 1] = ["World"];

/// One flagged trade, reduced to what the graph needs.
#[derive(Debug, Clone, PartialEq)]
pub struct FlaggedTrade {
    pub reporter: String,
    pub partner: String,
    pub flow: Flow,
    pub primary_value_usd: f64,
}

/// Aggregated weight of one directed reporter->partner edge.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EdgeWeight {
    pub count: u64,
    pub value: f64,
}

/// Country-level flow graph. Nodes are sorted labels; the symmetrized view
/// weights edge (u, v) as directed(u->v) + directed(v->u).
#[derive(Debug, Clone, PartialEq)]
pub struct TradeGraph {
    pub nodes: Vec<String>,
    pub directed: BTreeMap<(usize, usize), EdgeWeight>,
    /// Symmetrized adjacency in the configured weight (count or value).
    sym: Vec<BTreeMap<usize, f64>>,
    /// Sum of all weighted degrees (2m).
    total_weight2: f64,
    pub import_value: Vec<f64>,
    pub export_value: Vec<f64>,
}

impl TradeGraph {
    pub fn node_index(&self, label: &str) -> Option<usize> {
        self.nodes.binary_search_by(|n| n.as_str().cmp(label)).ok()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Test-friendly constructor from explicit undirected weighted edges.
    pub fn from_weighted_edges(nodes: Vec<String>, edges: &[(usize, usize, f64)]) -> TradeGraph {
        let n = nodes.len();
        let mut sym: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        let mut total2 = 0.0;
        for &(u, v, w) in edges {
            assert!(u != v, "self-loops are excluded by construction");
            *sym[u].entry(v).or_insert(0.0) += w;
            *sym[v].entry(u).or_insert(0.0) += w;
            total2 += 2.0 * w;
        }
        TradeGraph {
            nodes,
            directed: BTreeMap::new(),
            sym,
            total_weight2: total2,
            import_value: vec![0.0; n],
            export_value: vec![0.0; n],
        }
    }
}

/// Aggregate flagged trades into the country graph. Self-pairs and pseudo
/// partners are dropped here (route reports retain them elsewhere).
pub fn build_graph(trades: &[FlaggedTrade], weight_by_value: bool) -> TradeGraph {
    let keep = |t: &&FlaggedTrade| {
        t.reporter != t.partner
            && !PSEUDO_PARTNERS.contains(&t.partner.as_str())
            && !PSEUDO_PARTNERS.contains(&t.reporter.as_str())
            && !t.partner.is_empty()
    };

    let mut labels: Vec<&str> = trades
        .iter()
        .filter(keep)
        .flat_map(|t| [t.reporter.as_str(), t.partner.as_str()])
        .collect();
    labels.sort_unstable();
    labels.dedup();
    let nodes: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
    let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (*l, i)).collect();

    let n = nodes.len();
    let mut directed: BTreeMap<(usize, usize), EdgeWeight> = BTreeMap::new();
    let mut import_value = vec![0.0; n];
    let mut export_value = vec![0.0; n];
    for t in trades.iter().filter(keep) {
        let u = index[t.reporter.as_str()];
        let v = index[t.partner.as_str()];
        let e = directed.entry((u, v)).or_default();
        e.count += 1;
        e.value += t.primary_value_usd;
        match t.flow {
            Flow::Import => import_value[u] += t.primary_value_usd,
            Flow::Export => export_value[u] += t.primary_value_usd,
            Flow::Other => {}
        }
    }

    let mut sym: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    let mut total2 = 0.0;
    for (&(u, v), e) in &directed {
        let w = if weight_by_value {
            e.value
        } else {
            e.count as f64
        };
        *sym[u].entry(v).or_insert(0.0) += w;
        *sym[v].entry(u).or_insert(0.0) += w;
        total2 += 2.0 * w;
    }

    TradeGraph {
        nodes,
        directed,
        sym,
        total_weight2: total2,
        import_value,
        export_value,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityPartition {
    /// node label -> community id (0-based, ordered by smallest member).
    pub assignment: BTreeMap<String, usize>,
    pub modularity: f64,
    /// Modularity after each Louvain pass; non-decreasing.
    pub pass_modularities: Vec<f64>,
}

/// Newman-Girvan modularity of a node partition on the symmetrized graph:
/// `Q = sum_c [ S_in(c)/2m - (S_tot(c)/2m)^2 ]` with weighted degrees.
/// An empty graph (m = 0) has Q = 0.
pub fn modularity(graph: &TradeGraph, partition: &BTreeMap<String, usize>) -> Result<f64> {
    let comm: Vec<usize> = graph
        .nodes
        .iter()
        .map(|n| {
            partition
                .get(n)
                .copied()
                .ok_or_else(|| Error::parameter(format!("partition misses node '{n}'")))
        })
        .collect::<Result<_>>()?;
    Ok(modularity_internal(&graph.sym, graph.total_weight2, &comm))
}

/// Adjacency stores symmetric ordered pairs; an aggregated self-entry at
/// `adj[u][u]` already carries twice the internal undirected weight, so it is
/// counted once in both degree and S_in.
fn modularity_internal(adj: &[BTreeMap<usize, f64>], total2: f64, comm: &[usize]) -> f64 {
    if total2 == 0.0 {
        return 0.0;
    }
    let mut sum_in: BTreeMap<usize, f64> = BTreeMap::new();
    let mut sum_tot: BTreeMap<usize, f64> = BTreeMap::new();
    for u in 0..adj.len() {
        let deg: f64 = adj[u].values().sum();
        *sum_tot.entry(comm[u]).or_insert(0.0) += deg;
        for (&v, &w) in &adj[u] {
            if comm[v] == comm[u] {
                *sum_in.entry(comm[u]).or_insert(0.0) += w;
            }
        }
    }
    sum_tot
        .iter()
        .map(|(c, tot)| {
            let inside = sum_in.get(c).copied().unwrap_or(0.0);
            inside / total2 - (tot / total2) * (tot / total2)
        })
        .sum()
}

/// One sweep phase of local moves; repeats until a full sweep moves nothing.
/// A move is accepted only on strictly positive modularity gain; candidate
/// communities are visited in ascending id so ties resolve to the lowest id.
fn local_phase(adj: &[BTreeMap<usize, f64>], total2: f64, comm: &mut [usize], order: &[usize]) -> bool {
    let n = adj.len();
    let deg: Vec<f64> = adj.iter().map(|m| m.values().sum()).collect();
    let mut comm_tot: Vec<f64> = vec![0.0; n];
    for u in 0..n {
        comm_tot[comm[u]] += deg[u];
    }

    let mut moved_any = false;
    loop {
        let mut moves = 0;
        for &u in order {
            let cu = comm[u];
            let mut w_to: BTreeMap<usize, f64> = BTreeMap::new();
            for (&v, &w) in &adj[u] {
                if v != u {
                    *w_to.entry(comm[v]).or_insert(0.0) += w;
                }
            }
            comm_tot[cu] -= deg[u];
            let stay = w_to.get(&cu).copied().unwrap_or(0.0) - comm_tot[cu] * deg[u] / total2;

            let mut best_c = cu;
            let mut best_dq = 0.0;
            for (&c, &w) in &w_to {
                if c == cu {
                    continue;
                }
                let gain = w - comm_tot[c] * deg[u] / total2;
                let dq = 2.0 * (gain - stay) / total2;
                if dq > best_dq + 1e-12 {
                    best_dq = dq;
                    best_c = c;
                }
            }
            comm_tot[best_c] += deg[u];
            if best_c != cu {
                comm[u] = best_c;
                moves += 1;
                moved_any = true;
            }
        }
        if moves == 0 {
            break;
        }
    }
    moved_any
}

fn aggregate(
    adj: &[BTreeMap<usize, f64>],
    members: &[Vec<usize>],
    comm: &[usize],
) -> (Vec<BTreeMap<usize, f64>>, Vec<Vec<usize>>) {
    let mut ids: Vec<usize> = comm.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let remap: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(i, c)| (*c, i)).collect();

    let k = ids.len();
    let mut new_adj: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); k];
    let mut new_members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for u in 0..adj.len() {
        let cu = remap[&comm[u]];
        new_members[cu].extend_from_slice(&members[u]);
        for (&v, &w) in &adj[u] {
            *new_adj[cu].entry(remap[&comm[v]]).or_insert(0.0) += w;
        }
    }
    for m in &mut new_members {
        m.sort_unstable();
    }
    (new_adj, new_members)
}

/// Two-phase Louvain on the symmetrized graph. The sweep order is ascending
/// node label by default; passing a seed shuffles it reproducibly. Community
/// ids are renumbered by the smallest member label, so the partition is
/// deterministic for a fixed input.
pub fn louvain_partition(graph: &TradeGraph, shuffle_seed: Option<u64>) -> CommunityPartition {
    let n = graph.nodes.len();
    if n == 0 || graph.total_weight2 == 0.0 {
        let assignment = graph
            .nodes
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        return CommunityPartition {
            assignment,
            modularity: 0.0,
            pass_modularities: Vec::new(),
        };
    }

    let mut rng = shuffle_seed.map(ChaCha8Rng::seed_from_u64);
    let mut adj = graph.sym.clone();
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut pass_modularities = Vec::new();
    let mut final_comm: Vec<usize> = (0..n).collect();

    loop {
        let level_n = adj.len();
        let mut order: Vec<usize> = (0..level_n).collect();
        if let Some(rng) = rng.as_mut() {
            order.shuffle(rng);
        }
        let mut comm: Vec<usize> = (0..level_n).collect();
        let moved = local_phase(&adj, graph.total_weight2, &mut comm, &order);

        for (ln, c) in comm.iter().enumerate() {
            for &orig in &members[ln] {
                final_comm[orig] = *c;
            }
        }
        pass_modularities.push(modularity_internal(&adj, graph.total_weight2, &comm));
        if !moved {
            break;
        }
        let (next_adj, next_members) = aggregate(&adj, &members, &comm);
        if next_adj.len() == adj.len() {
            break;
        }
        adj = next_adj;
        members = next_members;
    }

    // renumber communities by smallest member node index
    let mut first_member: BTreeMap<usize, usize> = BTreeMap::new();
    for (node, &c) in final_comm.iter().enumerate() {
        first_member.entry(c).or_insert(node);
    }
    let mut order: Vec<(usize, usize)> = first_member.into_iter().map(|(c, m)| (m, c)).collect();
    order.sort_unstable();
    let renumber: BTreeMap<usize, usize> =
        order.iter().enumerate().map(|(i, (_, c))| (*c, i)).collect();

    let assignment: BTreeMap<String, usize> = graph
        .nodes
        .iter()
        .enumerate()
        .map(|(i, l)| (l.clone(), renumber[&final_comm[i]]))
        .collect();
    let q = modularity(graph, &assignment).expect("partition covers all nodes");
    CommunityPartition {
        assignment,
        modularity: q,
        pass_modularities,
    }
}

/// Brandes betweenness centrality over unweighted shortest paths on the
/// symmetrized graph, normalized by (n-1)(n-2)/2. Fewer than three nodes
/// means no vertex can sit between a pair: all zeros.
pub fn betweenness(graph: &TradeGraph) -> BTreeMap<String, f64> {
    let n = graph.nodes.len();
    let mut centrality = vec![0.0f64; n];
    if n >= 3 {
        let neighbors: Vec<Vec<usize>> = graph
            .sym
            .iter()
            .map(|m| m.keys().copied().collect())
            .collect();
        for s in 0..n {
            let mut stack = Vec::new();
            let mut pred: Vec<Vec<usize>> = vec![Vec::new(); n];
            let mut sigma = vec![0.0f64; n];
            let mut dist = vec![-1i64; n];
            sigma[s] = 1.0;
            dist[s] = 0;
            let mut queue = VecDeque::new();
            queue.push_back(s);
            while let Some(v) = queue.pop_front() {
                stack.push(v);
                for &w in &neighbors[v] {
                    if dist[w] < 0 {
                        dist[w] = dist[v] + 1;
                        queue.push_back(w);
                    }
                    if dist[w] == dist[v] + 1 {
                        sigma[w] += sigma[v];
                        pred[w].push(v);
                    }
                }
            }
            let mut delta = vec![0.0f64; n];
            while let Some(w) = stack.pop() {
                for &v in &pred[w] {
                    delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
                }
                if w != s {
                    centrality[w] += delta[w];
                }
            }
        }
        // each unordered pair was accumulated from both endpoints
        let norm = ((n - 1) * (n - 2)) as f64 / 2.0;
        for c in &mut centrality {
            *c = *c / 2.0 / norm;
        }
    }
    graph
        .nodes
        .iter()
        .cloned()
        .zip(centrality)
        .collect()
}

/// Per-node centrality, flow balance, and the composite transshipment index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralityRow {
    pub node: String,
    pub betweenness: f64,
    pub flow_ratio: f64,
    pub import_value: f64,
    pub export_value: f64,
    pub avg_risk: f64,
    pub transshipment_index: f64,
}

fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Index = 0.4 * min-max betweenness + 0.3 * flow balance + 0.3 * min-max
/// average risk. The flow ratio import/export is capped to [0, 2] (a node
/// with zero exports caps at 2); balance = max(0, 1 - |ratio - 1|).
pub fn transshipment_report(
    graph: &TradeGraph,
    node_betweenness: &BTreeMap<String, f64>,
    avg_risk: &BTreeMap<String, f64>,
) -> Vec<CentralityRow> {
    let n = graph.nodes.len();
    let bt: Vec<f64> = graph
        .nodes
        .iter()
        .map(|l| node_betweenness.get(l).copied().unwrap_or(0.0))
        .collect();
    let risk: Vec<f64> = graph
        .nodes
        .iter()
        .map(|l| avg_risk.get(l).copied().unwrap_or(0.0))
        .collect();
    let norm_bt = min_max_normalize(&bt);
    let norm_risk = min_max_normalize(&risk);

    (0..n)
        .map(|i| {
            let imports = graph.import_value[i];
            let exports = graph.export_value[i];
            let ratio = if exports == 0.0 {
                2.0
            } else {
                (imports / exports).clamp(0.0, 2.0)
            };
            let balance = (1.0 - (ratio - 1.0).abs()).max(0.0);
            CentralityRow {
                node: graph.nodes[i].clone(),
                betweenness: bt[i],
                flow_ratio: ratio,
                import_value: imports,
                export_value: exports,
                avg_risk: risk[i],
                transshipment_index: 0.4 * norm_bt[i] + 0.3 * balance + 0.3 * norm_risk[i],
            }
        })
        .collect()
}

pub fn write_communities_csv(path: &Path, partition: &CommunityPartition) -> Result<()> {
    let mut out = format!("# modularity={}\n", fmt_f64(partition.modularity));
    out.push_str("node,community\n");
    for (node, community) in &partition.assignment {
        out.push_str(&csv_line(&[node.clone(), community.to_string()]));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_centrality_csv(path: &Path, rows: &[CentralityRow]) -> Result<()> {
    let mut out =
        String::from("node,betweenness,flow_ratio,import_value,export_value,transshipment_index\n");
    for r in rows {
        out.push_str(&csv_line(&[
            r.node.clone(),
            fmt_f64(r.betweenness),
            fmt_f64(r.flow_ratio),
            fmt_f64(r.import_value),
            fmt_f64(r.export_value),
            fmt_f64(r.transshipment_index),
        ]));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
