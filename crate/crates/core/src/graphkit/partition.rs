//! Balanced k-way graph partitioning.
//!
//! Multilevel scheme: heavy-edge matching coarsens the graph, greedy graph growing
//! seeds a balanced partition on the coarsest level, and boundary refinement runs
//! while projecting back to the original nodes. Every random choice comes from a
//! seeded stream, so the result is a pure function of `(graph, num_parts, seed)`.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SparseMatrix;
use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    num_parts: usize,
    assignment: Vec<usize>,
}

impl Partition {
    /// Checks index range and that no part is empty.
    pub fn new(num_parts: usize, assignment: Vec<usize>) -> Result<Self> {
        if num_parts == 0 {
            return Err(Error::Partition("num_parts must be >= 1".into()));
        }
        let mut sizes = vec![0usize; num_parts];
        for (node, &p) in assignment.iter().enumerate() {
            if p >= num_parts {
                return Err(Error::Partition(format!(
                    "node {node} has part {p}, expected < {num_parts}"
                )));
            }
            sizes[p] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::Partition(format!("part {empty} is empty")));
        }
        Ok(Partition {
            num_parts,
            assignment,
        })
    }

    pub fn num_parts(&self) -> usize {
        self.num_parts
    }

    pub fn num_nodes(&self) -> usize {
        self.assignment.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn part_of(&self, node: usize) -> usize {
        self.assignment[node]
    }

    pub fn part_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_parts];
        for &p in &self.assignment {
            sizes[p] += 1;
        }
        sizes
    }

    /// Largest part size allowed under `tolerance`: `ceil(N/k)·(1+tolerance)`.
    pub fn size_cap(num_nodes: usize, num_parts: usize, tolerance: f64) -> usize {
        let ideal = num_nodes.div_ceil(num_parts);
        ((ideal as f64) * (1.0 + tolerance)).floor() as usize
    }

    pub fn check_balance(&self, tolerance: f64) -> Result<()> {
        let cap = Self::size_cap(self.num_nodes(), self.num_parts, tolerance);
        let max = self.part_sizes().into_iter().max().unwrap_or(0);
        if max > cap {
            return Err(Error::Partition(format!(
                "largest part has {max} nodes, cap is {cap} (tolerance {tolerance})"
            )));
        }
        Ok(())
    }

    /// Total absolute weight of edges whose endpoints lie in different parts (each
    /// undirected edge counted once for a symmetric matrix).
    pub fn edge_cut(&self, adj: &SparseMatrix) -> f64 {
        adj.triplets()
            .filter(|&(r, c, _)| r < c && self.assignment[r] != self.assignment[c])
            .map(|(_, _, v)| v.abs())
            .sum()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PartitionOptions {
    pub imbalance_tolerance: f64,
    pub refine_passes: usize,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        PartitionOptions {
            imbalance_tolerance: 0.05,
            refine_passes: 8,
        }
    }
}

pub fn partition_graph(adj: &SparseMatrix, num_parts: usize, seed: u64) -> Result<Partition> {
    partition_graph_with(adj, num_parts, seed, &PartitionOptions::default())
}

pub fn partition_graph_with(
    adj: &SparseMatrix,
    num_parts: usize,
    seed: u64,
    opts: &PartitionOptions,
) -> Result<Partition> {
    let n = adj.rows();
    if adj.cols() != n {
        return Err(Error::dims("partition_graph", "square adjacency", format!("{:?}", adj.shape())));
    }
    if num_parts == 0 || num_parts > n {
        return Err(Error::Partition(format!(
            "num_parts must be in 1..={n}, got {num_parts}"
        )));
    }
    if num_parts == 1 {
        return Partition::new(1, vec![0; n]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let finest = Graph::from_adjacency(adj);

    // Coarsen.
    let coarsen_target = (8 * num_parts).max(32);
    let mut levels: Vec<(Graph, Vec<usize>)> = Vec::new();
    let mut current = finest;
    while current.len() > coarsen_target {
        let max_vwgt = ((1.5 * current.total_vwgt() as f64) / coarsen_target as f64).ceil().max(1.0) as usize;
        let (coarse, cmap) = current.coarsen(&mut rng, max_vwgt);
        if coarse.len() as f64 > 0.95 * current.len() as f64 {
            break;
        }
        levels.push((current, cmap));
        current = coarse;
    }

    // Seed and refine from coarse to fine.
    let mut part = current.grow_initial(num_parts, &mut rng);
    refine(&current, &mut part, num_parts, opts, false);
    while let Some((finer, cmap)) = levels.pop() {
        part = cmap.iter().map(|&c| part[c]).collect();
        current = finer;
        refine(&current, &mut part, num_parts, opts, false);
    }
    refine(&current, &mut part, num_parts, opts, true);

    let p = Partition::new(num_parts, part)?;
    p.check_balance(opts.imbalance_tolerance)?;
    Ok(p)
}

/// Undirected weighted graph with vertex weights, used internally by the partitioner.
struct Graph {
    xadj: Vec<usize>,
    adjncy: Vec<usize>,
    adjwgt: Vec<f64>,
    vwgt: Vec<usize>,
}

impl Graph {
    /// Symmetrises `|A| + |A|ᵀ` and drops self-loops.
    fn from_adjacency(adj: &SparseMatrix) -> Self {
        let n = adj.rows();
        let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * adj.nnz());
        for (r, c, v) in adj.triplets() {
            if r != c {
                t.push((r, c, v.abs()));
                t.push((c, r, v.abs()));
            }
        }
        let sym = SparseMatrix::from_triplets(n, n, t).expect("indices from a valid matrix");
        Graph {
            xadj: sym.row_offsets().to_vec(),
            adjncy: sym.col_indices().to_vec(),
            adjwgt: sym.values().to_vec(),
            vwgt: vec![1; n],
        }
    }

    fn len(&self) -> usize {
        self.vwgt.len()
    }

    fn total_vwgt(&self) -> usize {
        self.vwgt.iter().sum()
    }

    fn neighbors(&self, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (s, e) = (self.xadj[v], self.xadj[v + 1]);
        self.adjncy[s..e].iter().copied().zip(self.adjwgt[s..e].iter().copied())
    }

    /// Heavy-edge matching; returns the coarse graph and the fine→coarse map.
    fn coarsen(&self, rng: &mut ChaCha8Rng, max_vwgt: usize) -> (Graph, Vec<usize>) {
        let n = self.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut mate = vec![NONE; n];
        for &v in &order {
            if mate[v] != NONE {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for (u, w) in self.neighbors(v) {
                if mate[u] != NONE || u == v || self.vwgt[u] + self.vwgt[v] > max_vwgt {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bu, bw)) => w > bw || (w == bw && u < bu),
                };
                if better {
                    best = Some((u, w));
                }
            }
            match best {
                Some((u, _)) => {
                    mate[v] = u;
                    mate[u] = v;
                }
                None => mate[v] = v,
            }
        }

        let mut cmap = vec![NONE; n];
        let mut cn = 0;
        for v in 0..n {
            if cmap[v] == NONE {
                cmap[v] = cn;
                cmap[mate[v]] = cn;
                cn += 1;
            }
        }
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); cn];
        for v in 0..n {
            members[cmap[v]].push(v);
        }

        let mut xadj = Vec::with_capacity(cn + 1);
        xadj.push(0);
        let mut adjncy = Vec::new();
        let mut adjwgt = Vec::new();
        let mut vwgt = Vec::with_capacity(cn);
        let mut slot = vec![NONE; cn];
        for (c, group) in members.iter().enumerate() {
            let start = adjncy.len();
            vwgt.push(group.iter().map(|&v| self.vwgt[v]).sum());
            for &v in group {
                for (u, w) in self.neighbors(v) {
                    let cu = cmap[u];
                    if cu == c {
                        continue;
                    }
                    if slot[cu] == NONE {
                        slot[cu] = adjncy.len();
                        adjncy.push(cu);
                        adjwgt.push(w);
                    } else {
                        adjwgt[slot[cu]] += w;
                    }
                }
            }
            for &cu in &adjncy[start..] {
                slot[cu] = NONE;
            }
            xadj.push(adjncy.len());
        }
        (
            Graph {
                xadj,
                adjncy,
                adjwgt,
                vwgt,
            },
            cmap,
        )
    }

    /// Greedy graph growing: each part grows from a seed by repeatedly absorbing the
    /// frontier node most strongly connected to it, until it reaches its share of
    /// the remaining weight.
    fn grow_initial(&self, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let n = self.len();
        let mut part = vec![NONE; n];
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut remaining_weight = self.total_vwgt();
        let mut unassigned = n;
        let mut cursor = 0;
        let mut gain = vec![0.0f64; n];
        let mut in_frontier = vec![false; n];

        for p in 0..k {
            if p == k - 1 {
                for v in 0..n {
                    if part[v] == NONE {
                        part[v] = p;
                    }
                }
                break;
            }
            let target = remaining_weight as f64 / (k - p) as f64;
            let must_leave = k - 1 - p;
            let mut frontier: Vec<usize> = Vec::new();
            let mut weight = 0usize;

            loop {
                if unassigned <= must_leave || weight as f64 >= target {
                    break;
                }
                // Best frontier node, or the next unassigned node in seeded order.
                let mut pick: Option<usize> = None;
                for &v in &frontier {
                    if part[v] != NONE {
                        continue;
                    }
                    let better = match pick {
                        None => true,
                        Some(b) => gain[v] > gain[b] || (gain[v] == gain[b] && v < b),
                    };
                    if better {
                        pick = Some(v);
                    }
                }
                let v = match pick {
                    Some(v) => v,
                    None => {
                        while part[order[cursor]] != NONE {
                            cursor += 1;
                        }
                        order[cursor]
                    }
                };
                // Don't overshoot by more than half a vertex once the part is non-empty.
                if weight > 0 && (weight + self.vwgt[v]) as f64 > target + self.vwgt[v] as f64 / 2.0 {
                    break;
                }
                part[v] = p;
                weight += self.vwgt[v];
                unassigned -= 1;
                for (u, w) in self.neighbors(v) {
                    if part[u] == NONE {
                        gain[u] += w;
                        if !in_frontier[u] {
                            in_frontier[u] = true;
                            frontier.push(u);
                        }
                    }
                }
            }
            remaining_weight -= weight;
            for &v in &frontier {
                gain[v] = 0.0;
                in_frontier[v] = false;
            }
        }
        part
    }
}

/// Greedy boundary refinement. With `strict`, also forces every part under the
/// balance cap (always feasible when all vertex weights are 1).
fn refine(g: &Graph, part: &mut [usize], k: usize, opts: &PartitionOptions, strict: bool) {
    let n = g.len();
    let total = g.total_vwgt();
    let cap = Partition::size_cap(total, k, opts.imbalance_tolerance).max(1);
    let mut part_w = vec![0usize; k];
    for v in 0..n {
        part_w[part[v]] += g.vwgt[v];
    }
    let mut conn = vec![0.0f64; k];
    let mut touched: Vec<usize> = Vec::new();

    let connectivity = |v: usize, part: &[usize], conn: &mut Vec<f64>, touched: &mut Vec<usize>| {
        for &q in touched.iter() {
            conn[q] = 0.0;
        }
        touched.clear();
        for (u, w) in g.neighbors(v) {
            let q = part[u];
            if conn[q] == 0.0 && !touched.contains(&q) {
                touched.push(q);
            }
            conn[q] += w;
        }
        touched.sort_unstable();
    };

    for _ in 0..opts.refine_passes {
        let mut moved = 0;
        for v in 0..n {
            let from = part[v];
            let vw = g.vwgt[v];
            if part_w[from] == vw {
                continue;
            }
            connectivity(v, part, &mut conn, &mut touched);
            let internal = if touched.contains(&from) { conn[from] } else { 0.0 };
            let mut best: Option<(usize, f64)> = None;
            for &q in &touched {
                if q == from || part_w[q] + vw > cap {
                    continue;
                }
                let gain = conn[q] - internal;
                let ok = gain > 0.0 || (gain == 0.0 && part_w[q] + vw < part_w[from]);
                if !ok {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((_, bg)) => gain > bg,
                };
                if better {
                    best = Some((q, gain));
                }
            }
            if let Some((q, _)) = best {
                part[v] = q;
                part_w[from] -= vw;
                part_w[q] += vw;
                moved += 1;
            }
        }
        if moved == 0 {
            break;
        }
    }

    if !strict {
        return;
    }
    // Push nodes out of overweight parts, choosing the least damaging move each time.
    while let Some(over) = (0..k).find(|&p| part_w[p] > cap) {
        let lightest = (0..k).min_by_key(|&q| (part_w[q], q)).unwrap();
        let mut best: Option<(usize, usize, f64)> = None;
        for v in (0..n).filter(|&v| part[v] == over) {
            connectivity(v, part, &mut conn, &mut touched);
            let internal = if touched.contains(&over) { conn[over] } else { 0.0 };
            let mut candidates: Vec<usize> = touched
                .iter()
                .copied()
                .filter(|&q| q != over && part_w[q] + g.vwgt[v] <= cap)
                .collect();
            if candidates.is_empty() && part_w[lightest] + g.vwgt[v] <= cap {
                candidates.push(lightest);
            }
            for q in candidates {
                let to_q = if touched.contains(&q) { conn[q] } else { 0.0 };
                let gain = to_q - internal;
                let better = match best {
                    None => true,
                    Some((_, _, bg)) => gain > bg,
                };
                if better {
                    best = Some((v, q, gain));
                }
            }
        }
        match best {
            Some((v, q, _)) => {
                part_w[over] -= g.vwgt[v];
                part_w[q] += g.vwgt[v];
                part[v] = q;
            }
            None => break,
        }
    }
}

/// Reads one part index per line. The part count is inferred as `max + 1`.
pub fn load_partition(path: &Path, num_nodes: usize) -> Result<Partition> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut assignment = Vec::with_capacity(num_nodes);
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let p: usize = line.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: format!("expected a non-negative part index, got `{line}`"),
        })?;
        if p >= num_nodes {
            return Err(Error::Partition(format!(
                "line {}: part index {p} out of range for {num_nodes} nodes",
                lineno + 1
            )));
        }
        assignment.push(p);
    }
    if assignment.len() != num_nodes {
        return Err(Error::Partition(format!(
            "{} has {} entries, expected {num_nodes}",
            path.display(),
            assignment.len()
        )));
    }
    let num_parts = assignment.iter().max().map_or(0, |&m| m + 1);
    Partition::new(num_parts, assignment)
}

pub fn write_partition(path: &Path, partition: &Partition) -> Result<()> {
    let mut out = Vec::with_capacity(partition.num_nodes() * 4);
    for &p in partition.assignment() {
        writeln!(out, "{p}").expect("write to Vec");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clique_pair() -> SparseMatrix {
        let mut t = Vec::new();
        for block in [0usize, 4] {
            for i in 0..4 {
                for j in 0..4 {
                    if i != j {
                        t.push((block + i, block + j, 1.0));
                    }
                }
            }
        }
        SparseMatrix::from_triplets(8, 8, t).unwrap()
    }

    #[test]
    fn single_part() {
        let p = partition_graph(&clique_pair(), 1, 0).unwrap();
        assert!(p.assignment().iter().all(|&x| x == 0));
    }

    #[test]
    fn two_cliques_split_cleanly() {
        let adj = clique_pair();
        // Exhaustive oracle: the minimum cut over all balanced 4/4 splits is zero and
        // is attained only by the clique split.
        let mut best_cut = f64::INFINITY;
        let mut best_masks = Vec::new();
        for mask in 0u32..256 {
            if mask.count_ones() != 4 || mask & 1 == 0 {
                continue;
            }
            let assign: Vec<usize> = (0..8).map(|v| ((mask >> v) & 1) as usize).collect();
            let cut = Partition::new(2, assign).unwrap().edge_cut(&adj);
            if cut < best_cut {
                best_cut = cut;
                best_masks = vec![mask];
            } else if cut == best_cut {
                best_masks.push(mask);
            }
        }
        assert_eq!(best_cut, 0.0);
        assert_eq!(best_masks, vec![0b0000_1111]);

        for seed in 0..10 {
            let p = partition_graph(&adj, 2, seed).unwrap();
            assert_eq!(p.edge_cut(&adj), 0.0, "seed {seed}: {:?}", p.assignment());
        }
    }

    #[test]
    fn deterministic_and_balanced_on_ring() {
        let n = 200;
        let mut t = Vec::new();
        for i in 0..n {
            let j = (i + 1) % n;
            t.push((i, j, 1.0));
            t.push((j, i, 1.0));
        }
        let adj = SparseMatrix::from_triplets(n, n, t).unwrap();
        let a = partition_graph(&adj, 7, 42).unwrap();
        let b = partition_graph(&adj, 7, 42).unwrap();
        assert_eq!(a, b);
        a.check_balance(0.05).unwrap();
        assert!(a.part_sizes().iter().all(|&s| s > 0));
    }

    #[test]
    fn too_many_parts_is_an_error() {
        assert!(partition_graph(&clique_pair(), 9, 0).is_err());
        assert!(partition_graph(&clique_pair(), 0, 0).is_err());
    }

    #[test]
    fn every_node_its_own_part() {
        let p = partition_graph(&clique_pair(), 8, 3).unwrap();
        let mut sizes = p.part_sizes();
        sizes.sort();
        assert_eq!(sizes, vec![1; 8]);
    }

    #[test]
    fn load_partition_validates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("part.txt");
        fs::write(&path, "0\n1\n1\n0\n").unwrap();
        let p = load_partition(&path, 4).unwrap();
        assert_eq!(p.num_parts(), 2);
        assert!(load_partition(&path, 5).is_err());
        fs::write(&path, "0\n2\n2\n0\n").unwrap();
        assert!(load_partition(&path, 4).is_err(), "part 1 empty");
        fs::write(&path, "0\n9\n1\n0\n").unwrap();
        assert!(load_partition(&path, 4).is_err(), "out of range");
        fs::write(&path, "0\nx\n1\n0\n").unwrap();
        assert!(matches!(load_partition(&path, 4), Err(Error::Parse { line: 2, .. })));

        let q = Partition::new(2, vec![1, 0, 0, 1]).unwrap();
        write_partition(&path, &q).unwrap();
        assert_eq!(load_partition(&path, 4).unwrap(), q);
    }
}
