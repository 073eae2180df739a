//! Randomized kd-forest with best-bin-first search for real-valued descriptors.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LEAF_SIZE: usize = 8;
const VARIANCE_SAMPLE: usize = 128;
const TOP_DIMS: usize = 5;
const FOREST_SEED: u64 = 0x6b64_7472_6565;

#[derive(Clone, Copy, Debug)]
enum Node {
    Split { dim: u32, value: f32, left: u32, right: u32 },
    Leaf { start: u32, end: u32 },
}

struct Tree {
    nodes: Vec<Node>,
    order: Vec<u32>,
}

pub(crate) struct KdForest {
    trees: Vec<Tree>,
    dim: usize,
}

/// Per-thread search scratch space.
pub(crate) struct Scratch {
    visited: Vec<u32>,
    epoch: u32,
}

impl Scratch {
    pub fn new(n: usize) -> Self {
        Scratch { visited: vec![0; n], epoch: 0 }
    }
}

#[derive(Clone, Copy, PartialEq, PartialOrd)]
struct Key(f32, u32, u32);

impl Eq for Key {}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1)).then(self.2.cmp(&other.2))
    }
}

pub(crate) fn squared_distance(a: &[f32], b: &[f32]) -> f32 {
    // eight independent accumulators keep the loop vectorizable and the
    // summation order fixed
    let mut acc = [0.0f32; 8];
    for (ca, cb) in a.chunks_exact(8).zip(b.chunks_exact(8)) {
        for i in 0..8 {
            let d = ca[i] - cb[i];
            acc[i] += d * d;
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in a.chunks_exact(8).remainder().iter().zip(b.chunks_exact(8).remainder()) {
        tail += (x - y) * (x - y);
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Sorted `(squared distance, index)` list holding the best `k` entries.
pub(crate) struct TopK {
    pub items: Vec<(f32, u32)>,
    k: usize,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        TopK { items: Vec::with_capacity(k + 1), k }
    }

    pub fn push(&mut self, d: f32, idx: u32) {
        if self.items.len() == self.k && (d, idx) >= self.items[self.k - 1] {
            return;
        }
        let pos = self.items.partition_point(|&e| e < (d, idx));
        self.items.insert(pos, (d, idx));
        self.items.truncate(self.k);
    }
}

impl KdForest {
    pub fn build(data: &[f32], dim: usize, n_trees: usize) -> Self {
        let n = data.len() / dim;
        let mut rng = ChaCha8Rng::seed_from_u64(FOREST_SEED);
        let trees = (0..n_trees)
            .map(|_| {
                let mut order: Vec<u32> = (0..n as u32).collect();
                order.shuffle(&mut rng);
                let mut nodes = Vec::new();
                build_node(data, dim, &mut order, 0, &mut nodes, &mut rng);
                Tree { nodes, order }
            })
            .collect();
        KdForest { trees, dim }
    }

    /// Approximate k nearest neighbours, examining at most `max_checks` points
    /// (at least the first leaf of every tree).
    pub fn search(&self, data: &[f32], query: &[f32], k: usize, max_checks: usize, scratch: &mut Scratch) -> TopK {
        scratch.epoch = scratch.epoch.wrapping_add(1);
        if scratch.epoch == 0 {
            scratch.visited.fill(0);
            scratch.epoch = 1;
        }
        let mut top = TopK::new(k);
        let mut heap: BinaryHeap<Reverse<Key>> = BinaryHeap::new();
        let mut checks = 0usize;
        for t in 0..self.trees.len() {
            self.descend(t, 0, 0.0, data, query, &mut top, &mut heap, &mut checks, scratch);
        }
        while let Some(Reverse(Key(bound, t, node))) = heap.pop() {
            // the accumulated bound is only a priority, not a valid lower
            // bound, so the check budget alone ends the search
            if checks >= max_checks {
                break;
            }
            self.descend(t as usize, node as usize, bound, data, query, &mut top, &mut heap, &mut checks, scratch);
        }
        top
    }

    #[allow(clippy::too_many_arguments)]
    fn descend(
        &self,
        t: usize,
        mut node: usize,
        mindist: f32,
        data: &[f32],
        query: &[f32],
        top: &mut TopK,
        heap: &mut BinaryHeap<Reverse<Key>>,
        checks: &mut usize,
        scratch: &mut Scratch,
    ) {
        let tree = &self.trees[t];
        loop {
            match tree.nodes[node] {
                Node::Split { dim, value, left, right } => {
                    let diff = query[dim as usize] - value;
                    let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                    heap.push(Reverse(Key(mindist + diff * diff, t as u32, far)));
                    node = near as usize;
                }
                Node::Leaf { start, end } => {
                    for &idx in &tree.order[start as usize..end as usize] {
                        let slot = &mut scratch.visited[idx as usize];
                        if *slot == scratch.epoch {
                            continue;
                        }
                        *slot = scratch.epoch;
                        let row = &data[idx as usize * self.dim..(idx as usize + 1) * self.dim];
                        top.push(squared_distance(query, row), idx);
                        *checks += 1;
                    }
                    return;
                }
            }
        }
    }
}

fn build_node(
    data: &[f32],
    dim: usize,
    order: &mut [u32],
    offset: usize,
    nodes: &mut Vec<Node>,
    rng: &mut ChaCha8Rng,
) -> u32 {
    let id = nodes.len() as u32;
    let leaf = Node::Leaf { start: offset as u32, end: (offset + order.len()) as u32 };
    nodes.push(leaf);
    if order.len() <= LEAF_SIZE {
        return id;
    }
    let sample = &order[..order.len().min(VARIANCE_SAMPLE)];
    let mut mean = vec![0.0f64; dim];
    for &i in sample {
        for (m, v) in mean.iter_mut().zip(&data[i as usize * dim..(i as usize + 1) * dim]) {
            *m += *v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= sample.len() as f64);
    let mut var = vec![0.0f64; dim];
    for &i in sample {
        for ((s, m), v) in var.iter_mut().zip(&mean).zip(&data[i as usize * dim..(i as usize + 1) * dim]) {
            *s += (*v as f64 - m).powi(2);
        }
    }
    let mut dims: Vec<usize> = (0..dim).collect();
    dims.sort_by(|&a, &b| var[b].total_cmp(&var[a]).then(a.cmp(&b)));
    let split_dim = dims[rng.gen_range(0..TOP_DIMS.min(dim))];
    if var[split_dim] <= 0.0 {
        return id;
    }
    let value = mean[split_dim] as f32;
    let value_of = |i: u32| data[i as usize * dim + split_dim];
    // in-place partition: `< value` to the left
    let mut lo = 0;
    for j in 0..order.len() {
        if value_of(order[j]) < value {
            order.swap(lo, j);
            lo += 1;
        }
    }
    if lo == 0 || lo == order.len() {
        return id;
    }
    let (left_part, right_part) = order.split_at_mut(lo);
    let left = build_node(data, dim, left_part, offset, nodes, rng);
    let right = build_node(data, dim, right_part, offset + lo, nodes, rng);
    nodes[id as usize] = Node::Split { dim: split_dim as u32, value, left, right };
    id
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topk_orders_by_distance_then_index() {
        let mut t = TopK::new(3);
        for (d, i) in [(3.0, 0), (1.0, 5), (1.0, 2), (0.5, 9), (2.0, 1)] {
            t.push(d, i);
        }
        assert_eq!(t.items, vec![(0.5, 9), (1.0, 2), (1.0, 5)]);
    }

    #[test]
    fn exhaustive_checks_give_exact_results() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dim = 16;
        let n = 500;
        let data: Vec<f32> = (0..n * dim).map(|_| rng.gen()).collect();
        let forest = KdForest::build(&data, dim, 2);
        let mut scratch = Scratch::new(n);
        for q in 0..20 {
            let query: Vec<f32> = (0..dim).map(|_| rng.gen()).collect();
            let approx = forest.search(&data, &query, 3, usize::MAX, &mut scratch);
            let mut all: Vec<(f32, u32)> =
                (0..n).map(|i| (squared_distance(&query, &data[i * dim..(i + 1) * dim]), i as u32)).collect();
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(approx.items, all[..3].to_vec(), "query {q}");
        }
    }

    #[test]
    fn squared_distance_matches_naive() {
        let a: Vec<f32> = (0..13).map(|i| i as f32 * 0.1).collect();
        let b: Vec<f32> = (0..13).map(|i| (13 - i) as f32 * 0.07).collect();
        let naive: f32 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
        assert!((squared_distance(&a, &b) - naive).abs() < 1e-5);
    }
}
