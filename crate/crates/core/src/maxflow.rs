//! Augmenting-path max-flow with search trees grown from both terminals.
//!
//! Nodes keep a signed terminal residual: positive means residual capacity on
//! the source link, negative on the sink link. Adding the same amount to both
//! terminal links of a node only shifts the cut value by a constant, so
//! terminal capacities can be changed after a solve and the existing flow
//! stays feasible. A subsequent [`MaxFlow::solve`] then only pushes the
//! difference, which is what makes repeated nearby solves cheap.

use std::collections::VecDeque;

const NONE: u32 = u32::MAX;
const TERMINAL: u32 = u32::MAX - 1;
const ORPHAN: u32 = u32::MAX - 2;

#[derive(Clone, Debug)]
pub struct MaxFlow {
    // arcs, sister of arc a is a ^ 1
    head: Vec<u32>,
    r_cap: Vec<f64>,
    // adjacency in CSR form over arc ids
    first: Vec<u32>,
    adj: Vec<u32>,
    tr_cap: Vec<f64>,
    // search state, rebuilt on every solve
    parent: Vec<u32>,
    is_sink: Vec<bool>,
    ts: Vec<u32>,
    dist: Vec<u32>,
    in_queue: Vec<bool>,
}

/// Incremental builder for a [`MaxFlow`] graph.
#[derive(Clone, Debug, Default)]
pub struct GraphBuilder {
    n: usize,
    tr_cap: Vec<f64>,
    arcs: Vec<(u32, u32, f64, f64)>,
}

impl GraphBuilder {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            tr_cap: vec![0.0; n],
            arcs: Vec::new(),
        }
    }

    /// Adds `source_cap` on s→i and `sink_cap` on i→t.
    pub fn add_terminal(&mut self, i: usize, source_cap: f64, sink_cap: f64) {
        self.tr_cap[i] += source_cap - sink_cap;
    }

    /// Adds i→j with capacity `cap` and j→i with `rev_cap`.
    pub fn add_edge(&mut self, i: usize, j: usize, cap: f64, rev_cap: f64) {
        debug_assert!(cap >= 0.0 && rev_cap >= 0.0 && i != j);
        self.arcs.push((i as u32, j as u32, cap, rev_cap));
    }

    pub fn build(self) -> MaxFlow {
        let n = self.n;
        let m = self.arcs.len() * 2;
        let mut head = vec![0u32; m];
        let mut r_cap = vec![0.0; m];
        let mut degree = vec![0u32; n + 1];
        for (k, &(i, j, c, rc)) in self.arcs.iter().enumerate() {
            head[2 * k] = j;
            r_cap[2 * k] = c;
            head[2 * k + 1] = i;
            r_cap[2 * k + 1] = rc;
            degree[i as usize] += 1;
            degree[j as usize] += 1;
        }
        let mut first = vec![0u32; n + 1];
        for i in 0..n {
            first[i + 1] = first[i] + degree[i];
        }
        let mut fill = first.clone();
        let mut adj = vec![0u32; m];
        for (k, &(i, j, _, _)) in self.arcs.iter().enumerate() {
            adj[fill[i as usize] as usize] = (2 * k) as u32;
            fill[i as usize] += 1;
            adj[fill[j as usize] as usize] = (2 * k + 1) as u32;
            fill[j as usize] += 1;
        }
        MaxFlow {
            head,
            r_cap,
            first,
            adj,
            tr_cap: self.tr_cap,
            parent: vec![NONE; n],
            is_sink: vec![false; n],
            ts: vec![0; n],
            dist: vec![0; n],
            in_queue: vec![false; n],
        }
    }
}

impl MaxFlow {
    pub fn node_count(&self) -> usize {
        self.tr_cap.len()
    }

    /// Shifts the terminal capacities of node `i`: adds `delta_source` to s→i
    /// and `delta_sink` to i→t. Valid before or after a solve.
    pub fn add_terminal(&mut self, i: usize, delta_source: f64, delta_sink: f64) {
        self.tr_cap[i] += delta_source - delta_sink;
    }

    #[inline]
    fn arcs_of(&self, i: usize) -> std::ops::Range<usize> {
        self.first[i] as usize..self.first[i + 1] as usize
    }

    #[inline]
    fn tail(&self, a: usize) -> usize {
        self.head[a ^ 1] as usize
    }

    /// Runs max-flow to completion from the current residual state.
    pub fn solve(&mut self) {
        let n = self.node_count();
        let mut active: VecDeque<u32> = VecDeque::new();
        let mut orphans: VecDeque<u32> = VecDeque::new();
        for i in 0..n {
            self.in_queue[i] = false;
            self.ts[i] = 0;
            if self.tr_cap[i] != 0.0 {
                self.parent[i] = TERMINAL;
                self.is_sink[i] = self.tr_cap[i] < 0.0;
                self.dist[i] = 1;
                self.in_queue[i] = true;
                active.push_back(i as u32);
            } else {
                self.parent[i] = NONE;
                self.is_sink[i] = false;
                self.dist[i] = 0;
            }
        }
        let mut time: u32 = 0;

        while let Some(&front) = active.front() {
            let i = front as usize;
            if self.parent[i] == NONE {
                active.pop_front();
                self.in_queue[i] = false;
                continue;
            }
            // grow
            let mut bridge = None;
            let sink_side = self.is_sink[i];
            for k in self.arcs_of(i) {
                let a = self.adj[k] as usize;
                let residual = if sink_side {
                    self.r_cap[a ^ 1]
                } else {
                    self.r_cap[a]
                };
                if residual <= 0.0 {
                    continue;
                }
                let j = self.head[a] as usize;
                if self.parent[j] == NONE {
                    self.is_sink[j] = sink_side;
                    self.parent[j] = (a ^ 1) as u32;
                    self.ts[j] = self.ts[i];
                    self.dist[j] = self.dist[i] + 1;
                    if !self.in_queue[j] {
                        self.in_queue[j] = true;
                        active.push_back(j as u32);
                    }
                } else if self.is_sink[j] != sink_side {
                    bridge = Some(if sink_side { a ^ 1 } else { a });
                    break;
                } else if self.ts[j] <= self.ts[i] && self.dist[j] > self.dist[i] {
                    self.parent[j] = (a ^ 1) as u32;
                    self.ts[j] = self.ts[i];
                    self.dist[j] = self.dist[i] + 1;
                }
            }

            let Some(a) = bridge else {
                active.pop_front();
                self.in_queue[i] = false;
                continue;
            };

            time += 1;
            self.augment(a, &mut orphans);
            while let Some(o) = orphans.pop_front() {
                self.adopt(o as usize, time, &mut active, &mut orphans);
            }
        }
    }

    /// Pushes the bottleneck along source-tree path → `a` → sink-tree path.
    fn augment(&mut self, middle: usize, orphans: &mut VecDeque<u32>) {
        let mut bottleneck = self.r_cap[middle];
        // source side
        let mut i = self.tail(middle);
        loop {
            let pa = self.parent[i];
            if pa == TERMINAL {
                bottleneck = bottleneck.min(self.tr_cap[i]);
                break;
            }
            let pa = pa as usize;
            bottleneck = bottleneck.min(self.r_cap[pa ^ 1]);
            i = self.head[pa] as usize;
        }
        // sink side
        let mut i = self.head[middle] as usize;
        loop {
            let pa = self.parent[i];
            if pa == TERMINAL {
                bottleneck = bottleneck.min(-self.tr_cap[i]);
                break;
            }
            let pa = pa as usize;
            bottleneck = bottleneck.min(self.r_cap[pa]);
            i = self.head[pa] as usize;
        }

        self.r_cap[middle ^ 1] += bottleneck;
        self.r_cap[middle] -= bottleneck;

        let mut i = self.tail(middle);
        loop {
            let pa = self.parent[i];
            if pa == TERMINAL {
                self.tr_cap[i] -= bottleneck;
                if self.tr_cap[i] <= 0.0 {
                    self.tr_cap[i] = self.tr_cap[i].min(0.0);
                    self.set_orphan(i, orphans);
                }
                break;
            }
            let pa = pa as usize;
            self.r_cap[pa] += bottleneck;
            self.r_cap[pa ^ 1] -= bottleneck;
            let next = self.head[pa] as usize;
            if self.r_cap[pa ^ 1] <= 0.0 {
                self.set_orphan(i, orphans);
            }
            i = next;
        }

        let mut i = self.head[middle] as usize;
        loop {
            let pa = self.parent[i];
            if pa == TERMINAL {
                self.tr_cap[i] += bottleneck;
                if self.tr_cap[i] >= 0.0 {
                    self.tr_cap[i] = self.tr_cap[i].max(0.0);
                    self.set_orphan(i, orphans);
                }
                break;
            }
            let pa = pa as usize;
            self.r_cap[pa ^ 1] += bottleneck;
            self.r_cap[pa] -= bottleneck;
            let next = self.head[pa] as usize;
            if self.r_cap[pa] <= 0.0 {
                self.set_orphan(i, orphans);
            }
            i = next;
        }
    }

    #[inline]
    fn set_orphan(&mut self, i: usize, orphans: &mut VecDeque<u32>) {
        self.parent[i] = ORPHAN;
        orphans.push_back(i as u32);
    }

    fn adopt(
        &mut self,
        i: usize,
        time: u32,
        active: &mut VecDeque<u32>,
        orphans: &mut VecDeque<u32>,
    ) {
        let sink_side = self.is_sink[i];
        let mut best: Option<usize> = None;
        let mut best_d = u32::MAX;
        for k in self.arcs_of(i) {
            let a = self.adj[k] as usize;
            // candidate parent j must have residual capacity towards i (source
            // tree) or from i (sink tree)
            let residual = if sink_side {
                self.r_cap[a]
            } else {
                self.r_cap[a ^ 1]
            };
            if residual <= 0.0 {
                continue;
            }
            let j = self.head[a] as usize;
            if self.is_sink[j] != sink_side || self.parent[j] == NONE {
                continue;
            }
            // walk to the root to check j still has a terminal origin
            let mut d = 0u32;
            let mut k = j;
            let valid = loop {
                if self.ts[k] == time {
                    d += self.dist[k];
                    break true;
                }
                let pk = self.parent[k];
                d += 1;
                if pk == TERMINAL {
                    self.ts[k] = time;
                    self.dist[k] = 1;
                    break true;
                }
                if pk == ORPHAN || pk == NONE {
                    break false;
                }
                k = self.head[pk as usize] as usize;
            };
            if !valid {
                continue;
            }
            if d < best_d {
                best = Some(a);
                best_d = d;
            }
            let mut k = j;
            let mut dd = d;
            while self.ts[k] != time {
                self.ts[k] = time;
                self.dist[k] = dd;
                dd -= 1;
                k = self.head[self.parent[k] as usize] as usize;
            }
        }

        if let Some(a) = best {
            self.parent[i] = a as u32;
            self.ts[i] = time;
            self.dist[i] = best_d + 1;
            return;
        }

        // no parent: i becomes free, its children become orphans
        for k in self.arcs_of(i) {
            let a = self.adj[k] as usize;
            let j = self.head[a] as usize;
            if self.is_sink[j] != sink_side || self.parent[j] == NONE {
                continue;
            }
            let pj = self.parent[j];
            let residual = if sink_side {
                self.r_cap[a]
            } else {
                self.r_cap[a ^ 1]
            };
            if residual > 0.0 && !self.in_queue[j] {
                self.in_queue[j] = true;
                active.push_back(j as u32);
            }
            if pj != TERMINAL && pj != ORPHAN && self.head[pj as usize] as usize == i {
                self.set_orphan(j, orphans);
            }
        }
        self.parent[i] = NONE;
    }

    /// Nodes reachable from the source in the residual graph: the source side
    /// of the minimum cut closest to the source.
    pub fn source_side(&self) -> Vec<bool> {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for i in 0..n {
            if self.tr_cap[i] > 0.0 {
                seen[i] = true;
                queue.push_back(i);
            }
        }
        while let Some(i) = queue.pop_front() {
            for k in self.arcs_of(i) {
                let a = self.adj[k] as usize;
                if self.r_cap[a] > 0.0 {
                    let j = self.head[a] as usize;
                    if !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        seen
    }
}
