//! Primal network simplex for the balanced transportation problem on a
//! complete bipartite graph, with an artificial root, block-search pricing
//! and thread/successor tree bookkeeping.

use crate::error::{Error, Result};

const INF: i64 = i64::MAX;
const STATE_UPPER: i8 = -1;
const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;
const DIR_UP: i8 = 1;
const DIR_DOWN: i8 = -1;
const MIN_BLOCK: usize = 10;

/// Optimal flows (nonzero entries only) and their total cost.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub flows: Vec<(usize, usize, i64)>,
    pub cost: f64,
}

struct Simplex<'a> {
    m: usize,
    n: usize,
    real_arcs: usize,
    cost: &'a [f64],
    tol: f64,
    // per arc (real then artificial)
    flow: Vec<i64>,
    state: Vec<i8>,
    art_src: Vec<usize>,
    art_tgt: Vec<usize>,
    art_cst: Vec<f64>,
    // per node (root last)
    pi: Vec<f64>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    pred_dir: Vec<i8>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    dirty_revs: Vec<usize>,
    // pivot state
    block: usize,
    next_arc: usize,
    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: i64,
}

const NONE: usize = usize::MAX;

impl<'a> Simplex<'a> {
    #[inline]
    fn source(&self, e: usize) -> usize {
        if e < self.real_arcs {
            e / self.n
        } else {
            self.art_src[e - self.real_arcs]
        }
    }

    #[inline]
    fn target(&self, e: usize) -> usize {
        if e < self.real_arcs {
            self.m + e % self.n
        } else {
            self.art_tgt[e - self.real_arcs]
        }
    }

    #[inline]
    fn arc_cost(&self, e: usize) -> f64 {
        if e < self.real_arcs {
            self.cost[e]
        } else {
            self.art_cst[e - self.real_arcs]
        }
    }

    fn new(supply: &[i64], demand: &[i64], cost: &'a [f64]) -> Self {
        let (m, n) = (supply.len(), demand.len());
        let nodes = m + n;
        let real_arcs = m * n;
        let max_cost = cost.iter().cloned().fold(0.0, f64::max);
        let art_cost = (max_cost + 1.0) * nodes as f64;
        let root = nodes;
        let mut s = Simplex {
            m,
            n,
            real_arcs,
            cost,
            tol: 64.0 * f64::EPSILON * art_cost,
            flow: vec![0; real_arcs + nodes],
            state: vec![STATE_LOWER; real_arcs + nodes],
            art_src: vec![0; nodes],
            art_tgt: vec![0; nodes],
            art_cst: vec![0.0; nodes],
            pi: vec![0.0; nodes + 1],
            parent: vec![NONE; nodes + 1],
            pred: vec![NONE; nodes + 1],
            pred_dir: vec![0; nodes + 1],
            thread: vec![0; nodes + 1],
            rev_thread: vec![0; nodes + 1],
            succ_num: vec![0; nodes + 1],
            last_succ: vec![0; nodes + 1],
            dirty_revs: Vec::new(),
            block: ((real_arcs as f64).sqrt().ceil() as usize).max(MIN_BLOCK),
            next_arc: 0,
            in_arc: 0,
            join: 0,
            u_in: 0,
            v_in: 0,
            u_out: 0,
            delta: 0,
        };
        s.thread[root] = 0;
        s.rev_thread[0] = root;
        s.succ_num[root] = nodes + 1;
        s.last_succ[root] = root - 1;
        for u in 0..nodes {
            let e = real_arcs + u;
            let a = u;
            s.parent[u] = root;
            s.pred[u] = e;
            s.thread[u] = u + 1;
            s.rev_thread[u + 1] = u;
            s.succ_num[u] = 1;
            s.last_succ[u] = u;
            s.state[e] = STATE_TREE;
            let b = if u < m { supply[u] } else { -demand[u - m] };
            if b >= 0 {
                s.pred_dir[u] = DIR_UP;
                s.pi[u] = 0.0;
                s.art_src[a] = u;
                s.art_tgt[a] = root;
                s.flow[e] = b;
                s.art_cst[a] = 0.0;
            } else {
                s.pred_dir[u] = DIR_DOWN;
                s.pi[u] = art_cost;
                s.art_src[a] = root;
                s.art_tgt[a] = u;
                s.flow[e] = -b;
                s.art_cst[a] = art_cost;
            }
        }
        s
    }

    /// Block search over real arcs only; artificial arcs never re-enter.
    fn find_entering_arc(&mut self) -> bool {
        let total = self.real_arcs;
        let mut min = -self.tol;
        let mut found = NONE;
        let mut cnt = self.block;
        let start = self.next_arc;
        let mut e = start;
        let mut i = e / self.n;
        let mut j = e % self.n;
        let mut scanned = 0usize;
        while scanned < total {
            let st = self.state[e];
            if st != STATE_TREE {
                let c = st as f64 * (self.cost[e] + self.pi[i] - self.pi[self.m + j]);
                if c < min {
                    min = c;
                    found = e;
                }
            }
            scanned += 1;
            e += 1;
            j += 1;
            if j == self.n {
                j = 0;
                i += 1;
            }
            if e == total {
                e = 0;
                i = 0;
                j = 0;
            }
            cnt -= 1;
            if cnt == 0 {
                if found != NONE {
                    break;
                }
                cnt = self.block;
            }
        }
        if found == NONE {
            return false;
        }
        self.in_arc = found;
        self.next_arc = e;
        true
    }

    fn find_join_node(&mut self) {
        let mut u = self.source(self.in_arc);
        let mut v = self.target(self.in_arc);
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;
    }

    fn residual(&self, u: usize, forward_dir: i8) -> i64 {
        let e = self.pred[u];
        if self.pred_dir[u] == forward_dir {
            // every arc is uncapacitated
            INF
        } else {
            self.flow[e]
        }
    }

    fn find_leaving_arc(&mut self) -> bool {
        let (first, second) = if self.state[self.in_arc] == STATE_LOWER {
            (self.source(self.in_arc), self.target(self.in_arc))
        } else {
            (self.target(self.in_arc), self.source(self.in_arc))
        };
        self.delta = INF;
        let mut result = 0;
        let mut u = first;
        while u != self.join {
            let d = self.residual(u, DIR_DOWN);
            if d < self.delta {
                self.delta = d;
                self.u_out = u;
                result = 1;
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != self.join {
            let d = self.residual(u, DIR_UP);
            if d <= self.delta {
                self.delta = d;
                self.u_out = u;
                result = 2;
            }
            u = self.parent[u];
        }
        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        result != 0
    }

    fn change_flow(&mut self) {
        let in_arc = self.in_arc;
        if self.delta > 0 {
            let val = self.state[in_arc] as i64 * self.delta;
            self.flow[in_arc] += val;
            let mut u = self.source(in_arc);
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] -= self.pred_dir[u] as i64 * val;
                u = self.parent[u];
            }
            let mut u = self.target(in_arc);
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] += self.pred_dir[u] as i64 * val;
                u = self.parent[u];
            }
        }
        self.state[in_arc] = STATE_TREE;
        let out = self.pred[self.u_out];
        self.state[out] = if self.flow[out] == 0 { STATE_LOWER } else { STATE_UPPER };
    }

    fn update_tree_structure(&mut self) {
        let (u_in, v_in, u_out, join, in_arc) = (self.u_in, self.v_in, self.u_out, self.join, self.in_arc);
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = if u_in == self.source(in_arc) { DIR_UP } else { DIR_DOWN };
            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue = if old_rev_thread == v_in {
                self.thread[old_last_succ]
            } else {
                self.thread[v_in]
            };
            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);

                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;

                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;

                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;

            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }
            for k in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[k];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }

            let mut tmp_sc = 0usize;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                // parents along the stem are already reversed, so p was below u
                tmp_sc += self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = if u_in == self.source(in_arc) { DIR_UP } else { DIR_DOWN };
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in { join } else { NONE };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }
        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && u != NONE && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && u != NONE && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }

        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn update_potential(&mut self) {
        let sigma = self.pi[self.v_in] - self.pi[self.u_in] - self.pred_dir[self.u_in] as f64 * self.arc_cost(self.in_arc);
        let end = self.thread[self.last_succ[self.u_in]];
        let mut u = self.u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }

    fn run(&mut self) -> Result<()> {
        while self.find_entering_arc() {
            self.find_join_node();
            if !self.find_leaving_arc() || self.delta == INF {
                return Err(Error::invalid("transport problem is unbounded"));
            }
            self.change_flow();
            self.update_tree_structure();
            self.update_potential();
        }
        if self.flow[self.real_arcs..].iter().any(|&f| f != 0) {
            return Err(Error::invalid("transport problem is infeasible"));
        }
        Ok(())
    }
}

/// Min-cost transport from integer `supply` to integer `demand` (equal
/// totals) over a dense row-major `supply.len() x demand.len()` cost matrix.
pub fn solve_transport(supply: &[i64], demand: &[i64], cost: &[f64]) -> Result<TransportPlan> {
    let (m, n) = (supply.len(), demand.len());
    if m == 0 || n == 0 {
        return Err(Error::invalid("empty transport problem"));
    }
    if cost.len() != m * n {
        return Err(Error::invalid("cost matrix has the wrong size"));
    }
    if supply.iter().chain(demand).any(|&v| v < 0) {
        return Err(Error::invalid("masses must be nonnegative"));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("costs must be finite"));
    }
    let total_s: i128 = supply.iter().map(|&v| v as i128).sum();
    let total_d: i128 = demand.iter().map(|&v| v as i128).sum();
    if total_s != total_d {
        return Err(Error::invalid(format!("unbalanced masses: {total_s} vs {total_d}")));
    }
    let mut s = Simplex::new(supply, demand, cost);
    s.run()?;
    let mut flows = Vec::new();
    let mut total = 0.0;
    for (e, &f) in s.flow[..s.real_arcs].iter().enumerate() {
        if f != 0 {
            flows.push((e / n, e % n, f));
            total += f as f64 * cost[e];
        }
    }
    Ok(TransportPlan { flows, cost: total })
}
