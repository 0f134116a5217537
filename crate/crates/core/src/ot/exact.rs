//! Exact Kantorovich solver: primal network simplex on the complete
//! bipartite transportation graph.
//!
//! The spanning-tree bookkeeping (parent/pred/thread/rev_thread/succ_num/
//! last_succ) and the block-search pivot rule follow the LEMON network
//! simplex. The problem is uncapacitated, so every pivot that changes the
//! tree drives the leaving arc to zero flow.

use ndarray::{Array1, Array2};

use super::{check_marginals, CostMatrix, TransportPlan};
use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;

const DIR_UP: i8 = 1;
const DIR_DOWN: i8 = -1;

const EPSILON: f64 = 1e-14;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NetworkSimplexStats {
    pub pivots: usize,
}

/// Solves min ⟨γ, D⟩ over couplings of `mu` and `nu`.
pub fn solve_ot_exact(d: &CostMatrix, mu: &Array1<f64>, nu: &Array1<f64>) -> Result<TransportPlan> {
    solve_ot_exact_with(d.entries(), mu, nu).map(|(plan, _)| plan)
}

/// Exact OT for an arbitrary finite (possibly negative) cost matrix.
pub fn solve_ot_exact_with(
    cost: &Array2<f64>,
    mu: &Array1<f64>,
    nu: &Array1<f64>,
) -> Result<(TransportPlan, NetworkSimplexStats)> {
    check_marginals(cost, mu, nu)?;
    ExactOtSolver::new(mu, nu)?.solve(cost)
}

/// Exact solver for a fixed pair of marginals that can be re-run with new
/// costs. Each solve starts from the previous optimal basis, which stays
/// primal feasible because the supplies do not change.
pub struct ExactOtSolver {
    ns: NetworkSimplex,
    mu: Array1<f64>,
    nu: Array1<f64>,
}

impl ExactOtSolver {
    pub fn new(mu: &Array1<f64>, nu: &Array1<f64>) -> Result<Self> {
        check_marginals(&Array2::zeros((mu.len(), nu.len())), mu, nu)?;
        Ok(Self {
            ns: NetworkSimplex::new(mu, nu),
            mu: mu.clone(),
            nu: nu.clone(),
        })
    }

    pub fn solve(&mut self, cost: &Array2<f64>) -> Result<(TransportPlan, NetworkSimplexStats)> {
        let (n1, n2) = (self.mu.len(), self.nu.len());
        if cost.dim() != (n1, n2) {
            return Err(Error::DimensionMismatch {
                expected: n1 * n2,
                got: cost.len(),
            });
        }
        if cost.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("cost matrix must be finite"));
        }
        let ns = &mut self.ns;
        ns.set_costs(cost);
        ns.pivots = 0;
        ns.run(200 * (n1 * n2).max(100))?;

        let mut gamma = Array2::<f64>::zeros((n1, n2));
        for ((i, j), g) in gamma.indexed_iter_mut() {
            let f = ns.flow[i * n2 + j];
            *g = if f > 0.0 { f } else { 0.0 };
        }
        let art: f64 = ns.flow[ns.arc_num..].iter().map(|f| f.abs()).sum();
        if art > 1e-9 {
            return Err(Error::InfeasibleMarginals(art));
        }
        Ok((
            TransportPlan {
                gamma,
                row_marginal: self.mu.clone(),
                col_marginal: self.nu.clone(),
            },
            NetworkSimplexStats { pivots: ns.pivots },
        ))
    }
}

struct NetworkSimplex {
    node_num: usize,
    arc_num: usize,
    source: Vec<usize>,
    target: Vec<usize>,
    cost: Vec<f64>,
    flow: Vec<f64>,
    state: Vec<i8>,

    pi: Vec<f64>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pred_dir: Vec<i8>,
    dirty_revs: Vec<usize>,

    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: f64,
    next_arc: usize,
    block_size: usize,
    pivots: usize,
}

impl NetworkSimplex {
    fn new(mu: &Array1<f64>, nu: &Array1<f64>) -> Self {
        let (n1, n2) = (mu.len(), nu.len());
        let node_num = n1 + n2;
        let arc_num = n1 * n2;
        let all_arc_num = arc_num + node_num;
        let root = node_num;

        let mut costs = vec![0.0; arc_num];
        costs.reserve(node_num);
        let mut source = Vec::with_capacity(all_arc_num);
        let mut target = Vec::with_capacity(all_arc_num);
        for i in 0..n1 {
            for j in 0..n2 {
                source.push(i);
                target.push(n1 + j);
            }
        }
        let art_cost = node_num as f64;

        let supply: Vec<f64> = mu.iter().cloned().chain(nu.iter().map(|v| -v)).collect();

        let mut s = Self {
            node_num,
            arc_num,
            source,
            target,
            cost: costs,
            flow: vec![0.0; all_arc_num],
            state: vec![STATE_LOWER; all_arc_num],
            pi: vec![0.0; node_num + 1],
            parent: vec![NONE; node_num + 1],
            pred: vec![NONE; node_num + 1],
            thread: vec![0; node_num + 1],
            rev_thread: vec![0; node_num + 1],
            succ_num: vec![0; node_num + 1],
            last_succ: vec![0; node_num + 1],
            pred_dir: vec![DIR_UP; node_num + 1],
            dirty_revs: Vec::new(),
            in_arc: 0,
            join: 0,
            u_in: 0,
            v_in: 0,
            u_out: 0,
            delta: 0.0,
            next_arc: 0,
            block_size: ((arc_num as f64).sqrt().ceil() as usize).max(10),
            pivots: 0,
        };

        s.parent[root] = NONE;
        s.pred[root] = NONE;
        s.thread[root] = 0;
        s.rev_thread[0] = root;
        s.succ_num[root] = node_num + 1;
        s.last_succ[root] = root - 1;
        s.pi[root] = 0.0;

        for u in 0..node_num {
            let e = arc_num + u;
            s.parent[u] = root;
            s.pred[u] = e;
            s.thread[u] = u + 1;
            s.rev_thread[u + 1] = u;
            s.succ_num[u] = 1;
            s.last_succ[u] = u;
            s.state[e] = STATE_TREE;
            if supply[u] >= 0.0 {
                s.pred_dir[u] = DIR_UP;
                s.pi[u] = 0.0;
                s.source.push(u);
                s.target.push(root);
                s.flow[e] = supply[u];
                s.cost.push(0.0);
            } else {
                s.pred_dir[u] = DIR_DOWN;
                s.pi[u] = art_cost;
                s.source.push(root);
                s.target.push(u);
                s.flow[e] = -supply[u];
                s.cost.push(art_cost);
            }
        }
        s
    }

    /// Installs a new cost matrix and recomputes the node potentials of
    /// the current spanning tree.
    fn set_costs(&mut self, cost: &Array2<f64>) {
        // Shifting every real cost by a constant leaves the optimal plan
        // unchanged and keeps the big-M artificial cost well defined.
        let min = cost.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut max_cost: f64 = 0.0;
        for (slot, c) in self.cost[..self.arc_num].iter_mut().zip(cost.iter()) {
            *slot = c - min;
            max_cost = max_cost.max(*slot);
        }
        let art_cost = (max_cost + 1.0) * self.node_num as f64;
        let root = self.node_num;
        for u in 0..self.node_num {
            let e = self.arc_num + u;
            self.cost[e] = if self.source[e] == root {
                art_cost
            } else {
                0.0
            };
        }
        self.pi[root] = 0.0;
        let mut u = self.thread[root];
        while u != root {
            let p = self.parent[u];
            self.pi[u] = self.pi[p] - self.pred_dir[u] as f64 * self.cost[self.pred[u]];
            u = self.thread[u];
        }
        self.next_arc = 0;
    }

    #[inline]
    fn reduced(&self, e: usize) -> f64 {
        self.state[e] as f64 * (self.cost[e] + self.pi[self.source[e]] - self.pi[self.target[e]])
    }

    fn tolerance_scale(&self) -> f64 {
        let e = self.in_arc;
        self.pi[self.source[e]]
            .abs()
            .max(self.pi[self.target[e]].abs())
            .max(self.cost[e].abs())
    }

    /// Block search pivot rule.
    fn find_entering_arc(&mut self) -> bool {
        let mut min = 0.0;
        let mut cnt = self.block_size;
        let m = self.arc_num;
        let start = self.next_arc;
        let mut e = start;
        for _ in 0..m {
            let c = self.reduced(e);
            if c < min {
                min = c;
                self.in_arc = e;
            }
            e += 1;
            if e == m {
                e = 0;
            }
            cnt -= 1;
            if cnt == 0 {
                if min < -EPSILON * self.tolerance_scale() {
                    self.next_arc = e;
                    return true;
                }
                cnt = self.block_size;
            }
        }
        if min < -EPSILON * self.tolerance_scale() {
            self.next_arc = e;
            return true;
        }
        false
    }

    fn find_join_node(&mut self) {
        let mut u = self.source[self.in_arc];
        let mut v = self.target[self.in_arc];
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;
    }

    /// Returns false when the cycle is unbounded (cannot happen for a
    /// balanced transportation problem).
    fn find_leaving_arc(&mut self) -> bool {
        let (first, second) = if self.state[self.in_arc] == STATE_LOWER {
            (self.source[self.in_arc], self.target[self.in_arc])
        } else {
            (self.target[self.in_arc], self.source[self.in_arc])
        };
        self.delta = f64::INFINITY;
        let mut result = 0;

        let mut u = first;
        while u != self.join {
            let d = if self.pred_dir[u] == DIR_UP {
                self.flow[self.pred[u]]
            } else {
                f64::INFINITY
            };
            if d < self.delta {
                self.delta = d;
                self.u_out = u;
                result = 1;
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != self.join {
            let d = if self.pred_dir[u] == DIR_DOWN {
                self.flow[self.pred[u]]
            } else {
                f64::INFINITY
            };
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
        let delta = self.delta;
        if delta > 0.0 {
            let val = self.state[self.in_arc] as f64 * delta;
            self.flow[self.in_arc] += val;
            let mut u = self.source[self.in_arc];
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] -= self.pred_dir[u] as f64 * val;
                u = self.parent[u];
            }
            let mut u = self.target[self.in_arc];
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] += self.pred_dir[u] as f64 * val;
                u = self.parent[u];
            }
        }
        self.state[self.in_arc] = STATE_TREE;
        let out = self.pred[self.u_out];
        // Uncapacitated: the blocking arc always ends at its lower bound.
        self.flow[out] = 0.0;
        self.state[out] = STATE_LOWER;
    }

    fn update_tree_structure(&mut self) {
        let u_in = self.u_in;
        let v_in = self.v_in;
        let u_out = self.u_out;
        let join = self.join;
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = if u_in == self.source[self.in_arc] {
                DIR_UP
            } else {
                DIR_DOWN
            };

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

            for i in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[i];
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
                tmp_sc += self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = if u_in == self.source[self.in_arc] {
                DIR_UP
            } else {
                DIR_DOWN
            };
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in {
            join
        } else {
            NONE
        };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }

        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
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
        let u_in = self.u_in;
        let sigma = self.pi[self.v_in]
            - self.pi[u_in]
            - self.pred_dir[u_in] as f64 * self.cost[self.in_arc];
        let end = self.thread[self.last_succ[u_in]];
        let mut u = u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }

    fn run(&mut self, max_pivots: usize) -> Result<()> {
        debug_assert_eq!(self.pi.len(), self.node_num + 1);
        while self.find_entering_arc() {
            self.pivots += 1;
            if self.pivots > max_pivots {
                return Err(Error::NotConverged(format!(
                    "network simplex exceeded {max_pivots} pivots"
                )));
            }
            self.find_join_node();
            if !self.find_leaving_arc() || !self.delta.is_finite() {
                return Err(Error::NotConverged("unbounded transport cycle".into()));
            }
            self.change_flow();
            self.update_tree_structure();
            self.update_potential();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_by_two_permutation() {
        let d = CostMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let u = array![0.5, 0.5];
        let plan = solve_ot_exact(&d, &u, &u).unwrap();
        assert_eq!(plan.gamma, array![[0.5, 0.0], [0.0, 0.5]]);
        assert_eq!(plan.cost(d.entries()), 0.0);
    }

    #[test]
    fn zero_cost_gives_feasible_zero_plan() {
        let d = CostMatrix::new(Array2::zeros((3, 4))).unwrap();
        let mu = array![0.2, 0.3, 0.5];
        let nu = array![0.25, 0.25, 0.25, 0.25];
        let plan = solve_ot_exact(&d, &mu, &nu).unwrap();
        assert_eq!(plan.cost(d.entries()), 0.0);
        assert!(plan.marginal_residual() < 1e-12);
    }

    #[test]
    fn rejects_mass_mismatch() {
        let d = CostMatrix::new(Array2::zeros((2, 2))).unwrap();
        let r = solve_ot_exact(&d, &array![0.5, 0.5], &array![0.5, 0.6]);
        assert!(matches!(r, Err(Error::InfeasibleMarginals(_))));
    }

    #[test]
    fn handles_negative_costs_and_zero_weights() {
        let c = array![[-3.0, 1.0, 0.0], [2.0, -1.0, 4.0]];
        let (plan, _) = solve_ot_exact_with(&c, &array![0.0, 1.0], &array![0.5, 0.0, 0.5]).unwrap();
        assert!(plan.marginal_residual() < 1e-12);
        assert!((plan.cost(&c) - 3.0).abs() < 1e-12);
    }
}
