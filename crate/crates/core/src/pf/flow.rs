use std::collections::VecDeque;

/// Dinic max-flow over real capacities. Residual capacities at or below
/// `eps` count as saturated.
pub(crate) struct FlowNetwork {
    head: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<f64>,
    eps: f64,
}

impl FlowNetwork {
    pub fn new(nodes: usize, eps: f64) -> Self {
        FlowNetwork {
            head: vec![Vec::new(); nodes],
            to: Vec::new(),
            cap: Vec::new(),
            eps,
        }
    }

    /// Adds `u -> v` and returns its edge id.
    pub fn add_edge(&mut self, u: usize, v: usize, cap: f64) -> usize {
        let id = self.to.len();
        self.head[u].push(id);
        self.to.push(v);
        self.cap.push(cap);
        self.head[v].push(id + 1);
        self.to.push(u);
        self.cap.push(0.0);
        id
    }

    pub fn flow(&self, edge: usize) -> f64 {
        self.cap[edge ^ 1]
    }

    pub fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let n = self.head.len();
        let mut total = 0.0;
        loop {
            let mut level = vec![usize::MAX; n];
            level[s] = 0;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &e in &self.head[u] {
                    let v = self.to[e];
                    if self.cap[e] > self.eps && level[v] == usize::MAX {
                        level[v] = level[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            if level[t] == usize::MAX {
                return total;
            }
            let mut next = vec![0usize; n];
            loop {
                let pushed = self.augment(s, t, f64::INFINITY, &level, &mut next);
                if pushed <= self.eps {
                    break;
                }
                total += pushed;
            }
        }
    }

    fn augment(&mut self, u: usize, t: usize, limit: f64, level: &[usize], next: &mut [usize]) -> f64 {
        if u == t {
            return limit;
        }
        while next[u] < self.head[u].len() {
            let e = self.head[u][next[u]];
            let v = self.to[e];
            if self.cap[e] > self.eps && level[v] == level[u] + 1 {
                let got = self.augment(v, t, limit.min(self.cap[e]), level, next);
                if got > self.eps {
                    self.cap[e] -= got;
                    self.cap[e ^ 1] += got;
                    return got;
                }
            }
            next[u] += 1;
        }
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_bipartite() {
        // s=0, bidders 1..=2, items 3..=4, t=5
        let mut g = FlowNetwork::new(6, 1e-12);
        g.add_edge(0, 1, 1.0);
        g.add_edge(0, 2, 1.0);
        let a = g.add_edge(1, 3, f64::INFINITY);
        g.add_edge(1, 4, f64::INFINITY);
        g.add_edge(2, 3, f64::INFINITY);
        g.add_edge(3, 5, 0.5);
        g.add_edge(4, 5, 1.5);
        assert!((g.max_flow(0, 5) - 1.5).abs() < 1e-12);
        assert!(g.flow(a) <= 0.5 + 1e-12);
        let total: f64 = [a, a + 2, a + 4].iter().map(|&e| g.flow(e)).sum();
        assert!((total - 1.5).abs() < 1e-12);
    }
}
