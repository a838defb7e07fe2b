//! Fill-reducing symmetric ordering by recursive level-structure dissection.
//!
//! Each connected piece is split along the median level of a breadth-first
//! level structure rooted at a pseudo-peripheral vertex. The two halves are
//! ordered recursively and the separating level is numbered last.

use std::collections::VecDeque;

const LEAF: usize = 48;

/// Returns `perm` with `perm[new] = old` for the symmetric pattern given by
/// `row_ptr`/`col_idx` (diagonal entries are ignored).
pub fn nested_dissection(n: usize, row_ptr: &[usize], col_idx: &[usize]) -> Vec<usize> {
    let mut state = State {
        row_ptr,
        col_idx,
        tag: vec![0; n],
        level: vec![usize::MAX; n],
        next_tag: 1,
        order: Vec::with_capacity(n),
    };
    let all: Vec<usize> = (0..n).collect();
    state.dissect(all);
    debug_assert_eq!(state.order.len(), n);
    state.order
}

struct State<'a> {
    row_ptr: &'a [usize],
    col_idx: &'a [usize],
    tag: Vec<usize>,
    level: Vec<usize>,
    next_tag: usize,
    order: Vec<usize>,
}

impl State<'_> {
    fn neighbours(&self, v: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[v]..self.row_ptr[v + 1]]
    }

    fn retag(&mut self, nodes: &[usize]) -> usize {
        let t = self.next_tag;
        self.next_tag += 1;
        for &v in nodes {
            self.tag[v] = t;
        }
        t
    }

    /// Breadth-first levels from `root` inside the region tagged `t`.
    fn levels(&mut self, root: usize, t: usize) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = Vec::new();
        let mut queue = VecDeque::new();
        let mut visited = Vec::new();
        self.level[root] = 0;
        visited.push(root);
        queue.push_back(root);
        while let Some(v) = queue.pop_front() {
            let lv = self.level[v];
            if out.len() <= lv {
                out.push(Vec::new());
            }
            out[lv].push(v);
            for k in self.row_ptr[v]..self.row_ptr[v + 1] {
                let u = self.col_idx[k];
                if self.tag[u] == t && self.level[u] == usize::MAX {
                    self.level[u] = lv + 1;
                    visited.push(u);
                    queue.push_back(u);
                }
            }
        }
        for v in visited {
            self.level[v] = usize::MAX;
        }
        out
    }

    fn degree_in(&self, v: usize, t: usize) -> usize {
        self.neighbours(v).iter().filter(|&&u| u != v && self.tag[u] == t).count()
    }

    fn dissect(&mut self, nodes: Vec<usize>) {
        if nodes.len() <= LEAF {
            self.order.extend(nodes);
            return;
        }
        let t = self.retag(&nodes);
        let mut levels = self.levels(nodes[0], t);
        let reached: usize = levels.iter().map(Vec::len).sum();
        if reached < nodes.len() {
            // disconnected: order each component on its own
            let mut components = vec![levels.into_iter().flatten().collect::<Vec<_>>()];
            for &v in &components[0] {
                self.tag[v] = 0;
            }
            for &v in &nodes {
                if self.tag[v] == t {
                    let comp: Vec<usize> = self.levels(v, t).into_iter().flatten().collect();
                    for &u in &comp {
                        self.tag[u] = 0;
                    }
                    components.push(comp);
                }
            }
            for comp in components {
                self.dissect(comp);
            }
            return;
        }
        // pseudo-peripheral root
        for _ in 0..4 {
            let last = levels.last().expect("non-empty level structure");
            let cand = *last
                .iter()
                .min_by_key(|&&v| self.degree_in(v, t))
                .expect("non-empty level");
            let trial = self.levels(cand, t);
            if trial.len() > levels.len() {
                levels = trial;
            } else {
                break;
            }
        }
        if levels.len() < 3 {
            self.order.extend(nodes);
            return;
        }
        let half = nodes.len() / 2;
        let mut acc = 0;
        let mut sep = 1;
        for (s, lv) in levels.iter().enumerate() {
            if acc + lv.len() > half {
                sep = s;
                break;
            }
            acc += lv.len();
        }
        let sep = sep.clamp(1, levels.len() - 2);
        let separator = std::mem::take(&mut levels[sep]);
        let below: Vec<usize> = levels[..sep].iter().flatten().copied().collect();
        let above: Vec<usize> = levels[sep + 1..].iter().flatten().copied().collect();
        self.dissect(below);
        self.dissect(above);
        self.order.extend(separator);
    }
}
