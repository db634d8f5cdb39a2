//! Optimal placement of a budget of control edges.
//!
//! The follower subgraph condenses to a DAG whose roots are the only
//! candidates for direct control. A reduced instance keeps those roots and
//! every non-root SCC reachable from at most `d` of them, weighted by SCC
//! size. Selecting `d` roots guarantees containment of exactly the SCCs
//! whose upstream roots are all selected, so the solver searches root
//! subsets exactly with a combinatorial bound, and the instance can also
//! be exported as an integer linear program in LP text format.

use std::collections::{BTreeMap, BTreeSet};

use crate::condense::{reach, scc, Condensation, CondensationKind};
use crate::error::{Error, Result};
use crate::graph::SignedGraph;

/// A root SCC of the follower condensation (original node ids).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReducedRoot {
    pub members: Vec<usize>,
}

/// A retained non-root SCC with its upstream roots (indices into the
/// instance's root list).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReducedGamma {
    pub members: Vec<usize>,
    pub upstream_roots: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacementInstance {
    pub roots: Vec<ReducedRoot>,
    pub gammas: Vec<ReducedGamma>,
    pub budget: usize,
}

impl PlacementInstance {
    pub fn root_count(&self) -> usize {
        self.roots.len()
    }

    /// Number of retained SCCs downstream of root `j`.
    pub fn out_degree(&self, j: usize) -> usize {
        self.gammas
            .iter()
            .filter(|g| g.upstream_roots.contains(&j))
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacementSolution {
    /// Selected root indices, ascending.
    pub selected: Vec<usize>,
    /// Guaranteed-contained node count; equals `phi.len()`.
    pub objective: usize,
    /// Guaranteed-contained original node ids, ascending.
    pub phi: Vec<usize>,
    /// Edge variables set to one, as `(gamma index, root index)` pairs.
    pub y_edges: Vec<(usize, usize)>,
}

/// Condensation of the subgraph induced by the followers, together with
/// the follower node list translating local ids back to original ids.
pub(crate) fn follower_condensation(g: &SignedGraph) -> (Vec<usize>, Condensation) {
    let fnodes = g.followers();
    let local: BTreeMap<usize, usize> = fnodes.iter().enumerate().map(|(l, &v)| (v, l)).collect();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); fnodes.len()];
    for (l, &v) in fnodes.iter().enumerate() {
        for (dst, _) in g.out_neighbors(v) {
            if dst != v {
                if let Some(&ld) = local.get(&dst) {
                    adj[l].push(ld);
                }
            }
        }
    }
    let part = scc(&adj);
    let cond = condense_followers(&adj, &part.comp_of);
    (fnodes, cond)
}

fn condense_followers(adj: &[Vec<usize>], map: &[usize]) -> Condensation {
    crate::condense::condense(adj, map, CondensationKind::Classic)
        .expect("SCC condensation is acyclic")
}

/// Build the reduced placement instance for budget `d`.
///
/// Non-roots reachable from more than `d` roots cannot be guaranteed and
/// are dropped. Fails when `d` is zero or exceeds the root count.
pub fn follower_reduction(g: &SignedGraph, d: usize) -> Result<PlacementInstance> {
    let (fnodes, fcond) = follower_condensation(g);
    let roots_ids = fcond.roots().to_vec();
    if d == 0 {
        return Err(Error::Spec("placement budget d must be at least 1".into()));
    }
    if d > roots_ids.len() {
        return Err(Error::BudgetExceedsRoots {
            d,
            roots: roots_ids.len(),
        });
    }
    let r = reach(&fcond);
    let root_pos: BTreeMap<usize, usize> = roots_ids
        .iter()
        .enumerate()
        .map(|(p, &s)| (s, p))
        .collect();
    let to_original =
        |members: &[usize]| -> Vec<usize> { members.iter().map(|&l| fnodes[l]).collect() };

    let roots: Vec<ReducedRoot> = roots_ids
        .iter()
        .map(|&s| ReducedRoot {
            members: to_original(&fcond.members[s]),
        })
        .collect();

    let mut gammas = Vec::new();
    for s in 0..fcond.supernode_count() {
        if root_pos.contains_key(&s) {
            continue;
        }
        let upstream_roots: Vec<usize> = r.upstream[s]
            .iter()
            .filter_map(|u| root_pos.get(u).copied())
            .collect();
        debug_assert!(!upstream_roots.is_empty());
        if upstream_roots.len() <= d {
            gammas.push(ReducedGamma {
                members: to_original(&fcond.members[s]),
                upstream_roots,
            });
        }
    }
    gammas.sort_by_key(|g| g.members[0]);
    Ok(PlacementInstance {
        roots,
        gammas,
        budget: d,
    })
}

/// Exact solve by depth-first branch and bound over the root subset.
///
/// The bound adds the best still-selectable root masses and every
/// not-yet-excluded gamma mass to the running objective. Ties resolve to
/// the lexicographically smallest selected index set because the include
/// branch is explored first and only strict improvements replace the
/// incumbent.
pub fn solve_placement(inst: &PlacementInstance) -> PlacementSolution {
    let r = inst.root_count();
    let d = inst.budget;
    assert!(d >= 1 && d <= r, "instance budget out of range");

    let root_size: Vec<usize> = inst.roots.iter().map(|r| r.members.len()).collect();
    let gamma_size: Vec<usize> = inst.gammas.iter().map(|g| g.members.len()).collect();
    let mut root_gammas: Vec<Vec<usize>> = vec![Vec::new(); r];
    for (i, g) in inst.gammas.iter().enumerate() {
        for &j in &g.upstream_roots {
            root_gammas[j].push(i);
        }
    }
    // best_suffix[pos][c]: sum of the c largest root sizes among roots[pos..]
    let mut best_suffix: Vec<Vec<usize>> = Vec::with_capacity(r + 1);
    for pos in 0..=r {
        let mut tail: Vec<usize> = root_size[pos..].to_vec();
        tail.sort_unstable_by(|a, b| b.cmp(a));
        let mut sums = vec![0usize; tail.len() + 1];
        for (k, &v) in tail.iter().enumerate() {
            sums[k + 1] = sums[k] + v;
        }
        best_suffix.push(sums);
    }

    struct Search<'a> {
        inst: &'a PlacementInstance,
        root_size: Vec<usize>,
        gamma_size: Vec<usize>,
        root_gammas: Vec<Vec<usize>>,
        best_suffix: Vec<Vec<usize>>,
        pending: Vec<usize>,
        alive: Vec<bool>,
        chosen: Vec<usize>,
        chosen_mass: usize,
        covered_mass: usize,
        open_mass: usize,
        best_objective: usize,
        best_set: Vec<usize>,
        found: bool,
    }

    impl Search<'_> {
        fn dfs(&mut self, pos: usize) {
            let r = self.inst.root_count();
            let d = self.inst.budget;
            if self.chosen.len() == d {
                let objective = self.chosen_mass + self.covered_mass;
                if !self.found || objective > self.best_objective {
                    self.found = true;
                    self.best_objective = objective;
                    self.best_set = self.chosen.clone();
                }
                return;
            }
            if self.chosen.len() + (r - pos) < d {
                return;
            }
            let want = d - self.chosen.len();
            let optimistic =
                self.chosen_mass + self.covered_mass + self.best_suffix[pos][want] + self.open_mass;
            if self.found && optimistic <= self.best_objective {
                return;
            }

            // include roots[pos]
            self.chosen.push(pos);
            self.chosen_mass += self.root_size[pos];
            let mut newly_covered = Vec::new();
            for gi in 0..self.root_gammas[pos].len() {
                let i = self.root_gammas[pos][gi];
                self.pending[i] -= 1;
                if self.alive[i] && self.pending[i] == 0 {
                    self.covered_mass += self.gamma_size[i];
                    self.open_mass -= self.gamma_size[i];
                    newly_covered.push(i);
                }
            }
            self.dfs(pos + 1);
            for &i in &newly_covered {
                self.covered_mass -= self.gamma_size[i];
                self.open_mass += self.gamma_size[i];
            }
            for gi in 0..self.root_gammas[pos].len() {
                let i = self.root_gammas[pos][gi];
                self.pending[i] += 1;
            }
            self.chosen_mass -= self.root_size[pos];
            self.chosen.pop();

            // exclude roots[pos]: every gamma above it dies
            let mut killed = Vec::new();
            for gi in 0..self.root_gammas[pos].len() {
                let i = self.root_gammas[pos][gi];
                if self.alive[i] {
                    self.alive[i] = false;
                    self.open_mass -= self.gamma_size[i];
                    killed.push(i);
                }
            }
            self.dfs(pos + 1);
            for &i in &killed {
                self.alive[i] = true;
                self.open_mass += self.gamma_size[i];
            }
        }
    }

    let open_mass = gamma_size.iter().sum();
    let mut search = Search {
        inst,
        pending: inst.gammas.iter().map(|g| g.upstream_roots.len()).collect(),
        alive: vec![true; inst.gammas.len()],
        chosen: Vec::new(),
        chosen_mass: 0,
        covered_mass: 0,
        open_mass,
        best_objective: 0,
        best_set: Vec::new(),
        found: false,
        root_size,
        gamma_size,
        root_gammas,
        best_suffix,
    };
    search.dfs(0);
    assert!(search.found, "budget <= root count always admits a leaf");

    let selected = search.best_set;
    let selected_set: BTreeSet<usize> = selected.iter().copied().collect();
    let mut phi = BTreeSet::new();
    for &j in &selected {
        phi.extend(inst.roots[j].members.iter().copied());
    }
    let mut y_edges = Vec::new();
    for (i, gamma) in inst.gammas.iter().enumerate() {
        if gamma.upstream_roots.iter().all(|j| selected_set.contains(j)) {
            phi.extend(gamma.members.iter().copied());
            y_edges.push((i, gamma.upstream_roots[0]));
        }
    }
    let phi: Vec<usize> = phi.into_iter().collect();
    debug_assert_eq!(phi.len(), search.best_objective);
    PlacementSolution {
        selected,
        objective: search.best_objective,
        phi,
        y_edges,
    }
}

/// Followers guaranteed contained once the nodes in `controlled` receive a
/// leader edge: the union of follower SCCs whose upstream roots all hold a
/// controlled node. Independent of any state values.
pub fn guaranteed_set(g: &SignedGraph, controlled: &BTreeSet<usize>) -> BTreeSet<usize> {
    let (fnodes, fcond) = follower_condensation(g);
    let r = reach(&fcond);
    let roots: BTreeSet<usize> = fcond.roots().iter().copied().collect();
    let root_hit: Vec<bool> = (0..fcond.supernode_count())
        .map(|s| {
            roots.contains(&s)
                && fcond.members[s]
                    .iter()
                    .any(|&l| controlled.contains(&fnodes[l]))
        })
        .collect();
    let mut phi = BTreeSet::new();
    for s in 0..fcond.supernode_count() {
        let ok = r.upstream[s]
            .iter()
            .filter(|u| roots.contains(u))
            .all(|&u| root_hit[u]);
        if ok {
            phi.extend(fcond.members[s].iter().map(|&l| fnodes[l]));
        }
    }
    phi
}

/// LP text encoding of the instance: maximize covered mass subject to the
/// budget row, per-root linking rows, and per-gamma coverage rows, all
/// variables binary. Names are `y_<i>_<j>` for gamma-root edges and
/// `y_<j>_pi` for root selection, 1-based.
pub fn export_ilp(inst: &PlacementInstance) -> String {
    let mut terms = Vec::new();
    for (i, gamma) in inst.gammas.iter().enumerate() {
        for &j in &gamma.upstream_roots {
            terms.push(format!("{} y_{}_{}", gamma.members.len(), i + 1, j + 1));
        }
    }
    for (j, root) in inst.roots.iter().enumerate() {
        terms.push(format!("{} y_{}_pi", root.members.len(), j + 1));
    }
    let mut out = String::from("Maximize\n obj: ");
    out.push_str(&terms.join(" + "));
    out.push('\n');

    out.push_str("Subject To\n");
    let budget_terms: Vec<String> = (1..=inst.root_count())
        .map(|j| format!("y_{j}_pi"))
        .collect();
    out.push_str(&format!(
        " budget: {} = {}\n",
        budget_terms.join(" + "),
        inst.budget
    ));
    for j in 0..inst.root_count() {
        let downstream: Vec<usize> = inst
            .gammas
            .iter()
            .enumerate()
            .filter(|(_, g)| g.upstream_roots.contains(&j))
            .map(|(i, _)| i)
            .collect();
        if downstream.is_empty() {
            continue;
        }
        let lhs: Vec<String> = downstream
            .iter()
            .map(|&i| format!("y_{}_{}", i + 1, j + 1))
            .collect();
        out.push_str(&format!(
            " link_{}: {} - {} y_{}_pi <= 0\n",
            j + 1,
            lhs.join(" + "),
            downstream.len(),
            j + 1
        ));
    }
    for (i, gamma) in inst.gammas.iter().enumerate() {
        let k_in = gamma.upstream_roots.len();
        let lhs: Vec<String> = gamma
            .upstream_roots
            .iter()
            .map(|&j| format!("{} y_{}_{}", k_in, i + 1, j + 1))
            .collect();
        let rhs: Vec<String> = gamma
            .upstream_roots
            .iter()
            .map(|&j| format!("y_{}_pi", j + 1))
            .collect();
        out.push_str(&format!(
            " cover_{}: {} - {} <= 0\n",
            i + 1,
            lhs.join(" + "),
            rhs.join(" - ")
        ));
    }

    out.push_str("Binary\n");
    for (i, gamma) in inst.gammas.iter().enumerate() {
        for &j in &gamma.upstream_roots {
            out.push_str(&format!(" y_{}_{}\n", i + 1, j + 1));
        }
    }
    for j in 1..=inst.root_count() {
        out.push_str(&format!(" y_{j}_pi\n"));
    }
    out.push_str("End\n");
    out
}
