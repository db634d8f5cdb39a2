//! Strongly connected components, the three condensations of a signed
//! graph (classic, enlarged, signed), DAG level decomposition, SCC type
//! classification, and the cross-condensation association table.
//!
//! The classic condensation collapses each SCC of the graph itself. The
//! enlarged condensation does the same on the 2n-node lift. The signed
//! condensation keeps one supernode per lift-SCC that contains original
//! nodes, so a balanced SCC splits into its two camps; its superedges are
//! the lift condensation's edges with every mirror-only supernode folded
//! onto its twin, which keeps the result acyclic and level-aligned with
//! the other two condensations.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::json;

use crate::error::{Error, Result};
use crate::graph::{EnlargedGraph, Sign, SignedGraph};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// A partition of nodes into strongly connected components.
///
/// Components are numbered in reverse topological order: if any edge leads
/// from component `a` to component `b`, then `b < a`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub comp_of: Vec<usize>,
    /// Component id -> sorted member node ids.
    pub members: Vec<Vec<usize>>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Tarjan's algorithm with an explicit stack.
pub fn scc(adj: &[Vec<usize>]) -> Partition {
    let n = adj.len();
    const UNSET: usize = usize::MAX;
    let mut index = vec![UNSET; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut comp_of = vec![UNSET; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut next = 0usize;
    let mut frames: Vec<(usize, usize)> = Vec::new();

    for start in 0..n {
        if index[start] != UNSET {
            continue;
        }
        index[start] = next;
        low[start] = next;
        next += 1;
        stack.push(start);
        on_stack[start] = true;
        frames.push((start, 0));

        while let Some(frame) = frames.last_mut() {
            let v = frame.0;
            if frame.1 < adj[v].len() {
                let w = adj[v][frame.1];
                frame.1 += 1;
                if index[w] == UNSET {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    frames.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                frames.pop();
                if let Some(parent) = frames.last() {
                    let p = parent.0;
                    low[p] = low[p].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        comp_of[w] = members.len();
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    members.push(comp);
                }
            }
        }
    }
    Partition { comp_of, members }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CondensationKind {
    Classic,
    Enlarged,
    Signed,
}

impl CondensationKind {
    pub fn name(self) -> &'static str {
        match self {
            CondensationKind::Classic => "classic",
            CondensationKind::Enlarged => "enlarged",
            CondensationKind::Signed => "signed",
        }
    }
}

/// A DAG over supernodes with the condensing map, longest-path levels and
/// deterministic within-level ranks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Condensation {
    pub kind: CondensationKind,
    /// Underlying node -> supernode id.
    pub map: Vec<usize>,
    /// Supernode id -> sorted member node ids.
    pub members: Vec<Vec<usize>>,
    /// Out superedges per supernode, sorted.
    pub edges: Vec<Vec<usize>>,
    /// 1-based level per supernode: 1 + max level over predecessors.
    pub level: Vec<usize>,
    /// 1-based rank within the level, by ascending smallest member id.
    pub rank: Vec<usize>,
    /// Supernode ids grouped by level (index 0 = level 1), in rank order.
    pub by_level: Vec<Vec<usize>>,
}

impl Condensation {
    pub fn supernode_count(&self) -> usize {
        self.members.len()
    }

    pub fn levels(&self) -> usize {
        self.by_level.len()
    }

    pub fn nodes_at_level(&self, level: usize) -> usize {
        self.by_level.get(level - 1).map_or(0, |v| v.len())
    }

    /// The supernode with the given (level, rank) pair.
    pub fn supernode_at(&self, level: usize, rank: usize) -> Option<usize> {
        self.by_level
            .get(level - 1)
            .and_then(|v| v.get(rank - 1))
            .copied()
    }

    /// Supernodes with no incoming superedge.
    pub fn roots(&self) -> &[usize] {
        &self.by_level[0]
    }

    pub fn to_json_value(&self, classes: Option<&[SccClass]>) -> serde_json::Value {
        let supernodes: Vec<serde_json::Value> = (0..self.supernode_count())
            .map(|s| {
                let mut v = json!({
                    "id": s,
                    "members": self.members[s],
                    "level": self.level[s],
                    "rank": self.rank[s],
                });
                if let Some(classes) = classes {
                    v["type"] = json!(classes[s].scc_type.as_u8());
                }
                v
            })
            .collect();
        let edges: Vec<[usize; 2]> = (0..self.supernode_count())
            .flat_map(|u| self.edges[u].iter().map(move |&v| [u, v]))
            .collect();
        json!({
            "kind": self.kind.name(),
            "levels": self.levels(),
            "supernodes": supernodes,
            "edges": edges,
        })
    }

    /// Dot-format rendering with one node per supernode.
    pub fn to_dot(&self, classes: Option<&[SccClass]>) -> String {
        let mut s = String::new();
        s.push_str(&format!("digraph {} {{\n", self.kind.name()));
        s.push_str("  rankdir=TB;\n");
        for (id, members) in self.members.iter().enumerate() {
            let ty = classes
                .map(|c| format!(" t{}", c[id].scc_type.as_u8()))
                .unwrap_or_default();
            s.push_str(&format!(
                "  s{id} [label=\"({},{}){} |{}|\"];\n",
                self.level[id],
                self.rank[id],
                ty,
                members.len()
            ));
        }
        for (u, outs) in self.edges.iter().enumerate() {
            for &v in outs {
                s.push_str(&format!("  s{u} -> s{v};\n"));
            }
        }
        s.push_str("}\n");
        s
    }
}

/// Condensation induced by an arbitrary total map (no self superedges).
/// Fails with `NotAcyclic` when the induced supergraph has a cycle.
pub fn condense(
    adj: &[Vec<usize>],
    map: &[usize],
    kind: CondensationKind,
) -> Result<Condensation> {
    assert_eq!(adj.len(), map.len(), "condensing map must be total");
    let count = map.iter().copied().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); count];
    for (v, &s) in map.iter().enumerate() {
        members[s].push(v);
    }
    if members.iter().any(|m| m.is_empty()) {
        return Err(Error::Internal(
            "condensing map must be onto 0..supernode_count".into(),
        ));
    }
    let mut edges: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); count];
    for (u, outs) in adj.iter().enumerate() {
        for &v in outs {
            let (su, sv) = (map[u], map[v]);
            if su != sv {
                edges[su].insert(sv);
            }
        }
    }
    let edges: Vec<Vec<usize>> = edges.into_iter().map(|e| e.into_iter().collect()).collect();
    finish(kind, map.to_vec(), members, edges)
}

/// Level/rank assignment shared by all construction paths.
fn finish(
    kind: CondensationKind,
    map: Vec<usize>,
    members: Vec<Vec<usize>>,
    edges: Vec<Vec<usize>>,
) -> Result<Condensation> {
    let count = members.len();
    let mut indeg = vec![0usize; count];
    for outs in &edges {
        for &v in outs {
            indeg[v] += 1;
        }
    }
    let mut level = vec![1usize; count];
    let mut queue: Vec<usize> = (0..count).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0usize;
    let mut head = 0usize;
    while head < queue.len() {
        let u = queue[head];
        head += 1;
        seen += 1;
        for &v in &edges[u] {
            level[v] = level[v].max(level[u] + 1);
            indeg[v] -= 1;
            if indeg[v] == 0 {
                queue.push(v);
            }
        }
    }
    if seen != count {
        return Err(Error::NotAcyclic);
    }
    let max_level = level.iter().copied().max().unwrap_or(0);
    let mut by_level: Vec<Vec<usize>> = vec![Vec::new(); max_level];
    for s in 0..count {
        by_level[level[s] - 1].push(s);
    }
    let mut rank = vec![0usize; count];
    for group in &mut by_level {
        group.sort_by_key(|&s| members[s][0]);
        for (r, &s) in group.iter().enumerate() {
            rank[s] = r + 1;
        }
    }
    Ok(Condensation {
        kind,
        map,
        members,
        edges,
        level,
        rank,
        by_level,
    })
}

/// Classic condensation: one supernode per SCC of the graph.
pub fn classic_condensation(g: &SignedGraph) -> Condensation {
    let adj = g.out_adjacency();
    let part = scc(&adj);
    condense(&adj, &part.comp_of, CondensationKind::Classic)
        .expect("SCC condensation is acyclic")
}

/// The classic, enlarged, and signed condensations of one graph, built
/// from a single SCC pass over the lift.
#[derive(Debug, Clone)]
pub struct Condensations {
    pub classic: Condensation,
    pub enlarged: Condensation,
    pub signed: Condensation,
}

pub fn condense_all(g: &SignedGraph, en: &EnlargedGraph) -> Result<Condensations> {
    let classic = classic_condensation(g);

    let eadj = en.out_adjacency();
    let epart = scc(&eadj);
    let enlarged = condense(&eadj, &epart.comp_of, CondensationKind::Enlarged)?;

    let signed = signed_from_enlarged(g.n(), en, &epart, &enlarged)?;
    Ok(Condensations {
        classic,
        enlarged,
        signed,
    })
}

/// Signed condensation of a graph, built standalone. Prefer
/// [`condense_all`] when the other condensations are needed too.
pub fn signed_condensation(g: &SignedGraph, en: &EnlargedGraph) -> Result<Condensation> {
    let eadj = en.out_adjacency();
    let epart = scc(&eadj);
    let enlarged = condense(&eadj, &epart.comp_of, CondensationKind::Enlarged)?;
    signed_from_enlarged(g.n(), en, &epart, &enlarged)
}

/// Signed condensation: supernodes are the lift SCCs holding original
/// nodes; superedges are the lift condensation's edges with mirror-only
/// endpoints folded onto their twins.
fn signed_from_enlarged(
    n: usize,
    en: &EnlargedGraph,
    epart: &Partition,
    enlarged: &Condensation,
) -> Result<Condensation> {
    let ecount = epart.len();
    let twin: Vec<usize> = (0..ecount)
        .map(|s| epart.comp_of[en.mirror(epart.members[s][0])])
        .collect();
    let has_original: Vec<bool> = epart
        .members
        .iter()
        .map(|ms| ms.iter().any(|&v| v < n))
        .collect();
    let fold = |s: usize| if has_original[s] { s } else { twin[s] };

    let mut signed_id = vec![usize::MAX; ecount];
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (cid, ms) in epart.members.iter().enumerate() {
        if has_original[cid] {
            signed_id[cid] = members.len();
            members.push(ms.iter().copied().filter(|&v| v < n).collect());
        }
    }
    let map: Vec<usize> = (0..n).map(|i| signed_id[epart.comp_of[i]]).collect();

    let mut edges: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); members.len()];
    for (u, outs) in enlarged.edges.iter().enumerate() {
        for &v in outs {
            let (fu, fv) = (fold(u), fold(v));
            if fu != fv {
                edges[signed_id[fu]].insert(signed_id[fv]);
            }
        }
    }
    let edges: Vec<Vec<usize>> = edges.into_iter().map(|e| e.into_iter().collect()).collect();
    finish(CondensationKind::Signed, map, members, edges)
}

/// SCC type per the balance trichotomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SccType {
    /// No negative internal weight.
    Type1,
    /// Negative weights present, structurally balanced.
    Type2,
    /// Negative weights present, structurally unbalanced.
    Type3,
}

impl SccType {
    pub fn as_u8(self) -> u8 {
        match self {
            SccType::Type1 => 1,
            SccType::Type2 => 2,
            SccType::Type3 => 3,
        }
    }
}

/// Classification record for one classic SCC.
///
/// For type 2 the two camps are the lift-SCC split of the members, with
/// gauge +1 assigned to the camp holding the smallest node id. Types 1
/// and 3 keep all members in `plus_part`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SccClass {
    pub component: usize,
    pub scc_type: SccType,
    pub plus_part: Vec<usize>,
    pub minus_part: Vec<usize>,
}

impl SccClass {
    /// Gauge sign of a member node (+1.0 or -1.0).
    pub fn gauge(&self, node: usize) -> f64 {
        if self.minus_part.binary_search(&node).is_ok() {
            -1.0
        } else {
            1.0
        }
    }
}

/// Classify one classic SCC given its sorted member list.
pub fn classify_scc(g: &SignedGraph, component: usize, members: &[usize]) -> SccClass {
    let pos: BTreeMap<usize, usize> = members.iter().enumerate().map(|(k, &v)| (v, k)).collect();
    let k = members.len();
    let mut has_negative = false;
    // Lift of the induced subgraph: local node v and its mirror v + k.
    let mut ladj: Vec<Vec<usize>> = vec![Vec::new(); 2 * k];
    for (li, &i) in members.iter().enumerate() {
        for (dst, sign) in g.out_neighbors(i) {
            if let Some(&lj) = pos.get(&dst) {
                match sign {
                    Sign::Plus => {
                        ladj[li].push(lj);
                        ladj[li + k].push(lj + k);
                    }
                    Sign::Minus => {
                        has_negative = true;
                        ladj[li].push(lj + k);
                        ladj[li + k].push(lj);
                    }
                }
            }
        }
    }
    if !has_negative {
        return SccClass {
            component,
            scc_type: SccType::Type1,
            plus_part: members.to_vec(),
            minus_part: Vec::new(),
        };
    }
    let part = scc(&ladj);
    match part.len() {
        1 => SccClass {
            component,
            scc_type: SccType::Type3,
            plus_part: members.to_vec(),
            minus_part: Vec::new(),
        },
        2 => {
            let anchor = part.comp_of[0];
            let mut plus = Vec::new();
            let mut minus = Vec::new();
            for (li, &i) in members.iter().enumerate() {
                if part.comp_of[li] == anchor {
                    plus.push(i);
                } else {
                    minus.push(i);
                }
            }
            SccClass {
                component,
                scc_type: SccType::Type2,
                plus_part: plus,
                minus_part: minus,
            }
        }
        other => unreachable!(
            "lift of a strongly connected signed graph has 1 or 2 SCCs, found {other}"
        ),
    }
}

/// Classify every SCC of the classic condensation.
pub fn classify_all(g: &SignedGraph, classic: &Condensation) -> Vec<SccClass> {
    let work = |(component, members): (usize, &Vec<usize>)| classify_scc(g, component, members);
    #[cfg(feature = "parallel")]
    {
        classic.members.par_iter().enumerate().map(work).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        classic.members.iter().enumerate().map(work).collect()
    }
}

/// Sequential twin of [`classify_all`], kept for benchmarking the kernels.
pub fn classify_all_seq(g: &SignedGraph, classic: &Condensation) -> Vec<SccClass> {
    classic
        .members
        .iter()
        .enumerate()
        .map(|(component, members)| classify_scc(g, component, members))
        .collect()
}

/// Inclusive ancestor/descendant sets per supernode of a condensation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reach {
    pub upstream: Vec<Vec<usize>>,
    pub downstream: Vec<Vec<usize>>,
}

impl Reach {
    /// Supernodes of the given level in the upstream of `sup` (the set
    /// whose cardinality is the level's upstream count).
    pub fn upstream_at_level(&self, c: &Condensation, sup: usize, level: usize) -> Vec<usize> {
        self.upstream[sup]
            .iter()
            .copied()
            .filter(|&u| c.level[u] == level)
            .collect()
    }
}

pub fn reach(c: &Condensation) -> Reach {
    let count = c.supernode_count();
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); count];
    for (u, outs) in c.edges.iter().enumerate() {
        for &v in outs {
            rev[v].push(u);
        }
    }
    let closure = |adj: &Vec<Vec<usize>>| -> Vec<Vec<usize>> {
        (0..count)
            .map(|start| {
                let mut seen = vec![false; count];
                let mut stack = vec![start];
                seen[start] = true;
                while let Some(u) = stack.pop() {
                    for &v in &adj[u] {
                        if !seen[v] {
                            seen[v] = true;
                            stack.push(v);
                        }
                    }
                }
                (0..count).filter(|&v| seen[v]).collect()
            })
            .collect()
    };
    Reach {
        downstream: closure(&c.edges),
        upstream: closure(&rev),
    }
}

/// Cross-condensation association table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Association {
    /// Per classic supernode: its signed supernode and, for split (type 2)
    /// components, the partner camp.
    pub signed_parts: Vec<(usize, Option<usize>)>,
    /// Per classic supernode: the lift supernode holding its smallest
    /// member, and the mirror twin when distinct.
    pub enlarged_parts: Vec<(usize, Option<usize>)>,
    /// Per lift supernode: the classic supernode its members project to.
    pub enlarged_to_classic: Vec<usize>,
}

/// Build the association table and verify level agreement across the three
/// condensations.
pub fn associate(cs: &Condensations, en: &EnlargedGraph) -> Result<Association> {
    let n = en.original_count();
    let Condensations {
        classic,
        enlarged,
        signed,
    } = cs;
    if classic.levels() != signed.levels() || classic.levels() != enlarged.levels() {
        return Err(Error::Internal(format!(
            "level counts diverge: classic {} signed {} enlarged {}",
            classic.levels(),
            signed.levels(),
            enlarged.levels()
        )));
    }

    let mut enlarged_to_classic = vec![usize::MAX; enlarged.supernode_count()];
    for (s, ms) in enlarged.members.iter().enumerate() {
        for &v in ms {
            let c = classic.map[v % n];
            if enlarged_to_classic[s] == usize::MAX {
                enlarged_to_classic[s] = c;
            } else if enlarged_to_classic[s] != c {
                return Err(Error::Internal(format!(
                    "lift supernode {s} spans classic components {} and {c}",
                    enlarged_to_classic[s]
                )));
            }
        }
    }

    let mut signed_parts = Vec::with_capacity(classic.supernode_count());
    let mut enlarged_parts = Vec::with_capacity(classic.supernode_count());
    for (c, members) in classic.members.iter().enumerate() {
        let mut parts: Vec<usize> = members.iter().map(|&v| signed.map[v]).collect();
        parts.sort_unstable();
        parts.dedup();
        let (first, second) = match parts.as_slice() {
            [a] => (*a, None),
            [a, b] => {
                // the camp of the smallest member comes first
                let lead = signed.map[members[0]];
                let other = if lead == *a { *b } else { *a };
                (lead, Some(other))
            }
            _ => {
                return Err(Error::Internal(format!(
                    "classic component {c} splits into {} signed parts",
                    parts.len()
                )))
            }
        };
        let union: usize = parts.iter().map(|&p| signed.members[p].len()).sum();
        if union != members.len() {
            return Err(Error::Internal(format!(
                "signed parts of classic component {c} do not cover it"
            )));
        }

        let e_first = enlarged.map[members[0]];
        let e_twin = enlarged.map[en.mirror(members[0])];
        let e_second = (e_twin != e_first).then_some(e_twin);

        for part in [Some(first), second].into_iter().flatten() {
            if signed.level[part] != classic.level[c] {
                return Err(Error::Internal(format!(
                    "signed part {part} of classic component {c} sits at level {} != {}",
                    signed.level[part], classic.level[c]
                )));
            }
        }
        for part in [Some(e_first), e_second].into_iter().flatten() {
            if enlarged.level[part] != classic.level[c] {
                return Err(Error::Internal(format!(
                    "lift part {part} of classic component {c} sits at level {} != {}",
                    enlarged.level[part], classic.level[c]
                )));
            }
        }

        signed_parts.push((first, second));
        enlarged_parts.push((e_first, e_second));
    }
    Ok(Association {
        signed_parts,
        enlarged_parts,
        enlarged_to_classic,
    })
}
