//! Exact asymptotic states of the consensus dynamics.
//!
//! Root SCCs settle independently: an all-positive root reaches consensus
//! at its left-Perron average, a balanced root polarizes into gauge-signed
//! copies of the gauged average, and an unbalanced root decays to zero.
//! Every non-root SCC then inherits a unique fixed point obtained by
//! solving `(I - A_block) x = inflow` level by level, which this module
//! does in level-synchronous passes.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde_json::json;

use crate::condense::{Condensation, SccClass, SccType};
use crate::error::{Error, Result};
use crate::graph::WeightMatrix;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Numerical knobs with the documented defaults.
#[derive(Debug, Clone)]
pub struct SteadyOptions {
    /// Residual bound for left-Perron vectors.
    pub perron_tol: f64,
    /// Fixed-point residual bound on the assembled solution.
    pub residual_tol: f64,
    /// Slack added to the leader bound when testing containment.
    pub contain_tol: f64,
    /// Largest block solved by direct LU; bigger blocks use power iteration.
    pub dense_solve_max: usize,
    /// Iteration cap for the power-iteration fallback.
    pub power_iter_cap: usize,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        SteadyOptions {
            perron_tol: 1e-12,
            residual_tol: 1e-9,
            contain_tol: 1e-9,
            dense_solve_max: 2000,
            power_iter_cap: 200_000,
        }
    }
}

/// `max_j |(xi^T M - xi^T)_j|`.
fn perron_residual(block: &DMatrix<f64>, xi: &DVector<f64>) -> f64 {
    let prod = block.tr_mul(xi); // M^T xi
    (prod - xi).amax()
}

/// Left eigenvector of an irreducible row-stochastic block for eigenvalue
/// one, normalized to sum 1. Solves the singular system directly and falls
/// back to power iteration when the solve is unreliable or the block is
/// large.
pub fn left_perron(block: &DMatrix<f64>, opts: &SteadyOptions) -> Result<DVector<f64>> {
    let k = block.nrows();
    assert_eq!(k, block.ncols(), "block must be square");
    if k == 1 {
        return Ok(DVector::from_element(1, 1.0));
    }
    if k <= opts.dense_solve_max {
        // (M^T - I) xi = 0 with the last equation replaced by sum(xi) = 1.
        let mut m = block.transpose();
        for i in 0..k {
            m[(i, i)] -= 1.0;
        }
        for j in 0..k {
            m[(k - 1, j)] = 1.0;
        }
        let mut rhs = DVector::zeros(k);
        rhs[k - 1] = 1.0;
        if let Some(mut xi) = m.lu().solve(&rhs) {
            let ok_sign = xi.iter().all(|&v| v >= -opts.perron_tol);
            if ok_sign && perron_residual(block, &xi) <= opts.perron_tol {
                for v in xi.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                let total: f64 = xi.iter().sum();
                xi /= total;
                return Ok(xi);
            }
        }
    }
    power_iteration(block, opts)
}

fn power_iteration(block: &DMatrix<f64>, opts: &SteadyOptions) -> Result<DVector<f64>> {
    let k = block.nrows();
    let mt = block.transpose();
    let mut xi = DVector::from_element(k, 1.0 / k as f64);
    let mut residual = f64::INFINITY;
    for _ in 0..opts.power_iter_cap {
        let mut next = &mt * &xi;
        let total: f64 = next.iter().sum();
        next /= total;
        residual = (&next - &xi).amax();
        xi = next;
        if residual <= opts.perron_tol {
            return Ok(xi);
        }
    }
    Err(Error::PerronNoConvergence {
        iters: opts.power_iter_cap,
        residual,
    })
}

/// Limit behaviour of one root SCC.
#[derive(Debug, Clone, PartialEq)]
pub enum LimitKind {
    /// All members converge to the same value.
    Consensus(f64),
    /// Members converge to `gauge * alpha` per the component's camps.
    Bipartite { alpha: f64 },
    /// All members decay to zero.
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RsccLimit {
    pub component: usize,
    pub kind: LimitKind,
}

impl RsccLimit {
    /// Limit value for a member node.
    pub fn value_for(&self, node: usize, class: &SccClass) -> f64 {
        match &self.kind {
            LimitKind::Consensus(alpha) => *alpha,
            LimitKind::Bipartite { alpha } => class.gauge(node) * alpha,
            LimitKind::Zero => 0.0,
        }
    }
}

fn root_limit(
    a: &WeightMatrix,
    members: &[usize],
    class: &SccClass,
    x0: &[f64],
    opts: &SteadyOptions,
) -> Result<RsccLimit> {
    let kind = match class.scc_type {
        SccType::Type1 => {
            let block = a.dense_block(members, members);
            let xi = left_perron(&block, opts)?;
            let alpha = members
                .iter()
                .enumerate()
                .map(|(p, &i)| xi[p] * x0[i])
                .sum();
            LimitKind::Consensus(alpha)
        }
        SccType::Type2 => {
            // Gauge route: D A D is nonnegative row-stochastic, consensus
            // happens in gauged coordinates.
            let mut block = a.dense_block(members, members);
            for (p, &i) in members.iter().enumerate() {
                for (q, &j) in members.iter().enumerate() {
                    block[(p, q)] *= class.gauge(i) * class.gauge(j);
                }
            }
            let xi = left_perron(&block, opts)?;
            let alpha = members
                .iter()
                .enumerate()
                .map(|(p, &i)| xi[p] * class.gauge(i) * x0[i])
                .sum();
            LimitKind::Bipartite { alpha }
        }
        SccType::Type3 => LimitKind::Zero,
    };
    Ok(RsccLimit {
        component: class.component,
        kind,
    })
}

/// Limits of every level-1 SCC.
pub fn root_limits(
    a: &WeightMatrix,
    classic: &Condensation,
    classes: &[SccClass],
    x0: &[f64],
    opts: &SteadyOptions,
) -> Result<Vec<RsccLimit>> {
    classic
        .roots()
        .iter()
        .map(|&c| root_limit(a, &classic.members[c], &classes[c], x0, opts))
        .collect()
}

/// Exact asymptotic state of every node.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateSolution {
    pub x_bar: Vec<f64>,
    pub root_limits: Vec<RsccLimit>,
    /// `max_i |x_bar_i - (A x_bar)_i|`.
    pub residual: f64,
}

enum BlockResult {
    Root(RsccLimit, Vec<f64>),
    Interior(Vec<f64>),
}

fn solve_block(
    a: &WeightMatrix,
    classic: &Condensation,
    classes: &[SccClass],
    x_bar: &[f64],
    x0: &[f64],
    sup: usize,
    is_root: bool,
    opts: &SteadyOptions,
) -> Result<BlockResult> {
    let members = &classic.members[sup];
    if is_root {
        let limit = root_limit(a, members, &classes[sup], x0, opts)?;
        let values = members
            .iter()
            .map(|&i| limit.value_for(i, &classes[sup]))
            .collect();
        return Ok(BlockResult::Root(limit, values));
    }
    // (I - A_block) y = inflow from already-solved upstream columns.
    let block = a.dense_block(members, members);
    let mut system = DMatrix::identity(members.len(), members.len());
    system -= &block;
    let mut rhs = DVector::zeros(members.len());
    for (r, &i) in members.iter().enumerate() {
        let mut acc = 0.0;
        for &(j, w) in a.row(i) {
            if members.binary_search(&j).is_err() {
                acc += w * x_bar[j];
            }
        }
        rhs[r] = acc;
    }
    let y = system.lu().solve(&rhs).ok_or_else(|| {
        Error::Internal(format!("singular interior block for supernode {sup}"))
    })?;
    Ok(BlockResult::Interior(y.iter().copied().collect()))
}

/// Assemble the full steady state by ascending levels. Blocks within one
/// level are independent and solved concurrently when the `parallel`
/// feature is enabled.
pub fn steady_state_all(
    a: &WeightMatrix,
    classic: &Condensation,
    classes: &[SccClass],
    x0: &[f64],
    opts: &SteadyOptions,
) -> Result<SteadyStateSolution> {
    let n = a.n();
    assert_eq!(x0.len(), n, "x0 must have one entry per node");
    let mut x_bar = vec![0.0; n];
    let mut limits = Vec::new();

    for (level_idx, supers) in classic.by_level.iter().enumerate() {
        let is_root = level_idx == 0;
        let solve = |&sup: &usize| {
            solve_block(a, classic, classes, &x_bar, x0, sup, is_root, opts)
                .map(|res| (sup, res))
        };
        #[cfg(feature = "parallel")]
        let results: Result<Vec<_>> = supers.par_iter().map(solve).collect();
        #[cfg(not(feature = "parallel"))]
        let results: Result<Vec<_>> = supers.iter().map(solve).collect();

        for (sup, res) in results? {
            let values = match res {
                BlockResult::Root(limit, values) => {
                    limits.push(limit);
                    values
                }
                BlockResult::Interior(values) => values,
            };
            for (&i, v) in classic.members[sup].iter().zip(values) {
                x_bar[i] = v;
            }
        }
    }

    let ax = a.apply(&x_bar);
    let residual = x_bar
        .iter()
        .zip(&ax)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    if residual > opts.residual_tol {
        return Err(Error::ResidualTooLarge {
            residual,
            tol: opts.residual_tol,
        });
    }
    limits.sort_by_key(|l| l.component);
    Ok(SteadyStateSolution {
        x_bar,
        root_limits: limits,
        residual,
    })
}

/// The largest leader magnitude, the containment reference.
pub fn containment_bound(leaders: &BTreeSet<usize>, x0: &[f64]) -> f64 {
    leaders.iter().map(|&l| x0[l].abs()).fold(0.0, f64::max)
}

/// Followers whose asymptotic magnitude stays within the leader bound.
pub fn contained_set(
    sol: &SteadyStateSolution,
    leaders: &BTreeSet<usize>,
    x0: &[f64],
    opts: &SteadyOptions,
) -> BTreeSet<usize> {
    let bound = containment_bound(leaders, x0);
    (0..sol.x_bar.len())
        .filter(|i| !leaders.contains(i))
        .filter(|&i| sol.x_bar[i].abs() <= bound + opts.contain_tol)
        .collect()
}

/// CSV rows `node,scc,type,x_bar,contained`.
pub fn solution_csv(
    sol: &SteadyStateSolution,
    classic: &Condensation,
    classes: &[SccClass],
    leaders: &BTreeSet<usize>,
    x0: &[f64],
    opts: &SteadyOptions,
) -> String {
    let contained = contained_set(sol, leaders, x0, opts);
    let mut out = String::from("node,scc,type,x_bar,contained\n");
    for i in 0..sol.x_bar.len() {
        let c = classic.map[i];
        out.push_str(&format!(
            "{i},{c},{},{},{}\n",
            classes[c].scc_type.as_u8(),
            sol.x_bar[i],
            contained.contains(&i) as u8
        ));
    }
    out
}

pub fn solution_json(
    sol: &SteadyStateSolution,
    classic: &Condensation,
    classes: &[SccClass],
    leaders: &BTreeSet<usize>,
    x0: &[f64],
    opts: &SteadyOptions,
) -> serde_json::Value {
    let contained = contained_set(sol, leaders, x0, opts);
    let roots: Vec<serde_json::Value> = sol
        .root_limits
        .iter()
        .map(|l| {
            let (kind, alpha) = match &l.kind {
                LimitKind::Consensus(a) => ("consensus", Some(*a)),
                LimitKind::Bipartite { alpha } => ("bipartite", Some(*alpha)),
                LimitKind::Zero => ("zero", None),
            };
            json!({"component": l.component, "kind": kind, "alpha": alpha})
        })
        .collect();
    json!({
        "x_bar": sol.x_bar,
        "residual": sol.residual,
        "bound": containment_bound(leaders, x0),
        "contained": contained.iter().collect::<Vec<_>>(),
        "root_limits": roots,
        "scc_of_node": classic.map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condense::{classic_condensation, classify_all};
    use crate::graph::SignedGraph;
    use approx::assert_abs_diff_eq;

    fn setup(text: &str) -> (SignedGraph, WeightMatrix, Condensation, Vec<SccClass>) {
        let g = SignedGraph::parse(text).unwrap().0;
        let a = WeightMatrix::from_graph(&g);
        let classic = classic_condensation(&g);
        let classes = classify_all(&g, &classic);
        (g, a, classic, classes)
    }

    #[test]
    fn perron_doubly_stochastic() {
        let m = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let xi = left_perron(&m, &SteadyOptions::default()).unwrap();
        assert_abs_diff_eq!(xi[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(xi[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn perron_singleton() {
        let m = DMatrix::from_row_slice(1, 1, &[1.0]);
        let xi = left_perron(&m, &SteadyOptions::default()).unwrap();
        assert_eq!(xi[0], 1.0);
    }

    #[test]
    fn perron_circulant() {
        let m = DMatrix::from_row_slice(3, 3, &[0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 0.5, 0.0, 0.5]);
        let xi = left_perron(&m, &SteadyOptions::default()).unwrap();
        for p in 0..3 {
            assert_abs_diff_eq!(xi[p], 1.0 / 3.0, epsilon = 1e-12);
        }
        assert!(perron_residual(&m, &xi) <= 1e-12);
    }

    #[test]
    fn power_iteration_agrees_with_solve() {
        let m = DMatrix::from_row_slice(3, 3, &[0.4, 0.6, 0.0, 0.2, 0.5, 0.3, 0.1, 0.0, 0.9]);
        let opts = SteadyOptions::default();
        let solved = left_perron(&m, &opts).unwrap();
        let powered = power_iteration(&m, &opts).unwrap();
        for p in 0..3 {
            assert_abs_diff_eq!(solved[p], powered[p], epsilon = 1e-9);
        }
    }

    #[test]
    fn type1_root_averages() {
        let (_, a, classic, classes) = setup("0 1 +\n1 0 +\n0 0 +\n1 1 +");
        let limits = root_limits(&a, &classic, &classes, &[1.0, 3.0], &SteadyOptions::default())
            .unwrap();
        assert_eq!(limits.len(), 1);
        match limits[0].kind {
            LimitKind::Consensus(alpha) => assert_abs_diff_eq!(alpha, 2.0, epsilon = 1e-12),
            ref other => panic!("expected consensus, got {other:?}"),
        }
    }

    #[test]
    fn type2_root_polarizes() {
        let (_, a, classic, classes) = setup("0 1 -\n1 0 -\n0 0 +\n1 1 +");
        let limits = root_limits(&a, &classic, &classes, &[1.0, 3.0], &SteadyOptions::default())
            .unwrap();
        let class = &classes[limits[0].component];
        assert_abs_diff_eq!(limits[0].value_for(0, class), -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(limits[0].value_for(1, class), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn type3_root_vanishes() {
        let (_, a, classic, classes) = setup("0 1 -\n1 0 +\n0 0 +\n1 1 +");
        let limits = root_limits(&a, &classic, &classes, &[1.0, 3.0], &SteadyOptions::default())
            .unwrap();
        assert_eq!(limits[0].kind, LimitKind::Zero);
    }

    #[test]
    fn all_leaders_fixed_point() {
        let (g, a, classic, classes) = setup("#leaders: 0 1\n0 0 +\n1 1 +");
        let x0 = [2.5, -7.0];
        let sol = steady_state_all(&a, &classic, &classes, &x0, &SteadyOptions::default())
            .unwrap();
        assert_eq!(sol.x_bar, x0.to_vec()); // exact, not approximate
        assert!(g.leaders().len() == 2);
    }

    #[test]
    fn follower_inherits_leader_state() {
        let (_, a, classic, classes) = setup("#leaders: 0\n0 0 +\n0 1 +\n1 1 +");
        let sol = steady_state_all(&a, &classic, &classes, &[3.0, 0.0], &SteadyOptions::default())
            .unwrap();
        assert_abs_diff_eq!(sol.x_bar[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn negative_chain_alternates_sign() {
        // leader 0 -(neg)-> 1 -(neg)-> 2
        let (_, a, classic, classes) =
            setup("#leaders: 0\n0 0 +\n0 1 -\n1 1 +\n1 2 -\n2 2 +");
        let sol = steady_state_all(&a, &classic, &classes, &[3.0, 0.0, 0.0], &SteadyOptions::default())
            .unwrap();
        assert_abs_diff_eq!(sol.x_bar[1], -3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.x_bar[2], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn solution_is_a_fixed_point() {
        // leader feeding an unbalanced pair feeding one sink
        let (_, a, classic, classes) =
            setup("#leaders: 0\n0 0 +\n0 1 -\n1 1 +\n1 2 +\n2 1 -\n2 2 +\n2 3 +\n3 3 +");
        let sol = steady_state_all(
            &a,
            &classic,
            &classes,
            &[2.0, 5.0, -3.0, 9.0],
            &SteadyOptions::default(),
        )
        .unwrap();
        assert!(sol.residual <= 1e-9, "residual {}", sol.residual);
        let ax = a.apply(&sol.x_bar);
        for i in 0..4 {
            assert_abs_diff_eq!(sol.x_bar[i], ax[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn contained_set_uses_leader_bound() {
        let (g, a, classic, classes) =
            setup("#leaders: 0 1 2\n0 0 +\n1 1 +\n2 2 +\n2 3 +\n3 3 +");
        let x0 = [-1.0, 0.5, 1.0, 100.0];
        let opts = SteadyOptions::default();
        let sol = steady_state_all(&a, &classic, &classes, &x0, &opts).unwrap();
        assert_eq!(containment_bound(g.leaders(), &x0), 1.0);
        let k = contained_set(&sol, g.leaders(), &x0, &opts);
        assert!(k.contains(&3)); // pulled to 1.0 by leader 2
    }

    #[test]
    fn uncontrolled_consensus_above_bound_not_contained() {
        // root pair {1,2} reaches consensus 7, leader bound is 1
        let (g, a, classic, classes) = setup(
            "#leaders: 0\n0 0 +\n1 2 +\n2 1 +\n1 1 +\n2 2 +\n2 3 +\n3 3 +\n0 4 +\n4 4 +",
        );
        let x0 = [1.0, 7.0, 7.0, 0.0, 0.0];
        let opts = SteadyOptions::default();
        let sol = steady_state_all(&a, &classic, &classes, &x0, &opts).unwrap();
        let k = contained_set(&sol, g.leaders(), &x0, &opts);
        assert!(!k.contains(&1));
        assert!(!k.contains(&3)); // downstream of the hot consensus
        assert!(k.contains(&4)); // fed by the leader
    }
}
