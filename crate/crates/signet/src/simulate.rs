//! Iteration of the consensus dynamics `x <- A x`, convergence detection,
//! the empirically contained set, and realization of a placement into
//! concrete leader-to-follower control edges.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Sign, SignedGraph, WeightMatrix};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How densely the trajectory is recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceMode {
    /// Stride 1 up to 100 nodes, stride 10 beyond.
    Auto,
    Every(usize),
    /// Keep only the final state.
    FinalOnly,
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub max_iters: usize,
    pub conv_tol: f64,
    pub trace: TraceMode,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            max_iters: 100_000,
            conv_tol: 1e-12,
            trace: TraceMode::Auto,
        }
    }
}

/// A recorded run of the dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    /// Sampled `(iteration, state)` pairs, starting at iteration 0.
    pub samples: Vec<(usize, Vec<f64>)>,
    pub iterations: usize,
    pub converged: bool,
    pub final_state: Vec<f64>,
    /// `max_{j in C} |x_j(0)|`.
    pub bound: f64,
}

/// Iterate `x <- A x` until the sup-norm step change drops below
/// `conv_tol` or `max_iters` is reached. Leader rows are unit basis rows,
/// so leader states are bitwise constant.
pub fn run(
    a: &WeightMatrix,
    leaders: &BTreeSet<usize>,
    x0: &[f64],
    opts: &SimOptions,
) -> SimTrace {
    let n = a.n();
    assert_eq!(x0.len(), n, "x0 must have one entry per node");
    let stride = match opts.trace {
        TraceMode::Auto => {
            if n <= 100 {
                Some(1)
            } else {
                Some(10)
            }
        }
        TraceMode::Every(s) => Some(s.max(1)),
        TraceMode::FinalOnly => None,
    };
    let bound = leaders.iter().map(|&l| x0[l].abs()).fold(0.0, f64::max);

    let mut x = x0.to_vec();
    let mut next = vec![0.0; n];
    let mut samples = Vec::new();
    if stride.is_some() {
        samples.push((0, x.clone()));
    }
    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=opts.max_iters {
        a.apply_into(&x, &mut next);
        let delta = x
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut x, &mut next);
        iterations = k;
        if let Some(s) = stride {
            if k % s == 0 {
                samples.push((k, x.clone()));
            }
        }
        if delta <= opts.conv_tol {
            converged = true;
            break;
        }
    }
    if let Some(s) = stride {
        if iterations % s != 0 {
            samples.push((iterations, x.clone()));
        }
    }
    SimTrace {
        samples,
        iterations,
        converged,
        final_state: x,
        bound,
    }
}

/// Run one simulation per initial condition; trials are independent and
/// run on the thread pool when the `parallel` feature is enabled.
pub fn run_many(
    a: &WeightMatrix,
    leaders: &BTreeSet<usize>,
    x0s: &[Vec<f64>],
    opts: &SimOptions,
) -> Vec<SimTrace> {
    #[cfg(feature = "parallel")]
    {
        x0s.par_iter().map(|x0| run(a, leaders, x0, opts)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        x0s.iter().map(|x0| run(a, leaders, x0, opts)).collect()
    }
}

/// Followers whose final simulated magnitude is within the leader bound
/// plus `tol`. Errors when the trace has not converged.
pub fn empirical_contained(
    trace: &SimTrace,
    leaders: &BTreeSet<usize>,
    tol: f64,
) -> Result<BTreeSet<usize>> {
    if !trace.converged {
        return Err(Error::NotConverged);
    }
    Ok((0..trace.final_state.len())
        .filter(|i| !leaders.contains(i))
        .filter(|&i| trace.final_state[i].abs() <= trace.bound + tol)
        .collect())
}

/// Attach one leader to one member of each selected root SCC via a
/// positive edge. Both picks are uniform under the seeded generator, and
/// the touched rows renormalize when weights are rebuilt.
///
/// Returns the realized graph and the chosen `(leader, node)` pairs in
/// root order.
pub fn realize_control(
    g: &SignedGraph,
    selected_roots: &[Vec<usize>],
    seed: u64,
) -> Result<(SignedGraph, Vec<(usize, usize)>)> {
    let leaders: Vec<usize> = g.leaders().iter().copied().collect();
    if leaders.is_empty() {
        return Err(Error::NoLeaders);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut realized = g.clone();
    let mut pairs = Vec::with_capacity(selected_roots.len());
    for root in selected_roots {
        assert!(!root.is_empty(), "selected root has no members");
        let mut attached = None;
        // a redraw only happens if the sampled control edge already exists
        for _ in 0..(root.len() * leaders.len()).max(8) {
            let node = root[rng.random_range(0..root.len())];
            let leader = leaders[rng.random_range(0..leaders.len())];
            if realized.sign(leader, node).is_none() {
                realized = realized.with_edge(leader, node, Sign::Plus)?;
                attached = Some((leader, node));
                break;
            }
        }
        let pair = attached.ok_or_else(|| {
            Error::Internal("every candidate control edge already exists".into())
        })?;
        pairs.push(pair);
    }
    Ok((realized, pairs))
}

/// Uniform initial state in `[lo, hi)` from a seeded portable generator.
pub fn uniform_x0(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Uniform initial state with fixed leader entries; `leader_states` maps
/// onto the leader set in ascending node order.
pub fn x0_with_leader_states(
    n: usize,
    leaders: &BTreeSet<usize>,
    leader_states: &[f64],
    lo: f64,
    hi: f64,
    seed: u64,
) -> Vec<f64> {
    assert_eq!(
        leader_states.len(),
        leaders.len(),
        "one state per leader required"
    );
    let mut x0 = uniform_x0(n, lo, hi, seed);
    for (&l, &s) in leaders.iter().zip(leader_states) {
        x0[l] = s;
    }
    x0
}

/// CSV rows `k,x_0,...,x_{n-1}` for every recorded sample.
pub fn trace_csv(trace: &SimTrace) -> String {
    let n = trace.final_state.len();
    let mut out = String::from("k");
    for i in 0..n {
        out.push_str(&format!(",x_{i}"));
    }
    out.push('\n');
    for (k, state) in &trace.samples {
        out.push_str(&k.to_string());
        for v in state {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn graph(text: &str) -> SignedGraph {
        SignedGraph::parse(text).unwrap().0
    }

    #[test]
    fn leaders_only_converges_immediately() {
        let g = graph("#leaders: 0 1\n0 0 +\n1 1 +");
        let a = WeightMatrix::from_graph(&g);
        let x0 = vec![1.5, -2.5];
        let trace = run(&a, g.leaders(), &x0, &SimOptions::default());
        assert!(trace.converged);
        assert_eq!(trace.iterations, 1);
        assert_eq!(trace.final_state, x0);
    }

    #[test]
    fn unbalanced_pair_decays_to_zero() {
        let g = graph("0 1 -\n1 0 +\n0 0 +\n1 1 +");
        let a = WeightMatrix::from_graph(&g);
        let trace = run(&a, g.leaders(), &[1.0, 3.0], &SimOptions::default());
        assert!(trace.converged);
        assert_abs_diff_eq!(trace.final_state[0], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(trace.final_state[1], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn leader_states_are_bitwise_constant() {
        let g = graph("#leaders: 0\n0 0 +\n0 1 -\n1 1 +\n1 2 +\n2 2 +");
        let a = WeightMatrix::from_graph(&g);
        let x0 = vec![0.3333333333333333, 5.0, -1.0];
        let trace = run(&a, g.leaders(), &x0, &SimOptions::default());
        for (_, state) in &trace.samples {
            assert_eq!(state[0], x0[0]);
        }
        assert_eq!(trace.final_state[0], x0[0]);
    }

    #[test]
    fn state_stays_bounded_by_initial_norm() {
        let g = graph("0 1 -\n1 2 -\n2 0 -\n0 0 +\n1 1 +\n2 2 +");
        let a = WeightMatrix::from_graph(&g);
        let x0 = vec![3.0, -7.0, 2.0];
        let norm0 = 7.0;
        let trace = run(&a, g.leaders(), &x0, &SimOptions::default());
        for (_, state) in &trace.samples {
            let m = state.iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!(m <= norm0 + 1e-12);
        }
    }

    #[test]
    fn empirical_contained_requires_convergence() {
        let g = graph("#leaders: 0\n0 0 +\n0 1 +\n1 1 +");
        let a = WeightMatrix::from_graph(&g);
        let opts = SimOptions {
            max_iters: 1,
            conv_tol: 0.0,
            trace: TraceMode::FinalOnly,
        };
        let trace = run(&a, g.leaders(), &[1.0, 100.0], &opts);
        assert!(!trace.converged);
        assert!(matches!(
            empirical_contained(&trace, g.leaders(), 1e-6),
            Err(Error::NotConverged)
        ));
    }

    #[test]
    fn realize_control_is_seed_deterministic() {
        let g = graph("#leaders: 0\n0 0 +\n1 2 +\n2 3 +\n3 1 +\n1 1 +\n2 2 +\n3 3 +");
        let root = vec![vec![1, 2, 3]];
        let (g1, p1) = realize_control(&g, &root, 7).unwrap();
        let (g2, p2) = realize_control(&g, &root, 7).unwrap();
        assert_eq!(g1, g2);
        assert_eq!(p1, p2);
        assert_eq!(p1[0].0, 0);
        assert!(root[0].contains(&p1[0].1));
        // the control edge is positive and present
        assert_eq!(g1.sign(p1[0].0, p1[0].1), Some(Sign::Plus));
    }

    #[test]
    fn realize_control_needs_leaders() {
        let g = graph("0 0 +\n1 1 +");
        let err = realize_control(&g, &[vec![1]], 0).unwrap_err();
        assert!(matches!(err, Error::NoLeaders));
    }

    #[test]
    fn uniform_x0_is_deterministic_and_in_range() {
        let a = uniform_x0(100, -10.0, 10.0, 3);
        let b = uniform_x0(100, -10.0, 10.0, 3);
        assert_eq!(a, b);
        assert!(a.iter().all(|&v| (-10.0..10.0).contains(&v)));
        let c = uniform_x0(100, -10.0, 10.0, 4);
        assert_ne!(a, c);
    }

    #[test]
    fn trace_csv_shape() {
        let g = graph("#leaders: 0\n0 0 +\n0 1 +\n1 1 +");
        let a = WeightMatrix::from_graph(&g);
        let trace = run(&a, g.leaders(), &[1.0, 0.0], &SimOptions::default());
        let csv = trace_csv(&trace);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("k,x_0,x_1"));
        assert!(lines.next().unwrap().starts_with("0,1,0"));
    }
}
