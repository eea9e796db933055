//! Exact solver for small dense transportation problems.
//!
//! Minimizes Σ flow(i,j)·cost(i,j) over nonnegative flows with row sums equal
//! to `supplies` and column sums equal to `demands`, using successive
//! shortest augmenting paths with node potentials (Dijkstra on reduced
//! costs). Algorithmically independent of the CDF-based Wasserstein-1
//! routine, which it serves as an oracle for; also handles arbitrary ground
//! costs (e.g. L¹ distance between points of product measures).
//!
//! Intended for instances up to ~64×64 atoms; exact up to float rounding.

use thiserror::Error;

/// Mass below this threshold counts as exhausted during augmentation.
const MASS_EPS: f64 = 1e-13;

/// Residual mass above this after the final iteration is a solver failure.
const RESIDUAL_TOL: f64 = 1e-9;

/// Errors from the transportation solver.
#[derive(Debug, Error)]
pub enum TransportError {
    #[error("supplies and demands must be non-empty")]
    Empty,
    #[error("negative or non-finite mass {mass} at index {index}")]
    BadMass { index: usize, mass: f64 },
    #[error("total supply {supply} and total demand {demand} differ by more than {tol}")]
    MassMismatch { supply: f64, demand: f64, tol: f64 },
    #[error("non-finite or negative cost {cost} at ({i}, {j})")]
    BadCost { i: usize, j: usize, cost: f64 },
    #[error("augmentation failed to route all mass (residual {residual})")]
    Unrouted { residual: f64 },
}

/// Solves the transportation problem and returns the minimal total cost.
///
/// `cost(i, j)` gives the unit cost of moving mass from supply atom `i` to
/// demand atom `j`; it must be finite and nonnegative. Supplies and demands
/// must have equal totals within `1e-9`.
pub fn min_cost_transport<C>(
    supplies: &[f64],
    demands: &[f64],
    cost: C,
) -> Result<f64, TransportError>
where
    C: Fn(usize, usize) -> f64,
{
    let (n_src, n_snk) = (supplies.len(), demands.len());
    if n_src == 0 || n_snk == 0 {
        return Err(TransportError::Empty);
    }
    for (index, &mass) in supplies.iter().enumerate() {
        if !mass.is_finite() || mass < 0.0 {
            return Err(TransportError::BadMass { index, mass });
        }
    }
    for (index, &mass) in demands.iter().enumerate() {
        if !mass.is_finite() || mass < 0.0 {
            return Err(TransportError::BadMass { index, mass });
        }
    }
    let total_supply: f64 = supplies.iter().sum();
    let total_demand: f64 = demands.iter().sum();
    if (total_supply - total_demand).abs() > RESIDUAL_TOL {
        return Err(TransportError::MassMismatch {
            supply: total_supply,
            demand: total_demand,
            tol: RESIDUAL_TOL,
        });
    }

    // Dense cost matrix, validated once.
    let mut costs = vec![0.0f64; n_src * n_snk];
    for i in 0..n_src {
        for j in 0..n_snk {
            let c = cost(i, j);
            if !c.is_finite() || c < 0.0 {
                return Err(TransportError::BadCost { i, j, cost: c });
            }
            costs[i * n_snk + j] = c;
        }
    }

    let mut flow = vec![0.0f64; n_src * n_snk];
    let mut rem_supply = supplies.to_vec();
    let mut rem_demand = demands.to_vec();
    // Node layout: sources 0..n_src, sinks n_src..n_src+n_snk.
    let n_nodes = n_src + n_snk;
    let mut potential = vec![0.0f64; n_nodes];

    let max_rounds = 100 * n_nodes;
    for _ in 0..max_rounds {
        if rem_supply.iter().sum::<f64>() <= MASS_EPS * n_src as f64 {
            break;
        }

        // Dijkstra over reduced costs from all sources with remaining supply.
        let mut dist = vec![f64::INFINITY; n_nodes];
        let mut done = vec![false; n_nodes];
        let mut parent = vec![usize::MAX; n_nodes];
        for (i, &rs) in rem_supply.iter().enumerate() {
            if rs > MASS_EPS {
                dist[i] = 0.0;
            }
        }
        let mut target = usize::MAX;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..n_nodes {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u >= n_src && rem_demand[u - n_src] > MASS_EPS {
                target = u;
                break;
            }
            if u < n_src {
                // Forward edges source u -> every sink.
                let i = u;
                for j in 0..n_snk {
                    let v = n_src + j;
                    if done[v] {
                        continue;
                    }
                    let rc = costs[i * n_snk + j] + potential[u] - potential[v];
                    let cand = dist[u] + rc;
                    if cand < dist[v] {
                        dist[v] = cand;
                        parent[v] = u;
                    }
                }
            } else {
                // Backward edges sink u -> sources currently shipping to it.
                let j = u - n_src;
                for i in 0..n_src {
                    if done[i] || flow[i * n_snk + j] <= 0.0 {
                        continue;
                    }
                    let rc = -costs[i * n_snk + j] + potential[u] - potential[i];
                    let cand = dist[u] + rc;
                    if cand < dist[i] {
                        dist[i] = cand;
                        parent[i] = u;
                    }
                }
            }
        }
        if target == usize::MAX {
            break;
        }

        // Update potentials with distances truncated at the target distance,
        // preserving reduced-cost nonnegativity for unreached nodes.
        let horizon = dist[target];
        for v in 0..n_nodes {
            potential[v] += dist[v].min(horizon);
        }

        // Walk parents to find the path root and the bottleneck mass.
        let mut bottleneck = rem_demand[target - n_src];
        let mut node = target;
        while parent[node] != usize::MAX {
            let prev = parent[node];
            if node < n_src {
                // Reached source `node` over the backward edge from sink
                // `prev`: the augmentation reduces that edge's flow.
                bottleneck = bottleneck.min(flow[node * n_snk + (prev - n_src)]);
            }
            node = prev;
        }
        let root = node;
        bottleneck = bottleneck.min(rem_supply[root]);

        // Apply the augmentation along the parent chain.
        let mut node = target;
        while parent[node] != usize::MAX {
            let prev = parent[node];
            if node >= n_src {
                // Forward edge prev(source) -> node(sink).
                flow[prev * n_snk + (node - n_src)] += bottleneck;
            } else {
                // Backward edge prev(sink) -> node(source).
                flow[node * n_snk + (prev - n_src)] -= bottleneck;
            }
            node = prev;
        }
        rem_supply[root] -= bottleneck;
        rem_demand[target - n_src] -= bottleneck;
    }

    let residual: f64 = rem_supply.iter().sum();
    if residual > RESIDUAL_TOL {
        return Err(TransportError::Unrouted { residual });
    }
    let total: f64 = flow
        .iter()
        .zip(costs.iter())
        .map(|(&f, &c)| f * c)
        .sum();
    Ok(total)
}
