//! Exact minimum-cost transportation by successive shortest paths.
//!
//! Sources carry `supply`, sinks carry `demand`; every source–sink arc has
//! unbounded capacity.  Dijkstra runs on reduced costs with node potentials
//! (Johnson reweighting), so each augmentation is a true shortest path in
//! the residual network and the final potentials are dual feasible.

/// Optimal plan together with the dual potentials `u_i + v_j ≤ c_ij`.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub cost: f64,
    /// `coupling[i][j]` is the mass moved from source `i` to sink `j`.
    pub coupling: Vec<Vec<f64>>,
    pub source_potential: Vec<f64>,
    pub sink_potential: Vec<f64>,
}

const MASS_EPS: f64 = 1e-15;

/// Solves `min Σ c_ij f_ij` subject to the supply and demand marginals.
///
/// Total supply and demand are expected to agree; any sub-`1e-15` imbalance
/// is left unmatched.
pub fn solve_transport(supply: &[f64], demand: &[f64], cost: &[Vec<f64>]) -> TransportPlan {
    let ns = supply.len();
    let nt = demand.len();
    let nodes = ns + nt;
    let mut rem_s = supply.to_vec();
    let mut rem_d = demand.to_vec();
    let mut flow = vec![vec![0.0; nt]; ns];
    let mut pot = vec![0.0; nodes];

    let mut dist = vec![f64::INFINITY; nodes];
    let mut prev = vec![usize::MAX; nodes];
    let mut done = vec![false; nodes];

    let max_rounds = 8 * nodes * nodes + 64;
    for _ in 0..max_rounds {
        if !rem_s.iter().any(|&s| s > MASS_EPS) || !rem_d.iter().any(|&d| d > MASS_EPS) {
            break;
        }
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        prev.iter_mut().for_each(|p| *p = usize::MAX);
        done.iter_mut().for_each(|d| *d = false);
        for i in 0..ns {
            if rem_s[i] > MASS_EPS {
                dist[i] = 0.0;
            }
        }

        // Dense Dijkstra; stops at the first sink that still has demand.
        let mut target = None;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..nodes {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u >= ns {
                let j = u - ns;
                if rem_d[j] > MASS_EPS {
                    target = Some(u);
                    break;
                }
                for i in 0..ns {
                    if flow[i][j] > MASS_EPS && !done[i] {
                        let rc = (-cost[i][j] + pot[u] - pot[i]).max(0.0);
                        let nd = dist[u] + rc;
                        if nd < dist[i] {
                            dist[i] = nd;
                            prev[i] = u;
                        }
                    }
                }
            } else {
                let i = u;
                for j in 0..nt {
                    let v = ns + j;
                    if !done[v] {
                        let rc = (cost[i][j] + pot[i] - pot[v]).max(0.0);
                        let nd = dist[u] + rc;
                        if nd < dist[v] {
                            dist[v] = nd;
                            prev[v] = u;
                        }
                    }
                }
            }
        }
        let Some(t) = target else { break };
        let reach = dist[t];
        for v in 0..nodes {
            pot[v] += dist[v].min(reach);
        }

        // Bottleneck along the path.
        let mut bottleneck = rem_d[t - ns];
        let mut v = t;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u >= ns {
                // reverse arc sink(u) -> source(v)
                bottleneck = bottleneck.min(flow[v][u - ns]);
            }
            v = u;
        }
        bottleneck = bottleneck.min(rem_s[v]);
        let source = v;

        let mut v = t;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u >= ns {
                let f = &mut flow[v][u - ns];
                *f -= bottleneck;
                if *f < MASS_EPS {
                    *f = 0.0;
                }
            } else {
                flow[u][v - ns] += bottleneck;
            }
            v = u;
        }
        rem_s[source] -= bottleneck;
        rem_d[t - ns] -= bottleneck;
    }

    let cost_value = (0..ns)
        .flat_map(|i| (0..nt).map(move |j| (i, j)))
        .map(|(i, j)| flow[i][j] * cost[i][j])
        .sum();
    TransportPlan {
        cost: cost_value,
        coupling: flow,
        source_potential: pot[..ns].iter().map(|p| -p).collect(),
        sink_potential: pot[ns..].to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_2x2(p: [f64; 2], q: [f64; 2], c: [[f64; 2]; 2]) -> f64 {
        // Couplings of two 2-point measures form a segment parametrized by f00.
        let lo = (p[0] - q[1]).max(0.0);
        let hi = p[0].min(q[0]);
        [lo, hi]
            .iter()
            .map(|&f00| {
                let f01 = p[0] - f00;
                let f10 = q[0] - f00;
                let f11 = p[1] - f10;
                f00 * c[0][0] + f01 * c[0][1] + f10 * c[1][0] + f11 * c[1][1]
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn matches_segment_enumeration() {
        let c = [[0.0, 1.0], [1.0, 0.0]];
        let plan = solve_transport(&[1.0, 0.0], &[0.5, 0.5], &[c[0].to_vec(), c[1].to_vec()]);
        assert!((plan.cost - brute_force_2x2([1.0, 0.0], [0.5, 0.5], c)).abs() < 1e-15);
        assert!((plan.cost - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dual_is_feasible_and_tight() {
        let c = vec![
            vec![4.0, 1.0, 3.0],
            vec![2.0, 0.0, 5.0],
            vec![3.0, 2.0, 2.0],
        ];
        let p = [0.3, 0.5, 0.2];
        let q = [0.4, 0.4, 0.2];
        let plan = solve_transport(&p, &q, &c);
        let mut dual = 0.0;
        for i in 0..3 {
            dual += p[i] * plan.source_potential[i] + q[i] * plan.sink_potential[i];
            for j in 0..3 {
                assert!(plan.source_potential[i] + plan.sink_potential[j] <= c[i][j] + 1e-12);
            }
        }
        assert!((dual - plan.cost).abs() < 1e-12);
        for i in 0..3 {
            let row: f64 = plan.coupling[i].iter().sum();
            assert!((row - p[i]).abs() < 1e-14);
        }
    }
}
