//! Synchronous flooding over an explicit edge list. Slow and memory-hungry,
//! kept as the audit path for the layered schedule.

use super::{min_convolve, non_finite_message, normalize_min, LbpConfig, LbpOutcome, Progress};
use crate::energy::MrfProblem;
use crate::error::Result;
use crate::model::argmin;

/// Undirected factor between `u` and `v`; `table` is indexed `[y_u][y_v]`.
struct Edge {
    u: usize,
    v: usize,
    table: Table,
}

#[derive(Clone, Copy)]
enum Table {
    Spatial,
    Temporal(usize),
}

/// A neighbor as seen from one node.
#[derive(Clone, Copy)]
struct Port {
    neighbor: usize,
    edge: usize,
    /// Message index for neighbor -> self.
    incoming: usize,
    /// Message index for self -> neighbor.
    outgoing: usize,
    /// True when self is the edge's `v` endpoint.
    is_v: bool,
}

struct Graph {
    edges: Vec<Edge>,
    ports: Vec<Vec<Port>>,
}

impl Graph {
    fn build(prob: &MrfProblem) -> Self {
        let s = prob.shape();
        let mut edges = Vec::new();
        for t in 0..s.t {
            for r in 0..s.h {
                for c in 0..s.w {
                    let i = s.index(t, r, c);
                    if c + 1 < s.w {
                        edges.push(Edge { u: i, v: i + 1, table: Table::Spatial });
                    }
                    if r + 1 < s.h {
                        edges.push(Edge { u: i, v: i + s.w, table: Table::Spatial });
                    }
                    if t + 1 < s.t {
                        edges.push(Edge {
                            u: i,
                            v: s.index(t + 1, r, c),
                            table: Table::Temporal(t),
                        });
                    }
                }
            }
        }
        let mut ports = vec![Vec::new(); s.len()];
        for (e, edge) in edges.iter().enumerate() {
            // message 2e: u -> v, 2e + 1: v -> u
            ports[edge.u].push(Port {
                neighbor: edge.v,
                edge: e,
                incoming: 2 * e + 1,
                outgoing: 2 * e,
                is_v: false,
            });
            ports[edge.v].push(Port {
                neighbor: edge.u,
                edge: e,
                incoming: 2 * e,
                outgoing: 2 * e + 1,
                is_v: true,
            });
        }
        Self { edges, ports }
    }
}

/// Min-sum LBP with synchronous (flooding) updates of all messages.
pub fn lbp_reference(prob: &MrfProblem, cfg: &LbpConfig) -> Result<LbpOutcome> {
    cfg.validate()?;
    let shape = prob.shape();
    let k = prob.num_classes();
    let graph = Graph::build(prob);
    let unary = prob.unary();
    let mut msgs = vec![0.0; 2 * graph.edges.len() * k];
    let mut next = msgs.clone();
    let mut progress = Progress::new(prob, cfg);
    let mut h = vec![0.0; k];
    let mut out = vec![0.0; k];

    for iter in 1..=cfg.max_iters {
        for (node, ports) in graph.ports.iter().enumerate() {
            let theta = unary.at(node);
            for p in ports {
                h.copy_from_slice(theta);
                for q in ports.iter().filter(|q| q.neighbor != p.neighbor) {
                    let m = &msgs[q.incoming * k..(q.incoming + 1) * k];
                    h.iter_mut().zip(m).for_each(|(a, b)| *a += b);
                }
                let table = match graph.edges[p.edge].table {
                    Table::Spatial => prob.spatial_cost(),
                    Table::Temporal(g) => prob.temporal_cost(g),
                };
                // The table is [y_u][y_v]; sending from v means x indexes columns.
                min_convolve(&h, table, p.is_v, &mut out);
                if cfg.normalize {
                    normalize_min(&mut out);
                }
                let dst = &mut next[p.outgoing * k..(p.outgoing + 1) * k];
                let old = &msgs[p.outgoing * k..(p.outgoing + 1) * k];
                for ((d, &n), &o) in dst.iter_mut().zip(&out).zip(old) {
                    *d = (1.0 - cfg.damping) * n + cfg.damping * o;
                }
                if dst.iter().any(|v| !v.is_finite()) {
                    return Err(non_finite_message(shape, node));
                }
            }
        }
        std::mem::swap(&mut msgs, &mut next);

        let labels: Vec<u16> = graph
            .ports
            .iter()
            .enumerate()
            .map(|(node, ports)| {
                h.copy_from_slice(unary.at(node));
                for q in ports {
                    let m = &msgs[q.incoming * k..(q.incoming + 1) * k];
                    h.iter_mut().zip(m).for_each(|(a, b)| *a += b);
                }
                argmin(&h) as u16
            })
            .collect();
        if progress.record(iter, labels) {
            return progress.finish(true);
        }
    }
    progress.finish(false)
}
