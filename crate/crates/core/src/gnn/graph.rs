//! Graph construction from downsampled cloth states.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensornet::{ArcIndex, Tensor};

/// Node features per node: centered/scaled position (3) + action channel (3).
pub const NODE_FEATURES: usize = 6;

/// A graph snapshot the network consumes: normalized node features, the
/// shared edge feature, and the grasp mask. Mesh connectivity follows from
/// the grid dimensions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextileGraph {
    pub rows: usize,
    pub cols: usize,
    /// [n × 6]: [(x − centroid)/l₀, action·grasp_mask].
    pub node_features: Tensor,
    /// Shared edge feature: the normalized elastic context for this sample
    /// (a single zero for context-free variants).
    pub edge_feature: Vec<f64>,
    pub grasp_mask: Vec<bool>,
}

impl TextileGraph {
    pub fn node_count(&self) -> usize {
        self.rows * self.cols
    }
}

/// Raw (pre-normalization) inputs for one graph snapshot.
#[derive(Debug, Clone)]
pub struct GraphData<'a> {
    pub positions: &'a [[f64; 3]],
    pub action: [f64; 3],
}

/// Build a graph from raw node positions (m): positions are centered on the
/// mesh centroid and scaled by `l0`; the action channel carries the raw
/// commanded action on grasped nodes and zeros elsewhere.
pub fn build_graph(
    data: &GraphData,
    rows: usize,
    cols: usize,
    edge_feature: &[f64],
    l0: f64,
) -> Result<TextileGraph> {
    let n = rows * cols;
    if data.positions.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} positions for a {rows}x{cols} graph",
            data.positions.len()
        )));
    }
    if !data.action.iter().all(|v| v.is_finite()) {
        return Err(Error::Domain("action must be finite".into()));
    }
    if edge_feature.is_empty() {
        return Err(Error::Domain("edge feature must be non-empty".into()));
    }
    let mut centroid = [0.0; 3];
    for p in data.positions {
        centroid[0] += p[0];
        centroid[1] += p[1];
        centroid[2] += p[2];
    }
    for c in centroid.iter_mut() {
        *c /= n as f64;
    }
    let mut feats = Vec::with_capacity(n * NODE_FEATURES);
    let mut grasp_mask = Vec::with_capacity(n);
    for (i, p) in data.positions.iter().enumerate() {
        let c = i % cols;
        let grasped = c == 0 || c == cols - 1;
        grasp_mask.push(grasped);
        feats.push((p[0] - centroid[0]) / l0);
        feats.push((p[1] - centroid[1]) / l0);
        feats.push((p[2] - centroid[2]) / l0);
        if grasped {
            feats.extend_from_slice(&data.action);
        } else {
            feats.extend_from_slice(&[0.0, 0.0, 0.0]);
        }
    }
    Ok(TextileGraph {
        rows,
        cols,
        node_features: Tensor::new(n, NODE_FEATURES, feats)?,
        edge_feature: edge_feature.to_vec(),
        grasp_mask,
    })
}

/// Directed arcs of the grid mesh: every structural (4-neighbor) edge stored
/// in both directions. `dst` receives the message, `src` is the neighbor.
pub fn grid_arcs(rows: usize, cols: usize) -> (Vec<u32>, Vec<u32>) {
    let idx = |r: usize, c: usize| (r * cols + c) as u32;
    let mut src = Vec::new();
    let mut dst = Vec::new();
    let mut push = |a: u32, b: u32| {
        dst.push(a);
        src.push(b);
        dst.push(b);
        src.push(a);
    };
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                push(idx(r, c), idx(r, c + 1));
            }
            if r + 1 < rows {
                push(idx(r, c), idx(r + 1, c));
            }
        }
    }
    (src, dst)
}

/// Arc index for a batch of same-topology graphs laid out back to back.
pub fn batch_arcs(rows: usize, cols: usize, n_graphs: usize) -> ArcIndex {
    let (src1, dst1) = grid_arcs(rows, cols);
    let n = (rows * cols) as u32;
    let m = src1.len();
    let mut src = Vec::with_capacity(m * n_graphs);
    let mut dst = Vec::with_capacity(m * n_graphs);
    let mut graph = Vec::with_capacity(m * n_graphs);
    for g in 0..n_graphs as u32 {
        let off = g * n;
        src.extend(src1.iter().map(|&s| s + off));
        dst.extend(dst1.iter().map(|&d| d + off));
        graph.extend(std::iter::repeat(g).take(m));
    }
    ArcIndex { src, dst, graph }
}

/// Node→graph segment ids for a batch.
pub fn batch_segments(nodes_per_graph: usize, n_graphs: usize) -> Rc<Vec<u32>> {
    let mut seg = Vec::with_capacity(nodes_per_graph * n_graphs);
    for g in 0..n_graphs as u32 {
        seg.extend(std::iter::repeat(g).take(nodes_per_graph));
    }
    Rc::new(seg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_positions(rows: usize, cols: usize) -> Vec<[f64; 3]> {
        let mut out = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                out.push([c as f64 * 0.01, 0.0, -(r as f64) * 0.01]);
            }
        }
        out
    }

    #[test]
    fn twelve_by_twelve_edge_count() {
        let (src, dst) = grid_arcs(12, 12);
        // 2·(11·12) undirected edges, two arcs each.
        assert_eq!(src.len(), 2 * 2 * (11 * 12));
        assert_eq!(src.len(), dst.len());
        // Arc list is symmetric: every (s, d) has its (d, s).
        let mut pairs: Vec<(u32, u32)> = src.iter().cloned().zip(dst.iter().cloned()).collect();
        let mut flipped: Vec<(u32, u32)> = dst.iter().cloned().zip(src.iter().cloned()).collect();
        pairs.sort_unstable();
        flipped.sort_unstable();
        assert_eq!(pairs, flipped);
    }

    #[test]
    fn action_channel_masked() {
        let pos = flat_positions(4, 4);
        let g = build_graph(
            &GraphData {
                positions: &pos,
                action: [0.0, 0.0, 0.0036],
            },
            4,
            4,
            &[0.5],
            0.18,
        )
        .unwrap();
        for i in 0..16 {
            let c = i % 4;
            let feat = g.node_features.row_slice(i);
            if c == 0 || c == 3 {
                assert!(g.grasp_mask[i]);
                assert_eq!(&feat[3..6], &[0.0, 0.0, 0.0036]);
            } else {
                assert!(!g.grasp_mask[i]);
                assert_eq!(&feat[3..6], &[0.0, 0.0, 0.0]);
            }
        }
    }

    #[test]
    fn positions_centered() {
        let pos = flat_positions(3, 3);
        let g = build_graph(
            &GraphData {
                positions: &pos,
                action: [0.0; 3],
            },
            3,
            3,
            &[0.0],
            0.18,
        )
        .unwrap();
        // Centroid of the scaled positions must be ~0.
        let mut sum = [0.0; 3];
        for i in 0..9 {
            let f = g.node_features.row_slice(i);
            sum[0] += f[0];
            sum[1] += f[1];
            sum[2] += f[2];
        }
        for s in sum {
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn batched_arcs_offset() {
        let arcs = batch_arcs(3, 3, 2);
        let (s1, _) = grid_arcs(3, 3);
        assert_eq!(arcs.len(), 2 * s1.len());
        assert!(arcs.src[s1.len()..].iter().all(|&s| s >= 9));
        assert_eq!(arcs.graph[s1.len() - 1], 0);
        assert_eq!(arcs.graph[s1.len()], 1);
    }
}
