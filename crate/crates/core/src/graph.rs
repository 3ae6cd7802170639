//! Sensor graphs and their Laplacian Fourier basis.

use std::collections::{HashSet, VecDeque};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::eigen::jacobi_eigen;
use crate::error::{Error, Result};

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Undirected simple graph with binary edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: DMatrix<f64>,
    vertex_ids: Vec<String>,
    connected: bool,
}

impl Graph {
    /// Builds a graph from an adjacency matrix, checking that it is
    /// symmetric, binary and free of self-loops.
    pub fn from_adjacency(adjacency: DMatrix<f64>, vertex_ids: Vec<String>) -> Result<Self> {
        let n = adjacency.nrows();
        if n == 0 || adjacency.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "adjacency must be a non-empty square matrix, got {}x{}",
                adjacency.nrows(),
                adjacency.ncols()
            )));
        }
        if vertex_ids.len() != n {
            return Err(Error::InvalidInput(format!(
                "{} vertex ids for {n} vertices",
                vertex_ids.len()
            )));
        }
        for i in 0..n {
            if adjacency[(i, i)] != 0.0 {
                return Err(Error::InvalidInput(format!("self-loop at vertex {i}")));
            }
            for j in 0..n {
                let w = adjacency[(i, j)];
                if w != 0.0 && w != 1.0 {
                    return Err(Error::InvalidInput(format!(
                        "non-binary weight at ({i}, {j})"
                    )));
                }
                if w != adjacency[(j, i)] {
                    return Err(Error::InvalidInput(format!(
                        "adjacency not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let connected = is_connected(&adjacency);
        if !connected {
            log::warn!("graph with {n} vertices is not connected");
        }
        Ok(Graph {
            adjacency,
            vertex_ids,
            connected,
        })
    }

    /// Builds a graph from an undirected edge list over vertex indices.
    /// Duplicate edges (in either orientation) and self-loops are rejected.
    pub fn from_edges(vertex_ids: Vec<String>, edges: &[(usize, usize)]) -> Result<Self> {
        let n = vertex_ids.len();
        let mut adjacency = DMatrix::zeros(n, n);
        let mut seen = HashSet::new();
        for (row, &(a, b)) in edges.iter().enumerate() {
            if a >= n || b >= n {
                return Err(Error::InvalidInput(format!(
                    "edge {row} references vertex outside 0..{n}"
                )));
            }
            if a == b {
                return Err(Error::InvalidInput(format!(
                    "edge {row} is a self-loop on vertex {a}"
                )));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::InvalidInput(format!(
                    "edge {row} ({a}, {b}) is a duplicate"
                )));
            }
            adjacency[(a, b)] = 1.0;
            adjacency[(b, a)] = 1.0;
        }
        Graph::from_adjacency(adjacency, vertex_ids)
    }

    /// Cycle graph on `n` vertices labelled `0..n`. For `n = 2` this is a
    /// single edge and for `n = 1` an isolated vertex.
    pub fn ring(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("ring needs at least one vertex".into()));
        }
        let ids = (0..n).map(|i| i.to_string()).collect();
        let edges: Vec<(usize, usize)> = match n {
            1 => vec![],
            2 => vec![(0, 1)],
            _ => (0..n).map(|i| (i, (i + 1) % n)).collect(),
        };
        Graph::from_edges(ids, &edges)
    }

    pub fn n_vertices(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn vertex_ids(&self) -> &[String] {
        &self.vertex_ids
    }

    pub fn is_connected(&self) -> bool {
        self.connected
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency.row(v).iter().filter(|&&w| w != 0.0).count()
    }

    pub fn vertex_index(&self, id: &str) -> Option<usize> {
        self.vertex_ids.iter().position(|v| v == id)
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n_vertices();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.adjacency[(i, j)] != 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

fn is_connected(adjacency: &DMatrix<f64>) -> bool {
    let n = adjacency.nrows();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        for w in 0..n {
            if adjacency[(u, w)] != 0.0 && !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// A point on the sphere in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

/// Great-circle distance in kilometres.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// k-nearest-neighbour graph under haversine distance.
///
/// Each vertex links to its `k` nearest other vertices (distance ties go
/// to the lower input index) and the directed edges are symmetrized by
/// union, so every vertex ends up with degree at least `k`.
pub fn build_knn_graph(points: &[GeoPoint], vertex_ids: Vec<String>, k: usize) -> Result<Graph> {
    let n = points.len();
    if k == 0 {
        return Err(Error::InvalidInput("k must be positive".into()));
    }
    if n < k + 1 {
        return Err(Error::InvalidInput(format!(
            "{k}-NN graph needs at least {} points, got {n}",
            k + 1
        )));
    }
    if let Some(i) = points
        .iter()
        .position(|p| !p.lat.is_finite() || !p.lon.is_finite())
    {
        return Err(Error::InvalidInput(format!(
            "point {i} has non-finite coordinates"
        )));
    }

    let mut adjacency = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (haversine_km(points[i], points[j]), j))
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in others.iter().take(k) {
            adjacency[(i, j)] = 1.0;
            adjacency[(j, i)] = 1.0;
        }
    }
    Graph::from_adjacency(adjacency, vertex_ids)
}

/// Combinatorial Laplacian `D - A`.
pub fn laplacian(graph: &Graph) -> DMatrix<f64> {
    let a = graph.adjacency();
    let n = a.nrows();
    let mut l = -a.clone();
    for i in 0..n {
        l[(i, i)] = a.row(i).sum();
    }
    l
}

/// Graph Fourier basis: Laplacian eigenpairs, ascending, possibly truncated
/// to the lowest frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    pub eigenvalues: Vec<f64>,
    /// `n x K1`; column `k` is the graph Fourier vector of frequency `k`.
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralBasis {
    pub fn n_vertices(&self) -> usize {
        self.eigenvectors.nrows()
    }

    pub fn bandwidth(&self) -> usize {
        self.eigenvectors.ncols()
    }

    /// Keeps the first `k1` columns.
    pub fn truncate(&self, k1: usize) -> Result<SpectralBasis> {
        if k1 == 0 || k1 > self.bandwidth() {
            return Err(Error::InvalidBandwidth {
                requested: k1,
                available: self.bandwidth(),
            });
        }
        Ok(SpectralBasis {
            eigenvalues: self.eigenvalues[..k1].to_vec(),
            eigenvectors: self.eigenvectors.columns(0, k1).into_owned(),
        })
    }

    /// `phi_k(v)`, both indices zero-based.
    #[inline]
    pub fn value(&self, k: usize, v: usize) -> f64 {
        self.eigenvectors[(v, k)]
    }
}

/// Eigendecomposition of a symmetric GSO truncated to its `k1` smallest
/// eigenvalues.
pub fn graph_fourier_basis(gso: &DMatrix<f64>, k1: usize) -> Result<SpectralBasis> {
    let n = gso.nrows();
    if k1 == 0 || k1 > n {
        return Err(Error::InvalidBandwidth {
            requested: k1,
            available: n,
        });
    }
    let eig = jacobi_eigen(gso)?;
    Ok(SpectralBasis {
        eigenvalues: eig.eigenvalues[..k1].to_vec(),
        eigenvectors: eig.eigenvectors.columns(0, k1).into_owned(),
    })
}
