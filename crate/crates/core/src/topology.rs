//! Face-graph topology: the canonical 69-vertex landmark graph, k-NN edge
//! augmentation, geodesic distances, and the multi-resolution graph pyramid
//! with inter-level aggregation masks.
//!
//! Vertices 0–67 follow the standard 68-point facial landmark convention
//! (jaw 0–16, brows 17–26, nose 27–35, eyes 36–47, lips 48–67); vertex 68 is
//! the centroid of the other 68 and acts as the root of the pyramid. The
//! pyramid keeps five nested vertex subsets of sizes 1, 7, 16, 43, 69 chosen
//! by farthest-point sampling from the root, and for every adjacent level
//! pair stores a binary tensor `A[b][i][j]` marking fine vertices `i` whose
//! hop distance (in the fine graph) to coarse vertex `j`'s anchor equals
//! `b`. Those masks gate the decoder's trainable spatial upsampling.

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;

use ndarray::{Array2, Array3, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Version stamp written into topology files; loaders reject anything else.
pub const TOPOLOGY_VERSION: &str = "face69/fps-knn-v1";

/// Index of the centroid root vertex in the canonical template.
pub const ROOT_VERTEX: usize = 68;

/// The five stable alignment anchors: outer eye corners, nose tip, mouth
/// corners. Used both for frontalization and as the root's base edges.
pub const STABLE_ANCHORS: [usize; 5] = [36, 45, 33, 48, 54];

/// Vertex counts of the pyramid levels, coarse to fine.
pub const LEVEL_SIZES: [usize; 5] = [1, 7, 16, 43, 69];

/// Number of geodesic rings (values of `b`) kept in inter-level masks.
pub const DEFAULT_MAX_GEODESIC: usize = 2;

/// Default k for the face graph's nearest-neighbor augmentation.
pub const DEFAULT_KNN: usize = 3;

/// An undirected graph over 2D-embedded vertices.
///
/// Edges are stored as normalized `(lo, hi)` pairs; `positions` carries one
/// row per vertex in normalized coordinates and drives nearest-neighbor
/// queries.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceGraph {
    pub num_vertices: usize,
    pub edges: BTreeSet<(usize, usize)>,
    pub positions: Array2<f64>,
}

impl FaceGraph {
    pub fn contains_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == i {
                    Some(b)
                } else if b == i {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Dense symmetric 0/1 adjacency without self-loops.
    pub fn adjacency_matrix(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.num_vertices, self.num_vertices));
        for &(i, j) in &self.edges {
            a[[i, j]] = 1.0;
            a[[j, i]] = 1.0;
        }
        a
    }

    fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_vertices];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        for l in &mut adj {
            l.sort_unstable();
        }
        adj
    }
}

/// Symmetric degree-normalized adjacency with self-loops:
/// `D^{-1/2} (A + I) D^{-1/2}` where `D` is the degree matrix of `A + I`.
pub fn normalize_adjacency(a: &Array2<f64>) -> Array2<f64> {
    let n = a.dim().0;
    let mut with_loops = a.clone();
    for i in 0..n {
        with_loops[[i, i]] += 1.0;
    }
    let deg: Vec<f64> = (0..n)
        .map(|i| with_loops.row(i).sum().max(f64::MIN_POSITIVE).sqrt().recip())
        .collect();
    let mut out = with_loops;
    for i in 0..n {
        for j in 0..n {
            out[[i, j]] *= deg[i] * deg[j];
        }
    }
    out
}

/// Canonical 69-vertex frontal face template in normalized `[0,1]²`
/// coordinates, y growing downward (image convention).
///
/// The layout is parametric — elliptical jaw/lip arcs, arched brows,
/// hexagonal eyes — so it is deterministic, face-shaped (animations stay
/// readable), and carries sensible Euclidean structure for nearest-neighbor
/// queries. Vertex 68 is the centroid of the first 68.
pub fn canonical_template() -> Array2<f64> {
    let mut p = Array2::zeros((69, 2));
    let pi = std::f64::consts::PI;
    // Jaw 0–16: half ellipse from left ear over the chin to the right ear.
    for i in 0..=16 {
        let alpha = pi * (1.0 - i as f64 / 16.0);
        p[[i, 0]] = 0.5 + 0.32 * alpha.cos();
        p[[i, 1]] = 0.45 + 0.40 * alpha.sin();
    }
    // Brows 17–21 (left) and 22–26 (right): gentle arches.
    for i in 17..=21 {
        let t = (i - 17) as f64 / 4.0;
        p[[i, 0]] = 0.22 + 0.20 * t;
        p[[i, 1]] = 0.30 - 0.035 * (pi * t).sin();
    }
    for i in 22..=26 {
        let t = (i - 22) as f64 / 4.0;
        p[[i, 0]] = 0.58 + 0.20 * t;
        p[[i, 1]] = 0.30 - 0.035 * (pi * t).sin();
    }
    // Nose bridge 27–30 and base 31–35 (33 = tip center).
    for i in 27..=30 {
        p[[i, 0]] = 0.5;
        p[[i, 1]] = 0.36 + 0.17 * (i - 27) as f64 / 3.0;
    }
    for i in 31..=35 {
        let t = (i - 31) as f64 / 4.0;
        p[[i, 0]] = 0.44 + 0.12 * t;
        p[[i, 1]] = 0.58 + 0.025 * (pi * t).sin();
    }
    // Eyes: hexagons traversed leftmost corner → upper lid → rightmost
    // corner → lower lid. That puts the outer corners at 36 (left eye's
    // leftmost point) and 45 (right eye's rightmost point), matching the
    // detector convention.
    let eye = |cx: f64| -> [(f64, f64); 6] {
        [
            (cx - 0.055, 0.40),
            (cx - 0.025, 0.378),
            (cx + 0.025, 0.378),
            (cx + 0.055, 0.40),
            (cx + 0.025, 0.422),
            (cx - 0.025, 0.422),
        ]
    };
    for (off, (x, y)) in eye(0.33).iter().enumerate() {
        p[[36 + off, 0]] = *x;
        p[[36 + off, 1]] = *y;
    }
    for (off, (x, y)) in eye(0.67).iter().enumerate() {
        p[[42 + off, 0]] = *x;
        p[[42 + off, 1]] = *y;
    }
    // Outer lips 48–59 on an ellipse (48/54 the corners), inner lips 60–67.
    let lip = |i: usize, n: usize, rx: f64, ry: f64| -> (f64, f64) {
        let theta = pi - 2.0 * pi * i as f64 / n as f64;
        (0.5 + rx * theta.cos(), 0.70 - ry * theta.sin())
    };
    for i in 0..12 {
        let (x, y) = lip(i, 12, 0.105, 0.05);
        p[[48 + i, 0]] = x;
        p[[48 + i, 1]] = y;
    }
    for i in 0..8 {
        let (x, y) = lip(i, 8, 0.065, 0.035);
        p[[60 + i, 0]] = x;
        p[[60 + i, 1]] = y;
    }
    // Root: centroid of the detector landmarks.
    let (mut sx, mut sy) = (0.0, 0.0);
    for i in 0..68 {
        sx += p[[i, 0]];
        sy += p[[i, 1]];
    }
    p[[68, 0]] = sx / 68.0;
    p[[68, 1]] = sy / 68.0;
    p
}

/// The canonical base edge set: the standard landmark contour chains (eye
/// and lip contours closed into rings, jaw/brows/nose left open) plus edges
/// from the root to the five stable anchors.
pub fn canonical_base_edges() -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    let mut chain = |lo: usize, hi: usize, closed: bool| {
        for i in lo..hi {
            edges.push((i, i + 1));
        }
        if closed {
            edges.push((lo, hi));
        }
    };
    chain(0, 16, false); // jaw
    chain(17, 21, false); // left brow
    chain(22, 26, false); // right brow
    chain(27, 35, false); // nose bridge + base
    chain(36, 41, true); // left eye ring
    chain(42, 47, true); // right eye ring
    chain(48, 59, true); // outer lip ring
    chain(60, 67, true); // inner lip ring
    for a in STABLE_ANCHORS {
        edges.push((a.min(ROOT_VERTEX), a.max(ROOT_VERTEX)));
    }
    edges
}

/// Build an undirected graph from base edges plus k-nearest-neighbor
/// augmentation: each vertex is linked to its `k` nearest distinct vertices
/// by Euclidean distance (ties broken toward the lower index), and the
/// union is symmetrized.
pub fn build_knn_graph(
    positions: ArrayView2<'_, f64>,
    k: usize,
    base_edges: &[(usize, usize)],
) -> Result<FaceGraph> {
    let p = positions.dim().0;
    if positions.dim().1 != 2 {
        return Err(Error::ShapeMismatch(format!(
            "positions must be P×2, got P×{}",
            positions.dim().1
        )));
    }
    if !positions.iter().all(|e| e.is_finite()) {
        return Err(Error::InvalidParameter("positions contain non-finite values".into()));
    }
    if k >= p {
        return Err(Error::InvalidParameter(format!(
            "k-NN needs k < vertex count, got k={k} with {p} vertices"
        )));
    }
    let mut edges = BTreeSet::new();
    for &(i, j) in base_edges {
        if i >= p || j >= p {
            return Err(Error::IndexOutOfRange(format!(
                "base edge ({i}, {j}) outside vertex range 0..{p}"
            )));
        }
        if i == j {
            return Err(Error::InvalidParameter(format!("base edge ({i}, {j}) is a self-loop")));
        }
        edges.insert((i.min(j), i.max(j)));
    }
    for i in 0..p {
        let mut by_dist: Vec<(f64, usize)> = (0..p)
            .filter(|&j| j != i)
            .map(|j| {
                let dx = positions[[i, 0]] - positions[[j, 0]];
                let dy = positions[[i, 1]] - positions[[j, 1]];
                (dx * dx + dy * dy, j)
            })
            .collect();
        by_dist.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        for &(_, j) in by_dist.iter().take(k) {
            edges.insert((i.min(j), i.max(j)));
        }
    }
    Ok(FaceGraph { num_vertices: p, edges, positions: positions.to_owned() })
}

/// The canonical face graph: template landmarks, contour base edges, k-NN
/// augmentation (`k = 3` in the reference configuration; `k = 0` keeps the
/// base edges only).
pub fn face_graph(k: usize) -> Result<FaceGraph> {
    build_knn_graph(canonical_template().view(), k, &canonical_base_edges())
}

/// Breadth-first hop distances from `source`; `None` marks unreachable
/// vertices.
pub fn geodesic_distances(graph: &FaceGraph, source: usize) -> Result<Vec<Option<u32>>> {
    if source >= graph.num_vertices {
        return Err(Error::IndexOutOfRange(format!(
            "source {source} outside vertex range 0..{}",
            graph.num_vertices
        )));
    }
    let adj = graph.adjacency_lists();
    let mut dist = vec![None; graph.num_vertices];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].unwrap();
        for &w in &adj[u] {
            if dist[w].is_none() {
                dist[w] = Some(du + 1);
                queue.push_back(w);
            }
        }
    }
    Ok(dist)
}

/// The multi-resolution pyramid: nested vertex subsets, per-level graphs,
/// and per-pair binary aggregation masks.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphPyramid {
    /// One graph per level, coarse to fine; local vertex indices.
    pub levels: Vec<FaceGraph>,
    /// Template indices of each level's vertices, ascending.
    pub level_vertices: Vec<Vec<usize>>,
    /// Per adjacent pair: coarse local index → fine local index of the same
    /// template vertex (the subset embedding anchor).
    pub correspondences: Vec<Vec<usize>>,
    /// Per adjacent pair: `(B, |V_fine|, |V_coarse|)` binary masks following
    /// the geodesic rule.
    pub inter_level_adjacency: Vec<Array3<f64>>,
    /// Deterministic repair edges added per pair (fine-graph local indices)
    /// to guarantee that no fine vertex is outside every mask; empty in the
    /// reference configuration.
    pub repair_edges: Vec<Vec<(usize, usize)>>,
    pub topology_version: String,
    pub knn_k: usize,
    pub max_geodesic: usize,
}

/// Farthest-point sampling order over template rows, seeded at `seed_vertex`.
/// Ties break toward the lower index, making the order fully deterministic.
fn farthest_point_order(template: ArrayView2<'_, f64>, seed_vertex: usize) -> Vec<usize> {
    let n = template.dim().0;
    let d2 = |a: usize, b: usize| -> f64 {
        let dx = template[[a, 0]] - template[[b, 0]];
        let dy = template[[a, 1]] - template[[b, 1]];
        dx * dx + dy * dy
    };
    let mut order = vec![seed_vertex];
    let mut selected = vec![false; n];
    selected[seed_vertex] = true;
    let mut min_d2: Vec<f64> = (0..n).map(|v| d2(v, seed_vertex)).collect();
    while order.len() < n {
        let mut best = None;
        for v in 0..n {
            if selected[v] {
                continue;
            }
            match best {
                None => best = Some(v),
                Some(b) if min_d2[v] > min_d2[b] => best = Some(v),
                _ => {}
            }
        }
        let chosen = best.expect("unselected vertex must exist");
        selected[chosen] = true;
        for v in 0..n {
            min_d2[v] = min_d2[v].min(d2(v, chosen));
        }
        order.push(chosen);
    }
    order
}

/// Build the graph pyramid over `template`.
///
/// * Level vertex sets are prefixes of the farthest-point order (seeded at
///   the root), so they nest; the finest level is the full template.
/// * The finest level's edges are `base_edges ∪ k-NN(k)`; coarse levels link
///   each vertex to its `min(3, size−1)` nearest siblings.
/// * For every adjacent pair, `A[b][i][j] = 1` iff the hop distance in the
///   fine graph between fine vertex `i` and coarse vertex `j`'s anchor is
///   exactly `b`, for `b < max_geodesic`.
/// * If some fine vertex ends up outside every mask (possible only with
///   sparse edge rules), a deterministic repair edge to the Euclidean
///   nearest anchor is added to the fine graph and the masks are rebuilt;
///   repairs are recorded on the pyramid.
pub fn build_pyramid(
    template: ArrayView2<'_, f64>,
    level_sizes: &[usize],
    k: usize,
    max_geodesic: usize,
) -> Result<GraphPyramid> {
    if level_sizes.is_empty() || level_sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(format!(
            "level sizes must be strictly increasing, got {level_sizes:?}"
        )));
    }
    if *level_sizes.last().unwrap() != template.dim().0 {
        return Err(Error::InvalidParameter(format!(
            "finest level must match the template ({} vertices), got {}",
            template.dim().0,
            level_sizes.last().unwrap()
        )));
    }
    if max_geodesic == 0 {
        return Err(Error::InvalidParameter("max_geodesic must be at least 1".into()));
    }
    let root = if template.dim().0 == 69 { ROOT_VERTEX } else { 0 };
    let order = farthest_point_order(template, root);

    let mut level_vertices: Vec<Vec<usize>> = Vec::new();
    for &size in level_sizes {
        let mut subset: Vec<usize> = order[..size].to_vec();
        subset.sort_unstable();
        level_vertices.push(subset);
    }

    let finest = level_sizes.len() - 1;
    let mut levels: Vec<FaceGraph> = Vec::new();
    for (li, verts) in level_vertices.iter().enumerate() {
        let mut pos = Array2::zeros((verts.len(), 2));
        for (local, &tv) in verts.iter().enumerate() {
            pos[[local, 0]] = template[[tv, 0]];
            pos[[local, 1]] = template[[tv, 1]];
        }
        let graph = if li == finest && verts.len() == 69 {
            build_knn_graph(pos.view(), k, &canonical_base_edges())?
        } else if li == finest {
            // Non-canonical template sizes (tests): k-NN only.
            build_knn_graph(pos.view(), k.min(verts.len() - 1), &[])?
        } else {
            let sibling_k = DEFAULT_KNN.min(verts.len().saturating_sub(1));
            build_knn_graph(pos.view(), sibling_k, &[])?
        };
        levels.push(graph);
    }

    let mut correspondences = Vec::new();
    let mut inter = Vec::new();
    let mut repairs = Vec::new();
    for pair in 0..level_sizes.len() - 1 {
        let coarse = &level_vertices[pair];
        let fine = &level_vertices[pair + 1];
        let anchors: Vec<usize> = coarse
            .iter()
            .map(|tv| fine.binary_search(tv).expect("levels nest by construction"))
            .collect();

        let mut pair_repairs = Vec::new();
        loop {
            let masks = geodesic_masks(&levels[pair + 1], &anchors, max_geodesic)?;
            if max_geodesic == 1 {
                // With a single ring only the anchors themselves appear in
                // the masks; coverage of other vertices is impossible by
                // construction, so take the anchor-indicator masks as-is.
                inter.push(masks);
                break;
            }
            let orphan = (0..fine.len()).find(|&i| {
                masks.index_axis(ndarray::Axis(1), i).iter().all(|&e| e == 0.0)
            });
            match orphan {
                None => {
                    inter.push(masks);
                    break;
                }
                Some(i) => {
                    // Deterministic repair: connect the orphan to its
                    // Euclidean-nearest anchor and rebuild.
                    let pos = &levels[pair + 1].positions;
                    let mut best = (f64::INFINITY, usize::MAX);
                    for &a in &anchors {
                        let dx = pos[[i, 0]] - pos[[a, 0]];
                        let dy = pos[[i, 1]] - pos[[a, 1]];
                        let d = dx * dx + dy * dy;
                        if d < best.0 || (d == best.0 && a < best.1) {
                            best = (d, a);
                        }
                    }
                    let (a, b) = (i.min(best.1), i.max(best.1));
                    if !levels[pair + 1].edges.insert((a, b)) {
                        // The direct edge to the nearest anchor already
                        // exists, so no repair can reach this vertex within
                        // the ring budget (e.g. max_geodesic too small).
                        return Err(Error::InvalidParameter(format!(
                            "vertex {i} of level {} cannot reach any anchor \
                             within {} hops even with a direct repair edge",
                            pair + 1,
                            max_geodesic - 1
                        )));
                    }
                    pair_repairs.push((a, b));
                }
            }
        }
        repairs.push(pair_repairs);
        correspondences.push(anchors);
    }

    Ok(GraphPyramid {
        levels,
        level_vertices,
        correspondences,
        inter_level_adjacency: inter,
        repair_edges: repairs,
        topology_version: TOPOLOGY_VERSION.to_string(),
        knn_k: k,
        max_geodesic,
    })
}

/// `A[b][i][j] = 1` iff BFS distance from fine vertex `i` to `anchors[j]`
/// equals `b`, for `b < max_geodesic`.
fn geodesic_masks(
    fine: &FaceGraph,
    anchors: &[usize],
    max_geodesic: usize,
) -> Result<Array3<f64>> {
    let vf = fine.num_vertices;
    let mut a = Array3::zeros((max_geodesic, vf, anchors.len()));
    for (j, &anchor) in anchors.iter().enumerate() {
        let dist = geodesic_distances(fine, anchor)?;
        for (i, d) in dist.iter().enumerate() {
            if let Some(d) = d {
                if (*d as usize) < max_geodesic {
                    a[[*d as usize, i, j]] = 1.0;
                }
            }
        }
    }
    Ok(a)
}

/// Build the default pyramid over the canonical template.
pub fn default_pyramid(k: usize) -> Result<GraphPyramid> {
    build_pyramid(canonical_template().view(), &LEVEL_SIZES, k, DEFAULT_MAX_GEODESIC)
}

// ---------------------------------------------------------------------------
// Topology file

/// Serialized form of [`GraphPyramid`]: versioned JSON with dense 0/1 masks.
#[derive(Debug, Serialize, Deserialize)]
struct TopologyFile {
    topology_version: String,
    knn_k: usize,
    max_geodesic: usize,
    template: Vec<[f64; 2]>,
    level_vertices: Vec<Vec<usize>>,
    level_edges: Vec<Vec<(usize, usize)>>,
    repair_edges: Vec<Vec<(usize, usize)>>,
    correspondences: Vec<Vec<usize>>,
    inter_level_adjacency: Vec<Vec<Vec<Vec<u8>>>>,
}

impl GraphPyramid {
    pub fn save(&self, path: &Path) -> Result<()> {
        let finest = self.levels.last().expect("pyramid has levels");
        let file = TopologyFile {
            topology_version: self.topology_version.clone(),
            knn_k: self.knn_k,
            max_geodesic: self.max_geodesic,
            template: finest
                .positions
                .outer_iter()
                .map(|row| [row[0], row[1]])
                .collect(),
            level_vertices: self.level_vertices.clone(),
            level_edges: self
                .levels
                .iter()
                .map(|g| g.edges.iter().copied().collect())
                .collect(),
            repair_edges: self.repair_edges.clone(),
            correspondences: self.correspondences.clone(),
            inter_level_adjacency: self
                .inter_level_adjacency
                .iter()
                .map(|a| {
                    let (nb, vf, vc) = a.dim();
                    (0..nb)
                        .map(|b| {
                            (0..vf)
                                .map(|i| (0..vc).map(|j| a[[b, i, j]] as u8).collect())
                                .collect()
                        })
                        .collect()
                })
                .collect(),
        };
        let json = serde_json::to_string(&file)?;
        crate::checkpoint::write_atomic(path, json.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<GraphPyramid> {
        let data = std::fs::read_to_string(path).map_err(|e| {
            Error::MissingArtifact(format!("topology file {}: {e}", path.display()))
        })?;
        let file: TopologyFile = serde_json::from_str(&data)
            .map_err(|e| Error::CorruptData(format!("topology file: {e}")))?;
        if file.topology_version != TOPOLOGY_VERSION {
            return Err(Error::VersionMismatch(format!(
                "topology file carries version '{}', this build requires '{}'",
                file.topology_version, TOPOLOGY_VERSION
            )));
        }
        let template_rows = file.template.len();
        let mut levels = Vec::new();
        for (li, verts) in file.level_vertices.iter().enumerate() {
            let mut pos = Array2::zeros((verts.len(), 2));
            for (local, &tv) in verts.iter().enumerate() {
                if tv >= template_rows {
                    return Err(Error::CorruptData(format!(
                        "level {li} references template vertex {tv} of {template_rows}"
                    )));
                }
                pos[[local, 0]] = file.template[tv][0];
                pos[[local, 1]] = file.template[tv][1];
            }
            let mut edges = BTreeSet::new();
            for &(a, b) in &file.level_edges[li] {
                if a >= verts.len() || b >= verts.len() || a == b {
                    return Err(Error::CorruptData(format!(
                        "level {li} edge ({a}, {b}) invalid for {} vertices",
                        verts.len()
                    )));
                }
                edges.insert((a.min(b), a.max(b)));
            }
            levels.push(FaceGraph { num_vertices: verts.len(), edges, positions: pos });
        }
        let mut inter = Vec::new();
        for (pi, masks) in file.inter_level_adjacency.iter().enumerate() {
            let nb = masks.len();
            let vf = masks.first().map(|m| m.len()).unwrap_or(0);
            let vc = masks.first().and_then(|m| m.first()).map(|r| r.len()).unwrap_or(0);
            let mut a = Array3::zeros((nb, vf, vc));
            for (b, plane) in masks.iter().enumerate() {
                if plane.len() != vf {
                    return Err(Error::CorruptData(format!("pair {pi}: ragged mask rows")));
                }
                for (i, row) in plane.iter().enumerate() {
                    if row.len() != vc {
                        return Err(Error::CorruptData(format!("pair {pi}: ragged mask cols")));
                    }
                    for (j, &e) in row.iter().enumerate() {
                        a[[b, i, j]] = e as f64;
                    }
                }
            }
            inter.push(a);
        }
        Ok(GraphPyramid {
            levels,
            level_vertices: file.level_vertices,
            correspondences: file.correspondences,
            inter_level_adjacency: inter,
            repair_edges: file.repair_edges,
            topology_version: file.topology_version,
            knn_k: file.knn_k,
            max_geodesic: file.max_geodesic,
        })
    }
}
