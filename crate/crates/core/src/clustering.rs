//! Density clustering on the reduced embedding space.
//!
//! The implementation follows the classic pipeline: core distances, mutual
//! reachability, a minimum spanning tree, single-linkage dendrogram, condensed
//! tree, excess-of-mass cluster selection. Every stage is deterministic; ties
//! break on indices so permuting the input permutes the output.

use std::collections::VecDeque;
use std::path::Path;

use thiserror::Error;

use crate::matrix::DenseMatrix;

/// Distances below this are treated as zero when inverting into density
/// lambda values.
const MIN_DIST: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ClusteringError {
    #[error("{n} points is too few, need at least {needed}")]
    TooFewPoints { n: usize, needed: usize },
    #[error("points have zero dimensions")]
    ZeroDimension,
    #[error("points contain non-finite coordinates")]
    NonFinite,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed assignment file {path}: {message}")]
    Format { path: String, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ClusterParams {
    min_cluster_size: usize,
    min_samples: usize,
}

impl ClusterParams {
    pub fn new(min_cluster_size: usize, min_samples: usize) -> Result<Self, ClusteringError> {
        if min_cluster_size < 2 {
            return Err(ClusteringError::InvalidParams(format!(
                "min_cluster_size {min_cluster_size} must be at least 2"
            )));
        }
        if min_samples < 1 {
            return Err(ClusteringError::InvalidParams("min_samples must be at least 1".into()));
        }
        if min_samples > min_cluster_size {
            return Err(ClusteringError::InvalidParams(format!(
                "min_samples {min_samples} exceeds min_cluster_size {min_cluster_size}"
            )));
        }
        Ok(Self { min_cluster_size, min_samples })
    }

    pub fn min_cluster_size(&self) -> usize {
        self.min_cluster_size
    }

    pub fn min_samples(&self) -> usize {
        self.min_samples
    }
}

/// Labels are `0..k` for cluster members and `-1` for outliers; probabilities
/// are membership strengths in `[0, 1]`, exactly 0 for outliers.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterAssignment {
    pub labels: Vec<i32>,
    pub probabilities: Vec<f64>,
    pub k: usize,
}

/// Full fit result; core distances are kept for radius checks on new points.
#[derive(Clone, Debug)]
pub struct Clustering {
    pub assignment: ClusterAssignment,
    pub core_distances: Vec<f64>,
}

pub fn fit_predict(
    data: &DenseMatrix,
    params: &ClusterParams,
) -> Result<ClusterAssignment, ClusteringError> {
    fit(data, params).map(|c| c.assignment)
}

pub fn fit(data: &DenseMatrix, params: &ClusterParams) -> Result<Clustering, ClusteringError> {
    validate_input(data, params)?;
    let n = data.n_rows();
    let core_distances = core_distances(data, params.min_samples);
    let mst = prim_mst(data, &core_distances);

    if mst.iter().all(|e| e.weight <= MIN_DIST) {
        // Degenerate input: everything is mutually at distance zero, which is
        // one maximally dense cluster rather than noise.
        return Ok(Clustering {
            assignment: ClusterAssignment {
                labels: vec![0; n],
                probabilities: vec![1.0; n],
                k: 1,
            },
            core_distances,
        });
    }

    let dendrogram = single_linkage(n, mst);
    let condensed = condense(&dendrogram, params.min_cluster_size);
    let assignment = extract_clusters(&condensed, n);
    Ok(Clustering { assignment, core_distances })
}

fn validate_input(data: &DenseMatrix, params: &ClusterParams) -> Result<(), ClusteringError> {
    let n = data.n_rows();
    let needed = params.min_samples.max(2);
    if n < needed {
        return Err(ClusteringError::TooFewPoints { n, needed });
    }
    if data.n_cols() == 0 {
        return Err(ClusteringError::ZeroDimension);
    }
    if !data.is_finite() {
        return Err(ClusteringError::NonFinite);
    }
    Ok(())
}

/// Edges `(a, b, weight)` of the mutual-reachability minimum spanning tree in
/// the order Prim's algorithm adds them. [`fit`] builds its dendrogram from
/// exactly these edges; exposed so the tree can be inspected and
/// cross-checked.
pub fn mutual_reachability_mst(
    data: &DenseMatrix,
    params: &ClusterParams,
) -> Result<Vec<(usize, usize, f64)>, ClusteringError> {
    validate_input(data, params)?;
    let core = core_distances(data, params.min_samples);
    Ok(prim_mst(data, &core).into_iter().map(|e| (e.a, e.b, e.weight)).collect())
}

/// Distance to the `min_samples`-th nearest neighbor, the point itself
/// counting as the first.
fn core_distances(data: &DenseMatrix, min_samples: usize) -> Vec<f64> {
    let n = data.n_rows();
    let mut out = Vec::with_capacity(n);
    let mut scratch = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            scratch[j] = euclidean(data.row(i), data.row(j));
        }
        let k = min_samples - 1;
        let (_, kth, _) = scratch.select_nth_unstable_by(k, f64::total_cmp);
        out.push(*kth);
    }
    out
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn mutual_reachability(data: &DenseMatrix, core: &[f64], a: usize, b: usize) -> f64 {
    euclidean(data.row(a), data.row(b)).max(core[a]).max(core[b])
}

#[derive(Clone, Copy, Debug)]
struct Edge {
    a: usize,
    b: usize,
    weight: f64,
}

/// Prim's algorithm over the implicit complete mutual-reachability graph.
fn prim_mst(data: &DenseMatrix, core: &[f64]) -> Vec<Edge> {
    let n = data.n_rows();
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut attach = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0usize;
    in_tree[0] = true;
    for _ in 1..n {
        let mut next = usize::MAX;
        let mut next_dist = f64::INFINITY;
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let d = mutual_reachability(data, core, current, j);
            if d < best[j] {
                best[j] = d;
                attach[j] = current;
            }
            if best[j] < next_dist {
                next_dist = best[j];
                next = j;
            }
        }
        edges.push(Edge { a: attach[next], b: next, weight: next_dist });
        in_tree[next] = true;
        current = next;
    }
    edges
}

/// Single-linkage dendrogram. Nodes `0..n` are leaves, node `n + i` is the
/// i-th merge; the last node is the root.
struct Dendrogram {
    n: usize,
    left: Vec<usize>,
    right: Vec<usize>,
    dist: Vec<f64>,
    size: Vec<usize>,
}

impl Dendrogram {
    fn root(&self) -> usize {
        2 * self.n - 2
    }

    fn node_size(&self, node: usize) -> usize {
        if node < self.n {
            1
        } else {
            self.size[node - self.n]
        }
    }

    fn leaves(&self, node: usize) -> Vec<usize> {
        let mut stack = vec![node];
        let mut out = Vec::new();
        while let Some(v) = stack.pop() {
            if v < self.n {
                out.push(v);
            } else {
                stack.push(self.left[v - self.n]);
                stack.push(self.right[v - self.n]);
            }
        }
        out
    }
}

fn single_linkage(n: usize, mut mst: Vec<Edge>) -> Dendrogram {
    mst.sort_by(|x, y| {
        x.weight
            .total_cmp(&y.weight)
            .then_with(|| (x.a.min(x.b)).cmp(&(y.a.min(y.b))))
            .then_with(|| (x.a.max(x.b)).cmp(&(y.a.max(y.b))))
    });
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut dendro = Dendrogram {
        n,
        left: Vec::with_capacity(n - 1),
        right: Vec::with_capacity(n - 1),
        dist: Vec::with_capacity(n - 1),
        size: Vec::with_capacity(n - 1),
    };
    for (i, edge) in mst.into_iter().enumerate() {
        let ra = find(&mut parent, edge.a);
        let rb = find(&mut parent, edge.b);
        let node = n + i;
        parent[ra] = node;
        parent[rb] = node;
        let (l, r) = (ra.min(rb), ra.max(rb));
        dendro.left.push(l);
        dendro.right.push(r);
        dendro.dist.push(edge.weight);
        dendro.size.push(dendro.node_size(l) + dendro.node_size(r));
    }
    dendro
}

enum Child {
    Point(usize),
    Cluster,
}

struct CondensedRow {
    parent: usize,
    child: Child,
    lambda: f64,
    size: usize,
}

/// Condensed tree: cluster 0 is the root. A dendrogram split spawns new
/// clusters only when both sides reach `min_cluster_size`; otherwise the big
/// side keeps the parent's identity and the small side's points fall out at
/// the split's lambda.
struct CondensedTree {
    rows: Vec<CondensedRow>,
    cluster_parent: Vec<usize>,
    cluster_birth: Vec<f64>,
    n_clusters: usize,
}

fn condense(dendro: &Dendrogram, min_cluster_size: usize) -> CondensedTree {
    let mut rows = Vec::new();
    let mut cluster_parent = vec![0usize];
    let mut cluster_birth = vec![0.0f64];
    let mut next_cluster = 1usize;

    let mut queue = VecDeque::new();
    queue.push_back((dendro.root(), 0usize));
    while let Some((node, cluster)) = queue.pop_front() {
        let i = node - dendro.n;
        let lambda = 1.0 / dendro.dist[i].max(MIN_DIST);
        let (l, r) = (dendro.left[i], dendro.right[i]);
        let (sl, sr) = (dendro.node_size(l), dendro.node_size(r));
        let l_big = sl >= min_cluster_size;
        let r_big = sr >= min_cluster_size;
        if l_big && r_big {
            for (child, size) in [(l, sl), (r, sr)] {
                let id = next_cluster;
                next_cluster += 1;
                cluster_parent.push(cluster);
                cluster_birth.push(lambda);
                rows.push(CondensedRow { parent: cluster, child: Child::Cluster, lambda, size });
                queue.push_back((child, id));
            }
        } else {
            for (child, big) in [(l, l_big), (r, r_big)] {
                if big {
                    queue.push_back((child, cluster));
                } else {
                    for p in dendro.leaves(child) {
                        rows.push(CondensedRow {
                            parent: cluster,
                            child: Child::Point(p),
                            lambda,
                            size: 1,
                        });
                    }
                }
            }
        }
    }
    CondensedTree { rows, cluster_parent, cluster_birth, n_clusters: next_cluster }
}

fn extract_clusters(tree: &CondensedTree, n: usize) -> ClusterAssignment {
    let m = tree.n_clusters;
    let mut stability = vec![0.0f64; m];
    for row in &tree.rows {
        stability[row.parent] += (row.lambda - tree.cluster_birth[row.parent]) * row.size as f64;
    }
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (c, &p) in tree.cluster_parent.iter().enumerate().skip(1) {
        children[p].push(c);
    }

    // Excess of mass, leaves upward. The root is never a cluster.
    let mut eom = vec![false; m];
    let mut subtree = vec![0.0f64; m];
    for c in (1..m).rev() {
        let child_sum: f64 = children[c].iter().map(|&ch| subtree[ch]).sum();
        if stability[c] >= child_sum {
            eom[c] = true;
            subtree[c] = stability[c];
        } else {
            subtree[c] = child_sum;
        }
    }
    // Top-down: a selected ancestor absorbs any selected descendant.
    let mut selected = vec![false; m];
    for c in 1..m {
        let mut ancestor = tree.cluster_parent[c];
        let mut blocked = false;
        while ancestor != 0 {
            if selected[ancestor] {
                blocked = true;
                break;
            }
            ancestor = tree.cluster_parent[ancestor];
        }
        selected[c] = eom[c] && !blocked;
    }

    let mut point_cluster = vec![0usize; n];
    let mut point_lambda = vec![0.0f64; n];
    for row in &tree.rows {
        if let Child::Point(p) = row.child {
            point_cluster[p] = row.parent;
            point_lambda[p] = row.lambda;
        }
    }

    // Each point belongs to the first selected cluster on the walk from its
    // fall-out cluster toward the root, or to noise when there is none.
    let mut member_of = vec![None::<usize>; n];
    for p in 0..n {
        let mut c = point_cluster[p];
        loop {
            if selected[c] {
                member_of[p] = Some(c);
                break;
            }
            if c == 0 {
                break;
            }
            c = tree.cluster_parent[c];
        }
    }

    let mut order: Vec<(usize, usize)> = Vec::new();
    for (p, cluster) in member_of.iter().enumerate() {
        if let Some(c) = cluster {
            if !order.iter().any(|&(_, oc)| oc == *c) {
                order.push((p, *c));
            }
        }
    }
    order.sort();
    let relabel: Vec<usize> = order.iter().map(|&(_, c)| c).collect();
    let k = relabel.len();

    let mut lambda_max = vec![0.0f64; m];
    for p in 0..n {
        if let Some(c) = member_of[p] {
            lambda_max[c] = lambda_max[c].max(point_lambda[p]);
        }
    }

    let mut labels = vec![-1i32; n];
    let mut probabilities = vec![0.0f64; n];
    for p in 0..n {
        if let Some(c) = member_of[p] {
            labels[p] = relabel.iter().position(|&rc| rc == c).unwrap() as i32;
            probabilities[p] = if lambda_max[c] > 0.0 && lambda_max[c].is_finite() {
                (point_lambda[p] / lambda_max[c]).clamp(0.0, 1.0)
            } else {
                1.0
            };
        }
    }
    ClusterAssignment { labels, probabilities, k }
}

/// Writes the assignment as CSV `doc_id,topic,probability`.
pub fn write_assignment_csv(
    path: &Path,
    doc_ids: &[String],
    assignment: &ClusterAssignment,
) -> Result<(), ClusteringError> {
    let io_err = |source: std::io::Error| ClusteringError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = String::from("doc_id,topic,probability\n");
    for (i, id) in doc_ids.iter().enumerate() {
        out.push_str(&format!(
            "{id},{},{:.6}\n",
            assignment.labels[i], assignment.probabilities[i]
        ));
    }
    std::fs::write(path, out).map_err(io_err)
}

/// Reads an assignment file written by [`write_assignment_csv`].
pub fn read_assignment_csv(
    path: &Path,
) -> Result<(Vec<String>, ClusterAssignment), ClusteringError> {
    let text = std::fs::read_to_string(path).map_err(|source| ClusteringError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let bad = |message: String| ClusteringError::Format {
        path: path.display().to_string(),
        message,
    };
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut probabilities = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, ',');
        let id = parts.next().unwrap_or_default();
        let label: i32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(format!("line {}: bad topic", i + 1)))?;
        let prob: f64 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(format!("line {}: bad probability", i + 1)))?;
        ids.push(id.to_string());
        labels.push(label);
        probabilities.push(prob);
    }
    let k = labels.iter().copied().max().map_or(0, |top| (top + 1).max(0) as usize);
    Ok((ids, ClusterAssignment { labels, probabilities, k }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn gaussian(rng: &mut ChaCha20Rng) -> f64 {
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random::<f64>();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    fn blob(rng: &mut ChaCha20Rng, center: &[f64], sigma: f64, count: usize) -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| center.iter().map(|c| c + sigma * gaussian(rng)).collect())
            .collect()
    }

    fn two_blobs(seed: u64) -> (DenseMatrix, Vec<usize>) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut rows = blob(&mut rng, &[0.0, 0.0, 0.0], 0.05, 50);
        rows.extend(blob(&mut rng, &[10.0, 10.0, 10.0], 0.05, 50));
        let truth = (0..100).map(|i| i / 50).collect();
        (DenseMatrix::from_rows(&rows), truth)
    }

    fn params(mcs: usize, ms: usize) -> ClusterParams {
        ClusterParams::new(mcs, ms).unwrap()
    }

    #[test]
    fn params_are_validated() {
        assert!(ClusterParams::new(1, 1).is_err());
        assert!(ClusterParams::new(5, 0).is_err());
        assert!(ClusterParams::new(5, 6).is_err());
        assert!(ClusterParams::new(5, 5).is_ok());
    }

    #[test]
    fn core_distance_matches_brute_force() {
        let (data, _) = two_blobs(3);
        let core = core_distances(&data, 5);
        for i in [0usize, 17, 63, 99] {
            let mut dists: Vec<f64> =
                (0..data.n_rows()).map(|j| euclidean(data.row(i), data.row(j))).collect();
            dists.sort_by(f64::total_cmp);
            assert_eq!(core[i], dists[4]);
        }
    }

    #[test]
    fn prim_matches_kruskal_weights() {
        // The sorted weight sequence of a minimum spanning tree is unique even
        // when individual tie-broken edges are not, so exact equality holds.
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> =
            (0..120).map(|_| (0..4).map(|_| rng.random::<f64>() * 3.0).collect()).collect();
        let data = DenseMatrix::from_rows(&rows);
        let core = core_distances(&data, 5);
        let n = data.n_rows();

        let mut prim: Vec<f64> = prim_mst(&data, &core).iter().map(|e| e.weight).collect();
        prim.sort_by(f64::total_cmp);

        let mut all_edges = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                all_edges.push((mutual_reachability(&data, &core, a, b), a, b));
            }
        }
        all_edges.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut kruskal = Vec::new();
        for (w, a, b) in all_edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
                kruskal.push(w);
                if kruskal.len() == n - 1 {
                    break;
                }
            }
        }
        assert_eq!(prim.len(), kruskal.len());
        for (p, k) in prim.iter().zip(&kruskal) {
            assert_eq!(p, k);
        }
    }

    #[test]
    fn two_blobs_give_two_full_clusters() {
        let (data, truth) = two_blobs(1);
        let clustering = fit(&data, &params(10, 10)).unwrap();
        let a = &clustering.assignment;
        assert_eq!(a.k, 2);
        assert!(a.labels.iter().all(|&l| l >= 0));
        for (i, &t) in truth.iter().enumerate() {
            assert_eq!(a.labels[i], a.labels[t * 50], "point {i} strayed");
        }
        assert_ne!(a.labels[0], a.labels[50]);
        assert!(a.probabilities.iter().all(|&p| p > 0.0 && p <= 1.0));
        assert_eq!(clustering.core_distances.len(), 100);
    }

    #[test]
    fn first_cluster_is_the_one_seen_first() {
        let (data, _) = two_blobs(1);
        let a = fit_predict(&data, &params(10, 10)).unwrap();
        assert_eq!(a.labels[0], 0);
        assert_eq!(a.labels[50], 1);
    }

    #[test]
    fn uniform_noise_is_all_outliers() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> =
            (0..30).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let data = DenseMatrix::from_rows(&rows);
        let a = fit_predict(&data, &params(25, 5)).unwrap();
        assert_eq!(a.k, 0);
        assert!(a.labels.iter().all(|&l| l == -1));
        assert!(a.probabilities.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn evenly_spaced_chain_never_condenses() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, 0.0]).collect();
        let a = fit_predict(&DenseMatrix::from_rows(&rows), &params(25, 2)).unwrap();
        assert_eq!(a.k, 0);
        assert!(a.labels.iter().all(|&l| l == -1));
    }

    #[test]
    fn identical_points_are_one_certain_cluster() {
        let rows = vec![vec![1.5, -2.0]; 5];
        let a = fit_predict(&DenseMatrix::from_rows(&rows), &params(2, 2)).unwrap();
        assert_eq!(a.k, 1);
        assert!(a.labels.iter().all(|&l| l == 0));
        assert!(a.probabilities.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn stray_points_are_outliers_with_zero_probability() {
        let (data, _) = two_blobs(2);
        let mut rows: Vec<Vec<f64>> = data.rows().map(<[f64]>::to_vec).collect();
        rows.push(vec![100.0, -50.0, 3.0]);
        rows.push(vec![-80.0, 40.0, -7.0]);
        let a = fit_predict(&DenseMatrix::from_rows(&rows), &params(10, 10)).unwrap();
        assert_eq!(a.k, 2);
        assert_eq!(a.labels[100], -1);
        assert_eq!(a.labels[101], -1);
        assert_eq!(a.probabilities[100], 0.0);
        assert!(a.labels[..100].iter().all(|&l| l >= 0));
    }

    #[test]
    fn permuting_points_permutes_the_partition() {
        let (data, _) = two_blobs(6);
        let n = data.n_rows();
        let base = fit_predict(&data, &params(10, 10)).unwrap();

        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        let rows: Vec<Vec<f64>> = order.iter().map(|&i| data.row(i).to_vec()).collect();
        let permuted = fit_predict(&DenseMatrix::from_rows(&rows), &params(10, 10)).unwrap();

        // Compare partitions through first-occurrence canonical labels.
        fn canonical(labels: &[i32]) -> Vec<i32> {
            let mut map = std::collections::HashMap::new();
            let mut next = 0;
            labels
                .iter()
                .map(|&l| {
                    if l == -1 {
                        -1
                    } else {
                        *map.entry(l).or_insert_with(|| {
                            next += 1;
                            next - 1
                        })
                    }
                })
                .collect()
        }
        let unpermuted: Vec<i32> = {
            let mut back = vec![0; n];
            for (pos, &orig) in order.iter().enumerate() {
                back[orig] = permuted.labels[pos];
            }
            back
        };
        assert_eq!(canonical(&base.labels), canonical(&unpermuted));
    }

    #[test]
    fn too_few_points_is_an_error() {
        let data = DenseMatrix::from_rows(&[vec![0.0, 0.0]]);
        assert!(matches!(
            fit_predict(&data, &params(2, 2)),
            Err(ClusteringError::TooFewPoints { n: 1, needed: 2 })
        ));
        let small = DenseMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]);
        assert!(matches!(
            fit_predict(&small, &params(5, 5)),
            Err(ClusteringError::TooFewPoints { n: 3, needed: 5 })
        ));
    }

    #[test]
    fn assignment_csv_round_trips() {
        let assignment = ClusterAssignment {
            labels: vec![0, 1, -1],
            probabilities: vec![1.0, 0.25, 0.0],
            k: 2,
        };
        let ids = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clusters.csv");
        write_assignment_csv(&path, &ids, &assignment).unwrap();
        let (back_ids, back) = read_assignment_csv(&path).unwrap();
        assert_eq!(back_ids, ids);
        assert_eq!(back.labels, assignment.labels);
        assert_eq!(back.k, 2);
        assert!((back.probabilities[1] - 0.25).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn assignments_are_always_consistent(
            seed in any::<u64>(),
            n in 8usize..40,
            mcs in 2usize..8,
        ) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..3).map(|_| rng.random::<f64>() * 4.0).collect())
                .collect();
            let data = DenseMatrix::from_rows(&rows);
            let ms = mcs.min(n);
            let a = fit_predict(&data, &params(mcs, ms)).unwrap();

            prop_assert_eq!(a.labels.len(), n);
            prop_assert_eq!(a.probabilities.len(), n);
            let max_label = a.labels.iter().copied().max().unwrap_or(-1);
            prop_assert_eq!(a.k as i32, max_label + 1);
            for (&label, &prob) in a.labels.iter().zip(&a.probabilities) {
                prop_assert!(label >= -1 && label < a.k as i32);
                prop_assert!((0.0..=1.0).contains(&prob));
                if label == -1 {
                    prop_assert!(prob == 0.0);
                } else {
                    prop_assert!(prob > 0.0);
                }
            }
            for c in 0..a.k as i32 {
                let size = a.labels.iter().filter(|&&l| l == c).count();
                prop_assert!(size >= mcs, "cluster {} has {} members, mcs {}", c, size, mcs);
            }
        }
    }
}
