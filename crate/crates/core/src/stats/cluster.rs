//! Principal-component projection and k-means clustering of node embeddings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::NodeEmbeddingIndex;
use crate::graph::NodeId;
use crate::scalar::Scalar;

use super::StatsError;

/// Labels reported per cluster, nearest to its centroid first.
pub const NEAREST_PER_CLUSTER: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterOptions {
    pub n_clusters: usize,
    pub n_components: usize,
    pub seed: u64,
    pub restarts: usize,
    pub max_iterations: usize,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        Self {
            n_clusters: 5,
            n_components: 2,
            seed: 42,
            restarts: 10,
            max_iterations: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearNode<T> {
    pub node: NodeId,
    pub label: String,
    pub distance: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster<T> {
    pub index: usize,
    pub members: Vec<NodeId>,
    pub centroid: Vec<T>,
    pub nearest: Vec<NearNode<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport<T> {
    /// Variance captured by each principal component.
    pub component_variance: Vec<T>,
    /// Projected coordinates per node, in id order.
    pub projection: Vec<(NodeId, Vec<T>)>,
    /// Ordered by smallest member id.
    pub clusters: Vec<Cluster<T>>,
}

impl<T> ClusterReport<T> {
    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Top principal directions by deflated power iteration on the centered
/// data. Each direction's sign is fixed so that its largest loading is
/// positive.
fn principal_components<T: Scalar>(
    centered: &[Vec<T>],
    components: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec<T>>, Vec<T>) {
    let dim = centered[0].len();
    let denom = T::from_count(centered.len().saturating_sub(1).max(1));
    let covariance_times = |v: &[T]| {
        let mut acc = vec![T::zero(); dim];
        for row in centered {
            let s = dot(row, v);
            for (a, &r) in acc.iter_mut().zip(row) {
                *a = *a + s * r;
            }
        }
        acc
    };
    let mut basis: Vec<Vec<T>> = Vec::with_capacity(components);
    for _ in 0..components {
        let mut v: Vec<T> = (0..dim).map(|_| T::lit(rng.gen::<f64>() - 0.5)).collect();
        project_out(&mut v, &basis);
        normalize(&mut v);
        for _ in 0..1000 {
            let mut w = covariance_times(&v);
            project_out(&mut w, &basis);
            if !normalize(&mut w) {
                break;
            }
            let change = T::one() - dot(&v, &w).abs();
            v = w;
            if change < T::lit(1e-14) {
                break;
            }
        }
        basis.push(v);
    }
    let variance = basis
        .iter()
        .map(|v| centered.iter().map(|r| dot(r, v).powi(2)).sum::<T>() / denom)
        .collect();
    for v in &mut basis {
        let lead = v
            .iter()
            .copied()
            .fold(T::zero(), |m, x| if x.abs() > m.abs() { x } else { m });
        if lead < T::zero() {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }
    (basis, variance)
}

fn project_out<T: Scalar>(v: &mut [T], basis: &[Vec<T>]) {
    // two passes keep near-degenerate directions orthogonal
    for _ in 0..2 {
        for b in basis {
            let proj = dot(v, b);
            for (x, &p) in v.iter_mut().zip(b) {
                *x = *x - proj * p;
            }
        }
    }
}

fn normalize<T: Scalar>(v: &mut [T]) -> bool {
    let norm = dot(v, v).sqrt();
    if norm <= T::epsilon() {
        return false;
    }
    for x in v.iter_mut() {
        *x = *x / norm;
    }
    true
}

fn kmeans_plus_plus<T: Scalar>(points: &[Vec<T>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<T>> {
    let mut centers = vec![points[rng.gen_range(0..points.len())].clone()];
    while centers.len() < k {
        let weights: Vec<f64> = points
            .iter()
            .map(|p| {
                centers
                    .iter()
                    .map(|c| squared_distance(p, c))
                    .fold(T::infinity(), T::min)
                    .as_f64()
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            weights
                .iter()
                .position(|&w| {
                    target -= w;
                    target < 0.0
                })
                .unwrap_or(points.len() - 1)
        } else {
            rng.gen_range(0..points.len())
        };
        centers.push(points[pick].clone());
    }
    centers
}

fn assign<T: Scalar>(points: &[Vec<T>], centers: &[Vec<T>]) -> (Vec<usize>, T) {
    let mut inertia = T::zero();
    let labels = points
        .iter()
        .map(|p| {
            let (best, d) = centers
                .iter()
                .enumerate()
                .map(|(i, c)| (i, squared_distance(p, c)))
                .fold((0, T::infinity()), |b, c| if c.1 < b.1 { c } else { b });
            inertia = inertia + d;
            best
        })
        .collect();
    (labels, inertia)
}

fn lloyd<T: Scalar>(
    points: &[Vec<T>],
    mut centers: Vec<Vec<T>>,
    max_iterations: usize,
) -> (Vec<usize>, Vec<Vec<T>>, T) {
    let dim = points[0].len();
    let (mut labels, mut inertia) = assign(points, &centers);
    for _ in 0..max_iterations {
        let mut sums = vec![vec![T::zero(); dim]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, &x) in sums[l].iter_mut().zip(p) {
                *s = *s + x;
            }
        }
        for (c, (sum, &count)) in centers.iter_mut().zip(sums.iter().zip(&counts)) {
            if count > 0 {
                *c = sum.iter().map(|&s| s / T::from_count(count)).collect();
            }
        }
        // reseed empty clusters with the point farthest from its center
        for c in 0..centers.len() {
            if counts[c] == 0 {
                let far = points
                    .iter()
                    .zip(&labels)
                    .enumerate()
                    .map(|(i, (p, &l))| (i, squared_distance(p, &centers[l])))
                    .fold((0, T::neg_infinity()), |b, x| if x.1 > b.1 { x } else { b })
                    .0;
                centers[c] = points[far].clone();
            }
        }
        let (next, next_inertia) = assign(points, &centers);
        let converged = next == labels;
        labels = next;
        inertia = next_inertia;
        if converged {
            break;
        }
    }
    (labels, centers, inertia)
}

/// Projects the index onto its principal components and clusters the
/// projection with seeded k-means++ (best of several restarts).
pub fn cluster_report<T: Scalar>(
    index: &NodeEmbeddingIndex<T>,
    options: ClusterOptions,
) -> Result<ClusterReport<T>, StatsError> {
    let k = options.n_clusters;
    if k == 0 {
        return Err(StatsError::InvalidArgument("n_clusters must be at least 1".into()));
    }
    if k > index.len() {
        return Err(StatsError::InvalidArgument(format!(
            "n_clusters {k} exceeds the {} indexed nodes",
            index.len()
        )));
    }
    let nodes: Vec<(NodeId, &str, &[T])> = index
        .iter()
        .map(|(id, e)| (id, e.label.as_str(), e.vector.as_slice()))
        .collect();
    let dim = index.dimension();
    let n = T::from_count(nodes.len());
    let mut mean = vec![T::zero(); dim];
    for (_, _, v) in &nodes {
        for (m, &x) in mean.iter_mut().zip(v.iter()) {
            *m = *m + x;
        }
    }
    for m in &mut mean {
        *m = *m / n;
    }
    let centered: Vec<Vec<T>> = nodes
        .iter()
        .map(|(_, _, v)| v.iter().zip(&mean).map(|(&x, &m)| x - m).collect())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let components = options.n_components.clamp(1, dim.max(1));
    let (basis, component_variance) = principal_components(&centered, components, &mut rng);
    let points: Vec<Vec<T>> = centered
        .iter()
        .map(|r| basis.iter().map(|b| dot(r, b)).collect())
        .collect();

    let mut best: Option<(Vec<usize>, Vec<Vec<T>>, T)> = None;
    for _ in 0..options.restarts.max(1) {
        let init = kmeans_plus_plus(&points, k, &mut rng);
        let run = lloyd(&points, init, options.max_iterations);
        if best.as_ref().is_none_or(|b| run.2 < b.2) {
            best = Some(run);
        }
    }
    let (labels, centers, _) = best.expect("at least one restart");

    let mut clusters: Vec<Cluster<T>> = centers
        .into_iter()
        .enumerate()
        .map(|(c, centroid)| {
            let mut near: Vec<NearNode<T>> = labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == c)
                .map(|(i, _)| NearNode {
                    node: nodes[i].0,
                    label: nodes[i].1.to_string(),
                    distance: squared_distance(&points[i], &centroid).sqrt(),
                })
                .collect();
            let members = near.iter().map(|m| m.node).collect();
            near.sort_by(|a, b| {
                a.distance
                    .partial_cmp(&b.distance)
                    .expect("finite distances")
                    .then_with(|| a.label.cmp(&b.label))
            });
            near.truncate(NEAREST_PER_CLUSTER);
            Cluster {
                index: c,
                members,
                centroid,
                nearest: near,
            }
        })
        .filter(|c| !c.members.is_empty())
        .collect();
    clusters.sort_by_key(|c| c.members.first().copied());
    for (i, c) in clusters.iter_mut().enumerate() {
        c.index = i;
    }
    Ok(ClusterReport {
        component_variance,
        projection: nodes.iter().map(|(id, _, _)| *id).zip(points).collect(),
        clusters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddingVector;

    fn index_from(vectors: &[Vec<f64>]) -> NodeEmbeddingIndex<f64> {
        NodeEmbeddingIndex::from_entries(
            vectors.iter().enumerate().map(|(i, v)| {
                (
                    NodeId(i as u64),
                    format!("node {i:02}"),
                    EmbeddingVector::from_f64(v).unwrap(),
                )
            }),
            "test",
        )
        .unwrap()
    }

    #[test]
    fn single_cluster_holds_everything() {
        let vs: Vec<Vec<f64>> = (0..15).map(|i| vec![1.0, i as f64 * 0.1, 0.3, -0.2]).collect();
        let report = cluster_report(&index_from(&vs), ClusterOptions { n_clusters: 1, ..Default::default() }).unwrap();
        assert_eq!(report.cluster_count(), 1);
        assert_eq!(report.clusters[0].members.len(), 15);
        assert_eq!(report.clusters[0].nearest.len(), 10);
    }

    #[test]
    fn too_many_clusters_is_an_error() {
        let vs = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(cluster_report(&index_from(&vs), ClusterOptions { n_clusters: 3, ..Default::default() }).is_err());
    }

    #[test]
    fn variance_is_ordered_and_planar_data_has_no_third_component() {
        let vs: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let t = 0.08 * i as f64;
                vec![t.cos(), t.sin(), 0.0]
            })
            .collect();
        let report = cluster_report(
            &index_from(&vs),
            ClusterOptions { n_clusters: 2, n_components: 3, ..Default::default() },
        )
        .unwrap();
        let v = &report.component_variance;
        assert!(v[0] >= v[1]);
        assert!(v[1] > 1e-6, "{v:?}");
        assert!(v[2] < 1e-12, "{v:?}");
    }

    #[test]
    fn deterministic_for_a_seed() {
        let vs: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![(i as f64).sin(), (i as f64 * 0.7).cos(), 0.5, (i % 3) as f64])
            .collect();
        let opts = ClusterOptions { n_clusters: 3, ..Default::default() };
        let a = cluster_report(&index_from(&vs), opts).unwrap();
        let b = cluster_report(&index_from(&vs), opts).unwrap();
        assert_eq!(a, b);
        let total: usize = a.clusters.iter().map(|c| c.members.len()).sum();
        assert_eq!(total, 30);
    }
}
