use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::data::SegmentPool;
use crate::models::{utterance_embedding, EncoderBackbone, NoiseEmbedding};

use super::pool_segments;

/// Maps high-dimensional points to the plane.
pub trait Projector {
    fn project(&self, points: &[Vec<f64>]) -> Result<Vec<[f64; 2]>>;
}

/// Projection onto the two leading principal components.
#[derive(Clone, Copy, Debug, Default)]
pub struct Pca;

impl Projector for Pca {
    fn project(&self, points: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
        let n = points.len();
        let d = points.first().map_or(0, Vec::len);
        if n == 0 || d == 0 {
            return Ok(Vec::new());
        }
        let mut x = DMatrix::from_fn(n, d, |i, j| points[i][j]);
        for j in 0..d {
            let mean = x.column(j).mean();
            x.column_mut(j).add_scalar_mut(-mean);
        }
        let svd = x.clone().svd(false, true);
        let vt = svd.v_t.ok_or_else(|| Error::InvalidInput("principal components did not converge".into()))?;
        // Leading components first, whatever order the decomposition used.
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let axis = |k: usize| order.get(k).map(|&r| vt.row(r).transpose());
        let coords = |k: usize| match axis(k) {
            Some(v) => (&x * v).iter().copied().collect::<Vec<_>>(),
            None => vec![0.0; n],
        };
        let (a, b) = (coords(0), coords(1));
        Ok(a.into_iter().zip(b).map(|(u, v)| [u, v]).collect())
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Mean silhouette coefficient under Euclidean distance. Points in a
/// singleton cluster score zero.
pub fn silhouette(points: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if points.len() != labels.len() {
        return Err(Error::Shape(format!("{} points, {} labels", points.len(), labels.len())));
    }
    let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        clusters.entry(l).or_default().push(i);
    }
    if clusters.len() < 2 {
        return Err(Error::SilhouetteUndefined("needs at least two clusters".into()));
    }
    if points.iter().all(|p| p == &points[0]) {
        return Err(Error::SilhouetteUndefined("all points coincide".into()));
    }
    let mut sum = 0.0;
    for (i, p) in points.iter().enumerate() {
        let own = &clusters[&labels[i]];
        if own.len() == 1 {
            continue;
        }
        let a = own.iter().filter(|&&j| j != i).map(|&j| dist(p, &points[j])).sum::<f64>() / (own.len() - 1) as f64;
        let b = clusters
            .iter()
            .filter(|(l, _)| **l != labels[i])
            .map(|(_, m)| m.iter().map(|&j| dist(p, &points[j])).sum::<f64>() / m.len() as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            sum += (b - a) / denom;
        }
    }
    Ok(sum / points.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub coords: Vec<[f64; 2]>,
    pub labels: Vec<String>,
    /// Computed in the original embedding space.
    pub silhouette: f64,
}

impl Projection {
    /// `x  y  label` rows.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("x\ty\tlabel\n");
        for (c, l) in self.coords.iter().zip(&self.labels) {
            out.push_str(&format!("{:.6}\t{:.6}\t{l}\n", c[0], c[1]));
        }
        out
    }
}

/// 2-D projection plus silhouette of labelled embeddings. Requires two or
/// more classes with at least three points each.
pub fn embedding_projection(embeddings: &[NoiseEmbedding], labels: &[String], projector: &dyn Projector) -> Result<Projection> {
    if embeddings.len() != labels.len() {
        return Err(Error::Shape(format!("{} embeddings, {} labels", embeddings.len(), labels.len())));
    }
    let mut names: Vec<&String> = labels.iter().collect();
    names.sort();
    names.dedup();
    if names.len() < 2 {
        return Err(Error::InvalidInput("projection needs at least two classes".into()));
    }
    if let Some(small) = names.iter().find(|n| labels.iter().filter(|l| l == *n).count() < 3) {
        return Err(Error::InvalidInput(format!("class `{small}` has fewer than three points")));
    }
    let points: Vec<Vec<f64>> = embeddings
        .iter()
        .map(|e| e.vector().iter().map(|&v| v as f64).collect())
        .collect();
    let ids: Vec<usize> = labels.iter().map(|l| names.iter().position(|n| *n == l).expect("listed")).collect();
    let silhouette = silhouette(&points, &ids)?;
    Ok(Projection {
        coords: projector.project(&points)?,
        labels: labels.to_vec(),
        silhouette,
    })
}

/// One embedding per utterance of `pool`.
pub fn pool_embeddings(pool: &SegmentPool, encoder: &impl EncoderBackbone<f32>) -> Result<Vec<NoiseEmbedding>> {
    let segments = pool_segments(pool)?;
    pool.ids()
        .iter()
        .map(|id| {
            let own: Vec<_> = segments.iter().filter(|s| s.utterance_id() == id).cloned().collect();
            utterance_embedding(&own, encoder)
        })
        .collect()
}
