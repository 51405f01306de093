//! Speaker-style fingerprints from POS tag distributions.
//!
//! Each speaker name becomes one document: the multiset of tags over all of
//! that speaker's utterances in the corpus. Documents are weighted with
//! tf-idf, grouped with K-means, projected to two dimensions with PCA, and
//! tags are ranked by how much their weight varies between clusters.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::tags::{Tag, NUM_TAGS};
use crate::tensor::Matrix;

/// Pooled tag counts of one speaker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleDocument {
    pub speaker: String,
    pub counts: [usize; NUM_TAGS],
    pub total: usize,
}

impl StyleDocument {
    pub fn count(&self, tag: Tag) -> usize {
        self.counts[tag.index()]
    }
}

/// One document per distinct speaker name, in order of first appearance.
pub fn build_styles(corpus: &Corpus) -> Result<Vec<StyleDocument>> {
    let mut docs: Vec<StyleDocument> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for d in &corpus.dialogues {
        for (t, turn) in d.turns.iter().enumerate() {
            let tags = turn.pos_tags.as_ref().ok_or_else(|| {
                Error::Precondition(format!("dialogue `{}`, turn {t} is not tagged", d.id))
            })?;
            let name = d.speaker_name(turn);
            let i = *index.entry(name.to_string()).or_insert_with(|| {
                docs.push(StyleDocument {
                    speaker: name.to_string(),
                    counts: [0; NUM_TAGS],
                    total: 0,
                });
                docs.len() - 1
            });
            for tag in tags {
                docs[i].counts[tag.index()] += 1;
                docs[i].total += 1;
            }
        }
    }
    docs.retain(|d| d.total > 0);
    Ok(docs)
}

/// tf-idf weights: one row per style, one column per tag.
#[derive(Debug, Clone, PartialEq)]
pub struct TfIdf {
    pub speakers: Vec<String>,
    pub weights: Matrix,
    /// Clamped inverse document frequency per tag.
    pub idf: Vec<f64>,
}

/// `tf_ij · max(0, ln(n / (1 + df_j)))` with `tf_ij` the relative
/// frequency of tag `j` in style `i`.
pub fn tfidf(styles: &[StyleDocument]) -> Result<TfIdf> {
    if styles.is_empty() {
        return Err(Error::Argument("no styles to weight".into()));
    }
    let n = styles.len() as f64;
    let idf: Vec<f64> = (0..NUM_TAGS)
        .map(|j| {
            let df = styles.iter().filter(|s| s.counts[j] > 0).count() as f64;
            (n / (1.0 + df)).ln().max(0.0)
        })
        .collect();
    let mut weights = Matrix::zeros(styles.len(), NUM_TAGS);
    for (i, s) in styles.iter().enumerate() {
        for j in 0..NUM_TAGS {
            let tf = s.counts[j] as f64 / s.total as f64;
            weights.set(i, j, tf * idf[j]);
        }
    }
    Ok(TfIdf {
        speakers: styles.iter().map(|s| s.speaker.clone()).collect(),
        weights,
        idf,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub assignments: Vec<usize>,
    pub centroids: Matrix,
    pub iterations: usize,
    /// Sum of squared distances to assigned centroids after each
    /// assignment step.
    pub distortion: Vec<f64>,
}

/// Lloyd's algorithm from `k` seeded distinct rows. Points go to the
/// nearest centroid, ties to the lower index; a centroid with no points
/// stays where it is.
pub fn kmeans(x: &Matrix, k: usize, seed: u64, max_iter: usize) -> Result<ClusterAssignment> {
    if k == 0 || k > x.rows {
        return Err(Error::Argument(format!("k = {k} must be in 1..={}", x.rows)));
    }
    let mut order: Vec<usize> = (0..x.rows).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    for &i in &order {
        if chosen.len() < k && chosen.iter().all(|&c| x.row(c) != x.row(i)) {
            chosen.push(i);
        }
    }
    for &i in &order {
        if chosen.len() < k && !chosen.contains(&i) {
            chosen.push(i);
        }
    }
    let mut centroids = Matrix::zeros(k, x.cols);
    for (c, &i) in chosen.iter().enumerate() {
        centroids.row_mut(c).copy_from_slice(x.row(i));
    }

    let mut assignments = vec![usize::MAX; x.rows];
    let mut distortion = Vec::new();
    let mut iterations = 0;
    while iterations < max_iter.max(1) {
        iterations += 1;
        let mut changed = false;
        let mut total = 0.0;
        for i in 0..x.rows {
            let mut best = 0;
            let mut best_d = sq_dist(x.row(i), centroids.row(0));
            for c in 1..k {
                let d = sq_dist(x.row(i), centroids.row(c));
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            total += best_d;
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
        }
        distortion.push(total);
        if !changed {
            break;
        }
        for c in 0..k {
            let members: Vec<usize> = (0..x.rows).filter(|&i| assignments[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            let row = centroids.row_mut(c);
            row.fill(0.0);
            for &i in &members {
                for (r, v) in row.iter_mut().zip(x.row(i)) {
                    *r += v;
                }
            }
            for r in row.iter_mut() {
                *r /= members.len() as f64;
            }
        }
    }
    Ok(ClusterAssignment {
        assignments,
        centroids,
        iterations,
        distortion,
    })
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order with unit eigenvectors as the
/// columns of the second value.
pub fn symmetric_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.rows;
    assert_eq!(a.cols, n, "matrix must be square");
    let mut a = a.clone();
    let mut v = Matrix::zeros(n, n);
    for i in 0..n {
        v.set(i, i, 1.0);
    }
    let scale = a.sum_sq().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a.get(i, j) * a.get(i, j))
            .sum();
        if off.sqrt() <= 1e-15 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(j, j).total_cmp(&a.get(i, i)).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        for r in 0..n {
            vectors.set(r, c, v.get(r, i));
        }
    }
    (values, vectors)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection2D {
    pub coords: Vec<[f64; 2]>,
    /// Unit principal directions, largest-magnitude entry positive.
    pub components: [Vec<f64>; 2],
    pub explained_variance: [f64; 2],
}

/// Project mean-centered rows onto the top two eigenvectors of their
/// sample covariance.
pub fn pca_2d(x: &Matrix) -> Result<Projection2D> {
    if x.rows < 3 {
        return Err(Error::Argument(format!("PCA needs at least 3 rows, got {}", x.rows)));
    }
    let (n, d) = x.shape();
    let means: Vec<f64> = (0..d)
        .map(|j| (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64)
        .collect();
    let mut centered = x.clone();
    for i in 0..n {
        for (v, m) in centered.row_mut(i).iter_mut().zip(&means) {
            *v -= m;
        }
    }
    let mut cov = crate::tensor::matmul_tn(&centered, &centered);
    cov.scale(1.0 / (n - 1) as f64);
    let total: f64 = (0..d).map(|j| cov.get(j, j)).sum();
    if total <= 0.0 {
        return Err(Error::DegenerateData("rows have zero variance".into()));
    }
    let (values, vectors) = symmetric_eigen(&cov);
    let component = |c: usize| {
        let mut v: Vec<f64> = (0..d).map(|r| vectors.get(r, c)).collect();
        let lead = v
            .iter()
            .copied()
            .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        v
    };
    let components = [component(0), component(1)];
    let coords = (0..n)
        .map(|i| {
            let row = centered.row(i);
            [
                crate::tensor::dot(row, &components[0]),
                crate::tensor::dot(row, &components[1]),
            ]
        })
        .collect();
    Ok(Projection2D {
        coords,
        components,
        explained_variance: [values[0].max(0.0) / total, values[1].max(0.0) / total],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRank {
    pub tag: Tag,
    /// Mean weight of the tag within each cluster, by cluster id.
    pub cluster_means: Vec<f64>,
    /// Sample standard deviation of the cluster means.
    pub std: f64,
}

/// Tags ordered by the standard deviation (n − 1 denominator) of their
/// per-cluster mean weight, largest first; ties by tag order. Empty
/// clusters are left out.
pub fn rank_features_by_std(
    clusters: &ClusterAssignment,
    x: &Matrix,
    top_k: usize,
) -> Result<Vec<FeatureRank>> {
    if clusters.assignments.len() != x.rows {
        return Err(Error::Argument(format!(
            "{} assignments for {} rows",
            clusters.assignments.len(),
            x.rows
        )));
    }
    let k = clusters.centroids.rows;
    let members: Vec<Vec<usize>> = (0..k)
        .map(|c| (0..x.rows).filter(|&i| clusters.assignments[i] == c).collect())
        .filter(|m: &Vec<usize>| !m.is_empty())
        .collect();
    let mut ranks: Vec<FeatureRank> = Tag::ALL
        .iter()
        .map(|&tag| {
            let j = tag.index();
            let cluster_means: Vec<f64> = members
                .iter()
                .map(|m| m.iter().map(|&i| x.get(i, j)).sum::<f64>() / m.len() as f64)
                .collect();
            FeatureRank {
                tag,
                std: sample_std(&cluster_means),
                cluster_means,
            }
        })
        .collect();
    ranks.sort_by(|a, b| b.std.total_cmp(&a.std).then(a.tag.index().cmp(&b.tag.index())));
    ranks.truncate(top_k);
    Ok(ranks)
}

/// Standard deviation with `n − 1` in the denominator; 0 for fewer than
/// two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn tag_header() -> String {
    Tag::ALL.iter().map(|t| format!(",{}", t.symbol())).collect()
}

fn quote(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

pub fn styles_csv(styles: &[StyleDocument]) -> String {
    let mut out = format!("speaker,T{}\n", tag_header());
    for s in styles {
        let _ = write!(out, "{},{}", quote(&s.speaker), s.total);
        for c in s.counts {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
    }
    out
}

pub fn tfidf_csv(t: &TfIdf) -> String {
    let mut out = format!("speaker{}\n", tag_header());
    for (i, s) in t.speakers.iter().enumerate() {
        out.push_str(&quote(s));
        for v in t.weights.row(i) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn clusters_csv(speakers: &[String], c: &ClusterAssignment) -> String {
    let mut out = String::from("speaker,cluster\n");
    for (s, a) in speakers.iter().zip(&c.assignments) {
        let _ = writeln!(out, "{},{a}", quote(s));
    }
    out
}

pub fn pca_csv(speakers: &[String], p: &Projection2D) -> String {
    let mut out = String::from("speaker,x,y\n");
    for (s, [x, y]) in speakers.iter().zip(&p.coords) {
        let _ = writeln!(out, "{},{x},{y}", quote(s));
    }
    out
}

pub fn feature_rank_csv(ranks: &[FeatureRank]) -> String {
    let k = ranks.first().map_or(0, |r| r.cluster_means.len());
    let mut out = String::from("tag");
    for c in 0..k {
        let _ = write!(out, ",cluster_{c}");
    }
    out.push_str(",std\n");
    for r in ranks {
        out.push_str(&quote(r.tag.symbol()));
        for m in &r.cluster_means {
            let _ = write!(out, ",{m}");
        }
        let _ = writeln!(out, ",{}", r.std);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Dialogue, Split};

    fn doc(speaker: &str, tags: &[(Tag, usize)]) -> StyleDocument {
        let mut counts = [0; NUM_TAGS];
        for &(t, c) in tags {
            counts[t.index()] += c;
        }
        StyleDocument {
            speaker: speaker.into(),
            counts,
            total: counts.iter().sum(),
        }
    }

    #[test]
    fn pooled_by_speaker_name() {
        let mut a = Dialogue::from_turns("a", [("amy", "x"), ("bo", "y")], "s");
        let mut b = Dialogue::from_turns("b", [("amy", "z")], "s");
        a.turns[0].pos_tags = Some(vec![Tag::Noun, Tag::Verb, Tag::Noun]);
        a.turns[1].pos_tags = Some(vec![Tag::Emoticon]);
        b.turns[0].pos_tags = Some(vec![Tag::Verb]);
        let styles = build_styles(&Corpus::new(Split::Test, vec![a, b])).unwrap();
        assert_eq!(styles.len(), 2);
        assert_eq!(styles[0], doc("amy", &[(Tag::Noun, 2), (Tag::Verb, 2)]));
        assert_eq!(styles[1].total, 1);
    }

    #[test]
    fn untagged_corpus_rejected() {
        let d = Dialogue::from_turns("a", [("amy", "x")], "s");
        let err = build_styles(&Corpus::new(Split::Test, vec![d])).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn idf_clamps_common_tags() {
        let styles = [
            doc("a", &[(Tag::Noun, 2), (Tag::Emoticon, 1)]),
            doc("b", &[(Tag::Noun, 1)]),
            doc("c", &[(Tag::Noun, 3), (Tag::Verb, 1)]),
        ];
        let t = tfidf(&styles).unwrap();
        for i in 0..3 {
            assert_eq!(t.weights.get(i, Tag::Noun.index()), 0.0);
        }
        let e = Tag::Emoticon.index();
        assert!((t.weights.get(0, e) - (1.0 / 3.0) * (1.5f64).ln()).abs() < 1e-12);
        assert_eq!(t.weights.get(1, e), 0.0);
    }

    #[test]
    fn relative_frequency_is_scale_free() {
        let others = [doc("b", &[(Tag::Noun, 1)]), doc("c", &[(Tag::Adverb, 2)])];
        let once = [vec![doc("a", &[(Tag::Noun, 1), (Tag::Verb, 2)])], others.to_vec()].concat();
        let twice = [vec![doc("a", &[(Tag::Noun, 2), (Tag::Verb, 4)])], others.to_vec()].concat();
        assert_eq!(tfidf(&once).unwrap().weights, tfidf(&twice).unwrap().weights);
    }

    #[test]
    fn kmeans_edge_cases() {
        let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 2.0]]);
        assert!(kmeans(&x, 0, 0, 10).is_err());
        assert!(kmeans(&x, 4, 0, 10).is_err());
        let all = kmeans(&x, 3, 5, 10).unwrap();
        let mut a = all.assignments.clone();
        a.sort();
        assert_eq!(a, [0, 1, 2]);
        assert_eq!(*all.distortion.last().unwrap(), 0.0);
        let one = kmeans(&x, 1, 5, 10).unwrap();
        assert_eq!(one.centroids.row(0), &[1.0 / 3.0, 2.0 / 3.0]);
    }

    #[test]
    fn std_ranking() {
        let x = Matrix::from_rows(&[vec![0.0; NUM_TAGS], vec![1.0; NUM_TAGS]]);
        let mut y = x.clone();
        y.set(1, Tag::Discourse.index(), 3.0);
        let c = ClusterAssignment {
            assignments: vec![0, 1],
            centroids: Matrix::zeros(2, NUM_TAGS),
            iterations: 1,
            distortion: vec![0.0],
        };
        let r = rank_features_by_std(&c, &y, 3).unwrap();
        assert_eq!(r[0].tag, Tag::Discourse);
        assert!((r[0].std - 3.0 / 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(r[1].tag, Tag::Noun);
        assert!((sample_std(&[0.0, 0.0, 2.58]) - 1.4896).abs() < 1e-4);
    }

    #[test]
    fn pca_line_and_degenerate() {
        let mut rows = Vec::new();
        for t in 0..5 {
            let mut r = vec![0.0; NUM_TAGS];
            r[0] = t as f64;
            r[3] = 2.0 * t as f64;
            rows.push(r);
        }
        let p = pca_2d(&Matrix::from_rows(&rows)).unwrap();
        assert!(p.explained_variance[0] >= 1.0 - 1e-9);
        let same = Matrix::from_rows(&[vec![1.0; 4], vec![1.0; 4], vec![1.0; 4]]);
        assert!(matches!(pca_2d(&same), Err(Error::DegenerateData(_))));
        assert!(pca_2d(&Matrix::zeros(2, 4)).is_err());
    }

    #[test]
    fn csv_headers() {
        let s = [doc("a,b", &[(Tag::Noun, 1)])];
        let csv = styles_csv(&s);
        assert!(csv.starts_with("speaker,T,N,O,^"));
        assert!(csv.lines().nth(1).unwrap().starts_with("\"a,b\",1,1,0"));
    }
}
