mod oracles;

use dialsum::style::{kmeans, pca_2d, tfidf, StyleDocument};
use dialsum::tags::{Tag, NUM_TAGS};
use dialsum::tensor::Matrix;
use nalgebra::{DMatrix, SymmetricEigen};
use oracles::{best_two_partition, canonical_labels};

fn style(name: &str, counts: &[(&str, usize)]) -> StyleDocument {
    let mut c = [0; NUM_TAGS];
    for (sym, k) in counts {
        c[Tag::from_symbol(sym).unwrap().index()] = *k;
    }
    StyleDocument {
        speaker: name.into(),
        counts: c,
        total: c.iter().sum(),
    }
}

#[test]
fn three_style_hand_arithmetic() {
    let styles = [
        style("a", &[("N", 2), ("V", 1), ("E", 1)]),
        style("b", &[("N", 1), ("V", 3)]),
        style("c", &[("N", 3), ("^", 2)]),
    ];
    let t = tfidf(&styles).unwrap();
    let ln = (3.0f64 / 2.0).ln();
    let col = |sym: &str| Tag::from_symbol(sym).unwrap().index();
    let mut expected = Matrix::zeros(3, NUM_TAGS);
    // N is in all three styles and V in two: both clamp to zero
    expected.set(0, col("E"), 0.25 * ln);
    expected.set(2, col("^"), 0.4 * ln);
    for i in 0..3 {
        for j in 0..NUM_TAGS {
            assert!((t.weights.get(i, j) - expected.get(i, j)).abs() < 1e-12, "({i}, {j})");
        }
    }
    assert_eq!(t.idf[col("N")], 0.0);
    assert_eq!(t.idf[col("V")], 0.0);
}

fn planted() -> Matrix {
    Matrix::from_rows(&[
        vec![0.0, 0.1, 0.0],
        vec![5.0, 5.2, 4.9],
        vec![0.2, 0.0, 0.1],
        vec![5.1, 4.8, 5.0],
        vec![0.1, 0.2, 0.2],
        vec![4.9, 5.0, 5.1],
    ])
}

#[test]
fn kmeans_recovers_planted_partition() {
    let x = planted();
    let points: Vec<Vec<f64>> = (0..x.rows).map(|i| x.row(i).to_vec()).collect();
    let (truth, _) = best_two_partition(&points);
    assert_eq!(truth, [0, 1, 0, 1, 0, 1]);
    for seed in 0..10 {
        let c = kmeans(&x, 2, seed, 100).unwrap();
        assert_eq!(canonical_labels(&c.assignments), truth, "seed {seed}");
    }
}

#[test]
fn pca_matches_dense_eigendecomposition() {
    let x = Matrix::from_rows(&[
        vec![0.3, 0.0, 0.1, 0.5],
        vec![0.1, 0.4, 0.0, 0.2],
        vec![0.0, 0.1, 0.6, 0.1],
        vec![0.5, 0.2, 0.2, 0.0],
        vec![0.2, 0.3, 0.1, 0.4],
    ]);
    let p = pca_2d(&x).unwrap();

    let m = DMatrix::from_row_slice(x.rows, x.cols, &x.data);
    let mean = m.row_mean();
    let centered = DMatrix::from_fn(x.rows, x.cols, |i, j| m[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (x.rows as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..x.cols).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().sum();

    for k in 0..2 {
        let mut v: Vec<f64> = eig.eigenvectors.column(order[k]).iter().copied().collect();
        let lead = v.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if lead < 0.0 {
            v.iter_mut().for_each(|e| *e = -*e);
        }
        for (a, b) in p.components[k].iter().zip(&v) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((p.explained_variance[k] - eig.eigenvalues[order[k]] / total).abs() < 1e-9);
        for i in 0..x.rows {
            let coord: f64 = centered.row(i).iter().zip(&v).map(|(a, b)| a * b).sum();
            assert!((p.coords[i][k] - coord).abs() < 1e-9);
        }
    }
}
