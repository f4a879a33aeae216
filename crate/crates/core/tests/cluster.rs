mod common;

use std::collections::BTreeMap;

use lost_core::cluster::{cosine, hit_counts, kmeans_points, KMeansConfig};
use lost_core::datasets::{GtObject, ImageAnnotations};
use lost_core::{
    hungarian, kmeans, match_clusters, retrieve_neighbors, AnnotationSet, CropDescriptor,
    Detection, Error, PixelBox,
};
use rand::seq::SliceRandom;
use rand::Rng;

fn random_cost(rng: &mut impl Rng, n: usize, m: usize, integer: bool) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..m)
                .map(|_| {
                    if integer {
                        f64::from(rng.random_range(-3i32..4))
                    } else {
                        rng.random_range(-10.0..10.0)
                    }
                })
                .collect()
        })
        .collect()
}

#[test]
fn hungarian_matches_brute_force() {
    let mut rng = common::rng(41);
    for trial in 0..500 {
        let n = rng.random_range(1..=7);
        let m = rng.random_range(1..=7);
        let cost = random_cost(&mut rng, n, m, false);
        let (want, best) = common::brute_force_assignment(&cost, 0.0);
        let got = hungarian(&cost).unwrap();
        assert_eq!(got.row_to_col, want, "trial {trial}: {cost:?}");
        assert_eq!(got.total_cost, best);
    }
}

#[test]
fn hungarian_ties_resolve_lexicographically() {
    let mut rng = common::rng(42);
    for trial in 0..300 {
        let n = rng.random_range(1..=6);
        let m = rng.random_range(1..=6);
        let cost = random_cost(&mut rng, n, m, true);
        let (want, best) = common::brute_force_assignment(&cost, 0.0);
        let got = hungarian(&cost).unwrap();
        assert_eq!(got.row_to_col, want, "trial {trial}: {cost:?}");
        assert_eq!(got.total_cost, best);
    }
}

#[test]
fn hungarian_beats_random_maps() {
    let mut rng = common::rng(43);
    let cost = random_cost(&mut rng, 12, 9, false);
    let got = hungarian(&cost).unwrap();
    assert_eq!(got.pairs().count(), 9);
    for _ in 0..1000 {
        let mut rows: Vec<usize> = (0..12).collect();
        rows.shuffle(&mut rng);
        let sampled: f64 = rows[..9].iter().enumerate().map(|(c, &r)| cost[r][c]).sum();
        assert!(got.total_cost <= sampled + 1e-9);
    }
}

#[test]
fn hungarian_small_cases() {
    let a = hungarian(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
    assert_eq!(a.row_to_col, vec![Some(0), Some(1)]);
    assert_eq!(a.total_cost, 2.0);
    let z = hungarian(&vec![vec![0.0; 5]; 5]).unwrap();
    assert_eq!(z.row_to_col, (0..5).map(Some).collect::<Vec<_>>());
    assert!(matches!(
        hungarian(&[vec![1.0], vec![f64::INFINITY]]),
        Err(Error::NonFiniteCost { row: 1, col: 0 })
    ));
}

fn points_1d(v: &[f64]) -> Vec<Vec<f64>> {
    v.iter().map(|&x| vec![x]).collect()
}

#[test]
fn kmeans_two_pairs() {
    let points = points_1d(&[0.0, 0.1, 10.0, 10.1]);
    assert!((common::best_partition_inertia(&points, 2) - 0.01).abs() < 1e-12);
    for seed in 0..20 {
        let fit = kmeans_points(&points, &KMeansConfig::new(2, seed)).unwrap();
        assert!((fit.inertia - 0.01).abs() < 1e-9, "seed {seed}: {}", fit.inertia);
        let mut c: Vec<f64> = fit.centroids.iter().map(|c| c[0]).collect();
        c.sort_by(f64::total_cmp);
        assert!((c[0] - 0.05).abs() < 1e-12 && (c[1] - 10.05).abs() < 1e-12);
    }
}

fn blobs(rng: &mut impl Rng, k: usize, per: usize, dim: usize, spread: f64) -> Vec<Vec<f64>> {
    let mut points = Vec::new();
    for c in 0..k {
        let center: Vec<f64> = (0..dim).map(|d| if d == c % dim { 100.0 * (c + 1) as f64 } else { 0.0 }).collect();
        for _ in 0..per {
            points.push(center.iter().map(|x| x + rng.random_range(-spread..spread)).collect());
        }
    }
    points.shuffle(rng);
    points
}

#[test]
fn kmeans_fit_is_consistent_and_monotone() {
    let mut rng = common::rng(44);
    for trial in 0..200 {
        let n = rng.random_range(1..=40);
        let dim = rng.random_range(1..=5);
        let k = rng.random_range(1..=n.min(6));
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| f64::from(rng.random_range(-4i32..5)) * 0.5).collect())
            .collect();
        let config = KMeansConfig::new(k, trial);
        let fit = kmeans_points(&points, &config).unwrap();
        for pair in fit.inertia_history.windows(2) {
            assert!(pair[1] <= pair[0], "trial {trial}: {:?}", fit.inertia_history);
        }
        assert_eq!(*fit.inertia_history.last().unwrap(), fit.inertia);
        assert!(fit.iterations <= config.max_iterations);
        assert!(fit.labels.iter().all(|&l| l < k));
        let recomputed: f64 = points
            .iter()
            .zip(&fit.labels)
            .map(|(p, &l)| p.iter().zip(&fit.centroids[l]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .sum();
        assert!((recomputed - fit.inertia).abs() <= 1e-9 * (1.0 + fit.inertia));
        assert!(fit.inertia >= 0.0);
        assert_eq!(kmeans_points(&points, &config).unwrap(), fit, "deterministic");
    }
}

#[test]
fn kmeans_finds_the_optimal_partition_of_separated_blobs() {
    let mut rng = common::rng(45);
    for trial in 0..20 {
        let k = rng.random_range(1..=3);
        let per = rng.random_range(1..=3);
        let points = blobs(&mut rng, k, per, 3, 1.0);
        let best = common::best_partition_inertia(&points, k);
        let fit = kmeans_points(&points, &KMeansConfig::new(k, trial)).unwrap();
        assert!(
            (fit.inertia - best).abs() <= 1e-9 * (1.0 + best),
            "trial {trial}: {} vs {best}",
            fit.inertia
        );
    }
}

#[test]
fn kmeans_large_run_is_monotone() {
    let mut rng = common::rng(46);
    let points: Vec<Vec<f64>> = (0..500)
        .map(|_| (0..16).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let fit = kmeans_points(&points, &KMeansConfig::new(20, 7)).unwrap();
    assert!(fit.inertia_history.len() >= 2);
    for pair in fit.inertia_history.windows(2) {
        assert!(pair[1] <= pair[0]);
    }
}

fn gt_single(images: &[(&str, &str)]) -> AnnotationSet {
    let mut gt = AnnotationSet::default();
    for (id, class) in images {
        gt.images.insert(
            id.to_string(),
            ImageAnnotations {
                width: 64,
                height: 64,
                objects: vec![GtObject {
                    class: class.to_string(),
                    bbox: PixelBox::new(0.0, 0.0, 32.0, 32.0),
                    difficult: false,
                    truncated: false,
                }],
            },
        );
    }
    gt
}

fn hit(id: &str, label: usize) -> Detection {
    Detection::new(id, PixelBox::new(0.0, 0.0, 32.0, 32.0).with_label(Some(label)))
}

fn miss(id: &str, label: usize) -> Detection {
    Detection::new(id, PixelBox::new(40.0, 40.0, 64.0, 64.0).with_label(Some(label)))
}

/// Random labeled predictions over a random single-class-per-image set.
fn random_clustering(rng: &mut impl Rng, k: usize, classes: &[&str]) -> (Vec<Detection>, AnnotationSet) {
    let n = rng.random_range(5..30);
    let ids: Vec<String> = (0..n).map(|i| format!("{i:03}")).collect();
    let pairs: Vec<(&str, &str)> = ids
        .iter()
        .map(|id| (id.as_str(), classes[rng.random_range(0..classes.len())]))
        .collect();
    let gt = gt_single(&pairs);
    let preds = ids
        .iter()
        .map(|id| {
            let label = rng.random_range(0..k);
            if rng.random_bool(0.8) { hit(id, label) } else { miss(id, label) }
        })
        .collect();
    (preds, gt)
}

#[test]
fn matching_is_the_best_bijection() {
    let mut rng = common::rng(47);
    let all_classes = ["aero", "bike", "bird", "boat"];
    for _ in 0..100 {
        let k = rng.random_range(1..=5);
        let classes = &all_classes[..rng.random_range(1..=4)];
        let (preds, gt) = random_clustering(&mut rng, k, classes);
        let names = gt.classes();
        let hits = hit_counts(&preds, k, &gt, &names, 0.5).unwrap();
        let neg: Vec<Vec<f64>> = hits.iter().map(|r| r.iter().map(|&h| -(h as f64)).collect()).collect();
        let (want, best) = common::brute_force_assignment(&neg, 0.0);

        let map = match_clusters(&preds, k, &gt, 0.5).unwrap();
        assert_eq!(map.matched_hits as f64, -best);
        assert_eq!(map.pairs.len(), k.min(names.len()));
        let expected: BTreeMap<usize, String> = want
            .iter()
            .enumerate()
            .filter_map(|(c, j)| j.map(|j| (c, names[j].clone())))
            .collect();
        assert_eq!(map.pairs, expected);
        assert_eq!(map.unmatched.len(), k - map.pairs.len());
    }
}

#[test]
fn matching_follows_cluster_relabeling() {
    let mut rng = common::rng(48);
    for _ in 0..50 {
        let k = 3;
        let (preds, gt) = random_clustering(&mut rng, k, &["a", "b", "c"]);
        let base = match_clusters(&preds, k, &gt, 0.5).unwrap();
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut rng);
        let relabeled: Vec<Detection> = preds
            .iter()
            .map(|d| {
                let mut d = d.clone();
                d.bbox.label = d.bbox.label.map(|l| perm[l]);
                d
            })
            .collect();
        let moved = match_clusters(&relabeled, k, &gt, 0.5).unwrap();
        assert_eq!(moved.matched_hits, base.matched_hits);
        // with distinct hit counts the optimum is unique, so pairs move along
        let hits = hit_counts(&preds, k, &gt, &gt.classes(), 0.5).unwrap();
        let mut flat: Vec<u64> = hits.concat();
        flat.sort();
        flat.dedup();
        if flat.len() == k * gt.classes().len() {
            for (c, class) in &base.pairs {
                assert_eq!(&moved.pairs[&perm[*c]], class);
            }
        }
    }
}

#[test]
fn crafted_confusion() {
    // cluster 0 mostly dogs, cluster 1 mostly cats, cluster 2 mixed birds/dogs
    let mut images = Vec::new();
    let mut preds = Vec::new();
    let plan = [(0, "dog", 4), (0, "cat", 1), (1, "cat", 3), (1, "bird", 1), (2, "bird", 2), (2, "dog", 3)];
    for (cluster, class, count) in plan {
        for i in 0..count {
            let id = format!("{class}{cluster}{i}");
            images.push((id.clone(), class));
            preds.push(hit(&id, cluster));
        }
    }
    let pairs: Vec<(&str, &str)> = images.iter().map(|(i, c)| (i.as_str(), *c)).collect();
    let gt = gt_single(&pairs);
    let map = match_clusters(&preds, 3, &gt, 0.5).unwrap();
    // brute force over the 6 bijections: dog->0, cat->1, bird->2 gives 9
    assert_eq!(map.matched_hits, 9);
    assert_eq!(map.pairs[&0], "dog");
    assert_eq!(map.pairs[&1], "cat");
    assert_eq!(map.pairs[&2], "bird");
}

#[test]
fn clustering_descriptors() {
    let mut rng = common::rng(49);
    let descriptors: Vec<CropDescriptor> = (0..30)
        .map(|i| CropDescriptor {
            image_id: format!("{i:02}"),
            vector: (0..4).map(|d| if d == i % 3 { 10.0 } else { 0.0 } + rng.random_range(-0.1f32..0.1)).collect(),
        })
        .collect();
    let model = kmeans(&descriptors, 3, 0).unwrap();
    for i in 0..30 {
        for j in 0..30 {
            let same = model.assignments[&format!("{i:02}")] == model.assignments[&format!("{j:02}")];
            assert_eq!(same, i % 3 == j % 3);
        }
    }
    assert_eq!(kmeans(&descriptors, 3, 0).unwrap(), model);
    assert!(matches!(kmeans(&descriptors, 31, 0), Err(Error::KTooLarge { .. })));
}

#[test]
fn neighbors_match_exhaustive_oracle() {
    let mut rng = common::rng(50);
    for trial in 0..50 {
        let n = 20;
        let ids: Vec<String> = (0..n).map(|i| format!("img{i:02}")).collect();
        let vectors: Vec<Vec<f32>> = (0..n)
            .map(|i| {
                if trial % 5 == 0 && i % 7 == 0 {
                    vec![0.0; 8]
                } else {
                    // a coarse lattice makes equal cosines common
                    (0..8).map(|_| rng.random_range(-2i32..3) as f32).collect()
                }
            })
            .collect();
        let mut descriptors: Vec<CropDescriptor> = ids
            .iter()
            .zip(&vectors)
            .map(|(id, v)| CropDescriptor { image_id: id.clone(), vector: v.clone() })
            .collect();
        descriptors.shuffle(&mut rng);
        let tau = rng.random_range(1..n);
        let got = retrieve_neighbors(&descriptors, tau).unwrap();
        assert_eq!(got, common::neighbor_oracle(&ids, &vectors, tau), "trial {trial}");
        for a in &vectors {
            for b in &vectors {
                assert_eq!(cosine(a, b), cosine(b, a));
            }
        }
    }
}

#[test]
fn neighbor_edge_cases() {
    let d = |id: &str, v: Vec<f32>| CropDescriptor { image_id: id.into(), vector: v };
    let set = vec![d("a", vec![1.0, 2.0]), d("b", vec![1.0, 2.0]), d("c", vec![-1.0, 0.0])];
    let got = retrieve_neighbors(&set, 1).unwrap();
    assert_eq!(got["a"], vec!["b"]);
    assert_eq!(got["b"], vec!["a"]);

    let hot = vec![d("x", vec![1.0, 0.0, 0.0]), d("y", vec![0.0, 1.0, 0.0]), d("z", vec![0.0, 0.0, 1.0])];
    let got = retrieve_neighbors(&hot, 2).unwrap();
    assert_eq!(got["y"], vec!["x", "z"]);

    assert!(matches!(
        retrieve_neighbors(&hot, 3),
        Err(Error::TooFewImages { needed: 4, found: 3 })
    ));
}
