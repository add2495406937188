//! L1 feature matching and the k-nearest-neighbor vote.
//!
//! Neighbors are ranked by `(distance, source id)`, which makes selection
//! independent of training-list order. A vote tie between classes goes to
//! the class whose voting neighbors have the smallest summed distance, then
//! to the lexicographically smallest label.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{FeatureVector, LabeledFeature};
use crate::fsutil::{fmt_f64, write_atomic};

/// Sum of absolute coordinate differences, accumulated left to right.
pub fn l1_distance(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    a.check_comparable(b)?;
    Ok(a.values()
        .iter()
        .zip(b.values())
        .fold(0.0, |acc, (x, y)| acc + (x - y).abs()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: String,
    /// Source ids of the `k` nearest samples, nearest first.
    pub neighbor_ids: Vec<String>,
    pub distances: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct KnnModel {
    train: Vec<LabeledFeature>,
    k: usize,
}

impl KnnModel {
    pub fn new(train: Vec<LabeledFeature>, k: usize) -> Result<Self> {
        let first = train
            .first()
            .ok_or_else(|| Error::invalid("k-NN model needs at least one training sample"))?;
        if k == 0 || k > train.len() {
            return Err(Error::invalid(format!(
                "k must be in 1..={}, got {k}",
                train.len()
            )));
        }
        let mut seen = HashSet::new();
        for s in &train {
            first.feature.check_comparable(&s.feature)?;
            if !seen.insert(s.source.as_str()) {
                return Err(Error::Validation(vec![format!(
                    "duplicate training source id {:?}",
                    s.source
                )]));
            }
        }
        Ok(Self { train, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn train(&self) -> &[LabeledFeature] {
        &self.train
    }

    pub fn classify(&self, query: &FeatureVector) -> Result<Prediction> {
        let mut ranked = self
            .train
            .iter()
            .map(|s| Ok((l1_distance(&s.feature, query)?, s)))
            .collect::<Result<Vec<_>>>()?;
        let by_rank = |a: &(f64, &LabeledFeature), b: &(f64, &LabeledFeature)| {
            a.0.total_cmp(&b.0)
                .then_with(|| a.1.source.cmp(&b.1.source))
        };
        if self.k < ranked.len() {
            ranked.select_nth_unstable_by(self.k - 1, by_rank);
            ranked.truncate(self.k);
        }
        ranked.sort_unstable_by(by_rank);

        // label -> (votes, summed distance)
        let mut tally: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
        for (d, s) in &ranked {
            let e = tally.entry(s.label.as_str()).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += d;
        }
        let label = tally
            .iter()
            .min_by(|a, b| {
                b.1 .0
                    .cmp(&a.1 .0)
                    .then_with(|| a.1 .1.total_cmp(&b.1 .1))
                    .then_with(|| a.0.cmp(b.0))
            })
            .map(|(l, _)| (*l).to_owned())
            .expect("k >= 1");
        Ok(Prediction {
            label,
            neighbor_ids: ranked.iter().map(|(_, s)| s.source.clone()).collect(),
            distances: ranked.iter().map(|(d, _)| *d).collect(),
        })
    }
}

/// Classifies every query, in parallel, preserving input order.
pub fn classify_batch(model: &KnnModel, queries: &[FeatureVector]) -> Result<Vec<Prediction>> {
    queries
        .par_iter()
        .enumerate()
        .map(|(index, q)| {
            model.classify(q).map_err(|e| Error::Query {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Renders predictions as CSV with header
/// `source,label,predicted,neighbors,distances`. Neighbor ids and distances
/// are `|`-joined, nearest first.
pub fn format_predictions(queries: &[LabeledFeature], preds: &[Prediction]) -> Result<String> {
    if queries.len() != preds.len() {
        return Err(Error::invalid(format!(
            "{} queries but {} predictions",
            queries.len(),
            preds.len()
        )));
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::invalid(e.to_string());
    w.write_record(["source", "label", "predicted", "neighbors", "distances"])
        .map_err(csv_err)?;
    for (q, p) in queries.iter().zip(preds) {
        let dists: Vec<String> = p.distances.iter().map(|&d| fmt_f64(d)).collect();
        w.write_record([
            q.source.as_str(),
            q.label.as_str(),
            p.label.as_str(),
            &p.neighbor_ids.join("|"),
            &dists.join("|"),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_predictions(
    path: impl AsRef<Path>,
    queries: &[LabeledFeature],
    preds: &[Prediction],
) -> Result<()> {
    write_atomic(
        path.as_ref(),
        format_predictions(queries, preds)?.as_bytes(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Method;
    use crate::rng::SplitMix64;
    use crate::synth::oracle;
    use proptest::prelude::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(Method::Stddev, v.to_vec()).unwrap()
    }

    fn sample(v: &[f64], label: &str, id: &str) -> LabeledFeature {
        LabeledFeature::new(fv(v), label, id)
    }

    #[test]
    fn distance_examples() {
        assert_eq!(
            l1_distance(&fv(&[1.0, 2.0, 5.0]), &fv(&[1.0, 2.0, 5.0])).unwrap(),
            0.0
        );
        assert_eq!(
            l1_distance(&fv(&[1.0, 2.0, 5.0]), &fv(&[4.0, 2.0, 3.0])).unwrap(),
            5.0
        );
        assert_eq!(
            l1_distance(&fv(&[4.0, 2.0, 3.0]), &fv(&[1.0, 2.0, 5.0])).unwrap(),
            5.0
        );
    }

    #[test]
    fn distance_rejects_incomparable() {
        assert!(matches!(
            l1_distance(&fv(&[1.0]), &fv(&[1.0, 2.0])),
            Err(Error::DimMismatch { left: 1, right: 2 })
        ));
        let g = FeatureVector::new(Method::Gabor, vec![1.0]).unwrap();
        assert!(matches!(
            l1_distance(&fv(&[1.0]), &g),
            Err(Error::MethodMismatch { .. })
        ));
    }

    #[test]
    fn exact_match_wins() {
        let m = KnnModel::new(
            vec![sample(&[1.0, 1.0], "A", "a"), sample(&[3.0, 0.0], "B", "b")],
            1,
        )
        .unwrap();
        let p = m.classify(&fv(&[3.0, 0.0])).unwrap();
        assert_eq!(p.label, "B");
        assert_eq!(p.distances, vec![0.0]);
    }

    #[test]
    fn two_point_hand_example() {
        let m = KnnModel::new(
            vec![
                sample(&[0.0, 0.0], "A", "a"),
                sample(&[10.0, 10.0], "B", "b"),
            ],
            1,
        )
        .unwrap();
        let p = m.classify(&fv(&[1.0, 2.0])).unwrap();
        assert_eq!(p.label, "A");
        assert_eq!(p.distances, vec![3.0]);
        let m2 = KnnModel::new(m.train().to_vec(), 2).unwrap();
        assert_eq!(
            m2.classify(&fv(&[1.0, 2.0])).unwrap().distances,
            vec![3.0, 17.0]
        );
    }

    #[test]
    fn majority_of_three() {
        let m = KnnModel::new(
            vec![
                sample(&[1.0], "A", "1"),
                sample(&[2.0], "B", "2"),
                sample(&[3.0], "B", "3"),
            ],
            3,
        )
        .unwrap();
        let p = m.classify(&fv(&[0.0])).unwrap();
        assert_eq!(p.label, "B");
        assert_eq!(p.neighbor_ids, vec!["1", "2", "3"]);
    }

    #[test]
    fn vote_ties() {
        // One vote each: B at 1, A at 2 -> B by summed distance.
        let m =
            KnnModel::new(vec![sample(&[1.0], "B", "x"), sample(&[-2.0], "A", "y")], 2).unwrap();
        assert_eq!(m.classify(&fv(&[0.0])).unwrap().label, "B");
        // Equal distances and votes -> lexicographic label.
        let m =
            KnnModel::new(vec![sample(&[1.0], "B", "x"), sample(&[-1.0], "A", "y")], 2).unwrap();
        assert_eq!(m.classify(&fv(&[0.0])).unwrap().label, "A");
    }

    #[test]
    fn boundary_ties_use_source_id() {
        let m =
            KnnModel::new(vec![sample(&[1.0], "B", "z"), sample(&[-1.0], "A", "a")], 1).unwrap();
        let p = m.classify(&fv(&[0.0])).unwrap();
        assert_eq!((p.label.as_str(), p.neighbor_ids[0].as_str()), ("A", "a"));
    }

    #[test]
    fn predictions_csv() {
        let train = vec![
            sample(&[0.0, 0.0], "A", "a0"),
            sample(&[10.0, 10.0], "B", "b0"),
        ];
        let model = KnnModel::new(train, 2).unwrap();
        let queries = vec![sample(&[1.0, 2.0], "A", "q,1")];
        let preds = classify_batch(&model, &[queries[0].feature.clone()]).unwrap();
        let text = format_predictions(&queries, &preds).unwrap();
        assert_eq!(
            text,
            "source,label,predicted,neighbors,distances\n\"q,1\",A,A,a0|b0,3.0|17.0\n"
        );
        assert!(format_predictions(&queries, &[]).is_err());
    }

    #[test]
    fn model_validation() {
        assert!(KnnModel::new(vec![], 1).is_err());
        assert!(KnnModel::new(vec![sample(&[1.0], "A", "a")], 2).is_err());
        assert!(KnnModel::new(vec![sample(&[1.0], "A", "a")], 0).is_err());
        assert!(KnnModel::new(
            vec![sample(&[1.0], "A", "a"), sample(&[1.0, 2.0], "A", "b")],
            1
        )
        .is_err());
        assert!(
            KnnModel::new(vec![sample(&[1.0], "A", "a"), sample(&[2.0], "B", "a")], 1).is_err()
        );
        let m = KnnModel::new(vec![sample(&[1.0], "A", "a")], 1).unwrap();
        assert!(m.classify(&fv(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn batch_matches_single_calls() {
        let mut rng = SplitMix64::new(4);
        let train: Vec<_> = (0..50)
            .map(|i| {
                sample(
                    &[rng.next_f64(), rng.next_f64()],
                    ["A", "B", "C"][i % 3],
                    &format!("t{i}"),
                )
            })
            .collect();
        let model = KnnModel::new(train, 3).unwrap();
        assert!(classify_batch(&model, &[]).unwrap().is_empty());
        let queries: Vec<_> = (0..10)
            .map(|_| fv(&[rng.next_f64(), rng.next_f64()]))
            .collect();
        let batch = classify_batch(&model, &queries).unwrap();
        for (q, p) in queries.iter().zip(&batch) {
            assert_eq!(&model.classify(q).unwrap(), p);
        }
        let bad = vec![fv(&[0.0, 0.0]), fv(&[0.0])];
        match classify_batch(&model, &bad) {
            Err(Error::Query { index, .. }) => assert_eq!(index, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn batch_matches_oracle() {
        let mut rng = SplitMix64::new(8);
        let train: Vec<_> = (0..100)
            .map(|i| {
                let v: Vec<f64> = (0..6).map(|_| rng.next_f64()).collect();
                sample(&v, ["A", "B", "C"][rng.below(3)], &format!("t{i:03}"))
            })
            .collect();
        for k in [1, 3, 5] {
            let model = KnnModel::new(train.clone(), k).unwrap();
            let queries: Vec<_> = (0..40)
                .map(|_| fv(&(0..6).map(|_| rng.next_f64()).collect::<Vec<_>>()))
                .collect();
            for (q, p) in queries
                .iter()
                .zip(classify_batch(&model, &queries).unwrap())
            {
                let o = oracle::oracle_nn(&train, q, k);
                assert_eq!(o.label, p.label);
                assert_eq!(o.distances, p.distances);
                assert_eq!(o.neighbor_ids, p.neighbor_ids);
            }
        }
    }

    #[test]
    fn leave_in_is_perfect() {
        let mut rng = SplitMix64::new(12);
        let train: Vec<_> = (0..60)
            .map(|i| {
                sample(
                    &[rng.next_f64(), rng.next_f64(), rng.next_f64()],
                    ["A", "B"][i % 2],
                    &format!("s{i}"),
                )
            })
            .collect();
        let model = KnnModel::new(train.clone(), 1).unwrap();
        for s in &train {
            assert_eq!(model.classify(&s.feature).unwrap().label, s.label);
        }
    }

    proptest! {
        #[test]
        fn l1_is_a_metric(seed: u64) {
            let mut rng = SplitMix64::new(seed);
            let mut v = || fv(&(0..8).map(|_| rng.next_f64() * 100.0 - 50.0).collect::<Vec<_>>());
            let (a, b, c) = (v(), v(), v());
            let ab = l1_distance(&a, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, l1_distance(&b, &a).unwrap());
            prop_assert_eq!(l1_distance(&a, &a).unwrap(), 0.0);
            prop_assert!(ab > 0.0);
            let slack = l1_distance(&a, &c).unwrap() + l1_distance(&c, &b).unwrap() - ab;
            prop_assert!(slack >= -1e-9);
        }

        #[test]
        fn permutation_and_duplicates_do_not_matter(seed: u64) {
            let mut rng = SplitMix64::new(seed);
            let mut train: Vec<_> = (0..30)
                .map(|i| sample(&[rng.below(5) as f64, rng.below(5) as f64], ["A", "B", "C"][rng.below(3)], &format!("t{i:02}")))
                .collect();
            let q = fv(&[rng.below(5) as f64, rng.below(5) as f64]);
            for k in [1, 4] {
                let base = KnnModel::new(train.clone(), k).unwrap().classify(&q).unwrap();
                let mut shuffled = train.clone();
                rng.shuffle(&mut shuffled);
                prop_assert_eq!(&KnnModel::new(shuffled, k).unwrap().classify(&q).unwrap(), &base);
            }
            let one = KnnModel::new(train.clone(), 1).unwrap().classify(&q).unwrap();
            let dup = train[rng.below(train.len())].clone();
            train.push(LabeledFeature { source: format!("{}-dup", dup.source), ..dup });
            prop_assert_eq!(KnnModel::new(train, 1).unwrap().classify(&q).unwrap().label, one.label);
        }
    }
}
