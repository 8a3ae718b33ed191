mod common;

use std::collections::BTreeSet;

use cooccur::corpus::{
    clean, parse_annotations, stratified_split, write_corpus_tsv, AnnotationFormat, BBox,
    LabelSource,
};
use cooccur::evalstats::{enumerate_communities, evaluate_network};
use cooccur::netbuild::{build_network, build_network_or_isolated, BuildParams};
use cooccur::recognition::{
    apply_predictions, parse_predictions, predictions_of, recognize, top1_error, write_predictions,
    RecognizerConfig,
};
use cooccur::synthgen::{generate, SynthParams};
use cooccur::{Corpus, FaceInstance, IdentityId, PhotoId, Quality, Split};
use proptest::prelude::*;
use rand::Rng;

use common::{random_corpus, rng};

/// Random corpus with albums, boxes, rejected and unlabeled faces mixed in.
fn rich_corpus(seed: u64) -> Corpus {
    let mut r = rng(seed);
    let base = random_corpus(&mut r, 10, 20);
    let faces: Vec<FaceInstance> = base
        .instances()
        .iter()
        .map(|f| {
            let mut f = f.clone();
            if r.gen_bool(0.3) {
                f.photo = PhotoId::new(Some(format!("al{}", r.gen_range(0..3))), f.photo.photo())
                    .unwrap();
            }
            if r.gen_bool(0.5) {
                f.bbox = Some(
                    BBox::new(
                        r.gen_range(-5..50),
                        r.gen_range(0..50),
                        r.gen_range(1..40),
                        r.gen_range(1..40),
                    )
                    .unwrap(),
                );
            }
            if r.gen_bool(0.15) {
                f.quality = Quality::Rejected;
                if r.gen_bool(0.5) {
                    f.true_identity = None;
                }
            }
            f.split = [Split::Train, Split::Test, Split::Unassigned][r.gen_range(0..3)];
            f
        })
        .collect();
    Corpus::new(faces).unwrap()
}

fn ids(corpus: &Corpus, source: LabelSource) -> Vec<IdentityId> {
    corpus.index(source).identities().cloned().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corpus_tsv_round_trips(seed in any::<u64>()) {
        let corpus = rich_corpus(seed);
        let mut buf = Vec::new();
        write_corpus_tsv(&corpus, &mut buf).unwrap();
        let back = parse_annotations(buf.as_slice(), AnnotationFormat::GenericTsv).unwrap();
        prop_assert_eq!(back, corpus);
    }

    #[test]
    fn clean_is_idempotent_and_keeps_only_usable(seed in any::<u64>()) {
        let once = clean(&rich_corpus(seed));
        prop_assert!(once.instances().iter().all(|f| f.quality == Quality::Usable));
        prop_assert_eq!(clean(&once), once);
    }

    #[test]
    fn split_partitions_every_class(seed in any::<u64>(), frac in 0.05f64..0.95) {
        let corpus = clean(&rich_corpus(seed));
        let corpus = Corpus::new(
            corpus.instances().iter().filter(|f| f.true_identity.is_some()).cloned().collect(),
        ).unwrap();
        let (train, test) = stratified_split(&corpus, frac, seed).unwrap();
        let strip = |c: &Corpus| -> BTreeSet<String> { c.instances().iter().map(|f| f.key()).collect() };
        let (a, b) = (strip(&train), strip(&test));
        prop_assert!(a.is_disjoint(&b));
        prop_assert_eq!(a.union(&b).cloned().collect::<BTreeSet<_>>(), strip(&corpus));
        prop_assert!(train.instances().iter().all(|f| f.split == Split::Train));
        prop_assert!(test.instances().iter().all(|f| f.split == Split::Test));
        for (id, photos) in &corpus.index(LabelSource::True).by_identity {
            let n = photos.len();
            let k = train.index(LabelSource::True).photos_of(id).map_or(0, |p| p.len());
            prop_assert!(n < 2 || k >= 1);
        }
        let again = stratified_split(&corpus, frac, seed).unwrap();
        prop_assert_eq!(again, (train, test));
    }

    #[test]
    fn oracle_predictions_have_zero_error_and_round_trip(seed in any::<u64>()) {
        let corpus = clean(&rich_corpus(seed));
        let recognized = recognize(&corpus, &RecognizerConfig::oracle()).unwrap();
        let records = predictions_of(&recognized);
        if records.is_empty() {
            return Ok(());
        }
        prop_assert_eq!(top1_error(&records, &corpus).unwrap(), 0.0);
        let mut buf = Vec::new();
        write_predictions(&records, &mut buf).unwrap();
        let parsed = parse_predictions(buf.as_slice()).unwrap();
        prop_assert_eq!(&parsed, &records);
        prop_assert_eq!(apply_predictions(&corpus, &parsed).unwrap(), recognized);
    }

    #[test]
    fn generator_output_is_valid_and_recoverable(seed in any::<u64>(), n in 1usize..6) {
        let params = SynthParams { n_communities: n, seed, ..Default::default() };
        let s = generate(&params).unwrap();
        prop_assert_eq!(Corpus::new(s.corpus.instances().to_vec()).unwrap(), s.corpus.clone());
        let found: BTreeSet<BTreeSet<IdentityId>> =
            enumerate_communities(&s.corpus, &BuildParams::default(), &ids(&s.corpus, LabelSource::True))
                .unwrap()
                .iter()
                .map(|g| g.member_set())
                .collect();
        let planted: BTreeSet<BTreeSet<IdentityId>> = s.communities().into_iter().collect();
        prop_assert_eq!(found, planted);
        for (id, &c) in &s.planted {
            prop_assert!(params.sizes.contains(&s.communities()[c].len()), "{} in community {}", id, c);
        }
    }

    #[test]
    fn threshold_zero_communities_partition_identities(seed in any::<u64>()) {
        let corpus = random_corpus(&mut rng(seed), 20, 30);
        let all = ids(&corpus, LabelSource::True);
        let communities = enumerate_communities(&corpus, &BuildParams::default(), &all).unwrap();
        let mut seen = BTreeSet::new();
        for g in &communities {
            for m in g.members() {
                prop_assert!(seen.insert(m.clone()), "{} in two communities", m);
            }
        }
        prop_assert_eq!(seen, all.into_iter().collect::<BTreeSet<_>>());
    }

    #[test]
    fn raising_the_threshold_only_splits(seed in any::<u64>(), t in 0u32..3) {
        let corpus = random_corpus(&mut rng(seed), 20, 60);
        let all = ids(&corpus, LabelSource::True);
        let low = enumerate_communities(&corpus, &BuildParams::with_threshold(t), &all).unwrap();
        let high = enumerate_communities(&corpus, &BuildParams::with_threshold(t + 1), &all).unwrap();
        for h in &high {
            let hs = h.member_set();
            prop_assert!(low.iter().any(|l| hs.is_subset(&l.member_set())));
        }
    }

    #[test]
    fn recall_against_fixed_truth_never_rises(seed in any::<u64>(), acc in 0.5f64..1.0) {
        let corpus = random_corpus(&mut rng(seed), 15, 60);
        let recognized = recognize(&corpus, &RecognizerConfig::noise(acc, seed)).unwrap();
        for target in ids(&corpus, LabelSource::True) {
            let truth = build_network(&recognized, &target, &BuildParams::default()).unwrap();
            let mut last: Option<f64> = None;
            for t in 0..=5 {
                let params = BuildParams { threshold: t, max_layers: None, label_source: LabelSource::Predicted };
                let predicted = build_network_or_isolated(&recognized, &target, &params).unwrap();
                let recall = evaluate_network(&predicted, &truth).unwrap().recall();
                if let (Some(prev), Some(now)) = (last, recall) {
                    prop_assert!(now <= prev, "{} recall {} -> {} at {}", target, prev, now, t);
                }
                last = recall;
            }
        }
    }
}
