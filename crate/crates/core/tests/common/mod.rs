#![allow(dead_code)]

use std::collections::BTreeSet;

use cooccur::{Corpus, IdentityId};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn id(s: &str) -> IdentityId {
    IdentityId::new(s).unwrap()
}

pub fn c0() -> Corpus {
    Corpus::from_photo_lists([
        ("p1", vec!["A", "B"]),
        ("p2", vec!["A", "C"]),
        ("p3", vec!["A", "B", "C"]),
        ("p4", vec!["B", "C"]),
        ("p5", vec!["A"]),
        ("p6", vec!["D", "E"]),
    ])
    .unwrap()
}

pub fn c0_tsv() -> String {
    let mut s = String::from("photo_id\tidentity\n");
    for (p, ids) in [
        ("p1", "AB"),
        ("p2", "AC"),
        ("p3", "ABC"),
        ("p4", "BC"),
        ("p5", "A"),
        ("p6", "DE"),
    ] {
        for c in ids.chars() {
            s.push_str(&format!("{p}\t{c}\n"));
        }
    }
    s
}

/// Random corpus with up to `max_ids` identities and `max_photos` photos of
/// 1–5 distinct people each.
pub fn random_corpus(rng: &mut ChaCha8Rng, max_ids: usize, max_photos: usize) -> Corpus {
    let n_ids = rng.gen_range(2..=max_ids);
    let n_photos = rng.gen_range(1..=max_photos);
    let lists: Vec<(String, Vec<String>)> = (0..n_photos)
        .map(|p| {
            let k = rng.gen_range(1..=5.min(n_ids));
            let people: BTreeSet<usize> = (0..k).map(|_| rng.gen_range(0..n_ids)).collect();
            (
                format!("ph{p:04}"),
                people.into_iter().map(|i| format!("id{i:02}")).collect(),
            )
        })
        .collect();
    Corpus::from_photo_lists(lists.iter().map(|(p, ids)| {
        (
            p.as_str(),
            ids.iter().map(String::as_str).collect::<Vec<_>>(),
        )
    }))
    .unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
