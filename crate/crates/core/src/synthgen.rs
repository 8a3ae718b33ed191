//! Seeded synthetic corpora with planted, disjoint communities.
//!
//! Each community first receives a random spanning tree of two-person photos,
//! so it is connected at threshold 0, and then a number of random group photos
//! drawn only from its own members.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::{Corpus, FaceInstance, IdentityId, PhotoId};
use crate::error::{Error, Result};
use crate::rng::StreamKey;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub n_communities: usize,
    pub sizes: RangeInclusive<usize>,
    /// Group photos added on top of each community's spanning tree.
    pub photos_per_community: RangeInclusive<usize>,
    pub persons_per_photo: RangeInclusive<usize>,
    /// Chance that each generated group photo is followed by a solo photo.
    pub solo_photo_rate: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_communities: 10,
            sizes: 4..=8,
            photos_per_community: 5..=15,
            persons_per_photo: 2..=4,
            solo_photo_rate: 0.1,
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Params(m));
        if self.n_communities == 0 {
            return err("need at least one community".into());
        }
        for (name, r) in [
            ("sizes", &self.sizes),
            ("photos_per_community", &self.photos_per_community),
            ("persons_per_photo", &self.persons_per_photo),
        ] {
            if r.is_empty() {
                return err(format!("{name} range {r:?} is empty"));
            }
        }
        if *self.sizes.start() < 2 {
            return err("communities need at least 2 members".into());
        }
        if *self.persons_per_photo.start() < 2 {
            return err("group photos need at least 2 persons".into());
        }
        if self.persons_per_photo.end() > self.sizes.start() {
            return err(format!(
                "persons_per_photo up to {} exceeds the smallest community size {}",
                self.persons_per_photo.end(),
                self.sizes.start()
            ));
        }
        if !(0.0..=1.0).contains(&self.solo_photo_rate) {
            return err(format!(
                "solo_photo_rate {} outside [0, 1]",
                self.solo_photo_rate
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub corpus: Corpus,
    /// Planted community index of every identity.
    pub planted: BTreeMap<IdentityId, usize>,
}

impl SynthCorpus {
    /// Planted communities as member sets, ordered by index.
    pub fn communities(&self) -> Vec<BTreeSet<IdentityId>> {
        let mut out: BTreeMap<usize, BTreeSet<IdentityId>> = BTreeMap::new();
        for (id, &c) in &self.planted {
            out.entry(c).or_default().insert(id.clone());
        }
        out.into_values().collect()
    }
}

pub fn generate(params: &SynthParams) -> Result<SynthCorpus> {
    params.validate()?;
    let mut instances = Vec::new();
    let mut planted = BTreeMap::new();
    for ci in 0..params.n_communities {
        let mut rng = StreamKey::new(params.seed, "synthgen").int(ci as u64).rng();
        let size = rng.gen_range(params.sizes.clone());
        let members: Vec<IdentityId> = (0..size)
            .map(|mi| IdentityId::new(format!("c{ci:03}m{mi:03}")).expect("non-empty"))
            .collect();
        for m in &members {
            planted.insert(m.clone(), ci);
        }

        let mut photos: Vec<Vec<usize>> = Vec::new();
        let mut order: Vec<usize> = (0..size).collect();
        order.shuffle(&mut rng);
        for i in 1..size {
            let j = rng.gen_range(0..i);
            photos.push(vec![order[i], order[j]]);
        }
        let extra = rng.gen_range(params.photos_per_community.clone());
        for _ in 0..extra {
            let k = rng.gen_range(params.persons_per_photo.clone());
            photos.push(rand::seq::index::sample(&mut rng, size, k).into_vec());
        }

        let mut counter = 0usize;
        let mut emit = |people: &[usize], instances: &mut Vec<FaceInstance>| {
            let photo = PhotoId::new(None, format!("c{ci:03}_{counter:05}")).expect("valid key");
            counter += 1;
            for (fi, &m) in people.iter().enumerate() {
                instances.push(FaceInstance::labeled(
                    photo.clone(),
                    fi as u32,
                    members[m].clone(),
                ));
            }
        };
        for people in photos {
            emit(&people, &mut instances);
            if rng.gen_bool(params.solo_photo_rate) {
                let who = rng.gen_range(0..size);
                emit(&[who], &mut instances);
            }
        }
    }
    Ok(SynthCorpus {
        corpus: Corpus::new(instances)?,
        planted,
    })
}

pub fn write_planted_tsv<W: Write>(
    planted: &BTreeMap<IdentityId, usize>,
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "identity\tcommunity_index")?;
    for (id, c) in planted {
        writeln!(w, "{id}\t{c}")?;
    }
    Ok(())
}

pub fn read_planted_tsv<R: BufRead>(stream: R) -> Result<BTreeMap<IdentityId, usize>> {
    let mut out = BTreeMap::new();
    for (n, line) in stream.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
        if line.is_empty() || line == "identity\tcommunity_index" {
            continue;
        }
        let (id, c) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(lineno, "expected identity\\tcommunity_index"))?;
        let id = IdentityId::new(id).map_err(|e| Error::parse(lineno, e.to_string()))?;
        let c = c
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad community index {c:?}")))?;
        out.insert(id, c);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{write_corpus_tsv, LabelSource};
    use crate::evalstats::enumerate_communities;
    use crate::netbuild::BuildParams;

    #[test]
    fn planted_partition_is_recovered() {
        let params = SynthParams {
            n_communities: 2,
            sizes: 3..=3,
            photos_per_community: 4..=6,
            persons_per_photo: 2..=3,
            solo_photo_rate: 0.2,
            seed: 5,
        };
        let s = generate(&params).unwrap();
        let ids: Vec<IdentityId> = s.planted.keys().cloned().collect();
        let found: Vec<BTreeSet<IdentityId>> =
            enumerate_communities(&s.corpus, &BuildParams::default(), &ids)
                .unwrap()
                .iter()
                .map(|g| g.member_set())
                .collect();
        let mut planted = s.communities();
        planted.sort();
        let mut found = found;
        found.sort();
        assert_eq!(found, planted);
    }

    #[test]
    fn zero_solo_rate_means_no_solo_photos() {
        let s = generate(&SynthParams {
            solo_photo_rate: 0.0,
            ..Default::default()
        })
        .unwrap();
        assert!(s
            .corpus
            .index(LabelSource::True)
            .by_photo
            .values()
            .all(|ids| ids.len() >= 2));
    }

    #[test]
    fn same_seed_same_bytes() {
        let p = SynthParams {
            seed: 99,
            ..Default::default()
        };
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_corpus_tsv(&generate(&p).unwrap().corpus, &mut a).unwrap();
        write_corpus_tsv(&generate(&p).unwrap().corpus, &mut b).unwrap();
        assert_eq!(a, b);
        let mut c = Vec::new();
        write_corpus_tsv(
            &generate(&SynthParams { seed: 100, ..p }).unwrap().corpus,
            &mut c,
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn infeasible_params_rejected() {
        let bad = SynthParams {
            sizes: 2..=5,
            persons_per_photo: 2..=3,
            ..Default::default()
        };
        assert!(matches!(generate(&bad), Err(Error::Params(_))));
        #[allow(clippy::reversed_empty_ranges)]
        let empty = SynthParams {
            sizes: 5..=3,
            ..Default::default()
        };
        assert!(generate(&empty).is_err());
        assert!(generate(&SynthParams {
            n_communities: 0,
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn planted_file_round_trip() {
        let s = generate(&SynthParams::default()).unwrap();
        let mut buf = Vec::new();
        write_planted_tsv(&s.planted, &mut buf).unwrap();
        assert_eq!(read_planted_tsv(buf.as_slice()).unwrap(), s.planted);
    }
}
