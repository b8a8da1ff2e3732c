use finsql_core::vecindex::{EmbeddedEntry, HashingEmbedder, Namespace, VectorIndex};
use finsql_core::Strategy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::sync::Arc;

const DIM: usize = 16;

fn brute_force(entries: &[(String, Vec<f64>)], q: &[f64], k: usize) -> Vec<String> {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let qn = norm(q);
    let mut scored: Vec<(f64, &str)> = entries
        .iter()
        .map(|(id, v)| {
            let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            ((dot / (norm(v) * qn)).clamp(-1.0, 1.0), id.as_str())
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
    scored.into_iter().take(k).map(|(_, id)| id.to_string()).collect()
}

fn random_vector(rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..DIM).map(|_| rng.gen_range(-3..=3) as f64).collect();
        if v.iter().any(|x| *x != 0.0) {
            return v;
        }
    }
}

fn check(strategy: Strategy) {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let index = VectorIndex::new(Arc::new(HashingEmbedder::default())).with_strategy(strategy);
    let mut entries: Vec<(String, Vec<f64>)> = Vec::new();
    for i in 0..1000 {
        // Every tenth entry repeats an earlier vector so ties occur.
        let v = if i % 10 == 9 {
            entries[rng.gen_range(0..entries.len())].1.clone()
        } else {
            random_vector(&mut rng)
        };
        let id = format!("e{:04}", rng.gen_range(0..1_000_000) * 1000 + i);
        index
            .upsert(EmbeddedEntry {
                namespace: Namespace::Account,
                id: id.clone(),
                surface_text: id.clone(),
                vector: v.clone(),
                metadata: BTreeMap::new(),
            })
            .unwrap();
        entries.push((id, v));
    }

    let mut mismatches = 0;
    for trial in 0..150 {
        let q = if trial % 5 == 0 {
            entries[rng.gen_range(0..entries.len())].1.clone()
        } else {
            random_vector(&mut rng)
        };
        let k = rng.gen_range(1..=25);
        let got: Vec<String> = index
            .search_vector(Namespace::Account, &q, k)
            .unwrap()
            .into_iter()
            .map(|c| c.id)
            .collect();
        if got != brute_force(&entries, &q, k) {
            mismatches += 1;
        }
    }
    assert_eq!(mismatches, 0);
}

#[test]
fn sequential_search_matches_brute_force() {
    check(Strategy::Sequential);
}

#[test]
fn parallel_search_matches_brute_force() {
    check(Strategy::Parallel);
}
