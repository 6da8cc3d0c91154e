use hsd::linalg::{dot, norm};
use hsd::sparse_layer::{
    cost, encode_mp, encode_mp_traced, encode_mp_with_gram, hebbian_update, learn_dictionary, Dictionary,
    HomeostasisState, SparseCode, SparseLearnConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_dict(rng: &mut impl Rng, m: usize, n: usize) -> Dictionary {
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|_| loop {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if norm(&v) > 0.1 {
                break v;
            }
        })
        .collect();
    Dictionary::from_rows(&rows).unwrap()
}

/// Plain greedy pursuit: exhaustive argmax of |⟨r, φ_i⟩| every step.
fn oracle_selections(dict: &Dictionary, x: &[f64], n0: usize) -> Vec<usize> {
    let mut r = x.to_vec();
    let mut out = Vec::new();
    for _ in 0..n0 {
        if norm(&r) < 1e-9 {
            break;
        }
        let mut best = None::<(usize, f64)>;
        for i in 0..dict.atom_count() {
            let c = dot(&r, dict.atom(i));
            if best.map_or(true, |b| c.abs() > b.1.abs()) {
                best = Some((i, c));
            }
        }
        let Some((i, c)) = best else { break };
        if c.abs() <= 1e-9 * norm(&r) {
            break;
        }
        for (rv, a) in r.iter_mut().zip(dict.atom(i)) {
            *rv -= c * a;
        }
        out.push(i);
    }
    out
}

#[test]
fn small_instance_matches_greedy_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dict = random_dict(&mut rng, 4, 3);
    let x: Vec<f64> = (0..3).map(|k| 0.7 * dict.atom(0)[k] + 0.2 * dict.atom(2)[k]).collect();
    let homeo = HomeostasisState::new(4, 0.01).unwrap();
    let (_, trace) = encode_mp_traced(&dict, &homeo, &x, 2, false).unwrap();
    assert_eq!(trace.selections, oracle_selections(&dict, &x, 2));
}

#[test]
fn learned_cost_decreases() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let basis = random_dict(&mut rng, 6, 16);
    let samples: Vec<Vec<f64>> = (0..120)
        .map(|_| {
            let mut v = vec![0.0; 16];
            for _ in 0..2 {
                let a = rng.gen_range(0..6);
                let c = rng.gen_range(0.5..1.5);
                for (vi, b) in v.iter_mut().zip(basis.atom(a)) {
                    *vi += c * b;
                }
            }
            v
        })
        .collect();
    let cfg = SparseLearnConfig { n0: 2, epochs: 8, ..Default::default() };
    let learned = learn_dictionary(&samples, 6, &cfg).unwrap();
    let costs = &learned.log.epoch_mean_cost;
    for w in costs.windows(2) {
        assert!(w[1] <= w[0] * 1.05, "cost rose from {} to {}", w[0], w[1]);
    }
    assert!(costs.last().unwrap() < costs.first().unwrap());
}

fn instance() -> impl Strategy<Value = (u64, usize, usize, usize)> {
    (any::<u64>(), 2usize..=8, 1usize..=6, 1usize..=4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn mp_invariants((seed, n, m, n0) in instance(), homeostasis in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dict = random_dict(&mut rng, m, n);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut homeo = HomeostasisState::new(m, 0.1).unwrap();
        // give the homeostasis some history so z is not flat
        for _ in 0..5 {
            let c = dict.correlations(&x);
            let code = encode_mp(&dict, &homeo, &x, n0, false).unwrap();
            hsd::sparse_layer::homeostasis_update(&mut homeo, &code, &c).unwrap();
        }
        let (code, trace) = encode_mp_traced(&dict, &homeo, &x, n0, homeostasis).unwrap();
        prop_assert!(code.nnz() <= n0);
        let mut idx: Vec<usize> = code.entries().iter().map(|e| e.0).collect();
        idx.sort_unstable();
        idx.dedup();
        prop_assert_eq!(idx.len(), code.nnz());
        prop_assert!(code.entries().iter().all(|e| e.0 < m && e.1.is_finite()));
        let mut prev = norm(&x);
        for &r in &trace.residual_norms {
            prop_assert!(r <= prev + 1e-12);
            prev = r;
        }
        for &o in &trace.post_step_overlap {
            prop_assert!(o.abs() < 1e-6);
        }
        let gram = dict.gram();
        let fast = encode_mp_with_gram(&dict, &gram, &homeo, &x, n0, homeostasis).unwrap();
        prop_assert_eq!(fast.entries().iter().map(|e| e.0).collect::<Vec<_>>(), code.entries().iter().map(|e| e.0).collect::<Vec<_>>());
        for (a, b) in fast.entries().iter().zip(code.entries()) {
            prop_assert!((a.1 - b.1).abs() < 1e-9);
        }
    }

    #[test]
    fn mp_beats_every_single_atom_code((seed, n, m, n0) in instance()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dict = random_dict(&mut rng, m, n);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let homeo = HomeostasisState::new(m, 0.01).unwrap();
        let code = encode_mp(&dict, &homeo, &x, n0, false).unwrap();
        let greedy = cost(&dict, &code, &x, 0.0, 1.0).unwrap();
        for i in 0..m {
            let single = SparseCode::from_entries([(i, dot(&x, dict.atom(i)))]);
            prop_assert!(greedy <= cost(&dict, &single, &x, 0.0, 1.0).unwrap() + 1e-12);
        }
    }

    #[test]
    fn cost_matches_direct_formula((seed, n, m, _) in instance(), lambda in 0.0f64..3.0, sigma in 0.2f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dict = random_dict(&mut rng, m, n);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for i in 0..m {
            if rng.gen_bool(0.5) {
                entries.push((i, rng.gen_range(-1.0..1.0)));
            }
        }
        let code = SparseCode::from_entries(entries.clone());
        let mut err = 0.0;
        for k in 0..n {
            let rec: f64 = entries.iter().map(|&(i, a)| a * dict.atom(i)[k]).sum();
            err += (x[k] - rec).powi(2);
        }
        let expected = err / (2.0 * sigma * sigma) + lambda * entries.len() as f64;
        prop_assert!((cost(&dict, &code, &x, lambda, sigma).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn hebbian_keeps_unit_atoms((seed, n, m, n0) in instance(), steps in 1usize..20, eta in 0.01f64..0.9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dict = random_dict(&mut rng, m, n);
        let homeo = HomeostasisState::new(m, 0.01).unwrap();
        for _ in 0..steps {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let code = encode_mp(&dict, &homeo, &x, n0, false).unwrap();
            hebbian_update(&mut dict, &code, &x, eta).unwrap();
        }
        for i in 0..m {
            prop_assert!((norm(dict.atom(i)) - 1.0).abs() < 1e-6);
        }
    }
}
