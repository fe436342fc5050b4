use std::collections::BTreeSet;

use modalpf::resonance::detect_resonances;
use modalpf::Complex64;
use proptest::prelude::*;

/// Every exponent vector with entries in `0..=max`, by odometer.
fn all_exponents(n: usize, max: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut e = vec![0u32; n];
    loop {
        out.push(e.clone());
        let mut k = 0;
        loop {
            if k == n {
                return out;
            }
            if e[k] < max {
                e[k] += 1;
                break;
            }
            e[k] = 0;
            k += 1;
        }
    }
}

fn brute_force(l: &[Complex64], max_order: u32, tol: f64) -> BTreeSet<(u32, usize, Vec<u32>)> {
    let mut set = BTreeSet::new();
    for e in all_exponents(l.len(), max_order) {
        let order: u32 = e.iter().sum();
        if !(2..=max_order).contains(&order) {
            continue;
        }
        let mut dot = Complex64::new(0.0, 0.0);
        for (k, &p) in e.iter().enumerate() {
            dot += l[k] * p as f64;
        }
        for (s, ls) in l.iter().enumerate() {
            if (dot - ls).norm() <= tol {
                set.insert((order, s, e.clone()));
            }
        }
    }
    set
}

fn detected(l: &[Complex64], max_order: u32, tol: f64) -> Vec<(u32, usize, Vec<u32>)> {
    detect_resonances(l, max_order, tol)
        .unwrap()
        .entries
        .iter()
        .map(|e| (e.order, e.mode, e.m.exponents().to_vec()))
        .collect()
}

fn lattice_lambdas() -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-6i32..=6, -2i32..=2), 1..=4).prop_map(|v| {
        v.into_iter()
            .map(|(re, im)| Complex64::new(re as f64 / 2.0, im as f64))
            .collect()
    })
}

proptest! {
    #[test]
    fn matches_brute_force(l in lattice_lambdas(), max_order in 2u32..=5) {
        let found = detected(&l, max_order, 1e-9);
        let oracle = brute_force(&l, max_order, 1e-9);
        let as_set: BTreeSet<_> = found.iter().cloned().collect();
        prop_assert_eq!(as_set.len(), found.len());
        prop_assert_eq!(&as_set, &oracle);
        // Ordered by order, then mode.
        for w in found.windows(2) {
            prop_assert!((w[0].0, w[0].1) <= (w[1].0, w[1].1));
        }
    }

    #[test]
    fn raising_the_order_only_appends(l in lattice_lambdas(), max_order in 2u32..=5) {
        let lo = detected(&l, max_order, 1e-9);
        let hi = detected(&l, max_order + 1, 1e-9);
        prop_assert_eq!(&hi[..lo.len()], &lo[..]);
        prop_assert!(hi[lo.len()..].iter().all(|e| e.0 == max_order + 1));
    }

    #[test]
    fn conjugation_permutes_resonances(
        pairs in prop::collection::vec((-4i32..=4, 1i32..=3), 1..=2),
        reals in prop::collection::vec(-4i32..=4, 0..=1),
        max_order in 2u32..=4,
    ) {
        let mut l = Vec::new();
        let mut partner = Vec::new();
        for (re, im) in &pairs {
            let z = Complex64::new(*re as f64 / 2.0, *im as f64);
            partner.push(l.len() + 1);
            partner.push(l.len());
            l.push(z);
            l.push(z.conj());
        }
        for re in &reals {
            partner.push(l.len());
            l.push(Complex64::new(*re as f64 / 2.0, 0.0));
        }
        let found: BTreeSet<_> = detected(&l, max_order, 1e-9).into_iter().collect();
        for (order, s, m) in &found {
            let mut mc = vec![0; m.len()];
            for (k, &p) in m.iter().enumerate() {
                mc[partner[k]] = p;
            }
            prop_assert!(found.contains(&(*order, partner[*s], mc)));
        }
    }
}

#[test]
fn spectrum_examples() {
    let real = |v: &[f64]| {
        v.iter()
            .map(|&x| Complex64::new(x, 0.0))
            .collect::<Vec<_>>()
    };
    assert_eq!(
        detected(&real(&[2.0, 1.0]), 10, 1e-9),
        vec![(2, 0, vec![0, 2])]
    );
    assert!(detected(&real(&[3.0, 2.0]), 10, 1e-9).is_empty());
    assert_eq!(
        detected(&real(&[1.0, -1.0]), 3, 1e-9),
        vec![(3, 0, vec![2, 1]), (3, 1, vec![1, 2])]
    );
}
