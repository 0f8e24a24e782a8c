//! Shared helpers for the integration suites: random fixtures and a
//! central-difference gradient oracle.

// each test target compiles its own copy and uses a subset
#![allow(dead_code)]

use graphfsl::param::ParamTable;
use graphfsl::walks::NeighborhoodMap;
use rand::Rng;

/// Central finite differences of `f` over every table entry, flattened
/// row-major. The closure must be a pure function of the table.
pub fn fd_grad<F>(mut f: F, at: &ParamTable<f64>, step: f64) -> Vec<f64>
where
    F: FnMut(&ParamTable<f64>) -> f64,
{
    let mut out = Vec::with_capacity(at.data().len());
    let mut probe = at.clone();
    for i in 0..at.data().len() {
        let orig = at.data()[i];
        probe.data_mut()[i] = orig + step;
        let hi = f(&probe);
        probe.data_mut()[i] = orig - step;
        let lo = f(&probe);
        probe.data_mut()[i] = orig;
        out.push((hi - lo) / (2.0 * step));
    }
    out
}

/// Max-norm relative error between two flattened gradients.
pub fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    let scale = want
        .iter()
        .map(|v| v.abs())
        .fold(0.0f64, f64::max)
        .max(1e-6);
    got.iter()
        .zip(want)
        .map(|(g, w)| (g - w).abs())
        .fold(0.0f64, f64::max)
        / scale
}

/// Random all-trainable table with rows kept away from the origin so the
/// cosine similarity stays smooth.
pub fn random_table(rng: &mut impl Rng, n: usize, d: usize) -> ParamTable<f64> {
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 0.5 {
            row[0] += 0.8;
        }
        rows.push(row);
    }
    let names = (0..n).map(|i| format!("r{i}")).collect();
    ParamTable::from_rows(names, &rows).unwrap()
}

/// Random neighborhood multiset over `n` nodes: up to 4 contexts per
/// source, repeats allowed, never the source itself.
pub fn random_nmap(rng: &mut impl Rng, n: usize) -> NeighborhoodMap {
    let mut pairs = Vec::new();
    for y in 0..n {
        for _ in 0..rng.random_range(0..=4usize) {
            let mut v = rng.random_range(0..n - 1);
            if v >= y {
                v += 1;
            }
            pairs.push((y, v));
        }
    }
    NeighborhoodMap::from_pairs(n, &pairs)
}
