//! Episode hardness, run summaries, paired significance tests, correlation,
//! and a small 2D PCA for task-space plots. Everything here is f64: these
//! are analysis quantities, not training state.

use crate::error::{Error, Result};
use crate::reg::sim_eps;
use crate::scalar::Scalar;
use crate::tasks::Episode;

/// Clamp bound for per-query probabilities inside [`hardness`].
pub const HARDNESS_EPS: f64 = 1e-12;

/// Per-episode outcome row consumed by the paired tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskResult {
    pub seed: u64,
    pub accuracy: f64,
    pub loss: f64,
    pub hardness: f64,
}

/// Mean log-odds of misclassification under a plain prototype readout.
///
/// Prototypes are the support means; per query, p is the softmax weight of
/// the true class over negative squared distances (no temperature), clamped
/// to [eps, 1-eps]. Returns (omega, clamped) where `clamped` reports whether
/// any query hit the clamp.
pub fn hardness<S: Scalar>(episode: &Episode<S>) -> Result<(f64, bool)> {
    if episode.query.is_empty() {
        return Err(Error::Insufficient("hardness needs at least one query".into()));
    }
    let means = episode.support_means()?;
    let means: Vec<Vec<f64>> = means
        .iter()
        .map(|m| m.iter().map(|v| v.to_real()).collect())
        .collect();
    let mut acc = 0.0;
    let mut clamped = false;
    for q in &episode.query {
        let x: Vec<f64> = q.x.iter().map(|v| v.to_real()).collect();
        let logits: Vec<f64> = means
            .iter()
            .map(|m| sim_eps(crate::reg::SimilarityKind::NegSqEuclidean, &x, m))
            .collect();
        let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|&l| (l - mx).exp()).sum();
        let mut p = (logits[q.y] - mx).exp() / z;
        if p < HARDNESS_EPS {
            p = HARDNESS_EPS;
            clamped = true;
        } else if p > 1.0 - HARDNESS_EPS {
            p = 1.0 - HARDNESS_EPS;
            clamped = true;
        }
        acc += ((1.0 - p) / p).ln();
    }
    Ok((acc / episode.query.len() as f64, clamped))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// Half-width of the 95% normal interval, 1.96 s / sqrt(n).
    pub ci: f64,
    pub n: usize,
}

/// Mean and 95% confidence half-width (sample sd, ddof 1).
pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.len() < 2 {
        return Err(Error::Insufficient(format!(
            "summarize needs >= 2 values, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok(Summary {
        mean,
        ci: 1.96 * var.sqrt() / n.sqrt(),
        n: values.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedGap {
    /// Mean gap (positive favors the treated arm).
    pub mean_gap: f64,
    pub t: f64,
    /// One-sided p for gap > 0.
    pub p: f64,
    pub n: usize,
}

/// One-sided paired t-test on a gap series (H1: mean gap > 0).
///
/// Degenerate zero-variance series short-circuit: p is 0.5 / 0 / 1 for a
/// zero / positive / negative constant gap.
pub fn paired_t(gaps: &[f64]) -> Result<PairedGap> {
    if gaps.len() < 2 {
        return Err(Error::Insufficient(format!(
            "paired test needs >= 2 gaps, got {}",
            gaps.len()
        )));
    }
    let n = gaps.len() as f64;
    let mean = gaps.iter().sum::<f64>() / n;
    let var = gaps.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    let out = if sd == 0.0 {
        let (t, p) = if mean > 0.0 {
            (f64::INFINITY, 0.0)
        } else if mean < 0.0 {
            (f64::NEG_INFINITY, 1.0)
        } else {
            (0.0, 0.5)
        };
        PairedGap { mean_gap: mean, t, p, n: gaps.len() }
    } else {
        let t = mean / (sd / n.sqrt());
        PairedGap {
            mean_gap: mean,
            t,
            p: t_sf(t, gaps.len() - 1),
            n: gaps.len(),
        }
    };
    Ok(out)
}

/// Paired loss comparison of two runs over the same episode seeds.
/// Gap is baseline - treated per seed (positive = treated improved);
/// seeds must match pairwise.
pub fn paired_gap_test(baseline: &[TaskResult], treated: &[TaskResult]) -> Result<PairedGap> {
    if baseline.len() != treated.len() {
        return Err(Error::SeedMismatch);
    }
    let mut gaps = Vec::with_capacity(baseline.len());
    for (b, t) in baseline.iter().zip(treated) {
        if b.seed != t.seed {
            return Err(Error::SeedMismatch);
        }
        gaps.push(b.loss - t.loss);
    }
    paired_t(&gaps)
}

/// Student t survival function P(T > t) with `df` degrees of freedom,
/// via the regularized incomplete beta function.
pub fn t_sf(t: f64, df: usize) -> f64 {
    if df == 0 {
        return f64::NAN;
    }
    let v = df as f64;
    let x = v / (v + t * t);
    let half = 0.5 * betai(0.5 * v, 0.5, x);
    if t >= 0.0 {
        half
    } else {
        1.0 - half
    }
}

fn ln_gamma(z: f64) -> f64 {
    // Lanczos approximation, g = 7.
    const C: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if z < 0.5 {
        // reflection; not reached by t_sf but kept total
        let pi = std::f64::consts::PI;
        return (pi / (pi * z).sin()).ln() - ln_gamma(1.0 - z);
    }
    let z = z - 1.0;
    let mut x = C[0];
    for (i, &c) in C.iter().enumerate().skip(1) {
        x += c / (z + i as f64);
    }
    let t = z + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + x.ln()
}

/// Regularized incomplete beta I_x(a, b), continued fraction form.
fn betai(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let bt = (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
        + a * x.ln()
        + b * (1.0 - x).ln())
    .exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        bt * betacf(a, b, x) / a
    } else {
        1.0 - bt * betacf(b, a, 1.0 - x) / b
    }
}

fn betacf(a: f64, b: f64, x: f64) -> f64 {
    // modified Lentz continued-fraction evaluation
    const MAXIT: usize = 300;
    const EPS: f64 = 1e-15;
    const FPMIN: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAXIT {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Pearson correlation; errors on length mismatch, n < 3, or a constant
/// series.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Stats(format!(
            "length mismatch: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 3 {
        return Err(Error::Insufficient("pearson needs >= 3 points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Stats("constant series has no correlation".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Fisher z 95% interval for a correlation; needs n > 3.
pub fn pearson_ci(r: f64, n: usize) -> Result<(f64, f64)> {
    if n <= 3 {
        return Err(Error::Insufficient(format!(
            "fisher interval needs n > 3, got {n}"
        )));
    }
    if !(-1.0..=1.0).contains(&r) {
        return Err(Error::Stats(format!("correlation out of range: {r}")));
    }
    if r.abs() == 1.0 {
        return Ok((r, r));
    }
    let z = r.atanh();
    let se = 1.0 / ((n - 3) as f64).sqrt();
    // normal 97.5% quantile
    let q = 1.959963984540054;
    Ok(((z - q * se).tanh(), (z + q * se).tanh()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pca2D {
    /// One (u, v) pair per input point.
    pub coords: Vec<[f64; 2]>,
    /// Fraction of total variance captured by each of the two components.
    pub explained: [f64; 2],
    /// The two component directions, unit length (zero if degenerate).
    pub components: [Vec<f64>; 2],
}

/// Top-2 principal components by power iteration with deflation.
/// Degenerate inputs (identical points, rank < 2) give zero coordinates and
/// zero explained variance on the missing directions.
pub fn pca_2d(points: &[Vec<f64>]) -> Result<Pca2D> {
    if points.len() < 2 {
        return Err(Error::Insufficient("pca needs >= 2 points".into()));
    }
    let d = points[0].len();
    if d == 0 {
        return Err(Error::Stats("pca needs nonzero dimension".into()));
    }
    for p in points {
        if p.len() != d {
            return Err(Error::DimMismatch { expected: d, got: p.len() });
        }
    }
    let n = points.len() as f64;
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, &v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut centered: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().zip(&mean).map(|(&v, &m)| v - m).collect())
        .collect();
    let total: f64 = centered
        .iter()
        .map(|p| p.iter().map(|v| v * v).sum::<f64>())
        .sum();
    let mut components: [Vec<f64>; 2] = [vec![0.0; d], vec![0.0; d]];
    let mut explained = [0.0; 2];
    if total > 0.0 {
        for k in 0..2usize.min(d) {
            if let Some((v, lam)) = power_iterate(&centered, d) {
                explained[k] = lam / total;
                components[k] = v.clone();
                // deflate: remove the found direction from every point
                for p in &mut centered {
                    let proj: f64 = p.iter().zip(&v).map(|(&a, &b)| a * b).sum();
                    for (pi, &vi) in p.iter_mut().zip(&v) {
                        *pi -= proj * vi;
                    }
                }
            }
        }
    }
    let coords = points
        .iter()
        .map(|p| {
            let mut c = [0.0; 2];
            for k in 0..2 {
                c[k] = p
                    .iter()
                    .zip(&mean)
                    .zip(&components[k])
                    .map(|((&v, &m), &w)| (v - m) * w)
                    .sum();
            }
            c
        })
        .collect();
    Ok(Pca2D { coords, explained, components })
}

/// Leading eigenvector of the (implicit) scatter matrix of `centered`;
/// returns (unit vector, eigenvalue of the scatter matrix) or None when the
/// remaining variance is numerically zero.
fn power_iterate(centered: &[Vec<f64>], d: usize) -> Option<(Vec<f64>, f64)> {
    let resid: f64 = centered
        .iter()
        .map(|p| p.iter().map(|v| v * v).sum::<f64>())
        .sum();
    if resid <= 1e-24 {
        return None;
    }
    // deterministic start with a ramp so no coordinate axis is special
    let mut v: Vec<f64> = (0..d).map(|j| 1.0 + 0.25 * j as f64).collect();
    normalize(&mut v);
    let mut lam = 0.0;
    for _ in 0..500 {
        // w = X^T X v without forming X^T X
        let mut w = vec![0.0; d];
        for p in centered {
            let proj: f64 = p.iter().zip(&v).map(|(&a, &b)| a * b).sum();
            for (wi, &pi) in w.iter_mut().zip(p) {
                *wi += proj * pi;
            }
        }
        let new_lam: f64 = w.iter().zip(&v).map(|(&a, &b)| a * b).sum();
        let norm = normalize(&mut w);
        if norm <= 1e-24 {
            return None;
        }
        // convergence on the vector, not the eigenvalue: the eigenvalue
        // error is quadratic in the residual, so it stalls far earlier
        let drift: f64 = w.iter().zip(&v).map(|(&a, &b)| (a - b) * (a - b)).sum();
        v = w;
        lam = new_lam;
        if drift <= 1e-30 {
            break;
        }
    }
    // deterministic orientation: largest-magnitude entry positive
    let mut big = 0;
    for (i, &x) in v.iter().enumerate() {
        if x.abs() > v[big].abs() {
            big = i;
        }
    }
    if v[big] < 0.0 {
        for x in &mut v {
            *x = -*x;
        }
    }
    Some((v, lam.max(0.0)))
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::Labeled;

    fn episode(
        classes: &[&str],
        support: &[(Vec<f64>, usize)],
        query: &[(Vec<f64>, usize)],
    ) -> Episode<f64> {
        Episode {
            classes: classes.iter().map(|s| s.to_string()).collect(),
            support: support
                .iter()
                .map(|(x, y)| Labeled { x: x.clone(), y: *y })
                .collect(),
            query: query
                .iter()
                .map(|(x, y)| Labeled { x: x.clone(), y: *y })
                .collect(),
        }
    }

    #[test]
    fn hardness_balanced_query_is_zero() {
        // query equidistant from both prototypes: p = 0.5, log-odds 0
        let ep = episode(
            &["a", "b"],
            &[(vec![0.0, 0.0], 0), (vec![2.0, 0.0], 1)],
            &[(vec![1.0, 0.0], 0)],
        );
        let (h, clamped) = hardness(&ep).unwrap();
        assert!(h.abs() < 1e-12);
        assert!(!clamped);
    }

    #[test]
    fn hardness_exact_value() {
        // prototypes (0,0) and (2,0), query (1.5,0) labelled 0:
        // logit gap 2.25 - 0.25 = 2, log((1-p)/p) = 2 exactly
        let ep = episode(
            &["a", "b"],
            &[(vec![0.0, 0.0], 0), (vec![2.0, 0.0], 1)],
            &[(vec![1.5, 0.0], 0)],
        );
        let (h, clamped) = hardness(&ep).unwrap();
        assert!((h - 2.0).abs() < 1e-9, "got {h}");
        assert!(!clamped);
    }

    #[test]
    fn hardness_separable_is_large_negative() {
        let ep = episode(
            &["a", "b"],
            &[(vec![0.0, 0.0], 0), (vec![50.0, 0.0], 1)],
            &[(vec![0.1, 0.0], 0), (vec![49.9, 0.0], 1)],
        );
        let (h, clamped) = hardness(&ep).unwrap();
        assert!(h < -20.0, "got {h}");
        assert!(clamped, "p should have hit the clamp");
    }

    #[test]
    fn hardness_needs_queries() {
        let ep = episode(&["a"], &[(vec![0.0], 0)], &[]);
        assert!(hardness(&ep).is_err());
    }

    #[test]
    fn summarize_binary_pair() {
        let s = summarize(&[0.0, 1.0]).unwrap();
        assert!((s.mean - 0.5).abs() < 1e-12);
        // sd = sqrt(0.5), ci = 1.96 * sqrt(0.5) / sqrt(2) = 0.98
        assert!((s.ci - 0.98).abs() < 1e-12, "ci {}", s.ci);
        assert_eq!(s.n, 2);
    }

    #[test]
    fn summarize_single_value_errors() {
        assert!(summarize(&[0.7]).is_err());
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn t_sf_matches_reference_table() {
        // reference values from an independent implementation
        let table = [
            (1.0, 1, 0.24999999999999978),
            (2.0, 3, 0.06966298427942155),
            (0.5, 5, 0.3191494358204645),
            (3.2, 10, 0.004745847897651922),
            (-1.7, 7, 0.9335355516087225),
            (2.5, 199, 0.0066136299832538475),
            (0.0, 4, 0.5),
            (10.0, 2, 0.004926228511662846),
            (-4.0, 30, 0.9998090771819581),
        ];
        for (t, df, want) in table {
            let got = t_sf(t, df);
            assert!(
                (got - want).abs() <= 1e-10 * want.max(1e-3),
                "t_sf({t}, {df}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn paired_t_reference_case() {
        // gaps from two accuracy vectors; t and p frozen from an
        // independent implementation
        let a = [0.8, 0.7, 0.9, 0.6, 0.75];
        let b = [0.6, 0.65, 0.7, 0.55, 0.7];
        let gaps: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let r = paired_t(&gaps).unwrap();
        assert!((r.t - 2.9938207967349935).abs() < 1e-10, "t {}", r.t);
        assert!((r.p - 0.02009310912771266).abs() < 1e-10, "p {}", r.p);
        assert!((r.mean_gap - 0.11).abs() < 1e-12);
    }

    #[test]
    fn paired_t_degenerate_cases() {
        let r = paired_t(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!((r.t, r.p), (0.0, 0.5));
        let r = paired_t(&[0.2, 0.2]).unwrap();
        assert_eq!(r.p, 0.0);
        let r = paired_t(&[-0.2, -0.2]).unwrap();
        assert_eq!(r.p, 1.0);
        assert!(paired_t(&[0.1]).is_err());
    }

    #[test]
    fn paired_gap_requires_matching_seeds() {
        let base = [
            TaskResult { seed: 1, accuracy: 0.5, loss: 1.0, hardness: 0.0 },
            TaskResult { seed: 2, accuracy: 0.6, loss: 1.0, hardness: 0.0 },
        ];
        let mut treat = base;
        treat[1].seed = 9;
        assert!(matches!(
            paired_gap_test(&base, &treat),
            Err(Error::SeedMismatch)
        ));
        let r = paired_gap_test(&base, &base).unwrap();
        assert_eq!((r.mean_gap, r.p), (0.0, 0.5));
    }

    #[test]
    fn pearson_pinned_values() {
        let r = pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        let r = pearson(&[1.0, 2.0, 3.0], &[-1.0, -2.0, -3.0]).unwrap();
        assert!((r + 1.0).abs() < 1e-12);
        let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
        assert!((r - 0.5).abs() < 1e-12, "got {r}");
    }

    #[test]
    fn pearson_rejects_degenerate_input() {
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn pearson_ci_matches_reference() {
        // r and interval frozen from an independent implementation
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [1.2, 1.9, 3.4, 3.9, 5.2];
        let r = pearson(&xs, &ys).unwrap();
        assert!((r - 0.9907304971296067).abs() < 1e-12);
        let (lo, hi) = pearson_ci(r, xs.len()).unwrap();
        assert!((lo - 0.8614293370817729).abs() < 1e-9, "lo {lo}");
        assert!((hi - 0.9994176732594588).abs() < 1e-9, "hi {hi}");
        assert!(pearson_ci(0.5, 3).is_err());
    }

    #[test]
    fn pca_axis_aligned_cloud() {
        // variance 9:1 along x vs y
        let pts = vec![
            vec![-3.0, 1.0],
            vec![3.0, -1.0],
            vec![-3.0, -1.0],
            vec![3.0, 1.0],
        ];
        let p = pca_2d(&pts).unwrap();
        assert!(p.components[0][0].abs() > 0.999, "{:?}", p.components[0]);
        assert!((p.explained[0] - 0.9).abs() < 1e-9);
        assert!((p.explained[1] - 0.1).abs() < 1e-9);
        // coordinates reproduce the x spread
        assert!((p.coords[0][0].abs() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn pca_identical_points_degenerate() {
        let pts = vec![vec![2.0, 2.0, 2.0]; 5];
        let p = pca_2d(&pts).unwrap();
        assert_eq!(p.explained, [0.0, 0.0]);
        for c in &p.coords {
            assert_eq!(*c, [0.0, 0.0]);
        }
    }

    #[test]
    fn pca_plane_in_4d_captures_everything() {
        // points vary only in coordinates 0 and 2
        let pts = vec![
            vec![1.0, 5.0, 0.0, -3.0],
            vec![-1.0, 5.0, 2.0, -3.0],
            vec![0.5, 5.0, -1.0, -3.0],
            vec![2.0, 5.0, 1.5, -3.0],
            vec![-2.0, 5.0, 0.5, -3.0],
        ];
        let p = pca_2d(&pts).unwrap();
        assert!(
            (p.explained[0] + p.explained[1] - 1.0).abs() < 1e-9,
            "explained {:?}",
            p.explained
        );
    }

    #[test]
    fn pca_rigid_motion_preserves_explained_variance() {
        let pts = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.2],
            vec![2.0, -0.3],
            vec![3.0, 0.4],
        ];
        let base = pca_2d(&pts).unwrap();
        // rotate by 30 degrees and translate
        let (s, c) = (30f64.to_radians().sin(), 30f64.to_radians().cos());
        let moved: Vec<Vec<f64>> = pts
            .iter()
            .map(|p| vec![c * p[0] - s * p[1] + 10.0, s * p[0] + c * p[1] - 4.0])
            .collect();
        let rot = pca_2d(&moved).unwrap();
        assert!((base.explained[0] - rot.explained[0]).abs() < 1e-8);
        assert!((base.explained[1] - rot.explained[1]).abs() < 1e-8);
    }

    #[test]
    fn pca_rejects_ragged_input() {
        assert!(pca_2d(&[vec![1.0, 2.0], vec![1.0]]).is_err());
        assert!(pca_2d(&[vec![1.0, 2.0]]).is_err());
    }
}
