//! Relative-frequency statistics for repeated measurements: the binomial
//! law of F̂_ℓ, its mean, tail concentration, and seeded Monte Carlo
//! sampling of measurement records.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

use crate::error::{config, domain, Result};

/// Algorithm identifier recorded in manifests.
pub const RNG_ALGORITHM: &str = "ChaCha20 (rand_chacha 0.9), stream = record index";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    pub labels: Vec<String>,
    pub probabilities: Vec<f64>,
}

impl OutcomeDistribution {
    pub fn new(labels: Vec<String>, probabilities: Vec<f64>) -> Result<Self> {
        if labels.is_empty() || labels.len() != probabilities.len() {
            return config("need one probability per label, at least one label");
        }
        let mut sorted = labels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != labels.len() {
            return config("labels must be distinct");
        }
        if probabilities.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return config("probabilities must be finite and non-negative");
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return config(format!("probabilities sum to {total}, not 1"));
        }
        Ok(OutcomeDistribution { labels, probabilities })
    }

    /// Born weights |ψ(ℓ)|² from amplitudes, renormalized.
    pub fn from_amplitudes(labels: Vec<String>, amplitudes: &[num_complex::Complex64]) -> Result<Self> {
        let w: Vec<f64> = amplitudes.iter().map(|a| a.norm_sqr()).collect();
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            return domain("amplitudes are all zero");
        }
        OutcomeDistribution::new(labels, w.iter().map(|v| v / total).collect())
    }

    /// Two labels "a" and "b" with probabilities p and 1 − p.
    pub fn binary(p: f64) -> Result<Self> {
        OutcomeDistribution::new(vec!["a".into(), "b".into()], vec![p, 1.0 - p])
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels.iter().position(|l| l == label).ok_or_else(|| crate::Error::Domain(format!("unknown label {label}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub labels: Vec<String>,
    pub outcomes: Vec<usize>,
}

impl TrialRecord {
    pub fn new(labels: Vec<String>, outcomes: Vec<usize>) -> Result<Self> {
        if outcomes.is_empty() {
            return config("a record needs at least one trial");
        }
        if outcomes.iter().any(|&o| o >= labels.len()) {
            return domain("record outcome outside the label set");
        }
        Ok(TrialRecord { labels, outcomes })
    }

    pub fn from_labels(labels: &[&str], seq: &[&str]) -> Result<Self> {
        let labels: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        let outcomes = seq
            .iter()
            .map(|s| labels.iter().position(|l| l == s).ok_or_else(|| crate::Error::Domain(format!("unknown label {s}"))))
            .collect::<Result<_>>()?;
        TrialRecord::new(labels, outcomes)
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn count(&self, label: usize) -> usize {
        self.outcomes.iter().filter(|&&o| o == label).count()
    }
}

/// `count(ℓ)/n`.
pub fn relative_frequency(rec: &TrialRecord, label: &str) -> Result<f64> {
    let i = rec.labels.iter().position(|l| l == label).ok_or_else(|| crate::Error::Domain(format!("unknown label {label}")))?;
    if rec.is_empty() {
        return config("empty record");
    }
    Ok(rec.count(i) as f64 / rec.len() as f64)
}

/// ln(n!) − (n + ½)ln n + n − ln√(2π).
fn stirling_error(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15.0 {
        let ln_fact: f64 = (2..=n as u64).map(|k| (k as f64).ln()).sum();
        return ln_fact - (n + 0.5) * n.ln() + n - 0.5 * (2.0 * PI).ln();
    }
    let nn = n * n;
    (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
}

/// Deviance term x ln(x/m) + m − x, summed as a series near x = m.
fn deviance(x: f64, m: f64) -> f64 {
    if (x - m).abs() < 0.1 * (x + m) {
        let v = (x - m) / (x + m);
        let mut s = (x - m) * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / m).ln() + m - x
    }
}

/// Binomial mass C(n,k) p^k (1−p)^{n−k} by Loader's saddle-point form, which
/// stays accurate to a few ulps where lgamma differences lose digits.
pub fn binomial_mass(k: u64, n: u64, p: f64) -> f64 {
    let q = 1.0 - p;
    if k > n {
        return 0.0;
    }
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if q == 0.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let (nf, kf) = (n as f64, k as f64);
    if k == 0 {
        return powu(q, n).unwrap_or_else(|| (nf * (-p).ln_1p()).exp());
    }
    if k == n {
        return powu(p, n).unwrap_or_else(|| (nf * p.ln()).exp());
    }
    let lc = stirling_error(nf) - stirling_error(kf) - stirling_error(nf - kf) - deviance(kf, nf * p) - deviance(nf - kf, nf * q);
    let lf = (2.0 * PI).ln() + kf.ln() + (-kf / nf).ln_1p();
    (lc - 0.5 * lf).exp()
}

/// Repeated squaring for exponents that fit powi.
fn powu(x: f64, n: u64) -> Option<f64> {
    i32::try_from(n).ok().map(|e| x.powi(e))
}

/// `(k/n, P(k))` for k = 0..n.
pub fn frequency_pmf(n: u64, p: f64) -> Result<Vec<(f64, f64)>> {
    if n == 0 {
        return config("need at least one trial");
    }
    if !(0.0..=1.0).contains(&p) {
        return config(format!("probability {p} outside [0, 1]"));
    }
    Ok((0..=n).map(|k| (k as f64 / n as f64, binomial_mass(k, n, p))).collect())
}

/// Σ f·P(f).
pub fn expected_frequency(n: u64, p: f64) -> Result<f64> {
    Ok(frequency_pmf(n, p)?.iter().map(|(f, m)| f * m).sum())
}

/// Exact mass with |f − p| > δ. Equality at the boundary counts as inside.
pub fn tail_mass(n: u64, p: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return config(format!("delta {delta} outside (0, 1)"));
    }
    let nf = n as f64;
    let cut = nf * delta * (1.0 + 1e-12);
    let mut out = 0.0;
    for (k, (_, m)) in frequency_pmf(n, p)?.into_iter().enumerate() {
        if (k as f64 - nf * p).abs() > cut {
            out += m;
        }
    }
    Ok(out)
}

/// de Moivre–Laplace estimate of the same tail: erfc(δ√n / √(2p(1−p))).
pub fn gaussian_tail(n: u64, p: f64, delta: f64) -> f64 {
    erfc(delta * (n as f64).sqrt() / (2.0 * p * (1.0 - p)).sqrt())
}

/// `count` records of `n` i.i.d. draws. Record i uses its own ChaCha20 stream
/// i under `seed`, so output is independent of thread scheduling.
pub fn sample_histories(dist: &OutcomeDistribution, n: usize, count: usize, seed: u64) -> Result<Vec<TrialRecord>> {
    if count == 0 || n == 0 {
        return config("need count ≥ 1 and n ≥ 1");
    }
    let mut cdf = Vec::with_capacity(dist.probabilities.len());
    let mut acc = 0.0;
    for p in &dist.probabilities {
        acc += p;
        cdf.push(acc);
    }
    let last = dist.labels.len() - 1;
    Ok((0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let outcomes = (0..n)
                .map(|_| {
                    let u: f64 = rng.random();
                    cdf.iter().position(|&c| u < c).unwrap_or(last)
                })
                .collect();
            TrialRecord { labels: dist.labels.clone(), outcomes }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson goodness of fit. Adjacent bins are pooled left to right until
/// each expected count reaches 5; a short remainder joins the last group.
pub fn chi_square_gof(observed: &[u64], probabilities: &[f64]) -> Result<ChiSquare> {
    if observed.len() != probabilities.len() {
        return config("observed and expected bins differ in length");
    }
    let total: u64 = observed.iter().sum();
    let mut groups: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&c, &p) in observed.iter().zip(probabilities) {
        o += c as f64;
        e += p * total as f64;
        if e >= 5.0 {
            groups.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match groups.last_mut() {
            Some(g) => {
                g.0 += o;
                g.1 += e;
            }
            None => groups.push((o, e)),
        }
    }
    if groups.len() < 2 {
        return config("too few expected counts for a chi-square test");
    }
    let statistic: f64 = groups.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = groups.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| crate::Error::Config(e.to_string()))?;
    Ok(ChiSquare { statistic, dof, p_value: 1.0 - dist.cdf(statistic) })
}

/// Histogram of count(ℓ) over records, indexed by k = 0..n.
pub fn frequency_histogram(records: &[TrialRecord], label: usize, n: usize) -> Vec<u64> {
    let mut h = vec![0u64; n + 1];
    for r in records {
        h[r.count(label)] += 1;
    }
    h
}

/// Eigenvalue of F̂_ℓ on the basis tuple with mixed-radix index `tuple`
/// (base = number of labels, n digits, first trial most significant).
pub fn frequency_eigenvalue(tuple: usize, labels: usize, n: usize, label: usize) -> f64 {
    let mut t = tuple;
    let mut hits = 0;
    for _ in 0..n {
        if t % labels == label {
            hits += 1;
        }
        t /= labels;
    }
    hits as f64 / n as f64
}

/// Pmf of the summed count over two independent blocks, by convolution.
pub fn convolve_pmfs(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, (_, x)) in a.iter().enumerate() {
        for (j, (_, y)) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_examples() {
        let r = TrialRecord::from_labels(&["a", "b", "c"], &["a", "a", "b", "a"]).unwrap();
        assert_eq!(relative_frequency(&r, "a").unwrap(), 0.75);
        assert_eq!(relative_frequency(&r, "c").unwrap(), 0.0);
        assert!(matches!(relative_frequency(&r, "z"), Err(crate::Error::Domain(_))));
        let one = TrialRecord::from_labels(&["a", "b"], &["b"]).unwrap();
        assert_eq!(relative_frequency(&one, "b").unwrap(), 1.0);
    }

    #[test]
    fn pmf_examples() {
        let p = frequency_pmf(2, 0.5).unwrap();
        for ((f, m), (g, w)) in p.iter().zip([(0.0, 0.25), (0.5, 0.5), (1.0, 0.25)]) {
            assert_eq!(*f, g);
            assert!((m - w).abs() <= 1e-16, "{m}");
        }
        let p = frequency_pmf(1, 0.3).unwrap();
        assert!((p[0].1 - 0.7).abs() < 1e-16 && (p[1].1 - 0.3).abs() < 1e-16);
    }

    #[test]
    fn stirling_error_continuity() {
        // Table and series branches meet smoothly.
        let direct = |n: f64| -> f64 {
            let ln_fact: f64 = (2..=n as u64).map(|k| (k as f64).ln()).sum();
            ln_fact - (n + 0.5) * n.ln() + n - 0.5 * (2.0 * PI).ln()
        };
        for n in [16.0, 17.0, 20.0] {
            assert!((stirling_error(n) - direct(n)).abs() < 1e-14);
        }
    }

    #[test]
    fn degenerate_probabilities() {
        assert_eq!(expected_frequency(5, 0.0).unwrap(), 0.0);
        assert_eq!(expected_frequency(5, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn empty_tail() {
        assert_eq!(tail_mass(50, 0.3, 0.7).unwrap(), 0.0);
        assert_eq!(tail_mass(50, 0.5, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn concentrated_distribution_gives_constant_records() {
        let d = OutcomeDistribution::new(vec!["x".into(), "y".into()], vec![0.0, 1.0]).unwrap();
        for r in sample_histories(&d, 20, 10, 3).unwrap() {
            assert!(r.outcomes.iter().all(|&o| o == 1));
        }
    }

    #[test]
    fn distribution_validation() {
        assert!(OutcomeDistribution::new(vec!["a".into()], vec![0.9]).is_err());
        assert!(OutcomeDistribution::new(vec!["a".into(), "a".into()], vec![0.5, 0.5]).is_err());
        assert!(OutcomeDistribution::binary(0.25).is_ok());
    }
}
