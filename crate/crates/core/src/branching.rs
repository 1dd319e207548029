//! The idealised wave process.
//!
//! One Affected student contacts `k` fresh students, each of whom becomes
//! Affected independently with probability `p`; every newly Affected student
//! repeats this for the next wave. The offspring count is therefore
//! Binomial(k, p) and the process is a Galton-Watson branching process with
//! mean offspring `p * k`.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::for_each_replica;
use crate::rng::replica_rng;

/// Wave counts are clipped here; from a wave this large the chance of later
/// extinction is below any representable probability.
pub const WAVE_SATURATION: u64 = 1 << 52;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchingParams {
    pub p: f64,
    pub k: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criticality {
    Subcritical,
    Critical,
    Supercritical,
}

impl std::fmt::Display for Criticality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Criticality::Subcritical => "Subcritical",
            Criticality::Critical => "Critical",
            Criticality::Supercritical => "Supercritical",
        };
        f.write_str(s)
    }
}

impl BranchingParams {
    pub fn new(p: f64, k: u32) -> Result<Self> {
        crate::graph::check_probability(p)?;
        Ok(Self { p, k })
    }

    /// `p * k`, the expected number of students one Affected student affects.
    pub fn reproduction_number(&self) -> f64 {
        self.p * f64::from(self.k)
    }

    /// Compares `p * k` with 1 exactly (no tolerance band).
    pub fn classify(&self) -> Criticality {
        let r = self.reproduction_number();
        if r < 1.0 {
            Criticality::Subcritical
        } else if r == 1.0 {
            Criticality::Critical
        } else {
            Criticality::Supercritical
        }
    }

    /// Expected number of Affected students in wave `n`; wave 0 is the
    /// single initial student.
    pub fn expected_wave_size(&self, n: u32) -> f64 {
        if n == 0 {
            return 1.0;
        }
        self.reproduction_number().powi(n as i32)
    }

    /// Offspring generating function `(1 - p + p q)^k`.
    pub fn offspring_pgf(&self, q: f64) -> f64 {
        (1.0 - self.p + self.p * q).powi(self.k as i32)
    }

    /// The sequence `0, f(0), f(f(0)), ...`; term `n` is the probability
    /// that the process has died out by wave `n`.
    pub fn extinction_iterates(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::successors(Some(0.0), move |&q| Some(self.offspring_pgf(q)))
    }

    /// Probability that no student is Affected in wave `waves`.
    pub fn extinction_by_wave(&self, waves: u32) -> f64 {
        self.extinction_iterates()
            .nth(waves as usize)
            .expect("iterator is infinite")
    }

    /// Smallest fixed point of the offspring generating function on [0, 1].
    ///
    /// Iterates `q <- f(q)` from 0 until successive values differ by less
    /// than `tol`. When `p * k <= 1` (with `p < 1`), or `k = 0`, the smallest
    /// fixed point is 1 and is returned exactly: in the critical case the
    /// iteration only creeps towards 1 at rate `O(1/n)`.
    pub fn extinction_probability(&self, tol: f64) -> f64 {
        assert!(tol > 0.0, "tolerance must be positive");
        if self.k == 0 || (self.p < 1.0 && self.reproduction_number() <= 1.0) {
            return 1.0;
        }
        let mut q = 0.0f64;
        loop {
            let next = self.offspring_pgf(q);
            if (next - q).abs() < tol {
                return next.clamp(0.0, 1.0);
            }
            q = next;
        }
    }
}

/// Aggregate of [`simulate_branching`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveReport {
    /// Mean Affected count per wave over all replicas (extinct replicas
    /// contribute zeros). With one replica these are its exact counts.
    pub waves: Vec<f64>,
    /// Standard error of each entry of `waves`.
    pub std_errors: Vec<f64>,
    /// Every replica died out within `max_waves`.
    pub died_out: bool,
    pub replicas: u64,
    /// Replicas extinct within `max_waves`, divided by `replicas`. This is a
    /// lower bound on the true extinction probability.
    pub extinct_fraction: f64,
}

/// One realisation: wave counts from wave 0 until extinction (the trailing
/// zero is recorded) or until `max_waves`.
pub fn simulate_branching_replica<R: Rng + ?Sized>(
    params: BranchingParams,
    max_waves: u32,
    rng: &mut R,
) -> Vec<u64> {
    let mut waves = Vec::with_capacity(max_waves as usize + 1);
    let mut current: u64 = 1;
    waves.push(current);
    for _ in 0..max_waves {
        let trials = current.saturating_mul(u64::from(params.k));
        current = if trials == 0 || params.p == 0.0 {
            0
        } else if params.p == 1.0 {
            trials
        } else {
            Binomial::new(trials, params.p)
                .expect("p validated to lie in [0, 1]")
                .sample(rng)
        }
        .min(WAVE_SATURATION);
        waves.push(current);
        if current == 0 {
            break;
        }
    }
    waves
}

/// Monte Carlo over independent replicas seeded by `(seed, replica index)`.
pub fn simulate_branching(
    params: BranchingParams,
    max_waves: u32,
    replicas: u64,
    seed: u64,
) -> Result<WaveReport> {
    if replicas == 0 {
        return Err(Error::Config("replicas must be positive".into()));
    }
    if max_waves == 0 {
        return Err(Error::Config("max_waves must be positive".into()));
    }
    let mut sum: Vec<f64> = Vec::new();
    let mut sum_sq: Vec<f64> = Vec::new();
    let mut extinct = 0u64;
    for_each_replica(
        replicas,
        |i| simulate_branching_replica(params, max_waves, &mut replica_rng(seed, i)),
        |_, waves| {
            if waves.last() == Some(&0) {
                extinct += 1;
            }
            if waves.len() > sum.len() {
                sum.resize(waves.len(), 0.0);
                sum_sq.resize(waves.len(), 0.0);
            }
            for (n, &c) in waves.iter().enumerate() {
                let c = c as f64;
                sum[n] += c;
                sum_sq[n] += c * c;
            }
        },
    );
    let r = replicas as f64;
    let waves: Vec<f64> = sum.iter().map(|s| s / r).collect();
    let std_errors = waves
        .iter()
        .zip(&sum_sq)
        .map(|(m, sq)| {
            if replicas < 2 {
                0.0
            } else {
                let var = ((sq - r * m * m) / (r - 1.0)).max(0.0);
                (var / r).sqrt()
            }
        })
        .collect();
    Ok(WaveReport {
        waves,
        std_errors,
        died_out: extinct == replicas,
        replicas,
        extinct_fraction: extinct as f64 / r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bp(p: f64, k: u32) -> BranchingParams {
        BranchingParams::new(p, k).unwrap()
    }

    /// Smallest root of f(q) = q on [0, 1] by scanning for the first sign
    /// change of f(q) - q and bisecting it.
    fn smallest_root_by_scan(params: BranchingParams) -> f64 {
        let g = |q: f64| params.offspring_pgf(q) - q;
        let steps = 100_000;
        for i in 0..steps {
            let (a, b) = (i as f64 / steps as f64, (i + 1) as f64 / steps as f64);
            if g(a) == 0.0 {
                return a;
            }
            if g(a) * g(b) < 0.0 {
                let (mut lo, mut hi) = (a, b);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if g(lo) * g(mid) <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return 0.5 * (lo + hi);
            }
        }
        1.0
    }

    #[test]
    fn reproduction_number_examples() {
        assert!((bp(0.4, 2).reproduction_number() - 0.8).abs() < 1e-15);
        assert_eq!(bp(0.0, 100).reproduction_number(), 0.0);
        assert_eq!(bp(1.0, 1).reproduction_number(), 1.0);
    }

    #[test]
    fn classify_examples() {
        assert_eq!(bp(0.4, 2).classify(), Criticality::Subcritical);
        assert_eq!(bp(0.6, 2).classify(), Criticality::Supercritical);
        assert_eq!(bp(0.5, 2).classify(), Criticality::Critical);
        assert_eq!(bp(0.2, 5).classify(), Criticality::Critical);
    }

    #[test]
    fn expected_wave_examples() {
        assert_eq!(bp(1.0, 3).expected_wave_size(2), 9.0);
        assert_eq!(bp(0.37, 4).expected_wave_size(0), 1.0);
        assert_eq!(bp(0.5, 2).expected_wave_size(3), 1.0);
    }

    #[test]
    fn extinction_examples() {
        assert_eq!(bp(0.4, 2).extinction_probability(1e-12), 1.0);
        assert_eq!(bp(0.0, 5).extinction_probability(1e-12), 1.0);
        let q = bp(0.6, 2).extinction_probability(1e-12);
        let oracle = smallest_root_by_scan(bp(0.6, 2));
        assert!((oracle - 4.0 / 9.0).abs() < 1e-10);
        assert!((q - oracle).abs() < 1e-9, "{q} vs {oracle}");
    }

    #[test]
    fn degenerate_p_one() {
        assert_eq!(bp(1.0, 1).extinction_probability(1e-9), 0.0);
        assert_eq!(bp(1.0, 3).extinction_probability(1e-9), 0.0);
        assert_eq!(bp(1.0, 0).extinction_probability(1e-9), 1.0);
    }

    #[test]
    fn extinction_matches_scan_oracle_on_grid() {
        for k in 1..=6 {
            for i in 1..=19 {
                let params = bp(i as f64 / 20.0, k);
                let q = params.extinction_probability(1e-13);
                let oracle = smallest_root_by_scan(params);
                assert!((q - oracle).abs() < 1e-8, "p={} k={k}: {q} vs {oracle}", params.p);
            }
        }
    }

    #[test]
    fn iterates_are_monotone_and_bounded() {
        for &(p, k) in &[(0.6, 2), (0.9, 5), (0.3, 3), (0.5, 2)] {
            let params = bp(p, k);
            let q_star = smallest_root_by_scan(params);
            let it: Vec<f64> = params.extinction_iterates().take(500).collect();
            for w in it.windows(2) {
                assert!(w[1] >= w[0]);
                assert!(w[1] <= q_star + 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_growth_at_p_one() {
        let r = simulate_branching(bp(1.0, 2), 3, 1, 5).unwrap();
        assert_eq!(r.waves, vec![1.0, 2.0, 4.0, 8.0]);
        assert!(!r.died_out);
        assert_eq!(r.extinct_fraction, 0.0);
    }

    #[test]
    fn zero_p_dies_immediately() {
        let r = simulate_branching(bp(0.0, 3), 10, 50, 5).unwrap();
        assert_eq!(r.waves, vec![1.0, 0.0]);
        assert!(r.died_out);
        assert_eq!(r.extinct_fraction, 1.0);
    }

    #[test]
    fn simulation_is_seed_deterministic() {
        let a = simulate_branching(bp(0.55, 3), 20, 3000, 11).unwrap();
        let b = simulate_branching(bp(0.55, 3), 20, 3000, 11).unwrap();
        assert_eq!(a, b);
        let c = simulate_branching(bp(0.55, 3), 20, 3000, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn large_supercritical_runs_saturate() {
        let r = simulate_branching(bp(0.9, 5), 200, 20, 1).unwrap();
        assert_eq!(r.waves.len(), 201);
        assert!(r.waves.iter().all(|w| w.is_finite()));
    }

    #[test]
    fn finite_depth_extinction_matches_monte_carlo() {
        let params = bp(0.6, 2);
        let r = simulate_branching(params, 6, 50_000, 3).unwrap();
        let exact = params.extinction_by_wave(6);
        let se = (exact * (1.0 - exact) / 50_000.0).sqrt();
        assert!((r.extinct_fraction - exact).abs() < 4.0 * se, "{} vs {exact}", r.extinct_fraction);
    }

    proptest! {
        #[test]
        fn extinction_nonincreasing_in_p_and_k(p in 0.0f64..0.99, dp in 0.0f64..0.01, k in 1u32..8) {
            let a = bp(p, k).extinction_probability(1e-12);
            let b = bp(p + dp, k).extinction_probability(1e-12);
            let c = bp(p, k + 1).extinction_probability(1e-12);
            prop_assert!(b <= a + 1e-9);
            prop_assert!(c <= a + 1e-9);
        }

        #[test]
        fn extinction_is_one_iff_at_most_critical(p in 0.0f64..0.999, k in 0u32..10) {
            let params = bp(p, k);
            let q = params.extinction_probability(1e-12);
            if params.reproduction_number() <= 1.0 {
                prop_assert_eq!(q, 1.0);
            } else {
                prop_assert!(q < 1.0);
            }
        }
    }
}
