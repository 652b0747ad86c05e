//! Independent closed forms and small simulators used to cross-check the
//! engine: hitting probabilities of birth-death walks, compound geometric
//! sums, a sum/integral comparison, the constant-size Moran process with
//! recombination, and the expected number of first-phase upcrossings.

use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;

use crate::engine::FounderRef;
use crate::model::{validate_sweep_regime, Allele, EcoParams, RegimeError};
use crate::seed::{dynamics_rng, SimRng};

/// Birth-death walk with per-individual rates `b`, `d` observed at levels
/// `i <= j <= k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BdWalk {
    pub b: f64,
    pub d: f64,
    pub i: i64,
    pub j: i64,
    pub k: i64,
}

/// `P_j(T_k < T_i) = (1 - (d/b)^(j-i)) / (1 - (d/b)^(k-i))`, and
/// `(j - i) / (k - i)` when `b = d`.
pub fn bd_hitting_prob(w: &BdWalk) -> f64 {
    assert!(w.i <= w.j && w.j <= w.k && w.k > w.i, "need i <= j <= k and k > i");
    let m = (w.j - w.i) as f64;
    let n = (w.k - w.i) as f64;
    let ln_ratio = (w.d / w.b).ln();
    if ln_ratio.abs() < 1e-14 {
        return m / n;
    }
    if ln_ratio < 0.0 {
        (m * ln_ratio).exp_m1() / (n * ln_ratio).exp_m1()
    } else {
        // rewrite with 1/ratio < 1 so nothing overflows
        let l = -ln_ratio;
        ((m - n) * ln_ratio).exp() * (m * l).exp_m1() / (n * l).exp_m1()
    }
}

/// `P(Z = n)` for `Z = G_1 + ... + G_V`, `V ~ Geom(pa)`, `G_i ~ Geom(pb)`,
/// all geometric laws on `{1, 2, ...}`. Returns the pmf for `n = 0..=n_max`.
///
/// Conditioning on the first summand: `Z = G_1` with probability `pa`,
/// otherwise `Z = G_1 + Z'` with `Z'` an independent copy of `Z`.
pub fn geometric_compound_pmf(pa: f64, pb: f64, n_max: usize) -> Vec<f64> {
    let g: Vec<f64> = (0..=n_max)
        .map(|n| if n == 0 { 0.0 } else { pb * (1.0 - pb).powi(n as i32 - 1) })
        .collect();
    let mut z = vec![0.0; n_max + 1];
    for n in 1..=n_max {
        let tail: f64 = (1..n).map(|m| g[m] * z[n - m]).sum();
        z[n] = pa * g[n] + (1.0 - pa) * tail;
    }
    z
}

/// `max_n |P(Z = n) - pa pb (1 - pa pb)^(n-1)|` over `1 <= n <= n_max`.
pub fn check_geometric_compound(pa: f64, pb: f64, n_max: usize) -> f64 {
    let p = pa * pb;
    geometric_compound_pmf(pa, pb, n_max)
        .iter()
        .enumerate()
        .skip(1)
        .map(|(n, &v)| (v - p * (1.0 - p).powi(n as i32 - 1)).abs())
        .fold(0.0, f64::max)
}

/// `sum_{l=1}^{k-1} l^c / (l + 1) - (ln N / c_N)(k^c - 1)` with
/// `c = c_N / ln N`; the integral term is `ln k` when `c_N = 0`.
pub fn sum_integral_residual(c_n: f64, n: u64, k: u64) -> f64 {
    let ln_n = (n as f64).ln();
    let c = c_n / ln_n;
    let sum: f64 = (1..k).map(|l| (c * (l as f64).ln()).exp() / (l + 1) as f64).sum();
    sum - integral_term(c_n, ln_n, k)
}

fn integral_term(c_n: f64, ln_n: f64, k: u64) -> f64 {
    let ln_k = (k as f64).ln();
    if c_n == 0.0 {
        ln_k
    } else {
        ln_n / c_n * (c_n / ln_n * ln_k).exp_m1()
    }
}

/// `max_{1 <= k <= N} |residual(c_N, N, k)|`, in one pass over `k`.
pub fn max_sum_integral_residual(c_n: f64, n: u64) -> f64 {
    let ln_n = (n as f64).ln();
    let c = c_n / ln_n;
    let mut sum = 0.0;
    let mut worst = 0.0f64;
    for k in 1..=n {
        if k > 1 {
            let l = k - 1;
            sum += (c * (l as f64).ln()).exp() / (l + 1) as f64;
        }
        worst = worst.max((sum - integral_term(c_n, ln_n, k)).abs());
    }
    worst
}

/// Main term of the expected number of `k -> k+1` upcrossings of the mutant
/// count before it reaches `eps_k`, given that it does:
/// `(1 - (1-s)^(eps_k - k) - (1-s)^(k+1)) / s`.
pub fn expected_upcrossings(s: f64, eps_k: u64, k: u64) -> f64 {
    let q = 1.0 - s;
    (1.0 - q.powi((eps_k - k) as i32) - q.powi(k as i32 + 1)) / s
}

/// One replacement event of the Moran process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MoranEvent {
    pub died: usize,
    pub parent: usize,
    pub partner: usize,
    pub recombined: bool,
}

/// Constant-size Moran process of one selected type with recombination
/// between the two neutral loci.
#[derive(Debug, Clone)]
pub struct MoranProcess {
    pub labels: Vec<(FounderRef, FounderRef)>,
    pub rate: f64,
    pub r2: f64,
    pub t: f64,
}

impl MoranProcess {
    /// Population of `floor(nbar K)` individuals with private labels,
    /// events at rate `f nbar K`.
    pub fn new(params: &EcoParams, alpha: Allele) -> Result<Self, RegimeError> {
        let derived = validate_sweep_regime(params).into_result()?;
        let k = params.capacity as f64;
        let nbar = derived.nbar_of(alpha);
        let size = (nbar * k).floor() as u32;
        Ok(MoranProcess {
            labels: (1..=size)
                .map(|i| (FounderRef::Resident(i), FounderRef::Resident(i)))
                .collect(),
            rate: params.f(alpha) * nbar * k,
            r2: params.r2,
            t: 0.0,
        })
    }

    /// Draws three individuals uniformly with replacement: the first is
    /// replaced by a child of the second, which takes its `N2` allele from
    /// the third on recombination.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> MoranEvent {
        let t: f64 = rng.sample(Exp1);
        self.t += t / self.rate;
        let n = self.labels.len();
        let died = rng.random_range(0..n);
        let parent = rng.random_range(0..n);
        let partner = rng.random_range(0..n);
        let recombined = self.r2 > 0.0 && rng.random::<f64>() < self.r2;
        let (l1, own2) = self.labels[parent];
        let l2 = if recombined { self.labels[partner].1 } else { own2 };
        self.labels[died] = (l1, l2);
        MoranEvent {
            died,
            parent,
            partner,
            recombined,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MoranCount {
    pub events: u64,
    pub size: usize,
}

/// Number of replacement events of the `alpha` Moran process in `[0, t_end]`.
pub fn moran_birth_count(
    params: &EcoParams,
    alpha: Allele,
    t_end: f64,
    seed: u64,
) -> Result<MoranCount, RegimeError> {
    let mut process = MoranProcess::new(params, alpha)?;
    let mut rng: SimRng = dynamics_rng(seed);
    let mut events = 0;
    loop {
        process.step(&mut rng);
        if process.t > t_end {
            break;
        }
        events += 1;
    }
    Ok(MoranCount {
        events,
        size: process.labels.len(),
    })
}
