//! Certification mathematics.
//!
//! * Gaussian attribute radius for a binary smoothed indicator.
//! * Likelihood-ratio regions of the Bernoulli edge-flip noise and the
//!   Neyman–Pearson lower bound on the smoothed positive probability after
//!   `k` adversarial flips.
//! * Structure-budget traversal and the joint attribute budget.
//!
//! Under flip probability `1 − β`, an outcome that differs from the clean
//! adjacency on `a` of the `k` attacked pairs has likelihood ratio
//! `(β/(1−β))^(k−2a)` between the clean and the attacked noise distribution.
//! Pairs the attacker did not touch cancel from the ratio, so the regions are
//! indexed by `i = k − 2a ∈ {k, k−2, …, −k}` and their probabilities depend
//! only on `k` and `β`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::std_normal_quantile;

/// Largest `k` the exhaustive oracle accepts (it enumerates `2^k` states).
pub const BRUTE_FORCE_MAX_K: usize = 20;

/// Bounds closer than this to 0.5 are re-decided in exact arithmetic.
const EXACT_BAND: f64 = 1e-9;

/// Certified ℓ2 radius for the attribute-smoothed indicator.
///
/// With lower bound `p` on the majority class and `1 − p` as the upper bound
/// on the other, the radius `σ/2·(Φ⁻¹(p) − Φ⁻¹(1 − p))` reduces to `σ·Φ⁻¹(p)`.
/// Returns 0 for `p ≤ 0.5` and `+∞` for `p ≥ 1`.
pub fn attribute_radius(p_lower: f64, sigma: f64) -> f64 {
    if p_lower.is_nan() || p_lower <= 0.5 {
        return 0.0;
    }
    if p_lower >= 1.0 {
        return f64::INFINITY;
    }
    sigma * std_normal_quantile(p_lower).expect("p_lower lies in (0.5, 1)")
}

/// One likelihood-ratio region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegionEntry {
    /// `i` such that the clean/attacked likelihood ratio is `(β/(1−β))^i`.
    pub ratio_index: i64,
    pub prob_under_clean: f64,
    pub prob_under_perturbed: f64,
}

/// Regions for `k` attacked pairs, ordered by descending ratio index.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionTable {
    pub k: usize,
    pub beta: f64,
    pub entries: Vec<RegionEntry>,
}

fn ln_choose(n: usize, r: usize) -> f64 {
    debug_assert!(r <= n);
    let r = r.min(n - r);
    (0..r)
        .map(|j| ((n - j) as f64).ln() - ((j + 1) as f64).ln())
        .sum()
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.5 && beta < 1.0) {
        return Err(Error::Domain(format!(
            "beta must lie in (0.5, 1), got {beta}"
        )));
    }
    Ok(())
}

/// Region probabilities for `k ≥ 1` attacked pairs, computed in log space.
///
/// `Pr_clean(i) = C(k, (k+i)/2) · β^((k+i)/2) · (1−β)^((k−i)/2)` and
/// `Pr_attacked(i) = Pr_clean(−i)`.
pub fn region_table(k: usize, beta: f64) -> Result<RegionTable> {
    check_beta(beta)?;
    if k == 0 {
        return Err(Error::Domain("region table needs k ≥ 1".into()));
    }
    let (lb, lq) = (beta.ln(), (1.0 - beta).ln());
    let entries = (0..=k)
        .map(|a| {
            // a = attacked pairs that the noise flipped back
            let kept = k - a;
            let ln_c = ln_choose(k, a);
            RegionEntry {
                ratio_index: k as i64 - 2 * a as i64,
                prob_under_clean: (ln_c + kept as f64 * lb + a as f64 * lq).exp(),
                prob_under_perturbed: (ln_c + a as f64 * lb + kept as f64 * lq).exp(),
            }
        })
        .collect();
    Ok(RegionTable { k, beta, entries })
}

/// Region sums from the full-dimension formula over all `d` noise
/// coordinates, `k` of them attacked, for `m ∈ [−d, d]`.
///
/// `Pr_clean(H_m) = Σ_j β^(d−(j−m)) (1−β)^(j−m) t(m,j)` and
/// `Pr_attacked(H_m) = Σ_j β^(d−j) (1−β)^j t(m,j)` with
/// `t(m,j) = C(d−k, (2j−m−k)/2) · C(k, (k−m)/2)` when `m + k` is even and
/// `2j − m ≥ k`, else 0. Used only to cross-check [`region_table`].
pub fn full_dimension_region_sums(d: usize, k: usize, beta: f64) -> Result<Vec<RegionEntry>> {
    check_beta(beta)?;
    if k > d {
        return Err(Error::Domain(format!(
            "k = {k} exceeds the noise dimension {d}"
        )));
    }
    let (lb, lq) = (beta.ln(), (1.0 - beta).ln());
    let (di, ki) = (d as i64, k as i64);
    let t = |m: i64, j: i64| -> Option<f64> {
        if (m + ki).rem_euclid(2) != 0 || 2 * j - m < ki {
            return None;
        }
        let b = (2 * j - m - ki) / 2;
        let a = (ki - m) / 2;
        if b > di - ki || a < 0 || a > ki {
            return None;
        }
        Some(ln_choose(d - k, b as usize) + ln_choose(k, a as usize))
    };
    let mut out = Vec::with_capacity(2 * d + 1);
    for m in (-di..=di).rev() {
        let lo = 0.max(m);
        let hi = di.min(di + m);
        let mut clean = Vec::new();
        let mut attacked = Vec::new();
        for j in lo..=hi {
            if let Some(ln_t) = t(m, j) {
                clean.push((ln_t + (di - (j - m)) as f64 * lb + (j - m) as f64 * lq).exp());
                attacked.push((ln_t + (di - j) as f64 * lb + j as f64 * lq).exp());
            }
        }
        out.push(RegionEntry {
            ratio_index: m,
            prob_under_clean: compensated_sum(clean),
            prob_under_perturbed: compensated_sum(attacked),
        });
    }
    Ok(out)
}

/// Worst-case positive probability of the structure-smoothed indicator after
/// `k` adversarial pair flips, given a lower bound `p_lower` on the clean one.
///
/// Neyman–Pearson greedy, evaluated from the complement side: the negative
/// outcome takes its clean mass `1 − p_lower` from the regions most favoured
/// by the attacked distribution, so the tiny clean masses of extreme regions
/// are summed first and are never lost to rounding. The partially filled
/// region contributes its clean mass times `(β/(1−β))^{−μ}`.
pub fn positive_prob_lower_bound(p_lower: f64, k: usize, beta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_lower) {
        return Err(Error::Domain(format!(
            "p_lower must lie in [0, 1], got {p_lower}"
        )));
    }
    check_beta(beta)?;
    if k == 0 {
        return Ok(p_lower);
    }
    let table = region_table(k, beta)?;
    let ln_ratio = (beta / (1.0 - beta)).ln();
    let negative = 1.0 - p_lower;
    let mut consumed = Vec::with_capacity(table.entries.len());
    let mut lost = Vec::with_capacity(table.entries.len());
    for entry in table.entries.iter().rev() {
        let used = compensated_sum(consumed.iter().copied());
        if used + entry.prob_under_clean <= negative {
            consumed.push(entry.prob_under_clean);
            lost.push(entry.prob_under_perturbed);
        } else {
            let remaining = (negative - used).max(0.0);
            lost.push(remaining * (-(entry.ratio_index as f64) * ln_ratio).exp());
            break;
        }
    }
    Ok((1.0 - compensated_sum(lost)).clamp(0.0, 1.0))
}

fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite float")
}

fn binomial(n: usize, r: usize) -> BigInt {
    let r = r.min(n - r);
    let mut acc = BigInt::one();
    for j in 0..r {
        acc = acc * BigInt::from(n - j) / BigInt::from(j + 1);
    }
    acc
}

/// The reduced greedy evaluated in exact rational arithmetic.
pub fn positive_prob_lower_bound_exact(p_lower: f64, k: usize, beta: f64) -> Result<BigRational> {
    if !(0.0..=1.0).contains(&p_lower) {
        return Err(Error::Domain(format!(
            "p_lower must lie in [0, 1], got {p_lower}"
        )));
    }
    check_beta(beta)?;
    let p = rational(p_lower);
    if k == 0 {
        return Ok(p);
    }
    let b = rational(beta);
    let q = BigRational::one() - &b;
    let pow = |base: &BigRational, e: usize| num_traits::pow::pow(base.clone(), e);
    let mut used = BigRational::zero();
    let mut bound = BigRational::zero();
    for a in 0..=k {
        let c = BigRational::from_integer(binomial(k, a));
        let clean = &c * pow(&b, k - a) * pow(&q, a);
        let attacked = &c * pow(&b, a) * pow(&q, k - a);
        if &used + &clean <= p {
            used += clean;
            bound += attacked;
        } else {
            bound += (&p - &used) * attacked / clean;
            break;
        }
    }
    Ok(bound)
}

/// Exhaustive Neyman–Pearson oracle over all `2^k` noise states of the
/// attacked pairs, in exact rational arithmetic.
///
/// Builds the worst-case base classifier directly: states are sorted by their
/// individual likelihood ratio and filled with clean mass up to `p_lower`.
pub fn brute_force_bound_oracle(p_lower: f64, k: usize, beta: f64) -> Result<f64> {
    if k > BRUTE_FORCE_MAX_K {
        return Err(Error::Size(format!(
            "brute-force oracle enumerates 2^k states; k = {k} exceeds {BRUTE_FORCE_MAX_K}"
        )));
    }
    if !(0.0..=1.0).contains(&p_lower) {
        return Err(Error::Domain(format!(
            "p_lower must lie in [0, 1], got {p_lower}"
        )));
    }
    check_beta(beta)?;
    // β and 1−β are dyadic rationals nb/2^e and nq/2^e, so every state's
    // probability is an integer numerator over the shared denominator 2^(e·k).
    let b = rational(beta);
    let q = BigRational::one() - &b;
    let den = b.denom().max(q.denom()).clone();
    let nb = b.numer() * (&den / b.denom());
    let nq = q.numer() * (&den / q.denom());
    let mut pow_b = vec![BigInt::one()];
    let mut pow_q = vec![BigInt::one()];
    for _ in 0..k {
        pow_b.push(pow_b.last().unwrap() * &nb);
        pow_q.push(pow_q.last().unwrap() * &nq);
    }
    let scale = num_traits::pow(den.clone(), k);

    // state bit = 1: the outcome differs from the clean adjacency on that pair.
    // Clean noise reaches it by flipping (prob 1−β); attacked noise by not
    // flipping the already-flipped pair (prob β).
    let mut states: Vec<(BigInt, BigInt)> = (0u64..(1u64 << k))
        .map(|mask| {
            let differ = mask.count_ones() as usize;
            let same = k - differ;
            (&pow_b[same] * &pow_q[differ], &pow_q[same] * &pow_b[differ])
        })
        .collect();
    // descending clean/attacked, compared by exact cross-multiplication
    states.sort_by(|x, y| (&y.0 * &x.1).cmp(&(&x.0 * &y.1)));

    // p·scale as an exact rational target for the integer clean mass
    let target = rational(p_lower) * BigRational::from_integer(scale.clone());
    let mut used = BigInt::zero();
    let mut bound = BigInt::zero();
    let mut partial = BigRational::zero();
    for (clean, attacked) in states {
        let next = &used + &clean;
        if BigRational::from_integer(next.clone()) <= target {
            used = next;
            bound += attacked;
        } else {
            partial = (&target - BigRational::from_integer(used))
                * BigRational::from_integer(attacked)
                / BigRational::from_integer(clean);
            break;
        }
    }
    let bound = (BigRational::from_integer(bound) + partial) / BigRational::from_integer(scale);
    Ok(bound.to_f64().unwrap_or(f64::NAN))
}

/// Whether the bound after `k` flips stays strictly above one half.
fn survives(p_lower: f64, k: usize, beta: f64) -> Result<bool> {
    let bound = positive_prob_lower_bound(p_lower, k, beta)?;
    if (bound - 0.5).abs() < EXACT_BAND {
        let exact = positive_prob_lower_bound_exact(p_lower, k, beta)?;
        return Ok(exact > BigRational::new(1.into(), 2.into()));
    }
    Ok(bound > 0.5)
}

/// Certified structure budget in unordered pair flips.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureBudget {
    pub flips: usize,
    /// Set when `p_lower ≤ 0.5`: the smoothed indicator is not certified at all.
    pub abstain: bool,
}

/// Largest `k ≤ k_max` whose worst-case positive probability stays above 0.5.
pub fn structure_budget(p_lower: f64, beta: f64, k_max: usize) -> Result<StructureBudget> {
    check_beta(beta)?;
    if !(0.0..=1.0).contains(&p_lower) {
        return Err(Error::Domain(format!(
            "p_lower must lie in [0, 1], got {p_lower}"
        )));
    }
    if p_lower <= 0.5 {
        return Ok(StructureBudget {
            flips: 0,
            abstain: true,
        });
    }
    let mut flips = 0;
    for k in 1..=k_max {
        if !survives(p_lower, k, beta)? {
            break;
        }
        flips = k;
    }
    Ok(StructureBudget {
        flips,
        abstain: false,
    })
}

/// Joint attribute budget: the smallest per-structure-sample radius.
/// `None` when no structure sample was certified.
pub fn joint_attribute_budget(per_sample_radii: &[f64]) -> Option<f64> {
    per_sample_radii.iter().copied().reduce(f64::min)
}

/// Certified budgets of a successful run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifiedBudgets {
    /// Unordered edge flips.
    pub eps_a: usize,
    /// ℓ2 norm in normalized attribute units.
    pub eps_x: f64,
}
