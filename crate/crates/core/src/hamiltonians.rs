//! Single-quote Hamiltonians `H(p) = sup_δ Λ(δ)(δ − p)` and the joint
//! per-tier Hamiltonian with informational terms.

use nalgebra::{DMatrix, DVector};

use crate::error::{DomainBound, Error, Result};
use crate::model::{IntensityCurve, MarketModel, QuoteDomain, Side};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianEval {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    pub argmax: f64,
}

fn admissible(curve: &IntensityCurve, domain: QuoteDomain) -> (f64, f64) {
    let (lo, hi) = curve.hull();
    (domain.min.max(lo), domain.max.min(hi))
}

/// Evaluates `H(p)` and its maximizer. Fails when the unconstrained
/// maximizer lies outside the admissible quote interval.
pub fn hamiltonian(curve: &IntensityCurve, p: f64, domain: QuoteDomain) -> Result<HamiltonianEval> {
    let (lo, hi) = admissible(curve, domain);
    let (eval, pinned) = hamiltonian_clamped(curve, p, domain)?;
    match pinned {
        None => Ok(eval),
        Some(bound) => Err(Error::QuoteDomain {
            p,
            bound,
            limit: if bound == DomainBound::Lower { lo } else { hi },
        }),
    }
}

/// Box-constrained version of [`hamiltonian`]: when the maximizer escapes
/// the admissible interval it is pinned to the violated bound, which is
/// reported alongside. `H` stays convex and `H' = −Λ(argmax)` still holds.
pub fn hamiltonian_clamped(
    curve: &IntensityCurve,
    p: f64,
    domain: QuoteDomain,
) -> Result<(HamiltonianEval, Option<DomainBound>)> {
    let (lo, hi) = admissible(curve, domain);
    let (argmax, pinned) = match *curve {
        IntensityCurve::Exponential { kappa, .. } => {
            let d = p + 1.0 / kappa;
            if d < lo {
                (lo, Some(DomainBound::Lower))
            } else if d > hi {
                (hi, Some(DomainBound::Upper))
            } else {
                (d, None)
            }
        }
        IntensityCurve::Tabulated(_) => tabulated_argmax(curve, p, lo, hi)?,
    };
    let e = curve.eval(argmax)?;
    let d2 = if pinned.is_some() { 0.0 } else { -e.d1 / e.c };
    Ok((
        HamiltonianEval {
            value: e.value * (argmax - p),
            d1: -e.value,
            d2,
            argmax,
        },
        pinned,
    ))
}

// first-order condition Λ'(δ)(δ − p) + Λ(δ) = 0; φ(δ) = Λ(δ)(δ − p) is
// unimodal when inf c > 0, so the sign of the FOC at the ends decides pinning
fn tabulated_argmax(
    curve: &IntensityCurve,
    p: f64,
    lo: f64,
    hi: f64,
) -> Result<(f64, Option<DomainBound>)> {
    let foc = |d: f64| -> Result<(f64, f64)> {
        let e = curve.eval(d)?;
        Ok((e.d1 * (d - p) + e.value, e.d2 * (d - p) + 2.0 * e.d1))
    };
    let (g_lo, _) = foc(lo)?;
    if g_lo <= 0.0 {
        return Ok((lo, Some(DomainBound::Lower)));
    }
    let (g_hi, _) = foc(hi)?;
    if g_hi >= 0.0 {
        return Ok((hi, Some(DomainBound::Upper)));
    }
    let (mut a, mut b) = (lo, hi);
    let mut x = 0.5 * (a + b);
    for _ in 0..200 {
        let (g, dg) = foc(x)?;
        if g == 0.0 {
            return Ok((x, None));
        }
        if g > 0.0 {
            a = x;
        } else {
            b = x;
        }
        if b - a < 1e-13 {
            break;
        }
        let newton = x - g / dg;
        let next = if dg < 0.0 && newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        if (next - x).abs() < 1e-14 * (1.0 + x.abs()) {
            x = next;
            break;
        }
        x = next;
    }
    Ok((x, None))
}

/// `dδ̃*/dp = 1/c(δ̃*(p))`.
pub fn argmax_derivative(curve: &IntensityCurve, p: f64, domain: QuoteDomain) -> Result<f64> {
    let h = hamiltonian(curve, p, domain)?;
    Ok(1.0 / curve.eval(h.argmax)?.c)
}

/// `Σ_{n,k} Δ^k (H^b(0) + H^a(0))`: reward rate of myopic quoting.
pub fn myopic_reward_rate(model: &MarketModel) -> Result<f64> {
    let mut total = 0.0;
    for tier in &model.tiers {
        for k in 0..model.n_sizes() {
            for side in Side::BOTH {
                let (h, _) = hamiltonian_clamped(tier.intensity(k, side), 0.0, model.quote_domain)?;
                total += model.ladder.size(k) * h.value;
            }
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LegStatus {
    Active,
    Pinned(DomainBound),
    /// The fill would leave the inventory grid; the leg is not quoted.
    Disabled,
}

/// Which (size, side) legs of a tier are allowed to trade.
#[derive(Debug, Clone, PartialEq)]
pub struct LegMask {
    pub bid: Vec<bool>,
    pub ask: Vec<bool>,
}

impl LegMask {
    pub fn all(k: usize) -> Self {
        LegMask {
            bid: vec![true; k],
            ask: vec![true; k],
        }
    }

    pub fn enabled(&self, k: usize, side: Side) -> bool {
        match side {
            Side::Bid => self.bid[k],
            Side::Ask => self.ask[k],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TierHamiltonianEval {
    pub value: f64,
    pub bids: Vec<f64>,
    pub asks: Vec<f64>,
    pub bid_status: Vec<LegStatus>,
    pub ask_status: Vec<LegStatus>,
    pub iterations: usize,
}

/// Value, gradient and Hessian of the per-tier integrand `ℬ^n` with respect
/// to the offsets, ordered `[bids…, asks…]`. Disabled legs contribute
/// nothing, not even to the skew.
#[derive(Debug, Clone)]
pub struct TierObjective {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// Inputs of `ℬ^n` other than the offsets.
#[derive(Debug, Clone, Copy)]
pub struct TierPoint<'a> {
    pub model: &'a MarketModel,
    pub tier: usize,
    pub q: f64,
    pub p_bid: &'a [f64],
    pub p_ask: &'a [f64],
    pub epsilon: f64,
    pub mask: &'a LegMask,
}

impl TierPoint<'_> {
    fn check(&self) -> Result<()> {
        let k = self.model.n_sizes();
        for (what, got) in [
            ("bid differences", self.p_bid.len()),
            ("ask differences", self.p_ask.len()),
            ("bid mask", self.mask.bid.len()),
            ("ask mask", self.mask.ask.len()),
        ] {
            if got != k {
                return Err(Error::LengthMismatch {
                    what,
                    expected: k,
                    got,
                });
            }
        }
        Ok(())
    }

    fn skew(&self, x: &[f64]) -> f64 {
        let k = self.model.n_sizes();
        let w = &self.model.tiers[self.tier].weights;
        let mut s = 0.0;
        for j in 0..k {
            if self.mask.ask[j] {
                s += w[j] * x[k + j];
            }
            if self.mask.bid[j] {
                s -= w[j] * x[j];
            }
        }
        s
    }

    /// Evaluates `ℬ^n` only.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let model = self.model;
        let spec = &model.tiers[self.tier];
        let k = model.n_sizes();
        let eps = self.epsilon;
        let mut v = self.q * eps * spec.reading.eval(self.skew(x)).value;
        for j in 0..k {
            let size = model.ladder.size(j);
            if self.mask.bid[j] {
                let d = x[j];
                let lam = spec.intensity_bid[j].eval(d)?.value;
                let z = spec.impact[j].eval(d).value;
                v += size * lam * (d - self.p_bid[j] - (self.q + size) / size * eps * z);
            }
            if self.mask.ask[j] {
                let d = x[k + j];
                let lam = spec.intensity_ask[j].eval(d)?.value;
                let z = spec.impact[j].eval(d).value;
                v += size * lam * (d - self.p_ask[j] + (self.q - size) / size * eps * z);
            }
        }
        Ok(v)
    }

    pub fn objective(&self, x: &[f64]) -> Result<TierObjective> {
        let model = self.model;
        let spec = &model.tiers[self.tier];
        let k = model.n_sizes();
        let eps = self.epsilon;
        let q = self.q;
        let mut grad = DVector::zeros(2 * k);
        let mut hess = DMatrix::zeros(2 * k, 2 * k);
        let r = spec.reading.eval(self.skew(x));
        let mut value = q * eps * r.value;

        // signed skew weights: −w for bids, +w for asks
        let mut sw = vec![0.0; 2 * k];
        for j in 0..k {
            if self.mask.bid[j] {
                sw[j] = -spec.weights[j];
            }
            if self.mask.ask[j] {
                sw[k + j] = spec.weights[j];
            }
        }
        for i in 0..2 * k {
            grad[i] += q * eps * r.d1 * sw[i];
            if r.d2 != 0.0 {
                for l in 0..2 * k {
                    hess[(i, l)] += q * eps * r.d2 * sw[i] * sw[l];
                }
            }
        }

        for j in 0..k {
            let size = model.ladder.size(j);
            for side in Side::BOTH {
                if !self.mask.enabled(j, side) {
                    continue;
                }
                let (idx, p, carry) = match side {
                    // bid fill: (q + Δ) ζ is lost; ask fill: (q − Δ) ζ is gained
                    Side::Bid => (j, self.p_bid[j], -(q + size)),
                    Side::Ask => (k + j, self.p_ask[j], q - size),
                };
                let d = x[idx];
                let lam = spec.intensity(j, side).eval(d)?;
                let z = spec.impact[j].eval(d);
                let lz = lam.value * z.value;
                let lz1 = lam.d1 * z.value + lam.value * z.d1;
                let lz2 = lam.d2 * z.value + 2.0 * lam.d1 * z.d1 + lam.value * z.d2;
                value += size * lam.value * (d - p) + carry * eps * lz;
                grad[idx] += size * (lam.d1 * (d - p) + lam.value) + carry * eps * lz1;
                hess[(idx, idx)] += size * (lam.d2 * (d - p) + 2.0 * lam.d1) + carry * eps * lz2;
            }
        }
        Ok(TierObjective {
            value,
            gradient: grad,
            hessian: hess,
        })
    }
}

const GRAD_TOL: f64 = 1e-10;
const MAX_NEWTON: usize = 200;

/// `ℋ^n(q, p^b, p^a, ε)` with every leg enabled.
pub fn tier_hamiltonian(
    model: &MarketModel,
    tier: usize,
    q: f64,
    p_bid: &[f64],
    p_ask: &[f64],
    epsilon: f64,
) -> Result<TierHamiltonianEval> {
    let mask = LegMask::all(model.n_sizes());
    tier_hamiltonian_masked(&TierPoint {
        model,
        tier,
        q,
        p_bid,
        p_ask,
        epsilon,
        mask: &mask,
    })
}

/// Joint maximization of `ℬ^n` over the enabled offsets by projected damped
/// Newton, warm-started at the decoupled maximizers.
pub fn tier_hamiltonian_masked(pt: &TierPoint<'_>) -> Result<TierHamiltonianEval> {
    pt.check()?;
    let model = pt.model;
    let spec = &model.tiers[pt.tier];
    let k = model.n_sizes();
    let dom = model.quote_domain;

    let mut x = vec![dom.max; 2 * k];
    let mut lo = vec![dom.max; 2 * k];
    let mut hi = vec![dom.max; 2 * k];
    let mut free = vec![false; 2 * k];
    let mut decoupled_value = 0.0;
    for j in 0..k {
        for side in Side::BOTH {
            if !pt.mask.enabled(j, side) {
                continue;
            }
            let (idx, p) = match side {
                Side::Bid => (j, pt.p_bid[j]),
                Side::Ask => (k + j, pt.p_ask[j]),
            };
            let curve = spec.intensity(j, side);
            let (h, _) = hamiltonian_clamped(curve, p, dom)?;
            let (a, b) = admissible(curve, dom);
            x[idx] = h.argmax;
            lo[idx] = a;
            hi[idx] = b;
            free[idx] = true;
            decoupled_value += model.ladder.size(j) * h.value;
        }
    }

    let informed = pt.epsilon != 0.0
        && !(spec.reading.is_zero() && spec.impact.iter().all(|z| z.is_zero()));
    let mut iterations = 0;
    let value = if informed {
        // the reading payoff is unbounded in the skew, so local maxima at the
        // upper bound compete with the interior one; keep the best of three starts
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut first_err = None;
        for push in [None, Some(Side::Bid), Some(Side::Ask)] {
            let mut start = x.clone();
            if let Some(side) = push {
                let range = match side {
                    Side::Bid => 0..k,
                    Side::Ask => k..2 * k,
                };
                for idx in range.filter(|&i| free[i]) {
                    start[idx] = hi[idx];
                }
            }
            match projected_newton(pt, &mut start, &lo, &hi, &free) {
                Ok((v, it)) => {
                    iterations += it;
                    if best.as_ref().is_none_or(|b| v > b.0) {
                        best = Some((v, start));
                    }
                }
                Err(e) if push.is_none() => first_err = Some(e),
                Err(_) => {}
            }
        }
        let Some((v, bx)) = best else {
            return Err(first_err.expect("failed starts leave an error"));
        };
        x = bx;
        v
    } else {
        decoupled_value
    };

    let status = |idx: usize| -> LegStatus {
        if !free[idx] {
            LegStatus::Disabled
        } else if x[idx] <= lo[idx] {
            LegStatus::Pinned(DomainBound::Lower)
        } else if x[idx] >= hi[idx] {
            LegStatus::Pinned(DomainBound::Upper)
        } else {
            LegStatus::Active
        }
    };
    Ok(TierHamiltonianEval {
        value,
        bids: x[..k].to_vec(),
        asks: x[k..].to_vec(),
        bid_status: (0..k).map(status).collect(),
        ask_status: (k..2 * k).map(status).collect(),
        iterations,
    })
}

fn projected_newton(
    pt: &TierPoint<'_>,
    x: &mut [f64],
    lo: &[f64],
    hi: &[f64],
    enabled: &[bool],
) -> Result<(f64, usize)> {
    let n = x.len();
    let mut obj = pt.objective(x)?;
    let mut last_grad = f64::INFINITY;
    for iter in 0..MAX_NEWTON {
        let g = &obj.gradient;
        let free = free_set(g, x, lo, hi, enabled);
        let pg = projected_gradient(g, x, lo, hi, enabled);
        last_grad = pg;
        if pg <= GRAD_TOL {
            return Ok((obj.value, iter));
        }

        let m = free.len();
        let neg_h = DMatrix::from_fn(m, m, |a, b| -obj.hessian[(free[a], free[b])]);
        let rhs = DVector::from_fn(m, |a, _| g[free[a]]);
        let direction: Vec<f64> = match neg_h.cholesky() {
            Some(ch) => {
                let d = ch.solve(&rhs);
                let mut full = vec![0.0; n];
                for (a, &i) in free.iter().enumerate() {
                    full[i] = d[a];
                }
                full
            }
            None => {
                coordinate_sweep(pt, x, lo, hi, &free)?;
                obj = pt.objective(x)?;
                continue;
            }
        };

        let decrement: f64 = (0..n).map(|i| g[i] * direction[i]).sum();
        // below this the value change is lost in roundoff; judge steps by the gradient
        let near = decrement <= 1e-10 * (1.0 + obj.value.abs());

        let mut step = 1.0;
        let mut accepted = false;
        let mut trial = x.to_vec();
        for _ in 0..60 {
            for i in 0..n {
                trial[i] = if enabled[i] {
                    (x[i] + step * direction[i]).clamp(lo[i], hi[i])
                } else {
                    x[i]
                };
            }
            let gain: f64 = (0..n).map(|i| g[i] * (trial[i] - x[i])).sum();
            let v = pt.value(&trial)?;
            if v >= obj.value + 1e-4 * gain {
                accepted = true;
                break;
            }
            if near && projected_gradient(&pt.objective(&trial)?.gradient, &trial, lo, hi, enabled) < pg {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        let moved = (0..n)
            .map(|i| (trial[i] - x[i]).abs() / (1.0 + x[i].abs()))
            .fold(0.0, f64::max);
        if !accepted || moved < 1e-15 {
            if pg <= 1e-6 {
                return Ok((obj.value, iter));
            }
            return Err(Error::NonConvergence {
                what: "tier Hamiltonian",
                iterations: iter,
                residual: pg,
            });
        }
        x.copy_from_slice(&trial);
        obj = pt.objective(x)?;
    }
    Err(Error::NonConvergence {
        what: "tier Hamiltonian",
        iterations: MAX_NEWTON,
        residual: last_grad,
    })
}

fn free_set(g: &DVector<f64>, x: &[f64], lo: &[f64], hi: &[f64], enabled: &[bool]) -> Vec<usize> {
    (0..x.len())
        .filter(|&i| enabled[i] && !((x[i] <= lo[i] && g[i] < 0.0) || (x[i] >= hi[i] && g[i] > 0.0)))
        .collect()
}

fn projected_gradient(g: &DVector<f64>, x: &[f64], lo: &[f64], hi: &[f64], enabled: &[bool]) -> f64 {
    free_set(g, x, lo, hi, enabled)
        .into_iter()
        .map(|i| g[i].abs())
        .fold(0.0, f64::max)
}

// one pass of 1-D maximizations along each free coordinate, bracketing the
// sign change of the partial derivative
fn coordinate_sweep(
    pt: &TierPoint<'_>,
    x: &mut [f64],
    lo: &[f64],
    hi: &[f64],
    free: &[usize],
) -> Result<()> {
    for &i in free {
        let partial = |x: &mut [f64], v: f64| -> Result<f64> {
            let old = x[i];
            x[i] = v;
            let g = pt.objective(x)?.gradient[i];
            x[i] = old;
            Ok(g)
        };
        let g0 = partial(x, x[i])?;
        let (mut a, mut b) = if g0 > 0.0 { (x[i], hi[i]) } else { (lo[i], x[i]) };
        if partial(x, b)? > 0.0 {
            x[i] = b;
            continue;
        }
        if partial(x, a)? < 0.0 {
            x[i] = a;
            continue;
        }
        for _ in 0..100 {
            let mid = 0.5 * (a + b);
            if partial(x, mid)? > 0.0 {
                a = mid;
            } else {
                b = mid;
            }
            if b - a < 1e-14 {
                break;
            }
        }
        x[i] = 0.5 * (a + b);
    }
    Ok(())
}
