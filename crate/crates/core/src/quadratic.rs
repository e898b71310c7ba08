//! Quadratic approximation of the Hamiltonians around zero arguments.
//!
//! With every `H` replaced by its second-order Taylor polynomial at 0 the
//! value function is quadratic, `−A_ε q² − B_ε q + const`, and `A_ε, B_ε`
//! solve two scalar equations whose first-order expansion in `ε` is
//! explicit. The closed forms for exponential intensities serve as oracles
//! for the grid-based pipeline.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonians::{hamiltonian, LegMask};
use crate::model::{ImpactCurve, IntensityCurve, MarketModel, ReadingCurve, Side};
use crate::perturbation::greedy_adjustment;

/// Scalar sums entering the quadratic equations. Names follow the
/// derivative order and size power of each sum: `f_plus_21` is
/// `Σ Δ (H^b'' + H^a'')(0)`, `f_minus_22` is `Σ Δ² (H^b'' − H^a'')(0)`,
/// `f_minus_11` is `Σ Δ (H^b' − H^a')(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadraticConstants {
    pub f_plus_21: f64,
    pub f_minus_22: f64,
    pub f_minus_11: f64,
    pub sigma_plus_10: f64,
    pub sigma_minus_31: f64,
    pub source_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadraticCoefficients {
    pub rho: f64,
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl QuadraticCoefficients {
    pub fn a_eps(&self, epsilon: f64) -> f64 {
        self.a + epsilon * self.a_prime
    }

    pub fn b_eps(&self, epsilon: f64) -> f64 {
        self.b + epsilon * self.b_prime
    }
}

struct LegAtZero {
    size: f64,
    h_d1: f64,
    h_d2: f64,
    slope: f64,
    lz: f64,
    lz_d1: f64,
}

fn leg_at_zero(model: &MarketModel, tier: usize, k: usize, side: Side) -> Result<(LegAtZero, f64)> {
    let spec = &model.tiers[tier];
    let curve = spec.intensity(k, side);
    let h = hamiltonian(curve, 0.0, model.quote_domain)?;
    let lam = curve.eval(h.argmax)?;
    let z = spec.impact[k].eval(h.argmax);
    Ok((
        LegAtZero {
            size: model.ladder.size(k),
            h_d1: h.d1,
            h_d2: h.d2,
            slope: lam.d1,
            lz: lam.value * z.value,
            lz_d1: lam.d1 * z.value + lam.value * z.d1,
        },
        h.argmax,
    ))
}

/// Evaluates every sum at the myopic quotes `δ̃*(0)`.
pub fn compute_constants(model: &MarketModel) -> Result<QuadraticConstants> {
    let mut c = QuadraticConstants {
        f_plus_21: 0.0,
        f_minus_22: 0.0,
        f_minus_11: 0.0,
        sigma_plus_10: 0.0,
        sigma_minus_31: 0.0,
        source_s: 0.0,
    };
    for n in 0..model.n_tiers() {
        let spec = &model.tiers[n];
        let mut legs = Vec::with_capacity(model.n_sizes());
        let mut skew = 0.0;
        for k in 0..model.n_sizes() {
            let (b, db) = leg_at_zero(model, n, k, Side::Bid)?;
            let (a, da) = leg_at_zero(model, n, k, Side::Ask)?;
            skew += spec.weights[k] * (da - db);
            legs.push((b, a));
        }
        let j = spec.reading.eval(skew);
        c.source_s += j.value;
        for (k, (b, a)) in legs.iter().enumerate() {
            let w = spec.weights[k];
            let bracket = |leg: &LegAtZero, r: f64| {
                leg.h_d2 / leg.slope * (w * j.d1 + r * leg.lz_d1)
            };
            let d = b.size;
            c.f_plus_21 += d * (b.h_d2 + a.h_d2);
            c.f_minus_22 += d * d * (b.h_d2 - a.h_d2);
            c.f_minus_11 += d * (b.h_d1 - a.h_d1);
            c.sigma_plus_10 += bracket(b, 1.0) + bracket(a, 1.0);
            c.sigma_minus_31 += d * (bracket(b, 3.0) - bracket(a, 3.0));
            c.source_s -= b.lz - a.lz;
        }
    }
    Ok(c)
}

/// `A_0, B_0` and their `ε`-derivatives. `rho` may be 0 when `γσ² > 0`.
pub fn solve_riccati(
    c: &QuadraticConstants,
    sigma: f64,
    gamma: f64,
    rho: f64,
) -> Result<QuadraticCoefficients> {
    let f = c.f_plus_21;
    if !(f > 0.0) {
        return Err(Error::Riccati(format!("F_plus_21 = {f} is not positive")));
    }
    let gs2 = gamma * sigma * sigma;
    let root = (rho * rho + 4.0 * gs2 * f).sqrt();
    if !(rho + root > 0.0) {
        return Err(Error::Riccati("rho and gamma·sigma² both vanish".into()));
    }
    // conjugate form of (−ρ + √(ρ² + 4γσ²F)) / (4F)
    let a = gs2 / (rho + root);
    let d2 = rho + 2.0 * a * f;
    let d4 = rho + 4.0 * a * f;
    let b = -2.0 * a * (a * c.f_minus_22 + c.f_minus_11) / d2;
    let a_prime = -2.0 * a * c.sigma_plus_10 / d4;
    let b_prime = -(b * c.sigma_plus_10 + a * c.sigma_minus_31 + c.source_s
        - 4.0 * a * c.sigma_plus_10 / d4 * (b * f + 2.0 * a * c.f_minus_22 + c.f_minus_11))
        / d2;
    Ok(QuadraticCoefficients {
        rho,
        a,
        a_prime,
        b,
        b_prime,
    })
}

/// Left-hand sides of the `A` and `B` equations at `A_ε, B_ε`.
pub fn riccati_residuals(
    c: &QuadraticConstants,
    k: &QuadraticCoefficients,
    sigma: f64,
    gamma: f64,
    epsilon: f64,
) -> [f64; 2] {
    let a = k.a_eps(epsilon);
    let b = k.b_eps(epsilon);
    let rho = k.rho;
    let f = c.f_plus_21;
    [
        rho * a - 0.5 * gamma * sigma * sigma + 2.0 * a * a * f + 2.0 * epsilon * a * c.sigma_plus_10,
        rho * b
            + 2.0 * a * b * f
            + 2.0 * a * a * c.f_minus_22
            + 2.0 * a * c.f_minus_11
            + epsilon * b * c.sigma_plus_10
            + epsilon * a * c.sigma_minus_31
            + epsilon * c.source_s,
    ]
}

/// Quotes per `[tier][size]` as `[bid, ask]`.
pub type LadderQuotes = Vec<Vec<[f64; 2]>>;

/// Greedy quotes of `−A_0 q² − B_0 q`.
pub fn quadratic_quotes(k: &QuadraticCoefficients, model: &MarketModel, q: f64) -> Result<LadderQuotes> {
    model
        .tiers
        .iter()
        .map(|spec| {
            (0..model.n_sizes())
                .map(|j| {
                    let d = model.ladder.size(j);
                    let pb = k.a * (2.0 * q + d) + k.b;
                    let pa = k.a * (-2.0 * q + d) - k.b;
                    let bid = hamiltonian(spec.intensity(j, Side::Bid), pb, model.quote_domain)?;
                    let ask = hamiltonian(spec.intensity(j, Side::Ask), pa, model.quote_domain)?;
                    Ok([bid.argmax, ask.argmax])
                })
                .collect()
        })
        .collect()
}

/// First-order quote adjustments per unit `ε`, with the value correction
/// `−A_0' q² − B_0' q` and the greedy terms at the quadratic quotes.
pub fn quadratic_adjustments(
    model: &MarketModel,
    k: &QuadraticCoefficients,
    q: f64,
) -> Result<LadderQuotes> {
    let quotes = quadratic_quotes(k, model, q)?;
    let mask = LegMask::all(model.n_sizes());
    let mut out = Vec::with_capacity(model.n_tiers());
    for (n, tq) in quotes.iter().enumerate() {
        let spec = &model.tiers[n];
        let bids: Vec<f64> = tq.iter().map(|p| p[0]).collect();
        let asks: Vec<f64> = tq.iter().map(|p| p[1]).collect();
        let (gb, ga) = greedy_adjustment(model, n, q, &bids, &asks, &mask)?;
        let mut row = Vec::with_capacity(model.n_sizes());
        for j in 0..model.n_sizes() {
            let d = model.ladder.size(j);
            let df_bid = k.a_prime * (2.0 * q + d) + k.b_prime;
            let df_ask = k.a_prime * (-2.0 * q + d) - k.b_prime;
            let cb = spec.intensity(j, Side::Bid).eval(bids[j])?.c;
            let ca = spec.intensity(j, Side::Ask).eval(asks[j])?.c;
            row.push([df_bid / cb + gb[j], df_ask / ca + ga[j]]);
        }
        out.push(row);
    }
    Ok(out)
}

/// Constants and coefficients for one model at its own `ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadraticApprox {
    pub constants: QuadraticConstants,
    pub coefficients: QuadraticCoefficients,
}

impl QuadraticApprox {
    pub fn new(model: &MarketModel) -> Result<Self> {
        let constants = compute_constants(model)?;
        let coefficients = solve_riccati(&constants, model.sigma, model.gamma, model.rho)?;
        Ok(QuadraticApprox {
            constants,
            coefficients,
        })
    }

    pub fn quotes(&self, model: &MarketModel, q: f64) -> Result<LadderQuotes> {
        quadratic_quotes(&self.coefficients, model, q)
    }

    pub fn adjustments(&self, model: &MarketModel, q: f64) -> Result<LadderQuotes> {
        quadratic_adjustments(model, &self.coefficients, q)
    }
}

struct ExpLeg {
    lambda0: f64,
    kappa: f64,
    alpha: f64,
    beta: f64,
}

fn exponential_legs(model: &MarketModel) -> Result<Vec<Vec<ExpLeg>>> {
    model
        .tiers
        .iter()
        .enumerate()
        .map(|(n, spec)| {
            (0..model.n_sizes())
                .map(|k| {
                    let (lambda0, kappa) = match (&spec.intensity_bid[k], &spec.intensity_ask[k]) {
                        (
                            IntensityCurve::Exponential { lambda0, kappa },
                            IntensityCurve::Exponential {
                                lambda0: l2,
                                kappa: k2,
                            },
                        ) if l2 == lambda0 && k2 == kappa => (*lambda0, *kappa),
                        _ => {
                            return Err(Error::FamilyMismatch(format!(
                                "tier {} size {}: closed forms need identical exponential bid and ask intensities",
                                n + 1,
                                k + 1
                            )))
                        }
                    };
                    let (alpha, beta) = match spec.impact[k] {
                        ImpactCurve::Zero => (0.0, 0.0),
                        ImpactCurve::Exponential { alpha, beta } => (alpha, beta),
                    };
                    Ok(ExpLeg {
                        lambda0,
                        kappa,
                        alpha,
                        beta,
                    })
                })
                .collect()
        })
        .collect()
}

fn reading_slope(r: &ReadingCurve) -> f64 {
    match *r {
        ReadingCurve::Zero => 0.0,
        ReadingCurve::Linear { slope } => slope,
    }
}

/// Fully simplified `ρ → 0` adjustments for symmetric exponential models
/// with linear reading and exponential impact.
pub fn closed_form_adjustments_exponential(model: &MarketModel, q: f64) -> Result<LadderQuotes> {
    let legs = exponential_legs(model)?;
    let e = std::f64::consts::E;
    let mut depth = 0.0;
    let mut info = 0.0;
    for (n, tier) in legs.iter().enumerate() {
        let spec = &model.tiers[n];
        let s = reading_slope(&spec.reading);
        for (k, l) in tier.iter().enumerate() {
            depth += model.ladder.size(k) * l.lambda0 * l.kappa;
            info += e * spec.weights[k] * s
                + l.alpha * l.lambda0 * (l.beta - l.kappa) * (l.beta / l.kappa).exp();
        }
    }
    let global = info / depth;
    let two_a = model.sigma * (model.gamma * e / (2.0 * depth)).sqrt();

    let mut out = Vec::with_capacity(legs.len());
    for (n, tier) in legs.iter().enumerate() {
        let spec = &model.tiers[n];
        let s = reading_slope(&spec.reading);
        let mut row = Vec::with_capacity(tier.len());
        for (k, l) in tier.iter().enumerate() {
            let d = model.ladder.size(k);
            let w = spec.weights[k];
            let side = |sign: f64| {
                let x = sign * q + 0.5 * d;
                let quote = 1.0 / l.kappa + two_a * x;
                let lam = l.lambda0 * (-l.kappa * quote).exp();
                let zeta = l.alpha * (l.beta * quote).exp();
                let reading = if w * s == 0.0 {
                    0.0
                } else {
                    q * w * s / (d * l.kappa * lam)
                };
                global * x
                    - sign * reading
                    - (sign * q + d) / d * (l.beta - l.kappa) / l.kappa * zeta
            };
            row.push([side(1.0), side(-1.0)]);
        }
        out.push(row);
    }
    Ok(out)
}
