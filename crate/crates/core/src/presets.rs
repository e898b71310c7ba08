//! Built-in model configurations: the two-tier FX ladders used for the
//! price-reading and adverse-selection illustrations, plus small models
//! used across the test suites.

use crate::model::{
    ImpactCurve, IntensityCurve, MarketModel, QuoteDomain, ReadingCurve, SizeLadder, TierSpec,
};

pub const STANDARD_LADDER: [f64; 6] = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0];
pub const STANDARD_LAMBDA0: [f64; 6] = [1000.0, 400.0, 300.0, 200.0, 60.0, 40.0];
pub const KAPPA: f64 = 3.0;
pub const SIGMA: f64 = 100.0;
pub const GAMMA: f64 = 1e-5;
pub const RHO: f64 = 0.01;
pub const EPSILON: f64 = 0.05;

fn two_tier(lambda0: [&[f64]; 2], sizes: &[f64], tiers: [TierParts; 2]) -> MarketModel {
    let built = tiers
        .into_iter()
        .zip(lambda0)
        .map(|(parts, l0)| {
            TierSpec::symmetric_exponential(
                &l0[..sizes.len()],
                KAPPA,
                parts.impact,
                parts.weights,
                parts.reading,
            )
        })
        .collect();
    MarketModel {
        ladder: SizeLadder::new(sizes.to_vec()),
        tiers: built,
        sigma: SIGMA,
        gamma: GAMMA,
        rho: RHO,
        epsilon: EPSILON,
        quote_domain: QuoteDomain::default(),
    }
}

struct TierParts {
    impact: Vec<ImpactCurve>,
    weights: Vec<f64>,
    reading: ReadingCurve,
}

fn reading_tiers(k: usize) -> [TierParts; 2] {
    [
        TierParts {
            impact: vec![ImpactCurve::Zero; k],
            weights: vec![0.0; k],
            reading: ReadingCurve::Linear { slope: 1.0 },
        },
        TierParts {
            impact: vec![ImpactCurve::Zero; k],
            weights: vec![1.0; k],
            reading: ReadingCurve::Linear { slope: 1.0 },
        },
    ]
}

/// Price reading only: tier 1 without skew sniffers (w = 0), tier 2 with
/// (w = 1), equal intensities.
pub fn price_reading() -> MarketModel {
    two_tier(
        [&STANDARD_LAMBDA0, &STANDARD_LAMBDA0],
        &STANDARD_LADDER,
        reading_tiers(6),
    )
}

/// Price reading with a liquid first tier and a thin skew-sniffing tier.
pub fn price_reading_thin_readers() -> MarketModel {
    two_tier(
        [
            &[1500.0, 600.0, 450.0, 300.0, 90.0, 60.0],
            &[500.0, 200.0, 150.0, 100.0, 30.0, 20.0],
        ],
        &STANDARD_LADDER,
        reading_tiers(6),
    )
}

/// Adverse selection only: standard tier 1, informed tier 2 with
/// `α = 0.1` and slow signals `β/κ = 0.9`.
pub fn adverse_selection() -> MarketModel {
    adverse_selection_with_ratio(0.9)
}

pub fn adverse_selection_with_ratio(beta_over_kappa: f64) -> MarketModel {
    two_tier(
        [&STANDARD_LAMBDA0, &STANDARD_LAMBDA0],
        &STANDARD_LADDER,
        [
            TierParts {
                impact: vec![ImpactCurve::Zero; 6],
                weights: vec![0.0; 6],
                reading: ReadingCurve::Zero,
            },
            TierParts {
                impact: vec![
                    ImpactCurve::Exponential {
                        alpha: 0.1,
                        beta: beta_over_kappa * KAPPA,
                    };
                    6
                ],
                weights: vec![0.0; 6],
                reading: ReadingCurve::Zero,
            },
        ],
    )
}

/// Price-reading configuration restricted to sizes (1, 2, 5).
pub fn price_reading_reduced() -> MarketModel {
    two_tier(
        [&STANDARD_LAMBDA0, &STANDARD_LAMBDA0],
        &STANDARD_LADDER[..3],
        reading_tiers(3),
    )
}

/// One tier, sizes (1, 2), reading and impact both switched on.
pub fn two_size_test_model() -> MarketModel {
    MarketModel {
        ladder: SizeLadder::new(vec![1.0, 2.0]),
        tiers: vec![TierSpec::symmetric_exponential(
            &[1000.0, 400.0],
            KAPPA,
            vec![
                ImpactCurve::Exponential {
                    alpha: 0.1,
                    beta: 2.7,
                };
                2
            ],
            vec![1.0, 0.5],
            ReadingCurve::Linear { slope: 1.0 },
        )],
        sigma: SIGMA,
        gamma: GAMMA,
        rho: RHO,
        epsilon: EPSILON,
        quote_domain: QuoteDomain::default(),
    }
}

/// Two tiers, sizes (1, 2, 5); the second tier has asymmetric intensities,
/// reading and impact together.
pub fn combined_test_model() -> MarketModel {
    let sizes = [1.0, 2.0, 5.0];
    let plain = TierSpec::symmetric_exponential(
        &[1000.0, 400.0, 300.0],
        KAPPA,
        vec![ImpactCurve::Zero; 3],
        vec![0.0; 3],
        ReadingCurve::Zero,
    );
    let informed = TierSpec {
        intensity_bid: [800.0, 300.0, 200.0]
            .iter()
            .map(|&l| IntensityCurve::exponential(l, 3.0))
            .collect(),
        intensity_ask: [700.0, 350.0, 250.0]
            .iter()
            .map(|&l| IntensityCurve::exponential(l, 2.5))
            .collect(),
        impact: vec![
            ImpactCurve::Exponential {
                alpha: 0.1,
                beta: 2.0,
            };
            3
        ],
        weights: vec![1.0, 0.5, 0.2],
        reading: ReadingCurve::Linear { slope: 0.8 },
    };
    MarketModel {
        ladder: SizeLadder::new(sizes.to_vec()),
        tiers: vec![plain, informed],
        sigma: SIGMA,
        gamma: GAMMA,
        rho: RHO,
        epsilon: EPSILON,
        quote_domain: QuoteDomain::default(),
    }
}

/// Single tier, single size: the smallest non-trivial model.
pub fn single_leg(lambda0: f64, kappa: f64) -> MarketModel {
    MarketModel {
        ladder: SizeLadder::new(vec![1.0]),
        tiers: vec![TierSpec::symmetric_exponential(
            &[lambda0],
            kappa,
            vec![ImpactCurve::Zero],
            vec![0.0],
            ReadingCurve::Zero,
        )],
        sigma: SIGMA,
        gamma: GAMMA,
        rho: RHO,
        epsilon: 0.0,
        quote_domain: QuoteDomain::default(),
    }
}
