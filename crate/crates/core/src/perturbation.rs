//! First-order corrections in the informational scale `ε`.
//!
//! `ϑ_ε = θ + ε f + O(ε²)` where `f` solves a linear system driven by the
//! informational terms evaluated along the baseline quotes, and the
//! optimal quotes shift by `ε (D f / c + g)` where `g` is the greedy
//! response of the per-tier maximizers at frozen value differences.

use crate::banded::BandedMatrix;
use crate::error::{Error, Result};
use crate::hamiltonians::LegMask;
use crate::model::{MarketModel, Side};
use crate::solver::{QuoteStatus, QuoteSurface, TableKind, ValueTable};

fn check_shape(model: &MarketModel, quotes: &QuoteSurface) -> Result<()> {
    if quotes.n_tiers() != model.n_tiers() || quotes.n_sizes() != model.n_sizes() {
        return Err(Error::GridMismatch(format!(
            "quote surface has {}×{} legs, model has {}×{}",
            quotes.n_tiers(),
            quotes.n_sizes(),
            model.n_tiers(),
            model.n_sizes()
        )));
    }
    let step = model.ladder.smallest();
    if (quotes.grid.step - step).abs() > 1e-12 * step {
        return Err(Error::GridMismatch(format!(
            "grid step {} differs from the smallest trade size {step}",
            quotes.grid.step
        )));
    }
    Ok(())
}

/// Informational source at node `i`: per tier, the reading drift times
/// inventory minus the expected impact losses of each enabled leg.
pub fn source_term(model: &MarketModel, quotes: &QuoteSurface, i: usize) -> Result<(f64, Vec<f64>)> {
    check_shape(model, quotes)?;
    let q = quotes.grid.node(i);
    let mut per_tier = Vec::with_capacity(model.n_tiers());
    for (n, spec) in model.tiers.iter().enumerate() {
        let mask = quotes.tier_mask(n, i);
        let (bids, asks) = quotes.tier_quotes(n, i);
        let mut skew = 0.0;
        let mut r = 0.0;
        for k in 0..model.n_sizes() {
            let d = model.ladder.size(k);
            if mask.bid[k] {
                skew -= spec.weights[k] * bids[k];
                let lam = spec.intensity_bid[k].eval(bids[k])?.value;
                r -= (q + d) * lam * spec.impact[k].eval(bids[k]).value;
            }
            if mask.ask[k] {
                skew += spec.weights[k] * asks[k];
                let lam = spec.intensity_ask[k].eval(asks[k])?.value;
                r += (q - d) * lam * spec.impact[k].eval(asks[k]).value;
            }
        }
        r += q * spec.reading.eval(skew).value;
        per_tier.push(r);
    }
    Ok((per_tier.iter().sum(), per_tier))
}

/// Banded operator `(ρ + Σλ) f(q) − Σ λ^b f(q+Δ) − Σ λ^a f(q−Δ)` at the
/// baseline intensities, with its right-hand sides.
#[derive(Debug, Clone)]
pub struct CorrectionSystem {
    pub matrix: BandedMatrix,
    pub rhs: Vec<f64>,
    pub per_tier_rhs: Vec<Vec<f64>>,
}

pub fn assemble_correction_system(model: &MarketModel, quotes: &QuoteSurface) -> Result<CorrectionSystem> {
    check_shape(model, quotes)?;
    let grid = quotes.grid;
    let units = model.ladder.units();
    let band = *units.last().unwrap_or(&1);
    let mut matrix = BandedMatrix::zeros(grid.len(), band, band);
    let mut rhs = Vec::with_capacity(grid.len());
    let mut per_tier_rhs = vec![Vec::with_capacity(grid.len()); model.n_tiers()];
    for i in 0..grid.len() {
        matrix.add(i, i, model.rho);
        for (n, spec) in model.tiers.iter().enumerate() {
            for (k, &u) in units.iter().enumerate() {
                for side in Side::BOTH {
                    let Some(j) = grid.after_fill(i, u, side) else {
                        continue;
                    };
                    let rate = spec.intensity(k, side).eval(quotes.get(n, k, side, i))?.value;
                    matrix.add(i, i, rate);
                    matrix.add(i, j, -rate);
                }
            }
        }
        let (total, split) = source_term(model, quotes, i).map_err(|e| e.at_node(grid.node(i)))?;
        rhs.push(total);
        for (n, r) in split.into_iter().enumerate() {
            per_tier_rhs[n].push(r);
        }
    }
    Ok(CorrectionSystem {
        matrix,
        rhs,
        per_tier_rhs,
    })
}

#[derive(Debug, Clone)]
pub struct Correction {
    pub total: ValueTable,
    pub per_tier: Vec<ValueTable>,
    /// `max |M f − R|` of the total solve.
    pub residual: f64,
}

/// Solves for `f` and its per-tier parts by one banded factorization.
pub fn solve_f(model: &MarketModel, quotes: &QuoteSurface) -> Result<Correction> {
    let sys = assemble_correction_system(model, quotes)?;
    let lu = sys.matrix.clone().factor()?;
    let grid = quotes.grid;
    let table = |values| ValueTable {
        grid,
        values,
        kind: TableKind::Correction,
    };
    let total = lu.solve(&sys.rhs);
    let mf = sys.matrix.matvec(&total);
    let residual = mf
        .iter()
        .zip(&sys.rhs)
        .fold(0.0f64, |a, (x, r)| a.max((x - r).abs()));
    let per_tier = sys.per_tier_rhs.iter().map(|r| table(lu.solve(r))).collect();
    Ok(Correction {
        total: table(total),
        per_tier,
        residual,
    })
}

/// Greedy first-order shift of one tier's maximizers per unit `ε`,
/// `(g_bid, g_ask)` by size, at quotes `bids`, `asks` and inventory `q`.
/// Disabled legs get 0 and are left out of the skew.
pub fn greedy_adjustment(
    model: &MarketModel,
    tier: usize,
    q: f64,
    bids: &[f64],
    asks: &[f64],
    mask: &LegMask,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let spec = &model.tiers[tier];
    let k = model.n_sizes();
    for (what, got) in [("bid quotes", bids.len()), ("ask quotes", asks.len())] {
        if got != k {
            return Err(Error::LengthMismatch {
                what,
                expected: k,
                got,
            });
        }
    }
    let skew: f64 = (0..k)
        .map(|j| {
            let mut s = 0.0;
            if mask.ask[j] {
                s += spec.weights[j] * asks[j];
            }
            if mask.bid[j] {
                s -= spec.weights[j] * bids[j];
            }
            s
        })
        .sum();
    let jd = spec.reading.eval(skew).d1;
    let mut gb = vec![0.0; k];
    let mut ga = vec![0.0; k];
    for j in 0..k {
        let d = model.ladder.size(j);
        let read = q * spec.weights[j] * jd;
        if mask.bid[j] {
            let lam = spec.intensity_bid[j].eval(bids[j])?;
            let z = spec.impact[j].eval(bids[j]);
            let lz1 = lam.d1 * z.value + lam.value * z.d1;
            gb[j] = (read + (q + d) * lz1) / (d * lam.d1 * lam.c);
        }
        if mask.ask[j] {
            let lam = spec.intensity_ask[j].eval(asks[j])?;
            let z = spec.impact[j].eval(asks[j]);
            let lz1 = lam.d1 * z.value + lam.value * z.d1;
            ga[j] = (-read - (q - d) * lz1) / (d * lam.d1 * lam.c);
        }
    }
    Ok((gb, ga))
}

/// `g` per `[tier][size]` as `[bid, ask]` at node `i` of the baseline surface.
pub fn g_terms(model: &MarketModel, quotes: &QuoteSurface, i: usize) -> Result<Vec<Vec<[f64; 2]>>> {
    check_shape(model, quotes)?;
    let q = quotes.grid.node(i);
    (0..model.n_tiers())
        .map(|n| {
            let (bids, asks) = quotes.tier_quotes(n, i);
            let (gb, ga) = greedy_adjustment(model, n, q, &bids, &asks, &quotes.tier_mask(n, i))?;
            Ok(gb.into_iter().zip(ga).map(|(b, a)| [b, a]).collect())
        })
        .collect()
}

fn check_tables(theta: &ValueTable, f: &ValueTable, quotes: &QuoteSurface) -> Result<()> {
    if theta.grid != f.grid || theta.grid != quotes.grid {
        return Err(Error::GridMismatch(
            "value tables and quote surface are on different grids".into(),
        ));
    }
    if theta.values.len() != theta.grid.len() || f.values.len() != f.grid.len() {
        return Err(Error::GridMismatch("table length differs from grid size".into()));
    }
    Ok(())
}

/// Nodes at which every leg of every size can trade both ways.
fn fully_enabled(model: &MarketModel, quotes: &QuoteSurface, i: usize) -> bool {
    let largest = *model.ladder.units().last().unwrap_or(&0);
    let c = quotes.grid.center();
    let reach = quotes.grid.q_max_units.saturating_sub(largest);
    i.abs_diff(c) <= reach
}

/// Quote shifts per unit `ε`: `D f / c + g` where corrections are
/// available, 0 with an `Uncorrected` flag at other enabled legs.
pub fn corrected_adjustments(
    model: &MarketModel,
    theta: &ValueTable,
    f: &ValueTable,
    quotes: &QuoteSurface,
) -> Result<QuoteSurface> {
    check_shape(model, quotes)?;
    check_tables(theta, f, quotes)?;
    let grid = quotes.grid;
    let units = model.ladder.units();
    let mut out = QuoteSurface::new(grid, model.n_tiers(), model.n_sizes());
    for i in 0..grid.len() {
        let full = fully_enabled(model, quotes, i);
        let g = if full { Some(g_terms(model, quotes, i)?) } else { None };
        for (n, spec) in model.tiers.iter().enumerate() {
            for (k, &u) in units.iter().enumerate() {
                for (s, side) in Side::BOTH.into_iter().enumerate() {
                    let base = quotes.status(n, k, side, i);
                    if base == QuoteStatus::Disabled {
                        out.set(n, k, side, i, 0.0, QuoteStatus::Disabled);
                        continue;
                    }
                    let (Some(g), Some(df), Some(_)) =
                        (&g, f.diff(u, side, i), theta.diff(u, side, i))
                    else {
                        out.set(n, k, side, i, 0.0, QuoteStatus::Uncorrected);
                        continue;
                    };
                    let c = spec.intensity(k, side).eval(quotes.get(n, k, side, i))?.c;
                    out.set(n, k, side, i, df / c + g[n][k][s], base);
                }
            }
        }
    }
    Ok(out)
}

/// `δ + ε (D f / c + g)` on the baseline surface; legs without a
/// correction keep the baseline value and carry the `Uncorrected` flag.
pub fn corrected_quotes(
    model: &MarketModel,
    theta: &ValueTable,
    f: &ValueTable,
    quotes: &QuoteSurface,
    epsilon: f64,
) -> Result<QuoteSurface> {
    let adj = corrected_adjustments(model, theta, f, quotes)?;
    let mut out = quotes.clone();
    for n in 0..model.n_tiers() {
        for k in 0..model.n_sizes() {
            for side in Side::BOTH {
                for i in 0..quotes.grid.len() {
                    let s = adj.status(n, k, side, i);
                    if s == QuoteStatus::Disabled {
                        continue;
                    }
                    let v = quotes.get(n, k, side, i) + epsilon * adj.get(n, k, side, i);
                    out.set(n, k, side, i, v, s);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ImpactCurve, InventoryGrid, ReadingCurve};
    use crate::presets;
    use crate::solver::{solve_baseline, SolverOptions};
    use approx::assert_relative_eq;

    fn baseline(m: &MarketModel, half: usize) -> crate::solver::Solution {
        solve_baseline(m, &InventoryGrid::new(m.ladder.smallest(), half), &SolverOptions::default())
            .unwrap()
    }

    #[test]
    fn uninformed_model_has_no_correction() {
        let m = presets::single_leg(1000.0, 3.0);
        let sol = baseline(&m, 20);
        let f = solve_f(&m, &sol.quotes).unwrap();
        assert!(f.total.values.iter().all(|&v| v == 0.0));
        let adj = corrected_adjustments(&m, &sol.theta, &f.total, &sol.quotes).unwrap();
        let c = corrected_quotes(&m, &sol.theta, &f.total, &sol.quotes, 0.3).unwrap();
        for i in 0..sol.quotes.grid.len() {
            for side in Side::BOTH {
                if adj.status(0, 0, side, i) == QuoteStatus::Active {
                    assert_eq!(adj.get(0, 0, side, i), 0.0);
                }
                assert_eq!(c.get(0, 0, side, i), sol.quotes.get(0, 0, side, i));
            }
        }
    }

    #[test]
    fn source_at_zero_inventory_with_impact() {
        let m = presets::adverse_selection();
        let sol = baseline(&m, 150);
        let i = sol.quotes.grid.center();
        let (total, per) = source_term(&m, &sol.quotes, i).unwrap();
        assert_eq!(per[0], 0.0);
        // q = 0: −Δ Λζ(δ^b) from the bid and −Δ Λζ(δ^a) from the ask
        let mut expect = 0.0;
        for k in 0..m.n_sizes() {
            let d = m.ladder.size(k);
            for side in Side::BOTH {
                let x = sol.quotes.get(1, k, side, i);
                let lam = presets::STANDARD_LAMBDA0[k] * (-3.0 * x).exp();
                let zeta = 0.1 * (2.7 * x).exp();
                expect -= d * lam * zeta;
            }
        }
        assert_relative_eq!(total, expect, max_relative = 1e-12);
    }

    #[test]
    fn reading_source_is_inventory_times_skew() {
        let m = presets::price_reading();
        let sol = baseline(&m, 120);
        let i = sol.quotes.grid.index_of(10.0).unwrap();
        let (_, per) = source_term(&m, &sol.quotes, i).unwrap();
        let (bids, asks) = sol.quotes.tier_quotes(1, i);
        let skew: f64 = asks.iter().zip(&bids).map(|(a, b)| a - b).sum();
        assert_relative_eq!(per[1], 10.0 * skew, max_relative = 1e-14);
        assert!(per[1] < 0.0);
    }

    #[test]
    fn linear_in_informational_scale() {
        let m = presets::combined_test_model();
        let mut m2 = m.clone();
        for t in &mut m2.tiers {
            if let ReadingCurve::Linear { slope } = &mut t.reading {
                *slope *= 2.0;
            }
            for z in &mut t.impact {
                if let ImpactCurve::Exponential { alpha, .. } = z {
                    *alpha *= 2.0;
                }
            }
        }
        let sol = baseline(&m, 30);
        let f1 = solve_f(&m, &sol.quotes).unwrap();
        let f2 = solve_f(&m2, &sol.quotes).unwrap();
        for (a, b) in f1.total.values.iter().zip(&f2.total.values) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        let a1 = corrected_adjustments(&m, &sol.theta, &f1.total, &sol.quotes).unwrap();
        let a2 = corrected_adjustments(&m2, &sol.theta, &f2.total, &sol.quotes).unwrap();
        let i = sol.quotes.grid.index_of(4.0).unwrap();
        for k in 0..3 {
            for side in Side::BOTH {
                let (x, y) = (a1.get(1, k, side, i), a2.get(1, k, side, i));
                assert!((2.0 * x - y).abs() <= 1e-10 * y.abs().max(1e-6), "{x} {y}");
            }
        }
    }

    #[test]
    fn tiers_add_up() {
        let m = presets::combined_test_model();
        let sol = baseline(&m, 30);
        let f = solve_f(&m, &sol.quotes).unwrap();
        for i in 0..sol.quotes.grid.len() {
            let s: f64 = f.per_tier.iter().map(|t| t.values[i]).sum();
            assert!((s - f.total.values[i]).abs() <= 1e-12 * f.total.values[i].abs().max(1.0));
        }
        let norm = f.total.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(f.residual <= 1e-12 * norm.max(1.0));
    }

    #[test]
    fn symmetric_model_gives_even_f() {
        let m = presets::price_reading_reduced();
        let sol = baseline(&m, 60);
        let f = solve_f(&m, &sol.quotes).unwrap().total.values;
        let n = f.len();
        let scale = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for i in 0..n {
            assert!((f[i] - f[n - 1 - i]).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn g_vanishes_when_impact_rate_equals_kappa() {
        let m = presets::adverse_selection_with_ratio(1.0);
        let sol = baseline(&m, 150);
        let i = sol.quotes.grid.index_of(7.0).unwrap();
        for row in g_terms(&m, &sol.quotes, i).unwrap() {
            for [b, a] in row {
                assert!(b.abs() < 1e-15 && a.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn g_reading_term_value() {
        let m = presets::price_reading();
        let bids = vec![0.350474; 6];
        let asks = vec![0.3; 6];
        let (gb, _) = greedy_adjustment(&m, 1, 10.0, &bids, &asks, &LegMask::all(6)).unwrap();
        let lam = 1000.0 * (-3.0f64 * 0.350474).exp();
        assert_relative_eq!(gb[0], -10.0 / (3.0 * lam), max_relative = 1e-12);
        assert_relative_eq!(gb[0], -9.539e-3, max_relative = 1e-3);
    }

    #[test]
    fn uncorrected_flag_near_boundary() {
        let m = presets::price_reading_reduced();
        let sol = baseline(&m, 40);
        let f = solve_f(&m, &sol.quotes).unwrap();
        let c = corrected_quotes(&m, &sol.theta, &f.total, &sol.quotes, 0.05).unwrap();
        let edge = sol.quotes.grid.len() - 2;
        assert_eq!(c.status(0, 0, Side::Bid, edge), QuoteStatus::Uncorrected);
        assert_eq!(c.get(0, 0, Side::Bid, edge), sol.quotes.get(0, 0, Side::Bid, edge));
        assert_eq!(c.status(0, 2, Side::Bid, edge), QuoteStatus::Disabled);
        assert_eq!(c.status(0, 0, Side::Bid, sol.quotes.grid.center()), QuoteStatus::Active);
    }
}
