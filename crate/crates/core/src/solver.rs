//! Stationary HJB solvers on the truncated inventory grid.
//!
//! Both the baseline equation and the full equation with informational
//! terms have the form `ρϑ(q) = −½γσ²q² + Σ_n ℋ^n(q, D_+ϑ(q), D_−ϑ(q))`
//! where each `ℋ^n` is a supremum of functions affine in the differences.
//! They are solved by Newton's method, which on this structure is policy
//! iteration: each linearization is a banded M-matrix system.

use crate::banded::BandedMatrix;
use crate::error::{DomainBound, Error, Result};
use crate::hamiltonians::{
    hamiltonian_clamped, tier_hamiltonian_masked, LegMask, LegStatus, TierPoint,
};
use crate::model::{InventoryGrid, MarketModel, Side};
use crate::quadratic::QuadraticApprox;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    Baseline,
    Full,
    Correction,
}

/// Function values on every node of an inventory grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub grid: InventoryGrid,
    pub values: Vec<f64>,
    pub kind: TableKind,
}

impl ValueTable {
    pub fn at(&self, q: f64) -> Option<f64> {
        self.grid.index_of(q).map(|i| self.values[i])
    }

    /// `D_+ϑ(q) = (ϑ(q) − ϑ(q+Δ))/Δ` for `Side::Bid` and
    /// `D_−ϑ(q) = (ϑ(q) − ϑ(q−Δ))/Δ` for `Side::Ask`, with `Δ = units` grid
    /// steps. `None` when the neighbour is off the grid.
    pub fn diff(&self, units: usize, side: Side, i: usize) -> Option<f64> {
        let j = self.grid.after_fill(i, units, side)?;
        Some((self.values[i] - self.values[j]) / (units as f64 * self.grid.step))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuoteStatus {
    Active,
    Pinned(DomainBound),
    /// Fill would leave the grid; the quote is reported at the domain maximum.
    Disabled,
    /// First-order correction unavailable at this node; baseline quote kept.
    Uncorrected,
}

impl From<LegStatus> for QuoteStatus {
    fn from(s: LegStatus) -> Self {
        match s {
            LegStatus::Active => QuoteStatus::Active,
            LegStatus::Pinned(b) => QuoteStatus::Pinned(b),
            LegStatus::Disabled => QuoteStatus::Disabled,
        }
    }
}

/// Per (tier, size, side, node) quote offsets in bp, with status flags.
#[derive(Debug, Clone, PartialEq)]
pub struct QuoteSurface {
    pub grid: InventoryGrid,
    n_tiers: usize,
    n_sizes: usize,
    bid: Vec<f64>,
    ask: Vec<f64>,
    bid_status: Vec<QuoteStatus>,
    ask_status: Vec<QuoteStatus>,
}

impl QuoteSurface {
    pub fn new(grid: InventoryGrid, n_tiers: usize, n_sizes: usize) -> Self {
        let len = n_tiers * n_sizes * grid.len();
        QuoteSurface {
            grid,
            n_tiers,
            n_sizes,
            bid: vec![0.0; len],
            ask: vec![0.0; len],
            bid_status: vec![QuoteStatus::Disabled; len],
            ask_status: vec![QuoteStatus::Disabled; len],
        }
    }

    pub fn n_tiers(&self) -> usize {
        self.n_tiers
    }

    pub fn n_sizes(&self) -> usize {
        self.n_sizes
    }

    fn idx(&self, tier: usize, k: usize, i: usize) -> usize {
        (tier * self.n_sizes + k) * self.grid.len() + i
    }

    pub fn get(&self, tier: usize, k: usize, side: Side, i: usize) -> f64 {
        let j = self.idx(tier, k, i);
        match side {
            Side::Bid => self.bid[j],
            Side::Ask => self.ask[j],
        }
    }

    pub fn status(&self, tier: usize, k: usize, side: Side, i: usize) -> QuoteStatus {
        let j = self.idx(tier, k, i);
        match side {
            Side::Bid => self.bid_status[j],
            Side::Ask => self.ask_status[j],
        }
    }

    pub fn set(&mut self, tier: usize, k: usize, side: Side, i: usize, v: f64, s: QuoteStatus) {
        let j = self.idx(tier, k, i);
        match side {
            Side::Bid => {
                self.bid[j] = v;
                self.bid_status[j] = s;
            }
            Side::Ask => {
                self.ask[j] = v;
                self.ask_status[j] = s;
            }
        }
    }

    /// Bid and ask offsets of one tier at node `i`, ordered by size.
    pub fn tier_quotes(&self, tier: usize, i: usize) -> (Vec<f64>, Vec<f64>) {
        let side = |s| (0..self.n_sizes).map(|k| self.get(tier, k, s, i)).collect();
        (side(Side::Bid), side(Side::Ask))
    }

    pub fn tier_mask(&self, tier: usize, i: usize) -> LegMask {
        let enabled = |side| {
            (0..self.n_sizes)
                .map(|k| self.status(tier, k, side, i) != QuoteStatus::Disabled)
                .collect()
        };
        LegMask {
            bid: enabled(Side::Bid),
            ask: enabled(Side::Ask),
        }
    }

    /// Any enabled leg pinned to the quote domain, as `(tier, size, side, node)`.
    pub fn first_pinned(&self) -> Option<(usize, usize, Side, usize)> {
        for n in 0..self.n_tiers {
            for k in 0..self.n_sizes {
                for side in Side::BOTH {
                    for i in 0..self.grid.len() {
                        if matches!(self.status(n, k, side, i), QuoteStatus::Pinned(_)) {
                            return Some((n, k, side, i));
                        }
                    }
                }
            }
        }
        None
    }

    /// `max |δ^b(q) − δ^a(−q)|` over legs enabled on both sides.
    pub fn mirror_error(&self) -> f64 {
        let last = self.grid.len() - 1;
        let mut worst: f64 = 0.0;
        for n in 0..self.n_tiers {
            for k in 0..self.n_sizes {
                for i in 0..=last {
                    let m = last - i;
                    if self.status(n, k, Side::Bid, i) == QuoteStatus::Disabled
                        || self.status(n, k, Side::Ask, m) == QuoteStatus::Disabled
                    {
                        continue;
                    }
                    worst = worst
                        .max((self.get(n, k, Side::Bid, i) - self.get(n, k, Side::Ask, m)).abs());
                }
            }
        }
        worst
    }
}

/// Legs of any tier that can trade from node `i`.
pub fn leg_mask(grid: &InventoryGrid, units: &[usize], i: usize) -> LegMask {
    LegMask {
        bid: units
            .iter()
            .map(|&u| grid.after_fill(i, u, Side::Bid).is_some())
            .collect(),
        ask: units
            .iter()
            .map(|&u| grid.after_fill(i, u, Side::Ask).is_some())
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Residual tolerance in value units; `None` picks `1e-10` times the
    /// natural value scale of the model on the grid.
    pub tol: Option<f64>,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: None,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// `max_q |HJB residual| / ρ`, an upper bound on the value error.
    pub residual: f64,
    pub tolerance: f64,
    pub history: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub theta: ValueTable,
    pub quotes: QuoteSurface,
    pub report: SolveReport,
}

/// Value scale `max(γσ²q_max², Σ Δ(H^b(0) + H^a(0))) / ρ`.
pub fn value_scale(model: &MarketModel, grid: &InventoryGrid) -> Result<f64> {
    let reward = crate::hamiltonians::myopic_reward_rate(model)?;
    let pen = 2.0 * model.inventory_penalty(grid.q_max());
    Ok((pen.max(reward) / model.rho).max(1.0))
}

struct Linearization {
    value: f64,
    legs: Vec<(usize, f64)>,
}

fn check_grid(model: &MarketModel, grid: &InventoryGrid) -> Result<()> {
    let step = model.ladder.smallest();
    if (grid.step - step).abs() > 1e-12 * step {
        return Err(Error::GridMismatch(format!(
            "grid step {} differs from the smallest trade size {step}",
            grid.step
        )));
    }
    let largest = *model.ladder.units().last().unwrap_or(&1);
    if grid.q_max_units < largest {
        return Err(Error::GridMismatch(format!(
            "grid half-width {} is narrower than the largest trade ({largest} steps)",
            grid.q_max_units
        )));
    }
    Ok(())
}

fn newton<F>(
    model: &MarketModel,
    grid: &InventoryGrid,
    mut theta: Vec<f64>,
    opts: &SolverOptions,
    what: &'static str,
    mut linearize: F,
) -> Result<(Vec<f64>, SolveReport)>
where
    F: FnMut(usize, &[f64]) -> Result<Linearization>,
{
    let n = grid.len();
    let band = *model.ladder.units().last().unwrap_or(&1);
    let rho = model.rho;
    let tol = match opts.tol {
        Some(t) => t,
        None => 1e-10 * value_scale(model, grid)?,
    };

    let mut eval = |theta: &[f64]| -> Result<(Vec<f64>, Vec<Linearization>, f64)> {
        let mut res = Vec::with_capacity(n);
        let mut lin = Vec::with_capacity(n);
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let l = linearize(i, theta).map_err(|e| e.at_node(grid.node(i)))?;
            let r = l.value - model.inventory_penalty(grid.node(i)) - rho * theta[i];
            worst = worst.max(r.abs());
            res.push(r);
            lin.push(l);
        }
        Ok((res, lin, worst / rho))
    };

    let (mut res, mut lin, mut norm) = eval(&theta)?;
    let mut history = vec![norm];
    let mut prev = f64::INFINITY;
    for iter in 0..opts.max_iter {
        if norm == 0.0 || (norm <= tol && (norm <= 1e-6 * tol || norm > 0.25 * prev)) {
            return Ok((
                theta,
                SolveReport {
                    iterations: iter,
                    residual: norm,
                    tolerance: tol,
                    history,
                },
            ));
        }
        let mut m = BandedMatrix::zeros(n, band, band);
        for (i, l) in lin.iter().enumerate() {
            m.add(i, i, rho);
            for &(j, rate) in &l.legs {
                m.add(i, i, rate);
                m.add(i, j, -rate);
            }
        }
        let step = m.factor()?.solve(&res);

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial: Vec<f64> = theta.iter().zip(&step).map(|(t, s)| t + alpha * s).collect();
            let out = eval(&trial)?;
            if out.2 < norm {
                accepted = Some((trial, out));
                break;
            }
            alpha *= 0.5;
        }
        let (trial, out) = match accepted {
            Some(a) => a,
            None if norm <= tol => {
                return Ok((
                    theta,
                    SolveReport {
                        iterations: iter,
                        residual: norm,
                        tolerance: tol,
                        history,
                    },
                ))
            }
            None => {
                // policy iteration converges from any start; take the full step
                let trial: Vec<f64> = theta.iter().zip(&step).map(|(t, s)| t + s).collect();
                let out = eval(&trial)?;
                (trial, out)
            }
        };
        theta = trial;
        prev = norm;
        (res, lin, norm) = out;
        history.push(norm);
    }
    if norm <= tol {
        let iterations = history.len() - 1;
        return Ok((
            theta,
            SolveReport {
                iterations,
                residual: norm,
                tolerance: tol,
                history,
            },
        ));
    }
    Err(Error::NonConvergence {
        what,
        iterations: opts.max_iter,
        residual: norm,
    })
}

fn baseline_linearization(
    model: &MarketModel,
    grid: &InventoryGrid,
    units: &[usize],
    i: usize,
    theta: &[f64],
) -> Result<Linearization> {
    let mut value = 0.0;
    let mut legs = Vec::new();
    for tier in &model.tiers {
        for (k, &u) in units.iter().enumerate() {
            let size = model.ladder.size(k);
            for side in Side::BOTH {
                let Some(j) = grid.after_fill(i, u, side) else {
                    continue;
                };
                let p = (theta[i] - theta[j]) / size;
                let (h, _) = hamiltonian_clamped(tier.intensity(k, side), p, model.quote_domain)?;
                value += size * h.value;
                legs.push((j, -h.d1));
            }
        }
    }
    Ok(Linearization { value, legs })
}

/// `−A q² − B q + C` from the quadratic approximation, or the flat myopic
/// value when the approximation is unavailable.
fn warm_start(model: &MarketModel, grid: &InventoryGrid) -> Vec<f64> {
    let flat = crate::hamiltonians::myopic_reward_rate(model).unwrap_or(0.0) / model.rho;
    match QuadraticApprox::new(&model.with_epsilon(0.0)) {
        Ok(qa) => grid
            .nodes()
            .map(|q| flat - qa.coefficients.a * q * q - qa.coefficients.b * q)
            .collect(),
        Err(_) => vec![flat; grid.len()],
    }
}

fn baseline_quotes(
    model: &MarketModel,
    theta: &ValueTable,
    units: &[usize],
) -> Result<QuoteSurface> {
    let grid = theta.grid;
    let mut out = QuoteSurface::new(grid, model.n_tiers(), model.n_sizes());
    for (n, tier) in model.tiers.iter().enumerate() {
        for (k, &u) in units.iter().enumerate() {
            for side in Side::BOTH {
                for i in 0..grid.len() {
                    match theta.diff(u, side, i) {
                        None => out.set(n, k, side, i, model.quote_domain.max, QuoteStatus::Disabled),
                        Some(p) => {
                            let (h, pinned) =
                                hamiltonian_clamped(tier.intensity(k, side), p, model.quote_domain)
                                    .map_err(|e| e.at_node(grid.node(i)))?;
                            let s = pinned.map_or(QuoteStatus::Active, QuoteStatus::Pinned);
                            out.set(n, k, side, i, h.argmax, s);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Solves the baseline equation (no reading, no impact). Fails if a
/// converged quote is pinned to the quote domain.
pub fn solve_baseline(
    model: &MarketModel,
    grid: &InventoryGrid,
    opts: &SolverOptions,
) -> Result<Solution> {
    model.validate()?;
    check_grid(model, grid)?;
    let units = model.ladder.units();
    let (values, report) = newton(
        model,
        grid,
        warm_start(model, grid),
        opts,
        "baseline HJB",
        |i, th| baseline_linearization(model, grid, &units, i, th),
    )?;
    let theta = ValueTable {
        grid: *grid,
        values,
        kind: TableKind::Baseline,
    };
    let quotes = baseline_quotes(model, &theta, &units)?;
    if let Some((n, k, side, i)) = quotes.first_pinned() {
        let QuoteStatus::Pinned(bound) = quotes.status(n, k, side, i) else {
            unreachable!()
        };
        let limit = match bound {
            DomainBound::Lower => model.quote_domain.min,
            DomainBound::Upper => model.quote_domain.max,
        };
        return Err(Error::QuoteDomain {
            p: theta.diff(units[k], side, i).unwrap_or(f64::NAN),
            bound,
            limit,
        }
        .at_node(grid.node(i)));
    }
    Ok(Solution {
        theta,
        quotes,
        report,
    })
}

fn tier_differences(theta: &[f64], grid: &InventoryGrid, units: &[usize], sizes: &[f64], i: usize) -> (Vec<f64>, Vec<f64>) {
    let diff = |side| {
        units
            .iter()
            .zip(sizes)
            .map(|(&u, &s)| {
                grid.after_fill(i, u, side)
                    .map_or(0.0, |j| (theta[i] - theta[j]) / s)
            })
            .collect::<Vec<f64>>()
    };
    (diff(Side::Bid), diff(Side::Ask))
}

fn full_linearization(
    model: &MarketModel,
    grid: &InventoryGrid,
    units: &[usize],
    i: usize,
    theta: &[f64],
) -> Result<Linearization> {
    let mask = leg_mask(grid, units, i);
    let (pb, pa) = tier_differences(theta, grid, units, model.ladder.sizes(), i);
    let q = grid.node(i);
    let mut value = 0.0;
    let mut legs = Vec::new();
    for n in 0..model.n_tiers() {
        let h = tier_hamiltonian_masked(&TierPoint {
            model,
            tier: n,
            q,
            p_bid: &pb,
            p_ask: &pa,
            epsilon: model.epsilon,
            mask: &mask,
        })?;
        value += h.value;
        let spec = &model.tiers[n];
        for (k, &u) in units.iter().enumerate() {
            for (side, d) in [(Side::Bid, h.bids[k]), (Side::Ask, h.asks[k])] {
                if let Some(j) = grid.after_fill(i, u, side) {
                    legs.push((j, spec.intensity(k, side).eval(d)?.value));
                }
            }
        }
    }
    Ok(Linearization { value, legs })
}

/// Quotes maximizing the full per-tier Hamiltonians at `theta`.
pub fn full_quotes(model: &MarketModel, theta: &ValueTable) -> Result<QuoteSurface> {
    let grid = theta.grid;
    let units = model.ladder.units();
    let mut out = QuoteSurface::new(grid, model.n_tiers(), model.n_sizes());
    for i in 0..grid.len() {
        let mask = leg_mask(&grid, &units, i);
        let (pb, pa) = tier_differences(&theta.values, &grid, &units, model.ladder.sizes(), i);
        for n in 0..model.n_tiers() {
            let h = tier_hamiltonian_masked(&TierPoint {
                model,
                tier: n,
                q: grid.node(i),
                p_bid: &pb,
                p_ask: &pa,
                epsilon: model.epsilon,
                mask: &mask,
            })
            .map_err(|e| e.at_node(grid.node(i)))?;
            for k in 0..model.n_sizes() {
                out.set(n, k, Side::Bid, i, h.bids[k], h.bid_status[k].into());
                out.set(n, k, Side::Ask, i, h.asks[k], h.ask_status[k].into());
            }
        }
    }
    Ok(out)
}

/// Solves the full equation at the model's `ε`, starting from `init`.
/// Pinned legs are flagged in the quote surface.
pub fn solve_full_from(
    model: &MarketModel,
    init: &ValueTable,
    opts: &SolverOptions,
) -> Result<Solution> {
    model.validate()?;
    let grid = init.grid;
    check_grid(model, &grid)?;
    let units = model.ladder.units();
    let (values, report) = newton(
        model,
        &grid,
        init.values.clone(),
        opts,
        "full HJB",
        |i, th| full_linearization(model, &grid, &units, i, th),
    )?;
    let theta = ValueTable {
        grid,
        values,
        kind: TableKind::Full,
    };
    let quotes = full_quotes(model, &theta)?;
    Ok(Solution {
        theta,
        quotes,
        report,
    })
}

/// Solves the full equation, warm-started from the baseline solution.
pub fn solve_full(model: &MarketModel, grid: &InventoryGrid, opts: &SolverOptions) -> Result<Solution> {
    let base = solve_baseline(&model.with_epsilon(0.0), grid, opts)?;
    if model.epsilon == 0.0 {
        let mut s = base;
        s.theta.kind = TableKind::Full;
        return Ok(s);
    }
    solve_full_from(model, &base.theta, opts)
}

/// Polynomial extrapolation to `ρ → 0` of baseline quotes solved at each
/// of `rhos`. Entries disabled or pinned at any `ρ` keep the status seen at
/// the smallest `ρ`.
pub fn extrapolate_quotes_to_zero_rho(
    model: &MarketModel,
    grid: &InventoryGrid,
    rhos: &[f64],
    opts: &SolverOptions,
) -> Result<QuoteSurface> {
    if rhos.is_empty() {
        return Err(Error::Config("at least one discount rate is required".into()));
    }
    let sols = rhos
        .iter()
        .map(|&r| solve_baseline(&model.with_rho(r), grid, opts).map(|s| s.quotes))
        .collect::<Result<Vec<_>>>()?;
    let smallest = rhos
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let mut out = sols[smallest].clone();
    for n in 0..model.n_tiers() {
        for k in 0..model.n_sizes() {
            for side in Side::BOTH {
                for i in 0..grid.len() {
                    if out.status(n, k, side, i) != QuoteStatus::Active {
                        continue;
                    }
                    let ys: Vec<f64> = sols.iter().map(|s| s.get(n, k, side, i)).collect();
                    out.set(n, k, side, i, neville_at_zero(rhos, &ys), QuoteStatus::Active);
                }
            }
        }
    }
    Ok(out)
}

/// Value at 0 of the interpolating polynomial through `(xs, ys)`.
pub fn neville_at_zero(xs: &[f64], ys: &[f64]) -> f64 {
    let mut p = ys.to_vec();
    let n = xs.len();
    for m in 1..n {
        for i in 0..n - m {
            p[i] = (xs[i + m] * p[i] - xs[i] * p[i + 1]) / (xs[i + m] - xs[i]);
        }
    }
    p[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonians::hamiltonian;
    use crate::presets;
    use nalgebra::{DMatrix, DVector};

    fn small_single() -> (MarketModel, InventoryGrid) {
        let mut m = presets::single_leg(100.0, 2.0);
        m.rho = 0.5;
        m.gamma = 1e-3;
        (m, InventoryGrid::new(1.0, 12))
    }

    // closed-form exponential H evaluated independently of the library
    fn exp_h(l0: f64, kappa: f64, p: f64) -> f64 {
        l0 / kappa * (-1.0 - kappa * p).exp()
    }

    fn hjb_residual_exp(m: &MarketModel, th: &[f64], grid: &InventoryGrid, l0: f64, kappa: f64) -> Vec<f64> {
        (0..grid.len())
            .map(|i| {
                let q = grid.node(i);
                let mut s = -0.5 * m.gamma * m.sigma * m.sigma * q * q - m.rho * th[i];
                if i + 1 < grid.len() {
                    s += exp_h(l0, kappa, th[i] - th[i + 1]);
                }
                if i > 0 {
                    s += exp_h(l0, kappa, th[i] - th[i - 1]);
                }
                s
            })
            .collect()
    }

    #[test]
    fn baseline_matches_dense_finite_difference_newton() {
        let (m, grid) = small_single();
        let sol = solve_baseline(&m, &grid, &SolverOptions::default()).unwrap();

        // independent solver: dense Newton with a finite-difference Jacobian
        let n = grid.len();
        let mut x = vec![0.0; n];
        for _ in 0..100 {
            let r = hjb_residual_exp(&m, &x, &grid, 100.0, 2.0);
            if r.iter().fold(0.0f64, |a, v| a.max(v.abs())) < 1e-11 {
                break;
            }
            let mut jac = DMatrix::zeros(n, n);
            for j in 0..n {
                let h = 1e-6 * (1.0 + x[j].abs());
                let mut xp = x.clone();
                xp[j] += h;
                let mut xm = x.clone();
                xm[j] -= h;
                let rp = hjb_residual_exp(&m, &xp, &grid, 100.0, 2.0);
                let rm = hjb_residual_exp(&m, &xm, &grid, 100.0, 2.0);
                for i in 0..n {
                    jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
                }
            }
            let dx = jac.lu().solve(&-DVector::from_vec(r)).unwrap();
            for i in 0..n {
                x[i] += dx[i];
            }
        }
        for i in 0..n {
            assert!(
                (sol.theta.values[i] - x[i]).abs() < 1e-9 * (1.0 + x[i].abs()),
                "node {i}: {} vs {}",
                sol.theta.values[i],
                x[i]
            );
        }
    }

    #[test]
    fn baseline_residual_is_small_on_paper_grid() {
        let m = presets::price_reading();
        let grid = InventoryGrid::new(1.0, 150);
        let sol = solve_baseline(&m, &grid, &SolverOptions::default()).unwrap();
        assert!(sol.report.residual <= sol.report.tolerance);
        assert!(sol.report.iterations < 40, "{:?}", sol.report.history);
    }

    #[test]
    fn symmetric_model_gives_even_value_and_mirrored_quotes() {
        let m = presets::price_reading_reduced();
        let grid = InventoryGrid::new(1.0, 60);
        let sol = solve_baseline(&m, &grid, &SolverOptions::default()).unwrap();
        let v = &sol.theta.values;
        let scale = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        for i in 0..grid.len() {
            assert!((v[i] - v[grid.len() - 1 - i]).abs() <= 1e-12 * scale);
        }
        assert!(sol.quotes.mirror_error() < 1e-9);
    }

    #[test]
    fn baseline_value_is_concave() {
        let m = presets::price_reading_reduced();
        let grid = InventoryGrid::new(1.0, 60);
        let v = solve_baseline(&m, &grid, &SolverOptions::default())
            .unwrap()
            .theta
            .values;
        for i in grid.report_nodes(&m.ladder) {
            assert!(v[i - 1] - 2.0 * v[i] + v[i + 1] < 1e-8, "node {i}");
        }
    }

    #[test]
    fn quotes_are_hamiltonian_maximizers_of_differences() {
        let m = presets::price_reading_reduced();
        let grid = InventoryGrid::new(1.0, 40);
        let sol = solve_baseline(&m, &grid, &SolverOptions::default()).unwrap();
        let i = grid.index_of(3.0).unwrap();
        let p = sol.theta.diff(2, Side::Bid, i).unwrap();
        let expect = hamiltonian(m.tiers[0].intensity(1, Side::Bid), p, m.quote_domain)
            .unwrap()
            .argmax;
        assert_eq!(sol.quotes.get(0, 1, Side::Bid, i), expect);
        assert_eq!(
            sol.quotes.status(0, 1, Side::Bid, grid.len() - 1),
            QuoteStatus::Disabled
        );
    }

    #[test]
    fn full_solve_at_zero_epsilon_reproduces_baseline() {
        let m = presets::combined_test_model();
        let grid = InventoryGrid::new(1.0, 40);
        let base = solve_baseline(&m, &grid, &SolverOptions::default()).unwrap();
        let full = solve_full_from(&m.with_epsilon(0.0), &base.theta, &SolverOptions::default()).unwrap();
        for (a, b) in base.theta.values.iter().zip(&full.theta.values) {
            assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn full_solve_converges_with_information() {
        let m = presets::combined_test_model();
        let grid = InventoryGrid::new(1.0, 40);
        let sol = solve_full(&m, &grid, &SolverOptions::default()).unwrap();
        assert!(sol.report.residual <= sol.report.tolerance);
        assert!(sol.quotes.first_pinned().is_none());
    }

    #[test]
    fn grid_with_wrong_step_is_rejected() {
        let m = presets::price_reading_reduced();
        let grid = InventoryGrid::new(0.5, 40);
        assert!(matches!(
            solve_baseline(&m, &grid, &SolverOptions::default()),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn neville_recovers_polynomials() {
        let xs = [0.1, 0.2, 0.4];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 2.0 * x + 5.0 * x * x).collect();
        assert!((neville_at_zero(&xs, &ys) - 3.0).abs() < 1e-12);
    }
}
