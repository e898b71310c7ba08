//! Market parameterization.
//!
//! Units are fixed throughout the crate: quote offsets and prices in basis
//! points (bp), trade sizes and inventory in millions of notional (M), time in
//! days, value functions in bp·M.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Bid, Side::Ask];

    /// Inventory change direction for a fill on this side: a bid fill
    /// means the market maker buys.
    pub fn inventory_sign(self) -> i64 {
        match self {
            Side::Bid => 1,
            Side::Ask => -1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Bid => "bid",
            Side::Ask => "ask",
        }
    }
}

/// Discrete trade sizes `Δ^1 < … < Δ^K`.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeLadder {
    sizes: Vec<f64>,
}

impl SizeLadder {
    pub fn new(sizes: Vec<f64>) -> Self {
        SizeLadder { sizes }
    }

    pub fn sizes(&self) -> &[f64] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn size(&self, k: usize) -> f64 {
        self.sizes[k]
    }

    pub fn smallest(&self) -> f64 {
        self.sizes[0]
    }

    pub fn largest(&self) -> f64 {
        self.sizes[self.sizes.len() - 1]
    }

    /// Each size as a multiple of the smallest one.
    pub fn units(&self) -> Vec<usize> {
        let base = self.smallest();
        self.sizes
            .iter()
            .map(|&s| (s / base).round() as usize)
            .collect()
    }

    fn violations(&self, out: &mut Vec<String>) {
        if self.sizes.is_empty() {
            out.push("ladder: at least one trade size is required".into());
            return;
        }
        for (k, &s) in self.sizes.iter().enumerate() {
            if !(s.is_finite() && s > 0.0) {
                out.push(format!("ladder: size {} ({s}) must be positive", k + 1));
            }
            if k > 0 && s <= self.sizes[k - 1] {
                out.push(format!("ladder: size {} ({s}) is not strictly increasing", k + 1));
            }
        }
        let base = self.sizes[0];
        if base > 0.0 {
            for (k, &s) in self.sizes.iter().enumerate().skip(1) {
                let ratio = s / base;
                if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
                    out.push(format!(
                        "ladder: Δ^{} = {s} not an integer multiple of Δ^1 = {base}",
                        k + 1
                    ));
                }
            }
        }
    }
}

/// Value and derivatives of an intensity curve, plus
/// `c(δ) = 2 − Λ Λ'' / Λ'²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityEval {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    pub c: f64,
}

/// Fill intensity `Λ(δ)` in trades/day as a function of the quote offset.
#[derive(Debug, Clone, PartialEq)]
pub enum IntensityCurve {
    Exponential { lambda0: f64, kappa: f64 },
    Tabulated(MonotoneTable),
}

impl IntensityCurve {
    pub fn exponential(lambda0: f64, kappa: f64) -> Self {
        IntensityCurve::Exponential { lambda0, kappa }
    }

    pub fn eval(&self, delta: f64) -> Result<IntensityEval> {
        match self {
            IntensityCurve::Exponential { lambda0, kappa } => {
                let value = lambda0 * (-kappa * delta).exp();
                Ok(IntensityEval {
                    value,
                    d1: -kappa * value,
                    d2: kappa * kappa * value,
                    c: 1.0,
                })
            }
            IntensityCurve::Tabulated(t) => {
                let (value, d1, d2) = t.eval(delta)?;
                Ok(IntensityEval {
                    value,
                    d1,
                    d2,
                    c: 2.0 - value * d2 / (d1 * d1),
                })
            }
        }
    }

    /// Range on which the curve can be evaluated.
    pub fn hull(&self) -> (f64, f64) {
        match self {
            IntensityCurve::Exponential { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            IntensityCurve::Tabulated(t) => t.hull(),
        }
    }

    fn violations(&self, label: &str, out: &mut Vec<String>) {
        match self {
            IntensityCurve::Exponential { lambda0, kappa } => {
                if !(lambda0.is_finite() && *lambda0 > 0.0) {
                    out.push(format!("{label}: lambda0 must be positive"));
                }
                if !(kappa.is_finite() && *kappa > 0.0) {
                    out.push(format!("{label}: kappa must be positive"));
                }
            }
            IntensityCurve::Tabulated(t) => t.violations(label, out),
        }
    }
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch–Carlson slopes).
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneTable {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl MonotoneTable {
    /// Builds the interpolant from `(δ, Λ)` pairs. Shape problems (flat or
    /// increasing segments) are left for [`validate_model`] to report.
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Config(
                "tabulated intensity needs at least two points".into(),
            ));
        }
        let x: Vec<f64> = points.iter().map(|p| p.0).collect();
        let y: Vec<f64> = points.iter().map(|p| p.1).collect();
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config(
                "tabulated intensity offsets must be strictly increasing".into(),
            ));
        }
        let m = pchip_slopes(&x, &y);
        Ok(MonotoneTable { x, y, m })
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.x.iter().copied().zip(self.y.iter().copied())
    }

    pub fn hull(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    pub fn eval(&self, delta: f64) -> Result<(f64, f64, f64)> {
        let (lo, hi) = self.hull();
        if !(delta >= lo && delta <= hi) {
            return Err(Error::OutsideTable { delta, lo, hi });
        }
        let i = self.x.partition_point(|&xi| xi <= delta).clamp(1, self.x.len() - 1) - 1;
        let h = self.x[i + 1] - self.x[i];
        let t = (delta - self.x[i]) / h;
        let (y0, y1, m0, m1) = (self.y[i], self.y[i + 1], self.m[i] * h, self.m[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let value = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1;
        let d1 = ((6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * m1)
            / h;
        let d2 = ((12.0 * t - 6.0) * y0
            + (6.0 * t - 4.0) * m0
            + (-12.0 * t + 6.0) * y1
            + (6.0 * t - 2.0) * m1)
            / (h * h);
        Ok((value, d1, d2))
    }

    fn violations(&self, label: &str, out: &mut Vec<String>) {
        if self.y.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            out.push(format!("{label}: tabulated intensity must be positive"));
        }
        if self.y.windows(2).any(|w| !(w[1] < w[0])) {
            out.push(format!("{label}: intensity not strictly decreasing"));
            return;
        }
        // sample inside every cell, including both one-sided limits at knots
        let mut min_c = f64::INFINITY;
        let mut max_d1 = f64::NEG_INFINITY;
        for i in 0..self.x.len() - 1 {
            let h = self.x[i + 1] - self.x[i];
            for frac in [1e-9, 0.25, 0.5, 0.75, 1.0 - 1e-9] {
                if let Ok((v, d1, d2)) = self.eval(self.x[i] + frac * h) {
                    max_d1 = max_d1.max(d1);
                    if d1 < 0.0 {
                        min_c = min_c.min(2.0 - v * d2 / (d1 * d1));
                    }
                }
            }
        }
        if max_d1 >= 0.0 {
            out.push(format!("{label}: intensity not strictly decreasing"));
        } else if !(min_c > 0.0) {
            out.push(format!(
                "{label}: inf of c(δ) = 2 − ΛΛ''/Λ'² is not positive (min sampled {min_c:.4})"
            ));
        }
    }
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let d: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    if n == 2 {
        return vec![d[0], d[0]];
    }
    let mut m = vec![0.0; n];
    for i in 1..n - 1 {
        if d[i - 1] * d[i] <= 0.0 {
            m[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
        }
    }
    m[0] = edge_slope(h[0], h[1], d[0], d[1]);
    m[n - 1] = edge_slope(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
    m
}

// three-point end condition with shape preservation
fn edge_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpactEval {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

/// Reference-price impact `ζ(δ)` (bp) of a fill executed at offset `δ`.
#[derive(Debug, Clone, PartialEq)]
pub enum ImpactCurve {
    Zero,
    Exponential { alpha: f64, beta: f64 },
}

impl ImpactCurve {
    pub fn eval(&self, delta: f64) -> ImpactEval {
        match *self {
            ImpactCurve::Zero => ImpactEval {
                value: 0.0,
                d1: 0.0,
                d2: 0.0,
            },
            ImpactCurve::Exponential { alpha, beta } => {
                let value = alpha * (beta * delta).exp();
                ImpactEval {
                    value,
                    d1: beta * value,
                    d2: beta * beta * value,
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            ImpactCurve::Zero => true,
            ImpactCurve::Exponential { alpha, .. } => alpha == 0.0,
        }
    }

    fn violations(&self, label: &str, out: &mut Vec<String>) {
        if let ImpactCurve::Exponential { alpha, beta } = *self {
            if !(alpha.is_finite() && alpha >= 0.0) {
                out.push(format!("{label}: alpha must be non-negative"));
            }
            if !(beta.is_finite() && beta >= 0.0) || (alpha > 0.0 && beta == 0.0) {
                out.push(format!(
                    "{label}: beta must be positive so that the impact vanishes as δ → −∞"
                ));
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadingEval {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

/// Reference-price drift (bp/day) induced by a weighted quote skew (bp).
#[derive(Debug, Clone, PartialEq)]
pub enum ReadingCurve {
    Zero,
    Linear { slope: f64 },
}

impl ReadingCurve {
    pub fn eval(&self, skew: f64) -> ReadingEval {
        match *self {
            ReadingCurve::Zero => ReadingEval {
                value: 0.0,
                d1: 0.0,
                d2: 0.0,
            },
            ReadingCurve::Linear { slope } => ReadingEval {
                value: slope * skew,
                d1: slope,
                d2: 0.0,
            },
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            ReadingCurve::Zero => true,
            ReadingCurve::Linear { slope } => slope == 0.0,
        }
    }

    fn violations(&self, label: &str, out: &mut Vec<String>) {
        if let ReadingCurve::Linear { slope } = *self {
            if !(slope.is_finite() && slope >= 0.0) {
                out.push(format!("{label}: slope must be non-negative"));
            }
        }
    }
}

/// One client tier: per-size curves and weights, one reading curve.
#[derive(Debug, Clone, PartialEq)]
pub struct TierSpec {
    pub intensity_bid: Vec<IntensityCurve>,
    pub intensity_ask: Vec<IntensityCurve>,
    pub impact: Vec<ImpactCurve>,
    pub weights: Vec<f64>,
    pub reading: ReadingCurve,
}

impl TierSpec {
    /// Tier with identical bid and ask exponential intensities.
    pub fn symmetric_exponential(
        lambda0: &[f64],
        kappa: f64,
        impact: Vec<ImpactCurve>,
        weights: Vec<f64>,
        reading: ReadingCurve,
    ) -> Self {
        let curves: Vec<IntensityCurve> = lambda0
            .iter()
            .map(|&l| IntensityCurve::exponential(l, kappa))
            .collect();
        TierSpec {
            intensity_bid: curves.clone(),
            intensity_ask: curves,
            impact,
            weights,
            reading,
        }
    }

    pub fn intensity(&self, k: usize, side: Side) -> &IntensityCurve {
        match side {
            Side::Bid => &self.intensity_bid[k],
            Side::Ask => &self.intensity_ask[k],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuoteDomain {
    pub min: f64,
    pub max: f64,
}

impl Default for QuoteDomain {
    fn default() -> Self {
        QuoteDomain {
            min: -5.0,
            max: 50.0,
        }
    }
}

impl QuoteDomain {
    pub fn clamp(&self, delta: f64) -> f64 {
        delta.clamp(self.min, self.max)
    }

    pub fn contains(&self, delta: f64) -> bool {
        delta >= self.min && delta <= self.max
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel {
    pub ladder: SizeLadder,
    pub tiers: Vec<TierSpec>,
    /// bp·day^(−1/2)
    pub sigma: f64,
    /// 1/(bp·M)
    pub gamma: f64,
    /// 1/day
    pub rho: f64,
    pub epsilon: f64,
    pub quote_domain: QuoteDomain,
}

impl MarketModel {
    pub fn n_tiers(&self) -> usize {
        self.tiers.len()
    }

    pub fn n_sizes(&self) -> usize {
        self.ladder.len()
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        MarketModel {
            epsilon,
            ..self.clone()
        }
    }

    pub fn with_rho(&self, rho: f64) -> Self {
        MarketModel {
            rho,
            ..self.clone()
        }
    }

    /// `½γσ²q²`
    pub fn inventory_penalty(&self, q: f64) -> f64 {
        0.5 * self.gamma * self.sigma * self.sigma * q * q
    }

    /// Bid and ask intensity curves coincide for every (tier, size).
    pub fn is_symmetric(&self) -> bool {
        self.tiers
            .iter()
            .all(|t| t.intensity_bid == t.intensity_ask)
    }

    /// No impact and no reading anywhere: the informational terms vanish.
    pub fn is_uninformed(&self) -> bool {
        self.tiers
            .iter()
            .all(|t| t.reading.is_zero() && t.impact.iter().all(ImpactCurve::is_zero))
    }

    pub fn validate(&self) -> Result<()> {
        let report = validate_model(self);
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidModel(report.violations))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Collects every invariant violation across the model; an empty report
/// means all solver preconditions hold.
pub fn validate_model(model: &MarketModel) -> ValidationReport {
    let mut v = Vec::new();
    model.ladder.violations(&mut v);
    if !(model.sigma.is_finite() && model.sigma > 0.0) {
        v.push("sigma must be positive".into());
    }
    if !(model.gamma.is_finite() && model.gamma >= 0.0) {
        v.push("gamma must be non-negative".into());
    }
    if !(model.rho.is_finite() && model.rho > 0.0) {
        v.push("rho must be positive".into());
    }
    if !(model.epsilon.is_finite() && model.epsilon >= 0.0) {
        v.push("epsilon must be non-negative".into());
    }
    let qd = model.quote_domain;
    if !(qd.min.is_finite() && qd.max.is_finite() && qd.min < qd.max) {
        v.push("quote_domain: min must be below max".into());
    }
    if model.tiers.is_empty() {
        v.push("at least one tier is required".into());
    }
    let k = model.ladder.len();
    for (n, tier) in model.tiers.iter().enumerate() {
        let t = n + 1;
        for (what, len) in [
            ("intensity_bid", tier.intensity_bid.len()),
            ("intensity_ask", tier.intensity_ask.len()),
            ("impact", tier.impact.len()),
            ("weights", tier.weights.len()),
        ] {
            if len != k {
                v.push(format!("tier {t}: {what} has {len} entries, ladder has {k}"));
            }
        }
        for (j, c) in tier.intensity_bid.iter().enumerate() {
            c.violations(&format!("tier {t} size {} bid", j + 1), &mut v);
        }
        for (j, c) in tier.intensity_ask.iter().enumerate() {
            c.violations(&format!("tier {t} size {} ask", j + 1), &mut v);
        }
        for (j, c) in tier.impact.iter().enumerate() {
            c.violations(&format!("tier {t} size {} impact", j + 1), &mut v);
        }
        for (j, &w) in tier.weights.iter().enumerate() {
            if !(w.is_finite() && w >= 0.0) {
                v.push(format!("tier {t} size {}: weight must be non-negative", j + 1));
            }
        }
        tier.reading.violations(&format!("tier {t} reading"), &mut v);
    }
    ValidationReport { violations: v }
}

/// Symmetric truncated inventory grid `{−Q·Δ^1, …, Q·Δ^1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InventoryGrid {
    pub step: f64,
    pub q_max_units: usize,
}

impl InventoryGrid {
    pub fn new(step: f64, q_max_units: usize) -> Self {
        InventoryGrid { step, q_max_units }
    }

    /// Grid wide enough that the inventory penalty at the edge is ten times
    /// the largest myopic reward rate.
    pub fn for_model(model: &MarketModel) -> Result<Self> {
        let step = model.ladder.smallest();
        let largest_units = *model.ladder.units().last().unwrap_or(&1);
        let reward = crate::hamiltonians::myopic_reward_rate(model)?;
        let gs2 = model.gamma * model.sigma * model.sigma;
        let units = if gs2 > 0.0 {
            ((20.0 * reward / gs2).sqrt() / step).ceil() as usize
        } else {
            10 * largest_units
        };
        Ok(InventoryGrid {
            step,
            q_max_units: units.max(4 * largest_units),
        })
    }

    pub fn len(&self) -> usize {
        2 * self.q_max_units + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn q_max(&self) -> f64 {
        self.q_max_units as f64 * self.step
    }

    pub fn center(&self) -> usize {
        self.q_max_units
    }

    pub fn node(&self, i: usize) -> f64 {
        (i as f64 - self.q_max_units as f64) * self.step
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.node(i))
    }

    pub fn index_of(&self, q: f64) -> Option<usize> {
        let u = q / self.step;
        let r = u.round();
        if (u - r).abs() > 1e-9 * u.abs().max(1.0) {
            return None;
        }
        let i = r as i64 + self.q_max_units as i64;
        (0..self.len() as i64).contains(&i).then_some(i as usize)
    }

    /// Node reached from `i` after a fill of `units` grid steps on `side`,
    /// or `None` when it leaves the grid (the trade is disabled).
    pub fn after_fill(&self, i: usize, units: usize, side: Side) -> Option<usize> {
        match side {
            Side::Bid => (i + units < self.len()).then_some(i + units),
            Side::Ask => i.checked_sub(units),
        }
    }

    /// Nodes `|q| ≤ q_max/2` at which every size can trade in both
    /// directions; this is where quotes are reported.
    pub fn report_nodes(&self, ladder: &SizeLadder) -> Vec<usize> {
        let largest = *ladder.units().last().unwrap_or(&0);
        let half = self.q_max_units / 2;
        let reach = half.min(self.q_max_units.saturating_sub(largest));
        self.interior(reach)
    }

    /// Nodes within `reach` grid steps of zero.
    pub fn interior(&self, reach: usize) -> Vec<usize> {
        let c = self.center();
        let reach = reach.min(self.q_max_units);
        (c - reach..=c + reach).collect()
    }
}

/// Running reward `β^n` of one tier for quote offsets `bids`, `asks` at
/// inventory `q`, with reading and impact scaled by `epsilon`.
pub fn tier_reward(
    model: &MarketModel,
    tier: usize,
    q: f64,
    bids: &[f64],
    asks: &[f64],
    epsilon: f64,
) -> Result<f64> {
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
    let spec = &model.tiers[tier];
    let skew: f64 = (0..k)
        .map(|j| spec.weights[j] * (asks[j] - bids[j]))
        .sum();
    let mut total = q * epsilon * spec.reading.eval(skew).value;
    for j in 0..k {
        let size = model.ladder.size(j);
        let zeta_b = spec.impact[j].eval(bids[j]).value;
        let zeta_a = spec.impact[j].eval(asks[j]).value;
        let lb = spec.intensity_bid[j].eval(bids[j])?.value;
        let la = spec.intensity_ask[j].eval(asks[j])?.value;
        total += size * lb * (bids[j] - (q + size) / size * epsilon * zeta_b);
        total += size * la * (asks[j] + (q - size) / size * epsilon * zeta_a);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single(curve: IntensityCurve, impact: ImpactCurve, reading: ReadingCurve) -> MarketModel {
        MarketModel {
            ladder: SizeLadder::new(vec![1.0]),
            tiers: vec![TierSpec {
                intensity_bid: vec![curve.clone()],
                intensity_ask: vec![curve],
                impact: vec![impact],
                weights: vec![1.0],
                reading,
            }],
            sigma: 100.0,
            gamma: 1e-5,
            rho: 0.01,
            epsilon: 0.0,
            quote_domain: QuoteDomain::default(),
        }
    }

    #[test]
    fn exponential_eval_at_zero() {
        let e = IntensityCurve::exponential(1000.0, 3.0).eval(0.0).unwrap();
        assert_eq!((e.value, e.d1, e.d2, e.c), (1000.0, -3000.0, 9000.0, 1.0));
    }

    #[test]
    fn exponential_eval_at_one_third() {
        // e^{-1} from its alternating series, independent of exp()
        let mut inv_e = 0.0;
        let mut term = 1.0;
        for n in 0..30 {
            if n > 0 {
                term *= -1.0 / n as f64;
            }
            inv_e += term;
        }
        let e = IntensityCurve::exponential(1000.0, 3.0).eval(1.0 / 3.0).unwrap();
        assert_relative_eq!(e.value, 1000.0 * inv_e, max_relative = 1e-12);
        assert_relative_eq!(e.value, 367.8794, epsilon = 1e-4);
        assert_relative_eq!(e.d1, -1103.638, epsilon = 1e-3);
        assert_relative_eq!(e.d2, 3310.915, epsilon = 1e-3);
        assert_eq!(e.c, 1.0);
    }

    fn sampled_exponential(step: f64, hi: f64) -> MonotoneTable {
        let n = (hi / step).round() as usize;
        let pts: Vec<(f64, f64)> = (0..=n)
            .map(|i| {
                let d = i as f64 * step;
                (d, 1000.0 * (-3.0 * d).exp())
            })
            .collect();
        MonotoneTable::new(&pts).unwrap()
    }

    #[test]
    fn tabulated_tracks_exponential() {
        let t = IntensityCurve::Tabulated(sampled_exponential(0.01, 2.0));
        let v = t.eval(0.5).unwrap().value;
        let exact = 1000.0 * (-1.5f64).exp();
        assert!(((v - exact) / exact).abs() < 1e-4);
    }

    #[test]
    fn tabulated_outside_hull_is_a_domain_error() {
        let t = IntensityCurve::Tabulated(sampled_exponential(0.01, 2.0));
        assert!(matches!(t.eval(2.5), Err(Error::OutsideTable { .. })));
        assert!(matches!(t.eval(-0.1), Err(Error::OutsideTable { .. })));
    }

    #[test]
    fn impact_eval_values() {
        let z = ImpactCurve::Zero.eval(5.0);
        assert_eq!((z.value, z.d1), (0.0, 0.0));
        let e = ImpactCurve::Exponential {
            alpha: 0.1,
            beta: 2.7,
        };
        let at0 = e.eval(0.0);
        assert_relative_eq!(at0.value, 0.1);
        assert_relative_eq!(at0.d1, 0.27);
        let at = e.eval(0.334150);
        assert_relative_eq!(at.value, 0.2465, epsilon = 1e-4);
        assert_relative_eq!(at.d1, 0.6656, epsilon = 1e-4);
    }

    #[test]
    fn reading_eval_values() {
        let l = ReadingCurve::Linear { slope: 1.0 };
        assert_eq!(l.eval(0.0).value, 0.0);
        assert_eq!(l.eval(0.0).d1, 1.0);
        assert_eq!(l.eval(-0.5).value, -0.5);
        let z = ReadingCurve::Zero.eval(3.0);
        assert_eq!((z.value, z.d1), (0.0, 0.0));
    }

    #[test]
    fn paper_two_tier_config_is_valid() {
        let m = crate::presets::price_reading();
        assert!(validate_model(&m).is_valid(), "{:?}", validate_model(&m));
    }

    #[test]
    fn non_multiple_ladder_is_reported() {
        let mut m = single(
            IntensityCurve::exponential(1000.0, 3.0),
            ImpactCurve::Zero,
            ReadingCurve::Zero,
        );
        m.ladder = SizeLadder::new(vec![1.0, 2.5]);
        for t in &mut m.tiers {
            t.intensity_bid.push(IntensityCurve::exponential(400.0, 3.0));
            t.intensity_ask.push(IntensityCurve::exponential(400.0, 3.0));
            t.impact.push(ImpactCurve::Zero);
            t.weights.push(0.0);
        }
        let r = validate_model(&m);
        assert_eq!(r.violations.len(), 1, "{r:?}");
        assert!(r.violations[0].contains("not an integer multiple"));
    }

    #[test]
    fn flat_table_is_reported() {
        let t = MonotoneTable::new(&[(0.0, 10.0), (1.0, 5.0), (2.0, 5.0), (3.0, 1.0)]).unwrap();
        let m = single(
            IntensityCurve::Tabulated(t),
            ImpactCurve::Zero,
            ReadingCurve::Zero,
        );
        let r = validate_model(&m);
        assert!(r
            .violations
            .iter()
            .any(|v| v.contains("intensity not strictly decreasing")));
    }

    #[test]
    fn other_violations_are_collected() {
        let mut m = single(
            IntensityCurve::exponential(-1.0, 3.0),
            ImpactCurve::Exponential {
                alpha: 0.1,
                beta: 0.0,
            },
            ReadingCurve::Linear { slope: -1.0 },
        );
        m.sigma = 0.0;
        m.rho = 0.0;
        let r = validate_model(&m);
        assert_eq!(r.violations.len(), 6, "{r:?}");
    }

    #[test]
    fn tier_reward_myopic_value() {
        let m = single(
            IntensityCurve::exponential(1000.0, 3.0),
            ImpactCurve::Zero,
            ReadingCurve::Zero,
        );
        let d = 1.0 / 3.0;
        let r = tier_reward(&m, 0, 7.0, &[d], &[d], 0.0).unwrap();
        let expected = 2.0 * 1000.0 * (-1.0f64).exp() / 3.0;
        assert_relative_eq!(r, expected, max_relative = 1e-14);
        assert_relative_eq!(r, 245.25, epsilon = 1e-2);
    }

    #[test]
    fn tier_reward_vanishes_without_fills() {
        let m = single(
            IntensityCurve::exponential(1000.0, 3.0),
            ImpactCurve::Zero,
            ReadingCurve::Zero,
        );
        let r = tier_reward(&m, 0, 3.0, &[400.0], &[400.0], 0.0).unwrap();
        assert!(r.abs() < 1e-300);
    }

    #[test]
    fn tier_reward_zero_skew_cancellation() {
        let zeta = ImpactCurve::Exponential {
            alpha: 0.1,
            beta: 2.7,
        };
        let m = single(
            IntensityCurve::exponential(1000.0, 3.0),
            zeta.clone(),
            ReadingCurve::Linear { slope: 1.0 },
        );
        let d = 0.4;
        let q = 6.0;
        let base = tier_reward(&m, 0, q, &[d], &[d], 0.0).unwrap();
        let full = tier_reward(&m, 0, q, &[d], &[d], 1.0).unwrap();
        let lam = 1000.0 * (-3.0 * d).exp();
        let z = zeta.eval(d).value;
        assert_relative_eq!(full, base - 2.0 * z * lam * 1.0, max_relative = 1e-13);
    }

    #[test]
    fn tier_reward_length_mismatch() {
        let m = single(
            IntensityCurve::exponential(1000.0, 3.0),
            ImpactCurve::Zero,
            ReadingCurve::Zero,
        );
        assert!(matches!(
            tier_reward(&m, 0, 0.0, &[0.3, 0.3], &[0.3], 0.0),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn grid_basics() {
        let g = InventoryGrid::new(1.0, 10);
        assert_eq!(g.len(), 21);
        assert_eq!(g.node(0), -10.0);
        assert_eq!(g.node(20), 10.0);
        assert_eq!(g.index_of(3.0), Some(13));
        assert_eq!(g.index_of(11.0), None);
        assert_eq!(g.index_of(0.5), None);
        assert_eq!(g.after_fill(18, 5, Side::Bid), None);
        assert_eq!(g.after_fill(18, 2, Side::Bid), Some(20));
        assert_eq!(g.after_fill(3, 5, Side::Ask), None);
        let ladder = SizeLadder::new(vec![1.0, 2.0]);
        let r = g.report_nodes(&ladder);
        assert_eq!(r.first().map(|&i| g.node(i)), Some(-5.0));
        assert_eq!(r.last().map(|&i| g.node(i)), Some(5.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn exponential_c_is_one(l0 in 1.0..5000.0f64, k in 0.1..10.0f64, d in -5.0..20.0f64) {
                let e = IntensityCurve::exponential(l0, k).eval(d).unwrap();
                prop_assert_eq!(e.c, 1.0);
            }

            #[test]
            fn impact_non_negative_non_decreasing(a in 0.0..1.0f64, b in 0.01..5.0f64, d in -5.0..5.0f64, h in 0.0..1.0f64) {
                let z = ImpactCurve::Exponential { alpha: a, beta: b };
                prop_assert!(z.eval(d).value >= 0.0);
                prop_assert!(z.eval(d + h).value >= z.eval(d).value);
            }

            #[test]
            fn reward_bid_ask_mirror(q in -50.0..50.0f64,
                                     b1 in 0.0..1.0f64, b2 in 0.0..1.0f64,
                                     a1 in 0.0..1.0f64, a2 in 0.0..1.0f64,
                                     eps in 0.0..1.0f64) {
                let m = crate::presets::two_size_test_model();
                let lhs = tier_reward(&m, 0, q, &[b1, b2], &[a1, a2], eps).unwrap();
                let rhs = tier_reward(&m, 0, -q, &[a1, a2], &[b1, b2], eps).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
            }

            #[test]
            fn reward_without_epsilon_ignores_inventory(q1 in -50.0..50.0f64, q2 in -50.0..50.0f64,
                                                        b in 0.0..1.0f64, a in 0.0..1.0f64) {
                let m = crate::presets::two_size_test_model();
                let r1 = tier_reward(&m, 0, q1, &[b, b], &[a, a], 0.0).unwrap();
                let r2 = tier_reward(&m, 0, q2, &[b, b], &[a, a], 0.0).unwrap();
                prop_assert_eq!(r1, r2);
            }
        }
    }
}
