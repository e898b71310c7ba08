//! Event-driven Monte Carlo of the dealer's book under a feedback quoting
//! policy.
//!
//! Quotes depend on inventory only, so every intensity is constant between
//! fills and the running reward integrates exactly against the discount
//! factor. Fills come from thinning against a per-node bound; the
//! reference price is sampled only at fills and reporting times.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

use crate::error::{Error, Result};
use crate::hamiltonians::{LegMask, TierPoint};
use crate::model::{InventoryGrid, MarketModel, Side};
use crate::perturbation::{corrected_quotes, solve_f};
use crate::quadratic::QuadraticApprox;
use crate::solver::{leg_mask, solve_baseline, QuoteSurface, SolverOptions};

/// Where the quotes of a feedback policy come from.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    Baseline,
    Corrected { epsilon: f64 },
    Quadratic,
    QuadraticCorrected { epsilon: f64 },
    /// Offsets per `[tier][size]` as `[bid, ask]`, identical at every node.
    Constant(Vec<Vec<[f64; 2]>>),
    NoTrade,
}

impl PolicySpec {
    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::Baseline => "baseline",
            PolicySpec::Corrected { .. } => "corrected",
            PolicySpec::Quadratic => "quadratic",
            PolicySpec::QuadraticCorrected { .. } => "quadratic-corrected",
            PolicySpec::Constant(_) => "constant",
            PolicySpec::NoTrade => "none",
        }
    }

    /// Tabulates the policy on `grid`. Legs whose fill would leave the grid
    /// never trade; all offsets are clamped to the quote domain.
    pub fn build(&self, model: &MarketModel, grid: &InventoryGrid) -> Result<FeedbackPolicy> {
        let (nt, nk) = (model.n_tiers(), model.n_sizes());
        let opts = SolverOptions::default();
        let from_fn = |f: &dyn Fn(usize) -> Result<Vec<Vec<[f64; 2]>>>| -> Result<FeedbackPolicy> {
            let mut quotes = Vec::with_capacity(grid.len());
            for i in 0..grid.len() {
                quotes.push(f(i)?);
            }
            FeedbackPolicy::from_table(model, *grid, quotes)
        };
        match self {
            PolicySpec::Baseline => {
                let base = solve_baseline(&model.with_epsilon(0.0), grid, &opts)?;
                FeedbackPolicy::from_surface(model, &base.quotes)
            }
            PolicySpec::Corrected { epsilon } => {
                let base = solve_baseline(&model.with_epsilon(0.0), grid, &opts)?;
                let f = solve_f(model, &base.quotes)?;
                let q = corrected_quotes(model, &base.theta, &f.total, &base.quotes, *epsilon)?;
                FeedbackPolicy::from_surface(model, &q)
            }
            PolicySpec::Quadratic | PolicySpec::QuadraticCorrected { .. } => {
                let approx = QuadraticApprox::new(model)?;
                let eps = match self {
                    PolicySpec::QuadraticCorrected { epsilon } => *epsilon,
                    _ => 0.0,
                };
                from_fn(&|i| {
                    let q = grid.node(i);
                    let mut quotes = approx.quotes(model, q)?;
                    if eps != 0.0 {
                        let adj = approx.adjustments(model, q)?;
                        for (row, arow) in quotes.iter_mut().zip(&adj) {
                            for (p, a) in row.iter_mut().zip(arow) {
                                p[0] += eps * a[0];
                                p[1] += eps * a[1];
                            }
                        }
                    }
                    Ok(quotes)
                })
            }
            PolicySpec::Constant(table) => {
                if table.len() != nt {
                    return Err(Error::LengthMismatch {
                        what: "constant policy tiers",
                        expected: nt,
                        got: table.len(),
                    });
                }
                if let Some(row) = table.iter().find(|r| r.len() != nk) {
                    return Err(Error::LengthMismatch {
                        what: "constant policy sizes",
                        expected: nk,
                        got: row.len(),
                    });
                }
                from_fn(&|_| Ok(table.clone()))
            }
            PolicySpec::NoTrade => Ok(FeedbackPolicy {
                grid: *grid,
                nodes: grid.nodes().map(|q| NodeState::idle(model, q, nt)).collect(),
            }),
        }
    }
}

/// One leg that can fill from a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leg {
    pub tier: usize,
    pub size_idx: usize,
    pub side: Side,
    pub delta: f64,
    pub rate: f64,
    /// Reference-price impact per unit `ε`.
    pub impact: f64,
    pub target: usize,
}

/// Everything the simulation needs at one inventory node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub q: f64,
    pub legs: Vec<Leg>,
    cumulative: Vec<f64>,
    pub total_rate: f64,
    /// `Σ_n β^n − ½γσ²q²` at `ε = 0`.
    pub base_reward: f64,
    /// Derivative of the running reward in `ε`.
    pub informed_reward: f64,
    /// Reference-price drift per unit `ε`, `Σ_n J^n(skew_n)`.
    pub drift: f64,
    /// Per tier `q J^n(skew_n)` per unit `ε`.
    pub reading_flow: Vec<f64>,
    /// Offsets per `[tier][size]` as `[bid, ask]`; non-trading legs are at
    /// the domain maximum.
    pub quotes: Vec<Vec<[f64; 2]>>,
}

impl NodeState {
    pub fn reward_rate(&self, epsilon: f64) -> f64 {
        self.base_reward + epsilon * self.informed_reward
    }

    fn idle(model: &MarketModel, q: f64, n_tiers: usize) -> Self {
        NodeState {
            q,
            legs: Vec::new(),
            cumulative: Vec::new(),
            total_rate: 0.0,
            base_reward: -model.inventory_penalty(q),
            informed_reward: 0.0,
            drift: 0.0,
            reading_flow: vec![0.0; n_tiers],
            quotes: vec![vec![[model.quote_domain.max; 2]; model.n_sizes()]; n_tiers],
        }
    }
}

/// A quoting policy tabulated on the inventory grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackPolicy {
    pub grid: InventoryGrid,
    pub nodes: Vec<NodeState>,
}

impl FeedbackPolicy {
    /// Uses the quotes of `surface`; its disabled legs do not trade.
    pub fn from_surface(model: &MarketModel, surface: &QuoteSurface) -> Result<Self> {
        let grid = surface.grid;
        let quotes = (0..grid.len())
            .map(|i| {
                (0..model.n_tiers())
                    .map(|n| {
                        (0..model.n_sizes())
                            .map(|k| [surface.get(n, k, Side::Bid, i), surface.get(n, k, Side::Ask, i)])
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self::from_table(model, grid, quotes)
    }

    /// `quotes[node][tier][size]` as `[bid, ask]`.
    pub fn from_table(
        model: &MarketModel,
        grid: InventoryGrid,
        quotes: Vec<Vec<Vec<[f64; 2]>>>,
    ) -> Result<Self> {
        if quotes.len() != grid.len() {
            return Err(Error::LengthMismatch {
                what: "policy nodes",
                expected: grid.len(),
                got: quotes.len(),
            });
        }
        let units = model.ladder.units();
        let dom = model.quote_domain;
        let nodes = quotes
            .into_iter()
            .enumerate()
            .map(|(i, mut table)| {
                let q = grid.node(i);
                let mask = leg_mask(&grid, &units, i);
                let mut legs = Vec::new();
                let mut reward = -model.inventory_penalty(q);
                let mut informed = 0.0;
                let mut drift = 0.0;
                let mut reading_flow = Vec::with_capacity(model.n_tiers());
                for (n, spec) in model.tiers.iter().enumerate() {
                    let row = &mut table[n];
                    for (k, p) in row.iter_mut().enumerate() {
                        for (s, side) in Side::BOTH.into_iter().enumerate() {
                            p[s] = if mask.enabled(k, side) {
                                dom.clamp(p[s])
                            } else {
                                dom.max
                            };
                        }
                    }
                    let bids: Vec<f64> = row.iter().map(|p| p[0]).collect();
                    let asks: Vec<f64> = row.iter().map(|p| p[1]).collect();
                    let x: Vec<f64> = bids.iter().chain(&asks).copied().collect();
                    let zeros = vec![0.0; model.n_sizes()];
                    let pt = TierPoint {
                        model,
                        tier: n,
                        q,
                        p_bid: &zeros,
                        p_ask: &zeros,
                        epsilon: 0.0,
                        mask: &mask,
                    };
                    let uninformed = pt.value(&x)?;
                    reward += uninformed;
                    informed += TierPoint { epsilon: 1.0, ..pt }.value(&x)? - uninformed;
                    let reading = spec.reading.eval(enabled_skew(model, n, &bids, &asks, &mask)).value;
                    drift += reading;
                    reading_flow.push(q * reading);
                    for (k, &u) in units.iter().enumerate() {
                        for (side, delta) in [(Side::Bid, bids[k]), (Side::Ask, asks[k])] {
                            let Some(target) = grid.after_fill(i, u, side) else {
                                continue;
                            };
                            legs.push(Leg {
                                tier: n,
                                size_idx: k,
                                side,
                                delta,
                                rate: spec.intensity(k, side).eval(delta)?.value,
                                impact: spec.impact[k].eval(delta).value,
                                target,
                            });
                        }
                    }
                }
                let mut acc = 0.0;
                let cumulative = legs
                    .iter()
                    .map(|l| {
                        acc += l.rate;
                        acc
                    })
                    .collect();
                Ok(NodeState {
                    q,
                    legs,
                    cumulative,
                    total_rate: acc,
                    base_reward: reward,
                    informed_reward: informed,
                    drift,
                    reading_flow,
                    quotes: table,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeedbackPolicy { grid, nodes })
    }

    /// `max |reward rate|` over the grid at informational scale `epsilon`.
    pub fn reward_bound(&self, epsilon: f64) -> f64 {
        self.nodes
            .iter()
            .map(|n| n.reward_rate(epsilon).abs())
            .fold(0.0, f64::max)
    }
}

fn enabled_skew(model: &MarketModel, tier: usize, bids: &[f64], asks: &[f64], mask: &LegMask) -> f64 {
    let w = &model.tiers[tier].weights;
    (0..model.n_sizes())
        .map(|k| {
            let a = if mask.ask[k] { w[k] * asks[k] } else { 0.0 };
            let b = if mask.bid[k] { w[k] * bids[k] } else { 0.0 };
            a - b
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub paths: usize,
    /// Simulation horizon (days).
    pub t_max: f64,
    pub seed: u64,
    /// Spacing of `Sample` rows and of the Brownian grid (days); `None`
    /// samples the reference price at fills only.
    pub report_dt: Option<f64>,
    /// Thinning bound as a multiple of the node's total rate (≥ 1).
    pub thinning_factor: f64,
    /// Reference price at time 0 (bp).
    pub s0: f64,
}

impl SimConfig {
    /// Horizon `14/ρ`, so that the discarded tail weighs at most `e^{-14}`.
    pub fn for_model(model: &MarketModel, paths: usize, seed: u64) -> Self {
        SimConfig {
            paths,
            t_max: 14.0 / model.rho,
            seed,
            report_dt: None,
            thinning_factor: 1.0,
            s0: 0.0,
        }
    }

    fn check(&self) -> Result<()> {
        if self.paths == 0 {
            return Err(Error::Config("at least one path is required".into()));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::Config("horizon must be positive and finite".into()));
        }
        if !(self.thinning_factor >= 1.0 && self.thinning_factor.is_finite()) {
            return Err(Error::Config("thinning factor must be at least 1".into()));
        }
        if let Some(dt) = self.report_dt {
            if !(dt > 0.0) {
                return Err(Error::Config("reporting step must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Start,
    Fill,
    Sample,
    End,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Start => "start",
            EventKind::Fill => "fill",
            EventKind::Sample => "sample",
            EventKind::End => "end",
        }
    }
}

/// One row of a path dump. Fill fields are `None` on other rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEvent {
    pub t: f64,
    pub kind: EventKind,
    pub tier: Option<usize>,
    pub size_idx: Option<usize>,
    pub side: Option<Side>,
    pub delta: Option<f64>,
    /// Impact applied to the reference price by this fill (bp).
    pub impact: Option<f64>,
    pub s: f64,
    pub q: f64,
    pub x: f64,
    pub pnl: f64,
}

/// Per-path discounted sums.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTotals {
    /// `∫ e^{-ρt} (Σ β^n − ½γσ²q²) dt`.
    pub objective: f64,
    /// `∫ e^{-ρt} (dPnL − ½γσ²q² dt)`.
    pub pnl_objective: f64,
    /// Per tier Feynman–Kac integrand of the first-order correction.
    pub correction: Vec<f64>,
    pub fills: usize,
    pub proposals: usize,
    /// `|X + qS − X0 − q0 S0 − Σ dPnL|` at the horizon.
    pub identity_error: f64,
    /// Sum of absolute PnL increments, the scale of `identity_error`.
    pub pnl_scale: f64,
    pub max_abs_q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub index: usize,
    pub events: Vec<PathEvent>,
    pub totals: PathTotals,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct EstimatorResult {
    pub mean: f64,
    pub standard_error: f64,
    pub paths: usize,
    /// Bound on the discounted contribution beyond the horizon.
    pub tail_bound: f64,
}

impl EstimatorResult {
    pub fn from_samples(xs: &[f64], tail_bound: f64) -> Self {
        let n = xs.len();
        let mean = pairwise_sum(xs) / n as f64;
        let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = if n > 1 { pairwise_sum(&sq) / (n - 1) as f64 } else { 0.0 };
        EstimatorResult {
            mean,
            standard_error: (var / n as f64).sqrt(),
            paths: n,
            tail_bound,
        }
    }

    /// `|mean − target|` in units of standard error; infinite for a
    /// nonzero gap at zero variance.
    pub fn z_score(&self, target: f64) -> f64 {
        let gap = (self.mean - target).abs();
        if gap == 0.0 {
            0.0
        } else {
            gap / self.standard_error
        }
    }
}

/// Summation in a fixed binary tree, independent of scheduling.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

// per-path streams: events on 2·path, Brownian motion on 2·path + 1
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// `(B(t1) − B(t0), ∫_{t0}^{t1} e^{-ρs} dB_s)` drawn jointly.
fn brownian_pair(rng: &mut ChaCha8Rng, rho: f64, t0: f64, t1: f64) -> (f64, f64) {
    let tau = t1 - t0;
    let z1: f64 = StandardNormal.sample(rng);
    let z2: f64 = StandardNormal.sample(rng);
    let var_i = (-2.0 * rho * t0).exp() * -(-2.0 * rho * tau).exp_m1() / (2.0 * rho);
    let cov = (-rho * t0).exp() * -(-rho * tau).exp_m1() / rho;
    let sd_b = tau.sqrt();
    let beta = cov / sd_b;
    let resid = (var_i - beta * beta).max(0.0).sqrt();
    (sd_b * z1, beta * z1 + resid * z2)
}

struct PathState {
    t: f64,
    i: usize,
    s: f64,
    x: f64,
    pnl: f64,
    pnl_scale: f64,
}

/// Simulates one path. `events`, when given, receives the path rows.
fn run_path(
    model: &MarketModel,
    policy: &FeedbackPolicy,
    start: usize,
    cfg: &SimConfig,
    index: usize,
    mut events: Option<&mut Vec<PathEvent>>,
) -> PathTotals {
    let rho = model.rho;
    let sigma = model.sigma;
    let eps = model.epsilon;
    let mut ev_rng = stream(cfg.seed, 2 * index as u64);
    let mut bm_rng = stream(cfg.seed, 2 * index as u64 + 1);
    let q0 = policy.nodes[start].q;
    let mut st = PathState {
        t: 0.0,
        i: start,
        s: cfg.s0,
        x: 0.0,
        pnl: 0.0,
        pnl_scale: 0.0,
    };
    let mut totals = PathTotals {
        objective: 0.0,
        pnl_objective: 0.0,
        correction: vec![0.0; model.n_tiers()],
        fills: 0,
        proposals: 0,
        identity_error: 0.0,
        pnl_scale: 0.0,
        max_abs_q: q0.abs(),
    };
    let row = |st: &PathState, kind: EventKind, fill: Option<(&Leg, f64)>| PathEvent {
        t: st.t,
        kind,
        tier: fill.map(|(l, _)| l.tier),
        size_idx: fill.map(|(l, _)| l.size_idx),
        side: fill.map(|(l, _)| l.side),
        delta: fill.map(|(l, _)| l.delta),
        impact: fill.map(|(_, z)| z),
        s: st.s,
        q: policy.nodes[st.i].q,
        x: st.x,
        pnl: st.pnl,
    };
    if let Some(ev) = events.as_deref_mut() {
        ev.push(row(&st, EventKind::Start, None));
    }
    let mut next_report = cfg.report_dt.unwrap_or(f64::INFINITY);

    loop {
        let node = &policy.nodes[st.i];
        let bound = node.total_rate * cfg.thinning_factor;
        let wait = if bound > 0.0 {
            let e: f64 = Exp1.sample(&mut ev_rng);
            e / bound
        } else {
            f64::INFINITY
        };
        let t1 = (st.t + wait).min(cfg.t_max);

        // inventory and quotes are frozen on [t, t1]
        let disc = ((-rho * st.t).exp() - (-rho * t1).exp()) / rho;
        totals.objective += node.reward_rate(eps) * disc;
        for (c, r) in totals.correction.iter_mut().zip(&node.reading_flow) {
            *c += r * disc;
        }
        let penalty = model.inventory_penalty(node.q);
        let drift = eps * node.drift;
        totals.pnl_objective += (node.q * drift - penalty) * disc;
        // Brownian grid: reporting times inside the segment, then t1
        let mut t0 = st.t;
        loop {
            let seg_end = next_report.min(t1);
            if seg_end > t0 {
                let (db, di) = brownian_pair(&mut bm_rng, rho, t0, seg_end);
                let ds = drift * (seg_end - t0) + sigma * db;
                st.s += ds;
                st.pnl += node.q * ds;
                st.pnl_scale += (node.q * ds).abs();
                totals.pnl_objective += node.q * sigma * di;
                t0 = seg_end;
            }
            if next_report <= t1 && next_report < cfg.t_max {
                st.t = next_report;
                if let Some(ev) = events.as_deref_mut() {
                    ev.push(row(&st, EventKind::Sample, None));
                }
                next_report += cfg.report_dt.unwrap_or(f64::INFINITY);
            } else {
                break;
            }
        }
        st.t = t1;
        if t1 >= cfg.t_max {
            break;
        }

        totals.proposals += 1;
        let u = ev_rng.random::<f64>() * bound;
        if u >= node.total_rate {
            continue;
        }
        let k = node.cumulative.partition_point(|&c| c <= u).min(node.legs.len() - 1);
        let leg = &node.legs[k];
        let size = model.ladder.size(leg.size_idx);
        let q_before = node.q;
        let q_after = policy.nodes[leg.target].q;
        let jump = eps * leg.impact;
        let d = (-rho * t1).exp();
        let increment = match leg.side {
            Side::Bid => {
                st.x -= size * (st.s - leg.delta);
                st.s -= jump;
                totals.correction[leg.tier] -= d * (q_before + size) * leg.impact;
                size * leg.delta - q_after * jump
            }
            Side::Ask => {
                st.x += size * (st.s + leg.delta);
                st.s += jump;
                totals.correction[leg.tier] += d * (q_before - size) * leg.impact;
                size * leg.delta + q_after * jump
            }
        };
        st.pnl += increment;
        st.pnl_scale += increment.abs();
        totals.pnl_objective += d * increment;
        totals.fills += 1;
        st.i = leg.target;
        totals.max_abs_q = totals.max_abs_q.max(q_after.abs());
        if let Some(ev) = events.as_deref_mut() {
            ev.push(row(&st, EventKind::Fill, Some((leg, jump))));
        }
    }
    if let Some(ev) = events.as_deref_mut() {
        ev.push(row(&st, EventKind::End, None));
    }
    let q = policy.nodes[st.i].q;
    let marked = st.x + q * st.s - q0 * cfg.s0;
    totals.identity_error = (marked - st.pnl).abs();
    totals.pnl_scale = st.pnl_scale + (st.x.abs() + (q * st.s).abs());
    totals
}

fn start_node(policy: &FeedbackPolicy, q0: f64) -> Result<usize> {
    policy.grid.index_of(q0).ok_or_else(|| {
        Error::Config(format!(
            "initial inventory {q0} is not a node of the grid (step {}, q_max {})",
            policy.grid.step,
            policy.grid.q_max()
        ))
    })
}

/// Simulates `cfg.paths` paths from inventory `q0`, keeping every row.
pub fn simulate_paths(
    model: &MarketModel,
    policy: &FeedbackPolicy,
    q0: f64,
    cfg: &SimConfig,
) -> Result<Vec<PathRecord>> {
    cfg.check()?;
    let start = start_node(policy, q0)?;
    Ok((0..cfg.paths)
        .into_par_iter()
        .map(|index| {
            let mut events = Vec::new();
            let totals = run_path(model, policy, start, cfg, index, Some(&mut events));
            PathRecord {
                index,
                events,
                totals,
            }
        })
        .collect())
}

/// Per-path totals only, in path order.
pub fn simulate_totals(
    model: &MarketModel,
    policy: &FeedbackPolicy,
    q0: f64,
    cfg: &SimConfig,
) -> Result<Vec<PathTotals>> {
    cfg.check()?;
    let start = start_node(policy, q0)?;
    Ok((0..cfg.paths)
        .into_par_iter()
        .map(|index| run_path(model, policy, start, cfg, index, None))
        .collect())
}

/// All estimators from one set of paths.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimates {
    pub objective: EstimatorResult,
    pub pnl_objective: EstimatorResult,
    /// Paired `pnl_objective − objective`.
    pub difference: EstimatorResult,
    pub correction_per_tier: Vec<EstimatorResult>,
    pub correction_total: EstimatorResult,
    pub max_identity_error: f64,
    pub max_abs_q: f64,
}

pub fn estimate_all(
    model: &MarketModel,
    policy: &FeedbackPolicy,
    q0: f64,
    cfg: &SimConfig,
) -> Result<Estimates> {
    let totals = simulate_totals(model, policy, q0, cfg)?;
    let tail = (-model.rho * cfg.t_max).exp() * policy.reward_bound(model.epsilon) / model.rho;
    let col = |f: &dyn Fn(&PathTotals) -> f64| -> Vec<f64> { totals.iter().map(f).collect() };
    // expected |integrand| of the correction: reading flow plus impact jumps
    let correction_rate = |n: &NodeState| -> f64 {
        let jumps: f64 = n
            .legs
            .iter()
            .map(|l| l.rate * (n.q.abs() + model.ladder.size(l.size_idx)) * l.impact)
            .sum();
        n.reading_flow.iter().map(|r| r.abs()).sum::<f64>() + jumps
    };
    let tail_f = (-model.rho * cfg.t_max).exp()
        * policy.nodes.iter().map(correction_rate).fold(0.0, f64::max)
        / model.rho;
    Ok(Estimates {
        objective: EstimatorResult::from_samples(&col(&|t| t.objective), tail),
        pnl_objective: EstimatorResult::from_samples(&col(&|t| t.pnl_objective), tail),
        difference: EstimatorResult::from_samples(&col(&|t| t.pnl_objective - t.objective), 2.0 * tail),
        correction_per_tier: (0..model.n_tiers())
            .map(|n| EstimatorResult::from_samples(&col(&|t| t.correction[n]), tail_f))
            .collect(),
        correction_total: EstimatorResult::from_samples(&col(&|t| t.correction.iter().sum()), tail_f),
        max_identity_error: totals
            .iter()
            .map(|t| t.identity_error / t.pnl_scale.max(1.0))
            .fold(0.0, f64::max),
        max_abs_q: totals.iter().map(|t| t.max_abs_q).fold(0.0, f64::max),
    })
}

/// Discounted running-reward objective.
pub fn estimate_objective(
    model: &MarketModel,
    policy: &FeedbackPolicy,
    q0: f64,
    cfg: &SimConfig,
) -> Result<EstimatorResult> {
    Ok(estimate_all(model, policy, q0, cfg)?.objective)
}

/// Discounted PnL increments net of the inventory penalty.
pub fn estimate_pnl_objective(
    model: &MarketModel,
    policy: &FeedbackPolicy,
    q0: f64,
    cfg: &SimConfig,
) -> Result<EstimatorResult> {
    Ok(estimate_all(model, policy, q0, cfg)?.pnl_objective)
}

/// First-order value correction at `q0` per tier, and in total, from the
/// uninformed dynamics under `policy`.
pub fn estimate_f(
    model: &MarketModel,
    policy: &FeedbackPolicy,
    q0: f64,
    cfg: &SimConfig,
) -> Result<(Vec<EstimatorResult>, EstimatorResult)> {
    let e = estimate_all(&model.with_epsilon(0.0), policy, q0, cfg)?;
    Ok((e.correction_per_tier, e.correction_total))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson goodness of fit of `counts` to Poisson(`mean`), pooling bins so
/// that every expected count is at least 5.
pub fn poisson_chi_square(counts: &[u64], mean: f64) -> Result<ChiSquareTest> {
    let n = counts.len() as f64;
    let dist = Poisson::new(mean).map_err(|e| Error::Config(format!("poisson mean {mean}: {e}")))?;
    let max = counts.iter().copied().max().unwrap_or(0);
    let mut observed = vec![0u64; max as usize + 2];
    for &c in counts {
        observed[c as usize] += 1;
    }
    // bins [lo, hi) with the last bin open-ended
    let mut bins: Vec<(f64, u64)> = Vec::new();
    let (mut exp_acc, mut obs_acc) = (0.0, 0u64);
    let mut cdf = 0.0;
    for (k, &o) in observed.iter().enumerate() {
        let pk = dist.pmf(k as u64);
        cdf += pk;
        exp_acc += n * pk;
        obs_acc += o;
        if exp_acc >= 5.0 && n * (1.0 - cdf) >= 5.0 {
            bins.push((exp_acc, obs_acc));
            exp_acc = 0.0;
            obs_acc = 0;
        }
    }
    let tail_expected = exp_acc + n * (1.0 - cdf).max(0.0);
    match bins.last_mut() {
        Some(last) if tail_expected < 5.0 => {
            last.0 += tail_expected;
            last.1 += obs_acc;
        }
        _ => bins.push((tail_expected, obs_acc)),
    }
    if bins.len() < 2 {
        return Err(Error::Config("too few paths for a chi-square test".into()));
    }
    let statistic: f64 = bins
        .iter()
        .map(|&(e, o)| (o as f64 - e).powi(2) / e)
        .sum();
    let dof = bins.len() - 1;
    let chi = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    Ok(ChiSquareTest {
        statistic,
        dof,
        p_value: 1.0 - chi.cdf(statistic),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InventoryGrid;
    use crate::presets;

    fn single(gamma: f64) -> MarketModel {
        let mut m = presets::single_leg(100.0, 2.0);
        m.gamma = gamma;
        m.rho = 1.0;
        m
    }

    fn constant(delta: f64) -> PolicySpec {
        PolicySpec::Constant(vec![vec![[delta, delta]]])
    }

    #[test]
    fn no_trade_is_deterministic() {
        let m = single(1e-5);
        let grid = InventoryGrid::new(1.0, 20);
        let p = PolicySpec::NoTrade.build(&m, &grid).unwrap();
        let cfg = SimConfig::for_model(&m, 16, 3);
        let e = estimate_all(&m, &p, 5.0, &cfg).unwrap();
        let exact = -m.gamma * m.sigma * m.sigma * 25.0 / (2.0 * m.rho);
        assert!((e.objective.mean - exact).abs() <= 1e-6 * exact.abs());
        assert!(e.objective.standard_error <= 1e-12 * exact.abs());
        let e0 = estimate_all(&m, &p, 0.0, &cfg).unwrap();
        assert_eq!(e0.pnl_objective.mean, 0.0);
        assert_eq!(e0.pnl_objective.standard_error, 0.0);
    }

    #[test]
    fn constant_quotes_earn_the_poisson_reward() {
        let m = single(0.0);
        let grid = InventoryGrid::new(1.0, 400);
        let p = constant(0.5).build(&m, &grid).unwrap();
        let cfg = SimConfig::for_model(&m, 2000, 11);
        let e = estimate_objective(&m, &p, 0.0, &cfg).unwrap();
        let lam = 100.0 * (-1.0f64).exp();
        let exact = 2.0 * lam * 0.5 / m.rho;
        // γ = 0 makes the integrand constant; only the horizon cut remains
        let slack = 1e-12 * exact;
        assert!((e.mean - exact).abs() <= 3.0 * e.standard_error + e.tail_bound + slack, "{e:?} vs {exact}");
    }

    #[test]
    fn reruns_are_bit_identical() {
        let m = presets::two_size_test_model().with_rho(5.0);
        let grid = InventoryGrid::new(1.0, 30);
        let p = PolicySpec::Quadratic.build(&m, &grid).unwrap();
        let cfg = SimConfig {
            report_dt: Some(0.05),
            ..SimConfig::for_model(&m, 8, 99)
        };
        let a = simulate_paths(&m, &p, 0.0, &cfg).unwrap();
        let b = simulate_paths(&m, &p, 0.0, &cfg).unwrap();
        assert_eq!(a, b);
        let other = simulate_paths(&m, &p, 0.0, &SimConfig { seed: 100, ..cfg }).unwrap();
        assert_ne!(a[0].events, other[0].events);
    }

    #[test]
    fn reporting_rows_do_not_change_the_fills() {
        let m = presets::two_size_test_model().with_rho(5.0);
        let grid = InventoryGrid::new(1.0, 30);
        let p = PolicySpec::Quadratic.build(&m, &grid).unwrap();
        let base = SimConfig::for_model(&m, 4, 5);
        let a = simulate_totals(&m, &p, 0.0, &base).unwrap();
        let b = simulate_totals(&m, &p, 0.0, &SimConfig { report_dt: Some(0.01), ..base }).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.objective, y.objective);
            assert_eq!(x.fills, y.fills);
        }
    }

    #[test]
    fn accounting_identity_holds_on_every_path() {
        let m = presets::two_size_test_model().with_rho(5.0).with_epsilon(0.3);
        let grid = InventoryGrid::new(1.0, 30);
        let p = PolicySpec::QuadraticCorrected { epsilon: 0.3 }.build(&m, &grid).unwrap();
        let cfg = SimConfig {
            report_dt: Some(0.1),
            ..SimConfig::for_model(&m, 50, 1)
        };
        for rec in simulate_paths(&m, &p, 3.0, &cfg).unwrap() {
            let t = &rec.totals;
            assert!(t.identity_error <= 1e-9 * t.pnl_scale.max(1.0), "{t:?}");
            assert!(t.max_abs_q <= grid.q_max());
            let first = rec.events.first().unwrap();
            let last = rec.events.last().unwrap();
            assert_eq!((first.kind, last.kind), (EventKind::Start, EventKind::End));
            assert_eq!(last.t, cfg.t_max);
            assert!(rec.events.windows(2).all(|w| w[0].t <= w[1].t));
        }
    }

    #[test]
    fn fills_jump_the_reference_price_by_the_impact() {
        let m = presets::two_size_test_model().with_rho(5.0).with_epsilon(0.5);
        let grid = InventoryGrid::new(1.0, 30);
        let p = PolicySpec::Quadratic.build(&m, &grid).unwrap();
        let rec = &simulate_paths(&m, &p, 0.0, &SimConfig::for_model(&m, 1, 2)).unwrap()[0];
        let fills: Vec<_> = rec.events.iter().filter(|e| e.kind == EventKind::Fill).collect();
        assert!(!fills.is_empty());
        for e in fills {
            let zeta = m.tiers[0].impact[e.size_idx.unwrap()].eval(e.delta.unwrap()).value;
            assert!((e.impact.unwrap() - 0.5 * zeta).abs() <= 1e-15);
        }
    }

    #[test]
    fn fill_counts_are_poisson_with_and_without_rejection() {
        let m = single(0.0);
        let grid = InventoryGrid::new(1.0, 1000);
        let p = constant(0.4).build(&m, &grid).unwrap();
        let horizon = 0.25;
        let mean = 2.0 * 100.0 * (-0.8f64).exp() * horizon;
        for factor in [1.0, 3.0] {
            let cfg = SimConfig {
                t_max: horizon,
                thinning_factor: factor,
                ..SimConfig::for_model(&m, 4000, 17)
            };
            let counts: Vec<u64> = simulate_totals(&m, &p, 0.0, &cfg)
                .unwrap()
                .iter()
                .map(|t| t.fills as u64)
                .collect();
            let test = poisson_chi_square(&counts, mean).unwrap();
            assert!(test.p_value > 0.01, "factor {factor}: {test:?}");
        }
    }

    #[test]
    fn chi_square_rejects_the_wrong_mean() {
        let m = single(0.0);
        let grid = InventoryGrid::new(1.0, 1000);
        let p = constant(0.4).build(&m, &grid).unwrap();
        let cfg = SimConfig {
            t_max: 0.25,
            ..SimConfig::for_model(&m, 4000, 17)
        };
        let counts: Vec<u64> = simulate_totals(&m, &p, 0.0, &cfg)
            .unwrap()
            .iter()
            .map(|t| t.fills as u64)
            .collect();
        let wrong = 1.2 * 2.0 * 100.0 * (-0.8f64).exp() * 0.25;
        assert!(poisson_chi_square(&counts, wrong).unwrap().p_value < 1e-6);
    }

    #[test]
    fn uninformed_model_has_no_correction() {
        let m = single(1e-5);
        let grid = InventoryGrid::new(1.0, 20);
        let p = PolicySpec::Baseline.build(&m, &grid).unwrap();
        let (per, total) = estimate_f(&m, &p, 2.0, &SimConfig::for_model(&m, 20, 4)).unwrap();
        assert_eq!(total.mean, 0.0);
        assert_eq!(total.standard_error, 0.0);
        assert!(per.iter().all(|e| e.mean == 0.0));
    }

    #[test]
    fn boundary_legs_never_trade() {
        let m = single(0.0);
        let grid = InventoryGrid::new(1.0, 3);
        let p = constant(0.0).build(&m, &grid).unwrap();
        let top = &p.nodes[grid.len() - 1];
        assert!(top.legs.iter().all(|l| l.side == Side::Ask));
        assert_eq!(top.quotes[0][0][0], m.quote_domain.max);
        let cfg = SimConfig::for_model(&m, 20, 8);
        let totals = simulate_totals(&m, &p, 0.0, &cfg).unwrap();
        assert!(totals.iter().all(|t| t.max_abs_q <= 3.0));
    }

    #[test]
    fn empirical_leg_rates_match_the_intensities() {
        // every fill returns to the start node through the opposite leg, so
        // exposure at q = 0 is roughly half the horizon
        let m = presets::two_size_test_model().with_rho(1.0);
        let grid = InventoryGrid::new(1.0, 30);
        let p = PolicySpec::Quadratic.build(&m, &grid).unwrap();
        let cfg = SimConfig {
            t_max: 2.0,
            ..SimConfig::for_model(&m, 200, 21)
        };
        let recs = simulate_paths(&m, &p, 0.0, &cfg).unwrap();
        let node0 = grid.center();
        let mut exposure = 0.0;
        let mut counts = vec![0u64; p.nodes[node0].legs.len()];
        for r in &recs {
            let rows: Vec<_> = r.events.iter().filter(|e| e.kind != EventKind::Sample).collect();
            for w in rows.windows(2) {
                if w[0].q == 0.0 {
                    exposure += w[1].t - w[0].t;
                    if w[1].kind == EventKind::Fill {
                        let pos = p.nodes[node0]
                            .legs
                            .iter()
                            .position(|l| {
                                Some(l.size_idx) == w[1].size_idx && Some(l.side) == w[1].side
                            })
                            .unwrap();
                        counts[pos] += 1;
                    }
                }
            }
        }
        for (leg, &c) in p.nodes[node0].legs.iter().zip(&counts) {
            let expected = leg.rate * exposure;
            assert!((c as f64 - expected).abs() <= 3.0 * expected.sqrt() + 1.0, "{leg:?}: {c} vs {expected}");
        }
    }

    #[test]
    fn pairwise_sum_matches_naive_sum_on_integers() {
        let xs: Vec<f64> = (0..1001).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 500500.0);
    }

    #[test]
    fn brownian_pair_has_the_right_covariance() {
        let mut rng = stream(1, 0);
        let (rho, t0, t1) = (0.7, 0.3, 1.1);
        let n = 200_000;
        let (mut sbb, mut sii, mut sbi) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let (b, i) = brownian_pair(&mut rng, rho, t0, t1);
            sbb += b * b;
            sii += i * i;
            sbi += b * i;
        }
        let nf = n as f64;
        let var_i = ((-2.0 * rho * t0).exp() - (-2.0 * rho * t1).exp()) / (2.0 * rho);
        let cov = ((-rho * t0).exp() - (-rho * t1).exp()) / rho;
        assert!((sbb / nf - (t1 - t0)).abs() < 0.01);
        assert!((sii / nf - var_i).abs() < 0.01 * var_i.max(0.1));
        assert!((sbi / nf - cov).abs() < 0.01);
    }
}
