use iqmm_core::checks::{self, CheckOptions, Corruption, Status};
use iqmm_core::config::model_to_json;
use iqmm_core::perturbation::{corrected_adjustments, corrected_quotes, solve_f};
use iqmm_core::quadratic::QuadraticApprox;
use iqmm_core::simulator::{estimate_all, simulate_paths, PathEvent, PolicySpec, SimConfig};
use iqmm_core::solver::{solve_baseline, QuoteStatus, QuoteSurface, SolverOptions};
use iqmm_core::{DomainBound, InventoryGrid, MarketModel, Side};

use crate::output::{num, Csv, Flat, Outputs};
use crate::{Cli, CliResult, Failure, PolicyName};

const DEFAULT_PATHS: usize = 1000;
const DEFAULT_SEED: u64 = 1;
/// Inventory sweep of the figure curves (M).
const FIGURE_Q: i32 = 50;
/// Sizes drawn in the figures (0-based).
const FIGURE_SIZES: [usize; 2] = [0, 3];

fn status_str(s: QuoteStatus) -> &'static str {
    match s {
        QuoteStatus::Active => "active",
        QuoteStatus::Pinned(DomainBound::Lower) => "pinned-lower",
        QuoteStatus::Pinned(DomainBound::Upper) => "pinned-upper",
        QuoteStatus::Disabled => "disabled",
        QuoteStatus::Uncorrected => "uncorrected",
    }
}

fn quotes_csv(m: &MarketModel, surface: &QuoteSurface, nodes: &[usize]) -> String {
    let mut csv = Csv::new(&["tier", "size_idx", "q_M", "bid_bp", "ask_bp", "bid_status", "ask_status"]);
    for n in 0..m.n_tiers() {
        for k in 0..m.n_sizes() {
            for &i in nodes {
                csv.row(&[
                    (n + 1).to_string(),
                    (k + 1).to_string(),
                    num(surface.grid.node(i)),
                    num(surface.get(n, k, Side::Bid, i)),
                    num(surface.get(n, k, Side::Ask, i)),
                    status_str(surface.status(n, k, Side::Bid, i)).to_string(),
                    status_str(surface.status(n, k, Side::Ask, i)).to_string(),
                ]);
            }
        }
    }
    csv.into_string()
}

fn grid_fields(extra: &mut Flat, m: &MarketModel, grid: &InventoryGrid) {
    extra
        .num("rho", m.rho)
        .num("epsilon", m.epsilon)
        .num("q_max_M", grid.q_max())
        .set("grid_nodes", grid.len());
}

pub fn solve(cli: &Cli) -> CliResult<()> {
    let m = cli.model()?;
    let grid = cli.grid(&m)?;
    let base = solve_baseline(&m.with_epsilon(0.0), &grid, &SolverOptions::default())?;
    let f = solve_f(&m, &base.quotes)?;
    let corrected = corrected_quotes(&m, &base.theta, &f.total, &base.quotes, m.epsilon)?;

    let mut out = Outputs::create(&cli.out_dir)?;
    let mut theta = Csv::new(&["q_M", "theta_bp_M"]);
    for (i, q) in grid.nodes().enumerate() {
        theta.row(&[num(q), num(base.theta.values[i])]);
    }
    out.write("theta.csv", &theta.into_string())?;

    let tier_cols: Vec<String> = (1..=m.n_tiers()).map(|n| format!("f_tier{n}")).collect();
    let mut header = vec!["q_M", "f"];
    header.extend(tier_cols.iter().map(String::as_str));
    let mut fcsv = Csv::new(&header);
    for (i, q) in grid.nodes().enumerate() {
        let mut row = vec![num(q), num(f.total.values[i])];
        row.extend(f.per_tier.iter().map(|t| num(t.values[i])));
        fcsv.row(&row);
    }
    out.write("f.csv", &fcsv.into_string())?;

    let nodes = grid.report_nodes(&m.ladder);
    out.write("quotes_baseline.csv", &quotes_csv(&m, &base.quotes, &nodes))?;
    out.write("quotes_corrected.csv", &quotes_csv(&m, &corrected, &nodes))?;

    let mut extra = Flat::default();
    grid_fields(&mut extra, &m, &grid);
    extra
        .set("baseline_iterations", base.report.iterations)
        .num("baseline_residual", base.report.residual)
        .num("f_residual", f.residual);
    out.finish("solve", &model_to_json(&m), None, extra)
}

pub fn quadratic(cli: &Cli) -> CliResult<()> {
    let m = cli.model()?;
    let grid = cli.grid(&m)?;
    let approx = QuadraticApprox::new(&m)?;
    let (c, k) = (approx.constants, approx.coefficients);

    let mut out = Outputs::create(&cli.out_dir)?;
    let mut consts = Flat::default();
    consts
        .num("F_plus_21", c.f_plus_21)
        .num("F_minus_22", c.f_minus_22)
        .num("F_minus_11", c.f_minus_11)
        .num("Sigma_plus_10", c.sigma_plus_10)
        .num("Sigma_minus_31", c.sigma_minus_31)
        .num("S", c.source_s)
        .num("rho", k.rho)
        .num("epsilon", m.epsilon)
        .num("A0", k.a)
        .num("A0_prime", k.a_prime)
        .num("B0", k.b)
        .num("B0_prime", k.b_prime)
        .num("A_eps", k.a_eps(m.epsilon))
        .num("B_eps", k.b_eps(m.epsilon));
    out.write("quad_constants.json", &consts.to_pretty())?;

    let nodes = grid.report_nodes(&m.ladder);
    let mut quotes = Csv::new(&["tier", "size_idx", "q_M", "bid_bp", "ask_bp"]);
    let mut adj = Csv::new(&["tier", "size_idx", "q_M", "bid_adj_bp_per_eps", "ask_adj_bp_per_eps"]);
    let per_node: Vec<_> = nodes
        .iter()
        .map(|&i| {
            let q = grid.node(i);
            Ok((q, approx.quotes(&m, q)?, approx.adjustments(&m, q)?))
        })
        .collect::<iqmm_core::Result<_>>()?;
    for n in 0..m.n_tiers() {
        for s in 0..m.n_sizes() {
            for (q, qq, aa) in &per_node {
                let head = [(n + 1).to_string(), (s + 1).to_string(), num(*q)];
                quotes.row(&[&head[..], &[num(qq[n][s][0]), num(qq[n][s][1])]].concat());
                adj.row(&[&head[..], &[num(aa[n][s][0]), num(aa[n][s][1])]].concat());
            }
        }
    }
    out.write("quotes_quadratic.csv", &quotes.into_string())?;
    out.write("adjustments.csv", &adj.into_string())?;

    let mut extra = Flat::default();
    grid_fields(&mut extra, &m, &grid);
    out.finish("quadratic", &model_to_json(&m), None, extra)
}

fn paths_csv(events: &[(usize, Vec<PathEvent>)]) -> String {
    let mut csv = Csv::new(&[
        "path", "t", "event_type", "tier", "size_idx", "side", "delta_bp", "S_bp", "q_M", "X", "PnL",
    ]);
    let one_based = |x: Option<usize>| x.map_or(String::new(), |v| (v + 1).to_string());
    for (path, rows) in events {
        for e in rows {
            csv.row(&[
                path.to_string(),
                num(e.t),
                e.kind.as_str().to_string(),
                one_based(e.tier),
                one_based(e.size_idx),
                e.side.map_or(String::new(), |s| s.as_str().to_string()),
                e.delta.map_or(String::new(), num),
                num(e.s),
                num(e.q),
                num(e.x),
                num(e.pnl),
            ]);
        }
    }
    csv.into_string()
}

pub fn simulate(cli: &Cli) -> CliResult<()> {
    let m = cli.model()?;
    let grid = cli.grid(&m)?;
    if grid.index_of(cli.q0).is_none() {
        return Err(Failure::config(format!(
            "q0 = {} is not a node of the grid (step {}, bound {})",
            cli.q0,
            grid.step,
            grid.q_max()
        )));
    }
    let spec = match cli.policy {
        PolicyName::Baseline => PolicySpec::Baseline,
        PolicyName::Corrected => PolicySpec::Corrected { epsilon: m.epsilon },
        PolicyName::Quadratic => PolicySpec::Quadratic,
        PolicyName::QuadraticCorrected => PolicySpec::QuadraticCorrected { epsilon: m.epsilon },
        PolicyName::None => PolicySpec::NoTrade,
    };
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let policy = spec.build(&m, &grid)?;
    let cfg = SimConfig::for_model(&m, cli.paths.unwrap_or(DEFAULT_PATHS), seed);
    let est = estimate_all(&m, &policy, cli.q0, &cfg)?;

    let mut out = Outputs::create(&cli.out_dir)?;
    let mut obj = Flat::default();
    obj.set("policy", spec.name())
        .num("q0_M", cli.q0)
        .set("paths", est.objective.paths)
        .set("seed", seed)
        .num("t_max_days", cfg.t_max)
        .num("rho", m.rho)
        .num("epsilon", m.epsilon)
        .num("mean", est.objective.mean)
        .num("standard_error", est.objective.standard_error)
        .num("tail_bound", est.objective.tail_bound)
        .num("pnl_mean", est.pnl_objective.mean)
        .num("pnl_standard_error", est.pnl_objective.standard_error)
        .num("f_mean", est.correction_total.mean)
        .num("f_standard_error", est.correction_total.standard_error)
        .num("max_abs_q_M", est.max_abs_q);
    if spec == PolicySpec::Baseline {
        // under baseline quotes the objective is exactly θ + ε f
        let base = solve_baseline(&m.with_epsilon(0.0), &grid, &SolverOptions::default())?;
        let f = solve_f(&m, &base.quotes)?;
        let i = grid.index_of(cli.q0).expect("q0 checked above");
        let target = base.theta.values[i] + m.epsilon * f.total.values[i];
        let z = est.objective.z_score(target);
        obj.num("theta_q0", base.theta.values[i])
            .num("f_q0", f.total.values[i])
            .num("target", target)
            .num("z", z)
            .set("within_3_se", z <= checks::SE_MULTIPLE);
    }
    out.write("objective.json", &obj.to_pretty())?;

    if let Some(n) = cli.dump_paths {
        let records = simulate_paths(&m, &policy, cli.q0, &SimConfig { paths: n.max(1), ..cfg })?;
        let events: Vec<_> = records.into_iter().map(|r| (r.index, r.events)).collect();
        out.write("paths.csv", &paths_csv(&events))?;
    }

    let mut extra = Flat::default();
    grid_fields(&mut extra, &m, &grid);
    extra.set("policy", spec.name()).set("paths", cfg.paths);
    out.finish("simulate", &model_to_json(&m), Some(seed), extra)
}

fn figure_csv(cli: &Cli, m: &MarketModel) -> CliResult<String> {
    let sizes: Vec<usize> = FIGURE_SIZES.into_iter().filter(|&k| k < m.n_sizes()).collect();
    let qs: Vec<f64> = (-FIGURE_Q..=FIGURE_Q).map(f64::from).collect();
    let mut csv = Csv::new(&["tier", "size_idx", "q_M", "bid_adj_bp_per_eps", "ask_adj_bp_per_eps", "method"]);

    // closed forms are stated in the small-discount limit
    let limit = m.with_rho(0.0);
    let approx = QuadraticApprox::new(&limit)?;
    let quad = qs.iter().map(|&q| approx.adjustments(&limit, q)).collect::<iqmm_core::Result<Vec<_>>>()?;
    for n in 0..m.n_tiers() {
        for &k in &sizes {
            for (q, a) in qs.iter().zip(&quad) {
                csv.row(&[
                    (n + 1).to_string(),
                    (k + 1).to_string(),
                    num(*q),
                    num(a[n][k][0]),
                    num(a[n][k][1]),
                    "quadratic".to_string(),
                ]);
            }
        }
    }

    let grid = cli.grid(m)?;
    let base = solve_baseline(&m.with_epsilon(0.0), &grid, &SolverOptions::default())?;
    let f = solve_f(m, &base.quotes)?;
    let adj = corrected_adjustments(m, &base.theta, &f.total, &base.quotes)?;
    let usable = |s: QuoteStatus| matches!(s, QuoteStatus::Active | QuoteStatus::Pinned(_));
    for n in 0..m.n_tiers() {
        for &k in &sizes {
            for &q in &qs {
                let Some(i) = grid.index_of(q) else { continue };
                if !usable(adj.status(n, k, Side::Bid, i)) || !usable(adj.status(n, k, Side::Ask, i)) {
                    continue;
                }
                csv.row(&[
                    (n + 1).to_string(),
                    (k + 1).to_string(),
                    num(q),
                    num(adj.get(n, k, Side::Bid, i)),
                    num(adj.get(n, k, Side::Ask, i)),
                    "exact".to_string(),
                ]);
            }
        }
    }
    Ok(csv.into_string())
}

pub fn figures(cli: &Cli) -> CliResult<()> {
    let set = cli.model_set()?;
    let mut out = Outputs::create(&cli.out_dir)?;
    let mut all_json = String::new();
    for (name, m) in &set {
        out.write(&format!("fig_{name}.csv"), &figure_csv(cli, m)?)?;
        all_json.push_str(&model_to_json(m));
    }
    out.finish("figures", &all_json, None, Flat::default())
}

pub fn validate(cli: &Cli) -> CliResult<()> {
    if cli.config.is_some() {
        return Err(Failure::config("validate runs on the embedded configurations only"));
    }
    let corrupt = match cli.corrupt.as_deref() {
        None => None,
        Some(s) => Some(Corruption::parse(s).ok_or_else(|| Failure::config(format!("unknown corruption `{s}`")))?),
    };
    let defaults = CheckOptions::default();
    let opts = CheckOptions {
        fast: cli.fast,
        corrupt,
        paths: cli.paths.unwrap_or(defaults.paths),
        seed: cli.seed.unwrap_or(defaults.seed),
    };
    let outcomes = checks::run_all(&opts);
    for o in &outcomes {
        println!("{o}");
    }
    let count = |s: Status| outcomes.iter().filter(|o| o.status == s).count();
    let failed = count(Status::Fail);
    println!("{} passed, {} failed, {} skipped", count(Status::Pass), failed, count(Status::Skipped));
    if failed > 0 {
        Err(Failure::Checks(failed))
    } else {
        Ok(())
    }
}
