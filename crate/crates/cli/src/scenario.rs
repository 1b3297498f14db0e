use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;

use pilotctl::{
    calibrate_objective, compare_policies, evaluate_policy, growth_diagnostic, optimize_onoff, optimize_onoff_with,
    optimize_vertical, optimize_vertical_onoff, prob_train, rate_bounds, simulate_trace, steady_pdf, transmit_prob,
    Boundary64, BoundaryHeader, BoundaryKind, Calibrated, DataRule, GridSpec64, ModelParams64, Objective64, Policy64,
    SimStats, VerticalOptimum,
};

use crate::config::{Scenario, ScenarioConfig};
use crate::output::{snr_tag, Output};

struct Pair {
    params: ModelParams64,
    free: Calibrated<f64>,
    vertical: VerticalOptimum<f64>,
}

impl Pair {
    fn solve(params: ModelParams64, grid: &GridSpec64) -> Result<Self> {
        let free = calibrate_objective(Objective64::water_filling, &params, grid, params.p_av, 1e-8)?;
        let vertical = optimize_vertical(&params, grid)?;
        Ok(Self { params, free, vertical })
    }

    fn free_policy(&self) -> Policy64 {
        Policy64::new(self.free.solution.boundary.clone(), DataRule::WaterFilling { lambda: self.free.lambda })
    }

    fn vertical_policy(&self) -> Policy64 {
        Policy64::new(self.vertical.boundary.clone(), DataRule::WaterFilling { lambda: self.vertical.lambda })
    }

    fn free_header(&self) -> BoundaryHeader<f64> {
        BoundaryHeader { params: self.params, lambda: Some(self.free.lambda), kind: BoundaryKind::Free }
    }
}

fn per_snr<R: Send>(cfg: &ScenarioConfig, f: impl Fn(f64, ModelParams64) -> Result<R> + Sync) -> Result<Vec<R>> {
    cfg.snr_db.par_iter().map(|&s| f(s, cfg.params_at(s))).collect()
}

#[derive(Serialize)]
struct BoundaryRow {
    u: f64,
    theta_free: f64,
    theta_vertical: f64,
}

#[derive(Serialize)]
struct SolveRow {
    snr_db: f64,
    p_av: f64,
    lambda_free: f64,
    rate_free: f64,
    train_power_free: f64,
    power_gap: f64,
    flagged_points: usize,
    theta_vertical: f64,
    lambda_vertical: f64,
    rate_vertical: f64,
    ratio: f64,
}

fn solve_row(snr: f64, p: &Pair) -> SolveRow {
    SolveRow {
        snr_db: snr,
        p_av: p.params.p_av,
        lambda_free: p.free.lambda,
        rate_free: p.free.stats.rate,
        train_power_free: p.free.stats.training_power,
        power_gap: p.free.power_gap,
        flagged_points: p.free.solution.flagged.len(),
        theta_vertical: p.vertical.theta_v,
        lambda_vertical: p.vertical.lambda,
        rate_vertical: p.vertical.rate,
        ratio: p.free.stats.rate / p.vertical.rate,
    }
}

fn boundaries(cfg: &ScenarioConfig, out: &mut Output) -> Result<()> {
    let grid = cfg.grid();
    let pairs = per_snr(cfg, |_, p| Pair::solve(p, &grid))?;
    let mut summary = Vec::new();
    for (&snr, pair) in cfg.snr_db.iter().zip(&pairs) {
        let b = &pair.free.solution.boundary;
        let rows: Vec<BoundaryRow> = b
            .grid
            .iter()
            .zip(&b.theta)
            .map(|(&u, &t)| BoundaryRow { u, theta_free: t, theta_vertical: pair.vertical.theta_v })
            .collect();
        out.table(&format!("boundary_{}.csv", snr_tag(snr)), &rows)?;
        out.boundary(&format!("free_{}.csv", snr_tag(snr)), b, &pair.free_header())?;
        summary.push(solve_row(snr, pair));
    }
    out.table("summary.csv", &summary)?;
    out.json("summary.json", &summary)
}

#[derive(Serialize)]
struct RateRow {
    snr_db: f64,
    analytic_free: f64,
    analytic_vertical: f64,
    sim_free: f64,
    sim_free_se: f64,
    sim_vertical: f64,
    sim_vertical_se: f64,
    sim_difference: f64,
    sim_difference_se: f64,
    sim_power_free: f64,
    sim_power_vertical: f64,
    gap_free: f64,
    gap_vertical: f64,
}

#[derive(Serialize)]
struct RatePoint {
    snr_db: f64,
    free: SimStats,
    vertical: SimStats,
}

fn rate_vs_snr(cfg: &ScenarioConfig, out: &mut Output) -> Result<()> {
    let grid = cfg.grid();
    let res = per_snr(cfg, |_, p| {
        let pair = Pair::solve(p, &grid)?;
        let cmp = compare_policies(&p, &[pair.vertical_policy(), pair.free_policy()], cfg.blocks, &cfg.seeds)?;
        Ok((pair, cmp))
    })?;
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for (&snr, (pair, cmp)) in cfg.snr_db.iter().zip(res) {
        let (v, f) = (&cmp.stats[0], &cmp.stats[1]);
        rows.push(RateRow {
            snr_db: snr,
            analytic_free: pair.free.stats.rate,
            analytic_vertical: pair.vertical.rate,
            sim_free: f.avg_rate.mean,
            sim_free_se: f.avg_rate.std_error,
            sim_vertical: v.avg_rate.mean,
            sim_vertical_se: v.avg_rate.std_error,
            sim_difference: cmp.rate_difference[0].mean,
            sim_difference_se: cmp.rate_difference[0].std_error,
            sim_power_free: f.avg_total_power(),
            sim_power_vertical: v.avg_total_power(),
            gap_free: f.avg_rate.mean / pair.free.stats.rate - 1.0,
            gap_vertical: v.avg_rate.mean / pair.vertical.rate - 1.0,
        });
        let mut it = cmp.stats.into_iter();
        let vertical = it.next().expect("two policies");
        let free = it.next().expect("two policies");
        points.push(RatePoint { snr_db: snr, free, vertical });
    }
    out.table("rate_vs_snr.csv", &rows)?;
    out.json("rate_vs_snr.json", &points)
}

#[derive(Serialize)]
struct EpsRow {
    snr_db: f64,
    m: usize,
    analytic_eps: f64,
    sim_eps: f64,
    sim_eps_se: f64,
    relative_gap: f64,
}

fn eps_vs_m(cfg: &ScenarioConfig, out: &mut Output) -> Result<()> {
    let grid = cfg.grid();
    let res = per_snr(cfg, |snr, p| {
        let cal = calibrate_objective(Objective64::water_filling, &p, &grid, p.p_av, 1e-8)?;
        let policy = Policy64::new(cal.solution.boundary.clone(), DataRule::WaterFilling { lambda: cal.lambda });
        let eps = cal.stats.training_power;
        cfg.m_list
            .iter()
            .map(|&m| {
                let pm = ModelParams64 { m_block: m, ..p };
                let st = evaluate_policy(&pm, &policy, cfg.blocks, &cfg.seeds)?;
                Ok(EpsRow {
                    snr_db: snr,
                    m,
                    analytic_eps: eps,
                    sim_eps: st.avg_train_power.mean,
                    sim_eps_se: st.avg_train_power.std_error,
                    relative_gap: st.avg_train_power.mean / eps - 1.0,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let rows: Vec<EpsRow> = res.into_iter().flatten().collect();
    out.table("eps_vs_m.csv", &rows)
}

#[derive(Serialize)]
struct PdfRow {
    u: f64,
    free_analytic: f64,
    free_empirical: f64,
    free_p_train: f64,
    free_train_fraction: f64,
    free_train_fraction_se: f64,
    vertical_analytic: f64,
    vertical_empirical: f64,
    vertical_p_train: f64,
    vertical_train_fraction: f64,
    vertical_train_fraction_se: f64,
}

fn pdf(cfg: &ScenarioConfig, out: &mut Output) -> Result<()> {
    let grid = cfg.grid();
    let res = per_snr(cfg, |_, p| {
        let pair = Pair::solve(p, &grid)?;
        let f = evaluate_policy(&p, &pair.free_policy(), cfg.blocks, &cfg.seeds)?;
        let v = evaluate_policy(&p, &pair.vertical_policy(), cfg.blocks, &cfg.seeds)?;
        Ok((pair, f, v))
    })?;
    for (&snr, (pair, f, v)) in cfg.snr_db.iter().zip(res) {
        let fb = &pair.free.solution.boundary;
        let vb = &pair.vertical.boundary;
        let (fp, vp) = (steady_pdf(fb)?, steady_pdf(vb)?);
        let w = f.bin_width;
        let rows: Vec<PdfRow> = (0..f.empirical_pdf.len())
            .map(|i| {
                let (a, b) = (i as f64 * w, (i + 1) as f64 * w);
                let c = 0.5 * (a + b);
                let pt = |bd: &Boundary64| prob_train(bd, c, &pair.params).unwrap_or(f64::NAN);
                PdfRow {
                    u: c,
                    free_analytic: (fp.cdf(b) - fp.cdf(a)) / w,
                    free_empirical: f.empirical_pdf[i],
                    free_p_train: pt(fb),
                    free_train_fraction: f.bin_train_fraction[i].mean,
                    free_train_fraction_se: f.bin_train_fraction[i].std_error,
                    vertical_analytic: (vp.cdf(b) - vp.cdf(a)) / w,
                    vertical_empirical: v.empirical_pdf[i],
                    vertical_p_train: pt(vb),
                    vertical_train_fraction: v.bin_train_fraction[i].mean,
                    vertical_train_fraction_se: v.bin_train_fraction[i].std_error,
                }
            })
            .collect();
        out.table(&format!("pdf_{}.csv", snr_tag(snr)), &rows)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct OnOffRow {
    snr_db: f64,
    rate_waterfilling: f64,
    rate_onoff: f64,
    ratio: f64,
    mu0: f64,
    p0: f64,
    transmit_prob: f64,
    rate_vertical_onoff: f64,
    lower_bound: f64,
    upper_bound: f64,
    rounds: usize,
}

fn onoff(cfg: &ScenarioConfig, out: &mut Output) -> Result<()> {
    let grid = cfg.grid();
    let res = per_snr(cfg, |snr, p| {
        let wf = calibrate_objective(Objective64::water_filling, &p, &grid, p.p_av, 1e-8)?;
        let on = optimize_onoff(&p, &grid)?;
        let (lo, hi) = rate_bounds(&on.boundary, on.rule.mu0, &p)?;
        let row = OnOffRow {
            snr_db: snr,
            rate_waterfilling: wf.stats.rate,
            rate_onoff: on.rate,
            ratio: on.rate / wf.stats.rate,
            mu0: on.rule.mu0,
            p0: on.rule.p0,
            transmit_prob: transmit_prob(&on.boundary, on.rule.mu0)?,
            rate_vertical_onoff: on.vertical_rate,
            lower_bound: lo,
            upper_bound: hi,
            rounds: on.rounds,
        };
        Ok((p, row, on))
    })?;
    let mut rows = Vec::new();
    for (p, row, on) in res {
        let header = BoundaryHeader { params: p, lambda: on.lambda, kind: on.boundary.kind };
        out.boundary(&format!("onoff_{}.csv", snr_tag(row.snr_db)), &on.boundary, &header)?;
        rows.push(row);
    }
    out.table("onoff.csv", &rows)?;
    out.json("onoff.json", &rows)
}

#[derive(Serialize)]
struct OverheadRow {
    snr_db: f64,
    m: usize,
    rate_free: f64,
    rate_free_overhead: f64,
    reduction_free: f64,
    rate_vertical: f64,
    rate_vertical_overhead: f64,
    reduction_vertical: f64,
}

fn overhead(cfg: &ScenarioConfig, out: &mut Output) -> Result<()> {
    let grid = cfg.grid();
    let rows = per_snr(cfg, |snr, p| {
        let m = p.m_block;
        let free = optimize_onoff(&p, &grid)?.rate;
        let free_o = optimize_onoff_with(&p, &grid, Some(m))?.rate;
        let vert = optimize_vertical_onoff(&p, &grid, None)?.2;
        let vert_o = optimize_vertical_onoff(&p, &grid, Some(m))?.2;
        Ok(OverheadRow {
            snr_db: snr,
            m,
            rate_free: free,
            rate_free_overhead: free_o,
            reduction_free: 1.0 - free_o / free,
            rate_vertical: vert,
            rate_vertical_overhead: vert_o,
            reduction_vertical: 1.0 - vert_o / vert,
        })
    })?;
    out.table("overhead.csv", &rows)?;
    out.json("overhead.json", &rows)
}

#[derive(Serialize)]
struct TraceRow {
    block: u64,
    mu_hat: f64,
    theta: f64,
    trained: u8,
    data_power: f64,
    rate: f64,
}

fn trace(cfg: &ScenarioConfig, out: &mut Output) -> Result<()> {
    let grid = cfg.grid();
    let seed = cfg.seeds[0];
    let res = per_snr(cfg, |_, p| {
        let cal = calibrate_objective(Objective64::water_filling, &p, &grid, p.p_av, 1e-8)?;
        let policy = Policy64::new(cal.solution.boundary.clone(), DataRule::WaterFilling { lambda: cal.lambda });
        let tr = simulate_trace(&p, &policy, cfg.blocks, seed)?;
        Ok((p, cal, tr))
    })?;
    for (&snr, (p, cal, tr)) in cfg.snr_db.iter().zip(res) {
        let rows: Vec<TraceRow> = tr
            .iter()
            .map(|r| TraceRow {
                block: r.block,
                mu_hat: r.mu_hat,
                theta: r.theta,
                trained: r.trained as u8,
                data_power: r.data_power,
                rate: r.rate,
            })
            .collect();
        out.table(&format!("trace_{}.csv", snr_tag(snr)), &rows)?;
        let header = BoundaryHeader { params: p, lambda: Some(cal.lambda), kind: BoundaryKind::Free };
        out.boundary(&format!("free_{}.csv", snr_tag(snr)), &cal.solution.boundary, &header)?;
    }
    Ok(())
}

fn growth(cfg: &ScenarioConfig, out: &mut Output) -> Result<()> {
    let rows = growth_diagnostic(&cfg.params, &cfg.n_list)?;
    out.table("growth.csv", &rows)?;
    out.json("growth.json", &rows)
}

pub fn run(cfg: &ScenarioConfig, out: &mut Output) -> Result<()> {
    match cfg.scenario {
        Scenario::Boundaries => boundaries(cfg, out),
        Scenario::RateVsSnr => rate_vs_snr(cfg, out),
        Scenario::EpsVsM => eps_vs_m(cfg, out),
        Scenario::Pdf => pdf(cfg, out),
        Scenario::OnOff => onoff(cfg, out),
        Scenario::Overhead => overhead(cfg, out),
        Scenario::Trace => trace(cfg, out),
        Scenario::Growth => growth(cfg, out),
    }
}
