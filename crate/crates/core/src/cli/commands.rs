use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rug::Float;
use serde::Serialize;

use super::config::{filter_family, RunConfig};
use super::output::{fmt_f64, fmt_float, fmt_opt, print_digits, write_plot, write_record, CsvOut, PlotSeries};
use crate::error::{Error, Result};
use crate::fluid::{edge_profile, integrate_p34_through, parallel_map};
use crate::numerics::{make_context, pow10, PrecisionContext};
use crate::opsys::{aux_quadrature_with, aux_recurrence, build_for_params, BuildOptions, OPSystem};
use crate::painleve::{integrate_riccati_partial, verify_point, IdentityId, ResidualReport, SweepOptions, ToleranceLadder};
use crate::weight::{MomentCache, WeightParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_PRECISION: i32 = 2;
pub const EXIT_SINGULAR: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

/// Files written by a command and its exit code.
#[derive(Clone, Debug)]
pub struct CmdOutcome {
    pub files: Vec<PathBuf>,
    pub exit_code: i32,
}

fn build_options(cfg: &RunConfig) -> BuildOptions {
    BuildOptions {
        cache: cfg.cache_path().map(MomentCache::new),
        perturb: cfg.perturb_moment,
        ..Default::default()
    }
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    Path::new(&cfg.out_dir).join(name)
}

pub fn run_command(cfg: &RunConfig) -> Result<CmdOutcome> {
    use super::config::Command::*;
    match cfg.command {
        Table => cmd_table(cfg),
        Verify => cmd_verify(cfg),
        Ode => cmd_ode(cfg),
        Edge => cmd_edge(cfg),
    }
}

#[derive(Serialize)]
struct TableSummary {
    rows: usize,
    failed_t: Vec<f64>,
}

fn table_rows(ops: &OPSystem, p: &WeightParams, t: f64, ns: &[usize], k: usize) -> Result<Vec<Vec<String>>> {
    let bits = ops.bits();
    let (big_r, small_r, big_h, sigma, route): (Vec<Float>, Vec<Float>, Vec<Float>, Vec<Float>, &str) = if t > 0.0 {
        let aux = aux_recurrence(ops, p)?;
        (aux.big_r, aux.small_r, aux.big_h, aux.sigma, aux.route.as_str())
    } else {
        // t -> 0 limits of the auxiliary quantities.
        let ag = Float::with_val(bits, p.alpha() + p.gamma());
        let r0 = Float::with_val(bits, p.gamma() / &ag);
        let m = ops.n_max + 1;
        let big_r = vec![r0.clone(); m];
        let small_r = (0..m).map(|n| -Float::with_val(bits, &r0 * n as u32)).collect();
        let big_h = vec![Float::with_val(bits, 0); m];
        let sigma = (0..m).map(|n| -Float::with_val(bits, p.gamma() * n as u32)).collect();
        (big_r, small_r, big_h, sigma, "t0-limit")
    };
    Ok(ns
        .iter()
        .map(|&n| {
            vec![
                fmt_f64(t),
                n.to_string(),
                fmt_float(ops.h(n), k),
                fmt_float(ops.p(n), k),
                fmt_float(ops.alpha(n), k),
                fmt_float(&ops.beta(n), k),
                fmt_float(&big_r[n], k),
                fmt_float(&small_r[n], k),
                fmt_float(&big_h[n], k),
                fmt_float(&sigma[n], k),
                route.to_string(),
                ops.digits.to_string(),
            ]
        })
        .collect())
}

/// Orthogonal-polynomial data and auxiliary quantities per `(t, n)`.
pub fn cmd_table(cfg: &RunConfig) -> Result<CmdOutcome> {
    let digits = cfg.resolved_digits();
    let ctx = make_context(digits)?;
    let opts = build_options(cfg);
    let ns = cfg.n_values();
    let n_hi = ns.iter().copied().max().unwrap_or(0);
    let k = print_digits(digits, cfg.full_precision);
    let ts = cfg.t_values();
    let results = parallel_map(&ts, |&t| -> Result<Vec<Vec<String>>> {
        let p = cfg.params_at(t, ctx.bits());
        let ops = build_for_params(&p, n_hi + 1, &ctx, &opts)?;
        table_rows(&ops, &p, t, &ns, k)
    });
    let header = ["t", "n", "h_n", "p_n", "alpha_n", "beta_n", "R_n", "r_n", "H_n", "sigma_n", "route", "digits"];
    let mut csv = CsvOut::new(out_path(cfg, "table.csv"), &header)?;
    let mut code = EXIT_OK;
    let mut summary = TableSummary { rows: 0, failed_t: vec![] };
    for (t, res) in ts.iter().zip(results) {
        match res {
            Ok(rows) => {
                for r in rows {
                    csv.row(&r)?;
                    summary.rows += 1;
                }
            }
            Err(e) => {
                log::warn!("table at t = {t}: {e}");
                code = code.max(if matches!(e, Error::PrecisionFailure { .. }) { EXIT_PRECISION } else { EXIT_FAIL });
                summary.failed_t.push(*t);
                for &n in &ns {
                    let mut r = vec![fmt_f64(*t), n.to_string()];
                    r.extend(std::iter::repeat(String::new()).take(8));
                    r.push(format!("error: {e}"));
                    r.push(digits.to_string());
                    csv.row(&r)?;
                }
            }
        }
    }
    let files = vec![csv.finish()?];
    finish(cfg, digits, files, code, summary)
}

fn finish<T: Serialize>(cfg: &RunConfig, digits: u32, mut files: Vec<PathBuf>, code: i32, payload: T) -> Result<CmdOutcome> {
    let rec = write_record(cfg, digits, &files, code, payload)?;
    files.push(rec);
    Ok(CmdOutcome { files, exit_code: code })
}

/// Split of the identity filter into catalogue ids and ladder families.
struct Selection {
    ids: Vec<IdentityId>,
    /// Ladder filter entries: family names or row names such as `eq1`.
    ladder: Option<BTreeSet<String>>,
}

impl Selection {
    fn keeps(&self, row: &str) -> bool {
        let (Some(want), Some(fam)) = (&self.ladder, filter_family(row)) else {
            return true;
        };
        let base = row.split('[').next().unwrap_or(row);
        want.contains(base) || want.contains(fam)
    }
}

fn selection(cfg: &RunConfig) -> Result<Selection> {
    let Some(list) = &cfg.ids else {
        return Ok(Selection { ids: IdentityId::ALL.to_vec(), ladder: None });
    };
    let mut ids = Vec::new();
    let mut fams = BTreeSet::new();
    for name in list {
        if let Ok(id) = name.parse::<IdentityId>() {
            if !ids.contains(&id) {
                ids.push(id);
            }
        } else if filter_family(name).is_some() {
            fams.insert(name.split('[').next().unwrap_or(name).to_string());
        } else {
            return Err(Error::UnknownIdentity(name.clone()));
        }
    }
    Ok(Selection { ids, ladder: Some(fams) })
}

#[derive(Serialize)]
struct VerifySummary {
    rows: usize,
    passed: usize,
    failed: usize,
    failing_ids: Vec<String>,
    precision_failures: Vec<String>,
}

/// Residual report for the selected identities over the `(n, t)` grid.
pub fn cmd_verify(cfg: &RunConfig) -> Result<CmdOutcome> {
    let digits = cfg.resolved_digits();
    let ctx = make_context(digits)?;
    let sel = selection(cfg)?;
    let mut tolerances = ToleranceLadder::default();
    for (k, v) in &cfg.tol_override {
        tolerances = tolerances.with_override(k, *v);
    }
    let run_ladder = sel.ladder.as_ref().map_or(true, |f| !f.is_empty());
    let opts = SweepOptions {
        ids: sel.ids.clone(),
        tolerances,
        build: build_options(cfg),
        zs: if run_ladder { cfg.zs.clone().unwrap_or_else(|| SweepOptions::default().zs) } else { vec![] },
        ..Default::default()
    };
    let ns = cfg.n_values();
    let ts = cfg.t_values();
    let results = parallel_map(&ts, |&t| verify_point(&cfg.params_at(t, ctx.bits()), &ns, &ctx, &opts));

    let header = ["id", "n", "t", "residual_abs", "residual_rel", "tol", "pass", "route_provenance", "digits"];
    let mut csv = CsvOut::new(out_path(cfg, "verify.csv"), &header)?;
    let mut code = EXIT_OK;
    let mut s = VerifySummary { rows: 0, passed: 0, failed: 0, failing_ids: vec![], precision_failures: vec![] };
    let mut failing = BTreeSet::new();
    for (t, res) in ts.iter().zip(results) {
        let rows: Vec<ResidualReport> = match res {
            Ok(rows) => rows,
            Err(e) => {
                code = EXIT_PRECISION;
                s.precision_failures.push(format!("t={t}: {e}"));
                csv.row(&[
                    "*".into(),
                    String::new(),
                    fmt_f64(*t),
                    String::new(),
                    String::new(),
                    String::new(),
                    "false".into(),
                    format!("error: {e}"),
                    digits.to_string(),
                ])?;
                continue;
            }
        };
        for r in rows {
            if !sel.keeps(&r.id) {
                continue;
            }
            s.rows += 1;
            if r.pass {
                s.passed += 1;
            } else {
                s.failed += 1;
                failing.insert(r.id.clone());
                if code == EXIT_OK {
                    code = EXIT_FAIL;
                }
            }
            csv.row(&[
                r.id.clone(),
                r.n.to_string(),
                fmt_f64(r.t),
                fmt_f64(r.residual_abs),
                fmt_f64(r.residual_rel),
                fmt_f64(r.tol),
                r.pass.to_string(),
                r.route_provenance.clone(),
                r.digits.to_string(),
            ])?;
        }
    }
    s.failing_ids = failing.into_iter().collect();
    let files = vec![csv.finish()?];
    finish(cfg, digits, files, code, s)
}

#[derive(Serialize)]
struct OdeSummary {
    n: usize,
    tol: f64,
    points_requested: usize,
    points_written: usize,
    max_abs_diff: [f64; 3],
    stopped: Option<String>,
}

fn dec(v: f64, bits: u32) -> Float {
    Float::with_val(bits, Float::parse(format!("{v}")).expect("finite double"))
}

fn diff(a: &Float, b: &Float) -> f64 {
    Float::with_val(a.prec(), a - b).abs().to_f64()
}

/// Riccati trajectory against the quadrature route on a linear `t` grid.
pub fn cmd_ode(cfg: &RunConfig) -> Result<CmdOutcome> {
    let digits = cfg.resolved_digits();
    let ctx = make_context(digits)?;
    let bits = ctx.bits();
    let n = cfg.n.unwrap_or(2);
    let (t0, t1) = (cfg.t0.unwrap_or(0.01), cfg.t1.unwrap_or(3.0));
    let m = cfg.points.unwrap_or(31);
    let tol = match cfg.tol {
        Some(v) => Float::with_val(bits, v),
        None => pow10(bits, -((3 * digits / 5) as i32)),
    };
    let k = print_digits(digits, cfg.full_precision);
    let header = ["t", "R_ode", "R_quad", "r_ode", "r_quad", "H_ode", "H_quad", "abs_diff_R", "abs_diff_r", "abs_diff_H", "digits"];
    let mut csv = CsvOut::new(out_path(cfg, "ode.csv"), &header)?;
    let mut s = OdeSummary { n, tol: tol.to_f64(), points_requested: m, points_written: 0, max_abs_diff: [0.0; 3], stopped: None };
    if t0 == t1 {
        let files = vec![csv.finish()?];
        return finish(cfg, digits, files, EXIT_OK, s);
    }
    let a = dec(t0, bits);
    let span = dec(t1, bits) - &a;
    let grid: Vec<Float> = (0..m).map(|i| Float::with_val(bits, &span * i as u32) / (m - 1) as u32 + &a).collect();
    let p = cfg.params_at(t0, bits);
    let (traj, stop) = integrate_riccati_partial(n, &p, &grid, &ctx, &tol, false)?;
    let opts = build_options(cfg);
    let quad = parallel_map(&traj.t_grid, |t| quad_values(n, &p.with_t(t.clone()), &ctx, &opts));
    for (i, q) in quad.into_iter().enumerate() {
        let (qr, qs, qh) = q?;
        let d = [diff(&traj.big_r[i], &qr), diff(&traj.small_r[i], &qs), diff(&traj.h_reconstructed[i], &qh)];
        for j in 0..3 {
            s.max_abs_diff[j] = s.max_abs_diff[j].max(d[j]);
        }
        csv.row(&[
            fmt_float(&traj.t_grid[i], 17),
            fmt_float(&traj.big_r[i], k),
            fmt_float(&qr, k),
            fmt_float(&traj.small_r[i], k),
            fmt_float(&qs, k),
            fmt_float(&traj.h_reconstructed[i], k),
            fmt_float(&qh, k),
            fmt_f64(d[0]),
            fmt_f64(d[1]),
            fmt_f64(d[2]),
            digits.to_string(),
        ])?;
        s.points_written += 1;
    }
    let code = match &stop {
        None => EXIT_OK,
        Some(Error::SingularityEncountered { .. }) => EXIT_SINGULAR,
        Some(Error::PrecisionFailure { .. }) => EXIT_PRECISION,
        Some(_) => EXIT_FAIL,
    };
    s.stopped = stop.map(|e| e.to_string());
    let mut files = vec![csv.finish()?];
    if cfg.emit_plots {
        let gp = out_path(cfg, "ode.gp");
        let series = [
            PlotSeries { col: 3, title: "R ode".into(), filter: None },
            PlotSeries { col: 4, title: "R quadrature".into(), filter: None },
            PlotSeries { col: 5, title: "r ode".into(), filter: None },
            PlotSeries { col: 6, title: "r quadrature".into(), filter: None },
        ];
        write_plot(&gp, &format!("Riccati trajectory, n = {n}"), "t", "ode.csv", 2, &series)?;
        files.push(gp);
    }
    finish(cfg, digits, files, code, s)
}

fn quad_values(n: usize, p: &WeightParams, ctx: &PrecisionContext, opts: &BuildOptions) -> Result<(Float, Float, Float)> {
    let ops = build_for_params(p, n + 1, ctx, opts)?;
    let aux = aux_quadrature_with(&ops, p, ctx, opts)?;
    Ok((aux.big_r[n].clone(), aux.small_r[n].clone(), aux.big_h[n].clone()))
}

#[derive(Serialize)]
struct EdgeSummary {
    points: usize,
    failed_points: usize,
    digits_per_n: Vec<(usize, u32)>,
    ode_range: (f64, f64),
    ode_stopped: Option<String>,
}

/// Edge-scaled profile over `n_list` and the `s` grid, with the Painleve XXXIV
/// trajectory seeded from the large-`s` series.
pub fn cmd_edge(cfg: &RunConfig) -> Result<CmdOutcome> {
    let digits = cfg.resolved_digits();
    let ctx = make_context(digits)?;
    let bits = ctx.bits();
    let ns = cfg.edge_n_list();
    let mut sg = cfg.edge_s_grid();
    sg.sort_by(|a, b| a.partial_cmp(b).expect("finite s"));
    sg.dedup();
    let p = cfg.params_at(1.0, bits);
    let mut prof = edge_profile(&ns, &sg, &p, &ctx, &build_options(cfg))?;

    let hi = cfg.s_max.unwrap_or(6.0).max(6.0).max(*sg.last().expect("non-empty s grid"));
    let lo = cfg.s_min.unwrap_or(-1.0).min(sg[0]);
    let mut pts = vec![hi];
    pts.extend(sg.iter().rev().copied().filter(|s| *s < hi));
    if lo < *pts.last().expect("seed point") {
        pts.push(lo);
    }
    let tol = Float::with_val(bits, cfg.tol.unwrap_or(1e-28));
    let (traj, stop) = integrate_p34_through(p.gamma(), &pts, &ctx, &tol);
    prof.attach_ode(&traj);

    let k = print_digits(digits, cfg.full_precision);
    let header = [
        "s", "n", "u_hat", "u_est", "v_est", "u_series", "v_series", "u_ode", "p34_residual", "richardson", "r_hat", "h_hat", "digits",
        "status",
    ];
    let mut csv = CsvOut::new(out_path(cfg, "edge.csv"), &header)?;
    for (j, &n) in ns.iter().enumerate() {
        for (i, &s) in sg.iter().enumerate() {
            let status = prof
                .failures
                .iter()
                .find(|f| f.n == n && f.s == s)
                .map(|f| format!("error: {}", f.detail))
                .unwrap_or_else(|| "ok".into());
            csv.row(&[
                fmt_f64(s),
                n.to_string(),
                fmt_opt(prof.u_hat[j][i].as_ref(), k),
                fmt_opt(prof.u_est[i].as_ref(), k),
                fmt_opt(prof.v_est[i].as_ref(), k),
                fmt_opt(prof.u_series[i].as_ref(), k),
                fmt_opt(prof.v_series[i].as_ref(), k),
                fmt_opt(prof.u_ode[i].as_ref(), k),
                prof.p34_residual[i].map(fmt_f64).unwrap_or_default(),
                prof.richardson[i].map(fmt_f64).unwrap_or_default(),
                fmt_opt(prof.r_hat[j][i].as_ref(), k),
                fmt_opt(prof.h_hat[j][i].as_ref(), k),
                prof.digits[j].to_string(),
                status,
            ])?;
        }
    }
    let mut files = vec![csv.finish()?];
    if cfg.emit_plots {
        let gp = out_path(cfg, "edge.gp");
        let mut series: Vec<PlotSeries> = ns
            .iter()
            .map(|n| PlotSeries { col: 4, title: format!("u_hat n={n}"), filter: Some(format!("column(3)=={n}")) })
            .collect();
        let last = *ns.last().expect("two or more n");
        for (col, title) in [(5, "u_est"), (7, "u_series"), (9, "u_ode")] {
            series.push(PlotSeries { col, title: title.into(), filter: Some(format!("column(3)=={last}")) });
        }
        write_plot(&gp, "edge-scaled R_n", "s", "edge.csv", 2, &series)?;
        files.push(gp);
    }
    let failed = prof.failures.len();
    let code = if 2 * failed > prof.point_count() { EXIT_FAIL } else { EXIT_OK };
    let summary = EdgeSummary {
        points: prof.point_count(),
        failed_points: failed,
        digits_per_n: ns.iter().copied().zip(prof.digits.iter().copied()).collect(),
        ode_range: (traj.ode.t_grid[0].to_f64(), traj.ode.last_t().to_f64()),
        ode_stopped: stop.map(|e| e.to_string()),
    };
    finish(cfg, digits, files, code, summary)
}
