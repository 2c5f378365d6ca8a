use rug::Float;

use crate::error::{Error, Result};
use crate::numerics::{residual_of, ChebGrid, PrecisionContext, Residual};
use crate::opsys::{aux_recurrence, build_for_params, BuildOptions, VERIFY_GUARD};
use crate::weight::WeightParams;

/// Both integral forms of `ln(D_n(t1)/D_n(t0))` against the determinant ratio.
#[derive(Clone, Debug)]
pub struct IntRepResult {
    pub n: usize,
    pub log_ratio: Float,
    pub r_form: Float,
    pub s_form: Float,
    pub residual_r: Residual,
    pub residual_s: Residual,
    /// R-form against S-form.
    pub residual_forms: Residual,
}

impl IntRepResult {
    pub fn worst(&self) -> Residual {
        self.residual_r.worst(self.residual_s)
    }
}

fn r_integrand(n: usize, p: &WeightParams, s: &Float, rr: &Float, dr: &Float) -> Float {
    let bits = rr.prec();
    let a = Float::with_val(bits, p.alpha());
    let g = Float::with_val(bits, p.gamma());
    let nn = n as u32;
    let k1 = Float::with_val(bits, &a + &g) + 2 * nn;
    let ss = s.clone() * s;
    let r2 = rr.clone() * rr;
    let r3 = r2.clone() * rr;
    let r4 = r3.clone() * rr;
    let ag = Float::with_val(bits, &a + &g) - s;
    let num = ss.clone() * dr * dr - ss * &r4 - s.clone() * (k1 - s) * &r3 * 2u32
        + (s.clone() * (g.clone() + 2 * nn) * 2u32 - ag.clone() * &ag) * &r2
        + g.clone() * &ag * rr * 2u32
        - g.clone() * &g;
    num / (s.clone() * rr * (rr.clone() - 1u32) * 4u32)
}

fn s_integrand(n: usize, p: &WeightParams, s: &Float, sv: &Float, ds: &Float) -> Float {
    let bits = sv.prec();
    let a = Float::with_val(bits, p.alpha());
    let g = Float::with_val(bits, p.gamma());
    let nn = n as u32;
    let ss = s.clone() * s;
    let s2 = sv.clone() * sv;
    let s3 = s2.clone() * sv;
    let s4 = s3.clone() * sv;
    let aa = a.clone() * &a;
    let c3 = (a.clone() + 2 * nn) * s - &aa + a.clone() * &g;
    let c2 = ss.clone() - (a.clone() + 2 * nn - &g) * s * 2u32 + &aa - a.clone() * &g * 4u32 + g.clone() * &g;
    let num = ss * ds * ds - aa * &s4 - c3 * &s3 * 2u32 - c2 * &s2 - g.clone() * (a - &g - s) * sv * 2u32 - g.clone() * &g;
    let sm1 = sv.clone() - 1u32;
    num / (s.clone() * sv * &sm1 * &sm1 * 4u32)
}

struct NodeData {
    big_r: Vec<Float>,
    ln_d: Vec<Float>,
}

fn node_data(p: &WeightParams, s: &Float, n_hi: usize, inner: &PrecisionContext, opts: &BuildOptions) -> Result<NodeData> {
    let ps = p.with_t(s.clone());
    let ops = build_for_params(&ps, n_hi + 1, inner, opts)?;
    let aux = aux_recurrence(&ops, &ps)?;
    let bits = inner.bits();
    Ok(NodeData {
        big_r: (0..=n_hi).map(|n| Float::with_val(bits, &aux.big_r[n])).collect(),
        ln_d: (0..=n_hi).map(|n| ops.ln_det(n)).collect(),
    })
}

fn check_span(t0: &Float, t1: &Float, grid_size: usize) -> Result<()> {
    if !(*t0 > 0) || t1 < t0 {
        return Err(Error::invalid("integral check needs 0 < t0 <= t1"));
    }
    if grid_size < 32 {
        return Err(Error::invalid("integral check needs at least 32 grid points"));
    }
    Ok(())
}

fn trivial(n_list: &[usize], bits: u32) -> Vec<IntRepResult> {
    let z = Float::with_val(bits, 0);
    n_list
        .iter()
        .map(|&n| IntRepResult {
            n,
            log_ratio: z.clone(),
            r_form: z.clone(),
            s_form: z.clone(),
            residual_r: Residual::zero(),
            residual_s: Residual::zero(),
            residual_forms: Residual::zero(),
        })
        .collect()
}

fn evaluate(n_list: &[usize], p: &WeightParams, grid: &ChebGrid, nodes: &[NodeData], thr: &Float) -> Result<Vec<IntRepResult>> {
    let bits = grid.points[0].prec();
    let mut out = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let rv: Vec<Float> = nodes.iter().map(|d| d.big_r[n].clone()).collect();
        for (s, r) in grid.points.iter().zip(&rv) {
            if Float::with_val(bits, r.abs_ref()) < *thr || Float::with_val(bits, r - 1u32).abs() < *thr {
                return Err(Error::IllConditioned(format!("R_{n} reaches 0 or 1 near s = {}", s.to_f64())));
            }
        }
        let dr = grid.differentiate(&rv);
        let fr: Vec<Float> = grid.points.iter().zip(&rv).zip(&dr).map(|((s, r), d)| r_integrand(n, p, s, r, d)).collect();
        let fs: Vec<Float> = grid
            .points
            .iter()
            .zip(&rv)
            .zip(&dr)
            .map(|((s, r), d)| {
                let rm1 = r.clone() - 1u32;
                let sv = r.clone() / &rm1;
                let ds = -(d.clone() / (rm1.clone() * &rm1));
                s_integrand(n, p, s, &sv, &ds)
            })
            .collect();
        let r_form = grid.integrate(&fr);
        let s_form = grid.integrate(&fs);
        let last = nodes.last().expect("grid has points");
        let log_ratio = Float::with_val(bits, &last.ln_d[n] - &nodes[0].ln_d[n]);
        let neg = -log_ratio.clone();
        out.push(IntRepResult {
            n,
            residual_r: residual_of(&[r_form.clone(), neg.clone()]),
            residual_s: residual_of(&[s_form.clone(), neg]),
            residual_forms: residual_of(&[r_form.clone(), -s_form.clone()]),
            log_ratio,
            r_form,
            s_form,
        });
    }
    Ok(out)
}

/// `int_{t0}^{t1}` of both integrands on a Chebyshev grid of `grid_size`
/// points, for every `n` in `n_list`. `R_n` comes from the recurrence
/// coefficients at each node, `R_n'` from differentiating its interpolant.
pub fn int_rep_sweep(
    n_list: &[usize],
    t0: &Float,
    t1: &Float,
    p: &WeightParams,
    grid_size: usize,
    ctx: &PrecisionContext,
    opts: &BuildOptions,
) -> Result<Vec<IntRepResult>> {
    check_span(t0, t1, grid_size)?;
    let inner = ctx.with_extra_digits(VERIFY_GUARD);
    let bits = inner.bits();
    if t0 == t1 {
        return Ok(trivial(n_list, bits));
    }
    let n_hi = n_list.iter().copied().max().unwrap_or(0);
    let grid = ChebGrid::new(&Float::with_val(bits, t0), &Float::with_val(bits, t1), grid_size, bits)?;
    let nodes = grid
        .points
        .iter()
        .map(|s| node_data(p, s, n_hi, &inner, opts))
        .collect::<Result<Vec<_>>>()?;
    evaluate(n_list, p, &grid, &nodes, &ctx.sqrt_eps())
}

/// Like [`int_rep_sweep`], on nested grids of `2^k + 1` points starting at 33,
/// refined until both forms change by less than `target` (relative) between
/// levels or `max_points` is reached. Returns the finest level and its size.
pub fn int_rep_adaptive(
    n_list: &[usize],
    t0: &Float,
    t1: &Float,
    p: &WeightParams,
    target: f64,
    max_points: usize,
    ctx: &PrecisionContext,
    opts: &BuildOptions,
) -> Result<(Vec<IntRepResult>, usize)> {
    check_span(t0, t1, 33)?;
    let inner = ctx.with_extra_digits(VERIFY_GUARD);
    let bits = inner.bits();
    if t0 == t1 {
        return Ok((trivial(n_list, bits), 0));
    }
    let n_hi = n_list.iter().copied().max().unwrap_or(0);
    let a = Float::with_val(bits, t0);
    let b = Float::with_val(bits, t1);
    let thr = ctx.sqrt_eps();
    let mut count = 33;
    let grid = ChebGrid::new(&a, &b, count, bits)?;
    let mut nodes = grid
        .points
        .iter()
        .map(|s| node_data(p, s, n_hi, &inner, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut prev = evaluate(n_list, p, &grid, &nodes, &thr)?;
    while 2 * count - 1 <= max_points.max(33) {
        count = 2 * count - 1;
        let grid = ChebGrid::new(&a, &b, count, bits)?;
        let mut next = Vec::with_capacity(count);
        let mut old = nodes.into_iter();
        for (j, s) in grid.points.iter().enumerate() {
            if j % 2 == 0 {
                next.push(old.next().expect("coarse node"));
            } else {
                next.push(node_data(p, s, n_hi, &inner, opts)?);
            }
        }
        nodes = next;
        let cur = evaluate(n_list, p, &grid, &nodes, &thr)?;
        let settled = cur.iter().zip(&prev).all(|(c, q)| {
            residual_of(&[c.r_form.clone(), -q.r_form.clone()]).rel <= target
                && residual_of(&[c.s_form.clone(), -q.s_form.clone()]).rel <= target
        });
        prev = cur;
        if settled {
            break;
        }
    }
    Ok((prev, count))
}

/// Worst of the two integral forms against the determinant ratio.
pub fn residual_int_rep(n: usize, t0: &Float, t1: &Float, p: &WeightParams, grid_size: usize, ctx: &PrecisionContext) -> Result<Residual> {
    let r = int_rep_sweep(&[n], t0, t1, p, grid_size, ctx, &BuildOptions::default())?;
    Ok(r[0].worst())
}
