use nalgebra::SymmetricEigen;
use rayon::prelude::*;

use super::{envelopes, ExperimentSpec, ResultRow, ResultTable, RowKey};
use crate::assim::{quadratic_cost, AssimContext, HessianOperator, MemberProblem};
use crate::eda::{make_control, make_members, make_truth, EnsembleSetup, TwinConfig};
use crate::error::Result;
use crate::krylov::{lanczos_eigs, pcg, SolveTrace, SolverConfig};
use crate::linop::{assemble_dense, LinearOperator};
use crate::lmp::{SpectralLmp, ThetaRule};
use crate::nystrom::{nystrom_evd, EigenApproximation, NystromConfig};
use crate::sketch::{sketch_b, sketch_gaussian, sketch_ubt, SketchKind};
use crate::Vector;

/// Rows of one seed plus the values aggregated across seeds.
type SeedOutput<T> = (Vec<ResultRow>, T);

/// Variant position and its cost trace.
type IndexedCosts = (usize, Vec<f64>);

/// Largest dimension for which reference spectra come from a dense
/// eigendecomposition instead of Lanczos.
pub const DENSE_ORACLE_MAX_N: usize = 400;

/// Control problem of a twin configuration.
pub(crate) fn control_setup(twin: &TwinConfig) -> Result<(AssimContext, MemberProblem)> {
    let ctx = twin.context()?;
    let truth = make_truth(twin)?;
    let control = make_control(&ctx, twin, &truth)?;
    Ok((ctx, control))
}

fn ensemble_for_seed(twin: &TwinConfig, seed: u64) -> Result<EnsembleSetup> {
    make_members(&TwinConfig {
        ensemble_seed: twin.ensemble_seed.wrapping_add(seed),
        ..twin.clone()
    })
}

/// Leading eigenvalues of `I + A` (non-increasing) and, for the Lanczos
/// path, their residual bounds.
pub(crate) fn reference_spectrum(
    h: &HessianOperator<'_>,
    count: usize,
    seed: u64,
) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let n = h.dim();
    let count = count.min(n);
    if n <= DENSE_ORACLE_MAX_N {
        let dense = assemble_dense(&h.shifted())?;
        let dense = (&dense + dense.transpose()) * 0.5;
        let mut values: Vec<f64> = SymmetricEigen::new(dense)
            .eigenvalues
            .iter()
            .copied()
            .collect();
        values.sort_by(|a, b| b.total_cmp(a));
        values.truncate(count);
        return Ok((values, None));
    }
    // Beyond rank p every eigenvalue is 1, so p + 70 steps resolve the
    // whole nontrivial spectrum.
    let m = (count.max(h.context().p()) + 70).min(n);
    let lz = lanczos_eigs(&h.shifted(), m, count, seed)?;
    Ok((lz.values, Some(lz.residuals)))
}

/// Nyström approximation of the control `A` for one sketch kind, plus the
/// number of batched A-applications its construction costs.
pub(crate) fn approximate(
    kind: SketchKind,
    h: &HessianOperator<'_>,
    ensemble: Option<&EnsembleSetup>,
    seed: u64,
    width: usize,
    rank: usize,
) -> Result<(EigenApproximation, usize)> {
    let n = h.dim();
    let factor = &h.context().factor;
    let (phi, passes) = match kind {
        SketchKind::Gaussian => (sketch_gaussian(n, width, seed)?.columns, 1),
        SketchKind::PowerA => (sketch_gaussian(n, width, seed)?.columns, 2),
        SketchKind::BPsi => (
            sketch_b(factor, &sketch_gaussian(n, width, seed)?)?.columns,
            1,
        ),
        SketchKind::UbtPsi => (
            sketch_ubt(factor, &sketch_gaussian(n, width, seed)?)?.columns,
            1,
        ),
        SketchKind::RhsGamma => {
            let setup = ensemble.ok_or_else(|| {
                crate::Error::Config("Γ sketch requested without an ensemble".into())
            })?;
            let g = &setup.gamma.columns;
            if g.ncols() < width {
                return Err(crate::Error::Config(format!(
                    "Γ has {} columns, sketch width is {width}",
                    g.ncols()
                )));
            }
            (g.columns(0, width).into_owned(), 1)
        }
    };
    let approx = nystrom_evd(h, &phi, &NystromConfig::new(rank, passes))?;
    Ok((approx, passes))
}

fn solve_traced(
    ctx: &AssimContext,
    member: &MemberProblem,
    precond: Option<&SpectralLmp>,
    max_iters: usize,
) -> Result<SolveTrace> {
    let h = member.hessian(ctx);
    let cfg = SolverConfig {
        max_iters,
        ..SolverConfig::default()
    };
    let cost = |x: &Vector| quadratic_cost(ctx, member, x);
    let precond = precond.map(|p| p as &dyn LinearOperator);
    Ok(pcg(&h.shifted(), &member.rhs, precond, &cfg, Some(&cost))?.1)
}

pub fn run_eig_sensitivity(spec: &ExperimentSpec) -> Result<ResultTable> {
    let grid: Vec<(f64, u32)> = spec
        .length_scales
        .iter()
        .flat_map(|&d| spec.diffusion_steps.iter().map(move |&m| (d, m)))
        .collect();
    let seed = spec.seeds[0];
    let cells: Vec<Vec<ResultRow>> = grid
        .par_iter()
        .map(|&(d, m)| {
            let twin = TwinConfig {
                length_scale: d,
                diffusion_steps: m,
                ..spec.twin.clone()
            };
            let (ctx, control) = control_setup(&twin)?;
            let h = control.hessian(&ctx);
            let (values, residuals) = reference_spectrum(&h, spec.n_eigs, seed)?;
            let key = RowKey::new(spec.experiment, format!("D{d}_M{m}")).seed(seed);
            let mut rows = key.series("eigenvalue", &values, 1);
            if let Some(res) = residuals {
                rows.extend(key.series("residual", &res, 1));
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(ResultTable {
        rows: cells.into_iter().flatten().collect(),
    })
}

pub fn run_eig_error(spec: &ExperimentSpec) -> Result<ResultTable> {
    let (ctx, control) = control_setup(&spec.twin)?;
    let h = control.hessian(&ctx);
    let k_max = spec
        .ranks
        .iter()
        .copied()
        .max()
        .unwrap_or(spec.sketch_width);
    let (oracle, _) = reference_spectrum(&h, k_max, spec.seeds[0])?;
    let mut table = ResultTable::default();
    table
        .rows
        .extend(RowKey::new(spec.experiment, "oracle").series("eigenvalue", &oracle, 1));

    let needs_gamma = spec.sketch_kinds.contains(&SketchKind::RhsGamma);
    // errors[seed][kind][rank] = relative errors for i = 1..=k
    let per_seed: Vec<SeedOutput<Vec<Vec<Vec<f64>>>>> = spec
        .seeds
        .par_iter()
        .map(|&seed| {
            let ensemble = needs_gamma
                .then(|| ensemble_for_seed(&spec.twin, seed))
                .transpose()?;
            let mut rows = Vec::new();
            let mut errors = Vec::new();
            for &kind in &spec.sketch_kinds {
                let (approx, _) =
                    approximate(kind, &h, ensemble.as_ref(), seed, spec.sketch_width, k_max)?;
                let mut by_rank = Vec::new();
                for &k in &spec.ranks {
                    let key = RowKey::new(spec.experiment, kind.name()).seed(seed).k(k);
                    let values: Vec<f64> = approx.values.iter().take(k).map(|d| 1.0 + d).collect();
                    let err: Vec<f64> = values
                        .iter()
                        .zip(&oracle)
                        .map(|(v, o)| (o - v).abs() / o)
                        .collect();
                    rows.extend(key.series("eigenvalue", &values, 1));
                    rows.extend(key.series("rel_error", &err, 1));
                    by_rank.push(err);
                }
                errors.push(by_rank);
            }
            Ok((rows, errors))
        })
        .collect::<Result<_>>()?;

    for (kind_idx, kind) in spec.sketch_kinds.iter().enumerate() {
        for (rank_idx, &k) in spec.ranks.iter().enumerate() {
            let series: Vec<Vec<f64>> = per_seed
                .iter()
                .map(|(_, e)| e[kind_idx][rank_idx].clone())
                .collect();
            let (med, lo, hi) = envelopes(&series);
            let key = RowKey::new(spec.experiment, kind.name()).k(k);
            table.rows.extend(key.series("rel_error_median", &med, 1));
            table.rows.extend(key.series("rel_error_min", &lo, 1));
            table.rows.extend(key.series("rel_error_max", &hi, 1));
        }
    }
    for (rows, _) in per_seed {
        table.rows.extend(rows);
    }
    Ok(table)
}

/// Shared driver of the control-member LMP experiments: PCG traces for every
/// (seed, sketch kind, k, θ) plus the unpreconditioned baseline.
fn lmp_sweep(spec: &ExperimentSpec) -> Result<ResultTable> {
    let (ctx, control) = control_setup(&spec.twin)?;
    let h = control.hessian(&ctx);
    let k_max = spec
        .ranks
        .iter()
        .copied()
        .max()
        .unwrap_or(spec.sketch_width);
    let needs_gamma = spec.sketch_kinds.contains(&SketchKind::RhsGamma);
    let mut table = ResultTable::default();

    let baseline = solve_traced(&ctx, &control, None, spec.max_iters)?.costs();
    let key = RowKey::new(spec.experiment, "none");
    let iters: Vec<f64> = (0..baseline.len()).map(|i| i as f64).collect();
    table.rows.extend(key.series("cost_median", &baseline, 0));
    table.rows.extend(key.series("cost_min", &baseline, 0));
    table.rows.extend(key.series("cost_max", &baseline, 0));
    table.rows.extend(key.series("matvecs", &iters, 0));

    // One entry per (kind, k, θ) cell, in loop order.
    let cells: Vec<(SketchKind, usize, ThetaRule)> = spec
        .sketch_kinds
        .iter()
        .flat_map(|&kind| {
            spec.ranks
                .iter()
                .flat_map(move |&k| spec.theta_rules.iter().map(move |&rule| (kind, k, rule)))
        })
        .collect();
    let per_seed: Vec<SeedOutput<Vec<IndexedCosts>>> = spec
        .seeds
        .par_iter()
        .map(|&seed| {
            let ensemble = needs_gamma
                .then(|| ensemble_for_seed(&spec.twin, seed))
                .transpose()?;
            let mut rows = Vec::new();
            let mut traces = Vec::new();
            for &kind in &spec.sketch_kinds {
                let (approx, construction) =
                    approximate(kind, &h, ensemble.as_ref(), seed, spec.sketch_width, k_max)?;
                for &k in &spec.ranks {
                    let approx = approx.truncate(k)?;
                    for &rule in &spec.theta_rules {
                        let lmp = SpectralLmp::from_approximation(&approx, rule)?;
                        let costs =
                            solve_traced(&ctx, &control, Some(&lmp), spec.max_iters)?.costs();
                        let key = RowKey::new(spec.experiment, kind.name())
                            .seed(seed)
                            .k(k)
                            .theta(rule);
                        rows.extend(key.series("cost", &costs, 0));
                        rows.push(key.row(0, "theta", lmp.theta()));
                        traces.push((construction, costs));
                    }
                }
            }
            Ok((rows, traces))
        })
        .collect::<Result<_>>()?;

    for (cell, &(kind, k, rule)) in cells.iter().enumerate() {
        let series: Vec<Vec<f64>> = per_seed.iter().map(|(_, t)| t[cell].1.clone()).collect();
        let construction = per_seed[0].1[cell].0;
        let (med, lo, hi) = envelopes(&series);
        let matvecs: Vec<f64> = (0..med.len()).map(|i| (construction + i) as f64).collect();
        let key = RowKey::new(spec.experiment, kind.name()).k(k).theta(rule);
        table.rows.extend(key.series("cost_median", &med, 0));
        table.rows.extend(key.series("cost_min", &lo, 0));
        table.rows.extend(key.series("cost_max", &hi, 0));
        table.rows.extend(key.series("matvecs", &matvecs, 0));
    }
    for (rows, _) in per_seed {
        table.rows.extend(rows);
    }
    Ok(table)
}

pub fn run_control_lmp(spec: &ExperimentSpec) -> Result<ResultTable> {
    lmp_sweep(spec)
}

pub fn run_theta_sensitivity(spec: &ExperimentSpec) -> Result<ResultTable> {
    lmp_sweep(spec)
}

pub fn run_ensemble_lmp(spec: &ExperimentSpec) -> Result<ResultTable> {
    let k_max = spec
        .ranks
        .iter()
        .copied()
        .max()
        .unwrap_or(spec.sketch_width);
    let mut table = ResultTable::default();
    for &seed in &spec.seeds {
        let setup = ensemble_for_seed(&spec.twin, seed)?;
        let ctx = &setup.ctx;
        let h = setup.control.hessian(ctx);
        let (approx, _) = approximate(
            SketchKind::RhsGamma,
            &h,
            Some(&setup),
            seed,
            spec.sketch_width,
            k_max,
        )?;
        let mut lmps = Vec::new();
        for &k in &spec.ranks {
            let approx = approx.truncate(k)?;
            for &rule in &spec.theta_rules {
                lmps.push((k, rule, SpectralLmp::from_approximation(&approx, rule)?));
            }
        }
        let per_member: Vec<(Vec<ResultRow>, Vec<Vec<f64>>)> = setup
            .members
            .par_iter()
            .map(|member| {
                let plain = solve_traced(ctx, member, None, spec.max_iters)?.costs();
                let mut rows = RowKey::new(spec.experiment, "none")
                    .seed(seed)
                    .member(member.id)
                    .series("cost", &plain, 0);
                let mut ratios = Vec::new();
                for (k, rule, lmp) in &lmps {
                    let costs = solve_traced(ctx, member, Some(lmp), spec.max_iters)?.costs();
                    let ratio: Vec<f64> = plain.iter().zip(&costs).map(|(a, b)| a / b).collect();
                    let key = RowKey::new(spec.experiment, SketchKind::RhsGamma.name())
                        .seed(seed)
                        .member(member.id)
                        .k(*k)
                        .theta(*rule);
                    rows.extend(key.series("cost", &costs, 0));
                    rows.extend(key.series("ratio", &ratio, 0));
                    ratios.push(ratio);
                }
                Ok((rows, ratios))
            })
            .collect::<Result<_>>()?;

        for (cell, (k, rule, lmp)) in lmps.iter().enumerate() {
            let series: Vec<Vec<f64>> = per_member.iter().map(|(_, r)| r[cell].clone()).collect();
            let (med, lo, hi) = envelopes(&series);
            let key = RowKey::new(spec.experiment, SketchKind::RhsGamma.name())
                .seed(seed)
                .k(*k)
                .theta(*rule);
            table.rows.extend(key.series("ratio_median", &med, 0));
            table.rows.extend(key.series("ratio_min", &lo, 0));
            table.rows.extend(key.series("ratio_max", &hi, 0));
            table.rows.push(key.row(0, "theta", lmp.theta()));
        }
        for (rows, _) in per_member {
            table.rows.extend(rows);
        }
    }
    Ok(table)
}
