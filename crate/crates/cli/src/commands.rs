use std::path::Path;

use koopcert::certify::{
    initialization_error, kmd_error_bounds, kmd_error_bounds_full, pfmd_pointwise_bounds, pfmd_predict, ErrorSeries, GNorm,
    PfmdQuery,
};
use koopcert::dynamics::{
    generate_snapshots, BoxBounds, DynamicalSystem, Provenance, Sampling, SnapshotSet, DEFAULT_BURN_IN,
};
use koopcert::galerkin::{build_edmd, build_kedmd, solve_defect, svd_truncate, BasisDescriptor, GalerkinSystem, Space};
use koopcert::geometry::{breakpoint_threshold, pad_truncate, principal_angles, principal_observable_errors};
use koopcert::io::{load_galerkin, read_snapshots_csv, read_trajectory_csv, Normalization};
use koopcert::linalg::mean_std;
use koopcert::observables::{default_kernel_scale, eval_dictionary, sample_centers, Dictionary, KernelSpec};
use koopcert::surrogate::{expected_kmd_errors, expected_pfmd_errors, EigenLaw, GpSurrogate, LawConvention, SurrogateBasis};
use koopcert::tune::{optimize, spearman, tuned_model, AdamConfig, TestSet, TuningProblem};
use nalgebra::{DMatrix, DVector};
use serde_json::json;

use crate::config::{at_least, choice, parse_observable, positive, require, Observable, RunConfig};
use crate::error::CliError;
use crate::output::{num, Outputs, SNAPSHOT_FILE, SYSTEM_DIR};

type Res<T> = Result<T, CliError>;

fn seed(cfg: &RunConfig) -> u64 {
    cfg.seed.unwrap_or(0)
}

fn dynamical_system(cfg: &RunConfig) -> Res<DynamicalSystem> {
    let sys = match choice(&cfg.system, "system", &["duffing", "lorenz"], None)? {
        "duffing" => DynamicalSystem::duffing(),
        _ => DynamicalSystem::lorenz(),
    };
    Ok(match cfg.dt {
        Some(dt) => sys.with_flow_time(positive(dt, "dt")?),
        None => sys,
    })
}

fn read_data(cfg: &RunConfig) -> Res<SnapshotSet> {
    Ok(read_snapshots_csv(&require(&cfg.data, "data")?)?)
}

fn load_system(cfg: &RunConfig) -> Res<(GalerkinSystem, Option<SnapshotSet>)> {
    let dir = require(&cfg.galerkin, "galerkin")?;
    if !dir.is_dir() {
        return Err(CliError::data(dir.display().to_string(), "not a directory"));
    }
    let sys = load_galerkin(&dir)?;
    let snaps = dir.join(SNAPSHOT_FILE);
    let snaps = if snaps.exists() { Some(read_snapshots_csv(&snaps)?) } else { None };
    Ok((sys, snaps))
}

#[derive(Clone, Copy)]
enum Reduction {
    None,
    Svd(usize),
    Pad(usize),
}

fn reduction(cfg: &RunConfig) -> Res<Reduction> {
    let rank = || -> Res<usize> { at_least(require(&cfg.rank, "rank")?, 1, "rank") };
    Ok(match choice(&cfg.reduction, "reduction", &["none", "svd", "pad"], Some("none"))? {
        "svd" => Reduction::Svd(rank()?),
        "pad" => Reduction::Pad(rank()?),
        _ => Reduction::None,
    })
}

fn reduce(sys: &GalerkinSystem, r: Reduction) -> Res<GalerkinSystem> {
    Ok(match r {
        Reduction::None => sys.clone(),
        Reduction::Svd(r) => svd_truncate(sys, r)?,
        Reduction::Pad(r) => pad_truncate(sys, None, r)?.to_system(sys),
    })
}

fn system_summary(out: &mut Outputs, sys: &GalerkinSystem) {
    out.note("space", sys.space.name());
    out.note("dim", sys.dim());
    out.note("numerical_rank", sys.numerical_rank);
    out.note("solve_defect", solve_defect(sys));
}

pub fn simulate(cfg: &RunConfig, out: &mut Outputs) -> Res<()> {
    let system = dynamical_system(cfg)?;
    let d = system.dim();
    let lorenz = cfg.system.as_deref().is_some_and(|s| s.eq_ignore_ascii_case("lorenz"));
    let default_sampling = if lorenz { "ergodic" } else { "box" };
    let kind = choice(&cfg.sampling, "sampling", &["box", "trajectories", "ergodic"], Some(default_sampling))?;
    let (lo, hi) = (cfg.lower.unwrap_or(-2.0), cfg.upper.unwrap_or(2.0));
    if !(lo < hi) {
        return Err(CliError::config("upper", format!("must exceed lower ({lo}), got {hi}")));
    }
    let bounds = BoxBounds::cube(d, lo, hi);
    let seed = seed(cfg);
    let sampling = match kind {
        "box" => Sampling::RandomBox { bounds, count: at_least(require(&cfg.m, "M")?, 1, "M")?, seed },
        "trajectories" => {
            let length = at_least(cfg.length.unwrap_or(20), 1, "length")?;
            let trajectories = match (cfg.trajectories, cfg.m) {
                (Some(t), Some(m)) if t * length != m => {
                    return Err(CliError::config("M", format!("{t} trajectories of {length} steps give {} pairs, not {m}", t * length)))
                }
                (Some(t), _) => t,
                (None, Some(m)) if m % length != 0 => {
                    return Err(CliError::config("M", format!("{m} is not a multiple of length {length}")))
                }
                (None, Some(m)) => m / length,
                (None, None) => return Err(CliError::config("trajectories", "required (or M) for trajectory sampling")),
            };
            Sampling::RandomTrajectories { bounds, trajectories: at_least(trajectories, 1, "trajectories")?, length, seed }
        }
        _ => {
            let x0 = cfg.x0.clone().unwrap_or_else(|| if lorenz { vec![1.0; 3] } else { vec![1.0, 0.0] });
            if x0.len() != d {
                return Err(CliError::config("x0", format!("needs {d} coordinates, got {}", x0.len())));
            }
            let count = at_least(require(&cfg.m, "M")?, 1, "M")?;
            Sampling::ErgodicTrajectory { x0, count, burn_in: cfg.burn_in.unwrap_or(DEFAULT_BURN_IN) }
        }
    };
    let snaps = generate_snapshots(&system, &sampling)?;
    out.snapshots(SNAPSHOT_FILE, &snaps)?;
    out.note("rows", snaps.len());
    out.note("provenance", snaps.provenance);
    out.note("flow_time", system.flow_time);
    Ok(())
}

fn normalize_pairs(s: &SnapshotSet) -> Res<(SnapshotSet, Normalization)> {
    let (mut mean, mut std) = (Vec::new(), Vec::new());
    for (j, c) in s.x.column_iter().enumerate() {
        let (m, sd) = mean_std(&c.iter().copied().collect::<Vec<_>>());
        if !(sd > 0.0) {
            return Err(koopcert::Error::DegenerateData(format!("column x{} is constant and cannot be normalized", j + 1)).into());
        }
        mean.push(m);
        std.push(sd);
    }
    let n = Normalization { mean, std };
    let s = SnapshotSet::new(n.apply(&s.x), n.apply(&s.y), s.weights.clone(), Provenance::Ingested)?;
    Ok((s, n))
}

pub fn ingest(cfg: &RunConfig, out: &mut Outputs) -> Res<()> {
    let input = require(&cfg.input, "input")?;
    let normalize = cfg.normalize.unwrap_or(false);
    let (snaps, norm) = if cfg.trajectory.unwrap_or(false) {
        read_trajectory_csv(&input, normalize)?
    } else {
        let s = read_snapshots_csv(&input)?;
        if normalize {
            let (s, n) = normalize_pairs(&s)?;
            (s, Some(n))
        } else {
            (s, None)
        }
    };
    out.snapshots(SNAPSHOT_FILE, &snaps)?;
    out.note("rows", snaps.len());
    out.note("normalization", norm);
    Ok(())
}

fn chebyshev_domain(cfg: &RunConfig, s: &SnapshotSet) -> Res<BoxBounds> {
    let both = DMatrix::from_fn(2 * s.len(), s.dim(), |i, j| if i < s.len() { s.x[(i, j)] } else { s.y[(i - s.len(), j)] });
    let mut b = BoxBounds::of_points(&both)?;
    for j in 0..s.dim() {
        if let Some(lo) = cfg.domain_lower {
            b.lower[j] = lo;
        }
        if let Some(hi) = cfg.domain_upper {
            b.upper[j] = hi;
        }
        if !(b.lower[j] < b.upper[j]) {
            return Err(CliError::config("domain_upper", format!("coordinate {} has an empty domain", j + 1)));
        }
    }
    Ok(b)
}

pub fn edmd(cfg: &RunConfig, out: &mut Outputs) -> Res<()> {
    let kind = choice(&cfg.dictionary, "dictionary", &["chebyshev", "rbf", "matern"], Some("chebyshev"))?;
    let red = reduction(cfg)?;
    for (field, v) in [("scale", cfg.scale), ("order", cfg.order)] {
        if let Some(v) = v {
            positive(v, field)?;
        }
    }
    let s = read_data(cfg)?;
    let centers = || -> Res<DMatrix<f64>> { Ok(sample_centers(&s.x, at_least(cfg.centers.unwrap_or(100), 1, "centers")?, seed(cfg))?) };
    let scale = || -> Res<f64> { Ok(match cfg.scale { Some(v) => v, None => default_kernel_scale(&s)? }) };
    let dict = match kind {
        "chebyshev" => Dictionary::chebyshev(cfg.degree.unwrap_or(5), chebyshev_domain(cfg, &s)?),
        "rbf" => Dictionary::ExponentialRbf { centers: centers()?, scale: scale()? },
        _ => Dictionary::MaternRbf { centers: centers()?, scale: scale()?, order: cfg.order.unwrap_or(2.0) },
    };
    dict.validate()?;
    let sys = reduce(&build_edmd(&dict, &s)?, red)?;
    out.system(&sys, Some(&s))?;
    out.note("dictionary_size", dict.size());
    system_summary(out, &sys);
    Ok(())
}

pub fn kedmd(cfg: &RunConfig, out: &mut Outputs) -> Res<()> {
    let red = reduction(cfg)?;
    let nu = positive(cfg.kernel_nu.unwrap_or(2.0), "kernel_nu")?;
    if let Some(v) = cfg.kernel_sigma {
        positive(v, "kernel_sigma")?;
    }
    let s = read_data(cfg)?;
    let sigma = match cfg.kernel_sigma {
        Some(v) => v,
        None => default_kernel_scale(&s)?,
    };
    let kernel = KernelSpec::matern(sigma, nu);
    let sys = reduce(&build_kedmd(&kernel, &s)?, red)?;
    out.system(&sys, Some(&s))?;
    out.note("kernel", kernel);
    system_summary(out, &sys);
    Ok(())
}

pub fn angles(cfg: &RunConfig, out: &mut Outputs) -> Res<()> {
    let (sys, _) = load_system(cfg)?;
    let n = sys.dim();
    let res = principal_angles(&sys, &DMatrix::identity(n, n), None)?;
    let errs = principal_observable_errors(&sys, &res);
    let rows: Vec<Vec<String>> =
        (0..res.count()).map(|j| vec![(j + 1).to_string(), num(res.angles[j]), num(errs[j])]).collect();
    out.csv("angles.csv", &["index", "angle", "observable_error"], &rows)?;
    let fit = breakpoint_threshold(res.angles.as_slice(), errs.as_slice()).ok();
    let summary = json!({
        "count": res.count(),
        "cutoff": res.cutoff,
        "breakpoint": fit.as_ref().map(|f| json!({
            "breakpoint": f.breakpoint,
            "intercept": f.intercept,
            "left_slope": f.left_slope,
            "right_slope": f.right_slope,
            "sse": f.sse,
            "degenerate": f.degenerate,
        })),
    });
    out.json("angles.json", &summary)
}

pub fn pad(cfg: &RunConfig, out: &mut Outputs) -> Res<()> {
    let r = at_least(require(&cfg.rank, "rank")?, 1, "rank")?;
    let (sys, snaps) = load_system(cfg)?;
    let red = pad_truncate(&sys, None, r)?;
    let rs = red.to_system(&sys);
    out.system(&rs, snaps.as_ref())?;
    let rows: Vec<Vec<String>> = red.angles.iter().enumerate().map(|(j, a)| vec![(j + 1).to_string(), num(*a)]).collect();
    out.csv("pad_angles.csv", &["index", "angle"], &rows)?;
    system_summary(out, &rs);
    Ok(())
}

/// Coefficients of the requested observable in the system's basis.
struct Target {
    c: DVector<f64>,
    init_error: f64,
    /// Values at the kernel's data points (RKHS systems only).
    at_data: Option<DVector<f64>>,
}

fn kernel_points(sys: &GalerkinSystem) -> Res<&DMatrix<f64>> {
    match &sys.descriptor {
        BasisDescriptor::Kernel { points, .. } => Ok(points),
        _ => Err(CliError::config("galerkin", "RKHS system does not carry its data points")),
    }
}

fn target(sys: &GalerkinSystem, snaps: Option<&SnapshotSet>, obs: Observable) -> Res<Target> {
    match (sys.space, obs) {
        (Space::Rkhs, Observable::Basis(_)) => {
            Err(CliError::config("observable", "forecasts on an RKHS system need a state coordinate (coord:i)"))
        }
        (Space::Rkhs, Observable::Coord(i)) => {
            let points = kernel_points(sys)?;
            if i >= points.ncols() {
                return Err(CliError::config("observable", format!("state has {} coordinates", points.ncols())));
            }
            Ok(Target { c: DVector::zeros(sys.dim()), init_error: 0.0, at_data: Some(points.column(i).into_owned()) })
        }
        (Space::L2, Observable::Basis(j)) => {
            if j >= sys.dim() {
                return Err(CliError::config("observable", format!("system has {} basis functions", sys.dim())));
            }
            let mut c = DVector::zeros(sys.dim());
            c[j] = 1.0;
            Ok(Target { c, init_error: 0.0, at_data: None })
        }
        (Space::L2, Observable::Coord(i)) => {
            let BasisDescriptor::Dictionary { dictionary } = &sys.descriptor else {
                return Err(CliError::config("observable", "coord:i needs a system built from a dictionary; use basis:j"));
            };
            let s = snaps.ok_or_else(|| CliError::data(format!("{SYSTEM_DIR}/{SNAPSHOT_FILE}"), "missing; coord:i needs the snapshot data"))?;
            if i >= s.dim() {
                return Err(CliError::config("observable", format!("state has {} coordinates", s.dim())));
            }
            let (c, init_error) = initialization_error(dictionary, s, sys, &s.x.column(i).into_owned())?;
            Ok(Target { c, init_error, at_data: None })
        }
    }
}

fn start_state(cfg: &RunConfig) -> Res<Vec<f64>> {
    require(&cfg.x0, "x0")
}

fn series_rows(series: &ErrorSeries) -> Vec<Vec<String>> {
    series
        .steps
        .iter()
        .map(|s| {
            let agg = serde_json::to_value(s.chosen).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
            vec![s.step.to_string(), num(s.value), num(s.e1), num(s.e2), agg]
        })
        .collect()
}

pub fn bounds(cfg: &RunConfig, out: &mut Outputs) -> Res<()> {
    let obs = parse_observable(&cfg.observable)?;
    let horizon = at_least(require(&cfg.horizon, "horizon")?, 1, "horizon")?;
    let variant = choice(&cfg.variant, "variant", &["first_order", "full_order"], Some("first_order"))?;
    let (sys, snaps) = load_system(cfg)?;
    let t = target(&sys, snaps.as_ref(), obs)?;
    match sys.space {
        Space::L2 => {
            let series = if variant == "full_order" {
                kmd_error_bounds_full(&sys, &t.c, horizon)?
            } else {
                kmd_error_bounds(&sys, &t.c, horizon)?
            };
            out.csv("bounds.csv", &["step", "bound", "e1", "e2", "aggregation"], &series_rows(&series))?;
            out.note("init_error", t.init_error);
            out.note("variant", series.variant);
        }
        Space::Rkhs => {
            if variant != "first_order" {
                return Err(CliError::config("variant", "RKHS systems support first_order only"));
            }
            let x0 = start_state(cfg)?;
            let query = PfmdQuery::new(&sys, &x0, GNorm::Estimated(t.at_data.expect("rkhs target has data values")))?;
            let (norm, pointwise) = pfmd_pointwise_bounds(&sys, &query, horizon)?;
            let rows: Vec<Vec<String>> = norm
                .steps
                .iter()
                .zip(&pointwise.steps)
                .filter(|(s, _)| s.step >= 1)
                .map(|(s, p)| vec![s.step.to_string(), num(s.value), num(p.value), num(s.init), num(s.proj)])
                .collect();
            out.csv("bounds.csv", &["step", "bound", "pointwise", "init", "proj"], &rows)?;
            out.note("delta", query.delta);
            out.note("g_norm", query.g_norm);
            out.note("rigorous", pointwise.rigorous);
        }
    }
    Ok(())
}

fn surrogate(cfg: &RunConfig, sys: &GalerkinSystem) -> Res<GpSurrogate> {
    let samples = at_least(cfg.samples.unwrap_or(100), 1, "samples")?;
    let tau = positive(cfg.tau.unwrap_or(1e3), "tau")?;
    let convention = match choice(&cfg.law, "law", &["squared", "direct"], Some("squared"))? {
        "direct" => LawConvention::Direct,
        _ => LawConvention::Squared,
    };
    let rank = at_least(cfg.surrogate_rank.unwrap_or(200.min(sys.numerical_rank)), 1, "surrogate_rank")?;
    let basis = match choice(&cfg.surrogate_basis, "surrogate_basis", &["svd", "pad"], Some("svd"))? {
        "pad" => SurrogateBasis::Pad { rank },
        _ => SurrogateBasis::SvdOfG { rank },
    };
    Ok(GpSurrogate { law: EigenLaw::ExpDecay { tau, convention }, samples, seed: seed(cfg), basis })
}

pub fn expected(cfg: &RunConfig, out: &mut Outputs) -> Res<()> {
    let obs = parse_observable(&cfg.observable)?;
    let horizon = at_least(require(&cfg.horizon, "horizon")?, 1, "horizon")?;
    let (sys, snaps) = load_system(cfg)?;
    let sur = surrogate(cfg, &sys)?;
    let t = target(&sys, snaps.as_ref(), obs)?;
    let std_cell = |s: Option<f64>| s.map(num).unwrap_or_default();
    match sys.space {
        Space::L2 => {
            let exp = expected_kmd_errors(&sys, &t.c, horizon, &sur)?;
            let strict = kmd_error_bounds(&sys, &t.c, horizon)?;
            let rows: Vec<Vec<String>> = exp
                .steps
                .iter()
                .zip(&strict.steps)
                .map(|(e, s)| vec![e.step.to_string(), num(e.value), std_cell(e.std), num(s.value), num(e.e1), num(e.e2)])
                .collect();
            out.csv("expected.csv", &["step", "expected", "std", "strict", "e1", "e2"], &rows)?;
            out.note("init_error", t.init_error);
        }
        Space::Rkhs => {
            let x0 = start_state(cfg)?;
            let g = t.at_data.expect("rkhs target has data values");
            let query = PfmdQuery::new(&sys, &x0, GNorm::Estimated(g.clone()))?;
            let (norm, pointwise) = expected_pfmd_errors(&sys, &query, horizon, &sur, &g)?;
            let (strict, _) = pfmd_pointwise_bounds(&sys, &query, horizon)?;
            let rows: Vec<Vec<String>> = norm
                .steps
                .iter()
                .zip(&pointwise.steps)
                .zip(&strict.steps)
                .map(|((e, p), s)| vec![e.step.to_string(), num(e.value), std_cell(e.std), num(s.value), num(p.value)])
                .collect();
            out.csv("expected.csv", &["step", "expected", "std", "strict", "pointwise"], &rows)?;
        }
    }
    out.note("surrogate", &sur);
    out.note("law", sur.law.describe());
    Ok(())
}

pub fn predict(cfg: &RunConfig, out: &mut Outputs) -> Res<()> {
    let obs = parse_observable(&cfg.observable)?;
    let horizon = at_least(require(&cfg.horizon, "horizon")?, 1, "horizon")?;
    let x0 = start_state(cfg)?;
    let (sys, snaps) = load_system(cfg)?;
    let t = target(&sys, snaps.as_ref(), obs)?;
    match sys.space {
        Space::L2 => {
            let BasisDescriptor::Dictionary { dictionary } = &sys.descriptor else {
                return Err(CliError::config("galerkin", "forecasts need a system built from a dictionary"));
            };
            let point = DMatrix::from_row_slice(1, x0.len(), &x0);
            let row = eval_dictionary(dictionary, &point)? * sys.basis_matrix();
            let bounds = kmd_error_bounds(&sys, &t.c, horizon)?;
            let rows: Vec<Vec<String>> = sys
                .powers(&t.c, horizon)
                .iter()
                .enumerate()
                .map(|(n, p)| {
                    let bound = if n == 0 { 0.0 } else { bounds.steps[n - 1].value };
                    vec![n.to_string(), num((&row * p)[0]), num(bound)]
                })
                .collect();
            out.csv("forecast.csv", &["step", "prediction", "bound"], &rows)?;
            out.note("init_error", t.init_error);
        }
        Space::Rkhs => {
            let g = t.at_data.expect("rkhs target has data values");
            let query = PfmdQuery::new(&sys, &x0, GNorm::Estimated(g.clone()))?;
            let preds = pfmd_predict(&sys, &query, &g, horizon)?;
            let (norm, pointwise) = pfmd_pointwise_bounds(&sys, &query, horizon)?;
            let rows: Vec<Vec<String>> = (0..=horizon)
                .map(|n| vec![n.to_string(), num(preds[n]), num(pointwise.steps[n].value), num(norm.steps[n].value)])
                .collect();
            out.csv("forecast.csv", &["step", "prediction", "bound", "rkhs_bound"], &rows)?;
            out.note("rigorous", pointwise.rigorous);
        }
    }
    Ok(())
}

fn test_set(cfg: &RunConfig, s: &SnapshotSet, horizon: usize) -> Res<Option<TestSet>> {
    let count = match cfg.test_trajectories {
        None | Some(0) => return Ok(None),
        Some(n) => n,
    };
    let system = dynamical_system(cfg)?;
    if system.dim() != s.dim() {
        return Err(CliError::config("system", format!("has dimension {}, data has {}", system.dim(), s.dim())));
    }
    let length = at_least(cfg.test_length.unwrap_or(horizon), 1, "test_length")?;
    let starts = BoxBounds::of_points(&s.x)?.sample(count, seed(cfg).wrapping_add(1));
    let trajectories = (0..count)
        .map(|i| system.integrate(&starts.row(i).iter().copied().collect::<Vec<_>>(), length))
        .collect::<koopcert::Result<Vec<_>>>()?;
    Ok(Some(TestSet { trajectories }))
}

pub fn tune(cfg: &RunConfig, out: &mut Outputs) -> Res<()> {
    let rank = at_least(cfg.rank.unwrap_or(10), 1, "rank")?;
    let count = at_least(cfg.centers.unwrap_or(100), 1, "centers")?;
    let horizon = at_least(cfg.horizon.unwrap_or(21), 1, "horizon")?;
    let init = (positive(cfg.init_s.unwrap_or(0.2), "init_s")?, positive(cfg.init_nu.unwrap_or(1.0), "init_nu")?);
    let adam = AdamConfig {
        lr: positive(cfg.lr.unwrap_or(AdamConfig::default().lr), "lr")?,
        epochs: at_least(cfg.epochs.unwrap_or(AdamConfig::default().epochs), 1, "epochs")?,
        ..AdamConfig::default()
    };
    if cfg.test_trajectories.is_some_and(|n| n > 0) {
        dynamical_system(cfg)?;
    }
    let s = read_data(cfg)?;
    let test = test_set(cfg, &s, horizon)?;
    let centers = sample_centers(&s.x, count, seed(cfg))?;
    let mut problem = TuningProblem::new(s.clone(), centers, rank)?;
    problem.horizon = horizon;
    problem.test = test;
    problem.validate()?;
    let result = optimize(&problem, init, &adam)?;
    let rows: Vec<Vec<String>> = result
        .history
        .iter()
        .map(|h| {
            vec![h.epoch.to_string(), num(h.s), num(h.nu), num(h.loss), num(h.best_loss), h.test_error.map(num).unwrap_or_default()]
        })
        .collect();
    out.csv("tuning.csv", &["epoch", "s", "nu", "loss", "best_loss", "test_error"], &rows)?;
    let corr = result.test_errors().and_then(|t| spearman(&result.losses(), &t).ok());
    let model = tuned_model(&problem, result.best_s, result.best_nu)?;
    out.system(&model.system, Some(&s))?;
    out.json(
        "tuned.json",
        &json!({
            "best_s": result.best_s,
            "best_nu": result.best_nu,
            "best_loss": result.best_loss,
            "initial_loss": result.initial_loss,
            "loss_ratio": result.best_loss / result.initial_loss,
            "spearman_loss_test": corr,
            "rank_used": model.rank_used,
            "init_errors": model.init_errors,
        }),
    )
}

pub fn run(command: &str, cfg: &RunConfig, out_dir: &Path) -> Res<std::path::PathBuf> {
    let mut out = Outputs::new(out_dir)?;
    match command {
        "simulate" => simulate(cfg, &mut out)?,
        "ingest" => ingest(cfg, &mut out)?,
        "edmd" => edmd(cfg, &mut out)?,
        "kedmd" => kedmd(cfg, &mut out)?,
        "angles" => angles(cfg, &mut out)?,
        "pad" => pad(cfg, &mut out)?,
        "bounds" => bounds(cfg, &mut out)?,
        "expected" => expected(cfg, &mut out)?,
        "tune" => tune(cfg, &mut out)?,
        "predict" => predict(cfg, &mut out)?,
        other => return Err(CliError::config("subcommand", format!("unknown subcommand {other:?}"))),
    }
    out.finish(command, crate::config::echo(cfg), seed(cfg))
}
