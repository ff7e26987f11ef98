//! The six experiments. Each declares its parameters with defaults and turns
//! a resolved configuration into [`Artifacts`].

use std::collections::BTreeSet;

use log::{info, warn};
use paircon::basis::Basis;
use paircon::cqed::{self, CqedParams};
use paircon::darkstate::{correlator, dark_residual, dark_state, CorrelatorOrder, DarkStateSpec};
use paircon::fock::{pair_jump, FockSpace, HamiltonianKind, StateVector};
use paircon::glauber::{self, InitState, KmcSetup, RateMode, RateTable};
use paircon::lindblad::{evolve_with, ChainModel, DensityMatrix, LindbladModel, ModelBuilder};
use paircon::mps::{MpsEngine, MpsOptions, MpsState};
use paircon::stats::{linear_fit, log_grid};
use paircon::trajectory::{
    equilibrium_time, max_local_rate, max_model_rate, run_ensemble, DenseEngine, DensePropagator, EnsembleResult, Observable,
    TrajectoryConfig,
};
use paircon::{Error, C64};

use crate::config::{Experiment, ExperimentConfig, ParamSpec, Params, Value};
use crate::output::{jnum, num, Artifacts, Table};
use crate::CliError;

/// Core errors raised while setting a run up are configuration problems.
fn setup(e: Error) -> CliError {
    CliError::Validation(e.to_string())
}

fn fail(e: Error) -> CliError {
    CliError::Runtime(e.to_string())
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn int(v: i64) -> Value {
    Value::Int(v)
}

fn float(v: f64) -> Value {
    Value::Float(v)
}

fn text(v: &str) -> Value {
    Value::Str(v.into())
}

fn flag(v: bool) -> Value {
    Value::Bool(v)
}

pub fn specs(e: Experiment) -> Vec<ParamSpec> {
    match e {
        Experiment::DarkstateVerify => vec![
            ParamSpec::new("sites", text("2,3,4"), "chain lengths to check"),
            ParamSpec::new("pairs", text("1,2"), "pair numbers to check"),
            ParamSpec::new("n_max", int(-1), "Fock cutoff; -1 uses 2 * pairs"),
            ParamSpec::new("defects", text(""), "defect sites added to every state"),
        ],
        Experiment::LindbladRun => {
            let mut v = chain_specs(4, 4, "2,0");
            v.extend([
                ParamSpec::new("ref_site", int(0), "reference site i of the correlators <A_i A_j>; -1 uses L/4"),
                ParamSpec::new("t_final", float(20.0), "final time"),
                ParamSpec::new("n_samples", int(41), "number of equally spaced output times"),
                ParamSpec::new("rtol", float(1e-8), "integrator tolerance"),
                ParamSpec::new("sector", flag(true), "restrict to the photon-number sector of the initial state"),
            ]);
            v
        }
        Experiment::TrajectoryRun => {
            let mut v = chain_specs(4, 4, "2,0");
            v.extend([
                ParamSpec::new("ref_site", int(0), "reference site of the correlators; -1 uses L/4"),
                ParamSpec::new("t_final", float(20.0), "final time"),
                ParamSpec::new("sample_interval", float(0.5), "time between recorded samples"),
                ParamSpec::new("dt", float(0.0), "time step; 0 picks the largest allowed step"),
                ParamSpec::new("n_traj", int(200), "trajectories in the ensemble"),
                ParamSpec::new("propagator", text("exact"), "exact or trotter2"),
                ParamSpec::new("compare_exact", flag(false), "also integrate the master equation and compare"),
                ParamSpec::new("rtol", float(1e-8), "integrator tolerance for the comparison"),
            ]);
            v
        }
        Experiment::TebdRun => {
            let mut v = chain_specs(12, 2, "2,0");
            v.extend([
                ParamSpec::new("ref_site", int(-1), "reference site of the correlators; -1 uses L/4"),
                ParamSpec::new("t_final", float(10.0), "final time"),
                ParamSpec::new("sample_interval", float(0.25), "time between recorded samples"),
                ParamSpec::new("dt", float(0.0), "time step; 0 picks the largest allowed step"),
                ParamSpec::new("n_traj", int(100), "trajectories per ensemble"),
                ParamSpec::new("chi_max", int(64), "maximum bond dimension"),
                ParamSpec::new("svd_cutoff", float(1e-10), "discarded singular-value weight per bond"),
                ParamSpec::new("level", float(0.8), "fraction of saturation defining the equilibrium time"),
                ParamSpec::new("scenario", text("single"), "single or healing-comparison"),
                ParamSpec::new("steady_from", float(-1.0), "start of the steady window; -1 uses t_final / 2"),
                ParamSpec::new("compare_kmc", flag(false), "compare the defect density with classical KMC"),
                ParamSpec::new("kmc_histories", int(4000), "KMC histories for the comparison"),
            ]);
            v
        }
        Experiment::GlauberRun => vec![
            ParamSpec::new("sites", int(100), "number of defect sites (bonds)"),
            ParamSpec::new("periodic", flag(true), "ring instead of open chain"),
            ParamSpec::new("mode", text("exact"), "exact or glauber rates"),
            ParamSpec::new("gamma", float(1.0), "healing rate"),
            ParamSpec::new("h", float(0.0), "defect production ratio"),
            ParamSpec::new("init", text("random"), "random or all-up"),
            ParamSpec::new("n_hist", int(1000), "histories in the ensemble"),
            ParamSpec::new("t_min", float(0.1), "first recording time"),
            ParamSpec::new("t_final", float(1000.0), "last recording time"),
            ParamSpec::new("n_times", int(61), "log-spaced recording times"),
            ParamSpec::new("fit_t0", float(10.0), "start of the power-law fit window"),
            ParamSpec::new("fit_t1", float(1000.0), "end of the power-law fit window"),
            ParamSpec::new("oracle", flag(false), "compare with the exact correlation hierarchy (glauber mode, ring)"),
        ],
        Experiment::CqedValidate => vec![
            ParamSpec::new("n_max", int(2), "cavity cutoff"),
            ParamSpec::new("g1", float(1.0), "|e><g| coupling"),
            ParamSpec::new("g2", float(1.0), "|f><e| coupling"),
            ParamSpec::new("g3", float(1.0), "TLS coupling (rescaled when kerr_cancel is set)"),
            ParamSpec::new("g2_phase", float(0.0), "phase of g2 in radians"),
            ParamSpec::new("delta1", float(20.0), "oscillator detuning"),
            ParamSpec::new("delta2", float(20.0), "TLS detuning"),
            ParamSpec::new("chi", float(0.1), "cavity Kerr coefficient (ignored when kerr_cancel is set)"),
            ParamSpec::new("chi_a_an", float(0.0), "cavity-oscillator cross Kerr"),
            ParamSpec::new("chi_a_t", float(0.0), "cavity-TLS cross Kerr"),
            ParamSpec::new("kappa_f", float(2.0), "decay rate of |f> to |g>"),
            ParamSpec::new("kappa_t", float(0.0), "TLS decay rate"),
            ParamSpec::new("include_tls", flag(true), "include the auxiliary two-level system"),
            ParamSpec::new("kerr_cancel", flag(true), "impose the Kerr cancellation relation"),
            ParamSpec::new("sweep", flag(false), "run the kappa_f and delta convergence sweeps"),
        ],
    }
}

fn chain_specs(sites: i64, n_max: i64, init: &str) -> Vec<ParamSpec> {
    vec![
        ParamSpec::new("sites", int(sites), "chain length"),
        ParamSpec::new("n_max", int(n_max), "Fock cutoff per site"),
        ParamSpec::new("init", text(init), "initial occupations, repeated along the chain"),
        ParamSpec::new("kappa", float(1.0), "pair jump rate"),
        ParamSpec::new("heal", text("none"), "healing channels: none, bonds, sites or hardcore"),
        ParamSpec::new("gamma", float(0.0), "healing rate"),
        ParamSpec::new("noise", float(0.0), "incoherent hopping rate (each direction)"),
        ParamSpec::new("kerr", float(0.0), "on-site Kerr U a+2 a2"),
        ParamSpec::new("penalty", float(0.0), "on-site penalty -V0 n (n - 2)"),
    ]
}

pub fn run(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let p = cfg.params();
    match cfg.experiment {
        Experiment::DarkstateVerify => darkstate_verify(p),
        Experiment::LindbladRun => lindblad_run(p),
        Experiment::TrajectoryRun => trajectory_run(p, cfg.seed),
        Experiment::TebdRun => tebd_run(p, cfg.seed),
        Experiment::GlauberRun => glauber_run(p, cfg.seed),
        Experiment::CqedValidate => cqed_validate(p),
    }
}

fn parse_list(key: &str, s: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| invalid(format!("`{key}`: `{t}` is not a non-negative integer"))))
        .collect()
}

// ---------------------------------------------------------------- dark states

fn darkstate_verify(p: Params) -> Result<Artifacts, CliError> {
    let sites = parse_list("sites", p.text("sites"))?;
    let pairs = parse_list("pairs", p.text("pairs"))?;
    let defects = parse_list("defects", p.text("defects"))?;
    let n_max = p.int("n_max");
    let mut specs = vec![];
    for &l in &sites {
        for &n in &pairs {
            let cut = if n_max < 0 { 2 * n + usize::from(!defects.is_empty()) } else { n_max as usize };
            let spec = DarkStateSpec::new(l, n, cut).with_defects(defects.clone());
            spec.validate().map_err(setup)?;
            specs.push(spec);
        }
    }
    let mut table = Table::new(
        "darkstates",
        &["sites", "n_pairs", "n_max", "dimension", "dark_residual", "max_single_correlator", "pair_correlator_spread"],
    );
    let (mut worst_res, mut worst_single, mut worst_spread) = (0.0f64, 0.0f64, 0.0f64);
    for spec in &specs {
        let space = spec.space().map_err(fail)?;
        let psi = dark_state(spec).map_err(fail)?;
        let res = dark_residual(&psi, &space).map_err(fail)?;
        let (mut single, mut pair) = (0.0f64, vec![]);
        for i in 0..spec.sites {
            for j in 0..spec.sites {
                if i != j {
                    single = single.max(correlator(&psi, &space, i, j, CorrelatorOrder::Single).map_err(fail)?.norm());
                    pair.push(correlator(&psi, &space, i, j, CorrelatorOrder::Pair).map_err(fail)?);
                }
            }
        }
        let spread = pair.iter().map(|c| (c - pair[0]).norm()).fold(0.0, f64::max);
        worst_res = worst_res.max(res);
        worst_single = worst_single.max(single);
        worst_spread = worst_spread.max(spread);
        table.push(vec![
            spec.sites.to_string(),
            spec.n_pairs.to_string(),
            spec.n_max.to_string(),
            space.dim().to_string(),
            num(res),
            num(single),
            num(spread),
        ]);
    }
    let mut art = Artifacts::default();
    art.set("states_checked", specs.len());
    art.set("max_dark_residual", jnum(worst_res));
    art.set("max_single_correlator", jnum(worst_single));
    art.set("max_pair_correlator_spread", jnum(worst_spread));
    art.tables.push(table);
    Ok(art)
}

// ---------------------------------------------------------------- chain models

struct Chain {
    space: FockSpace,
    init: Vec<usize>,
    model: ChainModel,
    /// Only pair jumps act, so the even-sector dark state is the steady state.
    pair_only: bool,
}

fn build_chain(p: Params) -> Result<Chain, CliError> {
    let sites = p.count("sites")?;
    let space = FockSpace::new(sites, p.count("n_max")?).map_err(setup)?;
    let pattern = parse_list("init", p.text("init"))?;
    if pattern.is_empty() {
        return Err(invalid("`init` is empty"));
    }
    let init: Vec<usize> = (0..sites).map(|k| pattern[k % pattern.len()]).collect();
    if let Some(&n) = init.iter().find(|&&n| n > space.n_max()) {
        return Err(invalid(format!("initial occupation {n} exceeds n_max = {}", space.n_max())));
    }
    let (kappa, gamma, noise) = (p.float("kappa"), p.float("gamma"), p.float("noise"));
    for (k, v) in [("kappa", kappa), ("gamma", gamma), ("noise", noise)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(invalid(format!("`{k}` must be a non-negative rate, got {v}")));
        }
    }
    let mut b = ModelBuilder::new(&space).pair_jumps(kappa).map_err(setup)?;
    let heal = p.text("heal");
    b = match heal {
        "none" => b,
        "bonds" => b.heal_bonds(gamma).map_err(setup)?,
        "sites" => b.heal_sites(gamma).map_err(setup)?,
        "hardcore" => b.heal_hardcore(gamma).map_err(setup)?,
        other => return Err(invalid(format!("`heal` must be none, bonds, sites or hardcore, got `{other}`"))),
    };
    if noise > 0.0 {
        b = b.hop_noise(noise).map_err(setup)?;
    }
    let (kerr, penalty) = (p.float("kerr"), p.float("penalty"));
    if kerr != 0.0 {
        b = b.hamiltonian(HamiltonianKind::Kerr(kerr)).map_err(setup)?;
    }
    if penalty != 0.0 {
        b = b.hamiltonian(HamiltonianKind::Penalty(penalty)).map_err(setup)?;
    }
    let pair_only = (heal == "none" || gamma == 0.0) && noise == 0.0 && kerr == 0.0 && penalty == 0.0;
    Ok(Chain { space, init, model: b.build_chain(), pair_only })
}

fn ref_site(p: Params, sites: usize) -> Result<usize, CliError> {
    let r = p.int("ref_site");
    let r = if r < 0 { sites / 4 } else { r as usize };
    if r + 1 >= sites {
        return Err(invalid(format!("`ref_site` {r} leaves no partner site on a chain of {sites}")));
    }
    Ok(r)
}

/// Site occupations, then pair and single correlators from the reference
/// site, defect density and total number.
fn dense_observables(sites: usize, r: usize) -> Vec<Observable> {
    let mut obs: Vec<Observable> = (0..sites).map(Observable::Number).collect();
    for order in [CorrelatorOrder::Pair, CorrelatorOrder::Single] {
        obs.extend((r + 1..sites).map(|j| Observable::Correlator { i: r, j, order }));
    }
    obs.push(Observable::DefectDensity);
    obs.push(Observable::TotalNumber);
    obs
}

fn tebd_observables(sites: usize, r: usize) -> Vec<Observable> {
    let mut obs: Vec<Observable> =
        (r + 1..sites).map(|j| Observable::Correlator { i: r, j, order: CorrelatorOrder::Pair }).collect();
    obs.push(Observable::DefectDensity);
    obs.push(Observable::TotalNumber);
    obs
}

fn pair_label(i: usize, j: usize) -> String {
    Observable::Correlator { i, j, order: CorrelatorOrder::Pair }.label()
}

fn single_labels(obs: &[Observable]) -> BTreeSet<String> {
    obs.iter()
        .filter(|o| matches!(o, Observable::Correlator { order: CorrelatorOrder::Single, .. }))
        .map(Observable::label)
        .collect()
}

/// Dense model, restricted to the number sector of `init` when asked.
fn dense_model(chain: &Chain, sector: bool) -> Result<(LindbladModel, StateVector), CliError> {
    let model = chain.model.lindblad().map_err(setup)?;
    let psi = StateVector::product(&chain.init, &chain.space).map_err(setup)?;
    if !sector {
        return Ok((model, psi));
    }
    let n: usize = chain.init.iter().sum();
    let basis = Basis::number_sector(&chain.space, n).map_err(setup)?;
    Ok((model.restrict(&basis).map_err(setup)?, psi.restrict(&basis).map_err(setup)?))
}

/// Even-sector dark state in `basis`, when the model is pure pair jumps.
fn target_dark_state(chain: &Chain, basis: &Basis) -> Option<StateVector> {
    let n: usize = chain.init.iter().sum();
    if !chain.pair_only || chain.init.iter().any(|&k| k % 2 == 1) {
        return None;
    }
    let spec = DarkStateSpec::new(chain.space.sites(), n / 2, chain.space.n_max());
    spec.validate().ok()?;
    dark_state(&spec).ok()?.restrict(basis).ok()
}

struct ExactSeries {
    times: Vec<f64>,
    labels: Vec<String>,
    /// `values[obs][sample]`.
    values: Vec<Vec<f64>>,
    fidelity: Vec<f64>,
    trace_error: f64,
    min_eigenvalue: f64,
    number_drift: f64,
    parity_drift: f64,
}

fn exact_series(
    chain: &Chain,
    model: &LindbladModel,
    psi: &StateVector,
    obs: &[Observable],
    times: &[f64],
    rtol: f64,
) -> Result<ExactSeries, CliError> {
    let ops = obs.iter().map(|o| o.operator(&chain.space)).collect::<paircon::Result<Vec<_>>>().map_err(setup)?;
    let parities = (0..chain.space.sites())
        .map(|j| Observable::Parity(j).operator(&chain.space))
        .collect::<paircon::Result<Vec<_>>>()
        .map_err(setup)?;
    let number = Observable::TotalNumber.operator(&chain.space).map_err(setup)?;
    let dark = target_dark_state(chain, model.basis());
    let rho0 = DensityMatrix::pure(psi);
    let n0 = rho0.expect(&number).map_err(fail)?.re;
    let p0 = rho0.observables(&parities).map_err(fail)?;
    let mut out = ExactSeries {
        times: times.to_vec(),
        labels: obs.iter().map(Observable::label).collect(),
        values: vec![Vec::with_capacity(times.len()); obs.len()],
        fidelity: vec![],
        trace_error: 0.0,
        min_eigenvalue: f64::INFINITY,
        number_drift: 0.0,
        parity_drift: 0.0,
    };
    evolve_with(model, &rho0, times, rtol, |_, rho| {
        for (series, v) in out.values.iter_mut().zip(rho.observables(&ops)?) {
            series.push(v.re);
        }
        if let Some(d) = &dark {
            out.fidelity.push(rho.fidelity_pure(d)?);
        }
        out.trace_error = out.trace_error.max((rho.trace() - 1.0).norm());
        out.min_eigenvalue = out.min_eigenvalue.min(rho.min_eigenvalue());
        out.number_drift = out.number_drift.max((rho.expect(&number)?.re - n0).abs());
        for (v, v0) in rho.observables(&parities)?.iter().zip(&p0) {
            out.parity_drift = out.parity_drift.max((v - v0).norm());
        }
        Ok(())
    })
    .map_err(fail)?;
    Ok(out)
}

fn lindblad_run(p: Params) -> Result<Artifacts, CliError> {
    let chain = build_chain(p)?;
    let r = ref_site(p, chain.space.sites())?;
    let (t_final, n) = (p.float("t_final"), p.count("n_samples")?);
    if !(t_final > 0.0) || n < 2 {
        return Err(invalid("need t_final > 0 and n_samples >= 2"));
    }
    let rtol = p.float("rtol");
    if !(rtol > 0.0 && rtol <= 1e-3) {
        return Err(invalid(format!("`rtol` must lie in (0, 1e-3], got {rtol}")));
    }
    let (model, psi) = dense_model(&chain, p.flag("sector"))?;
    let obs = dense_observables(chain.space.sites(), r);
    let times: Vec<f64> = (0..n).map(|k| t_final * k as f64 / (n - 1) as f64).collect();
    info!("lindblad-run: dimension {}", model.dim());
    let ex = exact_series(&chain, &model, &psi, &obs, &times, rtol)?;

    let mut table = Table::new("correlators", &["t", "observable", "mean", "stderr"]);
    for (k, &t) in ex.times.iter().enumerate() {
        for (o, label) in ex.labels.iter().enumerate() {
            table.push(vec![num(t), label.clone(), num(ex.values[o][k]), num(0.0)]);
        }
    }
    let singles = single_labels(&obs);
    let max_single = ex
        .labels
        .iter()
        .zip(&ex.values)
        .filter(|(l, _)| singles.contains(*l))
        .flat_map(|(_, v)| v.iter().map(|x| x.abs()))
        .fold(0.0, f64::max);
    let mut art = Artifacts::default();
    art.set("dimension", model.dim());
    art.set("max_single_correlator", jnum(max_single));
    art.set("final_dark_fidelity", ex.fidelity.last().map_or(serde_json::Value::Null, |&f| jnum(f)));
    art.set("max_trace_error", jnum(ex.trace_error));
    art.set("min_eigenvalue", jnum(ex.min_eigenvalue));
    art.set("number_drift", jnum(ex.number_drift));
    art.set("parity_drift", jnum(ex.parity_drift));
    if !ex.fidelity.is_empty() {
        let mut fid = Table::new("fidelity", &["t", "dark_fidelity"]);
        for (t, f) in ex.times.iter().zip(&ex.fidelity) {
            fid.push(vec![num(*t), num(*f)]);
        }
        art.tables.push(fid);
    }
    art.tables.insert(0, table);
    Ok(art)
}

/// Largest step below the rate bound that divides the sample interval.
fn auto_dt(requested: f64, sample_interval: f64, max_rate: f64) -> f64 {
    if requested > 0.0 {
        return requested;
    }
    let bound = if max_rate > 0.0 { 0.05 / max_rate } else { sample_interval };
    sample_interval / (sample_interval / bound).ceil().max(1.0)
}

fn traj_config(p: Params, seed: u64, max_rate: f64, obs: Vec<Observable>) -> Result<TrajectoryConfig, CliError> {
    let (t_final, si) = (p.float("t_final"), p.float("sample_interval"));
    if !(si > 0.0 && t_final >= si) {
        return Err(invalid("need 0 < sample_interval <= t_final"));
    }
    let dt = auto_dt(p.float("dt"), si, max_rate);
    let cfg = TrajectoryConfig::new(dt, t_final, si, p.count("n_traj")?, seed).map_err(setup)?;
    cfg.check_step(max_rate).map_err(setup)?;
    Ok(cfg.with_observables(obs))
}

fn series_table(name: &str, res: &EnsembleResult) -> Table {
    let s = &res.series;
    let mut table = Table::new(name, &["t", "observable", "mean", "stderr"]);
    for (k, &t) in s.times.iter().enumerate() {
        for (o, label) in s.labels.iter().enumerate() {
            table.push(vec![num(t), label.clone(), num(s.mean[o][k]), num(s.stderr[o][k])]);
        }
    }
    table
}

/// `(mean - reference) / stderr`, zero when both agree to rounding.
/// Deviation in units of the combined sampling error and reference
/// uncertainty `ref_err`.
fn z_score(mean: f64, stderr: f64, reference: f64, ref_err: f64) -> f64 {
    let d = mean - reference;
    let sigma = stderr.hypot(ref_err);
    if d.abs() <= 1e-9 * (1.0 + reference.abs()) {
        0.0
    } else if sigma > 0.0 {
        d / sigma
    } else {
        f64::INFINITY.copysign(d)
    }
}

fn trajectory_run(p: Params, seed: u64) -> Result<Artifacts, CliError> {
    let chain = build_chain(p)?;
    let r = ref_site(p, chain.space.sites())?;
    let (model, psi) = dense_model(&chain, true)?;
    let prop = match p.text("propagator") {
        "exact" => DensePropagator::Exact,
        "trotter2" => DensePropagator::Trotter2,
        other => return Err(invalid(format!("`propagator` must be exact or trotter2, got `{other}`"))),
    };
    let obs = dense_observables(chain.space.sites(), r);
    let cfg = traj_config(p, seed, max_model_rate(&model), obs.clone())?;
    let engine = DenseEngine::new(&model, &psi, &cfg, prop).map_err(setup)?;
    info!("trajectory-run: dimension {}, dt {}, {} steps", model.dim(), cfg.dt, cfg.n_steps());
    let res = run_ensemble(&engine, &cfg).map_err(fail)?;
    let mut art = Artifacts::default();
    art.set("dimension", model.dim());
    art.set("dt", cfg.dt);
    art.set("n_traj", cfg.n_traj);
    art.set("total_jumps", res.total_jumps);
    art.tables.push(series_table("correlators", &res));
    if p.flag("compare_exact") {
        let rtol = p.float("rtol");
        let ex = exact_series(&chain, &model, &psi, &obs, &res.series.times, rtol)?;
        let s = &res.series;
        let mut table = Table::new("comparison", &["t", "observable", "exact", "mean", "stderr", "z"]);
        let (mut worst, mut outside, mut total) = (0.0f64, 0usize, 0usize);
        for (k, &t) in s.times.iter().enumerate() {
            for o in 0..s.labels.len() {
                let r = ex.values[o][k];
                let z = z_score(s.mean[o][k], s.stderr[o][k], r, rtol * (1.0 + r.abs()));
                worst = worst.max(z.abs());
                outside += usize::from(z.abs() > 3.0);
                total += 1;
                table.push(vec![
                    num(t),
                    s.labels[o].clone(),
                    num(ex.values[o][k]),
                    num(s.mean[o][k]),
                    num(s.stderr[o][k]),
                    num(z),
                ]);
            }
        }
        art.set("comparisons", total);
        art.set("comparisons_outside_3_stderr", outside);
        art.set("max_abs_z", jnum(worst));
        art.set("final_dark_fidelity", ex.fidelity.last().map_or(serde_json::Value::Null, |&f| jnum(f)));
        art.tables.push(table);
    }
    Ok(art)
}

// ---------------------------------------------------------------- TEBD

fn mps_ensemble(chain: &Chain, p: Params, seed: u64, obs: Vec<Observable>) -> Result<EnsembleResult, CliError> {
    let opts = MpsOptions { chi_max: p.count("chi_max")?, svd_cutoff: p.float("svd_cutoff") };
    let cfg = traj_config(p, seed, max_local_rate(&chain.model), obs)?;
    let init = MpsState::from_product_state(&chain.init, &chain.space, opts).map_err(setup)?;
    let engine = MpsEngine::new(&chain.model, &init, &cfg).map_err(setup)?;
    info!("tebd-run: {} sites, dt {}, {} trajectories", chain.space.sites(), cfg.dt, cfg.n_traj);
    run_ensemble(&engine, &cfg).map_err(fail)
}

/// Equilibrium times of the pair correlators versus distance and a linear
/// fit over distances `2..=L/2`.
fn light_cone(res: &EnsembleResult, r: usize, sites: usize, level: f64, art: &mut Artifacts) -> Table {
    let s = &res.series;
    let mut table = Table::new("equilibrium", &["distance", "t_eq"]);
    let mut pts = vec![];
    for j in r + 1..sites {
        let o = s.index_of(&pair_label(r, j)).expect("pair correlator recorded");
        let t = match equilibrium_time(&s.times, &s.mean[o], level) {
            Ok(t) => t,
            Err(e) => {
                warn!("distance {}: {e}", j - r);
                f64::NAN
            }
        };
        table.push(vec![(j - r).to_string(), num(t)]);
        pts.push((j - r, t));
    }
    let monotone = pts.windows(2).all(|w| w[1].1 >= w[0].1);
    let window: Vec<_> = pts.iter().filter(|(d, _)| *d >= 2 && *d <= sites / 2).collect();
    let x: Vec<f64> = window.iter().map(|(d, _)| *d as f64).collect();
    let y: Vec<f64> = window.iter().map(|(_, t)| *t).collect();
    art.set("lightcone_monotone", monotone && pts.iter().all(|(_, t)| t.is_finite()));
    match linear_fit(&x, &y, None) {
        Ok(f) if y.iter().all(|t| t.is_finite()) => {
            art.set("lightcone_slope", jnum(f.slope));
            art.set("lightcone_r2", jnum(f.r_squared));
        }
        _ => {
            art.set("lightcone_slope", serde_json::Value::Null);
            art.set("lightcone_r2", serde_json::Value::Null);
        }
    }
    table
}

fn kmc_comparison(chain: &Chain, p: Params, seed: u64, res: &EnsembleResult, art: &mut Artifacts) -> Result<Table, CliError> {
    let defects: Vec<usize> = (0..chain.init.len()).filter(|&j| chain.init[j] % 2 == 1).collect();
    let table = RateTable::exact(p.float("gamma"), 0.0).map_err(setup)?;
    let setup_kmc = KmcSetup::new(chain.space.sites(), table, InitState::FromDefects(defects), res.series.times.clone())
        .and_then(KmcSetup::open)
        .map_err(setup)?;
    let kmc = glauber::ensemble(&setup_kmc, p.count("kmc_histories")?, seed).map_err(fail)?;
    let s = &res.series;
    let o = s.index_of("defect_density").expect("defect density recorded");
    let mut out = Table::new("defects", &["t", "tebd_mean", "tebd_stderr", "kmc_mean", "kmc_stderr", "z"]);
    let mut worst = 0.0f64;
    for k in 0..s.times.len() {
        let (qm, qs) = (s.mean[o][k], s.stderr[o][k]);
        let (cm, cs) = (kmc.mean[k], kmc.stderr[k]);
        let se = (qs * qs + cs * cs).sqrt();
        let z = z_score(qm, se, cm, 0.0);
        worst = worst.max(z.abs());
        out.push(vec![num(s.times[k]), num(qm), num(qs), num(cm), num(cs), num(z)]);
    }
    art.set("defect_max_abs_z", jnum(worst));
    art.set("defect_agreement", worst <= 3.0);
    Ok(out)
}

/// Steady-window average of each pair correlator, with the window mean of
/// the per-time standard errors as a conservative error bar.
fn steady_profile(res: &EnsembleResult, r: usize, sites: usize, from: f64) -> Vec<(f64, f64)> {
    let s = &res.series;
    let window: Vec<usize> = (0..s.times.len()).filter(|&k| s.times[k] >= from - 1e-12).collect();
    (r + 1..sites)
        .map(|j| {
            let o = s.index_of(&pair_label(r, j)).expect("pair correlator recorded");
            let n = window.len() as f64;
            let m = window.iter().map(|&k| s.mean[o][k]).sum::<f64>() / n;
            let e = window.iter().map(|&k| s.stderr[o][k]).sum::<f64>() / n;
            (m, e)
        })
        .collect()
}

fn healing_comparison(p: Params, seed: u64, art: &mut Artifacts) -> Result<Table, CliError> {
    let base = build_chain(p)?;
    let sites = base.space.sites();
    let r = ref_site(p, sites)?;
    let from = match p.float("steady_from") {
        f if f < 0.0 => p.float("t_final") / 2.0,
        f => f,
    };
    let variant = |gamma: f64, noise: f64| -> Result<Chain, CliError> {
        let mut map = p.0.clone();
        map.insert("gamma".into(), Value::Float(gamma));
        map.insert("noise".into(), Value::Float(noise));
        if map.get("heal") == Some(&Value::Str("none".into())) {
            map.insert("heal".into(), Value::Str("bonds".into()));
        }
        build_chain(Params(&map))
    };
    let (gamma, noise) = (p.float("gamma"), p.float("noise"));
    if !(gamma > 0.0 && noise > 0.0) {
        return Err(invalid("healing-comparison needs gamma > 0 and noise > 0"));
    }
    let mut profiles = vec![];
    for (name, g, h) in [("ideal", 0.0, 0.0), ("dirty", 0.0, noise), ("healed", gamma, noise)] {
        let chain = variant(g, h)?;
        info!("healing-comparison: {name}");
        let res = mps_ensemble(&chain, p, seed, tebd_observables(sites, r))?;
        profiles.push(steady_profile(&res, r, sites, from));
    }
    let mut table =
        Table::new("healing", &["distance", "ideal", "ideal_stderr", "dirty", "dirty_stderr", "healed", "healed_stderr"]);
    let (mut ordered, mut separated) = (true, true);
    for (k, j) in (r + 1..sites).enumerate() {
        let (i, d, h) = (profiles[0][k], profiles[1][k], profiles[2][k]);
        ordered &= i.0 >= h.0 && h.0 >= d.0;
        if j - r >= 3 {
            separated &= i.0 - d.0 > 3.0 * (i.1 * i.1 + d.1 * d.1).sqrt();
        }
        table.push(vec![(j - r).to_string(), num(i.0), num(i.1), num(d.0), num(d.1), num(h.0), num(h.1)]);
    }
    art.set("ordering_holds", ordered);
    art.set("ideal_dirty_separated", separated);
    art.set("steady_from", from);
    Ok(table)
}

fn tebd_run(p: Params, seed: u64) -> Result<Artifacts, CliError> {
    let mut art = Artifacts::default();
    match p.text("scenario") {
        "single" => {}
        "healing-comparison" => {
            let t = healing_comparison(p, seed, &mut art)?;
            art.tables.push(t);
            return Ok(art);
        }
        other => return Err(invalid(format!("`scenario` must be single or healing-comparison, got `{other}`"))),
    }
    let chain = build_chain(p)?;
    let sites = chain.space.sites();
    let r = ref_site(p, sites)?;
    let level = p.float("level");
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid(format!("`level` must lie in (0, 1), got {level}")));
    }
    let res = mps_ensemble(&chain, p, seed, tebd_observables(sites, r))?;
    art.set("n_traj", res.series.n_traj);
    art.set("total_jumps", res.total_jumps);
    art.tables.push(series_table("correlators", &res));
    let lc = light_cone(&res, r, sites, level, &mut art);
    art.tables.push(lc);
    if p.flag("compare_kmc") {
        let t = kmc_comparison(&chain, p, seed, &res, &mut art)?;
        art.tables.push(t);
    }
    Ok(art)
}

// ---------------------------------------------------------------- KMC

fn glauber_run(p: Params, seed: u64) -> Result<Artifacts, CliError> {
    let (gamma, h) = (p.float("gamma"), p.float("h"));
    let mode = match p.text("mode") {
        "exact" => RateMode::Exact,
        "glauber" => RateMode::Glauber,
        other => return Err(invalid(format!("`mode` must be exact or glauber, got `{other}`"))),
    };
    let table = RateTable::new(mode, gamma, h).map_err(setup)?;
    let init = match p.text("init") {
        "random" => InitState::Random,
        "all-up" => InitState::AllUp,
        other => return Err(invalid(format!("`init` must be random or all-up, got `{other}`"))),
    };
    let (t0, t1, n) = (p.float("t_min"), p.float("t_final"), p.count("n_times")?);
    if !(t0 > 0.0 && t1 > t0 && n >= 2) {
        return Err(invalid("need 0 < t_min < t_final and n_times >= 2"));
    }
    let mut times = vec![0.0];
    times.extend(log_grid(t0, t1, n));
    let periodic = p.flag("periodic");
    let mut kmc = KmcSetup::new(p.count("sites")?, table, init.clone(), times).map_err(setup)?;
    if !periodic {
        kmc = kmc.open().map_err(setup)?;
    }
    let oracle = p.flag("oracle");
    if oracle && !(mode == RateMode::Glauber && periodic) {
        return Err(invalid("the hierarchy oracle needs mode = glauber on a ring"));
    }
    let res = glauber::ensemble(&kmc, p.count("n_hist")?, seed).map_err(fail)?;
    let mut art = Artifacts::default();
    let mut density = Table::new("density", &["t", "mean", "stderr"]);
    for k in 0..res.times.len() {
        density.push(vec![num(res.times[k]), num(res.mean[k]), num(res.stderr[k])]);
    }
    art.tables.push(density);
    art.set("n_hist", res.n_hist);
    if h == 0.0 {
        match glauber::fit_power_exponent(&res, (p.float("fit_t0"), p.float("fit_t1"))) {
            Ok((e, s)) => {
                art.set("exponent", jnum(e));
                art.set("exponent_stderr", jnum(s));
            }
            Err(e) => return Err(fail(e)),
        }
    } else {
        let o = glauber::ising_oracle(&table);
        art.set("m_s_analytic", jnum(o.m_s));
        art.set("tau_analytic", jnum(o.tau));
        match glauber::steady_density(&res) {
            Ok((m, e)) => {
                art.set("m_s", jnum(m));
                art.set("m_s_stderr", jnum(e));
            }
            Err(e) => {
                warn!("no steady density: {e}");
                art.set("m_s", serde_json::Value::Null);
            }
        }
        match glauber::steady_and_relaxation(&res, &table) {
            Ok(rel) => art.set("tau", jnum(rel.tau)),
            Err(e) => {
                warn!("relaxation analysis failed: {e}");
                art.set("tau", serde_json::Value::Null);
                art.set("relaxation_error", e.to_string());
            }
        }
    }
    if oracle {
        let l = kmc.sites;
        let r0 = vec![if init == InitState::AllUp { 1.0 } else { 0.0 }; l - 1];
        let exact = glauber::glauber_hierarchy(&table, &r0, &res.times).map_err(fail)?;
        let mut t = Table::new("oracle", &["t", "kmc_mean", "kmc_stderr", "exact", "z"]);
        let mut worst = 0.0f64;
        for k in 0..res.times.len() {
            let z = z_score(res.mean[k], res.stderr[k], exact[k], 0.0);
            worst = worst.max(z.abs());
            t.push(vec![num(res.times[k]), num(res.mean[k]), num(res.stderr[k]), num(exact[k]), num(z)]);
        }
        art.set("oracle_max_abs_z", jnum(worst));
        art.tables.push(t);
    }
    Ok(art)
}

// ---------------------------------------------------------------- circuit QED

fn cqed_params(p: Params) -> Result<CqedParams, CliError> {
    let mut c = CqedParams {
        n_max: p.count("n_max")?,
        g1: C64::new(p.float("g1"), 0.0),
        g2: C64::from_polar(p.float("g2"), p.float("g2_phase")),
        g3: C64::new(p.float("g3"), 0.0),
        delta1: p.float("delta1"),
        delta2: p.float("delta2"),
        chi: p.float("chi"),
        chi_a_an: p.float("chi_a_an"),
        chi_a_t: p.float("chi_a_t"),
        kappa_f: p.float("kappa_f"),
        kappa_t: p.float("kappa_t"),
        include_tls: p.flag("include_tls"),
    };
    if p.flag("kerr_cancel") {
        c = c.with_kerr_cancellation();
    }
    c.validate().map_err(setup)?;
    Ok(c)
}

fn cqed_validate(p: Params) -> Result<Artifacts, CliError> {
    let c = cqed_params(p)?;
    let mut art = Artifacts::default();
    let h = c.hierarchy();
    if !h.satisfied() {
        warn!("hierarchy not satisfied: delta/g = {:.3}, kappa_f delta/g^2 = {:.3}", h.delta_over_g, h.kappa_ratio);
    }
    art.set("delta_over_g", jnum(h.delta_over_g));
    art.set("kappa_ratio", jnum(h.kappa_ratio));
    let reference = pair_jump(0, &FockSpace::new(2, c.n_max).map_err(setup)?).map_err(setup)?;
    art.set("jump_mismatch", jnum(cqed::jump_mismatch(&c, &reference.matrix).map_err(fail)?));
    art.set("kerr_residual", jnum(cqed::kerr_residual(&c).map_err(fail)?));
    art.set("effective_jump_rate", jnum(c.effective_jump_rate()));

    let mut sw = Table::new("schrieffer_wolff", &["delta1", "deviation", "gg_deviation", "leakage"]);
    let mut devs = vec![];
    for factor in [1.0, 2.0] {
        let mut q = c.clone();
        q.delta1 *= factor;
        q.delta2 *= factor;
        if p.flag("kerr_cancel") {
            q = q.with_kerr_cancellation();
        }
        let rep = cqed::schrieffer_wolff_check(&q).map_err(fail)?;
        if let Some(w) = rep.hierarchy_warning() {
            warn!("{w}");
        }
        devs.push(rep.deviation);
        sw.push(vec![num(q.delta1), num(rep.deviation), num(rep.gg_deviation), num(rep.leakage)]);
    }
    art.set("sw_deviation", jnum(devs[0]));
    art.set("sw_ratio", jnum(devs[0] / devs[1]));
    art.tables.push(sw);

    let red = cqed::standard_reduction(&c).map_err(fail)?;
    art.set("max_trace_distance", jnum(red.max_trace_distance));
    art.set("excited_population", jnum(red.excited_population));

    if p.flag("sweep") {
        let (g, delta) = (c.g1.norm(), c.delta1);
        let mut t = Table::new("sweep", &["sweep", "kappa_f", "delta", "max_trace_distance", "excited_population"]);
        let mut run = |name: &str, kappa_f: f64, d: f64| -> Result<f64, CliError> {
            let mut q = c.clone();
            q.kappa_f = kappa_f;
            q.delta1 = d;
            q.delta2 = d;
            if p.flag("kerr_cancel") {
                q = q.with_kerr_cancellation();
            }
            let rep = cqed::standard_reduction(&q).map_err(fail)?;
            info!("{name} sweep: kappa_f {kappa_f}, delta {d}: {:.4}", rep.max_trace_distance);
            t.push(vec![name.into(), num(kappa_f), num(d), num(rep.max_trace_distance), num(rep.excited_population)]);
            Ok(rep.max_trace_distance)
        };
        let mut by_kappa = vec![];
        for m in [5.0, 10.0, 20.0] {
            by_kappa.push(run("kappa_f", m * g * g / delta, delta)?);
        }
        let mut by_delta = vec![];
        for m in [0.5, 1.0, 2.0] {
            by_delta.push(run("delta", c.kappa_f, m * delta)?);
        }
        let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
        art.set("kappa_sweep_monotone", decreasing(&by_kappa));
        art.set("delta_sweep_monotone", decreasing(&by_delta));
        art.tables.push(t);
    }
    Ok(art)
}
