//! Property tests for the invariants of each module.

use nalgebra::{DMatrix, DVector};
use paircon::cqed::{build_effective_model, jump_mismatch, kerr_residual, CqedParams};
use paircon::darkstate::{correlator, dark_residual, dark_state, CorrelatorOrder, DarkStateSpec};
use paircon::fock::{
    embed, embed_local, hamiltonian_terms, heal_jump, hop_noise_jump, pair_jump, parity_op, total_number, FockSpace,
    HamiltonianKind, SiteOperator, StateVector,
};
use paircon::glauber::{flip_rate, ising_oracle, Kmc, RateTable, SpinConfig};
use paircon::linalg::expm;
use paircon::lindblad::{evolve, DensityMatrix, ModelBuilder};
use paircon::mps::{MpsOptions, MpsState};
use paircon::stats::{mean_stderr, stream_rng};
use paircon::trajectory::{run_ensemble, DenseEngine, DensePropagator, TrajectoryConfig};
use paircon::C64;
use proptest::prelude::*;

fn space_strategy() -> impl Strategy<Value = FockSpace> {
    (2usize..=4, 2usize..=4).prop_map(|(l, n)| FockSpace::new(l, n).unwrap())
}

fn random_unitary(d: usize, seed: &[f64]) -> DMatrix<C64> {
    let h = DMatrix::from_fn(d, d, |i, j| {
        let k = (i * d + j) % seed.len();
        C64::new(seed[k], seed[(k + 1) % seed.len()])
    });
    let herm = (&h + h.adjoint()) * C64::new(0.5, 0.0);
    expm(&(herm * C64::new(0.0, 1.0)))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn jumps_conserve_number(space in space_strategy(), b in 0usize..3) {
        let j = b % space.n_bonds();
        let n = total_number(&space).matrix;
        for op in [pair_jump(j, &space).unwrap(), hop_noise_jump(j, &space).unwrap()] {
            prop_assert!(op.matrix.commutator(&n).max_abs() < 1e-12);
        }
        let site = b % space.sites();
        let c = heal_jump(site, &space, 1.0).unwrap();
        prop_assert!(c.matrix.commutator(&n).max_abs() < 1e-12);
    }

    #[test]
    fn pair_jumps_conserve_every_parity(space in space_strategy(), b in 0usize..3) {
        let l = pair_jump(b % space.n_bonds(), &space).unwrap();
        for k in 0..space.sites() {
            prop_assert!(l.matrix.commutator(&parity_op(k, &space).unwrap().matrix).max_abs() < 1e-12);
        }
    }

    #[test]
    fn unitaries_outside_support_commute(
        space in space_strategy(),
        b in 0usize..3,
        seed in prop::collection::vec(-1.0f64..1.0, 7),
    ) {
        let op = pair_jump(b % space.n_bonds(), &space).unwrap();
        let u = random_unitary(space.local_dim(), &seed);
        for k in (0..space.sites()).filter(|k| !op.support.contains(k)) {
            let uk = embed(&SiteOperator::new(u.clone(), "U"), k, &space).unwrap().matrix;
            let conj = uk.adjoint().matmul(&op.matrix).matmul(&uk);
            prop_assert!(conj.max_abs_diff(&op.matrix) < 1e-12);
        }
    }

    #[test]
    fn low_occupation_elements_do_not_depend_on_cutoff(l in 2usize..=3, n in 2usize..=3) {
        let (small, big) = (FockSpace::new(l, n).unwrap(), FockSpace::new(l, n + 1).unwrap());
        let (a, b) = (pair_jump(0, &small).unwrap().matrix, pair_jump(0, &big).unwrap().matrix);
        let low: Vec<Vec<usize>> = (0..small.dim())
            .map(|k| small.basis().digits(k))
            .filter(|occ| occ.iter().all(|&x| x + 2 <= n))
            .collect();
        for r in &low {
            for c in &low {
                let va = a.get(small.index_of(r).unwrap(), small.index_of(c).unwrap());
                let vb = b.get(big.index_of(r).unwrap(), big.index_of(c).unwrap());
                prop_assert!((va - vb).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn dark_states_are_dark(l in 2usize..=4, n_max in 3usize..=5, n_pairs in 0usize..=2, mask in 0u8..16) {
        let defects: Vec<usize> = (0..l).filter(|k| mask & (1 << k) != 0).collect();
        let spec = DarkStateSpec::new(l, n_pairs, n_max).with_defects(defects.clone());
        prop_assume!(spec.validate().is_ok());
        let space = spec.space().unwrap();
        let psi = dark_state(&spec).unwrap();
        prop_assert!(dark_residual(&psi, &space).unwrap() < 1e-10);
        if defects.is_empty() && n_pairs > 0 {
            let reference = correlator(&psi, &space, 0, 1, CorrelatorOrder::Pair).unwrap();
            for i in 0..l {
                for j in (0..l).filter(|&j| j != i) {
                    let c = correlator(&psi, &space, i, j, CorrelatorOrder::Pair).unwrap();
                    prop_assert!((c - reference).norm() < 1e-10);
                    prop_assert!(correlator(&psi, &space, i, j, CorrelatorOrder::Single).unwrap().norm() < 1e-10);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn evolution_keeps_trace_hermiticity_and_positivity(
        kappa in 0.1f64..1.0,
        gamma in 0.0f64..1.0,
        noise in 0.0f64..0.3,
        kerr in -0.5f64..0.5,
        occ in prop::collection::vec(0usize..=2, 3),
    ) {
        let space = FockSpace::new(3, 2).unwrap();
        let model = ModelBuilder::new(&space)
            .pair_jumps(kappa).unwrap()
            .heal_bonds(gamma).unwrap()
            .hop_noise(noise).unwrap()
            .hamiltonian(HamiltonianKind::Kerr(kerr)).unwrap()
            .build().unwrap();
        let rho0 = DensityMatrix::pure(&StateVector::product(&occ, &space).unwrap());
        let out = evolve(&model, &rho0, &[0.0, 0.5, 2.0], 1e-8).unwrap();
        for rho in &out {
            prop_assert!((rho.trace() - C64::new(1.0, 0.0)).norm() < 1e-8);
            prop_assert!(paircon::lindblad::hermiticity_error(&rho.matrix) < 1e-10);
            prop_assert!(rho.min_eigenvalue() > -1e-8);
        }
    }

    #[test]
    fn pair_jump_evolution_conserves_number_and_parities(
        kappa in 0.1f64..1.0,
        kerr in -0.5f64..0.5,
        occ in prop::collection::vec(0usize..=3, 3),
    ) {
        let space = FockSpace::new(3, 3).unwrap();
        let model = ModelBuilder::new(&space)
            .pair_jumps(kappa).unwrap()
            .hamiltonian(HamiltonianKind::Kerr(kerr)).unwrap()
            .build().unwrap();
        let rho0 = DensityMatrix::pure(&StateVector::product(&occ, &space).unwrap());
        let mut ops = vec![total_number(&space)];
        ops.extend((0..3).map(|k| parity_op(k, &space).unwrap()));
        let start = rho0.observables(&ops).unwrap();
        for rho in evolve(&model, &rho0, &[0.0, 1.0, 3.0], 1e-8).unwrap() {
            for (v, s) in rho.observables(&ops).unwrap().iter().zip(&start) {
                prop_assert!((v - s).norm() < 1e-7);
            }
        }
    }

    #[test]
    fn trajectories_are_deterministic(seed in 0u64..1000, occ in prop::collection::vec(0usize..=2, 3)) {
        let space = FockSpace::new(3, 2).unwrap();
        let model = ModelBuilder::new(&space).pair_jumps(1.0).unwrap().heal_bonds(0.5).unwrap().build().unwrap();
        let psi = StateVector::product(&occ, &space).unwrap();
        let rate = paircon::trajectory::max_model_rate(&model);
        let dt = 0.05 / rate;
        let cfg = TrajectoryConfig::new(dt, 100.0 * dt, 10.0 * dt, 4, seed).unwrap().with_jump_log(true);
        let engine = DenseEngine::new(&model, &psi, &cfg, DensePropagator::Exact).unwrap();
        let a = run_ensemble(&engine, &cfg).unwrap();
        let b = run_ensemble(&engine, &cfg).unwrap();
        prop_assert_eq!(a.jump_logs, b.jump_logs);
    }

    #[test]
    fn mps_gate_sequences_match_dense(
        l in 3usize..=5,
        gates in prop::collection::vec((0usize..4, prop::collection::vec(-1.0f64..1.0, 162)), 1..6),
        occ in prop::collection::vec(0usize..=2, 5),
    ) {
        let space = FockSpace::new(l, 2).unwrap();
        let d: usize = 3;
        let opts = MpsOptions { chi_max: d.pow((l / 2) as u32), svd_cutoff: 0.0 };
        let mut mps = MpsState::from_product_state(&occ[..l], &space, opts).unwrap();
        let mut dense = StateVector::product(&occ[..l], &space).unwrap().amplitudes;
        for (b, raw) in &gates {
            let j = b % (l - 1);
            let g = DMatrix::from_fn(9, 9, |r, c| C64::new(raw[2 * (9 * r + c)], raw[2 * (9 * r + c) + 1]));
            mps.apply_two_site(&g, j).unwrap();
            dense = embed_local(&g, &[j, j + 1], &space).unwrap().mul_vec(&dense);
            prop_assert!(mps.canonical_error() < 1e-10);
        }
        let m = mps.to_dense();
        let norm = |v: &DVector<C64>| v.norm();
        prop_assume!(norm(&dense) > 1e-6);
        let diff = (&m / C64::new(norm(&m), 0.0)) - (&dense / C64::new(norm(&dense), 0.0));
        prop_assert!(diff.camax() < 1e-9, "diff {}", diff.camax());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn kmc_rates_and_defect_parity(bonds in 4usize..40, h in 0.0f64..0.5, exact in any::<bool>(), seed in 0u64..1000) {
        let table = if exact { RateTable::exact(1.0, h) } else { RateTable::glauber(1.0, h) }.unwrap();
        let mut rng = stream_rng(seed, 0);
        let config = SpinConfig::random(bonds, true, &mut rng).unwrap();
        let mut kmc = Kmc::new(config, &table);
        for _ in 0..50 {
            let total: f64 = (0..bonds).map(|j| flip_rate(kmc.config(), j, &table).unwrap()).sum();
            prop_assert!((kmc.total_rate() - total).abs() < 1e-9 * total.max(1.0));
            prop_assert_eq!(kmc.defect_count() % 2, 0);
            if !kmc.step(&mut rng) {
                break;
            }
        }
    }

    #[test]
    fn glauber_rates_obey_detailed_balance(h in 1e-4f64..0.9) {
        let table = RateTable::glauber(1.0, h).unwrap();
        let x = ising_oracle(&table).coupling;
        for l in [-1i8, 1] {
            for r in [-1i8, 1] {
                for s in [-1i8, 1] {
                    let ratio = table.rate(l, s, r) / table.rate(l, -s, r);
                    let boltzmann = (-2.0 * x * f64::from(s) * f64::from(l + r)).exp();
                    prop_assert!((ratio / boltzmann - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn effective_jump_is_always_the_pair_jump(
        n_max in 2usize..=4,
        g in prop::collection::vec(-2.0f64..2.0, 4),
        d1 in 5.0f64..50.0,
        d2 in 5.0f64..50.0,
    ) {
        let p = CqedParams {
            n_max,
            g1: C64::new(g[0], g[1]),
            g2: C64::new(g[2], g[3]),
            delta1: d1,
            delta2: d2,
            ..CqedParams::default()
        };
        prop_assume!(p.g1.norm() > 1e-3 && p.g2.norm() > 1e-3);
        let reference = pair_jump(0, &FockSpace::new(2, n_max).unwrap()).unwrap();
        prop_assert!(jump_mismatch(&p, &reference.matrix).unwrap() < 1e-12);
        prop_assert!(kerr_residual(&p.clone().with_kerr_cancellation()).unwrap() < 1e-12);
        prop_assert!(build_effective_model(&p).unwrap().hamiltonian().is_hermitian(1e-14));
    }

    #[test]
    fn ensemble_reduction_is_order_independent(mut xs in prop::collection::vec(-10.0f64..10.0, 2..50), rot in 0usize..50) {
        let (m1, s1) = mean_stderr(&xs);
        let k = rot % xs.len();
        xs.rotate_left(k);
        let (m2, s2) = mean_stderr(&xs);
        prop_assert!((m1 - m2).abs() < 1e-12 && (s1 - s2).abs() < 1e-12);
    }
}

#[test]
fn kerr_and_penalty_terms_are_hermitian() {
    let space = FockSpace::new(3, 3).unwrap();
    for kind in [HamiltonianKind::Kerr(0.7), HamiltonianKind::Penalty(1.3)] {
        assert!(hamiltonian_terms(kind, &space).unwrap().matrix.is_hermitian(1e-14));
    }
}
