//! Classical kinetics of parity defects as domain walls of an Ising chain.
//!
//! A defect on bond `j` is a domain wall `σ_j ≠ σ_{j+1}`. Flipping spin `j`
//! hops a wall, annihilates two walls, or creates a pair, depending on the
//! neighbours. Evolution is rejection-free continuous-time Monte Carlo.

use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ode::{integrate, Tolerance};
use crate::stats::{linear_fit, mean_stderr, stream_rng};
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RateMode {
    /// Hop `Γ/2`, annihilation `Γ`, production `Γh`.
    Exact,
    /// Kinetic Ising rates `(Γ/2)[1 − (γ/2)σ_j(σ_{j−1} + σ_{j+1})]`.
    Glauber,
}

/// Local environment of a spin, named by what its flip does to the walls.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlipClass {
    Hop = 0,
    Annihilate = 1,
    Produce = 2,
}

impl FlipClass {
    pub fn of(left: i8, s: i8, right: i8) -> Self {
        match (left != s) as u8 + (right != s) as u8 {
            0 => Self::Produce,
            1 => Self::Hop,
            _ => Self::Annihilate,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateTable {
    pub mode: RateMode,
    pub gamma: f64,
    pub h: f64,
}

impl RateTable {
    pub fn new(mode: RateMode, gamma: f64, h: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("rate Γ must be positive, got {gamma}")));
        }
        if !(h >= 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!("production parameter h must be ≥ 0, got {h}")));
        }
        Ok(Self { mode, gamma, h })
    }

    pub fn exact(gamma: f64, h: f64) -> Result<Self> {
        Self::new(RateMode::Exact, gamma, h)
    }

    pub fn glauber(gamma: f64, h: f64) -> Result<Self> {
        Self::new(RateMode::Glauber, gamma, h)
    }

    /// Ising coupling `γ = (1 − h)/(1 + h)`.
    pub fn ising_gamma(&self) -> f64 {
        (1.0 - self.h) / (1.0 + self.h)
    }

    pub fn class_rate(&self, class: FlipClass) -> f64 {
        let g = self.gamma;
        match (self.mode, class) {
            (_, FlipClass::Hop) => 0.5 * g,
            (RateMode::Exact, FlipClass::Annihilate) => g,
            (RateMode::Exact, FlipClass::Produce) => g * self.h,
            (RateMode::Glauber, FlipClass::Annihilate) => 0.5 * g * (1.0 + self.ising_gamma()),
            (RateMode::Glauber, FlipClass::Produce) => 0.5 * g * (1.0 - self.ising_gamma()),
        }
    }

    /// Flip rate of the middle spin of a triple.
    pub fn rate(&self, left: i8, s: i8, right: i8) -> f64 {
        match self.mode {
            RateMode::Exact => self.class_rate(FlipClass::of(left, s, right)),
            RateMode::Glauber => {
                let field = (s * (left + right)) as f64;
                0.5 * self.gamma * (1.0 - 0.5 * self.ising_gamma() * field)
            }
        }
    }
}

/// Ising chain. On an open chain the two end spins are frozen, so `L + 1`
/// spins carry `L` bonds; a ring of `L` spins has `L` bonds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpinConfig {
    spins: Vec<i8>,
    periodic: bool,
}

impl SpinConfig {
    pub fn new(spins: Vec<i8>, periodic: bool) -> Result<Self> {
        if spins.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidArgument("spins must be ±1".into()));
        }
        if spins.len() < 3 {
            return Err(Error::InvalidArgument(format!("need at least 3 spins, got {}", spins.len())));
        }
        Ok(Self { spins, periodic })
    }

    /// Spin count needed for `bonds` defect sites.
    fn spin_count(bonds: usize, periodic: bool) -> usize {
        if periodic {
            bonds
        } else {
            bonds + 1
        }
    }

    pub fn all_up(bonds: usize, periodic: bool) -> Result<Self> {
        Self::new(vec![1; Self::spin_count(bonds, periodic)], periodic)
    }

    pub fn random<R: Rng>(bonds: usize, periodic: bool, rng: &mut R) -> Result<Self> {
        let n = Self::spin_count(bonds, periodic);
        Self::new((0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect(), periodic)
    }

    /// Spins whose domain walls sit exactly on `defects` (bond indices).
    pub fn from_defects(bonds: usize, defects: &[usize], periodic: bool) -> Result<Self> {
        let mut wall = vec![false; bonds];
        for &d in defects {
            if d >= bonds {
                return Err(Error::OutOfRange { index: d, limit: bonds });
            }
            if wall[d] {
                return Err(Error::InvalidArgument(format!("duplicate defect at {d}")));
            }
            wall[d] = true;
        }
        if periodic && defects.len() % 2 == 1 {
            return Err(Error::InvalidArgument("a ring carries an even number of domain walls".into()));
        }
        let n = Self::spin_count(bonds, periodic);
        let mut spins = vec![1i8; n];
        for j in 1..n {
            spins[j] = if wall[j - 1] { -spins[j - 1] } else { spins[j - 1] };
        }
        Self::new(spins, periodic)
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn periodic(&self) -> bool {
        self.periodic
    }

    pub fn n_bonds(&self) -> usize {
        if self.periodic {
            self.spins.len()
        } else {
            self.spins.len() - 1
        }
    }

    /// `m_j = (1 − σ_j σ_{j+1})/2` for every bond.
    pub fn defects(&self) -> Vec<u8> {
        let n = self.spins.len();
        (0..self.n_bonds()).map(|j| (self.spins[j] != self.spins[(j + 1) % n]) as u8).collect()
    }

    pub fn defect_count(&self) -> usize {
        self.defects().iter().map(|&m| m as usize).sum()
    }

    pub fn flippable(&self, j: usize) -> bool {
        j < self.spins.len() && (self.periodic || (j > 0 && j + 1 < self.spins.len()))
    }

    fn neighbours(&self, j: usize) -> (usize, usize) {
        let n = self.spins.len();
        (if j == 0 { n - 1 } else { j - 1 }, if j + 1 == n { 0 } else { j + 1 })
    }

    fn triple(&self, j: usize) -> (i8, i8, i8) {
        let (l, r) = self.neighbours(j);
        (self.spins[l], self.spins[j], self.spins[r])
    }

    pub fn class(&self, j: usize) -> Option<FlipClass> {
        self.flippable(j).then(|| {
            let (l, s, r) = self.triple(j);
            FlipClass::of(l, s, r)
        })
    }
}

/// Flip rate of spin `j` (zero for the frozen ends of an open chain).
pub fn flip_rate(config: &SpinConfig, j: usize, table: &RateTable) -> Result<f64> {
    if j >= config.spins.len() {
        return Err(Error::OutOfRange { index: j, limit: config.spins.len() });
    }
    if !config.flippable(j) {
        return Ok(0.0);
    }
    let (l, s, r) = config.triple(j);
    Ok(table.rate(l, s, r))
}

const NONE: u32 = u32::MAX;

/// Event-driven simulator. Sites are bucketed by flip class; all sites of a
/// class share one rate, so selection is O(1).
pub struct Kmc {
    config: SpinConfig,
    rates: [f64; 3],
    buckets: [Vec<u32>; 3],
    slot: Vec<(u8, u32)>,
    defects: usize,
    time: f64,
    events: u64,
}

impl Kmc {
    pub fn new(config: SpinConfig, table: &RateTable) -> Self {
        let rates = [FlipClass::Hop, FlipClass::Annihilate, FlipClass::Produce].map(|c| table.class_rate(c));
        let n = config.spins.len();
        let mut kmc = Self {
            defects: config.defect_count(),
            config,
            rates,
            buckets: [Vec::new(), Vec::new(), Vec::new()],
            slot: vec![(0, NONE); n],
            time: 0.0,
            events: 0,
        };
        for j in 0..n {
            kmc.insert(j);
        }
        kmc
    }

    fn insert(&mut self, j: usize) {
        self.insert_as(j, self.config.class(j));
    }

    fn insert_as(&mut self, j: usize, class: Option<FlipClass>) {
        if let Some(c) = class {
            let b = &mut self.buckets[c as usize];
            self.slot[j] = (c as u8, b.len() as u32);
            b.push(j as u32);
        }
    }

    pub fn config(&self) -> &SpinConfig {
        &self.config
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn defect_count(&self) -> usize {
        self.defects
    }

    pub fn defect_density(&self) -> f64 {
        self.defects as f64 / self.config.n_bonds() as f64
    }

    pub fn total_rate(&self) -> f64 {
        (0..3).map(|c| self.buckets[c].len() as f64 * self.rates[c]).sum()
    }

    /// Flips spin `j` and updates walls and buckets of `j − 1, j, j + 1`.
    pub fn flip(&mut self, j: usize) {
        // class index by number of differing neighbours
        const BY_WALLS: [u8; 3] = [FlipClass::Produce as u8, FlipClass::Hop as u8, FlipClass::Annihilate as u8];
        let (jl, jr) = self.config.neighbours(j);
        let sp = &mut self.config.spins;
        let s = sp[j];
        let walls = (sp[jl] != s) as usize + (sp[jr] != s) as usize;
        sp[j] = -s;
        self.defects = self.defects + 2 - 2 * walls;
        for k in [jl, j, jr] {
            if self.slot[k].1 == NONE {
                continue;
            }
            let (kl, kr) = self.config.neighbours(k);
            let sp = &self.config.spins;
            let w = (sp[kl] != sp[k]) as usize + (sp[kr] != sp[k]) as usize;
            self.move_to(k, BY_WALLS[w]);
        }
    }

    fn move_to(&mut self, k: usize, class: u8) {
        let (c, idx) = self.slot[k];
        if c == class {
            return;
        }
        let b = &mut self.buckets[c as usize];
        let last = b.pop().expect("bucket holds the site");
        if last as usize != k {
            b[idx as usize] = last;
            self.slot[last as usize].1 = idx;
        }
        let nb = &mut self.buckets[class as usize];
        self.slot[k] = (class, nb.len() as u32);
        nb.push(k as u32);
    }

    /// Performs one event. Returns `false` once no process is possible.
    pub fn step<R: Rng>(&mut self, rng: &mut R) -> bool {
        let total = self.total_rate();
        if total <= 0.0 {
            return false;
        }
        self.time += -(1.0 - rng.random::<f64>()).ln() / total;
        self.pick_and_flip(total, rng);
        true
    }

    /// Runs until `times.last()` and returns the defect density at each time.
    pub fn record<R: Rng>(&mut self, times: &[f64], rng: &mut R) -> Vec<f64> {
        let mut out = Vec::with_capacity(times.len());
        let mut k = 0;
        while k < times.len() {
            let total = self.total_rate();
            if total <= 0.0 {
                // absorbing configuration
                out.resize(times.len(), self.defect_density());
                break;
            }
            let t_next = self.time - (1.0 - rng.random::<f64>()).ln() / total;
            if times[k] < t_next {
                let now = self.defect_density();
                while k < times.len() && times[k] < t_next {
                    out.push(now);
                    k += 1;
                }
            }
            if k == times.len() {
                break;
            }
            self.time = t_next;
            self.pick_and_flip(total, rng);
        }
        out
    }

    fn pick_and_flip<R: Rng>(&mut self, total: f64, rng: &mut R) {
        let mut u = rng.random::<f64>() * total;
        let mut class = 2;
        for c in 0..3 {
            let w = self.buckets[c].len() as f64 * self.rates[c];
            if u < w {
                class = c;
                break;
            }
            u -= w;
        }
        while self.buckets[class].is_empty() {
            class = (class + 2) % 3;
        }
        let b = &self.buckets[class];
        // multiply-shift index; bias is below 2^-32 for any realistic bucket
        let j = b[(((rng.next_u64() >> 32) * b.len() as u64) >> 32) as usize] as usize;
        self.flip(j);
        self.events += 1;
        if self.config.periodic {
            assert!(self.defects.is_multiple_of(2), "odd number of domain walls on a ring");
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitState {
    Random,
    AllUp,
    FromDefects(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct KmcSetup {
    /// Number of bonds (defect sites).
    pub sites: usize,
    pub periodic: bool,
    pub table: RateTable,
    pub init: InitState,
    /// Recording times, increasing and positive.
    pub times: Vec<f64>,
}

impl KmcSetup {
    pub fn new(sites: usize, table: RateTable, init: InitState, times: Vec<f64>) -> Result<Self> {
        let s = Self { sites, periodic: true, table, init, times };
        s.validate()?;
        Ok(s)
    }

    pub fn open(mut self) -> Result<Self> {
        self.periodic = false;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites < 3 {
            return Err(Error::InvalidArgument(format!("need at least 3 sites, got {}", self.sites)));
        }
        if self.times.is_empty() || self.times[0] < 0.0 || self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("recording times must be non-negative and increasing".into()));
        }
        Ok(())
    }

    fn initial<R: Rng>(&self, rng: &mut R) -> Result<SpinConfig> {
        match &self.init {
            InitState::Random => SpinConfig::random(self.sites, self.periodic, rng),
            InitState::AllUp => SpinConfig::all_up(self.sites, self.periodic),
            InitState::FromDefects(d) => SpinConfig::from_defects(self.sites, d, self.periodic),
        }
    }
}

/// One history on stream `stream` of `seed`.
pub fn kmc_run(setup: &KmcSetup, seed: u64, stream: u64) -> Result<Vec<f64>> {
    setup.validate()?;
    let mut rng = stream_rng(seed, stream);
    let config = setup.initial(&mut rng)?;
    let mut kmc = Kmc::new(config, &setup.table);
    Ok(kmc.record(&setup.times, &mut rng))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_hist: usize,
    /// History `k` uses stream `k` of this seed.
    pub seed: u64,
}

/// Independent seeded histories, averaged in history order so the result
/// does not depend on the thread count.
pub fn ensemble(setup: &KmcSetup, n_hist: usize, seed: u64) -> Result<RunResult> {
    if n_hist < 2 {
        return Err(Error::InvalidArgument(format!("an ensemble needs at least 2 histories, got {n_hist}")));
    }
    setup.validate()?;
    let runs: Vec<Vec<f64>> = (0..n_hist as u64).into_par_iter().map(|k| kmc_run(setup, seed, k)).collect::<Result<_>>()?;
    let nt = setup.times.len();
    let mut mean = Vec::with_capacity(nt);
    let mut stderr = Vec::with_capacity(nt);
    let mut col = vec![0.0; n_hist];
    for i in 0..nt {
        for (c, r) in col.iter_mut().zip(&runs) {
            *c = r[i];
        }
        let (m, s) = mean_stderr(&col);
        mean.push(m);
        stderr.push(s);
    }
    debug!("KMC ensemble: {n_hist} histories of {} sites", setup.sites);
    Ok(RunResult { times: setup.times.clone(), mean, stderr, n_hist, seed })
}

/// Exponent of `m ∝ t^p` from a weighted log-log fit over `window`.
pub fn fit_power_exponent(result: &RunResult, window: (f64, f64)) -> Result<(f64, f64)> {
    let (t0, t1) = window;
    let mut x = vec![];
    let mut y = vec![];
    let mut w = vec![];
    for ((&t, &m), &s) in result.times.iter().zip(&result.mean).zip(&result.stderr) {
        if t < t0 || t > t1 {
            continue;
        }
        if m <= 0.0 {
            return Err(Error::InvalidArgument(format!("non-positive density {m} at t = {t}")));
        }
        x.push(t.ln());
        y.push(m.ln());
        w.push(if s > 0.0 && s.is_finite() { (m / s).powi(2) } else { 1.0 });
    }
    if x.len() < 3 {
        return Err(Error::InvalidArgument(format!("fit window {window:?} holds {} points", x.len())));
    }
    let weights = if w.iter().all(|&v| v == 1.0) { None } else { Some(w.as_slice()) };
    let fit = linear_fit(&x, &y, weights)?;
    Ok((fit.slope, fit.slope_stderr))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Relaxation {
    pub m_s: f64,
    pub m_s_stderr: f64,
    pub tau: f64,
    pub m_s_analytic: f64,
    pub tau_analytic: f64,
}

/// Time average over the last decade using trapezoids on the recording grid.
fn decade_average(times: &[f64], values: &[f64], from: f64, to: f64) -> f64 {
    let mut area = 0.0;
    let mut span = 0.0;
    for k in 1..times.len() {
        let (a, b) = (times[k - 1].max(from), times[k].min(to));
        if b <= a {
            continue;
        }
        area += 0.5 * (values[k - 1] + values[k]) * (b - a);
        span += b - a;
    }
    area / span
}

/// Residual density: the time average over the final decade and its error.
/// Fails unless the two halves of the decade agree within 2%.
pub fn steady_density(result: &RunResult) -> Result<(f64, f64)> {
    let t_end = *result.times.last().ok_or_else(|| Error::InvalidArgument("empty run".into()))?;
    let t_start = t_end / 10.0;
    let t_mid = (t_start * t_end).sqrt();
    let m_s = decade_average(&result.times, &result.mean, t_start, t_end);
    let first = decade_average(&result.times, &result.mean, t_start, t_mid);
    let second = decade_average(&result.times, &result.mean, t_mid, t_end);
    if m_s <= 0.0 || ((first - second) / m_s).abs() > 0.02 {
        return Err(Error::NotConverged(format!("final-decade density not steady: {first:.5} vs {second:.5} (mean {m_s:.5})")));
    }
    let tail: Vec<f64> = result.times.iter().zip(&result.stderr).filter(|(t, _)| **t >= t_start).map(|(_, s)| *s).collect();
    Ok((m_s, tail.iter().sum::<f64>() / tail.len() as f64 / (tail.len() as f64).sqrt()))
}

/// Residual density and relaxation time of a run with production.
///
/// `m_s` is the time average over the final decade. `τ` comes from the
/// approach to `m_s`, which decays as `t^{-3/2} e^{-t/τ}` with corrections in
/// `1/t`: `ln(m − m_s) + (3/2) ln t = c − t/τ + b₁/t + b₂/t²` is fitted on
/// `[τ/2, 2τ]`, iterating the window until `τ` settles.
pub fn steady_and_relaxation(result: &RunResult, table: &RateTable) -> Result<Relaxation> {
    if table.h <= 0.0 {
        return Err(Error::InvalidArgument("relaxation time is undefined without production (h = 0)".into()));
    }
    let oracle = ising_oracle(table);
    let (m_s, m_s_stderr) = steady_density(result)?;
    let excess: Vec<f64> = result.mean.iter().map(|m| m - m_s).collect();
    // start from the time the excess falls to a tenth of m_s
    let mut tau = result
        .times
        .iter()
        .zip(&excess)
        .find(|(_, e)| **e < 0.1 * m_s)
        .map(|(t, _)| *t)
        .ok_or_else(|| Error::NotConverged("density never approaches its plateau".into()))?;
    let mut converged = false;
    // The window follows the estimate; the geometric-mean update damps the
    // period-two cycles that noisy data can produce.
    for _ in 0..100 {
        let next = relaxation_fit(result, &excess, m_s_stderr, 0.5 * tau, 2.0 * tau)?;
        if (next - tau).abs() / tau < 1e-3 {
            tau = next;
            converged = true;
            break;
        }
        tau = (tau * next).sqrt();
    }
    if !converged {
        return Err(Error::NotConverged(format!("relaxation fit window did not settle (τ ≈ {tau:.3})")));
    }
    Ok(Relaxation { m_s, m_s_stderr, tau, m_s_analytic: oracle.m_s, tau_analytic: oracle.tau })
}

/// Weight of `t` in the window `[t0, t1]`, tapered smoothly over a factor
/// 1.25 either side of each edge so the fit depends continuously on the window.
fn window_weight(t: f64, t0: f64, t1: f64) -> f64 {
    let ramp = |x: f64| {
        let u = ((x / 1.25f64.ln() + 1.0) / 2.0).clamp(0.0, 1.0);
        u * u * (3.0 - 2.0 * u)
    };
    ramp((t / t0).ln()) * ramp((t1 / t).ln())
}

fn relaxation_fit(result: &RunResult, excess: &[f64], ms_err: f64, t0: f64, t1: f64) -> Result<f64> {
    let mut rows = vec![];
    for ((&t, &e), &s) in result.times.iter().zip(excess).zip(&result.stderr) {
        let se = (s * s + ms_err * ms_err).sqrt();
        let taper = if t > 0.0 { window_weight(t, t0, t1) } else { 0.0 };
        if taper == 0.0 || e <= 2.0 * se {
            continue;
        }
        let w = taper * if se > 0.0 && se.is_finite() { e / se } else { 1.0 };
        rows.push((t, e.ln() + 1.5 * t.ln(), w));
    }
    if rows.len() < 6 {
        return Err(Error::NotConverged(format!(
            "only {} resolvable points in the relaxation window [{t0:.3}, {t1:.3}]",
            rows.len()
        )));
    }
    let a = DMatrix::from_fn(rows.len(), 4, |i, j| {
        let (t, _, w) = rows[i];
        w * [1.0, t, 1.0 / t, 1.0 / (t * t)][j]
    });
    let b = DVector::from_fn(rows.len(), |i, _| rows[i].1 * rows[i].2);
    let coef = a.svd(true, true).solve(&b, 1e-14).map_err(|e| Error::NotConverged(format!("relaxation least squares: {e}")))?;
    if coef[1] >= 0.0 {
        return Err(Error::NotConverged("excess density is not decaying".into()));
    }
    Ok(-1.0 / coef[1])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IsingOracle {
    pub gamma: f64,
    /// `J / k_B T`, infinite at `h = 0`.
    pub coupling: f64,
    /// Equilibrium `⟨σ_j σ_{j+1}⟩`.
    pub nn_correlation: f64,
    pub m_s: f64,
    /// Relaxation time `(1 + h)/(4Γh)`, infinite at `h = 0`.
    pub tau: f64,
    /// Set when `h = 0` and the coupling diverges.
    pub zero_temperature: bool,
}

/// Equilibrium Ising quantities equivalent to the kinetic rates.
pub fn ising_oracle(table: &RateTable) -> IsingOracle {
    let gamma = table.ising_gamma();
    if table.h == 0.0 {
        return IsingOracle {
            gamma,
            coupling: f64::INFINITY,
            nn_correlation: 1.0,
            m_s: 0.0,
            tau: f64::INFINITY,
            zero_temperature: true,
        };
    }
    let x = 0.5 * gamma.atanh();
    let eta = x.tanh();
    IsingOracle {
        gamma,
        coupling: x,
        nn_correlation: eta,
        m_s: 0.5 * (1.0 - eta),
        tau: 1.0 / (2.0 * table.gamma * (1.0 - gamma)),
        zero_temperature: false,
    }
}

/// Exact ensemble-mean defect density of the kinetic Ising ring.
///
/// The spin correlations `r_k = ⟨σ_j σ_{j+k}⟩` of a translation-invariant
/// ensemble close under the rates: `dr_k/dt = −2Γ r_k + Γγ (r_{k−1} + r_{k+1})`
/// with `r_0 = r_L = 1`. `r0[k-1]` holds the initial `r_k` for `k = 1..L-1`.
pub fn glauber_hierarchy(table: &RateTable, r0: &[f64], times: &[f64]) -> Result<Vec<f64>> {
    if table.mode != RateMode::Glauber {
        return Err(Error::Unsupported("the correlation hierarchy closes only for kinetic Ising rates".into()));
    }
    let n = r0.len();
    if n < 2 {
        return Err(Error::InvalidArgument("ring too short".into()));
    }
    let (g, gam) = (table.gamma, table.ising_gamma());
    let y0 = DMatrix::from_fn(n, 1, |k, _| C64::new(r0[k], 0.0));
    let f = |_t: f64, y: &DMatrix<C64>| {
        DMatrix::from_fn(n, 1, |k, _| {
            let left = if k == 0 { C64::new(1.0, 0.0) } else { y[(k - 1, 0)] };
            let right = if k + 1 == n { C64::new(1.0, 0.0) } else { y[(k + 1, 0)] };
            y[(k, 0)] * (-2.0 * g) + (left + right) * (g * gam)
        })
    };
    let mut grid = vec![0.0];
    grid.extend(times.iter().copied().filter(|&t| t > 0.0));
    let mut out = Vec::with_capacity(times.len());
    integrate(f, y0, &grid, Tolerance::new(1e-9), |_, y| {
        out.push(0.5 * (1.0 - y[(0, 0)].re));
        Ok(())
    })?;
    // drop the t = 0 entry unless it was requested
    if times.first() != Some(&0.0) {
        out.remove(0);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::log_grid;

    const UP: i8 = 1;
    const DN: i8 = -1;

    fn all_triples() -> Vec<(i8, i8, i8)> {
        let mut v = vec![];
        for l in [UP, DN] {
            for s in [UP, DN] {
                for r in [UP, DN] {
                    v.push((l, s, r));
                }
            }
        }
        v
    }

    #[test]
    fn exact_rate_table() {
        let t = RateTable::exact(2.0, 0.1).unwrap();
        assert_eq!(t.rate(UP, UP, DN), 1.0);
        assert_eq!(t.rate(DN, DN, UP), 1.0);
        assert_eq!(t.rate(UP, DN, UP), 2.0);
        assert_eq!(t.rate(DN, DN, DN), 0.2);
    }

    #[test]
    fn glauber_rate_table() {
        let h = 0.25;
        let t = RateTable::glauber(1.0, h).unwrap();
        assert!((t.rate(UP, UP, UP) - h / (1.0 + h)).abs() < 1e-15);
        assert!((t.rate(UP, DN, UP) - 1.0 / (1.0 + h)).abs() < 1e-15);
        assert!((t.rate(DN, UP, UP) - 0.5).abs() < 1e-15);
        for (l, s, r) in all_triples() {
            assert!((t.rate(l, s, r) - t.class_rate(FlipClass::of(l, s, r))).abs() < 1e-15);
        }
    }

    #[test]
    fn glauber_matches_exact_without_production() {
        let g = RateTable::glauber(1.3, 0.0).unwrap();
        let e = RateTable::exact(1.3, 0.0).unwrap();
        for (l, s, r) in all_triples() {
            assert!((g.rate(l, s, r) - e.rate(l, s, r)).abs() < 1e-15);
        }
    }

    #[test]
    fn glauber_detailed_balance() {
        let t = RateTable::glauber(1.0, 0.03).unwrap();
        let x = ising_oracle(&t).coupling;
        for (l, s, r) in all_triples() {
            let ratio = t.rate(l, s, r) / t.rate(l, -s, r);
            let boltzmann = (-2.0 * x * (s * (l + r)) as f64).exp();
            assert!((ratio - boltzmann).abs() < 1e-12 * boltzmann.max(1.0));
        }
    }

    #[test]
    fn oracle_limits() {
        let o = ising_oracle(&RateTable::glauber(1.0, 1.0).unwrap());
        assert!(o.gamma.abs() < 1e-15 && o.nn_correlation.abs() < 1e-15 && (o.m_s - 0.5).abs() < 1e-15);
        let o = ising_oracle(&RateTable::glauber(1.0, 0.01).unwrap());
        assert!((o.m_s - 0.1 / 1.1).abs() < 1e-12);
        assert!((o.tau - 1.01 / 0.04).abs() < 1e-9);
        let o = ising_oracle(&RateTable::glauber(1.0, 1e-8).unwrap());
        assert!((o.m_s / 1e-4 - 1.0).abs() < 2e-4);
        let o = ising_oracle(&RateTable::glauber(1.0, 0.0).unwrap());
        assert!(o.zero_temperature && o.m_s == 0.0);
    }

    #[test]
    fn defect_mapping() {
        let c = SpinConfig::from_defects(6, &[1, 4], true).unwrap();
        assert_eq!(c.spins(), &[1, 1, -1, -1, -1, 1]);
        assert_eq!(c.defects(), vec![0, 1, 0, 0, 1, 0]);
        assert!(SpinConfig::from_defects(6, &[1], true).is_err());
        let o = SpinConfig::from_defects(4, &[0], false).unwrap();
        assert_eq!(o.spins().len(), 5);
        assert_eq!(o.defects(), vec![1, 0, 0, 0]);
        assert!(!o.flippable(0) && !o.flippable(4) && o.flippable(1));
        assert_eq!(flip_rate(&o, 0, &RateTable::exact(1.0, 0.5).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn buckets_track_classes() {
        let table = RateTable::exact(1.0, 0.2).unwrap();
        let mut rng = stream_rng(3, 0);
        let config = SpinConfig::random(30, true, &mut rng).unwrap();
        let mut kmc = Kmc::new(config, &table);
        for _ in 0..2000 {
            assert!(kmc.step(&mut rng));
            let c = kmc.config();
            let direct: f64 = (0..30).map(|j| flip_rate(c, j, &table).unwrap()).sum();
            assert!((kmc.total_rate() - direct).abs() < 1e-9);
            assert_eq!(kmc.defect_count(), c.defect_count());
        }
    }

    #[test]
    fn adjacent_pair_annihilates() {
        let setup =
            KmcSetup::new(10, RateTable::exact(1.0, 0.0).unwrap(), InitState::FromDefects(vec![3, 4]), vec![1e3, 1e4]).unwrap();
        let m = kmc_run(&setup, 1, 0).unwrap();
        assert_eq!(m, vec![0.0, 0.0]);
        let up = KmcSetup::new(10, RateTable::exact(1.0, 0.0).unwrap(), InitState::AllUp, vec![1.0, 100.0]).unwrap();
        assert_eq!(kmc_run(&up, 1, 0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn open_chain_loses_defects_only_in_pairs() {
        let setup = KmcSetup::new(8, RateTable::exact(1.0, 0.0).unwrap(), InitState::FromDefects(vec![0, 3, 6]), vec![1e4])
            .unwrap()
            .open()
            .unwrap();
        // three walls: one always survives on an open chain
        for s in 0..20 {
            assert_eq!(kmc_run(&setup, 2, s).unwrap(), vec![1.0 / 8.0]);
        }
    }

    #[test]
    fn ensemble_matches_hierarchy() {
        let table = RateTable::glauber(1.0, 0.05).unwrap();
        let times = log_grid(0.1, 40.0, 12);
        let setup = KmcSetup::new(200, table, InitState::Random, times.clone()).unwrap();
        let res = ensemble(&setup, 200, 9).unwrap();
        let mut r0 = vec![0.0; 199];
        r0.iter_mut().for_each(|r| *r = 0.0);
        let exact = glauber_hierarchy(&table, &r0, &times).unwrap();
        for i in 0..times.len() {
            let z = (res.mean[i] - exact[i]) / res.stderr[i];
            assert!(z.abs() < 4.5, "t={} kmc {} exact {} z {z}", times[i], res.mean[i], exact[i]);
        }
    }

    #[test]
    fn hierarchy_reaches_ising_plateau() {
        let table = RateTable::glauber(1.0, 0.04).unwrap();
        let m = glauber_hierarchy(&table, &vec![0.0; 299], &[200.0]).unwrap();
        assert!((m[0] - ising_oracle(&table).m_s).abs() < 1e-6);
    }

    #[test]
    fn power_fit_on_synthetic_series() {
        let times = log_grid(1.0, 1e3, 30);
        for (c, p) in [(1.0, -0.5), (3.0, -1.0)] {
            let res = RunResult {
                mean: times.iter().map(|t: &f64| c * t.powf(p)).collect(),
                stderr: vec![0.0; times.len()],
                times: times.clone(),
                n_hist: 2,
                seed: 0,
            };
            let (e, _) = fit_power_exponent(&res, (1.0, 1e3)).unwrap();
            assert!((e - p).abs() < 1e-12);
        }
    }

    #[test]
    fn relaxation_on_hierarchy_curve() {
        let table = RateTable::glauber(1.0, 0.01).unwrap();
        let o = ising_oracle(&table);
        let times = log_grid(0.1, 20.0 * o.tau, 300);
        let m = glauber_hierarchy(&table, &vec![0.0; 1999], &times).unwrap();
        let res = RunResult { stderr: vec![1e-7; times.len()], mean: m, times, n_hist: 2, seed: 0 };
        let r = steady_and_relaxation(&res, &table).unwrap();
        assert!((r.m_s / o.m_s - 1.0).abs() < 1e-3);
        assert!((r.tau / o.tau - 1.0).abs() < 0.15, "tau {} vs {}", r.tau, o.tau);
        assert!(steady_and_relaxation(&res, &RateTable::glauber(1.0, 0.0).unwrap()).is_err());
    }
}
