//! Built-in desk-scale configurations for the figures.

use crate::config::RawConfig;
use crate::CliError;

pub struct Recipe {
    pub name: &'static str,
    pub about: &'static str,
    pub toml: &'static str,
}

pub const RECIPES: &[Recipe] = &[
    Recipe {
        name: "fig2-small",
        about: "L=4 pair-jump relaxation from |2,0,2,0>: trajectories overlaid on the exact master equation",
        toml: r#"
experiment = "trajectory-run"
seed = 1
output_dir = "out/fig2-small"

[parameters]
sites = 4
n_max = 4
init = "2,0"
kappa = 1.0
ref_site = 0
t_final = 20.0
sample_interval = 0.5
n_traj = 200
compare_exact = true
"#,
    },
    Recipe {
        name: "fig2-lightcone",
        about: "TEBD light cone: equilibrium time of pair correlators versus distance, L=12 at density 1",
        toml: r#"
experiment = "tebd-run"
seed = 1
output_dir = "out/fig2-lightcone"

[parameters]
sites = 12
n_max = 2
init = "2,0"
kappa = 1.0
t_final = 10.0
sample_interval = 0.25
n_traj = 100
chi_max = 32
svd_cutoff = 1e-8
"#,
    },
    Recipe {
        name: "fig3-classical",
        about: "exact-rate KMC of defect annihilation, L=100, 1000 histories; fits the -1/2 power law",
        toml: r#"
experiment = "glauber-run"
seed = 1
output_dir = "out/fig3-classical"

[parameters]
sites = 100
mode = "exact"
gamma = 1.0
h = 0.0
n_hist = 1000
t_min = 0.1
t_final = 1000.0
n_times = 61
fit_t0 = 10.0
fit_t1 = 1000.0
"#,
    },
    Recipe {
        name: "fig3-quantum-agreement",
        about: "TEBD defect density with pair jumps and bond healing against classical KMC, L=10",
        toml: r#"
experiment = "tebd-run"
seed = 1
output_dir = "out/fig3-quantum-agreement"

[parameters]
sites = 10
n_max = 2
init = "1,0"
kappa = 1.0
heal = "bonds"
gamma = 1.0
t_final = 10.0
sample_interval = 0.5
n_traj = 400
compare_kmc = true
kmc_histories = 4000
"#,
    },
    Recipe {
        name: "fig3d-healing-comparison",
        about: "steady pair correlators versus distance for ideal, dirty and healed chains, L=12 at density 0.5",
        toml: r#"
experiment = "tebd-run"
seed = 1
output_dir = "out/fig3d-healing-comparison"

[parameters]
sites = 12
n_max = 2
init = "2,0,0,0"
kappa = 1.0
heal = "bonds"
gamma = 1.0
noise = 0.05
t_final = 20.0
sample_interval = 0.5
steady_from = 10.0
n_traj = 50
scenario = "healing-comparison"
"#,
    },
    Recipe {
        name: "cqed-sweep",
        about: "circuit-QED reduction: jump and Kerr checks, Schrieffer-Wolff scaling, kappa_f and delta sweeps",
        toml: r#"
experiment = "cqed-validate"
seed = 1
output_dir = "out/cqed-sweep"

[parameters]
n_max = 2
g1 = 1.0
g2 = 1.0
delta1 = 20.0
delta2 = 20.0
kappa_f = 1.0
sweep = true
"#,
    },
];

pub fn find(name: &str) -> Option<&'static Recipe> {
    RECIPES.iter().find(|r| r.name == name)
}

pub fn load(name: &str) -> Result<RawConfig, CliError> {
    let r = find(name).ok_or_else(|| {
        let known: Vec<_> = RECIPES.iter().map(|r| r.name).collect();
        CliError::Validation(format!("unknown recipe `{name}` (known: {})", known.join(", ")))
    })?;
    RawConfig::from_toml(r.toml)
}
