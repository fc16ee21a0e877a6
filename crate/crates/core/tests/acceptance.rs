//! End-to-end acceptance run: one PASS/FAIL line per criterion, exit
//! status 1 if any fails. Tolerances, seeds and sample sizes are pinned
//! below.

use std::f64::consts::PI;
use std::path::Path;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rayon::prelude::*;

use lamperti_lab::cli::{
    dw_scaling_report, generator_battery, generator_scaling_rows, main_with_args, run_battery, run_fv_checks,
};
use lamperti_lab::coalescent::{simulate_coalescent, simulate_with_table, Partition, RateTable};
use lamperti_lab::dual::{empirical_cf, NestedTruncation};
use lamperti_lab::duality::standard_battery;
use lamperti_lab::generator::{GateauxConfig, OPERATOR_TOL};
use lamperti_lab::lambda::{LambdaSpec, LevyTriplet, SMHParams};
use lamperti_lab::lamperti::{roundtrip_error, sssmh_residual};
use lamperti_lab::levy::{empirical_sup_moment, simulate_levy, sup_moment_bound};
use lamperti_lab::measures::DiscreteMeasure;
use lamperti_lab::population::{simulate_dw, Construction, ForwardSim, PopulationScenario};
use lamperti_lab::rng::stream;
use lamperti_lab::stats::{ks_two_sample, RunningStats};

const Z_MAX: f64 = 3.0;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

// 1. Operator identity on 50 randomized configurations.
fn operator_duality() -> Verdict {
    let rows = generator_battery(50, 20_241, &GateauxConfig::default()).expect("generator battery");
    let worst = rows.iter().map(|r| r.rel_diff).fold(0.0, f64::max);
    let pass = rows.len() == 50 && rows.iter().all(|r| r.rel_diff < OPERATOR_TOL);
    verdict(
        pass,
        format!("50 configs, max rel diff {worst:.2e} (tol {OPERATOR_TOL:e})"),
    )
}

// 2. Forward/dual moment duality battery, 10^5 replicas per side.
fn duality_battery() -> Verdict {
    let exps = standard_battery(100_000, 77).expect("battery");
    let n = exps.len();
    let (rows, pass) = run_battery(&exps).expect("run battery");
    let worst = rows
        .iter()
        .take(n)
        .max_by(|a, b| a.z.abs().total_cmp(&b.z.abs()))
        .unwrap();
    let failed = rows.iter().take(n).filter(|r| !r.pass).count();
    verdict(
        pass && n >= 20,
        format!(
            "{n} experiments, {failed} over |z| {Z_MAX}, max |z| {:.2} ({})",
            worst.z.abs(),
            worst.id
        ),
    )
}

// 3. Frequency-process duality: Kingman closed form and Beta(1.5), p = 3.
fn fv_duality() -> Verdict {
    // two-state dual chain: P(two lineages share a type at t) =
    // 1 - (1 - f0) e^{-t} with f0 = 1/2 for two equally frequent types
    let oracle = 1.0 - 0.5 * (-1.0f64).exp();
    let rows = run_fv_checks(100_000, 31, 32, 0.05).expect("fv checks");
    let closed = rows.iter().find(|r| r.id == "kingman_p2:closed_form").unwrap();
    let beta = rows.iter().find(|r| r.id == "beta_p3").unwrap();
    let within = (closed.lhs_mean - oracle).abs() < Z_MAX * closed.lhs_se;
    let pass = within && (closed.rhs_mean - oracle).abs() < 1e-15 && rows.iter().all(|r| r.pass);
    verdict(
        pass,
        format!(
            "Kingman {:.4} +- {:.4} vs {oracle:.5}; Beta(1.5) p=3 z = {:.2}",
            closed.lhs_mean, closed.lhs_se, beta.z
        ),
    )
}

// 4. Kingman absorption time from 10 blocks.
fn kingman_absorption() -> Verdict {
    let params = SMHParams::new(0.0, 1.0, LambdaSpec::zero()).unwrap();
    let pi0 = Partition::singletons(10);
    let stats: RunningStats = (0..100_000u64)
        .into_par_iter()
        .map(|r| {
            let path = simulate_coalescent(&pi0, &params, f64::INFINITY, &mut stream(404, 3, r)).unwrap();
            path.absorption_time().unwrap()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect();
    // sum_{k=2}^{10} 1 / C(k, 2)
    let oracle: f64 = (2..=10).map(|k| 2.0 / (k * (k - 1)) as f64).sum();
    let pass = (stats.mean() - oracle).abs() < Z_MAX * stats.std_err() && (oracle - 1.8).abs() < 1e-12;
    verdict(
        pass,
        format!("mean {:.4} +- {:.4} vs {oracle}", stats.mean(), stats.std_err()),
    )
}

/// `Gamma(x)` for positive integers and half-integers.
fn gamma_half(x: f64) -> f64 {
    let (mut g, mut y) = if (x - x.round()).abs() < 1e-12 {
        (1.0, 1.0)
    } else {
        (PI.sqrt(), 0.5)
    };
    while y < x - 1e-12 {
        g *= y;
        y += 1.0;
    }
    g
}

// 5. First-event decomposition of the Beta(1.5) coalescent.
fn beta_merger_rates() -> Verdict {
    let (beta, c) = (1.5, 1.0);
    let params = SMHParams::new(0.0, 0.0, LambdaSpec::beta(beta, c).unwrap()).unwrap();
    let n = 100_000u64;
    let mut worst = 0.0f64;
    for j in 3..=5usize {
        let pi0 = Partition::singletons(j);
        let table = RateTable::new(j, &params).unwrap();
        let firsts: Vec<(f64, usize)> = (0..n)
            .into_par_iter()
            .map(|r| {
                let path =
                    simulate_with_table(&pi0, &params, &table, f64::INFINITY, &mut stream(505, j as u64, r)).unwrap();
                let e = &path.events[0];
                (e.time, e.blocks_before - e.blocks_after + 1)
            })
            .collect();
        let choose = |n: usize, k: usize| (0..k).fold(1.0, |a, i| a * (n - i) as f64 / (i + 1) as f64);
        // C(j,i) c B(i - beta, j - i + beta)
        let rates: Vec<f64> = (2..=j)
            .map(|i| {
                let (x, y) = (i as f64 - beta, (j - i) as f64 + beta);
                choose(j, i) * c * gamma_half(x) * gamma_half(y) / gamma_half(x + y)
            })
            .collect();
        let total: f64 = rates.iter().sum();
        let mean_wait: RunningStats = firsts.iter().map(|f| f.0).collect();
        worst = worst.max(((mean_wait.mean() - 1.0 / total) / mean_wait.std_err()).abs());
        for (k, &rate) in rates.iter().enumerate() {
            let i = k + 2;
            // share of i-mergers among first events
            let frac = firsts.iter().filter(|f| f.1 == i).count() as f64 / n as f64;
            let se = (rate / total * (1.0 - rate / total) / n as f64).sqrt();
            worst = worst.max(((frac - rate / total) / se).abs());
        }
    }
    verdict(
        worst < Z_MAX,
        format!("j = 3..5, 10^5 first events each, max |z| {worst:.2}"),
    )
}

fn psi_oracle(theta: f64, drift: f64, s: f64, atoms: &[(f64, f64)]) -> Complex64 {
    let mut psi = Complex64::new(0.5 * s * s * theta * theta, -drift * theta);
    for &(z, m) in atoms {
        let y = -(1.0 - z).ln();
        let comp = if z <= 0.5 {
            Complex64::new(0.0, theta * y)
        } else {
            Complex64::new(0.0, 0.0)
        };
        psi += m / (z * z) * (1.0 - Complex64::new(0.0, theta * y).exp() + comp);
    }
    psi
}

/// Name, drift, Gaussian sigma, jump atoms.
type Triplet<'a> = (&'a str, f64, f64, &'a [(f64, f64)]);

// 6. Characteristic function of the Levy marginal.
fn levy_cf() -> Verdict {
    let atoms = vec![(0.3, 0.5), (0.7, 0.2)];
    let triplets: [Triplet; 3] = [
        ("drift", 0.7, 0.0, &[]),
        ("gaussian", 0.0, 1.3, &[]),
        ("atoms", 0.0, 0.0, &atoms),
    ];
    let (mut pass, mut worst_dev, mut worst_z) = (true, 0.0f64, 0.0f64);
    for (k, (_, d, s, at)) in triplets.iter().enumerate() {
        let spec = if at.is_empty() {
            LambdaSpec::zero()
        } else {
            LambdaSpec::atoms(at.to_vec()).unwrap()
        };
        let tr = LevyTriplet::new(*d, *s, spec);
        let sample: Vec<f64> = (0..100_000u64)
            .into_par_iter()
            .map(|r| {
                *simulate_levy(&tr, 0.0, 1.0, 1.0, 0.05, &mut stream(606, k as u64, r))
                    .unwrap()
                    .values
                    .last()
                    .unwrap()
            })
            .collect();
        for theta in [0.5, 1.0, 2.0] {
            let (emp, se) = empirical_cf(&sample, theta);
            let exact = (-psi_oracle(theta, *d, *s, at)).exp();
            let dev = (emp - exact).norm();
            pass &= dev < Z_MAX * se + 0.01;
            worst_dev = worst_dev.max(dev);
            if se > 0.0 {
                worst_z = worst_z.max(dev / se);
            }
        }
    }
    verdict(
        pass,
        format!("3 triplets x 3 thetas, max |cf - exact| {worst_dev:.4} ({worst_z:.2} SE)"),
    )
}

// 7. Lamperti round trip and time-change residual on simulated paths.
fn lamperti_roundtrip() -> Verdict {
    let cases = [
        (0.0, 1.0, LambdaSpec::zero(), 1.0),
        (0.3, 0.5, LambdaSpec::atoms(vec![(0.4, 1.0)]).unwrap(), 0.5),
        (-0.2, 0.0, LambdaSpec::beta(1.5, 1.0).unwrap(), -0.5),
    ];
    let (mut err, mut res) = (0.0f64, 0.0f64);
    for (k, (kappa, sigma, lambda, alpha)) in cases.into_iter().enumerate() {
        let params = SMHParams::new(kappa, sigma, lambda).unwrap();
        let nu0 = DiscreteMeasure::from_labels(&[(0, 0.5), (1, 1.0)]).unwrap();
        let mut scn = PopulationScenario::new(params, nu0, 1.0);
        scn.alpha = alpha;
        scn.eps_trunc = 0.05;
        scn.n_particles = 50;
        let sim = ForwardSim::new(&scn, Construction::Map).unwrap();
        for r in 0..300u64 {
            let run = sim.ss_run(&mut stream(707, k as u64, r)).unwrap();
            err = err.max(roundtrip_error(&run.nu, alpha).unwrap());
            res = res.max(sssmh_residual(&run.mu, &run.nu, alpha).unwrap());
        }
    }
    verdict(
        err < 1e-10 && res < 1e-8,
        format!("900 paths, max reconstruction error {err:.2e}, max residual {res:.2e}"),
    )
}

// 8. Index-1 scaling of the DW total mass and the generator identity.
fn self_similarity() -> Verdict {
    let mu0 = DiscreteMeasure::from_labels(&[(0, 0.5), (1, 0.5)]).unwrap();
    let report = dw_scaling_report(&mu0, 1.0, 2.0, 1.0, 0.005, 8, &[0.25, 0.5, 1.0], 20_000, 808).unwrap();
    let rows = generator_scaling_rows(12, 808, 2.0, &GateauxConfig::default()).unwrap();
    let gen = rows.iter().map(|r| r.rel_diff).fold(0.0, f64::max);
    let pass = report.pass(Z_MAX) && gen < 1e-6;
    verdict(
        pass,
        format!(
            "MC max |z| {:.2} at a = 2; generator max rel err {gen:.2e}",
            report.max_abs_z()
        ),
    )
}

// 9. DW moments and agreement with the gamma_1 transform of the SMH process.
fn dw_moments() -> Verdict {
    let (sigma, t) = (1.0, 1.0);
    let mu0 = DiscreteMeasure::from_labels(&[(0, 0.4), (1, 0.6)]).unwrap();
    let n = 20_000u64;
    let dw: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|r| {
            simulate_dw(&mu0, sigma, t, 0.002, 4, &mut stream(909, 0, r))
                .unwrap()
                .final_state()
                .total_mass()
        })
        .collect();
    let stats: RunningStats = dw.iter().copied().collect();
    let m = stats.mean();
    let var = stats.variance();
    let m4 = dw.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n as f64;
    let var_se = ((m4 - var * var) / n as f64).sqrt();
    // Feller diffusion with generator (sigma^2 / 2) x f'': E = x0, Var = sigma^2 x0 t
    let (x0, want_var) = (1.0, sigma * sigma * 1.0 * t);
    let z_mean = (m - x0) / stats.std_err();
    let z_var = (var - want_var) / var_se;

    let params = SMHParams::new(0.0, sigma, LambdaSpec::zero()).unwrap();
    let mut scn = PopulationScenario::new(params, mu0, t);
    scn.alpha = 1.0;
    scn.dt = 0.002;
    scn.n_particles = 4;
    let sim = ForwardSim::new(&scn, Construction::Map).unwrap();
    let ss: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|r| {
            sim.ss_run(&mut stream(909, 1, r))
                .unwrap()
                .mu
                .final_state()
                .total_mass()
        })
        .collect();
    let (d, p) = ks_two_sample(&dw, &ss);
    let pass = z_mean.abs() < Z_MAX && z_var.abs() < Z_MAX && p > 0.01;
    verdict(
        pass,
        format!("mean z {z_mean:.2}, variance z {z_var:.2}, KS D {d:.4} p {p:.3}"),
    )
}

// 10. Exponential sup-moment bound.
fn moment_bound() -> Verdict {
    let triplets = [
        LevyTriplet::new(0.2, 0.8, LambdaSpec::zero()),
        LevyTriplet::new(-0.1, 0.0, LambdaSpec::atoms(vec![(0.3, 0.5), (0.6, 0.1)]).unwrap()),
        LevyTriplet::new(0.0, 0.5, LambdaSpec::beta(1.5, 0.5).unwrap()),
    ];
    let mut worst_ratio = 0.0f64;
    for (k, tr) in triplets.iter().enumerate() {
        for q in [1.0, 2.0] {
            let (emp, _) = empirical_sup_moment(q, tr, 0.0, 1.0, 0.01, 0.05, 100_000, 1010 + k as u64).unwrap();
            let bound = sup_moment_bound(q, tr, 0.0, 1.0, 0.05).unwrap();
            worst_ratio = worst_ratio.max(emp / bound);
        }
    }
    verdict(
        worst_ratio <= 1.0,
        format!("3 triplets x q in {{1,2}}, max empirical / bound = {worst_ratio:.3}"),
    )
}

// 11. Cauchy trend of nested truncations.
fn cauchy_trend() -> Verdict {
    let params = SMHParams::new(0.0, 0.0, LambdaSpec::beta(1.5, 1.0).unwrap()).unwrap();
    let eps = [0.1, 0.05, 0.025];
    let means: Vec<f64> = eps
        .iter()
        .map(|&e| {
            let nested = NestedTruncation::new(8, &params, e).unwrap();
            let s: Vec<f64> = (0..100_000u64)
                .into_par_iter()
                .map(|r| nested.sup_distance(1.0, &mut stream(1111, 0, r)).unwrap().powi(3))
                .collect();
            s.iter().sum::<f64>() / s.len() as f64
        })
        .collect();
    let pass = means.windows(2).all(|w| w[1] < w[0]);
    verdict(
        pass,
        format!(
            "E[sup d^3] at eps 0.1/0.05/0.025: {:.3e} > {:.3e} > {:.3e}",
            means[0], means[1], means[2]
        ),
    )
}

fn run_cli(args: &[&str], out: &Path) -> i32 {
    let mut full = vec!["lamperti-lab"];
    full.extend_from_slice(args);
    full.extend_from_slice(&["--threads", "1", "--out", out.to_str().unwrap()]);
    main_with_args(full)
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

// 12. Byte-identical CSV for identical (config, seed) at one thread.
fn reproducibility() -> Verdict {
    let runs: [&[&str]; 7] = [
        &["simulate-coalescent", "--seed", "12", "--replicas", "200"],
        &[
            "simulate-levy",
            "--seed",
            "12",
            "--replicas",
            "200",
            "--set",
            "params.lambda.kind=\"beta\"",
        ],
        &["simulate-population", "smh", "--seed", "12", "--replicas", "20"],
        &["simulate-population", "ss", "--seed", "12", "--replicas", "20"],
        &["simulate-dual", "--seed", "12", "--replicas", "200"],
        &[
            "check-duality",
            "--seed",
            "12",
            "--replicas",
            "500",
            "--set",
            "duality.only=[\"atom_p2\"]",
        ],
        &["check-generators", "--seed", "12", "--set", "generators.configs=6"],
    ];
    let mut files = 0;
    for args in runs {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let (ca, cb) = (run_cli(args, a.path()), run_cli(args, b.path()));
        let (fa, fb) = (csv_files(a.path()), csv_files(b.path()));
        if ca != 0 || cb != 0 || fa.is_empty() || fa != fb {
            return verdict(false, format!("{} differs (exit {ca}/{cb})", args.join(" ")));
        }
        files += fa.len();
    }
    verdict(
        true,
        format!(
            "{} commands, {files} CSV files byte-identical across two runs",
            runs.len()
        ),
    )
}

type Criterion = (&'static str, Duration, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 12] = [
        ("operator duality", Duration::from_secs(60), operator_duality),
        ("duality battery", Duration::from_secs(20 * 60), duality_battery),
        ("FV-coalescent duality", Duration::from_secs(5 * 60), fv_duality),
        ("Kingman absorption time", Duration::from_secs(10), kingman_absorption),
        ("Beta merger rates", Duration::from_secs(60), beta_merger_rates),
        ("Levy marginal", Duration::from_secs(2 * 60), levy_cf),
        ("Lamperti round trip", Duration::from_secs(10), lamperti_roundtrip),
        ("self-similarity", Duration::from_secs(5 * 60), self_similarity),
        ("DW moments", Duration::from_secs(5 * 60), dw_moments),
        ("moment bound", Duration::from_secs(2 * 60), moment_bound),
        ("truncation Cauchy trend", Duration::from_secs(5 * 60), cauchy_trend),
        ("reproducibility", Duration::from_secs(5 * 60), reproducibility),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, budget, run)) in criteria.iter().enumerate() {
        let n = k + 1;
        if !filter.is_empty() && !filter.iter().any(|f| *f == n.to_string() || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let v = run();
        let took = start.elapsed();
        let pass = v.pass && took <= *budget;
        failed += !pass as usize;
        println!(
            "criterion {n:2} {name}: {} ({}; {:.1}s of {}s)",
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
