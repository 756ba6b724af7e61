//! Benchmark driver: builds the test suite, runs the solvers over it,
//! scores traces for approximate stationarity, and renders data profiles.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use rayon::prelude::*;

use manifold_sampling::bench::{
    data_profile, first_solved_eval, profiles_to_csv, profiles_to_svg, ProfileCurve,
    ProfileEntry,
};
use manifold_sampling::problems::{build_benchmark, suite, BenchmarkInstance, BestPoints};
use manifold_sampling::solvers::{
    run_goombah, run_msp, CompositeProblem, RunTrace, SolverConfig,
};

#[derive(Parser)]
#[command(name = "msbench", about = "Benchmark driver for the manifold-sampling solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Msp,
    Goombah,
    GoombahNorecourse,
}

impl Method {
    const ALL: [Method; 3] = [Method::Msp, Method::Goombah, Method::GoombahNorecourse];

    fn label(self) -> &'static str {
        match self {
            Method::Msp => "msp",
            Method::Goombah => "goombah",
            Method::GoombahNorecourse => "goombah-norecourse",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one solver on one benchmark instance and write its trace.
    Run {
        #[arg(long, value_enum)]
        solver: Method,
        /// Instance id, e.g. `rosenbrock+h2`.
        #[arg(long)]
        instance: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Budget is this many times (n + 1).
        #[arg(long, default_value_t = 100)]
        budget_multiplier: usize,
        /// Use the bound-constrained variant of the instance.
        #[arg(long)]
        constrained: bool,
        /// Unconstrained results directory supplying the bound anchors.
        #[arg(long)]
        best_from: Option<PathBuf>,
        /// Trace output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run all solvers over the benchmark and write a results directory.
    Suite {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        budget_multiplier: usize,
        #[arg(long)]
        constrained: bool,
        #[arg(long)]
        best_from: Option<PathBuf>,
        /// Worker threads; default = all cores.
        #[arg(long)]
        jobs: Option<usize>,
        /// Restrict to the first 10 problems (desk scale).
        #[arg(long)]
        desk: bool,
    },
    /// Score traces in a results directory for approximate stationarity.
    Score {
        #[arg(long)]
        results: PathBuf,
        /// Stationarity tolerances.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1e-1, 1e-3, 1e-5])]
        tau: Vec<f64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Build data-profile CSVs and SVGs from score files.
    Profile {
        #[arg(long)]
        results: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1e-1, 1e-3, 1e-5])]
        tau: Vec<f64>,
        /// Horizontal extent of the profiles, in budget units.
        #[arg(long, default_value_t = 100.0)]
        alpha_max: f64,
    },
    /// Run quick self-checks of the solver and scoring stack.
    Verify,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("msbench: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run {
            solver,
            instance,
            seed,
            budget_multiplier,
            constrained,
            best_from,
            out,
        } => cmd_run(
            solver,
            &instance,
            seed,
            budget_multiplier,
            constrained,
            best_from.as_deref(),
            out.as_deref(),
        ),
        Command::Suite {
            out,
            seed,
            budget_multiplier,
            constrained,
            best_from,
            jobs,
            desk,
        } => cmd_suite(
            &out,
            seed,
            budget_multiplier,
            constrained,
            best_from.as_deref(),
            jobs,
            desk,
        ),
        Command::Score { results, tau, jobs } => cmd_score(&results, &tau, jobs),
        Command::Profile {
            results,
            tau,
            alpha_max,
        } => cmd_profile(&results, &tau, alpha_max),
        Command::Verify => cmd_verify(),
    }
}

fn build_instances(
    seed: u64,
    constrained: bool,
    best_from: Option<&Path>,
    desk: bool,
) -> Result<Vec<BenchmarkInstance>> {
    let mut problems = suite();
    if desk {
        problems.truncate(10);
    }
    let best = match (constrained, best_from) {
        (true, Some(dir)) => Some(collect_best_points(dir)?),
        (true, None) => bail!("--constrained requires --best-from <unconstrained results dir>"),
        _ => None,
    };
    Ok(build_benchmark(&problems, constrained, seed, best.as_ref())?)
}

/// Best final point per instance across all traced methods in a results
/// directory; these anchor the constrained variants' bounds.
fn collect_best_points(dir: &Path) -> Result<BestPoints> {
    let instances = load_instances(dir)?;
    let mut best: BestPoints = BTreeMap::new();
    for inst in &instances {
        let mut best_f = f64::INFINITY;
        let mut best_x = None;
        for method in Method::ALL {
            let path = trace_path(dir, method.label(), &inst.id);
            if !path.exists() {
                continue;
            }
            let trace = RunTrace::from_jsonl(&fs::read_to_string(&path)?)?;
            if trace.final_f < best_f {
                best_f = trace.final_f;
                best_x = Some(trace.final_x.clone());
            }
        }
        let x = best_x
            .with_context(|| format!("no traces found for {} under {}", inst.id, dir.display()))?;
        best.insert(inst.id.clone(), x);
    }
    Ok(best)
}

fn load_instances(dir: &Path) -> Result<Vec<BenchmarkInstance>> {
    let path = dir.join("instances.json");
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn trace_path(dir: &Path, method: &str, id: &str) -> PathBuf {
    dir.join("traces").join(method).join(format!("{id}.jsonl"))
}

fn solve_instance(
    inst: &BenchmarkInstance,
    method: Method,
    budget_multiplier: usize,
) -> Result<RunTrace> {
    let h = inst.h_spec.build();
    let prob = CompositeProblem {
        mapping: &inst.problem,
        h: h.as_ref(),
        x0: inst.problem.x0.clone(),
        lower: inst.problem.lower.clone(),
        upper: inst.problem.upper.clone(),
    };
    let iseed = manifold_sampling::problems::instance_seed(
        &inst.problem.name,
        inst.h_kind,
        inst.seed,
    );
    let mut cfg = SolverConfig::default_for(&prob.x0);
    cfg.eval_budget = budget_multiplier * (prob.x0.len() + 1);
    cfg.seed = iseed;
    let trace = match method {
        Method::Msp => run_msp(&prob, &cfg),
        Method::Goombah => run_goombah(&prob, &cfg, true),
        Method::GoombahNorecourse => run_goombah(&prob, &cfg, false),
    }?;
    Ok(trace)
}

fn cmd_run(
    solver: Method,
    instance_id: &str,
    seed: u64,
    budget_multiplier: usize,
    constrained: bool,
    best_from: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let instances = build_instances(seed, constrained, best_from, false)?;
    let inst = instances
        .iter()
        .find(|i| i.id == instance_id)
        .with_context(|| {
            let known: Vec<&str> = instances.iter().map(|i| i.id.as_str()).collect();
            format!("unknown instance {instance_id}; known: {}", known.join(", "))
        })?;
    let trace = solve_instance(inst, solver, budget_multiplier)?;
    let text = trace.to_jsonl()?;
    match out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn with_thread_pool<T: Send>(
    jobs: Option<usize>,
    f: impl FnOnce() -> Result<T> + Send,
) -> Result<T> {
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building thread pool")?
            .install(f),
        None => f(),
    }
}

fn cmd_suite(
    out: &Path,
    seed: u64,
    budget_multiplier: usize,
    constrained: bool,
    best_from: Option<&Path>,
    jobs: Option<usize>,
    desk: bool,
) -> Result<()> {
    let instances = build_instances(seed, constrained, best_from, desk)?;
    fs::create_dir_all(out)?;
    fs::write(
        out.join("instances.json"),
        serde_json::to_string_pretty(&instances)?,
    )?;
    for method in Method::ALL {
        fs::create_dir_all(out.join("traces").join(method.label()))?;
    }
    let tasks: Vec<(usize, Method)> = (0..instances.len())
        .flat_map(|i| Method::ALL.into_iter().map(move |m| (i, m)))
        .collect();
    with_thread_pool(jobs, || {
        tasks
            .par_iter()
            .try_for_each(|&(i, method)| -> Result<()> {
                let inst = &instances[i];
                let trace = solve_instance(inst, method, budget_multiplier)
                    .with_context(|| format!("{} on {}", method.label(), inst.id))?;
                fs::write(trace_path(out, method.label(), &inst.id), trace.to_jsonl()?)?;
                Ok(())
            })
    })?;
    println!(
        "suite complete: {} instances x {} methods -> {}",
        instances.len(),
        Method::ALL.len(),
        out.display()
    );
    Ok(())
}

fn score_seed(inst: &BenchmarkInstance) -> u64 {
    // Shared across methods so every solver is scored on the same samples.
    manifold_sampling::problems::instance_seed(&inst.problem.name, inst.h_kind, inst.seed)
        ^ 0x5eed_5c0e
}

fn cmd_score(results: &Path, taus: &[f64], jobs: Option<usize>) -> Result<()> {
    let instances = load_instances(results)?;
    fs::create_dir_all(results.join("scores"))?;
    for method in Method::ALL {
        let rows: Vec<(usize, Vec<Option<usize>>)> = with_thread_pool(jobs, || {
            (0..instances.len())
                .into_par_iter()
                .map(|i| -> Result<(usize, Vec<Option<usize>>)> {
                    let inst = &instances[i];
                    let path = trace_path(results, method.label(), &inst.id);
                    let trace = RunTrace::from_jsonl(
                        &fs::read_to_string(&path)
                            .with_context(|| format!("reading {}", path.display()))?,
                    )?;
                    let h = inst.h_spec.build();
                    let solved = taus
                        .iter()
                        .map(|&tau| {
                            first_solved_eval(
                                &inst.problem,
                                h.as_ref(),
                                &inst.problem.lower,
                                &inst.problem.upper,
                                &trace,
                                tau,
                                score_seed(inst),
                            )
                        })
                        .collect::<manifold_sampling::Result<Vec<_>>>()?;
                    Ok((i, solved))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let mut rows = rows;
        rows.sort_by_key(|(i, _)| *i);
        let mut csv = String::from("instance,tau,first_solved_t\n");
        for (i, solved) in rows {
            for (tau, t) in taus.iter().zip(solved) {
                let cell = t.map(|v| v.to_string()).unwrap_or_default();
                csv.push_str(&format!("{},{},{}\n", instances[i].id, tau, cell));
            }
        }
        fs::write(
            results.join("scores").join(format!("{}.csv", method.label())),
            csv,
        )?;
    }
    println!("scored {} instances at tau = {:?}", instances.len(), taus);
    Ok(())
}

fn read_scores(
    results: &Path,
    method: &str,
    instances: &[BenchmarkInstance],
) -> Result<BTreeMap<(String, String), Option<usize>>> {
    let path = results.join("scores").join(format!("{method}.csv"));
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading {} (run `score` first)", path.display()))?;
    let dims: BTreeMap<&str, usize> = instances
        .iter()
        .map(|i| (i.id.as_str(), i.problem.n()))
        .collect();
    let mut out = BTreeMap::new();
    for line in text.lines().skip(1) {
        let mut parts = line.split(',');
        let (Some(id), Some(tau), Some(cell)) = (parts.next(), parts.next(), parts.next())
        else {
            bail!("malformed score row in {}: {line}", path.display());
        };
        if !dims.contains_key(id) {
            bail!("score file {} mentions unknown instance {id}", path.display());
        }
        let solved = if cell.is_empty() {
            None
        } else {
            Some(cell.parse::<usize>()?)
        };
        out.insert((id.to_string(), tau.to_string()), solved);
    }
    Ok(out)
}

fn cmd_profile(results: &Path, taus: &[f64], alpha_max: f64) -> Result<()> {
    let instances = load_instances(results)?;
    fs::create_dir_all(results.join("profiles"))?;
    for &tau in taus {
        let tau_key = format!("{tau}");
        let mut curves: Vec<ProfileCurve> = Vec::new();
        for method in Method::ALL {
            let scores = read_scores(results, method.label(), &instances)?;
            let entries: Vec<ProfileEntry> = instances
                .iter()
                .map(|inst| -> Result<ProfileEntry> {
                    let key = (inst.id.clone(), tau_key.clone());
                    let solved = scores.get(&key).copied().with_context(|| {
                        format!(
                            "scores for {} lack tau = {tau_key} on {}; re-run `score --tau`",
                            method.label(),
                            inst.id
                        )
                    })?;
                    Ok(ProfileEntry {
                        instance_id: inst.id.clone(),
                        dimension: inst.problem.n(),
                        solved_at: solved,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            curves.push(data_profile(method.label(), tau, &entries, alpha_max));
        }
        let dir = results.join("profiles");
        fs::write(
            dir.join(format!("profile_tau={tau_key}.csv")),
            profiles_to_csv(&curves),
        )?;
        fs::write(
            dir.join(format!("profile_tau={tau_key}.svg")),
            profiles_to_svg(&curves, alpha_max),
        )?;
    }
    println!("profiles written for tau = {taus:?}");
    Ok(())
}

fn cmd_verify() -> Result<()> {
    use manifold_sampling::selections::MaxAffine;
    use manifold_sampling::solvers::run_msp;

    struct Identity1d;
    impl manifold_sampling::problems::VectorMapping for Identity1d {
        fn input_dim(&self) -> usize {
            1
        }
        fn output_dim(&self) -> usize {
            1
        }
        fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
            x.clone()
        }
    }

    let mut failures = 0;
    let mut check = |name: &str, ok: bool| {
        println!("{}: {name}", if ok { "ok" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    // Kink problem: |x| from 0.5 must reach the kink within 50 evaluations.
    let mapping = Identity1d;
    let h = MaxAffine::abs_1d();
    let prob = CompositeProblem {
        mapping: &mapping,
        h: &h,
        x0: DVector::from_column_slice(&[0.5]),
        lower: DVector::from_column_slice(&[f64::NEG_INFINITY]),
        upper: DVector::from_column_slice(&[f64::INFINITY]),
    };
    let mut cfg = SolverConfig::default_for(&prob.x0);
    cfg.eval_budget = 50;
    let trace = run_msp(&prob, &cfg)?;
    check("kink problem reaches |x| <= 1e-6", trace.final_f <= 1e-6);

    // Determinism across repeated runs.
    let again = run_msp(&prob, &cfg)?;
    check(
        "repeated runs are byte-identical",
        trace.to_jsonl()? == again.to_jsonl()?,
    );

    // One real benchmark instance end to end.
    let instances = build_instances(0, false, None, true)?;
    let inst = &instances[0];
    let t = solve_instance(inst, Method::Msp, 20)?;
    check(
        "benchmark instance produces a monotone best-so-far",
        t.evals.windows(2).all(|w| w[1].best_f <= w[0].best_f),
    );
    check(
        "budget respected",
        t.evals.len() <= 20 * (inst.problem.n() + 1),
    );

    if failures > 0 {
        bail!("{failures} verification check(s) failed");
    }
    Ok(())
}
