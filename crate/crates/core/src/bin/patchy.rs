#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use patchy::pipeline::{self, FeedbackFile};
use patchy::scenario::{Built, Scenario};
use patchy::simulator::runs_csv;
use patchy::{svg, Error};

#[derive(Parser)]
#[command(name = "patchy", version, about = "Patchy feedback synthesis under state constraints")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the hypotheses on S and the regularity of f.
    Check(Opts),
    /// Build the patchy feedback and write feedback.json.
    Synthesize(Opts),
    /// Run the closed loop from the initial grid; writes runs.csv and summary.json.
    Simulate(Opts),
    /// Perturbation ladder; writes perturb.json with the largest all-pass level.
    Perturb(Opts),
    /// Draw S, S_r̃, Σ^δ, patches and grid runs to scene.svg.
    Render(Opts),
}

#[derive(clap::Args)]
struct Opts {
    #[arg(long)]
    scenario: PathBuf,
    /// Defaults to <out>/feedback.json.
    #[arg(long)]
    feedback: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the scenario time step.
    #[arg(long)]
    dt: Option<f64>,
}

enum Fail {
    /// Bad input: exit 2.
    Usage(String),
    /// A check or run did not certify: exit 1.
    Verify(String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        match e {
            Error::Scenario(_) | Error::Json(_) | Error::Io(_) | Error::RenderDimension | Error::InvalidSet(_) => {
                Fail::Usage(e.to_string())
            }
            other => Fail::Verify(other.to_string()),
        }
    }
}

type Res<T> = std::result::Result<T, Fail>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Check(o) => check(&o),
        Cmd::Synthesize(o) => synthesize(&o),
        Cmd::Simulate(o) => simulate(&o),
        Cmd::Perturb(o) => perturb(&o),
        Cmd::Render(o) => render(&o),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Verify(m)) => {
            eprintln!("verification failed: {m}");
            ExitCode::from(1)
        }
        Err(Fail::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn load(o: &Opts) -> Res<(Scenario, Built)> {
    let mut sc = Scenario::load(&o.scenario).map_err(|e| Fail::Usage(format!("{}: {e}", o.scenario.display())))?;
    if let Some(seed) = o.seed {
        sc.seed = seed;
    }
    if let Some(dt) = o.dt {
        if !(dt > 0.0) {
            return Err(Fail::Usage("--dt must be positive".into()));
        }
        sc.simulation.dt = dt;
    }
    let b = sc.build()?;
    Ok((sc, b))
}

fn load_feedback(o: &Opts, b: &Built) -> Res<FeedbackFile> {
    let path = o.feedback.clone().unwrap_or_else(|| o.out.join("feedback.json"));
    let text = fs::read_to_string(&path).map_err(|e| Fail::Usage(format!("{}: {e}", path.display())))?;
    let f = FeedbackFile::from_json(&text).map_err(|e| Fail::Usage(format!("{}: {e}", path.display())))?;
    f.matches(b)?;
    Ok(f)
}

fn write(dir: &Path, name: &str, text: &str) -> Res<()> {
    fs::create_dir_all(dir).map_err(|e| Fail::Usage(format!("{}: {e}", dir.display())))?;
    let p = dir.join(name);
    fs::write(&p, text).map_err(|e| Fail::Usage(format!("{}: {e}", p.display())))
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

fn check(o: &Opts) -> Res<()> {
    let (sc, b) = load(o)?;
    let out = pipeline::check(&sc, &b);
    println!("{}", json(&out).trim_end());
    if !out.pass {
        let w: Vec<String> = out.hypotheses.witness_failures.iter().map(|w| format!("{:?}: {}", w.point, w.reason)).collect();
        return Err(Fail::Verify(format!("hypotheses not certified; witnesses: {}", w.join("; "))));
    }
    Ok(())
}

fn synthesize(o: &Opts) -> Res<()> {
    let (sc, b) = load(o)?;
    let ck = pipeline::check(&sc, &b);
    if !ck.pass {
        return Err(Fail::Verify("check failed; run `patchy check` for witnesses".into()));
    }
    let (file, _) = pipeline::synthesize(&sc, &b)?;
    write(&o.out, "feedback.json", &(file.to_json()? + "\n"))?;
    println!("{}", json(&file.report).trim_end());
    Ok(())
}

fn simulate(o: &Opts) -> Res<()> {
    let (sc, b) = load(o)?;
    let f = load_feedback(o, &b)?;
    let (runs, summary) = pipeline::simulate(&sc, &b, &f, sc.simulation.dt)?;
    write(&o.out, "runs.csv", &runs_csv(&runs))?;
    write(&o.out, "summary.json", &json(&summary))?;
    let st = &summary.stabilization;
    println!("{}/{} runs reached the target inside S; monotone switching: {}", st.passed, st.total, summary.monotone_ok);
    if !summary.pass {
        return Err(Fail::Verify(format!("{} of {} runs failed", st.total - st.passed, st.total)));
    }
    Ok(())
}

fn perturb(o: &Opts) -> Res<()> {
    let (sc, b) = load(o)?;
    let f = load_feedback(o, &b)?;
    let rep = pipeline::perturb_ladder(&sc, &b, &f, sc.simulation.dt)?;
    write(&o.out, "perturb.json", &json(&rep))?;
    println!("{:>10} {:>8} {:>8} {:>10} {:>10}", "level", "runs", "passed", "max_bv", "max_l1");
    for l in &rep.levels {
        println!("{:>10.5} {:>8} {:>8} {:>10.5} {:>10.5}", l.level, l.runs, l.passed, l.max_bv, l.max_l1);
    }
    match rep.chi_hat {
        Some(c) => {
            println!("chi_hat = {c}");
            Ok(())
        }
        None => Err(Fail::Verify("no ladder level passed".into())),
    }
}

fn render(o: &Opts) -> Res<()> {
    let (sc, b) = load(o)?;
    if b.system.dim != 2 {
        return Err(Error::RenderDimension.into());
    }
    let f = load_feedback(o, &b)?;
    let runs = pipeline::run_all(&b, &f.feedback, &sc.initial_grid(&b), sc.simulation.dt, sc.simulation.t_max, sc.delta)?;
    let doc = svg::render(&b.constraint, &b.target, sc.delta, f.params.r_tilde, &f.feedback, &runs)?;
    write(&o.out, "scene.svg", &doc)?;
    Ok(())
}
