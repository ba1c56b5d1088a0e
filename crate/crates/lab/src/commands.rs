use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use realuid_core::engine::{
    distill, distill_coupling, finetune, sample_generator, train_teacher, DataSource, Mode,
};
use realuid_core::losses::Coeffs;
use realuid_core::metrics::MetricsRecord;
use realuid_core::nn::{Generator, Mlp};
use realuid_core::oracle::{
    brute_force_fake, flow_marginal, loss_by_quadrature, optimal_fake, pointwise_distance,
    uncond_field, verify, DistanceKind, QuadratureRule, Tuple,
};
use realuid_core::rng::{self, purpose};
use realuid_core::tensor::Tensor;

use crate::checkpoint::{self, Kind};
use crate::cli::{
    AblateArgs, Cli, Command, DistillArgs, EvalArgs, FinetuneArgs, GaussArgs, GridArgs,
    OracleCommand, SampleArgs,
};
use crate::config::{Overrides, RunConfigFile};
use crate::error::{LabError, Result};
use crate::run::{self, DistillObserver, MetricsLog, Reference, RunDir, TeacherObserver};
use crate::table::{self, fmt_f64, Table};

pub const THREADS_ENV: &str = "REALUID_THREADS";

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::TrainTeacher(a) => cmd_train_teacher(cli, a.quiet),
        Command::Distill(a) => cmd_distill(cli, a),
        Command::Finetune(a) => cmd_finetune(cli, a),
        Command::Ablate(a) => cmd_ablate(cli, a),
        Command::Oracle(a) => cmd_oracle(cli, &a.command),
        Command::Sample(a) => cmd_sample(cli, a),
        Command::Eval(a) => cmd_eval(cli, a),
    }
}

/// Workers for parallel sweeps: `--threads` (else the machine's parallelism),
/// capped by `REALUID_THREADS`.
pub fn worker_count(flag: Option<usize>, env: Option<&str>) -> usize {
    let base = flag.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let cap = env
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(usize::MAX);
    base.min(cap).max(1)
}

fn require_config(cli: &Cli) -> Result<RunConfigFile> {
    let p = cli
        .config
        .as_deref()
        .ok_or_else(|| LabError::Input("--config is required".into()))?;
    RunConfigFile::load(p)
}

fn require_out(cli: &Cli) -> Result<&Path> {
    cli.out
        .as_deref()
        .ok_or_else(|| LabError::Input("--out is required".into()))
}

fn load_teacher(arg: &Path, cfg: &RunConfigFile) -> Result<(PathBuf, String, Mlp)> {
    let (dir, name) = checkpoint::locate(arg, "teacher")?;
    let (m, teacher) = checkpoint::load_kind(&dir, &name, Kind::Teacher)?;
    if m.path.as_ref() != Some(&cfg.path) {
        return Err(LabError::Config(format!(
            "teacher was trained on path {:?}, the configuration uses {:?}",
            m.path.map(|p| p.kind.name()),
            cfg.path.kind.name()
        )));
    }
    Ok((dir, name, teacher))
}

/// Conditioning rows for `n` fresh samples of a coupled source.
fn sample_cond(source: &DataSource, n: usize, r: &mut rng::Stream) -> Option<Tensor> {
    match source {
        DataSource::Coupled(c) => Some(c.sample_end(r, n)),
        DataSource::Unconditional(_) => None,
    }
}

fn cmd_train_teacher(cli: &Cli, quiet: bool) -> Result<()> {
    let mut cfg = require_config(cli)?;
    cfg.apply(&Overrides {
        seed: cli.seed,
        ..Overrides::default()
    });
    let source = cfg.validate_teacher()?;
    let run = RunDir::create(require_out(cli)?)?;
    run.write_config(&cfg)?;
    let tcfg = cfg.teacher_config();
    let seed = cfg.train.seed;
    let mut obs = TeacherObserver {
        run: &run,
        log: MetricsLog::create(&run.metrics_path())?,
        path: tcfg.path,
        total_steps: tcfg.steps,
        reference: Reference::draw(&source, cfg.eval.n_reference, seed)?,
        eval: cfg.eval.clone(),
        seed,
        start: Instant::now(),
        quiet,
        last_checkpoint: None,
        failure: None,
    };
    let out = match train_teacher(&tcfg, &source, &mut obs) {
        Ok(o) => o,
        Err(e) => {
            return Err(run::explain(
                &mut obs.failure,
                obs.last_checkpoint.as_ref(),
                e,
            ))
        }
    };
    if tcfg.path.kind.is_velocity() {
        let n = cfg.eval.n_samples;
        let nfe = cfg.eval.teacher_nfe;
        let cond = sample_cond(&source, n, &mut rng::stream(seed, purpose::SAMPLE));
        let s = run::teacher_samples(
            &out.teacher,
            &tcfg.path,
            nfe,
            n,
            source.dim(),
            cond.as_ref(),
            seed,
        )?;
        table::write_samples(
            &run.samples().join(format!("teacher_nfe{nfe}.csv")),
            &s,
            cond.as_ref(),
        )?;
    }
    println!(
        "{}",
        run.checkpoints().join("teacher.manifest.json").display()
    );
    Ok(())
}

enum Start {
    Fresh,
    Finetune(Generator),
}

/// Runs the loop into `run`, writes final samples and returns the records.
fn execute_distill(
    run: &RunDir,
    cfg: &RunConfigFile,
    source: &DataSource,
    teacher: &Mlp,
    start: Start,
    quiet: bool,
) -> Result<Vec<MetricsRecord>> {
    let seed = cfg.train.seed;
    let reference = Reference::draw(source, cfg.eval.n_reference, seed)?;
    let mut obs = DistillObserver::new(run, reference.evaluator(&cfg.eval, seed), quiet)?;
    let dcfg = cfg.distill_config();
    let result = match start {
        Start::Fresh if dcfg.mode == Mode::Coupling => {
            distill_coupling(teacher, source, &dcfg, None, &mut obs)
        }
        Start::Fresh => distill(teacher, source, &dcfg, &mut obs),
        Start::Finetune(g) => finetune(teacher, source, &dcfg, g, &mut obs),
    };
    let outcome = result.map_err(|e| obs.explain(e))?;
    let n = cfg.eval.n_samples;
    let mut r = rng::stream(seed, purpose::SAMPLE);
    let cond = sample_cond(source, n, &mut r);
    let s = sample_generator(&outcome.state.ema_generator(), n, &mut r, cond.as_ref())?;
    table::write_samples(&run.samples().join("generator_ema.csv"), &s, cond.as_ref())?;
    Ok(obs.records)
}

fn cmd_distill(cli: &Cli, a: &DistillArgs) -> Result<()> {
    let mut cfg = require_config(cli)?;
    cfg.apply(&Overrides {
        mode: a.coeffs.mode,
        alpha: a.coeffs.alpha,
        beta: a.coeffs.beta,
        gamma: a.coeffs.gamma,
        seed: cli.seed,
        n_iters: a.iters,
        lr: a.lr,
    });
    let source = cfg.validate_distill()?;
    let (tdir, tname, teacher) = load_teacher(&a.teacher, &cfg)?;
    let run = RunDir::create(require_out(cli)?)?;
    run.write_config(&cfg)?;
    checkpoint::copy(&tdir, &tname, &run.checkpoints(), "teacher")?;
    execute_distill(&run, &cfg, &source, &teacher, Start::Fresh, a.quiet)?;
    println!(
        "{}",
        run.checkpoints()
            .join("generator_ema.manifest.json")
            .display()
    );
    Ok(())
}

fn cmd_finetune(cli: &Cli, a: &FinetuneArgs) -> Result<()> {
    let from = RunDir::open(&a.from)?;
    let mut cfg = match &cli.config {
        Some(p) => RunConfigFile::load(p)?,
        None => from.load_config()?,
    };
    cfg.apply(&Overrides {
        mode: a.mode,
        alpha: a.alpha_ft,
        beta: a.beta_ft,
        gamma: a.gamma_ft,
        seed: cli.seed,
        n_iters: a.iters,
        lr: Some(a.lr),
    });
    let source = cfg.validate_distill()?;
    let teacher_arg = a
        .teacher
        .clone()
        .unwrap_or_else(|| from.root().to_path_buf());
    let (tdir, tname, teacher) = load_teacher(&teacher_arg, &cfg)?;
    let ck = from.checkpoints();
    let name = ["generator_best", "generator_ema"]
        .into_iter()
        .find(|n| checkpoint::exists(&ck, n))
        .ok_or_else(|| LabError::Input(format!("no generator checkpoint in {}", ck.display())))?;
    let (_, generator) = checkpoint::load_generator(&ck, name)?;
    let run = RunDir::create(require_out(cli)?)?;
    run.write_config(&cfg)?;
    checkpoint::copy(&tdir, &tname, &run.checkpoints(), "teacher")?;
    execute_distill(
        &run,
        &cfg,
        &source,
        &teacher,
        Start::Finetune(generator),
        a.quiet,
    )?;
    println!(
        "{}",
        run.checkpoints()
            .join("generator_ema.manifest.json")
            .display()
    );
    Ok(())
}

fn round_grid(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

/// `lo:hi:step` (square grid) or `a,b;a,b;...`.
pub fn parse_grid(spec: &str) -> Result<Vec<(f64, f64)>> {
    let bad = |m: &str| LabError::Input(format!("grid {spec:?}: {m}"));
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| bad(&format!("not a number: {s:?}")))
    };
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let [lo, hi, step] = parts[..] else {
            return Err(bad("expected lo:hi:step"));
        };
        let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
        if !(step > 0.0 && hi >= lo) {
            return Err(bad("need step > 0 and hi >= lo"));
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        let vals: Vec<f64> = (0..n).map(|i| round_grid(lo + i as f64 * step)).collect();
        return Ok(vals
            .iter()
            .flat_map(|&a| vals.iter().map(move |&b| (a, b)))
            .collect());
    }
    let cells = spec
        .split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| match pair.split(',').collect::<Vec<_>>()[..] {
            [a, b] => Ok((num(a)?, num(b)?)),
            _ => Err(bad(&format!("expected a,b in {pair:?}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    if cells.is_empty() {
        return Err(bad("no cells"));
    }
    Ok(cells)
}

pub fn cell_name(alpha: f64, beta: f64) -> String {
    format!("cell_a{}_b{}", fmt_f64(alpha), fmt_f64(beta))
}

/// First record at or below `threshold`.
pub fn steps_to_threshold(records: &[MetricsRecord], threshold: f64) -> Option<u64> {
    records
        .iter()
        .find(|r| r.sliced_w2.is_some_and(|m| m <= threshold))
        .map(|r| r.step)
}

fn cmd_ablate(cli: &Cli, a: &AblateArgs) -> Result<()> {
    let mut cfg = require_config(cli)?;
    cfg.apply(&Overrides {
        seed: cli.seed,
        n_iters: a.iters,
        ..Overrides::default()
    });
    if cfg.train.mode == Mode::Uid {
        cfg.train.mode = Mode::RealUid;
    }
    let cells = parse_grid(&a.grid)?;
    let source = cfg.source()?;
    let (_, _, teacher) = load_teacher(&a.teacher, &cfg)?;
    let root = RunDir::create(require_out(cli)?)?;
    root.write_config(&cfg)?;

    let workers =
        worker_count(cli.threads, std::env::var(THREADS_ENV).ok().as_deref()).min(cells.len());
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<Vec<MetricsRecord>>>>> =
        Mutex::new((0..cells.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(alpha, beta)) = cells.get(i) else {
                    break;
                };
                let r = run_cell(root.root(), &cfg, &source, &teacher, alpha, beta);
                if let Err(e) = &r {
                    eprintln!("{}: {e}", cell_name(alpha, beta));
                }
                results.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    let results: Vec<Result<Vec<MetricsRecord>>> = results
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect();

    let finals: Vec<Option<f64>> = results
        .iter()
        .map(|r| {
            r.as_ref()
                .ok()
                .and_then(|recs| recs.last())
                .and_then(|r| r.sliced_w2)
        })
        .collect();
    let threshold = a.threshold.or_else(|| {
        let base = cells.iter().position(|&(x, y)| x == 1.0 && y == 1.0);
        match base.and_then(|i| finals[i]) {
            Some(m) => Some(m),
            None => {
                let mut v: Vec<f64> = finals.iter().flatten().copied().collect();
                v.sort_by(f64::total_cmp);
                v.get(v.len() / 2).copied()
            }
        }
    });
    let out = root.root().join("ablation.csv");
    let mut t = Table::create(
        Some(&out),
        &["alpha", "beta", "metric", "steps_to_threshold"],
    )?;
    for (i, &(alpha, beta)) in cells.iter().enumerate() {
        let steps = match (&results[i], threshold) {
            (Ok(recs), Some(th)) => steps_to_threshold(recs, th)
                .map(|s| s.to_string())
                .unwrap_or_default(),
            _ => String::new(),
        };
        t.record([
            fmt_f64(alpha),
            fmt_f64(beta),
            fmt_f64(finals[i].unwrap_or(f64::NAN)),
            steps,
        ])?;
    }
    t.finish()?;
    let failed = results.iter().filter(|r| r.is_err()).count();
    if failed > 0 {
        eprintln!("{failed} of {} cells failed", cells.len());
    }
    println!("{}", out.display());
    Ok(())
}

fn run_cell(
    root: &Path,
    cfg: &RunConfigFile,
    source: &DataSource,
    teacher: &Mlp,
    alpha: f64,
    beta: f64,
) -> Result<Vec<MetricsRecord>> {
    let mut c = cfg.clone();
    c.coeffs.alpha = alpha;
    c.coeffs.beta = beta;
    c.coeffs.gamma = alpha;
    let run = RunDir::create(&root.join(cell_name(alpha, beta)))?;
    run.write_config(&c)?;
    let r = c
        .validate_distill()
        .and_then(|_| execute_distill(&run, &c, source, teacher, Start::Fresh, true));
    if let Err(e) = &r {
        let p = run.root().join("error.txt");
        std::fs::write(&p, format!("{e}\n")).map_err(|e| LabError::io(&p, e))?;
    }
    r
}

fn coeffs_of(g: &GaussArgs) -> Result<Coeffs> {
    let c = Coeffs::new(g.alpha, g.beta).with_gamma(g.gamma.unwrap_or(g.alpha));
    c.validate()?;
    Ok(c)
}

fn grid_points(g: &GridArgs) -> Result<Vec<(f64, f64)>> {
    if g.nt == 0
        || g.nx == 0
        || !(g.t_min > 0.0 && g.t_max < 1.0 && g.t_min <= g.t_max)
        || g.x_min > g.x_max
    {
        return Err(LabError::Input(
            "grid needs nt, nx >= 1, 0 < t_min <= t_max < 1, x_min <= x_max".into(),
        ));
    }
    let lin = |lo: f64, hi: f64, n: usize, i: usize| {
        if n == 1 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    };
    Ok((0..g.nt)
        .flat_map(|i| {
            (0..g.nx).map(move |j| {
                (
                    lin(g.t_min, g.t_max, g.nt, i),
                    lin(g.x_min, g.x_max, g.nx, j),
                )
            })
        })
        .collect())
}

fn cmd_oracle(cli: &Cli, cmd: &OracleCommand) -> Result<()> {
    let out = cli.out.as_deref();
    match cmd {
        OracleCommand::Surface { gauss, grid } => {
            let c = coeffs_of(gauss)?;
            let (ms, mt) = (gauss.mu_star, gauss.mu_theta);
            let mut t = Table::create(
                out,
                &[
                    "t",
                    "x",
                    "p_star",
                    "p_theta",
                    "f_star",
                    "f_theta",
                    "optimal_fake",
                    "pointwise_distance",
                ],
            )?;
            for (ti, x) in grid_points(grid)? {
                t.reals(&[
                    ti,
                    x,
                    flow_marginal(ms, ti).pdf(x),
                    flow_marginal(mt, ti).pdf(x),
                    uncond_field(ms, ti, x),
                    uncond_field(mt, ti, x),
                    optimal_fake(ms, mt, ti, x, &c),
                    pointwise_distance(ms, mt, ti, x, &c),
                ])?;
            }
            t.finish()
        }
        OracleCommand::Distance { gauss, kind } => {
            let c = coeffs_of(gauss)?;
            let k = DistanceKind::parse(kind)
                .ok_or_else(|| LabError::Input(format!("unknown distance kind {kind:?}")))?;
            let v = loss_by_quadrature(
                k,
                gauss.mu_star,
                gauss.mu_theta,
                &c,
                &QuadratureRule::default(),
            )?;
            let mut t = Table::create(
                out,
                &[
                    "kind", "mu_star", "mu_theta", "alpha", "beta", "gamma", "value",
                ],
            )?;
            t.record([
                k.name().to_string(),
                fmt_f64(gauss.mu_star),
                fmt_f64(gauss.mu_theta),
                fmt_f64(c.alpha),
                fmt_f64(c.beta),
                fmt_f64(c.gamma),
                fmt_f64(v),
            ])?;
            t.finish()
        }
        OracleCommand::OptimalFake { gauss, grid } => {
            let c = coeffs_of(gauss)?;
            let mut t =
                Table::create(out, &["t", "x", "optimal_fake", "brute_force", "abs_error"])?;
            for (ti, x) in grid_points(grid)? {
                let closed = optimal_fake(gauss.mu_star, gauss.mu_theta, ti, x, &c);
                let brute = brute_force_fake(&Tuple {
                    mu_star: gauss.mu_star,
                    mu_theta: gauss.mu_theta,
                    t: ti,
                    x,
                    coeffs: c,
                });
                t.reals(&[ti, x, closed, brute, (closed - brute).abs()])?;
            }
            t.finish()
        }
        OracleCommand::Verify => {
            let report = verify(cli.seed.unwrap_or(0));
            let mut t = Table::create(out, &["check", "max_error", "tolerance", "passed"])?;
            for c in &report.checks {
                t.record([
                    c.name.to_string(),
                    fmt_f64(c.max_error),
                    fmt_f64(c.tolerance),
                    c.passed.to_string(),
                ])?;
            }
            t.finish()?;
            let failed = report.checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(LabError::VerifyFailed(failed));
            }
            eprintln!("{} checks passed", report.checks.len());
            Ok(())
        }
    }
}

fn generator_name(raw: bool, best: bool) -> &'static str {
    match (raw, best) {
        (_, true) => "generator_best",
        (true, false) => "generator",
        (false, false) => "generator_ema",
    }
}

fn cmd_sample(cli: &Cli, a: &SampleArgs) -> Result<()> {
    if a.n == 0 {
        return Err(LabError::Input("--n must be positive".into()));
    }
    let from = RunDir::open(&a.from)?;
    let cfg = from.load_config()?;
    let source = cfg.source()?;
    let seed = cli.seed.unwrap_or(cfg.train.seed);
    let mut r = rng::stream(seed, purpose::SAMPLE);
    let cond = sample_cond(&source, a.n, &mut r);
    let (name, samples) = if a.teacher {
        let (_, _, teacher) = load_teacher(from.root(), &cfg)?;
        let nfe = a.nfe.unwrap_or(cfg.eval.teacher_nfe);
        let s = run::teacher_samples(
            &teacher,
            &cfg.path,
            nfe,
            a.n,
            source.dim(),
            cond.as_ref(),
            seed,
        )?;
        (format!("teacher_nfe{nfe}"), s)
    } else {
        let name = generator_name(!a.ema, a.best);
        let (_, g) = checkpoint::load_generator(&from.checkpoints(), name)?;
        (
            name.to_string(),
            sample_generator(&g, a.n, &mut r, cond.as_ref())?,
        )
    };
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| from.samples().join(format!("{name}.csv")));
    table::write_samples(&out, &samples, cond.as_ref())?;
    println!("{}", out.display());
    Ok(())
}

fn cmd_eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let start = Instant::now();
    let run = RunDir::open(&a.gen)?;
    let cfg = run.load_config()?;
    let source = cfg.source()?;
    let seed = cli.seed.unwrap_or(cfg.train.seed);
    let mut eval = cfg.eval.clone();
    if let Some(n) = a.n {
        eval.n_samples = n;
        eval.n_reference = n;
    }
    let reference = if a.reference == "data" {
        Reference::draw(&source, eval.n_reference, seed)?
    } else {
        if matches!(source, DataSource::Coupled(_)) {
            return Err(LabError::Input(
                "coupled runs are scored against --ref data".into(),
            ));
        }
        Reference {
            x0: table::read_samples(Path::new(&a.reference))?,
            cond: None,
            gauss: None,
        }
    };
    let n = reference.cond.as_ref().map_or(eval.n_samples, |c| c.rows());
    let mut r = rng::stream(seed, purpose::SAMPLE);
    let (step, samples) = if a.teacher {
        let (dir, name) = checkpoint::locate(run.root(), "teacher")?;
        let (m, teacher) = checkpoint::load_kind(&dir, &name, Kind::Teacher)?;
        let nfe = a.nfe.unwrap_or(eval.teacher_nfe);
        let s = run::teacher_samples(
            &teacher,
            &cfg.path,
            nfe,
            n,
            source.dim(),
            reference.cond.as_ref(),
            seed,
        )?;
        (m.step, s)
    } else {
        let (m, g) = checkpoint::load_generator(&run.checkpoints(), generator_name(a.raw, false))?;
        (
            m.step,
            sample_generator(&g, n, &mut r, reference.cond.as_ref())?,
        )
    };
    if samples.cols() != reference.x0.cols() {
        return Err(LabError::Input(format!(
            "samples have {} columns, reference has {}",
            samples.cols(),
            reference.x0.cols()
        )));
    }
    let mut rec = MetricsRecord::new(step);
    reference.score(&mut rec, &samples, &eval, seed)?;
    rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let line = serde_json::to_string(&rec).map_err(|e| LabError::json(run.root(), e))?;
    println!("{line}");
    MetricsLog::append(&run.root().join("eval.jsonl"))?.write(&rec)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_grid() {
        let g = parse_grid("0.94:1.0:0.02").unwrap();
        assert_eq!(g.len(), 16);
        assert_eq!(g[0], (0.94, 0.94));
        assert_eq!(g[1], (0.94, 0.96));
        assert_eq!(g[15], (1.0, 1.0));
        assert!(g
            .iter()
            .all(|&(a, b)| a.to_string().len() <= 4 && b.to_string().len() <= 4));
    }

    #[test]
    fn pair_grid() {
        assert_eq!(parse_grid("0.94,0.96").unwrap(), vec![(0.94, 0.96)]);
        assert_eq!(
            parse_grid("1,1;0.9,0.8;").unwrap(),
            vec![(1.0, 1.0), (0.9, 0.8)]
        );
        for bad in ["", "1", "1,2,3", "a,b", "1:0:0.1", "0:1:0", "0:1"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn threads_capped_by_env() {
        assert_eq!(worker_count(Some(8), Some("3")), 3);
        assert_eq!(worker_count(Some(2), Some("3")), 2);
        assert_eq!(worker_count(Some(0), None), 1);
        assert_eq!(worker_count(Some(4), Some("junk")), 4);
        assert!(worker_count(None, None) >= 1);
    }

    #[test]
    fn threshold_crossing() {
        let recs: Vec<MetricsRecord> = [(500, 0.9), (1000, 0.4), (1500, 0.2)]
            .iter()
            .map(|&(s, m)| MetricsRecord {
                sliced_w2: Some(m),
                ..MetricsRecord::new(s)
            })
            .collect();
        assert_eq!(steps_to_threshold(&recs, 0.5), Some(1000));
        assert_eq!(steps_to_threshold(&recs, 0.1), None);
    }
}
