//! End-to-end acceptance suite. Runs the shipped configurations through the
//! CLI library and prints one PASS/FAIL line per criterion, with details
//! under failures. Exits nonzero if any criterion fails.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use mmdesign::{certify, solve_dc, DesignProblem, DesignSpace, Estimator, FactorSpec, Piece, ResponseModel, SolverOptions, SymMatrix};
use mmdesign_cli::run::{build_problem, resolve_axes, CaseResult};
use mmdesign_cli::{plan, run, RunConfig, RunOptions, RunReport};
use mmdesign_oracle::{neighbourhood_sample_max, simplex_grid_search};
use mmdesign_validation::{example1, example2, example3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ETA2: f64 = 1e-3;

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn load(name: &str) -> RunConfig {
    RunConfig::load(&config_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

struct Run {
    cfg: RunConfig,
    report: RunReport,
    _dir: tempfile::TempDir,
}

impl Run {
    fn new(name: &str, workers: Option<usize>) -> Run {
        let cfg = load(name);
        let dir = tempfile::tempdir().unwrap();
        let opts = RunOptions {
            out_dir: Some(dir.path().to_path_buf()),
            workers,
            dry: false,
        };
        let report = run(&cfg, &opts).unwrap_or_else(|e| panic!("{name}: {e}"));
        Run { cfg, report, _dir: dir }
    }

    fn case(&self, id: &str) -> Result<&CaseResult, String> {
        self.report.case(id).ok_or_else(|| format!("case {id} failed or missing"))
    }

    fn results(&self) -> impl Iterator<Item = &CaseResult> {
        self.report.cases.iter().filter_map(|c| c.result())
    }

    fn problem(&self, id: &str) -> DesignProblem {
        let spec = plan(&self.cfg).unwrap().into_iter().find(|c| c.id == id).unwrap();
        build_problem(&self.cfg, &spec, &resolve_axes(&self.cfg).unwrap()).unwrap()
    }

    fn out_dir(&self) -> &Path {
        &self.report.out_dir
    }
}

fn example1_run() -> &'static Run {
    static R: OnceLock<Run> = OnceLock::new();
    R.get_or_init(|| Run::new("example1.toml", None))
}

fn example1_invariance_run() -> &'static Run {
    static R: OnceLock<Run> = OnceLock::new();
    R.get_or_init(|| Run::new("example1-invariance.toml", None))
}

fn example2_run() -> &'static Run {
    static R: OnceLock<Run> = OnceLock::new();
    R.get_or_init(|| Run::new("example2.toml", None))
}

fn example3_run() -> &'static Run {
    static R: OnceLock<Run> = OnceLock::new();
    R.get_or_init(|| Run::new("example3.toml", None))
}

fn case_id(est: Estimator, alpha: f64) -> String {
    format!("{est}-alpha{alpha}")
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn weight_at(run: &Run, r: &CaseResult, x: &[f64]) -> Result<f64, String> {
    let space = run.cfg.build_space().map_err(|e| e.to_string())?;
    let i = space.index_of(x).ok_or_else(|| format!("{x:?} is not a design point"))?;
    Ok(r.weights[i])
}

/// Outcome of one criterion: summary plus detail lines.
struct Verdict {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

impl Verdict {
    fn new(pass: bool, summary: impl Into<String>, details: Vec<String>) -> Self {
        Self {
            pass,
            summary: summary.into(),
            details,
        }
    }
}

// --- Criteria -------------------------------------------------------------

fn design_independent_of_covariance() -> Result<Verdict, String> {
    let run = example3_run();
    let mut details = Vec::new();
    let results: Vec<&CaseResult> = run.results().collect();
    if results.len() != 8 {
        return Err(format!("expected 8 solved cases, got {}", results.len()));
    }
    let mut worst_weight: f64 = 0.0;
    for r in &results {
        if r.support.len() != 12 {
            details.push(format!("{}: {} support points", r.case, r.support.len()));
        }
        for s in &r.support {
            let on_grid = s.x[0].fract() == 0.0 && s.x[1].fract() == 0.0 && [-1.0, 0.0, 1.0].contains(&s.x[2]);
            if !on_grid {
                details.push(format!("{}: unexpected support point {:?}", r.case, s.x));
                continue;
            }
            let want = if s.x[2] == 0.0 { example3::MID_WEIGHT } else { example3::END_WEIGHT };
            let diff = (s.weight - want).abs();
            worst_weight = worst_weight.max(diff);
            if diff > 0.002 {
                details.push(format!("{} at {:?}: {:.4} vs {want}", r.case, s.x, s.weight));
            }
        }
    }
    let spread = results
        .iter()
        .map(|r| max_abs_diff(&r.weights, &results[0].weights))
        .fold(0.0, f64::max);
    if spread > 1e-4 {
        details.push(format!("designs differ by {spread:.2e}"));
    }
    Ok(Verdict::new(
        details.is_empty(),
        format!("8 cases, 12 points each, worst weight error {worst_weight:.1e}, max spread {spread:.1e}"),
        details,
    ))
}

fn example2_reproduction() -> Result<Verdict, String> {
    let run = example2_run();
    let mut details = Vec::new();
    let mut checked = 0;
    for (est, losses) in [(Estimator::Glse, example2::GLSE_LOSS), (Estimator::Olse, example2::OLSE_LOSS)] {
        for (k, alpha) in example2::ALPHAS.iter().enumerate() {
            let r = run.case(&case_id(est, *alpha))?;
            checked += 1;
            if (r.loss - losses[k]).abs() > 0.05 {
                details.push(format!("{}: loss {:.4} vs {}", r.case, r.loss, losses[k]));
            }
        }
    }
    let mut rows: Vec<(Estimator, [f64; 2], [f64; 3])> =
        example2::OLSE_WEIGHTS.iter().map(|(x, w)| (Estimator::Olse, *x, *w)).collect();
    for (x, w) in example2::GLSE_HALF_WEIGHTS {
        rows.push((Estimator::Glse, x, w));
        rows.push((Estimator::Glse, [-x[0], x[1]], w));
    }
    for (est, x, want) in &rows {
        for (k, alpha) in example2::ALPHAS.iter().enumerate() {
            let r = run.case(&case_id(*est, *alpha))?;
            let w = weight_at(run, r, x)?;
            checked += 1;
            if (w - want[k]).abs() > 0.005 {
                details.push(format!("{} at {:?}: weight {w:.4} vs {}", r.case, x, want[k]));
            }
        }
    }
    // The listed GLSE α = 0 weights, evaluated as a design, do not attain
    // the listed loss; report it so a failure above can be judged.
    let id = case_id(Estimator::Glse, 0.0);
    let p = run.problem(&id);
    let mut listed = vec![0.0; p.num_points()];
    for (x, w) in example2::GLSE_HALF_WEIGHTS {
        for xx in [x, [-x[0], x[1]]] {
            listed[p.space().index_of(&xx).unwrap()] = w[0];
        }
    }
    let listed_loss = p.loss(&listed).map_err(|e| e.to_string())?;
    let solved = run.case(&id)?.loss;
    if !details.is_empty() {
        details.push(format!(
            "note: the listed {id} weights evaluate to loss {listed_loss:.4}; the listed loss is {:.4} and the certified solve reaches {solved:.4}",
            example2::GLSE_LOSS[0]
        ));
    }
    Ok(Verdict::new(
        details.is_empty(),
        format!("{checked} losses and weights checked"),
        details,
    ))
}

fn example1_reproduction() -> Result<Verdict, String> {
    let run = example1_run();
    let mut details = Vec::new();
    let mut checked = 0;
    for (est, k) in [(Estimator::Glse, 0), (Estimator::Olse, 0), (Estimator::Glse, 3)] {
        let want = match est {
            Estimator::Glse => example1::GLSE_LOSS[k],
            Estimator::Olse => example1::OLSE_LOSS[k],
        };
        let r = run.case(&case_id(est, example1::ALPHAS[k]))?;
        checked += 1;
        if (r.loss - want).abs() > 0.05 {
            details.push(format!("{}: loss {:.4} vs {want}", r.case, r.loss));
        }
    }
    for ([x3, x4], per_alpha) in example1::WEIGHTS {
        for (k, alpha) in example1::ALPHAS.iter().enumerate() {
            for (e, est) in [Estimator::Glse, Estimator::Olse].into_iter().enumerate() {
                let r = run.case(&case_id(est, *alpha))?;
                let want = per_alpha[k][e];
                let signs: &[f64] = if x3 == 0.0 { &[1.0] } else { &[1.0, -1.0] };
                for s in signs {
                    for x5 in [0.0, 1.0] {
                        let x = [1.0, 1.0, s * x3, x4, x5];
                        let w = weight_at(run, r, &x)?;
                        checked += 1;
                        if (w - want).abs() > 0.002 {
                            details.push(format!("{} at {x:?}: weight {w:.4} vs {want}", r.case));
                        }
                    }
                }
            }
        }
    }
    Ok(Verdict::new(
        details.is_empty(),
        format!("{checked} losses and weights checked"),
        details,
    ))
}

fn estimator_crossover() -> Result<Verdict, String> {
    let run = example1_run();
    let mut details = Vec::new();
    let mut line = Vec::new();
    for alpha in example1::ALPHAS {
        let g = run.case(&case_id(Estimator::Glse, alpha))?.loss;
        let l = run.case(&case_id(Estimator::Olse, alpha))?.loss;
        let ok = if alpha <= 3.0 { g < l } else { g > l };
        line.push(format!("α={alpha}: {g:.4} {} {l:.4}", if g < l { "<" } else { ">" }));
        if !ok {
            details.push(format!("α={alpha}: GLSE {g:.4}, OLSE {l:.4}"));
        }
    }
    Ok(Verdict::new(details.is_empty(), line.join(", "), details))
}

fn certificates() -> Result<Verdict, String> {
    let mut details = Vec::new();
    let mut count = 0;
    let mut worst_d = f64::NEG_INFINITY;
    let mut worst_sum: f64 = 0.0;
    for run in [example1_run(), example2_run(), example3_run()] {
        if run.cfg.solver.eta2 != ETA2 {
            details.push(format!("{} certifies with eta2 = {}", run.report.name, run.cfg.solver.eta2));
        }
        for c in &run.report.cases {
            let Some(r) = c.result() else {
                details.push(format!("{}/{}: solve failed", run.report.name, c.spec.id));
                continue;
            };
            if !r.converged {
                details.push(format!("{}/{}: did not converge", run.report.name, r.case));
                continue;
            }
            count += 1;
            worst_d = worst_d.max(r.certificate.max_violation);
            worst_sum = worst_sum.max(r.certificate.weighted_sum.abs());
            if !r.certificate.pass || r.certificate.max_violation > ETA2 {
                details.push(format!("{}/{}: max d {:.3e}", run.report.name, r.case, r.certificate.max_violation));
            }
            if r.certificate.weighted_sum.abs() > 1e-8 {
                details.push(format!("{}/{}: Σ w d = {:.2e}", run.report.name, r.case, r.certificate.weighted_sum));
            }
        }
    }
    // Plot data for every Example 2 case.
    let run = example2_run();
    let mut plot_rows = 0;
    for c in &run.report.cases {
        let path = run.out_dir().join(&c.spec.id).join("plot.csv");
        let mut reader = csv::Reader::from_path(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let header = reader.headers().map_err(|e| e.to_string())?.clone();
        if header.iter().collect::<Vec<_>>() != ["x1", "x2", "d", "weight"] {
            details.push(format!("{}: header {:?}", path.display(), header));
        }
        let mut rows = 0;
        for rec in reader.records() {
            let rec = rec.map_err(|e| e.to_string())?;
            let d: f64 = rec[2].parse().map_err(|e| format!("{e}"))?;
            rows += 1;
            if d > ETA2 {
                details.push(format!("{}: d = {d:.3e} at ({}, {})", c.spec.id, &rec[0], &rec[1]));
            }
        }
        plot_rows += rows;
        if rows != 441 {
            details.push(format!("{}: {rows} plot rows", c.spec.id));
        }
    }
    Ok(Verdict::new(
        details.is_empty(),
        format!(
            "{count} solves, max d {worst_d:.2e} ≤ {ETA2}, max |Σ w d| {worst_sum:.1e}, {plot_rows} plot rows"
        ),
        details,
    ))
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| 0.05 - (1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn sign_flip_invariance() -> Result<Verdict, String> {
    let run = example1_invariance_run();
    let mut details = Vec::new();
    let flips: Vec<_> = run.report.invariance.iter().filter(|c| c.transformed.contains("-flip-")).collect();
    if flips.len() != 6 {
        return Err(format!("expected 6 sign-flip comparisons, got {}", flips.len()));
    }
    let worst = flips.iter().map(|c| c.max_weight_diff).fold(0.0, f64::max);
    for c in &flips {
        if !(c.max_weight_diff <= 1e-4) {
            details.push(format!("{}: max |Δw| {:.2e}", c.transformed, c.max_weight_diff));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_loss: f64 = 0.0;
    let mut evaluated = 0;
    for est in [Estimator::Glse, Estimator::Olse] {
        let base_id = case_id(est, 3.0);
        let base = run.problem(&base_id);
        let flipped: Vec<DesignProblem> = ["mpp", "ppm", "pmp"]
            .iter()
            .map(|s| run.problem(&format!("{base_id}-flip-{s}")))
            .collect();
        for _ in 0..50 {
            let w = random_simplex(&mut rng, base.num_points());
            let l0 = base.loss(&w).map_err(|e| e.to_string())?;
            for f in &flipped {
                let l = f.loss(&w).map_err(|e| e.to_string())?;
                evaluated += 1;
                worst_loss = worst_loss.max((l - l0).abs());
            }
        }
    }
    if worst_loss != 0.0 {
        details.push(format!("pre-solve losses differ by up to {worst_loss:.2e}"));
    }
    Ok(Verdict::new(
        details.is_empty(),
        format!("6 designs, max |Δw| {worst:.1e}; {evaluated} random-weight losses, max |Δloss| {worst_loss:.1e}"),
        details,
    ))
}

fn scale_invariance() -> Result<Verdict, String> {
    let run = example1_invariance_run();
    let mut details = Vec::new();
    let scaled: Vec<_> = run.report.invariance.iter().filter(|c| c.transformed.ends_with("-scaled")).collect();
    if scaled.len() != 2 {
        return Err(format!("expected 2 scale comparisons, got {}", scaled.len()));
    }
    let worst = scaled.iter().map(|c| c.max_weight_diff).fold(0.0, f64::max);
    for c in &scaled {
        if !(c.max_weight_diff <= 1e-4) {
            details.push(format!("{}: max |Δw| {:.2e}", c.transformed, c.max_weight_diff));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut spreads = Vec::new();
    for est in [Estimator::Glse, Estimator::Olse] {
        let id = case_id(est, 3.0);
        let base = run.problem(&id);
        let t = run.problem(&format!("{id}-scaled"));
        let offsets: Vec<f64> = (0..50)
            .map(|_| {
                let w = random_simplex(&mut rng, base.num_points());
                Ok(t.loss(&w).map_err(|e| e.to_string())? - base.loss(&w).map_err(|e| e.to_string())?)
            })
            .collect::<Result<_, String>>()?;
        let (lo, hi) = offsets.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        spreads.push(format!("{est} offset {:.3e} ± {:.1e}", offsets[0], hi - lo));
        if hi - lo > 1e-8 {
            details.push(format!("{est}: loss offset varies by {:.2e}", hi - lo));
        }
    }
    Ok(Verdict::new(
        details.is_empty(),
        format!("2 designs, max |Δw| {worst:.1e}; {}", spreads.join(", ")),
        details,
    ))
}

// --- Method-level properties ----------------------------------------------

fn random_spd(rng: &mut ChaCha8Rng, m: usize) -> SymMatrix {
    let r: Vec<f64> = (0..m * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut flat = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            let mut s = if i == j { 0.5 } else { 0.0 };
            for k in 0..m {
                s += r[k * m + i] * r[k * m + j];
            }
            flat[i * m + j] = s;
        }
    }
    SymMatrix::from_row_major(m, &flat)
}

fn random_problem(rng: &mut ChaCha8Rng, max_points: Option<usize>) -> DesignProblem {
    let est = if rng.gen_bool(0.5) { Estimator::Glse } else { Estimator::Olse };
    let alpha = if rng.gen_bool(0.25) { 0.0 } else { rng.gen_range(0.0..4.0) };
    let m = rng.gen_range(1..=3);
    let pool = ["1", "1, x1", "1, x1^2", "x1, (x1-0.2)_+^2", "1, x1, x1^2"];
    // Every basis in the pool has at most three terms, so three or more
    // distinct points identify it.
    let blocks: Vec<_> = (0..m)
        .map(|_| mmdesign::BasisVector::parse(pool[rng.gen_range(0..pool.len())]).unwrap())
        .collect();
    let n = max_points.unwrap_or_else(|| rng.gen_range(4..8));
    let model = ResponseModel::new(1, blocks, random_spd(rng, m), alpha, est).unwrap();
    let space = DesignSpace::build(&[FactorSpec::grid(-1.0, 1.0, n)]).unwrap();
    DesignProblem::unreduced(model, space).unwrap()
}

fn piece_values(p: &DesignProblem, w: &[f64]) -> (f64, f64) {
    let s = p.state(w).unwrap();
    (s.g_value(), s.h_value())
}

fn finite_differences() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(81);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let p = random_problem(&mut rng, None);
        let w = random_simplex(&mut rng, p.num_points());
        let s = p.state(&w).unwrap();
        let (gg, gh) = (s.grad_g(), s.grad_h());
        for i in 0..w.len() {
            let (mut up, mut dn) = (w.clone(), w.clone());
            up[i] += h;
            dn[i] -= h;
            let (gu, hu) = piece_values(&p, &up);
            let (gd, hd) = piece_values(&p, &dn);
            worst = worst
                .max(((gu - gd) / (2.0 * h) - gg[i]).abs() / gg[i].abs().max(1.0))
                .max(((hu - hd) / (2.0 * h) - gh[i]).abs() / gh[i].abs().max(1.0));
        }
    }
    (worst < 1e-6, format!("20 problems, worst relative error {worst:.1e}"))
}

fn descent() -> (bool, String) {
    let mut solves = 0;
    let mut worst_rise = f64::NEG_INFINITY;
    for run in [example1_run(), example1_invariance_run(), example2_run(), example3_run()] {
        for r in run.results() {
            solves += 1;
            let mut prev = r.initial_loss;
            for t in &r.trace {
                worst_rise = worst_rise.max(t.loss - prev);
                prev = t.loss;
            }
        }
    }
    (worst_rise <= 1e-9, format!("{solves} solves, largest per-step change {worst_rise:.1e}"))
}

fn midpoint_convexity() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(83);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100 {
        let p = random_problem(&mut rng, None);
        let a = random_simplex(&mut rng, p.num_points());
        let b = random_simplex(&mut rng, p.num_points());
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let (ga, ha) = piece_values(&p, &a);
        let (gb, hb) = piece_values(&p, &b);
        let (gm, hm) = piece_values(&p, &mid);
        let scale = 1.0 + ga.abs() + gb.abs() + ha.abs() + hb.abs();
        worst = worst
            .max((gm - 0.5 * (ga + gb)) / scale)
            .max((hm - 0.5 * (ha + hb)) / scale);
    }
    (worst <= 1e-12, format!("100 segments, largest midpoint excess {worst:.1e} (relative)"))
}

fn neighbourhood_bound() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(84);
    let mut worst = f64::NEG_INFINITY;
    for k in 0..20 {
        let p = random_problem(&mut rng, None);
        let w = random_simplex(&mut rng, p.num_points());
        let plug_in = p.loss(&w).unwrap();
        let sampled = neighbourhood_sample_max(&p, &w, 2000, k);
        worst = worst.max(sampled - plug_in);
    }
    (worst <= 1e-8, format!("20 instances × 2000 samples, max(sampled − plug-in) {worst:.2e}"))
}

fn oracle_agreement() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(85);
    let mut worst_below = f64::NEG_INFINITY;
    let mut worst_gap: f64 = 0.0;
    for _ in 0..8 {
        let n = rng.gen_range(3..=4);
        let p = random_problem(&mut rng, Some(n));
        let r = solve_dc(&p, &SolverOptions::default()).unwrap();
        let oracle = simplex_grid_search(&p, 0.01).unwrap();
        worst_below = worst_below.max(r.loss - oracle.loss);
        worst_gap = worst_gap.max((oracle.loss - r.loss).abs());
    }
    (
        worst_below <= 1e-4,
        format!(
            "8 instances with N ≤ 4, step 0.01: grid never beats the solver by more than {worst_below:.1e} (grid resolution gap up to {worst_gap:.1e})"
        ),
    )
}

fn classical_certificate() -> (bool, String) {
    let run = example2_run();
    let id = case_id(Estimator::Glse, 0.0);
    let Ok(r) = run.case(&id) else {
        return (false, format!("{id} missing"));
    };
    let p = run.problem(&id);
    let s = p.state(&r.weights).unwrap();
    let q = p.q() as f64;
    let classical: Vec<f64> = p.point_traces(s.g_cholesky(), Piece::G).iter().map(|t| t - q).collect();
    let c = certify(&p, &r.weights, ETA2).unwrap();
    let diff = max_abs_diff(&c.d, &classical);
    let max = classical.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (
        diff < 1e-10 && max <= ETA2,
        format!("|d − (tr(G⁻¹Gᵢ) − q)| ≤ {diff:.1e}, max {max:.1e}"),
    )
}

fn property_suite() -> Result<Verdict, String> {
    let parts: [(&str, fn() -> (bool, String)); 6] = [
        ("(a) gradients", finite_differences),
        ("(b) descent", descent),
        ("(c) convexity", midpoint_convexity),
        ("(d) neighbourhood bound", neighbourhood_bound),
        ("(e) grid oracle", oracle_agreement),
        ("(f) classical certificate", classical_certificate),
    ];
    let mut pass = true;
    let mut details = Vec::new();
    for (name, f) in parts {
        let (ok, msg) = f();
        pass &= ok;
        details.push(format!("{} {name}: {msg}", if ok { "ok  " } else { "FAIL" }));
    }
    Ok(Verdict::new(pass, "six method-level checks", details))
}

fn determinism() -> Result<Verdict, String> {
    let mut details = Vec::new();
    let mut files = 0;
    for name in ["example2.toml", "example3.toml"] {
        let a = Run::new(name, Some(1));
        let b = Run::new(name, Some(2));
        for c in &a.report.cases {
            for file in ["result.json", "plot.csv", "trace.csv"] {
                let pa = a.out_dir().join(&c.spec.id).join(file);
                let pb = b.out_dir().join(&c.spec.id).join(file);
                let (x, y) = (std::fs::read(&pa), std::fs::read(&pb));
                files += 1;
                match (x, y) {
                    (Ok(x), Ok(y)) if x == y => {}
                    _ => details.push(format!("{}/{}/{file} differs", a.report.name, c.spec.id)),
                }
            }
        }
        if std::fs::read(a.out_dir().join("designs.csv")).ok() != std::fs::read(b.out_dir().join("designs.csv")).ok() {
            details.push(format!("{}/designs.csv differs", a.report.name));
        }
        files += 1;
    }
    Ok(Verdict::new(
        details.is_empty(),
        format!("{files} files byte-identical across runs with 1 and 2 workers"),
        details,
    ))
}

/// Runs a copy of a configuration with its symmetry and α list replaced.
fn run_variant(name: &str, axes: mmdesign_cli::config::AxesChoice, alphas: Vec<f64>) -> Run {
    let mut cfg = load(name);
    cfg.symmetry.axes = axes;
    cfg.model.alpha = mmdesign_cli::config::OneOrMany::Many(alphas);
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        out_dir: Some(dir.path().to_path_buf()),
        workers: None,
        dry: false,
    };
    let report = run(&cfg, &opts).unwrap_or_else(|e| panic!("{name}: {e}"));
    Run { cfg, report, _dir: dir }
}

/// Largest weight difference between a design and its mirror image.
fn asymmetry(run: &Run, r: &CaseResult, axis: usize) -> f64 {
    let space = run.cfg.build_space().unwrap();
    (0..space.len())
        .map(|i| (r.weights[i] - r.weights[space.reflect_index(i, axis).unwrap()]).abs())
        .fold(0.0, f64::max)
}

fn symmetry_reduction_loss() -> Result<Verdict, String> {
    use mmdesign_cli::config::{AxesChoice, AxesKeyword};
    let off = run_variant("example1.toml", AxesChoice::Keyword(AxesKeyword::Off), vec![0.0, 3.0]);
    let auto = run_variant("example1.toml", AxesChoice::Keyword(AxesKeyword::Auto), vec![0.0, 3.0]);
    let mut details = Vec::new();
    let mut worst: f64 = 0.0;
    for c in &auto.report.cases {
        let a = auto.case(&c.spec.id)?;
        let o = off.case(&c.spec.id)?;
        let diff = o.loss - a.loss;
        worst = worst.max(diff.abs());
        if diff.abs() > 1e-6 {
            details.push(format!(
                "{}: untied {:.4} (max d {:.1e}, mirror asymmetry x1 {:.3}, x2 {:.3}) vs tied {:.4} (max d {:.1e})",
                c.spec.id,
                o.loss,
                o.certificate.max_violation,
                asymmetry(&off, o, 1),
                asymmetry(&off, o, 2),
                a.loss,
                a.certificate.max_violation,
            ));
        }
    }
    if !details.is_empty() {
        details.push(
            "note: both designs are certified stationary points; the untied OLSE solve settles in a lower, asymmetric one"
                .into(),
        );
    }
    Ok(Verdict::new(
        details.is_empty(),
        format!("Example 1, α ∈ {{0, 3}}, both estimators: max |Δloss| {worst:.1e}"),
        details,
    ))
}

fn report(label: &str, name: &str, f: fn() -> Result<Verdict, String>) -> bool {
    let verdict = std::panic::catch_unwind(f).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let verdict = verdict.unwrap_or_else(|e| Verdict::new(false, e, Vec::new()));
    println!(
        "{label}: {} {name}: {}",
        if verdict.pass { "PASS" } else { "FAIL" },
        verdict.summary
    );
    for d in &verdict.details {
        println!("    {d}");
    }
    verdict.pass
}

fn main() {
    let criteria: [(&str, fn() -> Result<Verdict, String>); 9] = [
        ("design independent of V0 and alpha (Example 3)", design_independent_of_covariance),
        ("Example 2 losses and weights", example2_reproduction),
        ("Example 1 losses and weights", example1_reproduction),
        ("GLSE/OLSE crossover (Example 1)", estimator_crossover),
        ("certificates and plot data", certificates),
        ("sign-flip invariance (Example 1)", sign_flip_invariance),
        ("scale invariance (Example 1)", scale_invariance),
        ("method-level properties", property_suite),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        if !report(&format!("criterion {}", k + 1), name, *f) {
            failed += 1;
        }
    }
    // Properties stated for the CLI, reported alongside the criteria.
    if !report("invariant", "symmetry off vs auto losses agree within 1e-6", symmetry_reduction_loss) {
        failed += 1;
    }
    println!("\nacceptance: {} passed, {failed} failed", criteria.len() + 1 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
