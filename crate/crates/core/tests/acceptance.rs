//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng as _;

use jamfield_core::config::ConfigFile;
use jamfield_core::crb::{crb_2d, fim_numeric, fim_pathloss, pathloss_mean_fn};
use jamfield_core::estimators::{log_likelihood, log_likelihood_unclamped, EstimatorKind, EstimatorSpec};
use jamfield_core::field::{clamped_rss, clamped_rss_grad_theta, pathloss_rss};
use jamfield_core::harness::{run_sweep, ExperimentConfig, SweepResult};
use jamfield_core::nn::{InputScaling, MlpParams};
use jamfield_core::output::results_csv;
use jamfield_core::raytrace::{raytrace_rss, BuildingMap, Polygon};
use jamfield_core::rng::stream;
use jamfield_core::sim::generate_dataset;
use jamfield_core::{ExecMode, JammerParams, Position};

type Check<'a> = Box<dyn FnOnce() -> Outcome + 'a>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn config(name: &str) -> ConfigFile {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ConfigFile::load(&p).expect("shipped config loads")
}

fn experiment(file: &str, kinds: &[EstimatorKind], grid: &[f64], n_mc: usize) -> ExperimentConfig {
    let mut cfg = config(file).experiment().unwrap();
    cfg.estimators = kinds.iter().map(|k| EstimatorSpec::new(*k)).collect();
    cfg.inr_grid_db = grid.to_vec();
    cfg.n_mc = n_mc;
    cfg
}

fn rmse(r: &SweepResult, kind: EstimatorKind, inr: f64) -> Vec<f64> {
    r.cell(kind.name(), inr).unwrap_or_else(|| panic!("missing cell {} @ {inr}", kind.name())).rmse.clone()
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join("/")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

fn crb_equivalence() -> Outcome {
    let mut rng = stream(11, &[1]);
    let (mut worst_crb, mut worst_fim) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let theta = Position::xy(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0));
        let jp = JammerParams::new(theta, 10.0, rng.random_range(1.5..4.0)).unwrap();
        let obs: Vec<Position> =
            (0..15).map(|_| Position::xy(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0))).collect();
        let sigma = rng.random_range(0.1..5.0);
        let fim = fim_pathloss(&obs, &jp, sigma).unwrap();
        // hand 2x2 inverse
        let [a, b, c, d] = [fim.get(0, 0), fim.get(0, 1), fim.get(1, 0), fim.get(1, 1)];
        let det = a * d - b * c;
        let closed = crb_2d(&obs, &jp, sigma).unwrap().per_dimension_variance;
        worst_crb = worst_crb.max(rel(closed[0], d / det)).max(rel(closed[1], a / det));
        let num = fim_numeric(pathloss_mean_fn(&obs, &jp), &jp.theta, sigma).unwrap();
        worst_fim = worst_fim.max(num.relative_frobenius_error(&fim));
    }
    outcome(
        worst_crb < 1e-12 && worst_fim < 1e-5,
        format!("max rel err crb {worst_crb:.2e} (< 1e-12), fim {worst_fim:.2e} (< 1e-5)"),
    )
}

fn mle_efficiency(r: &SweepResult) -> Outcome {
    let grid = &r.inr_grid_db;
    let top = *grid.last().unwrap();
    let mle = rmse(r, EstimatorKind::MlePathloss, top);
    let bound = r.crb_at(top).unwrap().rmse_bound.clone();
    let efficient = mle.iter().zip(&bound).all(|(m, b)| *m <= 2.0 * b);
    let mut trend_ok = true;
    let mut inversions = Vec::new();
    for dim in 0..r.dim {
        let seq: Vec<f64> = grid.iter().map(|&g| rmse(r, EstimatorKind::MlePathloss, g)[dim]).collect();
        let ups: Vec<f64> = seq.windows(2).filter(|w| w[1] > w[0]).map(|w| w[1] / w[0] - 1.0).collect();
        trend_ok &= ups.len() <= 1 && ups.iter().all(|u| *u <= 0.10);
        inversions.push(ups.len());
    }
    outcome(
        efficient && trend_ok,
        format!("MLE @{top} dB {} m vs CRB {} m (<= 2x); inversions per axis {inversions:?}", fmt(&mle), fmt(&bound)),
    )
}

fn apbm_near_mle(r: &SweepResult) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for &g in r.inr_grid_db.iter().filter(|g| **g >= 20.0) {
        let a = rmse(r, EstimatorKind::Apbm, g);
        let m = rmse(r, EstimatorKind::MlePathloss, g);
        pass &= a.iter().zip(&m).all(|(a, m)| *a <= 1.5 * m);
        parts.push(format!("@{g}: {} vs {}", fmt(&a), fmt(&m)));
    }
    outcome(pass, format!("APBM vs MLE (<= 1.5x) {}", parts.join("; ")))
}

fn urban_ordering() -> Outcome {
    let kinds = [EstimatorKind::Apbm, EstimatorKind::PlOnly, EstimatorKind::NnOnly];
    let cfg = experiment("urban.toml", &kinds, &[20.0], 100);
    let buildings = match &cfg.scenario.regime {
        jamfield_core::sim::Regime::Raytrace(m) => m.polygons.len(),
        _ => 0,
    };
    let r = run_sweep(&cfg, ExecMode::Parallel).unwrap();
    let apbm = rmse(&r, EstimatorKind::Apbm, 20.0);
    let pl = rmse(&r, EstimatorKind::PlOnly, 20.0);
    let nn = rmse(&r, EstimatorKind::NnOnly, 20.0);
    let below = |a: &[f64]| a.iter().zip(&pl).all(|(a, p)| a < p);
    outcome(
        buildings >= 10 && below(&apbm) && below(&nn),
        format!("{buildings} buildings; APBM {} / NN-only {} < PL-only {} m per axis", fmt(&apbm), fmt(&nn), fmt(&pl)),
    )
}

fn p0_blind() -> Outcome {
    let cfg = experiment("open_sky.toml", &[EstimatorKind::Apbm, EstimatorKind::ApbmP0Blind], &[30.0], 50);
    let r = run_sweep(&cfg, ExecMode::Parallel).unwrap();
    let aware = rmse(&r, EstimatorKind::Apbm, 30.0);
    let blind = rmse(&r, EstimatorKind::ApbmP0Blind, 30.0);
    outcome(
        blind.iter().zip(&aware).all(|(b, a)| *b <= 3.0 * a),
        format!("blind {} vs aware {} m (<= 3x)", fmt(&blind), fmt(&aware)),
    )
}

fn singularity_removal() -> Outcome {
    let sc = config("open_sky.toml").scenario().unwrap();
    let data = generate_dataset(&sc, ExecMode::Parallel).unwrap();
    let (min, max) = (&sc.area.min, &sc.area.max);
    let mut points: Vec<Position> = (0..201 * 201)
        .map(|k| {
            let (i, j) = (k % 201, k / 201);
            Position::xy(min[0] + (max[0] - min[0]) * i as f64 / 200.0, min[1] + (max[1] - min[1]) * j as f64 / 200.0)
        })
        .collect();
    let observers = data.positions();
    points.extend(observers.iter().cloned());
    let clamped_finite = points.iter().all(|p| {
        log_likelihood(&data, &sc.jammer.with_theta(p.clone()), sc.d_far).map(f64::is_finite).unwrap_or(false)
    });
    let raw_blows_up = observers.iter().all(|p| {
        let v = log_likelihood_unclamped(&data, &sc.jammer.with_theta(p.clone()));
        !v.is_finite() || v.abs() > 1e12
    });
    outcome(
        clamped_finite && raw_blows_up,
        format!(
            "{} points: clamped all finite = {clamped_finite}; raw singular at all {} observers = {raw_blows_up}",
            points.len(),
            observers.len()
        ),
    )
}

fn gradients() -> Outcome {
    let mut rng = stream(13, &[7]);
    let mut worst_nn = 0.0f64;
    for draw in 0..20 {
        let mut net = MlpParams::init_uniform(
            vec![2, 200, 100, 1],
            InputScaling::from_bounds(&[0.0, 0.0], &[1000.0, 1000.0]),
            draw,
        )
        .unwrap();
        let x = [rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0)];
        let grad = net.gradient(&x, 1.0);
        // every bias plus a random sample of weights
        let n = net.len();
        let mut idx: Vec<usize> = (0..300).map(|_| rng.random_range(0..n)).collect();
        idx.extend(n - 101..n);
        let h = 1e-6;
        let (mut fd, mut ad) = (Vec::new(), Vec::new());
        for &i in &idx {
            let w = net.flat()[i];
            net.flat_mut()[i] = w + h;
            let up = net.forward(&x);
            net.flat_mut()[i] = w - h;
            let dn = net.forward(&x);
            net.flat_mut()[i] = w;
            fd.push((up - dn) / (2.0 * h));
            ad.push(grad[i]);
        }
        let err = norm(fd.iter().zip(&ad).map(|(a, b)| a - b)) / norm(fd.iter().copied());
        worst_nn = worst_nn.max(err);
    }
    let mut worst_theta = 0.0f64;
    for _ in 0..20 {
        let x = Position::xy(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0));
        let jp = JammerParams::new(
            Position::xy(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0)),
            10.0,
            rng.random_range(1.5..4.0),
        )
        .unwrap();
        let g = clamped_rss_grad_theta(&x, &jp, 1.0).unwrap();
        let h = 1e-5;
        let fd: Vec<f64> = (0..2)
            .map(|i| {
                let mut up = jp.theta.clone();
                let mut dn = jp.theta.clone();
                up.coords_mut()[i] += h;
                dn.coords_mut()[i] -= h;
                (clamped_rss(&x, &jp.with_theta(up), 1.0).unwrap() - clamped_rss(&x, &jp.with_theta(dn), 1.0).unwrap())
                    / (2.0 * h)
            })
            .collect();
        let err = norm(fd.iter().zip(&g).map(|(a, b)| a - b)) / norm(fd.iter().copied());
        worst_theta = worst_theta.max(err);
    }
    outcome(
        worst_nn < 1e-5 && worst_theta < 1e-5,
        format!("max rel err MLP {worst_nn:.2e}, theta {worst_theta:.2e} (< 1e-5)"),
    )
}

fn raytrace_truth() -> Outcome {
    let mut rng = stream(17, &[3]);
    let empty = BuildingMap::default();
    let mut worst_free = 0.0f64;
    for _ in 0..1000 {
        let jp = JammerParams::new(
            Position::xy(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0)),
            rng.random_range(-10.0..20.0),
            rng.random_range(1.5..4.0),
        )
        .unwrap();
        let x = Position::xy(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0));
        worst_free = worst_free.max((raytrace_rss(&x, &jp, &empty).unwrap() - pathloss_rss(&x, &jp).unwrap()).abs());
    }
    // Jammer at the origin, receiver at (20, 0), a long wall whose lower face is y = 10.
    // Direct path 20 m; mirror image (0, 20) gives an unfolded path of sqrt(800) m with one bounce.
    let mut map = BuildingMap::new(vec![Polygon::rect(-50.0, 10.0, 70.0, 12.0).unwrap()]);
    map.max_reflections = 1;
    let jp = JammerParams::new(Position::xy(0.0, 0.0), 10.0, 2.0).unwrap();
    let direct_dbw = 10.0 - 20.0 * 20f64.log10();
    let bounce_dbw = 10.0 - 20.0 * 800f64.sqrt().log10() - 6.0;
    let expected = 10.0 * (10f64.powf(direct_dbw / 10.0) + 10f64.powf(bounce_dbw / 10.0)).log10();
    let got = raytrace_rss(&Position::xy(20.0, 0.0), &jp, &map).unwrap();
    let wall_err = (got - expected).abs();
    outcome(
        worst_free < 1e-9 && wall_err < 1e-6,
        format!("empty map max |diff| {worst_free:.2e} dB (< 1e-9); single wall {got:.9} vs {expected:.9} dBW"),
    )
}

fn determinism() -> Outcome {
    let mut cfg = config("open_sky.toml").experiment().unwrap();
    cfg.n_mc = 8;
    cfg.workers = Some(1);
    let a = results_csv(&run_sweep(&cfg, ExecMode::Serial).unwrap());
    cfg.workers = Some(3);
    let b = results_csv(&run_sweep(&cfg, ExecMode::Parallel).unwrap());
    outcome(
        a.as_bytes() == b.as_bytes(),
        format!(
            "{} estimators x {} INR levels x {} MC, workers 1 vs 3: {} bytes each",
            cfg.estimators.len(),
            cfg.inr_grid_db.len(),
            cfg.n_mc,
            a.len()
        ),
    )
}

fn main() {
    let pl = experiment(
        "open_sky.toml",
        &[EstimatorKind::MlePathloss, EstimatorKind::Apbm],
        &[0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
        100,
    );
    // criteria 2 and 3 share one sweep
    let pl_sweep = OnceLock::new();
    let shared = || pl_sweep.get_or_init(|| run_sweep(&pl, ExecMode::Parallel).unwrap());

    let checks: Vec<(&str, Check)> = vec![
        ("1 crb oracle equivalence", Box::new(crb_equivalence)),
        ("2 mle efficiency trend", Box::new(|| mle_efficiency(shared()))),
        ("3 apbm near mle", Box::new(|| apbm_near_mle(shared()))),
        ("4 urban ordering", Box::new(urban_ordering)),
        ("5 p0-blind capability", Box::new(p0_blind)),
        ("6 singularity removal", Box::new(singularity_removal)),
        ("7 gradient suite", Box::new(gradients)),
        ("8 ray tracer ground truth", Box::new(raytrace_truth)),
        ("9 determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let t = Instant::now();
        let o = check();
        failed += usize::from(!o.pass);
        println!(
            "{} criterion {name}: {} [{:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
