//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Thresholds are pinned below.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use pillarvote_core::*;
use pillarvote_testkit as tk;
use proptest::prelude::*;
use proptest::test_runner::{Config as PtConfig, TestRunner};
use rand::Rng;

const VOTE_SCENES: usize = 50;
const VOTE_MAX_POINTS: usize = 500;
const VOTE_BUDGET: Duration = Duration::from_secs(10);

const EXACT_BUDGET: Duration = Duration::from_secs(5);

const NOISY_SEEDS: u64 = 20;
const NOISY_SIGMA: f64 = 0.02;
const NOISY_TEMPERATURE: f64 = 0.1;
const NOISY_AXIS_TOL: f64 = 0.1;
const NOISY_MIN_FRACTION: f64 = 0.95;
const NOISY_BUDGET: Duration = Duration::from_secs(30);

const CHAMFER_TOL: f64 = 1e-9;
const CHAMFER_MAX_POINTS: usize = 2000;
const CHAMFER_BUDGET: Duration = Duration::from_secs(10);

const METRIC_BUDGET: Duration = Duration::from_secs(1);

const QUERIES: usize = 10_000;
const QUERY_M: [usize; 5] = [4, 8, 16, 32, 64];
const QUERY_N: [usize; 3] = [64, 128, 256];
const QUERY_BUDGET: Duration = Duration::from_secs(20);

const THREAD_COUNTS: [&str; 3] = ["1", "4", "8"];

const ESTIMATE_BUDGET: Duration = Duration::from_secs(2);
const SWEEP_SIZES: &str = "0.1,0.2,0.4";

const MIN_SPARSITY: f64 = 0.9;

const PROPERTY_CASES: u32 = 128;
const PROPERTY_BUDGET: Duration = Duration::from_secs(60);

/// Background clearance around the mover in the recovery scenes, meters.
const CLEARANCE: f64 = 1.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(t: Instant, budget: Duration) -> (bool, String) {
    let e = t.elapsed();
    (e < budget, format!("{:.2}s/{:.0}s", e.as_secs_f64(), budget.as_secs_f64()))
}

fn grid_of(points: Vec<Point3>, cfg: &GridConfig) -> PillarGrid {
    pillarize(&PointCloud::new(points).unwrap(), cfg)
}

fn vote_oracle() -> Outcome {
    let t = Instant::now();
    let grid_cfg = GridConfig::default();
    let mut bad = 0;
    let mut pillars = 0;
    for seed in 0..VOTE_SCENES as u64 {
        let mut r = tk::rng(1000 + seed);
        let n = r.random_range(1..=VOTE_MAX_POINTS);
        let src_pts = if seed % 2 == 0 {
            tk::blob_points(&mut r, n, 5.0)
        } else {
            tk::random_points(&mut r, n, 4.0, 2.0)
        };
        let shift = [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)];
        let mut tgt_pts = Vec::new();
        for p in &src_pts {
            if r.random_bool(0.9) {
                tgt_pts.push([p[0] + shift[0], p[1] + shift[1], p[2] + r.random_range(-0.05..0.05)]);
            }
        }
        let (src, tgt) = (grid_of(src_pts, &grid_cfg), grid_of(tgt_pts, &grid_cfg));
        let (si, ti) = (SpatialIndex::build(&src), SpatialIndex::build(&tgt));
        let mut cfg = VoteConfig::new([0.2, 0.2]);
        cfg.m_neighbors = r.random_range(1..=16);
        cfg.n_candidates = r.random_range(1..=256);
        let p = tk::VoteParams {
            cell: [0.2, 0.2],
            half_bins: [10, 10],
            m: cfg.m_neighbors,
            n: cfg.n_candidates,
            radius: cfg.ball_radius,
        };
        for k in 0..src.len() {
            pillars += 1;
            let got = accumulate_votes(k, &src, &tgt, &si, &ti, &cfg).unwrap();
            if got.scores() != &tk::votes(k, &src, &tgt, &p)[..] {
                bad += 1;
            }
        }
    }
    let (fast, time) = within(t, VOTE_BUDGET);
    outcome(
        bad == 0 && fast,
        format!("{VOTE_SCENES} scenes, {pillars} pillars, {bad} mismatched, {time}"),
    )
}

/// Lattice translation `(a, b)` bins of 0.2 m, written as the decimal.
fn lattice(a: i32, b: i32) -> [f64; 2] {
    [(a * 2) as f64 / 10.0, (b * 2) as f64 / 10.0]
}

fn exact_recovery() -> Outcome {
    let t = Instant::now();
    let mut shifts = vec![
        lattice(3, -2),
        lattice(10, 10),
        lattice(-10, -10),
        lattice(10, -10),
        lattice(-10, 10),
        lattice(0, 10),
        lattice(-10, 0),
        lattice(1, 0),
        lattice(0, -1),
        lattice(7, 4),
    ];
    let mut r = tk::rng(77);
    while shifts.len() < 20 {
        let (a, b) = (r.random_range(-10..=10), r.random_range(-10..=10));
        if (a, b) != (0, 0) {
            shifts.push(lattice(a, b));
        }
    }
    let cfg = PipelineConfig { extraction: Extraction::Argmax, cluster_fusion: true, ..Default::default() };
    let (mut movers, mut mover_ok, mut bg_bad, mut bad_scenes) = (0, 0, 0, 0);
    for (i, shift) in shifts.iter().enumerate() {
        let pair = generate_scene_pair(&tk::single_mover_scene(i as u64, *shift, 0.0, CLEARANCE)).unwrap();
        let flow = estimate_scene_flow(&pair.source, &pair.target, &cfg).unwrap();
        let before = (mover_ok, bg_bad);
        let mut n_mover = 0;
        for (f, g) in flow.flows().iter().zip(pair.gt_flow.flows()) {
            if *g == [0.0; 3] {
                bg_bad += usize::from(*f != [0.0; 3]);
            } else {
                n_mover += 1;
                mover_ok += usize::from(f == g);
            }
        }
        movers += n_mover;
        if mover_ok - before.0 != n_mover || bg_bad != before.1 {
            bad_scenes += 1;
        }
    }
    let (fast, time) = within(t, EXACT_BUDGET);
    outcome(
        mover_ok == movers && bg_bad == 0 && fast,
        format!(
            "{} shifts incl. (0.6, -0.4), mover points exact {mover_ok}/{movers}, background nonzero {bg_bad}, \
             bad scenes {bad_scenes}, {time}",
            shifts.len()
        ),
    )
}

fn noisy_recovery() -> Outcome {
    let t = Instant::now();
    let mut cfg = PipelineConfig { extraction: Extraction::SoftArgmax, ..Default::default() };
    cfg.vote.temperature = NOISY_TEMPERATURE;
    let (mut total, mut good) = (0usize, 0usize);
    let mut worst_scene = 1.0f64;
    for seed in 0..NOISY_SEEDS {
        let mut r = tk::rng(500 + seed);
        let shift = [r.random_range(-1.9..1.9), r.random_range(-1.9..1.9)];
        let pair = generate_scene_pair(&tk::single_mover_scene(200 + seed, shift, NOISY_SIGMA, CLEARANCE)).unwrap();
        let flow = estimate_scene_flow(&pair.source, &pair.target, &cfg).unwrap();
        let (mut n, mut ok) = (0usize, 0usize);
        for (f, g) in flow.flows().iter().zip(pair.gt_flow.flows()) {
            if *g != [0.0; 3] {
                n += 1;
                ok += usize::from((f[0] - g[0]).abs() <= NOISY_AXIS_TOL && (f[1] - g[1]).abs() <= NOISY_AXIS_TOL);
            }
        }
        total += n;
        good += ok;
        worst_scene = worst_scene.min(ok as f64 / n as f64);
    }
    let frac = good as f64 / total as f64;
    let (fast, time) = within(t, NOISY_BUDGET);
    outcome(
        frac >= NOISY_MIN_FRACTION && fast,
        format!(
            "{NOISY_SEEDS} seeds, sigma {NOISY_SIGMA}, {:.2}% of {total} mover points within {NOISY_AXIS_TOL} m \
             per axis (need {:.0}%), worst scene {:.2}%, {time}",
            100.0 * frac,
            100.0 * NOISY_MIN_FRACTION,
            100.0 * worst_scene
        ),
    )
}

fn chamfer_identities() -> Outcome {
    let t = Instant::now();
    let mut worst = 0.0f64;
    let mut violations = 0;
    for seed in 0..10u64 {
        let mut r = tk::rng(3000 + seed);
        let na = r.random_range(1..=CHAMFER_MAX_POINTS);
        let nb = r.random_range(1..=CHAMFER_MAX_POINTS);
        let a = tk::random_points(&mut r, na, 10.0, 3.0);
        let b = tk::blob_points(&mut r, nb, 10.0);
        let (ca, cb) = (PointCloud::new(a.clone()).unwrap(), PointCloud::new(b.clone()).unwrap());
        let ab = chamfer(&ca, &cb).unwrap();
        let ba = chamfer(&cb, &ca).unwrap();
        let aa = chamfer(&ca, &ca).unwrap();
        worst = worst.max((ab - tk::chamfer(&a, &b)).abs()).max((ab - ba).abs());
        violations += usize::from(aa != 0.0) + usize::from(ab < 0.0);
    }
    let mut gt_nonzero = 0;
    for seed in 0..3u64 {
        let pair = generate_scene_pair(&tk::single_mover_scene(seed, [0.7, -1.3], 0.0, CLEARANCE)).unwrap();
        let warped = apply_flow(&pair.source, &pair.gt_flow).unwrap();
        gt_nonzero += usize::from(chamfer(&warped, &pair.target).unwrap() != 0.0);
    }
    let (fast, time) = within(t, CHAMFER_BUDGET);
    outcome(
        worst <= CHAMFER_TOL && violations == 0 && gt_nonzero == 0 && fast,
        format!(
            "max |kd - brute|, |ab - ba| = {worst:.1e} (tol {CHAMFER_TOL:.0e}), identity/sign violations {violations}, \
             gt-flow scenes with chamfer != 0: {gt_nonzero}, {time}"
        ),
    )
}

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn metric_fixtures() -> Outcome {
    let t = Instant::now();
    let field = |v: Vec<Vec3>| FlowField::new(v, 0.1).unwrap();
    let gt = field(vec![[0.1, 0.0, 0.0], [0.0; 3], [0.0; 3], [0.0; 3]]);
    let pred = field(vec![[0.1, 0.2, 0.0], [0.05, 0.0, 0.0], [0.0, 0.01, 0.0], [0.0, 0.0, 0.03]]);
    let tw = three_way_epe(&pred, &gt, &[true, true, false, false]).unwrap();
    let three = tw.fd == Some(0.2) && tw.fs == Some(0.05) && tw.bs == Some(0.02);

    let b = bucketed_normalized_epe(&field(vec![[0.06, 0.012, 0.0]]), &field(vec![[0.06, 0.0, 0.0]]), &[1]).unwrap();
    let bucket = b[&1].buckets.len() == 1 && b[&1].buckets[0].normalized == 0.2;

    let fast_car = bucketed_normalized_epe(&field(vec![[2.05, 0.0, 0.0]]), &field(vec![[2.0, 0.0, 0.0]]), &[1]).unwrap();
    let slow = bucketed_normalized_epe(&field(vec![[0.1, 0.0, 0.0]]), &field(vec![[0.05, 0.0, 0.0]]), &[1]).unwrap();
    let ratios = (fast_car[&1].buckets[0].normalized - 0.025).abs() < 1e-12
        && (slow[&1].buckets[0].normalized - 1.0).abs() < 1e-12;

    let mut r = tk::rng(9);
    let g = field((0..500).map(|_| [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0), 0.0]).collect());
    let fg: Vec<bool> = (0..500).map(|i| i % 3 == 0).collect();
    let class: Vec<u16> = (0..500).map(|i| (i % 4) as u16).collect();
    let rep = EvalReport::evaluate(&g, &g, Some(&fg), Some(&class)).unwrap();
    let t3 = rep.three_way.unwrap();
    let perfect = [t3.fd, t3.fs, t3.bs].iter().all(|v| v.is_none_or(|v| v == 0.0))
        && rep.bucketed.unwrap().values().all(|c| {
            c.static_epe.is_none_or(|v| v == 0.0)
                && c.dynamic_normalized_epe.is_none_or(|v| v == 0.0)
                && c.buckets.iter().all(|b| b.normalized == 0.0)
        });
    let (fast, time) = within(t, METRIC_BUDGET);
    outcome(
        three && bucket && ratios && perfect && fast,
        format!(
            "FD/FS/BS = {:?}/{:?}/{:?}, bucket ratio {}, 0.025 vs 1.0 {ratios}, perfect all-zero {perfect}, {time}",
            tw.fd, tw.fs, tw.bs, b[&1].buckets[0].normalized
        ),
    )
}

fn spatial_queries() -> Outcome {
    let t = Instant::now();
    let cfg = GridConfig::default();
    let combos: Vec<(usize, usize)> = QUERY_M.iter().flat_map(|m| QUERY_N.iter().map(move |n| (*m, *n))).collect();
    let per_combo = QUERIES.div_ceil(combos.len());
    let tuples = |v: Vec<Neighbor>| v.into_iter().map(|n| (n.pillar, n.cell, n.dist2)).collect::<Vec<_>>();
    let (mut done, mut bad) = (0usize, 0usize);
    for (c, (m, n)) in combos.iter().enumerate() {
        let mut r = tk::rng(4000 + c as u64);
        let grid = grid_of(tk::blob_points(&mut r, 3000, 15.0), &cfg);
        let index = SpatialIndex::build(&grid);
        let radius = VoteConfig::new([0.2, 0.2]).ball_radius;
        for q in 0..per_combo {
            let p = if q % 2 == 0 {
                grid.center(r.random_range(0..grid.len()))
            } else {
                [r.random_range(-17.0..17.0), r.random_range(-17.0..17.0)]
            };
            let rad = if q % 3 == 0 { radius } else { r.random_range(0.0..4.0) };
            bad += usize::from(tuples(index.knn(p, *m)) != tk::knn(grid.centers(), grid.occupied(), p, *m));
            bad += usize::from(
                tuples(index.ball_query(p, rad, *n)) != tk::ball(grid.centers(), grid.occupied(), p, rad, *n),
            );
            done += 1;
        }
    }
    let (fast, time) = within(t, QUERY_BUDGET);
    outcome(
        bad == 0 && done >= QUERIES && fast,
        format!("{done} knn + {done} ball queries over M x N = {QUERY_M:?} x {QUERY_N:?}, {bad} mismatched, {time}"),
    )
}

fn bin(args: &[&str], threads: Option<&str>) -> std::process::Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pillarvote"));
    c.args(args).env_remove("PILLARVOTE_THREADS");
    if let Some(t) = threads {
        c.args(["--threads", t]);
    }
    c.output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn standard_scene(dir: &Path) -> Result<(), String> {
    let o = bin(
        &["synth", "--preset", "driving", "--seed", "0", "--out-src", s(&dir.join("src.vfpc")),
          "--out-tgt", s(&dir.join("tgt.vfpc"))],
        None,
    );
    o.status.success().then_some(()).ok_or_else(|| String::from_utf8_lossy(&o.stderr).into_owned())
}

fn determinism(dir: &Path) -> Outcome {
    let mut outputs = Vec::new();
    for t in THREAD_COUNTS {
        let flow = dir.join(format!("flow_{t}.csv"));
        let report = dir.join(format!("report_{t}.json"));
        let o = bin(
            &["estimate", "--src", s(&dir.join("src.vfpc")), "--tgt", s(&dir.join("tgt.vfpc")), "-o", s(&flow), "-q"],
            Some(t),
        );
        if !o.status.success() {
            return outcome(false, format!("estimate --threads {t} failed: {}", String::from_utf8_lossy(&o.stderr)));
        }
        let o = bin(&["eval", "--pred", s(&flow), "--gt", s(&dir.join("src.vfpc")), "-o", s(&report), "-q"], None);
        if !o.status.success() {
            return outcome(false, format!("eval failed: {}", String::from_utf8_lossy(&o.stderr)));
        }
        outputs.push((std::fs::read(&flow).unwrap(), std::fs::read(&report).unwrap()));
    }
    let same = outputs.windows(2).all(|w| w[0] == w[1]);
    outcome(
        same,
        format!(
            "flow ({} bytes) and report ({} bytes) identical at --threads {}: {same}",
            outputs[0].0.len(),
            outputs[0].1.len(),
            THREAD_COUNTS.join("/")
        ),
    )
}

fn performance(dir: &Path) -> Outcome {
    let flow = dir.join("flow_perf.csv");
    let t = Instant::now();
    let o = bin(
        &["estimate", "--src", s(&dir.join("src.vfpc")), "--tgt", s(&dir.join("tgt.vfpc")), "-o", s(&flow), "-q"],
        None,
    );
    let wall = t.elapsed();
    if !o.status.success() {
        return outcome(false, format!("estimate failed: {}", String::from_utf8_lossy(&o.stderr)));
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("flow_perf.manifest.json")).unwrap()).unwrap();
    let compute: f64 = manifest["timings_ms"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|s| !matches!(s["stage"].as_str(), Some("load" | "write")))
        .map(|s| s["ms"].as_f64().unwrap())
        .sum();

    let sweep = dir.join("sweep.csv");
    let o = bin(
        &["sweep", "--src", s(&dir.join("src.vfpc")), "--tgt", s(&dir.join("tgt.vfpc")), "--pillar-sizes", SWEEP_SIZES,
          "--repeat", "3", "-o", s(&sweep)],
        None,
    );
    if !o.status.success() {
        return outcome(false, format!("sweep failed: {}", String::from_utf8_lossy(&o.stderr)));
    }
    let text = std::fs::read_to_string(&sweep).unwrap();
    let lat: Vec<f64> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    let monotone = lat.len() == 3 && lat.windows(2).all(|w| w[0] > w[1]);
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    outcome(
        wall < ESTIMATE_BUDGET && monotone,
        format!(
            "estimate wall {:.0} ms incl. IO (pipeline {compute:.0} ms) on {cores} core(s), budget {} ms; \
             sweep latency at delta {SWEEP_SIZES}: {lat:?} ms, decreasing {monotone}",
            wall.as_secs_f64() * 1e3,
            ESTIMATE_BUDGET.as_millis()
        ),
    )
}

fn sparsity_check() -> Outcome {
    let pair = generate_scene_pair(&SceneSpec::driving(0)).unwrap();
    let grid = pillarize(&pair.source, &GridConfig::default());
    let sp = sparsity(&grid);
    outcome(
        sp > MIN_SPARSITY && grid.config().width() == 512,
        format!("{} points, {} of 512x512 pillars occupied, sparsity {sp:.4} (need > {MIN_SPARSITY})", pair.source.len(), grid.len()),
    )
}

fn property(name: &str, result: Result<(), String>, log: &mut Vec<String>) -> bool {
    match result {
        Ok(()) => true,
        Err(e) => {
            log.push(format!("{name}: {e}"));
            false
        }
    }
}

fn properties() -> Outcome {
    let t = Instant::now();
    let mut runner = TestRunner::new(PtConfig {
        cases: PROPERTY_CASES,
        failure_persistence: None,
        ..PtConfig::default()
    });
    let mut log = Vec::new();
    let dyadic = |half: i64| {
        (-half * 64..half * 64, -half * 64..half * 64, 0..192i64)
            .prop_map(|(x, y, z)| [x as f64 / 64.0, y as f64 / 64.0, z as f64 / 64.0])
    };
    let geometry = VoteConfig::new([0.2, 0.2]).geometry().unwrap();
    let space = move || {
        prop::collection::vec(-64..64i32, 441)
            .prop_map(move |v| VotingSpace::from_scores(geometry, v.into_iter().map(|s| s as f64 / 16.0).collect()).unwrap())
    };

    let r = runner
        .run(
            &(prop::collection::vec(dyadic(8), 1..200), -12i64..12, -12i64..12, prop::sample::select(vec![0.25, 0.5])),
            |(pts, a, b, cell)| {
                let g = GridConfig::square(cell, 16.0).unwrap();
                let moved: Vec<Point3> = pts.iter().map(|p| [p[0] + a as f64 * cell, p[1] + b as f64 * cell, p[2]]).collect();
                let (g0, g1) = (grid_of(pts.clone(), &g), grid_of(moved, &g));
                prop_assert_eq!(g0.len(), g1.len());
                for k in 0..g0.len() {
                    let (x0, y0) = g.coords(g0.cell(k));
                    let (x1, y1) = g.coords(g1.cell(k));
                    prop_assert_eq!((x1 as i64 - x0 as i64, y1 as i64 - y0 as i64), (a, b));
                    prop_assert_eq!(g0.feature(k), g1.feature(k));
                }
                for i in 0..pts.len() {
                    prop_assert_eq!(g0.offset(i), g1.offset(i));
                }
                Ok(())
            },
        )
        .map_err(|e| e.to_string());
    let mut ok = property("translation equivariance", r, &mut log);

    let r = runner
        .run(&(space(), 1e-3..1e3f64), |(sp, c)| {
            let scaled = VotingSpace::from_scores(*sp.geometry(), sp.scores().iter().map(|v| v * c).collect()).unwrap();
            prop_assert_eq!(argmax_translation(&sp), argmax_translation(&scaled));
            Ok(())
        })
        .map_err(|e| e.to_string());
    ok &= property("argmax scaling", r, &mut log);

    let r = runner
        .run(&(prop::collection::vec(space(), 1..6), any::<u64>()), |(spaces, seed)| {
            use rand::seq::SliceRandom;
            let mut shuffled = spaces.clone();
            shuffled.shuffle(&mut tk::rng(seed));
            let (a, b) = (fuse_voting_spaces(&spaces).unwrap(), fuse_voting_spaces(&shuffled).unwrap());
            prop_assert_eq!(argmax_translation(&a), argmax_translation(&b));
            Ok(())
        })
        .map_err(|e| e.to_string());
    ok &= property("fuse permutation", r, &mut log);

    let r = runner
        .run(
            &(prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64, -0.2..0.2f64), 0..200), 0.0..1.5f64),
            |(v, th)| {
                let mut once = FlowField::new(v.into_iter().map(|(x, y, z)| [x, y, z]).collect(), 0.1).unwrap();
                static_gate(&mut once, th);
                let mut twice = once.clone();
                static_gate(&mut twice, th);
                prop_assert_eq!(once, twice);
                Ok(())
            },
        )
        .map_err(|e| e.to_string());
    ok &= property("gating idempotence", r, &mut log);

    let r = runner
        .run(
            &prop::collection::vec((-60.0..60.0f64, -60.0..60.0f64, 0.0..3.0f64), 0..400),
            |pts| {
                let n = pts.len();
                let grid = grid_of(pts.into_iter().map(|(x, y, z)| [x, y, z]).collect(), &GridConfig::default());
                let mut seen = vec![0u8; n];
                for k in 0..grid.len() {
                    for &i in grid.members(k) {
                        seen[i as usize] += 1;
                    }
                }
                for &i in grid.out_of_range() {
                    seen[i as usize] += 1;
                }
                prop_assert!(seen.iter().all(|c| *c == 1));
                let clusters = cluster_pillars(&grid);
                let mut covered = vec![0u8; grid.len()];
                for c in 0..clusters.len() {
                    for &k in clusters.members(c) {
                        covered[k as usize] += 1;
                    }
                }
                prop_assert!(covered.iter().all(|c| *c == 1));
                Ok(())
            },
        )
        .map_err(|e| e.to_string());
    ok &= property("partition/coverage", r, &mut log);

    let (fast, time) = within(t, PROPERTY_BUDGET);
    let detail = if log.is_empty() {
        format!("5 properties x {PROPERTY_CASES} cases, {time}")
    } else {
        format!("{}; {time}", log.join("; "))
    };
    outcome(ok && fast, detail)
}

fn main() {
    // `cargo test` passes harness flags such as `--quiet`; only a name filter
    // that excludes this target should skip it.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !filter.is_empty() && !filter.iter().any(|f| "acceptance".contains(f.as_str())) {
        return;
    }

    let dir = tempfile::tempdir().unwrap();
    let scene = standard_scene(dir.path());
    let on_scene = |f: &dyn Fn(&Path) -> Outcome| match &scene {
        Ok(()) => f(dir.path()),
        Err(e) => outcome(false, format!("could not synthesize the standard scene: {e}")),
    };

    let criteria: Vec<Criterion> = vec![
        ("vote oracle equivalence", Box::new(vote_oracle)),
        ("rigid-shift recovery, exact", Box::new(exact_recovery)),
        ("rigid-shift recovery, noisy", Box::new(noisy_recovery)),
        ("chamfer identities", Box::new(chamfer_identities)),
        ("metric fixtures", Box::new(metric_fixtures)),
        ("spatial-query exactness", Box::new(spatial_queries)),
        ("determinism across threads", Box::new(|| on_scene(&determinism))),
        ("performance envelope", Box::new(|| on_scene(&performance))),
        ("sparsity", Box::new(sparsity_check)),
        ("invariant suite", Box::new(properties)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        failed += usize::from(!o.pass);
        println!("criterion {:>2} {} {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
