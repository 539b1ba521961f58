//! One PASS/FAIL line per acceptance criterion. Criteria run serially in a
//! single test so timing checks do not compete for the CPU.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Barrier};
use std::time::{Duration, Instant};

use toolflow::executor::{wait_all, Executor, ResourceConfig, TimelineSample};
use toolflow::graph::Warning;
use toolflow::mdsim::{
    read_manifest, run_simulation, CostModel, HarmonicChain, RunOptions, SimulationSpec,
    REDUCED_TIME_PER_FS,
};
use toolflow::tools::make_run_dir;
use toolflow_cli::config::EnvOverrides;
use toolflow_cli::run::{RunReport, EXIT_GUARD, EXIT_OK, STRUCTURES_DIR};
use toolflow_cli::scenarios::{self, fixtures_root};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn(&Path) -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target
}

/// Greedy list scheduling in submission order; tasks start at `ready`.
fn list_schedule(durations: &[f64], workers: usize, ready: f64) -> f64 {
    let mut free = vec![ready; workers];
    for d in durations {
        let slot = free.iter_mut().min_by(|a, b| a.total_cmp(b)).unwrap();
        *slot += d;
    }
    free.into_iter().fold(0.0, f64::max)
}

fn read_csv_timeline(path: &Path) -> Vec<TimelineSample> {
    csv::Reader::from_path(path)
        .unwrap()
        .deserialize()
        .map(Result::unwrap)
        .collect()
}

/// Submits `count` tasks that each sleep `d_ms`, returns the executor after
/// all have finished.
fn sleep_batch(resources: ResourceConfig, count: usize, d_ms: u64) -> Executor {
    let exec = Executor::start(resources).unwrap();
    let handles: Vec<_> = (0..count)
        .map(|i| {
            exec.submit(format!("task{i}"), move || {
                std::thread::sleep(Duration::from_millis(d_ms));
                Ok(())
            })
            .unwrap()
        })
        .collect();
    assert!(wait_all(handles).iter().all(Result::is_ok));
    exec.shutdown();
    exec
}

fn makespan(exec: &Executor) -> f64 {
    let records = exec.records();
    let first = records
        .iter()
        .map(|r| r.submit_ms)
        .fold(f64::INFINITY, f64::min);
    let last = records.iter().filter_map(|r| r.end_ms).fold(0.0, f64::max);
    last - first
}

fn makespan_law(tmp: &Path) -> Outcome {
    let started = Instant::now();
    // 200 ms of modeled cost: 1000 atoms x 1000 steps at 200 ns.
    let d = CostModel::new(200.0).duration(1000, 1000);
    let d_ms = d.as_millis() as u64;
    check(d_ms == 200, format!("modeled cost {d_ms} ms"))?;
    let exec = sleep_batch(ResourceConfig::local(4), 8, d_ms);
    let expected = list_schedule(&[d_ms as f64; 8], 4, 0.0);
    check(expected == 400.0, format!("oracle {expected}"))?;
    let m = makespan(&exec);
    check(
        within(m, expected, 0.2),
        format!("makespan {m:.1} ms vs {expected}"),
    )?;
    let csv = exec.export_timeline(&tmp.join("c1.csv")).unwrap();
    let max_running = read_csv_timeline(&csv)
        .iter()
        .map(|s| s.running)
        .max()
        .unwrap();
    check(max_running <= 4, format!("running reached {max_running}"))?;
    let wall = started.elapsed();
    check(wall < Duration::from_secs(5), format!("took {wall:?}"))?;
    Ok(format!(
        "makespan {m:.0} ms (oracle {expected:.0} ms), max running {max_running}, {wall:.2?}"
    ))
}

fn batch_queue_shape(tmp: &Path) -> Outcome {
    let started = Instant::now();
    let exec = sleep_batch(ResourceConfig::simulated_batch(25, 4, 2000.0), 100, 100);
    let records = exec.records();
    let submit0 = records
        .iter()
        .map(|r| r.submit_ms)
        .fold(f64::INFINITY, f64::min);
    let starts: Vec<f64> = records
        .iter()
        .map(|r| r.start_ms.unwrap() - submit0)
        .collect();
    let ends: Vec<f64> = records
        .iter()
        .map(|r| r.end_ms.unwrap() - submit0)
        .collect();
    let first_start = starts.iter().copied().fold(f64::INFINITY, f64::min);
    let last_start = starts.iter().copied().fold(0.0, f64::max);
    let first_end = ends.iter().copied().fold(f64::INFINITY, f64::min);
    check(
        first_start >= 2000.0,
        format!("a task started at {first_start:.1} ms"),
    )?;
    check(
        last_start < first_end,
        format!("second wave: start {last_start:.1} after end {first_end:.1}"),
    )?;
    let expected = list_schedule(&[100.0; 100], 100, 2000.0);
    let m = makespan(&exec);
    check(
        within(m, expected, 0.2),
        format!("makespan {m:.1} ms vs {expected}"),
    )?;
    let csv = exec.export_timeline(&tmp.join("c2.csv")).unwrap();
    let rows = read_csv_timeline(&csv);
    check(
        rows.iter().all(|s| s.running <= 100),
        "running exceeded 100 workers",
    )?;
    let wall = started.elapsed();
    check(wall < Duration::from_secs(10), format!("took {wall:?}"))?;
    Ok(format!(
        "first start {first_start:.0} ms, one wave, makespan {m:.0} ms (oracle {expected:.0} ms), {wall:.2?}"
    ))
}

fn run_scenario(name: &str, tmp: &Path) -> RunReport {
    let out = tmp.join(name);
    scenarios::find(name)
        .unwrap()
        .run(&EnvOverrides::default(), &out)
        .unwrap()
}

fn tool_call_cap(tmp: &Path) -> Outcome {
    let capped = run_scenario("scenario-cap", tmp);
    let n = capped.run_dirs.len();
    check(n == 24, format!("parallel_node made {n} run directories"))?;
    let expected = Warning::UnderProvisioned {
        tool: "run_md".into(),
        requested: 100,
        emitted: 24,
    };
    check(
        capped.state.warnings.contains(&expected),
        format!("warnings {:?}", capped.state.warnings),
    )?;
    let ensemble = run_scenario("scenario-5", tmp);
    let m = ensemble.run_dirs.len();
    check(
        m == 100,
        format!("ensemble_function made {m} run directories"),
    )?;
    Ok(format!(
        "parallel_node {n} dirs + under-provisioning warning, ensemble_function {m} dirs"
    ))
}

fn content_multiset(dirs: &[PathBuf]) -> BTreeMap<String, usize> {
    let mut keys = BTreeMap::new();
    for d in dirs {
        let mut key = read_manifest(d).unwrap().content_key();
        let name = key.spec.structure_path.file_name().unwrap().to_owned();
        key.spec.structure_path = name.into();
        *keys
            .entry(serde_json::to_string(&key).unwrap())
            .or_insert(0) += 1;
    }
    keys
}

fn scheme_equivalence(tmp: &Path) -> Outcome {
    let node = run_scenario("scenario-2", tmp);
    let ens = run_scenario("scenario-2-ensemble", tmp);
    check(
        node.run_dirs.len() == 8 && ens.run_dirs.len() == 8,
        format!("{} vs {} runs", node.run_dirs.len(), ens.run_dirs.len()),
    )?;
    let a = content_multiset(&node.run_dirs);
    let b = content_multiset(&ens.run_dirs);
    check(a == b, "manifest multisets differ")?;
    Ok(format!(
        "8 manifests, {} distinct, identical across schemes",
        a.len()
    ))
}

fn race_free_run_dirs(tmp: &Path) -> Outcome {
    const CALLS: usize = 100;
    const REPS: usize = 50;
    for rep in 0..REPS {
        let base = tmp.join(format!("race{rep}"));
        std::fs::create_dir_all(&base).unwrap();
        let barrier = Arc::new(Barrier::new(CALLS));
        let results: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..CALLS)
                .map(|_| {
                    let barrier = Arc::clone(&barrier);
                    let base = &base;
                    s.spawn(move || {
                        barrier.wait();
                        make_run_dir(base)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let failures = results.iter().filter(|r| r.is_err()).count();
        check(failures == 0, format!("rep {rep}: {failures} failures"))?;
        let distinct: BTreeSet<_> = results.into_iter().map(Result::unwrap).collect();
        check(
            distinct.len() == CALLS,
            format!("rep {rep}: {} distinct", distinct.len()),
        )?;
        let on_disk = std::fs::read_dir(&base).unwrap().count();
        check(
            on_disk == CALLS,
            format!("rep {rep}: {on_disk} directories on disk"),
        )?;
    }
    Ok(format!(
        "{REPS} x {CALLS} concurrent calls, all distinct, 0 failures"
    ))
}

fn search_count_guard(tmp: &Path) -> Outcome {
    let blocked = run_scenario("scenario-4-k5", tmp);
    check(
        blocked.exit_code == EXIT_GUARD,
        format!("k=5 exit {}", blocked.exit_code),
    )?;
    check(
        blocked.run_dirs.is_empty(),
        format!("k=5 ran {} simulations", blocked.run_dirs.len()),
    )?;
    let ok = run_scenario("scenario-4", tmp);
    check(
        ok.exit_code == EXIT_OK,
        format!("k=10 exit {}", ok.exit_code),
    )?;
    let fetched: BTreeSet<String> = std::fs::read_dir(ok.output_dir.join(STRUCTURES_DIR))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    let want: BTreeSet<String> = (1..=8).map(|i| format!("{i}LYZ.pdb")).collect();
    check(fetched == want, format!("downloaded {fetched:?}"))?;
    Ok(format!(
        "k=5 exit {} with 0 simulations; k=10 exit 0 with 1LYZ..8LYZ downloaded and {} simulations",
        blocked.exit_code,
        ok.run_dirs.len()
    ))
}

/// Velocity Verlet on a free-ended unit harmonic chain starting at rest
/// positions, independent of the library integrator.
fn reference_energy(v0: &[f64], dt: f64, steps: usize) -> f64 {
    let n = v0.len();
    let mut x = vec![0.0; n];
    let mut v = v0.to_vec();
    let force = |x: &[f64], i: usize| {
        let left = if i > 0 { x[i - 1] - x[i] } else { 0.0 };
        let right = if i + 1 < n { x[i + 1] - x[i] } else { 0.0 };
        left + right
    };
    let mut f: Vec<f64> = (0..n).map(|i| force(&x, i)).collect();
    for _ in 0..steps {
        for i in 0..n {
            v[i] += 0.5 * dt * f[i];
            x[i] += dt * v[i];
        }
        f = (0..n).map(|i| force(&x, i)).collect();
        for i in 0..n {
            v[i] += 0.5 * dt * f[i];
        }
    }
    let ke: f64 = v.iter().map(|v| 0.5 * v * v).sum();
    let pe: f64 = x.windows(2).map(|w| 0.5 * (w[1] - w[0]).powi(2)).sum();
    ke + pe
}

fn toy_md_physics(tmp: &Path) -> Outcome {
    let t = 313.0;
    // 100 ps at 2 fs = 50000 thermostatted steps.
    let mut spec = SimulationSpec::new(
        fixtures_root(&EnvOverrides::default()).join("structures/1KBH.pdb"),
        t,
        100.0,
    );
    spec.seed = 5;
    check(spec.steps() == 50_000, format!("{} steps", spec.steps()))?;
    let r = run_simulation(&spec, tmp, &RunOptions::default()).map_err(|e| e.to_string())?;
    let ke = r.mean_kinetic_per_dof;
    let rel_ke = (ke - t / 2.0).abs() / (t / 2.0);
    check(rel_ke < 0.05, format!("KE/dof {ke:.2} vs {:.2}", t / 2.0))?;

    let dt = spec.timestep_fs * REDUCED_TIME_PER_FS;
    let steps = 25_000;
    let mut chain = HarmonicChain::new(128, t, 0.0, dt, 9);
    let v0 = chain.velocities().to_vec();
    let e0 = chain.kinetic() + chain.potential();
    let mut drift = 0.0f64;
    for _ in 0..steps {
        chain.step();
        drift = drift.max(((chain.kinetic() + chain.potential() - e0) / e0).abs());
    }
    check(drift < 1e-3, format!("drift {drift:.2e}"))?;
    let e_ref = reference_energy(&v0, dt / 10.0, steps * 10);
    let ref_drift = ((e_ref - e0) / e0).abs();
    check(ref_drift < 1e-4, format!("reference drift {ref_drift:.2e}"))?;
    let e_end = chain.kinetic() + chain.potential();
    let vs_ref = ((e_end - e_ref) / e_ref).abs();
    check(
        vs_ref < 1e-3,
        format!("final energy off reference by {vs_ref:.2e}"),
    )?;
    Ok(format!(
        "KE/dof {ke:.2} vs T/2 {:.2} ({:.2}%), max drift {drift:.1e}, vs dt/10 reference {vs_ref:.1e}",
        t / 2.0,
        rel_ke * 100.0
    ))
}

fn step_arithmetic(tmp: &Path) -> Outcome {
    let spec = SimulationSpec::new(
        fixtures_root(&EnvOverrides::default()).join("structures/2KKJ.pdb"),
        313.0,
        50.0,
    );
    check(
        spec.timestep_fs == 2.0 && spec.report_interval_steps == 100,
        "defaults changed",
    )?;
    let r = run_simulation(&spec, tmp, &RunOptions::default()).map_err(|e| e.to_string())?;
    let lines = std::fs::read_to_string(&r.trajectory_path)
        .unwrap()
        .lines()
        .count();
    check(
        (r.steps, r.frames, lines) == (25_000, 250, 251),
        format!("{} steps, {} frames, {lines} lines", r.steps, r.frames),
    )?;
    Ok(format!(
        "{} steps, {} frames, {lines} trajectory lines",
        r.steps, r.frames
    ))
}

fn load_imbalance(tmp: &Path) -> Outcome {
    let structures = fixtures_root(&EnvOverrides::default()).join("structures");
    let exec = Executor::start(ResourceConfig::local(2)).unwrap();
    let opts = RunOptions {
        cost: CostModel::new(100.0),
        run_label: None,
    };
    let handles: Vec<_> = ["2KKJ", "1KBH"]
        .iter()
        .map(|id| {
            let spec = SimulationSpec::new(structures.join(format!("{id}.pdb")), 313.0, 10.0);
            let (base, opts) = (tmp.to_path_buf(), opts.clone());
            exec.submit(*id, move || {
                run_simulation(&spec, &base, &opts).map_err(|e| e.to_string())
            })
            .unwrap()
        })
        .collect();
    let results: Vec<_> = wait_all(handles).into_iter().map(Result::unwrap).collect();
    exec.shutdown();
    let (a1, a2) = (results[0].atom_count, results[1].atom_count);
    check(a1 < a2, format!("atom counts {a1}, {a2}"))?;
    let records = exec.records();
    let d1 = records[0].duration_ms().unwrap();
    let d2 = records[1].duration_ms().unwrap();
    let want = a2 as f64 / a1 as f64;
    let got = d2 / d1;
    check(
        within(got, want, 0.25),
        format!("duration ratio {got:.3} vs {want:.3}"),
    )?;
    let spread = records[1].end_ms.unwrap() - records[0].end_ms.unwrap();
    let want_spread = (opts.cost.duration(a2, results[1].steps)
        - opts.cost.duration(a1, results[0].steps))
    .as_secs_f64()
        * 1000.0;
    check(
        within(spread, want_spread, 0.25),
        format!("finish spread {spread:.1} ms vs {want_spread:.1} ms"),
    )?;
    Ok(format!(
        "atoms {a1}/{a2}: duration ratio {got:.3} vs {want:.3}, finish spread {spread:.0} ms vs {want_spread:.0} ms"
    ))
}

fn all_scenarios(tmp: &Path) -> Outcome {
    let started = Instant::now();
    let mut counts = Vec::new();
    for s in scenarios::all().into_iter().filter(|s| s.primary) {
        let r = run_scenario(s.name, &tmp.join("c10"));
        check(
            r.exit_code == EXIT_OK && !r.state.truncated,
            format!(
                "{}: exit {}, truncated {}",
                s.name, r.exit_code, r.state.truncated
            ),
        )?;
        counts.push(r.run_dirs.len());
    }
    check(counts == [8, 8, 8, 8, 100], format!("counts {counts:?}"))?;
    let wall = started.elapsed();
    check(wall < Duration::from_secs(60), format!("took {wall:?}"))?;
    Ok(format!("simulation counts {counts:?}, {wall:.2?} total"))
}

#[test]
fn acceptance() {
    let tmp = tempfile::tempdir().unwrap();
    let criteria: [Criterion; 10] = [
        ("makespan law", makespan_law),
        ("batch queue shape", batch_queue_shape),
        ("tool-call cap divergence", tool_call_cap),
        ("scheme equivalence", scheme_equivalence),
        ("race-free run directories", race_free_run_dirs),
        ("search-count guard", search_count_guard),
        ("toy MD physics", toy_md_physics),
        ("step arithmetic", step_arithmetic),
        ("load imbalance", load_imbalance),
        ("offline scenarios", all_scenarios),
    ];
    let mut failed = Vec::new();
    let mut err = std::io::stderr();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let dir = tmp.path().join(format!("criterion{}", i + 1));
        std::fs::create_dir_all(&dir).unwrap();
        let outcome = catch_unwind(AssertUnwindSafe(|| f(&dir)))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let line = match &outcome {
            Ok(detail) => format!("PASS {:>2} {name}: {detail}", i + 1),
            Err(reason) => format!("FAIL {:>2} {name}: {reason}", i + 1),
        };
        writeln!(err, "{line}").unwrap();
        if outcome.is_err() {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
