use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use z2sim_core::noise::NoiseModel;
use z2sim_core::spectral::{dft, DftOptions};
use z2sim_core::state::init_thread_pool;
use z2sim_core::{
    build_lattice, build_trotter_step, compile_noisy, count_gates, merge_shards, write_series_csv, CouplingParams,
    Gate, RecordKind, ResultRecord, Shard, ShardPartial, StateVector, TrajectoryEngine,
};

use crate::cli::{AnalyzeArgs, BenchArgs, Cli, Command, GatecountArgs, GlobalArgs, MergeArgs, PointArgs, SweepArgs};
use crate::config::{SweepConfig, Tuple};
use crate::error::{CliError, CliResult};
use crate::manifest::{fsck, Manifest, ManifestEntry, Status};
use crate::run::{self, content_key, record_file_name, RunInfo, RunSpec};

pub fn execute(cli: Cli) -> CliResult<()> {
    init_thread_pool(cli.global.threads);
    let g = &cli.global;
    match cli.command {
        Command::Simulate(p) => simulate(g, &p),
        Command::Sweep(a) => sweep(g, &a),
        Command::Merge(a) => merge(g, &a),
        Command::Analyze(a) => analyze(g, &a),
        Command::Oracle(a) => oracle(g, &a.point, a.method),
        Command::Bench(a) => bench(g, &a),
        Command::Gatecount(a) => gatecount(&a),
        Command::Fsck => fsck_cmd(g),
    }
}

/// Config file (or defaults) with global flag overrides applied.
pub fn load_config(g: &GlobalArgs) -> CliResult<SweepConfig> {
    let mut cfg = match &g.config {
        Some(p) => SweepConfig::load(p)?,
        None => SweepConfig::default(),
    };
    if let Some(out) = &g.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = g.seed {
        cfg.master_seed = seed;
    }
    if let Some(w) = g.window {
        cfg.window = w;
    }
    if let Some(s) = g.sites {
        cfg.record_sites = s;
    }
    if g.mem_limit.is_some() {
        cfg.mem_limit = g.mem_limit;
    }
    if cfg.mem_limit.is_none() {
        cfg.mem_limit = physical_memory();
    }
    Ok(cfg)
}

fn physical_memory() -> Option<u64> {
    let info = std::fs::read_to_string("/proc/meminfo").ok()?;
    let line = info.lines().find(|l| l.starts_with("MemTotal:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

fn pick<T: Copy>(flag: Option<T>, list: &[T], name: &str, from_file: bool, fallback: T) -> CliResult<T> {
    match (flag, from_file) {
        (Some(v), _) => Ok(v),
        (None, false) => Ok(fallback),
        (None, true) if list.len() == 1 => Ok(list[0]),
        (None, true) => Err(CliError::Config(format!(
            "`{name}` lists {} values; pass --{} to choose one",
            list.len(),
            name.replace('_', "-")
        ))),
    }
}

/// The single point selected by `p` within `cfg`.
pub fn point_spec(g: &GlobalArgs, cfg: &mut SweepConfig, p: &PointArgs) -> CliResult<RunSpec> {
    let from_file = g.config.is_some();
    let tuple = Tuple {
        n: pick(p.n, &cfg.grid, "n", from_file, 3)?,
        beta_h: pick(p.beta_h, &cfg.beta_h, "beta_h", from_file, 1.6)?,
        dt: pick(p.dt, &cfg.dt, "dt", from_file, 0.25)?,
        epsilon2: pick(p.epsilon2, &cfg.epsilon2, "epsilon2", from_file, 0.0)?,
        zeta: pick(p.zeta, &cfg.zeta_crosstalk, "zeta", from_file, 0.0)?,
    };
    if let Some(v) = p.n_steps {
        cfg.n_steps = v;
    }
    if let Some(v) = p.n_traj {
        cfg.n_traj = v;
    }
    if p.source_site.is_some() {
        cfg.source_site = p.source_site;
    }
    cfg.grid = vec![tuple.n];
    cfg.beta_h = vec![tuple.beta_h];
    cfg.dt = vec![tuple.dt];
    cfg.epsilon2 = vec![tuple.epsilon2];
    cfg.zeta_crosstalk = vec![tuple.zeta];
    cfg.validate()?;
    RunSpec::new(cfg, tuple, cfg.record_sites, g.shard.unwrap_or(Shard::WHOLE))
}

fn write_record(dir: &Path, key: &str, record: &ResultRecord) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(record_file_name(key));
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, record.to_json()?)?;
    std::fs::rename(&tmp, &path)?;
    let csv = BufWriter::new(File::create(path.with_extension("csv"))?);
    write_series_csv(&record.series, csv)?;
    Ok(path)
}

fn read_record(path: &Path) -> CliResult<ResultRecord> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Failure(format!("cannot read {}: {e}", path.display())))?;
    ResultRecord::from_json(&text).map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))
}

fn entry(key: &str, record: &ResultRecord, info: RunInfo) -> ManifestEntry {
    ManifestEntry {
        key: key.to_string(),
        status: Status::Done,
        file: Some(record_file_name(key)),
        error: None,
        n: record.key.n,
        beta_h: record.key.beta_h,
        dt: record.key.dt,
        epsilon2: record.key.epsilon2,
        zeta: record.key.zeta,
        wall_time_s: record.wall_time_s,
        memory_estimate: info.memory_estimate,
        peak_rss_bytes: info.peak_rss_bytes,
    }
}

fn describe(record: &ResultRecord) -> String {
    match (&record.mass, &record.analysis_error) {
        (Some(m), _) => format!("mass {:.6} +- {:.6}", m.mass, m.uncertainty),
        (None, Some(e)) => format!("no mass ({e})"),
        (None, None) => "no mass".into(),
    }
}

fn simulate(g: &GlobalArgs, p: &PointArgs) -> CliResult<()> {
    let mut cfg = load_config(g)?;
    let spec = point_spec(g, &mut cfg, p)?;
    let (record, info) = run::simulate(&spec)?;
    let key = content_key(&record);
    let path = write_record(&cfg.out, &key, &record)?;
    Manifest::open(&cfg.out)?.append(&entry(&key, &record, info))?;
    println!("wrote {}", path.display());
    println!(
        "n={} beta_h={} eps2={} zeta={} shard={}/{} trajectories={} {}",
        spec.tuple.n,
        spec.tuple.beta_h,
        spec.tuple.epsilon2,
        spec.tuple.zeta,
        spec.shard.index,
        spec.shard.total,
        record.series.n_traj_effective,
        describe(&record)
    );
    println!(
        "memory_estimate={} peak_rss={} wall_time_s={:.3}",
        info.memory_estimate,
        info.peak_rss_bytes.map_or("unknown".into(), |b| b.to_string()),
        record.wall_time_s
    );
    Ok(())
}

fn sweep(g: &GlobalArgs, a: &SweepArgs) -> CliResult<()> {
    let cfg = load_config(g)?;
    let shard = g.shard.unwrap_or(Shard::WHOLE);
    let tuples = cfg.tuples();
    let baselines = tuples.iter().filter(|t| t.is_noiseless()).count();
    println!(
        "grid: {} points ({} noisy, {} noiseless baselines)",
        tuples.len(),
        tuples.len() - baselines,
        baselines
    );
    if a.dry_run {
        return Ok(());
    }
    let slice = a.slice.unwrap_or(Shard::WHOLE);
    let manifest = Manifest::open(&cfg.out)?;
    let (mut ran, mut skipped, mut failed) = (0usize, 0usize, 0usize);
    for (i, t) in tuples.iter().enumerate() {
        if i % slice.total != slice.index {
            continue;
        }
        let spec = RunSpec::new(&cfg, *t, cfg.record_sites, shard)?;
        let key = spec.content_key(RecordKind::Trajectory)?;
        let path = cfg.out.join(record_file_name(&key));
        let done = manifest.latest()?.get(&key).is_some_and(|e| e.status == Status::Done);
        if done && read_record(&path).is_ok_and(|r| content_key(&r) == key) {
            skipped += 1;
            continue;
        }
        let label = format!("n={} beta_h={} eps2={} zeta={}", t.n, t.beta_h, t.epsilon2, t.zeta);
        match run::simulate(&spec) {
            Ok((mut record, info)) => {
                if !t.is_noiseless() {
                    let base = RunSpec::new(&cfg, t.baseline(), cfg.record_sites, shard)?;
                    let base_path = cfg.out.join(record_file_name(&base.content_key(RecordKind::Trajectory)?));
                    if let Ok(reference) = read_record(&base_path) {
                        run::attach_relative_error(&mut record, &reference);
                    }
                }
                write_record(&cfg.out, &key, &record)?;
                manifest.append(&entry(&key, &record, info))?;
                ran += 1;
                let rel = record
                    .relative_error_pct
                    .map_or(String::new(), |r| format!(" rel_err={r:.3}%"));
                println!("[{}/{}] {label}: {}{rel}", i + 1, tuples.len(), describe(&record));
            }
            Err(e) => {
                failed += 1;
                eprintln!("[{}/{}] {label}: {e}", i + 1, tuples.len());
                manifest.append(&ManifestEntry {
                    key: key.clone(),
                    status: Status::Failed,
                    file: None,
                    error: Some(e.to_string()),
                    n: t.n,
                    beta_h: t.beta_h,
                    dt: t.dt,
                    epsilon2: t.epsilon2,
                    zeta: t.zeta,
                    wall_time_s: 0.0,
                    memory_estimate: spec.memory_estimate(),
                    peak_rss_bytes: None,
                })?;
            }
        }
    }
    println!("ran {ran}, skipped {skipped} already done, failed {failed}");
    if failed > 0 {
        return Err(CliError::Failure(format!(
            "{failed} grid points failed; see {}",
            manifest.path().display()
        )));
    }
    Ok(())
}

fn merge(g: &GlobalArgs, a: &MergeArgs) -> CliResult<()> {
    let records = a.records.iter().map(|p| read_record(p)).collect::<CliResult<Vec<_>>>()?;
    let partials: Vec<ShardPartial> = records
        .iter()
        .zip(&a.records)
        .map(|(r, p)| {
            r.shard_partial()
                .ok_or_else(|| CliError::Failure(format!("{} has no accumulator to merge", p.display())))
        })
        .collect::<CliResult<_>>()?;
    let outcome = merge_shards(&partials).map_err(|e| CliError::Failure(format!("cannot merge: {e}")))?;
    let first = &records[0];
    let mut merged = ResultRecord::new(RecordKind::Merged, outcome.key.clone(), Shard::WHOLE, outcome.series);
    merged.accumulator = Some(outcome.accumulator);
    merged.xi_anisotropy = first.xi_anisotropy;
    merged.wall_time_s = records.iter().map(|r| r.wall_time_s).sum();
    run::analyze(&mut merged, g.window.unwrap_or(first.window));
    let out = g
        .out
        .clone()
        .or_else(|| a.records[0].parent().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    let key = content_key(&merged);
    let path = write_record(&out, &key, &merged)?;
    let info = RunInfo::default();
    Manifest::open(&out)?.append(&entry(&key, &merged, info))?;
    if !outcome.missing.is_empty() {
        eprintln!(
            "warning: incomplete cover, missing shards {:?} of {}",
            outcome.missing, first.shard.total
        );
    }
    println!(
        "wrote {} ({} shards, {} trajectories) {}",
        path.display(),
        partials.len(),
        merged.series.n_traj_effective,
        describe(&merged)
    );
    Ok(())
}

fn analyze(g: &GlobalArgs, a: &AnalyzeArgs) -> CliResult<()> {
    let record = read_record(&a.record)?;
    let site = a.site.unwrap_or(record.series.source_site);
    let options = DftOptions {
        window: g.window.unwrap_or(record.window),
        subtract_mean: a.subtract_mean,
        refine: a.refine,
    };
    let spectrum = dft(&record.series, site, options)?;
    let stem = a.record.with_extension("");
    let dir = g.out.clone().unwrap_or_else(|| stem.parent().map(Path::to_path_buf).unwrap_or_default());
    std::fs::create_dir_all(&dir)?;
    let name = stem.file_name().map_or("record".into(), |s| s.to_string_lossy().into_owned());
    let csv_path = dir.join(format!("{name}.site{site}.spectrum.csv"));
    spectrum.write_csv(BufWriter::new(File::create(&csv_path)?))?;
    let peaks_path = dir.join(format!("{name}.site{site}.peaks.json"));
    std::fs::write(&peaks_path, spectrum.peaks_json()?)?;
    println!("wrote {} and {}", csv_path.display(), peaks_path.display());
    match spectrum.extracted_mass {
        Some(m) => {
            println!(
                "site {site}: mass {:.6} +- {:.6} (omega {:.6}, bin width {:.6})",
                m.mass,
                m.uncertainty,
                m.omega,
                spectrum.bin_width()
            );
            Ok(())
        }
        None => Err(z2sim_core::Error::NoSignal.into()),
    }
}

fn oracle(g: &GlobalArgs, p: &PointArgs, method: run::OracleMethod) -> CliResult<()> {
    let mut cfg = load_config(g)?;
    let spec = point_spec(g, &mut cfg, p)?;
    let record = run::oracle(&spec, method)?;
    let key = content_key(&record);
    let path = write_record(&cfg.out, &key, &record)?;
    Manifest::open(&cfg.out)?.append(&entry(&key, &record, RunInfo::default()))?;
    println!("wrote {} ({:?}) {}", path.display(), record.kind, describe(&record));
    Ok(())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Median over five batches of the time per application of `gate`.
fn time_gate(n_qubits: usize, gate: &Gate) -> CliResult<f64> {
    let m = gate.matrix();
    let mut state = StateVector::zero(n_qubits);
    let mut samples = Vec::new();
    for _ in 0..5 {
        let start = Instant::now();
        let mut reps = 0u32;
        while reps < 3 || start.elapsed().as_secs_f64() < 0.05 {
            state.apply(&m)?;
            reps += 1;
        }
        samples.push(start.elapsed().as_secs_f64() / reps as f64);
    }
    Ok(median(samples))
}

fn bench(g: &GlobalArgs, a: &BenchArgs) -> CliResult<()> {
    let threads = init_thread_pool(g.threads);
    println!("threads: {threads}, precision: complex f64 (16 bytes/amplitude)");
    println!("noise: epsilon2=5e-3 epsilon1=5e-4 zeta=3e5/s, {} Trotter steps per trajectory", a.steps);
    println!();
    println!("{:>5} {:>7} {:>16} {:>14}", "grid", "qubits", "s/trajectory", "mem estimate");
    let model = NoiseModel::from_epsilon2(5e-3, 3e5)?;
    for &n in &a.grid {
        let lattice = build_lattice(n)?;
        let params = CouplingParams::for_lattice(&lattice, 1.6, 0.25, a.steps)?;
        let q = lattice.n_sites();
        let estimate = z2sim_core::memory_estimate(q, 1);
        if let Some(limit) = g.mem_limit.or_else(physical_memory) {
            if estimate > limit {
                println!("{:>5} {q:>7} {:>16} {estimate:>14}", format!("{n}x{n}"), "refused");
                continue;
            }
        }
        let engine = TrajectoryEngine::from_model(&lattice, &params, &model, vec![params.source_site])?;
        let start = Instant::now();
        engine.run_trajectory(g.seed.unwrap_or(1))?;
        let secs = start.elapsed().as_secs_f64();
        println!("{:>5} {q:>7} {secs:>16.4} {estimate:>14}", format!("{n}x{n}"));
    }
    println!();
    println!("{:>7} {:>14} {:>14} {:>12}", "qubits", "rx (s)", "sqrt_iswap (s)", "ns/amp (2q)");
    let mut two_q = Vec::new();
    for &q in &a.gate_qubits {
        if q < 4 {
            return Err(CliError::Config(format!("gate timing needs at least 4 qubits, got {q}")));
        }
        let rx = time_gate(q, &Gate::rx(q / 2, 0.3))?;
        let sq = time_gate(q, &Gate::sqrt_iswap(3, q - 2))?;
        two_q.push((q, sq));
        println!("{q:>7} {rx:>14.3e} {sq:>14.3e} {:>12.3}", sq * 1e9 / (1u64 << q) as f64);
    }
    if let (Some(&(q16, t16)), Some(&(q20, t20))) =
        (two_q.iter().find(|(q, _)| *q == 16), two_q.iter().find(|(q, _)| *q == 20))
    {
        println!();
        println!(
            "sqrt_iswap time ratio {q20}q/{q16}q: {:.2} (ideal 2^{} = {})",
            t20 / t16,
            q20 - q16,
            1u64 << (q20 - q16)
        );
    }
    Ok(())
}

fn gatecount(a: &GatecountArgs) -> CliResult<()> {
    let model = NoiseModel::from_epsilon2(5e-3, 3e5)?;
    if a.noisy {
        println!("{:>3} {:>7} {:>6} {:>6} {:>9} {:>9}", "n", "qubits", "1q", "2q", "depol_1q", "depol_2q");
    } else {
        println!("{:>3} {:>7} {:>6} {:>6}", "n", "qubits", "1q", "2q");
    }
    for &n in &a.n {
        let lattice = build_lattice(n)?;
        let params = CouplingParams::for_lattice(&lattice, 1.6, 0.25, 1)?;
        let step = build_trotter_step(&lattice, &params)?;
        let q = lattice.n_sites();
        if a.noisy {
            let c = compile_noisy(&step, &model)?.counts();
            println!(
                "{n:>3} {q:>7} {:>6} {:>6} {:>9} {:>9}",
                c.one_qubit, c.two_qubit, c.depolarizing_1q, c.depolarizing_2q
            );
        } else {
            let (one, two) = count_gates(&step);
            println!("{n:>3} {q:>7} {one:>6} {two:>6}");
        }
    }
    if !a.noisy {
        println!();
        println!(
            "note: single-qubit counts can differ by one from tallies that merge the \
             boundary RZ layer differently (e.g. 18 rather than 17 for n=3)"
        );
    }
    Ok(())
}

fn fsck_cmd(g: &GlobalArgs) -> CliResult<()> {
    let cfg = load_config(g)?;
    let report = fsck(&cfg.out)?;
    for p in &report.problems {
        println!("problem: {p}");
    }
    println!(
        "{}: {} records checked, {} failed entries, {} problems",
        cfg.out.display(),
        report.checked,
        report.failed_entries,
        report.problems.len()
    );
    if report.is_clean() {
        Ok(())
    } else {
        Err(CliError::Failure("manifest and records disagree".into()))
    }
}
