use std::collections::BTreeMap;
use std::path::Path;

use roew_core::drsvm::{ModelRecord, RobustParams};
use roew_core::evalx::{
    evaluate, fmt17, run_sweep, split, train_witnesses, SplitConfig, SweepConfig, SweepResult,
};
use roew_core::measure::{measure_states, pool_by_class, MomentRecord, MomentSample};
use roew_core::states::{generate_states, BellLabel, Label, StateRecord};
use roew_core::tolerances;
use roew_core::witness::{verify_witness, VerificationReport, WitnessRecord};

use crate::config::{RunConfig, Runtime};
use crate::error::{CliError, CliResult};
use crate::output::{parse_jsonl, read_bytes, sha256_hex, sig4, to_jsonl, OutDir};

pub const STATES_FILE: &str = "states.jsonl";
pub const MOMENTS_FILE: &str = "moments.jsonl";
pub const SWEEP_FILE: &str = "sweep.csv";

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    match jobs {
        Some(n) => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("worker pool: {e}")))?
            .install(f)),
        None => Ok(f()),
    }
}

fn generate(cfg: &RunConfig, rt: &Runtime, out: &mut OutDir) -> CliResult<Vec<MomentSample>> {
    let (states, samples) = with_pool(rt.jobs, || -> roew_core::Result<_> {
        let states = generate_states(&cfg.dataset, cfg.dataset_seed())?;
        let samples = measure_states(&states, cfg.noise, cfg.repeats)?;
        Ok((states, samples))
    })??;
    let state_records: Vec<StateRecord> = states.iter().map(StateRecord::from).collect();
    let moment_records: Vec<MomentRecord> = samples
        .iter()
        .zip(&states)
        .map(|(m, s)| MomentRecord::new(m, s.seed))
        .collect();
    out.write(STATES_FILE, &to_jsonl(&state_records))?;
    out.write(MOMENTS_FILE, &to_jsonl(&moment_records))?;
    Ok(samples)
}

fn load_moments(dir: &Path) -> CliResult<(Vec<MomentSample>, BTreeMap<String, String>)> {
    let path = dir.join(MOMENTS_FILE);
    let bytes = read_bytes(&path)?;
    let records: Vec<MomentRecord> = parse_jsonl(&path, &bytes)?;
    let samples = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.to_sample()
                .map_err(|e| CliError::parse(&path, format!("line {}: {e}", i + 1)))
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok((
        samples,
        BTreeMap::from([(MOMENTS_FILE.to_string(), sha256_hex(&bytes))]),
    ))
}

fn prepare(cfg: &RunConfig, samples: Vec<MomentSample>) -> CliResult<Vec<MomentSample>> {
    if cfg.pooled_covariance {
        Ok(pool_by_class(&samples)?)
    } else {
        Ok(samples)
    }
}

fn class_counts(samples: &[MomentSample]) -> String {
    let sep = samples
        .iter()
        .filter(|s| s.label == Label::Separable)
        .count();
    let groups: Vec<String> = BellLabel::ALL
        .iter()
        .map(|&g| {
            format!(
                "{} {}",
                g.code(),
                samples.iter().filter(|s| s.group == Some(g)).count()
            )
        })
        .collect();
    format!("{sep} separable, entangled by group: {}", groups.join(", "))
}

pub fn gen(cfg: &RunConfig, rt: &Runtime) -> CliResult<()> {
    let mut out = OutDir::create(&rt.out)?;
    let samples = generate(cfg, rt, &mut out)?;
    let manifest = out.finish("gen", cfg, BTreeMap::new())?;
    println!(
        "generated {} samples ({})",
        samples.len(),
        class_counts(&samples)
    );
    println!("config hash {}", cfg.hash());
    println!("manifest {}", manifest.display());
    Ok(())
}

pub fn train(cfg: &RunConfig, rt: &Runtime) -> CliResult<()> {
    let (samples, inputs) = load_moments(&rt.data)?;
    let samples = prepare(cfg, samples)?;
    let (train_set, test_set) = split(&samples, &SplitConfig::new(cfg.split, cfg.split_seed()))?;
    let params = RobustParams::new(cfg.alpha, cfg.c)?;
    let (witnesses, reports) = with_pool(rt.jobs, || -> roew_core::Result<_> {
        let witnesses = train_witnesses(&train_set, &params, &cfg.solver)?;
        let reports = witnesses
            .iter()
            .map(|w| verify_witness(&w.witness, cfg.grid_n))
            .collect::<roew_core::Result<Vec<_>>>()?;
        Ok((witnesses, reports))
    })??;
    let evaluation = evaluate(&witnesses, &test_set)?;

    let mut out = OutDir::create(&rt.out)?;
    for (w, r) in witnesses.iter().zip(&reports) {
        let code = w.group.code();
        out.write_json(
            &format!("model_{code}.json"),
            &ModelRecord::new(&w.model, &params),
        )?;
        out.write_json(
            &format!("witness_{code}.json"),
            &WitnessRecord::new(&w.witness, Some(r.clone())),
        )?;
    }
    out.write_json("evaluation.json", &evaluation)?;
    out.write("roc.csv", evaluation.roc.to_csv().as_bytes())?;
    let manifest = out.finish("train", cfg, inputs)?;

    println!(
        "trained on {} samples, tested on {} (alpha {}, C {})",
        train_set.len(),
        test_set.len(),
        sig4(cfg.alpha),
        sig4(cfg.c)
    );
    println!("group  objective  residual   min_eig  n_neg  grid_min   own_bell  witness");
    for (w, r) in witnesses.iter().zip(&reports) {
        println!(
            "{:<5}  {:<9}  {:<9}  {:<7}  {:<5}  {:<9}  {:<8}  {}",
            w.group.code(),
            sig4(w.model.objective),
            sig4(w.model.feasibility_residual),
            sig4(r.min_eig),
            r.n_negative_eigs,
            sig4(r.grid_min),
            r.bell(w.group).map_or("-".into(), sig4),
            if r.is_witness(tolerances::WITNESS) {
                "yes"
            } else {
                "no"
            }
        );
    }
    let m = &evaluation.metrics;
    println!(
        "test: accuracy {}  precision {}  recall {}  f1 {}  auc {}",
        sig4(m.accuracy),
        sig4(m.precision),
        sig4(m.recall),
        sig4(m.f1),
        sig4(evaluation.roc.auc)
    );
    println!("manifest {}", manifest.display());
    Ok(())
}

pub fn roc_file_name(alpha: f64, split: f64) -> String {
    format!("roc/alpha_{}_split_{}.csv", fmt17(alpha), fmt17(split))
}

fn print_sweep(result: &SweepResult, alphas: &[f64], splits: &[f64]) {
    print!("accuracy  alpha\\split");
    for s in splits {
        print!("  {:<10}", sig4(*s));
    }
    println!();
    for &a in alphas {
        print!("          {:<11}", sig4(a));
        for &s in splits {
            let text = match result.cell(a, s) {
                Some(c) => c
                    .evaluation
                    .as_ref()
                    .map_or_else(|| c.status.tag(), |e| sig4(e.metrics.accuracy)),
                None => "-".into(),
            };
            print!("  {text:<10}");
        }
        println!();
    }
}

pub fn sweep(cfg: &RunConfig, rt: &Runtime, gen_first: bool) -> CliResult<()> {
    let mut out = OutDir::create(&rt.out)?;
    let (samples, inputs) = if gen_first {
        (generate(cfg, rt, &mut out)?, BTreeMap::new())
    } else {
        load_moments(&rt.data)?
    };
    let samples = prepare(cfg, samples)?;
    let sweep_cfg = SweepConfig {
        c: cfg.c,
        solver: cfg.solver.clone(),
        split_seed: cfg.split_seed(),
        jobs: rt.jobs,
    };
    let result = run_sweep(&cfg.alphas, &cfg.splits, &samples, &sweep_cfg)?;
    out.write(SWEEP_FILE, result.to_csv().as_bytes())?;
    for cell in &result.cells {
        if let Some(e) = &cell.evaluation {
            out.write(
                &roc_file_name(cell.alpha, cell.split),
                e.roc.to_csv().as_bytes(),
            )?;
        }
    }
    let manifest = out.finish("sweep", cfg, inputs)?;
    print_sweep(&result, &cfg.alphas, &cfg.splits);
    let failed = result
        .cells
        .iter()
        .filter(|c| c.evaluation.is_none())
        .count();
    if failed > 0 {
        println!("{failed} cell(s) failed; see cell_status in {SWEEP_FILE}");
    }
    println!("manifest {}", manifest.display());
    Ok(())
}

fn bell_name(g: BellLabel) -> &'static str {
    match g {
        BellLabel::PhiPlus => "Phi+",
        BellLabel::PhiMinus => "Phi-",
        BellLabel::PsiPlus => "Psi+",
        BellLabel::PsiMinus => "Psi-",
    }
}

fn print_report(path: &Path, normalized: bool, r: &VerificationReport) {
    println!(
        "witness {}{}",
        path.display(),
        if normalized {
            " (trace-normalized)"
        } else {
            ""
        }
    );
    println!("min eigenvalue: {}", sig4(r.min_eig));
    println!("negative eigenvalues: {}", r.n_negative_eigs);
    let [ta, pa, tb, pb] = r.grid_argmin;
    println!(
        "grid minimum (n = {}): {} at thetaA {} phiA {} thetaB {} phiB {}",
        r.grid_n,
        sig4(r.grid_min),
        sig4(ta),
        sig4(pa),
        sig4(tb),
        sig4(pb)
    );
    for g in BellLabel::ALL {
        if let Some(e) = r.bell(g) {
            println!("bell {} ({}): {}", g.code(), bell_name(g), sig4(e));
        }
    }
    if r.n_negative_eigs == 0 {
        println!("not a witness: 0 negative eigenvalues");
    } else if r.grid_min < -tolerances::WITNESS {
        println!("not a witness: negative on a product state");
    } else {
        println!("valid witness");
    }
}

pub fn verify(cfg: &RunConfig, file: &Path, out_dir: Option<&Path>) -> CliResult<()> {
    let bytes = read_bytes(file)?;
    let record: WitnessRecord =
        serde_json::from_slice(&bytes).map_err(|e| CliError::parse(file, e))?;
    let witness = record.to_witness().map_err(|e| CliError::parse(file, e))?;
    let report = verify_witness(&witness, cfg.grid_n)?;
    print_report(file, witness.is_normalized(), &report);
    if let Some(dir) = out_dir {
        let stem = file
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("witness");
        let name = file
            .file_name()
            .and_then(|s| s.to_str())
            .unwrap_or("witness");
        let mut out = OutDir::create(dir)?;
        out.write_json(&format!("verification_{stem}.json"), &report)?;
        out.finish(
            "verify",
            cfg,
            BTreeMap::from([(name.to_string(), sha256_hex(&bytes))]),
        )?;
    }
    Ok(())
}
