//! Experiment runner for the random block Schrödinger operator
//! laboratory.
//!
//! Exit codes: 0 pass, 1 usage/IO error, 2 statistical fail,
//! 3 inconclusive.

mod config;
mod output;

use clap::{Parser, Subcommand};
use config::{config_hash, RunConfig};
use num_complex::Complex64;
use output::{Emitter, Format};
use rbso::greens::{ensemble_run, local_law_stats, ward_check};
use rbso::lattice::TorusLattice;
use rbso::mfield::{msc, KernelSet, SpectralPoint};
use rbso::models::{assemble, scale_params, ModelKind, ModelSpec};
use rbso::renorm::{
    delta_coeff, fourth_cumulant_sum, iota, loop_mc_compare, loop_sum_distinct,
    loop_sum_distinct_brute, loop_sum_full, loop_sum_full_spectral, texp_second_order_check,
    LoopStructure, Verdict,
};
use rbso::spectra::{
    bulk_indices, eigh, participation_ratio, que_flatness, que_trace_bound_check,
    sup_norm_stats, transition_scan, write_transition_csv, FlatnessMask,
};
use serde_json::json;
use std::process::ExitCode;

const EXIT_PASS: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_FAIL: u8 = 2;
const EXIT_INCONCLUSIVE: u8 = 3;

#[derive(Parser)]
#[command(name = "rbso", about = "Random block Schrödinger operator laboratory", version)]
struct Cli {
    /// Path to the TOML run configuration.
    #[arg(long, global = true, env = "RBSO_CONFIG")]
    config: Option<String>,
    /// Base seed override (precedence: config < env < flag).
    #[arg(long, global = true, env = "RBSO_SEED")]
    seed: Option<u64>,
    /// Worker count override; 0 = all cores.
    #[arg(long, global = true, env = "RBSO_WORKERS")]
    workers: Option<usize>,
    /// Output directory override.
    #[arg(long, global = true, env = "RBSO_OUT")]
    out: Option<String>,
    /// Output format override: csv, jsonl, or both.
    #[arg(long, global = true, env = "RBSO_FORMAT")]
    format: Option<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the closed-form scale parameters of the model.
    Params,
    /// Ward-identity residuals over a Monte Carlo ensemble.
    Ward,
    /// Local-law diagnostics: max|G−M|, T ratios, T profile vs theory.
    Locallaw,
    /// Diffusive-profile comparison of E T_xy against |m|²ϑ.
    Diffusion,
    /// Eigenvector statistics: sup-norms, participation ratios.
    Spectrum,
    /// Flatness scores and the deterministic trace-bound check.
    Que,
    /// λ-sweep transition scan (CSV table).
    Scan,
    /// Renormalization checks: Δ tables, ι sum-zero, loop sums, the GUE
    /// comparison, and the fourth-cumulant row sum.
    Renorm,
    /// Second-order expansion identity in expectation.
    Texp,
    /// Config-free exact-identity suite.
    Selftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    spec: ModelSpec,
    workers: usize,
    emitter: Emitter,
}

fn load_ctx(cli: &Cli, name: &str) -> Result<Ctx, String> {
    let path = cli
        .config
        .as_ref()
        .ok_or("missing --config (or RBSO_CONFIG)")?;
    let text = std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?;
    let cfg = RunConfig::parse(&text)?;
    let spec = cfg.model_spec(cli.seed)?;
    let workers = cli.workers.unwrap_or(cfg.experiment.workers);
    let dir = cli.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    let fmt_name = cli.format.clone().unwrap_or_else(|| cfg.output.format.clone());
    let format = Format::parse(&fmt_name).ok_or(format!("unknown format '{fmt_name}'"))?;
    let hash = config_hash(&cfg.canonical());
    let emitter = Emitter::create(&dir, name, format, hash, spec.seed)
        .map_err(|e| format!("output dir {dir}: {e}"))?;
    Ok(Ctx { cfg, spec, workers, emitter })
}

fn run(cli: &Cli) -> Result<u8, String> {
    match cli.cmd {
        Cmd::Params => cmd_params(cli),
        Cmd::Ward => cmd_ward(cli),
        Cmd::Locallaw => cmd_locallaw(cli),
        Cmd::Diffusion => cmd_diffusion(cli),
        Cmd::Spectrum => cmd_spectrum(cli),
        Cmd::Que => cmd_que(cli),
        Cmd::Scan => cmd_scan(cli),
        Cmd::Renorm => cmd_renorm(cli),
        Cmd::Texp => cmd_texp(cli),
        Cmd::Selftest => Ok(cmd_selftest()),
    }
}

fn model_params_json(spec: &ModelSpec) -> serde_json::Value {
    json!({
        "kind": spec.kind.tag(),
        "d": spec.lat.dim(),
        "w": spec.lat.block_side(),
        "n": spec.lat.blocks_per_side(),
        "lambda": spec.lambda,
    })
}

fn cmd_params(cli: &Cli) -> Result<u8, String> {
    let mut ctx = load_ctx(cli, "params")?;
    let p = scale_params(&ctx.spec).map_err(|e| e.to_string())?;
    println!("model      : {} (d={}, W={}, n={}, λ={})",
        ctx.spec.kind.tag(),
        ctx.spec.lat.dim(),
        ctx.spec.lat.block_side(),
        ctx.spec.lat.blocks_per_side(),
        ctx.spec.lambda,
    );
    println!("Λ_Ψ        : {:.6}", p.lambda_psi);
    println!("β(λ)       : {:.6}", p.beta);
    println!("𝔥_λ        : {:.6}", p.h_lambda);
    println!("η_*        : {:.6e}", p.eta_star);
    println!("t_Th       : {:.6}", p.t_thouless);
    println!("deloc cond : {} (λΛ_Ψ ≥ W^{{d/4}})", p.deloc_condition);
    ctx.emitter
        .record("scale_params", model_params_json(&ctx.spec), &p)
        .map_err(|e| e.to_string())?;
    Ok(EXIT_PASS)
}

fn cmd_ward(cli: &Cli) -> Result<u8, String> {
    let mut ctx = load_ctx(cli, "ward")?;
    let z = SpectralPoint::new(ctx.cfg.spectral.e, ctx.cfg.spectral.eta)
        .map_err(|e| e.to_string())?;
    if z.eta <= 0.0 {
        return Err("ward requires spectral.eta > 0".into());
    }
    let acc = ensemble_run(
        &ctx.spec,
        z,
        "ward_residual",
        1,
        ctx.cfg.experiment.n_samples,
        ctx.workers,
        |_, gs| Ok(vec![ward_check(&gs.g, z)]),
    )
    .map_err(|e| e.to_string())?;
    let max_seen = acc.mean[0] + 6.0 * acc.stderr()[0].max(0.0);
    let data = json!({
        "mean": acc.mean[0],
        "stderr": acc.stderr()[0],
        "n": acc.count,
        "failures": acc.failures,
        "gate": 1e-10,
    });
    ctx.emitter
        .record(
            "ward_residual",
            json!({"model": model_params_json(&ctx.spec), "e": z.e, "eta": z.eta}),
            &data,
        )
        .map_err(|e| e.to_string())?;
    Ok(if acc.mean[0] <= 1e-10 && max_seen.is_finite() {
        EXIT_PASS
    } else {
        EXIT_FAIL
    })
}

fn cmd_locallaw(cli: &Cli) -> Result<u8, String> {
    let mut ctx = load_ctx(cli, "locallaw")?;
    let z = SpectralPoint::new(ctx.cfg.spectral.e, ctx.cfg.spectral.eta)
        .map_err(|e| e.to_string())?;
    let ks = KernelSet::build(&ctx.spec, z).map_err(|e| e.to_string())?;
    let rep = local_law_stats(&ctx.spec, z, &ks, ctx.cfg.experiment.n_samples, ctx.workers)
        .map_err(|e| e.to_string())?;
    let mut csv = String::from("distance,t_mean,t_stderr,t_theory\n");
    for i in 0..rep.distances.len() {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            rep.distances[i], rep.t_profile_mean[i], rep.t_profile_stderr[i],
            rep.t_profile_theory[i]
        ));
    }
    ctx.emitter.csv("locallaw_profile", &csv).map_err(|e| e.to_string())?;
    // kernel export: ϑ̊ and S⁺ block rows (columns v1..vd, re, im)
    let ring: Vec<Complex64> = ks
        .theta_ring_row
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    let mut buf = Vec::new();
    ks.write_kernel_csv(&mut buf, &ring).map_err(|e| e.to_string())?;
    ctx.emitter
        .csv("kernel_theta_ring", &String::from_utf8(buf).unwrap())
        .map_err(|e| e.to_string())?;
    let mut buf = Vec::new();
    ks.write_kernel_csv(&mut buf, &ks.splus_row).map_err(|e| e.to_string())?;
    ctx.emitter
        .csv("kernel_splus", &String::from_utf8(buf).unwrap())
        .map_err(|e| e.to_string())?;
    ctx.emitter
        .record(
            "local_law",
            json!({"model": model_params_json(&ctx.spec), "e": z.e, "eta": z.eta}),
            &rep,
        )
        .map_err(|e| e.to_string())?;
    Ok(EXIT_PASS)
}

fn cmd_diffusion(cli: &Cli) -> Result<u8, String> {
    let mut ctx = load_ctx(cli, "diffusion")?;
    let z = SpectralPoint::new(ctx.cfg.spectral.e, ctx.cfg.spectral.eta)
        .map_err(|e| e.to_string())?;
    let ks = KernelSet::build(&ctx.spec, z).map_err(|e| e.to_string())?;
    let rep = local_law_stats(&ctx.spec, z, &ks, ctx.cfg.experiment.n_samples, ctx.workers)
        .map_err(|e| e.to_string())?;
    // E T_xy against the leading diffusive theory |m|²ϑ: relative
    // deviation within 3 stderr plus a 50% theory-correction budget
    let mut worst_sigma: f64 = 0.0;
    let mut inconclusive = false;
    for i in 0..rep.distances.len() {
        let th = rep.t_profile_theory[i];
        let err = (rep.t_profile_mean[i] - th).abs();
        let budget = 0.5 * th.abs();
        let se = rep.t_profile_stderr[i];
        if se == 0.0 && err > budget {
            inconclusive = true;
        } else if err > budget {
            worst_sigma = worst_sigma.max((err - budget) / se.max(1e-300));
        }
    }
    let verdict = if inconclusive {
        Verdict::Inconclusive
    } else if worst_sigma <= 3.0 {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let data = json!({
        "profile": {
            "distances": rep.distances,
            "mc": rep.t_profile_mean,
            "stderr": rep.t_profile_stderr,
            "theory": rep.t_profile_theory,
        },
        "worst_sigma_over_budget": worst_sigma,
        "verdict": verdict,
    });
    ctx.emitter
        .record(
            "diffusion_profile",
            json!({"model": model_params_json(&ctx.spec), "e": z.e, "eta": z.eta}),
            &data,
        )
        .map_err(|e| e.to_string())?;
    Ok(match verdict {
        Verdict::Pass => EXIT_PASS,
        Verdict::Fail => EXIT_FAIL,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
    })
}

fn cmd_spectrum(cli: &Cli) -> Result<u8, String> {
    let mut ctx = load_ctx(cli, "spectrum")?;
    let kappa = ctx.cfg.spectral.kappa;
    let eta_star = scale_params(&ctx.spec).ok().map(|p| p.eta_star);
    let n_samples = ctx.cfg.experiment.n_samples;
    let raw = rbso::spectra::spectrum_ensemble(&ctx.spec, n_samples, ctx.workers, |_, sp| {
        let bulk = bulk_indices(&sp.evals, kappa)?;
        let stats = sup_norm_stats(sp, kappa, eta_star)?;
        let pr: f64 =
            bulk.iter().map(|&k| participation_ratio(&sp.evecs, k)).sum::<f64>() / bulk.len() as f64;
        Ok(vec![stats.max, stats.mean, pr, bulk.len() as f64])
    })
    .map_err(|e| e.to_string())?;
    let acc = rbso::stats::EnsembleAccumulator::from_samples(
        "spectrum",
        ctx.spec.seed,
        4,
        &raw,
    );
    let se = acc.stderr();
    let data = json!({
        "sup_norm_max_mean": acc.mean[0], "sup_norm_max_stderr": se[0],
        "sup_norm_mean": acc.mean[1], "sup_norm_mean_stderr": se[1],
        "pr_mean": acc.mean[2], "pr_mean_stderr": se[2],
        "bulk_fraction": acc.mean[3] / ctx.spec.lat.n_sites() as f64,
        "eta_star": eta_star,
        "n": acc.count, "failures": acc.failures,
    });
    ctx.emitter
        .record(
            "spectrum",
            json!({"model": model_params_json(&ctx.spec), "kappa": kappa}),
            &data,
        )
        .map_err(|e| e.to_string())?;
    Ok(EXIT_PASS)
}

fn cmd_que(cli: &Cli) -> Result<u8, String> {
    let mut ctx = load_ctx(cli, "que")?;
    let kappa = ctx.cfg.spectral.kappa;
    let ell = ctx.cfg.experiment.ell;
    let lat = ctx.spec.lat;
    let eta = ctx.cfg.spectral.eta.max(1e-3);
    let l_window = ctx.cfg.experiment.l_window.max(eta);
    let e = ctx.cfg.spectral.e;
    // flatness mask over the first half of the blocks
    let half: Vec<usize> = (0..lat.n_blocks() / 2).collect();
    let mask = FlatnessMask::from_blocks(&lat, &half).map_err(|er| er.to_string())?;
    let n_samples = ctx.cfg.experiment.n_samples;
    let eps = 0.5;
    let raw = rbso::spectra::spectrum_ensemble(&ctx.spec, n_samples, ctx.workers, |_, sp| {
        let bulk = bulk_indices(&sp.evals, kappa)?;
        let scores = que_flatness(sp, &lat, ell)?;
        let mean: f64 = bulk.iter().map(|&k| scores[k]).sum::<f64>() / bulk.len() as f64;
        let max = bulk.iter().map(|&k| scores[k]).fold(0.0f64, f64::max);
        let exceed = rbso::spectra::que_exceed_fraction(&scores, &bulk, eps);
        let g = rbso::greens::resolvent_from_spectrum(
            &sp.evals,
            &sp.evecs,
            SpectralPoint::new(e, eta).map_err(|er| rbso::Error::InvalidParameter(er.to_string()))?,
        );
        let chk = que_trace_bound_check(sp, &g, &mask, e, l_window, eta);
        Ok(vec![mean, max, exceed, if chk.pass { 1.0 } else { 0.0 }, chk.slack])
    })
    .map_err(|e| e.to_string())?;
    let acc = rbso::stats::EnsembleAccumulator::from_samples("que", ctx.spec.seed, 5, &raw);
    let all_pass = acc.mean[3] == 1.0 && acc.count > 0;
    let data = json!({
        "flatness_mean": acc.mean[0],
        "flatness_max_mean": acc.mean[1],
        "flatness_exceed_eps": eps,
        "flatness_exceed_fraction": acc.mean[2],
        "trace_bound_pass_fraction": acc.mean[3],
        "trace_bound_slack_mean": acc.mean[4],
        "n": acc.count, "failures": acc.failures,
    });
    ctx.emitter
        .record(
            "que",
            json!({
                "model": model_params_json(&ctx.spec),
                "kappa": kappa, "ell": ell, "l_window": l_window, "eta": eta, "e": e,
            }),
            &data,
        )
        .map_err(|e| e.to_string())?;
    Ok(if all_pass { EXIT_PASS } else { EXIT_FAIL })
}

fn cmd_scan(cli: &Cli) -> Result<u8, String> {
    let mut ctx = load_ctx(cli, "scan")?;
    let grid = if ctx.cfg.experiment.lambda_grid.is_empty() {
        vec![ctx.spec.lambda]
    } else {
        ctx.cfg.experiment.lambda_grid.clone()
    };
    let rows = transition_scan(
        &ctx.spec,
        &grid,
        ctx.cfg.spectral.e,
        ctx.cfg.spectral.kappa,
        ctx.cfg.experiment.ell,
        ctx.cfg.experiment.s,
        ctx.cfg.experiment.n_samples,
        ctx.workers,
    );
    let mut csv = Vec::new();
    write_transition_csv(&mut csv, &rows).map_err(|e| e.to_string())?;
    ctx.emitter
        .csv("transition_scan", &String::from_utf8(csv).unwrap())
        .map_err(|e| e.to_string())?;
    ctx.emitter
        .record("transition_scan", model_params_json(&ctx.spec), &rows)
        .map_err(|e| e.to_string())?;
    let failed = rows.iter().any(|r| r.n_samples == 0);
    Ok(if failed { EXIT_FAIL } else { EXIT_PASS })
}

fn cmd_renorm(cli: &Cli) -> Result<u8, String> {
    let mut ctx = load_ctx(cli, "renorm")?;
    let z = SpectralPoint::new(ctx.cfg.spectral.e, ctx.cfg.spectral.eta.max(1e-6))
        .map_err(|e| e.to_string())?;
    let m = msc(z).map_err(|e| e.to_string())?;
    let mut worst = Verdict::Pass;
    let bump = |v: Verdict, worst: &mut Verdict| {
        if v == Verdict::Fail || (*worst != Verdict::Fail && v == Verdict::Inconclusive) {
            *worst = v;
        }
    };

    // Δ tables at this z
    for (name, st) in [
        ("pi0", LoopStructure::pi0()),
        ("pi1", LoopStructure::pi1()),
        ("pi2", LoopStructure::pi2()),
    ] {
        let d = delta_coeff(&st, m).map_err(|e| e.to_string())?;
        let verdict = if name == "pi2" {
            if d.value == Complex64::new(0.0, 0.0) { Verdict::Pass } else { Verdict::Fail }
        } else {
            Verdict::Pass
        };
        bump(verdict, &mut worst);
        ctx.emitter
            .record(
                "delta_coeff",
                json!({"structure": name, "e": z.e, "eta": z.eta}),
                &json!({
                    "value": [d.value.re, d.value.im],
                    "budget": format!("O(η), η = {}", z.eta),
                    "verdict": verdict,
                }),
            )
            .map_err(|e| e.to_string())?;
    }

    // ι sum-zero fitted constant over the interior bulk
    {
        let mut fitted: f64 = 0.0;
        let mut e = -1.6;
        while e <= 1.6 + 1e-9 {
            for eta in [1e-4, 1e-3, 1e-2, 1e-1] {
                let mm = msc(SpectralPoint::new(e, eta).unwrap()).unwrap();
                let i = iota(mm).map_err(|er| er.to_string())?;
                fitted = fitted.max((2.0 * i.re + 1.0).abs() / eta);
            }
            e += 0.1;
        }
        let verdict = if fitted <= 10.0 { Verdict::Pass } else { Verdict::Fail };
        bump(verdict, &mut worst);
        ctx.emitter
            .record(
                "iota_sum_zero",
                json!({"e_range": [-1.6, 1.6]}),
                &json!({"value": fitted, "budget": 10.0, "verdict": verdict}),
            )
            .map_err(|e| e.to_string())?;
    }

    // distinct-loop inclusion–exclusion against the brute-force oracle
    {
        let lat = TorusLattice::new(1, 16, 1).map_err(|e| e.to_string())?;
        let spec = ModelSpec::new(ModelKind::Gue, lat, 0.0, ctx.spec.seed)
            .map_err(|e| e.to_string())?;
        let h = assemble(&spec, 0);
        let g = rbso::greens::resolvent(&h, SpectralPoint::new(0.1, 0.3).unwrap())
            .map_err(|e| e.to_string())?;
        let fast = loop_sum_distinct(&g.g);
        let brute = loop_sum_distinct_brute(&g.g);
        let dev = (fast - brute).norm() / brute.norm().max(1.0);
        let verdict = if dev <= 1e-10 { Verdict::Pass } else { Verdict::Fail };
        bump(verdict, &mut worst);
        ctx.emitter
            .record(
                "distinct_loop_oracle",
                json!({"n": 16}),
                &json!({"value": dev, "budget": 1e-10, "verdict": verdict}),
            )
            .map_err(|e| e.to_string())?;
    }

    // GUE loop-sum renormalization
    {
        let rep = loop_mc_compare(
            64,
            ctx.cfg.spectral.e,
            ctx.cfg.experiment.epsilon0,
            ctx.cfg.experiment.n_samples,
            ctx.spec.seed,
            ctx.workers,
            ctx.cfg.experiment.gate_c,
        )
        .map_err(|e| e.to_string())?;
        bump(rep.verdict, &mut worst);
        ctx.emitter
            .record(
                "loop_mc_compare",
                json!({"n_dim": 64, "e": ctx.cfg.spectral.e, "epsilon0": ctx.cfg.experiment.epsilon0}),
                &rep,
            )
            .map_err(|e| e.to_string())?;
    }

    // fourth-cumulant sum-zero ratio
    {
        let out = fourth_cumulant_sum(&ctx.spec, z, ctx.cfg.experiment.kappa4)
            .map_err(|e| e.to_string())?;
        ctx.emitter
            .record(
                "fourth_cumulant_sum",
                json!({"model": model_params_json(&ctx.spec), "kappa4": ctx.cfg.experiment.kappa4, "eta": z.eta}),
                &out,
            )
            .map_err(|e| e.to_string())?;
    }

    Ok(match worst {
        Verdict::Pass => EXIT_PASS,
        Verdict::Fail => EXIT_FAIL,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
    })
}

fn cmd_texp(cli: &Cli) -> Result<u8, String> {
    let mut ctx = load_ctx(cli, "texp")?;
    let z = SpectralPoint::new(ctx.cfg.spectral.e, ctx.cfg.spectral.eta)
        .map_err(|e| e.to_string())?;
    let idx = (
        ctx.cfg.experiment.index_a,
        ctx.cfg.experiment.index_b1,
        ctx.cfg.experiment.index_b2,
    );
    let rep = texp_second_order_check(&ctx.spec, z, idx, ctx.cfg.experiment.n_samples, ctx.workers)
        .map_err(|e| e.to_string())?;
    ctx.emitter
        .record(
            "texp_second_order",
            json!({"model": model_params_json(&ctx.spec), "e": z.e, "eta": z.eta, "indices": [idx.0, idx.1, idx.2]}),
            &rep,
        )
        .map_err(|e| e.to_string())?;
    Ok(match rep.verdict {
        Verdict::Pass => EXIT_PASS,
        Verdict::Fail => EXIT_FAIL,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
    })
}

/// Config-free exact-identity suite; exits nonzero at the first failure.
fn cmd_selftest() -> u8 {
    let t0 = std::time::Instant::now();
    let mut failed: Option<String> = None;
    let mut check = |module_op: &str, ok: bool, detail: String| {
        let status = if ok { "ok" } else { "FAIL" };
        println!("selftest {module_op:<38} {status}  {detail}");
        if !ok && failed.is_none() {
            failed = Some(module_op.to_string());
        }
    };

    // Ward identity on one realization of each kind
    {
        let z = SpectralPoint::new(0.1, 0.5).unwrap();
        let mut worst: f64 = 0.0;
        for kind in [
            ModelKind::BlockAnderson,
            ModelKind::AndersonOrbital,
            ModelKind::WegnerOrbital,
            ModelKind::Gue,
        ] {
            let spec =
                ModelSpec::new(kind, TorusLattice::new(1, 3, 3).unwrap(), 0.3, 5).unwrap();
            let h = assemble(&spec, 0);
            let g = rbso::greens::resolvent(&h, z).unwrap();
            worst = worst.max(ward_check(&g.g, z));
        }
        check("greens/ward_check", worst <= 1e-10, format!("residual {worst:.2e}"));
    }

    // zero mode of T-variables
    {
        let spec = ModelSpec::new(
            ModelKind::BlockAnderson,
            TorusLattice::new(1, 3, 3).unwrap(),
            0.3,
            5,
        )
        .unwrap();
        let z = SpectralPoint::new(0.0, 0.5).unwrap();
        let h = assemble(&spec, 0);
        let g = rbso::greens::resolvent(&h, z).unwrap();
        let s = rbso::mfield::variance_matrix(&spec).to_dense();
        let (t, ring) = rbso::greens::t_profile(&g.g, &s, 1, 7);
        let zm = (g.g[(7, 1)] - g.g[(1, 7)].conj())
            / (Complex64::new(0.0, 2.0) * 9.0 * 0.5);
        let worst = (0..9)
            .map(|x| ((t[x] - ring[x]) - zm).norm())
            .fold(0.0, f64::max);
        check("greens/t_variable zero mode", worst <= 1e-10, format!("defect {worst:.2e}"));
    }

    // Fourier vs direct ϑ̊ for the three models
    {
        let mut worst: f64 = 0.0;
        for kind in [
            ModelKind::BlockAnderson,
            ModelKind::AndersonOrbital,
            ModelKind::WegnerOrbital,
        ] {
            let spec =
                ModelSpec::new(kind, TorusLattice::new(1, 3, 5).unwrap(), 0.2, 0).unwrap();
            let ks = KernelSet::build(&spec, SpectralPoint::new(0.2, 0.1).unwrap()).unwrap();
            let four = ks.theta_ring_fourier_row().unwrap();
            for (a, b) in four.iter().zip(&ks.theta_ring_row) {
                worst = worst.max((a - b).abs());
            }
        }
        check("mfield/theta fourier-vs-direct", worst <= 1e-9, format!("deviation {worst:.2e}"));
    }

    // kernel row-sum identities
    {
        let spec = ModelSpec::new(
            ModelKind::AndersonOrbital,
            TorusLattice::new(1, 3, 5).unwrap(),
            0.2,
            0,
        )
        .unwrap();
        let z = SpectralPoint::new(0.4, 0.05).unwrap();
        let ks = KernelSet::build(&spec, z).unwrap();
        let want = ks.m.m.im / (z.eta + ks.m.m.im);
        let defect = (ks.m0_row_sum() - want).abs();
        check("mfield/m0 row sum", defect <= 1e-10, format!("defect {defect:.2e}"));
    }

    // Δ tables
    {
        let m_i = Complex64::new(0.0, 1.0);
        let d0 = delta_coeff(&LoopStructure::pi0(), m_i).unwrap().value.norm();
        let d1 = delta_coeff(&LoopStructure::pi1(), m_i).unwrap().value.norm();
        let d2 = delta_coeff(&LoopStructure::pi2(), Complex64::new(0.2, 0.6))
            .unwrap()
            .value
            .norm();
        check(
            "renorm/delta tables",
            d0 < 1e-13 && d1 < 1e-13 && d2 == 0.0,
            format!("|Δ(Π₀)|={d0:.1e} |Δ(Π₁)|={d1:.1e} |Δ(Π₂)|={d2:.1e} at m=i"),
        );
    }

    // loop-sum trace identity against the spectral oracle
    {
        let spec =
            ModelSpec::new(ModelKind::Gue, TorusLattice::new(1, 24, 1).unwrap(), 0.0, 2).unwrap();
        let h = assemble(&spec, 0);
        let z = SpectralPoint::new(0.1, 0.3).unwrap();
        let g = rbso::greens::resolvent(&h, z).unwrap();
        let ev = eigh(&h.h).unwrap().evals;
        let lhs = loop_sum_full(&g.g, 1);
        let rhs = loop_sum_full_spectral(&ev, z.z(), 1);
        let dev = (lhs.re - rhs).abs() / rhs.abs().max(1.0) + lhs.im.abs();
        check("renorm/loop_sum trace identity", dev <= 1e-9, format!("deviation {dev:.2e}"));
    }

    // distinct-loop inclusion–exclusion against brute force
    {
        let spec =
            ModelSpec::new(ModelKind::Gue, TorusLattice::new(1, 12, 1).unwrap(), 0.0, 3).unwrap();
        let h = assemble(&spec, 0);
        let g = rbso::greens::resolvent(&h, SpectralPoint::new(0.0, 0.4).unwrap()).unwrap();
        let dev = (loop_sum_distinct(&g.g) - loop_sum_distinct_brute(&g.g)).norm();
        check("renorm/loop_sum_distinct oracle", dev <= 1e-10, format!("deviation {dev:.2e}"));
    }

    let ok = failed.is_none();
    println!(
        "selftest: {} in {:.1} s",
        if ok { "all exact identities hold" } else { "FAILED" },
        t0.elapsed().as_secs_f64()
    );
    if let Some(op) = failed {
        eprintln!("first failure: {op}");
        return EXIT_FAIL;
    }
    EXIT_PASS
}
