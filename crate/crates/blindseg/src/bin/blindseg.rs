//! Command-line front end for two-party blind segmentation.
//!
//! Typical flow:
//!
//! ```text
//! blindseg gen     --out demo --variant hybrid --dims 1x8x8x8 --base 4
//! blindseg oracle  --dir demo --out demo/labels_ref.bin
//! blindseg run     --dir demo --role both --out demo/labels.bin --report demo/report.json
//! blindseg bench   --variant square --reps 3
//! ```
//!
//! `run` with `--role alice` / `--role bob` connects the two parties over
//! TCP (`--transport tcp --addr HOST:PORT`); Bob listens, Alice connects.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use blindseg::pahe::{keygen, rotation_keys_to_bytes, PaheParams};
use blindseg::protocols::activation::TruncKind;
use blindseg::ring::DEFAULT_P;
use blindseg::runtime::session::{
    config_pair, rotation_steps_for, run_party, run_secure_inference,
    SessionOutcome,
};
use blindseg::runtime::{Link, TcpTransport};
use blindseg::unet::io::{
    read_spec, read_tensor, read_weights, write_spec, write_tensor, write_weights,
};
use blindseg::unet::oracle::{oracle_infer, Tensor, TruncMode};
use blindseg::unet::quant::{analyze, gen_synthetic_weights, QuantParams, QuantSchedule, Weights};
use blindseg::unet::{build_architecture, Dims, NetworkSpec, Variant};
use blindseg::{Error, Result, Role};

#[derive(Parser)]
#[command(
    name = "blindseg",
    about = "Two-party blind medical-image segmentation",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic fixture: network spec, quantized weights, input.
    Gen(GenArgs),
    /// Run the plaintext reference executor on a fixture.
    Oracle(OracleArgs),
    /// Run the two-party secure inference protocol.
    Run(RunArgs),
    /// Time the secure primitives across variants on a small fixture.
    Bench(BenchArgs),
    /// Generate Alice's rotation keys for a spec and report their size.
    Keygen(KeygenArgs),
    /// Print the commitment to a dealer seed.
    Dealer(DealerArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Architecture variant: baseline | relu-avg | hybrid | square.
    #[arg(long, default_value = "hybrid")]
    variant: String,
    /// Input dims as CxDxHxW; depth 1 selects the 2-D network.
    #[arg(long, default_value = "1x8x8x8")]
    dims: String,
    /// Channel count of the first stage (64 reproduces the full network).
    #[arg(long, default_value_t = 4)]
    base: usize,
    /// Number of output classes.
    #[arg(long, default_value_t = 3)]
    classes: usize,
    /// Activation bit budget between layers.
    #[arg(long, default_value_t = 6)]
    quant_bits: u32,
    /// Weight bit budget.
    #[arg(long, default_value_t = 4)]
    weight_bits: u32,
    /// Seed of the synthetic weights.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Seed of the synthetic input image.
    #[arg(long, default_value_t = 2)]
    input_seed: u64,
}

#[derive(Args)]
struct FixtureArgs {
    /// Fixture directory holding spec.toml, weights.json, input.bin.
    #[arg(long)]
    dir: Option<PathBuf>,
    /// Network spec (overrides --dir).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Weights file (overrides --dir).
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Input image tensor (overrides --dir).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Activation bit budget used when the fixture was generated.
    #[arg(long, default_value_t = 6)]
    quant_bits: u32,
    /// Weight bit budget used when the fixture was generated.
    #[arg(long, default_value_t = 4)]
    weight_bits: u32,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    fixture: FixtureArgs,
    /// Truncation discipline: exact | prob.
    #[arg(long, default_value = "exact")]
    trunc: String,
    /// Where to write the label tensor.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    fixture: FixtureArgs,
    /// alice | bob | both. `both` runs the two parties in one process.
    #[arg(long, default_value = "both")]
    role: String,
    /// mem | tcp. `mem` only works with --role both.
    #[arg(long, default_value = "mem")]
    transport: String,
    /// TCP address (Bob listens, Alice connects).
    #[arg(long, default_value = "127.0.0.1:7878")]
    addr: String,
    /// Truncation discipline: exact | prob.
    #[arg(long, default_value = "exact")]
    trunc: String,
    /// Shared dealer seed (trusted-dealer stand-in; must match on both sides).
    #[arg(long, default_value_t = 7)]
    dealer_seed: u64,
    /// Alice's key-generation seed.
    #[arg(long, default_value_t = 8)]
    key_seed: u64,
    /// Local randomness seed.
    #[arg(long, default_value_t = 9)]
    seed: u64,
    /// Where to write the label tensor (Alice side only).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the timing report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Variants to bench, comma-separated; default all four.
    #[arg(long, default_value = "baseline,relu-avg,hybrid,square")]
    variant: String,
    /// Input dims as CxDxHxW.
    #[arg(long, default_value = "1x8x8x8")]
    dims: String,
    /// Channel count of the first stage.
    #[arg(long, default_value_t = 4)]
    base: usize,
    /// Repetitions per variant.
    #[arg(long, default_value_t = 3)]
    reps: usize,
    /// Truncation discipline: exact | prob.
    #[arg(long, default_value = "prob")]
    trunc: String,
    /// Base seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct KeygenArgs {
    /// Network spec whose pooling layers determine the rotation steps.
    #[arg(long)]
    spec: PathBuf,
    /// Key-generation seed.
    #[arg(long, default_value_t = 8)]
    seed: u64,
    /// Where to write the serialized rotation keys.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DealerArgs {
    #[arg(long)]
    seed: u64,
}

fn parse_dims(s: &str) -> Result<Dims> {
    let parts: Vec<usize> = s
        .split('x')
        .map(|t| t.parse().map_err(|_| Error::Params(format!("bad dims '{s}'"))))
        .collect::<Result<_>>()?;
    match parts[..] {
        [c, d, h, w] => Ok(Dims::new(c, d, h, w)),
        _ => Err(Error::Params(format!(
            "dims must be CxDxHxW, got '{s}'"
        ))),
    }
}

fn parse_trunc(s: &str) -> Result<TruncKind> {
    match s {
        "exact" => Ok(TruncKind::Exact),
        "prob" => Ok(TruncKind::Prob),
        _ => Err(Error::Params(format!("unknown truncation mode '{s}'"))),
    }
}

struct Fixture {
    spec: NetworkSpec,
    schedule: QuantSchedule,
    weights: Weights,
    input: Tensor,
}

fn load_fixture(args: &FixtureArgs) -> Result<Fixture> {
    let dir = args.dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let path = |explicit: &Option<PathBuf>, name: &str| {
        explicit.clone().unwrap_or_else(|| dir.join(name))
    };
    let mut spec = read_spec(&path(&args.spec, "spec.toml"))?;
    let weights = read_weights(&path(&args.weights, "weights.json"))?;
    let input = read_tensor(&path(&args.input, "input.bin"))?;
    let qp = QuantParams {
        b_a: args.quant_bits,
        b_w: args.weight_bits,
    };
    // the analyzer is deterministic in (spec structure, weights, budgets), so
    // re-running it reproduces the shifts recorded in the spec file and
    // yields the truncation bounds the probabilistic protocol needs
    let schedule = analyze(&mut spec, &weights, qp, DEFAULT_P)?;
    Ok(Fixture {
        spec,
        schedule,
        weights,
        input,
    })
}

fn cmd_gen(args: &GenArgs) -> Result<()> {
    let dims = parse_dims(&args.dims)?;
    let variant = Variant::parse(&args.variant)?;
    let qp = QuantParams {
        b_a: args.quant_bits,
        b_w: args.weight_bits,
    };
    let mut spec = build_architecture(dims, args.base, args.classes, variant)?;
    let weights = gen_synthetic_weights(&spec, qp, args.seed);
    analyze(&mut spec, &weights, qp, DEFAULT_P)?;
    let limit = (1i64 << (qp.b_a - 1)) - 1;
    let mut rng = ChaCha20Rng::seed_from_u64(args.input_seed);
    let input = Tensor::new(
        dims,
        (0..dims.numel()).map(|_| rng.gen_range(-limit..=limit)).collect(),
    )?;
    std::fs::create_dir_all(&args.out)?;
    write_spec(&args.out.join("spec.toml"), &spec)?;
    write_weights(&args.out.join("weights.json"), &weights)?;
    write_tensor(&args.out.join("input.bin"), &input)?;
    println!(
        "wrote {} ({} layers, variant {}, input {}x{}x{}x{})",
        args.out.display(),
        spec.layers.len(),
        args.variant,
        dims.c,
        dims.d,
        dims.h,
        dims.w
    );
    Ok(())
}

fn cmd_oracle(args: &OracleArgs) -> Result<()> {
    let fx = load_fixture(&args.fixture)?;
    let mode = match parse_trunc(&args.trunc)? {
        TruncKind::Exact => TruncMode::Exact,
        TruncKind::Prob => TruncMode::Prob,
    };
    let t0 = std::time::Instant::now();
    let (labels, _) = oracle_infer(&fx.spec, &fx.weights, &fx.input, mode, DEFAULT_P)?;
    println!(
        "oracle: {} pixels labeled in {:.1} ms",
        labels.data.len(),
        t0.elapsed().as_secs_f64() * 1e3
    );
    if let Some(out) = &args.out {
        write_tensor(out, &labels)?;
        println!("labels written to {}", out.display());
    }
    Ok(())
}

fn finish_run(
    outcome: &SessionOutcome,
    out: &Option<PathBuf>,
    report: &Option<PathBuf>,
) -> Result<()> {
    println!("{}", outcome.ledger.render_text());
    println!(
        "traffic: {} B sent / {} B received over {} / {} frames",
        outcome.bytes_sent, outcome.bytes_received, outcome.frames_sent, outcome.frames_received
    );
    if let Some(labels) = &outcome.labels {
        if let Some(path) = out {
            write_tensor(path, labels)?;
            println!("labels written to {}", path.display());
        }
    } else if out.is_some() {
        eprintln!("note: this party does not learn the labels; --out ignored");
    }
    if let Some(path) = report {
        let mut json = outcome.ledger.to_json();
        json["bytes_sent"] = outcome.bytes_sent.into();
        json["bytes_received"] = outcome.bytes_received.into();
        std::fs::write(path, serde_json::to_vec_pretty(&json).expect("report serializes"))?;
        println!("report written to {}", path.display());
    }
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let fx = load_fixture(&args.fixture)?;
    let trunc = parse_trunc(&args.trunc)?;
    let (cfg_a, cfg_b) = config_pair(
        &fx.spec,
        &fx.schedule,
        trunc,
        args.dealer_seed,
        args.key_seed,
        fx.weights,
        fx.input,
        args.seed,
    );
    match (args.role.as_str(), args.transport.as_str()) {
        ("both", "mem") => {
            let (oa, _ob) = run_secure_inference(cfg_a, cfg_b)?;
            finish_run(&oa, &args.out, &args.report)
        }
        ("both", t) => Err(Error::Params(format!(
            "--role both requires --transport mem, got '{t}'"
        ))),
        (role @ ("alice" | "bob"), "tcp") => {
            let (role, cfg) = if role == "alice" {
                (Role::Alice, cfg_a)
            } else {
                (Role::Bob, cfg_b)
            };
            // Bob (the server) listens; Alice (the client) connects
            let stream = match role {
                Role::Bob => TcpTransport::listen(&args.addr)?,
                Role::Alice => TcpTransport::connect(&args.addr)?,
            };
            let mut link = Link::new(Box::new(stream));
            let outcome = run_party(role, &mut link, &cfg)?;
            finish_run(&outcome, &args.out, &args.report)
        }
        (r, t) => Err(Error::Params(format!(
            "unsupported --role {r} / --transport {t} combination"
        ))),
    }
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let dims = parse_dims(&args.dims)?;
    let trunc = parse_trunc(&args.trunc)?;
    let qp = QuantParams::default();
    for (vi, name) in args.variant.split(',').enumerate() {
        let variant = Variant::parse(name.trim())?;
        let mut spec = build_architecture(dims, args.base, 3, variant)?;
        let weights = gen_synthetic_weights(&spec, qp, args.seed);
        let schedule = analyze(&mut spec, &weights, qp, DEFAULT_P)?;
        let mut merged = blindseg::runtime::TimingLedger::new();
        let mut total_ms = 0.0;
        for rep in 0..args.reps {
            let mut rng = ChaCha20Rng::seed_from_u64(args.seed ^ (rep as u64) << 8);
            let limit = (1i64 << (qp.b_a - 1)) - 1;
            let input = Tensor::new(
                dims,
                (0..dims.numel()).map(|_| rng.gen_range(-limit..=limit)).collect(),
            )?;
            let (ca, cb) = config_pair(
                &spec,
                &schedule,
                trunc,
                args.seed + 100 + vi as u64,
                args.seed + 200,
                weights.clone(),
                input,
                args.seed + 300 + rep as u64,
            );
            let t0 = std::time::Instant::now();
            let (oa, _) = run_secure_inference(ca, cb)?;
            total_ms += t0.elapsed().as_secs_f64() * 1e3;
            merged.merge(&oa.ledger);
        }
        println!(
            "=== {} ({} reps, {:.1} ms avg wall) ===",
            name.trim(),
            args.reps,
            total_ms / args.reps as f64
        );
        println!("{}", merged.render_text());
    }
    Ok(())
}

fn cmd_keygen(args: &KeygenArgs) -> Result<()> {
    let spec = read_spec(&args.spec)?;
    let params = PaheParams::default_params();
    let steps = rotation_steps_for(&spec);
    let (_sk, rks) = keygen(&params, &steps, args.seed);
    let blob = rotation_keys_to_bytes(&params, &rks);
    println!(
        "{} rotation steps, {} bytes of key material",
        steps.len(),
        blob.len()
    );
    if let Some(out) = &args.out {
        std::fs::write(out, &blob)?;
        println!("rotation keys written to {}", out.display());
    }
    Ok(())
}

fn cmd_dealer(args: &DealerArgs) -> Result<()> {
    let commitment = blindseg::mpc::Dealer::new(args.seed).commitment();
    let hex: String = commitment.iter().map(|b| format!("{b:02x}")).collect();
    println!("{hex}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Gen(a) => cmd_gen(a),
        Cmd::Oracle(a) => cmd_oracle(a),
        Cmd::Run(a) => cmd_run(a),
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::Keygen(a) => cmd_keygen(a),
        Cmd::Dealer(a) => cmd_dealer(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("blindseg: {e}");
            ExitCode::FAILURE
        }
    }
}
