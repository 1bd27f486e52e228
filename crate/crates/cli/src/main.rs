mod format;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use gridstrength::dynamics::{damping_ratio, StateKind};
use gridstrength::{
    assess_reduced, attach_gfm, compute_cgscr, compute_modes, direct_full_model, estimate_damping,
    parse_device, parse_network, reduce_spec, simulate, size_network, Channel,
    Disturbance, DisturbanceKind, Error, GfmAttachment, GflDeviceParams, NetworkSpec, Verdict,
};

use format::{complex, percent, sig6, Style};
use report::*;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "gridstrength", version, about = "Grid strength, GFM sizing and small-signal checks")]
struct Cli {
    /// Emit a machine-readable JSON report on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// gSCR and modal eigenvalues of a network.
    Gscr { network: PathBuf },
    /// GFM capacity needed to reach a target gSCR.
    SizeGfm {
        network: PathBuf,
        #[arg(long)]
        target_gscr: f64,
        #[arg(long)]
        z_local: f64,
        /// Size of one GFM unit, MVA.
        #[arg(long)]
        unit_mva: Option<f64>,
    },
    /// Critical SCR of a device on an infinite bus.
    Cgscr {
        device: PathBuf,
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [0.5, 10.0])]
        bracket: Vec<f64>,
    },
    /// Stability verdict for a network, device and GFM capacity ratio.
    Assess {
        network: PathBuf,
        device: PathBuf,
        #[command(flatten)]
        gfm: GfmArgs,
    },
    /// Linear time-domain response written as CSV.
    Simulate {
        network: PathBuf,
        device: PathBuf,
        #[command(flatten)]
        gfm: GfmArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = gridstrength::simulation::DEFAULT_DT)]
        dt: f64,
        #[arg(long, default_value_t = gridstrength::simulation::DEFAULT_DURATION)]
        duration: f64,
        #[command(flatten)]
        disturbance: DisturbanceArgs,
    },
}

#[derive(Args)]
struct GfmArgs {
    /// Uniform GFM/GFL capacity ratio.
    #[arg(long, default_value_t = 0.0, conflicts_with = "gamma_per_farm")]
    gamma: f64,
    /// Per-farm capacity ratios in farm order, comma separated.
    #[arg(long, value_delimiter = ',')]
    gamma_per_farm: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.16)]
    z_local: f64,
}

impl GfmArgs {
    fn attachment(&self) -> Result<GfmAttachment, Error> {
        match &self.gamma_per_farm {
            Some(g) => GfmAttachment::per_farm(g.clone(), self.z_local),
            None => GfmAttachment::uniform(self.gamma, self.z_local),
        }
    }

    fn value(&self) -> GammaValue {
        match &self.gamma_per_farm {
            Some(g) => GammaValue::PerFarm(g.clone()),
            None => GammaValue::Uniform(self.gamma),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Step,
    Impulse,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChannelArg {
    Id,
    Iq,
    Angle,
}

#[derive(Args)]
struct DisturbanceArgs {
    /// Farm to disturb; defaults to the first farm.
    #[arg(long)]
    farm: Option<String>,
    #[arg(long, value_enum, default_value = "step")]
    kind: KindArg,
    #[arg(long, value_enum, default_value = "id")]
    channel: ChannelArg,
    #[arg(long, default_value_t = 0.05, allow_hyphen_values = true)]
    magnitude: f64,
    #[arg(long, default_value_t = 0.1)]
    t_apply: f64,
    /// Accept magnitudes above the small-signal limit of 0.1.
    #[arg(long)]
    allow_large: bool,
}

impl DisturbanceArgs {
    fn build(&self, first_farm: &str) -> Disturbance {
        Disturbance {
            kind: match self.kind {
                KindArg::Step => DisturbanceKind::SetpointStep,
                KindArg::Impulse => DisturbanceKind::StateImpulse,
            },
            farm: self.farm.clone().unwrap_or_else(|| first_farm.to_string()),
            channel: match self.channel {
                ChannelArg::Id => Channel::IdSetpoint,
                ChannelArg::Iq => Channel::IqSetpoint,
                ChannelArg::Angle => Channel::PllAngle,
            },
            magnitude: self.magnitude,
            t_apply: self.t_apply,
            allow_large: self.allow_large,
        }
    }
}

mod exit {
    pub const OK: u8 = 0;
    pub const INTERNAL: u8 = 1;
    pub const INPUT: u8 = 2;
    pub const BRACKET: u8 = 3;
    pub const UNSTABLE: u8 = 4;
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::NoSignChange { .. } => exit::BRACKET,
            e if e.is_input_error() => exit::INPUT,
            _ => exit::INTERNAL,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure {
        code: exit::INPUT,
        message: message.into(),
    }
}

fn read_input(role: &'static str, path: &Path) -> Result<(String, InputDigest), Failure> {
    let bytes = fs::read(path).map_err(|e| input_error(format!("cannot read {}: {e}", path.display())))?;
    let digest = InputDigest::new(role, path, &bytes);
    let text = String::from_utf8(bytes)
        .map_err(|_| input_error(format!("cannot read {}: not valid UTF-8", path.display())))?;
    Ok((text, digest))
}

fn load_network(path: &Path) -> Result<(NetworkSpec, InputDigest), Failure> {
    let (text, digest) = read_input("network", path)?;
    let spec = parse_network(&text).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
    Ok((spec, digest))
}

fn load_device(path: &Path) -> Result<(GflDeviceParams, InputDigest), Failure> {
    let (text, digest) = read_input("device", path)?;
    let dev = parse_device(&text).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
    Ok((dev, digest))
}

fn positive(name: &str, value: f64) -> Result<f64, Failure> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(input_error(format!("--{name} must be positive, got {value}")))
    }
}

// A closed pipe downstream is not an error of ours.
fn write_stdout(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

struct Outcome<T: Serialize> {
    inputs: Vec<InputDigest>,
    result: T,
    human: String,
    code: u8,
}

fn emit<T: Serialize>(command: &'static str, json: bool, started: Instant, outcome: Outcome<T>) -> u8 {
    if json {
        let report = RunReport {
            command,
            tool_version: VERSION,
            inputs: outcome.inputs,
            result: outcome.result,
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        write_stdout(&(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"));
    } else {
        write_stdout(&outcome.human);
    }
    outcome.code
}

fn count(n: usize, one: &str, many: &str) -> String {
    format!("{n} {}", if n == 1 { one } else { many })
}

fn run_gscr(path: &Path, style: &Style) -> Result<Outcome<GscrResult>, Failure> {
    let (spec, digest) = load_network(path)?;
    let reduced = reduce_spec(&spec)?;
    let modes = compute_modes(&reduced)?;
    let farm_ids = spec.farm_ids();
    let participation: Vec<Vec<f64>> = (0..modes.len()).map(|k| modes.participation(k)).collect();

    let mut h = String::new();
    h += &format!(
        "network  {} ({}, {} interior, {})\n",
        path.display(),
        count(spec.n_farms(), "wind farm", "wind farms"),
        spec.n_interior(),
        count(spec.n_infinite(), "infinite bus", "infinite buses")
    );
    h += &format!("gSCR     {}\n\n", style.bold(&sig6(modes.gscr())));
    h += &format!("{:>4}  {:>12}", "mode", "lambda");
    for id in &farm_ids {
        h += &format!("  {id:>10}");
    }
    h += "\n";
    for (k, lambda) in modes.lambdas.iter().enumerate() {
        h += &format!("{:>4}  {:>12}", k + 1, sig6(*lambda));
        for p in &participation[k] {
            h += &format!("  {:>10}", sig6(*p));
        }
        h += "\n";
    }

    Ok(Outcome {
        inputs: vec![digest],
        result: GscrResult {
            s_global_mva: spec.s_global_mva(),
            farm_ids,
            capacities_mva: spec.farm_capacities_mva(),
            n_interior: spec.n_interior(),
            n_infinite: spec.n_infinite(),
            gscr: modes.gscr(),
            lambdas: modes.lambdas.clone(),
            participation,
        },
        human: h,
        code: exit::OK,
    })
}

fn run_size(
    path: &Path,
    target: f64,
    z_local: f64,
    unit_mva: Option<f64>,
    style: &Style,
) -> Result<Outcome<SizeResult>, Failure> {
    positive("target-gscr", target)?;
    positive("z-local", z_local)?;
    if let Some(u) = unit_mva {
        positive("unit-mva", u)?;
    }
    let (spec, digest) = load_network(path)?;
    let reduced = reduce_spec(&spec)?;
    let res = size_network(&reduced, spec.s_global_mva(), target, z_local, unit_mva)?;

    let mut h = String::new();
    h += &format!("gSCR0         {}\n", sig6(res.gscr0));
    h += &format!("target gSCR   {}\n", sig6(target));
    h += &format!("z_local       {} p.u.\n", sig6(z_local));
    h += &format!("γ = {}\n", style.bold(&percent(res.gamma_required)));
    if res.already_satisfied {
        h += &format!("{}\n", style.good("already satisfied: no GFM capacity needed"));
    }
    h += &format!("verified gSCR {}\n\n", sig6(res.verified_gscr));
    h += &format!("{:>10}  {:>12}  {:>12}", "farm", "capacity_MVA", "GFM_MVA");
    if res.units.is_some() {
        h += &format!("  {:>6}  {:>12}", "units", "realized_γ");
    }
    h += "\n";
    for (i, id) in res.farm_ids.iter().enumerate() {
        h += &format!(
            "{id:>10}  {:>12}  {:>12}",
            sig6(reduced.s_b()[i] * spec.s_global_mva()),
            sig6(res.gfm_mva[i])
        );
        if let Some(plan) = &res.units {
            h += &format!("  {:>6}  {:>12}", plan.counts[i], percent(plan.realized_gamma[i]));
        }
        h += "\n";
    }
    if let (Some(plan), Some(pred), Some(ver)) =
        (&res.units, res.planned_predicted_gscr, res.planned_verified_gscr)
    {
        h += &format!(
            "\nwith {} MVA units: min realized γ = {}, predicted gSCR {}, verified gSCR {}\n",
            sig6(plan.unit_mva),
            percent(plan.min_realized_gamma),
            sig6(pred),
            sig6(ver)
        );
    }

    let units = match (&res.units, res.planned_predicted_gscr, res.planned_verified_gscr) {
        (Some(plan), Some(predicted_gscr), Some(verified_gscr)) => Some(UnitsResult {
            unit_mva: plan.unit_mva,
            counts: plan.counts.clone(),
            installed_mva: plan.installed_mva(),
            realized_gamma: plan.realized_gamma.clone(),
            min_realized_gamma: plan.min_realized_gamma,
            predicted_gscr,
            verified_gscr,
        }),
        _ => None,
    };
    Ok(Outcome {
        inputs: vec![digest],
        result: SizeResult {
            capacities_mva: spec.farm_capacities_mva(),
            farm_ids: res.farm_ids,
            gscr0: res.gscr0,
            target_gscr: res.target_gscr,
            z_local,
            gamma_required: res.gamma_required,
            already_satisfied: res.already_satisfied,
            gfm_mva: res.gfm_mva,
            verified_gscr: res.verified_gscr,
            units,
        },
        human: h,
        code: exit::OK,
    })
}

fn run_cgscr(path: &Path, bracket: (f64, f64), style: &Style) -> Result<Outcome<CgscrReport>, Failure> {
    let (dev, digest) = load_device(path)?;
    let res = compute_cgscr(&dev, bracket)?;
    let lambda = res.critical_eigenvalue;
    let freq = lambda.im / (2.0 * std::f64::consts::PI);

    let mut h = String::new();
    h += &format!("CgSCR                {}\n", style.bold(&sig6(res.cgscr)));
    h += &format!("critical eigenvalue  {} (1/s)\n", complex(lambda));
    h += &format!("critical frequency   {} Hz\n", sig6(freq));
    h += "critical eigenvector\n";
    for (kind, v) in StateKind::ALL.iter().zip(&res.critical_eigenvector) {
        h += &format!("  {:<16} {}\n", kind.label(), complex(*v));
    }
    if res.non_monotone {
        eprintln!(
            "{}",
            style.warn("warning: stability changes more than once inside the bracket")
        );
    }
    Ok(Outcome {
        inputs: vec![digest],
        result: CgscrReport {
            cgscr: res.cgscr,
            critical_eigenvalue: lambda.into(),
            critical_frequency_hz: freq,
            critical_eigenvector: complex_list(&res.critical_eigenvector),
            state_labels: StateKind::ALL.iter().map(|k| k.label()).collect(),
            bracket: [res.bracket.0, res.bracket.1],
            iterations: res.iterations,
            non_monotone: res.non_monotone,
        },
        human: h,
        code: exit::OK,
    })
}

fn run_assess(net: &Path, devp: &Path, gfm: &GfmArgs, style: &Style) -> Result<Outcome<AssessResult>, Failure> {
    positive("z-local", gfm.z_local)?;
    let (spec, d1) = load_network(net)?;
    let (dev, d2) = load_device(devp)?;
    let att = gfm.attachment()?;
    let reduced = reduce_spec(&spec)?;
    let gscr0 = compute_modes(&reduced)?.gscr();
    let cg = compute_cgscr(&dev, gridstrength::dynamics::DEFAULT_BRACKET)?;
    let a = assess_reduced(&reduced, &dev, &att, &cg)?;
    let dominant = a.dominant();
    let critical_gamma = ((a.cgscr - gscr0) * gfm.z_local).max(0.0);

    let verdict = match a.verdict {
        Verdict::Stable => style.good("stable"),
        Verdict::Marginal => style.warn("marginal"),
        Verdict::Unstable => style.bad("unstable"),
    };
    let gamma_text = match &gfm.gamma_per_farm {
        Some(g) => g.iter().map(|x| percent(*x)).collect::<Vec<_>>().join(", "),
        None => percent(gfm.gamma),
    };
    let mut h = String::new();
    h += &format!("γ              {gamma_text} (z_local {} p.u.)\n", sig6(gfm.z_local));
    h += &format!("gSCR0          {}\n", sig6(gscr0));
    h += &format!("gSCR           {}\n", sig6(a.gscr));
    h += &format!("CgSCR          {}\n", sig6(a.cgscr));
    h += &format!("margin         {}\n", sig6(a.margin));
    h += &format!("critical γ     {}\n", percent(critical_gamma));
    h += &format!("max Re λ       {} 1/s\n", sig6(a.max_real));
    h += &format!(
        "dominant mode  {} (ζ = {})\n",
        complex(dominant),
        sig6(damping_ratio(dominant))
    );
    h += &format!("verdict        {verdict}\n\n");
    h += &format!("{:>28}  {:>10}\n", "eigenvalue (1/s)", "ζ");
    for (l, z) in a.eigenvalues.iter().zip(&a.damping_ratios) {
        h += &format!("{:>28}  {:>10}\n", complex(*l), sig6(*z));
    }

    Ok(Outcome {
        inputs: vec![d1, d2],
        result: AssessResult {
            farm_ids: spec.farm_ids(),
            gamma: gfm.value(),
            z_local: gfm.z_local,
            gscr0,
            gscr: a.gscr,
            cgscr: a.cgscr,
            margin: a.margin,
            critical_gamma,
            verdict: a.verdict.as_str(),
            max_real: a.max_real,
            dominant: dominant.into(),
            dominant_damping_ratio: damping_ratio(dominant),
            lambdas: a.modes.lambdas.clone(),
            eigenvalues: complex_list(&a.eigenvalues),
            damping_ratios: a.damping_ratios.clone(),
        },
        human: h,
        code: if a.verdict == Verdict::Unstable {
            exit::UNSTABLE
        } else {
            exit::OK
        },
    })
}

#[allow(clippy::too_many_arguments)]
fn run_simulate(
    net: &Path,
    devp: &Path,
    gfm: &GfmArgs,
    out: &Path,
    dt: f64,
    duration: f64,
    dist: &DisturbanceArgs,
    style: &Style,
) -> Result<Outcome<SimulateResult>, Failure> {
    positive("z-local", gfm.z_local)?;
    positive("dt", dt)?;
    positive("duration", duration)?;
    let (spec, d1) = load_network(net)?;
    let (dev, d2) = load_device(devp)?;
    let att = gfm.attachment()?;
    let reduced = attach_gfm(&reduce_spec(&spec)?, &att)?;
    let gscr = compute_modes(&reduced)?.gscr();
    let cg = compute_cgscr(&dev, gridstrength::dynamics::DEFAULT_BRACKET)?;
    let model = direct_full_model(&dev, &reduced)?;
    let disturbance = dist.build(&model.farm_ids[0]);
    let sim = simulate(&model, &disturbance, duration, dt)?;

    let damping: Vec<DampingResult> = sim
        .farm_ids
        .iter()
        .zip(estimate_damping(&sim))
        .map(|(id, est)| match est {
            Ok(e) => DampingResult {
                farm_id: id.clone(),
                zeta: Some(e.zeta),
                sigma: Some(e.sigma),
                omega: Some(e.omega),
                growing: e.growing,
                note: None,
            },
            Err(err) => DampingResult {
                farm_id: id.clone(),
                zeta: None,
                sigma: None,
                omega: None,
                growing: sim.truncated,
                note: Some(err.to_string()),
            },
        })
        .collect();

    fs::create_dir_all(out).map_err(|e| input_error(format!("cannot create {}: {e}", out.display())))?;
    let csv_path = out.join("traces.csv");
    let meta_path = out.join("metadata.json");
    let mut csv = Vec::new();
    sim.write_csv(&mut csv).expect("writing to memory");
    let metadata = SimulationMetadata {
        farm_ids: sim.farm_ids.clone(),
        gamma: gfm.value(),
        z_local: gfm.z_local,
        gscr,
        cgscr: cg.cgscr,
        dt_s: dt,
        duration_s: duration,
        samples: sim.time.len(),
        truncated: sim.truncated,
        disturbance,
        damping: damping.clone(),
    };
    let meta_text = serde_json::to_string_pretty(&metadata).expect("metadata serializes") + "\n";
    let write = |p: &Path, bytes: &[u8]| {
        fs::write(p, bytes).map_err(|e| input_error(format!("cannot write {}: {e}", p.display())))
    };
    write(&csv_path, &csv)?;
    write(&meta_path, meta_text.as_bytes())?;

    let mut h = String::new();
    h += &format!("gSCR {}  CgSCR {}\n", sig6(gscr), sig6(cg.cgscr));
    h += &format!(
        "{} samples at dt = {} s written to {}\n",
        sim.time.len(),
        sig6(dt),
        csv_path.display()
    );
    if sim.truncated {
        h += &format!("{}\n", style.bad("overflow guard tripped: run truncated"));
    }
    h += &format!("{:>10}  {:>10}  {:>10}  {}\n", "farm", "ζ̂", "σ (1/s)", "trend");
    for d in &damping {
        let trend = if d.growing {
            style.bad("growing")
        } else if d.zeta.is_some() {
            style.good("decaying")
        } else {
            "n/a".to_string()
        };
        let fmt = |v: Option<f64>| v.map(sig6).unwrap_or_else(|| "-".into());
        h += &format!("{:>10}  {:>10}  {:>10}  {trend}\n", d.farm_id, fmt(d.zeta), fmt(d.sigma));
    }

    Ok(Outcome {
        inputs: vec![d1, d2],
        result: SimulateResult {
            csv_path: csv_path.display().to_string(),
            csv_sha256: InputDigest::new("csv", &csv_path, &csv).sha256,
            metadata_path: meta_path.display().to_string(),
            metadata,
        },
        human: h,
        code: exit::OK,
    })
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Gscr { .. } => "gscr",
        Command::SizeGfm { .. } => "size-gfm",
        Command::Cgscr { .. } => "cgscr",
        Command::Assess { .. } => "assess",
        Command::Simulate { .. } => "simulate",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let style = Style::detect();
    let name = command_name(&cli.command);
    let json = cli.json;

    let result = match &cli.command {
        Command::Gscr { network } => run_gscr(network, &style).map(|o| emit(name, json, started, o)),
        Command::SizeGfm {
            network,
            target_gscr,
            z_local,
            unit_mva,
        } => run_size(network, *target_gscr, *z_local, *unit_mva, &style)
            .map(|o| emit(name, json, started, o)),
        Command::Cgscr { device, bracket } => {
            run_cgscr(device, (bracket[0], bracket[1]), &style).map(|o| emit(name, json, started, o))
        }
        Command::Assess {
            network,
            device,
            gfm,
        } => run_assess(network, device, gfm, &style).map(|o| emit(name, json, started, o)),
        Command::Simulate {
            network,
            device,
            gfm,
            out,
            dt,
            duration,
            disturbance,
        } => run_simulate(network, device, gfm, out, *dt, *duration, disturbance, &style)
            .map(|o| emit(name, json, started, o)),
    };

    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("{} {}", style.bad("error:"), f.message);
            if json {
                let report = ErrorReport {
                    command: name,
                    tool_version: VERSION,
                    error: ErrorBody {
                        exit_code: f.code as i32,
                        message: f.message.clone(),
                    },
                };
                write_stdout(&(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"));
            }
            ExitCode::from(f.code)
        }
    }
}
