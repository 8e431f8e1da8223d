//! Command-line front end.
//!
//! Every subcommand resolves its settings as: command-line flag, then config-file key, then
//! built-in default. The effective settings are written into the run manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

use crate::dynamics::{integrate, reference_integrate, CoefficientSet, SolverConfig, TrajectorySample};
use crate::error::{Error, Result};
use crate::exact::{integrable_coefficients, standing_wave, standing_wave_residual};
use crate::experiments::{
    bona_smith_rate_study_with, conservation_study, continuity_study, eps_convergence_study, inequality_sweeps,
    paired_family, riccati_study, two_mode_family, ContinuitySettings, RiccatiSettings, StudyResult, Table, Verdict,
};
use crate::fields::{normalize, seeded_rng, DecayProfile};
use crate::functionals::{certify_cm, EnergyReport};
use crate::mollifier::critical_decay_data;
use crate::spectral::{bracket, Grid, SpectralField};

/// Environment variable that overrides the output directory.
pub const OUT_DIR_ENV: &str = "FNLS_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_STUDY_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

const CONFIG_HELP: &str = "\
CONFIG FILE
  --config FILE reads flat `key = value` lines; `#` starts a comment. Keys are the long flag
  names of the chosen subcommand (`t-end` and `t_end` are equivalent). Flags override file
  keys, which override built-in defaults. Unknown keys are rejected.

OUTPUT
  Files go to --out, else $FNLS_OUT_DIR, else the `out` config key, else ./fnls-out.
  Each run writes <name>.json (manifest with full config, version and thresholds) and one
  <name>_<table>.csv per table.

INITIAL DATA (--data)
  Terms joined by `+`, each a kind followed by `:key=value` fields:
    modes:n=1:amp=0.3:phase=0        one Fourier coefficient (amp is the coefficient modulus)
    standing:kappa=0.3:tau=1         plane wave kappa*e^{i tau x}
    decay:s=4.6:band=31              coefficients <n>^-s for |n| <= band
    random:seed=7:band=4:decay=3     Gaussian coefficients times <n>^-decay
  decay and random accept `h4=` or `l2=` to rescale that norm.

COEFFICIENTS
  --nu sets the dispersion; --lambda l1,l2,l3,l4,l5,l6 sets the nonlinearity. Without
  --lambda the integrable set for the given nu is used; --integrable forces it.

EXIT CODES
  0 pass or complete, 1 study failed or inconclusive, 2 usage or input error, 3 solver error.";

#[derive(Debug, Parser)]
#[command(name = "fnls", version, about = "Pseudospectral studies of the periodic fourth-order NLS", after_help = CONFIG_HELP)]
struct Cli {
    /// Flat key=value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one trajectory and write states and energies.
    Simulate(SimulateArgs),
    /// Conservation of I0, I1, I2 for the integrable equation.
    Conserve(ConserveArgs),
    /// Convergence rates of the mollifier.
    BonaSmith(BonaSmithArgs),
    /// Convergence of regularized solutions as epsilon tends to zero.
    EpsConverge(EpsArgs),
    /// Growth quotients of the modified and unmodified energies.
    Riccati(RiccatiArgs),
    /// Continuity of the data-to-solution map.
    Continuity(ContinuityArgs),
    /// Interpolation, smoothing and energy-equivalence sweeps.
    SweepInequalities(SweepArgs),
    /// Standing-wave frequency and residual.
    StandingWave(StandingArgs),
    /// Randomized certification of the mass coefficient of the modified energy.
    CertifyCm(CertifyArgs),
}

#[derive(Debug, Args, Default)]
struct CoeffArgs {
    #[arg(long, allow_negative_numbers = true)]
    nu: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<String>,
    #[arg(long)]
    integrable: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    coeffs: CoeffArgs,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    modes: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    /// Sobolev index of the energy report.
    #[arg(long)]
    m: Option<u32>,
    #[arg(long = "c-m")]
    c_m: Option<f64>,
    /// `duhamel` or `rk4`.
    #[arg(long)]
    stepper: Option<String>,
    /// Write every k-th sample.
    #[arg(long)]
    every: Option<usize>,
}

#[derive(Debug, Args)]
struct ConserveArgs {
    #[arg(long, allow_negative_numbers = true)]
    nu: Option<f64>,
    /// Accepted for symmetry with other commands; the study always uses the integrable set.
    #[arg(long)]
    integrable: bool,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    modes: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
}

#[derive(Debug, Args)]
struct BonaSmithArgs {
    #[arg(long)]
    m: Option<u32>,
    /// Comma-separated derivative gaps.
    #[arg(long)]
    l: Option<String>,
    #[arg(long)]
    modes: Option<usize>,
}

#[derive(Debug, Args)]
struct EpsArgs {
    #[command(flatten)]
    coeffs: CoeffArgs,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    modes: Option<usize>,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    /// Comma-separated epsilon ladder.
    #[arg(long)]
    eps: Option<String>,
}

#[derive(Debug, Args)]
struct RiccatiArgs {
    #[command(flatten)]
    coeffs: CoeffArgs,
    /// `two-mode` or `paired`.
    #[arg(long)]
    family: Option<String>,
    /// Comma-separated mode separations.
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    background: Option<f64>,
    /// Common H^m norm of the members.
    #[arg(long)]
    size: Option<f64>,
    #[arg(long)]
    modes: Option<usize>,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    /// Use this c_m instead of certifying one.
    #[arg(long = "c-m")]
    c_m: Option<f64>,
    #[arg(long = "cm-trials")]
    cm_trials: Option<usize>,
    #[arg(long = "cm-seed")]
    cm_seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ContinuityArgs {
    #[command(flatten)]
    coeffs: CoeffArgs,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    modes: Option<usize>,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    /// Comma-separated perturbation sizes.
    #[arg(long)]
    deltas: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "perturb-band")]
    perturb_band: Option<usize>,
    #[arg(long = "perturb-decay")]
    perturb_decay: Option<f64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Debug, Args)]
struct StandingArgs {
    #[command(flatten)]
    coeffs: CoeffArgs,
    #[arg(long, allow_negative_numbers = true)]
    kappa: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    tau: Option<i64>,
    #[arg(long)]
    modes: Option<usize>,
}

#[derive(Debug, Args)]
struct CertifyArgs {
    #[command(flatten)]
    coeffs: CoeffArgs,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long)]
    ceiling: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Flag > config file > default, recording every effective value.
struct Settings {
    file: BTreeMap<String, String>,
    consumed: BTreeSet<String>,
    effective: BTreeMap<String, String>,
}

impl Settings {
    fn new(file: BTreeMap<String, String>) -> Self {
        Self {
            file,
            consumed: BTreeSet::new(),
            effective: BTreeMap::new(),
        }
    }

    fn lookup<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>> {
        self.consumed.insert(key.to_string());
        let value = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(text) => Some(
                    text.parse::<T>()
                        .map_err(|_| Error::param(format!("config key `{key}`: cannot parse `{text}`")))?,
                ),
                None => None,
            },
        };
        if let Some(v) = &value {
            self.effective.insert(key.to_string(), v.to_string());
        }
        Ok(value)
    }

    fn get<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        let value = self.lookup(key, flag)?.unwrap_or(default);
        self.effective.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    fn flag(&mut self, key: &str, set: bool) -> Result<bool> {
        let value = set || self.lookup::<bool>(key, None)?.unwrap_or(false);
        self.effective.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    fn list<T: FromStr>(&mut self, key: &str, flag: Option<String>, default: &str) -> Result<Vec<T>> {
        let text = self.get(key, flag, default.to_string())?;
        parse_list(&text).map_err(|e| Error::param(format!("`{key}`: {e}")))
    }

    fn finish(&self) -> Result<()> {
        let unknown: Vec<&String> = self.file.keys().filter(|k| !self.consumed.contains(*k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::param(format!("unknown config keys: {unknown:?}")))
        }
    }
}

fn normalize_key(key: &str) -> String {
    key.replace('_', "-")
}

fn parse_list<T: FromStr>(text: &str) -> std::result::Result<Vec<T>, String> {
    text.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| format!("cannot parse list entry `{s}`")))
        .collect()
}

/// Parses a flat `key = value` config file.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::param(format!("config line {}: expected key = value", lineno + 1)));
        };
        let key = normalize_key(key.trim());
        if key.is_empty() {
            return Err(Error::param(format!("config line {}: empty key", lineno + 1)));
        }
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::param(format!("config key `{key}` given twice")));
        }
    }
    Ok(out)
}

fn fields_of(term: &str) -> Result<(&str, BTreeMap<&str, &str>)> {
    let mut parts = term.split(':');
    let kind = parts.next().unwrap_or("").trim();
    let mut fields = BTreeMap::new();
    for part in parts {
        let Some((k, v)) = part.split_once('=') else {
            return Err(Error::param(format!("data field `{part}` must look like key=value")));
        };
        fields.insert(k.trim(), v.trim());
    }
    Ok((kind, fields))
}

fn field<T: FromStr>(fields: &mut BTreeMap<&str, &str>, key: &str, default: Option<T>) -> Result<T> {
    match fields.remove(key) {
        Some(text) => text
            .parse()
            .map_err(|_| Error::param(format!("data field `{key}`: cannot parse `{text}`"))),
        None => default.ok_or_else(|| Error::param(format!("data field `{key}` is required"))),
    }
}

/// Builds initial data from the `--data` mini-language (see `fnls --help`).
pub fn parse_data_spec(spec: &str, grid: Grid) -> Result<SpectralField> {
    let mut total = SpectralField::zeros(grid);
    let top = grid.num_modes() / 2 - 1;
    for term in spec.split('+').map(str::trim) {
        let (kind, mut fields) = fields_of(term)?;
        let psi = match kind {
            "modes" => {
                let n: i64 = field(&mut fields, "n", None)?;
                let amp: f64 = field(&mut fields, "amp", None)?;
                let phase: f64 = field(&mut fields, "phase", Some(0.0))?;
                if n.unsigned_abs() as usize > top {
                    return Err(Error::param(format!("mode {n} is not resolved below the Nyquist mode")));
                }
                SpectralField::single_mode(grid, n, Complex64::from_polar(amp, phase))
            }
            "standing" => {
                let kappa: f64 = field(&mut fields, "kappa", Some(0.3))?;
                let tau: i64 = field(&mut fields, "tau", Some(1))?;
                if tau.unsigned_abs() as usize > top {
                    return Err(Error::param(format!("tau = {tau} is not resolved")));
                }
                let any = CoefficientSet::linear(1.0)?;
                standing_wave(grid, kappa, tau, &any).0
            }
            "decay" => {
                let s: f64 = field(&mut fields, "s", None)?;
                let band: usize = field(&mut fields, "band", Some(top))?;
                let band = band.min(top) as i64;
                let psi = SpectralField::from_fn(grid, |n| {
                    Complex64::new(if n.abs() <= band { bracket(n as f64).powf(-s) } else { 0.0 }, 0.0)
                });
                rescale(psi, &mut fields)?
            }
            "random" => {
                let seed: u64 = field(&mut fields, "seed", None)?;
                let band: usize = field(&mut fields, "band", Some(4))?;
                let decay: f64 = field(&mut fields, "decay", Some(3.0))?;
                let psi = DecayProfile::new(band, decay).sample(grid, &mut seeded_rng(seed));
                rescale(psi, &mut fields)?
            }
            other => return Err(Error::param(format!("unknown data kind `{other}`"))),
        };
        if let Some(extra) = fields.keys().next() {
            return Err(Error::param(format!("unknown field `{extra}` for data kind `{kind}`")));
        }
        total = &total + &psi;
    }
    Ok(total)
}

fn rescale(psi: SpectralField, fields: &mut BTreeMap<&str, &str>) -> Result<SpectralField> {
    let h4: Option<f64> = fields.remove("h4").map(str::parse).transpose().map_err(|_| Error::param("bad h4 value"))?;
    let l2: Option<f64> = fields.remove("l2").map(str::parse).transpose().map_err(|_| Error::param("bad l2 value"))?;
    Ok(match (h4, l2) {
        (Some(_), Some(_)) => return Err(Error::param("give at most one of h4 and l2")),
        (Some(h), None) => normalize(&psi, h, |p| p.sobolev_norm(4)),
        (None, Some(l)) => normalize(&psi, l, |p| p.l2_norm()),
        (None, None) => psi,
    })
}

fn coefficients(s: &mut Settings, args: CoeffArgs) -> Result<CoefficientSet> {
    let nu = s.get("nu", args.nu, 1.0)?;
    let integrable = s.flag("integrable", args.integrable)?;
    let lambda: Option<String> = s.lookup("lambda", args.lambda)?;
    match (integrable, lambda) {
        (true, Some(_)) => Err(Error::param("--integrable and --lambda are mutually exclusive")),
        (_, Some(text)) => {
            let values: Vec<f64> = parse_list(&text).map_err(Error::param)?;
            let lambda: [f64; 6] = values
                .try_into()
                .map_err(|_| Error::param("--lambda needs exactly six comma-separated values"))?;
            CoefficientSet::new(nu, lambda)
        }
        (_, None) => {
            s.effective.insert("lambda".into(), "integrable".into());
            integrable_coefficients(nu)
        }
    }
}

fn grid(s: &mut Settings, flag: Option<usize>, default: usize) -> Result<Grid> {
    Grid::new(s.get("modes", flag, default)?)
}

fn data(s: &mut Settings, flag: Option<String>, default: &str, grid: Grid) -> Result<SpectralField> {
    let spec = s.get("data", flag, default.to_string())?;
    parse_data_spec(&spec, grid)
}

/// What a subcommand produced.
struct Outcome {
    result: StudyResult,
    summary: String,
}

fn study(result: StudyResult) -> Outcome {
    let summary = format!("{}: {:?}", result.name, result.verdict).to_lowercase();
    Outcome { result, summary }
}

fn states_table(samples: &[TrajectorySample], every: usize) -> Table {
    let mut t = Table::new("trajectory", &["time", "mode", "re", "im"]);
    let last = samples.len().saturating_sub(1);
    for (k, s) in samples.iter().enumerate() {
        if k % every != 0 && k != last {
            continue;
        }
        let grid = s.state.grid();
        for idx in grid.ascending_slots() {
            let n = grid.mode(idx);
            let v = s.state.as_slice()[idx];
            t.push(vec![s.time, n as f64, v.re, v.im]);
        }
    }
    t
}

fn run_simulate(s: &mut Settings, a: SimulateArgs) -> Result<Outcome> {
    let c = coefficients(s, a.coeffs)?;
    let grid = grid(s, a.modes, 64)?;
    let psi0 = data(s, a.data, "random:seed=1:band=4:decay=3:h4=0.5", grid)?;
    let epsilon = s.get("epsilon", a.epsilon, 0.0)?;
    let dt = s.get("dt", a.dt, 1e-3)?;
    let t_end = s.get("t-end", a.t_end, 0.1)?;
    let m = s.get("m", a.m, 4)?;
    let c_m = s.get("c-m", a.c_m, 0.0)?;
    let stepper = s.get("stepper", a.stepper, "duhamel".to_string())?;
    let every = s.get("every", a.every, 1)?.max(1);
    let cfg = SolverConfig::for_coefficients(dt, &c).with_epsilon(epsilon).with_sobolev_index(m);
    let mut result = StudyResult::named("simulate");
    let samples = match stepper.as_str() {
        "duhamel" => {
            let traj = integrate(&psi0, t_end, &cfg, &c, &mut |_| {})?;
            if let Some(b) = &traj.blow_up {
                result.notes.push(format!(
                    "suspected blow-up at t = {:e}: H^m norm {:e} above ceiling {:e}",
                    b.time, b.sobolev_norm, b.ceiling
                ));
            }
            traj.samples
        }
        "rk4" => reference_integrate(&psi0, t_end, &cfg, &c)?,
        other => return Err(Error::param(format!("unknown stepper `{other}` (duhamel or rk4)"))),
    };
    let report = EnergyReport::from_samples(&samples, m, &c, c_m)?;
    let mut energy = Table::new(
        "energy",
        &["time", "h_m_norm_sq", "sobolev_norm_sq", "l2_norm_sq", "modified_energy", "i0", "i1", "i2"],
    );
    for k in 0..report.len() {
        energy.push(vec![
            report.times[k],
            report.h_m_norm_sq[k],
            report.sobolev_norm_sq[k],
            report.l2_norm_sq[k],
            report.modified_energy[k],
            report.i0[k],
            report.i1[k],
            report.i2[k],
        ]);
    }
    let last = samples.last().expect("trajectories start with the initial sample");
    let mut final_state = Table::new("final", &["param", "re", "im"]);
    for idx in grid.ascending_slots() {
        let v = last.state.as_slice()[idx];
        final_state.push(vec![grid.mode(idx) as f64, v.re, v.im]);
    }
    result.parameters.insert("samples".into(), samples.len().to_string());
    result.parameters.insert("final_time".into(), last.time.to_string());
    result.tables = vec![states_table(&samples, every), energy, final_state];
    result.verdict = Verdict::Pass;
    let summary = format!("simulate: {} samples up to t = {}", samples.len(), last.time);
    Ok(Outcome { result, summary })
}

fn run_conserve(s: &mut Settings, a: ConserveArgs) -> Result<Outcome> {
    let nu = s.get("nu", a.nu, 1.0)?;
    s.flag("integrable", a.integrable)?;
    let grid = grid(s, a.modes, 64)?;
    let psi = data(s, a.data, "random:seed=7:band=4:decay=3:h4=0.5", grid)?;
    let dt = s.get("dt", a.dt, 1e-3)?;
    let t_end = s.get("t-end", a.t_end, 0.1)?;
    let c = integrable_coefficients(nu)?;
    Ok(study(conservation_study(&psi, nu, t_end, &SolverConfig::for_coefficients(dt, &c))?))
}

fn run_bona_smith(s: &mut Settings, a: BonaSmithArgs) -> Result<Outcome> {
    let m = s.get("m", a.m, 4)?;
    let l: Vec<u32> = s.list("l", a.l, "0,1,2")?;
    let grid = grid(s, a.modes, crate::experiments::BONA_SMITH_MODES)?;
    Ok(study(bona_smith_rate_study_with(&critical_decay_data(grid, m), m, &l)?))
}

fn default_ladder(from: i32, to: i32) -> String {
    (from..=to).map(|k| format!("{}", 0.5f64.powi(k))).collect::<Vec<_>>().join(",")
}

fn run_eps(s: &mut Settings, a: EpsArgs) -> Result<Outcome> {
    let c = coefficients(s, a.coeffs)?;
    let grid = grid(s, a.modes, 64)?;
    let psi = data(s, a.data, "random:seed=3:band=3:decay=3:h4=0.3", grid)?;
    let m = s.get("m", a.m, 4)?;
    let dt = s.get("dt", a.dt, 1e-3)?;
    let t_end = s.get("t-end", a.t_end, 0.02)?;
    let eps: Vec<f64> = s.list("eps", a.eps, &default_ladder(3, 7))?;
    let cfg = SolverConfig::for_coefficients(dt, &c);
    Ok(study(eps_convergence_study(&psi, m, &c, t_end, &eps, &cfg)?))
}

fn run_riccati(s: &mut Settings, a: RiccatiArgs) -> Result<Outcome> {
    let c = coefficients(s, a.coeffs)?;
    let family_kind = s.get("family", a.family, "two-mode".to_string())?;
    let ks: Vec<i64> = s.list("k", a.k, "4,8,16,32")?;
    let background = s.get("background", a.background, 0.5)?;
    let size = s.get("size", a.size, 1.0)?;
    let grid = grid(s, a.modes, 256)?;
    let m = s.get("m", a.m, 4)?;
    let dt = s.get("dt", a.dt, 1e-6)?;
    let t_end = s.get("t-end", a.t_end, 5e-3)?;
    let family = match family_kind.as_str() {
        "two-mode" => two_mode_family(grid, background, size, m, &ks)?,
        "paired" => paired_family(grid, background, size, m, &ks)?,
        other => return Err(Error::param(format!("unknown family `{other}` (two-mode or paired)"))),
    };
    let c_m = match s.lookup("c-m", a.c_m)? {
        Some(v) => v,
        None => {
            let trials = s.get("cm-trials", a.cm_trials, 300)?;
            let seed = s.get("cm-seed", a.cm_seed, 1)?;
            let ceiling = family.iter().map(|f| f.l2_norm()).fold(0.0, f64::max) * 1.5;
            let cert = certify_cm(m, &c, ceiling, trials, seed)?;
            s.effective.insert("c-m".into(), cert.c_m.to_string());
            cert.c_m
        }
    };
    let cfg = SolverConfig::for_coefficients(dt, &c);
    let mut result = riccati_study(&family, &c, &cfg, &RiccatiSettings { m, c_m, t_end })?;
    result.parameters.insert("family".into(), family_kind);
    result.parameters.insert("separations".into(), format!("{ks:?}"));
    Ok(study(result))
}

fn run_continuity(s: &mut Settings, a: ContinuityArgs) -> Result<Outcome> {
    let c = coefficients(s, a.coeffs)?;
    let grid = grid(s, a.modes, 64)?;
    let psi = data(s, a.data, "random:seed=3:band=4:decay=3:h4=0.5", grid)?;
    let m = s.get("m", a.m, 4)?;
    let dt = s.get("dt", a.dt, 1e-3)?;
    let t_end = s.get("t-end", a.t_end, 0.1)?;
    let deltas: Vec<f64> = s.list("deltas", a.deltas, "1e-2,1e-3,1e-4,1e-5")?;
    let seed = s.get("seed", a.seed, 11)?;
    let band = s.get("perturb-band", a.perturb_band, 8)?;
    let decay = s.get("perturb-decay", a.perturb_decay, 4.0)?;
    let cfg = SolverConfig::for_coefficients(dt, &c);
    let settings = ContinuitySettings {
        m,
        t_end,
        seed,
        perturbation: DecayProfile::new(band, decay),
    };
    Ok(study(continuity_study(&psi, &deltas, &c, &cfg, &settings)?))
}

fn run_sweep(s: &mut Settings, a: SweepArgs) -> Result<Outcome> {
    let seed = s.get("seed", a.seed, 2024)?;
    let trials = s.get("trials", a.trials, 1000)?;
    Ok(study(inequality_sweeps(seed, trials)?))
}

fn run_standing(s: &mut Settings, a: StandingArgs) -> Result<Outcome> {
    let c = coefficients(s, a.coeffs)?;
    let kappa = s.get("kappa", a.kappa, 0.3)?;
    let tau = s.get("tau", a.tau, 1)?;
    let grid = grid(s, a.modes, 32)?;
    if tau.unsigned_abs() as usize >= grid.num_modes() / 2 {
        return Err(Error::param(format!("tau = {tau} is not resolved on {} modes", grid.num_modes())));
    }
    let (_, omega) = standing_wave(grid, kappa, tau, &c);
    let residual = standing_wave_residual(grid, kappa, tau, &c, c.required_padding())?;
    let mut result = StudyResult::named("standing_wave");
    let mut table = Table::new("summary", &["param", "omega", "residual"]);
    table.push(vec![tau as f64, omega, residual]);
    result.tables = vec![table];
    result.verdict = Verdict::Pass;
    Ok(Outcome {
        result,
        summary: format!("omega = {omega:e}\nresidual = {residual:e}"),
    })
}

fn run_certify(s: &mut Settings, a: CertifyArgs) -> Result<Outcome> {
    let c = coefficients(s, a.coeffs)?;
    let m = s.get("m", a.m, 4)?;
    let ceiling = s.get("ceiling", a.ceiling, 1.0)?;
    let trials = s.get("trials", a.trials, 1000)?;
    let seed = s.get("seed", a.seed, 1)?;
    let cert = certify_cm(m, &c, ceiling, trials, seed)?;
    let mut result = StudyResult::named("certify_cm");
    let mut table = Table::new("certificate", &["param", "c_m", "worst_margin", "l2_ceiling", "trials"]);
    table.push(vec![m as f64, cert.c_m, cert.worst_margin, ceiling, trials as f64]);
    result.tables = vec![table];
    result.verdict = Verdict::Pass;
    Ok(Outcome {
        result,
        summary: format!("c_m = {:e} (worst margin {:e})", cert.c_m, cert.worst_margin),
    })
}

fn output_dir(flag: Option<PathBuf>, file: &mut Settings) -> PathBuf {
    file.consumed.insert("out".into());
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| file.file.get("out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("fnls-out"))
}

fn execute(cli: Cli) -> Result<(Outcome, PathBuf, BTreeMap<String, String>)> {
    let file = match &cli.config {
        Some(path) => parse_config(&fs::read_to_string(path)?)?,
        None => BTreeMap::new(),
    };
    let mut s = Settings::new(file);
    let out = output_dir(cli.out, &mut s);
    let (name, outcome) = match cli.command {
        Command::Simulate(a) => ("simulate", run_simulate(&mut s, a)?),
        Command::Conserve(a) => ("conserve", run_conserve(&mut s, a)?),
        Command::BonaSmith(a) => ("bona-smith", run_bona_smith(&mut s, a)?),
        Command::EpsConverge(a) => ("eps-converge", run_eps(&mut s, a)?),
        Command::Riccati(a) => ("riccati", run_riccati(&mut s, a)?),
        Command::Continuity(a) => ("continuity", run_continuity(&mut s, a)?),
        Command::SweepInequalities(a) => ("sweep-inequalities", run_sweep(&mut s, a)?),
        Command::StandingWave(a) => ("standing-wave", run_standing(&mut s, a)?),
        Command::CertifyCm(a) => ("certify-cm", run_certify(&mut s, a)?),
    };
    s.finish()?;
    let mut config = s.effective;
    config.insert("command".into(), name.into());
    Ok((outcome, out, config))
}

fn exit_code_for(error: &Error) -> i32 {
    if error.is_solver_error() {
        EXIT_SOLVER
    } else {
        EXIT_USAGE
    }
}

/// Runs the command line `argv` (including the program name) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let (outcome, out, config) = match execute(cli) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code_for(&e);
        }
    };
    if let Err(e) = write_outputs(&outcome.result, &out, &config) {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    println!("{}", outcome.summary);
    for note in &outcome.result.notes {
        println!("  {note}");
    }
    println!("  output: {}", out.display());
    match outcome.result.verdict {
        Verdict::Pass => EXIT_OK,
        Verdict::Fail | Verdict::Inconclusive => EXIT_STUDY_FAILED,
    }
}

fn write_outputs(result: &StudyResult, dir: &Path, config: &BTreeMap<String, String>) -> Result<()> {
    result.write(dir, config).map(|_| ())
}
