//! Sectioned `key=value` run configuration.
//!
//! A configuration file looks like
//!
//! ```text
//! # comment
//! [model]
//! name = bbm
//! m = 2
//! [wave]
//! a = 0.05
//! ```
//!
//! Inline arguments use the same keys, either qualified (`wave.a=0.05`) or
//! bare (`a=0.05`); a bare name means the first section that has it, in
//! the order model, wave, spectrum, evolve, verify, experiment, sweep.
//! Inline arguments override the file. Unknown keys and out-of-range values are
//! usage errors.

use crate::error::CliError;
use modulon::bloch::ScanOptions;
use modulon::evolution::Integrator;
use modulon::experiments::{ExperimentOptions, PacketOptions, SweepFamily, SweepOptions};
use modulon::{ModelFamily, ModelSpec, Nonlinearity, SymbolKind, SymbolSpec};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

/// Every accepted key with its default (`None` when unset by default).
const KEYS: &[(&str, Option<&str>)] = &[
    ("model.name", Some("kdv")),
    ("model.m", None),
    ("model.kappa", Some("1")),
    ("model.f", Some("u^2")),
    ("wave.a", Some("0.05")),
    ("wave.b", Some("0")),
    ("wave.n", Some("64")),
    ("spectrum.k_count", Some("64")),
    ("spectrum.k_min", Some("0")),
    ("spectrum.k_max", Some("0.5")),
    ("spectrum.n_bloch", None),
    ("spectrum.threshold", Some("1e-8")),
    ("spectrum.fit_samples", Some("17")),
    ("evolve.dt", None),
    ("evolve.t_end", Some("1000")),
    ("evolve.snap_every", None),
    ("evolve.delta", Some("1e-6")),
    ("evolve.integrator", Some("etdrk4")),
    ("verify.t_end", Some("20")),
    ("verify.dt", Some("0.5")),
    ("experiment.kind", Some("multiperiodic")),
    ("experiment.deltas", None),
    ("experiment.theta0", None),
    ("experiment.t_max", Some("200000")),
    ("experiment.q_max", Some("8")),
    ("experiment.big_q", Some("512")),
    ("experiment.t_linear", None),
    ("sweep.family", Some("bbm")),
    ("sweep.m", Some("2")),
    ("sweep.b", Some("0.1")),
    ("sweep.grid", None),
    ("sweep.a", Some("0.02")),
    ("sweep.n", None),
    ("sweep.k_max", None),
    ("sweep.steps", Some("6")),
    ("output.dir", None),
];

/// Raw resolved key-value pairs, before validation.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

fn resolve_key(key: &str) -> Result<&'static str, CliError> {
    let key = key.trim();
    if key.is_empty() {
        return Err(CliError::Usage("empty key".into()));
    }
    if key == "model" {
        return Ok("model.name");
    }
    if let Some((name, _)) = KEYS.iter().find(|(k, _)| *k == key) {
        return Ok(name);
    }
    let matches: Vec<&'static str> =
        KEYS.iter().map(|(k, _)| *k).filter(|k| k.split_once('.').is_some_and(|(_, b)| b == key)).collect();
    // A bare name resolves to the first section it appears in, so `m` is
    // the model parameter, `a` the wave amplitude and `dt` the evolution
    // step. Later sections are reachable through qualified names.
    match matches.first() {
        Some(k) if !key.contains('.') => Ok(k),
        _ => Err(CliError::Usage(format!("unknown configuration key `{key}`"))),
    }
}

impl RawConfig {
    fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let name = resolve_key(key)?;
        self.values.insert(name.to_string(), value.trim().to_string());
        Ok(())
    }

    /// Parses a configuration file body.
    pub fn parse_text(&mut self, text: &str) -> Result<(), CliError> {
        let mut section: Option<String> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut body = line;
            if let Some(rest) = line.strip_prefix('[') {
                let (name, tail) = rest
                    .split_once(']')
                    .ok_or_else(|| CliError::Usage(format!("line {}: malformed section header", lineno + 1)))?;
                let name = name.trim();
                if !KEYS.iter().any(|(k, _)| k.split_once('.').is_some_and(|(s, _)| s == name)) {
                    return Err(CliError::Usage(format!("line {}: unknown section [{name}]", lineno + 1)));
                }
                section = Some(name.to_string());
                body = tail.trim();
                if body.is_empty() {
                    continue;
                }
            }
            // Several pairs may share a line: `[wave] a=0.05 b=0`.
            for pair in split_pairs(body) {
                let (k, v) = pair
                    .split_once('=')
                    .ok_or_else(|| CliError::Usage(format!("line {}: expected key=value, got `{pair}`", lineno + 1)))?;
                let k = k.trim();
                let full = match &section {
                    Some(s) if !k.contains('.') => format!("{s}.{k}"),
                    _ => k.to_string(),
                };
                self.set(&full, v).map_err(|e| CliError::Usage(format!("line {}: {}", lineno + 1, e.message())))?;
            }
        }
        Ok(())
    }

    /// Parses inline `key=value` arguments.
    pub fn parse_args(&mut self, args: &[String]) -> Result<(), CliError> {
        for arg in args {
            let (k, v) =
                arg.split_once('=').ok_or_else(|| CliError::Usage(format!("expected key=value, got `{arg}`")))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str).or_else(|| KEYS.iter().find(|(k, _)| *k == key).and_then(|(_, d)| *d))
    }

    fn is_set(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    /// Canonical text of every explicitly set key, the input of the
    /// provenance hash.
    pub fn canonical(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Splits on whitespace that is not inside a value list.
fn split_pairs(line: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for tok in line.split_whitespace() {
        match out.last_mut() {
            // `key = value` with spaces around the equals sign.
            Some(last)
                if last.ends_with('=') || tok.starts_with('=') || last.ends_with(',') || tok.starts_with(',') =>
            {
                last.push_str(tok)
            }
            _ => out.push(tok.to_string()),
        }
    }
    out
}

fn number(raw: &RawConfig, key: &str) -> Result<Option<f64>, CliError> {
    raw.get(key)
        .map(|v| {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| CliError::Usage(format!("`{key}` must be a finite number, got `{v}`")))
        })
        .transpose()
}

fn integer(raw: &RawConfig, key: &str) -> Result<Option<usize>, CliError> {
    raw.get(key)
        .map(|v| {
            v.parse::<usize>().map_err(|_| CliError::Usage(format!("`{key}` must be a nonnegative integer, got `{v}`")))
        })
        .transpose()
}

fn list(raw: &RawConfig, key: &str) -> Result<Option<Vec<f64>>, CliError> {
    raw.get(key)
        .map(|v| {
            v.split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| CliError::Usage(format!("`{key}`: bad number `{s}`")))
                })
                .collect()
        })
        .transpose()
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Usage(msg()))
    }
}

/// Validated configuration of a run.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub a: f64,
    pub b: f64,
    pub n: usize,
    pub scan: ScanOptions,
    pub fit_samples: usize,
    pub verify_t_end: f64,
    pub verify_dt: f64,
    pub evolve_dt: Option<f64>,
    pub evolve_t_end: f64,
    pub snap_every: Option<usize>,
    pub delta: f64,
    pub experiment_kind: String,
    pub deltas: Option<Vec<f64>>,
    pub experiment: ExperimentOptions,
    pub big_q: usize,
    pub packet: PacketOptions,
    pub sweep_family: SweepFamily,
    pub sweep_grid: Vec<f64>,
    pub sweep: SweepOptions,
    pub out_dir: Option<String>,
    pub hash: String,
    pub canonical: String,
}

fn build_model(raw: &RawConfig) -> Result<ModelSpec, CliError> {
    let name = raw.get("model.name").unwrap_or("kdv").to_string();
    let m = number(raw, "model.m")?;
    let kappa = number(raw, "model.kappa")?.unwrap_or(1.0);
    let f = Nonlinearity::parse(raw.get("model.f").unwrap_or("u^2")).map_err(CliError::usage)?;
    let symbol = match (name.as_str(), m) {
        ("frac", Some(m)) => SymbolSpec::fractional(m).map_err(CliError::usage)?,
        _ => SymbolSpec::parse(&name).map_err(CliError::usage)?,
    };
    let model = if symbol.kind == SymbolKind::BbmLinear {
        check(!raw.is_set("model.kappa"), || "bbm takes `m`, not `kappa`".into())?;
        let m = m.unwrap_or(1.0);
        check(m > 0.0 && m <= 10.0, || format!("`model.m` must lie in (0, 10], got {m}"))?;
        ModelSpec::new(ModelFamily::Bbm, symbol.with_scale(m).map_err(CliError::usage)?, f).map_err(CliError::usage)?
    } else {
        check(m.is_none() || name == "frac", || format!("`model.m` does not apply to `{name}`"))?;
        check(kappa > 0.0 && kappa <= 10.0, || format!("`model.kappa` must lie in (0, 10], got {kappa}"))?;
        ModelSpec::kdv_type(symbol.with_scale(kappa).map_err(CliError::usage)?, f).map_err(CliError::usage)?
    };
    Ok(model)
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, CliError> {
        let model = build_model(raw)?;
        let a = number(raw, "wave.a")?.unwrap_or(0.05);
        let b = number(raw, "wave.b")?.unwrap_or(0.0);
        check(a.abs() <= 0.1 && b.abs() <= 0.1, || format!("wave parameters need |a|, |b| <= 0.1, got a={a}, b={b}"))?;
        let n = integer(raw, "wave.n")?.unwrap_or(64);
        check((8..=4096).contains(&n) && n % 2 == 0, || format!("`wave.n` must be even in [8, 4096], got {n}"))?;

        let scan = ScanOptions {
            count: integer(raw, "spectrum.k_count")?.unwrap_or(64),
            k_min: number(raw, "spectrum.k_min")?.unwrap_or(0.0),
            k_max: number(raw, "spectrum.k_max")?.unwrap_or(0.5),
            n_bloch: integer(raw, "spectrum.n_bloch")?,
            threshold: number(raw, "spectrum.threshold")?.unwrap_or(1e-8),
            ..ScanOptions::default()
        };
        check((1..=4096).contains(&scan.count), || {
            format!("`spectrum.k_count` must lie in [1, 4096], got {}", scan.count)
        })?;
        check(0.0 <= scan.k_min && scan.k_min < scan.k_max && scan.k_max <= 1.0, || {
            format!("need 0 <= k_min < k_max <= 1, got [{}, {}]", scan.k_min, scan.k_max)
        })?;
        if let Some(nb) = scan.n_bloch {
            check(nb >= 4 && nb % 2 == 0 && nb <= n, || {
                format!("`spectrum.n_bloch` must be even in [4, wave.n], got {nb}")
            })?;
        }
        check(scan.threshold > 0.0 && scan.threshold < 1e-2, || "`spectrum.threshold` must lie in (0, 1e-2)".into())?;
        let fit_samples = integer(raw, "spectrum.fit_samples")?.unwrap_or(17);
        check((9..=257).contains(&fit_samples), || "`spectrum.fit_samples` must lie in [9, 257]".into())?;

        let verify_t_end = number(raw, "verify.t_end")?.unwrap_or(20.0);
        let verify_dt = number(raw, "verify.dt")?.unwrap_or(0.5);
        check(verify_dt > 0.0 && verify_t_end >= 20.0 && verify_t_end / verify_dt <= 10_000.0, || {
            "`verify.t_end` must be >= 20 with at most 10000 samples of `verify.dt` > 0".into()
        })?;

        let evolve_dt = number(raw, "evolve.dt")?;
        check(evolve_dt.is_none_or(|d| d > 0.0 && d <= 10.0), || "`evolve.dt` must lie in (0, 10]".into())?;
        let evolve_t_end = number(raw, "evolve.t_end")?.unwrap_or(1000.0);
        check(evolve_t_end > 0.0 && evolve_t_end <= 1e7, || "`evolve.t_end` must lie in (0, 1e7]".into())?;
        let snap_every = integer(raw, "evolve.snap_every")?;
        check(snap_every.is_none_or(|s| s >= 1), || "`evolve.snap_every` must be at least 1".into())?;
        let delta = number(raw, "evolve.delta")?.unwrap_or(1e-6);
        check(delta > 0.0 && delta <= 0.1, || format!("`evolve.delta` must lie in (0, 0.1], got {delta}"))?;
        let integrator =
            Integrator::parse(raw.get("evolve.integrator").unwrap_or("etdrk4")).map_err(CliError::usage)?;

        let experiment_kind = raw.get("experiment.kind").unwrap_or("multiperiodic").to_string();
        check(matches!(experiment_kind.as_str(), "multiperiodic" | "localized"), || {
            format!("`experiment.kind` must be multiperiodic or localized, got `{experiment_kind}`")
        })?;
        let deltas = list(raw, "experiment.deltas")?;
        if let Some(d) = &deltas {
            check(d.iter().all(|&x| x > 0.0 && x <= 0.1), || "`experiment.deltas` must lie in (0, 0.1]".into())?;
            check(d.windows(2).all(|w| w[1] < w[0]), || "`experiment.deltas` must be strictly decreasing".into())?;
        }
        let theta0 = number(raw, "experiment.theta0")?;
        check(theta0.is_none_or(|t| t >= 0.0), || "`experiment.theta0` must be nonnegative".into())?;
        let t_max = number(raw, "experiment.t_max")?.unwrap_or(2e5);
        check(t_max > 0.0 && t_max <= 1e8, || "`experiment.t_max` must lie in (0, 1e8]".into())?;
        let q_max = integer(raw, "experiment.q_max")?.unwrap_or(8);
        check((1..=64).contains(&q_max), || "`experiment.q_max` must lie in [1, 64]".into())?;
        let big_q = integer(raw, "experiment.big_q")?.unwrap_or(512);
        check((1..=16384).contains(&big_q), || "`experiment.big_q` must lie in [1, 16384]".into())?;
        let t_linear = number(raw, "experiment.t_linear")?;
        check(t_linear.is_none_or(|t| t > 0.0), || "`experiment.t_linear` must be positive".into())?;
        let experiment =
            ExperimentOptions { dt: evolve_dt, t_max, snap_every, theta0, scheme: integrator, q_max: q_max as u64 };
        let packet = PacketOptions { t_linear, ..PacketOptions::default() };

        let family_name = raw.get("sweep.family").unwrap_or("bbm");
        let sweep_family = match family_name {
            "bbm" => SweepFamily::Bbm,
            "frac" => {
                let m = number(raw, "sweep.m")?.unwrap_or(2.0);
                let b = number(raw, "sweep.b")?.unwrap_or(0.1);
                check(m > 0.0 && m <= 4.0, || "`sweep.m` must lie in (0, 4]".into())?;
                check(b.abs() <= 0.1, || "`sweep.b` must satisfy |b| <= 0.1".into())?;
                SweepFamily::FractionalPower { m, b }
            }
            other => return Err(CliError::Usage(format!("`sweep.family` must be bbm or frac, got `{other}`"))),
        };
        let default_grid = match sweep_family {
            SweepFamily::Bbm => vec![1.5, 1.65, 1.8, 1.95],
            SweepFamily::FractionalPower { .. } => vec![1.5, 2.0, 2.5, 3.0],
        };
        let sweep_grid = list(raw, "sweep.grid")?.unwrap_or(default_grid);
        check(sweep_grid.len() >= 2 && sweep_grid.windows(2).all(|w| w[1] > w[0]), || {
            "`sweep.grid` needs at least two increasing values".into()
        })?;
        let sweep_a = number(raw, "sweep.a")?.unwrap_or(0.02);
        check(sweep_a > 0.0 && sweep_a <= 0.1, || "`sweep.a` must lie in (0, 0.1]".into())?;
        let sweep_n = integer(raw, "sweep.n")?.unwrap_or(n);
        check((8..=4096).contains(&sweep_n) && sweep_n % 2 == 0, || "`sweep.n` must be even in [8, 4096]".into())?;
        let sweep_kmax = number(raw, "sweep.k_max")?.unwrap_or(match sweep_family {
            // Long-wave band only: BBM also has a high-frequency band near
            // k = 1/2 that is not part of the modulational threshold.
            SweepFamily::Bbm => 0.25,
            SweepFamily::FractionalPower { .. } => 0.1,
        });
        check(sweep_kmax > 0.0 && sweep_kmax <= 1.0, || "`sweep.k_max` must lie in (0, 1]".into())?;
        let steps = integer(raw, "sweep.steps")?.unwrap_or(6);
        check(steps <= 40, || "`sweep.steps` must be at most 40".into())?;
        let sweep = SweepOptions {
            amplitude: sweep_a,
            n: sweep_n,
            scan: ScanOptions { k_max: sweep_kmax, k_min: 0.0, n_bloch: None, ..scan },
            bisection_steps: steps,
        };

        Ok(RunConfig {
            model,
            a,
            b,
            n,
            scan,
            fit_samples,
            verify_t_end,
            verify_dt,
            evolve_dt,
            evolve_t_end,
            snap_every,
            delta,
            experiment_kind,
            deltas,
            experiment,
            big_q,
            packet,
            sweep_family,
            sweep_grid,
            sweep,
            out_dir: raw.get("output.dir").map(str::to_string),
            hash: raw.hash(),
            canonical: raw.canonical(),
        })
    }
}
