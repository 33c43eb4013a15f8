//! Sectioned key-value model configuration.
//!
//! The format is deliberately small so configurations stay diffable and
//! auditable byte for byte:
//!
//! ```text
//! [queue1]
//! kind = cpp               # cpp | brownian | drift
//! lambda = 1.0
//! service = 1.0
//! jump = exponential       # exponential | erlang | hyperexponential | deterministic
//! jump_rate = 2.0
//!
//! [queue2]
//! kind = drift
//! rate = 2.0
//!
//! [coupling]
//! r1 = 0.4
//! r2 = 0.25
//!
//! [run]
//! seed = 42
//! horizon = 1e6
//! ```
//!
//! A network form replaces `[queue*]`/`[coupling]` with `[network]` (routing
//! entries `p11..p22`, service rates `c1`, `c2`) plus `[input1]`/`[input2]`
//! (external compound Poisson jumps or constant fluid). Unknown sections,
//! unknown keys and duplicate keys are rejected. `parse` never panics on any
//! input.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use levyq::inversion::{InversionConfig, InversionMethod};
use levyq::models::{CoupledSystem, FluidNetwork, JumpLaw, LevyModel, NetworkInput};
use levyq::Error;

type Result<T> = std::result::Result<T, Error>;

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidModel(msg.into())
}

/// Either a direct coupled system or a fluid network to be converted.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemSpec {
    Direct {
        x1: LevyModel,
        x2: LevyModel,
        r1: f64,
        r2: f64,
    },
    Network(FluidNetwork),
}

/// Run options with every knob resolved to a value.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub seed: u64,
    pub horizon: f64,
    pub warmup: f64,
    pub batches: usize,
    pub replications: usize,
    pub euler_step: f64,
    pub grid1: Vec<f64>,
    pub grid2: Vec<f64>,
    pub xs: Vec<f64>,
    pub moment_step: f64,
    pub mc_paths: usize,
    pub factor_theta: Option<f64>,
    pub factor_points: usize,
    pub tail_tol: f64,
    pub inversion_terms: usize,
    pub inversion_target: f64,
    pub inversion_method: InversionMethod,
    pub queue: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            seed: 1,
            horizon: 1e5,
            warmup: 0.2,
            batches: 32,
            replications: 1,
            euler_step: 1e-3,
            grid1: vec![0.5, 1.0, 2.0],
            grid2: vec![0.5, 1.0, 2.0],
            xs: parse_grid_spec("0:10:101").unwrap(),
            moment_step: 0.01,
            mc_paths: 200_000,
            factor_theta: None,
            factor_points: 1 << 14,
            tail_tol: 0.05,
            inversion_terms: 50,
            inversion_target: 1e-8,
            inversion_method: InversionMethod::DampedSeries,
            queue: 1,
        }
    }
}

impl RunOptions {
    pub fn inversion_config(&self) -> InversionConfig {
        InversionConfig {
            method: self.inversion_method,
            terms: self.inversion_terms,
            target: self.inversion_target,
        }
    }
}

/// A fully parsed configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub system: SystemSpec,
    pub run: RunOptions,
}

impl ModelConfig {
    /// The coupled system this configuration denotes (converting a network
    /// form if necessary).
    pub fn coupled_system(&self) -> Result<CoupledSystem> {
        match &self.system {
            SystemSpec::Direct { x1, x2, r1, r2 } => {
                CoupledSystem::new(x1.clone(), x2.clone(), *r1, *r2)
            }
            SystemSpec::Network(net) => net.to_coupled(),
        }
    }
}

/// Grid spec: either `a:b:n` (n points linearly from a to b) or a comma
/// list `v1,v2,...`.
pub fn parse_grid_spec(spec: &str) -> Result<Vec<f64>> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Err(bad("empty grid spec"));
    }
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad(format!("grid spec '{spec}' must be a:b:n")));
        }
        let a = parse_f64(parts[0], "grid start")?;
        let b = parse_f64(parts[1], "grid end")?;
        let n: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| bad(format!("grid count '{}' is not an integer", parts[2])))?;
        if n == 0 || n > 1_000_000 {
            return Err(bad(format!("grid count {n} out of range 1..=1000000")));
        }
        if b < a {
            return Err(bad(format!("grid end {b} below start {a}")));
        }
        if n == 1 {
            return Ok(vec![a]);
        }
        Ok((0..n)
            .map(|k| a + (b - a) * k as f64 / (n - 1) as f64)
            .collect())
    } else {
        spec.split(',')
            .map(|v| parse_f64(v, "grid value"))
            .collect()
    }
}

fn parse_f64(text: &str, what: &str) -> Result<f64> {
    let v: f64 = text
        .trim()
        .parse()
        .map_err(|_| bad(format!("{what} '{}' is not a number", text.trim())))?;
    if !v.is_finite() {
        return Err(bad(format!("{what} must be finite, got {v}")));
    }
    Ok(v)
}

fn parse_f64_list(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',').map(|v| parse_f64(v, what)).collect()
}

/// One parsed section: ordered keys, duplicates rejected at insert.
struct Section {
    name: String,
    entries: BTreeMap<String, String>,
    consumed: std::cell::RefCell<Vec<String>>,
}

impl Section {
    fn get(&self, key: &str) -> Option<&str> {
        self.consumed.borrow_mut().push(key.to_string());
        self.entries.get(key).map(|s| s.as_str())
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| bad(format!("[{}] is missing required key '{key}'", self.name)))
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            Some(v) => parse_f64(v, key),
            None => Ok(default),
        }
    }

    fn finish(&self) -> Result<()> {
        let seen = self.consumed.borrow();
        for key in self.entries.keys() {
            if !seen.iter().any(|k| k == key) {
                return Err(bad(format!("unknown key '{key}' in [{}]", self.name)));
            }
        }
        Ok(())
    }
}

fn split_sections(text: &str) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find(" #") {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| bad(format!("line {}: unterminated section header", lineno + 1)))?
                .trim()
                .to_ascii_lowercase();
            if sections.iter().any(|s| s.name == name) {
                return Err(bad(format!("duplicate section [{name}]")));
            }
            sections.push(Section {
                name,
                entries: BTreeMap::new(),
                consumed: std::cell::RefCell::new(Vec::new()),
            });
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("line {}: expected 'key = value'", lineno + 1)))?;
        let key = key.trim().to_ascii_lowercase();
        let value = value.trim().to_string();
        let section = sections
            .last_mut()
            .ok_or_else(|| bad(format!("line {}: key before any section", lineno + 1)))?;
        if section.entries.insert(key.clone(), value).is_some() {
            return Err(bad(format!(
                "duplicate key '{key}' in [{}]",
                section.name
            )));
        }
    }
    Ok(sections)
}

fn parse_jump_law(s: &Section) -> Result<JumpLaw> {
    let law = match s.require("jump")?.to_ascii_lowercase().as_str() {
        "exponential" | "exp" => JumpLaw::Exponential {
            rate: parse_f64(s.require("jump_rate")?, "jump_rate")?,
        },
        "erlang" => JumpLaw::Erlang {
            shape: s
                .require("jump_shape")?
                .parse()
                .map_err(|_| bad("jump_shape must be a positive integer"))?,
            rate: parse_f64(s.require("jump_rate")?, "jump_rate")?,
        },
        "hyperexponential" | "hyperexp" => JumpLaw::Hyperexponential {
            weights: parse_f64_list(s.require("jump_weights")?, "jump_weights")?,
            rates: parse_f64_list(s.require("jump_rates")?, "jump_rates")?,
        },
        "deterministic" => JumpLaw::Deterministic {
            size: parse_f64(s.require("jump_size")?, "jump_size")?,
        },
        other => return Err(bad(format!("unknown jump law '{other}'"))),
    };
    law.validate()?;
    Ok(law)
}

fn parse_queue(s: &Section) -> Result<LevyModel> {
    let model = match s.require("kind")?.to_ascii_lowercase().as_str() {
        "cpp" => LevyModel::CompoundPoisson {
            rate: parse_f64(s.require("lambda")?, "lambda")?,
            jumps: parse_jump_law(s)?,
            service: parse_f64(s.require("service")?, "service")?,
        },
        "brownian" => LevyModel::Brownian {
            drift: parse_f64(s.require("drift")?, "drift")?,
            volatility: parse_f64(s.require("sigma")?, "sigma")?,
        },
        "drift" => LevyModel::PureDrift {
            rate: parse_f64(s.require("rate")?, "rate")?,
        },
        other => return Err(bad(format!("unknown queue kind '{other}'"))),
    };
    model.validate()?;
    Ok(model)
}

fn parse_input(s: &Section) -> Result<NetworkInput> {
    let input = match s.require("kind")?.to_ascii_lowercase().as_str() {
        "cpp" => NetworkInput::CompoundPoisson {
            rate: parse_f64(s.require("lambda")?, "lambda")?,
            jumps: parse_jump_law(s)?,
        },
        "fluid" => NetworkInput::Fluid {
            rate: parse_f64(s.require("rate")?, "rate")?,
        },
        other => return Err(bad(format!("unknown input kind '{other}'"))),
    };
    Ok(input)
}

fn parse_run(s: &Section) -> Result<RunOptions> {
    let d = RunOptions::default();
    let usize_or = |key: &str, default: usize| -> Result<usize> {
        match s.get(key) {
            Some(v) => v
                .parse()
                .map_err(|_| bad(format!("{key} must be a nonnegative integer"))),
            None => Ok(default),
        }
    };
    let grid_or = |key: &str, default: &[f64]| -> Result<Vec<f64>> {
        match s.get(key) {
            Some(v) => parse_grid_spec(v),
            None => Ok(default.to_vec()),
        }
    };
    let seed = match s.get("seed") {
        Some(v) => v
            .parse()
            .map_err(|_| bad("seed must be a nonnegative integer"))?,
        None => d.seed,
    };
    let inversion_method = match s.get("inversion_method") {
        None => d.inversion_method,
        Some(v) => match v.to_ascii_lowercase().as_str() {
            "damped-series" | "euler" => InversionMethod::DampedSeries,
            "fixed-contour" | "talbot" => InversionMethod::FixedContour,
            other => return Err(bad(format!("unknown inversion method '{other}'"))),
        },
    };
    let opts = RunOptions {
        seed,
        horizon: s.f64_or("horizon", d.horizon)?,
        warmup: s.f64_or("warmup", d.warmup)?,
        batches: usize_or("batches", d.batches)?,
        replications: usize_or("replications", d.replications)?,
        euler_step: s.f64_or("euler_step", d.euler_step)?,
        grid1: grid_or("grid1", &d.grid1)?,
        grid2: grid_or("grid2", &d.grid2)?,
        xs: grid_or("xs", &d.xs)?,
        moment_step: s.f64_or("moment_step", d.moment_step)?,
        mc_paths: usize_or("mc_paths", d.mc_paths)?,
        factor_theta: match s.get("factor_theta") {
            Some(v) => Some(parse_f64(v, "factor_theta")?),
            None => None,
        },
        factor_points: usize_or("factor_points", d.factor_points)?,
        tail_tol: s.f64_or("tail_tol", d.tail_tol)?,
        inversion_terms: usize_or("inversion_terms", d.inversion_terms)?,
        inversion_target: s.f64_or("inversion_target", d.inversion_target)?,
        inversion_method,
        queue: usize_or("queue", d.queue)?,
    };
    if opts.queue != 1 && opts.queue != 2 {
        return Err(bad("queue must be 1 or 2"));
    }
    Ok(opts)
}

/// Parse a configuration file. Never panics; every malformed input maps to a
/// descriptive error.
pub fn parse_config(text: &str) -> Result<ModelConfig> {
    let sections = split_sections(text)?;
    let names: Vec<&str> = sections.iter().map(|s| s.name.as_str()).collect();
    let find = |name: &str| sections.iter().find(|s| s.name == name);

    let has_direct = names.contains(&"queue1") || names.contains(&"queue2");
    let has_network = names.contains(&"network");
    if has_direct && has_network {
        return Err(bad(
            "give either [queue1]/[queue2]/[coupling] or [network]/[input1]/[input2], not both",
        ));
    }

    let system = if has_network {
        let net = find("network").unwrap();
        let routing = [
            [
                parse_f64(net.require("p11")?, "p11")?,
                parse_f64(net.require("p12")?, "p12")?,
            ],
            [
                parse_f64(net.require("p21")?, "p21")?,
                parse_f64(net.require("p22")?, "p22")?,
            ],
        ];
        let service = [
            parse_f64(net.require("c1")?, "c1")?,
            parse_f64(net.require("c2")?, "c2")?,
        ];
        net.finish()?;
        let in1 = find("input1").ok_or_else(|| bad("network form needs [input1]"))?;
        let in2 = find("input2").ok_or_else(|| bad("network form needs [input2]"))?;
        let inputs = [parse_input(in1)?, parse_input(in2)?];
        in1.finish()?;
        in2.finish()?;
        let network = FluidNetwork {
            routing,
            service,
            inputs,
        };
        network.validate()?;
        SystemSpec::Network(network)
    } else {
        let q1 = find("queue1").ok_or_else(|| bad("missing [queue1]"))?;
        let q2 = find("queue2").ok_or_else(|| bad("missing [queue2]"))?;
        let x1 = parse_queue(q1)?;
        let x2 = parse_queue(q2)?;
        q1.finish()?;
        q2.finish()?;
        let (r1, r2) = match find("coupling") {
            Some(cp) => {
                let r = (
                    parse_f64(cp.require("r1")?, "r1")?,
                    parse_f64(cp.require("r2")?, "r2")?,
                );
                cp.finish()?;
                r
            }
            None => (0.0, 0.0),
        };
        SystemSpec::Direct { x1, x2, r1, r2 }
    };

    let run = match find("run") {
        Some(s) => {
            let run = parse_run(s)?;
            s.finish()?;
            run
        }
        None => RunOptions::default(),
    };

    for s in &sections {
        match s.name.as_str() {
            "queue1" | "queue2" | "coupling" | "network" | "input1" | "input2" | "run" => {}
            other => return Err(bad(format!("unknown section [{other}]"))),
        }
    }
    // validate the assembled system eagerly so parse rejection covers model
    // invariants (r1 r2 < 1, positivity, substochasticity)
    let config = ModelConfig { system, run };
    config.coupled_system().map(|_| ())?;
    Ok(config)
}

fn write_jumps(out: &mut String, jumps: &JumpLaw) {
    match jumps {
        JumpLaw::Exponential { rate } => {
            let _ = writeln!(out, "jump = exponential\njump_rate = {rate}");
        }
        JumpLaw::Erlang { shape, rate } => {
            let _ = writeln!(out, "jump = erlang\njump_shape = {shape}\njump_rate = {rate}");
        }
        JumpLaw::Hyperexponential { weights, rates } => {
            let ws: Vec<String> = weights.iter().map(|w| w.to_string()).collect();
            let rs: Vec<String> = rates.iter().map(|r| r.to_string()).collect();
            let _ = writeln!(
                out,
                "jump = hyperexponential\njump_weights = {}\njump_rates = {}",
                ws.join(","),
                rs.join(",")
            );
        }
        JumpLaw::Deterministic { size } => {
            let _ = writeln!(out, "jump = deterministic\njump_size = {size}");
        }
    }
}

fn write_queue(out: &mut String, name: &str, model: &LevyModel) {
    let _ = writeln!(out, "[{name}]");
    match model {
        LevyModel::CompoundPoisson {
            rate,
            jumps,
            service,
        } => {
            let _ = writeln!(out, "kind = cpp\nlambda = {rate}\nservice = {service}");
            write_jumps(out, jumps);
        }
        LevyModel::Brownian { drift, volatility } => {
            let _ = writeln!(out, "kind = brownian\ndrift = {drift}\nsigma = {volatility}");
        }
        LevyModel::PureDrift { rate } => {
            let _ = writeln!(out, "kind = drift\nrate = {rate}");
        }
    }
    let _ = writeln!(out);
}

fn grid_to_string(grid: &[f64]) -> String {
    grid.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Canonical serialization; `parse_config(to_canonical(c))` reproduces `c`.
pub fn to_canonical(config: &ModelConfig) -> String {
    let mut out = String::new();
    match &config.system {
        SystemSpec::Direct { x1, x2, r1, r2 } => {
            write_queue(&mut out, "queue1", x1);
            write_queue(&mut out, "queue2", x2);
            let _ = writeln!(out, "[coupling]\nr1 = {r1}\nr2 = {r2}\n");
        }
        SystemSpec::Network(net) => {
            let p = &net.routing;
            let _ = writeln!(
                out,
                "[network]\np11 = {}\np12 = {}\np21 = {}\np22 = {}\nc1 = {}\nc2 = {}\n",
                p[0][0], p[0][1], p[1][0], p[1][1], net.service[0], net.service[1]
            );
            for (i, input) in net.inputs.iter().enumerate() {
                let _ = writeln!(out, "[input{}]", i + 1);
                match input {
                    NetworkInput::CompoundPoisson { rate, jumps } => {
                        let _ = writeln!(out, "kind = cpp\nlambda = {rate}");
                        write_jumps(&mut out, jumps);
                    }
                    NetworkInput::Fluid { rate } => {
                        let _ = writeln!(out, "kind = fluid\nrate = {rate}");
                    }
                }
                let _ = writeln!(out);
            }
        }
    }
    let r = &config.run;
    let method = match r.inversion_method {
        InversionMethod::DampedSeries => "damped-series",
        InversionMethod::FixedContour => "fixed-contour",
    };
    let _ = writeln!(out, "[run]");
    let _ = writeln!(out, "seed = {}", r.seed);
    let _ = writeln!(out, "horizon = {}", r.horizon);
    let _ = writeln!(out, "warmup = {}", r.warmup);
    let _ = writeln!(out, "batches = {}", r.batches);
    let _ = writeln!(out, "replications = {}", r.replications);
    let _ = writeln!(out, "euler_step = {}", r.euler_step);
    let _ = writeln!(out, "grid1 = {}", grid_to_string(&r.grid1));
    let _ = writeln!(out, "grid2 = {}", grid_to_string(&r.grid2));
    let _ = writeln!(out, "xs = {}", grid_to_string(&r.xs));
    let _ = writeln!(out, "moment_step = {}", r.moment_step);
    let _ = writeln!(out, "mc_paths = {}", r.mc_paths);
    if let Some(theta) = r.factor_theta {
        let _ = writeln!(out, "factor_theta = {theta}");
    }
    let _ = writeln!(out, "factor_points = {}", r.factor_points);
    let _ = writeln!(out, "tail_tol = {}", r.tail_tol);
    let _ = writeln!(out, "inversion_terms = {}", r.inversion_terms);
    let _ = writeln!(out, "inversion_target = {}", r.inversion_target);
    let _ = writeln!(out, "inversion_method = {method}");
    let _ = writeln!(out, "queue = {}", r.queue);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "\
[queue1]
kind = cpp
lambda = 1.0
service = 1.0
jump = exponential
jump_rate = 2.0

[queue2]
kind = cpp
lambda = 1.0
service = 1.0
jump = exponential
jump_rate = 2.0

[coupling]
r1 = 0.5
r2 = 0.5

[run]
seed = 7
horizon = 50000
grid1 = 0.5,1,2
grid2 = 0.5,1,2
";

    #[test]
    fn parses_fixture() {
        let cfg = parse_config(FIXTURE).unwrap();
        let sys = cfg.coupled_system().unwrap();
        assert_eq!(sys.r1, 0.5);
        assert_eq!(cfg.run.seed, 7);
        assert_eq!(cfg.run.grid1, vec![0.5, 1.0, 2.0]);
    }

    #[test]
    fn round_trip_is_identity() {
        let cfg = parse_config(FIXTURE).unwrap();
        let text = to_canonical(&cfg);
        let cfg2 = parse_config(&text).unwrap();
        assert_eq!(cfg, cfg2);
        assert_eq!(
            cfg.coupled_system().unwrap(),
            cfg2.coupled_system().unwrap()
        );
    }

    #[test]
    fn network_round_trip() {
        let text = "\
[network]
p11 = 0.0
p12 = 1.0
p21 = 0.0
p22 = 0.0
c1 = 1.0
c2 = 2.0

[input1]
kind = cpp
lambda = 1.0
jump = erlang
jump_shape = 2
jump_rate = 4.0

[input2]
kind = fluid
rate = 0.3
";
        let cfg = parse_config(text).unwrap();
        let cfg2 = parse_config(&to_canonical(&cfg)).unwrap();
        assert_eq!(cfg, cfg2);
        let sys = cfg.coupled_system().unwrap();
        assert_eq!((sys.r1, sys.r2), (0.0, 1.0));
    }

    #[test]
    fn unknown_key_rejected() {
        let text = FIXTURE.replace("seed = 7", "sede = 7");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn unknown_section_rejected() {
        let text = format!("{FIXTURE}\n[extra]\nfoo = 1\n");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn duplicate_key_rejected() {
        let text = FIXTURE.replace("r2 = 0.5", "r2 = 0.5\nr2 = 0.4");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn coupling_product_rejected_at_parse() {
        let text = FIXTURE.replace("r1 = 0.5", "r1 = 2.0");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn grid_specs() {
        assert_eq!(parse_grid_spec("0:2:3").unwrap(), vec![0.0, 1.0, 2.0]);
        assert_eq!(parse_grid_spec("1.5").unwrap(), vec![1.5]);
        assert_eq!(parse_grid_spec("1,2,4").unwrap(), vec![1.0, 2.0, 4.0]);
        assert!(parse_grid_spec("2:1:5").is_err());
        assert!(parse_grid_spec("a:b:c").is_err());
        assert!(parse_grid_spec("0:1:0").is_err());
        assert!(parse_grid_spec("").is_err());
    }

    #[test]
    fn comments_and_whitespace_tolerated() {
        let text = format!("# leading comment\n{FIXTURE}\n; trailing\n");
        let with_inline = text.replace("r1 = 0.5", "r1 = 0.5 # inline note");
        assert!(parse_config(&with_inline).is_ok());
    }

    #[test]
    fn hostile_inputs_do_not_panic() {
        for text in [
            "",
            "[",
            "]",
            "[run",
            "key = value",
            "[queue1]\nkind = cpp",
            "[queue1]\nkind = cpp\nlambda = NaN\nservice = 1\njump = exponential\njump_rate = 2",
            "\u{0}\u{1}[queue1]\u{ff}",
            "[queue1]\n=\n",
            "[run]\nseed = -1",
        ] {
            let _ = parse_config(text);
        }
    }
}
