//! Run configuration: flat JSON keys mirroring the command-line flags, family
//! resolution into seed specifications and the configuration hash.

use crate::classifier::ClassifyOptions;
use crate::error::{G2Error, Result};
use crate::invariants::ModelParams;
use crate::seeds::{ac_auto_switch, ac_problem, SeedFamily, SeedSpec, DEFAULT_AC_ORDER};
use crate::series::solve_singular_ivp;
use crate::shooter::ShootOptions;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use std::path::Path;

/// Environment variable naming the default configuration file.
pub const CONFIG_ENV: &str = "G2FLOW_CONFIG";

/// A coefficient given as a number or as `"auto"` (solved from the family constraint).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coef {
    Value(f64),
    Auto,
}

impl Serialize for Coef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Coef::Value(v) => s.serialize_f64(*v),
            Coef::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for Coef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::Number(n) => n.as_f64().map(Coef::Value).ok_or_else(|| serde::de::Error::custom("bad number")),
            Value::String(s) => s.parse().map_err(serde::de::Error::custom),
            other => Err(serde::de::Error::custom(format!("expected a number or \"auto\", got {other}"))),
        }
    }
}

impl std::str::FromStr for Coef {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Coef::Auto);
        }
        s.parse::<f64>().map(Coef::Value).map_err(|_| format!("expected a number or \"auto\", got {s:?}"))
    }
}

/// All settings of a run. Absent optional values take command-specific defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// One of b7, d7, k11, kmn, cs, ac, cone.
    pub family: Option<String>,
    pub m: u32,
    pub n: u32,
    pub r0: f64,
    pub alpha1: Option<Coef>,
    pub alpha2: Option<Coef>,
    pub alpha3: Option<Coef>,
    /// Asymmetry parameter of the k11 family.
    pub alpha: f64,
    pub beta: f64,
    pub c: f64,
    pub p: f64,
    pub q: f64,
    /// Start (switch) parameter.
    pub t0: Option<f64>,
    /// End parameter.
    pub t1: Option<f64>,
    pub rtol: f64,
    pub atol: f64,
    pub cushion: f64,
    pub max_span: Option<f64>,
    pub max_steps: usize,
    pub confirm_blowup: bool,
    pub k: f64,
    pub c_tol: f64,
    pub beta_tol: f64,
    /// Scan exponents for the c bisection.
    pub c_scan: (i32, i32),
    /// Scan exponents for the beta bisection.
    pub beta_scan: (i32, i32),
    /// Name of the swept parameter (alpha1, alpha3, alpha, beta, c, r0).
    pub sweep_param: Option<String>,
    pub sweep_values: Vec<f64>,
    /// Number of extra dense samples written per trajectory.
    pub samples: usize,
    /// Output directory.
    pub out: String,
    /// Seed of the random property checks.
    pub seed: u64,
    pub quick: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            family: None,
            m: 1,
            n: 2,
            r0: 1.0,
            alpha1: None,
            alpha2: None,
            alpha3: None,
            alpha: 0.0,
            beta: 1.0,
            c: 1.0,
            p: 0.0,
            q: 0.0,
            t0: None,
            t1: None,
            rtol: 1e-12,
            atol: 1e-14,
            cushion: crate::classifier::DEFAULT_CUSHION,
            max_span: None,
            max_steps: 2_000_000,
            confirm_blowup: false,
            k: 1.5,
            c_tol: 1e-13,
            beta_tol: 1e-11,
            c_scan: (-10, 60),
            beta_scan: (-10, 10),
            sweep_param: None,
            sweep_values: vec![],
            samples: 400,
            out: "g2flow_out".into(),
            seed: 1234,
            quick: false,
        }
    }
}

fn cfg_err(m: impl Into<String>) -> G2Error {
    G2Error::Config(m.into())
}

/// Overlays the keys of `top` onto `base`; both must be JSON objects.
fn overlay(base: &mut Map<String, Value>, top: &Map<String, Value>) {
    for (k, v) in top {
        base.insert(k.clone(), v.clone());
    }
}

impl RunConfig {
    /// Defaults, then the file (explicit path or the environment variable), then `flags`.
    pub fn load(path: Option<&Path>, flags: &Map<String, Value>) -> Result<RunConfig> {
        let mut merged = match serde_json::to_value(RunConfig::default()) {
            Ok(Value::Object(m)) => m,
            _ => unreachable!("config serializes to an object"),
        };
        let env_path = std::env::var_os(CONFIG_ENV).map(std::path::PathBuf::from);
        let file = path.map(Path::to_path_buf).or(env_path);
        if let Some(f) = file {
            let text =
                std::fs::read_to_string(&f).map_err(|e| cfg_err(format!("cannot read config {}: {e}", f.display())))?;
            match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(m)) => overlay(&mut merged, &m),
                Ok(_) => return Err(cfg_err(format!("config {} is not a JSON object", f.display()))),
                Err(e) => return Err(cfg_err(format!("config {} is not valid JSON: {e}", f.display()))),
            }
        }
        overlay(&mut merged, flags);
        let cfg: RunConfig = serde_json::from_value(Value::Object(merged)).map_err(|e| cfg_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks tolerances and budgets.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rtol", self.rtol),
            ("atol", self.atol),
            ("cushion", self.cushion),
            ("c_tol", self.c_tol),
            ("beta_tol", self.beta_tol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(cfg_err(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(s) = self.max_span {
            if !(s > 0.0) {
                return Err(cfg_err(format!("max_span must be positive, got {s}")));
            }
        }
        if self.max_steps == 0 {
            return Err(cfg_err("max_steps must be positive"));
        }
        if !(self.k > 1.0 && self.k < 2.0) {
            return Err(cfg_err(format!("k must lie in (1, 2), got {}", self.k)));
        }
        if self.c_scan.0 > self.c_scan.1 || self.beta_scan.0 > self.beta_scan.1 {
            return Err(cfg_err("scan ranges must be ordered"));
        }
        if let (Some(a), Some(b)) = (self.t0, self.t1) {
            if !(a > 0.0 && b > 0.0) || a == b {
                return Err(cfg_err(format!("t0 = {a} and t1 = {b} must be positive and distinct")));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON rendering, as lowercase hex.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn family_name(&self) -> Result<&str> {
        self.family.as_deref().ok_or_else(|| cfg_err("no family given (b7, d7, k11, kmn, cs, ac, cone)"))
    }

    /// The three alphas with `"auto"` entries solved from the family constraint;
    /// an absent alpha2 follows alpha1.
    pub fn resolve_alphas(&self, family: &str) -> Result<[f64; 3]> {
        let a1 = self.alpha1.unwrap_or(Coef::Auto);
        let linked = self.alpha2.is_none();
        let a2 = self.alpha2.unwrap_or(a1);
        let a3 = self.alpha3.ok_or_else(|| cfg_err("alpha3 is required"))?;
        let vals = [a1, a2, a3];
        let autos: Vec<usize> = (0..3).filter(|&i| vals[i] == Coef::Auto).collect();
        let known = |i: usize| match vals[i] {
            Coef::Value(v) => v,
            Coef::Auto => f64::NAN,
        };
        let mut out = [known(0), known(1), known(2)];
        let sum_target = 1.0 / (64.0 * self.r0);
        match family {
            "b7" => match autos.as_slice() {
                [] => {}
                [0, 1] if linked => {
                    out[0] = (sum_target - out[2]) / 2.0;
                    out[1] = out[0];
                }
                [i] => out[*i] = sum_target - (0..3).filter(|j| j != i).map(|j| out[j]).sum::<f64>(),
                _ => return Err(cfg_err("at most one independent alpha may be auto")),
            },
            "d7" => match autos.as_slice() {
                [] => {}
                [0, 1] if linked => {
                    out[0] = (1.0 / out[2]).sqrt();
                    out[1] = out[0];
                }
                [i] => out[*i] = 1.0 / (0..3).filter(|j| j != i).map(|j| out[j]).product::<f64>(),
                _ => return Err(cfg_err("at most one independent alpha may be auto")),
            },
            _ => return Err(cfg_err(format!("alphas do not apply to family {family}"))),
        }
        Ok(out)
    }

    /// Seed specification of the configured family (the cone has none).
    pub fn seed_spec(&self) -> Result<SeedSpec> {
        let fam = self.family_name()?;
        let r0 = self.r0;
        let family = match fam {
            "b7" => SeedFamily::DeltaSu2 { r0, alpha: self.resolve_alphas(fam)? },
            "d7" => SeedFamily::Su2Factor { r0, alpha: self.resolve_alphas(fam)? },
            "k11" => SeedFamily::K11 { r0, alpha: self.alpha, beta: self.beta },
            "kmn" if self.m == 1 && self.n == 1 => SeedFamily::K11 { r0, alpha: 0.0, beta: self.beta },
            "kmn" => SeedFamily::Kmn { m: self.m, n: self.n, r0, beta: self.beta },
            "cs" => SeedFamily::CsEnd { c: self.c },
            "ac" => SeedFamily::AcEnd { p: self.p, q: self.q, c: self.c },
            "cone" => return Err(cfg_err("the cone family is seeded in closed form")),
            other => return Err(cfg_err(format!("unknown family {other:?}"))),
        };
        let default_switch = match family {
            SeedFamily::CsEnd { .. } => 0.1,
            SeedFamily::AcEnd { p, q, c } => {
                let params = ModelParams::new(p, q);
                let sol = solve_singular_ivp(&ac_problem(&params, c, DEFAULT_AC_ORDER))?;
                ac_auto_switch(&sol, &params, c, 1e-15)
            }
            _ => 0.1 * r0,
        };
        let spec = SeedSpec { family, switch_parameter: self.t0.unwrap_or(default_switch) };
        spec.validate().map_err(|e| cfg_err(e.to_string()))?;
        Ok(spec)
    }

    pub fn classify_options(&self) -> ClassifyOptions {
        ClassifyOptions {
            cushion: self.cushion,
            rtol: self.rtol,
            atol: self.atol,
            max_span: self.max_span.unwrap_or(1e6),
            max_steps: self.max_steps,
            confirm_blowup: self.confirm_blowup,
            ..ClassifyOptions::default()
        }
    }

    pub fn shoot_options(&self) -> ShootOptions {
        ShootOptions {
            k: self.k,
            rtol: self.rtol,
            atol: self.atol,
            c_tol: self.c_tol,
            beta_tol: self.beta_tol,
            c_scan: self.c_scan,
            beta_scan: self.beta_scan,
            max_span: self.max_span.unwrap_or(1e7),
            ..ShootOptions::default()
        }
    }

    /// Copy with one named parameter replaced (for sweeps).
    pub fn with_param(&self, name: &str, v: f64) -> Result<RunConfig> {
        let mut c = self.clone();
        match name {
            "alpha1" => c.alpha1 = Some(Coef::Value(v)),
            "alpha2" => c.alpha2 = Some(Coef::Value(v)),
            "alpha3" => c.alpha3 = Some(Coef::Value(v)),
            "alpha" => c.alpha = v,
            "beta" => c.beta = v,
            "c" => c.c = v,
            "r0" => c.r0 = v,
            "p" => c.p = v,
            "q" => c.q = v,
            "t0" => c.t0 = Some(v),
            other => return Err(cfg_err(format!("cannot sweep over {other:?}"))),
        }
        Ok(c)
    }
}
