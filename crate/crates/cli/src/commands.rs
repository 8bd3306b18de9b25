use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use supershadow::density::{corollary_check, hitting_set_with, CorollaryMode, DensityWindows, HittingQuery, IndexSetReport};
use supershadow::io::{self, density_profile_csv, hitting_csv, trajectory_csv, witness_csv};
use supershadow::operator::OperatorKind;
use supershadow::pseudotraj::{chain_through_zero, gen_adversarial, gen_random, measure_defect, AdversarialKind, IndexConvention, Window};
use supershadow::shadow::{
    compact_delta, construct_witness_structured, divergence_certificate, search_super_witness, solve_shadowing_hyperbolic,
    CertificateOptions, SearchBudget, SearchMode, StructuredMode, Witness,
};
use supershadow::spectral::{classify as classify_spec, eigen_split};
use supershadow::{CVector, OperatorSpec64, Trajectory64};

use crate::config::{parse_window, to_vector, DensityKind, Entry, ExperimentConfig, Format};
use crate::CliError;

pub struct Context {
    pub cfg: ExperimentConfig,
    params: Vec<(String, Value)>,
    pub seed: u64,
    pub format: Format,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Config(e.to_string())
}

impl Context {
    pub fn new(cfg: ExperimentConfig, raw_params: Vec<String>) -> Result<Self, CliError> {
        let params = raw_params
            .iter()
            .map(|p| {
                let (k, v) = p.split_once('=').ok_or_else(|| config_err(format!("--param `{p}`: expected KEY=VALUE")))?;
                let v = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
                Ok((k.trim().to_string(), v))
            })
            .collect::<Result<_, CliError>>()?;
        Ok(Self { seed: cfg.seed.unwrap_or(0), format: cfg.format.unwrap_or(Format::Json), cfg, params })
    }

    pub fn eps(&self) -> f64 {
        self.cfg.eps.unwrap_or(0.1)
    }

    pub fn tol(&self) -> f64 {
        self.cfg.tol.unwrap_or(1e-8)
    }

    pub fn budget(&self, restarts: usize) -> SearchBudget {
        SearchBudget { restarts: self.cfg.budget.unwrap_or(restarts), iterations: self.cfg.iterations.unwrap_or(400) }
    }

    pub fn operator(&self) -> Result<OperatorSpec64, CliError> {
        let path = self.cfg.operator.as_ref().ok_or_else(|| config_err("missing field `operator` (operator JSON file)"))?;
        Ok(io::read_operator(path)?)
    }

    fn window(&self, default: Window) -> Result<Window, CliError> {
        self.cfg.window.as_deref().map(parse_window).unwrap_or(Ok(default))
    }

    fn vector(&self, name: &str, value: &Option<Vec<Entry>>, dim: usize) -> Result<CVector<f64>, CliError> {
        let v = to_vector(value.as_ref().ok_or_else(|| config_err(format!("missing field `{name}`")))?);
        if v.len() != dim {
            return Err(config_err(format!("`{name}` has {} entries, the operator acts on C^{dim}", v.len())));
        }
        Ok(v)
    }

    fn kind_name(&self) -> &str {
        self.cfg.kind.as_deref().unwrap_or("random")
    }

    /// Generator parameters: `[generator]` from the file, then top-level
    /// `delta`, then `--param` flags. A string `t` names an operator file.
    fn adversarial_kind(&self) -> Result<AdversarialKind<f64>, CliError> {
        let name = self.kind_name();
        let mut obj = match &self.cfg.generator {
            Some(t) => serde_json::to_value(t).map_err(|e| config_err(e.to_string()))?,
            None => json!({}),
        };
        let map = obj.as_object_mut().expect("table");
        map.insert("kind".into(), Value::String(name.to_string()));
        if let Some(d) = self.cfg.delta {
            map.insert("delta".into(), json!(d));
        } else {
            map.entry("delta").or_insert(json!(1e-3));
        }
        for (k, v) in &self.params {
            map.insert(k.clone(), v.clone());
        }
        if let Some(Value::String(path)) = map.get("t") {
            let op: OperatorSpec64 = io::read_operator(Path::new(path))?;
            map.insert("t".into(), serde_json::to_value(op).map_err(|e| config_err(e.to_string()))?);
        }
        serde_json::from_value(obj).map_err(|e| config_err(format!("generator {name}: {e}")))
    }

    fn default_convention(&self) -> IndexConvention {
        match self.kind_name() {
            "rotation-linear" | "isometry-walk" | "harmonic-bilateral" => IndexConvention::Bilateral,
            _ => IndexConvention::Positive,
        }
    }

    /// Generates a trajectory on `window` together with its operator.
    fn generate(&self, window: Window, default_delta: Option<f64>) -> Result<(Trajectory64, OperatorSpec64), CliError> {
        if self.kind_name() == "random" {
            let op = self.operator()?;
            let x0 = match &self.cfg.x {
                Some(_) => self.vector("x", &self.cfg.x, op.dim())?,
                None => CVector::zeros(op.dim()),
            };
            let delta = self.cfg.delta.or(default_delta).unwrap_or(1e-3);
            let t = gen_random(&op, &x0, delta, window, self.seed)?;
            return Ok((t, op));
        }
        let adv = gen_adversarial(&self.adversarial_kind()?, window)?;
        Ok((adv.trajectory, adv.operator))
    }

    /// The input trajectory: `--trajectory` with `--operator`, or a generated one.
    fn trajectory(&self, default_delta: Option<f64>) -> Result<(Trajectory64, OperatorSpec64), CliError> {
        if let Some(path) = &self.cfg.trajectory {
            let op = self.operator()?;
            let t: Trajectory64 = io::read_trajectory(path)?;
            if t.dim() != op.dim() {
                return Err(config_err(format!("trajectory lives in C^{}, operator acts on C^{}", t.dim(), op.dim())));
            }
            return Ok((t, op));
        }
        let conv = self.default_convention();
        let default = if conv == IndexConvention::Bilateral { Window::bilateral(100) } else { Window::positive(200) };
        self.generate(self.window(default)?, default_delta)
    }

    /// Writes the artifact in the selected format to `--out` (or stdout) and
    /// reports `summary` on stdout (stderr when the artifact goes to stdout).
    pub fn emit<T: Serialize>(&self, value: &T, csv: impl FnOnce() -> Result<Vec<u8>, CliError>, summary: &str) -> Result<(), CliError> {
        let bytes = match self.format {
            Format::Json => io::to_json(value)?.into_bytes(),
            Format::Csv => csv()?,
        };
        match &self.cfg.out {
            Some(path) => {
                io::write_bytes(path, &bytes)?;
                println!("{summary}");
                println!("wrote {}", path.display());
            }
            None => {
                std::io::stdout().write_all(&bytes).map_err(|e| config_err(e.to_string()))?;
                eprintln!("{summary}");
            }
        }
        Ok(())
    }
}

fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| config_err(e.to_string()))
}

pub fn classify(ctx: &Context) -> Result<(), CliError> {
    let op = ctx.operator()?;
    let v = classify_spec(&op, ctx.tol());
    let summary = format!("{} (limit super-shadowing: {}): {}", v.tag, v.limit_super_shadowing, v.reason);
    ctx.emit(
        &v,
        || {
            csv_table(
                &["index", "re", "im", "modulus"],
                v.eigenvalues.iter().enumerate().map(|(i, z)| vec![i.to_string(), z.re.to_string(), z.im.to_string(), z.norm().to_string()]),
            )
        },
        &summary,
    )
}

pub fn pseudo(ctx: &Context) -> Result<(), CliError> {
    let (t, op) = ctx.trajectory(None)?;
    let measured = measure_defect(&t, &op)?.max_defect;
    let summary = format!(
        "{}: window {}..={}, claimed delta {:e}, measured defect {:e}",
        t.origin, t.window.lo, t.window.hi, t.delta_claimed, measured
    );
    ctx.emit(&t, || Ok(trajectory_csv(&t)?), &summary)
}

pub fn shadow(ctx: &Context) -> Result<(), CliError> {
    let (t, op) = ctx.trajectory(None)?;
    let split = eigen_split(&op, ctx.tol())?.splitting.ok_or(supershadow::Error::NotHyperbolic)?;
    let sol = solve_shadowing_hyperbolic(&split, &op, &t)?;
    let summary = format!(
        "shadow: sup residual {:e}, K {:.6}, defect {:e}, K * defect {:e}",
        sol.witness.sup_residual,
        sol.k_bound,
        sol.defect,
        sol.k_bound * sol.defect
    );
    let doc = json!({
        "witness": sol.witness,
        "k_bound": sol.k_bound,
        "defect": sol.defect,
        "truncation_bound": sol.truncation_bound,
    });
    ctx.emit(&doc, || Ok(witness_csv(&sol.witness)?), &summary)
}

fn is_structured(op: &OperatorSpec64) -> bool {
    matches!(op.kind(), OperatorKind::NilpotentPlusRotation { .. } | OperatorKind::ProjectionToLine { .. })
}

pub fn supershadow(ctx: &Context) -> Result<(), CliError> {
    let mode = ctx.cfg.mode.clone().unwrap_or_else(|| "auto".into());
    let eps = ctx.eps();
    // Generated inputs default to the admissible defect of the construction.
    let structured_delta = if ctx.cfg.trajectory.is_none() && ctx.kind_name() == "random" {
        let op = ctx.operator()?;
        if is_structured(&op) && matches!(mode.as_str(), "auto" | "structured") {
            Some(compact_delta(&op, eps)?)
        } else {
            None
        }
    } else {
        None
    };
    let (t, op) = ctx.trajectory(structured_delta)?;
    let structured = match mode.as_str() {
        "auto" => is_structured(&op) && t.window.convention == IndexConvention::Positive && t.window.lo == 0,
        "structured" | "structured-limit" => true,
        "super" | "weak-super" | "limit-super" => false,
        other => return Err(config_err(format!("unknown mode `{other}`"))),
    };
    let (witness, extra): (Witness<f64>, Value) = if structured {
        let smode = if mode == "structured-limit" { StructuredMode::Limit } else { StructuredMode::Super };
        let s = construct_witness_structured(&op, &t, eps, smode)?;
        (s.witness, json!({ "epsilon": s.epsilon, "delta": s.delta, "defect": s.defect }))
    } else {
        let smode = match mode.as_str() {
            "weak-super" => SearchMode::WeakSuper,
            "limit-super" => SearchMode::LimitSuper,
            _ => SearchMode::Super,
        };
        let w = search_super_witness(&t, &op, smode, ctx.budget(32), ctx.seed)?;
        (w, json!({ "search": smode }))
    };
    let summary = format!(
        "supershadow ({}): sup residual {:e}, strict {:e}, tail {:e}, zero scalars at {:?}",
        if structured { "structured" } else { "search" },
        witness.sup_residual,
        witness.strict_sup_residual,
        witness.tail_residual(),
        witness.zero_lambda_indices
    );
    let doc = json!({ "witness": witness, "construction": extra });
    ctx.emit(&doc, || Ok(witness_csv(&witness)?), &summary)
}

pub fn certify(ctx: &Context) -> Result<(), CliError> {
    let sizes = ctx.cfg.windows.clone().unwrap_or_else(|| vec![25, 50, 100, 200]);
    let conv = match &ctx.cfg.window {
        Some(w) => parse_window(w)?.convention,
        None => ctx.default_convention(),
    };
    let mut ladder = Vec::new();
    let mut op = None;
    for &n in &sizes {
        let w = if conv == IndexConvention::Bilateral { Window::bilateral(n) } else { Window::positive(n) };
        let (t, o) = ctx.generate(w, None)?;
        ladder.push(t);
        op = Some(o);
    }
    let op = op.ok_or_else(|| config_err("`windows` is empty"))?;
    let mode = match ctx.cfg.mode.as_deref() {
        None | Some("super") => SearchMode::Super,
        Some("limit-super") => SearchMode::LimitSuper,
        Some(other) => return Err(config_err(format!("certify mode `{other}`: expected super or limit-super"))),
    };
    let defaults = CertificateOptions::default();
    let opts = CertificateOptions {
        max_cells: ctx.cfg.max_cells.unwrap_or(defaults.max_cells),
        mode,
        search: ctx.budget(defaults.search.restarts),
        seed: ctx.seed,
        ..defaults
    };
    let rungs = divergence_certificate(&ladder, &op, &opts)?;
    let summary = rungs
        .iter()
        .map(|r| {
            let status = serde_json::to_value(r.status).unwrap().as_str().unwrap_or_default().to_string();
            let lower = r.lower_bound.map_or("none".to_string(), |b| format!("{b:e}"));
            format!("{}..={}: {status}, lower {lower}, upper {:e}, {} cells", r.window.lo, r.window.hi, r.upper_bound, r.cells)
        })
        .collect::<Vec<_>>()
        .join("\n");
    ctx.emit(
        &rungs,
        || {
            csv_table(
                &["window_lo", "window_hi", "status", "lower_bound", "upper_bound", "cells"],
                rungs.iter().map(|r| {
                    vec![
                        r.window.lo.to_string(),
                        r.window.hi.to_string(),
                        serde_json::to_value(r.status).unwrap().as_str().unwrap_or_default().to_string(),
                        r.lower_bound.map(|b| b.to_string()).unwrap_or_default(),
                        r.upper_bound.to_string(),
                        r.cells.to_string(),
                    ]
                }),
            )
        },
        &summary,
    )
}

fn parse_set(spec: &str, n_end: u64) -> Result<Vec<u64>, CliError> {
    let upto = |f: &dyn Fn(u64) -> bool| (0..=n_end).filter(|&k| f(k)).collect::<Vec<_>>();
    match spec.split_once(':') {
        None if spec == "evens" => Ok(upto(&|k| k % 2 == 0)),
        None if spec == "squares" => Ok(upto(&|k| {
            let r = (k as f64).sqrt().round() as u64;
            r * r == k
        })),
        Some(("multiples", m)) => {
            let m: u64 = m.parse().ok().filter(|&m| m > 0).ok_or_else(|| config_err(format!("set `{spec}`: bad modulus")))?;
            Ok(upto(&|k| k % m == 0))
        }
        Some(("file", path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{path}: {e}")))?;
            text.split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|_| config_err(format!("{path}: `{s}` is not an index"))))
                .collect()
        }
        _ => Err(config_err(format!("set `{spec}`: expected evens, squares, multiples:K or file:PATH"))),
    }
}

fn windows_of(ctx: &Context) -> DensityWindows {
    DensityWindows { ud_min: ctx.cfg.n_min, ubd_min: ctx.cfg.window_min, ubd_max: ctx.cfg.window_max }
}

pub fn density(ctx: &Context) -> Result<(), CliError> {
    let n_end = ctx.cfg.horizon.unwrap_or(1000);
    let spec = ctx.cfg.set.as_deref().ok_or_else(|| config_err("missing field `set`"))?;
    let report = IndexSetReport::new(parse_set(spec, n_end)?, n_end, windows_of(ctx))?;
    let summary = format!(
        "{} indices in [0, {n_end}]: ud estimate {} over N' in [{}, {n_end}], uBd estimate {} over N' in [{}, {}]",
        report.indices.len(),
        report.ud_estimate,
        report.ud_min,
        report.ubd_estimate,
        report.ubd_min,
        report.ubd_max
    );
    ctx.emit(&report, || Ok(density_profile_csv(&report.per_n_profile)?), &summary)
}

pub fn hitting(ctx: &Context) -> Result<(), CliError> {
    let op = ctx.operator()?;
    let x = ctx.vector("x", &ctx.cfg.x, op.dim())?;
    let target = ctx.vector("target", &ctx.cfg.target, op.dim())?;
    let radius = ctx.cfg.radius.ok_or_else(|| config_err("missing field `radius`"))?;
    let horizon = ctx.cfg.horizon.unwrap_or(1000);
    let hs = hitting_set_with(&HittingQuery { x, spec: &op, target, radius, horizon }, windows_of(ctx))?;
    let summary = format!(
        "{} hits in [0, {horizon}]: ud estimate {}, uBd estimate {}",
        hs.report.indices.len(),
        hs.report.ud_estimate,
        hs.report.ubd_estimate
    );
    let doc = json!({ "report": hs.report, "distances": hs.distances });
    ctx.emit(&doc, || Ok(hitting_csv(&hs)?), &summary)
}

pub fn corollary(ctx: &Context) -> Result<(), CliError> {
    let op = ctx.operator()?;
    let x = ctx.vector("x", &ctx.cfg.x, op.dim())?;
    let targets: Vec<(CVector<f64>, f64)> = match &ctx.cfg.targets {
        Some(list) => list
            .iter()
            .map(|b| Ok((ctx.vector("targets.center", &Some(b.center.clone()), op.dim())?, b.radius)))
            .collect::<Result<_, CliError>>()?,
        None => {
            let y = ctx.vector("target", &ctx.cfg.target, op.dim())?;
            vec![(y, ctx.cfg.radius.ok_or_else(|| config_err("missing field `radius`"))?)]
        }
    };
    let n_end = ctx.cfg.horizon.unwrap_or(1000);
    let mode = match ctx.cfg.density.unwrap_or(DensityKind::Ubd) {
        DensityKind::Ud => CorollaryMode::Ud { n_min: ctx.cfg.n_min.unwrap_or(n_end.div_ceil(2)) },
        DensityKind::Ubd => {
            let window_max = ctx.cfg.window_max.unwrap_or(n_end);
            CorollaryMode::Ubd { window_min: ctx.cfg.window_min.unwrap_or(window_max.div_ceil(2)), window_max }
        }
    };
    let t = ctx.cfg.threshold.unwrap_or(0.1);
    let rows = corollary_check(&x, &op, &targets, t, n_end, mode)?;
    let passed = rows.iter().filter(|r| r.pass).count();
    let summary = format!("{passed}/{} targets exceed density {t}", rows.len());
    ctx.emit(
        &rows,
        || {
            csv_table(
                &["target", "value", "value_f64", "n_prime", "m", "pass"],
                rows.iter().map(|r| {
                    vec![
                        r.target.to_string(),
                        r.value.to_string(),
                        supershadow::density::density_f64(&r.value).to_string(),
                        r.n_prime.to_string(),
                        r.m.to_string(),
                        r.pass.to_string(),
                    ]
                }),
            )
        },
        &summary,
    )
}

pub fn chain(ctx: &Context) -> Result<(), CliError> {
    let op = ctx.operator()?;
    let x = ctx.vector("x", &ctx.cfg.x, op.dim())?;
    let y = ctx.vector("y", &ctx.cfg.y, op.dim())?;
    let delta = ctx.cfg.delta.unwrap_or(1e-3);
    let path = chain_through_zero(&op, &x, &y, delta)?;
    let defects = path.link_defects(&op);
    let worst = defects.iter().copied().fold(0.0, f64::max);
    let summary = format!("chain of {} points through 0 at {}, max link defect {worst:e} (< {delta:e})", path.points.len(), path.zero_index);
    ctx.emit(
        &path,
        || {
            let mut header = vec!["i".to_string()];
            for k in 0..op.dim() {
                header.push(format!("re_{k}"));
                header.push(format!("im_{k}"));
            }
            header.push("link_defect".into());
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            csv_table(
                &header,
                path.points.iter().enumerate().map(|(i, p)| {
                    let mut row = vec![i.to_string()];
                    for z in p.iter() {
                        row.push(z.re.to_string());
                        row.push(z.im.to_string());
                    }
                    row.push(defects.get(i).map(|d| d.to_string()).unwrap_or_default());
                    row
                }),
            )
        },
        &summary,
    )
}
