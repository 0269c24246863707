//! Command drivers.

use std::path::PathBuf;
use std::time::Instant;

use cemflow::assembly::interpolate;
use cemflow::cache::{aux_space_cached, CacheDir};
use cemflow::cem::{build_space_and_correctors, build_static, FormKind, StaticData};
use cemflow::metrics::{prolongate, Norms};
use cemflow::solvers::{reference_steady, reference_transient, run_strang, run_transient, steady_solve, ReferenceTrajectory, TransientRun};
use cemflow::spectral::lambda_stats;
use cemflow::{CemError, ErrorReport, Instance, Layers, NormKind, ProblemData, SchemeConfig};
use serde::Serialize;

use crate::config::{Cell, ExperimentConfig, NonlinearConfig, SweepKind};
use crate::output::{sha256_hex, Manifest, OutputDir};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Steady,
    Transient,
    Nonlinear,
    Spectrum,
    Sweep,
    Reference,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Steady => "steady",
            Command::Transient => "transient",
            Command::Nonlinear => "nonlinear",
            Command::Spectrum => "spectrum",
            Command::Sweep => "sweep",
            Command::Reference => "reference",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub rows: Vec<ErrorReport>,
}

/// Fine reference on its own grid; multiscale vectors are prolongated to it.
struct Reference {
    inst: Instance,
    steady: Option<Vec<f64>>,
    transient: Option<ReferenceTrajectory>,
}

impl Reference {
    fn norms(&self) -> Norms<'_> {
        Norms::new(&self.inst, None)
    }

    fn lift(&self, inst: &Instance, v: &[f64]) -> Result<Vec<f64>, CliError> {
        if inst.fine().nx == self.inst.fine().nx && inst.fine().ny == self.inst.fine().ny {
            return Ok(v.to_vec());
        }
        Ok(prolongate(inst.fine(), self.inst.fine(), v)?)
    }

    /// `(E_a, E_L)` of `v` against `r`.
    fn errors(&self, inst: &Instance, v: &[f64], r: &[f64]) -> Result<(f64, f64), CliError> {
        let v = self.lift(inst, v)?;
        let n = self.norms();
        Ok((n.error(NormKind::Acal, &v, r)?.value, n.error(NormKind::L2, &v, r)?.value))
    }
}

struct Driver<'a> {
    cfg: &'a ExperimentConfig,
    problem: ProblemData,
    cache: Option<CacheDir>,
    out: OutputDir,
    reference: Option<Reference>,
}

fn cell_tag(cell: &Cell) -> String {
    format!("H{}_Nov{}", cell.cnx, cell.layers.label())
}

fn base_report(cfg: &ExperimentConfig, command: &str, inst: &Instance, cell: &Cell) -> ErrorReport {
    ErrorReport {
        command: command.to_string(),
        h: inst.h(),
        n_ov: cell.layers.label(),
        l_m: cfg.method.l_m,
        contrast: inst.medium.contrast(),
        c_flow: cfg.velocity.c_flow,
        scheme: String::new(),
        tau: None,
        lambda: f64::NAN,
        lambda_prime: f64::NAN,
        e_a: None,
        e_l: None,
        d_a: None,
        d_l: None,
        n_a: None,
        n_l: None,
        wall_s: 0.0,
    }
}

impl Driver<'_> {
    fn instance(&self, cell: &Cell) -> Result<Instance, CliError> {
        let (nx, ny) = (self.cfg.grid.nx, self.cfg.ny());
        Ok(Instance::with_constant(self.problem.clone(), nx, ny, cell.cnx, cell.cny, self.cfg.method.c)?)
    }

    fn reference_instance(&self) -> Result<Instance, CliError> {
        let (rx, ry) = self.cfg.reference_grid();
        Ok(Instance::with_constant(self.problem.clone(), rx, ry, 1, 1, self.cfg.method.c)?)
    }

    fn steady_reference(&mut self) -> Result<Option<&Reference>, CliError> {
        if self.cfg.reference.skip {
            return Ok(None);
        }
        if self.reference.as_ref().is_none_or(|r| r.steady.is_none()) {
            let inst = self.reference_instance()?;
            let u = reference_steady(&inst)?;
            if self.cfg.output.snapshots {
                self.out.write_snapshot("reference.txt", inst.fine(), &u)?;
            }
            self.reference = Some(Reference { inst, steady: Some(u), transient: None });
        }
        Ok(self.reference.as_ref())
    }

    fn transient_reference(&mut self, sc: &SchemeConfig) -> Result<Option<&Reference>, CliError> {
        if self.cfg.reference.skip {
            return Ok(None);
        }
        if self.reference.as_ref().is_none_or(|r| r.transient.is_none()) {
            let inst = self.reference_instance()?;
            let steps = sc.steps()?;
            let ref_steps = self.cfg.reference.steps.unwrap_or(steps);
            let traj = reference_transient(&inst, sc.t_end / ref_steps as f64, ref_steps, ref_steps / steps)?;
            if self.cfg.output.snapshots {
                self.out.write_snapshot("reference.txt", inst.fine(), traj.last())?;
            }
            self.reference = Some(Reference { inst, steady: None, transient: Some(traj) });
        }
        Ok(self.reference.as_ref())
    }

    fn steady_cell(&mut self, command: &str, cell: &Cell) -> Result<ErrorReport, CliError> {
        let t0 = Instant::now();
        let inst = self.instance(cell)?;
        let l = self.cfg.method.l_m;
        let aux = aux_space_cached(&inst, l, false, self.cache.as_ref())?;
        let g = interpolate(&inst.problem.data.g, inst.fine(), 0.0)?;
        let q = &inst.problem.data.q;
        let (space, set) = build_space_and_correctors(&inst, &aux, cell.layers, &g, q, 0.0)?;
        let sol = steady_solve(&inst, &space, &set, &g)?;
        let mut row = base_report(self.cfg, command, &inst, cell);
        (row.lambda, row.lambda_prime) = lambda_stats(&aux);
        if self.cfg.method.corrector_errors && cell.layers != Layers::Global {
            let flux = inst.bp.has_neumann().then_some((q, 0.0));
            let glo = build_static(&inst, &aux, Layers::Global, FormKind::Acal, false, StaticData { g_tilde: Some(&g), flux })?;
            let norms = Norms::new(&inst, None);
            row.d_a = Some(norms.error(NormKind::Acal, &set.d, &glo.correctors.d)?.value);
            row.d_l = Some(norms.error(NormKind::L2, &set.d, &glo.correctors.d)?.value);
            if flux.is_some() {
                row.n_a = Some(norms.error(NormKind::Acal, &set.n, &glo.correctors.n)?.value);
                row.n_l = Some(norms.error(NormKind::L2, &set.n, &glo.correctors.n)?.value);
            }
        }
        row.wall_s = t0.elapsed().as_secs_f64();
        if let Some(r) = self.steady_reference()? {
            let (ea, el) = r.errors(&inst, &sol.u_ms, r.steady.as_ref().expect("steady reference"))?;
            (row.e_a, row.e_l) = (Some(ea), Some(el));
        }
        if self.cfg.output.snapshots {
            self.out.write_snapshot(&format!("u_ms_{}.txt", cell_tag(cell)), inst.fine(), &sol.u_ms)?;
        }
        Ok(row)
    }

    fn time_cell(&mut self, command: &str, cell: &Cell, nonlinear: bool, log: &mut Vec<Vec<String>>) -> Result<ErrorReport, CliError> {
        let t0 = Instant::now();
        let inst = self.instance(cell)?;
        let sc = self.cfg.scheme_config(self.cfg.time(command)?)?;
        let run: TransientRun = if nonlinear {
            run_strang(&inst, self.cfg.method.l_m, cell.layers, &sc)?
        } else {
            run_transient(&inst, self.cfg.method.l_m, cell.layers, &sc)?
        };
        let mut row = base_report(self.cfg, command, &inst, cell);
        row.scheme = if nonlinear { "Strang".into() } else { sc.scheme.name().into() };
        row.tau = Some(sc.tau);
        (row.lambda, row.lambda_prime) = (run.lambda, run.lambda_prime);
        row.wall_s = t0.elapsed().as_secs_f64();
        let reference = self.transient_reference(&sc)?;
        let every = reference.and_then(|r| r.transient.as_ref()).map(|t| (t.states[1].0).max(1));
        for st in &run.states[1..] {
            let l2 = Norms::new(&inst, None).norm(NormKind::L2, &st.u_ms)?;
            let err = match (reference, every) {
                (Some(r), Some(k)) => {
                    let u_ref = r.transient.as_ref().and_then(|t| t.at_step(st.step * k)).expect("recorded reference step");
                    format!("{:.6e}", r.errors(&inst, &st.u_ms, u_ref)?.1)
                }
                _ => String::new(),
            };
            log.push(vec![cell_tag(cell), st.step.to_string(), format!("{:.6e}", st.time), format!("{l2:.6e}"), err]);
        }
        if let Some(r) = reference {
            let (ea, el) = r.errors(&inst, &run.last().u_ms, r.transient.as_ref().expect("transient reference").last())?;
            (row.e_a, row.e_l) = (Some(ea), Some(el));
        }
        if self.cfg.output.snapshots {
            self.out.write_snapshot(&format!("u_ms_{}.txt", cell_tag(cell)), inst.fine(), &run.last().u_ms)?;
        }
        Ok(row)
    }

    fn spectrum_cell(&mut self, cell: &Cell) -> Result<ErrorReport, CliError> {
        let t0 = Instant::now();
        let inst = self.instance(cell)?;
        let aux = aux_space_cached(&inst, self.cfg.method.l_m, false, self.cache.as_ref())?;
        let mut row = base_report(self.cfg, "spectrum", &inst, cell);
        row.n_ov = String::new();
        (row.lambda, row.lambda_prime) = lambda_stats(&aux);
        row.wall_s = t0.elapsed().as_secs_f64();
        let l = self.cfg.method.l_m;
        let mut header: Vec<String> = vec!["element".into()];
        header.extend((1..=l + 1).map(|j| format!("lambda_{j}")));
        header.extend(["max_imag".into(), "residual".into()]);
        let rows: Vec<Vec<String>> = aux
            .elements
            .iter()
            .map(|el| {
                let mut r = vec![el.element.to_string()];
                r.extend((0..=l).map(|j| el.eigenvalues.get(j).map(|x| format!("{x:.9e}")).unwrap_or_default()));
                r.extend([format!("{:.3e}", el.max_imag), format!("{:.3e}", el.residual)]);
                r
            })
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        self.out.write_csv(&format!("spectrum_H{}.csv", cell.cnx), &header, &rows)?;
        Ok(row)
    }
}

const STEP_COLUMNS: [&str; 5] = ["cell", "step", "time", "u_L2", "E_L"];

fn input_hash(text: &str, cfg: &ExperimentConfig) -> Result<String, CliError> {
    let mut bytes = text.as_bytes().to_vec();
    bytes.extend(cfg.medium.seed.to_le_bytes());
    if let Some(f) = &cfg.medium.file {
        bytes.extend(std::fs::read(f).map_err(|e| CliError::Io(format!("{}: {e}", f.display())))?);
    }
    Ok(sha256_hex(&bytes))
}

pub fn execute(command: Command, opts: &RunOptions) -> Result<RunSummary, CliError> {
    let (mut cfg, text) = ExperimentConfig::load(&opts.config)?;
    if let Some(seed) = opts.seed {
        cfg.medium.seed = seed;
    }
    let nonlinear = command == Command::Nonlinear || (command == Command::Sweep && cfg.sweep.kind == SweepKind::Nonlinear);
    if nonlinear && cfg.nonlinear.is_none() {
        cfg.nonlinear = Some(NonlinearConfig { reaction: "u_minus_u3".into(), ode_substeps: SchemeConfig::DEFAULT_ODE_SUBSTEPS });
    }
    let out_dir = opts.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    let problem = cfg.problem()?;
    let out = OutputDir::create(&out_dir)?;
    let cache = CacheDir::from_env().map_err(|e| CliError::Io(e.to_string()))?;
    let mut d = Driver { cfg: &cfg, problem, cache, out, reference: None };

    let mut rows = Vec::new();
    let mut log = Vec::new();
    match command {
        Command::Steady => {
            for cell in cfg.paired_cells()? {
                rows.push(d.steady_cell("steady", &cell)?);
            }
        }
        Command::Transient | Command::Nonlinear => {
            cfg.time(command.name())?;
            for cell in cfg.paired_cells()? {
                rows.push(d.time_cell(command.name(), &cell, nonlinear, &mut log)?);
            }
        }
        Command::Sweep => {
            for cell in cfg.product_cells()? {
                rows.push(match cfg.sweep.kind {
                    SweepKind::Steady => d.steady_cell("sweep", &cell)?,
                    SweepKind::Transient | SweepKind::Nonlinear => {
                        cfg.time("sweep")?;
                        d.time_cell("sweep", &cell, nonlinear, &mut log)?
                    }
                });
            }
        }
        Command::Spectrum => {
            let mut seen = Vec::new();
            for cell in cfg.paired_cells()? {
                if !seen.contains(&(cell.cnx, cell.cny)) {
                    seen.push((cell.cnx, cell.cny));
                    rows.push(d.spectrum_cell(&cell)?);
                }
            }
        }
        Command::Reference => {
            if !cfg.output.snapshots {
                return Err(CliError::Schema("`reference` writes a snapshot; output.snapshots must be true".into()));
            }
            if cfg.reference.skip {
                return Err(CliError::Schema("`reference` with reference.skip set".into()));
            }
            match &cfg.time {
                Some(t) => {
                    let sc = cfg.scheme_config(t)?;
                    d.transient_reference(&sc)?;
                }
                None => {
                    d.steady_reference()?;
                }
            }
        }
    }
    if !log.is_empty() {
        d.out.write_csv("steps.csv", &STEP_COLUMNS, &log)?;
    }
    d.out.write_results(&rows)?;
    let (rx, ry) = cfg.reference_grid();
    let dom = cfg.domain;
    let manifest = Manifest {
        command: command.name().into(),
        version: env!("CARGO_PKG_VERSION").into(),
        core_version: cemflow::VERSION.into(),
        seed: cfg.medium.seed,
        threads: opts.threads,
        input_sha256: input_hash(&text, &cfg)?,
        config_text: text.clone(),
        config: serde_json::to_value(&cfg).map_err(|e| CliError::Io(e.to_string()))?,
        domain: [dom.x_min, dom.x_max, dom.y_min, dom.y_max],
        fine: [cfg.grid.nx, cfg.ny()],
        reference: [rx, ry],
        outputs: Vec::new(),
    };
    d.out.write_manifest(manifest)?;
    Ok(RunSummary { out_dir, rows })
}

impl From<CemError> for CliError {
    fn from(e: CemError) -> Self {
        match e {
            CemError::Io(io) => CliError::Io(io.to_string()),
            e if e.is_numerical() => CliError::Numerical(e.to_string()),
            e => CliError::Schema(e.to_string()),
        }
    }
}
