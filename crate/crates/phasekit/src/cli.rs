//! Machinery behind the `phasekit` binary.
//!
//! Every acceptance-style check in the library is runnable through one
//! subcommand here: `validate` for dataset invariants, `omega` for the
//! closed-form/series comparison, `locality` and `integrality` for the
//! exchange and loop integer checks, `vv` for the vanishing-cycle loop
//! constant, `fock` for the composition scalar, and `polylog` for the
//! inversion-formula sweep.  Each run produces a versioned JSON report
//! (`report.v1`) or its flat CSV projection; randomized sweeps are
//! deterministic given the seed, including under parallel execution.
//!
//! Exit codes: 0 all residuals within tolerance, 2 parse/configuration
//! trouble, 3 domain errors, 4 tolerance failures.  The worker count is
//! capped by the `PHASEKIT_THREADS` environment variable.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::continuation::{
    integrality_check, vanishing_cycle_at, vanishing_loop_check, vanishing_loop_legs,
    FrobeniusData, LambdaLeg,
};
use crate::error::{Error, Result};
use crate::fock::{compose_and_extract_phase, ope_product, FockElement, Generator};
use crate::lattice::Lattice;
use crate::linalg::C;
use crate::opcalc::MonodromySplit;
use crate::periods::PeriodData;
use crate::phase::PhaseContext;
use crate::polylog::{jonquiere_check, CutSide};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

/// Parsed command line: one subcommand plus output routing.
#[derive(Debug, Parser)]
#[command(
    name = "phasekit",
    version,
    about = "Phase factors of isolated hypersurface singularities"
)]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Report format: versioned JSON or its flat CSV projection.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Which lattice(s) a command operates on: a built-in label, a
/// `lattice.v1` JSON file, or the command's default suite when neither is
/// given.
#[derive(Clone, Debug, Default, Args)]
pub struct TargetArgs {
    /// Built-in lattice label (A1, A2 or A3).
    #[arg(long, conflicts_with = "dataset")]
    pub builtin: Option<String>,
    /// Path to a lattice.v1 JSON file.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check lattice, spectrum and Frobenius invariants.
    Validate {
        #[command(flatten)]
        target: TargetArgs,
        /// Largest admissible residual.
        #[arg(long, default_value_t = 1e-8, value_parser = positive_f64)]
        tol: f64,
    },
    /// Compare the closed-form phase factor against the pairing series on
    /// a modulus-ratio grid, over all basis cycle pairs.
    Omega {
        #[command(flatten)]
        target: TargetArgs,
        /// Series truncation for the oracle side.
        #[arg(long, default_value_t = 60)]
        n_max: usize,
        /// Grid points per axis (ratios 2..8 times as many angles).
        #[arg(long, default_value_t = 5)]
        grid: usize,
        #[arg(long, default_value_t = 1e-8, value_parser = positive_f64)]
        tol: f64,
    },
    /// Exchange defect of the phase factor: reports the winding integer k
    /// and its distance from exactness.
    Locality {
        #[command(flatten)]
        target: TargetArgs,
        /// Random (lambda, mu, path) configurations per lattice.
        #[arg(long, default_value_t = 10)]
        samples: usize,
        #[arg(long, default_value_t = 17)]
        seed: u64,
        #[arg(long, default_value_t = 1e-6, value_parser = positive_f64)]
        tol: f64,
    },
    /// Loop integrality of the phase form: randomized loops around single
    /// critical values and their compositions.
    Integrality {
        #[command(flatten)]
        target: TargetArgs,
        /// Randomized loops per lattice.
        #[arg(long, default_value_t = 20)]
        loops: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5, value_parser = positive_f64)]
        tol: f64,
    },
    /// Vanishing-cycle loop integrals against the universal constant
    /// -4 pi i.
    Vv {
        #[command(flatten)]
        target: TargetArgs,
        #[arg(long, default_value_t = 23)]
        seed: u64,
        /// Relative tolerance on the loop value.
        #[arg(long, default_value_t = 1e-6, value_parser = positive_f64)]
        tol: f64,
    },
    /// Fock composition scalar against the exponentiated pairing series,
    /// plus OPE regularization stability.
    Fock {
        #[command(flatten)]
        target: TargetArgs,
        /// Truncation orders to test.
        #[arg(long, value_delimiter = ',', default_values_t = [4usize, 6, 8])]
        orders: Vec<usize>,
        #[arg(long, default_value_t = 1e-8, value_parser = positive_f64)]
        tol: f64,
        /// Tolerance for the OPE M-stability residual.
        #[arg(long, default_value_t = 1e-9, value_parser = positive_f64)]
        ope_tol: f64,
    },
    /// Jonquiere inversion sweep over orders, branch sides and
    /// half-planes.
    Polylog {
        /// Largest polylogarithm order.
        #[arg(long, default_value_t = 6)]
        p_max: usize,
        /// Random arguments per branch case.
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, default_value_t = 29)]
        seed: u64,
        #[arg(long, default_value_t = 1e-10, value_parser = positive_f64)]
        tol: f64,
    },
}

fn positive_f64(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err("tolerance must be positive".into())
    }
}

/// Versioned machine-readable result of one run.
#[derive(Debug, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub command: String,
    pub config: Value,
    pub tolerance: f64,
    pub max_residual: f64,
    pub pass: bool,
    pub records: Vec<Map<String, Value>>,
}

impl Report {
    fn new(command: &str, config: Value, tolerance: f64, records: Vec<Map<String, Value>>) -> Self {
        let max_residual = records
            .iter()
            .filter_map(|r| r.get("residual").and_then(Value::as_f64))
            .fold(0.0f64, f64::max);
        let pass = records.iter().all(|r| {
            r.get("pass")
                .and_then(Value::as_bool)
                .unwrap_or_else(|| match r.get("residual").and_then(Value::as_f64) {
                    Some(res) => res <= tolerance,
                    None => true,
                })
        });
        Report {
            schema: "report.v1",
            command: command.into(),
            config,
            tolerance,
            max_residual,
            pass,
        records,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Flat projection: one CSV row per record, columns in first-seen
    /// order, empty cells for fields a record lacks.
    pub fn to_csv(&self) -> String {
        let mut columns: Vec<String> = Vec::new();
        for r in &self.records {
            for k in r.keys() {
                if !columns.iter().any(|c| c == k) {
                    columns.push(k.clone());
                }
            }
        }
        let mut out = String::new();
        out.push_str(&columns.join(","));
        out.push('\n');
        for r in &self.records {
            let row: Vec<String> = columns
                .iter()
                .map(|k| match r.get(k) {
                    None | Some(Value::Null) => String::new(),
                    Some(Value::String(s)) => s.clone(),
                    Some(v) => v.to_string(),
                })
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn record(pairs: Vec<(&str, Value)>) -> Map<String, Value> {
    let mut m = Map::new();
    for (k, v) in pairs {
        m.insert(k.to_string(), v);
    }
    m
}

// ---------------------------------------------------------------------------
// Parallel driver
// ---------------------------------------------------------------------------

/// Worker cap: `PHASEKIT_THREADS` if set, otherwise the available
/// parallelism clamped to 8.
fn thread_cap() -> usize {
    std::env::var("PHASEKIT_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
                .min(8)
        })
}

/// Map a fallible function over `0..n` on up to `thread_cap()` scoped
/// threads, preserving order.  Each unit must derive its randomness from
/// its own index, so the schedule cannot influence the results.
fn par_map<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let cap = thread_cap().min(n.max(1));
    if cap <= 1 {
        return (0..n).map(f).collect();
    }
    let chunk = n.div_ceil(cap);
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    let mut first_err: Option<Error> = None;
    std::thread::scope(|s| {
        let mut handles = Vec::new();
        for (ci, slice) in slots.chunks_mut(chunk).enumerate() {
            let f = &f;
            handles.push(s.spawn(move || -> Result<()> {
                for (off, slot) in slice.iter_mut().enumerate() {
                    *slot = Some(f(ci * chunk + off)?);
                }
                Ok(())
            }));
        }
        for h in handles {
            if let Err(e) = h.join().expect("phasekit worker panicked") {
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    });
    if let Some(e) = first_err {
        return Err(e);
    }
    Ok(slots.into_iter().map(|o| o.expect("par_map slot")).collect())
}

/// Independent generator for one work unit: mixing the user seed with the
/// unit coordinates keeps runs reproducible regardless of scheduling.
fn unit_rng(seed: u64, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(
        seed.wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
            .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03)),
    )
}

// ---------------------------------------------------------------------------
// Target resolution
// ---------------------------------------------------------------------------

fn load_lattices(target: &TargetArgs, default: &[&str]) -> Result<Vec<Lattice>> {
    if let Some(path) = &target.dataset {
        let text = std::fs::read_to_string(path)?;
        return Ok(vec![Lattice::from_json(&text)?]);
    }
    let labels: Vec<String> = match &target.builtin {
        Some(name) => vec![name.clone()],
        None => default.iter().map(|s| s.to_string()).collect(),
    };
    labels
        .iter()
        .map(|name| {
            let lat = Lattice::builtin(name)?;
            if lat.rank() > 3 {
                return Err(Error::Parse(format!(
                    "builtin `{name}` is outside the supported suite (A1, A2, A3)"
                )));
            }
            Ok(lat)
        })
        .collect()
}

fn config_json(target: &TargetArgs, extra: Vec<(&str, Value)>) -> Value {
    let mut m = Map::new();
    m.insert("builtin".into(), json!(target.builtin));
    m.insert(
        "dataset".into(),
        json!(target.dataset.as_ref().map(|p| p.display().to_string())),
    );
    for (k, v) in extra {
        m.insert(k.into(), v);
    }
    Value::Object(m)
}

// ---------------------------------------------------------------------------
// Command implementations
// ---------------------------------------------------------------------------

pub fn run(config: &RunConfig) -> Result<Report> {
    match &config.command {
        Command::Validate { target, tol } => run_validate(target, *tol),
        Command::Omega {
            target,
            n_max,
            grid,
            tol,
        } => run_omega(target, *n_max, *grid, *tol),
        Command::Locality {
            target,
            samples,
            seed,
            tol,
        } => run_locality(target, *samples, *seed, *tol),
        Command::Integrality {
            target,
            loops,
            seed,
            tol,
        } => run_integrality(target, *loops, *seed, *tol),
        Command::Vv { target, seed, tol } => run_vv(target, *seed, *tol),
        Command::Fock {
            target,
            orders,
            tol,
            ope_tol,
        } => run_fock(target, orders, *tol, *ope_tol),
        Command::Polylog {
            p_max,
            samples,
            seed,
            tol,
        } => run_polylog(*p_max, *samples, *seed, *tol),
    }
}

fn check_record(lattice: &str, check: &str, residual: f64, tol: f64) -> Map<String, Value> {
    record(vec![
        ("lattice", json!(lattice)),
        ("check", json!(check)),
        ("residual", json!(residual)),
        ("tolerance", json!(tol)),
        ("pass", json!(residual <= tol)),
    ])
}

fn run_validate(target: &TargetArgs, tol: f64) -> Result<Report> {
    let lattices = load_lattices(target, &["A1", "A2", "A3"])?;
    let mut records = Vec::new();
    for lat in &lattices {
        let label = lat.label().to_string();
        lat.check_spectrum_consistency()?;
        records.push(check_record(&label, "spectrum_consistency", 0.0, tol));

        // unimodularity of the classical monodromy
        let det = lat.monodromy().det();
        records.push(check_record(
            &label,
            "monodromy_unimodular",
            (det.norm() - 1.0).abs(),
            tol,
        ));

        // eigenvalues against exp(-2 pi i s)
        let eigs = lat.monodromy().eigenvalues()?;
        let mut worst = 0.0f64;
        for s in lat.spectrum() {
            let sf = *s.numer() as f64 / *s.denom() as f64;
            let want = C::from_polar(1.0, -TWO_PI * sf);
            let best = eigs
                .iter()
                .map(|e| (e - want).norm())
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(best);
        }
        records.push(check_record(&label, "monodromy_eigenvalues", worst, tol));

        // normalized logarithm eigenvalues must land in (-1, 0]
        let split = MonodromySplit::new(&lat.monodromy())?;
        let log_eigs = split.normalized_log().eigenvalues()?;
        let mut violation = 0.0f64;
        for e in &log_eigs {
            violation = violation.max(e.im.abs());
            if e.re > 0.0 {
                violation = violation.max(e.re);
            }
            if e.re <= -1.0 {
                violation = violation.max(-1.0 - e.re + f64::EPSILON);
            }
        }
        records.push(check_record(&label, "normalized_log_window", violation, tol));

        if lat.is_a_type() {
            // residue pairing from the Seifert form is the antidiagonal
            let pd = PeriodData::new(lat)?;
            let n = lat.rank();
            let mut res = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    let want = if i + j == n - 1 { 1.0 } else { 0.0 };
                    res = res.max((pd.residue_gram()[(i, j)] - want).norm());
                }
            }
            records.push(check_record(&label, "residue_gram_antidiagonal", res, tol));
        }

        if let Ok(fd) = FrobeniusData::builtin(lat.label()) {
            // Frobenius pairing invariance at a fixed sample point
            let n = fd.dim();
            let t: Vec<C> = (0..n).map(|j| c(0.3 - 0.1 * j as f64, 0.2)).collect();
            let a: Vec<C> = (0..n).map(|j| c(0.5 + j as f64, -0.3)).collect();
            let b: Vec<C> = (0..n).map(|j| c(-0.7, 0.4 + j as f64)).collect();
            let d: Vec<C> = (0..n).map(|j| c(0.9 - j as f64, 1.1)).collect();
            let ab = fd.multiply(&t, &a, &b);
            let bd = fd.multiply(&t, &b, &d);
            let res = (fd.flat_pair(&ab, &d) - fd.flat_pair(&a, &bd)).norm();
            records.push(check_record(&label, "frobenius_pairing_invariance", res, tol));
        }
    }
    Ok(Report::new(
        "validate",
        config_json(target, vec![("tol", json!(tol))]),
        tol,
        records,
    ))
}

fn run_omega(target: &TargetArgs, n_max: usize, grid: usize, tol: f64) -> Result<Report> {
    if grid < 1 {
        return Err(Error::Parse("grid must have at least one point".into()));
    }
    let lattices = load_lattices(target, &["A1", "A2", "A3"])?;
    let units: Vec<(usize, usize, usize)> = (0..lattices.len())
        .flat_map(|l| (0..grid).flat_map(move |i| (0..grid).map(move |j| (l, i, j))))
        .collect();
    let records = par_map(units.len(), |u| {
        let (l, i, j) = units[u];
        let lat = &lattices[l];
        let pc = PhaseContext::new(lat)?;
        let ratio = 2.0 + 6.0 * i as f64 / (grid.max(2) - 1) as f64;
        let angle = 0.4 + 5.4 * j as f64 / (grid.max(2) - 1) as f64;
        let mu = C::from_polar(0.9, 0.7 * angle - 2.0);
        let lambda = C::from_polar(0.9 * ratio, angle);
        let n = lat.rank();
        let mut worst = 0.0f64;
        let mut worst_pair = (0usize, 0usize);
        for a in 0..n {
            for b in 0..n {
                let mut alpha = vec![0i64; n];
                alpha[a] = 1;
                let mut beta = vec![0i64; n];
                beta[b] = 1;
                let closed = pc.omega_closed_form(&alpha, &beta, lambda, mu)?.omega;
                let (oracle, _) = pc.omega_oracle(&alpha, &beta, lambda, mu, n_max)?;
                let res = (closed - oracle).norm();
                if res > worst {
                    worst = res;
                    worst_pair = (a + 1, b + 1);
                }
            }
        }
        Ok(record(vec![
            ("lattice", json!(lat.label())),
            ("ratio", json!(ratio)),
            ("angle", json!(angle)),
            ("worst_alpha", json!(format!("e{}", worst_pair.0))),
            ("worst_beta", json!(format!("e{}", worst_pair.1))),
            ("residual", json!(worst)),
        ]))
    })?;
    Ok(Report::new(
        "omega",
        config_json(
            target,
            vec![
                ("n_max", json!(n_max)),
                ("grid", json!(grid)),
                ("tol", json!(tol)),
            ],
        ),
        tol,
        records,
    ))
}

fn run_locality(target: &TargetArgs, samples: usize, seed: u64, tol: f64) -> Result<Report> {
    let lattices = load_lattices(target, &["A1", "A2", "A3"])?;
    let units: Vec<(usize, usize)> = (0..lattices.len())
        .flat_map(|l| (0..samples).map(move |s| (l, s)))
        .collect();
    let records = par_map(units.len(), |u| {
        let (l, s) = units[u];
        let lat = &lattices[l];
        let pc = PhaseContext::new(lat)?;
        let mut rng = unit_rng(seed, l as u64, s as u64);
        let n = lat.rank();
        let lambda = C::from_polar(rng.gen_range(1.5..3.0), rng.gen_range(-3.0..3.0));
        let mu = C::from_polar(
            lambda.norm() * rng.gen_range(0.25..0.6),
            rng.gen_range(-3.0..3.0),
        );
        let winding = rng.gen_range(-2i64..=2);
        let alpha = random_class(&mut rng, n, 1);
        let beta = random_class(&mut rng, n, 1);
        let check = pc.locality_check(&alpha, &beta, lambda, mu, winding)?;
        Ok(record(vec![
            ("lattice", json!(lat.label())),
            ("sample", json!(s)),
            ("alpha", json!(format!("{alpha:?}"))),
            ("beta", json!(format!("{beta:?}"))),
            ("winding", json!(winding)),
            ("k", json!(check.k_integer)),
            ("residual", json!(check.residual)),
        ]))
    })?;
    Ok(Report::new(
        "locality",
        config_json(
            target,
            vec![
                ("samples", json!(samples)),
                ("seed", json!(seed)),
                ("tol", json!(tol)),
            ],
        ),
        tol,
        records,
    ))
}

fn random_class(rng: &mut ChaCha8Rng, n: usize, bound: i64) -> Vec<i64> {
    loop {
        let v: Vec<i64> = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
        if v.iter().any(|&x| x != 0) {
            return v;
        }
    }
}

/// Random deformation with well-separated critical values, plus a base
/// spectral point safely outside every loop circle.
fn random_loop_site(
    fd: &FrobeniusData,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<C>, C, C)> {
    let n = fd.dim();
    for _ in 0..64 {
        let t: Vec<C> = (0..n)
            .map(|_| c(rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2)))
            .collect();
        let u = fd.critical_values(&t)?;
        let mut gap = f64::INFINITY;
        for a in 0..u.len() {
            for b in a + 1..u.len() {
                gap = gap.min((u[a] - u[b]).norm());
            }
        }
        if u.len() > 1 && gap < 0.35 {
            continue;
        }
        let com = u.iter().sum::<C>() / C::new(u.len() as f64, 0.0);
        let spread = u
            .iter()
            .map(|v| (v - com).norm())
            .fold(0.0f64, f64::max);
        let base = com + C::from_polar(2.0 + 1.5 * spread, rng.gen_range(-3.0..3.0));
        let mu = base * c(1.03, 0.01);
        return Ok((t, base, mu));
    }
    Err(Error::NoConvergence("semisimple deformation sampling"))
}

fn run_integrality(target: &TargetArgs, loops: usize, seed: u64, tol: f64) -> Result<Report> {
    let lattices = load_lattices(target, &["A1", "A2", "A3"])?;
    let units: Vec<(usize, usize)> = (0..lattices.len())
        .flat_map(|l| (0..loops).map(move |s| (l, s)))
        .collect();
    let records = par_map(units.len(), |u| {
        let (l, s) = units[u];
        let lat = &lattices[l];
        let pc = PhaseContext::new(lat)?;
        let fd = FrobeniusData::builtin(lat.label())?;
        let mut rng = unit_rng(seed, l as u64, s as u64);
        let (t, base, mu) = random_loop_site(&fd, &mut rng)?;
        let n = fd.dim();

        let kind = rng.gen_range(0..4u8);
        let mut legs: Vec<LambdaLeg> = Vec::new();
        let mut clearance = f64::INFINITY;
        let mut description;
        let i = rng.gen_range(0..n);
        let (legs_i, center_i, radius_i) = vanishing_loop_legs(&fd, &t, base, i)?;
        legs.extend(legs_i);
        clearance = clearance.min(0.4 * radius_i);
        description = format!("generator {i}");
        if kind == 2 {
            let j = rng.gen_range(0..n);
            let (legs_j, _, radius_j) = vanishing_loop_legs(&fd, &t, base, j)?;
            legs.extend(legs_j);
            clearance = clearance.min(0.4 * radius_j);
            description = format!("generators {i},{j}");
        }

        // for a slice of the suite, pair a class fixed by the loop:
        // anything orthogonal to the circled vanishing cycle
        let (alpha, beta, invariant) = if kind == 3 && n > 1 {
            let phi = vanishing_cycle_at(&fd, &t, base, center_i, radius_i)?;
            let mut found = None;
            for _ in 0..64 {
                let cand = random_class(&mut rng, n, 2);
                if lat.intersection(&cand, &phi) == 0 {
                    found = Some(cand);
                    break;
                }
            }
            match found {
                Some(cand) => {
                    description = format!("invariant over generator {i}");
                    (cand.clone(), cand, true)
                }
                None => (random_class(&mut rng, n, 2), random_class(&mut rng, n, 2), false),
            }
        } else {
            (random_class(&mut rng, n, 2), random_class(&mut rng, n, 2), false)
        };

        let rep = integrality_check(&pc, &fd, &alpha, &beta, &t, base, mu, &legs, clearance)?;
        let fixed = rep.moved_alpha == alpha && rep.moved_beta == beta;
        Ok(record(vec![
            ("lattice", json!(lat.label())),
            ("loop", json!(s)),
            ("kind", json!(description)),
            ("alpha", json!(format!("{alpha:?}"))),
            ("beta", json!(format!("{beta:?}"))),
            ("value_re", json!(rep.integral.re)),
            ("value_im", json!(rep.integral.im)),
            ("integer", json!(rep.integer)),
            ("invariant", json!(invariant && fixed)),
            ("monodromy_residual", json!(rep.monodromy_residual)),
            ("residual", json!(rep.residual)),
        ]))
    })?;
    Ok(Report::new(
        "integrality",
        config_json(
            target,
            vec![
                ("loops", json!(loops)),
                ("seed", json!(seed)),
                ("tol", json!(tol)),
            ],
        ),
        tol,
        records,
    ))
}

fn run_vv(target: &TargetArgs, seed: u64, tol: f64) -> Result<Report> {
    let lattices = load_lattices(target, &["A2", "A3"])?;
    let units: Vec<(usize, usize)> = (0..lattices.len())
        .flat_map(|l| {
            let n = lattices[l].rank();
            (0..n).map(move |i| (l, i))
        })
        .collect();
    let records = par_map(units.len(), |u| {
        let (l, i) = units[u];
        let lat = &lattices[l];
        let fd = FrobeniusData::builtin(lat.label())?;
        let mut rng = unit_rng(seed, l as u64, i as u64);
        let (t, base, mu) = random_loop_site(&fd, &mut rng)?;
        let (value, rel) = vanishing_loop_check(&fd, &t, i, base, mu)?;
        Ok(record(vec![
            ("lattice", json!(lat.label())),
            ("critical_index", json!(i)),
            ("value_re", json!(value.re)),
            ("value_im", json!(value.im)),
            ("target", json!("-4 pi i")),
            ("residual", json!(rel)),
        ]))
    })?;
    Ok(Report::new(
        "vv",
        config_json(target, vec![("seed", json!(seed)), ("tol", json!(tol))]),
        tol,
        records,
    ))
}

fn run_fock(target: &TargetArgs, orders: &[usize], tol: f64, ope_tol: f64) -> Result<Report> {
    let lattices = load_lattices(target, &["A1", "A2"])?;
    let mut records = Vec::new();
    for lat in &lattices {
        let pc = PhaseContext::new(lat)?;
        let n = lat.rank();
        let mut alpha = vec![0i64; n];
        alpha[0] = 1;
        let mut beta = vec![0i64; n];
        beta[n - 1] = 1;
        // the leading contraction term decays like a fractional power of
        // the modulus ratio, so the separation must be extreme for the
        // plain exponential comparison
        let lambda = c(2.0e5, 2.0e4);
        let mu = c(0.9, -0.3);
        for &trunc in orders {
            let got = compose_and_extract_phase(lat, &alpha, &beta, lambda, mu, trunc)?;
            let (om, _) = pc.omega_oracle(&alpha, &beta, lambda, mu, trunc)?;
            let res = (got - om.exp()).norm();
            records.push(record(vec![
                ("lattice", json!(lat.label())),
                ("check", json!("composition")),
                ("truncation", json!(trunc)),
                ("value_re", json!(got.re)),
                ("value_im", json!(got.im)),
                ("residual", json!(res)),
                ("tolerance", json!(tol)),
                ("pass", json!(res <= tol)),
            ]));
        }
        // regularized operator product must not depend on the
        // regularization exponent
        let a = Generator::Gamma(alpha.clone());
        let b = Generator::Gamma(beta.clone());
        let v = FockElement::vacuum(5)?;
        let site = c(2.4, 0.8);
        let p1 = ope_product(lat, &a, &b, 2, 0, &[], site, &v)?;
        let p2 = ope_product(lat, &a, &b, 3, 1, &[], site, &v)?;
        let res = p1.distance(&p2) / (p1.max_norm() + 1e-300);
        records.push(record(vec![
            ("lattice", json!(lat.label())),
            ("check", json!("ope_m_stability")),
            ("residual", json!(res)),
            ("tolerance", json!(ope_tol)),
            ("pass", json!(res <= ope_tol)),
        ]));
    }
    Ok(Report::new(
        "fock",
        config_json(
            target,
            vec![
                ("orders", json!(orders)),
                ("tol", json!(tol)),
                ("ope_tol", json!(ope_tol)),
            ],
        ),
        tol,
        records,
    ))
}

fn run_polylog(p_max: usize, samples: usize, seed: u64, tol: f64) -> Result<Report> {
    let cases: Vec<(usize, CutSide, f64)> = (1..=p_max)
        .flat_map(|p| {
            [
                (p, CutSide::Left, 1.0),
                (p, CutSide::Left, -1.0),
                (p, CutSide::Right, 1.0),
                (p, CutSide::Right, -1.0),
            ]
        })
        .collect();
    let records = par_map(cases.len(), |u| {
        let (p, side, sign) = cases[u];
        let mut rng = unit_rng(seed, p as u64, u as u64);
        let mut worst = 0.0f64;
        for _ in 0..samples {
            // stay away from the branch points 0, 1 and the real axis
            let modulus = rng.gen_range(0.2..5.0);
            let angle = sign * rng.gen_range(0.05..2.9);
            let x = C::from_polar(modulus, angle);
            if (x - c(1.0, 0.0)).norm() < 0.1 {
                continue;
            }
            let check = jonquiere_check(p, x, side)?;
            worst = worst.max(check.residual);
        }
        Ok(record(vec![
            ("p", json!(p)),
            (
                "side",
                json!(match side {
                    CutSide::Left => "left",
                    CutSide::Right => "right",
                }),
            ),
            (
                "half_plane",
                json!(if sign > 0.0 { "upper" } else { "lower" }),
            ),
            ("samples", json!(samples)),
            ("residual", json!(worst)),
        ]))
    })?;
    Ok(Report::new(
        "polylog",
        json!({
            "p_max": p_max,
            "samples": samples,
            "seed": seed,
            "tol": tol,
        }),
        tol,
        records,
    ))
}
