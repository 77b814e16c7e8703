use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use weitzenbock::cone_mesh::{DiscretePath, IntrinsicMesh};
use weitzenbock::constitutive::{fit_growth, sample_matrices, symmetry_probe, SYMMETRY_GRID};
use weitzenbock::dislocation_builder::{assemble, TriangulationData};
use weitzenbock::elastic_energy::{best_effort, minimize, propagate_frame, MinimizeOptions};
use weitzenbock::homogenize::{fixture, gamma_study, ArchetypeConfig, StudyConfig};
use weitzenbock::weitzenbock_field::DEFAULT_DELTA;

/// Environment variable that overrides every output directory.
const OUT_ENV: &str = "WEITZENBOCK_OUTPUT_DIR";

#[derive(Parser)]
#[command(
    name = "weitzenbock",
    version,
    about = "Dislocated bodies, their smooth limits, and elastic energies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble a dislocated mesh from a fixture or a triangulation file.
    Build {
        #[command(flatten)]
        field: FieldArgs,
        /// Triangulation JSON to assemble instead of a fixture.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Burgers vector and holonomy of a closed triangle circuit.
    Burgers {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        circuit: PathBuf,
        #[arg(long, default_value_t = 0)]
        basepoint: usize,
    },
    /// Geodesic triangulation of a fixture.
    Triangulate {
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Minimize an archetype's energy on a mesh.
    Minimize {
        #[arg(long)]
        mesh: PathBuf,
        #[command(flatten)]
        archetype: ArchetypeArgs,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 20_000)]
        max_iter: usize,
        #[arg(long, default_value_t = 5)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a homogenization study and write report.json and report.csv.
    Homogenize {
        /// TOML or JSON study configuration; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        fixture: Option<String>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        archetype: Option<String>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        b1: Option<f64>,
        #[arg(long)]
        b2: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        skip_energies: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify an archetype's rotational symmetry.
    ProbeArchetype {
        #[command(flatten)]
        archetype: ArchetypeArgs,
        #[arg(long, default_value_t = 256)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct FieldArgs {
    #[arg(long, default_value = "constant_torsion")]
    fixture: String,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
}

#[derive(Args)]
struct ArchetypeArgs {
    #[arg(long = "name", default_value = "qw_iso")]
    name: String,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 1.0)]
    b1: f64,
    #[arg(long, default_value_t = 1.0)]
    b2: f64,
}

impl ArchetypeArgs {
    fn config(&self) -> ArchetypeConfig {
        ArchetypeConfig {
            name: self.name.clone(),
            p: self.p,
            b1: self.b1,
            b2: self.b2,
        }
    }
}

enum Failure {
    Usage(String),
    Invariant { kind: &'static str, message: String },
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn invariant(kind: &'static str) -> impl Fn(&dyn std::fmt::Display) -> Failure {
    move |e| Failure::Invariant {
        kind,
        message: e.to_string(),
    }
}

macro_rules! check {
    ($e:expr, $kind:expr) => {
        $e.map_err(|e| invariant($kind)(&e))
    };
}

fn out_dir(flag: PathBuf) -> Result<PathBuf, Failure> {
    let dir = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or(flag);
    fs::create_dir_all(&dir).map_err(usage)?;
    Ok(dir)
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(usage)?;
    fs::write(dir.join(name), text + "\n").map_err(usage)
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_mesh(path: &Path) -> Result<IntrinsicMesh, Failure> {
    check!(IntrinsicMesh::from_json(&read(path)?), "mesh")
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Build { field, data, out } => {
            let data: TriangulationData = match data {
                Some(path) => serde_json::from_str(&read(&path)?).map_err(usage)?,
                None => {
                    let f = fixture(&field.fixture, field.tau).map_err(usage)?;
                    check!(f.triangulate(field.n, field.delta), "triangulation")?
                        .to_triangulation_data()
                }
            };
            let assembled = check!(assemble(&data), "assembly")?;
            let mesh = &assembled.mesh;
            let dir = out_dir(out)?;
            fs::write(dir.join("mesh.json"), mesh.to_json() + "\n").map_err(usage)?;
            let summary = json!({
                "vertices": mesh.num_vertices(),
                "triangles": mesh.num_triangles(),
                "dislocations": mesh.core_slits().len(),
                "singular_vertices": mesh.singular_vertices(1e-8).len(),
            });
            write_json(&dir, "build.json", &summary)?;
            println!("{summary}");
        }
        Command::Burgers {
            mesh,
            circuit,
            basepoint,
        } => {
            let mesh = load_mesh(&mesh)?;
            let circuit: DiscretePath = serde_json::from_str(&read(&circuit)?).map_err(usage)?;
            let b = check!(mesh.burgers_vector(&circuit, basepoint), "circuit")?;
            let h = check!(mesh.transport_along(&circuit.rebased(basepoint)), "circuit")?;
            println!("{}", json!({ "burgers": [b.x, b.y], "holonomy": h }));
        }
        Command::Triangulate { field, out } => {
            let f = fixture(&field.fixture, field.tau).map_err(usage)?;
            let tri = check!(f.triangulate(field.n, field.delta), "triangulation")?;
            let dir = out_dir(out)?;
            write_json(&dir, "triangulation.json", &tri.to_triangulation_data())?;
            let summary = json!({
                "n": field.n,
                "triangles": tri.triangles.len(),
                "max_angle_sum_error": tri.max_angle_sum_error(),
                "max_edge_length": tri.max_edge_length(),
            });
            write_json(&dir, "triangulate.json", &summary)?;
            println!("{summary}");
        }
        Command::Minimize {
            mesh,
            archetype,
            tol,
            max_iter,
            restarts,
            seed,
            out,
        } => {
            let mesh = load_mesh(&mesh)?;
            let w = archetype.config().archetype().map_err(usage)?;
            let frame = check!(propagate_frame(&mesh, 0, 0.0), "frame")?;
            let opts = MinimizeOptions {
                tol,
                max_iter,
                restarts,
                seed,
                ..MinimizeOptions::default()
            };
            let result = check!(best_effort(minimize(&mesh, &frame, &w, &opts)), "minimize")?;
            let dir = out_dir(out)?;
            write_json(&dir, "minimize.json", &result)?;
            println!(
                "{}",
                json!({ "energy": result.energy, "grad_inf": result.grad_inf, "termination": result.termination })
            );
        }
        Command::Homogenize {
            config,
            fixture: fixture_name,
            tau,
            archetype,
            p,
            b1,
            b2,
            n,
            seed,
            skip_energies,
            out,
        } => {
            let mut cfg = match config {
                None => StudyConfig::default(),
                Some(path) => {
                    let text = read(&path)?;
                    if path.extension().is_some_and(|e| e == "json") {
                        serde_json::from_str(&text).map_err(usage)?
                    } else {
                        toml::from_str(&text).map_err(usage)?
                    }
                }
            };
            if let Some(v) = fixture_name {
                cfg.fixture.name = v;
            }
            if let Some(v) = tau {
                cfg.fixture.tau = v;
            }
            if let Some(v) = archetype {
                cfg.archetype.name = v;
            }
            if let Some(v) = p {
                cfg.archetype.p = v;
            }
            if let Some(v) = b1 {
                cfg.archetype.b1 = v;
            }
            if let Some(v) = b2 {
                cfg.archetype.b2 = v;
            }
            if let Some(v) = n {
                cfg.triangulation.n = v;
            }
            if let Some(v) = seed {
                cfg.optimizer.seed = v;
            }
            cfg.optimizer.skip_energies |= skip_energies;
            cfg.archetype.archetype().map_err(usage)?;
            fixture(&cfg.fixture.name, cfg.fixture.tau).map_err(usage)?;
            let ns = &cfg.triangulation.n;
            if ns.is_empty() || ns[0] == 0 || ns.windows(2).any(|w| w[0] >= w[1]) {
                return Err(usage("--n must be strictly increasing positive integers"));
            }
            let dir = out_dir(
                out.or(cfg.output.dir.clone().map(PathBuf::from))
                    .unwrap_or_else(|| "report".into()),
            )?;
            let study = check!(gamma_study(&cfg), "study")?;
            fs::write(dir.join("report.json"), study.report.to_json() + "\n").map_err(usage)?;
            fs::write(dir.join("report.csv"), study.report.to_csv(&study.seconds))
                .map_err(usage)?;
            println!(
                "{}",
                json!({ "report": dir.join("report.json"), "records": study.report.records.len() })
            );
        }
        Command::ProbeArchetype {
            archetype,
            samples,
            seed,
        } => {
            let w = archetype.config().archetype().map_err(usage)?;
            let s = sample_matrices(samples, 2.0, seed);
            let class = check!(symmetry_probe(&w, SYMMETRY_GRID, &s), "symmetry")?;
            let growth = check!(fit_growth(&w, samples, seed), "growth")?;
            let mut record = serde_json::to_value(&class).map_err(usage)?;
            record["archetype"] = json!(w.to_string());
            record["growth"] = serde_json::to_value(growth).map_err(usage)?;
            println!("{record}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(Failure::Invariant { kind, message }) => {
            println!("{}", json!({ "error": kind, "message": message }));
            ExitCode::from(1)
        }
    }
}
