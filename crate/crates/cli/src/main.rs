use std::fs;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use convexhk::convex::{check_monad_laws, monad_mult, oplus, plus_p};
use convexhk::deduction::{check_derivation, derive_hk, derive_kantorovich, ground_hypotheses};
use convexhk::json as js;
use convexhk::lifting::{hausdorff, hk_directed_with, hk_distance};
use convexhk::presentation::check_free_presentation;
use convexhk::terms::{normalize, nu, parse_term, term_distance};
use convexhk::transport::{kantorovich, Kantorovich};
use convexhk::{parse_q, Error, FiniteMetricSpace};

/// Exact Hausdorff-Kantorovich distances, convex-set algebra and
/// quantitative derivations. Every command prints one JSON document.
#[derive(Parser)]
#[command(name = "convexhk", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// JSON arguments are file paths, or inline JSON when they start with `{` or `[`.
#[derive(Args)]
struct SpaceArg {
    #[arg(long)]
    space: String,
}

#[derive(Args)]
struct Pair {
    #[command(flatten)]
    space: SpaceArg,
    #[arg(long)]
    left: String,
    #[arg(long)]
    right: String,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the metric axioms of a space.
    ValidateSpace(SpaceArg),
    /// Kantorovich distance between two distributions, with an optimal coupling.
    Kantorovich(Pair),
    /// Hausdorff distance between two finite sets of point labels or of
    /// distributions (the latter under the Kantorovich metric).
    Hausdorff(Pair),
    /// Hausdorff-Kantorovich distance between two convex sets.
    Hk(Pair),
    /// Unique base of a convex set.
    Base {
        #[command(flatten)]
        space: SpaceArg,
        #[arg(long)]
        set: String,
    },
    /// Convex set denoted by a term, with its canonical term.
    Normalize {
        #[command(flatten)]
        space: SpaceArg,
        #[arg(long)]
        term: String,
    },
    /// Canonical term of a convex set.
    Nu {
        #[command(flatten)]
        space: SpaceArg,
        #[arg(long)]
        set: String,
    },
    /// Distance between the convex sets denoted by two terms.
    Tdist {
        #[command(flatten)]
        space: SpaceArg,
        left: String,
        right: String,
    },
    /// Convex union.
    Oplus(Pair),
    /// Weighted Minkowski sum `left +_p right`.
    Plusp {
        #[command(flatten)]
        pair: Pair,
        #[arg(long)]
        p: String,
    },
    /// Monad multiplication of a set of distributions over convex sets.
    Mu {
        #[command(flatten)]
        space: SpaceArg,
        #[arg(long)]
        set: String,
    },
    /// Derivation of `ν(left) =_ε ν(right)` from the ground distances, with ε
    /// the Hausdorff-Kantorovich distance. With `--dists`, `left` and `right`
    /// are distributions and ε is their Kantorovich distance.
    Derive {
        #[command(flatten)]
        pair: Pair,
        #[arg(long)]
        dists: bool,
    },
    /// Check a derivation. Hypotheses default to the ground distances.
    Check {
        #[command(flatten)]
        space: SpaceArg,
        #[arg(long)]
        gamma: Option<String>,
        #[arg(long)]
        proof: String,
    },
    /// Randomised monad-law check.
    Laws {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// Presentation round trips on the free algebra over a space.
    Roundtrip {
        #[command(flatten)]
        space: SpaceArg,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Domain(Error),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

type Out = Result<Value, Failure>;

fn load(arg: &str) -> Result<Value, Failure> {
    let trimmed = arg.trim_start();
    let src = if trimmed.starts_with('{') || trimmed.starts_with('[') {
        arg.to_string()
    } else {
        fs::read_to_string(arg).map_err(|e| Failure::Io(format!("{arg}: {e}")))?
    };
    serde_json::from_str(&src).map_err(|e| Failure::Domain(Error::Format(format!("{arg}: {e}"))))
}

fn space(a: &SpaceArg) -> Result<FiniteMetricSpace, Failure> {
    Ok(js::space(&load(&a.space)?)?)
}

fn run(cmd: Cmd) -> Out {
    match cmd {
        Cmd::ValidateSpace(a) => {
            let s = space(&a)?;
            Ok(json!({ "valid": true, "space": js::space_json(&s) }))
        }
        Cmd::Kantorovich(p) => {
            let s = space(&p.space)?;
            let (l, r) = (js::dist(&s, &load(&p.left)?)?, js::dist(&s, &load(&p.right)?)?);
            let t = kantorovich(&s, &l, &r)?;
            Ok(json!({ "value": js::rational_json(&t.value), "witness": js::coupling_json(&s, &t.witness) }))
        }
        Cmd::Hausdorff(p) => {
            let s = space(&p.space)?;
            let (l, r) = (load(&p.left)?, load(&p.right)?);
            let labels = |v: &Value| -> Option<Vec<String>> {
                v.as_array()?.iter().map(|x| x.as_str().map(str::to_string)).collect()
            };
            let value = match (labels(&l), labels(&r)) {
                (Some(a), Some(b)) => {
                    let pa = a.iter().map(|x| s.point(x)).collect::<Result<Vec<_>, _>>()?;
                    let pb = b.iter().map(|x| s.point(x)).collect::<Result<Vec<_>, _>>()?;
                    hausdorff(&s, &pa, &pb)?
                }
                _ => {
                    let list = |v: &Value| -> Result<Vec<_>, Failure> {
                        let items = v.as_array().ok_or_else(|| Error::Format("expected a list".into()))?;
                        Ok(items.iter().map(|d| js::dist(&s, d)).collect::<Result<Vec<_>, _>>()?)
                    };
                    hausdorff(&Kantorovich(&s), &list(&l)?, &list(&r)?)?
                }
            };
            Ok(json!({ "value": js::rational_json(&value) }))
        }
        Cmd::Hk(p) => {
            let s = space(&p.space)?;
            let (l, r) = (js::convex_set(&s, &load(&p.left)?)?, js::convex_set(&s, &load(&p.right)?)?);
            let value = hk_distance(&s, &l, &r)?;
            let directed = [hk_directed_with(&s, &l, &r), hk_directed_with(&s, &r, &l)];
            Ok(json!({
                "value": js::rational_json(&value),
                "directed": directed.iter().map(js::rational_json).collect::<Vec<_>>(),
            }))
        }
        Cmd::Base { space: a, set } => {
            let s = space(&a)?;
            Ok(js::convex_set_json(&s, &js::convex_set(&s, &load(&set)?)?))
        }
        Cmd::Normalize { space: a, term } => {
            let s = space(&a)?;
            let set = normalize(&s, &parse_term(&term)?)?;
            Ok(json!({ "set": js::convex_set_json(&s, &set), "nu": nu(&s, &set).to_string() }))
        }
        Cmd::Nu { space: a, set } => {
            let s = space(&a)?;
            let set = js::convex_set(&s, &load(&set)?)?;
            Ok(json!({ "term": nu(&s, &set).to_string() }))
        }
        Cmd::Tdist { space: a, left, right } => {
            let s = space(&a)?;
            let v = term_distance(&s, &parse_term(&left)?, &parse_term(&right)?)?;
            Ok(json!({ "value": js::rational_json(&v) }))
        }
        Cmd::Oplus(p) => {
            let s = space(&p.space)?;
            let (l, r) = (js::convex_set(&s, &load(&p.left)?)?, js::convex_set(&s, &load(&p.right)?)?);
            Ok(js::convex_set_json(&s, &oplus(&l, &r)))
        }
        Cmd::Plusp { pair, p } => {
            let s = space(&pair.space)?;
            let (l, r) = (js::convex_set(&s, &load(&pair.left)?)?, js::convex_set(&s, &load(&pair.right)?)?);
            Ok(js::convex_set_json(&s, &plus_p(&parse_q(&p)?, &l, &r)?))
        }
        Cmd::Mu { space: a, set } => {
            let s = space(&a)?;
            Ok(js::convex_set_json(&s, &monad_mult(&js::set_of_sets(&s, &load(&set)?)?)))
        }
        Cmd::Derive { pair, dists } => {
            let s = space(&pair.space)?;
            let (l, r) = (load(&pair.left)?, load(&pair.right)?);
            let d = if dists {
                derive_kantorovich(&s, &js::dist(&s, &l)?, &js::dist(&s, &r)?)?
            } else {
                derive_hk(&s, &js::convex_set(&s, &l)?, &js::convex_set(&s, &r)?)?
            };
            Ok(js::derivation_json(&d))
        }
        Cmd::Check { space: a, gamma, proof } => {
            let s = space(&a)?;
            let gamma = match gamma {
                Some(g) => js::equations(&load(&g)?)?,
                None => ground_hypotheses(&s),
            };
            let d = js::derivation(&load(&proof)?)?;
            check_derivation(&s, &gamma, &d)?;
            Ok(json!({ "valid": true, "conclusion": js::equation_json(&d.conclusion), "nodes": d.size() }))
        }
        Cmd::Laws { seed, trials } => {
            let r = check_monad_laws(seed, trials);
            Ok(json!({ "passed": r.passed(), "trials": r.trials, "checks": r.checks, "violations": r.violations }))
        }
        Cmd::Roundtrip { space: a, samples, seed } => {
            let s = space(&a)?;
            let r = check_free_presentation(&s, seed, samples);
            Ok(json!({
                "passed": r.passed(),
                "samples": samples,
                "gf_mismatches": r.gf.mismatches,
                "fg_mismatches": r.fg.mismatches,
                "em_law_violations": r.em_laws.violations,
                "qcs_law_violations": r.qcs_laws.violations,
                "control_mismatches": r.control_mismatches,
            }))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            let (kind, message, path) = match &f {
                Failure::Domain(e) => {
                    let path = match e {
                        Error::InvalidDerivation { path, .. } => Some(path.clone()),
                        _ => None,
                    };
                    (e.kind(), e.to_string(), path)
                }
                Failure::Io(m) => ("Io", m.clone(), None),
            };
            let mut err = json!({ "kind": kind, "message": message });
            if let Some(p) = path {
                err["path"] = json!(p);
            }
            println!("{}", json!({ "error": err }));
            eprintln!("convexhk: {message}");
            ExitCode::from(1)
        }
    }
}
