//! `test`: randomization analyses on a matched design, per sample (all
//! pairs plus configured subgroups).

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::path::Path;

use pairdose::inference::{
    composite_test, composite_test_prescreened, impute_pair_table, pvalue_surface,
    sequential_model_scan, test_fixed, CompositeReport, PValueSurface, ScanModel, ScanReport,
    TestReport, ThetaBox,
};
use pairdose::interference::{
    interference_surface, test_interference, AdjacencyGraph, InterferenceContext,
    InterferenceParams,
};
use pairdose::io::{load_adjacency, read_outcomes, Panel};
use pairdose::longitudinal::{aggregate_outcome, AggregateOutcomeSpec};
use pairdose::matching::read_pairs_csv;
use pairdose::model::{DoseResponseHypothesis, MatchedPair};
use pairdose::sensitivity::{sensitivity_curve, Changepoint};
use serde::Serialize;

use crate::artifacts::RunDir;
use crate::config::{GridConfig, InferenceConfig, Loaded};
use crate::design::{county_doses, read_panel};
use crate::CliError;

#[derive(Serialize)]
struct SurfaceSummary {
    file: String,
    tau_hat: f64,
    beta_hat: f64,
    p_max: f64,
    cells: usize,
}

#[derive(Serialize)]
struct InterferenceResult {
    params: InterferenceParams,
    test: TestReport,
    surface: Option<SurfaceSummary>,
}

#[derive(Serialize)]
struct SensitivityResult {
    file: String,
    changepoint: Option<Changepoint>,
}

#[derive(Serialize)]
struct SampleReport {
    name: String,
    n_pairs: usize,
    fixed: TestReport,
    surface: Option<SurfaceSummary>,
    composite: Option<CompositeReport>,
    scan: Option<ScanReport>,
    interference: Vec<InterferenceResult>,
    sensitivity: Option<SensitivityResult>,
}

#[derive(Serialize)]
struct Report {
    alpha: f64,
    model: DoseResponseHypothesis,
    samples: Vec<SampleReport>,
}

type Grids = (Vec<f64>, Vec<f64>);

fn grids(tau: &Option<GridConfig>, beta: &Option<GridConfig>) -> Result<Option<Grids>, CliError> {
    match (tau, beta) {
        (Some(t), Some(b)) => Ok(Some((t.values("tau_grid")?, b.values("beta_grid")?))),
        (None, None) => Ok(None),
        _ => Err(CliError::Config(
            "tau_grid and beta_grid must be given together".into(),
        )),
    }
}

fn surface_summary(file: String, s: &PValueSurface) -> SurfaceSummary {
    SurfaceSummary {
        file,
        tau_hat: s.tau_hat,
        beta_hat: s.beta_hat,
        p_max: s.p_max,
        cells: s.tau_grid.len() * s.beta_grid.len(),
    }
}

fn read_pairs(loaded: &Loaded, out: &Path, run: &mut RunDir) -> Result<Vec<MatchedPair>, CliError> {
    let path = match &loaded.config.data.pairs {
        Some(p) => loaded.resolve(p),
        None => out.join("pairs.csv"),
    };
    let f = File::open(&path).map_err(|e| CliError::io(&path, e))?;
    let pairs = read_pairs_csv(f, &path.display().to_string())?;
    run.input("pairs", &path)?;
    if pairs.is_empty() {
        return Err(pairdose::Error::EmptyDataset.into());
    }
    Ok(pairs)
}

fn panel_outcomes(panel: &Panel, inf: &InferenceConfig) -> Result<HashMap<String, f64>, CliError> {
    let o = inf
        .outcome
        .as_ref()
        .ok_or_else(|| CliError::Config("inference.outcome or data.outcomes is required".into()))?;
    let spec = AggregateOutcomeSpec {
        start: panel.day_index(o.start)?,
        len: o.days,
        aggregator: o.aggregator,
    };
    panel
        .counties
        .iter()
        .map(|c| {
            Ok((
                c.fips.clone(),
                aggregate_outcome(o.source.per_100k(c), &spec)?,
            ))
        })
        .collect()
}

/// Keeps pairs whose two units both have `covariate == value`.
fn subgroup(
    pairs: &[MatchedPair],
    panel: &Panel,
    covariate: &str,
    value: f64,
) -> Result<Vec<MatchedPair>, CliError> {
    let matches = |id: &str| -> Result<bool, CliError> {
        let c = panel
            .county(id)
            .ok_or_else(|| pairdose::Error::UnknownUnit(id.to_string()))?;
        let v = c
            .covariate(covariate)
            .ok_or_else(|| CliError::Config(format!("unknown subgroup covariate {covariate:?}")))?;
        Ok(v == value)
    };
    let mut kept = Vec::new();
    for p in pairs {
        if matches(&p.unit_lo)? && matches(&p.unit_hi)? {
            kept.push(p.clone());
        }
    }
    Ok(kept)
}

pub fn run(loaded: &Loaded, out: &Path) -> Result<String, CliError> {
    let inf = loaded.inference()?;
    let seed = loaded.config.seed;
    let opts = inf.engine(seed);
    let h = inf.model.hypothesis()?;
    let surface_grids = grids(&inf.tau_grid, &inf.beta_grid)?;
    let mut run = RunDir::create(out, "test", loaded.hash(), seed)?;

    let pairs = read_pairs(loaded, out, &mut run)?;
    let panel = if loaded.config.data.has_panel() {
        Some(read_panel(loaded, &mut run)?)
    } else {
        None
    };
    let outcomes = match (&loaded.config.data.outcomes, &panel) {
        (Some(p), _) => {
            let path = loaded.resolve(p);
            let f = File::open(&path).map_err(|e| CliError::io(&path, e))?;
            run.input("outcomes", &path)?;
            read_outcomes(f, &path.display().to_string())?
        }
        (None, Some(panel)) => panel_outcomes(panel, inf)?,
        (None, None) => {
            return Err(CliError::Config(
                "data.outcomes or the panel files are required".into(),
            ))
        }
    };

    let mut samples = vec![("all".to_string(), pairs.clone())];
    for g in &inf.subgroups {
        let panel = panel.as_ref().ok_or_else(|| {
            CliError::Config(format!("subgroup {} needs the panel files", g.name))
        })?;
        samples.push((
            g.name.clone(),
            subgroup(&pairs, panel, &g.covariate, g.value)?,
        ));
    }

    let interference = loaded
        .config
        .interference
        .as_ref()
        .map(|c| c.params.as_slice())
        .unwrap_or(&[]);
    let (graph, fixed_doses) = if interference.is_empty() {
        (AdjacencyGraph::empty(), HashMap::new())
    } else {
        interference_inputs(loaded, panel.as_ref(), &mut run)?
    };

    let mut reports = Vec::new();
    for (name, sample) in &samples {
        if sample.is_empty() {
            return Err(CliError::Validation(vec![format!(
                "sample {name} has no pairs"
            )]));
        }
        let fixed = test_fixed(sample, &outcomes, &h, &opts)?;

        let surface = match &surface_grids {
            Some((taus, betas)) => {
                let s = pvalue_surface(sample, &outcomes, &h, taus, betas, &opts)?;
                let file = format!("surface_{name}.csv");
                run.csv(&file, |w| s.write_csv(w))?;
                Some(surface_summary(file, &s))
            }
            None => None,
        };

        let composite = match (&inf.composite, &surface_grids) {
            (Some(c), Some((taus, betas))) => {
                let b = ThetaBox::grid(taus, betas);
                Some(if c.prescreen {
                    composite_test_prescreened(
                        sample, &outcomes, &h, &b, c.gamma, inf.alpha, &opts,
                    )?
                } else {
                    composite_test(sample, &outcomes, &h, &b, c.gamma, inf.alpha, &opts)?
                })
            }
            (Some(_), None) => {
                return Err(CliError::Config(
                    "composite test needs tau_grid and beta_grid".into(),
                ))
            }
            _ => None,
        };

        let scan = if inf.scan.is_empty() {
            None
        } else {
            let models = inf
                .scan
                .iter()
                .map(|e| {
                    let base = e.model.hypothesis()?;
                    let theta_box = match grids(&e.tau_grid, &e.beta_grid)? {
                        Some((t, b)) => ThetaBox::grid(&t, &b),
                        None => ThetaBox::single(base.tau, base.beta),
                    };
                    Ok(ScanModel {
                        name: e.name.clone(),
                        base,
                        theta_box,
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            Some(sequential_model_scan(
                sample, &outcomes, &models, inf.alpha, &opts,
            )?)
        };

        let mut interference_results = Vec::new();
        for params in interference {
            let ctx = InterferenceContext {
                graph: &graph,
                fixed_doses: &fixed_doses,
                params: *params,
            };
            let test = test_interference(sample, &outcomes, &h, &ctx, &opts)?;
            let surface = match &surface_grids {
                Some((taus, betas)) => {
                    let s = interference_surface(sample, &outcomes, &h, &ctx, taus, betas, &opts)?;
                    let file = format!("interference_{name}_k{}_s{}.csv", params.k, params.s);
                    run.csv(&file, |w| s.write_csv(w))?;
                    Some(surface_summary(file, &s))
                }
                None => None,
            };
            interference_results.push(InterferenceResult {
                params: *params,
                test,
                surface,
            });
        }

        let sensitivity = match &loaded.config.sensitivity {
            Some(sc) => {
                let table = impute_pair_table(sample, &outcomes, &h)?;
                let grid = sc.lambda_grid.values("lambda_grid")?;
                let curve =
                    sensitivity_curve(&table, sc.mode, &grid, sc.alpha, sc.refine_steps, &opts)?;
                let file = format!("sensitivity_{name}.csv");
                run.csv(&file, |w| curve.write_csv(w))?;
                Some(SensitivityResult {
                    file,
                    changepoint: curve.changepoint,
                })
            }
            None => None,
        };

        reports.push(SampleReport {
            name: name.clone(),
            n_pairs: sample.len(),
            fixed,
            surface,
            composite,
            scan,
            interference: interference_results,
            sensitivity,
        });
    }

    run.json(
        "report.json",
        &Report {
            alpha: inf.alpha,
            model: h,
            samples: reports,
        },
    )?;
    run.finish()
}

/// Adjacency graph plus the cumulative doses of every panel county; the
/// engine uses the latter only for neighbors outside the matched sample.
fn interference_inputs(
    loaded: &Loaded,
    panel: Option<&Panel>,
    run: &mut RunDir,
) -> Result<(AdjacencyGraph, HashMap<String, f64>), CliError> {
    let fixed_doses = match (panel, &loaded.config.design) {
        (Some(panel), Some(design)) => {
            let doses = county_doses(panel, design)?;
            panel
                .counties
                .iter()
                .map(|c| c.fips.clone())
                .zip(doses)
                .collect()
        }
        _ => HashMap::new(),
    };
    let graph = match &loaded.config.data.adjacency {
        Some(p) => {
            let path = loaded.resolve(p);
            let known: Option<HashSet<String>> =
                panel.map(|p| p.counties.iter().map(|c| c.fips.clone()).collect());
            let (g, warnings) = load_adjacency(&path, known.as_ref())?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            run.input("adjacency", &path)?;
            g
        }
        None => AdjacencyGraph::empty(),
    };
    Ok((graph, fixed_doses))
}
