//! Workflows run by the command-line tool. Each returns an in-memory bundle
//! of text files; writing it to disk is left to the caller.

use super::bundle::{csv_text, format_number as f, round12, sha256_hex, ResultBundle};
use super::config::{RunConfig, Workflow};
use super::dataset::{read_dataset, write_dataset_to};
use crate::error::{Error, Result, StageContext};
use crate::estimation::{self, FitResult};
use crate::model::{Dataset, IndexParams, Intercepts, PolicyScenario};
use crate::simulate::{simulate_game, HouseholdDraws, SimulationConfig};
use crate::spatial::{self, ConvergenceStudy, SdFitOptions};
use crate::welfare::{
    comparative_statics, evaluate_policy_with_beliefs, solve_village_beliefs, CvLaw, Group,
    PolicyOptions, PolicyReport, VillageBeliefs, WelfareCase,
};
use crate::model::spillover_split;
use serde_json::{json, Value};

/// Runs `workflow` and collects its output files. The bundle's config hash
/// covers the serialized configuration and, when one is read, the data file.
pub fn run_workflow(cfg: &RunConfig, workflow: Workflow) -> Result<ResultBundle> {
    let mut hash_input = cfg.canonical_json().into_bytes();
    if let Some(path) = &cfg.data {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
            .stage("load data")?;
        hash_input.extend_from_slice(sha256_hex(&bytes).as_bytes());
    }
    let mut bundle = ResultBundle::new(workflow.name(), cfg.seed, sha256_hex(&hash_input));
    match workflow {
        Workflow::Simulate => run_simulate(cfg, &mut bundle)?,
        Workflow::Estimate => run_estimate(cfg, &mut bundle)?,
        Workflow::Policy => run_policy(cfg, &mut bundle)?,
        Workflow::Convergence => run_convergence(cfg, &mut bundle)?,
        Workflow::ComparativeStatics => run_comparative(cfg, &mut bundle)?,
    }
    Ok(bundle)
}

fn model_params(cfg: &RunConfig) -> Result<IndexParams> {
    let m = cfg
        .model
        .as_ref()
        .ok_or_else(|| Error::Config("missing [model] section".into()))?;
    let p = m.params()?;
    Ok(if cfg.no_spillover { p.without_interaction() } else { p })
}

fn simulation_config(cfg: &RunConfig) -> SimulationConfig {
    let s = cfg.simulate.clone().unwrap_or(super::config::SimulateSection {
        villages: 11,
        households: 2000,
        nonparticipants: 0,
        spatial: None,
    });
    let mut sc = SimulationConfig::benchmark(s.villages, s.households);
    for v in &mut sc.villages {
        v.nonparticipants = s.nonparticipants;
    }
    sc.spatial = s.spatial;
    sc
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    match &cfg.data {
        Some(path) => read_dataset(path, &cfg.village_sizes()?),
        None => {
            let params = model_params(cfg)?;
            simulate_game(&simulation_config(cfg), &params, cfg.seed)
        }
    }
}

fn run_simulate(cfg: &RunConfig, bundle: &mut ResultBundle) -> Result<()> {
    let params = model_params(cfg).stage("configure")?;
    let sc = simulation_config(cfg);
    let ds = simulate_game(&sc, &params, cfg.seed).stage("simulate")?;
    let mut buf = Vec::new();
    write_dataset_to(&ds, &mut buf).stage("write data")?;
    bundle.add("data.csv", String::from_utf8(buf).expect("csv output is utf-8"));
    bundle.add("params.json", json_text(&truth_json(&params, &ds)));
    Ok(())
}

fn estimate(cfg: &RunConfig, ds: &Dataset) -> Result<FitResult> {
    let sec = cfg
        .estimate
        .as_ref()
        .ok_or_else(|| Error::Config("missing [estimate] section".into()))
        .stage("configure")?;
    let mut spec = sec.spec().stage("configure")?;
    if cfg.no_spillover {
        spec.include_belief = false;
    }
    if sec.is_spatial() && spec.include_belief {
        let opts = SdFitOptions {
            correlation_range: sec.correlation_range.unwrap_or(SdFitOptions::default().correlation_range),
            ..SdFitOptions::default()
        };
        spatial::fit_sd(ds, &spec, &opts).stage("estimate")
    } else {
        estimation::fit(ds, &spec).stage("estimate")
    }
}

/// Parameters for policy evaluation: estimated when `[estimate]` is given,
/// otherwise taken from `[model]`.
fn policy_params(cfg: &RunConfig, ds: &Dataset, bundle: &mut ResultBundle) -> Result<IndexParams> {
    if cfg.estimate.is_some() {
        let fit = estimate(cfg, ds)?;
        bundle.add("params.json", json_text(&fit_json(&fit)?));
        Ok(fit.params)
    } else {
        let p = model_params(cfg).stage("configure")?;
        bundle.add("params.json", json_text(&truth_json(&p, ds)));
        Ok(p)
    }
}

fn run_estimate(cfg: &RunConfig, bundle: &mut ResultBundle) -> Result<()> {
    let ds = load_dataset(cfg).stage("load data")?;
    let fit = estimate(cfg, &ds)?;
    bundle.add("params.json", json_text(&fit_json(&fit)?));
    Ok(())
}

fn run_policy(cfg: &RunConfig, bundle: &mut ResultBundle) -> Result<()> {
    let ds = load_dataset(cfg).stage("load data")?;
    let sec = cfg
        .policy
        .as_ref()
        .ok_or_else(|| Error::Config("missing [policy] section".into()))
        .stage("configure")?;
    let params = policy_params(cfg, &ds, bundle)?;
    let scenario = sec.scenario(&ds).stage("configure")?;
    let opts = PolicyOptions {
        alpha1_grid: sec.alpha1_grid.clone(),
        ..PolicyOptions::default()
    };
    let beliefs = solve_village_beliefs(&ds, &params, &scenario, &opts).stage("equilibrium")?;
    let mut runs = vec![("selected".to_string(), beliefs.clone())];
    if beliefs.iter().any(|b| b.roots0.len() > 1 || b.roots1.len() > 1) {
        bundle
            .notes
            .push("multiple equilibria found; welfare is reported for each extreme root pair".into());
        for (label, low0, low1) in [
            ("low_low", true, true),
            ("low_high", true, false),
            ("high_low", false, true),
            ("high_high", false, false),
        ] {
            runs.push((label.to_string(), pick_roots(&beliefs, low0, low1)));
        }
    }
    let mut reports = Vec::new();
    for (label, b) in runs {
        let r = evaluate_policy_with_beliefs(&ds, &params, &scenario, b, &opts).stage("welfare")?;
        reports.push((label, r));
    }
    bundle.add("welfare.csv", welfare_csv(&reports)?);
    bundle.add("equilibrium.csv", equilibrium_csv(&beliefs)?);
    bundle.add("cdf.csv", cdf_csv(&ds, &params, &scenario, &beliefs).stage("welfare")?);
    Ok(())
}

fn pick_roots(beliefs: &[VillageBeliefs], low0: bool, low1: bool) -> Vec<VillageBeliefs> {
    let pick = |r: &[f64], low: bool| if low { r[0] } else { r[r.len() - 1] };
    beliefs
        .iter()
        .map(|b| VillageBeliefs {
            pi0: pick(&b.roots0, low0),
            pi1: pick(&b.roots1, low1),
            ..b.clone()
        })
        .collect()
}

fn welfare_csv(reports: &[(String, PolicyReport)]) -> Result<String> {
    let header = [
        "equilibrium",
        "village_id",
        "alpha1",
        "households",
        "eligible",
        "pi0",
        "pi1",
        "takeup0",
        "takeup1",
        "eligible_gain",
        "ineligible_gain",
        "net_gain",
        "spending",
        "dwl",
    ];
    let mut rows = Vec::new();
    for (label, r) in reports {
        for (k, &a1) in r.alpha1_grid.iter().enumerate() {
            for v in &r.villages {
                rows.push(vec![
                    label.clone(),
                    v.village_id.to_string(),
                    f(a1),
                    v.households.to_string(),
                    v.eligible.to_string(),
                    f(v.pi0),
                    f(v.pi1),
                    f(v.takeup0),
                    f(v.takeup1),
                    f(v.eligible_gain[k]),
                    f(v.ineligible_gain[k]),
                    f(v.net_gain[k]),
                    f(v.spending),
                    f(v.dwl[k]),
                ]);
            }
            let eligible = (r.eligible_share * r.households as f64).round() as usize;
            rows.push(vec![
                label.clone(),
                "all".into(),
                f(a1),
                r.households.to_string(),
                eligible.to_string(),
                String::new(),
                String::new(),
                f(r.takeup0),
                f(r.takeup1),
                f(r.eligible_gain[k]),
                f(r.ineligible_gain[k]),
                f(r.net_gain[k]),
                f(r.spending),
                f(r.dwl[k]),
            ]);
        }
    }
    csv_text(&header, &rows)
}

fn equilibrium_csv(beliefs: &[VillageBeliefs]) -> Result<String> {
    let join = |r: &[f64]| r.iter().map(|&x| f(x)).collect::<Vec<_>>().join(";");
    let rows: Vec<Vec<String>> = beliefs
        .iter()
        .map(|b| {
            vec![
                b.village_id.to_string(),
                f(b.pi0),
                f(b.pi1),
                join(&b.roots0),
                join(&b.roots1),
                (b.roots0.len() == 1 && b.roots1.len() == 1).to_string(),
            ]
        })
        .collect();
    csv_text(&["village_id", "pi0", "pi1", "roots0", "roots1", "unique"], &rows)
}

/// CDF of the compensating variation for the median-wealth eligible and
/// ineligible participant of each village, at the lower, symmetric and
/// upper spillover splits.
fn cdf_csv(
    ds: &Dataset,
    params: &IndexParams,
    scenario: &PolicyScenario,
    beliefs: &[VillageBeliefs],
) -> Result<String> {
    let alpha = params.interaction;
    let mut rows = Vec::new();
    for v in &ds.villages {
        let b = beliefs
            .iter()
            .find(|b| b.village_id == v.id)
            .ok_or_else(|| Error::input(format!("no beliefs for village {}", v.id)))?;
        let intercept = params.intercept_for(v.id)?;
        for group in [Group::Eligible, Group::Ineligible] {
            let mut hs: Vec<_> = v
                .participants()
                .filter(|h| scenario.is_eligible(h.wealth) == (group == Group::Eligible))
                .collect();
            if hs.is_empty() {
                continue;
            }
            hs.sort_by(|a, b| a.wealth.total_cmp(&b.wealth).then(a.id.cmp(&b.id)));
            let h = hs[(hs.len() - 1) / 2];
            for a1 in [0.0, 0.5 * alpha, alpha] {
                let case = WelfareCase {
                    params,
                    wealth: h.wealth,
                    covariates: &h.covariates,
                    intercept,
                    scenario: *scenario,
                    pi0: b.pi0,
                    pi1: b.pi1,
                };
                let law = CvLaw::new(case, group, spillover_split(alpha, a1)?)?;
                let g = law.grid();
                let group_name = match group {
                    Group::Eligible => "eligible",
                    Group::Ineligible => "ineligible",
                };
                let regime = serde_json::to_value(g.regime)?
                    .as_str()
                    .unwrap_or_default()
                    .to_string();
                for (x, c) in g.grid {
                    rows.push(vec![
                        v.id.to_string(),
                        h.id.to_string(),
                        group_name.into(),
                        f(a1),
                        regime.clone(),
                        f(x),
                        f(c),
                    ]);
                }
            }
        }
    }
    csv_text(
        &["village_id", "household_id", "group", "alpha1", "regime", "transfer", "cdf"],
        &rows,
    )
}

fn run_comparative(cfg: &RunConfig, bundle: &mut ResultBundle) -> Result<()> {
    let ds = load_dataset(cfg).stage("load data")?;
    let sec = cfg
        .policy
        .as_ref()
        .ok_or_else(|| Error::Config("missing [policy] section".into()))
        .stage("configure")?;
    if sec.shares.is_empty() {
        return Err(Error::Config("comparative statics need `shares` in [policy]".into()))
            .stage("configure");
    }
    let params = policy_params(cfg, &ds, bundle)?;
    let opts = PolicyOptions {
        alpha1_grid: sec.alpha1_grid.clone(),
        ..PolicyOptions::default()
    };
    let mut variants = vec![("spillover", params.clone())];
    if !cfg.no_spillover {
        let fit = fit_without_belief(cfg, &ds, params.error)?;
        bundle.add("params_no_spillover.json", json_text(&fit_json(&fit)?));
        variants.push(("no_spillover", fit.params));
    }
    let header = [
        "variant",
        "target_share",
        "threshold",
        "eligible_share",
        "takeup0",
        "takeup1",
        "eligible_lower",
        "eligible_symmetric",
        "eligible_upper",
        "ineligible_lower",
        "ineligible_symmetric",
        "ineligible_upper",
        "net_lower",
        "net_symmetric",
        "net_upper",
        "spending",
        "dwl_min",
        "dwl_max",
    ];
    let mut rows = Vec::new();
    for (name, p) in variants {
        let table = comparative_statics(&ds, &p, sec.base_price, sec.subsidized_price, &sec.shares, &opts)
            .stage("welfare")?;
        for r in table {
            rows.push(vec![
                name.to_string(),
                f(r.target_share),
                f(r.threshold),
                f(r.eligible_share),
                f(r.takeup0),
                f(r.takeup1),
                f(r.eligible.0),
                f(r.eligible.1),
                f(r.eligible.2),
                f(r.ineligible.0),
                f(r.ineligible.1),
                f(r.ineligible.2),
                f(r.net.0),
                f(r.net.1),
                f(r.net.2),
                f(r.spending),
                f(r.dwl.0),
                f(r.dwl.1),
            ]);
        }
    }
    bundle.add("welfare.csv", csv_text(&header, &rows)?);
    Ok(())
}

/// The prediction one would make ignoring interactions: the same model
/// refitted without the belief regressor, so the intercept absorbs the
/// average spillover.
fn fit_without_belief(cfg: &RunConfig, ds: &Dataset, error: crate::ErrorDist) -> Result<FitResult> {
    let mut spec = match &cfg.estimate {
        Some(sec) => sec.spec().stage("configure")?,
        None => estimation::FitSpec::new(estimation::Estimator::Br, error),
    };
    spec.include_belief = false;
    estimation::fit(ds, &spec).stage("estimate without spillover")
}

fn run_convergence(cfg: &RunConfig, bundle: &mut ResultBundle) -> Result<()> {
    let sec = cfg
        .convergence
        .as_ref()
        .ok_or_else(|| Error::Config("missing [convergence] section".into()))
        .stage("configure")?;
    let params = model_params(cfg).stage("configure")?;
    let study = ConvergenceStudy {
        sizes: sec.sizes.clone(),
        ranges: sec.ranges.clone(),
        density: sec.density,
        replications: sec.replications,
        params,
        draws: HouseholdDraws::default(),
        grid_size: sec.grid_size,
        seed: cfg.seed,
    };
    let table = spatial::convergence_study(&study).stage("beliefs")?;
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|r| {
            vec![
                r.households.to_string(),
                f(r.correlation_range),
                f(r.density),
                r.replications.to_string(),
                f(r.mean_abs_deviation),
                f(r.sup_deviation),
                f(r.mean_sweeps),
            ]
        })
        .collect();
    bundle.add(
        "convergence.csv",
        csv_text(
            &[
                "households",
                "correlation_range",
                "density",
                "replications",
                "mean_abs_deviation",
                "sup_deviation",
                "mean_sweeps",
            ],
            &rows,
        )?,
    );
    Ok(())
}

fn json_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json serializes");
    s.push('\n');
    s
}

fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(round12(x))
    } else {
        json!(f(x))
    }
}

fn intercepts_json(p: &IndexParams, ds: &Dataset) -> Value {
    match &p.intercepts {
        Intercepts::Common(c) => json!({ "common": num(*c) }),
        Intercepts::PerVillage(m) => {
            let per: serde_json::Map<String, Value> = ds
                .village_ids()
                .into_iter()
                .filter_map(|id| m.get(&id).map(|c| (id.to_string(), num(*c))))
                .collect();
            json!({ "per_village": per })
        }
    }
}

fn coefficients_json(p: &IndexParams, names: &[String]) -> Value {
    let mut m = serde_json::Map::new();
    m.insert("price".into(), num(p.price_coef));
    m.insert("wealth".into(), num(p.wealth_coef));
    for (n, c) in names.iter().zip(&p.covariate_coefs) {
        m.insert(n.clone(), num(*c));
    }
    m.insert("interaction".into(), num(p.interaction));
    Value::Object(m)
}

fn truth_json(p: &IndexParams, ds: &Dataset) -> Value {
    json!({
        "source": "config",
        "error": p.error.name(),
        "coefficients": coefficients_json(p, &ds.covariate_names),
        "intercepts": intercepts_json(p, ds),
    })
}

fn fit_json(fit: &FitResult) -> Result<Value> {
    let se = estimation::standard_errors(fit).unwrap_or_else(|_| vec![f64::NAN; fit.estimates.len()]);
    let table: Vec<Value> = fit
        .names
        .iter()
        .zip(&fit.estimates)
        .zip(&se)
        .map(|((n, e), s)| json!({ "name": n, "estimate": num(*e), "std_error": num(*s) }))
        .collect();
    let beliefs: serde_json::Map<String, Value> = fit
        .village_beliefs
        .iter()
        .map(|(id, b)| (id.to_string(), num(*b)))
        .collect();
    Ok(json!({
        "source": "estimate",
        "estimator": serde_json::to_value(fit.spec.estimator)?,
        "error": fit.spec.error.name(),
        "include_belief": fit.spec.include_belief,
        "estimates": table,
        "loglik": num(fit.loglik),
        "gradient_norm": num(fit.gradient_norm),
        "converged": fit.converged,
        "at_boundary": fit.at_boundary,
        "iterations": fit.iterations,
        "n_obs": fit.n_obs,
        "village_beliefs": beliefs,
        "dropped_columns": fit.dropped_columns,
    }))
}

