use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use mqnc_core::linalg::CMatrix;
use mqnc_core::metrics::{
    self, average_gate_fidelity, best_cap_center, best_sample_center, bipartition_overlap, cap_average_from_samples,
    cap_curve, cap_curve_csv, concurrence, default_radii, exact_basis_counts, fidelity, fidelity_from_settings,
    fidelity_pure, gme_witness, graph_state_vector, ket_density, matrix_from_json, matrix_to_json,
    measurement_settings, process_tomography_from_counts, purity, radii_above_bound, sample_basis_counts,
    stabilizer_projector_expansion, state_tomography, tomography_bases, BasisCounts, BlochSample, CapPoint, CapSpec,
    ChoiMatrix, ClassicalBound, Report, CAP_POINTS, CLASSICAL_FIDELITY, PROCESS_INPUTS,
};
use mqnc_core::protocol::{
    pair_state, prepare_resource, run_full_experiment, sample_experiment, InputState, Mode, Policy, ResourcePrep,
};
use mqnc_core::sampling::{binomial_std_error, calibrate, mitigate, splitmix64, stream_seed, ConfusionMatrix};
use mqnc_core::switch::{execute_schedule, permutations, route, verify_matching, SwitchNetwork};
use mqnc_core::topology::{
    butterfly_graph, falcon_plan, plan_target_graph, swap_baseline_count, verify_plan, RewirePlan, Topology, FALCON_MAP,
};
use mqnc_core::{GraphState, NoiseModel};
use serde_json::{json, Value};

use crate::config::{parse_indices, ExperimentConfig, VerificationFailed};

/// Result of a subcommand: the JSON record (source of truth), its CSV view,
/// and an optional verification failure.
pub struct Artifact {
    pub json: Value,
    pub csv: String,
    pub failure: Option<String>,
}

const FALCON: &str = "ibm-falcon-27";

/// How the six-qubit resource is compiled onto the topology.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Planner {
    /// The hand-derived 15-step plan (falcon-27 only).
    Fixed,
    /// Exhaustive search over native operations.
    Search,
}

/// Compile the resource onto `topo`: the hand-derived plan on falcon-27 by
/// default, otherwise a search with the given or default placement.
pub fn resource_plan(
    topo: &Topology,
    planner: Option<Planner>,
    map: Option<&str>,
    budget: usize,
) -> Result<RewirePlan> {
    let map = match map {
        Some(m) => parse_indices(m)?,
        None if topo.name() == FALCON => FALCON_MAP.to_vec(),
        None => bail!("--map is required on topology `{}`", topo.name()),
    };
    let planner = planner.unwrap_or(if topo.name() == FALCON && map == FALCON_MAP {
        Planner::Fixed
    } else {
        Planner::Search
    });
    match planner {
        Planner::Fixed => {
            if topo.name() != FALCON || map != FALCON_MAP {
                bail!("the fixed plan exists only for {FALCON} with map {FALCON_MAP:?}");
            }
            Ok(falcon_plan())
        }
        Planner::Search => Ok(plan_target_graph(topo, &butterfly_graph(), &map, &[], budget)?),
    }
}

fn readout_of(noise: &NoiseModel, qubits: &[usize]) -> Vec<[[f64; 2]; 2]> {
    qubits.iter().map(|&q| noise.readout_for(q)).collect()
}

fn has_readout_error(readout: &[[[f64; 2]; 2]]) -> bool {
    readout.iter().any(|m| m[0][1] != 0.0 || m[1][0] != 0.0)
}

/// Counts in every basis: sampled with readout error, or exact when
/// `shots` is zero.
fn basis_counts(
    rho: &CMatrix,
    bases: &[String],
    shots: usize,
    readout: &[[[f64; 2]; 2]],
    seed: u64,
) -> Result<BasisCounts> {
    Ok(if shots == 0 {
        exact_basis_counts(rho, bases)?
    } else {
        sample_basis_counts(rho, bases, shots, readout, seed)?
    })
}

fn calibration(readout: &[[[f64; 2]; 2]], shots: usize, seed: u64) -> Result<Option<ConfusionMatrix>> {
    Ok(if shots == 0 || !has_readout_error(readout) {
        None
    } else {
        Some(calibrate(readout, shots, seed)?)
    })
}

fn noise_json(cfg: &ExperimentConfig) -> Value {
    json!({ "label": cfg.noise_label, "p1": cfg.noise.p1, "p2": cfg.noise.p2 })
}

fn round(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

pub fn cmd_resource(
    cfg: &ExperimentConfig,
    planner: Option<Planner>,
    map: Option<&str>,
    budget: usize,
) -> Result<Artifact> {
    let plan = resource_plan(&cfg.topology, planner, map, budget)?;
    let g6 = butterfly_graph();
    let report = verify_plan(&plan, &g6, &cfg.topology)?;
    if !report.valid {
        bail!(VerificationFailed(format!(
            "plan does not produce the resource: {:?}",
            report.violation
        )));
    }
    let prepared = prepare_resource(&ResourcePrep::Plan(plan.clone()), &cfg.noise, 0)?;
    let rho = prepared.state.reduced_density(&prepared.logical)?;
    let terms = stabilizer_projector_expansion(&g6)?;
    let settings = measurement_settings(&terms);
    let readout = readout_of(&cfg.noise, &(0..6).collect::<Vec<_>>());
    let raw = basis_counts(&rho, &settings, cfg.shots, &readout, cfg.seed)?;
    let counts = match calibration(&readout, cfg.shots, stream_seed(cfg.seed, settings.len() as u64))? {
        Some(cm) => raw
            .iter()
            .map(|(b, c)| Ok((b.clone(), mitigate(c, &cm)?)))
            .collect::<Result<BasisCounts>>()?,
        None => raw,
    };
    let f = fidelity_from_settings(&g6, &counts)?;
    let f_exact = fidelity_pure(&graph_state_vector(&g6)?, &rho)?;
    let w = gme_witness(f, &g6)?;
    let alpha = bipartition_overlap(&g6)?;
    let json = json!({
        "command": "resource",
        "topology": cfg.topology.name(),
        "noise": noise_json(cfg),
        "shots": cfg.shots,
        "seed": cfg.seed,
        "plan": { "steps": plan.steps, "map": plan.map, "cz_count": plan.cz_count() },
        "terms": terms.len(),
        "settings": settings,
        "setting_count": settings.len(),
        "F": round(f),
        "F_exact": round(f_exact),
        "alpha": round(alpha),
        "witness": round(w.value),
        "certified": w.certified,
    });
    let csv = format!(
        "metric,value\nterms,{}\nsettings,{}\ncz_count,{}\nF,{:.12}\nF_exact,{:.12}\nalpha,{:.12}\nwitness,{:.12}\n",
        terms.len(),
        settings.len(),
        plan.cz_count(),
        f,
        f_exact,
        alpha,
        w.value
    );
    Ok(Artifact {
        json,
        csv,
        failure: None,
    })
}

/// Metrics for one pair and the teleportation channel across it.
fn mqnc_pair(
    cfg: &ExperimentConfig,
    prep: &ResourcePrep,
    mode: Mode,
    pair: usize,
    caps: usize,
    stream: u64,
) -> Result<Value> {
    let seed = stream_seed(cfg.seed, stream);
    let (p, q) = mode.pairs()[pair];
    let label = format!("{p}-{q}");

    // calibration of the two pair qubits
    let readout = readout_of(&cfg.noise, &[p, q]);
    let cm = calibration(&readout, cfg.shots, stream_seed(seed, 0))?;

    // pair state tomography
    let (rho, kept) = pair_state(mode, pair, &cfg.noise, cfg.policy, prep)?;
    let counts = basis_counts(&rho, &tomography_bases(2), cfg.shots, &readout, stream_seed(seed, 1))?;
    let tomo = state_tomography(2, &counts, cm.as_ref())?;
    let ideal = ket_density(&graph_state_vector(&GraphState::from_edges(2, &[(0, 1)])?)?);

    // teleportation process tomography onto the far qubit
    let out_readout = readout_of(&cfg.noise, &[q]);
    let out_cm = calibration(&out_readout, cfg.shots, stream_seed(seed, 2))?;
    let bases: Vec<String> = ["X", "Y", "Z"].map(String::from).to_vec();
    let mut process_counts = BTreeMap::new();
    let mut outputs = BTreeMap::new();
    for (i, (l, s)) in PROCESS_INPUTS.iter().zip(InputState::tomography_inputs()).enumerate() {
        let r = run_full_experiment(mode, pair, &s, &cfg.noise, cfg.policy, prep)?;
        let c = basis_counts(
            &r.state,
            &bases,
            cfg.shots,
            &out_readout,
            stream_seed(seed, 3 + i as u64),
        )?;
        process_counts.insert(l.to_string(), c);
        outputs.insert(l.to_string(), r.state);
    }
    let process = process_tomography_from_counts(&process_counts, out_cm.as_ref())?;
    let exact_choi = metrics::process_tomography(&outputs)?.choi;

    // fraction of runs whose total byproduct is the identity
    let input = InputState::new(1.0, 0.5)?;
    let ps = run_full_experiment(mode, pair, &input, &cfg.noise, Policy::Postselect, prep)?;
    let sampled = if cfg.shots == 0 {
        ps.retained_fraction
    } else {
        let records = sample_experiment(&ps, cfg.shots, stream_seed(seed, 7));
        records.iter().filter(|r| r.retained).count() as f64 / cfg.shots as f64
    };

    let cap_points = if caps > 0 {
        cap_curve(
            &process.choi,
            best_cap_center(&process.choi),
            &default_radii(caps),
            CAP_POINTS,
            &ClassicalBound::Constant,
        )?
    } else {
        Vec::new()
    };
    let report = Report {
        pair: Some(label.clone()),
        fidelity: Some(round(fidelity(&ideal, &tomo.rho)?)),
        purity: Some(round(purity(&tomo.rho))),
        concurrence: Some(round(concurrence(&tomo.rho)?)),
        alpha: None,
        witness: None,
        f_ave: Some(round(average_gate_fidelity(&process.choi))),
        cap_curve: cap_points,
        bloch_grid: Vec::new(),
    };
    Ok(json!({
        "mode": mode,
        "pair": pair,
        "qubits": [p, q],
        "report": report,
        "exact": {
            "F": round(fidelity(&ideal, &rho)?),
            "P": round(purity(&rho)),
            "C": round(concurrence(&rho)?),
            "F_ave": round(average_gate_fidelity(&exact_choi)),
        },
        "retained_fraction": round(kept),
        "identity_byproduct_fraction": round(ps.retained_fraction),
        "identity_byproduct_sampled": round(sampled),
        "identity_byproduct_std_error": round(binomial_std_error(ps.retained_fraction, cfg.shots)),
        "mitigated": cm.is_some(),
        "choi": matrix_to_json(&process.choi.matrix),
        "cp_residual": round(process.cp_residual),
        "tp_residual": round(process.tp_residual),
    }))
}

pub fn cmd_mqnc(cfg: &ExperimentConfig, prep: &ResourcePrep, caps: usize) -> Result<Artifact> {
    let mut pairs = Vec::new();
    let mut csv = String::from("mode,pair,qubits,F,P,C,F_ave,retained_fraction,identity_byproduct_fraction\n");
    for (m, mode) in Mode::ALL.into_iter().enumerate() {
        for pair in 0..2 {
            let v = mqnc_pair(cfg, prep, mode, pair, caps, (2 * m + pair) as u64)?;
            let r = &v["report"];
            csv.push_str(&format!(
                "{mode},{pair},{}-{},{},{},{},{},{},{}\n",
                v["qubits"][0],
                v["qubits"][1],
                r["F"],
                r["P"],
                r["C"],
                r["F_ave"],
                v["retained_fraction"],
                v["identity_byproduct_fraction"]
            ));
            pairs.push(v);
        }
    }
    let json = json!({
        "command": "mqnc",
        "topology": cfg.topology.name(),
        "noise": noise_json(cfg),
        "shots": cfg.shots,
        "seed": cfg.seed,
        "policy": cfg.policy,
        "classical_fidelity": CLASSICAL_FIDELITY,
        "pairs": pairs,
    });
    Ok(Artifact {
        json,
        csv,
        failure: None,
    })
}

pub fn cmd_switch(
    cfg: &ExperimentConfig,
    k: usize,
    perm: Option<&str>,
    exhaustive: bool,
    random_outcomes: bool,
) -> Result<Artifact> {
    let net = SwitchNetwork::build(k)?;
    let outcomes = |n: usize, stream: u64| -> Vec<u8> {
        (0..n)
            .map(|i| {
                if random_outcomes {
                    (splitmix64(stream_seed(stream_seed(cfg.seed, stream), i as u64)) & 1) as u8
                } else {
                    0
                }
            })
            .collect()
    };
    if exhaustive {
        if k > 7 {
            bail!("exhaustive verification is limited to k <= 7");
        }
        let mut failed = Vec::new();
        let all = permutations(k);
        let mut csv = String::from("permutation,verified\n");
        for (i, p) in all.iter().enumerate() {
            let sched = route(&net, p)?;
            let g = execute_schedule(&net, &sched, &outcomes(sched.outcome_count(), i as u64))?;
            let ok = verify_matching(&net, p, &g);
            if !ok {
                failed.push(p.clone());
            }
            let label: Vec<String> = p.iter().map(|d| d.to_string()).collect();
            csv.push_str(&format!("{},{ok}\n", label.join(" ")));
        }
        let json = json!({
            "command": "switch",
            "k": k,
            "qubits": net.n_qubits(),
            "switches": net.blocks().len(),
            "permutations": all.len(),
            "verified": all.len() - failed.len(),
            "failed": failed,
        });
        let failure = (!failed.is_empty()).then(|| format!("{} permutations failed", failed.len()));
        return Ok(Artifact { json, csv, failure });
    }
    let perm = match perm {
        Some(p) => parse_indices(p)?,
        None => bail!("--perm is required unless --exhaustive is given"),
    };
    let sched = route(&net, &perm)?;
    let bits = outcomes(sched.outcome_count(), 0);
    let g = execute_schedule(&net, &sched, &bits)?;
    let ok = verify_matching(&net, &perm, &g);
    let mut csv = String::from("block,stage,line,setting\n");
    for (i, (b, s)) in net.blocks().iter().zip(&sched.settings).enumerate() {
        let s = serde_json::to_value(s)?;
        csv.push_str(&format!(
            "{i},{},{},{}\n",
            b.stage,
            b.line,
            s.as_str().unwrap_or_default()
        ));
    }
    let json = json!({
        "command": "switch",
        "k": k,
        "qubits": net.n_qubits(),
        "switches": net.blocks().len(),
        "schedule": sched,
        "outcomes": bits,
        "matching": perm.iter().enumerate().map(|(s, d)| [net.sources()[s], net.destinations()[*d]]).collect::<Vec<_>>(),
        "verified": ok,
    });
    let failure = (!ok).then(|| "routed graph does not realise the permutation".to_string());
    Ok(Artifact { json, csv, failure })
}

/// Target graph for `compile`: `butterfly`, `triangle`, or a JSON file
/// `{"n": N, "edges": [[a, b], ...]}`.
fn load_target(name: &str) -> Result<GraphState> {
    match name {
        "butterfly" => Ok(butterfly_graph()),
        "triangle" => Ok(GraphState::from_edges(3, &[(0, 1), (1, 2), (0, 2)])?),
        path => {
            #[derive(serde::Deserialize)]
            struct TargetFile {
                n: usize,
                edges: Vec<(usize, usize)>,
            }
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read target `{path}`"))?;
            let t: TargetFile =
                serde_json::from_str(&text).with_context(|| format!("malformed target file `{path}`"))?;
            Ok(GraphState::from_edges(t.n, &t.edges)?)
        }
    }
}

pub struct CompileArgs<'a> {
    pub target: &'a str,
    pub map: Option<&'a str>,
    pub planner: Option<Planner>,
    pub plan_file: Option<&'a Path>,
    pub budget: usize,
}

pub fn cmd_compile(cfg: &ExperimentConfig, args: &CompileArgs) -> Result<Artifact> {
    let target = load_target(args.target)?;
    let topo = &cfg.topology;
    let plan = if let Some(path) = args.plan_file {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read plan `{}`", path.display()))?;
        RewirePlan::from_json_str(&text).with_context(|| format!("malformed plan file `{}`", path.display()))?
    } else if args.target == "butterfly" {
        resource_plan(topo, args.planner, args.map, args.budget)?
    } else {
        if args.planner == Some(Planner::Fixed) {
            bail!("the fixed plan only compiles the butterfly resource");
        }
        let map = match args.map {
            Some(m) => parse_indices(m)?,
            None => (0..target.n()).collect(),
        };
        plan_target_graph(topo, &target, &map, &[], args.budget)?
    };
    let report = verify_plan(&plan, &target, topo)?;
    let baseline = swap_baseline_count(topo, &target, &plan.map).ok();
    let mut csv = String::from("index,op,qubits\n");
    for (i, step) in plan.steps.iter().enumerate() {
        let v = serde_json::to_value(step)?;
        let qs: Vec<String> = v["qubits"]
            .as_array()
            .into_iter()
            .flatten()
            .map(|q| q.to_string())
            .collect();
        csv.push_str(&format!(
            "{i},{},{}\n",
            v["op"].as_str().unwrap_or_default(),
            qs.join(" ")
        ));
    }
    let json = json!({
        "command": "compile",
        "topology": topo.name(),
        "target": { "n": target.n(), "edges": target.edges() },
        "plan": plan,
        "cz_count": plan.cz_count(),
        "valid": report.valid,
        "matches_target": report.matches_target,
        "violation": report.violation.map(|v| format!("{v:?}")),
        "peak_degree": report.peak_degree,
        "baseline": baseline,
    });
    let failure = (!report.valid).then(|| "plan does not verify against the target".to_string());
    Ok(Artifact { json, csv, failure })
}

/// Channel description read by `cap`.
enum CapInput {
    Choi(ChoiMatrix),
    Samples(Vec<BlochSample>),
}

fn load_cap_input(path: &Path, pair: Option<usize>) -> Result<CapInput> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read `{}`", path.display()))?;
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') || trimmed.starts_with('[') {
        let v: Value =
            serde_json::from_str(&text).with_context(|| format!("malformed JSON in `{}`", path.display()))?;
        if let Some(grid) = v.get("bloch_grid") {
            let samples: Vec<BlochSample> = serde_json::from_value(grid.clone()).context("malformed bloch_grid")?;
            return Ok(CapInput::Samples(samples));
        }
        let v = match v.get("pairs").and_then(Value::as_array) {
            Some(pairs) => {
                let i = pair.context("input is an mqnc report; select a pair with --pair")?;
                pairs
                    .get(i)
                    .with_context(|| format!("report has {} pairs, no index {i}", pairs.len()))?
                    .clone()
            }
            None => v,
        };
        let rows = v.get("choi").cloned().unwrap_or(v);
        let rows: Vec<Vec<[f64; 2]>> =
            serde_json::from_value(rows).context("expected a 4x4 Choi matrix of [re, im] entries")?;
        let m = matrix_from_json(&rows)?;
        if m.nrows() != 4 {
            bail!("Choi matrix must be 4x4, got {}x{}", m.nrows(), m.ncols());
        }
        if (m.trace().re - 2.0).abs() > 1e-6 || (&m - m.adjoint()).norm() > 1e-6 {
            bail!("Choi matrix must be Hermitian with trace 2");
        }
        return Ok(CapInput::Choi(ChoiMatrix { matrix: m }));
    }
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().context("empty Bloch-grid file")?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() != 3 || cols[0] != "theta" || cols[1] != "phi" || !(cols[2] == "fidelity" || cols[2] == "F") {
        bail!("Bloch-grid CSV header must be `theta,phi,fidelity`, got `{header}`");
    }
    let samples = lines
        .enumerate()
        .map(|(i, l)| {
            let v: Vec<f64> = l
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .with_context(|| format!("line {}: invalid number", i + 2))?;
            if v.len() != 3 {
                bail!("line {}: expected 3 columns", i + 2);
            }
            Ok(BlochSample {
                theta: v[0],
                phi: v[1],
                fidelity: v[2],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if samples.is_empty() {
        bail!("Bloch-grid file has no samples");
    }
    Ok(CapInput::Samples(samples))
}

fn load_bound(path: &Path) -> Result<ClassicalBound> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read `{}`", path.display()))?;
    let rows = text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with("theta0"))
        .map(|l| {
            let (a, b) = l
                .split_once(',')
                .with_context(|| format!("bound row `{l}` needs two columns"))?;
            Ok((a.trim().parse::<f64>()?, b.trim().parse::<f64>()?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassicalBound::table(rows)?)
}

pub struct CapArgs<'a> {
    pub input: &'a Path,
    pub radii: usize,
    pub points: usize,
    pub center: Option<&'a str>,
    pub bound: Option<&'a Path>,
    pub pair: Option<usize>,
}

pub fn cmd_cap(args: &CapArgs) -> Result<Artifact> {
    let input = load_cap_input(args.input, args.pair)?;
    let bound = match args.bound {
        Some(p) => load_bound(p)?,
        None => ClassicalBound::Constant,
    };
    let center = match args.center {
        Some(s) => {
            let v: Vec<f64> = s
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .with_context(|| format!("invalid center `{s}`"))?;
            if v.len() != 2 {
                bail!("center must be `theta,phi`");
            }
            Some(InputState::new(v[0], v[1])?)
        }
        None => None,
    };
    let radii = default_radii(args.radii);
    let (center, curve, f_ave) = match &input {
        CapInput::Choi(choi) => {
            let center = center.unwrap_or_else(|| best_cap_center(choi));
            (
                center,
                cap_curve(choi, center, &radii, args.points, &bound)?,
                Some(average_gate_fidelity(choi)),
            )
        }
        CapInput::Samples(samples) => {
            let center = center.or_else(|| best_sample_center(samples)).context("no samples")?;
            let curve = radii
                .iter()
                .map(|&t| {
                    let cap = CapSpec::new(center, t)?;
                    Ok(CapPoint {
                        theta0: t,
                        f_cap: cap_average_from_samples(samples, &cap)?,
                        bound: bound.at(t),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (center, curve, None)
        }
    };
    let above = radii_above_bound(&curve);
    let json = json!({
        "command": "cap",
        "center": center,
        "F_ave": f_ave,
        "classical_fidelity": CLASSICAL_FIDELITY,
        "above_bound": above,
        "cap_curve": curve,
    });
    Ok(Artifact {
        json,
        csv: cap_curve_csv(&curve),
        failure: None,
    })
}
