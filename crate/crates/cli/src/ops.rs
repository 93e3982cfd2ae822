use std::collections::BTreeMap;
use std::io::Read;

use anyhow::{bail, Context};
use qmeas::matrixcore::{hermitian_eigenvalues, is_density_matrix};
use qmeas::measurement::{
    parse_ascii_bits, premeasure_dense, premeasure_factored, premeasure_table_dense, sample_many,
};
use qmeas::qmlt::{build_witness_test, evaluate_state, failure_report, lift_classical_mlt, QuantumMlt};
use qmeas::randlab::{aggregate, run_battery, BatteryReport};
use qmeas::states::{check_coherence, FactoredState, MAX_BLOCK_QUBITS};
use qmeas::verify::{verify_corner_block_bound, verify_family, verify_kron_pairing, verify_quadratic_bounds, LemmaReport};
use qmeas::{BitString, DenseCap, DensityBlock, Error, MeasurementSystem, State};
use serde_json::{json, Value};

use crate::config::*;

pub enum Output {
    Report { pass: bool, result: Value },
    /// Written verbatim to stdout (bit streams, CSV).
    Raw { pass: bool, text: String },
}

fn report(pass: bool, result: Value) -> anyhow::Result<Output> {
    Ok(Output::Report { pass, result })
}

pub fn execute(op: &Op, cap: DenseCap) -> anyhow::Result<Output> {
    match op {
        Op::State(o) => state(o, cap),
        Op::Measure(o) => measure(o, cap),
        Op::Sample(o) => sample(o),
        Op::Battery(o) => battery(o),
        Op::Witness(o) => witness(o, cap),
        Op::Lift(o) => lift(o, cap),
        Op::Eval(o) => eval(o, cap),
        Op::KronPairing(o) => lemmas(o, verify_kron_pairing),
        Op::QuadraticBounds(o) => lemmas(o, verify_quadratic_bounds),
        Op::CornerBound(o) => lemmas(o, verify_corner_block_bound),
        Op::Family(o) => {
            let r = verify_family(&o.family)?;
            report(r.pass, serde_json::to_value(&r)?)
        }
    }
}

fn block_summary(offset: usize, b: &DensityBlock) -> Value {
    json!({
        "offset": offset,
        "n": b.n(),
        "corner_count": b.corner_count().to_string(),
        "corner_value": b.corner_value(),
        "zero_multiplicity": b.zero_multiplicity().to_string(),
        "support_rank": b.support_rank().to_string(),
    })
}

fn state(o: &StateOp, cap: DenseCap) -> anyhow::Result<Output> {
    let st = o.state.build()?;
    let mut result = json!({ "state_id": st.id(), "max_depth": st.max_depth() });
    let mut pass = true;
    if let State::Factored(f) = &st {
        let offsets = f.block_offsets(0)?;
        let mut blocks = Vec::new();
        let mut offset = offsets[0];
        for idx in 0..o.blocks {
            let Some(b) = f.block(idx) else { break };
            blocks.push(block_summary(offset, &b));
            offset += b.n();
        }
        result["blocks"] = Value::Array(blocks);
    }
    if o.check_depth > 0 {
        let coherence = check_coherence(&st, o.check_depth, o.tolerance, cap)?;
        pass &= coherence.pass;
        result["coherence"] = serde_json::to_value(&coherence)?;
    }
    let density_depth = o.density_depth.unwrap_or(o.check_depth.min(8));
    if density_depth > 0 {
        let mut rows = Vec::new();
        for k in 1..=density_depth {
            let d = is_density_matrix(&st.prefix(k, cap)?.rho, 1e-9);
            pass &= d.is_density;
            rows.push(json!({ "depth": k, "is_density": d.is_density, "min_eigenvalue": d.min_eigenvalue, "trace": d.trace }));
        }
        result["density"] = Value::Array(rows);
    }
    let mut eigen = Vec::new();
    for &n in &o.eigen {
        eigen.push(match &st {
            State::Factored(f) => {
                let block = (0..=MAX_BLOCK_QUBITS)
                    .map_while(|i| f.block_size(i))
                    .position(|size| size == n)
                    .and_then(|i| f.block(i))
                    .with_context(|| format!("state has no block of size {n}"))?;
                let mults: Vec<Value> = block
                    .eigenvalue_multiplicities()
                    .into_iter()
                    .map(|(v, c)| json!({ "value": v, "multiplicity": c.to_string() }))
                    .collect();
                json!({ "block": n, "eigenvalues": mults, "zero_multiplicity": block.zero_multiplicity().to_string() })
            }
            State::Dense(_) => {
                let vals = hermitian_eigenvalues(&st.prefix(n, cap)?.rho)?;
                let zeros = vals.iter().filter(|v| v.abs() <= 1e-9).count();
                json!({ "depth": n, "eigenvalues": vals, "zero_multiplicity": zeros.to_string() })
            }
        });
    }
    if !eigen.is_empty() {
        result["eigen"] = Value::Array(eigen);
    }
    report(pass, result)
}

/// `p(τ)` for every `τ` of one length, by the natural path for the state.
fn table(st: &State, basis: &MeasurementSystem, depth: usize, cap: DenseCap) -> qmeas::Result<Vec<f64>> {
    match st {
        State::Factored(f) => BitString::all(depth).map(|t| premeasure_factored(f, basis, &t)).collect(),
        State::Dense(_) => Ok(premeasure_table_dense(&st.prefix(depth, cap)?, basis)),
    }
}

fn measure(o: &MeasureOp, cap: DenseCap) -> anyhow::Result<Output> {
    let st = o.state.build()?;
    let mut result = json!({ "state_id": st.id(), "basis": o.basis.id() });
    let mut pass = true;
    let mut queries = Vec::new();
    for tau in &o.taus {
        let mut q = json!({ "tau": tau.to_string() });
        if let State::Factored(f) = &st {
            q["factored"] = json!(premeasure_factored(f, &o.basis, tau)?);
        }
        if tau.len() <= cap.0 as usize {
            q["dense"] = json!(premeasure_dense(&st.prefix(tau.len(), cap)?, &o.basis, tau)?);
        } else if matches!(st, State::Dense(_)) {
            return Err(Error::CapExceeded { requested: tau.len(), cap: cap.0 }.into());
        }
        queries.push(q);
    }
    if !queries.is_empty() {
        result["queries"] = Value::Array(queries);
    }
    if let Some(k) = o.tau_depth {
        let values = table(&st, &o.basis, k, cap)?;
        let sum: f64 = values.iter().sum();
        let additivity = if k == 0 {
            0.0
        } else {
            let parent = table(&st, &o.basis, k - 1, cap)?;
            let half = 1usize << (k - 1);
            parent.iter().enumerate().map(|(i, p)| (p - values[i] - values[i + half]).abs()).fold(0.0, f64::max)
        };
        let ok = (sum - 1.0).abs() <= o.tolerance.max(1e-12 * values.len() as f64) && additivity <= o.tolerance;
        pass &= ok;
        let rows: Vec<Value> = values
            .iter()
            .enumerate()
            .map(|(i, p)| json!({ "tau": BitString::from_index(i, k).to_string(), "p": p }))
            .collect();
        result["table"] = json!({ "depth": k, "values": rows, "sum": sum, "max_additivity_deviation": additivity, "pass": ok });
    }
    if let Some(depth) = o.oracle_compare_depth {
        let State::Factored(f) = &st else { bail!("oracle comparison needs a factored state") };
        let mut worst: f64 = 0.0;
        let mut count = 0usize;
        for k in 0..=depth {
            let dense = premeasure_table_dense(&st.prefix(k, cap)?, &o.basis);
            for tau in BitString::all(k) {
                worst = worst.max((premeasure_factored(f, &o.basis, &tau)? - dense[tau.index()]).abs());
                count += 1;
            }
        }
        let ok = worst <= o.tolerance;
        pass &= ok;
        result["oracle_compare"] = json!({ "depth": depth, "queries": count, "max_abs_diff": worst, "pass": ok });
    }
    report(pass, result)
}

fn factored(spec: &qmeas::states::StateSpec) -> anyhow::Result<FactoredState> {
    match spec.build()? {
        State::Factored(f) => Ok(f),
        State::Dense(_) => bail!("sampling and witness evaluation need a factored state"),
    }
}

fn sample(o: &SampleOp) -> anyhow::Result<Output> {
    let st = factored(&o.state)?;
    let samples = sample_many(&st, &o.basis, o.bits, &o.seeds)?;
    let Some(dir) = &o.out else {
        return Ok(Output::Raw { pass: true, text: samples.iter().map(|s| s.to_ascii()).collect() });
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut streams = Vec::new();
    for s in &samples {
        let (bits, sidecar) = s.write_files(&dir.join(format!("seed-{}", s.seed)))?;
        streams.push(json!({
            "seed": s.seed,
            "bits_file": bits,
            "sidecar": sidecar,
            "n_bits": s.n_bits,
            "log_probability": s.log_probability(),
        }));
    }
    report(true, json!({ "state_id": st.id(), "basis": o.basis.id(), "streams": streams }))
}

fn read_streams(inputs: &[std::path::PathBuf]) -> anyhow::Result<Vec<(String, BitString)>> {
    let sources: Vec<(String, String)> = if inputs.is_empty() {
        let mut text = String::new();
        std::io::stdin().read_to_string(&mut text)?;
        vec![("stdin".into(), text)]
    } else {
        inputs
            .iter()
            .map(|p| Ok((p.display().to_string(), std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)))
            .collect::<anyhow::Result<_>>()?
    };
    let mut streams = Vec::new();
    for (name, text) in sources {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if lines.is_empty() {
            streams.push((name, BitString::new()));
            continue;
        }
        let multi = lines.len() > 1;
        for (i, line) in lines.into_iter().enumerate() {
            let id = if multi { format!("{name}:{}", i + 1) } else { name.clone() };
            streams.push((id, parse_ascii_bits(line)?));
        }
    }
    Ok(streams)
}

fn battery(o: &BatteryOp) -> anyhow::Result<Output> {
    let streams = read_streams(&o.inputs)?;
    let reports: Vec<BatteryReport> =
        streams.iter().map(|(id, bits)| run_battery(bits, id, o.alpha)).collect::<qmeas::Result<_>>()?;
    let summary = aggregate(&reports);
    let pass = !summary.any_flagged;
    if o.csv {
        let mut text = String::from(BatteryReport::csv_header());
        text.push('\n');
        for r in &reports {
            for row in r.csv_rows() {
                text.push_str(&row);
                text.push('\n');
            }
        }
        return Ok(Output::Raw { pass, text });
    }
    report(pass, json!({ "reports": reports, "aggregate": summary, "note": "statistical evidence only; passing does not certify randomness" }))
}

fn witness(o: &WitnessOp, cap: DenseCap) -> anyhow::Result<Output> {
    let st: State = factored(&o.state)?.into();
    let mut levels = Vec::new();
    let mut test = QuantumMlt::default();
    let mut pass = true;
    for &m in &o.levels {
        let w = build_witness_test(m, o.budget)?;
        let evaluation = evaluate_state(&w.class, &st, w.gamma, cap)?;
        let below = w.tau < QuantumMlt::tau_bound(m);
        pass &= below;
        levels.push(json!({
            "m": m,
            "n_m": w.n_m,
            "gamma": w.gamma,
            "rank": w.rank.to_string(),
            "tau": w.tau,
            "bound_product": w.bound_product,
            "tau_below_2^-m": below,
            "evaluation": evaluation,
        }));
        test.levels.insert(m, w.class);
    }
    let failure = failure_report(&test, &st, &BTreeMap::new(), o.delta, cap)?;
    report(pass, json!({ "state_id": st.id(), "levels": levels, "failure": failure }))
}

fn lift_summary(q: &QuantumMlt, cap: DenseCap) -> anyhow::Result<(bool, Value)> {
    let mut pass = q.tau_violations()?.is_empty();
    let mut levels = Vec::new();
    for (&m, class) in &q.levels {
        let stages = class
            .natural_depths()
            .into_iter()
            .map(|d| Ok(json!({ "depth": d, "rank": class.rank(d)?.to_string(), "tau": class.tau(d)? })))
            .collect::<anyhow::Result<Vec<_>>>()?;
        let nesting = class.check_nesting(cap)?;
        pass &= nesting.iter().all(|c| c.holds);
        levels.push(json!({ "level": m, "bound": QuantumMlt::tau_bound(m), "stages": stages, "nesting": nesting }));
    }
    Ok((pass, Value::Array(levels)))
}

fn lift(o: &LiftOp, cap: DenseCap) -> anyhow::Result<Output> {
    let q = lift_classical_mlt(&o.mlt, &o.basis);
    let (pass, levels) = lift_summary(&q, cap)?;
    report(pass, json!({ "basis": o.basis.id(), "levels": levels }))
}

fn eval(o: &EvalOp, cap: DenseCap) -> anyhow::Result<Output> {
    let q = lift_classical_mlt(&o.mlt, &o.basis);
    let (pass, levels) = lift_summary(&q, cap)?;
    let st = o.state.build()?;
    let failure = failure_report(&q, &st, &BTreeMap::new(), o.delta, cap)?;
    let monotone = failure.levels.iter().all(|l| l.monotone);
    report(pass && monotone, json!({ "basis": o.basis.id(), "state_id": st.id(), "levels": levels, "failure": failure }))
}

fn lemmas(o: &LemmaOp, f: fn(usize, usize, u64) -> qmeas::Result<LemmaReport>) -> anyhow::Result<Output> {
    let reports = o.n.iter().map(|&n| f(n, o.trials, o.seed)).collect::<qmeas::Result<Vec<_>>>()?;
    report(reports.iter().all(|r| r.pass), json!({ "reports": reports }))
}
