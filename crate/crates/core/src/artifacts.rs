//! Artifact persistence: trajectory traces, datasets, fitted models and
//! decision logs. All numeric CSV output uses 9 significant digits.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::boundary::{CanonicalConic, ConicBoundary, ReducedState2};
use crate::dataset::{FeasibilitySet, ReducedGuidanceState};
use crate::error::{Error, Result};
use crate::sim::StepRecord;
use crate::tgo::{TgoPolicy, N_TERMS, TERM_NAMES};

/// 9 significant digits.
fn s9(x: f64) -> String {
    format!("{x:.8e}")
}

fn parse_err(file: &Path, msg: impl Into<String>) -> Error {
    Error::Parse { file: file.display().to_string(), msg: msg.into() }
}

pub fn write_trace(path: &Path, trace: &[StepRecord]) -> Result<()> {
    let mut out = String::from("t,rx,ry,rz,vx,vy,vz,m,Tc,theta,ax,ay,az\n");
    for rec in trace {
        let s = &rec.state;
        let row = [
            s.t, s.r.x, s.r.y, s.r.z, s.v.x, s.v.y, s.v.z, s.m, rec.t_c, rec.theta,
            rec.a_cmd.x, rec.a_cmd.y, rec.a_cmd.z,
        ];
        let cols: Vec<String> = row.iter().map(|v| s9(*v)).collect();
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Labeled dataset row: the reduced state, its controllability label and
/// (for controllable states) the fuel-optimal entry.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRow {
    pub state: ReducedGuidanceState,
    pub label: i8,
    pub optimal: Option<(f64, f64)>,
}

pub fn write_dataset(path: &Path, sets: &[FeasibilitySet]) -> Result<()> {
    let mut out = String::from("S,H,w,v,label,tgo_star,mf_star\n");
    for set in sets {
        let x = &set.state;
        let (label, tgo, mf) = match set.optimal() {
            Some((t, m)) => (1, s9(t), s9(m)),
            None => (-1, String::new(), String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{},{label},{tgo},{mf}\n",
            s9(x.s),
            s9(x.h),
            s9(x.w),
            s9(x.v)
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err(path, "empty file"))?;
    if header != "S,H,w,v,label,tgo_star,mf_star" {
        return Err(parse_err(path, format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(parse_err(path, format!("row {i}: expected 7 columns")));
        }
        let num = |j: usize| -> Result<f64> {
            cols[j]
                .parse()
                .map_err(|e| parse_err(path, format!("row {i} col {j}: {e}")))
        };
        let label: i8 = cols[4]
            .parse()
            .map_err(|e| parse_err(path, format!("row {i} label: {e}")))?;
        let optimal = if cols[5].is_empty() {
            None
        } else {
            Some((num(5)?, num(6)?))
        };
        rows.push(DatasetRow {
            state: ReducedGuidanceState { s: num(0)?, h: num(1)?, w: num(2)?, v: num(3)? },
            label,
            optimal,
        });
    }
    Ok(rows)
}

/// Long-form export of the feasibility sets: one row per feasible
/// (t_go, terminal mass) pair.
pub fn write_feasibility_long(path: &Path, sets: &[FeasibilitySet]) -> Result<()> {
    let mut out = String::from("S,H,w,v,tgo,mf\n");
    for set in sets {
        let x = &set.state;
        for (t, m) in &set.entries {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s9(x.s),
                s9(x.h),
                s9(x.w),
                s9(x.v),
                s9(*t),
                s9(*m)
            ));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_tgo_policy(path: &Path, policy: &TgoPolicy) -> Result<()> {
    let mut out = String::from("tgo_policy v1\n");
    out.push_str(&format!("mu {}\n", s9(policy.mu)));
    out.push_str(&format!("rmse {}\n", s9(policy.rmse)));
    out.push_str(&format!("sparsity {}\n", policy.sparsity));
    out.push_str(&format!("intercept {}\n", s9(policy.k[0])));
    out.push_str(&format!("tgo_min {}\n", s9(policy.tgo_min)));
    out.push_str(&format!("tgo_max {}\n", s9(policy.tgo_max)));
    for j in 0..N_TERMS {
        out.push_str(&format!(
            "term {} {} {} {}\n",
            TERM_NAMES[j],
            s9(policy.k[j]),
            s9(policy.means[j]),
            s9(policy.stds[j])
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_tgo_policy(path: &Path) -> Result<TgoPolicy> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let magic = lines.next().ok_or_else(|| parse_err(path, "empty file"))?;
    if magic != "tgo_policy v1" {
        return Err(parse_err(path, format!("bad magic {magic:?}")));
    }
    let mut scalars: HashMap<String, f64> = HashMap::new();
    let mut k = [f64::NAN; N_TERMS];
    let mut means = [f64::NAN; N_TERMS];
    let mut stds = [f64::NAN; N_TERMS];
    for line in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            [key, val] => {
                let v: f64 = val
                    .parse()
                    .map_err(|e| parse_err(path, format!("{key}: {e}")))?;
                scalars.insert((*key).to_string(), v);
            }
            ["term", name, kv, mv, sv] => {
                let j = TERM_NAMES
                    .iter()
                    .position(|t| t == name)
                    .ok_or_else(|| parse_err(path, format!("unknown term {name:?}")))?;
                k[j] = kv.parse().map_err(|e| parse_err(path, format!("{name}: {e}")))?;
                means[j] = mv.parse().map_err(|e| parse_err(path, format!("{name}: {e}")))?;
                stds[j] = sv.parse().map_err(|e| parse_err(path, format!("{name}: {e}")))?;
            }
            [] => {}
            _ => return Err(parse_err(path, format!("unparseable line {line:?}"))),
        }
    }
    let get = |key: &str| -> Result<f64> {
        scalars
            .get(key)
            .copied()
            .ok_or_else(|| parse_err(path, format!("missing key {key:?}")))
    };
    if k.iter().any(|v| v.is_nan()) {
        return Err(parse_err(path, "missing term rows"));
    }
    Ok(TgoPolicy {
        k,
        means,
        stds,
        mu: get("mu")?,
        rmse: get("rmse")?,
        sparsity: get("sparsity")? as usize,
        tgo_min: get("tgo_min")?,
        tgo_max: get("tgo_max")?,
    })
}

pub fn write_boundary(path: &Path, boundary: &ConicBoundary) -> Result<()> {
    let c = &boundary.canonical;
    let mut out = String::from("conic_boundary v1\n");
    for (key, val) in [
        ("h", c.h),
        ("k", c.k),
        ("theta", c.theta),
        ("m1", c.m1),
        ("m2", c.m2),
        ("lambda", c.lambda),
        ("a_bar", c.a_bar),
        ("b_bar", c.b_bar),
        ("c_bar", c.c_bar),
        ("delta_h", boundary.delta[0]),
        ("delta_k", boundary.delta[1]),
        ("delta_theta", boundary.delta[2]),
        ("sign", boundary.sign),
        ("eta", boundary.eta),
    ] {
        out.push_str(&format!("{key} {}\n", s9(val)));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_boundary(path: &Path) -> Result<ConicBoundary> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let magic = lines.next().ok_or_else(|| parse_err(path, "empty file"))?;
    if magic != "conic_boundary v1" {
        return Err(parse_err(path, format!("bad magic {magic:?}")));
    }
    let mut vals: HashMap<String, f64> = HashMap::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let key = it
            .next()
            .ok_or_else(|| parse_err(path, format!("bad line {line:?}")))?;
        let val: f64 = it
            .next()
            .ok_or_else(|| parse_err(path, format!("bad line {line:?}")))?
            .parse()
            .map_err(|e| parse_err(path, format!("{key}: {e}")))?;
        vals.insert(key.to_string(), val);
    }
    let get = |key: &str| -> Result<f64> {
        vals.get(key)
            .copied()
            .ok_or_else(|| parse_err(path, format!("missing key {key:?}")))
    };
    Ok(ConicBoundary {
        canonical: CanonicalConic {
            h: get("h")?,
            k: get("k")?,
            theta: get("theta")?,
            m1: get("m1")?,
            m2: get("m2")?,
            lambda: get("lambda")?,
            a_bar: get("a_bar")?,
            b_bar: get("b_bar")?,
            c_bar: get("c_bar")?,
        },
        delta: [get("delta_h")?, get("delta_k")?, get("delta_theta")?],
        sign: get("sign")?,
        eta: get("eta")?,
    })
}

pub fn write_polyline(path: &Path, points: &[ReducedState2]) -> Result<()> {
    let mut out = String::from("s1,s2\n");
    for p in points {
        out.push_str(&format!("{},{}\n", s9(p.s1), s9(p.s2)));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// One line per Monte Carlo run in the decision log.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DecisionLogEntry {
    pub seed: u64,
    pub feasible: bool,
    pub s1: f64,
    pub s2: f64,
    pub s1_projected: f64,
    pub target_shift_m: f64,
    pub fuel_kg: f64,
    pub tof_s: f64,
    pub converged: bool,
}

pub fn write_decision_log(path: &Path, entries: &[DecisionLogEntry]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    for entry in entries {
        let line = serde_json::to_string(entry)
            .map_err(|e| parse_err(path, format!("serialize: {e}")))?;
        writeln!(file, "{line}")?;
    }
    Ok(())
}

pub fn read_decision_log(path: &Path) -> Result<Vec<DecisionLogEntry>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| parse_err(path, format!("{e}"))))
        .collect()
}
