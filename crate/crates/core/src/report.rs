//! Deterministic report documents.
//!
//! Reports are JSON with a fixed key order and every float rendered as
//! `{:.16e}`, so a run with a fixed seed produces byte-identical output —
//! diffs of two reports then show exactly the numbers that changed and
//! nothing else. The emitter is hand-rolled for that reason: generic
//! serialisers do not guarantee key order or float formatting across
//! versions.

use crate::classify::{PointRecord, SampleClassification, Verdict};
use crate::curvature::StructureResiduals;
use crate::scalar::Real;

/// Report format identifier, bumped on breaking schema changes.
pub const REPORT_FORMAT: &str = "1";

/// Ordered JSON document tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Json {
    Null,
    Bool(bool),
    Int(i64),
    UInt(u64),
    /// Rendered as `{:.16e}`; non-finite values become `null`.
    Float(f64),
    Str(String),
    Array(Vec<Json>),
    /// Keys keep insertion order.
    Object(Vec<(String, Json)>),
}

impl Json {
    pub fn object() -> Json {
        Json::Object(Vec::new())
    }

    /// Append a key (object variant only).
    pub fn push(mut self, key: &str, value: Json) -> Json {
        match &mut self {
            Json::Object(entries) => entries.push((key.to_string(), value)),
            _ => panic!("push on a non-object Json node"),
        }
        self
    }

    pub fn floats<T: Real>(values: impl IntoIterator<Item = T>) -> Json {
        Json::Array(values.into_iter().map(|v| Json::Float(v.f64())).collect())
    }

    pub fn opt_float<T: Real>(v: Option<T>) -> Json {
        match v {
            Some(x) => Json::Float(x.f64()),
            None => Json::Null,
        }
    }

    /// Render with two-space indentation and a trailing newline.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.write(&mut out, 0);
        out.push('\n');
        out
    }

    fn write(&self, out: &mut String, indent: usize) {
        match self {
            Json::Null => out.push_str("null"),
            Json::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Json::Int(i) => out.push_str(&i.to_string()),
            Json::UInt(u) => out.push_str(&u.to_string()),
            Json::Float(x) => {
                if x.is_finite() {
                    out.push_str(&format!("{x:.16e}"));
                } else {
                    out.push_str("null");
                }
            }
            Json::Str(s) => write_escaped(out, s),
            Json::Array(items) => {
                if items.is_empty() {
                    out.push_str("[]");
                    return;
                }
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push('\n');
                    push_indent(out, indent + 1);
                    item.write(out, indent + 1);
                }
                out.push('\n');
                push_indent(out, indent);
                out.push(']');
            }
            Json::Object(entries) => {
                if entries.is_empty() {
                    out.push_str("{}");
                    return;
                }
                out.push('{');
                for (i, (k, v)) in entries.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push('\n');
                    push_indent(out, indent + 1);
                    write_escaped(out, k);
                    out.push_str(": ");
                    v.write(out, indent + 1);
                }
                out.push('\n');
                push_indent(out, indent);
                out.push('}');
            }
        }
    }
}

fn push_indent(out: &mut String, levels: usize) {
    for _ in 0..levels {
        out.push_str("  ");
    }
}

fn write_escaped(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                out.push_str(&format!("\\u{:04x}", c as u32));
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

/// Shared run-configuration block of every report.
#[derive(Debug, Clone)]
pub struct ReportConfig {
    /// Subcommand that produced the report.
    pub command: String,
    /// Spec name or path, when one was supplied.
    pub spec: Option<String>,
    /// Family identifier, when the spec was generated.
    pub family: Option<String>,
    /// Chart dimension.
    pub n: usize,
    /// Jet truncation order.
    pub order: usize,
    /// Sample seed.
    pub seed: u64,
    /// Number of sample points.
    pub points: usize,
    /// Multiplier applied to the default tolerance ladder.
    pub tolerance_scale: f64,
    /// Resolved family parameters, in a fixed order.
    pub params: Vec<(String, f64)>,
}

fn opt_str(v: &Option<String>) -> Json {
    match v {
        Some(s) => Json::Str(s.clone()),
        None => Json::Null,
    }
}

impl ReportConfig {
    fn json(&self) -> Json {
        let mut params = Json::object();
        for (k, v) in &self.params {
            params = params.push(k, Json::Float(*v));
        }
        Json::object()
            .push("command", Json::Str(self.command.clone()))
            .push("spec", opt_str(&self.spec))
            .push("family", opt_str(&self.family))
            .push("n", Json::UInt(self.n as u64))
            .push("order", Json::UInt(self.order as u64))
            .push("seed", Json::UInt(self.seed))
            .push("points", Json::UInt(self.points as u64))
            .push("tolerance_scale", Json::Float(self.tolerance_scale))
            .push("params", params)
    }
}

fn versions_json() -> Json {
    Json::object()
        .push("crate", Json::Str(env!("CARGO_PKG_VERSION").to_string()))
        .push("report_format", Json::Str(REPORT_FORMAT.to_string()))
}

fn point_json<T: Real>(rec: &PointRecord<T>) -> Json {
    let frame = match &rec.frame {
        Some(f) => Json::object()
            .push("nu", Json::floats([f.nu1, f.nu2]))
            .push("lambda", Json::floats([f.lambda1, f.lambda2]))
            .push("mu", Json::floats([f.mu1, f.mu2]))
            .push("alpha", Json::opt_float(f.alpha)),
        None => Json::Null,
    };
    let warped = match &rec.warped {
        Some(w) => Json::object()
            .push("f", Json::Str(w.f_tag.label().to_string()))
            .push("c", Json::Float(w.c_value.f64()))
            .push("l2", Json::Float(w.l2.f64()))
            .push("t_alignment", Json::Float(w.t_alignment.f64()))
            .push(
                "fd",
                Json::object()
                    .push("alpha", Json::Float(w.fd_alpha.f64()))
                    .push("lambda2", Json::Float(w.fd_lambda2.f64()))
                    .push("mu2", Json::Float(w.fd_mu2.f64())),
            ),
        None => Json::Null,
    };
    let mut residuals = Json::object();
    for (name, v) in &rec.residuals {
        residuals = residuals.push(name, Json::Float(v.f64()));
    }
    Json::object()
        .push("point", Json::floats(rec.point.iter().copied()))
        .push("verdict", Json::Str(rec.verdict.name()))
        .push("evidence", Json::Str(rec.evidence.clone()))
        .push("m", Json::UInt(rec.m as u64))
        .push("m_confident", Json::Bool(rec.m_confident))
        .push("sigma", Json::UInt(rec.sigma as u64))
        .push("sigma_confident", Json::Bool(rec.sigma_confident))
        .push("schouten_eigenvalues", Json::floats(rec.p_values.iter().copied()))
        .push(
            "schouten_multiplicities",
            Json::Array(rec.p_mults.iter().map(|&m| Json::UInt(m as u64)).collect()),
        )
        .push("shape_eigenvalues", Json::floats(rec.s_values.iter().copied()))
        .push(
            "shape_multiplicities",
            Json::Array(rec.s_mults.iter().map(|&m| Json::UInt(m as u64)).collect()),
        )
        .push("mean_curvature", Json::Float(rec.mean_curvature.f64()))
        .push("pick_invariant", Json::Float(rec.pick.f64()))
        .push("scalar_curvature", Json::Float(rec.scalar.f64()))
        .push("cubic_sup", Json::Float(rec.cubic_sup.f64()))
        .push("curvature_sup", Json::Float(rec.riem_sup.f64()))
        .push("weyl_sup", Json::Float(rec.weyl_sup.f64()))
        .push("semi_parallel", Json::Float(rec.semi_parallel.f64()))
        .push("route_gap", Json::opt_float(rec.route_gap))
        .push("sphere_gap", Json::Float(rec.sphere_gap.f64()))
        .push("frame", frame)
        .push("warped", warped)
        .push("residuals", residuals)
}

fn verdict_tally<T: Real>(records: &[PointRecord<T>]) -> Json {
    let mut tally: Vec<(String, u64)> = Vec::new();
    for rec in records {
        let name = rec.verdict.name();
        match tally.iter_mut().find(|(n, _)| *n == name) {
            Some((_, c)) => *c += 1,
            None => tally.push((name, 1)),
        }
    }
    tally.sort();
    let mut out = Json::object();
    for (name, c) in tally {
        out = out.push(&name, Json::UInt(c));
    }
    out
}

fn spread<T: Real>(values: impl Iterator<Item = T>) -> Json {
    let vals: Vec<f64> = values.map(|v| v.f64()).collect();
    if vals.is_empty() {
        return Json::Null;
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let dev = vals
        .iter()
        .fold(0.0f64, |m, v| m.max((v - mean).abs()));
    Json::object()
        .push("mean", Json::Float(mean))
        .push("max_deviation", Json::Float(dev))
}

/// Assemble the report for a classification run.
pub fn classification_report<T: Real>(
    config: &ReportConfig,
    sample: &SampleClassification<T>,
) -> Json {
    let records = &sample.records;
    let sup = |f: &dyn Fn(&PointRecord<T>) -> T| -> Json {
        Json::Float(
            records
                .iter()
                .map(f)
                .fold(T::zero(), |m, v| m.max(v))
                .f64(),
        )
    };
    let route = records
        .iter()
        .filter_map(|r| r.route_gap)
        .fold(None::<T>, |m, v| Some(m.map_or(v, |m| m.max(v))));
    let mut aggregate = Json::object()
        .push("verdicts", verdict_tally(records))
        .push("cubic_sup", sup(&|r| r.cubic_sup))
        .push("semi_parallel_sup", sup(&|r| r.semi_parallel))
        .push("route_gap_sup", Json::opt_float(route))
        .push("weyl_sup", sup(&|r| r.weyl_sup))
        .push(
            "mean_curvature",
            spread(records.iter().map(|r| r.mean_curvature)),
        );
    let cs: Vec<T> = records
        .iter()
        .filter_map(|r| r.warped.as_ref().map(|w| w.c_value))
        .collect();
    aggregate = aggregate.push(
        "fiber_constant",
        if cs.is_empty() {
            Json::Null
        } else {
            spread(cs.into_iter())
        },
    );

    Json::object()
        .push("config", config.json())
        .push(
            "per_point",
            Json::Array(records.iter().map(point_json).collect()),
        )
        .push("aggregate", aggregate)
        .push(
            "verdict",
            Json::object()
                .push("name", Json::Str(sample.verdict.name()))
                .push("evidence", Json::Str(sample.evidence.clone())),
        )
        .push("versions", versions_json())
}

/// Assemble the report for a structure-identity check run.
pub fn check_report<T: Real>(
    config: &ReportConfig,
    points: &[Vec<T>],
    suites: &[StructureResiduals<T>],
    pass: bool,
    threshold: f64,
) -> Json {
    assert_eq!(points.len(), suites.len());
    let mut per_point = Vec::with_capacity(points.len());
    let mut identity_sup: Vec<(&'static str, T)> = Vec::new();
    for (p, suite) in points.iter().zip(suites) {
        let mut residuals = Json::object();
        for (name, v) in suite.entries() {
            residuals = residuals.push(name, Json::Float(v.f64()));
            match identity_sup.iter_mut().find(|(n, _)| *n == name) {
                Some((_, m)) => *m = (*m).max(v),
                None => identity_sup.push((name, v)),
            }
        }
        let (worst_name, worst_val) = suite.worst();
        per_point.push(
            Json::object()
                .push("point", Json::floats(p.iter().copied()))
                .push("residuals", residuals)
                .push("sup", Json::Float(suite.sup().f64()))
                .push(
                    "worst",
                    Json::object()
                        .push("identity", Json::Str(worst_name.to_string()))
                        .push("residual", Json::Float(worst_val.f64())),
                ),
        );
    }
    let total_sup = suites
        .iter()
        .map(|s| s.sup())
        .fold(T::zero(), |m, v| m.max(v));
    let mut per_identity = Json::object();
    for (name, v) in identity_sup {
        per_identity = per_identity.push(name, Json::Float(v.f64()));
    }
    let aggregate = Json::object()
        .push("sup", Json::Float(total_sup.f64()))
        .push("threshold", Json::Float(threshold))
        .push("per_identity_sup", per_identity);

    Json::object()
        .push("config", config.json())
        .push("per_point", Json::Array(per_point))
        .push("aggregate", aggregate)
        .push(
            "verdict",
            Json::object()
                .push("name", Json::Str(if pass { "Pass" } else { "Fail" }.into()))
                .push(
                    "evidence",
                    Json::Str(format!(
                        "sup residual {:.3e} over {} points against threshold {:.1e}",
                        total_sup.f64(),
                        points.len(),
                        threshold
                    )),
                ),
        )
        .push("versions", versions_json())
}

/// One-line human summary of a classification (used by the text format).
pub fn verdict_line(verdict: Verdict, evidence: &str) -> String {
    format!("verdict: {verdict}  [{evidence}]")
}
