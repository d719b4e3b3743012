//! Self-contained textual files carrying one sub-query to a worker process
//! and one result back. Floating-point values are written as the decimal
//! form of their IEEE-754 bit pattern so round-trips are exact.
//!
//! Sub-query format (`vnnsub`, version 1), one record per line:
//!
//! ```text
//! vnnsub 1
//! budget <f64 bits>
//! threshold-t <usize>
//! branching-k <f64 bits>
//! direction polarity|inactive-first
//! vars <count>
//! inputs <index>*
//! outputs <index>*
//! bound <var> <lower bits> <upper bits>     (one line per variable)
//! linear <relation: le|ge|eq> <rhs bits> <terms> [<var> <coef bits>]*
//! relu <backward> <forward> <phase: unfixed|active|inactive> <layer>
//! end
//! ```
//!
//! Result format (`vnnres`, version 1):
//!
//! ```text
//! vnnres 1
//! verdict sat|unsat|timeout
//! witness <count> <f64 bits>*               (sat only)
//! end
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::reluplex::{DirectionPolicy, SolverConfig};
use crate::vnn::{
    Assignment, LinearConstraint, QueryResult, Relation, ReluPhase, Variable, VnnFormula,
};
use crate::{Error, Result};

const SUBQUERY_MAGIC: &str = "vnnsub 1";
const RESULT_MAGIC: &str = "vnnres 1";

fn bits(x: f64) -> u64 {
    x.to_bits()
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line, msg: msg.into() }
}

/// Everything a worker process needs to solve one sub-query.
#[derive(Debug, Clone, PartialEq)]
pub struct WireSubQuery {
    pub formula: VnnFormula,
    pub budget_secs: f64,
    pub threshold_t: usize,
    pub branching_k_percent: f64,
    pub direction: DirectionPolicy,
}

impl WireSubQuery {
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            threshold_t: self.threshold_t,
            branching_k_percent: self.branching_k_percent,
            direction: self.direction,
            ..SolverConfig::default()
        }
    }
}

pub fn write_subquery(path: &Path, sq: &WireSubQuery) -> Result<()> {
    let f = &sq.formula;
    let mut out = String::new();
    let _ = writeln!(out, "{SUBQUERY_MAGIC}");
    let _ = writeln!(out, "budget {}", bits(sq.budget_secs));
    let _ = writeln!(out, "threshold-t {}", sq.threshold_t);
    let _ = writeln!(out, "branching-k {}", bits(sq.branching_k_percent));
    let direction = match sq.direction {
        DirectionPolicy::PolarityBased => "polarity",
        DirectionPolicy::AlwaysInactiveFirst => "inactive-first",
    };
    let _ = writeln!(out, "direction {direction}");
    let _ = writeln!(out, "vars {}", f.num_vars);
    let _ = write!(out, "inputs");
    for v in &f.inputs {
        let _ = write!(out, " {}", v.0);
    }
    out.push('\n');
    let _ = write!(out, "outputs");
    for v in &f.outputs {
        let _ = write!(out, " {}", v.0);
    }
    out.push('\n');
    for v in 0..f.num_vars {
        let var = Variable(v);
        let _ = writeln!(
            out,
            "bound {v} {} {}",
            bits(f.bounds.lower(var)),
            bits(f.bounds.upper(var))
        );
    }
    for c in &f.linear {
        let relation = match c.relation {
            Relation::LessEq => "le",
            Relation::GreaterEq => "ge",
            Relation::Eq => "eq",
        };
        let _ = write!(out, "linear {relation} {} {}", bits(c.rhs), c.terms.len());
        for (v, coef) in &c.terms {
            let _ = write!(out, " {} {}", v.0, bits(*coef));
        }
        out.push('\n');
    }
    for r in &f.relus {
        let phase = match r.phase {
            ReluPhase::Unfixed => "unfixed",
            ReluPhase::FixedActive => "active",
            ReluPhase::FixedInactive => "inactive",
        };
        let _ = writeln!(out, "relu {} {} {phase} {}", r.backward.0, r.forward.0, r.layer_rank);
    }
    out.push_str("end\n");
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_subquery(path: &Path) -> Result<WireSubQuery> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, &str)> {
        lines
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| parse_err(path, 0, format!("missing {what}")))
    };

    let (n, magic) = next("header")?;
    if magic != SUBQUERY_MAGIC {
        return Err(parse_err(path, n, format!("expected `{SUBQUERY_MAGIC}`, got `{magic}`")));
    }
    let field = |line: &str, n: usize, key: &str| -> Result<Vec<String>> {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some(k) if k == key => Ok(parts.map(str::to_string).collect()),
            other => Err(parse_err(path, n, format!("expected `{key}`, got `{other:?}`"))),
        }
    };
    let one_u64 = |vals: &[String], n: usize| -> Result<u64> {
        vals.first()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(path, n, "expected one integer"))
    };

    let (n, line) = next("budget")?;
    let budget_secs = f64::from_bits(one_u64(&field(line, n, "budget")?, n)?);
    let (n, line) = next("threshold-t")?;
    let threshold_t = one_u64(&field(line, n, "threshold-t")?, n)? as usize;
    let (n, line) = next("branching-k")?;
    let branching_k_percent = f64::from_bits(one_u64(&field(line, n, "branching-k")?, n)?);
    let (n, line) = next("direction")?;
    let direction = match field(line, n, "direction")?.first().map(String::as_str) {
        Some("polarity") => DirectionPolicy::PolarityBased,
        Some("inactive-first") => DirectionPolicy::AlwaysInactiveFirst,
        other => return Err(parse_err(path, n, format!("unknown direction {other:?}"))),
    };
    let (n, line) = next("vars")?;
    let num_vars = one_u64(&field(line, n, "vars")?, n)? as usize;

    let mut formula = VnnFormula::new(num_vars);
    let parse_vars = |vals: Vec<String>, n: usize| -> Result<Vec<Variable>> {
        vals.iter()
            .map(|s| {
                s.parse::<usize>()
                    .map(Variable)
                    .map_err(|e| parse_err(path, n, format!("bad variable index: {e}")))
            })
            .collect()
    };
    let (n, line) = next("inputs")?;
    formula.inputs = parse_vars(field(line, n, "inputs")?, n)?;
    let (n, line) = next("outputs")?;
    formula.outputs = parse_vars(field(line, n, "outputs")?, n)?;

    for (n, line) in &mut lines {
        let n = n + 1;
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or("");
        let rest: Vec<&str> = parts.collect();
        let f64_at = |i: usize| -> Result<f64> {
            rest.get(i)
                .and_then(|s| s.parse::<u64>().ok())
                .map(f64::from_bits)
                .ok_or_else(|| parse_err(path, n, format!("bad float field {i}")))
        };
        let usize_at = |i: usize| -> Result<usize> {
            rest.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err(path, n, format!("bad integer field {i}")))
        };
        match key {
            "bound" => {
                let v = Variable(usize_at(0)?);
                if v.0 >= num_vars {
                    return Err(parse_err(path, n, format!("variable {v} out of range")));
                }
                formula.bounds.lower[v.0] = f64_at(1)?;
                formula.bounds.upper[v.0] = f64_at(2)?;
            }
            "linear" => {
                let relation = match rest.first().copied() {
                    Some("le") => Relation::LessEq,
                    Some("ge") => Relation::GreaterEq,
                    Some("eq") => Relation::Eq,
                    other => return Err(parse_err(path, n, format!("unknown relation {other:?}"))),
                };
                let rhs = f64_at(1)?;
                let count = usize_at(2)?;
                if rest.len() != 3 + 2 * count {
                    return Err(parse_err(path, n, "term count disagrees with line length"));
                }
                let mut terms = Vec::with_capacity(count);
                for t in 0..count {
                    terms.push((Variable(usize_at(3 + 2 * t)?), f64_at(4 + 2 * t)?));
                }
                formula.linear.push(LinearConstraint::new(terms, relation, rhs));
            }
            "relu" => {
                let phase = match rest.get(2).copied() {
                    Some("unfixed") => ReluPhase::Unfixed,
                    Some("active") => ReluPhase::FixedActive,
                    Some("inactive") => ReluPhase::FixedInactive,
                    other => return Err(parse_err(path, n, format!("unknown phase {other:?}"))),
                };
                formula.add_relu(Variable(usize_at(0)?), Variable(usize_at(1)?), usize_at(3)?);
                formula.relus.last_mut().expect("just pushed").phase = phase;
            }
            "end" => {
                return Ok(WireSubQuery {
                    formula,
                    budget_secs,
                    threshold_t,
                    branching_k_percent,
                    direction,
                });
            }
            other => return Err(parse_err(path, n, format!("unknown record `{other}`"))),
        }
    }
    Err(parse_err(path, 0, "missing `end`"))
}

pub fn write_result(path: &Path, result: &QueryResult) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{RESULT_MAGIC}");
    match result {
        QueryResult::Sat(witness) => {
            let _ = writeln!(out, "verdict sat");
            let _ = write!(out, "witness {}", witness.values.len());
            for x in &witness.values {
                let _ = write!(out, " {}", bits(*x));
            }
            out.push('\n');
        }
        QueryResult::Unsat => {
            let _ = writeln!(out, "verdict unsat");
        }
        QueryResult::Timeout => {
            let _ = writeln!(out, "verdict timeout");
        }
    }
    out.push_str("end\n");
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_result(path: &Path) -> Result<QueryResult> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(l) if l == RESULT_MAGIC => {}
        other => return Err(parse_err(path, 1, format!("expected `{RESULT_MAGIC}`, got {other:?}"))),
    }
    let verdict_line = lines.next().unwrap_or("");
    match verdict_line {
        "verdict unsat" => Ok(QueryResult::Unsat),
        "verdict timeout" => Ok(QueryResult::Timeout),
        "verdict sat" => {
            let witness_line = lines.next().unwrap_or("");
            let mut parts = witness_line.split_whitespace();
            if parts.next() != Some("witness") {
                return Err(parse_err(path, 3, "sat result without witness"));
            }
            let count: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err(path, 3, "bad witness count"))?;
            let values: Vec<f64> = parts
                .map(|s| s.parse::<u64>().map(f64::from_bits))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(path, 3, format!("bad witness value: {e}")))?;
            if values.len() != count {
                return Err(parse_err(path, 3, "witness count disagrees with values"));
            }
            Ok(QueryResult::Sat(Assignment::new(values)))
        }
        other => Err(parse_err(path, 2, format!("unknown verdict line `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vnn::PhaseChoice;

    fn sample_formula() -> VnnFormula {
        let mut f = VnnFormula::new(4);
        f.bounds.tighten_lower(Variable(0), -1.25);
        f.bounds.tighten_upper(Variable(0), 0.1 + 0.2); // deliberately non-round
        f.bounds.tighten_upper(Variable(2), 7.5e-3);
        f.add_linear(LinearConstraint::new(
            [(Variable(0), 1.0 / 3.0), (Variable(3), -2.0)],
            Relation::LessEq,
            0.7,
        ));
        f.add_linear(LinearConstraint::new([(Variable(1), 5.0)], Relation::Eq, -1.0));
        f.add_relu(Variable(0), Variable(1), 0);
        f.add_relu(Variable(2), Variable(3), 1);
        f.fix_relu_in_place(1, PhaseChoice::Active).unwrap();
        f.inputs = vec![Variable(0), Variable(2)];
        f.outputs = vec![Variable(3)];
        f
    }

    #[test]
    fn subquery_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sq.txt");
        let sq = WireSubQuery {
            formula: sample_formula(),
            budget_secs: 0.3,
            threshold_t: 20,
            branching_k_percent: 5.0,
            direction: DirectionPolicy::AlwaysInactiveFirst,
        };
        write_subquery(&path, &sq).unwrap();
        let back = read_subquery(&path).unwrap();
        assert_eq!(back, sq);
    }

    #[test]
    fn infinite_budget_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sq.txt");
        let sq = WireSubQuery {
            formula: VnnFormula::new(1),
            budget_secs: f64::INFINITY,
            threshold_t: 1,
            branching_k_percent: 100.0,
            direction: DirectionPolicy::PolarityBased,
        };
        write_subquery(&path, &sq).unwrap();
        assert_eq!(read_subquery(&path).unwrap().budget_secs, f64::INFINITY);
    }

    #[test]
    fn results_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("res.txt");
        for r in [
            QueryResult::Unsat,
            QueryResult::Timeout,
            QueryResult::Sat(Assignment::new(vec![0.1, -2.0, f64::MIN_POSITIVE])),
        ] {
            write_result(&path, &r).unwrap();
            assert_eq!(read_result(&path).unwrap(), r);
        }
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sq.txt");
        std::fs::write(&path, "vnnsub 999\nend\n").unwrap();
        assert!(matches!(read_subquery(&path), Err(crate::Error::Parse { .. })));
        std::fs::write(&path, "vnnres 999\nverdict unsat\nend\n").unwrap();
        assert!(matches!(read_result(&path), Err(crate::Error::Parse { .. })));
    }

    #[test]
    fn truncated_subquery_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sq.txt");
        let sq = WireSubQuery {
            formula: sample_formula(),
            budget_secs: 1.0,
            threshold_t: 20,
            branching_k_percent: 5.0,
            direction: DirectionPolicy::PolarityBased,
        };
        write_subquery(&path, &sq).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let cut = text.trim_end().trim_end_matches("end").trim_end();
        std::fs::write(&path, cut).unwrap();
        assert!(matches!(read_subquery(&path), Err(crate::Error::Parse { .. })));
    }
}
