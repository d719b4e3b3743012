//! Network and property ingestion: parses the textual NNet weight format and
//! a line-based property format, encodes networks and queries into
//! [`VnnFormula`], and evaluates networks concretely.
//!
//! Variable layout produced by [`encode_network`] (and relied upon by
//! [`network_assignment`]): inputs first, then per hidden layer a block of
//! backward variables followed by a block of forward variables, outputs last.

use std::path::Path;

use crate::vnn::{
    Assignment, LinearConstraint, Relation, Variable, VnnFormula,
};
use crate::{Error, Result};

/// A fully-connected feed-forward network with ReLU activations on every
/// layer except the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    /// Neuron counts, input layer first. Always at least two entries.
    pub layer_sizes: Vec<usize>,
    /// `weights[k][i][j]`: weight from neuron `j` of layer `k` to neuron `i`
    /// of layer `k+1`.
    pub weights: Vec<Vec<Vec<f64>>>,
    /// `biases[k][i]`: bias of neuron `i` of layer `k+1`.
    pub biases: Vec<Vec<f64>>,
    pub input_mins: Vec<f64>,
    pub input_maxs: Vec<f64>,
    pub normalization: Option<Normalization>,
}

/// Input/output normalization constants carried by NNet files.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub input_means: Vec<f64>,
    pub input_ranges: Vec<f64>,
    pub output_mean: f64,
    pub output_range: f64,
}

impl Network {
    pub fn num_inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_outputs(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Hidden (ReLU-activated) neuron count.
    pub fn num_relus(&self) -> usize {
        self.layer_sizes[1..self.layer_sizes.len() - 1].iter().sum()
    }
}

/// Side of the output threshold a robustness query asserts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputSide {
    /// Satisfiable iff the output can reach `b_k + epsilon` or above.
    Above,
    /// Satisfiable iff the output can reach `b_k - epsilon` or below.
    Below,
}

/// Constraints of a property file, kept in input-index / output-index space
/// (`Variable(i)` in `input_constraints` means input `i`, in
/// `output_constraints` output `i`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PropertySpec {
    pub input_constraints: Vec<LinearConstraint>,
    pub output_constraints: Vec<LinearConstraint>,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line, msg: msg.into() }
}

/// Comma-separated numeric rows with `//` comments and blank lines skipped.
struct RowReader<'a> {
    path: &'a Path,
    lines: std::vec::IntoIter<(usize, &'a str)>,
}

impl<'a> RowReader<'a> {
    fn new(path: &'a Path, text: &'a str) -> Self {
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with("//"))
            .collect();
        RowReader { path, lines: lines.into_iter() }
    }

    fn next_row(&mut self, what: &str) -> Result<(usize, Vec<f64>)> {
        let (line_no, line) = self
            .lines
            .next()
            .ok_or_else(|| parse_err(self.path, 0, format!("unexpected end of file, expected {what}")))?;
        let mut row = Vec::new();
        for tok in line.split(',') {
            let tok = tok.trim();
            if tok.is_empty() {
                continue;
            }
            let v: f64 = tok.parse().map_err(|_| {
                parse_err(self.path, line_no, format!("bad number {tok:?} in {what}"))
            })?;
            row.push(v);
        }
        if row.is_empty() {
            return Err(parse_err(self.path, line_no, format!("empty row, expected {what}")));
        }
        Ok((line_no, row))
    }

    fn next_counts(&mut self, what: &str, n: usize) -> Result<Vec<usize>> {
        let (line_no, row) = self.next_row(what)?;
        if row.len() < n {
            return Err(parse_err(
                self.path,
                line_no,
                format!("expected {n} values for {what}, found {}", row.len()),
            ));
        }
        row.iter()
            .take(n.max(row.len()))
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(parse_err(self.path, line_no, format!("expected integer in {what}, found {v}")))
                }
            })
            .collect()
    }
}

/// Parses an NNet file: a four-value header (layer count, inputs, outputs,
/// max layer size), the layer sizes, a legacy flag line, input minimums,
/// input maximums, normalization means and ranges, then per layer the weight
/// rows followed by one bias line per neuron.
pub fn parse_nnet(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| parse_err(path, 0, format!("cannot read file: {e}")))?;
    let mut rd = RowReader::new(path, &text);

    let header = rd.next_counts("header (layers, inputs, outputs, max layer size)", 4)?;
    let (num_layers, num_inputs, num_outputs) = (header[0], header[1], header[2]);
    if num_layers == 0 {
        return Err(parse_err(path, 0, "layer count must be at least 1"));
    }
    let sizes = rd.next_counts("layer sizes", num_layers + 1)?;
    let layer_sizes = sizes[..num_layers + 1].to_vec();
    if layer_sizes.iter().any(|&s| s == 0) {
        return Err(parse_err(path, 0, "layer sizes must be positive"));
    }
    if layer_sizes[0] != num_inputs || layer_sizes[num_layers] != num_outputs {
        return Err(parse_err(
            path,
            0,
            format!(
                "layer sizes {layer_sizes:?} disagree with declared inputs {num_inputs} / outputs {num_outputs}"
            ),
        ));
    }
    rd.next_row("legacy flag line")?;
    let (l, input_mins) = rd.next_row("input minimums")?;
    if input_mins.len() != num_inputs {
        return Err(parse_err(path, l, format!("expected {num_inputs} input minimums")));
    }
    let (l, input_maxs) = rd.next_row("input maximums")?;
    if input_maxs.len() != num_inputs {
        return Err(parse_err(path, l, format!("expected {num_inputs} input maximums")));
    }
    let (l, means) = rd.next_row("normalization means")?;
    if means.len() != num_inputs + 1 {
        return Err(parse_err(path, l, format!("expected {} normalization means", num_inputs + 1)));
    }
    let (l, ranges) = rd.next_row("normalization ranges")?;
    if ranges.len() != num_inputs + 1 {
        return Err(parse_err(path, l, format!("expected {} normalization ranges", num_inputs + 1)));
    }
    let normalization = Some(Normalization {
        input_means: means[..num_inputs].to_vec(),
        input_ranges: ranges[..num_inputs].to_vec(),
        output_mean: means[num_inputs],
        output_range: ranges[num_inputs],
    });

    let mut weights = Vec::with_capacity(num_layers);
    let mut biases = Vec::with_capacity(num_layers);
    for layer in 1..=num_layers {
        let (rows, cols) = (layer_sizes[layer], layer_sizes[layer - 1]);
        let mut w = Vec::with_capacity(rows);
        for neuron in 0..rows {
            let (l, row) = rd
                .next_row(&format!("weight row {neuron} of layer {layer}"))
                .map_err(|e| relabel_eof(e, path, format!("missing weight row in layer {layer}")))?;
            if row.len() != cols {
                return Err(parse_err(
                    path,
                    l,
                    format!("weight row {neuron} of layer {layer}: expected {cols} values, found {}", row.len()),
                ));
            }
            w.push(row);
        }
        let mut b = Vec::with_capacity(rows);
        for neuron in 0..rows {
            let (l, row) = rd
                .next_row(&format!("bias {neuron} of layer {layer}"))
                .map_err(|e| relabel_eof(e, path, format!("missing bias row in layer {layer}")))?;
            if row.len() != 1 {
                return Err(parse_err(
                    path,
                    l,
                    format!("bias {neuron} of layer {layer}: expected 1 value, found {}", row.len()),
                ));
            }
            b.push(row[0]);
        }
        weights.push(w);
        biases.push(b);
    }

    Ok(Network { layer_sizes, weights, biases, input_mins, input_maxs, normalization })
}

fn relabel_eof(e: Error, path: &Path, msg: String) -> Error {
    match e {
        Error::Parse { line: 0, .. } => parse_err(path, 0, msg),
        other => other,
    }
}

/// Folds the normalization constants into the first and last layers,
/// returning a network that operates directly on raw (unnormalized) values.
pub fn apply_normalization(net: &Network) -> Result<Network> {
    let Some(norm) = &net.normalization else {
        return Err(Error::InvalidConfig("network carries no normalization constants".into()));
    };
    if norm.input_ranges.iter().any(|&r| r == 0.0) || norm.output_range == 0.0 {
        return Err(Error::InvalidConfig("normalization range of zero".into()));
    }
    let mut out = net.clone();
    let first = 0;
    for (i, row) in out.weights[first].iter_mut().enumerate() {
        let mut shift = 0.0;
        for (j, w) in row.iter_mut().enumerate() {
            *w /= norm.input_ranges[j];
            shift += *w * norm.input_means[j];
        }
        out.biases[first][i] -= shift;
    }
    let last = out.weights.len() - 1;
    for (i, row) in out.weights[last].iter_mut().enumerate() {
        for w in row.iter_mut() {
            *w *= norm.output_range;
        }
        out.biases[last][i] = out.biases[last][i] * norm.output_range + norm.output_mean;
    }
    out.normalization = None;
    Ok(out)
}

/// Count of variables used by [`encode_network`].
fn encoded_var_count(net: &Network) -> usize {
    net.num_inputs() + 2 * net.num_relus() + net.num_outputs()
}

/// Encodes the network as equality rows plus one ReLU constraint per hidden
/// neuron. Input bounds come from the network declaration; all other
/// variables start unbounded.
pub fn encode_network(net: &Network) -> VnnFormula {
    let depth = net.layer_sizes.len() - 1;
    let mut f = VnnFormula::new(encoded_var_count(net));
    let inputs: Vec<Variable> = (0..net.num_inputs()).map(Variable).collect();
    for (i, &v) in inputs.iter().enumerate() {
        f.bounds.tighten_lower(v, net.input_mins[i]);
        f.bounds.tighten_upper(v, net.input_maxs[i]);
    }
    let mut next = net.num_inputs();
    let mut prev_forward = inputs.clone();
    for layer in 0..depth {
        let size = net.layer_sizes[layer + 1];
        let is_output = layer == depth - 1;
        let mut forward = Vec::with_capacity(size);
        for neuron in 0..size {
            let target = Variable(next);
            next += 1;
            let mut terms: Vec<(Variable, f64)> = prev_forward
                .iter()
                .zip(&net.weights[layer][neuron])
                .map(|(&v, &w)| (v, w))
                .collect();
            terms.push((target, -1.0));
            f.add_linear(LinearConstraint::new(terms, Relation::Eq, -net.biases[layer][neuron]));
            if is_output {
                forward.push(target);
            } else {
                let fwd = Variable(next + size - 1);
                f.add_relu(target, fwd, layer);
                forward.push(fwd);
            }
        }
        if !is_output {
            next += size;
        }
        prev_forward = forward;
    }
    f.inputs = inputs;
    f.outputs = prev_forward;
    f
}

/// The full variable assignment induced by running `input` through the
/// network, laid out to match [`encode_network`].
pub fn network_assignment(net: &Network, input: &[f64]) -> Result<Assignment> {
    if input.len() != net.num_inputs() {
        return Err(Error::DimensionMismatch(format!(
            "expected {} inputs, got {}",
            net.num_inputs(),
            input.len()
        )));
    }
    let depth = net.layer_sizes.len() - 1;
    let mut values = Vec::with_capacity(encoded_var_count(net));
    values.extend_from_slice(input);
    let mut prev: Vec<f64> = input.to_vec();
    for layer in 0..depth {
        let is_output = layer == depth - 1;
        let pre: Vec<f64> = (0..net.layer_sizes[layer + 1])
            .map(|neuron| {
                net.weights[layer][neuron]
                    .iter()
                    .zip(&prev)
                    .map(|(w, x)| w * x)
                    .sum::<f64>()
                    + net.biases[layer][neuron]
            })
            .collect();
        values.extend_from_slice(&pre);
        if is_output {
            prev = pre;
        } else {
            let post: Vec<f64> = pre.iter().map(|x| x.max(0.0)).collect();
            values.extend_from_slice(&post);
            prev = post;
        }
    }
    Ok(Assignment::new(values))
}

/// Forward pass: affine map then ReLU per hidden layer, affine only on the
/// output layer.
pub fn evaluate(net: &Network, input: &[f64]) -> Result<Vec<f64>> {
    let a = network_assignment(net, input)?;
    let n_out = net.num_outputs();
    Ok(a.values[a.values.len() - n_out..].to_vec())
}

/// Encodes "some input within `delta` of `center` drives output `k` to
/// `b_k + epsilon` or beyond". Unsatisfiability certifies local robustness
/// on that side; a witness is a concrete adversarial input.
pub fn encode_robustness_query(
    net: &Network,
    center: &[f64],
    delta: f64,
    k: usize,
    b_k: f64,
    epsilon: f64,
) -> Result<VnnFormula> {
    encode_robustness(net, center, delta, k, b_k, epsilon, OutputSide::Above)
}

/// As [`encode_robustness_query`] but asserting `y_k <= b_k - epsilon`.
pub fn encode_robustness_query_below(
    net: &Network,
    center: &[f64],
    delta: f64,
    k: usize,
    b_k: f64,
    epsilon: f64,
) -> Result<VnnFormula> {
    encode_robustness(net, center, delta, k, b_k, epsilon, OutputSide::Below)
}

/// Shared robustness encoder; `side` picks the asserted output direction.
pub fn encode_robustness(
    net: &Network,
    center: &[f64],
    delta: f64,
    k: usize,
    b_k: f64,
    epsilon: f64,
    side: OutputSide,
) -> Result<VnnFormula> {
    if center.len() != net.num_inputs() {
        return Err(Error::DimensionMismatch(format!(
            "center has {} entries for {} inputs",
            center.len(),
            net.num_inputs()
        )));
    }
    if k >= net.num_outputs() {
        return Err(Error::DimensionMismatch(format!(
            "output index {k} out of range for {} outputs",
            net.num_outputs()
        )));
    }
    if delta < 0.0 || epsilon < 0.0 {
        return Err(Error::InvalidConfig("delta and epsilon must be nonnegative".into()));
    }
    let mut f = encode_network(net);
    for (i, &c) in center.iter().enumerate() {
        let v = f.inputs[i];
        f.bounds.tighten_lower(v, c - delta);
        f.bounds.tighten_upper(v, c + delta);
    }
    let y = f.outputs[k];
    match side {
        OutputSide::Above => f.bounds.tighten_lower(y, b_k + epsilon),
        OutputSide::Below => f.bounds.tighten_upper(y, b_k - epsilon),
    };
    Ok(f)
}

/// Parses a property file: one constraint per line, terms like `x0`, `-y1`,
/// `0.5x2` (optional sign and coefficient, then `x<i>` for input `i` or
/// `y<i>` for output `i`), a relation (`<=`, `>=`, `=`), and a right-hand
/// side. `//` comments and blank lines are skipped. A line must stay within
/// one variable family: inputs and outputs cannot mix.
pub fn parse_property(path: impl AsRef<Path>) -> Result<PropertySpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| parse_err(path, 0, format!("cannot read file: {e}")))?;
    let mut spec = PropertySpec::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with("//") {
            continue;
        }
        let mut terms: Vec<(usize, f64)> = Vec::new();
        let mut family: Option<char> = None;
        let mut relation: Option<Relation> = None;
        let mut rhs: Option<f64> = None;
        for tok in line.split_whitespace() {
            if relation.is_none() {
                match tok {
                    "<=" => {
                        relation = Some(Relation::LessEq);
                        continue;
                    }
                    ">=" => {
                        relation = Some(Relation::GreaterEq);
                        continue;
                    }
                    "=" => {
                        relation = Some(Relation::Eq);
                        continue;
                    }
                    _ => {}
                }
                let (index, coef, fam) = parse_term(tok)
                    .ok_or_else(|| parse_err(path, line_no, format!("bad term {tok:?}")))?;
                match family {
                    None => family = Some(fam),
                    Some(f) if f == fam => {}
                    Some(_) => {
                        return Err(parse_err(
                            path,
                            line_no,
                            "constraint mixes input (x) and output (y) variables",
                        ))
                    }
                }
                terms.push((index, coef));
            } else if rhs.is_none() {
                rhs = Some(tok.parse().map_err(|_| {
                    parse_err(path, line_no, format!("bad right-hand side {tok:?}"))
                })?);
            } else {
                return Err(parse_err(path, line_no, format!("unexpected token {tok:?} after right-hand side")));
            }
        }
        let relation =
            relation.ok_or_else(|| parse_err(path, line_no, "missing relation (<=, >= or =)"))?;
        let rhs = rhs.ok_or_else(|| parse_err(path, line_no, "missing right-hand side"))?;
        if terms.is_empty() {
            return Err(parse_err(path, line_no, "constraint has no variables"));
        }
        let constraint =
            LinearConstraint::new(terms.into_iter().map(|(i, c)| (Variable(i), c)), relation, rhs);
        match family.unwrap() {
            'x' => spec.input_constraints.push(constraint),
            _ => spec.output_constraints.push(constraint),
        }
    }
    Ok(spec)
}

/// Splits a term token into (index, coefficient, family), e.g. `-2.5y1` into
/// `(1, -2.5, 'y')`. Returns None for anything else.
fn parse_term(tok: &str) -> Option<(usize, f64, char)> {
    let pos = tok.find(['x', 'y'])?;
    let family = tok.as_bytes()[pos] as char;
    let coef_str = &tok[..pos];
    let coef = match coef_str {
        "" | "+" => 1.0,
        "-" => -1.0,
        s => s.parse().ok()?,
    };
    let index: usize = tok[pos + 1..].parse().ok()?;
    Some((index, coef, family))
}

/// Conjoins a parsed property onto the network encoding. Single-variable
/// constraints become bound tightenings (so pure interval reasoning can use
/// them); anything else becomes a linear row over the mapped variables.
pub fn encode_property(net: &Network, spec: &PropertySpec) -> Result<VnnFormula> {
    let mut f = encode_network(net);
    let apply = |f: &mut VnnFormula, c: &LinearConstraint, vars: &[Variable], what: &str| -> Result<()> {
        for v in c.terms.keys() {
            if v.0 >= vars.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{what} index {} out of range ({} available)",
                    v.0,
                    vars.len()
                )));
            }
        }
        if c.terms.len() == 1 {
            let (&v, &coef) = c.terms.iter().next().unwrap();
            let target = vars[v.0];
            let bound = c.rhs / coef;
            let relation = if coef >= 0.0 {
                c.relation
            } else {
                match c.relation {
                    Relation::LessEq => Relation::GreaterEq,
                    Relation::GreaterEq => Relation::LessEq,
                    Relation::Eq => Relation::Eq,
                }
            };
            match relation {
                Relation::LessEq => {
                    f.bounds.tighten_upper(target, bound);
                }
                Relation::GreaterEq => {
                    f.bounds.tighten_lower(target, bound);
                }
                Relation::Eq => {
                    f.bounds.tighten_lower(target, bound);
                    f.bounds.tighten_upper(target, bound);
                }
            }
        } else {
            let terms: Vec<(Variable, f64)> =
                c.terms.iter().map(|(v, &coef)| (vars[v.0], coef)).collect();
            f.add_linear(LinearConstraint::new(terms, c.relation, c.rhs));
        }
        Ok(())
    };
    let inputs = f.inputs.clone();
    let outputs = f.outputs.clone();
    for c in &spec.input_constraints {
        apply(&mut f, c, &inputs, "input")?;
    }
    for c in &spec.output_constraints {
        apply(&mut f, c, &outputs, "output")?;
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{interval_propagate, Propagation};
    use crate::simplex::lp_feasible;
    use crate::vnn::{enumerate_phases_oracle, QueryResult};
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    /// 2-3-1 network with distinct small integer weights.
    fn small_nnet_text() -> String {
        let mut s = String::from(
            "// test network\n2,2,1,3,\n2,3,1,\n0,\n-1.0,-1.0,\n1.0,1.0,\n0.0,0.0,0.0,\n1.0,1.0,1.0,\n",
        );
        // Layer 1: 3 neurons x 2 weights, then 3 biases.
        s.push_str("1.0,2.0,\n-1.0,1.0,\n0.5,-0.5,\n0.1,\n-0.2,\n0.0,\n");
        // Layer 2: 1 neuron x 3 weights, then 1 bias.
        s.push_str("1.0,-1.0,2.0,\n0.25,\n");
        s
    }

    fn identity_1_1_1() -> Network {
        Network {
            layer_sizes: vec![1, 1, 1],
            weights: vec![vec![vec![1.0]], vec![vec![1.0]]],
            biases: vec![vec![0.0], vec![0.0]],
            input_mins: vec![-10.0],
            input_maxs: vec![10.0],
            normalization: None,
        }
    }

    #[test]
    fn parses_small_network() {
        let f = write_temp(&small_nnet_text());
        let net = parse_nnet(f.path()).unwrap();
        assert_eq!(net.layer_sizes, vec![2, 3, 1]);
        assert_eq!(net.weights[0][1], vec![-1.0, 1.0]);
        assert_eq!(net.biases[1], vec![0.25]);
        assert_eq!(net.input_mins, vec![-1.0, -1.0]);
        assert!(net.normalization.is_some());
    }

    #[test]
    fn missing_bias_row_is_reported_with_layer() {
        let text = small_nnet_text();
        let truncated = text.rsplit_once("0.25,").unwrap().0;
        let f = write_temp(truncated);
        let err = parse_nnet(f.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("layer 2"), "unhelpful error: {msg}");
    }

    #[test]
    fn parses_acas_shaped_header() {
        let mut s = String::from("// deep net\n7,5,5,50,\n5,50,50,50,50,50,50,5,\n0,\n");
        s.push_str(&"0.0,".repeat(5));
        s.push('\n');
        s.push_str(&"1.0,".repeat(5));
        s.push('\n');
        s.push_str(&"0.0,".repeat(6));
        s.push('\n');
        s.push_str(&"1.0,".repeat(6));
        s.push('\n');
        let sizes = [5usize, 50, 50, 50, 50, 50, 50, 5];
        for layer in 1..sizes.len() {
            let (rows, cols) = (sizes[layer], sizes[layer - 1]);
            for _ in 0..rows {
                s.push_str(&"0.0,".repeat(cols));
                s.push('\n');
            }
            for _ in 0..rows {
                s.push_str("0.0,\n");
            }
        }
        let f = write_temp(&s);
        let net = parse_nnet(f.path()).unwrap();
        assert_eq!(net.layer_sizes, vec![5, 50, 50, 50, 50, 50, 50, 5]);
        assert_eq!(net.num_relus(), 300);
    }

    #[test]
    fn encode_counts_match_construction() {
        let net = identity_1_1_1();
        let f = encode_network(&net);
        assert_eq!(f.num_vars, 4);
        assert_eq!(f.relus.len(), 1);
        assert_eq!(f.linear.len(), 2);

        let file = write_temp(&small_nnet_text());
        let net = parse_nnet(file.path()).unwrap();
        let f = encode_network(&net);
        assert_eq!(f.num_vars, 9);
        assert_eq!(f.relus.len(), 3);
        assert_eq!(f.inputs.len(), 2);
        assert_eq!(f.outputs.len(), 1);
    }

    #[test]
    fn affine_network_encodes_without_relus() {
        let net = Network {
            layer_sizes: vec![2, 1],
            weights: vec![vec![vec![1.0, 1.0]]],
            biases: vec![vec![0.0]],
            input_mins: vec![0.0, 0.0],
            input_maxs: vec![1.0, 1.0],
            normalization: None,
        };
        let f = encode_network(&net);
        assert_eq!(f.relus.len(), 0);
        assert_eq!(f.num_vars, 3);
        assert_eq!(f.linear.len(), 1);
    }

    #[test]
    fn evaluate_clips_and_passes() {
        let net = identity_1_1_1();
        assert_eq!(evaluate(&net, &[-2.0]).unwrap(), vec![0.0]);
        assert_eq!(evaluate(&net, &[3.0]).unwrap(), vec![3.0]);
    }

    #[test]
    fn induced_assignment_satisfies_encoding() {
        let file = write_temp(&small_nnet_text());
        let net = parse_nnet(file.path()).unwrap();
        let f = encode_network(&net);
        for input in [[0.0, 0.0], [0.25, -0.75], [1.0, -1.0], [-0.5, 0.5]] {
            let a = network_assignment(&net, &input).unwrap();
            assert!(f.check_assignment(&a, 1e-9), "input {input:?}");
        }
    }

    #[test]
    fn point_query_matches_concrete_evaluation() {
        let net = identity_1_1_1();
        // net([3]) = 3: reaching 2.9 is possible, reaching 3.1 is not.
        let sat = encode_robustness_query(&net, &[3.0], 0.0, 0, 2.9, 0.0).unwrap();
        let unsat = encode_robustness_query(&net, &[3.0], 0.0, 0, 3.1, 0.0).unwrap();
        assert!(matches!(
            enumerate_phases_oracle(&sat, lp_feasible).unwrap(),
            QueryResult::Sat(_)
        ));
        assert_eq!(enumerate_phases_oracle(&unsat, lp_feasible).unwrap(), QueryResult::Unsat);
    }

    #[test]
    fn perturbation_box_is_clipped_to_declared_bounds() {
        let mut net = identity_1_1_1();
        net.input_mins = vec![0.0];
        net.input_maxs = vec![1.0];
        let f = encode_robustness_query(&net, &[0.001], 0.004, 0, 0.0, 0.0).unwrap();
        let x = f.inputs[0];
        assert_eq!(f.bounds.lower(x), 0.0);
        assert!((f.bounds.upper(x) - 0.005).abs() < 1e-12);
    }

    #[test]
    fn unreachable_threshold_is_refuted_by_intervals_alone() {
        let mut net = identity_1_1_1();
        net.input_mins = vec![0.0];
        net.input_maxs = vec![1.0];
        let f = encode_robustness_query(&net, &[0.5], 0.5, 0, 10.0, 0.0).unwrap();
        assert_eq!(interval_propagate(f), Propagation::InfeasibleByBounds);
    }

    #[test]
    fn below_side_query_flips_the_bound() {
        let net = identity_1_1_1();
        let f = encode_robustness_query_below(&net, &[3.0], 0.0, 0, 2.0, 0.5).unwrap();
        assert_eq!(f.bounds.upper(f.outputs[0]), 1.5);
    }

    #[test]
    fn property_grammar_examples() {
        let f = write_temp("// comment\nx0 >= -0.5\n+y0 -y1 <= 0\n");
        let spec = parse_property(f.path()).unwrap();
        assert_eq!(spec.input_constraints.len(), 1);
        assert_eq!(spec.output_constraints.len(), 1);
        let out = &spec.output_constraints[0];
        assert_eq!(out.terms[&Variable(0)], 1.0);
        assert_eq!(out.terms[&Variable(1)], -1.0);
        assert_eq!(out.relation, Relation::LessEq);

        let bad = write_temp("z3 >= 1\n");
        assert!(matches!(parse_property(bad.path()), Err(Error::Parse { .. })));
    }

    #[test]
    fn property_encoding_tightens_bounds_and_adds_rows() {
        let file = write_temp(&small_nnet_text());
        let net = parse_nnet(file.path()).unwrap();
        let prop = write_temp("x0 >= -0.5\n2y0 <= 3\n");
        let spec = parse_property(prop.path()).unwrap();
        let f = encode_property(&net, &spec).unwrap();
        assert_eq!(f.bounds.lower(f.inputs[0]), -0.5);
        assert_eq!(f.bounds.upper(f.outputs[0]), 1.5);

        let prop = write_temp("+y0 -y1 <= 0\n");
        let spec = parse_property(prop.path()).unwrap();
        let err = encode_property(&net, &spec).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn normalization_folding_preserves_semantics() {
        let file = write_temp(&small_nnet_text());
        let mut net = parse_nnet(file.path()).unwrap();
        net.normalization = Some(Normalization {
            input_means: vec![0.5, -0.25],
            input_ranges: vec![2.0, 4.0],
            output_mean: 1.0,
            output_range: 3.0,
        });
        let folded = apply_normalization(&net).unwrap();
        assert!(folded.normalization.is_none());
        for raw in [[0.0, 0.0], [1.0, -1.0], [0.3, 0.7]] {
            let normalized: Vec<f64> = raw
                .iter()
                .zip([0.5, -0.25])
                .zip([2.0, 4.0])
                .map(|((x, m), r)| (x - m) / r)
                .collect();
            let manual = evaluate(&net, &normalized).unwrap()[0] * 3.0 + 1.0;
            let direct = evaluate(&folded, &raw).unwrap()[0];
            assert!((manual - direct).abs() < 1e-9, "raw {raw:?}: {manual} vs {direct}");
        }
    }
}
