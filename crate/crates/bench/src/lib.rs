//! Deterministic fixture generators for the benchmark suite: seeded random
//! LPs and ReLU-network verification formulas of controlled size.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use relu_snc::ingest::{encode_network, evaluate, Network};
use relu_snc::vnn::{LinearConstraint, Relation, Variable, VnnFormula};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random LP with `vars` variables and `rows` constraints: integer
/// coefficients in [-5, 5], a mix of finite and infinite bounds.
pub fn random_lp(rng: &mut ChaCha8Rng, vars: usize, rows: usize) -> VnnFormula {
    let mut f = VnnFormula::new(vars);
    for v in 0..vars {
        if rng.gen_bool(0.7) {
            f.bounds.tighten_lower(Variable(v), rng.gen_range(-5..=0) as f64);
        }
        if rng.gen_bool(0.7) {
            f.bounds.tighten_upper(Variable(v), rng.gen_range(0..=5) as f64);
        }
    }
    for _ in 0..rows {
        let mut terms = Vec::new();
        for v in 0..vars {
            let c = rng.gen_range(-5..=5);
            if c != 0 {
                terms.push((Variable(v), c as f64));
            }
        }
        if terms.is_empty() {
            terms.push((Variable(rng.gen_range(0..vars)), 1.0));
        }
        let relation = match rng.gen_range(0..4) {
            0 => Relation::Eq,
            1 => Relation::GreaterEq,
            _ => Relation::LessEq,
        };
        f.add_linear(LinearConstraint::new(terms, relation, rng.gen_range(-10..=10) as f64));
    }
    f
}

/// A fully-connected network with the given hidden layout, integer weights
/// in [-3, 3], and inputs boxed to [-2, 2].
pub fn layered_network(rng: &mut ChaCha8Rng, n_in: usize, hidden: &[usize], n_out: usize) -> Network {
    let mut sizes = vec![n_in];
    sizes.extend_from_slice(hidden);
    sizes.push(n_out);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for layer in 1..sizes.len() {
        let (rows, cols) = (sizes[layer], sizes[layer - 1]);
        weights.push(
            (0..rows)
                .map(|_| (0..cols).map(|_| rng.gen_range(-3..=3) as f64).collect())
                .collect::<Vec<Vec<f64>>>(),
        );
        biases.push((0..rows).map(|_| rng.gen_range(-2..=2) as f64).collect());
    }
    Network {
        layer_sizes: sizes,
        weights,
        biases,
        input_mins: vec![-2.0; n_in],
        input_maxs: vec![2.0; n_in],
        normalization: None,
    }
}

/// Encodes `net` and conjoins an output threshold `margin` above the best
/// output seen across a few sampled box points, so the query is neither
/// trivially satisfiable nor empty.
pub fn threshold_query(rng: &mut ChaCha8Rng, net: &Network, margin: f64) -> VnnFormula {
    let mut f = encode_network(net);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..8 {
        let x: Vec<f64> = (0..net.num_inputs()).map(|_| rng.gen_range(-2.0..=2.0)).collect();
        let y = evaluate(net, &x).expect("sampled point evaluates");
        best = best.max(y[0]);
    }
    f.add_linear(LinearConstraint::new([(f.outputs[0], 1.0)], Relation::GreaterEq, best + margin));
    f
}

/// The standard benchmark instance set: one formula per (hidden layout,
/// margin) pair, deterministic in `seed`.
pub fn instance_suite(seed: u64) -> Vec<(String, VnnFormula)> {
    let mut rng = rng(seed);
    let mut out = Vec::new();
    for (name, hidden) in [
        ("small-2x3", vec![3usize, 3]),
        ("medium-2x6", vec![6, 6]),
        ("deep-3x4", vec![4, 4, 4]),
    ] {
        let net = layered_network(&mut rng, 3, &hidden, 1);
        // A high threshold biases toward unsatisfiable (full-search) queries.
        let formula = threshold_query(&mut rng, &net, 2.0);
        out.push((name.to_string(), formula));
    }
    out
}
