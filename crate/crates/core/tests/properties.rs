use std::collections::{BTreeSet, HashMap};

use bnavail::compiler::{compile, CompileOptions, Compiler, GateMode};
use bnavail::gates::{
    and_cpd, expand_scalable, kofn_cpd, noisy_and_cpd, or_cpd, weighted_vote_cpd, Cpd, GateKind,
    GateSpec, Rule, F, T,
};
use bnavail::inference::{
    availability, exact_distribution, forward_counts, split_deterministic, Method,
    DEFAULT_FACTOR_LIMIT,
};
use bnavail::oracle::{enumerate_availability, Oracle};
use bnavail::scenarios::{random_model, RandomModelConfig};
use bnavail::{parse_model, to_json, BayesNet, ComponentKind, QuorumSpec};
use proptest::prelude::*;

fn gate() -> impl Strategy<Value = GateSpec> {
    (1usize..=12).prop_flat_map(|n| {
        prop_oneof![
            Just(GateSpec::new(GateKind::And, n)),
            Just(GateSpec::new(GateKind::Or, n)),
            (1..=n).prop_map(move |k| GateSpec::new(GateKind::KOutOfN(k), n)),
            (prop::collection::vec(1u64..=4, n), -2i64..=20).prop_map(move |(votes, residual)| {
                GateSpec::new(GateKind::Weighted { votes, residual }, n)
            }),
        ]
    })
}

/// State of the chain terminal for one parent assignment.
fn chain_output(gate: &GateSpec, bits: u64) -> usize {
    let parents: Vec<String> = (0..gate.arity).map(|i| format!("p{i}")).collect();
    let sub = expand_scalable(gate, &parents, "out").unwrap();
    let mut state: HashMap<String, usize> = parents
        .iter()
        .enumerate()
        .map(|(i, p)| (p.clone(), ((bits >> i) & 1) as usize))
        .collect();
    for node in &sub.nodes {
        let ps: Vec<usize> = node.parents.iter().map(|p| state[p]).collect();
        let s = node.cpd.eval(&ps);
        state.insert(node.id.clone(), s);
    }
    state[&sub.terminal]
}

fn columns_sum_to_one(cpd: &Cpd) -> bool {
    let cols = cpd.columns() as usize;
    (0..cols).all(|c| {
        let ps = cpd.column_states(c);
        let total: f64 = (0..cpd.card()).map(|s| cpd.prob(s, &ps)).sum();
        (total - 1.0).abs() <= 1e-12
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dense_gates_are_column_stochastic(n in 1usize..=8, k in 1usize..=8, q in 0.0f64..=1.0, votes in prop::collection::vec(1u64..=3, 1..=8), t in 1u64..=12, own in 0u64..=3) {
        prop_assert!(columns_sum_to_one(&and_cpd(n).unwrap()));
        prop_assert!(columns_sum_to_one(&or_cpd(n).unwrap()));
        prop_assert!(columns_sum_to_one(&kofn_cpd(k.min(n), n).unwrap()));
        prop_assert!(columns_sum_to_one(&noisy_and_cpd(q).unwrap()));
        prop_assert!(columns_sum_to_one(&weighted_vote_cpd(&votes, own, t).unwrap()));
    }

    #[test]
    fn scalable_chain_matches_dense_gate(g in gate(), bits in prop::collection::vec(any::<u64>(), 16)) {
        let dense = g.dense().unwrap();
        for b in bits {
            let b = b & ((1u64 << g.arity) - 1);
            let ps: Vec<usize> = (0..g.arity).map(|i| ((b >> i) & 1) as usize).collect();
            prop_assert_eq!(chain_output(&g, b), dense.eval(&ps), "{:?} at {:?}", g, ps);
        }
    }

    #[test]
    fn counting_chain_state_is_capped(n in 2usize..=12, k in 1usize..=12) {
        let k = k.min(n);
        let parents: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
        let sub = expand_scalable(&GateSpec::new(GateKind::KOutOfN(k), n), &parents, "out").unwrap();
        prop_assert_eq!(sub.nodes.len(), n - 1);
        for node in &sub.nodes {
            prop_assert!(node.cpd.card() <= k + 1);
            prop_assert_eq!(node.parents.len(), 2);
        }
    }

    #[test]
    fn documents_round_trip(seed in 0u64..10_000) {
        let m = random_model(seed, &RandomModelConfig::default());
        let json = to_json(&m).unwrap();
        prop_assert_eq!(parse_model(&json).unwrap(), m);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn compiled_networks_are_acyclic_and_complete(seed in 0u64..100_000, scalable in any::<bool>()) {
        let m = random_model(seed, &RandomModelConfig::default());
        let mode = if scalable { GateMode::Scalable } else { GateMode::Dense };
        let c = compile(&m, &CompileOptions::with_mode(mode)).unwrap();
        prop_assert!(c.net.check_acyclic());
        prop_assert!(c.net.check_complete().is_ok());
        prop_assert_eq!(&c.net.node(c.net.service().unwrap()).id, "S");
    }

    #[test]
    fn route_nodes_are_shared(seed in 0u64..100_000) {
        let m = random_model(seed, &RandomModelConfig::default());
        let mut c = Compiler::new(&m, CompileOptions::default());
        c.create_fault_graph().unwrap();
        let g = m.gateways[0].as_str();
        let host = m.deployment.values().next().unwrap().as_str();
        let x = c.component_node(g).unwrap();
        let y = c.component_node(host).unwrap();
        c.create_channel(g, host, x, y, "first").unwrap();
        let before = c.route_node_count();
        c.create_channel(g, host, x, y, "second").unwrap();
        c.create_channel(host, g, y, x, "reverse").unwrap();
        prop_assert_eq!(c.route_node_count(), before);
        let net = c.net();
        let mut seen = BTreeSet::new();
        for node in net.nodes().iter().filter(|n| n.id.starts_with("route:")) {
            let mut ps: Vec<usize> = node.parents.iter().map(|p| p.0).collect();
            ps.sort_unstable();
            prop_assert!(seen.insert(ps), "duplicate route {}", node.id);
        }
    }

    #[test]
    fn raising_a_fault_probability_never_raises_availability(seed in 0u64..100_000, pick in any::<prop::sample::Index>(), bump in 0.05f64..0.5) {
        let cfg = RandomModelConfig { max_probabilistic: 10, ..Default::default() };
        let m = random_model(seed, &cfg);
        let i = pick.index(m.components.len());
        let mut worse = m.clone();
        worse.components[i].fault_prob = (m.components[i].fault_prob + bump).min(1.0);
        let exact = |m: &bnavail::SystemModel| {
            let c = compile(m, &CompileOptions::default()).unwrap();
            availability(&c.net, Method::exact()).unwrap().availability
        };
        prop_assert!(exact(&worse) <= exact(&m) + 1e-12);
        prop_assert!(enumerate_availability(&worse).unwrap() <= enumerate_availability(&m).unwrap() + 1e-12);
    }

    #[test]
    fn service_is_monotone_in_component_state(seed in 0u64..100_000, bits in any::<u64>(), flip in any::<prop::sample::Index>()) {
        let m = random_model(seed, &RandomModelConfig::default());
        let o = Oracle::new(&m).unwrap();
        let n = m.components.len();
        let failed: Vec<bool> = (0..n).map(|i| (bits >> (i % 64)) & 1 == 1).collect();
        let mut repaired = failed.clone();
        repaired[flip.index(n)] = false;
        prop_assert!(!o.service_up(&failed) || o.service_up(&repaired));
    }

    #[test]
    fn unrolled_network_has_the_same_marginal(seed in 0u64..100_000, replicated in any::<bool>()) {
        let cfg = RandomModelConfig { replicated: Some(replicated), ..Default::default() };
        let m = random_model(seed, &cfg);
        let c = compile(&m, &CompileOptions::with_mode(GateMode::Scalable)).unwrap();
        let s = c.net.service().unwrap();
        let want = exact_distribution(&c.net, s, DEFAULT_FACTOR_LIMIT).unwrap();
        let (split, q) = split_deterministic(&c.net, s, 1_000_000).unwrap().unwrap();
        prop_assert!(split.check_acyclic());
        let got = exact_distribution(&split, q, DEFAULT_FACTOR_LIMIT).unwrap();
        prop_assert!((got[T] - want[T]).abs() <= 1e-12, "{} vs {}", got[T], want[T]);
    }
}

#[test]
fn deterministic_network_sampling_is_exact() {
    let mut net = BayesNet::new();
    let a = net
        .add_node_with("a", &[], Cpd::prior(0.0).unwrap())
        .unwrap();
    let b = net
        .add_node_with("b", &[], Cpd::prior(1.0).unwrap())
        .unwrap();
    let c = net
        .add_node_with("c", &[a, b], and_cpd(2).unwrap())
        .unwrap();
    let d = net.add_node_with("d", &[a, b], or_cpd(2).unwrap()).unwrap();
    for seed in 0..5 {
        assert_eq!(forward_counts(&net, c, 1000, seed, 1).unwrap()[T], 1000);
        assert_eq!(forward_counts(&net, d, 1000, seed, 1).unwrap()[F], 1000);
    }
}

#[test]
fn single_root_marginal() {
    let mut net = BayesNet::new();
    let a = net
        .add_node_with("a", &[], Cpd::prior(0.1).unwrap())
        .unwrap();
    let p = exact_distribution(&net, a, DEFAULT_FACTOR_LIMIT).unwrap();
    assert!((p[F] - 0.1).abs() <= 1e-15 && (p[F] + p[T] - 1.0).abs() <= 1e-12);
    let b = net
        .add_node_with("b", &[a], noisy_and_cpd(0.0).unwrap())
        .unwrap();
    let p = exact_distribution(&net, b, DEFAULT_FACTOR_LIMIT).unwrap();
    assert!((p[F] - 0.1).abs() <= 1e-15);
}

#[test]
fn sampling_estimate_of_a_fair_coin() {
    let mut net = BayesNet::new();
    let a = net
        .add_node_with("a", &[], Cpd::prior(0.5).unwrap())
        .unwrap();
    let counts = forward_counts(&net, a, 1_000_000, 17, 1).unwrap();
    assert!((counts[F] as f64 / 1e6 - 0.5).abs() <= 0.0016);
}

/// With a perfect, fully connected network the replicated service is up
/// exactly when a quorum of instances is up.
#[test]
fn perfect_network_reduces_to_quorum_probability() {
    use bnavail::{Component, FaultDependencyGraph, NetworkGraph, SystemModel};
    for n in 2..=6usize {
        let hosts: Vec<String> = (1..=n).map(|i| format!("H{i}")).collect();
        let p: Vec<f64> = (0..n).map(|i| 0.05 + 0.03 * i as f64).collect();
        let mut components = vec![Component::new("G", ComponentKind::Network, 0.0)];
        for (h, q) in hosts.iter().zip(&p) {
            components.push(Component::new(h.clone(), ComponentKind::Host, *q));
        }
        for i in 1..=n {
            components.push(Component::new(
                format!("I{i}"),
                ComponentKind::Instance,
                0.0,
            ));
        }
        let mut nodes = vec!["G".to_string()];
        nodes.extend(hosts.iter().cloned());
        let mut edges = Vec::new();
        for (i, a) in nodes.iter().enumerate() {
            for b in &nodes[i + 1..] {
                edges.push((a.clone(), b.clone()));
            }
        }
        for quorum in [
            QuorumSpec::majority(n),
            QuorumSpec::read_one(n),
            QuorumSpec::write_all(n),
        ] {
            let m = SystemModel {
                components: components.clone(),
                quorum: quorum.clone(),
                fault_graph: FaultDependencyGraph::default(),
                network: NetworkGraph {
                    nodes: nodes.clone(),
                    edges: edges.clone(),
                },
                deployment: (1..=n)
                    .map(|i| (format!("I{i}"), format!("H{i}")))
                    .collect(),
                gateways: vec!["G".into()],
                replicated: true,
            };
            let index = m.quorum_index();
            let mut want = 0.0;
            for mask in 0u32..(1 << n) {
                let up: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
                if index.holds(&up) {
                    want += (0..n)
                        .map(|i| if up[i] { 1.0 - p[i] } else { p[i] })
                        .product::<f64>();
                }
            }
            let c = compile(&m, &CompileOptions::default()).unwrap();
            let got = availability(&c.net, Method::exact()).unwrap().availability;
            assert!(
                (got - want).abs() <= 1e-9,
                "n={n} {quorum:?}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn rule_kinds_in_compiled_networks() {
    let m = random_model(3, &RandomModelConfig::default());
    let c = compile(&m, &CompileOptions::with_mode(GateMode::Scalable)).unwrap();
    for node in c.net.nodes() {
        if node.id.starts_with("aux:") {
            assert!(matches!(
                node.cpd.as_ref().unwrap().rule(),
                Rule::And | Rule::Or | Rule::Count(_)
            ));
        }
    }
}
