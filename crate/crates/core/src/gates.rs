//! Conditional probability distributions emitted by the compiler.
//!
//! Every binary node uses state [`F`] (faulty) = 0 and [`T`] (working) = 1.
//! Gate rules follow fault-tree semantics: an AND gate is faulty when all of
//! its inputs are faulty, an OR gate when any input is, a k-out-of-n gate
//! when at least `k` inputs are.
//!
//! Parent combinations are indexed mixed-radix with the last parent varying
//! fastest; a dense table stores `columns() * card()` entries, one child
//! distribution per column.

use crate::error::{Error, Result};

pub const F: usize = 0;
pub const T: usize = 1;

/// One link of a counting chain.
///
/// Parents are `[prev, input]`. `prev` is either the previous accumulator
/// (cardinality `cap + 1`) or, at the head of the chain, the first gate
/// input contributing `prev_weight` when it is in state `counted`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountStep {
    pub counted: usize,
    pub prev_weight: Option<u64>,
    pub weight: u64,
    pub cap: u64,
    /// Terminal links are binary: state `emit` once the count reaches `cap`.
    pub emit: Option<usize>,
}

impl CountStep {
    fn total(&self, prev: usize, input: usize) -> u64 {
        let base = match self.prev_weight {
            Some(w) => {
                if prev == self.counted {
                    w
                } else {
                    0
                }
            }
            None => prev as u64,
        };
        let add = if input == self.counted {
            self.weight
        } else {
            0
        };
        (base + add).min(self.cap)
    }

    fn output(&self, prev: usize, input: usize) -> usize {
        let total = self.total(prev, input);
        match self.emit {
            Some(s) => {
                if total >= self.cap {
                    s
                } else {
                    1 - s
                }
            }
            None => total as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rule {
    /// Root node with `P(F) = fault`.
    Prior {
        fault: f64,
    },
    And,
    Or,
    KOutOfN {
        k: usize,
    },
    /// Single parent: faulty if the parent is, else faulty with probability `q`.
    NoisyAnd {
        q: f64,
    },
    /// Working iff the votes behind working parents reach `residual`.
    WeightedVote {
        votes: Vec<u64>,
        residual: i64,
    },
    /// Working iff some quorum set (instance bitmask) is covered by `base`
    /// plus the bits of working parents.
    PathSets {
        sets: Vec<u64>,
        parent_bits: Vec<u64>,
        base: u64,
    },
    Count(CountStep),
    Table(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cpd {
    card: usize,
    parent_cards: Vec<usize>,
    rule: Rule,
}

fn binary_parents(n: usize) -> Vec<usize> {
    vec![2; n]
}

impl Cpd {
    pub fn card(&self) -> usize {
        self.card
    }

    pub fn parent_cards(&self) -> &[usize] {
        &self.parent_cards
    }

    pub fn arity(&self) -> usize {
        self.parent_cards.len()
    }

    pub fn rule(&self) -> &Rule {
        &self.rule
    }

    /// Number of parent combinations.
    pub fn columns(&self) -> f64 {
        self.parent_cards.iter().map(|&c| c as f64).product()
    }

    pub fn prior(fault: f64) -> Result<Cpd> {
        if !(0.0..=1.0).contains(&fault) {
            return Err(Error::InvalidGate(format!(
                "prior fault probability {fault} outside [0,1]"
            )));
        }
        Ok(Cpd {
            card: 2,
            parent_cards: Vec::new(),
            rule: Rule::Prior { fault },
        })
    }

    /// Dense table over arbitrary cardinalities. Each column must sum to one.
    pub fn table(card: usize, parent_cards: Vec<usize>, values: Vec<f64>) -> Result<Cpd> {
        let cols: usize = parent_cards.iter().product();
        if values.len() != cols * card {
            return Err(Error::InvalidGate(format!(
                "table has {} entries, expected {}",
                values.len(),
                cols * card
            )));
        }
        for (c, col) in values.chunks(card).enumerate() {
            let s: f64 = col.iter().sum();
            if (s - 1.0).abs() > 1e-9 || col.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidGate(format!(
                    "table column {c} is not a distribution"
                )));
            }
        }
        Ok(Cpd {
            card,
            parent_cards,
            rule: Rule::Table(values),
        })
    }

    pub(crate) fn path_sets(sets: Vec<u64>, parent_bits: Vec<u64>, base: u64) -> Cpd {
        Cpd {
            card: 2,
            parent_cards: binary_parents(parent_bits.len()),
            rule: Rule::PathSets {
                sets,
                parent_bits,
                base,
            },
        }
    }

    pub fn count_step(step: CountStep) -> Cpd {
        let prev_card = match step.prev_weight {
            Some(_) => 2,
            None => step.cap as usize + 1,
        };
        let card = match step.emit {
            Some(_) => 2,
            None => step.cap as usize + 1,
        };
        Cpd {
            card,
            parent_cards: vec![prev_card, 2],
            rule: Rule::Count(step),
        }
    }

    /// Whether the child state is a function of the parent states.
    pub fn is_deterministic(&self) -> bool {
        match &self.rule {
            Rule::Prior { fault } => *fault == 0.0 || *fault == 1.0,
            Rule::NoisyAnd { q } => *q == 0.0 || *q == 1.0,
            Rule::Table(v) => v.iter().all(|&p| p == 0.0 || p == 1.0),
            _ => true,
        }
    }

    /// `P(child = F | parents)` for binary children.
    ///
    /// Hot path of sampling; avoids building the whole column.
    pub fn fault_prob(&self, parents: &[usize]) -> f64 {
        debug_assert_eq!(self.card, 2);
        match &self.rule {
            Rule::Prior { fault } => *fault,
            Rule::NoisyAnd { q } => {
                if parents[0] == F {
                    1.0
                } else {
                    *q
                }
            }
            Rule::Table(v) => v[self.column_index(parents) * 2 + F],
            _ => {
                if self.eval(parents) == F {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Child state of a deterministic rule. Panics on probabilistic rules.
    pub fn eval(&self, parents: &[usize]) -> usize {
        let bool_state = |b: bool| if b { F } else { T };
        match &self.rule {
            Rule::And => bool_state(parents.iter().all(|&p| p == F)),
            Rule::Or => bool_state(parents.contains(&F)),
            Rule::KOutOfN { k } => bool_state(parents.iter().filter(|&&p| p == F).count() >= *k),
            Rule::WeightedVote { votes, residual } => {
                let sum: u64 = votes
                    .iter()
                    .zip(parents)
                    .filter(|(_, &p)| p == T)
                    .map(|(v, _)| *v)
                    .sum();
                if sum as i64 >= *residual {
                    T
                } else {
                    F
                }
            }
            Rule::PathSets {
                sets,
                parent_bits,
                base,
            } => {
                let mut mask = *base;
                for (b, &p) in parent_bits.iter().zip(parents) {
                    if p == T {
                        mask |= b;
                    }
                }
                if sets.iter().any(|s| s & !mask == 0) {
                    T
                } else {
                    F
                }
            }
            Rule::Count(step) => step.output(parents[0], parents[1]),
            Rule::Prior { fault } if *fault == 0.0 || *fault == 1.0 => {
                if *fault == 1.0 {
                    F
                } else {
                    T
                }
            }
            Rule::NoisyAnd { q } if *q == 0.0 || *q == 1.0 => {
                if parents[0] == F || *q == 1.0 {
                    F
                } else {
                    T
                }
            }
            Rule::Table(v) => {
                let col = self.column_index(parents) * self.card;
                (0..self.card)
                    .find(|&s| v[col + s] == 1.0)
                    .expect("eval on a probabilistic table")
            }
            _ => panic!("eval on a probabilistic rule"),
        }
    }

    /// `P(child = state | parents)`.
    pub fn prob(&self, state: usize, parents: &[usize]) -> f64 {
        match &self.rule {
            Rule::Prior { .. } | Rule::NoisyAnd { .. } => {
                let f = self.fault_prob(parents);
                if state == F {
                    f
                } else {
                    1.0 - f
                }
            }
            Rule::Table(v) => v[self.column_index(parents) * self.card + state],
            _ => {
                if self.eval(parents) == state {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn column_index(&self, parents: &[usize]) -> usize {
        parents
            .iter()
            .zip(&self.parent_cards)
            .fold(0, |acc, (&s, &c)| acc * c + s)
    }

    /// Parent states of column `col`.
    pub fn column_states(&self, mut col: usize) -> Vec<usize> {
        let mut states = vec![0; self.parent_cards.len()];
        for (i, &c) in self.parent_cards.iter().enumerate().rev() {
            states[i] = col % c;
            col /= c;
        }
        states
    }

    /// Materialize the full table, `columns() * card()` entries.
    pub fn dense(&self) -> Vec<f64> {
        let cols = self.columns() as usize;
        let mut out = Vec::with_capacity(cols * self.card);
        let mut states = vec![0usize; self.parent_cards.len()];
        for _ in 0..cols {
            for s in 0..self.card {
                out.push(self.prob(s, &states));
            }
            for i in (0..states.len()).rev() {
                states[i] += 1;
                if states[i] < self.parent_cards[i] {
                    break;
                }
                states[i] = 0;
            }
        }
        out
    }

    /// Short human-readable rule name for dumps.
    pub fn describe(&self) -> String {
        match &self.rule {
            Rule::Prior { fault } => format!("prior(q={fault})"),
            Rule::And => "and".into(),
            Rule::Or => "or".into(),
            Rule::KOutOfN { k } => format!("kofn(k={k})"),
            Rule::NoisyAnd { q } => format!("noisy-and(q={q})"),
            Rule::WeightedVote { votes, residual } => {
                format!("weighted(votes={votes:?},residual={residual})")
            }
            Rule::PathSets { sets, .. } => format!("path-sets({})", sets.len()),
            Rule::Count(s) => format!(
                "count(counted={},weight={},cap={}{})",
                if s.counted == F { "F" } else { "T" },
                s.weight,
                s.cap,
                match s.emit {
                    Some(e) => format!(",emit={}", if e == F { "F" } else { "T" }),
                    None => String::new(),
                }
            ),
            Rule::Table(_) => "table".into(),
        }
    }
}

pub fn and_cpd(n: usize) -> Result<Cpd> {
    if n == 0 {
        return Err(Error::InvalidGate(
            "AND gate needs at least one input".into(),
        ));
    }
    Ok(Cpd {
        card: 2,
        parent_cards: binary_parents(n),
        rule: Rule::And,
    })
}

pub fn or_cpd(n: usize) -> Result<Cpd> {
    if n == 0 {
        return Err(Error::InvalidGate(
            "OR gate needs at least one input".into(),
        ));
    }
    Ok(Cpd {
        card: 2,
        parent_cards: binary_parents(n),
        rule: Rule::Or,
    })
}

/// Faulty iff at least `k` of the `n` inputs are faulty.
pub fn kofn_cpd(k: usize, n: usize) -> Result<Cpd> {
    if k < 1 || k > n {
        return Err(Error::InvalidGate(format!(
            "k-out-of-n gate with k={k}, n={n}"
        )));
    }
    Ok(Cpd {
        card: 2,
        parent_cards: binary_parents(n),
        rule: Rule::KOutOfN { k },
    })
}

pub fn noisy_and_cpd(q: f64) -> Result<Cpd> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidGate(format!(
            "intrinsic fault probability {q} outside [0,1]"
        )));
    }
    Ok(Cpd {
        card: 2,
        parent_cards: vec![2],
        rule: Rule::NoisyAnd { q },
    })
}

/// Working iff the votes behind working channel parents reach `threshold - own_votes`.
pub fn weighted_vote_cpd(votes: &[u64], own_votes: u64, threshold: u64) -> Result<Cpd> {
    if threshold < 1 {
        return Err(Error::InvalidGate(
            "weighted vote threshold must be positive".into(),
        ));
    }
    if votes.contains(&0) {
        return Err(Error::InvalidGate(
            "weighted vote with a non-positive vote".into(),
        ));
    }
    Ok(Cpd {
        card: 2,
        parent_cards: binary_parents(votes.len()),
        rule: Rule::WeightedVote {
            votes: votes.to_vec(),
            residual: threshold as i64 - own_votes as i64,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum GateKind {
    And,
    Or,
    KOutOfN(usize),
    NoisyAnd(f64),
    Weighted { votes: Vec<u64>, residual: i64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateSpec {
    pub kind: GateKind,
    pub arity: usize,
}

impl GateSpec {
    pub fn new(kind: GateKind, arity: usize) -> Self {
        GateSpec { kind, arity }
    }

    pub fn dense(&self) -> Result<Cpd> {
        match &self.kind {
            GateKind::And => and_cpd(self.arity),
            GateKind::Or => or_cpd(self.arity),
            GateKind::KOutOfN(k) => kofn_cpd(*k, self.arity),
            GateKind::NoisyAnd(q) => {
                if self.arity != 1 {
                    return Err(Error::InvalidGate(
                        "noisy-AND takes exactly one parent".into(),
                    ));
                }
                noisy_and_cpd(*q)
            }
            GateKind::Weighted { votes, residual } => {
                if votes.len() != self.arity {
                    return Err(Error::InvalidGate(format!(
                        "{} votes for {} inputs",
                        votes.len(),
                        self.arity
                    )));
                }
                if votes.contains(&0) {
                    return Err(Error::InvalidGate(
                        "weighted vote with a non-positive vote".into(),
                    ));
                }
                Ok(Cpd {
                    card: 2,
                    parent_cards: binary_parents(self.arity),
                    rule: Rule::WeightedVote {
                        votes: votes.clone(),
                        residual: *residual,
                    },
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubNode {
    pub id: String,
    pub parents: Vec<String>,
    pub cpd: Cpd,
}

/// Nodes in topological order; the last one is `terminal`.
#[derive(Debug, Clone, PartialEq)]
pub struct Subnetwork {
    pub nodes: Vec<SubNode>,
    pub terminal: String,
}

impl Subnetwork {
    pub fn auxiliary_count(&self) -> usize {
        self.nodes.len()
    }
}

fn aux_id(terminal: &str, j: usize) -> String {
    format!("aux:{terminal}/{j}")
}

/// Decompose a gate into a chain of two-input nodes.
///
/// AND/OR become accumulator chains of `n - 1` binary nodes. k-out-of-n and
/// weighted gates become counting chains whose link `j` holds the count of
/// faulty inputs (or sum of working votes) over the first `j + 1` inputs,
/// capped at the threshold. The terminal node, named `terminal`, has the
/// same conditional distribution given the inputs as the dense gate.
pub fn expand_scalable(gate: &GateSpec, parents: &[String], terminal: &str) -> Result<Subnetwork> {
    if parents.len() != gate.arity {
        return Err(Error::InvalidGate(format!(
            "gate of arity {} given {} parents",
            gate.arity,
            parents.len()
        )));
    }
    let dense = gate.dense()?;
    let n = gate.arity;
    let single = |cpd: Cpd, parents: Vec<String>| Subnetwork {
        nodes: vec![SubNode {
            id: terminal.to_string(),
            parents,
            cpd,
        }],
        terminal: terminal.to_string(),
    };

    if let GateKind::Weighted { residual, .. } = &gate.kind {
        if *residual <= 0 {
            return Ok(single(Cpd::prior(0.0)?, Vec::new()));
        }
    }
    if n <= 1 || matches!(gate.kind, GateKind::NoisyAnd(_)) {
        return Ok(single(dense, parents.to_vec()));
    }

    let mut nodes = Vec::with_capacity(n - 1);
    let id_at = |j: usize| {
        if j == n - 1 {
            terminal.to_string()
        } else {
            aux_id(terminal, j)
        }
    };
    match &gate.kind {
        GateKind::And | GateKind::Or => {
            let link = if gate.kind == GateKind::And {
                and_cpd(2)?
            } else {
                or_cpd(2)?
            };
            for j in 1..n {
                let prev = if j == 1 {
                    parents[0].clone()
                } else {
                    id_at(j - 1)
                };
                nodes.push(SubNode {
                    id: id_at(j),
                    parents: vec![prev, parents[j].clone()],
                    cpd: link.clone(),
                });
            }
        }
        GateKind::KOutOfN(k) => {
            push_count_chain(&mut nodes, parents, &vec![1; n], *k as u64, F, &id_at);
        }
        GateKind::Weighted { votes, residual } => {
            push_count_chain(&mut nodes, parents, votes, *residual as u64, T, &id_at);
        }
        GateKind::NoisyAnd(_) => unreachable!(),
    }
    Ok(Subnetwork {
        nodes,
        terminal: terminal.to_string(),
    })
}

fn push_count_chain(
    nodes: &mut Vec<SubNode>,
    parents: &[String],
    weights: &[u64],
    cap: u64,
    counted: usize,
    id_at: &impl Fn(usize) -> String,
) {
    let n = parents.len();
    for j in 1..n {
        let head = j == 1;
        let step = CountStep {
            counted,
            prev_weight: head.then_some(weights[0]),
            weight: weights[j],
            cap,
            emit: (j == n - 1).then_some(counted),
        };
        let prev = if head {
            parents[0].clone()
        } else {
            id_at(j - 1)
        };
        nodes.push(SubNode {
            id: id_at(j),
            parents: vec![prev, parents[j].clone()],
            cpd: Cpd::count_step(step),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(cpd: &Cpd, parents: &[usize]) -> (f64, f64) {
        (cpd.prob(F, parents), cpd.prob(T, parents))
    }

    #[test]
    fn and_examples() {
        let c = and_cpd(2).unwrap();
        assert_eq!(col(&c, &[F, F]), (1.0, 0.0));
        assert_eq!(col(&c, &[T, F]), (0.0, 1.0));
        let one = and_cpd(1).unwrap();
        assert_eq!(col(&one, &[F]), (1.0, 0.0));
        assert_eq!(col(&one, &[T]), (0.0, 1.0));
        assert!(and_cpd(0).is_err());
    }

    #[test]
    fn or_examples() {
        let c = or_cpd(3).unwrap();
        assert_eq!(col(&c, &[T, T, F]), (1.0, 0.0));
        assert_eq!(col(&c, &[T, T, T]), (0.0, 1.0));
        let one = or_cpd(1).unwrap();
        assert_eq!(col(&one, &[F]), (1.0, 0.0));
        assert_eq!(col(&one, &[T]), (0.0, 1.0));
        assert!(or_cpd(0).is_err());
    }

    #[test]
    fn kofn_examples() {
        let c = kofn_cpd(2, 3).unwrap();
        assert_eq!(col(&c, &[F, F, T]), (1.0, 0.0));
        assert_eq!(col(&c, &[F, T, T]), (0.0, 1.0));
        let all = kofn_cpd(3, 3).unwrap();
        assert_eq!(col(&all, &[F, F, F]), (1.0, 0.0));
        assert!(kofn_cpd(0, 3).is_err());
        assert!(kofn_cpd(4, 3).is_err());
    }

    #[test]
    fn noisy_and_examples() {
        let c = noisy_and_cpd(0.0092).unwrap();
        assert_eq!(c.prob(F, &[T]), 0.0092);
        assert_eq!(c.prob(F, &[F]), 1.0);
        let perfect = noisy_and_cpd(0.0).unwrap();
        assert_eq!(perfect.prob(T, &[T]), 1.0);
        assert!(noisy_and_cpd(1.5).is_err());
        assert!(noisy_and_cpd(-0.1).is_err());
    }

    #[test]
    fn weighted_vote_enumerated() {
        // V=(2,1,1), t=3, node of the 2-vote instance: channels to the two
        // 1-vote instances, residual 1. Working iff any channel works.
        let c = weighted_vote_cpd(&[1, 1], 2, 3).unwrap();
        assert_eq!(c.prob(T, &[T, F]), 1.0);
        assert_eq!(c.prob(T, &[F, T]), 1.0);
        assert_eq!(c.prob(T, &[T, T]), 1.0);
        assert_eq!(c.prob(T, &[F, F]), 0.0);

        // own votes suffice
        let c = weighted_vote_cpd(&[1, 1], 3, 3).unwrap();
        assert_eq!(c.prob(T, &[F, F]), 1.0);
    }

    #[test]
    fn weighted_unit_votes_match_residual_kofn() {
        // V=(1,1,1), t=2, own vote 1: one working channel of two needed,
        // i.e. faulty iff both channels faulty.
        let w = weighted_vote_cpd(&[1, 1], 1, 2).unwrap();
        let k = kofn_cpd(2, 2).unwrap();
        assert_eq!(w.dense(), k.dense());
    }

    #[test]
    fn dense_layout_last_parent_fastest() {
        let c = or_cpd(2).unwrap();
        assert_eq!(c.dense(), vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        assert_eq!(c.column_states(1), vec![0, 1]);
        assert_eq!(c.column_index(&[1, 0]), 2);
    }

    #[test]
    fn scalable_shapes() {
        let ps: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let and = expand_scalable(&GateSpec::new(GateKind::And, 3), &ps, "g").unwrap();
        assert_eq!(and.auxiliary_count(), 2);
        assert!(and.nodes.iter().all(|n| n.cpd.card() == 2));
        assert_eq!(and.nodes.last().unwrap().id, "g");

        let k = expand_scalable(&GateSpec::new(GateKind::KOutOfN(2), 3), &ps, "g").unwrap();
        assert_eq!(k.nodes[0].cpd.card(), 3);
        assert_eq!(k.nodes[1].cpd.card(), 2);

        let one = expand_scalable(&GateSpec::new(GateKind::Or, 1), &ps[..1], "g").unwrap();
        assert_eq!(one.auxiliary_count(), 1);
        assert_eq!(one.nodes[0].parents, vec!["a".to_string()]);
    }

    #[test]
    fn table_validation() {
        assert!(Cpd::table(2, vec![2], vec![0.5, 0.5, 1.0, 0.0]).is_ok());
        assert!(Cpd::table(2, vec![2], vec![0.5, 0.4, 1.0, 0.0]).is_err());
        assert!(Cpd::table(2, vec![2], vec![0.5, 0.5]).is_err());
    }
}
