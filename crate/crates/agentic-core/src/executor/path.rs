//! Critical-path analysis over plan DAGs.

use super::{NodeId, PlanDAG};

/// Longest root-to-leaf path by summed node latencies.
///
/// Returns the duration and the realizing path; among equal-duration paths
/// the lexicographically smallest id sequence wins.
pub fn critical_path(dag: &PlanDAG) -> (u64, Vec<NodeId>) {
    // Longest-path DP over the topological order, keeping the full best
    // path per node. Comparing predecessor paths lexicographically yields
    // the lexicographically smallest maximal path overall, because two
    // candidate paths to the same node differ exactly in their prefixes.
    let mut best: std::collections::BTreeMap<&NodeId, (u64, Vec<NodeId>)> =
        std::collections::BTreeMap::new();
    for id in dag.topo_order() {
        let node = dag.node(id);
        let mut choice: Option<(u64, Vec<NodeId>)> = None;
        if node.deps.is_empty() {
            choice = Some((node.latency_ms, vec![id.clone()]));
        } else {
            for dep in &node.deps {
                let (dep_dur, dep_path) = &best[dep];
                let cand_dur = dep_dur + node.latency_ms;
                let mut cand_path = dep_path.clone();
                cand_path.push(id.clone());
                let replace = match &choice {
                    None => true,
                    Some((cur_dur, cur_path)) => {
                        cand_dur > *cur_dur || (cand_dur == *cur_dur && &cand_path < cur_path)
                    }
                };
                if replace {
                    choice = Some((cand_dur, cand_path));
                }
            }
        }
        best.insert(id, choice.expect("every node has a path"));
    }

    let mut result: Option<(u64, Vec<NodeId>)> = None;
    for leaf in dag.leaves() {
        let (dur, path) = &best[leaf];
        let replace = match &result {
            None => true,
            Some((cur_dur, cur_path)) => dur > cur_dur || (dur == cur_dur && path < cur_path),
        };
        if replace {
            result = Some((*dur, path.clone()));
        }
    }
    result.expect("DAG is nonempty")
}

/// Exhaustive path enumeration; the test oracle for [`critical_path`].
#[doc(hidden)]
pub fn critical_path_bruteforce(dag: &PlanDAG) -> (u64, Vec<NodeId>) {
    fn extend(
        dag: &PlanDAG,
        id: &NodeId,
        dur: u64,
        path: &mut Vec<NodeId>,
        best: &mut Option<(u64, Vec<NodeId>)>,
    ) {
        let dur = dur + dag.node(id).latency_ms;
        path.push(id.clone());
        let dependents = dag.dependents(id);
        if dependents.is_empty() {
            let replace = match best {
                None => true,
                Some((b, bp)) => dur > *b || (dur == *b && &*path < bp),
            };
            if replace {
                *best = Some((dur, path.clone()));
            }
        } else {
            for next in dependents {
                extend(dag, next, dur, path, best);
            }
        }
        path.pop();
    }

    let mut best = None;
    for root in dag.roots() {
        extend(dag, root, 0, &mut Vec::new(), &mut best);
    }
    best.expect("DAG is nonempty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::{build_dag, PlanNode};

    #[test]
    fn chain_sums_latencies() {
        let dag = build_dag(vec![
            PlanNode::reason("a", &[], "x", 10),
            PlanNode::reason("b", &["a"], "x", 20),
            PlanNode::reason("c", &["b"], "x", 30),
        ])
        .unwrap();
        let (dur, path) = critical_path(&dag);
        assert_eq!(dur, 60);
        assert_eq!(path, ["a", "b", "c"]);
    }

    #[test]
    fn diamond_takes_the_slow_arm() {
        // A(10) -> {B(20), C(50)} -> D(5): 65 via C, not 35 via B.
        let dag = build_dag(vec![
            PlanNode::reason("A", &[], "x", 10),
            PlanNode::reason("B", &["A"], "x", 20),
            PlanNode::reason("C", &["A"], "x", 50),
            PlanNode::reason("D", &["B", "C"], "x", 5),
        ])
        .unwrap();
        let (dur, path) = critical_path(&dag);
        assert_eq!(dur, 65);
        assert_eq!(path, ["A", "C", "D"]);
    }

    #[test]
    fn parallel_roots_reduce_to_max() {
        let latencies = [13u64, 41, 7, 29];
        let mut plan: Vec<PlanNode> = latencies
            .iter()
            .enumerate()
            .map(|(i, &l)| PlanNode::reason(&format!("r{i}"), &[], "x", l))
            .collect();
        plan.push(PlanNode::reason("sink", &["r0", "r1", "r2", "r3"], "x", 0));
        let dag = build_dag(plan).unwrap();
        let (dur, path) = critical_path(&dag);
        assert_eq!(dur, 41);
        assert_eq!(path, ["r1", "sink"]);
    }

    #[test]
    fn ties_break_lexicographically() {
        let dag = build_dag(vec![
            PlanNode::reason("a", &[], "x", 10),
            PlanNode::reason("b", &[], "x", 10),
        ])
        .unwrap();
        let (dur, path) = critical_path(&dag);
        assert_eq!(dur, 10);
        assert_eq!(path, ["a"]);
    }

    #[test]
    fn matches_bruteforce_on_random_dags() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x0dd);
        for _ in 0..200 {
            let n = rng.random_range(1..=10usize);
            let mut plan = Vec::new();
            for i in 0..n {
                let mut deps = Vec::new();
                for j in 0..i {
                    if rng.random_bool(0.35) {
                        deps.push(format!("n{j}"));
                    }
                }
                let deps_ref: Vec<&str> = deps.iter().map(String::as_str).collect();
                plan.push(PlanNode::reason(
                    &format!("n{i}"),
                    &deps_ref,
                    "x",
                    rng.random_range(0..100u64),
                ));
            }
            let dag = build_dag(plan).unwrap();
            assert_eq!(critical_path(&dag), critical_path_bruteforce(&dag));
        }
    }
}
