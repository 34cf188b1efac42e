//! Brute-force reference tree edit distance.
//!
//! Exhaustive recursion over the textbook forest-distance definition, memoized
//! on forest contents. Exponential in the worst case: only suitable for the
//! tiny trees the test suites throw at it. Deliberately kept independent of
//! the Zhang-Shasha implementation it cross-checks.

use std::collections::HashMap;

use super::teds::TreeNode;
use crate::prompting::PromptRng;

struct Flat<'a> {
    nodes: Vec<&'a TreeNode>,
    children: Vec<Vec<usize>>,
}

fn flatten<'a>(root: &'a TreeNode, flat: &mut Flat<'a>) -> usize {
    let id = flat.nodes.len();
    flat.nodes.push(root);
    flat.children.push(Vec::new());
    for child in &root.children {
        let c = flatten(child, flat);
        flat.children[id].push(c);
    }
    id
}

fn subtree_size(flat: &Flat<'_>, id: usize) -> usize {
    1 + flat.children[id]
        .iter()
        .map(|&c| subtree_size(flat, c))
        .sum::<usize>()
}

/// Exhaustive ordered tree edit distance with unit insert/delete cost and a
/// caller-supplied substitution cost.
pub fn oracle_tree_edit_distance(
    t1: &TreeNode,
    t2: &TreeNode,
    sub_cost: impl Fn(&TreeNode, &TreeNode) -> f64,
) -> f64 {
    let mut f1 = Flat {
        nodes: Vec::new(),
        children: Vec::new(),
    };
    let mut f2 = Flat {
        nodes: Vec::new(),
        children: Vec::new(),
    };
    let r1 = flatten(t1, &mut f1);
    let r2 = flatten(t2, &mut f2);
    let mut memo: HashMap<(Vec<usize>, Vec<usize>), f64> = HashMap::new();
    forest_distance(&f1, &f2, &[r1], &[r2], &sub_cost, &mut memo)
}

fn forest_distance(
    f1: &Flat<'_>,
    f2: &Flat<'_>,
    roots1: &[usize],
    roots2: &[usize],
    sub_cost: &impl Fn(&TreeNode, &TreeNode) -> f64,
    memo: &mut HashMap<(Vec<usize>, Vec<usize>), f64>,
) -> f64 {
    if roots1.is_empty() {
        return roots2.iter().map(|&t| subtree_size(f2, t)).sum::<usize>() as f64;
    }
    if roots2.is_empty() {
        return roots1.iter().map(|&t| subtree_size(f1, t)).sum::<usize>() as f64;
    }
    let key = (roots1.to_vec(), roots2.to_vec());
    if let Some(&d) = memo.get(&key) {
        return d;
    }
    let (t1, rest1) = (roots1[0], &roots1[1..]);
    let (t2, rest2) = (roots2[0], &roots2[1..]);

    // delete the first root of the left forest
    let mut left: Vec<usize> = f1.children[t1].clone();
    left.extend_from_slice(rest1);
    let del = 1.0 + forest_distance(f1, f2, &left, roots2, sub_cost, memo);

    // insert the first root of the right forest
    let mut right: Vec<usize> = f2.children[t2].clone();
    right.extend_from_slice(rest2);
    let ins = 1.0 + forest_distance(f1, f2, roots1, &right, sub_cost, memo);

    // match the two roots
    let matched = sub_cost(f1.nodes[t1], f2.nodes[t2])
        + forest_distance(f1, f2, &f1.children[t1], &f2.children[t2], sub_cost, memo)
        + forest_distance(f1, f2, rest1, rest2, sub_cost, memo);

    let d = del.min(ins).min(matched);
    memo.insert(key, d);
    d
}

/// Generate a random ordered labeled tree with at most `max_nodes` nodes.
/// Labels come from a small table alphabet; `td` nodes get short contents.
pub fn random_tree(rng: &mut PromptRng, max_nodes: usize) -> TreeNode {
    let n = rng.range_usize(1, max_nodes);
    let mut nodes: Vec<TreeNode> = Vec::with_capacity(n);
    let mut parents: Vec<Option<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        let label = match rng.range_u32(0, 3) {
            0 => "table",
            1 => "tr",
            2 => "td",
            _ => "x",
        };
        let mut node = TreeNode::new(label);
        if label == "td" {
            let len = rng.range_usize(0, 2);
            let content: String = (0..len)
                .map(|_| (b'a' + rng.range_u32(0, 2) as u8) as char)
                .collect();
            node = node.with_content(content);
        }
        parents.push(if i == 0 {
            None
        } else {
            Some(rng.range_usize(0, i - 1))
        });
        nodes.push(node);
    }
    // attach children to parents back to front so each node is complete
    // before its parent consumes it
    for i in (1..n).rev() {
        let node = nodes[i].clone();
        let p = parents[i].expect("non-root");
        nodes[p].children.insert(0, node);
    }
    nodes.into_iter().next().expect("root")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_vs_chain() {
        let chain = TreeNode::new("a")
            .with_children(vec![TreeNode::new("b").with_children(vec![TreeNode::new("c")])]);
        let single = TreeNode::new("a");
        let d = oracle_tree_edit_distance(&chain, &single, |a, b| f64::from(a.label != b.label));
        assert_eq!(d, 2.0);
    }

    #[test]
    fn relabel_only() {
        let a = TreeNode::new("x").with_children(vec![TreeNode::new("y")]);
        let b = TreeNode::new("x").with_children(vec![TreeNode::new("z")]);
        let d = oracle_tree_edit_distance(&a, &b, |a, b| f64::from(a.label != b.label));
        assert_eq!(d, 1.0);
    }

    #[test]
    fn identity_is_zero() {
        let mut rng = PromptRng::new(5);
        for _ in 0..20 {
            let t = random_tree(&mut rng, 8);
            let d = oracle_tree_edit_distance(&t, &t, |a, b| f64::from(a.label != b.label));
            assert_eq!(d, 0.0);
        }
    }
}
