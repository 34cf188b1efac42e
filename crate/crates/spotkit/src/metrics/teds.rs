//! Tree-edit-distance-based similarity (TEDS / S-TEDS) for table HTML and
//! tree-edit-distance accuracy for entity trees.
//!
//! The tree model uses one node per tag; `<td>` cell content lives on the
//! node itself. Span attributes are folded into the tag label, so a colspan
//! mismatch on otherwise-equal cells costs a full substitution. Insertions
//! and deletions cost 1; substitutions cost 0 for equal tags (with equal
//! contents unless structure-only), 1 for differing tags, and the normalized
//! character edit distance of the contents otherwise.

use thiserror::Error;

use crate::html::{self, HtmlToken};

#[derive(Debug, Error)]
pub enum TedsError {
    #[error("unparseable HTML: {0}")]
    Parse(String),
}

/// One node of an ordered labeled tree compared by TEDS.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub label: String,
    /// Cell text for `<td>` nodes, `None` elsewhere.
    pub content: Option<String>,
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            content: None,
            children: Vec::new(),
        }
    }

    pub fn with_content(mut self, content: impl Into<String>) -> Self {
        self.content = Some(content.into());
        self
    }

    pub fn with_children(mut self, children: Vec<TreeNode>) -> Self {
        self.children = children;
        self
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(TreeNode::size).sum::<usize>()
    }
}

/// Parse an HTML string into the TEDS tree model. Lenient about which tags
/// appear, strict about nesting.
pub fn html_tree(html_text: &str) -> Result<TreeNode, TedsError> {
    let tokens = html::scan(html_text).map_err(|e| TedsError::Parse(e.to_string()))?;
    let mut stack: Vec<TreeNode> = Vec::new();
    let mut roots: Vec<TreeNode> = Vec::new();
    for tok in tokens {
        match tok {
            HtmlToken::Open { name, mut attrs } => {
                let mut label = name.clone();
                // fold span attributes into the label, rowspan first
                attrs.sort_by_key(|(k, _)| match k.as_str() {
                    "rowspan" => 0,
                    "colspan" => 1,
                    _ => 2,
                });
                for (k, v) in &attrs {
                    label.push_str(&format!(" {k}=\"{v}\""));
                }
                let mut node = TreeNode::new(label);
                if name == "td" {
                    node.content = Some(String::new());
                }
                stack.push(node);
            }
            HtmlToken::Close(name) => {
                let node = stack.pop().ok_or_else(|| {
                    TedsError::Parse(format!("close tag </{name}> without open tag"))
                })?;
                if node.label.split(' ').next() != Some(name.as_str()) {
                    return Err(TedsError::Parse(format!(
                        "close tag </{name}> does not match <{}>",
                        node.label
                    )));
                }
                match stack.last_mut() {
                    Some(parent) => parent.children.push(node),
                    None => roots.push(node),
                }
            }
            HtmlToken::Text(text) => match stack.last_mut() {
                Some(node) if node.content.is_some() => {
                    node.content.as_mut().expect("checked").push_str(&text)
                }
                _ if text.trim().is_empty() => {}
                _ => {
                    return Err(TedsError::Parse(format!(
                        "text {text:?} outside a cell"
                    )))
                }
            },
        }
    }
    if !stack.is_empty() {
        return Err(TedsError::Parse(format!(
            "unclosed tag <{}>",
            stack.last().expect("non-empty").label
        )));
    }
    match roots.len() {
        1 => Ok(roots.into_iter().next().expect("one root")),
        n => Err(TedsError::Parse(format!("expected one root, found {n}"))),
    }
}

/// Character-level Levenshtein distance.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Substitution cost used by table TEDS.
fn teds_sub_cost(a: &TreeNode, b: &TreeNode, structure_only: bool) -> f64 {
    if a.label != b.label {
        return 1.0;
    }
    if structure_only {
        return 0.0;
    }
    match (&a.content, &b.content) {
        (Some(ca), Some(cb)) if ca != cb => {
            let max_len = ca.chars().count().max(cb.chars().count());
            if max_len == 0 {
                0.0
            } else {
                levenshtein(ca, cb) as f64 / max_len as f64
            }
        }
        (Some(ca), None) if !ca.is_empty() => 1.0,
        (None, Some(cb)) if !cb.is_empty() => 1.0,
        _ => 0.0,
    }
}

/// Flattened postorder representation for the Zhang-Shasha algorithm.
struct PostOrder<'a> {
    nodes: Vec<&'a TreeNode>,
    /// 1-based postorder index of the leftmost leaf descendant per node.
    lld: Vec<usize>,
    keyroots: Vec<usize>,
}

impl<'a> PostOrder<'a> {
    fn build(root: &'a TreeNode) -> Self {
        let mut nodes = Vec::new();
        let mut lld = Vec::new();
        // returns the 1-based postorder index of the subtree's leftmost leaf
        fn walk<'a>(node: &'a TreeNode, nodes: &mut Vec<&'a TreeNode>, lld: &mut Vec<usize>) -> usize {
            let mut leftmost_leaf = None;
            for child in &node.children {
                let cl = walk(child, nodes, lld);
                leftmost_leaf.get_or_insert(cl);
            }
            nodes.push(node);
            let own = nodes.len(); // 1-based
            let l = leftmost_leaf.unwrap_or(own);
            lld.push(l);
            l
        }
        walk(root, &mut nodes, &mut lld);
        let n = nodes.len();
        // keyroots: nodes with no later node sharing the same leftmost leaf
        let mut keyroots = Vec::new();
        for i in 1..=n {
            if !(i + 1..=n).any(|k| lld[k - 1] == lld[i - 1]) {
                keyroots.push(i);
            }
        }
        Self { nodes, lld, keyroots }
    }
}

/// Ordered tree edit distance (Zhang & Shasha) with unit insert/delete cost
/// and a caller-supplied substitution cost.
pub fn tree_edit_distance(
    t1: &TreeNode,
    t2: &TreeNode,
    sub_cost: impl Fn(&TreeNode, &TreeNode) -> f64,
) -> f64 {
    let p1 = PostOrder::build(t1);
    let p2 = PostOrder::build(t2);
    let (n1, n2) = (p1.nodes.len(), p2.nodes.len());
    let mut td = vec![vec![0.0f64; n2 + 1]; n1 + 1];
    // forest-distance scratch, indexed with a +1 offset so index 0 is the
    // empty forest
    let mut fd = vec![vec![0.0f64; n2 + 2]; n1 + 2];

    for &x in &p1.keyroots {
        for &y in &p2.keyroots {
            let lx = p1.lld[x - 1];
            let ly = p2.lld[y - 1];
            fd[lx - 1][ly - 1] = 0.0;
            for i in lx..=x {
                fd[i][ly - 1] = fd[i - 1][ly - 1] + 1.0;
            }
            for j in ly..=y {
                fd[lx - 1][j] = fd[lx - 1][j - 1] + 1.0;
            }
            for i in lx..=x {
                for j in ly..=y {
                    let del = fd[i - 1][j] + 1.0;
                    let ins = fd[i][j - 1] + 1.0;
                    if p1.lld[i - 1] == lx && p2.lld[j - 1] == ly {
                        let sub = fd[i - 1][j - 1] + sub_cost(p1.nodes[i - 1], p2.nodes[j - 1]);
                        let d = del.min(ins).min(sub);
                        fd[i][j] = d;
                        td[i][j] = d;
                    } else {
                        let split = fd[p1.lld[i - 1] - 1][p2.lld[j - 1] - 1] + td[i][j];
                        fd[i][j] = del.min(ins).min(split);
                    }
                }
            }
        }
    }
    td[n1][n2]
}

/// TEDS score between two table HTML strings.
///
/// `score = 1 - TED / max(|T_gt|, |T_pred|)`, clamped into `[0, 1]`. With
/// `structure_only` the contents are ignored (S-TEDS).
pub fn teds(gt_html: &str, pred_html: &str, structure_only: bool) -> Result<f64, TedsError> {
    let t1 = html_tree(gt_html)?;
    let t2 = html_tree(pred_html)?;
    Ok(teds_trees(&t1, &t2, structure_only))
}

/// TEDS on already-parsed trees.
pub fn teds_trees(t1: &TreeNode, t2: &TreeNode, structure_only: bool) -> f64 {
    let dist = tree_edit_distance(t1, t2, |a, b| teds_sub_cost(a, b, structure_only));
    let denom = t1.size().max(t2.size()) as f64;
    (1.0 - dist / denom).clamp(0.0, 1.0)
}

/// Build the entity tree `root -> entity tag -> value leaf` for one field
/// list, preserving order.
pub fn entity_tree(fields: &[(String, String)]) -> TreeNode {
    TreeNode::new("root").with_children(
        fields
            .iter()
            .map(|(entity, value)| {
                TreeNode::new(entity.clone()).with_children(vec![TreeNode::new(value.clone())])
            })
            .collect(),
    )
}

/// Tree-edit-distance accuracy between two entity field lists: `1 - TED /
/// max(|T_gt|, |T_pred|)` with exact-label substitution, clamped into
/// `[0, 1]`.
pub fn ted_accuracy(gt_fields: &[(String, String)], pred_fields: &[(String, String)]) -> f64 {
    let t1 = entity_tree(gt_fields);
    let t2 = entity_tree(pred_fields);
    let dist = tree_edit_distance(&t1, &t2, |a, b| f64::from(a.label != b.label));
    let denom = t1.size().max(t2.size()) as f64;
    (1.0 - dist / denom).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::oracle::oracle_tree_edit_distance;

    fn fields(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
    }

    #[test]
    fn identical_tables_score_one() {
        let html = "<table><tr><td>A</td><td>B</td></tr></table>";
        assert_eq!(teds(html, html, false).unwrap(), 1.0);
        assert_eq!(teds(html, html, true).unwrap(), 1.0);
    }

    #[test]
    fn one_cell_vs_empty_table() {
        // GT tree: table, tr, td -> 3 nodes; pred: table -> 1 node.
        // Distance 2, score 1 - 2/3.
        let gt = "<table><tr><td>A</td></tr></table>";
        let pred = "<table></table>";
        let score = teds(gt, pred, false).unwrap();
        assert!((score - (1.0 - 2.0 / 3.0)).abs() < 1e-12, "{score}");
    }

    #[test]
    fn single_char_content_substitution() {
        // same 3-node structure, one length-1 content differs: cost 1, so
        // score is 1 - 1/3
        let gt = "<table><tr><td>A</td></tr></table>";
        let pred = "<table><tr><td>B</td></tr></table>";
        let score = teds(gt, pred, false).unwrap();
        assert!((score - (1.0 - 1.0 / 3.0)).abs() < 1e-12, "{score}");
        // S-TEDS ignores the content difference
        assert_eq!(teds(gt, pred, true).unwrap(), 1.0);
    }

    #[test]
    fn span_attributes_are_part_of_the_label() {
        let gt = "<table><tr><td colspan=\"2\">A</td></tr></table>";
        let pred = "<table><tr><td>A</td></tr></table>";
        let score = teds(gt, pred, true).unwrap();
        assert!((score - (1.0 - 1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn unparseable_html_is_an_error() {
        assert!(teds("<table><tr>", "<table></table>", false).is_err());
        assert!(teds("<table></tr></table>", "<table></table>", false).is_err());
    }

    #[test]
    fn distance_is_symmetric() {
        let a = html_tree("<table><tr><td>A</td><td rowspan=\"2\">x</td></tr><tr><td></td></tr></table>").unwrap();
        let b = html_tree("<table><tr><td>B</td></tr></table>").unwrap();
        let sub = |x: &TreeNode, y: &TreeNode| teds_sub_cost(x, y, false);
        let d1 = tree_edit_distance(&a, &b, sub);
        let d2 = tree_edit_distance(&b, &a, sub);
        assert!((d1 - d2).abs() < 1e-12);
    }

    #[test]
    fn matches_oracle_on_small_trees() {
        let mut rng = crate::prompting::PromptRng::new(2024);
        for _ in 0..120 {
            let t1 = crate::metrics::oracle::random_tree(&mut rng, 8);
            let t2 = crate::metrics::oracle::random_tree(&mut rng, 8);
            for structure_only in [false, true] {
                let sub = |a: &TreeNode, b: &TreeNode| teds_sub_cost(a, b, structure_only);
                let fast = tree_edit_distance(&t1, &t2, sub);
                let slow = oracle_tree_edit_distance(&t1, &t2, sub);
                assert!(
                    (fast - slow).abs() < 1e-9,
                    "zs={fast} oracle={slow}\nt1={t1:?}\nt2={t2:?}"
                );
            }
        }
    }

    #[test]
    fn ted_accuracy_identical_is_one() {
        let f = fields(&[("company", "ACME"), ("total", "12.00")]);
        assert_eq!(ted_accuracy(&f, &f), 1.0);
    }

    #[test]
    fn ted_accuracy_missing_field() {
        let gt = fields(&[("a", "1"), ("b", "2"), ("c", "3")]); // tree size 7
        let pred = fields(&[("a", "1"), ("b", "2")]);
        let fast = ted_accuracy(&gt, &pred);
        let t1 = entity_tree(&gt);
        let t2 = entity_tree(&pred);
        let slow = oracle_tree_edit_distance(&t1, &t2, |a, b| f64::from(a.label != b.label));
        assert!((fast - (1.0 - slow / 7.0)).abs() < 1e-12);
        assert!((fast - (1.0 - 2.0 / 7.0)).abs() < 1e-12);
    }

    #[test]
    fn ted_accuracy_empty_prediction() {
        let gt = fields(&[("a", "1"), ("b", "2"), ("c", "3")]);
        let acc = ted_accuracy(&gt, &[]);
        let t_gt = entity_tree(&gt).size() as f64;
        assert!((acc - (1.0 - (t_gt - 1.0) / t_gt)).abs() < 1e-12);
    }

    #[test]
    fn levenshtein_basics() {
        assert_eq!(levenshtein("", ""), 0);
        assert_eq!(levenshtein("abc", "abc"), 0);
        assert_eq!(levenshtein("abc", "axc"), 1);
        assert_eq!(levenshtein("abc", ""), 3);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
    }
}
