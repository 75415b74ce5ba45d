use serde::{Deserialize, Serialize};

use super::{Plan, Subtask};

/// One unit-cost edit turning plan `a` into plan `b`. Positions index `a`'s
/// steps as they stand when the script is applied front to back.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Edit {
    Insert { at: usize, step: Subtask },
    Delete { at: usize },
    Replace { at: usize, step: Subtask },
}

/// Minimal edit script over step texts (Levenshtein on step sequences).
pub fn diff_plans(a: &Plan, b: &Plan) -> Vec<Edit> {
    let (n, m) = (a.steps.len(), b.steps.len());
    let same = |i: usize, j: usize| a.steps[i].text == b.steps[j].text;
    let mut dp = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in dp.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        dp[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = dp[i - 1][j - 1] + usize::from(!same(i - 1, j - 1));
            dp[i][j] = sub.min(dp[i - 1][j] + 1).min(dp[i][j - 1] + 1);
        }
    }

    let mut rev = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 && dp[i][j] == dp[i - 1][j - 1] + usize::from(!same(i - 1, j - 1)) {
            if !same(i - 1, j - 1) {
                rev.push(Edit::Replace { at: i - 1, step: b.steps[j - 1].clone() });
            }
            i -= 1;
            j -= 1;
        } else if i > 0 && dp[i][j] == dp[i - 1][j] + 1 {
            rev.push(Edit::Delete { at: i - 1 });
            i -= 1;
        } else {
            rev.push(Edit::Insert { at: i, step: b.steps[j - 1].clone() });
            j -= 1;
        }
    }
    // Backtrace positions refer to the original `a`; shift them so the script
    // applies left to right.
    rev.reverse();
    let mut offset: isize = 0;
    for e in &mut rev {
        match e {
            Edit::Insert { at, .. } => {
                *at = (*at as isize + offset) as usize;
                offset += 1;
            }
            Edit::Delete { at } => {
                *at = (*at as isize + offset) as usize;
                offset -= 1;
            }
            Edit::Replace { at, .. } => *at = (*at as isize + offset) as usize,
        }
    }
    rev
}

/// Applies an edit script produced by [`diff_plans`].
pub fn apply_edits(a: &Plan, edits: &[Edit]) -> Plan {
    let mut out = a.clone();
    for e in edits {
        match e {
            Edit::Insert { at, step } => out.steps.insert(*at, step.clone()),
            Edit::Delete { at } => {
                out.steps.remove(*at);
            }
            Edit::Replace { at, step } => out.steps[*at] = step.clone(),
        }
    }
    out.reindex();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan_ir::parse_plan;

    fn plan(text: &str) -> Plan {
        parse_plan(text, None).unwrap()
    }

    #[test]
    fn identical_plans_have_no_edits() {
        let p = plan("1. pick up cuboid\n2. place cuboid in beaker");
        assert!(diff_plans(&p, &p).is_empty());
    }

    #[test]
    fn duplicated_step_is_one_insert() {
        let a = plan("1. pick up cuboid\n2. place cuboid in beaker");
        let b = plan("1. pick up cuboid\n2. pick up cuboid\n3. place cuboid in beaker");
        let d = diff_plans(&a, &b);
        assert_eq!(d.len(), 1);
        assert!(matches!(d[0], Edit::Insert { .. }));
        assert_eq!(apply_edits(&a, &d).step_texts(), b.step_texts());
    }

    #[test]
    fn replace_and_delete() {
        let a = plan("1. a x\n2. b x\n3. c x");
        let b = plan("1. a x\n2. d x");
        let d = diff_plans(&a, &b);
        assert_eq!(d.len(), 2);
        assert_eq!(apply_edits(&a, &d).step_texts(), b.step_texts());
    }
}
