use crate::ground::{CompileOptions, GroundError, Grounder};
use crate::kb::KnowledgeBase;
use crate::logic::CheckedFormula;

use super::{Result, TrainError};

/// Truth degree of a formula under the current parameters.
pub fn evaluate_formula(kb: &KnowledgeBase, formula: &CheckedFormula, opts: CompileOptions) -> Result<f64> {
    let mut gr = Grounder::new(kb, opts);
    let c = gr.compile(formula)?;
    Ok(gr.graph().value(c.psi).item().unwrap_or(f64::NAN))
}

/// Truth degree of every test-only constraint, in declaration order.
pub fn model_check(kb: &KnowledgeBase, opts: CompileOptions) -> Result<Vec<(String, f64)>> {
    let mut gr = Grounder::new(kb, opts);
    let mut out = vec![];
    for c in kb.constraints().iter().filter(|c| c.test_only) {
        let grounded = gr.compile(&c.formula).map_err(|e| TrainError::Constraint {
            constraint: c.source.clone(),
            error: e.to_string(),
        })?;
        out.push((c.source.clone(), gr.graph().value(grounded.psi).item().unwrap_or(f64::NAN)));
    }
    Ok(out)
}

/// Largest number of candidates `enumerate_dnf` will build.
pub const DNF_LIMIT: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
pub struct DnfCandidate {
    pub formula: String,
    /// Minterm indices; predicate 0 is the most significant bit.
    pub minterms: Vec<usize>,
    pub truth: f64,
    /// Set for the disjunction of every minterm, which holds whatever the
    /// predicates are.
    pub trivial: bool,
}

fn literal(pred: &str, var: &str, positive: bool) -> String {
    if positive {
        format!("{pred}({var})")
    } else {
        format!("not {pred}({var})")
    }
}

fn minterm(preds: &[&str], var: &str, m: usize) -> String {
    let k = preds.len();
    preds
        .iter()
        .enumerate()
        .map(|(i, p)| literal(p, var, (m >> (k - 1 - i)) & 1 == 1))
        .collect::<Vec<_>>()
        .join(" and ")
}

/// Every non-empty set of minterms over `preds`, ordered by bitmask, as
/// `forall var: ...` sources.
pub fn dnf_candidates(preds: &[&str], var: &str) -> Result<Vec<(Vec<usize>, String)>> {
    let k = preds.len();
    if k == 0 {
        return Err(TrainError::Empty("no predicates given".into()));
    }
    let minterms = 1usize << k;
    if minterms >= usize::BITS as usize || (1usize << minterms) - 1 > DNF_LIMIT {
        return Err(TrainError::Invalid(format!(
            "{k} predicates give more than {DNF_LIMIT} candidate formulas"
        )));
    }
    let mut out = vec![];
    for mask in 1usize..(1 << minterms) {
        let ms: Vec<usize> = (0..minterms).filter(|m| mask >> m & 1 == 1).collect();
        let parts: Vec<String> = ms
            .iter()
            .map(|&m| {
                let t = minterm(preds, var, m);
                if k > 1 && ms.len() > 1 {
                    format!("({t})")
                } else {
                    t
                }
            })
            .collect();
        out.push((ms, format!("forall {var}: {}", parts.join(" or "))));
    }
    Ok(out)
}

/// Ranks every DNF over `preds` by its truth degree under the current
/// parameters, most true first. The tautology goes last.
pub fn enumerate_dnf(
    kb: &KnowledgeBase,
    preds: &[&str],
    max_vars: usize,
    opts: CompileOptions,
) -> Result<Vec<DnfCandidate>> {
    if max_vars != 1 {
        return Err(GroundError::Unsupported(format!(
            "only single-variable formulas can be enumerated (asked for {max_vars})"
        ))
        .into());
    }
    let mut domain: Option<&str> = None;
    for p in preds {
        let s = kb.symbol(p)?;
        if !s.is_predicate() || s.inputs.len() != 1 {
            return Err(TrainError::Invalid(format!("`{p}` is not a unary predicate")));
        }
        match domain {
            None => domain = Some(&s.inputs[0]),
            Some(d) if d == s.inputs[0] => {}
            Some(d) => {
                return Err(TrainError::Invalid(format!(
                    "`{p}` is over {} but the other predicates are over {d}",
                    s.inputs[0]
                )))
            }
        }
    }
    let var = if preds.contains(&"x") { "v" } else { "x" };
    let candidates = dnf_candidates(preds, var)?;
    let all = 1usize << preds.len();
    let mut gr = Grounder::new(kb, opts);
    let mut out = Vec::with_capacity(candidates.len());
    for (minterms, formula) in candidates {
        let checked = kb.check_formula(&formula)?;
        let c = gr.compile(&checked)?;
        let truth = gr.graph().value(c.psi).item().unwrap_or(f64::NAN);
        out.push(DnfCandidate {
            trivial: minterms.len() == all,
            formula,
            minterms,
            truth,
        });
    }
    out.sort_by(|a, b| a.trivial.cmp(&b.trivial).then(b.truth.total_cmp(&a.truth)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::Binding;
    use crate::tensor::Tensor;

    fn kb() -> KnowledgeBase {
        let mut kb = KnowledgeBase::new(0);
        kb.add_domain("D", Tensor::matrix(4, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap(), vec![])
            .unwrap();
        let col = |v: &[f64]| Binding::Table(Tensor::vector(v.to_vec()));
        kb.add_predicate("A", &["D"], col(&[1.0, 1.0, 0.0, 0.0])).unwrap();
        kb.add_predicate("B", &["D"], col(&[1.0, 0.0, 1.0, 0.0])).unwrap();
        kb.add_predicate("T", &["D"], col(&[1.0, 1.0, 1.0, 1.0])).unwrap();
        kb
    }

    #[test]
    fn two_predicates_give_fifteen_candidates() {
        let c = dnf_candidates(&["A", "B"], "x").unwrap();
        assert_eq!(c.len(), 15);
        assert_eq!(c[0].1, "forall x: not A(x) and not B(x)");
        assert_eq!(c[2].0, vec![0, 1]);
        assert_eq!(c[2].1, "forall x: (not A(x) and not B(x)) or (not A(x) and B(x))");
        assert_eq!(c[14].0, vec![0, 1, 2, 3]);
        assert_eq!(dnf_candidates(&["A"], "x").unwrap().len(), 3);
    }

    #[test]
    fn single_true_predicate_ranks_first() {
        let r = enumerate_dnf(&kb(), &["T"], 1, CompileOptions::default()).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r[0].formula, "forall x: T(x)");
        assert_eq!(r[0].truth, 1.0);
        assert!(r[2].trivial);
        assert_eq!(r[2].formula, "forall x: not T(x) or T(x)");
    }

    #[test]
    fn ranking_is_by_truth_with_tautology_last() {
        let r = enumerate_dnf(&kb(), &["A", "B"], 1, CompileOptions::default()).unwrap();
        assert_eq!(r.len(), 15);
        assert!(r.last().unwrap().trivial);
        for w in r[..14].windows(2) {
            assert!(w[0].truth >= w[1].truth);
        }
        // Each row realises a different minterm, so a set of s minterms
        // holds on s of the 4 rows.
        for c in &r {
            assert!((c.truth - c.minterms.len() as f64 / 4.0).abs() < 1e-12);
        }
        assert_eq!(r.iter().filter(|c| c.minterms.len() == 3).count(), 4);
        assert_eq!(r[0].minterms.len(), 3);
    }

    #[test]
    fn rejects_more_than_one_variable() {
        assert!(enumerate_dnf(&kb(), &["A"], 2, CompileOptions::default()).is_err());
    }

    #[test]
    fn model_check_reports_test_only_constraints() {
        let mut kb = kb();
        kb.add_constraint("forall x: T(x)", 1.0, false).unwrap();
        kb.add_constraint("forall x: A(x) -> T(x)", 0.0, true).unwrap();
        kb.add_constraint("exists x: A(x) and B(x)", 0.0, true).unwrap();
        let r = model_check(&kb, CompileOptions::default()).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0], ("forall x: A(x) -> T(x)".to_string(), 1.0));
        assert_eq!(r[1].1, 1.0);
        let f = kb.check_formula("forall x: A(x)").unwrap();
        assert_eq!(evaluate_formula(&kb, &f, CompileOptions::default()).unwrap(), 0.5);
    }
}
