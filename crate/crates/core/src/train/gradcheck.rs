use crate::kb::KnowledgeBase;
use crate::tensor::gradcheck::GradcheckReport;
use crate::tensor::GradientTape;

use super::objective::{constraint_term, evaluate, ObjectiveConfig};
use super::Result;

fn perturb_all<F>(kb: &mut KnowledgeBase, h: f64, limit: Option<usize>, tape: &GradientTape, value: F) -> Result<GradcheckReport>
where
    F: Fn(&KnowledgeBase) -> Result<f64>,
{
    let mut report = GradcheckReport::default();
    let ids: Vec<_> = kb.params().ids().collect();
    for (i, id) in ids.into_iter().enumerate() {
        let n = kb.params().get(id).numel();
        // Spread the probes over the tensor when capped.
        let step = limit.map_or(1, |l| (n / l.max(1)).max(1));
        for k in (0..n).step_by(step) {
            let orig = kb.params().get(id).data()[k];
            kb.params_mut().get_mut(id).data_mut()[k] = orig + h;
            let plus = value(kb);
            kb.params_mut().get_mut(id).data_mut()[k] = orig - h;
            let minus = value(kb);
            kb.params_mut().get_mut(id).data_mut()[k] = orig;
            let numeric = (plus? - minus?) / (2.0 * h);
            let analytic = tape.get(id).map_or(0.0, |t| t.data()[k]);
            report.record(i, k, analytic, numeric);
        }
    }
    Ok(report)
}

/// Central-difference check of `λ·L(ψ)` for one constraint, probing at
/// most `limit` entries per parameter tensor.
pub fn check_constraint(
    kb: &mut KnowledgeBase,
    index: usize,
    cfg: &ObjectiveConfig,
    h: f64,
    limit: Option<usize>,
) -> Result<GradcheckReport> {
    let (_, term) = constraint_term(kb, index, cfg, true)?;
    let tape = term.map(|(_, t)| t).unwrap_or_default();
    perturb_all(kb, h, limit, &tape, |kb| {
        Ok(constraint_term(kb, index, cfg, false)?.1.map_or(0.0, |(v, _)| v))
    })
}

/// Central-difference check of the whole objective.
pub fn check_objective(kb: &mut KnowledgeBase, cfg: &ObjectiveConfig, h: f64, limit: Option<usize>) -> Result<GradcheckReport> {
    let tape = evaluate(kb, cfg, true)?.grads;
    perturb_all(kb, h, limit, &tape, |kb| Ok(evaluate(kb, cfg, false)?.total))
}
