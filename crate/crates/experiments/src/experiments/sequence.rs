//! B/I tag consistency on synthetic token sequences: an inside tag must
//! follow a tag of the same chunk type. Noisy per-token tag scores with
//! injected violations are repaired by collective inference.

use std::fmt::Write as _;

use anyhow::Result;
use groundlog_core::ground::{CompileOptions, TNormConfig, TNormFamily};
use groundlog_core::tensor::Tensor;
use groundlog_core::train::{collective_infer, CollectiveConfig, ObjectiveConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{argmax, markdown_table, Bundle, Report};

pub const TAGS: [&str; 5] = ["BNP", "INP", "BVP", "IVP", "O"];
const B_NP: usize = 0;
const I_NP: usize = 1;
const B_VP: usize = 2;
const I_VP: usize = 3;
const O: usize = 4;

pub const RULES: [&str; 2] = [
    "forall s: forall t: (Next(s, t) and INP(t)) -> (BNP(s) or INP(s))",
    "forall s: forall t: (Next(s, t) and IVP(t)) -> (BVP(s) or IVP(s))",
];

#[derive(Clone, Debug)]
pub struct SequenceConfig {
    pub sequences: usize,
    pub length: usize,
    pub violations: usize,
    /// Score given to the wrong inside tag at an injected violation; the
    /// true begin tag gets `injected_begin`.
    pub injected_inside: f64,
    pub injected_begin: f64,
    pub lambda: f64,
    pub tnorm: TNormFamily,
    pub collective: CollectiveConfig,
    /// Largest change allowed on tokens outside violated groundings.
    pub tolerance: f64,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        SequenceConfig {
            sequences: 10,
            length: 20,
            violations: 12,
            injected_inside: 0.55,
            injected_begin: 0.35,
            lambda: 1000.0,
            tnorm: TNormFamily::Product,
            collective: CollectiveConfig::default(),
            tolerance: 0.05,
        }
    }
}

/// Inside tag and its begin tag, if `tag` is an inside tag.
fn chunk_of(tag: usize) -> Option<(usize, usize)> {
    match tag {
        I_NP => Some((I_NP, B_NP)),
        I_VP => Some((I_VP, B_VP)),
        _ => None,
    }
}

fn consistent(prev: Option<usize>, tag: usize) -> bool {
    match chunk_of(tag) {
        None => true,
        Some((i, b)) => prev.is_some_and(|p| p == i || p == b),
    }
}

/// Gold tags: NP chunks of 1..=3 tokens, VP chunks of 1..=2, single O.
pub fn gold_tags<R: Rng>(rng: &mut R, length: usize) -> Vec<usize> {
    let mut tags = vec![];
    while tags.len() < length {
        let (b, i, max) = match rng.gen_range(0..20) {
            0..=8 => (B_NP, I_NP, 3),
            9..=13 => (B_VP, I_VP, 2),
            _ => (O, O, 1),
        };
        let n = rng.gen_range(1..=max);
        tags.push(b);
        for _ in 1..n {
            tags.push(i);
        }
    }
    tags.truncate(length);
    tags
}

pub struct SequenceData {
    /// Sequence of each token.
    pub sequence: Vec<usize>,
    pub gold: Vec<usize>,
    /// One score row per token over [`TAGS`].
    pub priors: Vec<[f64; 5]>,
    pub injected: Vec<usize>,
}

impl SequenceData {
    pub fn tokens(&self) -> usize {
        self.gold.len()
    }

    fn prev(&self, t: usize) -> Option<usize> {
        (t > 0 && self.sequence[t - 1] == self.sequence[t]).then(|| t - 1)
    }

    /// Tokens whose decoded tag breaks a rule.
    pub fn violations(&self, tags: &[usize]) -> Vec<usize> {
        (0..tags.len())
            .filter(|&t| !consistent(self.prev(t).map(|p| tags[p]), tags[t]))
            .collect()
    }

    pub fn next_table(&self) -> Tensor {
        let n = self.tokens();
        let mut t = Tensor::zeros(&[n, n]);
        for i in 1..n {
            if self.prev(i).is_some() {
                t.data_mut()[(i - 1) * n + i] = 1.0;
            }
        }
        t
    }
}

pub fn generate(cfg: &SequenceConfig, rng: &mut ChaCha8Rng) -> SequenceData {
    let mut sequence = vec![];
    let mut gold = vec![];
    for s in 0..cfg.sequences {
        for tag in gold_tags(rng, cfg.length) {
            sequence.push(s);
            gold.push(tag);
        }
    }
    // Confidence never rises inside a chunk, so consistent tags also
    // satisfy the graded rules.
    let mut tops = vec![0.0; gold.len()];
    for t in 0..gold.len() {
        tops[t] = rng.gen_range(0.75..0.9);
        if t > 0 && sequence[t - 1] == sequence[t] && chunk_of(gold[t]).is_some() {
            tops[t] = f64::min(tops[t], tops[t - 1]);
        }
    }
    let mut priors: Vec<[f64; 5]> = gold
        .iter()
        .zip(&tops)
        .map(|(&g, &top)| {
            let mut rest: [f64; 4] = [rng.gen(), rng.gen(), rng.gen(), rng.gen()];
            let sum: f64 = rest.iter().sum();
            rest.iter_mut().for_each(|r| *r *= (1.0 - top) / sum);
            let mut row = [0.0; 5];
            let mut k = 0;
            for (j, v) in row.iter_mut().enumerate() {
                if j == g {
                    *v = top;
                } else {
                    *v = rest[k];
                    k += 1;
                }
            }
            row
        })
        .collect();

    // A begin tag of a one-token chunk whose predecessor is not in the same
    // chunk type becomes a violation once its inside tag dominates.
    let mut candidates: Vec<usize> = (1..gold.len())
        .filter(|&t| {
            sequence[t - 1] == sequence[t]
                && matches!(gold[t], B_NP | B_VP)
                && !consistent(Some(gold[t - 1]), gold[t] + 1)
                && !(t + 1 < gold.len() && sequence[t + 1] == sequence[t] && gold[t + 1] == gold[t] + 1)
        })
        .collect();
    candidates.shuffle(rng);
    candidates.truncate(cfg.violations);
    candidates.sort_unstable();
    for &t in &candidates {
        let b = gold[t];
        let rest = (1.0 - cfg.injected_inside - cfg.injected_begin) / 3.0;
        let mut row = [rest; 5];
        row[b] = cfg.injected_begin;
        row[b + 1] = cfg.injected_inside;
        priors[t] = row;
    }
    // Minor inside scores are capped by the predecessor's support for them.
    for t in 1..gold.len() {
        if sequence[t - 1] != sequence[t] || candidates.binary_search(&t).is_ok() {
            continue;
        }
        for i in [I_NP, I_VP] {
            if i == gold[t] {
                continue;
            }
            let (a, b) = (priors[t - 1][i - 1], priors[t - 1][i]);
            priors[t][i] = priors[t][i].min(a + b - a * b);
        }
    }
    SequenceData {
        sequence,
        gold,
        priors,
        injected: candidates,
    }
}

pub fn bundle(cfg: &SequenceConfig, data: &SequenceData) -> Bundle {
    let n = data.tokens();
    let mut pos = vec![0usize; n];
    for t in 1..n {
        if data.sequence[t] == data.sequence[t - 1] {
            pos[t] = pos[t - 1] + 1;
        }
    }
    let rows = Tensor::matrix(
        n,
        2,
        (0..n).flat_map(|t| [data.sequence[t] as f64, pos[t] as f64]).collect(),
    )
    .expect("two columns");
    let labels = (0..n).map(|t| format!("s{}t{}", data.sequence[t], pos[t])).collect();
    let mut program = String::from("# B/I tag consistency, collective inference over tag scores\ndomain Tokens from \"tokens\"\n");
    let mut tables = vec![];
    for (k, tag) in TAGS.iter().enumerate() {
        let name = format!("prior_{}", tag.to_lowercase());
        writeln!(program, "predicate {tag}(Tokens) = table \"{name}\"").unwrap();
        tables.push((name, Tensor::new(vec![n], data.priors.iter().map(|r| r[k]).collect()).expect("one per token")));
    }
    program.push_str("predicate Next(Tokens, Tokens) = table \"next\"\n");
    tables.push(("next".into(), data.next_table()));
    for rule in RULES {
        writeln!(program, "constraint \"{rule}\" weight {}", cfg.lambda).unwrap();
    }
    Bundle {
        program,
        domains: vec![("tokens".into(), rows, labels)],
        matrices: vec![],
        tables,
    }
}

pub struct SequenceOutcome {
    pub injected: usize,
    pub violations_before: usize,
    pub violations_after: usize,
    /// Largest change of the predicted tag's score on tokens whose tag
    /// was already consistent.
    pub max_consistent_change: f64,
    /// Consistent tokens whose predicted tag changed.
    pub consistent_flipped: usize,
    /// Largest change of any score on tokens outside violated groundings.
    pub max_untouched_change: f64,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
    pub report: Report,
}

pub fn run(cfg: &SequenceConfig, seed: u64) -> Result<SequenceOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = generate(cfg, &mut rng);
    let bundle = bundle(cfg, &data);
    let kb = bundle.knowledge_base(seed)?;
    let mut cc = cfg.collective.clone();
    cc.objective = ObjectiveConfig {
        compile: CompileOptions {
            tnorm: TNormConfig::new(cfg.tnorm),
            ..cc.objective.compile
        },
        ..cc.objective
    };
    cc.predicates = Some(TAGS.iter().map(|s| s.to_string()).collect());
    let res = collective_infer(&kb, &cc)?;

    let n = data.tokens();
    let post: Vec<Vec<f64>> = TAGS
        .iter()
        .map(|t| res.posterior(t).expect("collective predicate").data().to_vec())
        .collect();
    let prior_tags: Vec<usize> = data.priors.iter().map(|r| argmax(r)).collect();
    let post_rows: Vec<Vec<f64>> = (0..n).map(|t| post.iter().map(|c| c[t]).collect()).collect();
    let post_tags: Vec<usize> = post_rows.iter().map(|r| argmax(r)).collect();
    let before = data.violations(&prior_tags);
    let after = data.violations(&post_tags);

    // Tokens in a violated grounding: the offending token and its
    // predecessor.
    let mut touched = vec![false; n];
    for &t in &before {
        touched[t] = true;
        if let Some(p) = data.prev(t) {
            touched[p] = true;
        }
    }
    let mut max_untouched_change: f64 = 0.0;
    for t in (0..n).filter(|&t| !touched[t]) {
        for k in 0..TAGS.len() {
            max_untouched_change = max_untouched_change.max((post_rows[t][k] - data.priors[t][k]).abs());
        }
    }
    let mut max_consistent_change: f64 = 0.0;
    let mut consistent_flipped = 0;
    for t in (0..n).filter(|t| before.binary_search(t).is_err()) {
        let k = prior_tags[t];
        max_consistent_change = max_consistent_change.max((post_rows[t][k] - data.priors[t][k]).abs());
        consistent_flipped += usize::from(post_tags[t] != k);
    }
    let acc = |tags: &[usize]| tags.iter().zip(&data.gold).filter(|(a, b)| a == b).count() as f64 / n as f64;
    let (accuracy_before, accuracy_after) = (acc(&prior_tags), acc(&post_tags));

    let mut report = Report::new("sequence-rules");
    report.set("injected", data.injected.len() as f64);
    report.set("violations_before", before.len() as f64);
    report.set("violations_after", after.len() as f64);
    report.set("max_consistent_change", max_consistent_change);
    report.set("consistent_flipped", consistent_flipped as f64);
    report.set("max_untouched_change", max_untouched_change);
    report.set("accuracy_before", accuracy_before);
    report.set("accuracy_after", accuracy_after);
    for (i, (b, a)) in res.psi_before.iter().zip(&res.psi_after).enumerate() {
        report.set(format!("rule_{i}_psi_before"), *b);
        report.set(format!("rule_{i}_psi_after"), *a);
    }
    let mut predictions = String::from("row,gold,prior_tag,posterior_tag");
    for t in TAGS {
        write!(predictions, ",{t}_prior,{t}_posterior").unwrap();
    }
    predictions.push('\n');
    let names = &bundle.domains[0].2;
    for t in 0..n {
        write!(
            predictions,
            "{},{},{},{}",
            names[t], TAGS[data.gold[t]], TAGS[prior_tags[t]], TAGS[post_tags[t]]
        )
        .unwrap();
        for k in 0..TAGS.len() {
            write!(predictions, ",{},{}", data.priors[t][k], post_rows[t][k]).unwrap();
        }
        predictions.push('\n');
    }
    report.add_file("predictions.csv", predictions);
    report.files.extend(bundle.files());
    let mut md = format!(
        "# B/I sequence rules\n\n{} sequences of {} tokens, {} injected violations, rules weighted {} under the {} t-norm.\n\n",
        cfg.sequences,
        cfg.length,
        data.injected.len(),
        cfg.lambda,
        cfg.tnorm
    );
    md.push_str(&markdown_table(
        &["", "tag scores", "after collective inference"],
        &[
            vec!["violations".into(), before.len().to_string(), after.len().to_string()],
            vec![
                "tag accuracy".into(),
                format!("{accuracy_before:.3}"),
                format!("{accuracy_after:.3}"),
            ],
        ],
    ));
    writeln!(
        md,
        "\nConsistent tokens: {consistent_flipped} changed tag, largest change of the predicted tag's score \
         {max_consistent_change:.4}. Largest change of any score outside violated groundings: {max_untouched_change:.4}."
    )
    .unwrap();
    report.markdown = md;
    Ok(SequenceOutcome {
        injected: data.injected.len(),
        violations_before: before.len(),
        violations_after: after.len(),
        max_consistent_change,
        consistent_flipped,
        max_untouched_change,
        accuracy_before,
        accuracy_after,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gold_tags_are_consistent_and_injections_violate() {
        let cfg = SequenceConfig::default();
        let d = generate(&cfg, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(d.tokens(), 200);
        assert!(d.violations(&d.gold).is_empty());
        let prior: Vec<usize> = d.priors.iter().map(|r| argmax(r)).collect();
        assert_eq!(d.violations(&prior), d.injected);
        assert_eq!(d.injected.len(), cfg.violations);
        let next = d.next_table();
        assert_eq!(next.data().iter().sum::<f64>(), 190.0);
    }
}
