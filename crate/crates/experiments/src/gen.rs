//! Random well-sorted formulas over random truth tables.

use groundlog_core::kb::KnowledgeBase;
use groundlog_core::learners::Binding;
use groundlog_core::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;

/// Shape of the generated worlds and formulas.
#[derive(Clone, Copy, Debug)]
pub struct GenConfig {
    pub max_depth: usize,
    pub max_vars: usize,
    pub max_domain: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_depth: 4,
            max_vars: 2,
            max_domain: 5,
        }
    }
}

/// Predicate names with their argument sorts.
const PREDICATES: [(&str, &[&str]); 4] = [("P", &["D"]), ("Q", &["E"]), ("R", &["D", "E"]), ("S", &["D", "D"])];

fn truth<R: Rng>(rng: &mut R) -> f64 {
    // Exact 0 and 1 show up often enough to exercise the Boolean corners
    // and the `x <= y` branches.
    match rng.gen_range(0..6) {
        0 => 0.0,
        1 => 1.0,
        _ => rng.gen(),
    }
}

/// Two domains `D` and `E` with named rows `d0..`, `e0..` and random
/// tables for `P(D)`, `Q(E)`, `R(D, E)` and `S(D, D)`.
pub fn random_world<R: Rng>(rng: &mut R, cfg: &GenConfig) -> KnowledgeBase {
    let mut kb = KnowledgeBase::new(0);
    let mut sizes = vec![];
    for (name, prefix) in [("D", "d"), ("E", "e")] {
        let n = rng.gen_range(1..=cfg.max_domain);
        let rows = Tensor::matrix(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        let labels = (0..n).map(|i| format!("{prefix}{i}")).collect();
        kb.add_domain(name, rows, labels).unwrap();
        sizes.push((name, n));
    }
    let size = |d: &str| sizes.iter().find(|(n, _)| *n == d).unwrap().1;
    for (name, sorts) in PREDICATES {
        let shape: Vec<usize> = sorts.iter().map(|s| size(s)).collect();
        let n = shape.iter().product();
        let t = Tensor::new(shape, (0..n).map(|_| truth(rng)).collect()).unwrap();
        kb.add_predicate(name, sorts, Binding::Table(t)).unwrap();
    }
    kb
}

struct Gen<'a, R> {
    rng: &'a mut R,
    cfg: GenConfig,
    kb: &'a KnowledgeBase,
    used: usize,
    mentioned: Vec<String>,
}

impl<R: Rng> Gen<'_, R> {
    fn term(&mut self, sort: &str, scope: &[(String, String)]) -> String {
        let vars: Vec<&String> = scope.iter().filter(|(_, s)| s == sort).map(|(v, _)| v).collect();
        if !vars.is_empty() && self.rng.gen_bool(0.8) {
            let v = vars.choose(self.rng).unwrap().to_string();
            self.mentioned.push(v.clone());
            return v;
        }
        let labels = self.kb.domain(sort).unwrap().labels();
        labels.choose(self.rng).unwrap().clone()
    }

    fn atom(&mut self, scope: &[(String, String)]) -> String {
        let (name, sorts) = *PREDICATES.choose(self.rng).unwrap();
        let args: Vec<String> = sorts.iter().map(|s| self.term(s, scope)).collect();
        format!("{name}({})", args.join(", "))
    }

    fn atom_with(&mut self, var: &str, sort: &str, scope: &[(String, String)]) -> String {
        let options: Vec<_> = PREDICATES.iter().filter(|(_, s)| s.contains(&sort)).collect();
        let (name, sorts) = **options.choose(self.rng).unwrap();
        let at = sorts.iter().position(|s| *s == sort).unwrap();
        let args: Vec<String> = sorts
            .iter()
            .enumerate()
            .map(|(i, s)| if i == at { var.to_string() } else { self.term(s, scope) })
            .collect();
        self.mentioned.push(var.to_string());
        format!("{name}({})", args.join(", "))
    }

    fn formula(&mut self, depth: usize, scope: &mut Vec<(String, String)>) -> String {
        if depth == 0 || self.rng.gen_bool(0.2) {
            return self.atom(scope);
        }
        let quantify = self.used < self.cfg.max_vars && self.rng.gen_bool(0.4);
        if quantify {
            let var = ["x", "y", "z", "w"][self.used].to_string();
            self.used += 1;
            let sort = if self.rng.gen_bool(0.5) { "D" } else { "E" };
            let q = if self.rng.gen_bool(0.5) { "forall" } else { "exists" };
            scope.push((var.clone(), sort.to_string()));
            let mut body = self.formula(depth - 1, scope);
            if !self.mentioned.contains(&var) {
                // Sorts are inferred from use, so the variable must occur.
                let atom = self.atom_with(&var, sort, scope);
                let op = ["and", "or", "->", "<->"][self.rng.gen_range(0..4)];
                body = format!("({body} {op} {atom})");
            }
            scope.pop();
            return format!("({q} {var}: {body})");
        }
        match self.rng.gen_range(0..5) {
            0 => format!("not {}", self.formula(depth - 1, scope)),
            k => {
                let op = ["and", "or", "->", "<->"][k - 1];
                let l = self.formula(depth - 1, scope);
                let r = self.formula(depth - 1, scope);
                format!("({l} {op} {r})")
            }
        }
    }
}

/// A closed formula over the world's symbols, at most `max_depth`
/// connectives or quantifiers deep, with at most `max_vars` distinct
/// quantified variables.
pub fn random_formula<R: Rng>(rng: &mut R, kb: &KnowledgeBase, cfg: &GenConfig) -> String {
    let mut g = Gen {
        rng,
        cfg: *cfg,
        kb,
        used: 0,
        mentioned: vec![],
    };
    g.formula(cfg.max_depth, &mut vec![])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_formulas_sort_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = GenConfig::default();
        let mut quantified = 0;
        for _ in 0..200 {
            let kb = random_world(&mut rng, &cfg);
            let src = random_formula(&mut rng, &kb, &cfg);
            let f = kb.check_formula(&src).unwrap_or_else(|e| panic!("{src}: {e}"));
            assert!(f.vars.len() <= cfg.max_vars);
            quantified += (!f.vars.is_empty()) as usize;
        }
        assert!(quantified > 50);
    }
}
