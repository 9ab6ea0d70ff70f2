use groundlog_core::ground::{LossMode, TNormFamily};
use groundlog_core::kb::{KnowledgeBase, MemoryData};
use groundlog_core::learners::GivenRegistry;
use groundlog_core::logic::parse_program;
use groundlog_core::tensor::{read_checkpoint, write_checkpoint, Tensor};
use groundlog_core::train::{check_objective, evaluate, train, ObjectiveConfig, TrainConfig};

const PROGRAM: &str = r#"
domain X from "xs"
model N = mlp(1, 6, 1) hidden tanh output sigmoid seed 3
predicate P(X) = N
predicate Q(X) = table "q"
constraint "forall x: Q(x) -> P(x)" weight 1
constraint "exists x: not P(x)" test
pointwise N inputs X labels "y"
"#;

fn data() -> MemoryData {
    let xs = vec![-2.0, -1.0, 0.5, 1.0, 2.0];
    MemoryData::new()
        .with_domain("xs", Tensor::matrix(5, 1, xs).unwrap())
        .with_table("q", Tensor::new(vec![5], vec![0.0, 0.0, 1.0, 1.0, 1.0]).unwrap())
        .with_matrix("y", Tensor::matrix(5, 1, vec![0.0, 0.0, 1.0, 1.0, 1.0]).unwrap())
}

fn build(seed: u64) -> KnowledgeBase {
    let p = parse_program(PROGRAM).unwrap();
    KnowledgeBase::from_program(&p, &data(), &GivenRegistry::builtin(), seed).unwrap()
}

fn objective(family: TNormFamily) -> ObjectiveConfig {
    let mut cfg = ObjectiveConfig::default();
    cfg.compile.tnorm.family = family;
    cfg
}

#[test]
fn training_raises_rule_truth_and_lowers_loss() {
    let mut kb = build(0);
    let cfg = TrainConfig {
        epochs: 300,
        ..Default::default()
    };
    let report = train(&mut kb, &cfg).unwrap();
    let first = &report.epochs[0];
    let last = report.last().unwrap();
    assert_eq!(report.epochs.len(), 300);
    // test-only rules are not part of the logged objective
    assert_eq!(first.psi.len(), 1);
    assert!(last.total < first.total);
    assert!(last.psi[0] > first.psi[0]);
    assert!(last.psi[0] > 0.9, "{}", last.psi[0]);
    let csv = report.to_csv();
    assert!(csv.starts_with("epoch,total_loss,psi_0,pointwise_0\n"));
    assert_eq!(csv.lines().count(), 301);
}

#[test]
fn checkpoint_restores_identical_objective() {
    let mut trained = build(0);
    train(&mut trained, &TrainConfig { epochs: 50, ..Default::default() }).unwrap();
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, &trained.params().to_entries()).unwrap();

    let mut fresh = build(99);
    let cfg = ObjectiveConfig::default();
    let before = evaluate(&fresh, &cfg, false).unwrap().total;
    fresh.params_mut().load_entries(&read_checkpoint(bytes.as_slice()).unwrap()).unwrap();
    let want = evaluate(&trained, &cfg, false).unwrap();
    let got = evaluate(&fresh, &cfg, false).unwrap();
    assert_ne!(before, want.total);
    assert_eq!(got.total, want.total);
    assert_eq!(got.psi, want.psi);
}

#[test]
fn objective_gradients_match_finite_differences() {
    for family in TNormFamily::ALL {
        for loss in [LossMode::Linear, LossMode::Log] {
            let mut kb = build(1);
            let cfg = ObjectiveConfig {
                loss,
                ..objective(family)
            };
            let r = check_objective(&mut kb, &cfg, 1e-6, None).unwrap();
            assert!(r.checked > 0);
            assert!(r.max_rel_error < 1e-4, "{family} {loss:?}: {}", r.max_rel_error);
        }
    }
}
