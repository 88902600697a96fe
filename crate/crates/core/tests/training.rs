use daplkit_core::data::generate_synthetic_task;
use daplkit_core::objectives::generate_pseudo_labels;
use daplkit_core::trainer::{self, Batch};
use daplkit_core::{
    Backbone, BackboneConfig, Dataset, DomainId, HeadConfig, PromptBank, PromptConfig, PromptGrads, PromptMode,
    PseudoLabelConfig, PseudoLabelSet, SyntheticSpec, TrainConfig,
};
use ndarray::{concatenate, Array2, Axis};

fn small_backbone() -> Backbone {
    Backbone::build(&BackboneConfig {
        num_classes: 3,
        input_dim: 8,
        embed_dim: 8,
        hidden_dim: 16,
        feature_dim: 8,
        ..BackboneConfig::default()
    })
    .unwrap()
}

fn small_task(seed: u64) -> (Dataset, Dataset) {
    generate_synthetic_task(&SyntheticSpec {
        num_classes: 3,
        source_samples: 60,
        target_samples: 45,
        input_dim: 8,
        class_separation: 3.0,
        rotation_deg: 25.0,
        translation: SyntheticSpec::nuisance_translation(8, 3, 3.0).unwrap(),
        noise_std: 0.5,
        seed,
    })
    .unwrap()
}

fn train_config(mode: PromptMode, epochs: usize, lr0: f64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 16,
        lr0,
        seed: 5,
        prompt: PromptConfig::new(mode, 3, 2, 3, 8).normalized(),
        head: HeadConfig::default(),
        pseudo: PseudoLabelConfig::default(),
        use_target_loss: true,
    }
}

struct Fixture {
    backbone: Backbone,
    source: Array2<f64>,
    labels: Vec<usize>,
    target: Array2<f64>,
    pseudo: PseudoLabelSet,
    head: HeadConfig,
}

impl Fixture {
    fn new(tau: f64) -> Self {
        let backbone = small_backbone();
        let (s, t) = small_task(1);
        let source = backbone.encode_images(s.inputs().slice(ndarray::s![..10, ..])).unwrap();
        let labels = s.training_view().labels().unwrap()[..10].to_vec();
        let target = backbone.encode_images(t.inputs().slice(ndarray::s![..10, ..])).unwrap();
        let head = HeadConfig::new(0.3).unwrap();
        let manual = backbone.manual_features().unwrap();
        let pseudo = generate_pseudo_labels(
            target.view(),
            manual.view(),
            head.temperature,
            &PseudoLabelConfig {
                tau,
                ..Default::default()
            },
        )
        .unwrap();
        Self {
            backbone,
            source,
            labels,
            target,
            pseudo,
            head,
        }
    }

    fn batch(&self, use_target_loss: bool) -> Batch<'_> {
        Batch {
            source_feats: self.source.view(),
            source_labels: &self.labels,
            target_feats: self.target.view(),
            pseudo: &self.pseudo,
            use_target_loss,
        }
    }

    fn bank(&self, mode: PromptMode) -> PromptBank {
        let cfg = PromptConfig {
            init_std: 0.3,
            ..PromptConfig::new(mode, 3, 2, 3, 8)
        }
        .normalized();
        PromptBank::init(&cfg, &self.backbone.tokens, self.backbone.class_names(), 11).unwrap()
    }
}

fn max_abs_diff(a: &PromptGrads, b: &PromptGrads) -> f64 {
    a.flatten()
        .iter()
        .zip(b.flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn analytic_gradients_match_finite_differences_in_every_mode() {
    let fx = Fixture::new(0.4);
    assert!(fx.pseudo.accepted_count() > 0);
    for mode in [
        PromptMode::Unified,
        PromptMode::ClassSpecific,
        PromptMode::UnifiedDsc,
        PromptMode::ClassSpecificDsc,
    ] {
        let bank = fx.bank(mode);
        let out = trainer::prompt_gradients(&bank, &fx.backbone.text, &fx.batch(true), &fx.head).unwrap();
        let fd =
            trainer::finite_difference_gradients(&bank, &fx.backbone.text, &fx.batch(true), &fx.head, 1e-5).unwrap();
        let err = trainer::max_relative_error(&out.grads, &fd, 1e-7);
        assert!(err < 1e-4, "{mode}: relative error {err}");
    }
    let manual = fx.bank(PromptMode::Manual);
    let out = trainer::prompt_gradients(&manual, &fx.backbone.text, &fx.batch(true), &fx.head).unwrap();
    assert!(out.grads.flatten().is_empty());
}

#[test]
fn duplicated_batch_leaves_gradient_unchanged() {
    let fx = Fixture::new(0.4);
    let bank = fx.bank(PromptMode::UnifiedDsc);
    let once = trainer::prompt_gradients(&bank, &fx.backbone.text, &fx.batch(true), &fx.head).unwrap();
    let source = concatenate![Axis(0), fx.source, fx.source];
    let labels: Vec<usize> = fx.labels.iter().chain(&fx.labels).copied().collect();
    let target = concatenate![Axis(0), fx.target, fx.target];
    let indices: Vec<usize> = (0..fx.pseudo.len()).chain(0..fx.pseudo.len()).collect();
    let pseudo = fx.pseudo.select(&indices).unwrap();
    let batch = Batch {
        source_feats: source.view(),
        source_labels: &labels,
        target_feats: target.view(),
        pseudo: &pseudo,
        use_target_loss: true,
    };
    let twice = trainer::prompt_gradients(&bank, &fx.backbone.text, &batch, &fx.head).unwrap();
    assert!((once.total_loss() - twice.total_loss()).abs() < 1e-12);
    assert!(max_abs_diff(&once.grads, &twice.grads) < 1e-12);
}

#[test]
fn threshold_above_every_confidence_leaves_only_the_source_gradient() {
    let fx = Fixture::new(1.0);
    assert_eq!(fx.pseudo.accepted_count(), 0);
    let bank = fx.bank(PromptMode::UnifiedDsc);
    let gated = trainer::prompt_gradients(&bank, &fx.backbone.text, &fx.batch(true), &fx.head).unwrap();
    let plain = trainer::prompt_gradients(&bank, &fx.backbone.text, &fx.batch(false), &fx.head).unwrap();
    assert_eq!(gated.target_loss, 0.0);
    assert_eq!(gated.total_loss(), plain.source_loss);
    assert_eq!(gated.grads, plain.grads);
}

#[test]
fn small_step_against_the_target_context_gradient_lowers_the_loss() {
    let fx = Fixture::new(0.4);
    let bank = fx.bank(PromptMode::UnifiedDsc);
    let batch = fx.batch(true);
    let out = trainer::prompt_gradients(&bank, &fx.backbone.text, &batch, &fx.head).unwrap();
    let d_tgt = &out.grads.d_tgt;
    let norm2: f64 = d_tgt.iter().map(|g| g * g).sum();
    assert!(norm2 > 0.0);
    let base = trainer::batch_loss(&bank, &fx.backbone.text, &batch, &fx.head).unwrap();
    for eta in [1e-2, 1e-3, 1e-4] {
        let mut moved = bank.clone();
        *moved.domain_context_mut(DomainId::Target) -= &(d_tgt * eta);
        let loss = trainer::batch_loss(&moved, &fx.backbone.text, &batch, &fx.head).unwrap();
        assert!(loss < base, "eta {eta}: {loss} >= {base}");
        // first-order prediction
        let predicted = base - eta * norm2;
        assert!((loss - predicted).abs() < 0.5 * eta * norm2 + 1e-12);
    }
}

#[test]
fn zero_learning_rate_keeps_the_initial_bank() {
    let backbone = small_backbone();
    let (s, t) = small_task(2);
    let cfg = train_config(PromptMode::UnifiedDsc, 1, 0.0);
    let result = trainer::train(&cfg, s.training_view(), t.training_view(), &backbone, None).unwrap();
    let initial = PromptBank::init(&cfg.prompt, &backbone.tokens, backbone.class_names(), cfg.seed).unwrap();
    assert_eq!(result.bank, initial);
    assert_eq!(result.metrics.len(), 1);
    assert!(result.metrics[0].ls > 0.0);
    assert_eq!(result.metrics[0].acc, None);
}

#[test]
fn training_is_deterministic_and_moves_only_learnable_blocks() {
    let backbone = small_backbone();
    let (s, t) = small_task(3);
    let cfg = train_config(PromptMode::ClassSpecificDsc, 4, 0.05);
    let a = trainer::train(&cfg, s.training_view(), t.training_view(), &backbone, None).unwrap();
    let b = trainer::train(&cfg, s.training_view(), t.training_view(), &backbone, None).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.bank, b.bank);
    assert_eq!(a.pseudo_labels, b.pseudo_labels);
    assert!(a.divergence.is_none());
    let initial = PromptBank::init(&cfg.prompt, &backbone.tokens, backbone.class_names(), cfg.seed).unwrap();
    assert_eq!(a.bank.class_tokens(), initial.class_tokens());
    assert!(a.bank.context().iter().zip(initial.context()).all(|(x, y)| x != y));
    assert_ne!(
        a.bank.domain_context(DomainId::Target),
        initial.domain_context(DomainId::Target)
    );
    assert_eq!(backbone, small_backbone());

    let lrs: Vec<f64> = a.metrics.iter().map(|m| m.lr).collect();
    assert_eq!(lrs[0], 0.05);
    assert!(lrs.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn training_rejects_mismatched_label_spaces() {
    let backbone = small_backbone();
    let (s, t) = small_task(4);
    let mut cfg = train_config(PromptMode::Unified, 1, 0.01);
    cfg.prompt = PromptConfig::new(PromptMode::Unified, 3, 0, 4, 8);
    assert!(trainer::train(&cfg, s.training_view(), t.training_view(), &backbone, None).is_err());
    let cfg = TrainConfig {
        epochs: 0,
        ..train_config(PromptMode::Unified, 1, 0.01)
    };
    assert!(trainer::train(&cfg, s.training_view(), t.training_view(), &backbone, None).is_err());
}
