//! Acceptance gate for the whole pipeline: eight criteria, one test each,
//! each printing a single `criterion N (...): PASS|FAIL` line. The lines are
//! written straight to the stderr descriptor so they show up in a plain
//! `cargo test` run, not only under `--nocapture`. Every numeric bound here
//! was frozen from an independent probe before the assertions were written.

use ndarray::{Array1, Array2, Array3};
use promptcount::alignment::benchmark::{rotated_clusters, BenchmarkSpec};
use promptcount::alignment::{
    contrastive_loss, prepare_data, run_alignment, separation_report, ContrastiveConfig,
    PairBatch,
};
use promptcount::counter::dmap::{density_map_bytes, load_density_map, save_density_map};
use promptcount::counter::{
    total_loss, total_loss_grads, train_counter, CounterConfig, DensityDecoder,
    InteractionModule, TermWeights,
};
use promptcount::data::{generate_synthetic, gt_density_from_dots, resize_density, SynthConfig};
use promptcount::domain::{count_of, DensityMap, EmbeddingBatch, PromptVariant, Split};
use promptcount::encoders::{Backbone, FfnHead};
use promptcount::eval::{
    baseline_mean_count, constant_metrics, count_image, evaluate, prompt_gap,
};
use promptcount::model::{
    group_hashes, load_checkpoint, save_checkpoint, CountingModel, ModelConfig, ParamGroup,
    TrainState,
};
use promptcount::nn::gradcheck::check_gradient;
use promptcount::nn::{derive_seed, normalize_rows, normalize_rows_backward, seeded_rng};
use std::sync::OnceLock;

/// Prints the criterion verdict exactly once, FAIL included, even when an
/// assertion unwinds mid-test.
struct Verdict {
    n: usize,
    name: &'static str,
    passed: bool,
}

impl Verdict {
    fn start(n: usize, name: &'static str) -> Self {
        Verdict { n, name, passed: false }
    }
    fn pass(mut self) {
        self.passed = true;
    }
}

impl Drop for Verdict {
    fn drop(&mut self) {
        let line = format!(
            "criterion {} ({}): {}\n",
            self.n,
            self.name,
            if self.passed { "PASS" } else { "FAIL" }
        );
        // The test harness captures `println!` per test; write the verdict to
        // the raw stderr descriptor (one syscall, so parallel tests cannot
        // interleave mid-line) so it survives a plain `cargo test` run.
        #[cfg(unix)]
        {
            use std::io::Write;
            use std::os::unix::io::FromRawFd;
            let mut err = std::mem::ManuallyDrop::new(unsafe {
                std::fs::File::from_raw_fd(2)
            });
            let _ = err.write_all(line.as_bytes());
        }
        #[cfg(not(unix))]
        eprint!("{line}");
    }
}

fn unit2(theta: f64, dim: usize) -> Array1<f64> {
    let mut v = Array1::zeros(dim);
    v[0] = theta.cos();
    v[1] = theta.sin();
    v
}

// ---------------------------------------------------------------- criterion 1

#[test]
fn criterion_1_loss_oracles() {
    let v = Verdict::start(1, "loss value oracles");

    // a coincident positive pair scores zero
    let anchors = Array2::from_shape_vec((1, 4), vec![1.0, 0.0, 0.0, 0.0]).unwrap();
    let batch = PairBatch {
        anchors: EmbeddingBatch::new(anchors.clone(), true),
        partners: EmbeddingBatch::new(anchors.clone(), true),
        labels: vec![1],
        anchor_index: vec![0],
        partner_category: vec!["a".into()],
    };
    let (loss, _) = contrastive_loss(&batch, 1.0).unwrap();
    assert!(loss.abs() < 1e-9, "coincident positive: {loss}");

    // one negative pair at distance 0.4 with margin 1: (1/2)(0.6)^2 = 0.18
    let theta = 2.0 * (0.2f64).asin(); // chord 0.4 between unit vectors
    let mut a = Array2::zeros((1, 4));
    a.row_mut(0).assign(&unit2(0.0, 4));
    let mut p = Array2::zeros((1, 4));
    p.row_mut(0).assign(&unit2(theta, 4));
    let batch = PairBatch {
        anchors: EmbeddingBatch::new(a.clone(), true),
        partners: EmbeddingBatch::new(p, true),
        labels: vec![0],
        anchor_index: vec![0],
        partner_category: vec!["b".into()],
    };
    let (loss, _) = contrastive_loss(&batch, 1.0).unwrap();
    assert!((loss - 0.18).abs() < 1e-9, "hinge oracle: {loss}");

    // a distant negative (1.5 > margin) scores zero
    let theta = 2.0 * (0.75f64).asin();
    let mut p = Array2::zeros((1, 4));
    p.row_mut(0).assign(&unit2(theta, 4));
    let batch = PairBatch {
        anchors: EmbeddingBatch::new(a, true),
        partners: EmbeddingBatch::new(p, true),
        labels: vec![0],
        anchor_index: vec![0],
        partner_category: vec!["b".into()],
    };
    let (loss, _) = contrastive_loss(&batch, 1.0).unwrap();
    assert!(loss.abs() < 1e-9, "inactive hinge: {loss}");

    // density MSE: [[1,0],[0,1]] vs zeros -> 2/4 = 0.5
    let eye = DensityMap::new(ndarray::array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
    let zero = DensityMap::zeros(2, 2);
    let d = promptcount::counter::density_loss(&eye, &zero).unwrap();
    assert!((d - 0.5).abs() < 1e-9, "density oracle: {d}");

    // total loss: zero category map and gt, one-hot description/generalized
    // -> two gt terms of 1/4 plus two pair terms of 1/4 = 1.0
    let hot = DensityMap::new(ndarray::array![[1.0, 0.0], [0.0, 0.0]]).unwrap();
    let (total, breakdown) =
        total_loss(&zero, &hot, &hot, &zero, &TermWeights::default()).unwrap();
    assert!((total - 1.0).abs() < 1e-9, "total oracle: {total}");
    assert!((breakdown.pair_description_generalized).abs() < 1e-9);

    v.pass();
}

// ---------------------------------------------------------------- criterion 2

fn random_matrix(rows: usize, cols: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Array2<f64> {
    use rand::Rng;
    let mut m = Array2::zeros((rows, cols));
    for v in m.iter_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    m
}

fn positive_map(rows: usize, cols: usize, rng: &mut rand_chacha::ChaCha8Rng) -> DensityMap {
    use rand::Rng;
    let mut m = Array2::zeros((rows, cols));
    for v in m.iter_mut() {
        // keep cells well above zero so FD perturbation stays in range
        *v = rng.random_range(0.05..1.0);
    }
    DensityMap::new(m).unwrap()
}

/// FD check of the contrastive loss w.r.t. both embedding sides.
fn check_contrastive_fd(seed: u64) {
    let mut rng = seeded_rng(derive_seed(seed, "fd-contrastive"));
    let n = 6;
    let d = 6;
    let anchors = random_matrix(n, d, &mut rng);
    let partners = random_matrix(n, d, &mut rng);
    let labels = vec![1, 0, 1, 0, 0, 1];
    let mk = |a: &Array2<f64>, p: &Array2<f64>| PairBatch {
        anchors: EmbeddingBatch::new(a.clone(), false),
        partners: EmbeddingBatch::new(p.clone(), false),
        labels: labels.clone(),
        anchor_index: (0..n).collect(),
        partner_category: vec!["x".into(); n],
    };
    let (_, grads) = contrastive_loss(&mk(&anchors, &partners), 1.0).unwrap();

    let mut params: Vec<f64> = anchors.iter().copied().collect();
    let analytic: Vec<f64> = grads.d_anchors.iter().copied().collect();
    let report = check_gradient(&mut params, &analytic, 1e-5, 1e-4, 1e-8, |p| {
        let a = Array2::from_shape_vec((n, d), p.to_vec()).unwrap();
        contrastive_loss(&mk(&a, &partners), 1.0).unwrap().0
    });
    assert!(
        report.max_rel_error < 1e-4,
        "contrastive anchors seed {seed}: {:?}",
        report.worst
    );
    assert!(report.kink_fraction() < 0.25, "seed {seed}: {report:?}");

    let mut params: Vec<f64> = partners.iter().copied().collect();
    let analytic: Vec<f64> = grads.d_partners.iter().copied().collect();
    let report = check_gradient(&mut params, &analytic, 1e-5, 1e-4, 1e-8, |p| {
        let pa = Array2::from_shape_vec((n, d), p.to_vec()).unwrap();
        contrastive_loss(&mk(&anchors, &pa), 1.0).unwrap().0
    });
    assert!(
        report.max_rel_error < 1e-4,
        "contrastive partners seed {seed}: {:?}",
        report.worst
    );
}

/// FD check of the six-term consistency loss w.r.t. each predicted map.
fn check_total_loss_fd(seed: u64) {
    let mut rng = seeded_rng(derive_seed(seed, "fd-total"));
    let maps: Vec<DensityMap> = (0..3).map(|_| positive_map(8, 8, &mut rng)).collect();
    let gt = positive_map(8, 8, &mut rng);
    let weights = TermWeights::default();
    let (_, _, dmaps) = total_loss_grads(&maps[0], &maps[1], &maps[2], &gt, &weights).unwrap();

    for m in 0..3 {
        let mut params: Vec<f64> = maps[m].grid().iter().copied().collect();
        let analytic: Vec<f64> = dmaps[m].iter().copied().collect();
        let report = check_gradient(&mut params, &analytic, 1e-6, 1e-4, 1e-10, |p| {
            let grid = Array2::from_shape_vec((8, 8), p.to_vec()).unwrap();
            let perturbed = DensityMap::new(grid).unwrap();
            let all = [&perturbed, &maps[1], &maps[2]];
            let swapped: Vec<&DensityMap> = (0..3)
                .map(|i| if i == m { all[0] } else { [&maps[0], &maps[1], &maps[2]][i] })
                .collect();
            total_loss(swapped[0], swapped[1], swapped[2], &gt, &weights)
                .unwrap()
                .0
        });
        assert!(
            report.max_rel_error < 1e-4,
            "total_loss map {m} seed {seed}: {:?}",
            report.worst
        );
    }
}

/// FD check of the full alignment forward: 8x8 images -> backbone pooled ->
/// FFN (train-mode batch statistics) -> row normalization -> contrastive.
fn check_stage1_fd(seed: u64) {
    use rand::Rng;
    let mut rng = seeded_rng(derive_seed(seed, "fd-stage1"));
    // small patches so the backbone accepts 8x8 inputs directly
    let mut config = ModelConfig::toy(8, 8, seed);
    config.patch_size = 4;
    let model = CountingModel::new(config).unwrap();

    // three tiny images with distinct content
    let mut x = Array2::zeros((3, 8));
    for r in 0..3 {
        let mut img = Array3::<f32>::zeros((8, 8, 3));
        for v in img.iter_mut() {
            *v = rng.random_range(0.0..1.0);
        }
        let (_, pooled) = model.backbone.encode_image(&img).unwrap();
        x.row_mut(r).assign(&pooled);
    }
    let texts = {
        let raw = random_matrix(3, 8, &mut rng);
        normalize_rows(&raw).0
    };
    let labels = vec![1u8, 1, 1, 0, 0, 0];
    let anchor_index = vec![0usize, 1, 2, 0, 1, 2];
    let text_row = [0usize, 1, 2, 1, 2, 0];

    let base = model.ffn.clone();
    let loss_of = |ffn: &FfnHead| -> (f64, Option<(Array2<f64>, promptcount::encoders::FfnCache, Array1<f64>, Array2<f64>)>) {
        let (out, cache) = ffn.forward_train(&x);
        let (normalized, norms) = normalize_rows(&out);
        let mut anchors = Array2::zeros((6, 8));
        let mut partners = Array2::zeros((6, 8));
        for row in 0..6 {
            anchors.row_mut(row).assign(&normalized.row(anchor_index[row]));
            partners.row_mut(row).assign(&texts.row(text_row[row]));
        }
        let batch = PairBatch {
            anchors: EmbeddingBatch::new(anchors, true),
            partners: EmbeddingBatch::new(partners, true),
            labels: labels.clone(),
            anchor_index: anchor_index.clone(),
            partner_category: vec!["t".into(); 6],
        };
        let (loss, grads) = contrastive_loss(&batch, 1.0).unwrap();
        (loss, Some((normalized, cache, norms, grads.d_anchors)))
    };

    // analytic gradient of the first dense layer's weights
    let (_, ctx) = loss_of(&base);
    let (normalized, cache, norms, d_anchor_rows) = ctx.unwrap();
    let mut d_unique = Array2::zeros((3, 8));
    for row in 0..6 {
        let acc = &d_unique.row(anchor_index[row]) + &d_anchor_rows.row(row);
        d_unique.row_mut(anchor_index[row]).assign(&acc);
    }
    let d_out = normalize_rows_backward(&normalized, &norms, &d_unique);
    let (_, ffn_grads) = base.backward(&cache, &d_out);
    let analytic: Vec<f64> = ffn_grads.layers[0].w.iter().copied().collect();

    let mut params: Vec<f64> = base.layers[0].w.iter().copied().collect();
    let report = check_gradient(&mut params, &analytic, 1e-5, 1e-4, 1e-8, |p| {
        let mut ffn = base.clone();
        ffn.layers[0].w = Array2::from_shape_vec((8, 8), p.to_vec()).unwrap();
        loss_of(&ffn).0
    });
    assert!(
        report.max_rel_error < 1e-4,
        "stage-1 ffn seed {seed}: {:?}",
        report.worst
    );
    assert!(report.kink_fraction() < 0.25, "seed {seed}: {report:?}");
}

/// FD check of the full counting forward: fused tokens -> decoder -> 8x8 map
/// -> six-term loss, w.r.t. fusion and decoder parameters.
fn check_stage2_fd(seed: u64) {
    let mut rng = seeded_rng(derive_seed(seed, "fd-stage2"));
    let d = 8;
    let fusion = InteractionModule::new(d, 2, 2, &mut rng);
    let mut decoder = DensityDecoder::new(d, 6, &mut rng);
    // the shipped head starts at zero weights; spread it out so the check
    // exercises a nontrivial linearization point
    decoder.l2.w = 0.3 * &random_matrix(1, 6, &mut rng);
    decoder.l1.b = random_matrix(1, 6, &mut rng).row(0).to_owned();

    let tokens = random_matrix(4, d, &mut rng);
    let texts: Vec<Array2<f64>> = (0..3).map(|_| random_matrix(1, d, &mut rng)).collect();
    let gt = positive_map(8, 8, &mut rng);
    let weights = TermWeights::default();

    let forward_all = |fusion: &InteractionModule, decoder: &DensityDecoder| {
        let mut maps = Vec::new();
        let mut f_caches = Vec::new();
        let mut d_caches = Vec::new();
        for text in &texts {
            let (fused, fc) = fusion.fuse_train(&tokens, text).unwrap();
            let (map, dc) = decoder.decode_train(&fused, 2, 2, 8, 8).unwrap();
            maps.push(map);
            f_caches.push(fc);
            d_caches.push(dc);
        }
        (maps, f_caches, d_caches)
    };
    let loss_of = |fusion: &InteractionModule, decoder: &DensityDecoder| {
        let (maps, _, _) = forward_all(fusion, decoder);
        total_loss(&maps[0], &maps[1], &maps[2], &gt, &weights).unwrap().0
    };

    // analytic grads via the same chain the trainer uses
    let (maps, f_caches, d_caches) = forward_all(&fusion, &decoder);
    let (_, _, dmaps) = total_loss_grads(&maps[0], &maps[1], &maps[2], &gt, &weights).unwrap();
    let mut g_wk = Array2::<f64>::zeros((d, d));
    let mut g_l1w = Array2::<f64>::zeros(decoder.l1.w.raw_dim());
    for v in 0..3 {
        let (dtokens, dec_grads) = decoder.backward(&d_caches[v], &dmaps[v]);
        let (_, fus_grads, _) = fusion.backward(&f_caches[v], &dtokens);
        g_wk += &fus_grads.w_k;
        g_l1w += &dec_grads.l1.w;
    }

    let mut params: Vec<f64> = fusion.w_k.iter().copied().collect();
    let analytic: Vec<f64> = g_wk.iter().copied().collect();
    let report = check_gradient(&mut params, &analytic, 1e-5, 1e-4, 1e-8, |p| {
        let mut f = fusion.clone();
        f.w_k = Array2::from_shape_vec((d, d), p.to_vec()).unwrap();
        loss_of(&f, &decoder)
    });
    assert!(
        report.max_rel_error < 1e-4,
        "stage-2 w_k seed {seed}: {:?}",
        report.worst
    );
    assert!(report.kink_fraction() < 0.25, "seed {seed}: {report:?}");

    let shape = decoder.l1.w.raw_dim();
    let mut params: Vec<f64> = decoder.l1.w.iter().copied().collect();
    let analytic: Vec<f64> = g_l1w.iter().copied().collect();
    let report = check_gradient(&mut params, &analytic, 1e-5, 1e-4, 1e-8, |p| {
        let mut dec = decoder.clone();
        dec.l1.w = Array2::from_shape_vec(shape.clone(), p.to_vec()).unwrap();
        loss_of(&fusion, &dec)
    });
    assert!(
        report.max_rel_error < 1e-4,
        "stage-2 decoder seed {seed}: {:?}",
        report.worst
    );
    assert!(report.kink_fraction() < 0.25, "seed {seed}: {report:?}");
}

#[test]
fn criterion_2_gradients_match_finite_differences() {
    let v = Verdict::start(2, "analytic gradients vs central differences, 20 seeds");
    let start = std::time::Instant::now();
    for seed in 0..20u64 {
        check_contrastive_fd(seed);
        check_total_loss_fd(seed);
        check_stage1_fd(seed);
        check_stage2_fd(seed);
    }
    assert!(
        start.elapsed().as_secs() < 120,
        "gradient checks exceeded two minutes"
    );
    v.pass();
}

// ---------------------------------------------------------------- criterion 3

#[test]
fn criterion_3_freezing_contract() {
    let v = Verdict::start(3, "inactive parameter groups never move");

    let data = generate_synthetic(&SynthConfig { seed: 3, ..Default::default() }, 60).unwrap();
    let train: Vec<_> = data
        .iter()
        .filter(|(s, _)| s.split == Split::Train)
        .cloned()
        .collect();
    let model = CountingModel::new(ModelConfig::toy(16, 32, 3)).unwrap();
    let mut state = TrainState::new(model, 3);

    let at_start = group_hashes(&state.model);
    let align_data = prepare_data(&state.model, &train).unwrap();
    let align_config = ContrastiveConfig {
        epochs: 5,
        learning_rate: 0.05,
        seed: 3,
        ..Default::default()
    };
    run_alignment(&mut state, &align_data, &align_config).unwrap();
    let after_align = group_hashes(&state.model);

    for group in [
        ParamGroup::BackboneVisual,
        ParamGroup::BackboneText,
        ParamGroup::Fusion,
        ParamGroup::Decoder,
    ] {
        assert_eq!(at_start[&group], after_align[&group], "{group} moved in stage 1");
    }
    for group in [ParamGroup::Ffn, ParamGroup::Adapter] {
        assert_ne!(at_start[&group], after_align[&group], "{group} never trained");
    }

    let counter_config = CounterConfig {
        epochs: 5,
        batch_size: 16,
        learning_rate: 3e-3,
        seed: 3,
        ..Default::default()
    };
    train_counter(&mut state, &train, &counter_config).unwrap();
    let after_counter = group_hashes(&state.model);

    for group in [
        ParamGroup::BackboneVisual,
        ParamGroup::BackboneText,
        ParamGroup::Ffn,
        ParamGroup::Adapter,
    ] {
        assert_eq!(
            after_align[&group], after_counter[&group],
            "{group} moved in stage 2"
        );
    }
    for group in [ParamGroup::Fusion, ParamGroup::Decoder] {
        assert_ne!(
            after_align[&group], after_counter[&group],
            "{group} never trained"
        );
    }

    v.pass();
}

// ---------------------------------------------------------------- criterion 4

#[test]
fn criterion_4_count_conservation() {
    let v = Verdict::start(4, "density mass equals the dot count, resize included");

    let data = generate_synthetic(&SynthConfig { seed: 4, ..Default::default() }, 500).unwrap();
    assert_eq!(data.len(), 500);
    for (sample, _) in &data {
        let truth = sample.dots.len() as f64;
        let native =
            gt_density_from_dots(&sample.dots, sample.height(), sample.width(), 2.0).unwrap();
        let native_count = count_of(&native).unwrap();
        assert!(
            (native_count - truth).abs() < 1e-4,
            "{}: rasterized {native_count} vs {truth}",
            sample.id
        );
        for (h, w) in [(32, 32), (37, 53)] {
            let resized = resize_density(&native, h, w);
            let c = count_of(&resized).unwrap();
            assert!(
                (c - truth).abs() < 1e-4,
                "{}: {c} vs {truth} after resize to {h}x{w}",
                sample.id
            );
        }
    }

    v.pass();
}

// ---------------------------------------------------------------- criterion 5

#[test]
fn criterion_5_alignment_effect() {
    let v = Verdict::start(5, "stage 1 separates the embedding benchmark");

    let (train, _) = rotated_clusters(&BenchmarkSpec::default());

    let fresh = || {
        let model = CountingModel::new(ModelConfig::toy(16, 32, 0)).unwrap();
        TrainState::new(model, 0)
    };

    // untrained: near chance
    let untrained = separation_report(&train, &fresh()).unwrap();
    assert!(
        (0.4..=0.6).contains(&untrained.pair_accuracy),
        "untrained accuracy {:.3} not near 0.5",
        untrained.pair_accuracy
    );

    // margin 1.0, 150 epochs: strong separation
    let mut state = fresh();
    let config = ContrastiveConfig {
        margin: 1.0,
        epochs: 150,
        learning_rate: 0.05,
        seed: 0,
        ..Default::default()
    };
    run_alignment(&mut state, &train, &config).unwrap();
    let with_margin_1 = separation_report(&train, &state).unwrap();
    assert!(
        with_margin_1.pair_accuracy >= 0.95,
        "margin 1.0 accuracy {:.3} < 0.95",
        with_margin_1.pair_accuracy
    );
    assert!(with_margin_1.mean_pos_dist < with_margin_1.mean_neg_dist);

    // a small margin stops pushing once negatives clear 0.2, so it may not
    // beat the wide margin on crowded categories
    let mut state = fresh();
    let config = ContrastiveConfig {
        margin: 0.2,
        epochs: 100,
        learning_rate: 0.05,
        seed: 0,
        ..Default::default()
    };
    run_alignment(&mut state, &train, &config).unwrap();
    let with_margin_02 = separation_report(&train, &state).unwrap();
    assert!(
        with_margin_1.pair_accuracy >= with_margin_02.pair_accuracy,
        "margin 1.0 ({:.3}) fell below margin 0.2 at epoch 100 ({:.3})",
        with_margin_1.pair_accuracy,
        with_margin_02.pair_accuracy
    );

    v.pass();
}

// ------------------------------------------------------- criteria 6 and 7

struct EndToEndRun {
    seed: u64,
    consistency: bool,
    test_mae: f64,
    baseline_mae: f64,
    val_gap: f64,
}

static RUNS: OnceLock<Vec<EndToEndRun>> = OnceLock::new();

fn end_to_end_runs() -> &'static [EndToEndRun] {
    RUNS.get_or_init(|| {
        let mut runs = Vec::new();
        for seed in 0..3u64 {
            for consistency in [true, false] {
                let data =
                    generate_synthetic(&SynthConfig { seed, ..Default::default() }, 200).unwrap();
                let train: Vec<_> = data
                    .iter()
                    .filter(|(s, _)| s.split == Split::Train)
                    .cloned()
                    .collect();
                let model = CountingModel::new(ModelConfig::toy(32, 32, seed)).unwrap();
                let mut state = TrainState::new(model, seed);

                let align_data = prepare_data(&state.model, &train).unwrap();
                let align_config = ContrastiveConfig {
                    epochs: 30,
                    learning_rate: 0.05,
                    seed,
                    ..Default::default()
                };
                run_alignment(&mut state, &align_data, &align_config).unwrap();

                let weights = if consistency {
                    TermWeights::default()
                } else {
                    TermWeights::without_consistency()
                };
                let counter_config = CounterConfig {
                    weights,
                    epochs: 200,
                    batch_size: 16,
                    learning_rate: 3e-3,
                    seed,
                    ..Default::default()
                };
                train_counter(&mut state, &train, &counter_config).unwrap();

                let baseline = baseline_mean_count(&data, Split::Train).unwrap();
                let (baseline_mae, _) = constant_metrics(&data, Split::Test, baseline).unwrap();
                let report =
                    evaluate(&data, Split::Test, PromptVariant::Category, &state.model).unwrap();
                let val_gap = prompt_gap(
                    &data,
                    Split::Val,
                    PromptVariant::Category,
                    PromptVariant::Description,
                    &state.model,
                )
                .unwrap();
                runs.push(EndToEndRun {
                    seed,
                    consistency,
                    test_mae: report.mae,
                    baseline_mae,
                    val_gap,
                });
            }
        }
        runs
    })
}

#[test]
fn criterion_6_end_to_end_learning() {
    let v = Verdict::start(6, "trained pipeline beats the mean-count baseline");
    let start = std::time::Instant::now();
    for run in end_to_end_runs().iter().filter(|r| r.consistency) {
        assert!(
            run.test_mae < run.baseline_mae,
            "seed {}: test MAE {:.3} not below baseline {:.3}",
            run.seed,
            run.test_mae,
            run.baseline_mae
        );
    }
    assert!(
        start.elapsed().as_secs() < 900,
        "end-to-end runs exceeded fifteen minutes"
    );
    v.pass();
}

#[test]
fn criterion_7_consistency_effect() {
    let v = Verdict::start(7, "consistency terms shrink the prompt gap");
    for seed in 0..3u64 {
        let gap = |consistency: bool| {
            end_to_end_runs()
                .iter()
                .find(|r| r.seed == seed && r.consistency == consistency)
                .map(|r| r.val_gap)
                .unwrap()
        };
        let (with, without) = (gap(true), gap(false));
        assert!(
            with < without,
            "seed {seed}: gap {with:.3} with consistency vs {without:.3} without",
        );
    }
    v.pass();
}

// ---------------------------------------------------------------- criterion 8

#[test]
fn criterion_8_determinism_and_round_trips() {
    let v = Verdict::start(8, "fixed seeds reproduce bytes; formats round-trip");
    let dir = tempfile::tempdir().unwrap();

    // the same seeded mini-pipeline twice, from scratch
    let mini = || {
        let data =
            generate_synthetic(&SynthConfig { seed: 9, ..Default::default() }, 40).unwrap();
        let train: Vec<_> = data
            .iter()
            .filter(|(s, _)| s.split == Split::Train)
            .cloned()
            .collect();
        let model = CountingModel::new(ModelConfig::toy(16, 32, 9)).unwrap();
        let mut state = TrainState::new(model, 9);
        let align_data = prepare_data(&state.model, &train).unwrap();
        let align_config = ContrastiveConfig {
            epochs: 3,
            learning_rate: 0.05,
            seed: 9,
            ..Default::default()
        };
        run_alignment(&mut state, &align_data, &align_config).unwrap();
        let counter_config = CounterConfig {
            epochs: 3,
            batch_size: 8,
            learning_rate: 3e-3,
            seed: 9,
            ..Default::default()
        };
        train_counter(&mut state, &train, &counter_config).unwrap();
        (data, state)
    };
    let (data_a, state_a) = mini();
    let (_, state_b) = mini();

    let ckpt_a = dir.path().join("a.ckpt");
    let ckpt_b = dir.path().join("b.ckpt");
    save_checkpoint(&state_a, &ckpt_a).unwrap();
    save_checkpoint(&state_b, &ckpt_b).unwrap();
    let bytes_a = std::fs::read(&ckpt_a).unwrap();
    assert_eq!(
        bytes_a,
        std::fs::read(&ckpt_b).unwrap(),
        "checkpoints of identical runs differ"
    );

    // evaluation reports serialize identically
    let report_a = evaluate(&data_a, Split::Val, PromptVariant::Category, &state_a.model).unwrap();
    let report_b = evaluate(&data_a, Split::Val, PromptVariant::Category, &state_b.model).unwrap();
    assert_eq!(
        serde_json::to_string(&report_a).unwrap(),
        serde_json::to_string(&report_b).unwrap()
    );

    // density maps are bit-identical across runs and survive the file format
    let (sample, prompts) = &data_a[0];
    let (_, map_a) = count_image(&sample.pixels, &prompts.t_p, &state_a.model).unwrap();
    let (_, map_b) = count_image(&sample.pixels, &prompts.t_p, &state_b.model).unwrap();
    assert_eq!(density_map_bytes(&map_a), density_map_bytes(&map_b));
    let dmap_path = dir.path().join("m.dmap");
    save_density_map(&dmap_path, &map_a).unwrap();
    let loaded = load_density_map(&dmap_path).unwrap();
    // payload floats are stored as f32; round-tripping the loaded map is exact
    save_density_map(&dmap_path, &loaded).unwrap();
    assert_eq!(load_density_map(&dmap_path).unwrap().grid(), loaded.grid());

    // checkpoints restore parameters exactly
    let restored = load_checkpoint(&ckpt_a).unwrap();
    assert_eq!(group_hashes(&restored.model), group_hashes(&state_a.model));
    assert_eq!(restored.model.config, state_a.model.config);
    assert_eq!(restored.epoch, state_a.epoch);
    let (_, map_r) = count_image(&sample.pixels, &prompts.t_p, &restored.model).unwrap();
    assert_eq!(density_map_bytes(&map_r), density_map_bytes(&map_a));

    // embedding dumps round-trip losslessly
    use promptcount::encoders::dump::{
        load_embedding_dump, save_embedding_dump, DumpEntry,
    };
    let mut rng = seeded_rng(derive_seed(9, "dump"));
    let entries = vec![
        (
            "img_0001".to_string(),
            DumpEntry::VisualPooled(random_matrix(1, 8, &mut rng).row(0).to_owned()),
        ),
        (
            "img_0001".to_string(),
            DumpEntry::VisualTokens(random_matrix(4, 8, &mut rng)),
        ),
        (
            "img_0002".to_string(),
            DumpEntry::Text(
                PromptVariant::Category,
                random_matrix(1, 8, &mut rng).row(0).to_owned(),
            ),
        ),
    ];
    // f32 payload: write values that survive the narrowing exactly
    let entries: Vec<(String, DumpEntry)> = entries
        .into_iter()
        .map(|(id, e)| {
            let quantize = |v: f64| f64::from(v as f32);
            let e = match e {
                DumpEntry::VisualPooled(v) => DumpEntry::VisualPooled(v.mapv(quantize)),
                DumpEntry::VisualTokens(t) => DumpEntry::VisualTokens(t.mapv(quantize)),
                DumpEntry::Text(p, v) => DumpEntry::Text(p, v.mapv(quantize)),
            };
            (id, e)
        })
        .collect();
    let dump_path = dir.path().join("e.pcemb");
    save_embedding_dump(&dump_path, 8, &entries).unwrap();
    let dump = load_embedding_dump(&dump_path).unwrap();
    assert_eq!(dump.dim, 8);
    let rec = &dump.records["img_0001"];
    match &entries[0].1 {
        DumpEntry::VisualPooled(v) => {
            assert_eq!(rec.visual_pooled.as_ref().unwrap(), v);
        }
        _ => unreachable!(),
    }
    match &entries[1].1 {
        DumpEntry::VisualTokens(t) => {
            assert_eq!(rec.visual_tokens.as_ref().unwrap(), t);
        }
        _ => unreachable!(),
    }
    match &entries[2].1 {
        DumpEntry::Text(p, vv) => {
            assert_eq!(&dump.records["img_0002"].text[p], vv);
        }
        _ => unreachable!(),
    }

    v.pass();
}
