//! One function per pipeline stage. Each reads its predecessors' artifacts,
//! writes its own, and fails with the producing stage's name when an input
//! is missing.

use std::collections::{BTreeMap, HashSet};
use std::time::Instant;

use fcd_core::attacks::{attack_log_csv, AdversarialExample, AttackKind};
use fcd_core::data::{
    balanced_select, build_ae_dataset, load_split, read_ae_split, read_images, read_stacks, save_png_strip,
    split_train_test, write_ae_split, write_images, write_stacks, AeEntry, BuildConfig, BuildLog, CifarSplit,
    StackEntry,
};
use fcd_core::denoiser::{evaluate_restoration, train_denoiser, DenoisePair, Denoiser, RestorationItem, RestorationReport};
use fcd_core::detector::{auc_pairwise, evaluate_detector, roc_csv, train_detector, Detector, LabeledStack};
use fcd_core::features::{build_stack, mfs, order_label, Feature, FeatureParams, FeatureStack};
use fcd_core::metrics::{perturbation_stat, similarity_csv, similarity_table, SimilarityRow};
use fcd_core::synthetic::write_dataset;
use fcd_core::train::FitReport;
use fcd_core::victim::{train_victim, Victim};
use fcd_core::{CoreError, CLASSES};
use fcd_tensor::Tensor;
use serde::Serialize;

use crate::config::Stage;
use crate::error::{CliError, Result};
use crate::layout::Run;

const VICTIM_TRAIN: &str = "victim_train";
const VICTIM_HELDOUT: &str = "victim_heldout";
const ATTACK_POOL: &str = "attack_pool";
const AE_TRAIN: &str = "ae_train";
const AE_TEST: &str = "ae_test";
const VICTIM: &str = "victim";

/// Planes every stored stack carries; models select from these.
const STORED_ORDER: [Feature; 3] = Feature::PROJECTIONS;

pub fn detector_stem(attack: AttackKind, order: &[Feature]) -> String {
    format!("detector-{attack}-{}", order_label(order))
}

pub fn denoiser_stem(set: &[Feature]) -> String {
    format!("denoiser-{}", order_label(set))
}

/// Runs `stage`; `run-all` runs the configured stages in pipeline order.
pub fn run_stage(run: &Run, stage: Stage) -> Result<()> {
    if stage == Stage::RunAll {
        for s in Stage::PIPELINE {
            if run.config.stages.contains(&s) {
                timed(run, s)?;
            }
        }
        return Ok(());
    }
    timed(run, stage)
}

fn timed(run: &Run, stage: Stage) -> Result<()> {
    log::info!("{stage}: start");
    let started = Instant::now();
    match stage {
        Stage::PrepareData => prepare_data(run),
        Stage::TrainVictim => train_victim_stage(run),
        Stage::GenAttacks => gen_attacks(run),
        Stage::ExtractFeatures => extract_features(run),
        Stage::TrainDetector => train_detectors(run),
        Stage::EvalDetector => eval_detectors(run),
        Stage::TrainDenoiser => train_denoisers(run),
        Stage::EvalDenoiser => eval_denoisers(run),
        Stage::MetricsReport => metrics_report(run),
        Stage::RunAll => unreachable!("expanded by run_stage"),
    }?;
    let seconds = started.elapsed().as_secs_f64();
    run.record_timing(stage, seconds)?;
    run.index_artifacts()?;
    log::info!("{stage}: done in {seconds:.1}s");
    Ok(())
}

// ------------------------------------------------------------------ data

#[derive(Serialize)]
struct DataReport {
    source: &'static str,
    classes: usize,
    victim_train: usize,
    victim_heldout: usize,
    attack_pool: usize,
}

fn prepare_data(run: &Run) -> Result<()> {
    let cfg = &run.config.data;
    let dir = run.data_dir();
    let source = match &cfg.synthetic {
        Some(s) => {
            write_dataset(&dir, s)?;
            "synthetic"
        }
        None if !dir.is_dir() => {
            return Err(CliError::Config(format!("data.cifar_dir {} does not exist", dir.display())));
        }
        None => "cifar-10",
    };
    let train = load_split(&dir, CifarSplit::Train)?;
    let test = load_split(&dir, CifarSplit::Test)?;
    let none = HashSet::new();
    let victim_train = balanced_select(&train, cfg.victim_train_per_class, run.seed("victim-train"), &none)?;
    let heldout = balanced_select(&test, cfg.victim_heldout_per_class, run.seed("victim-heldout"), &none)?;
    let taken: HashSet<String> = heldout.iter().map(|i| i.id.clone()).collect();
    let pool = balanced_select(&test, cfg.per_class_count, run.seed("attack-pool"), &taken)?;

    let manifests = run.path("manifests");
    write_images(&manifests, VICTIM_TRAIN, &victim_train)?;
    write_images(&manifests, VICTIM_HELDOUT, &heldout)?;
    write_images(&manifests, ATTACK_POOL, &pool)?;
    run.write_report(
        Stage::PrepareData,
        "data",
        &DataReport {
            source,
            classes: CLASSES,
            victim_train: victim_train.len(),
            victim_heldout: heldout.len(),
            attack_pool: pool.len(),
        },
    )
}

#[derive(Serialize)]
struct VictimReport {
    heldout_accuracy: f64,
    accuracy_gate: f64,
    n_train: usize,
    n_heldout: usize,
    fit: FitReport,
}

fn train_victim_stage(run: &Run) -> Result<()> {
    run.require(&format!("manifests/{VICTIM_TRAIN}.json"), Stage::PrepareData)?;
    run.require(&format!("manifests/{VICTIM_HELDOUT}.json"), Stage::PrepareData)?;
    let manifests = run.path("manifests");
    let train = read_images(&manifests, VICTIM_TRAIN)?;
    let heldout = read_images(&manifests, VICTIM_HELDOUT)?;
    let cfg = run.config.victim_config(run.seed("victim"));
    let (victim, fit) = train_victim(&train, &heldout, &cfg)?;
    victim.save(&run.path("models"), VICTIM)?;
    run.write_report(
        Stage::TrainVictim,
        "victim",
        &VictimReport {
            heldout_accuracy: victim.test_accuracy.unwrap_or_default(),
            accuracy_gate: cfg.accuracy_gate,
            n_train: train.len(),
            n_heldout: heldout.len(),
            fit,
        },
    )
}

fn load_victim(run: &Run) -> Result<Victim> {
    run.require(&format!("models/{VICTIM}.victim.json"), Stage::TrainVictim)?;
    Ok(Victim::load(&run.path("models"), VICTIM)?)
}

// --------------------------------------------------------------- attacks

#[derive(Serialize)]
struct AttackSummary {
    attack: AttackKind,
    attempted: usize,
    fooled: usize,
    usable: usize,
    fool_rate: f64,
    mean_l2: f64,
    mean_linf: f64,
    mean_iterations: f64,
}

#[derive(Serialize)]
struct AttacksReport {
    build: BuildLog,
    n_train: usize,
    n_test: usize,
    attacks: Vec<AttackSummary>,
}

fn summarize(kind: AttackKind, entries: &[AeEntry]) -> AttackSummary {
    let outcomes: Vec<_> = entries.iter().filter_map(|e| e.outcome(kind)).collect();
    let n = outcomes.len().max(1) as f64;
    let fooled = outcomes.iter().filter(|o| o.example.success).count();
    AttackSummary {
        attack: kind,
        attempted: outcomes.len(),
        fooled,
        usable: outcomes.iter().filter(|o| o.usable).count(),
        fool_rate: fooled as f64 / n,
        mean_l2: outcomes.iter().map(|o| o.example.l2_distortion).sum::<f64>() / n,
        mean_linf: outcomes.iter().map(|o| o.example.linf_distortion).sum::<f64>() / n,
        mean_iterations: outcomes.iter().map(|o| o.example.iterations_used as f64).sum::<f64>() / n,
    }
}

fn gen_attacks(run: &Run) -> Result<()> {
    run.require(&format!("manifests/{ATTACK_POOL}.json"), Stage::PrepareData)?;
    let victim = load_victim(run)?;
    let pool = read_images(&run.path("manifests"), ATTACK_POOL)?;
    let a = &run.config.attacks;
    let build = BuildConfig {
        confidence_floor: a.confidence_floor,
        fooled_confidence_floor: a.fooled_confidence_floor,
        attack_batch: a.batch,
    };
    let (entries, log) = build_ae_dataset(&pool, &victim, &a.configs, &build)?;
    if entries.is_empty() {
        return Err(CoreError::EmptySurvivors.into());
    }

    // every usable example must still fool the victim
    let usable: Vec<(&AeEntry, &AdversarialExample)> = entries
        .iter()
        .flat_map(|e| run.config.attack_kinds().into_iter().filter_map(move |k| e.usable(k).map(|x| (e, x))))
        .collect();
    let pixels: Vec<Tensor<f32>> = usable.iter().map(|(_, x)| x.pixels.clone()).collect();
    for ((e, x), p) in usable.iter().zip(victim.predict_batch(&pixels)?) {
        if p.label == e.benign.label {
            return Err(CliError::Check {
                stage: Stage::GenAttacks,
                reason: format!("usable example of {} does not fool the victim", x.source_id),
            });
        }
    }

    let (train, test) = split_train_test(&entries, a.split_ratio, run.seed("split"))?;
    let manifests = run.path("manifests");
    write_ae_split(&manifests, AE_TRAIN, &train)?;
    write_ae_split(&manifests, AE_TEST, &test)?;

    let all: Vec<AdversarialExample> = entries
        .iter()
        .flat_map(|e| e.attacks.iter().map(|o| o.example.clone()))
        .collect();
    run.write_text("reports/attack_log.csv", &attack_log_csv(&all))?;
    run.write_report(
        Stage::GenAttacks,
        "attacks",
        &AttacksReport {
            build: log,
            n_train: train.len(),
            n_test: test.len(),
            attacks: run.config.attack_kinds().into_iter().map(|k| summarize(k, &entries)).collect(),
        },
    )
}

fn read_ae_splits(run: &Run) -> Result<(Vec<AeEntry>, Vec<AeEntry>)> {
    run.require(&format!("manifests/{AE_TRAIN}.json"), Stage::GenAttacks)?;
    run.require(&format!("manifests/{AE_TEST}.json"), Stage::GenAttacks)?;
    let manifests = run.path("manifests");
    Ok((read_ae_split(&manifests, AE_TRAIN)?, read_ae_split(&manifests, AE_TEST)?))
}

// -------------------------------------------------------------- features

#[derive(Serialize)]
struct FeaturesReport {
    stored_order: Vec<Feature>,
    params: FeatureParams,
    train_stacks: usize,
    test_stacks: usize,
}

fn stacks_for(entries: &[AeEntry], params: &FeatureParams) -> Result<Vec<StackEntry>> {
    let mut out = Vec::with_capacity(entries.len() * 5);
    for e in entries {
        out.push(StackEntry {
            id: e.benign.id.clone(),
            label: e.benign.label,
            source: None,
            usable: true,
            stack: build_stack(&e.benign.pixels, &STORED_ORDER, true, params)?,
        });
        for o in &e.attacks {
            out.push(StackEntry {
                id: e.benign.id.clone(),
                label: e.benign.label,
                source: Some(o.kind),
                usable: o.usable,
                stack: build_stack(&o.example.pixels, &STORED_ORDER, true, params)?,
            });
        }
    }
    Ok(out)
}

fn extract_features(run: &Run) -> Result<()> {
    let (train, test) = read_ae_splits(run)?;
    let params = run.config.features;
    let train_stacks = stacks_for(&train, &params)?;
    let test_stacks = stacks_for(&test, &params)?;
    let dir = run.path("stacks");
    write_stacks(&dir, "train", &train_stacks)?;
    write_stacks(&dir, "test", &test_stacks)?;

    // planes of the first test image and its adversarial versions
    if let Some(first) = test_stacks.first() {
        for s in test_stacks.iter().take_while(|s| s.id == first.id) {
            let planes = [Feature::Image, Feature::Entropy, Feature::Mfs, Feature::Pfs]
                .iter()
                .map(|&f| s.stack.plane(f))
                .collect::<fcd_core::Result<Vec<_>>>()?;
            let name = s.source.map_or("benign".to_string(), |k| k.to_string());
            save_png_strip(&run.path(&format!("figures/features-{name}.png")), &planes.iter().collect::<Vec<_>>())?;
        }
    }
    run.write_report(
        Stage::ExtractFeatures,
        "features",
        &FeaturesReport {
            stored_order: STORED_ORDER.to_vec(),
            params,
            train_stacks: train_stacks.len(),
            test_stacks: test_stacks.len(),
        },
    )
}

/// A benign stack with its adversarial counterparts.
struct Group {
    id: String,
    label: usize,
    benign: FeatureStack,
    attacks: BTreeMap<AttackKind, (bool, FeatureStack)>,
}

impl Group {
    fn usable(&self, kind: AttackKind) -> Option<&FeatureStack> {
        self.attacks.get(&kind).filter(|(u, _)| *u).map(|(_, s)| s)
    }
}

fn read_groups(run: &Run, split: &str) -> Result<Vec<Group>> {
    run.require(&format!("stacks/{split}.json"), Stage::ExtractFeatures)?;
    let mut groups: Vec<Group> = Vec::new();
    for e in read_stacks(&run.path("stacks"), split)? {
        match e.source {
            None => groups.push(Group {
                id: e.id,
                label: e.label,
                benign: e.stack,
                attacks: BTreeMap::new(),
            }),
            Some(kind) => {
                let g = groups
                    .last_mut()
                    .filter(|g| g.id == e.id)
                    .ok_or_else(|| CliError::Config(format!("stacks/{split}: {} precedes its benign stack", e.id)))?;
                g.attacks.insert(kind, (e.usable, e.stack));
            }
        }
    }
    Ok(groups)
}

// -------------------------------------------------------------- detector

/// Benign and adversarial stacks of every image the attack fooled, with ids.
fn labeled_pairs(groups: &[Group], attack: AttackKind, order: &[Feature]) -> Result<(Vec<LabeledStack>, Vec<String>)> {
    let mut data = Vec::new();
    let mut ids = Vec::new();
    for g in groups {
        if let Some(adv) = g.usable(attack) {
            data.push(LabeledStack {
                stack: g.benign.select(order)?,
                adversarial: false,
            });
            data.push(LabeledStack {
                stack: adv.select(order)?,
                adversarial: true,
            });
            ids.extend([g.id.clone(), g.id.clone()]);
        }
    }
    Ok((data, ids))
}

#[derive(Serialize)]
struct DetectorTrainingRow {
    attack: AttackKind,
    feature_order: Vec<Feature>,
    n_train: usize,
    fit: FitReport,
}

fn train_detectors(run: &Run) -> Result<()> {
    let groups = read_groups(run, "train")?;
    let mut rows = Vec::new();
    for (attack, order) in run.config.detector_variants() {
        let stem = detector_stem(attack, &order);
        let (data, _) = labeled_pairs(&groups, attack, &order)?;
        log::info!("{stem}: {} training stacks", data.len());
        let (detector, fit) = train_detector(&data, attack, &order, &run.config.detector_config(run.seed(&stem)))?;
        detector.save(&run.path("models"), &stem)?;
        rows.push(DetectorTrainingRow {
            attack,
            feature_order: order,
            n_train: data.len(),
            fit,
        });
    }
    run.write_report(Stage::TrainDetector, "detector_training", &rows)
}

#[derive(Serialize)]
struct DetectionRow {
    attack: AttackKind,
    feature_order: Vec<Feature>,
    accuracy: f64,
    auc: f64,
    auc_pairwise: f64,
    n_test: usize,
}

fn eval_detectors(run: &Run) -> Result<()> {
    let variants = run.config.detector_variants();
    for (attack, order) in &variants {
        run.require(&format!("models/{}.detector.json", detector_stem(*attack, order)), Stage::TrainDetector)?;
    }
    let groups = read_groups(run, "test")?;
    let mut rows = Vec::new();
    for (attack, order) in variants {
        let stem = detector_stem(attack, &order);
        let detector = Detector::load(&run.path("models"), &stem)?;
        let (data, ids) = labeled_pairs(&groups, attack, &order)?;
        let (report, scores) = evaluate_detector(&detector, &data)?;
        let labels: Vec<bool> = data.iter().map(|d| d.adversarial).collect();
        let pairwise = auc_pairwise(&scores, &labels)?;
        if (pairwise - report.auc).abs() > 1e-9 {
            return Err(CliError::Check {
                stage: Stage::EvalDetector,
                reason: format!("{stem}: trapezoid AUC {} vs pairwise {pairwise}", report.auc),
            });
        }
        let mut csv = String::from("id,adversarial,score\n");
        for ((id, l), s) in ids.iter().zip(&labels).zip(&scores) {
            csv.push_str(&format!("{id},{},{s}\n", *l as u8));
        }
        run.write_text(&format!("reports/scores-{stem}.csv"), &csv)?;
        run.write_text(&format!("figures/roc-{stem}.csv"), &roc_csv(&report.roc_points))?;
        log::info!("{stem}: accuracy {:.4} auc {:.4}", report.accuracy, report.auc);
        rows.push(DetectionRow {
            attack,
            feature_order: order,
            accuracy: report.accuracy,
            auc: report.auc,
            auc_pairwise: pairwise,
            n_test: report.n_test,
        });
    }
    run.write_report(Stage::EvalDetector, "detection", &rows)
}

// -------------------------------------------------------------- denoiser

fn with_image(set: &[Feature]) -> Vec<Feature> {
    std::iter::once(Feature::Image).chain(set.iter().copied()).collect()
}

#[derive(Serialize)]
struct DenoiserTrainingRow {
    feature_order: Vec<Feature>,
    pairs_per_attack: BTreeMap<AttackKind, usize>,
    fit: FitReport,
}

fn train_denoisers(run: &Run) -> Result<()> {
    let groups = read_groups(run, "train")?;
    let cap = run.config.denoiser.max_pairs_per_attack.unwrap_or(usize::MAX);
    let mut rows = Vec::new();
    for set in &run.config.denoiser.feature_sets {
        let order = with_image(set);
        let mut pairs = Vec::new();
        let mut per_attack = BTreeMap::new();
        for kind in run.config.attack_kinds() {
            let before = pairs.len();
            for g in groups.iter().filter(|g| g.usable(kind).is_some()).take(cap) {
                pairs.push(DenoisePair {
                    noisy: g.usable(kind).expect("filtered").select(&order)?,
                    clean: g.benign.select(&order)?,
                });
            }
            per_attack.insert(kind, pairs.len() - before);
        }
        let stem = denoiser_stem(set);
        log::info!("{stem}: {} training pairs", pairs.len());
        let (denoiser, fit) = train_denoiser(&pairs, &run.config.denoiser_config(run.seed(&stem)))?;
        denoiser.save(&run.path("models"), &stem)?;
        rows.push(DenoiserTrainingRow {
            feature_order: order,
            pairs_per_attack: per_attack,
            fit,
        });
    }
    run.write_report(Stage::TrainDenoiser, "denoiser_training", &rows)
}

#[derive(Serialize)]
struct RestorationSummary {
    rows: Vec<RestorationReport>,
    /// Per feature set: mean restored fraction over the evaluated attacks.
    mean_restored: BTreeMap<String, f64>,
    /// Attacks without a single usable test example, per feature set.
    skipped_attacks: BTreeMap<String, Vec<AttackKind>>,
}

fn eval_denoisers(run: &Run) -> Result<()> {
    let sets = &run.config.denoiser.feature_sets;
    for set in sets {
        run.require(&format!("models/{}.denoiser.json", denoiser_stem(set)), Stage::TrainDenoiser)?;
    }
    let victim = load_victim(run)?;
    let groups = read_groups(run, "test")?;
    let mut summary = RestorationSummary {
        rows: Vec::new(),
        mean_restored: BTreeMap::new(),
        skipped_attacks: BTreeMap::new(),
    };
    for set in sets {
        let stem = denoiser_stem(set);
        let label = order_label(set);
        let denoiser = Denoiser::load(&run.path("models"), &stem)?;
        let order = with_image(set);
        let mut fractions = Vec::new();
        for kind in run.config.attack_kinds() {
            let items = groups
                .iter()
                .filter_map(|g| {
                    g.usable(kind).map(|adv| {
                        Ok(RestorationItem {
                            adversarial: adv.select(&order)?,
                            benign: g.benign.plane(Feature::Image)?,
                            true_label: g.label,
                        })
                    })
                })
                .collect::<fcd_core::Result<Vec<_>>>()?;
            if items.is_empty() {
                log::warn!("{stem}: no usable {kind} test examples");
                summary.skipped_attacks.entry(label.clone()).or_default().push(kind);
                continue;
            }
            let (report, denoised) = evaluate_restoration(&denoiser, &victim, kind, &items)?;
            if report.skipped == 0 {
                for (k, (item, restored)) in items.iter().zip(&denoised).take(run.config.denoiser.strips).enumerate() {
                    let adv = item.adversarial.plane(Feature::Image)?;
                    save_png_strip(
                        &run.path(&format!("figures/denoise-{label}-{kind}-{k}.png")),
                        &[&item.benign, &adv, restored],
                    )?;
                }
            }
            log::info!(
                "{stem} on {kind}: restored {:.3}, L2 {:.4} -> {:.4}",
                report.restored_fraction,
                report.mean_l2_before,
                report.mean_l2_after
            );
            fractions.push(report.restored_fraction);
            summary.rows.push(report);
        }
        if !fractions.is_empty() {
            summary
                .mean_restored
                .insert(label, fractions.iter().sum::<f64>() / fractions.len() as f64);
        }
    }
    run.write_report(Stage::EvalDenoiser, "restoration", &summary)
}

// --------------------------------------------------------------- metrics

#[derive(Serialize)]
struct PerturbationRow {
    attack: AttackKind,
    pairs: usize,
    delta: f64,
    mean_l2: f64,
    mean_linf: f64,
}

#[derive(Serialize)]
struct AmplificationRow {
    attack: AttackKind,
    /// Mean |MFS(adv) − MFS(benign)| over the similarity pool.
    mfs_difference: f64,
    /// Mean |adv − benign| over the same pool.
    pixel_difference: f64,
}

#[derive(Serialize)]
struct SimilarityReport {
    pool_ids: Vec<String>,
    rows: Vec<SimilarityRow>,
    amplification: Vec<AmplificationRow>,
}

fn mean_abs_diff(a: &Tensor<f32>, b: &Tensor<f32>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs() as f64).sum::<f64>() / a.len() as f64
}

fn metrics_report(run: &Run) -> Result<()> {
    let (train, test) = read_ae_splits(run)?;
    let mut entries: Vec<AeEntry> = train.into_iter().chain(test).collect();
    entries.sort_by(|a, b| a.benign.id.cmp(&b.benign.id));
    let kinds = run.config.attack_kinds();

    let mut perturbation = Vec::new();
    for &k in &kinds {
        let examples: Vec<(&AeEntry, &AdversarialExample)> =
            entries.iter().filter_map(|e| e.usable(k).map(|x| (e, x))).collect();
        if examples.is_empty() {
            log::warn!("metrics: no usable {k} examples");
            continue;
        }
        let pairs: Vec<(&Tensor<f32>, &Tensor<f32>)> =
            examples.iter().map(|(e, x)| (&e.benign.pixels, &x.pixels)).collect();
        let stat = perturbation_stat(k, &pairs)?;
        let n = examples.len() as f64;
        perturbation.push(PerturbationRow {
            attack: k,
            pairs: stat.pairs,
            delta: stat.delta,
            mean_l2: examples.iter().map(|(_, x)| x.l2_distortion).sum::<f64>() / n,
            mean_linf: examples.iter().map(|(_, x)| x.linf_distortion).sum::<f64>() / n,
        });
    }
    run.write_report(Stage::MetricsReport, "perturbation", &perturbation)?;

    let pool: Vec<&AeEntry> = entries
        .iter()
        .filter(|e| kinds.iter().all(|&k| e.usable(k).is_some()))
        .take(run.config.metrics.pool)
        .collect();
    if pool.is_empty() {
        return Err(CliError::Check {
            stage: Stage::MetricsReport,
            reason: "no image was fooled by every attack; the similarity pool is empty".into(),
        });
    }
    if pool.len() < run.config.metrics.pool {
        log::warn!("metrics: similarity pool has {} of {} images", pool.len(), run.config.metrics.pool);
    }
    let pools: Vec<(AttackKind, Vec<(&Tensor<f32>, &Tensor<f32>)>)> = kinds
        .iter()
        .map(|&k| {
            let pairs = pool
                .iter()
                .map(|e| (&e.benign.pixels, &e.usable(k).expect("pool is all-successful").pixels))
                .collect();
            (k, pairs)
        })
        .collect();
    let rows = similarity_table(&pools, &run.config.metrics.similarity)?;
    run.write_text("reports/similarity.csv", &similarity_csv(&rows))?;

    let mut amplification = Vec::new();
    for (k, pairs) in &pools {
        let (mut spectral, mut pixel) = (0.0, 0.0);
        for (b, a) in pairs {
            spectral += mean_abs_diff(&mfs(a)?.tensor, &mfs(b)?.tensor);
            pixel += mean_abs_diff(a, b);
        }
        amplification.push(AmplificationRow {
            attack: *k,
            mfs_difference: spectral / pairs.len() as f64,
            pixel_difference: pixel / pairs.len() as f64,
        });
    }

    if let Some(first) = pool.first() {
        let mut strip: Vec<&Tensor<f32>> = vec![&first.benign.pixels];
        strip.extend(kinds.iter().filter_map(|&k| first.usable(k).map(|x| &x.pixels)));
        save_png_strip(&run.path("figures/attacks.png"), &strip)?;
    }
    run.write_report(
        Stage::MetricsReport,
        "similarity",
        &SimilarityReport {
            pool_ids: pool.iter().map(|e| e.benign.id.clone()).collect(),
            rows,
            amplification,
        },
    )
}
