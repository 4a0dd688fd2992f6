use gravcomp::evaluation::{clean_test_set, offline_eval};
use gravcomp::features::{fit_norm_params, normalize_dataset};
use gravcomp::learning::{
    collect_dataset, masked_loss, random_sample_states, train_lfs, train_pkd, train_pkd_on,
    train_with_norm, Dataset, Provenance, TrainHyper,
};
use gravcomp::plant::{NoiseParams, Plant};
use gravcomp::seed;
use gravcomp::teacher::{make_biased_teacher, TeacherModel, HIGH_BIAS, LOW_BIAS};

fn quick_hyper(steps: usize) -> TrainHyper {
    TrainHyper {
        max_steps: steps,
        teacher_samples: 5000,
        ..TrainHyper::default()
    }
}

fn system_data(p: &Plant, count: usize, tag: u64) -> Dataset {
    let states = random_sample_states(&p.robot.joint_limits, count, &mut seed::rng(tag)).unwrap();
    collect_dataset(p, &states, &mut seed::rng(tag + 1000)).unwrap()
}

#[test]
fn noiseless_rich_data_learns_every_joint() {
    let mut p = Plant::fixture();
    p.noise = NoiseParams::noiseless(6);
    let train = system_data(&p, 5000, 1);
    let val = system_data(&p, 1000, 2);
    let test = clean_test_set(&p, 300, &mut seed::rng(3)).unwrap();
    let kinds = p.robot.joint_kinds();
    let out = train_lfs(&train, &val, &kinds, &p.robot.name, &quick_hyper(3000)).unwrap();
    let r = offline_eval(&out.model, &kinds, &test).unwrap();
    for (j, v) in r.per_joint.iter().enumerate() {
        assert!(*v < 15.0, "joint {j}: {v}%");
    }
}

#[test]
fn training_is_deterministic() {
    let p = Plant::fixture();
    let train = system_data(&p, 200, 4);
    let val = system_data(&p, 200, 5);
    let teacher = make_biased_teacher(&p, LOW_BIAS, &mut seed::rng(6)).unwrap();
    let h = quick_hyper(300);
    let a = train_pkd(&train, &val, &teacher, &h).unwrap();
    let b = train_pkd(&train, &val, &teacher, &h).unwrap();
    assert_eq!(a.model.to_text(), b.model.to_text());
    assert_eq!(a.log, b.log);
}

#[test]
fn zero_lambda_reduces_to_learning_from_scratch() {
    let p = Plant::fixture();
    let kinds = p.robot.joint_kinds();
    let train = system_data(&p, 300, 7);
    let val = system_data(&p, 200, 8);
    let teacher = TeacherModel::unbiased(&p);
    let d_ptm = teacher.sample(500, &p.robot.joint_limits, &mut seed::rng(9)).unwrap();
    let h = quick_hyper(400);
    let lfs = train_lfs(&train, &val, &kinds, &p.robot.name, &h).unwrap();
    let zero = TrainHyper {
        lambda_hi: 0.0,
        lambda_lo: 0.0,
        ..h
    };
    let norm = fit_norm_params(&train).unwrap();
    let pkd = train_with_norm(&train, Some(&d_ptm), &val, norm, &kinds, &p.robot.name, &zero).unwrap();
    assert_eq!(lfs.model.to_text(), pkd.model.to_text());
    assert_eq!(lfs.best_val_loss, pkd.best_val_loss);
}

#[test]
fn distillation_alone_recovers_an_unbiased_teacher() {
    let p = Plant::fixture();
    let kinds = p.robot.joint_kinds();
    let teacher = TeacherModel::unbiased(&p);
    let limits = &p.robot.joint_limits;
    let d_ptm = teacher.sample(20_000, limits, &mut seed::rng(10)).unwrap();
    let val = teacher.sample(1000, limits, &mut seed::rng(11)).unwrap();
    let held_out = teacher.sample(300, limits, &mut seed::rng(12)).unwrap();
    let h = TrainHyper {
        lambda_hi: 1.0,
        lambda_lo: 1.0,
        ..quick_hyper(8000)
    };
    let empty = Dataset::new(Provenance::System);
    let norm = fit_norm_params(&d_ptm).unwrap();
    let out = train_with_norm(&empty, Some(&d_ptm), &val, norm, &kinds, &p.robot.name, &h).unwrap();
    let r = offline_eval(&out.model, &kinds, &held_out).unwrap();
    for (j, v) in r.per_joint.iter().enumerate() {
        assert!(*v < 5.0, "joint {j}: {v}%");
    }
}

#[test]
fn distillation_normalizes_on_the_joint_set() {
    let p = Plant::fixture();
    let kinds = p.robot.joint_kinds();
    let train = system_data(&p, 40, 13);
    let val = system_data(&p, 100, 14);
    let teacher = TeacherModel::unbiased(&p);
    let d_ptm = teacher.sample(700, &p.robot.joint_limits, &mut seed::rng(15)).unwrap();
    let out = train_pkd_on(&train, &val, &d_ptm, &kinds, &p.robot.name, &quick_hyper(20)).unwrap();
    assert_eq!(out.norm_fit_rows, 740);
    assert_eq!(out.model.norm, fit_norm_params(&train.union(&d_ptm)).unwrap());
    let lfs = train_lfs(&train, &val, &kinds, &p.robot.name, &quick_hyper(20)).unwrap();
    assert_eq!(lfs.norm_fit_rows, 40);
}

#[test]
fn best_validation_loss_is_reproducible_from_the_saved_model() {
    let p = Plant::fixture();
    let kinds = p.robot.joint_kinds();
    let train = system_data(&p, 300, 16);
    let val = system_data(&p, 200, 17);
    let out = train_lfs(&train, &val, &kinds, &p.robot.name, &quick_hyper(400)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.txt");
    gravcomp::learning::save_model(&out.model, &path).unwrap();
    let back = gravcomp::learning::load_model(&path).unwrap();
    let loss = masked_loss(&back, &normalize_dataset(&val, &back.norm).unwrap()).unwrap();
    assert!((loss - out.best_val_loss).abs() <= 1e-12 * out.best_val_loss.max(1.0));
}

#[test]
fn low_bias_teachers_beat_high_bias_teachers() {
    let p = Plant::fixture();
    let kinds = p.robot.joint_kinds();
    let mut clean = p.clone();
    clean.noise = NoiseParams::noiseless(6);
    let test = clean_test_set(&clean, 300, &mut seed::rng(18)).unwrap();
    let mean = |sigma: f64| {
        (0..5)
            .map(|s| {
                let t = make_biased_teacher(&p, sigma, &mut seed::rng(100 + s)).unwrap();
                offline_eval(&t, &kinds, &test).unwrap().average
            })
            .sum::<f64>()
            / 5.0
    };
    let (low, high) = (mean(LOW_BIAS), mean(HIGH_BIAS));
    assert!(low < high, "low {low}% high {high}%");
}

#[test]
fn tiny_data_favours_distillation() {
    let p = Plant::fixture();
    let kinds = p.robot.joint_kinds();
    let train = system_data(&p, 10, 19);
    let val = system_data(&p, 500, 20);
    let test = clean_test_set(&p, 300, &mut seed::rng(21)).unwrap();
    let teacher = make_biased_teacher(&p, LOW_BIAS, &mut seed::rng(22)).unwrap();
    let h = quick_hyper(1500);
    let lfs = train_lfs(&train, &val, &kinds, &p.robot.name, &h).unwrap();
    let pkd = train_pkd(&train, &val, &teacher, &h).unwrap();
    let lfs = offline_eval(&lfs.model, &kinds, &test).unwrap().average;
    let pkd = offline_eval(&pkd.model, &kinds, &test).unwrap().average;
    assert!(lfs > 10.0, "LfS at T_s=10 scored {lfs}%");
    assert!(pkd < lfs, "PKD {pkd}% vs LfS {lfs}%");
}
