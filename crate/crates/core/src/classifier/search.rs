use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::solver::{minimize, with_bias_column, BinaryProblem};
use super::{ClassifierError, CvRow, CvTable, LabeledDataset, TrainedModel, TrainingConfig};

fn design_matrix(data: &LabeledDataset, cfg: &TrainingConfig) -> Array2<f64> {
    if cfg.fit_bias {
        with_bias_column(data.features())
    } else {
        data.features().to_owned()
    }
}

/// Trains every class against the rest on a prepared design matrix,
/// optionally warm-starting each class from `init`.
fn ovr_weights(
    design: ArrayView2<f64>,
    labels: &[usize],
    class_count: usize,
    c: f64,
    cfg: &TrainingConfig,
    init: Option<&Array2<f64>>,
) -> Result<Array2<f64>, ClassifierError> {
    let mut counts = vec![0usize; class_count];
    for &l in labels {
        counts[l] += 1;
    }
    if let Some(empty) = counts.iter().position(|&n| n == 0) {
        return Err(ClassifierError::EmptyClass(empty));
    }
    if class_count < 2 {
        return Err(ClassifierError::InvalidData(format!(
            "need at least two classes, got {class_count}"
        )));
    }

    let rows = (0..class_count)
        .into_par_iter()
        .map(|class| {
            let y: Vec<f64> = labels
                .iter()
                .map(|&l| if l == class { 1.0 } else { -1.0 })
                .collect();
            let wrap = |source| ClassifierError::Class {
                class,
                source: Box::new(source),
            };
            let problem = BinaryProblem::new(design, &y, c).map_err(wrap)?;
            let start = init.map(|w| w.row(class));
            minimize(&problem, start, cfg.tolerance, cfg.max_iterations)
                .map(|s| s.weights)
                .map_err(wrap)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut weights = Array2::zeros((class_count, design.ncols()));
    for (mut dst, src) in weights.rows_mut().into_iter().zip(rows) {
        dst.assign(&src);
    }
    Ok(weights)
}

/// One-vs-rest training at a fixed `C`.
pub fn train_ovr(
    data: &LabeledDataset,
    c: f64,
    cfg: &TrainingConfig,
) -> Result<TrainedModel, ClassifierError> {
    let design = design_matrix(data, cfg);
    let weights = ovr_weights(
        design.view(),
        data.labels(),
        data.class_count(),
        c,
        cfg,
        None,
    )?;
    TrainedModel::new(weights, c, cfg.fit_bias, CvTable::default())
}

/// Assigns each example a fold in `0..folds` so every class is spread as
/// evenly as possible. Class members are shuffled with a seeded generator and
/// dealt round-robin, continuing the rotation from one class to the next.
pub fn stratified_folds(
    labels: &[usize],
    class_count: usize,
    folds: usize,
    seed: u64,
) -> Result<Vec<usize>, ClassifierError> {
    let mut members = vec![Vec::new(); class_count];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    if let Some((class, m)) = members.iter().enumerate().find(|(_, m)| m.len() < folds) {
        return Err(ClassifierError::Folds {
            class,
            count: m.len(),
            folds,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for mut m in members {
        m.shuffle(&mut rng);
        for i in m {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    Ok(assignment)
}

/// Picks `C` by stratified k-fold cross-validation, then retrains on all data.
///
/// The highest mean fold accuracy wins; ties go to the smallest `C`. Within a
/// fold the grid is swept in ascending order, each point warm-started from
/// the previous one.
pub fn grid_search(
    data: &LabeledDataset,
    cfg: &TrainingConfig,
) -> Result<TrainedModel, ClassifierError> {
    cfg.validate()?;
    let folds = cfg.cv_folds;
    let assignment = stratified_folds(data.labels(), data.class_count(), folds, cfg.seed)?;

    let mut order: Vec<usize> = (0..cfg.c_grid.len()).collect();
    order.sort_by(|&a, &b| cfg.c_grid[a].total_cmp(&cfg.c_grid[b]));

    let per_fold = (0..folds)
        .into_par_iter()
        .map(|fold| {
            let (train_idx, test_idx): (Vec<usize>, Vec<usize>) =
                (0..data.len()).partition(|&i| assignment[i] != fold);
            let train = data.subset(&train_idx);
            let test = data.subset(&test_idx);
            let design = design_matrix(&train, cfg);
            let mut accuracy = vec![0.0; cfg.c_grid.len()];
            let mut warm: Option<Array2<f64>> = None;
            for &gi in &order {
                let c = cfg.c_grid[gi];
                let weights = ovr_weights(
                    design.view(),
                    train.labels(),
                    train.class_count(),
                    c,
                    cfg,
                    warm.as_ref(),
                )?;
                let model =
                    TrainedModel::new(weights.clone(), c, cfg.fit_bias, CvTable::default())?;
                accuracy[gi] = model.score(&test)?;
                warm = Some(weights);
            }
            Ok(accuracy)
        })
        .collect::<Result<Vec<_>, ClassifierError>>()?;

    let rows: Vec<CvRow> = cfg
        .c_grid
        .iter()
        .enumerate()
        .map(|(gi, &c)| CvRow {
            c,
            fold_accuracy: per_fold.iter().map(|acc| acc[gi]).collect(),
        })
        .collect();

    let mut best = 0;
    for (i, row) in rows.iter().enumerate().skip(1) {
        let (mean, best_mean) = (row.mean_accuracy(), rows[best].mean_accuracy());
        if mean > best_mean || (mean == best_mean && row.c < rows[best].c) {
            best = i;
        }
    }
    let chosen_c = rows[best].c;

    let final_model = train_ovr(data, chosen_c, cfg)?;
    TrainedModel::new(
        final_model.weights().to_owned(),
        chosen_c,
        cfg.fit_bias,
        CvTable {
            seed: cfg.seed,
            folds,
            rows,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_are_stratified_and_seeded() {
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let a = stratified_folds(&labels, 3, 5, 7).unwrap();
        let b = stratified_folds(&labels, 3, 5, 7).unwrap();
        assert_eq!(a, b);
        for fold in 0..5 {
            for class in 0..3 {
                let n = (0..30)
                    .filter(|&i| a[i] == fold && labels[i] == class)
                    .count();
                assert_eq!(n, 2);
            }
        }
        let c = stratified_folds(&labels, 3, 5, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn folds_need_enough_members() {
        let labels = vec![0, 0, 0, 1, 1];
        assert!(matches!(
            stratified_folds(&labels, 2, 3, 0),
            Err(ClassifierError::Folds { class: 1, count: 2, folds: 3 })
        ));
    }

    #[test]
    fn empty_class_is_named() {
        let data =
            LabeledDataset::from_rows(&[vec![1.0], vec![2.0], vec![3.0]], vec![0, 2, 0], 3)
                .unwrap();
        assert!(matches!(
            train_ovr(&data, 1.0, &TrainingConfig::default()),
            Err(ClassifierError::EmptyClass(1))
        ));
    }
}
