//! Deterministic synthetic benchmark fixtures for desk-scale testing without
//! the real dataset.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{gold_score, AnnotatedStep, DatasetRecord, DATASET_SCHEMA_VERSION};
use crate::core::{CategoryCatalog, Difficulty, PrimaryCategory, ProblemType, StepLabel};

/// problem-type weights: calculation : proof : open-ended.
const TYPE_WEIGHTS: [usize; 3] = [29, 10, 1];
/// difficulty weights: easy : medium : hard.
const DIFFICULTY_WEIGHTS: [usize; 3] = [4, 15, 31];
/// Primary-category weights in table order: elementary, modern, contemporary,
/// applied. The source distribution lists counts without naming which primary
/// category owns which, so table order is assumed here.
const CATEGORY_WEIGHTS: [usize; 4] = [53, 40, 67, 40];

const GENERATORS: [&str; 5] = ["gen-alpha", "gen-beta", "gen-gamma", "gen-delta", "gen-epsilon"];

/// Splits `total` across `weights` by largest remainder, so the counts sum to
/// `total` exactly and match the ratios as closely as integers allow.
pub fn apportion(total: usize, weights: &[usize]) -> Vec<usize> {
    let weight_sum: usize = weights.iter().sum();
    assert!(weight_sum > 0, "weights must not all be zero");
    let mut counts: Vec<usize> = weights.iter().map(|w| total * w / weight_sum).collect();
    let assigned: usize = counts.iter().sum();

    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse((total * weights[i]) % weight_sum), i));
    for &i in order.iter().take(total - assigned) {
        counts[i] += 1;
    }
    counts
}

fn expand<T: Copy>(values: &[T], counts: &[usize]) -> Vec<T> {
    values
        .iter()
        .zip(counts)
        .flat_map(|(&v, &n)| std::iter::repeat_n(v, n))
        .collect()
}

/// Generates `count` annotated records with the benchmark's problem-type and
/// difficulty ratios (and the primary-category ratio, in table order). Same
/// seed, same records.
pub fn synth_fixtures(seed: u64, count: usize) -> Vec<DatasetRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let catalog = CategoryCatalog::default();

    let mut types = expand(
        &[ProblemType::Calculation, ProblemType::Proof, ProblemType::OpenEnded],
        &apportion(count, &TYPE_WEIGHTS),
    );
    let mut difficulties = expand(
        &[Difficulty::Easy, Difficulty::Medium, Difficulty::Hard],
        &apportion(count, &DIFFICULTY_WEIGHTS),
    );
    let mut categories = expand(&PrimaryCategory::ALL, &apportion(count, &CATEGORY_WEIGHTS));
    types.shuffle(&mut rng);
    difficulties.shuffle(&mut rng);
    categories.shuffle(&mut rng);

    (0..count)
        .map(|i| {
            synth_record(
                &mut rng,
                &catalog,
                i,
                types[i],
                difficulties[i],
                categories[i],
            )
        })
        .collect()
}

fn synth_record(
    rng: &mut ChaCha8Rng,
    catalog: &CategoryCatalog,
    index: usize,
    problem_type: ProblemType,
    difficulty: Difficulty,
    category_primary: PrimaryCategory,
) -> DatasetRecord {
    let secondaries: Vec<&str> = catalog.secondaries(category_primary).collect();
    let category_secondary = secondaries[rng.gen_range(0..secondaries.len())].to_string();

    let a: u32 = rng.gen_range(2..=9);
    let b: u32 = rng.gen_range(2..=9);
    let answer = a + b;

    let (statement, constraint, reference_answer) = match problem_type {
        ProblemType::Calculation => (
            format!("已知 a = {a}，b = {b}，求 a + b 的值。"),
            Some("整数".to_string()),
            Some(answer.to_string()),
        ),
        ProblemType::Proof => (
            format!("证明：{a} + {b} 与 {b} + {a} 相等，并说明所用的运算律。"),
            None,
            None,
        ),
        ProblemType::OpenEnded => (
            format!("请构造一个在 x = {a} 处取得最小值的函数，并说明理由。"),
            None,
            None,
        ),
    };

    let step_count: usize = rng.gen_range(2..=10);
    let labels = synth_labels(rng, step_count);

    let last_correct = labels[step_count - 1] == StepLabel::Correct;
    let shown_answer = if last_correct { answer } else { answer + 1 };

    let mut annotation = Vec::with_capacity(step_count);
    for (i, &label) in labels.iter().enumerate() {
        let text = if problem_type == ProblemType::Calculation && i == step_count - 1 {
            format!("最终答案：【{shown_answer}】")
        } else {
            format!("第{}步：由条件推得中间量 {}。", i + 1, a + i as u32)
        };
        annotation.push(AnnotatedStep {
            index: i + 1,
            text,
            label,
        });
    }

    let solution_text = match problem_type {
        ProblemType::Calculation => {
            let process: Vec<&str> = annotation[..step_count - 1]
                .iter()
                .map(|s| s.text.as_str())
                .collect();
            format!(
                "解题过程：\n【{}】\n\n最终答案：\n【{shown_answer}】",
                process.join("；")
            )
        }
        _ => annotation
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join("\n"),
    };

    let mut record = DatasetRecord {
        schema_version: DATASET_SCHEMA_VERSION,
        id: format!("fx-{:04}", index + 1),
        statement,
        problem_type,
        category_primary,
        category_secondary,
        difficulty,
        constraint,
        reference_answer,
        generator: GENERATORS[index % GENERATORS.len()].to_string(),
        solution_text,
        annotation: Some(annotation),
        gold: None,
        extra: Default::default(),
    };
    record.gold = Some(gold_score(&record).expect("synthetic annotations are valid"));
    record
}

/// Step labels with a single first error followed by a noisy tail, so the
/// correct-but-meaningless label and error chains show up in fixtures.
fn synth_labels(rng: &mut ChaCha8Rng, step_count: usize) -> Vec<StepLabel> {
    let error_free = rng.gen_bool(0.35);
    if error_free {
        return vec![StepLabel::Correct; step_count];
    }
    let first_error = rng.gen_range(1..=step_count);
    (1..=step_count)
        .map(|i| {
            if i < first_error {
                StepLabel::Correct
            } else if i == first_error {
                StepLabel::Incorrect
            } else {
                match rng.gen_range(0..10) {
                    0..=4 => StepLabel::CorrectButMeaningless,
                    5..=7 => StepLabel::Incorrect,
                    _ => StepLabel::Correct,
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::evaluate_rule_em;

    #[test]
    fn apportion_is_exact_for_the_published_splits() {
        assert_eq!(apportion(200, &TYPE_WEIGHTS), vec![145, 50, 5]);
        assert_eq!(apportion(200, &DIFFICULTY_WEIGHTS), vec![16, 60, 124]);
        assert_eq!(apportion(200, &CATEGORY_WEIGHTS), vec![53, 40, 67, 40]);
        assert_eq!(apportion(40, &TYPE_WEIGHTS), vec![29, 10, 1]);
    }

    #[test]
    fn apportion_sums_to_total_for_awkward_counts() {
        for total in [1usize, 7, 10, 33, 199] {
            for weights in [&TYPE_WEIGHTS[..], &DIFFICULTY_WEIGHTS[..]] {
                let counts = apportion(total, weights);
                assert_eq!(counts.iter().sum::<usize>(), total, "total={total}");
            }
        }
        assert_eq!(apportion(10, &TYPE_WEIGHTS), vec![7, 3, 0]);
    }

    #[test]
    fn fixtures_match_the_published_ratios() {
        let records = synth_fixtures(1, 200);
        assert_eq!(records.len(), 200);
        let type_count = |t| records.iter().filter(|r| r.problem_type == t).count();
        assert_eq!(type_count(ProblemType::Calculation), 145);
        assert_eq!(type_count(ProblemType::Proof), 50);
        assert_eq!(type_count(ProblemType::OpenEnded), 5);

        let difficulty_count = |d| records.iter().filter(|r| r.difficulty == d).count();
        assert_eq!(difficulty_count(Difficulty::Easy), 16);
        assert_eq!(difficulty_count(Difficulty::Medium), 60);
        assert_eq!(difficulty_count(Difficulty::Hard), 124);

        let category_count = |c| records.iter().filter(|r| r.category_primary == c).count();
        assert_eq!(category_count(PrimaryCategory::ElementaryMathematics), 53);
        assert_eq!(category_count(PrimaryCategory::ModernMathematics), 40);
        assert_eq!(category_count(PrimaryCategory::ContemporaryMathematics), 67);
        assert_eq!(category_count(PrimaryCategory::AppliedMathematics), 40);
    }

    #[test]
    fn fixtures_are_deterministic_per_seed() {
        let a = synth_fixtures(7, 50);
        let b = synth_fixtures(7, 50);
        assert_eq!(a, b);
        let c = synth_fixtures(8, 50);
        assert_ne!(a, c);
    }

    #[test]
    fn stored_gold_matches_recomputation() {
        for record in synth_fixtures(3, 120) {
            let recomputed = gold_score(&record).unwrap();
            assert_eq!(record.gold, Some(recomputed), "record {}", record.id);
        }
    }

    #[test]
    fn calculation_fixtures_agree_with_rule_based_matching() {
        let records = synth_fixtures(11, 150);
        let mut checked = 0;
        for record in &records {
            if record.problem_type != ProblemType::Calculation {
                continue;
            }
            let result = evaluate_rule_em(&record.problem(), &record.solution_text).unwrap();
            assert_eq!(
                result.binary,
                Some(record.gold.unwrap().binary()),
                "record {}",
                record.id
            );
            checked += 1;
        }
        assert!(checked > 50);
    }

    #[test]
    fn fixtures_include_all_three_labels() {
        let records = synth_fixtures(1, 200);
        let mut seen = std::collections::HashSet::new();
        for record in &records {
            for step in record.annotation.as_ref().unwrap() {
                seen.insert(step.label);
            }
        }
        assert!(seen.contains(&StepLabel::Correct));
        assert!(seen.contains(&StepLabel::Incorrect));
        assert!(seen.contains(&StepLabel::CorrectButMeaningless));
    }
}
