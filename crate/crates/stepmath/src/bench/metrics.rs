//! The AvgS / Corr / MSE / OR metric suite with per-slice breakdowns, all
//! normalized to 0-100.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{Difficulty, PrimaryCategory, ProblemType};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("assigned/gold/slice lengths differ ({assigned}/{gold}/{slices})")]
    LengthMismatch {
        assigned: usize,
        gold: usize,
        slices: usize,
    },
    #[error("cannot compute metrics over zero records")]
    Empty,
    #[error("score {0} outside 0..=10")]
    ScoreOutOfRange(u8),
}

/// The slicing attributes of one benchmark record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceKey {
    pub problem_type: ProblemType,
    pub category_primary: PrimaryCategory,
    pub difficulty: Difficulty,
}

/// One metric block: assigned-score mean, gold mean, correlation, normalized
/// squared error and exact-overlap rate, plus the record count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub count: usize,
    pub avg_s: f64,
    pub gold_avg_s: f64,
    pub corr: f64,
    pub mse: f64,
    pub or_rate: f64,
    /// Set when either score vector is constant, where Pearson correlation is
    /// undefined; `corr` is reported as 0 in that case.
    pub corr_undefined: bool,
}

impl MetricValues {
    fn compute(pairs: &[(u8, u8)]) -> Self {
        let n = pairs.len() as i128;
        let sum_a: i128 = pairs.iter().map(|(a, _)| *a as i128).sum();
        let sum_g: i128 = pairs.iter().map(|(_, g)| *g as i128).sum();
        let sum_aa: i128 = pairs.iter().map(|(a, _)| (*a as i128).pow(2)).sum();
        let sum_gg: i128 = pairs.iter().map(|(_, g)| (*g as i128).pow(2)).sum();
        let sum_ag: i128 = pairs.iter().map(|(a, g)| *a as i128 * *g as i128).sum();
        let sum_sq_diff: i128 = pairs
            .iter()
            .map(|(a, g)| (*a as i128 - *g as i128).pow(2))
            .sum();
        let matches = pairs.iter().filter(|(a, g)| a == g).count();

        let avg_s = 10.0 * sum_a as f64 / n as f64;
        let gold_avg_s = 10.0 * sum_g as f64 / n as f64;

        // Pearson from integer moments so perfect (anti)correlation is an
        // exact +/-100 rather than a float one ulp away.
        let numerator = n * sum_ag - sum_a * sum_g;
        let var_a = n * sum_aa - sum_a * sum_a;
        let var_g = n * sum_gg - sum_g * sum_g;
        let corr_undefined = var_a == 0 || var_g == 0;
        let corr = if corr_undefined {
            0.0
        } else if numerator * numerator == var_a * var_g {
            if numerator > 0 { 100.0 } else { -100.0 }
        } else {
            (100.0 * numerator as f64 / (var_a as f64 * var_g as f64).sqrt()).clamp(-100.0, 100.0)
        };

        // Score differences are measured on the 0-1 scale, so dividing the
        // integer squared-difference sum by 100 bounds MSE to [0,100].
        let mse = sum_sq_diff as f64 / n as f64;
        let or_rate = 100.0 * matches as f64 / n as f64;

        MetricValues {
            count: pairs.len(),
            avg_s,
            gold_avg_s,
            corr,
            mse,
            or_rate,
            corr_undefined,
        }
    }
}

/// Metrics overall and sliced by problem type, primary category and
/// difficulty. Slice maps are keyed by the serialized slice name so reports
/// are ordered deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall: MetricValues,
    pub by_problem_type: BTreeMap<String, MetricValues>,
    pub by_category: BTreeMap<String, MetricValues>,
    pub by_difficulty: BTreeMap<String, MetricValues>,
}

fn difficulty_name(d: Difficulty) -> &'static str {
    match d {
        Difficulty::Easy => "easy",
        Difficulty::Medium => "medium",
        Difficulty::Hard => "hard",
    }
}

/// Computes the metric suite over paired assigned/gold scores (0-10 scale).
pub fn compute_metrics(
    assigned: &[u8],
    gold: &[u8],
    slices: &[SliceKey],
) -> Result<MetricsReport, MetricsError> {
    if assigned.len() != gold.len() || assigned.len() != slices.len() {
        return Err(MetricsError::LengthMismatch {
            assigned: assigned.len(),
            gold: gold.len(),
            slices: slices.len(),
        });
    }
    if assigned.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(&bad) = assigned.iter().chain(gold.iter()).find(|&&s| s > 10) {
        return Err(MetricsError::ScoreOutOfRange(bad));
    }

    let pairs: Vec<(u8, u8)> = assigned.iter().copied().zip(gold.iter().copied()).collect();

    let mut by_problem_type: BTreeMap<String, Vec<(u8, u8)>> = BTreeMap::new();
    let mut by_category: BTreeMap<String, Vec<(u8, u8)>> = BTreeMap::new();
    let mut by_difficulty: BTreeMap<String, Vec<(u8, u8)>> = BTreeMap::new();
    for (pair, key) in pairs.iter().zip(slices) {
        by_problem_type
            .entry(key.problem_type.as_str().to_string())
            .or_default()
            .push(*pair);
        by_category
            .entry(key.category_primary.as_str().to_string())
            .or_default()
            .push(*pair);
        by_difficulty
            .entry(difficulty_name(key.difficulty).to_string())
            .or_default()
            .push(*pair);
    }

    let collapse = |m: BTreeMap<String, Vec<(u8, u8)>>| {
        m.into_iter()
            .map(|(k, v)| (k, MetricValues::compute(&v)))
            .collect::<BTreeMap<_, _>>()
    };

    Ok(MetricsReport {
        overall: MetricValues::compute(&pairs),
        by_problem_type: collapse(by_problem_type),
        by_category: collapse(by_category),
        by_difficulty: collapse(by_difficulty),
    })
}

/// Renders the report as a Markdown document: one wide table with per-type
/// blocks in the benchmark's usual layout, then category and difficulty
/// breakdowns.
pub fn render_markdown(report: &MetricsReport, evaluator_label: &str) -> String {
    let fmt = |v: f64| format!("{v:.1}");
    let type_order = ["calculation", "proof", "open_ended"];
    let type_titles = ["Calculation", "Proof", "Open-ended"];

    let mut out = String::new();
    out.push_str("# Benchmark metrics\n\n");

    // Headline table: All plus the three problem-type blocks.
    out.push_str("| Evaluator |");
    for block in ["All", type_titles[0], type_titles[1], type_titles[2]] {
        out.push_str(&format!(
            " {block} AvgS | {block} Corr | {block} MSE | {block} OR |"
        ));
    }
    out.push('\n');
    out.push_str(&format!("|---|{}\n", "---|".repeat(16)));

    let blocks: Vec<Option<&MetricValues>> = std::iter::once(Some(&report.overall))
        .chain(type_order.iter().map(|t| report.by_problem_type.get(*t)))
        .collect();

    out.push_str(&format!("| {evaluator_label} |"));
    for block in &blocks {
        match block {
            Some(v) => out.push_str(&format!(
                " {} | {} | {} | {} |",
                fmt(v.avg_s),
                fmt(v.corr),
                fmt(v.mse),
                fmt(v.or_rate)
            )),
            None => out.push_str(" - | - | - | - |"),
        }
    }
    out.push('\n');

    out.push_str("| Gold |");
    for block in &blocks {
        match block {
            Some(v) => out.push_str(&format!(" {} | 100.0 | 0.0 | 100.0 |", fmt(v.gold_avg_s))),
            None => out.push_str(" - | - | - | - |"),
        }
    }
    out.push_str("\n\n");

    for (title, slice_map) in [
        ("By primary category", &report.by_category),
        ("By difficulty", &report.by_difficulty),
    ] {
        out.push_str(&format!("## {title}\n\n"));
        out.push_str("| Slice | Count | AvgS | Gold AvgS | Corr | MSE | OR |\n");
        out.push_str("|---|---|---|---|---|---|---|\n");
        for (name, v) in slice_map.iter() {
            out.push_str(&format!(
                "| {name} | {} | {} | {} | {} | {} | {} |\n",
                v.count,
                fmt(v.avg_s),
                fmt(v.gold_avg_s),
                fmt(v.corr),
                fmt(v.mse),
                fmt(v.or_rate)
            ));
        }
        out.push('\n');
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(problem_type: ProblemType) -> SliceKey {
        SliceKey {
            problem_type,
            category_primary: PrimaryCategory::ElementaryMathematics,
            difficulty: Difficulty::Medium,
        }
    }

    #[test]
    fn identity_scores_are_perfect() {
        let scores = [3u8, 7, 10, 0];
        let slices = vec![key(ProblemType::Calculation); 4];
        let report = compute_metrics(&scores, &scores, &slices).unwrap();
        assert_eq!(report.overall.corr, 100.0);
        assert_eq!(report.overall.mse, 0.0);
        assert_eq!(report.overall.or_rate, 100.0);
        assert!(!report.overall.corr_undefined);
        assert_eq!(report.overall.avg_s, report.overall.gold_avg_s);
    }

    #[test]
    fn hand_computed_anticorrelated_pair() {
        let report = compute_metrics(
            &[10, 0],
            &[0, 10],
            &[key(ProblemType::Proof), key(ProblemType::Proof)],
        )
        .unwrap();
        assert_eq!(report.overall.corr, -100.0);
        assert_eq!(report.overall.mse, 100.0);
        assert_eq!(report.overall.or_rate, 0.0);
        assert_eq!(report.overall.avg_s, 50.0);
    }

    #[test]
    fn constant_vectors_flag_undefined_corr() {
        let report = compute_metrics(
            &[5, 5, 5],
            &[3, 4, 5],
            &[key(ProblemType::Proof); 3],
        )
        .unwrap();
        assert!(report.overall.corr_undefined);
        assert_eq!(report.overall.corr, 0.0);
    }

    #[test]
    fn slices_partition_the_records() {
        let assigned = [10, 8, 2, 0];
        let gold = [10, 6, 2, 4];
        let slices = [
            key(ProblemType::Calculation),
            key(ProblemType::Calculation),
            key(ProblemType::Proof),
            key(ProblemType::OpenEnded),
        ];
        let report = compute_metrics(&assigned, &gold, &slices).unwrap();
        assert_eq!(report.overall.count, 4);
        assert_eq!(report.by_problem_type["calculation"].count, 2);
        assert_eq!(report.by_problem_type["proof"].count, 1);
        assert_eq!(report.by_problem_type["open_ended"].count, 1);
        let total: usize = report.by_problem_type.values().map(|v| v.count).sum();
        assert_eq!(total, 4);
        assert_eq!(report.by_difficulty["medium"].count, 4);
    }

    #[test]
    fn errors_on_bad_input() {
        assert_eq!(
            compute_metrics(&[1], &[1, 2], &[key(ProblemType::Proof)]).unwrap_err(),
            MetricsError::LengthMismatch {
                assigned: 1,
                gold: 2,
                slices: 1
            }
        );
        assert_eq!(compute_metrics(&[], &[], &[]).unwrap_err(), MetricsError::Empty);
        assert_eq!(
            compute_metrics(&[11], &[5], &[key(ProblemType::Proof)]).unwrap_err(),
            MetricsError::ScoreOutOfRange(11)
        );
    }

    #[test]
    fn avg_s_hits_the_bounds() {
        let slices = vec![key(ProblemType::Proof); 3];
        let report = compute_metrics(&[10, 10, 10], &[10, 10, 10], &slices).unwrap();
        assert_eq!(report.overall.avg_s, 100.0);
        assert!(report.overall.corr_undefined);
        let report = compute_metrics(&[0, 0, 0], &[1, 2, 3], &slices).unwrap();
        assert_eq!(report.overall.avg_s, 0.0);
    }

    #[test]
    fn mse_is_symmetric_and_bounded() {
        let a = [10u8, 3, 7, 0, 5];
        let b = [0u8, 9, 7, 10, 5];
        let slices = vec![key(ProblemType::Proof); 5];
        let ab = compute_metrics(&a, &b, &slices).unwrap();
        let ba = compute_metrics(&b, &a, &slices).unwrap();
        assert_eq!(ab.overall.mse, ba.overall.mse);
        assert!(ab.overall.mse >= 0.0 && ab.overall.mse <= 100.0);
        // MSE = 0 exactly when OR = 100.
        assert_eq!(ab.overall.mse == 0.0, ab.overall.or_rate == 100.0);
    }

    #[test]
    fn markdown_has_gold_row_and_dashes_for_missing_blocks() {
        let report = compute_metrics(
            &[10, 0],
            &[8, 0],
            &[key(ProblemType::Calculation), key(ProblemType::Calculation)],
        )
        .unwrap();
        let md = render_markdown(&report, "agent (mock)");
        assert!(md.contains("| agent (mock) |"));
        assert!(md.contains("| Gold |"));
        assert!(md.contains(" - | - | - | - |")); // proof and open-ended blocks absent
        assert!(md.contains("## By difficulty"));
        assert_eq!(md, render_markdown(&report, "agent (mock)"));
    }
}
