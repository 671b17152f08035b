//! Prompt catalog: the step-wise grading prompts (base plus external-module
//! variants), the V1/V2/V3 baseline prompts, and the solution-generation
//! prompts, in the original Chinese and in English translation.
//!
//! The Chinese texts are the shipped originals and must not be reworded; the
//! English variants instruct the same JSON schema with `final_score` /
//! `error_chains` as key aliases (the verdict parser accepts both).

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptLanguage {
    #[default]
    Chinese,
    English,
}

/// The four external strictness/efficiency modules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExternalModule {
    Difficulty,
    Simplicity,
    Completeness,
    Format,
}

impl ExternalModule {
    pub fn parse(name: &str) -> Option<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "difficulty" => Some(ExternalModule::Difficulty),
            "simplicity" => Some(ExternalModule::Simplicity),
            "completeness" => Some(ExternalModule::Completeness),
            "format" => Some(ExternalModule::Format),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ExternalModule::Difficulty => "difficulty",
            ExternalModule::Simplicity => "simplicity",
            ExternalModule::Completeness => "completeness",
            ExternalModule::Format => "format",
        }
    }
}

/// An unordered set of external modules.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModuleSet(BTreeSet<ExternalModule>);

impl ModuleSet {
    pub fn empty() -> Self {
        ModuleSet::default()
    }

    pub fn of(modules: impl IntoIterator<Item = ExternalModule>) -> Self {
        ModuleSet(modules.into_iter().collect())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, module: ExternalModule) -> bool {
        self.0.contains(&module)
    }

    pub fn iter(&self) -> impl Iterator<Item = ExternalModule> + '_ {
        self.0.iter().copied()
    }
}

impl fmt::Display for ModuleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.0.iter().map(|m| m.as_str()).collect();
        f.write_str(&names.join(","))
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("unsupported module combination {{{modules}}}: only the shipped prompt variants exist")]
pub struct UnsupportedCombination {
    pub modules: String,
}

/// The seven shipped grading-prompt variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptVariant {
    Base,
    Difficulty,
    Simplicity,
    Completeness,
    Format,
    SimComFor,
    All,
}

impl PromptVariant {
    pub const ALL_VARIANTS: [PromptVariant; 7] = [
        PromptVariant::Base,
        PromptVariant::Difficulty,
        PromptVariant::Simplicity,
        PromptVariant::Completeness,
        PromptVariant::Format,
        PromptVariant::SimComFor,
        PromptVariant::All,
    ];

    /// Maps a module set onto its shipped prompt variant. Combinations with
    /// no shipped prompt are rejected rather than synthesized.
    pub fn from_modules(modules: &ModuleSet) -> Result<Self, UnsupportedCombination> {
        use ExternalModule::*;
        let has = |m| modules.contains(m);
        let combo = (has(Difficulty), has(Simplicity), has(Completeness), has(Format));
        match combo {
            (false, false, false, false) => Ok(PromptVariant::Base),
            (true, false, false, false) => Ok(PromptVariant::Difficulty),
            (false, true, false, false) => Ok(PromptVariant::Simplicity),
            (false, false, true, false) => Ok(PromptVariant::Completeness),
            (false, false, false, true) => Ok(PromptVariant::Format),
            (false, true, true, true) => Ok(PromptVariant::SimComFor),
            (true, true, true, true) => Ok(PromptVariant::All),
            _ => Err(UnsupportedCombination {
                modules: modules.to_string(),
            }),
        }
    }
}

// ---------------------------------------------------------------------------
// Step-wise grading prompts (Chinese originals)
// ---------------------------------------------------------------------------

const AGENT_HEADER_ZH: &str = "你是一名专业的数学评分专家，擅长按照解题过程客观地评价数学题目的回复质量。数学题目共有三种类型，分别是计算题、证明题、开放题。现在，给你提供一个数学问题和一个参考答案，请首先将回复内容按照推理步骤进行划分，并确保划分出的每个推理步骤都是最细粒度的，如果是计算题的话最终答案一般为划分步骤中的最后一个推理步骤。然后，请依次判断每一个划分出的推理步骤是否正确，正确则为1，错误则为0。紧接着，根据如下的计算公式计算出这个回复的最终得分，假设划分出的推理步骤共有n步，则计算题的最终得分S为：S=6*(前n-1步中正确的推理步骤)/(n-1)+4*第n个推理步骤得分，证明题和开放题的最终得分S为：S=10*(n步中正确的推理步骤)/n。最终得分需要进行四舍五入取值，仅保留整数位。最后，请输出这道题目中所有的错误链，错误链由划分出的错误的推理步骤序号组成，如(3)-(4)-(6)。";

const NOTE_RANGE_ZH: &str = "最终得分应该在0-10分之间";

const NOTE_MEANINGLESS_ZH: &str = "如果中间某个步骤单独来看是正确的，但由于之前的推理步骤出错导致这个推理步骤的正确没有意义，此时这个步骤的得分为0";

const NOTE_CHAINS_ZH: &str = "错误链应包含没有意义的推理步骤，且应列举所有的错误链使其可以构成错误树";

const NOTE_JSON_ZH: &str = "请在分析完毕之后，另起一行，返回一个标准json格式的答案，如：{\"（1）具体的推理步骤1...\": 1, \"（2）具体的推理步骤2...\": 0, ..., \"（n）具体的推理步骤n...\": 0, \"最终得分\": 7, \"错误链\": \"(3)-(4)-(6), (5)-(6)\"}";

const NOTE_BYPASS_ZH: &str = "特别地，如果某道题目特别简单而无需进行过程评估，可仅判断答案是否正确并输出0或10的最终得分和错误链，即：{\"最终得分\": 0/10, \"错误链\": \"\"},至于题目是否足够简单到无需进行过程评估，请自行判断";

const NOTE_SIMPLICITY_ZH: &str = "特别注意的是，在依次判断划分出的推理步骤是否正确时，如果某个步骤正确但属于没有实际意义的废话或过于累赘，请判断该步骤错误";

const NOTE_COMPLETENESS_ZH: &str = "特别注意的是，在依次判断划分出的推理步骤是否正确时，请同时考虑推理步骤的完整性和正确性并进行严格打分，只有当前提和结论都存在且推理过程正确严谨的时候才能判断正确";

const NOTE_FORMAT_ZH: &str = "特别注意的是，在依次判断划分出的推理步骤是否正确时，如果推理步骤中存在如latex或其他形式的公式，请同时考虑推理步骤的逻辑正确性和格式正确性并进行严格打分，只有逻辑和格式都正确的时候才能判断该步骤正确";

const NOTE_DIMENSIONS_ZH: &str = "特别注意的是，请在整个评分过程中额外考虑简洁性、完整性、格式正确性三个维度，其中：- 简洁性指的是如果某个步骤正确但属于没有实际意义的废话或过于累赘，请判断该步骤错误，- 完整性指的是在依次判断划分出的推理步骤是否正确时，请同时考虑推理步骤的完整性和正确性并进行严格打分，只有当前提和结论都存在且推理过程正确严谨的时候才能判断正确，- 格式正确性指的是在依次判断划分出的推理步骤是否正确时，如果推理步骤中存在如latex或其他形式的公式，请同时考虑推理步骤的逻辑正确性和格式正确性并进行严格打分，只有逻辑和格式都正确的时候才能判断该步骤正确";

// ---------------------------------------------------------------------------
// Step-wise grading prompts (English translations)
// ---------------------------------------------------------------------------

const AGENT_HEADER_EN: &str = "You are a professional math grading expert, skilled at objectively assessing the quality of responses to math problems according to the solution process. There are three types of math problems: calculation, proof and open-ended. You are given a math problem and a reference answer. First, segment the response into reasoning steps, ensuring every segmented reasoning step is as fine-grained as possible; for calculation problems the final answer is usually the last reasoning step. Then judge each segmented reasoning step in order: 1 if correct, 0 if wrong. Next, compute the final score of the response with the following formula. Suppose there are n segmented reasoning steps; for calculation problems the final score S is: S=6*(correct reasoning steps among the first n-1)/(n-1)+4*(score of step n), and for proof and open-ended problems the final score S is: S=10*(correct reasoning steps among the n steps)/n. Round the final score to the nearest integer (round half up), keeping only the integer part. Finally, output all error chains in this problem; an error chain consists of the indices of wrong reasoning steps, such as (3)-(4)-(6).";

const NOTE_RANGE_EN: &str = "The final score should be between 0 and 10";

const NOTE_MEANINGLESS_EN: &str = "If a middle step is correct in isolation but earlier wrong reasoning makes its correctness meaningless, that step scores 0";

const NOTE_CHAINS_EN: &str = "Error chains should include the meaningless reasoning steps, and all error chains should be listed so that they can form an error tree";

const NOTE_JSON_EN: &str = "After your analysis, start a new line and return an answer in standard JSON format, such as: {\"(1) specific reasoning step 1...\": 1, \"(2) specific reasoning step 2...\": 0, ..., \"(n) specific reasoning step n...\": 0, \"final_score\": 7, \"error_chains\": \"(3)-(4)-(6), (5)-(6)\"}";

const NOTE_BYPASS_EN: &str = "In particular, if a problem is so simple that process evaluation is unnecessary, you may only judge whether the answer is correct and output a final score of 0 or 10 with an empty error chain, i.e.: {\"final_score\": 0/10, \"error_chains\": \"\"}; whether the problem is simple enough to skip process evaluation is up to your own judgment";

const NOTE_SIMPLICITY_EN: &str = "Note especially that, when judging each segmented reasoning step in order, if a step is correct but amounts to meaningless filler or is overly redundant, judge that step wrong";

const NOTE_COMPLETENESS_EN: &str = "Note especially that, when judging each segmented reasoning step in order, consider both the completeness and the correctness of the reasoning step and grade strictly; only when the premises and the conclusion are both present and the reasoning is correct and rigorous can the step be judged correct";

const NOTE_FORMAT_EN: &str = "Note especially that, when judging each segmented reasoning step in order, if the step contains formulas in LaTeX or other forms, consider both the logical correctness and the format correctness of the step and grade strictly; only when both the logic and the format are correct can the step be judged correct";

const NOTE_DIMENSIONS_EN: &str = "Note especially that, throughout the grading process, additionally consider the three dimensions of simplicity, completeness and format correctness, where: - simplicity means that if a step is correct but amounts to meaningless filler or is overly redundant, judge that step wrong, - completeness means that when judging each segmented reasoning step in order, consider both the completeness and the correctness of the reasoning step and grade strictly; only when the premises and the conclusion are both present and the reasoning is correct and rigorous can the step be judged correct, - format correctness means that when judging each segmented reasoning step in order, if the step contains formulas in LaTeX or other forms, consider both the logical correctness and the format correctness of the step and grade strictly; only when both the logic and the format are correct can the step be judged correct";

/// Builds the grading prompt for one shipped variant.
pub fn agent_prompt(variant: PromptVariant, language: PromptLanguage) -> String {
    let zh = language == PromptLanguage::Chinese;
    let header = if zh { AGENT_HEADER_ZH } else { AGENT_HEADER_EN };
    let base_notes: [&str; 3] = if zh {
        [NOTE_RANGE_ZH, NOTE_MEANINGLESS_ZH, NOTE_CHAINS_ZH]
    } else {
        [NOTE_RANGE_EN, NOTE_MEANINGLESS_EN, NOTE_CHAINS_EN]
    };
    let json_note = if zh { NOTE_JSON_ZH } else { NOTE_JSON_EN };
    let bypass_note = if zh { NOTE_BYPASS_ZH } else { NOTE_BYPASS_EN };

    let mut notes: Vec<&str> = base_notes.to_vec();
    match variant {
        PromptVariant::Base | PromptVariant::Difficulty => {}
        PromptVariant::Simplicity => notes.push(if zh { NOTE_SIMPLICITY_ZH } else { NOTE_SIMPLICITY_EN }),
        PromptVariant::Completeness => {
            notes.push(if zh { NOTE_COMPLETENESS_ZH } else { NOTE_COMPLETENESS_EN })
        }
        PromptVariant::Format => notes.push(if zh { NOTE_FORMAT_ZH } else { NOTE_FORMAT_EN }),
        PromptVariant::SimComFor | PromptVariant::All => {
            notes.push(if zh { NOTE_DIMENSIONS_ZH } else { NOTE_DIMENSIONS_EN })
        }
    }
    notes.push(json_note);
    if matches!(variant, PromptVariant::Difficulty | PromptVariant::All) {
        notes.push(bypass_note);
    }

    let mut prompt = String::from(header);
    prompt.push_str(if zh { "请注意：" } else { " Please note: " });
    let numbered: Vec<String> = notes
        .iter()
        .enumerate()
        .map(|(i, note)| format!("{}.{}", i + 1, note))
        .collect();
    prompt.push_str(&numbered.join(if zh { "；" } else { "; " }));
    prompt.push_str(if zh { "。现在，请开始。" } else { ". Now, please begin." });
    prompt
}

// ---------------------------------------------------------------------------
// Baseline prompts
// ---------------------------------------------------------------------------

pub const BASELINE_V1_ZH: &str = "你是一名专业的数学评分专家，擅长客观评价数学题目的回复质量。数学题目共有三种类型，分别是计算题、证明题、开放题。现在，给你提供一个数学问题和一个参考答案，请基于参考答案判断回复内容中的最终答案是否正确。若回复内容的答案与参考答案一致，则认为正确给1分，否则认为错误给0分。请注意，只需判断回复内容的结果是否正确，无需关注解题过程的正确与否。证明题无参考答案，请自行判断回复内容是否正确；开放题的答案不一，参考答案中只给出了一种情况，其他情况也请自行判断。在分析完毕后，请另起一行，返回一个标准json格式的答案，即：{\"score\": 0/1}。";

pub const BASELINE_V2_ZH: &str = "你是一名专业的数学评分专家，擅长按照解题过程客观地评价数学题目的回复质量。数学题目共有三种类型，分别是计算题、证明题、开放题。现在，给你提供一个数学问题和一个参考答案，请逐步分析回复内容中的解题步骤和最终答案，并对其进行综合打分。请注意，打分区间为0-10分，且证明题无参考答案，开放题参考答案不一。在分析完毕后，请另起一行，返回一个标准json格式的答案，即：{\"score\": 5}。";

pub const BASELINE_V3_ZH: &str = "你是一名专业的数学评分专家，擅长按照解题过程客观地评价数学题目的回复质量。数学题目共有三种类型，分别是计算题、证明题、开放题。现在，给你提供一个数学问题和一个参考答案，请逐步分析回复内容中的解题步骤和最终答案，并对其进行综合打分。在打分过程中，可以从如下几个维度进行评测：答案正确性、过程正确性、方案合理性、表述清晰性、指令遵循性、整体完备性，最终给出一个综合得分。请注意，打分区间为0-10分，且证明题无参考答案，开放题参考答案不一。在分析完毕后，请另起一行，返回一个标准json格式的答案，即：{\"score\": 5}。";

pub const BASELINE_V1_EN: &str = "You are a professional math grading expert, skilled at objectively assessing the quality of responses to math problems. There are three types of math problems: calculation, proof and open-ended. You are given a math problem and a reference answer. Based on the reference answer, judge whether the final answer in the response is correct. If the response's answer matches the reference answer, it is correct and receives 1 point; otherwise it is wrong and receives 0 points. Note that you only need to judge whether the result of the response is correct, without considering the correctness of the solution process. Proof problems have no reference answer, so judge the response on your own; open-ended problems have more than one valid answer and the reference answer only gives one case, so judge other cases on your own. After your analysis, start a new line and return an answer in standard JSON format, i.e.: {\"score\": 0/1}.";

pub const BASELINE_V2_EN: &str = "You are a professional math grading expert, skilled at objectively assessing the quality of responses to math problems according to the solution process. There are three types of math problems: calculation, proof and open-ended. You are given a math problem and a reference answer. Analyze the solution steps and the final answer in the response step by step, and give an overall score. Note that the scoring range is 0-10, proof problems have no reference answer, and open-ended problems have more than one valid answer. After your analysis, start a new line and return an answer in standard JSON format, i.e.: {\"score\": 5}.";

pub const BASELINE_V3_EN: &str = "You are a professional math grading expert, skilled at objectively assessing the quality of responses to math problems according to the solution process. There are three types of math problems: calculation, proof and open-ended. You are given a math problem and a reference answer. Analyze the solution steps and the final answer in the response step by step, and give an overall score. During grading you may evaluate along the following dimensions: answer correctness, process correctness, solution reasonableness, clarity of expression, instruction following and overall completeness, then give one overall score. Note that the scoring range is 0-10, proof problems have no reference answer, and open-ended problems have more than one valid answer. After your analysis, start a new line and return an answer in standard JSON format, i.e.: {\"score\": 5}.";

// ---------------------------------------------------------------------------
// Solution-generation prompts
// ---------------------------------------------------------------------------

pub const GENERATE_CALCULATION_ZH: &str = "你是一名数学领域的专家，请严格按照如下格式回答问题：“解题过程：\n【XXX】\n\n最终答案：\n【YYY】”。其中，YYY为你的最终答案，请用一个【】符号将最终答案框起来。最终答案的具体形式需要遵从题目中的答案限定条件。例如，解题过程：\n【a=2+1=3, b=a-2=1】\n\n最终答案：\n【3,1】。\n\n下面请开始回答问题。";

pub const GENERATE_PROOF_OPEN_ZH: &str = "你是一名数学领域的专家，请回答如下数学问题。";

pub const GENERATE_CALCULATION_EN: &str = "You are an expert in mathematics. Answer the question strictly in the following format: \"解题过程：\n【XXX】\n\n最终答案：\n【YYY】\", where YYY is your final answer, enclosed in a single pair of 【】 brackets. The concrete form of the final answer must follow the answer constraint given in the problem. For example, 解题过程：\n【a=2+1=3, b=a-2=1】\n\n最终答案：\n【3,1】.\n\nNow please answer the question.";

pub const GENERATE_PROOF_OPEN_EN: &str = "You are an expert in mathematics. Please answer the following math problem.";

// ---------------------------------------------------------------------------
// Interpolation blocks
// ---------------------------------------------------------------------------

/// Appends the problem / reference / response block to an instruction prompt.
pub fn render_evaluation_input(
    instruction: &str,
    language: PromptLanguage,
    statement: &str,
    constraint: Option<&str>,
    reference_answer: Option<&str>,
    solution_text: &str,
    step_hint: Option<u32>,
) -> String {
    let zh = language == PromptLanguage::Chinese;
    let mut prompt = String::from(instruction);
    if let Some(hint) = step_hint {
        if zh {
            prompt.push_str(&format!("请将回复内容划分为大约{hint}个推理步骤。"));
        } else {
            prompt.push_str(&format!(
                " Please segment the response into approximately {hint} reasoning steps."
            ));
        }
    }
    prompt.push_str(if zh { "\n\n数学问题：\n" } else { "\n\nMath problem:\n" });
    prompt.push_str(statement);
    if let Some(constraint) = constraint {
        prompt.push_str(if zh { "\n答案限定条件：" } else { "\nAnswer constraint: " });
        prompt.push_str(constraint);
    }
    prompt.push_str(if zh { "\n\n参考答案：\n" } else { "\n\nReference answer:\n" });
    prompt.push_str(reference_answer.unwrap_or(if zh { "无" } else { "None" }));
    prompt.push_str(if zh { "\n\n回复内容：\n" } else { "\n\nResponse:\n" });
    prompt.push_str(solution_text);
    prompt
}

/// Appends the problem block to a solution-generation prompt.
pub fn render_generation_input(
    instruction: &str,
    language: PromptLanguage,
    statement: &str,
    constraint: Option<&str>,
) -> String {
    let zh = language == PromptLanguage::Chinese;
    let mut prompt = String::from(instruction);
    prompt.push_str(if zh { "\n\n数学问题：\n" } else { "\n\nMath problem:\n" });
    prompt.push_str(statement);
    if let Some(constraint) = constraint {
        prompt.push_str(if zh { "\n答案限定条件：" } else { "\nAnswer constraint: " });
        prompt.push_str(constraint);
    }
    prompt
}
