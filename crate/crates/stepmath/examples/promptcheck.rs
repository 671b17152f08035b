use stepmath::prompts::*;
fn main() {
    let variants = [
        ("base", PromptVariant::Base),
        ("difficulty", PromptVariant::Difficulty),
        ("simplicity", PromptVariant::Simplicity),
        ("completeness", PromptVariant::Completeness),
        ("format", PromptVariant::Format),
        ("all", PromptVariant::All),
    ];
    for (name, v) in variants {
        println!("=== AGENT {name}");
        println!("{}", agent_prompt(v, PromptLanguage::Chinese));
    }
    println!("=== V1");
    println!("{BASELINE_V1_ZH}");
    println!("=== V2");
    println!("{BASELINE_V2_ZH}");
    println!("=== V3");
    println!("{BASELINE_V3_ZH}");
    println!("=== GEN_CALC");
    println!("{GENERATE_CALCULATION_ZH}");
    println!("=== GEN_PROOF");
    println!("{GENERATE_PROOF_OPEN_ZH}");
    println!("=== END");
}
