use std::fs;
use std::path::PathBuf;

use vtplan_core::eval::{RunConfig, SuiteContext};
use vtplan_core::plan::UniqueCommandSet;
use vtplan_core::prompt::{format_prog_prompt, format_reorder_prompt, function_name, PromptDocument};
use vtplan_core::world::Dataset;

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// Compares against a frozen file. A missing golden is written and the test
/// fails so the new file gets reviewed before it is trusted.
fn check_golden(name: &str, prompt: &PromptDocument) {
    let path = data_dir().join("prompts").join(name);
    match fs::read_to_string(&path) {
        Ok(golden) => assert_eq!(prompt.text, golden, "{name} drifted from its golden file"),
        Err(_) => {
            fs::write(&path, &prompt.text).unwrap();
            panic!("wrote new golden {}; review it and rerun", path.display());
        }
    }
}

fn dataset() -> Dataset {
    Dataset::load(data_dir().join("dataset")).unwrap()
}

#[test]
fn prog_prompt_matches_golden() {
    let ds = dataset();
    let config = RunConfig { dataset: ds.root.clone(), ..RunConfig::default() };
    let ctx = SuiteContext::new(&config, &ds).unwrap();
    let task = ds.task("microwave salmon").unwrap();
    let objects: Vec<String> = ds.scenes[&task.scene_id].objects.ids().map(str::to_string).collect();
    let prompt = format_prog_prompt(&task.name, &ctx.actions, &objects, &ctx.examples).unwrap();
    assert!(prompt.text.ends_with("def microwave_salmon():\n"));
    for example in ds.example_tasks() {
        assert!(prompt.text.contains(&format!("def {}():\n", function_name(&example.name))));
    }
    check_golden("microwave_salmon.prog.txt", &prompt);
}

#[test]
fn reorder_prompt_matches_golden() {
    let ds = dataset();
    let config = RunConfig { dataset: ds.root.clone(), ..RunConfig::default() };
    let ctx = SuiteContext::new(&config, &ds).unwrap();
    let task = ds.task("put apple in fridge").unwrap();
    let pool = UniqueCommandSet::from_commands(task.goal_plan.commands.iter().chain(&task.distractors).cloned());
    let prompt = format_reorder_prompt(&pool, &task.name, &ctx.demos).unwrap();
    assert!(prompt.text.contains("# Task: put apple in fridge"));
    for command in pool.iter() {
        assert!(prompt.text.contains(&format!("{command}\n")));
    }
    check_golden("put_apple_in_fridge.reorder.txt", &prompt);
}
