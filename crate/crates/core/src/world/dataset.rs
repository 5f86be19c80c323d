use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    derive_goal_conditions, load_scene, ActionCatalog, Environment, GoalSource, GoalSpec, Predicate, Scene, SceneDoc,
    WorldError,
};
use crate::plan::{Command, Plan};

/// Top-level dataset document; paths are relative to the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(default)]
    pub name: String,
    pub actions: PathBuf,
    pub scenes: Vec<PathBuf>,
    pub tasks: PathBuf,
    /// Tasks used as in-context examples; excluded from evaluation by default.
    #[serde(default)]
    pub example_tasks: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskDoc {
    pub task_name: String,
    pub scene_id: String,
    pub goal_plan: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_conditions: Option<Vec<String>>,
    /// Plausible-but-wrong commands the synthetic sampler may inject.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub distractors: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Task {
    pub name: String,
    pub scene_id: String,
    pub goal_plan: Plan,
    pub goal: GoalSpec,
    pub distractors: Vec<Command>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub catalog: ActionCatalog,
    pub scenes: BTreeMap<String, Scene>,
    pub tasks: Vec<Task>,
}

fn read(path: &Path) -> Result<String, WorldError> {
    fs::read_to_string(path).map_err(|source| WorldError::Io { path: path.display().to_string(), source })
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, WorldError> {
    serde_json::from_str(&read(path)?)
        .map_err(|e| WorldError::Parse { entry: path.display().to_string(), message: e.to_string() })
}

impl Dataset {
    /// Loads a dataset from its manifest file, or from `dataset.json` inside a directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Dataset, WorldError> {
        let path = path.as_ref();
        let manifest_path = if path.is_dir() { path.join("dataset.json") } else { path.to_path_buf() };
        let root = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let manifest: DatasetManifest = parse_json(&manifest_path)?;

        let catalog = ActionCatalog::from_json(&read(&root.join(&manifest.actions))?)?;
        let mut scenes = BTreeMap::new();
        for scene_path in &manifest.scenes {
            let doc: SceneDoc = parse_json(&root.join(scene_path))?;
            let scene = load_scene(&doc)?;
            if scenes.insert(scene.id.clone(), scene).is_some() {
                return Err(WorldError::Validation(format!("duplicate scene id `{}`", doc.scene_id)));
            }
        }
        let docs: Vec<TaskDoc> = parse_json(&root.join(&manifest.tasks))?;
        let mut dataset = Dataset { root, manifest, catalog, scenes, tasks: Vec::with_capacity(docs.len()) };
        for doc in docs {
            let task = dataset.build_task(doc)?;
            if dataset.tasks.iter().any(|t| t.name == task.name) {
                return Err(WorldError::Validation(format!("duplicate task `{}`", task.name)));
            }
            dataset.tasks.push(task);
        }
        for name in &dataset.manifest.example_tasks {
            if dataset.task(name).is_none() {
                return Err(WorldError::Validation(format!("example task `{name}` is not in the task list")));
            }
        }
        Ok(dataset)
    }

    fn build_task(&self, doc: TaskDoc) -> Result<Task, WorldError> {
        let dataset_error = |message: String| WorldError::Dataset { task: doc.task_name.clone(), message };
        let scene =
            self.scenes.get(&doc.scene_id).ok_or_else(|| dataset_error(format!("unknown scene `{}`", doc.scene_id)))?;
        let parse_cmds = |lines: &[String]| {
            lines
                .iter()
                .map(|l| l.parse::<Command>().map_err(|e| dataset_error(format!("bad command `{l}`: {e}"))))
                .collect::<Result<Vec<_>, _>>()
        };
        let goal_plan = Plan::goal(parse_cmds(&doc.goal_plan)?);
        let env = self.environment(&scene.id).expect("scene exists");
        let derived = derive_goal_conditions(&env, &scene.initial, &doc.task_name, &goal_plan)?;
        let goal = match &doc.goal_conditions {
            Some(explicit) => {
                let goal_conditions = explicit.iter().map(|p| p.parse::<Predicate>()).collect::<Result<_, _>>()?;
                GoalSpec { task_name: doc.task_name.clone(), goal_conditions, source: GoalSource::Explicit }
            }
            None => derived,
        };
        if goal.goal_conditions.is_empty() {
            return Err(dataset_error("empty goal conditions".into()));
        }
        Ok(Task {
            name: doc.task_name.clone(),
            scene_id: doc.scene_id.clone(),
            goal_plan,
            goal,
            distractors: parse_cmds(&doc.distractors)?,
        })
    }

    pub fn environment(&self, scene_id: &str) -> Option<Environment> {
        self.scenes.get(scene_id).map(|s| Environment::new(self.catalog.clone(), s.objects.clone()))
    }

    pub fn task(&self, name: &str) -> Option<&Task> {
        self.tasks.iter().find(|t| t.name == name)
    }

    pub fn example_tasks(&self) -> Vec<&Task> {
        self.manifest.example_tasks.iter().filter_map(|n| self.task(n)).collect()
    }

    /// Tasks evaluated by default: everything except the in-context examples.
    pub fn evaluation_tasks(&self) -> Vec<&Task> {
        self.tasks.iter().filter(|t| !self.manifest.example_tasks.contains(&t.name)).collect()
    }
}
