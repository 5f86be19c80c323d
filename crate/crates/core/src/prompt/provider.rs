//! Plan generators: replayed fixtures, a synthetic noisy sampler, and an
//! optional HTTP chat-completions client with an on-disk response cache.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::noise::{perturb, NoiseModel};
use super::{program_call, PromptDocument, PromptKind, SamplingConfig};
use crate::plan::{Command, Plan};
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("missing fixture: expected {}", path.display())]
    MissingFixture { path: PathBuf },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider returned {got} sample(s), expected {expected}")]
    SampleCount { expected: usize, got: usize },
    #[error("fixture i/o at {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed fixture manifest at {}: {message}", path.display())]
    Manifest { path: PathBuf, message: String },
    #[error("synthetic provider has no seed plan for task {0:?}")]
    UnknownTask(String),
    #[error("provider configuration: {0}")]
    Config(String),
}

/// `(PromptDocument, SamplingConfig) -> raw plan texts`.
///
/// Implementations must be callable from several threads at once.
pub trait PlanGenerator: Send + Sync {
    fn name(&self) -> String;
    fn sample(&self, prompt: &PromptDocument, config: &SamplingConfig) -> Result<Vec<String>, ProviderError>;
}

impl<P: PlanGenerator + ?Sized> PlanGenerator for Box<P> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn sample(&self, prompt: &PromptDocument, config: &SamplingConfig) -> Result<Vec<String>, ProviderError> {
        (**self).sample(prompt, config)
    }
}

/// Runs a provider and enforces the sample count contract.
pub fn generate(
    provider: &dyn PlanGenerator,
    prompt: &PromptDocument,
    config: &SamplingConfig,
) -> Result<Vec<String>, ProviderError> {
    if config.num_samples == 0 {
        return Err(ProviderError::Config("num_samples must be positive".into()));
    }
    if config.temperature.is_nan() || config.temperature < 0.0 {
        return Err(ProviderError::Config(format!("temperature must be >= 0, got {}", config.temperature)));
    }
    let texts = provider.sample(prompt, config)?;
    if texts.len() != config.num_samples {
        return Err(ProviderError::SampleCount { expected: config.num_samples, got: texts.len() });
    }
    Ok(texts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureManifest {
    pub prompt_hash: String,
    pub stage: String,
    pub instruction: String,
    pub config: SamplingConfig,
    pub samples: usize,
    pub provider: String,
}

/// On-disk layout `<root>/<prompt-hash>/<stage>/<k>.txt` plus `manifest.json`.
///
/// Every file is written to a temporary sibling and renamed into place, and
/// the manifest goes last, so a reader never observes a partial entry.
#[derive(Debug, Clone)]
pub struct FixtureStore {
    root: PathBuf,
}

impl FixtureStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        FixtureStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entry_dir(&self, prompt_hash: &str, kind: PromptKind) -> PathBuf {
        self.root.join(prompt_hash).join(kind.stage())
    }

    pub fn manifest_path(&self, prompt_hash: &str, kind: PromptKind) -> PathBuf {
        self.entry_dir(prompt_hash, kind).join("manifest.json")
    }

    pub fn manifest(&self, prompt: &PromptDocument) -> Result<Option<FixtureManifest>, ProviderError> {
        let path = self.manifest_path(&prompt.content_hash(), prompt.kind);
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(ProviderError::Io { path, source }),
        };
        serde_json::from_str(&text).map(Some).map_err(|e| ProviderError::Manifest { path, message: e.to_string() })
    }

    /// All recorded samples of an entry, in recorded order.
    pub fn load(&self, prompt: &PromptDocument) -> Result<(FixtureManifest, Vec<String>), ProviderError> {
        let hash = prompt.content_hash();
        let Some(manifest) = self.manifest(prompt)? else {
            return Err(ProviderError::MissingFixture { path: self.manifest_path(&hash, prompt.kind) });
        };
        let dir = self.entry_dir(&hash, prompt.kind);
        let mut samples = Vec::with_capacity(manifest.samples);
        for k in 0..manifest.samples {
            let path = dir.join(format!("{k}.txt"));
            match fs::read_to_string(&path) {
                Ok(text) => samples.push(text),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                    return Err(ProviderError::MissingFixture { path })
                }
                Err(source) => return Err(ProviderError::Io { path, source }),
            }
        }
        Ok((manifest, samples))
    }

    pub fn store(
        &self,
        prompt: &PromptDocument,
        config: &SamplingConfig,
        samples: &[String],
        provider: &str,
    ) -> Result<FixtureManifest, ProviderError> {
        let hash = prompt.content_hash();
        let dir = self.entry_dir(&hash, prompt.kind);
        fs::create_dir_all(&dir).map_err(|source| ProviderError::Io { path: dir.clone(), source })?;
        for (k, text) in samples.iter().enumerate() {
            write_atomic(&dir.join(format!("{k}.txt")), text.as_bytes())?;
        }
        let manifest = FixtureManifest {
            prompt_hash: hash.clone(),
            stage: prompt.kind.stage().to_string(),
            instruction: prompt.instruction.clone(),
            config: *config,
            samples: samples.len(),
            provider: provider.to_string(),
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write_atomic(&self.manifest_path(&hash, prompt.kind), format!("{json}\n").as_bytes())?;
        Ok(manifest)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ProviderError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let io = |source| ProviderError::Io { path: path.to_path_buf(), source };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Returns recorded samples for the prompt's content hash, first
/// `num_samples` in recorded order.
#[derive(Debug, Clone)]
pub struct ReplayProvider {
    store: FixtureStore,
}

impl ReplayProvider {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ReplayProvider { store: FixtureStore::new(root) }
    }
}

impl PlanGenerator for ReplayProvider {
    fn name(&self) -> String {
        "replay".into()
    }

    fn sample(&self, prompt: &PromptDocument, config: &SamplingConfig) -> Result<Vec<String>, ProviderError> {
        let (_, mut samples) = self.store.load(prompt)?;
        if samples.len() < config.num_samples {
            return Err(ProviderError::SampleCount { expected: config.num_samples, got: samples.len() });
        }
        samples.truncate(config.num_samples);
        Ok(samples)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub seed_plan: Plan,
    pub distractors: Vec<Command>,
}

/// Perturbs a known seed plan per instruction.
///
/// Prog stage: program body over the seed plan with the task's distractors.
/// Reorder stage: the seed plan restricted to the offered pool, with the
/// rest of the pool as distractors, one canonical command per line.
/// Sample `k` draws from `derive_seed(config.seed, prompt hash, k)`.
#[derive(Debug, Clone, Default)]
pub struct SyntheticProvider {
    pub tasks: BTreeMap<String, SyntheticTask>,
    pub noise: NoiseModel,
}

impl SyntheticProvider {
    pub fn new(noise: NoiseModel) -> Self {
        SyntheticProvider { tasks: BTreeMap::new(), noise }
    }

    pub fn with_task(mut self, instruction: impl Into<String>, task: SyntheticTask) -> Self {
        self.tasks.insert(instruction.into(), task);
        self
    }
}

impl PlanGenerator for SyntheticProvider {
    fn name(&self) -> String {
        "synthetic".into()
    }

    fn sample(&self, prompt: &PromptDocument, config: &SamplingConfig) -> Result<Vec<String>, ProviderError> {
        self.noise.validate().map_err(ProviderError::Config)?;
        let task = self
            .tasks
            .get(&prompt.instruction)
            .ok_or_else(|| ProviderError::UnknownTask(prompt.instruction.clone()))?;

        let (seed, pool): (Vec<Command>, Vec<Command>) = match prompt.unique_commands() {
            None => (task.seed_plan.commands.clone(), task.distractors.clone()),
            Some(unique) => (
                task.seed_plan.commands.iter().filter(|c| unique.contains(c)).cloned().collect(),
                unique.iter().filter(|c| !task.seed_plan.commands.contains(c)).cloned().collect(),
            ),
        };

        let hash = prompt.content_hash();
        let texts = (0..config.num_samples)
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &hash, k as u64));
                let mut commands = perturb(&seed, &self.noise, &pool, &mut rng);
                commands.truncate(config.max_length);
                match prompt.kind {
                    PromptKind::Prog => commands.iter().map(|c| format!("    {}\n", program_call(c))).collect(),
                    PromptKind::Reorder => commands.iter().map(|c| format!("{c}\n")).collect(),
                }
            })
            .collect();
        Ok(texts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    /// Full URL of a chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub retries: u32,
    pub retry_backoff_ms: u64,
    pub cache_dir: PathBuf,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-3.5-turbo".into(),
            api_key_env: "VTPLAN_API_KEY".into(),
            timeout_secs: 60,
            retries: 3,
            retry_backoff_ms: 500,
            cache_dir: PathBuf::from("cache"),
        }
    }
}

/// HTTP chat-completions client. Responses are cached per
/// `(prompt hash, sampling config, sample index)` in the fixture layout, so a
/// later replay over the cache directory reproduces the run offline.
pub struct RemoteProvider {
    config: RemoteConfig,
    api_key: String,
    agent: ureq::Agent,
    cache: FixtureStore,
}

impl RemoteProvider {
    /// Reads the token from the environment variable named in the config.
    pub fn from_env(config: RemoteConfig) -> Result<Self, ProviderError> {
        let key = std::env::var(&config.api_key_env)
            .map_err(|_| ProviderError::Config(format!("environment variable {} is not set", config.api_key_env)))?;
        Ok(Self::with_key(config, key))
    }

    pub fn with_key(config: RemoteConfig, api_key: String) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let cache = FixtureStore::new(config.cache_dir.clone());
        RemoteProvider { config, api_key, agent, cache }
    }

    fn cache_label(&self) -> String {
        format!("remote:{}", self.config.model)
    }

    fn request_once(&self, prompt: &PromptDocument, config: &SamplingConfig, k: usize) -> Result<String, String> {
        let body = serde_json::json!({
            "model": self.config.model,
            "messages": [{ "role": "user", "content": prompt.text }],
            "temperature": config.temperature,
            "max_tokens": config.max_length,
            "seed": derive_seed(config.seed, &prompt.content_hash(), k as u64),
            "n": 1,
        });
        let mut response = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .header("Content-Type", "application/json")
            .send(body.to_string().as_str())
            .map_err(|e| e.to_string())?;
        let status = response.status();
        let text = response.body_mut().read_to_string().map_err(|e| e.to_string())?;
        if !status.is_success() {
            return Err(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()));
        }
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| format!("bad JSON: {e}"))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| "response has no choices[0].message.content".to_string())
    }

    fn request(&self, prompt: &PromptDocument, config: &SamplingConfig, k: usize) -> Result<String, ProviderError> {
        let attempts = self.config.retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(Duration::from_millis(self.config.retry_backoff_ms * u64::from(attempt)));
            }
            match self.request_once(prompt, config, k) {
                Ok(text) => return Ok(text),
                Err(message) => last = message,
            }
        }
        Err(ProviderError::Transport { attempts, message: last })
    }
}

/// Cache entries are reusable when everything but the sample count matches.
fn cache_compatible(manifest: &FixtureManifest, config: &SamplingConfig, label: &str) -> bool {
    manifest.provider == label
        && manifest.config.temperature == config.temperature
        && manifest.config.max_length == config.max_length
        && manifest.config.seed == config.seed
}

impl PlanGenerator for RemoteProvider {
    fn name(&self) -> String {
        self.cache_label()
    }

    fn sample(&self, prompt: &PromptDocument, config: &SamplingConfig) -> Result<Vec<String>, ProviderError> {
        let label = self.cache_label();
        let mut samples = match self.cache.manifest(prompt)? {
            Some(m) if cache_compatible(&m, config, &label) => self.cache.load(prompt)?.1,
            _ => Vec::new(),
        };
        if samples.len() >= config.num_samples {
            samples.truncate(config.num_samples);
            return Ok(samples);
        }
        for k in samples.len()..config.num_samples {
            samples.push(self.request(prompt, config, k)?);
        }
        self.cache.store(prompt, config, &samples, &label)?;
        Ok(samples)
    }
}

/// Delegates to another provider and records every response as a fixture.
pub struct RecordingProvider<P> {
    inner: P,
    store: FixtureStore,
}

impl<P: PlanGenerator> RecordingProvider<P> {
    pub fn new(inner: P, root: impl Into<PathBuf>) -> Self {
        RecordingProvider { inner, store: FixtureStore::new(root) }
    }
}

impl<P: PlanGenerator> PlanGenerator for RecordingProvider<P> {
    fn name(&self) -> String {
        self.inner.name()
    }

    fn sample(&self, prompt: &PromptDocument, config: &SamplingConfig) -> Result<Vec<String>, ProviderError> {
        let samples = self.inner.sample(prompt, config)?;
        self.store.store(prompt, config, &samples, &self.inner.name())?;
        Ok(samples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{extract_unique_commands, parse_plan_text, PlanOrigin, UniqueCommandSet};
    use crate::prompt::{format_prog_prompt, format_reorder_prompt, ActionSignature};
    use crate::tree::VoteTree;
    use std::io::{BufRead, BufReader, Read};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    fn cmds(list: &[&str]) -> Vec<Command> {
        list.iter().map(|c| c.parse().unwrap()).collect()
    }

    fn prog_prompt(instruction: &str) -> PromptDocument {
        let actions = vec![ActionSignature { name: "find".into(), arity: 1 }];
        format_prog_prompt(instruction, &actions, &["salmon".into(), "microwave".into()], &[]).unwrap()
    }

    fn salmon_provider(noise: NoiseModel) -> SyntheticProvider {
        let plan = Plan::goal(cmds(&[
            "find(salmon)",
            "grab(salmon)",
            "find(microwave)",
            "open(microwave)",
            "putin(salmon,microwave)",
            "close(microwave)",
            "switchon(microwave)",
            "switchoff(microwave)",
        ]));
        SyntheticProvider::new(noise).with_task(
            "microwave salmon",
            SyntheticTask { seed_plan: plan, distractors: cmds(&["find(fridge)", "open(fridge)"]) },
        )
    }

    fn config(n: usize, seed: u64) -> SamplingConfig {
        SamplingConfig { num_samples: n, seed, ..SamplingConfig::prog_default() }
    }

    #[test]
    fn synthetic_zero_noise_copies_seed_plan() {
        let provider = salmon_provider(NoiseModel::zero());
        let prompt = prog_prompt("microwave salmon");
        let texts = generate(&provider, &prompt, &config(20, 7)).unwrap();
        assert_eq!(texts.len(), 20);
        let expected = provider.tasks["microwave salmon"].seed_plan.commands.clone();
        for text in &texts {
            assert_eq!(parse_plan_text(text, PlanOrigin::generated(0)).plan.commands, expected);
        }
    }

    #[test]
    fn synthetic_is_seeded() {
        let noise = NoiseModel { drop_prob: 0.2, swap_prob: 0.2, insert_prob: 0.2 };
        let provider = salmon_provider(noise);
        let prompt = prog_prompt("microwave salmon");
        let a = generate(&provider, &prompt, &config(20, 11)).unwrap();
        assert_eq!(a, generate(&provider, &prompt, &config(20, 11)).unwrap());
        assert_ne!(a, generate(&provider, &prompt, &config(20, 12)).unwrap());
    }

    #[test]
    fn synthetic_reorder_stays_inside_pool() {
        let noise = NoiseModel { drop_prob: 0.2, swap_prob: 0.2, insert_prob: 0.3 };
        let provider = salmon_provider(noise);
        let unique = UniqueCommandSet::from_commands(cmds(&["find(salmon)", "grab(salmon)", "find(fridge)"]));
        let prompt = format_reorder_prompt(&unique, "microwave salmon", &[]).unwrap();
        let texts = generate(&provider, &prompt, &config(50, 1)).unwrap();
        for text in texts {
            for c in parse_plan_text(&text, PlanOrigin::reordered(0)).plan.commands {
                assert!(unique.contains(&c), "{c} escaped the pool");
            }
        }
    }

    #[test]
    fn synthetic_unknown_task_is_an_error() {
        let provider = salmon_provider(NoiseModel::zero());
        let err = generate(&provider, &prog_prompt("wash mug"), &config(1, 0)).unwrap_err();
        assert!(matches!(err, ProviderError::UnknownTask(t) if t == "wash mug"));
    }

    struct Short;
    impl PlanGenerator for Short {
        fn name(&self) -> String {
            "short".into()
        }
        fn sample(&self, _: &PromptDocument, c: &SamplingConfig) -> Result<Vec<String>, ProviderError> {
            Ok(vec![String::new(); c.num_samples - 1])
        }
    }

    #[test]
    fn shortfall_is_reported() {
        let err = generate(&Short, &prog_prompt("x"), &config(3, 0)).unwrap_err();
        assert!(matches!(err, ProviderError::SampleCount { expected: 3, got: 2 }));
    }

    #[test]
    fn replay_missing_fixture_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let prompt = prog_prompt("microwave salmon");
        let err = generate(&ReplayProvider::new(dir.path()), &prompt, &config(1, 0)).unwrap_err();
        let ProviderError::MissingFixture { path } = err else { panic!("{err}") };
        assert!(path.starts_with(dir.path().join(prompt.content_hash()).join("prog")));
    }

    #[test]
    fn record_then_replay_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let noise = NoiseModel { drop_prob: 0.3, swap_prob: 0.3, insert_prob: 0.3 };
        let recorder = RecordingProvider::new(salmon_provider(noise), dir.path());
        let prompt = prog_prompt("microwave salmon");
        let recorded = generate(&recorder, &prompt, &config(30, 5)).unwrap();
        let replay = ReplayProvider::new(dir.path());
        assert_eq!(generate(&replay, &prompt, &config(30, 5)).unwrap(), recorded);
        assert_eq!(generate(&replay, &prompt, &config(10, 99)).unwrap(), recorded[..10]);
        let err = generate(&replay, &prompt, &config(31, 5)).unwrap_err();
        assert!(matches!(err, ProviderError::SampleCount { expected: 31, got: 30 }));
        let manifest = FixtureStore::new(dir.path()).manifest(&prompt).unwrap().unwrap();
        assert_eq!((manifest.samples, manifest.provider.as_str(), manifest.stage.as_str()), (30, "synthetic", "prog"));
    }

    /// Minimal HTTP server answering chat-completion requests with a fixed
    /// rotation of bodies, or with `status` errors.
    fn mock_server(status: u16, contents: Vec<&'static str>) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut length = 0usize;
                let mut auth_ok = false;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        length = v.trim().parse().unwrap_or(0);
                    }
                    auth_ok |= lower.starts_with("authorization: bearer test-key");
                }
                let mut body = vec![0; length];
                let _ = reader.read_exact(&mut body);
                let n = counter.fetch_add(1, Ordering::SeqCst);
                let (code, payload) = if status != 200 || !auth_ok {
                    (if auth_ok { status } else { 401 }, "{}".to_string())
                } else {
                    let content = contents[n % contents.len()];
                    (200, serde_json::json!({ "choices": [{ "message": { "content": content } }] }).to_string())
                };
                let _ = write!(
                    stream,
                    "HTTP/1.1 {code} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                    payload.len()
                );
            }
        });
        (url, hits)
    }

    fn remote_config(url: String, cache: &Path) -> RemoteConfig {
        RemoteConfig {
            endpoint: url,
            retries: 1,
            retry_backoff_ms: 1,
            timeout_secs: 5,
            cache_dir: cache.into(),
            ..RemoteConfig::default()
        }
    }

    #[test]
    fn remote_cache_reproduces_pipeline_offline() {
        let (url, hits) =
            mock_server(200, vec!["find(salmon)\ngrab(salmon)", "find(salmon)\nfind(microwave)", "grab(salmon)"]);
        let cache = tempfile::tempdir().unwrap();
        let remote = RemoteProvider::with_key(remote_config(url, cache.path()), "test-key".into());
        let prompt = prog_prompt("microwave salmon");
        let cfg = config(6, 3);

        let first = generate(&remote, &prompt, &cfg).unwrap();
        assert_eq!(hits.load(Ordering::SeqCst), 6);
        let again = generate(&remote, &prompt, &cfg).unwrap();
        assert_eq!(again, first);
        assert_eq!(hits.load(Ordering::SeqCst), 6, "cached rerun must stay offline");

        let replayed = generate(&ReplayProvider::new(cache.path()), &prompt, &cfg).unwrap();
        assert_eq!(replayed, first);

        let pipeline = |texts: &[String]| {
            let plans: Vec<Plan> =
                texts.iter().enumerate().map(|(k, t)| parse_plan_text(t, PlanOrigin::generated(k)).plan).collect();
            let unique = extract_unique_commands(&plans).unwrap();
            (unique, VoteTree::build(&plans).unwrap().to_json())
        };
        assert_eq!(pipeline(&first), pipeline(&replayed));

        // a different sampling seed is a cache miss
        generate(&remote, &prompt, &config(6, 4)).unwrap();
        assert_eq!(hits.load(Ordering::SeqCst), 12);
    }

    #[test]
    fn remote_gives_up_after_bounded_retries() {
        let (url, hits) = mock_server(500, vec![]);
        let cache = tempfile::tempdir().unwrap();
        let remote = RemoteProvider::with_key(remote_config(url, cache.path()), "test-key".into());
        let err = generate(&remote, &prog_prompt("x"), &config(2, 0)).unwrap_err();
        assert!(matches!(err, ProviderError::Transport { attempts: 2, .. }), "{err}");
        assert_eq!(hits.load(Ordering::SeqCst), 2);
        assert!(FixtureStore::new(cache.path()).manifest(&prog_prompt("x")).unwrap().is_none());
    }

    #[test]
    fn remote_requires_key_variable() {
        let config = RemoteConfig { api_key_env: "VTPLAN_TEST_UNSET_VARIABLE_7f3a".into(), ..RemoteConfig::default() };
        assert!(matches!(RemoteProvider::from_env(config), Err(ProviderError::Config(_))));
    }
}
