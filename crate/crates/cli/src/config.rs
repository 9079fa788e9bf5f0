//! Run configuration file: sectioned key/value pairs with environment
//! interpolation. Command-line flags override config values, which override
//! built-in defaults. Validation reports every violated field at once.

use std::path::{Path, PathBuf};

use smishkit_core::corpus::CorpusFormat;
use smishkit_core::kvconf::KvConfig;
use smishkit_core::pipeline::Method;

/// Settings readable from a config file. All optional; commands fall back
/// to their own defaults.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub corpus_path: Option<PathBuf>,
    pub corpus_format: Option<CorpusFormat>,
    pub drop_ham: Option<bool>,
    pub folds_k: Option<usize>,
    pub seed: Option<u64>,
    pub annotation_records: Option<PathBuf>,
    pub annotation_overrides: Option<PathBuf>,
    pub templates_path: Option<PathBuf>,
    pub lexicon_path: Option<PathBuf>,
    pub stopwords_path: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub min_chars: Option<usize>,
    pub max_chars: Option<usize>,
    pub smishing_requires_artifact: Option<bool>,
    /// `;;`-separated regex list replacing the default placeholder patterns.
    pub placeholder_patterns: Option<Vec<String>>,
    pub url_pattern: Option<String>,
    pub phone_pattern: Option<String>,
    pub endpoint: Option<String>,
    pub api_key: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub system_prompt: Option<String>,
    pub max_retries: Option<u32>,
    pub max_inflight: Option<usize>,
    pub requests_per_minute: Option<f64>,
    pub methods: Option<Vec<Method>>,
    pub factors: Option<Vec<u32>>,
    pub allowed_factors: Option<Vec<u32>>,
    pub attempt_cap_multiplier: Option<usize>,
    pub theory_on_spam: Option<bool>,
    pub workers: Option<usize>,
    pub output_root: Option<PathBuf>,
}

/// Factors accepted without an explicit override in the config.
pub const DEFAULT_ALLOWED_FACTORS: [u32; 3] = [2, 5, 10];

impl RunConfig {
    /// Parse and validate a config file; collects every problem instead of
    /// stopping at the first.
    pub fn load(path: &Path) -> Result<RunConfig, Vec<String>> {
        let kv = KvConfig::from_file(path).map_err(|e| vec![e.to_string()])?;
        let violations = std::cell::RefCell::new(Vec::new());
        let mut config = RunConfig::default();

        let flag = |message: String| violations.borrow_mut().push(message);
        let get = |section: &str, key: &str| -> Option<String> {
            match kv.get(section, key) {
                Ok(value) => value,
                Err(e) => {
                    flag(format!("[{section}] {key}: {e}"));
                    None
                }
            }
        };

        config.corpus_path = get("corpus", "path").map(PathBuf::from);
        config.corpus_format = get("corpus", "format").map(|v| {
            CorpusFormat::parse(&v).unwrap_or_else(|| {
                flag(format!("[corpus] format: unknown format {v:?}"));
                CorpusFormat::Csv
            })
        });
        let parse_bool = |section: &str, key: &str, raw: Option<String>| -> Option<bool> {
            raw.and_then(|v| match v.to_lowercase().as_str() {
                "true" | "yes" | "1" => Some(true),
                "false" | "no" | "0" => Some(false),
                _ => {
                    flag(format!("[{section}] {key}: expected true/false, got {v:?}"));
                    None
                }
            })
        };
        let drop_ham_raw = get("corpus", "drop_ham");
        config.drop_ham = parse_bool("corpus", "drop_ham", drop_ham_raw);

        macro_rules! parse_num {
            ($section:literal, $key:literal, $ty:ty) => {{
                get($section, $key).and_then(|v| match v.parse::<$ty>() {
                    Ok(parsed) => Some(parsed),
                    Err(_) => {
                        flag(format!(
                            "[{}] {}: cannot parse {:?} as {}",
                            $section,
                            $key,
                            v,
                            stringify!($ty)
                        ));
                        None
                    }
                })
            }};
        }

        config.folds_k = parse_num!("folds", "k", usize);
        config.seed = parse_num!("folds", "seed", u64);
        config.annotation_records = get("annotations", "records").map(PathBuf::from);
        config.annotation_overrides = get("annotations", "overrides").map(PathBuf::from);
        config.templates_path = get("templates", "path").map(PathBuf::from);
        config.lexicon_path = get("eda", "lexicon").map(PathBuf::from);
        config.stopwords_path = get("eda", "stopwords").map(PathBuf::from);
        config.alpha = parse_num!("eda", "alpha", f64);
        config.min_chars = parse_num!("validation", "min_chars", usize);
        config.max_chars = parse_num!("validation", "max_chars", usize);
        let artifact_raw = get("validation", "smishing_requires_artifact");
        config.smishing_requires_artifact =
            parse_bool("validation", "smishing_requires_artifact", artifact_raw);
        config.placeholder_patterns = get("validation", "placeholder_patterns").map(|v| {
            v.split(";;")
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect()
        });
        config.url_pattern = get("validation", "url_pattern");
        config.phone_pattern = get("validation", "phone_pattern");
        config.endpoint = get("gateway", "endpoint");
        config.api_key = get("gateway", "api_key");
        config.model = get("gateway", "model");
        config.temperature = parse_num!("gateway", "temperature", f64);
        config.max_tokens = parse_num!("gateway", "max_tokens", u32);
        config.system_prompt = get("gateway", "system_prompt");
        config.max_retries = parse_num!("gateway", "max_retries", u32);
        config.max_inflight = parse_num!("gateway", "max_inflight", usize);
        config.requests_per_minute = parse_num!("gateway", "requests_per_minute", f64);

        config.methods = get("augment", "methods").map(|v| {
            v.split(',')
                .filter(|s| !s.trim().is_empty())
                .filter_map(|s| {
                    Method::parse(s).or_else(|| {
                        flag(format!("[augment] methods: unknown method {s:?}"));
                        None
                    })
                })
                .collect()
        });
        let parse_factors = |key: &str, raw: Option<String>| -> Option<Vec<u32>> {
            raw.map(|v| {
                v.split(',')
                    .filter(|s| !s.trim().is_empty())
                    .filter_map(|s| {
                        s.trim().parse::<u32>().ok().or_else(|| {
                            flag(format!("[augment] {key}: bad factor {s:?}"));
                            None
                        })
                    })
                    .collect()
            })
        };
        let factors_raw = get("augment", "factors");
        config.factors = parse_factors("factors", factors_raw);
        let allowed_raw = get("augment", "allowed_factors");
        config.allowed_factors = parse_factors("allowed_factors", allowed_raw);
        config.attempt_cap_multiplier = parse_num!("augment", "attempt_cap", usize);
        let theory_raw = get("augment", "theory_on_spam");
        config.theory_on_spam = parse_bool("augment", "theory_on_spam", theory_raw);
        config.workers = parse_num!("augment", "workers", usize);
        config.output_root = get("output", "root").map(PathBuf::from);

        // Referenced paths must exist at launch.
        for (field, path) in [
            ("corpus.path", &config.corpus_path),
            ("annotations.records", &config.annotation_records),
            ("annotations.overrides", &config.annotation_overrides),
            ("templates.path", &config.templates_path),
            ("eda.lexicon", &config.lexicon_path),
            ("eda.stopwords", &config.stopwords_path),
        ] {
            if let Some(path) = path {
                if !path.exists() {
                    flag(format!("[{field}] path does not exist: {}", path.display()));
                }
            }
        }
        if let Some(alpha) = config.alpha {
            if !(alpha > 0.0 && alpha <= 1.0) {
                flag(format!("[eda] alpha must be in (0, 1], got {alpha}"));
            }
        }
        if let Some(t) = config.temperature {
            if !(0.0..=2.0).contains(&t) {
                flag(format!("[gateway] temperature must be in [0, 2], got {t}"));
            }
        }
        if let (Some(min), Some(max)) = (config.min_chars, config.max_chars) {
            if min >= max {
                flag(format!(
                    "[validation] min_chars {min} must be below max_chars {max}"
                ));
            }
        }
        let allowed = config
            .allowed_factors
            .clone()
            .unwrap_or_else(|| DEFAULT_ALLOWED_FACTORS.to_vec());
        if let Some(factors) = &config.factors {
            for factor in factors {
                if !allowed.contains(factor) {
                    flag(format!(
                        "[augment] factors: {factor} not in allowed set {allowed:?}"
                    ));
                }
            }
        }

        let violations = violations.into_inner();
        if violations.is_empty() {
            Ok(config)
        } else {
            Err(violations)
        }
    }

    pub fn allowed_factors(&self) -> Vec<u32> {
        self.allowed_factors
            .clone()
            .unwrap_or_else(|| DEFAULT_ALLOWED_FACTORS.to_vec())
    }
}
