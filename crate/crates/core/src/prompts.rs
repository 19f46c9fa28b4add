//! Prompt registry for the supported inpainting model families.
//!
//! Texts are stored verbatim. The only placeholder is `<class>`, which
//! appears in the per-class negative prompt and is replaced by the detected
//! object label.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CLASS_PLACEHOLDER: &str = "<class>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelFamily {
    StableDiffusion,
    Sdxl,
    Flux,
    Lama,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 4] = [
        ModelFamily::StableDiffusion,
        ModelFamily::Sdxl,
        ModelFamily::Flux,
        ModelFamily::Lama,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::StableDiffusion => "stable-diffusion",
            ModelFamily::Sdxl => "sdxl",
            ModelFamily::Flux => "flux",
            ModelFamily::Lama => "lama",
        }
    }

    pub fn takes_prompts(self) -> bool {
        self != ModelFamily::Lama
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelFamily::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown model family {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptPurpose {
    RemovalPositive,
    RemovalNegative,
    PerClassNegative,
    BackgroundEnv,
    BackgroundNegative,
}

impl PromptPurpose {
    pub const ALL: [PromptPurpose; 5] = [
        PromptPurpose::RemovalPositive,
        PromptPurpose::RemovalNegative,
        PromptPurpose::PerClassNegative,
        PromptPurpose::BackgroundEnv,
        PromptPurpose::BackgroundNegative,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub model_family: ModelFamily,
    pub purpose: PromptPurpose,
    pub text: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvironmentPrompt {
    pub name: &'static str,
    pub description: &'static str,
}

const SD_REMOVAL_POSITIVE: &str = "photorealistic natural background scene, seamlessly filled area, consistent lighting and perspective, no artificial boundaries or seams.";
const SD_REMOVAL_NEGATIVE: &str = "duplicate, distorted, glitch, blur, shadow, extra limbs, deformed, low quality, bad anatomy, seams, harsh edges, inconsistent lighting, artifacts, pixelated.";
const FLUX_REMOVAL_POSITIVE: &str = "natural coherent background environment, perfectly blended inpainting, no visible artifacts or object remnants, realistic lighting.";
const SDXL_REMOVAL_POSITIVE: &str = "clean photorealistic background that flows naturally with the original scene context, seamless integration, professional quality.";
const SDXL_REMOVAL_NEGATIVE: &str = "duplicate, distorted, glitch, blur, shadow, extra limbs, deformed, low quality, bad anatomy, seams, harsh transitions, inconsistent texture, artifacts.";
const PER_CLASS_NEGATIVE: &str = "<class>, duplicate, distortion, seams, artifacts, low quality.";
const BACKGROUND_NEGATIVE: &str = "people, animals, text, logo, watermark, artifacts, distortion, low quality.";

static ENVIRONMENTS: [EnvironmentPrompt; 15] = [
    EnvironmentPrompt { name: "forest", description: "dense green forest with tall trees, natural woodland environment." },
    EnvironmentPrompt { name: "mountain", description: "majestic mountain landscape with rocky peaks and dramatic scenery." },
    EnvironmentPrompt { name: "beach", description: "tropical beach with white sand and blue ocean waves." },
    EnvironmentPrompt { name: "city", description: "modern urban cityscape with tall buildings and streets." },
    EnvironmentPrompt { name: "desert", description: "vast sandy desert with rolling dunes under clear sky." },
    EnvironmentPrompt { name: "countryside", description: "peaceful rural countryside with green fields and rolling hills." },
    EnvironmentPrompt { name: "garden", description: "beautiful botanical garden with colorful flowers and lush plants." },
    EnvironmentPrompt { name: "winter", description: "snowy winter landscape with snow-covered trees and ground." },
    EnvironmentPrompt { name: "tropical", description: "tropical paradise with palm trees and exotic vegetation." },
    EnvironmentPrompt { name: "rocky", description: "rugged rocky terrain with dramatic stone formations." },
    EnvironmentPrompt { name: "sunset", description: "beautiful golden sunset sky with warm dramatic lighting." },
    EnvironmentPrompt { name: "cloudy", description: "overcast sky with dramatic clouds and soft lighting." },
    EnvironmentPrompt { name: "office", description: "modern office interior with clean professional environment." },
    EnvironmentPrompt { name: "indoor", description: "clean indoor environment with neutral lighting." },
    EnvironmentPrompt { name: "studio", description: "professional photography studio with neutral background." },
];

/// The 15 background environments in their canonical order.
pub fn list_environments() -> &'static [EnvironmentPrompt] {
    &ENVIRONMENTS
}

pub fn environment(name: &str) -> Result<&'static EnvironmentPrompt> {
    ENVIRONMENTS
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::Prompt(format!("unknown environment {name:?}")))
}

/// Raw registry template, before placeholder substitution. Empty where no
/// text exists for the family.
pub fn template(model_family: ModelFamily, purpose: PromptPurpose) -> PromptTemplate {
    use ModelFamily::*;
    use PromptPurpose::*;
    let text = match (model_family, purpose) {
        (Lama, _) => "",
        (StableDiffusion, RemovalPositive) => SD_REMOVAL_POSITIVE,
        (StableDiffusion, RemovalNegative) => SD_REMOVAL_NEGATIVE,
        (Flux, RemovalPositive) => FLUX_REMOVAL_POSITIVE,
        (Flux, RemovalNegative) => "",
        (Sdxl, RemovalPositive) => SDXL_REMOVAL_POSITIVE,
        (Sdxl, RemovalNegative) => SDXL_REMOVAL_NEGATIVE,
        (_, PerClassNegative) => PER_CLASS_NEGATIVE,
        // environment text is looked up separately
        (_, BackgroundEnv) => "",
        (_, BackgroundNegative) => BACKGROUND_NEGATIVE,
    };
    PromptTemplate {
        model_family,
        purpose,
        text,
    }
}

/// Looks up the prompt text for `purpose`, substituting the class label or
/// resolving the environment description as required.
pub fn get_prompt(
    model_family: ModelFamily,
    purpose: PromptPurpose,
    class_label: Option<&str>,
    environment_name: Option<&str>,
) -> Result<String> {
    match purpose {
        PromptPurpose::PerClassNegative => {
            let class = class_label.ok_or_else(|| {
                Error::Prompt("per_class_negative needs a class label".into())
            })?;
            Ok(template(model_family, purpose).text.replace(CLASS_PLACEHOLDER, class))
        }
        PromptPurpose::BackgroundEnv => {
            let name = environment_name.ok_or_else(|| {
                Error::Prompt("background_env needs an environment name".into())
            })?;
            let env = environment(name)?;
            if !model_family.takes_prompts() {
                return Ok(String::new());
            }
            Ok(env.description.to_string())
        }
        _ => {
            let text = template(model_family, purpose).text;
            if text.is_empty() && model_family.takes_prompts() {
                log::info!("no {purpose:?} prompt registered for {model_family}; using empty text");
            }
            Ok(text.to_string())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptSource {
    /// Verbatim registry text.
    Registry,
    /// Text composed by the engine (replacement positive prompt).
    Synthesized,
    /// User-supplied override.
    Override,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPair {
    pub positive: String,
    pub negative: String,
    pub positive_source: PromptSource,
    pub negative_source: PromptSource,
}

impl PromptPair {
    pub fn is_registry(&self) -> bool {
        self.positive_source == PromptSource::Registry && self.negative_source == PromptSource::Registry
    }
}

/// Engine-composed replacement prompt; not part of the registry.
pub fn replacement_positive(target_class: &str) -> String {
    format!("a realistic {target_class}, consistent lighting and perspective")
}

/// User prompt overrides, keyed by purpose name. `replacement_positive` is
/// accepted in addition to the registry purposes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptOverrides(pub BTreeMap<String, String>);

const OVERRIDE_KEYS: [&str; 6] = [
    "removal_positive",
    "removal_negative",
    "per_class_negative",
    "background_env",
    "background_negative",
    "replacement_positive",
];

impl PromptOverrides {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed: PromptOverrides = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        parsed.validate()?;
        Ok(parsed)
    }

    pub fn validate(&self) -> Result<()> {
        for key in self.0.keys() {
            if !OVERRIDE_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("unknown prompt override key {key:?}")));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }
}

/// Resolves prompt pairs for one model family, applying overrides.
#[derive(Debug, Clone)]
pub struct PromptBook {
    pub family: ModelFamily,
    pub overrides: PromptOverrides,
}

impl PromptBook {
    pub fn new(family: ModelFamily) -> Self {
        Self {
            family,
            overrides: PromptOverrides::default(),
        }
    }

    pub fn with_overrides(family: ModelFamily, overrides: PromptOverrides) -> Self {
        Self { family, overrides }
    }

    fn pick(&self, key: &str, registry: String, default_source: PromptSource) -> (String, PromptSource) {
        match self.overrides.get(key) {
            Some(text) => (text.to_string(), PromptSource::Override),
            None => (registry, default_source),
        }
    }

    pub fn removal(&self) -> Result<PromptPair> {
        let (positive, positive_source) = self.pick(
            "removal_positive",
            get_prompt(self.family, PromptPurpose::RemovalPositive, None, None)?,
            PromptSource::Registry,
        );
        let (negative, negative_source) = self.pick(
            "removal_negative",
            get_prompt(self.family, PromptPurpose::RemovalNegative, None, None)?,
            PromptSource::Registry,
        );
        Ok(PromptPair {
            positive,
            negative,
            positive_source,
            negative_source,
        })
    }

    pub fn replacement(&self, target_class: &str, original_class: &str) -> Result<PromptPair> {
        let synthesized = if self.family.takes_prompts() {
            replacement_positive(target_class)
        } else {
            String::new()
        };
        let (positive, positive_source) =
            self.pick("replacement_positive", synthesized, PromptSource::Synthesized);
        let negative_registry = match self.overrides.get("per_class_negative") {
            Some(t) => t.replace(CLASS_PLACEHOLDER, original_class),
            None => get_prompt(self.family, PromptPurpose::PerClassNegative, Some(original_class), None)?,
        };
        let negative_source = if self.overrides.get("per_class_negative").is_some() {
            PromptSource::Override
        } else {
            PromptSource::Registry
        };
        let negative = if self.family.takes_prompts() {
            negative_registry
        } else {
            String::new()
        };
        Ok(PromptPair {
            positive,
            negative,
            positive_source,
            negative_source,
        })
    }

    pub fn background(&self, environment_name: &str) -> Result<PromptPair> {
        let env_text = get_prompt(self.family, PromptPurpose::BackgroundEnv, None, Some(environment_name))?;
        let (positive, positive_source) = self.pick("background_env", env_text, PromptSource::Registry);
        let (negative, negative_source) = self.pick(
            "background_negative",
            get_prompt(self.family, PromptPurpose::BackgroundNegative, None, None)?,
            PromptSource::Registry,
        );
        Ok(PromptPair {
            positive,
            negative,
            positive_source,
            negative_source,
        })
    }
}
