//! Flat `key = value` generation config.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::corrnet::{ShapeKind, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Setting {
    FullFull,
    PartialFull,
    PartialPartial,
}

impl Setting {
    pub fn source_partial(self) -> bool {
        self != Setting::FullFull
    }

    pub fn target_partial(self) -> bool {
        self == Setting::PartialPartial
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combination {
    Human,
    FourLegged,
    HumanCentaur,
    FourLeggedCentaur,
    All,
}

impl Combination {
    fn groups(self) -> &'static [&'static [ShapeKind]] {
        use ShapeKind::*;
        match self {
            Combination::Human => &[&[Human]],
            Combination::FourLegged => &[&[FourLegged]],
            Combination::HumanCentaur => &[&[Human, Centaur]],
            Combination::FourLeggedCentaur => &[&[FourLegged, Centaur]],
            Combination::All => &[&[Human, Centaur], &[FourLegged, Centaur]],
        }
    }

    pub fn admits(self, kind: ShapeKind) -> bool {
        self.groups().iter().any(|g| g.contains(&kind))
    }

    /// Whether shapes of these kinds may form a pair.
    pub fn pairs(self, a: ShapeKind, b: ShapeKind) -> bool {
        self.groups().iter().any(|g| g.contains(&a) && g.contains(&b))
    }
}

/// How far apart the two cameras of a partial pair may be.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CamPosRegime {
    Low,
    Medium,
    High,
}

impl CamPosRegime {
    pub fn alpha(self) -> f64 {
        use std::f64::consts::PI;
        match self {
            CamPosRegime::Low => PI / 8.0,
            CamPosRegime::Medium => PI / 4.0,
            CamPosRegime::High => PI / 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitSelection {
    All,
    Only(Split),
}

impl SplitSelection {
    pub fn includes(self, s: Split) -> bool {
        match self {
            SplitSelection::All => true,
            SplitSelection::Only(x) => x == s,
        }
    }
}

macro_rules! named_enum {
    ($ty:ty { $($name:literal => $val:expr),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($name => Ok($val),)+
                    _ => Err(format!("expected one of: {}", [$($name),+].join(", "))),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                $(if *self == $val { return f.write_str($name); })+
                unreachable!()
            }
        }
    };
}

named_enum!(Setting {
    "full_full" => Setting::FullFull,
    "partial_full" => Setting::PartialFull,
    "partial_partial" => Setting::PartialPartial,
});

named_enum!(Combination {
    "human" => Combination::Human,
    "four-legged" => Combination::FourLegged,
    "human_centaur" => Combination::HumanCentaur,
    "four-legged_centaur" => Combination::FourLeggedCentaur,
    "all" => Combination::All,
});

named_enum!(CamPosRegime {
    "low" => CamPosRegime::Low,
    "medium" => CamPosRegime::Medium,
    "high" => CamPosRegime::High,
});

named_enum!(SplitSelection {
    "all" => SplitSelection::All,
    "train" => SplitSelection::Only(Split::Train),
    "val" => SplitSelection::Only(Split::Val),
    "test" => SplitSelection::Only(Split::Test),
});

/// Every accepted key; `datasets.<NAME>` entries are listed as the prefix.
pub const KEYS: &[&str] = &[
    "data_dir",
    "datasets.<NAME>",
    "combinations",
    "setting",
    "remesh",
    "cam_pos_regime",
    "store_vis",
    "show_output",
    "original_settings",
    "use_precompute_remeshing",
    "update_precomputed_remeshed",
    "use_precomputed_partial_raycasting",
    "update_precomputed_raycasting",
    "one_axis_rotation",
    "n_cam_pos",
    "min_overlap",
    "max_overlap",
    "global_seed",
    "resolution",
    "count_range",
    "split",
    "manifest",
    "output_dir",
    "cache_dir",
    "normalize_area",
    "strict_overlap",
    "max_instances",
    "workers",
];

/// Manifest value that selects the manifest shipped with the crate.
pub const BUILTIN_MANIFEST: &str = "builtin";

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub data_dir: PathBuf,
    /// Missing datasets are enabled.
    pub datasets: BTreeMap<String, bool>,
    pub combinations: Combination,
    pub setting: Setting,
    pub remesh: bool,
    pub cam_pos_regime: CamPosRegime,
    pub store_vis: bool,
    /// Accepted for compatibility; there is no viewer.
    pub show_output: bool,
    pub original_settings: bool,
    pub use_precompute_remeshing: bool,
    pub update_precomputed_remeshed: bool,
    pub use_precomputed_partial_raycasting: bool,
    pub update_precomputed_raycasting: bool,
    pub one_axis_rotation: bool,
    pub n_cam_pos: usize,
    pub min_overlap: f64,
    pub max_overlap: f64,
    pub global_seed: u64,
    pub resolution: usize,
    pub count_range: (usize, usize),
    pub split: SplitSelection,
    /// `None` means `<data_dir>/manifest.txt`.
    pub manifest: Option<String>,
    pub output_dir: PathBuf,
    /// Caching is off without a directory.
    pub cache_dir: Option<PathBuf>,
    pub normalize_area: bool,
    pub strict_overlap: bool,
    /// 0 means no limit.
    pub max_instances: usize,
    /// 0 means one per core.
    pub workers: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            datasets: BTreeMap::new(),
            combinations: Combination::All,
            setting: Setting::FullFull,
            remesh: true,
            cam_pos_regime: CamPosRegime::Medium,
            store_vis: false,
            show_output: false,
            original_settings: false,
            use_precompute_remeshing: true,
            update_precomputed_remeshed: false,
            use_precomputed_partial_raycasting: true,
            update_precomputed_raycasting: false,
            one_axis_rotation: true,
            n_cam_pos: 10,
            min_overlap: 0.1,
            max_overlap: 0.9,
            global_seed: 0,
            resolution: crate::partiality::DEFAULT_RESOLUTION,
            count_range: (9000, 10000),
            split: SplitSelection::All,
            manifest: None,
            output_dir: PathBuf::from("out"),
            cache_dir: None,
            normalize_area: false,
            strict_overlap: false,
            max_instances: 0,
            workers: 0,
        }
    }
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err("expected true or false".into()),
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| Error::Config {
        key: key.to_string(),
        message: format!("bad value `{value}`: {e}"),
    })
}

fn parse_flag(key: &str, value: &str) -> Result<bool> {
    parse_bool(value).map_err(|m| Error::Config {
        key: key.to_string(),
        message: format!("bad value `{value}`: {m}"),
    })
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl GenerationConfig {
    pub fn valid_keys() -> Vec<String> {
        KEYS.iter().map(|k| k.to_string()).collect()
    }

    pub fn is_known_key(key: &str) -> bool {
        KEYS.contains(&key) || key.strip_prefix("datasets.").is_some_and(|n| !n.is_empty())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "data_dir" => self.data_dir = PathBuf::from(v),
            "combinations" => self.combinations = parse(key, v)?,
            "setting" => self.setting = parse(key, v)?,
            "remesh" => self.remesh = parse_flag(key, v)?,
            "cam_pos_regime" => self.cam_pos_regime = parse(key, v)?,
            "store_vis" => self.store_vis = parse_flag(key, v)?,
            "show_output" => self.show_output = parse_flag(key, v)?,
            "original_settings" => self.original_settings = parse_flag(key, v)?,
            "use_precompute_remeshing" => self.use_precompute_remeshing = parse_flag(key, v)?,
            "update_precomputed_remeshed" => self.update_precomputed_remeshed = parse_flag(key, v)?,
            "use_precomputed_partial_raycasting" => self.use_precomputed_partial_raycasting = parse_flag(key, v)?,
            "update_precomputed_raycasting" => self.update_precomputed_raycasting = parse_flag(key, v)?,
            "one_axis_rotation" => self.one_axis_rotation = parse_flag(key, v)?,
            "n_cam_pos" => self.n_cam_pos = parse(key, v)?,
            "min_overlap" => self.min_overlap = parse(key, v)?,
            "max_overlap" => self.max_overlap = parse(key, v)?,
            "global_seed" => self.global_seed = parse(key, v)?,
            "resolution" => self.resolution = parse(key, v)?,
            "count_range" => {
                let (lo, hi) = v.split_once(',').ok_or_else(|| Error::Config {
                    key: key.into(),
                    message: format!("expected `lo,hi`, found `{v}`"),
                })?;
                self.count_range = (parse(key, lo.trim())?, parse(key, hi.trim())?);
            }
            "split" => self.split = parse(key, v)?,
            "manifest" => self.manifest = (!v.is_empty()).then(|| v.to_string()),
            "output_dir" => self.output_dir = PathBuf::from(v),
            "cache_dir" => self.cache_dir = opt_path(v),
            "normalize_area" => self.normalize_area = parse_flag(key, v)?,
            "strict_overlap" => self.strict_overlap = parse_flag(key, v)?,
            "max_instances" => self.max_instances = parse(key, v)?,
            "workers" => self.workers = parse(key, v)?,
            _ => match key.strip_prefix("datasets.") {
                Some(name) if !name.is_empty() => {
                    self.datasets.insert(name.to_string(), parse_flag(key, v)?);
                }
                _ => {
                    return Err(Error::UnknownKey {
                        key: key.to_string(),
                        valid: Self::valid_keys(),
                    })
                }
            },
        }
        Ok(())
    }

    /// Applies a config file on top of `self`. `path` only labels errors.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(path, format!("line {}", i + 1), "expected key = value"))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text, path)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }

    pub fn dataset_enabled(&self, name: &str) -> bool {
        self.datasets.get(name).copied().unwrap_or(true)
    }

    pub fn partial_params(&self) -> crate::partiality::PartialParams {
        crate::partiality::PartialParams {
            alpha: self.cam_pos_regime.alpha(),
            min_overlap: self.min_overlap,
            max_overlap: self.max_overlap,
            max_iterations: self.n_cam_pos,
            resolution: self.resolution,
            strict: self.strict_overlap,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| {
            Err(Error::Config {
                key: key.to_string(),
                message,
            })
        };
        if !(0.0 <= self.min_overlap && self.min_overlap < self.max_overlap && self.max_overlap <= 1.0) {
            return bad(
                "min_overlap",
                format!("need 0 <= min_overlap < max_overlap <= 1, got {} and {}", self.min_overlap, self.max_overlap),
            );
        }
        if self.n_cam_pos == 0 {
            return bad("n_cam_pos", "must be at least 1".into());
        }
        if self.resolution == 0 {
            return bad("resolution", "must be positive".into());
        }
        let (lo, hi) = self.count_range;
        if lo < 4 || lo > hi {
            return bad("count_range", format!("need 4 <= lo <= hi, got {lo},{hi}"));
        }
        if self.original_settings {
            self.check_original()?;
        }
        Ok(())
    }

    /// The benchmark's fixed parameters; every deviation is named.
    fn check_original(&self) -> Result<()> {
        let d = Self::default();
        let checks: [(&str, bool, String); 10] = [
            ("remesh", self.remesh == d.remesh, self.remesh.to_string()),
            ("one_axis_rotation", self.one_axis_rotation == d.one_axis_rotation, self.one_axis_rotation.to_string()),
            ("cam_pos_regime", self.cam_pos_regime == d.cam_pos_regime, self.cam_pos_regime.to_string()),
            ("n_cam_pos", self.n_cam_pos == d.n_cam_pos, self.n_cam_pos.to_string()),
            ("min_overlap", self.min_overlap == d.min_overlap, self.min_overlap.to_string()),
            ("max_overlap", self.max_overlap == d.max_overlap, self.max_overlap.to_string()),
            ("count_range", self.count_range == d.count_range, format!("{},{}", self.count_range.0, self.count_range.1)),
            ("combinations", self.combinations == d.combinations, self.combinations.to_string()),
            ("normalize_area", self.normalize_area == d.normalize_area, self.normalize_area.to_string()),
            ("strict_overlap", self.strict_overlap == d.strict_overlap, self.strict_overlap.to_string()),
        ];
        for (key, ok, value) in checks {
            if !ok {
                return Err(Error::Config {
                    key: key.to_string(),
                    message: format!("original_settings requires the default value, found {value}"),
                });
            }
        }
        if let Some((name, _)) = self.datasets.iter().find(|(_, on)| !**on) {
            return Err(Error::Config {
                key: format!("datasets.{name}"),
                message: "original_settings requires every dataset".into(),
            });
        }
        Ok(())
    }

    /// Every key with its resolved value; parsing it back yields `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let p = |p: &Path| p.display().to_string();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("data_dir", p(&self.data_dir));
        for (name, on) in &self.datasets {
            put(&format!("datasets.{name}"), on.to_string());
        }
        put("combinations", self.combinations.to_string());
        put("setting", self.setting.to_string());
        put("remesh", self.remesh.to_string());
        put("cam_pos_regime", self.cam_pos_regime.to_string());
        put("store_vis", self.store_vis.to_string());
        put("show_output", self.show_output.to_string());
        put("original_settings", self.original_settings.to_string());
        put("use_precompute_remeshing", self.use_precompute_remeshing.to_string());
        put("update_precomputed_remeshed", self.update_precomputed_remeshed.to_string());
        put("use_precomputed_partial_raycasting", self.use_precomputed_partial_raycasting.to_string());
        put("update_precomputed_raycasting", self.update_precomputed_raycasting.to_string());
        put("one_axis_rotation", self.one_axis_rotation.to_string());
        put("n_cam_pos", self.n_cam_pos.to_string());
        put("min_overlap", self.min_overlap.to_string());
        put("max_overlap", self.max_overlap.to_string());
        put("global_seed", self.global_seed.to_string());
        put("resolution", self.resolution.to_string());
        put("count_range", format!("{},{}", self.count_range.0, self.count_range.1));
        put("split", self.split.to_string());
        put("manifest", self.manifest.clone().unwrap_or_default());
        put("output_dir", p(&self.output_dir));
        put("cache_dir", self.cache_dir.as_deref().map(p).unwrap_or_default());
        put("normalize_area", self.normalize_area.to_string());
        put("strict_overlap", self.strict_overlap.to_string());
        put("max_instances", self.max_instances.to_string());
        put("workers", self.workers.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let mut c = GenerationConfig::default();
        c.set("datasets.FAUST", "false").unwrap();
        c.set("setting", "partial_partial").unwrap();
        c.set("count_range", "100, 200").unwrap();
        c.set("cache_dir", "/tmp/c").unwrap();
        c.set("min_overlap", "0.25").unwrap();
        let back = GenerationConfig::from_text(&c.to_text(), Path::new("echo")).unwrap();
        assert_eq!(back, c);
        assert_eq!(
            GenerationConfig::from_text(&GenerationConfig::default().to_text(), Path::new("d")).unwrap(),
            GenerationConfig::default()
        );
    }

    #[test]
    fn rejects_unknown_and_bad_values() {
        let mut c = GenerationConfig::default();
        match c.set("foo", "1") {
            Err(Error::UnknownKey { key, valid }) => {
                assert_eq!(key, "foo");
                assert!(valid.iter().any(|k| k == "n_cam_pos"));
            }
            other => panic!("{other:?}"),
        }
        assert!(c.set("remesh", "maybe").is_err());
        assert!(c.set("setting", "full").is_err());
        assert!(c.set("count_range", "5").is_err());
        assert!(GenerationConfig::from_text("min_overlap = 0.95", Path::new("x")).is_err());
        assert!(GenerationConfig::from_text("novalue", Path::new("x")).is_err());
        assert!(GenerationConfig::is_known_key("datasets.X"));
        assert!(!GenerationConfig::is_known_key("datasets."));
    }

    #[test]
    fn original_settings_names_offending_key() {
        assert!(GenerationConfig::from_text("original_settings = true", Path::new("x")).is_ok());
        for (line, key) in [
            ("n_cam_pos = 5", "n_cam_pos"),
            ("cam_pos_regime = high", "cam_pos_regime"),
            ("remesh = false", "remesh"),
            ("datasets.SMAL = false", "datasets.SMAL"),
            ("normalize_area = true", "normalize_area"),
        ] {
            let text = format!("original_settings = true\n{line}\n");
            match GenerationConfig::from_text(&text, Path::new("x")) {
                Err(Error::Config { key: k, .. }) => assert_eq!(k, key),
                other => panic!("{line}: {other:?}"),
            }
        }
    }

    #[test]
    fn combination_rules() {
        use ShapeKind::*;
        assert!(Combination::All.pairs(Human, Centaur));
        assert!(Combination::All.pairs(FourLegged, Centaur));
        assert!(!Combination::All.pairs(Human, FourLegged));
        assert!(!Combination::Human.admits(Centaur));
        assert!(Combination::HumanCentaur.pairs(Centaur, Centaur));
        assert_eq!(CamPosRegime::Medium.alpha(), std::f64::consts::FRAC_PI_4);
    }
}
