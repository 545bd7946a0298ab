//! Rule-based synthetic web-title / voice-title pairs.
//!
//! Each pair starts from a [`ProductRecord`]. The voice title is a
//! deterministic rendering of the record in one of these grammars
//! (container ∈ the container lexicon, unit ∈ {ounce, pound, count, liter,
//! fluid ounce}):
//!
//! ```text
//! measure   (a|an) N [to N] <unit> <container> of [brand] <name>
//! count     a <container> of N [brand] <name>        (count unit; pack, box, bag, case)
//! multipack (a|an) N pack of [brand] <name>
//! bare      (a|an) <container> of [brand] <name>     (no quantity)
//! ```
//!
//! "an" precedes numbers whose spoken form starts with a vowel sound
//! (8, 80, 11, 18, ...). The web title is a noisy rendering: title case,
//! abbreviated units, the container echoed as "a bag", and a truncated repeat
//! of the product name, e.g. `Wonderful Roasted & Salted Pistachios 8 oz. Bag
//! a bag Wonderful Roasted and salted`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TitlePair;
use crate::error::{config, Error, Result};
use crate::text::tokenize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Ounce,
    Pound,
    Count,
    Liter,
    FluidOunce,
    Pack,
}

impl Unit {
    pub fn spoken(self) -> &'static str {
        match self {
            Unit::Ounce => "ounce",
            Unit::Pound => "pound",
            Unit::Count => "count",
            Unit::Liter => "liter",
            Unit::FluidOunce => "fluid ounce",
            Unit::Pack => "pack",
        }
    }

    /// Surface forms seen in web titles; the first is canonical.
    pub fn web_forms(self) -> &'static [&'static str] {
        match self {
            Unit::Ounce => &["oz", "oz.", "Oz", "OZ"],
            Unit::Pound => &["lbs", "lb", "lbs.", "LB"],
            Unit::Count => &["ct", "count", "Count", "ct."],
            Unit::Liter => &["L", "l", "Ltr"],
            Unit::FluidOunce => &["fl oz", "fl. oz.", "FL OZ", "Fl Oz"],
            Unit::Pack => &["pk", "pack", "Pack", "PK"],
        }
    }

    /// Parse an abbreviation; only the fixed lexicon is accepted.
    pub fn parse(abbr: &str) -> Option<Unit> {
        let t = tokenize(abbr).join(" ");
        Some(match t.as_str() {
            "oz" | "ounce" | "ounces" => Unit::Ounce,
            "lbs" | "lb" | "pound" | "pounds" => Unit::Pound,
            "ct" | "count" => Unit::Count,
            "l" | "ltr" | "liter" | "liters" => Unit::Liter,
            "fl oz" | "fluid ounce" | "fluid ounces" => Unit::FluidOunce,
            "pk" | "pack" => Unit::Pack,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Amount {
    Single(String),
    Range(String, String),
}

impl Amount {
    fn first(&self) -> &str {
        match self {
            Amount::Single(a) | Amount::Range(a, _) => a,
        }
    }

    fn spoken(&self) -> String {
        match self {
            Amount::Single(a) => a.clone(),
            Amount::Range(a, b) => format!("{a} to {b}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quantity {
    pub amount: Amount,
    pub unit: Unit,
}

impl Quantity {
    /// Parse `"8 oz"`, `"1.5 - 2 lbs"`, `"0.5 L"`.
    pub fn parse(s: &str) -> Option<Quantity> {
        let toks = tokenize(s);
        let nums: Vec<&String> = toks.iter().take_while(|t| is_number(t)).collect();
        let unit = Unit::parse(&toks[nums.len()..].join(" "))?;
        let amount = match nums.as_slice() {
            [a] => Amount::Single((*a).clone()),
            [a, b] => Amount::Range((*a).clone(), (*b).clone()),
            _ => return None,
        };
        Some(Quantity { amount, unit })
    }

    pub fn web_form(&self, unit_form: &str, range_sep: &str) -> String {
        match &self.amount {
            Amount::Single(a) => format!("{a} {unit_form}"),
            Amount::Range(a, b) => format!("{a}{range_sep}{b} {unit_form}"),
        }
    }
}

fn is_number(t: &str) -> bool {
    !t.is_empty() && t.chars().all(|c| c.is_ascii_digit() || c == '.') && t.chars().any(|c| c.is_ascii_digit())
}

/// Indefinite article for a number, by the sound its spoken form starts with.
pub fn article_for_number(num: &str) -> &'static str {
    let int_part = num.split('.').next().unwrap_or("");
    if num.starts_with('8') || int_part == "11" || int_part == "18" {
        "an"
    } else {
        "a"
    }
}

fn article_for_word(word: &str) -> &'static str {
    match word.chars().next() {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

/// Containers whose count quantities are spoken "a pack of 6 ...".
const COUNT_AFTER_CONTAINER: &[&str] = &["pack", "box", "bag", "case"];

/// Sampled product; the voice title is a pure function of it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductRecord {
    pub brand: Option<String>,
    pub name: String,
    pub container: String,
    pub quantity: Option<Quantity>,
}

impl ProductRecord {
    pub fn voice(&self) -> String {
        let container = self.container.to_lowercase();
        let mut subject = String::new();
        if let Some(b) = &self.brand {
            subject.push_str(b);
            subject.push(' ');
        }
        subject.push_str(&self.name);
        let text = match &self.quantity {
            None => format!("{} {container} of {subject}", article_for_word(&container)),
            Some(q) => {
                let first = q.amount.first();
                match q.unit {
                    Unit::Pack => format!("{} {} pack of {subject}", article_for_number(first), q.amount.spoken()),
                    Unit::Count if COUNT_AFTER_CONTAINER.contains(&container.as_str()) => format!(
                        "{} {container} of {} {subject}",
                        article_for_word(&container),
                        q.amount.spoken()
                    ),
                    unit => format!(
                        "{} {} {} {container} of {subject}",
                        article_for_number(first),
                        q.amount.spoken(),
                        unit.spoken()
                    ),
                }
            }
        };
        tokenize(&text)
            .into_iter()
            .map(|t| if t == "&" { "and".to_string() } else { t })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Knobs of the generator; loadable from a plain `key = value` file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub size: usize,
    /// Share of branded products drawn from the synthetic long-tail pool.
    pub long_tail_rate: f64,
    pub long_tail_pool: usize,
    /// Brand left out of the web title (it then appears in the metadata).
    pub brand_omission_rate: f64,
    pub no_quantity_rate: f64,
    pub range_rate: f64,
    pub second_descriptor_rate: f64,
    /// Product-line word following the brand ("simply", "kids", ...).
    pub line_rate: f64,
    pub duplicate_suffix_rate: f64,
    pub container_echo_rate: f64,
    pub web_noise_rate: f64,
    pub meta_rate: f64,
    pub target_web_len: f64,
    pub target_voice_len: f64,
    /// One brand per line; replaces the built-in brand table.
    pub brands_path: Option<PathBuf>,
    /// One name per line; replaces the synthesised long-tail pool.
    pub long_tail_path: Option<PathBuf>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 13,
            size: 19_269,
            long_tail_rate: 0.25,
            long_tail_pool: 1_500,
            brand_omission_rate: 0.15,
            no_quantity_rate: 0.04,
            range_rate: 0.3,
            second_descriptor_rate: 0.75,
            line_rate: 0.6,
            duplicate_suffix_rate: 0.9,
            container_echo_rate: 0.85,
            web_noise_rate: 0.75,
            meta_rate: 0.4,
            target_web_len: 15.3352,
            target_voice_len: 11.3886,
            brands_path: None,
            long_tail_path: None,
        }
    }
}

impl GeneratorConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("long_tail_rate", self.long_tail_rate),
            ("brand_omission_rate", self.brand_omission_rate),
            ("no_quantity_rate", self.no_quantity_rate),
            ("range_rate", self.range_rate),
            ("second_descriptor_rate", self.second_descriptor_rate),
            ("line_rate", self.line_rate),
            ("duplicate_suffix_rate", self.duplicate_suffix_rate),
            ("container_echo_rate", self.container_echo_rate),
            ("web_noise_rate", self.web_noise_rate),
            ("meta_rate", self.meta_rate),
        ];
        for (name, r) in rates {
            if !(0.0..=1.0).contains(&r) {
                return Err(config(format!("{name} must lie in [0, 1], got {r}")));
            }
        }
        Ok(())
    }
}

/// One product family: name vocabulary, containers and plausible quantities.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProductKind {
    pub nouns: Vec<String>,
    pub descriptors: Vec<String>,
    pub containers: Vec<String>,
    pub units: Vec<(Unit, Vec<String>)>,
    /// Ranges are offered for weight units only.
    pub ranges: Vec<(String, String)>,
    pub unbranded_rate: f64,
}

/// Attribute tables the generator samples from.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttributeTables {
    pub brands: Vec<String>,
    pub long_tail: Vec<String>,
    pub kinds: Vec<ProductKind>,
    pub noise: Vec<String>,
}

impl AttributeTables {
    pub fn for_config(cfg: &GeneratorConfig) -> Result<Self> {
        let brands = match &cfg.brands_path {
            Some(p) => read_lines(p)?,
            None => BRANDS.iter().map(|s| s.to_string()).collect(),
        };
        let long_tail = match &cfg.long_tail_path {
            Some(p) => read_lines(p)?,
            None => synth_brands(cfg.seed, cfg.long_tail_pool),
        };
        let tables = Self {
            brands,
            long_tail,
            kinds: builtin_kinds(),
            noise: NOISE.iter().map(|s| s.to_string()).collect(),
        };
        tables.validate(cfg)?;
        Ok(tables)
    }

    fn validate(&self, cfg: &GeneratorConfig) -> Result<()> {
        if self.brands.is_empty() {
            return Err(config("brand table is empty"));
        }
        if cfg.long_tail_rate > 0.0 && self.long_tail.is_empty() {
            return Err(config("long-tail brand table is empty"));
        }
        if self.kinds.is_empty() {
            return Err(config("product table is empty"));
        }
        for (i, k) in self.kinds.iter().enumerate() {
            if k.nouns.is_empty() || k.containers.is_empty() || k.units.iter().all(|(_, a)| a.is_empty()) {
                return Err(config(format!("product kind {i} has an empty attribute table")));
            }
        }
        Ok(())
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

const SYLLABLES: &[&str] = &[
    "zor", "blax", "vel", "tri", "quon", "mar", "lu", "ke", "sha", "dri", "po", "nex", "fa", "ri",
    "gol", "tam", "bre", "ven", "ko", "li", "sa", "mu", "dex", "ral", "fin", "pel", "gri", "ta",
    "ne", "vo", "sil", "dar", "bo", "mi", "zen", "cor",
];

const TAIL_SUFFIXES: &[&str] = &["farms", "foods", "kitchen", "naturals", "co", "market"];

/// Deterministic pool of invented brand names.
fn synth_brands(seed: u64, n: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6c6f_6e67_7461_696c);
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n && attempts < n * 50 {
        attempts += 1;
        let k = if rng.random_bool(0.6) { 2 } else { 3 };
        let word: String = (0..k).map(|_| *SYLLABLES.choose(&mut rng).unwrap()).collect();
        if !seen.insert(word.clone()) {
            continue;
        }
        let name = if rng.random_bool(0.3) {
            format!("{word} {}", TAIL_SUFFIXES.choose(&mut rng).unwrap())
        } else {
            word
        };
        out.push(name);
    }
    out
}

/// splitmix64, used to derive independent per-pair seeds.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn title_case(s: &str) -> String {
    s.split(' ')
        .map(|w| {
            let mut c = w.chars();
            match c.next() {
                Some(f) => f.to_uppercase().chain(c).collect(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Sample a product record.
pub fn sample_record(rng: &mut impl Rng, cfg: &GeneratorConfig, tables: &AttributeTables) -> ProductRecord {
    let kind = tables.kinds.choose(rng).expect("validated non-empty");
    let brand = if rng.random_bool(kind.unbranded_rate) {
        None
    } else if !tables.long_tail.is_empty() && rng.random_bool(cfg.long_tail_rate) {
        tables.long_tail.choose(rng).cloned()
    } else {
        tables.brands.choose(rng).cloned()
    };
    let mut name_parts = Vec::new();
    if brand.is_some() && rng.random_bool(cfg.line_rate) {
        name_parts.push(LINES.choose(rng).unwrap().to_string());
    }
    if !kind.descriptors.is_empty() {
        let first = kind.descriptors.choose(rng).unwrap().clone();
        if rng.random_bool(cfg.second_descriptor_rate) {
            let second = kind.descriptors.choose(rng).unwrap().clone();
            if second != first {
                name_parts.push(second);
            }
        }
        name_parts.push(first);
    }
    name_parts.push(kind.nouns.choose(rng).unwrap().clone());
    let name = name_parts.join(" ");
    let container = kind.containers.choose(rng).unwrap().clone();
    let quantity = if rng.random_bool(cfg.no_quantity_rate) {
        None
    } else {
        let options: Vec<&(Unit, Vec<String>)> = kind.units.iter().filter(|(_, a)| !a.is_empty()).collect();
        let (unit, amounts) = *options.choose(rng).unwrap();
        let amount = if *unit == Unit::Pound && !kind.ranges.is_empty() && rng.random_bool(cfg.range_rate) {
            let (a, b) = kind.ranges.choose(rng).unwrap().clone();
            Amount::Range(a, b)
        } else {
            Amount::Single(amounts.choose(rng).unwrap().clone())
        };
        Some(Quantity { amount, unit: *unit })
    };
    ProductRecord {
        brand,
        name,
        container,
        quantity,
    }
}

/// Render the noisy web title and metadata for a record.
pub fn render_web(
    rng: &mut impl Rng,
    cfg: &GeneratorConfig,
    tables: &AttributeTables,
    record: &ProductRecord,
) -> (String, BTreeMap<String, String>) {
    let mut meta = BTreeMap::new();
    let mut parts: Vec<String> = Vec::new();
    let brand_in_web = record.brand.is_some() && !rng.random_bool(cfg.brand_omission_rate);
    let lower_case_title = rng.random_bool(0.1);
    let case = |s: &str| if lower_case_title { s.to_string() } else { title_case(s) };
    if let Some(b) = &record.brand {
        if brand_in_web {
            parts.push(case(b));
        }
        if !brand_in_web || rng.random_bool(cfg.meta_rate) {
            meta.insert("brand".to_string(), title_case(b));
        }
    }
    parts.push(case(&record.name));
    let mut container_in_web = false;
    if let Some(q) = &record.quantity {
        let form = *q.unit.web_forms().choose(rng).unwrap();
        let sep = *[" - ", "-", " - "].choose(rng).unwrap();
        let qty = q.web_form(form, sep);
        if rng.random_bool(0.5) {
            let last = parts.pop().unwrap();
            parts.push(format!("{last},"));
        }
        parts.push(qty);
        if rng.random_bool(0.5) {
            parts.push(title_case(&record.container));
            container_in_web = true;
        }
        if rng.random_bool(cfg.meta_rate * 0.75) {
            meta.insert("size".to_string(), q.web_form(q.unit.web_forms()[0], " - "));
        }
    }
    if rng.random_bool(cfg.container_echo_rate) {
        parts.push(format!("a {}", record.container));
        container_in_web = true;
    }
    if rng.random_bool(cfg.duplicate_suffix_rate) {
        let mut words: Vec<String> = Vec::new();
        if brand_in_web {
            words.extend(record.brand.as_ref().unwrap().split(' ').map(String::from));
        }
        words.extend(record.name.split(' ').map(|w| if w == "&" { "and".to_string() } else { w.to_string() }));
        let keep = rng.random_range(1..=words.len());
        let suffix = words[..keep].join(" ");
        parts.push(if rng.random_bool(0.5) { case(&suffix) } else { suffix });
    }
    if rng.random_bool(cfg.web_noise_rate) && !tables.noise.is_empty() {
        parts.push(tables.noise.choose(rng).unwrap().clone());
    }
    if !container_in_web || rng.random_bool(cfg.meta_rate) {
        meta.insert("container".to_string(), record.container.clone());
    }
    (parts.join(" "), meta)
}

/// One pair from its own seed.
pub fn generate_pair(rng_seed: u64, cfg: &GeneratorConfig, tables: &AttributeTables) -> Result<TitlePair> {
    tables.validate(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let record = sample_record(&mut rng, cfg, tables);
    let (web, meta) = render_web(&mut rng, cfg, tables, &record);
    Ok(TitlePair {
        web,
        voice: record.voice(),
        meta,
    })
}

/// `cfg.size` pairs; pair `i` is drawn from `mix_seed(cfg.seed, i)`.
pub fn generate_corpus(cfg: &GeneratorConfig) -> Result<Vec<TitlePair>> {
    cfg.validate()?;
    let tables = AttributeTables::for_config(cfg)?;
    (0..cfg.size as u64)
        .map(|i| generate_pair(mix_seed(cfg.seed, i), cfg, &tables))
        .collect()
}

const NOISE: &[&str] = &[
    "premium", "new", "value size", "classic", "everyday", "deluxe", "select", "fresh", "best seller",
    "(Pack of 1)", "Net Wt", "- Walmart.com", "Item #", "new & improved", "limited edition",
];

const LINES: &[&str] = &["simply", "kids", "signature", "gold", "lite", "plus", "naturals", "homestyle"];

const BRANDS: &[&str] = &[
    "lucky charms", "great value", "hostess donettes", "el monterey", "wonderful", "paas",
    "kellogg's", "frito lay", "coca cola", "yoo hoo", "perdue harvestland", "tyson",
    "nature valley", "quaker", "barilla", "land o lakes", "chobani", "oreo", "doritos", "pepsi",
    "tide", "bounty", "dove", "pantene", "jergens", "folgers", "starbucks", "kraft", "oscar mayer",
    "hormel", "del monte", "green giant", "dole", "sunkist", "minute maid", "tropicana",
    "horizon organic", "silk", "blue diamond", "planters", "ritz", "cheez it", "pringles", "lay's",
    "marketside", "freshness guaranteed", "sam's choice", "equate", "7up", "cheerios",
    "general mills", "pillsbury", "nabisco", "keebler", "heinz", "campbell's", "progresso",
    "ben & jerry's", "haagen dazs", "smucker's", "jif", "skippy", "welch's", "ocean spray",
    "gatorade", "charmin", "cottonelle", "clorox", "lysol", "colgate", "crest",
];

fn s(v: &[&str]) -> Vec<String> {
    v.iter().map(|x| x.to_string()).collect()
}

fn kind(
    nouns: &[&str],
    descriptors: &[&str],
    containers: &[&str],
    units: &[(Unit, &[&str])],
    ranges: &[(&str, &str)],
    unbranded_rate: f64,
) -> ProductKind {
    ProductKind {
        nouns: s(nouns),
        descriptors: s(descriptors),
        containers: s(containers),
        units: units.iter().map(|(u, a)| (*u, s(a))).collect(),
        ranges: ranges.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
        unbranded_rate,
    }
}

fn builtin_kinds() -> Vec<ProductKind> {
    use Unit::*;
    vec![
        kind(
            &["cereal", "breakfast cereal", "granola", "oatmeal", "corn flakes", "crispy rice cereal"],
            &["gluten free", "honey nut", "frosted", "whole grain", "cinnamon", "original", "family size"],
            &["box", "bag"],
            &[(Ounce, &["10.8", "12", "14", "18", "20.5", "24", "8.9", "11.5"])],
            &[],
            0.0,
        ),
        kind(
            &["pistachios", "almonds", "cashews", "mixed nuts", "peanuts", "walnuts"],
            &["roasted & salted", "unsalted", "honey roasted", "lightly salted", "raw", "smoked"],
            &["bag", "jar", "can"],
            &[(Ounce, &["8", "16", "6", "10.5", "24", "32", "11"])],
            &[],
            0.0,
        ),
        kind(
            &["white onions", "yellow onions", "russet potatoes", "red potatoes", "carrots", "sweet potatoes", "lemons", "gala apples", "navel oranges"],
            &["organic", "fresh", "whole"],
            &["bag", "pack"],
            &[(Pound, &["2", "3", "5", "10", "1", "8"])],
            &[],
            0.6,
        ),
        kind(
            &["eggs", "brown eggs", "cage free eggs"],
            &["large grade aa", "extra large", "large", "jumbo"],
            &["carton"],
            &[(Count, &["6", "12", "18", "24"])],
            &[],
            0.1,
        ),
        kind(
            &["beef & cheese burritos", "chicken pot pie", "pepperoni pizza", "breakfast sandwiches", "bean & cheese burritos", "chicken taquitos"],
            &["frozen", "family size", "spicy"],
            &["bag", "box", "pack"],
            &[(Count, &["8", "10", "4", "12", "20"]), (Ounce, &["32", "14.5", "18", "26"])],
            &[],
            0.0,
        ),
        kind(
            &["potato chips", "tortilla chips", "pretzels", "popcorn", "cheese crackers", "pita chips"],
            &["sea salt", "original", "barbecue", "sour cream & onion", "nacho cheese", "lightly salted"],
            &["bag", "box", "can"],
            &[(Ounce, &["7.75", "9.25", "10", "13", "2.5", "1", "5.5", "8"])],
            &[],
            0.0,
        ),
        kind(
            &["cola", "lemon lime soda", "root beer", "ginger ale", "sparkling water", "orange soda"],
            &["diet", "zero sugar", "caffeine free", "cherry"],
            &["bottle", "can"],
            &[(Liter, &["2", "1", "0.5", "1.25"]), (FluidOunce, &["12", "20", "16.9", "7.5"]), (Pack, &["6", "8", "12", "24"])],
            &[],
            0.0,
        ),
        kind(
            &["orange juice", "apple juice", "chocolate milk", "whole milk", "almond milk", "lemonade"],
            &["no pulp", "organic", "reduced fat", "unsweetened", "original"],
            &["bottle", "carton", "jug"],
            &[(FluidOunce, &["52", "59", "64", "128", "12", "8"]), (Liter, &["1", "1.75", "2"])],
            &[],
            0.0,
        ),
        kind(
            &["ground coffee", "coffee pods", "whole bean coffee", "instant coffee"],
            &["medium roast", "dark roast", "french roast", "breakfast blend", "decaf"],
            &["bag", "can", "box", "jar"],
            &[(Ounce, &["12", "24.2", "30.5", "8", "11"]), (Count, &["12", "18", "24", "48"])],
            &[],
            0.0,
        ),
        kind(
            &["greek yogurt", "yogurt cups", "cottage cheese", "sour cream", "cream cheese", "shredded cheddar cheese"],
            &["plain", "vanilla", "strawberry", "nonfat", "whole milk"],
            &["tub", "cup", "pack", "bag"],
            &[(Ounce, &["5.3", "16", "32", "8", "24"]), (Count, &["4", "6", "12"])],
            &[],
            0.0,
        ),
        kind(
            &["mini donuts", "chocolate chip cookies", "sandwich bread", "dinner rolls", "blueberry muffins", "cinnamon rolls"],
            &["frosted", "powdered", "soft baked", "whole wheat", "glazed"],
            &["pack", "bag", "box", "loaf"],
            &[(Count, &["6", "8", "12", "24"]), (Ounce, &["3", "13", "20", "16", "24"])],
            &[],
            0.0,
        ),
        kind(
            &["chicken breast", "pork butt steaks", "ground beef", "pork cube steaks", "chicken thighs", "turkey breast"],
            &["boneless skinless", "free range", "lean", "family pack"],
            &["tray", "pack"],
            &[(Pound, &["1", "2", "3", "1.5", "2.25", "4"])],
            &[("1.5", "2"), ("3.1", "5.1"), ("0.45", "1.35"), ("2", "3"), ("1", "1.5"), ("8", "10")],
            0.3,
        ),
        kind(
            &["spaghetti", "penne pasta", "elbow macaroni", "long grain rice", "jasmine rice", "egg noodles"],
            &["whole wheat", "enriched", "organic", "thin"],
            &["box", "bag"],
            &[(Ounce, &["16", "12", "32"]), (Pound, &["2", "5", "10", "18"])],
            &[],
            0.0,
        ),
        kind(
            &["paper towels", "bath tissue", "laundry detergent", "dish soap", "trash bags", "napkins"],
            &["ultra strong", "lavender", "original scent", "free & clear", "tall kitchen", "select a size"],
            &["pack", "bottle", "box", "roll"],
            &[(Count, &["6", "12", "24", "40", "100"]), (FluidOunce, &["92", "46", "24", "64"]), (Pack, &["6", "8", "12", "18"])],
            &[],
            0.0,
        ),
        kind(
            &["moisturizer", "shampoo", "body wash", "toothpaste", "hand soap", "conditioner"],
            &["daily", "natural glow", "medium to tan", "fresh mint", "moisturizing", "sensitive"],
            &["bottle", "tube", "pump", "pack"],
            &[(FluidOunce, &["7.5", "12", "16", "22", "4"]), (Ounce, &["4.8", "6", "3.5"])],
            &[],
            0.0,
        ),
        kind(
            &["egg decorating kit", "chocolate bar", "gummy bears", "candy canes", "peanut butter cups", "jelly beans"],
            &["magical color cup", "milk", "sour", "mini", "king size"],
            &["pack", "bag", "box"],
            &[(Count, &["6", "12", "24", "36"]), (Ounce, &["1.55", "5", "10", "18", "3.4"])],
            &[],
            0.0,
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn voice_matches_reference_renderings() {
        let r = ProductRecord {
            brand: Some("Wonderful Roasted & Salted Pistachios".into()),
            name: String::new(),
            container: "bag".into(),
            quantity: Quantity::parse("8 oz"),
        };
        assert_eq!(r.voice(), "an 8 ounce bag of wonderful roasted and salted pistachios");

        let r = ProductRecord {
            brand: None,
            name: "white onions".into(),
            container: "bag".into(),
            quantity: Quantity::parse("2 lbs"),
        };
        assert_eq!(r.voice(), "a 2 pound bag of white onions");

        let r = ProductRecord {
            brand: Some("hostess donettes".into()),
            name: "frosted mini donuts".into(),
            container: "pack".into(),
            quantity: Quantity::parse("6 ct"),
        };
        assert_eq!(r.voice(), "a pack of 6 hostess donettes frosted mini donuts");

        let r = ProductRecord {
            brand: None,
            name: "pork butt steaks".into(),
            container: "tray".into(),
            quantity: Quantity::parse("3.1 - 5.1 lbs"),
        };
        assert_eq!(r.voice(), "a 3.1 to 5.1 pound tray of pork butt steaks");

        let r = ProductRecord {
            brand: Some("diet 7up".into()),
            name: "soda".into(),
            container: "can".into(),
            quantity: Quantity::parse("6 pk"),
        };
        assert_eq!(r.voice(), "a 6 pack of diet 7up soda");
    }

    #[test]
    fn articles_follow_spoken_onset() {
        for (n, a) in [("8", "an"), ("80", "an"), ("11", "an"), ("18.5", "an"), ("1", "a"), ("12", "a"), ("0.5", "a"), ("110", "a")] {
            assert_eq!(article_for_number(n), a, "{n}");
        }
    }

    #[test]
    fn unit_lexicon() {
        assert_eq!(Unit::parse("oz"), Some(Unit::Ounce));
        assert_eq!(Unit::parse("lbs"), Some(Unit::Pound));
        assert_eq!(Unit::parse("lb"), Some(Unit::Pound));
        assert_eq!(Unit::parse("ct"), Some(Unit::Count));
        assert_eq!(Unit::parse("L"), Some(Unit::Liter));
        assert_eq!(Unit::parse("fl oz"), Some(Unit::FluidOunce));
        assert_eq!(Unit::parse("pk"), Some(Unit::Pack));
        assert_eq!(Unit::parse("kg"), None);
    }

    #[test]
    fn empty_tables_are_config_errors() {
        let cfg = GeneratorConfig::default();
        let mut t = AttributeTables::for_config(&cfg).unwrap();
        t.brands.clear();
        assert!(matches!(generate_pair(1, &cfg, &t), Err(Error::Config(_))));
        let mut t = AttributeTables::for_config(&cfg).unwrap();
        t.kinds[0].nouns.clear();
        assert!(matches!(generate_pair(1, &cfg, &t), Err(Error::Config(_))));
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = GeneratorConfig {
            size: 50,
            ..GeneratorConfig::default()
        };
        assert_eq!(generate_corpus(&cfg).unwrap(), generate_corpus(&cfg).unwrap());
    }
}
