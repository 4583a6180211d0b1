//! Seeded generator for a routing benchmark: an API catalog, canned API
//! responses, and query datasets with pre-fetched HTML pages.
//!
//! Static queries have the answer in one of their pages. Dynamic queries ask
//! for a live value of a named entity; their pages only talk about the entity
//! in general terms, and the value is available solely from the API whose
//! schema matches the question. Each dynamic query uses a different API, so
//! one canned body per schema is enough.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::clean;
use crate::corpus::{DatasetRecord, Domain, Dynamism, Query, RawDocument, DEFAULT_K_MAX};
use crate::mock_server::Fixtures;
use crate::rerank::{self, RerankError, Scorer};
use crate::schema_index::{ApiParameter, ApiSchema, ParamType};
use crate::sufficiency::{LabeledExample, Verdict};
use crate::text;

pub const DEFAULT_SEED: u64 = 20240607;
pub const DEFAULT_BASE_URL: &str = "http://127.0.0.1:8765";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Company,
    City,
    Team,
    Airport,
    Harbor,
}

impl Kind {
    fn noun(self) -> &'static str {
        match self {
            Kind::Company => "company",
            Kind::City => "city",
            Kind::Team => "team",
            Kind::Airport => "airport",
            Kind::Harbor => "harbor",
        }
    }

    fn suffixes(self) -> &'static [&'static str] {
        match self {
            Kind::Company => &["Holdings", "Systems", "Industries", "Labs", "Works"],
            Kind::City => &["Falls", "Crossing", "Heights", "Springs", "Vale"],
            Kind::Team => &["Rovers", "United", "Athletic", "Wanderers", "Albion"],
            Kind::Airport => &["Airfield", "Aerodrome"],
            Kind::Harbor => &["Harbour", "Quay", "Haven"],
        }
    }

    fn domain(self) -> Domain {
        match self {
            Kind::Company => Domain::Finance,
            Kind::Team => Domain::Sports,
            _ => Domain::Open,
        }
    }
}

struct Metric {
    words: &'static str,
    kind: Kind,
    unit: &'static str,
    range: (f64, f64),
    decimals: usize,
    /// Also takes a required integer `season`.
    seasonal: bool,
}

const fn metric(words: &'static str, kind: Kind, unit: &'static str, range: (f64, f64), decimals: usize) -> Metric {
    Metric { words, kind, unit, range, decimals, seasonal: false }
}

/// One schema per metric. No content word is shared between two metrics.
const METRICS: [Metric; 30] = [
    metric("share price", Kind::Company, "dollars", (5.0, 900.0), 2),
    metric("market capitalization", Kind::Company, "billion dollars", (1.0, 400.0), 1),
    metric("trading volume", Kind::Company, "shares", (10_000.0, 9_000_000.0), 0),
    metric("dividend yield", Kind::Company, "percent", (0.1, 9.0), 2),
    metric("credit rating", Kind::Company, "points", (300.0, 850.0), 0),
    metric("order backlog", Kind::Company, "million dollars", (1.0, 800.0), 1),
    metric("employee headcount", Kind::Company, "people", (40.0, 90_000.0), 0),
    metric("air quality", Kind::City, "on the index scale", (5.0, 300.0), 0),
    metric("wind speed", Kind::City, "km/h", (0.0, 120.0), 1),
    metric("rainfall total", Kind::City, "millimeters", (0.0, 250.0), 1),
    metric("humidity level", Kind::City, "percent", (10.0, 100.0), 0),
    metric("pollen count", Kind::City, "grains per cubic meter", (0.0, 1500.0), 0),
    metric("ultraviolet index", Kind::City, "units", (0.0, 11.0), 1),
    metric("traffic congestion", Kind::City, "percent", (0.0, 95.0), 0),
    metric("electricity demand", Kind::City, "megawatts", (50.0, 9000.0), 0),
    metric("reservoir capacity", Kind::City, "percent", (5.0, 100.0), 1),
    metric("parking occupancy", Kind::City, "percent", (0.0, 100.0), 0),
    metric("league position", Kind::Team, "place", (1.0, 24.0), 0),
    metric("goal difference", Kind::Team, "goals", (-40.0, 60.0), 0),
    Metric { words: "points tally", kind: Kind::Team, unit: "points", range: (0.0, 100.0), decimals: 0, seasonal: true },
    Metric { words: "ticket sales", kind: Kind::Team, unit: "tickets", range: (1000.0, 900_000.0), decimals: 0, seasonal: true },
    metric("attendance figure", Kind::Team, "spectators", (500.0, 80_000.0), 0),
    metric("departure delays", Kind::Airport, "minutes on average", (0.0, 180.0), 0),
    metric("runway visibility", Kind::Airport, "meters", (50.0, 10_000.0), 0),
    metric("passenger throughput", Kind::Airport, "passengers per hour", (100.0, 12_000.0), 0),
    metric("security queue", Kind::Airport, "minutes", (0.0, 90.0), 0),
    metric("gate utilization", Kind::Airport, "percent", (0.0, 100.0), 0),
    metric("tide height", Kind::Harbor, "meters", (0.0, 12.0), 2),
    metric("cargo tonnage", Kind::Harbor, "tonnes", (100.0, 500_000.0), 0),
    metric("vessel arrivals", Kind::Harbor, "ships", (0.0, 400.0), 0),
];

struct Distractor {
    name: &'static str,
    description: &'static str,
    param: &'static str,
    body: &'static str,
}

const DISTRACTORS: [Distractor; 8] = [
    Distractor { name: "translate_text", description: "Translates a piece of writing into another language.", param: "text", body: "Translation service ready." },
    Distractor { name: "convert_units", description: "Converts a quantity between measurement systems.", param: "quantity", body: "Conversion complete." },
    Distractor { name: "get_holiday_calendar", description: "Lists public holidays for a country.", param: "country", body: "No holidays listed for the requested country." },
    Distractor { name: "search_recipes", description: "Finds cooking recipes by ingredient.", param: "ingredient", body: "Found twelve recipes." },
    Distractor { name: "book_meeting_room", description: "Reserves a meeting room in an office building.", param: "room", body: "Room reserved." },
    Distractor { name: "get_time_zone", description: "Looks up the clock offset for a location.", param: "location", body: "Offset is two hours." },
    Distractor { name: "lookup_postal_code", description: "Finds the postal code of a street address.", param: "address", body: "Postal code not found." },
    Distractor { name: "send_notification", description: "Sends a message to a phone.", param: "recipient", body: "Message queued." },
];

#[derive(Debug, Clone, Copy)]
enum StaticTemplate {
    FoundedYear,
    Founder,
    River,
    Elevation,
    Stadium,
    Opened,
}

const STATIC_TEMPLATES: [StaticTemplate; 6] = [
    StaticTemplate::FoundedYear,
    StaticTemplate::Founder,
    StaticTemplate::River,
    StaticTemplate::Elevation,
    StaticTemplate::Stadium,
    StaticTemplate::Opened,
];

impl StaticTemplate {
    fn kind(self) -> Kind {
        match self {
            StaticTemplate::FoundedYear | StaticTemplate::Founder => Kind::Company,
            StaticTemplate::River | StaticTemplate::Elevation => Kind::City,
            StaticTemplate::Stadium => Kind::Team,
            StaticTemplate::Opened => Kind::Airport,
        }
    }
}

/// Sentences that mention an entity without answering anything about it.
const ENTITY_FILLER: [&str; 8] = [
    "{E} has a long history in the region.",
    "Local newspapers have written about {E} many times.",
    "Critics and supporters alike have strong opinions about {E}.",
    "A short documentary about {E} aired last spring.",
    "{E} appears in several regional travel guides.",
    "Photographs of {E} are collected in the town archive.",
    "Research &amp; development work near {E} attracted some attention.",
    "Students sometimes write essays about {E}.",
];

const OFF_TOPIC: [&str; 8] = [
    "Gardening guides recommend planting bulbs in autumn. Mulch keeps roots warm through winter.",
    "A good sourdough starter needs flour and patience. Bakers feed it daily.",
    "Chess openings reward careful study. Many beginners learn simple rules first.",
    "Hiking boots should be broken in before long trails. Blisters are the usual complaint.",
    "Watercolor painting relies on transparent layers. Artists often stretch paper before starting.",
    "Public libraries lend books and films. Many also offer digital loans.",
    "Knitting patterns vary from simple scarves to elaborate sweaters.",
    "Birdwatchers keep notebooks of sightings. Binoculars help with distant species.",
];

const SYLLABLES: [&str; 24] = [
    "bar", "cor", "del", "fen", "gal", "hol", "jen", "kes", "lor", "mar", "nev", "ost", "pel", "quin",
    "ros", "sil", "tam", "ul", "ven", "wex", "yar", "zan", "bri", "dun",
];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("at most {max} dynamic queries are supported, {requested} requested")]
    TooManyDynamic { requested: usize, max: usize },
}

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub seed: u64,
    pub static_queries: usize,
    pub dynamic_queries: usize,
    pub base_url: String,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self { seed: DEFAULT_SEED, static_queries: 30, dynamic_queries: 30, base_url: DEFAULT_BASE_URL.into() }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticBenchmark {
    pub catalog: Vec<ApiSchema>,
    pub fixtures: Fixtures,
    pub dataset: Vec<DatasetRecord>,
    /// Same shape as `dataset` with different entities, for tuning.
    pub dev_dataset: Vec<DatasetRecord>,
}

pub fn metric_schema_name(words: &str) -> String {
    format!("get_{}", words.replace(' ', "_"))
}

/// Points every schema endpoint at `base_url`, keeping its path.
pub fn rebase_catalog(catalog: &[ApiSchema], base_url: &str) -> Vec<ApiSchema> {
    catalog
        .iter()
        .map(|s| {
            let path = crate::mock_server::endpoint_path(&s.endpoint).unwrap_or_else(|| format!("/v1/{}", s.name));
            ApiSchema { endpoint: format!("{}{path}", base_url.trim_end_matches('/')), ..s.clone() }
        })
        .collect()
}

fn build_catalog(base_url: &str) -> Vec<ApiSchema> {
    let base = base_url.trim_end_matches('/');
    let param = |name: &str, ty, required, description: String| ApiParameter {
        name: name.into(),
        param_type: ty,
        required,
        description,
    };
    let mut catalog: Vec<ApiSchema> = METRICS
        .iter()
        .map(|m| {
            let name = metric_schema_name(m.words);
            let noun = m.kind.noun();
            let mut parameters = vec![param(noun, ParamType::String, true, format!("Name of the {noun}."))];
            if m.seasonal {
                parameters.push(param("season", ParamType::Integer, true, "Season starting year.".into()));
            }
            if m.kind == Kind::Company {
                parameters.push(param("currency", ParamType::String, false, "ISO currency code.".into()));
            }
            ApiSchema {
                endpoint: format!("{base}/v1/{name}"),
                description: format!("Returns the current {} of a {noun}.", m.words),
                name,
                parameters,
            }
        })
        .collect();
    catalog.extend(DISTRACTORS.iter().map(|d| ApiSchema {
        name: d.name.into(),
        description: d.description.into(),
        parameters: vec![param(d.param, ParamType::String, true, String::new())],
        endpoint: format!("{base}/v1/{}", d.name),
    }));
    catalog
}

struct Names {
    rng: ChaCha8Rng,
    used: HashSet<String>,
    reserved: HashSet<String>,
}

impl Names {
    fn new(seed: u64) -> Self {
        let reserved = METRICS.iter().flat_map(|m| m.words.split(' ')).map(str::to_string).collect();
        Self { rng: ChaCha8Rng::seed_from_u64(seed), used: HashSet::new(), reserved }
    }

    fn word(&mut self) -> String {
        loop {
            let n = self.rng.gen_range(2..=3);
            let w: String = (0..n).map(|_| *SYLLABLES.choose(&mut self.rng).expect("non-empty")).collect();
            if !text::is_stop_word(&w) && !self.reserved.contains(&w) && self.used.insert(w.clone()) {
                let mut chars = w.chars();
                let first = chars.next().expect("non-empty").to_ascii_uppercase();
                return std::iter::once(first).chain(chars).collect();
            }
        }
    }

    fn entity(&mut self, kind: Kind) -> String {
        let head = self.word();
        let suffix = kind.suffixes().choose(&mut self.rng).expect("non-empty");
        format!("{head} {suffix}")
    }

    fn number(&mut self, (lo, hi): (f64, f64), decimals: usize) -> String {
        let v: f64 = self.rng.gen_range(lo..hi);
        format!("{v:.decimals$}")
    }
}

fn boilerplate_page(rng: &mut ChaCha8Rng, title: &str, paragraphs: &[String]) -> String {
    let body: String = paragraphs.iter().map(|p| format!("<p>{p}</p>\n")).collect();
    match rng.gen_range(0..3) {
        0 => format!(
            "<!DOCTYPE html><html><head><title>{title}</title><style>body {{ color: #333 }} .nav-marker {{ }}</style>\
             <script>var trackingMarker = 'track-pixel';</script></head><body>\
             <header><p>Site header banner</p></header><nav><ul><li>Home</li><li>About</li></ul><p>nav-marker menu</p></nav>\
             <main><article>\n{body}</article></main>\
             <aside><p>Related links sidebar</p></aside><footer><p>Copyright &copy; footer-marker</p></footer></body></html>"
        ),
        1 => format!(
            "<html><body><nav>Home | News | nav-marker</nav><div class=\"content\"><h1>{title}</h1>\n{body}</div>\
             <noscript><p>Enable scripts</p></noscript><script>document.write('script-marker')</script>\
             <footer>footer-marker &amp; legal</footer></body></html>"
        ),
        // unclosed tags and stray markup
        _ => format!(
            "<html><head><script type=\"text/javascript\">if (a < b) {{ trackingMarker(); }}</script>\
             <body><header>header-marker</header><div><h2>{title}</h2>\n{}<footer><p>footer-marker",
            paragraphs.iter().map(|p| format!("<p>{p}\n")).collect::<String>()
        ),
    }
}

fn filler(rng: &mut ChaCha8Rng, entity: &str, count: usize) -> String {
    let mut picks: Vec<&str> = ENTITY_FILLER.to_vec();
    picks.shuffle(rng);
    picks[..count].iter().map(|s| s.replace("{E}", &format!("<b>{entity}</b>"))).collect::<Vec<_>>().join(" ")
}

fn off_topic_page(rng: &mut ChaCha8Rng) -> String {
    let text = OFF_TOPIC.choose(rng).expect("non-empty").to_string();
    boilerplate_page(rng, "Hobbies", &[text])
}

fn entity_page(rng: &mut ChaCha8Rng, entity: &str) -> String {
    let paragraphs = vec![filler(rng, entity, 2), filler(rng, entity, 1)];
    boilerplate_page(rng, entity, &paragraphs)
}

/// Builds `k` pages where the ones produced by `relevant` come first in
/// generation but land at random ranks.
fn pages(rng: &mut ChaCha8Rng, slug: &str, relevant: Vec<String>) -> Vec<RawDocument> {
    let mut htmls = relevant;
    while htmls.len() < DEFAULT_K_MAX {
        htmls.push(off_topic_page(rng));
    }
    htmls.shuffle(rng);
    htmls
        .into_iter()
        .enumerate()
        .map(|(i, html)| RawDocument { url: format!("https://example.org/{slug}/{}", i + 1), rank: i as u32 + 1, html })
        .collect()
}

fn static_record(names: &mut Names, id: String, template: StaticTemplate) -> DatasetRecord {
    let kind = template.kind();
    let e = names.entity(kind);
    let (question, answer, gold) = match template {
        StaticTemplate::FoundedYear => {
            let y = names.number((1850.0, 2010.0), 0);
            (format!("In which year was {e} founded?"), format!("{e} was founded in the year {y}."), y)
        }
        StaticTemplate::Founder => {
            let p = format!("{} {}", names.word(), names.word());
            (format!("Who founded {e}?"), format!("{e} was founded by {p}."), p)
        }
        StaticTemplate::River => {
            let r = format!("{} River", names.word());
            (format!("Which river runs through {e}?"), format!("The river that runs through {e} is the {r}."), r)
        }
        StaticTemplate::Elevation => {
            let n = format!("{} meters", names.number((20.0, 2500.0), 0));
            (
                format!("What is the elevation of {e} above sea level?"),
                format!("{e} sits at an elevation of {n} above sea level."),
                n,
            )
        }
        StaticTemplate::Stadium => {
            let s = format!("{} Stadium", names.word());
            (format!("In which stadium does {e} play home matches?"), format!("{e} play their home matches at {s} stadium."), s)
        }
        StaticTemplate::Opened => {
            let y = names.number((1920.0, 2015.0), 0);
            (
                format!("In which year did {e} open to passengers?"),
                format!("{e} was open to passengers from the year {y} onward."),
                y,
            )
        }
    };
    let rng = &mut names.rng;
    let answer_page = {
        let before = filler(rng, &e, 1);
        let paragraphs = vec![before, answer, filler(rng, &e, 1)];
        boilerplate_page(rng, &e, &paragraphs)
    };
    let relevant = vec![answer_page, entity_page(rng, &e)];
    let documents = pages(rng, &id, relevant);
    let query = Query {
        id,
        text: question,
        gold_answer: Some(gold),
        domain: Some(kind.domain()),
        dynamism: Some(Dynamism::Static),
        question_type: Some("simple".into()),
    };
    DatasetRecord { query, documents }
}

/// Returns the record and the API body that answers it.
fn dynamic_record(names: &mut Names, id: String, metric: &Metric) -> (DatasetRecord, String) {
    let e = names.entity(metric.kind);
    let value = names.number(metric.range, metric.decimals);
    let condition = if metric.seasonal {
        format!(" for season {}", names.rng.gen_range(2019..=2026))
    } else {
        String::new()
    };
    let question = format!("What is the current {} of {e}{condition}?", metric.words);
    let body = format!("The current {} of {e}{condition} is {value} {}.", metric.words, metric.unit);
    let rng = &mut names.rng;
    let relevant_count = rng.gen_range(2..=3);
    let relevant = (0..relevant_count).map(|_| entity_page(rng, &e)).collect();
    let documents = pages(rng, &id, relevant);
    let dynamism = if rng.gen_bool(0.5) { Dynamism::RealTime } else { Dynamism::FastChanging };
    let query = Query {
        id,
        text: question,
        gold_answer: Some(value),
        domain: Some(metric.kind.domain()),
        dynamism: Some(dynamism),
        question_type: Some(if metric.seasonal { "simple_w_condition" } else { "simple" }.into()),
    };
    (DatasetRecord { query, documents }, body)
}

fn split(names: &mut Names, prefix: &str, opts: &SynthOptions, order: &[usize]) -> (Vec<DatasetRecord>, Vec<(usize, String)>) {
    let mut records = Vec::new();
    let mut bodies = Vec::new();
    for i in 0..opts.static_queries {
        let template = STATIC_TEMPLATES[i % STATIC_TEMPLATES.len()];
        records.push(static_record(names, format!("{prefix}s{:03}", i + 1), template));
    }
    for (i, &m) in order.iter().take(opts.dynamic_queries).enumerate() {
        let (record, body) = dynamic_record(names, format!("{prefix}d{:03}", i + 1), &METRICS[m]);
        records.push(record);
        bodies.push((m, body));
    }
    records.shuffle(&mut names.rng);
    (records, bodies)
}

pub fn generate(opts: &SynthOptions) -> Result<SyntheticBenchmark, SynthError> {
    if opts.dynamic_queries > METRICS.len() {
        return Err(SynthError::TooManyDynamic { requested: opts.dynamic_queries, max: METRICS.len() });
    }
    let catalog = build_catalog(&opts.base_url);
    let mut names = Names::new(opts.seed);
    let mut order: Vec<usize> = (0..METRICS.len()).collect();
    order.shuffle(&mut names.rng);

    let (dataset, bodies) = split(&mut names, "", opts, &order);
    let (dev_dataset, _) = split(&mut names, "dev-", opts, &order);

    let mut fixtures = Fixtures::new();
    for (m, metric) in METRICS.iter().enumerate() {
        let body = bodies
            .iter()
            .find(|(i, _)| *i == m)
            .map(|(_, b)| b.clone())
            .unwrap_or_else(|| format!("No current {} data available.", metric.words));
        fixtures.insert(metric_schema_name(metric.words), serde_json::Value::String(body));
    }
    for d in &DISTRACTORS {
        fixtures.insert(d.name.into(), serde_json::json!({"message": d.body}));
    }
    Ok(SyntheticBenchmark { catalog, fixtures, dataset, dev_dataset })
}

/// Labels each record by its dynamism (static means the pages suffice) and
/// pairs it with the best rerank score of its cleaned pages.
pub fn label_dev_set(
    records: &[DatasetRecord],
    scorer: &dyn Scorer,
    top_n: usize,
    k_max: usize,
) -> Result<Vec<LabeledExample>, RerankError> {
    records
        .iter()
        .map(|r| {
            let docs = &r.documents[..r.documents.len().min(k_max)];
            let ranked = rerank::rerank(&r.query, &clean::clean_all(docs), scorer, top_n)?;
            let top_score = ranked.first().map_or(0.0, |p| p.score.value());
            let label = if r.query.dynamism == Some(Dynamism::Static) { Verdict::Sufficient } else { Verdict::Insufficient };
            Ok(LabeledExample { top_score, label })
        })
        .collect()
}
