//! Synthetic corpora for tests: a grammar-driven headline synthesizer with
//! year-to-year vocabulary drift, and the marker-token fixture.

use chrono::{Duration, NaiveDate};
use headcheck_core::{Headline, Label, LabeledExample};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Topic {
    subjects: &'static [&'static str],
    verbs: &'static [&'static str],
    objects: &'static [&'static str],
    passives: &'static [&'static str],
    events: &'static [&'static str],
}

const CRIME: Topic = Topic {
    subjects: &["police", "detectives", "man", "woman", "teenager", "driver", "court", "magistrate", "jury", "officers", "prisoner", "gang"],
    verbs: &["charged over", "arrested after", "jailed for", "investigate", "appeal against", "plead guilty to", "seek witnesses to", "cleared of"],
    objects: &["fatal stabbing", "armed robbery", "hit and run", "drug raid", "home invasion", "car theft", "assault charges", "bail breach", "fraud case", "arson attack"],
    passives: &["charged", "arrested", "jailed", "fined", "questioned", "released", "sentenced"],
    events: &["police chase", "pub brawl", "service station hold up", "bikie shooting", "court hearing"],
};

const POLITICS: Topic = Topic {
    subjects: &["government", "minister", "premier", "opposition", "council", "senate", "mayor", "greens", "labor", "coalition", "treasurer", "mps"],
    verbs: &["backs", "rejects", "announces", "defends", "unveils", "scraps", "pushes for", "calls for", "delays", "reviews"],
    objects: &["budget cuts", "tax changes", "council merger", "funding boost", "new laws", "planning reforms", "pension changes", "inquiry", "spending plan", "policy shift"],
    passives: &["criticised", "questioned", "approved", "rejected", "delayed", "announced"],
    events: &["budget estimates", "party room meeting", "leadership spill", "cabinet reshuffle", "question time"],
};

const SPORT: Topic = Topic {
    subjects: &["swans", "crows", "storm", "wallabies", "socceroos", "tigers", "eagles", "magpies", "coach", "captain", "striker", "selectors"],
    verbs: &["beat", "thrash", "edge", "lose to", "draw with", "sign", "sack", "recall", "overcome", "stun"],
    objects: &["premiers", "rivals", "title hopes", "finals spot", "grand final", "new contract", "injury setback", "winning streak", "home crowd", "world champions"],
    passives: &["suspended", "dropped", "injured", "recalled", "fined", "named"],
    events: &["grand final", "test match", "derby", "preseason cup", "world cup qualifier"],
};

const WEATHER: Topic = Topic {
    subjects: &["storms", "floodwaters", "bushfire", "heatwave", "cyclone", "hail", "winds", "rain", "residents", "firefighters", "ses", "farmers"],
    verbs: &["lash", "threaten", "cut off", "flood", "damage", "sweep through", "battle", "brace for", "clean up after", "evacuate"],
    objects: &["coastal towns", "homes", "roads", "crops", "power lines", "the south coast", "farmland", "caravan park", "highway", "school"],
    passives: &["evacuated", "flooded", "damaged", "isolated", "destroyed", "closed"],
    events: &["wild weather", "flash flooding", "severe storm", "bushfire emergency", "record heat"],
};

const ECONOMY: Topic = Topic {
    subjects: &["miners", "banks", "retailers", "dollar", "shares", "investors", "workers", "union", "company", "exporters", "farmers", "airline"],
    verbs: &["cut", "slash", "boost", "post", "warn of", "fear", "welcome", "fight", "shed", "report"],
    objects: &["jobs", "profits", "interest rates", "wages", "record loss", "house prices", "iron ore prices", "job losses", "mine closure", "trade deal"],
    passives: &["cut", "axed", "lifted", "hit", "downgraded", "sold"],
    events: &["rate decision", "mining slump", "profit season", "market rout", "wage talks"],
};

const HEALTH: Topic = Topic {
    subjects: &["doctors", "nurses", "hospital", "patients", "health minister", "researchers", "paramedics", "scientists", "clinic", "parents", "surgeons", "midwives"],
    verbs: &["warn of", "call for", "trial", "welcome", "test", "study", "fight for", "treat", "discover", "push for"],
    objects: &["new vaccine", "flu outbreak", "waiting lists", "cancer drug", "mental health funding", "ice epidemic", "bed shortage", "measles case", "obesity rates", "rural doctors"],
    passives: &["treated", "diagnosed", "admitted", "discharged", "tested", "vaccinated"],
    events: &["flu season", "hospital overhaul", "health review", "drug trial", "outbreak"],
};

const TOPICS: [&Topic; 6] = [&CRIME, &POLITICS, &SPORT, &WEATHER, &ECONOMY, &HEALTH];

const PLACES: &[&str] = &[
    "sydney", "melbourne", "brisbane", "perth", "adelaide", "hobart", "darwin", "canberra", "newcastle", "geelong",
    "townsville", "cairns", "wollongong", "ballarat", "bendigo", "toowoomba", "launceston", "mackay", "rockhampton",
    "bunbury", "mildura", "dubbo", "tamworth", "orange", "albury", "wagga", "broome", "alice springs", "port augusta",
    "gladstone", "bundaberg", "lismore", "shepparton", "warrnambool", "karratha", "kalgoorlie", "devonport", "katherine",
];

const NUMBERS: &[&str] = &["two", "three", "four", "five", "six", "ten", "dozens of", "hundreds of", "20", "50"];
const PLURALS: &[&str] = &["residents", "workers", "students", "families", "drivers", "patients", "tourists", "farmers", "homes", "jobs"];
const ISSUES: &[&str] = &["safety concerns", "funding row", "cost blowout", "community backlash", "legal challenge", "delays", "pay dispute", "public outcry"];

/// Names and issues that rise and fall with the year.
fn era_terms(year: i32) -> (&'static [&'static str], &'static [&'static str]) {
    if year <= 2015 {
        (
            &["abbott", "turnbull", "shorten", "baird", "andrews", "newman", "palmer", "hockey"],
            &["asylum seekers", "shark nets", "ice crisis", "budget repair", "same sex marriage", "submarine deal"],
        )
    } else {
        (
            &["turnbull", "shorten", "trump", "clinton", "hanson", "berejiklian", "morrison", "xenophon"],
            &["election campaign", "brexit vote", "power prices", "citizenship saga", "marriage survey", "energy crisis"],
        )
    }
}

/// Rank-weighted choice: the first entries of a list are the most frequent.
fn zipf<'a, R: Rng>(rng: &mut R, items: &'a [&'a str]) -> &'a str {
    let weights: f64 = (1..=items.len()).map(|r| 1.0 / r as f64).sum();
    let mut u = rng.random::<f64>() * weights;
    for (i, item) in items.iter().enumerate() {
        u -= 1.0 / (i + 1) as f64;
        if u <= 0.0 {
            return item;
        }
    }
    items[items.len() - 1]
}

/// One synthetic headline for `year`.
pub fn synth_headline<R: Rng>(rng: &mut R, year: i32) -> String {
    let topic = TOPICS[rng.random_range(0..TOPICS.len())];
    let (names, issues) = era_terms(year);
    let subj = zipf(rng, topic.subjects);
    let verb = zipf(rng, topic.verbs);
    let obj = zipf(rng, topic.objects);
    let place = zipf(rng, PLACES);
    match rng.random_range(0..10) {
        0 | 1 => format!("{subj} {verb} {obj}"),
        2 | 3 => format!("{place} {subj} {verb} {obj}"),
        4 => format!("{subj} {verb} {obj} in {place}"),
        5 => format!("{} {} {} after {}", NUMBERS.choose(rng).unwrap(), PLURALS.choose(rng).unwrap(), zipf(rng, topic.passives), zipf(rng, topic.events)),
        6 => format!("{} says {subj} {verb} {obj}", names.choose(rng).unwrap()),
        7 => format!("{obj} {} amid {}", zipf(rng, topic.passives), ISSUES.choose(rng).unwrap()),
        8 => format!("{subj} {verb} {obj} over {}", issues.choose(rng).unwrap()),
        _ => format!("{} {verb} {obj} at {place} {}", names.choose(rng).unwrap(), zipf(rng, topic.events)),
    }
}

/// `count` distinct real headlines per requested year, dated across the year.
pub fn synth_corpus(seed: u64, years: &[(i32, usize)]) -> Vec<Headline> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for &(year, count) in years {
        let start = NaiveDate::from_ymd_opt(year, 1, 1).expect("valid year");
        let mut made = 0;
        let mut attempts = 0;
        while made < count && attempts < count * 50 {
            attempts += 1;
            let text = synth_headline(&mut rng, year);
            if !seen.insert(text.clone()) {
                continue;
            }
            let date = start + Duration::days(rng.random_range(0..365));
            out.push(Headline::real(&text, date).expect("synthetic text is non-empty"));
            made += 1;
        }
    }
    out
}

pub const MARKER: &str = "zqxmarker";

const FILLER: &[&str] = &[
    "council", "plan", "local", "new", "report", "school", "road", "water", "park", "police",
    "farm", "house", "market", "coast", "city", "bridge", "fire", "rain", "team", "cup",
    "court", "health", "power", "rail", "port", "art", "music", "film", "study", "trial",
    "budget", "vote", "rally", "crowd", "storm", "river", "beach", "mine", "bank", "shop",
    "union", "deal", "price", "rate", "fund", "grant", "award", "show", "race", "game",
];

/// Labeled fixture where every generated text carries [`MARKER`] and no real
/// text does. Everything else is uniform filler, so the marker is the only signal.
pub fn separable_fixture(per_class: usize, seed: u64) -> Vec<LabeledExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_class * 2);
    for i in 0..per_class * 2 {
        let label = if i % 2 == 0 { Label::Real } else { Label::Generated };
        let len = rng.random_range(3..=9);
        let mut words: Vec<&str> = (0..len).map(|_| *FILLER.choose(&mut rng).unwrap()).collect();
        if label == Label::Generated {
            let at = rng.random_range(0..words.len());
            words[at] = MARKER;
        }
        out.push(LabeledExample { text: words.join(" "), label, year: 2015 });
    }
    out
}

/// Splits a fixture into train/dev with the last `dev_fraction` held out.
pub fn split_fixture(examples: Vec<LabeledExample>, dev_fraction: f64) -> (Vec<LabeledExample>, Vec<LabeledExample>) {
    let dev = (examples.len() as f64 * dev_fraction).round() as usize;
    let mut train = examples;
    let dev_part = train.split_off(train.len() - dev);
    (train, dev_part)
}
