//! Seeded synthetic corpora for demos, tests and benchmarks.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::{Label, RawPost, UserHistory};
use crate::edeq::{AnswerSheet, Questionnaire, ITEM_COUNT};
use crate::model::Example;
use crate::rng;

const NEUTRAL: &[&str] = &[
    "I finally finished the {thing} I started last {time}.",
    "Does anyone know a good place to buy a {thing} around here?",
    "My {person} and I watched a movie about {topic} yesterday.",
    "Work was long today, but the {thing} made it better.",
    "Thinking about learning more about {topic} this {time}.",
    "The weather ruined our plans for the {thing} again.",
    "Just cooked dinner for my {person}, it turned out fine.",
    "Can someone explain why {topic} is so popular lately?",
    "Took the dog for a walk and found a new {thing} shop.",
    "I have been reading a book on {topic} and it is great.",
];

const GAMBLING: &[&str] = &[
    "Lost another {amount} dollars at the casino last {time}, I need to win it back.",
    "Put {amount} on the game tonight, the odds look too good to skip.",
    "I keep chasing losses on the slots and I can't stop betting.",
    "Borrowed {amount} from my {person} to cover a betting debt.",
    "Stayed up all night on the poker site again, down {amount}.",
    "One more bet and I will finally be even, I promise myself.",
    "Hid my gambling from my {person} again, the debt keeps growing.",
    "The sportsbook app sends me bonuses every {time} and I always deposit.",
];

const EATING: &[&str] = &[
    "I skipped {meal} again today because I want to lose weight.",
    "I feel fat and I hate how my stomach looks in the mirror.",
    "Counting every calorie and following strict rules about what I eat.",
    "I keep thinking about food and calories, I can't concentrate at work.",
    "I ate in secret last night and felt so guilty about my weight.",
    "I am terrified of gaining weight, I weigh myself every {time}.",
    "Went eight hours without eating anything to keep my stomach flat.",
    "My shape decides whether I feel good about myself as a person.",
    "I avoid eating in front of other people, I hate them watching me eat.",
    "Cut out every food I like so I can change my shape.",
];

const THINGS: &[&str] = &["puzzle", "bike", "garden", "painting", "lamp", "guitar", "concert", "project"];
const TIMES: &[&str] = &["week", "month", "weekend", "night", "summer", "day"];
const PEOPLE: &[&str] = &["brother", "sister", "partner", "friend", "mom", "dad", "roommate"];
const TOPICS: &[&str] = &["space", "history", "cooking", "chess", "gardening", "music", "birds"];
const MEALS: &[&str] = &["breakfast", "lunch", "dinner"];
const LINKS: &[&str] = &[
    "(https://example.com/thread/{n})",
    "[link](http://www.example.org/post?id={n})",
    "https://news.example.net/story/{n}",
    "see www.example.com/page{n}",
];

fn fill(r: &mut ChaCha8Rng, template: &str) -> String {
    let pick = |r: &mut ChaCha8Rng, xs: &[&str]| xs.choose(r).copied().unwrap_or_default().to_string();
    let mut out = template.to_string();
    for (key, pool) in [
        ("{thing}", THINGS),
        ("{time}", TIMES),
        ("{person}", PEOPLE),
        ("{topic}", TOPICS),
        ("{meal}", MEALS),
    ] {
        while out.contains(key) {
            let v = pick(r, pool);
            out = out.replacen(key, &v, 1);
        }
    }
    while out.contains("{amount}") {
        let v = (r.gen_range(2..50) * 10).to_string();
        out = out.replacen("{amount}", &v, 1);
    }
    while out.contains("{n}") {
        let v = r.gen_range(100..9999).to_string();
        out = out.replacen("{n}", &v, 1);
    }
    out
}

fn sentence(r: &mut ChaCha8Rng, pool: &[&str]) -> String {
    let t = pool.choose(r).expect("non-empty pool");
    fill(r, t)
}

fn start_date(r: &mut ChaCha8Rng) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2022, 1, 1, 0, 0, 0).unwrap() + Duration::hours(r.gen_range(0..24 * 90))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Task1Spec {
    pub subjects: usize,
    pub prevalence: f64,
    pub min_posts: usize,
    pub max_posts: usize,
    /// Chance that a positive subject's post carries a gambling sentence.
    pub signal: f64,
    pub url_rate: f64,
}

impl Default for Task1Spec {
    fn default() -> Self {
        Task1Spec {
            subjects: 40,
            prevalence: 0.3,
            min_posts: 6,
            max_posts: 30,
            signal: 0.6,
            url_rate: 0.2,
        }
    }
}

/// Labelled users posting everyday text; positives mix in gambling talk.
pub fn task1_corpus(spec: &Task1Spec, seed: u64) -> Vec<UserHistory> {
    let mut r = rng::rng(seed, 0x7a51);
    let n = spec.subjects.max(2);
    let positives = ((n as f64 * spec.prevalence).round() as usize).clamp(1, n - 1);
    let mut labels: Vec<bool> = (0..n).map(|i| i < positives).collect();
    labels.shuffle(&mut r);
    labels
        .iter()
        .enumerate()
        .map(|(i, &positive)| {
            let count = r.gen_range(spec.min_posts..=spec.max_posts.max(spec.min_posts));
            let mut date = start_date(&mut r);
            let posts = (0..count)
                .map(|_| {
                    date += Duration::minutes(r.gen_range(30..72 * 60));
                    let mut text = if positive && r.gen_bool(spec.signal) {
                        sentence(&mut r, GAMBLING)
                    } else {
                        sentence(&mut r, NEUTRAL)
                    };
                    if r.gen_bool(spec.url_rate) {
                        text.push(' ');
                        text.push_str(&sentence(&mut r, LINKS));
                    }
                    RawPost {
                        date,
                        title: String::new(),
                        text,
                    }
                })
                .collect();
            let label = if positive { Label::Positive } else { Label::Negative };
            UserHistory::new(format!("subject_{i:03}"), label, posts)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Task3Spec {
    pub users: usize,
    pub days: i64,
    pub posts_per_day: f64,
}

impl Default for Task3Spec {
    fn default() -> Self {
        Task3Spec {
            users: 12,
            days: 40,
            posts_per_day: 0.8,
        }
    }
}

/// Users whose eating-related talk grows with a hidden severity, and gold
/// answers drawn around that severity.
pub fn task3_corpus(
    spec: &Task3Spec,
    seed: u64,
) -> (Vec<UserHistory>, BTreeMap<String, AnswerSheet>) {
    let mut r = rng::rng(seed, 0xede9);
    let q = Questionnaire::bundled();
    let mut histories = Vec::new();
    let mut gold = BTreeMap::new();
    for i in 0..spec.users {
        let severity: f64 = r.gen();
        let id = format!("user_{i:02}");
        let start = start_date(&mut r);
        let mut posts = Vec::new();
        for day in 0..spec.days {
            if !r.gen_bool(spec.posts_per_day.clamp(0.0, 1.0)) {
                continue;
            }
            let date = start + Duration::days(day) + Duration::minutes(r.gen_range(0..24 * 60));
            let text = if r.gen_bool(severity) {
                sentence(&mut r, EATING)
            } else {
                sentence(&mut r, NEUTRAL)
            };
            posts.push(RawPost {
                date,
                title: String::new(),
                text,
            });
        }
        let answers = (0..ITEM_COUNT)
            .map(|_| {
                let noise: f64 = StandardNormal.sample(&mut r);
                (6.0 * severity + noise).round().clamp(0.0, 6.0) as u8
            })
            .collect();
        debug_assert_eq!(q.items.len(), ITEM_COUNT);
        histories.push(UserHistory::new(id.clone(), Label::Unknown, posts));
        gold.insert(id, AnswerSheet { answers });
    }
    (histories, gold)
}

/// Alternating labels; positives have every coordinate shifted by `shift`
/// standard deviations.
pub fn shifted_gaussians(n: usize, dim: usize, shift: f64, seed: u64) -> Vec<Example> {
    let mut r = rng::rng(seed, 0x9a55);
    (0..n)
        .map(|i| {
            let label = (i % 2) as u8;
            let offset = if label == 1 { shift } else { 0.0 };
            let x = (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut r);
                    z + offset
                })
                .collect();
            Example::new(x, label)
        })
        .collect()
}
