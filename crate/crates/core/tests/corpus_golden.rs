use std::fs;
use std::path::PathBuf;

use chrono::{Datelike, NaiveDate, Weekday};
use volcast_core::corpus::{self, TimeCategory, TradingCalendar};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn calendar() -> TradingCalendar {
    TradingCalendar::from_reader(fs::File::open(fixture("holidays.txt")).unwrap()).unwrap()
}

#[test]
fn category_histogram_matches_golden_file() {
    let file = fs::File::open(fixture("headlines_200.jsonl")).unwrap();
    let (records, rejected) = corpus::parse_headlines_jsonl(file).unwrap();
    assert!(rejected.is_empty());
    assert_eq!(records.len(), 200);
    let hist = corpus::category_histogram(&records, &calendar());
    let golden = fs::read_to_string(fixture("headlines_200.categories.tsv")).unwrap();
    assert_eq!(corpus::histogram_tsv(&hist), golden);
}

#[test]
fn aligned_days_are_trading_days() {
    let file = fs::File::open(fixture("headlines_200.jsonl")).unwrap();
    let (records, _) = corpus::parse_headlines_jsonl(file).unwrap();
    let cal = calendar();
    let aligned = corpus::align(&records, &cal);
    assert_eq!(aligned.headline_count(), 200);
    for day in aligned.all_days() {
        assert!(!matches!(day.trading_date.weekday(), Weekday::Sat | Weekday::Sun));
        assert!(!cal.is_holiday(day.trading_date));
        assert_eq!(day.has_news, !day.headlines.is_empty());
        for h in &day.headlines {
            // Nothing published after the close of its trading day.
            let cutoff = day.trading_date.and_hms_opt(16, 0, 0).unwrap();
            assert!(h.local_time <= cutoff);
            if matches!(h.category, TimeCategory::BeforeMarket | TimeCategory::DuringMarket) {
                assert_eq!(h.local_time.date(), day.trading_date);
            } else {
                assert!(h.local_time.date() < day.trading_date);
            }
        }
        for w in day.headlines.windows(2) {
            assert!(w[0].local_time <= w[1].local_time);
        }
    }
}

#[test]
fn documented_timestamps() {
    let cal = TradingCalendar::default();
    let ts = [
        ("2007-04-17T08:54:27-04:00", TimeCategory::BeforeMarket),
        ("2016-09-22T15:32:13-04:00", TimeCategory::DuringMarket),
    ];
    for (t, want) in ts {
        let rec = corpus::HeadlineRecord::new("X", t, "headline").unwrap();
        assert_eq!(corpus::categorize(rec.new_york_time(), &cal), want);
    }
}

#[test]
fn holiday_monday_sends_friday_news_to_tuesday() {
    let cal = calendar();
    let rec = corpus::HeadlineRecord::new("X", "2016-12-23T22:00:00Z", "late friday").unwrap();
    let aligned = corpus::align(&[rec], &cal);
    assert_eq!(
        aligned.stocks["X"][0].trading_date,
        NaiveDate::from_ymd_opt(2016, 12, 27).unwrap()
    );
}
