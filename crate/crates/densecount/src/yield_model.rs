//! Yield models and historical weight-series statistics.
//!
//! Two multiplicative models: cluster-weight based
//! `Y = N_v * N_b * P_b` and berry-count based
//! `Y = N_v * N_b * N_a * P_a`, where `N_v` is vines per surface unit,
//! `N_b` bunches per vine, `P_b` the mean bunch weight, `N_a` berries per
//! bunch and `P_a` the mean berry weight (grams throughout). A panoramic
//! variant multiplies a field-level berry count directly by `P_a`.
//!
//! Reference per-variety weight series (Trentino, cluster weights
//! 2013-2018 and single-berry weights 2016-2018) ship with the crate in
//! the series text format: a `variety<TAB>year...` header, one row per
//! variety, `-` for missing entries.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum YieldError {
    #[error("series has no present values")]
    EmptyInput,
    #[error("series table parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown variety {variety:?}; available: {available}")]
    UnknownVariety { variety: String, available: String },
    #[error("no {year} entry for {variety:?}; present years: {available}")]
    MissingYear {
        variety: String,
        year: i32,
        available: String,
    },
}

/// Per-variety year -> weight record; `None` marks a missing year.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoricalSeries {
    pub variety: String,
    pub values: BTreeMap<i32, Option<f64>>,
}

impl HistoricalSeries {
    /// Present entries in year order.
    pub fn present_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.values().filter_map(|v| *v)
    }

    pub fn get(&self, year: i32) -> Result<f64, YieldError> {
        match self.values.get(&year) {
            Some(Some(v)) => Ok(*v),
            _ => Err(YieldError::MissingYear {
                variety: self.variety.clone(),
                year,
                available: self
                    .values
                    .iter()
                    .filter(|(_, v)| v.is_some())
                    .map(|(y, _)| y.to_string())
                    .collect::<Vec<_>>()
                    .join(", "),
            }),
        }
    }
}

/// Cluster-weight yield model: grams per surface unit.
pub fn yield_eq1(vines_per_unit: f64, bunches_per_vine: f64, bunch_weight_g: f64) -> f64 {
    vines_per_unit * bunches_per_vine * bunch_weight_g
}

/// Berry-count yield model: grams per surface unit.
pub fn yield_eq2(
    vines_per_unit: f64,
    bunches_per_vine: f64,
    berries_per_bunch: f64,
    berry_weight_g: f64,
) -> f64 {
    vines_per_unit * bunches_per_vine * berries_per_bunch * berry_weight_g
}

/// Panoramic strategy: a field-level berry count times the mean berry
/// weight, in grams.
pub fn yield_panoramic(total_berries: f64, berry_weight_g: f64) -> f64 {
    total_berries * berry_weight_g
}

/// Relative spread of a series: mean absolute deviation from the mean,
/// normalized by the median, over present entries only.
///
/// This is the one spread statistic that reproduces, at two printed
/// decimals, every "% mean dev." figure of the bundled reference tables
/// (mean-normalized deviation misses one row, coefficient of variation
/// misses several). Scale-invariant; zero for constant or one-element
/// series.
pub fn pct_mean_deviation(series: &HistoricalSeries) -> Result<f64, YieldError> {
    let values: Vec<f64> = series.present_values().collect();
    if values.is_empty() {
        return Err(YieldError::EmptyInput);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mad = values.iter().map(|v| (v - mean).abs()).sum::<f64>() / n;
    let mut sorted = values;
    sorted.sort_unstable_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    };
    Ok(mad / median)
}

// ---------------------------------------------------------------------------
// Series table text format
// ---------------------------------------------------------------------------

/// Parses a series table: header `variety<TAB>year...`, one variety per
/// row, `-` for missing weights. Present weights must be positive.
pub fn parse_series_table(text: &str) -> Result<Vec<HistoricalSeries>, YieldError> {
    let parse_err = |line: usize, message: String| YieldError::Parse { line, message };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));

    let (header_no, header) = lines
        .next()
        .ok_or_else(|| parse_err(0, "empty series table".into()))?;
    let head: Vec<&str> = header.split('\t').collect();
    if head.first() != Some(&"variety") || head.len() < 2 {
        return Err(parse_err(
            header_no,
            "header must be `variety<TAB>year...`".into(),
        ));
    }
    let years: Vec<i32> = head[1..]
        .iter()
        .enumerate()
        .map(|(i, y)| {
            y.trim()
                .parse()
                .map_err(|e| parse_err(header_no, format!("bad year in column {}: {e}", i + 2)))
        })
        .collect::<Result<_, _>>()?;

    let mut out = Vec::new();
    for (line_no, row) in lines {
        let fields: Vec<&str> = row.split('\t').collect();
        if fields.len() != years.len() + 1 {
            return Err(parse_err(
                line_no,
                format!("expected {} fields, found {}", years.len() + 1, fields.len()),
            ));
        }
        let mut values = BTreeMap::new();
        for (year, field) in years.iter().zip(&fields[1..]) {
            let field = field.trim();
            let value = if field == "-" {
                None
            } else {
                let v: f64 = field
                    .parse()
                    .map_err(|e| parse_err(line_no, format!("bad weight {field:?}: {e}")))?;
                if !(v > 0.0 && v.is_finite()) {
                    return Err(parse_err(
                        line_no,
                        format!("weight {v} must be positive"),
                    ));
                }
                Some(v)
            };
            values.insert(*year, value);
        }
        out.push(HistoricalSeries {
            variety: fields[0].trim().to_string(),
            values,
        });
    }
    Ok(out)
}

pub fn format_series_table(series: &[HistoricalSeries]) -> String {
    let mut years: Vec<i32> = series
        .iter()
        .flat_map(|s| s.values.keys().copied())
        .collect();
    years.sort_unstable();
    years.dedup();
    let mut out = String::from("variety");
    for y in &years {
        let _ = write!(out, "\t{y}");
    }
    out.push('\n');
    for s in series {
        out.push_str(&s.variety);
        for y in &years {
            match s.values.get(y) {
                Some(Some(v)) => {
                    let _ = write!(out, "\t{v}");
                }
                _ => out.push_str("\t-"),
            }
        }
        out.push('\n');
    }
    out
}

/// Looks a variety up by exact label.
pub fn find_series<'a>(
    series: &'a [HistoricalSeries],
    variety: &str,
) -> Result<&'a HistoricalSeries, YieldError> {
    series.iter().find(|s| s.variety == variety).ok_or_else(|| {
        YieldError::UnknownVariety {
            variety: variety.to_string(),
            available: series
                .iter()
                .map(|s| s.variety.clone())
                .collect::<Vec<_>>()
                .join(", "),
        }
    })
}

static CLUSTER_WEIGHTS: OnceLock<Vec<HistoricalSeries>> = OnceLock::new();
static BERRY_WEIGHTS: OnceLock<Vec<HistoricalSeries>> = OnceLock::new();

/// Bundled mean cluster weights (grams) per variety, 2013-2018.
pub fn bundled_cluster_weights() -> &'static [HistoricalSeries] {
    CLUSTER_WEIGHTS.get_or_init(|| {
        parse_series_table(include_str!("../data/cluster_weights.tsv"))
            .expect("bundled cluster weight table is well-formed")
    })
}

/// Bundled mean single-berry weights (grams) per variety, 2016-2018.
pub fn bundled_berry_weights() -> &'static [HistoricalSeries] {
    BERRY_WEIGHTS.get_or_init(|| {
        parse_series_table(include_str!("../data/berry_weights.tsv"))
            .expect("bundled berry weight table is well-formed")
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: &[f64]) -> HistoricalSeries {
        HistoricalSeries {
            variety: "test".into(),
            values: values
                .iter()
                .enumerate()
                .map(|(i, v)| (2013 + i as i32, Some(*v)))
                .collect(),
        }
    }

    fn rounded_dev(s: &HistoricalSeries) -> f64 {
        (pct_mean_deviation(s).unwrap() * 100.0).round() / 100.0
    }

    #[test]
    fn yield_models_published_inputs() {
        // Chardonnay 2016 cluster weight with 4000 vines x 10 bunches.
        assert_eq!(yield_eq1(4000.0, 10.0, 172.0), 6_880_000.0);
        // 132.9 berries per bunch at the 2018 Chardonnay berry weight.
        assert_eq!(yield_eq2(4000.0, 10.0, 132.9, 1.7), 9_037_200.0);
        // Panoramic berry total at the 2018 Pinot Gris berry weight.
        assert_eq!(yield_panoramic(18865.0, 1.6), 30_184.0);
    }

    #[test]
    fn yield_models_degenerate_and_identities() {
        assert_eq!(yield_eq1(0.0, 10.0, 172.0), 0.0);
        assert_eq!(yield_eq2(4000.0, 10.0, 0.0, 1.7), 0.0);
        assert_eq!(yield_panoramic(0.0, 1.6), 0.0);
        // eq1 == eq2 when the bunch weight factors into count x weight.
        let (na, pa) = (120.0, 1.5);
        assert_eq!(yield_eq1(4000.0, 10.0, na * pa), yield_eq2(4000.0, 10.0, na, pa));
        // panoramic == eq2 when the berry total factors the same way.
        assert_eq!(
            yield_panoramic(4000.0 * 10.0 * na, pa),
            yield_eq2(4000.0, 10.0, na, pa)
        );
    }

    #[test]
    fn yield_models_are_multilinear() {
        let base = yield_eq2(4000.0, 10.0, 132.9, 1.7);
        assert_eq!(yield_eq2(8000.0, 10.0, 132.9, 1.7), 2.0 * base);
        assert_eq!(yield_eq2(4000.0, 20.0, 132.9, 1.7), 2.0 * base);
        assert_eq!(yield_eq2(4000.0, 10.0, 265.8, 1.7), 2.0 * base);
        assert_eq!(yield_eq2(4000.0, 10.0, 132.9, 3.4), 2.0 * base);
    }

    #[test]
    fn pct_mean_deviation_worked_examples() {
        // Chardonnay cluster weights: mean 180.33, mean |dev| 10.44.
        let chardonnay = series(&[170.0, 184.0, 176.0, 172.0, 172.0, 208.0]);
        assert_eq!(rounded_dev(&chardonnay), 0.06);
        // Marzemino berry weights with a missing year: 0.1 / 2.2.
        let marzemino = series(&[2.1, 2.3]);
        assert_eq!(rounded_dev(&marzemino), 0.05);
    }

    #[test]
    fn pct_mean_deviation_degenerate_series() {
        assert_eq!(pct_mean_deviation(&series(&[5.0])).unwrap(), 0.0);
        assert_eq!(pct_mean_deviation(&series(&[3.0, 3.0, 3.0])).unwrap(), 0.0);
        let empty = HistoricalSeries {
            variety: "none".into(),
            values: BTreeMap::from([(2016, None)]),
        };
        assert_eq!(pct_mean_deviation(&empty), Err(YieldError::EmptyInput));
    }

    #[test]
    fn pct_mean_deviation_is_scale_invariant() {
        let a = series(&[170.0, 184.0, 176.0, 172.0, 172.0, 208.0]);
        let b = HistoricalSeries {
            variety: a.variety.clone(),
            values: a
                .values
                .iter()
                .map(|(y, v)| (*y, v.map(|v| v * 8.0)))
                .collect(),
        };
        // Power-of-two scaling is exact in binary floating point.
        assert_eq!(
            pct_mean_deviation(&a).unwrap(),
            pct_mean_deviation(&b).unwrap()
        );
    }

    #[test]
    fn bundled_tables_have_expected_shape() {
        let clusters = bundled_cluster_weights();
        let berries = bundled_berry_weights();
        assert_eq!(clusters.len(), 7);
        assert_eq!(berries.len(), 7);

        let pinot_gris = find_series(clusters, "Pinot Gris").unwrap();
        let weights: Vec<f64> = pinot_gris.present_values().collect();
        assert_eq!(weights, vec![164.0, 177.0, 181.0, 141.0, 167.0, 205.0]);

        let sauvignon = find_series(berries, "Sauvignon Blanc").unwrap();
        assert_eq!(sauvignon.values[&2016], None);
        assert_eq!(sauvignon.values[&2017], Some(1.8));
        assert_eq!(sauvignon.values[&2018], Some(1.6));
    }

    #[test]
    fn bundled_tables_reproduce_printed_deviations() {
        let expectations: [(&str, f64, f64); 7] = [
            ("Chardonnay", 0.06, 0.03),
            ("Lagrein", 0.06, 0.06),
            ("Marzemino", 0.04, 0.05),
            ("Pinot Gris", 0.09, 0.06),
            ("Pinot Noir", 0.05, 0.03),
            ("Sauvignon Blanc", 0.09, 0.06),
            ("Traminer", 0.06, 0.08),
        ];
        for (variety, cluster_dev, berry_dev) in expectations {
            let c = find_series(bundled_cluster_weights(), variety).unwrap();
            assert_eq!(rounded_dev(c), cluster_dev, "cluster {variety}");
            let b = find_series(bundled_berry_weights(), variety).unwrap();
            assert_eq!(rounded_dev(b), berry_dev, "berry {variety}");
        }
    }

    #[test]
    fn series_table_round_trip_and_lookup_errors() {
        let text = format_series_table(bundled_berry_weights());
        let reparsed = parse_series_table(&text).unwrap();
        assert_eq!(reparsed.as_slice(), bundled_berry_weights());

        assert!(matches!(
            find_series(bundled_berry_weights(), "Nebbiolo"),
            Err(YieldError::UnknownVariety { .. })
        ));
        let marzemino = find_series(bundled_berry_weights(), "Marzemino").unwrap();
        assert!(matches!(
            marzemino.get(2018),
            Err(YieldError::MissingYear { .. })
        ));
        assert_eq!(marzemino.get(2017), Ok(2.3));
    }
}
