//! Counting error metrics and their aggregation levels.
//!
//! Conventions follow the crowd-counting literature: per-image MAE, the
//! root-mean-square per-image error (named MSE there, exposed here under
//! both names), and Overall MAE, the absolute difference of summed
//! predictions and summed ground truths. Overall MAE benefits from the
//! cancellation of per-image over- and underestimates, which is the
//! quantity that matters when many pictures feed one yield figure.
//!
//! Relative ("%") metrics: the per-image figure is the mean of per-image
//! relative errors |C - GT| / GT (images with GT = 0 are excluded and
//! counted), the overall figure is |sum C - sum GT| / sum GT. Both are
//! reported as percentages.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("metric needs at least one pair")]
    EmptyInput,
    #[error("cross-fold aggregation needs at least two folds, got {0}")]
    NotEnoughFolds(usize),
    #[error("pair {image_id:?} has negative ground truth {ground_truth}")]
    NegativeGroundTruth { image_id: String, ground_truth: f64 },
    #[error("pair {image_id:?} carries no {field} label required for grouping")]
    MissingGroupLabel { image_id: String, field: &'static str },
    #[error("report parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// One evaluated image: estimated and true count plus optional grouping
/// labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CountPair {
    pub image_id: String,
    pub predicted: f64,
    pub ground_truth: f64,
    pub group: Option<String>,
    pub fold: Option<u32>,
}

impl CountPair {
    pub fn new(image_id: impl Into<String>, predicted: f64, ground_truth: f64) -> Self {
        Self {
            image_id: image_id.into(),
            predicted,
            ground_truth,
            group: None,
            fold: None,
        }
    }
}

fn check_nonempty(pairs: &[CountPair]) -> Result<(), MetricsError> {
    if pairs.is_empty() {
        Err(MetricsError::EmptyInput)
    } else {
        Ok(())
    }
}

/// Mean absolute per-image count error.
pub fn mae(pairs: &[CountPair]) -> Result<f64, MetricsError> {
    check_nonempty(pairs)?;
    let sum: f64 = pairs.iter().map(|p| (p.predicted - p.ground_truth).abs()).sum();
    Ok(sum / pairs.len() as f64)
}

/// Root-mean-square per-image count error (the literature's "MSE").
pub fn mse(pairs: &[CountPair]) -> Result<f64, MetricsError> {
    check_nonempty(pairs)?;
    let sum: f64 = pairs
        .iter()
        .map(|p| {
            let e = p.predicted - p.ground_truth;
            e * e
        })
        .sum();
    Ok((sum / pairs.len() as f64).sqrt())
}

/// Absolute difference of summed predictions and summed ground truths.
pub fn overall_mae(pairs: &[CountPair]) -> Result<f64, MetricsError> {
    check_nonempty(pairs)?;
    Ok(signed_total_error(pairs).abs())
}

/// Sum of predictions minus sum of ground truths (cancellation included).
pub fn signed_total_error(pairs: &[CountPair]) -> f64 {
    let predicted: f64 = pairs.iter().map(|p| p.predicted).sum();
    let truth: f64 = pairs.iter().map(|p| p.ground_truth).sum();
    predicted - truth
}

/// Relative error figures, as percentages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeErrors {
    /// Mean of per-image |C - GT| / GT over images with GT > 0; `None`
    /// when no image qualifies.
    pub mae_pct: Option<f64>,
    /// |sum C - sum GT| / sum GT; `None` when the ground truth total is 0.
    pub overall_mae_pct: Option<f64>,
    /// Images skipped by `mae_pct` because their ground truth is 0.
    pub excluded_zero_gt: usize,
}

pub fn relative_errors(pairs: &[CountPair]) -> Result<RelativeErrors, MetricsError> {
    check_nonempty(pairs)?;
    let mut rel_sum = 0.0;
    let mut counted = 0usize;
    for p in pairs {
        if p.ground_truth > 0.0 {
            rel_sum += (p.predicted - p.ground_truth).abs() / p.ground_truth;
            counted += 1;
        }
    }
    let mae_pct = (counted > 0).then(|| 100.0 * rel_sum / counted as f64);
    let gt_total: f64 = pairs.iter().map(|p| p.ground_truth).sum();
    let overall_mae_pct =
        (gt_total > 0.0).then(|| 100.0 * signed_total_error(pairs).abs() / gt_total);
    Ok(RelativeErrors {
        mae_pct,
        overall_mae_pct,
        excluded_zero_gt: pairs.len() - counted,
    })
}

/// Grouping axis for sub-reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    Variety,
    Fold,
}

/// Error statistics at every aggregation level for one pair set,
/// optionally with per-group sub-reports.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub n_images: usize,
    /// Ground-truth total (fractional counts allowed).
    pub n_berries: f64,
    pub mae: f64,
    pub mae_pct: Option<f64>,
    /// Root-mean-square per-image error; also exposed as [`Self::rmse`].
    pub mse: f64,
    pub overall_mae: f64,
    pub overall_mae_pct: Option<f64>,
    /// Sum of predictions minus sum of ground truths.
    pub signed_error: f64,
    pub excluded_zero_gt: usize,
    pub groups: Vec<(String, MetricsReport)>,
}

impl MetricsReport {
    pub fn from_pairs(pairs: &[CountPair]) -> Result<Self, MetricsError> {
        for p in pairs {
            if p.ground_truth < 0.0 {
                return Err(MetricsError::NegativeGroundTruth {
                    image_id: p.image_id.clone(),
                    ground_truth: p.ground_truth,
                });
            }
        }
        let rel = relative_errors(pairs)?;
        Ok(Self {
            n_images: pairs.len(),
            n_berries: pairs.iter().map(|p| p.ground_truth).sum(),
            mae: mae(pairs)?,
            mae_pct: rel.mae_pct,
            mse: mse(pairs)?,
            overall_mae: overall_mae(pairs)?,
            overall_mae_pct: rel.overall_mae_pct,
            signed_error: signed_total_error(pairs),
            excluded_zero_gt: rel.excluded_zero_gt,
            groups: Vec::new(),
        })
    }

    /// The same number as [`Self::mse`] under the unambiguous name.
    pub fn rmse(&self) -> f64 {
        self.mse
    }
}

/// Full report plus one sub-report per group label, ordered by label
/// (fold indices numerically).
pub fn grouped_report(pairs: &[CountPair], by: GroupBy) -> Result<MetricsReport, MetricsError> {
    let mut groups: BTreeMap<String, Vec<CountPair>> = BTreeMap::new();
    for p in pairs {
        let label = match by {
            GroupBy::Variety => p.group.clone().ok_or_else(|| MetricsError::MissingGroupLabel {
                image_id: p.image_id.clone(),
                field: "variety",
            })?,
            GroupBy::Fold => {
                let fold = p.fold.ok_or_else(|| MetricsError::MissingGroupLabel {
                    image_id: p.image_id.clone(),
                    field: "fold",
                })?;
                format!("fold-{fold}")
            }
        };
        groups.entry(label).or_default().push(p.clone());
    }
    let mut report = MetricsReport::from_pairs(pairs)?;
    report.groups = groups
        .into_iter()
        .map(|(label, members)| Ok((label, MetricsReport::from_pairs(&members)?)))
        .collect::<Result<_, MetricsError>>()?;
    Ok(report)
}

/// Mean and unbiased sample standard deviation of one metric across
/// folds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values
        .iter()
        .map(|v| {
            let d = v - mean;
            d * d
        })
        .sum();
    MeanStd {
        mean,
        std: (ss / (n - 1.0)).sqrt(),
    }
}

/// Cross-validation summary: per-metric mean and sample (n-1) standard
/// deviation across fold reports.
#[derive(Debug, Clone, PartialEq)]
pub struct CvSummary {
    pub folds: usize,
    pub n_images: MeanStd,
    pub n_berries: MeanStd,
    pub mae: MeanStd,
    /// Aggregated only when every fold report carries the field.
    pub mae_pct: Option<MeanStd>,
    pub mse: MeanStd,
    pub overall_mae: MeanStd,
    pub overall_mae_pct: Option<MeanStd>,
}

pub fn cv_aggregate(reports: &[MetricsReport]) -> Result<CvSummary, MetricsError> {
    if reports.len() < 2 {
        return Err(MetricsError::NotEnoughFolds(reports.len()));
    }
    let collect = |f: fn(&MetricsReport) -> f64| -> Vec<f64> { reports.iter().map(f).collect() };
    let collect_opt = |f: fn(&MetricsReport) -> Option<f64>| -> Option<Vec<f64>> {
        reports.iter().map(f).collect()
    };
    Ok(CvSummary {
        folds: reports.len(),
        n_images: mean_std(&collect(|r| r.n_images as f64)),
        n_berries: mean_std(&collect(|r| r.n_berries)),
        mae: mean_std(&collect(|r| r.mae)),
        mae_pct: collect_opt(|r| r.mae_pct).as_deref().map(mean_std),
        mse: mean_std(&collect(|r| r.mse)),
        overall_mae: mean_std(&collect(|r| r.overall_mae)),
        overall_mae_pct: collect_opt(|r| r.overall_mae_pct).as_deref().map(mean_std),
    })
}

impl CvSummary {
    /// Two-row `Per Image` / `Overall` table with `mean ± std` entries.
    pub fn to_table_text(&self) -> String {
        let pm = |m: &MeanStd| format!("{:.2} ± {:.2}", m.mean, m.std);
        let pm_pct = |m: &Option<MeanStd>| match m {
            Some(m) => format!("{:.2}% ± {:.2}%", m.mean, m.std),
            None => "-".to_string(),
        };
        let mut out = String::new();
        out.push_str(&format!("folds\t{}\n", self.folds));
        out.push_str("\tn\tMAE\tMAE (%)\tMSE\n");
        out.push_str(&format!(
            "Per Image\t{:.1}\t{}\t{}\t{}\n",
            self.n_images.mean,
            pm(&self.mae),
            pm_pct(&self.mae_pct),
            pm(&self.mse)
        ));
        out.push_str(&format!(
            "Overall\t{:.1}\t{}\t{}\n",
            self.n_berries.mean,
            pm(&self.overall_mae),
            pm_pct(&self.overall_mae_pct)
        ));
        out
    }
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v}"),
        None => "-".to_string(),
    }
}

fn push_fields(out: &mut String, prefix: &str, r: &MetricsReport) {
    let mut field = |k: &str, v: String| {
        let _ = writeln!(out, "{prefix}{k}\t{v}");
    };
    field("n_images", r.n_images.to_string());
    field("n_berries", format!("{}", r.n_berries));
    field("mae", format!("{}", r.mae));
    field("mae_pct", fmt_opt(r.mae_pct));
    field("mse", format!("{}", r.mse));
    field("rmse", format!("{}", r.rmse()));
    field("overall_mae", format!("{}", r.overall_mae));
    field("overall_mae_pct", fmt_opt(r.overall_mae_pct));
    field("signed_error", format!("{}", r.signed_error));
    field("excluded_zero_gt", r.excluded_zero_gt.to_string());
}

impl MetricsReport {
    /// Machine-readable key/value document. Floats use the shortest
    /// round-trip representation, so parsing recovers them exactly.
    pub fn to_kv_text(&self) -> String {
        let mut out = String::new();
        push_fields(&mut out, "", self);
        for (label, sub) in &self.groups {
            let _ = writeln!(out, "group\t{label}");
            push_fields(&mut out, &format!("group\t{label}\t"), sub);
        }
        out
    }

    pub fn from_kv_text(text: &str) -> Result<Self, MetricsError> {
        fn blank() -> MetricsReport {
            MetricsReport {
                n_images: 0,
                n_berries: 0.0,
                mae: 0.0,
                mae_pct: None,
                mse: 0.0,
                overall_mae: 0.0,
                overall_mae_pct: None,
                signed_error: 0.0,
                excluded_zero_gt: 0,
                groups: Vec::new(),
            }
        }
        fn apply(
            r: &mut MetricsReport,
            key: &str,
            value: &str,
            line: usize,
        ) -> Result<(), MetricsError> {
            let bad = |message: String| MetricsError::Parse { line, message };
            let f = |v: &str| -> Result<f64, MetricsError> {
                v.parse().map_err(|e| bad(format!("bad float {v:?}: {e}")))
            };
            let opt = |v: &str| -> Result<Option<f64>, MetricsError> {
                if v == "-" {
                    Ok(None)
                } else {
                    f(v).map(Some)
                }
            };
            match key {
                "n_images" => {
                    r.n_images = value.parse().map_err(|e| bad(format!("bad count: {e}")))?
                }
                "n_berries" => r.n_berries = f(value)?,
                "mae" => r.mae = f(value)?,
                "mae_pct" => r.mae_pct = opt(value)?,
                "mse" => r.mse = f(value)?,
                "rmse" => {} // alias of mse, informational
                "overall_mae" => r.overall_mae = f(value)?,
                "overall_mae_pct" => r.overall_mae_pct = opt(value)?,
                "signed_error" => r.signed_error = f(value)?,
                "excluded_zero_gt" => {
                    r.excluded_zero_gt =
                        value.parse().map_err(|e| bad(format!("bad count: {e}")))?
                }
                other => return Err(bad(format!("unknown report key {other:?}"))),
            }
            Ok(())
        }

        let mut report = blank();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            match fields.as_slice() {
                ["group", label] => report.groups.push(((*label).to_string(), blank())),
                ["group", label, key, value] => {
                    let sub = report
                        .groups
                        .iter_mut()
                        .rev()
                        .find(|(l, _)| l == label)
                        .ok_or_else(|| MetricsError::Parse {
                            line,
                            message: format!("group {label:?} used before declaration"),
                        })?;
                    apply(&mut sub.1, key, value, line)?;
                }
                [key, value] => apply(&mut report, key, value, line)?,
                _ => {
                    return Err(MetricsError::Parse {
                        line,
                        message: format!("unparseable report line {raw:?}"),
                    })
                }
            }
        }
        Ok(report)
    }

    /// Human-readable table in the two-row Per Image / Overall layout;
    /// grouped reports get one row pair per group plus a TOTAL pair.
    pub fn to_table_text(&self) -> String {
        fn pct(v: Option<f64>) -> String {
            match v {
                Some(v) => format!("{v:.2}%"),
                None => "-".to_string(),
            }
        }
        let mut out = String::new();
        if self.groups.is_empty() {
            out.push_str("\tn\tMAE\tMAE (%)\tMSE\n");
            out.push_str(&format!(
                "Per Image\t{}\t{:.2}\t{}\t{:.2}\n",
                self.n_images,
                self.mae,
                pct(self.mae_pct),
                self.mse
            ));
            out.push_str(&format!(
                "Overall\t{:.0}\t{:.2}\t{}\n",
                self.n_berries,
                self.overall_mae,
                pct(self.overall_mae_pct)
            ));
        } else {
            out.push_str("group\tn\tMAE\tMAE (%)\tMSE\tN\tMAE\tMAE (%)\n");
            let mut row = |label: &str, r: &MetricsReport| {
                out.push_str(&format!(
                    "{label}\t{}\t{:.2}\t{}\t{:.2}\t{:.0}\t{:.2}\t{}\n",
                    r.n_images,
                    r.mae,
                    pct(r.mae_pct),
                    r.mse,
                    r.n_berries,
                    r.overall_mae,
                    pct(r.overall_mae_pct)
                ));
            };
            for (label, sub) in &self.groups {
                row(label, sub);
            }
            row("TOTAL", self);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(data: &[(f64, f64)]) -> Vec<CountPair> {
        data.iter()
            .enumerate()
            .map(|(i, (p, gt))| CountPair::new(format!("img{i}"), *p, *gt))
            .collect()
    }

    #[test]
    fn mae_basic() {
        assert_eq!(mae(&pairs(&[(100.0, 110.0), (200.0, 190.0)])).unwrap(), 10.0);
        assert_eq!(mae(&pairs(&[(5.0, 5.0), (7.0, 7.0)])).unwrap(), 0.0);
        assert_eq!(mae(&[]), Err(MetricsError::EmptyInput));
    }

    #[test]
    fn mae_matches_summation_oracle() {
        let mut rng = crate::rng::SplitMix64::new(61);
        let data: Vec<(f64, f64)> = (0..26)
            .map(|_| (rng.next_range(50.0, 250.0), rng.next_range(50.0, 250.0)))
            .collect();
        let ps = pairs(&data);
        let mut total = 0.0;
        for (p, gt) in &data {
            total += (p - gt).abs();
        }
        assert_eq!(mae(&ps).unwrap(), total / 26.0);
    }

    #[test]
    fn mse_is_root_mean_square() {
        assert_eq!(mse(&pairs(&[(100.0, 110.0), (200.0, 190.0)])).unwrap(), 10.0);
        let got = mse(&pairs(&[(0.0, 0.0), (0.0, 20.0)])).unwrap();
        assert!((got - 200.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mse_dominates_mae() {
        let mut rng = crate::rng::SplitMix64::new(62);
        for _ in 0..100 {
            let data: Vec<(f64, f64)> = (0..rng.next_below(20) + 1)
                .map(|_| (rng.next_range(0.0, 500.0), rng.next_range(0.0, 500.0)))
                .collect();
            let ps = pairs(&data);
            assert!(mse(&ps).unwrap() >= mae(&ps).unwrap() - 1e-12);
        }
    }

    #[test]
    fn overall_mae_cancels() {
        assert_eq!(
            overall_mae(&pairs(&[(100.0, 110.0), (200.0, 190.0)])).unwrap(),
            0.0
        );
    }

    #[test]
    fn overall_mae_bounded_by_n_times_mae() {
        let mut rng = crate::rng::SplitMix64::new(63);
        for _ in 0..100 {
            let data: Vec<(f64, f64)> = (0..rng.next_below(30) + 1)
                .map(|_| (rng.next_range(0.0, 500.0), rng.next_range(0.0, 500.0)))
                .collect();
            let ps = pairs(&data);
            let bound = ps.len() as f64 * mae(&ps).unwrap();
            assert!(overall_mae(&ps).unwrap() <= bound + 1e-9);
        }
    }

    #[test]
    fn relative_errors_published_ratios() {
        // Overall ratios from published per-variety splits. Both sides of
        // each quotient are printed at two decimals, so agreement is up to
        // one unit in the last printed digit.
        let close = |a: f64, b: f64| (a - b).abs() <= 0.01;
        let re = |err: f64, total: f64| {
            let ps = pairs(&[(total + err, total)]);
            relative_errors(&ps).unwrap().overall_mae_pct.unwrap()
        };
        assert!(close(re(6.38, 169.0), 3.77));
        assert!(close(re(11.08, 1298.0), 0.85));
        assert!(close(re(10.65, 3653.0), 0.29));
    }

    #[test]
    fn relative_errors_single_pair() {
        let re = relative_errors(&pairs(&[(110.0, 100.0)])).unwrap();
        assert_eq!(re.mae_pct, Some(10.0));
        assert_eq!(re.overall_mae_pct, Some(10.0));
        assert_eq!(re.excluded_zero_gt, 0);
    }

    #[test]
    fn relative_errors_skip_zero_ground_truth() {
        let re = relative_errors(&pairs(&[(5.0, 0.0), (110.0, 100.0)])).unwrap();
        assert_eq!(re.excluded_zero_gt, 1);
        assert_eq!(re.mae_pct, Some(10.0));
    }

    #[test]
    fn grouped_report_reconciles_totals() {
        let mut ps = pairs(&[
            (100.0, 110.0),
            (200.0, 190.0),
            (50.0, 55.0),
            (70.0, 60.0),
        ]);
        ps[0].group = Some("a".into());
        ps[1].group = Some("a".into());
        ps[2].group = Some("b".into());
        ps[3].group = Some("b".into());
        let report = grouped_report(&ps, GroupBy::Variety).unwrap();
        assert_eq!(report.groups.len(), 2);
        let berry_sum: f64 = report.groups.iter().map(|(_, g)| g.n_berries).sum();
        assert_eq!(berry_sum, report.n_berries);
        let signed_sum: f64 = report.groups.iter().map(|(_, g)| g.signed_error).sum();
        assert!((signed_sum - report.signed_error).abs() < 1e-9);
    }

    #[test]
    fn grouped_report_single_group_equals_total() {
        let mut ps = pairs(&[(100.0, 110.0), (200.0, 190.0)]);
        for p in &mut ps {
            p.group = Some("only".into());
        }
        let report = grouped_report(&ps, GroupBy::Variety).unwrap();
        assert_eq!(report.groups.len(), 1);
        let sub = &report.groups[0].1;
        assert_eq!(sub.mae, report.mae);
        assert_eq!(sub.overall_mae, report.overall_mae);
    }

    #[test]
    fn grouped_report_requires_labels() {
        let ps = pairs(&[(1.0, 1.0)]);
        assert!(matches!(
            grouped_report(&ps, GroupBy::Variety),
            Err(MetricsError::MissingGroupLabel { .. })
        ));
        assert!(matches!(
            grouped_report(&ps, GroupBy::Fold),
            Err(MetricsError::MissingGroupLabel { .. })
        ));
    }

    #[test]
    fn cv_aggregate_two_folds() {
        let make = |value: f64| MetricsReport {
            n_images: 10,
            n_berries: 100.0,
            mae: value,
            mae_pct: Some(value),
            mse: value,
            overall_mae: value,
            overall_mae_pct: Some(value),
            signed_error: 0.0,
            excluded_zero_gt: 0,
            groups: Vec::new(),
        };
        let summary = cv_aggregate(&[make(10.0), make(20.0)]).unwrap();
        assert_eq!(summary.mae.mean, 15.0);
        assert!((summary.mae.std - 50.0f64.sqrt()).abs() < 1e-12);

        let same = cv_aggregate(&[make(5.0), make(5.0), make(5.0)]).unwrap();
        assert_eq!(same.mae.std, 0.0);

        assert_eq!(
            cv_aggregate(&[make(1.0)]),
            Err(MetricsError::NotEnoughFolds(1))
        );
    }

    #[test]
    fn cv_aggregate_matches_two_pass_oracle() {
        let mut rng = crate::rng::SplitMix64::new(64);
        let values: Vec<f64> = (0..5).map(|_| rng.next_range(0.0, 100.0)).collect();
        let reports: Vec<MetricsReport> = values
            .iter()
            .map(|v| {
                MetricsReport::from_pairs(&pairs(&[(100.0 + v, 100.0)])).unwrap()
            })
            .collect();
        let summary = cv_aggregate(&reports).unwrap();
        let mean = values.iter().sum::<f64>() / 5.0;
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        let std = (ss / 4.0).sqrt();
        assert!((summary.mae.mean - mean).abs() < 1e-12);
        assert!((summary.mae.std - std).abs() < 1e-12);
    }

    #[test]
    fn report_round_trips_losslessly() {
        let mut ps = pairs(&[
            (100.37, 110.11),
            (200.0, 190.9),
            (50.5, 55.25),
            (70.125, 60.0),
            (3.0, 0.0),
        ]);
        let labels = ["a", "a", "b", "b", "b"];
        for (p, label) in ps.iter_mut().zip(labels) {
            p.group = Some(label.to_string());
            p.fold = Some(0);
        }
        let report = grouped_report(&ps, GroupBy::Variety).unwrap();
        let text = report.to_kv_text();
        let back = MetricsReport::from_kv_text(&text).unwrap();
        assert_eq!(back, report);
    }
}
