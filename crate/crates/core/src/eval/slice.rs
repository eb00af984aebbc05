use serde::{Deserialize, Serialize};

use super::cv::{pooled_metrics, PooledMetrics, Prediction};
use super::EvalError;
use crate::dataset::DemographicAttribute;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSlice {
    pub group: String,
    #[serde(flatten)]
    pub metrics: PooledMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceReport {
    pub attribute: DemographicAttribute,
    pub class_list: Vec<String>,
    pub total_samples: usize,
    pub groups: Vec<GroupSlice>,
    /// Notices for groups without any test sample.
    pub notices: Vec<String>,
}

/// Recomputes metrics per demographic group from predictions pooled across
/// all test folds.
pub fn slice_report(predictions: &[Prediction], class_list: &[String], attribute: &str) -> Result<SliceReport, EvalError> {
    let attribute: DemographicAttribute = attribute.parse()?;
    let mut groups = Vec::new();
    let mut notices = Vec::new();
    for &group in attribute.groups() {
        let members: Vec<&Prediction> = predictions
            .iter()
            .filter(|p| attribute.value(&p.demographics) == group)
            .collect();
        if members.is_empty() {
            notices.push(format!("{}={group}: no test samples, group omitted", attribute.name()));
            continue;
        }
        let y_true: Vec<usize> = members.iter().map(|p| p.y_true).collect();
        let y_pred: Vec<usize> = members.iter().map(|p| p.y_pred).collect();
        let proba: Vec<Vec<f64>> = members.iter().map(|p| p.proba.clone()).collect();
        groups.push(GroupSlice {
            group: group.to_string(),
            metrics: pooled_metrics(&y_true, &y_pred, &proba, class_list)?,
        });
    }
    Ok(SliceReport {
        attribute,
        class_list: class_list.to_vec(),
        total_samples: predictions.len(),
        groups,
        notices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Demographics;
    use crate::openface::{Education, Gender, HomeLocation};

    fn pred(i: usize, gender: Gender, y_true: usize, y_pred: usize) -> Prediction {
        Prediction {
            sample: i,
            fold: 0,
            subject_id: format!("S{i}"),
            chunk_index: None,
            demographics: Demographics {
                gender,
                education: Education::Graduate,
                home_location: HomeLocation::Urban,
            },
            y_true,
            y_pred,
            proba: if y_pred == 0 { vec![0.8, 0.2] } else { vec![0.3, 0.7] },
        }
    }

    fn classes() -> Vec<String> {
        vec!["Anxious".into(), "NonAnxious".into()]
    }

    #[test]
    fn all_male_cohort_has_one_group() {
        let preds: Vec<Prediction> = (0..6).map(|i| pred(i, Gender::Male, i % 2, 0)).collect();
        let r = slice_report(&preds, &classes(), "gender").unwrap();
        assert_eq!(r.groups.len(), 1);
        assert_eq!(r.groups[0].group, "male");
        assert_eq!(r.groups[0].metrics.n_samples, 6);
        assert_eq!(r.notices.len(), 1);
    }

    #[test]
    fn identical_predictions_give_identical_group_metrics() {
        let pattern = [(0, 0), (0, 1), (1, 1), (1, 1), (1, 0)];
        let mut preds = Vec::new();
        for (g, gender) in [Gender::Male, Gender::Female].into_iter().enumerate() {
            for (i, &(t, p)) in pattern.iter().enumerate() {
                preds.push(pred(g * 10 + i, gender, t, p));
            }
        }
        let r = slice_report(&preds, &classes(), "gender").unwrap();
        assert_eq!(r.groups[0].metrics, r.groups[1].metrics);
        let total: usize = r.groups.iter().map(|g| g.metrics.n_samples).sum();
        assert_eq!(total, r.total_samples);
    }

    #[test]
    fn unknown_attribute() {
        assert!(matches!(
            slice_report(&[], &classes(), "age"),
            Err(EvalError::Dataset(crate::dataset::DatasetError::UnknownAttribute(_)))
        ));
    }
}
