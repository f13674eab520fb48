use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GrapeError, Result};
use crate::simplex::SUM_TOLERANCE;

/// State of a run at one recorded step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: u64,
    /// Full validation loss per task.
    pub losses: Vec<f64>,
    pub alpha: Vec<f64>,
    pub z: Vec<f64>,
    /// Latest task alignment scores (zero before the first task update).
    pub task_scores: Vec<f64>,
    /// Latest domain alignment scores (zero before the first domain update).
    pub domain_scores: Vec<f64>,
    pub lr: f64,
    /// Total gradient evaluations so far, training and reweighting.
    pub grad_evals: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_labels: Vec<String>,
    pub domain_labels: Vec<String>,
    pub records: Vec<TrajectoryRecord>,
}

fn check_simplex(name: &str, v: &[f64]) -> Result<()> {
    let sum: f64 = v.iter().sum();
    if v.iter().any(|x| *x < 0.0) || (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(GrapeError::ReportError(format!("{name} is not on the simplex: {v:?}")));
    }
    Ok(())
}

fn csv_label(label: &str) -> Result<&str> {
    if label.contains([',', '"', '\n', '\r']) {
        Err(GrapeError::ReportError(format!(
            "label `{label}` cannot be written as a CSV column"
        )))
    } else {
        Ok(label)
    }
}

impl Trajectory {
    pub fn new(task_labels: Vec<String>, domain_labels: Vec<String>) -> Self {
        Trajectory {
            task_labels,
            domain_labels,
            records: Vec::new(),
        }
    }

    pub fn num_tasks(&self) -> usize {
        self.task_labels.len()
    }

    pub fn num_domains(&self) -> usize {
        self.domain_labels.len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TrajectoryRecord> {
        self.records.last()
    }

    /// Appends a record after checking its shape, step order, and that both
    /// weight vectors are valid simplices.
    pub fn push(&mut self, record: TrajectoryRecord) -> Result<()> {
        let (n, k) = (self.num_tasks(), self.num_domains());
        let shapes = [
            ("losses", record.losses.len(), n),
            ("alpha", record.alpha.len(), k),
            ("z", record.z.len(), n),
            ("task_scores", record.task_scores.len(), n),
            ("domain_scores", record.domain_scores.len(), k),
        ];
        for (name, got, expected) in shapes {
            if got != expected {
                return Err(GrapeError::ReportError(format!(
                    "record field {name} has {got} entries, expected {expected}"
                )));
            }
        }
        if let Some(prev) = self.records.last() {
            if record.step <= prev.step {
                return Err(GrapeError::ReportError(format!(
                    "step {} does not follow step {}",
                    record.step, prev.step
                )));
            }
        }
        check_simplex("alpha", &record.alpha)?;
        check_simplex("z", &record.z)?;
        self.records.push(record);
        Ok(())
    }

    /// Column names, in export order.
    pub fn header(&self) -> Result<Vec<String>> {
        let mut cols = vec!["step".to_string()];
        let groups: [(&str, &[String]); 5] = [
            ("loss", &self.task_labels),
            ("alpha", &self.domain_labels),
            ("z", &self.task_labels),
            ("a_task", &self.task_labels),
            ("a_domain", &self.domain_labels),
        ];
        for (prefix, labels) in groups {
            for l in labels {
                cols.push(format!("{prefix}.{}", csv_label(l)?));
            }
        }
        cols.push("lr".into());
        cols.push("grad_evals".into());
        Ok(cols)
    }

    /// Comma-separated text, one row per record. Floats are written in
    /// shortest round-trip form, so [`Trajectory::from_csv`] is lossless.
    pub fn to_csv(&self) -> Result<String> {
        let mut out = self.header()?.join(",");
        out.push('\n');
        for r in &self.records {
            write!(out, "{}", r.step).unwrap();
            for v in r
                .losses
                .iter()
                .chain(&r.alpha)
                .chain(&r.z)
                .chain(&r.task_scores)
                .chain(&r.domain_scores)
                .chain(std::iter::once(&r.lr))
            {
                write!(out, ",{v:?}").unwrap();
            }
            writeln!(out, ",{}", r.grad_evals).unwrap();
        }
        Ok(out)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: String| GrapeError::ReportError(m);
        let mut lines = text.lines();
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| bad("missing header".into()))?
            .split(',')
            .collect();
        let labels = |prefix: &str| -> Vec<String> {
            header
                .iter()
                .filter_map(|c| c.strip_prefix(prefix).map(str::to_string))
                .collect()
        };
        let traj_labels = (labels("loss."), labels("alpha."));
        let mut traj = Trajectory::new(traj_labels.0, traj_labels.1);
        let expected = traj.header()?;
        if expected != header {
            return Err(bad(format!("unexpected header {header:?}")));
        }
        let (n, k) = (traj.num_tasks(), traj.num_domains());
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != header.len() {
                return Err(bad(format!(
                    "row {} has {} columns, expected {}",
                    i + 1,
                    fields.len(),
                    header.len()
                )));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("row {}: {e}", i + 1)));
            let floats = fields[1..fields.len() - 1]
                .iter()
                .map(|s| num(s))
                .collect::<Result<Vec<f64>>>()?;
            let mut it = floats.into_iter();
            let mut take = |m: usize| it.by_ref().take(m).collect::<Vec<f64>>();
            let record = TrajectoryRecord {
                step: fields[0].parse().map_err(|e| bad(format!("row {}: {e}", i + 1)))?,
                losses: take(n),
                alpha: take(k),
                z: take(n),
                task_scores: take(n),
                domain_scores: take(k),
                lr: take(1)[0],
                grad_evals: fields[fields.len() - 1]
                    .parse()
                    .map_err(|e| bad(format!("row {}: {e}", i + 1)))?,
            };
            traj.push(record)?;
        }
        Ok(traj)
    }

    pub fn export_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()?).map_err(|e| GrapeError::io(path, e))
    }

    pub fn import_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| GrapeError::io(path, e))?;
        Self::from_csv(&text)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).expect("trajectory serializes");
        fs::write(path, text).map_err(|e| GrapeError::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| GrapeError::io(path, e))?;
        let raw: Trajectory = serde_json::from_str(&text).map_err(|e| GrapeError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut checked = Trajectory::new(raw.task_labels, raw.domain_labels);
        for r in raw.records {
            checked.push(r)?;
        }
        Ok(checked)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(step: u64, n: usize, k: usize, x: f64) -> TrajectoryRecord {
        TrajectoryRecord {
            step,
            losses: (0..n).map(|i| x * (i + 1) as f64).collect(),
            alpha: vec![1.0 / k as f64; k],
            z: vec![1.0 / n as f64; n],
            task_scores: vec![x; n],
            domain_scores: vec![-x; k],
            lr: 0.1,
            grad_evals: step * 3,
        }
    }

    fn traj(n: usize, k: usize) -> Trajectory {
        Trajectory::new(
            (0..n).map(|i| format!("t{i}")).collect(),
            (0..k).map(|i| format!("d{i}")).collect(),
        )
    }

    #[test]
    fn empty_trajectory_exports_header_only() {
        let t = traj(2, 3);
        let csv = t.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 1);
        assert_eq!(
            csv.trim_end(),
            "step,loss.t0,loss.t1,alpha.d0,alpha.d1,alpha.d2,z.t0,z.t1,a_task.t0,a_task.t1,a_domain.d0,a_domain.d1,a_domain.d2,lr,grad_evals"
        );
        assert_eq!(Trajectory::from_csv(&csv).unwrap(), t);
    }

    #[test]
    fn column_count_follows_schema() {
        for (n, k) in [(1, 1), (3, 4), (6, 7)] {
            assert_eq!(traj(n, k).header().unwrap().len(), 1 + n + k + n + n + k + 2);
        }
    }

    #[test]
    fn push_rejects_bad_records() {
        let mut t = traj(2, 2);
        t.push(record(5, 2, 2, 1.0)).unwrap();
        assert!(t.push(record(5, 2, 2, 1.0)).is_err());
        assert!(t.push(record(6, 3, 2, 1.0)).is_err());
        let mut r = record(7, 2, 2, 1.0);
        r.alpha = vec![0.6, 0.6];
        assert!(t.push(r).is_err());
    }

    #[test]
    fn labels_with_commas_are_rejected() {
        let t = Trajectory::new(vec!["a,b".into()], vec!["d".into()]);
        assert!(t.to_csv().is_err());
    }

    #[test]
    fn file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = traj(2, 1);
        t.push(record(0, 2, 1, 0.1)).unwrap();
        t.push(record(10, 2, 1, 1e-300)).unwrap();
        let csv = dir.path().join("t.csv");
        t.export_csv(&csv).unwrap();
        assert_eq!(Trajectory::import_csv(&csv).unwrap(), t);
        let json = dir.path().join("t.json");
        t.save_json(&json).unwrap();
        assert_eq!(Trajectory::load_json(&json).unwrap(), t);
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_lossless(xs in prop::collection::vec(-1e12f64..1e12, 1..20), n in 1usize..4, k in 1usize..4) {
            let mut t = traj(n, k);
            for (i, x) in xs.iter().enumerate() {
                let mut r = record(i as u64 * 7, n, k, *x);
                r.lr = x.abs() / 3.0;
                t.push(r).unwrap();
            }
            let back = Trajectory::from_csv(&t.to_csv().unwrap()).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
