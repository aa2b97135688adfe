use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};

/// ROC curve and its area for one binary scoring task.
#[derive(Debug, Clone, Serialize)]
pub struct RocResult {
    /// (false positive rate, true positive rate) from descending-score
    /// thresholds, starting at (0,0) and ending at (1,1).
    pub points: Vec<(f64, f64)>,
    /// Probability that a random positive outscores a random negative,
    /// ties counting one half.
    pub auroc: f64,
    pub positives: usize,
    pub negatives: usize,
}

/// ROC analysis of scores against binary labels.
pub fn roc(scores: &[f64], labels: &[bool]) -> Result<RocResult> {
    if scores.len() != labels.len() {
        return Err(Error::schema("scores and labels differ in length"));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::schema("ROC needs at least one positive and one negative"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::schema("scores must be finite"));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // Rank-sum AUROC with midranks for ties; midranks are half-integers so
    // the statistic is exact in floating point.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let p = positives as f64;
    let n = negatives as f64;
    let u = rank_sum_pos - p * (p + 1.0) / 2.0;
    let auroc = u / (p * n);

    // Curve from descending-score thresholds, tied scores grouped.
    let mut points = vec![(0.0, 0.0)];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = order.len();
    while i > 0 {
        let mut j = i;
        while j > 1 && scores[order[j - 2]] == scores[order[i - 1]] {
            j -= 1;
        }
        for &idx in &order[j - 1..i] {
            if labels[idx] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        points.push((fp as f64 / n, tp as f64 / p));
        i = j - 1;
    }
    Ok(RocResult {
        points,
        auroc,
        positives,
        negatives,
    })
}

impl RocResult {
    /// Trapezoidal area of the emitted curve; equals `auroc` up to
    /// round-off.
    pub fn trapezoid_area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum()
    }
}

/// Harmonic mean of per-topic scores; undefined when any entry is zero.
pub fn aggregate_auroc(per_topic: &[f64]) -> Result<f64> {
    if per_topic.is_empty() {
        return Err(Error::schema("nothing to aggregate"));
    }
    if per_topic.iter().any(|&x| !(x > 0.0) || x > 1.0) {
        return Err(Error::schema(
            "harmonic mean needs every entry in (0, 1]",
        ));
    }
    Ok(per_topic.len() as f64 / per_topic.iter().map(|x| 1.0 / x).sum::<f64>())
}

/// A maximizing assignment of topics to labels.
#[derive(Debug, Clone, Serialize)]
pub struct TopicAssignment {
    /// For each topic, the label it was assigned to; None when there are
    /// more topics than labels.
    pub assignment: Vec<Option<usize>>,
    pub objective: f64,
}

/// Optimal assignment maximizing the total objective, ties broken by the
/// lexicographically smallest per-topic label vector.
pub fn hungarian_match(objective: &Array2<f64>) -> Result<TopicAssignment> {
    let (k, l) = objective.dim();
    if k == 0 || l == 0 {
        return Err(Error::schema("empty objective matrix"));
    }
    if objective.iter().any(|x| !x.is_finite()) {
        return Err(Error::schema("objective matrix must be finite"));
    }

    let base = solve_max(objective, &[])?;
    let best_value = assignment_value(objective, &base);

    // Fix rows one at a time to the smallest label index that still attains
    // the optimum; with more topics than labels a row may also stay
    // unassigned, which ranks after every label.
    let mut fixed: Vec<(usize, Option<usize>)> = Vec::new();
    for row in 0..k {
        let mut candidates: Vec<Option<usize>> = (0..l)
            .filter(|c| !fixed.iter().any(|&(_, fc)| fc == Some(*c)))
            .map(Some)
            .collect();
        if k > l {
            candidates.push(None);
        }
        let mut chosen = None;
        for cand in candidates {
            let mut trial = fixed.clone();
            trial.push((row, cand));
            if let Ok(assignment) = solve_max(objective, &trial) {
                if assignment_value(objective, &assignment) == best_value {
                    chosen = Some(cand);
                    break;
                }
            }
        }
        let col = chosen.expect("an optimal choice must exist for every row");
        fixed.push((row, col));
    }

    let mut assignment = vec![None; k];
    for &(r, c) in &fixed {
        assignment[r] = c;
    }
    Ok(TopicAssignment {
        assignment,
        objective: best_value,
    })
}

/// Sum of assigned entries in row order, so equal assignments compare
/// bitwise equal.
fn assignment_value(objective: &Array2<f64>, assignment: &[Option<usize>]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| objective[[r, c]]))
        .sum()
}

/// Kuhn-Munkres on the padded square cost matrix, with some rows forced to
/// a given column (or, with `None`, forced to stay unassigned).
fn solve_max(
    objective: &Array2<f64>,
    forced: &[(usize, Option<usize>)],
) -> Result<Vec<Option<usize>>> {
    let (k, l) = objective.dim();
    let n = k.max(l);
    let max_entry = objective.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let forbidden = (max_entry.abs() + 1.0) * (n as f64 + 1.0) * 4.0;
    // cost = max - value turns maximization into minimization; padding
    // cells cost zero; forcing a pair makes every alternative prohibitive.
    let mut cost = vec![vec![0.0f64; n]; n];
    for r in 0..k {
        for c in 0..l {
            cost[r][c] = max_entry - objective[[r, c]];
        }
    }
    for &(fr, fc) in forced {
        match fc {
            Some(fc) => {
                for c in 0..n {
                    if c != fc {
                        cost[fr][c] = forbidden;
                    }
                }
                for r in 0..n {
                    if r != fr {
                        cost[r][fc] = forbidden;
                    }
                }
            }
            None => {
                // Row may only take a padding column.
                for c in 0..l {
                    cost[fr][c] = forbidden;
                }
            }
        }
    }

    // Jonker-style shortest augmenting path implementation, 1-based.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![None; k];
    for j in 1..=n {
        let row = p[j];
        if row >= 1 && row <= k && j <= l {
            assignment[row - 1] = Some(j - 1);
        }
    }
    for &(fr, fc) in forced {
        if assignment[fr] != fc {
            return Err(Error::schema("forced pair is infeasible"));
        }
    }
    Ok(assignment)
}

/// Label-matching policy for evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchMode {
    /// Topic k corresponds to label k (keyword topics are pre-labeled).
    Fixed,
    /// Choose the correspondence maximizing total AUROC.
    Hungarian,
}

#[derive(Debug, Clone, Serialize)]
pub struct TopicReport {
    pub topic: usize,
    pub matched_label: Option<usize>,
    pub auroc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roc: Option<RocResult>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub per_topic: Vec<TopicReport>,
    /// Harmonic mean over topics with an available AUROC.
    pub aggregate: Option<f64>,
    pub assignment: Option<TopicAssignment>,
    pub warnings: Vec<String>,
}

/// One-vs-rest evaluation of document-topic scores against single gold
/// labels. Labels with no positive (or no negative) documents are reported
/// as unavailable and excluded from the aggregate.
pub fn evaluate_against_labels(
    theta: &Array2<f64>,
    gold: &[usize],
    num_labels: usize,
    mode: MatchMode,
) -> Result<EvaluationReport> {
    let (d_total, k_total) = theta.dim();
    if gold.len() != d_total {
        return Err(Error::schema("gold labels and theta rows differ in length"));
    }
    if let Some(&bad) = gold.iter().find(|&&l| l >= num_labels) {
        return Err(Error::schema(format!("gold label {bad} outside the label set")));
    }
    let mut warnings = Vec::new();
    let available: Vec<bool> = (0..num_labels)
        .map(|l| {
            let pos = gold.iter().filter(|&&g| g == l).count();
            pos > 0 && pos < d_total
        })
        .collect();

    let roc_for = |k: usize, l: usize| -> Result<RocResult> {
        let scores: Vec<f64> = (0..d_total).map(|d| theta[[d, k]]).collect();
        let labels: Vec<bool> = gold.iter().map(|&g| g == l).collect();
        roc(&scores, &labels)
    };

    let assignment = match mode {
        MatchMode::Fixed => None,
        MatchMode::Hungarian => {
            let mut objective = Array2::from_elem((k_total, num_labels), 0.5);
            for k in 0..k_total {
                for l in 0..num_labels {
                    if available[l] {
                        objective[[k, l]] = roc_for(k, l)?.auroc;
                    }
                }
            }
            Some(hungarian_match(&objective)?)
        }
    };

    let matched_label = |k: usize| -> Option<usize> {
        match (&assignment, mode) {
            (Some(a), _) => a.assignment[k],
            (None, _) => (k < num_labels).then_some(k),
        }
    };

    let mut per_topic = Vec::with_capacity(k_total);
    let mut available_scores = Vec::new();
    for k in 0..k_total {
        let label = matched_label(k);
        let entry = match label {
            Some(l) if available[l] => {
                let r = roc_for(k, l)?;
                available_scores.push(r.auroc);
                TopicReport {
                    topic: k,
                    matched_label: label,
                    auroc: Some(r.auroc),
                    roc: Some(r),
                }
            }
            Some(l) => {
                warnings.push(format!(
                    "label {l} has no usable positive/negative split; topic {k} excluded from the aggregate"
                ));
                TopicReport { topic: k, matched_label: label, auroc: None, roc: None }
            }
            None => {
                warnings.push(format!("topic {k} has no matched label"));
                TopicReport { topic: k, matched_label: None, auroc: None, roc: None }
            }
        };
        per_topic.push(entry);
    }
    let aggregate = match aggregate_auroc(&available_scores) {
        Ok(v) => Some(v),
        Err(e) => {
            warnings.push(format!("aggregate unavailable: {e}"));
            None
        }
    };
    Ok(EvaluationReport {
        per_topic,
        aggregate,
        assignment,
        warnings,
    })
}
