use super::TrialRecord;

/// `a` dominates `b` when it is no worse in both objectives and better in one.
pub fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.0 && a.1 <= b.1 && (a.0 < b.0 || a.1 < b.1)
}

/// Records not dominated in `(QE_T, QE_H)`, ordered by trial index.
pub fn pareto_front(records: &[TrialRecord]) -> Vec<TrialRecord> {
    let mut order: Vec<&TrialRecord> = records.iter().collect();
    // lexicographic sweep: after sorting by (QE_T, QE_H), a record is on the front
    // iff its QE_H is below every QE_H seen at a strictly smaller QE_T
    order.sort_by(|a, b| {
        a.qe_train
            .total_cmp(&b.qe_train)
            .then(a.qe_holdout.total_cmp(&b.qe_holdout))
    });
    let mut front = Vec::new();
    let mut best_h = f64::INFINITY;
    let mut i = 0;
    while i < order.len() {
        let qt = order[i].qe_train;
        let mut j = i;
        while j < order.len() && order[j].qe_train == qt {
            j += 1;
        }
        let group_min = order[i].qe_holdout;
        if group_min < best_h {
            front.extend(order[i..j].iter().filter(|r| r.qe_holdout == group_min).map(|r| (*r).clone()));
            best_h = group_min;
        }
        i = j;
    }
    front.sort_by_key(|r| (r.seed, r.trial_index));
    front
}
