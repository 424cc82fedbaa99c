//! Margin checkers for the eigenvalue inequalities satisfied by admissible spectra.
//!
//! Every clause is reduced to a signed margin (positive means satisfied with
//! slack). A clause passes iff `margin >= -tol`, with `tol` the
//! [`Spectrum::tolerance`] of the witness.

use serde::Serialize;

use super::{elementary_symmetric, phase, sigma2_margin, ConeSpec, Spectrum};

/// Below this value of λ_2 the rearranged clause of the σ_2 family divides by ~0 and is skipped.
pub const DEGENERATE_GAP: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClauseStatus {
    /// Counts towards the report verdict.
    Asserted,
    /// Evaluated and reported, excluded from the verdict.
    Recorded,
    /// Not evaluated: the expression is undefined at this witness.
    SkippedDegenerate,
}

impl ClauseStatus {
    fn is_asserted(&self) -> bool {
        *self == ClauseStatus::Asserted
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClauseOutcome {
    pub id: String,
    pub margin: Option<f64>,
    pub pass: bool,
    #[serde(skip_serializing_if = "ClauseStatus::is_asserted")]
    pub status: ClauseStatus,
}

/// Serializes as `{lemma, hypothesis_met, clauses: [{id, margin, pass}], witness, tol}`.
#[derive(Debug, Clone, Serialize)]
pub struct LemmaReport {
    pub lemma: String,
    pub hypothesis_met: bool,
    pub clauses: Vec<ClauseOutcome>,
    pub witness: Vec<f64>,
    pub tol: f64,
}

impl LemmaReport {
    fn new(lemma: &str, s: &Spectrum, hypothesis_met: bool) -> Self {
        LemmaReport {
            lemma: lemma.to_string(),
            hypothesis_met,
            clauses: Vec::new(),
            witness: s.values().to_vec(),
            tol: s.tolerance(),
        }
    }

    fn push(&mut self, id: &str, margin: f64, status: ClauseStatus) {
        self.clauses.push(ClauseOutcome {
            id: id.to_string(),
            margin: Some(margin),
            pass: margin >= -self.tol,
            status,
        });
    }

    fn assert(&mut self, id: &str, margin: f64) {
        self.push(id, margin, ClauseStatus::Asserted);
    }

    fn skip(&mut self, id: &str) {
        self.clauses.push(ClauseOutcome {
            id: id.to_string(),
            margin: None,
            pass: true,
            status: ClauseStatus::SkippedDegenerate,
        });
    }

    /// Asserted clauses that fail while the hypotheses hold.
    pub fn violations(&self) -> impl Iterator<Item = &ClauseOutcome> {
        let active = self.hypothesis_met;
        self.clauses.iter().filter(move |c| active && c.status == ClauseStatus::Asserted && !c.pass)
    }

    /// True when the hypotheses fail or every asserted clause passes.
    pub fn passed(&self) -> bool {
        self.violations().next().is_none()
    }

    pub fn clause(&self, id: &str) -> Option<&ClauseOutcome> {
        self.clauses.iter().find(|c| c.id == id)
    }
}

/// Bounds on spectra in the canonical cone with nonnegative phase.
///
/// Clauses: `a.1` λ_1 + ((n-2)/2 + 1) λ_n ≥ 0, `a.2` λ_i + λ_n ≥ 0 for i < n,
/// `b` λ_1(λ_i + λ_j) ≥ 2 λ_i λ_j, `c` |∂σ_k/∂λ_i| ≤ n(n-1) σ_{k-1} for k < n.
/// Each reports the worst margin over its index range.
pub fn check_lemma_general(s: &Spectrum, cone: &ConeSpec) -> LemmaReport {
    let n = s.len();
    let hypothesis = n >= 3 && cone.n == n && super::in_gamma_cone(s, cone) && phase(s) >= 0.0;
    let mut report = LemmaReport::new("cone-eigenvalue-bounds", s, hypothesis);
    if n < 3 {
        return report;
    }
    let v = s.values();
    let c = (n as f64 - 2.0) / 2.0;
    let last = v[n - 1];

    report.assert("a.1", v[0] + (c + 1.0) * last);
    let a2 = v[..n - 1].iter().map(|x| x + last).fold(f64::INFINITY, f64::min);
    report.assert("a.2", a2);

    let mut b = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            b = b.min(v[0] * (v[i] + v[j]) - 2.0 * v[i] * v[j]);
        }
    }
    report.assert("b", b);

    let full = elementary_symmetric(v, n);
    let mut cm = f64::INFINITY;
    let factor = (n * (n - 1)) as f64;
    for i in 0..n {
        let rest: Vec<f64> = v.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &x)| x).collect();
        let partial = elementary_symmetric(&rest, n - 2);
        for k in 1..n {
            cm = cm.min(factor * full[k - 1] - partial[k - 1].abs());
        }
    }
    report.assert("c", cm);
    report
}

fn sigma2_hypothesis(s: &Spectrum, eps: f64) -> bool {
    s.len() == 3 && eps > 0.0 && sigma2_margin(s, eps) >= 0.0 && phase(s) >= 0.0
}

/// Bounds on three eigenvalues with `σ_2 ≥ (3/5 - ε) λ_2 λ_3` and nonnegative phase.
///
/// For λ_2 ≥ 0: `pos.a1` λ_1 ≥ (-7/5 - ε - λ_1/λ_2) λ_3 (recorded only, and
/// skipped when λ_2 ≤ [`DEGENERATE_GAP`]), `pos.a2` λ_2 + λ_3 ≥ 0,
/// `pos.b` λ_1(λ_2 + λ_3) ≥ 2 λ_2 λ_3, `pos.c` σ_1 ≥ λ_1.
/// For λ_2 < 0: `neg.a` 0 < λ_1 < max(1, ε), `neg.b` σ_1 ≥ 0,
/// `neg.c` |λ_2|, |λ_3| ≤ λ_1.
pub fn check_lemma_n3(s: &Spectrum, eps: f64) -> LemmaReport {
    let mut report = LemmaReport::new("sigma2-eigenvalue-bounds", s, sigma2_hypothesis(s, eps));
    if s.len() != 3 {
        return report;
    }
    let &[l1, l2, l3] = s.values() else { unreachable!() };
    if l2 >= 0.0 {
        if l2 > DEGENERATE_GAP {
            // The -7/5 constant is kept as stated; it fails on admissible points such as
            // (1, 1, -1/2) with eps = 0.1, so the clause is reported but not asserted.
            report.push("pos.a1", l1 - (-1.4 - eps - l1 / l2) * l3, ClauseStatus::Recorded);
        } else {
            report.skip("pos.a1");
        }
        report.assert("pos.a2", l2 + l3);
        report.assert("pos.b", l1 * (l2 + l3) - 2.0 * l2 * l3);
        report.assert("pos.c", (l1 + l2 + l3) - l1);
    } else {
        report.assert("neg.a", l1.min(eps.max(1.0) - l1));
        report.assert("neg.b", l1 + l2 + l3);
        report.assert("neg.c", (l1 - l2.abs()).min(l1 - l3.abs()));
    }
    report
}

/// `1 / (2/5 + ε)`, the factor in `|λ_2| ≥ |λ_3| / (2/5 + ε)`.
pub fn ratio_bound_factor(eps: f64) -> f64 {
    1.0 / (0.4 + eps)
}

/// `|λ_2| ≥ |λ_3| / (2/5 + ε)` when λ_2 < 0 under the σ_2 hypothesis.
///
/// The margin is computed even when the hypothesis fails, so the report
/// doubles as a probe of the factor itself.
pub fn check_ratio_bound(s: &Spectrum, eps: f64) -> LemmaReport {
    let hypothesis = sigma2_hypothesis(s, eps) && s.values()[1] < 0.0;
    let mut report = LemmaReport::new("sigma2-ratio-bound", s, hypothesis);
    if s.len() != 3 {
        return report;
    }
    let v = s.values();
    report.assert("ratio", v[1].abs() - v[2].abs() * ratio_bound_factor(eps));
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(v: &[f64]) -> Spectrum {
        Spectrum::new(v.to_vec()).unwrap()
    }

    #[test]
    fn general_lemma_interior_point() {
        let r = check_lemma_general(&sp(&[2.0, 1.0, 1.0]), &ConeSpec::canonical(3).unwrap());
        assert!(r.hypothesis_met);
        assert_eq!(r.clauses.len(), 4);
        assert!(r.clauses.iter().all(|c| c.pass), "{r:?}");
    }

    #[test]
    fn general_lemma_symmetric_point_is_on_the_boundary_of_b() {
        let r = check_lemma_general(&sp(&[1.0, 1.0, 1.0]), &ConeSpec::canonical(3).unwrap());
        // (i, j) = (2, 3): 1 * (1 + 1) - 2 * 1 * 1 = 0
        assert_eq!(r.clause("b").unwrap().margin, Some(0.0));
        assert!(r.passed());
    }

    #[test]
    fn general_lemma_flags_unmet_hypothesis() {
        let r = check_lemma_general(&sp(&[1.0, 1.0, -5.0]), &ConeSpec::canonical(3).unwrap());
        assert!(!r.hypothesis_met);
        assert!(r.passed());
        let r = check_lemma_general(&sp(&[1.0, 1.0]), &ConeSpec::canonical(2).unwrap());
        assert!(!r.hypothesis_met);
        assert!(r.clauses.is_empty());
    }

    #[test]
    fn n3_lemma_positive_branch() {
        let r = check_lemma_n3(&sp(&[1.0, 1.0, 1.0]), 1.0);
        assert!(r.hypothesis_met);
        assert!(r.clauses.iter().all(|c| c.pass));
        assert!(r.clause("neg.a").is_none());
    }

    #[test]
    fn n3_lemma_recorded_clause_counterexample() {
        // admissible: σ_2 = 0 ≥ 0.5 * (1)(-1/2), phase = π/2 - atan(1/2) > 0
        let r = check_lemma_n3(&sp(&[1.0, 1.0, -0.5]), 0.1);
        assert!(r.hypothesis_met);
        let a1 = r.clause("pos.a1").unwrap();
        assert_eq!(a1.status, ClauseStatus::Recorded);
        assert!((a1.margin.unwrap() + 0.25).abs() < 1e-12);
        assert!(!a1.pass);
        assert!(r.passed(), "recorded clauses do not decide the verdict");
    }

    #[test]
    fn n3_lemma_degenerate_gap_is_skipped() {
        let r = check_lemma_n3(&sp(&[2.0, 0.0, 0.0]), 1.0);
        let a1 = r.clause("pos.a1").unwrap();
        assert_eq!(a1.status, ClauseStatus::SkippedDegenerate);
        assert_eq!(a1.margin, None);
    }

    #[test]
    fn n3_lemma_negative_branch_hypothesis_filter() {
        // (0.5, -0.1, -0.3) violates the σ_2 hypothesis for eps = 1; the branch is still evaluated.
        let r = check_lemma_n3(&sp(&[0.5, -0.1, -0.3]), 1.0);
        assert!(!r.hypothesis_met);
        assert!(r.clause("neg.a").unwrap().pass);
        // large eps admits negative λ_2: σ_2 = -0.36 ≥ (0.6 - 5)(0.09)
        let r = check_lemma_n3(&sp(&[0.75, -0.3, -0.3]), 5.0);
        assert!(r.hypothesis_met);
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn ratio_factor_values() {
        assert!((ratio_bound_factor(0.1) - 2.0).abs() < 1e-15);
        assert!((ratio_bound_factor(0.6) - 1.0).abs() < 1e-15);
        let r = check_ratio_bound(&sp(&[0.5, -0.2, -0.2]), 0.1);
        assert!((r.clauses[0].margin.unwrap() + 0.2).abs() < 1e-15);
        let r = check_ratio_bound(&sp(&[0.5, -0.3, -0.3]), 0.6);
        assert_eq!(r.clauses[0].margin, Some(0.0));
        assert!(r.clauses[0].pass);
    }

    #[test]
    fn report_json_shape() {
        let r = check_lemma_n3(&sp(&[2.0, 0.0, 0.0]), 1.0);
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["lemma"], "sigma2-eigenvalue-bounds");
        assert_eq!(v["clauses"][0]["status"], "skipped-degenerate");
        assert!(v["clauses"][1].get("status").is_none());
        assert_eq!(v["witness"], serde_json::json!([2.0, 0.0, 0.0]));
    }
}
