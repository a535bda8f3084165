//! Machine-readable verdicts.

use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quantity {
    pub name: String,
    pub value: f64,
    pub uncertainty: f64,
}

/// Outcome of one check.
///
/// `margin` is signed so that positive means the inequality holds. The
/// verdict is `Pass` iff `margin >= -uncertainty`; `certified` additionally
/// requires `margin - uncertainty >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    pub lemma_id: String,
    pub inputs: Map<String, Value>,
    pub computed: Vec<Quantity>,
    pub bound: f64,
    pub margin: f64,
    pub uncertainty: f64,
    pub verdict: Verdict,
    pub certified: bool,
    /// `false` if some quadrature stopped before reaching its tolerance.
    pub tolerance_met: bool,
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sections: Vec<LemmaReport>,
}

impl LemmaReport {
    pub fn new(lemma_id: impl Into<String>) -> Self {
        Self {
            lemma_id: lemma_id.into(),
            inputs: Map::new(),
            computed: Vec::new(),
            bound: f64::NAN,
            margin: f64::NAN,
            uncertainty: 0.0,
            verdict: Verdict::Rejected,
            certified: false,
            tolerance_met: true,
            notes: Vec::new(),
            sections: Vec::new(),
        }
    }

    pub fn input(mut self, key: &str, value: impl Serialize) -> Self {
        self.inputs.insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
        self
    }

    pub fn quantity(&mut self, name: impl Into<String>, value: f64, uncertainty: f64) {
        self.computed.push(Quantity { name: name.into(), value, uncertainty });
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn with_note(mut self, text: impl Into<String>) -> Self {
        self.note(text);
        self
    }

    /// Sets bound, margin and uncertainty and derives the verdict.
    pub fn conclude(mut self, bound: f64, margin: f64, uncertainty: f64) -> Self {
        self.bound = bound;
        self.margin = margin;
        self.uncertainty = uncertainty;
        self.verdict = if margin >= -uncertainty { Verdict::Pass } else { Verdict::Fail };
        self.certified = margin - uncertainty >= 0.0;
        if !self.tolerance_met {
            self.notes.push("tolerance not met; values are best estimates".into());
        }
        self
    }

    pub fn reject(mut self, reason: impl Into<String>) -> Self {
        self.verdict = Verdict::Rejected;
        self.certified = false;
        self.notes.push(reason.into());
        self
    }

    /// Wraps sub-checks: passes iff every section passes; the margin is the
    /// smallest section margin.
    pub fn from_sections(lemma_id: impl Into<String>, sections: Vec<LemmaReport>) -> Self {
        let mut r = LemmaReport::new(lemma_id);
        if sections.iter().any(|s| s.verdict == Verdict::Rejected) {
            r.verdict = Verdict::Rejected;
            r.tolerance_met = sections.iter().all(|s| s.tolerance_met);
            r.sections = sections;
            r.notes.push("a section was rejected".into());
            return r;
        }
        let worst = sections.iter().min_by(|a, b| (a.margin + a.uncertainty).total_cmp(&(b.margin + b.uncertainty)));
        let (bound, margin, unc) = worst.map_or((f64::NAN, 0.0, 0.0), |w| (w.bound, w.margin, w.uncertainty));
        r.tolerance_met = sections.iter().all(|s| s.tolerance_met);
        let pass = sections.iter().all(|s| s.verdict == Verdict::Pass);
        let certified = sections.iter().all(|s| s.certified);
        r.sections = sections;
        r = r.conclude(bound, margin, unc);
        r.verdict = if pass { Verdict::Pass } else { Verdict::Fail };
        r.certified = certified;
        r
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_uses_widened_margin() {
        let r = LemmaReport::new("x").conclude(1.0, -1e-9, 2e-9);
        assert!(r.passed() && !r.certified);
        let r = LemmaReport::new("x").conclude(1.0, -3e-9, 2e-9);
        assert_eq!(r.verdict, Verdict::Fail);
        let r = LemmaReport::new("x").conclude(1.0, 3e-9, 2e-9);
        assert!(r.certified);
    }

    #[test]
    fn sections_aggregate() {
        let a = LemmaReport::new("a").conclude(0.0, 0.1, 0.0);
        let b = LemmaReport::new("b").conclude(0.0, -0.1, 0.0);
        let all = LemmaReport::from_sections("ab", vec![a.clone(), b]);
        assert_eq!(all.verdict, Verdict::Fail);
        assert_eq!(all.margin, -0.1);
        let ok = LemmaReport::from_sections("aa", vec![a.clone(), a]);
        assert!(ok.passed());
        let json = serde_json::to_value(&ok).unwrap();
        assert_eq!(json["verdict"], "pass");
        assert_eq!(json["sections"].as_array().unwrap().len(), 2);
    }
}
