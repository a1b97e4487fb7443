use std::fmt;
use std::str::FromStr;

use crate::losses::ConfidenceSource;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MethodKind {
    NoAdapt,
    Dann,
    /// `T` trained on source data weighted by a confidence score.
    Instance,
    /// Pseudo-labels without the adversarial update of `F`.
    PseudoNoAdv,
    /// DANN plus pseudo-label training of `T`.
    Pseudo,
}

/// Which classifier is evaluated on the target test split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EvalHead {
    Task,
    Target,
}

impl EvalHead {
    pub fn tag(self) -> &'static str {
        match self {
            EvalHead::Task => "C",
            EvalHead::Target => "T",
        }
    }
}

/// A training procedure plus the head used for evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Method {
    pub kind: MethodKind,
    pub confidence: Option<ConfidenceSource>,
    pub eval_head: EvalHead,
}

impl Method {
    pub const NO_ADAPT: Method = Method {
        kind: MethodKind::NoAdapt,
        confidence: None,
        eval_head: EvalHead::Task,
    };
    pub const DANN: Method = Method {
        kind: MethodKind::Dann,
        confidence: None,
        eval_head: EvalHead::Task,
    };

    pub const fn instance(c: ConfidenceSource) -> Method {
        Method {
            kind: MethodKind::Instance,
            confidence: Some(c),
            eval_head: EvalHead::Target,
        }
    }

    pub const fn pseudo_no_adv(c: ConfidenceSource) -> Method {
        Method {
            kind: MethodKind::PseudoNoAdv,
            confidence: Some(c),
            eval_head: EvalHead::Target,
        }
    }

    /// Pseudo-label training, evaluated with the source classifier `C`.
    pub const fn pseudo_task_c(c: ConfidenceSource) -> Method {
        Method {
            kind: MethodKind::Pseudo,
            confidence: Some(c),
            eval_head: EvalHead::Task,
        }
    }

    pub const fn pseudo(c: ConfidenceSource) -> Method {
        Method {
            kind: MethodKind::Pseudo,
            confidence: Some(c),
            eval_head: EvalHead::Target,
        }
    }

    /// The ten rows of the results table, in display order.
    pub fn table_rows() -> Vec<Method> {
        use ConfidenceSource::{DomainDisc, TaskSoftmax};
        let mut rows = vec![Method::NO_ADAPT, Method::DANN];
        for make in [
            Method::instance as fn(ConfidenceSource) -> Method,
            Method::pseudo_no_adv,
            Method::pseudo_task_c,
            Method::pseudo,
        ] {
            rows.push(make(TaskSoftmax));
            rows.push(make(DomainDisc));
        }
        rows
    }

    /// `Err` describes why the combination is not runnable.
    pub fn validate(&self) -> Result<(), String> {
        match (self.kind, self.confidence) {
            (MethodKind::NoAdapt | MethodKind::Dann, Some(_)) => {
                Err(format!("{} takes no confidence source", self.base_id()))
            }
            (MethodKind::NoAdapt | MethodKind::Dann, None) => match self.eval_head {
                EvalHead::Task => Ok(()),
                EvalHead::Target => Err(format!("{} never trains T", self.base_id())),
            },
            (_, None) => Err(format!("{} needs a confidence source", self.base_id())),
            (_, Some(_)) => Ok(()),
        }
    }

    fn base_id(&self) -> &'static str {
        match (self.kind, self.eval_head) {
            (MethodKind::NoAdapt, _) => "no-adapt",
            (MethodKind::Dann, _) => "dann",
            (MethodKind::Instance, _) => "instance",
            (MethodKind::PseudoNoAdv, _) => "pseudo-noadv",
            (MethodKind::Pseudo, EvalHead::Task) => "pseudo-taskc",
            (MethodKind::Pseudo, EvalHead::Target) => "pseudo",
        }
    }

    /// Stable identifier, e.g. `pseudo-taskc-domain`.
    pub fn id(&self) -> String {
        let base = self.base_id();
        let mut id = match self.confidence {
            Some(c) => format!("{base}-{}", c.tag()),
            None => base.to_string(),
        };
        let default_head = match self.kind {
            MethodKind::NoAdapt | MethodKind::Dann => EvalHead::Task,
            MethodKind::Pseudo => self.eval_head,
            _ => EvalHead::Target,
        };
        if self.eval_head != default_head {
            id.push_str(&format!("@{}", self.eval_head.tag()));
        }
        id
    }

    /// Row label for reports, e.g. `Pseudo-TaskC (domain)`.
    pub fn label(&self) -> String {
        let base = match (self.kind, self.eval_head) {
            (MethodKind::NoAdapt, _) => "No Adaptation",
            (MethodKind::Dann, _) => "DANN",
            (MethodKind::Instance, _) => "Instance",
            (MethodKind::PseudoNoAdv, _) => "Pseudo-NoAdv",
            (MethodKind::Pseudo, EvalHead::Task) => "Pseudo-TaskC",
            (MethodKind::Pseudo, EvalHead::Target) => "Pseudo",
        };
        match self.confidence {
            Some(c) => format!("{base} ({})", c.tag()),
            None => base.to_string(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for Method {
    type Err = String;

    /// Accepts the output of [`Method::id`]; a trailing `@C` or `@T`
    /// overrides the evaluation head.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (body, head) = match s.trim().split_once('@') {
            Some((b, "C")) => (b, Some(EvalHead::Task)),
            Some((b, "T")) => (b, Some(EvalHead::Target)),
            Some((_, h)) => return Err(format!("unknown evaluation head `{h}`")),
            None => (s.trim(), None),
        };
        let (base, confidence) = if let Some(b) = body.strip_suffix("-task") {
            (b, Some(ConfidenceSource::TaskSoftmax))
        } else if let Some(b) = body.strip_suffix("-domain") {
            (b, Some(ConfidenceSource::DomainDisc))
        } else {
            (body, None)
        };
        let mut method = match (base, confidence) {
            ("no-adapt", None) => Method::NO_ADAPT,
            ("dann", None) => Method::DANN,
            ("instance", Some(c)) => Method::instance(c),
            ("pseudo-noadv", Some(c)) => Method::pseudo_no_adv(c),
            ("pseudo-taskc", Some(c)) => Method::pseudo_task_c(c),
            ("pseudo", Some(c)) => Method::pseudo(c),
            _ => return Err(format!("unknown method `{s}`")),
        };
        if let Some(h) = head {
            method.eval_head = h;
        }
        method.validate()?;
        Ok(method)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_distinct_rows_round_trip() {
        let rows = Method::table_rows();
        assert_eq!(rows.len(), 10);
        for (i, m) in rows.iter().enumerate() {
            assert_eq!(m.id().parse::<Method>().unwrap(), *m);
            assert!(m.validate().is_ok());
            for other in &rows[i + 1..] {
                assert_ne!(m.id(), other.id());
            }
        }
        assert_eq!(rows[0].label(), "No Adaptation");
        assert_eq!(rows[7].id(), "pseudo-taskc-domain");
        assert_eq!(rows[7].label(), "Pseudo-TaskC (domain)");
        assert_eq!(rows[9].eval_head, EvalHead::Target);
    }

    #[test]
    fn head_override_and_rejections() {
        let m: Method = "instance-task@C".parse().unwrap();
        assert_eq!(m.eval_head, EvalHead::Task);
        assert_eq!(m.id(), "instance-task@C");
        assert_eq!(m.id().parse::<Method>().unwrap(), m);
        assert!("dann@T".parse::<Method>().is_err());
        assert!("dann-task".parse::<Method>().is_err());
        assert!("pseudo".parse::<Method>().is_err());
        assert!("pseudo-domain@X".parse::<Method>().is_err());
    }
}
