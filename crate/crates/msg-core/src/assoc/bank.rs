//! Per-scene memory bank of object prototype embeddings.
//!
//! How a prototype absorbs a newly matched observation is a pluggable
//! strategy: implementations of [`PrototypeUpdate`] are registered by name
//! and selected at runtime through [`AssocConfig::bank_update`].
//!
//! [`AssocConfig::bank_update`]: super::AssocConfig::bank_update

use nalgebra::DVector;

use crate::graph::ObjectId;

/// An update rule folding a unit-norm observation into a unit-norm prototype
/// that has already absorbed `count` observations.
pub trait PrototypeUpdate: Send + Sync {
    fn name(&self) -> &'static str;
    fn update(&self, prototype: &DVector<f64>, count: usize, observation: &DVector<f64>)
        -> DVector<f64>;
}

/// Count-weighted running mean, re-normalized:
/// `normalize((count * prototype + observation) / (count + 1))`.
pub struct RunningMean;

impl PrototypeUpdate for RunningMean {
    fn name(&self) -> &'static str {
        "running_mean"
    }

    fn update(
        &self,
        prototype: &DVector<f64>,
        count: usize,
        observation: &DVector<f64>,
    ) -> DVector<f64> {
        let blended = (prototype * count as f64 + observation) / (count as f64 + 1.0);
        let norm = blended.norm();
        if norm > 0.0 {
            blended / norm
        } else {
            // Exactly antipodal observation; keep the previous prototype.
            prototype.clone()
        }
    }
}

/// The latest observation replaces the prototype outright.
pub struct Replace;

impl PrototypeUpdate for Replace {
    fn name(&self) -> &'static str {
        "replace"
    }

    fn update(&self, _: &DVector<f64>, _: usize, observation: &DVector<f64>) -> DVector<f64> {
        observation.clone()
    }
}

type UpdateFactory = fn() -> Box<dyn PrototypeUpdate>;

const UPDATE_RULES: &[(&str, UpdateFactory)] = &[
    ("running_mean", || Box::new(RunningMean)),
    ("replace", || Box::new(Replace)),
];

/// Looks up an update rule by its registered name.
pub fn update_rule(name: &str) -> Option<Box<dyn PrototypeUpdate>> {
    UPDATE_RULES
        .iter()
        .find(|(registered, _)| *registered == name)
        .map(|(_, factory)| factory())
}

pub fn update_rule_names() -> Vec<&'static str> {
    UPDATE_RULES.iter().map(|(name, _)| *name).collect()
}

/// One tracked object: its assigned id, unit-norm prototype, and how many
/// observations the prototype has absorbed.
#[derive(Debug, Clone, PartialEq)]
pub struct BankEntry {
    pub id: ObjectId,
    pub prototype: DVector<f64>,
    pub count: usize,
}

/// Ordered store of object prototypes for one scene. Ids are minted
/// sequentially in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemoryBank {
    entries: Vec<BankEntry>,
}

impl MemoryBank {
    pub fn new() -> Self {
        MemoryBank { entries: Vec::new() }
    }

    pub fn entries(&self) -> &[BankEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Registers a new object with the given unit-norm prototype and returns
    /// its freshly minted id.
    pub fn register(&mut self, prototype: DVector<f64>) -> ObjectId {
        let id = ObjectId(self.entries.len() as u32);
        self.entries.push(BankEntry { id, prototype, count: 1 });
        id
    }

    /// Folds an observation into an existing entry using the given rule.
    pub fn absorb(
        &mut self,
        index: usize,
        observation: &DVector<f64>,
        rule: &dyn PrototypeUpdate,
    ) -> ObjectId {
        let entry = &mut self.entries[index];
        entry.prototype = rule.update(&entry.prototype, entry.count, observation);
        entry.count += 1;
        entry.id
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit(values: &[f64]) -> DVector<f64> {
        let v = DVector::from_row_slice(values);
        let n = v.norm();
        v / n
    }

    #[test]
    fn registry_resolves_known_names_only() {
        assert!(update_rule("running_mean").is_some());
        assert!(update_rule("replace").is_some());
        assert!(update_rule("nonsense").is_none());
        assert_eq!(update_rule_names(), vec!["running_mean", "replace"]);
    }

    #[test]
    fn running_mean_weights_by_count() {
        let rule = RunningMean;
        let prototype = unit(&[1.0, 0.0]);
        let observation = unit(&[0.0, 1.0]);
        let updated = rule.update(&prototype, 3, &observation);
        // Direction of (3, 1), normalized.
        let expected = unit(&[3.0, 1.0]);
        assert_relative_eq!((updated - expected).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn replace_forgets_history() {
        let rule = Replace;
        let observation = unit(&[0.0, 1.0]);
        let updated = rule.update(&unit(&[1.0, 0.0]), 10, &observation);
        assert_eq!(updated, observation);
    }

    #[test]
    fn bank_mints_sequential_ids() {
        let mut bank = MemoryBank::new();
        assert_eq!(bank.register(unit(&[1.0, 0.0])), ObjectId(0));
        assert_eq!(bank.register(unit(&[0.0, 1.0])), ObjectId(1));
        assert_eq!(bank.len(), 2);
        let rule = RunningMean;
        assert_eq!(bank.absorb(0, &unit(&[1.0, 0.0]), &rule), ObjectId(0));
        assert_eq!(bank.entries()[0].count, 2);
    }
}
