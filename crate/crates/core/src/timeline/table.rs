use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{
    overlap, AgentId, AgentPlan, Layer, LayerMask, PlanError, ResourceGraph, ResourceId, TimeWindow,
    TIME_EPS,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Occupation {
    pub start: f64,
    pub end: f64,
    pub owner: AgentId,
}

/// Occupations of one layer of one resource, kept sorted so that equal
/// contents compare equal regardless of insertion order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    occupations: Vec<Occupation>,
}

impl Timeline {
    pub fn occupations(&self) -> &[Occupation] {
        &self.occupations
    }

    fn insert(&mut self, occ: Occupation) {
        let key = |o: &Occupation| (o.start, o.end, o.owner);
        let at = self
            .occupations
            .partition_point(|o| key(o).partial_cmp(&key(&occ)) == Some(std::cmp::Ordering::Less));
        self.occupations.insert(at, occ);
    }

    fn remove_owner(&mut self, owner: AgentId) {
        self.occupations.retain(|o| o.owner != owner);
    }
}

/// Per-resource, per-layer occupancy plus the plans that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReservationTable {
    layers: Vec<[Timeline; 4]>,
    plans: BTreeMap<AgentId, AgentPlan>,
    generation: u64,
}

impl ReservationTable {
    pub fn new(resources: usize) -> Self {
        Self { layers: vec![Default::default(); resources], plans: BTreeMap::new(), generation: 0 }
    }

    pub fn for_graph(resources: &ResourceGraph) -> Self {
        Self::new(resources.len())
    }

    /// Bumped on every mutation; plans built at an older generation are stale.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn timeline(&self, r: ResourceId, layer: Layer) -> &Timeline {
        &self.layers[r.index()][layer as usize]
    }

    pub fn plan(&self, agent: AgentId) -> Option<&AgentPlan> {
        self.plans.get(&agent)
    }

    pub fn plans(&self) -> impl Iterator<Item = &AgentPlan> {
        self.plans.values()
    }

    pub fn agents(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.plans.keys().copied()
    }

    /// Occupied intervals of the masked layers, merged.
    pub fn busy(&self, r: ResourceId, mask: LayerMask, ignore: &BTreeSet<AgentId>) -> Vec<(f64, f64)> {
        let mut iv: Vec<(f64, f64)> = Layer::ALL
            .iter()
            .filter(|l| mask.contains(**l))
            .flat_map(|l| self.layers[r.index()][*l as usize].occupations.iter())
            .filter(|o| !ignore.contains(&o.owner))
            .map(|o| (o.start, o.end))
            .collect();
        iv.sort_by(|a, b| a.partial_cmp(b).expect("finite starts"));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(iv.len());
        for (s, e) in iv {
            match merged.last_mut() {
                Some(last) if s <= last.1 + TIME_EPS => last.1 = last.1.max(e),
                _ => merged.push((s, e)),
            }
        }
        merged
    }

    /// Complement of the merged occupancy over `[0, inf)`. Windows shorter
    /// than the time tolerance are dropped.
    pub fn free_windows(&self, r: ResourceId, mask: LayerMask, ignore: &BTreeSet<AgentId>) -> Vec<TimeWindow> {
        let mut out = Vec::new();
        let mut cursor = 0.0_f64;
        for (s, e) in self.busy(r, mask, ignore) {
            if s - cursor > TIME_EPS {
                out.push(TimeWindow::free(cursor, s));
            }
            cursor = cursor.max(e);
        }
        if cursor.is_finite() {
            out.push(TimeWindow::free(cursor, f64::INFINITY));
        }
        out
    }

    /// Whether any masked occupation of `r` overlaps `[start, end]`.
    pub fn intersects(
        &self,
        r: ResourceId,
        layer: Layer,
        start: f64,
        end: f64,
        ignore: &BTreeSet<AgentId>,
    ) -> bool {
        self.layers[r.index()][layer as usize]
            .occupations
            .iter()
            .any(|o| !ignore.contains(&o.owner) && overlap((o.start, o.end), (start, end)).is_some())
    }

    /// Writes a raw occupation. Used for human regions and forced holds.
    pub fn occupy(&mut self, r: ResourceId, layer: Layer, start: f64, end: f64, owner: AgentId) {
        self.layers[r.index()][layer as usize].insert(Occupation { start, end, owner });
        self.generation += 1;
    }

    /// Commits a plan computed against the current generation.
    pub fn reserve(&mut self, resources: &ResourceGraph, plan: AgentPlan) -> Result<(), PlanError> {
        if plan.generation != self.generation {
            return Err(PlanError::Conflict {
                agent: plan.agent,
                plan: plan.generation,
                table: self.generation,
            });
        }
        self.commit(resources, plan);
        Ok(())
    }

    /// Commits a plan without the staleness check, replacing any previous
    /// plan of the same agent.
    pub fn commit(&mut self, resources: &ResourceGraph, mut plan: AgentPlan) {
        if self.plans.contains_key(&plan.agent) {
            self.release(plan.agent);
        }
        for v in &plan.visits {
            let (s, e) = v.occupancy();
            let occ = Occupation { start: s, end: e, owner: plan.agent };
            self.layers[v.resource.index()][Layer::Physical as usize].insert(occ);
            for c in resources.conflicts(v.resource) {
                self.layers[c.index()][Layer::Conflicting as usize].insert(occ);
            }
        }
        self.generation += 1;
        plan.generation = self.generation;
        self.plans.insert(plan.agent, plan);
    }

    /// Drops every occupation and the plan of `agent`.
    pub fn release(&mut self, agent: AgentId) -> Option<AgentPlan> {
        for layers in &mut self.layers {
            for t in layers.iter_mut() {
                t.remove_owner(agent);
            }
        }
        self.generation += 1;
        self.plans.remove(&agent)
    }

    /// Parks `agent` on `held[0]` from `from` on, overriding whatever else is
    /// reserved there. Further entries are blocked as well; an agent halted
    /// between two nodes holds both.
    pub fn hold(&mut self, resources: &ResourceGraph, agent: AgentId, held: &[ResourceId], from: f64) {
        let Some((&first, rest)) = held.split_first() else { return };
        self.commit(resources, AgentPlan::parked(agent, first, from, self.generation));
        for &r in rest {
            let occ = Occupation { start: from, end: f64::INFINITY, owner: agent };
            self.layers[r.index()][Layer::Physical as usize].insert(occ);
            for c in resources.conflicts(r) {
                self.layers[c.index()][Layer::Conflicting as usize].insert(occ);
            }
        }
        self.generation += 1;
    }

    /// Drops occupations that ended before `t`.
    pub fn prune_before(&mut self, t: f64) {
        for layers in &mut self.layers {
            for tl in layers.iter_mut() {
                tl.occupations.retain(|o| o.end >= t);
            }
        }
    }

    /// Agents whose physical or conflicting occupations overlap those of
    /// `agent`.
    pub fn conflicting_agents(&self, agent: AgentId) -> BTreeSet<AgentId> {
        let mut out = BTreeSet::new();
        for layers in &self.layers {
            let phys = &layers[Layer::Physical as usize].occupations;
            let conf = &layers[Layer::Conflicting as usize].occupations;
            for mine in phys.iter().filter(|o| o.owner == agent) {
                for other in phys.iter().chain(conf.iter()).filter(|o| o.owner != agent) {
                    if overlap((mine.start, mine.end), (other.start, other.end)).is_some() {
                        out.insert(other.owner);
                    }
                }
            }
        }
        out
    }

    /// Same occupancy and plans, ignoring the generation counter.
    pub fn same_contents(&self, other: &ReservationTable) -> bool {
        self.layers == other.layers && self.plans == other.plans
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeId;

    fn table_with(occ: &[(Layer, f64, f64)]) -> ReservationTable {
        let mut t = ReservationTable::new(1);
        for (i, &(l, s, e)) in occ.iter().enumerate() {
            t.occupy(NodeId(0), l, s, e, AgentId::Robot(i as u32));
        }
        t
    }

    fn windows(t: &ReservationTable, mask: LayerMask) -> Vec<(f64, f64)> {
        t.free_windows(NodeId(0), mask, &BTreeSet::new()).iter().map(|w| (w.start, w.end)).collect()
    }

    #[test]
    fn merged_layers() {
        let t = table_with(&[(Layer::Physical, 2.0, 4.0), (Layer::Conflicting, 3.0, 6.0)]);
        assert_eq!(windows(&t, LayerMask::ROBOT), vec![(0.0, 2.0), (6.0, f64::INFINITY)]);
        assert_eq!(windows(&t, LayerMask::PHYSICAL), vec![(0.0, 2.0), (4.0, f64::INFINITY)]);
        assert_eq!(windows(&t, LayerMask::SAFETY3), vec![(0.0, f64::INFINITY)]);
    }

    #[test]
    fn touching_occupations_leave_no_sliver() {
        let t = table_with(&[(Layer::Physical, 0.0, 1.0), (Layer::Physical, 1.0, 2.0)]);
        assert_eq!(windows(&t, LayerMask::ROBOT), vec![(2.0, f64::INFINITY)]);
        let t = table_with(&[(Layer::Physical, 1.0, f64::INFINITY)]);
        assert_eq!(windows(&t, LayerMask::ROBOT), vec![(0.0, 1.0)]);
    }

    #[test]
    fn ignore_and_prune() {
        let mut t = table_with(&[(Layer::Physical, 1.0, 2.0), (Layer::Safety2, 5.0, 7.0)]);
        let ignore: BTreeSet<_> = [AgentId::Robot(1)].into();
        let w = t.free_windows(NodeId(0), LayerMask::ROBOT, &ignore);
        assert_eq!(w.len(), 2);
        t.prune_before(3.0);
        assert_eq!(windows(&t, LayerMask::ROBOT), vec![(0.0, 5.0), (7.0, f64::INFINITY)]);
    }
}
