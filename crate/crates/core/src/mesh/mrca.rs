//! Ring emulation on a line of CUs without a wrap-around link.
//!
//! Chunks travel as two progress waves (one up, one down the line). Halfway
//! through, every sender keeps a local copy of what it sends, and from then on
//! reflux tides carry those copies back towards the CUs the waves can no
//! longer reach. CU and chunk ids are 1-based; CU `i` starts out holding
//! chunk `i`.
//!
//! The schedule only fixes the sends. Which held chunk a CU computes at each
//! step is a separate matching problem ([`assign_compute`]), and what a CU
//! keeps in storage follows from both: a chunk is kept while it still has to
//! be sent or computed there.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SendKind {
    WaveUp,
    WaveDown,
    RefluxUp,
    RefluxDown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SendEvent {
    pub src: usize,
    pub dest: usize,
    pub chunk: usize,
    pub kind: SendKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MrcaStep {
    pub t: usize,
    pub sends: Vec<SendEvent>,
    /// Senders keep their copies at this step.
    pub replicate: bool,
}

/// `plan[cu - 1][t - 1]` is the chunk CU `cu` computes at step `t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComputePlan {
    pub plan: Vec<Vec<usize>>,
}

impl ComputePlan {
    pub fn chunk(&self, cu: usize, t: usize) -> usize {
        self.plan[cu - 1][t - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MrcaSchedule {
    pub n: usize,
    pub steps: Vec<MrcaStep>,
    /// `None` when no compute bijection exists.
    pub compute: Option<ComputePlan>,
}

/// The step at which senders replicate: `floor(N/2) + 1`.
pub fn replication_step(n: usize) -> usize {
    n / 2 + 1
}

/// Sends issued at step `t` of a ring of `n` CUs.
pub fn step_sends(n: usize, t: usize) -> Vec<SendEvent> {
    let h = n / 2;
    let mut out = Vec::new();
    for src in 1..=n {
        if t <= src && src < n {
            out.push(SendEvent {
                src,
                dest: src + 1,
                chunk: src + 1 - t,
                kind: SendKind::WaveUp,
            });
        }
        if 1 < src && src + t <= n + 1 {
            out.push(SendEvent {
                src,
                dest: src - 1,
                chunk: src + t - 1,
                kind: SendKind::WaveDown,
            });
        }
        if t > h + 1 {
            if t <= src + h && src < t {
                out.push(SendEvent {
                    src,
                    dest: src + 1,
                    chunk: src + n + 1 - t,
                    kind: SendKind::RefluxUp,
                });
            }
            if n + 1 < src + t && src + t <= n + 1 + h {
                out.push(SendEvent {
                    src,
                    dest: src - 1,
                    chunk: src + t - n - 1,
                    kind: SendKind::RefluxDown,
                });
            }
        }
    }
    out
}

/// Builds the `n`-step schedule and, when one exists, its compute plan.
pub fn mrca_schedule(n: usize) -> Result<MrcaSchedule> {
    if n == 0 {
        return Err(invalid("ring length must be at least 1"));
    }
    let steps = (1..=n)
        .map(|t| MrcaStep {
            t,
            sends: step_sends(n, t),
            replicate: t == replication_step(n),
        })
        .collect();
    let mut sched = MrcaSchedule {
        n,
        steps,
        compute: None,
    };
    match assign_compute(&sched) {
        Ok(plan) => sched.compute = Some(plan),
        Err(e) => log::info!("ring of {n}: {e}"),
    }
    Ok(sched)
}

impl MrcaSchedule {
    /// Chunks present at each CU at the start of each step, replayed from the
    /// sends: `avail[t - 1][cu - 1]`.
    ///
    /// A send of a chunk the source does not have delivers nothing.
    pub fn availability(&self) -> Vec<Vec<BTreeSet<usize>>> {
        let n = self.n;
        let mut hold: Vec<BTreeSet<usize>> = (1..=n).map(|i| BTreeSet::from([i])).collect();
        let mut out = Vec::with_capacity(self.steps.len());
        for step in &self.steps {
            out.push(hold.clone());
            let mut next = hold.clone();
            for s in &step.sends {
                if !hold[s.src - 1].contains(&s.chunk) {
                    continue;
                }
                if !step.replicate {
                    next[s.src - 1].remove(&s.chunk);
                }
                next[s.dest - 1].insert(s.chunk);
            }
            hold = next;
        }
        out
    }

    /// Storage after need-based retention: a chunk stays at a CU while that CU
    /// still sends it or computes it at this step or later.
    pub fn holdings(&self) -> Option<Vec<Vec<BTreeSet<usize>>>> {
        let plan = self.compute.as_ref()?;
        let avail = self.availability();
        let steps = self.steps.len();
        let mut out = Vec::with_capacity(steps);
        for t in 1..=steps {
            let row = (1..=self.n)
                .map(|cu| {
                    avail[t - 1][cu - 1]
                        .iter()
                        .copied()
                        .filter(|&c| {
                            let sent_later = self.steps[t - 1..]
                                .iter()
                                .any(|st| st.sends.iter().any(|s| s.src == cu && s.chunk == c));
                            let computed_later = (t..=steps).any(|u| plan.chunk(cu, u) == c);
                            sent_later || computed_later
                        })
                        .collect()
                })
                .collect();
            out.push(row);
        }
        Some(out)
    }
}

/// Finds, for every CU, a bijection from steps to chunks with each chunk held
/// at its step.
///
/// Greedy first (the held chunk with the fewest remaining holding steps, lowest
/// id on ties), then an exhaustive bipartite matching when greedy gets stuck.
pub fn assign_compute(sched: &MrcaSchedule) -> Result<ComputePlan> {
    let n = sched.n;
    let avail = sched.availability();
    if avail.len() != n {
        return Err(Error::ScheduleInfeasible {
            cu: 1,
            step: avail.len() + 1,
        });
    }
    let mut plan = Vec::with_capacity(n);
    for cu in 1..=n {
        let held: Vec<&BTreeSet<usize>> = avail.iter().map(|a| &a[cu - 1]).collect();
        let row = match greedy(&held, n) {
            Some(r) => r,
            None => matching(&held, n).map_err(|step| Error::ScheduleInfeasible { cu, step })?,
        };
        plan.push(row);
    }
    Ok(ComputePlan { plan })
}

fn greedy(held: &[&BTreeSet<usize>], n: usize) -> Option<Vec<usize>> {
    let mut used = BTreeSet::new();
    let mut row = Vec::with_capacity(n);
    for t in 0..n {
        let pick = held[t]
            .iter()
            .copied()
            .filter(|c| !used.contains(c))
            .min_by_key(|&c| (held[t..].iter().filter(|h| h.contains(&c)).count(), c))?;
        used.insert(pick);
        row.push(pick);
    }
    Some(row)
}

/// Augmenting-path matching of steps to chunks. On failure returns the first
/// step (1-based) left unmatched.
fn matching(held: &[&BTreeSet<usize>], n: usize) -> std::result::Result<Vec<usize>, usize> {
    fn augment(
        t: usize,
        held: &[&BTreeSet<usize>],
        owner: &mut BTreeMap<usize, usize>,
        seen: &mut BTreeSet<usize>,
    ) -> bool {
        for &c in held[t] {
            if !seen.insert(c) {
                continue;
            }
            let free = match owner.get(&c).copied() {
                None => true,
                Some(u) => augment(u, held, owner, seen),
            };
            if free {
                owner.insert(c, t);
                return true;
            }
        }
        false
    }
    let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
    for t in 0..n {
        if !augment(t, held, &mut owner, &mut BTreeSet::new()) {
            return Err(t + 1);
        }
    }
    let mut row = vec![0; n];
    for (c, t) in owner {
        row[t] = c;
    }
    Ok(row)
}

/// Pass/fail of one schedule property.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub property: String,
    pub passed: bool,
    /// First violation found.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<String>,
}

/// A chunk delivered to a CU that has already computed it and never forwards it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LateDelivery {
    pub cu: usize,
    pub chunk: usize,
    /// Step whose sends delivered it.
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n: usize,
    pub checks: Vec<PropertyCheck>,
    pub late_deliveries: Vec<LateDelivery>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, property: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.property == property)
    }
}

fn outcome(property: &str, first: Option<String>) -> PropertyCheck {
    PropertyCheck {
        property: property.to_string(),
        passed: first.is_none(),
        counterexample: first,
    }
}

/// Checks every schedule property against holdings replayed from the sends.
pub fn validate_schedule(sched: &MrcaSchedule) -> ValidationReport {
    let n = sched.n;
    let avail = sched.availability();
    let mut checks = Vec::new();

    let first = sched.steps.iter().find_map(|st| {
        st.sends
            .iter()
            .find(|s| !avail[st.t - 1][s.src - 1].contains(&s.chunk))
            .map(|s| format!("t={}: CU_{} sends chunk{} it does not hold", st.t, s.src, s.chunk))
    });
    checks.push(outcome("holds_before_send", first));

    let first = sched.steps.iter().find_map(|st| {
        st.sends
            .iter()
            .find(|s| {
                let up = matches!(s.kind, SendKind::WaveUp | SendKind::RefluxUp);
                s.src == 0 || s.src > n || (up && s.dest != s.src + 1) || (!up && s.dest + 1 != s.src)
            })
            .map(|s| format!("t={}: CU_{} -> CU_{} is not a neighbour link", st.t, s.src, s.dest))
    });
    checks.push(outcome("neighbour_links", first));

    let first = sched.steps.iter().find_map(|st| {
        let mut seen = BTreeSet::new();
        st.sends
            .iter()
            .find(|s| !seen.insert((s.src, s.dest)))
            .map(|s| format!("t={}: link CU_{} -> CU_{} used twice", st.t, s.src, s.dest))
    });
    checks.push(outcome("link_capacity", first));

    let first = (sched.steps.len() != n).then(|| format!("{} steps for a ring of {n}", sched.steps.len()));
    checks.push(outcome("completes_in_n_steps", first));

    // Coverage: a stored plan must be consistent with replayed holdings; with
    // no plan, try to build one.
    let plan = match &sched.compute {
        Some(p) => Some(p.clone()),
        None => assign_compute(sched).ok(),
    };
    let coverage = match (&sched.compute, &plan) {
        (_, None) => Some(match assign_compute(sched) {
            Err(Error::ScheduleInfeasible { cu, step }) => {
                format!("CU_{cu} has no unused held chunk at step {step}")
            }
            Err(e) => e.to_string(),
            Ok(_) => unreachable!("assignment failed above"),
        }),
        (_, Some(p)) => check_plan(p, &avail, n),
    };
    checks.push(outcome("compute_coverage", coverage));

    let storage = match &plan {
        None => Some("no compute plan, storage undefined".to_string()),
        Some(p) => {
            let with_plan = MrcaSchedule {
                compute: Some(p.clone()),
                ..sched.clone()
            };
            let held = with_plan.holdings().expect("plan present");
            held.iter().enumerate().find_map(|(t, row)| {
                row.iter()
                    .enumerate()
                    .find(|(_, h)| h.len() > 2)
                    .map(|(cu, h)| format!("t={}: CU_{} stores {:?}", t + 1, cu + 1, h))
            })
        }
    };
    checks.push(outcome("storage_at_most_2", storage));

    let mut late_deliveries = Vec::new();
    if let Some(p) = &plan {
        for st in &sched.steps {
            for s in &st.sends {
                let done = (1..=st.t.min(p.plan[s.dest - 1].len())).any(|u| p.chunk(s.dest, u) == s.chunk);
                let forwards = sched.steps[st.t..]
                    .iter()
                    .any(|later| later.sends.iter().any(|x| x.src == s.dest && x.chunk == s.chunk));
                if done && !forwards {
                    late_deliveries.push(LateDelivery {
                        cu: s.dest,
                        chunk: s.chunk,
                        step: st.t,
                    });
                }
            }
        }
    }
    ValidationReport {
        n,
        checks,
        late_deliveries,
    }
}

fn check_plan(p: &ComputePlan, avail: &[Vec<BTreeSet<usize>>], n: usize) -> Option<String> {
    if p.plan.len() != n || p.plan.iter().any(|r| r.len() != n) {
        return Some("compute plan has the wrong shape".to_string());
    }
    for cu in 1..=n {
        let mut seen = BTreeSet::new();
        for t in 1..=n {
            let c = p.chunk(cu, t);
            if !avail.get(t - 1).is_some_and(|a| a[cu - 1].contains(&c)) {
                return Some(format!("CU_{cu} computes chunk{c} at step {t} without holding it"));
            }
            if !seen.insert(c) {
                return Some(format!("CU_{cu} computes chunk{c} twice"));
            }
        }
    }
    None
}
