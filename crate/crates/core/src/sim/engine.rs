use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{EntityId, SimError, SimTime};

/// Payloads carried by events. `kind` is the label written to the trace.
pub trait Message {
    fn kind(&self) -> &'static str;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct EventId(pub u64);

#[derive(Debug, Clone)]
pub struct Event<M> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub target: EntityId,
    pub payload: M,
}

impl<M> Event<M> {
    pub fn id(&self) -> EventId {
        EventId(self.seq)
    }
}

// Min-heap adaptor: BinaryHeap is a max-heap, so the comparison is reversed.
struct Queued<M>(Event<M>);

impl<M> PartialEq for Queued<M> {
    fn eq(&self, other: &Self) -> bool {
        self.0.fire_at == other.0.fire_at && self.0.seq == other.0.seq
    }
}

impl<M> Eq for Queued<M> {}

impl<M> PartialOrd for Queued<M> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<M> Ord for Queued<M> {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.fire_at, other.0.seq).cmp(&(self.0.fire_at, self.0.seq))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimSummary {
    pub clock_us: u64,
    pub events_scheduled: u64,
    pub events_processed: u64,
    pub events_pending: u64,
    /// Messages delivered per entity, keyed by entity name.
    pub per_entity: BTreeMap<String, u64>,
}

pub struct Engine<M> {
    clock: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Queued<M>>,
    names: Vec<String>,
    delivered: Vec<u64>,
    processed: u64,
    trace: Option<String>,
}

impl<M: Message> Default for Engine<M> {
    fn default() -> Self {
        Self::new()
    }
}

impl<M: Message> Engine<M> {
    pub fn new() -> Self {
        Engine {
            clock: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            names: Vec::new(),
            delivered: Vec::new(),
            processed: 0,
            trace: None,
        }
    }

    /// Record every dispatched event as `<time_us> <target> <message-kind>`.
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(String::new);
    }

    pub fn trace(&self) -> Option<&str> {
        self.trace.as_deref()
    }

    pub fn register(&mut self, name: impl Into<String>) -> EntityId {
        let id = EntityId(self.names.len() as u32);
        self.names.push(name.into());
        self.delivered.push(0);
        id
    }

    pub fn name(&self, id: EntityId) -> &str {
        self.names
            .get(id.0 as usize)
            .map(String::as_str)
            .unwrap_or("?")
    }

    pub fn lookup(&self, name: &str) -> Option<EntityId> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| EntityId(i as u32))
    }

    pub fn entity_count(&self) -> usize {
        self.names.len()
    }

    pub fn now(&self) -> SimTime {
        self.clock
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn schedule(
        &mut self,
        fire_at: SimTime,
        target: EntityId,
        payload: M,
    ) -> Result<EventId, SimError> {
        if fire_at < self.clock {
            return Err(SimError::SchedulingInPast {
                fire_at,
                clock: self.clock,
            });
        }
        if target.0 as usize >= self.names.len() {
            return Err(SimError::UnknownEntity(target));
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Queued(Event {
            fire_at,
            seq,
            target,
            payload,
        }));
        Ok(EventId(seq))
    }

    /// Schedule relative to the current clock. Cannot fail on time, only on
    /// an unregistered target.
    pub fn schedule_in(
        &mut self,
        delay_us: u64,
        target: EntityId,
        payload: M,
    ) -> Result<EventId, SimError> {
        self.schedule(self.clock + delay_us, target, payload)
    }

    /// Pop the next event with `fire_at <= t_end`, advancing the clock to it.
    pub fn next_event(&mut self, t_end: SimTime) -> Option<Event<M>> {
        let due = matches!(self.queue.peek(), Some(q) if q.0.fire_at <= t_end);
        if !due {
            return None;
        }
        let Queued(ev) = self.queue.pop()?;
        debug_assert!(ev.fire_at >= self.clock);
        self.clock = ev.fire_at;
        self.processed += 1;
        self.delivered[ev.target.0 as usize] += 1;
        if let Some(trace) = self.trace.as_mut() {
            let _ = writeln!(
                trace,
                "{} {} {}",
                ev.fire_at,
                self.names[ev.target.0 as usize],
                ev.payload.kind()
            );
        }
        Some(ev)
    }

    /// Dispatch every event with `fire_at <= t_end` through `handler`, then
    /// leave the clock at `t_end`.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> SimSummary
    where
        F: FnMut(&mut Engine<M>, Event<M>),
    {
        while let Some(ev) = self.next_event(t_end) {
            handler(self, ev);
        }
        if t_end > self.clock {
            self.clock = t_end;
        }
        self.summary()
    }

    pub fn summary(&self) -> SimSummary {
        SimSummary {
            clock_us: self.clock.as_micros(),
            events_scheduled: self.next_seq,
            events_processed: self.processed,
            events_pending: self.queue.len() as u64,
            per_entity: self
                .names
                .iter()
                .zip(&self.delivered)
                .filter(|(_, &n)| n > 0)
                .map(|(name, &n)| (name.clone(), n))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::RngStream;
    use rand::Rng;

    #[derive(Debug, Clone, PartialEq)]
    struct Ping(u32);

    impl Message for Ping {
        fn kind(&self) -> &'static str {
            "ping"
        }
    }

    fn engine_with(n: usize) -> (Engine<Ping>, Vec<EntityId>) {
        let mut eng = Engine::new();
        let ids = (0..n).map(|i| eng.register(format!("e{i}"))).collect();
        (eng, ids)
    }

    #[test]
    fn equal_times_fire_in_insertion_order() {
        let (mut eng, ids) = engine_with(2);
        eng.schedule(SimTime::ZERO, ids[0], Ping(1)).unwrap();
        eng.schedule(SimTime::ZERO, ids[1], Ping(2)).unwrap();
        let mut order = Vec::new();
        eng.run_until(SimTime::from_secs(1), |_, ev| order.push(ev.target));
        assert_eq!(order, ids);
    }

    #[test]
    fn scheduling_in_the_past_is_rejected() {
        let (mut eng, ids) = engine_with(1);
        eng.run_until(SimTime(10), |_, _| {});
        let err = eng.schedule(SimTime(5), ids[0], Ping(0)).unwrap_err();
        assert_eq!(
            err,
            SimError::SchedulingInPast {
                fire_at: SimTime(5),
                clock: SimTime(10)
            }
        );
    }

    #[test]
    fn unknown_target_is_rejected() {
        let (mut eng, _) = engine_with(1);
        assert_eq!(
            eng.schedule(SimTime(1), EntityId(7), Ping(0)),
            Err(SimError::UnknownEntity(EntityId(7)))
        );
    }

    #[test]
    fn empty_queue_advances_clock() {
        let (mut eng, _) = engine_with(1);
        let s = eng.run_until(SimTime::from_secs(1), |_, _| {});
        assert_eq!(s.events_processed, 0);
        assert_eq!(s.clock_us, 1_000_000);
        assert_eq!(eng.now(), SimTime::from_secs(1));
    }

    #[test]
    fn boundary_event_is_processed() {
        let (mut eng, ids) = engine_with(1);
        eng.schedule(SimTime(1_000), ids[0], Ping(0)).unwrap();
        eng.schedule(SimTime(1_001), ids[0], Ping(1)).unwrap();
        let s = eng.run_until(SimTime(1_000), |_, _| {});
        assert_eq!(s.events_processed, 1);
        assert_eq!(s.events_pending, 1);
        assert_eq!(s.events_scheduled, s.events_processed + s.events_pending);
    }

    #[test]
    fn random_schedules_dispatch_in_sorted_order() {
        let (mut eng, ids) = engine_with(4);
        let mut rng = RngStream::new(42, "schedule-test");
        let mut log = Vec::new();
        for i in 0..10_000u32 {
            let t = SimTime(rng.gen_range(0..5_000));
            let target = ids[rng.gen_range(0..ids.len())];
            let id = eng.schedule(t, target, Ping(i)).unwrap();
            log.push((t, id.0));
        }
        // Oracle: sort the schedule log by (time, seq).
        log.sort();
        let mut seen = Vec::new();
        let s = eng.run_until(SimTime(5_000), |_, ev| seen.push((ev.fire_at, ev.seq)));
        assert_eq!(seen, log);
        assert_eq!(s.events_processed, 10_000);
        assert_eq!(s.per_entity.values().sum::<u64>(), 10_000);
    }

    #[test]
    fn handlers_can_schedule_follow_ups() {
        let (mut eng, ids) = engine_with(1);
        eng.schedule(SimTime::ZERO, ids[0], Ping(0)).unwrap();
        let mut times = Vec::new();
        eng.run_until(SimTime(100), |eng, ev| {
            times.push(eng.now());
            if ev.payload.0 < 5 {
                eng.schedule_in(10, ev.target, Ping(ev.payload.0 + 1))
                    .unwrap();
            }
        });
        assert_eq!(times, (0..6).map(|i| SimTime(i * 10)).collect::<Vec<_>>());
    }

    #[test]
    fn trace_uses_entity_names() {
        let (mut eng, ids) = engine_with(2);
        eng.enable_trace();
        eng.schedule(SimTime(3), ids[1], Ping(0)).unwrap();
        eng.run_until(SimTime(3), |_, _| {});
        assert_eq!(eng.trace().unwrap(), "3 e1 ping\n");
    }
}
