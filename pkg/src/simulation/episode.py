"""
One simulated data-collection episode.

Per step: Poisson arrivals, then for every UAV in id order observe, rank
sensors with attention, decide, run the contact protocol, serve when
hovering over a waypoint in coverage, and move. The step closes with the
packet-loss accounting, policy feedback, the optional online attention
update and the packet conservation check.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from ai.attention import FeedbackStep, init_params, load_params, normalize_features, rank_sensors, update_params
from policy.decision import Observation, SensorObservation, UavObservation
from policy.icl import make_policy
from protocol.contact import ContactEvent, ContactPhase, ContactState, advance
from protocol.messages import Ack, Beacon, DataPacket, encode, make_status
from simulation.rng import make_streams
from world.dynamics import (
    advance_uav,
    is_hovering,
    observe_link,
    packet_energy_j,
    serve_sensor,
    snapshot_features,
    step_arrivals,
)
from world.layout import build_world
from world.state import PacketLedger, horizontal_distance

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StepLoss:
    f_events: int
    g_events: int
    f_packets: int
    g_packets: int

    @property
    def events(self):
        return self.f_events + self.g_events

    @property
    def packets(self):
        return self.f_packets + self.g_packets


@dataclass
class EpisodeResult:
    label: str
    policy: str
    seed: int
    total_loss: int
    f_total: int
    g_total: int
    packet_loss: int
    per_sensor_loss: Tuple[int, ...]
    velocity_trace: List[List[float]]
    ledger: PacketLedger
    decisions_log: List[dict]
    trace: List[dict]
    llm_records: list
    fallbacks: int = 0
    parse_failures: int = 0
    conflicts: int = 0
    timeouts: int = 0
    acks: int = 0
    contacts_completed: int = 0
    attention_feedback: list = field(default_factory=list)
    attention_params: object = None
    attention_updates_aborted: int = 0

    def summary_row(self):
        velocities = np.asarray(self.velocity_trace, dtype=float)
        return {
            "config": self.label,
            "policy": self.policy,
            "seed": self.seed,
            "packet_loss": self.packet_loss,
            "loss_events": self.total_loss,
            "f_events": self.f_total,
            "g_events": self.g_total,
            "generated": self.ledger.generated,
            "delivered": self.ledger.delivered,
            "lost_overflow": self.ledger.lost_overflow,
            "lost_comm": self.ledger.lost_comm,
            "fallbacks": self.fallbacks,
            "parse_failures": self.parse_failures,
            "conflicts": self.conflicts,
            "timeouts": self.timeouts,
            "acks": self.acks,
            "mean_velocity": float(velocities.mean()) if velocities.size else 0.0,
            "llm_latency_s": float(sum(r.latency for r in self.llm_records)),
        }


def compute_step_loss(decisions, arrivals, links, gain_threshold, comm_lost_packets=0):
    """
    Loss events and packets of one step

    Args:
        decisions: Executed (non-conflicting) Decisions of the step
        arrivals: ArrivalOutcome of the step
        links: {uav_id: {sensor_id: LinkQuality}} at decision time
        gain_threshold: Link failure threshold in dB
        comm_lost_packets: Packets lost to failed transmissions this step

    Returns:
        StepLoss; f counts scheduled links at or below the threshold, g counts
        unscheduled sensors that overflowed
    """
    scheduled = {d.sensor_id for d in decisions}
    f_events = sum(1 for d in decisions if links[d.uav_id][d.sensor_id].gain_db <= gain_threshold)
    g_events = sum(1 for sensor_id, dropped in arrivals.overflow_by_sensor.items()
                   if dropped > 0 and sensor_id not in scheduled)
    return StepLoss(
        f_events=f_events,
        g_events=g_events,
        f_packets=int(comm_lost_packets),
        g_packets=int(sum(arrivals.overflow_by_sensor.values())),
    )


def build_observation(step, uav, fleet, trajectories, alive, links, claimed, cfg):
    uavs = tuple(
        UavObservation(
            uav_id=u.id, x=u.position[0], y=u.position[1], h=u.position[2],
            waypoint_idx=u.waypoint_idx, v_max=u.v_max, hovering=is_hovering(u, trajectories[u.id]),
        )
        for u in fleet
    )
    sensors = tuple(
        SensorObservation(sensor_id=s.id, queue_len=s.queue_len, battery_j=s.battery_j, gain_db=links[s.id].gain_db)
        for s in sorted(alive, key=lambda s: s.id)
    )
    return Observation(
        step=step,
        uav_id=uav.id,
        uavs=uavs,
        sensors=sensors,
        claimed=tuple(claimed),
        queue_cap=cfg.queue_cap,
        gain_threshold_db=cfg.gain_threshold,
    )


def run_contact(contact, sensor, uav, link, cfg, ledger, energy_per_packet):
    """
    Beacon, receive and acknowledge one sensor

    A link at or below the gain threshold loses the sensor's batch and the receive phase
    times out, so no Ack is sent.

    Returns:
        (ContactState back in IDLE, ServiceOutcome, wire bytes, result label)
    """
    E = ContactEvent
    contact = advance(contact, E.ARRIVED)
    wire = encode(Beacon(sensor.id))
    status = make_status(sensor, link)
    contact = advance(contact, E.BEACON_REPLY)
    service = serve_sensor(sensor, uav, link, cfg.channel, cfg.step_budget, energy_per_packet, ledger)

    if service.comm_failed:
        while contact.phase is ContactPhase.RECEIVING:
            contact = advance(contact, E.TICK)
        return contact, service, wire, "timeout"

    wire += encode(DataPacket(sensor.id, service.delivered, status))
    contact = advance(contact, E.DATA_COMPLETE)
    wire += encode(Ack(sensor.id, service.delivered))
    contact = advance(contact, E.ACK_SENT)
    contact = advance(contact, E.RESET)
    return contact, service, wire, "ack"


def initial_attention_params(cfg, streams):
    if cfg.checkpoint:
        return load_params(cfg.checkpoint)
    return init_params(streams["init"], d_prime=cfg.d_prime, scale=cfg.init_scale)


def run_episode(cfg, policy=None, attention_params=None, client=None):
    """
    Run one episode

    Args:
        cfg: SimConfig
        policy: SchedulingPolicy; built from cfg.policy when omitted
        attention_params: AttentionParams; checkpoint or fresh init when omitted
        client: LlmClient handed to the ICL policies

    Returns:
        EpisodeResult
    """
    streams = make_streams(cfg.seed)
    sensors, trajectories, uavs = build_world(cfg, streams)
    if attention_params is None:
        attention_params = initial_attention_params(cfg, streams)
    if policy is None:
        policy = make_policy(cfg.policy, cfg, streams, client)
    llm_client = getattr(policy, "client", None)
    llm_start = len(llm_client.records) if llm_client is not None else 0

    by_id = {s.id: s for s in sensors}
    # packets already queued at launch count as generated
    ledger = PacketLedger(generated=sum(s.queue_len for s in sensors))
    contacts = [ContactState(beacon_deadline=cfg.beacon_deadline, receive_deadline=cfg.receive_deadline)
                for _ in uavs]
    energy = packet_energy_j(cfg.tx_power_mw, cfg.packet_airtime_s)
    per_sensor_loss = np.zeros(cfg.num_sensors, dtype=int)

    f_total = g_total = conflicts = aborted_updates = 0
    velocity_trace, decisions_log, trace, feedback = [], [], [], []

    for step in range(cfg.steps):
        arrivals = step_arrivals(sensors, streams["arrivals"], ledger)
        fleet = tuple(uavs)
        claimed, executed, step_feedback = [], [], []
        links_by_uav = {}
        comm_lost = 0
        step_loss_by_sensor = dict(arrivals.overflow_by_sensor)
        velocities = []

        for i, uav in enumerate(fleet):
            trajectory = trajectories[i]
            alive = [s for s in sensors if s.alive]
            if not alive:
                velocities.append(uav.v_max)
                uavs[i] = advance_uav(uav, trajectory, uav.v_max, cfg.dt)
                trace.append({"type": "uav", "step": step, "uav": uav.id, "contact": "idle"})
                continue

            links = {s.id: observe_link(uav, s, cfg.channel) for s in alive}
            links_by_uav[uav.id] = links
            obs = build_observation(step, uav, fleet, trajectories, alive, links, claimed, cfg)
            raw = snapshot_features(alive, uav, cfg.channel, links)
            ranking = rank_sensors(raw, attention_params, cfg.top_k)

            contact = advance(contacts[i], ContactEvent.QUERY)
            outcome = policy.decide(obs, ranking)
            decision = outcome.decision
            velocities.append(decision.velocity)
            delivered = lost = 0
            wire = b""

            if decision.sensor_id in claimed:
                conflicts += 1
                logger.warning("⚠️ Step %d: UAV %d chose sensor %d already claimed, no-op",
                               step, uav.id, decision.sensor_id)
                contact = advance(contact, ContactEvent.ABORT)
                result = "conflict"
            else:
                claimed.append(decision.sensor_id)
                executed.append(decision)
                contact = advance(contact, ContactEvent.DECISION, decision.sensor_id)
                sensor = by_id[decision.sensor_id]
                in_range = horizontal_distance(uav.xy, sensor.position) <= cfg.channel.coverage_radius
                if is_hovering(uav, trajectory) and in_range:
                    contact, service, wire, result = run_contact(
                        contact, sensor, uav, links[sensor.id], cfg, ledger, energy
                    )
                    delivered, lost = service.delivered, service.lost
                    if lost:
                        comm_lost += lost
                        step_loss_by_sensor[sensor.id] = step_loss_by_sensor.get(sensor.id, 0) + lost
                else:
                    contact = advance(contact, ContactEvent.TICK)
                    contact = advance(contact, ContactEvent.ABORT)
                    result = "abort"
            contacts[i] = contact

            step_feedback.append((normalize_features(raw), ranking.selected))
            decisions_log.append({
                "step": step,
                "uav": uav.id,
                "sensor": decision.sensor_id,
                "velocity": decision.velocity,
                "source": outcome.source,
                "result": result,
            })
            trace.append({
                "type": "uav",
                "step": step,
                "uav": uav.id,
                "contact": result,
                "sensor": decision.sensor_id,
                "velocity": decision.velocity,
                "source": outcome.source,
                "error": outcome.error,
                "selected": list(ranking.selected),
                "shown": list(outcome.shown_ids),
                "delivered": delivered,
                "lost": lost,
                "timeouts": contact.timeouts,
                "wire": wire.hex(),
            })
            uavs[i] = advance_uav(uav, trajectory, decision.velocity, cfg.dt)

        loss = compute_step_loss(executed, arrivals, links_by_uav, cfg.gain_threshold, comm_lost)
        f_total += loss.f_events
        g_total += loss.g_events
        for sensor_id, lost in step_loss_by_sensor.items():
            per_sensor_loss[sensor_id] += lost
        velocity_trace.append(velocities)
        policy.observe_feedback(loss.packets)

        step_steps = [
            FeedbackStep(features=x.values, sensor_ids=x.sensor_ids, selected=selected,
                         per_sensor_loss=dict(step_loss_by_sensor))
            for x, selected in step_feedback
        ]
        feedback.extend(step_steps)
        if cfg.online_update and step_steps:
            update = update_params(attention_params, step_steps, cfg.learning_rate)
            if update.aborted:
                aborted_updates += 1
            attention_params = update.params

        if cfg.debug_checks:
            ledger.check(sensors, step)
        trace.append({
            "type": "step",
            "step": step,
            "f_events": loss.f_events,
            "g_events": loss.g_events,
            "f_packets": loss.f_packets,
            "g_packets": loss.g_packets,
            **ledger.as_dict(),
            "queued": int(sum(s.queue_len for s in sensors)),
        })

    llm_records = list(llm_client.records[llm_start:]) if llm_client is not None else []
    result = EpisodeResult(
        label=cfg.label,
        policy=getattr(policy, "name", cfg.policy),
        seed=cfg.seed,
        total_loss=f_total + g_total,
        f_total=f_total,
        g_total=g_total,
        packet_loss=ledger.lost,
        per_sensor_loss=tuple(int(v) for v in per_sensor_loss),
        velocity_trace=velocity_trace,
        ledger=ledger,
        decisions_log=decisions_log,
        trace=trace,
        llm_records=llm_records,
        fallbacks=getattr(policy, "fallbacks", 0),
        parse_failures=getattr(policy, "parse_failures", 0),
        conflicts=conflicts,
        timeouts=sum(c.timeouts for c in contacts),
        acks=sum(c.acks for c in contacts),
        contacts_completed=sum(c.contacts_completed for c in contacts),
        attention_feedback=feedback,
        attention_params=attention_params,
        attention_updates_aborted=aborted_updates,
    )
    logger.info("📊 %s/%s seed=%d: packet loss %d (f=%d, g=%d events)",
                result.label, result.policy, result.seed, result.packet_loss, f_total, g_total)
    return result
