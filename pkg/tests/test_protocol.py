import math

import numpy as np
import pytest

from mcmsim.messages import (
    Ack,
    Acceptance,
    Advertisement,
    Cam,
    CancelReason,
    Intention,
    McmMessage,
    MessageHeader,
    MsgType,
    Prescription,
)
from mcmsim.protocol import (
    CollisionRisk,
    CoordinationState,
    EmptyIntentionSet,
    LaneChangeDesired,
    ManeuverComplete,
    Phase,
    PrescribedTrajectoryReady,
    ProtocolParams,
    Role,
    ScenarioAbort,
    VerificationResult,
    check_cam_liveness,
    collect_intentions,
    delivery_success_probability,
    planned_transmissions,
    step,
    tick_reliable_sends,
)
from mcmsim.trajectory import TimedTrajectory

DT = 0.01


def make_traj(n=5, t0=0.0):
    xs = np.arange(n, dtype=float) * 5.0
    return TimedTrajectory(np.column_stack([xs, np.zeros(n)]), t0 + 0.5 * np.arange(n))


def make_state(station=1, **params):
    return CoordinationState(station_id=station, params=ProtocolParams(**params))


def msg(mtype, payload, sender, target, seq=1, gen_ms=0):
    return McmMessage(
        MessageHeader(msg_type=mtype, sender_id=sender, target_id=target,
                      seq=seq, generation_time_ms=gen_ms),
        payload,
    )


def run_ticks(state, t_start, t_end, inject=None):
    """Drive an engine tick by tick; ``inject`` maps time to (inbox, events)."""
    out_log = []
    t = t_start
    while t <= t_end + 1e-9:
        inbox, events = (inject or {}).get(round(t, 9), ((), ()))
        state, out = step(state, t, inbox, events)
        for m in out:
            out_log.append((round(t, 9), m))
        t = round(t + DT, 9)
    return state, out_log


# -- advertising -----------------------------------------------------------------


def test_lane_change_desired_starts_advertising():
    state = make_state()
    state, out = step(state, 1.0, (), (LaneChangeDesired(),))
    assert state.role == Role.PRESCRIBER and state.phase == Phase.ADVERTISING
    assert [m.msg_type for m in out] == [MsgType.ADVERTISEMENT]
    assert out[0].header.target_id == 0


def test_advertisement_repeats_at_rate_f_for_the_window():
    state = make_state(advertising_duration=1.0, cam_frequency=10.0)
    state, out = step(state, 1.0, (), (LaneChangeDesired(),))
    ads = list(out)
    t = 1.0
    while t < 2.5:
        t = round(t + DT, 9)
        state, out = step(state, t)
        ads.extend(m for m in out if m.msg_type == MsgType.ADVERTISEMENT)
    assert len(ads) == 10  # one per 0.1 s over a 1 s window
    assert state.phase == Phase.PRESCRIBING


def test_idle_receiver_answers_advertisement_with_intention():
    state = make_state(station=2)
    state = state.__class__(**{**vars(state), "own_trajectory": make_traj()})
    ad = msg(MsgType.ADVERTISEMENT, Advertisement(), sender=1, target=0)
    state, out = step(state, 0.5, (ad,), ())
    assert state.role == Role.RECEIVER and state.phase == Phase.INTENTION_SENT
    assert [m.msg_type for m in out] == [MsgType.INTENTION]
    assert out[0].header.target_id == 1
    assert len(state.pending_sends) == 1


def test_ack_clears_pending_and_advances_receiver():
    state = make_state(station=2)
    state = state.__class__(**{**vars(state), "own_trajectory": make_traj()})
    ad = msg(MsgType.ADVERTISEMENT, Advertisement(), sender=1, target=0)
    state, out = step(state, 0.5, (ad,), ())
    seq = out[0].header.seq
    ack = msg(MsgType.ACK, Ack(int(MsgType.INTENTION), seq), sender=1, target=2)
    state, out = step(state, 0.54, (ack,), ())
    assert state.pending_sends == ()
    assert state.phase == Phase.AWAITING_PRESCRIPTION


def test_receiver_refuses_second_prescriber():
    state = make_state(station=2)
    state = state.__class__(**{**vars(state), "own_trajectory": make_traj()})
    ad1 = msg(MsgType.ADVERTISEMENT, Advertisement(), sender=1, target=0)
    state, _ = step(state, 0.5, (ad1,), ())
    before = (state.role, state.phase, state.peer_id)
    ad9 = msg(MsgType.ADVERTISEMENT, Advertisement(), sender=9, target=0)
    state, out = step(state, 0.6, (ad9,), ())
    cancels = [m for m in out if m.msg_type == MsgType.CANCEL]
    assert len(cancels) == 1
    assert cancels[0].header.target_id == 9
    assert cancels[0].payload.reason == CancelReason.REFUSED
    assert (state.role, state.phase, state.peer_id) == before


def test_repeated_advertisement_from_peer_is_ignored():
    state = make_state(station=2)
    state = state.__class__(**{**vars(state), "own_trajectory": make_traj()})
    ad = msg(MsgType.ADVERTISEMENT, Advertisement(), sender=1, target=0)
    state, _ = step(state, 0.5, (ad,), ())
    # 0.55 is off the resend grid, so any Intention here would be a fresh reply.
    state, out = step(state, 0.55, (ad,), ())
    assert out == []
    assert len(state.pending_sends) == 1


# -- intention collection -----------------------------------------------------------


def _advertised_prescriber(duration=1.0):
    state = make_state(advertising_duration=duration)
    state, _ = step(state, 0.0, (), (LaneChangeDesired(),))
    return state


def test_collect_three_receivers():
    state = _advertised_prescriber()
    inbox = [
        msg(MsgType.INTENTION, Intention(make_traj()), sender=s, target=1, seq=1)
        for s in (2, 3, 4)
    ]
    state, out = step(state, 0.5, inbox, ())
    assert len([m for m in out if m.msg_type == MsgType.ACK]) == 3
    state, _ = step(state, 1.0)  # window closes
    assert state.phase == Phase.PRESCRIBING
    assert [s for s, _ in collect_intentions(state, 1.0)] == [2, 3, 4]


def test_collect_deduplicates_keeping_highest_seq():
    state = _advertised_prescriber()
    t1, t2 = make_traj(4), make_traj(6)
    inbox = [
        msg(MsgType.INTENTION, Intention(t1), sender=2, target=1, seq=1),
        msg(MsgType.INTENTION, Intention(t2), sender=2, target=1, seq=3),
    ]
    state, _ = step(state, 0.5, inbox, ())
    state, _ = step(state, 1.0)
    collected = collect_intentions(state, 1.0)
    assert collected == [(2, t2)]


def test_collect_empty_raises():
    state = _advertised_prescriber()
    state, _ = step(state, 1.0)
    with pytest.raises(EmptyIntentionSet):
        collect_intentions(state, 1.0)


def test_collect_rejects_open_window():
    state = _advertised_prescriber()
    with pytest.raises(RuntimeError):
        collect_intentions(state, 0.5)


# -- reliable delivery ----------------------------------------------------------------


def _receiver_with_pending(t_timeout, dt_resend=0.1):
    state = make_state(station=2, t_timeout=t_timeout, dt_resend=dt_resend)
    state = state.__class__(**{**vars(state), "own_trajectory": make_traj()})
    ad = msg(MsgType.ADVERTISEMENT, Advertisement(), sender=1, target=0)
    return step(state, 0.0, (ad,), ())


def test_eleven_transmissions_then_send_failed():
    # Counting oracle: initial copy plus one resend per 0.1 s slot within 1 s.
    state, out = _receiver_with_pending(t_timeout=1.0)
    sent = len(out)
    t = 0.0
    while t < 2.0 and state.phase == Phase.INTENTION_SENT:
        t = round(t + DT, 9)
        state, out = step(state, t)
        sent += len([m for m in out if m.msg_type == MsgType.INTENTION])
    assert sent == 11 == planned_transmissions(1.0, 0.1)
    assert state.role == Role.IDLE
    assert state.outcome == "send_timeout"
    assert t == pytest.approx(1.1)


def test_ack_stops_resends():
    state, out = _receiver_with_pending(t_timeout=1.0)
    seq0 = out[0].header.seq
    state, out1 = step(state, 0.1)   # first resend
    state, out2 = step(state, 0.2)   # second resend
    resent = [m for m in out1 + out2 if m.msg_type == MsgType.INTENTION]
    assert len(resent) == 2
    ack = msg(MsgType.ACK, Ack(int(MsgType.INTENTION), resent[-1].header.seq),
              sender=1, target=2)
    state, _ = step(state, 0.24, (ack,), ())
    assert state.pending_sends == ()
    state, out = run_ticks(state, 0.25, 1.5)
    assert not [m for _, m in out if m.msg_type == MsgType.INTENTION]


def test_zero_timeout_single_transmission():
    state, out = _receiver_with_pending(t_timeout=0.0)
    assert len(out) == 1
    state, out = run_ticks(state, DT, 0.2)
    assert not [m for _, m in out if m.msg_type == MsgType.INTENTION]
    assert state.role == Role.IDLE and state.outcome == "send_timeout"
    assert planned_transmissions(0.0, 0.1) == 1


def test_zero_timeout_survives_fast_ack():
    state, out = _receiver_with_pending(t_timeout=0.0)
    ack = msg(MsgType.ACK, Ack(int(MsgType.INTENTION), out[0].header.seq),
              sender=1, target=2)
    state, _ = step(state, 0.04, (ack,), ())
    state, _ = run_ticks(state, 0.05, 0.3)
    assert state.phase == Phase.AWAITING_PRESCRIPTION


def test_tick_reliable_sends_is_idempotent_between_slots():
    state, _ = _receiver_with_pending(t_timeout=1.0)
    s1, out1 = tick_reliable_sends(state, 0.05)
    assert out1 == []
    s2, out2 = tick_reliable_sends(s1, 0.1)
    assert [m.msg_type for m in out2] == [MsgType.INTENTION]


def test_resends_carry_fresh_increasing_seqs():
    state, out = _receiver_with_pending(t_timeout=0.5)
    seqs = [out[0].header.seq]
    t = 0.0
    while t < 0.7:
        t = round(t + DT, 9)
        state, out = step(state, t)
        seqs.extend(m.header.seq for m in out if m.msg_type == MsgType.INTENTION)
    assert seqs == sorted(seqs)
    assert len(set(seqs)) == len(seqs)


# -- CAM liveness ------------------------------------------------------------------


def _actuating_pair():
    """Drive a full handshake between two engines over a perfect bus."""
    p = make_state(station=1, advertising_duration=0.2)
    r = make_state(station=2, advertising_duration=0.2)
    r = r.__class__(**{**vars(r), "own_trajectory": make_traj(30)})
    bus = []  # (deliver_at, msg)
    latency = 0.02
    p, out = step(p, 0.0, (), (LaneChangeDesired(),))
    bus += [(0.0 + latency, m) for m in out]
    t = 0.0
    presc = make_traj(30, t0=0.5)
    while t < 1.5:
        t = round(t + DT, 9)
        deliver = [m for (at, m) in bus if at <= t]
        bus = [(at, m) for (at, m) in bus if at > t]
        p_inbox = [m for m in deliver if m.header.target_id in (0, 1) and m.header.sender_id != 1]
        r_inbox = [m for m in deliver if m.header.target_id in (0, 2) and m.header.sender_id != 2]
        p_events = []
        if p.phase == Phase.PRESCRIBING:
            p_events = [CollisionRisk((2,)), PrescribedTrajectoryReady(presc, 2)]
        r_events = []
        if r.phase == Phase.VERIFYING:
            r_events = [VerificationResult(True)]
        p, out_p = step(p, t, p_inbox, p_events)
        r, out_r = step(r, t, r_inbox, r_events)
        bus += [(t + latency, m) for m in out_p + out_r]
        if p.phase == Phase.ACTUATING and r.phase == Phase.ACTUATING:
            break
    assert p.phase == Phase.ACTUATING and r.phase == Phase.ACTUATING
    return p, r, t


def test_cam_at_rate_f_never_triggers_liveness():
    p, _r, t0 = _actuating_pair()
    t = t0
    while t < t0 + 4.0:
        t = round(t + DT, 9)
        inbox = ()
        if round(t * 100) % 10 == 0:
            inbox = (msg(MsgType.CAM, Cam(0, 0, 8, 0), sender=2, target=0,
                         gen_ms=int(t * 1000)),)
        p, _ = step(p, t, inbox)
    assert p.phase == Phase.ACTUATING


def test_silenced_peer_aborts_after_window():
    # Step-counting oracle: last CAM heard at 20.0, window 1 s; the first
    # step with now - last_heard > 1 is 21.01.
    p, _r, _t = _actuating_pair()
    p = p.__class__(**{**vars(p), "params": ProtocolParams(cam_liveness_window=1.0),
                       "phase_entered_at": 19.0})
    cam = msg(MsgType.CAM, Cam(0, 0, 8, 0), sender=2, target=0, gen_ms=20000)
    p, _ = step(p, 20.0, (cam,), ())
    t = 20.0
    while t < 22.0 and p.phase == Phase.ACTUATING:
        t = round(t + DT, 9)
        p, out = step(p, t)
    assert p.role == Role.IDLE and p.outcome == "comm_loss"
    assert t == pytest.approx(21.01)
    cancels = [m for m in out if m.msg_type == MsgType.CANCEL]
    assert cancels and cancels[0].payload.reason == CancelReason.COMM_LOSS


def test_receiver_reverts_on_liveness_loss():
    _p, r, t0 = _actuating_pair()
    state, out = check_cam_liveness(r, t0 + r.params.cam_liveness_window + 0.05)
    assert state.role == Role.IDLE
    assert "revert_to_planned" in state.signals


# -- delivery probability -----------------------------------------------------------


def test_probability_lossless_is_one():
    assert delivery_success_probability(0.0, 1.0, 0.1) == 1.0
    assert delivery_success_probability(0.0, 2.0, 0.1) == 1.0


def test_probability_total_loss_is_zero():
    assert delivery_success_probability(1.0, 2.0, 0.1) == 0.0


def test_probability_closed_form_value():
    p = delivery_success_probability(0.5, 1.0, 0.1)
    assert p == pytest.approx(1.0 - 2.0 ** -10, abs=1e-12)


def test_probability_matches_monte_carlo():
    # Monte Carlo oracle: n = t_timeout / t_resend independent Bernoulli
    # transmissions per trial; success when any survives.
    rng = np.random.default_rng(123)
    trials = 100_000
    lam, t_timeout, t_resend = 0.5, 1.0, 0.1
    n = int(round(t_timeout / t_resend))
    lost_all = (rng.random((trials, n)) < lam).all(axis=1)
    estimate = 1.0 - lost_all.mean()
    assert delivery_success_probability(lam, t_timeout, t_resend) == pytest.approx(
        estimate, abs=0.005
    )


def test_formula_exponent_versus_engine_transmissions():
    # The closed form counts resend slots only; the engine also sends the
    # initial copy, one more than the exponent.
    assert delivery_success_probability(0.5, 0.0, 0.1) == 0.0
    assert planned_transmissions(0.0, 0.1) == 1
    assert planned_transmissions(1.0, 0.1) == 11
    assert math.isclose(1.0 / 0.1, planned_transmissions(1.0, 0.1) - 1)


# -- full handshake and rejection -----------------------------------------------------


def test_happy_path_single_fin_from_prescriber():
    p, r, t = _actuating_pair()
    fins = []
    p, out = step(p, t + 1.0, (), (ManeuverComplete(),))
    fins += [m for m in out if m.msg_type == MsgType.FIN]
    r, out_r = step(r, t + 1.02, tuple(fins), ())
    assert p.phase == Phase.DONE and p.outcome == "success"
    assert r.phase == Phase.DONE and r.outcome == "success"
    assert len(fins) == 1
    # receiver completing on its own never emits Fin
    _p2, r2, t2 = _actuating_pair()
    r2, out2 = step(r2, t2 + 1.0, (), (ManeuverComplete(),))
    assert r2.phase == Phase.DONE
    assert not [m for m in out2 if m.msg_type == MsgType.FIN]


def test_rejection_recalc_caps_then_cancels():
    state = make_state(advertising_duration=0.2, max_recalc=3)
    state, _ = step(state, 0.0, (), (LaneChangeDesired(),))
    intention = msg(MsgType.INTENTION, Intention(make_traj(30)), sender=2, target=1)
    state, _ = step(state, 0.1, (intention,), ())
    state, _ = step(state, 0.2)
    assert state.phase == Phase.PRESCRIBING
    presc = make_traj(30, t0=0.5)
    seq = 10
    attempts = 0
    for round_no in range(5):
        state, out = step(
            state, 0.3 + 0.1 * round_no, (),
            (CollisionRisk((2,)), PrescribedTrajectoryReady(presc, 2)),
        )
        attempts += len([m for m in out if m.msg_type == MsgType.PRESCRIPTION])
        reject = msg(MsgType.ACCEPTANCE, Acceptance(False, None), sender=2,
                     target=1, seq=seq + round_no)
        state, out = step(state, 0.35 + 0.1 * round_no, (reject,), ())
        if state.role == Role.IDLE:
            break
    assert attempts == 3
    assert state.outcome == "rejected"
    cancels = [m for m in out if m.msg_type == MsgType.CANCEL]
    assert cancels and cancels[0].payload.reason == CancelReason.SCENARIO_ABORTED


def test_out_of_context_prescription_dropped_silently():
    state = make_state(station=2)
    presc = msg(MsgType.PRESCRIPTION, Prescription(make_traj()), sender=1, target=2)
    new, out = step(state, 0.5, (presc,), ())
    assert out == []
    assert new.role == Role.IDLE


def test_scenario_abort_event_cancels_peer():
    p, _r, t = _actuating_pair()
    p, out = step(p, t + 0.5, (), (ScenarioAbort(),))
    assert p.role == Role.IDLE and p.outcome == "aborted"
    assert [m.payload.reason for m in out if m.msg_type == MsgType.CANCEL] == [
        CancelReason.SCENARIO_ABORTED
    ]


# -- determinism -----------------------------------------------------------------------


def test_step_is_referentially_transparent():
    state = make_state()
    inbox = (msg(MsgType.ADVERTISEMENT, Advertisement(), sender=9, target=0),)
    events = (LaneChangeDesired(),)
    a1, out1 = step(state, 1.0, inbox, events)
    a2, out2 = step(state, 1.0, inbox, events)
    assert a1 == a2
    assert out1 == out2


def test_replay_reproduces_outbox_bytes():
    from mcmsim.codec import encode

    def run():
        state = make_state(advertising_duration=0.3)
        log = []
        state, out = step(state, 0.0, (), (LaneChangeDesired(),))
        log += out
        intention = msg(MsgType.INTENTION, Intention(make_traj(20)), sender=2, target=1)
        t = 0.0
        while t < 1.0:
            t = round(t + DT, 9)
            inbox = (intention,) if t == 0.2 else ()
            events = ()
            if state.phase == Phase.PRESCRIBING:
                events = (CollisionRisk((2,)),
                          PrescribedTrajectoryReady(make_traj(20, t0=1.0), 2))
            state, out = step(state, t, inbox, events)
            log += out
        return b"".join(encode(m) for m in log)

    assert run() == run()
