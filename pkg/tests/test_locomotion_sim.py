from dataclasses import replace

import pytest

from mudsense.exceptions import ConfigError
from mudsense.locomotion_sim import (
    FailureKind, GaitMode, RobotState, SAMPLE_COLUMNS, STRIDE_COLUMNS, SimOptions, StrideRecord,
    Trackway, detect_failures, run_trial, segment_velocities, step_dynamics,
)
from mudsense.mud_oracle import DEFAULT_CATALOG, MudCoefficients, MudSegment

from .conftest import uniform_trackway

SOFT = DEFAULT_CATALOG.lookup(0.512)
FIRM = DEFAULT_CATALOG.lookup(0.476)


def stride(index, length, arc=0.12, solidified=False, retries=0, stuck=False, recovery=False,
           segment='a', duration=1.0):
    return StrideRecord(index=index, segment=segment, z_cmd=0.03, stride_length=length,
                        duration=duration, commanded_arc=arc, retries=retries,
                        solidified=solidified, stuck=stuck, recovery=recovery)


class TestTrackway:
    def test_from_layout(self):
        trackway = Trackway.from_layout([('a', 0.5, 0.48), ('b', 0.3, 0.51)], DEFAULT_CATALOG)
        assert trackway.length == pytest.approx(0.8)
        assert trackway.segment_at(0.49).id == 'a'
        assert trackway.segment_at(0.5).id == 'b'
        assert trackway.segment_at(5.0).id == 'b'

    def test_gaps_rejected(self):
        with pytest.raises(ValueError):
            Trackway((MudSegment('a', 0.0, 0.5, 0.48, SOFT), MudSegment('b', 0.6, 1.0, 0.5, SOFT)))

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError):
            Trackway((MudSegment('a', 0.0, 0.5, 0.48, SOFT), MudSegment('a', 0.5, 1.0, 0.5, SOFT)))


class TestDynamics:
    def test_anchored_body_advances(self):
        state = step_dynamics(RobotState(), {'left': 1.3, 'right': 1.3}, 2.6, 0.001, 0.01)
        assert state.x == pytest.approx(0.001)
        assert state.v == pytest.approx(0.1)

    def test_yielding_mud_holds_body(self):
        state = step_dynamics(RobotState(), {'left': 1.0, 'right': 1.0}, 2.6, 0.001, 0.01)
        assert state.x == 0.0 and state.v == 0.0

    def test_locked_body_never_moves(self):
        state = step_dynamics(RobotState(), {'right': 10.0}, 2.6, 0.001, 0.01, body_locked=True)
        assert state.x == 0.0


class TestFailures:
    def test_slip_needs_short_unanchored_stride(self):
        events = detect_failures([stride(0, 0.0), stride(1, 0.0, solidified=True), stride(2, 0.1)])
        assert [(e.kind, e.stride) for e in events] == [(FailureKind.SLIP, 0)]

    def test_retries_count_as_extraction_failures(self):
        events = detect_failures([stride(0, 0.1, retries=2),
                                  stride(1, 0.0, solidified=True, retries=1, stuck=True),
                                  stride(2, 0.0, solidified=True, recovery=True)])
        assert [(e.kind, e.stride) for e in events] == [
            (FailureKind.EXTRACTION, 0), (FailureKind.EXTRACTION, 1), (FailureKind.EXTRACTION, 2)]

    def test_segment_velocities(self):
        trackway = Trackway.from_layout([('a', 0.5, 0.48), ('b', 0.5, 0.5)], DEFAULT_CATALOG)
        log = [stride(0, 0.1, segment='a'), stride(1, 0.1, segment='a', duration=3.0),
               stride(2, 0.05, segment='b', duration=0.5)]
        v = segment_velocities(log, trackway)
        assert v == {'a': pytest.approx(0.05), 'b': pytest.approx(0.1)}


class TestTrials:
    def test_firm_mud_locomotes(self, fast_params, spec):
        result = run_trial(uniform_trackway(FIRM, 0.4), GaitMode(z=0.03), fast_params, spec, 0,
                           options=SimOptions(stride_budget=20))
        assert result.final_x >= 0.4
        assert not result.failures
        assert all(s.solidified for s in result.strides)
        assert sum(s.stride_length for s in result.strides) == pytest.approx(result.final_x, abs=1e-6)

    def test_soft_mud_slips_at_three_cm(self, fast_params, spec):
        result = run_trial(uniform_trackway(SOFT, 0.4), GaitMode(z=0.03), fast_params, spec, 0,
                           options=SimOptions(stride_budget=4))
        assert result.final_x == 0.0
        assert len(result.strides) == 4
        assert all(f.kind is FailureKind.SLIP for f in result.failures)
        assert len(result.failures) == 4
        assert result.segment_velocity['mud'] == 0.0

    def test_deeper_insertion_anchors_soft_mud(self, fast_params, spec):
        result = run_trial(uniform_trackway(SOFT, 0.3), GaitMode(z=0.05), fast_params, spec, 0,
                           options=SimOptions(stride_budget=10))
        assert result.final_x >= 0.3
        assert not any(f.kind is FailureKind.SLIP for f in result.failures)

    def test_stiff_extraction_retries(self, fast_params, spec):
        stiff = MudCoefficients(8.5e6, 3.2e5, 1.8e7)
        result = run_trial(uniform_trackway(stiff, 0.2), GaitMode(z=0.05), fast_params, spec, 0,
                           options=SimOptions(stride_budget=3))
        assert all(s.retries == 3 for s in result.strides)
        assert result.stuck_events == 0
        assert result.failure_counts()['mud']['Extraction'] == len(result.strides)

    def test_retry_budget_exhaustion_is_stuck(self, fast_params, spec):
        stiff = MudCoefficients(8.5e6, 3.2e5, 1.8e7)
        result = run_trial(uniform_trackway(stiff, 0.2), GaitMode(z=0.05), fast_params, spec, 0,
                           options=SimOptions(stride_budget=2, n_retry=1))
        stuck = [s for s in result.strides if s.stuck]
        assert stuck
        # Every stuck stride is followed by its zero-length recovery stride
        recovery = result.strides[1]
        assert recovery.recovery and not recovery.stuck
        assert recovery.stride_length == 0.0
        assert 'Extraction' in recovery.failures
        # one stall is one stuck event, however many records it produced
        assert result.stuck_events == len(stuck) == sum(s.recovery for s in result.strides)

    @pytest.mark.parametrize('z, coefficient, values, kind, direction', [
        (0.05, 'k_e', (4.5e6, 9e6, 1.5e7, 1.8e7, 2.6e7), 'Extraction', 1),
        (0.03, 'k_s', (6e4, 8.2e4, 1.3e5, 2.1e5, 3.2e5), 'Slip', -1),
    ])
    def test_failure_counts_monotone_in_mud_strength(self, fast_params, spec, z, coefficient, values,
                                                     kind, direction):
        counts = []
        for value in values:
            mud = replace(MudCoefficients(8.5e6, 8.2e4, 4.5e6), **{coefficient: value})
            result = run_trial(uniform_trackway(mud, 2.0), GaitMode(z=z), fast_params, spec, 3,
                               options=SimOptions(stride_budget=4))
            counts.append(result.failure_counts().get('mud', {}).get(kind, 0))
        assert all(direction * (b - a) >= 0 for a, b in zip(counts, counts[1:])), counts
        assert counts[0] != counts[-1]

    def test_rows_follow_sample_schema(self, fast_params, spec):
        result = run_trial(uniform_trackway(FIRM, 0.1), GaitMode(z=0.03), fast_params, spec, 1,
                           options=SimOptions(stride_budget=1))
        frame = result.samples_frame()
        assert tuple(frame.columns) == SAMPLE_COLUMNS
        assert tuple(result.strides_frame().columns) == STRIDE_COLUMNS
        assert set(frame['flipper']) == {'left', 'right'}
        right = frame[frame['flipper'] == 'right']
        assert (right['t'].diff().dropna() > 0).all()
        assert right['t'].diff().dropna().max() == pytest.approx(1 / 380)
        assert list(dict.fromkeys(right['phase'])) == ['insertion', 'stance', 'extraction', 'swing']

    def test_stride_estimates_recorded(self, fast_params, spec):
        result = run_trial(uniform_trackway(FIRM, 0.1), GaitMode(z=0.03), fast_params, spec, 1,
                           options=SimOptions(stride_budget=1))
        estimates = result.strides[0].estimates
        # Surface detected on the fly, so depth is referenced a fraction of a millimetre low
        assert estimates['kp_hat'] == pytest.approx(FIRM.k_p, rel=0.08)
        assert estimates['ke_hat'] == pytest.approx(FIRM.k_e, rel=0.08)
        assert estimates['ks_hat'] < FIRM.k_s

    def test_same_seed_same_log(self, fast_params, spec):
        a = run_trial(uniform_trackway(FIRM, 0.2), GaitMode(z=0.03), fast_params, spec, 4)
        b = run_trial(uniform_trackway(FIRM, 0.2), GaitMode(z=0.03), fast_params, spec, 4)
        c = run_trial(uniform_trackway(FIRM, 0.2), GaitMode(z=0.03), fast_params, spec, 5)
        assert a.rows == b.rows
        assert a.rows != c.rows

    def test_adaptive_starts_from_bootstrap_depth(self, fast_params, spec):
        result = run_trial(uniform_trackway(FIRM, 0.3), GaitMode(adaptive=True), fast_params, spec, 0,
                           options=SimOptions(stride_budget=5))
        assert result.strides[0].z_cmd == 0.04
        assert result.strides[0].decision is None
        assert all(s.decision is not None for s in result.strides[1:])


class TestTrialValidation:
    def test_single_flipper_needs_locked_body(self, params, spec):
        with pytest.raises(ConfigError):
            run_trial(uniform_trackway(FIRM), GaitMode(z=0.03), params, spec, 0,
                      options=SimOptions(flippers=('right',)))

    def test_adaptive_needs_moving_body(self, params, spec):
        with pytest.raises(ConfigError):
            run_trial(uniform_trackway(FIRM), GaitMode(adaptive=True), params, spec, 0,
                      options=SimOptions(body_locked=True, flippers=('right',)))

    def test_depth_beyond_plate(self, params, spec):
        with pytest.raises(ConfigError):
            run_trial(uniform_trackway(FIRM), GaitMode(z=0.09), params, spec, 0)

    def test_options(self):
        with pytest.raises(ValueError):
            SimOptions(stride_budget=0)
        with pytest.raises(ValueError):
            SimOptions(flippers=('middle',))
