import json
import logging
import math

import numpy as np
import pytest

from mudsense.logger import JSONFormatter, TrialLogger, setup_logging
from mudsense.utils import (
    derive_seed, fit_scalar, format_velocity, longest_run, moving_average, stream_rng,
    validate_non_negative, validate_positive,
)


def test_validators():
    assert validate_positive('x', 2) == 2.0
    assert validate_non_negative('x', 0) == 0.0
    for bad in (0.0, -1.0, math.nan, math.inf):
        with pytest.raises(ValueError):
            validate_positive('x', bad)
    with pytest.raises(ValueError):
        validate_non_negative('x', -1e-9)


def test_derived_seeds_are_stable_and_distinct():
    assert derive_seed(1, 'motor/left/1') == derive_seed(1, 'motor/left/1')
    assert derive_seed(1, 'motor/left/1') != derive_seed(1, 'motor/left/2')
    assert derive_seed(1, 'motor/left/1') != derive_seed(2, 'motor/left/1')


def test_streams_are_independent_of_draw_order():
    a = stream_rng(4, 'a')
    first = a.normal(size=3)
    b = stream_rng(4, 'b')
    b.normal(size=100)
    assert np.array_equal(stream_rng(4, 'a').normal(size=3), first)


class TestFitScalar:
    def test_exact_fit(self):
        phi = np.array([1.0, 2.0, 3.0])
        k, rmse = fit_scalar(phi, 2.5 * phi)
        assert k == pytest.approx(2.5)
        assert rmse == pytest.approx(0.0, abs=1e-15)

    def test_least_squares(self):
        k, rmse = fit_scalar([1.0, 1.0], [1.0, 3.0])
        assert k == pytest.approx(2.0)
        assert rmse == pytest.approx(1.0)

    def test_no_energy(self):
        k, rmse = fit_scalar([0.0, 0.0], [1.0, 2.0])
        assert math.isnan(k) and math.isnan(rmse)
        assert math.isnan(fit_scalar([], [])[0])


def test_moving_average_keeps_constants_and_length():
    out = moving_average([2.0] * 7, 5)
    assert len(out) == 7 and np.allclose(out, 2.0)
    assert np.array_equal(moving_average([1.0, 2.0], 1), [1.0, 2.0])


def test_longest_run():
    assert longest_run([True, True, False, True, True, True, False]) == 3
    assert longest_run([]) == 0


def test_format_velocity():
    assert format_velocity(0.076) == '7.6 cm/s'
    assert format_velocity(math.nan) == 'n/a'


class TestLogging:
    def test_json_formatter_carries_extra_fields(self):
        record = logging.LogRecord('mudsense.test', logging.INFO, __file__, 1, 'stride %d', (3,), None)
        record.event = 'stride_complete'
        record.segment = 'soft'
        entry = json.loads(JSONFormatter().format(record))
        assert entry['message'] == 'stride 3'
        assert entry['event'] == 'stride_complete'
        assert entry['segment'] == 'soft'
        assert entry['level'] == 'INFO'

    def test_trial_events_reach_the_file(self, tmp_path):
        log_file = tmp_path / 'run.log'
        setup_logging(str(log_file), 'DEBUG', enable_console=False)
        events = TrialLogger()
        events.extraction_retry(4, 1, 0.031, segment='stiff')
        events.depth_adapted(5, 0.035, 'extraction', feasible=False)
        for handler in logging.getLogger().handlers:
            handler.flush()
        entries = [json.loads(line) for line in log_file.read_text().splitlines()]
        kinds = [e.get('event') for e in entries]
        assert 'extraction_retry' in kinds
        adapted = next(e for e in entries if e.get('event') == 'depth_adapt')
        assert adapted['level'] == 'WARNING'
        setup_logging(None, 'INFO', enable_console=False)
