import math

import pytest

from mudsense.exceptions import WorkspaceExceeded
from mudsense.gait_controller import (
    GaitController, GaitParams, MudBelief, Phase, RobotSpec, adapt_depth, extraction_bound,
    max_depth, peak_suction, phase_step,
)
from mudsense.kinematics import tip_depth
from mudsense.mud_oracle import MudCoefficients


class TestPhases:
    def test_cycle_order(self):
        assert [p.next for p in Phase] == [Phase.STANCE, Phase.EXTRACTION, Phase.SWING, Phase.INSERTION]

    def test_phase_boundaries(self, params, geom):
        ctrl = GaitController(params, geom)
        t = 0.0
        for phase in Phase:
            assert ctrl.phase_step(t + 1e-6).phase is phase
            t += ctrl.durations[phase]

    def test_cycle_repeats(self, params, geom):
        ctrl = GaitController(params, geom)
        a = ctrl.phase_step(0.3)
        b = ctrl.phase_step(0.3 + 3 * ctrl.cycle_time)
        assert a.phase is b.phase
        assert a.pose.alpha == pytest.approx(b.pose.alpha)
        assert a.depth == pytest.approx(b.depth)

    def test_module_level_phase_step(self, params, geom):
        assert phase_step(0.0, params, geom).phase is Phase.INSERTION

    def test_pause_holds_still(self, geom):
        params = GaitParams(inter_phase_pause=0.2)
        ctrl = GaitController(params, geom)
        cmd = ctrl.phase_step(ctrl.durations[Phase.INSERTION] + 0.1)
        assert cmd.phase is Phase.INSERTION
        assert not cmd.moving
        assert cmd.tip_velocity == (0.0, 0.0)
        assert cmd.depth == pytest.approx(params.z_c)
        assert ctrl.cycle_time == pytest.approx(sum(ctrl.durations.values()) + 0.8)


class TestTrajectories:
    def test_stance_holds_depth(self, params, geom):
        ctrl = GaitController(params, geom)
        for cmd in ctrl.trajectory(Phase.STANCE, 380):
            assert cmd.depth == params.z_c
            assert tip_depth(cmd.pose.beta, geom) == pytest.approx(params.z_c, abs=1e-12)

    def test_stance_sweeps_the_range(self, params, geom):
        ctrl = GaitController(params, geom)
        commands = list(ctrl.trajectory(Phase.STANCE, 380))
        alphas = [c.pose.alpha for c in commands]
        assert all(b > a for a, b in zip(alphas, alphas[1:]))
        assert alphas[-1] == pytest.approx(params.sweep_range[1])

    def test_insertion_ends_at_depth(self, params, geom):
        ctrl = GaitController(params, geom)
        commands = list(ctrl.trajectory(Phase.INSERTION, 380))
        assert commands[0].depth < 0.0
        assert commands[-1].depth == pytest.approx(params.z_c)
        assert all(b.depth >= a.depth for a, b in zip(commands, commands[1:]))

    def test_extraction_reaches_clearance(self, params, geom):
        ctrl = GaitController(params, geom)
        assert list(ctrl.trajectory(Phase.EXTRACTION, 380))[-1].depth == pytest.approx(-params.clearance)

    def test_swing_returns_to_start(self, params, geom):
        ctrl = GaitController(params, geom)
        last = list(ctrl.trajectory(Phase.SWING, 380))[-1]
        assert last.pose.alpha == pytest.approx(params.sweep_range[0])
        assert last.depth == -params.clearance

    def test_stance_arc(self, params, geom):
        ctrl = GaitController(params, geom)
        expected = geom.l * math.cos(ctrl.beta_stance) * math.pi / 3
        assert ctrl.stance_arc == pytest.approx(expected)


class TestValidation:
    def test_depth_beyond_plate(self, geom):
        with pytest.raises(ValueError):
            GaitController(GaitParams(z_c=0.08), geom)

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            GaitParams(v_stance=0.0)
        with pytest.raises(ValueError):
            GaitParams(sweep_range=(0.5, 0.1))
        with pytest.raises(ValueError):
            GaitParams(inter_phase_pause=-1.0)

    def test_singular_sweep_limit(self, geom):
        with pytest.raises(WorkspaceExceeded):
            GaitController(GaitParams(sweep_range=(-math.pi / 2, 0.3)), geom)

    def test_robot_spec(self, geom):
        spec = RobotSpec.from_motor(12.0, geom)
        assert spec.f_m == pytest.approx(104.35, abs=0.01)
        assert spec.drag(1e5) == 2.5
        proportional = RobotSpec(drag_model='shear_proportional', drag_per_strength=2e-5)
        assert proportional.drag(1e5) == pytest.approx(2.0)
        assert RobotSpec(f_a=None).accel_force(0.5, 1.0) == pytest.approx(0.75)
        with pytest.raises(ValueError):
            RobotSpec(drag_model='viscous')


class TestAdaptDepth:
    def test_slip_bound_depth(self, params, geom):
        spec = RobotSpec(f_r=2.5, f_a=0.1)
        coeffs = MudCoefficients(6.3e6, 1.7e5, 6.4e6)
        decision = adapt_depth(coeffs, spec, geom, params, margin=1.2, z_min=0.02)
        assert decision.feasible and decision.binding == 'slip'
        assert decision.z == pytest.approx(math.sqrt(1.2 * 2.6 / (1.7e5 * geom.b)))
        # Both flippers at z out-yield the demand with margin
        assert 1.7e5 * geom.b * decision.z ** 2 >= 1.2 * 2.6 * (1 - 1e-12)
        assert peak_suction(decision.z, 6.4e6, geom) <= spec.f_m / 1.2

    def test_shallow_floor(self, params, geom):
        decision = adapt_depth(MudCoefficients(7.8e6, 5e6, 9e6), RobotSpec(), geom, params)
        assert decision.z == pytest.approx(0.02)
        assert decision.binding == 'clamp'
        assert decision.feasible

    def test_extraction_bound_takes_over(self, params, geom):
        spec = RobotSpec(f_m=12.0 / 0.115, f_r=2.5, f_a=0.1)
        decision = adapt_depth(MudCoefficients(8e6, 5e4, 1.8e7), spec, geom, params)
        assert not decision.feasible
        assert decision.binding == 'extraction'
        assert decision.z == pytest.approx(decision.z_extract)
        assert decision.z < decision.z_slip
        assert peak_suction(decision.z, 1.8e7, geom) <= spec.f_m / 1.2 * (1 + 1e-6)

    def test_extraction_bound_is_tight(self, geom):
        z = extraction_bound(1.8e7, 80.0, geom)
        assert peak_suction(z, 1.8e7, geom) <= 80.0
        assert peak_suction(z + 1e-5, 1.8e7, geom) > 80.0

    def test_extraction_bound_saturates_at_max_depth(self, geom):
        assert extraction_bound(1.0, 100.0, geom) == max_depth(geom)

    def test_deeper_for_weaker_mud(self, params, geom):
        strong = adapt_depth(MudCoefficients(7e6, 2.1e5, 7.6e6), RobotSpec(), geom, params)
        weak = adapt_depth(MudCoefficients(5e6, 8.2e4, 4.5e6), RobotSpec(), geom, params)
        assert weak.z > strong.z

    @pytest.mark.parametrize('k_s', [6e4, 1.3e5, 2.1e5, 3.2e5])
    def test_stiffer_shear_never_deepens(self, params, geom, k_s):
        spec = RobotSpec(f_r=2.5, f_a=0.1)
        base = adapt_depth(MudCoefficients(6.3e6, k_s, 6.4e6), spec, geom, params)
        stiffer = adapt_depth(MudCoefficients(6.3e6, 1.25 * k_s, 6.4e6), spec, geom, params)
        assert stiffer.z <= base.z

    def test_extraction_bound_falls_with_suction(self, geom):
        bounds = [extraction_bound(k_e, 104.35 / 1.2, geom) for k_e in (3e6, 4.5e6, 6.4e6, 9e6, 1.8e7, 4e7)]
        assert all(a >= b for a, b in zip(bounds, bounds[1:]))
        assert bounds[0] > bounds[-1]

    @pytest.mark.parametrize('k_e', [4.5e6, 9e6, 1.8e7])
    def test_stronger_suction_never_deepens(self, params, geom, k_e):
        spec = RobotSpec(f_m=12.0 / 0.115, f_r=2.5, f_a=0.1)
        base = adapt_depth(MudCoefficients(8e6, 5e4, k_e), spec, geom, params)
        stronger = adapt_depth(MudCoefficients(8e6, 5e4, 2.0 * k_e), spec, geom, params)
        assert stronger.z_extract <= base.z_extract
        assert stronger.z <= base.z


class TestMudBelief:
    def test_not_ready_until_all_known(self):
        belief = MudBelief()
        belief.update(6e6, None, 5e6, anchored=False)
        assert not belief.ready
        belief.update(None, 1e5, None, anchored=False)
        assert belief.ready
        assert belief.coefficients() == MudCoefficients(6e6, 1e5, 5e6)

    def test_anchored_stride_only_raises_shear(self):
        belief = MudBelief()
        belief.update(6e6, 1e5, 5e6, anchored=False)
        belief.update(6e6, 6e4, 5e6, anchored=True)
        assert belief.k_s == 1e5
        belief.update(6e6, 1.4e5, 5e6, anchored=True)
        assert belief.k_s == 1.4e5

    def test_slipping_stride_replaces_shear(self):
        belief = MudBelief()
        belief.update(6e6, 1e5, 5e6, anchored=True)
        belief.update(6e6, 6e4, 5e6, anchored=False)
        assert belief.k_s == 6e4

    def test_invalid_values_ignored(self):
        belief = MudBelief()
        belief.update(math.nan, -1.0, 0.0, anchored=False)
        assert (belief.k_p, belief.k_s, belief.k_e) == (None, None, None)

    def test_new_mixture_restarts_shear_from_anchored_stride(self):
        belief = MudBelief()
        belief.update(7.0e6, 2.1e5, 7.6e6, anchored=False)
        # softer mixture: k_p and k_e drop well past the jump tolerance
        belief.update(4.0e6, 5.9e4, 3.0e6, anchored=True)
        assert belief.k_s == 5.9e4
        assert belief.coefficients() == MudCoefficients(4.0e6, 5.9e4, 3.0e6)

    def test_small_drift_keeps_max_rule(self):
        belief = MudBelief()
        belief.update(6.3e6, 1.7e5, 6.4e6, anchored=False)
        belief.update(6.5e6, 9e4, 6.1e6, anchored=True)
        assert belief.k_s == 1.7e5

    def test_mixture_change_without_shear_fit_forgets_shear(self):
        belief = MudBelief()
        belief.update(7.0e6, 2.1e5, 7.6e6, anchored=False)
        belief.update(4.0e6, None, 3.0e6, anchored=True)
        assert belief.k_s is None
        assert not belief.ready

    def test_mixture_change_detection(self):
        belief = MudBelief(jump=0.15)
        assert not belief.mixture_changed(6e6, 5e6)
        belief.update(6e6, 1e5, 5e6, anchored=False)
        assert not belief.mixture_changed(6.5e6, 5.5e6)
        assert belief.mixture_changed(6e6, 6e6)
        assert belief.mixture_changed(4.5e6, None)
        with pytest.raises(ValueError):
            MudBelief(jump=0.0)
