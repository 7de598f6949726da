import numpy as np
import pytest

from proxops.dynamics import RelativeState, default_orbit, default_vehicle
from proxops.env import (
    EpisodeConfig,
    Observation,
    RewardParams,
    Status,
    WaypointTask,
    observe,
    reward,
    rollout,
    sample_episode,
    step,
)

ORBIT = default_orbit()
VEH = default_vehicle()
PARAMS = RewardParams()


def test_sampled_episodes_start_at_rest_inside_the_scaled_box():
    rng = np.random.default_rng(0)
    cfg = EpisodeConfig()
    extents = np.array(cfg.scale_vector) * cfg.sample_half_extent
    starts = []
    goals = []
    for _ in range(1000):
        state, goal = sample_episode(rng, cfg)
        assert np.array_equal(state.vel, np.zeros(3))
        assert np.all(np.abs(state.pos) <= extents)
        assert np.all(np.abs(goal) <= extents)
        starts.append(state.pos)
        goals.append(goal)
    starts = np.array(starts)
    goals = np.array(goals)
    # Sampling oracle: uniform over the box, so means sit near zero and the
    # extremes approach the box edges.
    assert np.all(np.abs(starts.mean(axis=0)) < 0.1 * extents)
    assert np.all(np.abs(goals.mean(axis=0)) < 0.1 * extents)
    assert np.all(np.abs(starts).max(axis=0) > 0.9 * extents)


def test_observation_is_zero_at_the_goal():
    state = RelativeState([50.0, -20.0, 5.0], [0, 0, 0])
    obs = observe(state, [50.0, -20.0, 5.0])
    assert np.array_equal(obs.scaled_delta, np.zeros(3))
    assert np.array_equal(obs.vel, np.zeros(3))
    assert obs.vector().shape == (6,)


def test_observation_scales_position_by_1000():
    state = RelativeState([1000.0, 0.0, 0.0], [0.5, 0.0, 0.0])
    obs = observe(state, [0.0, 0.0, 0.0])
    np.testing.assert_allclose(obs.scaled_delta, [1.0, 0.0, 0.0], atol=0)
    np.testing.assert_allclose(obs.vel, [0.5, 0.0, 0.0], atol=0)


def test_reward_at_goal_with_zero_velocity():
    value = reward([0, 0, 0], [0, 0, 0], [0, 0, 0], [0, 0, 0], PARAMS)
    assert value == pytest.approx(1e-3, abs=1e-12)


def test_reward_one_meter_of_progress():
    goal = np.zeros(3)
    value = reward([100.0, 0, 0], [101.0, 0, 0], [0.1, 0, 0], goal, PARAMS)
    assert value == pytest.approx(0.01000990099009901, abs=1e-12)


def test_reward_speeding_near_the_goal_is_penalized():
    goal = np.zeros(3)
    value = reward([1.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0], goal, PARAMS)
    assert value == pytest.approx(-0.0195, abs=1e-12)


def test_reward_proximity_term_is_bounded_by_its_weight():
    rng = np.random.default_rng(4)
    for _ in range(200):
        pos = rng.uniform(-500, 500, 3)
        goal = rng.uniform(-500, 500, 3)
        value = reward(pos, pos, np.zeros(3), goal, PARAMS)
        assert 0.0 < value <= PARAMS.goal_weight


def test_reward_progress_term_is_antisymmetric():
    rng = np.random.default_rng(9)
    for _ in range(100):
        a = rng.uniform(-400, 400, 3)
        b = rng.uniform(-400, 400, 3)
        goal = rng.uniform(-400, 400, 3)
        fwd = reward(b, a, np.zeros(3), goal, PARAMS) - reward(b, b, np.zeros(3), goal, PARAMS)
        rev = reward(a, b, np.zeros(3), goal, PARAMS) - reward(a, a, np.zeros(3), goal, PARAMS)
        assert fwd == pytest.approx(-rev, abs=1e-12)


def test_speed_penalty_threshold_is_strict():
    goal = np.zeros(3)
    d = 10.0
    limit = PARAMS.speed_limit_margin * PARAMS.speed_limit_slope * d
    at_limit = reward([d, 0, 0], [d, 0, 0], [limit, 0, 0], goal, PARAMS)
    above = reward([d, 0, 0], [d, 0, 0], [limit + 1e-9, 0, 0], goal, PARAMS)
    assert at_limit == pytest.approx(PARAMS.goal_weight / (d + 1.0), abs=1e-15)
    assert above < at_limit - PARAMS.speed_penalty_weight * limit * 0.9


def test_step_clamps_actions_to_the_unit_box():
    cfg = EpisodeConfig()
    task = WaypointTask(goal=[400.0, 0, 0])
    state = RelativeState([0, 0, 0], [0, 0, 0])
    big = step(state, [10.0, -7.0, 3.0], task, cfg, ORBIT, VEH, 0.0)
    unit = step(state, [1.0, -1.0, 1.0], task, cfg, ORBIT, VEH, 0.0)
    np.testing.assert_array_equal(big.state.as_vector(), unit.state.as_vector())


def test_step_termination_statuses():
    cfg = EpisodeConfig()
    # arrival
    task = WaypointTask(goal=[5.0, 0, 0])
    out = step(RelativeState([4.0, 0, 0], [0, 0, 0]), [0, 0, 0], task, cfg, ORBIT, VEH, 0.0)
    assert out.status is Status.REACHED
    # out of bounds
    task_far = WaypointTask(goal=[0.0, 0, 0])
    out = step(RelativeState([561.7, 0, 0], [0, 0, 0]), [0, 0, 0], task_far, cfg, ORBIT, VEH, 0.0)
    assert out.status is Status.OUT_OF_BOUNDS
    # timeout: elapsed + dt crosses the budget
    out = step(RelativeState([100.0, 0, 0], [0, 0, 0]), [0, 0, 0], task_far, cfg, ORBIT, VEH, 499.5)
    assert out.status is Status.TIMEOUT
    # still running just before the budget
    out = step(RelativeState([100.0, 0, 0], [0, 0, 0]), [0, 0, 0], task_far, cfg, ORBIT, VEH, 498.0)
    assert out.status is Status.RUNNING


def test_reached_takes_precedence_over_other_terminations():
    cfg = EpisodeConfig()
    # goal outside the allowed box: landing next to it is still an arrival
    task = WaypointTask(goal=[600.0, 0, 0])
    out = step(RelativeState([599.0, 0, 0], [0, 0, 0]), [0, 0, 0], task, cfg, ORBIT, VEH, 499.5)
    assert out.status is Status.REACHED


def test_zero_thrust_never_reaches_a_sampled_goal():
    # Drift alone should not complete episodes; arrival requires control
    # unless the start is sampled inside the acceptance ball.
    rng = np.random.default_rng(21)
    cfg = EpisodeConfig()
    coast = lambda obs: np.zeros(3)
    for _ in range(25):
        state, goal = sample_episode(rng, cfg)
        task = WaypointTask(goal=goal)
        started_inside = np.linalg.norm(state.pos - goal) < task.acceptance_radius
        status, _, _ = rollout(coast, state, task, cfg, ORBIT, VEH)
        if not started_inside:
            assert status is not Status.REACHED


def test_config_validation():
    with pytest.raises(ValueError):
        EpisodeConfig(dt=0.0)
    with pytest.raises(ValueError):
        WaypointTask(goal=[0, 0, 0], acceptance_radius=0.0)
    with pytest.raises(ValueError):
        WaypointTask(goal=[0, 0])
