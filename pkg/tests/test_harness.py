"""Replay, cost sweeps, train/test protocol, and report files."""

import csv
import json

import numpy as np
import pytest

from adaptivefog.errors import CoverageError, ModelFitError
from adaptivefog.harness import (
    ADAPTIVE_FINITE,
    ADAPTIVE_INFINITE,
    MYOPIC,
    SINGLE_0,
    SINGLE_1,
    ReplayOutcome,
    SweepResult,
    build_slots,
    cost_sweep,
    default_services,
    prepare_experiment,
    replay,
    report,
    train_test_split,
)
from adaptivefog.mobility import split_sessions
from adaptivefog.policy import never_switch_policy, solve_infinite
from adaptivefog.stats import ScalarPenalty
from adaptivefog.synth import (
    LatencyMixture,
    ScenarioSpec,
    Waypoint,
    Zone,
    generate,
)
from adaptivefog.trace import GridSpec, Server

from conftest import ORIGIN_LAT, ORIGIN_LON


def two_zone_spec(seed=7, gap_ms=35.0):
    """1 km route with two zones; network 0 wins zone A, network 1 zone B."""
    grid = GridSpec(origin_lat=ORIGIN_LAT, origin_lon=ORIGIN_LON)
    mixture = LatencyMixture(modes_ms=(75.0, 105.0), sigmas=(0.10, 0.12),
                             weights=(0.7, 0.3))
    mixtures = {
        (net, srv, "urban-drive"): mixture
        for net in (0, 1)
        for srv in (Server.FOG, Server.CLOUD)
    }
    zones = (
        Zone(0.0, 500.0, 0.0, 100.0, "urban-drive",
             network_bias_ms=((0, -gap_ms / 2), (1, gap_ms / 2))),
        Zone(500.0, 1000.0, 0.0, 100.0, "urban-drive",
             network_bias_ms=((0, gap_ms / 2), (1, -gap_ms / 2))),
    )
    return ScenarioSpec(
        name="two-zone",
        grid=grid,
        mixtures=mixtures,
        zones=zones,
        route=(Waypoint(1.0, 50.0, 6.0), Waypoint(999.0, 50.0, 9.0)),
        seed=seed,
    )


@pytest.fixture(scope="module")
def two_zone_experiment():
    spec = two_zone_spec()
    samples = generate(spec, 12_000)
    # gamma 0.6 keeps the switching incentive short-ranged, so a penalty a
    # little above the summed service weights already freezes all switching
    return prepare_experiment(samples, spec.grid, discount=0.6)


class TestReplay:
    def test_never_switch_is_passthrough(self, two_zone_experiment):
        exp = two_zone_experiment
        static = never_switch_policy(exp.mobility.states)
        out = replay(static, exp.slots, exp.problem.services, start_network=0)
        direct = np.array([slot.rtt[0] for slot in exp.slots])
        svc = exp.problem.services[0]
        assert out.switch_count == 0
        assert out.confidence[svc.id] == pytest.approx(
            float(np.mean(direct <= svc.max_latency_ms)), abs=1e-12
        )
        assert out.rtt_mean == pytest.approx(direct.mean())

    def test_adaptive_beats_both_singles_at_zero_cost(self, two_zone_experiment):
        exp = two_zone_experiment
        policy = solve_infinite(exp.problem.with_cost(ScalarPenalty(0.0)))
        adaptive = replay(policy, exp.slots, exp.problem.services)
        singles = [
            replay(never_switch_policy(exp.mobility.states), exp.slots,
                   exp.problem.services, start_network=net)
            for net in (0, 1)
        ]
        best = max(s.weighted_confidence for s in singles)
        assert adaptive.weighted_confidence >= best - 0.01

    def test_prohibitive_cost_means_no_switching(self, two_zone_experiment):
        exp = two_zone_experiment
        w_sum = sum(s.weight for s in exp.problem.services)
        policy = solve_infinite(exp.problem.with_cost(ScalarPenalty(1.2 * w_sum)))
        out = replay(policy, exp.slots, exp.problem.services, start_network=0)
        single = replay(never_switch_policy(exp.mobility.states), exp.slots,
                        exp.problem.services, start_network=0)
        assert out.switch_count == 0
        assert out.weighted_confidence == pytest.approx(single.weighted_confidence)

    def test_replay_deterministic(self, two_zone_experiment):
        exp = two_zone_experiment
        policy = solve_infinite(exp.problem.with_cost(ScalarPenalty(0.05)))
        a = replay(policy, exp.slots, exp.problem.services)
        b = replay(policy, exp.slots, exp.problem.services)
        assert a == b

    def test_penalty_accounting(self, two_zone_experiment):
        exp = two_zone_experiment
        policy = solve_infinite(exp.problem.with_cost(ScalarPenalty(0.05)))
        out = replay(policy, exp.slots, exp.problem.services)
        assert out.total_penalty == pytest.approx(out.switch_count * 0.05)

    def test_unknown_state_keeps_current_network(self, two_zone_experiment):
        exp = two_zone_experiment
        policy = solve_infinite(exp.problem.with_cost(ScalarPenalty(0.0)))
        policy.index = {}  # as if every state were unseen at solve time
        out = replay(policy, exp.slots, exp.problem.services, start_network=1)
        assert out.switch_count == 0

    def test_empty_slots_rejected(self, two_zone_experiment):
        exp = two_zone_experiment
        policy = never_switch_policy(exp.mobility.states)
        with pytest.raises(ValueError):
            replay(policy, [], exp.problem.services)


class TestBuildSlots:
    def test_synthetic_slots_have_both_networks(self, two_zone_experiment):
        exp = two_zone_experiment
        assert all(set(slot.rtt) == {0, 1} for slot in exp.slots)

    def test_counterfactual_draws_for_missing_network(self):
        spec = two_zone_spec()
        samples = generate(spec, 4000)
        train, test = train_test_split(samples)
        from adaptivefog.stats import fit_model

        model = fit_model(train, spec.grid, min_samples=20)
        test_net0 = [s for s in test if s.network_id == 0]
        rng = np.random.default_rng(0)
        slots = build_slots(test_net0, spec.grid, Server.FOG, model=model, rng=rng)
        assert all(set(slot.rtt) == {0, 1} for slot in slots)
        # draws must come from the model's per-state sample values
        lk_values = set()
        for key in model.direct_keys:
            if key[2] == 1 and key[3] == Server.FOG:
                lk_values.update(model.lookup(key[0], key[1], 1, Server.FOG).cdf.values)
        pool = model.network_pool(1, Server.FOG)
        lk_values.update(pool.values)
        assert all(slot.rtt[1] in lk_values for slot in slots[:50])

    def test_missing_network_without_rng_raises(self):
        spec = two_zone_spec()
        samples = [s for s in generate(spec, 100) if s.network_id == 0]
        with pytest.raises(CoverageError):
            build_slots(samples, spec.grid, Server.FOG)


class TestTrainTestSplit:
    def test_split_is_session_disjoint(self):
        spec = two_zone_spec()
        samples = generate(spec, 6000)
        train, test = train_test_split(samples)
        t_train = {s.timestamp_ms for s in train}
        t_test = {s.timestamp_ms for s in test}
        assert not (t_train & t_test)
        assert len(train) + len(test) == len(samples)
        n_total = len(split_sessions(samples))
        n_train = len(split_sessions(train))
        assert n_train == max(1, int(n_total * 3 / 7))

    def test_single_session_rejected(self, grid):
        from conftest import make_sample

        samples = [make_sample(grid, t_ms=i * 500) for i in range(10)]
        with pytest.raises(ModelFitError):
            train_test_split(samples)


@pytest.fixture(scope="module")
def sweep(two_zone_experiment):
    exp = two_zone_experiment
    costs = list(np.linspace(0.0, 1.2, 7))
    return cost_sweep(exp.problem, costs, exp.slots, finite_horizon=6)


class TestCostSweep:
    def test_single_curves_flat(self, sweep):
        for name in (SINGLE_0, SINGLE_1):
            curve = sweep.weighted_curve(name)
            assert max(curve) - min(curve) == 0.0

    def test_adaptive_curves_nonincreasing(self, sweep):
        for name in (ADAPTIVE_INFINITE, ADAPTIVE_FINITE, MYOPIC):
            curve = sweep.weighted_curve(name)
            assert all(b <= a + 1e-12 for a, b in zip(curve, curve[1:]))

    def test_largest_cost_degenerates_to_single(self, sweep):
        final = sweep.weighted_curve(ADAPTIVE_INFINITE)[-1]
        singles = [sweep.weighted_curve(SINGLE_0)[-1], sweep.weighted_curve(SINGLE_1)[-1]]
        assert min(abs(final - s) for s in singles) < 0.01
        assert sweep.outcomes[ADAPTIVE_INFINITE][-1].switch_count == 0

    def test_myopic_never_beats_optimal_value(self, sweep):
        assert all(g >= -1e-8 for g in sweep.myopic_value_gap)

    def test_requires_ascending_costs(self, two_zone_experiment):
        exp = two_zone_experiment
        with pytest.raises(ValueError):
            cost_sweep(exp.problem, [0.5, 0.1], exp.slots)
        with pytest.raises(ValueError):
            cost_sweep(exp.problem, [], exp.slots)


class TestReport:
    def test_report_files_and_row_count(self, two_zone_experiment, tmp_path):
        exp = two_zone_experiment
        costs = [0.0, 0.2, 0.6]
        result = cost_sweep(exp.problem, costs, exp.slots, finite_horizon=4)
        paths = report(result, str(tmp_path))
        with open(paths["csv"], newline="") as fh:
            rows = list(csv.reader(fh))
        n_policies = len(result.outcomes)
        n_services = len(result.services)
        assert len(rows) == 1 + len(costs) * n_policies * n_services
        with open(paths["json"]) as fh:
            loaded = SweepResult.from_dict(json.load(fh))
        assert loaded.to_dict() == result.to_dict()
        assert (tmp_path / "summary.txt").read_text().strip()

    def test_empty_result_rejected(self, tmp_path):
        empty = SweepResult(costs=[], services=list(default_services()), outcomes={})
        with pytest.raises(ValueError):
            report(empty, str(tmp_path))

    def test_outcome_round_trip(self):
        out = ReplayOutcome(
            policy="x", cost=0.1, start_network=0, slots=10,
            confidence={0: 0.5}, weighted_confidence=0.5, rtt_mean=80.0,
            rtt_std=10.0, rtt_median=78.0, rtt_p90=95.0, switch_count=2,
            total_penalty=0.2,
        )
        assert ReplayOutcome.from_dict(out.to_dict()) == out
