"""Cascading-failure propagation."""

import json

import numpy as np
import pytest

from gridcut import (BranchStateError, find_cascade_triggers, parse_case,
                     simulate_cascade)

from casegen import random_case


def parallel_pair(load=120.0, rating=100.0, gmax=None):
    doc = {"mva_base": 100.0,
           "buses": [{"id": 1}, {"id": 2}],
           "branches": [{"from": 1, "to": 2, "susceptance": 5.0, "rating": rating},
                        {"from": 1, "to": 2, "susceptance": 5.0, "rating": rating}],
           "generators": [{"bus": 1, "p": load, "p_max": gmax or 2 * load + 1}],
           "loads": [{"bus": 2, "p": load}]}
    return parse_case(json.dumps(doc))


class TestSimulate:
    def test_light_loading_single_round(self):
        net = parallel_pair(load=40.0)
        res = simulate_cascade(net, 0)
        assert len(res.rounds) == 1
        assert res.rounds[0].tripped == frozenset({0})
        assert not res.is_trigger
        assert res.final_unserved == pytest.approx(0.0, abs=1e-9)

    def test_sixty_percent_pair_two_round_cascade(self):
        # trip one at 60%: the other reaches 120% and trips, islanding the
        # load bus, which then sheds everything
        net = parallel_pair(load=120.0)
        res = simulate_cascade(net, 0)
        assert res.is_trigger
        assert len(res.rounds) == 2
        assert res.rounds[1].tripped == frozenset({1})
        assert res.rounds[1].n_islands == 2
        assert res.final_unserved == pytest.approx(120.0, abs=1e-6)
        assert res.dependent_trips == frozenset({1})

    def test_out_of_service_rejected(self):
        net = parallel_pair()
        from gridcut import apply_outage
        out = apply_outage(net, 0)
        with pytest.raises(BranchStateError):
            simulate_cascade(out, 0)

    def test_rounds_conserve_island_balance(self):
        rng = np.random.default_rng(61)
        net = random_case(rng, n_buses=10, extra_edges=5, tightness=(1.0, 1.3))
        for k in net.in_service_ids()[:6]:
            res = simulate_cascade(net, k)
            assert res.rounds
            assert res.final_unserved >= -1e-9

    def test_generator_only_island_trips_generation(self):
        doc = {"mva_base": 100.0,
               "buses": [{"id": 1}, {"id": 2}],
               "branches": [{"from": 1, "to": 2, "susceptance": 5, "rating": 100}],
               "generators": [{"bus": 1, "p": 50.0, "p_min": 10.0, "p_max": 99}],
               "loads": [{"bus": 2, "p": 50.0}]}
        net = parse_case(json.dumps(doc))
        res = simulate_cascade(net, 0)
        # load island sheds everything; generator island curtails
        assert res.final_unserved == pytest.approx(50.0, abs=1e-6)
        assert res.is_trigger


class TestFindTriggers:
    def test_empty_contingency_set(self):
        net = parallel_pair()
        assert find_cascade_triggers(net, []) == frozenset()

    def test_monotone_rating_sanity(self):
        rng = np.random.default_rng(67)
        net = random_case(rng, n_buses=9, extra_edges=6, tightness=(1.0, 1.2))
        doc = json.loads(__import__("gridcut").serialize_case(net))
        for row in doc["branches"]:
            row["rating"] *= 50.0
        wide = parse_case(json.dumps(doc))
        from gridcut.model import bridges
        safe = [b for b in wide.in_service_ids() if b not in bridges(wide)]
        assert find_cascade_triggers(wide, safe) == frozenset()

    def test_fast_prescreen_matches_full_simulation(self):
        rng = np.random.default_rng(71)
        for _ in range(4):
            net = random_case(rng, n_buses=10, extra_edges=6,
                              tightness=(1.0, 1.25))
            fast = find_cascade_triggers(net, fast=True)
            slow = find_cascade_triggers(net, fast=False)
            assert fast == slow

    def test_deterministic(self):
        net = parallel_pair(load=120.0)
        assert find_cascade_triggers(net) == find_cascade_triggers(net)

    def test_trigger_dict_roundtrip(self):
        net = parallel_pair(load=120.0)
        res = simulate_cascade(net, 0)
        doc = res.to_dict(net)
        assert doc["is_trigger"] is True
        assert doc["final_unserved_mw"] == pytest.approx(120.0)
        assert len(doc["rounds"]) == 2
