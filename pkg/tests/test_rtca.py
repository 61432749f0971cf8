"""Contingency ranking and overload screening."""

import json
import math

import numpy as np
import pytest

from gridcut import (apply_outage, compute_lodf, compute_ptdf, dc_power_flow,
                     parse_case, rank_contingencies, screen_post_contingency,
                     select_top_fraction)

from casegen import random_case


def parallel_pair(load=120.0, rating=100.0):
    doc = {"mva_base": 100.0,
           "buses": [{"id": 1}, {"id": 2}],
           "branches": [{"from": 1, "to": 2, "susceptance": 5.0, "rating": rating},
                        {"from": 1, "to": 2, "susceptance": 5.0, "rating": rating}],
           "generators": [{"bus": 1, "p": load, "p_max": 2 * load + 1}],
           "loads": [{"bus": 2, "p": load}]}
    return parse_case(json.dumps(doc))


def sensitivities(net):
    flows = dc_power_flow(net, net.injections())
    ptdf = compute_ptdf(net)
    lodf = compute_lodf(net, ptdf)
    return flows, lodf


class TestRanking:
    def test_unloaded_system_all_zero(self):
        net = parallel_pair(load=0.0)
        flows, lodf = sensitivities(net)
        ranked = rank_contingencies(net, flows, lodf)
        assert all(r.severity == 0.0 for r in ranked)

    def test_sixty_percent_pair_severity(self):
        # each at 60%; outage of one puts the other at 120%: (1.2-1)^2 = 0.04
        net = parallel_pair(load=120.0, rating=100.0)
        flows, lodf = sensitivities(net)
        ranked = rank_contingencies(net, flows, lodf)
        assert ranked[0].severity == pytest.approx(0.04, abs=1e-12)
        assert ranked[1].severity == pytest.approx(0.04, abs=1e-12)

    def test_islanding_ranked_infinite(self):
        doc = {"mva_base": 100.0,
               "buses": [{"id": 1}, {"id": 2}, {"id": 3}],
               "branches": [{"from": 1, "to": 2, "susceptance": 5, "rating": 100},
                            {"from": 1, "to": 2, "susceptance": 5, "rating": 100},
                            {"from": 2, "to": 3, "susceptance": 5, "rating": 100}],
               "generators": [{"bus": 1, "p": 50.0, "p_max": 99}],
               "loads": [{"bus": 3, "p": 50.0}]}
        net = parse_case(json.dumps(doc))
        flows, lodf = sensitivities(net)
        ranked = rank_contingencies(net, flows, lodf)
        assert ranked[0].branch == net.branch_index("2-3")
        assert math.isinf(ranked[0].severity)

    def test_total_order_deterministic(self, case118_net):
        flows, lodf = sensitivities(case118_net)
        a = rank_contingencies(case118_net, flows, lodf)
        b = rank_contingencies(case118_net, flows, lodf)
        assert [(r.branch, r.severity) for r in a] == \
               [(r.branch, r.severity) for r in b]


class TestTopFraction:
    def test_counts(self):
        ranked = [type("R", (), {"branch": i, "severity": float(10 - i)})()
                  for i in range(10)]
        assert len(select_top_fraction(ranked, 0.3)) == 3
        assert len(select_top_fraction(ranked, 1.0)) == 10
        assert len(select_top_fraction(ranked[:7], 0.3)) == 3  # ceil(2.1)

    def test_fraction_bounds(self):
        with pytest.raises(ValueError):
            select_top_fraction([], 0.0)
        with pytest.raises(ValueError):
            select_top_fraction([], 1.5)


class TestScreening:
    def test_no_overloads_empty(self):
        net = parallel_pair(load=40.0)   # each at 20%; outage -> 40%
        flows, lodf = sensitivities(net)
        ranked = rank_contingencies(net, flows, lodf)
        viol = screen_post_contingency(net, flows, lodf, ranked)
        assert viol.e_v == []

    def test_parallel_pair_mutual_violation(self):
        net = parallel_pair(load=120.0)
        flows, lodf = sensitivities(net)
        viol = screen_post_contingency(net, flows, lodf, [0, 1])
        assert viol.e_v == [0, 1]
        for k, entries in viol.entries.items():
            assert len(entries) == 1
            assert abs(entries[0].flow_mw) > entries[0].rating_mw

    def test_islanding_in_list_rejected(self):
        doc = {"mva_base": 100.0,
               "buses": [{"id": 1}, {"id": 2}],
               "branches": [{"from": 1, "to": 2, "susceptance": 5, "rating": 100}],
               "generators": [{"bus": 1, "p": 50.0, "p_max": 99}],
               "loads": [{"bus": 2, "p": 50.0}]}
        net = parse_case(json.dumps(doc))
        flows, lodf = sensitivities(net)
        with pytest.raises(ValueError, match="islanding"):
            screen_post_contingency(net, flows, lodf, [0])

    def test_screening_equals_resolve_oracle(self):
        rng = np.random.default_rng(43)
        for _ in range(6):
            net = random_case(rng, n_buses=10, extra_edges=5,
                              tightness=(1.0, 1.25))
            inj = net.injections()
            flows, lodf = sensitivities(net)
            screenable = [k for k in net.in_service_ids()
                          if k not in lodf.undefined_outages]
            viol = screen_post_contingency(net, flows, lodf, screenable)
            reference = {}
            for k in screenable:
                fc = dc_power_flow(apply_outage(net, k), inj)
                live = [l for l in net.in_service_ids() if l != k]
                bad = [l for l in live
                       if abs(fc[l]) > net.branch_rating[l] + 1e-9]
                if bad:
                    reference[k] = bad
            assert {k: [v.branch for v in vs]
                    for k, vs in viol.entries.items()} == reference

    def test_larger_fraction_is_superset(self, case118_net):
        net = apply_outage(case118_net, "15-33")
        flows, lodf = sensitivities(net)
        ranked = rank_contingencies(net, flows, lodf)
        sets = []
        for frac in (0.3, 1.0):
            top = [r for r in select_top_fraction(ranked, frac)
                   if np.isfinite(r.severity)]
            sets.append(set(screen_post_contingency(net, flows, lodf, top).e_v))
        assert sets[0] <= sets[1]
        # members of E_v always carry positive severity
        sev = {r.branch: r.severity for r in ranked}
        assert all(sev[k] > 0 for k in sets[1])
