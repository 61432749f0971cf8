"""DC power flow, PTDF and LODF against full re-solve oracles."""

import json

import numpy as np
import pytest

from gridcut import (IslandedNetworkError, apply_outage, compute_lodf,
                     compute_ptdf, dc_power_flow, parse_case,
                     post_contingency_flows)

from casegen import random_case


def two_bus():
    doc = {"mva_base": 100.0,
           "buses": [{"id": 1}, {"id": 2}],
           "branches": [{"from": 1, "to": 2, "susceptance": 1.0, "rating": 200}],
           "generators": [{"bus": 1, "p": 100.0, "p_max": 150}],
           "loads": [{"bus": 2, "p": 100.0}]}
    return parse_case(json.dumps(doc))


def parallel_pair(load=120.0):
    doc = {"mva_base": 100.0,
           "buses": [{"id": 1}, {"id": 2}],
           "branches": [{"from": 1, "to": 2, "susceptance": 5.0, "rating": 100},
                        {"from": 1, "to": 2, "susceptance": 5.0, "rating": 100}],
           "generators": [{"bus": 1, "p": load, "p_max": 2 * load}],
           "loads": [{"bus": 2, "p": load}]}
    return parse_case(json.dumps(doc))


def balanced_delta(rng, n, ref=None):
    v = rng.normal(size=n)
    v -= v.mean()
    return v * 10.0


class TestDcPowerFlow:
    def test_two_bus_single_path(self):
        net = two_bus()
        flows = dc_power_flow(net, np.array([100.0, -100.0]))
        assert flows[0] == pytest.approx(100.0, abs=1e-9)

    def test_zero_injections(self, fig1_net):
        flows = dc_power_flow(fig1_net, np.zeros(5))
        assert np.allclose(flows, 0.0)

    def test_nodal_balance_on_118(self, case118_net):
        net = case118_net
        flows = dc_power_flow(net, net.injections())
        resid = net.injections().copy()
        np.subtract.at(resid, net.branch_from, flows)
        np.add.at(resid, net.branch_to, flows)
        assert np.max(np.abs(resid)) < 1e-6

    def test_unbalanced_rejected(self, fig1_net):
        with pytest.raises(ValueError):
            dc_power_flow(fig1_net, np.ones(5))

    def test_islanded_rejected(self, fig1_net):
        net = fig1_net
        for name in ("4-3", "4-5"):   # strand bus 4
            net = apply_outage(net, name)
        with pytest.raises(IslandedNetworkError):
            dc_power_flow(net, net.injections())


class TestPtdf:
    def test_reference_column_zero(self, case118_net):
        ptdf = compute_ptdf(case118_net)
        assert np.allclose(ptdf.matrix[:, case118_net.reference_bus], 0.0)

    def test_two_bus_unit_factor(self):
        net = two_bus()   # reference = bus 1 (first generator bus)
        ptdf = compute_ptdf(net)
        assert net.reference_bus == 0
        assert ptdf.matrix[0, 1] == pytest.approx(-1.0, abs=1e-12)

    def test_entries_bounded(self, case118_net):
        ptdf = compute_ptdf(case118_net)
        assert np.max(np.abs(ptdf.matrix)) <= 1.0 + 1e-9

    def test_finite_difference_oracle(self):
        rng = np.random.default_rng(13)
        for _ in range(8):
            net = random_case(rng, n_buses=10, extra_edges=6)
            ptdf = compute_ptdf(net)
            inj = net.injections()
            base = dc_power_flow(net, inj)
            delta = balanced_delta(rng, net.n_buses)
            resolved = dc_power_flow(net, inj + delta)
            predicted = base + ptdf.flow_change(delta)
            assert np.max(np.abs(predicted - resolved)) < 1e-8


class TestLodf:
    def test_self_factor(self, case118_net):
        net = case118_net
        lodf = compute_lodf(net, compute_ptdf(net))
        for k in net.in_service_ids():
            if k not in lodf.undefined_outages:
                assert lodf.matrix[k, k] == -1.0

    def test_parallel_pair_full_transfer(self):
        net = parallel_pair()
        lodf = compute_lodf(net, compute_ptdf(net))
        assert lodf.matrix[1, 0] == pytest.approx(1.0, abs=1e-12)
        assert lodf.matrix[0, 1] == pytest.approx(1.0, abs=1e-12)

    def test_islanding_outages_detected_structurally(self):
        doc = {"mva_base": 100.0,
               "buses": [{"id": 1}, {"id": 2}, {"id": 3}],
               "branches": [{"from": 1, "to": 2, "susceptance": 5, "rating": 100},
                            {"from": 1, "to": 2, "susceptance": 5, "rating": 100},
                            {"from": 2, "to": 3, "susceptance": 5, "rating": 100}],
               "generators": [{"bus": 1, "p": 50.0, "p_max": 99}],
               "loads": [{"bus": 3, "p": 50.0}]}
        net = parse_case(json.dumps(doc))
        lodf = compute_lodf(net, compute_ptdf(net))
        assert lodf.undefined_outages == {net.branch_index("2-3")}

    def test_outage_resolve_oracle(self):
        rng = np.random.default_rng(19)
        for _ in range(8):
            net = random_case(rng, n_buses=10, extra_edges=6)
            inj = net.injections()
            flows = dc_power_flow(net, inj)
            lodf = compute_lodf(net, compute_ptdf(net))
            for k in net.in_service_ids():
                if k in lodf.undefined_outages:
                    continue
                predicted = post_contingency_flows(flows, lodf, k)
                resolved = dc_power_flow(apply_outage(net, k), inj)
                assert np.max(np.abs(predicted - resolved)) < 1e-8


class TestPostContingency:
    def test_zero_base_flows(self):
        net = parallel_pair()
        lodf = compute_lodf(net, compute_ptdf(net))
        fc = post_contingency_flows(np.zeros(2), lodf, 0)
        assert np.allclose(fc, 0.0)

    def test_parallel_pair_conservation(self):
        net = parallel_pair()
        lodf = compute_lodf(net, compute_ptdf(net))
        fc = post_contingency_flows(np.array([50.0, 50.0]), lodf, 0)
        assert fc[0] == 0.0
        assert fc[1] == pytest.approx(100.0, abs=1e-9)

    def test_islanding_outage_raises(self):
        doc = {"mva_base": 100.0,
               "buses": [{"id": 1}, {"id": 2}],
               "branches": [{"from": 1, "to": 2, "susceptance": 5, "rating": 100}],
               "generators": [{"bus": 1, "p": 50.0, "p_max": 99}],
               "loads": [{"bus": 2, "p": 50.0}]}
        net = parse_case(json.dumps(doc))
        lodf = compute_lodf(net, compute_ptdf(net))
        with pytest.raises(IslandedNetworkError):
            post_contingency_flows(np.array([50.0]), lodf, 0)

    def test_linearity(self):
        rng = np.random.default_rng(23)
        net = random_case(rng, n_buses=8)
        inj = net.injections()
        flows = dc_power_flow(net, inj)
        lodf = compute_lodf(net, compute_ptdf(net))
        k = next(b for b in net.in_service_ids()
                 if b not in lodf.undefined_outages)
        full = post_contingency_flows(flows, lodf, k)
        half = post_contingency_flows(0.5 * flows, lodf, k)
        assert np.max(np.abs(full - 2.0 * half)) < 1e-9

    def test_post_outage_conservation(self):
        rng = np.random.default_rng(27)
        net = random_case(rng, n_buses=9)
        inj = net.injections()
        flows = dc_power_flow(net, inj)
        lodf = compute_lodf(net, compute_ptdf(net))
        for k in net.in_service_ids():
            if k in lodf.undefined_outages:
                continue
            fc = post_contingency_flows(flows, lodf, k)
            net2 = apply_outage(net, k)
            resid = inj.copy()
            np.subtract.at(resid, net2.branch_from, fc)
            np.add.at(resid, net2.branch_to, fc)
            assert np.max(np.abs(resid)) < 1e-6


class TestReferenceInvariance:
    def test_violation_set_identical_under_any_reference(self):
        import dataclasses
        from gridcut import rank_contingencies, screen_post_contingency, \
            select_top_fraction
        rng = np.random.default_rng(37)
        net = random_case(rng, n_buses=10, extra_edges=5, tightness=(1.0, 1.2))
        doc = json.loads(__import__("gridcut").serialize_case(net))
        flows = dc_power_flow(net, net.injections())
        sets = []
        for ref in (net.buses[0].name, net.buses[5].name, net.buses[9].name):
            doc["reference_bus"] = ref
            net_r = parse_case(json.dumps(doc))
            ptdf = compute_ptdf(net_r)
            lodf = compute_lodf(net_r, ptdf)
            ranked = [r for r in rank_contingencies(net_r, flows, lodf)
                      if np.isfinite(r.severity)]
            viol = screen_post_contingency(net_r, flows, lodf, ranked)
            sets.append({net_r.branches[k].name: sorted(v.branch for v in vs)
                         for k, vs in viol.entries.items()})
        assert sets[0] == sets[1] == sets[2]
