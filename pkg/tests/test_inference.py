"""Message passing: beliefs, evidence, clusters, incremental updates."""

import numpy as np
import pytest

from layeredbn.builder import ReducedPolytree, add_arc, add_node, build
from layeredbn.errors import InconsistentEvidenceError
from layeredbn.inference import (
    belief,
    incorporate_new_node,
    marginalize_cluster,
    propagate,
    refresh_after_change,
    retract_evidence,
    set_evidence,
)
from layeredbn.layering import layerize
from layeredbn.model import network_stats
from layeredbn.oracle import joint_array, joint_enumerate, marginals_from_joint

from helpers import (
    chain_network,
    tenfold_network,
    make_net,
    random_connected_layered,
    random_rows,
    random_rp_polytree,
)


def tenfold_state(evidence=None):
    layered = layerize(tenfold_network())
    rp = build(layered)
    return layered, rp, propagate(rp, evidence or {})


def test_root_prior_belief():
    net = make_net({"R": ((), [0.6, 0.4])})
    rp = build(layerize(net))
    state = propagate(rp, {})
    np.testing.assert_allclose(belief(state, "R"), [0.6, 0.4], atol=1e-15)


def test_chain_belief_hand_enumerated():
    rp = build(layerize(chain_network()))
    state = propagate(rp, {})
    np.testing.assert_allclose(belief(state, "B"), [0.62, 0.38], atol=1e-15)


def test_beliefs_normalized_and_nonnegative():
    _, rp, state = tenfold_state()
    for rid in rp.rnodes:
        vec = state.belief[rid]
        assert np.all(vec >= 0)
        assert abs(vec.sum() - 1.0) <= 1e-9
        np.testing.assert_allclose(
            state.belief[rid],
            state.alpha[rid] * state.pi_node[rid] * state.lambda_node[rid],
            atol=1e-12,
        )


def test_evidence_node_is_concentrated():
    net = make_net({"X": ((), [0.2, 0.3, 0.5])}, arities={"X": 3})
    rp = build(layerize(net))
    state = propagate(rp, {"X": 2})
    np.testing.assert_array_equal(belief(state, "X"), [0.0, 0.0, 1.0])


def test_tenfold_all_single_evidence_vs_oracle():
    layered, rp, _ = tenfold_state()
    order, joint = joint_array(layered.net)
    for node in sorted(layered.net.nodes):
        for s in range(layered.net.arity(node)):
            state = propagate(rp, {node: s})
            marg = marginals_from_joint(order, joint, layered.net, {node: s})
            for other in layered.net.nodes:
                np.testing.assert_allclose(
                    belief(state, other), marg[other], atol=1e-9,
                    err_msg=f"evidence {node}={s}, node {other}",
                )


def test_belief_unknown_node():
    _, _, state = tenfold_state()
    with pytest.raises(KeyError):
        belief(state, "nope")


def test_evidence_errors():
    _, rp, _ = tenfold_state()
    with pytest.raises(KeyError):
        propagate(rp, {"nope": 0})
    with pytest.raises(IndexError):
        propagate(rp, {"A": 5})


def test_inconsistent_evidence_via_identity_link():
    layered, rp, _ = tenfold_state()
    with pytest.raises(InconsistentEvidenceError):
        propagate(rp, {"F": 0, "F#J#1": 1})


def test_marginalize_cluster_independent_roots():
    # two roots fused by two common children: the cluster belief is the
    # outer product of the priors, so member marginals recover them
    p, q = [0.3, 0.7], [0.2, 0.5, 0.3]
    net = make_net({
        "R1": ((), p),
        "R2": ((), q),
        "S1": (("R1", "R2"), random_rows(np.random.default_rng(0), 6, 2).tolist()),
        "S2": (("R1", "R2"), random_rows(np.random.default_rng(1), 6, 2).tolist()),
    }, arities={"R2": 3})
    rp = build(layerize(net))
    assert "(R1,R2)" in rp.rnodes
    state = propagate(rp, {})
    np.testing.assert_allclose(marginalize_cluster(state, "(R1,R2)", "R1"), p, atol=1e-12)
    np.testing.assert_allclose(marginalize_cluster(state, "(R1,R2)", "R2"), q, atol=1e-12)
    # uniform cluster belief (uniform priors) -> uniform member marginals
    net2 = make_net({
        "R1": ((), [0.5, 0.5]),
        "R2": ((), [1 / 3] * 3),
        "S1": (("R1", "R2"), random_rows(np.random.default_rng(2), 6, 2).tolist()),
        "S2": (("R1", "R2"), random_rows(np.random.default_rng(3), 6, 2).tolist()),
    }, arities={"R2": 3})
    state2 = propagate(build(layerize(net2)), {})
    np.testing.assert_allclose(
        marginalize_cluster(state2, "(R1,R2)", "R1"), [0.5, 0.5], atol=1e-12
    )


def test_marginalize_cluster_vs_oracle_with_evidence():
    layered, rp, _ = tenfold_state()
    cluster = rp.membership["G"]
    assert cluster == "(F#J#1,G)"
    state = propagate(rp, {"J": 1, "A": 0})
    res = joint_enumerate(layered.net, {"J": 1, "A": 0})
    np.testing.assert_allclose(
        marginalize_cluster(state, cluster, "G"), res.marginals["G"], atol=1e-9
    )


def test_marginalize_cluster_non_member():
    _, rp, state = tenfold_state()
    with pytest.raises(KeyError):
        marginalize_cluster(state, "(F#J#1,G)", "A")


def test_belief_of_cluster_member_via_membership():
    layered, rp, state = tenfold_state()
    res = joint_enumerate(layered.net)
    np.testing.assert_allclose(belief(state, "E"), res.marginals["E"], atol=1e-9)


def test_d_separated_nodes_keep_beliefs():
    # H is separated from I by instantiating F and G
    layered, rp, _ = tenfold_state()
    base = propagate(rp, {"F": 1, "G": 0})
    more = propagate(rp, {"F": 1, "G": 0, "I": 1})
    np.testing.assert_allclose(belief(base, "H"), belief(more, "H"), atol=1e-12)


def test_incorporate_evidence_free_leaf_keeps_beliefs_bitwise():
    rng = np.random.default_rng(9)
    rp = random_rp_polytree(rng, 7)
    state = propagate(rp, {})
    before = {rid: state.belief[rid].copy() for rid in rp.rnodes}
    peer = sorted(rp.variables)[0]
    add_node(rp, "leaf", 2, {"leaf": random_rows(rng, rp.arity(peer), 2)},
             [("in", peer)])
    state2 = incorporate_new_node(state, rp, "leaf")
    for rid, vec in before.items():
        np.testing.assert_array_equal(state2.belief[rid], vec)


def test_incorporate_new_root_updates_child():
    # B sits at level 1 under W; the new root A arrives beside W and B's
    # link matrix is replaced, so B's belief must change accordingly
    rp = ReducedPolytree()
    add_node(rp, "W", 2, {"W": [0.5, 0.5]}, [])
    add_node(rp, "B", 2, {"B": [0.8, 0.2, 0.4, 0.6]}, [("in", "W")])
    state = propagate(rp, {})
    add_node(rp, "A", 2,
             {"A": [0.6, 0.4],
              "B": [0.9, 0.1, 0.9, 0.1, 0.2, 0.8, 0.2, 0.8]},  # p(B|A,W) = p(B|A)
             [("out", "B")])
    state2 = incorporate_new_node(state, rp, "A")
    np.testing.assert_allclose(belief(state2, "B"), [0.62, 0.38], atol=1e-12)
    fresh = propagate(rp, {})
    for rid in rp.rnodes:
        np.testing.assert_array_equal(state2.belief[rid], fresh.belief[rid])


def test_incremental_equals_batch_after_cycle():
    # diamond closed by one extra arc: incremental state equals fresh sweep
    rng = np.random.default_rng(12)
    rp = ReducedPolytree()
    add_node(rp, "A", 2, {"A": [0.6, 0.4]}, [])
    add_node(rp, "B", 2, {"B": [0.7, 0.3, 0.2, 0.8]}, [("in", "A")])
    add_node(rp, "C", 2, {"C": [0.55, 0.45, 0.35, 0.65]}, [("in", "A")])
    add_node(rp, "D", 2, {"D": [0.9, 0.1, 0.3, 0.7]}, [("in", "B")])
    state = propagate(rp, {"D": 0})
    add_arc(rp, "C", "D", [0.9, 0.1, 0.6, 0.4, 0.3, 0.7, 0.05, 0.95])
    state2 = refresh_after_change(state, rp)
    fresh = propagate(rp, {"D": 0})
    for rid in rp.rnodes:
        np.testing.assert_array_equal(state2.belief[rid], fresh.belief[rid])
    assert state2.evidence == {"D": 0}


def test_incremental_equals_batch_on_random_growth():
    rng = np.random.default_rng(13)
    for _ in range(10):
        rp = random_rp_polytree(rng, 4)
        state = propagate(rp, {})
        for i in range(6):
            v = f"X{i}"
            ids = sorted(rp.variables)
            by_level: dict[int, list[str]] = {}
            for x in ids:
                by_level.setdefault(rp.node_levels[x], []).append(x)
            pools = [vs for vs in by_level.values() if len(vs) >= 2]
            if pools and rng.random() < 0.6:
                pool = pools[int(rng.integers(len(pools)))]
                peers = list(rng.choice(pool, size=2, replace=False))
                size = int(np.prod([rp.arity(p) for p in peers]))
                add_node(rp, v, 2, {v: random_rows(rng, size, 2)},
                         [("in", p) for p in peers])
            else:
                peer = ids[int(rng.integers(len(ids)))]
                add_node(rp, v, 2, {v: random_rows(rng, rp.arity(peer), 2)},
                         [("in", peer)])
            state = incorporate_new_node(state, rp, v)
            fresh = propagate(rp, {})
            for rid in rp.rnodes:
                np.testing.assert_array_equal(state.belief[rid], fresh.belief[rid])


def test_pseudo_root_lifecycle():
    # chain W -> M -> X; V enters at level 1 as parent of X with no prior,
    # so it is a pseudo-root; a later root R above V resolves it
    rp = ReducedPolytree()
    add_node(rp, "W", 2, {"W": [0.5, 0.5]}, [])
    add_node(rp, "M", 2, {"M": [0.8, 0.2, 0.3, 0.7]}, [("in", "W")])
    add_node(rp, "X", 2, {"X": [0.7, 0.3, 0.25, 0.75]}, [("in", "M")])
    state = propagate(rp, {})
    add_node(rp, "V", 2, {"X": [0.9, 0.1, 0.5, 0.5, 0.4, 0.6, 0.1, 0.9]},
             [("out", "X")])
    state = incorporate_new_node(state, rp, "V")
    assert rp.node_levels["V"] == 1
    assert "V" in rp.pseudo_roots
    assert state.is_provisional("V") and state.is_provisional("X")
    assert not state.is_provisional("W") and not state.is_provisional("M")
    assert state.pseudo_roots["V"].resolved is False
    np.testing.assert_allclose(state.pseudo_roots["V"].placeholder_prior, [0.5, 0.5])
    # beliefs use the uniform placeholder meanwhile
    np.testing.assert_allclose(belief(state, "V"), [0.5, 0.5], atol=1e-15)
    # a real root above V resolves it and releases the causal message
    add_node(rp, "R", 2, {"R": [0.3, 0.7], "V": [0.9, 0.1, 0.2, 0.8]},
             [("out", "V")])
    state = incorporate_new_node(state, rp, "R")
    assert not rp.pseudo_roots
    assert not state.provisional
    net = make_net({
        "W": ((), [0.5, 0.5]),
        "M": (("W",), [0.8, 0.2, 0.3, 0.7]),
        "R": ((), [0.3, 0.7]),
        "V": (("R",), [0.9, 0.1, 0.2, 0.8]),
        "X": (("M", "V"), [0.9, 0.1, 0.5, 0.5, 0.4, 0.6, 0.1, 0.9]),
    })
    res = joint_enumerate(net)
    for node in net.nodes:
        np.testing.assert_allclose(belief(state, node), res.marginals[node], atol=1e-9)


def test_set_then_retract_is_bit_identical():
    _, rp, state = tenfold_state()
    before = {rid: state.belief[rid].copy() for rid in rp.rnodes}
    state2 = set_evidence(state, "J", 1)
    assert state2.evidence == {"J": 1}
    assert not np.array_equal(belief(state2, "G"), before[rp.membership["G"]])
    state3 = retract_evidence(state2, "J")
    for rid in rp.rnodes:
        np.testing.assert_array_equal(state3.belief[rid], before[rid])


def test_retract_absent_evidence_is_noop():
    _, rp, state = tenfold_state()
    state2 = retract_evidence(state, "A")
    for rid in rp.rnodes:
        np.testing.assert_array_equal(state2.belief[rid], state.belief[rid])


def test_two_branch_evidence_vs_oracle():
    layered, rp, _ = tenfold_state()
    state = propagate(rp, {"H": 1, "I": 0})
    res = joint_enumerate(layered.net, {"H": 1, "I": 0})
    for node in layered.net.nodes:
        np.testing.assert_allclose(belief(state, node), res.marginals[node], atol=1e-9)


def test_muladd_cost_bound():
    # empirical message-passing cost: <= 32 * v * Gamma^2 per sweep
    layered, rp, state = tenfold_state()
    stats = network_stats(rp.net)
    assert state.muladds <= 32 * stats.v * stats.gamma**2
    rng = np.random.default_rng(14)
    for _ in range(10):
        net = random_connected_layered(rng, int(rng.integers(5, 14)), max_arity=3)
        rp2 = build(layerize(net))
        st = propagate(rp2, {})
        s = network_stats(rp2.net)
        assert st.muladds <= 32 * s.v * s.gamma**2, (s, st.muladds)


def test_oracle_d_separation_implies_belief_invariance():
    """Whenever the graphical oracle says an evidence set is separated from
    a node given the instantiated set, adding that evidence must leave the
    node's belief unchanged to 1e-12."""
    from layeredbn.oracle import d_separated

    rng = np.random.default_rng(20250908)
    checked = 0
    for _ in range(40):
        net = random_connected_layered(rng, int(rng.integers(5, 10)), max_arity=3)
        layered = layerize(net)
        rp = build(layered)
        ids = sorted(layered.net.nodes)
        x = str(rng.choice(ids))
        rest = [n for n in ids if n != x]
        z = [str(v) for v in rng.choice(rest, size=min(len(rest), 2), replace=False)]
        pool = [n for n in rest if n not in z]
        if not pool:
            continue
        e = [str(v) for v in rng.choice(pool, size=min(len(pool), 2), replace=False)]
        if not all(d_separated(layered.net, x, ev, set(z)) for ev in e):
            continue
        z_config = {n: int(rng.integers(layered.net.arity(n))) for n in z}
        try:
            base = propagate(rp, z_config)
            more = propagate(rp, {**z_config, **{n: 0 for n in e}})
        except InconsistentEvidenceError:
            continue
        np.testing.assert_allclose(belief(more, x), belief(base, x), atol=1e-12)
        checked += 1
    assert checked >= 5


def test_incorporate_rejects_stale_addition_structurally():
    from layeredbn.errors import StructuralError

    rng = np.random.default_rng(15)
    rp = random_rp_polytree(rng, 5)
    state = propagate(rp, {})
    with pytest.raises(StructuralError):
        incorporate_new_node(state, rp, "P0")
    with pytest.raises(StructuralError):
        incorporate_new_node(state, rp, "P1")


def test_incremental_update_actually_reuses_cached_messages():
    """The incremental path must reuse messages from untouched subtrees
    verbatim (object identity), not silently recompute everything."""
    rng = np.random.default_rng(16)
    rp = ReducedPolytree()
    add_node(rp, "n0", 2, {"n0": [0.6, 0.4]}, [])
    for i in range(1, 6):
        add_node(rp, f"n{i}", 2,
                 {f"n{i}": random_rows(rng, 2, 2)}, [("in", f"n{i-1}")])
    state = propagate(rp, {"n0": 1})
    add_node(rp, "tail", 2, {"tail": random_rows(rng, 2, 2)}, [("in", "n5")])
    state2 = incorporate_new_node(state, rp, "tail")
    reused = [
        key for key, vec in state2.pi_msg.items()
        if key in state.pi_msg and vec is state.pi_msg[key]
    ]
    reused += [
        key for key, vec in state2.lambda_msg.items()
        if key in state.lambda_msg and vec is state.lambda_msg[key]
    ]
    assert reused, "no cached message was reused"
    fresh = propagate(rp, {"n0": 1})
    for rid in rp.rnodes:
        np.testing.assert_array_equal(state2.belief[rid], fresh.belief[rid])
