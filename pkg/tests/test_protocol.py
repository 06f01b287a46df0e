import random
from fractions import Fraction

import numpy as np
import pytest

from raes.errors import InvalidParameter
from raes.graph import gen_circulant, gen_complete, gen_complete_bipartite, gen_random_regular
from raes.protocol import (
    ExecutionTrace,
    RaesParams,
    RandomTape,
    SubgraphH,
    expected_requests_bound,
    fresh_tape,
    run_raes,
    termination_round_bound,
    unsettled_after,
)

from oracles import simulate


def test_params_validation():
    assert RaesParams(4, Fraction(3, 2), 5).capacity == 6
    for bad in [(0, 1, 3), (2, Fraction(1, 3), 3), (1, 1, 0), (1, 0, 3)]:
        with pytest.raises(InvalidParameter):
            RaesParams(*bad)
    p = RaesParams(3, Fraction(5, 3), 7)
    assert RaesParams.from_dict(p.to_dict()) == p


def test_fresh_tape_shape_and_determinism():
    g = gen_complete(4)
    p = RaesParams(1, Fraction(1), 4)
    t = fresh_tape(g, p, 0)
    assert t.draws.shape == (4, 4)
    assert set(np.unique(t.draws)) <= {0, 1, 2}
    assert t == fresh_tape(g, p, 0)
    assert t != fresh_tape(g, p, 1)


def test_hand_trace(hand):
    g, params, tape, res = hand
    assert res.terminated
    tr = res.trace
    as_tuples = [[(r.src, r.dst, r.accepted) for r in rnd] for rnd in tr.rounds]
    assert as_tuples == [
        [(0, 1, True), (1, 0, False), (2, 0, False), (3, 0, False)],
        [(1, 2, True), (2, 1, False), (3, 1, False)],
        [(2, 3, True), (3, 2, False)],
        [(3, 0, True)],
    ]
    assert sorted(res.h.edge_list()) == [(0, 1), (0, 3), (1, 2), (2, 3)]
    assert tr.requests_made() == [1, 2, 3, 4]
    assert res.stats.rounds_used == 4 and tr.terminated_at == 4
    assert [unsettled_after(tr, t) for t in range(5)] == [4, 3, 2, 1, 0]
    assert res.stats.total_messages == 2 * res.stats.total_requests == 20


def test_unsettled_range(hand):
    with pytest.raises(InvalidParameter):
        unsettled_after(hand[3].trace, 5)


def test_capacity_allows_single_round():
    g = gen_complete(4)
    p = RaesParams(1, Fraction(3), 5)
    for seed in range(20):
        assert run_raes(g, p, fresh_tape(g, p, seed)).stats.rounds_used == 1


def test_not_terminated_is_a_result():
    g = gen_complete(16)
    p = RaesParams(3, Fraction(1, 3), 1)
    res = run_raes(g, p, fresh_tape(g, p, 0))
    assert not res.terminated and res.trace.terminated_at is None
    assert res.stats.rounds_used == 1


def test_tape_shape_checked():
    g = gen_complete(4)
    with pytest.raises(InvalidParameter):
        run_raes(g, RaesParams(1, Fraction(1), 4), RandomTape(np.zeros((4, 3), dtype=int), 3))
    with pytest.raises(InvalidParameter):
        RandomTape(np.full((4, 4), 3), 3)


def _cases(count, seed=0):
    rng = random.Random(seed)
    for i in range(count):
        fam = rng.choice(["complete", "bipartite", "regular", "circulant"])
        if fam == "complete":
            g = gen_complete(rng.randint(2, 30))
        elif fam == "bipartite":
            g = gen_complete_bipartite(rng.randint(1, 15))
        elif fam == "regular":
            n = rng.randrange(6, 31, 2)
            g = gen_random_regular(n, rng.randint(2, n - 1), i)
        else:
            n = rng.randint(5, 30)
            g = gen_circulant(n, sorted({1, n - 1, 2, n - 2}))
        d = rng.randint(1, 4)
        cd = rng.randint(1, 3 * d)
        yield g, RaesParams(d, Fraction(cd, d), rng.randint(1, 12)), i


def test_matches_reference_simulator():
    for g, p, seed in _cases(300):
        tape = fresh_tape(g, p, seed)
        res = run_raes(g, p, tape)
        ref = simulate(g.adjacency, p.d, p.capacity, tape.rows())
        got = [[(r.src, r.dst, r.accepted) for r in rnd] for rnd in res.trace.rounds]
        assert got == ref["rounds"]
        assert res.terminated == ref["terminated"]
        assert res.trace.requests_made() == ref["used"]
        if res.terminated:
            assert sorted(res.h.edges) == sorted(ref["links"])


def test_trace_invariants():
    for g, p, seed in _cases(300, seed=1):
        res = run_raes(g, p, fresh_tape(g, p, seed))
        tr = res.trace
        prev_out = (0,) * g.n
        for t, rnd in enumerate(tr.rounds, start=1):
            start_out, start_in = tr.d_out_before(t), tr.d_in_before(t)
            sent = [0] * g.n
            received: dict[int, list[bool]] = {}
            for r in rnd:
                sent[r.src] += 1
                received.setdefault(r.dst, []).append(r.accepted)
            for v in range(g.n):
                assert sent[v] == p.d - start_out[v]
            for w, verdicts in received.items():
                assert len(set(verdicts)) == 1
                assert verdicts[0] == (len(verdicts) <= p.capacity - start_in[w])
            # accepted-before plus this round's requests never exceeds nd
            assert sum(start_in) + len(rnd) <= g.n * p.d
            assert all(a >= b for a, b in zip(tr.d_out[t - 1], prev_out))
            assert max(tr.d_in[t - 1]) <= p.capacity and max(tr.d_out[t - 1]) <= p.d
            prev_out = tr.d_out[t - 1]
        assert res.stats.total_requests >= (g.n * p.d if res.terminated else 0)
        if res.terminated:
            assert res.h.out_degrees() == [p.d] * g.n
            degs = res.h.degrees()
            assert min(degs) >= p.d and max(degs) <= p.capacity + p.d


def test_slack_capacity_one_round():
    g = gen_random_regular(12, 6, 0)
    p = RaesParams(2, Fraction(g.delta), 3)  # cd >= (n-1)d
    assert run_raes(g, p, fresh_tape(g, p, 3)).stats.rounds_used == 1


def test_determinism():
    g = gen_random_regular(20, 6, 1)
    p = RaesParams(2, Fraction(1), 10)
    t = fresh_tape(g, p, 5)
    a, b = run_raes(g, p, t), run_raes(g, p, t)
    assert a.trace.rounds == b.trace.rounds


def test_tape_json_and_binary_roundtrip():
    g = gen_random_regular(10, 6, 3)
    p = RaesParams(2, Fraction(1), 5)
    t = fresh_tape(g, p, 4)
    text = t.to_json(2, 5)
    back, d, T = RandomTape.from_json(text)
    assert (back, d, T) == (t, 2, 5) and back.to_json(d, T) == text
    blob = t.to_bytes(2, 5)
    back, d, T = RandomTape.from_bytes(blob)
    assert (back, d, T) == (t, 2, 5) and back.to_bytes(d, T) == blob
    assert len(blob) == 16 + (10 * 10 * 3 + 7) // 8


def test_trace_and_h_json_roundtrip(hand):
    g, params, tape, res = hand
    text = res.trace.to_json(seed=7)
    back, seed = ExecutionTrace.from_json(text)
    assert seed == 7 and back.rounds == res.trace.rounds
    assert back.d_out == res.trace.d_out and back.d_in == res.trace.d_in
    assert back.to_json(seed) == text
    htext = res.h.to_json()
    assert SubgraphH.from_json(htext).to_json() == htext
    with pytest.raises(InvalidParameter):
        SubgraphH.from_json('{"n": 2, "edges": [[0, 0, 1]]}')
    with pytest.raises(InvalidParameter):
        ExecutionTrace.from_json("{}")


def test_bounds():
    assert termination_round_bound(64, Fraction(63, 64), 4) == pytest.approx(3 * np.log(64) / np.log(63 / 16))
    ac = 255 / 256 * 4
    assert expected_requests_bound(256, 4, Fraction(255, 256), 4) == pytest.approx(ac / (ac - 1) * 1024)
    with pytest.raises(InvalidParameter):
        termination_round_bound(8, Fraction(1, 2), 2)
