import math
import tempfile
from pathlib import Path

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mmirl.envs import BioreactorParams, BioreactorState, CstrParams, bioreactor_step, steady_state
from mmirl.envs.base import Normalizer
from mmirl.io import Sidecar, TrajectoryRecord, load_checkpoint, read_dataset, save_checkpoint, write_dataset
from mmirl.irl import ContextPrior, discriminator_prob, info_objective, irl_reward_from_prob
from mmirl.numeric import LOG_STD_MAX, LOG_STD_MIN, ParamBlock, gaussian_entropy

finite = st.floats(allow_nan=False, allow_infinity=False)
awkward = st.one_of(finite, st.sampled_from([0.0, -0.0, 5e-324, -5e-324, 2.2250738585072014e-308, 1.7976931348623157e308]))
inputs = arrays(float, (20, 2), elements=st.floats(0.0, 5.0))


@settings(max_examples=50, deadline=None)
@given(arrays(float, (3, 2), elements=awkward), arrays(float, (3, 2), elements=awkward), arrays(float, 3, elements=awkward))
def test_dataset_serialisation_is_lossless(states, actions, rewards):
    rec = TrajectoryRecord("bioreactor", states, actions, Sidecar(1, rewards, "policy", states[-1]))
    with tempfile.TemporaryDirectory() as d:
        write_dataset(Path(d) / "x.jsonl", [rec])
        (back,) = read_dataset(Path(d) / "x.jsonl").records
    for a, b in [(states, back.states), (actions, back.actions), (rewards, back.sidecar.rewards)]:
        assert a.tobytes() == b.tobytes()


@settings(max_examples=30, deadline=None)
@given(arrays(float, 7, elements=awkward))
def test_checkpoint_serialisation_is_lossless(values):
    block = ParamBlock([(7, 1)])
    block.values[:] = values
    with tempfile.TemporaryDirectory() as d:
        save_checkpoint(Path(d) / "c.ckpt", {"b": block})
        blocks, _, _ = load_checkpoint(Path(d) / "c.ckpt")
    assert blocks["b"].values.tobytes() == values.tobytes()


@given(arrays(float, (4, 3), elements=st.floats(-1e6, 1e6)),
       arrays(float, 3, elements=st.floats(-1e3, 1e3)), arrays(float, 3, elements=st.floats(1e-3, 1e3)))
def test_normaliser_round_trip(x, center, scale):
    n = Normalizer(center, scale)
    np.testing.assert_allclose(n.denormalize(n.normalize(x)), x, rtol=1e-12, atol=1e-9)


@given(st.floats(-50, 50), st.floats(-50, 50))
def test_discriminator_identity(r, log_pi):
    d = discriminator_prob(r, log_pi)
    assert 0.0 <= d <= 1.0
    if 1e-12 < d < 1 - 1e-12:
        # the logit of d is ill-conditioned near 0 and 1
        assert math.isclose(irl_reward_from_prob(d), r - log_pi, abs_tol=1e-15 / min(d, 1 - d))
    assert (d >= 0.5) if r >= log_pi else (d <= 0.5)


@given(arrays(float, 2, elements=st.floats(LOG_STD_MIN, LOG_STD_MAX)), st.floats(0.01, 1.0), st.integers(0, 1))
def test_entropy_monotone_in_log_std(log_std, delta, j):
    bigger = log_std.copy()
    bigger[j] += delta
    assert gaussian_entropy(bigger) > gaussian_entropy(log_std)


def terminal(U, k, params=BioreactorParams()):
    s = BioreactorState(np.array([[1.0, 0.0]]), 0, np.zeros((1, 2)))
    mode = params.k_values.index(k)
    ys = [s.y[0].copy()]
    for u in U:
        s, _, _ = bioreactor_step(s, u[None], np.array([mode]), params)
        ys.append(s.y[0].copy())
    return np.array(ys)


@settings(max_examples=40, deadline=None)
@given(inputs)
def test_slower_kinetics_never_yield_more_product(U):
    assert terminal(U, 0.5)[-1, 1] >= terminal(U, 0.7)[-1, 1] - 1e-12


@settings(max_examples=40, deadline=None)
@given(inputs)
def test_y1_non_increasing_without_feed(U):
    U = U.copy()
    U[:, 1] = 0.0
    y1 = terminal(U, 0.5)[:, 0]
    assert np.all(np.diff(y1) <= 1e-15)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 100.0), st.floats(0.0, 100.0))
def test_cstr_steady_temperature_non_increasing_in_valve(a, b):
    lo, hi = sorted((a, b))
    p = CstrParams()
    assert steady_state(p, hi)[1] <= steady_state(p, lo)[1] + 1e-9


@given(st.integers(1, 6), st.integers(1, 20), st.data())
def test_information_term_bounded_by_log_m(M, n, data):
    logits = np.array(data.draw(arrays(float, (n, M), elements=st.floats(-20, 20))))
    log_q = logits - np.log(np.exp(logits).sum(-1, keepdims=True))
    z = np.array(data.draw(st.lists(st.integers(0, M - 1), min_size=n, max_size=n)))
    assert info_objective(log_q, z, ContextPrior(M)) <= math.log(M) + 1e-12
