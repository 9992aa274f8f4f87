import numpy as np
import pytest
from geotrack.core import AdamState, adam_step, no_grad
from geotrack.errors import CapacityError, ShapeError, UsageError
from geotrack.models.encoder import make_config
from geotrack.models.retriever import (
    RetrieverConfig,
    TransRetriever,
    decode_step,
    encode_sets,
    greedy_decode,
    sinusoidal_table,
)


@pytest.fixture
def model(tiny_retriever_config):
    return TransRetriever(tiny_retriever_config, seed=2).eval()


@pytest.fixture
def tokens(rng):
    return rng.normal(size=(5, 4, 3)).astype(np.float32)


def test_sinusoidal_table_first_row():
    table = sinusoidal_table(4, 6)
    np.testing.assert_allclose(table[0], [0, 1, 0, 1, 0, 1])
    assert table.shape == (4, 6)


def test_decode_step_is_a_distribution(model, tokens):
    encoded = encode_sets(model, tokens)
    p = decode_step(model, encoded, 0, [])
    assert p.shape == (4,)
    assert p.sum() == pytest.approx(1.0, abs=1e-6)
    assert np.all(p >= 0)


def test_allowed_mask_forces_the_choice(model, tokens):
    encoded = encode_sets(model, tokens)
    allowed = np.array([False, False, True, False])
    p = decode_step(model, encoded, 2, [0, 1], allowed=allowed)
    assert int(np.argmax(p)) == 2
    assert p[2] == pytest.approx(1.0, abs=1e-6)


def test_single_candidate_sets_decode_to_zero(model, rng):
    assert greedy_decode(model, rng.normal(size=(6, 1, 3))) == [0] * 6


def test_greedy_decode_is_deterministic(model, tokens):
    choices = greedy_decode(model, tokens)
    assert len(choices) == 5
    assert all(0 <= j < 4 for j in choices)
    assert choices == greedy_decode(model, tokens)


def test_greedy_decode_restores_training_mode(tiny_retriever_config, tokens):
    model = TransRetriever(tiny_retriever_config)
    greedy_decode(model, tokens)
    assert model.training


def test_too_many_sets(model, tiny_retriever_config, rng):
    with pytest.raises(CapacityError):
        greedy_decode(model, rng.normal(size=(tiny_retriever_config.max_sets + 1, 2, 3)))


@pytest.mark.parametrize("shape", [(5, 4), (5, 4, 2), (1, 0, 4, 3)])
def test_bad_token_shapes(model, rng, shape):
    with pytest.raises(ShapeError):
        model.encode(rng.normal(size=shape))


def test_decode_step_argument_checks(model, tokens):
    encoded = encode_sets(model, tokens)
    with pytest.raises(UsageError):
        decode_step(model, encoded, 5, [0] * 5)
    with pytest.raises(UsageError):
        decode_step(model, encoded, 2, [0])


def test_step_ignores_later_sets(model, tokens):
    encoded = encode_sets(model, tokens)
    choices = [1, 0, 3, 2]
    for i in range(tokens.shape[0] - 1):
        changed = tokens.copy()
        changed[i + 1 :] += 3.0
        a = decode_step(model, encoded, i, choices[:i])
        b = decode_step(model, encode_sets(model, changed), i, choices[:i])
        np.testing.assert_allclose(a, b, atol=1e-6)


def test_teacher_forced_logits_ignore_later_sets(model, tokens):
    labels = np.array([[1, 0, 3, 2, 1]])
    with no_grad():
        base = model(tokens[None], labels).data
        for i in range(tokens.shape[0] - 1):
            changed = tokens.copy()
            changed[i + 1 :] -= 2.0
            other = model(changed[None], labels).data
            np.testing.assert_allclose(base[0, : i + 1], other[0, : i + 1], atol=1e-5)


def test_default_context_is_causal():
    assert RetrieverConfig().context == "causal"


def test_full_context_is_opt_in_and_sees_later_sets(tiny_retriever_config, tokens):
    model = TransRetriever(tiny_retriever_config.model_copy(update={"context": "full"}), seed=2).eval()
    changed = tokens.copy()
    changed[3:] += 3.0
    a = decode_step(model, encode_sets(model, tokens), 0, [])
    b = decode_step(model, encode_sets(model, changed), 0, [])
    assert not np.allclose(a, b, atol=1e-6)


def test_config_validation():
    with pytest.raises(UsageError):
        make_config(RetrieverConfig, {"dim": 10, "heads": 4})
    with pytest.raises(UsageError):
        make_config(RetrieverConfig, {"context": "sideways"})


def test_teacher_forced_loss_decreases(tiny_retriever_config, tokens):
    model = TransRetriever(tiny_retriever_config, seed=0)
    labels = np.array([[1, 0, 3, 2, 1]])
    state = AdamState(lr=1e-2)
    losses = []
    for _ in range(60):
        model.zero_grad()
        loss = model.loss(tokens[None], labels)
        loss.backward()
        adam_step(model.parameters(), state)
        losses.append(loss.item())
    assert losses[-1] < 0.5 * losses[0]
