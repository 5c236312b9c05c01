"""
Tests for the toy skip network: shapes, forward semantics, backprop,
training, cost accounting and synthetic data.
"""

import json

import numpy as np
import pytest

from ped_prune.errors import BadArity, ConfigError, DivergedLoss, ShapeMismatch
from ped_prune.functions.toynet.costs import count_flops, count_params
from ped_prune.functions.toynet.data import gen_synthetic, split_batch
from ped_prune.functions.toynet.network import (
    accuracy,
    extract_feature_maps,
    forward,
    grad_check,
    head_width,
    init_network,
    loss_and_gradients,
    parameter_vector,
    with_policy,
)
from ped_prune.functions.toynet.training import train
from ped_prune.types import Batch, PruningPolicy, SkipNetConfig


def small_batch(cfg, m=6, seed=0):
    rng = np.random.default_rng(seed)
    targets = np.arange(m) % cfg.classes + 1
    return Batch(inputs=rng.normal(size=(m, cfg.input_dim)), targets=targets)


# ============================================================================
# INITIALIZATION AND SHAPES
# ============================================================================

def test_init_is_deterministic():
    cfg = SkipNetConfig(units=3, width=5, seed=4)
    a, b = init_network(cfg), init_network(cfg)
    for (name, x), (_, y) in zip(a.named_parameters(), b.named_parameters()):
        np.testing.assert_array_equal(x, y, err_msg=name)
    assert a.policy.alphas == [1, 1, 1]


def test_init_scale():
    cfg = SkipNetConfig(units=2, input_dim=9, width=16, seed=1)
    net = init_network(cfg)
    assert np.abs(net.stem_w).max() <= 1 / 3
    assert np.abs(net.units[0].w1).max() <= 1 / 4


def test_residual_single_unit_shapes():
    net = init_network(SkipNetConfig(units=1, input_dim=2, width=4, classes=3))
    names = [name for name, _ in net.named_parameters()]
    assert names == ["stem.w", "stem.b", "unit0.w1", "unit0.b1", "unit0.w2", "unit0.b2", "head.w", "head.b"]
    assert net.units[0].w1.shape == (4, 4)
    assert net.head_w.shape == (4, 3)


def test_dense_head_width():
    cfg = SkipNetConfig(units=3, width=8, growth=4, composition="dense")
    net = init_network(cfg)
    assert head_width(cfg) == 20
    assert net.head_w.shape == (20, 2)
    x = np.zeros((2, cfg.input_dim))
    assert forward(net, x).unit_outputs[-1].shape == (2, 20)
    pruned = PruningPolicy(alphas=[1, 0, 1])
    assert forward(net, x, pruned).unit_outputs[-1].shape == (2, 16)


# ============================================================================
# FORWARD
# ============================================================================

def test_inactive_branches_reduce_to_head_of_stem():
    cfg = SkipNetConfig(units=2, width=4, seed=3)
    net = init_network(cfg)
    x = np.random.default_rng(0).normal(size=(5, 2))
    # a policy keeps at least one unit, so prune one and zero the other branch
    net.units[1].w2[:] = 0.0
    net.units[1].b2[:] = 0.0
    trace = forward(net, x, PruningPolicy(alphas=[0, 1]))
    expected = (x @ net.stem_w + net.stem_b) @ net.head_w + net.head_b
    np.testing.assert_allclose(trace.logits, expected, rtol=0, atol=1e-14)


def test_zero_unit_weights_are_identity():
    cfg = SkipNetConfig(units=3, width=4, seed=5)
    net = init_network(cfg)
    for unit in net.units:
        for arr in (unit.w1, unit.b1, unit.w2, unit.b2):
            arr[:] = 0.0
    trace = forward(net, np.random.default_rng(1).normal(size=(4, 2)))
    for before, after in zip(trace.unit_outputs, trace.unit_outputs[1:]):
        np.testing.assert_array_equal(before, after)


def test_pruned_unit_is_identity_and_disconnected():
    cfg = SkipNetConfig(units=3, width=4, seed=6)
    net = with_policy(init_network(cfg), PruningPolicy(alphas=[1, 0, 1]))
    x = np.random.default_rng(2).normal(size=(7, 2))
    trace = forward(net, x)
    assert trace.unit_outputs[2] is trace.unit_outputs[1]
    assert trace.feature_maps[1] is None

    perturbed = net.model_copy(deep=True)
    perturbed.units[1].w1 += 10.0
    perturbed.units[1].b2 -= 3.0
    np.testing.assert_array_equal(forward(perturbed, x).logits, trace.logits)


@pytest.mark.parametrize("composition", ["residual", "dense"])
def test_pruned_gradients_are_exactly_zero(composition):
    cfg = SkipNetConfig(units=3, width=3, growth=2, classes=3, composition=composition, seed=8)
    net = with_policy(init_network(cfg), PruningPolicy(alphas=[1, 0, 1]))
    batch = small_batch(cfg)
    _, grads = loss_and_gradients(net, batch.inputs, batch.targets)
    for name in ("unit1.w1", "unit1.b1", "unit1.w2", "unit1.b2"):
        assert not grads[name].any()
    if composition == "dense":
        # unit 2 and the head never read the pruned unit's rows
        assert not grads["unit2.w1"][5:7].any()
        assert not grads["head.w"][5:7].any()


def test_forward_rejects_bad_shapes():
    net = init_network(SkipNetConfig(units=2, input_dim=3))
    with pytest.raises(ShapeMismatch):
        forward(net, np.zeros((4, 2)))
    with pytest.raises(ShapeMismatch):
        forward(net, np.zeros((4, 3)), PruningPolicy(alphas=[1, 1, 1]))


def test_extract_feature_maps():
    cfg = SkipNetConfig(units=3, width=4, seed=2)
    net = init_network(cfg)
    data = small_batch(cfg, m=9)
    maps = extract_feature_maps(net, data)
    assert len(maps) == 3
    assert all((m.n, m.d) == (9, 4) for m in maps)
    pruned = extract_feature_maps(net, data, PruningPolicy(alphas=[1, 0, 1]))
    assert len(pruned) == 2
    np.testing.assert_array_equal(pruned[0].data, maps[0].data)
    again = extract_feature_maps(net, data)
    for a, b in zip(maps, again):
        np.testing.assert_array_equal(a.data, b.data)


# ============================================================================
# GRADIENTS
# ============================================================================

def test_grad_check_random_configs():
    """50 random small configs covering both compositions and mixed policies."""
    rng = np.random.default_rng(99)
    for trial in range(50):
        units = int(rng.integers(1, 4))
        cfg = SkipNetConfig(
            units=units,
            input_dim=int(rng.integers(1, 4)),
            width=int(rng.integers(1, 5)),
            growth=int(rng.integers(1, 4)),
            classes=int(rng.integers(2, 4)),
            composition="residual" if trial % 2 else "dense",
            seed=trial,
        )
        alphas = rng.integers(0, 2, size=units).tolist()
        if not any(alphas):
            alphas[int(rng.integers(units))] = 1
        net = with_policy(init_network(cfg), PruningPolicy(alphas=alphas))
        assert grad_check(net, small_batch(cfg, m=5, seed=trial), eps=1e-6) < 1e-4, cfg


def test_grad_check_linear_unit_is_near_exact():
    cfg = SkipNetConfig(units=1, input_dim=2, width=2, activation="linear", seed=1)
    assert grad_check(init_network(cfg), small_batch(cfg), eps=1e-5) < 1e-7


def test_grad_check_returns_builtin_float():
    cfg = SkipNetConfig(units=2, width=3, seed=4)
    error = grad_check(init_network(cfg), small_batch(cfg), eps=1e-6)
    assert type(error) is float
    json.dumps({"max_relative_error": error, "passed": error < 1e-4})


def test_grad_check_leaves_network_untouched():
    cfg = SkipNetConfig(units=2, width=3, seed=2)
    net = init_network(cfg)
    before = parameter_vector(net).copy()
    grad_check(net, small_batch(cfg))
    np.testing.assert_array_equal(parameter_vector(net), before)


def test_grad_check_rejects_non_positive_eps():
    cfg = SkipNetConfig(units=1, width=2)
    with pytest.raises(ConfigError):
        grad_check(init_network(cfg), small_batch(cfg), eps=0.0)


# ============================================================================
# TRAINING
# ============================================================================

def test_zero_epochs_keeps_weights():
    cfg = SkipNetConfig(units=2, width=4)
    net = init_network(cfg)
    trained = train(net, small_batch(cfg), epochs=0, lr=0.1, seed=0)
    np.testing.assert_array_equal(parameter_vector(trained), parameter_vector(net))


def test_training_is_deterministic_and_does_not_mutate_input():
    cfg = SkipNetConfig(units=2, width=4, seed=3)
    net = init_network(cfg)
    before = parameter_vector(net).copy()
    data = gen_synthetic("rings", 120, 2, seed=1)
    a = train(net, data, epochs=3, lr=0.05, seed=11, batch_size=16)
    b = train(net, data, epochs=3, lr=0.05, seed=11, batch_size=16)
    np.testing.assert_array_equal(parameter_vector(a), parameter_vector(b))
    np.testing.assert_array_equal(parameter_vector(net), before)


def test_training_learns_separable_blobs():
    cfg = SkipNetConfig(units=2, width=8, classes=2, seed=0)
    data = gen_synthetic("blobs", 200, 2, noise=0.1, seed=5)
    trained = train(init_network(cfg), data, epochs=200, lr=0.02, seed=0, batch_size=32)
    assert accuracy(trained, data) >= 0.95


def test_pruned_weights_stay_frozen():
    cfg = SkipNetConfig(units=3, width=4, seed=4)
    net = with_policy(init_network(cfg), PruningPolicy(alphas=[1, 0, 1]))
    trained = train(net, gen_synthetic("rings", 80, 2, seed=2), epochs=2, lr=0.1, seed=0, batch_size=8)
    for a, b in zip((net.units[1].w1, net.units[1].w2), (trained.units[1].w1, trained.units[1].w2)):
        np.testing.assert_array_equal(a, b)
    assert not np.array_equal(net.units[0].w1, trained.units[0].w1)


def test_divergence_is_reported():
    cfg = SkipNetConfig(units=1, width=4, activation="linear", seed=0)
    rng = np.random.default_rng(0)
    # random labels keep the loss away from zero, so the weights keep growing
    data = Batch(inputs=rng.normal(size=(40, 2)), targets=np.tile([1, 2], 20)[rng.permutation(40)])
    with pytest.raises(DivergedLoss) as e:
        train(init_network(cfg), data, epochs=50, lr=1e6, seed=0, batch_size=8, stage=2)
    assert e.value.stage == 2
    assert e.value.exit_code == 3


def test_train_validates_arguments():
    cfg = SkipNetConfig(units=1, width=2)
    with pytest.raises(ConfigError):
        train(init_network(cfg), small_batch(cfg), epochs=1, lr=0.0, seed=0)
    with pytest.raises(ConfigError):
        train(init_network(cfg), small_batch(cfg), epochs=-1, lr=0.1, seed=0)


# ============================================================================
# COST ACCOUNTING
# ============================================================================

def test_residual_parameter_count_example():
    cfg = SkipNetConfig(units=2, input_dim=2, width=4, classes=2)
    assert count_params(cfg, PruningPolicy.all_active(2)) == 102
    assert count_params(cfg, PruningPolicy(alphas=[1, 0])) == 102 - 40


def test_dense_counts_by_hand():
    cfg = SkipNetConfig(units=3, input_dim=2, width=8, growth=4, classes=2, composition="dense")
    # stem 24; units with inputs 8, 12, 16: (8*4+4+16+4), (12*4+4+20), (16*4+4+20); head 20*2+2
    assert count_params(cfg, PruningPolicy.all_active(3)) == 24 + 56 + 72 + 88 + 42
    # pruning unit 1 shrinks unit 2's input to 12 and the head to 16
    assert count_params(cfg, PruningPolicy(alphas=[1, 0, 1])) == 24 + 56 + 72 + 34
    # flops: stem 32; units 2*in*4 + 4 + 32; head 2*in*2
    assert count_flops(cfg, PruningPolicy.all_active(3)) == 32 + 100 + 132 + 164 + 80
    assert count_flops(cfg, PruningPolicy(alphas=[1, 0, 1])) == 32 + 100 + 132 + 64


def test_residual_flops_by_hand():
    cfg = SkipNetConfig(units=2, input_dim=2, width=4, classes=3)
    per_unit = 2 * 16 + 4 + 2 * 16
    assert count_flops(cfg, PruningPolicy.all_active(2)) == 16 + 2 * per_unit + 24
    assert count_flops(cfg, PruningPolicy(alphas=[0, 1])) == 16 + per_unit + 24
    linear = cfg.model_copy(update={"activation": "linear"})
    assert count_flops(linear, PruningPolicy.all_active(2)) == 16 + 2 * (per_unit - 4) + 24


@pytest.mark.parametrize("composition", ["residual", "dense"])
def test_count_params_matches_materialized_parameters(composition):
    rng = np.random.default_rng(3)
    for seed in range(20):
        units = int(rng.integers(1, 6))
        cfg = SkipNetConfig(units=units, input_dim=3, width=5, growth=3, classes=4, composition=composition, seed=seed)
        alphas = rng.integers(0, 2, size=units).tolist()
        alphas[0] = 1
        policy = PruningPolicy(alphas=alphas)
        assert parameter_vector(init_network(cfg), policy).size == count_params(cfg, policy)


def test_counts_are_structural():
    policy = PruningPolicy(alphas=[1, 0, 1])
    a = SkipNetConfig(units=3, seed=1)
    b = SkipNetConfig(units=3, seed=2)
    assert count_params(a, policy) == count_params(b, policy)
    assert count_flops(a, policy) == count_flops(b, policy)


# ============================================================================
# SYNTHETIC DATA
# ============================================================================

def test_balanced_classes():
    batch = gen_synthetic("blobs", 100, 4, seed=0)
    assert np.bincount(batch.targets).tolist() == [0, 25, 25, 25, 25]
    uneven = gen_synthetic("rings", 10, 3, seed=0)
    assert np.bincount(uneven.targets).tolist() == [0, 4, 3, 3]


def test_noise_free_blobs_sit_on_their_centers():
    batch = gen_synthetic("blobs", 60, 3, input_dim=2, noise=0.0, seed=4)
    for label in (1, 2, 3):
        points = batch.inputs[batch.targets == label]
        assert np.all(points == points[0])
    assert len({tuple(batch.inputs[batch.targets == c][0]) for c in (1, 2, 3)}) == 3


def test_rings_have_class_radius():
    batch = gen_synthetic("rings", 300, 3, noise=0.0, seed=1)
    radius = np.linalg.norm(batch.inputs, axis=1)
    np.testing.assert_allclose(radius, batch.targets, atol=1e-12)


def test_gen_synthetic_is_deterministic():
    a = gen_synthetic("rings", 50, 2, seed=9)
    b = gen_synthetic("rings", 50, 2, seed=9)
    np.testing.assert_array_equal(a.inputs, b.inputs)
    np.testing.assert_array_equal(a.targets, b.targets)


def test_gen_synthetic_errors():
    with pytest.raises(BadArity):
        gen_synthetic("blobs", 3, 4)
    with pytest.raises(BadArity):
        gen_synthetic("rings", 10, 2, input_dim=1)


def test_split_batch():
    batch = gen_synthetic("blobs", 40, 2, seed=0)
    train_part, test_part = split_batch(batch, 0.25, seed=3)
    assert (train_part.m, test_part.m) == (30, 10)
    combined = np.sort(np.concatenate([train_part.inputs[:, 0], test_part.inputs[:, 0]]))
    np.testing.assert_array_equal(combined, np.sort(batch.inputs[:, 0]))
