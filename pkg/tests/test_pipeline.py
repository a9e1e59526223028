"""Tests for the design-to-objective evaluation pipeline."""

import numpy as np
import pytest

from splinemotor.geometry import initial_design
from splinemotor.pipeline import (DEFAULT_CURRENT_LEVELS, Evaluation,
                                  MachineModel, ObjectiveWeights,
                                  OperatingGrid)


@pytest.fixture(scope="module")
def model():
    return MachineModel(refine=1)


@pytest.fixture(scope="module")
def evaluation(model):
    return model.evaluate(initial_design())


# ---- grid and weights -------------------------------------------------


def test_default_grid_shape():
    g = OperatingGrid()
    assert g.current_levels == DEFAULT_CURRENT_LEVELS == (0.0, 0.5, 1.0)
    assert len(g.betas) == 10
    assert g.n_points == 30
    assert g.full_load_index == 2


def test_grid_rejects_empty_and_negative():
    with pytest.raises(ValueError, match="empty"):
        OperatingGrid(betas=())
    with pytest.raises(ValueError, match="empty"):
        OperatingGrid(current_levels=())
    with pytest.raises(ValueError, match="non-negative"):
        OperatingGrid(current_levels=(-0.5, 1.0))


def test_grid_without_full_load_level():
    g = OperatingGrid(current_levels=(0.0, 0.5))
    with pytest.raises(ValueError, match="unit current"):
        g.full_load_index


def test_default_weights():
    w = ObjectiveWeights()
    assert (w.mass, w.ripple, w.loss, w.target_torque) == (0.05, 10.0, 4.0, 1.5)


# ---- evaluation on the baseline design --------------------------------


def test_state_layout(evaluation):
    ev = evaluation
    assert ev.torques.shape == (3, 10)
    assert ev.ripples.shape == (3,)
    assert len(ev.states) == 3 and all(len(row) == 10 for row in ev.states)
    for li, scale in enumerate(ev.grid.current_levels):
        for bi, beta in enumerate(ev.grid.betas):
            st = ev.states[li][bi]
            assert st.op.current_scale == scale
            assert st.beta == beta


def test_warm_start_chain_used(evaluation):
    # the first angle of each level is a cold solve, the rest are warm
    iters = [s.newton_iters for s in evaluation.states[2]]
    assert iters[0] >= 5
    assert max(iters[1:]) <= 4


def test_baseline_values_frozen(evaluation):
    ev = evaluation
    assert ev.mean_torque == pytest.approx(4.281948071566708, rel=1e-9)
    assert ev.ripple_sum == pytest.approx(0.23004010311029605, rel=1e-6)
    assert ev.mass_cost == pytest.approx(14.343245063044089, rel=1e-9)
    assert ev.loss_kw == pytest.approx(0.10600668331398594, rel=1e-9)
    assert ev.breakdown["magnet"] == pytest.approx(4.9875, rel=1e-10)


def test_objective_combiner(evaluation):
    ev = evaluation
    expect = (0.05 * ev.mass_cost + 10.0 * ev.ripple_sum + 4.0 * ev.loss_kw)
    assert ev.f_opt == pytest.approx(expect, rel=1e-15)
    assert ev.torque_margin == pytest.approx(ev.mean_torque - 1.5, rel=1e-15)
    comp = ev.components()
    assert set(comp) == {"f_opt", "mass_cost", "ripple_sum", "loss_kw",
                         "mean_torque"}
    assert comp["f_opt"] == ev.f_opt


def test_ripple_is_population_std(evaluation):
    ev = evaluation
    full = ev.torques[2]
    assert ev.ripples[2] == pytest.approx(
        np.sqrt(np.mean((full - np.mean(full)) ** 2)), rel=1e-12)
    # cogging ripple is slot ripple only, far below the load levels
    assert ev.ripples[0] < 0.01 * ev.ripples[2]


def test_mean_torque_is_full_load_mean(evaluation):
    ev = evaluation
    assert ev.mean_torque == pytest.approx(
        float(np.mean(ev.torques[2])), rel=1e-15)


def test_evaluate_accepts_prebuilt(model, evaluation):
    built = model.build(initial_design())
    ev2 = model.evaluate(built)
    assert ev2.built is built
    assert ev2.f_opt == pytest.approx(evaluation.f_opt, rel=1e-12)


# ---- closed-form scaling of L and kR ----------------------------------


@pytest.fixture(scope="module")
def small_model():
    return MachineModel(refine=1, grid=OperatingGrid(
        betas=(0.0, np.deg2rad(6.0)), current_levels=(0.0, 1.0)))


def test_length_and_radius_scaling_exact(small_model):
    base = small_model.evaluate(initial_design())
    ev_l = small_model.evaluate(initial_design().replace(L=0.2))
    ev_k = small_model.evaluate(initial_design().replace(kR=2.0))
    # reference-excitation solves make the power laws exact, not approximate
    for ev, factor in ((ev_l, 2.0), (ev_k, 4.0)):
        assert np.allclose(ev.torques, factor * base.torques, rtol=1e-12)
        assert ev.mass_cost == pytest.approx(factor * base.mass_cost, rel=1e-12)
        assert ev.loss_kw == pytest.approx(factor * base.loss_kw, rel=1e-12)
        assert ev.f_opt == pytest.approx(factor * base.f_opt, rel=1e-12)
    # identical discrete fields: kR never reaches the Newton loop
    assert np.array_equal(ev_k.states[1][0].u, base.states[1][0].u)


def test_thread_pool_matches_serial(small_model):
    serial = small_model.evaluate(initial_design())
    threaded = MachineModel(
        refine=1, grid=small_model.grid, n_threads=2).evaluate(initial_design())
    assert np.array_equal(serial.torques, threaded.torques)
